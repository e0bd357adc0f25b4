//! Cleanup of raw generator output: hard threshold, then Gaussian smoothing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::DensityField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostprocessConfig {
    pub threshold: f64,
    pub kernel_size: usize,
    pub sigma: f64,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            kernel_size: 5,
            sigma: 1.0,
        }
    }
}

impl PostprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Parameter(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::Parameter(format!("kernel size {} must be odd", self.kernel_size)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Parameter(format!("sigma {} must be positive", self.sigma)));
        }
        Ok(())
    }
}

/// `v > t` becomes 1, everything else (including `v == t`) 0.
pub fn threshold(field: &DensityField, t: f64) -> DensityField {
    field.map(|v| if v > t { 1.0 } else { 0.0 }).expect("binary values are valid")
}

/// Normalised 1D Gaussian weights of odd length `size`.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

/// Mirror index without repeating the edge sample (`dcb|abcd|cba`).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize { m as usize } else { (period - m) as usize }
}

/// Separable Gaussian blur with reflect padding.
pub fn gaussian_smooth(field: &DensityField, kernel_size: usize, sigma: f64) -> Result<DensityField> {
    if kernel_size % 2 == 0 {
        return Err(Error::Parameter(format!("kernel size {kernel_size} must be odd")));
    }
    let k = gaussian_kernel(kernel_size, sigma);
    let half = (kernel_size / 2) as isize;
    let (nx, ny) = (field.nelx(), field.nely());
    let src = field.values();
    let mut rows = vec![0.0; src.len()];
    for y in 0..ny {
        for x in 0..nx {
            rows[y * nx + x] = k
                .iter()
                .enumerate()
                .map(|(j, w)| w * src[y * nx + reflect(x as isize + j as isize - half, nx)])
                .sum();
        }
    }
    let (lo, hi) = (field.min(), field.max());
    let mut out = vec![0.0; src.len()];
    for y in 0..ny {
        for x in 0..nx {
            let v: f64 = k
                .iter()
                .enumerate()
                .map(|(j, w)| w * rows[reflect(y as isize + j as isize - half, ny) * nx + x])
                .sum();
            // rounding can leave a convex combination a hair outside its inputs
            out[y * nx + x] = v.clamp(lo, hi);
        }
    }
    DensityField::new(nx, ny, out)
}

/// Threshold followed by smoothing.
pub fn postprocess(field: &DensityField, cfg: &PostprocessConfig) -> Result<DensityField> {
    cfg.validate()?;
    gaussian_smooth(&threshold(field, cfg.threshold), cfg.kernel_size, cfg.sigma)
}

pub fn measured_volfrac(field: &DensityField) -> f64 {
    field.mean()
}
