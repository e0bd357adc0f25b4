use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular grid of element densities, row-major with row 0 at the top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    nelx: usize,
    nely: usize,
    values: Vec<f64>,
}

impl DensityField {
    pub fn new(nelx: usize, nely: usize, values: Vec<f64>) -> Result<Self> {
        if nelx == 0 || nely == 0 {
            return Err(Error::Shape(format!("empty grid {nelx}x{nely}")));
        }
        if values.len() != nelx * nely {
            return Err(Error::Shape(format!(
                "{} values for a {nelx}x{nely} grid",
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::Parameter(format!(
                "density {v} at index {i} outside [0, 1]"
            )));
        }
        Ok(Self { nelx, nely, values })
    }

    pub fn uniform(nelx: usize, nely: usize, value: f64) -> Result<Self> {
        Self::new(nelx, nely, vec![value; nelx * nely])
    }

    /// Builds a field from `f32` values, clamping them into [0, 1].
    pub fn from_f32_clamped(nelx: usize, nely: usize, values: &[f32]) -> Result<Self> {
        let values = values
            .iter()
            .map(|&v| if v.is_nan() { 0.0 } else { f64::from(v).clamp(0.0, 1.0) })
            .collect();
        Self::new(nelx, nely, values)
    }

    pub fn nelx(&self) -> usize {
        self.nelx
    }

    pub fn nely(&self) -> usize {
        self.nely
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn index(&self, ex: usize, ey: usize) -> usize {
        ey * self.nelx + ex
    }

    pub fn get(&self, ex: usize, ey: usize) -> f64 {
        self.values[self.index(ex, ey)]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn same_shape(&self, other: &DensityField) -> bool {
        self.nelx == other.nelx && self.nely == other.nely
    }

    /// Applies `f` elementwise; the result must stay inside [0, 1].
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.nelx, self.nely, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(matches!(DensityField::new(2, 2, vec![0.5; 3]), Err(Error::Shape(_))));
        assert!(matches!(DensityField::new(0, 2, vec![]), Err(Error::Shape(_))));
        assert!(matches!(
            DensityField::new(1, 1, vec![1.5]),
            Err(Error::Parameter(_))
        ));
        assert!(DensityField::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn row_major_indexing() {
        let f = DensityField::new(3, 2, vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        assert_eq!(f.get(2, 0), 0.2);
        assert_eq!(f.get(0, 1), 0.3);
        assert!((f.mean() - 0.25).abs() < 1e-15);
    }
}
