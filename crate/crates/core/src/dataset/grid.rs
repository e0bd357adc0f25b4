use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simp::OptimizationParams;

/// Inclusive arithmetic range `start, start + step, ..., end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl Axis {
    pub const fn new(start: f64, end: f64, step: f64) -> Self {
        Self { start, end, step }
    }

    pub const fn point(value: f64) -> Self {
        Self {
            start: value,
            end: value,
            step: 1.0,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.start.is_finite() && self.end.is_finite()) {
            return Err(Error::Parameter(format!("{name} axis has non-finite bounds")));
        }
        if !(self.step > 0.0) {
            return Err(Error::Parameter(format!(
                "{name} axis step must be > 0, got {}",
                self.step
            )));
        }
        if self.start > self.end {
            return Err(Error::Parameter(format!(
                "{name} axis start {} exceeds end {}",
                self.start, self.end
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.end - self.start) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Values generated by integer index, snapped to 1e-10 to avoid drift.
    pub fn values(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| ((self.start + i as f64 * self.step) * 1e10).round() / 1e10)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub volfrac: Axis,
    pub penal: Axis,
    pub rmin: Axis,
    pub nelx: usize,
    pub nely: usize,
}

impl Default for GridSpec {
    /// Full grid: 9 volume fractions x 21 penalties x 16 filter radii at 120x120.
    fn default() -> Self {
        Self {
            volfrac: Axis::new(0.30, 0.70, 0.05),
            penal: Axis::new(2.0, 4.0, 0.1),
            rmin: Axis::new(1.5, 3.0, 0.1),
            nelx: 120,
            nely: 120,
        }
    }
}

impl GridSpec {
    /// Reduced 9 x 5 x 4 grid at 48x48.
    pub fn desk() -> Self {
        Self {
            volfrac: Axis::new(0.30, 0.70, 0.05),
            penal: Axis::new(2.0, 4.0, 0.5),
            rmin: Axis::new(1.5, 3.0, 0.5),
            nelx: 48,
            nely: 48,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.volfrac.validate("volfrac")?;
        self.penal.validate("penal")?;
        self.rmin.validate("rmin")?;
        if self.nelx == 0 || self.nely == 0 {
            return Err(Error::Parameter(format!(
                "resolution must be positive, got {}x{}",
                self.nelx, self.nely
            )));
        }
        Ok(())
    }

    pub fn cardinality(&self) -> usize {
        self.volfrac.len() * self.penal.len() * self.rmin.len()
    }
}

/// Every grid point in lexicographic `(volfrac, penal, rmin)` order.
pub fn enumerate_grid(spec: &GridSpec) -> Result<Vec<OptimizationParams>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.cardinality());
    for v in spec.volfrac.values() {
        for p in spec.penal.values() {
            for r in spec.rmin.values() {
                out.push(OptimizationParams::new(v, p, r));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_grid_has_3024_points() {
        let grid = enumerate_grid(&GridSpec::default()).unwrap();
        assert_eq!(grid.len(), 3024);
        let vols = GridSpec::default().volfrac.values();
        assert_eq!(vols.len(), 9);
        assert_eq!(vols[0], 0.30);
        assert_eq!(vols[8], 0.70);
        assert_eq!(GridSpec::default().penal.values().last(), Some(&4.0));
        assert_eq!(GridSpec::default().rmin.values().last(), Some(&3.0));
        assert_eq!((grid[0].volfrac, grid[0].penal, grid[0].rmin), (0.3, 2.0, 1.5));
        assert_eq!((grid[1].volfrac, grid[1].penal, grid[1].rmin), (0.3, 2.0, 1.6));
        let last = grid.last().unwrap();
        assert_eq!((last.volfrac, last.penal, last.rmin), (0.7, 4.0, 3.0));
    }

    #[test]
    fn desk_grid_has_180_points() {
        assert_eq!(enumerate_grid(&GridSpec::desk()).unwrap().len(), 180);
    }

    #[test]
    fn singleton_grid() {
        let spec = GridSpec {
            volfrac: Axis::point(0.42),
            penal: Axis::point(3.0),
            rmin: Axis::point(1.5),
            nelx: 10,
            nely: 10,
        };
        let grid = enumerate_grid(&spec).unwrap();
        assert_eq!(grid.len(), 1);
        assert_eq!((grid[0].volfrac, grid[0].penal, grid[0].rmin), (0.42, 3.0, 1.5));
    }

    #[test]
    fn degenerate_range_is_rejected() {
        let mut spec = GridSpec::desk();
        spec.penal = Axis::new(4.0, 2.0, 0.5);
        assert!(matches!(enumerate_grid(&spec), Err(Error::Parameter(_))));
        spec.penal = Axis::new(2.0, 4.0, 0.0);
        assert!(enumerate_grid(&spec).is_err());
    }

    proptest! {
        #[test]
        fn cardinality_matches_counting_loop(
            v0 in 0.0f64..1.0, vn in 0usize..6, vs in 0.01f64..0.3,
            p0 in 1.0f64..3.0, pn in 0usize..6, ps in 0.05f64..0.5,
            r0 in 1.0f64..2.0, rn in 0usize..6, rs in 0.1f64..0.7,
        ) {
            let spec = GridSpec {
                volfrac: Axis::new(v0, v0 + vn as f64 * vs, vs),
                penal: Axis::new(p0, p0 + pn as f64 * ps, ps),
                rmin: Axis::new(r0, r0 + rn as f64 * rs, rs),
                nelx: 4,
                nely: 4,
            };
            let count = |a: &Axis| {
                let mut n = 0;
                let mut v = a.start;
                while v <= a.end + a.step * 1e-6 {
                    n += 1;
                    v = a.start + n as f64 * a.step;
                }
                n
            };
            let expected = count(&spec.volfrac) * count(&spec.penal) * count(&spec.rmin);
            prop_assert_eq!(enumerate_grid(&spec).unwrap().len(), expected);
            prop_assert_eq!(expected, (vn + 1) * (pn + 1) * (rn + 1));
        }
    }
}
