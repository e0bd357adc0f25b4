use super::OptimizationParams;
use crate::error::{Error, Result};
use crate::fem::X_MIN;
use crate::field::DensityField;

const LAMBDA_LO: f64 = 1e-9;
const LAMBDA_HI: f64 = 1e9;
/// Bisection target; tighter than the 1e-4 volume guarantee.
const VOLUME_TARGET: f64 = 1e-5;
pub const VOLUME_TOL: f64 = 1e-4;

fn candidate(x: &[f64], dc: &[f64], lambda: f64, move_limit: f64, out: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for ((o, &xe), &d) in out.iter_mut().zip(x).zip(dc) {
        let lo = (xe - move_limit).max(X_MIN);
        let hi = (xe + move_limit).min(1.0);
        let v = (xe * (-d / lambda).sqrt()).clamp(lo, hi);
        *o = v;
        total += v;
    }
    total / x.len() as f64
}

/// Optimality-criteria update with a bisected Lagrange multiplier.
pub fn oc_update(
    x: &DensityField,
    dc: &[f64],
    params: &OptimizationParams,
) -> Result<DensityField> {
    if dc.len() != x.len() {
        return Err(Error::Shape(format!(
            "sensitivity has {} entries, field has {}",
            dc.len(),
            x.len()
        )));
    }
    if let Some(d) = dc.iter().find(|d| !(**d <= 0.0)) {
        return Err(Error::Parameter(format!(
            "optimality criteria need non-positive sensitivities, got {d}"
        )));
    }
    let xs = x.values();
    let target = params.volfrac;
    let mut next = vec![0.0; xs.len()];

    let v_lo = candidate(xs, dc, LAMBDA_LO, params.move_limit, &mut next);
    let v_hi = candidate(xs, dc, LAMBDA_HI, params.move_limit, &mut next);
    if !(v_lo + VOLUME_TOL >= target && v_hi - VOLUME_TOL <= target) {
        return Err(Error::Numeric(format!(
            "volume {target} not bracketed: lambda {LAMBDA_LO:e} gives {v_lo}, \
             lambda {LAMBDA_HI:e} gives {v_hi}"
        )));
    }

    let (mut l1, mut l2) = (LAMBDA_LO, LAMBDA_HI);
    let mut volume = f64::NAN;
    for _ in 0..200 {
        let mid = (l1 * l2).sqrt();
        volume = candidate(xs, dc, mid, params.move_limit, &mut next);
        if (volume - target).abs() <= VOLUME_TARGET || (l2 - l1) / (l1 + l2) < 1e-14 {
            break;
        }
        if volume > target {
            l1 = mid;
        } else {
            l2 = mid;
        }
    }
    if !((volume - target).abs() <= VOLUME_TOL) {
        return Err(Error::Numeric(format!(
            "bisection ended at volume {volume}, target {target} (bracket [{l1:e}, {l2:e}])"
        )));
    }
    DensityField::new(x.nelx(), x.nely(), next)
}
