use crate::error::{Error, Result};
use crate::field::DensityField;

/// Mesh-independency filter on compliance sensitivities:
/// `dĉ_e = Σ w_i x_i dc_i / (x_e Σ w_i)` with `w_i = max(0, rmin − dist(e, i))`.
pub fn sensitivity_filter(x: &DensityField, dc: &[f64], rmin: f64) -> Result<Vec<f64>> {
    if dc.len() != x.len() {
        return Err(Error::Shape(format!(
            "sensitivity has {} entries, field has {}",
            dc.len(),
            x.len()
        )));
    }
    if !(rmin > 0.0) || !rmin.is_finite() {
        return Err(Error::Parameter(format!("rmin must be > 0, got {rmin}")));
    }
    if rmin <= 1.0 {
        return Ok(dc.to_vec());
    }

    let reach = rmin.floor() as isize;
    let mut stencil = Vec::new();
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            let w = rmin - ((dx * dx + dy * dy) as f64).sqrt();
            if w > 0.0 {
                stencil.push((dx, dy, w));
            }
        }
    }

    let (nelx, nely) = (x.nelx() as isize, x.nely() as isize);
    let xs = x.values();
    let mut out = vec![0.0; dc.len()];
    for ey in 0..nely {
        for ex in 0..nelx {
            let mut weighted = 0.0;
            let mut total = 0.0;
            for &(dx, dy, w) in &stencil {
                let (i, j) = (ex + dx, ey + dy);
                if i < 0 || j < 0 || i >= nelx || j >= nely {
                    continue;
                }
                let k = (j * nelx + i) as usize;
                weighted += w * xs[k] * dc[k];
                total += w;
            }
            let e = (ey * nelx + ex) as usize;
            out[e] = weighted / (xs[e] * total);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct double loop over every element pair.
    fn brute_force(x: &DensityField, dc: &[f64], rmin: f64) -> Vec<f64> {
        let n = x.len();
        let mut out = vec![0.0; n];
        for e in 0..n {
            let (ex, ey) = ((e % x.nelx()) as f64, (e / x.nelx()) as f64);
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..n {
                let (ix, iy) = ((i % x.nelx()) as f64, (i / x.nelx()) as f64);
                let w = (rmin - ((ex - ix).powi(2) + (ey - iy).powi(2)).sqrt()).max(0.0);
                num += w * x.values()[i] * dc[i];
                den += w;
            }
            out[e] = num / (x.values()[e] * den);
        }
        out
    }

    #[test]
    fn strip_hand_values() {
        let x = DensityField::uniform(3, 1, 1.0).unwrap();
        let dc = [-1.0, -2.0, -3.0];
        let out = sensitivity_filter(&x, &dc, 1.5).unwrap();
        let expected = [-1.25, -2.0, -2.75];
        let oracle = brute_force(&x, &dc, 1.5);
        for i in 0..3 {
            assert!((out[i] - expected[i]).abs() < 1e-12);
            assert!((oracle[i] - expected[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn small_radius_is_identity() {
        let x = DensityField::new(2, 2, vec![0.3, 0.9, 0.5, 0.7]).unwrap();
        let dc = [-0.3, -1.7, -2.2, -0.01];
        for rmin in [0.5, 1.0] {
            assert_eq!(sensitivity_filter(&x, &dc, rmin).unwrap(), dc.to_vec());
        }
    }

    #[test]
    fn constant_input_is_preserved() {
        let x = DensityField::uniform(7, 5, 0.4).unwrap();
        let dc = vec![-3.0; 35];
        for v in sensitivity_filter(&x, &dc, 2.7).unwrap() {
            assert!((v + 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_brute_force_on_irregular_input() {
        let values: Vec<f64> = (0..48).map(|i| 0.1 + 0.9 * ((i * 37 % 48) as f64) / 48.0).collect();
        let x = DensityField::new(8, 6, values).unwrap();
        let dc: Vec<f64> = (0..48).map(|i| -((i * 13 % 17) as f64) - 0.5).collect();
        let out = sensitivity_filter(&x, &dc, 2.3).unwrap();
        let oracle = brute_force(&x, &dc, 2.3);
        for (a, b) in out.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
            assert!(*a <= 0.0);
        }
    }

    #[test]
    fn shape_mismatch() {
        let x = DensityField::uniform(2, 2, 0.5).unwrap();
        assert!(matches!(sensitivity_filter(&x, &[-1.0; 3], 1.5), Err(Error::Shape(_))));
    }
}
