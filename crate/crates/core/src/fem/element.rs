use crate::error::{Error, Result};

pub type ElementMatrix = [[f64; 8]; 8];

/// Stiffness of a unit-square bilinear quadrilateral in plane stress.
///
/// Dofs are ordered `(ux, uy)` per node, nodes counter-clockwise from the
/// lower-left corner. Closed form of the exactly integrated element.
pub fn element_stiffness(young: f64, poisson: f64) -> Result<ElementMatrix> {
    if !(young > 0.0) || !young.is_finite() {
        return Err(Error::Parameter(format!("young modulus must be > 0, got {young}")));
    }
    if !(0.0..0.5).contains(&poisson) {
        return Err(Error::Parameter(format!(
            "poisson ratio must lie in [0, 0.5), got {poisson}"
        )));
    }
    let nu = poisson;
    let k = [
        0.5 - nu / 6.0,
        0.125 + nu / 8.0,
        -0.25 - nu / 12.0,
        -0.125 + 3.0 * nu / 8.0,
        -0.25 + nu / 12.0,
        -0.125 - nu / 8.0,
        nu / 6.0,
        0.125 - 3.0 * nu / 8.0,
    ];
    const PATTERN: [[usize; 8]; 8] = [
        [0, 1, 2, 3, 4, 5, 6, 7],
        [1, 0, 7, 6, 5, 4, 3, 2],
        [2, 7, 0, 5, 6, 3, 4, 1],
        [3, 6, 5, 0, 7, 2, 1, 4],
        [4, 5, 6, 7, 0, 1, 2, 3],
        [5, 4, 3, 2, 1, 0, 7, 6],
        [6, 3, 4, 1, 2, 7, 0, 5],
        [7, 2, 1, 4, 3, 6, 5, 0],
    ];
    let scale = young / (1.0 - nu * nu);
    let mut ke = [[0.0; 8]; 8];
    for (row, pattern) in ke.iter_mut().zip(PATTERN.iter()) {
        for (entry, &p) in row.iter_mut().zip(pattern.iter()) {
            *entry = scale * k[p];
        }
    }
    Ok(ke)
}

/// `uᵀ k u` for one element.
pub(crate) fn quadratic_form(ke: &ElementMatrix, u: &[f64; 8]) -> f64 {
    let mut acc = 0.0;
    for (row, &ui) in ke.iter().zip(u.iter()) {
        let mut r = 0.0;
        for (&kij, &uj) in row.iter().zip(u.iter()) {
            r += kij * uj;
        }
        acc += ui * r;
    }
    acc
}
