//! SIMP compliance minimization: finite element solve, sensitivity,
//! sensitivity filter and optimality-criteria update, repeated until the
//! largest density change drops below `change_tol`.

mod filter;
mod oc;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use filter::sensitivity_filter;
pub use oc::{oc_update, VOLUME_TOL};

use crate::error::{Error, Result};
use crate::fem::{assemble_solve_with, compliance_sensitivity, LoadCase, MeshSpec, Solver};
use crate::field::DensityField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizationParams {
    pub volfrac: f64,
    pub penal: f64,
    pub rmin: f64,
    pub move_limit: f64,
    pub change_tol: f64,
    pub max_iters: usize,
}

impl OptimizationParams {
    pub fn new(volfrac: f64, penal: f64, rmin: f64) -> Self {
        Self {
            volfrac,
            penal,
            rmin,
            move_limit: 0.2,
            change_tol: 0.01,
            max_iters: 200,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Parameter(what.to_string()));
        if !(self.volfrac > 0.0 && self.volfrac < 1.0) {
            return bad(&format!("volfrac must lie in (0, 1), got {}", self.volfrac));
        }
        if !(self.penal >= 1.0) || !self.penal.is_finite() {
            return bad(&format!("penal must be >= 1, got {}", self.penal));
        }
        if !(self.rmin > 0.0) || !self.rmin.is_finite() {
            return bad(&format!("rmin must be > 0, got {}", self.rmin));
        }
        if !(self.move_limit > 0.0 && self.move_limit <= 1.0) {
            return bad(&format!("move_limit must lie in (0, 1], got {}", self.move_limit));
        }
        if !(self.change_tol > 0.0) {
            return bad(&format!("change_tol must be > 0, got {}", self.change_tol));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Compliance of the field entering this iteration.
    pub compliance: f64,
    /// Largest elementwise density change made by this iteration's update.
    pub change: f64,
    /// Mean density after the update.
    pub mean_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub iterations: Vec<IterationRecord>,
    pub wall_seconds: f64,
    pub converged: bool,
    pub initial_compliance: f64,
    /// Compliance of the returned field.
    pub final_compliance: f64,
}

impl OptimizationTrace {
    pub fn iteration_count(&self) -> usize {
        self.iterations.len()
    }
}

pub fn optimize(
    mesh: &MeshSpec,
    load: &LoadCase,
    params: &OptimizationParams,
) -> Result<(DensityField, OptimizationTrace)> {
    optimize_with(mesh, load, params, Solver::default(), |_, _| {})
}

/// Runs the SIMP loop from a uniform field, calling `progress(iteration, record)`
/// after every update.
pub fn optimize_with(
    mesh: &MeshSpec,
    load: &LoadCase,
    params: &OptimizationParams,
    solver: Solver,
    mut progress: impl FnMut(usize, &IterationRecord),
) -> Result<(DensityField, OptimizationTrace)> {
    params.validate()?;
    mesh.validate()?;
    load.validate(mesh)?;
    let start = Instant::now();

    let mut x = DensityField::uniform(mesh.nelx, mesh.nely, params.volfrac)?;
    let mut iterations = Vec::new();
    let mut converged = false;
    let mut initial_compliance = f64::NAN;

    for it in 0..params.max_iters {
        let solved = assemble_solve_with(mesh, &x, params.penal, load, solver)?;
        if it == 0 {
            initial_compliance = solved.compliance;
        }
        let dc = compliance_sensitivity(&x, &solved, params.penal)?;
        let dc = sensitivity_filter(&x, &dc, params.rmin)?;
        let next = oc_update(&x, &dc, params)?;
        let change = x
            .values()
            .iter()
            .zip(next.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let record = IterationRecord {
            compliance: solved.compliance,
            change,
            mean_density: next.mean(),
        };
        debug_assert!((record.mean_density - params.volfrac).abs() <= VOLUME_TOL);
        progress(it + 1, &record);
        iterations.push(record);
        x = next;
        if change < params.change_tol {
            converged = true;
            break;
        }
    }

    let final_compliance = assemble_solve_with(mesh, &x, params.penal, load, solver)?.compliance;
    let trace = OptimizationTrace {
        iterations,
        wall_seconds: start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE),
        converged,
        initial_compliance,
        final_compliance,
    };
    Ok((x, trace))
}
