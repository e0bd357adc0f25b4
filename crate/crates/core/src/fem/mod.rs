//! Plane-stress finite element analysis on a regular grid of unit
//! bilinear quadrilaterals.
//!
//! Nodes are numbered column by column (y fastest, top to bottom), two dofs
//! per node `(ux, uy)`. Element `(ex, ey)` maps to density index
//! `ey * nelx + ex` of a [`DensityField`].

mod element;
mod solver;

use serde::{Deserialize, Serialize};

pub use element::{element_stiffness, ElementMatrix};
pub use solver::Solver;

use crate::error::{Error, Result};
use crate::field::DensityField;
use element::quadratic_form;

/// Density floor that keeps the stiffness matrix nonsingular.
pub const X_MIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub nelx: usize,
    pub nely: usize,
    pub young: f64,
    pub poisson: f64,
}

impl MeshSpec {
    pub fn new(nelx: usize, nely: usize) -> Self {
        Self {
            nelx,
            nely,
            young: 1.0,
            poisson: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nelx == 0 || self.nely == 0 {
            return Err(Error::Parameter(format!(
                "mesh needs at least one element, got {}x{}",
                self.nelx, self.nely
            )));
        }
        element_stiffness(self.young, self.poisson).map(|_| ())
    }

    pub fn element_count(&self) -> usize {
        self.nelx * self.nely
    }

    pub fn node_count(&self) -> usize {
        (self.nelx + 1) * (self.nely + 1)
    }

    pub fn dof_count(&self) -> usize {
        2 * self.node_count()
    }

    /// Node at grid corner `(ix, iy)`, `iy` counted downward from the top.
    pub fn node(&self, ix: usize, iy: usize) -> usize {
        (self.nely + 1) * ix + iy
    }

    /// Global dofs of element `(ex, ey)` in element-matrix order.
    pub fn element_dofs(&self, ex: usize, ey: usize) -> [usize; 8] {
        let n1 = self.node(ex, ey);
        let n2 = self.node(ex + 1, ey);
        [
            2 * n1,
            2 * n1 + 1,
            2 * n2,
            2 * n2 + 1,
            2 * n2 + 2,
            2 * n2 + 3,
            2 * n1 + 2,
            2 * n1 + 3,
        ]
    }

    fn check_field(&self, x: &DensityField) -> Result<()> {
        if x.nelx() != self.nelx || x.nely() != self.nely {
            return Err(Error::Shape(format!(
                "density field is {}x{} but mesh is {}x{}",
                x.nelx(),
                x.nely(),
                self.nelx,
                self.nely
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadCase {
    pub fixed_dofs: Vec<usize>,
    pub loads: Vec<(usize, f64)>,
}

impl LoadCase {
    /// Left edge clamped, unit downward point load at the middle node of
    /// the right edge.
    pub fn cantilever(mesh: &MeshSpec) -> Self {
        let fixed_dofs = (0..2 * (mesh.nely + 1)).collect();
        let tip = mesh.node(mesh.nelx, mesh.nely / 2);
        Self {
            fixed_dofs,
            loads: vec![(2 * tip + 1, -1.0)],
        }
    }

    pub fn validate(&self, mesh: &MeshSpec) -> Result<()> {
        let ndof = mesh.dof_count();
        if self.fixed_dofs.is_empty() {
            return Err(Error::Parameter(
                "load case has no fixed dofs (rigid-body motion unconstrained)".into(),
            ));
        }
        if let Some(d) = self.fixed_dofs.iter().find(|&&d| d >= ndof) {
            return Err(Error::Parameter(format!("fixed dof {d} out of range (ndof {ndof})")));
        }
        for &(dof, value) in &self.loads {
            if dof >= ndof {
                return Err(Error::Parameter(format!("load dof {dof} out of range (ndof {ndof})")));
            }
            if !value.is_finite() {
                return Err(Error::Parameter(format!("non-finite load on dof {dof}")));
            }
            if self.fixed_dofs.contains(&dof) {
                return Err(Error::Parameter(format!("load applied to fixed dof {dof}")));
            }
        }
        Ok(())
    }

    pub fn force_vector(&self, ndof: usize) -> Vec<f64> {
        let mut f = vec![0.0; ndof];
        for &(dof, value) in &self.loads {
            f[dof] += value;
        }
        f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub displacements: Vec<f64>,
    pub compliance: f64,
    /// `uₑᵀ k₀ uₑ` per element, indexed like the density field.
    pub element_energies: Vec<f64>,
    /// `‖K U − F‖ / ‖F‖` (0 for a zero load).
    pub relative_residual: f64,
}

/// Stiffness system restricted to the free dofs.
pub(crate) struct System<'a> {
    pub mesh: &'a MeshSpec,
    pub ke: ElementMatrix,
    /// Element stiffness multipliers `x^p`, in density-field order.
    pub scales: Vec<f64>,
    /// Free index of each global dof, `usize::MAX` when fixed.
    pub free_index: Vec<usize>,
    pub free_dofs: Vec<usize>,
}

impl<'a> System<'a> {
    fn new(mesh: &'a MeshSpec, x: &DensityField, penal: f64, load: &LoadCase) -> Result<Self> {
        let ke = element_stiffness(mesh.young, mesh.poisson)?;
        let scales: Vec<f64> = x.values().iter().map(|&v| v.powf(penal)).collect();
        let mut free_index = vec![0usize; mesh.dof_count()];
        for &d in &load.fixed_dofs {
            free_index[d] = usize::MAX;
        }
        let mut free_dofs = Vec::with_capacity(free_index.len());
        for (dof, slot) in free_index.iter_mut().enumerate() {
            if *slot != usize::MAX {
                *slot = free_dofs.len();
                free_dofs.push(dof);
            }
        }
        Ok(Self {
            mesh,
            ke,
            scales,
            free_index,
            free_dofs,
        })
    }

    pub fn n(&self) -> usize {
        self.free_dofs.len()
    }

    /// Visits every element as `(field index, free indices of its dofs)`.
    pub fn for_each_element(&self, mut f: impl FnMut(usize, &[usize; 8])) {
        let mesh = self.mesh;
        for ex in 0..mesh.nelx {
            for ey in 0..mesh.nely {
                let dofs = mesh.element_dofs(ex, ey);
                let free = dofs.map(|d| self.free_index[d]);
                f(ey * mesh.nelx + ex, &free);
            }
        }
    }

    /// `y = K u` over free dofs.
    pub fn apply(&self, u: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        self.for_each_element(|e, free| {
            let s = self.scales[e];
            if s == 0.0 {
                return;
            }
            let mut ue = [0.0; 8];
            for (slot, &fi) in ue.iter_mut().zip(free.iter()) {
                if fi != usize::MAX {
                    *slot = u[fi];
                }
            }
            for (row, &fi) in self.ke.iter().zip(free.iter()) {
                if fi == usize::MAX {
                    continue;
                }
                let mut acc = 0.0;
                for (&k, &uj) in row.iter().zip(ue.iter()) {
                    acc += k * uj;
                }
                y[fi] += s * acc;
            }
        });
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n()];
        self.for_each_element(|e, free| {
            for (i, &fi) in free.iter().enumerate() {
                if fi != usize::MAX {
                    d[fi] += self.scales[e] * self.ke[i][i];
                }
            }
        });
        d
    }
}

pub fn assemble_solve(
    mesh: &MeshSpec,
    x: &DensityField,
    penal: f64,
    load: &LoadCase,
) -> Result<SolveResult> {
    assemble_solve_with(mesh, x, penal, load, Solver::default())
}

/// Solves `K(x) U = F` with element stiffness scaled by `x_e^penal`.
pub fn assemble_solve_with(
    mesh: &MeshSpec,
    x: &DensityField,
    penal: f64,
    load: &LoadCase,
    solver: Solver,
) -> Result<SolveResult> {
    mesh.validate()?;
    mesh.check_field(x)?;
    load.validate(mesh)?;
    if !(penal >= 1.0) || !penal.is_finite() {
        return Err(Error::Parameter(format!("penal must be >= 1, got {penal}")));
    }

    let system = System::new(mesh, x, penal, load)?;
    if system.scales.iter().all(|&s| s <= f64::MIN_POSITIVE) {
        return Err(Error::Singular(
            "all element densities are numerically zero".into(),
        ));
    }
    let force = load.force_vector(mesh.dof_count());
    let rhs: Vec<f64> = system.free_dofs.iter().map(|&d| force[d]).collect();
    let norm_f = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();

    let u_free = if norm_f == 0.0 {
        vec![0.0; system.n()]
    } else {
        solver.solve(&system, &rhs)?
    };

    let relative_residual = if norm_f == 0.0 {
        0.0
    } else {
        let mut ku = vec![0.0; system.n()];
        system.apply(&u_free, &mut ku);
        let r = ku
            .iter()
            .zip(rhs.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        r / norm_f
    };
    if !relative_residual.is_finite() || relative_residual > 1e-8 {
        return Err(Error::Numeric(format!(
            "linear solve residual {relative_residual:.3e} exceeds 1e-8"
        )));
    }

    let mut displacements = vec![0.0; mesh.dof_count()];
    for (&dof, &u) in system.free_dofs.iter().zip(u_free.iter()) {
        displacements[dof] = u;
    }
    let compliance = load
        .loads
        .iter()
        .map(|&(dof, f)| f * displacements[dof])
        .sum::<f64>();

    let mut element_energies = vec![0.0; mesh.element_count()];
    for ex in 0..mesh.nelx {
        for ey in 0..mesh.nely {
            let ue = mesh.element_dofs(ex, ey).map(|d| displacements[d]);
            element_energies[ey * mesh.nelx + ex] = quadratic_form(&system.ke, &ue);
        }
    }

    Ok(SolveResult {
        displacements,
        compliance,
        element_energies,
        relative_residual,
    })
}

/// Analytic compliance derivative `−p x_e^(p−1) uₑᵀ k₀ uₑ`.
pub fn compliance_sensitivity(
    x: &DensityField,
    result: &SolveResult,
    penal: f64,
) -> Result<Vec<f64>> {
    if result.element_energies.len() != x.len() {
        return Err(Error::Shape(format!(
            "solve result has {} elements but field has {}",
            result.element_energies.len(),
            x.len()
        )));
    }
    Ok(x
        .values()
        .iter()
        .zip(result.element_energies.iter())
        .map(|(&xe, &energy)| -penal * xe.powf(penal - 1.0) * energy.max(0.0))
        .collect())
}
