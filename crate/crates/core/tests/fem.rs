mod common;

use common::{dense_oracle, random_field, rel_diff};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topoforge::fem::{
    assemble_solve, assemble_solve_with, compliance_sensitivity, LoadCase,
    MeshSpec, Solver,
};
use topoforge::DensityField;

#[test]
fn tiny_mesh_matches_dense_oracle() {
    let mesh = MeshSpec::new(2, 1);
    let x = DensityField::uniform(2, 1, 1.0).unwrap();
    let lc = LoadCase::cantilever(&mesh);
    let r = assemble_solve(&mesh, &x, 3.0, &lc).unwrap();
    let oracle = dense_oracle(&mesh, &x, 3.0, &lc);
    assert!(rel_diff(&r.displacements, &oracle) < 1e-9);
}

#[test]
fn every_solver_matches_dense_oracle_on_random_fields() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (nelx, nely) in [(3, 2), (8, 5), (16, 16)] {
        let mesh = MeshSpec::new(nelx, nely);
        let lc = LoadCase::cantilever(&mesh);
        let x = random_field(nelx, nely, &mut rng);
        let oracle = dense_oracle(&mesh, &x, 3.0, &lc);
        for solver in [Solver::BandedCholesky, Solver::Dense, Solver::pcg()] {
            let r = assemble_solve_with(&mesh, &x, 3.0, &lc, solver).unwrap();
            let err = rel_diff(&r.displacements, &oracle);
            assert!(err < 1e-9, "{nelx}x{nely} {solver:?}: {err:e}");
        }
    }
}

#[test]
fn compliance_identity_and_fixed_dofs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mesh = MeshSpec::new(12, 6);
    let lc = LoadCase::cantilever(&mesh);
    let x = random_field(12, 6, &mut rng);
    let r = assemble_solve(&mesh, &x, 3.0, &lc).unwrap();
    let f = lc.force_vector(mesh.dof_count());
    let fu: f64 = f.iter().zip(&r.displacements).map(|(a, b)| a * b).sum();
    assert!((r.compliance - fu).abs() <= 1e-10 * r.compliance.max(1.0));
    assert!(r.compliance > 0.0);
    for &d in &lc.fixed_dofs {
        assert_eq!(r.displacements[d], 0.0);
    }
    assert!(r.relative_residual <= 1e-8);
    // strain energy form: c = sum x^p u k0 u
    let energy: f64 = x
        .values()
        .iter()
        .zip(&r.element_energies)
        .map(|(xe, e)| xe.powi(3) * e)
        .sum();
    assert!((energy - r.compliance).abs() / r.compliance < 1e-9);
}

#[test]
fn deterministic_solves() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mesh = MeshSpec::new(20, 10);
    let lc = LoadCase::cantilever(&mesh);
    let x = random_field(20, 10, &mut rng);
    let a = assemble_solve(&mesh, &x, 3.0, &lc).unwrap();
    let b = assemble_solve(&mesh, &x, 3.0, &lc).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sensitivity_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mesh = MeshSpec::new(60, 20);
    let lc = LoadCase::cantilever(&mesh);
    let penal = 3.0;
    let x = random_field(60, 20, &mut rng);
    let r = assemble_solve(&mesh, &x, penal, &lc).unwrap();
    let dc = compliance_sensitivity(&x, &r, penal).unwrap();
    assert!(dc.iter().all(|&d| d <= 0.0));
    // Smaller steps are dominated by solve roundoff on this slender mesh.
    let h = 1e-4;
    for _ in 0..10 {
        let e = rng.gen_range(0..x.len());
        let mut plus = x.values().to_vec();
        let mut minus = x.values().to_vec();
        plus[e] += h;
        minus[e] -= h;
        let cp = assemble_solve(&mesh, &DensityField::new(60, 20, plus).unwrap(), penal, &lc)
            .unwrap()
            .compliance;
        let cm = assemble_solve(&mesh, &DensityField::new(60, 20, minus).unwrap(), penal, &lc)
            .unwrap()
            .compliance;
        let fd = (cp - cm) / (2.0 * h);
        let rel = (fd - dc[e]).abs() / dc[e].abs().max(1e-12);
        assert!(rel < 1e-3, "element {e}: analytic {} fd {fd} rel {rel:e}", dc[e]);
    }
}

#[test]
fn single_element_bumps_never_increase_compliance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mesh = MeshSpec::new(4, 4);
    let lc = LoadCase::cantilever(&mesh);
    let x = random_field(4, 4, &mut rng);
    let base = assemble_solve(&mesh, &x, 3.0, &lc).unwrap().compliance;
    for e in 0..x.len() {
        let mut v = x.values().to_vec();
        v[e] = (v[e] + 0.1).min(1.0);
        let c = assemble_solve(&mesh, &DensityField::new(4, 4, v).unwrap(), 3.0, &lc)
            .unwrap()
            .compliance;
        assert!(c <= base * (1.0 + 1e-12), "element {e}: {c} > {base}");
    }
}
