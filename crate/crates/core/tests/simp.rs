use topoforge::fem::{assemble_solve, LoadCase, MeshSpec, Solver};
use topoforge::simp::{optimize, optimize_with, OptimizationParams};
use topoforge::DensityField;

#[test]
fn cantilever_benchmark_converges() {
    let mesh = MeshSpec::new(60, 20);
    let lc = LoadCase::cantilever(&mesh);
    let params = OptimizationParams::new(0.5, 3.0, 1.5);
    let (x, trace) = optimize(&mesh, &lc, &params).unwrap();
    assert!(trace.converged, "{} iterations", trace.iteration_count());
    assert!(trace.iteration_count() <= 200);
    assert!(trace.final_compliance < trace.initial_compliance);
    assert!((x.mean() - 0.5).abs() <= 1e-3);
    for rec in &trace.iterations {
        assert!((rec.mean_density - 0.5).abs() <= 1e-4);
    }
    // material concentrates at the clamped edge, leaving voids inside
    let solid = x.values().iter().filter(|&&v| v > 0.9).count() as f64 / x.len() as f64;
    let void = x.values().iter().filter(|&&v| v < 0.1).count() as f64 / x.len() as f64;
    assert!(solid > 0.3 && void > 0.3, "solid {solid} void {void}");
}

#[test]
fn cantilever_result_is_symmetric_about_midline() {
    let mesh = MeshSpec::new(60, 20);
    let lc = LoadCase::cantilever(&mesh);
    let (x, _) = optimize(&mesh, &lc, &OptimizationParams::new(0.5, 3.0, 1.5)).unwrap();
    let mut worst: f64 = 0.0;
    for ey in 0..20 {
        for ex in 0..60 {
            worst = worst.max((x.get(ex, ey) - x.get(ex, 19 - ey)).abs());
        }
    }
    assert!(worst <= 1e-9, "asymmetry {worst:e}");
}

#[test]
fn identical_params_give_identical_fields() {
    let mesh = MeshSpec::new(30, 10);
    let lc = LoadCase::cantilever(&mesh);
    let params = OptimizationParams::new(0.4, 3.0, 2.0);
    let (a, ta) = optimize(&mesh, &lc, &params).unwrap();
    let (b, tb) = optimize(&mesh, &lc, &params).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta.iterations, tb.iterations);
}

#[test]
fn near_solid_volume_gives_near_solid_compliance() {
    let mesh = MeshSpec::new(30, 10);
    let lc = LoadCase::cantilever(&mesh);
    let (x, trace) = optimize(&mesh, &lc, &OptimizationParams::new(0.999, 3.0, 1.5)).unwrap();
    let dense = x.values().iter().filter(|&&v| v > 0.95).count();
    assert!(dense as f64 >= 0.99 * x.len() as f64);
    let solid = assemble_solve(&mesh, &DensityField::uniform(30, 10, 1.0).unwrap(), 3.0, &lc)
        .unwrap()
        .compliance;
    assert!((trace.final_compliance - solid).abs() / solid < 0.01);
}

#[test]
fn relaxed_problem_keeps_box_bounds() {
    let mesh = MeshSpec::new(20, 10);
    let lc = LoadCase::cantilever(&mesh);
    let mut params = OptimizationParams::new(0.5, 1.0, 1.0);
    params.max_iters = 30;
    let (x, trace) = optimize_with(&mesh, &lc, &params, Solver::default(), |_, _| {}).unwrap();
    assert!(x.values().iter().all(|&v| (1e-3..=1.0).contains(&v)));
    assert!(trace.iteration_count() <= 30);
}

#[test]
fn desk_resolution_run_time() {
    let mesh = MeshSpec::new(48, 48);
    let lc = LoadCase::cantilever(&mesh);
    let (x, trace) = optimize(&mesh, &lc, &OptimizationParams::new(0.3, 3.0, 1.5)).unwrap();
    assert!((x.mean() - 0.3).abs() <= 1e-3);
    eprintln!(
        "48x48: {} iterations, {:.2}s, converged {}",
        trace.iteration_count(),
        trace.wall_seconds,
        trace.converged
    );
}
