use std::path::Path;
use std::process::{Command, Output};

use topoforge::dataset::{generate_dataset, read_grid, Axis, GenerateOptions, GridSpec};
use topoforge::gan::{CwganModel, GanConfig, MODEL_FILE};

fn topoforge(args: &[&str], data_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_topoforge"))
        .args(args)
        .env("TOPOFORGE_DATA_DIR", data_dir)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn save_toy_model(path: &Path) {
    let cfg = GanConfig {
        resolution: (12, 12),
        latent_dim: 6,
        gen_channels: 8,
        critic_channels: 4,
        ..GanConfig::default()
    };
    CwganModel::new(&cfg).unwrap().save(path, None).unwrap();
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["--help"][..], &["--version"], &["train", "--help"]] {
        let o = topoforge(args, dir.path());
        assert_eq!(o.status.code(), Some(0), "{args:?}");
        assert!(!o.stdout.is_empty());
    }
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&[][..], &["frobnicate"], &["sample", "--volfrac", "0.4"], &["optimize", "--nelx", "many"]] {
        let o = topoforge(args, dir.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing.cwto");
    let o = topoforge(&["sample", "--model", missing.to_str().unwrap(), "--volfrac", "0.4"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error:"));
    let o = topoforge(&["optimize", "--volfrac", "1.5"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("volfrac"));
}

#[test]
fn optimize_writes_grid_and_image() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs/opt.topo");
    let o = topoforge(
        &["optimize", "--nelx", "20", "--nely", "10", "--volfrac", "0.4", "--quiet", "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("compliance"));
    let field = read_grid(&out).unwrap();
    assert_eq!((field.nelx(), field.nely()), (20, 10));
    assert!((field.mean() - 0.4).abs() <= 1e-3);
    assert!(std::fs::read(out.with_extension("pgm")).unwrap().starts_with(b"P5\n20 10\n"));
}

#[test]
fn sample_writes_into_the_data_dir_and_warns_out_of_range() {
    let dir = tempfile::tempdir().unwrap();
    let model_dir = dir.path().join("model");
    std::fs::create_dir(&model_dir).unwrap();
    save_toy_model(&model_dir.join(MODEL_FILE));
    let o = topoforge(&["sample", "--model", model_dir.to_str().unwrap(), "--volfrac", "0.5", "--count", "2"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(!stderr(&o).contains("warning"));
    for i in 0..2 {
        let f = read_grid(&dir.path().join(format!("samples/sample-0.50-{i:03}.topo"))).unwrap();
        assert_eq!((f.nelx(), f.nely()), (12, 12));
        assert!(dir.path().join(format!("samples/sample-0.50-{i:03}.pgm")).exists());
    }
    let out = dir.path().join("far");
    let o = topoforge(
        &["sample", "--model", model_dir.to_str().unwrap(), "--volfrac", "0.9", "--post", "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("warning"));
    let f = read_grid(&out.join("sample-0.90-000.topo")).unwrap();
    assert!(f.values().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn train_then_resume_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let spec = GridSpec {
        volfrac: Axis::new(0.3, 0.5, 0.2),
        penal: Axis::point(3.0),
        rmin: Axis::point(1.5),
        nelx: 12,
        nely: 12,
    };
    generate_dataset(&spec, &data, &GenerateOptions::default()).unwrap();
    let out = dir.path().join("model");
    let base = [
        "train", "--dataset", data.to_str().unwrap(), "--batch", "2", "--n-critic", "1", "--quiet", "--out",
        out.to_str().unwrap(),
    ];
    let mut args = base.to_vec();
    args.extend(["--max-generator-steps", "2"]);
    let o = topoforge(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("trained 2 generator steps"));

    let mut args = base.to_vec();
    args.extend(["--max-generator-steps", "3", "--resume"]);
    let o = topoforge(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("trained 3 generator steps"));

    // a changed hyperparameter cannot resume the same run
    let mut args = base.to_vec();
    args.extend(["--max-generator-steps", "4", "--resume", "--lr", "0.001"]);
    assert_eq!(topoforge(&args, dir.path()).status.code(), Some(2));
}
