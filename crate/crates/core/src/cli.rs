//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime
//! failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataset::{generate_dataset_with, write_grid, DatasetManifest, GenerateOptions, GridSpec, LoadedDataset};
use crate::error::{Error, Result};
use crate::eval::{evaluate, write_pgm, EvalOptions};
use crate::fem::{LoadCase, MeshSpec, Solver};
use crate::gan::{train, ConditionLabel, CriticMode, CwganModel, GanConfig, StepKind, TrainOptions, MODEL_FILE};
use crate::postprocess::measured_volfrac;
use crate::service::{generate_fields, start, ServiceConfig};
use crate::simp::{optimize_with, OptimizationParams};

pub const DATA_DIR_ENV: &str = "TOPOFORGE_DATA_DIR";

#[derive(Parser, Debug)]
#[command(name = "topoforge", version, about = "SIMP topology optimization and a conditional WGAN that imitates it")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one SIMP optimization on the cantilever problem.
    Optimize(OptimizeArgs),
    /// Sweep a parameter grid of SIMP runs into a dataset.
    Dataset(DatasetArgs),
    /// Train the conditional WGAN on a dataset.
    Train(TrainArgs),
    /// Generate structures from a trained model.
    Sample(SampleArgs),
    /// Compare a trained model with SIMP.
    Eval(EvalArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    #[arg(long, default_value_t = 60)]
    nelx: usize,
    #[arg(long, default_value_t = 20)]
    nely: usize,
    #[arg(long, default_value_t = 0.5)]
    volfrac: f64,
    #[arg(long, default_value_t = 3.0)]
    penal: f64,
    #[arg(long, default_value_t = 1.5)]
    rmin: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    /// Grid file to write; a `.pgm` image is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Profile {
    Desk,
    Full,
}

#[derive(Args, Debug)]
struct DatasetArgs {
    #[arg(long, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    resume: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CriticModeArg {
    Linear,
    PaperTanh,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset directory (or its manifest file).
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    n_critic: Option<usize>,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long, value_enum)]
    critic_mode: Option<CriticModeArg>,
    #[arg(long)]
    label_smoothing: bool,
    /// Width preset; resolution always follows the dataset.
    #[arg(long, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,
    /// Stop after this many generator steps.
    #[arg(long)]
    max_generator_steps: Option<u64>,
    #[arg(long, default_value_t = 500)]
    checkpoint_every: u64,
    #[arg(long)]
    resume: bool,
    /// Checkpoint directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Checkpoint file or training directory.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    volfrac: f64,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Threshold and smooth the raw output.
    #[arg(long)]
    post: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dataset whose resolution must match the model.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.4,0.5,0.6,0.7")]
    conditions: Vec<f64>,
    #[arg(long, default_value_t = 8)]
    samples: usize,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Accepted for symmetry with other commands; SIMP jobs use the model's mesh.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    simp_workers: usize,
}

fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map_or_else(|| PathBuf::from("topoforge-data"), PathBuf::from)
}

fn model_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MODEL_FILE)
    } else {
        p.to_path_buf()
    }
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Optimize(a) => optimize_cmd(a),
        Command::Dataset(a) => dataset_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Sample(a) => sample_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Serve(a) => serve_cmd(a),
    }
}

fn optimize_cmd(a: OptimizeArgs) -> Result<()> {
    let mesh = MeshSpec::new(a.nelx, a.nely);
    let load = LoadCase::cantilever(&mesh);
    let mut params = OptimizationParams::new(a.volfrac, a.penal, a.rmin);
    params.max_iters = a.max_iters;
    let quiet = a.quiet;
    let (field, trace) = optimize_with(&mesh, &load, &params, Solver::default(), |it, r| {
        if !quiet {
            eprintln!("it {:3}  c {:12.4}  vol {:.4}  change {:.4}", it + 1, r.compliance, r.mean_density, r.change);
        }
    })?;
    println!(
        "compliance {:.6}  iterations {}  converged {}  volfrac {:.4}  time {:.2}s",
        trace.final_compliance,
        trace.iteration_count(),
        trace.converged,
        measured_volfrac(&field),
        trace.wall_seconds
    );
    if let Some(out) = a.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        write_grid(&out, &field)?;
        write_pgm(&out.with_extension("pgm"), &field)?;
    }
    Ok(())
}

fn dataset_cmd(a: DatasetArgs) -> Result<()> {
    let (spec, name) = match a.profile {
        Profile::Desk => (GridSpec::desk(), "dataset-desk"),
        Profile::Full => (GridSpec::default(), "dataset-full"),
    };
    let out = a.out.unwrap_or_else(|| data_dir().join(name));
    let opts = GenerateOptions {
        workers: a.workers.max(1),
        resume: a.resume,
        ..GenerateOptions::default()
    };
    let outcome = generate_dataset_with(&spec, &out, &opts, |done, total| {
        eprintln!("[{done}/{total}]");
    })?;
    let failed = outcome.manifest.records.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{} samples in {} ({} SIMP runs this call, {} failed)",
        outcome.manifest.records.len(),
        out.display(),
        outcome.simp_runs,
        failed
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&a.dataset)?;
    let data = LoadedDataset::load(&manifest)?;
    let mut cfg = match a.profile {
        Profile::Desk => GanConfig::desk(),
        Profile::Full => GanConfig::default(),
    };
    cfg.resolution = (data.nely, data.nelx);
    cfg.seed = a.seed;
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.batch_size = a.batch.unwrap_or(cfg.batch_size);
    cfg.n_critic = a.n_critic.unwrap_or(cfg.n_critic);
    cfg.clip_c = a.clip.unwrap_or(cfg.clip_c);
    cfg.lr = a.lr.unwrap_or(cfg.lr);
    cfg.latent_dim = a.latent_dim.unwrap_or(cfg.latent_dim);
    cfg.label_smoothing = a.label_smoothing;
    if let Some(m) = a.critic_mode {
        cfg.critic_mode = match m {
            CriticModeArg::Linear => CriticMode::Linear,
            CriticModeArg::PaperTanh => CriticMode::PaperTanh,
        };
    }
    let out = a.out.unwrap_or_else(|| data_dir().join("model"));
    let opts = TrainOptions {
        checkpoint_dir: out.clone(),
        checkpoint_every: a.checkpoint_every,
        stop_after_generator_steps: a.max_generator_steps,
        resume: a.resume,
    };
    let quiet = a.quiet;
    let mut recent = Vec::new();
    let outcome = train(&data, &cfg, &opts, |m| match m.kind {
        StepKind::Critic => recent.extend(m.wasserstein),
        StepKind::Generator => {
            if !quiet && m.generator_step % 50 == 0 {
                let w = recent.iter().sum::<f64>() / recent.len().max(1) as f64;
                eprintln!(
                    "epoch {:4}  gen step {:6}  W {:+.5}  G loss {:+.5}",
                    m.epoch,
                    m.generator_step,
                    w,
                    m.generator_loss.unwrap_or(f64::NAN)
                );
                recent.clear();
            }
        }
    })?;
    println!(
        "trained {} generator steps ({} critic steps); checkpoint {}",
        outcome.state.generator_steps,
        outcome.state.critic_steps,
        outcome.checkpoint.display()
    );
    Ok(())
}

fn sample_cmd(a: SampleArgs) -> Result<()> {
    let label = ConditionLabel::new(a.volfrac)?;
    if !label.in_training_range() {
        eprintln!("warning: volfrac {} is outside the trained range [0.3, 0.7]", a.volfrac);
    }
    let model = CwganModel::load(&model_path(&a.model))?;
    let (fields, seconds) = generate_fields(&model, a.volfrac, a.count.max(1), a.seed, a.post)?;
    let out = a.out.unwrap_or_else(|| data_dir().join("samples"));
    create_dir(&out)?;
    for (i, f) in fields.iter().enumerate() {
        let stem = format!("sample-{:.2}-{i:03}", a.volfrac);
        let grid = out.join(format!("{stem}.topo"));
        write_grid(&grid, f)?;
        write_pgm(&out.join(format!("{stem}.pgm")), f)?;
        println!("{}  measured volfrac {:.4}", grid.display(), measured_volfrac(f));
    }
    println!("{:.3} ms per sample", 1e3 * seconds / fields.len() as f64);
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let model = CwganModel::load(&model_path(&a.model))?;
    if let Some(ds) = &a.dataset {
        let m = DatasetManifest::load(ds)?;
        if (m.header.mesh.nely, m.header.mesh.nelx) != model.resolution() {
            return Err(Error::Config(format!(
                "dataset is {}x{} but the model generates {}x{}",
                m.header.mesh.nelx,
                m.header.mesh.nely,
                model.resolution().1,
                model.resolution().0
            )));
        }
    }
    let opts = EvalOptions {
        conditions: a.conditions,
        n_per_condition: a.samples,
        seed: a.seed,
        reps: a.reps,
        ..EvalOptions::default()
    };
    let result = evaluate(&model, &opts)?;
    print!("{}", result.report.render_table());
    let out = a.out.unwrap_or_else(|| data_dir().join("eval"));
    create_dir(&out)?;
    write_json(&out.join("report.json"), &result.report)?;
    fs::write(out.join("report.txt"), result.report.render_table()).map_err(|e| Error::io(&out, e))?;
    for (row, (gens, simp)) in result.report.rows.iter().zip(result.generated.iter().zip(&result.simp)) {
        for (i, f) in gens.iter().enumerate() {
            write_pgm(&out.join(format!("gen-{:.2}-{i:02}.pgm", row.requested)), f)?;
        }
        write_pgm(&out.join(format!("simp-{:.2}.pgm", row.requested)), simp)?;
    }
    println!("report written to {}", out.display());
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> Result<()> {
    let model = CwganModel::load(&model_path(&a.model))?;
    let cfg = ServiceConfig {
        host: a.host,
        port: a.port,
        simp_workers: a.simp_workers,
        ..ServiceConfig::default()
    };
    let svc = start(model, &cfg)?;
    println!("listening on http://{}", svc.addr());
    svc.wait();
    Ok(())
}
