//! Scoring generated structures: conditional fidelity, diversity and mode
//! collapse, FEA compliance of binarized designs, and timing against SIMP.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble_solve, LoadCase, MeshSpec, X_MIN};
use crate::field::DensityField;
use crate::gan::CwganModel;
use crate::postprocess::{gaussian_smooth, measured_volfrac, threshold, PostprocessConfig};
use crate::simp::{optimize, OptimizationParams};

/// Across-condition std of measured volume fraction below which outputs are
/// considered to ignore the condition.
pub const COLLAPSE_ACROSS_STD: f64 = 0.02;
/// Within-condition diversity below which outputs are considered to ignore
/// the noise.
pub const COLLAPSE_DIVERSITY: f64 = 0.05;
/// Compliance ratio to the solid design beyond which the load path is
/// treated as disconnected.
pub const DISCONNECTED_RATIO: f64 = 1e3;
/// Penalization used to score binarized designs.
pub const EVAL_PENAL: f64 = 3.0;

/// Anything that proposes structures for a requested volume fraction.
pub trait StructureGenerator {
    /// `(nely, nelx)`.
    fn resolution(&self) -> (usize, usize);

    fn generate(&self, volfrac: f64, count: usize, seed: u64) -> Result<Vec<DensityField>>;
}

impl StructureGenerator for CwganModel {
    fn resolution(&self) -> (usize, usize) {
        self.config.resolution
    }

    fn generate(&self, volfrac: f64, count: usize, seed: u64) -> Result<Vec<DensityField>> {
        Ok(self.sample(volfrac, count, seed)?.fields)
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    // exact for identical values, which the collapse check relies on
    if v.iter().all(|x| *x == v[0]) {
        return (v[0], 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean pairwise `||a - b|| / sqrt(N)` over all sample pairs, in [0, 1].
pub fn diversity(samples: &[DensityField]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::Parameter("diversity needs at least two samples".into()));
    }
    if samples.iter().any(|s| !s.same_shape(&samples[0])) {
        return Err(Error::Shape("diversity over fields of different shapes".into()));
    }
    let n = samples[0].len() as f64;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            let d: f64 = samples[i]
                .values()
                .iter()
                .zip(samples[j].values())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            total += (d / n).sqrt();
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionStats {
    pub requested: f64,
    pub raw_mean: f64,
    pub raw_std: f64,
    /// Mean `|measured - requested|` of the raw samples.
    pub raw_abs_error: f64,
    pub thresholded_mean: f64,
    pub thresholded_std: f64,
    pub post_mean: f64,
    pub post_std: f64,
    /// Mean `|measured - requested|` of the post-processed samples.
    pub mean_abs_error: f64,
    /// Within-condition diversity of the post-processed samples.
    pub diversity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub conditions: Vec<ConditionStats>,
    /// Std of the per-condition mean post-processed volume fraction.
    pub across_condition_std: f64,
    pub mean_diversity: f64,
    pub collapse: bool,
}

impl FidelityReport {
    /// Condition with the smallest mean absolute error.
    pub fn best(&self) -> Option<&ConditionStats> {
        self.conditions.iter().min_by(|a, b| a.mean_abs_error.total_cmp(&b.mean_abs_error))
    }
}

pub fn collapse_verdict(across_condition_std: f64, mean_diversity: f64) -> bool {
    across_condition_std < COLLAPSE_ACROSS_STD && mean_diversity < COLLAPSE_DIVERSITY
}

/// Samples `n_per_condition` structures per condition and measures their
/// volume fraction raw, thresholded and post-processed.
pub fn condition_fidelity(
    generator: &dyn StructureGenerator,
    conditions: &[f64],
    n_per_condition: usize,
    seed: u64,
    post: &PostprocessConfig,
) -> Result<(FidelityReport, Vec<Vec<DensityField>>)> {
    post.validate()?;
    if conditions.is_empty() {
        return Err(Error::Parameter("no conditions requested".into()));
    }
    if n_per_condition < 2 {
        return Err(Error::Parameter("need at least two samples per condition".into()));
    }
    let mut rows = Vec::with_capacity(conditions.len());
    let mut kept = Vec::with_capacity(conditions.len());
    for &v in conditions {
        let raw = generator.generate(v, n_per_condition, seed)?;
        let binary: Vec<DensityField> = raw.iter().map(|f| threshold(f, post.threshold)).collect();
        let smooth = binary
            .iter()
            .map(|f| gaussian_smooth(f, post.kernel_size, post.sigma))
            .collect::<Result<Vec<_>>>()?;
        let measure = |fs: &[DensityField]| fs.iter().map(measured_volfrac).collect::<Vec<_>>();
        let raw_vals = measure(&raw);
        let (raw_mean, raw_std) = mean_std(&raw_vals);
        let abs_error = |vals: &[f64]| vals.iter().map(|m| (m - v).abs()).sum::<f64>() / vals.len() as f64;
        let (thresholded_mean, thresholded_std) = mean_std(&measure(&binary));
        let post_vals = measure(&smooth);
        let (post_mean, post_std) = mean_std(&post_vals);
        rows.push(ConditionStats {
            requested: v,
            raw_mean,
            raw_std,
            raw_abs_error: abs_error(&raw_vals),
            thresholded_mean,
            thresholded_std,
            post_mean,
            post_std,
            mean_abs_error: abs_error(&post_vals),
            diversity: diversity(&smooth)?,
        });
        kept.push(smooth);
    }
    let means: Vec<f64> = rows.iter().map(|r| r.post_mean).collect();
    let across_condition_std = mean_std(&means).1;
    let mean_diversity = rows.iter().map(|r| r.diversity).sum::<f64>() / rows.len() as f64;
    Ok((
        FidelityReport {
            conditions: rows,
            across_condition_std,
            mean_diversity,
            collapse: collapse_verdict(across_condition_std, mean_diversity),
        },
        kept,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplianceScore {
    /// `f64::INFINITY` when infeasible.
    pub compliance: f64,
    pub feasible: bool,
    /// Compliance exceeds the solid design's by more than [`DISCONNECTED_RATIO`].
    pub disconnected: bool,
}

/// Scores designs on a fixed mesh and load.
#[derive(Debug, Clone)]
pub struct ComplianceEvaluator {
    mesh: MeshSpec,
    load: LoadCase,
    solid_compliance: f64,
}

impl ComplianceEvaluator {
    pub fn new(mesh: MeshSpec, load: LoadCase) -> Result<Self> {
        let solid = DensityField::uniform(mesh.nelx, mesh.nely, 1.0)?;
        let solid_compliance = assemble_solve(&mesh, &solid, EVAL_PENAL, &load)?.compliance;
        Ok(Self { mesh, load, solid_compliance })
    }

    pub fn cantilever(nelx: usize, nely: usize) -> Result<Self> {
        let mesh = MeshSpec::new(nelx, nely);
        let load = LoadCase::cantilever(&mesh);
        Self::new(mesh, load)
    }

    pub fn solid_compliance(&self) -> f64 {
        self.solid_compliance
    }

    /// Binarizes at 0.5 (void becomes `X_MIN`) and solves. Designs without
    /// material or with a singular system score infinity.
    pub fn score(&self, field: &DensityField) -> Result<ComplianceScore> {
        if (field.nelx(), field.nely()) != (self.mesh.nelx, self.mesh.nely) {
            return Err(Error::Shape(format!(
                "field is {}x{}, mesh is {}x{}",
                field.nelx(),
                field.nely(),
                self.mesh.nelx,
                self.mesh.nely
            )));
        }
        let infeasible = ComplianceScore {
            compliance: f64::INFINITY,
            feasible: false,
            disconnected: true,
        };
        let binary = field.map(|v| if v > 0.5 { 1.0 } else { X_MIN })?;
        if binary.values().iter().all(|&v| v < 1.0) {
            return Ok(infeasible);
        }
        match assemble_solve(&self.mesh, &binary, EVAL_PENAL, &self.load) {
            Ok(r) => Ok(ComplianceScore {
                compliance: r.compliance,
                feasible: true,
                disconnected: r.compliance > DISCONNECTED_RATIO * self.solid_compliance,
            }),
            Err(Error::Singular(_)) | Err(Error::Numeric(_)) => Ok(infeasible),
            Err(e) => Err(e),
        }
    }
}

/// One-off scoring of a design on `mesh` under `load`.
pub fn compliance_eval(field: &DensityField, mesh: &MeshSpec, load: &LoadCase) -> Result<ComplianceScore> {
    ComplianceEvaluator::new(*mesh, load.clone())?.score(field)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub params: OptimizationParams,
    /// Median seconds to generate one structure.
    pub gen_seconds: f64,
    /// Median seconds of one SIMP run.
    pub simp_seconds: f64,
    /// `simp_seconds / gen_seconds`.
    pub ratio: f64,
    /// Compliance reported by the SIMP trace.
    pub simp_trace_compliance: f64,
    /// The SIMP design scored like generated ones.
    pub simp_binarized: ComplianceScore,
    #[serde(skip)]
    pub simp_field: Option<DensityField>,
}

/// Median wall-clock of single-sample generation and of SIMP on the same
/// mesh, over `reps` repetitions each.
pub fn timing_comparison(
    generator: &dyn StructureGenerator,
    params_list: &[OptimizationParams],
    reps: usize,
) -> Result<Vec<TimingRow>> {
    if reps == 0 {
        return Err(Error::Parameter("reps must be at least 1".into()));
    }
    let (nely, nelx) = generator.resolution();
    let evaluator = ComplianceEvaluator::cantilever(nelx, nely)?;
    let mesh = MeshSpec::new(nelx, nely);
    let load = LoadCase::cantilever(&mesh);
    // one untimed call so lazy allocation does not land in the first sample
    generator.generate(params_list.first().map_or(0.5, |p| p.volfrac), 1, 0)?;
    let mut rows = Vec::with_capacity(params_list.len());
    for params in params_list {
        let mut gen = Vec::with_capacity(reps);
        let mut simp = Vec::with_capacity(reps);
        let mut last = None;
        for r in 0..reps {
            let t = Instant::now();
            generator.generate(params.volfrac, 1, r as u64)?;
            gen.push(t.elapsed().as_secs_f64());
            let t = Instant::now();
            let out = optimize(&mesh, &load, params)?;
            simp.push(t.elapsed().as_secs_f64());
            last = Some(out);
        }
        let (field, trace) = last.expect("reps >= 1");
        let gen_seconds = median(gen).max(1e-9);
        let simp_seconds = median(simp);
        rows.push(TimingRow {
            params: *params,
            gen_seconds,
            simp_seconds,
            ratio: simp_seconds / gen_seconds,
            simp_trace_compliance: trace.final_compliance,
            simp_binarized: evaluator.score(&field)?,
            simp_field: Some(field),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub requested: f64,
    pub raw_mean: f64,
    pub raw_std: f64,
    pub post_mean: f64,
    pub post_std: f64,
    pub mean_abs_error: f64,
    /// Mean over feasible generated designs; `None` if none were feasible.
    pub gen_compliance: Option<f64>,
    pub infeasible: usize,
    pub simp_compliance: f64,
    pub diversity: f64,
    pub gen_seconds: f64,
    pub simp_seconds: f64,
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub resolution: (usize, usize),
    pub n_per_condition: usize,
    pub simp_penal: f64,
    pub simp_rmin: f64,
    pub rows: Vec<ReportRow>,
    pub across_condition_std: f64,
    pub mean_diversity: f64,
    pub collapse: bool,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub conditions: Vec<f64>,
    pub n_per_condition: usize,
    pub seed: u64,
    pub post: PostprocessConfig,
    /// SIMP reference parameters paired with every condition.
    pub simp_penal: f64,
    pub simp_rmin: f64,
    pub reps: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            conditions: vec![0.3, 0.4, 0.5, 0.6, 0.7],
            n_per_condition: 8,
            seed: 0,
            post: PostprocessConfig::default(),
            simp_penal: 3.0,
            simp_rmin: 1.5,
            reps: 5,
        }
    }
}

/// Everything an evaluation run produced.
pub struct Evaluation {
    pub report: EvalReport,
    /// Post-processed generated samples per condition.
    pub generated: Vec<Vec<DensityField>>,
    pub simp: Vec<DensityField>,
}

pub fn evaluate(generator: &dyn StructureGenerator, opts: &EvalOptions) -> Result<Evaluation> {
    let (nely, nelx) = generator.resolution();
    let (fidelity, generated) = condition_fidelity(generator, &opts.conditions, opts.n_per_condition, opts.seed, &opts.post)?;
    let params: Vec<OptimizationParams> = opts
        .conditions
        .iter()
        .map(|&v| OptimizationParams::new(v, opts.simp_penal, opts.simp_rmin))
        .collect();
    let timing = timing_comparison(generator, &params, opts.reps)?;
    let evaluator = ComplianceEvaluator::cantilever(nelx, nely)?;
    let mut rows = Vec::with_capacity(opts.conditions.len());
    let mut simp = Vec::with_capacity(opts.conditions.len());
    for ((stats, t), samples) in fidelity.conditions.iter().zip(timing).zip(&generated) {
        let scores = samples.iter().map(|f| evaluator.score(f)).collect::<Result<Vec<_>>>()?;
        let feasible: Vec<f64> = scores.iter().filter(|s| s.feasible).map(|s| s.compliance).collect();
        rows.push(ReportRow {
            requested: stats.requested,
            raw_mean: stats.raw_mean,
            raw_std: stats.raw_std,
            post_mean: stats.post_mean,
            post_std: stats.post_std,
            mean_abs_error: stats.mean_abs_error,
            gen_compliance: (!feasible.is_empty()).then(|| feasible.iter().sum::<f64>() / feasible.len() as f64),
            infeasible: scores.len() - feasible.len(),
            simp_compliance: t.simp_binarized.compliance,
            diversity: stats.diversity,
            gen_seconds: t.gen_seconds,
            simp_seconds: t.simp_seconds,
            speedup: t.ratio,
        });
        simp.push(t.simp_field.expect("timing keeps the last SIMP field"));
    }
    Ok(Evaluation {
        report: EvalReport {
            resolution: (nely, nelx),
            n_per_condition: opts.n_per_condition,
            simp_penal: opts.simp_penal,
            simp_rmin: opts.simp_rmin,
            rows,
            across_condition_std: fidelity.across_condition_std,
            mean_diversity: fidelity.mean_diversity,
            collapse: fidelity.collapse,
        },
        generated,
        simp,
    })
}

impl EvalReport {
    /// Plain-text table, one row per condition.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "CWGAN vs SIMP at {}x{} ({} samples per condition, SIMP penal {} rmin {})",
            self.resolution.1, self.resolution.0, self.n_per_condition, self.simp_penal, self.simp_rmin
        );
        let _ = writeln!(
            s,
            "{:>8} {:>15} {:>15} {:>8} {:>12} {:>12} {:>9} {:>10} {:>10} {:>9}",
            "volfrac", "raw vf", "post vf", "|err|", "gen c", "simp c", "diversity", "gen s", "simp s", "speedup"
        );
        for r in &self.rows {
            let gen_c = match r.gen_compliance {
                Some(c) if r.infeasible > 0 => format!("{c:.2}*{}", r.infeasible),
                Some(c) => format!("{c:.2}"),
                None => "infeasible".into(),
            };
            let _ = writeln!(
                s,
                "{:>8.3} {:>15} {:>15} {:>8.4} {:>12} {:>12.2} {:>9.4} {:>10.5} {:>10.3} {:>8.1}x",
                r.requested,
                format!("{:.3}+-{:.3}", r.raw_mean, r.raw_std),
                format!("{:.3}+-{:.3}", r.post_mean, r.post_std),
                r.mean_abs_error,
                gen_c,
                r.simp_compliance,
                r.diversity,
                r.gen_seconds,
                r.simp_seconds,
                r.speedup
            );
        }
        let _ = writeln!(
            s,
            "across-condition std {:.4}, mean diversity {:.4}: {}",
            self.across_condition_std,
            self.mean_diversity,
            if self.collapse { "mode collapse detected" } else { "no mode collapse" }
        );
        s
    }
}

/// Binary portable graymap; void is white, material black.
pub fn encode_pgm(field: &DensityField) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", field.nelx(), field.nely()).into_bytes();
    out.extend(field.values().iter().map(|v| (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8));
    out
}

pub fn write_pgm(path: &Path, field: &DensityField) -> Result<()> {
    fs::write(path, encode_pgm(field)).map_err(|e| Error::io(path, e))
}
