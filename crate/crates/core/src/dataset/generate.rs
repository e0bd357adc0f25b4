use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::format::{read_grid_f32, write_grid};
use super::grid::{enumerate_grid, GridSpec};
use super::manifest::{sample_id, DatasetManifest, ManifestHeader, SampleRecord, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::fem::{LoadCase, MeshSpec, Solver};
use crate::simp::{optimize_with, OptimizationParams};

pub const GRID_DIR: &str = "grids";

#[derive(Debug, Clone, Copy)]
pub struct GenerateOptions {
    pub workers: usize,
    pub resume: bool,
    /// Samples per manifest flush; 0 picks `4 * workers`.
    pub batch_size: usize,
    /// Stop with [`Error::Interrupted`] after this many flushed batches.
    pub abort_after_batches: Option<usize>,
    pub solver: Solver,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            resume: false,
            batch_size: 0,
            abort_after_batches: None,
            solver: Solver::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerationOutcome {
    pub manifest: DatasetManifest,
    /// SIMP runs performed by this call (0 when resuming a complete dataset).
    pub simp_runs: usize,
}

fn record_is_valid(manifest: &DatasetManifest, record: &SampleRecord) -> bool {
    if record.error.is_some() {
        return false;
    }
    let Some(path) = manifest.grid_path(record) else {
        return false;
    };
    matches!(read_grid_f32(&path), Ok((x, y, _)) if x == record.nelx && y == record.nely)
}

fn run_sample(
    out_dir: &Path,
    mesh: &MeshSpec,
    load: &LoadCase,
    params: &OptimizationParams,
    solver: Solver,
) -> Result<SampleRecord> {
    let id = sample_id(params, mesh.nelx, mesh.nely);
    let mut record = SampleRecord {
        id: id.clone(),
        volfrac: params.volfrac,
        penal: params.penal,
        rmin: params.rmin,
        nelx: mesh.nelx,
        nely: mesh.nely,
        compliance: 0.0,
        iterations: 0,
        converged: false,
        grid_file: None,
        error: None,
    };
    match optimize_with(mesh, load, params, solver, |_, _| {}) {
        Ok((field, trace)) => {
            let rel = format!("{GRID_DIR}/{id}.topo");
            write_grid(&out_dir.join(&rel), &field)?;
            record.compliance = trace.final_compliance;
            record.iterations = trace.iteration_count();
            record.converged = trace.converged;
            record.grid_file = Some(rel);
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    Ok(record)
}

/// Runs SIMP for every grid point and writes grid files plus the manifest.
pub fn generate_dataset(
    spec: &GridSpec,
    out_dir: &Path,
    options: &GenerateOptions,
) -> Result<GenerationOutcome> {
    generate_dataset_with(spec, out_dir, options, |_, _| {})
}

/// As [`generate_dataset`], reporting `(finished, total)` after every sample.
pub fn generate_dataset_with(
    spec: &GridSpec,
    out_dir: &Path,
    options: &GenerateOptions,
    progress: impl Fn(usize, usize) + Sync,
) -> Result<GenerationOutcome> {
    let points = enumerate_grid(spec)?;
    let mesh = MeshSpec::new(spec.nelx, spec.nely);
    let load = LoadCase::cantilever(&mesh);
    fs::create_dir_all(out_dir.join(GRID_DIR)).map_err(|e| Error::io(out_dir, e))?;

    let header = ManifestHeader {
        format_version: FORMAT_VERSION,
        mesh,
        load_name: "cantilever".into(),
        load: load.clone(),
        grid: *spec,
    };
    let mut manifest = DatasetManifest {
        header: header.clone(),
        records: Vec::new(),
        root: out_dir.to_path_buf(),
    };

    let mut done: HashMap<String, SampleRecord> = HashMap::new();
    if options.resume && manifest.path().exists() {
        let existing = DatasetManifest::load(out_dir)?;
        if existing.header.mesh != mesh {
            return Err(Error::Config(format!(
                "existing dataset mesh {}x{} does not match requested {}x{}",
                existing.header.mesh.nelx, existing.header.mesh.nely, mesh.nelx, mesh.nely
            )));
        }
        for r in &existing.records {
            if record_is_valid(&existing, r) {
                done.insert(r.id.clone(), r.clone());
            }
        }
    }

    let ids: Vec<String> = points
        .iter()
        .map(|p| sample_id(p, mesh.nelx, mesh.nely))
        .collect();
    let todo: Vec<usize> = (0..points.len()).filter(|&i| !done.contains_key(&ids[i])).collect();
    let total = points.len();
    let finished = AtomicUsize::new(total - todo.len());

    let rebuild = |done: &HashMap<String, SampleRecord>| -> Vec<SampleRecord> {
        ids.iter().filter_map(|id| done.get(id).cloned()).collect()
    };

    let workers = options.workers.max(1);
    let batch_size = if options.batch_size == 0 {
        4 * workers
    } else {
        options.batch_size
    };

    manifest.records = rebuild(&done);
    if todo.is_empty() && options.resume {
        // nothing to run; keep the existing file untouched if it matches
        if DatasetManifest::load(out_dir).map(|m| m.records == manifest.records && m.header == header)
            .unwrap_or(false)
        {
            return Ok(GenerationOutcome {
                manifest,
                simp_runs: 0,
            });
        }
    }
    manifest.save()?;

    let mut runs = 0;
    for (batch_index, chunk) in todo.chunks(batch_size).enumerate() {
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Result<SampleRecord>>> = Mutex::new(Vec::new());
        std::thread::scope(|scope| {
            for _ in 0..workers.min(chunk.len()) {
                scope.spawn(|| loop {
                    let k = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&i) = chunk.get(k) else { break };
                    let outcome = run_sample(out_dir, &mesh, &load, &points[i], options.solver);
                    results.lock().unwrap().push(outcome);
                    progress(finished.fetch_add(1, Ordering::Relaxed) + 1, total);
                });
            }
        });
        let mut io_error = None;
        for outcome in results.into_inner().unwrap() {
            match outcome {
                Ok(r) => {
                    done.insert(r.id.clone(), r);
                    runs += 1;
                }
                Err(e) => io_error = io_error.or(Some(e)),
            }
        }
        manifest.records = rebuild(&done);
        manifest.save()?;
        if let Some(e) = io_error {
            return Err(e);
        }
        let flushed = batch_index + 1;
        if options.abort_after_batches == Some(flushed) && flushed * batch_size < todo.len() {
            return Err(Error::Interrupted { batches: flushed });
        }
    }

    Ok(GenerationOutcome {
        manifest,
        simp_runs: runs,
    })
}
