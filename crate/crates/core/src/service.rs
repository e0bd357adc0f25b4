//! JSON-over-HTTP front end: synchronous generation, asynchronous SIMP jobs,
//! compliance scoring and model metadata.

use std::collections::HashMap;
use std::io::Read;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tiny_http::{Header, Method, Request, Response, Server};

use crate::error::{Error, Result};
use crate::eval::ComplianceEvaluator;
use crate::fem::{LoadCase, MeshSpec, Solver};
use crate::field::DensityField;
use crate::gan::{architecture, CwganModel, TRAINED_RANGE};
use crate::postprocess::{measured_volfrac, postprocess, PostprocessConfig};
use crate::simp::{optimize_with, OptimizationParams};

const MAX_GENERATE: usize = 64;
const MAX_BODY: u64 = 16 << 20;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub host: String,
    /// 0 picks a free port.
    pub port: u16,
    pub http_threads: usize,
    pub simp_workers: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            http_threads: 4,
            simp_workers: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Simp,
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct JobProgress {
    pub iteration: usize,
    pub max_iters: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimpResult {
    pub grid: Vec<f64>,
    pub nelx: usize,
    pub nely: usize,
    pub compliance: f64,
    pub iterations: usize,
    pub converged: bool,
    pub measured_volfrac: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct JobStatus {
    pub job_id: String,
    pub kind: JobKind,
    pub state: JobState,
    pub progress: JobProgress,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<SimpResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct SimpJob {
    id: String,
    mesh: MeshSpec,
    params: OptimizationParams,
}

struct AppState {
    model: CwganModel,
    evaluator: ComplianceEvaluator,
    jobs: Mutex<HashMap<String, JobStatus>>,
    queue: Mutex<Sender<SimpJob>>,
    next_job: AtomicU64,
    next_error: AtomicU64,
}

impl AppState {
    fn update_job(&self, id: &str, f: impl FnOnce(&mut JobStatus)) {
        if let Some(job) = self.jobs.lock().expect("job table poisoned").get_mut(id) {
            f(job);
        }
    }
}

/// A running service; dropping it does not stop it, call [`RunningService::shutdown`].
pub struct RunningService {
    addr: SocketAddr,
    server: Arc<Server>,
    http: Vec<JoinHandle<()>>,
}

impl RunningService {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the HTTP threads exit.
    pub fn wait(self) {
        for h in self.http {
            let _ = h.join();
        }
    }

    pub fn shutdown(self) {
        for _ in &self.http {
            self.server.unblock();
        }
        self.wait();
    }
}

pub fn start(model: CwganModel, cfg: &ServiceConfig) -> Result<RunningService> {
    let (nely, nelx) = model.resolution();
    let evaluator = ComplianceEvaluator::cantilever(nelx, nely)?;
    let server = Server::http((cfg.host.as_str(), cfg.port))
        .map_err(|e| Error::Config(format!("cannot bind {}:{}: {e}", cfg.host, cfg.port)))?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| Error::Config("service bound to a non-IP address".into()))?;
    let server = Arc::new(server);
    let (tx, rx) = mpsc::channel::<SimpJob>();
    let state = Arc::new(AppState {
        model,
        evaluator,
        jobs: Mutex::new(HashMap::new()),
        queue: Mutex::new(tx),
        next_job: AtomicU64::new(1),
        next_error: AtomicU64::new(1),
    });

    let rx = Arc::new(Mutex::new(rx));
    for _ in 0..cfg.simp_workers.max(1) {
        let (state, rx) = (Arc::clone(&state), Arc::clone(&rx));
        thread::spawn(move || simp_worker(&state, &rx));
    }
    let http = (0..cfg.http_threads.max(1))
        .map(|_| {
            let (state, server) = (Arc::clone(&state), Arc::clone(&server));
            thread::spawn(move || {
                while let Ok(req) = server.recv() {
                    handle(&state, req);
                }
            })
        })
        .collect();
    Ok(RunningService { addr, server, http })
}

fn simp_worker(state: &AppState, rx: &Mutex<Receiver<SimpJob>>) {
    loop {
        let job = match rx.lock().expect("queue poisoned").recv() {
            Ok(job) => job,
            Err(_) => return,
        };
        state.update_job(&job.id, |j| j.state = JobState::Running);
        let load = LoadCase::cantilever(&job.mesh);
        let start = Instant::now();
        let outcome = optimize_with(&job.mesh, &load, &job.params, Solver::default(), |it, _| {
            state.update_job(&job.id, |j| j.progress.iteration = it + 1);
        });
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        state.update_job(&job.id, |j| match outcome {
            Ok((field, trace)) => {
                j.state = JobState::Done;
                j.progress.iteration = trace.iteration_count();
                j.result = Some(SimpResult {
                    nelx: field.nelx(),
                    nely: field.nely(),
                    compliance: trace.final_compliance,
                    iterations: trace.iteration_count(),
                    converged: trace.converged,
                    measured_volfrac: measured_volfrac(&field),
                    wall_ms,
                    grid: field.into_values(),
                });
            }
            Err(e) => {
                j.state = JobState::Failed;
                j.error = Some(e.to_string());
            }
        });
    }
}

struct ApiError {
    status: u16,
    body: Value,
}

fn bad_request(field: &str, message: impl Into<String>) -> ApiError {
    ApiError {
        status: 400,
        body: json!({ "error": message.into(), "field": field }),
    }
}

fn cors(resp: Response<std::io::Cursor<Vec<u8>>>) -> Response<std::io::Cursor<Vec<u8>>> {
    let h = |k: &str, v: &str| Header::from_bytes(k.as_bytes(), v.as_bytes()).expect("static header");
    resp.with_header(h("Access-Control-Allow-Origin", "*"))
        .with_header(h("Access-Control-Allow-Methods", "GET, POST, OPTIONS"))
        .with_header(h("Access-Control-Allow-Headers", "Content-Type"))
}

fn json_response(status: u16, body: &Value) -> Response<std::io::Cursor<Vec<u8>>> {
    let header = Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).expect("static header");
    cors(Response::from_data(body.to_string().into_bytes()).with_status_code(status).with_header(header))
}

fn handle(state: &AppState, mut req: Request) {
    let method = req.method().clone();
    let url = req.url().split('?').next().unwrap_or("").to_string();
    let response = if method == Method::Options {
        cors(Response::from_data(Vec::new()).with_status_code(204))
    } else {
        let mut body = String::new();
        let read = req.as_reader().take(MAX_BODY).read_to_string(&mut body);
        let result = match read {
            Err(e) => Err(bad_request("body", format!("unreadable body: {e}"))),
            Ok(_) => route(state, &method, &url, &body),
        };
        match result {
            Ok((status, v)) => json_response(status, &v),
            Err(e) => json_response(e.status, &e.body),
        }
    };
    let _ = req.respond(response);
}

fn route(state: &AppState, method: &Method, url: &str, body: &str) -> std::result::Result<(u16, Value), ApiError> {
    match (method, url) {
        (Method::Post, "/api/generate") => generate(state, parse(body)?),
        (Method::Post, "/api/simp") => submit_simp(state, parse(body)?),
        (Method::Post, "/api/evaluate") => evaluate(state, parse(body)?),
        (Method::Get, "/api/model/info") => Ok((200, model_info(state))),
        (Method::Get, path) if path.starts_with("/api/jobs/") => {
            let id = &path["/api/jobs/".len()..];
            let jobs = state.jobs.lock().expect("job table poisoned");
            match jobs.get(id) {
                Some(job) => Ok((200, serde_json::to_value(job).expect("job serializes"))),
                None => Err(ApiError {
                    status: 404,
                    body: json!({ "error": format!("unknown job {id}") }),
                }),
            }
        }
        _ => Err(ApiError {
            status: 404,
            body: json!({ "error": format!("no route for {method} {url}") }),
        }),
    }
}

fn parse<T: for<'de> Deserialize<'de>>(body: &str) -> std::result::Result<T, ApiError> {
    serde_json::from_str(body).map_err(|e| {
        let msg = e.to_string();
        // serde names the offending field as `field` in backticks
        let field = msg.split('`').nth(1).unwrap_or("body").to_string();
        bad_request(&field, msg)
    })
}

fn internal(state: &AppState, e: Error) -> ApiError {
    let id = format!("err-{}", state.next_error.fetch_add(1, Ordering::Relaxed));
    ApiError {
        status: 500,
        body: json!({ "error": e.to_string(), "error_id": id }),
    }
}

fn finite(field: &str, v: f64) -> std::result::Result<f64, ApiError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad_request(field, format!("{field} must be a finite number")))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateRequest {
    volfrac: f64,
    count: Option<usize>,
    seed: Option<u64>,
    post: Option<bool>,
}

/// Raw or post-processed structures for one condition; the same function
/// backs the service and the `sample` command.
pub fn generate_fields(model: &CwganModel, volfrac: f64, count: usize, seed: u64, post: bool) -> Result<(Vec<DensityField>, f64)> {
    let out = model.sample(volfrac, count, seed)?;
    let fields = if post {
        let cfg = PostprocessConfig::default();
        out.fields.iter().map(|f| postprocess(f, &cfg)).collect::<Result<Vec<_>>>()?
    } else {
        out.fields
    };
    Ok((fields, out.seconds_per_sample * count as f64))
}

fn generate(state: &AppState, req: GenerateRequest) -> std::result::Result<(u16, Value), ApiError> {
    let volfrac = finite("volfrac", req.volfrac)?;
    let count = req.count.unwrap_or(1);
    if count == 0 || count > MAX_GENERATE {
        return Err(bad_request("count", format!("count must be in 1..={MAX_GENERATE}")));
    }
    let (fields, seconds) =
        generate_fields(&state.model, volfrac, count, req.seed.unwrap_or(0), req.post.unwrap_or(false))
            .map_err(|e| internal(state, e))?;
    let (nely, nelx) = state.model.resolution();
    let mut body = json!({
        "measured_volfrac": fields.iter().map(measured_volfrac).collect::<Vec<_>>(),
        "gen_ms": seconds * 1e3,
        "resolution": [nely, nelx],
        "grids": fields.into_iter().map(DensityField::into_values).collect::<Vec<_>>(),
    });
    if !(TRAINED_RANGE.0..=TRAINED_RANGE.1).contains(&volfrac) {
        body["warning"] = json!(format!(
            "volfrac {volfrac} is outside the trained range [{}, {}]",
            TRAINED_RANGE.0, TRAINED_RANGE.1
        ));
    }
    Ok((200, body))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimpRequest {
    volfrac: f64,
    penal: f64,
    rmin: f64,
    nelx: Option<usize>,
    nely: Option<usize>,
    max_iters: Option<usize>,
}

fn submit_simp(state: &AppState, req: SimpRequest) -> std::result::Result<(u16, Value), ApiError> {
    let (nely, nelx) = state.model.resolution();
    let mesh = MeshSpec::new(req.nelx.unwrap_or(nelx), req.nely.unwrap_or(nely));
    if mesh.nelx == 0 || mesh.nely == 0 || mesh.nelx * mesh.nely > 400 * 400 {
        return Err(bad_request("nelx", "mesh must have between 1 and 160000 elements"));
    }
    let mut params = OptimizationParams::new(req.volfrac, req.penal, req.rmin);
    if let Some(m) = req.max_iters {
        params.max_iters = m;
    }
    if let Err(e) = params.validate() {
        let msg = e.to_string();
        let field = ["volfrac", "penal", "rmin", "max_iters"]
            .into_iter()
            .find(|f| msg.contains(f))
            .unwrap_or("body");
        return Err(bad_request(field, msg));
    }
    let id = format!("simp-{}", state.next_job.fetch_add(1, Ordering::Relaxed));
    let status = JobStatus {
        job_id: id.clone(),
        kind: JobKind::Simp,
        state: JobState::Queued,
        progress: JobProgress {
            iteration: 0,
            max_iters: params.max_iters,
        },
        result: None,
        error: None,
    };
    state.jobs.lock().expect("job table poisoned").insert(id.clone(), status);
    state
        .queue
        .lock()
        .expect("queue poisoned")
        .send(SimpJob { id: id.clone(), mesh, params })
        .map_err(|_| internal(state, Error::State("SIMP workers have stopped".into())))?;
    Ok((202, json!({ "job_id": id })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateRequest {
    grid: Vec<f64>,
}

fn evaluate(state: &AppState, req: EvaluateRequest) -> std::result::Result<(u16, Value), ApiError> {
    let (nely, nelx) = state.model.resolution();
    if req.grid.len() != nelx * nely {
        return Err(bad_request(
            "grid",
            format!("grid has {} values, expected {} ({nely}x{nelx} row-major)", req.grid.len(), nelx * nely),
        ));
    }
    let field = DensityField::new(nelx, nely, req.grid).map_err(|e| bad_request("grid", e.to_string()))?;
    let score = state.evaluator.score(&field).map_err(|e| internal(state, e))?;
    Ok((
        200,
        json!({
            "compliance": score.feasible.then_some(score.compliance),
            "feasible": score.feasible,
            "disconnected": score.disconnected,
            "measured_volfrac": measured_volfrac(&field),
        }),
    ))
}

fn model_info(state: &AppState) -> Value {
    let cfg = &state.model.config;
    json!({
        "resolution": [cfg.resolution.0, cfg.resolution.1],
        "training_config": cfg,
        "conditions_range": [TRAINED_RANGE.0, TRAINED_RANGE.1],
        "architecture": architecture(cfg).ok(),
    })
}
