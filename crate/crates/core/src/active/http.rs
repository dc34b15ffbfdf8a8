//! Labeling service: exposes the pending batch over HTTP and blocks the loop
//! until a human has labeled all of it.
//!
//! Routes:
//! - `GET /api/queries` — current iteration and the still-unanswered queries
//! - `POST /api/labels` — `{instance_id, label}`; 409 for an instance that was
//!   already labeled, 422 for an out-of-range label or an instance that is not
//!   pending
//! - `GET /api/status` — iteration, queried, budget, labeled_count, latest_metrics
//! - `GET /api/classes` — class names, indexed by label

use std::collections::{BTreeSet, HashMap};
use std::net::{SocketAddr, TcpListener};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::oneshot;

use super::{LoopState, MetricPoint, Oracle, OracleError, PendingQuery, QueryBatch};

#[derive(Debug)]
struct ServiceState {
    iteration: usize,
    pending: Vec<PendingQuery>,
    answers: HashMap<usize, usize>,
    committed: BTreeSet<usize>,
    budget: usize,
    labeled_count: usize,
    latest_metrics: Option<MetricPoint>,
    classes: Vec<String>,
}

impl ServiceState {
    fn queried(&self) -> usize {
        self.committed.len() + self.pending.len()
    }

    fn unanswered(&self) -> Vec<PendingQuery> {
        self.pending
            .iter()
            .filter(|q| !self.answers.contains_key(&q.instance_id))
            .cloned()
            .collect()
    }

    fn all_answered(&self) -> bool {
        self.pending.iter().all(|q| self.answers.contains_key(&q.instance_id))
    }
}

#[derive(Debug)]
struct Shared {
    state: Mutex<ServiceState>,
    answered: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, ServiceState> {
        self.state.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelPost {
    pub instance_id: usize,
    pub label: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QueriesResponse {
    pub iteration: usize,
    pub pending: Vec<PendingQuery>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StatusResponse {
    pub iteration: usize,
    pub queried: usize,
    pub budget: usize,
    pub labeled_count: usize,
    pub latest_metrics: Option<MetricPoint>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClassesResponse {
    pub labels: Vec<String>,
}

fn error(status: StatusCode, message: String) -> Response {
    (status, Json(json!({ "error": message }))).into_response()
}

async fn get_queries(State(shared): State<Arc<Shared>>) -> Json<QueriesResponse> {
    let s = shared.lock();
    Json(QueriesResponse {
        iteration: s.iteration,
        pending: s.unanswered(),
    })
}

async fn post_label(State(shared): State<Arc<Shared>>, Json(body): Json<LabelPost>) -> Response {
    let mut s = shared.lock();
    let id = body.instance_id;
    if s.committed.contains(&id) || s.answers.contains_key(&id) {
        return error(StatusCode::CONFLICT, format!("instance {id} is already labeled"));
    }
    if !s.pending.iter().any(|q| q.instance_id == id) {
        return error(StatusCode::UNPROCESSABLE_ENTITY, format!("instance {id} is not pending"));
    }
    if body.label >= s.classes.len() {
        return error(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("label {} is outside [0, {})", body.label, s.classes.len()),
        );
    }
    s.answers.insert(id, body.label);
    if s.all_answered() {
        shared.answered.notify_all();
    }
    (StatusCode::OK, Json(json!({ "accepted": true }))).into_response()
}

async fn get_status(State(shared): State<Arc<Shared>>) -> Json<StatusResponse> {
    let s = shared.lock();
    Json(StatusResponse {
        iteration: s.iteration,
        queried: s.queried(),
        budget: s.budget,
        labeled_count: s.labeled_count,
        latest_metrics: s.latest_metrics,
    })
}

async fn get_classes(State(shared): State<Arc<Shared>>) -> Json<ClassesResponse> {
    Json(ClassesResponse {
        labels: shared.lock().classes.clone(),
    })
}

fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/api/queries", get(get_queries))
        .route("/api/labels", post(post_label))
        .route("/api/status", get(get_status))
        .route("/api/classes", get(get_classes))
        .with_state(shared)
}

/// Oracle backed by the labeling service, which runs on its own thread for
/// as long as this value lives.
pub struct HttpOracle {
    shared: Arc<Shared>,
    timeout: Duration,
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    server: Option<JoinHandle<()>>,
}

impl HttpOracle {
    /// Binds `bind` (e.g. `127.0.0.1:0`) and starts serving.
    pub fn serve(
        bind: &str,
        classes: Vec<String>,
        budget: usize,
        timeout: Duration,
    ) -> Result<HttpOracle, OracleError> {
        let unavailable = |e: std::io::Error| OracleError::Unavailable(format!("{bind}: {e}"));
        let listener = TcpListener::bind(bind).map_err(unavailable)?;
        listener.set_nonblocking(true).map_err(unavailable)?;
        let addr = listener.local_addr().map_err(unavailable)?;
        let runtime = tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()
            .map_err(unavailable)?;

        let shared = Arc::new(Shared {
            state: Mutex::new(ServiceState {
                iteration: 0,
                pending: Vec::new(),
                answers: HashMap::new(),
                committed: BTreeSet::new(),
                budget,
                labeled_count: 0,
                latest_metrics: None,
                classes,
            }),
            answered: Condvar::new(),
        });
        let (tx, rx) = oneshot::channel::<()>();
        let app = router(shared.clone());
        let server = std::thread::Builder::new()
            .name("labeling-service".into())
            .spawn(move || {
                runtime.block_on(async move {
                    let listener = match tokio::net::TcpListener::from_std(listener) {
                        Ok(l) => l,
                        Err(e) => {
                            log::error!("labeling service failed to start: {e}");
                            return;
                        }
                    };
                    let shutdown = async {
                        let _ = rx.await;
                    };
                    if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
                        log::error!("labeling service stopped: {e}");
                    }
                })
            })
            .map_err(unavailable)?;
        log::info!("labeling service listening on http://{addr}");
        Ok(HttpOracle {
            shared,
            timeout,
            addr,
            shutdown: Some(tx),
            server: Some(server),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Seeds the service from an existing state, e.g. after a resume.
    pub fn sync(&self, state: &LoopState, budget: usize) {
        let mut s = self.shared.lock();
        s.iteration = state.t;
        s.committed = state.labeled.iter().map(|(id, _)| *id).collect();
        s.labeled_count = state.labeled.len();
        s.latest_metrics = state.latest_metrics().copied();
        s.budget = budget;
        s.pending.clear();
        s.answers.clear();
    }
}

impl Oracle for HttpOracle {
    fn label(&mut self, batch: &QueryBatch) -> Result<Vec<usize>, OracleError> {
        let mut s = self.shared.lock();
        let ids = batch.ids();
        let same_batch = s.iteration == batch.iteration && s.pending.iter().map(|q| q.instance_id).eq(ids.iter().copied());
        if !same_batch {
            s.iteration = batch.iteration;
            s.pending = batch.queries.clone();
            s.answers.retain(|id, _| ids.contains(id));
        }
        let deadline = Instant::now() + self.timeout;
        while !s.all_answered() {
            let now = Instant::now();
            if now >= deadline {
                return Err(OracleError::Timeout {
                    seconds: self.timeout.as_secs_f64(),
                });
            }
            s = self
                .shared
                .answered
                .wait_timeout(s, deadline - now)
                .unwrap_or_else(|poisoned| poisoned.into_inner())
                .0;
        }
        Ok(ids.iter().map(|id| s.answers[id]).collect())
    }

    fn observe(&mut self, state: &LoopState, budget: usize) {
        self.sync(state, budget);
    }
}

impl Drop for HttpOracle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(handle) = self.server.take() {
            let _ = handle.join();
        }
    }
}
