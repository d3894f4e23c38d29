//! Local HTTP service over one session.
//!
//! Mutating requests take the write lock, so they are serialized; reads
//! share the read lock and see one consistent snapshot. Every successful
//! body carries the workbook `version` it was computed against, and so does
//! every error raised while a workbook is loaded.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as JsonValue};
use sheetfrag::diagnosis::{DiagnosisError, LabelRecord, DEFAULT_KMAX};
use sheetfrag::fragment::FragmentError;
use sheetfrag::harness::InputSpec;
use sheetfrag::session::{Generation, Session, SessionError};
use sheetfrag::workbook::Document;
use sheetfrag::{parse_address, CellAddress, Value, Workbook};
use tokio::sync::RwLock;

pub struct AppState {
    session: RwLock<Option<Session>>,
    dir: Option<PathBuf>,
}

impl AppState {
    /// `dir`, when given, receives the session files after every change.
    pub fn new(session: Option<Session>, dir: Option<PathBuf>) -> Arc<Self> {
        Arc::new(Self {
            session: RwLock::new(session),
            dir,
        })
    }

    pub async fn snapshot(&self) -> Option<Session> {
        self.session.read().await.clone()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    version: Option<u64>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl ToString) -> Self {
        Self {
            status,
            message: message.to_string(),
            version: None,
        }
    }

    fn at(mut self, version: u64) -> Self {
        self.version = Some(version);
        self
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::ReadOnly(..) | SessionError::FocusedLoad => StatusCode::FORBIDDEN,
            SessionError::UnknownTest(_) => StatusCode::NOT_FOUND,
            // Fragments are only ever named by id here; one that does not
            // build does not exist.
            SessionError::Fragment(FragmentError::InvalidConfig(_)) => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::Fragment(_) => StatusCode::NOT_FOUND,
            SessionError::Diagnosis(DiagnosisError::NothingToDiagnose) => StatusCode::CONFLICT,
            SessionError::File { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.message, "version": self.version });
        (self.status, Json(body)).into_response()
    }
}

/// A response body with the workbook version merged in.
#[derive(Serialize)]
pub struct Versioned<T> {
    version: u64,
    #[serde(flatten)]
    body: T,
}

type ApiResult<T> = Result<Json<Versioned<T>>, ApiError>;

fn no_session() -> ApiError {
    ApiError::new(StatusCode::CONFLICT, "no workbook loaded")
}

async fn read<T>(
    state: &AppState,
    f: impl FnOnce(&Session) -> Result<T, SessionError>,
) -> ApiResult<T> {
    let guard = state.session.read().await;
    let s = guard.as_ref().ok_or_else(no_session)?;
    let body = f(s).map_err(|e| ApiError::from(e).at(s.version()))?;
    Ok(Json(Versioned {
        version: s.version(),
        body,
    }))
}

/// Runs `f` under the write lock and persists the session if it succeeded.
async fn write<T>(
    state: &AppState,
    f: impl FnOnce(&mut Session) -> Result<T, SessionError>,
) -> ApiResult<T> {
    let mut guard = state.session.write().await;
    let s = guard.as_mut().ok_or_else(no_session)?;
    let body = f(s).map_err(|e| ApiError::from(e).at(s.version()))?;
    if let Some(dir) = &state.dir {
        s.save(dir).map_err(|e| ApiError::from(e).at(s.version()))?;
    }
    Ok(Json(Versioned {
        version: s.version(),
        body,
    }))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/session/load", post(load))
        .route("/grid", get(grid))
        .route("/fragments", get(fragments))
        .route("/fragments/{id}/focus", post(focus))
        .route("/focus", delete(clear_focus))
        .route("/fragments/{id}/tests/generate", post(generate))
        .route("/tests/run", post(run))
        .route("/cells/{addr}", put(set_cell))
        .route("/labels", post(label))
        .route("/diagnosis", get(diagnosis))
        .route("/commit", post(commit))
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    axum::serve(listener, router(state)).await
}

/// Exactly one of `path` (a `.json` or `.csv` file on the service host) or
/// `workbook` (an inline document).
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadRequest {
    path: Option<PathBuf>,
    workbook: Option<Document>,
}

#[derive(Serialize)]
struct LoadResponse {
    name: String,
    cells: usize,
    formulas: usize,
}

async fn load(
    State(state): State<Arc<AppState>>,
    body: Result<Json<LoadRequest>, JsonRejection>,
) -> ApiResult<LoadResponse> {
    let Json(req) = body?;
    let wb = match (req.path, req.workbook) {
        (Some(path), None) => load_path(&path)?,
        (None, Some(doc)) => Workbook::from_document(doc)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e))?,
        _ => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "give exactly one of `path` or `workbook`",
            ))
        }
    };
    let response = LoadResponse {
        name: wb.name().to_string(),
        cells: wb.len(),
        formulas: wb.formulas().count(),
    };
    let mut guard = state.session.write().await;
    match guard.as_mut() {
        Some(s) => s.load_workbook(wb).map_err(|e| ApiError::from(e).at(s.version()))?,
        None => *guard = Some(Session::new(wb)),
    }
    let s = guard.as_ref().expect("just loaded");
    if let Some(dir) = &state.dir {
        s.save(dir).map_err(|e| ApiError::from(e).at(s.version()))?;
    }
    Ok(Json(Versioned {
        version: s.version(),
        body: response,
    }))
}

fn load_path(path: &Path) -> Result<Workbook, ApiError> {
    Workbook::load(path).map_err(|e| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("{}: {e}", path.display()),
        )
    })
}

async fn grid(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let guard = state.session.read().await;
    let s = guard.as_ref().ok_or_else(no_session)?;
    let grid = s.grid().map_err(|e| ApiError::from(e).at(s.version()))?;
    Ok(Json(grid).into_response())
}

async fn fragments(State(state): State<Arc<AppState>>) -> ApiResult<JsonValue> {
    // Enumeration is cached inside the session, hence the write lock.
    let mut guard = state.session.write().await;
    let s = guard.as_mut().ok_or_else(no_session)?;
    let focus = s.focus().map(str::to_string);
    let list = serde_json::to_value(s.fragments()).expect("fragments serialize");
    Ok(Json(Versioned {
        version: s.version(),
        body: json!({ "focus": focus, "fragments": list }),
    }))
}

#[derive(Serialize)]
struct FocusResponse {
    focus: Option<String>,
}

async fn focus(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<JsonValue> {
    write(&state, |s| {
        s.set_focus(Some(&id))?;
        let f = s.fragment(&id)?;
        Ok(json!({ "focus": id, "fragment": f }))
    })
    .await
}

async fn clear_focus(State(state): State<Arc<AppState>>) -> ApiResult<FocusResponse> {
    write(&state, |s| {
        s.set_focus(None)?;
        Ok(FocusResponse { focus: None })
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateRequest {
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    boundary: bool,
    /// Random mode only; defaults to 10.
    count: Option<usize>,
    /// Default `[lo, hi]` for every border input.
    range: Option<(f64, f64)>,
    #[serde(default)]
    ranges: BTreeMap<CellAddress, (f64, f64)>,
}

async fn generate(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<GenerateRequest>, JsonRejection>,
) -> ApiResult<JsonValue> {
    let Json(req) = body?;
    let generation = if req.boundary {
        Generation::Boundary
    } else {
        Generation::Random {
            seed: req.seed,
            count: req.count.unwrap_or(10),
        }
    };
    let mut spec = req.range.map_or_else(InputSpec::default, |(lo, hi)| InputSpec::uniform(lo, hi));
    spec.ranges = req.ranges;
    write(&state, |s| {
        let tests = s.generate_tests(&id, generation, &spec)?;
        Ok(json!({ "fragment": id, "tests": tests }))
    })
    .await
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RunRequest {
    fragment: Option<String>,
}

async fn run(
    State(state): State<Arc<AppState>>,
    body: Result<Json<RunRequest>, JsonRejection>,
) -> ApiResult<JsonValue> {
    let req = match body {
        Ok(Json(req)) => req,
        Err(JsonRejection::MissingJsonContentType(_)) => RunRequest::default(),
        Err(e) => return Err(e.into()),
    };
    read(&state, |s| {
        let report = s.run_tests(req.fragment.as_deref())?;
        Ok(serde_json::to_value(report).expect("report serializes"))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CellRequest {
    value: Value,
}

async fn set_cell(
    State(state): State<Arc<AppState>>,
    UrlPath(addr): UrlPath<String>,
    body: Result<Json<CellRequest>, JsonRejection>,
) -> ApiResult<JsonValue> {
    let addr = parse_address(&addr).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e))?;
    let Json(req) = body?;
    write(&state, |s| {
        let change = s.set_cell(addr, req.value)?;
        let edit = json!({
            "addr": addr,
            "value": change.new,
            "formulaOverwritten": change.formula_overwritten,
        });
        // Values the focused fragment's outputs take after the edit.
        let grid = s.grid()?;
        let outputs: BTreeMap<CellAddress, Value> = grid
            .cells
            .into_iter()
            .filter(|c| c.output)
            .map(|c| (c.addr, c.value))
            .collect();
        Ok(json!({ "edit": edit, "outputs": outputs }))
    })
    .await
}

async fn label(
    State(state): State<Arc<AppState>>,
    body: Result<Json<LabelRecord>, JsonRejection>,
) -> ApiResult<JsonValue> {
    let Json(record) = body?;
    write(&state, |s| {
        s.add_label(record)?;
        Ok(json!({ "labels": s.labels().len() }))
    })
    .await
}

#[derive(Deserialize)]
struct DiagnosisQuery {
    kmax: Option<usize>,
}

async fn diagnosis(
    State(state): State<Arc<AppState>>,
    query: Result<Query<DiagnosisQuery>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<JsonValue> {
    let Query(q) = query.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
    let kmax = q.kmax.unwrap_or(DEFAULT_KMAX);
    read(&state, |s| {
        let report = s.diagnose(kmax)?;
        if let Some(dir) = &state.dir {
            Session::save_diagnosis(dir, &report)?;
        }
        Ok(serde_json::to_value(report).expect("report serializes"))
    })
    .await
}

async fn commit(State(state): State<Arc<AppState>>) -> ApiResult<JsonValue> {
    write(&state, |s| Ok(json!({ "committed": s.commit() }))).await
}
