//! HTTP wire protocol.
//!
//! Center service endpoints (protocol version `"1"`, JSON bodies, field
//! elements as decimal strings):
//!
//! | method | path                              | request            | response          |
//! |--------|-----------------------------------|--------------------|-------------------|
//! | POST   | `/v1/elections`                   | `open`             | `status`          |
//! | POST   | `/v1/elections/{id}/shares`       | `submit`           | `ack`             |
//! | POST   | `/v1/elections/{id}/finalize`     | `finalize-request` | `record`          |
//! | GET    | `/v1/elections/{id}/record`       |                    | `record`          |
//! | GET    | `/v1/elections/{id}/status`       |                    | `status`          |
//!
//! Failures come back as an `error` message with a stable code:
//! `duplicate-ballot` (409), `phase` (409), `already-open` (409),
//! `overflow` (409), `unknown-election` (404), `bad-request` (400),
//! `version` (400), `internal` (500).
//!
//! A `submit` carries one share and an opaque ballot id, never a candidate
//! or another center's share. The [`Terminal`] fans a ballot's shares out to
//! all centers concurrently and retries idempotently by ballot id. The
//! [`Gateway`] wraps a terminal for browser clients, so evaluation points
//! never leave officer-managed hardware.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use futures::future::join_all;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::ballot::{encode_vote, parse_residue, ElectionConfig, PublicConfig};
use crate::center::{CenterKey, CenterState, CenterStatus, FinalizationRecord, Phase};
use crate::shamir::{split, CoefficientSource, ShareBatch};
use crate::tally::{compute_result, turnout_check, verify_with_config, AuditNote, TallyReport};
use crate::{Error, Result};

pub const PROTOCOL_VERSION: &str = "1";

/// Every message exchanged with a collection center.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WireMessage {
    Open {
        version: String,
        election_id: String,
        config: PublicConfig,
    },
    Submit {
        version: String,
        election_id: String,
        ballot_id: String,
        value: String,
    },
    Ack {
        version: String,
        election_id: String,
        center_id: u32,
        ballot_id: String,
        status: String,
        received_count: u64,
    },
    FinalizeRequest {
        version: String,
        election_id: String,
    },
    Record {
        version: String,
        election_id: String,
        record: FinalizationRecord,
    },
    Status {
        version: String,
        election_id: String,
        center_id: u32,
        phase: Phase,
        received_count: u64,
    },
    Error {
        version: String,
        election_id: String,
        error: String,
        message: String,
    },
}

impl WireMessage {
    pub fn version(&self) -> &str {
        match self {
            WireMessage::Open { version, .. }
            | WireMessage::Submit { version, .. }
            | WireMessage::Ack { version, .. }
            | WireMessage::FinalizeRequest { version, .. }
            | WireMessage::Record { version, .. }
            | WireMessage::Status { version, .. }
            | WireMessage::Error { version, .. } => version,
        }
    }

    pub fn election_id(&self) -> &str {
        match self {
            WireMessage::Open { election_id, .. }
            | WireMessage::Submit { election_id, .. }
            | WireMessage::Ack { election_id, .. }
            | WireMessage::FinalizeRequest { election_id, .. }
            | WireMessage::Record { election_id, .. }
            | WireMessage::Status { election_id, .. }
            | WireMessage::Error { election_id, .. } => election_id,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire message serializes")
    }

    fn status(status: &CenterStatus) -> Self {
        WireMessage::Status {
            version: PROTOCOL_VERSION.into(),
            election_id: status.election_id.clone().unwrap_or_default(),
            center_id: status.center_id,
            phase: status.phase,
            received_count: status.received_count,
        }
    }
}

/// Stable wire error code and HTTP status for a protocol error.
pub fn error_code(err: &Error) -> (StatusCode, &'static str) {
    match err {
        Error::DuplicateBallot(_) => (StatusCode::CONFLICT, "duplicate-ballot"),
        Error::Phase(_) => (StatusCode::CONFLICT, "phase"),
        Error::AlreadyOpen(_) => (StatusCode::CONFLICT, "already-open"),
        Error::CapacityExceeded(_) => (StatusCode::CONFLICT, "overflow"),
        Error::UnknownElection(_) => (StatusCode::NOT_FOUND, "unknown-election"),
        Error::Io(_) | Error::JournalIntegrity { .. } => {
            (StatusCode::INTERNAL_SERVER_ERROR, "internal")
        }
        _ => (StatusCode::BAD_REQUEST, "bad-request"),
    }
}

fn error_message(election_id: &str, code: &str, message: String) -> WireMessage {
    WireMessage::Error {
        version: PROTOCOL_VERSION.into(),
        election_id: election_id.to_string(),
        error: code.to_string(),
        message,
    }
}

struct Reply(StatusCode, WireMessage);

impl IntoResponse for Reply {
    fn into_response(self) -> Response {
        (
            self.0,
            [(axum::http::header::CONTENT_TYPE, "application/json")],
            self.1.to_json(),
        )
            .into_response()
    }
}

fn err_reply(election_id: &str, err: Error) -> Reply {
    let (status, code) = error_code(&err);
    Reply(status, error_message(election_id, code, err.to_string()))
}

/// A collection center behind HTTP: its state plus its signing key.
pub struct CenterService {
    state: Mutex<CenterState>,
    key: CenterKey,
}

impl CenterService {
    pub fn new(state: CenterState, key: CenterKey) -> Arc<Self> {
        Arc::new(Self {
            state: Mutex::new(state),
            key,
        })
    }

    pub fn status(&self) -> CenterStatus {
        self.state.lock().unwrap().status()
    }

    pub fn share_sum(&self) -> Option<u64> {
        self.state.lock().unwrap().share_sum().map(|s| s.residue())
    }

    /// Runs `f` on the state under the lock, off the async workers since
    /// it may block on a journal fsync.
    async fn with_state<T: Send + 'static>(
        self: &Arc<Self>,
        f: impl FnOnce(&mut CenterState, &CenterKey) -> Result<T> + Send + 'static,
    ) -> Result<T> {
        let svc = Arc::clone(self);
        tokio::task::spawn_blocking(move || {
            let mut state = svc.state.lock().unwrap();
            f(&mut state, &svc.key)
        })
        .await
        .map_err(|e| Error::Transport(format!("worker failed: {e}")))?
    }

    fn check_election(&self, id: &str) -> Result<()> {
        let state = self.state.lock().unwrap();
        match state.election_id() {
            Some(current) if current == id => Ok(()),
            _ => Err(Error::UnknownElection(id.to_string())),
        }
    }
}

#[allow(clippy::result_large_err)]
fn parse_message(body: &[u8], path_id: &str) -> std::result::Result<WireMessage, Reply> {
    let msg: WireMessage = serde_json::from_slice(body).map_err(|e| {
        Reply(
            StatusCode::BAD_REQUEST,
            error_message(path_id, "bad-request", format!("malformed message: {e}")),
        )
    })?;
    if msg.version() != PROTOCOL_VERSION {
        return Err(Reply(
            StatusCode::BAD_REQUEST,
            error_message(path_id, "version", format!("unsupported protocol version {}", msg.version())),
        ));
    }
    Ok(msg)
}

async fn open_handler(State(svc): State<Arc<CenterService>>, body: Bytes) -> Reply {
    let msg = match parse_message(&body, "") {
        Ok(m) => m,
        Err(r) => return r,
    };
    let WireMessage::Open { election_id, config, .. } = msg else {
        return Reply(StatusCode::BAD_REQUEST, error_message("", "bad-request", "expected an open message".into()));
    };
    if config.election_id != election_id {
        return err_reply(&election_id, Error::Malformed("config is for a different election".into()));
    }
    let id = election_id.clone();
    match svc
        .with_state(move |s, _| {
            s.open_election(config)?;
            Ok(s.status())
        })
        .await
    {
        Ok(status) => Reply(StatusCode::OK, WireMessage::status(&status)),
        Err(e) => err_reply(&id, e),
    }
}

async fn submit_handler(
    State(svc): State<Arc<CenterService>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Reply {
    let msg = match parse_message(&body, &id) {
        Ok(m) => m,
        Err(r) => return r,
    };
    let WireMessage::Submit { election_id, ballot_id, value, .. } = msg else {
        return err_reply(&id, Error::Malformed("expected a submit message".into()));
    };
    if election_id != id {
        return err_reply(&id, Error::Malformed("election id in body and path differ".into()));
    }
    if let Err(e) = svc.check_election(&id) {
        return err_reply(&id, e);
    }
    let result = svc
        .with_state(move |s, _| {
            let prime = s.config().expect("open center has a config").prime;
            let value = parse_residue(&value, prime)?;
            s.submit_share(&ballot_id, value)
        })
        .await;
    match result {
        Ok(ack) => Reply(
            StatusCode::OK,
            WireMessage::Ack {
                version: PROTOCOL_VERSION.into(),
                election_id: id,
                center_id: ack.center_id,
                ballot_id: ack.ballot_id,
                status: "accepted".into(),
                received_count: ack.received_count,
            },
        ),
        Err(e) => err_reply(&id, e),
    }
}

async fn finalize_handler(
    State(svc): State<Arc<CenterService>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Reply {
    if !body.is_empty() {
        match parse_message(&body, &id) {
            Ok(WireMessage::FinalizeRequest { election_id, .. }) if election_id == id => {}
            Ok(_) => return err_reply(&id, Error::Malformed("expected a finalize-request message".into())),
            Err(r) => return r,
        }
    }
    if let Err(e) = svc.check_election(&id) {
        return err_reply(&id, e);
    }
    match svc.with_state(|s, key| s.finalize(key)).await {
        Ok(record) => Reply(
            StatusCode::OK,
            WireMessage::Record {
                version: PROTOCOL_VERSION.into(),
                election_id: id,
                record,
            },
        ),
        Err(e) => err_reply(&id, e),
    }
}

async fn record_handler(State(svc): State<Arc<CenterService>>, Path(id): Path<String>) -> Reply {
    if let Err(e) = svc.check_election(&id) {
        return err_reply(&id, e);
    }
    let record = svc.state.lock().unwrap().record().cloned();
    match record {
        Some(record) => Reply(
            StatusCode::OK,
            WireMessage::Record {
                version: PROTOCOL_VERSION.into(),
                election_id: id,
                record,
            },
        ),
        None => err_reply(&id, Error::Phase("center has not finalized".into())),
    }
}

async fn status_handler(State(svc): State<Arc<CenterService>>, Path(id): Path<String>) -> Reply {
    if let Err(e) = svc.check_election(&id) {
        return err_reply(&id, e);
    }
    Reply(StatusCode::OK, WireMessage::status(&svc.status()))
}

pub fn center_router(svc: Arc<CenterService>) -> Router {
    Router::new()
        .route("/v1/elections", post(open_handler))
        .route("/v1/elections/{id}/shares", post(submit_handler))
        .route("/v1/elections/{id}/finalize", post(finalize_handler))
        .route("/v1/elections/{id}/record", get(record_handler))
        .route("/v1/elections/{id}/status", get(status_handler))
        .with_state(svc)
}

/// A running HTTP service; dropping the handle does not stop it.
pub struct ServiceHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections and waits for in-flight requests.
    pub async fn shutdown(mut self) -> Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.task
            .await
            .map_err(|e| Error::Transport(format!("server task failed: {e}")))??;
        Ok(())
    }

    /// Waits until the server exits on its own.
    pub async fn join(self) -> Result<()> {
        let _keep = self.shutdown;
        self.task
            .await
            .map_err(|e| Error::Transport(format!("server task failed: {e}")))??;
        Ok(())
    }
}

async fn spawn_router(router: Router, addr: SocketAddr) -> Result<ServiceHandle> {
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|e| Error::Transport(format!("cannot bind {addr}: {e}")))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, router)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    Ok(ServiceHandle {
        addr,
        shutdown: Some(tx),
        task,
    })
}

/// Binds `addr` and serves `state` until shut down.
pub async fn serve_center(state: CenterState, key: CenterKey, addr: SocketAddr) -> Result<ServiceHandle> {
    serve_center_service(CenterService::new(state, key), addr).await
}

pub async fn serve_center_service(svc: Arc<CenterService>, addr: SocketAddr) -> Result<ServiceHandle> {
    spawn_router(center_router(svc), addr).await
}

/// Records every message body a client sends or receives.
#[derive(Debug, Clone, Default)]
pub struct MessageTap(Arc<Mutex<Vec<String>>>);

impl MessageTap {
    pub fn messages(&self) -> Vec<String> {
        self.0.lock().unwrap().clone()
    }

    fn push(&self, body: &str) {
        self.0.lock().unwrap().push(body.to_string());
    }
}

/// Failure talking to a center.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallError {
    /// No usable response; worth retrying.
    Unreachable(String),
    /// The center answered with an error message.
    Refused { status: u16, code: String, message: String },
}

impl std::fmt::Display for CallError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CallError::Unreachable(m) => write!(f, "unreachable: {m}"),
            CallError::Refused { status, code, message } => write!(f, "{status} {code}: {message}"),
        }
    }
}

impl From<CallError> for Error {
    fn from(e: CallError) -> Self {
        match e {
            CallError::Refused { ref code, ref message, .. } => match code.as_str() {
                "duplicate-ballot" => Error::DuplicateBallot(message.clone()),
                "phase" | "already-open" | "overflow" => Error::Phase(message.clone()),
                "unknown-election" => Error::UnknownElection(message.clone()),
                _ => Error::Transport(e.to_string()),
            },
            CallError::Unreachable(m) => Error::Transport(m),
        }
    }
}

/// Bounded exponential backoff for unreachable centers.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 4,
            initial_delay: Duration::from_millis(100),
            max_delay: Duration::from_secs(2),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            attempts: 1,
            ..Self::default()
        }
    }
}

/// Client for one center's endpoints.
#[derive(Debug, Clone)]
pub struct CenterClient {
    http: reqwest::Client,
    base: String,
    tap: Option<MessageTap>,
}

impl CenterClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(5))
            .connect_timeout(Duration::from_secs(2))
            .build()
            .expect("http client builds");
        Self {
            http,
            base: base_url.into().trim_end_matches('/').to_string(),
            tap: None,
        }
    }

    pub fn with_tap(mut self, tap: MessageTap) -> Self {
        self.tap = Some(tap);
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn call(&self, method: reqwest::Method, path: &str, body: Option<&WireMessage>) -> std::result::Result<WireMessage, CallError> {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(msg) = body {
            let text = msg.to_json();
            if let Some(tap) = &self.tap {
                tap.push(&text);
            }
            req = req.header(reqwest::header::CONTENT_TYPE, "application/json").body(text);
        }
        let resp = req.send().await.map_err(|e| CallError::Unreachable(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().await.map_err(|e| CallError::Unreachable(e.to_string()))?;
        if let Some(tap) = &self.tap {
            tap.push(&text);
        }
        let msg: WireMessage = serde_json::from_str(&text).map_err(|e| {
            if status.is_server_error() {
                CallError::Unreachable(format!("{status}: {text}"))
            } else {
                CallError::Refused {
                    status: status.as_u16(),
                    code: "bad-response".into(),
                    message: e.to_string(),
                }
            }
        })?;
        match msg {
            WireMessage::Error { error, message, .. } if status.is_server_error() => {
                Err(CallError::Unreachable(format!("{error}: {message}")))
            }
            WireMessage::Error { error, message, .. } => Err(CallError::Refused {
                status: status.as_u16(),
                code: error,
                message,
            }),
            other if status.is_success() => Ok(other),
            other => Err(CallError::Refused {
                status: status.as_u16(),
                code: "bad-response".into(),
                message: other.to_json(),
            }),
        }
    }

    pub async fn open(&self, config: &PublicConfig) -> std::result::Result<WireMessage, CallError> {
        let msg = WireMessage::Open {
            version: PROTOCOL_VERSION.into(),
            election_id: config.election_id.clone(),
            config: config.clone(),
        };
        self.call(reqwest::Method::POST, "/v1/elections", Some(&msg)).await
    }

    pub async fn submit(&self, election_id: &str, ballot_id: &str, value: u64) -> std::result::Result<WireMessage, CallError> {
        let msg = WireMessage::Submit {
            version: PROTOCOL_VERSION.into(),
            election_id: election_id.to_string(),
            ballot_id: ballot_id.to_string(),
            value: value.to_string(),
        };
        self.call(reqwest::Method::POST, &format!("/v1/elections/{election_id}/shares"), Some(&msg))
            .await
    }

    pub async fn finalize(&self, election_id: &str) -> std::result::Result<FinalizationRecord, CallError> {
        let msg = WireMessage::FinalizeRequest {
            version: PROTOCOL_VERSION.into(),
            election_id: election_id.to_string(),
        };
        match self
            .call(reqwest::Method::POST, &format!("/v1/elections/{election_id}/finalize"), Some(&msg))
            .await?
        {
            WireMessage::Record { record, .. } => Ok(record),
            other => Err(unexpected(other)),
        }
    }

    pub async fn record(&self, election_id: &str) -> std::result::Result<FinalizationRecord, CallError> {
        match self
            .call(reqwest::Method::GET, &format!("/v1/elections/{election_id}/record"), None)
            .await?
        {
            WireMessage::Record { record, .. } => Ok(record),
            other => Err(unexpected(other)),
        }
    }

    pub async fn status(&self, election_id: &str) -> std::result::Result<WireMessage, CallError> {
        self.call(reqwest::Method::GET, &format!("/v1/elections/{election_id}/status"), None)
            .await
    }
}

fn unexpected(msg: WireMessage) -> CallError {
    CallError::Refused {
        status: 200,
        code: "bad-response".into(),
        message: format!("unexpected message {}", msg.to_json()),
    }
}

/// A fresh random ballot identifier (128 bits, hex).
pub fn mint_ballot_id<R: RngCore + ?Sized>(rng: &mut R) -> String {
    let mut bytes = [0u8; 16];
    rng.fill_bytes(&mut bytes);
    hex::encode(bytes)
}

/// A ballot already split into shares, kept so that a retry resends the
/// very same shares under the same ballot id.
#[derive(Clone)]
pub struct PreparedBallot {
    ballot_id: String,
    candidate: usize,
    shares: ShareBatch,
}

impl std::fmt::Debug for PreparedBallot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PreparedBallot")
            .field("ballot_id", &self.ballot_id)
            .finish_non_exhaustive()
    }
}

impl PreparedBallot {
    pub fn ballot_id(&self) -> &str {
        &self.ballot_id
    }

    pub fn share_values(&self) -> Vec<u64> {
        self.shares.values()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum DeliveryStatus {
    Acknowledged,
    Failed { reason: String, retryable: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CenterDelivery {
    pub center_id: u32,
    #[serde(flatten)]
    pub status: DeliveryStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Overall {
    Registered,
    Partial,
    Rejected,
}

/// What happened to one ballot at every center.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CastOutcome {
    pub ballot_id: String,
    pub centers: Vec<CenterDelivery>,
    pub overall: Overall,
}

impl CastOutcome {
    fn from_deliveries(ballot_id: String, centers: Vec<CenterDelivery>) -> Self {
        let acked = centers
            .iter()
            .filter(|c| c.status == DeliveryStatus::Acknowledged)
            .count();
        let any_retryable = centers
            .iter()
            .any(|c| matches!(c.status, DeliveryStatus::Failed { retryable: true, .. }));
        let overall = if acked == centers.len() {
            Overall::Registered
        } else if acked == 0 && !any_retryable {
            Overall::Rejected
        } else {
            Overall::Partial
        };
        Self {
            ballot_id,
            centers,
            overall,
        }
    }

    pub fn is_registered(&self) -> bool {
        self.overall == Overall::Registered
    }
}

/// Voting-terminal client: encodes, splits, and fans shares out.
///
/// The terminal needs the evaluation points to evaluate each ballot
/// polynomial, so it is provisioned with the officer secrets.
#[derive(Debug, Clone)]
pub struct Terminal {
    config: ElectionConfig,
    centers: Vec<CenterClient>,
    retry: RetryPolicy,
}

impl Terminal {
    pub fn new(config: ElectionConfig, centers: Vec<CenterClient>) -> Result<Self> {
        if centers.len() != config.public().center_count {
            return Err(Error::InvalidConfig(format!(
                "{} center endpoints for {} centers",
                centers.len(),
                config.public().center_count
            )));
        }
        Ok(Self {
            config,
            centers,
            retry: RetryPolicy::default(),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn config(&self) -> &ElectionConfig {
        &self.config
    }

    pub fn centers(&self) -> &[CenterClient] {
        &self.centers
    }

    /// Encodes and splits a vote locally. Nothing is sent.
    pub fn prepare<S: CoefficientSource + ?Sized>(
        &self,
        candidate: usize,
        ballot_id: String,
        randomness: &mut S,
    ) -> Result<PreparedBallot> {
        let encoded = encode_vote(self.config.public(), candidate)?;
        let shares = split(encoded.value(), self.config.policy(), randomness)?;
        Ok(PreparedBallot {
            ballot_id,
            candidate,
            shares,
        })
    }

    async fn deliver_one(&self, index: usize, ballot: &PreparedBallot) -> CenterDelivery {
        let center_id = index as u32 + 1;
        let client = &self.centers[index];
        let value = ballot
            .shares
            .for_center(center_id)
            .expect("batch has a share per center")
            .value
            .residue();
        let election_id = &self.config.public().election_id;
        let mut delay = self.retry.initial_delay;
        let mut last = String::new();
        for attempt in 0..self.retry.attempts.max(1) {
            if attempt > 0 {
                tokio::time::sleep(delay).await;
                delay = (delay * 2).min(self.retry.max_delay);
            }
            match client.submit(election_id, &ballot.ballot_id, value).await {
                Ok(_) => {
                    return CenterDelivery {
                        center_id,
                        status: DeliveryStatus::Acknowledged,
                    }
                }
                // an earlier attempt got through and only the ack was lost
                Err(CallError::Refused { code, .. }) if code == "duplicate-ballot" => {
                    return CenterDelivery {
                        center_id,
                        status: DeliveryStatus::Acknowledged,
                    }
                }
                Err(CallError::Refused { code, message, .. }) => {
                    return CenterDelivery {
                        center_id,
                        status: DeliveryStatus::Failed {
                            reason: format!("{code}: {message}"),
                            retryable: false,
                        },
                    }
                }
                Err(CallError::Unreachable(m)) => {
                    tracing::debug!(center_id, attempt, "center unreachable: {m}");
                    last = m;
                }
            }
        }
        CenterDelivery {
            center_id,
            status: DeliveryStatus::Failed {
                reason: format!("unreachable: {last}"),
                retryable: true,
            },
        }
    }

    /// Sends every share concurrently. Safe to call again with the same
    /// ballot: centers that already counted it answer `duplicate-ballot`,
    /// which counts as acknowledged.
    pub async fn deliver(&self, ballot: &PreparedBallot) -> CastOutcome {
        let deliveries = join_all((0..self.centers.len()).map(|i| self.deliver_one(i, ballot))).await;
        CastOutcome::from_deliveries(ballot.ballot_id.clone(), deliveries)
    }

    /// Prepares and delivers a ballot with a freshly minted id.
    pub async fn cast_ballot<R: RngCore + ?Sized>(
        &self,
        candidate: usize,
        rng: &mut R,
    ) -> Result<(PreparedBallot, CastOutcome)> {
        let ballot_id = mint_ballot_id(rng);
        let ballot = self.prepare(candidate, ballot_id, rng)?;
        let outcome = self.deliver(&ballot).await;
        Ok((ballot, outcome))
    }

    pub async fn open_all(&self) -> Vec<std::result::Result<WireMessage, CallError>> {
        let config = self.config.public();
        join_all(self.centers.iter().map(|c| c.open(config))).await
    }
}

/// Fetches the finalization record from every reachable center.
/// Fewer than `threshold` records is an error.
pub async fn collect_records(
    centers: &[CenterClient],
    election_id: &str,
    threshold: usize,
) -> Result<Vec<FinalizationRecord>> {
    let results = join_all(centers.iter().map(|c| c.record(election_id))).await;
    let mut records = Vec::new();
    for (client, r) in centers.iter().zip(results) {
        match r {
            Ok(record) => records.push(record),
            Err(e) => tracing::warn!(center = client.base_url(), "no record: {e}"),
        }
    }
    if records.len() < threshold {
        return Err(Error::InsufficientShares {
            needed: threshold,
            got: records.len(),
        });
    }
    Ok(records)
}

/// Finalizes every reachable center.
pub async fn finalize_all(
    centers: &[CenterClient],
    election_id: &str,
) -> Vec<std::result::Result<FinalizationRecord, CallError>> {
    join_all(centers.iter().map(|c| c.finalize(election_id))).await
}

/// Body of `POST /v1/terminal/cast`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CastRequest {
    pub candidate_index: usize,
    /// Supplied when retrying a partially registered ballot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ballot_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordBadge {
    Missing,
    Verified,
    IntegrityFailure,
    AuthenticityFailure,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CenterOverview {
    pub center_id: u32,
    pub endpoint: String,
    pub reachable: bool,
    pub phase: Option<Phase>,
    pub received_count: Option<u64>,
    pub record: RecordBadge,
}

/// Body of `GET /v1/official/overview`. The tally is present only once at
/// least `threshold` records verify.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overview {
    pub version: String,
    pub election_id: String,
    pub candidates: Vec<String>,
    pub threshold: usize,
    pub centers: Vec<CenterOverview>,
    pub verified_records: usize,
    pub tally: Option<TallyReport>,
    pub tally_error: Option<String>,
    pub audit: Vec<AuditNote>,
}

/// Terminal gateway for the browser UI.
pub struct Gateway {
    terminal: Terminal,
    pending: Mutex<HashMap<String, PreparedBallot>>,
    rng: Mutex<ChaCha20Rng>,
}

impl Gateway {
    pub fn new(terminal: Terminal) -> Arc<Self> {
        Arc::new(Self {
            terminal,
            pending: Mutex::new(HashMap::new()),
            rng: Mutex::new(ChaCha20Rng::from_entropy()),
        })
    }

    /// Casts a ballot, or re-delivers the pending ballot with the given id.
    pub async fn cast(&self, req: CastRequest) -> Result<CastOutcome> {
        let existing = req
            .ballot_id
            .as_ref()
            .and_then(|id| self.pending.lock().unwrap().get(id).cloned());
        let ballot = match existing {
            Some(b) if b.candidate != req.candidate_index => {
                return Err(Error::DuplicateBallot(format!(
                    "{} is pending for a different selection",
                    b.ballot_id
                )))
            }
            Some(b) => b,
            None => {
                let mut rng = self.rng.lock().unwrap();
                let id = match req.ballot_id {
                    Some(id) => id,
                    None => mint_ballot_id(&mut *rng),
                };
                self.terminal.prepare(req.candidate_index, id, &mut *rng)?
            }
        };
        self.pending
            .lock()
            .unwrap()
            .insert(ballot.ballot_id.clone(), ballot.clone());
        let outcome = self.terminal.deliver(&ballot).await;
        if outcome.is_registered() {
            self.pending.lock().unwrap().remove(&ballot.ballot_id);
        }
        Ok(outcome)
    }

    pub async fn overview(&self) -> Overview {
        let config = self.terminal.config();
        let public = config.public();
        let id = &public.election_id;
        let clients = self.terminal.centers();
        let statuses = join_all(clients.iter().map(|c| c.status(id))).await;
        let records = join_all(clients.iter().map(|c| c.record(id))).await;
        let mut centers = Vec::new();
        let mut verified = Vec::new();
        for (i, (status, record)) in statuses.into_iter().zip(records).enumerate() {
            let (reachable, phase, received_count) = match status {
                Ok(WireMessage::Status { phase, received_count, .. }) => (true, Some(phase), Some(received_count)),
                Ok(_) => (true, None, None),
                Err(_) => (false, None, None),
            };
            let badge = match record {
                Err(_) => RecordBadge::Missing,
                Ok(r) if r.center_id != i as u32 + 1 => RecordBadge::Invalid,
                Ok(r) => match verify_with_config(&r, public) {
                    Ok(v) => {
                        verified.push(v);
                        RecordBadge::Verified
                    }
                    Err(Error::Integrity { .. }) => RecordBadge::IntegrityFailure,
                    Err(Error::Authenticity { .. }) => RecordBadge::AuthenticityFailure,
                    Err(_) => RecordBadge::Invalid,
                },
            };
            centers.push(CenterOverview {
                center_id: i as u32 + 1,
                endpoint: clients[i].base_url().to_string(),
                reachable,
                phase,
                received_count,
                record: badge,
            });
        }
        let (tally, tally_error, audit) = if verified.len() >= public.threshold {
            match compute_result(&verified, config) {
                Ok(report) => {
                    let audit = turnout_check(&report);
                    (Some(report), None, audit)
                }
                Err(e) => (None, Some(e.to_string()), Vec::new()),
            }
        } else {
            (
                None,
                Some(format!(
                    "{} of {} required verified records",
                    verified.len(),
                    public.threshold
                )),
                Vec::new(),
            )
        };
        Overview {
            version: PROTOCOL_VERSION.into(),
            election_id: id.clone(),
            candidates: public.candidates.clone(),
            threshold: public.threshold,
            centers,
            verified_records: verified.len(),
            tally,
            tally_error,
            audit,
        }
    }
}

fn json_response<T: Serialize>(status: StatusCode, body: &T) -> Response {
    (
        status,
        [(axum::http::header::CONTENT_TYPE, "application/json")],
        serde_json::to_string(body).expect("response serializes"),
    )
        .into_response()
}

async fn gateway_cast(State(gw): State<Arc<Gateway>>, body: Bytes) -> Response {
    let id = gw.terminal.config().public().election_id.clone();
    let req: CastRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return err_reply(&id, Error::Malformed(e.to_string())).into_response(),
    };
    match gw.cast(req).await {
        Ok(outcome) => json_response(StatusCode::OK, &outcome),
        Err(e @ Error::InvalidCandidate { .. }) => {
            Reply(StatusCode::BAD_REQUEST, error_message(&id, "invalid-candidate", e.to_string())).into_response()
        }
        Err(e) => err_reply(&id, e).into_response(),
    }
}

async fn gateway_overview(State(gw): State<Arc<Gateway>>) -> Response {
    json_response(StatusCode::OK, &gw.overview().await)
}

pub fn gateway_router(gw: Arc<Gateway>) -> Router {
    Router::new()
        .route("/v1/terminal/cast", post(gateway_cast))
        .route("/v1/official/overview", get(gateway_overview))
        .with_state(gw)
}

pub async fn serve_gateway(gw: Arc<Gateway>, addr: SocketAddr) -> Result<ServiceHandle> {
    spawn_router(gateway_router(gw), addr).await
}
