//! Session registry and per-session tick threads.
//!
//! Each session lives on its own thread. Requests reach it over a channel
//! and are handled between ticks, so no frame mixes values from before and
//! after a command. Telemetry goes to bounded subscriber queues that drop
//! their oldest entry when full; the tick loop never waits on a consumer.

use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use ajtwin_core::simulator::Scenario;
use ajtwin_core::table::TimeSeriesTable;
use ajtwin_core::ModelParams;
use serde_json::{json, Value};

use crate::error::{ApiError, ApiResult};
use crate::session::{RunState, Session, SessionConfig, TickOutput, DEFAULT_EM_ITERATIONS};
use crate::wire::{self, Params};

pub const DEFAULT_QUEUE: usize = 256;
pub const MAX_STEP: u64 = 1_000_000;

/// Bounded telemetry queue for one subscriber.
#[derive(Debug)]
pub struct Subscriber {
    pub session: String,
    capacity: usize,
    inner: Mutex<SubState>,
    ready: Condvar,
}

#[derive(Debug, Default)]
struct SubState {
    queue: VecDeque<Value>,
    dropped: u64,
    closed: bool,
}

impl Subscriber {
    pub fn new(session: String, capacity: usize) -> Self {
        Self { session, capacity: capacity.max(1), inner: Mutex::new(SubState::default()), ready: Condvar::new() }
    }

    /// Enqueues without blocking, evicting the oldest message when full.
    pub fn push(&self, msg: Value) {
        let mut s = self.inner.lock().expect("subscriber lock");
        if s.closed {
            return;
        }
        if s.queue.len() >= self.capacity {
            s.queue.pop_front();
            s.dropped += 1;
        }
        s.queue.push_back(msg);
        self.ready.notify_one();
    }

    /// Waits up to `timeout` for the next message; `None` on timeout or
    /// once closed and drained.
    pub fn pop(&self, timeout: Duration) -> Option<Value> {
        let s = self.inner.lock().expect("subscriber lock");
        let (mut s, _) = self
            .ready
            .wait_timeout_while(s, timeout, |s| s.queue.is_empty() && !s.closed)
            .expect("subscriber lock");
        s.queue.pop_front()
    }

    pub fn close(&self) {
        let mut s = self.inner.lock().expect("subscriber lock");
        s.closed = true;
        self.ready.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.inner.lock().expect("subscriber lock").closed
    }

    pub fn dropped(&self) -> u64 {
        self.inner.lock().expect("subscriber lock").dropped
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("subscriber lock").queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

type Reply = mpsc::Sender<ApiResult<Value>>;

enum Command {
    Call { method: String, params: Value, reply: Reply },
    Subscribe { sub: Arc<Subscriber>, from: Option<u64>, reply: Reply },
    Close { reply: Reply },
}

struct Handle {
    tx: mpsc::Sender<Command>,
    thread: Option<JoinHandle<()>>,
}

/// Registry of live sessions.
pub struct Host {
    sessions: Mutex<BTreeMap<String, Handle>>,
    next_id: AtomicU64,
    /// Parameter bundle used when a request names none.
    pub default_params: ModelParams,
    /// Base for relative paths in requests.
    pub root: PathBuf,
}

impl Default for Host {
    fn default() -> Self {
        Self::new(ModelParams::default(), PathBuf::from("."))
    }
}

impl Host {
    pub fn new(default_params: ModelParams, root: PathBuf) -> Self {
        Self { sessions: Mutex::new(BTreeMap::new()), next_id: AtomicU64::new(1), default_params, root }
    }

    /// Handles one request envelope and returns the response envelope.
    /// `subscribe` is transport-specific and handled by the server.
    pub fn handle(&self, request: &Value) -> Value {
        let id = request.get("id").cloned().unwrap_or(Value::Null);
        let result = match request.get("method").and_then(Value::as_str) {
            None => Err(ApiError::bad_request("missing `method`")),
            Some(method) => {
                let params = request.get("params").cloned().unwrap_or_else(|| json!({}));
                if !params.is_object() {
                    Err(ApiError::bad_request("`params` must be an object"))
                } else {
                    self.call(method, params)
                }
            }
        };
        respond(id, result)
    }

    pub fn call(&self, method: &str, params: Value) -> ApiResult<Value> {
        match method {
            "create_session" => self.create(&params),
            "list_sessions" => {
                let ids: Vec<String> = self.sessions.lock().expect("registry lock").keys().cloned().collect();
                Ok(json!({ "sessions": ids }))
            }
            "close_session" => {
                let id = Params(&params).req_str("session")?.to_string();
                let handle = self
                    .sessions
                    .lock()
                    .expect("registry lock")
                    .remove(&id)
                    .ok_or_else(|| unknown_session(&id))?;
                let (reply, rx) = mpsc::channel();
                let _ = handle.tx.send(Command::Close { reply });
                let out = rx.recv().unwrap_or_else(|_| Ok(json!({ "closed": id })));
                if let Some(t) = handle.thread {
                    let _ = t.join();
                }
                out
            }
            "status" | "set_input" | "step" | "run" | "pause" | "what_if" | "calibrate_now" | "export_session"
            | "probe" => {
                let id = Params(&params).req_str("session")?.to_string();
                let (reply, rx) = mpsc::channel();
                self.send(&id, Command::Call { method: method.to_string(), params, reply })?;
                rx.recv().map_err(|_| ApiError::new("unknown-session", format!("session `{id}` stopped")))?
            }
            "subscribe" => Err(ApiError::bad_request("subscribe needs a streaming connection")),
            other => Err(ApiError::new("unknown-method", format!("unknown method `{other}`"))),
        }
    }

    /// Registers a telemetry queue with a session.
    pub fn subscribe(&self, params: &Value) -> ApiResult<(Arc<Subscriber>, Value)> {
        let p = Params(params);
        let id = p.req_str("session")?.to_string();
        let capacity = p.u64("queue")?.map_or(DEFAULT_QUEUE, |q| q as usize);
        let from = p.u64("from_seq")?;
        let sub = Arc::new(Subscriber::new(id.clone(), capacity));
        let (reply, rx) = mpsc::channel();
        self.send(&id, Command::Subscribe { sub: sub.clone(), from, reply })?;
        let v = rx.recv().map_err(|_| unknown_session(&id))??;
        Ok((sub, v))
    }

    fn send(&self, id: &str, cmd: Command) -> ApiResult<()> {
        let reg = self.sessions.lock().expect("registry lock");
        let h = reg.get(id).ok_or_else(|| unknown_session(id))?;
        h.tx.send(cmd).map_err(|_| unknown_session(id))
    }

    fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    fn create(&self, params: &Value) -> ApiResult<Value> {
        let p = Params(params);
        let mut config = SessionConfig { params: self.default_params.clone(), ..Default::default() };
        if let Some(text) = p.str("params")? {
            config.params = ModelParams::from_config(&ajtwin_core::config::FlatConfig::parse("params", text)?)?;
        } else if let Some(path) = p.str("params_path")? {
            config.params = ModelParams::load(&self.resolve(path))?;
        }
        if let Some(w) = p.u64("window")? {
            config.window = (w as usize).max(1);
        }
        if let Some(b) = p.u64("buffer")? {
            config.buffer = (b as usize).max(1);
        }
        if let Some(th) = p.get("theta") {
            config.theta = wire::parse_theta(th, config.theta)?;
        }
        let id = format!("s{}", self.next_id.fetch_add(1, Ordering::SeqCst));
        let scenario_text = match (p.str("scenario")?, p.str("scenario_path")?) {
            (Some(t), _) => Some(("scenario".to_string(), t.to_string())),
            (None, Some(path)) => {
                let full = self.resolve(path);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| ApiError::bad_request(format!("{}: {e}", full.display())))?;
                Some((full.display().to_string(), text))
            }
            _ => None,
        };
        let session = if let Some((source, text)) = scenario_text {
            let mut scenario = Scenario::parse(&source, &text)?;
            if let Some(seed) = p.u64("seed")? {
                scenario.seed = seed;
            }
            Session::live(id.clone(), scenario, config)?
        } else {
            let table = match (p.str("replay")?, p.str("replay_path")?) {
                (Some(t), _) => TimeSeriesTable::parse(t)?,
                (None, Some(path)) => TimeSeriesTable::read(&self.resolve(path))?,
                _ => {
                    return Err(ApiError::bad_request(
                        "create_session needs one of scenario, scenario_path, replay, replay_path",
                    ))
                }
            };
            let events = match (p.str("events")?, p.str("events_path")?) {
                (Some(t), _) => Some(t.to_string()),
                (None, Some(path)) => Some(
                    std::fs::read_to_string(self.resolve(path)).map_err(|e| ApiError::bad_request(e.to_string()))?,
                ),
                _ => None,
            };
            Session::replay(id.clone(), &table, events.as_deref(), p.f64("dt")?, config)?
        };
        let status = session.status();
        let (tx, rx) = mpsc::channel();
        let thread = std::thread::Builder::new()
            .name(format!("session-{id}"))
            .spawn(move || session_loop(session, rx))
            .map_err(|e| ApiError::new("internal", e.to_string()))?;
        self.sessions.lock().expect("registry lock").insert(id, Handle { tx, thread: Some(thread) });
        Ok(status)
    }
}

impl Drop for Host {
    fn drop(&mut self) {
        let handles: Vec<Handle> =
            std::mem::take(&mut *self.sessions.lock().expect("registry lock")).into_values().collect();
        for h in handles {
            let (reply, _rx) = mpsc::channel();
            let _ = h.tx.send(Command::Close { reply });
            if let Some(t) = h.thread {
                let _ = t.join();
            }
        }
    }
}

fn unknown_session(id: &str) -> ApiError {
    ApiError::new("unknown-session", format!("no session `{id}`"))
}

pub fn respond(id: Value, result: ApiResult<Value>) -> Value {
    match result {
        Ok(v) => json!({ "type": "response", "id": id, "result": v }),
        Err(e) => json!({ "type": "response", "id": id, "error": e.to_json() }),
    }
}

struct Runner {
    session: Session,
    subscribers: Vec<Arc<Subscriber>>,
    deadline: Option<Instant>,
}

impl Runner {
    fn publish(&mut self, out: &TickOutput) {
        self.subscribers.retain(|s| !s.is_closed());
        if self.subscribers.is_empty() {
            return;
        }
        let frame = json!({ "type": "telemetry", "session": self.session.id, "frame": out.frame.to_json() });
        let events: Vec<Value> = out
            .events
            .iter()
            .map(|e| json!({ "type": "event", "session": self.session.id, "event": e.to_json() }))
            .collect();
        for s in &self.subscribers {
            for e in &events {
                s.push(e.clone());
            }
            s.push(frame.clone());
        }
    }

    fn tick(&mut self) -> ApiResult<TickOutput> {
        let out = self.session.tick()?;
        self.publish(&out);
        Ok(out)
    }

    fn interval(&self) -> Option<Duration> {
        match self.session.state {
            RunState::Running { rate } => Some(Duration::from_secs_f64(self.session.dt() / rate)),
            _ => None,
        }
    }

    fn handle(&mut self, method: &str, params: &Value) -> ApiResult<Value> {
        let p = Params(params);
        match method {
            "status" => Ok(self.session.status()),
            "set_input" => {
                let which = p.req_str("which")?;
                let value = p.f64("value")?.ok_or_else(|| ApiError::bad_request("missing `value`"))?;
                self.session.set_input(which, value)
            }
            "step" => {
                let count = p.u64("count")?.unwrap_or(1);
                if count == 0 || count > MAX_STEP {
                    return Err(ApiError::bad_request(format!("count must be in 1..={MAX_STEP}")));
                }
                if matches!(self.session.state, RunState::Running { .. }) {
                    return Err(ApiError::invalid_state("pause the session before stepping"));
                }
                let mut executed = 0u64;
                let mut last = None;
                for _ in 0..count {
                    if self.session.state == RunState::Finished {
                        break;
                    }
                    last = Some(self.tick()?);
                    executed += 1;
                }
                if executed == 0 {
                    return Err(ApiError::invalid_state("session has finished"));
                }
                Ok(json!({
                    "executed": executed,
                    "state": self.session.state.name(),
                    "last": last.map(|o| o.frame.to_json()),
                }))
            }
            "run" => {
                let rate = p.f64("rate")?.unwrap_or(1.0);
                if rate.is_nan() || rate <= 0.0 {
                    return Err(ApiError::bad_request("rate must be positive"));
                }
                if self.session.state == RunState::Finished {
                    return Err(ApiError::invalid_state("session has finished"));
                }
                self.session.state = RunState::Running { rate };
                self.deadline = Some(Instant::now() + self.interval().unwrap_or_default());
                Ok(json!({ "state": "running", "rate": rate }))
            }
            "pause" => {
                if self.session.state != RunState::Finished {
                    self.session.state = RunState::Paused;
                }
                self.deadline = None;
                Ok(json!({ "state": self.session.state.name(), "seq": self.session.next_seq() }))
            }
            "what_if" => {
                let horizon = p.u64("horizon")?.unwrap_or(1) as usize;
                let schedule = match p.get("schedule") {
                    None => Vec::new(),
                    Some(Value::Array(a)) => a.clone(),
                    Some(_) => return Err(ApiError::bad_request("`schedule` must be an array")),
                };
                self.session.what_if(&schedule, horizon)
            }
            "calibrate_now" => {
                let window = p.u64("window")?.ok_or_else(|| ApiError::bad_request("missing `window`"))? as usize;
                let iters = p.u64("max_iterations")?.map_or(DEFAULT_EM_ITERATIONS, |v| v as usize);
                self.session.calibrate_now(window, iters.max(1))
            }
            "export_session" => {
                let (table, log, events) = self.session.export(p.u64("from_seq")?, p.u64("to_seq")?)?;
                Ok(json!({
                    "table": table,
                    "events": log,
                    "params": self.session.model_params().to_config_string(),
                    "event_list": events.iter().map(|e| e.to_json()).collect::<Vec<_>>(),
                }))
            }
            "probe" => {
                let shift = p.get("disturbance").map(wire::parse_output_shift).transpose()?;
                self.session.probe(p.f64("t")?, shift)
            }
            other => Err(ApiError::new("unknown-method", format!("unknown method `{other}`"))),
        }
    }
}

fn session_loop(session: Session, rx: mpsc::Receiver<Command>) {
    let mut r = Runner { session, subscribers: Vec::new(), deadline: None };
    loop {
        let cmd = match r.deadline {
            Some(d) => match rx.recv_timeout(d.saturating_duration_since(Instant::now())) {
                Ok(c) => Some(c),
                Err(RecvTimeoutError::Timeout) => None,
                Err(RecvTimeoutError::Disconnected) => break,
            },
            None => match rx.recv() {
                Ok(c) => Some(c),
                Err(_) => break,
            },
        };
        match cmd {
            None => {
                if r.tick().is_err() || r.session.state == RunState::Finished {
                    r.deadline = None;
                } else if let (Some(d), Some(i)) = (r.deadline, r.interval()) {
                    // Skip ahead instead of bursting if the host fell behind.
                    r.deadline = Some((d + i).max(Instant::now()));
                }
            }
            Some(Command::Call { method, params, reply }) => {
                let _ = reply.send(r.handle(&method, &params));
            }
            Some(Command::Subscribe { sub, from, reply }) => {
                if let Some(from) = from {
                    for f in r.session.frames_since(from) {
                        sub.push(json!({ "type": "telemetry", "session": r.session.id, "frame": f.to_json() }));
                    }
                }
                r.subscribers.push(sub);
                let _ = reply.send(Ok(json!({ "subscribed": r.session.id, "seq": r.session.next_seq() })));
            }
            Some(Command::Close { reply }) => {
                for s in &r.subscribers {
                    s.close();
                }
                let _ = reply.send(Ok(json!({ "closed": r.session.id, "frames": r.session.next_seq() })));
                break;
            }
        }
    }
}
