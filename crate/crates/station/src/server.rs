//! The console process: one engine task owns the [`Console`] and every
//! network task talks to it through a single ordered queue.

use std::collections::{HashMap, VecDeque};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use gcs_core::config::{demo_config, ConsoleConfig};
use gcs_core::console::{Console, ConsoleOptions, MemoryStore, Outgoing, Persistence, Role};
use gcs_core::harness::{Harness, HarnessOptions, TraceEvent};
use gcs_core::sim::{LinkModel, Scenario};
use gcs_core::wire::{ConnId, Envelope};
use serde_json::Value;
use tokio::sync::{mpsc, oneshot};
use tower_http::services::ServeDir;

use crate::config_store::{self, FileStore};
use crate::imaging::frame_png;
use crate::trace::{self, TraceWriter};

/// Where the robot lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RobotTarget {
    EmbeddedSim,
    Remote(String),
}

impl FromStr for RobotTarget {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "embedded-sim" | "embedded" => RobotTarget::EmbeddedSim,
            other => RobotTarget::Remote(other.to_string()),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub config: Option<PathBuf>,
    pub listen: SocketAddr,
    pub robot: RobotTarget,
    pub role: Role,
    pub record: Option<PathBuf>,
    pub replay: Option<PathBuf>,
    pub assets: Option<PathBuf>,
    pub scenario: Scenario,
    pub link: LinkModel,
    pub tick_rate: f64,
}

pub enum Input {
    Connect {
        conn: ConnId,
        role: Role,
        tx: mpsc::UnboundedSender<Envelope>,
    },
    Disconnect(ConnId),
    Client(ConnId, Envelope),
    Robot(Envelope),
    RobotLink(Option<mpsc::UnboundedSender<Envelope>>),
    Frame {
        camera: String,
        reply: oneshot::Sender<Option<Value>>,
    },
}

enum Backend {
    Embedded(Box<Harness>),
    Live {
        console: Box<Console>,
        robot: Option<mpsc::UnboundedSender<Envelope>>,
    },
    Replay {
        console: Box<Console>,
        events: VecDeque<TraceEvent>,
    },
}

/// Owns all mutable console state.
pub struct Engine {
    backend: Backend,
    clients: HashMap<ConnId, mpsc::UnboundedSender<Envelope>>,
    recorder: Option<TraceWriter>,
    start: Instant,
    ticks: u64,
}

fn console_options() -> ConsoleOptions {
    let wall = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    ConsoleOptions {
        wall_offset: wall,
        ..ConsoleOptions::default()
    }
}

/// Loads the configuration named on the command line, creating it from the
/// demo profile when the file does not exist yet.
pub fn load_config(path: Option<&PathBuf>) -> Result<(ConsoleConfig, Box<dyn Persistence>)> {
    match path {
        None => Ok((demo_config(), Box::new(MemoryStore::default()))),
        Some(p) => {
            if !p.exists() {
                config_store::save(p, &demo_config())?;
                tracing::info!("wrote demo configuration to {}", p.display());
            }
            let cfg = config_store::load(p)?;
            Ok((cfg, Box::new(FileStore::new(p.clone()))))
        }
    }
}

impl Engine {
    pub fn new(opts: &ServeOptions) -> Result<Self> {
        let (config, store) = load_config(opts.config.as_ref())?;
        let console = Console::new(config, store, console_options())?;
        let backend = if let Some(path) = &opts.replay {
            let events = trace::read(path)?;
            Backend::Replay {
                console: Box::new(console),
                events: events
                    .into_iter()
                    .filter(|e| matches!(e, TraceEvent::Robot { .. }))
                    .collect(),
            }
        } else {
            match &opts.robot {
                RobotTarget::EmbeddedSim => {
                    opts.link.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
                    let hopts = HarnessOptions {
                        tick_rate: opts.tick_rate,
                        record: opts.record.is_some(),
                        ..HarnessOptions::symmetric(opts.link)
                    };
                    Backend::Embedded(Box::new(Harness::with_console(console, opts.scenario.clone(), hopts)))
                }
                RobotTarget::Remote(_) => Backend::Live {
                    console: Box::new(console),
                    robot: None,
                },
            }
        };
        let recorder = match &opts.record {
            Some(p) => Some(TraceWriter::create(p)?),
            None => None,
        };
        Ok(Self {
            backend,
            clients: HashMap::new(),
            recorder,
            start: Instant::now(),
            ticks: 0,
        })
    }

    pub fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    pub fn console(&self) -> &Console {
        match &self.backend {
            Backend::Embedded(h) => &h.console,
            Backend::Live { console, .. } | Backend::Replay { console, .. } => console,
        }
    }

    fn record(&mut self, e: TraceEvent) {
        if let Some(r) = &mut self.recorder {
            if let Err(err) = r.write(&e) {
                tracing::warn!("trace write failed: {err}");
            }
        }
    }

    fn console_input(&mut self, e: TraceEvent) {
        match &mut self.backend {
            Backend::Embedded(_) => {}
            Backend::Live { console, .. } | Backend::Replay { console, .. } => e.apply(console),
        }
        self.record(e);
    }

    pub fn input(&mut self, input: Input) {
        let t = self.now();
        if let Backend::Embedded(h) = &mut self.backend {
            h.run_until(t);
        }
        match input {
            Input::Connect { conn, role, tx } => {
                self.clients.insert(conn, tx);
                match &mut self.backend {
                    Backend::Embedded(h) => h.connect_remote(conn, role),
                    _ => self.console_input(TraceEvent::Connect { t, conn, role }),
                }
            }
            Input::Disconnect(conn) => {
                self.clients.remove(&conn);
                match &mut self.backend {
                    Backend::Embedded(h) => h.disconnect(conn),
                    _ => self.console_input(TraceEvent::Disconnect { t, conn }),
                }
            }
            Input::Client(conn, env) => match &mut self.backend {
                Backend::Embedded(h) => h.send_now(conn, env),
                _ => self.console_input(TraceEvent::Client { t, conn, env }),
            },
            Input::Robot(env) => {
                if let Backend::Live { .. } = self.backend {
                    self.console_input(TraceEvent::Robot { t, env });
                }
            }
            Input::RobotLink(link) => {
                if let Backend::Live { robot, .. } = &mut self.backend {
                    *robot = link;
                }
            }
            Input::Frame { camera, reply } => {
                let _ = reply.send(self.console().latest_frame(&camera).cloned());
            }
        }
        self.flush();
    }

    pub fn tick(&mut self) {
        let t = self.now();
        match &mut self.backend {
            Backend::Embedded(h) => h.run_until(t),
            Backend::Replay { events, .. } => {
                let mut due = Vec::new();
                while events.front().is_some_and(|e| e.time() <= t) {
                    due.extend(events.pop_front());
                }
                for e in due {
                    self.console_input(e);
                }
                self.console_input(TraceEvent::Tick { t });
            }
            Backend::Live { .. } => self.console_input(TraceEvent::Tick { t }),
        }
        self.flush();
        self.ticks += 1;
        if self.ticks.is_multiple_of(100) {
            if let Some(r) = &mut self.recorder {
                let _ = r.flush();
            }
        }
    }

    fn flush(&mut self) {
        let mut to_clients = Vec::new();
        match &mut self.backend {
            Backend::Embedded(h) => {
                to_clients = h.drain_client_log();
                let trace = h.drain_trace();
                if let Some(r) = &mut self.recorder {
                    if let Err(err) = r.write_all(&trace) {
                        tracing::warn!("trace write failed: {err}");
                    }
                }
            }
            Backend::Live { console, robot } => {
                for out in console.drain() {
                    match out {
                        Outgoing::Client(c, e) => to_clients.push((c, e)),
                        Outgoing::Robot(e) => {
                            if let Some(tx) = robot {
                                let _ = tx.send(e);
                            }
                        }
                    }
                }
            }
            Backend::Replay { console, .. } => {
                for out in console.drain() {
                    if let Outgoing::Client(c, e) = out {
                        to_clients.push((c, e));
                    }
                }
            }
        }
        for (conn, env) in to_clients {
            if let Some(tx) = self.clients.get(&conn) {
                let _ = tx.send(env);
            }
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    pub tx: mpsc::UnboundedSender<Input>,
    pub next_conn: Arc<AtomicU64>,
    pub role: Role,
}

const PLACEHOLDER: &str =
    "<!doctype html><title>gcs</title><p>Console is running. Connect a client to <code>/ws</code>.</p>";

pub fn router(state: AppState, assets: Option<PathBuf>) -> Router {
    let app = Router::new()
        .route("/ws", get(ws_handler))
        .route("/camera/{id}/latest.png", get(frame_handler));
    let app = match assets {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(|| async { Html(PLACEHOLDER) })),
    };
    app.with_state(state)
}

async fn ws_handler(
    ws: WebSocketUpgrade,
    Query(q): Query<HashMap<String, String>>,
    State(state): State<AppState>,
) -> Response {
    // a session may ask for fewer rights than the server default, never more
    let asked = q.get("role").and_then(|r| Role::parse(r));
    let role = match (state.role, asked) {
        (Role::Developer, Some(r)) => r,
        (r, _) => r,
    };
    let conn = state.next_conn.fetch_add(1, Ordering::Relaxed);
    ws.on_upgrade(move |socket| client_session(socket, conn, role, state.tx))
}

async fn client_session(socket: WebSocket, conn: ConnId, role: Role, tx: mpsc::UnboundedSender<Input>) {
    let (mut sink, mut stream) = socket.split();
    let (out_tx, mut out_rx) = mpsc::unbounded_channel::<Envelope>();
    if tx.send(Input::Connect { conn, role, tx: out_tx }).is_err() {
        return;
    }
    let writer = tokio::spawn(async move {
        while let Some(env) = out_rx.recv().await {
            let Ok(bytes) = env.encode() else { continue };
            let text = String::from_utf8(bytes).expect("encoder emits UTF-8");
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    });
    while let Some(Ok(msg)) = stream.next().await {
        match msg {
            Message::Text(text) => match Envelope::decode(text.as_str().as_bytes()) {
                Ok(env) => {
                    let _ = tx.send(Input::Client(conn, env));
                }
                Err(e) => tracing::warn!(conn, "dropping malformed envelope: {e}"),
            },
            Message::Close(_) => break,
            _ => {}
        }
    }
    let _ = tx.send(Input::Disconnect(conn));
    writer.abort();
}

async fn frame_handler(UrlPath(id): UrlPath<String>, State(state): State<AppState>) -> Response {
    let (reply, rx) = oneshot::channel();
    if state.tx.send(Input::Frame { camera: id, reply }).is_err() {
        return StatusCode::SERVICE_UNAVAILABLE.into_response();
    }
    match rx.await {
        Ok(Some(payload)) => match frame_png(&payload) {
            Ok(png) => ([(header::CONTENT_TYPE, "image/png")], png).into_response(),
            Err(_) => StatusCode::UNPROCESSABLE_ENTITY.into_response(),
        },
        Ok(None) => StatusCode::NOT_FOUND.into_response(),
        Err(_) => StatusCode::SERVICE_UNAVAILABLE.into_response(),
    }
}

/// Runs the engine until the input queue closes.
pub async fn run_engine(mut engine: Engine, mut rx: mpsc::UnboundedReceiver<Input>, tick_rate: f64) {
    let mut interval = tokio::time::interval(Duration::from_secs_f64(1.0 / tick_rate));
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
    loop {
        tokio::select! {
            input = rx.recv() => match input {
                Some(i) => engine.input(i),
                None => break,
            },
            _ = interval.tick() => engine.tick(),
        }
    }
}

/// Keeps a connection to a remote simulator or robot bridge open.
pub async fn robot_connector(addr: String, tx: mpsc::UnboundedSender<Input>) {
    use tokio_tungstenite::tungstenite::Message as WsMessage;
    let url = if addr.starts_with("ws://") {
        addr
    } else {
        format!("ws://{addr}/robot")
    };
    loop {
        match tokio_tungstenite::connect_async(url.as_str()).await {
            Ok((ws, _)) => {
                tracing::info!("robot link up: {url}");
                let (mut sink, mut stream) = ws.split();
                let (rtx, mut rrx) = mpsc::unbounded_channel::<Envelope>();
                if tx.send(Input::RobotLink(Some(rtx))).is_err() {
                    return;
                }
                let writer = tokio::spawn(async move {
                    while let Some(env) = rrx.recv().await {
                        let Ok(bytes) = env.encode() else { continue };
                        let text = String::from_utf8(bytes).expect("encoder emits UTF-8");
                        if sink.send(WsMessage::text(text)).await.is_err() {
                            break;
                        }
                    }
                });
                while let Some(Ok(msg)) = stream.next().await {
                    if let WsMessage::Text(text) = msg {
                        match Envelope::decode(text.as_str().as_bytes()) {
                            Ok(env) => {
                                let _ = tx.send(Input::Robot(env));
                            }
                            Err(e) => tracing::warn!("dropping malformed robot envelope: {e}"),
                        }
                    }
                }
                writer.abort();
                let _ = tx.send(Input::RobotLink(None));
                tracing::warn!("robot link down");
            }
            Err(e) => tracing::debug!("robot link connect failed: {e}"),
        }
        tokio::time::sleep(Duration::from_secs(1)).await;
    }
}

/// Binds, spawns the engine and serves until interrupted.
pub async fn serve(opts: ServeOptions) -> Result<()> {
    let engine = Engine::new(&opts)?;
    let (tx, rx) = mpsc::unbounded_channel();
    let tick_rate = opts.tick_rate;
    tokio::spawn(run_engine(engine, rx, tick_rate));
    if let (RobotTarget::Remote(addr), None) = (&opts.robot, &opts.replay) {
        tokio::spawn(robot_connector(addr.clone(), tx.clone()));
    }
    let state = AppState {
        tx,
        next_conn: Arc::new(AtomicU64::new(1)),
        role: opts.role,
    };
    let listener = tokio::net::TcpListener::bind(opts.listen)
        .await
        .with_context(|| format!("binding {}", opts.listen))?;
    tracing::info!("console listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state, opts.assets.clone()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
