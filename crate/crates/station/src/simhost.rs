//! Stand-alone simulator process: a [`RobotNode`] behind an impaired link,
//! reachable by one console over a WebSocket at `/robot`.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use gcs_core::harness::TraceEvent;
use gcs_core::sim::{Link, LinkModel, RobotNode, Scenario};
use gcs_core::wire::Envelope;
use tokio::sync::mpsc;

use crate::trace::TraceWriter;

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub listen: SocketAddr,
    pub scenario: Scenario,
    pub link: LinkModel,
    pub tick_rate: f64,
    pub record: Option<PathBuf>,
}

enum SimInput {
    Attach(mpsc::UnboundedSender<Envelope>),
    Detach,
    FromConsole(Envelope),
}

enum Leg {
    ToRobot,
    ToConsole,
}

/// Robot, links and delivery queue, stepped in real time.
pub struct SimEngine {
    node: RobotNode,
    up: Link,
    down: Link,
    queue: BTreeMap<(u64, u64), (f64, Leg, Envelope)>,
    seq: u64,
    console: Option<mpsc::UnboundedSender<Envelope>>,
    recorder: Option<TraceWriter>,
    start: Instant,
}

impl SimEngine {
    pub fn new(opts: &SimOptions) -> Result<Self> {
        opts.link.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        let recorder = match &opts.record {
            Some(p) => Some(TraceWriter::create(p)?),
            None => None,
        };
        let down = LinkModel {
            seed: opts.link.seed.wrapping_add(1),
            ..opts.link
        };
        Ok(Self {
            node: RobotNode::new(opts.scenario.clone()),
            up: Link::new(opts.link),
            down: Link::new(down),
            queue: BTreeMap::new(),
            seq: 0,
            console: None,
            recorder,
            start: Instant::now(),
        })
    }

    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn schedule(&mut self, at: f64, leg: Leg, env: Envelope) {
        self.seq += 1;
        self.queue.insert((at.max(0.0).to_bits(), self.seq), (at, leg, env));
    }

    fn on_console(&mut self, env: Envelope) {
        let now = self.now();
        if let Some(at) = self.down.transmit(now) {
            self.schedule(at, Leg::ToRobot, env);
        }
    }

    fn deliver_due(&mut self, now: f64) {
        while self.queue.values().next().is_some_and(|(t, _, _)| *t <= now) {
            let Some((_, (t, leg, env))) = self.queue.pop_first() else {
                break;
            };
            match leg {
                Leg::ToRobot => self.node.receive(&env, t),
                Leg::ToConsole => {
                    if let Some(r) = &mut self.recorder {
                        let _ = r.write(&TraceEvent::Robot { t, env: env.clone() });
                    }
                    if let Some(tx) = &self.console {
                        let _ = tx.send(env);
                    }
                }
            }
            self.collect();
        }
    }

    fn collect(&mut self) {
        for (sent, env) in self.node.drain() {
            if let Some(at) = self.up.transmit(sent) {
                self.schedule(at, Leg::ToConsole, env);
            }
        }
    }

    pub fn tick(&mut self) {
        let now = self.now();
        self.deliver_due(now);
        self.node.tick(now);
        self.collect();
        self.deliver_due(now);
    }
}

async fn robot_ws(ws: WebSocketUpgrade, State(tx): State<mpsc::UnboundedSender<SimInput>>) -> Response {
    ws.on_upgrade(move |socket| console_session(socket, tx))
}

async fn console_session(socket: WebSocket, tx: mpsc::UnboundedSender<SimInput>) {
    let (mut sink, mut stream) = socket.split();
    let (out_tx, mut out_rx) = mpsc::unbounded_channel::<Envelope>();
    if tx.send(SimInput::Attach(out_tx)).is_err() {
        return;
    }
    tracing::info!("console attached");
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
                    let _ = tx.send(SimInput::FromConsole(env));
                }
                Err(e) => tracing::warn!("dropping malformed envelope: {e}"),
            },
            Message::Close(_) => break,
            _ => {}
        }
    }
    let _ = tx.send(SimInput::Detach);
    writer.abort();
    tracing::info!("console detached");
}

pub async fn run_sim(opts: SimOptions) -> Result<()> {
    let mut engine = SimEngine::new(&opts)?;
    let (tx, mut rx) = mpsc::unbounded_channel::<SimInput>();
    let tick = Duration::from_secs_f64(1.0 / opts.tick_rate);
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(tick);
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        let mut ticks = 0u64;
        loop {
            tokio::select! {
                input = rx.recv() => match input {
                    Some(SimInput::Attach(c)) => engine.console = Some(c),
                    Some(SimInput::Detach) => engine.console = None,
                    Some(SimInput::FromConsole(env)) => engine.on_console(env),
                    None => break,
                },
                _ = interval.tick() => {
                    engine.tick();
                    ticks += 1;
                    if ticks.is_multiple_of(100) {
                        if let Some(r) = &mut engine.recorder {
                            let _ = r.flush();
                        }
                    }
                }
            }
        }
    });
    let app = Router::new().route("/robot", get(robot_ws)).with_state(tx);
    let listener = tokio::net::TcpListener::bind(opts.listen)
        .await
        .with_context(|| format!("binding {}", opts.listen))?;
    tracing::info!("simulator listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
