//! In-process discrete-event loop: console, simulated robot, an impaired
//! link in each direction and any number of client models.
//!
//! Events are ordered by (time, insertion sequence) and the console and
//! robot are ticked at `k / tick_rate`, so a run is a pure function of the
//! scenario, the link seeds and the scheduled client traffic. Everything the
//! console consumes is recorded as a [`TraceEvent`] and can be fed to a fresh
//! console with [`replay`].

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::client::ClientModel;
use crate::config::ConsoleConfig;
use crate::console::{Console, ConsoleOptions, MemoryStore, Outgoing, Role};
use crate::sim::{Link, LinkModel, RobotNode, Scenario};
use crate::wire::{ConnId, Envelope};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarnessOptions {
    pub tick_rate: f64,
    /// Robot to console.
    pub uplink: LinkModel,
    /// Console to robot.
    pub downlink: LinkModel,
    pub console: ConsoleOptions,
    /// Record console inputs.
    pub record: bool,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        Self {
            tick_rate: 100.0,
            uplink: LinkModel::default(),
            downlink: LinkModel {
                seed: 1,
                ..LinkModel::default()
            },
            console: ConsoleOptions::default(),
            record: true,
        }
    }
}

impl HarnessOptions {
    /// Same model on both directions, distinct seeds.
    pub fn symmetric(model: LinkModel) -> Self {
        Self {
            uplink: model,
            downlink: LinkModel {
                seed: model.seed.wrapping_add(1),
                ..model
            },
            ..Self::default()
        }
    }
}

/// One input to the console, with its console time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum TraceEvent {
    Connect { t: f64, conn: ConnId, role: Role },
    Disconnect { t: f64, conn: ConnId },
    Client { t: f64, conn: ConnId, env: Envelope },
    Robot { t: f64, env: Envelope },
    Tick { t: f64 },
}

impl TraceEvent {
    pub fn time(&self) -> f64 {
        match self {
            TraceEvent::Connect { t, .. }
            | TraceEvent::Disconnect { t, .. }
            | TraceEvent::Client { t, .. }
            | TraceEvent::Robot { t, .. }
            | TraceEvent::Tick { t } => *t,
        }
    }

    /// Applies the event to a console.
    pub fn apply(&self, console: &mut Console) {
        match self {
            TraceEvent::Connect { t, conn, role } => console.connect(*conn, *role, *t),
            TraceEvent::Disconnect { conn, .. } => console.disconnect(*conn),
            TraceEvent::Client { t, conn, env } => console.handle_client(*conn, env.clone(), *t),
            TraceEvent::Robot { t, env } => console.handle_robot(env.clone(), *t),
            TraceEvent::Tick { t } => console.tick(*t),
        }
    }
}

#[derive(Debug, Clone)]
enum Event {
    Client(ConnId, Envelope),
    ToRobot(Envelope),
    ToConsole(Envelope),
    HardwareEstop(alloc::string::String, bool),
}

/// Non-negative times order like their bit patterns.
fn key(t: f64) -> u64 {
    t.max(0.0).to_bits()
}

pub struct Harness {
    pub console: Console,
    pub robot: RobotNode,
    pub clients: BTreeMap<ConnId, ClientModel>,
    /// Every envelope delivered to each client, with its time.
    pub client_log: BTreeMap<ConnId, Vec<(f64, Envelope)>>,
    /// Envelopes delivered to the robot, with their time.
    pub robot_log: Vec<(f64, Envelope)>,
    pub trace: Vec<TraceEvent>,
    opts: HarnessOptions,
    up: Link,
    down: Link,
    queue: BTreeMap<(u64, u64), (f64, Event)>,
    seq: u64,
    ticks: u64,
    now: f64,
}

impl Harness {
    pub fn new(
        config: ConsoleConfig,
        scenario: Scenario,
        opts: HarnessOptions,
    ) -> Result<Self, crate::config::ConfigError> {
        let console = Console::new(config, Box::new(MemoryStore::default()), opts.console)?;
        Ok(Self::with_console(console, scenario, opts))
    }

    /// Wraps an existing console, for hosts that supply their own storage.
    pub fn with_console(console: Console, scenario: Scenario, opts: HarnessOptions) -> Self {
        Self {
            console,
            robot: RobotNode::new(scenario),
            clients: BTreeMap::new(),
            client_log: BTreeMap::new(),
            robot_log: Vec::new(),
            trace: Vec::new(),
            up: Link::new(opts.uplink),
            down: Link::new(opts.downlink),
            opts,
            queue: BTreeMap::new(),
            seq: 0,
            ticks: 0,
            now: 0.0,
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    fn record(&mut self, e: TraceEvent) {
        if self.opts.record {
            self.trace.push(e);
        }
    }

    fn schedule(&mut self, at: f64, ev: Event) {
        self.seq += 1;
        let at = at.max(self.now);
        self.queue.insert((key(at), self.seq), (at, ev));
    }

    /// Attaches a client model and connects it immediately.
    pub fn connect(&mut self, conn: ConnId, role: Role) {
        self.clients.insert(conn, ClientModel::new());
        self.client_log.entry(conn).or_default();
        let t = self.now;
        self.record(TraceEvent::Connect { t, conn, role });
        self.console.connect(conn, role, t);
        self.route();
    }

    /// Connects a client that lives outside the harness; its traffic is
    /// only collected in `client_log`.
    pub fn connect_remote(&mut self, conn: ConnId, role: Role) {
        self.client_log.entry(conn).or_default();
        let t = self.now;
        self.record(TraceEvent::Connect { t, conn, role });
        self.console.connect(conn, role, t);
        self.route();
    }

    /// Takes everything delivered to clients since the last call.
    pub fn drain_client_log(&mut self) -> Vec<(ConnId, Envelope)> {
        let mut out = Vec::new();
        for (conn, log) in &mut self.client_log {
            out.extend(log.drain(..).map(|(_, e)| (*conn, e)));
        }
        out
    }

    /// Takes the trace recorded since the last call.
    pub fn drain_trace(&mut self) -> Vec<TraceEvent> {
        core::mem::take(&mut self.trace)
    }

    /// Connects and subscribes to `channels`.
    pub fn connect_subscribed(&mut self, conn: ConnId, role: Role, channels: &[&str]) {
        self.connect(conn, role);
        for c in channels {
            self.send_now(conn, Envelope::subscribe(c));
        }
    }

    pub fn disconnect(&mut self, conn: ConnId) {
        self.clients.remove(&conn);
        self.client_log.remove(&conn);
        let t = self.now;
        self.record(TraceEvent::Disconnect { t, conn });
        self.console.disconnect(conn);
        self.route();
    }

    /// Schedules a client envelope; client links are ideal.
    pub fn send_at(&mut self, at: f64, conn: ConnId, env: Envelope) {
        self.schedule(at, Event::Client(conn, env));
    }

    /// Delivers a client envelope at the current time.
    pub fn send_now(&mut self, conn: ConnId, env: Envelope) {
        let t = self.now;
        self.deliver_client(t, conn, env);
    }

    /// Schedules a hardware e-stop change on the robot.
    pub fn hardware_estop_at(&mut self, at: f64, name: &str, pressed: bool) {
        self.schedule(at, Event::HardwareEstop(name.into(), pressed));
    }

    fn deliver_client(&mut self, t: f64, conn: ConnId, env: Envelope) {
        self.record(TraceEvent::Client {
            t,
            conn,
            env: env.clone(),
        });
        self.console.handle_client(conn, env, t);
        self.route();
    }

    fn next_tick(&self) -> f64 {
        self.ticks as f64 / self.opts.tick_rate
    }

    /// Runs every event up to and including `until`.
    pub fn run_until(&mut self, until: f64) {
        loop {
            let tick_at = self.next_tick();
            let ev_at = self.queue.values().next().map(|(t, _)| *t);
            let take_event = matches!(ev_at, Some(e) if e < tick_at);
            if take_event {
                let t = ev_at.unwrap_or(tick_at);
                if t > until {
                    break;
                }
                let (_, (t, ev)) = self.queue.pop_first().expect("queue not empty");
                self.now = t;
                self.handle(t, ev);
            } else {
                if tick_at > until {
                    break;
                }
                self.now = tick_at;
                self.ticks += 1;
                self.record(TraceEvent::Tick { t: tick_at });
                self.console.tick(tick_at);
                self.robot.tick(tick_at);
                self.route();
            }
        }
        self.now = self.now.max(until);
    }

    /// Runs for `seconds` more.
    pub fn run_for(&mut self, seconds: f64) {
        let until = self.now + seconds;
        self.run_until(until);
    }

    fn handle(&mut self, t: f64, ev: Event) {
        match ev {
            Event::Client(conn, env) => self.deliver_client(t, conn, env),
            Event::ToRobot(env) => {
                self.robot_log.push((t, env.clone()));
                self.robot.receive(&env, t);
                self.route();
            }
            Event::ToConsole(env) => {
                self.record(TraceEvent::Robot { t, env: env.clone() });
                self.console.handle_robot(env, t);
                self.route();
            }
            Event::HardwareEstop(name, pressed) => {
                self.robot.set_hardware_estop(&name, pressed, t);
                self.route();
            }
        }
    }

    fn route(&mut self) {
        let now = self.now;
        for out in self.console.drain() {
            match out {
                Outgoing::Client(conn, env) => {
                    if let Some(m) = self.clients.get_mut(&conn) {
                        m.apply(&env);
                    }
                    self.client_log.entry(conn).or_default().push((now, env));
                }
                Outgoing::Robot(env) => {
                    if let Some(at) = self.down.transmit(now) {
                        self.schedule(at, Event::ToRobot(env));
                    }
                }
            }
        }
        for (sent, env) in self.robot.drain() {
            if let Some(at) = self.up.transmit(sent) {
                self.schedule(at, Event::ToConsole(env));
            }
        }
    }

    pub fn client(&self, conn: ConnId) -> &ClientModel {
        &self.clients[&conn]
    }

    /// Last reply to request `id` delivered to `conn`.
    pub fn reply(&self, conn: ConnId, id: &str) -> Option<&Envelope> {
        self.clients.get(&conn)?.reply(id)
    }
}

/// Feeds a recorded trace to `console`, calling `observe` after each event.
pub fn replay(console: &mut Console, trace: &[TraceEvent], mut observe: impl FnMut(usize, &TraceEvent, Vec<Outgoing>)) {
    for (i, ev) in trace.iter().enumerate() {
        ev.apply(console);
        let out = console.drain();
        observe(i, ev, out);
    }
}
