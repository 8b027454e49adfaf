//! Message envelope, canonical text encoding and channel routing.
//!
//! Every link (UI to console, console to robot) carries [`Envelope`]s encoded
//! as a single JSON object with lexicographically ordered keys:
//!
//! ```text
//! {"channel":"robot/battery","id":null,"kind":"publish","payload":{"percentage":1.0},"stamp_mono":3.5,"stamp_wall":1700000000.25,"v":1}
//! ```
//!
//! The encoding is canonical: two envelopes encode to the same bytes iff they
//! compare equal. Negative zero is folded into positive zero before encoding
//! and floats are printed in shortest round-trip form.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

/// Protocol version written into every envelope.
pub const PROTOCOL_VERSION: u64 = 1;

/// Default time a service request may stay unanswered, seconds.
pub const DEFAULT_SERVICE_TIMEOUT: f64 = 5.0;

/// Identifier of one connection at a gateway.
pub type ConnId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Publish,
    Subscribe,
    Unsubscribe,
    ServiceRequest,
    ServiceResponse,
    Error,
}

impl Kind {
    pub const ALL: [Kind; 6] = [
        Kind::Publish,
        Kind::Subscribe,
        Kind::Unsubscribe,
        Kind::ServiceRequest,
        Kind::ServiceResponse,
        Kind::Error,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Publish => "publish",
            Kind::Subscribe => "subscribe",
            Kind::Unsubscribe => "unsubscribe",
            Kind::ServiceRequest => "service_request",
            Kind::ServiceResponse => "service_response",
            Kind::Error => "error",
        }
    }

    pub fn parse(s: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("invalid envelope: {0}")]
    Validation(String),
    #[error("malformed envelope: {0}")]
    Parse(String),
    #[error("unknown envelope kind `{0}`")]
    Protocol(String),
    #[error("unsupported protocol version {0}")]
    Version(String),
}

/// Error codes carried in the payload of [`Kind::Error`] envelopes and in
/// failed service responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorCode {
    ServiceUnavailable,
    Timeout,
    Validation,
    NotFound,
    Busy,
    State,
    Permission,
    Duplicate,
    Cycle,
    Feedback,
    Unreachable,
    Config,
    Io,
    Protocol,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::ServiceUnavailable => "ServiceUnavailable",
            ErrorCode::Timeout => "Timeout",
            ErrorCode::Validation => "ValidationError",
            ErrorCode::NotFound => "NotFound",
            ErrorCode::Busy => "BusyError",
            ErrorCode::State => "StateError",
            ErrorCode::Permission => "PermissionError",
            ErrorCode::Duplicate => "DuplicateError",
            ErrorCode::Cycle => "CycleError",
            ErrorCode::Feedback => "FeedbackError",
            ErrorCode::Unreachable => "UnreachableError",
            ErrorCode::Config => "ConfigError",
            ErrorCode::Io => "IoError",
            ErrorCode::Protocol => "ProtocolError",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The single wire-message unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub kind: Kind,
    pub channel: String,
    /// Correlation token; required for service requests and responses.
    pub id: Option<String>,
    /// Seconds since the epoch on the sender's wall clock.
    pub stamp_wall: f64,
    /// Sender's monotonic clock, seconds.
    pub stamp_mono: f64,
    pub payload: Value,
}

impl Envelope {
    fn with(kind: Kind, channel: &str, id: Option<String>, payload: Value) -> Self {
        Self {
            kind,
            channel: channel.to_string(),
            id,
            stamp_wall: 0.0,
            stamp_mono: 0.0,
            payload,
        }
    }

    pub fn publish(channel: &str, payload: Value) -> Self {
        Self::with(Kind::Publish, channel, None, payload)
    }

    pub fn subscribe(channel: &str) -> Self {
        Self::with(Kind::Subscribe, channel, None, Value::Null)
    }

    pub fn unsubscribe(channel: &str) -> Self {
        Self::with(Kind::Unsubscribe, channel, None, Value::Null)
    }

    pub fn request(channel: &str, id: impl Into<String>, payload: Value) -> Self {
        Self::with(Kind::ServiceRequest, channel, Some(id.into()), payload)
    }

    /// Response answering `request`, reusing its channel and id.
    pub fn response_to(request: &Envelope, payload: Value) -> Self {
        Self::with(Kind::ServiceResponse, &request.channel, request.id.clone(), payload)
    }

    /// Error envelope answering `request`.
    pub fn error_to(request: &Envelope, code: ErrorCode, message: &str) -> Self {
        Self::with(
            Kind::Error,
            &request.channel,
            request.id.clone(),
            error_payload(code, message),
        )
    }

    pub fn stamped(mut self, wall: f64, mono: f64) -> Self {
        self.stamp_wall = wall;
        self.stamp_mono = mono;
        self
    }

    /// Checks the type invariants.
    pub fn validate(&self) -> Result<(), WireError> {
        validate_channel(&self.channel)?;
        if !self.stamp_wall.is_finite() || !self.stamp_mono.is_finite() {
            return Err(WireError::Validation("stamps must be finite".into()));
        }
        match self.kind {
            Kind::ServiceRequest | Kind::ServiceResponse if self.id.is_none() => {
                return Err(WireError::Validation(alloc::format!("{} requires an id", self.kind)));
            }
            Kind::Subscribe | Kind::Unsubscribe if !self.payload.is_null() => {
                return Err(WireError::Validation(alloc::format!(
                    "{} carries a null payload",
                    self.kind
                )));
            }
            _ => {}
        }
        Ok(())
    }

    /// Canonical text serialization.
    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        self.validate()?;
        let mut map = Map::new();
        map.insert("channel".into(), Value::String(self.channel.clone()));
        map.insert("id".into(), self.id.clone().map(Value::String).unwrap_or(Value::Null));
        map.insert("kind".into(), Value::String(self.kind.as_str().into()));
        map.insert("payload".into(), canonical_value(&self.payload));
        map.insert("stamp_mono".into(), float_value(self.stamp_mono));
        map.insert("stamp_wall".into(), float_value(self.stamp_wall));
        map.insert("v".into(), Value::from(PROTOCOL_VERSION));
        serde_json::to_vec(&Value::Object(map)).map_err(|e| WireError::Validation(e.to_string()))
    }

    /// Parses one envelope. Never panics on malformed input.
    pub fn decode(bytes: &[u8]) -> Result<Envelope, WireError> {
        let value: Value = serde_json::from_slice(bytes).map_err(|e| WireError::Parse(e.to_string()))?;
        let Value::Object(mut map) = value else {
            return Err(WireError::Parse("envelope is not an object".into()));
        };

        let kind = match map.remove("kind") {
            Some(Value::String(s)) => Kind::parse(&s).ok_or(WireError::Protocol(s))?,
            Some(_) => return Err(WireError::Parse("`kind` must be a string".into())),
            None => return Err(WireError::Parse("missing `kind`".into())),
        };
        match map.remove("v") {
            Some(Value::Number(n)) if n.as_u64() == Some(PROTOCOL_VERSION) => {}
            Some(other) => return Err(WireError::Version(other.to_string())),
            None => return Err(WireError::Parse("missing `v`".into())),
        }
        let channel = match map.remove("channel") {
            Some(Value::String(s)) => s,
            _ => return Err(WireError::Parse("`channel` must be a string".into())),
        };
        let id = match map.remove("id") {
            Some(Value::String(s)) => Some(s),
            Some(Value::Null) => None,
            _ => return Err(WireError::Parse("`id` must be a string or null".into())),
        };
        let stamp = |map: &mut Map<String, Value>, key: &str| match map.remove(key) {
            Some(Value::Number(n)) => n
                .as_f64()
                .ok_or_else(|| WireError::Parse(alloc::format!("`{key}` out of range"))),
            _ => Err(WireError::Parse(alloc::format!("`{key}` must be a number"))),
        };
        let stamp_mono = stamp(&mut map, "stamp_mono")?;
        let stamp_wall = stamp(&mut map, "stamp_wall")?;
        let payload = map
            .remove("payload")
            .ok_or_else(|| WireError::Parse("missing `payload`".into()))?;
        if let Some(extra) = map.keys().next() {
            return Err(WireError::Parse(alloc::format!("unexpected key `{extra}`")));
        }

        let env = Envelope {
            kind,
            channel,
            id,
            stamp_wall,
            stamp_mono,
            payload,
        };
        env.validate()?;
        Ok(env)
    }

    /// `(code, message)` of an error envelope or a failed service response.
    pub fn error_info(&self) -> Option<(String, String)> {
        let code = self.payload.get("code")?.as_str()?;
        let message = self.payload.get("message").and_then(Value::as_str).unwrap_or("");
        Some((code.to_string(), message.to_string()))
    }
}

/// `{"code": ..., "message": ...}`
pub fn error_payload(code: ErrorCode, message: &str) -> Value {
    let mut m = Map::new();
    m.insert("code".into(), Value::String(code.as_str().into()));
    m.insert("message".into(), Value::String(message.into()));
    Value::Object(m)
}

/// Channel names match `[a-z0-9_/]+` without a leading or trailing `/`.
pub fn validate_channel(channel: &str) -> Result<(), WireError> {
    if channel.is_empty() {
        return Err(WireError::Validation("empty channel name".into()));
    }
    if channel.starts_with('/') || channel.ends_with('/') {
        return Err(WireError::Validation(alloc::format!(
            "channel `{channel}` has a leading or trailing `/`"
        )));
    }
    if let Some(c) = channel
        .chars()
        .find(|c| !(c.is_ascii_lowercase() || c.is_ascii_digit() || *c == '_' || *c == '/'))
    {
        return Err(WireError::Validation(alloc::format!(
            "channel `{channel}` contains `{c}`"
        )));
    }
    Ok(())
}

fn float_value(f: f64) -> Value {
    let f = if f == 0.0 { 0.0 } else { f };
    Number::from_f64(f).map(Value::Number).unwrap_or(Value::Null)
}

/// Copy of `v` with every negative-zero float replaced by `0.0`.
fn canonical_value(v: &Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => float_value(n.as_f64().unwrap_or(0.0)),
        Value::Array(a) => Value::Array(a.iter().map(canonical_value).collect()),
        Value::Object(o) => Value::Object(o.iter().map(|(k, v)| (k.clone(), canonical_value(v))).collect()),
        other => other.clone(),
    }
}

/// Result of routing one envelope.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Route {
    pub destinations: BTreeSet<ConnId>,
    /// Error envelope to hand back to the sender, if any.
    pub reply: Option<Envelope>,
}

#[derive(Debug, Clone, Default)]
pub struct ChannelRegistry {
    subscriptions: BTreeMap<String, BTreeSet<ConnId>>,
    services: BTreeMap<String, ConnId>,
    pending: BTreeMap<String, ConnId>,
}

impl ChannelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn subscribe(&mut self, conn: ConnId, channel: &str) {
        self.subscriptions.entry(channel.to_string()).or_default().insert(conn);
    }

    pub fn unsubscribe(&mut self, conn: ConnId, channel: &str) {
        if let Some(set) = self.subscriptions.get_mut(channel) {
            set.remove(&conn);
            if set.is_empty() {
                self.subscriptions.remove(channel);
            }
        }
    }

    pub fn subscribers(&self, channel: &str) -> BTreeSet<ConnId> {
        self.subscriptions.get(channel).cloned().unwrap_or_default()
    }

    pub fn is_subscribed(&self, conn: ConnId, channel: &str) -> bool {
        self.subscriptions.get(channel).is_some_and(|s| s.contains(&conn))
    }

    /// Channels `conn` is subscribed to.
    pub fn subscriptions_of(&self, conn: ConnId) -> Vec<String> {
        self.subscriptions
            .iter()
            .filter(|(_, s)| s.contains(&conn))
            .map(|(c, _)| c.clone())
            .collect()
    }

    /// Registers `conn` as the provider of a service channel. A channel has at
    /// most one provider.
    pub fn provide(&mut self, channel: &str, conn: ConnId) -> Result<(), WireError> {
        validate_channel(channel)?;
        match self.services.get(channel) {
            Some(existing) if *existing != conn => Err(WireError::Validation(alloc::format!(
                "service `{channel}` already provided by connection {existing}"
            ))),
            _ => {
                self.services.insert(channel.to_string(), conn);
                Ok(())
            }
        }
    }

    pub fn provider(&self, channel: &str) -> Option<ConnId> {
        self.services.get(channel).copied()
    }

    /// Removes every subscription, service and pending request of `conn`.
    pub fn drop_connection(&mut self, conn: ConnId) {
        for set in self.subscriptions.values_mut() {
            set.remove(&conn);
        }
        self.subscriptions.retain(|_, s| !s.is_empty());
        self.services.retain(|_, c| *c != conn);
        self.pending.retain(|_, c| *c != conn);
    }

    /// Destinations of `env` sent by `from`. Subscribe and unsubscribe update
    /// the registry; service requests remember their requester so that the
    /// matching response can be routed back.
    pub fn route(&mut self, env: &Envelope, from: ConnId) -> Route {
        let mut route = Route::default();
        match env.kind {
            Kind::Publish => route.destinations = self.subscribers(&env.channel),
            Kind::Subscribe => self.subscribe(from, &env.channel),
            Kind::Unsubscribe => self.unsubscribe(from, &env.channel),
            Kind::ServiceRequest => {
                let id = env.id.clone().unwrap_or_default();
                match self.provider(&env.channel) {
                    None => {
                        route.reply = Some(Envelope::error_to(
                            env,
                            ErrorCode::ServiceUnavailable,
                            &alloc::format!("no provider for `{}`", env.channel),
                        ));
                    }
                    Some(_) if self.pending.contains_key(&id) => {
                        route.reply = Some(Envelope::error_to(
                            env,
                            ErrorCode::Protocol,
                            &alloc::format!("request id `{id}` already in flight"),
                        ));
                    }
                    Some(provider) => {
                        self.pending.insert(id, from);
                        route.destinations.insert(provider);
                    }
                }
            }
            Kind::ServiceResponse | Kind::Error => {
                if let Some(requester) = env.id.as_ref().and_then(|id| self.pending.remove(id)) {
                    route.destinations.insert(requester);
                }
            }
        }
        route
    }

    /// Forgets an unanswered request, e.g. after its timeout lapsed.
    pub fn forget_request(&mut self, id: &str) -> Option<ConnId> {
        self.pending.remove(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn publish_round_trips() {
        let e = Envelope::publish("robot/battery", json!({"percentage": 1.0})).stamped(10.5, 2.0);
        let bytes = e.encode().unwrap();
        assert_eq!(Envelope::decode(&bytes).unwrap(), e);
    }

    #[test]
    fn subscribe_encodes_explicit_null_payload() {
        let bytes = Envelope::subscribe("robot/mode").encode().unwrap();
        let text = core::str::from_utf8(&bytes).unwrap();
        assert!(text.contains("\"payload\":null"), "{text}");
    }

    #[test]
    fn canonical_text_layout() {
        let e = Envelope::publish("a/b", json!({"z": 1, "a": [true, null]})).stamped(1.0, 0.5);
        let text = alloc::string::String::from_utf8(e.encode().unwrap()).unwrap();
        assert_eq!(
            text,
            r#"{"channel":"a/b","id":null,"kind":"publish","payload":{"a":[true,null],"z":1},"stamp_mono":0.5,"stamp_wall":1.0,"v":1}"#
        );
    }

    #[test]
    fn uppercase_channel_rejected() {
        let e = Envelope::publish("Robot/Battery", Value::Null);
        assert!(matches!(e.encode(), Err(WireError::Validation(_))));
    }

    #[test]
    fn channel_rules() {
        for ok in ["a", "robot/sensor/co2", "camera/front_1/frame"] {
            validate_channel(ok).unwrap();
        }
        for bad in ["", "/a", "a/", "a b", "a-b", "A"] {
            assert!(validate_channel(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn truncated_input_is_parse_error() {
        let bytes = Envelope::publish("a/b", json!({"x": 1})).encode().unwrap();
        for cut in 0..bytes.len() {
            assert!(
                matches!(Envelope::decode(&bytes[..cut]), Err(WireError::Parse(_))),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn unknown_kind_is_protocol_error() {
        let text =
            br#"{"channel":"a","id":null,"kind":"gossip","payload":null,"stamp_mono":0.0,"stamp_wall":0.0,"v":1}"#;
        assert_eq!(Envelope::decode(text), Err(WireError::Protocol("gossip".into())));
    }

    #[test]
    fn wrong_version_rejected() {
        let text =
            br#"{"channel":"a","id":null,"kind":"publish","payload":null,"stamp_mono":0.0,"stamp_wall":0.0,"v":2}"#;
        assert!(matches!(Envelope::decode(text), Err(WireError::Version(_))));
    }

    #[test]
    fn request_requires_id() {
        let mut e = Envelope::request("svc", "1", Value::Null);
        e.id = None;
        assert!(e.encode().is_err());
    }

    #[test]
    fn negative_zero_is_canonicalized() {
        let a = Envelope::publish("a", json!({"x": -0.0})).stamped(-0.0, 0.0);
        let b = Envelope::publish("a", json!({"x": 0.0}));
        assert_eq!(a, b);
        assert_eq!(a.encode().unwrap(), b.encode().unwrap());
    }

    #[test]
    fn publish_routes_to_subscribers() {
        let mut reg = ChannelRegistry::new();
        reg.route(&Envelope::subscribe("a/b"), 3);
        reg.route(&Envelope::subscribe("a/b"), 7);
        reg.route(&Envelope::subscribe("a/b"), 7);
        let r = reg.route(&Envelope::publish("a/b", Value::Null), 1);
        assert_eq!(r.destinations.into_iter().collect::<Vec<_>>(), [3, 7]);
        assert!(r.reply.is_none());
    }

    #[test]
    fn publish_without_subscribers_is_silent() {
        let mut reg = ChannelRegistry::new();
        let r = reg.route(&Envelope::publish("a/b", Value::Null), 1);
        assert!(r.destinations.is_empty() && r.reply.is_none());
    }

    #[test]
    fn request_without_provider_gets_service_unavailable() {
        let mut reg = ChannelRegistry::new();
        let req = Envelope::request("nobody/home", "r1", Value::Null);
        let r = reg.route(&req, 4);
        assert!(r.destinations.is_empty());
        let reply = r.reply.unwrap();
        assert_eq!(reply.kind, Kind::Error);
        assert_eq!(reply.id.as_deref(), Some("r1"));
        assert_eq!(reply.error_info().unwrap().0, "ServiceUnavailable");
    }

    #[test]
    fn response_returns_to_requester() {
        let mut reg = ChannelRegistry::new();
        reg.provide("arm/unfold", 9).unwrap();
        assert!(reg.provide("arm/unfold", 2).is_err());
        let req = Envelope::request("arm/unfold", "q", Value::Null);
        assert_eq!(reg.route(&req, 5).destinations.into_iter().collect::<Vec<_>>(), [9]);
        let resp = Envelope::response_to(&req, json!({"success": true}));
        assert_eq!(reg.route(&resp, 9).destinations.into_iter().collect::<Vec<_>>(), [5]);
        // answered once only
        assert!(reg.route(&resp, 9).destinations.is_empty());
    }

    #[test]
    fn dropping_a_connection_clears_its_state() {
        let mut reg = ChannelRegistry::new();
        reg.subscribe(1, "x");
        reg.provide("svc", 1).unwrap();
        reg.drop_connection(1);
        assert!(reg.subscribers("x").is_empty());
        assert_eq!(reg.provider("svc"), None);
    }
}
