use gcs_core::action::ExecId;
use gcs_core::action::{ActionId, ActionKind, ActionRegistry, ActionSpec, ExecEnv, ExecState, Executor};
use gcs_core::mission::{Command, ConfirmationRequest, Mission, MissionControl, Task, TaskRunner};
use gcs_core::snapshot::{estimate_homography, target_corners, PanelDims, Quad};
use gcs_core::wire::{validate_channel, Envelope, Kind};
use proptest::prelude::*;
use serde_json::Value;

fn leaf() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::from),
        any::<u64>().prop_map(Value::from),
        any::<f64>()
            .prop_filter("finite", |f| f.is_finite())
            .prop_map(|f| Value::from(if f == 0.0 { 0.0 } else { f })),
        ".{0,10}".prop_map(Value::from),
    ]
}

fn payload() -> impl Strategy<Value = Value> {
    leaf().prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
            prop::collection::btree_map(".{0,6}", inner, 0..4).prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

fn envelope() -> impl Strategy<Value = Envelope> {
    (
        0usize..6,
        "[a-z0-9_]{1,6}(/[a-z0-9_]{1,6}){0,2}",
        proptest::option::of(".{0,8}"),
        -1e9f64..1e9,
        0f64..1e6,
        payload(),
    )
        .prop_map(|(k, channel, id, wall, mono, payload)| {
            let kind = Kind::ALL[k];
            let id = match kind {
                Kind::ServiceRequest | Kind::ServiceResponse => Some(id.unwrap_or_default()),
                _ => id,
            };
            let payload = match kind {
                Kind::Subscribe | Kind::Unsubscribe => Value::Null,
                _ => payload,
            };
            Envelope {
                kind,
                channel,
                id,
                stamp_wall: wall,
                stamp_mono: mono,
                payload,
            }
        })
}

/// Reference channel rule written independently of the implementation.
fn channel_ok(s: &str) -> bool {
    !s.is_empty()
        && !s.starts_with('/')
        && !s.ends_with('/')
        && s.bytes().all(|b| matches!(b, b'a'..=b'z' | b'0'..=b'9' | b'_' | b'/'))
}

#[derive(Default)]
struct Counter(u64);

impl TaskRunner for Counter {
    fn run_task(&mut self, _: &ActionId, _: Value) -> Result<ExecId, String> {
        self.0 += 1;
        Ok(ExecId(self.0))
    }
    fn cancel_task(&mut self, _: ExecId) {}
    fn deliver_answer(&mut self, _: usize, _: &ConfirmationRequest, _: &str) {}
}

proptest! {
    #[test]
    fn envelope_round_trip(e in envelope()) {
        let bytes = e.encode().unwrap();
        prop_assert_eq!(Envelope::decode(&bytes).unwrap(), e);
    }

    #[test]
    fn decode_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let _ = Envelope::decode(&bytes);
    }

    #[test]
    fn channel_rule(s in "[a-z/_0-9A-Z. -]{0,12}") {
        prop_assert_eq!(validate_channel(&s).is_ok(), channel_ok(&s));
    }

    #[test]
    fn toggle_index_stays_in_range(n in 1usize..5, runs in 0usize..20) {
        let mut reg = ActionRegistry::new();
        let mut children = Vec::new();
        for i in 0..n {
            let id = format!("c{i}");
            reg.register(ActionSpec::new(&id, &id, ActionKind::Script { script: "true".into() })).unwrap();
            children.push(ActionId::new(&id));
        }
        reg.register(ActionSpec::new("t", "t", ActionKind::Toggle { children, feedback_channel: None, state_extractor: None })).unwrap();
        let mut ex = Executor::new();
        let t = ActionId::new("t");
        for k in 0..runs {
            let id = ex.execute(&reg, &t, Value::Null, &ExecEnv::default(), k as f64).unwrap();
            prop_assert_eq!(ex.record(id).unwrap().state, ExecState::Succeeded);
            prop_assert!(ex.toggle_index(&t) < n);
        }
        prop_assert_eq!(ex.toggle_index(&t), runs % n);
    }

    #[test]
    fn mission_index_in_bounds(len in 1usize..5, cmds in prop::collection::vec(0u8..7, 0..60)) {
        let mut reg = ActionRegistry::new();
        reg.register(ActionSpec::new("a", "a", ActionKind::Script { script: "true".into() })).unwrap();
        let mission = Mission {
            name: "m".into(),
            tasks: (0..len).map(|i| Task { label: format!("t{i}"), action_id: ActionId::new("a"), context: Value::Null }).collect(),
        };
        let mut mc = MissionControl::new();
        mc.load(mission, &reg).unwrap();
        let mut r = Counter::default();
        for c in cmds {
            match c {
                0 => { let _ = mc.start(&mut r); }
                1 => { let _ = mc.control(Command::Back, &mut r); }
                2 => { let _ = mc.control(Command::PauseResume, &mut r); }
                3 => { let _ = mc.control(Command::Skip, &mut r); }
                4 => { let _ = mc.control(Command::Stop, &mut r); }
                _ => {
                    if let Some(e) = mc.state().in_flight {
                        let s = if c == 5 { ExecState::Succeeded } else { ExecState::Failed };
                        mc.on_task_result(e, s, "", &mut r);
                    }
                }
            }
            prop_assert!(mc.state().current_index < len);
            prop_assert_eq!(mc.state().results.len(), len);
        }
    }

    #[test]
    fn rectangle_clicks_give_a_scaling(x0 in 0.0f64..100.0, y0 in 0.0f64..100.0, w in 10.0f64..500.0, h in 10.0f64..500.0, s in 0.5f64..10.0) {
        let dims = PanelDims { width_cm: w / 2.0, height_cm: h / 3.0 };
        let quad = Quad([[x0, y0], [x0 + w, y0], [x0 + w, y0 + h], [x0, y0 + h]]);
        let hm = estimate_homography(&quad, dims, s).unwrap();
        let t = target_corners(dims, s);
        for (q, t) in quad.0.iter().zip(t) {
            let p = hm.apply(*q).unwrap();
            prop_assert!((p[0] - t[0]).abs() < 1e-7 && (p[1] - t[1]).abs() < 1e-7);
        }
        prop_assert!(hm.0[2][0].abs() < 1e-12 && hm.0[2][1].abs() < 1e-12);
    }
}
