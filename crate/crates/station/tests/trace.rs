use gcs_core::config::demo_config;
use gcs_core::console::{Console, ConsoleOptions, MemoryStore, Outgoing, Role};
use gcs_core::harness::{replay, Harness, HarnessOptions, TraceEvent};
use gcs_core::sim::Scenario;
use gcs_core::wire::Envelope;
use gcs_station::trace;
use serde_json::json;

fn session() -> Harness {
    let mut h = Harness::new(demo_config(), Scenario::default(), HarnessOptions::default()).unwrap();
    h.connect_subscribed(1, Role::Developer, &["estop/summary", "actions/toggles"]);
    h.send_at(
        0.2,
        1,
        Envelope::request("actions/execute", "a", json!({"action_id": "led_toggle"})),
    );
    h.send_at(0.4, 1, Envelope::request("estop/trigger", "b", json!(null)));
    h.run_until(1.0);
    h
}

#[test]
fn trace_file_round_trip() {
    let mut h = session();
    let events = h.drain_trace();
    assert!(events.iter().any(|e| matches!(e, TraceEvent::Robot { .. })));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    trace::write(&path, &events).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), events.len());
    assert!(text.lines().next().unwrap().contains("\"source\":\"connect\""));
    assert_eq!(trace::read(&path).unwrap(), events);
}

#[test]
fn replayed_trace_reproduces_client_traffic() {
    let mut h = session();
    let events = h.drain_trace();
    let live: Vec<Envelope> = h.client_log[&1].iter().map(|(_, e)| e.clone()).collect();
    let mut console = Console::new(
        demo_config(),
        Box::new(MemoryStore::default()),
        ConsoleOptions::default(),
    )
    .unwrap();
    let mut replayed = Vec::new();
    replay(&mut console, &events, |_, _, out| {
        for o in out {
            if let Outgoing::Client(1, e) = o {
                replayed.push(e);
            }
        }
    });
    assert_eq!(replayed, live);
}

#[test]
fn blank_lines_are_skipped_and_bad_lines_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    std::fs::write(
        &path,
        "{\"source\":\"tick\",\"t\":0.5}\n\n{\"source\":\"tick\",\"t\":1.0}\n",
    )
    .unwrap();
    assert_eq!(
        trace::read(&path).unwrap(),
        vec![TraceEvent::Tick { t: 0.5 }, TraceEvent::Tick { t: 1.0 }]
    );
    std::fs::write(&path, "{\"source\":\"tick\",\"t\":0.5}\nnot json\n").unwrap();
    let err = format!("{:#}", trace::read(&path).unwrap_err());
    assert!(err.contains(":2:"), "{err}");
}

#[test]
fn writer_appends_incrementally() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let mut w = trace::TraceWriter::create(&path).unwrap();
    w.write(&TraceEvent::Tick { t: 0.0 }).unwrap();
    w.write(&TraceEvent::Disconnect { t: 0.1, conn: 3 }).unwrap();
    w.flush().unwrap();
    assert_eq!(trace::read(&path).unwrap().len(), 2);
}
