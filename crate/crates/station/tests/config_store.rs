use gcs_core::config::{demo_config, ConsoleConfig, ParamKind};
use gcs_core::console::Persistence;
use gcs_core::wire::ErrorCode;
use gcs_station::config_store::{self, FileStore, StoreError};
use proptest::prelude::*;
use serde_json::{json, Value};

#[test]
fn demo_round_trips_through_text() {
    let cfg = demo_config();
    let text = config_store::to_text(&cfg);
    assert!(text.ends_with("}\n"));
    let back = config_store::from_text(&text, "demo").unwrap();
    assert_eq!(back, cfg);
    assert_eq!(config_store::to_text(&back), text);
}

#[test]
fn keys_are_sorted() {
    let text = config_store::to_text(&demo_config());
    let v: serde_json::Map<String, Value> = serde_json::from_str(&text).unwrap();
    let keys: Vec<&String> = v.keys().collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    let first = text.lines().nth(1).unwrap();
    assert!(first.starts_with("  \"action_tree\""), "{first}");
}

#[test]
fn empty_file_is_default() {
    assert_eq!(config_store::from_text("", "x").unwrap(), ConsoleConfig::default());
    assert_eq!(
        config_store::from_text(" \n\t\n", "x").unwrap(),
        ConsoleConfig::default()
    );
}

#[test]
fn parse_error_has_position() {
    let err = config_store::from_text("{\n  \"cameras\": [,\n]}", "bad.json").unwrap_err();
    match &err {
        StoreError::Parse { path, line, column, .. } => {
            assert_eq!(path, "bad.json");
            assert_eq!(*line, 2);
            assert!(*column > 0);
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(err.code(), ErrorCode::Config);
    assert!(err.to_string().starts_with("bad.json:2:"));
}

#[test]
fn dangling_reference_is_rejected() {
    let mut v = serde_json::to_value(demo_config()).unwrap();
    v["camera_pairs"] = json!([{"name": "p", "left": "front", "right": "nowhere"}]);
    let err = config_store::from_text(&v.to_string(), "x").unwrap_err();
    assert!(matches!(err, StoreError::Invalid(_)), "{err:?}");
    assert_eq!(err.code(), ErrorCode::Validation);
    assert!(err.to_string().contains("nowhere"), "{err}");
    // parse alone accepts it
    assert!(config_store::parse(&v.to_string(), "x").is_ok());
}

#[test]
fn save_refuses_invalid_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    let mut cfg = demo_config();
    cfg.camera_pairs[0].left = "ghost".into();
    assert!(matches!(config_store::save(&path, &cfg), Err(StoreError::Invalid(_))));
    assert!(!path.exists());
}

#[test]
fn unwritable_location_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("c.json");
    let err = config_store::save(&path, &demo_config()).unwrap_err();
    assert_eq!(err.code(), ErrorCode::Io);
    let err = config_store::load(&path).unwrap_err();
    assert!(matches!(err, StoreError::Io { .. }));
}

#[test]
fn save_replaces_atomically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, "old").unwrap();
    config_store::save(&path, &demo_config()).unwrap();
    assert_eq!(config_store::load(&path).unwrap(), demo_config());
    let leftovers = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(leftovers, 1);
}

#[test]
fn file_store_saves_and_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = FileStore::new(dir.path().join("c.json"));
    assert!(store.reload().is_err());
    let mut cfg = demo_config();
    cfg.view.kp = 4.5;
    store.save(&cfg).unwrap();
    assert_eq!(store.reload().unwrap(), cfg);
}

#[test]
fn settings_foreign_keys_do_not_shadow_ranges() {
    let mut v = serde_json::to_value(demo_config()).unwrap();
    v["settings"][0]["widget"] = json!("slider");
    let mut cfg = config_store::from_text(&v.to_string(), "x").unwrap();
    let extra = &cfg.settings[0].extra;
    assert_eq!(extra.len(), 1, "{extra:?}");
    cfg.settings[0].kind = match cfg.settings[0].kind.clone() {
        ParamKind::Float { min, max } => ParamKind::Float { min, max: max + 1.0 },
        ParamKind::Int { min, max } => ParamKind::Int { min, max: max + 1 },
        k => k,
    };
    let again = config_store::from_text(&config_store::to_text(&cfg), "x").unwrap();
    assert_eq!(again, cfg);
}

fn leaf() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::from),
        (-1e9f64..1e9).prop_map(Value::from),
        "[a-z ]{0,8}".prop_map(Value::from),
    ]
}

fn json_value() -> impl Strategy<Value = Value> {
    leaf().prop_recursive(3, 16, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
            prop::collection::btree_map("[a-z]{1,6}", inner, 0..4).prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

proptest! {
    #[test]
    fn foreign_keys_survive(extra in prop::collection::btree_map("x_[a-z]{1,6}", json_value(), 0..5),
                            cam in prop::collection::btree_map("y_[a-z]{1,6}", json_value(), 0..3)) {
        let mut cfg = demo_config();
        cfg.extra = extra;
        cfg.cameras[0].extra = cam;
        let text = config_store::to_text(&cfg);
        let back = config_store::from_text(&text, "p").unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(config_store::to_text(&back), text);
    }
}
