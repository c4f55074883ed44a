use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use ajtwin_core::params::ModelParams;
use ajtwin_core::simulator::{simulate, Scenario};
use ajtwin_core::table::TimeSeriesTable;
use ajtwin_core::units::SCCM;
use ajtwin_service::host::Subscriber;
use ajtwin_service::session::{quantize, EventKind, Session, SessionConfig};
use ajtwin_service::Host;
use serde_json::{json, Value};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scenario(name: &str) -> Scenario {
    Scenario::load(&root().join(format!("data/scenarios/{name}.scenario"))).unwrap()
}

fn live(name: &str) -> Session {
    Session::live("t".into(), scenario(name), SessionConfig::default()).unwrap()
}

fn host() -> Host {
    Host::new(ModelParams::default(), root())
}

fn ok(v: Value) -> Value {
    assert!(v.get("error").is_none(), "unexpected error: {v}");
    v["result"].clone()
}

fn call(h: &Host, method: &str, params: Value) -> Value {
    h.handle(&json!({ "id": 1, "method": method, "params": params }))
}

#[test]
fn new_session_is_paused_at_zero() {
    let h = host();
    let created = ok(call(&h, "create_session", json!({ "scenario_path": "data/scenarios/nominal.scenario" })));
    let id = created["session"].as_str().unwrap().to_string();
    let st = ok(call(&h, "status", json!({ "session": id })));
    assert_eq!(st["state"], "paused");
    assert_eq!(st["t"], 0.0);
    assert_eq!(st["seq"], 0);
    assert_eq!(st["mode"], "live-sim");
    assert_eq!(st["belief"], false);
    ok(call(&h, "close_session", json!({ "session": id })));
    assert_eq!(call(&h, "status", json!({ "session": id }))["error"]["code"], "unknown-session");
}

#[test]
fn sessions_have_independent_noise() {
    let h = host();
    let mk = |seed: u64| {
        let r = ok(call(&h, "create_session", json!({ "scenario_path": "data/scenarios/nominal.scenario", "seed": seed })));
        r["session"].as_str().unwrap().to_string()
    };
    let (a, b) = (mk(1), mk(2));
    let fa = ok(call(&h, "step", json!({ "session": a, "count": 5 })))["last"]["y"].clone();
    let fb = ok(call(&h, "step", json!({ "session": b, "count": 5 })))["last"]["y"].clone();
    assert_ne!(fa, fb);
}

#[test]
fn set_input_is_echoed_in_the_next_frame() {
    let mut s = live("nominal");
    s.tick().unwrap();
    let ack = s.set_input("Q_c", 26.0).unwrap();
    assert_eq!(ack["effective_from"], 1);
    let f = s.tick().unwrap().frame;
    assert!((f.record.u.q_c / SCCM - 26.0).abs() < 1e-9);
    assert_eq!(f.to_json()["u"]["Q_c"], 26.0);
    let ev = s.events().iter().find(|e| e.kind == EventKind::InputChange).unwrap();
    assert_eq!(ev.seq, 1);
}

#[test]
fn out_of_bounds_input_is_rejected_without_effect() {
    let mut s = live("nominal");
    let before = s.status();
    let err = s.set_input("Q_c", 45.0).unwrap_err();
    assert_eq!(err.code, "out-of-bounds");
    assert_eq!(err.data.unwrap()["Q_c"], json!([10.0, 40.0]));
    assert!(s.set_input("I_A", 249.0).is_err());
    assert!(s.set_input("Q_s", 80.5).is_err());
    assert!(s.set_input("Q_x", 30.0).is_err());
    assert_eq!(s.status(), before);
    assert!(s.set_input("I_A", 500.0).is_ok());
}

#[test]
fn operator_steps_reproduce_the_scripted_experiment() {
    let scripted = scenario("exp3");
    let trace = simulate(&scripted, &ModelParams::default()).unwrap();
    let mut manual = scripted.clone();
    manual.schedule.truncate(1);
    let mut s = Session::live("m".into(), manual, SessionConfig::default()).unwrap();
    for k in 0..trace.len() {
        if k == 2256 {
            s.set_input("Q_c", 26.0).unwrap();
        }
        if k == 4110 {
            s.set_input("Q_s", 48.0).unwrap();
        }
        let f = s.tick().unwrap().frame;
        let expected = quantize(&trace.records()[k]);
        assert_eq!(f.record, expected, "frame {k}");
    }
}

#[test]
fn what_if_requires_a_belief_and_is_pure() {
    let mut s = live("nominal");
    assert_eq!(s.what_if(&[], 1).unwrap_err().code, "not-ready");
    for _ in 0..20 {
        s.tick().unwrap();
    }
    let a = s.what_if(&[], 1).unwrap();
    let b = s.what_if(&[], 1).unwrap();
    assert_eq!(a, b);
    assert_eq!(a["steps"].as_array().unwrap().len(), 1);
    let step = &a["steps"][0];
    let (lo, m, hi) = (step["y_lo"]["L_w"].as_f64().unwrap(), step["y_mean"]["L_w"].as_f64().unwrap(), step["y_hi"]["L_w"].as_f64().unwrap());
    assert!(lo < m && m < hi);
    assert!(((hi - m) - (m - lo)).abs() < 1e-9 * m);
    assert!(s.what_if(&[], 0).is_err());
}

#[test]
fn carrier_step_moves_linewidth_with_the_carrier_coefficient() {
    let mut s = live("nominal");
    for _ in 0..30 {
        s.tick().unwrap();
    }
    let base = s.what_if(&[], 5).unwrap();
    let stepped = s.what_if(&[json!({ "Q_c": 28.0 })], 5).unwrap();
    let shift = stepped["steps"][4]["y_mean"]["L_w"].as_f64().unwrap() - base["steps"][4]["y_mean"]["L_w"].as_f64().unwrap();
    let beta = ModelParams::default().outputs.linewidth.beta_c;
    assert!(shift != 0.0 && shift.signum() == beta.signum());
    // The forecast never touches live state.
    assert_eq!(s.next_seq(), 30);
}

#[test]
fn calibration_on_noiseless_drift_free_data_stays_at_zero() {
    let mut p = ModelParams::default();
    p.noise.sigma_xi = [0.0; 5];
    p.noise.sigma_w = [0.0; 5];
    let trace = simulate(&scenario("nominal"), &p).unwrap();
    let table = trace.to_table();
    let mut s = Session::replay("z".into(), &table, None, None, SessionConfig::default()).unwrap();
    for _ in 0..200 {
        s.tick().unwrap();
    }
    let rep = s.calibrate_now(150, 5).unwrap();
    assert_eq!(rep["monotone"], true);
    assert!(rep["theta"]["da"].as_f64().unwrap().abs() < 2e-6, "{rep}");
    let after: Vec<f64> = rep["objective_after"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let before: Vec<f64> = rep["objective_before"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    for (b, a) in before.iter().zip(&after) {
        assert!(*a <= b + 1e-9 * b.abs());
    }
}

#[test]
fn calibration_needs_enough_frames() {
    let mut s = live("nominal");
    for _ in 0..5 {
        s.tick().unwrap();
    }
    assert_eq!(s.calibrate_now(10, 3).unwrap_err().code, "not-ready");
    assert_eq!(s.calibrate_now(1, 3).unwrap_err().code, "bad-request");
}

fn mean_nis(frames: &[ajtwin_service::session::Frame]) -> f64 {
    frames.iter().map(|f| f.nis.unwrap()).sum::<f64>() / frames.len() as f64
}

#[test]
fn calibration_shrinks_prediction_residuals_on_drift() {
    let mut sc = scenario("em_drift");
    sc.theta.theta_da = -2e-4;
    let mut plain = Session::live("a".into(), sc.clone(), SessionConfig::default()).unwrap();
    let mut tuned = Session::live("b".into(), sc, SessionConfig::default()).unwrap();
    for _ in 0..900 {
        plain.tick().unwrap();
        tuned.tick().unwrap();
    }
    let rep = tuned.calibrate_now(900, 5).unwrap();
    assert!(rep["theta"]["da"].as_f64().unwrap() < 0.0);
    let mut fa = Vec::new();
    let mut fb = Vec::new();
    for _ in 0..600 {
        fa.push(plain.tick().unwrap().frame);
        fb.push(tuned.tick().unwrap().frame);
    }
    assert_eq!(fb[0].theta, tuned.theta());
    assert!(mean_nis(&fb) < mean_nis(&fa), "{} vs {}", mean_nis(&fb), mean_nis(&fa));
}

#[test]
fn export_then_replay_gives_identical_estimates() {
    let mut s = live("em_drift");
    let mut frames = Vec::new();
    for _ in 0..150 {
        frames.push(s.tick().unwrap().frame);
    }
    s.calibrate_now(120, 3).unwrap();
    s.probe(None, None).unwrap();
    for _ in 0..150 {
        frames.push(s.tick().unwrap().frame);
    }
    let (table, log, events) = s.export(None, None).unwrap();
    assert!(events.iter().any(|e| e.kind == EventKind::ThetaSwap && e.seq == 150));
    let table = TimeSeriesTable::parse(&table).unwrap();
    let params = ModelParams::from_config(
        &ajtwin_core::config::FlatConfig::parse("export", &s.model_params().to_config_string()).unwrap(),
    )
    .unwrap();
    let cfg = SessionConfig { params, ..Default::default() };
    let mut r = Session::replay("r".into(), &table, Some(&log), None, cfg).unwrap();
    for f in &frames {
        let g = r.tick().unwrap().frame;
        assert_eq!(&g, f, "frame {}", f.seq);
        assert_eq!(g.to_json().to_string(), f.to_json().to_string());
    }
    assert!(r.tick().is_err());
    assert_eq!(r.status()["state"], "finished");
    assert_eq!(r.set_input("Q_c", 20.0).unwrap_err().code, "invalid-state");
    assert_eq!(r.probe(None, None).unwrap_err().code, "invalid-state");
}

#[test]
fn export_ranges() {
    let mut s = live("nominal");
    for _ in 0..20 {
        s.tick().unwrap();
    }
    let (table, log, _) = s.export(Some(5), Some(5)).unwrap();
    assert_eq!(table.lines().count(), 1);
    assert!(table.starts_with("t[s],I_A[mA]"));
    assert_eq!(log.lines().count(), 1);
    let (table, _, _) = s.export(Some(5), Some(8)).unwrap();
    assert_eq!(TimeSeriesTable::parse(&table).unwrap().len(), 3);
    assert_eq!(s.export(Some(6), Some(5)).unwrap_err().code, "bad-range");
    assert_eq!(s.export(None, Some(21)).unwrap_err().code, "bad-range");
}

#[test]
fn event_log_is_ordered_by_frame() {
    let mut s = live("pressure_fault");
    for k in 0..800 {
        if k == 100 {
            s.set_input("I_A", 380.0).unwrap();
        }
        s.tick().unwrap();
    }
    let ev = s.events();
    assert!(ev.windows(2).all(|w| w[0].seq <= w[1].seq));
    let onset = ev.iter().find(|e| e.kind == EventKind::FaultOnset).unwrap();
    assert_eq!(onset.seq, 600);
    let alert = ev.iter().find(|e| e.kind == EventKind::AnomalyAlert && e.seq >= 600).unwrap();
    assert!(alert.seq < 700, "alert at {}", alert.seq);
}

#[test]
fn probes_report_truth_and_disturb_later_outputs() {
    let sc = scenario("nominal");
    let x0 = sc.initial_state(&ModelParams::default()).unwrap();
    let mut s = live("nominal");
    let mut plain = live("nominal");
    assert_eq!(s.probe(None, None).unwrap_err().code, "not-ready");
    for _ in 0..10 {
        s.tick().unwrap();
        plain.tick().unwrap();
    }
    let p = s.probe(Some(0.0), None).unwrap();
    assert_eq!(p["x"]["d_a"].as_f64().unwrap(), x0.d_a * 1e6);
    assert!(s.probe(Some(100.0), None).is_err());
    s.probe(None, Some([2e-6, 0.0, 0.0, 0.0, 0.0])).unwrap();
    let a = s.tick().unwrap().frame;
    let b = plain.tick().unwrap().frame;
    let d = a.record.y.0[0].unwrap() - b.record.y.0[0].unwrap();
    assert!((d - 2e-6).abs() < 1e-12);
    assert_eq!(a.record.y.0[1], b.record.y.0[1]);
}

#[test]
fn frames_have_valid_uncertainty() {
    let mut s = live("nominal");
    for k in 0..100 {
        let f = s.tick().unwrap().frame;
        assert_eq!(f.seq, k);
        if k + 1 < 10 {
            assert!(f.belief.is_none() && f.nis.is_none());
        } else {
            let (_, var) = f.belief.unwrap();
            assert!(var.iter().all(|v| *v >= 0.0));
            assert!(f.nis.unwrap() >= 0.0);
        }
    }
}

#[test]
fn slow_subscriber_loses_oldest_frames_only() {
    let h = host();
    let id = ok(call(&h, "create_session", json!({ "scenario_path": "data/scenarios/nominal.scenario" })))["session"]
        .as_str()
        .unwrap()
        .to_string();
    let (sub, _): (Arc<Subscriber>, Value) = h.subscribe(&json!({ "session": id, "queue": 8 })).unwrap();
    ok(call(&h, "step", json!({ "session": id, "count": 300 })));
    assert_eq!(sub.len(), 8);
    assert!(sub.dropped() >= 292);
    let mut seqs = Vec::new();
    while let Some(m) = sub.pop(Duration::from_millis(1)) {
        if m["type"] == "telemetry" {
            seqs.push(m["frame"]["seq"].as_u64().unwrap());
        }
    }
    assert_eq!(*seqs.last().unwrap(), 299);
    assert!(seqs.windows(2).all(|w| w[0] < w[1]));
    // The persisted log keeps everything.
    let exp = ok(call(&h, "export_session", json!({ "session": id })));
    assert_eq!(exp["table"].as_str().unwrap().lines().count(), 301);
}

#[test]
fn run_and_pause_tick_in_the_background() {
    let h = host();
    let id = ok(call(&h, "create_session", json!({ "scenario_path": "data/scenarios/nominal.scenario" })))["session"]
        .as_str()
        .unwrap()
        .to_string();
    ok(call(&h, "run", json!({ "session": id, "rate": 2000.0 })));
    std::thread::sleep(Duration::from_millis(300));
    assert_eq!(call(&h, "step", json!({ "session": id }))["error"]["code"], "invalid-state");
    let paused = ok(call(&h, "pause", json!({ "session": id })));
    let seq = paused["seq"].as_u64().unwrap();
    assert!(seq > 0);
    std::thread::sleep(Duration::from_millis(50));
    assert_eq!(ok(call(&h, "status", json!({ "session": id })))["seq"].as_u64().unwrap(), seq);
    assert_eq!(call(&h, "run", json!({ "session": id, "rate": -1.0 }))["error"]["code"], "bad-request");
}

#[test]
fn malformed_requests_are_reported() {
    let h = host();
    assert_eq!(h.handle(&json!({ "id": 3 }))["error"]["code"], "bad-request");
    assert_eq!(call(&h, "launch", json!({}))["error"]["code"], "unknown-method");
    assert_eq!(call(&h, "create_session", json!({ "scenario": "duration = 1 s\n" }))["error"]["code"], "bad-request");
    assert_eq!(call(&h, "create_session", json!({}))["error"]["code"], "bad-request");
    assert_eq!(h.handle(&json!({ "id": 4, "method": "status", "params": [] }))["error"]["code"], "bad-request");
}
