use ajtwin_core::params::GenerationCoefficients;
use ajtwin_core::physics::TwinModel;
use ajtwin_core::simulator::*;
use ajtwin_core::units::SCCM;
use ajtwin_core::{ModelParams, OutputVector, StateVector};
use proptest::prelude::*;

fn root() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn shipped(name: &str) -> Scenario {
    Scenario::load(&root().join(format!("data/scenarios/{name}.scenario"))).unwrap()
}

const BASE: &str = "\
duration = 120 s
dt = 1 s
seed = 9
initial.d_a = 3 um
initial.V_l = 1 mL
initial.dr_T = 1 um
initial.dr_N = 1 um
schedule.0.t = 0 s
schedule.0.I_A = 370 mA
schedule.0.Q_c = 25 sccm
schedule.0.Q_s = 50 sccm
";

fn scenario(extra: &str) -> Scenario {
    Scenario::parse("test", &format!("{BASE}{extra}")).unwrap()
}

#[test]
fn same_seed_same_trace() {
    let s = scenario("");
    let a = simulate(&s, &ModelParams::default()).unwrap();
    let b = simulate(&s, &ModelParams::default()).unwrap();
    assert_eq!(a, b);
    let mut other = s.clone();
    other.seed += 1;
    assert_ne!(simulate(&other, &ModelParams::default()).unwrap().noisy, a.noisy);
}

#[test]
fn shipped_default_params_reproduce() {
    let params = ModelParams::load(&root().join("data/params/default.params")).unwrap();
    let s = shipped("nominal");
    assert_eq!(simulate(&s, &params).unwrap(), simulate(&s, &ModelParams::default()).unwrap());
}

#[test]
fn noiseless_idle_printer_is_constant() {
    let mut p = ModelParams::default();
    p.generation = GenerationCoefficients {
        qc_qc: 0.0,
        vl_qc: 0.0,
        qc_ia: 0.0,
        ia_vl: 0.0,
        vl: 0.0,
        qc: 0.0,
        ia: 0.0,
        constant: 0.0,
    };
    p.noise.sigma_xi = [0.0; 5];
    p.noise.sigma_w = [0.0; 5];
    let s = scenario("initial.phi_A = 0\n");
    let t = simulate(&s, &p).unwrap();
    assert_eq!(t.len(), 120);
    for k in 1..t.len() {
        assert_eq!(t.states[k], t.states[0]);
        assert_eq!(t.noisy[k], t.clean[0]);
    }
}

#[test]
fn measurement_noise_has_configured_spread() {
    let mut s = scenario("");
    s.duration = 10000.0;
    let p = ModelParams::default();
    let t = simulate(&s, &p).unwrap();
    assert_eq!(t.len(), 10000);
    for i in 0..5 {
        let e: Vec<f64> = (0..t.len()).map(|k| t.noisy[k].to_array()[i] - t.clean[k].to_array()[i]).collect();
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        let sd = (e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (e.len() - 1) as f64).sqrt();
        let target = p.noise.sigma_w[i];
        assert!((sd / target - 1.0).abs() < 0.05, "output {i}: {sd} vs {target}");
        assert!(mean.abs() < 4.0 * target / 100.0);
    }
}

#[test]
fn counter_draws_are_standard_normal_and_order_free() {
    let mut a = CounterNormal::new(3);
    let mut b = CounterNormal::new(3);
    let forward: Vec<f64> = (0..20000).map(|k| a.draw(k, 2)).collect();
    for k in (0..20000).rev().step_by(997) {
        assert_eq!(b.draw(k, 2), forward[k as usize]);
    }
    let n = forward.len() as f64;
    let mean = forward.iter().sum::<f64>() / n;
    let var = forward.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() < 0.03);
    assert!((var - 1.0).abs() < 0.05);
    assert_ne!(a.draw(0, 2), a.draw(0, 3));
}

#[test]
fn droplet_drift_moves_linewidth() {
    let t = simulate(&shipped("exp1"), &ModelParams::default()).unwrap();
    assert_eq!(t.len(), 5400);
    let n = t.len();
    assert!(t.states[n - 1].d_a < 0.95 * t.states[0].d_a);
    assert!((t.clean[n - 1].l_w - t.clean[0].l_w).abs() > 1e-6);
}

#[test]
fn schedules_switch_at_stated_times() {
    let s = shipped("exp3");
    assert_eq!(s.input_at(37.6 * 60.0 - 1.0).q_c, 24.0 * SCCM);
    assert!((s.input_at(37.6 * 60.0).q_c / SCCM - 26.0).abs() < 1e-12);
    assert!((s.input_at(68.5 * 60.0).q_s / SCCM - 48.0).abs() < 1e-12);
    assert!((s.input_at(68.5 * 60.0).q_c / SCCM - 26.0).abs() < 1e-12);
    let s = shipped("exp2");
    assert!((s.input_at(0.0).i_a - 0.33).abs() < 1e-12);
    assert!((s.input_at(20.0 * 60.0).i_a - 0.375).abs() < 1e-12);
    assert!((s.input_at(45.0 * 60.0).q_c / SCCM - 23.0).abs() < 1e-12);
    for name in ["nominal", "exp1", "exp2", "exp3", "em_drift", "pressure_fault"] {
        shipped(name).validate().unwrap();
    }
}

#[test]
fn pressure_drift_only_touches_carrier_pressure() {
    let faulty = shipped("pressure_fault");
    let mut clean = faulty.clone();
    clean.faults.clear();
    let p = ModelParams::default();
    let a = simulate(&faulty, &p).unwrap();
    let b = simulate(&clean, &p).unwrap();
    assert_eq!(a.states, b.states);
    for k in 0..a.len() {
        let (ya, yb) = (a.noisy[k].to_array(), b.noisy[k].to_array());
        for i in [0, 1, 3, 4] {
            assert_eq!(ya[i].to_bits(), yb[i].to_bits());
        }
        let t = a.times[k];
        let expected = if t >= 600.0 { 1000.0 * (t - 600.0) } else { 0.0 };
        assert!((ya[2] - yb[2] - expected).abs() <= 1e-9 * ya[2].abs());
        assert_eq!(a.faults_active[k], vec![t >= 600.0]);
    }
}

#[test]
fn atomizer_dropout_lowers_aerosol_loading() {
    let p = ModelParams::default();
    let on = scenario("fault.0.kind = atomizer-dropout\nfault.0.onset = 0 s\nfault.0.magnitude = 1\n");
    let off = scenario("");
    let a = simulate(&on, &p).unwrap();
    let b = simulate(&off, &p).unwrap();
    assert!(a.states.last().unwrap().phi_a < b.states.last().unwrap().phi_a);
}

#[test]
fn nozzle_clog_ends_the_run() {
    let s = scenario("fault.0.kind = nozzle-clog-acceleration\nfault.0.onset = 10 s\nfault.0.magnitude = 5 um/s\n");
    let mut s = s;
    s.duration = 100000.0;
    let t = simulate(&s, &ModelParams::default()).unwrap();
    match t.terminal {
        Some(TerminalEvent::NozzleClogged { step, t: at }) => {
            assert_eq!(step, t.len());
            assert_eq!(at, step as f64);
        }
        other => panic!("expected clog, got {other:?}"),
    }
    assert!(t.len() < 100000);
}

#[test]
fn probes_return_the_true_state() {
    let t = simulate(&shipped("nominal"), &ModelParams::default()).unwrap();
    assert_eq!(t.probe_latent(100.2).unwrap(), t.states[100]);
    assert!(t.probe_latent(-5.0).is_err());
    assert!(t.probe_latent(1e6).is_err());
    let shift = OutputVector { l_w: 1e-6, l_o: 0.0, p_c: 0.0, p_s: 0.0, q_m: 0.0 };
    let (x, disturbed) = t.probe_with_disturbance(300.0, &shift).unwrap();
    assert_eq!(x, t.states[300]);
    assert_eq!(disturbed.noisy[299], t.noisy[299]);
    assert!((disturbed.noisy[300].l_w - t.noisy[300].l_w - 1e-6).abs() < 1e-15);
    assert_eq!(disturbed.states, t.states);
}

#[test]
fn truth_table_layout() {
    let t = simulate(&shipped("pressure_fault"), &ModelParams::default()).unwrap();
    let table = t.truth_table();
    assert_eq!(table.header[0], "t[s]");
    assert_eq!(table.header.len(), 1 + 5 + 5 + 1);
    assert_eq!(table.header.last().unwrap(), "fault0[1]");
    assert_eq!(table.rows.len(), t.len());
    assert_eq!(t.to_table().len(), t.len());
}

#[test]
fn equilibrium_start_is_stationary_in_loading() {
    let p = ModelParams::default();
    let s = shipped("nominal");
    let x0 = s.initial_state(&p).unwrap();
    let model = TwinModel::new(p.clone());
    let xdot = model.transition_f(&x0, &s.input_at(0.0), &s.theta).unwrap();
    assert!(xdot.phi_a.abs() < 1e-9 * x0.phi_a);
    assert!(x0.phi_a > 0.0);
}

#[test]
fn malformed_scenarios_are_rejected() {
    assert!(Scenario::parse("t", "duration = 10 s\n").is_err());
    assert!(Scenario::parse("t", &format!("{BASE}bogus.key = 1\n")).is_err());
    assert!(Scenario::parse("t", &format!("{BASE}fault.0.kind = meltdown\nfault.0.onset = 1 s\nfault.0.magnitude = 1\n"))
        .is_err());
    let mut s = scenario("");
    s.schedule[0].t = 5.0;
    assert!(s.validate().is_err());
    let text = format!("{BASE}fault.0.kind = atomizer-dropout\nfault.0.onset = 0 s\nfault.0.magnitude = 2\n");
    assert!(Scenario::parse("t", &text).is_err());
    assert!(Scenario::parse("t", &format!("{BASE}noise.sigma_Lw = -1 um\n")).is_err());
}

#[test]
fn scenario_text_round_trip() {
    for name in ["nominal", "exp2", "pressure_fault"] {
        let s = shipped(name);
        let back = Scenario::parse("rt", &s.to_config_string()).unwrap();
        assert_eq!(back, s, "{name}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn simulated_states_respect_bounds(seed in 0u64..1000, ia in 300.0f64..450.0, qc in 15.0f64..35.0) {
        let mut s = scenario("");
        s.seed = seed;
        s.schedule[0].u.i_a = ia * 1e-3;
        s.schedule[0].u.q_c = qc * SCCM;
        let t = simulate(&s, &ModelParams::default()).unwrap();
        for x in &t.states {
            prop_assert!(x.is_finite());
            prop_assert!(x.d_a > 0.0 && x.v_l >= 0.0 && x.dr_tube >= 0.0 && x.dr_nozzle >= 0.0 && x.phi_a >= 0.0);
        }
        let _: &StateVector = &t.states[0];
    }
}

#[test]
fn stepper_reproduces_scripted_schedule() {
    let s = shipped("exp3");
    let model = TwinModel::new(s.effective_params(&ModelParams::default()));
    let batch = simulate_with(&s, &model).unwrap();
    let mut st = Stepper::new(&s, &model).unwrap();
    for k in 0..batch.len() {
        let tick = st.tick(&model, &s.input_at(k as f64), true).unwrap();
        assert_eq!(tick.state, batch.states[k]);
        assert_eq!(tick.noisy, batch.noisy[k]);
    }
}

#[test]
fn zero_duration_gives_empty_trace() {
    let mut s = scenario("");
    s.duration = 0.0;
    let t = simulate(&s, &ModelParams::default()).unwrap();
    assert!(t.is_empty());
    assert_eq!(t.to_table().len(), 0);
    assert!(t.probe_latent(0.0).is_err());
}
