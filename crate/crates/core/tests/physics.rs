use std::f64::consts::PI;

use ajtwin_core::params::GenerationCoefficients;
use ajtwin_core::physics::deposition::{nozzle_loss_fraction, tube_loss_fraction};
use ajtwin_core::physics::jacobian::central_difference;
use ajtwin_core::physics::*;
use ajtwin_core::types::STATE_DIM;
use ajtwin_core::units::{MICROMETRE, MILLIAMP, MILLILITRE, SCCM};
use ajtwin_core::{InputVector, ModelParams, StateVector, ThetaParams};
use proptest::prelude::*;

fn nominal_x() -> StateVector {
    StateVector::new(3.0 * MICROMETRE, 1.0 * MILLILITRE, 1.0 * MICROMETRE, 1.0 * MICROMETRE, 5e-7)
}

fn nominal_u() -> InputVector {
    InputVector::new(370.0 * MILLIAMP, 25.0 * SCCM, 50.0 * SCCM)
}

fn sigma_ln() -> f64 {
    (1.0f64 + 0.25 * 0.25).ln().sqrt()
}

/// Settling probability written out from the channel-flow formula.
fn grav_oracle(d: f64, q_c: f64, dr_t: f64, p: &ModelParams) -> f64 {
    let g = &p.geometry;
    let r = g.r_tube0 - dr_t;
    let u_ts = g.rho_p * d * d * g.gravity * g.slip_correction / (18.0 * g.eta_g);
    let u_a = q_c / (PI * r * r);
    let alpha = (3.0 * g.l_tube * u_ts / (8.0 * u_a * r)).cbrt().min(1.0);
    let beta = (1.0 - alpha * alpha).sqrt();
    (2.0 / PI) * (alpha.asin() - alpha * beta + 2.0 * alpha.powi(3) * beta)
}

/// Diffusional deposition from a brute-force scan of the critical radius
/// quartic `(1 − x)²(1 − x²) = rhs` on [0, 1].
fn diffusion_scan(rhs: f64) -> f64 {
    if rhs >= 1.0 {
        return 1.0;
    }
    let f = |x: f64| (1.0 - x) * (1.0 - x) * (1.0 - x * x) - rhs;
    let h = 1e-7;
    let n = (1.0 / h) as usize;
    let mut prev = f(0.0);
    for i in 1..=n {
        let x = i as f64 * h;
        let v = f(x);
        if v <= 0.0 {
            let xc = x - h + h * prev / (prev - v);
            return (1.0 - xc * xc).powi(2);
        }
        prev = v;
    }
    0.0
}

#[test]
fn tip_resistance_at_zero_deposit() {
    let p = ModelParams::default();
    assert_eq!(resistance_nozzle_tip(0.0, &p.geometry).value, 4.57e9);
}

#[test]
fn generation_at_nominal_point() {
    let c = GenerationCoefficients::default();
    let h = net_generation_h(25.0 * SCCM, 1.0 * MILLILITRE, 370.0 * MILLIAMP, &c).unwrap();
    let um3 = h.rate / MICROMETRE.powi(3);
    assert!((um3 - 2.1245e5).abs() <= 1e-3 * 2.1245e5, "{um3}");
}

#[test]
fn generation_outside_fit_box_is_flagged() {
    let c = GenerationCoefficients::default();
    assert!(net_generation_h(25.0 * SCCM, 1.0 * MILLILITRE, 480.0 * MILLIAMP, &c).unwrap().extrapolated);
    assert!(!net_generation_h(30.0 * SCCM, 0.7 * MILLILITRE, 320.0 * MILLIAMP, &c).unwrap().extrapolated);
}

#[test]
fn default_material_fraction() {
    assert_eq!(ModelParams::default().outputs.phi_m, 0.087);
}

#[test]
fn gravitational_settling_matches_direct_formula() {
    let p = ModelParams::default();
    for d_um in [0.5, 1.0, 3.0, 8.0, 15.0] {
        for q in [15.0, 25.0, 35.0] {
            let d = d_um * MICROMETRE;
            let got = 1.0 - survival_gravitational(d, q * SCCM, 0.0, &p.geometry).unwrap();
            let want = grav_oracle(d, q * SCCM, 0.0, &p);
            assert!((got - want).abs() <= 1e-9 * want.max(1e-300), "d {d_um} q {q}: {got} vs {want}");
        }
    }
}

#[test]
fn vanishing_droplets_survive_the_tube() {
    let p = ModelParams::default();
    let s = survival_gravitational(1e-12, 25.0 * SCCM, 0.0, &p.geometry).unwrap();
    assert!((1.0 - s).abs() < 1e-15);
}

#[test]
fn settling_loss_increases_with_size() {
    let p = ModelParams::default();
    let mut prev = 1.0;
    for i in 1..=400 {
        let d = i as f64 * 0.05 * MICROMETRE;
        let s = survival_gravitational(d, 25.0 * SCCM, 0.0, &p.geometry).unwrap();
        assert!(s <= prev, "survival rose at d = {d:e}");
        prev = s;
    }
    assert!(prev < 1.0);
}

#[test]
fn diffusion_matches_quartic_scan() {
    for rhs in [1e-6, 1e-4, 1e-3, 0.01, 0.1, 0.3, 0.6, 0.9, 0.999] {
        let got = diffusion_deposition_from_rhs(rhs);
        let want = diffusion_scan(rhs);
        assert!((got - want).abs() < 1e-9, "rhs {rhs}: {got} vs {want}");
        assert!((0.0..=1.0).contains(&got));
    }
    assert_eq!(diffusion_deposition_from_rhs(1.0), 1.0);
    assert_eq!(diffusion_deposition_from_rhs(3.0), 1.0);
    assert_eq!(critical_radius(2.0), None);
}

#[test]
fn stokes_einstein_value() {
    let p = ModelParams::default();
    let g = &p.geometry;
    let d = 2.0 * MICROMETRE;
    let want = 1.380649e-23 * 293.0 * 1.0 / (2.0 * PI * 0.072 * d);
    let got = stokes_einstein_d(d, g).unwrap();
    assert!((got / want - 1.0).abs() < 1e-14);
    assert!(stokes_einstein_d(0.0, g).is_err());
}

#[test]
fn deposition_integrals_stable_under_node_doubling() {
    let p = ModelParams::default();
    let g = &p.geometry;
    let (lo, hi) = (p.process.diameter_min, p.process.diameter_max);
    let r64 = QuadratureRule::new(64, lo, hi);
    let r128 = QuadratureRule::new(128, lo, hi);
    for median_um in [0.5, 1.0, 3.0, 6.0] {
        let dist = DropletDistribution::from_median(median_um * MICROMETRE).unwrap();
        for q in [15.0, 25.0, 35.0] {
            let a = tube_loss_fraction(&dist, q * SCCM, 0.0, g, &r64).unwrap();
            let b = tube_loss_fraction(&dist, q * SCCM, 0.0, g, &r128).unwrap();
            assert!((a - b).abs() <= 1e-6 * b.abs(), "tube median {median_um}: {a} vs {b}");
            let k64 = NozzleKernel::new((q + 50.0) * SCCM, g, &r64).unwrap();
            let k128 = NozzleKernel::new((q + 50.0) * SCCM, g, &r128).unwrap();
            let a = nozzle_loss_fraction(&dist, &k64, &r64);
            let b = nozzle_loss_fraction(&dist, &k128, &r128);
            assert!((a - b).abs() <= 1e-6 * b.abs(), "nozzle median {median_um}: {a} vs {b}");
        }
    }
}

#[test]
fn tube_loss_matches_dense_trapezoid() {
    let p = ModelParams::default();
    let rule = QuadratureRule::new(64, p.process.diameter_min, p.process.diameter_max);
    for median_um in [1.0, 3.0, 5.0] {
        let mu = (median_um * MICROMETRE).ln();
        let s = sigma_ln();
        let (a, b) = (mu - 12.0 * s, mu + 12.0 * s);
        let n = 100_000;
        let h = (b - a) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let x = a + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let z = (x - mu) / s;
            let pdf = (-0.5 * z * z).exp() / (s * (2.0 * PI).sqrt());
            acc += w * h * pdf * grav_oracle(x.exp(), 25.0 * SCCM, 0.0, &p);
        }
        let dist = DropletDistribution::from_median(median_um * MICROMETRE).unwrap();
        let got = tube_loss_fraction(&dist, 25.0 * SCCM, 0.0, &p.geometry, &rule).unwrap();
        assert!((got - acc).abs() <= 1e-6 * acc, "median {median_um}: {got} vs {acc}");
    }
}

#[test]
fn resistances_and_pressures_at_nominal_deposits() {
    let p = ModelParams::default();
    let g = &p.geometry;
    let dr = 1.0 * MICROMETRE;
    let r_t = 8.0 * 17.5 * 0.4572 / (PI * (789e-6 - dr).powi(4));
    let tip = 4.57e9 + 2.75e9 - 7.96e8 + 9.73e7 - 5.81e6 + 1.83e5 - 2.92e3 + 18.67;
    let nozzle = 5.36e6 + 6.07e7 + tip;
    let carrier = r_t + 1.1972e4 + 5.6305e4 + 6.959e5 + nozzle;
    let sheath = 0.5 * (2.185e5 + 175.66 + 1.28e6) + nozzle;
    let (q_c, q_s) = (25.0 * SCCM, 50.0 * SCCM);
    let (p_c, p_s) = pressures(dr, dr, q_c, q_s, g).unwrap();
    assert!((p_c / (q_c * carrier + q_s * nozzle) - 1.0).abs() < 1e-12);
    assert!((p_s / (q_s * sheath + q_c * nozzle) - 1.0).abs() < 1e-12);
    assert!((resistance_tube(dr, g).unwrap() / r_t - 1.0).abs() < 1e-12);
}

#[test]
fn pressures_are_linear_in_flows() {
    let g = ModelParams::default().geometry;
    let net = Network::new(2e-6, 3e-6, &g).unwrap();
    let (a1, b1) = net.pressures(20.0 * SCCM, 0.0);
    let (a2, b2) = net.pressures(0.0, 45.0 * SCCM);
    let (a, b) = net.pressures(20.0 * SCCM, 45.0 * SCCM);
    assert!((a - a1 - a2).abs() <= 1e-12 * a);
    assert!((b - b1 - b2).abs() <= 1e-12 * b);
    assert_eq!(net.pressures(0.0, 0.0), (0.0, 0.0));
}

#[test]
fn blocked_paths_are_errors() {
    let g = ModelParams::default().geometry;
    assert!(resistance_tube(g.r_tube0, &g).is_err());
    assert!(Network::new(0.0, g.r_nozzle0, &g).is_err());
}

#[test]
fn outputs_at_nominal_point() {
    let model = TwinModel::new(ModelParams::default());
    let y = model.output_g(&nominal_x(), &nominal_u()).unwrap();
    assert!((y.l_w / MICROMETRE - 40.56).abs() < 1e-9, "{}", y.l_w);
    assert!((y.l_o / MICROMETRE - 71.12).abs() < 1e-9, "{}", y.l_o);
    let q_m = 0.087 * 5e-7 * 25.0 * SCCM;
    assert!((y.q_m / q_m - 1.0).abs() < 1e-14);
}

#[test]
fn empty_aerosol_is_a_fixed_point() {
    let mut params = ModelParams::default();
    params.generation = GenerationCoefficients {
        qc_qc: 0.0,
        vl_qc: 0.0,
        qc_ia: 0.0,
        ia_vl: 0.0,
        vl: 0.0,
        qc: 0.0,
        ia: 0.0,
        constant: 0.0,
    };
    let model = TwinModel::new(params);
    let x = StateVector::new(3e-6, 1e-6, 1e-6, 1e-6, 0.0);
    let xdot = model.transition_f(&x, &nominal_u(), &ThetaParams::zero()).unwrap();
    assert_eq!(xdot.to_array(), [0.0; STATE_DIM]);
}

#[test]
fn liquid_volume_balance_over_a_noiseless_run() {
    let model = TwinModel::new(ModelParams::default());
    let bounds = StateBounds::truth(&model.params);
    let u = nominal_u();
    let mut x = nominal_x();
    let start = x.v_l;
    let mut drawn = 0.0;
    for _ in 0..600 {
        drawn += x.phi_a * u.q_c * 1.0;
        x = model.step_euler(&x, &u, &ThetaParams::zero(), 1.0, &bounds).unwrap().state;
    }
    let decrement = start - x.v_l;
    assert!((decrement - drawn).abs() <= 1e-12 * drawn, "{decrement} vs {drawn}");
}

#[test]
fn coarse_euler_tracks_fine_reference() {
    let model = TwinModel::new(ModelParams::default());
    let bounds = StateBounds::truth(&model.params);
    let theta = ThetaParams { theta_da: -2e-5, ..ThetaParams::zero() };
    let u = nominal_u();
    let mut coarse = nominal_x();
    for _ in 0..100 {
        coarse = model.step_euler(&coarse, &u, &theta, 1.0, &bounds).unwrap().state;
    }
    let mut fine = nominal_x();
    for _ in 0..10_000 {
        fine = model.step_euler(&fine, &u, &theta, 0.01, &bounds).unwrap().state;
    }
    for i in 0..STATE_DIM {
        let (a, b) = (coarse.get(i), fine.get(i));
        assert!((a - b).abs() <= 1e-4 * b.abs(), "component {i}: {a} vs {b}");
    }
}

#[test]
fn transition_errors() {
    let model = TwinModel::new(ModelParams::default());
    let g = &model.params.geometry;
    let u = nominal_u();
    let t = ThetaParams::zero();
    assert!(model.transition_f(&nominal_x().with(3, g.r_nozzle0), &u, &t).is_err());
    assert!(model.transition_f(&nominal_x().with(1, g.v_vial), &u, &t).is_err());
    assert!(model.transition_f(&nominal_x().with(2, g.r_tube0), &u, &t).is_err());
}

/// Compares Jacobians entry-wise after scaling to nominal magnitudes; tiny
/// entries are judged against the largest entry of their row.
fn jacobian_close(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>, scale_in: &[f64], scale_out: &[f64]) {
    for i in 0..a.nrows() {
        let norm = |m: &nalgebra::DMatrix<f64>, j: usize| m[(i, j)] * scale_in[j] / scale_out[i];
        let row_max = (0..b.ncols()).map(|j| norm(b, j).abs()).fold(0.0, f64::max);
        for j in 0..a.ncols() {
            let (na, nb) = (norm(a, j), norm(b, j));
            let tol = 1e-5 * nb.abs().max(1e-3 * row_max).max(1e-300);
            assert!((na - nb).abs() <= tol, "entry ({i},{j}): {na} vs {nb}");
        }
    }
}

const STATE_SCALE: [f64; STATE_DIM] = [1e-6, 1e-6, 1e-6, 1e-6, 1e-7];

#[test]
fn jacobians_match_finer_differences() {
    let model = TwinModel::new(ModelParams::default());
    let u = nominal_u();
    let theta = ThetaParams { theta_da: -2e-5, theta_phia: 1e-3, ..ThetaParams::zero() };
    let x = nominal_x();
    let kernel = model.kernel(&u).unwrap();
    let m = Modifiers::default();
    let fine = central_difference::<STATE_DIM>(&x, |v| (1e-6 * v.abs()).max(1e-13), |s| {
        Ok(model.transition_with(s, &theta, &kernel, &m)?.to_array())
    })
    .unwrap();
    let jf = model.jacobian_f(&x, &u, &theta).unwrap();
    jacobian_close(&jf, &fine, &STATE_SCALE, &STATE_SCALE);
    let fine_h = central_difference::<5>(&x, |v| (1e-6 * v.abs()).max(1e-13), |s| {
        Ok(output_g(s, &u, &model.params)?.to_array())
    })
    .unwrap();
    let jh = model.jacobian_h(&x, &u).unwrap();
    jacobian_close(&jh, &fine_h, &STATE_SCALE, &model.params.noise.sigma_w);
}

proptest! {
    #[test]
    fn diffusion_probability_in_unit_interval(rhs in 0.0f64..2.0) {
        let p = diffusion_deposition_from_rhs(rhs);
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn settling_probability_in_unit_interval(alpha in 0.0f64..1.5) {
        let p = gravitational_deposition_from_alpha(alpha);
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn euler_step_respects_truth_bounds(
        d in 0.2f64..10.0, v in 0.1f64..4.9, drt in 0.0f64..50.0, drn in 0.0f64..30.0, phi in 0.0f64..2e-6,
        noise in proptest::array::uniform5(-1e-5f64..1e-5),
    ) {
        let model = TwinModel::new(ModelParams::default());
        let bounds = StateBounds::truth(&model.params);
        let x = StateVector::new(d * 1e-6, v * 1e-6, drt * 1e-6, drn * 1e-6, phi);
        let xdot = model.transition_f(&x, &nominal_u(), &ThetaParams::zero()).unwrap();
        let next = euler_update(&x, &xdot, 1.0, Some(&noise), &bounds).state;
        for i in 0..STATE_DIM {
            prop_assert!(next.get(i) >= bounds.lower[i] && next.get(i) <= bounds.upper[i]);
        }
        prop_assert!(next.v_l < model.params.geometry.v_vial);
    }

    #[test]
    fn transition_is_finite_on_valid_states(
        d in 0.1f64..15.0, v in 0.0f64..4.9, drt in 0.0f64..100.0, drn in 0.0f64..34.0, phi in 0.0f64..2e-6,
        qc in 10.0f64..40.0, qs in 30.0f64..80.0, ia in 250.0f64..500.0,
    ) {
        let model = TwinModel::new(ModelParams::default());
        let x = StateVector::new(d * 1e-6, v * 1e-6, drt * 1e-6, drn * 1e-6, phi);
        let u = InputVector::new(ia * MILLIAMP, qc * SCCM, qs * SCCM);
        prop_assert!(model.transition_f(&x, &u, &ThetaParams::zero()).unwrap().is_finite());
        let y = model.output_g(&x, &u).unwrap();
        prop_assert!(y.to_array().iter().all(|v| v.is_finite()));
    }
}
