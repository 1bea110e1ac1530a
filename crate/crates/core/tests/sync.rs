use std::sync::OnceLock;

use canard_sync::dynamics::{
    heterogeneity_bound, make_reference_network, ClosureModel, Component, GridSpec, NetworkConfig, NetworkState,
    NetworkSystem, OscillatorParams, ReferenceCoefficients, ReferenceModel, State, StateBox, TimeScales,
};
use canard_sync::integrator::{integrate_network, IntegratorSettings, Trajectory};
use canard_sync::linger::{analyze_network, GeometrySettings, OscillatorGeometry};
use canard_sync::manifolds::FastManifoldChart;
use canard_sync::sync::*;
use canard_sync::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Fixture {
    model: ReferenceModel,
    params: Vec<OscillatorParams>,
    scales: TimeScales,
    geometry: Vec<OscillatorGeometry>,
    t_min: f64,
}

impl Fixture {
    fn charts(&self) -> Vec<Vec<FastManifoldChart>> {
        self.geometry.iter().map(|g| g.charts.clone()).collect()
    }

    fn initial(&self, jitter: f64, seed: u64) -> NetworkState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = self
            .geometry
            .iter()
            .map(|g| {
                let mut s = g.entry.anchor_state();
                s[0] += jitter * rng.gen_range(-1.0..=1.0);
                s
            })
            .collect();
        NetworkState::new(0.0, rows)
    }
}

fn build(spread: f64) -> Fixture {
    let (model, params) = make_reference_network(10, spread, 7, ReferenceCoefficients::default()).unwrap();
    let scales = TimeScales::new(0.05, 0.1).unwrap();
    let geometry: Vec<_> = analyze_network(&model, &params, &GeometrySettings::default())
        .into_iter()
        .map(|g| g.unwrap())
        .collect();
    let t_min = geometry.iter().map(|g| g.linger_time(&scales)).fold(f64::INFINITY, f64::min);
    Fixture { model, params, scales, geometry, t_min }
}

fn heterogeneous() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| build(0.05))
}

fn homogeneous() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| build(0.0))
}

fn single(v: &[f64]) -> NetworkState {
    NetworkState::new(0.0, v.iter().map(|&x| [x, 0.0, 0.0, 0.0, 0.0]).collect())
}

#[test]
fn variance_examples() {
    assert_eq!(variance(&single(&[1.0, 1.0, 1.0])), (0.0, 1.0));
    assert_eq!(variance(&single(&[0.0, 2.0])), (1.0, 1.0));
    let (v, m) = variance(&single(&[0.0, 1.0, 2.0]));
    assert!((v - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(m, 1.0);
}

/// Two frozen oscillators sampled on a short grid.
fn constant_pair() -> Trajectory {
    let times: Vec<f64> = (0..6).map(|i| i as f64 * 0.5).collect();
    let mut states = Vec::new();
    for _ in &times {
        states.extend_from_slice(&[0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }
    let derivs = vec![0.0; states.len()];
    Trajectory::from_samples(10, times, states, derivs).unwrap()
}

#[test]
fn trace_of_constant_pair() {
    let tr = sync_trace(&constant_pair()).unwrap();
    assert_eq!(tr.len(), 6);
    assert!(tr.v_var.iter().all(|&v| v == 0.25));
    assert!(tr.w.iter().all(|&w| w == 0.5));
    assert!(tr.v_mean.iter().all(|&m| m == 0.5));

    let mut out = Vec::new();
    tr.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,V_v,W,envelope,residual,cs_slack"));
    assert_eq!(lines.next(), Some("0,0.25,0.5,,,"));
}

#[test]
fn trace_rejects_non_network() {
    let tr = Trajectory::from_samples(3, vec![0.0], vec![0.0; 3], vec![0.0; 3]).unwrap();
    assert!(matches!(sync_trace(&tr), Err(Error::Argument(_))));
}

#[test]
fn symmetric_run_has_zero_variance() {
    let f = homogeneous();
    let row = f.geometry[0].entry.anchor_state();
    let init = NetworkState::new(0.0, vec![row; 10]);
    let sys = NetworkSystem::new(&f.model, NetworkConfig::new(10, 1.0).unwrap(), f.scales, &f.params).unwrap();
    let (traj, _) = integrate_network(&sys, &init, 50.0, &IntegratorSettings::default(), &[], &[]).unwrap();
    let tr = sync_trace(&traj).unwrap();
    assert!(tr.max_variance() <= 1e-20);
}

#[test]
fn squared_w_matches_variance() {
    let f = heterogeneous();
    let sys = NetworkSystem::new(&f.model, NetworkConfig::new(10, 0.5).unwrap(), f.scales, &f.params).unwrap();
    let (traj, _) = integrate_network(&sys, &f.initial(0.05, 3), 40.0, &IntegratorSettings::default(), &[], &[])
        .unwrap();
    let tr = sync_trace(&traj).unwrap();
    let worst = tr.w.iter().zip(&tr.v_var).map(|(w, v)| (w * w - v).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-15 * (1.0 + tr.max_variance()));
    assert!(tr.v_var.iter().all(|&v| v >= 0.0));
    assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    for i in [0, traj.len() / 2, traj.len() - 1] {
        let s = traj.state(i);
        let mean = s.iter().step_by(5).sum::<f64>() / 10.0;
        assert!((tr.v_mean[i] - mean).abs() < 1e-14);
    }
}

fn inputs(m: f64, eps_tol: f64, delta: f64, t_min: f64, w0: f64) -> ThresholdInputs {
    ThresholdInputs { m, eps_tol, delta, t_min, w0 }
}

#[test]
fn threshold_examples() {
    for t in [0.1, 1.0, 7.5, 100.0] {
        let k = coupling_threshold(&inputs(0.0, 0.01, 1.0, t, 0.5)).unwrap();
        assert!((k - 10f64.ln() / t).abs() <= 1e-12 * k);
        assert!((k + 0.01f64.ln() / (2.0 * t)).abs() <= 1e-12 * k);
    }

    let th = threshold_terms(&inputs(1.0, 0.04, 0.25, 4.0, 0.5)).unwrap();
    assert!((th.steady - 10.0).abs() < 1e-12);
    assert!((th.transient - 5f64.ln()).abs() < 1e-12);
    assert_eq!(th.k_star, th.steady);

    let eps: f64 = 0.09;
    let th = threshold_terms(&inputs(0.7, eps, 0.5, 3.0, eps.sqrt() / 2.0)).unwrap();
    assert!(th.transient.abs() < 1e-15);
    assert!((th.k_star - 1.4 / eps.sqrt()).abs() < 1e-12);
}

#[test]
fn threshold_rejects_bad_inputs() {
    for bad in [
        inputs(1.0, 0.0, 0.5, 1.0, 1.0),
        inputs(1.0, -1e-3, 0.5, 1.0, 1.0),
        inputs(1.0, 1e-3, 0.5, 0.0, 1.0),
        inputs(1.0, 1e-3, 0.5, -2.0, 1.0),
        inputs(1.0, 1e-3, 0.0, 1.0, 1.0),
        inputs(1.0, 1e-3, 1.5, 1.0, 1.0),
        inputs(-1.0, 1e-3, 0.5, 1.0, 1.0),
        inputs(1.0, 1e-3, 0.5, 1.0, -0.1),
    ] {
        assert!(matches!(coupling_threshold(&bad), Err(Error::Argument(_))), "{bad:?}");
    }
}

#[test]
fn envelope_examples() {
    let times = [0.0, 0.3, 1.0, 7.0];
    let (m, k) = (0.6, 3.0);
    let flat = gronwall_envelope(2.0 * m / k, m, k, &times).unwrap();
    assert!(flat.iter().all(|&e| (e - 0.4).abs() < 1e-15));

    let pure = gronwall_envelope(1.5, 0.0, k, &times).unwrap();
    for (e, t) in pure.iter().zip(times) {
        assert!((e - 1.5 * (-k * t).exp()).abs() < 1e-15);
    }

    for (w0, m, k) in [(0.1, 2.0, 0.5), (3.0, 0.1, 9.0), (0.0, 1.0, 1.0)] {
        assert!((gronwall_envelope(w0, m, k, &[0.0]).unwrap()[0] - w0).abs() <= 1e-15 * (1.0 + m / k));
    }

    assert!(matches!(gronwall_envelope(1.0, 1.0, 0.0, &times), Err(Error::Argument(_))));
    assert!(matches!(gronwall_envelope(1.0, 1.0, -1.0, &times), Err(Error::Argument(_))));
}

fn valid_inputs() -> impl Strategy<Value = ThresholdInputs> {
    (0.0..10.0f64, -6.0..-0.5f64, 0.01..1.0f64, 0.1..500.0f64, 0.0..5.0f64)
        .prop_map(|(m, le, delta, t_min, w0)| inputs(m, 10f64.powf(le), delta, t_min, w0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn threshold_monotone(i in valid_inputs(), f in 1.0..4.0f64, dm in 0.0..3.0f64) {
        let k = coupling_threshold(&i).unwrap();
        let more_m = coupling_threshold(&ThresholdInputs { m: i.m + dm, ..i }).unwrap();
        let more_w = coupling_threshold(&ThresholdInputs { w0: i.w0 * f + dm, ..i }).unwrap();
        let looser = coupling_threshold(&ThresholdInputs { eps_tol: (i.eps_tol * f).min(1.0), ..i }).unwrap();
        let longer = coupling_threshold(&ThresholdInputs { t_min: i.t_min * f, ..i }).unwrap();
        prop_assert!(more_m >= k);
        prop_assert!(more_w >= k);
        prop_assert!(looser <= k);
        prop_assert!(longer <= k);
        prop_assert!(k >= 0.0);
    }

    #[test]
    fn envelope_bounded_by_start_and_floor(w0 in 0.0..5.0f64, m in 0.0..3.0f64, k in 0.01..50.0f64, t in 0.0..20.0f64) {
        let e = gronwall_envelope(w0, m, k, &[t]).unwrap()[0];
        let floor = 2.0 * m / k;
        prop_assert!(e >= w0.min(floor) - 1e-12 * (1.0 + floor));
        prop_assert!(e <= w0.max(floor) + 1e-12 * (1.0 + floor));
    }
}

/// Oscillators with constant `h1 = c_i` and nothing else moving: with `k = 0`
/// each `v_i` grows linearly, so `V_v` is an exact quadratic in time.
#[test]
fn identity_against_linear_growth() {
    let model = ClosureModel::new("drift").with(Component::H1, |_, mu| mu[0]);
    let c = [0.3, -0.2, 1.1, 0.0];
    let params: Vec<_> = c.iter().map(|&x| OscillatorParams::scalar(x)).collect();
    let v0 = [0.5, -1.0, 0.25, 2.0];
    let init = NetworkState::new(0.0, v0.iter().map(|&v| [v, 0.0, 0.0, 0.0, 0.0]).collect());
    let config = NetworkConfig::new(4, 0.0).unwrap();
    let scales = TimeScales::new(0.1, 0.5).unwrap();
    let sys = NetworkSystem::new(&model, config, scales, &params).unwrap();
    let stops: Vec<f64> = (1..200).map(|i| i as f64 * 0.05).collect();
    let (traj, _) = integrate_network(&sys, &init, 10.0, &IntegratorSettings::default(), &[], &stops).unwrap();

    let check = check_variance_identity(&traj, &model, &config, &scales, &params, 1.1).unwrap();
    assert!(check.max_residual <= 1e-6, "residual {}", check.max_residual);
    assert!(check.max_mean_field <= 1e-9);
    assert!(check.min_cs_slack >= -1e-9);
    let tr = sync_trace(&traj).unwrap();
    for i in (1..traj.len() - 1).step_by(17) {
        let t = traj.times[i];
        let v: Vec<f64> = (0..4).map(|j| v0[j] + c[j] * t).collect();
        let (var, _) = variance_of(&v);
        assert!((tr.v_var[i] - var).abs() < 1e-9);
        }
}

#[test]
fn identity_needs_three_samples() {
    let model = ClosureModel::new("zero");
    let params = vec![OscillatorParams::scalar(0.0); 2];
    let scales = TimeScales::new(0.1, 0.5).unwrap();
    let config = NetworkConfig::new(2, 1.0).unwrap();
    let short = constant_pair();
    let mut two = short.clone();
    two.truncate(2);
    assert!(matches!(
        check_variance_identity(&two, &model, &config, &scales, &params, 1.0),
        Err(Error::Argument(_))
    ));
    assert!(check_variance_identity(&short, &model, &config, &scales, &params, 1.0).is_ok());
}

fn tight() -> IntegratorSettings {
    IntegratorSettings::default().with_tolerances(1e-12, 1e-14)
}

/// Reference run stepped at exactly `h` over `[0, t_end]`: the tolerances
/// are loose enough that the step is always capped by `max_step`.
fn uniform_run(f: &Fixture, k: f64, h: f64, t_end: f64) -> Trajectory {
    let n = (t_end / h).round() as usize;
    let stops: Vec<f64> = (1..n).map(|i| i as f64 * h).collect();
    let settings = IntegratorSettings {
        max_step: h,
        initial_step: h,
        ..IntegratorSettings::default().with_tolerances(1e-6, 1e-9)
    };
    let sys = NetworkSystem::new(&f.model, NetworkConfig::new(10, k).unwrap(), f.scales, &f.params).unwrap();
    let traj = integrate_network(&sys, &f.initial(0.05, 11), n as f64 * h, &settings, &[], &stops).unwrap().0;
    assert_eq!(traj.len(), n + 1);
    traj
}

/// `h^2/6` times the largest third difference quotient of `s`, on a uniform
/// grid of spacing `h`.
fn truncation_estimate(s: &[f64], h: f64) -> f64 {
    s.windows(4)
        .map(|w| ((w[3] - 3.0 * w[2] + 3.0 * w[1] - w[0]) / h.powi(3)).abs())
        .fold(0.0, f64::max)
        * h
        * h
        / 6.0
}

#[test]
fn homogeneous_identity_within_truncation() {
    let f = homogeneous();
    let h = 4e-3;
    let traj = uniform_run(f, 1.0, h, 10.0);
    let config = NetworkConfig::new(10, 1.0).unwrap();
    let check = check_variance_identity(&traj, &f.model, &config, &f.scales, &f.params, 0.0).unwrap();
    let tr = sync_trace(&traj).unwrap();
    let var_bound = 1.5 * truncation_estimate(&tr.v_var, h) + 1e-12;
    let mean_bound = 1.5 * truncation_estimate(&tr.v_mean, h) + 1e-12;
    assert!(check.max_residual <= var_bound, "{} > {}", check.max_residual, var_bound);
    assert!(check.max_mean_field <= mean_bound, "{} > {}", check.max_mean_field, mean_bound);
}

#[test]
fn identity_converges_at_second_order() {
    let f = heterogeneous();
    let config = NetworkConfig::new(10, 1.0).unwrap();
    let t_end = f.scales.delta * f.t_min;
    let runs: Vec<Vec<f64>> = [4e-3, 2e-3, 1e-3]
        .iter()
        .map(|&h| {
            let traj = uniform_run(f, 1.0, h, t_end);
            check_variance_identity(&traj, &f.model, &config, &f.scales, &f.params, 1.0).unwrap().residual
        })
        .collect();
    assert!(runs[2].iter().copied().fold(0.0, f64::max) <= 1e-5);
    // compare on the coarse interior samples, shared by every grid
    let coarse = runs[0].len();
    let shared = |r: &Vec<f64>, stride: usize| (0..coarse).map(|j| r[stride * (j + 1) - 1]).fold(0.0, f64::max);
    let maxima = [shared(&runs[0], 1), shared(&runs[1], 2), shared(&runs[2], 4)];
    for w in maxima.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.9, "{maxima:?}");
    }
}

#[test]
fn cauchy_schwarz_slack_on_reference_run() {
    let f = heterogeneous();
    let config = NetworkConfig::new(10, 1.0).unwrap();
    let traj = uniform_run(f, 1.0, 4e-3, f.scales.delta * f.t_min);
    let rows: Vec<State> = (0..traj.len())
        .flat_map(|i| {
            let s = traj.state(i).to_vec();
            (0..10).map(move |o| [s[5 * o], s[5 * o + 1], s[5 * o + 2], s[5 * o + 3], s[5 * o + 4]])
        })
        .collect();
    let bbox = StateBox::bounding(rows.iter()).unwrap().inflate(0.1);
    let m = heterogeneity_bound(&f.model, &bbox, &f.params, GridSpec::default()).unwrap().m;
    assert!(m > 0.0);
    let check = check_variance_identity(&traj, &f.model, &config, &f.scales, &f.params, m).unwrap();
    assert!(check.min_cs_slack >= -1e-9, "{}", check.min_cs_slack);
    assert!(check.max_mean_field <= 1e-3, "{}", check.max_mean_field);
}

fn verify(
    f: &Fixture,
    k: f64,
    init: &NetworkState,
    inputs: &ThresholdInputs,
    source: MSource,
    integrator: IntegratorSettings,
) -> Verification {
    verify_theorem(
        &f.model,
        &NetworkConfig::new(10, k).unwrap(),
        &f.scales,
        &f.params,
        &f.charts(),
        init,
        inputs,
        source,
        &VerifySettings { integrator, ..Default::default() },
    )
    .unwrap()
}

#[test]
fn identical_rows_pass_trivially() {
    let f = homogeneous();
    let row = f.geometry[0].entry.anchor_state();
    let init = NetworkState::new(0.0, vec![row; 10]);
    let i = inputs(0.0, 1e-12, f.scales.delta, f.t_min, 0.0);
    let v = verify(f, 0.0, &init, &i, MSource::UserSupplied, IntegratorSettings::default());
    assert_eq!(v.report.verdict, Verdict::Pass);
    assert_eq!(v.report.v_at_t_min, 0.0);
    assert!(v.trace.max_variance() <= 1e-20);
}

#[test]
fn homogeneous_strong_coupling_synchronizes() {
    let f = homogeneous();
    let init = f.initial(0.1, 5);
    let w0 = variance(&init).0.sqrt();
    let eps_tol = 1e-6;
    let pilot = verify(f, 0.0, &init, &inputs(0.0, eps_tol, f.scales.delta, f.t_min, w0), MSource::PilotBox, tight());
    let m = pilot.report.m_check;
    let i = inputs(m, eps_tol, f.scales.delta, f.t_min, w0);
    let k = 2.0 * coupling_threshold(&i).unwrap();
    let a = verify(f, k, &init, &i, MSource::UserSupplied, IntegratorSettings::default());
    let b = verify(f, k, &init, &i, MSource::UserSupplied, tight());
    for r in [&a.report, &b.report] {
        assert!(r.k_above_threshold);
        assert!(r.branch.satisfied);
        assert!(r.v_at_delta_t_min < eps_tol);
        assert_eq!(r.verdict, Verdict::Pass);
    }
    let rel = (a.report.v_at_delta_t_min - b.report.v_at_delta_t_min).abs();
    assert!(rel <= 1e-3 * b.report.v_at_delta_t_min + 1e-14, "{} vs {}", a.report.v_at_delta_t_min, b.report.v_at_delta_t_min);
}

#[test]
fn uncoupled_heterogeneous_network_fails() {
    let f = heterogeneous();
    let init = f.initial(0.05, 1);
    let i = inputs(1.0, 1e-6, f.scales.delta, f.t_min, variance(&init).0.sqrt());
    let v = verify(f, 0.0, &init, &i, MSource::TrajectoryBox, IntegratorSettings::default());
    assert_eq!(v.report.verdict, Verdict::Fail);
    assert!(!v.report.pass_at_t_min);
    assert!(v.report.envelope_max_violation.is_none());
    assert_eq!(v.report.m_check_source, MSource::TrajectoryBox);
}

#[test]
fn window_beyond_branch_is_invalid() {
    let f = heterogeneous();
    let init = f.initial(0.05, 1);
    // delta t_min far beyond the passage: the fold is reached first
    let i = inputs(1.0, 1e-3, f.scales.delta, 20.0 * f.t_min, variance(&init).0.sqrt());
    let v = verify(f, 0.0, &init, &i, MSource::UserSupplied, IntegratorSettings::default());
    assert!(v.report.branch.exit.is_some());
    assert!(!v.report.branch.satisfied);
    assert_eq!(v.report.verdict, Verdict::Invalid);
}

#[test]
fn envelope_holds_with_measured_m() {
    let f = heterogeneous();
    let init = f.initial(0.05, 2);
    let w0 = variance(&init).0.sqrt();
    for k in [0.5, 1.0, 2.0, 5.0] {
        let i = inputs(1.0, 1e-3, f.scales.delta, f.t_min, w0);
        let v = verify(f, k, &init, &i, MSource::TrajectoryBox, IntegratorSettings::default());
        let r = &v.report;
        assert!(r.branch.satisfied);
        assert!(r.envelope_ok, "k = {k}: violation {:?}", r.envelope_max_violation);
        assert!(r.min_cs_slack >= -1e-9);
        let env = v.trace.envelope.as_ref().unwrap();
        assert_eq!(env.len(), v.trace.len());
        assert!((env[0] - w0).abs() <= 1e-13);

        let json = serde_json::to_string(r).unwrap();
        let back: VerificationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(&back, r);
    }
}
