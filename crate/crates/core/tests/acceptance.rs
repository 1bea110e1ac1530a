//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any fails.

use std::path::Path;
use std::time::{Duration, Instant};

use canard_sync::dynamics::{NetworkConfig, NetworkSystem, OscillatorParams, ReferenceModel, TimeScales};
use canard_sync::harness::{run_experiment, sweep_k, ExperimentConfig, Prepared};
use canard_sync::integrator::{integrate_network, IntegratorSettings, Trajectory};
use canard_sync::linger::{analyze_oscillator, empirical_passage, GeometrySettings};
use canard_sync::manifolds::{find_all_folds, solve_fast_manifold};
use canard_sync::sync::{
    check_variance_identity, coupling_threshold, trajectory_box_bound, MSource, ThresholdInputs,
};
use canard_sync::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn criterion_1() -> Result<Outcome> {
    let mut worst = 0.0f64;
    for e in 1..=6 {
        let eps = 10f64.powi(-e);
        for t_min in [0.1, 1.0, 10.0, 100.0] {
            let k = coupling_threshold(&ThresholdInputs { m: 0.0, eps_tol: eps, delta: 1.0, t_min, w0: 0.5 })?;
            let expected = -eps.ln() / (2.0 * t_min);
            worst = worst.max(((k - expected) / expected).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max relative error {worst:.2e}"))
}

fn reference() -> ExperimentConfig {
    ExperimentConfig::reference()
}

/// Run of the shipped network at `k`, stepped at exactly `h` to `t_end`.
fn uniform_run(p: &Prepared, scales: TimeScales, k: f64, h: f64, t_end: f64) -> Result<Trajectory> {
    let n = (t_end / h).round() as usize;
    let stops: Vec<f64> = (1..n).map(|i| i as f64 * h).collect();
    let settings = IntegratorSettings {
        max_step: h,
        initial_step: h,
        ..IntegratorSettings::default().with_tolerances(1e-6, 1e-9)
    };
    let sys = NetworkSystem::new(&p.model, NetworkConfig::new(p.params.len(), k)?, scales, &p.params)?;
    Ok(integrate_network(&sys, &p.initial, n as f64 * h, &settings, &[], &stops)?.0)
}

fn criteria_2_3(p: &Prepared) -> Result<(Outcome, Outcome)> {
    let config = reference();
    let scales = config.model.scales;
    let net = NetworkConfig::new(p.params.len(), 1.0)?;
    let t_end = scales.delta * p.t_min();
    let steps = [4e-3, 2e-3, 1e-3];
    let mut residuals = Vec::new();
    let mut cs = f64::INFINITY;
    let mut m_used = 0.0;
    for &h in &steps {
        let traj = uniform_run(p, scales, 1.0, h, t_end)?;
        let m = trajectory_box_bound(&p.model, &p.params, &traj, traj.t_end(), 0.1, config.analysis.bound_grid)?;
        let check = check_variance_identity(&traj, &p.model, &net, &scales, &p.params, m)?;
        cs = cs.min(check.min_cs_slack);
        m_used = m;
        residuals.push(check.residual);
    }
    let finest = residuals[2].iter().copied().fold(0.0, f64::max);
    // maxima over the interior samples common to all three grids
    let coarse = residuals[0].len();
    let shared =
        |r: &Vec<f64>, stride: usize| (0..coarse).map(|j| r[stride * (j + 1) - 1]).fold(0.0, f64::max);
    let maxima = [shared(&residuals[0], 1), shared(&residuals[1], 2), shared(&residuals[2], 4)];
    let orders: Vec<f64> = maxima.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let second_order = orders.iter().all(|&o| o >= 1.8);
    let c2 = Outcome {
        pass: finest <= 1e-5 && second_order,
        detail: format!(
            "max residual {finest:.2e} at h = 1e-3; shared-sample maxima {:.2e} / {:.2e} / {:.2e}, orders {:.2} {:.2}",
            maxima[0], maxima[1], maxima[2], orders[0], orders[1]
        ),
    };
    let c3 = Outcome { pass: cs >= -1e-9, detail: format!("min slack {cs:.3e} with M = {m_used:.4}") };
    Ok((c2, c3))
}

fn criterion_4(p: &Prepared) -> Result<Outcome> {
    let config = reference();
    let inputs = p.inputs(&config, 1.0);
    let mut worst = f64::NEG_INFINITY;
    let mut ok = true;
    let mut notes = Vec::new();
    for k in [0.5, 1.0, 2.0, 5.0] {
        let r = p.verify(&config, k, &inputs, MSource::TrajectoryBox)?.report;
        let v = r.envelope_max_violation.unwrap_or(f64::NEG_INFINITY);
        worst = worst.max(v);
        ok &= r.envelope_ok && r.branch.satisfied;
        notes.push(format!("k={k}: M={:.3}", r.m_check));
    }
    outcome(ok, format!("max (W - envelope) = {worst:.2e}; {}", notes.join(", ")))
}

fn criterion_5() -> Result<Outcome> {
    let mut ok = true;
    let mut notes = Vec::new();
    for seed in 1..=5 {
        let mut config = reference();
        config.model.seed = seed;
        config.analysis.eps_tol = 1e-3;
        let p = Prepared::new(&config)?;
        let (m, source) = p.threshold_m(&config)?;
        let inputs = p.inputs(&config, m);
        let k_star = coupling_threshold(&inputs)?;
        let r = p.verify(&config, 1.1 * k_star, &inputs, source)?.report;
        let pass = m > 0.0 && r.pass_at_t_min && r.pass_at_delta_t_min && r.branch.satisfied;
        ok &= pass;
        notes.push(format!(
            "seed {seed}: k* = {k_star:.1}, V(dt) = {:.1e}, V(t) = {:.1e}",
            r.v_at_delta_t_min, r.v_at_t_min
        ));
    }
    outcome(ok, notes.join("; "))
}

fn criterion_6(dir: &Path) -> Result<Outcome> {
    let mut config = reference();
    config.output_dir = dir.join("sweep");
    let grid = config.sweep.as_ref().map(|s| s.grid.clone()).unwrap_or_default();
    let sw = sweep_k(&config, &grid)?.sweep.expect("sweep table");
    let k_star = sw.k_star.unwrap_or(f64::NAN);
    let k_emp = sw.k_empirical();
    let pass = k_emp.is_some_and(|k| k <= k_star);
    let flags: String = sw.rows.iter().map(|r| if r.pass { '1' } else { '0' }).collect();
    outcome(pass, format!("k_empirical = {k_emp:?}, k* = {k_star:.1}, pass column {flags} over {} points", grid.len()))
}

fn criterion_7() -> Result<Outcome> {
    let model = ReferenceModel::default();
    let p = OscillatorParams::scalar(0.0);
    let g = analyze_oscillator(&model, &p, 0, &GeometrySettings::default())?;
    let mut errors = Vec::new();
    for (eps, delta) in [(0.05, 0.1), (0.02, 0.08), (0.01, 0.05)] {
        let sc = TimeScales::new(eps, delta)?;
        let (_, t) = empirical_passage(&model, &p, &g, &sc, &IntegratorSettings::default(), 0.25)?;
        let q = g.linger_time(&sc);
        errors.push(((t - q) / q).abs());
    }
    let pass = errors[2] < 0.05 && errors[0] > errors[1] && errors[1] > errors[2];
    outcome(
        pass,
        format!("relative errors {:.3}% / {:.3}% / {:.3}%", 100.0 * errors[0], 100.0 * errors[1], 100.0 * errors[2]),
    )
}

fn criterion_8() -> Result<Outcome> {
    let model = ReferenceModel::default();
    let p = OscillatorParams::scalar(0.0);
    let g = GeometrySettings::default();
    let charts = solve_fast_manifold(&model, &p, 0, &g.region, &g.grid, &g.fast)?;
    let residual = charts.iter().map(|c| c.max_residual()).fold(0.0, f64::max);
    let folds = find_all_folds(&charts, &model, &p)?;
    let mut worst = 0.0f64;
    let mut saw = [false, false];
    for f in &folds {
        let d_upper = f.v.abs();
        let d_lower = (f.v + 4.0 / 3.0).abs();
        worst = worst.max(d_upper.min(d_lower));
        saw[0] |= d_lower < 1e-8;
        saw[1] |= d_upper < 1e-8;
    }
    let pass = worst < 1e-8 && saw[0] && saw[1] && residual <= 1e-10;
    outcome(
        pass,
        format!("{} fold points, max distance to analytic root {worst:.1e}, max chart residual {residual:.1e}", folds.len()),
    )
}

fn criterion_9() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut violations = 0;
    let points = 10_000;
    for _ in 0..points {
        let i = ThresholdInputs {
            m: rng.gen_range(0.0..10.0),
            eps_tol: 10f64.powf(rng.gen_range(-9.0..-0.01)),
            delta: rng.gen_range(0.01..=1.0),
            t_min: rng.gen_range(0.1..500.0),
            w0: rng.gen_range(0.0..5.0),
        };
        let f: f64 = rng.gen_range(1.0..4.0);
        let k = coupling_threshold(&i)?;
        let more_m = coupling_threshold(&ThresholdInputs { m: i.m * f + 0.1, ..i })?;
        let more_w = coupling_threshold(&ThresholdInputs { w0: i.w0 * f + 0.1, ..i })?;
        let tighter = coupling_threshold(&ThresholdInputs { eps_tol: i.eps_tol / f, ..i })?;
        let shorter = coupling_threshold(&ThresholdInputs { t_min: i.t_min / f, ..i })?;
        violations += [more_m, more_w, tighter, shorter].iter().filter(|&&x| x < k).count();
    }
    outcome(violations == 0, format!("{violations} violations over {points} points x 4 directions"))
}

fn criterion_10(dir: &Path) -> Result<Outcome> {
    let mut a = reference();
    a.output_dir = dir.join("det_a");
    let mut b = a.clone();
    b.output_dir = dir.join("det_b");
    run_experiment(&a)?;
    run_experiment(&b)?;
    let mut names: Vec<String> = std::fs::read_dir(&a.output_dir)?
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    let mut differ = Vec::new();
    for n in &names {
        if std::fs::read(a.output_dir.join(n))? != std::fs::read(b.output_dir.join(n))? {
            differ.push(n.clone());
        }
    }
    outcome(differ.is_empty() && !names.is_empty(), format!("{} CSV files compared, differing: {differ:?}", names.len()))
}

fn report(id: &str, name: &str, budget: Duration, start: Instant, r: Result<Outcome>) -> bool {
    let elapsed = start.elapsed();
    let (pass, detail) = match r {
        Ok(o) => (o.pass, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let in_time = elapsed <= budget;
    let ok = pass && in_time;
    let timing = if in_time { String::new() } else { format!(", over budget {:.0} s", budget.as_secs_f64()) };
    println!(
        "criterion {id:>2} {}: {name}: {detail} [{:.2} s{timing}]",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    ok
}

fn main() {
    let secs = Duration::from_secs;
    let dir = TempDir::new().expect("temporary directory");
    let mut all = true;

    let t = Instant::now();
    all &= report("1", "simplified threshold form", secs(1), t, criterion_1());

    // the shared network setup is charged to criteria 2 and 3
    let t = Instant::now();
    let prepared = Prepared::new(&reference());
    let (c2, c3, c4) = match &prepared {
        Ok(p) => match criteria_2_3(p) {
            Ok((a, b)) => (Ok(a), Ok(b), Some(p)),
            Err(e) => (Err(e), outcome(false, "not run: identity run failed".into()), Some(p)),
        },
        Err(e) => {
            let msg = format!("not run: setup failed: {e}");
            (outcome(false, msg.clone()), outcome(false, msg), None)
        }
    };
    all &= report("2", "variance identity residual and FD order", secs(30), t, c2);
    all &= report("3", "Cauchy-Schwarz slack", secs(30), t, c3);
    let t = Instant::now();
    let c4 = match c4 {
        Some(p) => criterion_4(p),
        None => outcome(false, "not run: setup failed".into()),
    };
    all &= report("4", "Gronwall envelope with measured M", secs(120), t, c4);

    let t = Instant::now();
    all &= report("5", "sufficiency at 1.1 k* over 5 seeds", secs(300), t, criterion_5());
    let t = Instant::now();
    all &= report("6", "empirical onset below k*", secs(600), t, criterion_6(dir.path()));
    let t = Instant::now();
    all &= report("7", "linger time quadrature vs simulation", secs(300), t, criterion_7());
    let t = Instant::now();
    all &= report("8", "fold and chart geometry", secs(30), t, criterion_8());
    let t = Instant::now();
    all &= report("9", "threshold monotonicity", secs(5), t, criterion_9());
    let t = Instant::now();
    all &= report("10", "determinism", secs(60), t, criterion_10(dir.path()));

    if !all {
        std::process::exit(1);
    }
}
