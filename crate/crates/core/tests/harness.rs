use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use canard_sync::harness::*;
use canard_sync::sync::Verdict;
use canard_sync::Error;
use proptest::prelude::*;
use tempfile::TempDir;

fn reference_in(dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::reference();
    c.output_dir = dir.to_path_buf();
    c
}

/// The shipped sweep, run once for every test that reads it.
fn shipped_sweep() -> &'static (TempDir, RunArtifact) {
    static S: OnceLock<(TempDir, RunArtifact)> = OnceLock::new();
    S.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let c = reference_in(dir.path());
        let grid = c.sweep.as_ref().unwrap().grid.clone();
        let art = sweep_k(&c, &grid).unwrap();
        (dir, art)
    })
}

#[test]
fn shipped_config_round_trips() {
    let c = ExperimentConfig::reference();
    let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
    assert_eq!(back, c);
    let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
    assert_eq!(back, c);
    assert_eq!(c.hash().unwrap(), back.hash().unwrap());
    assert_eq!(c.hash().unwrap().len(), 64);
}

#[test]
fn load_picks_format_from_extension() {
    let dir = TempDir::new().unwrap();
    let c = ExperimentConfig::reference();
    let json = dir.path().join("c.json");
    std::fs::write(&json, c.to_json().unwrap()).unwrap();
    assert_eq!(ExperimentConfig::load(&json).unwrap(), c);
    let toml = dir.path().join("c.toml");
    std::fs::write(&toml, REFERENCE_CONFIG).unwrap();
    assert_eq!(ExperimentConfig::load(&toml).unwrap(), c);
}

#[test]
fn invalid_configs_are_rejected_before_running() {
    let base = REFERENCE_CONFIG;
    let bad = [
        base.replace("n = 10", "n = 0"),
        base.replace("id = \"hr5-reference\"", "id = \"fhn\""),
        base.replace("eps_tol = 1e-5", "eps_tol = 0.0"),
        base.replace("grid = [0.0, 1.0,", "grid = [1.0, 0.0,"),
        base.replace("jitter = 0.05", "jitter = 0.05\nbogus = 1"),
        base.replace("eps_ts = 0.05", "eps_ts = 0.0"),
        base.replace("seed = 7", "seed = -7"),
        base.replace("jitter = 0.05", "jitter = 0.05\ninitial = [[0.0, 0.0, 0.0, 0.0, 0.0]]"),
    ];
    for text in &bad {
        assert!(matches!(ExperimentConfig::from_toml(text), Err(Error::Config(_))), "{text}");
    }
}

fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
    (
        1usize..50,
        0.0f64..1e4,
        0.0f64..0.5,
        0..=i64::MAX as u64,
        1e-9f64..1.0,
        proptest::option::of(0.0f64..10.0),
        proptest::option::of(0.0f64..1.0),
        0.0f64..0.2,
        proptest::option::of(proptest::collection::vec(0.0f64..100.0, 1..6)),
    )
        .prop_map(|(n, k, spread, seed, eps, m, w0, jitter, grid)| {
            let mut c = ExperimentConfig::reference();
            c.network.n = n;
            c.network.k = k;
            c.model.spread = spread;
            c.model.seed = seed;
            c.analysis.eps_tol = eps;
            c.analysis.m = m;
            c.analysis.w0 = w0;
            c.analysis.jitter = jitter;
            c.sweep = grid.map(|mut g| {
                g.sort_by(f64::total_cmp);
                g.dedup();
                SweepBlock { parameter: SweepParameter::K, grid: g }
            });
            c
        })
}

proptest! {
    #[test]
    fn config_round_trip(c in arb_config()) {
        prop_assert!(c.validate().is_ok());
        let t = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        prop_assert_eq!(&t, &c);
        let j = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
        prop_assert_eq!(&j, &c);
    }
}

fn csv_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    names
}

#[test]
fn reference_run_is_deterministic_and_passes() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let ra = run_experiment(&reference_in(a.path())).unwrap();
    let rb = run_experiment(&reference_in(b.path())).unwrap();

    let files = csv_files(a.path());
    assert_eq!(files, csv_files(b.path()));
    for f in ["linger.csv", "manifold_fast.csv", "manifold_slow.csv", "sync_trace.csv", "trajectory.csv"] {
        assert!(files.iter().any(|n| n == f), "{f} missing");
    }
    for f in &files {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }

    let v = ra.verification.as_ref().unwrap();
    assert_eq!(ra.passed(), Some(true));
    assert_eq!(v.verdict, Verdict::Pass);
    assert!(v.k_above_threshold);
    assert_eq!(ra.manifest.passed, Some(true));
    assert_eq!(rb.verification.as_ref().unwrap(), v);

    // manifest hash is the hash of the config written beside it
    let written = std::fs::read_to_string(a.path().join("config.toml")).unwrap();
    let parsed = ExperimentConfig::from_toml(&written).unwrap();
    assert_eq!(parsed.hash().unwrap(), ra.manifest.config_hash);
    assert_eq!(ra.manifest.seed, 7);
    for f in &ra.manifest.files {
        assert!(a.path().join(f).exists(), "{f} listed but absent");
    }
    assert!(ra.manifest.stages.iter().all(|s| s.status == StageStatus::Ok));
    let names: Vec<_> = ra.manifest.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(names, ["model", "manifold", "sections", "linger", "simulate", "verify"]);
}

#[test]
fn single_oscillator_has_zero_variance() {
    let dir = TempDir::new().unwrap();
    let mut c = reference_in(dir.path());
    c.network.n = 1;
    c.network.k = 1.0;
    let art = run_experiment(&c).unwrap();
    let v = art.verification.unwrap();
    assert_eq!(v.v_at_t_min, 0.0);
    assert_eq!(v.v_at_delta_t_min, 0.0);
    assert!(art.trace.unwrap().v_var.iter().all(|&x| x == 0.0));
}

#[test]
fn failed_stage_is_recorded_and_earlier_files_kept() {
    let dir = TempDir::new().unwrap();
    let mut c = reference_in(dir.path());
    c.sections.explicit = Some(canard_sync::linger::SectionOffsets {
        delta_x: 100.0,
        delta_y: 0.01,
        delta_z: 0.01,
        delta_x_pre: 0.01,
        delta_y_pre: 0.01,
        delta_z_pre: 0.01,
    });
    let err = run_experiment(&c).unwrap_err();
    assert!(matches!(&err, Error::Stage { stage, .. } if stage == "manifold"), "{err}");
    let manifest: Manifest =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    let failed = manifest.failed_stage().unwrap();
    assert_eq!(failed.stage, "manifold");
    assert!(failed.error.as_ref().unwrap().contains("overlap"));
    assert!(dir.path().join("config.toml").exists());
}

#[test]
fn shipped_sweep_brackets_threshold() {
    let (_, art) = shipped_sweep();
    let sw = art.sweep.as_ref().unwrap();
    let k_star = sw.k_star.unwrap();
    assert_eq!(sw.rows.len(), 8);
    assert!(sw.rows.iter().all(|r| r.error.is_none()));
    // the uncoupled row fails at the shipped tolerance
    assert!(!sw.rows[0].pass);
    // pass flips at most once along the grid
    assert!(sw.rows.windows(2).all(|w| w[0].pass <= w[1].pass));
    let k_emp = sw.k_empirical().unwrap();
    assert!(k_emp <= k_star);
    assert!(sw.rows.iter().filter(|r| r.k > k_star).all(|r| r.pass));
}

#[test]
fn twice_threshold_passes_and_uncoupled_fails() {
    let (_, shipped) = shipped_sweep();
    let k_star = shipped.sweep.as_ref().unwrap().k_star.unwrap();
    let dir = TempDir::new().unwrap();
    let c = reference_in(dir.path());
    let sw = sweep_k(&c, &[0.0, k_star, 2.0 * k_star]).unwrap().sweep.unwrap();
    assert!(!sw.rows[0].pass);
    assert_eq!(sw.rows[0].verdict, Some(Verdict::Fail));
    assert!(sw.rows[2].pass);
    assert_eq!(sw.k_star, Some(k_star));
}

#[test]
fn sweep_rows_do_not_depend_on_worker_count() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let grid = [0.0, 2.0, 20.0, 200.0];
    let serial = sweep_k_with(&reference_in(a.path()), &grid, Some(1)).unwrap().sweep.unwrap();
    let parallel = sweep_k_with(&reference_in(b.path()), &grid, Some(4)).unwrap().sweep.unwrap();
    assert_eq!(serial, parallel);
    let x = std::fs::read(a.path().join("sweep.csv")).unwrap();
    let y = std::fs::read(b.path().join("sweep.csv")).unwrap();
    assert_eq!(x, y);
}

#[test]
fn sweep_rejects_bad_grids() {
    let dir = TempDir::new().unwrap();
    let c = reference_in(dir.path());
    for grid in [vec![], vec![2.0, 1.0], vec![1.0, 1.0], vec![-1.0, 0.0], vec![f64::NAN]] {
        assert!(matches!(sweep_k(&c, &grid), Err(Error::Argument(_))), "{grid:?}");
    }
}

#[test]
fn plot_schemas() {
    let (_, sweep) = shipped_sweep();
    let phase = plot_data(sweep, PlotKind::PhaseDiagram).unwrap();
    let mut lines = phase.lines();
    assert_eq!(lines.next(), Some("k,V_v_at_window,pass"));
    assert_eq!(lines.count(), 8);
    assert!(phase.lines().nth(1).unwrap().starts_with("0,"));

    let slice = plot_data(sweep, PlotKind::ManifoldSlice).unwrap();
    assert_eq!(slice.lines().next(), Some("x,v_attracting,v_repelling"));
    // attracting below repelling wherever both are present
    let mut both = 0;
    for l in slice.lines().skip(1) {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f.len(), 3);
        if let (Ok(a), Ok(r)) = (f[1].parse::<f64>(), f[2].parse::<f64>()) {
            assert!(a < r, "{l}");
            both += 1;
        }
    }
    assert!(both > 0);

    let dir = TempDir::new().unwrap();
    let mut c = reference_in(dir.path());
    c.network.n = 2;
    let art = run_experiment(&c).unwrap();
    let trace = plot_data(&art, PlotKind::SyncTrace).unwrap();
    assert_eq!(trace.lines().next(), Some("t,V_v,W,envelope"));
    assert_eq!(trace.lines().count(), art.trace.as_ref().unwrap().len() + 1);
    let path = emit_plot_data(&art, PlotKind::SyncTrace).unwrap();
    assert_eq!(std::fs::read_to_string(path).unwrap(), trace);
}

#[test]
fn plot_needs_upstream_stage() {
    let dir = TempDir::new().unwrap();
    let art = run_through(&reference_in(dir.path()), Stage::Model).unwrap();
    for (kind, stage) in [
        (PlotKind::SyncTrace, "simulate"),
        (PlotKind::PhaseDiagram, "sweep"),
        (PlotKind::ManifoldSlice, "manifold"),
    ] {
        match plot_data(&art, kind) {
            Err(Error::Dependency(s)) => assert_eq!(s, stage),
            other => panic!("{kind:?}: {other:?}"),
        }
    }
    assert!("nonsense".parse::<PlotKind>().is_err());
    assert_eq!("phase_diagram".parse::<PlotKind>().unwrap(), PlotKind::PhaseDiagram);
}

#[test]
fn linger_table_schema() {
    let (_, art) = shipped_sweep();
    let linger = art.linger.as_ref().unwrap();
    assert_eq!(linger.oscillators.len(), 10);
    assert!(linger.t_linger_min > 0.0);
    let csv = linger_csv(linger);
    assert_eq!(csv.lines().next(), Some("oscillator,method,t_linger,error_estimate"));
    assert_eq!(csv.lines().count(), 11);
}

#[test]
fn cli_reports_config_errors() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, REFERENCE_CONFIG.replace("n = 10", "n = 0")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_canard-sync"))
        .args(["verify", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("network.n"));

    let out = Command::new(env!("CARGO_BIN_EXE_canard-sync")).args(["verify", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn cli_linger_writes_table() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_canard-sync"))
        .args(["linger", "--seed", "3", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("t_linger_min"));
    let manifest: Manifest =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.seed, 3);
    assert!(dir.path().join("linger.json").exists());
    assert!(!dir.path().join("verification.json").exists());
}
