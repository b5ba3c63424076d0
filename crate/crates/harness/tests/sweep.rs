use bdglab_core::metrics::EpsSchedule;
use bdglab::config::RunConfig;
use bdglab::run::hbar_for;
use bdglab::sweep::{run_sweep, SweepReport};
use bdglab::HarnessError;

/// Initial-data sweep on small grids: no evolution, metrics at `t = 0` only.
fn initial_only(ms: &[f64]) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.hbar = ms.iter().map(|&m| hbar_for(m)).collect();
    cfg.kinetic.n_chi = 16;
    cfg.kinetic.n_xi = 32;
    cfg.kinetic.pair_n_chi = 8;
    cfg.kinetic.pair_n_xi = 48;
    // ε = 1e-3 converges too slowly on the coarse grid
    cfg.metric.sinkhorn.eps = EpsSchedule::Absolute { values: vec![1.6e-2, 8e-3, 4e-3] };
    cfg.t_final = 0.0;
    cfg.sample_times = vec![0.0];
    cfg.workers = 2;
    cfg
}

#[test]
fn initial_error_decays_at_least_linearly() {
    let cfg = initial_only(&[8.0, 12.0, 16.0, 24.0, 32.0]);
    let dir = tempfile::tempdir().unwrap();
    let report = run_sweep(&cfg, Some(dir.path())).unwrap();
    assert!(report.warnings.is_empty(), "{:?}", report.warnings);
    assert_eq!(report.rows.len(), 5);
    let fit = report.fits.iter().find(|f| f.t == 0.0 && !f.floor_subtracted).unwrap();
    // Gaussian data: W₂(f, f * g_ħ)² is a dilation cost, between ħ and ħ² at these scales.
    assert!(fit.slope >= 0.8 && fit.slope <= 2.2, "slope {}", fit.slope);
    assert!(fit.ci_low <= fit.slope && fit.slope <= fit.ci_high);
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let back: SweepReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back.rows.len(), report.rows.len());
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + report.rows.len());
    for i in 0..5 {
        assert!(dir.path().join(format!("cell_{i:02}/samples.csv")).exists());
    }
}

#[test]
fn sweeps_are_reproducible_across_worker_counts() {
    let mut a = initial_only(&[8.0, 10.0, 12.0, 14.0]);
    a.workers = 1;
    let mut b = a.clone();
    b.workers = 3;
    let (ra, rb) = (run_sweep(&a, None).unwrap(), run_sweep(&b, None).unwrap());
    assert_eq!(serde_json::to_string(&ra).unwrap(), serde_json::to_string(&rb).unwrap());
}

#[test]
fn eta_one_with_fixed_nh_is_flagged() {
    let mut cfg = initial_only(&[8.0, 10.0, 12.0, 14.0]);
    cfg.eta = 1;
    let report = run_sweep(&cfg, None).unwrap();
    assert!(report.warnings.iter().any(|w| w.contains("eta = 1")), "{:?}", report.warnings);
}

#[test]
fn fewer_than_four_cells_is_insufficient() {
    let cfg = initial_only(&[8.0, 12.0, 16.0]);
    let dir = tempfile::tempdir().unwrap();
    match run_sweep(&cfg, Some(dir.path())) {
        Err(HarnessError::InsufficientData(_)) => {}
        other => panic!("expected InsufficientData, got {other:?}"),
    }
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn failed_cells_are_recorded_not_fatal() {
    let mut cfg = initial_only(&[8.0, 10.0, 12.0, 14.0, 16.0]);
    // the momentum window cuts the initial density
    cfg.kinetic.xi_max = 0.3;
    let dir = tempfile::tempdir().unwrap();
    let r = run_sweep(&cfg, Some(dir.path()));
    assert!(matches!(r, Err(HarnessError::InsufficientData(_))), "{r:?}");
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let report: SweepReport = serde_json::from_str(&text).unwrap();
    assert!(report.cells.iter().all(|c| c.error.is_some()));
    assert!(dir.path().join("cell_00/error.json").exists());
    assert!(!report.all_validation_pass);
}

#[test]
fn short_evolution_sweep_passes_validation() {
    let mut cfg = initial_only(&[8.0, 10.0, 12.0, 14.0]);
    cfg.t_final = 0.1;
    cfg.sample_times = vec![0.0, 0.1];
    cfg.quantum.dt = 1e-3;
    let report = run_sweep(&cfg, None).unwrap();
    let failing: Vec<_> = report
        .cells
        .iter()
        .flat_map(|c| c.validation.iter().filter(|r| !r.pass).map(move |r| (c.hbar, r.name.clone())))
        .collect();
    assert!(report.all_validation_pass, "{failing:?}");
    assert_eq!(report.fits.iter().filter(|f| f.t == 0.1).count(), 2);
}
