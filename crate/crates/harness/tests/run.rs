use bdglab_core::metrics::EpsSchedule;
use bdglab::config::{GridRule, RunConfig};
use bdglab::run::{hbar_for, run_single};
use bdglab_core::bdg::CSV_HEADER;
use bdglab_core::interaction::KernelSpec;
use bdglab_core::state::{load_snapshot, theta};

fn small() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.hbar = vec![hbar_for(8.0)];
    cfg.grid.n_x = GridRule::Fixed(32);
    cfg.kinetic.n_chi = 16;
    cfg.kinetic.n_xi = 32;
    cfg.kinetic.pair_n_chi = 8;
    cfg.kinetic.pair_n_xi = 48;
    // ε = 1e-3 converges too slowly on the coarse grid
    cfg.metric.sinkhorn.eps = EpsSchedule::Absolute { values: vec![1.6e-2, 8e-3, 4e-3] };
    cfg.quantum.dt = 1e-3;
    cfg.t_final = 0.1;
    cfg.sample_times = vec![0.0, 0.1];
    cfg
}

#[test]
fn runs_are_bit_identical() {
    let cfg = small();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_single(&cfg, cfg.hbar[0], Some(a.path())).unwrap();
    run_single(&cfg, cfg.hbar[0], Some(b.path())).unwrap();
    for name in ["samples.csv", "observations.csv", "metrics.json", "snapshots/state_001.bin", "snapshots/pair_001.bin"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
}

#[test]
fn artifacts_have_the_documented_layout() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let r = run_single(&cfg, cfg.hbar[0], Some(dir.path())).unwrap();
    let obs = std::fs::read_to_string(dir.path().join("observations.csv")).unwrap();
    assert_eq!(obs.lines().next().unwrap(), CSV_HEADER);
    let samples = std::fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    assert!(samples.lines().next().unwrap().starts_with(CSV_HEADER));
    assert_eq!(samples.lines().count(), 1 + cfg.sample_times.len());
    assert!(dir.path().join("config.json").exists());
    let version = std::fs::read_to_string(dir.path().join("VERSION")).unwrap();
    assert!(version.starts_with("bdglab "));
    for i in 0..cfg.sample_times.len() {
        assert!(dir.path().join(format!("snapshots/f_{i:03}.bin")).exists());
    }
    let s = load_snapshot(&dir.path().join("snapshots/state_001.bin")).unwrap();
    assert_eq!(s.n_particles(), r.n_particles);
    assert_eq!(s.grid().n, 32);
    let last = r.samples.last().unwrap().observation;
    assert!((theta(&s.pairing) - last.theta).abs() < 1e-14);
    assert_eq!(r.samples.len(), 2);
}

#[test]
fn zero_horizon_reproduces_the_initial_metrics() {
    let cfg = small();
    let full = run_single(&cfg, cfg.hbar[0], None).unwrap();
    let mut zero = cfg.clone();
    zero.t_final = 0.0;
    zero.sample_times = vec![0.0];
    let z = run_single(&zero, cfg.hbar[0], None).unwrap();
    assert_eq!(z.samples.len(), 1);
    assert_eq!(z.samples[0].metric, full.samples[0].metric);
    assert_eq!(z.samples[0].observation, full.samples[0].observation);
    // F⁰ is the Husimi transform of the initial pairing
    assert!(z.samples[0].metric.metric_two_particle < 1e-20);
}

#[test]
fn free_flow_keeps_the_one_particle_error_bounded() {
    let mut cfg = small();
    cfg.kernel = KernelSpec::Gaussian { a: 0.0, sigma: 0.3 };
    cfg.t_final = 1.0;
    cfg.sample_times = vec![0.0, 0.5, 1.0];
    let r = run_single(&cfg, cfg.hbar[0], None).unwrap();
    let w0 = r.samples[0].metric.w2sq_one_particle;
    assert!(w0 > 0.0);
    for s in &r.samples {
        assert!(s.metric.w2sq_one_particle <= 2.0 * w0, "t = {}: {} vs {}", s.t, s.metric.w2sq_one_particle, w0);
    }
}
