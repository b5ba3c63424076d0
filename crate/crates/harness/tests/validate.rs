use bdglab::config::{FamilySpec, GridRule, NRule, RunConfig};
use bdglab::run::hbar_for;
use bdglab::validate::{validate, ROW_NAMES};
use bdglab_core::interaction::KernelSpec;

fn small() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.hbar = vec![hbar_for(8.0)];
    cfg.grid.n_x = GridRule::Fixed(32);
    cfg.quantum.dt = 1e-3;
    cfg.validate_t_final = 0.25;
    cfg
}

fn failing(rows: &[bdglab::validate::ValidationRow]) -> Vec<String> {
    rows.iter().filter(|r| !r.pass).map(|r| format!("{} (margin {:.3e})", r.name, r.margin)).collect()
}

#[test]
fn free_dynamics_pass_every_row() {
    let mut cfg = small();
    cfg.kernel = KernelSpec::Gaussian { a: 0.0, sigma: 0.3 };
    let rows = validate(&cfg, None).unwrap();
    assert_eq!(rows.iter().map(|r| r.name.as_str()).collect::<Vec<_>>(), ROW_NAMES);
    assert!(failing(&rows).is_empty(), "{:?}", failing(&rows));
}

#[test]
fn interacting_dynamics_pass_every_row() {
    let mut cfg = small();
    cfg.hbar = vec![1.0 / (32.0 * std::f64::consts::PI)];
    cfg.grid.n_x = GridRule::Fixed(64);
    cfg.n_rule = NRule::Scaled(1.0);
    cfg.initial.family = FamilySpec::Gaussian { center: [0.5, 0.0], widths: [0.3, 0.55] };
    cfg.kernel = KernelSpec::Gaussian { a: 0.5, sigma: 0.2 };
    let rows = validate(&cfg, None).unwrap();
    assert!(failing(&rows).is_empty(), "{:?}", failing(&rows));
}

#[test]
fn oversized_steps_fail_the_conservation_rows() {
    let mut cfg = small();
    cfg.quantum.dt = 0.1;
    let rows = validate(&cfg, None).unwrap();
    let bad = failing(&rows);
    assert!(bad.iter().any(|n| n.starts_with("energy_conservation")), "{bad:?}");
}

#[test]
fn tables_are_written() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let rows = validate(&cfg, Some(dir.path())).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("validation.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "name,lhs,rhs,margin,pass");
    assert_eq!(lines.count(), rows.len());
    let json: Vec<bdglab::validate::ValidationRow> =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("validation.json")).unwrap()).unwrap();
    assert_eq!(json, rows);
    assert!(dir.path().join("config.json").exists());
}
