//! Pass/fail table of the a-priori bounds and conservation laws on a short quantum trajectory.

use std::io::Write;
use std::path::Path;

use bdglab_core::bdg::{self, Observation, ThetaSample};
use bdglab_core::interaction::InteractionKernel;
use bdglab_core::kinetic::PhaseDensity;
use bdglab_core::state::quasifree_init;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::run::{write_json, KernelConstants};
use crate::{echo_config, Result};

pub const TRACE_TOL: f64 = 1e-8;
/// Relative to `|Ɛ(0)|`.
pub const ENERGY_TOL: f64 = 1e-6;
pub const QUASIFREE_TOL: f64 = 1e-6;
/// Slack allowed on the `θ` growth bound before it counts as violated.
pub const THETA_BOUND_SLACK: f64 = 1.05;
/// Relative round-off tolerated on bounds that hold with equality.
pub const ROUNDOFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub name: String,
    /// Worst observed value of the bounded quantity.
    pub lhs: f64,
    /// Bound at the worst time.
    pub rhs: f64,
    /// Minimized over time; see [`worst`].
    pub margin: f64,
    pub pass: bool,
}

/// Non-finite values are stored as `±f64::MAX` so reports stay valid JSON.
fn finite(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else if v < 0.0 {
        -f64::MAX
    } else {
        f64::MAX
    }
}

impl ValidationRow {
    fn new(name: &str, lhs: f64, rhs: f64, margin: f64) -> Self {
        let margin = if margin.is_finite() { margin } else { -f64::MAX };
        Self { name: name.into(), lhs: finite(lhs), rhs: finite(rhs), margin, pass: margin >= -ROUNDOFF }
    }

    fn failed(name: &str) -> Self {
        Self::new(name, f64::NAN, f64::NAN, f64::NEG_INFINITY)
    }
}

/// `C_{Ɛ,K} = 2(Ɛ(0) + 2‖K‖_∞)`, the bound on `M₂ = h Tr(|p̂|² op)` with kinetic energy `½M₂`.
pub fn c_energy_kernel(energy0: f64, kc: &KernelConstants) -> f64 {
    2.0 * (energy0 + 2.0 * kc.sup_k)
}

/// Everything the bound rows need from a quantum trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryView<'a> {
    pub observations: &'a [Observation],
    pub schatten_4: &'a [(f64, f64)],
    pub theta: Option<&'a [ThetaSample]>,
    pub theta_check: bdg::ThetaCheck,
    /// Step-doubling estimate of the integrator's one-step error in `θ`.
    pub theta_step_error: f64,
    pub kernel: KernelConstants,
    pub hbar: f64,
    pub n_particles: f64,
}

pub const ROW_NAMES: [&str; 12] = [
    "trace_conservation",
    "energy_conservation",
    "quasifree_preservation",
    "kinetic_energy_bound",
    "m4_growth_bound",
    "n2_growth_bound",
    "schatten_2_bound",
    "schatten_4_bound",
    "theta_growth_bound",
    "theta_gronwall_bound",
    "theta_quasifree_bound",
    "theta_rate_formula",
];

/// Worst margin of `lhs(t) ≤ rhs(t)` over a series of `(lhs, rhs, base)`.
///
/// The margin is `(rhs − lhs)/|rhs − base|`: with `base = 0` it is relative to the bound, and with
/// `base` the value at the initial time it is the unused fraction of the allowed growth. Points with
/// `rhs = base` (the initial time of a growth bound, or a zero budget) have margin 0 unless violated
/// beyond [`ROUNDOFF`].
fn worst(series: impl Iterator<Item = (f64, f64, f64)>) -> (f64, f64, f64) {
    let mut out = (f64::NAN, f64::NAN, f64::INFINITY);
    let mut tight = None;
    for (l, r, b) in series {
        let m = if !(l.is_finite() && r.is_finite()) {
            f64::NEG_INFINITY
        } else if r == b {
            if l - r > ROUNDOFF * r.abs().max(1.0) {
                f64::NEG_INFINITY
            } else {
                tight.get_or_insert((l, r, 0.0));
                continue;
            }
        } else {
            (r - l) / (r - b).abs()
        };
        if m < out.2 || out.0.is_nan() {
            out = (l, r, m);
        }
    }
    match tight {
        Some(t) if out.0.is_nan() => t,
        _ => out,
    }
}

fn row(name: &str, w: (f64, f64, f64)) -> ValidationRow {
    ValidationRow::new(name, w.0, w.1, w.2)
}

/// One row per inequality, in [`ROW_NAMES`] order.
pub fn bound_rows(v: &TrajectoryView) -> Vec<ValidationRow> {
    let obs = v.observations;
    let Some(o0) = obs.first() else {
        return ROW_NAMES.iter().map(|n| ValidationRow::failed(n)).collect();
    };
    let kc = &v.kernel;
    let h = 2.0 * std::f64::consts::PI * v.hbar;
    let c_ek = c_energy_kernel(o0.energy, kc);
    let c_k_moment = 3.0 * (v.hbar * kc.sup_laplacian + 2.0 * kc.sup_grad * c_ek.max(0.0).sqrt());
    let c_k_schatten = 2.0 * kc.hat_l1 / (v.n_particles * v.hbar);
    let mut rows = Vec::with_capacity(ROW_NAMES.len());

    rows.push(row("trace_conservation", worst(obs.iter().map(|o| ((o.trace - o0.trace).abs(), TRACE_TOL, 0.0)))));
    let e_tol = ENERGY_TOL * o0.energy.abs().max(1e-300);
    rows.push(row("energy_conservation", worst(obs.iter().map(|o| ((o.energy - o0.energy).abs(), e_tol, 0.0)))));
    rows.push(row(
        "quasifree_preservation",
        worst(obs.iter().map(|o| ((o.quasifree_residual - o0.quasifree_residual).max(0.0), QUASIFREE_TOL, 0.0))),
    ));
    rows.push(row("kinetic_energy_bound", worst(obs.iter().map(|o| (o.m2, c_ek, 0.0)))));
    rows.push(row(
        "m4_growth_bound",
        worst(obs.iter().map(|o| (o.m4.sqrt(), o0.m4.sqrt() + c_k_moment * (o.t - o0.t), o0.m4.sqrt()))),
    ));
    rows.push(row(
        "n2_growth_bound",
        worst(obs.iter().map(|o| (o.n2.sqrt(), o0.n2.sqrt() + c_ek.max(0.0).sqrt() * (o.t - o0.t), o0.n2.sqrt()))),
    ));
    rows.push(row(
        "schatten_2_bound",
        worst(obs.iter().map(|o| (o.schatten_2, o0.schatten_2 * (c_k_schatten * (o.t - o0.t)).exp(), o0.schatten_2))),
    ));
    let s4 = v.schatten_4;
    rows.push(match s4.first() {
        Some(&(t0, n0)) => {
            row("schatten_4_bound", worst(s4.iter().map(|&(t, n)| (n, n0 * (c_k_schatten * (t - t0)).exp(), n0))))
        }
        None => ValidationRow::failed("schatten_4_bound"),
    });
    let tc = v.theta_check;
    rows.push(ValidationRow::new(
        "theta_growth_bound",
        tc.max_bound_ratio,
        THETA_BOUND_SLACK,
        if o0.theta > 0.0 { (THETA_BOUND_SLACK - tc.max_bound_ratio) / THETA_BOUND_SLACK } else { 1.0 },
    ));
    rows.push(if o0.theta > 0.0 {
        row(
            "theta_gronwall_bound",
            worst(obs.iter().map(|o| (o.theta, o0.theta * (2.0 * kc.sup_k * (o.t - o0.t)).exp(), o0.theta))),
        )
    } else {
        let w = worst(obs.iter().map(|o| (o.theta, 0.0, -1.0)));
        ValidationRow::new("theta_gronwall_bound", w.0, 0.0, if w.0 == 0.0 { 1.0 } else { f64::NEG_INFINITY })
    });
    // 0 ≤ Γ ≤ 1 gives Tr αα* ≤ Tr γ − Tr γ², i.e. θ ≤ 1 − N h ‖op‖²_𝓛².
    rows.push({
        let mut r = row(
            "theta_quasifree_bound",
            worst(obs.iter().map(|o| (o.theta, 1.0 - v.n_particles * h * o.schatten_2 * o.schatten_2, 0.0))),
        );
        // equality holds for pure data; round-off only
        r.pass = r.margin >= -1e-8;
        r
    });
    rows.push(theta_formula_row(v.theta, tc.max_residual, v.theta_step_error));
    rows
}

/// Central-difference residual of `θ` against the rate formula. The bound is the difference-quotient
/// truncation `(dt²/3)·sup|θ'''|`, with `θ'''` from second differences of the rate, plus twice the
/// integrator's per-step error over `dt`, plus round-off.
fn theta_formula_row(theta: Option<&[ThetaSample]>, residual: f64, step_error: f64) -> ValidationRow {
    let Some(s) = theta else {
        return ValidationRow::failed("theta_rate_formula");
    };
    let mut third: f64 = 0.0;
    let mut dt: f64 = 0.0;
    for w in s.windows(3) {
        let (h1, h2) = (w[1].t - w[0].t, w[2].t - w[1].t);
        dt = dt.max(h1).max(h2);
        if h1 > 0.0 && h2 > 0.0 {
            let d2 = 2.0 * ((w[2].rate - w[1].rate) / h2 - (w[1].rate - w[0].rate) / h1) / (h1 + h2);
            third = third.max(d2.abs());
        }
    }
    let sup_rate = s.iter().fold(0.0f64, |m, x| m.max(x.rate.abs()));
    let integrator = if dt > 0.0 { 2.0 * step_error / dt } else { 0.0 };
    let rhs = dt * dt / 3.0 * third + integrator + 1e-12 * (1.0 + sup_rate);
    ValidationRow::new("theta_rate_formula", residual, rhs, (rhs - residual) / rhs)
}

/// Runs the first `ħ` of `cfg` up to `min(validate_t_final, 0.5)` without stability enforcement.
pub fn validate(cfg: &RunConfig, out: Option<&Path>) -> Result<Vec<ValidationRow>> {
    cfg.check()?;
    let hbar = cfg.hbar[0];
    let rows = match trajectory_rows(cfg, hbar) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("validation trajectory failed: {e}");
            ROW_NAMES.iter().map(|n| ValidationRow::failed(n)).collect()
        }
    };
    if let Some(dir) = out {
        echo_config(dir, cfg)?;
        write_json(&dir.join("validation.json"), &rows)?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("validation.csv"))?);
        writeln!(w, "name,lhs,rhs,margin,pass")?;
        for r in &rows {
            writeln!(w, "{},{},{},{},{}", r.name, r.lhs, r.rhs, r.margin, r.pass)?;
        }
        w.flush()?;
    }
    Ok(rows)
}

fn trajectory_rows(cfg: &RunConfig, hbar: f64) -> Result<Vec<ValidationRow>> {
    let grid = cfg.spatial_grid(hbar)?;
    let n_particles = cfg.n_rule.n_particles(hbar);
    let f0: PhaseDensity = cfg.initial.family.build(cfg.kinetic_grid(hbar)?)?;
    let init = quasifree_init(&f0, cfg.initial.theta_target, grid, n_particles, cfg.initial.symmetry)?;
    let k = InteractionKernel::new(cfg.kernel.clone(), grid)?;
    let mut bcfg = cfg.bdg_config(cfg.validate_t_final.min(0.5));
    bcfg.strict = false;
    bcfg.observer_stride = 1;
    let traj = bdg::evolve(&init.state, &k, &bcfg, &[])?;
    let view = TrajectoryView {
        observations: &traj.observations,
        schatten_4: &traj.schatten_4,
        theta: Some(&traj.theta),
        theta_check: bdg::theta_trajectory_check(&traj.theta, k.sup_k),
        theta_step_error: traj.theta_step_error,
        kernel: KernelConstants::of(&k),
        hbar,
        n_particles,
    };
    Ok(bound_rows(&view))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn growth_margin_is_the_unused_budget() {
        // budget 1 at t = 1, used 0.25
        let w = worst([(1.0, 1.0, 1.0), (1.25, 2.0, 1.0)].into_iter());
        assert_eq!(w, (1.25, 2.0, 0.75));
    }

    #[test]
    fn zero_budget_is_tight_not_violated() {
        let w = worst([(1.0, 1.0, 1.0), (1.0 + 1e-15, 1.0, 1.0)].into_iter());
        assert_eq!(w.2, 0.0);
        assert!(ValidationRow::new("x", w.0, w.1, w.2).pass);
        let w = worst([(1.0, 1.0, 1.0), (1.0 + 1e-6, 1.0, 1.0)].into_iter());
        assert!(!ValidationRow::new("x", w.0, w.1, w.2).pass);
    }

    #[test]
    fn non_finite_values_fail() {
        let w = worst([(f64::NAN, 1.0, 0.0)].into_iter());
        let r = ValidationRow::new("x", w.0, w.1, w.2);
        assert!(!r.pass);
        assert!(serde_json::to_string(&r).is_ok());
    }
}
