//! Run configuration, read from JSON.

use std::f64::consts::PI;
use std::path::Path;

use bdglab_core::bdg::{BdGConfig, Integrator};
use bdglab_core::grid::{PhaseGrid, SpatialGrid};
use bdglab_core::interaction::KernelSpec;
use bdglab_core::kinetic::PhaseDensity;
use bdglab_core::metrics::{EpsSchedule, MetricOptions, SinkhornOptions};
use bdglab_core::state::PairingSymmetry;
use serde::{Deserialize, Serialize};

use crate::{HarnessError, Result};

/// Number of quantum grid points for a given `ħ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridRule {
    Fixed(usize),
    /// `n_x = c·L/(2πħ)`, rounded to the nearest even integer.
    PerHbar(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub length: f64,
    pub n_x: GridRule,
}

impl GridConfig {
    pub fn n_x(&self, hbar: f64) -> usize {
        match self.n_x {
            GridRule::Fixed(n) => n,
            GridRule::PerHbar(c) => {
                let n = c * self.length / (2.0 * PI * hbar);
                (2.0 * (n / 2.0).round()).max(4.0) as usize
            }
        }
    }
}

/// Phase-space grids of the classical side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticConfig {
    pub n_chi: usize,
    pub n_xi: usize,
    pub xi_max: f64,
    /// χ points per particle of the two-particle grid.
    pub pair_n_chi: usize,
    /// ξ points per particle of the two-particle grid.
    pub pair_n_xi: usize,
    pub pair_xi_max: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NRule {
    Fixed(f64),
    /// `N = c·h^{−1}`.
    Scaled(f64),
    /// `N = c/ħ`.
    RegimeNh(f64),
}

impl NRule {
    pub fn n_particles(&self, hbar: f64) -> f64 {
        match *self {
            NRule::Fixed(n) => n,
            NRule::Scaled(c) => c / (2.0 * PI * hbar),
            NRule::RegimeNh(c) => c / hbar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilySpec {
    Gaussian { center: [f64; 2], widths: [f64; 2] },
    DoubleBump { centers: [[f64; 2]; 2], widths: [f64; 2] },
}

impl FamilySpec {
    pub fn build(&self, grid: PhaseGrid) -> bdglab_core::Result<PhaseDensity> {
        match self {
            FamilySpec::Gaussian { center, widths } => {
                PhaseDensity::gaussian(grid, (center[0], center[1]), (widths[0], widths[1]))
            }
            FamilySpec::DoubleBump { centers, widths } => PhaseDensity::double_bump(
                grid,
                [(centers[0][0], centers[0][1]), (centers[1][0], centers[1][1])],
                (widths[0], widths[1]),
            ),
        }
    }
}

/// How the classical two-particle density starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairInit {
    /// Two-particle Husimi transform of the initial pairing operator.
    Husimi,
    /// `f⁰ ⊗ f⁰`.
    Product,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialConfig {
    pub family: FamilySpec,
    pub theta_target: f64,
    pub symmetry: PairingSymmetry,
    pub pair_init: PairInit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumConfig {
    pub dt: f64,
    pub integrator: Integrator,
    pub include_exchange: bool,
    pub spinless_mode: bool,
    pub observer_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub kinetic: KineticConfig,
    pub hbar: Vec<f64>,
    pub n_rule: NRule,
    pub kernel: KernelSpec,
    pub initial: InitialConfig,
    pub eta: u8,
    pub quantum: QuantumConfig,
    pub t_final: f64,
    pub sample_times: Vec<f64>,
    pub metric: MetricOptions,
    /// Relative to the `--out` root.
    pub output_dir: String,
    pub seed: u64,
    pub workers: usize,
    /// Length of the trajectory used by `validate`.
    pub validate_t_final: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let hbar = [8.0, 12.0, 16.0, 24.0, 32.0, 48.0].iter().map(|m| 1.0 / (2.0 * PI * m)).collect();
        Self {
            grid: GridConfig { length: 1.0, n_x: GridRule::PerHbar(4.0) },
            kinetic: KineticConfig {
                n_chi: 32,
                n_xi: 64,
                xi_max: 1.8,
                pair_n_chi: 24,
                pair_n_xi: 48,
                pair_xi_max: 2.0,
                dt: 0.05,
            },
            hbar,
            n_rule: NRule::RegimeNh(1.0 / (16.0 * PI)),
            kernel: KernelSpec::Gaussian { a: 0.05, sigma: 0.3 },
            initial: InitialConfig {
                family: FamilySpec::Gaussian { center: [0.5, 0.0], widths: [0.35, 0.2] },
                theta_target: 0.1,
                symmetry: PairingSymmetry::Symmetric,
                pair_init: PairInit::Husimi,
            },
            eta: 0,
            quantum: QuantumConfig {
                dt: 5e-4,
                integrator: Integrator::Rk4,
                include_exchange: true,
                spinless_mode: false,
                observer_stride: 10,
            },
            t_final: 0.5,
            sample_times: vec![0.0, 0.25, 0.5],
            metric: MetricOptions {
                sinkhorn: SinkhornOptions {
                    eps: EpsSchedule::Absolute { values: vec![4e-3, 2e-3, 1e-3] },
                    tol: 1e-9,
                    max_iter: 20_000,
                },
                two_particle_w2: false,
            },
            output_dir: "runs".into(),
            seed: 0,
            workers: 1,
            validate_t_final: 0.5,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.hbar.is_empty() || self.hbar.iter().any(|h| !(*h > 0.0)) {
            return bad("hbar list must be non-empty and positive".into());
        }
        if self.eta > 1 {
            return bad(format!("eta must be 0 or 1, got {}", self.eta));
        }
        if !(self.quantum.dt > 0.0) || !(self.kinetic.dt > 0.0) {
            return bad("time steps must be positive".into());
        }
        if !(self.t_final >= 0.0) {
            return bad("t_final must be nonnegative".into());
        }
        if self.sample_times.iter().any(|t| *t < 0.0 || *t > self.t_final + 1e-12) {
            return bad("sample times must lie in [0, t_final]".into());
        }
        if !(0.0..1.0).contains(&self.initial.theta_target) {
            return bad("theta_target must lie in [0, 1)".into());
        }
        Ok(())
    }

    pub fn spatial_grid(&self, hbar: f64) -> Result<SpatialGrid> {
        Ok(SpatialGrid::new(self.grid.length, self.grid.n_x(hbar), hbar)?)
    }

    pub fn kinetic_grid(&self, hbar: f64) -> Result<PhaseGrid> {
        let s = SpatialGrid::new(self.grid.length, self.kinetic.n_chi, hbar)?;
        Ok(PhaseGrid::new(s, self.kinetic.n_xi, self.kinetic.xi_max)?)
    }

    pub fn pair_grid(&self, hbar: f64) -> Result<PhaseGrid> {
        let s = SpatialGrid::new(self.grid.length, self.kinetic.pair_n_chi, hbar)?;
        Ok(PhaseGrid::new(s, self.kinetic.pair_n_xi, self.kinetic.pair_xi_max)?)
    }

    pub fn bdg_config(&self, t_final: f64) -> BdGConfig {
        BdGConfig {
            dt: self.quantum.dt,
            t_final,
            integrator: self.quantum.integrator,
            include_exchange: self.quantum.include_exchange,
            spinless_mode: self.quantum.spinless_mode,
            observer_stride: self.quantum.observer_stride,
            strict: true,
        }
    }

    /// Copy restricted to one `ħ`.
    pub fn for_hbar(&self, hbar: f64) -> Self {
        Self { hbar: vec![hbar], ..self.clone() }
    }
}

/// Regime and initial-data warnings for a sweep.
pub fn regime_warnings(cfg: &RunConfig) -> Vec<String> {
    let mut out = Vec::new();
    let nh: Vec<(f64, f64)> = cfg.hbar.iter().map(|&hb| (hb, cfg.n_rule.n_particles(hb) * 2.0 * PI * hb)).collect();
    let (lo, hi) = nh.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), (_, v)| (lo.min(*v), hi.max(*v)));
    let smallest = nh.iter().min_by(|a, b| a.0.total_cmp(&b.0)).map(|x| x.1).unwrap_or(0.0);
    match cfg.eta {
        1 => {
            if nh.len() < 2 || !(smallest < 0.5 * hi) {
                out.push(format!(
                    "eta = 1 expects N·h → 0 along the sweep, but N·h ranges over [{lo:.3e}, {hi:.3e}] without decaying"
                ));
            }
        }
        _ => {
            if nh.len() > 1 && smallest < 0.5 * hi {
                out.push(format!(
                    "eta = 0 expects N·ħ bounded below, but N·h decays to {smallest:.3e} (max {hi:.3e})"
                ));
            }
        }
    }
    out
}
