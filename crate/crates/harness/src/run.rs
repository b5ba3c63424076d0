//! One `(ħ, N)` cell: quantum and classical evolution side by side, metrics at sample times.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use bdglab_core::bdg::{self, Observation, ThetaCheck, ThetaSample, CSV_HEADER};
use bdglab_core::interaction::InteractionKernel;
use bdglab_core::kinetic::{coupled_evolve, ClassicalObservation, CoupledOptions, TwoParticleDensity};
use bdglab_core::metrics::{combined_error, MetricReport};
use bdglab_core::state::{quasifree_init, save_snapshot, theta};
use bdglab_core::transforms::husimi_two_particle;
use serde::{Deserialize, Serialize};

use crate::config::{PairInit, RunConfig};
use crate::{echo_config, HarnessError, Result};

/// Metric columns appended to the observer columns in `samples.csv`.
pub const METRIC_COLUMNS: &str = "w2sq_one_particle,metric_two_particle,sobolev_h1,sobolev_h6,total_error";

/// Kernel constants entering the a-priori bounds, on the quantum grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    pub sup_k: f64,
    pub sup_grad: f64,
    pub sup_laplacian: f64,
    pub hat_l1: f64,
}

impl KernelConstants {
    pub fn of(k: &InteractionKernel) -> Self {
        Self { sup_k: k.sup_k, sup_grad: k.sup_grad, sup_laplacian: k.sup_laplacian, hat_l1: k.hat_l1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitDiagnostics {
    pub theta_max: f64,
    pub achieved_theta: f64,
    pub clipped_fraction: f64,
    pub warning: Option<String>,
    /// `h Tr(op|p̂|⁴)`.
    pub m4: f64,
    /// `‖α‖_{L²}/(N h)`.
    pub alpha_over_nh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub t: f64,
    pub observation: Observation,
    pub metric: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub hbar: f64,
    pub n_particles: f64,
    pub n_x: usize,
    pub kernel: KernelConstants,
    pub init: InitDiagnostics,
    pub samples: Vec<SampleRow>,
    pub observations: Vec<Observation>,
    pub schatten_4: Vec<(f64, f64)>,
    pub theta_check: ThetaCheck,
    pub theta_step_error: f64,
    /// `θ` and its rate at every step.
    #[serde(skip)]
    pub theta: Vec<ThetaSample>,
    pub classical: Vec<ClassicalObservation>,
}

impl RunResult {
    pub fn view(&self) -> crate::validate::TrajectoryView<'_> {
        crate::validate::TrajectoryView {
            observations: &self.observations,
            schatten_4: &self.schatten_4,
            theta: Some(&self.theta),
            theta_check: self.theta_check,
            theta_step_error: self.theta_step_error,
            kernel: self.kernel,
            hbar: self.hbar,
            n_particles: self.n_particles,
        }
    }
}

#[derive(Serialize)]
struct Resolved<'a> {
    config: &'a RunConfig,
    hbar: f64,
    n_particles: f64,
    n_x: usize,
}

/// Runs the cell at `hbar`. When `out` is set, artifacts are written there.
pub fn run_single(cfg: &RunConfig, hbar: f64, out: Option<&Path>) -> Result<RunResult> {
    cfg.check()?;
    let grid = cfg.spatial_grid(hbar)?;
    let n_particles = cfg.n_rule.n_particles(hbar);
    let kg = cfg.kinetic_grid(hbar)?;
    let f0 = cfg.initial.family.build(kg)?;
    f0.check_boundary()?;
    let init = quasifree_init(&f0, cfg.initial.theta_target, grid, n_particles, cfg.initial.symmetry)?;
    if let Some(w) = &init.warning {
        log::warn!("hbar = {hbar:e}: {w}");
    }
    let state0 = init.state.clone();
    let h = grid.h();
    let diag = InitDiagnostics {
        theta_max: init.theta_max,
        achieved_theta: init.achieved_theta,
        clipped_fraction: init.clipped_fraction,
        warning: init.warning.clone(),
        m4: bdglab_core::metrics::quantum_moments(&state0.op).m4,
        alpha_over_nh: state0.pairing.l2_norm() / (n_particles * h),
    };
    log::info!(
        "hbar = {hbar:e}, N = {n_particles}, n_x = {}: h Tr op|p|^4 = {:.4e}, |alpha|/(N h) = {:.4e}",
        grid.n,
        diag.m4,
        diag.alpha_over_nh
    );

    let pair0 = match cfg.initial.pair_init {
        PairInit::Husimi if theta(&state0.pairing) > 0.0 => {
            Some(husimi_two_particle(&state0.pairing, &cfg.pair_grid(hbar)?)?)
        }
        PairInit::Product => Some(TwoParticleDensity::product(&cfg.initial.family.build(cfg.pair_grid(hbar)?)?)),
        _ => None,
    };
    if let Some(p) = &pair0 {
        p.check_boundary()?;
    }

    let kq = InteractionKernel::new(cfg.kernel.clone(), grid)?;
    let kk = InteractionKernel::new(cfg.kernel.clone(), kg.spatial)?;
    let mut times = cfg.sample_times.clone();
    times.sort_by(f64::total_cmp);
    times.dedup();

    let bcfg = cfg.bdg_config(cfg.t_final);
    let traj = bdg::evolve(&state0, &kq, &bcfg, &times)?;
    let copts = CoupledOptions {
        dt: cfg.kinetic.dt,
        eta: cfg.eta as f64,
        n_particles,
        feedback_theta: None,
    };
    let ctraj = coupled_evolve(&f0, pair0.as_ref(), &kk, &times, &copts)?;
    if traj.samples.len() != times.len() || ctraj.samples.len() != times.len() {
        return Err(HarnessError::Report("sample counts differ between quantum and classical sides".into()));
    }

    let options = bcfg.hamiltonian_options();
    let mut samples = Vec::with_capacity(times.len());
    for (qs, cs) in traj.samples.iter().zip(&ctraj.samples) {
        let metric = combined_error(&cs.f, &qs.op, cs.pair.as_ref(), &qs.pairing, &cfg.metric)?;
        let observation = bdg::observe(qs, &kq, options)?;
        log::debug!("hbar = {hbar:e}, t = {}: total error {:.4e}", cs.t, metric.total());
        samples.push(SampleRow { t: cs.t, observation, metric });
    }

    let result = RunResult {
        hbar,
        n_particles,
        n_x: grid.n,
        kernel: KernelConstants::of(&kq),
        init: diag,
        samples,
        observations: traj.observations.clone(),
        schatten_4: traj.schatten_4.clone(),
        theta_check: bdg::theta_trajectory_check(&traj.theta, kq.sup_k),
        theta_step_error: traj.theta_step_error,
        theta: traj.theta.clone(),
        classical: ctraj.observations.clone(),
    };

    if let Some(dir) = out {
        echo_config(dir, &Resolved { config: &cfg.for_hbar(hbar), hbar, n_particles, n_x: grid.n })?;
        bdg::write_observations(&result.observations, BufWriter::new(File::create(dir.join("observations.csv"))?))?;
        write_samples_csv(&result, &dir.join("samples.csv"))?;
        write_json(&dir.join("metrics.json"), &result)?;
        let snap = dir.join("snapshots");
        std::fs::create_dir_all(&snap)?;
        for (i, (qs, cs)) in traj.samples.iter().zip(&ctraj.samples).enumerate() {
            save_snapshot(qs, &snap.join(format!("state_{i:03}.bin")))?;
            cs.f.write_snapshot(BufWriter::new(File::create(snap.join(format!("f_{i:03}.bin")))?))?;
            if let Some(p) = &cs.pair {
                p.write_snapshot(BufWriter::new(File::create(snap.join(format!("pair_{i:03}.bin")))?))?;
            }
        }
    }
    Ok(result)
}

fn write_samples_csv(r: &RunResult, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{CSV_HEADER},{METRIC_COLUMNS}")?;
    for s in &r.samples {
        let m = &s.metric;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            s.observation.csv_row(),
            m.w2sq_one_particle,
            m.metric_two_particle,
            m.sobolev_h1,
            m.sobolev_h6,
            m.total()
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| HarnessError::Report(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// `ħ` for the sweep index `M`: `ħ = 1/(2πM)`.
pub fn hbar_for(m: f64) -> f64 {
    1.0 / (2.0 * PI * m)
}
