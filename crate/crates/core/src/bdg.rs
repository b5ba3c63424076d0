//! Time integration of the rescaled BdG system for `(op, α)`.
//!
//! With `O`, `A` the kernels of `op`, `α`, `𝖧` the Hartree–Fock operator matrix and `B = K∘A`:
//!
//! ```text
//! iħ ∂_t O = 𝖧O − O𝖧 + dx/(N²h)·(BA* − AB*)
//! iħ ∂_t A = 𝖧A + A𝖧ᵀ + B/N − h·dx·(OB + BOᵀ)
//! ```

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::grid::{fft_plan, ifft_plan, SpatialGrid};
use crate::interaction::{hamiltonian_matrix, kinetic_matrix, mean_field_potential, HamiltonianOptions, InteractionKernel};
use crate::linalg;
use crate::metrics::{quantum_moments, schatten_norm};
use crate::state::{quasifree_residual, theta, QuantumState};
use crate::{CMatrix, Error, Result, C64};

/// Safety factor in the stability bound.
pub const C_STAB: f64 = 0.5;
/// Coefficient of `dx²·Σ K|α|²/N²` in the conserved energy.
pub const PAIR_ENERGY_COEF: f64 = 0.5;
const STEP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Rk4,
    Strang,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BdGConfig {
    pub dt: f64,
    pub t_final: f64,
    pub integrator: Integrator,
    pub include_exchange: bool,
    /// Symmetric α and a factor 2 on the direct term.
    pub spinless_mode: bool,
    pub observer_stride: usize,
    /// Abort on invariant violations and on `dt` above the stability bound.
    pub strict: bool,
}

impl Default for BdGConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 1.0,
            integrator: Integrator::Rk4,
            include_exchange: true,
            spinless_mode: false,
            observer_stride: 10,
            strict: true,
        }
    }
}

impl BdGConfig {
    pub fn hamiltonian_options(&self) -> HamiltonianOptions {
        HamiltonianOptions { include_exchange: self.include_exchange, spinless: self.spinless_mode }
    }
}

/// Largest admissible step for the configured integrator.
///
/// RK4 resolves the kinetic phase: `C_STAB·ħ/(p_max²/2 + ‖V‖_∞)`. The Strang splitting
/// propagates kinetic and local terms exactly and is limited by the remaining `O(‖K‖_∞/N)` terms.
pub fn dt_max(grid: &SpatialGrid, k: &InteractionKernel, n_particles: f64, cfg: &BdGConfig) -> f64 {
    let f = cfg.hamiltonian_options().mean_field_factor();
    match cfg.integrator {
        Integrator::Rk4 => {
            let v = (f + 2.0 / n_particles) * k.sup_k;
            C_STAB * grid.hbar / (0.5 * grid.p_max().powi(2) + v)
        }
        Integrator::Strang => {
            let r = 3.0 * k.sup_k / n_particles;
            if r > 0.0 {
                C_STAB * grid.hbar / r
            } else {
                f64::INFINITY
            }
        }
    }
}

/// Precomputed pieces shared by every right-hand-side evaluation.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub grid: SpatialGrid,
    pub kernel: InteractionKernel,
    pub options: HamiltonianOptions,
    kinetic: Array2<f64>,
    n_particles: f64,
    sign: f64,
}

impl Propagator {
    pub fn new(state: &QuantumState, kernel: &InteractionKernel, options: HamiltonianOptions) -> Result<Self> {
        let grid = state.grid();
        if kernel.grid != grid {
            return Err(Error::InvalidInput("kernel grid does not match the state grid".into()));
        }
        Ok(Self {
            grid,
            kernel: kernel.clone(),
            options,
            kinetic: kinetic_matrix(&grid),
            n_particles: state.n_particles(),
            sign: state.pairing.symmetry.sign(),
        })
    }

    fn hamiltonian(&self, o: &CMatrix) -> Result<CMatrix> {
        hamiltonian_matrix(o, &self.kernel, &self.options, &self.kinetic)
    }

    /// `(dO, dA)` for the full system.
    pub fn rhs(&self, o: &CMatrix, a: &CMatrix) -> Result<(CMatrix, CMatrix)> {
        let h = self.hamiltonian(o)?;
        Ok(self.rhs_with(&h, o, a, true))
    }

    /// `(dO, dA)` for the exchange and pairing-feedback terms only.
    fn remainder(&self, o: &CMatrix, a: &CMatrix) -> (CMatrix, CMatrix) {
        let n = self.grid.n;
        let hx = if self.options.include_exchange {
            let s = -self.grid.h() * self.grid.dx();
            self.kernel.multiply(o).mapv(|z| z * s)
        } else {
            Array2::zeros((n, n))
        };
        self.rhs_with(&hx, o, a, false)
    }

    fn rhs_with(&self, h: &CMatrix, o: &CMatrix, a: &CMatrix, local_pair: bool) -> (CMatrix, CMatrix) {
        let g = &self.grid;
        let (dx, hh, n_p) = (g.dx(), g.h(), self.n_particles);
        let s = self.sign;
        let inv = C64::new(0.0, -1.0 / g.hbar);
        let y = h.dot(o);
        let b = self.kernel.multiply(a);
        let x = b.dot(&linalg::adjoint(a));
        let pc = dx / (n_p * n_p * hh);
        let mut d_o = y.clone();
        ndarray::Zip::from(&mut d_o)
            .and(&y.t())
            .and(&x)
            .and(&x.t())
            .for_each(|d, &yt, &xv, &xt| *d = (*d - yt.conj() + (xv - xt.conj()) * pc) * inv);
        let z = h.dot(a);
        let w = o.dot(&b).mapv(|v| v * dx);
        let mut d_a = z.clone();
        ndarray::Zip::from(&mut d_a)
            .and(&z.t())
            .and(&w)
            .and(&w.t())
            .and(&b)
            .for_each(|d, &zt, &wv, &wt, &bv| {
                let local = if local_pair { bv / n_p } else { C64::new(0.0, 0.0) };
                *d = (*d + zt * s + local - (wv + wt * s) * hh) * inv;
            });
        (d_o, d_a)
    }

    /// Mean-field potential (with the direct-term factor) of the current density.
    fn local_potential(&self, o: &CMatrix) -> Result<Vec<f64>> {
        let rho = crate::interaction::density_of(o, &self.grid);
        let f = self.options.mean_field_factor();
        Ok(mean_field_potential(&rho, &self.kernel)?.into_iter().map(|v| f * v).collect())
    }

    /// Exact flow of the diagonal potential and the local `K/N` pairing term over `tau`.
    fn local_flow(&self, o: &mut CMatrix, a: &mut CMatrix, tau: f64) -> Result<()> {
        let v = self.local_potential(o)?;
        let hb = self.grid.hbar;
        let n = self.grid.n;
        let kc = self.kernel.circulant();
        for i in 0..n {
            for j in 0..n {
                o[[i, j]] *= C64::from_polar(1.0, -(v[i] - v[j]) * tau / hb);
                a[[i, j]] *= C64::from_polar(1.0, -(v[i] + v[j] + kc[[i, j]] / self.n_particles) * tau / hb);
            }
        }
        Ok(())
    }

    /// Exact free flow over `tau`: `O → U O U*`, `A → U A Uᵀ` with `U = exp(−i|p̂|²τ/(2ħ))`.
    fn kinetic_flow(&self, o: &mut CMatrix, a: &mut CMatrix, tau: f64) {
        let g = &self.grid;
        let n = g.n;
        let phase: Vec<C64> = (0..n)
            .map(|q| C64::from_polar(1.0 / n as f64, -0.5 * g.momentum(q).powi(2) * tau / g.hbar))
            .collect();
        let conj: Vec<C64> = phase.iter().map(|p| p.conj()).collect();
        apply_circulant(o, &phase, true);
        apply_circulant(o, &conj, false);
        apply_circulant(a, &phase, true);
        apply_circulant(a, &phase, false);
    }
}

/// Applies `F⁻¹ diag(sym) F` along columns (`left`) or rows.
fn apply_circulant(m: &mut CMatrix, sym: &[C64], left: bool) {
    let n = sym.len();
    let (fft, ifft) = (fft_plan(n), ifft_plan(n));
    let mut buf = vec![C64::new(0.0, 0.0); n];
    let lanes = if left { m.columns_mut() } else { m.rows_mut() };
    for mut lane in lanes {
        for (b, v) in buf.iter_mut().zip(lane.iter()) {
            *b = *v;
        }
        fft.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(sym) {
            *b *= s;
        }
        ifft.process(&mut buf);
        for (v, b) in lane.iter_mut().zip(&buf) {
            *v = *b;
        }
    }
}

fn axpy(base: &CMatrix, k: &CMatrix, c: f64) -> CMatrix {
    let mut out = base.clone();
    out.zip_mut_with(k, |o, &v| *o += v * c);
    out
}

fn rk4<F>(o: &CMatrix, a: &CMatrix, dt: f64, f: F) -> Result<(CMatrix, CMatrix)>
where
    F: Fn(&CMatrix, &CMatrix) -> Result<(CMatrix, CMatrix)>,
{
    let (k1o, k1a) = f(o, a)?;
    let (k2o, k2a) = f(&axpy(o, &k1o, 0.5 * dt), &axpy(a, &k1a, 0.5 * dt))?;
    let (k3o, k3a) = f(&axpy(o, &k2o, 0.5 * dt), &axpy(a, &k2a, 0.5 * dt))?;
    let (k4o, k4a) = f(&axpy(o, &k3o, dt), &axpy(a, &k3a, dt))?;
    let mut no = o.clone();
    let mut na = a.clone();
    let c = dt / 6.0;
    ndarray::Zip::from(&mut no).and(&k1o).and(&k2o).and(&k3o).and(&k4o).for_each(|x, &p, &q, &r, &s| {
        *x += (p + (q + r) * 2.0 + s) * c;
    });
    ndarray::Zip::from(&mut na).and(&k1a).and(&k2a).and(&k3a).and(&k4a).for_each(|x, &p, &q, &r, &s| {
        *x += (p + (q + r) * 2.0 + s) * c;
    });
    Ok((no, na))
}

/// Right-hand side `(d_op, d_α)` of the full system.
pub fn rhs(state: &QuantumState, k: &InteractionKernel, options: HamiltonianOptions) -> Result<(CMatrix, CMatrix)> {
    let p = Propagator::new(state, k, options)?;
    let (d_o, d_a) = p.rhs(&state.op.kernel, &state.pairing.kernel)?;
    if !linalg::all_finite(&d_o) {
        return Err(Error::IntegrationFailure { t: state.time, reason: "non-finite entries in d_op".into() });
    }
    if !linalg::all_finite(&d_a) {
        return Err(Error::IntegrationFailure { t: state.time, reason: "non-finite entries in d_alpha".into() });
    }
    Ok((d_o, d_a))
}

/// Advances the state by `dt`, re-imposing Hermiticity of `op` and the symmetry of `α`.
pub fn step(state: &QuantumState, prop: &Propagator, cfg: &BdGConfig, dt: f64) -> Result<QuantumState> {
    let (o, a) = (&state.op.kernel, &state.pairing.kernel);
    let (mut no, mut na) = match cfg.integrator {
        Integrator::Rk4 => rk4(o, a, dt, |x, y| prop.rhs(x, y))?,
        Integrator::Strang => {
            let (mut x, mut y) = (o.clone(), a.clone());
            prop.kinetic_flow(&mut x, &mut y, 0.5 * dt);
            prop.local_flow(&mut x, &mut y, 0.5 * dt)?;
            let (mut x, mut y) = rk4(&x, &y, dt, |p, q| Ok(prop.remainder(p, q)))?;
            prop.local_flow(&mut x, &mut y, 0.5 * dt)?;
            prop.kinetic_flow(&mut x, &mut y, 0.5 * dt);
            (x, y)
        }
    };
    no = linalg::hermitian_part(&no);
    let t = state.time + dt;
    if !linalg::all_finite(&no) || !linalg::all_finite(&na) {
        if cfg.strict {
            return Err(Error::IntegrationFailure { t, reason: "non-finite state after step".into() });
        }
    }
    let mut next = state.clone();
    next.op.kernel = no;
    std::mem::swap(&mut next.pairing.kernel, &mut na);
    next.pairing.symmetrize();
    next.time = t;
    if cfg.strict {
        let tr = next.op.h_trace();
        if !((tr - 1.0).abs() <= STEP_TOL) {
            return Err(Error::IntegrationFailure { t, reason: format!("h-trace drifted to {tr}") });
        }
        let th = theta(&next.pairing);
        if !(th < 1.0) {
            return Err(Error::IntegrationFailure { t, reason: format!("theta reached {th}") });
        }
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParts {
    pub kinetic: f64,
    pub direct: f64,
    pub exchange: f64,
    pub pairing: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.kinetic + self.direct + self.exchange + self.pairing
    }
}

/// `Ɛ = h·Tr(|p̂|²/2·op) + (f/2)∫Vϱ − (h²/2)·Tr(𝖷 op) + PAIR_ENERGY_COEF·dx²·Σ K|α|²/N²`.
pub fn energy_parts(state: &QuantumState, k: &InteractionKernel, options: HamiltonianOptions) -> Result<EnergyParts> {
    let g = state.grid();
    let (dx, h) = (g.dx(), g.h());
    let o = &state.op.kernel;
    let t = kinetic_matrix(&g);
    let mut kin = 0.0;
    for ((i, j), tv) in t.indexed_iter() {
        kin += tv * o[[j, i]].re;
    }
    let kinetic = h * dx * kin;
    let rho = state.op.density();
    let v = mean_field_potential(&rho, k)?;
    let direct = 0.5 * options.mean_field_factor() * dx * v.iter().zip(&rho).map(|(a, b)| a * b).sum::<f64>();
    let kc = k.circulant();
    let exchange = if options.include_exchange {
        let s: f64 = kc.iter().zip(o.iter()).map(|(kv, ov)| kv * ov.norm_sqr()).sum();
        -0.5 * h * h * dx * dx * s
    } else {
        0.0
    };
    let n = state.n_particles();
    let sp: f64 = kc.iter().zip(state.pairing.kernel.iter()).map(|(kv, av)| kv * av.norm_sqr()).sum();
    let pairing = PAIR_ENERGY_COEF * dx * dx * sp / (n * n);
    Ok(EnergyParts { kinetic, direct, exchange, pairing })
}

pub fn energy(state: &QuantumState, k: &InteractionKernel, options: HamiltonianOptions) -> Result<f64> {
    Ok(energy_parts(state, k, options)?.total())
}

/// `dθ/dt = −(2h/(Nħ))·Im⟨α, dx·(O(Kα) + (Kα)Oᵀ)⟩` with `⟨a,b⟩ = dx²·Σ conj(a)·b`.
pub fn theta_rate(state: &QuantumState, k: &InteractionKernel) -> f64 {
    let g = state.grid();
    let (dx, h) = (g.dx(), g.h());
    let a = &state.pairing.kernel;
    let b = k.multiply(a);
    let w = state.op.kernel.dot(&b);
    let mut acc = C64::new(0.0, 0.0);
    let s = state.pairing.symmetry.sign();
    ndarray::Zip::from(a).and(&w).and(&w.t()).for_each(|&av, &wv, &wt| acc += av.conj() * (wv + wt * s));
    let ip = acc * (dx * dx * dx);
    -2.0 * h / (state.n_particles() * g.hbar) * ip.im
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaSample {
    pub t: f64,
    pub theta: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaCheck {
    /// Largest `|FD derivative − formula|` over interior samples.
    pub max_residual: f64,
    /// Largest `|dθ/dt| / (2‖K‖_∞·θ)`.
    pub max_bound_ratio: f64,
    /// Set when the ratio exceeds 1.05.
    pub bound_violated: bool,
}

/// Compares central differences of `θ` with the rate formula and with `|dθ/dt| ≤ 2‖K‖_∞ h^{d−1}θ`.
pub fn theta_trajectory_check(samples: &[ThetaSample], sup_k: f64) -> ThetaCheck {
    let mut max_residual: f64 = 0.0;
    for w in samples.windows(3) {
        let fd = (w[2].theta - w[0].theta) / (w[2].t - w[0].t);
        max_residual = max_residual.max((fd - w[1].rate).abs());
    }
    let mut max_bound_ratio: f64 = 0.0;
    for s in samples {
        let bound = 2.0 * sup_k * s.theta;
        if bound > 0.0 {
            max_bound_ratio = max_bound_ratio.max(s.rate.abs() / bound);
        } else if s.rate.abs() > 0.0 {
            max_bound_ratio = f64::INFINITY;
        }
    }
    ThetaCheck { max_residual, max_bound_ratio, bound_violated: max_bound_ratio > 1.05 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: f64,
    pub trace: f64,
    pub energy: f64,
    pub theta: f64,
    pub m2: f64,
    pub m4: f64,
    pub n2: f64,
    pub n4: f64,
    pub schatten_2: f64,
    /// `𝓛^d` norm; `d = 1` here.
    pub schatten_d: f64,
    pub quasifree_residual: f64,
}

pub const CSV_HEADER: &str = "t,trace,energy,theta,M2,M4,N2,N4,schatten_2,schatten_d,quasifree_residual";

impl Observation {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.trace,
            self.energy,
            self.theta,
            self.m2,
            self.m4,
            self.n2,
            self.n4,
            self.schatten_2,
            self.schatten_d,
            self.quasifree_residual
        )
    }
}

pub fn write_observations<W: Write>(obs: &[Observation], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for o in obs {
        writeln!(w, "{}", o.csv_row())?;
    }
    Ok(())
}

pub fn observe(state: &QuantumState, k: &InteractionKernel, options: HamiltonianOptions) -> Result<Observation> {
    let m = quantum_moments(&state.op);
    let spec = state.op.spectrum();
    let h = state.grid().h();
    let schatten = |p: f64| h.powf(1.0 / p) * spec.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p);
    Ok(Observation {
        t: state.time,
        trace: state.op.h_trace(),
        energy: energy(state, k, options)?,
        theta: theta(&state.pairing),
        m2: m.m2,
        m4: m.m4,
        n2: m.n2,
        n4: m.n4,
        schatten_2: schatten(2.0),
        schatten_d: schatten(1.0),
        quasifree_residual: quasifree_residual(&state.op, &state.pairing),
    })
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// States at the requested sample times.
    pub samples: Vec<QuantumState>,
    pub observations: Vec<Observation>,
    /// `θ` and its rate at every step.
    pub theta: Vec<ThetaSample>,
    /// `(t, ‖op‖_𝓛⁴)` at observer times.
    pub schatten_4: Vec<(f64, f64)>,
    /// Largest [`theta_step_error`] over the initial state, the samples and the final state.
    pub theta_step_error: f64,
}

/// Step-doubling estimate of the one-step error in `θ`: `|θ(one step of 2dt) − θ(two steps of dt)|/15`.
pub fn theta_step_error(state: &QuantumState, prop: &Propagator, cfg: &BdGConfig) -> Result<f64> {
    let loose = BdGConfig { strict: false, ..*cfg };
    let big = step(state, prop, &loose, 2.0 * cfg.dt)?;
    let half = step(&step(state, prop, &loose, cfg.dt)?, prop, &loose, cfg.dt)?;
    Ok((theta(&big.pairing) - theta(&half.pairing)).abs() / 15.0)
}

/// Integrates from `state.time` to `cfg.t_final`, sampling at `sample_times` (absolute times).
pub fn evolve(
    state: &QuantumState,
    k: &InteractionKernel,
    cfg: &BdGConfig,
    sample_times: &[f64],
) -> Result<Trajectory> {
    if !(cfg.dt > 0.0) {
        return Err(Error::InvalidInput("dt must be positive".into()));
    }
    let options = cfg.hamiltonian_options();
    let bound = dt_max(&state.grid(), k, state.n_particles(), cfg);
    if cfg.strict && cfg.dt > bound {
        return Err(Error::InvalidInput(format!("dt = {} exceeds the stability bound {bound:e}", cfg.dt)));
    }
    let prop = Propagator::new(state, k, options)?;
    let mut times: Vec<f64> = sample_times.iter().copied().filter(|t| *t <= cfg.t_final + 1e-12).collect();
    times.sort_by(f64::total_cmp);
    let mut cur = state.clone();
    let mut samples = Vec::new();
    let stride = cfg.observer_stride.max(1);
    let obs0 = observe(&cur, k, options)?;
    let mut observations = vec![obs0];
    let schatten4 = |s: &QuantumState| schatten_norm(&s.op, 4.0).unwrap_or(f64::NAN);
    let mut schatten_4 = vec![(cur.time, schatten4(&cur))];
    let mut theta_series = vec![ThetaSample { t: cur.time, theta: theta(&cur.pairing), rate: theta_rate(&cur, k) }];
    let n_steps = ((cfg.t_final - cur.time) / cfg.dt - 1e-9).ceil().max(0.0) as usize;
    let mut next_sample = 0;
    let mut step_error = theta_step_error(&cur, &prop, cfg)?;
    while next_sample < times.len() && times[next_sample] <= cur.time + 1e-12 {
        samples.push(cur.clone());
        next_sample += 1;
    }
    for s in 0..n_steps {
        let remaining = cfg.t_final - cur.time;
        let mut dt = cfg.dt.min(remaining);
        if next_sample < times.len() {
            dt = dt.min(times[next_sample] - cur.time);
        }
        if dt <= 0.0 {
            break;
        }
        cur = step(&cur, &prop, cfg, dt)?;
        theta_series.push(ThetaSample { t: cur.time, theta: theta(&cur.pairing), rate: theta_rate(&cur, k) });
        let last = s + 1 == n_steps || cfg.t_final - cur.time <= 1e-12;
        let mut probe = last;
        while next_sample < times.len() && times[next_sample] <= cur.time + 1e-12 {
            samples.push(cur.clone());
            next_sample += 1;
            probe = true;
        }
        if probe && linalg::all_finite(&cur.op.kernel) && linalg::all_finite(&cur.pairing.kernel) {
            step_error = step_error.max(theta_step_error(&cur, &prop, cfg)?);
        }
        if (s + 1) % stride == 0 || last {
            if linalg::all_finite(&cur.op.kernel) {
                observations.push(observe(&cur, k, options)?);
                schatten_4.push((cur.time, schatten4(&cur)));
            } else {
                observations.push(Observation {
                    t: cur.time,
                    trace: f64::NAN,
                    energy: f64::NAN,
                    theta: f64::NAN,
                    m2: f64::NAN,
                    m4: f64::NAN,
                    n2: f64::NAN,
                    n4: f64::NAN,
                    schatten_2: f64::NAN,
                    schatten_d: f64::NAN,
                    quasifree_residual: f64::NAN,
                });
                break;
            }
        }
        if last {
            break;
        }
    }
    Ok(Trajectory { samples, observations, theta: theta_series, schatten_4, theta_step_error: step_error })
}
