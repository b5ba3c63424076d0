//! Semi-Lagrangian transport of the one-particle density `f` and the two-particle density `F`.
//!
//! Each axis shift uses periodic cubic B-spline interpolation applied as a Fourier
//! multiplier, so the zero mode (mass) is preserved exactly.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use ndarray::{Array2, Array4, Axis};
use rustfft::Fft;
use serde::{Deserialize, Serialize};

use crate::grid::{fft_plan, ifft_plan, PhaseGrid};
use crate::interaction::{InteractionKernel, PotentialField};
use crate::{Error, Result, C64};

/// Mass allowed within two cells of `±ξ_max`.
pub const TOL_BOUNDARY: f64 = 1e-10;
const GUARD_CELLS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDensity {
    /// `values[[iχ, iξ]]`.
    pub values: Array2<f64>,
    pub grid: PhaseGrid,
}

fn wrapped_gaussian(x: f64, c: f64, s: f64, l: f64) -> f64 {
    let d = crate::grid::wrap_periodic(x - c, l);
    let images = (10.0 * s / l).ceil() as i64 + 1;
    (-images..=images)
        .map(|w| {
            let y = d + w as f64 * l;
            (-y * y / (2.0 * s * s)).exp()
        })
        .sum()
}

impl PhaseDensity {
    pub fn new(values: Array2<f64>, grid: PhaseGrid) -> Result<Self> {
        if values.dim() != (grid.n_chi(), grid.n_xi) {
            return Err(Error::InvalidInput(format!(
                "density shape {:?} does not match grid {}x{}",
                values.dim(),
                grid.n_chi(),
                grid.n_xi
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("density has non-finite entries".into()));
        }
        Ok(Self { values, grid })
    }

    /// Samples `f` on the grid and normalizes to unit mass.
    pub fn from_fn(grid: PhaseGrid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = Array2::from_shape_fn((grid.n_chi(), grid.n_xi), |(i, j)| f(grid.chi(i), grid.xi(j)));
        let mut d = Self::new(values, grid)?;
        if d.values.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput("density must be nonnegative".into()));
        }
        let m = d.mass();
        if !(m > 0.0) {
            return Err(Error::InvalidInput("density has zero mass".into()));
        }
        d.values /= m;
        Ok(d)
    }

    /// Gaussian in `(χ, ξ)`, wrapped in `χ`.
    pub fn gaussian(grid: PhaseGrid, center: (f64, f64), widths: (f64, f64)) -> Result<Self> {
        if !(widths.0 > 0.0 && widths.1 > 0.0) {
            return Err(Error::InvalidInput("gaussian widths must be positive".into()));
        }
        let l = grid.spatial.length;
        Self::from_fn(grid, |x, p| {
            wrapped_gaussian(x, center.0, widths.0, l) * (-(p - center.1).powi(2) / (2.0 * widths.1.powi(2))).exp()
        })
    }

    /// Equal-weight sum of two Gaussians.
    pub fn double_bump(
        grid: PhaseGrid,
        centers: [(f64, f64); 2],
        widths: (f64, f64),
    ) -> Result<Self> {
        let l = grid.spatial.length;
        Self::from_fn(grid, |x, p| {
            centers
                .iter()
                .map(|c| {
                    wrapped_gaussian(x, c.0, widths.0, l) * (-(p - c.1).powi(2) / (2.0 * widths.1.powi(2))).exp()
                })
                .sum()
        })
    }

    pub fn mass(&self) -> f64 {
        self.values.sum() * self.grid.cell_volume()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    /// `ρ(χ_i) = Σ_j f(χ_i, ξ_j)·dξ`.
    pub fn spatial_density(&self) -> Vec<f64> {
        let dxi = self.grid.d_xi();
        self.values.rows().into_iter().map(|r| r.sum() * dxi).collect()
    }

    /// `∫|ξ|^n f`.
    pub fn xi_moment(&self, n: i32) -> f64 {
        let g = &self.grid;
        let mut acc = 0.0;
        for ((_, j), v) in self.values.indexed_iter() {
            acc += g.xi(j).abs().powi(n) * v;
        }
        acc * g.cell_volume()
    }

    /// Mass in the guard band of `GUARD_CELLS` rows at each `ξ` edge.
    pub fn boundary_mass(&self) -> f64 {
        let n = self.grid.n_xi;
        let mut acc = 0.0;
        for ((_, j), v) in self.values.indexed_iter() {
            if j < GUARD_CELLS || j >= n - GUARD_CELLS {
                acc += v.abs();
            }
        }
        acc * self.grid.cell_volume()
    }

    pub fn check_boundary(&self) -> Result<()> {
        let b = self.boundary_mass();
        if b > TOL_BOUNDARY {
            return Err(Error::DomainTooSmall(format!("mass {b:e} within two cells of ±ξ_max")));
        }
        Ok(())
    }

    /// Clips negatives, renormalizes, and returns the clipped mass.
    pub fn clip_and_normalize(&mut self) -> f64 {
        let dv = self.grid.cell_volume();
        let clipped = clip_negatives(self.values.iter_mut()) * dv;
        let m = self.mass();
        if m > 0.0 {
            self.values /= m;
        }
        clipped
    }

    /// Values in snapshot order: `index = iχ + n_χ·iξ`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.values.t().iter().copied().collect()
    }

    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        write_density_header(&mut w, DENSITY_MAGIC, &self.grid)?;
        for v in self.to_flat() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let grid = read_density_header(&mut r, DENSITY_MAGIC)?;
        let (nc, nx) = (grid.n_chi(), grid.n_xi);
        let mut values = Array2::zeros((nc, nx));
        for j in 0..nx {
            for i in 0..nc {
                values[[i, j]] = read_f64(&mut r)?;
            }
        }
        Self::new(values, grid)
    }
}

fn clip_negatives<'a>(it: impl Iterator<Item = &'a mut f64>) -> f64 {
    let mut clipped = 0.0;
    for v in it {
        if *v < 0.0 {
            clipped -= *v;
            *v = 0.0;
        }
    }
    clipped
}

const DENSITY_MAGIC: &[u8; 4] = b"BDGF";
const PAIR_DENSITY_MAGIC: &[u8; 4] = b"BDGP";
const DENSITY_VERSION: u32 = 1;

/// Header: magic, version, `n_χ`, `n_ξ` (u64), then `L`, `ξ_max`, `ħ` (f64), little-endian.
fn write_density_header<W: Write>(w: &mut W, magic: &[u8; 4], g: &PhaseGrid) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&DENSITY_VERSION.to_le_bytes())?;
    w.write_all(&(g.n_chi() as u64).to_le_bytes())?;
    w.write_all(&(g.n_xi as u64).to_le_bytes())?;
    for v in [g.spatial.length, g.xi_max, g.spatial.hbar] {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_density_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<PhaseGrid> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::InvalidInput("unexpected density snapshot magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) != DENSITY_VERSION {
        return Err(Error::InvalidInput("unsupported density snapshot version".into()));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let nc = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let nx = u64::from_le_bytes(b8) as usize;
    let l = read_f64(r)?;
    let xi_max = read_f64(r)?;
    let hbar = read_f64(r)?;
    PhaseGrid::new(crate::grid::SpatialGrid::new(l, nc, hbar)?, nx, xi_max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoParticleDensity {
    /// `values[[iχ₁, iξ₁, iχ₂, iξ₂]]`.
    pub values: Array4<f64>,
    pub grid: PhaseGrid,
}

impl TwoParticleDensity {
    pub fn new(values: Array4<f64>, grid: PhaseGrid) -> Result<Self> {
        let (nc, nx) = (grid.n_chi(), grid.n_xi);
        if values.dim() != (nc, nx, nc, nx) {
            return Err(Error::InvalidInput(format!("pair density shape {:?} does not match grid", values.dim())));
        }
        Ok(Self { values, grid })
    }

    pub fn product(f: &PhaseDensity) -> Self {
        let (nc, nx) = f.values.dim();
        let v = &f.values;
        let values = Array4::from_shape_fn((nc, nx, nc, nx), |(a, b, c, d)| v[[a, b]] * v[[c, d]]);
        Self { values, grid: f.grid }
    }

    pub fn cell_volume(&self) -> f64 {
        self.grid.cell_volume().powi(2)
    }

    pub fn mass(&self) -> f64 {
        self.values.sum() * self.cell_volume()
    }

    /// `∫F(z, z₂) dz₂`.
    pub fn marginal(&self) -> PhaseDensity {
        let (nc, nx) = (self.grid.n_chi(), self.grid.n_xi);
        let dv = self.grid.cell_volume();
        let values = Array2::from_shape_fn((nc, nx), |(a, b)| {
            self.values.index_axis(Axis(0), a).index_axis(Axis(0), b).sum() * dv
        });
        PhaseDensity { values, grid: self.grid }
    }

    /// `max |F(z₁,z₂) − F(z₂,z₁)|`.
    pub fn exchange_defect(&self) -> f64 {
        let p = self.values.view().permuted_axes([2, 3, 0, 1]);
        self.values.iter().zip(p.iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn boundary_mass(&self) -> f64 {
        let n = self.grid.n_xi;
        let edge = |j: usize| j < GUARD_CELLS || j >= n - GUARD_CELLS;
        let mut acc = 0.0;
        for ((_, b, _, d), v) in self.values.indexed_iter() {
            if edge(b) || edge(d) {
                acc += v.abs();
            }
        }
        acc * self.cell_volume()
    }

    pub fn check_boundary(&self) -> Result<()> {
        let b = self.boundary_mass();
        if b > TOL_BOUNDARY {
            return Err(Error::DomainTooSmall(format!("pair density mass {b:e} within two cells of ±ξ_max")));
        }
        Ok(())
    }

    pub fn clip_and_normalize(&mut self) -> f64 {
        let dv = self.cell_volume();
        let clipped = clip_negatives(self.values.iter_mut()) * dv;
        let m = self.mass();
        if m > 0.0 {
            self.values /= m;
        }
        clipped
    }

    /// Snapshot order: `iχ₁` fastest, then `iξ₁`, `iχ₂`, `iξ₂`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.values.view().reversed_axes().iter().copied().collect()
    }

    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        write_density_header(&mut w, PAIR_DENSITY_MAGIC, &self.grid)?;
        for v in self.to_flat() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let grid = read_density_header(&mut r, PAIR_DENSITY_MAGIC)?;
        let (nc, nx) = (grid.n_chi(), grid.n_xi);
        let mut values = Array4::zeros((nc, nx, nc, nx));
        for d in 0..nx {
            for c in 0..nc {
                for b in 0..nx {
                    for a in 0..nc {
                        values[[a, b, c, d]] = read_f64(&mut r)?;
                    }
                }
            }
        }
        Self::new(values, grid)
    }
}

fn bspline3(t: f64) -> f64 {
    let a = t.abs();
    if a < 1.0 {
        (4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0
    } else if a < 2.0 {
        (2.0 - a).powi(3) / 6.0
    } else {
        0.0
    }
}

/// Periodic cubic-spline translation of lines of fixed length.
pub struct SplineShifter {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    inv_lambda: Vec<f64>,
    twiddle: Vec<C64>,
    buf: Vec<C64>,
    scratch: Vec<C64>,
}

impl SplineShifter {
    pub fn new(n: usize) -> Self {
        let inv_lambda = (0..n)
            .map(|k| 6.0 / (4.0 + 2.0 * (2.0 * PI * k as f64 / n as f64).cos()))
            .collect();
        let twiddle = (0..n).map(|q| C64::from_polar(1.0, -2.0 * PI * q as f64 / n as f64)).collect();
        let fft = fft_plan(n);
        let scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len().max(ifft_plan(n).get_inplace_scratch_len())];
        Self {
            n,
            fft,
            ifft: ifft_plan(n),
            inv_lambda,
            twiddle,
            buf: vec![C64::new(0.0, 0.0); n],
            scratch,
        }
    }

    /// Fourier multiplier that maps samples `g(x_i)` to `S(x_i − u·dx)`, `S` the spline interpolant.
    pub fn multiplier(&self, u: f64) -> Vec<C64> {
        let n = self.n as i64;
        let m0 = u.floor() as i64;
        let taps: Vec<(usize, f64)> = (m0 - 1..=m0 + 2)
            .map(|m| (m.rem_euclid(n) as usize, bspline3(m as f64 - u)))
            .collect();
        (0..self.n)
            .map(|k| {
                let mut acc = C64::new(0.0, 0.0);
                for &(m, w) in &taps {
                    acc += self.twiddle[(k * m) % self.n] * w;
                }
                acc * (self.inv_lambda[k] / self.n as f64)
            })
            .collect()
    }

    /// Applies a precomputed multiplier to a strided line of real values.
    pub fn apply(&mut self, mut line: ndarray::ArrayViewMut1<f64>, mult: &[C64]) {
        for (b, v) in self.buf.iter_mut().zip(line.iter()) {
            *b = C64::new(*v, 0.0);
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (b, m) in self.buf.iter_mut().zip(mult) {
            *b *= m;
        }
        self.ifft.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (v, b) in line.iter_mut().zip(self.buf.iter()) {
            *v = b.re;
        }
    }
}

/// Shift along `axis` of an array, by a per-line displacement in cells given by `shift(index)`.
/// Lines sharing the same `group` key reuse the multiplier.
fn shift_axis<D: ndarray::Dimension>(
    arr: &mut ndarray::Array<f64, D>,
    axis: usize,
    shift_cells: impl Fn(&D::Pattern) -> f64,
) where
    D::Pattern: Clone,
{
    let n = arr.shape()[axis];
    let mut sh = SplineShifter::new(n);
    let mut cache: std::collections::HashMap<u64, Vec<C64>> = std::collections::HashMap::new();
    // Iterate over lanes together with the index of their first element.
    let dim = arr.raw_dim();
    let mut idx_dim = dim.clone();
    idx_dim[axis] = 1;
    let starts: Vec<D::Pattern> = ndarray::indices(idx_dim).into_iter().collect();
    for (lane, start) in arr.lanes_mut(Axis(axis)).into_iter().zip(starts) {
        let u = shift_cells(&start);
        if u == 0.0 {
            continue;
        }
        if cache.len() > 4096 {
            cache.clear();
        }
        let mult = cache.entry(u.to_bits()).or_insert_with(|| sh.multiplier(u));
        sh.apply(lane, mult);
    }
}

#[derive(Debug, Clone)]
pub struct VlasovStep {
    pub f: PhaseDensity,
    /// Potential used for the ξ-advection (density at the half step).
    pub field: PotentialField,
    pub clipped: f64,
}

/// One Strang step of `∂_t f + ξ·∇_χ f + E_f·∇_ξ f = 0`.
pub fn vlasov_step(f: &PhaseDensity, k: &InteractionKernel, dt: f64) -> Result<VlasovStep> {
    let g = f.grid;
    if k.grid.n != g.n_chi() || k.grid.length != g.spatial.length {
        return Err(Error::InvalidInput("kernel grid does not match the density's χ grid".into()));
    }
    f.check_boundary()?;
    let mut v = f.values.clone();
    let dchi = g.d_chi();
    let half_chi = |v: &mut Array2<f64>| {
        shift_axis(v, 0, |&(_, j)| g.xi(j) * 0.5 * dt / dchi);
    };
    half_chi(&mut v);
    let dxi = g.d_xi();
    let rho: Vec<f64> = v.rows().into_iter().map(|r| r.sum() * dxi).collect();
    let field = PotentialField::new(&rho, k)?;
    let e: Vec<f64> = (0..g.n_chi()).map(|i| field.force_at(g.chi(i))).collect();
    shift_axis(&mut v, 1, |&(i, _)| e[i] * dt / dxi);
    half_chi(&mut v);
    let mut out = PhaseDensity { values: v, grid: g };
    let clipped = out.clip_and_normalize();
    out.check_boundary()?;
    Ok(VlasovStep { f: out, field, clipped })
}

/// One split step of the two-particle transport with the `η/N` pair force.
///
/// `forces` holds `E_f` sampled at the χ points of `F`'s grid.
pub fn twoparticle_step(
    big_f: &TwoParticleDensity,
    forces: &[f64],
    k: &InteractionKernel,
    dt: f64,
    eta: f64,
    n_particles: f64,
) -> Result<(TwoParticleDensity, f64)> {
    let g = big_f.grid;
    if forces.len() != g.n_chi() {
        return Err(Error::InvalidInput("force samples do not match the χ grid".into()));
    }
    big_f.check_boundary()?;
    let mut v = big_f.values.clone();
    let (dchi, dxi) = (g.d_chi(), g.d_xi());
    let half_chi = |v: &mut Array4<f64>| {
        shift_axis(v, 0, |&(_, b, _, _)| g.xi(b) * 0.5 * dt / dchi);
        shift_axis(v, 2, |&(_, _, _, d)| g.xi(d) * 0.5 * dt / dchi);
    };
    half_chi(&mut v);
    let nc = g.n_chi();
    let pair: Vec<f64> = (0..nc * nc)
        .map(|ac| {
            let (a, c) = (ac / nc, ac % nc);
            eta / n_particles * k.gradient_at(g.chi(a) - g.chi(c))
        })
        .collect();
    shift_axis(&mut v, 1, |&(a, _, c, _)| (forces[a] - pair[a * nc + c]) * dt / dxi);
    shift_axis(&mut v, 3, |&(a, _, c, _)| (forces[c] + pair[a * nc + c]) * dt / dxi);
    half_chi(&mut v);
    let mut out = TwoParticleDensity { values: v, grid: g };
    let clipped = out.clip_and_normalize();
    out.check_boundary()?;
    Ok((out, clipped))
}

/// `(θ/N)·∫∇K(χ − χ₂)·∂_ξ F(z, z₂) dz₂` on `F`'s grid, the formal feedback of the pair
/// channel on `f`. Diagnostic only; never added to the evolution.
pub fn pair_feedback_source(
    big_f: &TwoParticleDensity,
    k: &InteractionKernel,
    theta: f64,
    n_particles: f64,
) -> Result<Array2<f64>> {
    let g = big_f.grid;
    let (nc, nx) = (g.n_chi(), g.n_xi);
    let xi_grid = crate::grid::SpatialGrid::new(g.xi_period(), nx, g.spatial.hbar)?;
    let mut out = Array2::zeros((nc, nx));
    let dv = g.cell_volume();
    for a in 0..nc {
        let mut col = vec![0.0; nx];
        for c in 0..nc {
            let w = k.gradient_at(g.chi(a) - g.chi(c));
            for d in 0..nx {
                for b in 0..nx {
                    col[b] += w * big_f.values[[a, b, c, d]] * dv;
                }
            }
        }
        let dcol = crate::grid::spectral_derivative_real(&col, &xi_grid, 1)?;
        for b in 0..nx {
            out[[a, b]] = theta / n_particles * dcol[b];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalObservation {
    pub t: f64,
    pub mass_f: f64,
    pub l2_f: f64,
    pub xi2_f: f64,
    pub clipped_f: f64,
    pub mass_pair: Option<f64>,
    pub clipped_pair: Option<f64>,
    pub feedback_sup: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ClassicalSample {
    pub t: f64,
    pub f: PhaseDensity,
    pub pair: Option<TwoParticleDensity>,
}

#[derive(Debug, Clone)]
pub struct ClassicalTrajectory {
    pub samples: Vec<ClassicalSample>,
    pub observations: Vec<ClassicalObservation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledOptions {
    pub dt: f64,
    pub eta: f64,
    pub n_particles: f64,
    /// When set, the pair-feedback source is evaluated with this `θ` and its sup-norm recorded.
    pub feedback_theta: Option<f64>,
}

/// Evolves `f` autonomously and `F` in `f`'s field, sampling at the requested times.
///
/// Times are measured from 0 and may be negative for backward runs.
pub fn coupled_evolve(
    f0: &PhaseDensity,
    big_f0: Option<&TwoParticleDensity>,
    k: &InteractionKernel,
    sample_times: &[f64],
    opts: &CoupledOptions,
) -> Result<ClassicalTrajectory> {
    if !(opts.dt > 0.0) {
        return Err(Error::InvalidInput("classical dt must be positive".into()));
    }
    let mut f = f0.clone();
    let mut pair = big_f0.cloned();
    let mut t = 0.0;
    let mut clipped_f = 0.0;
    let mut clipped_pair = 0.0;
    let observe = |t: f64, f: &PhaseDensity, p: Option<&TwoParticleDensity>, cf: f64, cp: f64| -> Result<ClassicalObservation> {
        let feedback_sup = match (opts.feedback_theta, p) {
            (Some(th), Some(p)) => Some(
                pair_feedback_source(p, k, th, opts.n_particles)?
                    .iter()
                    .fold(0.0f64, |m, v| m.max(v.abs())),
            ),
            _ => None,
        };
        Ok(ClassicalObservation {
            t,
            mass_f: f.mass(),
            l2_f: f.l2_norm(),
            xi2_f: f.xi_moment(2),
            clipped_f: cf,
            mass_pair: p.map(|p| p.mass()),
            clipped_pair: p.map(|_| cp),
            feedback_sup,
        })
    };
    let mut samples = Vec::new();
    let mut observations = vec![observe(0.0, &f, pair.as_ref(), 0.0, 0.0)?];
    for &target in sample_times {
        let span = target - t;
        let steps = (span.abs() / opts.dt - 1e-9).ceil().max(0.0) as usize;
        let h = if steps > 0 { span / steps as f64 } else { 0.0 };
        for _ in 0..steps {
            let st = vlasov_step(&f, k, h)?;
            clipped_f += st.clipped;
            if let Some(p) = pair.as_mut() {
                let xs: Vec<f64> = (0..p.grid.n_chi()).map(|i| p.grid.chi(i)).collect();
                let forces = st.field.forces_at(&xs);
                let (np, c) = twoparticle_step(p, &forces, k, h, opts.eta, opts.n_particles)?;
                *p = np;
                clipped_pair += c;
            }
            f = st.f;
            t += h;
            observations.push(observe(t, &f, pair.as_ref(), clipped_f, clipped_pair)?);
        }
        t = target;
        samples.push(ClassicalSample { t, f: f.clone(), pair: pair.clone() });
    }
    Ok(ClassicalTrajectory { samples, observations })
}
