//! Wigner and Husimi transforms, anti-Wick quantization and the skew-information functional.

use std::f64::consts::PI;

use ndarray::{Array2, Array4};

use crate::grid::{fft_plan, spectral_derivative_real, wrap_periodic, PhaseGrid, SpatialGrid};
use crate::kinetic::{PhaseDensity, TwoParticleDensity};
use crate::linalg;
use crate::state::{theta, DensityOperator, PairingState};
use crate::{CMatrix, Error, Result, C64};

/// Relative amplitude below which periodic images are dropped.
const IMAGE_CUTOFF: f64 = 1e-17;
/// Husimi values below `-HUSIMI_NEG_TOL·max` indicate a broken transform.
const HUSIMI_NEG_TOL: f64 = 1e-10;
pub const MAX_CLIPPED_FRACTION: f64 = 0.01;

fn image_count(grid: &SpatialGrid) -> i64 {
    let reach = (2.0 * grid.hbar * -IMAGE_CUTOFF.ln()).sqrt();
    (reach / grid.length).ceil() as i64 + 1
}

/// Periodized Gaussian wave packets `g_z` on a spatial grid, normalized numerically.
#[derive(Debug, Clone, Copy)]
pub struct CoherentFamily {
    pub grid: SpatialGrid,
    images: i64,
}

impl CoherentFamily {
    pub fn new(grid: SpatialGrid) -> Self {
        Self { grid, images: image_count(&grid) }
    }

    /// `g_z(x_a) ∝ Σ_w exp(−(x_a + wL − χ)²/(2ħ))·exp(iξ(x_a + wL)/ħ)` with `dx·Σ|g|² = 1`.
    pub fn state(&self, chi: f64, xi: f64) -> Vec<C64> {
        let g = &self.grid;
        let (l, hb) = (g.length, g.hbar);
        let mut out: Vec<C64> = (0..g.n)
            .map(|a| {
                let xa = g.x(a);
                let d0 = wrap_periodic(xa - chi, l);
                let mut acc = C64::new(0.0, 0.0);
                for w in -self.images..=self.images {
                    let d = d0 + w as f64 * l;
                    let amp = (-d * d / (2.0 * hb)).exp();
                    if amp > 0.0 {
                        acc += C64::from_polar(amp, xi * (d + chi) / hb);
                    }
                }
                acc
            })
            .collect();
        let norm = (g.dx() * out.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt();
        out.iter_mut().for_each(|v| *v /= norm);
        out
    }

    /// Columns are `g_z` for `z = (χ_i, ξ_j)`, ordered `i·n_ξ + j`.
    pub fn phase_grid_matrix(&self, pg: &PhaseGrid) -> CMatrix {
        let nz = pg.n_chi() * pg.n_xi;
        let mut m = Array2::zeros((self.grid.n, nz));
        for i in 0..pg.n_chi() {
            for j in 0..pg.n_xi {
                let g = self.state(pg.chi(i), pg.xi(j));
                let col = i * pg.n_xi + j;
                for (a, v) in g.into_iter().enumerate() {
                    m[[a, col]] = v;
                }
            }
        }
        m
    }

    /// Kernel of the coherent projector `|g_z⟩⟨g_z|`.
    pub fn projector_kernel(&self, chi: f64, xi: f64) -> CMatrix {
        let g = self.state(chi, xi);
        let n = g.len();
        Array2::from_shape_fn((n, n), |(a, b)| g[a] * g[b].conj())
    }
}

/// Signed Wigner function with its phase grid (`n_ξ = n_x`, `dξ = πħ/L`).
#[derive(Debug, Clone, PartialEq)]
pub struct Wigner {
    pub values: Array2<f64>,
    pub grid: PhaseGrid,
}

/// `f(χ_i, ξ_j) = 2dx·Σ_m w_m·K[i+m, i−m]·e^{−2πijm/n}` over displacements `y = 2m·dx`, `|y| ≤ L/2`.
pub fn wigner_kernel(kernel: &CMatrix, grid: SpatialGrid) -> Wigner {
    let n = grid.n;
    let dx = grid.dx();
    let pg = PhaseGrid::wigner(grid);
    let fft = fft_plan(n);
    let mut values = Array2::zeros((n, n));
    let mut buf = vec![C64::new(0.0, 0.0); n];
    let quarter = n / 4;
    for i in 0..n {
        buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for m in -(quarter as i64)..=(quarter as i64) {
            let w = if 4 * m.unsigned_abs() as usize == n { 0.5 } else { 1.0 };
            let a = (i as i64 + m).rem_euclid(n as i64) as usize;
            let b = (i as i64 - m).rem_euclid(n as i64) as usize;
            buf[m.rem_euclid(n as i64) as usize] += kernel[[a, b]] * (2.0 * dx * w);
        }
        fft.process(&mut buf);
        for jj in 0..n {
            // ξ index jj ↔ frequency q = jj − n/2 (mod n)
            let q = (jj + n / 2) % n;
            values[[i, jj]] = buf[q].re;
        }
    }
    Wigner { values, grid: pg }
}

pub fn wigner(op: &DensityOperator) -> Wigner {
    wigner_kernel(&op.kernel, op.grid)
}

/// Default Husimi grid: `n_ξ = n_x` momenta spaced `2πħ/L` up to `p_max`.
pub fn husimi_grid(grid: SpatialGrid) -> PhaseGrid {
    PhaseGrid { spatial: grid, n_xi: grid.n, xi_max: grid.p_max() }
}

/// `⟨g_z, op g_z⟩` evaluated directly.
pub fn husimi_at(op: &DensityOperator, chi: f64, xi: f64) -> f64 {
    let fam = CoherentFamily::new(op.grid);
    let g = fam.state(chi, xi);
    let dx = op.grid.dx();
    let mut acc = C64::new(0.0, 0.0);
    for (a, ga) in g.iter().enumerate() {
        let mut row = C64::new(0.0, 0.0);
        for (b, gb) in g.iter().enumerate() {
            row += op.kernel[[a, b]] * gb;
        }
        acc += ga.conj() * row;
    }
    acc.re * dx * dx
}

/// Unnormalized Husimi values `⟨g_z, op g_z⟩` on a phase grid whose χ axis is the operator's grid.
///
/// Uses translation invariance of the packets: with image positions `e` and Gaussian weights `γ`,
/// `f(χ_i, ξ) = dx²·Σ_d E_i[d]·e^{−iξ·d·dx/ħ}` where `E_i[d] = Σ_{e₁−e₂=d} γ₁γ₂·K[i+u₁, i+u₂]`.
pub fn husimi_raw(op: &DensityOperator, pg: &PhaseGrid) -> Result<Array2<f64>> {
    let g = op.grid;
    if pg.n_chi() != g.n || pg.spatial.length != g.length || pg.spatial.hbar != g.hbar {
        return Err(Error::InvalidInput("Husimi grid must share the operator's spatial grid".into()));
    }
    let (n, dx, hb) = (g.n, g.dx(), g.hbar);
    let images = image_count(&g);
    let c = (PI * hb).powf(-0.25);
    // (u, e, γ) for every retained image of every grid point.
    let mut taps: Vec<(usize, i64, f64)> = Vec::new();
    for u in 0..n {
        let m = (wrap_periodic(g.x(u), g.length) / dx).round() as i64;
        for w in -images..=images {
            let e = m + w * n as i64;
            let x = e as f64 * dx;
            let gamma = (-x * x / (2.0 * hb)).exp();
            if gamma > IMAGE_CUTOFF {
                taps.push((u, e, c * gamma));
            }
        }
    }
    let emax = taps.iter().map(|t| t.1.abs()).max().unwrap_or(0);
    let width = (4 * emax + 1) as usize;
    let off = 2 * emax;
    let mut e_mat: Array2<C64> = Array2::zeros((n, width));
    for i in 0..n {
        let mut row = e_mat.row_mut(i);
        for &(u1, e1, g1) in &taps {
            let r = (i + u1) % n;
            let krow = op.kernel.row(r);
            for &(u2, e2, g2) in &taps {
                let col = (i + u2) % n;
                row[(e1 - e2 + off) as usize] += krow[col] * (g1 * g2);
            }
        }
    }
    let nx = pg.n_xi;
    let mut phases: Array2<C64> = Array2::zeros((width, nx));
    let mut norms = vec![0.0; nx];
    for j in 0..nx {
        let omega = pg.xi(j) * dx / hb;
        for d in 0..width {
            phases[[d, j]] = C64::from_polar(1.0, -omega * (d as i64 - off) as f64);
        }
        // ‖g_ξ‖² depends on ξ through interference between images.
        let mut acc = 0.0;
        let mut cur = C64::new(0.0, 0.0);
        let mut last_u = usize::MAX;
        for &(u, e, gm) in &taps {
            if u != last_u {
                acc += cur.norm_sqr();
                cur = C64::new(0.0, 0.0);
                last_u = u;
            }
            cur += C64::from_polar(gm, omega * e as f64);
        }
        acc += cur.norm_sqr();
        norms[j] = acc * dx;
    }
    let prod = e_mat.dot(&phases);
    Ok(Array2::from_shape_fn((n, nx), |(i, j)| prod[[i, j]].re * dx * dx / norms[j]))
}

#[derive(Debug, Clone)]
pub struct Husimi {
    pub density: PhaseDensity,
    /// Mass before renormalization.
    pub raw_mass: f64,
    /// Negative round-off mass removed before renormalization.
    pub clipped_mass: f64,
}

pub fn husimi_on(op: &DensityOperator, pg: &PhaseGrid) -> Result<Husimi> {
    let mut values = husimi_raw(op, pg)?;
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let dv = pg.cell_volume();
    let raw_mass = values.sum() * dv;
    let mut clipped_mass = 0.0;
    for v in values.iter_mut() {
        if *v < 0.0 {
            if *v < -HUSIMI_NEG_TOL * peak {
                return Err(Error::TransformInconsistency(format!("Husimi value {v:e} below tolerance")));
            }
            clipped_mass -= *v * dv;
            *v = 0.0;
        }
    }
    let mass = values.sum() * dv;
    if !(mass > 0.0) {
        return Err(Error::TransformInconsistency("Husimi transform has no mass on the grid".into()));
    }
    values /= mass;
    if clipped_mass > 0.0 {
        log::debug!("husimi: clipped {clipped_mass:e} of negative round-off mass");
    }
    Ok(Husimi { density: PhaseDensity::new(values, *pg)?, raw_mass, clipped_mass })
}

/// Husimi transform on [`husimi_grid`], renormalized to unit mass.
pub fn husimi(op: &DensityOperator) -> Result<PhaseDensity> {
    Ok(husimi_on(op, &husimi_grid(op.grid))?.density)
}

/// `F̃(z₁, z₂) ∝ |⟨g_{z₁} ⊗ g_{z₂}, Ψ_α⟩|²` on `pg`, normalized to unit mass.
pub fn husimi_two_particle(pairing: &PairingState, pg: &PhaseGrid) -> Result<TwoParticleDensity> {
    if theta(pairing) <= 0.0 {
        return Err(Error::InvalidState("two-particle Husimi undefined for theta = 0".into()));
    }
    if pg.spatial.length != pairing.grid.length {
        return Err(Error::InvalidInput("phase grid length differs from the pairing grid".into()));
    }
    let fam = CoherentFamily::new(pairing.grid);
    let gm = fam.phase_grid_matrix(pg);
    let a = linalg::adjoint(&gm).dot(&pairing.kernel).dot(&gm.mapv(|v| v.conj()));
    let (nc, nx) = (pg.n_chi(), pg.n_xi);
    let mut values =
        Array4::from_shape_fn((nc, nx, nc, nx), |(i1, j1, i2, j2)| a[[i1 * nx + j1, i2 * nx + j2]].norm_sqr());
    let mass = values.sum() * pg.cell_volume().powi(2);
    if !(mass > 0.0) {
        return Err(Error::TransformInconsistency("two-particle Husimi has no mass on the grid".into()));
    }
    values /= mass;
    TwoParticleDensity::new(values, *pg)
}

#[derive(Debug, Clone)]
pub struct AntiWick {
    pub op: DensityOperator,
    /// Fraction of `h`-trace above the spectral cap before redistribution.
    pub clipped_fraction: f64,
    /// Smallest eigenvalue of the unclipped operator.
    pub min_eigenvalue: f64,
}

/// `op = (1/h)·Σ f(z)·|g_z⟩⟨g_z|·dχdξ`, renormalized to unit `h`-trace and clipped to `[0, 1/(N h)]`.
pub fn antiwick_quantize(f: &PhaseDensity, grid: SpatialGrid, n_particles: f64) -> Result<AntiWick> {
    if !(n_particles >= 1.0) {
        return Err(Error::InvalidInput(format!("N must be at least 1, got {n_particles}")));
    }
    if f.values.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidInput("anti-Wick quantization needs a nonnegative density".into()));
    }
    let pg = f.grid;
    if (pg.spatial.length - grid.length).abs() > 1e-12 * grid.length {
        return Err(Error::InvalidInput("density and operator grids have different lengths".into()));
    }
    let fam = CoherentFamily::new(grid);
    let dv = pg.cell_volume();
    let peak = f.values.iter().fold(0.0f64, |m, v| m.max(*v));
    let pts: Vec<(f64, f64, f64)> = f
        .values
        .indexed_iter()
        .filter(|(_, &v)| v > 1e-300 && v > peak * 1e-18)
        .map(|((i, j), &v)| (pg.chi(i), pg.xi(j), v * dv))
        .collect();
    if pts.is_empty() {
        return Err(Error::InvalidInput("density has no mass".into()));
    }
    let n = grid.n;
    let mut gw: CMatrix = Array2::zeros((n, pts.len()));
    for (col, &(chi, xi, w)) in pts.iter().enumerate() {
        let s = w.sqrt();
        for (a, v) in fam.state(chi, xi).into_iter().enumerate() {
            gw[[a, col]] = v * s;
        }
    }
    let h = grid.h();
    let dx = grid.dx();
    // Operator matrix dx·kernel.
    let mut m = gw.dot(&linalg::adjoint(&gw)).mapv(|v| v * (dx / h));
    let tr = linalg::trace(&m).re * h;
    m.mapv_inplace(|v| v / tr);
    let (mut mu, vecs) = linalg::hermitian_eigen(&m);
    let min_eigenvalue = mu[0];
    let cap = 1.0 / (n_particles * h);
    for v in mu.iter_mut() {
        *v = v.max(0.0);
    }
    let excess: f64 = mu.iter().map(|&v| (v - cap).max(0.0)).sum::<f64>() * h;
    if excess > MAX_CLIPPED_FRACTION {
        return Err(Error::Infeasible(format!(
            "anti-Wick quantization clips {:.3}% of the trace (limit {}%); density too peaked for N = {n_particles}",
            100.0 * excess,
            100.0 * MAX_CLIPPED_FRACTION
        )));
    }
    if excess > 0.0 {
        let filled = |c: f64| mu.iter().map(|&v| (c * v).min(cap)).sum::<f64>() * h;
        let mut hi = 1.0;
        while filled(hi) < 1.0 {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::Infeasible("spectral cap cannot hold unit trace".into()));
            }
        }
        let mut lo = 1.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if filled(mid) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        for v in mu.iter_mut() {
            *v = (*v * hi).min(cap);
        }
    }
    let mut kernel = linalg::reconstruct(&mu, &vecs).mapv(|v| v / dx);
    kernel = linalg::hermitian_part(&kernel);
    let op = DensityOperator::new(kernel, grid, n_particles)?;
    Ok(AntiWick { op, clipped_fraction: excess, min_eigenvalue })
}

/// `D_op = ‖∇f_{√op}‖_{L²}` with `f_{√op}` the Wigner function of the square root.
pub fn skew_information(op: &DensityOperator) -> Result<f64> {
    let dx = op.grid.dx();
    let (mut mu, vecs) = linalg::hermitian_eigen(&op.operator_matrix());
    for v in mu.iter_mut() {
        *v = v.max(0.0).sqrt();
    }
    let root = linalg::reconstruct(&mu, &vecs).mapv(|v| v / dx);
    let w = wigner_kernel(&root, op.grid);
    let pg = w.grid;
    let (nc, nx) = w.values.dim();
    let chi_axis = pg.spatial;
    let xi_axis = SpatialGrid::new(pg.xi_period(), nx, op.grid.hbar)?;
    let mut acc = 0.0;
    for j in 0..nx {
        let col: Vec<f64> = w.values.column(j).to_vec();
        acc += spectral_derivative_real(&col, &chi_axis, 1)?.iter().map(|v| v * v).sum::<f64>();
    }
    for i in 0..nc {
        let row: Vec<f64> = w.values.row(i).to_vec();
        acc += spectral_derivative_real(&row, &xi_axis, 1)?.iter().map(|v| v * v).sum::<f64>();
    }
    Ok((acc * pg.cell_volume()).sqrt())
}
