//! Rescaled quantum state `(op, α)` and its constraints.
//!
//! Kernels are sampled on the grid. The operator with kernel `A` acts as the matrix `dx·A`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::grid::SpatialGrid;
use crate::kinetic::PhaseDensity;
use crate::linalg;
use crate::{CMatrix, Error, Result, C64};

const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-8;
const SPECTRUM_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct DensityOperator {
    pub kernel: CMatrix,
    pub grid: SpatialGrid,
    pub n_particles: f64,
}

impl DensityOperator {
    pub fn new(kernel: CMatrix, grid: SpatialGrid, n_particles: f64) -> Result<Self> {
        let op = Self::new_unchecked(kernel, grid, n_particles);
        op.validate()?;
        Ok(op)
    }

    pub fn new_unchecked(kernel: CMatrix, grid: SpatialGrid, n_particles: f64) -> Self {
        Self { kernel, grid, n_particles }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.n;
        if self.kernel.dim() != (n, n) {
            return Err(Error::InvalidState(format!("kernel shape {:?} on a grid of {n}", self.kernel.dim())));
        }
        if !(self.n_particles >= 1.0) {
            return Err(Error::InvalidState(format!("N must be at least 1, got {}", self.n_particles)));
        }
        let scale = linalg::max_abs(&self.kernel).max(1.0);
        let herm = linalg::hermiticity_defect(&self.kernel);
        if herm > HERMITIAN_TOL * scale {
            return Err(Error::InvalidState(format!("op is not Hermitian (defect {herm:e})")));
        }
        let tr = self.h_trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("h-trace of op is {tr}, expected 1")));
        }
        let spec = self.spectrum();
        let cap = self.spectral_cap();
        let (lo, hi) = (spec[0], spec[spec.len() - 1]);
        if lo < -SPECTRUM_TOL * cap || hi > cap * (1.0 + SPECTRUM_TOL) {
            return Err(Error::InvalidState(format!(
                "spectrum [{lo:e}, {hi:e}] outside [0, 1/(N h)] = [0, {cap:e}]"
            )));
        }
        Ok(())
    }

    /// `h·Tr op`.
    pub fn h_trace(&self) -> f64 {
        self.grid.h() * self.grid.dx() * linalg::trace(&self.kernel).re
    }

    /// `1/(N h)`.
    pub fn spectral_cap(&self) -> f64 {
        1.0 / (self.n_particles * self.grid.h())
    }

    /// The matrix `dx·kernel` representing the operator.
    pub fn operator_matrix(&self) -> CMatrix {
        self.kernel.mapv(|v| v * self.grid.dx())
    }

    /// Operator eigenvalues, ascending.
    pub fn spectrum(&self) -> Vec<f64> {
        linalg::hermitian_eigenvalues(&self.operator_matrix())
    }

    pub fn operator_norm(&self) -> f64 {
        let s = self.spectrum();
        s[0].abs().max(s[s.len() - 1].abs())
    }

    /// `ρ(x_i) = h·op(x_i, x_i)`.
    pub fn density(&self) -> Vec<f64> {
        crate::interaction::density_of(&self.kernel, &self.grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairingSymmetry {
    Antisymmetric,
    Symmetric,
}

impl PairingSymmetry {
    /// `+1` for symmetric, `−1` for antisymmetric kernels.
    pub fn sign(self) -> f64 {
        match self {
            Self::Antisymmetric => -1.0,
            Self::Symmetric => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairingState {
    pub kernel: CMatrix,
    pub symmetry: PairingSymmetry,
    pub grid: SpatialGrid,
    pub n_particles: f64,
}

impl PairingState {
    pub fn new(kernel: CMatrix, symmetry: PairingSymmetry, grid: SpatialGrid, n_particles: f64) -> Result<Self> {
        let p = Self { kernel, symmetry, grid, n_particles };
        p.validate()?;
        Ok(p)
    }

    pub fn zero(grid: SpatialGrid, n_particles: f64, symmetry: PairingSymmetry) -> Self {
        Self { kernel: Array2::zeros((grid.n, grid.n)), symmetry, grid, n_particles }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.n;
        if self.kernel.dim() != (n, n) {
            return Err(Error::InvalidState(format!("pairing kernel shape {:?} on a grid of {n}", self.kernel.dim())));
        }
        let scale = linalg::max_abs(&self.kernel).max(1.0);
        let defect = self.symmetry_defect();
        if defect > HERMITIAN_TOL * scale {
            return Err(Error::InvalidState(format!("pairing kernel violates {:?} symmetry ({defect:e})", self.symmetry)));
        }
        let t = theta(self);
        if !(0.0..1.0).contains(&t) {
            return Err(Error::InvalidState(format!("theta = {t} outside [0, 1)")));
        }
        Ok(())
    }

    pub fn symmetry_defect(&self) -> f64 {
        let s = self.symmetry.sign();
        let mut worst: f64 = 0.0;
        ndarray::Zip::from(&self.kernel)
            .and(&self.kernel.t())
            .for_each(|&a, &b| worst = worst.max((a - b * s).norm()));
        worst
    }

    /// Re-imposes the exchange symmetry: `(α ± αᵀ)/2`.
    pub fn symmetrize(&mut self) {
        let s = self.symmetry.sign();
        let t = self.kernel.t().to_owned();
        self.kernel.zip_mut_with(&t, |a, &b| *a = (*a + b * s) * 0.5);
    }

    /// `‖α‖_{L²} = (dx²·Σ|α|²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.dx().powi(2) * linalg::frobenius_sq(&self.kernel)).sqrt()
    }

    /// Normalized pair wave function `Ψ_α = α/‖α‖`.
    pub fn wave_function(&self) -> Result<CMatrix> {
        let nrm = self.l2_norm();
        if nrm == 0.0 {
            return Err(Error::InvalidState("pair wave function undefined for alpha = 0".into()));
        }
        Ok(self.kernel.mapv(|v| v / nrm))
    }
}

#[derive(Debug, Clone)]
pub struct QuantumState {
    pub op: DensityOperator,
    pub pairing: PairingState,
    pub time: f64,
}

impl QuantumState {
    pub fn new(op: DensityOperator, pairing: PairingState, time: f64) -> Result<Self> {
        if op.grid != pairing.grid || op.n_particles != pairing.n_particles {
            return Err(Error::InvalidState("op and pairing disagree on grid or N".into()));
        }
        Ok(Self { op, pairing, time })
    }

    pub fn grid(&self) -> SpatialGrid {
        self.op.grid
    }

    pub fn n_particles(&self) -> f64 {
        self.op.n_particles
    }
}

/// `θ_α = (1/N)·dx²·Σ|α|²`.
pub fn theta(pairing: &PairingState) -> f64 {
    pairing.grid.dx().powi(2) * linalg::frobenius_sq(&pairing.kernel) / pairing.n_particles
}

/// Operator norm of `N h op² + θ op_{α:1} − op`.
pub fn quasifree_residual(op: &DensityOperator, pairing: &PairingState) -> f64 {
    linalg::hermitian_eigenvalues(&quasifree_defect(op, pairing))
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

/// The operator matrix `N h op² + θ op_{α:1} − op`.
pub fn quasifree_defect(op: &DensityOperator, pairing: &PairingState) -> CMatrix {
    let g = &op.grid;
    let nh = op.n_particles * g.h();
    let o = op.operator_matrix();
    let a = pairing.kernel.mapv(|v| v * g.dx());
    let mut r = o.dot(&o).mapv(|v| v * nh);
    r += &a.dot(&linalg::adjoint(&a)).mapv(|v| v / nh);
    r -= &o;
    r
}

/// Kernel of the first marginal `op_{α:1} = |α*|²/(N h θ_α)`.
pub fn pairing_marginal(pairing: &PairingState) -> Result<CMatrix> {
    let t = theta(pairing);
    if t <= 0.0 {
        return Err(Error::InvalidState("pairing marginal undefined for theta = 0".into()));
    }
    let g = &pairing.grid;
    let s = g.dx() / (pairing.n_particles * g.h() * t);
    Ok(pairing.kernel.dot(&linalg::adjoint(&pairing.kernel)).mapv(|v| v * s))
}

/// Relative eigenvalue level below which `quasifree_init` assigns no pair amplitude.
pub const PAIRING_EIGEN_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct QuasiFreeInit {
    pub state: QuantumState,
    /// Largest `θ` compatible with the quantized one-particle operator.
    pub theta_max: f64,
    pub achieved_theta: f64,
    /// Fraction of `h`-trace moved by spectral clipping during quantization.
    pub clipped_fraction: f64,
    pub warning: Option<String>,
}

/// Builds pure quasi-free data whose one-particle part is the anti-Wick quantization of `f_target`.
pub fn quasifree_init(
    f_target: &PhaseDensity,
    theta_target: f64,
    grid: SpatialGrid,
    n_particles: f64,
    symmetry: PairingSymmetry,
) -> Result<QuasiFreeInit> {
    if !(0.0..1.0).contains(&theta_target) {
        return Err(Error::InvalidInput(format!("theta_target {theta_target} outside [0, 1)")));
    }
    let quant = crate::transforms::antiwick_quantize(f_target, grid, n_particles)?;
    let op = quant.op;
    let nh = n_particles * grid.h();
    let (mut lam, vecs) = linalg::hermitian_eigen(&op.operator_matrix().mapv(|v| v * nh));
    for l in lam.iter_mut() {
        *l = l.clamp(0.0, 1.0);
    }
    // Round-off eigenvalues carry no pairing; their square roots would spread noise over phase space.
    let floor = PAIRING_EIGEN_FLOOR * lam.iter().fold(0.0f64, |m, v| m.max(*v));
    for l in lam.iter_mut() {
        if *l < floor {
            *l = 0.0;
        }
    }
    let n = grid.n;
    let mut coef = vec![0.0; n];
    let mut partner: Vec<Option<usize>> = vec![None; n];
    match symmetry {
        PairingSymmetry::Symmetric => {
            for k in 0..n {
                coef[k] = (lam[k] * (1.0 - lam[k])).sqrt();
            }
        }
        PairingSymmetry::Antisymmetric => {
            // Pair neighbours in the sorted spectrum; an odd leftover stays unpaired.
            // `c² ≤ λ_lo(1 − λ_hi)` keeps `0 ≤ Γ ≤ 1` on each 2×2 block.
            let mut k = 0;
            while k + 1 < n {
                let (lo, hi) = (lam[k].min(lam[k + 1]), lam[k].max(lam[k + 1]));
                let c = (lo * (1.0 - hi)).max(0.0).sqrt();
                coef[k] = c;
                coef[k + 1] = c;
                partner[k] = Some(k + 1);
                partner[k + 1] = Some(k);
                k += 2;
            }
        }
    }
    let theta_max: f64 = coef.iter().map(|c| c * c).sum::<f64>() / n_particles;
    let mut warning = None;
    let s = if theta_max <= 0.0 {
        if theta_target > 0.0 {
            warning = Some(format!("theta_target {theta_target} unattainable, maximum is 0"));
        }
        0.0
    } else if theta_target > theta_max {
        warning = Some(format!(
            "theta_target {theta_target} unattainable, using maximum {theta_max}"
        ));
        1.0
    } else {
        (theta_target / theta_max).sqrt()
    };
    // α = (s/dx)·Σ_k c_k u_k ⊗ u_k (symmetric) or the antisymmetrized pair products.
    let dx = grid.dx();
    let mut alpha: CMatrix = Array2::zeros((n, n));
    for k in 0..n {
        if coef[k] == 0.0 {
            continue;
        }
        let w = s * coef[k] / dx;
        let u = vecs.column(k);
        let v = match symmetry {
            PairingSymmetry::Symmetric => vecs.column(k),
            PairingSymmetry::Antisymmetric => match partner[k] {
                Some(p) => vecs.column(p),
                None => continue,
            },
        };
        let sign = if symmetry == PairingSymmetry::Antisymmetric && partner[k].is_some_and(|p| p < k) {
            -1.0
        } else {
            1.0
        };
        for i in 0..n {
            let ui = u[i] * (w * sign);
            for j in 0..n {
                alpha[[i, j]] += ui * v[j];
            }
        }
    }
    let mut pairing = PairingState { kernel: alpha, symmetry, grid, n_particles };
    pairing.symmetrize();
    let achieved = theta(&pairing);
    let state = QuantumState::new(op, pairing, 0.0)?;
    Ok(QuasiFreeInit {
        state,
        theta_max,
        achieved_theta: achieved,
        clipped_fraction: quant.clipped_fraction,
        warning,
    })
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"BDGS";
const SNAPSHOT_VERSION: u32 = 1;

/// Binary snapshot: magic, version, `n_x`, `L`, `ħ`, `N`, `θ`, symmetry flag, then the
/// `op` and `α` kernels row-major as little-endian `(re, im)` f64 pairs.
pub fn write_snapshot<W: Write>(state: &QuantumState, mut w: W) -> Result<()> {
    let g = state.grid();
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    w.write_all(&(g.n as u64).to_le_bytes())?;
    for v in [g.length, g.hbar, state.n_particles(), theta(&state.pairing)] {
        w.write_all(&v.to_le_bytes())?;
    }
    let flag: u8 = match state.pairing.symmetry {
        PairingSymmetry::Antisymmetric => 0,
        PairingSymmetry::Symmetric => 1,
    };
    w.write_all(&[flag])?;
    for m in [&state.op.kernel, &state.pairing.kernel] {
        for v in m.iter() {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_snapshot(state: &QuantumState, path: &Path) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_snapshot(state, f)
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<QuantumState> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::InvalidInput("not a state snapshot".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != SNAPSHOT_VERSION {
        return Err(Error::InvalidInput(format!("unsupported snapshot version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    let length = read_f64(&mut r)?;
    let hbar = read_f64(&mut r)?;
    let n_particles = read_f64(&mut r)?;
    let _theta = read_f64(&mut r)?;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let symmetry = match flag[0] {
        0 => PairingSymmetry::Antisymmetric,
        1 => PairingSymmetry::Symmetric,
        f => return Err(Error::InvalidInput(format!("bad symmetry flag {f}"))),
    };
    let grid = SpatialGrid::new(length, n, hbar)?;
    let read_matrix = |r: &mut R| -> Result<CMatrix> {
        let mut m = Array2::zeros((n, n));
        for v in m.iter_mut() {
            let re = read_f64(r)?;
            let im = read_f64(r)?;
            *v = C64::new(re, im);
        }
        Ok(m)
    };
    let op = read_matrix(&mut r)?;
    let alpha = read_matrix(&mut r)?;
    QuantumState::new(
        DensityOperator::new_unchecked(op, grid, n_particles),
        PairingState { kernel: alpha, symmetry, grid, n_particles },
        0.0,
    )
}

pub fn load_snapshot(path: &Path) -> Result<QuantumState> {
    read_snapshot(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PhaseGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> SpatialGrid {
        SpatialGrid::new(1.0, 32, 1.0 / (16.0 * std::f64::consts::PI)).unwrap()
    }

    fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        Array2::from_shape_fn((n, n), |_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn theta_simple_cases() {
        let g = grid();
        let mut p = PairingState::zero(g, 4.0, PairingSymmetry::Antisymmetric);
        assert_eq!(theta(&p), 0.0);
        // two entries with dx²(|a|² + |a|²) = N/2
        let a = (4.0 / 4.0f64).sqrt() / g.dx();
        p.kernel[[1, 2]] = C64::new(a, 0.0);
        p.kernel[[2, 1]] = C64::new(-a, 0.0);
        assert!((theta(&p) - 0.5).abs() < 1e-14);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn theta_matches_direct_sum() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_matrix(32, &mut rng);
        let mut p = PairingState { kernel: m, symmetry: PairingSymmetry::Antisymmetric, grid: g, n_particles: 3.0 };
        p.symmetrize();
        let mut direct = 0.0;
        for i in 0..32 {
            for j in 0..32 {
                direct += g.dx() * g.dx() * p.kernel[[i, j]].norm_sqr();
            }
        }
        assert!((theta(&p) - direct / 3.0).abs() < 1e-12 * direct);
        assert!(p.symmetry_defect() < 1e-15);
    }

    fn projector_state(g: SpatialGrid, n: f64, u: &[C64]) -> DensityOperator {
        // op = c·|u⟩⟨u| with ⟨u,u⟩ = 1 in L², h-trace 1
        let k = Array2::from_shape_fn((g.n, g.n), |(i, j)| u[i] * u[j].conj() / g.h());
        DensityOperator::new_unchecked(k, g, n)
    }

    fn normalized_mode(g: &SpatialGrid, k: f64) -> Vec<C64> {
        g.points()
            .iter()
            .map(|&x| C64::from_polar(1.0 / g.length.sqrt(), 2.0 * std::f64::consts::PI * k * x / g.length))
            .collect()
    }

    #[test]
    fn residual_zero_for_extreme_projector() {
        // single projector: spectrum {1/h} = {1/(N h)} with N = 1
        let g = grid();
        let op = projector_state(g, 1.0, &normalized_mode(&g, 3.0));
        assert!(op.validate().is_ok());
        let p = PairingState::zero(g, 1.0, PairingSymmetry::Symmetric);
        assert!(quasifree_residual(&op, &p) < 1e-10);
    }

    #[test]
    fn residual_positive_for_mixed_state() {
        let g = grid();
        let mut k = Array2::zeros((32, 32));
        for m in 0..4 {
            let u = normalized_mode(&g, m as f64);
            for i in 0..32 {
                for j in 0..32 {
                    k[[i, j]] += u[i] * u[j].conj() / (4.0 * g.h());
                }
            }
        }
        // eigenvalues 1/(4h) strictly inside (0, 1/(N h)) for N = 2
        let op = DensityOperator::new(k, g, 2.0).unwrap();
        let p = PairingState::zero(g, 2.0, PairingSymmetry::Symmetric);
        let r = quasifree_residual(&op, &p);
        assert!(r > 1e-3, "{r}");
    }

    #[test]
    fn marginal_of_product_is_projector() {
        let g = grid();
        let u: Vec<f64> = g.points().iter().map(|&x| (2.0 * std::f64::consts::PI * x).sin() * 2f64.sqrt()).collect();
        let c = 0.3;
        let a = Array2::from_shape_fn((32, 32), |(i, j)| C64::new(c * u[i] * u[j], 0.0));
        let p = PairingState::new(a, PairingSymmetry::Symmetric, g, 5.0).unwrap();
        let m = pairing_marginal(&p).unwrap();
        for i in 0..32 {
            for j in 0..32 {
                assert!((m[[i, j]].re - u[i] * u[j] / g.h()).abs() < 1e-10);
            }
        }
        assert!(pairing_marginal(&PairingState::zero(g, 5.0, PairingSymmetry::Symmetric)).is_err());
    }

    #[test]
    fn marginal_matches_partial_trace() {
        // op_α = h^{-2}|Ψ⟩⟨Ψ| as a 4-index tensor, then h·tr₂.
        let g = SpatialGrid::new(1.0, 8, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut p = PairingState { kernel: random_matrix(8, &mut rng), symmetry: PairingSymmetry::Antisymmetric, grid: g, n_particles: 20.0 };
        p.symmetrize();
        let psi = p.wave_function().unwrap();
        let h = g.h();
        let mut oracle: CMatrix = Array2::zeros((8, 8));
        for x1 in 0..8 {
            for y1 in 0..8 {
                let mut acc = C64::new(0.0, 0.0);
                for x2 in 0..8 {
                    // kernel of op_α at (x1,x2; y1,x2), integrated over x2
                    acc += psi[[x1, x2]] * psi[[y1, x2]].conj() / (h * h) * g.dx();
                }
                oracle[[x1, y1]] = acc * h;
            }
        }
        let m = pairing_marginal(&p).unwrap();
        assert!(linalg::max_abs(&(&m - &oracle)) < 1e-10 * linalg::max_abs(&oracle));
        let tr = g.h() * g.dx() * linalg::trace(&m).re;
        assert!((tr - 1.0).abs() < 1e-8);
        assert!(linalg::hermitian_eigenvalues(&m)[0] > -1e-10);
    }

    fn smooth_target(g: SpatialGrid) -> PhaseDensity {
        let pg = PhaseGrid::new(g, g.n, 2.0).unwrap();
        PhaseDensity::gaussian(pg, (0.5, 0.0), (0.3, 0.55)).unwrap()
    }

    #[test]
    fn init_produces_pure_quasifree_state() {
        let g = SpatialGrid::new(1.0, 64, 1.0 / (32.0 * std::f64::consts::PI)).unwrap();
        let n = 1.0 / g.h();
        let f = smooth_target(g);
        for sym in [PairingSymmetry::Symmetric] {
            let init = quasifree_init(&f, 0.99, g, n, sym).unwrap();
            assert!(init.warning.is_some());
            let st = &init.state;
            st.op.validate().unwrap();
            st.pairing.validate().unwrap();
            let r = quasifree_residual(&st.op, &st.pairing);
            assert!(r < 1e-9, "residual {r}");
            // independent dense evaluation of N h op² + θ op_{α:1} − op
            let t = theta(&st.pairing);
            let marg = pairing_marginal(&st.pairing).unwrap();
            let o = &st.op.kernel;
            let dx = g.dx();
            let mut defect: CMatrix = Array2::zeros((64, 64));
            for i in 0..64 {
                for j in 0..64 {
                    let mut sq = C64::new(0.0, 0.0);
                    for m in 0..64 {
                        sq += o[[i, m]] * o[[m, j]] * dx;
                    }
                    defect[[i, j]] = (sq * (n * g.h()) + marg[[i, j]] * t - o[[i, j]]) * dx;
                }
            }
            let worst = linalg::hermitian_eigenvalues(&defect).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(worst < 1e-9, "{worst}");
            assert!(t <= 1.0 - n * g.h() * crate::metrics::schatten_norm(&st.op, 2.0).unwrap().powi(2) + 1e-8);
        }
    }

    #[test]
    fn init_theta_zero_and_partial() {
        let g = SpatialGrid::new(1.0, 32, 1.0 / (16.0 * std::f64::consts::PI)).unwrap();
        let f = smooth_target(g);
        let n = 2.0;
        let z = quasifree_init(&f, 0.0, g, n, PairingSymmetry::Symmetric).unwrap();
        assert_eq!(theta(&z.state.pairing), 0.0);
        assert!(z.warning.is_none());
        let full = quasifree_init(&f, 0.999, g, n, PairingSymmetry::Symmetric).unwrap();
        let half = quasifree_init(&f, 0.5 * full.theta_max, g, n, PairingSymmetry::Symmetric).unwrap();
        assert!((half.achieved_theta - 0.5 * full.theta_max).abs() < 1e-12);
        assert!(half.warning.is_none());
    }

    #[test]
    fn antisymmetric_init() {
        let g = SpatialGrid::new(1.0, 32, 1.0 / (16.0 * std::f64::consts::PI)).unwrap();
        let f = smooth_target(g);
        let init = quasifree_init(&f, 0.99, g, 2.0, PairingSymmetry::Antisymmetric).unwrap();
        init.state.pairing.validate().unwrap();
        assert!(init.state.pairing.symmetry_defect() < 1e-12);
        assert!(init.achieved_theta > 0.0);
        // θ op_{α:1} ≤ op in the quadratic-form sense
        let t = theta(&init.state.pairing);
        let marg = pairing_marginal(&init.state.pairing).unwrap();
        let diff = (&init.state.op.kernel - &marg.mapv(|v| v * t)).mapv(|v| v * g.dx());
        assert!(linalg::hermitian_eigenvalues(&diff)[0] > -1e-8);
    }

    #[test]
    fn slater_spectrum_has_no_pairing() {
        // rank-N projector with eigenvalues 1/(N h): λ_k ∈ {0, 1}
        let g = grid();
        let n = 4.0;
        let mut k = Array2::zeros((32, 32));
        for m in 0..4 {
            let u = normalized_mode(&g, m as f64 - 1.0);
            for i in 0..32 {
                for j in 0..32 {
                    k[[i, j]] += u[i] * u[j].conj() / (n * g.h());
                }
            }
        }
        let op = DensityOperator::new(k, g, n).unwrap();
        let p = PairingState::zero(g, n, PairingSymmetry::Symmetric);
        assert!(quasifree_residual(&op, &p) < 1e-10);
    }

    #[test]
    fn snapshot_round_trip() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let op = DensityOperator::new_unchecked(random_matrix(32, &mut rng), g, 3.0);
        let p = PairingState { kernel: random_matrix(32, &mut rng), symmetry: PairingSymmetry::Symmetric, grid: g, n_particles: 3.0 };
        let st = QuantumState::new(op, p, 0.0).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&st, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"BDGS");
        assert_eq!(buf.len(), 4 + 4 + 8 + 32 + 1 + 2 * 32 * 32 * 16);
        let back = read_snapshot(&buf[..]).unwrap();
        assert_eq!(back.op.kernel, st.op.kernel);
        assert_eq!(back.pairing.kernel, st.pairing.kernel);
        assert_eq!(back.pairing.symmetry, PairingSymmetry::Symmetric);
        assert!(read_snapshot(&b"XXXX"[..]).is_err());
    }
}
