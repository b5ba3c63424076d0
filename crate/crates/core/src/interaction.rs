//! Interaction kernel K, mean field, exchange operator and the Hartree–Fock Hamiltonian.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::grid::{fourier_forward, fourier_inverse, wavenumber, SpatialGrid};
use crate::state::DensityOperator;
use crate::{CMatrix, Error, Result, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    /// `a·exp(−x²/2σ²)`, periodized.
    Gaussian { a: f64, sigma: f64 },
    /// `a·cos(2πmx/L)`.
    Cosine { a: f64, m: u32 },
    /// Samples `K(x_i)` on the grid, `i = 0..n_x`.
    Tabulated { samples: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct InteractionKernel {
    pub spec: KernelSpec,
    pub grid: SpatialGrid,
    /// `K(x_i)` for `i = 0..n`; the circulant row.
    pub samples: Vec<f64>,
    /// `∇K(x_i)`.
    pub gradient: Vec<f64>,
    /// Fourier coefficients of `samples` in the shared convention.
    pub fourier: Vec<C64>,
    pub sup_k: f64,
    pub sup_grad: f64,
    pub sup_laplacian: f64,
    /// `(1/L)·Σ|K̂_k|`.
    pub hat_l1: f64,
    /// `sup |x·K(x)|` over the minimal-image coordinate; diagnostic only.
    pub sup_xk: f64,
}

impl InteractionKernel {
    pub fn new(spec: KernelSpec, grid: SpatialGrid) -> Result<Self> {
        match &spec {
            KernelSpec::Gaussian { a, sigma } => {
                if !a.is_finite() || !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::InvalidInput(format!("bad gaussian kernel a={a} sigma={sigma}")));
                }
            }
            KernelSpec::Cosine { a, .. } => {
                if !a.is_finite() {
                    return Err(Error::InvalidInput("bad cosine amplitude".into()));
                }
            }
            KernelSpec::Tabulated { samples } => {
                if samples.len() != grid.n {
                    return Err(Error::InvalidInput(format!(
                        "tabulated kernel has {} samples, grid has {}",
                        samples.len(),
                        grid.n
                    )));
                }
            }
        }
        let mut k = Self {
            spec,
            grid,
            samples: Vec::new(),
            gradient: Vec::new(),
            fourier: Vec::new(),
            sup_k: 0.0,
            sup_grad: 0.0,
            sup_laplacian: 0.0,
            hat_l1: 0.0,
            sup_xk: 0.0,
        };
        k.samples = match &k.spec {
            KernelSpec::Tabulated { samples } => samples.clone(),
            _ => (0..grid.n).map(|i| k.derivative_at(grid.x(i), 0)).collect(),
        };
        let n = grid.n;
        let scale = k.samples.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for i in 1..n {
            if (k.samples[i] - k.samples[n - i]).abs() > 1e-12 * scale {
                return Err(Error::InvalidInput(format!("kernel is not even at sample {i}")));
            }
        }
        let c: Vec<C64> = k.samples.iter().map(|&v| C64::new(v, 0.0)).collect();
        k.fourier = fourier_forward(&c, &grid)?;
        k.hat_l1 = k.fourier.iter().map(|v| v.norm()).sum::<f64>() / grid.length;
        k.gradient = (0..n).map(|i| k.derivative_at(grid.x(i), 1)).collect();

        let fine = 64 * n;
        let dxf = grid.length / fine as f64;
        for i in 0..fine {
            let x = i as f64 * dxf;
            let v = k.derivative_at(x, 0);
            k.sup_k = k.sup_k.max(v.abs());
            k.sup_grad = k.sup_grad.max(k.derivative_at(x, 1).abs());
            k.sup_laplacian = k.sup_laplacian.max(k.derivative_at(x, 2).abs());
            k.sup_xk = k.sup_xk.max((grid.wrap(x) * v).abs());
        }
        Ok(k)
    }

    pub fn zero(grid: SpatialGrid) -> Self {
        Self::new(KernelSpec::Cosine { a: 0.0, m: 0 }, grid).expect("zero kernel is valid")
    }

    /// `K(x_i − x_j)` as a dense real matrix.
    pub fn circulant(&self) -> Array2<f64> {
        let n = self.grid.n;
        Array2::from_shape_fn((n, n), |(i, j)| self.samples[(i + n - j) % n])
    }

    /// `K(x_i − x_j)·A(i, j)`.
    pub fn multiply(&self, a: &CMatrix) -> CMatrix {
        let n = self.grid.n;
        Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] * self.samples[(i + n - j) % n])
    }

    pub fn value_at(&self, x: f64) -> f64 {
        self.derivative_at(x, 0)
    }

    pub fn gradient_at(&self, x: f64) -> f64 {
        self.derivative_at(x, 1)
    }

    /// `d^order K / dx^order` at an arbitrary point, `order ≤ 2`.
    pub fn derivative_at(&self, x: f64, order: u32) -> f64 {
        let l = self.grid.length;
        match &self.spec {
            KernelSpec::Gaussian { a, sigma } => {
                let s2 = sigma * sigma;
                let images = (8.0 * sigma / l).ceil() as i64 + 1;
                let x0 = self.grid.wrap(x);
                (-images..=images)
                    .map(|w| {
                        let y = x0 + w as f64 * l;
                        let g = a * (-y * y / (2.0 * s2)).exp();
                        match order {
                            0 => g,
                            1 => -y / s2 * g,
                            _ => (y * y / (s2 * s2) - 1.0 / s2) * g,
                        }
                    })
                    .sum()
            }
            KernelSpec::Cosine { a, m } => {
                let w = 2.0 * PI * *m as f64 / l;
                match order {
                    0 => a * (w * x).cos(),
                    1 => -a * w * (w * x).sin(),
                    _ => -a * w * w * (w * x).cos(),
                }
            }
            KernelSpec::Tabulated { .. } => {
                // Trigonometric interpolant of the samples; Nyquist kept symmetric.
                let n = self.grid.n;
                let mut acc = 0.0;
                for (q, c) in self.fourier.iter().enumerate() {
                    let k = wavenumber(q, n);
                    let w = 2.0 * PI * k as f64 / l;
                    let d = C64::new(0.0, w).powu(order);
                    if q == n / 2 {
                        // real cosine at the Nyquist mode; its odd derivatives are dropped
                        if order % 2 == 0 {
                            acc += d.re * c.re * (w * x).cos();
                        }
                    } else {
                        acc += (d * c * C64::from_polar(1.0, w * x)).re;
                    }
                }
                acc / l
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianOptions {
    pub include_exchange: bool,
    /// Spinless reduction: the direct term carries a factor 2.
    pub spinless: bool,
}

impl Default for HamiltonianOptions {
    fn default() -> Self {
        Self { include_exchange: true, spinless: false }
    }
}

impl HamiltonianOptions {
    pub fn mean_field_factor(&self) -> f64 {
        if self.spinless {
            2.0
        } else {
            1.0
        }
    }
}

/// Circular convolution `(K∗ρ)(x_i) = dx·Σ_j K(x_i − x_j)ρ_j` via FFT.
pub fn mean_field_potential(rho: &[f64], k: &InteractionKernel) -> Result<Vec<f64>> {
    let grid = &k.grid;
    let c: Vec<C64> = rho.iter().map(|&v| C64::new(v, 0.0)).collect();
    let mut hat = fourier_forward(&c, grid)?;
    for (h, kk) in hat.iter_mut().zip(&k.fourier) {
        *h *= kk;
    }
    Ok(fourier_inverse(&hat, grid)?.iter().map(|v| v.re).collect())
}

/// The potential `K∗ρ` kept in Fourier form so the force can be evaluated off-grid.
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub grid: SpatialGrid,
    pub fourier: Vec<C64>,
}

impl PotentialField {
    pub fn new(rho: &[f64], k: &InteractionKernel) -> Result<Self> {
        let grid = k.grid;
        let c: Vec<C64> = rho.iter().map(|&v| C64::new(v, 0.0)).collect();
        let mut hat = fourier_forward(&c, &grid)?;
        for (h, kk) in hat.iter_mut().zip(&k.fourier) {
            *h *= kk;
        }
        Ok(Self { grid, fourier: hat })
    }

    /// `E(x) = −V′(x)` from the trigonometric interpolant, Nyquist dropped.
    pub fn force_at(&self, x: f64) -> f64 {
        let n = self.grid.n;
        let mut acc = 0.0;
        for (q, c) in self.fourier.iter().enumerate() {
            if q == 0 || q == n / 2 {
                continue;
            }
            let w = self.grid.omega(q);
            acc += (C64::new(0.0, w) * c * C64::from_polar(1.0, w * x)).re;
        }
        -acc / self.grid.length
    }

    pub fn forces_at(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.force_at(x)).collect()
    }
}

/// `E = −∇(K∗ρ)` on the grid.
pub fn force_field(rho: &[f64], k: &InteractionKernel) -> Result<Vec<f64>> {
    let v = mean_field_potential(rho, k)?;
    Ok(crate::grid::spectral_derivative_real(&v, &k.grid, 1)?.iter().map(|e| -e).collect())
}

/// Kernel `𝖷(x,y) = K(x − y)·op(x, y)`.
pub fn exchange_kernel(op: &DensityOperator, k: &InteractionKernel) -> CMatrix {
    k.multiply(&op.kernel)
}

/// Real symmetric circulant matrix of `|p̂|²/2` acting on grid samples.
pub fn kinetic_matrix(grid: &SpatialGrid) -> Array2<f64> {
    let n = grid.n;
    let mut sym: Vec<C64> = (0..n).map(|q| C64::new(0.5 * grid.momentum(q).powi(2), 0.0)).collect();
    crate::grid::ifft_plan(n).process(&mut sym);
    let row: Vec<f64> = sym.iter().map(|v| v.re / n as f64).collect();
    Array2::from_shape_fn((n, n), |(i, j)| row[(i + n - j) % n])
}

/// Spatial density `ρ(x_i) = h·op(x_i, x_i)`.
pub fn density_of(kernel: &CMatrix, grid: &SpatialGrid) -> Vec<f64> {
    let h = grid.h();
    kernel.diag().iter().map(|v| h * v.re).collect()
}

/// Potential part `V − h·𝖷` of the Hamiltonian as an operator matrix.
pub fn potential_matrix(
    kernel: &CMatrix,
    k: &InteractionKernel,
    opts: &HamiltonianOptions,
) -> Result<CMatrix> {
    let grid = &k.grid;
    let rho = density_of(kernel, grid);
    let v = mean_field_potential(&rho, k)?;
    let f = opts.mean_field_factor();
    let n = grid.n;
    let mut m = if opts.include_exchange {
        let s = -grid.h() * grid.dx();
        k.multiply(kernel).mapv(|z| z * s)
    } else {
        Array2::zeros((n, n))
    };
    for i in 0..n {
        m[[i, i]] += f * v[i];
    }
    Ok(m)
}

/// Full Hartree–Fock Hamiltonian `|p̂|²/2 + V − h·𝖷` as an operator matrix.
pub fn hamiltonian_matrix(
    kernel: &CMatrix,
    k: &InteractionKernel,
    opts: &HamiltonianOptions,
    kinetic: &Array2<f64>,
) -> Result<CMatrix> {
    let mut m = potential_matrix(kernel, k, opts)?;
    m.zip_mut_with(kinetic, |a, &t| *a += t);
    Ok(m)
}

/// Applies `𝖧_op` to a vector of grid samples.
pub fn hamiltonian_apply(
    op: &DensityOperator,
    vec: &[C64],
    k: &InteractionKernel,
    opts: &HamiltonianOptions,
) -> Result<Vec<C64>> {
    let grid = &op.grid;
    if vec.len() != grid.n {
        return Err(Error::InvalidInput(format!("vector length {} != {}", vec.len(), grid.n)));
    }
    let mut hat = fourier_forward(vec, grid)?;
    for (q, v) in hat.iter_mut().enumerate() {
        *v *= 0.5 * grid.momentum(q).powi(2);
    }
    let mut out = fourier_inverse(&hat, grid)?;
    let rho = density_of(&op.kernel, grid);
    let v = mean_field_potential(&rho, k)?;
    let f = opts.mean_field_factor();
    for i in 0..grid.n {
        out[i] += vec[i] * (f * v[i]);
    }
    if opts.include_exchange {
        let s = grid.h() * grid.dx();
        let n = grid.n;
        for i in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..n {
                acc += op.kernel[[i, j]] * k.samples[(i + n - j) % n] * vec[j];
            }
            out[i] -= acc * s;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> SpatialGrid {
        SpatialGrid::new(1.0, 32, 1.0 / (16.0 * PI)).unwrap()
    }

    fn random_rho(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>()).collect()
    }

    fn random_state(g: SpatialGrid, rng: &mut ChaCha8Rng) -> DensityOperator {
        // Positive matrix, scaled to unit h-trace.
        let n = g.n;
        let a = Array2::from_shape_fn((n, n), |_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let mut p = a.dot(&linalg::adjoint(&a));
        let tr = g.h() * g.dx() * linalg::trace(&p).re;
        p.mapv_inplace(|v| v / tr);
        DensityOperator::new_unchecked(p, g, 1.0)
    }

    #[test]
    fn gaussian_is_even_and_smooth() {
        let k = InteractionKernel::new(KernelSpec::Gaussian { a: 1.5, sigma: 0.1 }, grid()).unwrap();
        assert!((k.sup_k - 1.5).abs() < 1e-12);
        // analytic sup norms of the unperiodized gaussian
        assert!((k.sup_grad - 1.5 / (0.1 * 1f64.exp().sqrt())).abs() < 1e-3 * k.sup_grad);
        assert!((k.sup_laplacian - 1.5 / 0.01).abs() < 1e-9 * k.sup_laplacian);
        assert!(k.hat_l1.is_finite() && k.hat_l1 > 0.0);
    }

    #[test]
    fn tabulated_rejects_odd() {
        let g = grid();
        let samples: Vec<f64> = (0..32).map(|i| (2.0 * PI * g.x(i)).sin()).collect();
        assert!(InteractionKernel::new(KernelSpec::Tabulated { samples }, g).is_err());
    }

    #[test]
    fn tabulated_matches_analytic_derivatives() {
        let g = grid();
        let samples: Vec<f64> = (0..32).map(|i| 0.7 * (2.0 * PI * 3.0 * g.x(i)).cos()).collect();
        let t = InteractionKernel::new(KernelSpec::Tabulated { samples }, g).unwrap();
        let c = InteractionKernel::new(KernelSpec::Cosine { a: 0.7, m: 3 }, g).unwrap();
        for x in [0.013, 0.31, 0.77] {
            for o in 0..3 {
                assert!((t.derivative_at(x, o) - c.derivative_at(x, o)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn point_mass_convolution() {
        let g = grid();
        let k = InteractionKernel::new(KernelSpec::Gaussian { a: 1.0, sigma: 0.08 }, g).unwrap();
        let mut rho = vec![0.0; 32];
        rho[5] = 1.0 / g.dx();
        let v = mean_field_potential(&rho, &k).unwrap();
        for i in 0..32 {
            assert!((v[i] - k.value_at(g.x(i) - g.x(5))).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_potential_has_two_modes() {
        let g = grid();
        let k = InteractionKernel::new(KernelSpec::Cosine { a: 0.4, m: 2 }, g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = mean_field_potential(&random_rho(32, &mut rng), &k).unwrap();
        let c: Vec<C64> = v.iter().map(|&x| C64::new(x, 0.0)).collect();
        let hat = fourier_forward(&c, &g).unwrap();
        for (q, h) in hat.iter().enumerate() {
            if wavenumber(q, 32).abs() != 2 {
                assert!(h.norm() < 1e-12, "mode {q}: {h}");
            }
        }
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let g = grid();
        let k = InteractionKernel::new(KernelSpec::Gaussian { a: 0.9, sigma: 0.13 }, g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = random_rho(32, &mut rng);
        let v = mean_field_potential(&rho, &k).unwrap();
        for i in 0..32 {
            let direct: f64 = (0..32).map(|j| g.dx() * k.value_at(g.x(i) - g.x(j)) * rho[j]).sum();
            assert!((v[i] - direct).abs() < 1e-11);
        }
    }

    #[test]
    fn force_of_cosine_point_mass() {
        let g = grid();
        let (a, m) = (0.6, 2u32);
        let k = InteractionKernel::new(KernelSpec::Cosine { a, m }, g).unwrap();
        let mut rho = vec![0.0; 32];
        rho[3] = 1.0 / g.dx();
        let e = force_field(&rho, &k).unwrap();
        let w = 2.0 * PI * m as f64;
        for i in 0..32 {
            let want = a * w * (w * (g.x(i) - g.x(3))).sin();
            assert!((e[i] - want).abs() < 1e-10);
        }
        let pf = PotentialField::new(&rho, &k).unwrap();
        for x in [0.05, 0.5, 0.93] {
            assert!((pf.force_at(x) - a * w * (w * (x - g.x(3))).sin()).abs() < 1e-10);
        }
        let flat = force_field(&vec![1.0; 32], &k).unwrap();
        assert!(flat.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn force_matches_finite_difference() {
        let g = SpatialGrid::new(1.0, 256, 0.01).unwrap();
        let k = InteractionKernel::new(KernelSpec::Gaussian { a: 1.0, sigma: 0.1 }, g).unwrap();
        let rho: Vec<f64> = (0..256).map(|i| 1.0 + 0.5 * (2.0 * PI * g.x(i)).sin() + 0.2 * (6.0 * PI * g.x(i)).cos()).collect();
        let v = mean_field_potential(&rho, &k).unwrap();
        let e = force_field(&rho, &k).unwrap();
        let scale = e.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..256 {
            // fourth-order central difference
            let d = (-v[(i + 2) % 256] + 8.0 * v[(i + 1) % 256] - 8.0 * v[(i + 255) % 256] + v[(i + 254) % 256])
                / (12.0 * g.dx());
            assert!((e[i] + d).abs() < 1e-6 * scale);
        }
    }

    #[test]
    fn exchange_special_cases() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let op = random_state(g, &mut rng);
        let c = InteractionKernel::new(KernelSpec::Cosine { a: 2.5, m: 0 }, g).unwrap();
        let x = exchange_kernel(&op, &c);
        assert!(linalg::max_abs(&(&x - &op.kernel.mapv(|v| v * 2.5))) < 1e-14);
        let k = InteractionKernel::new(KernelSpec::Gaussian { a: 1.0, sigma: 0.1 }, g).unwrap();
        let diag = DensityOperator::new_unchecked(Array2::from_diag_elem(32, C64::new(1.0, 0.0)), g, 1.0);
        let xd = exchange_kernel(&diag, &k);
        for i in 0..32 {
            assert!((xd[[i, i]].re - k.value_at(0.0)).abs() < 1e-14);
        }
        assert!(linalg::hermiticity_defect(&exchange_kernel(&op, &k)) < 1e-14);
    }

    #[test]
    fn exchange_schatten_bound() {
        // ‖𝖷_α‖_{𝓛^{2p}} ≤ ‖K̂‖_{ℓ¹}·‖α‖_{𝓛^{2p}}, singular values of the dx-weighted kernels.
        let g = grid();
        let k = InteractionKernel::new(KernelSpec::Gaussian { a: 1.0, sigma: 0.1 }, g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let a = Array2::from_shape_fn((32, 32), |_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let xa = k.multiply(&a);
            for p in [1.0, 2.0] {
                let norm = |m: &CMatrix| {
                    let s = linalg::singular_values(&m.mapv(|v| v * g.dx()));
                    s.iter().map(|v| v.powf(2.0 * p)).sum::<f64>().powf(1.0 / (2.0 * p))
                };
                assert!(norm(&xa) <= k.hat_l1 * norm(&a) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn plane_waves_are_free_eigenvectors() {
        let g = grid();
        let k = InteractionKernel::zero(g);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let op = random_state(g, &mut rng);
        let opts = HamiltonianOptions::default();
        for kk in [0i64, 3, -5] {
            let v: Vec<C64> = g.points().iter().map(|&x| C64::from_polar(1.0, 2.0 * PI * kk as f64 * x)).collect();
            let hv = hamiltonian_apply(&op, &v, &k, &opts).unwrap();
            let p = g.hbar * 2.0 * PI * kk as f64;
            for (a, b) in hv.iter().zip(&v) {
                assert!((a - b * (0.5 * p * p)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn uniform_state_shifts_spectrum() {
        let g = grid();
        let k = InteractionKernel::new(KernelSpec::Gaussian { a: 1.0, sigma: 0.1 }, g).unwrap();
        // op = identity/(hL): uniform density 1/L, no exchange
        let id = Array2::from_diag_elem(32, C64::new(1.0 / (g.h() * g.length), 0.0));
        let op = DensityOperator::new_unchecked(id, g, 1.0);
        let opts = HamiltonianOptions { include_exchange: false, spinless: false };
        let shift = k.fourier[0].re / g.length;
        let v: Vec<C64> = g.points().iter().map(|&x| C64::from_polar(1.0, 2.0 * PI * 2.0 * x)).collect();
        let hv = hamiltonian_apply(&op, &v, &k, &opts).unwrap();
        let p = g.hbar * 4.0 * PI;
        for (a, b) in hv.iter().zip(&v) {
            assert!((a - b * (0.5 * p * p + shift)).norm() < 1e-10);
        }
    }

    #[test]
    fn hamiltonian_is_hermitian_and_matches_matrix() {
        let g = grid();
        let k = InteractionKernel::new(KernelSpec::Gaussian { a: 1.0, sigma: 0.1 }, g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let op = random_state(g, &mut rng);
        for spinless in [false, true] {
            let opts = HamiltonianOptions { include_exchange: true, spinless };
            let hm = hamiltonian_matrix(&op.kernel, &k, &opts, &kinetic_matrix(&g)).unwrap();
            let ip = |a: &[C64], b: &[C64]| a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>() * g.dx();
            for _ in 0..20 {
                let u: Vec<C64> = (0..32).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
                let v: Vec<C64> = (0..32).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
                let hu = hamiltonian_apply(&op, &u, &k, &opts).unwrap();
                let hv = hamiltonian_apply(&op, &v, &k, &opts).unwrap();
                let lhs = ip(&u, &hv);
                let rhs = ip(&v, &hu).conj();
                assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0));
                let mv = hm.dot(&ndarray::Array1::from(v.clone()));
                for (a, b) in mv.iter().zip(&hv) {
                    assert!((a - b).norm() < 1e-10 * b.norm().max(1.0));
                }
            }
            // linearity
            let u: Vec<C64> = (0..32).map(|_| C64::new(rng.random::<f64>(), 0.0)).collect();
            let v: Vec<C64> = (0..32).map(|_| C64::new(0.0, rng.random::<f64>())).collect();
            let s: Vec<C64> = u.iter().zip(&v).map(|(a, b)| a * 2.0 + b).collect();
            let hs = hamiltonian_apply(&op, &s, &k, &opts).unwrap();
            let hu = hamiltonian_apply(&op, &u, &k, &opts).unwrap();
            let hv = hamiltonian_apply(&op, &v, &k, &opts).unwrap();
            for i in 0..32 {
                assert!((hs[i] - hu[i] * 2.0 - hv[i]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn exchange_scale_bound() {
        let g = grid();
        let k = InteractionKernel::new(KernelSpec::Gaussian { a: 1.0, sigma: 0.1 }, g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let op = random_state(g, &mut rng);
            let x = exchange_kernel(&op, &k).mapv(|v| v * g.h() * g.dx());
            let lhs = linalg::hermitian_eigenvalues(&x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let opn = linalg::hermitian_eigenvalues(&op.kernel.mapv(|v| v * g.dx()))
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(lhs <= g.h() * k.sup_k * opn * (1.0 + 1e-10));
        }
    }
}
