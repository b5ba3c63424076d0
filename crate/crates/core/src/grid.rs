//! Periodic spatial grid, phase-space grid and the shared Fourier convention.
//!
//! Forward transform: `ĝ_k = dx · Σ_i g(x_i) exp(−2πi k x_i / L)`.
//! Inverse: `g(x_i) = (1/L) · Σ_k ĝ_k exp(2πi k x_i / L)`.
//! Coefficients are stored in FFT order (k = 0, 1, …, n/2−1, −n/2, …, −1).

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Cached forward FFT plan of length `n` (unnormalized).
pub fn fft_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

/// Cached inverse FFT plan of length `n` (unnormalized).
pub fn ifft_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Signed integer wavenumber of FFT slot `q` for length `n`.
pub fn wavenumber(q: usize, n: usize) -> i64 {
    if q < n / 2 {
        q as i64
    } else {
        q as i64 - n as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub length: f64,
    pub n: usize,
    pub hbar: f64,
}

impl SpatialGrid {
    pub fn new(length: f64, n: usize, hbar: f64) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("length must be positive, got {length}")));
        }
        if n < 4 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("n_x must be even and at least 4, got {n}")));
        }
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::InvalidGrid(format!("hbar must be positive, got {hbar}")));
        }
        Ok(Self { length, n, hbar })
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Planck constant `h = 2πħ`.
    pub fn h(&self) -> f64 {
        2.0 * PI * self.hbar
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Angular wavenumber `2πk/L` of FFT slot `q`.
    pub fn omega(&self, q: usize) -> f64 {
        2.0 * PI * wavenumber(q, self.n) as f64 / self.length
    }

    /// Momentum `p_k = ħ 2πk/L` of FFT slot `q`.
    pub fn momentum(&self, q: usize) -> f64 {
        self.hbar * self.omega(q)
    }

    pub fn momenta(&self) -> Vec<f64> {
        (0..self.n).map(|q| self.momentum(q)).collect()
    }

    pub fn p_max(&self) -> f64 {
        self.hbar * PI * self.n as f64 / self.length
    }

    /// Minimal-image representative of `x` in `[−L/2, L/2)`.
    pub fn wrap(&self, x: f64) -> f64 {
        wrap_periodic(x, self.length)
    }
}

/// Minimal-image representative of `x` for period `l`.
pub fn wrap_periodic(x: f64, l: f64) -> f64 {
    x - l * (x / l + 0.5).floor()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub spatial: SpatialGrid,
    pub n_xi: usize,
    pub xi_max: f64,
}

impl PhaseGrid {
    pub fn new(spatial: SpatialGrid, n_xi: usize, xi_max: f64) -> Result<Self> {
        if n_xi < 4 || n_xi % 2 != 0 {
            return Err(Error::InvalidGrid(format!("n_xi must be even and at least 4, got {n_xi}")));
        }
        if !(xi_max.is_finite() && xi_max > 0.0) {
            return Err(Error::InvalidGrid(format!("xi_max must be positive, got {xi_max}")));
        }
        Ok(Self { spatial, n_xi, xi_max })
    }

    /// The grid produced by the Wigner transform: `n_ξ = n_x`, `dξ = πħ/L`.
    pub fn wigner(spatial: SpatialGrid) -> Self {
        let xi_max = PI * spatial.hbar * spatial.n as f64 / (2.0 * spatial.length);
        Self { spatial, n_xi: spatial.n, xi_max }
    }

    /// Coarser grid over the same phase-space box with `n` points per axis.
    pub fn coarsened(&self, n: usize) -> Result<Self> {
        let spatial = SpatialGrid::new(self.spatial.length, n, self.spatial.hbar)?;
        Self::new(spatial, n, self.xi_max)
    }

    pub fn n_chi(&self) -> usize {
        self.spatial.n
    }

    pub fn d_chi(&self) -> f64 {
        self.spatial.dx()
    }

    pub fn d_xi(&self) -> f64 {
        2.0 * self.xi_max / self.n_xi as f64
    }

    pub fn chi(&self, i: usize) -> f64 {
        self.spatial.x(i)
    }

    pub fn xi(&self, j: usize) -> f64 {
        -self.xi_max + j as f64 * self.d_xi()
    }

    pub fn cell_volume(&self) -> f64 {
        self.d_chi() * self.d_xi()
    }

    /// Period of the ξ axis when it is treated as a torus.
    pub fn xi_period(&self) -> f64 {
        2.0 * self.xi_max
    }
}

/// Values at `jL/m` of the trigonometric interpolant through the `n` periodic samples `v`.
/// The Nyquist mode of an even-length input is split evenly between `±n/2`.
pub fn resample_periodic(v: &[f64], m: usize) -> Vec<f64> {
    let n = v.len();
    if m == n {
        return v.to_vec();
    }
    let mut c: Vec<C64> = v.iter().map(|&x| C64::new(x, 0.0)).collect();
    fft_plan(n).process(&mut c);
    let mut d = vec![C64::new(0.0, 0.0); m];
    let m_i = m as i64;
    for (q, cq) in c.iter().enumerate() {
        let k = wavenumber(q, n);
        let cq = cq / n as f64;
        if n % 2 == 0 && k == -(n as i64) / 2 {
            d[k.rem_euclid(m_i) as usize] += cq * 0.5;
            d[(-k).rem_euclid(m_i) as usize] += cq * 0.5;
        } else {
            d[k.rem_euclid(m_i) as usize] += cq;
        }
    }
    ifft_plan(m).process(&mut d);
    d.iter().map(|z| z.re).collect()
}

fn check_len(samples: &[C64], grid: &SpatialGrid) -> Result<()> {
    if samples.len() != grid.n {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {} samples for a grid of {}",
            samples.len(),
            grid.n
        )));
    }
    Ok(())
}

pub fn fourier_forward(samples: &[C64], grid: &SpatialGrid) -> Result<Vec<C64>> {
    check_len(samples, grid)?;
    let mut buf = samples.to_vec();
    fft_plan(grid.n).process(&mut buf);
    let dx = grid.dx();
    buf.iter_mut().for_each(|v| *v *= dx);
    Ok(buf)
}

pub fn fourier_inverse(coeffs: &[C64], grid: &SpatialGrid) -> Result<Vec<C64>> {
    check_len(coeffs, grid)?;
    let mut buf = coeffs.to_vec();
    ifft_plan(grid.n).process(&mut buf);
    let s = 1.0 / grid.length;
    buf.iter_mut().for_each(|v| *v *= s);
    Ok(buf)
}

pub fn spectral_derivative(samples: &[C64], grid: &SpatialGrid, order: u32) -> Result<Vec<C64>> {
    if !(order == 1 || order == 2) {
        return Err(Error::InvalidInput(format!("derivative order must be 1 or 2, got {order}")));
    }
    let mut hat = fourier_forward(samples, grid)?;
    let n = grid.n;
    for (q, v) in hat.iter_mut().enumerate() {
        if order % 2 == 1 && q == n / 2 {
            *v = C64::new(0.0, 0.0);
            continue;
        }
        *v *= C64::new(0.0, grid.omega(q)).powu(order);
    }
    fourier_inverse(&hat, grid)
}

/// Real-valued convenience wrapper around [`spectral_derivative`].
pub fn spectral_derivative_real(samples: &[f64], grid: &SpatialGrid, order: u32) -> Result<Vec<f64>> {
    let c: Vec<C64> = samples.iter().map(|&v| C64::new(v, 0.0)).collect();
    Ok(spectral_derivative(&c, grid, order)?.iter().map(|v| v.re).collect())
}

/// In-place unnormalized FFT along one axis of a dynamic-dimensional array.
pub fn fft_axis(arr: &mut ndarray::ArrayD<C64>, axis: usize, inverse: bool) {
    let n = arr.shape()[axis];
    let plan = if inverse { ifft_plan(n) } else { fft_plan(n) };
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for mut lane in arr.lanes_mut(ndarray::Axis(axis)) {
        for (b, v) in buf.iter_mut().zip(lane.iter()) {
            *b = *v;
        }
        plan.process(&mut buf);
        for (v, b) in lane.iter_mut().zip(buf.iter()) {
            *v = *b;
        }
    }
}
