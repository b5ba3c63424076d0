//! Distances and observables: exact and entropic W₂, negative Sobolev norms, moments, Schatten norms.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayD, Axis, IxDyn, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::grid::{fft_axis, wrap_periodic};
use crate::kinetic::{PhaseDensity, TwoParticleDensity};
use crate::linalg;
use crate::state::{pairing_marginal, theta, DensityOperator, PairingState};
use crate::transforms::{husimi_raw, husimi_two_particle};
use crate::{CMatrix, Error, Result, C64};

pub const MAX_EXACT_SUPPORT: usize = 600;
const WEIGHT_TOL: f64 = 1e-12;

/// One coordinate axis of a product grid; periodic axes use minimal-image distances.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub points: Vec<f64>,
    pub period: Option<f64>,
}

fn sq_dist(a: f64, b: f64, period: Option<f64>) -> f64 {
    let d = match period {
        Some(l) => wrap_periodic(a - b, l),
        None => a - b,
    };
    d * d
}

fn axis_cost(a: &GridAxis, b: &GridAxis) -> Array2<f64> {
    Array2::from_shape_fn((a.points.len(), b.points.len()), |(i, j)| sq_dist(a.points[i], b.points[j], a.period))
}

fn check_weights(w: impl Iterator<Item = f64>) -> Result<()> {
    let mut s = 0.0;
    for v in w {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidInput(format!("measure weight {v} is not a nonnegative number")));
        }
        s += v;
    }
    if (s - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::InvalidInput(format!("measure weights sum to {s}, expected 1")));
    }
    Ok(())
}

/// Weighted point cloud in `ℝ^d` (some axes possibly periodic).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    /// `n × d` support points.
    pub points: Array2<f64>,
    pub weights: Vec<f64>,
    pub periods: Vec<Option<f64>>,
}

impl DiscreteMeasure {
    pub fn new(points: Array2<f64>, weights: Vec<f64>, periods: Vec<Option<f64>>) -> Result<Self> {
        if points.nrows() != weights.len() || points.ncols() != periods.len() {
            return Err(Error::InvalidInput("measure points, weights and periods disagree in size".into()));
        }
        check_weights(weights.iter().copied())?;
        Ok(Self { points, weights, periods })
    }

    /// Euclidean measure without periodic axes.
    pub fn euclidean(points: Array2<f64>, weights: Vec<f64>) -> Result<Self> {
        let d = points.ncols();
        Self::new(points, weights, vec![None; d])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn cost_to(&self, other: &Self) -> Result<Array2<f64>> {
        if self.periods != other.periods {
            return Err(Error::InvalidInput("measures live on different spaces".into()));
        }
        let d = self.periods.len();
        Ok(Array2::from_shape_fn((self.len(), other.len()), |(i, j)| {
            (0..d).map(|k| sq_dist(self.points[[i, k]], other.points[[j, k]], self.periods[k])).sum()
        }))
    }
}

/// Product-grid measure; the cost is the sum of per-axis squared distances.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    pub axes: Vec<GridAxis>,
    pub weights: ArrayD<f64>,
}

fn phase_axes(pg: &crate::grid::PhaseGrid) -> [GridAxis; 2] {
    [
        GridAxis { points: (0..pg.n_chi()).map(|i| pg.chi(i)).collect(), period: Some(pg.spatial.length) },
        GridAxis { points: (0..pg.n_xi).map(|j| pg.xi(j)).collect(), period: None },
    ]
}

impl GridMeasure {
    pub fn new(axes: Vec<GridAxis>, weights: ArrayD<f64>) -> Result<Self> {
        let shape: Vec<usize> = axes.iter().map(|a| a.points.len()).collect();
        if weights.shape() != shape.as_slice() {
            return Err(Error::InvalidInput("grid measure weights do not match the axes".into()));
        }
        check_weights(weights.iter().copied())?;
        Ok(Self { axes, weights })
    }

    /// Cell-center atoms with cell masses, renormalized to unit total.
    pub fn from_phase_density(f: &PhaseDensity) -> Result<Self> {
        let w = f.values.mapv(|v| v.max(0.0));
        let s = w.sum();
        let axes = phase_axes(&f.grid).to_vec();
        Self::new(axes, (w / s).into_dyn())
    }

    pub fn from_two_particle(big_f: &TwoParticleDensity) -> Result<Self> {
        let w = big_f.values.mapv(|v| v.max(0.0));
        let s = w.sum();
        let [a, b] = phase_axes(&big_f.grid);
        Self::new(vec![a.clone(), b.clone(), a, b], (w / s).into_dyn())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn to_discrete(&self) -> Result<DiscreteMeasure> {
        let d = self.axes.len();
        let n = self.len();
        let mut points = Array2::zeros((n, d));
        let mut weights = Vec::with_capacity(n);
        for (row, (idx, &w)) in self.weights.indexed_iter().enumerate() {
            for k in 0..d {
                points[[row, k]] = self.axes[k].points[idx[k]];
            }
            weights.push(w);
        }
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= s);
        DiscreteMeasure::new(points, weights, self.axes.iter().map(|a| a.period).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactTransport {
    /// Squared W₂.
    pub cost: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub augmentations: usize,
}

/// Exact `W₂²` by successive shortest paths on the transportation network.
pub fn w2_exact(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<ExactTransport> {
    if mu.len() + nu.len() > MAX_EXACT_SUPPORT {
        return Err(Error::Metric(format!(
            "exact transport limited to {MAX_EXACT_SUPPORT} support points, got {}; use w2_sinkhorn",
            mu.len() + nu.len()
        )));
    }
    let c = mu.cost_to(nu)?;
    transport_ssp(&c, &mu.weights, &nu.weights)
}

fn transport_ssp(c: &Array2<f64>, a: &[f64], b: &[f64]) -> Result<ExactTransport> {
    let (n, m) = c.dim();
    let v = n + m;
    const EPS: f64 = 1e-15;
    let mut supply = a.to_vec();
    let mut demand = b.to_vec();
    let mut flow = Array2::<f64>::zeros((n, m));
    let mut pot = vec![0.0; v];
    let mut augmentations = 0;
    let mut dist = vec![0.0; v];
    let mut done = vec![false; v];
    let mut prev = vec![usize::MAX; v];
    loop {
        let active = supply.iter().any(|&s| s > EPS) && demand.iter().any(|&d| d > EPS);
        if !active {
            break;
        }
        for k in 0..v {
            dist[k] = f64::INFINITY;
            done[k] = false;
            prev[k] = usize::MAX;
        }
        for i in 0..n {
            if supply[i] > EPS {
                dist[i] = -pot[i];
            }
        }
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for k in 0..v {
                if !done[k] && dist[k] < best {
                    best = dist[k];
                    u = k;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u < n {
                for j in 0..m {
                    let t = n + j;
                    if done[t] {
                        continue;
                    }
                    let nd = best + c[[u, j]] + pot[u] - pot[t];
                    if nd < dist[t] {
                        dist[t] = nd;
                        prev[t] = u;
                    }
                }
            } else {
                let j = u - n;
                for i in 0..n {
                    if done[i] || flow[[i, j]] <= EPS {
                        continue;
                    }
                    let nd = best - c[[i, j]] + pot[u] - pot[i];
                    if nd < dist[i] {
                        dist[i] = nd;
                        prev[i] = u;
                    }
                }
            }
        }
        // Sink with remaining demand and smallest true distance.
        let mut target = usize::MAX;
        let mut best = f64::INFINITY;
        for j in 0..m {
            let t = n + j;
            if demand[j] > EPS && dist[t].is_finite() {
                let d = dist[t] + pot[t];
                if d < best {
                    best = d;
                    target = t;
                }
            }
        }
        if target == usize::MAX {
            return Err(Error::Metric("no augmenting path in transport network".into()));
        }
        let dmax = dist.iter().filter(|d| d.is_finite()).fold(f64::MIN, |a, &b| a.max(b));
        for k in 0..v {
            pot[k] += if dist[k].is_finite() { dist[k] } else { dmax };
        }
        // Bottleneck along the path.
        let mut amount = demand[target - n];
        let mut node = target;
        while prev[node] != usize::MAX {
            let p = prev[node];
            if p >= n {
                amount = amount.min(flow[[node, p - n]]);
            }
            node = p;
        }
        amount = amount.min(supply[node]);
        let source = node;
        let mut node = target;
        while prev[node] != usize::MAX {
            let p = prev[node];
            if p < n {
                flow[[p, node - n]] += amount;
            } else {
                flow[[node, p - n]] -= amount;
            }
            node = p;
        }
        supply[source] -= amount;
        demand[target - n] -= amount;
        augmentations += 1;
        if augmentations > 50 * (v + 1) * (v + 1) {
            return Err(Error::Metric("successive shortest paths did not terminate".into()));
        }
    }
    let cost: f64 = Zip::from(&flow).and(c).fold(0.0, |acc, &f, &cc| acc + f * cc);
    // Potentials give duals u_i = −π_i, v_j = π_j with u_i + v_j ≤ c_ij.
    let dual_value: f64 = (0..n).map(|i| -a[i] * pot[i]).sum::<f64>() + (0..m).map(|j| b[j] * pot[n + j]).sum::<f64>();
    let mut infeasible: f64 = 0.0;
    for i in 0..n {
        for j in 0..m {
            infeasible = infeasible.max(pot[n + j] - pot[i] - c[[i, j]]);
        }
    }
    if infeasible > 1e-9 {
        return Err(Error::Metric(format!("dual infeasibility {infeasible:e} in exact transport")));
    }
    Ok(ExactTransport { cost, dual_value, gap: (cost - dual_value).abs(), augmentations })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsSchedule {
    /// Multiples of the squared diameter of the joint support.
    RelativeToDiameter { factors: Vec<f64> },
    Absolute { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkhornOptions {
    pub eps: EpsSchedule,
    /// L¹ marginal violation at exit.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            eps: EpsSchedule::RelativeToDiameter { factors: vec![0.05, 0.02, 0.01] },
            tol: 1e-9,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkhornEstimate {
    /// Polynomial extrapolation of `S_ε` to `ε = 0`.
    pub value: f64,
    /// `(ε, S_ε)` pairs in the order computed.
    pub by_eps: Vec<(f64, f64)>,
    pub iterations: usize,
    pub violation: f64,
}

/// Cost structure shared by the dense and separable solvers.
enum Cost {
    Dense { c: Array2<f64>, ct: Array2<f64> },
    Separable { c: Vec<Array2<f64>>, ct: Vec<Array2<f64>>, src: Vec<usize>, tgt: Vec<usize> },
}

impl Cost {
    fn diameter_sq(&self) -> f64 {
        match self {
            Cost::Dense { c, .. } => c.iter().fold(0.0f64, |m, v| m.max(*v)),
            Cost::Separable { c, .. } => c.iter().map(|ck| ck.iter().fold(0.0f64, |m, v| m.max(*v))).sum(),
        }
    }

    /// `out_x = LSE_y(h_y − C(x,y)/ε)`; `transpose` swaps the roles of source and target.
    fn lse(&self, h: &[f64], eps: f64, transpose: bool) -> Vec<f64> {
        match self {
            Cost::Dense { c, ct } => {
                let c = if transpose { ct } else { c };
                c.rows()
                    .into_iter()
                    .map(|row| {
                        let mut mx = f64::NEG_INFINITY;
                        for (hv, cv) in h.iter().zip(row) {
                            mx = mx.max(hv - cv / eps);
                        }
                        if mx == f64::NEG_INFINITY {
                            return mx;
                        }
                        let s: f64 = h.iter().zip(row).map(|(hv, cv)| (hv - cv / eps - mx).exp()).sum();
                        mx + s.ln()
                    })
                    .collect()
            }
            Cost::Separable { c, ct, src, tgt } => {
                let (costs, in_shape) = if transpose { (c, src) } else { (ct, tgt) };
                // `costs[k]` is indexed [input, output] here.
                let mut cur = ArrayD::from_shape_vec(IxDyn(in_shape), h.to_vec()).expect("shape");
                for (k, ck) in costs.iter().enumerate() {
                    let mut shape = cur.shape().to_vec();
                    shape[k] = ck.ncols();
                    let mut out = ArrayD::<f64>::zeros(IxDyn(&shape));
                    let scaled = ck.mapv(|v| v / eps);
                    Zip::from(cur.lanes(Axis(k))).and(out.lanes_mut(Axis(k))).for_each(|lin, mut lout| {
                        for (x, o) in lout.iter_mut().enumerate() {
                            let col = scaled.column(x);
                            let mut mx = f64::NEG_INFINITY;
                            for (hv, cv) in lin.iter().zip(col.iter()) {
                                mx = mx.max(hv - cv);
                            }
                            if mx == f64::NEG_INFINITY {
                                *o = mx;
                                continue;
                            }
                            let s: f64 = lin.iter().zip(col.iter()).map(|(hv, cv)| (hv - cv - mx).exp()).sum();
                            *o = mx + s.ln();
                        }
                    });
                    cur = out;
                }
                cur.into_iter().collect()
            }
        }
    }
}

struct OtSolution {
    value: f64,
    iterations: usize,
    violation: f64,
}

struct Potentials {
    f: Vec<f64>,
    g: Vec<f64>,
}

fn log_weights(w: &[f64]) -> Vec<f64> {
    w.iter().map(|&v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY }).collect()
}

/// Entropic OT at one `ε`, warm-started from `pot`.
fn sinkhorn_eps(
    cost: &Cost,
    a: &[f64],
    b: &[f64],
    eps: f64,
    pot: &mut Potentials,
    tol: f64,
    max_iter: usize,
    strict: bool,
) -> Result<OtSolution> {
    let (la, lb) = (log_weights(a), log_weights(b));
    let mut violation = f64::INFINITY;
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let hs: Vec<f64> = la.iter().zip(&pot.f).map(|(l, f)| l + f / eps).collect();
        pot.g = cost.lse(&hs, eps, true).into_iter().map(|v| -eps * v).collect();
        let ht: Vec<f64> = lb.iter().zip(&pot.g).map(|(l, g)| l + g / eps).collect();
        let fnew: Vec<f64> = cost.lse(&ht, eps, false).into_iter().map(|v| -eps * v).collect();
        violation = 0.0;
        for i in 0..a.len() {
            if a[i] > 0.0 {
                violation += a[i] * (((pot.f[i] - fnew[i]) / eps).exp() - 1.0).abs();
            }
        }
        pot.f = fnew;
        if violation < tol {
            break;
        }
    }
    if violation >= tol && strict {
        return Err(Error::Metric(format!(
            "Sinkhorn did not converge at eps = {eps:e}: marginal violation {violation:e} after {max_iter} iterations"
        )));
    }
    let value = a.iter().zip(&pot.f).filter(|(w, _)| **w > 0.0).map(|(w, f)| w * f).sum::<f64>()
        + b.iter().zip(&pot.g).filter(|(w, _)| **w > 0.0).map(|(w, g)| w * g).sum::<f64>();
    Ok(OtSolution { value, iterations: it, violation })
}

/// Entropic OT values at each requested `ε` (descending), with `ε`-annealing warm starts.
fn sinkhorn_path(cost: &Cost, a: &[f64], b: &[f64], eps_list: &[f64], opts: &SinkhornOptions) -> Result<(Vec<f64>, usize, f64)> {
    let mut pot = Potentials { f: vec![0.0; a.len()], g: vec![0.0; b.len()] };
    let mut eps = cost.diameter_sq().max(eps_list[0]);
    let mut values = Vec::new();
    let mut iterations = 0;
    let mut violation: f64 = 0.0;
    for &target in eps_list {
        while eps > 2.0 * target {
            let s = sinkhorn_eps(cost, a, b, eps, &mut pot, opts.tol.max(1e-6), opts.max_iter, false)?;
            iterations += s.iterations;
            eps *= 0.5;
        }
        eps = target;
        let s = sinkhorn_eps(cost, a, b, eps, &mut pot, opts.tol, opts.max_iter, true)?;
        iterations += s.iterations;
        violation = violation.max(s.violation);
        values.push(s.value);
    }
    Ok((values, iterations, violation))
}

/// Value at 0 of the interpolating polynomial through `(x_k, y_k)`.
fn extrapolate_to_zero(pts: &[(f64, f64)]) -> f64 {
    let mut acc = 0.0;
    for (k, &(xk, yk)) in pts.iter().enumerate() {
        let mut l = 1.0;
        for (m, &(xm, _)) in pts.iter().enumerate() {
            if m != k {
                l *= (0.0 - xm) / (xk - xm);
            }
        }
        acc += yk * l;
    }
    acc
}

fn debiased(cost_ab: &Cost, cost_aa: &Cost, cost_bb: &Cost, a: &[f64], b: &[f64], opts: &SinkhornOptions) -> Result<SinkhornEstimate> {
    let mut eps_list = match &opts.eps {
        EpsSchedule::RelativeToDiameter { factors } => {
            let d = cost_ab.diameter_sq();
            factors.iter().map(|f| f * d).collect::<Vec<_>>()
        }
        EpsSchedule::Absolute { values } => values.clone(),
    };
    if eps_list.is_empty() || eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidInput("Sinkhorn needs positive epsilon values".into()));
    }
    eps_list.sort_by(|x, y| y.total_cmp(x));
    let (ab, it1, v1) = sinkhorn_path(cost_ab, a, b, &eps_list, opts)?;
    let (aa, it2, v2) = sinkhorn_path(cost_aa, a, a, &eps_list, opts)?;
    let (bb, it3, v3) = sinkhorn_path(cost_bb, b, b, &eps_list, opts)?;
    let by_eps: Vec<(f64, f64)> =
        eps_list.iter().enumerate().map(|(k, &e)| (e, ab[k] - 0.5 * aa[k] - 0.5 * bb[k])).collect();
    let value = if by_eps.len() > 1 { extrapolate_to_zero(&by_eps) } else { by_eps[0].1 };
    Ok(SinkhornEstimate { value, by_eps, iterations: it1 + it2 + it3, violation: v1.max(v2).max(v3) })
}

/// Debiased entropic estimate `S_ε = OT_ε(μ,ν) − ½OT_ε(μ,μ) − ½OT_ε(ν,ν)` of `W₂²`.
pub fn w2_sinkhorn(mu: &DiscreteMeasure, nu: &DiscreteMeasure, opts: &SinkhornOptions) -> Result<SinkhornEstimate> {
    let dense = |x: &DiscreteMeasure, y: &DiscreteMeasure| -> Result<Cost> {
        let c = x.cost_to(y)?;
        let ct = c.t().to_owned();
        Ok(Cost::Dense { c, ct })
    };
    debiased(&dense(mu, nu)?, &dense(mu, mu)?, &dense(nu, nu)?, &mu.weights, &nu.weights, opts)
}

/// Separable-cost variant of [`w2_sinkhorn`] for product-grid measures.
pub fn w2_sinkhorn_grid(mu: &GridMeasure, nu: &GridMeasure, opts: &SinkhornOptions) -> Result<SinkhornEstimate> {
    if mu.axes.len() != nu.axes.len() || mu.axes.iter().zip(&nu.axes).any(|(x, y)| x.period != y.period) {
        return Err(Error::InvalidInput("grid measures live on different spaces".into()));
    }
    let sep = |x: &GridMeasure, y: &GridMeasure| -> Cost {
        let c: Vec<Array2<f64>> = x.axes.iter().zip(&y.axes).map(|(p, q)| axis_cost(p, q)).collect();
        let ct = c.iter().map(|m| m.t().to_owned()).collect();
        Cost::Separable {
            c,
            ct,
            src: x.weights.shape().to_vec(),
            tgt: y.weights.shape().to_vec(),
        }
    };
    let a: Vec<f64> = mu.weights.iter().copied().collect();
    let b: Vec<f64> = nu.weights.iter().copied().collect();
    debiased(&sep(mu, nu), &sep(mu, mu), &sep(nu, nu), &a, &b, opts)
}

/// `‖g‖_{H^{−s}}² = (cellvol/n_tot)·Σ_k |FFT(g)_k|²·(1 + |ω_k|²)^{−s}` on a torus with the given periods.
pub fn sobolev_negative_norm(g: &ArrayD<f64>, periods: &[f64], s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::InvalidInput(format!("Sobolev index must be nonnegative, got {s}")));
    }
    if g.ndim() != periods.len() {
        return Err(Error::InvalidInput("one period per axis required".into()));
    }
    let mut hat: ArrayD<Complex64> = g.mapv(|v| C64::new(v, 0.0));
    for k in 0..g.ndim() {
        fft_axis(&mut hat, k, false);
    }
    let shape = g.shape().to_vec();
    let cellvol: f64 = shape.iter().zip(periods).map(|(&n, &l)| l / n as f64).product();
    let ntot = g.len() as f64;
    let mut acc = 0.0;
    for (idx, v) in hat.indexed_iter() {
        let mut w2 = 0.0;
        for k in 0..shape.len() {
            let q = crate::grid::wavenumber(idx[k], shape[k]) as f64;
            w2 += (2.0 * PI * q / periods[k]).powi(2);
        }
        acc += v.norm_sqr() * (1.0 + w2).powf(-s);
    }
    Ok((acc * cellvol / ntot).sqrt())
}

pub fn phase_periods(pg: &crate::grid::PhaseGrid) -> [f64; 2] {
    [pg.spatial.length, pg.xi_period()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub m2: f64,
    pub m4: f64,
    pub n2: f64,
    pub n4: f64,
}

fn circular_center(rho: &[f64], xs: &[f64], l: f64) -> f64 {
    let z: C64 = rho.iter().zip(xs).map(|(r, x)| C64::from_polar(*r, 2.0 * PI * x / l)).sum();
    if z.norm() < 1e-300 {
        return 0.0;
    }
    z.arg() * l / (2.0 * PI)
}

/// `M_n = h·Tr(op|p̂|ⁿ)`, `N_n = h·Tr(op|x − x_c|ⁿ)` about the circular mass center.
pub fn quantum_moments(op: &DensityOperator) -> Moments {
    let g = &op.grid;
    let n = g.n;
    let dx = g.dx();
    let pw: CMatrix = Array2::from_shape_fn((n, n), |(a, q)| C64::from_polar(1.0, 2.0 * PI * (q * a) as f64 / n as f64));
    let kp = op.kernel.dot(&pw);
    let scale = g.h() * dx * dx / g.length;
    let mut m2 = 0.0;
    let mut m4 = 0.0;
    for q in 0..n {
        let mut acc = C64::new(0.0, 0.0);
        for a in 0..n {
            acc += pw[[a, q]].conj() * kp[[a, q]];
        }
        let w = acc.re * scale;
        let p2 = g.momentum(q).powi(2);
        m2 += p2 * w;
        m4 += p2 * p2 * w;
    }
    let rho = op.density();
    let xs = g.points();
    let c = circular_center(&rho, &xs, g.length);
    let (mut n2, mut n4) = (0.0, 0.0);
    for (r, x) in rho.iter().zip(&xs) {
        let d2 = wrap_periodic(x - c, g.length).powi(2);
        n2 += r * d2 * dx;
        n4 += r * d2 * d2 * dx;
    }
    Moments { m2, m4, n2, n4 }
}

/// Classical counterparts `∫|ξ|ⁿ f` and `∫|χ − χ_c|ⁿ f`.
pub fn classical_moments(f: &PhaseDensity) -> Moments {
    let pg = &f.grid;
    let rho = f.spatial_density();
    let xs: Vec<f64> = (0..pg.n_chi()).map(|i| pg.chi(i)).collect();
    let l = pg.spatial.length;
    let c = circular_center(&rho, &xs, l);
    let (mut n2, mut n4) = (0.0, 0.0);
    for (r, x) in rho.iter().zip(&xs) {
        let d2 = wrap_periodic(x - c, l).powi(2);
        n2 += r * d2 * pg.d_chi();
        n4 += r * d2 * d2 * pg.d_chi();
    }
    Moments { m2: f.xi_moment(2), m4: f.xi_moment(4), n2, n4 }
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) {
        return Err(Error::InvalidInput(format!("Schatten exponent must be at least 1, got {p}")));
    }
    Ok(())
}

fn schatten_from_eigs(eigs: &[f64], h: f64, p: f64) -> f64 {
    if p.is_infinite() {
        return eigs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    }
    h.powf(1.0 / p) * eigs.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

/// `‖op‖_{𝓛ᵖ} = h^{1/p}·(Σ|λ|ᵖ)^{1/p}` with `λ` the eigenvalues of `dx·kernel`.
pub fn schatten_norm(op: &DensityOperator, p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(schatten_from_eigs(&op.spectrum(), op.grid.h(), p))
}

/// Schatten norm of the first marginal `op_{α:1}`.
pub fn pairing_marginal_schatten_norm(pairing: &PairingState, p: f64) -> Result<f64> {
    check_p(p)?;
    let k = pairing_marginal(pairing)?;
    let m = k.mapv(|v| v * pairing.grid.dx());
    Ok(schatten_from_eigs(&linalg::hermitian_eigenvalues(&m), pairing.grid.h(), p))
}

/// `‖op_α‖_{𝓛ᵖ}` on the two-particle space, where `op_α = h^{−2}|Ψ⟩⟨Ψ|/‖Ψ‖²` has one eigenvalue `h^{−2}`.
pub fn pairing_schatten_norm(pairing: &PairingState, p: f64) -> Result<f64> {
    check_p(p)?;
    if theta(pairing) <= 0.0 {
        return Err(Error::InvalidState("op_alpha undefined for theta = 0".into()));
    }
    let h = pairing.grid.h();
    Ok(schatten_from_eigs(&[h.powi(-2)], h * h, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub sinkhorn: SinkhornOptions,
    /// Also compute a 4-D W₂ of the two-particle densities (grids up to 16⁴).
    pub two_particle_w2: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self { sinkhorn: SinkhornOptions::default(), two_particle_w2: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricDiagnostics {
    pub iterations: usize,
    pub marginal_violation: f64,
    pub duality_gap: Option<f64>,
    pub eps_values: Vec<(f64, f64)>,
    pub husimi_raw_mass: f64,
    pub two_particle_w2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// `W₂(f, f̃_op)²`.
    pub w2sq_one_particle: f64,
    /// `‖F − F̃_{op_α}‖²_{H^{−1}}`.
    pub metric_two_particle: f64,
    pub sobolev_h1: f64,
    pub sobolev_h6: f64,
    pub one_particle_method: String,
    pub two_particle_method: String,
    pub diagnostics: MetricDiagnostics,
}

impl MetricReport {
    pub fn total(&self) -> f64 {
        self.w2sq_one_particle + self.metric_two_particle
    }
}

/// Husimi transform of `op` on `pg`. The χ points are taken from the operator grid when they
/// subsample it and from the trigonometric interpolant along χ otherwise.
pub fn husimi_sampled(op: &DensityOperator, pg: &crate::grid::PhaseGrid) -> Result<(PhaseDensity, f64)> {
    let g = op.grid;
    let nc = pg.n_chi();
    if (pg.spatial.length - g.length).abs() > 1e-12 * g.length {
        return Err(Error::InvalidInput("kinetic and quantum grids have different lengths".into()));
    }
    let full = crate::grid::PhaseGrid::new(g, pg.n_xi, pg.xi_max)?;
    let raw = husimi_raw(op, &full)?;
    let mut values = if g.n % nc == 0 {
        let stride = g.n / nc;
        Array2::from_shape_fn((nc, pg.n_xi), |(i, j)| raw[[i * stride, j]])
    } else {
        let mut out = Array2::zeros((nc, pg.n_xi));
        for (j, col) in raw.columns().into_iter().enumerate() {
            let r = crate::grid::resample_periodic(&col.to_vec(), nc);
            out.column_mut(j).assign(&ndarray::Array1::from(r));
        }
        out
    };
    let raw_mass = values.sum() * pg.cell_volume();
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for v in values.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-10 * peak {
                return Err(Error::TransformInconsistency(format!("Husimi value {v:e} below tolerance")));
            }
            *v = 0.0;
        }
    }
    let m = values.sum() * pg.cell_volume();
    values /= m;
    Ok((PhaseDensity::new(values, *pg)?, raw_mass))
}

/// Proxies for `W_ħ(f, op)² + W_ħ(F, op_α)²`.
pub fn combined_error(
    f: &PhaseDensity,
    op: &DensityOperator,
    big_f: Option<&TwoParticleDensity>,
    pairing: &PairingState,
    opts: &MetricOptions,
) -> Result<MetricReport> {
    let (fq, raw_mass) = husimi_sampled(op, &f.grid)?;
    let mu = GridMeasure::from_phase_density(f)?;
    let nu = GridMeasure::from_phase_density(&fq)?;
    let mut diag = MetricDiagnostics { husimi_raw_mass: raw_mass, ..Default::default() };
    let (w2sq, method) = if mu.len() + nu.len() <= MAX_EXACT_SUPPORT {
        let ex = w2_exact(&mu.to_discrete()?, &nu.to_discrete()?)?;
        diag.duality_gap = Some(ex.gap);
        (ex.cost, "exact".to_string())
    } else {
        let s = w2_sinkhorn_grid(&mu, &nu, &opts.sinkhorn)?;
        diag.iterations = s.iterations;
        diag.marginal_violation = s.violation;
        diag.eps_values = s.by_eps.clone();
        (s.value.max(0.0), "sinkhorn-debiased-extrapolated".to_string())
    };
    let (mut h1, mut h6, mut two_method) = (0.0, 0.0, "none".to_string());
    if let Some(bf) = big_f {
        if theta(pairing) > 0.0 {
            let ft = husimi_two_particle(pairing, &bf.grid)?;
            let diff = (&bf.values - &ft.values).into_dyn();
            let [l, p] = phase_periods(&bf.grid);
            let periods = [l, p, l, p];
            h1 = sobolev_negative_norm(&diff, &periods, 1.0)?;
            h6 = sobolev_negative_norm(&diff, &periods, 6.0)?;
            two_method = "sobolev-h-1".to_string();
            if opts.two_particle_w2 {
                if bf.grid.n_chi() > 16 || bf.grid.n_xi > 16 {
                    return Err(Error::Metric("4-D W2 limited to 16^4 grids".into()));
                }
                let s = w2_sinkhorn_grid(&GridMeasure::from_two_particle(bf)?, &GridMeasure::from_two_particle(&ft)?, &opts.sinkhorn)?;
                diag.two_particle_w2 = Some(s.value.max(0.0));
            }
        }
    }
    Ok(MetricReport {
        w2sq_one_particle: w2sq,
        metric_two_particle: h1 * h1,
        sobolev_h1: h1,
        sobolev_h6: h6,
        one_particle_method: method,
        two_particle_method: two_method,
        diagnostics: diag,
    })
}
