//! `ħ` sweeps: one cell per `ħ`, rate fits of the total error against `ħ`.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use bdglab_core::metrics::MetricReport;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{regime_warnings, RunConfig};
use crate::run::{run_single, write_json, InitDiagnostics, RunResult};
use crate::validate::{bound_rows, ValidationRow};
use crate::{echo_config, HarnessError, Result, VERSION};

pub const SCHEMA: u32 = 1;
pub const MIN_HBAR: usize = 4;
pub const BOOTSTRAP_SAMPLES: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub hbar: f64,
    pub n_particles: f64,
    pub t: f64,
    pub metric: MetricReport,
    pub total_error: f64,
    pub trace_drift: f64,
    /// Relative to `|Ɛ(0)|`.
    pub energy_drift: f64,
    pub quasifree_growth: f64,
    /// Every validation row of the cell passed.
    pub bounds_pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t: f64,
    pub trace: f64,
    pub energy: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub hbar: f64,
    pub n_particles: f64,
    pub error: Option<String>,
    pub init: Option<InitDiagnostics>,
    pub validation: Vec<ValidationRow>,
    pub all_pass: bool,
    pub series: Vec<SeriesPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub t: f64,
    /// The `t = 0` error of each cell was subtracted before the fit.
    pub floor_subtracted: bool,
    pub n_points: usize,
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema: u32,
    pub version: String,
    pub warnings: Vec<String>,
    pub rows: Vec<SweepRow>,
    pub cells: Vec<CellRecord>,
    pub fits: Vec<SlopeFit>,
    pub all_validation_pass: bool,
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Log-log fit with a 95% percentile bootstrap interval over resampled points.
pub fn fit_loglog(hbar: &[f64], err: &[f64], t: f64, floor_subtracted: bool, seed: u64) -> Option<SlopeFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = hbar
        .iter()
        .zip(err)
        .filter(|(h, e)| **h > 0.0 && **e > 0.0 && e.is_finite())
        .map(|(h, e)| (h.ln(), e.ln()))
        .unzip();
    if x.len() < MIN_HBAR {
        return None;
    }
    let (slope, intercept) = ols(&x, &y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x.len();
    let mut slopes = Vec::with_capacity(BOOTSTRAP_SAMPLES);
    let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
    let mut attempts = 0;
    while slopes.len() < BOOTSTRAP_SAMPLES && attempts < 20 * BOOTSTRAP_SAMPLES {
        attempts += 1;
        for i in 0..n {
            let j = rng.random_range(0..n);
            bx[i] = x[j];
            by[i] = y[j];
        }
        if let Some((s, _)) = ols(&bx, &by) {
            slopes.push(s);
        }
    }
    slopes.sort_by(f64::total_cmp);
    let q = |p: f64| slopes[((p * (slopes.len() - 1) as f64).round() as usize).min(slopes.len() - 1)];
    Some(SlopeFit { t, floor_subtracted, n_points: n, slope, intercept, ci_low: q(0.025), ci_high: q(0.975) })
}

fn cell_record(cfg_hbar: f64, n_particles: f64, r: &std::result::Result<RunResult, String>) -> CellRecord {
    match r {
        Ok(r) => {
            let validation = bound_rows(&r.view());
            CellRecord {
                hbar: r.hbar,
                n_particles: r.n_particles,
                error: None,
                init: Some(r.init.clone()),
                all_pass: validation.iter().all(|v| v.pass),
                validation,
                series: r
                    .observations
                    .iter()
                    .map(|o| SeriesPoint { t: o.t, trace: o.trace, energy: o.energy, theta: o.theta })
                    .collect(),
            }
        }
        Err(e) => CellRecord {
            hbar: cfg_hbar,
            n_particles,
            error: Some(e.clone()),
            init: None,
            validation: Vec::new(),
            all_pass: false,
            series: Vec::new(),
        },
    }
}

/// Runs every `ħ` cell (up to `cfg.workers` at a time) and fits rates. Cell failures are recorded,
/// never propagated; fewer than [`MIN_HBAR`] successful cells is an error after the report is written.
pub fn run_sweep(cfg: &RunConfig, out: Option<&Path>) -> Result<SweepReport> {
    cfg.check()?;
    let warnings = regime_warnings(cfg);
    for w in &warnings {
        log::warn!("{w}");
    }
    if let Some(dir) = out {
        echo_config(dir, cfg)?;
    }
    let n = cfg.hbar.len();
    let results: Mutex<Vec<Option<std::result::Result<RunResult, String>>>> = Mutex::new(vec![None; n]);
    let next = AtomicUsize::new(0);
    let workers = cfg.workers.clamp(1, n);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let hbar = cfg.hbar[i];
                let dir = out.map(|d| d.join(format!("cell_{i:02}")));
                let r = catch_unwind(AssertUnwindSafe(|| run_single(cfg, hbar, dir.as_deref())))
                    .unwrap_or_else(|p| {
                        let msg = p
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_else(|| "panic".into());
                        Err(HarnessError::Report(format!("cell panicked: {msg}")))
                    })
                    .map_err(|e| e.to_string());
                if let Err(e) = &r {
                    log::error!("cell hbar = {hbar:e} failed: {e}");
                    if let Some(d) = &dir {
                        let _ = std::fs::create_dir_all(d);
                        let _ = std::fs::write(d.join("error.json"), format!("{}\n", serde_json::json!({ "hbar": hbar, "error": e })));
                    }
                }
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let results: Vec<_> = results.into_inner().unwrap().into_iter().map(|r| r.expect("every cell ran")).collect();
    let report = reduce(cfg, warnings, &results);
    if let Some(dir) = out {
        write_json(&dir.join("report.json"), &report)?;
        write_rows_csv(&report, &dir.join("sweep.csv"))?;
    }
    let ok = report.cells.iter().filter(|c| c.error.is_none()).count();
    if ok < MIN_HBAR {
        return Err(HarnessError::InsufficientData(format!("{ok} successful cells, need at least {MIN_HBAR}")));
    }
    Ok(report)
}

fn reduce(cfg: &RunConfig, mut warnings: Vec<String>, results: &[std::result::Result<RunResult, String>]) -> SweepReport {
    let cells: Vec<CellRecord> = cfg
        .hbar
        .iter()
        .zip(results)
        .map(|(&hb, r)| cell_record(hb, cfg.n_rule.n_particles(hb), r))
        .collect();
    let mut rows = Vec::new();
    for (r, c) in results.iter().zip(&cells) {
        let Ok(r) = r else { continue };
        let o0 = &r.observations[0];
        for s in &r.samples {
            let o = &s.observation;
            rows.push(SweepRow {
                hbar: r.hbar,
                n_particles: r.n_particles,
                t: s.t,
                metric: s.metric.clone(),
                total_error: s.metric.total(),
                trace_drift: (o.trace - o0.trace).abs(),
                energy_drift: (o.energy - o0.energy).abs() / o0.energy.abs().max(1e-300),
                quasifree_growth: o.quasifree_residual - o0.quasifree_residual,
                bounds_pass: c.all_pass,
            });
        }
    }
    let mut times: Vec<f64> = rows.iter().map(|r| r.t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut fits = Vec::new();
    for (ti, &t) in times.iter().enumerate() {
        let at: Vec<&SweepRow> = rows.iter().filter(|r| r.t == t).collect();
        let hb: Vec<f64> = at.iter().map(|r| r.hbar).collect();
        let err: Vec<f64> = at.iter().map(|r| r.total_error).collect();
        let seed = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(2 * ti as u64);
        match fit_loglog(&hb, &err, t, false, seed) {
            Some(f) => fits.push(f),
            None => warnings.push(format!("no slope fit at t = {t}: fewer than {MIN_HBAR} usable points")),
        }
        if t > 0.0 {
            let sub: Vec<f64> = at
                .iter()
                .map(|r| {
                    let e0 = rows.iter().find(|q| q.hbar == r.hbar && q.t == 0.0).map(|q| q.total_error);
                    e0.map_or(f64::NAN, |e0| r.total_error - e0)
                })
                .collect();
            match fit_loglog(&hb, &sub, t, true, seed + 1) {
                Some(f) => fits.push(f),
                None => warnings.push(format!("no floor-subtracted fit at t = {t}: fewer than {MIN_HBAR} positive points")),
            }
        }
    }
    let all_validation_pass = !cells.is_empty() && cells.iter().all(|c| c.all_pass);
    SweepReport { schema: SCHEMA, version: VERSION.into(), warnings, rows, cells, fits, all_validation_pass }
}

fn write_rows_csv(report: &SweepReport, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "hbar,N,t,w2sq_one_particle,metric_two_particle,sobolev_h1,sobolev_h6,total_error,trace_drift,energy_drift,quasifree_growth,bounds_pass"
    )?;
    for r in &report.rows {
        let m = &r.metric;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.hbar,
            r.n_particles,
            r.t,
            m.w2sq_one_particle,
            m.metric_two_particle,
            m.sobolev_h1,
            m.sobolev_h6,
            r.total_error,
            r.trace_drift,
            r.energy_drift,
            r.quasifree_growth,
            r.bounds_pass
        )?;
    }
    w.flush()?;
    Ok(())
}
