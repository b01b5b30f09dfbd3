//! Post-hoc analysis of a run directory.

use super::config::ExperimentConfig;
use super::plots::read_csv;
use super::run::{BlockTrace, MetricsRow, RunSummary, BLOCKS_HEADER, INCOMPLETE_MARKER, METRICS_HEADER};
use crate::error::{Error, Result};
use crate::oracle::g_mu_quadrature;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const GROWTH_WINDOW: (f64, f64) = (0.5, 2.0);
pub const GROWTH_BAND: (f64, f64) = (1.6, 2.4);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub first_step: u64,
    pub last_step: u64,
    pub steps: usize,
    pub in_band: usize,
    pub fraction: f64,
    /// Median of (N(t+1)/N(t) − 1)/(η ĝ_μ(t)); the law predicts 2.
    pub median_multiple: f64,
}

/// Per-step growth of N_avg against η ĝ_μ over the steps with N_avg in
/// `window`. ĝ_μ is evaluated by quadrature at the oracle-equivalent mass.
pub fn growth_law_fit(trace: &[BlockTrace], eta: f64, window: (f64, f64)) -> Option<GrowthFit> {
    let mut multiples = Vec::new();
    let mut steps = Vec::new();
    let mut in_band = 0;
    for w in trace.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.step != a.step + 1 || !(a.n_avg >= window.0 && a.n_avg <= window.1) {
            continue;
        }
        let rate = b.n_avg / a.n_avg - 1.0;
        let g = eta * g_mu_quadrature(a.oracle_mass);
        if rate >= GROWTH_BAND.0 * g && rate <= GROWTH_BAND.1 * g {
            in_band += 1;
        }
        multiples.push(rate / g);
        steps.push(a.step);
    }
    if steps.is_empty() {
        return None;
    }
    multiples.sort_by(|x, y| x.total_cmp(y));
    Some(GrowthFit {
        first_step: steps[0],
        last_step: *steps.last().unwrap(),
        steps: steps.len(),
        in_band,
        fraction: in_band as f64 / steps.len() as f64,
        median_multiple: multiples[multiples.len() / 2],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub detected: bool,
    /// |L_end − L_start|/L_start over the final 20% of steps, L averaged over
    /// the first and last quarter of that stretch.
    pub relative_change: f64,
}

pub fn plateau(rows: &[MetricsRow], total_steps: u64) -> Option<Plateau> {
    let start = (total_steps as f64 * 0.8).floor() as u64;
    let tail: Vec<&MetricsRow> = rows.iter().filter(|r| r.step >= start).collect();
    if tail.len() < 2 {
        return None;
    }
    let q = (tail.len() / 4).max(1);
    let mean = |rs: &[&MetricsRow]| rs.iter().map(|r| r.test_loss).sum::<f64>() / rs.len() as f64;
    let (l0, l1) = (mean(&tail[..q]), mean(&tail[tail.len() - q..]));
    let rel = (l1 - l0).abs() / l0;
    Some(Plateau { detected: rel < 0.01, relative_change: rel })
}

/// Least-squares slope of y against x.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (xm, ym) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let sxx: f64 = x.iter().map(|a| (a - xm).powi(2)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dir: PathBuf,
    pub partial: bool,
    pub rows: usize,
    pub final_row: MetricsRow,
    pub summary: Option<RunSummary>,
    pub eps_boundary: f64,
    pub growth: Option<GrowthFit>,
    pub u_max_after_100: f64,
    pub final_band: f64,
    pub r_fraction_final: f64,
    /// OLS slope of R/Σ|a|‖w‖ per step over the second half of the trace.
    pub r_fraction_slope_last_half: f64,
    pub plateau: Option<Plateau>,
    pub plots: Vec<String>,
}

pub fn analyze_run(dir: &Path) -> Result<RunReport> {
    let metrics = dir.join("metrics.csv");
    if !metrics.exists() {
        return Err(Error::MissingInputs(vec![metrics]));
    }
    let rows = read_csv(&metrics, METRICS_HEADER, MetricsRow::from_csv)?;
    let final_row = rows.last().cloned().ok_or_else(|| Error::Malformed { file: metrics.clone(), msg: "no metrics rows".into() })?;
    let cfg = match std::fs::read_to_string(dir.join("config.resolved")) {
        Ok(text) => ExperimentConfig::parse(&text)?,
        Err(_) => ExperimentConfig::default(),
    };
    let trace_path = dir.join("blocks_trace.csv");
    let trace = if trace_path.exists() { read_csv(&trace_path, BLOCKS_HEADER, BlockTrace::from_csv)? } else { Vec::new() };
    let summary: Option<RunSummary> = std::fs::read_to_string(dir.join("summary.json")).ok().and_then(|t| serde_json::from_str(&t).ok());
    let partial = dir.join(INCOMPLETE_MARKER).exists() || summary.is_none();
    let u_from_trace = trace.iter().filter(|b| b.step >= 100).map(|b| b.u).fold(f64::NEG_INFINITY, f64::max);
    let u_max_after_100 =
        if u_from_trace.is_finite() { u_from_trace } else { rows.iter().filter(|r| r.step >= 100).map(|r| r.u).fold(f64::NAN, f64::max) };
    let m = final_row.masses();
    let final_band = m.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / m.iter().cloned().fold(f64::INFINITY, f64::min);
    let (r_fraction_final, r_fraction_slope_last_half) = match trace.last() {
        Some(last) => {
            let half = &trace[trace.len() / 2..];
            let x: Vec<f64> = half.iter().map(|b| b.step as f64).collect();
            let y: Vec<f64> = half.iter().map(|b| b.r / b.total_mass).collect();
            (last.r / last.total_mass, if half.len() > 1 { ols_slope(&x, &y) } else { f64::NAN })
        }
        None => (f64::NAN, f64::NAN),
    };
    let mut plots: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".svg"))
        .collect();
    plots.sort();
    Ok(RunReport {
        dir: dir.to_path_buf(),
        partial,
        rows: rows.len(),
        growth: growth_law_fit(&trace, cfg.eta, GROWTH_WINDOW),
        plateau: plateau(&rows, cfg.steps().0),
        final_row,
        summary,
        eps_boundary: cfg.eps_boundary,
        u_max_after_100,
        final_band,
        r_fraction_final,
        r_fraction_slope_last_half,
        plots,
    })
}

pub fn format_report(r: &RunReport) -> String {
    let mut s = String::new();
    let f = &r.final_row;
    let _ = writeln!(s, "run: {}{}", r.dir.display(), if r.partial { "  [partial]" } else { "" });
    let _ = writeln!(s, "metrics rows: {} (last step {})", r.rows, f.step);
    let _ = writeln!(s, "test loss: {:.5}   train batch loss: {:.5}", f.test_loss, f.train_loss_batch);
    let _ = writeln!(s, "test accuracy: {:.4}", f.test_acc);
    let _ = writeln!(
        s,
        "off-boundary accuracy (ε={}): {:.4} ({} 0.95)",
        r.eps_boundary,
        f.test_acc_offboundary,
        if f.test_acc_offboundary >= 0.95 { "≥" } else { "<" }
    );
    if let Some(sm) = &r.summary {
        let _ = writeln!(s, "errors inside C_ε: {:.3} of {} misclassified", sm.final_eval.err_concentration, sm.final_eval.n_errors);
        let _ = writeln!(
            s,
            "stopping step (N_avg ≥ {:.3}): {}",
            sm.stopping_threshold,
            sm.stopping_step.map(|v| v.to_string()).unwrap_or_else(|| "not reached".into())
        );
        let _ = writeln!(s, "gradient identity residual max: {:.2e} over {} steps", sm.identity_residual_max, sm.audited_steps);
        if let Some(a) = sm.angular_dispersion_final {
            let _ = writeln!(s, "angular dispersion of heavy neurons: {a:.4}");
        }
    }
    let _ = writeln!(
        s,
        "block masses: N1+ {:.4}  N1− {:.4}  N2+ {:.4}  N2− {:.4}  (max/min {:.3})",
        f.n1_plus, f.n1_minus, f.n2_plus, f.n2_minus, r.final_band
    );
    let _ = writeln!(s, "unbalance U: final {:.4}, max after step 100 {:.4}", f.u, r.u_max_after_100);
    let _ = writeln!(
        s,
        "residual share R/Σ|a|‖w‖: final {:.4}, slope over last half {:.3e}/step",
        r.r_fraction_final, r.r_fraction_slope_last_half
    );
    let _ = writeln!(s, "heavy fraction: {:.3}", f.heavy_fraction);
    let _ = writeln!(s, "g_mu at final mass: {:.5} ± {:.1e}", f.g_mu_est, f.g_mu_stderr);
    match &r.growth {
        Some(g) => {
            let _ = writeln!(
                s,
                "growth law over N_avg ∈ [{}, {}] (steps {}..{}): {}/{} steps in [{}, {}]·ηĝ ({:.1}%), median multiple {:.3}",
                GROWTH_WINDOW.0,
                GROWTH_WINDOW.1,
                g.first_step,
                g.last_step,
                g.in_band,
                g.steps,
                GROWTH_BAND.0,
                GROWTH_BAND.1,
                100.0 * g.fraction,
                g.median_multiple
            );
        }
        None => {
            let _ = writeln!(s, "growth law: N_avg never inside [{}, {}]", GROWTH_WINDOW.0, GROWTH_WINDOW.1);
        }
    }
    if let Some(p) = r.plateau {
        let _ = writeln!(
            s,
            "plateau over final 20%: {} (relative loss change {:.4})",
            if p.detected { "yes" } else { "no" },
            p.relative_change
        );
    }
    if r.plots.is_empty() {
        let _ = writeln!(s, "plots: none (run `blockdyn plot {}`)", r.dir.display());
    } else {
        let _ = writeln!(s, "plots: {}", r.plots.join(", "));
    }
    s
}
