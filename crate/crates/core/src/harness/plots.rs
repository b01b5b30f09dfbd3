//! Self-contained SVG figures from a run directory.

use super::run::{BlockTrace, MetricsRow, NeuronTuple, SnapshotRecord};
use crate::distributions::{MU1, MU2};
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const BLOCK_COLORS: [&str; 5] = ["#888888", "#d62728", "#ff9896", "#1f77b4", "#9ecae1"];
const SERIES: [&str; 6] = ["#d62728", "#ff7f0e", "#1f77b4", "#17becf", "#9467bd", "#2ca02c"];

/// Minimal SVG canvas with a data-to-pixel mapping for one panel.
pub struct Svg {
    body: String,
    w: f64,
    h: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct Panel {
    pub x0: f64,
    pub y0: f64,
    pub w: f64,
    pub h: f64,
    pub xr: (f64, f64),
    pub yr: (f64, f64),
}

impl Panel {
    pub fn px(&self, x: f64) -> f64 {
        self.x0 + (x - self.xr.0) / (self.xr.1 - self.xr.0) * self.w
    }

    pub fn py(&self, y: f64) -> f64 {
        self.y0 + self.h - (y - self.yr.0) / (self.yr.1 - self.yr.0) * self.h
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Svg {
    pub fn new(w: f64, h: f64) -> Self {
        Svg { body: String::new(), w, h }
    }

    pub fn raw(&mut self, s: &str) {
        self.body.push_str(s);
        self.body.push('\n');
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.1}" y="{y:.1}" font-size="{size}" text-anchor="{anchor}" font-family="sans-serif">{}</text>"#,
            esc(s)
        );
    }

    pub fn line(&mut self, a: (f64, f64), b: (f64, f64), stroke: &str, width: f64, dash: Option<&str>) {
        let d = dash.map(|d| format!(r#" stroke-dasharray="{d}""#)).unwrap_or_default();
        let _ = writeln!(
            self.body,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{stroke}" stroke-width="{width}"{d}/>"#,
            a.0, a.1, b.0, b.1
        );
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, width: f64) {
        if pts.is_empty() {
            return;
        }
        let mut p = String::new();
        for (x, y) in pts {
            let _ = write!(p, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(self.body, r#"<polyline fill="none" stroke="{stroke}" stroke-width="{width}" points="{}"/>"#, p.trim_end());
    }

    pub fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{fill}" fill-opacity="0.8"/>"#);
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#);
    }

    /// Frame with ticks at the ends and the middle of each range.
    pub fn axes(&mut self, p: &Panel, xlabel: &str, ylabel: &str) {
        let _ = writeln!(
            self.body,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##,
            p.x0, p.y0, p.w, p.h
        );
        for k in 0..3 {
            let fx = p.xr.0 + (p.xr.1 - p.xr.0) * k as f64 / 2.0;
            let fy = p.yr.0 + (p.yr.1 - p.yr.0) * k as f64 / 2.0;
            self.text(p.px(fx), p.y0 + p.h + 14.0, 10.0, "middle", &tick(fx));
            self.text(p.x0 - 4.0, p.py(fy) + 3.0, 10.0, "end", &tick(fy));
        }
        self.text(p.x0 + p.w / 2.0, p.y0 + p.h + 30.0, 12.0, "middle", xlabel);
        let (lx, ly) = (p.x0 - 42.0, p.y0 + p.h / 2.0);
        let _ = writeln!(
            self.body,
            r#"<text x="{lx:.1}" y="{ly:.1}" font-size="12" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 {lx:.1} {ly:.1})">{}</text>"#,
            esc(ylabel)
        );
    }

    pub fn legend(&mut self, x: f64, y: f64, items: &[(&str, &str)]) {
        for (i, (name, color)) in items.iter().enumerate() {
            let yy = y + 14.0 * i as f64;
            self.rect(x, yy - 8.0, 10.0, 10.0, color);
            self.text(x + 14.0, yy + 1.0, 10.0, "start", name);
        }
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.w,
            h = self.h
        )
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 100.0).round() / 100.0)
    }
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// Initial signal norm used by the readability filter: |w·μ| for the
/// direction the neuron's output sign selects.
fn initial_sig(t: &NeuronTuple) -> f64 {
    if t[5] >= 0.0 {
        t[2].abs()
    } else {
        t[3].abs()
    }
}

/// Weight projections onto the (e1, e2)-plane, colored by block, with the
/// four signal directions. Only neurons whose initial signal norm is at
/// least `min_sig0` are drawn.
pub fn scatter_svg(snap: &SnapshotRecord, initial: &SnapshotRecord, min_sig0: f64) -> String {
    let mut keep: Vec<&NeuronTuple> =
        snap.neurons.iter().zip(&initial.neurons).filter(|(_, i0)| initial_sig(i0) >= min_sig0).map(|(t, _)| t).collect();
    // under sphere init the rule needs a ~2 ln d sigma initial signal, so it
    // usually keeps nobody; fall back to everything and say so
    let filtered = !keep.is_empty();
    if !filtered {
        keep = snap.neurons.iter().collect();
    }
    let lim = keep.iter().map(|t| t[0].abs().max(t[1].abs())).fold(0.0f64, f64::max).max(1e-12) * 1.15;
    let mut s = Svg::new(420.0, 440.0);
    let p = Panel { x0: 60.0, y0: 30.0, w: 340.0, h: 340.0, xr: (-lim, lim), yr: (-lim, lim) };
    let title = if filtered {
        format!("weights at step {} ({} of {} shown)", snap.step, keep.len(), snap.neurons.len())
    } else {
        format!("weights at step {} (all {}; none pass ‖w_sig(0)‖ ≥ {:.2e})", snap.step, keep.len(), min_sig0)
    };
    s.text(230.0, 18.0, 13.0, "middle", &title);
    for (mu, name) in [(MU1, "μ1"), (MU2, "μ2")] {
        for sign in [1.0, -1.0] {
            let e = (p.px(sign * mu[0] * lim * 0.95), p.py(sign * mu[1] * lim * 0.95));
            s.line((p.px(0.0), p.py(0.0)), e, "#bbb", 1.0, Some("4 3"));
            s.text(e.0, e.1, 10.0, "middle", &format!("{}{name}", if sign > 0.0 { "+" } else { "−" }));
        }
    }
    for t in &keep {
        s.circle(p.px(t[0]), p.py(t[1]), 3.0, BLOCK_COLORS[(t[6] as usize).min(4)]);
    }
    s.axes(&p, "w·e1", "w·e2");
    s.legend(
        70.0,
        42.0,
        &[
            ("B1+", BLOCK_COLORS[1]),
            ("B1−", BLOCK_COLORS[2]),
            ("B2+", BLOCK_COLORS[3]),
            ("B2−", BLOCK_COLORS[4]),
            ("none", BLOCK_COLORS[0]),
        ],
    );
    s.finish()
}

pub fn plane_output(neurons: &[NeuronTuple], z: [f64; 2]) -> f64 {
    let m = neurons.len() as f64;
    neurons.iter().map(|t| t[5] * (t[0] * z[0] + t[1] * z[1]).max(0.0)).sum::<f64>() / m
}

/// Sign of the network output on a grid of the (e1, e2)-plane with zero perp part.
pub fn boundary_svg(snap: &SnapshotRecord, half_width: f64, cells: usize) -> String {
    let mut s = Svg::new(420.0, 440.0);
    let p = Panel { x0: 60.0, y0: 30.0, w: 340.0, h: 340.0, xr: (-half_width, half_width), yr: (-half_width, half_width) };
    s.text(230.0, 18.0, 13.0, "middle", &format!("decision regions at step {}", snap.step));
    let step = 2.0 * half_width / cells as f64;
    let cw = p.w / cells as f64;
    let vals: Vec<f64> = (0..cells * cells)
        .map(|k| {
            let (i, j) = (k % cells, k / cells);
            plane_output(&snap.neurons, [-half_width + (i as f64 + 0.5) * step, -half_width + (j as f64 + 0.5) * step])
        })
        .collect();
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for (k, v) in vals.iter().enumerate() {
        let (i, j) = (k % cells, k / cells);
        let strength = 0.25 + 0.75 * (v.abs() / scale).sqrt();
        let color = if *v > 0.0 {
            format!("rgba(214,39,40,{strength:.3})")
        } else if *v < 0.0 {
            format!("rgba(31,119,180,{strength:.3})")
        } else {
            "#ffffff".into()
        };
        s.rect(p.x0 + i as f64 * cw, p.y0 + p.h - (j + 1) as f64 * cw, cw + 0.3, cw + 0.3, &color);
    }
    s.line((p.px(-half_width), p.py(0.0)), (p.px(half_width), p.py(0.0)), "#222", 1.0, Some("5 4"));
    s.line((p.px(0.0), p.py(-half_width)), (p.px(0.0), p.py(half_width)), "#222", 1.0, Some("5 4"));
    s.axes(&p, "z1", "z2");
    s.legend(70.0, 42.0, &[("f > 0 (y = +1)", "#d62728"), ("f < 0 (y = −1)", "#1f77b4")]);
    s.finish()
}

/// N_i^±(t) and R(t).
pub fn blocks_svg(trace: &[BlockTrace]) -> String {
    let mut s = Svg::new(640.0, 380.0);
    let xr = range(trace.iter().map(|b| b.step as f64));
    let yr = (0.0, range(trace.iter().flat_map(|b| b.masses.into_iter().chain([b.r]))).1 * 1.05);
    let p = Panel { x0: 70.0, y0: 30.0, w: 540.0, h: 290.0, xr, yr };
    s.text(340.0, 18.0, 13.0, "middle", "block masses and residual mass");
    let names = ["N1+", "N1−", "N2+", "N2−"];
    // thinning keeps long traces small; every 1 in `stride` points
    let stride = (trace.len() / 1500).max(1);
    for k in 0..4 {
        let pts: Vec<_> = trace.iter().step_by(stride).map(|b| (p.px(b.step as f64), p.py(b.masses[k]))).collect();
        s.polyline(&pts, BLOCK_COLORS[k + 1], 1.6);
    }
    let pts: Vec<_> = trace.iter().step_by(stride).map(|b| (p.px(b.step as f64), p.py(b.r))).collect();
    s.polyline(&pts, "#9467bd", 1.6);
    s.axes(&p, "step", "mass");
    let items: Vec<(&str, &str)> = names.iter().zip(&BLOCK_COLORS[1..]).map(|(n, c)| (*n, *c)).chain([("R", "#9467bd")]).collect();
    s.legend(80.0, 42.0, &items);
    s.finish()
}

/// Losses (left) and accuracies (right) over the metrics cadence.
pub fn loss_svg(rows: &[MetricsRow]) -> String {
    let mut s = Svg::new(760.0, 360.0);
    let xr = range(rows.iter().map(|r| r.step as f64));
    let lp = Panel {
        x0: 70.0,
        y0: 30.0,
        w: 290.0,
        h: 270.0,
        xr,
        yr: (0.0, range(rows.iter().flat_map(|r| [r.train_loss_batch, r.test_loss])).1 * 1.05),
    };
    let ap = Panel { x0: 440.0, y0: 30.0, w: 290.0, h: 270.0, xr, yr: (0.4, 1.0) };
    s.text(215.0, 18.0, 13.0, "middle", "loss");
    s.text(585.0, 18.0, 13.0, "middle", "accuracy");
    let series = |s: &mut Svg, p: &Panel, f: &dyn Fn(&MetricsRow) -> f64, color: &str| {
        let pts: Vec<_> =
            rows.iter().filter(|r| f(r).is_finite()).map(|r| (p.px(r.step as f64), p.py(f(r).clamp(p.yr.0, p.yr.1)))).collect();
        s.polyline(&pts, color, 1.6);
    };
    series(&mut s, &lp, &|r| r.train_loss_batch, SERIES[1]);
    series(&mut s, &lp, &|r| r.test_loss, SERIES[2]);
    series(&mut s, &ap, &|r| r.test_acc, SERIES[2]);
    series(&mut s, &ap, &|r| r.test_acc_offboundary, SERIES[5]);
    s.axes(&lp, "step", "logistic loss");
    s.axes(&ap, "step", "accuracy");
    s.legend(250.0, 42.0, &[("train (batch)", SERIES[1]), ("test", SERIES[2])]);
    s.legend(590.0, 250.0, &[("test", SERIES[2]), ("off-boundary", SERIES[5])]);
    s.finish()
}

pub fn read_snapshots(path: &Path) -> Result<Vec<SnapshotRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: SnapshotRecord =
            serde_json::from_str(line).map_err(|e| Error::Malformed { file: path.to_path_buf(), msg: format!("line {}: {e}", i + 1) })?;
        out.push(rec);
    }
    Ok(out)
}

/// Rows of a CSV file with the expected header. A torn final line (from a
/// killed run) is dropped.
pub fn read_csv<T>(path: &Path, header: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == header => {}
        _ => return Err(Error::Malformed { file: path.to_path_buf(), msg: "missing or unexpected header".into() }),
    }
    let body: Vec<&str> = lines.filter(|l| !l.trim().is_empty()).collect();
    let mut out = Vec::with_capacity(body.len());
    for (i, l) in body.iter().enumerate() {
        match parse(l) {
            Some(v) => out.push(v),
            None if i + 1 == body.len() && !text.ends_with('\n') => {}
            None => return Err(Error::Malformed { file: path.to_path_buf(), msg: format!("bad row {}", i + 2) }),
        }
    }
    Ok(out)
}

/// θ and d from config.resolved, for the readability filter.
pub fn resolved_theta_d(path: &Path) -> Result<(f64, usize)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg = super::config::ExperimentConfig::parse(&text)?;
    Ok((cfg.theta, cfg.d))
}

pub fn readability_threshold(theta: f64, d: usize) -> f64 {
    2.0 * theta * (d as f64).ln() / (d as f64).sqrt()
}

pub const PLOT_INPUTS: [&str; 4] = ["metrics.csv", "snapshots.jsonl", "blocks_trace.csv", "config.resolved"];

/// Writes every figure for `run_dir` and returns the paths. All inputs are
/// read and checked before the first file is written.
pub fn render_plots(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let missing: Vec<PathBuf> = PLOT_INPUTS.iter().map(|f| run_dir.join(f)).filter(|p| !p.exists()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingInputs(missing));
    }
    let snaps = read_snapshots(&run_dir.join("snapshots.jsonl"))?;
    if snaps.is_empty() {
        return Err(Error::Malformed { file: run_dir.join("snapshots.jsonl"), msg: "no snapshot records".into() });
    }
    let rows = read_csv(&run_dir.join("metrics.csv"), super::run::METRICS_HEADER, MetricsRow::from_csv)?;
    if rows.is_empty() {
        return Err(Error::Malformed { file: run_dir.join("metrics.csv"), msg: "no metrics rows".into() });
    }
    let trace = read_csv(&run_dir.join("blocks_trace.csv"), super::run::BLOCKS_HEADER, BlockTrace::from_csv)?;
    let (theta, d) = resolved_theta_d(&run_dir.join("config.resolved"))?;
    let min_sig0 = readability_threshold(theta, d);
    let initial = &snaps[0];
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    for sn in &snaps {
        if sn.neurons.len() != initial.neurons.len() {
            return Err(Error::Malformed { file: run_dir.join("snapshots.jsonl"), msg: format!("step {}: neuron count changed", sn.step) });
        }
        files.push((run_dir.join(format!("scatter_step{:04}.svg", sn.step)), scatter_svg(sn, initial, min_sig0)));
        files.push((run_dir.join(format!("boundary_step{:04}.svg", sn.step)), boundary_svg(sn, 3.0, 80)));
    }
    files.push((run_dir.join("blocks.svg"), blocks_svg(&trace)));
    files.push((run_dir.join("loss.svg"), loss_svg(&rows)));
    let mut out = Vec::new();
    for (p, body) in files {
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        out.push(p);
    }
    Ok(out)
}
