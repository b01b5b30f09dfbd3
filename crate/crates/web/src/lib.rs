//! Browser bindings: step a small training run and draw its figures, plus
//! two static figures for the margin law and the Gaussian bounds.

use blockdyn_core::gauss::{pdf, sf};
use blockdyn_core::harness::plots::{blocks_svg, boundary_svg, readability_threshold, scatter_svg, Panel, Svg};
use blockdyn_core::harness::{BlockTrace, ExperimentConfig, SnapshotRecord, Trainer};
use blockdyn_core::oracle::{estimate_g_mu, g_mu_quadrature};
use blockdyn_core::rng::StreamKey;
use wasm_bindgen::prelude::*;

fn js(e: blockdyn_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Sim {
    tr: Trainer,
    initial: SnapshotRecord,
    trace: Vec<BlockTrace>,
    min_sig0: f64,
}

#[wasm_bindgen]
impl Sim {
    /// `config` uses the same `key = value` lines as the CLI config files.
    #[wasm_bindgen(constructor)]
    pub fn new(config: &str) -> Result<Sim, JsError> {
        let cfg = ExperimentConfig::parse(config).map_err(js)?;
        let min_sig0 = readability_threshold(cfg.theta, cfg.d);
        let tr = Trainer::new(cfg).map_err(js)?;
        let initial = tr.snapshot();
        let trace = vec![BlockTrace::of(&tr.blocks().map_err(js)?)];
        Ok(Sim { tr, initial, trace, min_sig0 })
    }

    /// Runs up to `k` SGD steps, stopping early at the configured horizon.
    pub fn advance(&mut self, k: u32) -> Result<u64, JsError> {
        for _ in 0..k {
            if self.tr.done() {
                break;
            }
            let b = self.tr.advance().map_err(js)?;
            self.trace.push(BlockTrace::of(&b));
        }
        Ok(self.tr.step())
    }

    pub fn done(&self) -> bool {
        self.tr.done()
    }

    /// Current metrics row as JSON.
    pub fn metrics_json(&mut self) -> Result<String, JsError> {
        let row = self.tr.metrics_row().map_err(js)?;
        serde_json::to_string(&row).map_err(|e| JsError::new(&e.to_string()))
    }

    pub fn scatter_svg(&self) -> String {
        scatter_svg(&self.tr.snapshot(), &self.initial, self.min_sig0)
    }

    pub fn boundary_svg(&self, cells: usize) -> String {
        boundary_svg(&self.tr.snapshot(), 3.0, cells.clamp(10, 200))
    }

    pub fn blocks_svg(&self) -> String {
        blocks_svg(&self.trace)
    }
}

/// log10 ĝ_μ against log10 N: quadrature curve, Monte Carlo points with 2σ
/// bars, and an N^−3 line through the N = 5 value for comparison.
#[wasm_bindgen]
pub fn margin_curve_svg(n_samples: usize, seed: u64) -> Result<String, JsError> {
    let grid: Vec<f64> = (0..=60).map(|i| 2.0 * 30f64.powf(i as f64 / 60.0)).collect();
    let quad: Vec<(f64, f64)> = grid.iter().map(|&n| (n.log10(), g_mu_quadrature(n).log10())).collect();
    let key = StreamKey::root(seed).child("web").child("margin");
    let mut mc = Vec::new();
    for (i, n) in [5.0, 10.0, 20.0, 40.0].into_iter().enumerate() {
        let e = estimate_g_mu(n, n_samples.max(10_000), key.index(i as u64)).map_err(js)?;
        mc.push((n, e.value, e.std_err));
    }
    let g5 = g_mu_quadrature(5.0);
    let cubic: Vec<(f64, f64)> = grid.iter().map(|&n| (n.log10(), (g5 * (5.0 / n).powi(3)).log10())).collect();
    let ylo = cubic.last().unwrap().1.min(quad.last().unwrap().1) - 0.2;
    let p = Panel { x0: 70.0, y0: 20.0, w: 420.0, h: 280.0, xr: (grid[0].log10(), grid[60].log10()), yr: (ylo, quad[0].1 + 0.2) };
    let mut s = Svg::new(520.0, 350.0);
    s.axes(&p, "log10 N", "log10 ĝ_μ");
    let map = |v: &[(f64, f64)]| v.iter().map(|&(x, y)| (p.px(x), p.py(y))).collect::<Vec<_>>();
    s.polyline(&map(&quad), "#1f77b4", 2.0);
    s.polyline(&map(&cubic), "#999999", 1.0);
    for &(n, g, se) in &mc {
        let (x, y) = (p.px(n.log10()), p.py(g.log10()));
        let lo = (g - 2.0 * se).max(g * 1e-3);
        s.line((x, p.py(lo.log10())), (x, p.py((g + 2.0 * se).log10())), "#d62728", 1.0, None);
        s.circle(x, y, 3.5, "#d62728");
    }
    s.legend(p.x0 + p.w - 130.0, p.y0 + 14.0, &[("quadrature", "#1f77b4"), ("Monte Carlo", "#d62728"), ("N^−3 through N=5", "#999999")]);
    Ok(s.finish())
}

/// Two panels: P(|X| ≤ ε) between its small-ball bounds on (0, eps_max], and
/// the Mills ratio P(X ≥ t)/φ(t) between t/(1+t²) and 1/t on [0.2, t_max].
#[wasm_bindgen]
pub fn gaussian_bounds_svg(eps_max: f64, t_max: f64) -> String {
    let eps_max = eps_max.clamp(0.05, 1.0);
    let t_max = t_max.clamp(0.5, 20.0);
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let eps: Vec<f64> = (1..=80).map(|i| eps_max * i as f64 / 80.0).collect();
    let ball: Vec<f64> = eps.iter().map(|&e| 1.0 - 2.0 * sf(e)).collect();
    let ball_lo: Vec<f64> = eps.iter().map(|&e| c * (-0.5 * e * e).exp() * (e + e.powi(3) / 3.0)).collect();
    let ball_hi: Vec<f64> = eps.iter().map(|&e| c * e).collect();
    let ts: Vec<f64> = (0..=80).map(|i| 0.2 + (t_max - 0.2) * i as f64 / 80.0).collect();
    let mills: Vec<f64> = ts.iter().map(|&t| sf(t) / pdf(t)).collect();
    let mills_lo: Vec<f64> = ts.iter().map(|&t| t / (1.0 + t * t)).collect();
    let mills_hi: Vec<f64> = ts.iter().map(|&t| (1.0 / t).min(2.0)).collect();

    let mut s = Svg::new(820.0, 340.0);
    let a = Panel { x0: 60.0, y0: 20.0, w: 320.0, h: 260.0, xr: (0.0, eps_max), yr: (0.0, c * eps_max * 1.05) };
    let b = Panel { x0: 470.0, y0: 20.0, w: 320.0, h: 260.0, xr: (0.2, t_max), yr: (0.0, 2.0) };
    s.axes(&a, "ε", "P(|X| ≤ ε)");
    s.axes(&b, "t", "P(X ≥ t) / φ(t)");
    let pts = |p: &Panel, x: &[f64], y: &[f64]| x.iter().zip(y).map(|(&x, &y)| (p.px(x), p.py(y))).collect::<Vec<_>>();
    s.polyline(&pts(&a, &eps, &ball_hi), "#ff7f0e", 1.0);
    s.polyline(&pts(&a, &eps, &ball_lo), "#2ca02c", 1.0);
    s.polyline(&pts(&a, &eps, &ball), "#1f77b4", 2.0);
    s.polyline(&pts(&b, &ts, &mills_hi), "#ff7f0e", 1.0);
    s.polyline(&pts(&b, &ts, &mills_lo), "#2ca02c", 1.0);
    s.polyline(&pts(&b, &ts, &mills), "#1f77b4", 2.0);
    s.legend(a.x0 + 10.0, a.y0 + 14.0, &[("exact", "#1f77b4"), ("upper bound", "#ff7f0e"), ("lower bound", "#2ca02c")]);
    s.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: &str = "d = 10\nm = 12\ntheta = 0.1\neta = 0.3\nbatch_size = 16\nmax_steps = 50\neval_n = 1000\ng_mu_samples = 10000\n";

    #[test]
    fn sim_steps_and_draws() {
        let mut s = Sim::new(CFG).map_err(|_| ()).unwrap();
        assert_eq!(s.advance(20).map_err(|_| ()).unwrap(), 20);
        assert_eq!(s.advance(100).map_err(|_| ()).unwrap(), 50);
        assert!(s.done());
        assert_eq!(s.trace.len(), 51);
        for svg in [s.scatter_svg(), s.boundary_svg(30), s.blocks_svg()] {
            assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        }
        let row: serde_json::Value = serde_json::from_str(&s.metrics_json().map_err(|_| ()).unwrap()).unwrap();
        assert_eq!(row["step"], 50);
    }

    #[test]
    fn sim_matches_native_trainer() {
        let mut s = Sim::new(CFG).map_err(|_| ()).unwrap();
        s.advance(30).map_err(|_| ()).unwrap();
        let mut t = Trainer::new(ExperimentConfig::parse(CFG).unwrap()).unwrap();
        for _ in 0..30 {
            t.advance().unwrap();
        }
        assert_eq!(s.tr.snapshot(), t.snapshot());
    }

    #[test]
    fn static_figures_render() {
        let m = margin_curve_svg(10_000, 1).map_err(|_| ()).unwrap();
        assert_eq!(m.matches("<circle").count(), 4);
        let g = gaussian_bounds_svg(1.0, 6.0);
        assert_eq!(g.matches("<polyline").count(), 6);
        assert!(!g.contains("NaN"));
    }
}
