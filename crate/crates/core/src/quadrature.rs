//! Globally adaptive Gauss–Kronrod (7/15) quadrature, and a polar rule for
//! expectations under the two-dimensional standard Gaussian.
//!
//! These are the deterministic oracles the Monte Carlo estimators are tested
//! against, so they share no code with the samplers.

use std::collections::BinaryHeap;
use std::f64::consts::{FRAC_PI_4, PI};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

#[derive(Clone, Copy, Debug)]
pub struct Tol {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tol {
    fn default() -> Self {
        Tol { abs: 1e-15, rel: 1e-13 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&o.error)
    }
}

const MAX_PIECES: usize = 4000;

/// Adaptive integral of `f` over the finite interval [a, b].
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: Tol) -> Quad {
    if a == b {
        return Quad { value: 0.0, error: 0.0, evals: 0 };
    }
    let (v, e) = kronrod(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value: v, error: e });
    let mut evals = 15;
    let (mut total, mut err) = (v, e);
    while err > tol.abs.max(tol.rel * total.abs()) && heap.len() < MAX_PIECES {
        let p = heap.pop().expect("nonempty");
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            heap.push(p);
            break;
        }
        let (v1, e1) = kronrod(&mut f, p.a, m);
        let (v2, e2) = kronrod(&mut f, m, p.b);
        evals += 30;
        heap.push(Piece { a: p.a, b: m, value: v1, error: e1 });
        heap.push(Piece { a: m, b: p.b, value: v2, error: e2 });
        // re-sum rather than update incrementally so the total carries no drift
        total = heap.iter().map(|q| q.value).sum();
        err = heap.iter().map(|q| q.error).sum();
    }
    Quad { value: total, error: err, evals }
}

/// Integral over [a, b] split at the given interior points (kinks).
pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, breaks: &[f64], tol: Tol) -> Quad {
    let mut pts = vec![a];
    pts.extend(breaks.iter().copied().filter(|&p| p > a && p < b));
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    let mut out = Quad { value: 0.0, error: 0.0, evals: 0 };
    for w in pts.windows(2) {
        let q = integrate(&mut f, w[0], w[1], tol);
        out.value += q.value;
        out.error += q.error;
        out.evals += q.evals;
    }
    out
}

/// Integral over [a, ∞) through x = a + u/(1-u).
pub fn integrate_to_inf<F: FnMut(f64) -> f64>(mut f: F, a: f64, tol: Tol) -> Quad {
    integrate(
        |u| {
            let s = 1.0 - u;
            f(a + u / s) / (s * s)
        },
        0.0,
        1.0,
        tol,
    )
}

/// Radius beyond which the 2-D Gaussian carries less than e^{-84} of its mass.
pub const RADIAL_CUTOFF: f64 = 13.0;

/// E f(Z1, Z2) for (Z1, Z2) ~ N(0, I2), by nested adaptive quadrature in polar
/// coordinates. The angle is split into eight sectors at multiples of π/4 so
/// kinks on the axes and on the diagonals |z1| = |z2| sit on sector edges.
pub fn gaussian_expectation_2d<F: Fn(f64, f64) -> f64>(f: F, tol: Tol) -> Quad {
    let inner_tol = Tol { abs: tol.abs * 1e-2, rel: tol.rel * 1e-2 };
    let mut total = Quad { value: 0.0, error: 0.0, evals: 0 };
    for k in 0..8 {
        let lo = k as f64 * FRAC_PI_4;
        let q = integrate(
            |phi| {
                let (s, c) = phi.sin_cos();
                let radial =
                    integrate_with_breaks(|r| f(r * c, r * s) * r * (-0.5 * r * r).exp(), 0.0, RADIAL_CUTOFF, &[1.0, 3.0, 6.0], inner_tol);
                radial.value / (2.0 * PI)
            },
            lo,
            lo + FRAC_PI_4,
            tol,
        );
        total.value += q.value;
        total.error += q.error;
        total.evals += q.evals;
    }
    total
}

/// E f(X) for X ~ N(0,1), split at the given kinks.
pub fn gaussian_expectation_1d<F: Fn(f64) -> f64>(f: F, breaks: &[f64], tol: Tol) -> Quad {
    integrate_with_breaks(|x| f(x) * crate::gauss::pdf(x), -40.0, 40.0, breaks, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let q = integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, Tol::default());
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0);
        assert!((q.value - exact).abs() < 1e-13);
    }

    #[test]
    fn normal_density_integrates_to_one() {
        let q = integrate_to_inf(crate::gauss::pdf, 0.0, Tol::default());
        assert!((q.value - 0.5).abs() < 1e-13, "{}", q.value);
        let q = gaussian_expectation_1d(|_| 1.0, &[], Tol::default());
        assert!((q.value - 1.0).abs() < 1e-13);
    }

    #[test]
    fn kinked_integrand() {
        let q = integrate_with_breaks(|x: f64| x.abs(), -1.0, 3.0, &[0.0], Tol::default());
        assert!((q.value - 5.0).abs() < 1e-13);
    }

    #[test]
    fn two_dim_moments() {
        let tol = Tol { abs: 1e-13, rel: 1e-12 };
        let one = gaussian_expectation_2d(|_, _| 1.0, tol);
        assert!((one.value - 1.0).abs() < 1e-11, "{}", one.value);
        let sq = gaussian_expectation_2d(|a, b| a * a + 3.0 * b * b * a * a, tol);
        assert!((sq.value - 4.0).abs() < 1e-10, "{}", sq.value);
        // E max(|Z1|,|Z2|) has no kink off the sector edges
        let mx = gaussian_expectation_2d(|a, b| a.abs().max(b.abs()), tol);
        assert!((mx.value - 2.0 / PI.sqrt()).abs() < 1e-10, "{}", mx.value);
    }
}
