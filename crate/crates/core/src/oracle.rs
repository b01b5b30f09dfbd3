//! The balanced four-direction model N(|μ1ᵀz| − |μ2ᵀz|), its average margins
//! g_μ and g_ρ, and clean gradients.
//!
//! Sign convention: g_μ = E[y |ℓ′| σ(μ1ᵀz)], which is nonnegative. No class
//! prior factor is applied.

use crate::distributions::{xor_label, MU1, MU2};
use crate::error::{Error, Result};
use crate::gauss::{fill_normal, normal, Estimate};
use crate::network::{loss_derivative, relu, NetworkState, NeuronState};
use crate::rng::StreamKey;
use serde::{Deserialize, Serialize};

pub const MIN_MARGIN_SAMPLES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleModel {
    pub n: f64,
}

impl OracleModel {
    pub fn forward(&self, z: [f64; 2]) -> f64 {
        oracle_forward(z, self.n)
    }
}

fn proj(mu: [f64; 2], z: [f64; 2]) -> f64 {
    mu[0] * z[0] + mu[1] * z[1]
}

pub fn oracle_forward(z: [f64; 2], n: f64) -> f64 {
    n * (proj(MU1, z).abs() - proj(MU2, z).abs())
}

pub fn oracle_loss_derivative(z: [f64; 2], n: f64) -> f64 {
    loss_derivative(oracle_forward(z, n), xor_label(z))
}

/// |ℓ′| as a function of q = ||X1| − |X2||: 2 e^{−Nq} / (1 + e^{−Nq}).
pub fn abs_loss_derivative(n: f64, q: f64) -> f64 {
    2.0 / (1.0 + (n * q).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginKind {
    GMu,
    GRho,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginEstimate {
    pub value: f64,
    pub std_err: f64,
    pub n_samples: usize,
    pub kind: MarginKind,
}

fn check_n(n_samples: usize) -> Result<()> {
    if n_samples < MIN_MARGIN_SAMPLES {
        return Err(Error::TooFewSamples { got: n_samples, min: MIN_MARGIN_SAMPLES });
    }
    Ok(())
}

fn margin_gap(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    let (x1, x2) = (normal(rng), normal(rng));
    (x1.abs() - x2.abs()).abs()
}

/// g_μ(N) by Monte Carlo. Each draw is averaged over the eight symmetries of
/// the oracle (sign flips of X1, X2 and their swap), which turns the signed
/// integrand y|ℓ′|σ(X1) into the nonnegative ¼|ℓ′|·||X1| − |X2||.
pub fn estimate_g_mu(n: f64, n_samples: usize, key: StreamKey) -> Result<MarginEstimate> {
    check_n(n_samples)?;
    let m = crate::par::mc_moments(n_samples, 1, key, |rng, out| {
        let q = margin_gap(rng);
        out[0] = 0.25 * abs_loss_derivative(n, q) * q;
    });
    Ok(MarginEstimate { value: m[0].mean, std_err: m[0].std_err(), n_samples, kind: MarginKind::GMu })
}

/// g_μ(N) by polar quadrature of the orbit-averaged integrand; deterministic.
pub fn g_mu_quadrature(n: f64) -> f64 {
    crate::quadrature::gaussian_expectation_2d(
        |x1, x2| {
            let q = (x1.abs() - x2.abs()).abs();
            0.25 * abs_loss_derivative(n, q) * q
        },
        crate::quadrature::Tol { abs: 1e-14, rel: 1e-11 },
    )
    .value
}

/// g_μ(N) from the raw integrand y|ℓ′|σ(μᵀz), for either direction.
pub fn estimate_g_mu_plain(n: f64, mu: [f64; 2], n_samples: usize, key: StreamKey) -> Result<MarginEstimate> {
    check_n(n_samples)?;
    let m = crate::par::mc_moments(n_samples, 1, key, |rng, out| {
        let z = [normal(rng), normal(rng)];
        let y = xor_label(z);
        out[0] = y * oracle_loss_derivative(z, n).abs() * relu(proj(mu, z));
    });
    Ok(MarginEstimate { value: m[0].mean, std_err: m[0].std_err(), n_samples, kind: MarginKind::GMu })
}

pub fn estimate_g_rho(n: f64, n_samples: usize, key: StreamKey) -> Result<MarginEstimate> {
    check_n(n_samples)?;
    let m = crate::par::mc_moments(n_samples, 1, key, |rng, out| {
        out[0] = abs_loss_derivative(n, margin_gap(rng));
    });
    Ok(MarginEstimate { value: m[0].mean, std_err: m[0].std_err(), n_samples, kind: MarginKind::GRho })
}

/// Where the loss derivative of a clean gradient comes from.
#[derive(Clone, Copy, Debug)]
pub enum CleanSource<'a> {
    Network(&'a NetworkState),
    Oracle(f64),
}

impl CleanSource<'_> {
    fn loss_derivative(&self, z: [f64; 2]) -> f64 {
        match self {
            CleanSource::Network(net) => loss_derivative(net.forward_plane(z), xor_label(z)),
            CleanSource::Oracle(n) => oracle_loss_derivative(z, *n),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CleanGradient {
    pub grad_w: Vec<f64>,
    pub grad_a: f64,
    pub se_w: Vec<f64>,
    pub se_a: f64,
    /// μ1ᵀ∇_w and μ2ᵀ∇_w with their standard errors.
    pub mu1: Estimate,
    pub mu2: Estimate,
}

/// a E[ℓ′(z) σ′(wᵀx) x] and E[ℓ′(z) σ(wᵀx)] over x ~ N(0, I_d), with ℓ′
/// evaluated at the plane projection z.
pub fn clean_gradient(neuron: &NeuronState, source: CleanSource<'_>, n_samples: usize, key: StreamKey) -> CleanGradient {
    let d = neuron.w.len();
    let a = neuron.a;
    let m = crate::par::mc_moments(n_samples, d + 3, key, |rng, out| {
        let (x, rest) = out.split_at_mut(d);
        fill_normal(rng, x);
        let z = [x[0], x[1]];
        let lp = source.loss_derivative(z);
        let u = neuron.preact(x);
        if u > 0.0 {
            let c = a * lp;
            x.iter_mut().for_each(|v| *v *= c);
            rest[0] = lp * u;
        } else {
            x.iter_mut().for_each(|v| *v = 0.0);
            rest[0] = 0.0;
        }
        rest[1] = proj(MU1, [x[0], x[1]]);
        rest[2] = proj(MU2, [x[0], x[1]]);
    });
    CleanGradient {
        grad_w: m[..d].iter().map(|v| v.mean).collect(),
        se_w: m[..d].iter().map(|v| v.std_err()).collect(),
        grad_a: m[d].mean,
        se_a: m[d].std_err(),
        mu1: m[d + 1].into(),
        mu2: m[d + 2].into(),
    }
}

/// (1 + 2η g_μ) N.
pub fn predicted_block_growth(n: f64, g_mu: f64, eta: f64) -> f64 {
    (1.0 + 2.0 * eta * g_mu) * n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::boundary_margin;
    use crate::network::Hyper;
    use crate::quadrature::{gaussian_expectation_2d, Tol};
    use std::f64::consts::PI;

    fn key(s: &str) -> StreamKey {
        StreamKey::root(21).child(s)
    }

    // quadrature oracle for g_μ(N) straight from the raw signed integrand
    fn g_mu_quadrature_signed(n: f64) -> f64 {
        gaussian_expectation_2d(
            |z1, z2| {
                let z = [z1, z2];
                xor_label(z) * oracle_loss_derivative(z, n).abs() * relu(proj(MU1, z))
            },
            Tol { abs: 1e-13, rel: 1e-10 },
        )
        .value
    }

    #[test]
    fn forward_examples() {
        assert!(oracle_forward([1.0, 0.0], 3.0).abs() < 1e-15);
        let z = [2.0 * MU1[0], 2.0 * MU1[1]];
        assert!((oracle_forward(z, 5.0) - 10.0).abs() < 1e-14);
        assert_eq!(xor_label(z), 1.0);
    }

    #[test]
    fn margin_identity_pointwise() {
        let mut rng = key("id").rng();
        for _ in 0..10_000 {
            let z = [3.0 * normal(&mut rng), 3.0 * normal(&mut rng)];
            let n = 50.0 * rand::Rng::random::<f64>(&mut rng);
            let lhs = xor_label(z) * oracle_forward(z, n);
            let rhs = 2f64.sqrt() * n * boundary_margin(z);
            assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn loss_derivative_magnitude() {
        let mut rng = key("lp").rng();
        for _ in 0..1000 {
            let z = [normal(&mut rng), normal(&mut rng)];
            assert_eq!(oracle_loss_derivative(z, 0.0).abs(), 1.0);
            let q = (proj(MU1, z).abs() - proj(MU2, z).abs()).abs();
            let mut prev = f64::INFINITY;
            for n in [0.5, 1.0, 4.0, 20.0] {
                let v = oracle_loss_derivative(z, n).abs();
                assert!((v - abs_loss_derivative(n, q)).abs() < 1e-14);
                assert!(v <= prev);
                prev = v;
                let mut r = [z[0], z[1], 0.0];
                crate::distributions::rotate_plane(&mut r);
                assert_eq!(oracle_loss_derivative([r[0], r[1]], n).abs(), v);
            }
        }
        for n in [0.0, 3.0, 40.0] {
            assert_eq!(oracle_loss_derivative([2.5, 0.0], n).abs(), 1.0);
        }
    }

    #[test]
    fn g_mu_at_zero_mass() {
        // E[sgn(|X1| − |X2|) σ(X1)] = (√2 − 1)/√(2π) in closed form
        let exact = (2f64.sqrt() - 1.0) / (2.0 * PI).sqrt();
        assert!((g_mu_quadrature_signed(0.0) - exact).abs() < 1e-10);
        let e = estimate_g_mu(0.0, 1_000_000, key("g0")).unwrap();
        assert!((e.value - exact).abs() < 3.0 * e.std_err);
        let p = estimate_g_mu_plain(0.0, MU1, 1_000_000, key("g0p")).unwrap();
        assert!((p.value - exact).abs() < 3.0 * p.std_err);
    }

    #[test]
    fn g_mu_against_quadrature() {
        // frozen values from an independent scipy evaluation of the same integral
        let frozen = [(5.0, 0.013_462_175), (10.0, 0.004_011_714_2), (20.0, 0.001_084_112_4), (40.0, 0.000_280_760_80)];
        for (n, v) in frozen {
            let q = g_mu_quadrature_signed(n);
            assert!((q - v).abs() < 2e-9, "N={n}: quadrature {q} vs frozen {v}");
            let e = estimate_g_mu(n, 400_000, key("gq").index(n as u64)).unwrap();
            assert!((e.value - q).abs() < 3.0 * e.std_err, "N={n}: {} ± {} vs {q}", e.value, e.std_err);
        }
    }

    #[test]
    fn orbit_quadrature_matches_signed_quadrature() {
        for n in [0.0, 0.3, 1.0, 4.0, 25.0] {
            let (a, b) = (g_mu_quadrature(n), g_mu_quadrature_signed(n));
            assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()) + 1e-13, "N={n}: {a} vs {b}");
        }
    }

    #[test]
    fn directions_agree() {
        let n = 2.0;
        let a = estimate_g_mu_plain(n, MU1, 1_000_000, key("d1")).unwrap();
        // the μ2 direction sits on the y = −1 class, so its plain estimate is −g_μ
        let b = estimate_g_mu_plain(n, MU2, 1_000_000, key("d2")).unwrap();
        assert!((a.value + b.value).abs() < 3.0 * (a.std_err.powi(2) + b.std_err.powi(2)).sqrt());
    }

    #[test]
    fn g_rho_examples() {
        let e = estimate_g_rho(0.0, 20_000, key("r0")).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.std_err, 0.0);
        let mut prev = f64::INFINITY;
        for n in [5.0, 10.0, 20.0, 40.0] {
            // common random numbers: the same key at every N
            let e = estimate_g_rho(n, 1_000_000, key("rho")).unwrap();
            assert!(e.value * n >= 0.3 && e.value * n <= 3.0 * f64::ln(n), "N={n}: {}", e.value * n);
            assert!(e.value <= prev);
            prev = e.value;
        }
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(estimate_g_mu(1.0, 100, key("x")), Err(Error::TooFewSamples { .. })));
        assert!(estimate_g_rho(1.0, 9_999, key("x")).is_err());
    }

    #[test]
    fn clean_gradient_of_silent_output_weight() {
        let n = NeuronState::fresh(vec![0.3, -0.2, 0.5, 0.1], 0.0);
        let g = clean_gradient(&n, CleanSource::Oracle(1.0), 50_000, key("cg"));
        assert!(g.grad_w.iter().all(|&v| v == 0.0));
        assert!(g.grad_a.is_finite() && g.se_a > 0.0);
    }

    #[test]
    fn clean_gradient_with_network_source() {
        // a perfectly balanced toy network of mass c² reproduces the oracle at mass c²/4
        let c: f64 = 1.5;
        let e = |z: [f64; 2]| vec![z[0], z[1], 0.0];
        let neurons = vec![
            NeuronState::fresh(e([c * MU1[0], c * MU1[1]]), c),
            NeuronState::fresh(e([-c * MU1[0], -c * MU1[1]]), c),
            NeuronState::fresh(e([c * MU2[0], c * MU2[1]]), -c),
            NeuronState::fresh(e([-c * MU2[0], -c * MU2[1]]), -c),
        ];
        let net = NetworkState::from_neurons(neurons, Hyper { d: 3, m: 4, theta: c, eta: 0.1, batch_size: 1 }).unwrap();
        let mut rng = key("toy").rng();
        for _ in 0..200 {
            let z = [normal(&mut rng), normal(&mut rng)];
            assert!((net.forward_plane(z) - oracle_forward(z, c * c / 4.0)).abs() < 1e-12);
        }
        let probe = NeuronState::fresh(vec![0.8 * MU1[0], 0.8 * MU1[1], 0.05], 0.8);
        let a = clean_gradient(&probe, CleanSource::Network(&net), 200_000, key("same"));
        let b = clean_gradient(&probe, CleanSource::Oracle(c * c / 4.0), 200_000, key("same"));
        for (u, v) in a.grad_w.iter().zip(&b.grad_w) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn growth_prediction() {
        assert_eq!(predicted_block_growth(3.0, 0.0, 0.1), 3.0);
        assert!((predicted_block_growth(1.0, 0.5, 0.01) - 1.01).abs() < 1e-15);
    }
}
