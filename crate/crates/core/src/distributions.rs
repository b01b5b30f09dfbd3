//! Input distributions, labelling rules and the XOR boundary geometry.

use crate::error::{Error, Result};
use crate::rng::StreamKey;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

pub const MU1: [f64; 2] = [FRAC_1_SQRT_2, -FRAC_1_SQRT_2];
pub const MU2: [f64; 2] = [FRAC_1_SQRT_2, FRAC_1_SQRT_2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputKind {
    IsotropicGaussian,
    /// Covariance `lambda1 μ1μ1ᵀ + lambda2 μ2μ2ᵀ` on the first two coordinates.
    AnisotropicGaussian {
        lambda1: f64,
        lambda2: f64,
    },
    UniformCube,
    /// Four clusters at ±mean_norm·μ1 and ±mean_norm·μ2.
    XorGaussianMixture {
        mean_norm: f64,
        variance: f64,
    },
}

impl InputKind {
    pub fn name(&self) -> &'static str {
        match self {
            InputKind::IsotropicGaussian => "isotropic_gaussian",
            InputKind::AnisotropicGaussian { .. } => "anisotropic_gaussian",
            InputKind::UniformCube => "uniform_cube",
            InputKind::XorGaussianMixture { .. } => "xor_gaussian_mixture",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub kind: InputKind,
    pub d: usize,
}

impl InputSpec {
    pub fn isotropic(d: usize) -> Self {
        InputSpec { kind: InputKind::IsotropicGaussian, d }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::Config(format!("input dimension must be at least 2, got {}", self.d)));
        }
        match self.kind {
            InputKind::AnisotropicGaussian { lambda1, lambda2 } if !(lambda1 > 0.0 && lambda2 > 0.0) => {
                Err(Error::Config("anisotropic eigenvalues must be positive".into()))
            }
            InputKind::XorGaussianMixture { mean_norm, variance } if !(mean_norm >= 0.0 && variance > 0.0) => {
                Err(Error::Config("mixture needs mean_norm >= 0 and variance > 0".into()))
            }
            _ => Ok(()),
        }
    }

    /// One input vector drawn with `rng`.
    pub fn draw(&self, rng: &mut ChaCha8Rng, x: &mut [f64]) {
        match self.kind {
            InputKind::IsotropicGaussian => crate::gauss::fill_normal(rng, x),
            InputKind::AnisotropicGaussian { lambda1, lambda2 } => {
                crate::gauss::fill_normal(rng, x);
                let (u, v) = (lambda1.sqrt() * x[0], lambda2.sqrt() * x[1]);
                x[0] = u * MU1[0] + v * MU2[0];
                x[1] = u * MU1[1] + v * MU2[1];
            }
            InputKind::UniformCube => {
                for v in x.iter_mut() {
                    *v = rng.random_range(-1.0..1.0);
                }
            }
            InputKind::XorGaussianMixture { mean_norm, variance } => {
                let c: u8 = rng.random_range(0..4);
                let sd = variance.sqrt();
                crate::gauss::fill_normal(rng, x);
                for v in x.iter_mut() {
                    *v *= sd;
                }
                let mu = if c < 2 { MU1 } else { MU2 };
                let s = if c.is_multiple_of(2) { mean_norm } else { -mean_norm };
                x[0] += s * mu[0];
                x[1] += s * mu[1];
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Xor,
    Sinusoid,
}

impl LabelKind {
    pub fn name(&self) -> &'static str {
        match self {
            LabelKind::Xor => "xor",
            LabelKind::Sinusoid => "sinusoid",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelSpec {
    pub kind: LabelKind,
    pub noise_rate: f64,
}

impl LabelSpec {
    pub fn xor() -> Self {
        LabelSpec { kind: LabelKind::Xor, noise_rate: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::Config(format!("label noise rate must lie in [0,1), got {}", self.noise_rate)));
        }
        Ok(())
    }

    /// Noise-free label, or `None` on the (measure-zero) decision boundary.
    pub fn clean(&self, x1: f64, x2: f64) -> Option<f64> {
        let s = match self.kind {
            LabelKind::Xor => -(x1 * x2),
            LabelKind::Sinusoid => x2 - x1.sin(),
        };
        if s > 0.0 {
            Some(1.0)
        } else if s < 0.0 {
            Some(-1.0)
        } else {
            None
        }
    }
}

/// −sgn(z1 z2), with +1 on the axes.
pub fn xor_label(z: [f64; 2]) -> f64 {
    if z[0] * z[1] > 0.0 {
        -1.0
    } else {
        1.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: f64,
    pub z: [f64; 2],
}

/// Draws the sample with index `j` under `key`. Inputs come from stream `j`
/// of `key`; the label flip comes from a sibling key, so changing the noise
/// rate never moves the inputs.
pub fn sample_one(input: &InputSpec, label: &LabelSpec, key: StreamKey, j: u64) -> LabeledSample {
    let mut rng = key.stream(j);
    let mut x = vec![0.0; input.d];
    let y = loop {
        input.draw(&mut rng, &mut x);
        if let Some(y) = label.clean(x[0], x[1]) {
            break y;
        }
    };
    let y = if label.noise_rate > 0.0 {
        let mut flip = key.child("flip").stream(j);
        if flip.random::<f64>() < label.noise_rate {
            -y
        } else {
            y
        }
    } else {
        y
    };
    LabeledSample { z: [x[0], x[1]], x, y }
}

pub fn sample_batch(input: &InputSpec, label: &LabelSpec, n: usize, key: StreamKey) -> Result<Vec<LabeledSample>> {
    input.validate()?;
    label.validate()?;
    if n == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    Ok(crate::par::map_range(n, |j| sample_one(input, label, key, j as u64)))
}

/// r·(|sin θ| ∧ |cos θ|) for z in polar form, i.e. min(|z1|, |z2|).
pub fn boundary_margin(z: [f64; 2]) -> f64 {
    z[0].abs().min(z[1].abs())
}

pub fn in_boundary_region(z: [f64; 2], eps: f64) -> bool {
    boundary_margin(z) <= eps
}

/// Rotation of the (e1, e2)-plane by +π/2; it sends μ1 to μ2.
pub fn rotate_plane(x: &mut [f64]) {
    let (a, b) = (x[0], x[1]);
    x[0] = -b;
    x[1] = a;
}

pub fn rotate_plane_inv(x: &mut [f64]) {
    let (a, b) = (x[0], x[1]);
    x[0] = b;
    x[1] = -a;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::Moments;
    use crate::quadrature::{integrate, Tol};

    fn key() -> StreamKey {
        StreamKey::root(3).child("dist-test")
    }

    #[test]
    fn xor_labels_at_reference_points() {
        let l = LabelSpec::xor();
        assert_eq!(l.clean(1.0, 1.0), Some(-1.0));
        assert_eq!(l.clean(1.0, -1.0), Some(1.0));
        assert_eq!(l.clean(0.0, 2.0), None);
    }

    #[test]
    fn sinusoid_labels() {
        let l = LabelSpec { kind: LabelKind::Sinusoid, noise_rate: 0.0 };
        assert_eq!(l.clean(0.0, 0.5), Some(1.0));
        assert_eq!(l.clean(std::f64::consts::FRAC_PI_2, 0.5), Some(-1.0));
    }

    #[test]
    fn isotropic_moments() {
        let n = 1_000_000;
        let b = sample_batch(&InputSpec::isotropic(4), &LabelSpec::xor(), n, key()).unwrap();
        for c in 0..4 {
            let mut m = Moments::default();
            b.iter().for_each(|s| m.push(s.x[c]));
            assert!(m.mean.abs() < 4.0 / (n as f64).sqrt(), "coord {c} mean {}", m.mean);
            assert!((m.variance() - 1.0).abs() < 0.01, "coord {c} var {}", m.variance());
        }
        assert!(b.iter().all(|s| s.z == [s.x[0], s.x[1]] && s.y.abs() == 1.0));
    }

    #[test]
    fn noise_flip_rate() {
        let n = 1_000_000;
        let clean = LabelSpec::xor();
        let noisy = LabelSpec { noise_rate: 0.05, ..clean };
        let a = sample_batch(&InputSpec::isotropic(3), &clean, n, key()).unwrap();
        let b = sample_batch(&InputSpec::isotropic(3), &noisy, n, key()).unwrap();
        let mut flips = 0usize;
        for (s, t) in a.iter().zip(&b) {
            assert_eq!(s.x, t.x, "noise must not move the inputs");
            if s.y != t.y {
                flips += 1;
            }
        }
        let p = flips as f64 / n as f64;
        let se = (0.05f64 * 0.95 / n as f64).sqrt();
        assert!((p - 0.05).abs() < 3.0 * se, "flip fraction {p}");
    }

    #[test]
    fn margin_examples() {
        assert_eq!(boundary_margin([1.0, 0.0]), 0.0);
        assert_eq!(boundary_margin([3.0, 2.0]), 2.0);
        let z = [2.0 * MU1[0], 2.0 * MU1[1]];
        assert!((boundary_margin(z) - 2f64.sqrt()).abs() < 1e-15);
        assert!(in_boundary_region([1.0, 0.0], 1e-9));
        assert!(!in_boundary_region([3.0, 2.0], 0.3));
    }

    fn boundary_probability(eps: f64) -> f64 {
        // P(min(|X1|,|X2|) <= eps) = 1 - (1 - P(|X| <= eps))^2
        let p = integrate(crate::gauss::pdf, -eps, eps, Tol::default()).value;
        1.0 - (1.0 - p) * (1.0 - p)
    }

    #[test]
    fn boundary_region_mass() {
        let n = 400_000;
        let b = sample_batch(&InputSpec::isotropic(2), &LabelSpec::xor(), n, key()).unwrap();
        let eps = 0.1;
        let hits = b.iter().filter(|s| in_boundary_region(s.z, eps)).count();
        let p = hits as f64 / n as f64;
        let q = boundary_probability(eps);
        let se = (q * (1.0 - q) / n as f64).sqrt();
        assert!((p - q).abs() < 3.0 * se, "measured {p}, quadrature {q}");
        for eps in [0.01, 0.05, 0.1, 0.3] {
            let hits = b.iter().filter(|s| in_boundary_region(s.z, eps)).count();
            let p = hits as f64 / n as f64;
            let single = integrate(crate::gauss::pdf, -eps, eps, Tol::default()).value;
            assert!(p <= 2.0 * single + 3.0 * (p * (1.0 - p) / n as f64).sqrt());
        }
    }

    #[test]
    fn xor_label_symmetries() {
        let l = LabelSpec::xor();
        let b = sample_batch(&InputSpec::isotropic(5), &l, 2000, key()).unwrap();
        for s in &b {
            let neg: Vec<f64> = s.x.iter().map(|v| -v).collect();
            assert_eq!(l.clean(neg[0], neg[1]), Some(s.y));
            let mut r = s.x.clone();
            rotate_plane(&mut r);
            assert_eq!(l.clean(r[0], r[1]), Some(-s.y));
        }
    }

    fn second_moments(kind: InputKind) -> (f64, f64, f64) {
        let spec = InputSpec { kind, d: 3 };
        let b = sample_batch(&spec, &LabelSpec::xor(), 400_000, key()).unwrap();
        let n = b.len() as f64;
        let mut s = (0.0, 0.0, 0.0);
        for t in &b {
            let (u, v) = (MU1[0] * t.x[0] + MU1[1] * t.x[1], MU2[0] * t.x[0] + MU2[1] * t.x[1]);
            s.0 += u * u;
            s.1 += v * v;
            s.2 += t.x[0] * t.x[1];
        }
        (s.0 / n, s.1 / n, s.2 / n)
    }

    #[test]
    fn four_fold_symmetry_of_kinds() {
        for kind in [InputKind::IsotropicGaussian, InputKind::UniformCube, InputKind::XorGaussianMixture { mean_norm: 2.0, variance: 1.0 }]
        {
            let (a, b, _) = second_moments(kind.clone());
            assert!((a / b - 1.0).abs() < 0.02, "{}: {a} vs {b}", kind.name());
        }
        let (a, b, _) = second_moments(InputKind::AnisotropicGaussian { lambda1: 5.0, lambda2: 1.0 });
        assert!((a - 5.0).abs() < 0.05 && (b - 1.0).abs() < 0.02, "{a} {b}");
    }

    #[test]
    fn invalid_specs_are_config_errors() {
        assert!(sample_batch(&InputSpec::isotropic(1), &LabelSpec::xor(), 4, key()).unwrap_err().is_config());
        let bad = LabelSpec { noise_rate: 1.0, ..LabelSpec::xor() };
        assert!(sample_batch(&InputSpec::isotropic(3), &bad, 4, key()).unwrap_err().is_config());
    }
}
