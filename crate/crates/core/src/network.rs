//! The two-layer ReLU model f(x) = (1/m) Σ a σ(wᵀx), its logistic loss and
//! the per-neuron SGD update.
//!
//! Per-neuron gradients carry no 1/m factor: a neuron moves by
//! η ℓ′ a σ′(wᵀx) x, as if it alone produced the output. Everything downstream
//! (rates, envelopes) is written in that normalisation.

use crate::distributions::{LabeledSample, MU1, MU2};
use crate::error::{Error, Result};
use crate::rng::StreamKey;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub d: usize,
    pub m: usize,
    pub theta: f64,
    pub eta: f64,
    pub batch_size: usize,
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::Config(format!("d must be at least 2, got {}", self.d)));
        }
        if self.m < 4 {
            return Err(Error::Config(format!("m must be at least 4, got {}", self.m)));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::Config(format!("theta must be positive, got {}", self.theta)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be nonnegative, got {}", self.eta)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockLabel {
    B1Plus,
    B1Minus,
    B2Plus,
    B2Minus,
    None,
}

impl BlockLabel {
    pub const BLOCKS: [BlockLabel; 4] = [BlockLabel::B1Plus, BlockLabel::B1Minus, BlockLabel::B2Plus, BlockLabel::B2Minus];

    pub fn index(self) -> Option<usize> {
        match self {
            BlockLabel::B1Plus => Some(0),
            BlockLabel::B1Minus => Some(1),
            BlockLabel::B2Plus => Some(2),
            BlockLabel::B2Minus => Some(3),
            BlockLabel::None => None,
        }
    }

    /// Integer code used in snapshot tuples; 4 means "none".
    pub fn code(self) -> u8 {
        self.index().map_or(4, |i| i as u8)
    }

    pub fn from_code(c: u8) -> BlockLabel {
        match c {
            0 => BlockLabel::B1Plus,
            1 => BlockLabel::B1Minus,
            2 => BlockLabel::B2Plus,
            3 => BlockLabel::B2Minus,
            _ => BlockLabel::None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BlockLabel::B1Plus => "B1plus",
            BlockLabel::B1Minus => "B1minus",
            BlockLabel::B2Plus => "B2plus",
            BlockLabel::B2Minus => "B2minus",
            BlockLabel::None => "none",
        }
    }
}

/// Block membership from the sign of `a` and of the matching μ-correlation.
pub fn assign_block(w: &[f64], a: f64) -> BlockLabel {
    let c1 = MU1[0] * w[0] + MU1[1] * w[1];
    let c2 = MU2[0] * w[0] + MU2[1] * w[1];
    if a > 0.0 {
        if c1 > 0.0 {
            BlockLabel::B1Plus
        } else if c1 < 0.0 {
            BlockLabel::B1Minus
        } else {
            BlockLabel::None
        }
    } else if a < 0.0 {
        if c2 > 0.0 {
            BlockLabel::B2Plus
        } else if c2 < 0.0 {
            BlockLabel::B2Minus
        } else {
            BlockLabel::None
        }
    } else {
        BlockLabel::None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub w: Vec<f64>,
    pub a: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronState {
    pub w: Vec<f64>,
    pub a: f64,
    pub block: BlockLabel,
    pub initial: Option<InitialState>,
}

impl NeuronState {
    /// A neuron whose current state is also its initial state.
    pub fn fresh(w: Vec<f64>, a: f64) -> Self {
        let block = assign_block(&w, a);
        let initial = Some(InitialState { w: w.clone(), a });
        NeuronState { w, a, block, initial }
    }

    pub fn preact(&self, x: &[f64]) -> f64 {
        dot(&self.w, x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub neurons: Vec<NeuronState>,
    pub step: u64,
    pub hyper: Hyper,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeuronGrad {
    pub w: Vec<f64>,
    pub a: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub neurons: Vec<NeuronGrad>,
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

pub fn relu(u: f64) -> f64 {
    if u > 0.0 {
        u
    } else {
        0.0
    }
}

/// σ′ with σ′(0) = 0.
pub fn relu_prime(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else {
        0.0
    }
}

fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// 2 log(1 + e^{−yf}).
pub fn logistic_loss(f: f64, y: f64) -> f64 {
    2.0 * softplus(-y * f)
}

/// −2y e^{−yf} / (1 + e^{−yf}).
pub fn loss_derivative(f: f64, y: f64) -> f64 {
    -2.0 * y * sigmoid(-y * f)
}

impl NetworkState {
    pub fn init(hyper: Hyper, key: StreamKey) -> Result<Self> {
        hyper.validate()?;
        let neurons = crate::par::map_range(hyper.m, |j| {
            let mut rng = key.stream(j as u64);
            let mut w = vec![0.0; hyper.d];
            loop {
                crate::gauss::fill_normal(&mut rng, &mut w);
                let n = norm(&w);
                if n > 0.0 {
                    w.iter_mut().for_each(|v| *v *= hyper.theta / n);
                    break;
                }
            }
            let a = if rng.random::<bool>() { hyper.theta } else { -hyper.theta };
            NeuronState::fresh(w, a)
        });
        Ok(NetworkState { neurons, step: 0, hyper })
    }

    /// A network assembled from explicit neurons (toy models, tests).
    pub fn from_neurons(neurons: Vec<NeuronState>, hyper: Hyper) -> Result<Self> {
        if neurons.is_empty() {
            return Err(Error::Config("network needs at least one neuron".into()));
        }
        for n in &neurons {
            if n.w.len() != hyper.d {
                return Err(Error::DimensionMismatch { expected: hyper.d, got: n.w.len() });
            }
        }
        let hyper = Hyper { m: neurons.len(), ..hyper };
        Ok(NetworkState { neurons, step: 0, hyper })
    }

    pub fn m(&self) -> usize {
        self.neurons.len()
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let s: f64 = self.neurons.iter().map(|n| n.a * relu(n.preact(x))).sum();
        s / self.m() as f64
    }

    /// Output at the point z of the (e1, e2)-plane with zero perp part.
    pub fn forward_plane(&self, z: [f64; 2]) -> f64 {
        let s: f64 = self.neurons.iter().map(|n| n.a * relu(n.w[0] * z[0] + n.w[1] * z[1])).sum();
        s / self.m() as f64
    }

    pub fn batch_loss(&self, batch: &[LabeledSample]) -> f64 {
        let s: f64 = batch.iter().map(|s| logistic_loss(self.forward(&s.x), s.y)).sum();
        s / batch.len() as f64
    }

    /// Per-neuron batch gradients (1/V) Σ ℓ′ a σ′(wᵀx) x and (1/V) Σ ℓ′ σ(wᵀx),
    /// with ℓ′ from the full network output. Also returns the batch loss.
    pub fn batch_gradients_with_loss(&self, batch: &[LabeledSample]) -> Result<(GradientSet, f64)> {
        if batch.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let d = self.hyper.d;
        if let Some(s) = batch.iter().find(|s| s.x.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: s.x.len() });
        }
        let m = self.m();
        let rows: Vec<(Vec<f64>, f64, f64)> = crate::par::map_range(batch.len(), |j| {
            let s = &batch[j];
            let pre: Vec<f64> = self.neurons.iter().map(|n| n.preact(&s.x)).collect();
            let f = self.neurons.iter().zip(&pre).map(|(n, &u)| n.a * relu(u)).sum::<f64>() / m as f64;
            (pre, loss_derivative(f, s.y), logistic_loss(f, s.y))
        });
        let inv_v = 1.0 / batch.len() as f64;
        let loss = rows.iter().map(|r| r.2).sum::<f64>() * inv_v;
        let mut neurons: Vec<NeuronGrad> = (0..m).map(|_| NeuronGrad { w: vec![0.0; d], a: 0.0 }).collect();
        crate::par::for_each_mut(&mut neurons, |i, g| {
            for (s, (pre, lp, _)) in batch.iter().zip(&rows) {
                let u = pre[i];
                if u > 0.0 {
                    for (gw, xv) in g.w.iter_mut().zip(&s.x) {
                        *gw += lp * xv;
                    }
                    g.a += lp * u;
                }
            }
            let scale = self.neurons[i].a * inv_v;
            g.w.iter_mut().for_each(|v| *v *= scale);
            g.a *= inv_v;
        });
        Ok((GradientSet { neurons }, loss))
    }

    pub fn batch_gradients(&self, batch: &[LabeledSample]) -> Result<GradientSet> {
        self.batch_gradients_with_loss(batch).map(|(g, _)| g)
    }

    /// Simultaneous update of every neuron from one gradient set.
    pub fn sgd_step(&mut self, grads: &GradientSet, eta: f64) {
        for (n, g) in self.neurons.iter_mut().zip(&grads.neurons) {
            for (w, gw) in n.w.iter_mut().zip(&g.w) {
                *w -= eta * gw;
            }
            n.a -= eta * g.a;
        }
        self.step += 1;
    }
}

/// |wᵀ∇_w − a ∇_a| relative to the natural size of either side.
pub fn identity_residual(n: &NeuronState, g: &NeuronGrad) -> f64 {
    let lhs = dot(&n.w, &g.w);
    let rhs = n.a * g.a;
    let scale = norm(&n.w) * norm(&g.w) + (n.a * g.a).abs();
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs).abs() / scale
    }
}

pub fn max_identity_residual(net: &NetworkState, grads: &GradientSet) -> f64 {
    net.neurons.iter().zip(&grads.neurons).map(|(n, g)| identity_residual(n, g)).fold(0.0, f64::max)
}
