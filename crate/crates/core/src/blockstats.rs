//! Signal decomposition, block masses, unbalance, residual mass, the
//! signal-heavy test, and the Phase-I control envelopes and neuron predicates.

use crate::distributions::{MU1, MU2};
use crate::error::{Error, Result};
use crate::network::{norm, BlockLabel, NetworkState, NeuronState};
use serde::{Deserialize, Serialize};

/// √2 π^{−3/2}, the Phase-Ia growth rate of the signal component.
pub const TAU: f64 = 0.253_974_543_736_963_9;

#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub w_sig: [f64; 2],
    pub w_opp: [f64; 2],
    pub w_perp: Vec<f64>,
    pub sig_norm: f64,
    pub opp_norm: f64,
    pub perp_norm: f64,
}

/// Norms of the decomposition without materialising the vectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Parts {
    pub sig: f64,
    pub opp: f64,
    pub perp: f64,
    /// μ1ᵀw and μ2ᵀw.
    pub c1: f64,
    pub c2: f64,
}

impl Parts {
    pub fn of(w: &[f64], a: f64) -> Parts {
        let c1 = MU1[0] * w[0] + MU1[1] * w[1];
        let c2 = MU2[0] * w[0] + MU2[1] * w[1];
        let perp = w[2..].iter().map(|v| v * v).sum::<f64>().sqrt();
        let (sig, opp) = if a >= 0.0 { (c1.abs(), c2.abs()) } else { (c2.abs(), c1.abs()) };
        Parts { sig, opp, perp, c1, c2 }
    }

    /// Signed coordinate of w along its signal direction.
    pub fn sig_coord(&self, a: f64) -> f64 {
        if a >= 0.0 {
            self.c1
        } else {
            self.c2
        }
    }

    pub fn norm(&self) -> f64 {
        (self.sig * self.sig + self.opp * self.opp + self.perp * self.perp).sqrt()
    }
}

pub fn decompose(w: &[f64], a: f64) -> Decomposition {
    let c1 = MU1[0] * w[0] + MU1[1] * w[1];
    let c2 = MU2[0] * w[0] + MU2[1] * w[1];
    let p1 = [c1 * MU1[0], c1 * MU1[1]];
    let p2 = [c2 * MU2[0], c2 * MU2[1]];
    let (w_sig, w_opp) = if a >= 0.0 { (p1, p2) } else { (p2, p1) };
    let mut w_perp = w.to_vec();
    w_perp[0] = 0.0;
    w_perp[1] = 0.0;
    let parts = Parts::of(w, a);
    Decomposition { w_sig, w_opp, w_perp, sig_norm: parts.sig, opp_norm: parts.opp, perp_norm: parts.perp }
}

impl Decomposition {
    pub fn recompose(&self) -> Vec<f64> {
        let mut w = self.w_perp.clone();
        w[0] = self.w_sig[0] + self.w_opp[0];
        w[1] = self.w_sig[1] + self.w_opp[1];
        w
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub step: u64,
    pub n1_plus: f64,
    pub n1_minus: f64,
    pub n2_plus: f64,
    pub n2_minus: f64,
    pub n_avg: f64,
    pub u: f64,
    /// Σ over all neurons of |a|‖w_perp‖.
    pub r: f64,
    /// Σ over all neurons of |a|‖w‖.
    pub total_mass: f64,
    /// Σ over labelled neurons of |a|‖w_sig‖ divided by 4m: the mass of the
    /// balanced four-direction model whose output matches (1/m) Σ a σ(wᵀz).
    pub oracle_mass: f64,
    pub heavy_fraction: Option<f64>,
}

impl BlockStats {
    pub fn masses(&self) -> [f64; 4] {
        [self.n1_plus, self.n1_minus, self.n2_plus, self.n2_minus]
    }
}

/// max over ordered pairs of distinct blocks of |N_i/N_j − 1|.
pub fn unbalance(masses: [f64; 4]) -> f64 {
    let mut u: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                let r = if masses[j] == 0.0 {
                    if masses[i] == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    (masses[i] / masses[j] - 1.0).abs()
                };
                u = u.max(r);
            }
        }
    }
    u
}

pub fn block_masses(net: &NetworkState) -> Result<BlockStats> {
    let mut sums = [0.0; 4];
    let mut counts = [0usize; 4];
    let (mut r, mut total) = (0.0, 0.0);
    for n in &net.neurons {
        let p = Parts::of(&n.w, n.a);
        let aa = n.a.abs();
        r += aa * p.perp;
        total += aa * p.norm();
        if let Some(i) = n.block.index() {
            sums[i] += aa * p.sig;
            counts[i] += 1;
        }
    }
    for (i, c) in counts.iter().enumerate() {
        if *c == 0 {
            return Err(Error::DegenerateInit(BlockLabel::BLOCKS[i].name()));
        }
    }
    let m = [sums[0] / counts[0] as f64, sums[1] / counts[1] as f64, sums[2] / counts[2] as f64, sums[3] / counts[3] as f64];
    Ok(BlockStats {
        step: net.step,
        n1_plus: m[0],
        n1_minus: m[1],
        n2_plus: m[2],
        n2_minus: m[3],
        n_avg: (m[0] + m[1] + m[2] + m[3]) / 4.0,
        u: unbalance(m),
        r,
        total_mass: total,
        oracle_mass: sums.iter().sum::<f64>() / (4.0 * net.m() as f64),
        heavy_fraction: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeavyReport {
    pub heavy_set: Vec<usize>,
    pub cond1_ok: bool,
    pub cond2_ok: bool,
    pub cond3_ok: bool,
    pub zeta_prime: f64,
    pub h: f64,
    /// (1/m) Σ over non-heavy neurons of ‖w‖².
    pub non_heavy_energy: f64,
    pub layer_gap: f64,
    pub balance_violations: usize,
}

impl HeavyReport {
    pub fn heavy_fraction(&self, m: usize) -> f64 {
        self.heavy_set.len() as f64 / m as f64
    }
}

pub fn is_heavy(p: &Parts, zeta_prime: f64) -> bool {
    p.perp + p.opp <= zeta_prime * p.sig
}

/// The three signal-heavy conditions. Condition 2 compares the non-heavy
/// energy (1/m) Σ_{∉S} ‖w‖² with ζ′ times the average block mass.
pub fn signal_heavy_check(net: &NetworkState, zeta_prime: f64, h: f64, n_avg: f64) -> HeavyReport {
    let m = net.m() as f64;
    let mut heavy_set = Vec::new();
    let (mut non_heavy, mut w2, mut a2) = (0.0, 0.0, 0.0);
    let mut balance_violations = 0;
    for (i, n) in net.neurons.iter().enumerate() {
        let p = Parts::of(&n.w, n.a);
        let nw2 = p.norm().powi(2);
        if is_heavy(&p, zeta_prime) {
            heavy_set.push(i);
        } else {
            non_heavy += nw2;
        }
        w2 += nw2;
        a2 += n.a * n.a;
        if n.a.abs() > norm(&n.w) * (1.0 + 1e-12) {
            balance_violations += 1;
        }
    }
    let non_heavy_energy = non_heavy / m;
    let layer_gap = (w2 - a2) / m;
    HeavyReport {
        cond1_ok: !heavy_set.is_empty(),
        cond2_ok: non_heavy_energy <= zeta_prime * n_avg,
        cond3_ok: layer_gap <= zeta_prime * h && balance_violations == 0,
        heavy_set,
        zeta_prime,
        h,
        non_heavy_energy,
        layer_gap,
        balance_violations,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub theta: f64,
    pub eta: f64,
    pub d: usize,
    pub c_zeta: f64,
    pub c1: f64,
    pub c_b: f64,
}

impl EnvelopeParams {
    pub fn new(theta: f64, eta: f64, d: usize) -> Self {
        EnvelopeParams { theta, eta, d, c_zeta: 3.0, c1: 4.0, c_b: 0.1 }
    }

    pub fn log_d(&self) -> f64 {
        (self.d as f64).ln()
    }

    pub fn zeta(&self) -> f64 {
        self.log_d().powf(-self.c_zeta)
    }

    fn rate_b(&self) -> f64 {
        2.0 * self.eta * TAU * (1.0 + self.zeta())
    }

    fn rate_s(&self) -> f64 {
        2.0 * self.eta * TAU * (1.0 - self.zeta())
    }

    /// Raw value of the Phase-Ia length formula before clamping at zero.
    pub fn t_a_raw(&self) -> f64 {
        let l = self.log_d();
        ((l + 2.0 * self.zeta().ln() - l.ln()) / self.rate_b().ln_1p()).floor()
    }

    pub fn t_a(&self) -> u64 {
        clamp_step(self.t_a_raw())
    }

    pub fn t_b(&self) -> u64 {
        let ta = self.t_a();
        let s2 = self.s2_at(ta);
        let z = self.zeta();
        let extra = ((self.theta * self.theta / (z * z) / s2).ln() / (self.c_b * self.eta).ln_1p()).floor();
        ta.saturating_add(clamp_step(extra))
    }

    fn s2_at(&self, t: u64) -> f64 {
        let base = self.theta * self.theta / self.d as f64;
        let ta = self.t_a();
        if t <= ta {
            base * (t as f64 * self.rate_s().ln_1p()).exp()
        } else {
            base * (ta as f64 * self.rate_s().ln_1p() + (t - ta) as f64 * (self.c_b * self.eta).ln_1p()).exp()
        }
    }

    fn b2_at(&self, t: u64) -> f64 {
        let base = self.c1 * self.log_d() * self.theta * self.theta / self.d as f64;
        let ta = self.t_a();
        if t <= ta {
            base * (t as f64 * self.rate_b().ln_1p()).exp()
        } else {
            base * (ta as f64 * self.rate_b().ln_1p() + (t - ta) as f64 * (4.0 * self.eta).ln_1p()).exp()
        }
    }

    fn q2_at(&self, t: u64) -> f64 {
        let base = self.c1 * self.log_d() * self.theta * self.theta / self.d as f64;
        base * (t as f64 * (50.0 * self.eta / self.log_d()).ln_1p()).exp()
    }
}

fn clamp_step(x: f64) -> u64 {
    if x.is_nan() || x <= 0.0 {
        0
    } else if x >= 1e18 {
        1_000_000_000_000_000_000
    } else {
        x as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelopes {
    pub b: f64,
    pub s: f64,
    pub q: f64,
}

pub fn compute_envelopes(params: &EnvelopeParams, t: u64) -> Envelopes {
    Envelopes { b: params.b2_at(t).sqrt(), s: params.s2_at(t).sqrt(), q: params.q2_at(t).sqrt() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronClass {
    Controlled,
    WeaklyControlled,
    StrongAndControlled,
    StrongAndWeak,
    Uncontrolled,
}

/// Free constants of the weakly-controlled layer-balance condition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyParams {
    pub env: EnvelopeParams,
    pub weak_c: f64,
    pub weak_zeta_prime: f64,
}

impl ClassifyParams {
    pub fn new(env: EnvelopeParams) -> Self {
        ClassifyParams { env, weak_c: 1.0, weak_zeta_prime: 0.1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diagnosis {
    pub controlled: [bool; 5],
    pub weak: [bool; 4],
    pub strong_signal: bool,
    pub class: NeuronClass,
}

const SLACK: f64 = 1e-12;

pub fn diagnose_neuron(n: &NeuronState, env: &Envelopes, t: u64, params: &ClassifyParams) -> Result<Diagnosis> {
    let init = n.initial.as_ref().ok_or(Error::MissingInitialState(0))?;
    let e = &params.env;
    let (theta, eta, zeta, ld) = (e.theta, e.eta, e.zeta(), e.log_d());
    let sqrt_d = (e.d as f64).sqrt();
    let tf = t as f64;
    let now = Parts::of(&n.w, n.a);
    let then = Parts::of(&init.w, init.a);
    let wnorm = norm(&n.w);
    let aa = n.a.abs();
    let floor = theta / (ld * sqrt_d);
    let up = 1.0 + SLACK;

    let drift: f64 = n.w[2..].iter().zip(&init.w[2..]).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
    let perp_inf = n.w[2..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let controlled = [
        now.sig <= then.sig.max(floor) * (1.0 + eta * (TAU + zeta)).powf(tf) * up,
        now.opp <= then.opp.max(floor) * (1.0 + eta * theta).powf(tf) * up,
        aa >= theta * (1.0 - tf * eta * zeta) / up && aa <= theta * (1.0 + tf * eta * zeta) * up && aa <= wnorm * up,
        drift <= theta * zeta.powf(0.25) * eta * tf * up + SLACK * theta,
        perp_inf <= theta * ld / sqrt_d * (1.0 + eta * theta).powf(tf) * up,
    ];
    let in_window = t >= e.t_a() && t <= e.t_b();
    let ta = e.t_a() as f64;
    let a2_floor =
        wnorm * wnorm - theta * theta * (zeta.sqrt() + params.weak_c * eta * eta * (tf - ta).max(0.0) * params.weak_zeta_prime.powi(2));
    let weak = [
        in_window && theta * zeta <= now.sig && now.sig <= env.b * up && env.b <= theta / zeta * ld,
        in_window && now.opp <= 3.0 * theta * env.b,
        in_window && wnorm * wnorm * up >= n.a * n.a && n.a * n.a >= a2_floor / up,
        in_window && now.perp <= 3.0 * theta,
    ];
    let is_controlled = controlled.iter().all(|&b| b);
    let is_weak = weak.iter().all(|&b| b);
    let same_side = now.sig_coord(n.a) * then.sig_coord(init.a) > 0.0 && (n.a >= 0.0) == (init.a >= 0.0);
    let strong_signal = same_side && now.sig * now.sig * up >= env.s * env.s;
    let class = match (is_controlled, is_weak, strong_signal) {
        (true, _, true) => NeuronClass::StrongAndControlled,
        (true, _, false) => NeuronClass::Controlled,
        (false, true, true) => NeuronClass::StrongAndWeak,
        (false, true, false) => NeuronClass::WeaklyControlled,
        _ => NeuronClass::Uncontrolled,
    };
    Ok(Diagnosis { controlled, weak, strong_signal, class })
}

pub fn classify_neuron(n: &NeuronState, env: &Envelopes, t: u64, params: &ClassifyParams) -> Result<NeuronClass> {
    diagnose_neuron(n, env, t, params).map(|d| d.class)
}
