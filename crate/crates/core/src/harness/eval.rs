//! Test-set evaluation.

use crate::distributions::{boundary_margin, sample_batch, InputSpec, LabelSpec, LabeledSample};
use crate::error::{Error, Result};
use crate::network::{logistic_loss, NetworkState};
use crate::oracle::OracleModel;
use crate::rng::StreamKey;
use serde::{Deserialize, Serialize};

pub trait Predictor: Sync {
    fn predict(&self, x: &[f64]) -> f64;
}

impl Predictor for NetworkState {
    fn predict(&self, x: &[f64]) -> f64 {
        self.forward(x)
    }
}

impl Predictor for OracleModel {
    fn predict(&self, x: &[f64]) -> f64 {
        self.forward([x[0], x[1]])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestMetrics {
    pub test_loss: f64,
    pub test_acc: f64,
    pub test_acc_offboundary: f64,
    /// Fraction of misclassified points inside C_ε; 1.0 when nothing is misclassified.
    pub err_concentration: f64,
    pub n: usize,
    pub n_offboundary: usize,
    pub n_errors: usize,
}

pub const MIN_EVAL: usize = 1000;

/// Held-out test set for a run (drawn once, from its own stream).
pub fn draw_test_set(input: &InputSpec, label: &LabelSpec, n: usize, key: StreamKey) -> Result<Vec<LabeledSample>> {
    if n < MIN_EVAL {
        return Err(Error::TooFewSamples { got: n, min: MIN_EVAL });
    }
    sample_batch(input, label, n, key)
}

pub fn score<P: Predictor + ?Sized>(p: &P, test: &[LabeledSample], eps: f64) -> TestMetrics {
    let outs: Vec<f64> = crate::par::map_range(test.len(), |j| p.predict(&test[j].x));
    let (mut loss, mut correct, mut off, mut off_correct, mut errors, mut errors_in) = (0.0, 0, 0, 0, 0, 0);
    for (s, f) in test.iter().zip(&outs) {
        loss += logistic_loss(*f, s.y);
        let ok = f * s.y > 0.0;
        let outside = boundary_margin(s.z) > eps;
        correct += ok as usize;
        if outside {
            off += 1;
            off_correct += ok as usize;
        }
        if !ok {
            errors += 1;
            errors_in += (!outside) as usize;
        }
    }
    let n = test.len();
    TestMetrics {
        test_loss: loss / n as f64,
        test_acc: correct as f64 / n as f64,
        test_acc_offboundary: if off == 0 { f64::NAN } else { off_correct as f64 / off as f64 },
        err_concentration: if errors == 0 { 1.0 } else { errors_in as f64 / errors as f64 },
        n,
        n_offboundary: off,
        n_errors: errors,
    }
}

/// Scores `p` on n fresh samples drawn under `key`.
pub fn eval_test_metrics<P: Predictor + ?Sized>(
    p: &P,
    input: &InputSpec,
    label: &LabelSpec,
    n: usize,
    eps: f64,
    key: StreamKey,
) -> Result<TestMetrics> {
    let test = draw_test_set(input, label, n, key)?;
    Ok(score(p, &test, eps))
}
