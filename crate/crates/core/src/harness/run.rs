//! The training loop and its on-disk record.

use super::config::{ExperimentConfig, StepSource};
use super::eval::{draw_test_set, score, TestMetrics};
use crate::blockstats::{block_masses, is_heavy, signal_heavy_check, BlockStats, Parts};
use crate::distributions::{sample_batch, LabeledSample, MU1, MU2};
use crate::error::{Error, Result};
use crate::network::{max_identity_residual, NetworkState};
use crate::oracle::estimate_g_mu;
use crate::rng::StreamKey;
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub const METRICS_HEADER: &str = "step,train_loss_batch,test_loss,test_acc,test_acc_offboundary,N1plus,N1minus,N2plus,N2minus,N_avg,U,R,g_mu_est,g_mu_stderr,heavy_fraction";
pub const BLOCKS_HEADER: &str = "step,N1plus,N1minus,N2plus,N2minus,N_avg,oracle_mass,U,R,total_mass";
pub const SNAPSHOT_SCHEMA: u32 = 1;
pub const INCOMPLETE_MARKER: &str = "run.incomplete";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub train_loss_batch: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    pub test_acc_offboundary: f64,
    pub n1_plus: f64,
    pub n1_minus: f64,
    pub n2_plus: f64,
    pub n2_minus: f64,
    pub n_avg: f64,
    pub u: f64,
    pub r: f64,
    pub g_mu_est: f64,
    pub g_mu_stderr: f64,
    pub heavy_fraction: f64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.train_loss_batch,
            self.test_loss,
            self.test_acc,
            self.test_acc_offboundary,
            self.n1_plus,
            self.n1_minus,
            self.n2_plus,
            self.n2_minus,
            self.n_avg,
            self.u,
            self.r,
            self.g_mu_est,
            self.g_mu_stderr,
            self.heavy_fraction
        )
    }

    pub fn from_csv(line: &str) -> Option<MetricsRow> {
        let v: Vec<&str> = line.trim().split(',').collect();
        if v.len() != 15 {
            return None;
        }
        let f = |i: usize| v[i].parse::<f64>().ok();
        Some(MetricsRow {
            step: v[0].parse().ok()?,
            train_loss_batch: f(1)?,
            test_loss: f(2)?,
            test_acc: f(3)?,
            test_acc_offboundary: f(4)?,
            n1_plus: f(5)?,
            n1_minus: f(6)?,
            n2_plus: f(7)?,
            n2_minus: f(8)?,
            n_avg: f(9)?,
            u: f(10)?,
            r: f(11)?,
            g_mu_est: f(12)?,
            g_mu_stderr: f(13)?,
            heavy_fraction: f(14)?,
        })
    }

    pub fn masses(&self) -> [f64; 4] {
        [self.n1_plus, self.n1_minus, self.n2_plus, self.n2_minus]
    }
}

/// Per-neuron tuple: w·e1, w·e2, w·μ1, w·μ2, ‖w_perp‖, a, block code, is_heavy.
pub type NeuronTuple = [f64; 8];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub schema_version: u32,
    pub step: u64,
    pub neurons: Vec<NeuronTuple>,
}

pub fn snapshot(net: &NetworkState, zeta_prime: f64) -> SnapshotRecord {
    let neurons = net
        .neurons
        .iter()
        .map(|n| {
            let p = Parts::of(&n.w, n.a);
            let (w1, w2) = (n.w[0], n.w[1]);
            [
                w1,
                w2,
                w1 * MU1[0] + w2 * MU1[1],
                w1 * MU2[0] + w2 * MU2[1],
                p.perp,
                n.a,
                n.block.code() as f64,
                is_heavy(&p, zeta_prime) as u8 as f64,
            ]
        })
        .collect();
    SnapshotRecord { schema_version: SNAPSHOT_SCHEMA, step: net.step, neurons }
}

/// One row of blocks_trace.csv.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockTrace {
    pub step: u64,
    pub masses: [f64; 4],
    pub n_avg: f64,
    pub oracle_mass: f64,
    pub u: f64,
    pub r: f64,
    pub total_mass: f64,
}

impl BlockTrace {
    pub fn of(b: &BlockStats) -> Self {
        BlockTrace {
            step: b.step,
            masses: b.masses(),
            n_avg: b.n_avg,
            oracle_mass: b.oracle_mass,
            u: b.u,
            r: b.r,
            total_mass: b.total_mass,
        }
    }

    pub fn to_csv(&self) -> String {
        let m = self.masses;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.step, m[0], m[1], m[2], m[3], self.n_avg, self.oracle_mass, self.u, self.r, self.total_mass
        )
    }

    pub fn from_csv(line: &str) -> Option<Self> {
        let v: Vec<f64> = line.trim().split(',').map(|s| s.parse::<f64>()).collect::<std::result::Result<_, _>>().ok()?;
        if v.len() != 10 {
            return None;
        }
        Some(BlockTrace {
            step: v[0] as u64,
            masses: [v[1], v[2], v[3], v[4]],
            n_avg: v[5],
            oracle_mass: v[6],
            u: v[7],
            r: v[8],
            total_mass: v[9],
        })
    }
}

/// 1 − |mean e^{4iφ}| over heavy neurons, φ the angle of (w·e1, w·e2): zero
/// when every heavy neuron sits exactly on one of ±μ1, ±μ2.
pub fn angular_dispersion(s: &SnapshotRecord) -> Option<f64> {
    let heavy: Vec<&NeuronTuple> = s.neurons.iter().filter(|t| t[7] > 0.5).collect();
    if heavy.is_empty() {
        return None;
    }
    let (mut c, mut sn) = (0.0, 0.0);
    for t in &heavy {
        // shift by π/4 so the four μ directions map to the same phase
        let phi = 4.0 * t[1].atan2(t[0]) + std::f64::consts::PI;
        c += phi.cos();
        sn += phi.sin();
    }
    let k = heavy.len() as f64;
    Some(1.0 - (c * c + sn * sn).sqrt() / k)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub steps: u64,
    pub step_source: String,
    pub final_metrics: MetricsRow,
    pub final_eval: TestMetrics,
    /// First step with N_avg ≥ multiple·log log d, if reached.
    pub stopping_step: Option<u64>,
    pub stopping_threshold: f64,
    pub identity_residual_max: f64,
    pub audited_steps: u64,
    pub balance_violations_final: usize,
    pub heavy_conditions_final: [bool; 3],
    pub angular_dispersion_final: Option<f64>,
    pub train_samples: u64,
    pub eval_samples: u64,
    pub u_max_after_100: f64,
}

/// Training state advanced one step at a time; `run_experiment` drives it
/// and the browser demo calls it directly.
pub struct Trainer {
    pub cfg: ExperimentConfig,
    pub net: NetworkState,
    root: StreamKey,
    test: Vec<LabeledSample>,
    pub steps: u64,
    pub last_loss: f64,
    pub identity_max: f64,
    pub audited: u64,
    pub train_samples: u64,
    pub stopping_step: Option<u64>,
    pub u_max_after_100: f64,
}

impl Trainer {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let root = StreamKey::root(cfg.seed);
        let net = NetworkState::init(cfg.hyper(), root.child("init"))?;
        let test = draw_test_set(&cfg.input, &cfg.label, cfg.eval_n, root.child("eval"))?;
        let steps = cfg.steps().0;
        let mut t = Trainer {
            cfg,
            net,
            root,
            test,
            steps,
            last_loss: f64::NAN,
            identity_max: 0.0,
            audited: 0,
            train_samples: 0,
            stopping_step: None,
            u_max_after_100: 0.0,
        };
        let b = t.blocks()?;
        t.track(&b);
        Ok(t)
    }

    pub fn step(&self) -> u64 {
        self.net.step
    }

    pub fn done(&self) -> bool {
        self.net.step >= self.steps
    }

    pub fn blocks(&self) -> Result<BlockStats> {
        block_masses(&self.net)
    }

    pub fn stopping_threshold(&self) -> f64 {
        self.cfg.loglog_multiple * (self.cfg.d as f64).ln().ln()
    }

    fn track(&mut self, b: &BlockStats) {
        if self.stopping_step.is_none() && b.n_avg >= self.stopping_threshold() {
            self.stopping_step = Some(b.step);
        }
        if b.step >= 100 {
            self.u_max_after_100 = self.u_max_after_100.max(b.u);
        }
    }

    /// Loss of the next training batch at the current state, without updating.
    pub fn next_batch_loss(&mut self) -> Result<f64> {
        let batch = sample_batch(&self.cfg.input, &self.cfg.label, self.cfg.batch_size, self.root.child("train").index(self.net.step))?;
        Ok(self.net.batch_loss(&batch))
    }

    /// One SGD step on a fresh batch; returns the post-step block statistics.
    pub fn advance(&mut self) -> Result<BlockStats> {
        let batch = sample_batch(&self.cfg.input, &self.cfg.label, self.cfg.batch_size, self.root.child("train").index(self.net.step))?;
        let (g, loss) = self.net.batch_gradients_with_loss(&batch)?;
        self.identity_max = self.identity_max.max(max_identity_residual(&self.net, &g));
        self.audited += 1;
        self.last_loss = loss;
        self.train_samples += batch.len() as u64;
        self.net.sgd_step(&g, self.cfg.eta);
        let b = self.blocks()?;
        self.track(&b);
        Ok(b)
    }

    pub fn evaluate(&self) -> TestMetrics {
        score(&self.net, &self.test, self.cfg.eps_boundary)
    }

    pub fn metrics_row(&mut self) -> Result<MetricsRow> {
        let b = self.blocks()?;
        if self.last_loss.is_nan() {
            self.last_loss = self.next_batch_loss()?;
        }
        let t = self.evaluate();
        let g = estimate_g_mu(b.oracle_mass, self.cfg.g_mu_samples, self.root.child("g_mu"))?;
        let h = signal_heavy_check(&self.net, self.cfg.heavy_zeta, self.cfg.heavy_h, b.n_avg);
        Ok(MetricsRow {
            step: self.net.step,
            train_loss_batch: self.last_loss,
            test_loss: t.test_loss,
            test_acc: t.test_acc,
            test_acc_offboundary: t.test_acc_offboundary,
            n1_plus: b.n1_plus,
            n1_minus: b.n1_minus,
            n2_plus: b.n2_plus,
            n2_minus: b.n2_minus,
            n_avg: b.n_avg,
            u: b.u,
            r: b.r,
            g_mu_est: g.value,
            g_mu_stderr: g.std_err,
            heavy_fraction: h.heavy_fraction(self.net.m()),
        })
    }

    pub fn snapshot(&self) -> SnapshotRecord {
        snapshot(&self.net, self.cfg.heavy_zeta)
    }

    pub fn eval_samples(&self) -> u64 {
        self.test.len() as u64
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub metrics: Vec<MetricsRow>,
    pub snapshots: Vec<SnapshotRecord>,
    pub summary: RunSummary,
}

struct Sink {
    dir: PathBuf,
    metrics: BufWriter<File>,
    blocks: BufWriter<File>,
    snaps: BufWriter<File>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

impl Sink {
    fn open(dir: &Path, cfg: &ExperimentConfig) -> Result<Sink> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let marker = dir.join(INCOMPLETE_MARKER);
        fs::write(&marker, "run started; files below are a valid prefix\n").map_err(|e| Error::io(&marker, e))?;
        let resolved = dir.join("config.resolved");
        fs::write(&resolved, cfg.resolved()).map_err(|e| Error::io(&resolved, e))?;
        let _ = fs::remove_file(dir.join("summary.json"));
        let mut s = Sink {
            dir: dir.to_path_buf(),
            metrics: create(&dir.join("metrics.csv"))?,
            blocks: create(&dir.join("blocks_trace.csv"))?,
            snaps: create(&dir.join("snapshots.jsonl"))?,
        };
        s.line(Which::Metrics, METRICS_HEADER)?;
        s.line(Which::Blocks, BLOCKS_HEADER)?;
        Ok(s)
    }

    fn line(&mut self, which: Which, text: &str) -> Result<()> {
        let (w, name) = match which {
            Which::Metrics => (&mut self.metrics, "metrics.csv"),
            Which::Blocks => (&mut self.blocks, "blocks_trace.csv"),
            Which::Snaps => (&mut self.snaps, "snapshots.jsonl"),
        };
        let path = self.dir.join(name);
        writeln!(w, "{text}").map_err(|e| Error::io(&path, e))?;
        if !matches!(which, Which::Blocks) {
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    fn flush_all(&mut self) -> Result<()> {
        let dir = self.dir.clone();
        self.metrics.flush().map_err(|e| Error::io(dir.join("metrics.csv"), e))?;
        self.blocks.flush().map_err(|e| Error::io(dir.join("blocks_trace.csv"), e))?;
        self.snaps.flush().map_err(|e| Error::io(dir.join("snapshots.jsonl"), e))
    }
}

#[derive(Clone, Copy)]
enum Which {
    Metrics,
    Blocks,
    Snaps,
}

/// Trains per `cfg`, writing into `cfg.run_dir()`. `observe` sees every metrics row.
pub fn run_experiment_with(cfg: &ExperimentConfig, mut observe: impl FnMut(&MetricsRow)) -> Result<RunOutput> {
    let dir = cfg.run_dir();
    let mut tr = Trainer::new(cfg.clone())?;
    let mut sink = Sink::open(&dir, cfg)?;
    let (mut metrics, mut snapshots) = (Vec::new(), Vec::new());
    sink.line(Which::Blocks, &BlockTrace::of(&tr.blocks()?).to_csv())?;
    loop {
        let t = tr.step();
        if t % cfg.metrics_every == 0 || tr.done() {
            let row = tr.metrics_row()?;
            sink.line(Which::Metrics, &row.to_csv())?;
            sink.flush_all()?;
            observe(&row);
            metrics.push(row);
        }
        if t % cfg.snapshot_every == 0 || tr.done() {
            let s = tr.snapshot();
            sink.line(Which::Snaps, &serde_json::to_string(&s).expect("snapshot serialises"))?;
            snapshots.push(s);
        }
        if tr.done() {
            break;
        }
        let b = tr.advance()?;
        sink.line(Which::Blocks, &BlockTrace::of(&b).to_csv())?;
    }
    sink.flush_all()?;
    let final_eval = tr.evaluate();
    let h = signal_heavy_check(&tr.net, cfg.heavy_zeta, cfg.heavy_h, tr.blocks()?.n_avg);
    let (steps, src) = cfg.steps();
    let summary = RunSummary {
        name: cfg.name.clone(),
        steps,
        step_source: match src {
            StepSource::MaxSteps => "max_steps".into(),
            StepSource::TotalSamples => "total_samples".into(),
        },
        final_metrics: metrics.last().cloned().expect("at least one row"),
        final_eval,
        stopping_step: tr.stopping_step,
        stopping_threshold: tr.stopping_threshold(),
        identity_residual_max: tr.identity_max,
        audited_steps: tr.audited,
        balance_violations_final: h.balance_violations,
        heavy_conditions_final: [h.cond1_ok, h.cond2_ok, h.cond3_ok],
        angular_dispersion_final: snapshots.last().and_then(angular_dispersion),
        train_samples: tr.train_samples,
        eval_samples: tr.eval_samples(),
        u_max_after_100: tr.u_max_after_100,
    };
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary).expect("summary serialises")).map_err(|e| Error::io(&path, e))?;
    let marker = dir.join(INCOMPLETE_MARKER);
    fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    Ok(RunOutput { dir, metrics, snapshots, summary })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    run_experiment_with(cfg, |_| {})
}
