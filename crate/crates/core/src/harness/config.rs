//! Flat `key = value` experiment configuration.

use crate::blockstats::EnvelopeParams;
use crate::distributions::{InputKind, InputSpec, LabelKind, LabelSpec};
use crate::error::{Error, Result};
use crate::network::Hyper;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Which of `max_steps` and `total_samples` fixed the step count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepSource {
    MaxSteps,
    TotalSamples,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub d: usize,
    pub m: usize,
    pub theta: f64,
    pub eta: f64,
    pub batch_size: usize,
    pub max_steps: Option<u64>,
    pub total_samples: Option<u64>,
    pub seed: u64,
    pub input: InputSpec,
    pub label: LabelSpec,
    pub snapshot_every: u64,
    pub metrics_every: u64,
    pub eval_n: usize,
    pub eps_boundary: f64,
    pub heavy_zeta: f64,
    pub heavy_h: f64,
    pub g_mu_samples: usize,
    pub output_dir: PathBuf,
    pub c_zeta: f64,
    pub c1: f64,
    pub c_b: f64,
    /// Stopping time is reported as the first step with N_avg ≥ this multiple of log log d.
    pub loglog_multiple: f64,
    /// Keys set explicitly (file or override), in the order they were applied.
    pub overrides: Vec<String>,
}

pub const KEYS: [&str; 31] = [
    "name",
    "d",
    "m",
    "theta",
    "eta",
    "batch_size",
    "max_steps",
    "total_samples",
    "seed",
    "input.kind",
    "input.aniso.lambda1",
    "input.aniso.lambda2",
    "input.mixture.mean_norm",
    "input.mixture.variance",
    "label.kind",
    "label.noise_rate",
    "snapshot_every",
    "metrics_every",
    "eval_n",
    "eps_boundary",
    "heavy.zeta",
    "heavy.h",
    "g_mu_samples",
    "output_dir",
    "envelope.c_zeta",
    "envelope.c1",
    "envelope.c_b",
    "stop.loglog_multiple",
    // aliases accepted on input, never written back
    "V",
    "M",
    "eps",
];

/// Raw key/value pairs before they are checked and typed.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    pub values: BTreeMap<String, String>,
    /// (key, origin) in application order.
    pub applied: Vec<(String, String)>,
}

fn canonical(key: &str) -> &str {
    match key {
        "V" => "batch_size",
        "M" => "total_samples",
        "eps" => "eps_boundary",
        k => k,
    }
}

impl RawConfig {
    pub fn set(&mut self, key: &str, value: &str, origin: &str) -> Result<()> {
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown config key '{key}' ({origin})")));
        }
        let key = canonical(key).to_string();
        self.values.insert(key.clone(), value.trim().to_string());
        self.applied.push((key, origin.to_string()));
        Ok(())
    }

    pub fn parse_str(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) =
                line.split_once('=').ok_or_else(|| Error::Config(format!("{origin}:{}: expected 'key = value', got '{line}'", i + 1)))?;
            self.set(k, v, &format!("{origin}:{}", i + 1))?;
        }
        Ok(())
    }

    /// `key=value` from the command line; applied after the file, last wins.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("override '{kv}' is not key=value")))?;
        self.set(k, v, "override")
    }
}

fn num<T: std::str::FromStr>(raw: &RawConfig, key: &str, default: T) -> Result<T> {
    match raw.values.get(key) {
        None => Ok(default),
        Some(v) => v.replace('_', "").parse::<T>().map_err(|_| Error::Config(format!("bad value '{v}' for key '{key}'"))),
    }
}

fn opt_num<T: std::str::FromStr>(raw: &RawConfig, key: &str) -> Result<Option<T>> {
    match raw.values.get(key).map(|s| s.as_str()) {
        None | Some("") | Some("none") => Ok(None),
        Some(v) => v.replace('_', "").parse::<T>().map(Some).map_err(|_| Error::Config(format!("bad value '{v}' for key '{key}'"))),
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::from_raw(&RawConfig::default()).expect("defaults are valid")
    }
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let d: usize = num(raw, "d", 120)?;
        let input_kind = match raw.values.get("input.kind").map(|s| s.as_str()).unwrap_or("isotropic_gaussian") {
            "isotropic_gaussian" | "gaussian" => InputKind::IsotropicGaussian,
            "anisotropic_gaussian" => InputKind::AnisotropicGaussian {
                lambda1: num(raw, "input.aniso.lambda1", 5.0)?,
                lambda2: num(raw, "input.aniso.lambda2", 1.0)?,
            },
            "uniform_cube" => InputKind::UniformCube,
            "xor_gaussian_mixture" => InputKind::XorGaussianMixture {
                mean_norm: num(raw, "input.mixture.mean_norm", (d as f64).sqrt())?,
                variance: num(raw, "input.mixture.variance", 1.0)?,
            },
            other => return Err(Error::Config(format!("unknown input.kind '{other}'"))),
        };
        let label_kind = match raw.values.get("label.kind").map(|s| s.as_str()).unwrap_or("xor") {
            "xor" => LabelKind::Xor,
            "sinusoid" => LabelKind::Sinusoid,
            other => return Err(Error::Config(format!("unknown label.kind '{other}'"))),
        };
        let mut max_steps = opt_num(raw, "max_steps")?;
        let total_samples = opt_num(raw, "total_samples")?;
        if max_steps.is_none() && total_samples.is_none() {
            max_steps = Some(10_000);
        }
        let cfg = ExperimentConfig {
            name: raw.values.get("name").cloned().unwrap_or_else(|| "run".into()),
            d,
            m: num(raw, "m", 100)?,
            theta: num(raw, "theta", 0.01)?,
            eta: num(raw, "eta", 0.05)?,
            batch_size: num(raw, "batch_size", 64)?,
            max_steps,
            total_samples,
            seed: num(raw, "seed", 1)?,
            input: InputSpec { kind: input_kind, d },
            label: LabelSpec { kind: label_kind, noise_rate: num(raw, "label.noise_rate", 0.0)? },
            snapshot_every: num(raw, "snapshot_every", 1000)?,
            metrics_every: num(raw, "metrics_every", 100)?,
            eval_n: num(raw, "eval_n", 10_000)?,
            eps_boundary: num(raw, "eps_boundary", 0.3)?,
            heavy_zeta: num(raw, "heavy.zeta", 0.3)?,
            heavy_h: num(raw, "heavy.h", 2.0)?,
            g_mu_samples: num(raw, "g_mu_samples", 100_000)?,
            output_dir: PathBuf::from(raw.values.get("output_dir").cloned().unwrap_or_else(|| "runs".into())),
            c_zeta: num(raw, "envelope.c_zeta", 3.0)?,
            c1: num(raw, "envelope.c1", 4.0)?,
            c_b: num(raw, "envelope.c_b", 0.1)?,
            loglog_multiple: num(raw, "stop.loglog_multiple", 1.0)?,
            overrides: raw.applied.iter().map(|(k, o)| format!("{k} ({o})")).collect(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        raw.parse_str(text, "config")?;
        ExperimentConfig::from_raw(&raw)
    }

    /// Reads `path` (if any), then applies `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut raw = RawConfig::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            raw.parse_str(&text, &p.display().to_string())?;
        }
        for o in overrides {
            raw.apply_override(o)?;
        }
        ExperimentConfig::from_raw(&raw)
    }

    pub fn hyper(&self) -> Hyper {
        Hyper { d: self.d, m: self.m, theta: self.theta, eta: self.eta, batch_size: self.batch_size }
    }

    pub fn envelope(&self) -> EnvelopeParams {
        EnvelopeParams { c_zeta: self.c_zeta, c1: self.c1, c_b: self.c_b, ..EnvelopeParams::new(self.theta, self.eta, self.d) }
    }

    /// Number of SGD steps and which setting fixed it. With both given the
    /// smaller one binds.
    pub fn steps(&self) -> (u64, StepSource) {
        let v = self.batch_size as u64;
        match (self.max_steps, self.total_samples) {
            (Some(s), None) => (s, StepSource::MaxSteps),
            (None, Some(mm)) => (mm / v, StepSource::TotalSamples),
            (Some(s), Some(mm)) if mm / v < s => (mm / v, StepSource::TotalSamples),
            (Some(s), Some(_)) => (s, StepSource::MaxSteps),
            (None, None) => unreachable!("defaults fill max_steps"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper().validate()?;
        self.input.validate()?;
        self.label.validate()?;
        let pos = |k: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{k} must be positive, got {v}")))
            }
        };
        pos("snapshot_every", self.snapshot_every as f64)?;
        pos("metrics_every", self.metrics_every as f64)?;
        pos("eps_boundary", self.eps_boundary)?;
        pos("heavy.zeta", self.heavy_zeta)?;
        pos("heavy.h", self.heavy_h)?;
        pos("stop.loglog_multiple", self.loglog_multiple)?;
        if self.eval_n < 1000 {
            return Err(Error::Config(format!("eval_n must be at least 1000, got {}", self.eval_n)));
        }
        if self.g_mu_samples < crate::oracle::MIN_MARGIN_SAMPLES {
            return Err(Error::Config(format!(
                "g_mu_samples must be at least {}, got {}",
                crate::oracle::MIN_MARGIN_SAMPLES,
                self.g_mu_samples
            )));
        }
        if self.d > 1 << 24 || self.m > 1 << 24 {
            return Err(Error::Config("d and m are capped at 2^24".into()));
        }
        if self.steps().0 == 0 {
            return Err(Error::Config("run resolves to zero steps".into()));
        }
        Ok(())
    }

    /// The fully resolved configuration in the input format, with the
    /// conventions and the binding step setting as comments.
    pub fn resolved(&self) -> String {
        let mut s = String::new();
        let (steps, src) = self.steps();
        let _ = writeln!(s, "# resolved configuration");
        let _ = writeln!(s, "# f(x) = (1/m) sum a relu(w.x); loss 2 log(1 + exp(-y f)); per-neuron gradients without the 1/m factor");
        let _ = writeln!(s, "# mu1 = (e1 - e2)/sqrt2 carries y = +1, mu2 = (e1 + e2)/sqrt2 carries y = -1");
        let _ = writeln!(
            s,
            "# steps = {steps} ({})",
            match src {
                StepSource::MaxSteps => "bound by max_steps".to_string(),
                StepSource::TotalSamples =>
                    format!("bound by total_samples / batch_size = {} / {}", self.total_samples.unwrap_or(0), self.batch_size),
            }
        );
        for o in &self.overrides {
            let _ = writeln!(s, "# set: {o}");
        }
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "d = {}", self.d);
        let _ = writeln!(s, "m = {}", self.m);
        let _ = writeln!(s, "theta = {}", self.theta);
        let _ = writeln!(s, "eta = {}", self.eta);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        match self.max_steps {
            Some(v) => writeln!(s, "max_steps = {v}"),
            None => writeln!(s, "max_steps = none"),
        }
        .ok();
        match self.total_samples {
            Some(v) => writeln!(s, "total_samples = {v}"),
            None => writeln!(s, "total_samples = none"),
        }
        .ok();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "input.kind = {}", self.input.kind.name());
        match self.input.kind {
            InputKind::AnisotropicGaussian { lambda1, lambda2 } => {
                let _ = writeln!(s, "input.aniso.lambda1 = {lambda1}");
                let _ = writeln!(s, "input.aniso.lambda2 = {lambda2}");
            }
            InputKind::XorGaussianMixture { mean_norm, variance } => {
                let _ = writeln!(s, "input.mixture.mean_norm = {mean_norm}");
                let _ = writeln!(s, "input.mixture.variance = {variance}");
            }
            _ => {}
        }
        let _ = writeln!(s, "label.kind = {}", self.label.kind.name());
        let _ = writeln!(s, "label.noise_rate = {}", self.label.noise_rate);
        let _ = writeln!(s, "snapshot_every = {}", self.snapshot_every);
        let _ = writeln!(s, "metrics_every = {}", self.metrics_every);
        let _ = writeln!(s, "eval_n = {}", self.eval_n);
        let _ = writeln!(s, "eps_boundary = {}", self.eps_boundary);
        let _ = writeln!(s, "heavy.zeta = {}", self.heavy_zeta);
        let _ = writeln!(s, "heavy.h = {}", self.heavy_h);
        let _ = writeln!(s, "g_mu_samples = {}", self.g_mu_samples);
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        let _ = writeln!(s, "envelope.c_zeta = {}", self.c_zeta);
        let _ = writeln!(s, "envelope.c1 = {}", self.c1);
        let _ = writeln!(s, "envelope.c_b = {}", self.c_b);
        let _ = writeln!(s, "stop.loglog_multiple = {}", self.loglog_multiple);
        s
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_run() {
        let c = ExperimentConfig::default();
        assert_eq!((c.d, c.m, c.batch_size, c.seed), (120, 100, 64, 1));
        assert_eq!((c.theta, c.eta), (0.01, 0.05));
        assert_eq!(c.steps(), (10_000, StepSource::MaxSteps));
    }

    #[test]
    fn comments_dotted_keys_and_last_wins() {
        let mut raw = RawConfig::default();
        raw.parse_str("# header\nd = 40  # inline\ninput.kind = anisotropic_gaussian\ninput.aniso.lambda1 = 3\neta=0.1\n", "t").unwrap();
        raw.apply_override("eta=0.2").unwrap();
        let c = ExperimentConfig::from_raw(&raw).unwrap();
        assert_eq!(c.d, 40);
        assert_eq!(c.eta, 0.2);
        assert_eq!(c.input.kind, InputKind::AnisotropicGaussian { lambda1: 3.0, lambda2: 1.0 });
        assert!(c.resolved().contains("eta (override)"));
    }

    #[test]
    fn unknown_and_malformed_keys_rejected() {
        assert!(ExperimentConfig::parse("etaa = 1").unwrap_err().is_config());
        assert!(ExperimentConfig::parse("eta 1").unwrap_err().is_config());
        assert!(ExperimentConfig::parse("eta = fast").unwrap_err().is_config());
        assert!(ExperimentConfig::parse("input.kind = cauchy").unwrap_err().is_config());
        assert!(ExperimentConfig::parse("eval_n = 10").unwrap_err().is_config());
        assert!(ExperimentConfig::parse("m = 2").unwrap_err().is_config());
    }

    #[test]
    fn samples_versus_steps() {
        let c = ExperimentConfig::parse("max_steps = none\nM = 6400").unwrap();
        assert_eq!(c.steps(), (100, StepSource::TotalSamples));
        let c = ExperimentConfig::parse("max_steps = 50\nM = 6400").unwrap();
        assert_eq!(c.steps(), (50, StepSource::MaxSteps));
        assert!(c.resolved().contains("bound by max_steps"));
        let c = ExperimentConfig::parse("max_steps = 500\nM = 6400").unwrap();
        assert_eq!(c.steps().1, StepSource::TotalSamples);
    }

    #[test]
    fn resolved_round_trips() {
        let c = ExperimentConfig::parse("name = x\ninput.kind = xor_gaussian_mixture\nlabel.noise_rate = 0.05\nseed = 9").unwrap();
        let back = ExperimentConfig::parse(&c.resolved()).unwrap();
        assert_eq!(ExperimentConfig { overrides: vec![], ..back }, ExperimentConfig { overrides: vec![], ..c });
    }
}
