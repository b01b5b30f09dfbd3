//! Batches of patched runs summarised in one table.

use super::config::{ExperimentConfig, RawConfig};
use super::report::{plateau, Plateau};
use super::run::{run_experiment, MetricsRow};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub label: String,
    pub overrides: Vec<String>,
}

impl Patch {
    /// `label: k=v, k=v` or just `k=v, k=v` (the label is then the overrides).
    pub fn parse(s: &str) -> Result<Patch> {
        let (label, body) = match s.split_once(':') {
            Some((l, b)) if !l.contains('=') => (Some(l.trim().to_string()), b),
            _ => (None, s),
        };
        let overrides: Vec<String> = body.split([',', ';']).map(|p| p.trim()).filter(|p| !p.is_empty()).map(String::from).collect();
        if overrides.iter().any(|o| !o.contains('=')) {
            return Err(Error::Config(format!("patch '{s}' must be a list of key=value")));
        }
        let label = label.unwrap_or_else(|| if overrides.is_empty() { "base".into() } else { overrides.join(",") });
        Ok(Patch { label, overrides })
    }

    fn slug(&self) -> String {
        self.label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub dir: PathBuf,
    pub error: Option<String>,
    pub final_metrics: Option<MetricsRow>,
    pub err_concentration: Option<f64>,
    pub angular_dispersion: Option<f64>,
    pub plateau: Option<Plateau>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    pub table: PathBuf,
}

impl SweepSummary {
    pub fn get(&self, label: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

pub const SWEEP_HEADER: &str =
    "label,status,step,test_loss,test_acc,test_acc_offboundary,N_avg,U,heavy_fraction,err_concentration,angular_dispersion,plateau,plateau_change";

/// The base config with `patch` applied; the run is named after the patch.
pub fn patched(base: &ExperimentConfig, patch: &Patch) -> Result<ExperimentConfig> {
    let mut raw = RawConfig::default();
    raw.parse_str(&base.resolved(), "base")?;
    for o in &patch.overrides {
        raw.apply_override(o)?;
    }
    raw.set("name", &format!("{}-{}", base.name, patch.slug()), "sweep")?;
    ExperimentConfig::from_raw(&raw)
}

fn run_one(base: &ExperimentConfig, patch: &Patch) -> SweepRow {
    let mut row = SweepRow {
        label: patch.label.clone(),
        dir: base.output_dir.join(format!("{}-{}", base.name, patch.slug())),
        error: None,
        final_metrics: None,
        err_concentration: None,
        angular_dispersion: None,
        plateau: None,
    };
    match patched(base, patch).and_then(|cfg| run_experiment(&cfg).map(|o| (cfg, o))) {
        Ok((cfg, out)) => {
            row.dir = out.dir;
            row.plateau = plateau(&out.metrics, cfg.steps().0);
            row.final_metrics = Some(out.summary.final_metrics.clone());
            row.err_concentration = Some(out.summary.final_eval.err_concentration);
            row.angular_dispersion = out.summary.angular_dispersion_final;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Runs every patch (in parallel when `parallel`), records failures and keeps
/// going, and writes `sweep_summary.csv` and `sweep_summary.json` to the base
/// output directory. Rows keep patch order whatever the scheduling.
pub fn sweep(base: &ExperimentConfig, patches: &[Patch], parallel: bool) -> Result<SweepSummary> {
    if patches.is_empty() {
        return Err(Error::Config("sweep needs at least one patch".into()));
    }
    // reject bad keys before any run starts
    for p in patches {
        let mut raw = RawConfig::default();
        for o in &p.overrides {
            raw.apply_override(o)?;
        }
    }
    let rows: Vec<SweepRow> = if parallel {
        crate::par::map_range(patches.len(), |i| run_one(base, &patches[i]))
    } else {
        patches.iter().map(|p| run_one(base, p)).collect()
    };
    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    for r in &rows {
        let status = if r.error.is_some() { "error" } else { "ok" };
        match &r.final_metrics {
            Some(m) => {
                let _ = writeln!(
                    csv,
                    "{},{status},{},{},{},{},{},{},{},{},{},{},{}",
                    r.label.replace(',', ";"),
                    m.step,
                    m.test_loss,
                    m.test_acc,
                    m.test_acc_offboundary,
                    m.n_avg,
                    m.u,
                    m.heavy_fraction,
                    opt(r.err_concentration),
                    opt(r.angular_dispersion),
                    r.plateau.map(|p| p.detected.to_string()).unwrap_or_default(),
                    opt(r.plateau.map(|p| p.relative_change)),
                );
            }
            None => {
                let _ = writeln!(csv, "{},{status},,,,,,,,,,,", r.label.replace(',', ";"));
            }
        }
    }
    std::fs::create_dir_all(&base.output_dir).map_err(|e| Error::io(&base.output_dir, e))?;
    let table = base.output_dir.join("sweep_summary.csv");
    std::fs::write(&table, csv).map_err(|e| Error::io(&table, e))?;
    let json = base.output_dir.join("sweep_summary.json");
    std::fs::write(&json, serde_json::to_string_pretty(&rows).expect("rows serialise")).map_err(|e| Error::io(&json, e))?;
    Ok(SweepSummary { rows, table })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_syntax() {
        let p = Patch::parse("noisy: label.noise_rate=0.05, seed=3").unwrap();
        assert_eq!(p.label, "noisy");
        assert_eq!(p.overrides, vec!["label.noise_rate=0.05", "seed=3"]);
        assert_eq!(Patch::parse("eta=0.1").unwrap().label, "eta=0.1");
        assert!(Patch::parse("x: eta").is_err());
    }

    #[test]
    fn failures_are_recorded_and_the_sweep_continues() {
        let tmp = tempfile::tempdir().unwrap();
        let base = ExperimentConfig::parse(&format!(
            "name = s\nd = 8\nm = 24\ntheta = 0.1\neta = 0.2\nbatch_size = 8\nmax_steps = 20\nmetrics_every = 10\neval_n = 1000\ng_mu_samples = 10000\noutput_dir = {}",
            tmp.path().display()
        ))
        .unwrap();
        let patches = vec![
            Patch::parse("ok: seed=2").unwrap(),
            Patch::parse("bad: m=1").unwrap(),
            Patch::parse("uni: input.kind=uniform_cube").unwrap(),
        ];
        let s = sweep(&base, &patches, true).unwrap();
        assert!(s.get("ok").unwrap().error.is_none(), "{:?}", s.get("ok").unwrap().error);
        assert!(s.get("bad").unwrap().error.is_some());
        assert!(s.get("uni").unwrap().final_metrics.is_some());
        let text = std::fs::read_to_string(&s.table).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(sweep(&base, &[Patch::parse("x: nokey=1").unwrap()], false).unwrap_err().is_config());
        assert!(sweep(&base, &[], false).is_err());
    }
}
