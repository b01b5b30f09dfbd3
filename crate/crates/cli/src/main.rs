use blockdyn_core::harness::{analyze_run, format_report, render_plots, run_experiment_with, sweep, ExperimentConfig, Patch};
use blockdyn_core::lemma_lab::{format_table, run_suite, Phase1bConstants, Verdict, VerifyOptions, SUITES};
use blockdyn_core::Error;
use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "blockdyn", version, about = "Train and audit two-layer ReLU networks on Gaussian XOR")]
struct Cli {
    /// -v prints progress, -vv prints every metrics row
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// key=value, applied after the config file, last wins
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut ov = self.overrides.clone();
        if let Some(d) = &self.output_dir {
            ov.push(format!("output_dir={}", d.display()));
        }
        if let Some(s) = self.seed {
            ov.push(format!("seed={s}"));
        }
        ExperimentConfig::load(self.config.as_deref(), &ov)
    }
}

#[derive(Subcommand)]
enum Verb {
    /// Run one training experiment
    Train(Common),
    /// Run lemma-lab checks and write a JSONL report
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "verify")]
        output_dir: PathBuf,
        #[arg(long, default_value_t = Phase1bConstants::default().c_b)]
        c_b: f64,
        #[arg(long, default_value_t = Phase1bConstants::default().c_b_prime)]
        c_b_prime: f64,
        /// Monte Carlo size for the gradient suites
        #[arg(long)]
        gradient_samples: Option<usize>,
        #[arg(long)]
        margin_samples: Option<usize>,
        #[arg(long)]
        alignment_samples: Option<usize>,
    },
    /// Run the base config under several patches
    Sweep {
        #[command(flatten)]
        common: Common,
        /// "label: key=value, key=value"
        #[arg(long = "patch")]
        patches: Vec<String>,
        /// one patch per line, # comments
        #[arg(long)]
        patch_file: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
    },
    /// Render SVG figures for a run directory
    Plot { run_dir: PathBuf },
    /// Summarise a complete or partial run directory
    Report { run_dir: PathBuf },
}

enum Fail {
    Config(String),
    Runtime(String),
    Verification(usize),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::MissingInputs(_) => Fail::Config(e.to_string()),
            _ => Fail::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match dispatch(cli.verb, cli.verbose) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Fail::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Fail::Verification(n)) => {
            eprintln!("verification failed: {n} check(s) with verdict Fail");
            ExitCode::from(3)
        }
    }
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("BLOCKDYN_THREADS") else { return Ok(()) };
    let n: usize =
        v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| format!("BLOCKDYN_THREADS must be a positive integer, got '{v}'"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn dispatch(verb: Verb, verbose: u8) -> Result<(), Fail> {
    match verb {
        Verb::Train(c) => train(&c, verbose),
        Verb::Verify { suite, seed, output_dir, c_b, c_b_prime, gradient_samples, margin_samples, alignment_samples } => {
            let mut opts = VerifyOptions { phase1b: Phase1bConstants { c_b, c_b_prime }, ..Default::default() };
            opts.gradient = gradient_samples.unwrap_or(opts.gradient);
            opts.margin = margin_samples.unwrap_or(opts.margin);
            opts.alignment = alignment_samples.unwrap_or(opts.alignment);
            verify(&suite, seed, &output_dir, opts, verbose)
        }
        Verb::Sweep { common, patches, patch_file, sequential } => {
            let base = common.load()?;
            let mut lines = patches;
            if let Some(p) = patch_file {
                let text = std::fs::read_to_string(&p).map_err(|e| Fail::Config(format!("{}: {e}", p.display())))?;
                lines.extend(text.lines().map(|l| l.split('#').next().unwrap_or("").trim()).filter(|l| !l.is_empty()).map(String::from));
            }
            if lines.is_empty() {
                return Err(Fail::Config("sweep needs at least one --patch or a --patch-file".into()));
            }
            let patches = lines.iter().map(|l| Patch::parse(l)).collect::<Result<Vec<_>, _>>()?;
            let s = sweep(&base, &patches, !sequential)?;
            for r in &s.rows {
                match (&r.error, &r.final_metrics) {
                    (Some(e), _) => println!("{:<16} error: {e}", r.label),
                    (None, Some(m)) => println!(
                        "{:<16} test_loss {:.4}  test_acc {:.4}  offboundary {:.4}  plateau {}",
                        r.label,
                        m.test_loss,
                        m.test_acc,
                        m.test_acc_offboundary,
                        r.plateau.map_or("-".to_string(), |p| p.detected.to_string())
                    ),
                    _ => {}
                }
            }
            println!("summary: {}", s.table.display());
            if s.rows.iter().any(|r| r.error.is_some()) {
                return Err(Fail::Runtime("one or more sweep runs failed".into()));
            }
            Ok(())
        }
        Verb::Plot { run_dir } => {
            for p in render_plots(&run_dir)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Verb::Report { run_dir } => {
            if !run_dir.is_dir() {
                return Err(Fail::Config(format!("{}: not a run directory", run_dir.display())));
            }
            print!("{}", format_report(&analyze_run(&run_dir)?));
            Ok(())
        }
    }
}

fn train(c: &Common, verbose: u8) -> Result<(), Fail> {
    let cfg = c.load()?;
    let (steps, source) = cfg.steps();
    if verbose > 0 {
        eprintln!("{}: {steps} steps ({source:?}) -> {}", cfg.name, cfg.run_dir().display());
    }
    let out = run_experiment_with(&cfg, |row| {
        if verbose > 1 || (verbose == 1 && row.step % (cfg.metrics_every * 10) == 0) {
            eprintln!("step {:>7}  loss {:.4}  acc {:.4}  N_avg {:.4}  U {:.4}", row.step, row.test_loss, row.test_acc, row.n_avg, row.u);
        }
    })?;
    let f = &out.summary.final_metrics;
    println!("run directory: {}", out.dir.display());
    println!("final test_acc {:.4}, off-boundary {:.4}, test_loss {:.4}", f.test_acc, f.test_acc_offboundary, f.test_loss);
    Ok(())
}

fn verify(suite: &str, seed: u64, dir: &Path, opts: VerifyOptions, verbose: u8) -> Result<(), Fail> {
    let names: Vec<&str> = if suite == "all" { SUITES.to_vec() } else { vec![suite] };
    if let Some(bad) = names.iter().find(|n| !SUITES.contains(n)) {
        return Err(Fail::Config(format!("unknown suite '{bad}'; known: {} or all", SUITES.join(", "))));
    }
    std::fs::create_dir_all(dir).map_err(|e| Fail::Runtime(format!("{}: {e}", dir.display())))?;
    let path = dir.join(format!("verify_{suite}_seed{seed}.jsonl"));
    let mut reports = Vec::new();
    for n in names {
        if verbose > 0 {
            eprintln!("suite {n}");
        }
        reports.push(run_suite(n, seed, opts)?);
    }
    let mut text = String::new();
    for r in &reports {
        for c in &r.checks {
            text.push_str(&serde_json::to_string(c).map_err(|e| Fail::Runtime(e.to_string()))?);
            text.push('\n');
        }
    }
    let mut f = std::fs::File::create(&path).map_err(|e| Fail::Runtime(format!("{}: {e}", path.display())))?;
    f.write_all(text.as_bytes()).map_err(|e| Fail::Runtime(format!("{}: {e}", path.display())))?;
    print!("{}", format_table(&reports));
    println!("report: {}", path.display());
    let fails: usize = reports.iter().map(|r| r.count(Verdict::Fail)).sum();
    if fails > 0 {
        return Err(Fail::Verification(fails));
    }
    Ok(())
}
