use blockdyn_core::blockstats::TAU;
use blockdyn_core::distributions::{sample_batch, InputSpec, LabelSpec};
use blockdyn_core::harness::{analyze_run, render_plots, run_experiment, ExperimentConfig};
use blockdyn_core::network::{max_identity_residual, Hyper, NetworkState};
use blockdyn_core::oracle::{estimate_g_mu, g_mu_quadrature};
use blockdyn_core::rng::StreamKey;
use proptest::prelude::*;
use std::fs;
use std::path::Path;

// mpmath at 30 digits, from the 1-d reduction
// g(N) = ∫₀^∞ σ(−Ns) s e^{−s²/4} erfc(s/2) / √π ds
const FROZEN_G_MU: [(f64, f64); 5] = [
    (0.0, 0.1652473031463236),
    (5.0, 0.013462175063918882),
    (10.0, 0.0040117142028008815),
    (20.0, 0.001084112418081229),
    (40.0, 0.0002807608043022838),
];

#[test]
fn g_mu_quadrature_matches_frozen_values() {
    for (n, want) in FROZEN_G_MU {
        let got = g_mu_quadrature(n);
        assert!((got - want).abs() <= 1e-10 * want, "N={n}: {got} vs {want}");
    }
}

#[test]
fn g_mu_monte_carlo_agrees_with_quadrature() {
    for (i, (n, want)) in FROZEN_G_MU.into_iter().enumerate() {
        let e = estimate_g_mu(n, 400_000, StreamKey::root(5).index(i as u64)).unwrap();
        assert!((e.value - want).abs() < 4.0 * e.std_err, "N={n}: {} ± {} vs {want}", e.value, e.std_err);
    }
}

#[test]
fn tau_constant() {
    assert!((TAU - 2f64.sqrt() * std::f64::consts::PI.powf(-1.5)).abs() < 1e-15);
    assert!((TAU - 0.253975).abs() < 1e-6);
}

#[test]
fn monte_carlo_is_independent_of_thread_count() {
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_g_mu(3.0, 100_000, StreamKey::root(9)).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_eq!(a.std_err.to_bits(), b.std_err.to_bits());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradient_identity_on_random_batches(seed in 0u64..10_000, d in 4usize..20, m in 4usize..40, theta in 0.01f64..2.0) {
        let hyper = Hyper { d, m, theta, eta: 0.1, batch_size: 32 };
        let net = NetworkState::init(hyper, StreamKey::root(seed)).unwrap();
        let batch = sample_batch(&InputSpec::isotropic(d), &LabelSpec::xor(), 32, StreamKey::root(seed).child("b")).unwrap();
        let g = net.batch_gradients(&batch).unwrap();
        prop_assert!(max_identity_residual(&net, &g) <= 1e-10);
    }

    #[test]
    fn batches_do_not_depend_on_size_prefix(seed in 0u64..10_000, n in 1usize..64) {
        let key = StreamKey::root(seed);
        let small = sample_batch(&InputSpec::isotropic(6), &LabelSpec::xor(), n, key).unwrap();
        let big = sample_batch(&InputSpec::isotropic(6), &LabelSpec::xor(), n + 10, key).unwrap();
        for (a, b) in small.iter().zip(&big) {
            prop_assert_eq!(&a.x, &b.x);
            prop_assert_eq!(a.y, b.y);
        }
    }
}

fn small(dir: &Path, extra: &str) -> ExperimentConfig {
    ExperimentConfig::parse(&format!(
        "name = p\nd = 16\nm = 24\ntheta = 0.1\neta = 0.3\nbatch_size = 16\nmax_steps = 200\nmetrics_every = 20\nsnapshot_every = 100\n\
         eval_n = 1000\ng_mu_samples = 10000\noutput_dir = {}\n{extra}",
        dir.display()
    ))
    .unwrap()
}

#[test]
fn run_plot_report_round_trip() {
    let t = tempfile::tempdir().unwrap();
    let out = run_experiment(&small(t.path(), "")).unwrap();
    let files = render_plots(&out.dir).unwrap();
    assert_eq!(files.len(), 2 * 3 + 2);
    for f in &files {
        let s = fs::read_to_string(f).unwrap();
        assert!(s.starts_with("<svg") && !s.contains("NaN"), "{}", f.display());
    }
    let r = analyze_run(&out.dir).unwrap();
    assert!(!r.partial);
    assert_eq!(r.rows, 11);
    assert_eq!(r.final_row, out.summary.final_metrics);
    assert!(r.plots.iter().any(|p| p == "blocks.svg"));
}

#[test]
fn plots_refuse_incomplete_inputs_without_writing() {
    let t = tempfile::tempdir().unwrap();
    let out = run_experiment(&small(t.path(), "")).unwrap();
    fs::remove_file(out.dir.join("snapshots.jsonl")).unwrap();
    assert!(render_plots(&out.dir).is_err());
    assert!(!out.dir.join("blocks.svg").exists());
}

#[test]
fn torn_metrics_line_gives_partial_report() {
    let t = tempfile::tempdir().unwrap();
    let out = run_experiment(&small(t.path(), "")).unwrap();
    let m = fs::read_to_string(out.dir.join("metrics.csv")).unwrap();
    let cut = &m[..m.len() - m.lines().last().unwrap().len() / 2 - 1];
    fs::write(out.dir.join("metrics.csv"), cut).unwrap();
    fs::remove_file(out.dir.join("summary.json")).unwrap();
    let r = analyze_run(&out.dir).unwrap();
    assert!(r.partial);
    assert_eq!(r.rows, 10);
    assert_eq!(r.final_row.step, 180);
}

#[test]
fn total_samples_can_bind_the_horizon() {
    let t = tempfile::tempdir().unwrap();
    let out = run_experiment(&small(t.path(), "total_samples = 800")).unwrap();
    assert_eq!(out.summary.steps, 50);
    assert_eq!(out.summary.train_samples, 800);
}

#[test]
fn anisotropic_run_ends_more_dispersed() {
    let t = tempfile::tempdir().unwrap();
    let cfg = |kind: &str| {
        ExperimentConfig::parse(&format!("name = {kind}\nseed = 1\ninput.kind = {kind}\noutput_dir = {}", t.path().display())).unwrap()
    };
    let iso = run_experiment(&cfg("isotropic_gaussian")).unwrap().summary;
    let aniso = run_experiment(&cfg("anisotropic_gaussian")).unwrap().summary;
    assert!(iso.final_metrics.test_acc_offboundary >= 0.9 && aniso.final_metrics.test_acc_offboundary >= 0.9);
    let (a, b) = (aniso.angular_dispersion_final.unwrap(), iso.angular_dispersion_final.unwrap());
    assert!(a > b, "aniso {a} vs iso {b}");
}
