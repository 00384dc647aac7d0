use std::path::PathBuf;

use sense_core::analysis::median;
use sense_core::harness::{load_config, run_monte_carlo, ExperimentConfig, McOutput, Method, RunOptions, SnrSpec};
use sense_core::scenario::{SNR_SETTING_1, SNR_SETTING_3};

fn reference_config() -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/scenario_paper_sec6.json");
    load_config(path).unwrap()
}

fn run(cfg: &ExperimentConfig) -> McOutput {
    run_monte_carlo(
        cfg,
        RunOptions {
            threads: None,
            timing: false,
        },
    )
    .unwrap()
}

fn median_error(out: &McOutput, method: Method) -> f64 {
    let errs: Vec<f64> = out
        .records
        .iter()
        .filter(|r| r.method == method)
        .filter_map(|r| r.err_pos_m)
        .collect();
    median(&errs).unwrap()
}

fn with_snr(db: &[f64], trials: usize, methods: &[Method]) -> ExperimentConfig {
    let mut cfg = reference_config();
    cfg.snr = SnrSpec::FixedSnr { rho2_db: db.to_vec() };
    cfg.trials = trials;
    cfg.methods = methods.to_vec();
    cfg
}

#[test]
fn weak_pair_shifts_signal_fusion_more_than_bayes() {
    let mut db = vec![10.0; 8];
    db[7] = -10.0;
    let out = run(&with_snr(&db, 100, &[Method::Bayes, Method::SignalNc]));
    let (b, s) = (median_error(&out, Method::Bayes), median_error(&out, Method::SignalNc));
    assert!(b < s, "bayes {b} signal {s}");
}

#[test]
fn soft_fusion_worse_than_bayes_in_setting_one() {
    let out = run(&with_snr(&SNR_SETTING_1, 200, &[Method::Bayes, Method::ParamSoft]));
    let (b, s) = (median_error(&out, Method::Bayes), median_error(&out, Method::ParamSoft));
    assert!(s > b, "bayes {b} soft {s}");
}

#[test]
fn symbol_fusion_not_better_than_bayes_at_zero_db() {
    let out = run(&with_snr(&[0.0; 8], 200, &[Method::Bayes, Method::Symbol]));
    let (b, s) = (median_error(&out, Method::Bayes), median_error(&out, Method::Symbol));
    assert!(s >= b, "bayes {b} symbol {s}");
}

#[test]
fn bayes_has_lowest_median_in_setting_three() {
    let cfg = with_snr(&SNR_SETTING_3, 200, &reference_config().methods);
    let out = run(&cfg);
    let b = median_error(&out, Method::Bayes);
    for &m in &cfg.methods {
        let e = median_error(&out, m);
        assert!(b <= e, "bayes {b} vs {m} {e}");
    }
}

#[test]
fn failures_do_not_abort_the_run() {
    // Two receivers on the same spot make the hard-fusion normal equations
    // singular on every trial; the other methods still report.
    let mut cfg = reference_config();
    cfg.scene.rx_aps.truncate(2);
    cfg.scene.rx_aps[1] = cfg.scene.rx_aps[0];
    cfg.snr = SnrSpec::FixedSnr {
        rho2_db: vec![10.0, 10.0],
    };
    cfg.trials = 3;
    cfg.methods = vec![Method::Bayes, Method::ParamHard];
    let out = run(&cfg);
    assert_eq!(out.records.len(), 6);
    assert!(out
        .records
        .iter()
        .filter(|r| r.method == Method::ParamHard)
        .all(|r| r.failed()));
    assert!(out
        .records
        .iter()
        .filter(|r| r.method == Method::Bayes)
        .all(|r| !r.failed()));
}

/// Variance of the per-pair range estimate at a fixed gain against the
/// exact bound for a complex tone in circular noise of total variance σ²:
/// `var(d) = 3σ²c² / (2π²Δf²|β|²K(K²−1)L)`. The bound reported by
/// `crlb_range` is twice this.
#[test]
fn per_pair_range_estimate_is_efficient() {
    use num_complex::Complex64;
    use rand::SeedableRng;
    use sense_core::analysis::crlb_range;
    use sense_core::baselines::{per_pair_estimate, search_bounds};
    use sense_core::geometry::bistatic_range;
    use sense_core::scenario::{db_to_linear, reference_ofdm, reference_prior, reference_scene};
    use sense_core::scene::{synthesize_frame, SnrModel, SynthOptions};

    let cfg = reference_ofdm();
    let scene = reference_scene();
    let pair = scene.pairs()[0];
    let rho2 = db_to_linear(0.0);
    let snr = SnrModel::FixedSnr { rho2: vec![rho2; 8] };
    let opts = SynthOptions {
        noiseless: false,
        beta: Some(Complex64::from_polar(rho2.sqrt(), 0.4)),
    };
    let bounds = search_bounds(&pair, &cfg, &reference_prior()).unwrap();
    let truth = bistatic_range(scene.target_pos, &pair);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
    let n = 2000;
    let mut sq = 0.0;
    for _ in 0..n {
        let f = synthesize_frame(0, &pair, &scene, &cfg, &snr, 1.0, opts, &mut rng).unwrap();
        let m = per_pair_estimate(0, &f, &cfg, &bounds).unwrap();
        sq += (m.d_hat - truth).powi(2);
    }
    let var = sq / n as f64;
    let (k, l) = (cfg.k as f64, cfg.l as f64);
    let c = sense_core::SPEED_OF_LIGHT;
    let exact = 3.0 * c * c / (2.0 * std::f64::consts::PI.powi(2) * cfg.delta_f.powi(2) * rho2 * k * (k * k - 1.0) * l);
    assert!((var / exact - 1.0).abs() < 0.15, "var {var:.3e} exact {exact:.3e}");
    let reported = crlb_range(1.0, rho2, cfg.k, cfg.l, cfg.delta_f).unwrap();
    assert!((reported / exact - 2.0).abs() < 1e-12);
}
