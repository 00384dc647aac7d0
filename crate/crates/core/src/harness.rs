//! Experiment configuration, Monte Carlo orchestration and result files.
//!
//! A trial synthesizes one frame per pair from its own RNG substream and runs
//! every requested method on those frames. Trials run on a rayon pool and are
//! merged in trial order, so `trials.csv` does not depend on the thread count
//! (wall times aside; see [`RunOptions::timing`]).

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{crlb_report, error_cdf, median, overhead_report, CrlbReport, FusionMode, OverheadEntry};
use crate::baselines::{
    coherent_position_objective, hard_fusion_estimate, measure_pairs, parameter_fusion_soft, signal_fusion_estimate,
    soft_position_objective, symbol_fusion_estimate, symbol_fusion_spectrum, SignalMode,
};
use crate::error::SenseError;
use crate::fusion::{Domain, GridAxis, LagObjective, PriorBox, SpectrumGrid, Weighting};
use crate::geometry::Scene;
use crate::scenario::db_to_linear;
use crate::scene::{synthesize_trial, ReceivedFrame, SnrModel, SynthOptions};
use crate::solvers::{pcga_estimate, traversal_estimate, Estimate, Objective, PcgaSettings, TraversalSteps};
use crate::waveform::OfdmConfig;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read config {path}: {message}")]
    ConfigRead { path: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config at `{path}`: {message}")]
    Validation { path: String, message: String },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Runtime(#[from] SenseError),
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::ConfigRead { .. } | HarnessError::Parse(_) | HarnessError::Validation { .. } => 2,
            HarnessError::Io { .. } | HarnessError::Runtime(_) => 3,
        }
    }

    fn invalid(path: &str, message: impl ToString) -> Self {
        HarnessError::Validation {
            path: path.to_string(),
            message: message.to_string(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bayes,
    SignalNc,
    SignalC,
    ParamHard,
    ParamSoft,
    Symbol,
    TraversalOracle,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Bayes,
        Method::SignalNc,
        Method::SignalC,
        Method::ParamHard,
        Method::ParamSoft,
        Method::Symbol,
        Method::TraversalOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bayes => "bayes",
            Method::SignalNc => "signal_nc",
            Method::SignalC => "signal_c",
            Method::ParamHard => "param_hard",
            Method::ParamSoft => "param_soft",
            Method::Symbol => "symbol",
            Method::TraversalOracle => "traversal_oracle",
        }
    }

    /// Which payload the method needs from each pair.
    pub fn fusion_mode(self) -> FusionMode {
        match self {
            Method::Bayes | Method::TraversalOracle => FusionMode::Bayesian,
            Method::SignalNc | Method::SignalC => FusionMode::Signal,
            Method::ParamHard | Method::ParamSoft => FusionMode::SoftParameter,
            Method::Symbol => FusionMode::Symbol,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
            format!("unknown method `{s}`; expected one of {}", names.join(", "))
        })
    }
}

/// Per-pair SNR as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SnrSpec {
    /// Per-pair `ρ²` in dB, pair order.
    FixedSnr { rho2_db: Vec<f64> },
    /// Transmit power in dBm, linear beamforming gain, mean RCS in m².
    RadarEquation { pt_dbm: f64, g: f64, rcs_mean: f64 },
}

impl SnrSpec {
    pub fn model(&self) -> SnrModel {
        match self {
            SnrSpec::FixedSnr { rho2_db } => SnrModel::FixedSnr {
                rho2: rho2_db.iter().map(|&d| db_to_linear(d)).collect(),
            },
            SnrSpec::RadarEquation { pt_dbm, g, rcs_mean } => SnrModel::RadarEquation {
                pt: db_to_linear(pt_dbm - 30.0),
                g: *g,
                rcs_mean: *rcs_mean,
            },
        }
    }
}

fn default_sigma2() -> f64 {
    1.0
}

fn default_trials() -> usize {
    100
}

/// Coherent signal fusion and the traversal oracle are opt-in: both cost
/// orders of magnitude more per trial than the rest.
fn default_methods() -> Vec<Method> {
    vec![
        Method::Bayes,
        Method::SignalNc,
        Method::ParamHard,
        Method::ParamSoft,
        Method::Symbol,
    ]
}

fn default_cdf_grid_m() -> Vec<f64> {
    vec![0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0]
}

fn default_cdf_grid_mps() -> Vec<f64> {
    vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ofdm: OfdmConfig,
    pub scene: Scene,
    pub snr: SnrSpec,
    /// Noise variance per resource element. Zero means noiseless frames,
    /// with weights computed as if `σ² = 1`.
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    pub prior: PriorBox,
    /// Grids and ascent parameters; filled from the OFDM numerology when
    /// absent.
    #[serde(default)]
    pub solver: Option<PcgaSettings>,
    #[serde(default)]
    pub traversal: TraversalSteps,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_cdf_grid_m")]
    pub cdf_grid_m: Vec<f64>,
    #[serde(default = "default_cdf_grid_mps")]
    pub cdf_grid_mps: Vec<f64>,
}

fn check_grid(path: &str, grid: &[f64]) -> HarnessResult<()> {
    if grid.is_empty() {
        return Err(HarnessError::invalid(path, "must not be empty"));
    }
    if grid.iter().any(|g| !(g.is_finite() && *g >= 0.0)) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HarnessError::invalid(
            path,
            "must be finite, non-negative and strictly increasing",
        ));
    }
    Ok(())
}

fn wrap(path: &'static str) -> impl Fn(SenseError) -> HarnessError {
    move |e| HarnessError::invalid(path, e)
}

impl ExperimentConfig {
    /// Solver settings, defaults included.
    pub fn settings(&self) -> PcgaSettings {
        self.solver
            .unwrap_or_else(|| PcgaSettings::defaults(&self.ofdm, &self.prior))
    }

    pub fn noiseless(&self) -> bool {
        self.sigma2 == 0.0
    }

    /// Noise variance used for synthesis bookkeeping and weights.
    pub fn effective_sigma2(&self) -> f64 {
        if self.noiseless() {
            1.0
        } else {
            self.sigma2
        }
    }

    pub fn snr_model(&self) -> SnrModel {
        self.snr.model()
    }

    /// Replace absent optional blocks by their defaults.
    pub fn fill_defaults(&mut self) {
        self.solver = Some(self.settings());
    }

    pub fn validate(&self) -> HarnessResult<()> {
        self.ofdm.validate().map_err(wrap("ofdm"))?;
        self.scene.validate().map_err(wrap("scene"))?;
        self.prior.pos.validate("pos").map_err(wrap("prior.pos"))?;
        self.prior.vel.validate("vel").map_err(wrap("prior.vel"))?;
        match &self.snr {
            SnrSpec::FixedSnr { rho2_db } => {
                if rho2_db.len() != self.scene.num_pairs() {
                    return Err(HarnessError::invalid(
                        "snr.rho2_db",
                        format!("{} values for {} pairs", rho2_db.len(), self.scene.num_pairs()),
                    ));
                }
                if rho2_db.iter().any(|d| !d.is_finite()) {
                    return Err(HarnessError::invalid("snr.rho2_db", "values must be finite"));
                }
            }
            SnrSpec::RadarEquation { pt_dbm, g, rcs_mean } => {
                if !pt_dbm.is_finite() {
                    return Err(HarnessError::invalid("snr.pt_dbm", "must be finite"));
                }
                if !(g.is_finite() && *g > 0.0) {
                    return Err(HarnessError::invalid("snr.g", "must be positive"));
                }
                if !(rcs_mean.is_finite() && *rcs_mean > 0.0) {
                    return Err(HarnessError::invalid("snr.rcs_mean", "must be positive"));
                }
            }
        }
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return Err(HarnessError::invalid("sigma2", "must be finite and non-negative"));
        }
        let s = self.settings();
        s.pos_grid
            .validate(self.ofdm.range_resolution(), "pos_grid")
            .map_err(wrap("solver.pos_grid"))?;
        s.vel_grid
            .validate(self.ofdm.velocity_resolution(), "vel_grid")
            .map_err(wrap("solver.vel_grid"))?;
        s.pos_params.validate("pos_params").map_err(wrap("solver.pos_params"))?;
        s.vel_params.validate("vel_params").map_err(wrap("solver.vel_params"))?;
        for (path, v) in [
            ("traversal.position", self.traversal.position),
            ("traversal.velocity", self.traversal.velocity),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(HarnessError::invalid(path, "must be positive"));
            }
        }
        if self.trials == 0 {
            return Err(HarnessError::invalid("trials", "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(HarnessError::invalid("methods", "must not be empty"));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(HarnessError::invalid(
                    &format!("methods[{i}]"),
                    format!("duplicate method {m}"),
                ));
            }
        }
        check_grid("cdf_grid_m", &self.cdf_grid_m)?;
        check_grid("cdf_grid_mps", &self.cdf_grid_mps)
    }
}

/// Parse, fill defaults and validate a config held in memory.
pub fn parse_config(text: &str) -> HarnessResult<ExperimentConfig> {
    let mut cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
    cfg.fill_defaults();
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> HarnessResult<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::ConfigRead {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub method: Method,
    pub estimate: Option<Estimate>,
    pub err_pos_m: Option<f64>,
    pub err_vel_mps: Option<f64>,
    pub wall_us: u64,
    /// Error message when the method failed on this trial.
    pub failure: Option<String>,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
    /// Record wall times. With `false` every `wall_us` is 0, which makes the
    /// whole trials file reproducible byte for byte.
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            threads: None,
            timing: true,
        }
    }
}

/// Frames of one trial, exactly as every method sees them.
pub fn trial_frames(cfg: &ExperimentConfig, trial: u64) -> crate::Result<Vec<ReceivedFrame>> {
    let opts = SynthOptions {
        noiseless: cfg.noiseless(),
        beta: None,
    };
    synthesize_trial(
        &cfg.scene,
        &cfg.ofdm,
        &cfg.snr_model(),
        cfg.effective_sigma2(),
        opts,
        cfg.seed,
        trial,
    )
}

pub fn run_method(method: Method, frames: &[ReceivedFrame], cfg: &ExperimentConfig) -> crate::Result<Estimate> {
    let (ofdm, prior, settings) = (&cfg.ofdm, &cfg.prior, &cfg.settings());
    let pairs = cfg.scene.pairs();
    match method {
        Method::Bayes => pcga_estimate(frames, ofdm, prior, settings),
        Method::SignalNc => signal_fusion_estimate(frames, ofdm, prior, settings, SignalMode::NonCoherent),
        Method::SignalC => signal_fusion_estimate(frames, ofdm, prior, settings, SignalMode::Coherent),
        Method::ParamHard => hard_fusion_estimate(&measure_pairs(frames, ofdm, prior)?, &pairs, prior, settings),
        Method::ParamSoft => parameter_fusion_soft(&measure_pairs(frames, ofdm, prior)?, &pairs, prior, settings),
        Method::Symbol => symbol_fusion_estimate(frames, ofdm, &measure_pairs(frames, ofdm, prior)?, prior, settings),
        Method::TraversalOracle => traversal_estimate(frames, ofdm, prior, cfg.traversal),
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

fn run_trial(cfg: &ExperimentConfig, trial: u64, timing: bool) -> Vec<TrialRecord> {
    let truth = &cfg.scene;
    let frames = trial_frames(cfg, trial);
    cfg.methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let outcome = match &frames {
                Ok(frames) => catch_unwind(AssertUnwindSafe(|| run_method(method, frames, cfg)))
                    .unwrap_or_else(|p| Err(SenseError::Diverged(panic_message(p)))),
                Err(e) => Err(e.clone()),
            };
            let wall_us = if timing { start.elapsed().as_micros() as u64 } else { 0 };
            match outcome {
                Ok(est) => TrialRecord {
                    trial,
                    method,
                    err_pos_m: Some(est.p_hat.distance(&truth.target_pos)),
                    err_vel_mps: Some((est.v_hat.vx - truth.target_vel.vx).hypot(est.v_hat.vy - truth.target_vel.vy)),
                    estimate: Some(est),
                    wall_us,
                    failure: None,
                },
                Err(e) => TrialRecord {
                    trial,
                    method,
                    estimate: None,
                    err_pos_m: None,
                    err_vel_mps: None,
                    wall_us,
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub position_m: f64,
    pub velocity_mps: f64,
    pub median_position_m: f64,
    pub median_velocity_mps: f64,
    pub trials_ok: usize,
    pub trials_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfSummary {
    pub grid_m: Vec<f64>,
    pub grid_mps: Vec<f64>,
    pub position: BTreeMap<String, Option<Vec<f64>>>,
    pub velocity: BTreeMap<String, Option<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub median_us: f64,
    pub mean_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadSummary {
    pub modes: Vec<OverheadEntry>,
    /// Mean real scalars per pair for each configured method.
    pub per_method: BTreeMap<String, f64>,
    pub bayesian_over_signal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_echo: ExperimentConfig,
    pub rmse: BTreeMap<String, Option<MethodStats>>,
    pub cdf: CdfSummary,
    pub crlb: Option<CrlbReport>,
    pub overhead: Option<OverheadSummary>,
    pub timing: BTreeMap<String, Option<TimingStats>>,
}

/// Per-pair CRLBs at the true state; `None` when the geometry is degenerate.
pub fn config_crlb(cfg: &ExperimentConfig) -> crate::Result<CrlbReport> {
    let sigma2 = cfg.effective_sigma2();
    let model = cfg.snr_model();
    let st2: Vec<f64> = cfg
        .scene
        .pairs()
        .iter()
        .enumerate()
        .map(|(n, pair)| model.sigma_tilde2(n, pair, &cfg.scene, &cfg.ofdm, sigma2))
        .collect::<crate::Result<_>>()?;
    crlb_report(&cfg.scene, &cfg.ofdm, sigma2, &st2)
}

pub fn config_overhead(cfg: &ExperimentConfig) -> crate::Result<OverheadSummary> {
    let modes = overhead_report(&cfg.scene, &cfg.ofdm, &cfg.prior)?;
    let of = |mode: FusionMode| {
        modes
            .iter()
            .find(|e| e.mode == mode)
            .map_or(f64::NAN, |e| e.scalars_per_pair)
    };
    Ok(OverheadSummary {
        per_method: cfg
            .methods
            .iter()
            .map(|m| (m.name().to_string(), of(m.fusion_mode())))
            .collect(),
        bayesian_over_signal: of(FusionMode::Bayesian) / of(FusionMode::Signal),
        modes,
    })
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn summarize(cfg: &ExperimentConfig, records: &[TrialRecord]) -> crate::Result<Summary> {
    let mut rmse = BTreeMap::new();
    let mut timing = BTreeMap::new();
    let mut cdf = CdfSummary {
        grid_m: cfg.cdf_grid_m.clone(),
        grid_mps: cfg.cdf_grid_mps.clone(),
        position: BTreeMap::new(),
        velocity: BTreeMap::new(),
    };
    for &method in &cfg.methods {
        let mine: Vec<&TrialRecord> = records.iter().filter(|r| r.method == method).collect();
        let ok: Vec<&TrialRecord> = mine.iter().copied().filter(|r| !r.failed()).collect();
        let pos: Vec<f64> = ok.iter().filter_map(|r| r.err_pos_m).collect();
        let vel: Vec<f64> = ok.iter().filter_map(|r| r.err_vel_mps).collect();
        let name = method.name().to_string();
        let stats = match (median(&pos), median(&vel)) {
            (Some(mp), Some(mv)) => Some(MethodStats {
                position_m: rms(&pos),
                velocity_mps: rms(&vel),
                median_position_m: mp,
                median_velocity_mps: mv,
                trials_ok: ok.len(),
                trials_failed: mine.len() - ok.len(),
            }),
            _ => None,
        };
        rmse.insert(name.clone(), stats);
        let curve = |e: &[f64], g: &[f64]| {
            if e.is_empty() {
                Ok(None)
            } else {
                error_cdf(e, g).map(Some)
            }
        };
        cdf.position.insert(name.clone(), curve(&pos, &cfg.cdf_grid_m)?);
        cdf.velocity.insert(name.clone(), curve(&vel, &cfg.cdf_grid_mps)?);
        let walls: Vec<f64> = mine.iter().map(|r| r.wall_us as f64).collect();
        timing.insert(
            name,
            median(&walls).map(|m| TimingStats {
                median_us: m,
                mean_us: walls.iter().sum::<f64>() / walls.len() as f64,
            }),
        );
    }
    Ok(Summary {
        config_echo: cfg.clone(),
        rmse,
        cdf,
        crlb: config_crlb(cfg).ok(),
        overhead: config_overhead(cfg).ok(),
        timing,
    })
}

pub struct McOutput {
    pub records: Vec<TrialRecord>,
    pub summary: Summary,
}

/// Run every configured trial. Errors inside a method are recorded in its
/// trial record; only pool construction and summary errors are returned.
pub fn run_monte_carlo(cfg: &ExperimentConfig, opts: RunOptions) -> HarnessResult<McOutput> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = opts.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| HarnessError::Runtime(SenseError::InvalidConfig(format!("thread pool: {e}"))))?;
    let per_trial: Vec<Vec<TrialRecord>> = pool.install(|| {
        (0..cfg.trials as u64)
            .into_par_iter()
            .map(|t| run_trial(cfg, t, opts.timing))
            .collect()
    });
    let records: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();
    let summary = summarize(cfg, &records)?;
    Ok(McOutput { records, summary })
}

pub const TRIALS_HEADER: &str =
    "trial,method,x_hat,y_hat,vx_hat,vy_hat,err_pos_m,err_vel_mps,iters,converged,wall_us,failed";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn trials_csv(records: &[TrialRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(TRIALS_HEADER);
    out.push('\n');
    for r in records {
        let e = r.estimate.as_ref();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.trial,
            r.method,
            opt(e.map(|e| e.p_hat.x)),
            opt(e.map(|e| e.p_hat.y)),
            opt(e.map(|e| e.v_hat.vx)),
            opt(e.map(|e| e.v_hat.vy)),
            opt(r.err_pos_m),
            opt(r.err_vel_mps),
            e.map_or(0, |e| e.iterations),
            e.is_some_and(|e| e.converged),
            r.wall_us,
            r.failed()
        );
    }
    out
}

fn write_file(path: &Path, contents: &str) -> HarnessResult<()> {
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

/// Write `trials.csv` and `summary.json` into `out_dir`, creating it.
pub fn emit_results(records: &[TrialRecord], summary: &Summary, out_dir: impl AsRef<Path>) -> HarnessResult<()> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write_file(&dir.join("trials.csv"), &trials_csv(records))?;
    let json = serde_json::to_string_pretty(summary).map_err(|e| HarnessError::Parse(e.to_string()))?;
    write_file(&dir.join("summary.json"), &(json + "\n"))
}

/// Position-stage objective each method maximises, for spectrum dumps.
pub fn position_objective<'a>(
    method: Method,
    frames: &'a [ReceivedFrame],
    cfg: &ExperimentConfig,
) -> crate::Result<Box<dyn Objective + 'a>> {
    let (ofdm, prior) = (&cfg.ofdm, &cfg.prior);
    Ok(match method {
        Method::Bayes | Method::TraversalOracle => Box::new(LagObjective::position(frames, ofdm, Weighting::Bayes)?),
        Method::SignalNc => Box::new(LagObjective::position(frames, ofdm, Weighting::Modulus)?),
        Method::SignalC => Box::new(coherent_position_objective(frames, ofdm)?),
        Method::ParamHard | Method::ParamSoft => Box::new(soft_position_objective(
            &measure_pairs(frames, ofdm, prior)?,
            &cfg.scene.pairs(),
        )?),
        Method::Symbol => Box::new(symbol_fusion_spectrum(
            frames,
            ofdm,
            &measure_pairs(frames, ofdm, prior)?,
        )?),
    })
}

/// Position spectrum of `method` on the frames of `trial`, sampled at `step`
/// over the prior box.
pub fn spectrum_dump(cfg: &ExperimentConfig, method: Method, trial: u64, step: f64) -> crate::Result<SpectrumGrid> {
    if !(step > 0.0) {
        return Err(SenseError::NonPositiveInput("spectrum step"));
    }
    let frames = trial_frames(cfg, trial)?;
    let obj = position_objective(method, &frames, cfg)?;
    let r = cfg.prior.pos;
    SpectrumGrid::evaluate(
        GridAxis::spanning(r.xmin, r.xmax, step),
        GridAxis::spanning(r.ymin, r.ymax, step),
        Domain::Position,
        |x| Ok(obj.eval(x)),
    )
}

pub fn spectrum_csv(method: Method, grid: &SpectrumGrid) -> String {
    let mut out = String::from("method,x,y,value\n");
    for ((r, c), v) in grid.values.indexed_iter() {
        let _ = writeln!(out, "{},{},{},{}", method, grid.x.value(c), grid.y.value(r), v);
    }
    out
}

pub fn emit_spectrum(method: Method, grid: &SpectrumGrid, out_dir: impl AsRef<Path>) -> HarnessResult<()> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write_file(&dir.join("spectrum.csv"), &spectrum_csv(method, grid))
}
