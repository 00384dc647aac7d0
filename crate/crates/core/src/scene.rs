//! Echo synthesis for a Swerling-I point target.
//!
//! Each (trial, pair) draws from its own counter-addressed ChaCha stream, so
//! the frames of a trial do not depend on how trials are scheduled across
//! threads.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SenseError};
use crate::geometry::{bistatic_range, bistatic_speed, ApPair, Scene};
use crate::waveform::{freq_steering, time_steering, OfdmConfig};

/// How the reflected-gain variance of each pair is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SnrModel {
    /// Bistatic radar equation with transmit power `pt` (W), beamforming gain
    /// `g` and mean RCS `rcs_mean` (m²).
    RadarEquation { pt: f64, g: f64, rcs_mean: f64 },
    /// Per-pair SNR `ρ² = σ̃² / σ²`, linear, in pair order.
    FixedSnr { rho2: Vec<f64> },
}

impl SnrModel {
    pub fn validate(&self, num_pairs: usize) -> Result<()> {
        match self {
            SnrModel::RadarEquation { pt, g, rcs_mean } => {
                if !(*pt > 0.0 && *g > 0.0 && *rcs_mean > 0.0) {
                    return Err(SenseError::NonPositiveInput("radar equation parameters"));
                }
            }
            SnrModel::FixedSnr { rho2 } => {
                if rho2.len() != num_pairs {
                    return Err(SenseError::InvalidConfig(format!(
                        "fixed_snr lists {} values for {} pairs",
                        rho2.len(),
                        num_pairs
                    )));
                }
                if rho2.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                    return Err(SenseError::NonPositiveInput("fixed_snr rho2"));
                }
            }
        }
        Ok(())
    }

    /// Reflected-gain variance `σ̃²` of pair `pair_index`.
    pub fn sigma_tilde2(
        &self,
        pair_index: usize,
        pair: &ApPair,
        truth: &Scene,
        cfg: &OfdmConfig,
        sigma2: f64,
    ) -> Result<f64> {
        match self {
            SnrModel::RadarEquation { pt, g, rcs_mean } => swerling_variance(
                *pt,
                *g,
                *rcs_mean,
                cfg.wavelength(),
                truth.target_pos.distance(&pair.tx_pos),
                truth.target_pos.distance(&pair.rx_pos),
            ),
            SnrModel::FixedSnr { rho2 } => rho2
                .get(pair_index)
                .map(|r| r * sigma2)
                .ok_or_else(|| SenseError::InvalidConfig(format!("no SNR for pair {pair_index}"))),
        }
    }
}

/// One pair's observation after the sensing sequence has been divided out.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    pub pair: ApPair,
    /// K×L, subcarriers along rows, symbols along columns.
    pub y: Array2<Complex64>,
    /// Noise variance the receiver assumes (linear).
    pub sigma2: f64,
    /// Reflected-gain variance the receiver assumes (linear).
    pub sigma_tilde2: f64,
}

impl ReceivedFrame {
    pub fn k(&self) -> usize {
        self.y.nrows()
    }

    pub fn l(&self) -> usize {
        self.y.ncols()
    }
}

/// Bistatic radar-equation variance `Pt G² σ̄² λ² / ((4π)³ d_r² d_t²)`.
pub fn swerling_variance(pt: f64, g: f64, rcs_mean: f64, lambda: f64, d_t: f64, d_r: f64) -> Result<f64> {
    for (name, v) in [
        ("pt", pt),
        ("g", g),
        ("rcs_mean", rcs_mean),
        ("lambda", lambda),
        ("d_t", d_t),
        ("d_r", d_r),
    ] {
        if !(v > 0.0) {
            return Err(SenseError::NonPositiveInput(name));
        }
    }
    Ok(pt * g * g * rcs_mean * lambda * lambda / ((4.0 * PI).powi(3) * d_r * d_r * d_t * d_t))
}

/// Circularly-symmetric complex Gaussian draw with variance `sigma_tilde2`.
pub fn draw_beta<R: Rng + ?Sized>(sigma_tilde2: f64, rng: &mut R) -> Complex64 {
    complex_normal(sigma_tilde2, rng)
}

fn complex_normal<R: Rng + ?Sized>(var: f64, rng: &mut R) -> Complex64 {
    let s = (0.5 * var.max(0.0)).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Independent stream for one (trial, pair). Pair indices must stay below 2^20.
pub fn substream(seed: u64, trial: u64, pair: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((trial << 20) | (pair & 0xF_FFFF));
    rng
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SynthOptions {
    /// Skip the additive noise; the frame still declares `sigma2`.
    pub noiseless: bool,
    /// Use this gain instead of drawing one.
    pub beta: Option<Complex64>,
}

/// Synthesize `y[k,l] = β e^{-j2πkΔf d/c} e^{+j2πlTp v/λ} + z[k,l]`.
///
/// `sigma2` is the noise variance; it must be positive even for noiseless
/// frames because it also defines the declared SNR.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_frame<R: Rng + ?Sized>(
    pair_index: usize,
    pair: &ApPair,
    truth: &Scene,
    cfg: &OfdmConfig,
    snr: &SnrModel,
    sigma2: f64,
    opts: SynthOptions,
    rng: &mut R,
) -> Result<ReceivedFrame> {
    if !(sigma2 > 0.0) {
        return Err(SenseError::NonPositiveInput("sigma2"));
    }
    let d = bistatic_range(truth.target_pos, pair);
    let v = bistatic_speed(truth.target_pos, truth.target_vel, pair)?;
    let sigma_tilde2 = snr.sigma_tilde2(pair_index, pair, truth, cfg, sigma2)?;
    let beta = match opts.beta {
        Some(b) => b,
        None => draw_beta(sigma_tilde2, rng),
    };
    let f = freq_steering(d, cfg);
    let s = time_steering(v, cfg);
    let mut y = Array2::from_shape_fn((cfg.k, cfg.l), |(k, l)| beta * f[k] * s[l]);
    if !opts.noiseless {
        for z in y.iter_mut() {
            *z += complex_normal(sigma2, rng);
        }
    }
    Ok(ReceivedFrame {
        pair: *pair,
        y,
        sigma2,
        sigma_tilde2,
    })
}

/// All frames of one Monte Carlo trial.
pub fn synthesize_trial(
    truth: &Scene,
    cfg: &OfdmConfig,
    snr: &SnrModel,
    sigma2: f64,
    opts: SynthOptions,
    seed: u64,
    trial: u64,
) -> Result<Vec<ReceivedFrame>> {
    truth
        .pairs()
        .iter()
        .enumerate()
        .map(|(n, pair)| {
            let mut rng = substream(seed, trial, n as u64);
            synthesize_frame(n, pair, truth, cfg, snr, sigma2, opts, &mut rng)
        })
        .collect()
}

/// Declared per-pair SNR `σ̃² / σ²`.
pub fn pair_snr(frame: &ReceivedFrame) -> f64 {
    frame.sigma_tilde2 / frame.sigma2
}
