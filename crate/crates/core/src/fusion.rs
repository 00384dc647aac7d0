//! Bayesian fusion of per-pair matched-filter energies.
//!
//! Every pair contributes `w · |ψᴴ y|²`, where `ψ` is the delay (and/or
//! Doppler) steering vector implied by a hypothesised target state and `w`
//! depends on the pair's declared SNR `ρ² = σ̃²/σ²`. Additive constants of the
//! log-posterior are dropped, so objective values are only comparable within
//! one frame set.
//!
//! Two evaluation paths exist. The direct functions (`fused_*`) follow the
//! definitions literally and serve as reference. [`LagObjective`] rewrites the
//! per-symbol energy sum through lag autocorrelations,
//!
//! `Σ_l |ψ_f(θ)ᴴ y(·,l)|² = a₀ + 2 Re Σ_{m≥1} a_m e^{jθm}`,
//! `a_m = Σ_l Σ_k y(k+m,l) ȳ(k,l)`,
//!
//! which costs O(K) per pair instead of O(KL) and is what the solvers use.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1, Axis as NdAxis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SenseError};
use crate::geometry::{bistatic_range, direction_row, Point2, Vel2};
use crate::scene::{pair_snr, ReceivedFrame};
use crate::waveform::{freq_steering, time_steering, OfdmConfig};
use crate::SPEED_OF_LIGHT;

/// Closed axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl Rect {
    pub const fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Self {
        Self { xmin, xmax, ymin, ymax }
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        let finite = [self.xmin, self.xmax, self.ymin, self.ymax]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.xmin >= self.xmax || self.ymin >= self.ymax {
            return Err(SenseError::InvalidConfig(format!(
                "{what}: need min < max on both axes, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        x[0] >= self.xmin && x[0] <= self.xmax && x[1] >= self.ymin && x[1] <= self.ymax
    }

    pub fn clip(&self, x: [f64; 2]) -> [f64; 2] {
        [x[0].clamp(self.xmin, self.xmax), x[1].clamp(self.ymin, self.ymax)]
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax)]
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }
}

/// Uniform prior support for position and velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorBox {
    pub pos: Rect,
    pub vel: Rect,
}

impl PriorBox {
    pub fn validate(&self) -> Result<()> {
        self.pos.validate("prior.pos")?;
        self.vel.validate("prior.vel")
    }

    pub fn contains(&self, p: Point2, v: Vel2) -> bool {
        self.pos.contains(p.into()) && self.vel.contains(v.into())
    }
}

/// Per-pair fusion weights and the matched-filter normalization energies.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    pub weights: Vec<f64>,
    pub energies: Vec<f64>,
}

impl FusionWeights {
    /// Bayes weights `ρ²/(σ²(KLρ²+1))` from each frame's declared statistics.
    pub fn bayes(frames: &[ReceivedFrame]) -> Result<Self> {
        if frames.is_empty() {
            return Err(SenseError::EmptyList);
        }
        let mut weights = Vec::with_capacity(frames.len());
        let mut energies = Vec::with_capacity(frames.len());
        for f in frames {
            let rho2 = pair_snr(f);
            weights.push(bayes_weight(rho2, f.k(), f.l(), f.sigma2));
            energies.push(normalization_energy(rho2, f.k(), f.l(), f.sigma2));
        }
        let out = Self { weights, energies };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(SenseError::NonPositiveInput("fusion weight"));
        }
        if !self.weights.iter().any(|w| *w > 0.0) {
            return Err(SenseError::AllZeroWeights);
        }
        Ok(())
    }
}

/// How pairs are weighted inside a fused objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// SNR-aware Bayes weights.
    Bayes,
    /// Every pair counts once.
    Unit,
    /// Unit weights on the square root of each pair's matched-filter energy
    /// (non-coherent signal fusion sums moduli).
    Modulus,
}

impl Weighting {
    fn shape(self, energy: f64) -> f64 {
        match self {
            Weighting::Modulus => energy.sqrt(),
            _ => energy,
        }
    }
}

pub fn bayes_weight(rho2: f64, k: usize, l: usize, sigma2: f64) -> f64 {
    rho2 / (sigma2 * ((k * l) as f64 * rho2 + 1.0))
}

/// Weight of the delay-only objective, where each symbol is a separate look.
pub fn position_weight(rho2: f64, k: usize, sigma2: f64) -> f64 {
    rho2 / (sigma2 * (k as f64 * rho2 + 1.0))
}

/// Weight of the Doppler-only objective, where each subcarrier is a separate look.
pub fn velocity_weight(rho2: f64, l: usize, sigma2: f64) -> f64 {
    rho2 / (sigma2 * (l as f64 * rho2 + 1.0))
}

/// Expected matched-filter energy in the target cell, `σ²(KLρ²+1)`.
pub fn normalization_energy(rho2: f64, k: usize, l: usize, sigma2: f64) -> f64 {
    sigma2 * ((k * l) as f64 * rho2 + 1.0)
}

/// Log of the uniform prior with its normalizing constant dropped.
pub fn log_prior(p: Point2, v: Vel2, prior: &PriorBox) -> f64 {
    if prior.contains(p, v) {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

fn stage_weight(frame: &ReceivedFrame, weighting: Weighting, look: usize) -> f64 {
    match weighting {
        Weighting::Bayes => position_weight(pair_snr(frame), look, frame.sigma2),
        Weighting::Unit | Weighting::Modulus => 1.0,
    }
}

fn check_frames(frames: &[ReceivedFrame], cfg: &OfdmConfig) -> Result<()> {
    if frames.is_empty() {
        return Err(SenseError::EmptyList);
    }
    for f in frames {
        if f.y.dim() != (cfg.k, cfg.l) {
            return Err(SenseError::ShapeMismatch {
                expected: (cfg.k, cfg.l),
                got: f.y.dim(),
            });
        }
    }
    Ok(())
}

fn steer_energy(psi: &[Complex64], y: ArrayView1<Complex64>) -> f64 {
    psi.iter()
        .zip(y.iter())
        .map(|(a, b)| a.conj() * b)
        .sum::<Complex64>()
        .norm_sqr()
}

/// `Σ_l |ψ_f(d(p))ᴴ y(·,l)|²` per pair, weighted.
pub fn position_term(p: Point2, frames: &[ReceivedFrame], cfg: &OfdmConfig, weighting: Weighting) -> Result<f64> {
    check_frames(frames, cfg)?;
    Ok(frames
        .iter()
        .map(|f| {
            let psi = freq_steering(bistatic_range(p, &f.pair), cfg);
            let e: f64 = f.y.axis_iter(NdAxis(1)).map(|col| steer_energy(&psi, col)).sum();
            stage_weight(f, weighting, cfg.k) * weighting.shape(e)
        })
        .sum())
}

/// `Σ_k |ψ_s(v(p̂,v))ᴴ y(k,·)|²` per pair, weighted.
pub fn velocity_term(
    v: Vel2,
    p_hat: Point2,
    frames: &[ReceivedFrame],
    cfg: &OfdmConfig,
    weighting: Weighting,
) -> Result<f64> {
    check_frames(frames, cfg)?;
    let mut total = 0.0;
    for f in frames {
        let row = direction_row(p_hat, &f.pair)?;
        let psi = time_steering(row[0] * v.vx + row[1] * v.vy, cfg);
        let e: f64 = f.y.axis_iter(NdAxis(0)).map(|r| steer_energy(&psi, r)).sum();
        total += stage_weight(f, weighting, cfg.l) * weighting.shape(e);
    }
    Ok(total)
}

/// Delay-only fused objective with Bayes weights `ρ²/(σ²(Kρ²+1))`.
pub fn fused_position_objective(p: Point2, frames: &[ReceivedFrame], cfg: &OfdmConfig) -> Result<f64> {
    position_term(p, frames, cfg, Weighting::Bayes)
}

/// Doppler-only fused objective at a fixed position estimate, Bayes weights
/// `ρ²/(σ²(Lρ²+1))`.
pub fn fused_velocity_objective(v: Vel2, p_hat: Point2, frames: &[ReceivedFrame], cfg: &OfdmConfig) -> Result<f64> {
    velocity_term(v, p_hat, frames, cfg, Weighting::Bayes)
}

/// `|ψ_xyᴴ y|²` for one pair, with `ψ_xy = ψ_f ⊗ ψ_s` stored subcarrier-major.
fn joint_energy(f: &ReceivedFrame, p: Point2, v: Vel2, cfg: &OfdmConfig) -> Result<f64> {
    let row = direction_row(p, &f.pair)?;
    let pf = freq_steering(bistatic_range(p, &f.pair), cfg);
    let ps = time_steering(row[0] * v.vx + row[1] * v.vy, cfg);
    let mut acc = Complex64::new(0.0, 0.0);
    for ((k, l), y) in f.y.indexed_iter() {
        acc += (pf[k] * ps[l]).conj() * y;
    }
    Ok(acc.norm_sqr())
}

/// `Σ ρ²|ψ_xyᴴ y|² / (σ²(KLρ²+1))`, the data term of the joint objective.
pub fn fused_observed_term(p: Point2, v: Vel2, frames: &[ReceivedFrame], cfg: &OfdmConfig) -> Result<f64> {
    check_frames(frames, cfg)?;
    let mut total = 0.0;
    for f in frames {
        total += bayes_weight(pair_snr(f), cfg.k, cfg.l, f.sigma2) * joint_energy(f, p, v, cfg)?;
    }
    Ok(total)
}

/// Joint log-posterior up to constants; `-∞` outside the prior.
pub fn fused_full_objective(
    p: Point2,
    v: Vel2,
    frames: &[ReceivedFrame],
    cfg: &OfdmConfig,
    prior: &PriorBox,
) -> Result<f64> {
    let lp = log_prior(p, v, prior);
    if lp == f64::NEG_INFINITY {
        return Ok(lp);
    }
    Ok(lp + fused_observed_term(p, v, frames, cfg)?)
}

/// `Σ ρ² |ψ_xyᴴ y|² / E²` with `E² = σ²(KLρ²+1)`.
pub fn normalized_fused_spectrum(p: Point2, v: Vel2, frames: &[ReceivedFrame], cfg: &OfdmConfig) -> Result<f64> {
    check_frames(frames, cfg)?;
    let mut total = 0.0;
    for f in frames {
        let rho2 = pair_snr(f);
        let e2 = normalization_energy(rho2, cfg.k, cfg.l, f.sigma2);
        total += rho2 * joint_energy(f, p, v, cfg)? / e2;
    }
    Ok(total)
}

/// Lag autocorrelation of `y` along `axis`, summed over the other axis:
/// `r[m] = Σ y[i+m] ȳ[i]` for `m = 0..n`.
pub fn lag_autocorrelation(y: &Array2<Complex64>, axis: usize) -> Vec<Complex64> {
    let n = y.len_of(NdAxis(axis));
    let nfft = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(nfft);
    let inv = planner.plan_fft_inverse(nfft);
    let mut power = vec![Complex64::new(0.0, 0.0); nfft];
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    for lane in y.lanes(NdAxis(axis)) {
        buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for (b, v) in buf.iter_mut().zip(lane.iter()) {
            *b = *v;
        }
        fwd.process(&mut buf);
        for (p, b) in power.iter_mut().zip(&buf) {
            p.re += b.norm_sqr();
        }
    }
    inv.process(&mut power);
    let scale = 1.0 / nfft as f64;
    power.truncate(n);
    power.iter_mut().for_each(|z| *z *= scale);
    power
}

#[derive(Debug, Clone, Copy)]
enum PhaseMap {
    Range { tx: Point2, rx: Point2, offset: f64 },
    Speed { row: [f64; 2] },
}

impl PhaseMap {
    #[inline]
    fn apply(&self, x: [f64; 2]) -> f64 {
        match *self {
            PhaseMap::Range { tx, rx, offset } => {
                (x[0] - tx.x).hypot(x[1] - tx.y) + (x[0] - rx.x).hypot(x[1] - rx.y) + offset
            }
            PhaseMap::Speed { row } => row[0] * x[0] + row[1] * x[1],
        }
    }
}

/// `a₀ + 2 Re Σ_{m≥1} a_m e^{jθm}` by Clenshaw's recurrence, clamped at zero
/// against rounding.
#[inline]
fn clenshaw(a0: f64, re: &[f64], im: &[f64], theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let c2 = 2.0 * c;
    let (mut b1r, mut b1i, mut b2r, mut b2i) = (0.0, 0.0, 0.0, 0.0);
    for m in (1..re.len()).rev() {
        let nr = re[m] + c2 * b1r - b2r;
        let ni = im[m] + c2 * b1i - b2i;
        b2r = b1r;
        b2i = b1i;
        b1r = nr;
        b1i = ni;
    }
    (a0 + 2.0 * (b1r * c - b1i * s - b2r)).max(0.0)
}

/// One pair's delay-only (or Doppler-only) energy profile as a function of
/// bistatic range (or speed).
#[derive(Debug, Clone)]
pub struct LagProfile {
    kappa: f64,
    a0: f64,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl LagProfile {
    /// `d ↦ Σ_l |ψ_f(d)ᴴ y(·,l)|²`.
    pub fn range(frame: &ReceivedFrame, cfg: &OfdmConfig) -> Self {
        Self::from_lags(
            lag_autocorrelation(&frame.y, 0),
            2.0 * PI * cfg.delta_f / SPEED_OF_LIGHT,
        )
    }

    /// `v ↦ Σ_k |ψ_s(v)ᴴ y(k,·)|²`.
    pub fn speed(frame: &ReceivedFrame, cfg: &OfdmConfig) -> Self {
        Self::from_lags(lag_autocorrelation(&frame.y, 1), -2.0 * PI * cfg.tp / cfg.wavelength())
    }

    fn from_lags(lags: Vec<Complex64>, kappa: f64) -> Self {
        Self {
            kappa,
            a0: lags[0].re,
            re: lags.iter().map(|z| z.re).collect(),
            im: lags.iter().map(|z| z.im).collect(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        clenshaw(self.a0, &self.re, &self.im, self.kappa * x)
    }
}

#[derive(Debug, Clone)]
struct LagTerm {
    map: PhaseMap,
    weight: f64,
    a0: f64,
    re: Vec<f64>,
    im: Vec<f64>,
}

const LANES: usize = 8;

/// Separable fused objective evaluated from lag statistics.
#[derive(Debug, Clone)]
pub struct LagObjective {
    terms: Vec<LagTerm>,
    kappa: f64,
    weighting: Weighting,
}

impl LagObjective {
    /// Delay-only objective over position.
    pub fn position(frames: &[ReceivedFrame], cfg: &OfdmConfig, weighting: Weighting) -> Result<Self> {
        check_frames(frames, cfg)?;
        let terms = frames
            .iter()
            .map(|f| {
                let map = PhaseMap::Range {
                    tx: f.pair.tx_pos,
                    rx: f.pair.rx_pos,
                    offset: f.pair.range_offset,
                };
                Self::term(map, stage_weight(f, weighting, cfg.k), lag_autocorrelation(&f.y, 0))
            })
            .collect();
        Ok(Self {
            terms,
            kappa: 2.0 * PI * cfg.delta_f / SPEED_OF_LIGHT,
            weighting,
        })
    }

    /// Doppler-only objective over velocity at a fixed position estimate.
    pub fn velocity(frames: &[ReceivedFrame], cfg: &OfdmConfig, p_hat: Point2, weighting: Weighting) -> Result<Self> {
        check_frames(frames, cfg)?;
        let mut terms = Vec::with_capacity(frames.len());
        for f in frames {
            let map = PhaseMap::Speed {
                row: direction_row(p_hat, &f.pair)?,
            };
            terms.push(Self::term(
                map,
                stage_weight(f, weighting, cfg.l),
                lag_autocorrelation(&f.y, 1),
            ));
        }
        // the symbol steering vector rotates forward, hence the sign
        Ok(Self {
            terms,
            kappa: -2.0 * PI * cfg.tp / cfg.wavelength(),
            weighting,
        })
    }

    fn term(map: PhaseMap, weight: f64, lags: Vec<Complex64>) -> LagTerm {
        LagTerm {
            map,
            weight,
            a0: lags[0].re,
            re: lags.iter().map(|z| z.re).collect(),
            im: lags.iter().map(|z| z.im).collect(),
        }
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.weight
                    * self
                        .weighting
                        .shape(clenshaw(t.a0, &t.re, &t.im, self.kappa * t.map.apply(x)))
            })
            .sum()
    }

    /// Evaluate many points; same values as [`LagObjective::eval`].
    pub fn eval_batch(&self, xs: &[[f64; 2]], out: &mut [f64]) {
        assert_eq!(xs.len(), out.len());
        for (xc, oc) in xs.chunks(LANES).zip(out.chunks_mut(LANES)) {
            if xc.len() < LANES {
                for (x, o) in xc.iter().zip(oc.iter_mut()) {
                    *o = self.eval(*x);
                }
                continue;
            }
            let mut acc = [0.0; LANES];
            for t in &self.terms {
                let mut c = [0.0; LANES];
                let mut s = [0.0; LANES];
                for j in 0..LANES {
                    let (sj, cj) = (self.kappa * t.map.apply(xc[j])).sin_cos();
                    c[j] = cj;
                    s[j] = sj;
                }
                let c2: [f64; LANES] = std::array::from_fn(|j| 2.0 * c[j]);
                let mut b1r = [0.0; LANES];
                let mut b1i = [0.0; LANES];
                let mut b2r = [0.0; LANES];
                let mut b2i = [0.0; LANES];
                for m in (1..t.re.len()).rev() {
                    let (ar, ai) = (t.re[m], t.im[m]);
                    for j in 0..LANES {
                        let nr = ar + c2[j] * b1r[j] - b2r[j];
                        let ni = ai + c2[j] * b1i[j] - b2i[j];
                        b2r[j] = b1r[j];
                        b2i[j] = b1i[j];
                        b1r[j] = nr;
                        b1i[j] = ni;
                    }
                }
                for j in 0..LANES {
                    let e = t.a0 + 2.0 * (b1r[j] * c[j] - b1i[j] * s[j] - b2r[j]);
                    acc[j] += t.weight * self.weighting.shape(e.max(0.0));
                }
            }
            oc.copy_from_slice(&acc);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Position,
    Velocity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub origin: f64,
    pub step: f64,
    pub count: usize,
}

impl GridAxis {
    /// Points `lo, lo+step, …` not exceeding `hi` (plus a small tolerance).
    pub fn spanning(lo: f64, hi: f64, step: f64) -> Self {
        let count = ((hi - lo) / step + 1e-9).floor().max(0.0) as usize + 1;
        Self {
            origin: lo,
            step,
            count,
        }
    }

    pub fn value(&self, i: usize) -> f64 {
        self.origin + self.step * i as f64
    }
}

/// Real-valued map over a 2D hypothesis grid; rows follow `y`, columns `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumGrid {
    pub x: GridAxis,
    pub y: GridAxis,
    pub values: Array2<f64>,
    pub domain: Domain,
}

impl SpectrumGrid {
    pub fn evaluate<F>(x: GridAxis, y: GridAxis, domain: Domain, f: F) -> Result<Self>
    where
        F: Fn([f64; 2]) -> Result<f64> + Sync,
    {
        let rows: Vec<Vec<f64>> = (0..y.count)
            .into_par_iter()
            .map(|r| {
                (0..x.count)
                    .map(|c| f([x.value(c), y.value(r)]))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(SenseError::Diverged("non-finite spectrum value".into()));
        }
        let values =
            Array2::from_shape_vec((y.count, x.count), flat).map_err(|e| SenseError::InvalidConfig(e.to_string()))?;
        Ok(Self { x, y, values, domain })
    }

    /// Location of the largest value; ties go to the lowest (row, column).
    pub fn argmax(&self) -> [f64; 2] {
        let mut best = f64::NEG_INFINITY;
        let mut at = (0, 0);
        for ((r, c), v) in self.values.indexed_iter() {
            if *v > best {
                best = *v;
                at = (r, c);
            }
        }
        [self.x.value(at.1), self.y.value(at.0)]
    }
}
