//! Comparison fusion schemes: signal fusion (non-coherent and coherent),
//! hard and soft parameter fusion, and symbol fusion. All of them return the
//! same [`Estimate`] as the Bayesian solver.
//!
//! The parameter and symbol schemes first reduce each frame to a per-pair
//! range and speed estimate ([`per_pair_estimate`]).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analysis::{crlb_range, crlb_speed, prior_image};
use crate::error::{Result, SenseError};
use crate::fusion::Rect;
use crate::fusion::{LagObjective, LagProfile, PriorBox, Weighting};
use crate::geometry::{bistatic_range, direction_row, ApPair, Point2, Vel2};
use crate::scene::ReceivedFrame;
use crate::solvers::{
    coarse_grid_hit, coarse_grid_search, decoupled_solve, pcga_stage, Estimate, GridSpec, Objective, PcgaParams,
    PcgaSettings, StageOutcome,
};
use crate::waveform::{freq_steering, time_steering, OfdmConfig};

/// Floor applied to each pair's real-part score in symbol fusion.
pub const SYMBOL_FLOOR: f64 = 1e-12;

/// One pair's reduced observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMeasurement {
    pub pair_index: usize,
    pub d_hat: f64,
    pub v_hat: f64,
    pub d_var: f64,
    pub v_var: f64,
}

/// Closed intervals of bistatic range and speed searched by
/// [`per_pair_estimate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBounds {
    pub d: (f64, f64),
    pub v: (f64, f64),
}

/// The pair's image of the prior boxes, widened by one resolution cell on
/// each side.
pub fn search_bounds(pair: &ApPair, cfg: &OfdmConfig, prior: &PriorBox) -> Result<SearchBounds> {
    let img = prior_image(pair, prior, 41)?;
    let (rd, rv) = (cfg.range_resolution(), cfg.velocity_resolution());
    Ok(SearchBounds {
        d: ((img.d_min - rd).max(0.0), img.d_max + rd),
        v: (img.v_min - rv, img.v_max + rv),
    })
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Grid scan at `step` followed by golden-section refinement around the
/// best sample. The result stays inside `[lo, hi]`.
fn scan_and_refine(f: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> f64 {
    let n = ((hi - lo) / step).ceil() as usize;
    let at = |i: usize| (lo + step * i as f64).min(hi);
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for i in 0..=n {
        let v = f(at(i));
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut a = at(best_i.saturating_sub(1));
    let mut b = at((best_i + 1).min(n));
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-6 * step {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    if f(x) >= best {
        x
    } else {
        at(best_i)
    }
}

/// 1D matched-filter peak in delay, then in Doppler, over `bounds`.
///
/// The scan runs at one eighth of a resolution cell. A window narrower than
/// one cell cannot contain a main lobe and is rejected; a peak on the window
/// edge is returned as is.
pub fn per_pair_estimate(
    pair_index: usize,
    frame: &ReceivedFrame,
    cfg: &OfdmConfig,
    bounds: &SearchBounds,
) -> Result<PairMeasurement> {
    let (rd, rv) = (cfg.range_resolution(), cfg.velocity_resolution());
    if bounds.d.1 - bounds.d.0 < rd || bounds.v.1 - bounds.v.0 < rv {
        return Err(SenseError::BoundsTooNarrow(format!(
            "pair {pair_index}: window {:?} x {:?} is smaller than one resolution cell",
            bounds.d, bounds.v
        )));
    }
    let range = LagProfile::range(frame, cfg);
    let speed = LagProfile::speed(frame, cfg);
    let d_hat = scan_and_refine(|d| range.eval(d), bounds.d.0, bounds.d.1, rd / 8.0);
    let v_hat = scan_and_refine(|v| speed.eval(v), bounds.v.0, bounds.v.1, rv / 8.0);
    Ok(PairMeasurement {
        pair_index,
        d_hat,
        v_hat,
        d_var: crlb_range(frame.sigma2, frame.sigma_tilde2, cfg.k, cfg.l, cfg.delta_f)?,
        v_var: crlb_speed(frame.sigma2, frame.sigma_tilde2, cfg.k, cfg.l, cfg.tp, cfg.wavelength())?,
    })
}

/// Per-pair estimates for every frame, searching each pair's prior image.
pub fn measure_pairs(frames: &[ReceivedFrame], cfg: &OfdmConfig, prior: &PriorBox) -> Result<Vec<PairMeasurement>> {
    frames
        .iter()
        .enumerate()
        .map(|(n, f)| per_pair_estimate(n, f, cfg, &search_bounds(&f.pair, cfg, prior)?))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalMode {
    NonCoherent,
    Coherent,
}

/// Joint delay-Doppler spectrum of signal fusion with unit weights.
pub struct SignalSpectrum<'a> {
    frames: &'a [ReceivedFrame],
    cfg: OfdmConfig,
    mode: SignalMode,
}

impl SignalSpectrum<'_> {
    /// Non-coherent: `Σ |ψ_xyᴴ y|`; coherent: `|Σ ψ_xyᴴ y|²`.
    pub fn eval(&self, p: Point2, v: Vel2) -> Result<f64> {
        let mut sum = Complex64::new(0.0, 0.0);
        let mut modulus = 0.0;
        for f in self.frames {
            let row = direction_row(p, &f.pair)?;
            let pf = freq_steering(bistatic_range(p, &f.pair), &self.cfg);
            let ps = time_steering(row[0] * v.vx + row[1] * v.vy, &self.cfg);
            let mut acc = Complex64::new(0.0, 0.0);
            for ((k, l), y) in f.y.indexed_iter() {
                acc += (pf[k] * ps[l]).conj() * y;
            }
            sum += acc;
            modulus += acc.norm();
        }
        Ok(match self.mode {
            SignalMode::NonCoherent => modulus,
            SignalMode::Coherent => sum.norm_sqr(),
        })
    }
}

pub fn signal_fusion_spectrum<'a>(
    frames: &'a [ReceivedFrame],
    cfg: &OfdmConfig,
    mode: SignalMode,
) -> Result<SignalSpectrum<'a>> {
    if frames.is_empty() {
        return Err(SenseError::EmptyList);
    }
    Ok(SignalSpectrum {
        frames,
        cfg: *cfg,
        mode,
    })
}

struct CoherentPosition<'a> {
    frames: &'a [ReceivedFrame],
    cfg: OfdmConfig,
}

impl Objective for CoherentPosition<'_> {
    fn eval(&self, x: [f64; 2]) -> f64 {
        let mut t = vec![Complex64::new(0.0, 0.0); self.cfg.l];
        for f in self.frames {
            let psi = freq_steering(bistatic_range(x.into(), &f.pair), &self.cfg);
            for ((k, l), y) in f.y.indexed_iter() {
                t[l] += psi[k].conj() * y;
            }
        }
        t.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// `Σ_k |Σ_n ψ_s,nᴴ y_n(k,·)|²` at a fixed position.
struct CoherentVelocity<'a> {
    frames: &'a [ReceivedFrame],
    rows: Vec<[f64; 2]>,
    cfg: OfdmConfig,
}

impl Objective for CoherentVelocity<'_> {
    fn eval(&self, x: [f64; 2]) -> f64 {
        let mut t = vec![Complex64::new(0.0, 0.0); self.cfg.k];
        for (f, g) in self.frames.iter().zip(&self.rows) {
            let psi = time_steering(g[0] * x[0] + g[1] * x[1], &self.cfg);
            for ((k, l), y) in f.y.indexed_iter() {
                t[k] += psi[l].conj() * y;
            }
        }
        t.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Signal fusion solved with the same decoupled PCGA as the Bayesian scheme.
pub fn signal_fusion_estimate(
    frames: &[ReceivedFrame],
    cfg: &OfdmConfig,
    prior: &PriorBox,
    settings: &PcgaSettings,
    mode: SignalMode,
) -> Result<Estimate> {
    match mode {
        SignalMode::NonCoherent => {
            let pos = LagObjective::position(frames, cfg, Weighting::Modulus)?;
            decoupled_solve(
                &pos,
                |p| LagObjective::velocity(frames, cfg, p, Weighting::Modulus),
                prior,
                settings,
            )
        }
        SignalMode::Coherent => {
            signal_fusion_spectrum(frames, cfg, mode)?;
            let pos = CoherentPosition { frames, cfg: *cfg };
            decoupled_solve(
                &pos,
                |p| {
                    let rows = frames
                        .iter()
                        .map(|f| direction_row(p, &f.pair))
                        .collect::<Result<_>>()?;
                    Ok(CoherentVelocity {
                        frames,
                        rows,
                        cfg: *cfg,
                    })
                },
                prior,
                settings,
            )
        }
    }
}

/// Position objective of coherent signal fusion, `Σ_l |Σ_n ψ_f,nᴴ y_n(·,l)|²`.
pub fn coherent_position_objective<'a>(frames: &'a [ReceivedFrame], cfg: &OfdmConfig) -> Result<impl Objective + 'a> {
    if frames.is_empty() {
        return Err(SenseError::EmptyList);
    }
    Ok(CoherentPosition { frames, cfg: *cfg })
}

fn pair_of<'a>(m: &PairMeasurement, pairs: &'a [ApPair]) -> Result<&'a ApPair> {
    pairs
        .get(m.pair_index)
        .ok_or_else(|| SenseError::InvalidCounts(format!("measurement refers to pair {}", m.pair_index)))
}

fn solve2(a: [[f64; 2]; 2], b: [f64; 2]) -> Result<[f64; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let trace = a[0][0] + a[1][1];
    if !(det.abs() > 1e-12 * trace * trace) {
        return Err(SenseError::SingularNormalEquations);
    }
    Ok([
        (a[1][1] * b[0] - a[0][1] * b[1]) / det,
        (a[0][0] * b[1] - a[1][0] * b[0]) / det,
    ])
}

const HARD_MAX_ITER: usize = 50;

/// Weighted least squares on the range ellipses (Gauss-Newton from `init`),
/// then linear weighted least squares for velocity at the position estimate.
pub fn parameter_fusion_hard(measurements: &[PairMeasurement], pairs: &[ApPair], init: Point2) -> Result<Estimate> {
    if measurements.len() < 2 {
        return Err(SenseError::SingularNormalEquations);
    }
    let mut p = init;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < HARD_MAX_ITER {
        iterations += 1;
        let (mut a, mut b) = ([[0.0; 2]; 2], [0.0; 2]);
        for m in measurements {
            let pair = pair_of(m, pairs)?;
            let g = direction_row(p, pair)?;
            let r = m.d_hat - bistatic_range(p, pair);
            for i in 0..2 {
                b[i] += g[i] * r / m.d_var;
                for j in 0..2 {
                    a[i][j] += g[i] * g[j] / m.d_var;
                }
            }
        }
        let step = solve2(a, b)?;
        p = Point2::new(p.x + step[0], p.y + step[1]);
        if !p.is_finite() || p.x.abs().max(p.y.abs()) > 1e7 {
            return Err(SenseError::Diverged(format!(
                "Gauss-Newton left the scene at ({}, {})",
                p.x, p.y
            )));
        }
        if step[0].hypot(step[1]) < 1e-10 * (1.0 + p.x.hypot(p.y)) {
            converged = true;
            break;
        }
    }
    let (mut a, mut b) = ([[0.0; 2]; 2], [0.0; 2]);
    let mut cost = 0.0;
    for m in measurements {
        let pair = pair_of(m, pairs)?;
        let g = direction_row(p, pair)?;
        cost += (m.d_hat - bistatic_range(p, pair)).powi(2) / m.d_var;
        for i in 0..2 {
            b[i] += g[i] * m.v_hat / m.v_var;
            for j in 0..2 {
                a[i][j] += g[i] * g[j] / m.v_var;
            }
        }
    }
    let v = solve2(a, b)?;
    Ok(Estimate {
        p_hat: p,
        v_hat: Vel2::new(v[0], v[1]),
        iterations,
        converged,
        objective_at_solution: -0.5 * cost,
        flat: false,
    })
}

/// Negative quadratic misfit of the range ellipses, `-Σ (d_n(p) − d̂_n)² / (2 σ_d,n²)`.
pub fn soft_position_objective(measurements: &[PairMeasurement], pairs: &[ApPair]) -> Result<impl Objective> {
    let geo: Vec<(ApPair, f64, f64)> = measurements
        .iter()
        .map(|m| Ok((*pair_of(m, pairs)?, m.d_hat, m.d_var)))
        .collect::<Result<_>>()?;
    Ok(move |x: [f64; 2]| {
        -geo.iter()
            .map(|(pair, d, var)| (bistatic_range(x.into(), pair) - d).powi(2) / (2.0 * var))
            .sum::<f64>()
    })
}

fn soft_velocity_objective(
    measurements: &[PairMeasurement],
    pairs: &[ApPair],
    p_hat: Point2,
) -> Result<impl Objective> {
    let rows: Vec<([f64; 2], f64, f64)> = measurements
        .iter()
        .map(|m| Ok((direction_row(p_hat, pair_of(m, pairs)?)?, m.v_hat, m.v_var)))
        .collect::<Result<_>>()?;
    Ok(move |x: [f64; 2]| {
        -rows
            .iter()
            .map(|(g, v, var)| (g[0] * x[0] + g[1] * x[1] - v).powi(2) / (2.0 * var))
            .sum::<f64>()
    })
}

/// Hard fusion started from the coarse-grid peak of the soft objective, with
/// the result clipped to the prior boxes.
pub fn hard_fusion_estimate(
    measurements: &[PairMeasurement],
    pairs: &[ApPair],
    prior: &PriorBox,
    settings: &PcgaSettings,
) -> Result<Estimate> {
    let soft = soft_position_objective(measurements, pairs)?;
    let init = coarse_grid_search(&soft, &settings.pos_grid, &prior.pos)?;
    let mut est = parameter_fusion_hard(measurements, pairs, init.into())?;
    est.p_hat = prior.pos.clip(est.p_hat.into()).into();
    est.v_hat = prior.vel.clip(est.v_hat.into()).into();
    Ok(est)
}

fn gauss_newton_curvature(rows: &[[f64; 2]], vars: &[f64]) -> f64 {
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for (g, var) in rows.iter().zip(vars) {
        a += g[0] * g[0] / var;
        b += g[0] * g[1] / var;
        c += g[1] * g[1] / var;
    }
    0.5 * (a + c) + (0.25 * (a - c).powi(2) + b * b).sqrt()
}

/// PCGA stage on a quadratic misfit. The nominal step is matched to the
/// largest Gauss-Newton curvature at the coarse peak; the spread-based
/// default is tuned for peaked spectra and crawls on a paraboloid.
fn quadratic_stage<O: Objective>(
    objective: &O,
    curvature: impl Fn([f64; 2]) -> Result<f64>,
    grid: &GridSpec,
    prior: &Rect,
    params: &PcgaParams,
) -> Result<StageOutcome> {
    let hit = coarse_grid_hit(objective, grid, prior)?;
    let mut params = *params;
    let lam = curvature(hit.x)?;
    if hit.spread > 0.0 && lam > 0.0 {
        params.eta = hit.spread / lam;
    }
    pcga_stage(objective, grid, prior, &params)
}

/// Gaussian reconstruction of each pair's likelihood around its estimate,
/// maximised with PCGA.
pub fn parameter_fusion_soft(
    measurements: &[PairMeasurement],
    pairs: &[ApPair],
    prior: &PriorBox,
    settings: &PcgaSettings,
) -> Result<Estimate> {
    if measurements.is_empty() {
        return Err(SenseError::EmptyList);
    }
    let used: Vec<ApPair> = measurements
        .iter()
        .map(|m| pair_of(m, pairs).copied())
        .collect::<Result<_>>()?;
    let rows_at =
        |x: [f64; 2]| -> Result<Vec<[f64; 2]>> { used.iter().map(|pr| direction_row(x.into(), pr)).collect() };
    let d_vars: Vec<f64> = measurements.iter().map(|m| m.d_var).collect();
    let v_vars: Vec<f64> = measurements.iter().map(|m| m.v_var).collect();

    let pos_obj = soft_position_objective(measurements, pairs)?;
    let pos = quadratic_stage(
        &pos_obj,
        |x| Ok(gauss_newton_curvature(&rows_at(x)?, &d_vars)),
        &settings.pos_grid,
        &prior.pos,
        &settings.pos_params,
    )?;
    let p_hat = Point2::from(pos.x);
    let rows = rows_at(pos.x)?;
    let vel_obj = soft_velocity_objective(measurements, pairs, p_hat)?;
    let vel = quadratic_stage(
        &vel_obj,
        |_| Ok(gauss_newton_curvature(&rows, &v_vars)),
        &settings.vel_grid,
        &prior.vel,
        &settings.vel_params,
    )?;
    let iters = |s: &StageOutcome| s.refine.as_ref().map_or(0, |r| r.iterations);
    let conv = |s: &StageOutcome| s.refine.as_ref().is_some_and(|r| r.converged);
    Ok(Estimate {
        p_hat,
        v_hat: Vel2::from(vel.x),
        iterations: iters(&pos) + iters(&vel),
        converged: conv(&pos) && conv(&vel),
        objective_at_solution: pos.value,
        flat: pos.flat || vel.flat,
    })
}

/// `Σ_k conj(ψ_k) x_k` with `ψ_k = e^{-jθk}`, by phasor recursion.
fn steer_sum(x: &[Complex64], theta: f64) -> Complex64 {
    let step = Complex64::from_polar(1.0, theta);
    let mut w = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for v in x {
        acc += w * v;
        w *= step;
    }
    acc
}

/// Product of phase-aligned real parts across pairs, over position.
///
/// Each frame is Doppler-compensated with its pair's speed estimate and
/// averaged over symbols to a K-vector `ȳ`. The common phase of the echo is
/// removed using the pair's range estimate, so a noiseless pair at the truth
/// scores `|β| K`.
pub struct SymbolSpectrum {
    terms: Vec<(ApPair, Vec<Complex64>)>,
    kappa: f64,
}

impl SymbolSpectrum {
    pub fn score(&self, n: usize, p: Point2) -> f64 {
        let (pair, ybar) = &self.terms[n];
        steer_sum(ybar, self.kappa * bistatic_range(p, pair)).re
    }
}

impl Objective for SymbolSpectrum {
    fn eval(&self, x: [f64; 2]) -> f64 {
        (0..self.terms.len())
            .map(|n| self.score(n, x.into()).max(SYMBOL_FLOOR))
            .product()
    }
}

pub fn symbol_fusion_spectrum(
    frames: &[ReceivedFrame],
    cfg: &OfdmConfig,
    measurements: &[PairMeasurement],
) -> Result<SymbolSpectrum> {
    if frames.is_empty() || frames.len() != measurements.len() {
        return Err(SenseError::InvalidCounts("one measurement per frame required".into()));
    }
    let kappa = cfg.range_phase(1.0);
    let mut terms = Vec::with_capacity(frames.len());
    for (f, m) in frames.iter().zip(measurements) {
        let s = time_steering(m.v_hat, cfg);
        let mut ybar: Vec<Complex64> =
            f.y.rows()
                .into_iter()
                .map(|row| row.iter().zip(&s).map(|(y, sl)| sl.conj() * y).sum::<Complex64>() / cfg.l as f64)
                .collect();
        let phase = steer_sum(&ybar, kappa * m.d_hat);
        if phase.norm() > 0.0 {
            let rot = phase.conj() / phase.norm();
            ybar.iter_mut().for_each(|z| *z *= rot);
        }
        terms.push((f.pair, ybar));
    }
    Ok(SymbolSpectrum { terms, kappa })
}

/// Velocity counterpart of [`SymbolSpectrum`] at a fixed position: each frame
/// is range-compensated at `p̂` and averaged over subcarriers.
struct SymbolVelocity {
    terms: Vec<([f64; 2], Vec<Complex64>)>,
    kappa: f64,
}

impl Objective for SymbolVelocity {
    fn eval(&self, x: [f64; 2]) -> f64 {
        self.terms
            .iter()
            .map(|(g, ybar)| {
                steer_sum(ybar, self.kappa * (g[0] * x[0] + g[1] * x[1]))
                    .re
                    .max(SYMBOL_FLOOR)
            })
            .product()
    }
}

fn symbol_velocity(
    frames: &[ReceivedFrame],
    cfg: &OfdmConfig,
    measurements: &[PairMeasurement],
    p_hat: Point2,
) -> Result<SymbolVelocity> {
    // time steering rotates forward, so the matched sum uses the negated phase
    let kappa = -cfg.speed_phase(1.0);
    let mut terms = Vec::with_capacity(frames.len());
    for (f, m) in frames.iter().zip(measurements) {
        let g = direction_row(p_hat, &f.pair)?;
        let psi = freq_steering(bistatic_range(p_hat, &f.pair), cfg);
        let mut ybar: Vec<Complex64> =
            f.y.columns()
                .into_iter()
                .map(|col| col.iter().zip(&psi).map(|(y, pk)| pk.conj() * y).sum::<Complex64>() / cfg.k as f64)
                .collect();
        let phase = steer_sum(&ybar, kappa * m.v_hat);
        if phase.norm() > 0.0 {
            let rot = phase.conj() / phase.norm();
            ybar.iter_mut().for_each(|z| *z *= rot);
        }
        terms.push((g, ybar));
    }
    Ok(SymbolVelocity { terms, kappa })
}

pub fn symbol_fusion_estimate(
    frames: &[ReceivedFrame],
    cfg: &OfdmConfig,
    measurements: &[PairMeasurement],
    prior: &PriorBox,
    settings: &PcgaSettings,
) -> Result<Estimate> {
    let pos = symbol_fusion_spectrum(frames, cfg, measurements)?;
    decoupled_solve(&pos, |p| symbol_velocity(frames, cfg, measurements, p), prior, settings)
}
