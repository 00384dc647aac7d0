//! Prior-constrained gradient ascent (coarse grid + coordinate ascent) and the
//! dense traversal it is checked against.
//!
//! The refine step works on a rescaled objective `g = f / s`, where `s` is
//! the spread of `f` over the coarse grid. The spread is shift-invariant, so
//! adding a constant to `f` leaves every iterate unchanged, and it makes the
//! step size `η` a property of the waveform rather than of the SNR.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SenseError};
use crate::fusion::{LagObjective, PriorBox, Rect};
use crate::geometry::{Point2, Vel2};
use crate::waveform::OfdmConfig;
use crate::SPEED_OF_LIGHT;

/// A real function of a 2D point (position or velocity).
pub trait Objective: Sync {
    fn eval(&self, x: [f64; 2]) -> f64;

    fn eval_batch(&self, xs: &[[f64; 2]], out: &mut [f64]) {
        for (x, o) in xs.iter().zip(out.iter_mut()) {
            *o = self.eval(*x);
        }
    }
}

impl<F: Fn([f64; 2]) -> f64 + Sync> Objective for F {
    fn eval(&self, x: [f64; 2]) -> f64 {
        self(x)
    }
}

impl Objective for LagObjective {
    fn eval(&self, x: [f64; 2]) -> f64 {
        LagObjective::eval(self, x)
    }

    fn eval_batch(&self, xs: &[[f64; 2]], out: &mut [f64]) {
        LagObjective::eval_batch(self, xs, out)
    }
}

/// Regular grid over a rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub bounds: Rect,
    pub dx: f64,
    pub dy: f64,
}

impl GridSpec {
    /// Half-resolution position grid over `bounds`.
    pub fn position_default(bounds: Rect, cfg: &OfdmConfig) -> Self {
        let step = SPEED_OF_LIGHT / (4.0 * cfg.k as f64 * cfg.delta_f);
        Self {
            bounds,
            dx: step,
            dy: step,
        }
    }

    /// Half-resolution velocity grid over `bounds`.
    pub fn velocity_default(bounds: Rect, cfg: &OfdmConfig) -> Self {
        let step = cfg.wavelength() / (4.0 * cfg.l as f64 * cfg.tp);
        Self {
            bounds,
            dx: step,
            dy: step,
        }
    }

    /// Steps must be positive and at most `max_step`, so that a grid point
    /// falls inside the main lobe.
    pub fn validate(&self, max_step: f64, what: &str) -> Result<()> {
        self.bounds.validate(what)?;
        for s in [self.dx, self.dy] {
            if !(s > 0.0 && s <= max_step * (1.0 + 1e-12)) {
                return Err(SenseError::InvalidConfig(format!(
                    "{what}: grid step {s} must lie in (0, {max_step}]"
                )));
            }
        }
        Ok(())
    }

    fn axis(lo: f64, step: f64, hi: f64) -> Vec<f64> {
        let n = ((hi - lo) / step + 1e-9).floor().max(0.0) as usize + 1;
        (0..n).map(|i| lo + step * i as f64).collect()
    }

    /// Grid points inside `clip`, row by row (y outer, x inner).
    pub fn points_within(&self, clip: &Rect) -> Vec<[f64; 2]> {
        let xs = Self::axis(self.bounds.xmin, self.dx, self.bounds.xmax);
        let ys = Self::axis(self.bounds.ymin, self.dy, self.bounds.ymax);
        let mut out = Vec::with_capacity(xs.len() * ys.len());
        for &y in &ys {
            for &x in &xs {
                if clip.contains([x, y]) {
                    out.push([x, y]);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcgaParams {
    /// Step scale applied to the gradient of the rescaled objective.
    pub eta: f64,
    /// Central finite-difference half-width.
    pub delta: f64,
    pub max_iter: usize,
    /// Stop once no coordinate moves by more than this.
    pub eps: f64,
    pub backtrack_factor: f64,
    pub backtrack_limit: usize,
}

/// Curvature of the normalised single-look delay profile at its peak,
/// `π²(K²−1)(Δf/c)²/3`, per m² of bistatic range.
fn range_curvature(cfg: &OfdmConfig) -> f64 {
    let k = cfg.k as f64;
    PI * PI * (k * k - 1.0) * (cfg.delta_f / SPEED_OF_LIGHT).powi(2) / 3.0
}

fn speed_curvature(cfg: &OfdmConfig) -> f64 {
    let l = cfg.l as f64;
    PI * PI * (l * l - 1.0) * (cfg.tp / cfg.wavelength()).powi(2) / 3.0
}

impl PcgaParams {
    /// The bistatic range gradient has norm at most 2, so the rescaled
    /// objective's curvature in position is bounded by `8a`; `η = 1/(8a)`
    /// keeps the ascent stable without backtracking near the peak.
    pub fn position_default(cfg: &OfdmConfig) -> Self {
        Self {
            eta: 1.0 / (8.0 * range_curvature(cfg)),
            delta: 1e-3,
            max_iter: 200,
            eps: 1e-4,
            backtrack_factor: 0.5,
            backtrack_limit: 20,
        }
    }

    pub fn velocity_default(cfg: &OfdmConfig) -> Self {
        let scale = cfg.velocity_resolution() / cfg.range_resolution();
        Self {
            eta: 1.0 / (8.0 * speed_curvature(cfg)),
            delta: 1e-4,
            max_iter: 200,
            eps: 1e-4 * scale,
            backtrack_factor: 0.5,
            backtrack_limit: 20,
        }
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        let ok = self.eta > 0.0
            && self.delta > 0.0
            && self.eps > 0.0
            && self.max_iter > 0
            && self.backtrack_factor > 0.0
            && self.backtrack_factor < 1.0
            && self.backtrack_limit > 0;
        if !ok {
            return Err(SenseError::InvalidConfig(format!(
                "{what}: invalid solver parameters {self:?}"
            )));
        }
        Ok(())
    }
}

/// Grids and step parameters for both stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcgaSettings {
    pub pos_grid: GridSpec,
    pub vel_grid: GridSpec,
    pub pos_params: PcgaParams,
    pub vel_params: PcgaParams,
}

impl PcgaSettings {
    pub fn defaults(cfg: &OfdmConfig, prior: &PriorBox) -> Self {
        Self {
            pos_grid: GridSpec::position_default(prior.pos, cfg),
            vel_grid: GridSpec::velocity_default(prior.vel, cfg),
            pos_params: PcgaParams::position_default(cfg),
            vel_params: PcgaParams::velocity_default(cfg),
        }
    }

    pub fn validate(&self, cfg: &OfdmConfig) -> Result<()> {
        self.pos_grid.validate(cfg.range_resolution(), "pos_grid")?;
        self.vel_grid.validate(cfg.velocity_resolution(), "vel_grid")?;
        self.pos_params.validate("pos_params")?;
        self.vel_params.validate("vel_params")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub p_hat: Point2,
    pub v_hat: Vel2,
    pub iterations: usize,
    pub converged: bool,
    pub objective_at_solution: f64,
    /// The objective did not vary over the coarse grid; the estimate is the
    /// first grid cell and carries no information.
    pub flat: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridHit {
    pub x: [f64; 2],
    pub value: f64,
    /// max − min of the objective over the grid points inside the prior.
    pub spread: f64,
}

/// Largest objective value over grid points inside `prior`; ties resolve to
/// the lowest (row, column) index and NaN values are skipped.
pub fn coarse_grid_search<O: Objective + ?Sized>(objective: &O, grid: &GridSpec, prior: &Rect) -> Result<[f64; 2]> {
    coarse_grid_hit(objective, grid, prior).map(|h| h.x)
}

pub fn coarse_grid_hit<O: Objective + ?Sized>(objective: &O, grid: &GridSpec, prior: &Rect) -> Result<GridHit> {
    let pts = grid.points_within(prior);
    if pts.is_empty() {
        return Err(SenseError::EmptyGrid);
    }
    let mut vals = vec![0.0; pts.len()];
    objective.eval_batch(&pts, &mut vals);
    let (mut best, mut lo, mut at) = (f64::NEG_INFINITY, f64::INFINITY, None);
    for (i, v) in vals.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        if at.is_none() || *v > best {
            best = *v;
            at = Some(i);
        }
        lo = lo.min(*v);
    }
    let i = at.unwrap_or(0);
    Ok(GridHit {
        x: pts[i],
        value: best,
        spread: best - lo,
    })
}

/// Result of one coordinate-ascent run.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub x: [f64; 2],
    pub iterations: usize,
    pub converged: bool,
    pub value: f64,
    /// Objective values at the start point and every accepted iterate.
    pub accepted: Vec<f64>,
    /// Norm of the projected finite-difference gradient of the rescaled
    /// objective at the final point.
    pub grad_norm: f64,
    /// Scale the objective was divided by.
    pub scale: f64,
}

/// Upper bound on the adaptive step relative to the nominal `η`.
pub const MAX_STEP_GAIN: f64 = 1e4;

/// Coordinate ascent from `init`, using `|f(init)|` (or 1) as the objective
/// scale.
pub fn cga_refine<O: Objective + ?Sized>(
    objective: &O,
    init: [f64; 2],
    params: &PcgaParams,
    prior: &Rect,
) -> Result<RefineOutcome> {
    let f0 = objective.eval(init).abs();
    let scale = if f0.is_finite() && f0 > 0.0 { f0 } else { 1.0 };
    cga_refine_scaled(objective, init, params, prior, scale)
}

fn projected_gradient<O: Objective + ?Sized>(
    objective: &O,
    x: [f64; 2],
    delta: f64,
    scale: f64,
    prior: &Rect,
) -> [f64; 2] {
    let mut g = [0.0; 2];
    for (i, gi) in g.iter_mut().enumerate() {
        let mut hi = x;
        let mut lo = x;
        hi[i] += delta;
        lo[i] -= delta;
        *gi = (objective.eval(hi) - objective.eval(lo)) / (2.0 * delta * scale);
    }
    let (min, max) = ([prior.xmin, prior.ymin], [prior.xmax, prior.ymax]);
    for i in 0..2 {
        if (x[i] <= min[i] && g[i] < 0.0) || (x[i] >= max[i] && g[i] > 0.0) {
            g[i] = 0.0;
        }
    }
    g
}

/// Coordinate ascent `x ← clip(x + η_k ∇(f/scale))` with central differences.
///
/// `η_k` is the Barzilai-Borwein length `sᵀs / (−sᵀy)` from the previous
/// step, never below the nominal `η` and at most `MAX_STEP_GAIN` times it;
/// the first iteration uses the nominal `η`. A step that lowers the
/// objective is shrunk by `backtrack_factor` until it is no shorter than
/// `η · backtrack_factor^backtrack_limit`. The run has converged once the
/// nominal step moves no coordinate by `eps` or more.
pub fn cga_refine_scaled<O: Objective + ?Sized>(
    objective: &O,
    init: [f64; 2],
    params: &PcgaParams,
    prior: &Rect,
    scale: f64,
) -> Result<RefineOutcome> {
    if !prior.contains(init) {
        return Err(SenseError::InitOutsidePrior);
    }
    let scale = if scale.is_finite() && scale > 0.0 { scale } else { 1.0 };
    let floor = params.eta * params.backtrack_factor.powi(params.backtrack_limit as i32);
    let mut x = init;
    let mut fx = objective.eval(x);
    let mut accepted = vec![fx];
    let mut iterations = 0;
    let mut converged = false;
    let mut grad = projected_gradient(objective, x, params.delta, scale, prior);
    let mut eta_next = params.eta;

    while iterations < params.max_iter {
        iterations += 1;
        let nominal = prior.clip([x[0] + params.eta * grad[0], x[1] + params.eta * grad[1]]);
        if (nominal[0] - x[0]).abs() < params.eps && (nominal[1] - x[1]).abs() < params.eps {
            converged = true;
            break;
        }
        let mut eta = eta_next;
        let mut next = None;
        while eta >= floor * (1.0 - 1e-12) {
            let cand = prior.clip([x[0] + eta * grad[0], x[1] + eta * grad[1]]);
            let fc = objective.eval(cand);
            if fc >= fx {
                next = Some((cand, fc));
                break;
            }
            eta *= params.backtrack_factor;
        }
        match next {
            Some((cand, fc)) => {
                let g_new = projected_gradient(objective, cand, params.delta, scale, prior);
                let sv = [cand[0] - x[0], cand[1] - x[1]];
                let yv = [g_new[0] - grad[0], g_new[1] - grad[1]];
                let sy = sv[0] * yv[0] + sv[1] * yv[1];
                let ss = sv[0] * sv[0] + sv[1] * sv[1];
                eta_next = if sy < 0.0 {
                    (ss / -sy).clamp(params.eta, MAX_STEP_GAIN * params.eta)
                } else {
                    params.eta
                };
                x = cand;
                fx = fc;
                accepted.push(fx);
                grad = g_new;
            }
            // No improving step at any tried scale: x is a numerical local
            // maximum along the gradient.
            None => break,
        }
    }
    if !fx.is_finite() {
        return Err(SenseError::Diverged(format!("objective {fx} at {x:?}")));
    }
    Ok(RefineOutcome {
        x,
        iterations,
        converged,
        value: fx,
        accepted,
        grad_norm: grad[0].hypot(grad[1]),
        scale,
    })
}

/// Coarse grid search followed by coordinate ascent, for one 2D stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub coarse: GridHit,
    pub refine: Option<RefineOutcome>,
    pub x: [f64; 2],
    pub value: f64,
    pub flat: bool,
}

pub fn pcga_stage<O: Objective + ?Sized>(
    objective: &O,
    grid: &GridSpec,
    prior: &Rect,
    params: &PcgaParams,
) -> Result<StageOutcome> {
    let coarse = coarse_grid_hit(objective, grid, prior)?;
    if !(coarse.spread > 0.0) || !coarse.value.is_finite() {
        return Ok(StageOutcome {
            coarse,
            refine: None,
            x: coarse.x,
            value: coarse.value,
            flat: true,
        });
    }
    let refine = cga_refine_scaled(objective, coarse.x, params, prior, coarse.spread)?;
    Ok(StageOutcome {
        coarse,
        x: refine.x,
        value: refine.value,
        refine: Some(refine),
        flat: false,
    })
}

/// Run the position stage, build the velocity objective at the position
/// estimate, then run the velocity stage.
pub fn decoupled_solve<P, V, F>(
    pos_objective: &P,
    make_vel: F,
    prior: &PriorBox,
    settings: &PcgaSettings,
) -> Result<Estimate>
where
    P: Objective + ?Sized,
    V: Objective,
    F: FnOnce(Point2) -> Result<V>,
{
    let pos = pcga_stage(pos_objective, &settings.pos_grid, &prior.pos, &settings.pos_params)?;
    let p_hat = Point2::from(pos.x);
    let vel_obj = make_vel(p_hat)?;
    let vel = pcga_stage(&vel_obj, &settings.vel_grid, &prior.vel, &settings.vel_params)?;
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

/// Bayesian fusion solved with PCGA on the decoupled delay and Doppler
/// objectives.
pub fn pcga_estimate(
    frames: &[crate::scene::ReceivedFrame],
    cfg: &OfdmConfig,
    prior: &PriorBox,
    settings: &PcgaSettings,
) -> Result<Estimate> {
    use crate::fusion::Weighting;
    let pos = LagObjective::position(frames, cfg, Weighting::Bayes)?;
    decoupled_solve(
        &pos,
        |p| LagObjective::velocity(frames, cfg, p, Weighting::Bayes),
        prior,
        settings,
    )
}

/// Fine steps of the dense traversal, position (m) and velocity (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraversalSteps {
    pub position: f64,
    pub velocity: f64,
}

impl Default for TraversalSteps {
    fn default() -> Self {
        Self {
            position: 0.01,
            velocity: 0.005,
        }
    }
}

/// Dense argmax of one stage over the whole prior rectangle.
pub fn traversal_stage<O: Objective + ?Sized>(objective: &O, prior: &Rect, step: f64) -> Result<GridHit> {
    if !(step > 0.0) {
        return Err(SenseError::NonPositiveInput("fine_step"));
    }
    let grid = GridSpec {
        bounds: *prior,
        dx: step,
        dy: step,
    };
    coarse_grid_hit(objective, &grid, prior)
}

/// Decoupled dense traversal with caller-supplied objectives.
pub fn traversal_solve<P, V, F>(
    pos_objective: &P,
    make_vel: F,
    prior: &PriorBox,
    steps: TraversalSteps,
) -> Result<Estimate>
where
    P: Objective + ?Sized,
    V: Objective,
    F: FnOnce(Point2) -> Result<V>,
{
    let pos = traversal_stage(pos_objective, &prior.pos, steps.position)?;
    let p_hat = Point2::from(pos.x);
    let vel_obj = make_vel(p_hat)?;
    let vel = traversal_stage(&vel_obj, &prior.vel, steps.velocity)?;
    Ok(Estimate {
        p_hat,
        v_hat: Vel2::from(vel.x),
        iterations: 0,
        converged: true,
        objective_at_solution: pos.value,
        flat: !(pos.spread > 0.0) || !(vel.spread > 0.0),
    })
}

/// Bayesian fusion solved by exhaustive search at `steps`.
pub fn traversal_estimate(
    frames: &[crate::scene::ReceivedFrame],
    cfg: &OfdmConfig,
    prior: &PriorBox,
    steps: TraversalSteps,
) -> Result<Estimate> {
    use crate::fusion::Weighting;
    let pos = LagObjective::position(frames, cfg, Weighting::Bayes)?;
    traversal_solve(
        &pos,
        |p| LagObjective::velocity(frames, cfg, p, Weighting::Bayes),
        prior,
        steps,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{reference_ofdm, reference_prior, reference_scene};
    use crate::scene::{synthesize_trial, SnrModel, SynthOptions};
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn unit_box() -> Rect {
        Rect::new(0.0, 2.0, 0.0, 2.0)
    }

    fn noiseless_frames(seed: u64, trial: u64) -> Vec<crate::scene::ReceivedFrame> {
        let snr = SnrModel::FixedSnr { rho2: vec![1.0; 8] };
        let opts = SynthOptions {
            noiseless: true,
            beta: None,
        };
        synthesize_trial(&reference_scene(), &reference_ofdm(), &snr, 1.0, opts, seed, trial).unwrap()
    }

    #[test]
    fn coarse_grid_exact_hit() {
        let grid = GridSpec {
            bounds: unit_box(),
            dx: 0.5,
            dy: 0.5,
        };
        let f = |x: [f64; 2]| -((x[0] - 1.0).powi(2) + (x[1] - 1.0).powi(2));
        assert_eq!(coarse_grid_search(&f, &grid, &unit_box()).unwrap(), [1.0, 1.0]);
    }

    #[test]
    fn coarse_grid_tie_break_and_empty() {
        let grid = GridSpec {
            bounds: unit_box(),
            dx: 0.5,
            dy: 0.5,
        };
        let flat = |_: [f64; 2]| 3.0;
        assert_eq!(coarse_grid_search(&flat, &grid, &unit_box()).unwrap(), [0.0, 0.0]);
        let disjoint = Rect::new(5.0, 6.0, 5.0, 6.0);
        assert_eq!(coarse_grid_search(&flat, &grid, &disjoint), Err(SenseError::EmptyGrid));
    }

    #[test]
    fn coarse_grid_on_noiseless_scene() {
        let cfg = reference_ofdm();
        let prior = reference_prior();
        let frames = noiseless_frames(2, 0);
        let obj = LagObjective::position(&frames, &cfg, crate::fusion::Weighting::Bayes).unwrap();
        let grid = GridSpec {
            bounds: prior.pos,
            dx: 3.0,
            dy: 3.0,
        };
        let x = coarse_grid_search(&obj, &grid, &prior.pos).unwrap();
        assert!(
            (x[0] - 30.5).hypot(x[1] - 30.5) <= 3.0 * std::f64::consts::SQRT_2 / 2.0 + 1e-9,
            "{x:?}"
        );
    }

    fn quad_params() -> PcgaParams {
        PcgaParams {
            eta: 1.0,
            delta: 1e-4,
            max_iter: 500,
            eps: 1e-6,
            backtrack_factor: 0.5,
            backtrack_limit: 20,
        }
    }

    #[test]
    fn refine_concave_quadratic() {
        let f = |x: [f64; 2]| -((x[0] - 2.0).powi(2) + (x[1] - 3.0).powi(2));
        let prior = Rect::new(-5.0, 5.0, -5.0, 5.0);
        let out = cga_refine(&f, [0.0, 0.0], &quad_params(), &prior).unwrap();
        assert!(out.converged);
        assert!(
            (out.x[0] - 2.0).abs() < 1e-4 && (out.x[1] - 3.0).abs() < 1e-4,
            "{:?}",
            out.x
        );
        assert!(out.accepted.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn refine_at_maximum_stops_immediately() {
        let f = |x: [f64; 2]| -((x[0] - 2.0).powi(2) + (x[1] - 3.0).powi(2)) + 10.0;
        let prior = Rect::new(-5.0, 5.0, -5.0, 5.0);
        let out = cga_refine(&f, [2.0, 3.0], &quad_params(), &prior).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 1);
        assert_eq!(out.x, [2.0, 3.0]);
    }

    #[test]
    fn refine_rejects_outside_init() {
        let f = |_: [f64; 2]| 0.0;
        assert_eq!(
            cga_refine(&f, [3.0, 0.0], &quad_params(), &unit_box()),
            Err(SenseError::InitOutsidePrior)
        );
    }

    #[test]
    fn refine_clips_to_prior() {
        // maximum outside the box: the solver stops on the boundary
        let f = |x: [f64; 2]| -((x[0] - 4.0).powi(2) + (x[1] - 1.0).powi(2));
        let out = cga_refine(&f, [1.0, 0.5], &quad_params(), &unit_box()).unwrap();
        assert!(unit_box().contains(out.x));
        assert!((out.x[0] - 2.0).abs() < 1e-12);
        assert!((out.x[1] - 1.0).abs() < 1e-3);
        assert!(out.converged);
    }

    #[test]
    fn refine_backtracks_on_overshoot() {
        let f = |x: [f64; 2]| -((x[0] - 0.7).powi(2) + (x[1] - 0.2).powi(2));
        let params = PcgaParams {
            eta: 40.0,
            ..quad_params()
        };
        let prior = Rect::new(-5.0, 5.0, -5.0, 5.0);
        let out = cga_refine_scaled(&f, [0.0, 0.0], &params, &prior, 1.0).unwrap();
        assert!(out.accepted.windows(2).all(|w| w[1] >= w[0]));
        assert!(
            (out.x[0] - 0.7).abs() < 1e-2 && (out.x[1] - 0.2).abs() < 1e-2,
            "{:?}",
            out.x
        );
    }

    #[test]
    fn fine_refine_matches_millimetre_traversal() {
        let cfg = reference_ofdm();
        let prior = reference_prior();
        let frames = noiseless_frames(5, 1);
        let obj = LagObjective::position(&frames, &cfg, crate::fusion::Weighting::Bayes).unwrap();
        let settings = PcgaSettings::defaults(&cfg, &prior);
        let stage = pcga_stage(&obj, &settings.pos_grid, &prior.pos, &settings.pos_params).unwrap();
        // dense millimetre traversal around the refined point
        let local = Rect::new(
            stage.x[0] - 0.05,
            stage.x[0] + 0.05,
            stage.x[1] - 0.05,
            stage.x[1] + 0.05,
        );
        let dense = traversal_stage(&obj, &local, 0.001).unwrap();
        assert!((dense.x[0] - stage.x[0]).hypot(dense.x[1] - stage.x[1]) < 0.01);
        let global = traversal_stage(&obj, &prior.pos, 0.05).unwrap();
        assert!((global.x[0] - stage.x[0]).hypot(global.x[1] - stage.x[1]) < 0.05);
    }

    #[test]
    fn pcga_noiseless_scene() {
        let cfg = reference_ofdm();
        let prior = reference_prior();
        let settings = PcgaSettings::defaults(&cfg, &prior);
        for trial in 0..3 {
            let frames = noiseless_frames(11, trial);
            let est = pcga_estimate(&frames, &cfg, &prior, &settings).unwrap();
            assert!(est.p_hat.distance(&Point2::new(30.5, 30.5)) < 0.05, "{est:?}");
            assert!((est.v_hat.vx - 2.7).hypot(est.v_hat.vy - 2.0) < 0.005, "{est:?}");
            assert!(est.converged && !est.flat);
            assert!(prior.pos.contains(est.p_hat.into()) && prior.vel.contains(est.v_hat.into()));
        }
    }

    #[test]
    fn pcga_flags_flat_objective() {
        let cfg = reference_ofdm();
        let prior = reference_prior();
        let mut frames = noiseless_frames(1, 0);
        frames.iter_mut().for_each(|f| f.y.fill(Complex64::new(0.0, 0.0)));
        let est = pcga_estimate(&frames, &cfg, &prior, &PcgaSettings::defaults(&cfg, &prior)).unwrap();
        assert!(est.flat);
        assert!(!est.converged);
        assert_eq!(est.p_hat, Point2::new(prior.pos.xmin, prior.pos.ymin));
    }

    #[test]
    fn traversal_single_cell_prior() {
        let cfg = reference_ofdm();
        let frames = noiseless_frames(1, 0);
        let prior = PriorBox {
            pos: Rect::new(30.0, 30.005, 30.0, 30.005),
            vel: Rect::new(2.0, 2.004, 2.0, 2.004),
        };
        let est = traversal_estimate(
            &frames,
            &cfg,
            &prior,
            TraversalSteps {
                position: 0.01,
                velocity: 0.005,
            },
        )
        .unwrap();
        assert_eq!(est.p_hat, Point2::new(30.0, 30.0));
        assert_eq!(est.v_hat, Vel2::new(2.0, 2.0));
        assert!(traversal_estimate(
            &frames,
            &cfg,
            &prior,
            TraversalSteps {
                position: 0.0,
                velocity: 0.1
            }
        )
        .is_err());
    }

    #[test]
    fn pcga_ignores_additive_constant() {
        let cfg = reference_ofdm();
        let prior = reference_prior();
        let settings = PcgaSettings::defaults(&cfg, &prior);
        let snr = SnrModel::FixedSnr { rho2: vec![0.1; 8] };
        let frames = synthesize_trial(&reference_scene(), &cfg, &snr, 1.0, SynthOptions::default(), 3, 0).unwrap();
        let obj = LagObjective::position(&frames, &cfg, crate::fusion::Weighting::Bayes).unwrap();
        let base = pcga_stage(&obj, &settings.pos_grid, &prior.pos, &settings.pos_params).unwrap();
        // a power of two keeps the shifted values exactly representable relative to one another
        let shifted = |x: [f64; 2]| obj.eval(x) + 1024.0;
        let moved = pcga_stage(&shifted, &settings.pos_grid, &prior.pos, &settings.pos_params).unwrap();
        assert_eq!(base.coarse.x, moved.coarse.x);
        assert!(
            (base.x[0] - moved.x[0]).hypot(base.x[1] - moved.x[1]) < 1e-6,
            "{:?} {:?}",
            base.x,
            moved.x
        );
    }

    #[test]
    fn default_grids_respect_main_lobe() {
        let cfg = reference_ofdm();
        let prior = reference_prior();
        let s = PcgaSettings::defaults(&cfg, &prior);
        s.validate(&cfg).unwrap();
        let mut bad = s;
        bad.pos_grid.dx = 7.0;
        assert!(bad.validate(&cfg).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn refine_is_monotone_and_feasible(cx in -3.0..3.0f64, cy in -3.0..3.0f64, ax in 0.1..5.0f64, ay in 0.1..5.0f64,
                                           ix in -2.0..2.0f64, iy in -2.0..2.0f64, eta in 0.05..3.0f64) {
            let prior = Rect::new(-2.0, 2.0, -2.0, 2.0);
            let f = move |x: [f64; 2]| -(ax * (x[0] - cx).powi(2) + ay * (x[1] - cy).powi(2));
            let params = PcgaParams { eta, ..quad_params() };
            let out = cga_refine_scaled(&f, [ix, iy], &params, &prior, 1.0).unwrap();
            prop_assert!(out.accepted.windows(2).all(|w| w[1] >= w[0]));
            prop_assert!(prior.contains(out.x));
            if out.converged {
                prop_assert!(out.grad_norm <= 2.0 * params.eps / params.eta);
            }
        }
    }
}
