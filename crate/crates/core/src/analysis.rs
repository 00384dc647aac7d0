//! Cramér-Rao bounds, error metrics, global SNR of weighted fusion and the
//! per-pair transmission overhead of each fusion mode.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SenseError};
use crate::fusion::PriorBox;
use crate::geometry::{bistatic_range, direction_row, ApPair, Point2, Scene};
use crate::solvers::Estimate;
use crate::waveform::OfdmConfig;
use crate::SPEED_OF_LIGHT;

pub type Mat2 = [[f64; 2]; 2];

fn check_variances(sigma2: f64, sigma_tilde2: f64) -> Result<()> {
    if !(sigma2 > 0.0) {
        return Err(SenseError::NonPositiveInput("sigma2"));
    }
    if !(sigma_tilde2 > 0.0) {
        return Err(SenseError::NonPositiveInput("sigma_tilde2"));
    }
    Ok(())
}

/// Bistatic range bound `3σ² / (π² (Δf/c)² σ̃² K (K²−1) L)`, in m².
pub fn crlb_range(sigma2: f64, sigma_tilde2: f64, k: usize, l: usize, delta_f: f64) -> Result<f64> {
    if k < 2 || l < 1 {
        return Err(SenseError::InvalidCounts(format!(
            "range bound needs K >= 2, L >= 1 (K={k}, L={l})"
        )));
    }
    check_variances(sigma2, sigma_tilde2)?;
    if !(delta_f > 0.0) {
        return Err(SenseError::NonPositiveInput("delta_f"));
    }
    let (k, l) = (k as f64, l as f64);
    Ok(3.0 * sigma2 / (PI * PI * (delta_f / SPEED_OF_LIGHT).powi(2) * sigma_tilde2 * k * (k * k - 1.0) * l))
}

/// Bistatic speed bound `3σ² / (π² (Tp/λ)² σ̃² L (L²−1) K)`, in (m/s)².
pub fn crlb_speed(sigma2: f64, sigma_tilde2: f64, k: usize, l: usize, tp: f64, lambda: f64) -> Result<f64> {
    if l < 2 || k < 1 {
        return Err(SenseError::InvalidCounts(format!(
            "speed bound needs L >= 2, K >= 1 (K={k}, L={l})"
        )));
    }
    check_variances(sigma2, sigma_tilde2)?;
    if !(tp > 0.0 && lambda > 0.0) {
        return Err(SenseError::NonPositiveInput("tp/lambda"));
    }
    let (k, l) = (k as f64, l as f64);
    Ok(3.0 * sigma2 / (PI * PI * (tp / lambda).powi(2) * sigma_tilde2 * l * (l * l - 1.0) * k))
}

fn inverse_fisher(rows: &[[f64; 2]], variances: &[f64]) -> Result<Mat2> {
    if rows.len() != variances.len() {
        return Err(SenseError::InvalidCounts(format!(
            "{} Jacobian rows for {} variances",
            rows.len(),
            variances.len()
        )));
    }
    let mut fim = [[0.0; 2]; 2];
    for (g, var) in rows.iter().zip(variances) {
        if !(*var > 0.0) {
            return Err(SenseError::NonPositiveInput("per-pair variance"));
        }
        for i in 0..2 {
            for j in 0..2 {
                fim[i][j] += g[i] * g[j] / var;
            }
        }
    }
    let det = fim[0][0] * fim[1][1] - fim[0][1] * fim[1][0];
    let trace = fim[0][0] + fim[1][1];
    if !(det > 1e-12 * trace * trace) {
        return Err(SenseError::SingularFisher);
    }
    Ok([[fim[1][1] / det, -fim[0][1] / det], [-fim[1][0] / det, fim[0][0] / det]])
}

/// Inverse of `Jᵀ Π⁻¹ J` for the bistatic-range Jacobian at `p`.
pub fn crlb_position(p: Point2, pairs: &[ApPair], range_var: &[f64]) -> Result<Mat2> {
    let rows: Vec<[f64; 2]> = pairs.iter().map(|pr| direction_row(p, pr)).collect::<Result<_>>()?;
    inverse_fisher(&rows, range_var)
}

/// Same as [`crlb_position`] with speed variances; the speed Jacobian with
/// respect to velocity equals the range Jacobian with respect to position.
pub fn crlb_velocity(p: Point2, pairs: &[ApPair], speed_var: &[f64]) -> Result<Mat2> {
    crlb_position(p, pairs, speed_var)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrlbReport {
    pub range_var: Vec<f64>,
    pub speed_var: Vec<f64>,
    pub position: Mat2,
    pub velocity: Mat2,
    pub position_trace: f64,
    pub velocity_trace: f64,
}

/// Bounds for every pair of `scene` at its true target state.
pub fn crlb_report(scene: &Scene, cfg: &OfdmConfig, sigma2: f64, sigma_tilde2: &[f64]) -> Result<CrlbReport> {
    let pairs = scene.pairs();
    if sigma_tilde2.len() != pairs.len() {
        return Err(SenseError::InvalidCounts(format!(
            "{} gain variances for {} pairs",
            sigma_tilde2.len(),
            pairs.len()
        )));
    }
    let range_var: Vec<f64> = sigma_tilde2
        .iter()
        .map(|s| crlb_range(sigma2, *s, cfg.k, cfg.l, cfg.delta_f))
        .collect::<Result<_>>()?;
    let speed_var: Vec<f64> = sigma_tilde2
        .iter()
        .map(|s| crlb_speed(sigma2, *s, cfg.k, cfg.l, cfg.tp, cfg.wavelength()))
        .collect::<Result<_>>()?;
    let position = crlb_position(scene.target_pos, &pairs, &range_var)?;
    let velocity = crlb_velocity(scene.target_pos, &pairs, &speed_var)?;
    Ok(CrlbReport {
        position_trace: position[0][0] + position[1][1],
        velocity_trace: velocity[0][0] + velocity[1][1],
        range_var,
        speed_var,
        position,
        velocity,
    })
}

/// Ratio of fused signal to fused noise power after each pair's spectrum is
/// divided by its `E²`, with weights `xi`. The noise variance is common to
/// all pairs, so it cancels.
pub fn global_snr(xi: &[f64], rho2: &[f64], e2: &[f64]) -> Result<f64> {
    if xi.is_empty() {
        return Err(SenseError::EmptyList);
    }
    if xi.len() != rho2.len() || xi.len() != e2.len() {
        return Err(SenseError::InvalidCounts(
            "weight, SNR and energy lists differ in length".into(),
        ));
    }
    if xi.iter().any(|w| !(*w >= 0.0)) {
        return Err(SenseError::NonPositiveInput("fusion weight"));
    }
    if !xi.iter().any(|w| *w > 0.0) {
        return Err(SenseError::AllZeroWeights);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for ((w, r), e) in xi.iter().zip(rho2).zip(e2) {
        num += w * r / e;
        den += w / e;
    }
    Ok(num / den)
}

/// Position and velocity RMSE over a set of estimates of the same target.
pub fn rmse(estimates: &[Estimate], truth: &Scene) -> Result<(f64, f64)> {
    if estimates.is_empty() {
        return Err(SenseError::EmptyList);
    }
    let n = estimates.len() as f64;
    let (mut sp, mut sv) = (0.0, 0.0);
    for e in estimates {
        sp += (e.p_hat.x - truth.target_pos.x).powi(2) + (e.p_hat.y - truth.target_pos.y).powi(2);
        sv += (e.v_hat.vx - truth.target_vel.vx).powi(2) + (e.v_hat.vy - truth.target_vel.vy).powi(2);
    }
    Ok(((sp / n).sqrt(), (sv / n).sqrt()))
}

/// Empirical CDF of `errors` evaluated at each grid value.
pub fn error_cdf(errors: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    if errors.is_empty() {
        return Err(SenseError::EmptyList);
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(grid
        .iter()
        .map(|g| sorted.partition_point(|e| e <= g) as f64 / n)
        .collect())
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Range of bistatic range and bistatic speed one pair can observe for a
/// target inside the prior boxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorImage {
    pub d_min: f64,
    pub d_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

/// Image of the prior boxes in one pair's delay-Doppler plane, found by
/// sampling the position box on an `n × n` lattice (boundary included). The
/// speed is linear in velocity, so the velocity box is covered by its
/// corners.
pub fn prior_image(pair: &ApPair, prior: &PriorBox, n: usize) -> Result<PriorImage> {
    let n = n.max(2);
    let (pos, vel) = (prior.pos, prior.vel);
    let corners = [
        [vel.xmin, vel.ymin],
        [vel.xmax, vel.ymin],
        [vel.xmin, vel.ymax],
        [vel.xmax, vel.ymax],
    ];
    let mut img = PriorImage {
        d_min: f64::INFINITY,
        d_max: f64::NEG_INFINITY,
        v_min: f64::INFINITY,
        v_max: f64::NEG_INFINITY,
    };
    for i in 0..n {
        for j in 0..n {
            let p = Point2::new(
                pos.xmin + pos.width() * i as f64 / (n - 1) as f64,
                pos.ymin + pos.height() * j as f64 / (n - 1) as f64,
            );
            let d = bistatic_range(p, pair);
            img.d_min = img.d_min.min(d);
            img.d_max = img.d_max.max(d);
            let g = match direction_row(p, pair) {
                Ok(g) => g,
                // an AP inside the box: the speed there is bounded by 2|v|
                Err(_) => continue,
            };
            for c in &corners {
                let v = g[0] * c[0] + g[1] * c[1];
                img.v_min = img.v_min.min(v);
                img.v_max = img.v_max.max(v);
            }
        }
    }
    // the sum of distances to the two foci is smallest on the segment joining them
    if segment_hits_rect(pair.tx_pos, pair.rx_pos, prior) {
        img.d_min = img.d_min.min(pair.baseline() + pair.range_offset);
    }
    if !img.v_min.is_finite() {
        return Err(SenseError::DegenerateGeometry("prior box collapses onto an AP".into()));
    }
    Ok(img)
}

fn segment_hits_rect(a: Point2, b: Point2, prior: &PriorBox) -> bool {
    let r = prior.pos;
    // Liang-Barsky clipping
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [
        (-dx, a.x - r.xmin),
        (dx, r.xmax - a.x),
        (-dy, a.y - r.ymin),
        (dy, r.ymax - a.y),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
        }
    }
    t0 <= t1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Signal,
    Bayesian,
    Symbol,
    SoftParameter,
}

pub const ALL_MODES: [FusionMode; 4] = [
    FusionMode::Signal,
    FusionMode::Bayesian,
    FusionMode::Symbol,
    FusionMode::SoftParameter,
];

/// Number of delay-Doppler cells overlapped by a pair's prior image.
pub fn prior_cells(pair: &ApPair, cfg: &OfdmConfig, prior: &PriorBox) -> Result<usize> {
    let img = prior_image(pair, prior, 41)?;
    let (rd, rv) = (cfg.range_resolution(), cfg.velocity_resolution());
    let nd = ((img.d_max / rd).floor() - (img.d_min / rd).floor()) as usize + 1;
    let nv = ((img.v_max / rv).floor() - (img.v_min / rv).floor()) as usize + 1;
    Ok((nd.min(cfg.k)) * (nv.min(cfg.l)))
}

/// Real scalars one pair ships to the fusion centre under `mode`.
pub fn overhead_scalars(mode: FusionMode, pair: &ApPair, cfg: &OfdmConfig, prior: &PriorBox) -> Result<f64> {
    Ok(match mode {
        FusionMode::Signal => 2.0 * (cfg.k * cfg.l) as f64,
        FusionMode::Bayesian => 2.0 * prior_cells(pair, cfg, prior)? as f64,
        FusionMode::Symbol => cfg.k as f64,
        FusionMode::SoftParameter => 4.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadEntry {
    pub mode: FusionMode,
    /// Mean over pairs.
    pub scalars_per_pair: f64,
    pub per_pair: Vec<f64>,
    pub bytes_f32: f64,
    pub bytes_f64: f64,
}

pub fn overhead_report(scene: &Scene, cfg: &OfdmConfig, prior: &PriorBox) -> Result<Vec<OverheadEntry>> {
    let pairs = scene.pairs();
    ALL_MODES
        .iter()
        .map(|&mode| {
            let per_pair: Vec<f64> = pairs
                .iter()
                .map(|p| overhead_scalars(mode, p, cfg, prior))
                .collect::<Result<_>>()?;
            let mean = per_pair.iter().sum::<f64>() / per_pair.len().max(1) as f64;
            Ok(OverheadEntry {
                mode,
                scalars_per_pair: mean,
                per_pair,
                bytes_f32: 4.0 * mean,
                bytes_f64: 8.0 * mean,
            })
        })
        .collect()
}
