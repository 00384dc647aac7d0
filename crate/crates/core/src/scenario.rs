//! Built-in simulation scenario: one tAP, eight rAPs, 30 GHz OFDM.
//!
//! The JSON fixture `scenarios/scenario_paper_sec6.json` carries the same
//! numbers; these constructors exist so library code and tests do not need
//! to touch the filesystem.

use crate::fusion::{PriorBox, Rect};
use crate::geometry::{Point2, Scene, Vel2};
use crate::waveform::OfdmConfig;

pub const REFERENCE_TX: [[f64; 2]; 1] = [[5.0, 5.0]];

pub const REFERENCE_RX: [[f64; 2]; 8] = [
    [17.0, 4.0],
    [7.0, 19.0],
    [45.0, 8.0],
    [26.0, 2.0],
    [9.0, 39.0],
    [6.0, 23.0],
    [8.0, 46.0],
    [34.0, 6.0],
];

pub const REFERENCE_TARGET: [f64; 2] = [30.5, 30.5];
pub const REFERENCE_VELOCITY: [f64; 2] = [2.7, 2.0];

/// Per-pair SNR settings (dB) used for the method comparison.
pub const SNR_SETTING_1: [f64; 8] = [10.0, 10.0, 10.0, 10.0, -10.0, -10.0, -10.0, -10.0];
pub const SNR_SETTING_2: [f64; 8] = [20.0, 20.0, 10.0, 10.0, -10.0, -10.0, -20.0, -20.0];
pub const SNR_SETTING_3: [f64; 8] = [20.0, 15.0, 10.0, 5.0, -5.0, -10.0, -15.0, -20.0];

/// Antennas per AP.
pub const REFERENCE_ANTENNAS: usize = 64;

pub fn reference_ofdm() -> OfdmConfig {
    OfdmConfig {
        fc: 30e9,
        delta_f: 240e3,
        tp: 0.625e-3,
        k: 100,
        l: 100,
    }
}

pub fn reference_scene() -> Scene {
    Scene::new(
        REFERENCE_TX.iter().map(|&p| p.into()).collect(),
        REFERENCE_RX.iter().map(|&p| p.into()).collect(),
        Point2::from(REFERENCE_TARGET),
        Vel2::from(REFERENCE_VELOCITY),
    )
}

/// Default prior region: a 10 m × 10 m position box and a 3 m/s × 3 m/s
/// velocity box around the target.
pub fn reference_prior() -> PriorBox {
    PriorBox {
        pos: Rect::new(25.0, 35.0, 25.0, 35.0),
        vel: Rect::new(1.0, 4.0, 0.5, 3.5),
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
