//! OFDM sensing grid, Zadoff-Chu sensing sequences and steering vectors.
//!
//! Subcarriers are indexed `k = 0..K` and symbols `l = 0..L`. A target at
//! bistatic range `d` and bistatic speed `v` imprints the phase
//! `exp(-j2π k Δf d / c) · exp(+j2π l Tp v / λ)` on resource element `(k, l)`.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SenseError};
use crate::SPEED_OF_LIGHT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfdmConfig {
    /// Carrier frequency in Hz.
    pub fc: f64,
    /// Subcarrier spacing in Hz.
    pub delta_f: f64,
    /// Symbol repetition interval in seconds.
    pub tp: f64,
    /// Number of subcarriers.
    pub k: usize,
    /// Number of symbols per frame.
    pub l: usize,
}

impl OfdmConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("fc", self.fc), ("delta_f", self.delta_f), ("tp", self.tp)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SenseError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.k < 2 || self.l < 2 {
            return Err(SenseError::InvalidCounts(format!(
                "need K >= 2 and L >= 2, got K={} L={}",
                self.k, self.l
            )));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.fc
    }

    /// Bistatic range resolution `c / (2 K Δf)`.
    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.k as f64 * self.delta_f)
    }

    /// Bistatic speed resolution `λ / (2 L Tp)`.
    pub fn velocity_resolution(&self) -> f64 {
        self.wavelength() / (2.0 * self.l as f64 * self.tp)
    }

    /// Phase increment per subcarrier for bistatic range `d`.
    pub fn range_phase(&self, d: f64) -> f64 {
        2.0 * PI * self.delta_f * d / SPEED_OF_LIGHT
    }

    /// Phase increment per symbol for bistatic speed `v`.
    pub fn speed_phase(&self, v: f64) -> f64 {
        2.0 * PI * self.tp * v / self.wavelength()
    }
}

/// Unit-modulus K×L sensing sequence transmitted by one tAP.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingSequence {
    pub values: Array2<Complex64>,
    pub root: usize,
}

impl SensingSequence {
    /// Fill a K×L grid from one Zadoff-Chu sequence whose length is the
    /// smallest prime ≥ max(K, root + 1); symbol `l` uses the sequence
    /// cyclically shifted by `l`.
    pub fn zadoff_chu(root: usize, k: usize, l: usize) -> Result<Self> {
        let mut length = k.max(root + 1).max(3);
        while !is_prime(length) {
            length += 1;
        }
        let zc = zadoff_chu_seq(root, length)?;
        let values = Array2::from_shape_fn((k, l), |(kk, ll)| zc[(kk + ll) % length]);
        Ok(Self { values, root })
    }
}

fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Odd-length Zadoff-Chu sequence `x[n] = exp(-jπ u n (n+1) / N)`.
pub fn zadoff_chu_seq(root: usize, length: usize) -> Result<Vec<Complex64>> {
    if root == 0 || root >= length || length.is_multiple_of(2) || gcd(root, length) != 1 {
        return Err(SenseError::InvalidRoot { root, length });
    }
    let n_len = length as u128;
    Ok((0..length as u128)
        .map(|n| {
            // Reduce the exponent modulo 2N exactly before going to floating point.
            let e = (root as u128 * n * (n + 1)) % (2 * n_len);
            Complex64::from_polar(1.0, -PI * e as f64 / length as f64)
        })
        .collect())
}

/// Divide out the transmitted sequence element by element.
pub fn remove_sequence(raw: &Array2<Complex64>, seq: &SensingSequence) -> Result<Array2<Complex64>> {
    if raw.dim() != seq.values.dim() {
        return Err(SenseError::ShapeMismatch {
            expected: seq.values.dim(),
            got: raw.dim(),
        });
    }
    Ok(raw / &seq.values)
}

/// Frequency-domain steering vector for bistatic range `d`.
pub fn freq_steering(d: f64, cfg: &OfdmConfig) -> Vec<Complex64> {
    let theta = cfg.range_phase(d);
    (0..cfg.k)
        .map(|k| Complex64::from_polar(1.0, -theta * k as f64))
        .collect()
}

/// Slow-time steering vector for bistatic speed `v`. Note the positive sign.
pub fn time_steering(v: f64, cfg: &OfdmConfig) -> Vec<Complex64> {
    let phi = cfg.speed_phase(v);
    (0..cfg.l).map(|l| Complex64::from_polar(1.0, phi * l as f64)).collect()
}

/// Uniform DFT beam codebook for an `m`-element ULA: column `n` is
/// `exp(-j2π i n / n_a) / √m`.
pub fn dft_codebook(m: usize, n_a: usize) -> Array2<Complex64> {
    let scale = 1.0 / (m as f64).sqrt();
    Array2::from_shape_fn((m, n_a), |(i, n)| {
        Complex64::from_polar(scale, -2.0 * PI * (i * n) as f64 / n_a as f64)
    })
}

/// `aᴴ b`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference() -> OfdmConfig {
        crate::scenario::reference_ofdm()
    }

    #[test]
    fn zadoff_chu_examples() {
        let x = zadoff_chu_seq(1, 3).unwrap();
        assert!((x[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(zadoff_chu_seq(1, 7)
            .unwrap()
            .iter()
            .all(|z| (z.norm() - 1.0).abs() < 1e-14));

        // brute-force periodic autocorrelation
        let x = zadoff_chu_seq(3, 11).unwrap();
        for lag in 1..11 {
            let c: Complex64 = (0..11).map(|n| x[n] * x[(n + lag) % 11].conj()).sum();
            assert!(c.norm() < 1e-10, "lag {lag}: {}", c.norm());
        }
    }

    #[test]
    fn zadoff_chu_rejects_bad_roots() {
        assert!(matches!(zadoff_chu_seq(3, 9), Err(SenseError::InvalidRoot { .. })));
        assert!(zadoff_chu_seq(1, 8).is_err());
        assert!(zadoff_chu_seq(0, 7).is_err());
        assert!(zadoff_chu_seq(7, 7).is_err());
    }

    #[test]
    fn sensing_sequence_is_unit_modulus() {
        let s = SensingSequence::zadoff_chu(5, 12, 6).unwrap();
        assert_eq!(s.values.dim(), (12, 6));
        assert!(s.values.iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn remove_sequence_examples() {
        let s = SensingSequence::zadoff_chu(1, 8, 4).unwrap();
        let ones = remove_sequence(&s.values, &s).unwrap();
        assert!(ones.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-14));
        let zeros = Array2::<Complex64>::zeros((8, 4));
        assert!(remove_sequence(&zeros, &s).unwrap().iter().all(|z| z.norm() == 0.0));
        let wrong = Array2::<Complex64>::zeros((4, 8));
        assert!(matches!(
            remove_sequence(&wrong, &s),
            Err(SenseError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn freq_steering_examples() {
        let cfg = reference();
        assert!(freq_steering(0.0, &cfg)
            .iter()
            .all(|z| (z.re - 1.0).abs() < 1e-15 && z.im == 0.0));

        let null_d = SPEED_OF_LIGHT / (cfg.k as f64 * cfg.delta_f);
        let ip = inner(&freq_steering(0.0, &cfg), &freq_steering(null_d, &cfg));
        assert!(ip.norm() < 1e-9 * cfg.k as f64);

        assert!((cfg.range_resolution() - 6.245).abs() < 1e-3);
        let psi = freq_steering(6.25, &cfg);
        let expected = -2.0 * PI * 240e3 * 6.25 / SPEED_OF_LIGHT;
        assert!((psi[1].arg() - expected).abs() < 1e-12);
        assert!((expected + 0.03142).abs() < 1e-4);
    }

    #[test]
    fn time_steering_examples() {
        let cfg = reference();
        assert!(time_steering(0.0, &cfg).iter().all(|z| (z.re - 1.0).abs() < 1e-15));
        let null_v = cfg.wavelength() / (cfg.l as f64 * cfg.tp);
        let ip = inner(&time_steering(0.0, &cfg), &time_steering(null_v, &cfg));
        assert!(ip.norm() < 1e-9 * cfg.l as f64);
        // positive rotation for positive speed
        assert!(time_steering(0.01, &cfg)[1].arg() > 0.0);
        // λ ≈ 0.01 m at 30 GHz
        assert!((cfg.velocity_resolution() - 0.08).abs() < 1e-4);
    }

    #[test]
    fn dft_codebook_examples() {
        let c1 = dft_codebook(1, 5);
        assert!(c1.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));

        let c4 = dft_codebook(4, 4);
        for a in 0..4 {
            for b in 0..4 {
                let g: Complex64 = (0..4).map(|i| c4[(i, a)].conj() * c4[(i, b)]).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((g - Complex64::new(target, 0.0)).norm() < 1e-12);
            }
        }

        let c64 = dft_codebook(64, 16);
        for col in c64.columns() {
            let n: f64 = col.iter().map(|z| z.norm_sqr()).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn steering_correlation_depends_on_range_difference(d1 in 0.0..200.0f64, d2 in 0.0..200.0f64, shift in 0.0..50.0f64) {
            let cfg = OfdmConfig { k: 32, ..reference() };
            let a = inner(&freq_steering(d1, &cfg), &freq_steering(d2, &cfg));
            let b = inner(&freq_steering(d1 + shift, &cfg), &freq_steering(d2 + shift, &cfg));
            prop_assert!((a - b).norm() < 1e-9);
        }

        #[test]
        fn matched_filter_magnitude_ignores_global_phase(d in 0.0..200.0f64, phase in -PI..PI) {
            let cfg = OfdmConfig { k: 16, ..reference() };
            let y: Vec<Complex64> = (0..16).map(|k| Complex64::new((k as f64).sin(), (k as f64 * 0.7).cos())).collect();
            let rot: Vec<Complex64> = y.iter().map(|z| z * Complex64::from_polar(1.0, phase)).collect();
            let psi = freq_steering(d, &cfg);
            prop_assert!((inner(&psi, &y).norm() - inner(&psi, &rot).norm()).abs() < 1e-12);
        }
    }
}
