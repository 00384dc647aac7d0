//! Bistatic geometry in the horizontal plane.
//!
//! A transmit/receive AP pair observes the target through its bistatic range
//! `|p - rx| + |p - tx|` and the time derivative of that range. Both are
//! linear in the same per-pair direction vector (the sum of the unit vectors
//! pointing from each AP to the target), which is why the range and speed
//! Jacobians coincide.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SenseError};

/// Distances below this are treated as the target sitting on an antenna.
const DEGENERATE_DISTANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<(f64, f64)> for Point2 {
    fn from(v: (f64, f64)) -> Self {
        Self::new(v.0, v.1)
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vel2 {
    pub vx: f64,
    pub vy: f64,
}

impl Vel2 {
    pub const fn new(vx: f64, vy: f64) -> Self {
        Self { vx, vy }
    }

    pub fn norm(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

impl From<[f64; 2]> for Vel2 {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<(f64, f64)> for Vel2 {
    fn from(v: (f64, f64)) -> Self {
        Self::new(v.0, v.1)
    }
}

impl From<Vel2> for [f64; 2] {
    fn from(v: Vel2) -> Self {
        [v.vx, v.vy]
    }
}

/// One transmit/receive AP pair.
///
/// `range_offset` is a fixed path-length term added to the planar bistatic
/// range. It is zero for planar scenes and absorbs the altitude difference
/// when a 3D deployment is replayed in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApPair {
    pub tx_index: usize,
    pub rx_index: usize,
    pub tx_pos: Point2,
    pub rx_pos: Point2,
    #[serde(default)]
    pub range_offset: f64,
}

impl ApPair {
    pub fn new(tx_index: usize, rx_index: usize, tx_pos: Point2, rx_pos: Point2) -> Self {
        Self {
            tx_index,
            rx_index,
            tx_pos,
            rx_pos,
            range_offset: 0.0,
        }
    }

    /// Monostatic pair with both antennas at `pos`.
    pub fn monostatic(pos: Point2) -> Self {
        Self::new(0, 0, pos, pos)
    }

    pub fn baseline(&self) -> f64 {
        self.tx_pos.distance(&self.rx_pos)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub tx_aps: Vec<Point2>,
    pub rx_aps: Vec<Point2>,
    pub target_pos: Point2,
    pub target_vel: Vel2,
    /// Per-pair path offsets in pair order; empty means all zero.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub range_offsets: Vec<f64>,
}

impl Scene {
    pub fn new(tx_aps: Vec<Point2>, rx_aps: Vec<Point2>, target_pos: Point2, target_vel: Vel2) -> Self {
        Self {
            tx_aps,
            rx_aps,
            target_pos,
            target_vel,
            range_offsets: Vec::new(),
        }
    }

    pub fn num_pairs(&self) -> usize {
        self.tx_aps.len() * self.rx_aps.len()
    }

    /// All pairs, receive index running fastest: pair `n` uses rAP `n % R`
    /// and tAP `n / R`.
    pub fn pairs(&self) -> Vec<ApPair> {
        let mut out = Vec::with_capacity(self.num_pairs());
        for (t, tx) in self.tx_aps.iter().enumerate() {
            for (r, rx) in self.rx_aps.iter().enumerate() {
                let mut pair = ApPair::new(t, r, *tx, *rx);
                pair.range_offset = self.range_offsets.get(out.len()).copied().unwrap_or(0.0);
                out.push(pair);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.tx_aps.is_empty() || self.rx_aps.is_empty() {
            return Err(SenseError::DegenerateGeometry(
                "scene needs at least one tAP and one rAP".into(),
            ));
        }
        if !self.range_offsets.is_empty() && self.range_offsets.len() != self.num_pairs() {
            return Err(SenseError::DegenerateGeometry(format!(
                "{} range offsets for {} pairs",
                self.range_offsets.len(),
                self.num_pairs()
            )));
        }
        let all_finite = self
            .tx_aps
            .iter()
            .chain(self.rx_aps.iter())
            .chain(std::iter::once(&self.target_pos))
            .all(Point2::is_finite);
        if !all_finite || !self.target_vel.vx.is_finite() || !self.target_vel.vy.is_finite() {
            return Err(SenseError::DegenerateGeometry("non-finite coordinate".into()));
        }
        for ap in self.tx_aps.iter().chain(self.rx_aps.iter()) {
            if ap.distance(&self.target_pos) < DEGENERATE_DISTANCE {
                return Err(SenseError::DegenerateGeometry(format!(
                    "target coincides with AP at ({}, {})",
                    ap.x, ap.y
                )));
            }
        }
        Ok(())
    }
}

pub fn bistatic_range(p: Point2, pair: &ApPair) -> f64 {
    p.distance(&pair.rx_pos) + p.distance(&pair.tx_pos) + pair.range_offset
}

/// Sum of the unit vectors from the receive and transmit AP toward `p`.
pub fn direction_row(p: Point2, pair: &ApPair) -> Result<[f64; 2]> {
    let dr = p.distance(&pair.rx_pos);
    let dt = p.distance(&pair.tx_pos);
    if dr < DEGENERATE_DISTANCE || dt < DEGENERATE_DISTANCE {
        return Err(SenseError::DegenerateGeometry(format!(
            "point ({}, {}) coincides with an AP of pair ({}, {})",
            p.x, p.y, pair.tx_index, pair.rx_index
        )));
    }
    Ok([
        (p.x - pair.rx_pos.x) / dr + (p.x - pair.tx_pos.x) / dt,
        (p.y - pair.rx_pos.y) / dr + (p.y - pair.tx_pos.y) / dt,
    ])
}

pub fn bistatic_speed(p: Point2, v: Vel2, pair: &ApPair) -> Result<f64> {
    let row = direction_row(p, pair)?;
    Ok(row[0] * v.vx + row[1] * v.vy)
}

/// Jacobian of the bistatic ranges with respect to target position, one row
/// per pair.
pub fn range_jacobian(p: Point2, pairs: &[ApPair]) -> Result<Vec<[f64; 2]>> {
    pairs.iter().map(|pair| direction_row(p, pair)).collect()
}

/// Jacobian of the bistatic speeds with respect to target velocity. The speed
/// is linear in velocity with the range-gradient as coefficients, so this is
/// the same matrix as [`range_jacobian`].
pub fn speed_jacobian(p: Point2, pairs: &[ApPair]) -> Result<Vec<[f64; 2]>> {
    range_jacobian(p, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference_pair1() -> ApPair {
        ApPair::new(0, 0, Point2::new(5.0, 5.0), Point2::new(17.0, 4.0))
    }

    #[test]
    fn range_examples() {
        let z = Point2::new(5.0, 5.0);
        assert_eq!(bistatic_range(z, &ApPair::new(0, 0, z, z)), 0.0);

        let d = bistatic_range(Point2::new(30.5, 30.5), &reference_pair1());
        // |(13.5, 26.5)| + |(25.5, 25.5)|
        let expected = (13.5f64 * 13.5 + 26.5 * 26.5).sqrt() + (2.0f64 * 25.5 * 25.5).sqrt();
        assert!((d - expected).abs() < 1e-12);
        assert!((d - 65.803).abs() < 5e-4);

        let mono = ApPair::monostatic(Point2::new(0.0, 0.0));
        assert!((bistatic_range(Point2::new(3.0, 4.0), &mono) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn speed_examples() {
        let p = Point2::new(30.5, 30.5);
        assert_eq!(bistatic_speed(p, Vel2::new(0.0, 0.0), &reference_pair1()).unwrap(), 0.0);
        let v = bistatic_speed(p, Vel2::new(2.7, 2.0), &reference_pair1()).unwrap();
        assert!((v - 6.331).abs() < 5e-4, "{v}");

        let mono = ApPair::monostatic(Point2::new(0.0, 0.0));
        let v = bistatic_speed(Point2::new(3.0, 4.0), Vel2::new(3.0, 4.0), &mono).unwrap();
        assert!((v - 10.0).abs() < 1e-12);
    }

    #[test]
    fn speed_rejects_target_on_antenna() {
        let pair = reference_pair1();
        assert!(matches!(
            bistatic_speed(pair.tx_pos, Vel2::new(1.0, 0.0), &pair),
            Err(SenseError::DegenerateGeometry(_))
        ));
        assert!(range_jacobian(pair.rx_pos, &[pair]).is_err());
    }

    #[test]
    fn jacobian_examples() {
        let mono = ApPair::monostatic(Point2::new(0.0, 0.0));
        let j = range_jacobian(Point2::new(3.0, 4.0), &[mono]).unwrap();
        assert!((j[0][0] - 1.2).abs() < 1e-12 && (j[0][1] - 1.6).abs() < 1e-12);

        let sym = ApPair::new(0, 0, Point2::new(-1.0, 0.0), Point2::new(1.0, 0.0));
        let j = range_jacobian(Point2::new(0.0, 5.0), &[sym]).unwrap();
        assert!(j[0][0].abs() < 1e-15);

        let j = range_jacobian(Point2::new(30.5, 30.5), &[reference_pair1()]).unwrap();
        assert!((j[0][0] - 1.1610).abs() < 1e-4 && (j[0][1] - 1.5982).abs() < 1e-4);
        let h = 1e-5;
        let pair = reference_pair1();
        let fd_x = (bistatic_range(Point2::new(30.5 + h, 30.5), &pair)
            - bistatic_range(Point2::new(30.5 - h, 30.5), &pair))
            / (2.0 * h);
        let fd_y = (bistatic_range(Point2::new(30.5, 30.5 + h), &pair)
            - bistatic_range(Point2::new(30.5, 30.5 - h), &pair))
            / (2.0 * h);
        assert!((fd_x - j[0][0]).abs() < 1e-6 && (fd_y - j[0][1]).abs() < 1e-6);
    }

    #[test]
    fn pair_ordering_runs_receivers_fastest() {
        let scene = Scene::new(
            vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)],
            vec![Point2::new(0.0, 1.0), Point2::new(0.0, 2.0), Point2::new(0.0, 3.0)],
            Point2::new(5.0, 5.0),
            Vel2::default(),
        );
        let pairs = scene.pairs();
        assert_eq!(pairs.len(), 6);
        assert_eq!((pairs[4].tx_index, pairs[4].rx_index), (1, 1));
    }

    fn coord() -> impl Strategy<Value = f64> {
        -100.0..100.0f64
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn jacobians_match_central_differences(
            tx in (coord(), coord()), rx in (coord(), coord()), p in (coord(), coord()),
            v in (-10.0..10.0f64, -10.0..10.0f64),
        ) {
            let pair = ApPair::new(0, 0, tx.into(), rx.into());
            let p = Point2::new(p.0, p.1);
            prop_assume!(p.distance(&pair.tx_pos) > 1.0 && p.distance(&pair.rx_pos) > 1.0);
            let jr = range_jacobian(p, &[pair]).unwrap()[0];
            let js = speed_jacobian(p, &[pair]).unwrap()[0];
            prop_assert_eq!(jr, js);

            let h = 1e-5;
            let fd = [
                (bistatic_range(Point2::new(p.x + h, p.y), &pair) - bistatic_range(Point2::new(p.x - h, p.y), &pair)) / (2.0 * h),
                (bistatic_range(Point2::new(p.x, p.y + h), &pair) - bistatic_range(Point2::new(p.x, p.y - h), &pair)) / (2.0 * h),
            ];
            let vel = Vel2::new(v.0, v.1);
            let fdv = [
                (bistatic_speed(p, Vel2::new(vel.vx + h, vel.vy), &pair).unwrap() - bistatic_speed(p, Vel2::new(vel.vx - h, vel.vy), &pair).unwrap()) / (2.0 * h),
                (bistatic_speed(p, Vel2::new(vel.vx, vel.vy + h), &pair).unwrap() - bistatic_speed(p, Vel2::new(vel.vx, vel.vy - h), &pair).unwrap()) / (2.0 * h),
            ];
            let norm = (jr[0].hypot(jr[1])).max(1e-3);
            for i in 0..2 {
                prop_assert!((fd[i] - jr[i]).abs() / norm < 1e-5);
                prop_assert!((fdv[i] - js[i]).abs() / norm < 1e-5);
            }
            prop_assert!(jr[0].hypot(jr[1]) <= 2.0 + 1e-12);
        }

        #[test]
        fn range_respects_triangle_bound(tx in (coord(), coord()), rx in (coord(), coord()), p in (coord(), coord())) {
            let pair = ApPair::new(0, 0, tx.into(), rx.into());
            prop_assert!(bistatic_range(p.into(), &pair) >= pair.baseline() - 1e-9);
        }

        #[test]
        fn speed_is_linear_in_velocity(
            a in -3.0..3.0f64, b in -3.0..3.0f64,
            v1 in (-10.0..10.0f64, -10.0..10.0f64), v2 in (-10.0..10.0f64, -10.0..10.0f64),
        ) {
            let pair = reference_pair1();
            let p = Point2::new(30.5, 30.5);
            let combo = Vel2::new(a * v1.0 + b * v2.0, a * v1.1 + b * v2.1);
            let lhs = bistatic_speed(p, combo, &pair).unwrap();
            let rhs = a * bistatic_speed(p, v1.into(), &pair).unwrap() + b * bistatic_speed(p, v2.into(), &pair).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn reference_speed_jacobian_matches_finite_differences() {
        let scene = crate::scenario::reference_scene();
        let pairs = scene.pairs();
        let p = scene.target_pos;
        let j = speed_jacobian(p, &pairs).unwrap();
        let h = 1e-5;
        for (row, pair) in j.iter().zip(&pairs) {
            let v0 = scene.target_vel;
            let dx = (bistatic_speed(p, Vel2::new(v0.vx + h, v0.vy), pair).unwrap()
                - bistatic_speed(p, Vel2::new(v0.vx - h, v0.vy), pair).unwrap())
                / (2.0 * h);
            let dy = (bistatic_speed(p, Vel2::new(v0.vx, v0.vy + h), pair).unwrap()
                - bistatic_speed(p, Vel2::new(v0.vx, v0.vy - h), pair).unwrap())
                / (2.0 * h);
            assert!((dx - row[0]).abs() < 1e-6 && (dy - row[1]).abs() < 1e-6);
        }
    }
}
