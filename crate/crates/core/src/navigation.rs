//! Free-ranging localization: wheel odometry, GPS with a shared slowly
//! wandering bias, differential correction, compass, and a precision
//! weighted blend of the three.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Cauchy, Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{keyed_rng, time_key, Stream};
use crate::supervisor::geometry::normalize_angle;
use crate::supervisor::Pose;

/// Position drift of dead reckoning per metre travelled (1σ).
pub const DRIFT_PER_METER: f64 = 0.01;
/// Heading drift of dead reckoning per metre travelled (1σ, radians).
pub const HEADING_DRIFT_PER_METER: f64 = 0.001;
/// Receiver id of the fixed DGPS base station.
pub const BASE_RECEIVER: u32 = u32::MAX;
const WANDER_TERMS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub pose: Pose,
    /// Per-axis position 1σ.
    pub sigma_xy: f64,
    pub sigma_heading: f64,
}

impl PoseEstimate {
    pub fn exact(pose: Pose) -> Self {
        Self { pose, sigma_xy: 0.0, sigma_heading: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GpsMode {
    Raw,
    Dgps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsReading {
    pub x: f64,
    pub y: f64,
    pub mode: GpsMode,
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NavError {
    #[error("rover reading at {rover} s and base reading at {base} s")]
    TimestampMismatch { rover: f64, base: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Root-mean-square radial error of a raw reading.
    pub gps_sigma: f64,
    /// Fraction of the raw error variance that is common to all receivers.
    pub gps_common_share: f64,
    /// Constant part of the common error (x, y).
    pub gps_common_bias: [f64; 2],
    pub gps_bias_correlation_s: f64,
    pub compass_sigma: f64,
    /// Per-step relative wheel slip (1σ) seen by the encoders.
    pub wheel_slip_sigma: f64,
    pub encoder_dropout_rate: f64,
    /// Intervals `[start, end)` without GPS.
    pub gps_outages: Vec<[f64; 2]>,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            gps_sigma: 7.5,
            gps_common_share: 0.8,
            gps_common_bias: [0.0, 0.0],
            gps_bias_correlation_s: 300.0,
            compass_sigma: 0.02,
            wheel_slip_sigma: 0.01,
            encoder_dropout_rate: 0.0,
            gps_outages: Vec::new(),
            seed: 0,
        }
    }
}

impl NoiseModel {
    /// No noise anywhere.
    pub fn none() -> Self {
        Self {
            gps_sigma: 0.0,
            gps_common_share: 0.0,
            gps_common_bias: [0.0, 0.0],
            compass_sigma: 0.0,
            wheel_slip_sigma: 0.0,
            ..Self::default()
        }
    }

    /// Per-axis σ of the wandering common error.
    pub fn common_axis_sigma(&self) -> f64 {
        self.gps_sigma * (self.gps_common_share / 2.0).sqrt()
    }

    /// Per-axis σ of the receiver's own error.
    pub fn independent_axis_sigma(&self) -> f64 {
        self.gps_sigma * ((1.0 - self.gps_common_share) / 2.0).sqrt()
    }

    /// Per-axis σ of a raw reading as seen by a single receiver.
    pub fn raw_axis_sigma(&self) -> f64 {
        self.gps_sigma / 2f64.sqrt()
    }

    pub fn gps_available(&self, t: f64) -> bool {
        !self.gps_outages.iter().any(|o| t >= o[0] && t < o[1])
    }

    /// Common error at `t`: the configured constant plus a stationary
    /// random wander with exponential autocorrelation. The wander is a sum
    /// of cosines with Lorentzian-distributed frequencies, so it is a pure
    /// function of the seed and `t`.
    pub fn common_bias(&self, t: f64) -> [f64; 2] {
        let sigma = self.common_axis_sigma();
        let mut out = self.gps_common_bias;
        if sigma == 0.0 {
            return out;
        }
        let freq = Cauchy::new(0.0, 1.0 / self.gps_bias_correlation_s).expect("positive correlation time");
        let amp = sigma * (2.0 / WANDER_TERMS as f64).sqrt();
        for (axis, o) in out.iter_mut().enumerate() {
            let mut rng = keyed_rng(self.seed, Stream::GpsBias, &[axis as u64]);
            let mut acc = 0.0;
            for _ in 0..WANDER_TERMS {
                let w: f64 = freq.sample(&mut rng);
                let phase: f64 = rng.gen_range(0.0..2.0 * PI);
                acc += (w * t + phase).cos();
            }
            *o += amp * acc;
        }
        out
    }
}

/// Arc length from an encoder count.
pub fn odometry_distance(pulse_count: i64, pulses_per_rev: f64, wheel_radius: f64) -> f64 {
    pulse_count as f64 / pulses_per_rev * 2.0 * PI * wheel_radius
}

/// Heading change from the two arc lengths of a turn, positive towards the
/// inner side.
pub fn heading_delta(inner_arc: f64, outer_arc: f64, wheelbase_d: f64) -> f64 {
    (outer_arc - inner_arc) / wheelbase_d
}

/// Advances an estimate by one pair of wheel arcs (left, right).
pub fn dead_reckon(prev: PoseEstimate, left_arc: f64, right_arc: f64, wheelbase_d: f64) -> PoseEstimate {
    let dtheta = heading_delta(left_arc, right_arc, wheelbase_d);
    let dist = 0.5 * (left_arc + right_arc);
    if dist == 0.0 && dtheta == 0.0 {
        return prev;
    }
    let mid = prev.pose.heading + 0.5 * dtheta;
    PoseEstimate {
        pose: Pose::new(prev.pose.x + dist * mid.cos(), prev.pose.y + dist * mid.sin(), prev.pose.heading + dtheta),
        sigma_xy: prev.sigma_xy + DRIFT_PER_METER * dist.abs(),
        sigma_heading: prev.sigma_heading + HEADING_DRIFT_PER_METER * dist.abs(),
    }
}

/// A raw fix of `receiver` at `t`.
pub fn sample_gps(truth: Pose, noise: &NoiseModel, receiver: u32, t: f64) -> GpsReading {
    let [bx, by] = noise.common_bias(t);
    let s = noise.independent_axis_sigma();
    let (nx, ny) = if s > 0.0 {
        let mut rng = keyed_rng(noise.seed, Stream::GpsNoise, &[u64::from(receiver), time_key(t)]);
        let n = Normal::new(0.0, s).expect("finite sigma");
        (n.sample(&mut rng), n.sample(&mut rng))
    } else {
        (0.0, 0.0)
    };
    GpsReading { x: truth.x + bx + nx, y: truth.y + by + ny, mode: GpsMode::Raw, timestamp: t }
}

/// Removes the base station's observed error from a rover fix.
pub fn dgps_correct(rover: GpsReading, base: GpsReading, base_truth: Pose) -> Result<GpsReading, NavError> {
    if rover.timestamp != base.timestamp {
        return Err(NavError::TimestampMismatch { rover: rover.timestamp, base: base.timestamp });
    }
    Ok(GpsReading {
        x: rover.x - (base.x - base_truth.x),
        y: rover.y - (base.y - base_truth.y),
        mode: GpsMode::Dgps,
        timestamp: rover.timestamp,
    })
}

pub fn sample_compass(true_heading: f64, noise: &NoiseModel, receiver: u32, t: f64) -> f64 {
    if noise.compass_sigma == 0.0 {
        return normalize_angle(true_heading);
    }
    let mut rng = keyed_rng(noise.seed, Stream::Compass, &[u64::from(receiver), time_key(t)]);
    let e = Normal::new(0.0, noise.compass_sigma).expect("finite sigma").sample(&mut rng);
    normalize_angle(true_heading + e)
}

/// Per-step wheel arc as the encoders see it: slip scales the true arc and
/// a dropout loses the step entirely.
pub fn measured_arc(true_arc: f64, noise: &NoiseModel, receiver: u32, wheel: usize, t: f64) -> f64 {
    if noise.wheel_slip_sigma == 0.0 && noise.encoder_dropout_rate == 0.0 {
        return true_arc;
    }
    let mut rng = keyed_rng(noise.seed, Stream::Slip, &[u64::from(receiver), wheel as u64, time_key(t)]);
    if noise.encoder_dropout_rate > 0.0 && rng.gen::<f64>() < noise.encoder_dropout_rate {
        return 0.0;
    }
    let e = if noise.wheel_slip_sigma > 0.0 {
        Normal::new(0.0, noise.wheel_slip_sigma).expect("finite sigma").sample(&mut rng)
    } else {
        0.0
    };
    true_arc * (1.0 + e)
}

/// Precision-weighted blend. Each sensor comes with its own 1σ.
pub fn fuse_pose(pred: PoseEstimate, gps: Option<(GpsReading, f64)>, compass: Option<(f64, f64)>) -> PoseEstimate {
    let mut out = pred;
    if let Some((fix, sg)) = gps {
        let so2 = pred.sigma_xy * pred.sigma_xy;
        let sg2 = sg * sg;
        if so2 + sg2 > 0.0 {
            let w = so2 / (so2 + sg2);
            out.pose.x = pred.pose.x + w * (fix.x - pred.pose.x);
            out.pose.y = pred.pose.y + w * (fix.y - pred.pose.y);
            out.sigma_xy = (so2 * sg2 / (so2 + sg2)).sqrt();
        }
    }
    if let Some((h, sc)) = compass {
        let so2 = pred.sigma_heading * pred.sigma_heading;
        let sc2 = sc * sc;
        if so2 + sc2 > 0.0 {
            let w = so2 / (so2 + sc2);
            let diff = normalize_angle(h - pred.pose.heading);
            out.pose.heading = normalize_angle(pred.pose.heading + w * diff);
            out.sigma_heading = (so2 * sc2 / (so2 + sc2)).sqrt();
        }
    }
    out
}

/// Which absolute fixes the estimator blends in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FixSource {
    None,
    Raw,
    Dgps,
}

/// Running estimator of one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct Navigator {
    pub id: u32,
    pub estimate: PoseEstimate,
    /// Dead reckoning alone, for comparison.
    pub odometry_only: PoseEstimate,
    pub source: FixSource,
    pub base_truth: Pose,
    last_pulses: [i64; 4],
}

impl Navigator {
    pub fn new(id: u32, start: Pose, source: FixSource, base_truth: Pose) -> Self {
        let e = PoseEstimate::exact(start);
        Self { id, estimate: e, odometry_only: e, source, base_truth, last_pulses: [0; 4] }
    }

    /// One estimator cycle at time `t`. `pulses` are the cumulative wheel
    /// counters; `truth` is sampled by the simulated absolute sensors only.
    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        t: f64,
        pulses: [i64; 4],
        truth: Pose,
        noise: &NoiseModel,
        pulses_per_rev: f64,
        wheel_radius: f64,
        wheelbase_d: f64,
        gps_due: bool,
    ) -> PoseEstimate {
        let mut arcs = [0.0; 4];
        for w in 0..4 {
            let d = odometry_distance(pulses[w] - self.last_pulses[w], pulses_per_rev, wheel_radius);
            arcs[w] = measured_arc(d, noise, self.id, w, t);
        }
        self.last_pulses = pulses;
        let left = 0.5 * (arcs[0] + arcs[2]);
        let right = 0.5 * (arcs[1] + arcs[3]);
        self.odometry_only = dead_reckon(self.odometry_only, left, right, wheelbase_d);
        let pred = dead_reckon(self.estimate, left, right, wheelbase_d);
        let compass = Some((sample_compass(truth.heading, noise, self.id, t), noise.compass_sigma));
        let gps = if gps_due && noise.gps_available(t) {
            let raw = sample_gps(truth, noise, self.id, t);
            match self.source {
                FixSource::None => None,
                FixSource::Raw => Some((raw, noise.raw_axis_sigma())),
                FixSource::Dgps => {
                    let base = sample_gps(self.base_truth, noise, BASE_RECEIVER, t);
                    let fix = dgps_correct(raw, base, self.base_truth).expect("same timestamp");
                    Some((fix, noise.independent_axis_sigma() * 2f64.sqrt()))
                }
            }
        } else {
            None
        };
        self.estimate = fuse_pose(pred, gps, compass);
        self.estimate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavRunReport {
    pub seed: u64,
    pub samples: usize,
    /// Odometry and compass blended with DGPS fixes.
    pub rms_fused: f64,
    /// The same blend fed raw fixes instead.
    pub rms_fused_raw_fix: f64,
    pub rms_odometry: f64,
    pub rms_raw_gps: f64,
    pub mean_raw_radial: f64,
    pub mean_dgps_radial: f64,
}

/// Ground-truth pose and wheel arcs of a rounded-rectangle test track,
/// sampled every `dt` at constant `speed` for `length` metres.
fn track_pose(s: f64) -> (Pose, f64) {
    // 150 m x 80 m rectangle with 20 m corner radius, counter-clockwise.
    let (a, b, r) = (150.0 - 40.0, 80.0 - 40.0, 20.0);
    let q = 0.5 * PI * r;
    let lap = 2.0 * (a + b) + 4.0 * q;
    let mut u = s.rem_euclid(lap);
    let pieces = [(a, 0.0), (q, 1.0), (b, 0.0), (q, 1.0), (a, 0.0), (q, 1.0), (b, 0.0), (q, 1.0)];
    let (mut x, mut y, mut h) = (0.0f64, 0.0f64, 0.0f64);
    for (len, curved) in pieces {
        let step = u.min(len);
        if curved == 0.0 {
            x += step * h.cos();
            y += step * h.sin();
        } else {
            let dh = step / r;
            x += r * ((h + dh).sin() - h.sin());
            y += r * (h.cos() - (h + dh).cos());
            h += dh;
        }
        if u <= len {
            let k = if curved == 0.0 { 0.0 } else { 1.0 / r };
            return (Pose::new(x, y, h), k);
        }
        u -= len;
    }
    (Pose::new(x, y, h), 0.0)
}

/// One seeded 1 km drive comparing the estimators against ground truth.
pub fn nav_run(seed: u64, noise: &NoiseModel, length_m: f64) -> NavRunReport {
    let noise = NoiseModel { seed, ..noise.clone() };
    let (dt, speed, d, r, ppr) = (0.1, 5.0, 3.0, 0.25, 1024.0);
    let q = 2.0 * PI * r / ppr;
    let base = Pose::new(-50.0, -50.0, 0.0);
    let id = 1;
    let start = track_pose(0.0).0;
    let mut nav = Navigator::new(id, start, FixSource::Dgps, base);
    let mut nav_raw = Navigator::new(id, start, FixSource::Raw, base);
    let mut wheel = [0.0f64; 4];
    let (mut se_f, mut se_fr, mut se_o, mut se_g) = (0.0, 0.0, 0.0, 0.0);
    let (mut raw_r, mut dgps_r, mut n_gps) = (0.0, 0.0, 0usize);
    let mut prev_h = start.heading;
    let steps = (length_m / (speed * dt)).round() as usize;
    for k in 1..=steps {
        let t = k as f64 * dt;
        let s = speed * t;
        let (truth, _) = track_pose(s);
        let dth = normalize_angle(truth.heading - prev_h);
        prev_h = truth.heading;
        let ds = speed * dt;
        let half = 0.5 * d * dth;
        let deltas = [ds - half, ds + half, ds - half, ds + half];
        let mut pulses = [0i64; 4];
        for w in 0..4 {
            wheel[w] += deltas[w];
            pulses[w] = (wheel[w] / q).round() as i64;
        }
        let gps_due = k % 10 == 0;
        let est = nav.update(t, pulses, truth, &noise, ppr, r, d, gps_due);
        let est_raw = nav_raw.update(t, pulses, truth, &noise, ppr, r, d, gps_due);
        if gps_due {
            let raw = sample_gps(truth, &noise, id, t);
            let b = sample_gps(base, &noise, BASE_RECEIVER, t);
            let fix = dgps_correct(raw, b, base).expect("same timestamp");
            let e = |x: f64, y: f64| (x - truth.x).hypot(y - truth.y);
            let (eg, ef, eo) = (e(raw.x, raw.y), e(est.pose.x, est.pose.y), e(nav.odometry_only.pose.x, nav.odometry_only.pose.y));
            se_g += eg * eg;
            se_f += ef * ef;
            se_fr += e(est_raw.pose.x, est_raw.pose.y).powi(2);
            se_o += eo * eo;
            raw_r += eg;
            dgps_r += e(fix.x, fix.y);
            n_gps += 1;
        }
    }
    let n = n_gps.max(1) as f64;
    NavRunReport {
        seed,
        samples: n_gps,
        rms_fused: (se_f / n).sqrt(),
        rms_fused_raw_fix: (se_fr / n).sqrt(),
        rms_odometry: (se_o / n).sqrt(),
        rms_raw_gps: (se_g / n).sqrt(),
        mean_raw_radial: raw_r / n,
        mean_dgps_radial: dgps_r / n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn odometry_distance_examples() {
        assert_abs_diff_eq!(odometry_distance(1024, 1024.0, 0.25), 1.5708, epsilon = 1e-4);
        assert_eq!(odometry_distance(0, 1024.0, 0.25), 0.0);
        assert_abs_diff_eq!(odometry_distance(2048, 1024.0, 0.25), 3.1416, epsilon = 1e-4);
    }

    #[test]
    fn heading_delta_examples() {
        assert_eq!(heading_delta(2.0, 2.0, 3.0), 0.0);
        assert_abs_diff_eq!(heading_delta(1.0, 1.3, 3.0), 0.1, epsilon = 1e-12);
        let d = 3.0;
        assert_abs_diff_eq!(heading_delta(-PI * d / 2.0, PI * d / 2.0, d), PI, epsilon = 1e-12);
    }

    #[test]
    fn straight_dead_reckoning() {
        let e = dead_reckon(PoseEstimate::exact(Pose::new(1.0, 2.0, 0.0)), 10.0, 10.0, 3.0);
        assert_abs_diff_eq!(e.pose.x, 11.0);
        assert_abs_diff_eq!(e.pose.y, 2.0);
        assert_abs_diff_eq!(e.sigma_xy, 0.1);
        let z = dead_reckon(e, 0.0, 0.0, 3.0);
        assert_eq!(z, e);
    }

    #[test]
    fn noiseless_gps_is_truth() {
        let p = Pose::new(3.0, 4.0, 0.0);
        let g = sample_gps(p, &NoiseModel::none(), 1, 5.0);
        assert_eq!((g.x, g.y), (3.0, 4.0));
    }

    #[test]
    fn bias_only_dgps_is_exact() {
        let noise = NoiseModel { gps_common_share: 1.0, gps_common_bias: [5.0, -3.0], ..NoiseModel::default() };
        let truth = Pose::new(10.0, 20.0, 0.0);
        let base = Pose::new(0.0, 0.0, 0.0);
        let fix = dgps_correct(sample_gps(truth, &noise, 1, 7.0), sample_gps(base, &noise, BASE_RECEIVER, 7.0), base).unwrap();
        assert_abs_diff_eq!(fix.x, 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fix.y, 20.0, epsilon = 1e-9);
        let late = sample_gps(base, &noise, BASE_RECEIVER, 8.0);
        assert!(matches!(
            dgps_correct(sample_gps(truth, &noise, 1, 7.0), late, base),
            Err(NavError::TimestampMismatch { .. })
        ));
    }

    #[test]
    fn fusion_limits() {
        let pred = PoseEstimate { pose: Pose::new(0.0, 0.0, 0.0), sigma_xy: 2.0, sigma_heading: 0.1 };
        assert_eq!(fuse_pose(pred, None, None), pred);
        let fix = GpsReading { x: 4.0, y: 2.0, mode: GpsMode::Raw, timestamp: 0.0 };
        let mid = fuse_pose(pred, Some((fix, 2.0)), None);
        assert_abs_diff_eq!(mid.pose.x, 2.0);
        assert_abs_diff_eq!(mid.pose.y, 1.0);
        let exact = fuse_pose(pred, Some((fix, 0.0)), None);
        assert_abs_diff_eq!(exact.pose.x, 4.0);
    }

    #[test]
    fn compass_wraps() {
        let noise = NoiseModel::default();
        for k in 0..100 {
            let h = sample_compass(PI, &noise, 1, f64::from(k));
            assert!(h > -PI && h <= PI);
        }
    }

    #[test]
    fn track_closes() {
        let (a, b, r) = (110.0, 40.0, 20.0);
        let lap = 2.0 * (a + b) + 2.0 * PI * r;
        let p = track_pose(lap - 1e-9);
        assert_abs_diff_eq!(p.0.x, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(p.0.y, 0.0, epsilon = 1e-6);
    }
}
