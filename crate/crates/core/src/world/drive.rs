//! Synthetic human driving: the centerline plus a smooth mean-reverting
//! lateral offset.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::Pose2;
use crate::path::{interp_cubic, Polyline};
use crate::world::road::POLYLINE_STEP_M;
use crate::world::{RoadGeometry, SegmentSpec, WorldError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveSpec {
    pub speed_mps: f64,
    pub lateral_noise_sd_m: f64,
    pub correlation_m: f64,
    /// Constant lateral bias added to the noise, positive left.
    pub bias_m: f64,
    /// Trace sampling interval.
    pub dt_s: f64,
}

impl Default for DriveSpec {
    fn default() -> Self {
        Self {
            speed_mps: 20.0,
            lateral_noise_sd_m: 0.2,
            correlation_m: 50.0,
            bias_m: 0.0,
            dt_s: 0.05,
        }
    }
}

impl DriveSpec {
    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: &str| Err(WorldError::InvalidDrive(m.into()));
        if !(self.speed_mps > 0.0 && self.speed_mps.is_finite()) {
            return bad("speed must be positive");
        }
        if !(self.lateral_noise_sd_m >= 0.0 && self.correlation_m > 0.0) {
            return bad("noise SD must be >= 0 and correlation length > 0");
        }
        if !(self.dt_s > 0.0 && self.bias_m.is_finite()) {
            return bad("dt must be positive and bias finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub pose: Pose2,
    pub speed: f64,
    /// Centerline station of the sample.
    pub station: f64,
    /// Lateral offset from the centerline, positive left.
    pub offset: f64,
}

/// Time series of vehicle poses plus the exact driven path.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoTrace {
    pub samples: Vec<TraceSample>,
    /// The driven path sampled every 0.25 m of centerline station.
    pub path: Polyline,
}

const KNOT_M: f64 = 5.0;

/// Lateral offset profile as a function of centerline station.
struct OffsetProfile {
    knots_s: Vec<f64>,
    knots_y: Vec<f64>,
}

impl OffsetProfile {
    fn new(length: f64, spec: &DriveSpec, seed: u64) -> Self {
        let n = (length / KNOT_M).ceil() as usize + 4;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0064_7269_7665);
        let rho = (-KNOT_M / spec.correlation_m).exp();
        let sd = spec.lateral_noise_sd_m;
        let innov = sd * (1.0 - rho * rho).sqrt();
        let z0: f64 = StandardNormal.sample(&mut rng);
        let mut x = sd * z0;
        let mut knots_s = Vec::with_capacity(n);
        let mut knots_y = Vec::with_capacity(n);
        for k in 0..n {
            knots_s.push((k as f64 - 2.0) * KNOT_M);
            knots_y.push(spec.bias_m + x);
            let z: f64 = StandardNormal.sample(&mut rng);
            x = rho * x + innov * z;
        }
        Self { knots_s, knots_y }
    }

    fn value(&self, s: f64) -> f64 {
        interp_cubic(&self.knots_s, &self.knots_y, s)
    }

    fn slope(&self, s: f64) -> f64 {
        let h = 1e-4;
        (self.value(s + h) - self.value(s - h)) / (2.0 * h)
    }
}

fn curvature(road: &RoadGeometry, s: f64) -> f64 {
    match road.segments[road.segment_at(s)].spec {
        SegmentSpec::Arc { radius_m, angle_rad } => angle_rad.signum() / radius_m,
        _ => 0.0,
    }
}

/// Offset-path pose at centerline station `s` and the path's arc-length
/// rate with respect to `s`.
fn path_pose(road: &RoadGeometry, prof: &OffsetProfile, s: f64) -> (Pose2, f64, f64) {
    let c = road.pose_at(s);
    let y = prof.value(s);
    let dy = prof.slope(s);
    let stretch = 1.0 - curvature(road, s) * y;
    let [x, yy] = c.transform_point([0.0, y]);
    let pose = Pose2::new(x, yy, c.heading + dy.atan2(stretch));
    (pose, stretch.hypot(dy), y)
}

/// Simulates a human drive over the whole road at constant centerline rate.
pub fn simulate_human_drive(road: &RoadGeometry, spec: &DriveSpec, seed: u64) -> Result<EgoTrace, WorldError> {
    spec.validate()?;
    let length = road.length();
    let prof = OffsetProfile::new(length, spec, seed);
    let n = (length / (spec.speed_mps * spec.dt_s)).floor() as usize;
    let samples = (0..=n)
        .map(|k| {
            let t = k as f64 * spec.dt_s;
            let s = spec.speed_mps * t;
            let (pose, rate, y) = path_pose(road, &prof, s);
            TraceSample {
                t,
                pose,
                speed: spec.speed_mps * rate,
                station: s,
                offset: y,
            }
        })
        .collect();
    let m = (length / POLYLINE_STEP_M).round().max(1.0) as usize;
    let pts = (0..=m)
        .map(|k| {
            let (p, _, _) = path_pose(road, &prof, length * k as f64 / m as f64);
            [p.x, p.y]
        })
        .collect();
    let path = Polyline::new(pts).map_err(|e| WorldError::InvalidDrive(e.to_string()))?;
    Ok(EgoTrace { samples, path })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{mixed_road, RoadSpec};

    fn road(len: f64) -> RoadGeometry {
        RoadGeometry::build(&RoadSpec::new(mixed_road(len, 400.0))).unwrap()
    }

    #[test]
    fn zero_noise_drives_on_the_centerline() {
        let r = road(2000.0);
        let spec = DriveSpec {
            lateral_noise_sd_m: 0.0,
            ..DriveSpec::default()
        };
        let tr = simulate_human_drive(&r, &spec, 1).unwrap();
        let mut hint = None;
        for s in &tr.samples {
            let p = r.centerline.project([s.pose.x, s.pose.y], hint);
            hint = Some(p.segment);
            assert!(p.offset.abs() < 1e-4);
            let c = r.pose_at(s.station);
            assert!((s.pose.x - c.x).abs() < 1e-12 && (s.pose.y - c.y).abs() < 1e-12);
        }
    }

    #[test]
    fn lateral_noise_has_requested_spread() {
        let r = road(10_000.0);
        let tr = simulate_human_drive(&r, &DriveSpec::default(), 42).unwrap();
        let n = tr.samples.len() as f64;
        let mean = tr.samples.iter().map(|s| s.offset).sum::<f64>() / n;
        let var = tr.samples.iter().map(|s| (s.offset - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        assert!((0.15..=0.25).contains(&sd), "sd {sd}");
    }

    #[test]
    fn trace_is_time_ordered_and_heading_follows_the_path() {
        let r = road(1500.0);
        let tr = simulate_human_drive(&r, &DriveSpec::default(), 9).unwrap();
        for w in tr.samples.windows(2) {
            assert!(w[1].t > w[0].t);
            assert!(w[0].speed >= 0.0);
            let chord = (w[1].pose.y - w[0].pose.y).atan2(w[1].pose.x - w[0].pose.x);
            let mid = (w[0].pose.heading + w[1].pose.heading) / 2.0;
            assert!(crate::geometry::wrap_angle(chord - mid).abs() < 2e-3);
        }
    }

    #[test]
    fn bias_shifts_the_mean_offset() {
        let r = road(3000.0);
        let spec = DriveSpec {
            bias_m: 0.8,
            lateral_noise_sd_m: 0.1,
            ..DriveSpec::default()
        };
        let tr = simulate_human_drive(&r, &spec, 4).unwrap();
        let mean = tr.samples.iter().map(|s| s.offset).sum::<f64>() / tr.samples.len() as f64;
        assert!((mean - 0.8).abs() < 0.06);
    }
}
