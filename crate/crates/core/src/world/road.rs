//! Analytic road geometry: chained straight, arc, and fork segments.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::geometry::Pose2;
use crate::path::Polyline;
use crate::world::WorldError;

/// Sampling step of the ground-truth polylines, meters of arc length.
pub const POLYLINE_STEP_M: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SegmentSpec {
    Straight { length_m: f64 },
    /// Positive angle turns left.
    Arc { radius_m: f64, angle_rad: f64 },
    /// Straight section where an exit ramp peels off to the right: the
    /// painted right line follows the ramp, spreading `spread_m` beyond the
    /// lane edge, and a gore line re-marks the lane edge from the midpoint on.
    Fork { length_m: f64, spread_m: f64 },
}

impl SegmentSpec {
    pub fn length(&self) -> f64 {
        match *self {
            SegmentSpec::Straight { length_m } | SegmentSpec::Fork { length_m, .. } => length_m,
            SegmentSpec::Arc { radius_m, angle_rad } => radius_m * angle_rad.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarkingSpec {
    pub dash_length_m: f64,
    pub dash_gap_m: f64,
    pub line_width_m: f64,
}

impl Default for MarkingSpec {
    fn default() -> Self {
        Self {
            dash_length_m: 3.0,
            dash_gap_m: 9.0,
            line_width_m: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSpec {
    pub segments: Vec<SegmentSpec>,
    pub lane_width_m: f64,
    /// Paved margin beyond each lane edge.
    pub shoulder_m: f64,
    pub marking: MarkingSpec,
}

impl RoadSpec {
    pub fn new(segments: Vec<SegmentSpec>) -> Self {
        Self {
            segments,
            lane_width_m: 3.7,
            shoulder_m: 0.8,
            marking: MarkingSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::InvalidRoad(m));
        if self.segments.is_empty() {
            return bad("no segments".into());
        }
        if !(self.lane_width_m > 0.0 && self.lane_width_m.is_finite()) {
            return bad("lane width must be positive".into());
        }
        if !(self.shoulder_m >= 0.0) {
            return bad("shoulder must be non-negative".into());
        }
        let m = &self.marking;
        if !(m.dash_length_m > 0.0 && m.dash_gap_m >= 0.0 && m.line_width_m > 0.0) {
            return bad("marking dimensions must be positive".into());
        }
        for (i, s) in self.segments.iter().enumerate() {
            match *s {
                SegmentSpec::Straight { length_m } if !(length_m > 0.0 && length_m.is_finite()) => {
                    return bad(format!("segment {i}: length must be positive"));
                }
                SegmentSpec::Arc { radius_m, angle_rad } => {
                    if !(radius_m > 10.0 && radius_m.is_finite()) {
                        return bad(format!("segment {i}: radius must exceed 10 m"));
                    }
                    if !(angle_rad != 0.0 && angle_rad.abs() < TAU) {
                        return bad(format!("segment {i}: turn angle must be in (0, 2pi)"));
                    }
                }
                SegmentSpec::Fork { length_m, spread_m }
                    if !(length_m > 0.0 && length_m.is_finite() && spread_m > 0.0) =>
                {
                    return bad(format!("segment {i}: fork length and spread must be positive"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(SegmentSpec::length).sum()
    }
}

/// A placed segment: its spec, where it starts, and its global station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub spec: SegmentSpec,
    pub start: Pose2,
    pub station0: f64,
    pub length: f64,
}

/// Position of a ground point relative to the road.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadCoord {
    pub segment: usize,
    /// Global station of the closest centerline point.
    pub station: f64,
    /// Station within the segment.
    pub local: f64,
    /// Signed lateral distance, positive left.
    pub offset: f64,
}

impl Segment {
    /// Centerline pose at local station `u` (may extrapolate).
    pub fn pose_at(&self, u: f64) -> Pose2 {
        let p = self.start;
        match self.spec {
            SegmentSpec::Straight { .. } | SegmentSpec::Fork { .. } => {
                let (s, c) = p.heading.sin_cos();
                Pose2::new(p.x + c * u, p.y + s * u, p.heading)
            }
            SegmentSpec::Arc { radius_m, angle_rad } => {
                let sign = angle_rad.signum();
                let dh = sign * u / radius_m;
                let local = [radius_m * dh.abs().sin(), sign * radius_m * (1.0 - dh.cos())];
                let [x, y] = p.transform_point(local);
                Pose2::new(x, y, p.heading + dh)
            }
        }
    }

    pub fn end(&self) -> Pose2 {
        self.pose_at(self.length)
    }

    /// Local station and signed offset of a world point, if its foot lies
    /// within the segment extended by `before` and `after` meters.
    pub fn locate(&self, p: [f64; 2], before: f64, after: f64) -> Option<(f64, f64)> {
        let (u, d) = match self.spec {
            SegmentSpec::Straight { .. } | SegmentSpec::Fork { .. } => {
                let l = self.start.inverse_transform_point(p);
                (l[0], l[1])
            }
            SegmentSpec::Arc { radius_m, angle_rad } => {
                let sign = angle_rad.signum();
                let l = self.start.inverse_transform_point(p);
                // Center of curvature is at (0, sign * R) in the start frame.
                let vx = l[0];
                let vy = sign * (l[1] - sign * radius_m);
                let r = vx.hypot(vy);
                // Angle swept from the start radius, measured in turn direction.
                let phi = vx.atan2(-vy);
                let lead = before / radius_m;
                let phi = (phi + lead).rem_euclid(TAU) - lead;
                (radius_m * phi, sign * (radius_m - r))
            }
        };
        if u >= -before && u <= self.length + after {
            Some((u, d))
        } else {
            None
        }
    }

    /// Lateral offset of the ramp's painted edge, 0 outside forks.
    pub fn ramp_spread(&self, u: f64) -> f64 {
        match self.spec {
            SegmentSpec::Fork { spread_m, length_m } => {
                let t = (u / length_m).clamp(0.0, 1.0);
                spread_m * t * t * (3.0 - 2.0 * t)
            }
            _ => 0.0,
        }
    }

    /// Approximate bounding circle (center, radius) for culling.
    pub fn bounds(&self) -> ([f64; 2], f64) {
        let a = self.start;
        let b = self.pose_at(self.length / 2.0);
        let c = self.end();
        let cx = (a.x + b.x + c.x) / 3.0;
        let cy = (a.y + b.y + c.y) / 3.0;
        let r = [a, b, c]
            .iter()
            .map(|q| (q.x - cx).hypot(q.y - cy))
            .fold(0.0, f64::max);
        ([cx, cy], r + self.length / 4.0 + self.ramp_spread(self.length))
    }
}

/// Road geometry with its exact centerline and lane-edge polylines.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadGeometry {
    pub spec: RoadSpec,
    pub segments: Vec<Segment>,
    pub centerline: Polyline,
    pub left_edge: Polyline,
    pub right_edge: Polyline,
}

impl RoadGeometry {
    pub fn build(spec: &RoadSpec) -> Result<Self, WorldError> {
        spec.validate()?;
        let mut segments = Vec::with_capacity(spec.segments.len());
        let mut start = Pose2::IDENTITY;
        let mut station0 = 0.0;
        for s in &spec.segments {
            let seg = Segment {
                spec: *s,
                start,
                station0,
                length: s.length(),
            };
            start = seg.end();
            station0 += seg.length;
            segments.push(seg);
        }
        let total = station0;
        let n = (total / POLYLINE_STEP_M).round().max(1.0) as usize;
        let half = spec.lane_width_m / 2.0;
        let mut center = Vec::with_capacity(n + 1);
        let mut left = Vec::with_capacity(n + 1);
        let mut right = Vec::with_capacity(n + 1);
        let mut k = 0;
        for i in 0..=n {
            let s = total * i as f64 / n as f64;
            while k + 1 < segments.len() && s > segments[k].station0 + segments[k].length {
                k += 1;
            }
            let pose = segments[k].pose_at(s - segments[k].station0);
            center.push([pose.x, pose.y]);
            left.push(pose.transform_point([0.0, half]));
            right.push(pose.transform_point([0.0, -half]));
        }
        Ok(Self {
            spec: spec.clone(),
            segments,
            centerline: Polyline::new(center).map_err(|e| WorldError::InvalidRoad(e.to_string()))?,
            left_edge: Polyline::new(left).map_err(|e| WorldError::InvalidRoad(e.to_string()))?,
            right_edge: Polyline::new(right).map_err(|e| WorldError::InvalidRoad(e.to_string()))?,
        })
    }

    pub fn length(&self) -> f64 {
        self.spec.total_length()
    }

    pub fn lane_half(&self) -> f64 {
        self.spec.lane_width_m / 2.0
    }

    /// Segment index containing global station `s` (clamped).
    pub fn segment_at(&self, s: f64) -> usize {
        match self.segments.partition_point(|g| g.station0 <= s) {
            0 => 0,
            k => k - 1,
        }
    }

    /// Exact centerline pose at global station `s` (extrapolates past the ends).
    pub fn pose_at(&self, s: f64) -> Pose2 {
        let g = &self.segments[self.segment_at(s)];
        g.pose_at(s - g.station0)
    }

    /// Road coordinates of `p`, searching only `candidates`. Among segments
    /// whose span contains the foot point the one with the smallest |offset|
    /// wins.
    pub fn locate_among(&self, p: [f64; 2], candidates: &[usize]) -> Option<RoadCoord> {
        let mut best: Option<RoadCoord> = None;
        for &i in candidates {
            let g = &self.segments[i];
            let before = if i == 0 { 50.0 } else { 1e-9 };
            let after = if i + 1 == self.segments.len() { 50.0 } else { 1e-9 };
            if let Some((u, d)) = g.locate(p, before, after) {
                if best.is_none_or(|b| d.abs() < b.offset.abs()) {
                    best = Some(RoadCoord {
                        segment: i,
                        station: g.station0 + u,
                        local: u,
                        offset: d,
                    });
                }
            }
        }
        best
    }

    pub fn locate(&self, p: [f64; 2]) -> Option<RoadCoord> {
        let all: Vec<usize> = (0..self.segments.len()).collect();
        self.locate_among(p, &all)
    }

    /// Segments whose bounds intersect the disc of `radius` around `center`.
    pub fn segments_near(&self, center: [f64; 2], radius: f64) -> Vec<usize> {
        self.segments
            .iter()
            .enumerate()
            .filter(|(_, g)| {
                let (c, r) = g.bounds();
                (c[0] - center[0]).hypot(c[1] - center[1]) <= r + radius
            })
            .map(|(i, _)| i)
            .collect()
    }
}

/// Convenience: a road alternating straights and gentle arcs, about
/// `length_m` long.
pub fn mixed_road(length_m: f64, radius_m: f64) -> Vec<SegmentSpec> {
    let mut segs = Vec::new();
    let mut total = 0.0;
    let turns = [PI / 8.0, -PI / 6.0, PI / 10.0, -PI / 8.0];
    let mut k = 0;
    while total < length_m {
        let rest = length_m - total;
        let straight = rest.min(300.0);
        segs.push(SegmentSpec::Straight { length_m: straight });
        total += straight;
        if total >= length_m {
            break;
        }
        let angle = turns[k % turns.len()];
        k += 1;
        let arc = (radius_m * angle.abs()).min(length_m - total);
        segs.push(SegmentSpec::Arc {
            radius_m,
            angle_rad: angle.signum() * arc / radius_m,
        });
        total += arc;
    }
    segs
}

/// Like [`mixed_road`], with an exit ramp on every straight that starts at
/// least `fork_every_m` after the previous one. A fork straight is laid out
/// as 100 m lead, the fork, and the remainder.
pub fn forked_road(length_m: f64, radius_m: f64, fork_every_m: f64, fork_length_m: f64, spread_m: f64) -> Vec<SegmentSpec> {
    let mut out = Vec::new();
    let mut station = 0.0;
    let mut last_fork = f64::NEG_INFINITY;
    let lead = 100.0;
    for s in mixed_road(length_m, radius_m) {
        match s {
            SegmentSpec::Straight { length_m: l }
                if l >= lead + fork_length_m + 50.0 && station + lead - last_fork >= fork_every_m =>
            {
                out.push(SegmentSpec::Straight { length_m: lead });
                out.push(SegmentSpec::Fork {
                    length_m: fork_length_m,
                    spread_m,
                });
                out.push(SegmentSpec::Straight {
                    length_m: l - lead - fork_length_m,
                });
                last_fork = station + lead;
            }
            _ => out.push(s),
        }
        station += s.length();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn straight_road_endpoints() {
        let g = RoadGeometry::build(&RoadSpec::new(vec![SegmentSpec::Straight { length_m: 100.0 }])).unwrap();
        assert_eq!(g.centerline.points()[0], [0.0, 0.0]);
        assert_eq!(*g.centerline.points().last().unwrap(), [100.0, 0.0]);
    }

    #[test]
    fn quarter_arc_endpoint_matches_circle() {
        let g = RoadGeometry::build(&RoadSpec::new(vec![SegmentSpec::Arc {
            radius_m: 200.0,
            angle_rad: FRAC_PI_2,
        }]))
        .unwrap();
        let end = *g.centerline.points().last().unwrap();
        assert!((end[0] - 200.0).abs() < 1e-9 && (end[1] - 200.0).abs() < 1e-9);
        let e = g.segments[0].end();
        assert!((e.heading - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn right_arc_mirrors_left_arc() {
        let l = RoadGeometry::build(&RoadSpec::new(vec![SegmentSpec::Arc { radius_m: 50.0, angle_rad: 1.0 }])).unwrap();
        let r = RoadGeometry::build(&RoadSpec::new(vec![SegmentSpec::Arc { radius_m: 50.0, angle_rad: -1.0 }])).unwrap();
        for (a, b) in l.centerline.points().iter().zip(r.centerline.points()) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] + b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_is_continuous_in_position_and_heading() {
        let spec = RoadSpec::new(vec![
            SegmentSpec::Straight { length_m: 40.0 },
            SegmentSpec::Arc { radius_m: 80.0, angle_rad: 0.7 },
            SegmentSpec::Fork { length_m: 60.0, spread_m: 4.0 },
            SegmentSpec::Arc { radius_m: 120.0, angle_rad: -1.1 },
        ]);
        let g = RoadGeometry::build(&spec).unwrap();
        for w in g.segments.windows(2) {
            let e = w[0].end();
            assert!((e.x - w[1].start.x).abs() < 1e-12);
            assert!((e.heading - w[1].start.heading).abs() < 1e-12);
        }
    }

    #[test]
    fn edges_stay_one_lane_apart() {
        let spec = RoadSpec::new(vec![
            SegmentSpec::Straight { length_m: 30.0 },
            SegmentSpec::Fork { length_m: 50.0, spread_m: 4.0 },
            SegmentSpec::Arc { radius_m: 60.0, angle_rad: -0.8 },
        ]);
        let g = RoadGeometry::build(&spec).unwrap();
        for (a, b) in g.left_edge.points().iter().zip(g.right_edge.points()) {
            assert!(((a[0] - b[0]).hypot(a[1] - b[1]) - 3.7).abs() < 1e-6);
        }
    }

    #[test]
    fn locate_recovers_station_and_offset() {
        let spec = RoadSpec::new(vec![
            SegmentSpec::Straight { length_m: 50.0 },
            SegmentSpec::Arc { radius_m: 100.0, angle_rad: 1.0 },
            SegmentSpec::Arc { radius_m: 70.0, angle_rad: -0.5 },
        ]);
        let g = RoadGeometry::build(&spec).unwrap();
        for k in 0..60 {
            let s = 2.3 * k as f64 + 0.4;
            let d = ((k % 7) as f64 - 3.0) * 0.9;
            let p = g.pose_at(s).transform_point([0.0, d]);
            let c = g.locate(p).unwrap();
            assert!((c.station - s).abs() < 1e-9, "{s} vs {}", c.station);
            assert!((c.offset - d).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_tight_radius_and_empty_chain() {
        assert!(RoadGeometry::build(&RoadSpec::new(vec![])).is_err());
        assert!(RoadGeometry::build(&RoadSpec::new(vec![SegmentSpec::Arc { radius_m: 5.0, angle_rad: 1.0 }])).is_err());
    }

    #[test]
    fn mixed_road_has_requested_length() {
        let segs = mixed_road(2000.0, 400.0);
        let total: f64 = segs.iter().map(SegmentSpec::length).sum();
        assert!((total - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn forked_road_keeps_length_and_spaces_forks() {
        let segs = forked_road(5000.0, 400.0, 1000.0, 150.0, 3.0);
        let total: f64 = segs.iter().map(SegmentSpec::length).sum();
        assert!((total - 5000.0).abs() < 1e-9);
        let mut s = 0.0;
        let mut forks = Vec::new();
        for g in &segs {
            if matches!(g, SegmentSpec::Fork { .. }) {
                forks.push(s);
            }
            s += g.length();
        }
        assert!(forks.len() >= 3, "{forks:?}");
        assert!(forks.windows(2).all(|w| w[1] - w[0] >= 1000.0));
    }
}
