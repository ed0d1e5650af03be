//! Trajectory labels: points along a world-frame path, expressed in the
//! vehicle frame.

use thiserror::Error;

use crate::geometry::Pose2;
use crate::path::{dist, interp_cubic, PathError, Polyline};

pub const LABEL_POINTS: usize = 100;
pub const LABEL_SPACING_M: f64 = 1.0;
/// Points extracted when converting a label to lateral offsets at fixed
/// forward distances, so the far end never extrapolates.
const PROFILE_POINTS: usize = 112;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("edge polylines cross")]
    Crossing,
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("label x coordinates are not increasing at point {0}")]
    NonMonotone(usize),
    #[error("unknown maneuver tag {0}")]
    UnknownTag(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum ManeuverTag {
    LaneStable = 0,
    LaneChangeLeft1 = 1,
    LaneChangeLeft2 = 2,
    LaneChangeRight1 = 3,
    LaneChangeRight2 = 4,
    SplitLeft = 5,
    SplitRight = 6,
}

impl TryFrom<u8> for ManeuverTag {
    type Error = LabelError;

    fn try_from(v: u8) -> Result<Self, LabelError> {
        use ManeuverTag::*;
        [LaneStable, LaneChangeLeft1, LaneChangeLeft2, LaneChangeRight1, LaneChangeRight2, SplitLeft, SplitRight]
            .get(v as usize)
            .copied()
            .ok_or(LabelError::UnknownTag(v))
    }
}

/// Points 1 m apart in arc length, in the vehicle frame (x forward, y left).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLabel {
    pub points: Vec<[f64; 3]>,
    pub maneuver: ManeuverTag,
}

impl TrajectoryLabel {
    /// The label re-expressed in a frame displaced by `delta` (given in the
    /// current label frame).
    pub fn in_frame(&self, delta: &Pose2) -> TrajectoryLabel {
        TrajectoryLabel {
            points: self
                .points
                .iter()
                .map(|p| {
                    let q = delta.inverse_transform_point([p[0], p[1]]);
                    [q[0], q[1], p[2]]
                })
                .collect(),
            maneuver: self.maneuver,
        }
    }

    /// Lateral offsets at forward distances `xs`.
    pub fn lateral_at(&self, xs: &[f64]) -> Result<Vec<f64>, LabelError> {
        lateral_at_x(&self.points, xs)
    }
}

/// Lateral offsets `y(x)` of a vehicle-frame point sequence at forward
/// distances `xs`, by cubic interpolation in x.
pub fn lateral_at_x(points: &[[f64; 3]], xs: &[f64]) -> Result<Vec<f64>, LabelError> {
    let px: Vec<f64> = points.iter().map(|p| p[0]).collect();
    let py: Vec<f64> = points.iter().map(|p| p[1]).collect();
    if let Some(i) = px.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(LabelError::NonMonotone(i + 1));
    }
    Ok(xs.iter().map(|&x| interp_cubic(&px, &py, x)).collect())
}

/// Forward distances 1..=100 m at which lateral profiles are evaluated.
pub fn profile_stations() -> Vec<f64> {
    (1..=LABEL_POINTS).map(|k| k as f64 * LABEL_SPACING_M).collect()
}

/// Midline between two lane edges. Edges are matched by arc-length
/// fraction over the shorter edge's length; the result is resampled every
/// 0.25 m.
pub fn centerline_from_edges(left: &Polyline, right: &Polyline) -> Result<Polyline, LabelError> {
    let (ll, lr) = (left.length(), right.length());
    let short = ll.min(lr);
    let n = ((short / 0.25).ceil() as usize).max(1);
    let mut mids = Vec::with_capacity(n + 1);
    let mut gaps = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let f = k as f64 / n as f64;
        let a = left.point_at(f * ll);
        let b = right.point_at(f * lr);
        mids.push([(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]);
        gaps.push([a[0] - b[0], a[1] - b[1]]);
    }
    // Edges cross when the right-to-left vector changes side of the midline.
    let (mut pos, mut neg) = (false, false);
    for k in 0..n {
        let t = [mids[k + 1][0] - mids[k][0], mids[k + 1][1] - mids[k][1]];
        let g = gaps[k];
        let cross = t[0] * g[1] - t[1] * g[0];
        let scale = t[0].hypot(t[1]) * g[0].hypot(g[1]);
        if cross > 1e-9 * scale.max(1e-12) {
            pos = true;
        } else if cross < -1e-9 * scale.max(1e-12) {
            neg = true;
        }
    }
    if pos && neg {
        return Err(LabelError::Crossing);
    }
    mids.dedup_by(|a, b| dist(*a, *b) <= 1e-12);
    Ok(Polyline::new(mids)?.resample(0.25))
}

/// Path points ahead of `anchor`'s projection, expressed in `frame`.
/// With `frame == anchor` this is the plain label; a displaced `frame`
/// gives the corrected label for a perturbed viewpoint.
pub fn extract_anchored(
    global: &Polyline,
    anchor: &Pose2,
    frame: &Pose2,
    n: usize,
    spacing: f64,
    hint: Option<usize>,
) -> Result<Vec<[f64; 3]>, LabelError> {
    let proj = global.project([anchor.x, anchor.y], hint);
    let needed = proj.station + n as f64 * spacing;
    if needed > global.length() + 1e-9 {
        return Err(PathError::InsufficientAhead {
            needed: n as f64 * spacing,
            available: global.length() - proj.station,
        }
        .into());
    }
    Ok((1..=n)
        .map(|k| {
            let p = global.smooth_point_at(proj.station + k as f64 * spacing);
            let q = frame.inverse_transform_point(p);
            [q[0], q[1], 0.0]
        })
        .collect())
}

/// The 100-point label of `global` seen from `pose`.
pub fn extract_local_trajectory(global: &Polyline, pose: &Pose2) -> Result<TrajectoryLabel, LabelError> {
    Ok(TrajectoryLabel {
        points: extract_anchored(global, pose, pose, LABEL_POINTS, LABEL_SPACING_M, None)?,
        maneuver: ManeuverTag::LaneStable,
    })
}

/// Lateral offsets at x = 1..100 m of the path ahead of `anchor`, in `frame`.
pub fn lateral_profile(
    global: &Polyline,
    anchor: &Pose2,
    frame: &Pose2,
    hint: Option<usize>,
) -> Result<Vec<f64>, LabelError> {
    let avail = global.length() - global.project([anchor.x, anchor.y], hint).station;
    let n = PROFILE_POINTS.min((avail / LABEL_SPACING_M).floor() as usize);
    let mut pts = extract_anchored(global, anchor, frame, n.max(LABEL_POINTS), LABEL_SPACING_M, hint)?;
    // The foot point anchors the near end.
    let foot = global.project([anchor.x, anchor.y], hint).foot;
    let f = frame.inverse_transform_point(foot);
    pts.insert(0, [f[0], f[1], 0.0]);
    lateral_at_x(&pts, &profile_stations())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(len: f64) -> Polyline {
        Polyline::new((0..=(len * 4.0) as usize).map(|k| [k as f64 * 0.25, 0.0]).collect()).unwrap()
    }

    fn arc(r: f64, len: f64, step: f64) -> Polyline {
        let n = (len / step) as usize;
        Polyline::new(
            (0..=n)
                .map(|k| {
                    let a = k as f64 * step / r;
                    [r * a.sin(), r - r * a.cos()]
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn aligned_on_straight_gives_unit_steps() {
        let l = extract_local_trajectory(&straight(200.0), &Pose2::new(10.0, 0.0, 0.0)).unwrap();
        assert_eq!(l.points.len(), 100);
        for (i, p) in l.points.iter().enumerate() {
            assert!((p[0] - (i + 1) as f64).abs() < 1e-12 && p[1].abs() < 1e-12 && p[2] == 0.0);
        }
    }

    #[test]
    fn shifted_right_sees_path_on_the_left() {
        let l = extract_local_trajectory(&straight(200.0), &Pose2::new(10.0, -1.0, 0.0)).unwrap();
        assert!(l.points.iter().all(|p| (p[1] - 1.0).abs() < 1e-12));
    }

    #[test]
    fn label_on_circle_lies_on_circle() {
        let r = 200.0;
        let l = extract_local_trajectory(&arc(r, 300.0, 0.25), &Pose2::new(0.0, 0.0, 0.0)).unwrap();
        for p in &l.points {
            assert!((p[0].powi(2) + (p[1] - r).powi(2) - r * r).abs() / (2.0 * r) < 1e-6);
        }
    }

    #[test]
    fn insufficient_path_is_an_error() {
        assert!(matches!(
            extract_local_trajectory(&straight(50.0), &Pose2::new(0.0, 0.0, 0.0)),
            Err(LabelError::Path(PathError::InsufficientAhead { .. }))
        ));
    }

    #[test]
    fn perturbed_frame_equals_rigid_correction() {
        let g = arc(300.0, 400.0, 0.25);
        let pose = Pose2::new(30.0, 1.6, 0.1);
        let delta = Pose2::new(0.0, -0.8, 0.06);
        let plain = extract_anchored(&g, &pose, &pose, 100, 1.0, None).unwrap();
        let moved = extract_anchored(&g, &pose, &pose.compose(&delta), 100, 1.0, None).unwrap();
        let corrected = TrajectoryLabel {
            points: plain,
            maneuver: ManeuverTag::LaneStable,
        }
        .in_frame(&delta);
        for (a, b) in moved.iter().zip(&corrected.points) {
            assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn centerline_of_parallel_edges() {
        let l = Polyline::new(vec![[0.0, 1.85], [50.0, 1.85]]).unwrap();
        let r = Polyline::new(vec![[0.0, -1.85], [50.0, -1.85]]).unwrap();
        let c = centerline_from_edges(&l, &r).unwrap();
        assert!(c.points().iter().all(|p| p[1].abs() < 1e-12));
        assert_eq!(c.points().len(), 201);
    }

    #[test]
    fn centerline_of_concentric_arcs() {
        let mk = |r: f64| {
            let n = 2000;
            Polyline::new(
                (0..=n)
                    .map(|k| {
                        let a = k as f64 / n as f64 * 1.2;
                        [r * a.sin(), 200.0 - r * a.cos()]
                    })
                    .collect(),
            )
            .unwrap()
        };
        let c = centerline_from_edges(&mk(198.15), &mk(201.85)).unwrap();
        for p in c.points() {
            assert!(((p[0].powi(2) + (p[1] - 200.0).powi(2)).sqrt() - 200.0).abs() < 1e-3);
        }
    }

    #[test]
    fn identical_edges_reproduce_the_input() {
        let s = straight(30.0);
        let c = centerline_from_edges(&s, &s).unwrap();
        assert_eq!(c.points().len(), s.points().len());
        for (a, b) in c.points().iter().zip(s.points()) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn crossing_edges_are_rejected() {
        let l = Polyline::new(vec![[0.0, 1.0], [50.0, -1.0]]).unwrap();
        let r = Polyline::new(vec![[0.0, -1.0], [50.0, 1.0]]).unwrap();
        assert_eq!(centerline_from_edges(&l, &r), Err(LabelError::Crossing));
    }

    #[test]
    fn lateral_profile_of_offset_vehicle() {
        let g = straight(300.0);
        let prof = lateral_profile(&g, &Pose2::new(20.0, -0.5, 0.0), &Pose2::new(20.0, -0.5, 0.0), None).unwrap();
        assert_eq!(prof.len(), 100);
        assert!(prof.iter().all(|y| (y - 0.5).abs() < 1e-12));
    }

    #[test]
    fn maneuver_tags_round_trip() {
        for v in 0..7u8 {
            assert_eq!(ManeuverTag::try_from(v).unwrap() as u8, v);
        }
        assert!(ManeuverTag::try_from(7).is_err());
    }
}
