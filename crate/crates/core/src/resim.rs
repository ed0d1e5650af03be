//! Closed-loop resimulation over a recording: nearest-frame view synthesis,
//! a kinematic bicycle, pure pursuit, wheel-on-boundary failures, resets.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augmentation::LABEL_MARGIN_M;
use crate::geometry::{warp_viewpoint_with, CameraPose, GeometryError, Pose2, WarpedImage};
use crate::image::ImageBuffer;
use crate::labels::LABEL_POINTS;
use crate::par::Exec;
use crate::patches::{PatchError, PatchSpec};
use crate::path::Polyline;
use crate::policy::{Driver, PolicyError, PrivilegedInput, TrajectoryPrediction};
use crate::world::{CameraId, GroundTruth, Recording, WorldError};

pub const MAX_STEERING_RAD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ResimError {
    #[error("invalid resim config: {0}")]
    InvalidConfig(String),
    #[error("view synthesis out of bounds: offset {offset_m:.3} m, yaw {yaw_deg:.2} deg")]
    WarpInvalid { offset_m: f64, yaw_deg: f64 },
    #[error("lookahead {0} m is outside the predicted range")]
    Lookahead(f64),
    #[error("recording is empty or too short to drive")]
    EmptyRecording,
    #[error("report parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleSpec {
    pub wheelbase_m: f64,
    pub track_m: f64,
}

impl Default for VehicleSpec {
    fn default() -> Self {
        Self {
            wheelbase_m: 2.85,
            track_m: 1.6,
        }
    }
}

impl VehicleSpec {
    pub fn validate(&self, lane_width_m: f64) -> Result<(), ResimError> {
        if !(self.wheelbase_m > 0.0 && self.track_m > 0.0 && self.track_m < lane_width_m) {
            return Err(ResimError::InvalidConfig(format!(
                "vehicle needs positive dims and track < lane width {lane_width_m}"
            )));
        }
        Ok(())
    }

    /// Wheel contact points in the world: rear left, rear right, front left, front right.
    pub fn wheels(&self, pose: &Pose2) -> [[f64; 2]; 4] {
        let h = self.track_m / 2.0;
        let l = self.wheelbase_m;
        [[0.0, h], [0.0, -h], [l, h], [l, -h]].map(|p| pose.transform_point(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub pose: Pose2,
    pub speed: f64,
    pub steering: f64,
    pub arc_length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResimConfig {
    pub dt_s: f64,
    pub max_warp_offset_m: f64,
    pub max_warp_yaw_deg: f64,
    pub cooldown_m: f64,
    pub lookahead_time_s: f64,
    pub min_lookahead_m: f64,
}

impl Default for ResimConfig {
    fn default() -> Self {
        Self {
            dt_s: 0.05,
            max_warp_offset_m: 1.5,
            max_warp_yaw_deg: 10.0,
            cooldown_m: 50.0,
            lookahead_time_s: 1.2,
            min_lookahead_m: 8.0,
        }
    }
}

impl ResimConfig {
    pub fn validate(&self) -> Result<(), ResimError> {
        let bad = |m: &str| Err(ResimError::InvalidConfig(m.into()));
        if !(self.dt_s > 0.0 && self.dt_s <= 0.2) {
            return bad("dt must be in (0, 0.2]");
        }
        if !(self.max_warp_offset_m > 0.0 && self.max_warp_yaw_deg > 0.0) {
            return bad("warp bounds must be positive");
        }
        if !(self.min_lookahead_m >= 1.0 && self.lookahead_time_s >= 0.0) {
            return bad("lookahead must be at least 1 m");
        }
        if !(self.cooldown_m > self.min_lookahead_m) {
            return bad("cooldown must exceed the lookahead");
        }
        Ok(())
    }

    pub fn lookahead(&self, speed: f64) -> f64 {
        (self.lookahead_time_s * speed).max(self.min_lookahead_m)
    }
}

/// Kinematic bicycle about the rear axle, integrated exactly along the arc.
pub fn step_vehicle(state: &SimState, steering: f64, spec: &VehicleSpec, dt: f64) -> SimState {
    let steering = steering.clamp(-MAX_STEERING_RAD, MAX_STEERING_RAD);
    let ds = state.speed * dt;
    let k = steering.tan() / spec.wheelbase_m;
    let Pose2 { x, y, heading } = state.pose;
    let pose = if (k * ds).abs() < 1e-12 {
        Pose2::new(x + ds * heading.cos(), y + ds * heading.sin(), heading)
    } else {
        let h1 = heading + k * ds;
        Pose2::new(
            x + (h1.sin() - heading.sin()) / k,
            y - (h1.cos() - heading.cos()) / k,
            h1,
        )
    };
    SimState {
        pose,
        speed: state.speed,
        steering,
        arc_length: state.arc_length + ds.abs(),
    }
}

/// Steering that puts the lookahead point of the prediction on the
/// vehicle's arc. Not clamped.
pub fn pure_pursuit(pred: &TrajectoryPrediction, spec: &VehicleSpec, lookahead: f64) -> Result<f64, ResimError> {
    if !(1.0..=LABEL_POINTS as f64).contains(&lookahead) {
        return Err(ResimError::Lookahead(lookahead));
    }
    let y = pred.at(lookahead);
    Ok((2.0 * spec.wheelbase_m * y / (lookahead * lookahead + y * y)).atan())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureCause {
    BoundaryTouch,
    WarpInvalid,
}

impl FailureCause {
    pub fn name(self) -> &'static str {
        match self {
            FailureCause::BoundaryTouch => "boundary_touch",
            FailureCause::WarpInvalid => "warp_invalid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "boundary_touch" => Some(FailureCause::BoundaryTouch),
            "warp_invalid" => Some(FailureCause::WarpInvalid),
            _ => None,
        }
    }
}

/// Boundary touch when a wheel is left of the left edge or right of the right edge.
pub fn detect_failure(state: &SimState, spec: &VehicleSpec, truth: &GroundTruth, hint: Option<usize>) -> Option<FailureCause> {
    spec.wheels(&state.pose).iter().find_map(|&w| {
        let l = truth.left_edge.project(w, hint);
        let r = truth.right_edge.project(w, hint);
        (l.offset > 0.0 || r.offset < 0.0).then_some(FailureCause::BoundaryTouch)
    })
}

/// Frame whose centerline station is nearest `station`; ties go to the
/// lower index. Assumes non-decreasing frame stations.
pub fn nearest_frame_by_station(rec: &Recording, station: f64) -> usize {
    let k = rec.ticks.partition_point(|t| t.station < station);
    if k == 0 {
        return 0;
    }
    if k == rec.ticks.len() {
        return k - 1;
    }
    let below = station - rec.ticks[k - 1].station;
    let above = rec.ticks[k].station - station;
    if above < below {
        k
    } else {
        k - 1
    }
}

pub fn nearest_frame(rec: &Recording, pose: &Pose2) -> usize {
    let p = rec.truth.centerline.project([pose.x, pose.y], None);
    nearest_frame_by_station(rec, p.station)
}

/// Sim pose relative to the recorded pose of `frame`, checked against the
/// warp bounds.
pub fn warp_offset(rec: &Recording, frame: usize, pose: &Pose2, cfg: &ResimConfig) -> Result<Pose2, ResimError> {
    let rel = pose.relative_to(&rec.ticks[frame].pose);
    if rel.y.abs() > cfg.max_warp_offset_m || rel.heading.abs() > cfg.max_warp_yaw_deg.to_radians() {
        return Err(ResimError::WarpInvalid {
            offset_m: rel.y,
            yaw_deg: rel.heading.to_degrees(),
        });
    }
    Ok(rel)
}

/// Warps `image` (the recorded frame of `cam` at `frame`) to the standard
/// camera on the sim pose. Warps outside the bounds are still computed;
/// the error is returned alongside.
pub fn synth_view_from(
    rec: &Recording,
    frame: usize,
    cam: CameraId,
    image: &ImageBuffer,
    pose: &Pose2,
    cfg: &ResimConfig,
) -> Result<(WarpedImage, Option<ResimError>), ResimError> {
    let bound = warp_offset(rec, frame, pose, cfg).err();
    let src = rec.camera_pose(frame, cam);
    let dst = CameraPose::standard().mounted_on(pose);
    let warped = warp_viewpoint_with(Exec::Sequential, image, &src, &dst, &rec.rig.intrinsics)?;
    Ok((warped, bound))
}

/// View of the standard camera at `pose`, synthesized from the nearest frame.
pub fn synth_view(rec: &Recording, pose: &Pose2, cam: CameraId, cfg: &ResimConfig) -> Result<WarpedImage, ResimError> {
    let frame = nearest_frame(rec, pose);
    let image = rec.frame(frame, cam)?;
    match synth_view_from(rec, frame, cam, &image, pose, cfg)? {
        (_, Some(e)) => Err(e),
        (w, None) => Ok(w),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureEvent {
    pub arc_length_m: f64,
    pub cause: FailureCause,
    pub step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub arc_length_m: f64,
    pub station_m: f64,
    /// Rear-axle offset from the centerline, positive left.
    pub offset_m: f64,
    pub lateral_accel: f64,
    pub steering: f64,
    pub frame: u32,
    pub cooldown: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResimReport {
    pub recording: String,
    /// Config hash of the recording.
    pub config_hash: String,
    pub policy: String,
    pub dt_s: f64,
    pub distance_m: f64,
    pub failures: Vec<FailureEvent>,
    pub steps: Vec<StepRecord>,
    pub predictions: Vec<Vec<f64>>,
}

impl ResimReport {
    pub fn count(&self, cause: FailureCause) -> usize {
        self.failures.iter().filter(|f| f.cause == cause).count()
    }

    /// Fixed-order structured text.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "resim-report 1");
        let _ = writeln!(s, "recording {}", self.recording);
        let _ = writeln!(s, "config_hash {}", self.config_hash);
        let _ = writeln!(s, "policy {}", self.policy);
        let _ = writeln!(s, "dt_s {:e}", self.dt_s);
        let _ = writeln!(s, "distance_m {:e}", self.distance_m);
        let _ = writeln!(s, "failures {}", self.failures.len());
        for f in &self.failures {
            let _ = writeln!(s, "{:e} {} {}", f.arc_length_m, f.cause.name(), f.step);
        }
        let _ = writeln!(s, "steps {}", self.steps.len());
        let _ = writeln!(s, "# t arc_length_m station_m offset_m lateral_accel steering frame cooldown");
        for r in &self.steps {
            let _ = writeln!(
                s,
                "{:e} {:e} {:e} {:e} {:e} {:e} {} {}",
                r.t,
                r.arc_length_m,
                r.station_m,
                r.offset_m,
                r.lateral_accel,
                r.steering,
                r.frame,
                r.cooldown as u8
            );
        }
        let _ = writeln!(s, "predictions {}", self.predictions.len());
        for p in &self.predictions {
            let row: Vec<String> = p.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ResimError> {
        let err = |m: &str| ResimError::Parse(m.to_string());
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        let mut field = |key: &str| -> Result<String, ResimError> {
            let l = lines.next().ok_or_else(|| err("unexpected end"))?;
            l.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| ResimError::Parse(format!("expected '{key}', got '{l}'")))
        };
        let num = |v: &str| v.parse::<f64>().map_err(|_| ResimError::Parse(format!("bad number '{v}'")));
        let int = |v: &str| v.parse::<usize>().map_err(|_| ResimError::Parse(format!("bad integer '{v}'")));
        if field("resim-report")? != "1" {
            return Err(err("unsupported report version"));
        }
        let recording = field("recording")?;
        let config_hash = field("config_hash")?;
        let policy = field("policy")?;
        let dt_s = num(&field("dt_s")?)?;
        let distance_m = num(&field("distance_m")?)?;
        let nf = int(&field("failures")?)?;
        let mut rest = text.lines().filter(|l| !l.starts_with('#')).skip(7);
        let mut failures = Vec::with_capacity(nf);
        for _ in 0..nf {
            let l = rest.next().ok_or_else(|| err("missing failure line"))?;
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 3 {
                return Err(err("failure line needs 3 fields"));
            }
            failures.push(FailureEvent {
                arc_length_m: num(f[0])?,
                cause: FailureCause::parse(f[1]).ok_or_else(|| err("unknown failure cause"))?,
                step: int(f[2])?,
            });
        }
        let ns = int(
            rest.next()
                .and_then(|l| l.strip_prefix("steps "))
                .ok_or_else(|| err("expected 'steps'"))?,
        )?;
        let mut steps = Vec::with_capacity(ns);
        for _ in 0..ns {
            let l = rest.next().ok_or_else(|| err("missing step line"))?;
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 8 {
                return Err(err("step line needs 8 fields"));
            }
            steps.push(StepRecord {
                t: num(f[0])?,
                arc_length_m: num(f[1])?,
                station_m: num(f[2])?,
                offset_m: num(f[3])?,
                lateral_accel: num(f[4])?,
                steering: num(f[5])?,
                frame: int(f[6])? as u32,
                cooldown: f[7] == "1",
            });
        }
        let np = int(
            rest.next()
                .and_then(|l| l.strip_prefix("predictions "))
                .ok_or_else(|| err("expected 'predictions'"))?,
        )?;
        let mut predictions = Vec::with_capacity(np);
        for _ in 0..np {
            let l = rest.next().ok_or_else(|| err("missing prediction line"))?;
            predictions.push(l.split_whitespace().map(num).collect::<Result<Vec<_>, _>>()?);
        }
        Ok(Self {
            recording,
            config_hash,
            policy,
            dt_s,
            distance_m,
            failures,
            steps,
            predictions,
        })
    }
}

fn centerline_pose(c: &Polyline, station: f64) -> Pose2 {
    let [x, y] = c.point_at(station);
    Pose2::new(x, y, c.heading_at(station))
}

/// Last centerline station the run may reach.
pub fn drivable_end(rec: &Recording) -> f64 {
    let last = rec.ticks.last().map_or(0.0, |t| t.station);
    last.min(rec.truth.centerline.length() - LABEL_MARGIN_M)
}

/// Drives `driver` over `rec` in closed loop. Patch policies see the
/// standard-camera view synthesized from the nearest recorded frame of
/// `camera`; privileged policies skip view synthesis.
pub fn run_resim(
    rec: &Recording,
    driver: Driver,
    policy_name: &str,
    patch: &PatchSpec,
    vehicle: &VehicleSpec,
    cfg: &ResimConfig,
) -> Result<ResimReport, ResimError> {
    cfg.validate()?;
    if rec.len() < 2 {
        return Err(ResimError::EmptyRecording);
    }
    let truth = &rec.truth;
    let center = &truth.centerline;
    let end = drivable_end(rec);
    let duration = rec.ticks.last().unwrap().t - rec.ticks[0].t;
    let cam = CameraId::Center;
    let intr = rec.rig.intrinsics;
    let mut state = SimState {
        pose: rec.ticks[0].pose,
        speed: rec.ticks[0].speed,
        steering: 0.0,
        arc_length: 0.0,
    };
    let mut hint = Some(rec.ticks[0].segment_hint);
    let mut cooldown_until = f64::NEG_INFINITY;
    let mut cache: Option<(usize, ImageBuffer)> = None;
    let mut failures = Vec::new();
    let mut steps = Vec::new();
    let mut predictions = Vec::new();
    let mut t = 0.0;
    let reset = |state: &mut SimState, station: f64| {
        state.pose = centerline_pose(center, station);
        state.steering = 0.0;
    };
    loop {
        let mut proj = center.project([state.pose.x, state.pose.y], hint);
        hint = Some(proj.segment);
        if proj.station >= end || t > duration {
            break;
        }
        let mut frame = nearest_frame_by_station(rec, proj.station);
        let cooldown = state.arc_length < cooldown_until;
        if !cooldown && warp_offset(rec, frame, &state.pose, cfg).is_err() {
            failures.push(FailureEvent {
                arc_length_m: state.arc_length,
                cause: FailureCause::WarpInvalid,
                step: steps.len(),
            });
            reset(&mut state, proj.station);
            cooldown_until = state.arc_length + cfg.cooldown_m;
            proj = center.project([state.pose.x, state.pose.y], hint);
            frame = nearest_frame_by_station(rec, proj.station);
        }
        let cooldown = state.arc_length < cooldown_until;
        state.speed = rec.ticks[frame].speed;
        let pred = match driver {
            Driver::Privileged(p) => p.predict_privileged(&PrivilegedInput {
                pose: state.pose,
                centerline: center,
                human_path: &truth.human_path,
                centerline_hint: hint,
            })?,
            Driver::Patch(p) => {
                if cache.as_ref().is_none_or(|(f, _)| *f != frame) {
                    cache = Some((frame, rec.frame(frame, cam)?));
                }
                let img = &cache.as_ref().unwrap().1;
                let (view, _) = synth_view_from(rec, frame, cam, img, &state.pose, cfg)?;
                let x = patch.extract(&view.image, &CameraPose::standard(), &intr)?;
                p.predict_patch(&x)?
            }
        };
        let steer = pure_pursuit(&pred, vehicle, cfg.lookahead(state.speed))?.clamp(-MAX_STEERING_RAD, MAX_STEERING_RAD);
        steps.push(StepRecord {
            t,
            arc_length_m: state.arc_length,
            station_m: proj.station,
            offset_m: proj.offset,
            lateral_accel: state.speed * state.speed * steer.tan() / vehicle.wheelbase_m,
            steering: steer,
            frame: frame as u32,
            cooldown,
        });
        predictions.push(pred.offsets().to_vec());
        state = step_vehicle(&state, steer, vehicle, cfg.dt_s);
        t += cfg.dt_s;
        if state.arc_length >= cooldown_until {
            if let Some(cause) = detect_failure(&state, vehicle, truth, hint) {
                failures.push(FailureEvent {
                    arc_length_m: state.arc_length,
                    cause,
                    step: steps.len(),
                });
                let p = center.project([state.pose.x, state.pose.y], hint);
                reset(&mut state, p.station);
                cooldown_until = state.arc_length + cfg.cooldown_m;
            }
        }
    }
    Ok(ResimReport {
        recording: rec.id.clone(),
        config_hash: rec.config_hash.clone(),
        policy: policy_name.to_string(),
        dt_s: cfg.dt_s,
        distance_m: state.arc_length,
        failures,
        steps,
        predictions,
    })
}
