//! Procedural roads, a ray-cast renderer, synthetic human drives, and
//! recordings with exact ground truth.

pub mod agreement;
pub mod drive;
pub mod noise;
pub mod recording;
pub mod render;
pub mod road;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agreement::{warp_agreement, WarpAgreement};
pub use drive::{simulate_human_drive, DriveSpec, EgoTrace, TraceSample};
pub use noise::ValueNoise;
pub use recording::{
    read_recording, record, write_recording, CameraId, CameraRig, FrameTick, GroundTruth, Recording,
};
pub use render::{render_frame, render_frame_with, RenderSettings, RenderedFrame, Surface};
pub use road::{forked_road, mixed_road, MarkingSpec, RoadCoord, RoadGeometry, RoadSpec, Segment, SegmentSpec};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid road: {0}")]
    InvalidRoad(String),
    #[error("invalid drive: {0}")]
    InvalidDrive(String),
    #[error("recording: {0}")]
    Recording(String),
    #[error(transparent)]
    Image(#[from] crate::image::ImageError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error("i/o on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

/// Roadside objects that stick out of the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropSpec {
    /// Mean spacing of utility poles along the road; 0 disables poles.
    pub pole_spacing_m: f64,
    pub pole_height_m: f64,
    pub pole_width_m: f64,
    /// Distance of poles beyond the lane edge.
    pub pole_setback_m: f64,
    pub pole_albedo: f64,
    /// Low barriers along both sides of the road.
    pub barriers: bool,
    pub barrier_height_m: f64,
    pub barrier_setback_m: f64,
    pub barrier_panel_m: f64,
    pub barrier_albedo: f64,
}

impl Default for PropSpec {
    fn default() -> Self {
        Self {
            pole_spacing_m: 80.0,
            pole_height_m: 6.0,
            pole_width_m: 0.3,
            pole_setback_m: 2.5,
            pole_albedo: 0.1,
            barriers: true,
            barrier_height_m: 0.8,
            barrier_setback_m: 1.6,
            barrier_panel_m: 4.0,
            barrier_albedo: 0.8,
        }
    }
}

/// Ground albedo levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceSpec {
    pub asphalt: f64,
    pub grass: f64,
    pub marking: f64,
    pub sky: f64,
    pub noise_amplitude: f64,
    pub noise_cell_m: f64,
}

impl Default for SurfaceSpec {
    fn default() -> Self {
        Self {
            asphalt: 0.3,
            grass: 0.45,
            marking: 0.9,
            sky: 0.5,
            noise_amplitude: 0.06,
            noise_cell_m: 1.5,
        }
    }
}

/// A vertical rectangle standing on the ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Billboard {
    /// Ground point at the bottom center.
    pub base: [f64; 2],
    /// Direction of the rectangle's horizontal axis.
    pub yaw: f64,
    pub half_width: f64,
    pub height: f64,
    pub albedo: f64,
}

impl Billboard {
    /// Ray parameter of the hit with origin `o` and direction `r`.
    pub fn intersect(&self, o: [f64; 3], r: [f64; 3]) -> Option<f64> {
        let (s, c) = self.yaw.sin_cos();
        let n = [-s, c];
        let denom = n[0] * r[0] + n[1] * r[1];
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = (n[0] * (self.base[0] - o[0]) + n[1] * (self.base[1] - o[1])) / denom;
        if t <= 0.0 {
            return None;
        }
        let q = [o[0] + t * r[0], o[1] + t * r[1], o[2] + t * r[2]];
        let along = c * (q[0] - self.base[0]) + s * (q[1] - self.base[1]);
        if along.abs() <= self.half_width && q[2] >= 0.0 && q[2] <= self.height {
            Some(t)
        } else {
            None
        }
    }

    pub fn corners(&self) -> [[f64; 3]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (c * self.half_width, s * self.half_width);
        let (x, y) = (self.base[0], self.base[1]);
        [
            [x - dx, y - dy, 0.0],
            [x + dx, y + dy, 0.0],
            [x - dx, y - dy, self.height],
            [x + dx, y + dy, self.height],
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub road: RoadSpec,
    pub props: PropSpec,
    pub surface: SurfaceSpec,
}

impl WorldSpec {
    pub fn new(road: RoadSpec) -> Self {
        Self {
            road,
            props: PropSpec::default(),
            surface: SurfaceSpec::default(),
        }
    }
}

/// Everything the renderer needs: road geometry, textures, and props.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldScene {
    pub road: RoadGeometry,
    pub surface: SurfaceSpec,
    pub noise: ValueNoise,
    pub billboards: Vec<Billboard>,
    pub seed: u64,
}

impl WorldScene {
    pub fn pole_count(&self, albedo: f64) -> usize {
        self.billboards.iter().filter(|b| b.albedo == albedo).count()
    }
}

/// Builds the scene: road, seeded ground texture, and seeded prop placement.
pub fn build_road(spec: &WorldSpec, seed: u64) -> Result<WorldScene, WorldError> {
    let road = RoadGeometry::build(&spec.road)?;
    let p = &spec.props;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x706f_6c65);
    let half = road.lane_half();
    let mut billboards = Vec::new();
    let total = road.length();
    if p.pole_spacing_m > 0.0 {
        let mut s = p.pole_spacing_m * rng.random_range(0.2..0.8);
        while s < total {
            let g = &road.segments[road.segment_at(s)];
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let ramp = if side < 0.0 { g.ramp_spread(s - g.station0) } else { 0.0 };
            let d = side * (half + p.pole_setback_m + ramp + rng.random_range(0.0..1.0));
            let pose = road.pose_at(s);
            billboards.push(Billboard {
                base: pose.transform_point([0.0, d]),
                yaw: pose.heading,
                half_width: p.pole_width_m / 2.0,
                height: p.pole_height_m,
                albedo: p.pole_albedo,
            });
            s += p.pole_spacing_m * rng.random_range(0.7..1.3);
        }
    }
    if p.barriers {
        for side in [1.0, -1.0] {
            let mut s = 0.0;
            while s < total {
                let e = (s + p.barrier_panel_m).min(total);
                let on_fork = |t: f64| {
                    let g = &road.segments[road.segment_at(t)];
                    matches!(g.spec, SegmentSpec::Fork { .. })
                };
                if !(side < 0.0 && (on_fork(s) || on_fork(e))) {
                    let d = side * (half + p.barrier_setback_m);
                    let a = road.pose_at(s).transform_point([0.0, d]);
                    let b = road.pose_at(e).transform_point([0.0, d]);
                    let half_width = (b[0] - a[0]).hypot(b[1] - a[1]) / 2.0;
                    if half_width > 1e-6 {
                        billboards.push(Billboard {
                            base: [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0],
                            yaw: (b[1] - a[1]).atan2(b[0] - a[0]),
                            half_width,
                            height: p.barrier_height_m,
                            albedo: p.barrier_albedo,
                        });
                    }
                }
                s = e;
            }
        }
    }
    Ok(WorldScene {
        road,
        surface: spec.surface,
        noise: ValueNoise::new(seed, spec.surface.noise_cell_m),
        billboards,
        seed,
    })
}
