//! Experiment configuration. Every key has a default; unknown keys are
//! rejected. The hash covers the canonical re-serialization, so formatting
//! and key order don't change it.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::augmentation::{AugmentSpec, LabelSource};
use crate::geometry::{CameraIntrinsics, CameraPose};
use crate::metrics::{MapaProtocol, DEFAULT_COMFORT_SCALE};
use crate::patches::{PatchSpec, RoiSpec};
use crate::resim::{ResimConfig, VehicleSpec};
use crate::world::{
    forked_road, mixed_road, CameraRig, DriveSpec, MarkingSpec, PropSpec, RoadSpec, SegmentSpec, SurfaceSpec,
    WorldSpec,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RoadLayout {
    Mixed {
        length_m: f64,
        radius_m: f64,
    },
    Forked {
        length_m: f64,
        radius_m: f64,
        fork_every_m: f64,
        fork_length_m: f64,
        spread_m: f64,
    },
    Custom {
        segments: Vec<SegmentSpec>,
    },
}

impl RoadLayout {
    pub fn segments(&self) -> Vec<SegmentSpec> {
        match self {
            RoadLayout::Mixed { length_m, radius_m } => mixed_road(*length_m, *radius_m),
            RoadLayout::Forked {
                length_m,
                radius_m,
                fork_every_m,
                fork_length_m,
                spread_m,
            } => forked_road(*length_m, *radius_m, *fork_every_m, *fork_length_m, *spread_m),
            RoadLayout::Custom { segments } => segments.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub road: RoadLayout,
    pub lane_width_m: f64,
    pub shoulder_m: f64,
    pub marking: MarkingSpec,
    pub props: PropSpec,
    pub surface: SurfaceSpec,
    /// The human drive that gets recorded.
    pub drive: DriveSpec,
}

impl Default for WorldConfig {
    fn default() -> Self {
        let r = RoadSpec::new(vec![]);
        Self {
            road: RoadLayout::Mixed {
                length_m: 3000.0,
                radius_m: 400.0,
            },
            lane_width_m: r.lane_width_m,
            shoulder_m: r.shoulder_m,
            marking: r.marking,
            props: PropSpec::default(),
            surface: SurfaceSpec::default(),
            drive: DriveSpec::default(),
        }
    }
}

impl WorldConfig {
    pub fn world_spec(&self) -> WorldSpec {
        WorldSpec {
            road: RoadSpec {
                segments: self.road.segments(),
                lane_width_m: self.lane_width_m,
                shoulder_m: self.shoulder_m,
                marking: self.marking,
            },
            props: self.props,
            surface: self.surface,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigConfig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub side_offset_m: f64,
    pub frame_rate_hz: f64,
}

impl Default for RigConfig {
    fn default() -> Self {
        let k = CameraRig::default_intrinsics();
        Self {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
            side_offset_m: 0.5,
            frame_rate_hz: 10.0,
        }
    }
}

impl RigConfig {
    pub fn rig(&self) -> Result<CameraRig, ConfigError> {
        let k = CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(CameraRig::standard(k, self.side_offset_m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PatchConfig {
    Regular {
        out_w: usize,
        out_h: usize,
    },
    Multires {
        patch_w: usize,
        patch_h: usize,
        ratio_w: f64,
        ratio_h: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub shift_range_m: f64,
    pub yaw_range_deg: f64,
    pub camera_weights: [f64; 3],
    pub label_source: LabelSource,
    pub min_valid_fraction: f64,
    pub samples_per_frame: usize,
    pub hfov_deg: f64,
    pub bottom_width_m: f64,
    pub patch: PatchConfig,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        let roi = RoiSpec::default();
        Self {
            shift_range_m: 1.0,
            yaw_range_deg: 5.0,
            camera_weights: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            label_source: LabelSource::Centerline,
            min_valid_fraction: 0.98,
            samples_per_frame: 2,
            hfov_deg: roi.hfov_deg,
            bottom_width_m: roi.bottom_width_m,
            patch: PatchConfig::Regular { out_w: 48, out_h: 16 },
        }
    }
}

impl AugmentConfig {
    pub fn patch_spec(&self, intr: &CameraIntrinsics) -> Result<PatchSpec, ConfigError> {
        let invalid = |e: crate::patches::PatchError| ConfigError::Invalid(e.to_string());
        let roi = |out_w, out_h| RoiSpec {
            hfov_deg: self.hfov_deg,
            bottom_width_m: self.bottom_width_m,
            out_w,
            out_h,
        };
        let spec = match self.patch {
            PatchConfig::Regular { out_w, out_h } => {
                let r = roi(out_w, out_h);
                r.validate().map_err(invalid)?;
                r.geometry(&CameraPose::standard(), intr).map_err(invalid)?;
                PatchSpec::Regular(r)
            }
            PatchConfig::Multires {
                patch_w,
                patch_h,
                ratio_w,
                ratio_h,
            } => PatchSpec::multires_for_camera(
                roi(patch_w, patch_h),
                &CameraPose::standard(),
                intr,
                patch_w,
                patch_h,
                ratio_w,
                ratio_h,
            )
            .map_err(invalid)?,
        };
        Ok(spec)
    }

    pub fn augment_spec(&self, intr: &CameraIntrinsics, seed: u64) -> Result<AugmentSpec, ConfigError> {
        Ok(AugmentSpec {
            shift_range_m: self.shift_range_m,
            yaw_range_deg: self.yaw_range_deg,
            camera_weights: self.camera_weights,
            label_source: self.label_source,
            patch: self.patch_spec(intr)?,
            min_valid_fraction: self.min_valid_fraction,
            seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lambda: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResimSection {
    pub dt_s: f64,
    pub max_warp_offset_m: f64,
    pub max_warp_yaw_deg: f64,
    pub cooldown_m: f64,
    pub lookahead_time_s: f64,
    pub min_lookahead_m: f64,
    pub vehicle: VehicleSpec,
}

impl Default for ResimSection {
    fn default() -> Self {
        Self::from_parts(&ResimConfig::default(), VehicleSpec::default())
    }
}

impl ResimSection {
    pub fn from_parts(c: &ResimConfig, vehicle: VehicleSpec) -> Self {
        Self {
            dt_s: c.dt_s,
            max_warp_offset_m: c.max_warp_offset_m,
            max_warp_yaw_deg: c.max_warp_yaw_deg,
            cooldown_m: c.cooldown_m,
            lookahead_time_s: c.lookahead_time_s,
            min_lookahead_m: c.min_lookahead_m,
            vehicle,
        }
    }

    pub fn resim(&self) -> ResimConfig {
        ResimConfig {
            dt_s: self.dt_s,
            max_warp_offset_m: self.max_warp_offset_m,
            max_warp_yaw_deg: self.max_warp_yaw_deg,
            cooldown_m: self.cooldown_m,
            lookahead_time_s: self.lookahead_time_s,
            min_lookahead_m: self.min_lookahead_m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub comfort_scale: f64,
    pub mapa: MapaProtocol,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            comfort_scale: DEFAULT_COMFORT_SCALE,
            mapa: MapaProtocol::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub world: WorldConfig,
    pub rig: RigConfig,
    pub augment: AugmentConfig,
    pub train: TrainConfig,
    pub resim: ResimSection,
    pub metrics: MetricsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            world: WorldConfig::default(),
            rig: RigConfig::default(),
            augment: AugmentConfig::default(),
            train: TrainConfig::default(),
            resim: ResimSection::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: Self = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        let world = self.world.world_spec();
        world.road.validate().map_err(|e| invalid(&e))?;
        self.world.drive.validate().map_err(|e| invalid(&e))?;
        let rig = self.rig.rig()?;
        if !(self.rig.frame_rate_hz > 0.0) {
            return Err(ConfigError::Invalid("frame rate must be positive".into()));
        }
        let r = &self.resim;
        r.resim().validate().map_err(|e| invalid(&e))?;
        r.vehicle.validate(self.world.lane_width_m).map_err(|e| invalid(&e))?;
        self.augment
            .augment_spec(&rig.intrinsics, self.seed)?
            .validate(r.max_warp_offset_m, r.max_warp_yaw_deg)
            .map_err(|e| invalid(&e))?;
        if self.augment.samples_per_frame == 0 {
            return Err(ConfigError::Invalid("samples_per_frame must be positive".into()));
        }
        if !(self.train.lambda >= 0.0 && self.train.lambda.is_finite()) {
            return Err(ConfigError::Invalid("lambda must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn hash_bytes(&self) -> [u8; 32] {
        Sha256::digest(self.to_toml().as_bytes()).into()
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(self.hash_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash_hex(), c.hash_hex());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = ExperimentConfig::from_toml(
            "seed = 5\n[world.road]\nkind = \"forked\"\nlength_m = 4000.0\nradius_m = 500.0\nfork_every_m = 800.0\nfork_length_m = 150.0\nspread_m = 3.0\n[augment.patch]\nkind = \"multires\"\npatch_w = 48\npatch_h = 28\nratio_w = 2.0\nratio_h = 8.0\n",
        )
        .unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(c.train, TrainConfig::default());
        let spec = c.augment.patch_spec(&c.rig.rig().unwrap().intrinsics).unwrap();
        assert_eq!(spec.dims(), (48, 28));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(ExperimentConfig::from_toml("sede = 1"), Err(ConfigError::Parse(_))));
        assert!(ExperimentConfig::from_toml("[train]\nlamda = 2.0").is_err());
        assert!(ExperimentConfig::from_toml("[resim]\ndt_s = 0.05\nbogus = 1").is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(matches!(
            ExperimentConfig::from_toml("[augment]\nshift_range_m = 3.0"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(ExperimentConfig::from_toml("[resim]\ndt_s = 0.5").is_err());
    }

    #[test]
    fn hash_ignores_formatting_but_not_values() {
        let a = ExperimentConfig::from_toml("seed = 1\n[train]\nlambda = 2.0\n").unwrap();
        let b = ExperimentConfig::from_toml("seed = 1\n\n[train]\n  lambda = 2.0   # comment\n").unwrap();
        let c = ExperimentConfig::from_toml("seed = 2\n[train]\nlambda = 2.0\n").unwrap();
        assert_eq!(a.hash_hex(), b.hash_hex());
        assert_ne!(a.hash_hex(), c.hash_hex());
    }
}
