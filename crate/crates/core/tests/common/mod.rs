#![allow(dead_code)]

use std::sync::Arc;

use lanesim_core::config::{ExperimentConfig, RoadLayout};
use lanesim_core::experiment::world_and_recording;
use lanesim_core::world::{Recording, SegmentSpec, WorldScene};

/// About 650 m of straight, left arc, straight, sampled at 4 Hz.
pub fn short_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.world.road = RoadLayout::Custom {
        segments: vec![
            SegmentSpec::Straight { length_m: 150.0 },
            SegmentSpec::Arc {
                radius_m: 300.0,
                angle_rad: 0.6,
            },
            SegmentSpec::Straight { length_m: 320.0 },
        ],
    };
    cfg.rig.frame_rate_hz = 4.0;
    cfg.seed = 3;
    cfg
}

pub fn short_recording(cfg: &ExperimentConfig) -> (Arc<WorldScene>, Recording) {
    world_and_recording(cfg, "short", cfg.seed.wrapping_add(1)).expect("short recording")
}
