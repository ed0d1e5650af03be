//! Compares a flat-world warp against a direct render, split by surface.

use crate::geometry::{warp_viewpoint_with, CameraIntrinsics, CameraPose, GeometryError, ViewpointMap};
use crate::par::Exec;
use crate::world::render::{render_frame_with, RenderSettings, Surface};
use crate::world::WorldScene;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpAgreement {
    /// Mean |warp - render| over pixels that are ground in both views.
    pub ground_mae: f64,
    pub ground_pixels: usize,
    /// Mean |warp - render| over billboard pixels of the direct render.
    pub billboard_mae: f64,
    pub billboard_pixels: usize,
    /// Largest per-billboard mean error among billboards covering at least
    /// `MIN_REGION_PIXELS` pixels.
    pub worst_billboard_region_mae: f64,
}

pub const MIN_REGION_PIXELS: usize = 8;

/// Renders at `src`, warps to `dst`, and compares with a render at `dst`.
/// Frames are quantized to 8 bits like recorded frames.
pub fn warp_agreement(
    exec: Exec,
    scene: &WorldScene,
    src: &CameraPose,
    dst: &CameraPose,
    intr: &CameraIntrinsics,
) -> Result<WarpAgreement, GeometryError> {
    let settings = RenderSettings::default();
    let mut a = render_frame_with(exec, scene, src, intr, &settings);
    let mut b = render_frame_with(exec, scene, dst, intr, &settings);
    a.image.quantize_8bit();
    b.image.quantize_8bit();
    let warped = warp_viewpoint_with(exec, &a.image, src, dst, intr)?;
    let map = ViewpointMap::new(src, dst, intr)?;
    let w = intr.width;
    let src_surface = |u: f64, v: f64| -> bool {
        // All bilinear taps must see ground in the source.
        let x = (u - 0.5).floor();
        let y = (v - 0.5).floor();
        for dy in 0..2 {
            for dx in 0..2 {
                let (c, r) = (x + dx as f64, y + dy as f64);
                if c < 0.0 || r < 0.0 || c >= w as f64 || r >= intr.height as f64 {
                    continue;
                }
                if a.surface[r as usize * w + c as usize] != Surface::Ground {
                    return false;
                }
            }
        }
        true
    };
    let (mut g_sum, mut g_n, mut b_sum, mut b_n) = (0.0, 0usize, 0.0, 0usize);
    let mut regions: std::collections::BTreeMap<u32, (f64, usize)> = Default::default();
    for row in 0..intr.height {
        for col in 0..w {
            let i = row * w + col;
            if !warped.valid[i] {
                continue;
            }
            let err = (warped.image.pixels()[i] as f64 - b.image.pixels()[i] as f64).abs();
            match b.surface[i] {
                Surface::Ground => {
                    if let (Some([su, sv]), _) = map.source_of(col as f64 + 0.5, row as f64 + 0.5) {
                        if src_surface(su, sv) {
                            g_sum += err;
                            g_n += 1;
                        }
                    }
                }
                Surface::Billboard => {
                    b_sum += err;
                    b_n += 1;
                    let e = regions.entry(b.billboard[i]).or_default();
                    e.0 += err;
                    e.1 += 1;
                }
                _ => {}
            }
        }
    }
    Ok(WarpAgreement {
        ground_mae: if g_n > 0 { g_sum / g_n as f64 } else { 0.0 },
        ground_pixels: g_n,
        billboard_mae: if b_n > 0 { b_sum / b_n as f64 } else { 0.0 },
        billboard_pixels: b_n,
        worst_billboard_region_mae: regions
            .values()
            .filter(|(_, n)| *n >= MIN_REGION_PIXELS)
            .map(|(s, n)| s / *n as f64)
            .fold(0.0, f64::max),
    })
}
