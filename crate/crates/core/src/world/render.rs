//! Ray-cast renderer: flat textured ground, vertical billboards, flat sky.

use crate::geometry::{CameraIntrinsics, CameraPose};
use crate::image::ImageBuffer;
use crate::par::Exec;
use crate::world::{RoadGeometry, SegmentSpec, WorldScene};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    /// Horizontal subsamples per pixel.
    pub ss_x: usize,
    /// Upper bound on vertical subsamples; rows near the horizon get more.
    pub max_ss_y: usize,
    /// Ground footprint (m) one vertical subsample may span.
    pub footprint_m: f64,
    /// Segments and props beyond this distance are culled.
    pub max_distance_m: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            ss_x: 2,
            max_ss_y: 8,
            footprint_m: 0.3,
            max_distance_m: 160.0,
        }
    }
}

/// What a pixel shows, for masking comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Surface {
    Sky = 0,
    Ground = 1,
    Billboard = 2,
    /// Subsamples hit both ground and sky.
    Mixed = 3,
}

#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub image: ImageBuffer,
    pub surface: Vec<Surface>,
    /// Index of the billboard covering most of each pixel, `u32::MAX` if none.
    pub billboard: Vec<u32>,
}

pub fn render_frame(scene: &WorldScene, cam: &CameraPose, intr: &CameraIntrinsics) -> ImageBuffer {
    render_frame_with(Exec::default(), scene, cam, intr, &RenderSettings::default()).image
}

/// Albedo of the ground at world point `p`, given candidate segments.
pub fn ground_albedo(scene: &WorldScene, p: [f64; 2], candidates: &[usize]) -> f64 {
    let s = &scene.surface;
    let road: &RoadGeometry = &scene.road;
    let noise = scene.noise.sample(p[0], p[1]) * s.noise_amplitude;
    let Some(c) = road.locate_among(p, candidates) else {
        return s.grass + noise;
    };
    let g = &road.segments[c.segment];
    let half = road.lane_half();
    let spec = &road.spec;
    let w = spec.marking.line_width_m / 2.0;
    let d = c.offset;
    let spread = g.ramp_spread(c.local);
    let fork = matches!(g.spec, SegmentSpec::Fork { .. });
    let paved = d <= half + spec.shoulder_m && d >= -(half + spec.shoulder_m + spread);
    let base = if paved { s.asphalt } else { s.grass };
    let period = spec.marking.dash_length_m + spec.marking.dash_gap_m;
    let dashed_on = c.station.rem_euclid(period) < spec.marking.dash_length_m;
    let left_line = (d - half).abs() <= w && dashed_on;
    let ramp_line = (d + half + spread).abs() <= w;
    let gore_line = (d + half).abs() <= w && (!fork || c.local >= g.length / 2.0);
    if left_line || ramp_line || gore_line {
        s.marking + noise * 0.3
    } else {
        base + noise
    }
}

struct BillboardColumns {
    /// For each column, indices into the billboard list.
    per_column: Vec<Vec<usize>>,
}

fn billboard_columns(
    scene: &WorldScene,
    cam: &CameraPose,
    intr: &CameraIntrinsics,
    max_distance: f64,
) -> BillboardColumns {
    let mut per_column = vec![Vec::new(); intr.width];
    let c = cam.center();
    let rot_t = cam.rotation().transpose();
    for (i, b) in scene.billboards.iter().enumerate() {
        if (b.base[0] - c.x).hypot(b.base[1] - c.y) > max_distance + b.half_width {
            continue;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut behind = 0;
        for q in b.corners() {
            let v = rot_t * (nalgebra::Vector3::new(q[0], q[1], q[2]) - c);
            if v.z <= 1e-6 {
                behind += 1;
                continue;
            }
            let u = intr.fx * v.x / v.z + intr.cx;
            lo = lo.min(u);
            hi = hi.max(u);
        }
        if behind == 4 {
            continue;
        }
        if behind > 0 {
            // Straddles the camera plane: project its visible side to the edge.
            lo = lo.min(0.0);
            hi = hi.max(intr.width as f64);
            let v0 = rot_t * (nalgebra::Vector3::new(b.base[0], b.base[1], 0.0) - c);
            if v0.x > 0.0 {
                lo = lo.max(0.0);
            }
        }
        let c0 = lo.floor().max(0.0) as usize;
        let c1 = (hi.ceil().min(intr.width as f64)) as usize;
        for col in per_column.iter_mut().take(c1).skip(c0) {
            col.push(i);
        }
    }
    BillboardColumns { per_column }
}

/// Renders `scene` through a camera whose pose is given in the world frame.
pub fn render_frame_with(
    exec: Exec,
    scene: &WorldScene,
    cam: &CameraPose,
    intr: &CameraIntrinsics,
    settings: &RenderSettings,
) -> RenderedFrame {
    let origin = cam.center();
    let o = [origin.x, origin.y, origin.z];
    let candidates = scene.road.segments_near([o[0], o[1]], settings.max_distance_m);
    let columns = billboard_columns(scene, cam, intr, settings.max_distance_m);
    let m = cam.rotation() * intr.inverse_matrix();
    let sky = scene.surface.sky;
    let w = intr.width;
    let ss_x = settings.ss_x.max(1);
    let rows: Vec<(Vec<f32>, Vec<Surface>, Vec<u32>)> = exec.map(intr.height, |row| {
        let mut px = vec![0.0f32; w];
        let mut surf = vec![Surface::Sky; w];
        let mut ids = vec![u32::MAX; w];
        // Vertical subsampling from the ground footprint at the row center.
        let rz = m[(2, 1)] * (row as f64 + 0.5) + m[(2, 2)] + m[(2, 0)] * (w as f64 / 2.0);
        let ss_y = if rz < 0.0 {
            let dist = o[2] / -rz;
            let footprint = dist * dist / (o[2] * intr.fy);
            ((footprint / settings.footprint_m).ceil() as usize).clamp(1, settings.max_ss_y)
        } else {
            1
        };
        for col in 0..w {
            let mut acc = 0.0;
            let (mut n_ground, mut n_sky, mut n_board) = (0, 0, 0);
            let mut last_board = u32::MAX;
            for j in 0..ss_y {
                let v = row as f64 + (j as f64 + 0.5) / ss_y as f64;
                for i in 0..ss_x {
                    let u = col as f64 + (i as f64 + 0.5) / ss_x as f64;
                    let r = [
                        m[(0, 0)] * u + m[(0, 1)] * v + m[(0, 2)],
                        m[(1, 0)] * u + m[(1, 1)] * v + m[(1, 2)],
                        m[(2, 0)] * u + m[(2, 1)] * v + m[(2, 2)],
                    ];
                    let t_ground = if r[2] < 0.0 { -o[2] / r[2] } else { f64::INFINITY };
                    let mut hit: Option<(f64, usize)> = None;
                    for &bi in &columns.per_column[col] {
                        if let Some(t) = scene.billboards[bi].intersect(o, r) {
                            if t < t_ground && hit.is_none_or(|(ht, _)| t < ht) {
                                hit = Some((t, bi));
                            }
                        }
                    }
                    if let Some((_, bi)) = hit {
                        acc += scene.billboards[bi].albedo;
                        n_board += 1;
                        last_board = bi as u32;
                    } else if t_ground.is_finite() {
                        let p = [o[0] + t_ground * r[0], o[1] + t_ground * r[1]];
                        acc += ground_albedo(scene, p, &candidates);
                        n_ground += 1;
                    } else {
                        acc += sky;
                        n_sky += 1;
                    }
                }
            }
            px[col] = (acc / (ss_x * ss_y) as f64).clamp(0.0, 1.0) as f32;
            ids[col] = last_board;
            surf[col] = if n_board > 0 {
                Surface::Billboard
            } else if n_sky == 0 {
                Surface::Ground
            } else if n_ground == 0 {
                Surface::Sky
            } else {
                Surface::Mixed
            };
        }
        (px, surf, ids)
    });
    let mut pixels = Vec::with_capacity(w * intr.height);
    let mut surface = Vec::with_capacity(w * intr.height);
    let mut billboard = Vec::with_capacity(w * intr.height);
    for (p, s, b) in rows {
        pixels.extend(p);
        surface.extend(s);
        billboard.extend(b);
    }
    RenderedFrame {
        image: ImageBuffer::from_parts(w, intr.height, 1, pixels),
        surface,
        billboard,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2;
    use crate::world::{build_road, PropSpec, RoadSpec, WorldSpec};

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(200.0, 200.0, 160.0, 12.0, 320, 64).unwrap()
    }

    fn straight_scene(props: PropSpec) -> WorldScene {
        let mut spec = WorldSpec::new(RoadSpec::new(vec![SegmentSpec::Straight { length_m: 400.0 }]));
        spec.props = props;
        build_road(&spec, 3).unwrap()
    }

    #[test]
    fn render_is_deterministic_and_in_range() {
        let scene = straight_scene(PropSpec::default());
        let cam = CameraPose::standard().mounted_on(&Pose2::new(50.0, 0.0, 0.0));
        let a = render_frame(&scene, &cam, &intr());
        let b = render_frame_with(Exec::Sequential, &scene, &cam, &intr(), &RenderSettings::default()).image;
        assert_eq!(a, b);
        assert!(a.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn sky_rows_are_constant() {
        let scene = straight_scene(PropSpec {
            pole_spacing_m: 0.0,
            barriers: false,
            ..PropSpec::default()
        });
        let cam = CameraPose::standard().mounted_on(&Pose2::new(50.0, 0.0, 0.0));
        let f = render_frame_with(Exec::Sequential, &scene, &cam, &intr(), &RenderSettings::default());
        for row in 0..12 {
            for col in 0..320 {
                assert_eq!(f.image.get(col, row, 0), 0.5);
                assert_eq!(f.surface[row * 320 + col], Surface::Sky);
            }
        }
        assert_eq!(f.surface[40 * 320 + 100], Surface::Ground);
    }

    #[test]
    fn lane_edges_converge_at_the_principal_point_row() {
        // Right edge (solid) projects to a line through the vanishing point.
        let scene = straight_scene(PropSpec {
            pole_spacing_m: 0.0,
            barriers: false,
            ..PropSpec::default()
        });
        let k = intr();
        let cam = CameraPose::standard().mounted_on(&Pose2::new(50.0, 0.0, 0.0));
        let img = render_frame_with(Exec::Sequential, &scene, &cam, &k, &RenderSettings::default()).image;
        let mut pts = Vec::new();
        for row in [30usize, 45, 60] {
            // Brightest column right of center is the solid line.
            let v = row as f64 + 0.5;
            let mut best = (0, 0.0f32);
            for col in 160..320 {
                let p = img.get(col, row, 0);
                if p > best.1 {
                    best = (col, p);
                }
            }
            pts.push((best.0 as f64 + 0.5, v));
        }
        // Fit u = a + b v through the first and last, extrapolate to u = cx.
        let (u0, v0) = pts[0];
        let (u1, v1) = pts[2];
        let v_at_cx = v0 + (160.0 - u0) * (v1 - v0) / (u1 - u0);
        assert!((v_at_cx - 12.0).abs() < 1.5, "vanishing row {v_at_cx}");
    }

    #[test]
    fn billboards_mark_their_pixels() {
        let scene = straight_scene(PropSpec::default());
        let cam = CameraPose::standard().mounted_on(&Pose2::new(50.0, 0.0, 0.0));
        let f = render_frame_with(Exec::Parallel, &scene, &cam, &intr(), &RenderSettings::default());
        assert!(f.surface.contains(&Surface::Billboard));
    }
}
