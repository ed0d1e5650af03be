//! Camera models and flat-ground projective warps.
//!
//! Frames: the vehicle frame has its origin at the rear-axle center with x
//! forward, y left and z up. World poses live on the z = 0 plane with the
//! same handedness. A camera with zero yaw/pitch/roll looks along +x of its
//! parent frame; internally camera coordinates are x right, y down, z along
//! the optical axis. Positive pitch tilts the optical axis down.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::image::ImageBuffer;
use crate::par::Exec;

/// Height of the standard virtual camera above the rear axle, meters.
pub const STANDARD_CAMERA_HEIGHT_M: f64 = 1.47;
/// Forward offset of the standard virtual camera from the rear axle, meters.
pub const STANDARD_CAMERA_FORWARD_M: f64 = 1.77;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    Intrinsics(String),
    #[error("image is {got_w}x{got_h}, camera raster is {want_w}x{want_h}")]
    SizeMismatch {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("lens distortion is not monotone at normalized radius {radius:.4}")]
    NonMonotoneLens { radius: f64 },
    #[error("camera at height {0} m is not above the ground plane")]
    DegeneratePose(f64),
    #[error("homography is singular")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(GeometryError::Intrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::Intrinsics("empty raster".into()));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(GeometryError::Intrinsics(format!(
                "principal point ({}, {}) outside {}x{} raster",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    fn check_image(&self, img: &ImageBuffer) -> Result<(), GeometryError> {
        if img.width() != self.width || img.height() != self.height {
            return Err(GeometryError::SizeMismatch {
                got_w: img.width(),
                got_h: img.height(),
                want_w: self.width,
                want_h: self.height,
            });
        }
        Ok(())
    }
}

/// Radial lens distortion `r_d = r (1 + k1 r^2 + k2 r^4 + k3 r^6)` on
/// normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LensModel {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl LensModel {
    pub fn new(k1: f64, k2: f64, k3: f64) -> Self {
        Self { k1, k2, k3 }
    }

    /// Builds a lens model and checks monotonicity over the radius range of
    /// the given (undistorted) raster.
    pub fn for_raster(k1: f64, k2: f64, k3: f64, raster: &CameraIntrinsics) -> Result<Self, GeometryError> {
        let lens = Self::new(k1, k2, k3);
        lens.ensure_monotone(max_normalized_radius(raster))?;
        Ok(lens)
    }

    pub fn factor(&self, r2: f64) -> f64 {
        1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3))
    }

    pub fn distort_radius(&self, r: f64) -> f64 {
        r * self.factor(r * r)
    }

    /// Checks `d r_d / d r > 0` on a dense grid over `[0, max_radius]`.
    pub fn ensure_monotone(&self, max_radius: f64) -> Result<(), GeometryError> {
        const STEPS: usize = 2000;
        for i in 0..=STEPS {
            let r = max_radius * i as f64 / STEPS as f64;
            let r2 = r * r;
            let slope = 1.0 + r2 * (3.0 * self.k1 + r2 * (5.0 * self.k2 + r2 * 7.0 * self.k3));
            if !(slope > 0.0) {
                return Err(GeometryError::NonMonotoneLens { radius: r });
            }
        }
        Ok(())
    }
}

fn max_normalized_radius(k: &CameraIntrinsics) -> f64 {
    let xs = [0.0, k.width as f64];
    let ys = [0.0, k.height as f64];
    let mut best: f64 = 0.0;
    for x in xs {
        for y in ys {
            let nx = (x - k.cx) / k.fx;
            let ny = (y - k.cy) / k.fy;
            best = best.max((nx * nx + ny * ny).sqrt());
        }
    }
    best
}

/// Re-renders a lens-distorted image as seen by an ideal pinhole camera with
/// intrinsics `dst`. Samples outside the source raster are filled with 0.
pub fn rectify_pinhole(
    img: &ImageBuffer,
    lens: &LensModel,
    src: &CameraIntrinsics,
    dst: &CameraIntrinsics,
) -> Result<ImageBuffer, GeometryError> {
    src.validate()?;
    dst.validate()?;
    src.check_image(img)?;
    lens.ensure_monotone(max_normalized_radius(dst))?;
    let c = img.channels();
    let mut out = vec![0.0f32; dst.width * dst.height * c];
    Exec::default().for_each_chunk(&mut out, dst.width * c, |row, line| {
        let v = row as f64 + 0.5;
        for col in 0..dst.width {
            let u = col as f64 + 0.5;
            let x = (u - dst.cx) / dst.fx;
            let y = (v - dst.cy) / dst.fy;
            let f = lens.factor(x * x + y * y);
            let su = src.fx * x * f + src.cx;
            let sv = src.fy * y * f + src.cy;
            img.sample_bilinear(su, sv, &mut line[col * c..(col + 1) * c]);
        }
    });
    Ok(ImageBuffer::from_parts(dst.width, dst.height, c, out))
}

/// Planar rigid pose: position on the ground plane and heading (radians,
/// counter-clockwise from +x).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 {
        x: 0.0,
        y: 0.0,
        heading: 0.0,
    };

    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading }
    }

    /// Maps a point from this pose's local frame into the parent frame.
    pub fn transform_point(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.heading.sin_cos();
        [self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1]]
    }

    /// Maps a parent-frame point into this pose's local frame.
    pub fn inverse_transform_point(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.heading.sin_cos();
        let dx = p[0] - self.x;
        let dy = p[1] - self.y;
        [c * dx + s * dy, -s * dx + c * dy]
    }

    /// `self * local`: a pose given in this pose's frame, expressed in the parent frame.
    pub fn compose(&self, local: &Pose2) -> Pose2 {
        let [x, y] = self.transform_point([local.x, local.y]);
        Pose2::new(x, y, self.heading + local.heading)
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.heading.sin_cos();
        Pose2::new(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.heading)
    }

    /// This pose expressed in the frame of `reference`.
    pub fn relative_to(&self, reference: &Pose2) -> Pose2 {
        let [x, y] = reference.inverse_transform_point([self.x, self.y]);
        Pose2::new(x, y, wrap_angle(self.heading - reference.heading))
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut w = a.rem_euclid(tau);
    if w > std::f64::consts::PI {
        w -= tau;
    }
    w
}

/// Camera placement in a parent frame (vehicle or world).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub position: [f64; 3],
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl CameraPose {
    pub fn new(position: [f64; 3], yaw: f64, pitch: f64, roll: f64) -> Self {
        Self {
            position,
            yaw,
            pitch,
            roll,
        }
    }

    /// The standard virtual camera: level, on the vehicle centerline,
    /// 1.77 m ahead of and 1.47 m above the rear axle.
    pub fn standard() -> Self {
        Self::new(
            [STANDARD_CAMERA_FORWARD_M, 0.0, STANDARD_CAMERA_HEIGHT_M],
            0.0,
            0.0,
            0.0,
        )
    }

    /// Rotation taking camera coordinates (x right, y down, z forward) to
    /// parent-frame coordinates.
    pub fn rotation(&self) -> Matrix3<f64> {
        let (sy, cy) = self.yaw.sin_cos();
        let (sp, cp) = self.pitch.sin_cos();
        let (sr, cr) = self.roll.sin_cos();
        let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
        let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
        let axes = Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
        rz * ry * rx * axes
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(self.position[0], self.position[1], self.position[2])
    }

    /// Re-expresses a camera mounted on a vehicle (`self` in vehicle frame)
    /// in the frame the vehicle pose is given in.
    pub fn mounted_on(&self, vehicle: &Pose2) -> CameraPose {
        let [x, y] = vehicle.transform_point([self.position[0], self.position[1]]);
        CameraPose::new([x, y, self.position[2]], self.yaw + vehicle.heading, self.pitch, self.roll)
    }

    /// Projects a parent-frame point to continuous pixel coordinates.
    /// Returns `None` for points at or behind the camera plane.
    pub fn project(&self, intr: &CameraIntrinsics, p: [f64; 3]) -> Option<[f64; 2]> {
        let d = Vector3::new(p[0], p[1], p[2]) - self.center();
        let c = self.rotation().transpose() * d;
        if c.z <= 1e-12 {
            return None;
        }
        Some([intr.fx * c.x / c.z + intr.cx, intr.fy * c.y / c.z + intr.cy])
    }

    /// Parent-frame ray direction through continuous pixel `(u, v)`.
    pub fn ray(&self, intr: &CameraIntrinsics, u: f64, v: f64) -> Vector3<f64> {
        self.rotation() * Vector3::new((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0)
    }

    fn ensure_above_ground(&self) -> Result<(), GeometryError> {
        if !(self.position[2] > 1e-9) {
            return Err(GeometryError::DegeneratePose(self.position[2]));
        }
        Ok(())
    }
}

/// Image row of the horizon for a camera with zero roll.
pub fn horizon_row(pose: &CameraPose, intr: &CameraIntrinsics) -> f64 {
    intr.cy - intr.fy * pose.pitch.tan()
}

/// A 3x3 projective map on homogeneous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let h = Self { m };
        let n = h.normalized();
        if !(n.determinant().abs() > 1e-12) {
            return Err(GeometryError::Singular);
        }
        Ok(h)
    }

    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    /// Row-major entries.
    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    /// Unit Frobenius norm with the largest-magnitude entry positive.
    pub fn normalized(&self) -> Matrix3<f64> {
        let n = self.m.norm();
        let mut out = self.m / n;
        let idx = out.iamax_full();
        if out[idx] < 0.0 {
            out = -out;
        }
        out
    }

    /// Applies the map; `None` when the point maps to infinity or behind
    /// (w <= 0).
    pub fn apply(&self, u: f64, v: f64) -> Option<[f64; 2]> {
        let p = self.m * Vector3::new(u, v, 1.0);
        if !(p.z > 1e-12) {
            return None;
        }
        Some([p.x / p.z, p.y / p.z])
    }

    /// `next * self`: apply `self` first, then `next`.
    pub fn then(&self, next: &Homography) -> Homography {
        Homography { m: next.m * self.m }
    }

    pub fn inverse(&self) -> Result<Homography, GeometryError> {
        self.m
            .try_inverse()
            .map(|m| Homography { m })
            .ok_or(GeometryError::Singular)
    }
}

/// Maps ground-plane coordinates `(x, y, 1)` to homogeneous pixels.
fn ground_to_pixel(pose: &CameraPose, intr: &CameraIntrinsics) -> Matrix3<f64> {
    let c = pose.center();
    let plane = Matrix3::new(1.0, 0.0, -c.x, 0.0, 1.0, -c.y, 0.0, 0.0, -c.z);
    intr.matrix() * pose.rotation().transpose() * plane
}

/// Homography taking `src`-camera pixels of any ground-plane point (z = 0 in
/// the common parent frame) to the `dst`-camera pixels of the same point.
pub fn ground_plane_homography(
    src: &CameraPose,
    dst: &CameraPose,
    intr: &CameraIntrinsics,
) -> Result<Homography, GeometryError> {
    src.ensure_above_ground()?;
    dst.ensure_above_ground()?;
    let g_src = ground_to_pixel(src, intr);
    let g_dst = ground_to_pixel(dst, intr);
    let inv = g_src.try_inverse().ok_or(GeometryError::Singular)?;
    Homography::from_matrix(g_dst * inv)
}

/// Homography for points at infinity: depends only on the two orientations.
pub fn rotation_homography(src: &CameraPose, dst: &CameraPose, intr: &CameraIntrinsics) -> Homography {
    Homography {
        m: intr.matrix() * dst.rotation().transpose() * src.rotation() * intr.inverse_matrix(),
    }
}

/// Which flat-world model a destination pixel was mapped with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarpBranch {
    Ground,
    Horizon,
}

/// Per-pixel source lookup for a viewpoint change under the flat-world model.
#[derive(Debug, Clone)]
pub struct ViewpointMap {
    ground: Homography,
    rotation: Homography,
    /// Vertical component of the destination ray as an affine function of
    /// `(u, v)`; negative means the ray hits the ground.
    ray_z: [f64; 3],
}

impl ViewpointMap {
    pub fn new(src: &CameraPose, dst: &CameraPose, intr: &CameraIntrinsics) -> Result<Self, GeometryError> {
        let ground = ground_plane_homography(dst, src, intr)?;
        let rotation = rotation_homography(dst, src, intr);
        let m = dst.rotation() * intr.inverse_matrix();
        Ok(Self {
            ground,
            rotation,
            ray_z: [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        })
    }

    pub fn branch(&self, u: f64, v: f64) -> WarpBranch {
        if self.ray_z[0] * u + self.ray_z[1] * v + self.ray_z[2] < 0.0 {
            WarpBranch::Ground
        } else {
            WarpBranch::Horizon
        }
    }

    /// Source-image coordinates for destination coordinates `(u, v)`.
    pub fn source_of(&self, u: f64, v: f64) -> (Option<[f64; 2]>, WarpBranch) {
        let b = self.branch(u, v);
        let h = match b {
            WarpBranch::Ground => &self.ground,
            WarpBranch::Horizon => &self.rotation,
        };
        (h.apply(u, v), b)
    }
}

/// Warped image with its validity mask.
#[derive(Debug, Clone)]
pub struct WarpedImage {
    pub image: ImageBuffer,
    pub valid: Vec<bool>,
    pub valid_fraction: f64,
}

/// Re-renders `img` (taken from `src`) as seen from `dst`, treating
/// everything below the horizon as ground and everything at or above it as
/// infinitely far. Unobservable pixels are 0 and marked invalid.
pub fn warp_viewpoint(
    img: &ImageBuffer,
    src: &CameraPose,
    dst: &CameraPose,
    intr: &CameraIntrinsics,
) -> Result<WarpedImage, GeometryError> {
    warp_viewpoint_with(Exec::default(), img, src, dst, intr)
}

pub fn warp_viewpoint_with(
    exec: Exec,
    img: &ImageBuffer,
    src: &CameraPose,
    dst: &CameraPose,
    intr: &CameraIntrinsics,
) -> Result<WarpedImage, GeometryError> {
    intr.validate()?;
    intr.check_image(img)?;
    src.ensure_above_ground()?;
    dst.ensure_above_ground()?;
    let n = intr.width * intr.height;
    if src == dst {
        return Ok(WarpedImage {
            image: img.clone(),
            valid: vec![true; n],
            valid_fraction: 1.0,
        });
    }
    let map = ViewpointMap::new(src, dst, intr)?;
    let c = img.channels();
    let w = intr.width;
    let rows: Vec<(Vec<f32>, Vec<bool>)> = exec.map(intr.height, |row| {
        let mut px = vec![0.0f32; w * c];
        let mut ok = vec![false; w];
        let v = row as f64 + 0.5;
        for col in 0..w {
            let u = col as f64 + 0.5;
            if let (Some([su, sv]), _) = map.source_of(u, v) {
                ok[col] = img.sample_bilinear(su, sv, &mut px[col * c..(col + 1) * c]);
            }
        }
        (px, ok)
    });
    let mut pixels = Vec::with_capacity(n * c);
    let mut valid = Vec::with_capacity(n);
    for (px, ok) in rows {
        pixels.extend(px);
        valid.extend(ok);
    }
    let valid_fraction = valid.iter().filter(|&&b| b).count() as f64 / n as f64;
    Ok(WarpedImage {
        image: ImageBuffer::from_parts(intr.width, intr.height, c, pixels),
        valid,
        valid_fraction,
    })
}
