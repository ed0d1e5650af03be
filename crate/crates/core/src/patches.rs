//! Ground-anchored ROI crops and multi-resolution trapezoid patches.
//!
//! A patch is produced by averaging rectangular source areas of the
//! standardized camera image, one area per output pixel. Row `i` of a patch
//! (0 = top, at the horizon) reads source rows `[y_top + off(i), y_top +
//! off(i) + dH(i))` and its columns are `patch_w` areas of width `dW(i)`
//! centered on the ROI axis. The regular crop uses constant `dW`, `dH`; the
//! multi-resolution patch lets both grow linearly toward the bottom.

use thiserror::Error;

use crate::geometry::{horizon_row, CameraIntrinsics, CameraPose};
use crate::image::{ImageBuffer, ImageError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PatchError {
    #[error("invalid ROI spec: {0}")]
    InvalidRoi(String),
    #[error("invalid multi-resolution spec: {0}")]
    InvalidMultiRes(String),
    #[error("ROI needs the standard level camera (yaw = pitch = roll = 0, height > 0)")]
    NonStandardCamera,
    #[error("ROI [{x0:.2}, {x1:.2}) x [{y0:.2}, {y1:.2}) overflows the {width}x{height} source")]
    Overflow {
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        width: usize,
        height: usize,
    },
    #[error("patch kind {0} is unknown")]
    UnknownKind(u8),
}

/// Regular ROI: a horizontal field of view, the ground width covered by the
/// bottom edge, and the output size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiSpec {
    pub hfov_deg: f64,
    pub bottom_width_m: f64,
    pub out_w: usize,
    pub out_h: usize,
}

impl Default for RoiSpec {
    fn default() -> Self {
        Self {
            hfov_deg: 53.0,
            bottom_width_m: 7.6,
            out_w: 209,
            out_h: 65,
        }
    }
}

impl RoiSpec {
    pub fn validate(&self) -> Result<(), PatchError> {
        if !(self.hfov_deg > 0.0 && self.hfov_deg < 180.0) {
            return Err(PatchError::InvalidRoi(format!("hfov {} not in (0, 180)", self.hfov_deg)));
        }
        if !(self.bottom_width_m > 0.0 && self.bottom_width_m.is_finite()) {
            return Err(PatchError::InvalidRoi("bottom width must be positive".into()));
        }
        if self.out_w == 0 || self.out_h == 0 {
            return Err(PatchError::InvalidRoi("output size must be at least 1x1".into()));
        }
        Ok(())
    }

    /// Source-pixel footprint of this ROI for a level camera.
    pub fn geometry(&self, cam: &CameraPose, intr: &CameraIntrinsics) -> Result<RoiGeometry, PatchError> {
        self.validate()?;
        if cam.yaw != 0.0 || cam.pitch != 0.0 || cam.roll != 0.0 || !(cam.position[2] > 0.0) {
            return Err(PatchError::NonStandardCamera);
        }
        let half = (self.hfov_deg.to_radians() / 2.0).tan();
        let bottom_depth = self.bottom_width_m / 2.0 / half;
        let top = horizon_row(cam, intr);
        let bottom = intr.cy + intr.fy * cam.position[2] / bottom_depth;
        Ok(RoiGeometry {
            x_center: intr.cx,
            y_top: top,
            width: 2.0 * intr.fx * half,
            height: bottom - top,
        })
    }

    /// Horizontal resolution of the output, pixels per degree.
    pub fn pixels_per_degree_h(&self) -> f64 {
        self.out_w as f64 / self.hfov_deg
    }

    /// Vertical resolution of the output for a camera at `height_m`:
    /// the ROI spans from the horizon down to the bottom-edge depression angle.
    pub fn pixels_per_degree_v(&self, height_m: f64) -> f64 {
        let half = (self.hfov_deg.to_radians() / 2.0).tan();
        let bottom_depth = self.bottom_width_m / 2.0 / half;
        self.out_h as f64 / (height_m / bottom_depth).atan().to_degrees()
    }
}

/// ROI footprint in continuous source-image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiGeometry {
    pub x_center: f64,
    pub y_top: f64,
    pub width: f64,
    pub height: f64,
}

/// Crops the regular ROI and area-averages it to `out_w x out_h`.
pub fn crop_roi(
    img: &ImageBuffer,
    roi: &RoiSpec,
    cam: &CameraPose,
    intr: &CameraIntrinsics,
) -> Result<ImageBuffer, PatchError> {
    let g = roi.geometry(cam, intr)?;
    let dw = g.width / roi.out_w as f64;
    let dh = g.height / roi.out_h as f64;
    resample(img, g.x_center, g.y_top, roi.out_w, roi.out_h, |i| {
        (i as f64 * dh, dh, dw)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiResSpec {
    pub roi_bw: f64,
    pub roi_h: f64,
    pub patch_w: usize,
    pub patch_h: usize,
    pub ratio_w: f64,
    pub ratio_h: f64,
}

impl MultiResSpec {
    pub fn validate(&self) -> Result<(), PatchError> {
        let bad = |m: String| Err(PatchError::InvalidMultiRes(m));
        if self.patch_w == 0 || self.patch_h == 0 {
            return bad("patch size must be at least 1x1".into());
        }
        if !(self.ratio_w >= 1.0 && self.ratio_h >= 1.0 && self.ratio_w.is_finite() && self.ratio_h.is_finite()) {
            return bad(format!("ratios must be >= 1 (got {}, {})", self.ratio_w, self.ratio_h));
        }
        if !(self.roi_bw.is_finite() && self.roi_bw >= self.patch_w as f64) {
            return bad(format!("roi_bw {} < patch_w {}", self.roi_bw, self.patch_w));
        }
        if !(self.roi_h.is_finite() && self.roi_h >= self.patch_h as f64) {
            return bad(format!("roi_h {} < patch_h {}", self.roi_h, self.patch_h));
        }
        if self.patch_h == 1 && (self.ratio_h != 1.0 || self.ratio_w != 1.0) {
            return bad("a single-row patch cannot have resolution ratios other than 1".into());
        }
        Ok(())
    }

    /// Top width of the trapezoid in source pixels (`patch_w * dW(0)`).
    pub fn roi_top_width(&self) -> Result<f64, PatchError> {
        let c = solve_multires_coeffs(self)?;
        Ok(self.patch_w as f64 * c.dw(0))
    }
}

/// Linear source-area sizes: `dW(i) = a_w i + b_w`, `dH(i) = a_h i + b_h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceAreaCoeffs {
    pub a_w: f64,
    pub b_w: f64,
    pub a_h: f64,
    pub b_h: f64,
}

impl SourceAreaCoeffs {
    pub fn dw(&self, row: usize) -> f64 {
        self.a_w * row as f64 + self.b_w
    }

    pub fn dh(&self, row: usize) -> f64 {
        self.a_h * row as f64 + self.b_h
    }

    /// Offset of row `i`'s top edge below the ROI top: `sum_{k<i} dH(k)`,
    /// in closed form.
    pub fn row_offset(&self, row: usize) -> f64 {
        let i = row as f64;
        self.a_h * (i * (i - 1.0) / 2.0) + self.b_h * i
    }

    /// Residuals of the six defining constraints, in order: linearity of
    /// dW and dH (max second difference), bottom width, width ratio,
    /// height ratio, and height sum.
    pub fn residuals(&self, spec: &MultiResSpec) -> [f64; 6] {
        let last = spec.patch_h - 1;
        let second_diff = |f: &dyn Fn(usize) -> f64| {
            (1..last)
                .map(|i| (f(i + 1) - 2.0 * f(i) + f(i - 1)).abs())
                .fold(0.0, f64::max)
        };
        let sum_h: f64 = (0..spec.patch_h).map(|i| self.dh(i)).sum();
        [
            second_diff(&|i| self.dw(i)),
            second_diff(&|i| self.dh(i)),
            self.dw(last) - spec.roi_bw / spec.patch_w as f64,
            spec.ratio_w - self.dw(last) / self.dw(0),
            spec.ratio_h - self.dh(last) / self.dh(0),
            sum_h - spec.roi_h,
        ]
    }
}

/// Closed-form source-area coefficients for a multi-resolution patch.
pub fn solve_multires_coeffs(spec: &MultiResSpec) -> Result<SourceAreaCoeffs, PatchError> {
    spec.validate()?;
    let n = spec.patch_h as f64;
    let dw_last = spec.roi_bw / spec.patch_w as f64;
    let dw_first = dw_last / spec.ratio_w;
    let dh_first = 2.0 * spec.roi_h / (n * (1.0 + spec.ratio_h));
    let dh_last = spec.ratio_h * dh_first;
    let (a_w, a_h) = if spec.patch_h > 1 {
        ((dw_last - dw_first) / (n - 1.0), (dh_last - dh_first) / (n - 1.0))
    } else {
        (0.0, 0.0)
    };
    let c = SourceAreaCoeffs {
        a_w,
        b_w: dw_first,
        a_h,
        b_h: dh_first,
    };
    let last = spec.patch_h - 1;
    if !(c.dw(0) > 0.0 && c.dw(last) > 0.0 && c.dh(0) > 0.0 && c.dh(last) > 0.0) {
        return Err(PatchError::InvalidMultiRes("non-positive source area".into()));
    }
    Ok(c)
}

/// Builds the multi-resolution patch. `roi_origin` is the top-center of the
/// trapezoid in continuous source coordinates: `(x_center, y_top)`.
pub fn build_multires_patch(
    img: &ImageBuffer,
    spec: &MultiResSpec,
    roi_origin: [f64; 2],
) -> Result<ImageBuffer, PatchError> {
    let c = solve_multires_coeffs(spec)?;
    resample(img, roi_origin[0], roi_origin[1], spec.patch_w, spec.patch_h, |i| {
        (c.row_offset(i), c.dh(i), c.dw(i))
    })
}

/// Shared averaging kernel. `rows(i)` gives (offset below top, height,
/// area width) for output row `i`.
fn resample(
    img: &ImageBuffer,
    x_center: f64,
    y_top: f64,
    out_w: usize,
    out_h: usize,
    rows: impl Fn(usize) -> (f64, f64, f64),
) -> Result<ImageBuffer, PatchError> {
    let ch = img.channels();
    let overflow = |x0: f64, x1: f64, y0: f64, y1: f64| PatchError::Overflow {
        x0,
        x1,
        y0,
        y1,
        width: img.width(),
        height: img.height(),
    };
    let mut out = vec![0.0f32; out_w * out_h * ch];
    let mut acc = vec![0.0f64; ch];
    for i in 0..out_h {
        let (off, dh, dw) = rows(i);
        let y0 = y_top + off;
        let y1 = y0 + dh;
        let left = x_center - out_w as f64 * dw / 2.0;
        for j in 0..out_w {
            let x0 = left + j as f64 * dw;
            let x1 = x0 + dw;
            img.area_mean(x0, x1, y0, y1, &mut acc).map_err(|e| match e {
                ImageError::AreaOutside { .. } => overflow(
                    left,
                    left + out_w as f64 * dw,
                    y0,
                    y1,
                ),
                _ => overflow(x0, x1, y0, y1),
            })?;
            let base = (i * out_w + j) * ch;
            for (k, a) in acc.iter().enumerate() {
                out[base + k] = a.clamp(0.0, 1.0) as f32;
            }
        }
    }
    Ok(ImageBuffer::from_parts(out_w, out_h, ch, out))
}

/// Which patch the policy consumes, fully parameterized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PatchSpec {
    Regular(RoiSpec),
    /// Multi-resolution trapezoid anchored at the regular ROI's top-center.
    MultiRes { roi: RoiSpec, multires: MultiResSpec },
}

impl PatchSpec {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            PatchSpec::Regular(r) => (r.out_w, r.out_h),
            PatchSpec::MultiRes { multires, .. } => (multires.patch_w, multires.patch_h),
        }
    }

    pub fn pixel_count(&self) -> usize {
        let (w, h) = self.dims();
        w * h
    }

    /// Multi-resolution spec whose ROI matches the regular ROI footprint of
    /// the given camera.
    pub fn multires_for_camera(
        roi: RoiSpec,
        cam: &CameraPose,
        intr: &CameraIntrinsics,
        patch_w: usize,
        patch_h: usize,
        ratio_w: f64,
        ratio_h: f64,
    ) -> Result<Self, PatchError> {
        let g = roi.geometry(cam, intr)?;
        let multires = MultiResSpec {
            roi_bw: g.width,
            roi_h: g.height,
            patch_w,
            patch_h,
            ratio_w,
            ratio_h,
        };
        multires.validate()?;
        Ok(PatchSpec::MultiRes { roi, multires })
    }

    pub fn extract(
        &self,
        img: &ImageBuffer,
        cam: &CameraPose,
        intr: &CameraIntrinsics,
    ) -> Result<ImageBuffer, PatchError> {
        match self {
            PatchSpec::Regular(roi) => crop_roi(img, roi, cam, intr),
            PatchSpec::MultiRes { roi, multires } => {
                let g = roi.geometry(cam, intr)?;
                build_multires_patch(img, multires, [g.x_center, g.y_top])
            }
        }
    }

    /// Fixed-size little-endian encoding: kind byte, ROI block, multi-res block.
    pub fn encode(&self, out: &mut Vec<u8>) {
        let (kind, roi, mr) = match self {
            PatchSpec::Regular(r) => (0u8, r, None),
            PatchSpec::MultiRes { roi, multires } => (1u8, roi, Some(multires)),
        };
        out.push(kind);
        out.extend_from_slice(&roi.hfov_deg.to_le_bytes());
        out.extend_from_slice(&roi.bottom_width_m.to_le_bytes());
        out.extend_from_slice(&(roi.out_w as u32).to_le_bytes());
        out.extend_from_slice(&(roi.out_h as u32).to_le_bytes());
        let m = mr.copied().unwrap_or(MultiResSpec {
            roi_bw: 0.0,
            roi_h: 0.0,
            patch_w: 0,
            patch_h: 0,
            ratio_w: 0.0,
            ratio_h: 0.0,
        });
        out.extend_from_slice(&m.roi_bw.to_le_bytes());
        out.extend_from_slice(&m.roi_h.to_le_bytes());
        out.extend_from_slice(&(m.patch_w as u32).to_le_bytes());
        out.extend_from_slice(&(m.patch_h as u32).to_le_bytes());
        out.extend_from_slice(&m.ratio_w.to_le_bytes());
        out.extend_from_slice(&m.ratio_h.to_le_bytes());
    }

    pub const ENCODED_LEN: usize = 1 + 8 + 8 + 4 + 4 + 8 + 8 + 4 + 4 + 8 + 8;

    pub fn decode(bytes: &[u8]) -> Result<Self, PatchError> {
        if bytes.len() < Self::ENCODED_LEN {
            return Err(PatchError::InvalidRoi("truncated patch descriptor".into()));
        }
        let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let u = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let roi = RoiSpec {
            hfov_deg: f(1),
            bottom_width_m: f(9),
            out_w: u(17),
            out_h: u(21),
        };
        roi.validate()?;
        match bytes[0] {
            0 => Ok(PatchSpec::Regular(roi)),
            1 => {
                let multires = MultiResSpec {
                    roi_bw: f(25),
                    roi_h: f(33),
                    patch_w: u(41),
                    patch_h: u(45),
                    ratio_w: f(49),
                    ratio_h: f(57),
                };
                multires.validate()?;
                Ok(PatchSpec::MultiRes { roi, multires })
            }
            k => Err(PatchError::UnknownKind(k)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> (CameraPose, CameraIntrinsics) {
        (
            CameraPose::standard(),
            CameraIntrinsics::new(200.0, 200.0, 160.0, 12.0, 320, 64).unwrap(),
        )
    }

    #[test]
    fn regular_roi_resolution_matches_reported_figures() {
        let roi = RoiSpec::default();
        // 209 px over 53 degrees and 65 px from horizon to the 7.6 m edge.
        assert!((roi.pixels_per_degree_h() - 3.94).abs() < 0.01);
        assert!((roi.pixels_per_degree_v(1.47) - 5.9).abs() < 0.1);
    }

    #[test]
    fn roi_geometry_for_standard_camera() {
        let (c, k) = cam();
        let g = RoiSpec::default().geometry(&c, &k).unwrap();
        assert_eq!(g.y_top, 12.0);
        let half = (26.5f64).to_radians().tan();
        assert!((g.width - 400.0 * half).abs() < 1e-12);
        assert!((g.height - 200.0 * 1.47 * half / 3.8).abs() < 1e-12);
    }

    #[test]
    fn crop_rejects_tilted_camera() {
        let (mut c, k) = cam();
        c.pitch = 0.01;
        let img = ImageBuffer::filled(320, 64, 1, 0.3).unwrap();
        assert_eq!(
            crop_roi(&img, &RoiSpec::default(), &c, &k),
            Err(PatchError::NonStandardCamera)
        );
    }

    #[test]
    fn uniform_gray_crop_is_uniform() {
        let (c, k) = cam();
        let v = 0.372_549_02f32;
        let img = ImageBuffer::filled(320, 64, 1, v).unwrap();
        let out = crop_roi(&img, &RoiSpec::default(), &c, &k).unwrap();
        assert_eq!((out.width(), out.height()), (209, 65));
        assert!(out.pixels().iter().all(|&p| p == v));
    }

    #[test]
    fn crop_overflow_is_reported() {
        let (c, _) = cam();
        let narrow = CameraIntrinsics::new(200.0, 200.0, 75.0, 12.0, 150, 64).unwrap();
        let img = ImageBuffer::filled(150, 64, 1, 0.3).unwrap();
        assert!(matches!(
            crop_roi(&img, &RoiSpec::default(), &c, &narrow),
            Err(PatchError::Overflow { .. })
        ));
    }

    #[test]
    fn multires_reduces_to_uniform_at_unit_ratios() {
        let spec = MultiResSpec {
            roi_bw: 199.0,
            roi_h: 38.5,
            patch_w: 50,
            patch_h: 16,
            ratio_w: 1.0,
            ratio_h: 1.0,
        };
        let c = solve_multires_coeffs(&spec).unwrap();
        assert_eq!(c.a_w, 0.0);
        assert_eq!(c.a_h, 0.0);
    }

    #[test]
    fn multires_rejects_invalid_specs() {
        let base = MultiResSpec {
            roi_bw: 100.0,
            roi_h: 50.0,
            patch_w: 20,
            patch_h: 10,
            ratio_w: 2.0,
            ratio_h: 4.0,
        };
        assert!(solve_multires_coeffs(&MultiResSpec { ratio_w: 0.5, ..base }).is_err());
        assert!(solve_multires_coeffs(&MultiResSpec { roi_bw: 10.0, ..base }).is_err());
        assert!(solve_multires_coeffs(&MultiResSpec { roi_h: 5.0, ..base }).is_err());
        assert!(solve_multires_coeffs(&MultiResSpec { patch_h: 1, ..base }).is_err());
        assert!(solve_multires_coeffs(&base).is_ok());
    }

    #[test]
    fn multires_rows_grow_toward_the_bottom() {
        let spec = MultiResSpec {
            roi_bw: 1045.0,
            roi_h: 325.0,
            patch_w: 209,
            patch_h: 113,
            ratio_w: 2.0,
            ratio_h: 8.0,
        };
        let c = solve_multires_coeffs(&spec).unwrap();
        for i in 1..spec.patch_h {
            assert!(c.dw(i) > c.dw(i - 1));
            assert!(c.dh(i) > c.dh(i - 1));
        }
        assert!((spec.roi_top_width().unwrap() - 1045.0 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn patch_spec_codec_round_trip() {
        let (c, k) = cam();
        let specs = [
            PatchSpec::Regular(RoiSpec {
                out_w: 48,
                out_h: 16,
                ..RoiSpec::default()
            }),
            PatchSpec::multires_for_camera(
                RoiSpec::default(),
                &c,
                &k,
                48,
                28,
                2.0,
                8.0,
            )
            .unwrap(),
        ];
        for s in specs {
            let mut buf = Vec::new();
            s.encode(&mut buf);
            assert_eq!(buf.len(), PatchSpec::ENCODED_LEN);
            assert_eq!(PatchSpec::decode(&buf).unwrap(), s);
        }
    }
}
