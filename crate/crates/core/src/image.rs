//! Row-major float rasters and binary PGM/PPM IO.
//!
//! Continuous image coordinates put pixel `(col, row)` over the unit square
//! `[col, col+1) x [row, row+1)`; its center is `(col + 0.5, row + 0.5)`.
//! Camera projections, bilinear sampling and area averaging all use this
//! convention.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("pixel buffer has {got} values, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    Channels(usize),
    #[error("image must be at least 1x1, got {0}x{1}")]
    Empty(usize, usize),
    #[error("pixel {index} has value {value}, outside [0, 1]")]
    OutOfRange { index: usize, value: f32 },
    #[error("area [{x0}, {x1}) x [{y0}, {y1}) is outside the {width}x{height} raster")]
    AreaOutside {
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        width: usize,
        height: usize,
    },
    #[error("malformed netpbm data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Tolerance (pixels) for samples that land a hair outside the raster.
const EDGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f32>,
}

impl ImageBuffer {
    /// Builds an image, checking size, channel count and value range.
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        pixels: Vec<f32>,
    ) -> Result<Self, ImageError> {
        check_shape(width, height, channels)?;
        let expected = width * height * channels;
        if pixels.len() != expected {
            return Err(ImageError::SizeMismatch {
                expected,
                got: pixels.len(),
            });
        }
        if let Some((index, &value)) = pixels
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0 && **v <= 1.0))
        {
            return Err(ImageError::OutOfRange { index, value });
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(
        width: usize,
        height: usize,
        channels: usize,
        value: f32,
    ) -> Result<Self, ImageError> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    /// Callers guarantee shape and range; used by internal producers whose
    /// outputs are convex combinations of valid pixels.
    pub(crate) fn from_parts(width: usize, height: usize, channels: usize, pixels: Vec<f32>) -> Self {
        debug_assert_eq!(pixels.len(), width * height * channels);
        debug_assert!(pixels.iter().all(|v| v.is_finite() && *v >= 0.0 && *v <= 1.0));
        Self {
            width,
            height,
            channels,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.pixels
    }

    pub fn get(&self, col: usize, row: usize, channel: usize) -> f32 {
        self.pixels[(row * self.width + col) * self.channels + channel]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&v| v as f64).sum::<f64>() / self.pixels.len() as f64
    }

    /// Bilinear sample at continuous coordinates `(u, v)`, writing one value
    /// per channel into `out`. Returns `false` (and writes zeros) when the
    /// sample needs pixels outside the raster.
    pub fn sample_bilinear(&self, u: f64, v: f64, out: &mut [f32]) -> bool {
        let x = snap(u - 0.5);
        let y = snap(v - 0.5);
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        if !(x >= -EDGE_TOL && x <= max_x + EDGE_TOL && y >= -EDGE_TOL && y <= max_y + EDGE_TOL) {
            out.iter_mut().for_each(|o| *o = 0.0);
            return false;
        }
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let c = self.channels;
        for (ch, o) in out.iter_mut().enumerate().take(c) {
            let p = |col: usize, row: usize| self.pixels[(row * self.width + col) * c + ch] as f64;
            let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
            let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
            let val = top * (1.0 - fy) + bottom * fy;
            *o = val.clamp(0.0, 1.0) as f32;
        }
        true
    }

    /// Exact area-weighted mean over the axis-aligned rectangle
    /// `[x0, x1) x [y0, y1)`, with fractional pixel coverage weighted by
    /// overlap. Accumulates in f64 and returns per-channel means.
    pub fn area_mean(
        &self,
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        out: &mut [f64],
    ) -> Result<(), ImageError> {
        let outside = ImageError::AreaOutside {
            x0,
            x1,
            y0,
            y1,
            width: self.width,
            height: self.height,
        };
        if !(x0 >= -EDGE_TOL
            && y0 >= -EDGE_TOL
            && x1 <= self.width as f64 + EDGE_TOL
            && y1 <= self.height as f64 + EDGE_TOL
            && x1 > x0
            && y1 > y0)
        {
            return Err(outside);
        }
        let x0 = x0.max(0.0);
        let y0 = y0.max(0.0);
        let x1 = x1.min(self.width as f64);
        let y1 = y1.min(self.height as f64);
        let c = self.channels;
        out.iter_mut().for_each(|o| *o = 0.0);
        let col_lo = x0.floor() as usize;
        let col_hi = (x1.ceil() as usize).min(self.width);
        let row_lo = y0.floor() as usize;
        let row_hi = (y1.ceil() as usize).min(self.height);
        let mut total = 0.0;
        for row in row_lo..row_hi {
            let wy = (y1.min(row as f64 + 1.0) - y0.max(row as f64)).max(0.0);
            if wy == 0.0 {
                continue;
            }
            for col in col_lo..col_hi {
                let wx = (x1.min(col as f64 + 1.0) - x0.max(col as f64)).max(0.0);
                if wx == 0.0 {
                    continue;
                }
                let w = wx * wy;
                total += w;
                let base = (row * self.width + col) * c;
                for (ch, o) in out.iter_mut().enumerate().take(c) {
                    *o += w * self.pixels[base + ch] as f64;
                }
            }
        }
        if total <= 0.0 {
            return Err(outside);
        }
        out.iter_mut().for_each(|o| *o /= total);
        Ok(())
    }

    /// Rounds every value to the nearest multiple of 1/255 (half-up), so that
    /// the image survives an 8-bit netpbm round trip unchanged.
    pub fn quantize_8bit(&mut self) {
        for v in &mut self.pixels {
            *v = quantize_level(*v) as f32 / 255.0;
        }
    }

    pub fn write_netpbm<W: Write>(&self, mut w: W) -> Result<(), ImageError> {
        let magic = match self.channels {
            1 => "P5",
            3 => "P6",
            c => return Err(ImageError::Channels(c)),
        };
        write!(w, "{magic}\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.pixels.iter().map(|&v| quantize_level(v)).collect();
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_netpbm<R: Read>(r: R) -> Result<Self, ImageError> {
        let mut r = BufReader::new(r);
        let magic = next_token(&mut r)?;
        let channels = match magic.as_str() {
            "P5" => 1,
            "P6" => 3,
            m => return Err(ImageError::Format(format!("unsupported magic {m:?}"))),
        };
        let width = parse_usize(&next_token(&mut r)?)?;
        let height = parse_usize(&next_token(&mut r)?)?;
        let maxval = parse_usize(&next_token(&mut r)?)?;
        if maxval != 255 {
            return Err(ImageError::Format(format!("maxval {maxval} (expected 255)")));
        }
        check_shape(width, height, channels)?;
        let mut bytes = vec![0u8; width * height * channels];
        r.read_exact(&mut bytes)?;
        let pixels = bytes.iter().map(|&b| b as f32 / 255.0).collect();
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ImageError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_netpbm(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ImageError> {
        Self::read_netpbm(std::fs::File::open(path)?)
    }
}

fn check_shape(width: usize, height: usize, channels: usize) -> Result<(), ImageError> {
    if channels != 1 && channels != 3 {
        return Err(ImageError::Channels(channels));
    }
    if width == 0 || height == 0 {
        return Err(ImageError::Empty(width, height));
    }
    Ok(())
}

/// Snaps coordinates within `EDGE_TOL` of a pixel center onto it, so that
/// maps equal to the identity up to rounding reproduce pixels exactly.
fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < EDGE_TOL {
        r
    } else {
        x
    }
}

fn quantize_level(v: f32) -> u8 {
    ((v as f64) * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Reads one whitespace-delimited header token, skipping `#` comments. The
/// single whitespace byte after the token is consumed, as netpbm requires.
fn next_token<R: BufRead>(r: &mut R) -> Result<String, ImageError> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(ImageError::Format("unexpected end of header".into()));
        }
        let b = byte[0];
        if b == b'#' && tok.is_empty() {
            let mut skip = Vec::new();
            r.read_until(b'\n', &mut skip)?;
            continue;
        }
        if b.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(b);
    }
    String::from_utf8(tok).map_err(|_| ImageError::Format("non-ascii header".into()))
}

fn parse_usize(s: &str) -> Result<usize, ImageError> {
    s.parse()
        .map_err(|_| ImageError::Format(format!("bad header number {s:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_values_and_shapes() {
        assert!(matches!(
            ImageBuffer::new(2, 2, 1, vec![0.0; 3]),
            Err(ImageError::SizeMismatch { .. })
        ));
        assert!(matches!(
            ImageBuffer::new(1, 1, 2, vec![0.0; 2]),
            Err(ImageError::Channels(2))
        ));
        assert!(matches!(
            ImageBuffer::new(1, 1, 1, vec![1.5]),
            Err(ImageError::OutOfRange { .. })
        ));
        assert!(ImageBuffer::new(1, 1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn bilinear_reproduces_linear_ramps() {
        let w = 6;
        let h = 4;
        let px: Vec<f32> = (0..h)
            .flat_map(|r| (0..w).map(move |c| (c as f32 + 2.0 * r as f32) / 20.0))
            .collect();
        let img = ImageBuffer::new(w, h, 1, px).unwrap();
        let mut out = [0.0f32];
        assert!(img.sample_bilinear(2.75, 1.25, &mut out));
        let expect = ((2.75 - 0.5) + 2.0 * (1.25 - 0.5)) / 20.0;
        assert!((out[0] as f64 - expect).abs() < 1e-6);
        assert!(!img.sample_bilinear(0.2, 1.0, &mut out));
        assert_eq!(out[0], 0.0);
        // Pixel centers return the stored value exactly.
        assert!(img.sample_bilinear(3.5, 2.5, &mut out));
        assert_eq!(out[0], img.get(3, 2, 0));
    }

    #[test]
    fn area_mean_weights_partial_pixels() {
        let img = ImageBuffer::new(2, 1, 1, vec![0.0, 1.0]).unwrap();
        let mut m = [0.0];
        img.area_mean(0.5, 2.0, 0.0, 1.0, &mut m).unwrap();
        assert!((m[0] - 1.0 / 1.5).abs() < 1e-15);
        assert!(img.area_mean(0.5, 2.5, 0.0, 1.0, &mut m).is_err());
    }

    #[test]
    fn netpbm_round_trip_is_exact_after_quantization() {
        let mut img = ImageBuffer::new(3, 2, 3, (0..18).map(|i| i as f32 / 17.0).collect()).unwrap();
        img.quantize_8bit();
        let mut bytes = Vec::new();
        img.write_netpbm(&mut bytes).unwrap();
        assert!(bytes.starts_with(b"P6\n3 2\n255\n"));
        let back = ImageBuffer::read_netpbm(&bytes[..]).unwrap();
        assert_eq!(back, img);
        let mut again = Vec::new();
        back.write_netpbm(&mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn netpbm_rounds_half_up() {
        // 0.5 * 255 = 127.5 exactly.
        let img = ImageBuffer::new(2, 1, 1, vec![0.5, 1.0]).unwrap();
        let mut bytes = Vec::new();
        img.write_netpbm(&mut bytes).unwrap();
        assert_eq!(&bytes[bytes.len() - 2..], &[128u8, 255u8]);
    }

    #[test]
    fn netpbm_header_comments_are_skipped() {
        let data = b"P5\n# made by hand\n2 1\n255\n\x00\xff";
        let img = ImageBuffer::read_netpbm(&data[..]).unwrap();
        assert_eq!(img.pixels(), &[0.0, 1.0]);
    }
}
