//! Arc-length parameterized 2-D polylines.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("a path needs at least two points, got {0}")]
    TooShort(usize),
    #[error("point {0} repeats its predecessor")]
    Repeated(usize),
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("path ends {available:.3} m ahead, {needed:.3} m needed")]
    InsufficientAhead { needed: f64, available: f64 },
}

/// Foot of the perpendicular from a query point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub station: f64,
    /// Signed distance, positive to the left of the direction of travel.
    pub offset: f64,
    pub segment: usize,
    pub foot: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pts: Vec<[f64; 2]>,
    stations: Vec<f64>,
}

const HINT_WINDOW: usize = 400;

impl Polyline {
    pub fn new(pts: Vec<[f64; 2]>) -> Result<Self, PathError> {
        if pts.len() < 2 {
            return Err(PathError::TooShort(pts.len()));
        }
        let mut stations = Vec::with_capacity(pts.len());
        stations.push(0.0);
        for i in 0..pts.len() {
            if !(pts[i][0].is_finite() && pts[i][1].is_finite()) {
                return Err(PathError::NonFinite(i));
            }
            if i > 0 {
                let d = dist(pts[i - 1], pts[i]);
                if d <= 1e-12 {
                    return Err(PathError::Repeated(i));
                }
                stations.push(stations[i - 1] + d);
            }
        }
        Ok(Self { pts, stations })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.pts
    }

    pub fn stations(&self) -> &[f64] {
        &self.stations
    }

    pub fn segment_count(&self) -> usize {
        self.pts.len() - 1
    }

    pub fn length(&self) -> f64 {
        *self.stations.last().unwrap()
    }

    /// Index `i` of the segment `[i, i+1]` containing station `s` (clamped).
    pub fn segment_at(&self, s: f64) -> usize {
        let n = self.pts.len();
        match self.stations.partition_point(|&x| x <= s) {
            0 => 0,
            k => (k - 1).min(n - 2),
        }
    }

    /// Piecewise-linear point at station `s`, clamped to the ends.
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        let i = self.segment_at(s);
        let (a, b) = (self.pts[i], self.pts[i + 1]);
        let t = ((s - self.stations[i]) / (self.stations[i + 1] - self.stations[i])).clamp(0.0, 1.0);
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    fn tangent(&self, i: usize) -> [f64; 2] {
        let n = self.pts.len();
        let g = |k: usize| [self.pts[k][0], self.pts[k][1]];
        let mut out = [0.0; 2];
        for (c, o) in out.iter_mut().enumerate() {
            *o = fd_slope(&self.stations, |k| g(k)[c], i, n);
        }
        out
    }

    /// Cubic Hermite point at station `s` using Catmull-Rom tangents.
    /// Stations outside the path extrapolate along the end segments.
    pub fn smooth_point_at(&self, s: f64) -> [f64; 2] {
        let i = self.segment_at(s);
        let h = self.stations[i + 1] - self.stations[i];
        let t = (s - self.stations[i]) / h;
        if !(0.0..=1.0).contains(&t) {
            return self.point_at_unclamped(i, t);
        }
        let (m0, m1) = (self.tangent(i), self.tangent(i + 1));
        let (p0, p1) = (self.pts[i], self.pts[i + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        [
            h00 * p0[0] + h10 * h * m0[0] + h01 * p1[0] + h11 * h * m1[0],
            h00 * p0[1] + h10 * h * m0[1] + h01 * p1[1] + h11 * h * m1[1],
        ]
    }

    fn point_at_unclamped(&self, i: usize, t: f64) -> [f64; 2] {
        let (a, b) = (self.pts[i], self.pts[i + 1]);
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    /// Heading (radians) of the smooth curve at station `s`.
    pub fn heading_at(&self, s: f64) -> f64 {
        let i = self.segment_at(s);
        let h = self.stations[i + 1] - self.stations[i];
        let t = ((s - self.stations[i]) / h).clamp(0.0, 1.0);
        let (m0, m1) = (self.tangent(i), self.tangent(i + 1));
        let (p0, p1) = (self.pts[i], self.pts[i + 1]);
        let t2 = t * t;
        let d00 = 6.0 * t2 - 6.0 * t;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = -6.0 * t2 + 6.0 * t;
        let d11 = 3.0 * t2 - 2.0 * t;
        let dx = d00 * p0[0] + d10 * h * m0[0] + d01 * p1[0] + d11 * h * m1[0];
        let dy = d00 * p0[1] + d10 * h * m0[1] + d01 * p1[1] + d11 * h * m1[1];
        dy.atan2(dx)
    }

    fn project_range(&self, p: [f64; 2], lo: usize, hi: usize) -> Projection {
        let mut best: Option<(f64, Projection)> = None;
        for i in lo..hi {
            let (a, b) = (self.pts[i], self.pts[i + 1]);
            let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
            let len2 = ex * ex + ey * ey;
            let t = (((p[0] - a[0]) * ex + (p[1] - a[1]) * ey) / len2).clamp(0.0, 1.0);
            let foot = [a[0] + t * ex, a[1] + t * ey];
            let d2 = (p[0] - foot[0]).powi(2) + (p[1] - foot[1]).powi(2);
            if best.as_ref().is_none_or(|(bd, _)| d2 < *bd) {
                let len = len2.sqrt();
                let cross = (ex * (p[1] - a[1]) - ey * (p[0] - a[0])) / len;
                best = Some((
                    d2,
                    Projection {
                        station: self.stations[i] + t * len,
                        offset: cross,
                        segment: i,
                        foot,
                    },
                ));
            }
        }
        best.unwrap().1
    }

    /// Closest point on the polyline. With a segment hint, only a window
    /// around the hint is searched unless the result lands on its edge.
    pub fn project(&self, p: [f64; 2], hint: Option<usize>) -> Projection {
        let nseg = self.pts.len() - 1;
        if let Some(h) = hint {
            let lo = h.saturating_sub(HINT_WINDOW);
            let hi = (h + HINT_WINDOW + 1).min(nseg);
            let r = self.project_range(p, lo, hi);
            let at_edge = (r.segment == lo && lo > 0) || (r.segment + 1 == hi && hi < nseg);
            if !at_edge {
                return r;
            }
        }
        self.project_range(p, 0, nseg)
    }

    /// Uniform resampling at `step` meters along the linear path; the last
    /// point is always kept.
    pub fn resample(&self, step: f64) -> Polyline {
        let len = self.length();
        let n = (len / step).floor() as usize;
        let mut pts: Vec<[f64; 2]> = (0..=n).map(|k| self.point_at(k as f64 * step)).collect();
        if len - n as f64 * step > 1e-9 {
            pts.push(*self.pts.last().unwrap());
        }
        Polyline::new(pts).expect("resampling preserves distinct points")
    }
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Finite-difference slope at knot `k`: central in the interior, second
/// order one-sided at the ends.
fn fd_slope(xs: &[f64], f: impl Fn(usize) -> f64, k: usize, n: usize) -> f64 {
    if n == 2 {
        return (f(1) - f(0)) / (xs[1] - xs[0]);
    }
    if k == 0 || k == n - 1 {
        let (a, b, c, sign) = if k == 0 { (0, 1, 2, 1.0) } else { (n - 1, n - 2, n - 3, -1.0) };
        let h1 = (xs[b] - xs[a]).abs();
        let h2 = (xs[c] - xs[b]).abs();
        let d = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * f(a) + (h1 + h2) / (h1 * h2) * f(b)
            - h1 / (h2 * (h1 + h2)) * f(c);
        return sign * d;
    }
    (f(k + 1) - f(k - 1)) / (xs[k + 1] - xs[k - 1])
}

/// Interpolates `y(x)` through samples with strictly increasing `x` using
/// cubic Hermite with Catmull-Rom tangents; linear beyond the ends.
pub fn interp_cubic(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    debug_assert!(n >= 2 && ys.len() == n);
    let i = match xs.partition_point(|&v| v <= x) {
        0 => 0,
        k => (k - 1).min(n - 2),
    };
    let h = xs[i + 1] - xs[i];
    let t = (x - xs[i]) / h;
    if !(0.0..=1.0).contains(&t) {
        return ys[i] + t * (ys[i + 1] - ys[i]);
    }
    let slope = |k: usize| fd_slope(xs, |j| ys[j], k, n);
    let (m0, m1) = (slope(i), slope(i + 1));
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * ys[i]
        + (t3 - 2.0 * t2 + t) * h * m0
        + (-2.0 * t3 + 3.0 * t2) * ys[i + 1]
        + (t3 - t2) * h * m1
}
