//! Multi-camera recordings: per-tick poses, frames, and ground-truth
//! polylines, with a directory format that round-trips exactly.
//!
//! Layout of a recording directory:
//!
//! ```text
//! manifest.txt          header, rig, and one line per tick
//! centerline.txt        "x y" per line
//! left_edge.txt
//! right_edge.txt
//! human_path.txt
//! frames/000123_center.pgm
//! ```
//!
//! All reals are written with 12 fractional digits in scientific notation.
//! Poses and polyline points are rounded to that representation when the
//! recording is made, so reading back reproduces them exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use crate::geometry::{CameraIntrinsics, CameraPose, Pose2};
use crate::image::ImageBuffer;
use crate::par::Exec;
use crate::path::Polyline;
use crate::world::render::{render_frame_with, RenderSettings};
use crate::world::{EgoTrace, WorldError, WorldScene};

pub const MANIFEST_MAGIC: &str = "lanesim-recording 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CameraId {
    Left,
    Center,
    Right,
}

impl CameraId {
    pub const ALL: [CameraId; 3] = [CameraId::Left, CameraId::Center, CameraId::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: u8) -> Option<CameraId> {
        CameraId::ALL.get(i as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            CameraId::Left => "left",
            CameraId::Center => "center",
            CameraId::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<CameraId> {
        CameraId::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Shared intrinsics and the vehicle-frame pose of each camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraRig {
    pub intrinsics: CameraIntrinsics,
    pub cameras: [CameraPose; 3],
}

impl CameraRig {
    /// 320x64 pinhole raster with the horizon 12 rows from the top.
    pub fn default_intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::new(200.0, 200.0, 160.0, 12.0, 320, 64).expect("valid constants")
    }

    /// Center camera at the standard pose; side cameras shifted by
    /// `side_offset_m` to the left and right.
    pub fn standard(intrinsics: CameraIntrinsics, side_offset_m: f64) -> Self {
        let c = CameraPose::standard();
        let shifted = |dy: f64| {
            let mut p = c;
            p.position[1] += dy;
            p
        };
        Self {
            intrinsics,
            cameras: [shifted(side_offset_m), c, shifted(-side_offset_m)],
        }
    }

    pub fn camera(&self, id: CameraId) -> &CameraPose {
        &self.cameras[id.index()]
    }
}

impl Default for CameraRig {
    fn default() -> Self {
        Self::standard(Self::default_intrinsics(), 0.5)
    }
}

/// Ground-truth polylines in the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub centerline: Polyline,
    pub left_edge: Polyline,
    pub right_edge: Polyline,
    pub human_path: Polyline,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTick {
    pub t: f64,
    pub pose: Pose2,
    pub speed: f64,
    /// Station of the pose's projection onto the centerline.
    pub station: f64,
    /// Signed offset from the centerline, positive left.
    pub offset: f64,
    pub segment_hint: usize,
}

#[derive(Debug, Clone)]
enum FrameSource {
    Scene(Arc<WorldScene>, RenderSettings),
    Disk(PathBuf),
}

#[derive(Debug, Clone)]
pub struct Recording {
    pub id: String,
    pub config_hash: String,
    pub frame_rate_hz: f64,
    pub rig: CameraRig,
    pub ticks: Vec<FrameTick>,
    pub truth: GroundTruth,
    source: FrameSource,
    cache: Option<Arc<Vec<OnceLock<Vec<u8>>>>>,
}

/// Rounds to the on-disk representation.
pub fn canonical(v: f64) -> f64 {
    format!("{v:.12e}").parse().expect("formatted float parses")
}

fn canonical_polyline(p: &Polyline) -> Result<Polyline, WorldError> {
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(p.points().len());
    for q in p.points() {
        let c = [canonical(q[0]), canonical(q[1])];
        if pts.last() != Some(&c) {
            pts.push(c);
        }
    }
    Polyline::new(pts).map_err(|e| WorldError::Recording(e.to_string()))
}

fn locate_ticks(centerline: &Polyline, raw: Vec<(f64, Pose2, f64)>) -> Vec<FrameTick> {
    let mut hint = None;
    raw.into_iter()
        .map(|(t, pose, speed)| {
            let p = centerline.project([pose.x, pose.y], hint);
            hint = Some(p.segment);
            FrameTick {
                t,
                pose,
                speed,
                station: p.station,
                offset: p.offset,
                segment_hint: p.segment,
            }
        })
        .collect()
}

/// Samples the trace at `frame_rate_hz`; frames are rendered on demand.
pub fn record(
    scene: Arc<WorldScene>,
    trace: &EgoTrace,
    rig: CameraRig,
    frame_rate_hz: f64,
    id: &str,
    config_hash: &str,
) -> Result<Recording, WorldError> {
    if trace.samples.len() < 2 {
        return Err(WorldError::Recording("trace is too short".into()));
    }
    let dt = trace.samples[1].t - trace.samples[0].t;
    let stride_f = 1.0 / (frame_rate_hz * dt);
    let stride = stride_f.round() as usize;
    if stride == 0 || (stride_f - stride as f64).abs() > 1e-6 {
        return Err(WorldError::Recording(format!(
            "frame rate {frame_rate_hz} Hz is not a divisor of the trace rate {} Hz",
            1.0 / dt
        )));
    }
    if id.is_empty() || id.contains(char::is_whitespace) {
        return Err(WorldError::Recording("recording id must be a non-empty token".into()));
    }
    let road = &scene.road;
    let truth = GroundTruth {
        centerline: canonical_polyline(&road.centerline)?,
        left_edge: canonical_polyline(&road.left_edge)?,
        right_edge: canonical_polyline(&road.right_edge)?,
        human_path: canonical_polyline(&trace.path)?,
    };
    let raw = trace
        .samples
        .iter()
        .step_by(stride)
        .map(|s| {
            (
                canonical(s.t),
                Pose2::new(canonical(s.pose.x), canonical(s.pose.y), canonical(s.pose.heading)),
                canonical(s.speed),
            )
        })
        .collect();
    let ticks = locate_ticks(&truth.centerline, raw);
    Ok(Recording {
        id: id.to_string(),
        config_hash: config_hash.to_string(),
        frame_rate_hz,
        rig: canonical_rig(&rig),
        ticks,
        truth,
        source: FrameSource::Scene(scene, RenderSettings::default()),
        cache: None,
    })
}

fn canonical_rig(rig: &CameraRig) -> CameraRig {
    let k = rig.intrinsics;
    let mut out = *rig;
    out.intrinsics.fx = canonical(k.fx);
    out.intrinsics.fy = canonical(k.fy);
    out.intrinsics.cx = canonical(k.cx);
    out.intrinsics.cy = canonical(k.cy);
    for c in out.cameras.iter_mut() {
        for p in c.position.iter_mut() {
            *p = canonical(*p);
        }
        c.yaw = canonical(c.yaw);
        c.pitch = canonical(c.pitch);
        c.roll = canonical(c.roll);
    }
    out
}

fn frame_file(tick: usize, cam: CameraId) -> String {
    format!("{tick:06}_{}.pgm", cam.name())
}

impl Recording {
    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    pub fn frame_count(&self) -> usize {
        self.ticks.len() * CameraId::ALL.len()
    }

    /// World-frame pose of a camera at a tick.
    pub fn camera_pose(&self, tick: usize, cam: CameraId) -> CameraPose {
        self.rig.camera(cam).mounted_on(&self.ticks[tick].pose)
    }

    /// Keeps every frame produced from now on (one byte per pixel), shared by clones.
    pub fn with_frame_cache(mut self) -> Self {
        let n = self.frame_count();
        self.cache = Some(Arc::new((0..n).map(|_| OnceLock::new()).collect()));
        self
    }

    /// The 8-bit frame of `cam` at `tick`, as stored on disk.
    pub fn frame(&self, tick: usize, cam: CameraId) -> Result<ImageBuffer, WorldError> {
        if tick >= self.ticks.len() {
            return Err(WorldError::Recording(format!("tick {tick} out of range")));
        }
        let Some(cache) = &self.cache else {
            return self.produce_frame(tick, cam);
        };
        let slot = &cache[tick * CameraId::ALL.len() + cam.index()];
        let k = self.rig.intrinsics;
        if let Some(b) = slot.get() {
            return Ok(ImageBuffer::from_parts(k.width, k.height, 1, b.iter().map(|&v| v as f32 / 255.0).collect()));
        }
        let img = self.produce_frame(tick, cam)?;
        let _ = slot.set(img.pixels().iter().map(|&v| (v * 255.0).round() as u8).collect());
        Ok(img)
    }

    fn produce_frame(&self, tick: usize, cam: CameraId) -> Result<ImageBuffer, WorldError> {
        match &self.source {
            FrameSource::Scene(scene, settings) => {
                let pose = self.camera_pose(tick, cam);
                let mut img =
                    render_frame_with(Exec::default(), scene, &pose, &self.rig.intrinsics, settings).image;
                img.quantize_8bit();
                Ok(img)
            }
            FrameSource::Disk(dir) => Ok(ImageBuffer::load(&dir.join("frames").join(frame_file(tick, cam)))?),
        }
    }

    /// The scene, when frames are rendered rather than loaded.
    pub fn scene(&self) -> Option<&Arc<WorldScene>> {
        match &self.source {
            FrameSource::Scene(s, _) => Some(s),
            FrameSource::Disk(_) => None,
        }
    }

    /// Ticks, rig, and ground truth are equal (frame sources may differ).
    pub fn same_content(&self, other: &Recording) -> bool {
        self.id == other.id
            && self.config_hash == other.config_hash
            && self.frame_rate_hz == other.frame_rate_hz
            && self.rig == other.rig
            && self.ticks == other.ticks
            && self.truth == other.truth
    }

    pub fn manifest(&self) -> String {
        let k = &self.rig.intrinsics;
        let mut m = String::new();
        let _ = writeln!(m, "{MANIFEST_MAGIC}");
        let _ = writeln!(m, "id {}", self.id);
        let _ = writeln!(m, "config_hash {}", self.config_hash);
        let _ = writeln!(m, "frame_rate_hz {:.12e}", self.frame_rate_hz);
        let _ = writeln!(
            m,
            "intrinsics {:.12e} {:.12e} {:.12e} {:.12e} {} {}",
            k.fx, k.fy, k.cx, k.cy, k.width, k.height
        );
        for id in CameraId::ALL {
            let c = self.rig.camera(id);
            let _ = writeln!(
                m,
                "camera {} {:.12e} {:.12e} {:.12e} {:.12e} {:.12e} {:.12e}",
                id.name(),
                c.position[0],
                c.position[1],
                c.position[2],
                c.yaw,
                c.pitch,
                c.roll
            );
        }
        let _ = writeln!(m, "ticks {}", self.ticks.len());
        for (i, t) in self.ticks.iter().enumerate() {
            let _ = writeln!(
                m,
                "tick {i} {:.12e} {:.12e} {:.12e} {:.12e} {:.12e}",
                t.t, t.pose.x, t.pose.y, t.pose.heading, t.speed
            );
        }
        m
    }
}

fn polyline_text(p: &Polyline) -> String {
    let mut s = String::with_capacity(p.points().len() * 40);
    for q in p.points() {
        let _ = writeln!(s, "{:.12e} {:.12e}", q[0], q[1]);
    }
    s
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> WorldError + '_ {
    move |source| WorldError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the manifest, ground truth, and every frame. Frames are rendered
/// in parallel by tick when the recording renders on demand.
pub fn write_recording(rec: &Recording, dir: &Path, exec: Exec) -> Result<(), WorldError> {
    let frames = dir.join("frames");
    fs::create_dir_all(&frames).map_err(io_err(&frames))?;
    let files = [
        ("manifest.txt", rec.manifest()),
        ("centerline.txt", polyline_text(&rec.truth.centerline)),
        ("left_edge.txt", polyline_text(&rec.truth.left_edge)),
        ("right_edge.txt", polyline_text(&rec.truth.right_edge)),
        ("human_path.txt", polyline_text(&rec.truth.human_path)),
    ];
    for (name, text) in files {
        let p = dir.join(name);
        fs::write(&p, text).map_err(io_err(&p))?;
    }
    let results = exec.map(rec.len(), |tick| -> Result<(), WorldError> {
        for cam in CameraId::ALL {
            let img = rec.frame(tick, cam)?;
            img.save(&frames.join(frame_file(tick, cam)))?;
        }
        Ok(())
    });
    results.into_iter().collect()
}

fn parse_f(tok: Option<&str>, what: &str) -> Result<f64, WorldError> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| WorldError::Recording(format!("bad or missing {what}")))
}

fn read_polyline(path: &Path) -> Result<Polyline, WorldError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut pts = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let mut it = line.split_whitespace();
        pts.push([parse_f(it.next(), "x")?, parse_f(it.next(), "y")?]);
    }
    Polyline::new(pts).map_err(|e| WorldError::Recording(format!("{}: {e}", path.display())))
}

/// Reads a recording directory; frames are loaded lazily from disk.
pub fn read_recording(dir: &Path) -> Result<Recording, WorldError> {
    let mp = dir.join("manifest.txt");
    let text = fs::read_to_string(&mp).map_err(io_err(&mp))?;
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_MAGIC) {
        return Err(WorldError::Recording("not a recording manifest".into()));
    }
    let mut field = |key: &str| -> Result<Vec<String>, WorldError> {
        let line = lines
            .next()
            .ok_or_else(|| WorldError::Recording(format!("missing {key}")))?;
        let mut it = line.split_whitespace();
        if it.next() != Some(key) {
            return Err(WorldError::Recording(format!("expected {key}, got {line:?}")));
        }
        Ok(it.map(str::to_string).collect())
    };
    let id = field("id")?.join(" ");
    let config_hash = field("config_hash")?.join(" ");
    let frame_rate_hz = parse_f(field("frame_rate_hz")?.first().map(String::as_str), "frame rate")?;
    let k = field("intrinsics")?;
    let g = |i: usize| parse_f(k.get(i).map(String::as_str), "intrinsics");
    let size = |i: usize| {
        k.get(i)
            .and_then(|t| t.parse::<usize>().ok())
            .ok_or_else(|| WorldError::Recording("bad raster size".into()))
    };
    let intrinsics = CameraIntrinsics::new(g(0)?, g(1)?, g(2)?, g(3)?, size(4)?, size(5)?)?;
    let mut cameras = [CameraPose::standard(); 3];
    for id in CameraId::ALL {
        let c = field("camera")?;
        if c.first().map(String::as_str) != Some(id.name()) {
            return Err(WorldError::Recording(format!("expected camera {}", id.name())));
        }
        let v = |i: usize| parse_f(c.get(i).map(String::as_str), "camera pose");
        cameras[id.index()] = CameraPose::new([v(1)?, v(2)?, v(3)?], v(4)?, v(5)?, v(6)?);
    }
    let n: usize = field("ticks")?
        .first()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| WorldError::Recording("bad tick count".into()))?;
    let mut raw = Vec::with_capacity(n);
    for i in 0..n {
        let t = field("tick")?;
        if t.first().map(String::as_str) != Some(i.to_string().as_str()) {
            return Err(WorldError::Recording(format!("tick {i} out of order")));
        }
        let v = |j: usize| parse_f(t.get(j).map(String::as_str), "tick");
        raw.push((v(1)?, Pose2::new(v(2)?, v(3)?, v(4)?), v(5)?));
    }
    let truth = GroundTruth {
        centerline: read_polyline(&dir.join("centerline.txt"))?,
        left_edge: read_polyline(&dir.join("left_edge.txt"))?,
        right_edge: read_polyline(&dir.join("right_edge.txt"))?,
        human_path: read_polyline(&dir.join("human_path.txt"))?,
    };
    let ticks = locate_ticks(&truth.centerline, raw);
    Ok(Recording {
        id,
        config_hash,
        frame_rate_hz,
        rig: CameraRig { intrinsics, cameras },
        ticks,
        truth,
        source: FrameSource::Disk(dir.to_path_buf()),
        cache: None,
    })
}
