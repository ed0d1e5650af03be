//! Offline sample generation: camera choice, shift/yaw viewpoint
//! perturbation with corrected labels, and the flat binary sample store.
//!
//! Store layout (little-endian):
//!
//! ```text
//! "PNSS" | version u32 | count u64 | patch descriptor | patch_w u32 | patch_h u32
//! | label layout u8 | label dims u32 | seed u64 | config hash [32]
//! | recording count u32 | (id len u16, id bytes)*
//! records: patch f32* | label f32* | maneuver u8 | recording u32 | frame u32
//!          | camera u8 | shift f64 | yaw f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{warp_viewpoint_with, CameraPose, Pose2};
use crate::image::ImageBuffer;
use crate::labels::{extract_anchored, LabelError, ManeuverTag, TrajectoryLabel, LABEL_POINTS, LABEL_SPACING_M};
use crate::par::Exec;
use crate::patches::{PatchError, PatchSpec};
use crate::world::{CameraId, Recording, WorldError};

pub const STORE_MAGIC: &[u8; 4] = b"PNSS";
pub const STORE_VERSION: u32 = 1;
/// Path that must remain ahead of a frame for it to be labelled.
pub const LABEL_MARGIN_M: f64 = LABEL_POINTS as f64 * LABEL_SPACING_M + 5.0;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid augmentation spec: {0}")]
    InvalidSpec(String),
    #[error("warp leaves {valid:.3} of the ROI valid, below {min:.3}")]
    Rejected { valid: f64, min: f64 },
    #[error("rejection rate {rate:.3} exceeds 0.5; the shift/yaw ranges are likely misconfigured")]
    RejectionRate { rate: f64 },
    #[error("frame {0} is out of range or lacks path ahead")]
    Frame(usize),
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error("store i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Centerline,
    HumanPath,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentSpec {
    /// Shifts are drawn uniformly from `[-shift_range_m, shift_range_m]`;
    /// positive moves the virtual vehicle to the right.
    pub shift_range_m: f64,
    pub yaw_range_deg: f64,
    /// Selection weights for left, center, right.
    pub camera_weights: [f64; 3],
    pub label_source: LabelSource,
    pub patch: PatchSpec,
    /// Minimum valid fraction of the warped ROI.
    pub min_valid_fraction: f64,
    pub seed: u64,
}

impl AugmentSpec {
    pub fn validate(&self, max_offset_m: f64, max_yaw_deg: f64) -> Result<(), AugmentError> {
        let bad = |m: String| Err(AugmentError::InvalidSpec(m));
        if !(self.shift_range_m >= 0.0 && self.shift_range_m <= max_offset_m) {
            return bad(format!("shift range {} outside [0, {max_offset_m}]", self.shift_range_m));
        }
        if !(self.yaw_range_deg >= 0.0 && self.yaw_range_deg <= max_yaw_deg) {
            return bad(format!("yaw range {} outside [0, {max_yaw_deg}]", self.yaw_range_deg));
        }
        let sum: f64 = self.camera_weights.iter().sum();
        if self.camera_weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return bad(format!("camera weights {:?} must be >= 0 and sum to 1", self.camera_weights));
        }
        if !(0.0..=1.0).contains(&self.min_valid_fraction) {
            return bad("min valid fraction must be in [0, 1]".into());
        }
        Ok(())
    }
}

/// How a record was made; enough to rebuild it exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub recording: u32,
    pub frame: u32,
    pub camera: CameraId,
    pub shift_m: f64,
    pub yaw_rad: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub patch: Vec<f32>,
    /// Label points flattened as x, y, z.
    pub label: Vec<f32>,
    pub maneuver: ManeuverTag,
    pub provenance: Provenance,
}

/// A freshly generated sample with its full-precision label.
#[derive(Debug, Clone)]
pub struct AugmentedSample {
    pub record: SampleRecord,
    pub label: TrajectoryLabel,
    pub valid_fraction: f64,
}

/// Virtual vehicle pose for a perturbation of a recorded pose.
pub fn perturbed_pose(recorded: &Pose2, shift_m: f64, yaw_rad: f64) -> Pose2 {
    recorded.compose(&Pose2::new(0.0, -shift_m, yaw_rad))
}

/// Frames of one tick, loaded on first use.
pub struct TickFrames<'a> {
    rec: &'a Recording,
    tick: usize,
    frames: [Option<ImageBuffer>; 3],
}

impl<'a> TickFrames<'a> {
    pub fn new(rec: &'a Recording, tick: usize) -> Self {
        Self {
            rec,
            tick,
            frames: [None, None, None],
        }
    }

    pub fn get(&mut self, cam: CameraId) -> Result<&ImageBuffer, AugmentError> {
        let slot = &mut self.frames[cam.index()];
        if slot.is_none() {
            *slot = Some(self.rec.frame(self.tick, cam)?);
        }
        Ok(slot.as_ref().unwrap())
    }
}

/// Builds the sample for a given camera, shift and yaw.
pub fn build_sample(
    rec: &Recording,
    recording_index: u32,
    frame: usize,
    camera: CameraId,
    shift_m: f64,
    yaw_rad: f64,
    spec: &AugmentSpec,
) -> Result<AugmentedSample, AugmentError> {
    let img = rec.frame(frame, camera)?;
    build_sample_from(rec, recording_index, frame, camera, shift_m, yaw_rad, spec, &img)
}

#[allow(clippy::too_many_arguments)]
fn build_sample_from(
    rec: &Recording,
    recording_index: u32,
    frame: usize,
    camera: CameraId,
    shift_m: f64,
    yaw_rad: f64,
    spec: &AugmentSpec,
    img: &ImageBuffer,
) -> Result<AugmentedSample, AugmentError> {
    let tick = rec.ticks.get(frame).ok_or(AugmentError::Frame(frame))?;
    let intr = rec.rig.intrinsics;
    let virt = perturbed_pose(&tick.pose, shift_m, yaw_rad);
    let src = rec.camera_pose(frame, camera);
    let dst = CameraPose::standard().mounted_on(&virt);
    let warped = warp_viewpoint_with(Exec::Sequential, img, &src, &dst, &intr)?;
    let valid_fraction = roi_valid_fraction(&warped.valid, spec, &intr)?;
    if valid_fraction < spec.min_valid_fraction {
        return Err(AugmentError::Rejected {
            valid: valid_fraction,
            min: spec.min_valid_fraction,
        });
    }
    let patch = spec.patch.extract(&warped.image, &CameraPose::standard(), &intr)?;
    let path = match spec.label_source {
        LabelSource::Centerline => &rec.truth.centerline,
        LabelSource::HumanPath => &rec.truth.human_path,
    };
    let points = extract_anchored(path, &tick.pose, &virt, LABEL_POINTS, LABEL_SPACING_M, None)?;
    let label = TrajectoryLabel {
        points,
        maneuver: ManeuverTag::LaneStable,
    };
    let flat = label.points.iter().flat_map(|p| p.iter().map(|&v| v as f32)).collect();
    Ok(AugmentedSample {
        record: SampleRecord {
            patch: patch.into_pixels(),
            label: flat,
            maneuver: label.maneuver,
            provenance: Provenance {
                recording: recording_index,
                frame: frame as u32,
                camera,
                shift_m,
                yaw_rad,
            },
        },
        label,
        valid_fraction,
    })
}

fn roi_valid_fraction(
    valid: &[bool],
    spec: &AugmentSpec,
    intr: &crate::geometry::CameraIntrinsics,
) -> Result<f64, AugmentError> {
    let roi = match spec.patch {
        PatchSpec::Regular(r) | PatchSpec::MultiRes { roi: r, .. } => r,
    };
    let g = roi.geometry(&CameraPose::standard(), intr)?;
    let c0 = (g.x_center - g.width / 2.0).floor().max(0.0) as usize;
    let c1 = ((g.x_center + g.width / 2.0).ceil() as usize).min(intr.width);
    let r0 = g.y_top.floor().max(0.0) as usize;
    let r1 = ((g.y_top + g.height).ceil() as usize).min(intr.height);
    let mut ok = 0usize;
    for r in r0..r1 {
        ok += valid[r * intr.width + c0..r * intr.width + c1].iter().filter(|&&v| v).count();
    }
    Ok(ok as f64 / ((r1 - r0) * (c1 - c0)).max(1) as f64)
}

fn sample_seed(seed: u64, recording: u32, frame: u32, k: u32) -> u64 {
    let mut z = seed ^ ((recording as u64) << 48) ^ ((frame as u64) << 16) ^ k as u64;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Draws a camera, shift and yaw and builds the sample. Rejected draws
/// are returned as errors; the caller resamples with a fresh `rng` state.
pub fn augment_sample(
    frames: &mut TickFrames,
    recording_index: u32,
    spec: &AugmentSpec,
    rng: &mut ChaCha8Rng,
) -> Result<AugmentedSample, AugmentError> {
    let w = spec.camera_weights;
    let x: f64 = rng.random_range(0.0..1.0);
    let camera = if x < w[0] {
        CameraId::Left
    } else if x < w[0] + w[1] {
        CameraId::Center
    } else {
        CameraId::Right
    };
    let shift = if spec.shift_range_m > 0.0 {
        rng.random_range(-spec.shift_range_m..=spec.shift_range_m)
    } else {
        0.0
    };
    let yr = spec.yaw_range_deg.to_radians();
    let yaw = if yr > 0.0 { rng.random_range(-yr..=yr) } else { 0.0 };
    let (rec, frame) = (frames.rec, frames.tick);
    let img = frames.get(camera)?;
    build_sample_from(rec, recording_index, frame, camera, shift, yaw, spec, img)
}

/// Rebuilds a record from its provenance.
pub fn regenerate(recs: &[Recording], p: &Provenance, spec: &AugmentSpec) -> Result<SampleRecord, AugmentError> {
    let rec = recs
        .get(p.recording as usize)
        .ok_or_else(|| AugmentError::Corrupt(format!("recording index {}", p.recording)))?;
    Ok(build_sample(rec, p.recording, p.frame as usize, p.camera, p.shift_m, p.yaw_rad, spec)?.record)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum LabelLayout {
    /// 100 points as x, y, z.
    Points = 0,
    /// 100 lateral offsets at x = 1..100 m.
    Lateral = 1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreHeader {
    pub version: u32,
    pub count: u64,
    pub patch: PatchSpec,
    pub label_layout: LabelLayout,
    pub label_dims: u32,
    pub seed: u64,
    pub config_hash: [u8; 32],
    pub recordings: Vec<String>,
}

impl StoreHeader {
    pub fn patch_dims(&self) -> (usize, usize) {
        self.patch.dims()
    }

    pub fn record_size(&self) -> usize {
        4 * self.patch.pixel_count() + 4 * self.label_dims as usize + 1 + 4 + 4 + 1 + 8 + 8
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(STORE_MAGIC);
        b.extend_from_slice(&self.version.to_le_bytes());
        b.extend_from_slice(&self.count.to_le_bytes());
        self.patch.encode(&mut b);
        let (w, h) = self.patch.dims();
        b.extend_from_slice(&(w as u32).to_le_bytes());
        b.extend_from_slice(&(h as u32).to_le_bytes());
        b.push(self.label_layout as u8);
        b.extend_from_slice(&self.label_dims.to_le_bytes());
        b.extend_from_slice(&self.seed.to_le_bytes());
        b.extend_from_slice(&self.config_hash);
        b.extend_from_slice(&(self.recordings.len() as u32).to_le_bytes());
        for id in &self.recordings {
            b.extend_from_slice(&(id.len() as u16).to_le_bytes());
            b.extend_from_slice(id.as_bytes());
        }
        b
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<(Self, usize), AugmentError> {
        let corrupt = |m: &str| AugmentError::Corrupt(m.to_string());
        let mut fixed = vec![0u8; 4 + 4 + 8 + PatchSpec::ENCODED_LEN + 4 + 4 + 1 + 4 + 8 + 32 + 4];
        r.read_exact(&mut fixed).map_err(|_| corrupt("truncated header"))?;
        if &fixed[0..4] != STORE_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(fixed[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(fixed[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != STORE_VERSION {
            return Err(AugmentError::Corrupt(format!("unsupported version {version}")));
        }
        let count = u64_at(8);
        let mut o = 16;
        let patch = PatchSpec::decode(&fixed[o..o + PatchSpec::ENCODED_LEN])?;
        o += PatchSpec::ENCODED_LEN;
        let (w, h) = (u32_at(o) as usize, u32_at(o + 4) as usize);
        if (w, h) != patch.dims() {
            return Err(corrupt("patch dims disagree with descriptor"));
        }
        o += 8;
        let label_layout = match fixed[o] {
            0 => LabelLayout::Points,
            1 => LabelLayout::Lateral,
            _ => return Err(corrupt("unknown label layout")),
        };
        let label_dims = u32_at(o + 1);
        let expect = match label_layout {
            LabelLayout::Points => 3 * LABEL_POINTS as u32,
            LabelLayout::Lateral => LABEL_POINTS as u32,
        };
        if label_dims != expect {
            return Err(corrupt("label dims disagree with layout"));
        }
        o += 5;
        let seed = u64_at(o);
        o += 8;
        let config_hash: [u8; 32] = fixed[o..o + 32].try_into().unwrap();
        o += 32;
        let nrec = u32_at(o) as usize;
        let mut size = fixed.len();
        let mut recordings = Vec::with_capacity(nrec);
        for _ in 0..nrec {
            let mut len = [0u8; 2];
            r.read_exact(&mut len).map_err(|_| corrupt("truncated recording table"))?;
            let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
            r.read_exact(&mut id).map_err(|_| corrupt("truncated recording table"))?;
            size += 2 + id.len();
            recordings.push(String::from_utf8(id).map_err(|_| corrupt("recording id is not utf-8"))?);
        }
        Ok((
            Self {
                version,
                count,
                patch,
                label_layout,
                label_dims,
                seed,
                config_hash,
                recordings,
            },
            size,
        ))
    }
}

impl SampleRecord {
    pub fn encode(&self, out: &mut Vec<u8>) {
        for v in &self.patch {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.label {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(self.maneuver as u8);
        let p = &self.provenance;
        out.extend_from_slice(&p.recording.to_le_bytes());
        out.extend_from_slice(&p.frame.to_le_bytes());
        out.push(p.camera.index() as u8);
        out.extend_from_slice(&p.shift_m.to_le_bytes());
        out.extend_from_slice(&p.yaw_rad.to_le_bytes());
    }

    pub fn decode(bytes: &[u8], patch_len: usize, label_len: usize) -> Result<Self, AugmentError> {
        let f32s = |o: usize, n: usize| -> Vec<f32> {
            bytes[o..o + 4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect()
        };
        let patch = f32s(0, patch_len);
        let label = f32s(4 * patch_len, label_len);
        let mut o = 4 * (patch_len + label_len);
        let maneuver = ManeuverTag::try_from(bytes[o])?;
        o += 1;
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let recording = u32_at(o);
        let frame = u32_at(o + 4);
        let camera = CameraId::from_index(bytes[o + 8])
            .ok_or_else(|| AugmentError::Corrupt(format!("camera {}", bytes[o + 8])))?;
        Ok(SampleRecord {
            patch,
            label,
            maneuver,
            provenance: Provenance {
                recording,
                frame,
                camera,
                shift_m: f64_at(o + 9),
                yaw_rad: f64_at(o + 17),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreSummary {
    pub records: u64,
    pub attempts: u64,
    pub rejected: u64,
    pub rejection_rate: f64,
    pub frames_used: usize,
}

/// Frames whose recorded pose has enough centerline ahead for a label.
pub fn eligible_frames(rec: &Recording) -> Vec<usize> {
    let end = rec.truth.centerline.length() - LABEL_MARGIN_M;
    (0..rec.len()).filter(|&i| rec.ticks[i].station <= end).collect()
}

const MAX_ATTEMPTS: u32 = 16;

/// Generates `samples_per_frame` samples for every eligible frame of every
/// recording and writes them in a seeded shuffled order.
pub fn build_store(
    recs: &[Recording],
    spec: &AugmentSpec,
    samples_per_frame: usize,
    out: &Path,
    config_hash: [u8; 32],
    exec: Exec,
) -> Result<StoreSummary, AugmentError> {
    let jobs: Vec<(usize, usize)> = recs
        .iter()
        .enumerate()
        .flat_map(|(ri, r)| eligible_frames(r).into_iter().map(move |f| (ri, f)))
        .collect();
    let per_job = exec.map(jobs.len(), |j| -> Result<(Vec<SampleRecord>, u64), AugmentError> {
        let (ri, frame) = jobs[j];
        let mut out = Vec::with_capacity(samples_per_frame);
        let mut rejected = 0;
        let mut k = 0u32;
        let mut frames = TickFrames::new(&recs[ri], frame);
        while out.len() < samples_per_frame {
            if k >= MAX_ATTEMPTS * samples_per_frame as u32 {
                break;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(spec.seed, ri as u32, frame as u32, k));
            k += 1;
            match augment_sample(&mut frames, ri as u32, spec, &mut rng) {
                Ok(s) => out.push(s.record),
                Err(AugmentError::Rejected { .. }) => rejected += 1,
                Err(e) => return Err(e),
            }
        }
        Ok((out, rejected))
    });
    let mut records = Vec::new();
    let mut rejected = 0u64;
    for r in per_job {
        let (v, rej) = r?;
        records.extend(v);
        rejected += rej;
    }
    let attempts = records.len() as u64 + rejected;
    let rate = if attempts > 0 { rejected as f64 / attempts as f64 } else { 0.0 };
    if rate > 0.5 {
        return Err(AugmentError::RejectionRate { rate });
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed ^ 0x0073_6875_6666_6c65));
    let header = StoreHeader {
        version: STORE_VERSION,
        count: records.len() as u64,
        patch: spec.patch,
        label_layout: LabelLayout::Points,
        label_dims: 3 * LABEL_POINTS as u32,
        seed: spec.seed,
        config_hash,
        recordings: recs.iter().map(|r| r.id.clone()).collect(),
    };
    let mut w = BufWriter::new(File::create(out)?);
    w.write_all(&header.encode())?;
    let mut buf = Vec::with_capacity(header.record_size());
    for i in order {
        buf.clear();
        records[i].encode(&mut buf);
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(StoreSummary {
        records: records.len() as u64,
        attempts,
        rejected,
        rejection_rate: rate,
        frames_used: jobs.len(),
    })
}

/// Sequential reader over a store; holds one record at a time.
pub struct StoreReader {
    header: StoreHeader,
    reader: BufReader<File>,
    remaining: u64,
    buf: Vec<u8>,
}

impl StoreReader {
    pub fn header(&self) -> &StoreHeader {
        &self.header
    }
}

impl Iterator for StoreReader {
    type Item = Result<SampleRecord, AugmentError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        if let Err(e) = self.reader.read_exact(&mut self.buf) {
            self.remaining = 0;
            return Some(Err(e.into()));
        }
        let h = &self.header;
        Some(SampleRecord::decode(&self.buf, h.patch.pixel_count(), h.label_dims as usize))
    }
}

/// Opens a store, validating its header and length.
pub fn read_store(path: &Path) -> Result<StoreReader, AugmentError> {
    let file = File::open(path)?;
    let len = file.metadata()?.len();
    let mut reader = BufReader::new(file);
    let (header, header_size) = StoreHeader::read_from(&mut reader)?;
    let expected = header_size as u64 + header.count * header.record_size() as u64;
    if len != expected {
        return Err(AugmentError::Corrupt(format!(
            "file is {len} bytes, header promises {expected}"
        )));
    }
    let buf = vec![0u8; header.record_size()];
    Ok(StoreReader {
        remaining: header.count,
        header,
        reader,
        buf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patches::RoiSpec;

    fn header() -> StoreHeader {
        StoreHeader {
            version: STORE_VERSION,
            count: 0,
            patch: PatchSpec::Regular(RoiSpec {
                out_w: 8,
                out_h: 4,
                ..RoiSpec::default()
            }),
            label_layout: LabelLayout::Points,
            label_dims: 300,
            seed: 99,
            config_hash: [7; 32],
            recordings: vec!["a".into(), "bb".into()],
        }
    }

    #[test]
    fn header_round_trip() {
        let h = header();
        let bytes = h.encode();
        let (back, size) = StoreHeader::read_from(&mut &bytes[..]).unwrap();
        assert_eq!(back, h);
        assert_eq!(size, bytes.len());
    }

    #[test]
    fn header_rejects_bad_magic_and_version() {
        let mut bytes = header().encode();
        bytes[0] = b'X';
        assert!(matches!(StoreHeader::read_from(&mut &bytes[..]), Err(AugmentError::Corrupt(_))));
        let mut bytes = header().encode();
        bytes[4] = 9;
        assert!(matches!(StoreHeader::read_from(&mut &bytes[..]), Err(AugmentError::Corrupt(_))));
    }

    #[test]
    fn record_round_trip() {
        let r = SampleRecord {
            patch: (0..32).map(|i| i as f32 / 31.0).collect(),
            label: (0..300).map(|i| i as f32 * 0.5).collect(),
            maneuver: ManeuverTag::SplitRight,
            provenance: Provenance {
                recording: 1,
                frame: 77,
                camera: CameraId::Right,
                shift_m: -0.37,
                yaw_rad: 0.05,
            },
        };
        let mut b = Vec::new();
        r.encode(&mut b);
        assert_eq!(b.len(), header().record_size());
        assert_eq!(SampleRecord::decode(&b, 32, 300).unwrap(), r);
    }

    #[test]
    fn spec_validation() {
        let spec = AugmentSpec {
            shift_range_m: 1.0,
            yaw_range_deg: 5.0,
            camera_weights: [0.25, 0.5, 0.25],
            label_source: LabelSource::Centerline,
            patch: header().patch,
            min_valid_fraction: 0.98,
            seed: 1,
        };
        assert!(spec.validate(1.5, 10.0).is_ok());
        assert!(AugmentSpec { shift_range_m: 2.0, ..spec }.validate(1.5, 10.0).is_err());
        assert!(AugmentSpec { camera_weights: [0.5, 0.5, 0.5], ..spec }.validate(1.5, 10.0).is_err());
    }

    #[test]
    fn perturbation_moves_right_for_positive_shift() {
        let p = perturbed_pose(&Pose2::new(10.0, 0.0, 0.0), 1.0, 0.0);
        assert_eq!((p.x, p.y), (10.0, -1.0));
    }
}
