//! Driving policies. Patch policies see only pixels; privileged policies
//! see the simulator pose and ground-truth paths. The two interfaces are
//! separate traits so a patch policy cannot reach privileged state.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::augmentation::{read_store, AugmentError, LabelLayout, StoreHeader};
use crate::geometry::Pose2;
use crate::image::ImageBuffer;
use crate::labels::{lateral_at_x, lateral_profile, profile_stations, LabelError, LABEL_POINTS};
use crate::patches::{PatchError, PatchSpec};
use crate::path::Polyline;

pub const MODEL_MAGIC: &[u8; 4] = b"PNRM";
pub const MODEL_VERSION: u32 = 1;
/// Sanity bound on predicted lateral offsets.
pub const MAX_LATERAL_M: f64 = 20.0;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("prediction is not finite or exceeds {MAX_LATERAL_M} m")]
    InvalidPrediction,
    #[error("patch has {got} pixels, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training store is empty")]
    EmptyStore,
    #[error("normal equations are singular; raise lambda")]
    Singular,
    #[error("corrupt model: {0}")]
    Corrupt(String),
    #[error("model i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Store(#[from] AugmentError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Patch(#[from] PatchError),
}

/// Lateral offsets at x = 1..100 m in the vehicle frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPrediction {
    y: Vec<f64>,
}

impl TrajectoryPrediction {
    pub fn new(y: Vec<f64>) -> Result<Self, PolicyError> {
        if y.len() != LABEL_POINTS || y.iter().any(|v| !v.is_finite() || v.abs() >= MAX_LATERAL_M) {
            return Err(PolicyError::InvalidPrediction);
        }
        Ok(Self { y })
    }

    pub fn offsets(&self) -> &[f64] {
        &self.y
    }

    /// Lateral offset at longitudinal distance `x`, cubic between stations.
    pub fn at(&self, x: f64) -> f64 {
        crate::path::interp_cubic(&profile_stations(), &self.y, x)
    }
}

/// State only privileged policies may read.
#[derive(Debug, Clone, Copy)]
pub struct PrivilegedInput<'a> {
    pub pose: Pose2,
    pub centerline: &'a Polyline,
    pub human_path: &'a Polyline,
    pub centerline_hint: Option<usize>,
}

pub trait PatchPolicy: Send + Sync {
    fn predict_patch(&self, patch: &ImageBuffer) -> Result<TrajectoryPrediction, PolicyError>;
}

pub trait PrivilegedPolicy: Send + Sync {
    fn predict_privileged(&self, input: &PrivilegedInput) -> Result<TrajectoryPrediction, PolicyError>;
}

/// A policy handed to the resimulator.
#[derive(Clone, Copy)]
pub enum Driver<'a> {
    Patch(&'a dyn PatchPolicy),
    Privileged(&'a dyn PrivilegedPolicy),
}

/// Follows the lane centerline exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePolicy;

/// Reproduces the recorded human path, as a network that fully decodes warp
/// artifacts would.
#[derive(Debug, Clone, Copy, Default)]
pub struct CheaterPolicy;

/// Follows a line parallel to the centerline, `offset_m` to the left.
#[derive(Debug, Clone, Copy)]
pub struct OffsetPolicy {
    pub offset_m: f64,
}

/// Always asks for a sharp left turn, whatever it sees.
#[derive(Debug, Clone, Copy, Default)]
pub struct HardLeftPolicy;

fn privileged_profile(path: &Polyline, input: &PrivilegedInput, shift: f64) -> Result<TrajectoryPrediction, PolicyError> {
    let hint = input.centerline_hint.filter(|_| std::ptr::eq(path, input.centerline));
    let y = lateral_profile(path, &input.pose, &input.pose, hint)?;
    TrajectoryPrediction::new(y.into_iter().map(|v| v + shift).collect())
}

impl PrivilegedPolicy for OraclePolicy {
    fn predict_privileged(&self, input: &PrivilegedInput) -> Result<TrajectoryPrediction, PolicyError> {
        privileged_profile(input.centerline, input, 0.0)
    }
}

impl PrivilegedPolicy for CheaterPolicy {
    fn predict_privileged(&self, input: &PrivilegedInput) -> Result<TrajectoryPrediction, PolicyError> {
        privileged_profile(input.human_path, input, 0.0)
    }
}

impl PrivilegedPolicy for OffsetPolicy {
    fn predict_privileged(&self, input: &PrivilegedInput) -> Result<TrajectoryPrediction, PolicyError> {
        // Small-heading approximation of the parallel line.
        privileged_profile(input.centerline, input, self.offset_m)
    }
}

impl PatchPolicy for HardLeftPolicy {
    fn predict_patch(&self, _patch: &ImageBuffer) -> Result<TrajectoryPrediction, PolicyError> {
        TrajectoryPrediction::new(profile_stations().iter().map(|x| (0.2 * x * x).min(19.0)).collect())
    }
}

/// Affine map from patch pixels to lateral offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub patch: PatchSpec,
    pub lambda: f64,
    /// Config hash of the training store.
    pub config_hash: [u8; 32],
    /// Row-major `outputs x (pixels + 1)`; the last column is the bias.
    pub weights: Vec<f64>,
}

impl RidgeModel {
    pub fn inputs(&self) -> usize {
        self.patch.pixel_count()
    }

    pub fn outputs(&self) -> usize {
        LABEL_POINTS
    }

    pub fn bias(&self) -> Vec<f64> {
        let c = self.inputs() + 1;
        (0..self.outputs()).map(|r| self.weights[r * c + c - 1]).collect()
    }

    /// `W * [pixels; 1]`.
    pub fn predict_raw(&self, pixels: &[f32]) -> Result<Vec<f64>, PolicyError> {
        let p = self.inputs();
        if pixels.len() != p {
            return Err(PolicyError::DimensionMismatch {
                expected: p,
                got: pixels.len(),
            });
        }
        Ok(self
            .weights
            .chunks_exact(p + 1)
            .map(|row| row[p] + row[..p].iter().zip(pixels).map(|(w, &x)| w * x as f64).sum::<f64>())
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&self.encode())?;
        w.flush()?;
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(8 * self.weights.len() + 128);
        b.extend_from_slice(MODEL_MAGIC);
        b.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        self.patch.encode(&mut b);
        b.extend_from_slice(&(self.outputs() as u32).to_le_bytes());
        b.extend_from_slice(&(self.inputs() as u32 + 1).to_le_bytes());
        b.extend_from_slice(&self.lambda.to_le_bytes());
        b.extend_from_slice(&self.config_hash);
        for v in &self.weights {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        Self::decode(&bytes)
    }

    pub fn decode(b: &[u8]) -> Result<Self, PolicyError> {
        let corrupt = |m: &str| PolicyError::Corrupt(m.to_string());
        let head = 8 + PatchSpec::ENCODED_LEN + 16 + 32;
        if b.len() < head || &b[0..4] != MODEL_MAGIC {
            return Err(corrupt("bad magic or truncated header"));
        }
        if u32::from_le_bytes(b[4..8].try_into().unwrap()) != MODEL_VERSION {
            return Err(corrupt("unsupported version"));
        }
        let patch = PatchSpec::decode(&b[8..8 + PatchSpec::ENCODED_LEN])?;
        let o = 8 + PatchSpec::ENCODED_LEN;
        let rows = u32::from_le_bytes(b[o..o + 4].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(b[o + 4..o + 8].try_into().unwrap()) as usize;
        let lambda = f64::from_le_bytes(b[o + 8..o + 16].try_into().unwrap());
        let config_hash = b[o + 16..o + 48].try_into().unwrap();
        if rows != LABEL_POINTS || cols != patch.pixel_count() + 1 {
            return Err(corrupt("weight dims disagree with patch kind"));
        }
        if b.len() != head + 8 * rows * cols {
            return Err(corrupt("weight block has the wrong length"));
        }
        let weights = b[head..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            patch,
            lambda,
            config_hash,
            weights,
        })
    }
}

impl PatchPolicy for RidgeModel {
    /// Outputs are clamped into the sanity bound.
    fn predict_patch(&self, patch: &ImageBuffer) -> Result<TrajectoryPrediction, PolicyError> {
        let lim = MAX_LATERAL_M - 1e-6;
        let y = self.predict_raw(patch.pixels())?;
        TrajectoryPrediction::new(y.into_iter().map(|v| v.clamp(-lim, lim)).collect())
    }
}

/// Streaming sufficient statistics for ridge regression. Inputs are
/// shifted by the first sample to limit cancellation.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    p: usize,
    q: usize,
    n: u64,
    origin: Vec<f64>,
    sum_x: DVector<f64>,
    sum_y: DVector<f64>,
    xtx: DMatrix<f64>,
    xty: DMatrix<f64>,
    batch_x: DMatrix<f64>,
    batch_y: DMatrix<f64>,
    filled: usize,
}

const BATCH: usize = 64;

impl NormalEquations {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        Self {
            p: inputs,
            q: outputs,
            n: 0,
            origin: Vec::new(),
            sum_x: DVector::zeros(inputs),
            sum_y: DVector::zeros(outputs),
            xtx: DMatrix::zeros(inputs, inputs),
            xty: DMatrix::zeros(inputs, outputs),
            batch_x: DMatrix::zeros(inputs, BATCH),
            batch_y: DMatrix::zeros(outputs, BATCH),
            filled: 0,
        }
    }

    pub fn count(&self) -> u64 {
        self.n + self.filled as u64
    }

    pub fn push(&mut self, x: &[f32], y: &[f64]) {
        debug_assert_eq!((x.len(), y.len()), (self.p, self.q));
        if self.origin.is_empty() {
            self.origin = x.iter().map(|&v| v as f64).collect();
        }
        let c = self.filled;
        for (i, (&v, o)) in x.iter().zip(&self.origin).enumerate() {
            self.batch_x[(i, c)] = v as f64 - o;
        }
        for (i, &v) in y.iter().enumerate() {
            self.batch_y[(i, c)] = v;
        }
        self.filled += 1;
        if self.filled == BATCH {
            self.flush();
        }
    }

    fn flush(&mut self) {
        let k = self.filled;
        if k == 0 {
            return;
        }
        let bx = self.batch_x.columns(0, k);
        let by = self.batch_y.columns(0, k);
        self.xtx.gemm(1.0, &bx, &bx.transpose(), 1.0);
        self.xty.gemm(1.0, &bx, &by.transpose(), 1.0);
        for j in 0..k {
            self.sum_x += bx.column(j);
            self.sum_y += by.column(j);
        }
        self.n += k as u64;
        self.filled = 0;
    }

    /// Centered system `(C + lambda I) W = D`, `C` and `D` being the
    /// centered Gram and cross moments.
    pub fn centered(&mut self) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>, DVector<f64>) {
        self.flush();
        let n = self.n as f64;
        let mx = &self.sum_x / n;
        let my = &self.sum_y / n;
        let c = &self.xtx - &mx * mx.transpose() * n;
        let d = &self.xty - &mx * my.transpose() * n;
        (c, d, mx, my)
    }

    /// Solves with an unpenalized bias.
    pub fn solve(&mut self, lambda: f64, patch: PatchSpec) -> Result<RidgeModel, PolicyError> {
        if self.count() == 0 {
            return Err(PolicyError::EmptyStore);
        }
        let (mut c, d, mx, my) = self.centered();
        for i in 0..self.p {
            c[(i, i)] += lambda;
        }
        let w = c.cholesky().ok_or(PolicyError::Singular)?.solve(&d);
        if w.iter().any(|v| !v.is_finite()) {
            return Err(PolicyError::Singular);
        }
        let cols = self.p + 1;
        let mut weights = vec![0.0; self.q * cols];
        for r in 0..self.q {
            let mut b = my[r];
            for i in 0..self.p {
                let wi = w[(i, r)];
                weights[r * cols + i] = wi;
                b -= wi * (mx[i] + self.origin[i]);
            }
            weights[r * cols + self.p] = b;
        }
        Ok(RidgeModel {
            patch,
            lambda,
            config_hash: [0; 32],
            weights,
        })
    }
}

/// Lateral-offset targets of a stored label.
pub fn label_targets(header: &StoreHeader, label: &[f32]) -> Result<Vec<f64>, PolicyError> {
    match header.label_layout {
        LabelLayout::Lateral => Ok(label.iter().map(|&v| v as f64).collect()),
        LabelLayout::Points => {
            let pts: Vec<[f64; 3]> = label
                .chunks_exact(3)
                .map(|c| [c[0] as f64, c[1] as f64, c[2] as f64])
                .collect();
            Ok(lateral_at_x(&pts, &profile_stations())?)
        }
    }
}

/// One streaming pass over the store, then a Cholesky solve.
pub fn train_ridge(store: &Path, lambda: f64) -> Result<RidgeModel, PolicyError> {
    let reader = read_store(store)?;
    let header = reader.header().clone();
    let mut ne = NormalEquations::new(header.patch.pixel_count(), LABEL_POINTS);
    for rec in reader {
        let rec = rec?;
        let y = label_targets(&header, &rec.label)?;
        ne.push(&rec.patch, &y);
    }
    let mut m = ne.solve(lambda, header.patch)?;
    m.config_hash = header.config_hash;
    Ok(m)
}
