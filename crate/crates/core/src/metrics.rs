//! Lane-keeping metrics and the left/right-biased MAPA experiment.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::Exec;
use crate::patches::PatchSpec;
use crate::policy::Driver;
use crate::resim::{drivable_end, run_resim, FailureCause, ResimConfig, ResimError, ResimReport, VehicleSpec};
use crate::world::{record, simulate_human_drive, CameraRig, DriveSpec, Recording, WorldError, WorldScene};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("human offsets must be non-zero (got {0}, {1})")]
    ZeroHumanBias(f64, f64),
    #[error("series is too short")]
    ShortSeries,
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Resim(#[from] ResimError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mdbf {
    Km(f64),
    /// No failures over this many km.
    Infinite { distance_km: f64 },
}

impl Mdbf {
    /// Infinite compares above every finite value.
    pub fn at_least(&self, other: &Mdbf) -> bool {
        match (self, other) {
            (Mdbf::Infinite { .. }, _) => true,
            (Mdbf::Km(_), Mdbf::Infinite { .. }) => false,
            (Mdbf::Km(a), Mdbf::Km(b)) => a >= b,
        }
    }
}

impl std::fmt::Display for Mdbf {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mdbf::Km(k) => write!(f, "{k:.3} km"),
            Mdbf::Infinite { distance_km } => write!(f, "inf (no failures in {distance_km:.3} km)"),
        }
    }
}

pub fn mdbf_from(distance_m: f64, failures: usize) -> Mdbf {
    let km = distance_m / 1000.0;
    if failures == 0 {
        Mdbf::Infinite { distance_km: km }
    } else {
        Mdbf::Km(km / failures as f64)
    }
}

pub fn mdbf(report: &ResimReport) -> Mdbf {
    mdbf_from(report.distance_m, report.failures.len())
}

/// `100 (1 - RMS)` with offsets in meters; negative past 1 m RMS.
pub fn precision(offsets: &[f64]) -> Result<f64, MetricsError> {
    if offsets.is_empty() {
        return Err(MetricsError::ShortSeries);
    }
    let ms = offsets.iter().map(|v| v * v).sum::<f64>() / offsets.len() as f64;
    Ok(100.0 * (1.0 - ms.sqrt()))
}

pub const DEFAULT_COMFORT_SCALE: f64 = 20.0;

/// Lateral jerk by central differences, one-sided at the ends.
pub fn jerk(accel: &[f64], dt: f64) -> Vec<f64> {
    let n = accel.len();
    (0..n)
        .map(|i| match i {
            0 => (accel[1] - accel[0]) / dt,
            i if i == n - 1 => (accel[n - 1] - accel[n - 2]) / dt,
            i => (accel[i + 1] - accel[i - 1]) / (2.0 * dt),
        })
        .collect()
}

/// `100 - k RMS(jerk)`.
pub fn comfort(accel: &[f64], dt: f64, k: f64) -> Result<f64, MetricsError> {
    if accel.len() < 2 {
        return Err(MetricsError::ShortSeries);
    }
    let j = jerk(accel, dt);
    let ms = j.iter().map(|v| v * v).sum::<f64>() / j.len() as f64;
    Ok(100.0 - k * ms.sqrt())
}

/// Mean lateral offsets, left positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapaInputs {
    pub y_l: f64,
    pub y_r: f64,
    pub y_hl: f64,
    pub y_hr: f64,
}

pub fn mapa_score(m: &MapaInputs) -> Result<f64, MetricsError> {
    if m.y_hl == 0.0 || m.y_hr == 0.0 {
        return Err(MetricsError::ZeroHumanBias(m.y_hl, m.y_hr));
    }
    let avg = (m.y_l + m.y_r) / 2.0;
    Ok(0.5 * ((m.y_l - avg) / m.y_hl + (m.y_r - avg) / m.y_hr).abs() * 100.0)
}

/// Steps outside reset cooldown.
fn driving_steps(report: &ResimReport) -> impl Iterator<Item = (usize, &crate::resim::StepRecord)> {
    report.steps.iter().enumerate().filter(|(_, s)| !s.cooldown)
}

/// Arc-length weighted mean offset over steps outside cooldown.
pub fn mean_offset(report: &ResimReport) -> f64 {
    let s = &report.steps;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, r) in driving_steps(report) {
        let next = s.get(i + 1).map_or(report.distance_m, |n| n.arc_length_m);
        let ds = (next - r.arc_length_m).max(0.0);
        num += r.offset_m * ds;
        den += ds;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Station-weighted mean of the recorded offsets up to the drivable end.
pub fn human_mean_offset(rec: &Recording) -> f64 {
    let end = drivable_end(rec);
    let t = &rec.ticks;
    let (mut num, mut den) = (0.0, 0.0);
    for w in t.windows(2).filter(|w| w[0].station < end) {
        let ds = w[1].station - w[0].station;
        num += 0.5 * (w[0].offset + w[1].offset) * ds;
        den += ds;
    }
    num / den.max(1e-12)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub distance_km: f64,
    pub mdbf: Mdbf,
    pub precision_pct: f64,
    pub comfort: f64,
    pub mapa_pct: Option<f64>,
    pub boundary_touch: usize,
    pub warp_invalid: usize,
}

impl MetricSummary {
    pub fn from_report(report: &ResimReport, comfort_scale: f64) -> Result<Self, MetricsError> {
        let offsets: Vec<f64> = driving_steps(report).map(|(_, s)| s.offset_m).collect();
        let accel: Vec<f64> = report.steps.iter().map(|s| s.lateral_accel).collect();
        Ok(Self {
            distance_km: report.distance_m / 1000.0,
            mdbf: mdbf(report),
            precision_pct: precision(&offsets)?,
            comfort: comfort(&accel, report.dt_s, comfort_scale)?,
            mapa_pct: None,
            boundary_touch: report.count(FailureCause::BoundaryTouch),
            warp_invalid: report.count(FailureCause::WarpInvalid),
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "distance_km {:.6}", self.distance_km);
        let _ = match self.mdbf {
            Mdbf::Km(k) => writeln!(s, "mdbf_km {k:.6}"),
            Mdbf::Infinite { .. } => writeln!(s, "mdbf_km inf"),
        };
        let _ = writeln!(s, "precision_pct {:.4}", self.precision_pct);
        let _ = writeln!(s, "comfort {:.4}", self.comfort);
        let _ = match self.mapa_pct {
            Some(m) => writeln!(s, "mapa_pct {m:.4}"),
            None => writeln!(s, "mapa_pct none"),
        };
        let _ = writeln!(s, "failures_boundary_touch {}", self.boundary_touch);
        let _ = writeln!(s, "failures_warp_invalid {}", self.warp_invalid);
        s
    }
}

/// Per-step time series as CSV.
pub fn series_csv(report: &ResimReport) -> String {
    let mut s = String::from("t,arc_length_m,station_m,offset_m,lateral_accel,steering,frame,cooldown\n");
    for r in &report.steps {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.t, r.arc_length_m, r.station_m, r.offset_m, r.lateral_accel, r.steering, r.frame, r.cooldown as u8
        );
    }
    s
}

/// Biased-drive protocol: the human keeps `bias_fraction` of the wheel
/// margin toward one edge, then the other.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapaProtocol {
    pub bias_fraction: f64,
    pub lateral_noise_sd_m: f64,
    pub speed_mps: f64,
    pub frame_rate_hz: f64,
    pub seed: u64,
}

impl Default for MapaProtocol {
    fn default() -> Self {
        Self {
            bias_fraction: 0.8,
            lateral_noise_sd_m: 0.1,
            speed_mps: 20.0,
            frame_rate_hz: 10.0,
            seed: 7,
        }
    }
}

impl MapaProtocol {
    pub fn bias_m(&self, lane_half: f64, vehicle: &VehicleSpec) -> f64 {
        self.bias_fraction * (lane_half - vehicle.track_m / 2.0)
    }
}

/// The two biased recordings of the protocol: left first.
pub fn mapa_recordings(
    scene: &Arc<WorldScene>,
    rig: &CameraRig,
    protocol: &MapaProtocol,
    vehicle: &VehicleSpec,
    config_hash: &str,
) -> Result<(Recording, Recording), MetricsError> {
    if !(protocol.bias_fraction > 0.0 && protocol.bias_fraction < 1.0) {
        return Err(MetricsError::InvalidProtocol("bias fraction must be in (0, 1)".into()));
    }
    let bias = protocol.bias_m(scene.road.lane_half(), vehicle);
    let make = |sign: f64, id: &str, seed: u64| -> Result<Recording, MetricsError> {
        let drive = DriveSpec {
            speed_mps: protocol.speed_mps,
            lateral_noise_sd_m: protocol.lateral_noise_sd_m,
            bias_m: sign * bias,
            ..DriveSpec::default()
        };
        let trace = simulate_human_drive(&scene.road, &drive, seed)?;
        Ok(record(scene.clone(), &trace, *rig, protocol.frame_rate_hz, id, config_hash)?)
    };
    Ok((
        make(1.0, "mapa-left", protocol.seed)?,
        make(-1.0, "mapa-right", protocol.seed.wrapping_add(1))?,
    ))
}

#[derive(Debug, Clone)]
pub struct MapaOutcome {
    pub inputs: MapaInputs,
    pub score_pct: f64,
    pub left: ResimReport,
    pub right: ResimReport,
}

/// Runs the policy on both biased recordings (concurrently under
/// `Exec::Parallel`) and scores it.
#[allow(clippy::too_many_arguments)]
pub fn run_mapa_on(
    left: &Recording,
    right: &Recording,
    driver: Driver,
    name: &str,
    patch: &PatchSpec,
    vehicle: &VehicleSpec,
    cfg: &ResimConfig,
    exec: Exec,
) -> Result<MapaOutcome, MetricsError> {
    let (l, r) = exec.join(
        || run_resim(left, driver, name, patch, vehicle, cfg),
        || run_resim(right, driver, name, patch, vehicle, cfg),
    );
    let (l, r) = (l?, r?);
    let inputs = MapaInputs {
        y_l: mean_offset(&l),
        y_r: mean_offset(&r),
        y_hl: human_mean_offset(left),
        y_hr: human_mean_offset(right),
    };
    Ok(MapaOutcome {
        score_pct: mapa_score(&inputs)?,
        inputs,
        left: l,
        right: r,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn run_mapa_experiment(
    scene: &Arc<WorldScene>,
    rig: &CameraRig,
    driver: Driver,
    name: &str,
    protocol: &MapaProtocol,
    patch: &PatchSpec,
    vehicle: &VehicleSpec,
    cfg: &ResimConfig,
    config_hash: &str,
    exec: Exec,
) -> Result<MapaOutcome, MetricsError> {
    let (left, right) = mapa_recordings(scene, rig, protocol, vehicle, config_hash)?;
    run_mapa_on(&left, &right, driver, name, patch, vehicle, cfg, exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resim::{FailureEvent, StepRecord};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn worked_example() {
        let m = MapaInputs {
            y_l: 0.5,
            y_r: -0.5,
            y_hl: 1.0,
            y_hr: -1.0,
        };
        assert_eq!(mapa_score(&m).unwrap(), 50.0);
        let full = MapaInputs { y_l: 1.0, y_r: -1.0, ..m };
        assert_eq!(mapa_score(&full).unwrap(), 100.0);
        assert_eq!(mapa_score(&MapaInputs { y_l: 0.3, y_r: 0.3, ..m }).unwrap(), 0.0);
        assert!(mapa_score(&MapaInputs { y_hl: 0.0, ..m }).is_err());
    }

    #[test]
    fn mapa_mirror_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let m = MapaInputs {
                y_l: rng.random_range(-1.0..1.0),
                y_r: rng.random_range(-1.0..1.0),
                y_hl: rng.random_range(0.1..1.0),
                y_hr: rng.random_range(-1.0..-0.1),
            };
            let mirror = MapaInputs {
                y_l: -m.y_r,
                y_r: -m.y_l,
                y_hl: -m.y_hr,
                y_hr: -m.y_hl,
            };
            assert!((mapa_score(&m).unwrap() - mapa_score(&mirror).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn precision_examples() {
        assert_eq!(precision(&[0.0; 10]).unwrap(), 100.0);
        assert!((precision(&[0.2; 10]).unwrap() - 80.0).abs() < 1e-12);
        assert!((precision(&[-0.2; 10]).unwrap() - 80.0).abs() < 1e-12);
        assert!(precision(&[2.0]).unwrap() < 0.0);
        assert!(precision(&[]).is_err());
    }

    #[test]
    fn comfort_examples() {
        assert_eq!(comfort(&[0.7; 50], 0.05, 20.0).unwrap(), 100.0);
        let ramp: Vec<f64> = (0..100).map(|i| i as f64 * 0.05).collect();
        assert!((comfort(&ramp, 0.05, 20.0).unwrap() - 80.0).abs() < 1e-9);
        let (a, w, dt) = (0.8, 1.3, 1e-3);
        let n = (2.0 * std::f64::consts::PI / w * 20.0 / dt) as usize;
        let s: Vec<f64> = (0..n).map(|i| a * (w * i as f64 * dt).sin()).collect();
        let rms = (100.0 - comfort(&s, dt, 1.0).unwrap()).abs();
        assert!((rms - a * w / 2f64.sqrt()).abs() < 1e-3, "{rms}");
        assert!(comfort(&[1.0], 0.1, 20.0).is_err());
    }

    fn fixture() -> ResimReport {
        let steps = (0..10)
            .map(|i| StepRecord {
                t: i as f64 * 0.1,
                arc_length_m: i as f64,
                station_m: i as f64,
                offset_m: if i < 5 { 0.2 } else { -0.4 },
                lateral_accel: 0.0,
                steering: 0.0,
                frame: i,
                cooldown: i == 9,
            })
            .collect();
        ResimReport {
            recording: "r".into(),
            config_hash: String::new(),
            policy: "p".into(),
            dt_s: 0.1,
            distance_m: 30_000.0,
            failures: (0..3)
                .map(|k| FailureEvent {
                    arc_length_m: 1000.0 * k as f64,
                    cause: if k == 0 { FailureCause::WarpInvalid } else { FailureCause::BoundaryTouch },
                    step: k,
                })
                .collect(),
            steps,
            predictions: vec![],
        }
    }

    #[test]
    fn mdbf_and_summary() {
        let r = fixture();
        assert_eq!(mdbf(&r), Mdbf::Km(10.0));
        assert_eq!(mdbf_from(5000.0, 0), Mdbf::Infinite { distance_km: 5.0 });
        assert!(Mdbf::Infinite { distance_km: 1.0 }.at_least(&Mdbf::Km(100.0)));
        assert!(!Mdbf::Km(1.0).at_least(&Mdbf::Km(2.0)));
        let s = MetricSummary::from_report(&r, 20.0).unwrap();
        assert_eq!((s.boundary_touch, s.warp_invalid), (2, 1));
        let rms = ((5.0 * 0.04 + 4.0 * 0.16) / 9.0f64).sqrt();
        assert!((s.precision_pct - 100.0 * (1.0 - rms)).abs() < 1e-12);
        assert_eq!(s.comfort, 100.0);
    }

    #[test]
    fn mean_offset_excludes_cooldown() {
        let mut r = fixture();
        r.distance_m = 10.0;
        // Steps 0..9 each span 1 m; step 9 is in cooldown.
        let want = (5.0 * 0.2 - 4.0 * 0.4) / 9.0;
        assert!((mean_offset(&r) - want).abs() < 1e-12);
    }
}
