//! Scripted end-to-end experiments: the MAPA story and the regular versus
//! multi-resolution comparison on a forked road.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::augmentation::{build_store, LabelSource, StoreSummary};
use crate::config::{ExperimentConfig, PatchConfig};
use crate::metrics::{mapa_recordings, mdbf_from, run_mapa_on, MapaInputs, Mdbf, MetricSummary};
use crate::par::Exec;
use crate::policy::{train_ridge, Driver, RidgeModel};
use crate::resim::run_resim;
use crate::world::{build_road, record, simulate_human_drive, Recording, WorldScene};
use crate::Error;

/// Builds the scene and records one human drive of it.
pub fn world_and_recording(cfg: &ExperimentConfig, id: &str, drive_seed: u64) -> Result<(Arc<WorldScene>, Recording), Error> {
    let scene = Arc::new(build_road(&cfg.world.world_spec(), cfg.seed)?);
    let rec = drive_recording(cfg, &scene, id, drive_seed)?;
    Ok((scene, rec))
}

pub fn drive_recording(cfg: &ExperimentConfig, scene: &Arc<WorldScene>, id: &str, drive_seed: u64) -> Result<Recording, Error> {
    let trace = simulate_human_drive(&scene.road, &cfg.world.drive, drive_seed)?;
    Ok(record(
        scene.clone(),
        &trace,
        cfg.rig.rig()?,
        cfg.rig.frame_rate_hz,
        id,
        &cfg.hash_hex(),
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoryVariant {
    pub name: &'static str,
    pub label_source: LabelSource,
    pub camera_weights: [f64; 3],
}

/// Human-path labels from the center camera, then centerline labels from
/// all three cameras.
pub const STORY_VARIANTS: [StoryVariant; 2] = [
    StoryVariant {
        name: "human_center",
        label_source: LabelSource::HumanPath,
        camera_weights: [0.0, 1.0, 0.0],
    },
    StoryVariant {
        name: "centerline_three",
        label_source: LabelSource::Centerline,
        camera_weights: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    },
];

#[derive(Debug, Clone)]
pub struct StoryRow {
    pub variant: StoryVariant,
    pub store: StoreSummary,
    pub mapa: MapaInputs,
    pub mapa_pct: f64,
    pub left: MetricSummary,
    pub right: MetricSummary,
}

#[derive(Debug, Clone)]
pub struct StoryResult {
    pub rows: Vec<StoryRow>,
    pub table: String,
    /// Every file written, in a fixed order.
    pub artifacts: Vec<PathBuf>,
}

fn store_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x5354_4f52
}

/// World with poles, one recording, two stores, two ridge models, MAPA for
/// both, and a comparison table. Artifacts go to `out`.
pub fn repro_mapa_story(cfg: &ExperimentConfig, out: &Path, exec: Exec) -> Result<StoryResult, Error> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let (scene, rec) = world_and_recording(cfg, "story-train", cfg.seed.wrapping_add(1))?;
    let rec = rec.with_frame_cache();
    let rig = cfg.rig.rig()?;
    let hash = cfg.hash_hex();
    let vehicle = cfg.resim.vehicle;
    let resim = cfg.resim.resim();
    let (left, right) = mapa_recordings(&scene, &rig, &cfg.metrics.mapa, &vehicle, &hash)?;
    let (left, right) = (left.with_frame_cache(), right.with_frame_cache());
    let mut rows = Vec::new();
    let mut artifacts = Vec::new();
    for v in STORY_VARIANTS {
        let mut aug = cfg.augment;
        aug.label_source = v.label_source;
        aug.camera_weights = v.camera_weights;
        let spec = aug.augment_spec(&rig.intrinsics, store_seed(cfg))?;
        let store = out.join(format!("store_{}.pnss", v.name));
        let summary = build_store(std::slice::from_ref(&rec), &spec, aug.samples_per_frame, &store, cfg.hash_bytes(), exec)?;
        let model = train_ridge(&store, cfg.train.lambda)?;
        let model_path = out.join(format!("model_{}.pnrm", v.name));
        model.save(&model_path)?;
        let o = run_mapa_on(&left, &right, Driver::Patch(&model), v.name, &spec.patch, &vehicle, &resim, exec)?;
        let mut reports = Vec::new();
        for (side, r) in [("left", &o.left), ("right", &o.right)] {
            let p = out.join(format!("mapa_{}_{side}.txt", v.name));
            std::fs::write(&p, r.to_text()).map_err(|e| Error::io(&p, e))?;
            reports.push(p);
        }
        artifacts.extend([store, model_path]);
        artifacts.extend(reports);
        rows.push(StoryRow {
            variant: v,
            store: summary,
            mapa: o.inputs,
            mapa_pct: o.score_pct,
            left: MetricSummary::from_report(&o.left, cfg.metrics.comfort_scale)?,
            right: MetricSummary::from_report(&o.right, cfg.metrics.comfort_scale)?,
        });
    }
    let table = story_table(&rows, &hash);
    let p = out.join("story.txt");
    std::fs::write(&p, &table).map_err(|e| Error::io(&p, e))?;
    artifacts.push(p);
    Ok(StoryResult { rows, table, artifacts })
}

pub fn story_table(rows: &[StoryRow], hash: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "config_hash {hash}");
    let _ = writeln!(
        s,
        "{:<18} {:>10} {:>9} {:>8} {:>8} {:>8} {:>8} {:>9} {:>8}",
        "model", "labels", "samples", "y_L", "y_R", "y_HL", "y_HR", "mapa_pct", "fails"
    );
    for r in rows {
        let label = match r.variant.label_source {
            LabelSource::Centerline => "centerline",
            LabelSource::HumanPath => "human",
        };
        let fails = r.left.boundary_touch + r.left.warp_invalid + r.right.boundary_touch + r.right.warp_invalid;
        let _ = writeln!(
            s,
            "{:<18} {:>10} {:>9} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>9.2} {:>8}",
            r.variant.name, label, r.store.records, r.mapa.y_l, r.mapa.y_r, r.mapa.y_hl, r.mapa.y_hr, r.mapa_pct, fails
        );
    }
    s
}

#[derive(Debug, Clone)]
pub struct ForkComparison {
    pub regular: Mdbf,
    pub multires: Mdbf,
    pub regular_failures: usize,
    pub multires_failures: usize,
    /// Mean precision score over the test drives.
    pub regular_precision: f64,
    pub multires_precision: f64,
    pub distance_km: f64,
    pub table: String,
}

/// Trains a ridge model on regular and on multi-resolution patches from the
/// same recording and resimulates both over the same test recordings.
/// `multires` must be a `PatchConfig::Multires`.
pub fn fork_comparison(
    cfg: &ExperimentConfig,
    multires: PatchConfig,
    test_drives: usize,
    out: &Path,
    exec: Exec,
) -> Result<ForkComparison, Error> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let (scene, rec) = world_and_recording(cfg, "fork-train", cfg.seed.wrapping_add(1))?;
    let rec = rec.with_frame_cache();
    let tests: Vec<Recording> = (0..test_drives)
        .map(|k| drive_recording(cfg, &scene, &format!("fork-test-{k}"), cfg.seed.wrapping_add(100 + k as u64)).map(Recording::with_frame_cache))
        .collect::<Result<_, _>>()?;
    let rig = cfg.rig.rig()?;
    let mut models: Vec<(RidgeModel, &str)> = Vec::new();
    for (name, patch) in [("regular", cfg.augment.patch), ("multires", multires)] {
        let mut aug = cfg.augment;
        aug.patch = patch;
        let spec = aug.augment_spec(&rig.intrinsics, store_seed(cfg))?;
        let store = out.join(format!("store_{name}.pnss"));
        build_store(std::slice::from_ref(&rec), &spec, aug.samples_per_frame, &store, cfg.hash_bytes(), exec)?;
        models.push((train_ridge(&store, cfg.train.lambda)?, name));
    }
    let resim = cfg.resim.resim();
    let jobs: Vec<(usize, usize)> = (0..models.len()).flat_map(|m| (0..tests.len()).map(move |t| (m, t))).collect();
    let reports = exec.map(jobs.len(), |j| {
        let (m, t) = jobs[j];
        let (model, name) = &models[m];
        run_resim(&tests[t], Driver::Patch(model), name, &model.patch, &cfg.resim.vehicle, &resim)
    });
    let mut dist = [0.0; 2];
    let mut fails = [0usize; 2];
    let mut prec = [0.0; 2];
    for (&(m, _), r) in jobs.iter().zip(reports) {
        let r = r?;
        dist[m] += r.distance_m;
        fails[m] += r.failures.len();
        prec[m] += MetricSummary::from_report(&r, cfg.metrics.comfort_scale)?.precision_pct / tests.len() as f64;
    }
    let regular = mdbf_from(dist[0], fails[0]);
    let multi = mdbf_from(dist[1], fails[1]);
    let mut table = String::new();
    let _ = writeln!(table, "config_hash {}", cfg.hash_hex());
    let _ = writeln!(table, "{:<10} {:>10} {:>9} {:>10} {:>32}", "patch", "km", "failures", "precision", "mdbf");
    for (k, (name, m)) in [("regular", regular), ("multires", multi)].iter().enumerate() {
        let _ = writeln!(
            table,
            "{:<10} {:>10.3} {:>9} {:>10.2} {:>32}",
            name,
            dist[k] / 1000.0,
            fails[k],
            prec[k],
            m.to_string()
        );
    }
    let p = out.join("fork_comparison.txt");
    std::fs::write(&p, &table).map_err(|e| Error::io(&p, e))?;
    Ok(ForkComparison {
        regular,
        multires: multi,
        regular_failures: fails[0],
        multires_failures: fails[1],
        regular_precision: prec[0],
        multires_precision: prec[1],
        distance_km: dist[0] / 1000.0,
        table,
    })
}
