use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use lanesim_core::augmentation::build_store;
use lanesim_core::config::ExperimentConfig;
use lanesim_core::experiment::{drive_recording, repro_mapa_story};
use lanesim_core::metrics::{run_mapa_experiment, series_csv, MetricSummary};
use lanesim_core::policy::{train_ridge, CheaterPolicy, Driver, OraclePolicy, RidgeModel};
use lanesim_core::resim::{run_resim, ResimReport};
use lanesim_core::world::{build_road, read_recording, write_recording, Recording};
use lanesim_core::Exec;
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "lanesim", version, about = "Synthetic recordings, augmentation, resimulation and MAPA experiments")]
struct Cli {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the scene and write its manifest.
    GenWorld {
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a human drive and write the recording.
    Record {
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a sample store from recordings.
    Augment {
        #[arg(long = "recording", required = true)]
        recordings: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a ridge model on a store.
    Train {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-loop run of a policy over a recording.
    Resim {
        #[arg(long)]
        recording: PathBuf,
        /// oracle, cheater, or model:<file>
        #[arg(long)]
        policy: String,
        #[arg(long)]
        report: PathBuf,
    },
    /// Left/right-biased MAPA experiment on the configured world.
    Mapa {
        #[arg(long)]
        policy: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metric summary of a resim report, plus its time series as CSV.
    Report {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// World, recording, two stores, two models, MAPA for both.
    ReproMapaStory {
        #[arg(long)]
        out: PathBuf,
    },
}

/// Input rejected before any work starts.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Invalid(String);

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentConfig::from_toml(&text).map_err(|e| Invalid(format!("{}: {e}", p.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| Invalid(e.to_string()))?;
    Ok(cfg)
}

enum Policy {
    Oracle,
    Cheater,
    Model(RidgeModel),
}

impl Policy {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Policy::Oracle),
            "cheater" => Ok(Policy::Cheater),
            _ => match s.strip_prefix("model:") {
                Some(f) => Ok(Policy::Model(
                    RidgeModel::load(Path::new(f)).with_context(|| format!("loading model {f}"))?,
                )),
                None => Err(Invalid(format!("unknown policy '{s}' (oracle, cheater, model:<file>)")).into()),
            },
        }
    }

    fn driver(&self) -> Driver<'_> {
        match self {
            Policy::Oracle => Driver::Privileged(&OraclePolicy),
            Policy::Cheater => Driver::Privileged(&CheaterPolicy),
            Policy::Model(m) => Driver::Patch(m),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Policy::Oracle => "oracle",
            Policy::Cheater => "cheater",
            Policy::Model(_) => "ridge",
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(d) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn world_manifest(cfg: &ExperimentConfig) -> Result<String> {
    let scene = build_road(&cfg.world.world_spec(), cfg.seed)?;
    let mut m = String::new();
    writeln!(m, "lanesim-world 1")?;
    writeln!(m, "config_hash {}", cfg.hash_hex())?;
    writeln!(m, "seed {}", cfg.seed)?;
    writeln!(m, "length_m {:e}", scene.road.length())?;
    writeln!(m, "segments {}", scene.road.segments.len())?;
    for g in &scene.road.segments {
        writeln!(m, "{:e} {:?}", g.station0, g.spec)?;
    }
    writeln!(m, "billboards {}", scene.billboards.len())?;
    for b in &scene.billboards {
        writeln!(
            m,
            "{:e} {:e} {:e} {:e} {:e} {:e}",
            b.base[0], b.base[1], b.yaw, b.half_width, b.height, b.albedo
        )?;
    }
    Ok(m)
}

fn run(cli: &Cli) -> Result<()> {
    let exec = Exec::default();
    match &cli.cmd {
        Cmd::GenWorld { out } => {
            let cfg = load_config(cli)?;
            let m = world_manifest(&cfg)?;
            write(&out.join("world_manifest.txt"), &m)?;
            write(&out.join("config.toml"), &cfg.to_toml())?;
            println!("{}", hex::encode(Sha256::digest(m.as_bytes())));
        }
        Cmd::Record { out } => {
            let cfg = load_config(cli)?;
            let scene = Arc::new(build_road(&cfg.world.world_spec(), cfg.seed)?);
            let rec = drive_recording(&cfg, &scene, "recording", cfg.seed.wrapping_add(1))?;
            write_recording(&rec, out, exec)?;
            println!("{} frames written to {}", rec.frame_count(), out.display());
        }
        Cmd::Augment { recordings, out } => {
            let cfg = load_config(cli)?;
            let recs: Vec<Recording> = recordings
                .iter()
                .map(|d| read_recording(d).with_context(|| format!("reading recording {}", d.display())))
                .collect::<Result<_>>()?;
            let spec = cfg.augment.augment_spec(&recs[0].rig.intrinsics, cfg.seed)?;
            let s = build_store(&recs, &spec, cfg.augment.samples_per_frame, out, cfg.hash_bytes(), exec)?;
            println!(
                "{} records, {} rejected ({:.3}), {} frames",
                s.records, s.rejected, s.rejection_rate, s.frames_used
            );
        }
        Cmd::Train { store, lambda, out } => {
            let cfg = load_config(cli)?;
            let lambda = lambda.unwrap_or(cfg.train.lambda);
            if !(lambda >= 0.0 && lambda.is_finite()) {
                bail!(Invalid(format!("lambda {lambda} must be finite and >= 0")));
            }
            let m = train_ridge(store, lambda)?;
            m.save(out)?;
            println!("model {}x{} written to {}", m.outputs(), m.inputs() + 1, out.display());
        }
        Cmd::Resim {
            recording,
            policy,
            report,
        } => {
            let cfg = load_config(cli)?;
            let policy = Policy::parse(policy)?;
            let rec = read_recording(recording).with_context(|| format!("reading recording {}", recording.display()))?;
            let patch = match &policy {
                Policy::Model(m) => m.patch,
                _ => cfg.augment.patch_spec(&rec.rig.intrinsics)?,
            };
            let r = run_resim(&rec, policy.driver(), policy.name(), &patch, &cfg.resim.vehicle, &cfg.resim.resim())?;
            write(report, &r.to_text())?;
            print!("{}", MetricSummary::from_report(&r, cfg.metrics.comfort_scale)?.to_text());
        }
        Cmd::Mapa { policy, out } => {
            let cfg = load_config(cli)?;
            let policy = Policy::parse(policy)?;
            let scene = Arc::new(build_road(&cfg.world.world_spec(), cfg.seed)?);
            let rig = cfg.rig.rig()?;
            let patch = match &policy {
                Policy::Model(m) => m.patch,
                _ => cfg.augment.patch_spec(&rig.intrinsics)?,
            };
            let o = run_mapa_experiment(
                &scene,
                &rig,
                policy.driver(),
                policy.name(),
                &cfg.metrics.mapa,
                &patch,
                &cfg.resim.vehicle,
                &cfg.resim.resim(),
                &cfg.hash_hex(),
                exec,
            )?;
            write(&out.join("mapa_left.txt"), &o.left.to_text())?;
            write(&out.join("mapa_right.txt"), &o.right.to_text())?;
            let i = o.inputs;
            let s = format!(
                "config_hash {}\ny_l {:.6}\ny_r {:.6}\ny_hl {:.6}\ny_hr {:.6}\nmapa_pct {:.4}\n",
                cfg.hash_hex(),
                i.y_l,
                i.y_r,
                i.y_hl,
                i.y_hr,
                o.score_pct
            );
            write(&out.join("mapa.txt"), &s)?;
            print!("{s}");
        }
        Cmd::Report { report, csv } => {
            let cfg = load_config(cli)?;
            let text = std::fs::read_to_string(report).with_context(|| format!("reading {}", report.display()))?;
            let r = ResimReport::from_text(&text).map_err(|e| Invalid(format!("{}: {e}", report.display())))?;
            print!("{}", MetricSummary::from_report(&r, cfg.metrics.comfort_scale)?.to_text());
            if let Some(c) = csv {
                write(c, &series_csv(&r))?;
            }
        }
        Cmd::ReproMapaStory { out } => {
            let cfg = load_config(cli)?;
            let r = repro_mapa_story(&cfg, out, exec)?;
            print!("{}", r.table);
        }
    }
    Ok(())
}

fn is_validation(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<Invalid>() || c.downcast_ref::<lanesim_core::Error>().is_some_and(|e| e.is_validation())
            || c.is::<lanesim_core::config::ConfigError>()
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_validation(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
