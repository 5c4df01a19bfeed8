//! `wifipose` — the two-phase WiFi CSI pose estimation pipeline.
//!
//! Subcommands: `synth` (generate a labeled synthetic dataset), `pretrain`
//! (phase-1 self-supervised training), `train-decoder` (phase-2 pose decoder
//! on a frozen encoder), `eval` (metric report + prediction export),
//! `export-embeddings` (pooled per-sample embeddings as CSV) and `plot`
//! (loss curves, pose overlays).
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure.

mod plot;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use wifipose_core::checkpoint::Checkpoint;
use wifipose_core::dataset_io::{load_dataset, save_dataset};
use wifipose_core::synth::{skeleton_for_joints, synth_generate};
use wifipose_core::train;
use wifipose_core::{Dataset, Error, PipelineConfig, Result};

#[derive(Parser)]
#[command(name = "wifipose", version, about = "WiFi CSI pose estimation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic labeled synthetic CSI dataset.
    Synth {
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Pipeline config file (JSON or TOML); the [synth] section applies.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the generator seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Phase 1: self-supervised pre-training on CSI.
    Pretrain {
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory for pretrain.ckpt and pretrain_loss.csv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the pre-training seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Phase 2: train the pose decoder on a frozen encoder.
    TrainDecoder {
        #[arg(long)]
        dataset: PathBuf,
        /// Pre-training checkpoint providing the frozen encoder.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Use a randomly initialized (untrained) encoder instead.
        #[arg(long)]
        scratch: bool,
        /// Output directory for decoder.ckpt and decode_log.csv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the decode seed (and the scratch encoder seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a decode checkpoint: metric report plus raw predictions.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// Decode-phase checkpoint (contains the frozen encoder).
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output directory for report.json and predictions.f32; when
        /// omitted the report prints to stdout only.
        #[arg(long)]
        out: Option<PathBuf>,
        /// PCK thresholds, comma-separated percentages.
        #[arg(long, default_value = "20,30,40,50")]
        alphas: String,
    },
    /// Export pooled per-sample embeddings as CSV.
    ExportEmbeddings {
        #[arg(long)]
        dataset: PathBuf,
        /// Checkpoint with encoder parameters (either phase).
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output directory for embeddings.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render PNG plots from pipeline outputs.
    Plot {
        #[command(subcommand)]
        kind: PlotKind,
    },
}

#[derive(Subcommand)]
enum PlotKind {
    /// Loss curves from a training log CSV.
    Loss {
        /// pretrain_loss.csv or decode_log.csv.
        #[arg(long)]
        log: PathBuf,
        /// Output PNG path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Predicted-vs-ground-truth skeleton overlay for one sample.
    Pose {
        #[arg(long)]
        dataset: PathBuf,
        /// predictions.f32 written by `eval --out`.
        #[arg(long)]
        predictions: PathBuf,
        /// Sample index.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::from_file(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn open_dataset(path: &Path) -> Result<Dataset> {
    load_dataset(path)
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn parse_alphas(raw: &str) -> Result<Vec<f64>> {
    let alphas: Vec<f64> = raw
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("invalid PCK alpha '{s}'")))
        })
        .collect::<Result<_>>()?;
    if alphas.is_empty() || alphas.iter().any(|&a| a <= 0.0) {
        return Err(Error::config("PCK alphas must be positive"));
    }
    Ok(alphas)
}

fn write_predictions(path: &Path, preds: &[ndarray::Array2<f64>]) -> Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for p in preds {
        for &v in p.iter() {
            w.write_all(&(v as f32).to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, config, seed } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.synth.seed = s;
            }
            let (meta, samples, poses) = synth_generate(&cfg.synth)?;
            let skeleton = skeleton_for_joints(cfg.synth.joints)?;
            save_dataset(&out, &meta, &skeleton, &samples, &poses)?;
            println!(
                "wrote {} samples ({} sequences, {} classes) to {}",
                meta.num_samples,
                meta.sequences.len(),
                cfg.synth.motion_classes,
                out.display()
            );
            Ok(())
        }
        Command::Pretrain { dataset, out, config, seed } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.pretrain.seed = s;
            }
            let ds = open_dataset(&dataset)?;
            ensure_dir(&out)?;
            let log_path = out.join("pretrain_loss.csv");
            let (ckpt, logs) = train::pretrain_run(&cfg, &ds, Some(&log_path))?;
            let ckpt_path = out.join("pretrain.ckpt");
            ckpt.save(&ckpt_path)?;
            let last = logs.last().expect("at least one epoch");
            println!(
                "pre-trained {} steps over {} epochs; final loss {:.6} (mask {:.6}, cl {:.6}, unif {:.6})",
                ckpt.step, logs.len(), last.total, last.l_mask, last.l_cl, last.l_unif
            );
            println!("checkpoint: {}", ckpt_path.display());
            Ok(())
        }
        Command::TrainDecoder { dataset, checkpoint, scratch, out, config, seed } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.decode.seed = s;
            }
            let ds = open_dataset(&dataset)?;
            let pre = match (checkpoint, scratch) {
                (Some(_), true) => {
                    return Err(Error::config("--checkpoint and --scratch are mutually exclusive"))
                }
                (Some(path), false) => Checkpoint::load(&path)?,
                (None, true) => {
                    let s = seed.unwrap_or(cfg.pretrain.seed);
                    train::init_pretrain_checkpoint(&cfg, &ds, s)?
                }
                (None, false) => {
                    return Err(Error::config(
                        "train-decoder needs --checkpoint <file> or --scratch",
                    ))
                }
            };
            ensure_dir(&out)?;
            let log_path = out.join("decode_log.csv");
            let (ckpt, logs) = train::decode_train_run(&cfg, &pre, &ds, Some(&log_path))?;
            let ckpt_path = out.join("decoder.ckpt");
            ckpt.save(&ckpt_path)?;
            let last = logs.last().expect("at least one epoch");
            println!(
                "trained decoder for {} steps; final train loss {:.6}, validation MPJPE {:.3}",
                ckpt.step, last.train_loss, last.val_mpjpe
            );
            println!("checkpoint: {}", ckpt_path.display());
            Ok(())
        }
        Command::Eval { dataset, checkpoint, out, alphas } => {
            let alphas = parse_alphas(&alphas)?;
            let ds = open_dataset(&dataset)?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            let (report, preds) = train::evaluate_run(&ckpt, &ds, &alphas)?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::data(format!("failed to serialize report: {e}")))?;
            if let Some(out) = out {
                ensure_dir(&out)?;
                let report_path = out.join("report.json");
                std::fs::write(&report_path, &json).map_err(|e| Error::io(&report_path, e))?;
                write_predictions(&out.join("predictions.f32"), &preds)?;
                println!("report: {}", report_path.display());
            }
            println!("{json}");
            Ok(())
        }
        Command::ExportEmbeddings { dataset, checkpoint, out } => {
            let ds = open_dataset(&dataset)?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            let rows = train::compute_embeddings(&ckpt, &ds)?;
            ensure_dir(&out)?;
            let path = out.join("embeddings.csv");
            let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            train::write_embeddings_csv(&rows, std::io::BufWriter::new(file))?;
            println!("wrote {} embeddings to {}", rows.len(), path.display());
            Ok(())
        }
        Command::Plot { kind } => match kind {
            PlotKind::Loss { log, out } => {
                plot::plot_loss_csv(&log, &out)?;
                println!("wrote {}", out.display());
                Ok(())
            }
            PlotKind::Pose { dataset, predictions, index, out } => {
                let ds = open_dataset(&dataset)?;
                plot::plot_pose_overlay(&ds, &predictions, index, &out)?;
                println!("wrote {}", out.display());
                Ok(())
            }
        },
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
