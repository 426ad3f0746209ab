use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod files;

use files::CliError;

/// Video curation pipeline: filtering, dynamic masking, structure from
/// motion and evaluation.
#[derive(Parser)]
#[command(name = "vidpose", version)]
struct Cli {
    /// TOML configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory, created when missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score filter signals: decisions CSV, plus PR points when labels are given.
    Filter {
        /// A signals JSON file or a directory of them.
        signals: PathBuf,
        /// JSON-lines of {"id", "suitable"}.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Dynamic masks from flow pairs and optional semantic label maps.
    Mask {
        /// Directory of fwd_NNNNN.dpfl / bwd_NNNNN.dpfl (pair starting at frame NNNNN).
        #[arg(long)]
        flows: Option<PathBuf>,
        /// Directory of labels_NNNNN.pgm class-id maps.
        #[arg(long)]
        labelmaps: Option<PathBuf>,
        #[arg(long)]
        num_frames: Option<u32>,
    },
    /// Mask-aware pairwise correspondences from tracklets.
    Correspond {
        #[arg(long)]
        tracklets: PathBuf,
        /// Directory of mask_NNNNN.pgm.
        #[arg(long)]
        masks: Option<PathBuf>,
        #[arg(long)]
        num_frames: Option<u32>,
    },
    /// Camera trajectory and scene report from tracklets or correspondences.
    Sfm {
        #[arg(long, conflicts_with = "correspondences", required_unless_present = "correspondences")]
        tracklets: Option<PathBuf>,
        #[arg(long, requires = "tracklets")]
        masks: Option<PathBuf>,
        #[arg(long)]
        correspondences: Option<PathBuf>,
        /// Intrinsics JSON.
        #[arg(long)]
        intrinsics: PathBuf,
        #[arg(long)]
        num_frames: Option<u32>,
    },
    /// ATE / RPE of predicted trajectories against ground truth.
    EvalTraj {
        /// Ground-truth trajectory file, or a directory of <video>.txt.
        #[arg(long)]
        gt: PathBuf,
        /// Predictions laid out like --gt; a missing video counts as a failed run.
        #[arg(long)]
        pred: PathBuf,
    },
    /// Per-video reprojection error of annotated correspondences.
    EvalSampson {
        #[arg(long)]
        pairs: PathBuf,
        /// Trajectory file, or a directory of <video>.txt.
        #[arg(long)]
        pred: PathBuf,
        /// Intrinsics JSON shared by every video, or a directory of <video>.json.
        #[arg(long)]
        intrinsics: PathBuf,
    },
    /// Write a synthetic scene and the filter fixture corpus.
    Synth {
        /// orbit, forward-arc, pan, static or linear.
        #[arg(long, default_value = "orbit")]
        kind: String,
        #[arg(long)]
        num_frames: Option<u32>,
        #[arg(long)]
        noise_px: Option<f64>,
        /// Also write dense flows.
        #[arg(long)]
        flows: bool,
    },
    /// Precision/recall curve and AP from scores and labels.
    PrCurve {
        /// CSV report with a `score` column, such as the filter decisions.
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().map_err(|e| CliError::Input(e.to_string()))?;
    }
    let config = files::load_config(cli.config.as_deref())?;
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::Input(format!("{}: {e}", cli.out.display())))?;
    let ctx = commands::Context { config, seed: cli.seed, out: cli.out };
    match cli.command {
        Command::Filter { signals, labels } => commands::filter(&ctx, &signals, labels.as_deref()),
        Command::Mask { flows, labelmaps, num_frames } => commands::mask(&ctx, flows.as_deref(), labelmaps.as_deref(), num_frames),
        Command::Correspond { tracklets, masks, num_frames } => commands::correspond(&ctx, &tracklets, masks.as_deref(), num_frames),
        Command::Sfm { tracklets, masks, correspondences, intrinsics, num_frames } => {
            commands::sfm(&ctx, tracklets.as_deref(), masks.as_deref(), correspondences.as_deref(), &intrinsics, num_frames)
        }
        Command::EvalTraj { gt, pred } => commands::eval_traj(&ctx, &gt, &pred),
        Command::EvalSampson { pairs, pred, intrinsics } => commands::eval_sampson(&ctx, &pairs, &pred, &intrinsics),
        Command::Synth { kind, num_frames, noise_px, flows } => commands::synth(&ctx, &kind, num_frames, noise_px, flows),
        Command::PrCurve { scores, labels } => commands::pr_curve(&ctx, &scores, &labels),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with 2 on usage errors, matching the input-error code
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
