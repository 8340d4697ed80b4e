use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fishcorpus::pipeline::{self, Outcome, PipelineConfig, DIAGNOSTICS_FILE, PER_IMAGE_RECALL_FILE};
use fishcorpus::{Result, Split};

#[derive(Parser)]
#[command(name = "fishcorpus", version, about = "Audit, split, diagnose and score underwater fish detection corpora")]
struct Cli {
    /// Pipeline config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Manifest path; defaults to <out>/manifest.json.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for ingest and diagnose.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Split seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// IoU threshold for the operating point, in (0,1).
    #[arg(long, global = true)]
    iou_thresh: Option<f64>,
    /// Confidence cutoff for the operating point.
    #[arg(long, global = true)]
    conf_thresh: Option<f64>,
    /// Max Hamming distance between perceptual hashes of duplicates.
    #[arg(long, global = true)]
    phash_thresh: Option<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan sources, parse labels and build the manifest.
    Ingest,
    /// Remove path, perceptual and exact duplicates.
    Dedup,
    /// Assign stratified train/val/test splits.
    Split,
    /// Compute per-image visual and scene diagnostics.
    Diagnose,
    /// Score predictions against manifest ground truth.
    Eval {
        /// Directory of `<image_id>.txt` prediction files.
        #[arg(long)]
        predictions: PathBuf,
        /// Restrict to one split (train, val, test).
        #[arg(long)]
        split: Option<Split>,
    },
    /// Stratified recall, normalized metrics and correlations.
    Attribute {
        #[arg(long)]
        diagnostics: Option<PathBuf>,
        #[arg(long)]
        recall: Option<PathBuf>,
    },
    /// Throughput table from a latency log.
    EdgeReport {
        /// CSV with model,format,latency_ms columns.
        #[arg(long)]
        log: PathBuf,
    },
    /// Write the synthetic demo corpus.
    MakeToy {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn config_from(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = Some(j);
    }
    if let Some(s) = cli.seed {
        cfg.split.seed = s;
    }
    if let Some(t) = cli.iou_thresh {
        cfg.iou_threshold = t;
    }
    if let Some(t) = cli.conf_thresh {
        cfg.conf_threshold = t;
    }
    if let Some(t) = cli.phash_thresh {
        cfg.phash_threshold = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Outcome> {
    if let Command::MakeToy { dir } = &cli.command {
        let toy = fishcorpus::toy::write_toy_corpus(dir)?;
        println!("{}", toy.config_path.display());
        return Ok(Outcome::default());
    }
    let cfg = config_from(cli)?;
    let manifest = cli.manifest.clone().unwrap_or_else(|| cfg.manifest_path());
    match &cli.command {
        Command::Ingest => pipeline::cmd_ingest(&cfg, &manifest),
        Command::Dedup => pipeline::cmd_dedup(&cfg, &manifest),
        Command::Split => pipeline::cmd_split(&cfg, &manifest),
        Command::Diagnose => pipeline::cmd_diagnose(&cfg, &manifest),
        Command::Eval { predictions, split } => pipeline::cmd_eval(&cfg, &manifest, predictions, *split),
        Command::Attribute { diagnostics, recall } => {
            let d = diagnostics.clone().unwrap_or_else(|| cfg.out_dir.join(DIAGNOSTICS_FILE));
            let r = recall.clone().unwrap_or_else(|| cfg.out_dir.join(PER_IMAGE_RECALL_FILE));
            pipeline::cmd_attribute(&cfg, &d, &r)
        }
        Command::EdgeReport { log } => pipeline::cmd_edge_report(&cfg, log),
        Command::MakeToy { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            for p in &outcome.written {
                println!("{}", p.display());
            }
            if outcome.issues > 0 {
                eprintln!("{} validation issue(s); see the reports above", outcome.issues);
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
