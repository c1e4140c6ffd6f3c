use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mmdl::synth::SynthConfig;
use mmdl::train::{gen_data, load_test_set, load_train_set, run_ablation, run_eval, run_training, write_log, TrainConfig};
use mmdl::{Error, Result};

#[derive(Parser)]
#[command(name = "mmdl", version, about = "Cross-domain embedding training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write train.csv and test.csv from a generator config.
    GenData(Common),
    /// Train and write a checkpoint plus a JSON-lines log.
    Train(Common),
    /// Score a checkpoint on the test split and write a JSON report.
    Eval(Common),
    /// Train and score the four component variants; write a CSV table.
    Ablate(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn train_config(args: &Common) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(args) => {
            let mut synth: SynthConfig = load(args.config.as_deref())?;
            if let Some(seed) = args.seed {
                synth.seed = seed;
            }
            let out = args.out.unwrap_or_else(|| PathBuf::from("data"));
            let (train, test) = gen_data(&synth, &out)?;
            println!("wrote {} train and {} test samples to {}", train.len(), test.len(), out.display());
        }
        Command::Train(args) => {
            let cfg = train_config(&args)?;
            let checkpoint = args
                .out
                .or_else(|| cfg.paths.checkpoint.clone())
                .unwrap_or_else(|| PathBuf::from("mmdl.ckpt"));
            let log_path = cfg
                .paths
                .log
                .clone()
                .unwrap_or_else(|| checkpoint.with_extension("log.jsonl"));
            let train = load_train_set(&cfg)?;
            let outcome = run_training(&cfg, &train)?;
            outcome.checkpoint.save(&checkpoint)?;
            write_log(&outcome.log, &log_path)?;
            println!("wrote {} and {}", checkpoint.display(), log_path.display());
        }
        Command::Eval(args) => {
            let cfg = train_config(&args)?;
            let checkpoint = cfg
                .paths
                .checkpoint
                .clone()
                .ok_or_else(|| Error::Config("eval needs paths.checkpoint".into()))?;
            let report_path = args
                .out
                .or_else(|| cfg.paths.report.clone())
                .unwrap_or_else(|| PathBuf::from("report.json"));
            let test = load_test_set(&cfg)?;
            let report = run_eval(&checkpoint, &test, &cfg.protocol, Some(cfg.n), Some(cfg.q))?;
            report.write_json(&report_path)?;
            println!("rank-1 {:.4}; wrote {}", report.rank1, report_path.display());
        }
        Command::Ablate(args) => {
            let cfg = train_config(&args)?;
            let out = args
                .out
                .or_else(|| cfg.paths.report.clone())
                .unwrap_or_else(|| PathBuf::from("ablation.csv"));
            let table = run_ablation(&cfg)?;
            table.write_csv(&out)?;
            if let Some(row) = table.rows.first() {
                eprintln!("test split fingerprint {}", row.test_fingerprint);
            }
            for row in &table.rows {
                println!("{:<18} rank-1 {:.4}  VR@{} {:.4}", row.variant.name(), row.rank1_median, table.far, row.vr_median);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code())
        }
    }
}
