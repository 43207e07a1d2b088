use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use qchannel::cli::{parse_list, run_benchmark, BenchmarkConfig, Experiment};
use qchannel::Result;

/// Sweep time steppers over step sizes and write error tables.
#[derive(Debug, Parser)]
#[command(name = "bench", version)]
struct Args {
    /// JSON benchmark configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset experiment: cat_prep, z_gate or photon_loss_cfl.
    #[arg(long)]
    experiment: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated Fock dimensions.
    #[arg(long)]
    dims: Option<String>,
    /// Comma-separated scheme tags.
    #[arg(long)]
    schemes: Option<String>,
}

fn load(args: &Args) -> Result<BenchmarkConfig> {
    let experiment = args.experiment.as_deref().map(str::parse::<Experiment>).transpose()?;
    let mut cfg = match (&args.config, experiment) {
        (Some(path), exp) => {
            let mut cfg = BenchmarkConfig::load(path)?;
            if let Some(exp) = exp {
                cfg.experiment = exp;
            }
            cfg
        }
        (None, Some(exp)) => BenchmarkConfig::preset(exp),
        (None, None) => {
            return Err(qchannel::Error::BadConfig(
                "either --config or --experiment is required".into(),
            ))
        }
    };
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(dims) = &args.dims {
        cfg.dims = parse_list(dims)?;
    }
    if let Some(schemes) = &args.schemes {
        cfg.schemes = parse_list(schemes)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = load(&args).and_then(|cfg| run_benchmark(&cfg));
    match result {
        Ok(out) => {
            println!("{} rows -> {}", out.rows.len(), out.csv_path.display());
            println!("metadata -> {}", out.meta_path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("bench: {e}");
            ExitCode::FAILURE
        }
    }
}
