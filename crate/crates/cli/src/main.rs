use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fraclap_cli::{run, CliError, Command, RunConfig};

/// Perturbed fractional Laplacian laboratory on an interval.
#[derive(Debug, Parser)]
#[command(name = "fraclap", version)]
struct Args {
    command: Command,
    /// TOML file layered over the preset
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// overrides `seed` from the config
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "paper-desk")]
    preset: String,
    /// multiply the kernel constant in the symbol check (fault injection)
    #[arg(long)]
    corrupt_constant: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    if let Ok(n) = std::env::var("FRACLAP_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("configuration error: FRACLAP_THREADS must be a positive integer, got '{n}'");
                return ExitCode::from(2);
            }
        }
    }
    let result = RunConfig::load(&args.preset, args.config.as_deref())
        .map_err(CliError::from)
        .and_then(|mut cfg| {
            if let Some(s) = args.seed {
                cfg.seed = s;
            }
            if let Some(c) = args.corrupt_constant {
                cfg.verify.corrupt_constant = c;
                cfg.validate()?;
            }
            run(args.command, &cfg, &args.out)
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
