use clap::Parser;
use membrane_cli::config::Format;
use membrane_cli::{emit, parse_config, run};
use std::path::PathBuf;
use std::process::ExitCode;

/// Run one experiment described by a TOML config.
#[derive(Parser)]
#[command(name = "membrane", version)]
struct Args {
    /// Path to the run config.
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

const CONFIG_ERROR: u8 = 2;
const EXPERIMENT_FAILURE: u8 = 1;

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    let envelope = match parse_config(&text).and_then(|cfg| run(&cfg)) {
        Ok(env) => env,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    let dir = args.out.unwrap_or_else(|| PathBuf::from(&envelope.config.output.dir));
    let formats = &envelope.config.output.formats;
    match emit(&envelope, &dir, formats.contains(&Format::Csv), formats.contains(&Format::Json)) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXPERIMENT_FAILURE);
        }
    }
    for f in &envelope.failures {
        eprintln!("failed: {}: {}", f.item, f.error);
    }
    if envelope.succeeded() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXPERIMENT_FAILURE)
    }
}
