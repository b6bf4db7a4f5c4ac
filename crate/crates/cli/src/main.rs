use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nonlocal_cli::{execute, output, CliError, Subcommand};

/// Nonlocal logistic equations with harvesting: operators, steady states,
/// evolution and Monte Carlo checks.
#[derive(Parser)]
#[command(name = "nonlocal", version)]
struct Cli {
    #[arg(value_enum)]
    command: Subcommand,
    /// TOML config, or JSON when the file ends in `.json` or starts with `{`.
    config: PathBuf,
    /// Overrides `output.directory`.
    #[arg(long, env = "NONLOCAL_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let fallback = cli
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"));
    if let Some(w) = cli.workers {
        let pool = match w {
            0 => Err(CliError::Config("--workers must be >= 1".into())),
            _ => rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build_global()
                .map_err(|e| CliError::Config(e.to_string())),
        };
        if let Err(e) = pool {
            return report(&e, &fallback);
        }
    }
    match execute(cli.command, &cli.config, cli.output_dir.as_deref()) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(f) => report(&f.error, &f.directory),
    }
}

fn report(e: &CliError, dir: &std::path::Path) -> ExitCode {
    eprintln!("{}", e.log_line());
    if let Err(io) = output::write_error_log(dir, e) {
        eprintln!(
            "could not write {}: {io}",
            dir.join(output::ERROR_LOG).display()
        );
    }
    ExitCode::from(e.exit_code() as u8)
}
