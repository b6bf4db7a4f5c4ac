//! Configuration-driven front end for the `nonlocal` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::{Path, PathBuf};

pub use commands::Subcommand;
pub use error::CliError;

use output::{Artifacts, Manifest};

/// Failure together with the directory that should receive `error.log`.
#[derive(Debug)]
pub struct Failure {
    pub error: CliError,
    pub directory: PathBuf,
}

/// Loads and validates the config, runs `sub`, then writes artifacts and the manifest.
///
/// `out_override` wins over `output.directory`. Nothing is written unless the
/// command succeeds.
pub fn execute(
    sub: Subcommand,
    config_path: &Path,
    out_override: Option<&Path>,
) -> Result<PathBuf, Failure> {
    let fallback = out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("out"));
    let fail = |error: CliError, directory: PathBuf| Failure { error, directory };
    let bytes = std::fs::read(config_path).map_err(|e| {
        fail(
            CliError::Config(format!("{}: {e}", config_path.display())),
            fallback.clone(),
        )
    })?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| {
        fail(
            CliError::Config("config is not UTF-8".into()),
            fallback.clone(),
        )
    })?;
    let cfg = config::parse(&text, config_path).map_err(|e| fail(e, fallback.clone()))?;
    let dir = out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output.directory.clone());
    let mut art = Artifacts::default();
    let seeds = commands::run(sub, &cfg, &mut art).map_err(|e| fail(e, dir.clone()))?;
    let manifest = Manifest::new(sub.name(), config_path, &bytes, seeds);
    output::commit(&dir, &art, manifest).map_err(|e| fail(e, dir.clone()))
}
