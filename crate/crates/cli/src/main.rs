mod args;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command, CommonArgs};
use config::{config_error, ConfigError, RunConfig};

fn resolve(common: &CommonArgs, extra: &[(&str, Option<String>)]) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for kv in &common.synthetic {
        let key = kv.split_once('=').map_or(kv.as_str(), |(k, _)| k.trim());
        commands::check_synthetic_key(key)?;
    }
    let pairs = common.key_values().map_err(config_error)?;
    for (key, value) in pairs.iter().chain(&common.overrides()) {
        cfg.set(key, value)?;
    }
    for (key, value) in extra {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("LOOPBIAS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| config_error(format!("LOOPBIAS_THREADS: expected a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| anyhow::anyhow!("thread pool: {e}"))
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    let dir = match cli.command {
        Command::GenData { common, binary } => commands::gen_data(&resolve(&common, &[])?, binary)?,
        Command::Train { common } => commands::train(&resolve(&common, &[])?)?,
        Command::Eval { common, checkpoint, p } => {
            commands::eval(&resolve(&common, &[("checkpoint", path(&checkpoint)), ("p", p)])?)?
        }
        Command::Sweep { common, p_grid } => commands::sweep(&resolve(&common, &[("p_grid", p_grid)])?)?,
        Command::Loop { common } => commands::run_loop(&resolve(&common, &[])?)?,
        Command::Report { run, format } => {
            print!("{}", commands::report(&run, format.as_deref())?);
            return Ok(());
        }
    };
    println!("{}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
