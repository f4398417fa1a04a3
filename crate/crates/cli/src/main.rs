use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use pcconf_core::pipeline::{run_command, Command, RunConfig};
use pcconf_core::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Simulate,
    Pairscore,
    Train,
    EvalCovariate,
    EvalFusion,
    Rank,
    Report,
    /// Every stage in order.
    All,
}

/// Predictive-confidence pipeline on a synthetic verification world.
#[derive(Debug, Parser)]
#[command(name = "pcconf", version)]
struct Cli {
    command: Cmd,
    /// Run configuration (`section.key = value` lines). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Run directory. Falls back to $PCCONF_OUT, then the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `section.key=value` overrides applied after the config file.
    overrides: Vec<String>,
}

fn commands(cmd: Cmd) -> Vec<Command> {
    match cmd {
        Cmd::Simulate => vec![Command::Simulate],
        Cmd::Pairscore => vec![Command::Pairscore],
        Cmd::Train => vec![Command::Train],
        Cmd::EvalCovariate => vec![Command::EvalCovariate],
        Cmd::EvalFusion => vec![Command::EvalFusion],
        Cmd::Rank => vec![Command::Rank],
        Cmd::Report => vec![Command::Report],
        Cmd::All => Command::ALL.to_vec(),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_ini(&text)?
        }
        None => RunConfig::default(),
    };
    config.apply_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn out_dir(cli: &Cli, config: &RunConfig) -> Result<PathBuf, Error> {
    cli.out
        .clone()
        .or_else(|| std::env::var_os("PCCONF_OUT").filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| config.output.clone())
        .ok_or_else(|| Error::InvalidConfig("no output directory: pass --out, set PCCONF_OUT or `output`".into()))
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let config = load_config(cli)?;
    let dir = out_dir(cli, &config)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidConfig("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| {
        for command in commands(cli.command) {
            let manifest = run_command(command, &config, &dir)?;
            println!(
                "{command}: wrote {} artifact(s) to {}",
                manifest.outputs.len(),
                dir.display()
            );
        }
        Ok(())
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or_default();
            eprintln!("pcconf: error exit=1 kind=usage message={first:?}");
            return ExitCode::from(1);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            eprintln!(
                "pcconf: error exit={code} kind={} message={:?}",
                e.kind(),
                e.to_string()
            );
            ExitCode::from(code as u8)
        }
    }
}
