//! `safeq` command line: `train`, `eval`, and `oracle-check` subcommands.
//!
//! Configuration comes from an optional TOML file plus overrides. Any flag
//! of the form `--section.key value` (a dotted path) is applied onto the
//! configuration tree, as is the repeatable `--set section.key=value`.
//! Shortcut flags cover the common knobs. Exit codes: 0 on success, 1 when
//! an acceptance-style check fails or a run errors out, 2 on usage or
//! configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use safeq_cli::commands::{cmd_eval, cmd_oracle_check, cmd_train};
use safeq_cli::config::load_config;

#[derive(Parser)]
#[command(name = "safeq", version, about = "Constrained Q-learning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent (or team) on the configured environment.
    Train(RunArgs),
    /// Evaluate trained checkpoints greedily, exploration off.
    Eval(EvalArgs),
    /// Compare the tabular learner against the exact oracle on seeded
    /// random instances.
    OracleCheck(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Environment: uav, ris, or cmdp.
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Output directory (default: $SAFEQ_OUT/<env>-seed<seed>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted-path override, e.g. --set agent.batch_size=64. Repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Checkpoint file (single agent) or training output directory.
    #[arg(long)]
    checkpoint: PathBuf,
}

impl RunArgs {
    fn overrides(&self, dotted: &[(String, String)]) -> Result<Vec<(String, String)>, String> {
        let mut out = Vec::new();
        if let Some(env) = &self.env {
            out.push(("run.env".to_string(), format!("\"{env}\"")));
        }
        if let Some(seed) = self.seed {
            out.push(("run.seed".to_string(), seed.to_string()));
        }
        if let Some(episodes) = self.episodes {
            out.push(("run.episodes".to_string(), episodes.to_string()));
        }
        if let Some(gamma) = self.gamma {
            out.push(("agent.gamma".to_string(), gamma.to_string()));
        }
        if let Some(out_dir) = &self.out {
            out.push((
                "run.out_dir".to_string(),
                format!("\"{}\"", out_dir.display()),
            ));
        }
        for entry in &self.set {
            let (key, value) = entry
                .split_once('=')
                .ok_or_else(|| format!("--set expects PATH=VALUE, got `{entry}`"))?;
            out.push((key.to_string(), value.to_string()));
        }
        out.extend(dotted.iter().cloned());
        Ok(out)
    }
}

/// Pull `--section.key value` pairs out of the raw argument list before clap
/// sees them; dotted long flags mirror configuration paths.
fn extract_dotted_flags(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>, Option<String>) {
    let mut rest = Vec::with_capacity(args.len());
    let mut dotted = Vec::new();
    let mut error = None;
    let mut iter = args.into_iter().peekable();
    while let Some(arg) = iter.next() {
        let key = arg.strip_prefix("--").unwrap_or("");
        if key.contains('.') && !key.contains('=') {
            match iter.next() {
                Some(value) => dotted.push((key.to_string(), value)),
                None => error = Some(format!("flag --{key} is missing a value")),
            }
        } else if let Some((k, v)) = key.contains('.').then(|| key.split_once('=')).flatten() {
            dotted.push((k.to_string(), v.to_string()));
        } else {
            rest.push(arg);
        }
    }
    (rest, dotted, error)
}

fn main() -> ExitCode {
    let (args, dotted, parse_error) = extract_dotted_flags(std::env::args().collect());
    if let Some(message) = parse_error {
        eprintln!("error: {message}");
        return ExitCode::from(2);
    }
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with success codes
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(2),
            };
        }
    };

    let (run_args, checkpoint) = match &cli.command {
        Command::Train(a) | Command::OracleCheck(a) => (a, None),
        Command::Eval(a) => (&a.run, Some(a.checkpoint.clone())),
    };
    let overrides = match run_args.overrides(&dotted) {
        Ok(o) => o,
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::from(2);
        }
    };
    let config = match load_config(run_args.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };

    let outcome = match &cli.command {
        Command::Train(_) => cmd_train(&config).map(|_| true),
        Command::Eval(_) => cmd_eval(&config, &checkpoint.unwrap()).map(|_| true),
        Command::OracleCheck(_) => cmd_oracle_check(&config),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
