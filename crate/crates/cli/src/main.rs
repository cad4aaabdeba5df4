use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::PossibleValuesParser;
use clap::Parser;

use openkpz_cli::config::parse_pairs;
use openkpz_cli::{exit, run_and_write, CliError, Experiment, RunConfig};

/// Numerical experiments for the open KPZ equation.
///
/// Any parameter of the chosen experiment can be set with `--key value`,
/// overriding the config file.
#[derive(Debug, Parser)]
#[command(name = "openkpz", version, after_help = experiment_list())]
struct Cli {
    #[arg(value_parser = PossibleValuesParser::new(Experiment::ALL.map(|e| e.name())))]
    experiment: String,

    /// Flat `key = value` file; `#` starts a comment line.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Master seed; required here or in the config file.
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,

    /// Directory for CSV output (default: results).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn experiment_list() -> String {
    let mut s = String::from("Experiments:\n");
    for e in Experiment::ALL {
        let keys: Vec<&str> = e.params().iter().map(|p| p.key).collect();
        s.push_str(&format!("  {:<20} {}\n  {:<20} keys: {}\n", e.name(), e.about(), "", keys.join(" ")));
    }
    s
}

const OWN_FLAGS: [&str; 4] = ["--config", "--seed", "--workers", "--out"];

/// Separates clap's own arguments from `--key value` parameter overrides.
fn split_args(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>), CliError> {
    let mut own = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    if let Some(bin) = it.next() {
        own.push(bin);
    }
    while let Some(a) = it.next() {
        let Some(body) = a.strip_prefix("--") else {
            own.push(a);
            continue;
        };
        let (key, inline) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (body.to_string(), None),
        };
        let flag = format!("--{key}");
        if OWN_FLAGS.contains(&flag.as_str()) || matches!(key.as_str(), "help" | "version" | "") {
            own.push(a);
            if inline.is_none() && OWN_FLAGS.contains(&flag.as_str()) {
                if let Some(v) = it.next() {
                    own.push(v);
                }
            }
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it.next().ok_or_else(|| CliError::Config(format!("--{key} needs a value")))?,
        };
        overrides.push((key, value));
    }
    Ok((own, overrides))
}

fn run() -> Result<i32, CliError> {
    let (own, mut overrides) = split_args(std::env::args().collect())?;
    let cli = Cli::parse_from(own);
    let experiment: Experiment = cli.experiment.parse()?;
    let file = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            parse_pairs(&text)?
        }
        None => Vec::new(),
    };
    if let Some(s) = cli.seed {
        overrides.push(("seed".into(), s.to_string()));
    }
    if let Some(w) = cli.workers {
        overrides.push(("workers".into(), w.to_string()));
    }
    if let Some(o) = &cli.out {
        overrides.push(("out".into(), o.display().to_string()));
    }
    let config = RunConfig::resolve(experiment, &file, &overrides)?;
    eprintln!(
        "{} seed={} workers={} config_hash={}",
        experiment.name(),
        config.seed,
        config.workers,
        config.hash()
    );
    let outcome = run_and_write(&config)?;
    for line in outcome.summary() {
        println!("{line}");
    }
    Ok(if outcome.passed() { exit::PASS } else { exit::FAIL })
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("openkpz: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
