use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use pmmh_core::config::RunConfig;
use pmmh_core::models::{ModelSpec, Preset};
use pmmh_core::report::{comparison_markdown, evidence_of, read_summaries, table_markdown};
use pmmh_core::runner::{execute, simulate_series, simulation_seed};
use pmmh_core::verify::run_checks;

#[derive(Parser)]
#[command(name = "pmmh", version, about = "Particle marginal Metropolis-Hastings for state-space models")]
struct Cli {
    /// Log level (error, warn, info, debug).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the chains described by a TOML config.
    Run {
        config: PathBuf,
        /// Override a config key, e.g. `--set filter.particles=800`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Simulate a series from a model preset and write it as CSV.
    Simulate {
        /// Config with [model] and [simulate] sections; alternatively use --model.
        config: Option<PathBuf>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// True parameter value, e.g. `--truth phi=0.95`.
        #[arg(long, value_name = "NAME=VALUE")]
        truth: Vec<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output CSV (standard output when absent).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Compare log evidence across run directories or summary files.
    Compare {
        #[arg(required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
    },
    /// Run quick numerical self-checks against exact oracles.
    Verify,
}

fn parse_pair(s: &str) -> Result<(String, f64)> {
    let (k, v) = s.split_once('=').with_context(|| format!("`{s}`: expected NAME=VALUE"))?;
    let v: f64 = v.trim().parse().with_context(|| format!("`{s}`: value is not a number"))?;
    Ok((k.trim().to_string(), v))
}

fn run(
    config: PathBuf,
    set: Vec<String>,
    output: Option<PathBuf>,
    seed: Option<u64>,
    replicates: Option<usize>,
) -> Result<()> {
    let mut cfg = RunConfig::load(&config, &set).with_context(|| format!("loading {}", config.display()))?;
    if let Some(o) = output {
        cfg.output = o;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = replicates {
        cfg.replicates = r;
    }
    let out = execute(&cfg).with_context(|| format!("running {}", config.display()))?;
    print!("{}", table_markdown(std::slice::from_ref(&out.aggregate)));
    for s in &out.replicates {
        if let Some(e) = &s.evidence {
            println!("replicate {}: log p(y) bridge {:.4}, importance {:.4}", s.replicate, e.log_p_bs, e.log_p_is);
        }
    }
    eprintln!("wrote {}", cfg.output.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    config: Option<PathBuf>,
    model: Option<String>,
    horizon: Option<usize>,
    seed: Option<u64>,
    truth: Vec<String>,
    set: Vec<String>,
    out: Option<PathBuf>,
) -> Result<()> {
    let (spec, mut values, mut t, mut s, covariates) = match (&config, &model) {
        (Some(path), None) => {
            let cfg = RunConfig::load(path, &set)?;
            let sim = cfg.simulate.clone();
            let cov = match &cfg.data {
                Some(d) => pmmh_core::dataset::Dataset::load(d, false)?.covariates,
                None => Vec::new(),
            };
            (
                cfg.model.clone(),
                sim.as_ref().map(|x| x.truth.clone()).unwrap_or_default(),
                sim.as_ref().map(|x| x.horizon),
                Some(simulation_seed(&cfg)),
                cov,
            )
        }
        (None, Some(name)) => {
            let preset = Preset::parse(name).with_context(|| format!("unknown model preset `{name}`"))?;
            (ModelSpec::new(preset), BTreeMap::new(), None, None, Vec::new())
        }
        _ => bail!("give either a config file or --model"),
    };
    for p in &truth {
        let (k, v) = parse_pair(p)?;
        values.insert(k, v);
    }
    t = horizon.or(t);
    s = seed.or(s);
    let horizon = t.context("no horizon: use --horizon or a [simulate] section")?;
    let sim = simulate_series(&spec, &values, horizon, s.unwrap_or(0), &covariates)?;
    let mut data = sim.data;
    data.covariates.push(("state".into(), sim.states));
    match out {
        Some(path) => {
            let f = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            data.write_csv(f)?;
            eprintln!("wrote {} observations to {}", data.len(), path.display());
        }
        None => data.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}

fn compare(runs: Vec<PathBuf>) -> Result<()> {
    let mut rows = Vec::new();
    for r in &runs {
        let summaries = read_summaries(r)?;
        rows.push(evidence_of(&r.display().to_string(), &summaries)?);
    }
    print!("{}", comparison_markdown(&rows));
    Ok(())
}

fn verify() -> Result<bool> {
    let checks = run_checks();
    let mut ok = true;
    for c in &checks {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        ok &= c.passed;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).format_timestamp(None).init();
    let result = match cli.command {
        Command::Run { config, set, output, seed, replicates } => run(config, set, output, seed, replicates).map(|_| true),
        Command::Simulate { config, model, horizon, seed, truth, set, out } => {
            simulate(config, model, horizon, seed, truth, set, out).map(|_| true)
        }
        Command::Compare { runs } => compare(runs).map(|_| true),
        Command::Verify => verify(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
