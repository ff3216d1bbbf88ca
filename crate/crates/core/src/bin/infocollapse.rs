use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use infocollapse::estimators;
use infocollapse::harness::{self, RunManifest, Scenario};
use infocollapse::{Error, Result};

#[derive(Parser)]
#[command(
    name = "infocollapse",
    version,
    about = "State-information accounting and threshold-triggered measurement runs"
)]
struct Cli {
    /// Physical constants JSON; falls back to $INFOCOLLAPSE_CONSTANTS, then built-in values.
    #[arg(long, global = true)]
    constants: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file.
    scenario: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Print one estimator, or all of them.
    Estimate {
        name: Option<String>,
        /// Input override, `key=value`; repeatable.
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, f64)>,
        /// Emit JSON instead of a table.
        #[arg(long)]
        json: bool,
        /// Run an estimate scenario file instead.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Simulate(RunArgs),
    Lindblad(RunArgs),
    Lattice(RunArgs),
    Measure(RunArgs),
    /// Summaries of a records.jsonl file.
    Stats {
        records: PathBuf,
        /// Expected system-outcome probabilities, comma separated.
        #[arg(long, value_delimiter = ',')]
        expected: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        bins: usize,
    },
    /// Re-run a manifest and compare output digests.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_param(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got '{s}'"))?;
    let v: f64 = v.parse().map_err(|e| format!("bad value for {k}: {e}"))?;
    Ok((k.to_string(), v))
}

fn run_mode(
    expected: &str,
    args: &RunArgs,
    constants: &infocollapse::resources::PhysicalConstants,
) -> Result<()> {
    let scenario = Scenario::load(&args.scenario)?;
    if scenario.mode.name() != expected {
        return Err(Error::Schema(format!(
            "scenario '{}' has mode '{}', not '{expected}'",
            scenario.id,
            scenario.mode.name()
        )));
    }
    let m = harness::run_scenario_file(&args.scenario, args.seed, args.out.as_deref(), constants)?;
    print_manifest(&m);
    Ok(())
}

fn print_manifest(m: &RunManifest) {
    println!(
        "scenario {} (seed {}, constants {})",
        m.scenario_id, m.master_seed, m.constants_version
    );
    for o in &m.outputs {
        println!("  {}  {}", o.sha256, o.path);
    }
}

fn run(cli: Cli) -> Result<()> {
    let constants = harness::resolve_constants(cli.constants.as_deref())?;
    match cli.command {
        Command::Estimate {
            name,
            params,
            json,
            scenario,
            out,
        } => {
            if let Some(path) = scenario {
                let m = harness::run_scenario_file(&path, None, out.as_deref(), &constants)?;
                print_manifest(&m);
                return Ok(());
            }
            let params: BTreeMap<String, f64> = params.into_iter().collect();
            let reports = match name {
                Some(n) => vec![estimators::estimate(&n, &params, &constants)?],
                None => estimators::ESTIMATOR_NAMES
                    .iter()
                    .map(|n| estimators::estimate(n, &params, &constants))
                    .collect::<Result<Vec<_>>>()?,
            };
            if json {
                println!("{}", serde_json::to_string_pretty(&reports)?);
            } else {
                print!("{}", estimators::format_table(&reports));
            }
        }
        Command::Simulate(a) => run_mode("simulate", &a, &constants)?,
        Command::Lindblad(a) => run_mode("lindblad", &a, &constants)?,
        Command::Lattice(a) => run_mode("lattice", &a, &constants)?,
        Command::Measure(a) => run_mode("measure", &a, &constants)?,
        Command::Stats {
            records,
            expected,
            bins,
        } => {
            let lines = harness::read_records(&records)?;
            let hist = harness::tau_u_histogram(&harness::intervals_from_records(&lines), bins);
            println!("records: {}", lines.len());
            println!(
                "tau_u: n={} mean={:?} variance={:?}",
                hist.n, hist.mean, hist.variance
            );
            for (k, c) in hist.counts.iter().enumerate() {
                println!("  [{:.6e}, {:.6e}) {c}", hist.edges[k], hist.edges[k + 1]);
            }
            if !expected.is_empty() {
                let counts = harness::system_outcome_counts(&lines, expected.len());
                let t = harness::born_chi_squared(&counts, &expected)?;
                println!("counts: {counts:?}");
                println!(
                    "chi_squared={} dof={} p_value={}",
                    t.statistic, t.dof, t.p_value
                );
            }
        }
        Command::Replay { manifest, out } => {
            let m = RunManifest::load(&manifest)?;
            let dir = out.unwrap_or_else(|| {
                manifest
                    .parent()
                    .unwrap_or(std::path::Path::new("."))
                    .join("replay")
            });
            let r = harness::replay(&m, &dir)?;
            if r.identical {
                println!("replay identical ({} outputs)", m.outputs.len());
            } else {
                return Err(Error::Domain(format!(
                    "replay differs: {}",
                    r.mismatches.join(", ")
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
