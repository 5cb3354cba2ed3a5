use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use vtree_core::trace::Component;
use vtree_sim::output::{read_trace_file, write_run, RunSummary};
use vtree_sim::scenario_file::{load, parse_override};
use vtree_sim::sweep::{sweep, sweep_csv, SweepParam};
use vtree_sim::{oracle, SimError};

/// Discrete-event simulator for hierarchical command dissemination.
///
/// Exit status: 0 success, 2 invalid scenario or arguments, 3 I/O error,
/// 4 oracle mismatch.
#[derive(Parser, Debug)]
#[command(name = "vtree", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Seed for the run [default: the scenario's `seed`].
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted-path override, e.g. `coordinator.K=3`; values are parsed as
    /// JSON, falling back to strings. Repeatable
    /// [default: none].
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<vtree_core::Scenario, SimError> {
        let mut ov = self
            .set
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(seed) = self.seed {
            ov.push(("seed".to_string(), json!(seed)));
        }
        load(&self.scenario, &ov)
    }
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run one scenario; writes trace.jsonl and metrics.csv and prints a
    /// one-line JSON summary.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output directory, created if missing.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Keep only these components in trace.jsonl (alg1..alg4, kernel)
        /// [default: all]. Metrics always use the full trace.
        #[arg(long, value_delimiter = ',', value_parser = parse_component)]
        only: Vec<Component>,
    },
    /// Monte-Carlo sweep over one parameter; writes sweep.csv.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Parameter to vary: p, K, regions or strategy.
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Trials per value.
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        /// Per-worker failure probability [default: 0.1 for K, 0 otherwise].
        #[arg(long)]
        p: Option<f64>,
        /// Output directory, created if missing.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare a failure-free run (or a recorded trace) against graph search.
    OracleCheck {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Check this trace instead of running the scenario.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Check a scenario file without running it.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
}

fn parse_component(s: &str) -> Result<Component, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown component '{s}'"))
}

fn execute(cli: Cli) -> Result<(), SimError> {
    match cli.cmd {
        Cmd::Run {
            scenario,
            out,
            only,
        } => {
            let sc = scenario.load()?;
            let mut res = vtree_core::run(&sc).map_err(|e| SimError::invalid(e.to_string()))?;
            let summary = RunSummary::new(&res);
            if !only.is_empty() {
                res.trace.retain(|r| only.contains(&r.component));
            }
            write_run(&out, &res)?;
            println!(
                "{}",
                serde_json::to_string(&summary).expect("summary serializes")
            );
        }
        Cmd::Sweep {
            scenario,
            param,
            values,
            trials,
            p,
            out,
        } => {
            let sc = scenario.load()?;
            let rows = sweep(&sc, param, &values, trials, p)?;
            std::fs::create_dir_all(&out).map_err(|e| SimError::io(&out, e))?;
            let path = out.join("sweep.csv");
            let csv = sweep_csv(&rows);
            std::fs::write(&path, &csv).map_err(|e| SimError::io(&path, e))?;
            print!("{csv}");
        }
        Cmd::OracleCheck { scenario, trace } => {
            let sc = scenario.load()?;
            let trace = trace.as_deref().map(read_trace_file).transpose()?;
            let report = oracle::oracle_check(&sc, trace.as_deref())?;
            for c in &report.commands {
                println!(
                    "msg {}: {} expected, {} executed, {}",
                    c.msg,
                    c.expected.len(),
                    c.executed.len(),
                    if c.ok() { "ok" } else { "MISMATCH" }
                );
            }
            if !report.passed() {
                return Err(SimError::OracleMismatch(report.describe_failures()));
            }
        }
        Cmd::Validate { scenario } => {
            let sc = scenario.load()?;
            let topo = sc
                .validate()
                .map_err(|e| SimError::invalid(e.to_string()))?;
            println!(
                "{}",
                json!({
                    "status": "valid",
                    "workers": topo.num_workers(),
                    "clusters": topo.num_clusters(),
                    "regions": topo.num_regions(),
                    "commands": sc.commands.len(),
                    "failures": sc.failures.len(),
                })
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vtree: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
