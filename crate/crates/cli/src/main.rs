use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use geostitch::harness::{run_stage, Config, PipelineOptions, QueryPlan, Stage, ValidationReport};
use geostitch::manifold::BUILTINS;

/// Forward simulation and blind reconstruction of geodesic boundary data.
#[derive(Debug, Parser)]
#[command(name = "geostitch", version)]
struct Cli {
    /// Directory for the CSV/JSON artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Jitter seed for the boundary fan.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Enable positional cross-checks against the traces.
    #[arg(long, global = true)]
    verify: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Built-in scenarios.
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
    /// Shoot the fan and write traces, lens data, collision data and the relation.
    Forward { config: PathBuf },
    /// Recover lens data from the collision data.
    Lens { config: PathBuf },
    /// Recover the boundary relation and the stitching data.
    Invert { config: PathBuf },
    /// Build the quotient graph.
    Reconstruct { config: PathBuf },
    /// Run every stage and check the report against the thresholds.
    Validate { config: PathBuf },
}

#[derive(Debug, Subcommand)]
enum ScenarioAction {
    /// List the built-in scenarios and their parameters.
    List,
}

fn print_summary(report: &ValidationReport) {
    println!("stage: {}", report.stage);
    println!(
        "scenario: {} {:?}, fan {}x{} ({} vectors)",
        report.scenario.name, report.scenario.params, report.fan.n_u, report.fan.n_theta, report.fan.vectors
    );
    if let Some(l) = &report.lens_errors {
        println!("lens: max |dtau| {:.3e}, max sigma error {:.3e}", l.max_dtau, l.max_dsigma);
    }
    if let Some(r) = &report.relation_scores {
        println!("relation: precision {:.6}, recall {:.6}", r.precision, r.recall);
    }
    if let Some(c) = report.confirmation_fraction {
        println!("confirmation fraction: {c:.6}");
    }
    if let Some(g) = &report.graph {
        println!("graph: {} nodes, {} edges, {} components", g.nodes, g.edges, g.components);
    }
    if let Some(d) = &report.distance_summary {
        println!(
            "distances: median rel err {:.4}, max rel err {:.4}, lower bound {}",
            d.median_rel_err,
            d.max_rel_err,
            if d.lower_bound_holds { "holds" } else { "violated" }
        );
        if let Some(e) = d.grid_error_bound {
            println!("oracle grid error bound: {e:.3e}");
        }
    }
    for flag in &report.flags {
        println!("flag: {flag}");
    }
    for c in &report.checks {
        println!(
            "{} {}: {:.6e} (threshold {:.6e}){}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold,
            if c.gating { "" } else { " [reported only]" }
        );
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let (stage, path) = match cli.command {
        Command::Scenario {
            action: ScenarioAction::List,
        } => {
            for b in BUILTINS {
                let params: Vec<String> = b.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                println!("{:<16} {:<24} {}", b.name, params.join(","), b.summary);
            }
            return Ok(ExitCode::SUCCESS);
        }
        Command::Forward { config } => (Stage::Forward, config),
        Command::Lens { config } => (Stage::Lens, config),
        Command::Invert { config } => (Stage::Invert, config),
        Command::Reconstruct { config } => (Stage::Reconstruct, config),
        Command::Validate { config } => (Stage::Validate, config),
    };
    let config = Config::load(&path).with_context(|| format!("loading {}", path.display()))?;
    let opts = PipelineOptions {
        out_dir: cli.out,
        seed: cli.seed,
        verify: cli.verify,
        queries: QueryPlan::FarthestPoint,
    };
    let output = run_stage(&config, &opts, stage)?;
    print_summary(&output.report);
    if output.report.passed == Some(false) {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
