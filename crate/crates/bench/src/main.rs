use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use expost_bench::config::load_configs;
use expost_bench::experiment::run_experiment;
use expost_bench::report::{
    emit_table, figure1_grid, figure1_points, render_text, write_csv, write_points_csv,
};
use expost_bench::verify::{filter_suite, pure_suite, rdp_suite, SuiteReport};
use expost_core::accounting::approx_dp_epsilon;

#[derive(Parser)]
#[command(version, about = "Ex-post private selection experiments and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment in a JSON config and write a summary table.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// CSV output; the text table always goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Expected executions of a repeated mechanism under geometric dropping.
    Figure1 {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.01)]
        eps_prime: f64,
    },
    /// Exact randomized checks; exits nonzero on any violation.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Convert an RDP guarantee to approximate DP.
    Convert {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Pure,
    Rdp,
    Filter,
    All,
}

fn output(path: Option<&PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::sink()),
    })
}

fn print_report(r: &SuiteReport) {
    let status = if r.passed() { "ok" } else { "FAILED" };
    println!(
        "{:<7} {status:<6} instances={} worst_margin={:e}",
        r.name, r.instances, r.worst_margin
    );
    for f in &r.failures {
        println!("  {f}");
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Experiment { config, out } => {
            let configs = load_configs(&config)?;
            let mut rows = Vec::with_capacity(configs.len());
            for (stream, cfg) in configs.iter().enumerate() {
                let results = run_experiment(cfg, stream as u64)?;
                rows.push(emit_table(
                    &cfg.dataset.label(),
                    cfg.algorithm.name(),
                    &results,
                ));
            }
            print!("{}", render_text(&rows));
            if out.is_some() {
                write_csv(&rows, output(out.as_ref())?)?;
            }
            Ok(true)
        }
        Command::Figure1 {
            out,
            epsilon,
            eps_prime,
        } => {
            let points = figure1_points(epsilon, eps_prime, &figure1_grid());
            for p in &points {
                println!(
                    "{:>4}  {:>10.4}  {:>10.4}",
                    p.repetitions, p.expectation, p.stddev
                );
            }
            if out.is_some() {
                write_points_csv(&points, output(out.as_ref())?)?;
            }
            Ok(true)
        }
        Command::Verify { suite, seed } => {
            let mut reports = Vec::new();
            if matches!(suite, Suite::Pure | Suite::All) {
                reports.push(pure_suite(60, seed)?);
            }
            if matches!(suite, Suite::Rdp | Suite::All) {
                reports.push(rdp_suite(24, seed)?);
            }
            if matches!(suite, Suite::Filter | Suite::All) {
                reports.push(filter_suite(12, seed)?);
            }
            reports.iter().for_each(print_report);
            Ok(reports.iter().all(SuiteReport::passed))
        }
        Command::Convert {
            alpha,
            delta,
            epsilon,
        } => {
            println!("{}", approx_dp_epsilon(epsilon, alpha, delta)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
