use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use gst12::gst::solve_gst;
use gst12::heuristic::{solve_stp, StarPolicy};
use gst12::instance::{is_valid_solution, solution_cost, Instance};
use gst12::ledger::audit_stp_run;
use gst12::oracle::steiner_forest_opt;

use gst12_cli::fmt::{parse_instance, parse_solution, write_instance, write_solution};
use gst12_cli::gen::{gen_random, GenParams};
use gst12_cli::ratio::{run_ratio_experiment, to_csv, Mode, RatioConfig};

#[derive(Parser)]
#[command(name = "gst12", version, about = "Group Steiner solver for {1,2}-metrics")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Algo {
    /// Single-group greedy tree heuristic.
    Rs,
    /// Full preprocess/annihilate/collapse pipeline.
    Gst,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Stars {
    Active,
    All,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve an instance heuristically and print the solution.
    Solve {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Algo::Gst)]
        algo: Algo,
        /// Write the move trace as JSON to this path.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Which supernodes may seed a star collapse.
        #[arg(long, value_enum, default_value_t = Stars::Active)]
        stars: Stars,
    },
    /// Solve an instance exactly (small instances only) and print the solution.
    Exact { file: PathBuf },
    /// Check a solution file against an instance.
    Verify { instance: PathBuf, solution: PathBuf },
    /// Generate a random instance.
    Gen {
        #[arg(long, default_value_t = 8)]
        nodes: usize,
        #[arg(long, default_value_t = 0.3)]
        edge_prob: f64,
        /// Number of 2-terminal requirement groups.
        #[arg(long, default_value_t = 1)]
        pairs: usize,
        /// Number of 3-terminal requirement groups.
        #[arg(long, default_value_t = 1)]
        triples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Probability of planting a terminal star at each non-terminal.
        #[arg(long, default_value_t = 0.0)]
        star_bias: f64,
        /// Output path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a seeded heuristic-vs-oracle ratio experiment.
    Ratio {
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 8)]
        max_nodes: usize,
        #[arg(long, value_enum, default_value_t = Mode::Gst)]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write per-instance rows as CSV to this path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Replay a single-group run through the potential ledger.
    Audit {
        file: PathBuf,
        /// Emit the full report as JSON instead of a summary.
        #[arg(long)]
        json: bool,
    },
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

fn read_instance(path: &Path) -> anyhow::Result<Instance> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    parse_instance(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_out(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.cmd {
        Cmd::Solve { file, algo, trace, stars } => {
            let inst = read_instance(&file)?;
            let policy = match stars {
                Stars::Active => StarPolicy::Active,
                Stars::All => StarPolicy::All,
            };
            let (f, t) = match algo {
                Algo::Rs => solve_stp(&inst)?,
                Algo::Gst => solve_gst(&inst, policy)?,
            };
            if let Some(path) = trace {
                let json = serde_json::to_string_pretty(&t)?;
                write_out(Some(&path), &json)?;
            }
            print!("{}", write_solution(&f, t.final_cost));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Exact { file } => {
            let inst = read_instance(&file)?;
            let opt = steiner_forest_opt(&inst)?;
            print!("{}", write_solution(&opt.pairs, opt.cost));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Verify { instance, solution } => {
            let inst = read_instance(&instance)?;
            let text = std::fs::read_to_string(&solution)
                .with_context(|| format!("reading {}", solution.display()))?;
            let (claimed, f) = parse_solution(&text)
                .with_context(|| format!("parsing {}", solution.display()))?;
            let valid = is_valid_solution(&inst, &f)?;
            let actual = solution_cost(inst.graph(), &f)?;
            if valid && actual == claimed {
                println!("ok: cost {actual}");
                Ok(ExitCode::SUCCESS)
            } else if !valid {
                eprintln!("invalid: some requirement group is disconnected");
                Ok(ExitCode::from(2))
            } else {
                eprintln!("invalid: claimed cost {claimed}, actual {actual}");
                Ok(ExitCode::from(2))
            }
        }
        Cmd::Gen { nodes, edge_prob, pairs, triples, seed, star_bias, out } => {
            let inst = gen_random(&GenParams { nodes, edge_prob, pairs, triples, seed, star_bias })?;
            write_out(out.as_deref(), &write_instance(&inst))?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Ratio { count, max_nodes, mode, seed, csv } => {
            let report = run_ratio_experiment(&RatioConfig { count, max_nodes, mode, seed })?;
            if let Some(path) = csv {
                write_out(Some(&path), &to_csv(&report))?;
            }
            let (num, den) = report.max_ratio;
            println!(
                "instances {} skipped {} violations {} max-ratio {num}/{den}",
                report.rows.len(),
                report.skipped,
                report.violations
            );
            if report.violations > 0 {
                Ok(ExitCode::from(2))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
        Cmd::Audit { file, json } => {
            let inst = read_instance(&file)?;
            let (_, trace) = solve_stp(&inst)?;
            let opt = steiner_forest_opt(&inst)?;
            let report = audit_stp_run(&inst, &opt, &trace)?;
            let ok = report.hard.all() && report.bridgeless_after_prep;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!(
                    "alg {} opt {} skeleton {} promise {}",
                    report.algorithm_cost,
                    report.optimum_cost,
                    report.initial_skeleton,
                    report.initial_prom_cost
                );
                println!(
                    "prep-steps {} moves {} monotone {}/{}",
                    report.prep_steps.len(),
                    report.moves.len(),
                    report.monotone_moves,
                    report.moves.len()
                );
                println!(
                    "final: committed {} reference {} potential {}",
                    report.final_ca, report.final_cr, report.final_p
                );
                println!("{}", if ok { "audit ok" } else { "audit failed" });
            }
            if ok {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("audit failed: {:?}", report.hard);
                Ok(ExitCode::from(2))
            }
        }
    }
}
