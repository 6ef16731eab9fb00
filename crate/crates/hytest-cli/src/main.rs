//! Command-line front end for the test-generation pipeline: condition-graph
//! inspection, test-condition listing, suite generation, simulation, oracle
//! runs, mutation seeding and the full benchmark protocol.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use hytest::bench::{parse_bench_config, run_bench};
use hytest::conditions::{gen_test_conditions, render_condition_list, TestCondition};
use hytest::exec::ExecMode;
use hytest::graph::{build_condition_graph, ConditionGraph};
use hytest::model::{parse_hybrid_model, parse_sim_model, sim_model_to_json, HybridModel};
use hytest::mutation::{gen_mutants, operators_by_names};
use hytest::oracle::{run_suite, OracleOptions};
use hytest::sim::{parse_sim_config, simulate_hybrid, simulate_sim_model, SimConfig};
use hytest::testgen::{
    gen_random_suite, generate_suite, suite_from_json, suite_to_csv, suite_to_json, GenOptions,
    DEFAULT_GRID_CAP,
};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "hytest",
    version,
    about = "Hybrid-model-based test generation and reactive test oracles for CPS models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Export the condition graph of a hybrid model as DOT text.
    Graph {
        /// Hybrid model JSON file.
        #[arg(long)]
        model: PathBuf,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the test conditions of a hybrid model, one per line.
    Conditions {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate and select a test suite.
    Gen {
        /// Hybrid model JSON file.
        #[arg(long)]
        model: PathBuf,
        /// Simulation model JSON file.
        #[arg(long)]
        sim: PathBuf,
        /// Simulation config JSON file.
        #[arg(long = "sim-config")]
        sim_config: PathBuf,
        /// Grid stride multiplier (coarsens every grid axis).
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Cap on grid cardinality.
        #[arg(long, default_value_t = DEFAULT_GRID_CAP)]
        cap: u128,
        /// Seed for the random technique.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `hytest` (condition-based) or `random` (equal-count baseline).
        #[arg(long, default_value = "hytest")]
        technique: String,
        /// Case count for the random technique; defaults to the size of the
        /// condition-based suite.
        #[arg(long)]
        count: Option<usize>,
        /// Suite output path (JSON); stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the suite as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Disable data-parallel execution.
        #[arg(long)]
        sequential: bool,
    },
    /// Simulate a model and export the sampled trace as CSV.
    Simulate {
        /// Simulation (block) model JSON file.
        #[arg(long, conflicts_with = "model")]
        sim: Option<PathBuf>,
        /// Hybrid model JSON file (flows integrated directly).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long = "sim-config")]
        sim_config: PathBuf,
        /// Force controller-flagged blocks to output zero.
        #[arg(long)]
        uncontrolled: bool,
        /// Initial mode for hybrid simulation (default: resolved from
        /// invariants).
        #[arg(long = "initial-mode")]
        initial_mode: Option<String>,
        /// Override initial values, e.g. --set th=0.2 (repeatable).
        #[arg(long = "set", value_parser = parse_assignment)]
        set: Vec<(String, f64)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute a suite against a simulation model and report verdicts.
    Run {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        sim: PathBuf,
        #[arg(long = "sim-config")]
        sim_config: PathBuf,
        /// Suite JSON file (from `gen`).
        #[arg(long)]
        suite: PathBuf,
        /// Also run every mutant from this comma-separated operator set and
        /// report revealed faults.
        #[arg(long)]
        mutants: Option<String>,
        #[arg(long = "count-unexpected-pass")]
        count_unexpected_pass: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
    },
    /// Write one faulty model per applicable (operator, block) site.
    Mutate {
        /// Simulation model JSON file.
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated operator names, or `all`.
        #[arg(long, default_value = "all")]
        ops: String,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
    /// Run the full benchmark protocol from a config file.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
        #[arg(long)]
        sequential: bool,
    },
}

fn parse_assignment(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let value: f64 = value
        .parse()
        .map_err(|_| format!("`{value}` is not a number"))?;
    Ok((name.to_string(), value))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(path, content)
                .with_context(|| format!("cannot write {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<HybridModel> {
    parse_hybrid_model(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn load_graph(model: &HybridModel) -> Result<(ConditionGraph, Vec<TestCondition>)> {
    let graph = build_condition_graph(model, Some(model.unacceptable.clone()))?;
    let conditions = gen_test_conditions(&graph)?;
    Ok((graph, conditions))
}

fn load_sim_config(path: &Path) -> Result<SimConfig> {
    parse_sim_config(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn mode(sequential: bool) -> ExecMode {
    if sequential {
        ExecMode::Sequential
    } else {
        ExecMode::default()
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Graph { model, out } => {
            let hybrid = load_model(&model)?;
            let (graph, _) = load_graph(&hybrid)?;
            emit(out.as_deref(), &graph.to_dot())?;
        }
        Command::Conditions { model, out } => {
            let hybrid = load_model(&model)?;
            let (_, conditions) = load_graph(&hybrid)?;
            emit(out.as_deref(), &render_condition_list(&conditions))?;
        }
        Command::Gen {
            model,
            sim,
            sim_config,
            stride,
            cap,
            seed,
            technique,
            count,
            out,
            csv,
            sequential,
        } => {
            let hybrid = load_model(&model)?;
            let sim_model = parse_sim_model(&read(&sim)?)?;
            let cfg = load_sim_config(&sim_config)?;
            let (_, conditions) = load_graph(&hybrid)?;
            let opts = GenOptions {
                stride_mult: stride,
                grid_cap: cap,
                mode: mode(sequential),
            };
            let suite = match technique.as_str() {
                "hytest" => {
                    let (suite, meta) =
                        generate_suite(&hybrid, &conditions, &sim_model, &cfg, &opts)?;
                    eprintln!(
                        "{} conditions, {} cases selected from {}/{}/{} candidates \
                         (grid: {} of {} points{})",
                        conditions.len(),
                        suite.len(),
                        meta.step1_cases,
                        meta.step2_cases,
                        meta.step3_cases,
                        meta.grid.points_evaluated,
                        meta.grid.cardinality,
                        if meta.grid.skipped { ", skipped" } else { "" },
                    );
                    if !suite.uncovered.is_empty() {
                        eprintln!("uncovered conditions: {:?}", suite.uncovered);
                    }
                    suite
                }
                "random" => {
                    let n = match count {
                        Some(n) => n,
                        None => {
                            let (suite, _) =
                                generate_suite(&hybrid, &conditions, &sim_model, &cfg, &opts)?;
                            suite.len()
                        }
                    };
                    gen_random_suite(&hybrid, &conditions, n, seed, cfg.eps_eq)?
                }
                other => bail!("unknown technique `{other}` (use hytest or random)"),
            };
            if let Some(csv_path) = csv {
                emit(Some(&csv_path), &suite_to_csv(&suite))?;
            }
            emit(out.as_deref(), &suite_to_json(&suite))?;
        }
        Command::Simulate {
            sim,
            model,
            sim_config,
            uncontrolled,
            initial_mode,
            set,
            out,
        } => {
            let mut cfg = load_sim_config(&sim_config)?;
            for (name, value) in set {
                cfg.init.set(name, value);
            }
            let trace = match (&sim, &model) {
                (Some(sim_path), None) => {
                    let sim_model = parse_sim_model(&read(sim_path)?)?;
                    simulate_sim_model(&sim_model, &cfg, uncontrolled)?
                }
                (None, Some(model_path)) => {
                    let hybrid = load_model(model_path)?;
                    let graph = build_condition_graph(&hybrid, Some(hybrid.unacceptable.clone()))?;
                    let (trace, switches) =
                        simulate_hybrid(&hybrid, Some(&graph), &cfg, initial_mode.as_deref())?;
                    for s in &switches {
                        eprintln!("t={:.4}: {} -> {}", s.time, s.from, s.to);
                    }
                    trace
                }
                _ => bail!("pass exactly one of --sim or --model"),
            };
            emit(out.as_deref(), &trace.to_csv())?;
        }
        Command::Run {
            model,
            sim,
            sim_config,
            suite,
            mutants,
            count_unexpected_pass,
            out,
            sequential,
        } => {
            let hybrid = load_model(&model)?;
            let sim_model = parse_sim_model(&read(&sim)?)?;
            let cfg = load_sim_config(&sim_config)?;
            let (graph, conditions) = load_graph(&hybrid)?;
            let variables: Vec<String> = hybrid.variables.iter().map(|v| v.name.clone()).collect();
            let suite = suite_from_json(&read(&suite)?, &variables)
                .map_err(|e| anyhow::anyhow!("invalid suite: {e}"))?;
            let faulty = match mutants {
                Some(ops) => {
                    let ops = operators_by_names(&ops).map_err(|e| anyhow::anyhow!(e))?;
                    gen_mutants(&sim_model, &ops)
                        .into_iter()
                        .map(|m| (m.name(), m.model))
                        .collect()
                }
                None => Vec::new(),
            };
            let opts = OracleOptions {
                count_unexpected_pass,
                mode: mode(sequential),
            };
            let report = run_suite(
                &sim_model, &faulty, &suite, &hybrid, &graph, &conditions, &cfg, &opts,
            )?;
            let passed = report
                .reference
                .outcomes
                .iter()
                .filter(|o| o.is_passed())
                .count();
            eprintln!(
                "reference: {passed}/{} cases passed; {} defects",
                report.case_count, report.defect_count
            );
            if !report.faulty.is_empty() {
                eprintln!(
                    "revealed {}/{} faulty models",
                    report.revealed_count,
                    report.faulty.len()
                );
            }
            emit(out.as_deref(), &report.to_json())?;
        }
        Command::Mutate { model, ops, out_dir } => {
            let sim_model = parse_sim_model(&read(&model)?)?;
            let ops = operators_by_names(&ops).map_err(|e| anyhow::anyhow!(e))?;
            let base = model
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("model")
                .to_string();
            std::fs::create_dir_all(&out_dir)?;
            let mutants = gen_mutants(&sim_model, &ops);
            for mutant in &mutants {
                let path = out_dir.join(format!(
                    "{base}__{}__{}.json",
                    mutant.operator, mutant.site
                ));
                std::fs::write(&path, sim_model_to_json(&mutant.model))?;
            }
            eprintln!("wrote {} mutants to {}", mutants.len(), out_dir.display());
        }
        Command::Bench {
            config,
            out_dir,
            sequential,
        } => {
            let base_dir = config
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from("."));
            let bench_cfg = parse_bench_config(&read(&config)?, &base_dir)?;
            let report = run_bench(&bench_cfg, mode(sequential))?;
            std::fs::create_dir_all(&out_dir)?;
            emit(Some(&out_dir.join("report.json")), &report.to_json())?;
            emit(Some(&out_dir.join("report.md")), &report.to_markdown())?;
            print!("{}", report.to_markdown());
        }
    }
    Ok(())
}
