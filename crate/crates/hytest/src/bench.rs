//! Experiment driver: for each bundled model, generate the suite, seed
//! mutants, execute both the condition-based technique and an equal-budget
//! random baseline over repeated seeds, and aggregate effectiveness and
//! efficiency numbers.

use crate::conditions::gen_test_conditions;
use crate::exec::ExecMode;
use crate::graph::build_condition_graph;
use crate::model::{parse_hybrid_model, parse_sim_model, ModelError};
use crate::mutation::{gen_mutants, operators_by_names};
use crate::oracle::{run_suite, OracleError, OracleOptions, SuiteReport};
use crate::sim::{parse_sim_config, SimError};
use crate::testgen::{
    gen_random_suite, generate_suite, GenError, GenOptions, DEFAULT_GRID_CAP,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid bench config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Conditions(#[from] crate::conditions::ConditionError),
}

#[derive(Debug, Clone, Deserialize)]
pub struct ModelEntry {
    pub name: String,
    pub hybrid: PathBuf,
    pub sim: PathBuf,
    pub sim_config: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
pub struct BenchConfig {
    pub models: Vec<ModelEntry>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_seed")]
    pub base_seed: u64,
    /// Explicit per-repetition seeds; derived from `base_seed` when absent.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_stride")]
    pub stride_mult: usize,
    #[serde(default = "default_cap")]
    pub grid_cap: u128,
    #[serde(default = "default_ops")]
    pub ops: String,
    #[serde(default)]
    pub count_unexpected_pass: bool,
}

fn default_repetitions() -> usize {
    30
}
fn default_seed() -> u64 {
    42
}
fn default_stride() -> usize {
    1
}
fn default_cap() -> u128 {
    DEFAULT_GRID_CAP
}
fn default_ops() -> String {
    "all".to_string()
}

impl BenchConfig {
    pub fn seeds(&self) -> Vec<u64> {
        match &self.seeds {
            Some(list) => list.clone(),
            None => (0..self.repetitions as u64)
                .map(|i| self.base_seed.wrapping_add(i))
                .collect(),
        }
    }
}

fn read(path: &Path) -> Result<String, BenchError> {
    std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a bench config; model paths are resolved relative to `base_dir`.
pub fn parse_bench_config(doc: &str, base_dir: &Path) -> Result<BenchConfig, BenchError> {
    let mut cfg: BenchConfig =
        serde_json::from_str(doc).map_err(|e| BenchError::Config(e.to_string()))?;
    if cfg.repetitions == 0 {
        return Err(BenchError::Config("repetitions must be at least 1".into()));
    }
    if cfg.models.is_empty() {
        return Err(BenchError::Config("no models listed".into()));
    }
    for entry in &mut cfg.models {
        for path in [&mut entry.hybrid, &mut entry.sim, &mut entry.sim_config] {
            if path.is_relative() {
                *path = base_dir.join(&path);
            }
        }
    }
    Ok(cfg)
}

/// One technique's numbers for one repetition.
#[derive(Debug, Clone, Serialize)]
pub struct TechniqueRow {
    pub technique: String,
    pub seed: u64,
    pub tc_count: usize,
    pub gen_seconds: f64,
    /// Mean execution time per faulty model.
    pub exec_seconds: f64,
    pub total_seconds: f64,
    pub revealed: usize,
    pub revealed_pct: f64,
    pub revealed_mutants: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TechniqueSummary {
    pub technique: String,
    pub mean_tc_count: f64,
    pub mean_gen_seconds: f64,
    pub mean_exec_seconds: f64,
    pub mean_total_seconds: f64,
    pub mean_revealed: f64,
    pub mean_revealed_pct: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelBenchReport {
    pub name: String,
    pub mutant_count: usize,
    pub condition_count: usize,
    pub uncovered_conditions: Vec<usize>,
    pub rows: Vec<TechniqueRow>,
    pub summary: Vec<TechniqueSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub repetitions: usize,
    pub seeds: Vec<u64>,
    pub models: Vec<ModelBenchReport>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn summarize(rows: &[TechniqueRow], technique: &str) -> TechniqueSummary {
    let of = |f: fn(&TechniqueRow) -> f64| {
        mean(rows
            .iter()
            .filter(|r| r.technique == technique)
            .map(f))
    };
    TechniqueSummary {
        technique: technique.to_string(),
        mean_tc_count: of(|r| r.tc_count as f64),
        mean_gen_seconds: of(|r| r.gen_seconds),
        mean_exec_seconds: of(|r| r.exec_seconds),
        mean_total_seconds: of(|r| r.total_seconds),
        mean_revealed: of(|r| r.revealed as f64),
        mean_revealed_pct: of(|r| r.revealed_pct),
    }
}

fn mean_faulty_exec_seconds(report: &SuiteReport) -> f64 {
    mean(report.faulty.iter().map(|f| f.exec_seconds))
}

fn revealed_names(report: &SuiteReport) -> Vec<String> {
    report
        .faulty
        .iter()
        .filter(|f| f.revealed)
        .map(|f| f.name.clone())
        .collect()
}

/// Runs the full study protocol.
pub fn run_bench(cfg: &BenchConfig, mode: ExecMode) -> Result<BenchReport, BenchError> {
    let ops = operators_by_names(&cfg.ops).map_err(BenchError::Config)?;
    let seeds = cfg.seeds();
    let oracle_opts = OracleOptions {
        count_unexpected_pass: cfg.count_unexpected_pass,
        mode,
    };
    let gen_opts = GenOptions {
        stride_mult: cfg.stride_mult,
        grid_cap: cfg.grid_cap,
        mode,
    };
    let mut models = Vec::new();
    for entry in &cfg.models {
        let hybrid = parse_hybrid_model(&read(&entry.hybrid)?)?;
        let sim_model = parse_sim_model(&read(&entry.sim)?)?;
        let sim_cfg = parse_sim_config(&read(&entry.sim_config)?)?;
        let mutants = gen_mutants(&sim_model, &ops);
        let faulty: Vec<(String, crate::model::SimModel)> = mutants
            .iter()
            .map(|m| (m.name(), m.model.clone()))
            .collect();

        let mut rows = Vec::new();
        let mut condition_count = 0;
        let mut uncovered = Vec::new();
        for &seed in &seeds {
            // Condition-based technique: graph and conditions are rebuilt per
            // repetition so generation time covers the whole pipeline.
            let started = Instant::now();
            let graph = build_condition_graph(&hybrid, Some(hybrid.unacceptable.clone()))?;
            let conditions = gen_test_conditions(&graph)?;
            let (suite, _meta) =
                generate_suite(&hybrid, &conditions, &sim_model, &sim_cfg, &gen_opts)?;
            let gen_seconds = started.elapsed().as_secs_f64();
            condition_count = conditions.len();
            uncovered = suite.uncovered.clone();

            let report = run_suite(
                &sim_model,
                &faulty,
                &suite,
                &hybrid,
                &graph,
                &conditions,
                &sim_cfg,
                &oracle_opts,
            )?;
            let exec_seconds = mean_faulty_exec_seconds(&report);
            rows.push(TechniqueRow {
                technique: "hytest".into(),
                seed,
                tc_count: suite.len(),
                gen_seconds,
                exec_seconds,
                total_seconds: gen_seconds + exec_seconds,
                revealed: report.revealed_count,
                revealed_pct: pct(report.revealed_count, faulty.len()),
                revealed_mutants: revealed_names(&report),
            });

            // Random baseline with exactly as many cases, same oracle.
            let started = Instant::now();
            let random_suite =
                gen_random_suite(&hybrid, &conditions, suite.len(), seed, sim_cfg.eps_eq)?;
            let gen_seconds = started.elapsed().as_secs_f64();
            let report = run_suite(
                &sim_model,
                &faulty,
                &random_suite,
                &hybrid,
                &graph,
                &conditions,
                &sim_cfg,
                &oracle_opts,
            )?;
            let exec_seconds = mean_faulty_exec_seconds(&report);
            rows.push(TechniqueRow {
                technique: "random".into(),
                seed,
                tc_count: random_suite.len(),
                gen_seconds,
                exec_seconds,
                total_seconds: gen_seconds + exec_seconds,
                revealed: report.revealed_count,
                revealed_pct: pct(report.revealed_count, faulty.len()),
                revealed_mutants: revealed_names(&report),
            });
        }
        let summary = vec![summarize(&rows, "hytest"), summarize(&rows, "random")];
        models.push(ModelBenchReport {
            name: entry.name.clone(),
            mutant_count: faulty.len(),
            condition_count,
            uncovered_conditions: uncovered,
            rows,
            summary,
        });
    }
    Ok(BenchReport {
        repetitions: cfg.repetitions,
        seeds,
        models,
    })
}

fn pct(revealed: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * revealed as f64 / total as f64
    }
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Markdown summary, one table per model.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Benchmark report\n");
        out.push_str(&format!(
            "\nRepetitions per technique: {}\n",
            self.repetitions
        ));
        for model in &self.models {
            out.push_str(&format!(
                "\n## {} ({} faulty models, {} test conditions)\n\n",
                model.name, model.mutant_count, model.condition_count
            ));
            if !model.uncovered_conditions.is_empty() {
                out.push_str(&format!(
                    "Uncovered test conditions: {:?}\n\n",
                    model.uncovered_conditions
                ));
            }
            out.push_str(
                "| Technique | # of TCs | TC Gen Time | Test Exe. Time | Total Testing Time \
                 | # of Faults Revealed | Pct. of Faults Revealed |\n",
            );
            out.push_str("|---|---|---|---|---|---|---|\n");
            for s in &model.summary {
                out.push_str(&format!(
                    "| {} | {:.1} | {:.3} s | {:.3} s | {:.3} s | {:.1} | {:.1}% |\n",
                    s.technique,
                    s.mean_tc_count,
                    s.mean_gen_seconds,
                    s.mean_exec_seconds,
                    s.mean_total_seconds,
                    s.mean_revealed,
                    s.mean_revealed_pct
                ));
            }
        }
        out
    }

    pub fn model(&self, name: &str) -> Option<&ModelBenchReport> {
        self.models.iter().find(|m| m.name == name)
    }
}

impl ModelBenchReport {
    pub fn summary_for(&self, technique: &str) -> Option<&TechniqueSummary> {
        self.summary.iter().find(|s| s.technique == technique)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_path_resolution() {
        let doc = r#"{
            "models": [
                {"name": "m", "hybrid": "m/h.json", "sim": "m/s.json",
                 "sim_config": "m/c.json"}
            ]
        }"#;
        let cfg = parse_bench_config(doc, Path::new("/base")).unwrap();
        assert_eq!(cfg.repetitions, 30);
        assert_eq!(cfg.base_seed, 42);
        assert_eq!(cfg.stride_mult, 1);
        assert_eq!(cfg.ops, "all");
        assert_eq!(cfg.models[0].hybrid, PathBuf::from("/base/m/h.json"));
        assert_eq!(cfg.seeds().len(), 30);
        assert_eq!(cfg.seeds()[3], 45);
    }

    #[test]
    fn zero_repetitions_rejected() {
        let doc = r#"{
            "models": [{"name": "m", "hybrid": "h", "sim": "s", "sim_config": "c"}],
            "repetitions": 0
        }"#;
        assert!(parse_bench_config(doc, Path::new(".")).is_err());
    }

    #[test]
    fn summaries_recompute_from_rows() {
        let row = |technique: &str, revealed: usize, gen: f64, exec: f64| TechniqueRow {
            technique: technique.into(),
            seed: 0,
            tc_count: 4,
            gen_seconds: gen,
            exec_seconds: exec,
            total_seconds: gen + exec,
            revealed,
            revealed_pct: pct(revealed, 20),
            revealed_mutants: Vec::new(),
        };
        let rows = vec![
            row("hytest", 18, 1.0, 2.0),
            row("hytest", 20, 3.0, 4.0),
            row("random", 5, 0.5, 2.0),
        ];
        let s = summarize(&rows, "hytest");
        assert_eq!(s.mean_revealed, 19.0);
        assert_eq!(s.mean_gen_seconds, 2.0);
        assert_eq!(s.mean_total_seconds, 5.0);
        assert_eq!(s.mean_revealed_pct, 95.0);
        let r = summarize(&rows, "random");
        assert_eq!(r.mean_revealed, 5.0);
    }
}
