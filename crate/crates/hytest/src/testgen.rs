//! Test-case generation and selection.
//!
//! Candidate cases come from three sources: samples of a controlled-system
//! run, samples of an uncontrolled-plant run (checked only against conditions
//! the first step missed), and a Cartesian grid over each variable's widened
//! range. Selection keeps one representative per test condition and removes
//! duplicates sharing inputs and initial class.

use crate::conditions::{TestCondition, VerdictClass};
use crate::exec::{map_range, ExecMode};
use crate::expr::{CompileError, CompiledExpr, EvalContext, EvalError, VarAssignment, VarTable};
use crate::model::{HybridModel, SimModel, VariableSpec};
use crate::sim::{CompiledSimModel, SimConfig, SimError, Trace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Grid points are evaluated in synchronous chunks of this size; coverage
/// updates between chunks. Fixed so parallel and sequential sweeps emit
/// identical case lists.
pub const GRID_CHUNK: usize = 2048;

/// Default cap on grid cardinality.
pub const DEFAULT_GRID_CAP: u128 = 10_000_000;

#[derive(Debug, Error)]
pub enum GenError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("condition evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error(
        "wrong hybrid model: the sample at t={time} (index {sample}) satisfies no test condition"
    )]
    WrongHybridModel { time: f64, sample: usize },
    #[error(
        "input grid has {cardinality} points, above the cap of {cap}; \
         raise the stride multiplier or the cap"
    )]
    GridTooLarge { cardinality: u128, cap: u128 },
    #[error("simulation trace does not expose model variable `{0}`")]
    MissingTraceVar(String),
}

/// A concrete test case: initial values for every model variable, the verdict
/// class of its originating condition and that condition's id (`None` only
/// for random-baseline cases matching no condition).
#[derive(Debug, Clone, PartialEq)]
pub struct TestCase {
    /// Values aligned with the model's variable declaration order.
    pub inputs: Vec<f64>,
    pub initial_class: VerdictClass,
    pub condition_id: Option<usize>,
}

impl TestCase {
    pub fn assignment(&self, variables: &[String]) -> VarAssignment {
        variables
            .iter()
            .cloned()
            .zip(self.inputs.iter().copied())
            .collect()
    }
}

/// Which test conditions have been covered so far.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoveredSet(Vec<bool>);

impl CoveredSet {
    pub fn new(n: usize) -> Self {
        CoveredSet(vec![false; n])
    }

    pub fn mark(&mut self, id: usize) {
        self.0[id] = true;
    }

    pub fn is_covered(&self, id: usize) -> bool {
        self.0[id]
    }

    pub fn union_with(&mut self, other: &CoveredSet) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a |= *b;
        }
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|c| **c).count()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn all_covered(&self) -> bool {
        self.0.iter().all(|c| *c)
    }

    pub fn uncovered(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, c)| !**c)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Selected suite plus the coverage record of the generation run.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSuite {
    pub variables: Vec<String>,
    pub cases: Vec<TestCase>,
    pub covered: CoveredSet,
    pub uncovered: Vec<usize>,
}

impl TestSuite {
    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }
}

pub(crate) fn compile_conditions(
    conditions: &[TestCondition],
    table: &VarTable,
    ctx: &EvalContext,
) -> Result<Vec<CompiledExpr>, CompileError> {
    conditions
        .iter()
        .map(|t| CompiledExpr::compile(&t.cond, table, ctx))
        .collect()
}

/// Projects trace rows onto the model variables (trace columns may be a
/// superset of the model's variable set).
fn trace_projection(trace: &Trace, variables: &[String]) -> Result<Vec<usize>, GenError> {
    variables
        .iter()
        .map(|v| {
            trace
                .names
                .iter()
                .position(|n| n == v)
                .ok_or_else(|| GenError::MissingTraceVar(v.clone()))
        })
        .collect()
}

fn emit_cases_for_trace(
    conditions: &[TestCondition],
    compiled: &[CompiledExpr],
    checked: &[usize],
    trace: &Trace,
    variables: &[String],
    covered: &mut CoveredSet,
) -> Result<Vec<TestCase>, GenError> {
    let projection = trace_projection(trace, variables)?;
    let mut cases = Vec::new();
    let mut stack = Vec::new();
    for (sample_idx, row) in trace.samples.iter().enumerate() {
        let mut any_hit = false;
        for &id in checked {
            if compiled[id].eval_bool_with_stack(row, &mut stack)? {
                any_hit = true;
                covered.mark(id);
                cases.push(TestCase {
                    inputs: projection.iter().map(|&i| row[i]).collect(),
                    initial_class: conditions[id].verdict_class,
                    condition_id: Some(id),
                });
            }
        }
        if !any_hit {
            // A sample that fits no condition at all means the hybrid model
            // is missing a mode or transition. When only a subset was
            // checked, consult the rest before declaring the defect.
            let mut fits_somewhere = false;
            for id in 0..conditions.len() {
                if checked.contains(&id) {
                    continue;
                }
                if compiled[id].eval_bool_with_stack(row, &mut stack)? {
                    fits_somewhere = true;
                    break;
                }
            }
            if !fits_somewhere {
                return Err(GenError::WrongHybridModel {
                    time: trace.times[sample_idx],
                    sample: sample_idx,
                });
            }
        }
    }
    Ok(cases)
}

/// Generation step 1: simulate the controlled CPS and emit one case per
/// (sample, satisfied condition) pair. A sample satisfying no condition is a
/// model defect.
pub fn gen_from_controlled(
    conditions: &[TestCondition],
    cps: &CompiledSimModel,
    model: &HybridModel,
    cfg: &SimConfig,
) -> Result<(Vec<TestCase>, CoveredSet), GenError> {
    let trace = cps.simulate(cfg, None)?;
    let ctx = model.eval_context(cfg.eps_eq);
    let table = VarTable::new(trace.names.iter().cloned());
    let compiled = compile_conditions(conditions, &table, &ctx)?;
    let variables: Vec<String> = model.variables.iter().map(|v| v.name.clone()).collect();
    let all: Vec<usize> = (0..conditions.len()).collect();
    let mut covered = CoveredSet::new(conditions.len());
    let cases =
        emit_cases_for_trace(conditions, &compiled, &all, &trace, &variables, &mut covered)?;
    Ok((cases, covered))
}

/// Generation step 2: simulate the uncontrolled plant (controller outputs
/// forced to zero) from the plant initial values, checking only conditions
/// the first step left uncovered.
pub fn gen_from_plant(
    conditions: &[TestCondition],
    plant: &CompiledSimModel,
    model: &HybridModel,
    cfg: &SimConfig,
    covered: &CoveredSet,
) -> Result<(Vec<TestCase>, CoveredSet), GenError> {
    let mut covered = covered.clone();
    let checked = covered.uncovered();
    if checked.is_empty() {
        return Ok((Vec::new(), covered));
    }
    let plant_cfg = SimConfig {
        init: cfg.plant_init_merged(),
        plant_init: None,
        ..cfg.clone()
    };
    let trace = plant.simulate(&plant_cfg, None)?;
    let ctx = model.eval_context(cfg.eps_eq);
    let table = VarTable::new(trace.names.iter().cloned());
    let compiled = compile_conditions(conditions, &table, &ctx)?;
    let variables: Vec<String> = model.variables.iter().map(|v| v.name.clone()).collect();
    let cases = emit_cases_for_trace(
        conditions,
        &compiled,
        &checked,
        &trace,
        &variables,
        &mut covered,
    )?;
    Ok((cases, covered))
}

/// Lazy Cartesian grid over widened variable ranges.
///
/// Each axis runs from -2·maxBound to +2·maxBound in steps of
/// precision × stride, where maxBound = max(|lo|, |hi|); endpoints are
/// included up to a small tolerance. Enumeration is row-major in variable
/// declaration order (first variable slowest).
#[derive(Debug, Clone)]
pub struct InputGrid {
    axes: Vec<Vec<f64>>,
}

/// Builds the value grid for `vars`; `stride_mult` coarsens every axis.
pub fn gen_input_grid(vars: &[VariableSpec], stride_mult: usize) -> InputGrid {
    let stride = stride_mult.max(1) as f64;
    let axes = vars
        .iter()
        .map(|v| {
            let max_bound = v.lo.abs().max(v.hi.abs());
            let step = v.precision * stride;
            let span = 4.0 * max_bound;
            let count = ((span / step) + 1e-9).floor() as usize + 1;
            (0..count)
                .map(|k| -2.0 * max_bound + k as f64 * step)
                .collect()
        })
        .collect();
    InputGrid { axes }
}

impl InputGrid {
    pub fn cardinality(&self) -> u128 {
        self.axes.iter().map(|a| a.len() as u128).product()
    }

    pub fn axis(&self, var: usize) -> &[f64] {
        &self.axes[var]
    }

    /// Random access in row-major order (first variable slowest).
    pub fn point(&self, mut index: u128) -> Vec<f64> {
        let mut out = vec![0.0; self.axes.len()];
        for (i, axis) in self.axes.iter().enumerate().rev() {
            let len = axis.len() as u128;
            out[i] = axis[(index % len) as usize];
            index /= len;
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.cardinality()).map(move |i| self.point(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMeta {
    pub cardinality: u128,
    pub points_evaluated: u128,
    /// All conditions were already covered; the grid was never enumerated.
    pub skipped: bool,
    pub early_stop: bool,
}

/// Generation step 3: sweep the input grid against uncovered conditions,
/// stopping as soon as everything is covered. Points are processed in fixed
/// chunks with the coverage snapshot frozen per chunk, so the parallel and
/// sequential paths emit identical cases.
pub fn gen_from_grid(
    conditions: &[TestCondition],
    grid: &InputGrid,
    model: &HybridModel,
    eps_eq: f64,
    covered: &CoveredSet,
    cap: u128,
    mode: ExecMode,
) -> Result<(Vec<TestCase>, CoveredSet, GridMeta), GenError> {
    let mut covered = covered.clone();
    let mut meta = GridMeta {
        cardinality: grid.cardinality(),
        points_evaluated: 0,
        skipped: false,
        early_stop: false,
    };
    if covered.all_covered() {
        meta.skipped = true;
        return Ok((Vec::new(), covered, meta));
    }
    if grid.cardinality() > cap {
        return Err(GenError::GridTooLarge {
            cardinality: grid.cardinality(),
            cap,
        });
    }
    let ctx = model.eval_context(eps_eq);
    let table = model.var_table();
    let compiled = compile_conditions(conditions, &table, &ctx)?;
    let total = grid.cardinality() as usize;
    let mut cases = Vec::new();
    let mut start = 0usize;
    while start < total {
        let end = (start + GRID_CHUNK).min(total);
        let checked = covered.uncovered();
        // Hits per point, against the chunk-entry coverage snapshot.
        let chunk: Vec<Result<(Vec<f64>, Vec<usize>), EvalError>> =
            map_range(mode, end - start, |offset| {
                let point = grid.point((start + offset) as u128);
                let mut stack = Vec::new();
                let mut hits = Vec::new();
                for &id in &checked {
                    if compiled[id].eval_bool_with_stack(&point, &mut stack)? {
                        hits.push(id);
                    }
                }
                Ok((point, hits))
            });
        for entry in chunk {
            let (point, hits) = entry?;
            for id in hits {
                covered.mark(id);
                cases.push(TestCase {
                    inputs: point.clone(),
                    initial_class: conditions[id].verdict_class,
                    condition_id: Some(id),
                });
            }
        }
        meta.points_evaluated += (end - start) as u128;
        if covered.all_covered() {
            meta.early_stop = end < total;
            if meta.early_stop {
                log::debug!(
                    "grid sweep stopped early after {} of {} points",
                    meta.points_evaluated,
                    meta.cardinality
                );
            }
            break;
        }
        start = end;
    }
    Ok((cases, covered, meta))
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// Selection: per condition id keep the lexicographically smallest case
/// (ties broken toward the earlier generation step), then drop cases sharing
/// (inputs, initial class), keeping the lowest condition id.
pub fn select_tests(
    step1: &[TestCase],
    step2: &[TestCase],
    step3: &[TestCase],
    n_conditions: usize,
) -> Vec<TestCase> {
    let mut best: Vec<Option<&TestCase>> = vec![None; n_conditions];
    for source in [step1, step2, step3] {
        for case in source {
            let id = case.condition_id.expect("generated cases carry an id");
            match best[id] {
                None => best[id] = Some(case),
                Some(current) => {
                    if lex_less(&case.inputs, &current.inputs) {
                        best[id] = Some(case);
                    }
                }
            }
        }
    }
    let mut selected: Vec<TestCase> = Vec::new();
    for kept in best.iter().flatten() {
        let duplicate = selected.iter().any(|prev| {
            prev.initial_class == kept.initial_class
                && prev.inputs.len() == kept.inputs.len()
                && prev
                    .inputs
                    .iter()
                    .zip(&kept.inputs)
                    .all(|(a, b)| a.to_bits() == b.to_bits())
        });
        if !duplicate {
            selected.push((*kept).clone());
        }
    }
    selected
}

/// Everything worth reporting about a generation run.
#[derive(Debug, Clone, PartialEq)]
pub struct GenMeta {
    pub step1_cases: usize,
    pub step2_cases: usize,
    pub step3_cases: usize,
    pub grid: GridMeta,
    pub stride_mult: usize,
    pub grid_cap: u128,
    pub grid_chunk: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct GenOptions {
    pub stride_mult: usize,
    pub grid_cap: u128,
    pub mode: ExecMode,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            stride_mult: 1,
            grid_cap: DEFAULT_GRID_CAP,
            mode: ExecMode::default(),
        }
    }
}

/// Full generation pipeline: controlled run, plant run, grid sweep, selection.
pub fn generate_suite(
    model: &HybridModel,
    conditions: &[TestCondition],
    sim_model: &SimModel,
    cfg: &SimConfig,
    opts: &GenOptions,
) -> Result<(TestSuite, GenMeta), GenError> {
    let controlled = CompiledSimModel::new(sim_model, false, cfg.eps_eq)?;
    let plant = CompiledSimModel::new(sim_model, true, cfg.eps_eq)?;
    let (t1, covered) = gen_from_controlled(conditions, &controlled, model, cfg)?;
    let (t2, covered) = gen_from_plant(conditions, &plant, model, cfg, &covered)?;
    let grid = gen_input_grid(&model.variables, opts.stride_mult);
    let (t3, covered, grid_meta) = gen_from_grid(
        conditions,
        &grid,
        model,
        cfg.eps_eq,
        &covered,
        opts.grid_cap,
        opts.mode,
    )?;
    let cases = select_tests(&t1, &t2, &t3, conditions.len());
    let meta = GenMeta {
        step1_cases: t1.len(),
        step2_cases: t2.len(),
        step3_cases: t3.len(),
        grid: grid_meta,
        stride_mult: opts.stride_mult,
        grid_cap: opts.grid_cap,
        grid_chunk: GRID_CHUNK,
    };
    let uncovered = covered.uncovered();
    Ok((
        TestSuite {
            variables: model.variables.iter().map(|v| v.name.clone()).collect(),
            cases,
            covered,
            uncovered,
        },
        meta,
    ))
}

/// Random baseline: `n` uniform draws over [-2·maxBound, 2·maxBound] per
/// variable, classified by the first satisfied test condition.
pub fn gen_random_suite(
    model: &HybridModel,
    conditions: &[TestCondition],
    n: usize,
    seed: u64,
    eps_eq: f64,
) -> Result<TestSuite, GenError> {
    let ctx = model.eval_context(eps_eq);
    let table = model.var_table();
    let compiled = compile_conditions(conditions, &table, &ctx)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut covered = CoveredSet::new(conditions.len());
    let mut cases = Vec::with_capacity(n);
    let mut stack = Vec::new();
    for _ in 0..n {
        let inputs: Vec<f64> = model
            .variables
            .iter()
            .map(|v| {
                let bound = 2.0 * v.lo.abs().max(v.hi.abs());
                rng.gen_range(-bound..=bound)
            })
            .collect();
        let mut class = VerdictClass::Acceptable;
        let mut id = None;
        for (i, cond) in compiled.iter().enumerate() {
            if cond.eval_bool_with_stack(&inputs, &mut stack)? {
                class = conditions[i].verdict_class;
                id = Some(i);
                covered.mark(i);
                break;
            }
        }
        cases.push(TestCase {
            inputs,
            initial_class: class,
            condition_id: id,
        });
    }
    let uncovered = covered.uncovered();
    Ok(TestSuite {
        variables: model.variables.iter().map(|v| v.name.clone()).collect(),
        cases,
        covered,
        uncovered,
    })
}

/// Suite file rendering: a JSON array of `{inputs, class, condition_id}`.
pub fn suite_to_json(suite: &TestSuite) -> String {
    let entries: Vec<serde_json::Value> = suite
        .cases
        .iter()
        .map(|case| {
            let inputs: serde_json::Map<String, serde_json::Value> = suite
                .variables
                .iter()
                .zip(&case.inputs)
                .map(|(name, value)| (name.clone(), serde_json::json!(value)))
                .collect();
            serde_json::json!({
                "inputs": inputs,
                "class": case.initial_class.token(),
                "condition_id": case.condition_id,
            })
        })
        .collect();
    serde_json::to_string_pretty(&entries).expect("suite serialization cannot fail")
}

/// Parses a suite file against the model's variable order.
pub fn suite_from_json(text: &str, variables: &[String]) -> Result<TestSuite, String> {
    #[derive(serde::Deserialize)]
    struct Entry {
        inputs: std::collections::BTreeMap<String, f64>,
        class: String,
        condition_id: Option<usize>,
    }
    let entries: Vec<Entry> = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let mut cases = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        let inputs = variables
            .iter()
            .map(|v| {
                entry
                    .inputs
                    .get(v)
                    .copied()
                    .ok_or_else(|| format!("case {i}: missing input `{v}`"))
            })
            .collect::<Result<Vec<f64>, String>>()?;
        let class = VerdictClass::parse_token(&entry.class)
            .ok_or_else(|| format!("case {i}: unknown class `{}`", entry.class))?;
        cases.push(TestCase {
            inputs,
            initial_class: class,
            condition_id: entry.condition_id,
        });
    }
    Ok(TestSuite {
        variables: variables.to_vec(),
        cases,
        covered: CoveredSet::new(0),
        uncovered: Vec::new(),
    })
}

/// CSV export: one row per case, `<vars...>,class,condition_id`.
pub fn suite_to_csv(suite: &TestSuite) -> String {
    let mut out = suite.variables.join(",");
    out.push_str(",class,condition_id\n");
    for case in &suite.cases {
        for v in &case.inputs {
            out.push_str(&format!("{v},"));
        }
        out.push_str(case.initial_class.token());
        match case.condition_id {
            Some(id) => out.push_str(&format!(",{id}")),
            None => out.push(','),
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::gen_test_conditions;
    use crate::graph::build_condition_graph;
    use crate::model::parse_hybrid_model;

    fn spec_var(lo: f64, hi: f64, precision: f64) -> VariableSpec {
        VariableSpec {
            name: "x".into(),
            lo,
            hi,
            precision,
        }
    }

    #[test]
    fn grid_covers_twice_the_bound_in_precision_steps() {
        let grid = gen_input_grid(&[spec_var(-3.0, 3.0, 1.0)], 1);
        let expected: Vec<f64> = (-6..=6).map(|v| v as f64).collect();
        assert_eq!(grid.axis(0), expected.as_slice());
        assert_eq!(grid.cardinality(), 13);
    }

    #[test]
    fn grid_with_coarse_precision_keeps_endpoints() {
        // maxBound = 1, precision = 4: the sequence -2:4:2 is {-2, 2}.
        let grid = gen_input_grid(&[spec_var(-1.0, 1.0, 4.0)], 1);
        assert_eq!(grid.axis(0), &[-2.0, 2.0]);
    }

    #[test]
    fn grid_cardinality_is_the_product() {
        let vars = vec![
            spec_var(-3.0, 3.0, 1.0),
            VariableSpec {
                name: "y".into(),
                lo: -3.0,
                hi: 3.0,
                precision: 1.0,
            },
        ];
        let grid = gen_input_grid(&vars, 1);
        assert_eq!(grid.cardinality(), 169);
        let points: Vec<Vec<f64>> = grid.iter().collect();
        assert_eq!(points.len(), 169);
        assert_eq!(points[0], vec![-6.0, -6.0]);
        // Row-major: the last variable varies fastest.
        assert_eq!(points[1], vec![-6.0, -5.0]);
        assert_eq!(points[168], vec![6.0, 6.0]);
    }

    #[test]
    fn stride_multiplier_coarsens_axes() {
        let grid = gen_input_grid(&[spec_var(-3.0, 3.0, 1.0)], 2);
        let expected: Vec<f64> = (-3..=3).map(|v| (v * 2) as f64).collect();
        assert_eq!(grid.axis(0), expected.as_slice());
    }

    fn band_model() -> (HybridModel, Vec<TestCondition>) {
        // One variable, two modes split at x = 1, failure beyond |x| > 3.
        let model = parse_hybrid_model(
            r#"{
                "variables": [{"name": "x", "lo": -3, "hi": 3, "precision": 1}],
                "modes": [
                    {"name": "low", "invariant": "x < 1", "flows": {"x": "0"}},
                    {"name": "high", "invariant": "x >= 1", "flows": {"x": "0"}}
                ],
                "transitions": [
                    {"src": "low", "dst": "high", "guard": "x >= 1"},
                    {"src": "high", "dst": "low", "guard": "x < 1"}
                ],
                "goal": {"final_modes": ["high"]},
                "unacceptable": ["abs(x) > 3"]
            }"#,
        )
        .unwrap();
        let graph = build_condition_graph(&model, Some(model.unacceptable.clone())).unwrap();
        let conditions = gen_test_conditions(&graph).unwrap();
        (model, conditions)
    }

    #[test]
    fn grid_sweep_covers_satisfiable_conditions_and_reports_the_rest() {
        let (model, mut conditions) = band_model();
        // Append an unsatisfiable condition.
        let unsat = crate::conditions::parse_test_condition(
            "low,low#(x > 0) && (x < 0)@acceptable",
            conditions.len(),
        )
        .unwrap();
        conditions.push(unsat);
        let grid = gen_input_grid(&model.variables, 1);
        let covered = CoveredSet::new(conditions.len());
        let (cases, covered, meta) = gen_from_grid(
            &conditions,
            &grid,
            &model,
            1e-9,
            &covered,
            DEFAULT_GRID_CAP,
            ExecMode::Sequential,
        )
        .unwrap();
        assert!(!meta.skipped);
        assert_eq!(covered.uncovered(), vec![conditions.len() - 1]);
        assert!(!cases.is_empty());
        // A point beyond the range boundary covers the failing condition.
        let fail_case = cases
            .iter()
            .find(|c| c.initial_class == VerdictClass::Failed)
            .unwrap();
        assert!(fail_case.inputs[0].abs() > 3.0);
    }

    #[test]
    fn grid_skipped_when_everything_is_covered() {
        let (model, conditions) = band_model();
        let mut covered = CoveredSet::new(conditions.len());
        for id in 0..conditions.len() {
            covered.mark(id);
        }
        let grid = gen_input_grid(&model.variables, 1);
        // A cap of zero would reject any enumeration; the early return must
        // win because there is nothing left to cover.
        let (cases, covered, meta) = gen_from_grid(
            &conditions,
            &grid,
            &model,
            1e-9,
            &covered,
            0,
            ExecMode::Sequential,
        )
        .unwrap();
        assert!(cases.is_empty());
        assert!(meta.skipped);
        assert_eq!(meta.points_evaluated, 0);
        assert!(covered.all_covered());
    }

    #[test]
    fn grid_cap_is_enforced() {
        let (model, conditions) = band_model();
        let grid = gen_input_grid(&model.variables, 1);
        let covered = CoveredSet::new(conditions.len());
        let err = gen_from_grid(
            &conditions,
            &grid,
            &model,
            1e-9,
            &covered,
            4,
            ExecMode::Sequential,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            GenError::GridTooLarge {
                cardinality: 13,
                cap: 4
            }
        ));
    }

    #[test]
    fn parallel_and_sequential_grid_sweeps_agree() {
        let (model, conditions) = band_model();
        let grid = gen_input_grid(&model.variables, 1);
        let covered = CoveredSet::new(conditions.len());
        let (seq_cases, seq_cov, _) = gen_from_grid(
            &conditions,
            &grid,
            &model,
            1e-9,
            &covered,
            DEFAULT_GRID_CAP,
            ExecMode::Sequential,
        )
        .unwrap();
        #[cfg(feature = "parallel")]
        {
            let (par_cases, par_cov, _) = gen_from_grid(
                &conditions,
                &grid,
                &model,
                1e-9,
                &covered,
                DEFAULT_GRID_CAP,
                ExecMode::Parallel,
            )
            .unwrap();
            assert_eq!(seq_cases, par_cases);
            assert_eq!(seq_cov, par_cov);
        }
        assert!(seq_cov.count() > 0);
        let _ = seq_cases;
    }

    #[test]
    fn selection_keeps_one_case_per_condition() {
        let case = |v: f64, id: usize| TestCase {
            inputs: vec![v],
            initial_class: VerdictClass::Acceptable,
            condition_id: Some(id),
        };
        let selected = select_tests(&[case(2.0, 0), case(1.0, 0)], &[case(0.5, 0)], &[], 1);
        assert_eq!(selected.len(), 1);
        assert_eq!(selected[0].inputs, vec![0.5]);
    }

    #[test]
    fn selection_prefers_earlier_steps_on_exact_ties() {
        let mk = |id: usize, class| TestCase {
            inputs: vec![1.0, 2.0],
            initial_class: class,
            condition_id: Some(id),
        };
        // Identical inputs from steps 1 and 3: step 1 wins per id; the
        // cross-class dedup then keeps the lowest condition id.
        let selected = select_tests(
            &[mk(3, VerdictClass::Acceptable)],
            &[],
            &[mk(7, VerdictClass::Acceptable)],
            8,
        );
        assert_eq!(selected.len(), 1);
        assert_eq!(selected[0].condition_id, Some(3));
    }

    #[test]
    fn dedup_is_by_inputs_and_class() {
        let mk = |id: usize, v: f64, class| TestCase {
            inputs: vec![v],
            initial_class: class,
            condition_id: Some(id),
        };
        let selected = select_tests(
            &[
                mk(0, 1.0, VerdictClass::Acceptable),
                mk(1, 1.0, VerdictClass::Acceptable),
                mk(2, 1.0, VerdictClass::Passed),
            ],
            &[],
            &[],
            3,
        );
        // Conditions 0 and 1 collapse; the class difference keeps condition 2.
        assert_eq!(selected.len(), 2);
        assert_eq!(selected[0].condition_id, Some(0));
        assert_eq!(selected[1].condition_id, Some(2));
    }

    #[test]
    fn random_suite_is_seeded_and_in_bounds() {
        let (model, conditions) = band_model();
        let a = gen_random_suite(&model, &conditions, 50, 7, 1e-9).unwrap();
        let b = gen_random_suite(&model, &conditions, 50, 7, 1e-9).unwrap();
        assert_eq!(a, b);
        let c = gen_random_suite(&model, &conditions, 50, 8, 1e-9).unwrap();
        assert_ne!(a, c);
        assert!(gen_random_suite(&model, &conditions, 0, 7, 1e-9)
            .unwrap()
            .is_empty());
        let big = gen_random_suite(&model, &conditions, 10_000, 3, 1e-9).unwrap();
        for case in &big.cases {
            assert!(case.inputs[0] >= -6.0 && case.inputs[0] <= 6.0);
        }
        // Classes must match the assigned condition.
        for case in &big.cases {
            if let Some(id) = case.condition_id {
                assert_eq!(case.initial_class, conditions[id].verdict_class);
            } else {
                assert_eq!(case.initial_class, VerdictClass::Acceptable);
            }
        }
    }

    #[test]
    fn suite_json_round_trips() {
        let (model, conditions) = band_model();
        let suite = gen_random_suite(&model, &conditions, 5, 1, 1e-9).unwrap();
        let json = suite_to_json(&suite);
        let back = suite_from_json(&json, &suite.variables).unwrap();
        assert_eq!(back.cases, suite.cases);
        let csv = suite_to_csv(&suite);
        assert!(csv.starts_with("x,class,condition_id\n"));
        assert_eq!(csv.lines().count(), 6);
    }
}
