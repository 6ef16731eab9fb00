//! Reactive test oracle.
//!
//! A test case is executed by simulating the model from the case's inputs for
//! the full horizon. At every sample instant, the satisfied test conditions
//! imply a set of possible (mode, class) pairs; the oracle checks that some
//! transition between consecutive sets is allowed by the condition graph,
//! that the failing mode is never entered, and that the run ends in a final /
//! goal-satisfying state. Simulation exceptions are failures; a sample that
//! matches no condition at all aborts with a model-defect error instead of a
//! verdict.

use crate::conditions::{TestCondition, VerdictClass};
use crate::exec::{map_range, ExecMode};
use crate::expr::{
    eval_expr, CompileError, CompiledExpr, EvalContext, EvalError, Value, VarAssignment, VarTable,
};
use crate::graph::{ConditionGraph, GraphError, ModeClass};
use crate::model::{HybridModel, SimModel};
use crate::sim::{CompiledSimModel, SimConfig, SimError, Trace};
use crate::testgen::{compile_conditions, TestCase, TestSuite};
use serde::Serialize;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VerdictOutcome {
    Passed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FailureReason {
    /// No pair of modes between consecutive sample instants is connected in
    /// the condition graph.
    DisallowedTransition {
        sample: usize,
        from: Vec<(String, ModeClass)>,
        to: Vec<(String, ModeClass)>,
    },
    /// The failing mode shows up in the possible-mode set.
    EnteredFailing { sample: usize },
    /// The run ends without reaching a final / goal-satisfying state.
    GoalNotReached,
    /// A non-failing mode follows a failing one: the system kept operating
    /// after it failed.
    RecoveredFromFailing,
    SimulationException { message: String },
}

impl Serialize for ModeClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub outcome: VerdictOutcome,
    pub reasons: Vec<FailureReason>,
}

impl Verdict {
    fn passed() -> Self {
        Verdict {
            outcome: VerdictOutcome::Passed,
            reasons: Vec::new(),
        }
    }

    fn failed(reasons: Vec<FailureReason>) -> Self {
        debug_assert!(!reasons.is_empty());
        Verdict {
            outcome: VerdictOutcome::Failed,
            reasons,
        }
    }

    pub fn is_passed(&self) -> bool {
        self.outcome == VerdictOutcome::Passed
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(
        "the hybrid model was not designed correctly: sample {sample} (t={time}) \
         matches no test condition"
    )]
    ModelDefect { sample: usize, time: f64 },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("condition evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Possible modes per sample instant, as implied by the test conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSetTimeline(pub Vec<Vec<(String, ModeClass)>>);

/// The (mode, class) pairs implied by the conditions a sample satisfies.
///
/// This is the reference route: it evaluates every condition with the tree
/// walker. Hot paths build timelines from compiled conditions; both must
/// agree, which the tests check sample by sample.
pub fn possible_modes(
    conditions: &[TestCondition],
    sample: &VarAssignment,
    ctx: &EvalContext,
) -> Result<Vec<(String, ModeClass)>, OracleError> {
    let mut out: Vec<(String, ModeClass)> = Vec::new();
    for t in conditions {
        match eval_expr(&t.cond, sample, ctx)? {
            Value::Bool(true) => {
                let entry = (t.destination.clone(), t.verdict_class.mode_class());
                if !out.contains(&entry) {
                    out.push(entry);
                }
            }
            Value::Bool(false) => {}
            Value::Num(_) => {
                return Err(OracleError::Eval(EvalError::NotABoolean));
            }
        }
    }
    Ok(out)
}

fn timeline_from_trace(
    conditions: &[TestCondition],
    compiled: &[CompiledExpr],
    trace: &Trace,
) -> Result<ModeSetTimeline, OracleError> {
    let mut stack = Vec::new();
    let mut sets = Vec::with_capacity(trace.len());
    for row in &trace.samples {
        let mut set: Vec<(String, ModeClass)> = Vec::new();
        for (i, cond) in compiled.iter().enumerate() {
            if cond.eval_bool_with_stack(row, &mut stack)? {
                let entry = (
                    conditions[i].destination.clone(),
                    conditions[i].verdict_class.mode_class(),
                );
                if !set.contains(&entry) {
                    set.push(entry);
                }
            }
        }
        sets.push(set);
    }
    Ok(ModeSetTimeline(sets))
}

/// Applies the verdict rules to a mode-set timeline.
///
/// Transition legality between consecutive sets is existential: the step is
/// legal if some pair of modes is connected, which avoids false alarms from
/// deliberately overlapping conditions.
pub fn verdict_from_timeline(
    timeline: &ModeSetTimeline,
    initial_class: VerdictClass,
    graph: &ConditionGraph,
    times: &[f64],
) -> Result<Verdict, OracleError> {
    let sets = &timeline.0;
    for (i, set) in sets.iter().enumerate() {
        if set.is_empty() {
            return Err(OracleError::ModelDefect {
                sample: i,
                time: times.get(i).copied().unwrap_or(f64::NAN),
            });
        }
    }
    let ids: Vec<Vec<usize>> = sets
        .iter()
        .map(|set| {
            set.iter()
                .map(|(name, _)| graph.node_id(name))
                .collect::<Result<_, _>>()
        })
        .collect::<Result<_, _>>()?;

    let mut reasons = Vec::new();
    for j in 0..sets.len().saturating_sub(1) {
        let legal = ids[j]
            .iter()
            .any(|&a| ids[j + 1].iter().any(|&b| graph.is_allowed_ids(a, b)));
        if !legal {
            reasons.push(FailureReason::DisallowedTransition {
                sample: j,
                from: sets[j].clone(),
                to: sets[j + 1].clone(),
            });
            break;
        }
    }
    let failing_at = sets
        .iter()
        .position(|set| set.iter().any(|(_, c)| *c == ModeClass::Failing));
    if let Some(j) = failing_at {
        reasons.push(FailureReason::EnteredFailing { sample: j });
        let recovered = sets[j + 1..]
            .iter()
            .any(|set| set.iter().any(|(_, c)| *c != ModeClass::Failing));
        if recovered {
            reasons.push(FailureReason::RecoveredFromFailing);
        }
    }
    let last = sets.last().expect("timeline is non-empty");
    let ends_final = last.iter().any(|(_, c)| *c == ModeClass::Final);
    if reasons.is_empty() {
        if ends_final {
            if initial_class == VerdictClass::Failed {
                // A case that starts in the failing region must not end well.
                reasons.push(FailureReason::EnteredFailing { sample: 0 });
            }
        } else {
            reasons.push(FailureReason::GoalNotReached);
        }
    }
    if reasons.is_empty() {
        Ok(Verdict::passed())
    } else {
        Ok(Verdict::failed(reasons))
    }
}

/// Executes one test case against a compiled model and issues the verdict.
pub fn run_test_compiled(
    model: &CompiledSimModel,
    case: &TestCase,
    variables: &[String],
    graph: &ConditionGraph,
    conditions: &[TestCondition],
    compiled_conditions: &[CompiledExpr],
    cfg: &SimConfig,
) -> Result<Verdict, OracleError> {
    let overrides = case.assignment(variables);
    let trace = match model.simulate(cfg, Some(&overrides)) {
        Ok(trace) => trace,
        // Any runtime blow-up of the simulation is a failed verdict, not an
        // oracle error.
        Err(e @ (SimError::NonFinite { .. } | SimError::Eval { .. } | SimError::StepBudget { .. })) => {
            return Ok(Verdict::failed(vec![FailureReason::SimulationException {
                message: e.to_string(),
            }]))
        }
        Err(other) => return Err(other.into()),
    };
    let timeline = timeline_from_trace(conditions, compiled_conditions, &trace)?;
    verdict_from_timeline(&timeline, case.initial_class, graph, &trace.times)
}

/// One-shot variant of [`run_test_compiled`] for single executions.
pub fn run_test(
    sim_model: &SimModel,
    case: &TestCase,
    model: &HybridModel,
    graph: &ConditionGraph,
    conditions: &[TestCondition],
    cfg: &SimConfig,
) -> Result<Verdict, OracleError> {
    let compiled_model = CompiledSimModel::new(sim_model, false, cfg.eps_eq)?;
    let ctx = model.eval_context(cfg.eps_eq);
    let table = VarTable::new(compiled_model.output_names().iter().map(|s| s.to_string()));
    let compiled_conditions = compile_conditions(conditions, &table, &ctx)?;
    run_test_compiled(
        &compiled_model,
        case,
        &model.var_names().iter().map(|s| s.to_string()).collect::<Vec<_>>(),
        graph,
        conditions,
        &compiled_conditions,
        cfg,
    )
}

/// Outcome of one (model, case) execution in a suite run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CaseOutcome {
    Verdict(Verdict),
    /// Model-defect diagnosis; recorded per case without aborting the batch.
    Defect { message: String },
}

impl CaseOutcome {
    pub fn is_passed(&self) -> bool {
        matches!(self, CaseOutcome::Verdict(v) if v.is_passed())
    }

    pub fn is_failed(&self) -> bool {
        matches!(self, CaseOutcome::Verdict(v) if !v.is_passed())
    }

    pub fn is_defect(&self) -> bool {
        matches!(self, CaseOutcome::Defect { .. })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelRunReport {
    pub name: String,
    pub outcomes: Vec<CaseOutcome>,
    pub exec_seconds: f64,
    /// Set on faulty models only: some case passed on the reference and
    /// failed here (or, when enabled, the other way around).
    pub revealed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub case_count: usize,
    pub reference: ModelRunReport,
    pub faulty: Vec<ModelRunReport>,
    pub revealed_count: usize,
    pub defect_count: usize,
}

impl SuiteReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    /// Also attribute a fault when a case the reference fails passes on the
    /// faulty model.
    pub count_unexpected_pass: bool,
    pub mode: ExecMode,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            count_unexpected_pass: false,
            mode: ExecMode::default(),
        }
    }
}

fn run_model_cases(
    compiled_model: &CompiledSimModel,
    suite: &TestSuite,
    graph: &ConditionGraph,
    conditions: &[TestCondition],
    compiled_conditions: &[CompiledExpr],
    cfg: &SimConfig,
    mode: ExecMode,
) -> Vec<CaseOutcome> {
    map_range(mode, suite.cases.len(), |i| {
        match run_test_compiled(
            compiled_model,
            &suite.cases[i],
            &suite.variables,
            graph,
            conditions,
            compiled_conditions,
            cfg,
        ) {
            Ok(verdict) => CaseOutcome::Verdict(verdict),
            Err(e) => CaseOutcome::Defect {
                message: e.to_string(),
            },
        }
    })
}

/// Runs the suite on the reference model and every faulty variant, and
/// attributes revealed faults by comparing verdicts against the reference.
pub fn run_suite(
    reference: &SimModel,
    faulty: &[(String, SimModel)],
    suite: &TestSuite,
    model: &HybridModel,
    graph: &ConditionGraph,
    conditions: &[TestCondition],
    cfg: &SimConfig,
    opts: &OracleOptions,
) -> Result<SuiteReport, OracleError> {
    let ctx = model.eval_context(cfg.eps_eq);
    let ref_compiled = CompiledSimModel::new(reference, false, cfg.eps_eq)?;
    let table = VarTable::new(ref_compiled.output_names().iter().map(|s| s.to_string()));
    let compiled_conditions = compile_conditions(conditions, &table, &ctx)?;

    let started = Instant::now();
    let ref_outcomes = run_model_cases(
        &ref_compiled,
        suite,
        graph,
        conditions,
        &compiled_conditions,
        cfg,
        opts.mode,
    );
    let reference_report = ModelRunReport {
        name: "reference".to_string(),
        outcomes: ref_outcomes,
        exec_seconds: started.elapsed().as_secs_f64(),
        revealed: false,
    };

    let compiled_faulty: Vec<(usize, Result<CompiledSimModel, SimError>)> = faulty
        .iter()
        .enumerate()
        .map(|(i, (_, m))| (i, CompiledSimModel::new(m, false, cfg.eps_eq).map_err(Into::into)))
        .collect();
    let mut faulty_reports = Vec::with_capacity(faulty.len());
    for (i, compiled) in compiled_faulty {
        let name = faulty[i].0.clone();
        let started = Instant::now();
        let outcomes = match compiled {
            Ok(compiled) => run_model_cases(
                &compiled,
                suite,
                graph,
                conditions,
                &compiled_conditions,
                cfg,
                opts.mode,
            ),
            // A mutant that fails to compile/validate counts as an exception
            // on every case.
            Err(e) => (0..suite.cases.len())
                .map(|_| {
                    CaseOutcome::Verdict(Verdict::failed(vec![FailureReason::SimulationException {
                        message: e.to_string(),
                    }]))
                })
                .collect(),
        };
        let revealed = reference_report
            .outcomes
            .iter()
            .zip(&outcomes)
            .any(|(r, m)| {
                (r.is_passed() && m.is_failed())
                    || (opts.count_unexpected_pass && r.is_failed() && m.is_passed())
            });
        faulty_reports.push(ModelRunReport {
            name,
            outcomes,
            exec_seconds: started.elapsed().as_secs_f64(),
            revealed,
        });
    }
    let revealed_count = faulty_reports.iter().filter(|r| r.revealed).count();
    let defect_count = std::iter::once(&reference_report)
        .chain(&faulty_reports)
        .flat_map(|r| &r.outcomes)
        .filter(|o| o.is_defect())
        .count();
    Ok(SuiteReport {
        case_count: suite.cases.len(),
        reference: reference_report,
        faulty: faulty_reports,
        revealed_count,
        defect_count,
    })
}
