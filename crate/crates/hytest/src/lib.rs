//! Model-based test generation and reactive test oracles for cyber-physical
//! systems, driven by hybrid automaton models.
//!
//! The pipeline turns a hybrid automaton of a CPS into executable tests:
//!
//! 1. [`graph`] augments the automaton into a *condition graph*: a failing
//!    node, invariant self-loops, unacceptable-condition edges and completed,
//!    mutually exclusive edge labels.
//! 2. [`conditions`] derives classified *test conditions* from the edges,
//!    which partition the input space.
//! 3. [`testgen`] generates candidate test cases from a controlled-system
//!    trace, an uncontrolled-plant trace and a value grid over the variable
//!    ranges, then selects a deduplicated suite.
//! 4. [`sim`] executes block-dataflow simulation models (and raw hybrid
//!    models) with a fixed-step RK4 integrator.
//! 5. [`oracle`] replays test cases against a simulation model and issues
//!    reactive verdicts from the mode-class timeline implied by the test
//!    conditions.
//! 6. [`mutation`] seeds single-site faults into simulation models, and
//!    [`bench`] drives the full study protocol against a random baseline.
//!
//! With the default `parallel` feature, grid sweeps and suite executions run
//! data-parallel under rayon; disabling it yields a sequential build with
//! identical outputs.

pub mod bench;
pub mod conditions;
pub mod exec;
pub mod expr;
pub mod graph;
pub mod model;
pub mod mutation;
pub mod oracle;
pub mod sim;
pub mod testgen;

pub use expr::{
    conjoin, disjoin, eval_expr, negate, parse_expr, CompiledExpr, EvalContext, Expr,
    VarAssignment, VarTable,
};
pub use model::{parse_hybrid_model, parse_sim_model, HybridModel, SimModel, FAILING_MODE};
