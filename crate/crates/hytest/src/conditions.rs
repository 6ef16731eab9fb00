//! Test-condition generation.
//!
//! Each condition-graph edge becomes a classified test condition used both to
//! partition the input space for generation and to classify runtime samples
//! for the oracle. When the graph has no final modes but carries a goal
//! condition, every edge into an acceptable destination splits in two: the
//! goal-negated variant stays acceptable, the goal-conjoined variant counts
//! as passed.

use crate::expr::{grouped, negate, parse_expr, Expr, TypeError};
use crate::graph::{ConditionGraph, ModeClass};
use std::fmt;
use thiserror::Error;

/// Verdict class a test condition assigns to states that satisfy it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VerdictClass {
    Acceptable,
    Passed,
    Failed,
}

impl VerdictClass {
    pub fn token(self) -> &'static str {
        match self {
            VerdictClass::Acceptable => "acceptable",
            VerdictClass::Passed => "passed",
            VerdictClass::Failed => "failed",
        }
    }

    pub fn parse_token(s: &str) -> Option<VerdictClass> {
        match s.to_ascii_lowercase().as_str() {
            "acceptable" => Some(VerdictClass::Acceptable),
            "passed" => Some(VerdictClass::Passed),
            "failed" => Some(VerdictClass::Failed),
            _ => None,
        }
    }

    /// Mode class implied on the destination when this condition holds.
    pub fn mode_class(self) -> ModeClass {
        match self {
            VerdictClass::Acceptable => ModeClass::Acceptable,
            VerdictClass::Passed => ModeClass::Final,
            VerdictClass::Failed => ModeClass::Failing,
        }
    }
}

impl fmt::Display for VerdictClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.token())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestCondition {
    /// Dense index, assigned in condition-graph edge order; goal-split pairs
    /// are adjacent with the acceptable variant first.
    pub id: usize,
    pub source: String,
    pub destination: String,
    pub cond: Expr,
    pub verdict_class: VerdictClass,
}

impl TestCondition {
    /// Canonical serialization `<source>,<destination>#<expr>@<class>`.
    pub fn canonical(&self) -> String {
        format!(
            "{},{}#{}@{}",
            self.source, self.destination, self.cond, self.verdict_class
        )
    }
}

impl fmt::Display for TestCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.canonical())
    }
}

#[derive(Debug, Error)]
pub enum ConditionError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("malformed test condition `{text}`: {reason}")]
    Malformed { text: String, reason: String },
}

/// Derives one classified test condition per condition-graph edge.
pub fn gen_test_conditions(g: &ConditionGraph) -> Result<Vec<TestCondition>, ConditionError> {
    let splitting = g.final_modes().is_empty() && g.goal_expr.is_some();
    let mut out = Vec::with_capacity(g.edges.len());
    for edge in &g.edges {
        let dest_class = g
            .node_class(&edge.destination)
            .expect("edge destinations are graph nodes");
        match dest_class {
            ModeClass::Failing => push(&mut out, edge, edge.label.clone(), VerdictClass::Failed),
            ModeClass::Final => push(&mut out, edge, edge.label.clone(), VerdictClass::Passed),
            ModeClass::Acceptable => {
                if splitting {
                    let goal = g.goal_expr.as_ref().unwrap();
                    let stay = Expr::and(grouped(edge.label.clone()), negate(goal.clone())?);
                    let reach = Expr::and(grouped(edge.label.clone()), grouped(goal.clone()));
                    push(&mut out, edge, stay, VerdictClass::Acceptable);
                    push(&mut out, edge, reach, VerdictClass::Passed);
                } else {
                    push(&mut out, edge, edge.label.clone(), VerdictClass::Acceptable);
                }
            }
        }
    }
    Ok(out)
}

fn push(
    out: &mut Vec<TestCondition>,
    edge: &crate::graph::GraphEdge,
    cond: Expr,
    verdict_class: VerdictClass,
) {
    out.push(TestCondition {
        id: out.len(),
        source: edge.source.clone(),
        destination: edge.destination.clone(),
        cond,
        verdict_class,
    });
}

/// Formats a condition in its canonical form (see [`TestCondition::canonical`]).
pub fn format_test_condition(t: &TestCondition) -> String {
    t.canonical()
}

/// Parses the canonical form back; the class token is case-insensitive and
/// the id is assigned by the caller.
pub fn parse_test_condition(text: &str, id: usize) -> Result<TestCondition, ConditionError> {
    let malformed = |reason: &str| ConditionError::Malformed {
        text: text.to_string(),
        reason: reason.to_string(),
    };
    let (src, rest) = text
        .split_once(',')
        .ok_or_else(|| malformed("missing `,` between source and destination"))?;
    let (dst, rest) = rest
        .split_once('#')
        .ok_or_else(|| malformed("missing `#` before the condition"))?;
    let (expr_text, class_text) = rest
        .rsplit_once('@')
        .ok_or_else(|| malformed("missing `@<class>` suffix"))?;
    let verdict_class = VerdictClass::parse_token(class_text.trim())
        .ok_or_else(|| malformed("class must be acceptable, passed or failed"))?;
    let cond = parse_expr(expr_text).map_err(|e| malformed(&e.to_string()))?;
    if src.is_empty() || dst.is_empty() {
        return Err(malformed("empty mode name"));
    }
    Ok(TestCondition {
        id,
        source: src.to_string(),
        destination: dst.to_string(),
        cond,
        verdict_class,
    })
}

/// Renders a test-condition list file: one canonical string per line.
pub fn render_condition_list(conditions: &[TestCondition]) -> String {
    let mut out = String::new();
    for t in conditions {
        out.push_str(&t.canonical());
        out.push('\n');
    }
    out
}

/// Parses a test-condition list file; `#`-prefixed lines and blank lines are
/// skipped.
pub fn parse_condition_list(text: &str) -> Result<Vec<TestCondition>, ConditionError> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let id = out.len();
        out.push(parse_test_condition(line, id)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_condition_graph;
    use crate::model::{parse_hybrid_model, FAILING_MODE};

    fn pendulum_conditions() -> Vec<TestCondition> {
        let doc = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../models/pendulum/hybrid.json"
        ))
        .unwrap();
        let h = parse_hybrid_model(&doc).unwrap();
        let g = build_condition_graph(&h, Some(h.unacceptable.clone())).unwrap();
        gen_test_conditions(&g).unwrap()
    }

    #[test]
    fn stabilize_self_loop_serializes_to_the_sample() {
        let tcs = pendulum_conditions();
        let stay = tcs
            .iter()
            .find(|t| t.source == "stabilize" && t.destination == "stabilize")
            .unwrap();
        assert_eq!(
            stay.canonical(),
            "stabilize,stabilize#(abs(z(th,thd)) < u_max) && !(z(th,thd) > u_max) \
             && !(z(th,thd) < -u_max) && !(abs(x) > 3)@passed"
        );
    }

    #[test]
    fn one_condition_per_edge_without_goal_splitting() {
        let tcs = pendulum_conditions();
        assert_eq!(tcs.len(), 13);
        for (i, t) in tcs.iter().enumerate() {
            assert_eq!(t.id, i);
        }
    }

    #[test]
    fn failing_destinations_class_failed() {
        let tcs = pendulum_conditions();
        for t in &tcs {
            assert_eq!(
                t.verdict_class == VerdictClass::Failed,
                t.destination == FAILING_MODE,
                "{}",
                t.canonical()
            );
        }
        let fail = tcs
            .iter()
            .find(|t| t.source == "stabilize" && t.destination == FAILING_MODE)
            .unwrap();
        assert_eq!(fail.canonical(), "stabilize,__failing__#(abs(x) > 3)@failed");
    }

    #[test]
    fn classification_matches_destination_class() {
        let tcs = pendulum_conditions();
        for t in &tcs {
            match t.destination.as_str() {
                "stabilize" => assert_eq!(t.verdict_class, VerdictClass::Passed),
                FAILING_MODE => assert_eq!(t.verdict_class, VerdictClass::Failed),
                _ => assert_eq!(t.verdict_class, VerdictClass::Acceptable),
            }
        }
    }

    #[test]
    fn goal_expression_splits_acceptable_edges() {
        let doc = r#"{
            "variables": [{"name": "x", "lo": -4, "hi": 4, "precision": 1}],
            "modes": [
                {"name": "a", "invariant": "x > 0", "flows": {"x": "0"}},
                {"name": "b", "invariant": "x <= 0", "flows": {"x": "0"}}
            ],
            "transitions": [{"src": "a", "dst": "b", "guard": "x <= 0"}],
            "goal": {"expr": "x > 2"},
            "unacceptable": ["abs(x) > 3"]
        }"#;
        let h = parse_hybrid_model(doc).unwrap();
        let g = build_condition_graph(&h, Some(h.unacceptable.clone())).unwrap();
        let tcs = gen_test_conditions(&g).unwrap();
        // 6 edges: 1 transition + 2 self-loops + 2 fail edges + fail self-loop;
        // the 3 acceptable-destination edges split in two.
        assert_eq!(g.edges.len(), 6);
        assert_eq!(tcs.len(), 9);
        let split: Vec<&TestCondition> = tcs
            .iter()
            .filter(|t| t.source == "a" && t.destination == "b")
            .collect();
        assert_eq!(split.len(), 2);
        assert_eq!(split[0].verdict_class, VerdictClass::Acceptable);
        assert_eq!(split[1].verdict_class, VerdictClass::Passed);
        assert_eq!(split[0].id + 1, split[1].id);
        assert!(split[0].canonical().contains("&& !(x > 2)@acceptable"));
        assert!(split[1].canonical().contains("&& (x > 2)@passed"));
    }

    #[test]
    fn canonical_round_trip() {
        let tcs = pendulum_conditions();
        for t in &tcs {
            let back = parse_test_condition(&t.canonical(), t.id).unwrap();
            assert_eq!(&back, t);
        }
    }

    #[test]
    fn class_token_case_insensitive_on_parse() {
        let t = parse_test_condition("a,b#x > 0@PASSED", 0).unwrap();
        assert_eq!(t.verdict_class, VerdictClass::Passed);
        assert!(t.canonical().ends_with("@passed"));
    }

    #[test]
    fn malformed_strings_rejected() {
        assert!(parse_test_condition("a b#x>0@passed", 0).is_err());
        assert!(parse_test_condition("a,b#x>0", 0).is_err());
        assert!(parse_test_condition("a,b#x>0@maybe", 0).is_err());
        assert!(parse_test_condition("a,b#x >< 0@passed", 0).is_err());
    }

    #[test]
    fn condition_list_file_round_trips_with_comments() {
        let tcs = pendulum_conditions();
        let mut text = String::from("# pendulum conditions\n\n");
        text.push_str(&render_condition_list(&tcs));
        let back = parse_condition_list(&text).unwrap();
        assert_eq!(back, tcs);
    }

    #[test]
    fn free_variables_are_model_names() {
        let tcs = pendulum_conditions();
        for t in &tcs {
            for v in t.cond.free_vars() {
                assert!(
                    ["th", "thd", "x", "xd", "u_max"].contains(&v.as_str()),
                    "unexpected free variable {v} in {t}"
                );
            }
        }
    }
}
