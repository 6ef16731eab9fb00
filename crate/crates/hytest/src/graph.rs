//! Condition graph construction.
//!
//! The hybrid model is augmented into a graph that makes every way the CPS
//! can change mode — or fail — explicit: one node per mode plus a dedicated
//! failing node, invariant self-loops, unacceptable-condition edges into the
//! failing node, and completed edge labels that are pairwise exclusive per
//! source (each label conjoins the negations of its sibling labels and of the
//! unacceptable-condition expression).

use crate::expr::{conjoin, grouped, negate, Expr, TypeError};
use crate::model::{Goal, HybridModel, FAILING_MODE};
use std::collections::{HashMap, HashSet};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModeClass {
    Acceptable,
    Final,
    Failing,
}

impl fmt::Display for ModeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModeClass::Acceptable => write!(f, "acceptable"),
            ModeClass::Final => write!(f, "final"),
            ModeClass::Failing => write!(f, "failing"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub name: String,
    pub class: ModeClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEdge {
    pub source: String,
    pub destination: String,
    pub label: Expr,
}

#[derive(Debug, Clone)]
pub struct ConditionGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    /// Goal condition kept verbatim when the goal is not a mode invariant.
    pub goal_expr: Option<Expr>,
    /// Completed disjunction of all unacceptable conditions, absent when the
    /// model has none (the failing node is then isolated and ignored).
    pub unacceptable_expr: Option<Expr>,
    node_index: HashMap<String, usize>,
    edge_set: HashSet<(usize, usize)>,
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("goal references unknown mode `{0}`")]
    UnknownGoalMode(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error(transparent)]
    Type(#[from] TypeError),
}

/// Fallback unacceptable condition when the designer provides none: the
/// conjunction of the negations of every invariant and guard in the model.
/// Returns `None` when the model has no conditions at all.
pub fn default_unacceptable(h: &HybridModel) -> Result<Option<Expr>, GraphError> {
    let mut acceptable = Vec::new();
    for m in &h.modes {
        if let Some(inv) = &m.invariant {
            acceptable.push(inv.clone());
        }
    }
    for t in &h.transitions {
        acceptable.push(t.guard.clone());
    }
    if acceptable.is_empty() {
        return Ok(None);
    }
    let negated = acceptable
        .into_iter()
        .map(negate)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Some(conjoin(negated)?))
}

/// Builds the condition graph from a validated hybrid model and the
/// unacceptable conditions (the model's own, or [`default_unacceptable`]).
///
/// Edge order is fixed — hybrid-model transitions in declaration order, then
/// invariant self-loops, then failing edges — so downstream test-condition
/// numbering is deterministic.
pub fn build_condition_graph(
    h: &HybridModel,
    unacceptable: Option<Vec<Expr>>,
) -> Result<ConditionGraph, GraphError> {
    let mut nodes: Vec<GraphNode> = h
        .modes
        .iter()
        .map(|m| GraphNode {
            name: m.name.clone(),
            class: ModeClass::Acceptable,
        })
        .collect();

    // Final modes come straight from the designer's goal; a goal that is not
    // a mode invariant is kept as an expression for test-condition splitting.
    let mut goal_expr = None;
    match &h.goal {
        Goal::FinalModes(finals) => {
            for name in finals {
                let node = nodes
                    .iter_mut()
                    .find(|n| &n.name == name)
                    .ok_or_else(|| GraphError::UnknownGoalMode(name.clone()))?;
                node.class = ModeClass::Final;
            }
        }
        Goal::Expr(e) => goal_expr = Some(e.clone()),
    }

    nodes.push(GraphNode {
        name: FAILING_MODE.to_string(),
        class: ModeClass::Failing,
    });

    // Unacceptable-condition expression: all provided entries joined by `||`,
    // then any per-mode unacceptable conditions.
    let mut entries = unacceptable.unwrap_or_default();
    for m in &h.modes {
        entries.extend(m.unacceptable.iter().cloned());
    }
    let unacceptable_expr = if entries.is_empty() {
        None
    } else {
        Some(disjoin_entries(entries)?)
    };

    let mut edges: Vec<GraphEdge> = Vec::new();
    for t in &h.transitions {
        edges.push(GraphEdge {
            source: t.source.clone(),
            destination: t.destination.clone(),
            label: t.guard.clone(),
        });
    }
    for m in &h.modes {
        if let Some(inv) = &m.invariant {
            edges.push(GraphEdge {
                source: m.name.clone(),
                destination: m.name.clone(),
                label: inv.clone(),
            });
        }
    }
    if let Some(un) = &unacceptable_expr {
        for m in &h.modes {
            edges.push(GraphEdge {
                source: m.name.clone(),
                destination: FAILING_MODE.to_string(),
                label: grouped(un.clone()),
            });
        }
        edges.push(GraphEdge {
            source: FAILING_MODE.to_string(),
            destination: FAILING_MODE.to_string(),
            label: grouped(un.clone()),
        });
    }

    complete_labels(&mut edges, unacceptable_expr.as_ref())?;

    let node_index: HashMap<String, usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.name.clone(), i))
        .collect();
    let edge_set = edges
        .iter()
        .map(|e| (node_index[&e.source], node_index[&e.destination]))
        .collect();
    Ok(ConditionGraph {
        nodes,
        edges,
        goal_expr,
        unacceptable_expr,
        node_index,
        edge_set,
    })
}

fn disjoin_entries(entries: Vec<Expr>) -> Result<Expr, GraphError> {
    Ok(crate::expr::disjoin(entries)?)
}

/// Completes every non-failing edge label: the raw guard/invariant is
/// conjoined with the negations of its sibling labels (other edges leaving
/// the same node, failing edges excluded) and of the unacceptable-condition
/// expression. Negations are appended over the sibling list in reverse edge
/// order, which reproduces the serialized conditions verbatim.
fn complete_labels(edges: &mut [GraphEdge], unacceptable: Option<&Expr>) -> Result<(), GraphError> {
    let raw: Vec<GraphEdge> = edges.to_vec();
    for (i, edge) in edges.iter_mut().enumerate() {
        if edge.destination == FAILING_MODE {
            continue;
        }
        let mut label = grouped(edge.label.clone());
        let siblings: Vec<&GraphEdge> = raw
            .iter()
            .enumerate()
            .filter(|(j, other)| {
                *j != i && other.source == edge.source && other.destination != FAILING_MODE
            })
            .map(|(_, other)| other)
            .collect();
        for sib in siblings.into_iter().rev() {
            label = Expr::and(label, negate(sib.label.clone())?);
        }
        if let Some(un) = unacceptable {
            label = Expr::and(label, negate(un.clone())?);
        }
        edge.label = label;
    }
    Ok(())
}

impl ConditionGraph {
    pub fn node(&self, name: &str) -> Option<&GraphNode> {
        self.node_index.get(name).map(|&i| &self.nodes[i])
    }

    pub fn node_class(&self, name: &str) -> Option<ModeClass> {
        self.node(name).map(|n| n.class)
    }

    /// Whether the graph carries failing edges at all. Without unacceptable
    /// conditions the failing node is isolated and ignored downstream.
    pub fn has_failing_edges(&self) -> bool {
        self.unacceptable_expr.is_some()
    }

    pub fn final_modes(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| n.class == ModeClass::Final)
            .map(|n| n.name.as_str())
            .collect()
    }

    pub fn node_id(&self, name: &str) -> Result<usize, GraphError> {
        self.node_index
            .get(name)
            .copied()
            .ok_or_else(|| GraphError::UnknownNode(name.to_string()))
    }

    /// Whether staying in / moving between the two nodes is allowed, i.e. an
    /// edge (or self-loop) from `from` to `to` exists.
    pub fn is_allowed(&self, from: &str, to: &str) -> Result<bool, GraphError> {
        let from = self.node_id(from)?;
        let to = self.node_id(to)?;
        Ok(self.edge_set.contains(&(from, to)))
    }

    /// Index-based variant of [`Self::is_allowed`] for hot loops.
    pub fn is_allowed_ids(&self, from: usize, to: usize) -> bool {
        self.edge_set.contains(&(from, to))
    }

    /// DOT rendering for inspection; node shape encodes the mode class.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph condition_graph {\n");
        for n in &self.nodes {
            let shape = match n.class {
                ModeClass::Acceptable => "ellipse",
                ModeClass::Final => "doublecircle",
                ModeClass::Failing => "box",
            };
            out.push_str(&format!("    \"{}\" [shape={}];\n", n.name, shape));
        }
        for e in &self.edges {
            let label = e.label.to_string().replace('"', "\\\"");
            out.push_str(&format!(
                "    \"{}\" -> \"{}\" [label=\"{}\"];\n",
                e.source, e.destination, label
            ));
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use crate::model::parse_hybrid_model;

    fn pendulum() -> HybridModel {
        let doc = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../models/pendulum/hybrid.json"
        ))
        .unwrap();
        parse_hybrid_model(&doc).unwrap()
    }

    fn pendulum_graph() -> ConditionGraph {
        let h = pendulum();
        let un = h.unacceptable.clone();
        build_condition_graph(&h, Some(un)).unwrap()
    }

    #[test]
    fn default_unacceptable_negates_all_conditions() {
        let doc = r#"{
            "variables": [{"name": "x", "lo": -4, "hi": 4, "precision": 1}],
            "modes": [
                {"name": "a", "invariant": "abs(x) <= 3", "flows": {"x": "0"}},
                {"name": "b", "invariant": "x != 0", "flows": {"x": "0"}}
            ],
            "goal": {"final_modes": ["a"]}
        }"#;
        let h = parse_hybrid_model(doc).unwrap();
        let un = default_unacceptable(&h).unwrap().unwrap();
        assert_eq!(un.to_string(), "(!(abs(x) <= 3)) && (!(x != 0))");
    }

    #[test]
    fn default_unacceptable_single_condition() {
        let doc = r#"{
            "variables": [{"name": "x", "lo": -4, "hi": 4, "precision": 1}],
            "modes": [{"name": "a", "invariant": "x > 0", "flows": {"x": "0"}}],
            "goal": {"final_modes": ["a"]}
        }"#;
        let h = parse_hybrid_model(doc).unwrap();
        let un = default_unacceptable(&h).unwrap().unwrap();
        assert_eq!(un.to_string(), "!(x > 0)");
    }

    #[test]
    fn default_unacceptable_empty_model() {
        let doc = r#"{
            "variables": [{"name": "x", "lo": -4, "hi": 4, "precision": 1}],
            "modes": [{"name": "a", "flows": {"x": "0"}}],
            "goal": {"final_modes": ["a"]}
        }"#;
        let h = parse_hybrid_model(doc).unwrap();
        assert_eq!(default_unacceptable(&h).unwrap(), None);
    }

    #[test]
    fn pendulum_structure_matches_hand_trace() {
        let g = pendulum_graph();
        assert_eq!(g.nodes.len(), 4);
        assert_eq!(g.edges.len(), 13);
        assert_eq!(g.node_class("stabilize"), Some(ModeClass::Final));
        assert_eq!(g.node_class("max_left"), Some(ModeClass::Acceptable));
        assert_eq!(g.node_class("max_right"), Some(ModeClass::Acceptable));
        assert_eq!(g.node_class(FAILING_MODE), Some(ModeClass::Failing));
        // 6 inter-mode edges, 3 invariant self-loops, 3 fail edges, 1 fail self-loop.
        let inter = g
            .edges
            .iter()
            .filter(|e| e.source != e.destination && e.destination != FAILING_MODE)
            .count();
        let self_loops = g
            .edges
            .iter()
            .filter(|e| e.source == e.destination && e.destination != FAILING_MODE)
            .count();
        let fail_edges = g
            .edges
            .iter()
            .filter(|e| e.destination == FAILING_MODE && e.source != FAILING_MODE)
            .count();
        let fail_loop = g
            .edges
            .iter()
            .filter(|e| e.source == FAILING_MODE && e.destination == FAILING_MODE)
            .count();
        assert_eq!((inter, self_loops, fail_edges, fail_loop), (6, 3, 3, 1));
    }

    #[test]
    fn completed_label_appends_sibling_negations() {
        let g = pendulum_graph();
        let edge = g
            .edges
            .iter()
            .find(|e| e.source == "max_left" && e.destination == "max_right")
            .unwrap();
        assert_eq!(
            edge.label.to_string(),
            "(z(th,thd) > u_max) && !(z(th,thd) < -u_max) && !(abs(z(th,thd)) < u_max) \
             && !(abs(x) > 3)"
        );
    }

    #[test]
    fn fail_edges_carry_unacceptable_expression() {
        let g = pendulum_graph();
        for e in g.edges.iter().filter(|e| e.destination == FAILING_MODE) {
            assert_eq!(e.label.to_string(), "(abs(x) > 3)");
        }
    }

    #[test]
    fn without_unacceptable_failing_is_isolated() {
        let mut h = pendulum();
        h.unacceptable.clear();
        let g = build_condition_graph(&h, None).unwrap();
        assert!(!g.has_failing_edges());
        assert_eq!(g.edges.len(), 9);
        assert!(g
            .edges
            .iter()
            .all(|e| e.source != FAILING_MODE && e.destination != FAILING_MODE));
        assert!(!g.is_allowed(FAILING_MODE, FAILING_MODE).unwrap());
    }

    #[test]
    fn is_allowed_follows_edges() {
        let g = pendulum_graph();
        assert!(g.is_allowed("stabilize", "stabilize").unwrap());
        assert!(g.is_allowed("max_left", "max_left").unwrap());
        assert!(g.is_allowed("stabilize", FAILING_MODE).unwrap());
        assert!(g.is_allowed(FAILING_MODE, FAILING_MODE).unwrap());
        assert!(!g.is_allowed(FAILING_MODE, "stabilize").unwrap());
        assert!(g.is_allowed("max_left", "stabilize").unwrap());
        assert!(matches!(
            g.is_allowed("nowhere", "stabilize"),
            Err(GraphError::UnknownNode(_))
        ));
    }

    #[test]
    fn node_and_edge_counts_follow_model_size() {
        let h = pendulum();
        let g = pendulum_graph();
        assert_eq!(g.nodes.len(), h.modes.len() + 1);
        assert_eq!(
            g.edges.len(),
            h.transitions.len() + h.modes.len() + h.modes.len() + 1
        );
    }

    #[test]
    fn construction_is_deterministic() {
        let a = pendulum_graph();
        let b = pendulum_graph();
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.edges, b.edges);
    }

    #[test]
    fn per_mode_unacceptable_joins_the_disjunction() {
        let doc = r#"{
            "variables": [{"name": "x", "lo": -4, "hi": 4, "precision": 1}],
            "modes": [
                {"name": "a", "invariant": "x > 0", "flows": {"x": "0"},
                 "unacceptable": ["x == 0"]}
            ],
            "goal": {"final_modes": ["a"]},
            "unacceptable": ["abs(x) > 3"]
        }"#;
        let h = parse_hybrid_model(doc).unwrap();
        let g = build_condition_graph(&h, Some(h.unacceptable.clone())).unwrap();
        assert_eq!(
            g.unacceptable_expr.as_ref().unwrap().to_string(),
            "(abs(x) > 3) || (x == 0)"
        );
    }

    #[test]
    fn dot_export_shapes_nodes_by_class() {
        let dot = pendulum_graph().to_dot();
        assert!(dot.contains("\"stabilize\" [shape=doublecircle]"));
        assert!(dot.contains("\"__failing__\" [shape=box]"));
        assert!(dot.contains("\"max_left\" [shape=ellipse]"));
        assert!(dot.contains("->"));
    }

    #[test]
    fn pairwise_exclusive_labels_on_a_value_grid() {
        let h = pendulum();
        let g = pendulum_graph();
        let ctx = h.default_eval_context();
        let table = h.var_table();
        let compiled: Vec<(usize, crate::expr::CompiledExpr)> = g
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.destination != FAILING_MODE)
            .map(|(i, e)| {
                (
                    i,
                    crate::expr::CompiledExpr::compile(&e.label, &table, &ctx).unwrap(),
                )
            })
            .collect();
        let steps = [-2.0, -1.0, -0.3, 0.0, 0.4, 1.0, 2.0];
        for &th in &steps {
            for &thd in &steps {
                for &x in &[-4.0, 0.0, 4.0] {
                    let vals = [th, thd, x, 0.5];
                    for source in ["max_left", "max_right", "stabilize"] {
                        let hits = compiled
                            .iter()
                            .filter(|(i, c)| {
                                g.edges[*i].source == source && c.eval_bool(&vals).unwrap()
                            })
                            .count();
                        assert!(
                            hits <= 1,
                            "{hits} completed labels true at {vals:?} from {source}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn goal_expression_is_stored() {
        let doc = r#"{
            "variables": [{"name": "x", "lo": -4, "hi": 4, "precision": 1}],
            "modes": [{"name": "a", "invariant": "x > 0", "flows": {"x": "0"}}],
            "goal": {"expr": "x > 2"},
            "unacceptable": ["x < -3"]
        }"#;
        let h = parse_hybrid_model(doc).unwrap();
        let g = build_condition_graph(&h, Some(h.unacceptable.clone())).unwrap();
        assert_eq!(g.goal_expr, Some(parse_expr("x > 2").unwrap()));
        assert!(g.final_modes().is_empty());
    }
}
