//! Block-dataflow simulation model, the executable stand-in for the plant +
//! controller diagram a CPS is normally simulated from.
//!
//! A model is a list of single-output blocks wired by id. Cycles are legal
//! only through state blocks (`Integrator`, `UnitDelay`), whose outputs are
//! state rather than instantaneous functions of their inputs. Blocks flagged
//! `controller` can be forced to output 0 to simulate the uncontrolled plant.

use super::ModelError;
use serde::Deserialize;
use std::collections::{BTreeSet, HashMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrigFn {
    Sin,
    Cos,
    Tan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl RelOp {
    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
            RelOp::Eq => "==",
            RelOp::Ne => "!=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogicOp {
    And,
    Or,
    Not,
}

/// Per-input sign of a `Sum` block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignDir {
    Plus,
    Minus,
}

impl SignDir {
    pub fn factor(self) -> f64 {
        match self {
            SignDir::Plus => 1.0,
            SignDir::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> SignDir {
        match self {
            SignDir::Plus => SignDir::Minus,
            SignDir::Minus => SignDir::Plus,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockKind {
    Constant { value: f64 },
    Gain { gain: f64 },
    Sum { signs: Vec<SignDir> },
    Product,
    Integrator { init: f64 },
    Saturation { lo: f64, hi: f64 },
    DeadZone { lo: f64, hi: f64 },
    Abs,
    Trig { func: TrigFn },
    Relational { op: RelOp },
    Logical { op: LogicOp },
    Switch { threshold: f64 },
    UnitDelay { init: f64 },
}

impl BlockKind {
    pub fn name(&self) -> &'static str {
        match self {
            BlockKind::Constant { .. } => "constant",
            BlockKind::Gain { .. } => "gain",
            BlockKind::Sum { .. } => "sum",
            BlockKind::Product => "product",
            BlockKind::Integrator { .. } => "integrator",
            BlockKind::Saturation { .. } => "saturation",
            BlockKind::DeadZone { .. } => "dead_zone",
            BlockKind::Abs => "abs",
            BlockKind::Trig { .. } => "trig",
            BlockKind::Relational { .. } => "relational",
            BlockKind::Logical { .. } => "logical",
            BlockKind::Switch { .. } => "switch",
            BlockKind::UnitDelay { .. } => "unit_delay",
        }
    }

    pub fn is_state(&self) -> bool {
        matches!(
            self,
            BlockKind::Integrator { .. } | BlockKind::UnitDelay { .. }
        )
    }

    /// Expected input count; `None` means variadic (checked separately).
    fn arity(&self) -> Option<usize> {
        match self {
            BlockKind::Constant { .. } => Some(0),
            BlockKind::Gain { .. }
            | BlockKind::Integrator { .. }
            | BlockKind::Saturation { .. }
            | BlockKind::DeadZone { .. }
            | BlockKind::Abs
            | BlockKind::Trig { .. }
            | BlockKind::UnitDelay { .. } => Some(1),
            BlockKind::Relational { .. } => Some(2),
            BlockKind::Logical { op } => Some(if *op == LogicOp::Not { 1 } else { 2 }),
            BlockKind::Switch { .. } => Some(3),
            BlockKind::Sum { .. } | BlockKind::Product => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub id: String,
    pub kind: BlockKind,
    /// Input port references: ids of other blocks or external input names.
    /// For `Switch` the ports are `[then, control, else]`.
    pub inputs: Vec<String>,
    pub controller: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimModel {
    pub blocks: Vec<Block>,
    /// Test-settable external source signals, constant over a run.
    pub inputs_external: Vec<String>,
    /// Observed signals recorded into traces, by block id.
    pub outputs: Vec<String>,
}

#[derive(Deserialize)]
struct RawBlock {
    id: String,
    kind: String,
    #[serde(default)]
    params: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    inputs: Vec<String>,
    #[serde(default)]
    controller: bool,
}

#[derive(Deserialize)]
struct RawSimModel {
    blocks: Vec<RawBlock>,
    #[serde(default)]
    inputs_external: Vec<String>,
    outputs: Vec<String>,
}

fn param_f64(
    raw: &serde_json::Map<String, serde_json::Value>,
    block: &str,
    key: &str,
) -> Result<f64, ModelError> {
    raw.get(key)
        .and_then(|v| v.as_f64())
        .ok_or_else(|| ModelError::invalid(format!("block `{block}`: missing numeric param `{key}`")))
}

fn param_f64_or(
    raw: &serde_json::Map<String, serde_json::Value>,
    block: &str,
    key: &str,
    default: f64,
) -> Result<f64, ModelError> {
    match raw.get(key) {
        None => Ok(default),
        Some(v) => v.as_f64().ok_or_else(|| {
            ModelError::invalid(format!("block `{block}`: param `{key}` must be numeric"))
        }),
    }
}

fn param_str<'a>(
    raw: &'a serde_json::Map<String, serde_json::Value>,
    block: &str,
    key: &str,
) -> Result<&'a str, ModelError> {
    raw.get(key)
        .and_then(|v| v.as_str())
        .ok_or_else(|| ModelError::invalid(format!("block `{block}`: missing string param `{key}`")))
}

fn build_kind(raw: &RawBlock) -> Result<BlockKind, ModelError> {
    let id = raw.id.as_str();
    let kind = match raw.kind.as_str() {
        "constant" => BlockKind::Constant {
            value: param_f64(&raw.params, id, "value")?,
        },
        "gain" => BlockKind::Gain {
            gain: param_f64(&raw.params, id, "gain")?,
        },
        "sum" => {
            let signs = param_str(&raw.params, id, "signs")?
                .chars()
                .map(|c| match c {
                    '+' => Ok(SignDir::Plus),
                    '-' => Ok(SignDir::Minus),
                    other => Err(ModelError::invalid(format!(
                        "block `{id}`: invalid sign {other:?} (use '+'/'-')"
                    ))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            BlockKind::Sum { signs }
        }
        "product" => BlockKind::Product,
        "integrator" => BlockKind::Integrator {
            init: param_f64(&raw.params, id, "init")?,
        },
        "saturation" => BlockKind::Saturation {
            lo: param_f64(&raw.params, id, "lo")?,
            hi: param_f64(&raw.params, id, "hi")?,
        },
        "dead_zone" => BlockKind::DeadZone {
            lo: param_f64(&raw.params, id, "lo")?,
            hi: param_f64(&raw.params, id, "hi")?,
        },
        "abs" => BlockKind::Abs,
        "trig" => BlockKind::Trig {
            func: match param_str(&raw.params, id, "fn")? {
                "sin" => TrigFn::Sin,
                "cos" => TrigFn::Cos,
                "tan" => TrigFn::Tan,
                other => {
                    return Err(ModelError::invalid(format!(
                        "block `{id}`: unknown trig function `{other}`"
                    )))
                }
            },
        },
        "relational" => BlockKind::Relational {
            op: match param_str(&raw.params, id, "op")? {
                "<" => RelOp::Lt,
                "<=" => RelOp::Le,
                ">" => RelOp::Gt,
                ">=" => RelOp::Ge,
                "==" => RelOp::Eq,
                "!=" => RelOp::Ne,
                other => {
                    return Err(ModelError::invalid(format!(
                        "block `{id}`: unknown relational op `{other}`"
                    )))
                }
            },
        },
        "logical" => BlockKind::Logical {
            op: match param_str(&raw.params, id, "op")? {
                "and" => LogicOp::And,
                "or" => LogicOp::Or,
                "not" => LogicOp::Not,
                other => {
                    return Err(ModelError::invalid(format!(
                        "block `{id}`: unknown logical op `{other}`"
                    )))
                }
            },
        },
        "switch" => BlockKind::Switch {
            threshold: param_f64_or(&raw.params, id, "threshold", 0.5)?,
        },
        "unit_delay" => BlockKind::UnitDelay {
            init: param_f64(&raw.params, id, "init")?,
        },
        other => {
            return Err(ModelError::invalid(format!(
                "block `{id}`: unknown kind `{other}`"
            )))
        }
    };
    Ok(kind)
}

/// Parses and validates a simulation model document.
pub fn parse_sim_model(doc: &str) -> Result<SimModel, ModelError> {
    let raw: RawSimModel = serde_json::from_str(doc)?;
    let blocks = raw
        .blocks
        .iter()
        .map(|b| {
            Ok(Block {
                id: b.id.clone(),
                kind: build_kind(b)?,
                inputs: b.inputs.clone(),
                controller: b.controller,
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let model = SimModel {
        blocks,
        inputs_external: raw.inputs_external,
        outputs: raw.outputs,
    };
    model.validate()?;
    Ok(model)
}

/// Serializes a simulation model back into its document format.
pub fn sim_model_to_json(model: &SimModel) -> String {
    use serde_json::{json, Map, Value};
    let blocks: Vec<Value> = model
        .blocks
        .iter()
        .map(|b| {
            let mut params = Map::new();
            match &b.kind {
                BlockKind::Constant { value } => {
                    params.insert("value".into(), json!(value));
                }
                BlockKind::Gain { gain } => {
                    params.insert("gain".into(), json!(gain));
                }
                BlockKind::Sum { signs } => {
                    let s: String = signs
                        .iter()
                        .map(|s| if *s == SignDir::Plus { '+' } else { '-' })
                        .collect();
                    params.insert("signs".into(), json!(s));
                }
                BlockKind::Product | BlockKind::Abs => {}
                BlockKind::Integrator { init } | BlockKind::UnitDelay { init } => {
                    params.insert("init".into(), json!(init));
                }
                BlockKind::Saturation { lo, hi } | BlockKind::DeadZone { lo, hi } => {
                    params.insert("lo".into(), json!(lo));
                    params.insert("hi".into(), json!(hi));
                }
                BlockKind::Trig { func } => {
                    params.insert(
                        "fn".into(),
                        json!(match func {
                            TrigFn::Sin => "sin",
                            TrigFn::Cos => "cos",
                            TrigFn::Tan => "tan",
                        }),
                    );
                }
                BlockKind::Relational { op } => {
                    params.insert("op".into(), json!(op.symbol()));
                }
                BlockKind::Logical { op } => {
                    params.insert(
                        "op".into(),
                        json!(match op {
                            LogicOp::And => "and",
                            LogicOp::Or => "or",
                            LogicOp::Not => "not",
                        }),
                    );
                }
                BlockKind::Switch { threshold } => {
                    params.insert("threshold".into(), json!(threshold));
                }
            }
            let mut entry = Map::new();
            entry.insert("id".into(), json!(b.id));
            entry.insert("kind".into(), json!(b.kind.name()));
            if !params.is_empty() {
                entry.insert("params".into(), Value::Object(params));
            }
            if !b.inputs.is_empty() {
                entry.insert("inputs".into(), json!(b.inputs));
            }
            if b.controller {
                entry.insert("controller".into(), json!(true));
            }
            Value::Object(entry)
        })
        .collect();
    let doc = json!({
        "blocks": blocks,
        "inputs_external": model.inputs_external,
        "outputs": model.outputs,
    });
    serde_json::to_string_pretty(&doc).expect("model serialization cannot fail")
}

impl SimModel {
    pub fn block(&self, id: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.id == id)
    }

    pub fn block_index(&self, id: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.id == id)
    }

    /// Ids of Integrator blocks, in declaration order. Test cases set these
    /// as initial values by id.
    pub fn integrator_ids(&self) -> Vec<&str> {
        self.blocks
            .iter()
            .filter(|b| matches!(b.kind, BlockKind::Integrator { .. }))
            .map(|b| b.id.as_str())
            .collect()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut ids = BTreeSet::new();
        for b in &self.blocks {
            if b.id.is_empty() {
                return Err(ModelError::invalid("block with empty id"));
            }
            if !ids.insert(b.id.as_str()) {
                return Err(ModelError::invalid(format!("duplicate block id `{}`", b.id)));
            }
        }
        for ext in &self.inputs_external {
            if ids.contains(ext.as_str()) {
                return Err(ModelError::invalid(format!(
                    "external input `{ext}` collides with a block id"
                )));
            }
        }
        let ext: BTreeSet<&str> = self.inputs_external.iter().map(String::as_str).collect();
        for b in &self.blocks {
            if let Some(arity) = b.kind.arity() {
                if b.inputs.len() != arity {
                    return Err(ModelError::invalid(format!(
                        "block `{}` ({}) takes {} input(s), got {}",
                        b.id,
                        b.kind.name(),
                        arity,
                        b.inputs.len()
                    )));
                }
            }
            match &b.kind {
                BlockKind::Sum { signs } => {
                    if b.inputs.is_empty() {
                        return Err(ModelError::invalid(format!(
                            "sum block `{}` needs at least one input",
                            b.id
                        )));
                    }
                    if signs.len() != b.inputs.len() {
                        return Err(ModelError::invalid(format!(
                            "sum block `{}`: {} signs for {} inputs",
                            b.id,
                            signs.len(),
                            b.inputs.len()
                        )));
                    }
                }
                BlockKind::Product => {
                    if b.inputs.is_empty() {
                        return Err(ModelError::invalid(format!(
                            "product block `{}` needs at least one input",
                            b.id
                        )));
                    }
                }
                BlockKind::Saturation { lo, hi } => {
                    if !(lo < hi) {
                        return Err(ModelError::invalid(format!(
                            "saturation block `{}`: lo must be below hi",
                            b.id
                        )));
                    }
                }
                BlockKind::DeadZone { lo, hi } => {
                    if !(lo <= hi) {
                        return Err(ModelError::invalid(format!(
                            "dead_zone block `{}`: lo must not exceed hi",
                            b.id
                        )));
                    }
                }
                _ => {}
            }
            for input in &b.inputs {
                if !ids.contains(input.as_str()) && !ext.contains(input.as_str()) {
                    return Err(ModelError::invalid(format!(
                        "block `{}` reads undefined signal `{input}`",
                        b.id
                    )));
                }
            }
        }
        for out in &self.outputs {
            if !ids.contains(out.as_str()) {
                return Err(ModelError::invalid(format!(
                    "declared output `{out}` is not a block id"
                )));
            }
        }
        // Rejects cycles that do not pass through a state block.
        self.combinational_order()?;
        Ok(())
    }

    /// Topological order of non-state blocks (state blocks are sources).
    /// Fails on a purely combinational cycle.
    pub(crate) fn combinational_order(&self) -> Result<Vec<usize>, ModelError> {
        let index: HashMap<&str, usize> = self
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.as_str(), i))
            .collect();
        let n = self.blocks.len();
        // in-degree over combinational dependencies only
        let mut indeg = vec![0usize; n];
        let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, b) in self.blocks.iter().enumerate() {
            if b.kind.is_state() {
                continue;
            }
            for input in &b.inputs {
                if let Some(&j) = index.get(input.as_str()) {
                    if !self.blocks[j].kind.is_state() {
                        indeg[i] += 1;
                        dependents[j].push(i);
                    }
                }
            }
        }
        let mut queue: Vec<usize> = (0..n)
            .filter(|&i| !self.blocks[i].kind.is_state() && indeg[i] == 0)
            .collect();
        let mut order = Vec::new();
        while let Some(i) = queue.pop() {
            order.push(i);
            for &d in &dependents[i] {
                indeg[d] -= 1;
                if indeg[d] == 0 {
                    queue.push(d);
                }
            }
        }
        let combinational = self.blocks.iter().filter(|b| !b.kind.is_state()).count();
        if order.len() != combinational {
            let stuck: Vec<&str> = (0..n)
                .filter(|&i| !self.blocks[i].kind.is_state() && indeg[i] > 0)
                .map(|i| self.blocks[i].id.as_str())
                .collect();
            return Err(ModelError::invalid(format!(
                "cyclic dataflow without a state block through {}",
                stuck.join(", ")
            )));
        }
        // Deterministic order: sort by (depth already implied) declaration index
        // groups; a plain stable ordering over the produced sequence is enough
        // because execution only requires a valid topological order.
        Ok(order)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(blocks: &str) -> String {
        format!(r#"{{"blocks": [{blocks}], "inputs_external": [], "outputs": ["x"]}}"#)
    }

    const INTEGRATOR_LOOP: &str = r#"
        {"id": "x", "kind": "integrator", "params": {"init": 1.0}, "inputs": ["g"]},
        {"id": "g", "kind": "gain", "params": {"gain": -1.0}, "inputs": ["x"]}
    "#;

    #[test]
    fn parses_a_feedback_loop() {
        let m = parse_sim_model(&doc(INTEGRATOR_LOOP)).unwrap();
        assert_eq!(m.blocks.len(), 2);
        assert_eq!(m.integrator_ids(), vec!["x"]);
    }

    #[test]
    fn combinational_cycle_rejected() {
        let blocks = r#"
            {"id": "x", "kind": "integrator", "params": {"init": 0.0}, "inputs": ["a"]},
            {"id": "a", "kind": "gain", "params": {"gain": 1.0}, "inputs": ["b"]},
            {"id": "b", "kind": "gain", "params": {"gain": 1.0}, "inputs": ["a"]}
        "#;
        let err = parse_sim_model(&doc(blocks)).unwrap_err();
        assert!(err.to_string().contains("cyclic"), "{err}");
    }

    #[test]
    fn dangling_input_rejected() {
        let blocks = r#"
            {"id": "x", "kind": "integrator", "params": {"init": 0.0}, "inputs": ["nothing"]}
        "#;
        let err = parse_sim_model(&doc(blocks)).unwrap_err();
        assert!(err.to_string().contains("nothing"), "{err}");
    }

    #[test]
    fn arity_checked() {
        let blocks = r#"
            {"id": "x", "kind": "integrator", "params": {"init": 0.0}, "inputs": ["s"]},
            {"id": "s", "kind": "sum", "params": {"signs": "+-"}, "inputs": ["x"]}
        "#;
        let err = parse_sim_model(&doc(blocks)).unwrap_err();
        assert!(err.to_string().contains("signs"), "{err}");
    }

    #[test]
    fn unknown_output_rejected() {
        let m = format!(
            r#"{{"blocks": [{INTEGRATOR_LOOP}], "inputs_external": [], "outputs": ["ghost"]}}"#
        );
        let err = parse_sim_model(&m).unwrap_err();
        assert!(err.to_string().contains("output"), "{err}");
    }
}
