//! Block-level mutation operators for seeding single faults into simulation
//! models, patterned on common fault classes for signal-flow diagrams
//! (perturbed or negated coefficients, swapped relational/logical operators,
//! shifted initial conditions, widened saturations, flipped sum signs).

use crate::model::{Block, BlockKind, LogicOp, RelOp, SimModel};

/// A single block-level fault pattern: an applicability predicate over block
/// kinds and a transform producing the faulty block. Transforms preserve port
/// arity and graph well-formedness.
#[derive(Clone, Copy)]
pub struct MutationOperator {
    pub name: &'static str,
    pub applicable: fn(&Block) -> bool,
    pub transform: fn(&Block) -> Block,
}

impl std::fmt::Debug for MutationOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MutationOperator({})", self.name)
    }
}

fn with_kind(block: &Block, kind: BlockKind) -> Block {
    Block {
        kind,
        ..block.clone()
    }
}

fn gain_perturb(b: &Block) -> Block {
    match &b.kind {
        BlockKind::Gain { gain } => with_kind(b, BlockKind::Gain { gain: gain * 1.1 }),
        _ => b.clone(),
    }
}

fn sign_negate(b: &Block) -> Block {
    match &b.kind {
        BlockKind::Gain { gain } => with_kind(b, BlockKind::Gain { gain: -gain }),
        BlockKind::Constant { value } => with_kind(b, BlockKind::Constant { value: -value }),
        _ => b.clone(),
    }
}

fn constant_perturb(b: &Block) -> Block {
    match &b.kind {
        BlockKind::Constant { value } => with_kind(b, BlockKind::Constant { value: value * 1.1 }),
        _ => b.clone(),
    }
}

fn rel_op_swap(b: &Block) -> Block {
    match &b.kind {
        BlockKind::Relational { op } => {
            let swapped = match op {
                RelOp::Lt => RelOp::Le,
                RelOp::Le => RelOp::Lt,
                RelOp::Gt => RelOp::Ge,
                RelOp::Ge => RelOp::Gt,
                other => *other,
            };
            with_kind(b, BlockKind::Relational { op: swapped })
        }
        _ => b.clone(),
    }
}

fn logic_op_swap(b: &Block) -> Block {
    match &b.kind {
        BlockKind::Logical { op } => {
            let swapped = match op {
                LogicOp::And => LogicOp::Or,
                LogicOp::Or => LogicOp::And,
                LogicOp::Not => LogicOp::Not,
            };
            with_kind(b, BlockKind::Logical { op: swapped })
        }
        _ => b.clone(),
    }
}

fn integrator_init_shift(b: &Block) -> Block {
    match &b.kind {
        BlockKind::Integrator { init } => {
            with_kind(b, BlockKind::Integrator { init: init + 0.1 })
        }
        _ => b.clone(),
    }
}

fn saturation_widen(b: &Block) -> Block {
    match &b.kind {
        BlockKind::Saturation { lo, hi } => with_kind(
            b,
            BlockKind::Saturation {
                lo: lo * 2.0,
                hi: hi * 2.0,
            },
        ),
        _ => b.clone(),
    }
}

fn sum_sign_flip(b: &Block) -> Block {
    match &b.kind {
        BlockKind::Sum { signs } => {
            let mut signs = signs.clone();
            if let Some(first) = signs.first_mut() {
                *first = first.flipped();
            }
            with_kind(b, BlockKind::Sum { signs })
        }
        _ => b.clone(),
    }
}

/// The bundled operator set.
pub fn bundled_operators() -> Vec<MutationOperator> {
    vec![
        MutationOperator {
            name: "gain_perturb",
            applicable: |b| matches!(&b.kind, BlockKind::Gain { gain } if *gain != 0.0),
            transform: gain_perturb,
        },
        MutationOperator {
            name: "sign_negate",
            applicable: |b| {
                matches!(&b.kind, BlockKind::Gain { gain } if *gain != 0.0)
                    || matches!(&b.kind, BlockKind::Constant { value } if *value != 0.0)
            },
            transform: sign_negate,
        },
        MutationOperator {
            name: "constant_perturb",
            applicable: |b| matches!(&b.kind, BlockKind::Constant { value } if *value != 0.0),
            transform: constant_perturb,
        },
        MutationOperator {
            name: "rel_op_swap",
            applicable: |b| {
                matches!(
                    &b.kind,
                    BlockKind::Relational {
                        op: RelOp::Lt | RelOp::Le | RelOp::Gt | RelOp::Ge
                    }
                )
            },
            transform: rel_op_swap,
        },
        MutationOperator {
            name: "logic_op_swap",
            applicable: |b| {
                matches!(
                    &b.kind,
                    BlockKind::Logical {
                        op: LogicOp::And | LogicOp::Or
                    }
                )
            },
            transform: logic_op_swap,
        },
        MutationOperator {
            name: "integrator_init_shift",
            applicable: |b| matches!(&b.kind, BlockKind::Integrator { .. }),
            transform: integrator_init_shift,
        },
        MutationOperator {
            name: "saturation_widen",
            applicable: |b| {
                matches!(&b.kind, BlockKind::Saturation { lo, hi } if *lo != 0.0 || *hi != 0.0)
            },
            transform: saturation_widen,
        },
        MutationOperator {
            name: "sum_sign_flip",
            applicable: |b| matches!(&b.kind, BlockKind::Sum { signs } if !signs.is_empty()),
            transform: sum_sign_flip,
        },
    ]
}

/// Looks bundled operators up by name; `all` selects the full set.
pub fn operators_by_names(names: &str) -> Result<Vec<MutationOperator>, String> {
    let all = bundled_operators();
    if names.trim() == "all" {
        return Ok(all);
    }
    names
        .split(',')
        .map(|n| {
            let n = n.trim();
            all.iter()
                .find(|op| op.name == n)
                .copied()
                .ok_or_else(|| format!("unknown mutation operator `{n}`"))
        })
        .collect()
}

/// A faulty model variant differing from its base at exactly one block.
#[derive(Debug, Clone)]
pub struct Mutant {
    pub operator: String,
    pub site: String,
    pub model: SimModel,
}

impl Mutant {
    pub fn name(&self) -> String {
        format!("{}__{}", self.operator, self.site)
    }
}

/// All applicable (operator, block) pairs, blocks outer, operators inner.
pub fn list_sites<'a>(
    model: &'a SimModel,
    ops: &'a [MutationOperator],
) -> Vec<(&'a MutationOperator, &'a str)> {
    let mut sites = Vec::new();
    for block in &model.blocks {
        for op in ops {
            if (op.applicable)(block) {
                sites.push((op, block.id.as_str()));
            }
        }
    }
    sites
}

/// One mutant per applicable site. A transform that yields an invalid model
/// is skipped with a diagnostic.
pub fn gen_mutants(model: &SimModel, ops: &[MutationOperator]) -> Vec<Mutant> {
    let mut mutants = Vec::new();
    for (op, site) in list_sites(model, ops) {
        let mut mutated = model.clone();
        let idx = mutated
            .block_index(site)
            .expect("site ids come from the model");
        mutated.blocks[idx] = (op.transform)(&mutated.blocks[idx]);
        match mutated.validate() {
            Ok(()) => mutants.push(Mutant {
                operator: op.name.to_string(),
                site: site.to_string(),
                model: mutated,
            }),
            Err(e) => log::warn!("skipping {}@{site}: transform produced an invalid model: {e}", op.name),
        }
    }
    mutants
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_sim_model;

    fn two_gain_model() -> SimModel {
        parse_sim_model(
            r#"{
                "blocks": [
                    {"id": "x", "kind": "integrator", "params": {"init": 0.5}, "inputs": ["a"]},
                    {"id": "a", "kind": "gain", "params": {"gain": -1.0}, "inputs": ["x"]},
                    {"id": "b", "kind": "gain", "params": {"gain": 2.0}, "inputs": ["x"]},
                    {"id": "s", "kind": "sum", "params": {"signs": "+-"}, "inputs": ["a", "b"]},
                    {"id": "r", "kind": "relational", "params": {"op": "<"}, "inputs": ["a", "b"]},
                    {"id": "l", "kind": "logical", "params": {"op": "and"}, "inputs": ["r", "r"]},
                    {"id": "sat", "kind": "saturation", "params": {"lo": -2.0, "hi": 2.0}, "inputs": ["s"]},
                    {"id": "c", "kind": "constant", "params": {"value": 3.0}}
                ],
                "outputs": ["x"]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn gain_perturb_counts_gain_blocks() {
        let model = two_gain_model();
        let ops = operators_by_names("gain_perturb").unwrap();
        let sites = list_sites(&model, &ops);
        assert_eq!(sites.len(), 2);
        assert_eq!(sites[0].1, "a");
        assert_eq!(sites[1].1, "b");
    }

    #[test]
    fn inapplicable_operator_contributes_no_sites() {
        let model = two_gain_model();
        // No unit delays or trig blocks anywhere; integrator shift applies to
        // exactly one block.
        let ops = operators_by_names("integrator_init_shift").unwrap();
        assert_eq!(list_sites(&model, &ops).len(), 1);
        let model_no_sum = parse_sim_model(
            r#"{
                "blocks": [
                    {"id": "x", "kind": "integrator", "params": {"init": 0.0}, "inputs": ["x"]}
                ],
                "outputs": ["x"]
            }"#,
        )
        .unwrap();
        let ops = operators_by_names("sum_sign_flip").unwrap();
        assert!(list_sites(&model_no_sum, &ops).is_empty());
        assert!(gen_mutants(&model_no_sum, &ops).is_empty());
    }

    #[test]
    fn full_site_table_matches_hand_enumeration() {
        // gains a,b: perturb + negate; constant c: negate + perturb;
        // relational r: swap; logical l: swap; integrator x: shift;
        // saturation: widen; sum s: flip.
        let model = two_gain_model();
        let ops = bundled_operators();
        let sites = list_sites(&model, &ops);
        assert_eq!(sites.len(), 2 + 2 + 2 + 1 + 1 + 1 + 1 + 1);
    }

    #[test]
    fn mutants_differ_at_exactly_one_block() {
        let model = two_gain_model();
        for mutant in gen_mutants(&model, &bundled_operators()) {
            let differing: Vec<&str> = model
                .blocks
                .iter()
                .zip(&mutant.model.blocks)
                .filter(|(a, b)| a != b)
                .map(|(a, _)| a.id.as_str())
                .collect();
            assert_eq!(differing, vec![mutant.site.as_str()], "{}", mutant.name());
            mutant.model.validate().unwrap();
        }
    }

    #[test]
    fn involutive_operators_restore_the_base() {
        let model = two_gain_model();
        for name in ["sign_negate", "rel_op_swap", "logic_op_swap", "sum_sign_flip"] {
            let ops = operators_by_names(name).unwrap();
            for (op, site) in list_sites(&model, &ops) {
                let idx = model.block_index(site).unwrap();
                let once = (op.transform)(&model.blocks[idx]);
                let twice = (op.transform)(&once);
                assert_eq!(twice, model.blocks[idx], "{name}@{site}");
                assert_ne!(once, model.blocks[idx], "{name}@{site} must change the block");
            }
        }
    }

    #[test]
    fn invalid_transform_is_skipped() {
        // A hostile operator that rewires a block to a dangling input.
        let bad = MutationOperator {
            name: "dangling",
            applicable: |b| matches!(b.kind, BlockKind::Gain { .. }),
            transform: |b| Block {
                inputs: vec!["ghost".into()],
                ..b.clone()
            },
        };
        let model = two_gain_model();
        assert_eq!(list_sites(&model, &[bad]).len(), 2);
        assert!(gen_mutants(&model, &[bad]).is_empty());
    }

    #[test]
    fn operator_lookup_by_name() {
        assert_eq!(operators_by_names("all").unwrap().len(), 8);
        assert_eq!(
            operators_by_names("gain_perturb, sum_sign_flip").unwrap().len(),
            2
        );
        assert!(operators_by_names("nonsense").is_err());
    }
}
