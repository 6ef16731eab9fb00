//! Compiled executor for block-dataflow models.
//!
//! The block list is lowered once into a topologically ordered op list over a
//! flat slot array (one output slot per block plus the external inputs).
//! Per integration step the combinational ops run once per RK4 stage;
//! integrator states advance continuously while unit delays update at sample
//! instants. Boolean signals are encoded as 1.0/0.0.

use super::{Rk4Scratch, SimConfig, SimError, Trace};
use crate::expr::VarAssignment;
use crate::model::{Block, BlockKind, LogicOp, RelOp, SimModel, TrigFn};

#[derive(Debug, Clone)]
enum COp {
    Zero {
        slot: usize,
    },
    Const {
        slot: usize,
        value: f64,
    },
    Gain {
        slot: usize,
        input: usize,
        gain: f64,
    },
    Sum {
        slot: usize,
        terms: Vec<(f64, usize)>,
    },
    Product {
        slot: usize,
        inputs: Vec<usize>,
    },
    Saturation {
        slot: usize,
        input: usize,
        lo: f64,
        hi: f64,
    },
    DeadZone {
        slot: usize,
        input: usize,
        lo: f64,
        hi: f64,
    },
    Abs {
        slot: usize,
        input: usize,
    },
    Trig {
        slot: usize,
        input: usize,
        func: TrigFn,
    },
    Relational {
        slot: usize,
        a: usize,
        b: usize,
        op: RelOp,
    },
    Logical2 {
        slot: usize,
        a: usize,
        b: usize,
        is_and: bool,
    },
    LogicalNot {
        slot: usize,
        input: usize,
    },
    Switch {
        slot: usize,
        then_in: usize,
        control: usize,
        else_in: usize,
        threshold: f64,
    },
}

#[derive(Debug, Clone)]
struct StateInfo {
    id: String,
    slot: usize,
    input_slot: usize,
    init: f64,
}

/// A block model lowered for repeated simulation runs.
#[derive(Debug, Clone)]
pub struct CompiledSimModel {
    n_slots: usize,
    ops: Vec<COp>,
    integrators: Vec<StateInfo>,
    delays: Vec<StateInfo>,
    externals: Vec<(String, usize)>,
    outputs: Vec<(String, usize)>,
    eps_eq: f64,
}

impl CompiledSimModel {
    /// Lowers `model`; with `uncontrolled` set, controller-flagged blocks are
    /// forced to output 0 (plant-only dynamics).
    pub fn new(model: &SimModel, uncontrolled: bool, eps_eq: f64) -> Result<Self, SimError> {
        model.validate()?;
        let slot_of = |name: &str| -> usize {
            if let Some(i) = model.block_index(name) {
                i
            } else {
                let ext = model
                    .inputs_external
                    .iter()
                    .position(|e| e == name)
                    .expect("validated port reference");
                model.blocks.len() + ext
            }
        };
        let order = model.combinational_order()?;
        let mut ops = Vec::with_capacity(order.len());
        for idx in order {
            let block = &model.blocks[idx];
            ops.push(lower_block(block, idx, uncontrolled, &slot_of));
        }
        let mut integrators = Vec::new();
        let mut delays = Vec::new();
        for (idx, block) in model.blocks.iter().enumerate() {
            match &block.kind {
                BlockKind::Integrator { init } => integrators.push(StateInfo {
                    id: block.id.clone(),
                    slot: idx,
                    input_slot: slot_of(&block.inputs[0]),
                    init: *init,
                }),
                BlockKind::UnitDelay { init } => delays.push(StateInfo {
                    id: block.id.clone(),
                    slot: idx,
                    input_slot: slot_of(&block.inputs[0]),
                    init: *init,
                }),
                _ => {}
            }
        }
        let externals = model
            .inputs_external
            .iter()
            .enumerate()
            .map(|(i, name)| (name.clone(), model.blocks.len() + i))
            .collect();
        let outputs = model
            .outputs
            .iter()
            .map(|name| (name.clone(), slot_of(name)))
            .collect();
        Ok(CompiledSimModel {
            n_slots: model.blocks.len() + model.inputs_external.len(),
            ops,
            integrators,
            delays,
            externals,
            outputs,
            eps_eq,
        })
    }

    pub fn output_names(&self) -> Vec<&str> {
        self.outputs.iter().map(|(n, _)| n.as_str()).collect()
    }

    fn initial_value(&self, info: &StateInfo, init: &VarAssignment) -> f64 {
        init.get(&info.id).unwrap_or(info.init)
    }

    /// Runs the model for `cfg.t_end`, recording every `cfg.sample_time`.
    /// `overrides` entries are merged over `cfg.init` first.
    pub fn simulate(
        &self,
        cfg: &SimConfig,
        overrides: Option<&VarAssignment>,
    ) -> Result<Trace, SimError> {
        cfg.validate()?;
        let init = match overrides {
            Some(extra) => cfg.with_overrides(extra).init,
            None => cfg.init.clone(),
        };
        let mut ext_values = vec![0.0; self.externals.len()];
        for (i, (name, _)) in self.externals.iter().enumerate() {
            ext_values[i] = init
                .get(name)
                .ok_or_else(|| SimError::MissingInit(name.clone()))?;
        }
        let mut state: Vec<f64> = self
            .integrators
            .iter()
            .map(|info| self.initial_value(info, &init))
            .collect();
        let mut delay_state: Vec<f64> = self
            .delays
            .iter()
            .map(|info| self.initial_value(info, &init))
            .collect();

        let n_samples = cfg.n_samples();
        let steps_per_sample = cfg.steps_per_sample();
        let mut trace = Trace {
            names: self.outputs.iter().map(|(n, _)| n.clone()).collect(),
            times: Vec::with_capacity(n_samples),
            samples: Vec::with_capacity(n_samples),
        };
        let mut slots = vec![0.0; self.n_slots];
        let mut scratch = Rk4Scratch::new(state.len());

        for sample_idx in 0..n_samples {
            let t = sample_idx as f64 * cfg.sample_time;
            self.eval_pass(&state, &delay_state, &ext_values, &mut slots);
            let row: Vec<f64> = self.outputs.iter().map(|(_, slot)| slots[*slot]).collect();
            if row.iter().any(|v| !v.is_finite()) {
                return Err(SimError::NonFinite { time: t });
            }
            trace.times.push(t);
            trace.samples.push(row);
            // Unit delays latch their input at each sample instant, after the
            // instant itself was recorded with the previous state.
            for (i, info) in self.delays.iter().enumerate() {
                delay_state[i] = slots[info.input_slot];
            }
            if sample_idx + 1 == n_samples {
                break;
            }
            for step in 0..steps_per_sample {
                let step_t = t + step as f64 * cfg.dt;
                scratch.step::<SimError, _>(
                    |y, derivs| {
                        self.eval_pass(y, &delay_state, &ext_values, &mut slots);
                        for (i, info) in self.integrators.iter().enumerate() {
                            derivs[i] = slots[info.input_slot];
                        }
                        Ok(())
                    },
                    &mut state,
                    cfg.dt,
                )?;
                if state.iter().any(|v| !v.is_finite()) {
                    return Err(SimError::NonFinite {
                        time: step_t + cfg.dt,
                    });
                }
            }
        }
        Ok(trace)
    }

    /// One combinational evaluation: integrator/delay/external slots are
    /// seeded, then the topologically ordered ops fill the rest.
    fn eval_pass(&self, state: &[f64], delay_state: &[f64], ext: &[f64], slots: &mut [f64]) {
        for (i, info) in self.integrators.iter().enumerate() {
            slots[info.slot] = state[i];
        }
        for (i, info) in self.delays.iter().enumerate() {
            slots[info.slot] = delay_state[i];
        }
        for (i, (_, slot)) in self.externals.iter().enumerate() {
            slots[*slot] = ext[i];
        }
        for op in &self.ops {
            match op {
                COp::Zero { slot } => slots[*slot] = 0.0,
                COp::Const { slot, value } => slots[*slot] = *value,
                COp::Gain { slot, input, gain } => slots[*slot] = gain * slots[*input],
                COp::Sum { slot, terms } => {
                    let mut acc = 0.0;
                    for (sign, input) in terms {
                        acc += sign * slots[*input];
                    }
                    slots[*slot] = acc;
                }
                COp::Product { slot, inputs } => {
                    let mut acc = 1.0;
                    for input in inputs {
                        acc *= slots[*input];
                    }
                    slots[*slot] = acc;
                }
                COp::Saturation {
                    slot,
                    input,
                    lo,
                    hi,
                } => {
                    slots[*slot] = slots[*input].clamp(*lo, *hi);
                }
                COp::DeadZone {
                    slot,
                    input,
                    lo,
                    hi,
                } => {
                    let v = slots[*input];
                    slots[*slot] = if v > *hi {
                        v - hi
                    } else if v < *lo {
                        v - lo
                    } else {
                        0.0
                    };
                }
                COp::Abs { slot, input } => slots[*slot] = slots[*input].abs(),
                COp::Trig { slot, input, func } => {
                    let v = slots[*input];
                    slots[*slot] = match func {
                        TrigFn::Sin => v.sin(),
                        TrigFn::Cos => v.cos(),
                        TrigFn::Tan => v.tan(),
                    };
                }
                COp::Relational { slot, a, b, op } => {
                    let (x, y) = (slots[*a], slots[*b]);
                    let hit = match op {
                        RelOp::Lt => x < y,
                        RelOp::Le => x <= y,
                        RelOp::Gt => x > y,
                        RelOp::Ge => x >= y,
                        RelOp::Eq => (x - y).abs() <= self.eps_eq,
                        RelOp::Ne => (x - y).abs() > self.eps_eq,
                    };
                    slots[*slot] = if hit { 1.0 } else { 0.0 };
                }
                COp::Logical2 { slot, a, b, is_and } => {
                    let (x, y) = (slots[*a] != 0.0, slots[*b] != 0.0);
                    let hit = if *is_and { x && y } else { x || y };
                    slots[*slot] = if hit { 1.0 } else { 0.0 };
                }
                COp::LogicalNot { slot, input } => {
                    slots[*slot] = if slots[*input] == 0.0 { 1.0 } else { 0.0 };
                }
                COp::Switch {
                    slot,
                    then_in,
                    control,
                    else_in,
                    threshold,
                } => {
                    slots[*slot] = if slots[*control] >= *threshold {
                        slots[*then_in]
                    } else {
                        slots[*else_in]
                    };
                }
            }
        }
    }
}

fn lower_block(
    block: &Block,
    slot: usize,
    uncontrolled: bool,
    slot_of: &dyn Fn(&str) -> usize,
) -> COp {
    if uncontrolled && block.controller {
        return COp::Zero { slot };
    }
    let input = |i: usize| slot_of(&block.inputs[i]);
    match &block.kind {
        BlockKind::Constant { value } => COp::Const {
            slot,
            value: *value,
        },
        BlockKind::Gain { gain } => COp::Gain {
            slot,
            input: input(0),
            gain: *gain,
        },
        BlockKind::Sum { signs } => COp::Sum {
            slot,
            terms: signs
                .iter()
                .zip(&block.inputs)
                .map(|(s, name)| (s.factor(), slot_of(name)))
                .collect(),
        },
        BlockKind::Product => COp::Product {
            slot,
            inputs: block.inputs.iter().map(|n| slot_of(n)).collect(),
        },
        BlockKind::Saturation { lo, hi } => COp::Saturation {
            slot,
            input: input(0),
            lo: *lo,
            hi: *hi,
        },
        BlockKind::DeadZone { lo, hi } => COp::DeadZone {
            slot,
            input: input(0),
            lo: *lo,
            hi: *hi,
        },
        BlockKind::Abs => COp::Abs {
            slot,
            input: input(0),
        },
        BlockKind::Trig { func } => COp::Trig {
            slot,
            input: input(0),
            func: *func,
        },
        BlockKind::Relational { op } => COp::Relational {
            slot,
            a: input(0),
            b: input(1),
            op: *op,
        },
        BlockKind::Logical { op } => match op {
            LogicOp::Not => COp::LogicalNot {
                slot,
                input: input(0),
            },
            LogicOp::And | LogicOp::Or => COp::Logical2 {
                slot,
                a: input(0),
                b: input(1),
                is_and: *op == LogicOp::And,
            },
        },
        BlockKind::Switch { threshold } => COp::Switch {
            slot,
            then_in: input(0),
            control: input(1),
            else_in: input(2),
            threshold: *threshold,
        },
        // State blocks are sources in the combinational pass and never lowered.
        BlockKind::Integrator { .. } | BlockKind::UnitDelay { .. } => {
            unreachable!("state blocks are excluded from the combinational order")
        }
    }
}

/// Compiles and runs `model` in one call; prefer [`CompiledSimModel`] when
/// simulating the same model many times.
pub fn simulate_sim_model(
    model: &SimModel,
    cfg: &SimConfig,
    uncontrolled: bool,
) -> Result<Trace, SimError> {
    CompiledSimModel::new(model, uncontrolled, cfg.eps_eq)?.simulate(cfg, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_sim_model;

    fn decay_model() -> SimModel {
        // x' = -x, closed form x(t) = x0 e^-t.
        parse_sim_model(
            r#"{
                "blocks": [
                    {"id": "x", "kind": "integrator", "params": {"init": 1.0}, "inputs": ["g"]},
                    {"id": "g", "kind": "gain", "params": {"gain": -1.0}, "inputs": ["x"]}
                ],
                "outputs": ["x"]
            }"#,
        )
        .unwrap()
    }

    fn cfg(t_end: f64) -> SimConfig {
        parse_sim_config(&format!(
            r#"{{"dt": 0.001, "sample_time": 0.01, "t_end": {t_end}, "init": {{}}}}"#
        ))
        .unwrap()
    }

    use crate::sim::parse_sim_config;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let trace = simulate_sim_model(&decay_model(), &cfg(1.0), false).unwrap();
        assert_eq!(trace.len(), 101);
        let x = trace.column("x").unwrap();
        for (k, v) in x.iter().enumerate() {
            let expect = (-(k as f64) * 0.01).exp();
            assert!((v - expect).abs() < 1e-9, "sample {k}: {v} vs {expect}");
        }
    }

    #[test]
    fn t_end_equal_to_sample_time_gives_two_samples() {
        let cfg = parse_sim_config(
            r#"{"dt": 0.001, "sample_time": 0.01, "t_end": 0.01, "init": {}}"#,
        )
        .unwrap();
        let trace = simulate_sim_model(&decay_model(), &cfg, false).unwrap();
        assert_eq!(trace.len(), 2);
        assert_eq!(trace.times, vec![0.0, 0.01]);
    }

    #[test]
    fn init_overrides_integrator_default() {
        let cfg = parse_sim_config(
            r#"{"dt": 0.001, "sample_time": 0.01, "t_end": 0.01, "init": {"x": 5.0}}"#,
        )
        .unwrap();
        let trace = simulate_sim_model(&decay_model(), &cfg, false).unwrap();
        assert_eq!(trace.samples[0][0], 5.0);
    }

    #[test]
    fn deterministic_bit_exact() {
        let a = simulate_sim_model(&decay_model(), &cfg(2.0), false).unwrap();
        let b = simulate_sim_model(&decay_model(), &cfg(2.0), false).unwrap();
        for (ra, rb) in a.samples.iter().zip(&b.samples) {
            for (x, y) in ra.iter().zip(rb) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn uncontrolled_forces_controller_blocks_to_zero() {
        // x' = u with u from a controller constant: uncontrolled freezes x.
        let model = parse_sim_model(
            r#"{
                "blocks": [
                    {"id": "x", "kind": "integrator", "params": {"init": 0.0}, "inputs": ["u"]},
                    {"id": "u", "kind": "constant", "params": {"value": 2.0}, "controller": true}
                ],
                "outputs": ["x", "u"]
            }"#,
        )
        .unwrap();
        let controlled = simulate_sim_model(&model, &cfg(1.0), false).unwrap();
        let plant = simulate_sim_model(&model, &cfg(1.0), true).unwrap();
        let xc = controlled.column("x").unwrap();
        let xp = plant.column("x").unwrap();
        assert!((xc.last().unwrap() - 2.0).abs() < 1e-9);
        assert!(xp.iter().all(|v| *v == 0.0));
        assert!(plant.column("u").unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unit_delay_latches_at_sample_instants() {
        // d' = (nothing continuous): feed the delay a ramp via an integrator
        // of 1; the delay output must equal the ramp one sample late.
        let model = parse_sim_model(
            r#"{
                "blocks": [
                    {"id": "one", "kind": "constant", "params": {"value": 1.0}},
                    {"id": "ramp", "kind": "integrator", "params": {"init": 0.0}, "inputs": ["one"]},
                    {"id": "held", "kind": "unit_delay", "params": {"init": -1.0}, "inputs": ["ramp"]}
                ],
                "outputs": ["ramp", "held"]
            }"#,
        )
        .unwrap();
        let trace = simulate_sim_model(&model, &cfg(0.05), false).unwrap();
        let ramp = trace.column("ramp").unwrap();
        let held = trace.column("held").unwrap();
        assert_eq!(held[0], -1.0);
        for k in 1..trace.len() {
            assert!((held[k] - ramp[k - 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_external_input_is_an_error() {
        let model = parse_sim_model(
            r#"{
                "blocks": [
                    {"id": "x", "kind": "integrator", "params": {"init": 0.0}, "inputs": ["w"]}
                ],
                "inputs_external": ["w"],
                "outputs": ["x"]
            }"#,
        )
        .unwrap();
        let err = simulate_sim_model(&model, &cfg(0.1), false).unwrap_err();
        assert!(matches!(err, SimError::MissingInit(name) if name == "w"));
    }

    #[test]
    fn divergence_raises_non_finite() {
        // x' = x^2-ish growth via product; blows up quickly from x0 = 10.
        let model = parse_sim_model(
            r#"{
                "blocks": [
                    {"id": "x", "kind": "integrator", "params": {"init": 10.0}, "inputs": ["sq"]},
                    {"id": "sq", "kind": "product", "params": {}, "inputs": ["x", "x", "x"]}
                ],
                "outputs": ["x"]
            }"#,
        )
        .unwrap();
        let err = simulate_sim_model(&model, &cfg(1.0), false).unwrap_err();
        assert!(matches!(err, SimError::NonFinite { .. }));
    }
}
