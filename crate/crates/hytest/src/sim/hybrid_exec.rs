//! Direct simulation of hybrid-model flows with discrete mode switching.
//!
//! Guards are checked at integration step boundaries only. When a condition
//! graph is supplied, its completed labels drive the switching and are
//! mutually exclusive by construction; with raw guards, the first declared
//! true transition wins (logged).

use super::{Rk4Scratch, SimConfig, SimError, Trace};
use crate::expr::{CompiledExpr, EvalError};
use crate::graph::ConditionGraph;
use crate::model::{HybridModel, FAILING_MODE};

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSwitch {
    pub time: f64,
    pub from: String,
    pub to: String,
}

struct ModePlan {
    name: String,
    flows: Vec<CompiledExpr>,
    /// Invariant (raw) or self-loop label (graph-driven); used to find the
    /// initial mode.
    residence: Option<CompiledExpr>,
    /// (target mode index, guard) pairs in edge order.
    exits: Vec<(usize, CompiledExpr)>,
}

/// A hybrid model lowered for simulation, optionally under condition-graph
/// switching semantics.
pub struct CompiledHybridModel {
    modes: Vec<ModePlan>,
    var_names: Vec<String>,
    graph_driven: bool,
}

impl CompiledHybridModel {
    pub fn new(
        model: &HybridModel,
        graph: Option<&ConditionGraph>,
        eps_eq: f64,
    ) -> Result<Self, SimError> {
        model.validate()?;
        let ctx = model.eval_context(eps_eq);
        let table = model.var_table();
        let mode_index = |name: &str| model.modes.iter().position(|m| m.name == name);
        let mut modes = Vec::with_capacity(model.modes.len());
        for mode in &model.modes {
            let flows = model
                .variables
                .iter()
                .map(|v| CompiledExpr::compile(&mode.flows[&v.name], &table, &ctx))
                .collect::<Result<Vec<_>, _>>()?;
            let mut exits = Vec::new();
            let mut residence = None;
            match graph {
                Some(g) => {
                    for edge in &g.edges {
                        if edge.source != mode.name || edge.destination == FAILING_MODE {
                            continue;
                        }
                        let compiled = CompiledExpr::compile(&edge.label, &table, &ctx)?;
                        if edge.destination == mode.name {
                            residence = Some(compiled);
                        } else {
                            let target = mode_index(&edge.destination)
                                .ok_or_else(|| SimError::UnknownMode(edge.destination.clone()))?;
                            exits.push((target, compiled));
                        }
                    }
                }
                None => {
                    if let Some(inv) = &mode.invariant {
                        residence = Some(CompiledExpr::compile(inv, &table, &ctx)?);
                    }
                    for t in model.transitions.iter().filter(|t| t.source == mode.name) {
                        let target = mode_index(&t.destination)
                            .ok_or_else(|| SimError::UnknownMode(t.destination.clone()))?;
                        exits.push((target, CompiledExpr::compile(&t.guard, &table, &ctx)?));
                    }
                }
            }
            modes.push(ModePlan {
                name: mode.name.clone(),
                flows,
                residence,
                exits,
            });
        }
        Ok(CompiledHybridModel {
            modes,
            var_names: model.variables.iter().map(|v| v.name.clone()).collect(),
            graph_driven: graph.is_some(),
        })
    }

    fn eval_guard(
        guard: &CompiledExpr,
        vals: &[f64],
        stack: &mut Vec<f64>,
        time: f64,
    ) -> Result<bool, SimError> {
        guard
            .eval_bool_with_stack(vals, stack)
            .map_err(|source| SimError::Eval { time, source })
    }

    fn initial_mode(
        &self,
        state: &[f64],
        initial_mode: Option<&str>,
        stack: &mut Vec<f64>,
    ) -> Result<usize, SimError> {
        if let Some(name) = initial_mode {
            return self
                .modes
                .iter()
                .position(|m| m.name == name)
                .ok_or_else(|| SimError::UnknownMode(name.to_string()));
        }
        for (i, mode) in self.modes.iter().enumerate() {
            if let Some(residence) = &mode.residence {
                if Self::eval_guard(residence, state, stack, 0.0)? {
                    return Ok(i);
                }
            }
        }
        Err(SimError::NoActiveMode { time: 0.0 })
    }

    /// Simulates from `cfg.init` (all model variables must be bound),
    /// returning the sampled trace and the mode-switch log.
    pub fn simulate(
        &self,
        cfg: &SimConfig,
        initial_mode: Option<&str>,
    ) -> Result<(Trace, Vec<ModeSwitch>), SimError> {
        cfg.validate()?;
        let mut state: Vec<f64> = self
            .var_names
            .iter()
            .map(|n| {
                cfg.init
                    .get(n)
                    .ok_or_else(|| SimError::MissingInit(n.clone()))
            })
            .collect::<Result<_, _>>()?;
        let mut stack = Vec::new();
        let mut current = self.initial_mode(&state, initial_mode, &mut stack)?;
        let mut switches = Vec::new();

        let n_samples = cfg.n_samples();
        let steps_per_sample = cfg.steps_per_sample();
        let mut trace = Trace {
            names: self.var_names.clone(),
            times: Vec::with_capacity(n_samples),
            samples: Vec::with_capacity(n_samples),
        };
        let mut scratch = Rk4Scratch::new(state.len());

        for sample_idx in 0..n_samples {
            let t = sample_idx as f64 * cfg.sample_time;
            trace.times.push(t);
            trace.samples.push(state.clone());
            if sample_idx + 1 == n_samples {
                break;
            }
            for step in 0..steps_per_sample {
                let step_t = t + step as f64 * cfg.dt;
                // Discrete and instantaneous switch when a guard holds.
                let mut fired: Option<usize> = None;
                for (target, guard) in &self.modes[current].exits {
                    if Self::eval_guard(guard, &state, &mut stack, step_t)? {
                        if fired.is_none() {
                            fired = Some(*target);
                            if !self.graph_driven {
                                break;
                            }
                        } else {
                            // Completed labels are exclusive by construction;
                            // raw guards cannot reach this arm.
                            log::warn!(
                                "multiple guards true at t={step_t} in mode {}; taking first",
                                self.modes[current].name
                            );
                            break;
                        }
                    }
                }
                if let Some(target) = fired {
                    switches.push(ModeSwitch {
                        time: step_t,
                        from: self.modes[current].name.clone(),
                        to: self.modes[target].name.clone(),
                    });
                    current = target;
                }
                let flows = &self.modes[current].flows;
                let mut eval_err = None;
                scratch.step::<EvalError, _>(
                    |y, derivs| {
                        for (i, flow) in flows.iter().enumerate() {
                            derivs[i] = flow.eval_raw(y, &mut stack)?;
                        }
                        Ok(())
                    },
                    &mut state,
                    cfg.dt,
                )
                .map_err(|source| {
                    eval_err = Some(());
                    SimError::Eval {
                        time: step_t,
                        source,
                    }
                })?;
                if state.iter().any(|v| !v.is_finite()) {
                    return Err(SimError::NonFinite {
                        time: step_t + cfg.dt,
                    });
                }
            }
        }
        Ok((trace, switches))
    }
}

/// Convenience wrapper compiling and simulating in one call.
pub fn simulate_hybrid(
    model: &HybridModel,
    graph: Option<&ConditionGraph>,
    cfg: &SimConfig,
    initial_mode: Option<&str>,
) -> Result<(Trace, Vec<ModeSwitch>), SimError> {
    CompiledHybridModel::new(model, graph, cfg.eps_eq)?.simulate(cfg, initial_mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_condition_graph;
    use crate::model::parse_hybrid_model;
    use crate::sim::parse_sim_config;

    fn thermostat() -> HybridModel {
        parse_hybrid_model(
            r#"{
                "variables": [{"name": "temp", "lo": 15, "hi": 25, "precision": 1}],
                "modes": [
                    {"name": "heat", "invariant": "temp < 22", "flows": {"temp": "2"}},
                    {"name": "coast", "invariant": "temp >= 22", "flows": {"temp": "-1"}}
                ],
                "transitions": [
                    {"src": "heat", "dst": "coast", "guard": "temp >= 22"},
                    {"src": "coast", "dst": "heat", "guard": "temp < 22"}
                ],
                "goal": {"final_modes": ["coast"]},
                "unacceptable": ["temp > 30"]
            }"#,
        )
        .unwrap()
    }

    fn cfg(init_temp: f64) -> SimConfig {
        parse_sim_config(&format!(
            r#"{{"dt": 0.01, "sample_time": 0.1, "t_end": 6.0, "init": {{"temp": {init_temp}}}}}"#
        ))
        .unwrap()
    }

    #[test]
    fn raw_guards_bang_bang_cycles() {
        let model = thermostat();
        let (trace, switches) = simulate_hybrid(&model, None, &cfg(18.0), None).unwrap();
        let temp = trace.column("temp").unwrap();
        // Heats to 22, then saw-tooths around the threshold.
        assert!(temp.iter().cloned().fold(f64::MIN, f64::max) < 22.5);
        assert!(temp[0] == 18.0);
        assert!(switches.len() >= 2);
        assert_eq!(switches[0].from, "heat");
        assert_eq!(switches[0].to, "coast");
    }

    #[test]
    fn graph_driven_switching_matches_raw_for_exclusive_guards() {
        let model = thermostat();
        let g = build_condition_graph(&model, Some(model.unacceptable.clone())).unwrap();
        let (raw, _) = simulate_hybrid(&model, None, &cfg(18.0), None).unwrap();
        let (graphed, _) = simulate_hybrid(&model, Some(&g), &cfg(18.0), None).unwrap();
        assert!(raw.max_abs_difference(&graphed).unwrap() < 1e-9);
    }

    #[test]
    fn initial_mode_resolved_from_invariants() {
        let model = thermostat();
        let (_, switches) = simulate_hybrid(&model, None, &cfg(23.0), None).unwrap();
        // Starting above the threshold must begin in `coast` and first switch
        // back to `heat`.
        assert_eq!(switches[0].from, "coast");
        assert_eq!(switches[0].to, "heat");
    }

    #[test]
    fn no_matching_mode_is_an_error() {
        let model = parse_hybrid_model(
            r#"{
                "variables": [{"name": "v", "lo": 0, "hi": 1, "precision": 0.5}],
                "modes": [{"name": "only", "invariant": "v > 10", "flows": {"v": "0"}}],
                "goal": {"final_modes": ["only"]}
            }"#,
        )
        .unwrap();
        let cfg = parse_sim_config(
            r#"{"dt": 0.01, "sample_time": 0.1, "t_end": 1.0, "init": {"v": 0.0}}"#,
        )
        .unwrap();
        let err = simulate_hybrid(&model, None, &cfg, None).unwrap_err();
        assert!(matches!(err, SimError::NoActiveMode { .. }));
        // An explicit initial mode sidesteps the resolution.
        assert!(simulate_hybrid(&model, None, &cfg, Some("only")).is_ok());
    }

    #[test]
    fn missing_variable_init_is_an_error() {
        let model = thermostat();
        let cfg =
            parse_sim_config(r#"{"dt": 0.01, "sample_time": 0.1, "t_end": 1.0, "init": {}}"#)
                .unwrap();
        let err = simulate_hybrid(&model, None, &cfg, None).unwrap_err();
        assert!(matches!(err, SimError::MissingInit(n) if n == "temp"));
    }
}
