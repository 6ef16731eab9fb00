//! Fixed-step simulation: classical RK4 over block-dataflow models and raw
//! hybrid-model flows, producing traces sampled at a fixed rate.
//!
//! Guards and discrete state (unit delays, hybrid mode switches) are only
//! evaluated at step/sample boundaries; there is no zero-crossing
//! localization, so `dt` must be chosen small relative to the dynamics.

mod block_exec;
mod hybrid_exec;

pub use block_exec::{simulate_sim_model, CompiledSimModel};
pub use hybrid_exec::{simulate_hybrid, CompiledHybridModel, ModeSwitch};

use crate::expr::{CompileError, EvalError, VarAssignment, DEFAULT_EPS_EQ};
use crate::model::ModelError;
use serde::Deserialize;
use std::collections::BTreeMap;
use thiserror::Error;

/// Hard cap on integration steps per run, against misconfigured step sizes.
pub const STEP_BUDGET: u64 = 50_000_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("expression evaluation failed at t={time}: {source}")]
    Eval { time: f64, source: EvalError },
    #[error("non-finite value at t={time}")]
    NonFinite { time: f64 },
    #[error("step budget exceeded: {steps} steps (budget {budget})")]
    StepBudget { steps: u64, budget: u64 },
    #[error("no initial value for `{0}`")]
    MissingInit(String),
    #[error("state at t={time} satisfies no mode invariant")]
    NoActiveMode { time: f64 },
    #[error("unknown mode `{0}`")]
    UnknownMode(String),
}

/// Simulation run configuration. `init` binds state-block initial values (by
/// block id / variable name) and external inputs; `plant_init` entries
/// override `init` for uncontrolled-plant runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub sample_time: f64,
    pub t_end: f64,
    pub init: VarAssignment,
    pub plant_init: Option<VarAssignment>,
    pub eps_eq: f64,
}

#[derive(Deserialize)]
struct RawSimConfig {
    dt: f64,
    sample_time: f64,
    t_end: f64,
    #[serde(default)]
    init: BTreeMap<String, f64>,
    #[serde(default)]
    plant_init: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    eps_eq: Option<f64>,
}

/// Parses and validates a simulation config document.
pub fn parse_sim_config(doc: &str) -> Result<SimConfig, SimError> {
    let raw: RawSimConfig =
        serde_json::from_str(doc).map_err(|e| SimError::Config(e.to_string()))?;
    let cfg = SimConfig {
        dt: raw.dt,
        sample_time: raw.sample_time,
        t_end: raw.t_end,
        init: VarAssignment(raw.init),
        plant_init: raw.plant_init.map(VarAssignment),
        eps_eq: raw.eps_eq.unwrap_or(DEFAULT_EPS_EQ),
    };
    cfg.validate()?;
    Ok(cfg)
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0) {
            return Err(SimError::Config("dt must be positive".into()));
        }
        if !(self.sample_time > 0.0) {
            return Err(SimError::Config("sample_time must be positive".into()));
        }
        if !(self.t_end > 0.0) {
            return Err(SimError::Config("t_end must be positive".into()));
        }
        let ratio = self.sample_time / self.dt;
        if (ratio - ratio.round()).abs() > 1e-6 || ratio < 1.0 - 1e-9 {
            return Err(SimError::Config(format!(
                "sample_time ({}) must be an integral multiple of dt ({})",
                self.sample_time, self.dt
            )));
        }
        if self.n_samples() < 2 {
            return Err(SimError::Config(
                "t_end must cover at least one sample interval".into(),
            ));
        }
        let steps = self.steps_per_sample() as u64 * (self.n_samples() as u64 - 1);
        if steps > STEP_BUDGET {
            return Err(SimError::StepBudget {
                steps,
                budget: STEP_BUDGET,
            });
        }
        Ok(())
    }

    pub fn steps_per_sample(&self) -> usize {
        (self.sample_time / self.dt).round() as usize
    }

    /// Sample count including t = 0: floor(t_end / sample_time) + 1.
    pub fn n_samples(&self) -> usize {
        (self.t_end / self.sample_time + 1e-9).floor() as usize + 1
    }

    /// Initial values for an uncontrolled-plant run: `plant_init` entries
    /// merged over `init`.
    pub fn plant_init_merged(&self) -> VarAssignment {
        let mut merged = self.init.clone();
        if let Some(overrides) = &self.plant_init {
            for (k, v) in overrides.iter() {
                merged.set(k, v);
            }
        }
        merged
    }

    /// Copy with `overrides` merged over `init` (used to start a run from a
    /// test case's inputs).
    pub fn with_overrides(&self, overrides: &VarAssignment) -> SimConfig {
        let mut cfg = self.clone();
        for (k, v) in overrides.iter() {
            cfg.init.set(k, v);
        }
        cfg
    }
}

/// Sampled simulation output over a named variable set.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    /// One row per sample instant, aligned with `names`.
    pub samples: Vec<Vec<f64>>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.names.iter().position(|n| n == name)?;
        Some(self.samples.iter().map(|row| row[idx]).collect())
    }

    pub fn assignment(&self, sample: usize) -> VarAssignment {
        self.names
            .iter()
            .cloned()
            .zip(self.samples[sample].iter().copied())
            .collect()
    }

    /// CSV export with header `t,<var1>,<var2>,...` at full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (t, row) in self.times.iter().zip(&self.samples) {
            out.push_str(&format!("{t}"));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Largest absolute per-sample difference against another trace over the
    /// shared variables; `None` when shapes do not line up.
    pub fn max_abs_difference(&self, other: &Trace) -> Option<f64> {
        if self.names != other.names || self.len() != other.len() {
            return None;
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.samples.iter().zip(&other.samples) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
        Some(worst)
    }
}

/// One classical 4th-order Runge-Kutta update of `state` under `rhs`.
pub fn rk4_step<F>(mut rhs: F, state: &VarAssignment, dt: f64) -> Result<VarAssignment, SimError>
where
    F: FnMut(&VarAssignment) -> Result<VarAssignment, SimError>,
{
    if !(dt > 0.0) {
        return Err(SimError::Config("dt must be positive".into()));
    }
    let names: Vec<String> = state.0.keys().cloned().collect();
    let vecd = |a: &VarAssignment| -> Vec<f64> { names.iter().map(|n| a.get(n).unwrap()).collect() };
    let tod = |v: &[f64]| -> VarAssignment {
        names
            .iter()
            .cloned()
            .zip(v.iter().copied())
            .collect()
    };
    let y = vecd(state);
    let deriv = |vals: &[f64], rhs: &mut F| -> Result<Vec<f64>, SimError> {
        let out = rhs(&tod(vals))?;
        let mut d = Vec::with_capacity(names.len());
        for n in &names {
            d.push(
                out.get(n)
                    .ok_or_else(|| SimError::MissingInit(n.clone()))?,
            );
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFinite { time: f64::NAN });
        }
        Ok(d)
    };
    let k1 = deriv(&y, &mut rhs)?;
    let mid1: Vec<f64> = y.iter().zip(&k1).map(|(a, k)| a + 0.5 * dt * k).collect();
    let k2 = deriv(&mid1, &mut rhs)?;
    let mid2: Vec<f64> = y.iter().zip(&k2).map(|(a, k)| a + 0.5 * dt * k).collect();
    let k3 = deriv(&mid2, &mut rhs)?;
    let endp: Vec<f64> = y.iter().zip(&k3).map(|(a, k)| a + dt * k).collect();
    let k4 = deriv(&endp, &mut rhs)?;
    let next: Vec<f64> = (0..y.len())
        .map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if next.iter().any(|v| !v.is_finite()) {
        return Err(SimError::NonFinite { time: f64::NAN });
    }
    Ok(tod(&next))
}

/// Slice-based RK4 used by the executors; `derivs(state, out)` writes the
/// derivative of each state entry. No allocation per step.
pub(crate) struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    pub(crate) fn new(n: usize) -> Self {
        Rk4Scratch {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    pub(crate) fn step<E, F>(&mut self, mut derivs: F, y: &mut [f64], dt: f64) -> Result<(), E>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<(), E>,
    {
        derivs(y, &mut self.k1)?;
        for i in 0..y.len() {
            self.tmp[i] = y[i] + 0.5 * dt * self.k1[i];
        }
        derivs(&self.tmp, &mut self.k2)?;
        for i in 0..y.len() {
            self.tmp[i] = y[i] + 0.5 * dt * self.k2[i];
        }
        derivs(&self.tmp, &mut self.k3)?;
        for i in 0..y.len() {
            self.tmp[i] = y[i] + dt * self.k3[i];
        }
        derivs(&self.tmp, &mut self.k4)?;
        for i in 0..y.len() {
            y[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_zero_rhs_keeps_state() {
        let state: VarAssignment = [("a", 1.5), ("b", -2.0)].into_iter().collect();
        let next = rk4_step(
            |_| Ok([("a", 0.0), ("b", 0.0)].into_iter().collect()),
            &state,
            0.1,
        )
        .unwrap();
        assert_eq!(next, state);
    }

    #[test]
    fn rk4_matches_exponential() {
        // x' = x, x(0) = 1: one step of 0.1 lands within 1e-7 of e^0.1.
        let state: VarAssignment = [("x", 1.0)].into_iter().collect();
        let next = rk4_step(
            |s| Ok([("x", s.get("x").unwrap())].into_iter().collect()),
            &state,
            0.1,
        )
        .unwrap();
        let expected = 0.1_f64.exp();
        assert!((next.get("x").unwrap() - expected).abs() < 1e-7);
    }

    #[test]
    fn rk4_rejects_nan_derivative() {
        let state: VarAssignment = [("x", 1.0)].into_iter().collect();
        let r = rk4_step(
            |_| Ok([("x", f64::NAN)].into_iter().collect()),
            &state,
            0.1,
        );
        assert!(matches!(r, Err(SimError::NonFinite { .. })));
    }

    #[test]
    fn config_validation() {
        let ok = parse_sim_config(
            r#"{"dt": 0.001, "sample_time": 0.01, "t_end": 1.0, "init": {"x": 0.0}}"#,
        )
        .unwrap();
        assert_eq!(ok.steps_per_sample(), 10);
        assert_eq!(ok.n_samples(), 101);
        assert_eq!(ok.eps_eq, DEFAULT_EPS_EQ);

        assert!(parse_sim_config(r#"{"dt": 0.003, "sample_time": 0.01, "t_end": 1.0}"#).is_err());
        assert!(parse_sim_config(r#"{"dt": -0.1, "sample_time": 0.01, "t_end": 1.0}"#).is_err());
        assert!(parse_sim_config(r#"{"dt": 0.01, "sample_time": 0.01, "t_end": 0.005}"#).is_err());
    }

    #[test]
    fn plant_init_merges_over_init() {
        let cfg = parse_sim_config(
            r#"{"dt": 0.01, "sample_time": 0.01, "t_end": 1.0,
                "init": {"a": 1.0, "b": 2.0}, "plant_init": {"b": 9.0}}"#,
        )
        .unwrap();
        let merged = cfg.plant_init_merged();
        assert_eq!(merged.get("a"), Some(1.0));
        assert_eq!(merged.get("b"), Some(9.0));
    }

    #[test]
    fn trace_csv_has_header_and_full_precision() {
        let trace = Trace {
            names: vec!["x".into(), "y".into()],
            times: vec![0.0, 0.01],
            samples: vec![vec![0.1, 1.0], vec![0.12345678901234567, 2.0]],
        };
        let csv = trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,x,y");
        assert_eq!(lines.next().unwrap(), "0,0.1,1");
        let last = lines.next().unwrap();
        let parsed: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(parsed, 0.12345678901234567);
    }
}
