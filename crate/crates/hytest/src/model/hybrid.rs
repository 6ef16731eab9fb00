//! Hybrid automaton model: variables with acceptable ranges and precisions,
//! modes with invariants and flow equations, guarded transitions, a goal and
//! optional unacceptable conditions.

use super::{ModelError, FAILING_MODE};
use crate::expr::{
    infer_type, parse_expr, AuxFunction, EvalContext, Expr, ExprType, VarTable, DEFAULT_EPS_EQ,
};
use serde::Deserialize;
use std::collections::{BTreeMap, BTreeSet};

/// A model variable with its acceptable value range and grid precision.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableSpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub precision: f64,
}

/// A discrete mode: residence invariant plus one flow (derivative) expression
/// per model variable. A mode may also carry its own unacceptable conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub name: String,
    pub invariant: Option<Expr>,
    pub flows: BTreeMap<String, Expr>,
    pub unacceptable: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub source: String,
    pub destination: String,
    pub guard: Expr,
}

/// The CPS goal: either designated final modes or a goal condition over the
/// model variables.
#[derive(Debug, Clone, PartialEq)]
pub enum Goal {
    FinalModes(Vec<String>),
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel {
    pub variables: Vec<VariableSpec>,
    pub constants: BTreeMap<String, f64>,
    pub aux_functions: Vec<AuxFunction>,
    pub modes: Vec<Mode>,
    pub transitions: Vec<Transition>,
    pub goal: Goal,
    pub unacceptable: Vec<Expr>,
}

#[derive(Deserialize)]
struct RawVariable {
    name: String,
    lo: f64,
    hi: f64,
    precision: f64,
}

#[derive(Deserialize)]
struct RawAux {
    name: String,
    params: Vec<String>,
    body: String,
}

#[derive(Deserialize)]
struct RawMode {
    name: String,
    #[serde(default)]
    invariant: Option<String>,
    flows: BTreeMap<String, String>,
    #[serde(default)]
    unacceptable: Vec<String>,
}

#[derive(Deserialize)]
struct RawTransition {
    src: String,
    dst: String,
    guard: String,
}

#[derive(Deserialize)]
struct RawGoal {
    #[serde(default)]
    final_modes: Option<Vec<String>>,
    #[serde(default)]
    expr: Option<String>,
}

#[derive(Deserialize)]
struct RawHybrid {
    variables: Vec<RawVariable>,
    #[serde(default)]
    constants: BTreeMap<String, f64>,
    #[serde(default)]
    aux: Vec<RawAux>,
    modes: Vec<RawMode>,
    #[serde(default)]
    transitions: Vec<RawTransition>,
    goal: RawGoal,
    #[serde(default)]
    unacceptable: Vec<String>,
}

fn parse_in(location: String, text: &str) -> Result<Expr, ModelError> {
    parse_expr(text).map_err(|source| ModelError::Expr { location, source })
}

/// Parses and validates a hybrid model document.
pub fn parse_hybrid_model(doc: &str) -> Result<HybridModel, ModelError> {
    let raw: RawHybrid = serde_json::from_str(doc)?;
    let variables = raw
        .variables
        .into_iter()
        .map(|v| VariableSpec {
            name: v.name,
            lo: v.lo,
            hi: v.hi,
            precision: v.precision,
        })
        .collect();
    let aux_functions = raw
        .aux
        .into_iter()
        .map(|a| {
            let body = parse_in(format!("aux function `{}`", a.name), &a.body)?;
            Ok(AuxFunction {
                name: a.name,
                params: a.params,
                body,
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let modes = raw
        .modes
        .into_iter()
        .map(|m| {
            let invariant = match m.invariant {
                Some(text) => Some(parse_in(format!("invariant of mode `{}`", m.name), &text)?),
                None => None,
            };
            let flows = m
                .flows
                .into_iter()
                .map(|(var, text)| {
                    let e = parse_in(format!("flow of `{var}` in mode `{}`", m.name), &text)?;
                    Ok((var, e))
                })
                .collect::<Result<BTreeMap<_, _>, ModelError>>()?;
            let unacceptable = m
                .unacceptable
                .iter()
                .map(|text| parse_in(format!("unacceptable condition of mode `{}`", m.name), text))
                .collect::<Result<Vec<_>, ModelError>>()?;
            Ok(Mode {
                name: m.name,
                invariant,
                flows,
                unacceptable,
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let transitions = raw
        .transitions
        .into_iter()
        .map(|t| {
            let guard = parse_in(format!("guard of `{}` -> `{}`", t.src, t.dst), &t.guard)?;
            Ok(Transition {
                source: t.src,
                destination: t.dst,
                guard,
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let goal = match (raw.goal.final_modes, raw.goal.expr) {
        (Some(modes), None) => Goal::FinalModes(modes),
        (None, Some(text)) => Goal::Expr(parse_in("goal expression".into(), &text)?),
        _ => {
            return Err(ModelError::invalid(
                "goal must have exactly one of `final_modes` or `expr`",
            ))
        }
    };
    let unacceptable = raw
        .unacceptable
        .iter()
        .map(|text| parse_in("unacceptable condition".into(), text))
        .collect::<Result<Vec<_>, ModelError>>()?;
    let model = HybridModel {
        variables,
        constants: raw.constants,
        aux_functions,
        modes,
        transitions,
        goal,
        unacceptable,
    };
    model.validate()?;
    Ok(model)
}

impl HybridModel {
    pub fn var_names(&self) -> Vec<&str> {
        self.variables.iter().map(|v| v.name.as_str()).collect()
    }

    /// Variable slot table in declaration order.
    pub fn var_table(&self) -> VarTable {
        VarTable::new(self.variables.iter().map(|v| v.name.clone()))
    }

    pub fn mode(&self, name: &str) -> Option<&Mode> {
        self.modes.iter().find(|m| m.name == name)
    }

    pub fn eval_context(&self, eps_eq: f64) -> EvalContext {
        EvalContext {
            constants: self.constants.clone(),
            aux: self
                .aux_functions
                .iter()
                .map(|a| (a.name.clone(), a.clone()))
                .collect(),
            eps_eq,
        }
    }

    pub fn default_eval_context(&self) -> EvalContext {
        self.eval_context(DEFAULT_EPS_EQ)
    }

    fn check_condition(
        &self,
        e: &Expr,
        location: &str,
        known: &BTreeSet<&str>,
        want: ExprType,
    ) -> Result<(), ModelError> {
        let ty = infer_type(e).map_err(|source| ModelError::Type {
            location: location.to_string(),
            source,
        })?;
        if ty != want {
            return Err(ModelError::invalid(format!(
                "{location}: expected a {want} expression, got {ty}: `{e}`"
            )));
        }
        for var in e.free_vars() {
            if !known.contains(var.as_str()) {
                return Err(ModelError::invalid(format!(
                    "{location}: reference to undeclared variable `{var}`"
                )));
            }
        }
        let aux_names: BTreeSet<&str> =
            self.aux_functions.iter().map(|a| a.name.as_str()).collect();
        for f in e.called_functions() {
            if crate::expr::builtin_arity(&f).is_none() && !aux_names.contains(f.as_str()) {
                return Err(ModelError::invalid(format!(
                    "{location}: call to undefined function `{f}`"
                )));
            }
        }
        Ok(())
    }

    /// Full validation: ranges, unique names, flow completeness, name
    /// resolution and expression typing.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.modes.is_empty() {
            return Err(ModelError::invalid("model has no modes"));
        }
        let mut var_names = BTreeSet::new();
        for v in &self.variables {
            if !(v.lo < v.hi) {
                return Err(ModelError::invalid(format!(
                    "variable `{}`: lo ({}) must be below hi ({})",
                    v.name, v.lo, v.hi
                )));
            }
            if !(v.precision > 0.0) {
                return Err(ModelError::invalid(format!(
                    "variable `{}`: precision must be positive",
                    v.name
                )));
            }
            if !var_names.insert(v.name.as_str()) {
                return Err(ModelError::invalid(format!(
                    "duplicate variable `{}`",
                    v.name
                )));
            }
        }
        for c in self.constants.keys() {
            if var_names.contains(c.as_str()) {
                return Err(ModelError::invalid(format!(
                    "`{c}` is declared both as a variable and a constant"
                )));
            }
        }
        let known: BTreeSet<&str> = var_names
            .iter()
            .copied()
            .chain(self.constants.keys().map(String::as_str))
            .collect();

        let mut aux_names = BTreeSet::new();
        for a in &self.aux_functions {
            if !aux_names.insert(a.name.as_str()) {
                return Err(ModelError::invalid(format!(
                    "duplicate auxiliary function `{}`",
                    a.name
                )));
            }
            if crate::expr::builtin_arity(&a.name).is_some() {
                return Err(ModelError::invalid(format!(
                    "auxiliary function `{}` shadows a builtin",
                    a.name
                )));
            }
            let param_scope: BTreeSet<&str> = a
                .params
                .iter()
                .map(String::as_str)
                .chain(self.constants.keys().map(String::as_str))
                .collect();
            self.check_condition(
                &a.body,
                &format!("aux function `{}`", a.name),
                &param_scope,
                ExprType::Real,
            )?;
        }

        let mut mode_names = BTreeSet::new();
        for m in &self.modes {
            if m.name == FAILING_MODE {
                return Err(ModelError::invalid(format!(
                    "mode name `{FAILING_MODE}` is reserved"
                )));
            }
            if !mode_names.insert(m.name.as_str()) {
                return Err(ModelError::invalid(format!("duplicate mode `{}`", m.name)));
            }
            if let Some(inv) = &m.invariant {
                self.check_condition(
                    inv,
                    &format!("invariant of mode `{}`", m.name),
                    &known,
                    ExprType::Bool,
                )?;
            }
            for u in &m.unacceptable {
                self.check_condition(
                    u,
                    &format!("unacceptable condition of mode `{}`", m.name),
                    &known,
                    ExprType::Bool,
                )?;
            }
            // Exactly one flow per state variable.
            for v in &self.variables {
                let flow = m.flows.get(&v.name).ok_or_else(|| {
                    ModelError::invalid(format!(
                        "mode `{}` is missing a flow for variable `{}`",
                        m.name, v.name
                    ))
                })?;
                self.check_condition(
                    flow,
                    &format!("flow of `{}` in mode `{}`", v.name, m.name),
                    &known,
                    ExprType::Real,
                )?;
            }
            for var in m.flows.keys() {
                if !var_names.contains(var.as_str()) {
                    return Err(ModelError::invalid(format!(
                        "mode `{}` defines a flow for undeclared variable `{var}`",
                        m.name
                    )));
                }
            }
        }

        for t in &self.transitions {
            for end in [&t.source, &t.destination] {
                if !mode_names.contains(end.as_str()) {
                    return Err(ModelError::invalid(format!(
                        "transition `{}` -> `{}` references undeclared mode `{end}`",
                        t.source, t.destination
                    )));
                }
            }
            self.check_condition(
                &t.guard,
                &format!("guard of `{}` -> `{}`", t.source, t.destination),
                &known,
                ExprType::Bool,
            )?;
        }

        match &self.goal {
            Goal::FinalModes(finals) => {
                if finals.is_empty() {
                    return Err(ModelError::invalid("goal lists no final modes"));
                }
                for name in finals {
                    if !mode_names.contains(name.as_str()) {
                        return Err(ModelError::invalid(format!(
                            "goal references undeclared mode `{name}`"
                        )));
                    }
                }
            }
            Goal::Expr(e) => {
                self.check_condition(e, "goal expression", &known, ExprType::Bool)?;
            }
        }

        for u in &self.unacceptable {
            self.check_condition(u, "unacceptable condition", &known, ExprType::Bool)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_model(extra: &str) -> String {
        format!(
            r#"{{
                "variables": [{{"name": "x", "lo": -3, "hi": 3, "precision": 1}}],
                "constants": {{"limit": 2.0}},
                "modes": [
                    {{"name": "on", "invariant": "x < limit", "flows": {{"x": "1"}}}},
                    {{"name": "off", "invariant": "x >= limit", "flows": {{"x": "0"}}}}
                ],
                "transitions": [{{"src": "on", "dst": "off", "guard": "x >= limit"}}],
                "goal": {{"final_modes": ["off"]}}
                {extra}
            }}"#
        )
    }

    #[test]
    fn parses_and_validates() {
        let m = parse_hybrid_model(&tiny_model("")).unwrap();
        assert_eq!(m.modes.len(), 2);
        assert_eq!(m.transitions.len(), 1);
        assert_eq!(m.var_names(), vec!["x"]);
    }

    #[test]
    fn undeclared_variable_named_in_error() {
        let doc = tiny_model("").replace("\"x < limit\"", "\"ghost < limit\"");
        let err = parse_hybrid_model(&doc).unwrap_err();
        assert!(err.to_string().contains("ghost"), "{err}");
    }

    #[test]
    fn missing_flow_rejected() {
        let doc = tiny_model("").replace(r#""flows": {"x": "1"}"#, r#""flows": {}"#);
        let err = parse_hybrid_model(&doc).unwrap_err();
        assert!(err.to_string().contains("missing a flow"), "{err}");
    }

    #[test]
    fn non_boolean_invariant_rejected() {
        let doc = tiny_model("").replace("\"x < limit\"", "\"x + limit\"");
        let err = parse_hybrid_model(&doc).unwrap_err();
        assert!(err.to_string().contains("boolean"), "{err}");
    }

    #[test]
    fn unknown_goal_mode_rejected() {
        let doc = tiny_model("").replace("[\"off\"]", "[\"nowhere\"]");
        let err = parse_hybrid_model(&doc).unwrap_err();
        assert!(err.to_string().contains("nowhere"), "{err}");
    }

    #[test]
    fn reserved_failing_name_rejected() {
        let doc = tiny_model("").replace("\"name\": \"off\"", "\"name\": \"__failing__\"");
        let err = parse_hybrid_model(&doc).unwrap_err();
        assert!(err.to_string().contains("reserved"), "{err}");
    }

    #[test]
    fn goal_expression_accepted() {
        let doc = tiny_model("").replace(
            r#"{"final_modes": ["off"]}"#,
            r#"{"expr": "x > 1 && x < 2"}"#,
        );
        let m = parse_hybrid_model(&doc).unwrap();
        assert!(matches!(m.goal, Goal::Expr(_)));
    }
}
