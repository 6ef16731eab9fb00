//! Reference tree-walking evaluator.
//!
//! This is the simple, obviously-correct evaluation path. Hot paths use
//! [`super::CompiledExpr`]; both must agree exactly, which the test suite
//! checks by evaluating random expressions through both routes.

use super::{builtin_arity, AuxFunction, BinOp, Expr, UnaryOp};
use std::collections::BTreeMap;
use thiserror::Error;

/// Default absolute tolerance for `==`/`!=` between reals, configurable per
/// run through [`EvalContext::with_eps_eq`].
pub const DEFAULT_EPS_EQ: f64 = 1e-9;

/// A total assignment of real values to variable names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VarAssignment(pub BTreeMap<String, f64>);

impl VarAssignment {
    pub fn new() -> Self {
        VarAssignment(BTreeMap::new())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn set(&mut self, name: impl Into<String>, value: f64) {
        self.0.insert(name.into(), value);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for VarAssignment {
    fn from_iter<T: IntoIterator<Item = (S, f64)>>(iter: T) -> Self {
        VarAssignment(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Num(f64),
    Bool(bool),
}

impl Value {
    pub fn as_num(self) -> Result<f64, EvalError> {
        match self {
            Value::Num(v) => Ok(v),
            Value::Bool(_) => Err(EvalError::NotANumber),
        }
    }

    pub fn as_bool(self) -> Result<bool, EvalError> {
        match self {
            Value::Bool(b) => Ok(b),
            Value::Num(_) => Err(EvalError::NotABoolean),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("function `{name}` takes {expected} argument(s), got {got}")]
    ArityMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("recursive auxiliary function `{0}`")]
    RecursiveAux(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite result")]
    NonFinite,
    #[error("expected a number, found a boolean")]
    NotANumber,
    #[error("expected a boolean, found a number")]
    NotABoolean,
}

/// Model-level context for evaluation: constants, auxiliary functions and the
/// equality tolerance. Cheap to clone; built once per run.
#[derive(Debug, Clone, Default)]
pub struct EvalContext {
    pub constants: BTreeMap<String, f64>,
    pub aux: BTreeMap<String, AuxFunction>,
    pub eps_eq: f64,
}

impl EvalContext {
    pub fn new() -> Self {
        EvalContext {
            constants: BTreeMap::new(),
            aux: BTreeMap::new(),
            eps_eq: DEFAULT_EPS_EQ,
        }
    }

    pub fn with_eps_eq(mut self, eps_eq: f64) -> Self {
        self.eps_eq = eps_eq;
        self
    }
}

fn finite(v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite)
    }
}

pub(crate) fn math_sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn apply_builtin(name: &str, args: &[f64]) -> Result<f64, EvalError> {
    let v = match (name, args) {
        ("sin", [a]) => a.sin(),
        ("cos", [a]) => a.cos(),
        ("tan", [a]) => a.tan(),
        ("sqrt", [a]) => a.sqrt(),
        ("abs", [a]) => a.abs(),
        ("sign", [a]) => math_sign(*a),
        ("min", [a, b]) => a.min(*b),
        ("max", [a, b]) => a.max(*b),
        _ => {
            return Err(EvalError::ArityMismatch {
                name: name.to_string(),
                expected: builtin_arity(name).unwrap_or(0),
                got: args.len(),
            })
        }
    };
    finite(v)
}

/// Evaluates `e` under `env`, resolving constants and auxiliary functions via
/// `ctx`. `==`/`!=` compare with absolute tolerance `ctx.eps_eq`.
///
/// Logic operators evaluate both operands (no short-circuiting), so errors in
/// either operand always surface and the compiled route behaves identically.
pub fn eval_expr(e: &Expr, env: &VarAssignment, ctx: &EvalContext) -> Result<Value, EvalError> {
    let mut stack = Vec::new();
    eval_inner(e, env, ctx, &mut stack)
}

fn eval_inner<'a>(
    e: &'a Expr,
    env: &VarAssignment,
    ctx: &'a EvalContext,
    aux_stack: &mut Vec<&'a str>,
) -> Result<Value, EvalError> {
    match e {
        Expr::Num(v) => Ok(Value::Num(*v)),
        Expr::Bool(b) => Ok(Value::Bool(*b)),
        Expr::Var(name) => {
            if let Some(v) = env.get(name) {
                return Ok(Value::Num(v));
            }
            if let Some(v) = ctx.constants.get(name) {
                return Ok(Value::Num(*v));
            }
            Err(EvalError::UnboundVariable(name.clone()))
        }
        Expr::Paren(inner) => eval_inner(inner, env, ctx, aux_stack),
        Expr::Unary(UnaryOp::Neg, inner) => {
            let v = eval_inner(inner, env, ctx, aux_stack)?.as_num()?;
            Ok(Value::Num(-v))
        }
        Expr::Unary(UnaryOp::Not, inner) => {
            let b = eval_inner(inner, env, ctx, aux_stack)?.as_bool()?;
            Ok(Value::Bool(!b))
        }
        Expr::Binary(op, lhs, rhs) => {
            let l = eval_inner(lhs, env, ctx, aux_stack)?;
            let r = eval_inner(rhs, env, ctx, aux_stack)?;
            apply_binary(*op, l, r, ctx.eps_eq)
        }
        Expr::Call(name, args) => {
            let mut vals = Vec::with_capacity(args.len());
            for a in args {
                vals.push(eval_inner(a, env, ctx, aux_stack)?.as_num()?);
            }
            if builtin_arity(name).is_some() {
                return Ok(Value::Num(apply_builtin(name, &vals)?));
            }
            let def = ctx
                .aux
                .get(name)
                .ok_or_else(|| EvalError::UnknownFunction(name.clone()))?;
            if def.params.len() != vals.len() {
                return Err(EvalError::ArityMismatch {
                    name: name.clone(),
                    expected: def.params.len(),
                    got: vals.len(),
                });
            }
            if aux_stack.iter().any(|n| *n == name.as_str()) {
                return Err(EvalError::RecursiveAux(name.clone()));
            }
            // Aux bodies see only their parameters and model constants.
            let body_env: VarAssignment = def
                .params
                .iter()
                .cloned()
                .zip(vals)
                .collect();
            aux_stack.push(name);
            let result = eval_inner(&def.body, &body_env, ctx, aux_stack);
            aux_stack.pop();
            result
        }
    }
}

fn apply_binary(op: BinOp, l: Value, r: Value, eps_eq: f64) -> Result<Value, EvalError> {
    match op {
        BinOp::And => Ok(Value::Bool(l.as_bool()? && r.as_bool()?)),
        BinOp::Or => Ok(Value::Bool(l.as_bool()? || r.as_bool()?)),
        _ => {
            let a = l.as_num()?;
            let b = r.as_num()?;
            match op {
                BinOp::Add => Ok(Value::Num(finite(a + b)?)),
                BinOp::Sub => Ok(Value::Num(finite(a - b)?)),
                BinOp::Mul => Ok(Value::Num(finite(a * b)?)),
                BinOp::Div => {
                    if b == 0.0 {
                        Err(EvalError::DivisionByZero)
                    } else {
                        Ok(Value::Num(finite(a / b)?))
                    }
                }
                BinOp::Pow => Ok(Value::Num(finite(a.powf(b))?)),
                BinOp::Lt => Ok(Value::Bool(a < b)),
                BinOp::Le => Ok(Value::Bool(a <= b)),
                BinOp::Gt => Ok(Value::Bool(a > b)),
                BinOp::Ge => Ok(Value::Bool(a >= b)),
                BinOp::Eq => Ok(Value::Bool((a - b).abs() <= eps_eq)),
                BinOp::Ne => Ok(Value::Bool((a - b).abs() > eps_eq)),
                BinOp::And | BinOp::Or => unreachable!(),
            }
        }
    }
}
