//! Compiled expression evaluation for hot paths (simulation steps, grid
//! sweeps, per-sample condition checks).
//!
//! An expression is lowered once into a flat postfix program over a slot
//! array; auxiliary functions are inlined by substitution and constants are
//! resolved at compile time. Operations are applied in the same post-order as
//! the tree walker, so results (and error behavior) are bit-identical to
//! [`super::eval_expr`]. One caveat of textual inlining: an auxiliary-function
//! argument whose parameter never occurs in the body is never evaluated.

use super::eval::{apply_builtin, math_sign};
use super::{
    builtin_arity, grouped, infer_type, AuxFunction, BinOp, EvalContext, EvalError, Expr,
    TypeError, UnaryOp,
};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

/// Maps variable names to slots of a flat `&[f64]` state vector.
#[derive(Debug, Clone, Default)]
pub struct VarTable {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl VarTable {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        VarTable { names, index }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CompileError {
    #[error(transparent)]
    Type(#[from] TypeError),
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
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Load(usize),
    Neg,
    Not,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
    Abs,
    Sin,
    Cos,
    Tan,
    Sqrt,
    Sign,
    Min,
    Max,
}

/// A compiled expression; booleans are represented as 1.0/0.0.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledExpr {
    ops: Vec<Op>,
    eps_eq: f64,
    max_stack: usize,
}

/// Replaces occurrences of auxiliary-function calls by their grouped bodies.
fn inline_aux<'a>(
    e: &Expr,
    aux: &'a BTreeMap<String, AuxFunction>,
    stack: &mut Vec<&'a str>,
) -> Result<Expr, CompileError> {
    match e {
        Expr::Num(_) | Expr::Bool(_) | Expr::Var(_) => Ok(e.clone()),
        Expr::Paren(inner) => Ok(Expr::Paren(Box::new(inline_aux(inner, aux, stack)?))),
        Expr::Unary(op, inner) => Ok(Expr::Unary(*op, Box::new(inline_aux(inner, aux, stack)?))),
        Expr::Binary(op, lhs, rhs) => Ok(Expr::Binary(
            *op,
            Box::new(inline_aux(lhs, aux, stack)?),
            Box::new(inline_aux(rhs, aux, stack)?),
        )),
        Expr::Call(name, args) => {
            let mut inlined_args = Vec::with_capacity(args.len());
            for a in args {
                inlined_args.push(inline_aux(a, aux, stack)?);
            }
            if builtin_arity(name).is_some() {
                return Ok(Expr::Call(name.clone(), inlined_args));
            }
            let def = aux
                .get(name)
                .ok_or_else(|| CompileError::UnknownFunction(name.clone()))?;
            if def.params.len() != inlined_args.len() {
                return Err(CompileError::ArityMismatch {
                    name: name.clone(),
                    expected: def.params.len(),
                    got: inlined_args.len(),
                });
            }
            if stack.iter().any(|n| *n == name.as_str()) {
                return Err(CompileError::RecursiveAux(name.clone()));
            }
            let bindings: HashMap<&str, Expr> = def
                .params
                .iter()
                .map(String::as_str)
                .zip(inlined_args.into_iter().map(grouped))
                .collect();
            let substituted = substitute(&def.body, &bindings);
            stack.push(&def.name);
            let out = inline_aux(&substituted, aux, stack);
            stack.pop();
            out
        }
    }
}

fn substitute(e: &Expr, bindings: &HashMap<&str, Expr>) -> Expr {
    match e {
        Expr::Num(_) | Expr::Bool(_) => e.clone(),
        Expr::Var(name) => bindings.get(name.as_str()).cloned().unwrap_or_else(|| e.clone()),
        Expr::Paren(inner) => Expr::Paren(Box::new(substitute(inner, bindings))),
        Expr::Unary(op, inner) => Expr::Unary(*op, Box::new(substitute(inner, bindings))),
        Expr::Binary(op, lhs, rhs) => Expr::Binary(
            *op,
            Box::new(substitute(lhs, bindings)),
            Box::new(substitute(rhs, bindings)),
        ),
        Expr::Call(name, args) => Expr::Call(
            name.clone(),
            args.iter().map(|a| substitute(a, bindings)).collect(),
        ),
    }
}

impl CompiledExpr {
    /// Compiles `e` against `table`; variables not in the table are resolved
    /// as constants from `ctx` or rejected.
    pub fn compile(e: &Expr, table: &VarTable, ctx: &EvalContext) -> Result<Self, CompileError> {
        infer_type(e)?;
        let mut stack = Vec::new();
        let inlined = inline_aux(e, &ctx.aux, &mut stack)?;
        infer_type(&inlined)?;
        let mut ops = Vec::new();
        emit(&inlined, table, ctx, &mut ops)?;
        let mut depth = 0usize;
        let mut max_stack = 0usize;
        for op in &ops {
            match op {
                Op::Const(_) | Op::Load(_) => depth += 1,
                Op::Neg | Op::Not | Op::Abs | Op::Sin | Op::Cos | Op::Tan | Op::Sqrt
                | Op::Sign => {}
                _ => depth -= 1,
            }
            max_stack = max_stack.max(depth);
        }
        Ok(CompiledExpr {
            ops,
            eps_eq: ctx.eps_eq,
            max_stack,
        })
    }

    /// Evaluates over `vals` (indexed per the compile-time [`VarTable`]),
    /// reusing `stack` as scratch space.
    pub fn eval_raw(&self, vals: &[f64], stack: &mut Vec<f64>) -> Result<f64, EvalError> {
        stack.clear();
        stack.reserve(self.max_stack);
        for op in &self.ops {
            match op {
                Op::Const(v) => stack.push(*v),
                Op::Load(slot) => stack.push(vals[*slot]),
                Op::Neg => {
                    let a = stack.last_mut().unwrap();
                    *a = -*a;
                }
                Op::Not => {
                    let a = stack.last_mut().unwrap();
                    *a = if *a == 0.0 { 1.0 } else { 0.0 };
                }
                Op::Abs => {
                    let a = stack.last_mut().unwrap();
                    *a = a.abs();
                }
                Op::Sin | Op::Cos | Op::Tan | Op::Sqrt | Op::Sign => {
                    let a = stack.last_mut().unwrap();
                    let v = match op {
                        Op::Sin => a.sin(),
                        Op::Cos => a.cos(),
                        Op::Tan => a.tan(),
                        Op::Sqrt => a.sqrt(),
                        _ => math_sign(*a),
                    };
                    if !v.is_finite() {
                        return Err(EvalError::NonFinite);
                    }
                    *a = v;
                }
                _ => {
                    let b = stack.pop().unwrap();
                    let a = stack.last_mut().unwrap();
                    let v = match op {
                        Op::Add => finite_op(*a + b)?,
                        Op::Sub => finite_op(*a - b)?,
                        Op::Mul => finite_op(*a * b)?,
                        Op::Div => {
                            if b == 0.0 {
                                return Err(EvalError::DivisionByZero);
                            }
                            finite_op(*a / b)?
                        }
                        Op::Pow => finite_op(a.powf(b))?,
                        Op::Lt => bool_val(*a < b),
                        Op::Le => bool_val(*a <= b),
                        Op::Gt => bool_val(*a > b),
                        Op::Ge => bool_val(*a >= b),
                        Op::Eq => bool_val((*a - b).abs() <= self.eps_eq),
                        Op::Ne => bool_val((*a - b).abs() > self.eps_eq),
                        Op::And => bool_val(*a != 0.0 && b != 0.0),
                        Op::Or => bool_val(*a != 0.0 || b != 0.0),
                        Op::Min => a.min(b),
                        Op::Max => a.max(b),
                        _ => unreachable!(),
                    };
                    *a = v;
                }
            }
        }
        debug_assert_eq!(stack.len(), 1);
        Ok(stack[0])
    }

    pub fn eval_num(&self, vals: &[f64]) -> Result<f64, EvalError> {
        let mut stack = Vec::new();
        self.eval_raw(vals, &mut stack)
    }

    pub fn eval_bool(&self, vals: &[f64]) -> Result<bool, EvalError> {
        Ok(self.eval_num(vals)? != 0.0)
    }

    pub fn eval_bool_with_stack(
        &self,
        vals: &[f64],
        stack: &mut Vec<f64>,
    ) -> Result<bool, EvalError> {
        Ok(self.eval_raw(vals, stack)? != 0.0)
    }
}

fn finite_op(v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite)
    }
}

fn bool_val(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn emit(
    e: &Expr,
    table: &VarTable,
    ctx: &EvalContext,
    ops: &mut Vec<Op>,
) -> Result<(), CompileError> {
    match e {
        Expr::Num(v) => ops.push(Op::Const(*v)),
        Expr::Bool(b) => ops.push(Op::Const(bool_val(*b))),
        Expr::Var(name) => {
            if let Some(slot) = table.index_of(name) {
                ops.push(Op::Load(slot));
            } else if let Some(v) = ctx.constants.get(name) {
                ops.push(Op::Const(*v));
            } else {
                return Err(CompileError::UnboundVariable(name.clone()));
            }
        }
        Expr::Paren(inner) => emit(inner, table, ctx, ops)?,
        Expr::Unary(UnaryOp::Neg, inner) => {
            emit(inner, table, ctx, ops)?;
            ops.push(Op::Neg);
        }
        Expr::Unary(UnaryOp::Not, inner) => {
            emit(inner, table, ctx, ops)?;
            ops.push(Op::Not);
        }
        Expr::Binary(op, lhs, rhs) => {
            emit(lhs, table, ctx, ops)?;
            emit(rhs, table, ctx, ops)?;
            ops.push(match op {
                BinOp::Add => Op::Add,
                BinOp::Sub => Op::Sub,
                BinOp::Mul => Op::Mul,
                BinOp::Div => Op::Div,
                BinOp::Pow => Op::Pow,
                BinOp::Lt => Op::Lt,
                BinOp::Le => Op::Le,
                BinOp::Gt => Op::Gt,
                BinOp::Ge => Op::Ge,
                BinOp::Eq => Op::Eq,
                BinOp::Ne => Op::Ne,
                BinOp::And => Op::And,
                BinOp::Or => Op::Or,
            });
        }
        Expr::Call(name, args) => {
            // Aux calls were inlined before emission; only builtins remain.
            for a in args {
                emit(a, table, ctx, ops)?;
            }
            ops.push(match (name.as_str(), args.len()) {
                ("abs", 1) => Op::Abs,
                ("sin", 1) => Op::Sin,
                ("cos", 1) => Op::Cos,
                ("tan", 1) => Op::Tan,
                ("sqrt", 1) => Op::Sqrt,
                ("sign", 1) => Op::Sign,
                ("min", 2) => Op::Min,
                ("max", 2) => Op::Max,
                _ => {
                    return Err(CompileError::ArityMismatch {
                        name: name.clone(),
                        expected: builtin_arity(name).unwrap_or(0),
                        got: args.len(),
                    })
                }
            });
        }
    }
    Ok(())
}

// Keep `apply_builtin` linked for parity tests between both evaluators.
#[allow(dead_code)]
fn _builtin_parity_anchor() {
    let _ = apply_builtin;
}
