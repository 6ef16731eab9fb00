//! Boolean/arithmetic expression language shared by hybrid models, condition
//! graphs and test conditions.
//!
//! Expressions are parsed from an ASCII grammar (see [`parse_expr`]), printed
//! back in a canonical form, type checked structurally and evaluated either by
//! a reference tree walker ([`eval_expr`]) or a compiled stack program
//! ([`CompiledExpr`]) used on hot paths.
//!
//! Grouping parentheses are kept as explicit [`Expr::Paren`] nodes so that a
//! printed expression re-parses to the identical tree and condition labels
//! stay structurally faithful to how they were assembled.

mod compile;
mod eval;
mod parser;
mod types;

pub use compile::{CompileError, CompiledExpr, VarTable};
pub use eval::{eval_expr, EvalContext, EvalError, Value, VarAssignment, DEFAULT_EPS_EQ};
pub use parser::{parse_expr, ParseError};
pub use types::{infer_type, ExprType, TypeError};

use std::fmt;

/// Auxiliary function defined by a model, e.g. an energy function `z(th, thd)`.
///
/// Calls are inlined at evaluation/compile time; recursion is rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxFunction {
    pub name: String,
    pub params: Vec<String>,
    pub body: Expr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    /// Arithmetic negation, binds just below power.
    Neg,
    /// Logical negation, binds between comparison and `&&`.
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
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
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne
        )
    }

    pub fn is_logic(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(
            self,
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Pow
        )
    }
}

/// Builtin real-valued functions available in every expression.
pub const BUILTIN_FUNCTIONS: &[(&str, usize)] = &[
    ("sin", 1),
    ("cos", 1),
    ("tan", 1),
    ("sqrt", 1),
    ("abs", 1),
    ("sign", 1),
    ("min", 2),
    ("max", 2),
];

pub fn builtin_arity(name: &str) -> Option<usize> {
    BUILTIN_FUNCTIONS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, a)| *a)
}

/// Expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Bool(bool),
    Var(String),
    /// Explicit grouping, preserved through print/parse round trips.
    Paren(Box<Expr>),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// Builtin or model-defined auxiliary function call.
    Call(String, Vec<Expr>),
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn and(lhs: Expr, rhs: Expr) -> Expr {
        Expr::binary(BinOp::And, lhs, rhs)
    }

    pub fn or(lhs: Expr, rhs: Expr) -> Expr {
        Expr::binary(BinOp::Or, lhs, rhs)
    }

    pub fn not(e: Expr) -> Expr {
        Expr::Unary(UnaryOp::Not, Box::new(e))
    }

    /// Free variable names, in first-appearance order.
    pub fn free_vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.walk_vars(&mut out);
        out
    }

    fn walk_vars(&self, out: &mut Vec<String>) {
        match self {
            Expr::Num(_) | Expr::Bool(_) => {}
            Expr::Var(name) => {
                if !out.iter().any(|n| n == name) {
                    out.push(name.clone());
                }
            }
            Expr::Paren(inner) => inner.walk_vars(out),
            Expr::Unary(_, inner) => inner.walk_vars(out),
            Expr::Binary(_, lhs, rhs) => {
                lhs.walk_vars(out);
                rhs.walk_vars(out);
            }
            Expr::Call(_, args) => {
                for a in args {
                    a.walk_vars(out);
                }
            }
        }
    }

    /// Names of all called functions, in first-appearance order.
    pub fn called_functions(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.walk_calls(&mut out);
        out
    }

    fn walk_calls(&self, out: &mut Vec<String>) {
        match self {
            Expr::Num(_) | Expr::Bool(_) | Expr::Var(_) => {}
            Expr::Paren(inner) => inner.walk_calls(out),
            Expr::Unary(_, inner) => inner.walk_calls(out),
            Expr::Binary(_, lhs, rhs) => {
                lhs.walk_calls(out);
                rhs.walk_calls(out);
            }
            Expr::Call(name, args) => {
                if !out.iter().any(|n| n == name) {
                    out.push(name.clone());
                }
                for a in args {
                    a.walk_calls(out);
                }
            }
        }
    }
}

/// Wraps `e` in a grouping node unless it already is one.
pub fn grouped(e: Expr) -> Expr {
    match e {
        Expr::Paren(_) => e,
        other => Expr::Paren(Box::new(other)),
    }
}

/// Logical negation of a boolean expression, without simplification.
///
/// `!(e)` is returned verbatim so that serialized condition labels stay
/// auditable against their construction; `!(p)` negates to `!(!(p))`.
pub fn negate(e: Expr) -> Result<Expr, TypeError> {
    let ty = infer_type(&e)?;
    if ty != ExprType::Bool {
        return Err(TypeError::expected_bool("negate", &e, ty));
    }
    Ok(Expr::not(grouped(e)))
}

/// Left-associated conjunction; each operand keeps its own grouping.
///
/// Empty input yields the boolean literal `true`; a single operand is
/// returned unchanged.
pub fn conjoin(es: Vec<Expr>) -> Result<Expr, TypeError> {
    chain(BinOp::And, es, Expr::Bool(true))
}

/// Left-associated disjunction; empty input yields `false`.
pub fn disjoin(es: Vec<Expr>) -> Result<Expr, TypeError> {
    chain(BinOp::Or, es, Expr::Bool(false))
}

fn chain(op: BinOp, es: Vec<Expr>, empty: Expr) -> Result<Expr, TypeError> {
    for e in &es {
        let ty = infer_type(e)?;
        if ty != ExprType::Bool {
            return Err(TypeError::expected_bool(op.symbol(), e, ty));
        }
    }
    let mut iter = es.into_iter();
    let first = match iter.next() {
        None => return Ok(empty),
        Some(e) => e,
    };
    let mut rest = iter.peekable();
    if rest.peek().is_none() {
        return Ok(first);
    }
    let mut acc = grouped(first);
    for e in rest {
        acc = Expr::binary(op, acc, grouped(e));
    }
    Ok(acc)
}

// Precedence used by both the parser and the printer. Higher binds tighter:
// power > unary minus > mul/div > add/sub > comparison > not > and > or.
fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary(op, ..) => match op {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div => 6,
            BinOp::Pow => 8,
        },
        Expr::Unary(UnaryOp::Not, _) => 3,
        Expr::Unary(UnaryOp::Neg, _) => 7,
        Expr::Num(_) | Expr::Bool(_) | Expr::Var(_) | Expr::Paren(_) | Expr::Call(..) => 9,
    }
}

fn fmt_prec(e: &Expr, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let p = precedence(e);
    if p < min {
        write!(f, "(")?;
        fmt_node(e, f)?;
        write!(f, ")")
    } else {
        fmt_node(e, f)
    }
}

fn fmt_node(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Num(v) => write!(f, "{v}"),
        Expr::Bool(b) => write!(f, "{b}"),
        Expr::Var(name) => write!(f, "{name}"),
        Expr::Paren(inner) => {
            write!(f, "(")?;
            fmt_prec(inner, 1, f)?;
            write!(f, ")")
        }
        Expr::Unary(UnaryOp::Neg, inner) => {
            write!(f, "-")?;
            fmt_prec(inner, 7, f)
        }
        Expr::Unary(UnaryOp::Not, inner) => {
            write!(f, "!")?;
            fmt_prec(inner, 3, f)
        }
        Expr::Binary(op, lhs, rhs) => {
            let p = precedence(e);
            if *op == BinOp::Pow {
                // Right-associative; exponent admits a unary sign.
                fmt_prec(lhs, p + 1, f)?;
                write!(f, "^")?;
                fmt_prec(rhs, 7, f)
            } else {
                fmt_prec(lhs, p, f)?;
                write!(f, " {} ", op.symbol())?;
                fmt_prec(rhs, p + 1, f)
            }
        }
        Expr::Call(name, args) => {
            write!(f, "{name}(")?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                fmt_prec(a, 1, f)?;
            }
            write!(f, ")")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_prec(self, 1, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    #[test]
    fn display_matches_source_for_parsed_trees() {
        for s in [
            "abs(z(th,thd)) < u_max",
            "0",
            "abs(x) > 3",
            "-u_max",
            "a + b * c",
            "(a + b) * c",
            "2^3^2",
            "-x^2",
            "x^-2",
            "!(x > 0) && (y < 1) || z == 0",
        ] {
            assert_eq!(p(s).to_string(), s, "canonical form of {s:?}");
        }
    }

    #[test]
    fn negate_wraps_without_simplifying() {
        assert_eq!(negate(p("abs(x) <= 3")).unwrap().to_string(), "!(abs(x) <= 3)");
        assert_eq!(negate(p("!(x > 0)")).unwrap().to_string(), "!(!(x > 0))");
        let c = conjoin(vec![p("x > 1"), p("y < 2")]).unwrap();
        assert_eq!(negate(c).unwrap().to_string(), "!((x > 1) && (y < 2))");
    }

    #[test]
    fn negate_rejects_real_input() {
        assert!(negate(p("x + 1")).is_err());
    }

    #[test]
    fn conjoin_and_disjoin_group_every_operand() {
        let c = conjoin(vec![p("x > 1"), negate(p("y < 2")).unwrap()]).unwrap();
        assert_eq!(c.to_string(), "(x > 1) && (!(y < 2))");
        let d = disjoin(vec![p("abs(x) > 3"), p("x == 0")]).unwrap();
        assert_eq!(d.to_string(), "(abs(x) > 3) || (x == 0)");
        let three = conjoin(vec![p("a > 0"), p("b > 0"), p("c > 0")]).unwrap();
        assert_eq!(three.to_string(), "(a > 0) && (b > 0) && (c > 0)");
    }

    #[test]
    fn empty_and_singleton_chains() {
        assert_eq!(conjoin(vec![]).unwrap(), Expr::Bool(true));
        assert_eq!(disjoin(vec![]).unwrap(), Expr::Bool(false));
        // A single condition is passed through untouched.
        assert_eq!(conjoin(vec![p("x > 0")]).unwrap(), p("x > 0"));
        assert_eq!(disjoin(vec![p("x > 0")]).unwrap(), p("x > 0"));
    }

    #[test]
    fn free_vars_in_order() {
        assert_eq!(
            p("abs(z(th,thd)) < u_max && th > 0").free_vars(),
            vec!["th", "thd", "u_max"]
        );
    }
}
