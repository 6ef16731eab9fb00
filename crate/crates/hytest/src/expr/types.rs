//! Structural type checking.
//!
//! Variables and function results are real-valued, comparisons and logic
//! operators are boolean, so an expression's type is determined by its shape
//! alone. Name resolution (declared variables, arities) is a separate model
//! validation concern.

use super::{builtin_arity, Expr, UnaryOp};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExprType {
    Real,
    Bool,
}

impl std::fmt::Display for ExprType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExprType::Real => write!(f, "real"),
            ExprType::Bool => write!(f, "boolean"),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("type error in `{context}`: expected {expected} but `{offending}` is {found}")]
pub struct TypeError {
    pub context: String,
    pub expected: ExprType,
    pub found: ExprType,
    pub offending: String,
}

impl TypeError {
    pub(crate) fn expected_bool(context: &str, offending: &Expr, found: ExprType) -> Self {
        TypeError {
            context: context.to_string(),
            expected: ExprType::Bool,
            found,
            offending: offending.to_string(),
        }
    }
}

fn require(
    e: &Expr,
    expected: ExprType,
    context: &dyn std::fmt::Display,
) -> Result<(), TypeError> {
    let found = infer_type(e)?;
    if found != expected {
        return Err(TypeError {
            context: context.to_string(),
            expected,
            found,
            offending: e.to_string(),
        });
    }
    Ok(())
}

/// Infers the type of `e`, rejecting boolean/real operand mixes.
pub fn infer_type(e: &Expr) -> Result<ExprType, TypeError> {
    match e {
        Expr::Num(_) => Ok(ExprType::Real),
        Expr::Bool(_) => Ok(ExprType::Bool),
        Expr::Var(_) => Ok(ExprType::Real),
        Expr::Paren(inner) => infer_type(inner),
        Expr::Unary(UnaryOp::Neg, inner) => {
            require(inner, ExprType::Real, &"unary -")?;
            Ok(ExprType::Real)
        }
        Expr::Unary(UnaryOp::Not, inner) => {
            require(inner, ExprType::Bool, &"!")?;
            Ok(ExprType::Bool)
        }
        Expr::Binary(op, lhs, rhs) => {
            let operand = if op.is_logic() {
                ExprType::Bool
            } else {
                ExprType::Real
            };
            require(lhs, operand, &op.symbol())?;
            require(rhs, operand, &op.symbol())?;
            if op.is_arithmetic() {
                Ok(ExprType::Real)
            } else {
                Ok(ExprType::Bool)
            }
        }
        Expr::Call(name, args) => {
            if let Some(arity) = builtin_arity(name) {
                if args.len() != arity {
                    return Err(TypeError {
                        context: name.clone(),
                        expected: ExprType::Real,
                        found: ExprType::Real,
                        offending: format!(
                            "{name} takes {arity} argument(s), got {}",
                            args.len()
                        ),
                    });
                }
            }
            for a in args {
                require(a, ExprType::Real, name)?;
            }
            Ok(ExprType::Real)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn ty(s: &str) -> Result<ExprType, TypeError> {
        infer_type(&parse_expr(s).unwrap())
    }

    #[test]
    fn comparisons_and_logic_are_boolean() {
        assert_eq!(ty("x < 1").unwrap(), ExprType::Bool);
        assert_eq!(ty("x < 1 && y > 2").unwrap(), ExprType::Bool);
        assert_eq!(ty("!(x == 0)").unwrap(), ExprType::Bool);
    }

    #[test]
    fn arithmetic_is_real() {
        assert_eq!(ty("x + sin(y) * 2^z").unwrap(), ExprType::Real);
        assert_eq!(ty("min(a, abs(b))").unwrap(), ExprType::Real);
    }

    #[test]
    fn mixed_operands_rejected() {
        assert!(ty("(x < 1) + 2").is_err());
        assert!(ty("x && y").is_err());
        assert!(ty("!(x + 1)").is_err());
        assert!(ty("abs(x < 1)").is_err());
        assert!(ty("x < 1 < 2").is_err());
        assert!(ty("-(x < 1)").is_err());
    }

    #[test]
    fn builtin_arity_checked() {
        assert!(ty("abs(x, y)").is_err());
        assert!(ty("min(x)").is_err());
    }
}
