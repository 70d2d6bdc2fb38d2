//! Deterministic expression evaluation over a valuation environment.

use std::collections::BTreeMap;

use thiserror::Error;

use super::expr::{BinaryOp, Expr, QuantKind, UnaryOp};

/// Values must stay within the 16-bit signed range at every step; anything
/// beyond is a specification error, not silent wraparound.
pub const VALUE_MIN: i64 = i16::MIN as i64;
pub const VALUE_MAX: i64 = i16::MAX as i64;

pub fn in_value_range(v: i64) -> bool {
    (VALUE_MIN..=VALUE_MAX).contains(&v)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("division by zero in `{0}`")]
    DivisionByZero(String),
    #[error("arithmetic result {value} outside the 16-bit value range in `{context}`")]
    Overflow { value: i64, context: String },
    #[error("unresolved member reference `{0}` (only property formulas may name agent locations)")]
    UnresolvedMember(String),
    #[error("no instance `{template}({index})` in scope")]
    NoSuchInstance { template: String, index: i64 },
}

/// Read access to a valuation plus, for property formulas, per-instance
/// lookups. The two instance hooks default to "not available" so that plain
/// map environments can be used wherever only variables occur.
pub trait Env {
    fn var(&self, name: &str) -> Option<i64>;

    fn instance_var(&self, _template: &str, _index: i64, _field: &str) -> Option<i64> {
        None
    }

    fn instance_at(&self, _template: &str, _index: i64, _location: &str) -> Option<bool> {
        None
    }
}

impl Env for BTreeMap<String, i64> {
    fn var(&self, name: &str) -> Option<i64> {
        self.get(name).copied()
    }
}

impl Env for std::collections::HashMap<String, i64> {
    fn var(&self, name: &str) -> Option<i64> {
        self.get(name).copied()
    }
}

impl<E: Env + ?Sized> Env for &E {
    fn var(&self, name: &str) -> Option<i64> {
        (**self).var(name)
    }
    fn instance_var(&self, template: &str, index: i64, field: &str) -> Option<i64> {
        (**self).instance_var(template, index, field)
    }
    fn instance_at(&self, template: &str, index: i64, location: &str) -> Option<bool> {
        (**self).instance_at(template, index, location)
    }
}

/// Evaluate an expression; booleans come back as 0/1.
pub fn eval(expr: &Expr, env: &dyn Env) -> Result<i64, EvalError> {
    let mut locals = Vec::new();
    eval_inner(expr, env, &mut locals)
}

fn eval_inner(
    expr: &Expr,
    env: &dyn Env,
    locals: &mut Vec<(String, i64)>,
) -> Result<i64, EvalError> {
    match expr {
        Expr::Lit(v) => Ok(*v),
        Expr::Var(name) => locals
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .or_else(|| env.var(name))
            .ok_or_else(|| EvalError::Unbound(name.clone())),
        Expr::Unary(op, e) => {
            let v = eval_inner(e, env, locals)?;
            match op {
                UnaryOp::Not => Ok(i64::from(v == 0)),
                UnaryOp::Neg => check_range(-v, expr),
            }
        }
        Expr::Binary(op, l, r) => {
            let a = eval_inner(l, env, locals)?;
            // Short-circuit before touching the right side.
            match op {
                BinaryOp::And if a == 0 => return Ok(0),
                BinaryOp::Or if a != 0 => return Ok(1),
                _ => {}
            }
            let b = eval_inner(r, env, locals)?;
            match op {
                BinaryOp::Mul => check_range(a * b, expr),
                BinaryOp::Div | BinaryOp::Rem => {
                    if b == 0 {
                        return Err(EvalError::DivisionByZero(expr.to_string()));
                    }
                    let v = if *op == BinaryOp::Div { a / b } else { a % b };
                    check_range(v, expr)
                }
                BinaryOp::Add => check_range(a + b, expr),
                BinaryOp::Sub => check_range(a - b, expr),
                BinaryOp::Lt => Ok(i64::from(a < b)),
                BinaryOp::Le => Ok(i64::from(a <= b)),
                BinaryOp::Gt => Ok(i64::from(a > b)),
                BinaryOp::Ge => Ok(i64::from(a >= b)),
                BinaryOp::Eq => Ok(i64::from(a == b)),
                BinaryOp::Ne => Ok(i64::from(a != b)),
                BinaryOp::And => Ok(i64::from(b != 0)),
                BinaryOp::Or => Ok(i64::from(b != 0)),
            }
        }
        Expr::Quant {
            kind,
            var,
            lo,
            hi,
            body,
        } => {
            let lo = eval_inner(lo, env, locals)?;
            let hi = eval_inner(hi, env, locals)?;
            for i in lo..=hi {
                locals.push((var.clone(), i));
                let v = eval_inner(body, env, locals)?;
                locals.pop();
                match kind {
                    QuantKind::Exists if v != 0 => return Ok(1),
                    QuantKind::Forall if v == 0 => return Ok(0),
                    _ => {}
                }
            }
            Ok(i64::from(*kind == QuantKind::Forall))
        }
        Expr::Member { .. } => Err(EvalError::UnresolvedMember(expr.to_string())),
        Expr::AtLocation {
            template,
            index,
            location,
        } => {
            let idx = match index {
                Some(e) => eval_inner(e, env, locals)?,
                None => 1,
            };
            env.instance_at(template, idx, location)
                .map(i64::from)
                .ok_or(EvalError::NoSuchInstance {
                    template: template.clone(),
                    index: idx,
                })
        }
        Expr::InstanceVar {
            template,
            index,
            field,
        } => {
            let idx = eval_inner(index, env, locals)?;
            env.instance_var(template, idx, field)
                .ok_or(EvalError::NoSuchInstance {
                    template: template.clone(),
                    index: idx,
                })
        }
    }
}

fn check_range(v: i64, context: &Expr) -> Result<i64, EvalError> {
    if in_value_range(v) {
        Ok(v)
    } else {
        Err(EvalError::Overflow {
            value: v,
            context: context.to_string(),
        })
    }
}

/// Outcome of running an update list against a valuation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Applied {
    /// All updates landed inside their declared ranges.
    Ok,
    /// Some update left its target's range: the edge does not fire.
    Disabled,
}

/// Apply updates left to right; later updates see earlier results. An update
/// whose result leaves the target's declared `[lo,hi]` disables the edge.
pub fn apply_updates(
    updates: &[super::Update],
    vars: &mut BTreeMap<String, i64>,
    range_of: &dyn Fn(&str) -> Option<(i64, i64)>,
) -> Result<Applied, EvalError> {
    for update in updates {
        let value = eval(&update.value, vars)?;
        if let Some((lo, hi)) = range_of(&update.target) {
            if value < lo || value > hi {
                return Ok(Applied::Disabled);
            }
        }
        vars.insert(update.target.clone(), value);
    }
    Ok(Applied::Ok)
}
