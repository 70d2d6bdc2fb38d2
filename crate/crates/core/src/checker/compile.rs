//! Slot-resolved expression form used on the exploration hot path. Compiled
//! evaluation must agree exactly with the tree-walking evaluator in
//! `model::eval`; a differential test in the checker enforces that.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::expr::{BinaryOp, Expr, QuantKind, UnaryOp};
use crate::model::{eval::in_value_range, EvalError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("no template named `{0}` in the model")]
    UnknownTemplate(String),
    #[error("template `{template}` has no location or private variable `{field}`")]
    UnknownField { template: String, field: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Compiled {
    Lit(i64),
    /// Variable slot in the scratch valuation.
    Slot(u32),
    /// Quantifier-bound local, de Bruijn index from the innermost binder.
    Local(u32),
    Unary(UnaryOp, Box<Compiled>),
    Binary(BinaryOp, Box<Compiled>, Box<Compiled>),
    Quant {
        kind: QuantKind,
        lo: Box<Compiled>,
        hi: Box<Compiled>,
        body: Box<Compiled>,
    },
    /// 1 iff the fixed agent occupies the location index.
    AtLoc { agent: u32, loc: u32 },
    /// Location predicate with a computed 1-based instance index.
    DynAtLoc {
        agent_start: u32,
        count: u32,
        index: Box<Compiled>,
        loc: u32,
        template: String,
    },
    /// Private variable of a computed instance: slot =
    /// `private_base[agent_start + index - 1] + field_offset`.
    DynVar {
        agent_start: u32,
        count: u32,
        index: Box<Compiled>,
        field_offset: u32,
        template: String,
    },
}

/// Name resolution tables for one runtime.
pub struct Symbols {
    pub var_slots: BTreeMap<String, u32>,
    pub templates: BTreeMap<String, TemplateInfo>,
    /// First variable slot of each agent's privates.
    pub private_base: Vec<u32>,
}

pub struct TemplateInfo {
    pub agent_start: u32,
    pub count: u32,
    pub locations: Vec<String>,
    pub private_offsets: BTreeMap<String, u32>,
}

impl Symbols {
    /// Resolve a user-facing variable name to its slot: a global, an
    /// internally qualified name, a single-instance template's private
    /// under its declaration name, or an instance-qualified `T(i).p` /
    /// `T.p` display form.
    pub fn resolve_display(&self, name: &str) -> Option<u32> {
        if let Some(&slot) = self.var_slots.get(name) {
            return Some(slot);
        }
        for info in self.templates.values() {
            if info.count == 1 {
                if let Some(&offset) = info.private_offsets.get(name) {
                    let agent = info.agent_start as usize;
                    return Some(self.private_base[agent] + offset);
                }
            }
        }
        let (head, field) = name.rsplit_once('.')?;
        let (template, index) = match head.strip_suffix(')') {
            Some(rest) => {
                let (template, idx) = rest.split_once('(')?;
                (template, idx.parse::<u32>().ok()?)
            }
            None => (head, 1),
        };
        let info = self.templates.get(template)?;
        if index < 1 || index > info.count {
            return None;
        }
        let offset = *info.private_offsets.get(field)?;
        let agent = (info.agent_start + index - 1) as usize;
        Some(self.private_base[agent] + offset)
    }

    pub fn compile(&self, expr: &Expr) -> Result<Compiled, CompileError> {
        self.compile_inner(expr, &mut Vec::new())
    }

    fn compile_inner(
        &self,
        expr: &Expr,
        locals: &mut Vec<String>,
    ) -> Result<Compiled, CompileError> {
        match expr {
            Expr::Lit(v) => Ok(Compiled::Lit(*v)),
            Expr::Var(name) => {
                if let Some(pos) = locals.iter().rev().position(|l| l == name) {
                    return Ok(Compiled::Local(pos as u32));
                }
                self.resolve_display(name)
                    .map(Compiled::Slot)
                    .ok_or_else(|| CompileError::Unbound(name.clone()))
            }
            Expr::Unary(op, e) => Ok(Compiled::Unary(
                *op,
                Box::new(self.compile_inner(e, locals)?),
            )),
            Expr::Binary(op, l, r) => Ok(Compiled::Binary(
                *op,
                Box::new(self.compile_inner(l, locals)?),
                Box::new(self.compile_inner(r, locals)?),
            )),
            Expr::Quant {
                kind,
                var,
                lo,
                hi,
                body,
            } => {
                let lo = self.compile_inner(lo, locals)?;
                let hi = self.compile_inner(hi, locals)?;
                locals.push(var.clone());
                let body = self.compile_inner(body, locals);
                locals.pop();
                Ok(Compiled::Quant {
                    kind: *kind,
                    lo: Box::new(lo),
                    hi: Box::new(hi),
                    body: Box::new(body?),
                })
            }
            Expr::Member {
                template,
                index,
                field,
            } => self.compile_member(template, index.as_deref(), field, locals),
            Expr::AtLocation {
                template,
                index,
                location,
            } => self.compile_member(template, index.as_deref(), location, locals),
            Expr::InstanceVar {
                template,
                index,
                field,
            } => self.compile_member(template, Some(index), field, locals),
        }
    }

    fn compile_member(
        &self,
        template: &str,
        index: Option<&Expr>,
        field: &str,
        locals: &mut Vec<String>,
    ) -> Result<Compiled, CompileError> {
        let info = self
            .templates
            .get(template)
            .ok_or_else(|| CompileError::UnknownTemplate(template.to_string()))?;
        let index_expr = match index {
            Some(e) => self.compile_inner(e, locals)?,
            None => Compiled::Lit(1),
        };
        if let Some(loc) = info.locations.iter().position(|l| l == field) {
            if let Compiled::Lit(i) = index_expr {
                if i >= 1 && (i as u64) <= info.count as u64 {
                    return Ok(Compiled::AtLoc {
                        agent: info.agent_start + (i as u32 - 1),
                        loc: loc as u32,
                    });
                }
            }
            return Ok(Compiled::DynAtLoc {
                agent_start: info.agent_start,
                count: info.count,
                index: Box::new(index_expr),
                loc: loc as u32,
                template: template.to_string(),
            });
        }
        if let Some(&offset) = info.private_offsets.get(field) {
            if let Compiled::Lit(i) = index_expr {
                if i >= 1 && (i as u64) <= info.count as u64 {
                    let agent = info.agent_start + (i as u32 - 1);
                    return Ok(Compiled::Slot(self.private_base[agent as usize] + offset));
                }
            }
            return Ok(Compiled::DynVar {
                agent_start: info.agent_start,
                count: info.count,
                index: Box::new(index_expr),
                field_offset: offset,
                template: template.to_string(),
            });
        }
        Err(CompileError::UnknownField {
            template: template.to_string(),
            field: field.to_string(),
        })
    }
}

/// Evaluate a compiled expression against an unpacked state. Semantics
/// match `model::eval::eval`, including short-circuiting and the 16-bit
/// range check on arithmetic results.
pub fn eval_compiled(
    expr: &Compiled,
    symbols: &Symbols,
    locations: &[u32],
    vars: &[i64],
    locals: &mut Vec<i64>,
) -> Result<i64, EvalError> {
    match expr {
        Compiled::Lit(v) => Ok(*v),
        Compiled::Slot(slot) => Ok(vars[*slot as usize]),
        Compiled::Local(depth) => Ok(locals[locals.len() - 1 - *depth as usize]),
        Compiled::Unary(op, e) => {
            let v = eval_compiled(e, symbols, locations, vars, locals)?;
            match op {
                UnaryOp::Not => Ok(i64::from(v == 0)),
                UnaryOp::Neg => check_range(-v, "-"),
            }
        }
        Compiled::Binary(op, l, r) => {
            let a = eval_compiled(l, symbols, locations, vars, locals)?;
            match op {
                BinaryOp::And if a == 0 => return Ok(0),
                BinaryOp::Or if a != 0 => return Ok(1),
                _ => {}
            }
            let b = eval_compiled(r, symbols, locations, vars, locals)?;
            match op {
                BinaryOp::Mul => check_range(a * b, "*"),
                BinaryOp::Div | BinaryOp::Rem => {
                    if b == 0 {
                        return Err(EvalError::DivisionByZero(format!("{a}{}{b}", op.symbol())));
                    }
                    check_range(
                        if *op == BinaryOp::Div { a / b } else { a % b },
                        op.symbol(),
                    )
                }
                BinaryOp::Add => check_range(a + b, "+"),
                BinaryOp::Sub => check_range(a - b, "-"),
                BinaryOp::Lt => Ok(i64::from(a < b)),
                BinaryOp::Le => Ok(i64::from(a <= b)),
                BinaryOp::Gt => Ok(i64::from(a > b)),
                BinaryOp::Ge => Ok(i64::from(a >= b)),
                BinaryOp::Eq => Ok(i64::from(a == b)),
                BinaryOp::Ne => Ok(i64::from(a != b)),
                BinaryOp::And | BinaryOp::Or => Ok(i64::from(b != 0)),
            }
        }
        Compiled::Quant { kind, lo, hi, body } => {
            let lo = eval_compiled(lo, symbols, locations, vars, locals)?;
            let hi = eval_compiled(hi, symbols, locations, vars, locals)?;
            for i in lo..=hi {
                locals.push(i);
                let v = eval_compiled(body, symbols, locations, vars, locals);
                locals.pop();
                let v = v?;
                match kind {
                    QuantKind::Exists if v != 0 => return Ok(1),
                    QuantKind::Forall if v == 0 => return Ok(0),
                    _ => {}
                }
            }
            Ok(i64::from(*kind == QuantKind::Forall))
        }
        Compiled::AtLoc { agent, loc } => {
            Ok(i64::from(locations[*agent as usize] == *loc))
        }
        Compiled::DynAtLoc {
            agent_start,
            count,
            index,
            loc,
            template,
        } => {
            let i = eval_compiled(index, symbols, locations, vars, locals)?;
            if i < 1 || i > *count as i64 {
                return Err(EvalError::NoSuchInstance {
                    template: template.clone(),
                    index: i,
                });
            }
            let agent = *agent_start as usize + (i as usize - 1);
            Ok(i64::from(locations[agent] == *loc))
        }
        Compiled::DynVar {
            agent_start,
            count,
            index,
            field_offset,
            template,
        } => {
            let i = eval_compiled(index, symbols, locations, vars, locals)?;
            if i < 1 || i > *count as i64 {
                return Err(EvalError::NoSuchInstance {
                    template: template.clone(),
                    index: i,
                });
            }
            let agent = *agent_start as usize + (i as usize - 1);
            let slot = symbols.private_base[agent] + field_offset;
            Ok(vars[slot as usize])
        }
    }
}

fn check_range(v: i64, context: &str) -> Result<i64, EvalError> {
    if in_value_range(v) {
        Ok(v)
    } else {
        Err(EvalError::Overflow {
            value: v,
            context: context.to_string(),
        })
    }
}
