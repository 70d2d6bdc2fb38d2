//! Expression AST shared by guards, updates, merge mappings, and property atoms.
//!
//! Expressions range over bounded signed integers; booleans are encoded as
//! 0/1 with any nonzero value counting as true. `&&`, `||` and the bounded
//! quantifiers short-circuit.

use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinaryOp {
    Mul,
    Div,
    Rem,
    Add,
    Sub,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinaryOp {
    /// Binding strength, higher binds tighter. Follows C conventions.
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Mul | BinaryOp::Div | BinaryOp::Rem => 6,
            BinaryOp::Add | BinaryOp::Sub => 5,
            BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => 4,
            BinaryOp::Eq | BinaryOp::Ne => 3,
            BinaryOp::And => 2,
            BinaryOp::Or => 1,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Rem => "%",
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::And => "&&",
            BinaryOp::Or => "||",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QuantKind {
    Exists,
    Forall,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Lit(i64),
    /// Variable reference by display name. After instantiation, private
    /// variables use their qualified display name (`Voter(2).mem_vt`).
    Var(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    /// Bounded quantifier, `exists(i:int[lo,hi])(body)`. The bounds must
    /// fold to literals once constants are substituted; evaluation expands
    /// the binder over that literal range.
    Quant {
        kind: QuantKind,
        var: String,
        lo: Box<Expr>,
        hi: Box<Expr>,
        body: Box<Expr>,
    },
    /// `Template(index).field` as written in source, before name resolution.
    /// Resolution turns it into [`Expr::AtLocation`], [`Expr::InstanceVar`],
    /// or a plain [`Expr::Var`] with a qualified name.
    Member {
        template: String,
        index: Option<Box<Expr>>,
        field: String,
    },
    /// Location predicate: 1 iff the given instance occupies `location`.
    /// Only legal in property formulas.
    AtLocation {
        template: String,
        index: Option<Box<Expr>>,
        location: String,
    },
    /// Private variable of an instance selected by a computed index.
    InstanceVar {
        template: String,
        index: Box<Expr>,
        field: String,
    },
}

impl Expr {
    pub fn lit(v: i64) -> Expr {
        Expr::Lit(v)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    /// The always-true guard.
    pub fn truth() -> Expr {
        Expr::Lit(1)
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn and(lhs: Expr, rhs: Expr) -> Expr {
        match (&lhs, &rhs) {
            (Expr::Lit(1), _) => rhs,
            (_, Expr::Lit(1)) => lhs,
            _ => Expr::binary(BinaryOp::And, lhs, rhs),
        }
    }

    pub fn negation(e: Expr) -> Expr {
        Expr::Unary(UnaryOp::Not, Box::new(e))
    }

    pub fn is_truth(&self) -> bool {
        matches!(self, Expr::Lit(v) if *v != 0)
    }

    /// Free variable names, respecting quantifier binders. Member-style
    /// references contribute only their index expressions.
    pub fn free_vars(&self, out: &mut BTreeSet<String>) {
        self.free_vars_inner(&mut Vec::new(), out);
    }

    fn free_vars_inner(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match self {
            Expr::Lit(_) => {}
            Expr::Var(name) => {
                if !bound.iter().any(|b| b == name) {
                    out.insert(name.clone());
                }
            }
            Expr::Unary(_, e) => e.free_vars_inner(bound, out),
            Expr::Binary(_, l, r) => {
                l.free_vars_inner(bound, out);
                r.free_vars_inner(bound, out);
            }
            Expr::Quant {
                var, lo, hi, body, ..
            } => {
                lo.free_vars_inner(bound, out);
                hi.free_vars_inner(bound, out);
                bound.push(var.clone());
                body.free_vars_inner(bound, out);
                bound.pop();
            }
            Expr::Member { index, .. } | Expr::AtLocation { index, .. } => {
                if let Some(idx) = index {
                    idx.free_vars_inner(bound, out);
                }
            }
            Expr::InstanceVar { index, .. } => index.free_vars_inner(bound, out),
        }
    }

    /// Substitute free occurrences of variables by replacement expressions.
    pub fn substitute(&self, map: &dyn Fn(&str) -> Option<Expr>) -> Expr {
        self.substitute_inner(&mut Vec::new(), map)
    }

    fn substitute_inner(&self, bound: &mut Vec<String>, map: &dyn Fn(&str) -> Option<Expr>) -> Expr {
        match self {
            Expr::Lit(v) => Expr::Lit(*v),
            Expr::Var(name) => {
                if bound.iter().any(|b| b == name) {
                    Expr::Var(name.clone())
                } else {
                    map(name).unwrap_or_else(|| Expr::Var(name.clone()))
                }
            }
            Expr::Unary(op, e) => Expr::Unary(*op, Box::new(e.substitute_inner(bound, map))),
            Expr::Binary(op, l, r) => Expr::Binary(
                *op,
                Box::new(l.substitute_inner(bound, map)),
                Box::new(r.substitute_inner(bound, map)),
            ),
            Expr::Quant {
                kind,
                var,
                lo,
                hi,
                body,
            } => {
                let lo = lo.substitute_inner(bound, map);
                let hi = hi.substitute_inner(bound, map);
                bound.push(var.clone());
                let body = body.substitute_inner(bound, map);
                bound.pop();
                Expr::Quant {
                    kind: *kind,
                    var: var.clone(),
                    lo: Box::new(lo),
                    hi: Box::new(hi),
                    body: Box::new(body),
                }
            }
            Expr::Member {
                template,
                index,
                field,
            } => Expr::Member {
                template: template.clone(),
                index: index
                    .as_ref()
                    .map(|i| Box::new(i.substitute_inner(bound, map))),
                field: field.clone(),
            },
            Expr::AtLocation {
                template,
                index,
                location,
            } => Expr::AtLocation {
                template: template.clone(),
                index: index
                    .as_ref()
                    .map(|i| Box::new(i.substitute_inner(bound, map))),
                location: location.clone(),
            },
            Expr::InstanceVar {
                template,
                index,
                field,
            } => Expr::InstanceVar {
                template: template.clone(),
                index: Box::new(index.substitute_inner(bound, map)),
                field: field.clone(),
            },
        }
    }

    /// Constant folding. Pure rewriting: folds literal subtrees using the
    /// evaluation semantics, leaves everything else in place. Division by
    /// zero and out-of-range results are left unfolded so that evaluation
    /// reports them with context.
    pub fn fold(&self) -> Expr {
        match self {
            Expr::Lit(_) | Expr::Var(_) => self.clone(),
            Expr::Unary(op, e) => {
                let e = e.fold();
                if let Expr::Lit(v) = e {
                    if let Some(r) = fold_unary(*op, v) {
                        return Expr::Lit(r);
                    }
                }
                Expr::Unary(*op, Box::new(e))
            }
            Expr::Binary(op, l, r) => {
                let l = l.fold();
                let r = r.fold();
                if let (Expr::Lit(a), Expr::Lit(b)) = (&l, &r) {
                    if let Some(v) = fold_binary(*op, *a, *b) {
                        return Expr::Lit(v);
                    }
                }
                // Lazy operators fold on a determined left side alone.
                match (op, &l) {
                    (BinaryOp::And, Expr::Lit(0)) => return Expr::Lit(0),
                    (BinaryOp::Or, Expr::Lit(a)) if *a != 0 => return Expr::Lit(1),
                    _ => {}
                }
                Expr::Binary(*op, Box::new(l), Box::new(r))
            }
            Expr::Quant {
                kind,
                var,
                lo,
                hi,
                body,
            } => Expr::Quant {
                kind: *kind,
                var: var.clone(),
                lo: Box::new(lo.fold()),
                hi: Box::new(hi.fold()),
                body: Box::new(body.fold()),
            },
            Expr::Member { .. } | Expr::AtLocation { .. } | Expr::InstanceVar { .. } => {
                self.clone()
            }
        }
    }

    /// True if the expression contains a division or modulo whose right side
    /// folds to the literal zero.
    pub fn has_static_zero_division(&self) -> bool {
        match self {
            Expr::Lit(_) | Expr::Var(_) => false,
            Expr::Unary(_, e) => e.has_static_zero_division(),
            Expr::Binary(op, l, r) => {
                if matches!(op, BinaryOp::Div | BinaryOp::Rem)
                    && matches!(r.fold(), Expr::Lit(0))
                {
                    return true;
                }
                l.has_static_zero_division() || r.has_static_zero_division()
            }
            Expr::Quant { lo, hi, body, .. } => {
                lo.has_static_zero_division()
                    || hi.has_static_zero_division()
                    || body.has_static_zero_division()
            }
            Expr::Member { index, .. } | Expr::AtLocation { index, .. } => index
                .as_ref()
                .is_some_and(|i| i.has_static_zero_division()),
            Expr::InstanceVar { index, .. } => index.has_static_zero_division(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, _, _) => op.precedence(),
            Expr::Unary(..) => 7,
            _ => 8,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let prec = self.precedence();
        let parens = prec < min;
        if parens {
            write!(f, "(")?;
        }
        match self {
            Expr::Lit(v) => write!(f, "{v}")?,
            Expr::Var(name) => write!(f, "{name}")?,
            Expr::Unary(op, e) => {
                write!(f, "{}", if *op == UnaryOp::Neg { "-" } else { "!" })?;
                e.fmt_prec(f, 8)?;
            }
            Expr::Binary(op, l, r) => {
                l.fmt_prec(f, prec)?;
                write!(f, "{}", op.symbol())?;
                r.fmt_prec(f, prec + 1)?;
            }
            Expr::Quant {
                kind,
                var,
                lo,
                hi,
                body,
            } => {
                let kw = if *kind == QuantKind::Exists {
                    "exists"
                } else {
                    "forall"
                };
                write!(f, "{kw}({var}:int[{lo},{hi}])({body})")?;
            }
            Expr::Member {
                template,
                index,
                field,
            } => {
                fmt_member(f, template, index.as_deref(), field)?;
            }
            Expr::AtLocation {
                template,
                index,
                location,
            } => {
                fmt_member(f, template, index.as_deref(), location)?;
            }
            Expr::InstanceVar {
                template,
                index,
                field,
            } => {
                fmt_member(f, template, Some(index), field)?;
            }
        }
        if parens {
            write!(f, ")")?;
        }
        Ok(())
    }
}

fn fmt_member(
    f: &mut fmt::Formatter<'_>,
    template: &str,
    index: Option<&Expr>,
    field: &str,
) -> fmt::Result {
    match index {
        Some(idx) => write!(f, "{template}({idx}).{field}"),
        None => write!(f, "{template}.{field}"),
    }
}

fn fold_unary(op: UnaryOp, v: i64) -> Option<i64> {
    match op {
        UnaryOp::Neg => {
            let r = v.checked_neg()?;
            super::eval::in_value_range(r).then_some(r)
        }
        UnaryOp::Not => Some(i64::from(v == 0)),
    }
}

fn fold_binary(op: BinaryOp, a: i64, b: i64) -> Option<i64> {
    let arith = |r: Option<i64>| r.filter(|v| super::eval::in_value_range(*v));
    match op {
        BinaryOp::Mul => arith(a.checked_mul(b)),
        BinaryOp::Div => (b != 0).then(|| a / b).and_then(|r| arith(Some(r))),
        BinaryOp::Rem => (b != 0).then(|| a % b).and_then(|r| arith(Some(r))),
        BinaryOp::Add => arith(a.checked_add(b)),
        BinaryOp::Sub => arith(a.checked_sub(b)),
        BinaryOp::Lt => Some(i64::from(a < b)),
        BinaryOp::Le => Some(i64::from(a <= b)),
        BinaryOp::Gt => Some(i64::from(a > b)),
        BinaryOp::Ge => Some(i64::from(a >= b)),
        BinaryOp::Eq => Some(i64::from(a == b)),
        BinaryOp::Ne => Some(i64::from(a != b)),
        BinaryOp::And => Some(i64::from(a != 0 && b != 0)),
        BinaryOp::Or => Some(i64::from(a != 0 || b != 0)),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}
