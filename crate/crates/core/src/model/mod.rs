//! Domain types for agent-network model specifications.
//!
//! A model is a list of agent-graph templates with instance counts, shared
//! global variables, and handshake channels. Each agent graph has locations,
//! private variables, and labelled edges (select / guard / sync / update).
//! All types are immutable after construction; evaluation is reentrant.

pub mod eval;
pub mod expr;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub use eval::{eval, Applied, Env, EvalError, VALUE_MAX, VALUE_MIN};
pub use expr::{BinaryOp, Expr, QuantKind, UnaryOp};

/// Name of the implicit per-instance constant distinguishing instances of
/// one template.
pub const ID_NAME: &str = "id";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarKind {
    Global,
    Private,
}

/// A bounded integer variable declaration.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarDecl {
    pub name: String,
    pub lo: i64,
    pub hi: i64,
    pub initial: i64,
    pub kind: VarKind,
}

impl VarDecl {
    pub fn new(name: impl Into<String>, lo: i64, hi: i64, initial: i64, kind: VarKind) -> Self {
        VarDecl {
            name: name.into(),
            lo,
            hi,
            initial,
            kind,
        }
    }

    pub fn range(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    pub fn domain_size(&self) -> u64 {
        (self.hi - self.lo + 1) as u64
    }

    fn validate(&self, scope: &str) -> Result<(), ModelError> {
        if self.lo > self.hi {
            return Err(ModelError::InvalidRange {
                scope: scope.into(),
                name: self.name.clone(),
                detail: format!("empty range [{},{}]", self.lo, self.hi),
            });
        }
        if !eval::in_value_range(self.lo) || !eval::in_value_range(self.hi) {
            return Err(ModelError::InvalidRange {
                scope: scope.into(),
                name: self.name.clone(),
                detail: "bounds must fit in the signed 16-bit range".into(),
            });
        }
        if self.initial < self.lo || self.initial > self.hi {
            return Err(ModelError::InvalidRange {
                scope: scope.into(),
                name: self.name.clone(),
                detail: format!(
                    "initial value {} outside [{},{}]",
                    self.initial, self.lo, self.hi
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SyncDir {
    Send,
    Receive,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sync {
    pub channel: String,
    pub dir: SyncDir,
}

impl std::fmt::Display for Sync {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mark = if self.dir == SyncDir::Send { "!" } else { "?" };
        write!(f, "{}{}", self.channel, mark)
    }
}

/// A select label binding: a fresh name drawn nondeterministically from a
/// literal integer range.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Select {
    pub name: String,
    pub lo: i64,
    pub hi: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Update {
    pub target: String,
    pub value: Expr,
}

impl std::fmt::Display for Update {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} = {}", self.target, self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub selects: Vec<Select>,
    pub guard: Expr,
    pub sync: Option<Sync>,
    pub updates: Vec<Update>,
}

impl Edge {
    pub fn internal(source: impl Into<String>, target: impl Into<String>) -> Edge {
        Edge {
            source: source.into(),
            target: target.into(),
            selects: Vec::new(),
            guard: Expr::truth(),
            sync: None,
            updates: Vec::new(),
        }
    }

    pub fn with_guard(mut self, guard: Expr) -> Edge {
        self.guard = guard;
        self
    }

    pub fn with_select(mut self, name: impl Into<String>, lo: i64, hi: i64) -> Edge {
        self.selects.push(Select {
            name: name.into(),
            lo,
            hi,
        });
        self
    }

    pub fn with_sync(mut self, channel: impl Into<String>, dir: SyncDir) -> Edge {
        self.sync = Some(Sync {
            channel: channel.into(),
            dir,
        });
        self
    }

    pub fn with_update(mut self, target: impl Into<String>, value: Expr) -> Edge {
        self.updates.push(Update {
            target: target.into(),
            value,
        });
        self
    }
}

/// One agent template: locations, private variables, labelled edges.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentGraph {
    pub name: String,
    /// Declaration order; also the canonical serialization order.
    pub locations: Vec<String>,
    pub initial: String,
    pub privates: Vec<VarDecl>,
    pub edges: Vec<Edge>,
}

impl AgentGraph {
    pub fn has_location(&self, name: &str) -> bool {
        self.locations.iter().any(|l| l == name)
    }

    pub fn private(&self, name: &str) -> Option<&VarDecl> {
        self.privates.iter().find(|v| v.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub graph: AgentGraph,
    pub count: u32,
}

/// A parsed modular specification.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MasTemplate {
    pub templates: Vec<Template>,
    pub globals: Vec<VarDecl>,
    pub channels: Vec<String>,
    pub constants: BTreeMap<String, i64>,
}

impl MasTemplate {
    pub fn template(&self, name: &str) -> Option<&Template> {
        self.templates.iter().find(|t| t.graph.name == name)
    }

    pub fn global(&self, name: &str) -> Option<&VarDecl> {
        self.globals.iter().find(|v| v.name == name)
    }

    pub fn has_channel(&self, name: &str) -> bool {
        self.channels.iter().any(|c| c == name)
    }

    /// Full structural validation of every invariant the type system cannot
    /// carry: ranges, name uniqueness, reference resolution, guard
    /// restrictions, and the static division check.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut global_names = BTreeSet::new();
        for decl in &self.globals {
            decl.validate("global scope")?;
            if !global_names.insert(decl.name.clone()) {
                return Err(ModelError::DuplicateName {
                    scope: "global scope".into(),
                    name: decl.name.clone(),
                });
            }
        }
        for name in global_names.iter() {
            if self.constants.contains_key(name) {
                return Err(ModelError::DuplicateName {
                    scope: "global scope (variable vs constant)".into(),
                    name: name.clone(),
                });
            }
        }
        let mut channel_names = BTreeSet::new();
        for chan in &self.channels {
            if !channel_names.insert(chan.clone()) {
                return Err(ModelError::DuplicateName {
                    scope: "channels".into(),
                    name: chan.clone(),
                });
            }
        }

        let mut template_names = BTreeSet::new();
        for template in &self.templates {
            let graph = &template.graph;
            if !template_names.insert(graph.name.clone()) {
                return Err(ModelError::DuplicateName {
                    scope: "templates".into(),
                    name: graph.name.clone(),
                });
            }
            if template.count < 1 {
                return Err(ModelError::InvalidInstanceCount {
                    template: graph.name.clone(),
                });
            }
            self.validate_graph(graph)?;
        }
        Ok(())
    }

    fn validate_graph(&self, graph: &AgentGraph) -> Result<(), ModelError> {
        let scope = format!("template {}", graph.name);
        let mut locations = BTreeSet::new();
        for loc in &graph.locations {
            if !locations.insert(loc.clone()) {
                return Err(ModelError::DuplicateName {
                    scope: scope.clone(),
                    name: loc.clone(),
                });
            }
        }
        if !locations.contains(&graph.initial) {
            return Err(ModelError::UnknownLocation {
                template: graph.name.clone(),
                location: graph.initial.clone(),
            });
        }

        let mut private_names = BTreeSet::new();
        for decl in &graph.privates {
            decl.validate(&scope)?;
            if decl.name == ID_NAME {
                return Err(ModelError::DuplicateName {
                    scope: format!("{scope} (reserved name)"),
                    name: decl.name.clone(),
                });
            }
            if !private_names.insert(decl.name.clone()) {
                return Err(ModelError::DuplicateName {
                    scope: scope.clone(),
                    name: decl.name.clone(),
                });
            }
            // Location predicates resolve by field name, so keep the two
            // name spaces disjoint inside one template.
            if locations.contains(&decl.name) {
                return Err(ModelError::DuplicateName {
                    scope: format!("{scope} (location vs variable)"),
                    name: decl.name.clone(),
                });
            }
        }

        for (i, edge) in graph.edges.iter().enumerate() {
            let ctx = EdgeContext {
                template: graph.name.clone(),
                index: i,
                source: edge.source.clone(),
                target: edge.target.clone(),
            };
            if !locations.contains(&edge.source) {
                return Err(ModelError::UnknownLocation {
                    template: graph.name.clone(),
                    location: edge.source.clone(),
                });
            }
            if !locations.contains(&edge.target) {
                return Err(ModelError::UnknownLocation {
                    template: graph.name.clone(),
                    location: edge.target.clone(),
                });
            }
            let mut select_names = BTreeSet::new();
            for select in &edge.selects {
                if !eval::in_value_range(select.lo) || !eval::in_value_range(select.hi) {
                    return Err(ModelError::InvalidRange {
                        scope: ctx.to_string(),
                        name: select.name.clone(),
                        detail: "select bounds must fit in the signed 16-bit range".into(),
                    });
                }
                let fresh = select_names.insert(select.name.clone())
                    && !private_names.contains(&select.name)
                    && !self.globals.iter().any(|g| g.name == select.name)
                    && !self.constants.contains_key(&select.name)
                    && select.name != ID_NAME;
                if !fresh {
                    return Err(ModelError::SelectShadows {
                        context: ctx.clone(),
                        name: select.name.clone(),
                    });
                }
            }
            if let Some(sync) = &edge.sync {
                if !self.has_channel(&sync.channel) {
                    return Err(ModelError::UnknownChannel {
                        context: ctx.clone(),
                        channel: sync.channel.clone(),
                    });
                }
            }

            let visible = |name: &str| {
                select_names.contains(name)
                    || private_names.contains(name)
                    || self.globals.iter().any(|g| g.name == name)
                    || name == ID_NAME
            };
            self.validate_guard_expr(&edge.guard, &ctx, &visible)?;
            for update in &edge.updates {
                let assignable =
                    private_names.contains(&update.target) || self.global(&update.target).is_some();
                if !assignable {
                    return Err(ModelError::UnknownVariable {
                        context: ctx.clone(),
                        name: update.target.clone(),
                    });
                }
                self.validate_guard_expr(&update.value, &ctx, &visible)?;
            }
        }
        Ok(())
    }

    fn validate_guard_expr(
        &self,
        expr: &Expr,
        ctx: &EdgeContext,
        visible: &dyn Fn(&str) -> bool,
    ) -> Result<(), ModelError> {
        if contains_member(expr) {
            return Err(ModelError::MemberInGuard {
                context: ctx.clone(),
                expr: expr.to_string(),
            });
        }
        if expr.has_static_zero_division() {
            return Err(ModelError::StaticZeroDivision {
                context: ctx.clone(),
                expr: expr.to_string(),
            });
        }
        let mut free = BTreeSet::new();
        expr.free_vars(&mut free);
        for name in free {
            if !visible(&name) {
                return Err(ModelError::UnknownVariable {
                    context: ctx.clone(),
                    name,
                });
            }
        }
        Ok(())
    }
}

fn contains_member(expr: &Expr) -> bool {
    match expr {
        Expr::Member { .. } | Expr::AtLocation { .. } | Expr::InstanceVar { .. } => true,
        Expr::Lit(_) | Expr::Var(_) => false,
        Expr::Unary(_, e) => contains_member(e),
        Expr::Binary(_, l, r) => contains_member(l) || contains_member(r),
        Expr::Quant { body, .. } => contains_member(body),
    }
}

/// Identifies an edge inside a template for diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeContext {
    pub template: String,
    pub index: usize,
    pub source: String,
    pub target: String,
}

impl std::fmt::Display for EdgeContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}, edge #{} ({} -> {})",
            self.template, self.index, self.source, self.target
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("{scope}: variable `{name}`: {detail}")]
    InvalidRange {
        scope: String,
        name: String,
        detail: String,
    },
    #[error("{scope}: duplicate name `{name}`")]
    DuplicateName { scope: String, name: String },
    #[error("template `{template}`: unknown location `{location}`")]
    UnknownLocation { template: String, location: String },
    #[error("{context}: select binding `{name}` shadows an existing name or repeats")]
    SelectShadows { context: EdgeContext, name: String },
    #[error("{context}: unknown channel `{channel}`")]
    UnknownChannel {
        context: EdgeContext,
        channel: String,
    },
    #[error("{context}: reference to undeclared variable `{name}`")]
    UnknownVariable { context: EdgeContext, name: String },
    #[error("{context}: location predicates are only allowed in property formulas: `{expr}`")]
    MemberInGuard { context: EdgeContext, expr: String },
    #[error("{context}: division or modulo by a statically-zero literal in `{expr}`")]
    StaticZeroDivision { context: EdgeContext, expr: String },
    #[error("template `{template}`: instance count must be at least 1")]
    InvalidInstanceCount { template: String },
    #[error("{context}: select range [{lo},{hi}] is empty")]
    EmptySelectRange {
        context: EdgeContext,
        lo: i64,
        hi: i64,
    },
}

/// Expand select labels into the equivalent family of plain edges, one per
/// element of the Cartesian product of the select ranges, in lexicographic
/// order of the bound values.
pub fn expand_selects(edge: &Edge) -> Result<Vec<Edge>, ModelError> {
    if edge.selects.is_empty() {
        return Ok(vec![edge.clone()]);
    }
    for select in &edge.selects {
        if select.lo > select.hi {
            return Err(ModelError::EmptySelectRange {
                context: EdgeContext {
                    template: String::new(),
                    index: 0,
                    source: edge.source.clone(),
                    target: edge.target.clone(),
                },
                lo: select.lo,
                hi: select.hi,
            });
        }
    }

    let mut out = Vec::new();
    let mut values: Vec<i64> = edge.selects.iter().map(|s| s.lo).collect();
    loop {
        let binding: BTreeMap<&str, i64> = edge
            .selects
            .iter()
            .zip(&values)
            .map(|(s, v)| (s.name.as_str(), *v))
            .collect();
        let subst = |name: &str| binding.get(name).map(|v| Expr::Lit(*v));
        out.push(Edge {
            source: edge.source.clone(),
            target: edge.target.clone(),
            selects: Vec::new(),
            guard: edge.guard.substitute(&subst),
            sync: edge.sync.clone(),
            updates: edge
                .updates
                .iter()
                .map(|u| Update {
                    target: u.target.clone(),
                    value: u.value.substitute(&subst),
                })
                .collect(),
        });

        // Advance odometer, last select fastest.
        let mut pos = values.len();
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            if values[pos] < edge.selects[pos].hi {
                values[pos] += 1;
                for (i, v) in values.iter_mut().enumerate().skip(pos + 1) {
                    *v = edge.selects[i].lo;
                }
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::text::parse_expression;

    fn select_edge() -> Edge {
        Edge::internal("idle", "waits")
            .with_select("dec", 1, 2)
            .with_update("mem_dec", parse_expression("dec").unwrap())
    }

    #[test]
    fn expand_single_select() {
        let edges = expand_selects(&select_edge()).unwrap();
        assert_eq!(edges.len(), 2);
        assert_eq!(edges[0].updates[0].value, Expr::Lit(1));
        assert_eq!(edges[1].updates[0].value, Expr::Lit(2));
        assert!(edges.iter().all(|e| e.selects.is_empty()));
    }

    #[test]
    fn expand_no_select_is_identity() {
        let edge = Edge::internal("a", "b");
        let edges = expand_selects(&edge).unwrap();
        assert_eq!(edges, vec![edge]);
    }

    #[test]
    fn expand_product_is_lexicographic() {
        let edge = Edge::internal("has", "voted")
            .with_select("vt", 1, 3)
            .with_select("sg", 0, 1)
            .with_update("mem_vt", parse_expression("vt").unwrap())
            .with_update("mem_sg", parse_expression("sg").unwrap());
        let edges = expand_selects(&edge).unwrap();
        assert_eq!(edges.len(), 6);
        let pairs: Vec<(i64, i64)> = edges
            .iter()
            .map(|e| {
                let vt = match e.updates[0].value {
                    Expr::Lit(v) => v,
                    _ => panic!("expected literal"),
                };
                let sg = match e.updates[1].value {
                    Expr::Lit(v) => v,
                    _ => panic!("expected literal"),
                };
                (vt, sg)
            })
            .collect();
        assert_eq!(pairs, vec![(1, 0), (1, 1), (2, 0), (2, 1), (3, 0), (3, 1)]);
    }

    #[test]
    fn expand_counts_match_range_product() {
        for (ranges, expected) in [
            (vec![(0i64, 3i64)], 4usize),
            (vec![(1, 2), (0, 1), (5, 5)], 4),
            (vec![(-1, 1), (0, 2)], 9),
        ] {
            let mut edge = Edge::internal("a", "b");
            for (i, (lo, hi)) in ranges.iter().enumerate() {
                edge = edge.with_select(format!("s{i}"), *lo, *hi);
            }
            assert_eq!(expand_selects(&edge).unwrap().len(), expected);
        }
    }

    #[test]
    fn expand_empty_range_is_an_error() {
        let edge = Edge::internal("a", "b").with_select("s", 2, 1);
        assert!(matches!(
            expand_selects(&edge),
            Err(ModelError::EmptySelectRange { .. })
        ));
    }

    #[test]
    fn shared_types_are_send_and_sync() {
        // the concurrency contract: immutable after construction, safe to
        // evaluate from many threads (`Sync` the struct shadows the trait
        // here, hence the explicit paths)
        fn assert_send_sync<T: std::marker::Send + std::marker::Sync>() {}
        assert_send_sync::<Expr>();
        assert_send_sync::<Edge>();
        assert_send_sync::<AgentGraph>();
        assert_send_sync::<MasTemplate>();
    }

    #[test]
    fn validate_rejects_bad_initial() {
        let decl = VarDecl::new("x", 0, 3, 4, VarKind::Global);
        let model = MasTemplate {
            globals: vec![decl],
            ..Default::default()
        };
        assert!(matches!(
            model.validate(),
            Err(ModelError::InvalidRange { .. })
        ));
    }

    #[test]
    fn validate_rejects_count_zero() {
        let graph = AgentGraph {
            name: "A".into(),
            locations: vec!["l0".into()],
            initial: "l0".into(),
            privates: vec![],
            edges: vec![],
        };
        let model = MasTemplate {
            templates: vec![Template { graph, count: 0 }],
            ..Default::default()
        };
        assert!(matches!(
            model.validate(),
            Err(ModelError::InvalidInstanceCount { .. })
        ));
    }

    #[test]
    fn validate_rejects_select_shadowing() {
        let graph = AgentGraph {
            name: "A".into(),
            locations: vec!["l0".into()],
            initial: "l0".into(),
            privates: vec![VarDecl::new("x", 0, 1, 0, VarKind::Private)],
            edges: vec![Edge::internal("l0", "l0").with_select("x", 0, 1)],
        };
        let model = MasTemplate {
            templates: vec![Template { graph, count: 1 }],
            ..Default::default()
        };
        assert!(matches!(
            model.validate(),
            Err(ModelError::SelectShadows { .. })
        ));
    }

    #[test]
    fn validate_rejects_member_in_guard() {
        let graph = AgentGraph {
            name: "A".into(),
            locations: vec!["l0".into()],
            initial: "l0".into(),
            privates: vec![],
            edges: vec![
                Edge::internal("l0", "l0").with_guard(parse_expression("B.l0").unwrap()),
            ],
        };
        let model = MasTemplate {
            templates: vec![Template { graph, count: 1 }],
            ..Default::default()
        };
        assert!(matches!(
            model.validate(),
            Err(ModelError::MemberInGuard { .. })
        ));
    }

    #[test]
    fn validate_rejects_static_zero_division() {
        // built by hand: the parser already rejects this shape on its own
        let zero_div = Expr::binary(
            BinaryOp::Gt,
            Expr::binary(
                BinaryOp::Div,
                Expr::var("x"),
                Expr::binary(BinaryOp::Sub, Expr::Lit(1), Expr::Lit(1)),
            ),
            Expr::Lit(0),
        );
        let graph = AgentGraph {
            name: "A".into(),
            locations: vec!["l0".into()],
            initial: "l0".into(),
            privates: vec![VarDecl::new("x", 0, 1, 0, VarKind::Private)],
            edges: vec![Edge::internal("l0", "l0").with_guard(zero_div)],
        };
        let model = MasTemplate {
            templates: vec![Template { graph, count: 1 }],
            ..Default::default()
        };
        assert!(matches!(
            model.validate(),
            Err(ModelError::StaticZeroDivision { .. })
        ));
    }
}
