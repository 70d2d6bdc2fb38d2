//! Abstract model generation: given a target graph, a mapping function
//! (variables to remove, optional merge variable, scope), and a local
//! domain, emit a new specification in which occurrences of the removed
//! variables are substituted by their approximated values.
//!
//! Fed an upper domain this produces a may-abstraction (every concrete
//! state and transition has an abstract counterpart); fed a lower domain, a
//! must-abstraction (every abstract state and transition has a concrete
//! witness).

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::approx::{ApproxOptions, ApproxRequest, DomainTag, LocalDomain, Target};
use crate::model::{
    eval, AgentGraph, Edge, EvalError, Expr, MasTemplate, ModelError, Update, VarDecl, VarKind,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeSpec {
    pub name: String,
    pub initial: i64,
    /// Defining expression over the removed variables only.
    pub expr: Expr,
}

/// What to abstract and how.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingFunction {
    pub target: Target,
    /// Locations where the abstraction applies; empty means all.
    pub scope: BTreeSet<String>,
    pub remove: Vec<String>,
    pub merge: Option<MergeSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// Out-of-scope source, in-scope target: the removed variables' last
    /// written values are forgotten on entry.
    Entering,
    /// In-scope source, out-of-scope target: the removed variables must be
    /// reintroduced from the domain at the target location.
    Exiting,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub edge_index: usize,
    pub kind: BoundaryKind,
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AbstractError {
    #[error("no template named `{0}` (use `ext` for a combined single-template model)")]
    UnknownTarget(String),
    #[error("target `ext` requires a combined model with exactly one template, found {0}")]
    ExtNeedsSingleTemplate(usize),
    #[error("variable `{name}` to remove does not resolve in target `{target}`")]
    UnknownRemoved { target: String, name: String },
    #[error("global `{name}` cannot be removed: it occurs in template `{used_in}`")]
    RemovedUsedElsewhere { name: String, used_in: String },
    #[error("merge expression references retained variable `{0}`; it may only use removed variables")]
    MergeReferencesRetained(String),
    #[error("scope location `{0}` is not a location of the target")]
    ScopeLocationUnknown(String),
    #[error("domain file targets `{domain}`, the mapping targets `{mapping}`")]
    DomainTargetMismatch { domain: String, mapping: String },
    #[error("domain file lacks removed variable `{0}`")]
    DomainMissingVariable(String),
    #[error("no domain entry for in-scope location `{0}`")]
    MissingDomainEntry(String),
    #[error("domain vector value {value} for `{variable}` is outside its declared range")]
    VectorOutOfRange { variable: String, value: i64 },
    #[error(
        "lower-domain abstraction with a proper scope has exiting boundary edges ({edges}); \
         under-approximate reintroduction is unsound and needs explicit confirmation by \
         widening the scope or using an upper domain"
    )]
    ScopeExitUnderLower { edges: String },
    #[error("merge expression failed to evaluate on vector {vector:?}: {source}")]
    MergeEval { vector: Vec<i64>, source: EvalError },
    #[error(
        "merge initial value {given} disagrees with the merge expression over the removed \
         variables' initial values ({expected})"
    )]
    MergeInitialMismatch { given: i64, expected: i64 },
    #[error(
        "edge {from_location} -> {to_location}: update list interleaves a removed-variable \
         capture with writes to a retained variable it reads; no sound placement of the \
         composed update exists — split the edge or reorder its updates"
    )]
    UnsupportedUpdateComposition {
        from_location: String,
        to_location: String,
    },
    #[error("certifying the must-abstraction needs an upper approximation of the same request: {0}")]
    Certificate(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Edges crossing the scope boundary, in edge order.
pub fn check_scope_boundary(graph: &AgentGraph, scope: &BTreeSet<String>) -> Vec<BoundaryEdge> {
    if scope.is_empty() {
        return Vec::new();
    }
    let full = graph.locations.iter().all(|l| scope.contains(l));
    if full {
        return Vec::new();
    }
    graph
        .edges
        .iter()
        .enumerate()
        .filter_map(|(i, edge)| {
            let src_in = scope.contains(&edge.source);
            let tgt_in = scope.contains(&edge.target);
            let kind = match (src_in, tgt_in) {
                (false, true) => BoundaryKind::Entering,
                (true, false) => BoundaryKind::Exiting,
                _ => return None,
            };
            Some(BoundaryEdge {
                edge_index: i,
                kind,
                source: edge.source.clone(),
                target: edge.target.clone(),
            })
        })
        .collect()
}

struct Plan<'a> {
    graph: &'a AgentGraph,
    template_index: usize,
    removed: BTreeSet<String>,
    /// Column of each removed variable inside the domain's vectors.
    columns: BTreeMap<String, usize>,
    /// Scope resolved to a concrete set; `None` means every location.
    scope: Option<BTreeSet<String>>,
    ranges: BTreeMap<String, (i64, i64)>,
    initials: BTreeMap<String, i64>,
}

impl Plan<'_> {
    fn in_scope(&self, location: &str) -> bool {
        match &self.scope {
            None => true,
            Some(scope) => scope.contains(location),
        }
    }

    fn is_full_scope(&self) -> bool {
        self.scope.is_none()
    }
}

fn make_plan<'a>(
    model: &'a MasTemplate,
    mapping: &MappingFunction,
    domain: &LocalDomain,
) -> Result<Plan<'a>, AbstractError> {
    let (graph, template_index) = match &mapping.target {
        Target::Template(name) => {
            let index = model
                .templates
                .iter()
                .position(|t| t.graph.name == *name)
                .ok_or_else(|| AbstractError::UnknownTarget(name.clone()))?;
            (&model.templates[index].graph, index)
        }
        Target::Ext => {
            if model.templates.len() != 1 || model.templates[0].count != 1 {
                return Err(AbstractError::ExtNeedsSingleTemplate(model.templates.len()));
            }
            (&model.templates[0].graph, 0)
        }
    };

    if domain.target != mapping.target.as_str()
        && !(mapping.target == Target::Ext && domain.target == graph.name)
    {
        return Err(AbstractError::DomainTargetMismatch {
            domain: domain.target.clone(),
            mapping: mapping.target.as_str().to_string(),
        });
    }

    let mut removed = BTreeSet::new();
    let mut ranges = BTreeMap::new();
    let mut initials = BTreeMap::new();
    for name in &mapping.remove {
        let decl = graph
            .private(name)
            .or_else(|| model.global(name))
            .ok_or_else(|| AbstractError::UnknownRemoved {
                target: mapping.target.as_str().to_string(),
                name: name.clone(),
            })?;
        if decl.kind == VarKind::Global {
            for other in &model.templates {
                if other.graph.name == graph.name {
                    continue;
                }
                if template_mentions(&other.graph, name) {
                    return Err(AbstractError::RemovedUsedElsewhere {
                        name: name.clone(),
                        used_in: other.graph.name.clone(),
                    });
                }
            }
        }
        removed.insert(name.clone());
        ranges.insert(name.clone(), decl.range());
        initials.insert(name.clone(), decl.initial);
    }

    if let Some(merge) = &mapping.merge {
        let mut free = BTreeSet::new();
        merge.expr.free_vars(&mut free);
        for name in free {
            if !removed.contains(&name) {
                return Err(AbstractError::MergeReferencesRetained(name));
            }
        }
        // When the initial location is abstracted, the declared initial of
        // the merge variable must agree with the merge expression over the
        // removed variables' initial values; anything else desynchronizes
        // the very first state.
        let initial_in_scope = mapping.scope.is_empty()
            || mapping.scope.contains(&graph.initial)
            || graph.locations.iter().all(|l| mapping.scope.contains(l));
        if initial_in_scope {
            let env: BTreeMap<String, i64> = initials.clone();
            let expected = eval(&merge.expr, &env).map_err(|source| AbstractError::MergeEval {
                vector: env.values().copied().collect(),
                source,
            })?;
            if expected != merge.initial {
                return Err(AbstractError::MergeInitialMismatch {
                    given: merge.initial,
                    expected,
                });
            }
        }
    }

    let mut columns = BTreeMap::new();
    for name in &removed {
        let column = domain
            .variables
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| AbstractError::DomainMissingVariable(name.clone()))?;
        columns.insert(name.clone(), column);
    }
    for (location, vectors) in &domain.entries {
        let _ = location;
        for vector in vectors {
            for (name, &column) in &columns {
                let value = vector[column];
                let (lo, hi) = ranges[name];
                if value < lo || value > hi {
                    return Err(AbstractError::VectorOutOfRange {
                        variable: name.clone(),
                        value,
                    });
                }
            }
        }
    }

    let scope = if mapping.scope.is_empty()
        || graph.locations.iter().all(|l| mapping.scope.contains(l))
    {
        None
    } else {
        for location in &mapping.scope {
            if !graph.has_location(location) {
                return Err(AbstractError::ScopeLocationUnknown(location.clone()));
            }
        }
        Some(mapping.scope.clone())
    };

    Ok(Plan {
        graph,
        template_index,
        removed,
        columns,
        scope,
        ranges,
        initials,
    })
}

fn template_mentions(graph: &AgentGraph, name: &str) -> bool {
    graph.edges.iter().any(|edge| {
        let mut free = BTreeSet::new();
        edge.guard.free_vars(&mut free);
        for update in &edge.updates {
            update.value.free_vars(&mut free);
            if update.target == name {
                return true;
            }
        }
        free.contains(name)
    })
}

/// Distinct removed-variable vectors at a location, in removal-list order.
fn scoped_vectors(
    plan: &Plan<'_>,
    mapping: &MappingFunction,
    domain: &LocalDomain,
    location: &str,
) -> Result<Vec<BTreeMap<String, i64>>, AbstractError> {
    let vectors = domain
        .entries
        .get(location)
        .ok_or_else(|| AbstractError::MissingDomainEntry(location.to_string()))?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for vector in vectors {
        let projected: Vec<i64> = mapping
            .remove
            .iter()
            .map(|name| vector[plan.columns[name]])
            .collect();
        if seen.insert(projected.clone()) {
            out.push(
                mapping
                    .remove
                    .iter()
                    .cloned()
                    .zip(projected)
                    .collect::<BTreeMap<String, i64>>(),
            );
        }
    }
    Ok(out)
}

/// Produce the abstract specification.
pub fn abstract_model(
    model: &MasTemplate,
    mapping: &MappingFunction,
    domain: &LocalDomain,
) -> Result<MasTemplate, AbstractError> {
    let plan = make_plan(model, mapping, domain)?;
    let graph = plan.graph;

    if domain.tag == DomainTag::Lower && !plan.is_full_scope() {
        let exits: Vec<String> = check_scope_boundary(graph, &mapping.scope)
            .into_iter()
            .filter(|b| b.kind == BoundaryKind::Exiting)
            .map(|b| format!("{} -> {}", b.source, b.target))
            .collect();
        if !exits.is_empty() {
            return Err(AbstractError::ScopeExitUnderLower {
                edges: exits.join(", "),
            });
        }
    }

    // A lower-domain vector is a sound substitution basis at a location
    // only when it provably co-occurs with every retained valuation there,
    // which an upper approximation certifies by being a singleton. Without
    // the certificate the location contributes no must-edges.
    let certificate = if domain.tag == DomainTag::Lower {
        let request = ApproxRequest {
            variables: mapping.remove.clone(),
            target: mapping.target.clone(),
            tag: DomainTag::Upper,
        };
        let upper = crate::approx::approx(model, &request, &ApproxOptions::default())
            .map_err(|e| AbstractError::Certificate(e.to_string()))?;
        Some(upper)
    } else {
        None
    };

    let mut new_edges: Vec<Edge> = Vec::new();
    let mut emitted: BTreeSet<Edge> = BTreeSet::new();
    let mut push = |edges: &mut Vec<Edge>, edge: Edge| {
        if emitted.insert(edge.clone()) {
            edges.push(edge);
        }
    };

    for edge in &graph.edges {
        let src_in = plan.in_scope(&edge.source);
        let tgt_in = plan.in_scope(&edge.target);

        if !src_in {
            let mut copied = edge.clone();
            if tgt_in {
                // entering the scope: the last written values are forgotten
                for name in &plan.removed {
                    copied.updates.push(Update {
                        target: name.clone(),
                        value: Expr::Lit(plan.initials[name]),
                    });
                }
                if let Some(merge) = &mapping.merge {
                    copied.updates.push(Update {
                        target: merge.name.clone(),
                        value: Expr::Lit(merge.initial),
                    });
                }
            }
            push(&mut new_edges, copied);
            continue;
        }

        let mut vectors = scoped_vectors(&plan, mapping, domain, &edge.source)?;
        if let Some(upper) = &certificate {
            let mut certified = BTreeSet::new();
            if let Some(entry) = upper.vectors(&edge.source) {
                let columns: Vec<usize> = mapping
                    .remove
                    .iter()
                    .map(|name| {
                        upper
                            .variables
                            .iter()
                            .position(|v| v == name)
                            .expect("certificate carries the removed variables")
                    })
                    .collect();
                let projected: BTreeSet<Vec<i64>> = entry
                    .iter()
                    .map(|v| columns.iter().map(|&c| v[c]).collect())
                    .collect();
                if projected.len() == 1 {
                    certified = projected;
                }
            }
            vectors.retain(|binding| {
                let vector: Vec<i64> =
                    mapping.remove.iter().map(|name| binding[name]).collect();
                certified.contains(&vector)
            });
        }
        let exit_vectors = if !tgt_in {
            Some(scoped_vectors(&plan, mapping, domain, &edge.target)?)
        } else {
            None
        };

        // Must-abstractions expand selects so that select-bound values
        // substitute to literals and the update composition stays exact.
        let flattened: Vec<Edge> = if domain.tag == DomainTag::Lower {
            crate::model::expand_selects(edge)?
        } else {
            vec![edge.clone()]
        };

        for flat in &flattened {
            for binding in &vectors {
                let Some(variant) =
                    substitute_variant(&plan, mapping, flat, binding, domain.tag)?
                else {
                    continue;
                };
                match &exit_vectors {
                    None => push(&mut new_edges, variant),
                    Some(exit_vectors) => {
                        // reintroduce the removed variables nondeterministically
                        // from the domain at the target location
                        for exit_binding in exit_vectors {
                            let mut with_exit = variant.clone();
                            for name in &mapping.remove {
                                with_exit.updates.push(Update {
                                    target: name.clone(),
                                    value: Expr::Lit(exit_binding[name]),
                                });
                            }
                            push(&mut new_edges, with_exit);
                        }
                    }
                }
            }
        }
    }

    // Declarations: a full-scope removal deletes the variables; a proper
    // scope keeps them alive for the out-of-scope fragment.
    let drop_decls = plan.is_full_scope();
    let mut new_privates: Vec<VarDecl> = graph
        .privates
        .iter()
        .filter(|v| !(drop_decls && plan.removed.contains(&v.name)))
        .cloned()
        .collect();
    let mut new_globals: Vec<VarDecl> = model
        .globals
        .iter()
        .filter(|v| !(drop_decls && plan.removed.contains(&v.name)))
        .cloned()
        .collect();

    if let Some(merge) = &mapping.merge {
        let (lo, hi) = merge_range(&plan, mapping, domain, merge)?;
        let decl = VarDecl {
            name: merge.name.clone(),
            lo: lo.min(merge.initial),
            hi: hi.max(merge.initial),
            initial: merge.initial,
            kind: VarKind::Private,
        };
        // merge variable lives where the removed variables lived
        let removed_was_global = mapping
            .remove
            .iter()
            .all(|name| model.global(name).is_some());
        if removed_was_global {
            new_globals.push(VarDecl {
                kind: VarKind::Global,
                ..decl
            });
        } else {
            new_privates.push(decl);
        }
    }

    let mut result = model.clone();
    result.templates[plan.template_index].graph = AgentGraph {
        name: graph.name.clone(),
        locations: graph.locations.clone(),
        initial: graph.initial.clone(),
        privates: new_privates,
        edges: new_edges,
    };
    result.globals = new_globals;
    result.validate()?;
    Ok(result)
}

/// A removed variable's composed value and where it was captured.
struct Capture {
    value: Expr,
    /// Number of kept updates emitted before the capture; retained
    /// variables read by `value` must not change after this point for an
    /// appended consumer, nor before it for a prepended one.
    kept_before: usize,
}

/// Substitute one domain vector into an edge. Returns None when the
/// substituted guard folds to the literal false or a removed-variable
/// update provably leaves its range (the concrete edge is disabled).
fn substitute_variant(
    plan: &Plan<'_>,
    mapping: &MappingFunction,
    edge: &Edge,
    binding: &BTreeMap<String, i64>,
    tag: DomainTag,
) -> Result<Option<Edge>, AbstractError> {
    let guard = edge
        .guard
        .substitute(&|name| binding.get(name).map(|v| Expr::Lit(*v)))
        .fold();
    if matches!(guard, Expr::Lit(0)) {
        return Ok(None);
    }

    // Walk the update list symbolically: removed targets accumulate their
    // post-update expressions, retained updates keep their (substituted)
    // form. Later updates see earlier removed results.
    let mut removed_now: BTreeMap<String, Capture> = binding
        .iter()
        .map(|(name, value)| {
            (
                name.clone(),
                Capture {
                    value: Expr::Lit(*value),
                    kept_before: 0,
                },
            )
        })
        .collect();
    let mut kept: Vec<Update> = Vec::new();
    let mut wrote_removed = false;
    for update in &edge.updates {
        // positions of fragments this right side pulls in
        let mut reads = BTreeSet::new();
        update.value.free_vars(&mut reads);
        for name in &reads {
            if let Some(capture) = removed_now.get(name) {
                check_capture_fresh(capture, &kept, edge)?;
            }
        }
        let substituted = update
            .value
            .substitute(&|name| removed_now.get(name).map(|c| c.value.clone()))
            .fold();
        if plan.removed.contains(&update.target) {
            match &substituted {
                Expr::Lit(v) => {
                    let (lo, hi) = plan.ranges[&update.target];
                    if *v < lo || *v > hi {
                        // out-of-range assignment disables the edge
                        return Ok(None);
                    }
                }
                _ if tag == DomainTag::Lower => {
                    // a must-edge needs the removed evolution pinned down
                    return Ok(None);
                }
                _ => {}
            }
            removed_now.insert(
                update.target.clone(),
                Capture {
                    value: substituted,
                    kept_before: kept.len(),
                },
            );
            wrote_removed = true;
        } else {
            kept.push(Update {
                target: update.target.clone(),
                value: substituted,
            });
        }
    }

    if let (Some(merge), true) = (&mapping.merge, wrote_removed) {
        // fragments the merge expression consumes
        let mut merge_reads = BTreeSet::new();
        merge.expr.free_vars(&mut merge_reads);
        let fragments: Vec<&Capture> = merge_reads
            .iter()
            .filter_map(|name| removed_now.get(name))
            .collect();
        let append_ok = fragments
            .iter()
            .all(|c| capture_fresh_after(c, &kept, kept.len()));
        let prepend_ok = fragments
            .iter()
            .all(|c| capture_fresh_before(c, &kept));
        let value = merge
            .expr
            .substitute(&|name| removed_now.get(name).map(|c| c.value.clone()))
            .fold();
        let update = Update {
            target: merge.name.clone(),
            value,
        };
        if append_ok {
            kept.push(update);
        } else if prepend_ok {
            kept.insert(0, update);
        } else {
            return Err(AbstractError::UnsupportedUpdateComposition {
                from_location: edge.source.clone(),
                to_location: edge.target.clone(),
            });
        }
    }

    Ok(Some(Edge {
        source: edge.source.clone(),
        target: edge.target.clone(),
        selects: edge.selects.clone(),
        guard,
        sync: edge.sync.clone(),
        updates: kept,
    }))
}

/// A captured fragment consumed at the current end of the kept list is
/// correct only if none of its retained reads were reassigned since the
/// capture.
fn check_capture_fresh(
    capture: &Capture,
    kept: &[Update],
    edge: &Edge,
) -> Result<(), AbstractError> {
    if capture_fresh_after(capture, kept, kept.len()) {
        Ok(())
    } else {
        Err(AbstractError::UnsupportedUpdateComposition {
            from_location: edge.source.clone(),
            to_location: edge.target.clone(),
        })
    }
}

fn capture_fresh_after(capture: &Capture, kept: &[Update], consume_at: usize) -> bool {
    let mut reads = BTreeSet::new();
    capture.value.free_vars(&mut reads);
    kept[capture.kept_before..consume_at]
        .iter()
        .all(|u| !reads.contains(&u.target))
}

fn capture_fresh_before(capture: &Capture, kept: &[Update]) -> bool {
    let mut reads = BTreeSet::new();
    capture.value.free_vars(&mut reads);
    kept[..capture.kept_before]
        .iter()
        .all(|u| !reads.contains(&u.target))
}

/// Declared range for the merge variable: the merge expression evaluated
/// over the full product of the removed variables' ranges when small, else
/// over every vector the domain mentions.
fn merge_range(
    plan: &Plan<'_>,
    mapping: &MappingFunction,
    domain: &LocalDomain,
    merge: &MergeSpec,
) -> Result<(i64, i64), AbstractError> {
    let mut lo = i64::MAX;
    let mut hi = i64::MIN;
    let mut feed = |env: &BTreeMap<String, i64>| -> Result<(), AbstractError> {
        match eval(&merge.expr, env) {
            Ok(v) => {
                lo = lo.min(v);
                hi = hi.max(v);
                Ok(())
            }
            Err(source) => Err(AbstractError::MergeEval {
                vector: env.values().copied().collect(),
                source,
            }),
        }
    };

    let product: u64 = mapping
        .remove
        .iter()
        .map(|name| {
            let (lo, hi) = plan.ranges[name];
            (hi - lo + 1) as u64
        })
        .try_fold(1u64, |acc, n| acc.checked_mul(n))
        .unwrap_or(u64::MAX);

    if product <= 4096 {
        let mut env: BTreeMap<String, i64> = mapping
            .remove
            .iter()
            .map(|name| (name.clone(), plan.ranges[name].0))
            .collect();
        loop {
            feed(&env)?;
            let names: Vec<String> = mapping.remove.clone();
            let mut pos = names.len();
            loop {
                if pos == 0 {
                    lo = lo.min(merge.initial);
                    hi = hi.max(merge.initial);
                    return Ok((lo, hi));
                }
                pos -= 1;
                let name = &names[pos];
                if env[name] < plan.ranges[name].1 {
                    *env.get_mut(name).unwrap() += 1;
                    for reset in names.iter().skip(pos + 1) {
                        *env.get_mut(reset).unwrap() = plan.ranges[reset].0;
                    }
                    break;
                }
            }
        }
    } else {
        for vectors in domain.entries.values() {
            for vector in vectors {
                let env: BTreeMap<String, i64> = mapping
                    .remove
                    .iter()
                    .map(|name| (name.clone(), vector[plan.columns[name]]))
                    .collect();
                feed(&env)?;
            }
        }
        lo = lo.min(merge.initial);
        hi = hi.max(merge.initial);
        Ok((lo, hi))
    }
}

/// Map a concrete valuation through a full-scope mapping: retained values
/// carry over, removed values are dropped, the merge variable (if any) is
/// defined by the merge expression over the removed values.
pub fn alpha_values(
    mapping: &MappingFunction,
    values: &BTreeMap<String, i64>,
) -> Result<BTreeMap<String, i64>, AbstractError> {
    let removed: BTreeSet<&String> = mapping.remove.iter().collect();
    let mut out: BTreeMap<String, i64> = values
        .iter()
        .filter(|(name, _)| !removed.contains(name))
        .map(|(name, value)| (name.clone(), *value))
        .collect();
    if let Some(merge) = &mapping.merge {
        let value = eval(&merge.expr, values).map_err(|source| AbstractError::MergeEval {
            vector: mapping
                .remove
                .iter()
                .filter_map(|n| values.get(n).copied())
                .collect(),
            source,
        })?;
        out.insert(merge.name.clone(), value);
    }
    Ok(out)
}
