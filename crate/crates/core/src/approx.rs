//! Local-domain approximation: upper (may) or lower (must) approximations of
//! the reachable value sets of selected variables at every location of a
//! target graph, computed as a fixpoint of a collecting semantics projected
//! onto those variables — without building the global state space.
//!
//! Guards over variables outside the tracked set are decided three-valued by
//! enumerating completions of the unknowns: the upper approximation keeps a
//! vector whenever the guard is possibly true, the lower approximation only
//! when it is true under every completion and the update result does not
//! depend on the unknowns.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{eval, expand_selects, Applied, EvalError, Expr, MasTemplate, ModelError, SyncDir};
use crate::unfold::{self, UnfoldError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainTag {
    Upper,
    Lower,
}

impl DomainTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainTag::Upper => "upper",
            DomainTag::Lower => "lower",
        }
    }

    pub fn parse(s: &str) -> Option<DomainTag> {
        match s {
            "upper" => Some(DomainTag::Upper),
            "lower" => Some(DomainTag::Lower),
            _ => None,
        }
    }
}

impl std::fmt::Display for DomainTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What to approximate over: one template, or the combined graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Template(String),
    Ext,
}

/// Spelling used in config files and domain files: a template name, or
/// `ext` for the combined graph.
pub const EXT_TARGET: &str = "ext";

impl Target {
    pub fn parse(s: &str) -> Target {
        if s == EXT_TARGET {
            Target::Ext
        } else {
            Target::Template(s.to_string())
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Target::Template(name) => name,
            Target::Ext => EXT_TARGET,
        }
    }
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApproxRequest {
    pub variables: Vec<String>,
    pub target: Target,
    pub tag: DomainTag,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApproxOptions {
    /// Maximum completions enumerated per edge/vector when deciding guards
    /// over unknowns. Above the cap the upper side keeps (and havocs
    /// assigned variables), the lower side drops.
    pub completion_cap: u64,
    /// Hard cap on the total number of stored vectors.
    pub max_total_vectors: u64,
    /// Channels whose partner is assumed always available when computing a
    /// lower approximation on a template target.
    pub assume_sync: BTreeSet<String>,
}

impl Default for ApproxOptions {
    fn default() -> Self {
        ApproxOptions {
            completion_cap: 4096,
            max_total_vectors: 10_000_000,
            assume_sync: BTreeSet::new(),
        }
    }
}

/// Per-location sets of value vectors over the tracked variables, in the
/// order given by `variables`. Entries exist for every structurally
/// reachable location of the target graph, possibly empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalDomain {
    pub variables: Vec<String>,
    pub tag: DomainTag,
    /// Template name, or `ext` for the combined graph.
    pub target: String,
    pub entries: BTreeMap<String, BTreeSet<Vec<i64>>>,
}

impl LocalDomain {
    pub fn vectors(&self, location: &str) -> Option<&BTreeSet<Vec<i64>>> {
        self.entries.get(location)
    }

    /// Column indices of the given variables inside this domain's vectors.
    pub fn columns_of(&self, names: &[String]) -> Option<Vec<usize>> {
        names
            .iter()
            .map(|n| self.variables.iter().position(|v| v == n))
            .collect()
    }

    /// Restrict every vector to the given columns, deduplicating.
    pub fn project_columns(&self, columns: &[usize], location: &str) -> BTreeSet<Vec<i64>> {
        self.entries
            .get(location)
            .map(|vectors| {
                vectors
                    .iter()
                    .map(|v| columns.iter().map(|&c| v[c]).collect())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn total_vectors(&self) -> u64 {
        self.entries.values().map(|v| v.len() as u64).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ApproxError {
    #[error("no template named `{0}` (use `ext` for the combined graph)")]
    UnknownTarget(String),
    #[error("variable `{name}` does not resolve in target `{target}`")]
    UnknownVariable { target: String, name: String },
    #[error("the variable list is empty")]
    EmptyVariableList,
    #[error("domain too large at location `{location}`: more than {cap} vectors total")]
    DomainTooLarge { location: String, cap: u64 },
    #[error(
        "variable `{name}` is written by template `{writer}`; a template-target approximation \
         of `{target}` cannot see those writes — use target `ext`"
    )]
    ForeignWrites {
        target: String,
        name: String,
        writer: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Unfold(#[from] UnfoldError),
}

/// A prepared flat graph to run the fixpoint on.
struct Analysis {
    location_names: Vec<String>,
    initial: usize,
    /// Outgoing edge lists per location.
    out_edges: Vec<Vec<AEdge>>,
    /// Tracked variables in request order with their declared ranges.
    tracked: Vec<(String, (i64, i64), i64)>,
    /// Declared ranges for everything else that may occur free, and whether
    /// the name is a shared global (writable between a handshake's guard
    /// evaluation and the receiver's updates).
    unknown_ranges: BTreeMap<String, ((i64, i64), bool)>,
}

struct AEdge {
    target: usize,
    guard: Expr,
    updates: Vec<crate::model::Update>,
    sync: Option<(String, SyncDir)>,
}

fn build_template_analysis(
    model: &MasTemplate,
    name: &str,
    variables: &[String],
) -> Result<Analysis, ApproxError> {
    let template = model
        .template(name)
        .ok_or_else(|| ApproxError::UnknownTarget(name.to_string()))?;
    let graph = &template.graph;

    let mut ranges: BTreeMap<String, ((i64, i64), bool)> = BTreeMap::new();
    let mut initials: BTreeMap<String, i64> = BTreeMap::new();
    for decl in &graph.privates {
        ranges.insert(decl.name.clone(), (decl.range(), false));
        initials.insert(decl.name.clone(), decl.initial);
    }
    for decl in &model.globals {
        ranges.insert(decl.name.clone(), (decl.range(), true));
        initials.insert(decl.name.clone(), decl.initial);
    }
    // `id` is not substituted on an uninstantiated template; treat it as an
    // unknown ranging over the instance indices so the result covers every
    // instance.
    ranges.insert(
        crate::model::ID_NAME.to_string(),
        ((1, template.count as i64), false),
    );

    let mut tracked = Vec::new();
    for var in variables {
        let (range, _) = *ranges.get(var).ok_or_else(|| ApproxError::UnknownVariable {
            target: name.to_string(),
            name: var.clone(),
        })?;
        if var == crate::model::ID_NAME {
            return Err(ApproxError::UnknownVariable {
                target: name.to_string(),
                name: var.clone(),
            });
        }
        // Any write the template analysis cannot see would silently corrupt
        // the result: writes from other templates always, and writes from
        // sibling instances of this template when there are several.
        if graph.private(var).is_none() {
            for other in &model.templates {
                let foreign = other.graph.name != *name;
                let sibling = !foreign && template.count > 1;
                if !foreign && !sibling {
                    continue;
                }
                let writes = other
                    .graph
                    .edges
                    .iter()
                    .any(|e| e.updates.iter().any(|u| u.target == *var));
                if writes {
                    return Err(ApproxError::ForeignWrites {
                        target: name.to_string(),
                        name: var.clone(),
                        writer: if foreign {
                            other.graph.name.clone()
                        } else {
                            format!("other instances of {}", other.graph.name)
                        },
                    });
                }
            }
        }
        tracked.push((var.clone(), range, initials[var]));
    }

    let loc_index: BTreeMap<&str, usize> = graph
        .locations
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let mut out_edges: Vec<Vec<AEdge>> = Vec::new();
    out_edges.resize_with(graph.locations.len(), Vec::new);
    for edge in &graph.edges {
        for flat in expand_selects(edge)? {
            out_edges[loc_index[flat.source.as_str()]].push(AEdge {
                target: loc_index[flat.target.as_str()],
                guard: flat.guard,
                updates: flat.updates,
                sync: flat.sync.map(|s| (s.channel, s.dir)),
            });
        }
    }

    let tracked_names: BTreeSet<&String> = variables.iter().collect();
    let unknown_ranges = ranges
        .into_iter()
        .filter(|(n, _)| !tracked_names.contains(n))
        .collect();

    Ok(Analysis {
        location_names: graph.locations.clone(),
        initial: loc_index[graph.initial.as_str()],
        out_edges,
        tracked,
        unknown_ranges,
    })
}

fn build_ext_analysis(
    model: &MasTemplate,
    variables: &[String],
) -> Result<Analysis, ApproxError> {
    // A model that already is a combined graph (one template, one instance)
    // is analyzed directly so that variable and location names line up with
    // its own declarations; unfolding again would re-qualify them.
    if model.templates.len() == 1 && model.templates[0].count == 1 {
        return build_precombined_analysis(model, variables);
    }
    let combined = unfold::unfold_model(model)?;

    let mut ranges: BTreeMap<String, ((i64, i64), bool)> = BTreeMap::new();
    let mut initials: BTreeMap<String, i64> = BTreeMap::new();
    for decl in &combined.variables {
        ranges.insert(decl.name.clone(), (decl.range(), false));
        initials.insert(decl.name.clone(), decl.initial);
    }

    let mut tracked = Vec::new();
    for var in variables {
        let (range, _) = *ranges.get(var).ok_or_else(|| ApproxError::UnknownVariable {
            target: EXT_TARGET.to_string(),
            name: var.clone(),
        })?;
        tracked.push((var.clone(), range, initials[var]));
    }

    let loc_index: BTreeMap<&Vec<u32>, usize> = combined
        .locations
        .iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    let mut out_edges: Vec<Vec<AEdge>> = Vec::new();
    out_edges.resize_with(combined.locations.len(), Vec::new);
    for edge in &combined.edges {
        out_edges[loc_index[&edge.source]].push(AEdge {
            target: loc_index[&edge.target],
            guard: edge.guard.clone(),
            updates: edge.updates.clone(),
            sync: None,
        });
    }

    let tracked_names: BTreeSet<&String> = variables.iter().collect();
    let unknown_ranges = ranges
        .into_iter()
        .filter(|(n, _)| !tracked_names.contains(n))
        .collect();

    Ok(Analysis {
        location_names: combined
            .locations
            .iter()
            .map(|v| combined.location_name(v))
            .collect(),
        initial: loc_index[&combined.initial],
        out_edges,
        tracked,
        unknown_ranges,
    })
}

/// Direct analysis of a single-instance model under its own names.
/// Synchronizing edges are skipped: with a single agent they can never
/// find a complementary partner.
fn build_precombined_analysis(
    model: &MasTemplate,
    variables: &[String],
) -> Result<Analysis, ApproxError> {
    let graph = &model.templates[0].graph;

    let mut ranges: BTreeMap<String, ((i64, i64), bool)> = BTreeMap::new();
    let mut initials: BTreeMap<String, i64> = BTreeMap::new();
    for decl in graph.privates.iter().chain(model.globals.iter()) {
        ranges.insert(decl.name.clone(), (decl.range(), false));
        initials.insert(decl.name.clone(), decl.initial);
    }
    ranges.insert(crate::model::ID_NAME.to_string(), ((1, 1), false));

    let mut tracked = Vec::new();
    for var in variables {
        if var == crate::model::ID_NAME {
            return Err(ApproxError::UnknownVariable {
                target: EXT_TARGET.to_string(),
                name: var.clone(),
            });
        }
        let (range, _) = *ranges.get(var).ok_or_else(|| ApproxError::UnknownVariable {
            target: EXT_TARGET.to_string(),
            name: var.clone(),
        })?;
        tracked.push((var.clone(), range, initials[var]));
    }

    let loc_index: BTreeMap<&str, usize> = graph
        .locations
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let mut out_edges: Vec<Vec<AEdge>> = Vec::new();
    out_edges.resize_with(graph.locations.len(), Vec::new);
    for edge in &graph.edges {
        if edge.sync.is_some() {
            continue;
        }
        for flat in expand_selects(edge)? {
            out_edges[loc_index[flat.source.as_str()]].push(AEdge {
                target: loc_index[flat.target.as_str()],
                guard: flat.guard,
                updates: flat.updates,
                sync: None,
            });
        }
    }

    let tracked_names: BTreeSet<&String> = variables.iter().collect();
    let unknown_ranges = ranges
        .into_iter()
        .filter(|(n, _)| !tracked_names.contains(n))
        .collect();

    Ok(Analysis {
        location_names: graph.locations.clone(),
        initial: loc_index[graph.initial.as_str()],
        out_edges,
        tracked,
        unknown_ranges,
    })
}

/// Compute the requested approximation. Guaranteed superset (upper) or
/// subset (lower) of the exact projected reachable sets.
pub fn approx(
    model: &MasTemplate,
    request: &ApproxRequest,
    opts: &ApproxOptions,
) -> Result<LocalDomain, ApproxError> {
    if request.variables.is_empty() {
        return Err(ApproxError::EmptyVariableList);
    }
    model.validate()?;
    let analysis = match &request.target {
        Target::Template(name) => build_template_analysis(model, name, &request.variables)?,
        Target::Ext => build_ext_analysis(model, &request.variables)?,
    };
    let entries = run_fixpoint(&analysis, request.tag, opts)?;
    Ok(LocalDomain {
        variables: request.variables.clone(),
        tag: request.tag,
        target: request.target.as_str().to_string(),
        entries,
    })
}

fn run_fixpoint(
    analysis: &Analysis,
    tag: DomainTag,
    opts: &ApproxOptions,
) -> Result<BTreeMap<String, BTreeSet<Vec<i64>>>, ApproxError> {
    let n = analysis.location_names.len();
    let mut domains: Vec<BTreeSet<Vec<i64>>> = vec![BTreeSet::new(); n];
    let mut pending: Vec<Vec<Vec<i64>>> = vec![Vec::new(); n];
    let mut total: u64 = 0;

    let initial_vector: Vec<i64> = analysis.tracked.iter().map(|(_, _, init)| *init).collect();
    domains[analysis.initial].insert(initial_vector.clone());
    pending[analysis.initial].push(initial_vector);
    total += 1;

    let mut queue: VecDeque<usize> = VecDeque::new();
    queue.push_back(analysis.initial);
    let mut queued = vec![false; n];
    queued[analysis.initial] = true;

    // Mark every structurally reachable location so empty entries appear in
    // the output even when no vector survives the guards.
    let mut structural = vec![false; n];
    structural[analysis.initial] = true;
    {
        let mut stack = vec![analysis.initial];
        while let Some(l) = stack.pop() {
            for e in &analysis.out_edges[l] {
                if !structural[e.target] {
                    structural[e.target] = true;
                    stack.push(e.target);
                }
            }
        }
    }

    while let Some(loc) = queue.pop_front() {
        queued[loc] = false;
        let batch = std::mem::take(&mut pending[loc]);
        for edge in &analysis.out_edges[loc] {
            // Template-target synchronisation: the upper side assumes the
            // partner is always willing; the lower side only transfers
            // channels the user declared always-available.
            if tag == DomainTag::Lower {
                if let Some((channel, _)) = &edge.sync {
                    if !opts.assume_sync.contains(channel) {
                        continue;
                    }
                }
            }
            for vector in &batch {
                let results = transfer(analysis, edge, vector, tag, opts)?;
                for result in results {
                    if domains[edge.target].insert(result.clone()) {
                        total += 1;
                        if total > opts.max_total_vectors {
                            return Err(ApproxError::DomainTooLarge {
                                location: analysis.location_names[edge.target].clone(),
                                cap: opts.max_total_vectors,
                            });
                        }
                        pending[edge.target].push(result);
                        if !queued[edge.target] {
                            queued[edge.target] = true;
                            queue.push_back(edge.target);
                        }
                    }
                }
            }
        }
    }

    let mut entries = BTreeMap::new();
    for (i, name) in analysis.location_names.iter().enumerate() {
        if structural[i] {
            entries.insert(name.clone(), std::mem::take(&mut domains[i]));
        }
    }
    Ok(entries)
}

struct Unknown<'a> {
    name: &'a String,
    lo: i64,
    hi: i64,
    global: bool,
}

/// Unknown variables occurring free in the guard or any update value.
fn edge_unknowns<'a>(analysis: &'a Analysis, edge: &AEdge) -> Vec<Unknown<'a>> {
    let mut free = BTreeSet::new();
    edge.guard.free_vars(&mut free);
    for update in &edge.updates {
        update.value.free_vars(&mut free);
    }
    analysis
        .unknown_ranges
        .iter()
        .filter(|(name, _)| free.contains(*name))
        .map(|(name, ((lo, hi), global))| Unknown {
            name,
            lo: *lo,
            hi: *hi,
            global: *global,
        })
        .collect()
}

fn transfer(
    analysis: &Analysis,
    edge: &AEdge,
    vector: &[i64],
    tag: DomainTag,
    opts: &ApproxOptions,
) -> Result<BTreeSet<Vec<i64>>, ApproxError> {
    let unknowns = edge_unknowns(analysis, edge);
    let completions: u64 = unknowns
        .iter()
        .map(|u| (u.hi - u.lo + 1) as u64)
        .try_fold(1u64, |acc, n| acc.checked_mul(n))
        .unwrap_or(u64::MAX);

    if completions > opts.completion_cap {
        return match tag {
            // Conservative in the keep direction: guard assumed possibly
            // true, assigned tracked variables havoc over their full range.
            DomainTag::Upper => havoc_results(analysis, edge, vector, opts),
            // Conservative in the drop direction.
            DomainTag::Lower => Ok(BTreeSet::new()),
        };
    }

    // On a receive edge the partner's updates land between our guard and our
    // updates, so an update value reading a shared global may see a
    // different value than the enumerated one. The upper side widens those
    // edges; the lower side is already covered by the uniqueness check
    // below (the result must not depend on the unknown at all).
    if tag == DomainTag::Upper && matches!(edge.sync, Some((_, SyncDir::Receive))) {
        let mut update_free = BTreeSet::new();
        for update in &edge.updates {
            update.value.free_vars(&mut update_free);
        }
        let interference = unknowns
            .iter()
            .any(|u| u.global && update_free.contains(u.name.as_str()));
        if interference {
            return if guard_possibly_true(analysis, edge, vector, &unknowns)? {
                havoc_results(analysis, edge, vector, opts)
            } else {
                Ok(BTreeSet::new())
            };
        }
    }

    let mut results = BTreeSet::new();
    let mut all_pass = true;

    let mut env: BTreeMap<String, i64> = BTreeMap::new();
    let mut counters: Vec<i64> = unknowns.iter().map(|u| u.lo).collect();
    loop {
        env.clear();
        for ((name, _, _), value) in analysis.tracked.iter().zip(vector) {
            env.insert(name.clone(), *value);
        }
        for (unknown, value) in unknowns.iter().zip(&counters) {
            env.insert(unknown.name.clone(), *value);
        }

        match step_completion(analysis, edge, &mut env) {
            Ok(Some(result)) => {
                results.insert(result);
            }
            Ok(None) | Err(_) => {
                // guard false, update out of range, or evaluation error:
                // nothing transfers under this completion
                all_pass = false;
            }
        }

        // advance odometer
        let mut pos = counters.len();
        loop {
            if pos == 0 {
                if tag == DomainTag::Lower {
                    // must-transfer: true under every completion with one
                    // unique result
                    if !all_pass || results.len() != 1 {
                        results.clear();
                    }
                }
                return Ok(results);
            }
            pos -= 1;
            if counters[pos] < unknowns[pos].hi {
                counters[pos] += 1;
                for (i, c) in counters.iter_mut().enumerate().skip(pos + 1) {
                    *c = unknowns[i].lo;
                }
                break;
            }
        }
    }
}

/// Three-valued guard check used by the widened receive-edge path: true if
/// some completion of the guard's unknowns satisfies the guard.
fn guard_possibly_true(
    analysis: &Analysis,
    edge: &AEdge,
    vector: &[i64],
    unknowns: &[Unknown<'_>],
) -> Result<bool, ApproxError> {
    let mut guard_free = BTreeSet::new();
    edge.guard.free_vars(&mut guard_free);
    let guard_unknowns: Vec<&Unknown<'_>> = unknowns
        .iter()
        .filter(|u| guard_free.contains(u.name.as_str()))
        .collect();

    let mut env: BTreeMap<String, i64> = BTreeMap::new();
    let mut counters: Vec<i64> = guard_unknowns.iter().map(|u| u.lo).collect();
    loop {
        env.clear();
        for ((name, _, _), value) in analysis.tracked.iter().zip(vector) {
            env.insert(name.clone(), *value);
        }
        for (unknown, value) in guard_unknowns.iter().zip(&counters) {
            env.insert(unknown.name.clone(), *value);
        }
        if matches!(eval(&edge.guard, &env), Ok(v) if v != 0) {
            return Ok(true);
        }
        let mut pos = counters.len();
        loop {
            if pos == 0 {
                return Ok(false);
            }
            pos -= 1;
            if counters[pos] < guard_unknowns[pos].hi {
                counters[pos] += 1;
                for (i, c) in counters.iter_mut().enumerate().skip(pos + 1) {
                    *c = guard_unknowns[i].lo;
                }
                break;
            }
        }
    }
}

/// Evaluate guard and updates under one fully-determined environment.
/// Returns the projected tracked vector, or None if the guard is false or
/// an update leaves its range.
fn step_completion(
    analysis: &Analysis,
    edge: &AEdge,
    env: &mut BTreeMap<String, i64>,
) -> Result<Option<Vec<i64>>, EvalError> {
    if eval(&edge.guard, env)? == 0 {
        return Ok(None);
    }
    let tracked_range = |name: &str| {
        analysis
            .tracked
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, r, _)| *r)
            .or_else(|| analysis.unknown_ranges.get(name).map(|(r, _)| *r))
    };
    match crate::model::eval::apply_updates(&edge.updates, env, &tracked_range)? {
        Applied::Disabled => Ok(None),
        Applied::Ok => Ok(Some(
            analysis
                .tracked
                .iter()
                .map(|(name, _, _)| env[name])
                .collect(),
        )),
    }
}

/// Over-approximate transfer when completions cannot be enumerated: tracked
/// variables assigned anywhere on the edge range over their full domain,
/// everything else carries over.
fn havoc_results(
    analysis: &Analysis,
    edge: &AEdge,
    vector: &[i64],
    opts: &ApproxOptions,
) -> Result<BTreeSet<Vec<i64>>, ApproxError> {
    let assigned: Vec<bool> = analysis
        .tracked
        .iter()
        .map(|(name, _, _)| edge.updates.iter().any(|u| u.target == *name))
        .collect();
    let mut results = BTreeSet::new();
    let mut current: Vec<i64> = analysis
        .tracked
        .iter()
        .zip(vector)
        .zip(&assigned)
        .map(|(((_, (lo, _), _), v), a)| if *a { *lo } else { *v })
        .collect();
    loop {
        results.insert(current.clone());
        if results.len() as u64 > opts.max_total_vectors {
            return Err(ApproxError::DomainTooLarge {
                location: "havoc expansion".into(),
                cap: opts.max_total_vectors,
            });
        }
        let mut pos = current.len();
        loop {
            if pos == 0 {
                return Ok(results);
            }
            pos -= 1;
            if assigned[pos] && current[pos] < analysis.tracked[pos].1 .1 {
                current[pos] += 1;
                for (i, c) in current.iter_mut().enumerate().skip(pos + 1) {
                    if assigned[i] {
                        *c = analysis.tracked[i].1 .0;
                    }
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
    use crate::model::{AgentGraph, Edge, Template, VarDecl, VarKind};

    fn request(vars: &[&str], target: Target, tag: DomainTag) -> ApproxRequest {
        ApproxRequest {
            variables: vars.iter().map(|s| s.to_string()).collect(),
            target,
            tag,
        }
    }

    fn vectors(domain: &LocalDomain, loc: &str) -> Vec<Vec<i64>> {
        domain.vectors(loc).unwrap().iter().cloned().collect()
    }

    /// Single-template model mirroring the voting example shape: a choice is
    /// drawn and remembered, then carried across a handshake.
    fn voterlike() -> MasTemplate {
        let graph = AgentGraph {
            name: "Voter".into(),
            locations: vec!["idle".into(), "waits".into(), "has".into(), "voted".into()],
            initial: "idle".into(),
            privates: vec![VarDecl::new("mem_dec", 0, 2, 0, VarKind::Private)],
            edges: vec![
                Edge::internal("idle", "waits")
                    .with_select("dec", 1, 2)
                    .with_update("mem_dec", parse_expression("dec").unwrap()),
                Edge::internal("waits", "has").with_sync("pack", SyncDir::Receive),
                Edge::internal("has", "voted").with_sync("ballot", SyncDir::Send),
            ],
        };
        MasTemplate {
            templates: vec![Template { graph, count: 1 }],
            channels: vec!["pack".into(), "ballot".into()],
            ..Default::default()
        }
    }

    #[test]
    fn upper_on_voter_template() {
        let model = voterlike();
        let domain = approx(
            &model,
            &request(&["mem_dec"], Target::Template("Voter".into()), DomainTag::Upper),
            &ApproxOptions::default(),
        )
        .unwrap();
        assert_eq!(vectors(&domain, "idle"), vec![vec![0]]);
        assert_eq!(vectors(&domain, "waits"), vec![vec![1], vec![2]]);
        assert_eq!(vectors(&domain, "has"), vec![vec![1], vec![2]]);
        assert_eq!(vectors(&domain, "voted"), vec![vec![1], vec![2]]);
    }

    #[test]
    fn lower_does_not_cross_unassumed_sync() {
        let model = voterlike();
        let domain = approx(
            &model,
            &request(&["mem_dec"], Target::Template("Voter".into()), DomainTag::Lower),
            &ApproxOptions::default(),
        )
        .unwrap();
        assert_eq!(vectors(&domain, "idle"), vec![vec![0]]);
        assert_eq!(vectors(&domain, "waits"), vec![vec![1], vec![2]]);
        // the handshake is not assumed available: nothing transfers
        assert!(vectors(&domain, "has").is_empty());

        let mut opts = ApproxOptions::default();
        opts.assume_sync.insert("pack".into());
        opts.assume_sync.insert("ballot".into());
        let domain = approx(
            &model,
            &request(&["mem_dec"], Target::Template("Voter".into()), DomainTag::Lower),
            &opts,
        )
        .unwrap();
        assert_eq!(vectors(&domain, "voted"), vec![vec![1], vec![2]]);
    }

    #[test]
    fn unassigned_variable_keeps_initial_everywhere() {
        let graph = AgentGraph {
            name: "A".into(),
            locations: vec!["a".into(), "b".into(), "c".into()],
            initial: "a".into(),
            privates: vec![VarDecl::new("x", 0, 3, 2, VarKind::Private)],
            edges: vec![Edge::internal("a", "b"), Edge::internal("b", "c")],
        };
        let model = MasTemplate {
            templates: vec![Template { graph, count: 1 }],
            ..Default::default()
        };
        let domain = approx(
            &model,
            &request(&["x"], Target::Template("A".into()), DomainTag::Upper),
            &ApproxOptions::default(),
        )
        .unwrap();
        for loc in ["a", "b", "c"] {
            assert_eq!(vectors(&domain, loc), vec![vec![2]], "at {loc}");
        }
    }

    #[test]
    fn guard_over_removed_variable_splits_upper_and_lower() {
        // y is outside the tracked set and guards the edge; the upper side
        // keeps the transfer (possibly true), the lower drops it (not true
        // under every completion of y).
        let graph = AgentGraph {
            name: "A".into(),
            locations: vec!["a".into(), "b".into()],
            initial: "a".into(),
            privates: vec![
                VarDecl::new("x", 0, 1, 0, VarKind::Private),
                VarDecl::new("y", 0, 1, 0, VarKind::Private),
            ],
            edges: vec![Edge::internal("a", "b")
                .with_guard(parse_expression("y==1").unwrap())
                .with_update("x", Expr::Lit(1))],
        };
        let model = MasTemplate {
            templates: vec![Template { graph, count: 1 }],
            ..Default::default()
        };
        let upper = approx(
            &model,
            &request(&["x"], Target::Template("A".into()), DomainTag::Upper),
            &ApproxOptions::default(),
        )
        .unwrap();
        assert_eq!(vectors(&upper, "b"), vec![vec![1]]);
        let lower = approx(
            &model,
            &request(&["x"], Target::Template("A".into()), DomainTag::Lower),
            &ApproxOptions::default(),
        )
        .unwrap();
        assert!(vectors(&lower, "b").is_empty());
    }

    #[test]
    fn constants_only_gives_exact_domain() {
        let graph = AgentGraph {
            name: "A".into(),
            locations: vec!["a".into(), "b".into()],
            initial: "a".into(),
            privates: vec![VarDecl::new("x", 0, 5, 0, VarKind::Private)],
            edges: vec![Edge::internal("a", "b").with_update("x", Expr::Lit(3))],
        };
        let model = MasTemplate {
            templates: vec![Template { graph, count: 1 }],
            ..Default::default()
        };
        for tag in [DomainTag::Upper, DomainTag::Lower] {
            let domain = approx(
                &model,
                &request(&["x"], Target::Template("A".into()), tag),
                &ApproxOptions::default(),
            )
            .unwrap();
            assert_eq!(vectors(&domain, "a"), vec![vec![0]]);
            assert_eq!(vectors(&domain, "b"), vec![vec![3]]);
        }
    }

    #[test]
    fn foreign_writes_rejected_on_template_target() {
        let writer = AgentGraph {
            name: "W".into(),
            locations: vec!["w".into()],
            initial: "w".into(),
            privates: vec![],
            edges: vec![Edge::internal("w", "w").with_update("g", Expr::Lit(1))],
        };
        let reader = AgentGraph {
            name: "R".into(),
            locations: vec!["r".into()],
            initial: "r".into(),
            privates: vec![],
            edges: vec![],
        };
        let model = MasTemplate {
            templates: vec![
                Template { graph: writer, count: 1 },
                Template { graph: reader, count: 1 },
            ],
            globals: vec![VarDecl::new("g", 0, 1, 0, VarKind::Global)],
            ..Default::default()
        };
        let err = approx(
            &model,
            &request(&["g"], Target::Template("R".into()), DomainTag::Upper),
            &ApproxOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ApproxError::ForeignWrites { .. }));
        // on the combined graph the same request is fine
        approx(
            &model,
            &request(&["g"], Target::Ext, DomainTag::Upper),
            &ApproxOptions::default(),
        )
        .unwrap();
    }

    #[test]
    fn vector_cap_reports_location() {
        let graph = AgentGraph {
            name: "A".into(),
            locations: vec!["a".into()],
            initial: "a".into(),
            privates: vec![VarDecl::new("x", 0, 100, 0, VarKind::Private)],
            edges: vec![Edge::internal("a", "a")
                .with_guard(parse_expression("x<100").unwrap())
                .with_update("x", parse_expression("x+1").unwrap())],
        };
        let model = MasTemplate {
            templates: vec![Template { graph, count: 1 }],
            ..Default::default()
        };
        let opts = ApproxOptions {
            max_total_vectors: 10,
            ..Default::default()
        };
        let err = approx(
            &model,
            &request(&["x"], Target::Template("A".into()), DomainTag::Upper),
            &opts,
        )
        .unwrap_err();
        assert!(matches!(err, ApproxError::DomainTooLarge { .. }));
    }

    #[test]
    fn id_treated_as_unknown_on_templates() {
        // an edge guarded by id==2 contributes for the upper bound (some
        // instance has id 2) but not the lower (not all do)
        let graph = AgentGraph {
            name: "A".into(),
            locations: vec!["a".into(), "b".into()],
            initial: "a".into(),
            privates: vec![VarDecl::new("x", 0, 1, 0, VarKind::Private)],
            edges: vec![Edge::internal("a", "b")
                .with_guard(parse_expression("id==2").unwrap())
                .with_update("x", Expr::Lit(1))],
        };
        let model = MasTemplate {
            templates: vec![Template { graph, count: 3 }],
            ..Default::default()
        };
        let upper = approx(
            &model,
            &request(&["x"], Target::Template("A".into()), DomainTag::Upper),
            &ApproxOptions::default(),
        )
        .unwrap();
        assert_eq!(vectors(&upper, "b"), vec![vec![1]]);
        let lower = approx(
            &model,
            &request(&["x"], Target::Template("A".into()), DomainTag::Lower),
            &ApproxOptions::default(),
        )
        .unwrap();
        assert!(vectors(&lower, "b").is_empty());
    }

    #[test]
    fn guard_dead_location_has_empty_entry() {
        let graph = AgentGraph {
            name: "A".into(),
            locations: vec!["a".into(), "dead".into()],
            initial: "a".into(),
            privates: vec![VarDecl::new("x", 0, 1, 0, VarKind::Private)],
            edges: vec![Edge::internal("a", "dead").with_guard(Expr::Lit(0))],
        };
        let model = MasTemplate {
            templates: vec![Template { graph, count: 1 }],
            ..Default::default()
        };
        let domain = approx(
            &model,
            &request(&["x"], Target::Template("A".into()), DomainTag::Upper),
            &ApproxOptions::default(),
        )
        .unwrap();
        assert_eq!(domain.entries["dead"], BTreeSet::new());
    }
}
