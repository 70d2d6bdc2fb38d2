//! Explicit-state global-model construction and invariant checking: the
//! verification backend for the abstraction pipeline and the brute-force
//! oracle all soundness properties are tested against.
//!
//! Supported queries are the invariant/reachability fragment: `A[] p` and
//! `E<> p` over variables, bounded quantifiers, and location predicates.

mod compile;
mod explore;
mod layout;
mod runtime;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub use compile::CompileError;
pub use explore::ExploreStats;
pub use runtime::{EdgeRef, Runtime, StateEnv};

use crate::approx::Target;
use crate::io::text::{self, QueryKind};
use crate::model::{EvalError, Expr, MasTemplate, ModelError};
use crate::unfold::UnfoldError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Unfold(#[from] UnfoldError),
    #[error("{context}: {source}")]
    Compile {
        context: String,
        source: CompileError,
    },
    #[error("evaluation error at {context}: {source}")]
    Eval { context: String, source: EvalError },
    #[error("query: {0}")]
    Query(String),
    #[error("state cap exceeded before the oracle finished")]
    OracleCapped,
    #[error("internal: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckOptions {
    /// Stop after this many distinct states (memout-equivalent report).
    pub state_cap: u64,
    pub threads: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            state_cap: u64::MAX,
            threads: 1,
        }
    }
}

/// An invariant (`A[] p`) or reachability (`E<> p`) query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub kind: QueryKind,
    pub proposition: Expr,
    pub text: String,
}

impl Query {
    /// Parse query text, substituting the model's constants.
    pub fn parse(src: &str, model: &MasTemplate) -> Result<Query, CheckError> {
        let (kind, raw) = text::parse_query(src).map_err(|e| CheckError::Query(e.to_string()))?;
        let proposition = raw.substitute(&|name| model.constants.get(name).map(|v| Expr::Lit(*v)));
        Ok(Query {
            kind,
            proposition,
            text: src.trim().to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails,
    /// The state cap was hit before the query was decided.
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Holds => "holds",
            Verdict::Fails => "fails",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// One step of a counterexample or witness trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub edge: EdgeRef,
    pub label: String,
    /// Locations and valuation after taking the edge.
    pub locations: Vec<String>,
    pub values: BTreeMap<String, i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckOutcome {
    pub verdict: Verdict,
    pub stats: ExploreStats,
    /// Shortest-by-BFS counterexample (failing `A[]`) or witness
    /// (holding `E<>`), ties broken by canonical edge order.
    pub trace: Option<Trace>,
}

/// Explore the global model and report statistics.
pub fn explore(runtime: &Runtime, opts: &CheckOptions) -> Result<ExploreStats, CheckError> {
    let result = explore::search(runtime, opts, explore::Watch::None, false)?;
    Ok(result.stats)
}

/// Decide a query by breadth-first search.
pub fn check(
    runtime: &Runtime,
    query: &Query,
    opts: &CheckOptions,
) -> Result<CheckOutcome, CheckError> {
    let compiled = runtime
        .symbols
        .compile(&query.proposition)
        .map_err(|source| CheckError::Compile {
            context: format!("query `{}`", query.text),
            source,
        })?;

    // A[] p stops at the first state violating p; E<> p at the first state
    // satisfying p.
    let negate = query.kind == QueryKind::Invariant;
    let pred = move |rt: &Runtime, words: &[u64]| {
        let satisfied = explore::eval_predicate(rt, &compiled, words)?;
        Ok(if negate { !satisfied } else { satisfied })
    };
    let result = explore::search(runtime, opts, explore::Watch::FirstMatch(&pred), true)?;

    let verdict = match (result.matched, result.stats.capped) {
        (Some(_), _) => {
            if query.kind == QueryKind::Invariant {
                Verdict::Fails
            } else {
                Verdict::Holds
            }
        }
        (None, true) => Verdict::Inconclusive,
        (None, false) => {
            if query.kind == QueryKind::Invariant {
                Verdict::Holds
            } else {
                Verdict::Fails
            }
        }
    };

    let trace = result.matched.map(|target| {
        let steps = explore::reconstruct_trace(&result, target);
        let mut trace = Trace::default();
        let mut current = runtime.initial_state();
        for (_, edge_ref) in steps {
            let next = runtime
                .apply_edge(&current, &edge_ref)
                .expect("replaying a recorded edge")
                .expect("recorded edge still enabled");
            let (locations, values) = runtime.decode(&next);
            trace.steps.push(TraceStep {
                edge: edge_ref,
                label: runtime.edge_label(&edge_ref),
                locations,
                values,
            });
            current = next;
        }
        trace
    });

    Ok(CheckOutcome {
        verdict,
        stats: result.stats,
        trace,
    })
}

/// Exact per-location projection of the reachable valuations onto a
/// variable set; the oracle the approximations are validated against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactProjection {
    pub variables: Vec<String>,
    pub target: String,
    pub entries: BTreeMap<String, BTreeSet<Vec<i64>>>,
}

/// Fully explore the model and project every reachable state onto the
/// given variables, per location of the target. Intended for desk-scale
/// models; hitting the cap is an error, not a partial answer.
pub fn project_reachable(
    model: &MasTemplate,
    target: &Target,
    variables: &[String],
    opts: &CheckOptions,
) -> Result<ExactProjection, CheckError> {
    let runtime = Runtime::from_model(model)?;
    let result = explore::search(&runtime, opts, explore::Watch::None, false)?;
    if result.stats.capped {
        return Err(CheckError::OracleCapped);
    }

    let mut entries: BTreeMap<String, BTreeSet<Vec<i64>>> = BTreeMap::new();
    let mut locations = vec![0u32; runtime.n_agents()];
    let mut vars = vec![0i64; runtime.var_names.len()];

    match target {
        Target::Template(name) => {
            let info = runtime
                .symbols
                .templates
                .get(name)
                .ok_or_else(|| CheckError::Query(format!("no template named `{name}`")))?;
            // per instance: the slots the requested variables live in
            let mut instance_slots: Vec<Vec<usize>> = Vec::new();
            for instance in 0..info.count {
                let agent = (info.agent_start + instance) as usize;
                let mut slots = Vec::new();
                for var in variables {
                    let slot = match info.private_offsets.get(var) {
                        Some(&offset) => runtime.symbols.private_base[agent] + offset,
                        None => *runtime.symbols.var_slots.get(var).ok_or_else(|| {
                            CheckError::Query(format!(
                                "variable `{var}` does not resolve in template `{name}`"
                            ))
                        })?,
                    };
                    slots.push(slot as usize);
                }
                instance_slots.push(slots);
            }
            let agent_locations = &runtime.agents[info.agent_start as usize].locations;
            for id in 0..result.set.len() {
                runtime
                    .layout
                    .unpack(result.set.get(id as u32), &mut locations, &mut vars);
                for (instance, slots) in instance_slots.iter().enumerate() {
                    let agent = info.agent_start as usize + instance;
                    let loc_name = &agent_locations[locations[agent] as usize];
                    let vector: Vec<i64> = slots.iter().map(|&s| vars[s]).collect();
                    entries.entry(loc_name.clone()).or_default().insert(vector);
                }
            }
        }
        Target::Ext => {
            let slots: Vec<usize> = variables
                .iter()
                .map(|var| {
                    runtime.resolve_variable(var).map(|s| s as usize).ok_or_else(|| {
                        CheckError::Query(format!(
                            "variable `{var}` does not resolve in the combined graph"
                        ))
                    })
                })
                .collect::<Result<_, _>>()?;
            for id in 0..result.set.len() {
                runtime
                    .layout
                    .unpack(result.set.get(id as u32), &mut locations, &mut vars);
                let loc_name: String = runtime
                    .agents
                    .iter()
                    .zip(&locations)
                    .map(|(a, &l)| a.locations[l as usize].as_str())
                    .collect::<Vec<_>>()
                    .join(".");
                let vector: Vec<i64> = slots.iter().map(|&s| vars[s]).collect();
                entries.entry(loc_name).or_default().insert(vector);
            }
        }
    }

    Ok(ExactProjection {
        variables: variables.to_vec(),
        target: target.as_str().to_string(),
        entries,
    })
}
