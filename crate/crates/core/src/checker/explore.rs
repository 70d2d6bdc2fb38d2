//! Breadth-first global-model exploration over the packed state encoding.
//!
//! States live in one flat arena deduplicated through a hash table of
//! indices, which keeps the amortized footprint per stored state at the
//! packed word size plus a few bytes of table overhead. The frontier is the
//! contiguous id range of the current BFS level. Parallel expansion is
//! level-synchronous with a sequential merge, so state and transition
//! counts, verdicts, and traces are identical across thread counts.

use std::hash::{BuildHasher, BuildHasherDefault};
use std::time::Instant;

use hashbrown::HashTable;
use rayon::prelude::*;
use rustc_hash::FxHasher;

use super::runtime::{EdgeRef, Runtime, Scratch};
use super::{CheckError, CheckOptions};

type FxBuild = BuildHasherDefault<FxHasher>;

/// Deduplicating state store: packed states appended to one arena, indexed
/// by a hash table of ids.
pub(crate) struct StateSet {
    words: usize,
    arena: Vec<u64>,
    table: HashTable<u32>,
    hasher: FxBuild,
}

impl StateSet {
    pub fn new(words: usize) -> StateSet {
        StateSet {
            words,
            arena: Vec::new(),
            table: HashTable::new(),
            hasher: FxBuild::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.arena.len() / self.words
    }

    pub fn get(&self, id: u32) -> &[u64] {
        let at = id as usize * self.words;
        &self.arena[at..at + self.words]
    }

    /// Amortized bytes held per stored state: the packed arena plus the
    /// id table (4-byte ids plus control bytes).
    pub fn memory_bytes(&self) -> u64 {
        (self.arena.capacity() * 8 + self.table.capacity() * 5) as u64
    }

    /// Insert a packed state, returning its id and whether it was new.
    pub fn insert(&mut self, state: &[u64]) -> (u32, bool) {
        debug_assert_eq!(state.len(), self.words);
        let hash = self.hasher.hash_one(state);
        let words = self.words;
        let arena = &self.arena;
        match self.table.find(hash, |&id| {
            let at = id as usize * words;
            &arena[at..at + words] == state
        }) {
            Some(&id) => (id, false),
            None => {
                let id = self.len() as u32;
                self.arena.extend_from_slice(state);
                let arena = &self.arena;
                self.table.insert_unique(hash, id, |&id| {
                    let at = id as usize * words;
                    self.hasher.hash_one(&arena[at..at + words])
                });
                (id, true)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExploreStats {
    /// Distinct reachable states visited.
    pub states: u64,
    /// Transitions enumerated from visited states (multi-edges counted).
    pub transitions: u64,
    /// Largest BFS level.
    pub peak_frontier: u64,
    /// True when the state cap stopped exploration early.
    pub capped: bool,
    pub time_ms: u64,
    /// Bytes held by the visited set (arena plus id table).
    pub store_bytes: u64,
}

/// A per-state predicate evaluated on discovery.
pub(crate) type StatePredicate<'a> =
    &'a (dyn Fn(&Runtime, &[u64]) -> Result<bool, CheckError> + Sync);

/// What the per-state predicate wants from the search.
pub(crate) enum Watch<'a> {
    /// Pure exploration.
    None,
    /// Stop at the first state where the closure returns true.
    FirstMatch(StatePredicate<'a>),
}

pub(crate) struct SearchResult {
    pub stats: ExploreStats,
    /// Id of the first matching state in canonical BFS order, if any.
    pub matched: Option<u32>,
    pub set: StateSet,
    /// Parent edge per state id (id 0 has none); filled only when requested.
    pub parents: Option<Vec<(u32, EdgeRef)>>,
}

/// Level-synchronous BFS from the initial state. `record_parents` enables
/// trace reconstruction at the cost of one parent entry per state.
pub(crate) fn search(
    runtime: &Runtime,
    opts: &CheckOptions,
    watch: Watch<'_>,
    record_parents: bool,
) -> Result<SearchResult, CheckError> {
    let start = Instant::now();
    let words = runtime.words_per_state();
    let mut set = StateSet::new(words);
    let mut parents: Option<Vec<(u32, EdgeRef)>> = record_parents.then(Vec::new);

    let initial = runtime.initial_state();
    let (root, _) = set.insert(&initial);
    if let Some(parents) = parents.as_mut() {
        parents.push((u32::MAX, EdgeRef {
            agent: u16::MAX,
            source: u16::MAX,
            edge: u16::MAX,
            kind: super::runtime::EdgeKind::Internal,
        }));
    }

    let mut matched = None;
    if let Watch::FirstMatch(pred) = &watch {
        if pred(runtime, set.get(root))? {
            matched = Some(root);
        }
    }

    let mut stats = ExploreStats::default();
    let mut level_start: u32 = 0;
    let threads = opts.threads.max(1);
    let pool = (threads > 1)
        .then(|| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
        })
        .transpose()
        .map_err(|e| CheckError::Internal(e.to_string()))?;

    // Merge one expanded state's successors into the set; shared by the
    // serial and parallel paths so order and counts agree exactly.
    macro_rules! merge {
        ($source_id:expr, $out_words:expr, $out_refs:expr) => {{
            stats.transitions += $out_refs.len() as u64;
            for (i, edge_ref) in $out_refs.iter().enumerate() {
                let state = &$out_words[i * words..(i + 1) * words];
                let (id, new) = set.insert(state);
                if !new {
                    continue;
                }
                if let Some(parents) = parents.as_mut() {
                    parents.push(($source_id, *edge_ref));
                }
                if let Watch::FirstMatch(pred) = &watch {
                    if matched.is_none() && pred(runtime, set.get(id))? {
                        // finish merging this level so counts stay
                        // deterministic, then stop at the loop head
                        matched = Some(id);
                    }
                }
            }
        }};
    }

    while matched.is_none() && !stats.capped {
        let level_end = set.len() as u32;
        if level_start == level_end {
            break;
        }
        let level_size = (level_end - level_start) as u64;
        stats.peak_frontier = stats.peak_frontier.max(level_size);

        match &pool {
            None => {
                let mut scratch = runtime.new_scratch();
                let mut tmp = Vec::new();
                let mut locals = Vec::new();
                let mut out_words = Vec::new();
                let mut out_refs: Vec<EdgeRef> = Vec::new();
                let mut current = vec![0u64; words];
                for id in level_start..level_end {
                    current.copy_from_slice(set.get(id));
                    out_words.clear();
                    out_refs.clear();
                    runtime.successors(
                        &current,
                        &mut scratch,
                        &mut tmp,
                        &mut locals,
                        &mut out_words,
                        &mut out_refs,
                    )?;
                    merge!(id, out_words, out_refs);
                }
            }
            Some(pool) => {
                let chunk = ((level_size as usize).div_ceil(threads)).max(1);
                let ids: Vec<u32> = (level_start..level_end).collect();
                let set_ref = &set;
                type Batch = Result<(u32, Vec<u64>, Vec<EdgeRef>), CheckError>;
                let batches: Vec<Batch> =
                    pool.install(|| {
                        ids.par_chunks(chunk)
                            .map(|ids| {
                                let mut scratch = runtime.new_scratch();
                                let mut tmp = Vec::new();
                                let mut locals = Vec::new();
                                let mut chunk_results = Vec::new();
                                for &id in ids {
                                    let mut out_words = Vec::new();
                                    let mut out_refs = Vec::new();
                                    match runtime.successors(
                                        set_ref.get(id),
                                        &mut scratch,
                                        &mut tmp,
                                        &mut locals,
                                        &mut out_words,
                                        &mut out_refs,
                                    ) {
                                        Ok(()) => {
                                            chunk_results.push(Ok((id, out_words, out_refs)))
                                        }
                                        Err(e) => chunk_results.push(Err(e)),
                                    }
                                }
                                chunk_results
                            })
                            .flatten_iter()
                            .collect()
                    });
                for batch in batches {
                    let (source_id, out_words, out_refs) = batch?;
                    merge!(source_id, out_words, out_refs);
                }
            }
        }
        level_start = level_end;
        // The cap is checked at level boundaries so that capped partial
        // counts are also identical across thread counts.
        if set.len() as u64 >= opts.state_cap {
            stats.capped = true;
        }
    }

    stats.states = set.len() as u64;
    stats.store_bytes = set.memory_bytes();
    stats.time_ms = start.elapsed().as_millis() as u64;
    Ok(SearchResult {
        stats,
        matched,
        set,
        parents,
    })
}

pub(crate) fn reconstruct_trace(
    result: &SearchResult,
    target: u32,
) -> Vec<(u32, EdgeRef)> {
    let parents = result
        .parents
        .as_ref()
        .expect("trace requested without parents");
    let mut steps = Vec::new();
    let mut current = target;
    while current != 0 {
        let (parent, edge_ref) = parents[current as usize];
        steps.push((parent, edge_ref));
        current = parent;
    }
    steps.reverse();
    steps
}

/// Decoded scratch reused by predicate closures.
pub(crate) fn eval_predicate(
    runtime: &Runtime,
    compiled: &super::compile::Compiled,
    words: &[u64],
) -> Result<bool, CheckError> {
    let mut scratch: Scratch = runtime.new_scratch();
    runtime
        .layout
        .unpack(words, &mut scratch.locations, &mut scratch.vars);
    let mut locals = Vec::new();
    super::compile::eval_compiled(
        compiled,
        &runtime.symbols,
        &scratch.locations,
        &scratch.vars,
        &mut locals,
    )
    .map(|v| v != 0)
    .map_err(|source| CheckError::Eval {
        context: "property".to_string(),
        source,
    })
}
