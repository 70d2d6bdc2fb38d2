//! Executable form of a model: instantiated agents with compiled,
//! select-expanded edges over a packed state layout.

use std::collections::BTreeMap;

use super::compile::{eval_compiled, Compiled, Symbols, TemplateInfo};
use super::layout::StateLayout;
use super::CheckError;
use crate::model::{expand_selects, MasTemplate, SyncDir};
use crate::unfold;

pub(crate) struct RtEdge {
    pub target: u32,
    pub guard: Compiled,
    pub updates: Vec<(u32, Compiled)>,
    pub label: String,
}

pub(crate) struct RtAgent {
    pub display: String,
    pub locations: Vec<String>,
    pub initial: u32,
    /// Per source location.
    pub internal: Vec<Vec<RtEdge>>,
    /// Per source location, with the channel id each edge synchronizes on.
    pub sends: Vec<Vec<(u32, RtEdge)>>,
    pub receives: Vec<Vec<(u32, RtEdge)>>,
}

/// Identifies one global transition for traces and replay: an agent edge,
/// optionally paired with a complementary receive in another agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeRef {
    pub agent: u16,
    pub source: u16,
    pub edge: u16,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Internal,
    Sync {
        partner: u16,
        partner_source: u16,
        partner_edge: u16,
    },
}

/// Reusable unpacking buffers for successor generation.
pub(crate) struct Scratch {
    pub locations: Vec<u32>,
    pub vars: Vec<i64>,
}

pub struct Runtime {
    pub(crate) layout: StateLayout,
    pub(crate) symbols: Symbols,
    pub(crate) agents: Vec<RtAgent>,
    pub(crate) var_names: Vec<String>,
    pub(crate) var_ranges: Vec<(i64, i64)>,
    pub(crate) var_initials: Vec<i64>,
}

impl Runtime {
    /// Instantiate, expand selects, resolve names to slots, and lay out the
    /// packed state encoding.
    pub fn from_model(model: &MasTemplate) -> Result<Runtime, CheckError> {
        let instances = unfold::instantiate(model)?;

        let mut var_names: Vec<String> = Vec::new();
        let mut var_ranges: Vec<(i64, i64)> = Vec::new();
        let mut var_initials: Vec<i64> = Vec::new();
        for decl in &model.globals {
            var_names.push(decl.name.clone());
            var_ranges.push(decl.range());
            var_initials.push(decl.initial);
        }
        let mut private_base = Vec::new();
        for instance in &instances {
            private_base.push(var_names.len() as u32);
            for decl in &instance.graph.privates {
                var_names.push(decl.name.clone());
                var_ranges.push(decl.range());
                var_initials.push(decl.initial);
            }
        }
        let var_slots: BTreeMap<String, u32> = var_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();

        let mut templates: BTreeMap<String, TemplateInfo> = BTreeMap::new();
        for template in &model.templates {
            let agent_start = instances
                .iter()
                .position(|a| a.template == template.graph.name)
                .expect("instantiated template") as u32;
            templates.insert(
                template.graph.name.clone(),
                TemplateInfo {
                    agent_start,
                    count: template.count,
                    locations: template.graph.locations.clone(),
                    private_offsets: template
                        .graph
                        .privates
                        .iter()
                        .enumerate()
                        .map(|(i, v)| (v.name.clone(), i as u32))
                        .collect(),
                },
            );
        }
        let symbols = Symbols {
            var_slots,
            templates,
            private_base,
        };

        let channel_id: BTreeMap<&str, u32> = model
            .channels
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i as u32))
            .collect();

        let mut agents = Vec::new();
        for instance in &instances {
            let graph = &instance.graph;
            let loc_index: BTreeMap<&str, u32> = graph
                .locations
                .iter()
                .enumerate()
                .map(|(i, l)| (l.as_str(), i as u32))
                .collect();
            let n = graph.locations.len();
            let mut internal = Vec::with_capacity(n);
            let mut sends = Vec::with_capacity(n);
            let mut receives = Vec::with_capacity(n);
            internal.resize_with(n, Vec::new);
            sends.resize_with(n, Vec::new);
            receives.resize_with(n, Vec::new);

            for edge in &graph.edges {
                for flat in expand_selects(edge)? {
                    let compile_ctx = |e: &crate::model::Expr| {
                        symbols.compile(e).map_err(|source| CheckError::Compile {
                            context: format!(
                                "{}: edge {} -> {}",
                                instance.display, flat.source, flat.target
                            ),
                            source,
                        })
                    };
                    let guard = compile_ctx(&flat.guard)?;
                    let mut updates = Vec::with_capacity(flat.updates.len());
                    for update in &flat.updates {
                        let slot = *symbols.var_slots.get(&update.target).ok_or_else(|| {
                            CheckError::Compile {
                                context: format!("{}: update target", instance.display),
                                source: super::compile::CompileError::Unbound(
                                    update.target.clone(),
                                ),
                            }
                        })?;
                        updates.push((slot, compile_ctx(&update.value)?));
                    }
                    let mut label = format!("{}: {} -> {}", instance.display, flat.source, flat.target);
                    if let Some(sync) = &flat.sync {
                        label.push_str(&format!(" {sync}"));
                    }
                    if !flat.updates.is_empty() {
                        let rendered: Vec<String> =
                            flat.updates.iter().map(|u| u.to_string()).collect();
                        label.push_str(&format!(" {{{}}}", rendered.join(", ")));
                    }
                    let rt_edge = RtEdge {
                        target: loc_index[flat.target.as_str()],
                        guard,
                        updates,
                        label,
                    };
                    let src = loc_index[flat.source.as_str()] as usize;
                    match &flat.sync {
                        None => internal[src].push(rt_edge),
                        Some(sync) => {
                            let chan = channel_id[sync.channel.as_str()];
                            match sync.dir {
                                SyncDir::Send => sends[src].push((chan, rt_edge)),
                                SyncDir::Receive => receives[src].push((chan, rt_edge)),
                            }
                        }
                    }
                }
            }

            agents.push(RtAgent {
                display: instance.display.clone(),
                locations: graph.locations.clone(),
                initial: loc_index[graph.initial.as_str()],
                internal,
                sends,
                receives,
            });
        }

        let layout = StateLayout::new(
            &agents
                .iter()
                .map(|a| a.locations.len() as u32)
                .collect::<Vec<_>>(),
            &var_ranges,
        );

        Ok(Runtime {
            layout,
            symbols,
            agents,
            var_names,
            var_ranges,
            var_initials,
        })
    }

    pub fn words_per_state(&self) -> usize {
        self.layout.words
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub(crate) fn new_scratch(&self) -> Scratch {
        Scratch {
            locations: vec![0; self.agents.len()],
            vars: vec![0; self.var_names.len()],
        }
    }

    pub fn initial_state(&self) -> Vec<u64> {
        let locations: Vec<u32> = self.agents.iter().map(|a| a.initial).collect();
        let mut words = vec![0u64; self.layout.words];
        self.layout.pack(&locations, &self.var_initials, &mut words);
        words
    }

    /// Enumerate successors of a packed state in canonical order: agents by
    /// index, internal edges first, then sends paired with every matching
    /// receive of every other agent. Successor words are appended flat to
    /// `out_words` (`layout.words` per successor) to avoid per-edge
    /// allocation; `out_refs` records the edge taken.
    pub(crate) fn successors(
        &self,
        words: &[u64],
        scratch: &mut Scratch,
        tmp_vars: &mut Vec<i64>,
        locals: &mut Vec<i64>,
        out_words: &mut Vec<u64>,
        out_refs: &mut Vec<EdgeRef>,
    ) -> Result<(), CheckError> {
        self.layout
            .unpack(words, &mut scratch.locations, &mut scratch.vars);
        let w = self.layout.words;

        for a in 0..self.agents.len() {
            let src = scratch.locations[a] as usize;
            for (e, edge) in self.agents[a].internal[src].iter().enumerate() {
                let enabled = self.eval_guard(
                    &edge.guard,
                    &scratch.locations,
                    &scratch.vars,
                    locals,
                    &edge.label,
                )?;
                if !enabled {
                    continue;
                }
                tmp_vars.clone_from(&scratch.vars);
                if !self.apply_updates(&edge.updates, &scratch.locations, tmp_vars, locals, &edge.label)? {
                    continue;
                }
                let old_loc = scratch.locations[a];
                scratch.locations[a] = edge.target;
                let at = out_words.len();
                out_words.resize(at + w, 0);
                self.layout.pack(&scratch.locations, tmp_vars, &mut out_words[at..]);
                scratch.locations[a] = old_loc;
                out_refs.push(EdgeRef {
                    agent: a as u16,
                    source: src as u16,
                    edge: e as u16,
                    kind: EdgeKind::Internal,
                });
            }

            for (se, (chan, send)) in self.agents[a].sends[src].iter().enumerate() {
                let send_enabled = self.eval_guard(
                    &send.guard,
                    &scratch.locations,
                    &scratch.vars,
                    locals,
                    &send.label,
                )?;
                if !send_enabled {
                    continue;
                }
                for b in 0..self.agents.len() {
                    if b == a {
                        continue;
                    }
                    let partner_src = scratch.locations[b] as usize;
                    for (re, (rchan, recv)) in
                        self.agents[b].receives[partner_src].iter().enumerate()
                    {
                        if rchan != chan {
                            continue;
                        }
                        let recv_enabled = self.eval_guard(
                            &recv.guard,
                            &scratch.locations,
                            &scratch.vars,
                            locals,
                            &recv.label,
                        )?;
                        if !recv_enabled {
                            continue;
                        }
                        tmp_vars.clone_from(&scratch.vars);
                        let applied = self.apply_updates(
                            &send.updates,
                            &scratch.locations,
                            tmp_vars,
                            locals,
                            &send.label,
                        )? && self.apply_updates(
                            &recv.updates,
                            &scratch.locations,
                            tmp_vars,
                            locals,
                            &recv.label,
                        )?;
                        if !applied {
                            continue;
                        }
                        let (old_a, old_b) = (scratch.locations[a], scratch.locations[b]);
                        scratch.locations[a] = send.target;
                        scratch.locations[b] = recv.target;
                        let at = out_words.len();
                        out_words.resize(at + w, 0);
                        self.layout.pack(&scratch.locations, tmp_vars, &mut out_words[at..]);
                        scratch.locations[a] = old_a;
                        scratch.locations[b] = old_b;
                        out_refs.push(EdgeRef {
                            agent: a as u16,
                            source: src as u16,
                            edge: se as u16,
                            kind: EdgeKind::Sync {
                                partner: b as u16,
                                partner_source: partner_src as u16,
                                partner_edge: re as u16,
                            },
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn eval_guard(
        &self,
        guard: &Compiled,
        locations: &[u32],
        vars: &[i64],
        locals: &mut Vec<i64>,
        label: &str,
    ) -> Result<bool, CheckError> {
        match eval_compiled(guard, &self.symbols, locations, vars, locals) {
            Ok(v) => Ok(v != 0),
            Err(source) => Err(CheckError::Eval {
                context: label.to_string(),
                source,
            }),
        }
    }

    /// Apply updates into `tmp_vars`; later updates see earlier results.
    /// Returns false when a result leaves the target's declared range (the
    /// edge is disabled).
    fn apply_updates(
        &self,
        updates: &[(u32, Compiled)],
        locations: &[u32],
        tmp_vars: &mut [i64],
        locals: &mut Vec<i64>,
        label: &str,
    ) -> Result<bool, CheckError> {
        for (slot, value) in updates {
            let result = eval_compiled(value, &self.symbols, locations, tmp_vars, locals)
                .map_err(|source| CheckError::Eval {
                    context: label.to_string(),
                    source,
                })?;
            let (lo, hi) = self.var_ranges[*slot as usize];
            if result < lo || result > hi {
                return Ok(false);
            }
            tmp_vars[*slot as usize] = result;
        }
        Ok(true)
    }

    pub(crate) fn edge(&self, edge_ref: &EdgeRef) -> (&RtEdge, Option<&RtEdge>) {
        let agent = &self.agents[edge_ref.agent as usize];
        match edge_ref.kind {
            EdgeKind::Internal => (
                &agent.internal[edge_ref.source as usize][edge_ref.edge as usize],
                None,
            ),
            EdgeKind::Sync {
                partner,
                partner_source,
                partner_edge,
            } => {
                let send = &agent.sends[edge_ref.source as usize][edge_ref.edge as usize].1;
                let recv = &self.agents[partner as usize].receives[partner_source as usize]
                    [partner_edge as usize]
                    .1;
                (send, Some(recv))
            }
        }
    }

    pub fn edge_label(&self, edge_ref: &EdgeRef) -> String {
        let (edge, partner) = self.edge(edge_ref);
        match partner {
            None => edge.label.clone(),
            Some(recv) => format!("{} || {}", edge.label, recv.label),
        }
    }

    /// Resolve a user-facing variable name to its slot; see
    /// [`Symbols::resolve_display`].
    pub fn resolve_variable(&self, name: &str) -> Option<u32> {
        self.symbols.resolve_display(name)
    }

    /// All successor states of a packed state, in canonical order. Intended
    /// for desk-scale enumeration; the exploration loop uses the buffer-based
    /// path instead.
    pub fn successor_states(&self, words: &[u64]) -> Result<Vec<Vec<u64>>, CheckError> {
        let mut scratch = self.new_scratch();
        let mut tmp = Vec::new();
        let mut locals = Vec::new();
        let mut out_words = Vec::new();
        let mut out_refs = Vec::new();
        self.successors(
            words,
            &mut scratch,
            &mut tmp,
            &mut locals,
            &mut out_words,
            &mut out_refs,
        )?;
        let w = self.layout.words;
        Ok((0..out_refs.len())
            .map(|i| out_words[i * w..(i + 1) * w].to_vec())
            .collect())
    }

    /// Re-apply one recorded edge to a packed state; used to replay traces.
    pub fn apply_edge(
        &self,
        words: &[u64],
        edge_ref: &EdgeRef,
    ) -> Result<Option<Vec<u64>>, CheckError> {
        let mut scratch = self.new_scratch();
        let mut tmp = Vec::new();
        let mut locals = Vec::new();
        let mut out_words = Vec::new();
        let mut out_refs = Vec::new();
        self.successors(words, &mut scratch, &mut tmp, &mut locals, &mut out_words, &mut out_refs)?;
        let w = self.layout.words;
        Ok(out_refs
            .iter()
            .position(|r| r == edge_ref)
            .map(|i| out_words[i * w..(i + 1) * w].to_vec()))
    }

    /// Human-readable view of a packed state.
    pub fn decode(&self, words: &[u64]) -> (Vec<String>, BTreeMap<String, i64>) {
        let mut locations = vec![0u32; self.agents.len()];
        let mut vars = vec![0i64; self.var_names.len()];
        self.layout.unpack(words, &mut locations, &mut vars);
        let locs = self
            .agents
            .iter()
            .zip(&locations)
            .map(|(a, &l)| format!("{}.{}", a.display, a.locations[l as usize]))
            .collect();
        let values = self
            .var_names
            .iter()
            .cloned()
            .zip(vars.iter().copied())
            .collect();
        (locs, values)
    }

    /// Tree-evaluator view of a packed state, for differential testing and
    /// property checks outside the hot path.
    pub fn env_view<'a>(&'a self, words: &'a [u64]) -> StateEnv<'a> {
        let mut locations = vec![0u32; self.agents.len()];
        let mut vars = vec![0i64; self.var_names.len()];
        self.layout.unpack(words, &mut locations, &mut vars);
        StateEnv {
            runtime: self,
            locations,
            vars,
        }
    }
}

/// `model::Env` implementation over a decoded state.
pub struct StateEnv<'a> {
    runtime: &'a Runtime,
    locations: Vec<u32>,
    vars: Vec<i64>,
}

impl crate::model::Env for StateEnv<'_> {
    fn var(&self, name: &str) -> Option<i64> {
        self.runtime
            .symbols
            .var_slots
            .get(name)
            .map(|&slot| self.vars[slot as usize])
    }

    fn instance_var(&self, template: &str, index: i64, field: &str) -> Option<i64> {
        let info = self.runtime.symbols.templates.get(template)?;
        if index < 1 || index > info.count as i64 {
            return None;
        }
        let offset = *info.private_offsets.get(field)?;
        let agent = info.agent_start as usize + index as usize - 1;
        let slot = self.runtime.symbols.private_base[agent] + offset;
        Some(self.vars[slot as usize])
    }

    fn instance_at(&self, template: &str, index: i64, location: &str) -> Option<bool> {
        let info = self.runtime.symbols.templates.get(template)?;
        if index < 1 || index > info.count as i64 {
            return None;
        }
        let loc = info.locations.iter().position(|l| l == location)? as u32;
        let agent = info.agent_start as usize + index as usize - 1;
        Some(self.locations[agent] == loc)
    }
}
