//! Instantiation of templates into concrete agents and construction of the
//! combined graph: the asynchronous product of all agents with channel
//! handshakes resolved into joint edges.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::model::{
    expand_selects, AgentGraph, Edge, Expr, MasTemplate, ModelError, Sync, SyncDir, Template,
    Update, VarDecl, VarKind, ID_NAME,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UnfoldError {
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One concrete agent produced from a template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentInstance {
    pub template: String,
    /// 1-based instance index; the value of the implicit `id` constant.
    pub index: u32,
    /// `Name(i)`, or just `Name` for single-instance templates.
    pub display: String,
    /// Graph with privates renamed to their qualified display names and
    /// `id` substituted by the instance index.
    pub graph: AgentGraph,
}

pub fn instance_display(template: &str, index: u32, count: u32) -> String {
    if count == 1 {
        template.to_string()
    } else {
        format!("{template}({index})")
    }
}

pub fn qualified_var(display: &str, var: &str) -> String {
    format!("{display}.{var}")
}

/// Instantiate every template `count` times. Instances differ only in the
/// value of `id` and in the qualified names of their privates.
pub fn instantiate(model: &MasTemplate) -> Result<Vec<AgentInstance>, UnfoldError> {
    model.validate()?;
    let mut agents = Vec::new();
    for Template { graph, count } in &model.templates {
        for index in 1..=*count {
            let display = instance_display(&graph.name, index, *count);
            agents.push(AgentInstance {
                template: graph.name.clone(),
                index,
                display: display.clone(),
                graph: qualify_graph(graph, &display, index),
            });
        }
    }
    Ok(agents)
}

fn qualify_graph(graph: &AgentGraph, display: &str, index: u32) -> AgentGraph {
    let rename: BTreeMap<String, String> = graph
        .privates
        .iter()
        .map(|v| (v.name.clone(), qualified_var(display, &v.name)))
        .collect();
    let subst = |name: &str| {
        if name == ID_NAME {
            Some(Expr::Lit(index as i64))
        } else {
            rename.get(name).map(|q| Expr::Var(q.clone()))
        }
    };

    AgentGraph {
        name: display.to_string(),
        locations: graph.locations.clone(),
        initial: graph.initial.clone(),
        privates: graph
            .privates
            .iter()
            .map(|v| VarDecl {
                name: rename[&v.name].clone(),
                ..v.clone()
            })
            .collect(),
        edges: graph
            .edges
            .iter()
            .map(|e| Edge {
                source: e.source.clone(),
                target: e.target.clone(),
                selects: e.selects.clone(),
                guard: e.guard.substitute(&subst),
                sync: e.sync.clone(),
                updates: e
                    .updates
                    .iter()
                    .map(|u| Update {
                        target: rename.get(&u.target).cloned().unwrap_or_else(|| u.target.clone()),
                        value: u.value.substitute(&subst),
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// The asynchronous product: locations are tuples of agent locations, all
/// synchronization resolved into joint edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CombinedGraph {
    pub agents: Vec<AgentMeta>,
    /// Globals first, then each agent's qualified privates in agent order.
    pub variables: Vec<VarDecl>,
    /// Structurally reachable location vectors, sorted.
    pub locations: Vec<Vec<u32>>,
    pub initial: Vec<u32>,
    pub edges: Vec<CombinedEdge>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentMeta {
    pub template: String,
    pub index: u32,
    pub display: String,
    pub locations: Vec<String>,
    pub initial: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CombinedEdge {
    pub source: Vec<u32>,
    pub target: Vec<u32>,
    pub guard: Expr,
    pub updates: Vec<Update>,
}

impl CombinedGraph {
    pub fn location_name(&self, vector: &[u32]) -> String {
        vector
            .iter()
            .enumerate()
            .map(|(a, &l)| self.agents[a].locations[l as usize].as_str())
            .collect::<Vec<_>>()
            .join(".")
    }
}

struct ExpandedAgent {
    meta: AgentMeta,
    /// Per source location: select-expanded internal edges.
    internal: Vec<Vec<Edge>>,
    /// Per source location: select-expanded synchronizing edges.
    sync: Vec<Vec<Edge>>,
}

/// Build the combined graph of a set of agents. Select labels are expanded
/// first; only combined locations structurally reachable from the initial
/// vector (ignoring guards) are emitted. Edge order is canonical.
pub fn combine(
    agents: &[AgentInstance],
    globals: &[VarDecl],
) -> Result<CombinedGraph, UnfoldError> {
    let mut expanded = Vec::new();
    for agent in agents {
        let n_locs = agent.graph.locations.len();
        let loc_index: BTreeMap<&str, u32> = agent
            .graph
            .locations
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i as u32))
            .collect();
        let mut internal = vec![Vec::new(); n_locs];
        let mut sync = vec![Vec::new(); n_locs];
        for edge in &agent.graph.edges {
            for flat in expand_selects(edge)? {
                let src = loc_index[flat.source.as_str()] as usize;
                if flat.sync.is_some() {
                    sync[src].push(flat);
                } else {
                    internal[src].push(flat);
                }
            }
        }
        expanded.push(ExpandedAgent {
            meta: AgentMeta {
                template: agent.template.clone(),
                index: agent.index,
                display: agent.display.clone(),
                locations: agent.graph.locations.clone(),
                initial: loc_index[agent.graph.initial.as_str()],
            },
            internal,
            sync,
        });
    }

    let mut warnings = Vec::new();
    check_partnerless(&expanded, &mut warnings);

    let initial: Vec<u32> = expanded.iter().map(|a| a.meta.initial).collect();
    let mut visited: BTreeSet<Vec<u32>> = BTreeSet::new();
    visited.insert(initial.clone());
    let mut queue: VecDeque<Vec<u32>> = VecDeque::new();
    queue.push_back(initial.clone());
    let mut edges = Vec::new();

    while let Some(loc) = queue.pop_front() {
        let push = |edges: &mut Vec<CombinedEdge>,
                        visited: &mut BTreeSet<Vec<u32>>,
                        queue: &mut VecDeque<Vec<u32>>,
                        target: Vec<u32>,
                        guard: Expr,
                        updates: Vec<Update>| {
            if visited.insert(target.clone()) {
                queue.push_back(target.clone());
            }
            edges.push(CombinedEdge {
                source: loc.clone(),
                target,
                guard,
                updates,
            });
        };

        for (a, agent) in expanded.iter().enumerate() {
            let src = loc[a] as usize;
            for edge in &agent.internal[src] {
                let mut target = loc.clone();
                target[a] = agent.loc_index(&edge.target);
                push(
                    &mut edges,
                    &mut visited,
                    &mut queue,
                    target,
                    edge.guard.clone(),
                    edge.updates.clone(),
                );
            }
            for send in &agent.sync[src] {
                let Some(Sync { channel, dir }) = &send.sync else {
                    continue;
                };
                if *dir != SyncDir::Send {
                    continue;
                }
                for (b, partner) in expanded.iter().enumerate() {
                    if b == a {
                        continue;
                    }
                    for recv in &partner.sync[loc[b] as usize] {
                        let matches = matches!(
                            &recv.sync,
                            Some(Sync { channel: c, dir: SyncDir::Receive }) if c == channel
                        );
                        if !matches {
                            continue;
                        }
                        let mut target = loc.clone();
                        target[a] = agent.loc_index(&send.target);
                        target[b] = partner.loc_index(&recv.target);
                        let guard = Expr::and(send.guard.clone(), recv.guard.clone());
                        let mut updates = send.updates.clone();
                        updates.extend(recv.updates.iter().cloned());
                        push(&mut edges, &mut visited, &mut queue, target, guard, updates);
                    }
                }
            }
        }
    }

    edges.sort();
    let mut variables: Vec<VarDecl> = globals.to_vec();
    for agent in agents {
        variables.extend(agent.graph.privates.iter().cloned());
    }

    Ok(CombinedGraph {
        agents: expanded.into_iter().map(|a| a.meta).collect(),
        variables,
        locations: visited.into_iter().collect(),
        initial,
        edges,
        warnings,
    })
}

impl ExpandedAgent {
    fn loc_index(&self, name: &str) -> u32 {
        self.meta
            .locations
            .iter()
            .position(|l| l == name)
            .expect("validated location") as u32
    }
}

fn check_partnerless(agents: &[ExpandedAgent], warnings: &mut Vec<String>) {
    let mut senders: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    let mut receivers: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for (i, agent) in agents.iter().enumerate() {
        for edge in agent.sync.iter().flatten() {
            let Some(sync) = &edge.sync else { continue };
            match sync.dir {
                SyncDir::Send => senders.entry(&sync.channel).or_default().insert(i),
                SyncDir::Receive => receivers.entry(&sync.channel).or_default().insert(i),
            };
        }
    }
    for (i, agent) in agents.iter().enumerate() {
        for edge in agent.sync.iter().flatten() {
            let Some(sync) = &edge.sync else { continue };
            let partners = match sync.dir {
                SyncDir::Send => &receivers,
                SyncDir::Receive => &senders,
            };
            let has_partner = partners
                .get(sync.channel.as_str())
                .is_some_and(|set| set.iter().any(|&j| j != i));
            if !has_partner {
                let warning = format!(
                    "{}: edge {} -> {} synchronizes on `{}` but no other agent has a complementary edge; it can never fire",
                    agent.meta.display, edge.source, edge.target, sync
                );
                if !warnings.contains(&warning) {
                    warnings.push(warning);
                }
            }
        }
    }
}

/// Instantiate and combine in one step.
pub fn unfold_model(model: &MasTemplate) -> Result<CombinedGraph, UnfoldError> {
    let agents = instantiate(model)?;
    combine(&agents, &model.globals)
}

/// Name used for the single template of an unfolded model file.
pub const COMBINED_TEMPLATE_NAME: &str = "Combined";

/// Lower a combined graph to a single-template model in the same format:
/// dot-joined location names, qualified variable names as template privates,
/// no channels, no sync labels.
pub fn to_single_template(combined: &CombinedGraph, model: &MasTemplate) -> MasTemplate {
    let locations: Vec<String> = combined
        .locations
        .iter()
        .map(|v| combined.location_name(v))
        .collect();
    let edges = combined
        .edges
        .iter()
        .map(|e| Edge {
            source: combined.location_name(&e.source),
            target: combined.location_name(&e.target),
            selects: Vec::new(),
            guard: e.guard.clone(),
            sync: None,
            updates: e.updates.clone(),
        })
        .collect();
    let n_globals = model.globals.len();
    let privates = combined.variables[n_globals..]
        .iter()
        .map(|v| VarDecl {
            kind: VarKind::Private,
            ..v.clone()
        })
        .collect();

    MasTemplate {
        templates: vec![Template {
            graph: AgentGraph {
                name: COMBINED_TEMPLATE_NAME.to_string(),
                locations,
                initial: combined.location_name(&combined.initial),
                privates,
                edges,
            },
            count: 1,
        }],
        globals: model.globals.clone(),
        channels: Vec::new(),
        constants: model.constants.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::text::parse_expression;
    use crate::model::Template;

    fn two_loc_graph(name: &str, with_var: bool) -> AgentGraph {
        AgentGraph {
            name: name.into(),
            locations: vec!["a".into(), "b".into()],
            initial: "a".into(),
            privates: if with_var {
                vec![VarDecl::new("x", 0, 3, 0, VarKind::Private)]
            } else {
                vec![]
            },
            edges: vec![Edge::internal("a", "b")],
        }
    }

    #[test]
    fn instantiate_three_voters() {
        let model = MasTemplate {
            templates: vec![Template {
                graph: two_loc_graph("Voter", true),
                count: 3,
            }],
            ..Default::default()
        };
        let agents = instantiate(&model).unwrap();
        assert_eq!(agents.len(), 3);
        assert_eq!(agents[0].display, "Voter(1)");
        assert_eq!(agents[2].display, "Voter(3)");
        assert_eq!(agents[1].graph.privates[0].name, "Voter(2).x");
        // instances identical up to names and id
        assert_eq!(agents[0].graph.locations, agents[1].graph.locations);
        assert_eq!(agents[0].graph.edges.len(), agents[1].graph.edges.len());
    }

    #[test]
    fn instantiate_single_keeps_name() {
        let model = MasTemplate {
            templates: vec![Template {
                graph: two_loc_graph("Authority", true),
                count: 1,
            }],
            ..Default::default()
        };
        let agents = instantiate(&model).unwrap();
        assert_eq!(agents[0].display, "Authority");
        assert_eq!(agents[0].graph.privates[0].name, "Authority.x");
    }

    #[test]
    fn instantiate_substitutes_id() {
        let mut graph = two_loc_graph("A", false);
        graph.edges[0].guard = parse_expression("id==2").unwrap();
        let model = MasTemplate {
            templates: vec![Template { graph, count: 2 }],
            ..Default::default()
        };
        let agents = instantiate(&model).unwrap();
        assert_eq!(agents[0].graph.edges[0].guard, parse_expression("1==2").unwrap());
        assert_eq!(agents[1].graph.edges[0].guard, parse_expression("2==2").unwrap());
    }

    #[test]
    fn combine_two_agents_no_channels() {
        let model = MasTemplate {
            templates: vec![
                Template {
                    graph: two_loc_graph("A", false),
                    count: 1,
                },
                Template {
                    graph: two_loc_graph("B", false),
                    count: 1,
                },
            ],
            ..Default::default()
        };
        let combined = unfold_model(&model).unwrap();
        assert_eq!(combined.locations.len(), 4);
        // brute-force product: each agent's single edge lifted at both
        // co-locations of the other agent = 2 + 2 edges
        assert_eq!(combined.edges.len(), 4);
        assert!(combined.warnings.is_empty());
    }

    #[test]
    fn combine_pairs_send_with_each_receiver() {
        let sender = AgentGraph {
            name: "S".into(),
            locations: vec!["s0".into(), "s1".into()],
            initial: "s0".into(),
            privates: vec![],
            edges: vec![Edge::internal("s0", "s1").with_sync("c", SyncDir::Send)],
        };
        let receiver = AgentGraph {
            name: "R".into(),
            locations: vec!["r0".into(), "r1".into(), "r2".into()],
            initial: "r0".into(),
            privates: vec![],
            edges: vec![
                Edge::internal("r0", "r1").with_sync("c", SyncDir::Receive),
                Edge::internal("r0", "r2").with_sync("c", SyncDir::Receive),
            ],
        };
        let model = MasTemplate {
            templates: vec![
                Template { graph: sender, count: 1 },
                Template { graph: receiver, count: 1 },
            ],
            channels: vec!["c".into()],
            ..Default::default()
        };
        let combined = unfold_model(&model).unwrap();
        assert_eq!(combined.edges.len(), 2);
        assert!(combined.warnings.is_empty());
    }

    #[test]
    fn combine_single_agent_is_isomorphic() {
        let graph = AgentGraph {
            name: "A".into(),
            locations: vec!["a".into(), "b".into(), "c".into()],
            initial: "a".into(),
            privates: vec![VarDecl::new("x", 0, 1, 0, VarKind::Private)],
            edges: vec![
                Edge::internal("a", "b").with_update("x", Expr::Lit(1)),
                Edge::internal("b", "c").with_guard(parse_expression("x==1").unwrap()),
            ],
        };
        let model = MasTemplate {
            templates: vec![Template { graph: graph.clone(), count: 1 }],
            ..Default::default()
        };
        let combined = unfold_model(&model).unwrap();
        assert_eq!(combined.locations.len(), graph.locations.len());
        assert_eq!(combined.edges.len(), graph.edges.len());
        let single = to_single_template(&combined, &model);
        let lowered = &single.templates[0].graph;
        assert_eq!(lowered.locations.len(), 3);
        assert_eq!(lowered.initial, "a");
        assert_eq!(lowered.edges.len(), 2);
    }

    #[test]
    fn partnerless_send_warns() {
        let graph = AgentGraph {
            name: "A".into(),
            locations: vec!["a".into(), "b".into()],
            initial: "a".into(),
            privates: vec![],
            edges: vec![Edge::internal("a", "b").with_sync("c", SyncDir::Send)],
        };
        let model = MasTemplate {
            templates: vec![Template { graph, count: 1 }],
            channels: vec!["c".into()],
            ..Default::default()
        };
        let combined = unfold_model(&model).unwrap();
        assert_eq!(combined.warnings.len(), 1);
        assert!(combined.warnings[0].contains("c"));
        assert!(combined.edges.is_empty());
    }

    #[test]
    fn structurally_unreachable_locations_pruned() {
        let graph = AgentGraph {
            name: "A".into(),
            locations: vec!["a".into(), "b".into(), "dead".into()],
            initial: "a".into(),
            privates: vec![],
            edges: vec![
                Edge::internal("a", "b"),
                Edge::internal("dead", "a"),
            ],
        };
        let model = MasTemplate {
            templates: vec![Template { graph, count: 1 }],
            ..Default::default()
        };
        let combined = unfold_model(&model).unwrap();
        assert_eq!(combined.locations.len(), 2);
    }

    #[test]
    fn self_synchronization_disallowed() {
        // one instance has both ends of a channel: it must not pair with itself
        let graph = AgentGraph {
            name: "A".into(),
            locations: vec!["a".into(), "b".into()],
            initial: "a".into(),
            privates: vec![],
            edges: vec![
                Edge::internal("a", "b").with_sync("c", SyncDir::Send),
                Edge::internal("a", "b").with_sync("c", SyncDir::Receive),
            ],
        };
        let model = MasTemplate {
            templates: vec![Template { graph: graph.clone(), count: 1 }],
            channels: vec!["c".into()],
            ..Default::default()
        };
        let combined = unfold_model(&model).unwrap();
        assert!(combined.edges.is_empty());

        // with two instances the cross pairings exist: send(1)+recv(2), send(2)+recv(1)
        let model2 = MasTemplate {
            templates: vec![Template { graph, count: 2 }],
            channels: vec!["c".into()],
            ..Default::default()
        };
        let combined2 = unfold_model(&model2).unwrap();
        assert_eq!(combined2.edges.len(), 2);
    }
}
