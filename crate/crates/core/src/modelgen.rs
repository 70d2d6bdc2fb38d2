//! Seeded random generation of small well-formed models, used to exercise
//! the soundness properties of the approximation and abstraction pipeline
//! against the exact checker at desk scale.
//!
//! Generated models avoid division and keep every literal small, so
//! evaluation never faults; guards, selects, handshakes, disabled updates,
//! and dead locations all occur naturally across seeds.

use crate::model::{
    AgentGraph, BinaryOp, Edge, Expr, MasTemplate, SyncDir, Template, VarDecl, VarKind,
};

/// SplitMix64: tiny, fully deterministic, stable across releases.
#[derive(Debug, Clone)]
pub struct Rng(u64);

impl Rng {
    pub fn new(seed: u64) -> Rng {
        Rng(seed.wrapping_add(0x9e3779b97f4a7c15))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in `0..n` (n > 0).
    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }

    pub fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.below(items.len() as u64) as usize]
    }

    pub fn chance(&mut self, percent: u64) -> bool {
        self.below(100) < percent
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GenParams {
    pub max_templates: u32,
    pub max_total_agents: u32,
    pub max_locations: u32,
    /// Total variable count across globals and all templates.
    pub max_variables: u32,
    /// Values per variable domain.
    pub max_domain: u32,
    pub max_channels: u32,
    pub max_edges_per_template: u32,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            max_templates: 2,
            max_total_agents: 3,
            max_locations: 4,
            max_variables: 2,
            max_domain: 4,
            max_channels: 2,
            max_edges_per_template: 5,
        }
    }
}

/// Generate one structurally valid model from a seed.
pub fn generate(seed: u64, params: &GenParams) -> MasTemplate {
    let mut rng = Rng::new(seed);

    let n_templates = 1 + rng.below(params.max_templates as u64) as u32;
    let n_channels = rng.below(params.max_channels as u64 + 1) as u32;
    let channels: Vec<String> = (0..n_channels).map(|i| format!("c{i}")).collect();

    // distribute instance counts, total at most max_total_agents
    let mut counts = vec![1u32; n_templates as usize];
    let mut budget = params.max_total_agents.saturating_sub(n_templates);
    for count in counts.iter_mut() {
        if budget > 0 && rng.chance(50) {
            let extra = 1 + rng.below(budget as u64) as u32;
            *count += extra;
            budget -= extra;
        }
    }

    // variables: each either global or private to one template
    let n_vars = 1 + rng.below(params.max_variables as u64) as u32;
    let mut globals = Vec::new();
    let mut privates: Vec<Vec<VarDecl>> = vec![Vec::new(); n_templates as usize];
    for v in 0..n_vars {
        let hi = rng.below(params.max_domain as u64) as i64;
        let initial = rng.below(hi as u64 + 1) as i64;
        if rng.chance(50) {
            globals.push(VarDecl::new(format!("g{v}"), 0, hi, initial, VarKind::Global));
        } else {
            let owner = rng.below(n_templates as u64) as usize;
            privates[owner].push(VarDecl::new(
                format!("p{v}"),
                0,
                hi,
                initial,
                VarKind::Private,
            ));
        }
    }

    let mut templates = Vec::new();
    for t in 0..n_templates {
        let n_locations = 1 + rng.below(params.max_locations as u64) as u32;
        let locations: Vec<String> = (0..n_locations).map(|l| format!("l{l}")).collect();

        // variables visible inside this template
        let visible: Vec<VarDecl> = privates[t as usize]
            .iter()
            .chain(globals.iter())
            .cloned()
            .collect();

        let n_edges = 1 + rng.below(params.max_edges_per_template as u64) as u32;
        let mut edges = Vec::new();
        for _ in 0..n_edges {
            let source = rng.pick(&locations).clone();
            let target = rng.pick(&locations).clone();
            let mut edge = Edge::internal(source, target);

            let select_name = if !visible.is_empty() && rng.chance(30) {
                let hi = rng.below(3) as i64;
                edge = edge.with_select("s", 0, hi);
                Some(("s".to_string(), hi))
            } else {
                None
            };

            if !visible.is_empty() && rng.chance(60) {
                edge.guard = random_guard(&mut rng, &visible);
            }

            if !channels.is_empty() && rng.chance(40) {
                let dir = if rng.chance(50) {
                    SyncDir::Send
                } else {
                    SyncDir::Receive
                };
                edge = edge.with_sync(rng.pick(&channels).clone(), dir);
            }

            let n_updates = rng.below(3);
            for _ in 0..n_updates {
                if visible.is_empty() {
                    break;
                }
                let target_var = rng.pick(&visible).clone();
                let value = random_rhs(&mut rng, &visible, select_name.as_ref());
                edge = edge.with_update(target_var.name, value);
            }
            edges.push(edge);
        }

        templates.push(Template {
            graph: AgentGraph {
                name: format!("T{t}"),
                locations: locations.clone(),
                initial: locations[0].clone(),
                privates: privates[t as usize].clone(),
                edges,
            },
            count: counts[t as usize],
        });
    }

    let model = MasTemplate {
        templates,
        globals,
        channels,
        constants: Default::default(),
    };
    debug_assert!(model.validate().is_ok(), "generator produced invalid model");
    model
}

fn random_guard(rng: &mut Rng, visible: &[VarDecl]) -> Expr {
    let atom = |rng: &mut Rng| -> Expr {
        let var = rng.pick(visible);
        let op = *rng.pick(&[
            BinaryOp::Lt,
            BinaryOp::Le,
            BinaryOp::Eq,
            BinaryOp::Ne,
            BinaryOp::Ge,
            BinaryOp::Gt,
        ]);
        let rhs = if visible.len() > 1 && rng.chance(30) {
            Expr::var(rng.pick(visible).name.clone())
        } else {
            Expr::Lit(rng.below(var.hi as u64 + 1) as i64)
        };
        Expr::binary(op, Expr::var(var.name.clone()), rhs)
    };
    let first = atom(rng);
    if rng.chance(25) {
        Expr::binary(BinaryOp::And, first, atom(rng))
    } else {
        first
    }
}

fn random_rhs(rng: &mut Rng, visible: &[VarDecl], select: Option<&(String, i64)>) -> Expr {
    match rng.below(5) {
        0 => {
            let var = rng.pick(visible);
            Expr::Lit(rng.below(var.hi as u64 + 2) as i64)
        }
        1 => Expr::var(rng.pick(visible).name.clone()),
        2 => Expr::binary(
            BinaryOp::Add,
            Expr::var(rng.pick(visible).name.clone()),
            Expr::Lit(1),
        ),
        3 => Expr::binary(
            BinaryOp::Sub,
            Expr::var(rng.pick(visible).name.clone()),
            Expr::Lit(1),
        ),
        _ => match select {
            Some((name, _)) => Expr::var(name.clone()),
            None => Expr::Lit(rng.below(2) as i64),
        },
    }
}

/// A random atomic proposition over the given variables: comparisons and
/// small boolean combinations, suitable as an invariant body.
pub fn random_atom(rng: &mut Rng, vars: &[VarDecl]) -> Expr {
    let atom = |rng: &mut Rng| -> Expr {
        let var = rng.pick(vars);
        let op = *rng.pick(&[BinaryOp::Le, BinaryOp::Lt, BinaryOp::Eq, BinaryOp::Ne, BinaryOp::Ge]);
        Expr::binary(
            op,
            Expr::var(var.name.clone()),
            Expr::Lit(rng.below(var.hi as u64 + 2) as i64),
        )
    };
    let first = atom(rng);
    match rng.below(3) {
        0 => first,
        1 => Expr::binary(BinaryOp::Or, first, atom(rng)),
        _ => Expr::binary(BinaryOp::And, first, atom(rng)),
    }
}
