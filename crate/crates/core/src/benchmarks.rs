//! Built-in benchmark model families and the regression harness.
//!
//! Two scalable families: a postal voting scenario (voters, candidates, one
//! election authority, four protocol phases) and a gossip-learning ring of
//! AI agents with an impersonating attacker. Both are reconstructions from
//! the published problem descriptions; absolute state counts therefore
//! differ from the originally reported numbers, which the harness prints
//! side by side as reference deltas.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::abstraction::{MappingFunction, MergeSpec};
use crate::approx::{ApproxOptions, ApproxRequest, DomainTag, Target};
use crate::io::text::parse_expression;
use crate::model::{
    AgentGraph, Edge, Expr, MasTemplate, SyncDir, Template, VarDecl, VarKind,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BenchmarkError {
    #[error("postal voting needs at least 1 voter and 1 candidate, got NV={nv}, NC={nc}")]
    BadPostalParams { nv: u32, nc: u32 },
    #[error("the social-AI ring needs at least 2 agents (1 honest + the attacker), got {0}")]
    BadSocialParams(u32),
}

fn expr(src: &str) -> Expr {
    parse_expression(src).expect("benchmark expression")
}

/// Postal voting with `nv` voters, `nc` candidates, and a single election
/// authority running four phases: declaration collection, election-package
/// distribution, ballot casting, tallying.
///
/// Voters pick a delivery method (select `dec`), wait for their package,
/// then cast a ballot choosing a candidate and whether to sign (selects
/// `vt`, `sg`), remembering everything in `mem_*` variables. The authority
/// keeps the counters `ep_sent`, `b_recv`, `dec_recv`.
pub fn build_postal(nv: u32, nc: u32) -> Result<MasTemplate, BenchmarkError> {
    if nv < 1 || nc < 1 {
        return Err(BenchmarkError::BadPostalParams { nv, nc });
    }
    let nv_i = nv as i64;
    let nc_i = nc as i64;

    let voter = AgentGraph {
        name: "Voter".into(),
        locations: vec!["idle".into(), "waits".into(), "has".into(), "voted".into()],
        initial: "idle".into(),
        privates: vec![
            VarDecl::new("mem_dec", 0, 2, 0, VarKind::Private),
            VarDecl::new("mem_vt", 0, nc_i, 0, VarKind::Private),
            VarDecl::new("mem_sg", 0, 1, 0, VarKind::Private),
        ],
        edges: vec![
            Edge::internal("idle", "waits")
                .with_select("dec", 1, 2)
                .with_sync("decl", SyncDir::Send)
                .with_update("mem_dec", expr("dec")),
            Edge::internal("waits", "has").with_sync("pack", SyncDir::Receive),
            Edge::internal("has", "voted")
                .with_select("vt", 1, nc_i)
                .with_select("sg", 0, 1)
                .with_sync("ballot", SyncDir::Send)
                .with_update("mem_vt", expr("vt"))
                .with_update("mem_sg", expr("sg")),
        ],
    };

    let authority = AgentGraph {
        name: "Authority".into(),
        locations: vec![
            "coll_decl".into(),
            "send_ep".into(),
            "coll_vts".into(),
            "tally".into(),
        ],
        initial: "coll_decl".into(),
        privates: vec![VarDecl::new("dec_recv", 0, nv_i, 0, VarKind::Private)],
        edges: vec![
            Edge::internal("coll_decl", "coll_decl")
                .with_guard(expr(&format!("dec_recv<{nv_i}")))
                .with_sync("decl", SyncDir::Receive)
                .with_update("dec_recv", expr("dec_recv+1")),
            Edge::internal("coll_decl", "send_ep").with_guard(expr(&format!("dec_recv=={nv_i}"))),
            Edge::internal("send_ep", "send_ep")
                .with_guard(expr(&format!("ep_sent<{nv_i}")))
                .with_sync("pack", SyncDir::Send)
                .with_update("ep_sent", expr("ep_sent+1")),
            Edge::internal("send_ep", "coll_vts").with_guard(expr(&format!("ep_sent=={nv_i}"))),
            Edge::internal("coll_vts", "coll_vts")
                .with_guard(expr(&format!("b_recv<{nv_i}")))
                .with_sync("ballot", SyncDir::Receive)
                .with_update("b_recv", expr("b_recv+1")),
            Edge::internal("coll_vts", "tally").with_guard(expr(&format!("b_recv=={nv_i}"))),
        ],
    };

    let model = MasTemplate {
        templates: vec![
            Template {
                graph: voter,
                count: nv,
            },
            Template {
                graph: authority,
                count: 1,
            },
        ],
        globals: vec![
            VarDecl::new("ep_sent", 0, nv_i, 0, VarKind::Global),
            VarDecl::new("b_recv", 0, nv_i, 0, VarKind::Global),
        ],
        channels: vec!["decl".into(), "pack".into(), "ballot".into()],
        constants: [("NV".to_string(), nv_i), ("NC".to_string(), nc_i)].into(),
    };
    debug_assert!(model.validate().is_ok());
    Ok(model)
}

/// The ballot-stuffing resistance invariant: never more ballots received
/// than packages sent, never more packages than voters.
pub const POSTAL_QUERY: &str = "A[](b_recv<=ep_sent && ep_sent<=NV)";

/// One abstraction step: an approximation request paired with the mapping
/// that consumes its result.
pub type AbstractionStep = (ApproxRequest, MappingFunction);

/// The three postal abstractions: A1 removes the voter's vote memory, A2
/// removes the delivery-method bookkeeping inside a scope, A3 combines
/// them. Steps apply in sequence, re-approximating on the result of the
/// previous abstraction.
pub fn postal_abstraction(which: PostalAbstraction) -> Vec<AbstractionStep> {
    let a1 = vec![(
        ApproxRequest {
            variables: vec!["mem_vt".into(), "mem_sg".into()],
            target: Target::Template("Voter".into()),
            tag: DomainTag::Upper,
        },
        MappingFunction {
            target: Target::Template("Voter".into()),
            scope: BTreeSet::new(),
            remove: vec!["mem_vt".into(), "mem_sg".into()],
            merge: None,
        },
    )];
    let a2 = vec![
        (
            ApproxRequest {
                variables: vec!["mem_dec".into()],
                target: Target::Template("Voter".into()),
                tag: DomainTag::Upper,
            },
            MappingFunction {
                target: Target::Template("Voter".into()),
                scope: BTreeSet::from(["has".to_string(), "voted".to_string()]),
                remove: vec!["mem_dec".into()],
                merge: None,
            },
        ),
        (
            ApproxRequest {
                variables: vec!["dec_recv".into()],
                target: Target::Template("Authority".into()),
                tag: DomainTag::Upper,
            },
            MappingFunction {
                target: Target::Template("Authority".into()),
                scope: BTreeSet::from(["coll_vts".to_string(), "tally".to_string()]),
                remove: vec!["dec_recv".into()],
                merge: None,
            },
        ),
    ];
    match which {
        PostalAbstraction::A1 => a1,
        PostalAbstraction::A2 => a2,
        PostalAbstraction::A3 => {
            let mut steps = a1;
            steps.extend(postal_abstraction(PostalAbstraction::A2));
            steps
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PostalAbstraction {
    A1,
    A2,
    A3,
}

impl PostalAbstraction {
    pub fn name(self) -> &'static str {
        match self {
            PostalAbstraction::A1 => "A1",
            PostalAbstraction::A2 => "A2",
            PostalAbstraction::A3 => "A3",
        }
    }

    pub fn all() -> [PostalAbstraction; 3] {
        [
            PostalAbstraction::A1,
            PostalAbstraction::A2,
            PostalAbstraction::A3,
        ]
    }
}

/// The merge variant from the worked example: `mem_sg` and `mem_vt`
/// collapse into a boolean `valid` marking a signed vote for a real
/// candidate.
pub fn postal_merge_mapping() -> MappingFunction {
    MappingFunction {
        target: Target::Template("Voter".into()),
        scope: BTreeSet::new(),
        remove: vec!["mem_sg".into(), "mem_vt".into()],
        merge: Some(MergeSpec {
            name: "valid".into(),
            initial: 0,
            expr: expr("mem_sg*mem_vt>0"),
        }),
    }
}

/// Gossip learning on a ring with an impersonating attacker. `agents` is
/// the total count: `agents - 1` honest AI instances plus the attacker.
///
/// Honest agents gather data (`ndata`, `dqual`), learn (`mqual`), then
/// share their model quality with the ring successor and finish once they
/// have received one. The attacker picks a victim, impersonates the
/// victim's ring predecessor (suppressing its genuine share), and injects
/// quality 0. Ring position `agents` is the attacker's own station.
pub fn build_social_ai(agents: u32) -> Result<MasTemplate, BenchmarkError> {
    if agents < 2 {
        return Err(BenchmarkError::BadSocialParams(agents));
    }
    let na = agents - 1; // honest instances
    let ring = agents as i64; // ring positions incl. the attacker station

    let channels: Vec<String> = (1..=ring).map(|i| format!("share_{i}")).collect();

    let mut ai_edges = vec![
        Edge::internal("gather", "gather")
            .with_select("d", 1, 2)
            .with_guard(expr("ndata<2 && d>dqual"))
            .with_update("ndata", expr("ndata+1"))
            .with_update("dqual", expr("d")),
        Edge::internal("gather", "gather")
            .with_select("d", 1, 2)
            .with_guard(expr("ndata<2 && d<=dqual"))
            .with_update("ndata", expr("ndata+1")),
        Edge::internal("gather", "learn").with_guard(expr("ndata==2")),
        Edge::internal("learn", "share").with_update("mqual", expr("dqual")),
        // hijacked: the impersonated agent's genuine share is suppressed
        Edge::internal("share", "shared").with_guard(expr("impersonated==id")),
    ];
    for k in 1..=na as i64 {
        let successor = k % ring + 1;
        ai_edges.push(
            Edge::internal("share", "shared")
                .with_guard(expr(&format!("id=={k} && impersonated!={k}")))
                .with_sync(format!("share_{successor}"), SyncDir::Send)
                .with_update("msg", expr("mqual")),
        );
        // receive either before or after sending; trusting adoption
        for (src, tgt) in [("share", "share"), ("shared", "wait")] {
            ai_edges.push(
                Edge::internal(src, tgt)
                    .with_guard(expr(&format!("id=={k}")))
                    .with_sync(format!("share_{k}"), SyncDir::Receive)
                    .with_update("mqual", expr("msg")),
            );
        }
    }

    let ai = AgentGraph {
        name: "AI".into(),
        locations: vec![
            "gather".into(),
            "learn".into(),
            "share".into(),
            "shared".into(),
            "wait".into(),
        ],
        initial: "gather".into(),
        privates: vec![
            VarDecl::new("ndata", 0, 2, 0, VarKind::Private),
            VarDecl::new("dqual", 0, 2, 0, VarKind::Private),
            VarDecl::new("mqual", 0, 2, 0, VarKind::Private),
        ],
        edges: ai_edges,
    };

    // The attacker impersonates the victim's ring predecessor: the genuine
    // share to the victim is replaced by a zero-quality one. Impersonating
    // the victim itself is impossible (a ring has no self-edges), so the
    // compromised agent is never the impersonated one.
    let mut attacker_edges = Vec::new();
    for victim in 1..=na as i64 {
        let predecessor = (victim + ring - 2) % ring + 1;
        attacker_edges.push(
            Edge::internal("choose", "strike")
                .with_update("victim", Expr::Lit(victim))
                .with_update("impersonated", Expr::Lit(predecessor)),
        );
        attacker_edges.push(
            Edge::internal("strike", "lurk")
                .with_guard(expr(&format!("victim=={victim}")))
                .with_sync(format!("share_{victim}"), SyncDir::Send)
                .with_update("msg", Expr::Lit(0)),
        );
    }
    // absorb the share addressed to the attacker's own station
    attacker_edges.push(
        Edge::internal("lurk", "lurk").with_sync(format!("share_{ring}"), SyncDir::Receive),
    );

    let attacker = AgentGraph {
        name: "Attacker".into(),
        locations: vec!["choose".into(), "strike".into(), "lurk".into()],
        initial: "choose".into(),
        privates: vec![VarDecl::new("victim", 0, na as i64, 0, VarKind::Private)],
        edges: attacker_edges,
    };

    let model = MasTemplate {
        templates: vec![
            Template {
                graph: ai,
                count: na,
            },
            Template {
                graph: attacker,
                count: 1,
            },
        ],
        globals: vec![
            VarDecl::new("impersonated", 0, ring, 0, VarKind::Global),
            VarDecl::new("msg", 0, 2, 0, VarKind::Global),
        ],
        channels,
        constants: [("NA".to_string(), na as i64)].into(),
    };
    debug_assert!(model.validate().is_ok());
    Ok(model)
}

/// On every path some honest agent other than the impersonated identity is
/// compromised: not yet finished, or finished with low model quality.
pub const SOCIAL_QUERY: &str =
    "A[](exists(i:int[1,NA])(impersonated!=i && (!AI(i).wait || AI(i).mqual<2)))";

/// The social-AI may-abstraction: discard every AI variable except `mqual`.
pub fn social_abstraction() -> AbstractionStep {
    (
        ApproxRequest {
            variables: vec!["ndata".into(), "dqual".into()],
            target: Target::Template("AI".into()),
            tag: DomainTag::Upper,
        },
        MappingFunction {
            target: Target::Template("AI".into()),
            scope: BTreeSet::new(),
            remove: vec!["ndata".into(), "dqual".into()],
            merge: None,
        },
    )
}

/// Apply a chain of (approximation, mapping) steps, re-approximating each
/// time on the previous step's output.
pub fn apply_abstraction_chain(
    model: &MasTemplate,
    steps: &[AbstractionStep],
    opts: &ApproxOptions,
) -> Result<MasTemplate, ChainError> {
    let mut current = model.clone();
    for (request, mapping) in steps {
        let domain = crate::approx::approx(&current, request, opts)?;
        current = crate::abstraction::abstract_model(&current, mapping, &domain)?;
    }
    Ok(current)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error(transparent)]
    Approx(#[from] crate::approx::ApproxError),
    #[error(transparent)]
    Abstract(#[from] crate::abstraction::AbstractError),
}

/// Reference state counts from the originally published runs of these two
/// benchmark families, used only for side-by-side deltas in the harness
/// output (the models here are reconstructions, so counts differ).
pub mod reference {
    /// State counts of one grid row: (concrete, A1, A2, A3); None marks a
    /// memout in the original run.
    pub type PostalRow = (Option<f64>, Option<f64>, Option<f64>, Option<f64>);

    /// Postal voting, 3 candidates, rows NV = 1..=8.
    pub const POSTAL_STATES: [PostalRow; 8] = [
        (Some(31.0), Some(23.0), Some(22.0), Some(18.0)),
        (Some(529.0), Some(217.0), Some(214.0), Some(120.0)),
        (Some(10891.0), Some(2203.0), Some(2440.0), Some(838.0)),
        (Some(2.3e5), Some(22625.0), Some(29938.0), Some(5937.0)),
        (Some(5.1e6), Some(2.3e5), Some(3.7e5), Some(42100.0)),
        (None, Some(2.3e6), Some(4.9e6), Some(2.9e5)),
        (None, Some(2.2e7), None, Some(2.0e6)),
        (None, None, None, Some(1.4e7)),
    ];

    /// Social AI, rows #Ag = 2..=8: (concrete, abstract).
    pub const SOCIAL_STATES: [(Option<f64>, Option<f64>); 7] = [
        (Some(165.0), Some(38.0)),
        (Some(8917.0), Some(555.0)),
        (Some(4.6e5), Some(10247.0)),
        (Some(2.1e7), Some(1.5e5)),
        (None, Some(2.8e6)),
        (None, Some(4.1e7)),
        (None, None),
    ];
}

/// One harness measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub family: String,
    /// `NV=2` or `Ag=3`.
    pub params: String,
    /// `concrete`, `A1`, `A2`, `A3`, or `abstract`.
    pub config: String,
    pub states: u64,
    pub time_ms: u64,
    pub verdict: String,
    /// Percentage reduction of the state space vs the concrete run at the
    /// same grid point, when both completed.
    pub reduction: Option<f64>,
    /// Reference state count from the original runs, when reported.
    pub reference_states: Option<f64>,
}

pub fn reduction_percent(concrete: u64, abstracted: u64) -> f64 {
    (1.0 - abstracted as f64 / concrete as f64) * 100.0
}
