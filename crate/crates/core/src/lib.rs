//! Reduction of agent-network model specifications by user-selected variable
//! removal or merge, producing may- (over-approximating) and must-
//! (under-approximating) abstract specifications without ever building the
//! concrete global state space — plus an explicit-state checker used both
//! for verification and for validating abstraction soundness at desk scale.
//!
//! The pipeline:
//!
//! 1. [`io`] parses a model file into a [`model::MasTemplate`];
//! 2. [`unfold`] instantiates templates and builds the combined graph
//!    (asynchronous product with handshakes resolved);
//! 3. [`approx`] computes per-location upper/lower approximations of the
//!    reachable values of selected variables;
//! 4. [`abstraction`] rewrites the specification against such a domain,
//!    removing or merging the variables;
//! 5. [`checker`] explores global models and decides `A[] p` / `E<> p`
//!    queries.
//!
//! [`benchmarks`] holds the built-in model families and the regression
//! harness; [`modelgen`] generates small random models and [`soundness`]
//! validates abstraction soundness against the exact checker at desk
//! scale.

pub mod abstraction;
pub mod approx;
pub mod benchmarks;
pub mod checker;
pub mod io;
pub mod model;
pub mod modelgen;
pub mod soundness;
pub mod unfold;

pub use abstraction::{abstract_model, AbstractError, MappingFunction, MergeSpec};
pub use approx::{
    approx, ApproxError, ApproxOptions, ApproxRequest, DomainTag, LocalDomain, Target,
};
pub use checker::{CheckError, CheckOptions, Query, Runtime, Verdict};
pub use model::{
    AgentGraph, BinaryOp, Edge, Expr, MasTemplate, ModelError, QuantKind, Select, Sync, SyncDir,
    Template, UnaryOp, Update, VarDecl, VarKind,
};
pub use unfold::{combine, instantiate, unfold_model, AgentInstance, CombinedGraph, UnfoldError};
