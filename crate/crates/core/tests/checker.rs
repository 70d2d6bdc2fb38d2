//! Checker behaviour: exploration counts, query verdicts, traces, caps,
//! determinism, and agreement between the compiled evaluator, the tree
//! evaluator, and the combined-graph route.

use std::collections::BTreeMap;

use masabs_core::checker::{self, CheckOptions, Query, Runtime, Verdict};
use masabs_core::io::text::parse_expression;
use masabs_core::model::{eval, AgentGraph, Edge, Expr, MasTemplate, Template, VarDecl, VarKind};
use masabs_core::modelgen::{self, GenParams};
use masabs_core::{approx, unfold};

fn single(graph: AgentGraph) -> MasTemplate {
    MasTemplate {
        templates: vec![Template { graph, count: 1 }],
        ..Default::default()
    }
}

fn two_state_model() -> MasTemplate {
    single(AgentGraph {
        name: "A".into(),
        locations: vec!["a".into(), "b".into()],
        initial: "a".into(),
        privates: vec![],
        edges: vec![Edge::internal("a", "b")],
    })
}

#[test]
fn minimal_model_counts() {
    let runtime = Runtime::from_model(&two_state_model()).unwrap();
    let stats = checker::explore(&runtime, &CheckOptions::default()).unwrap();
    assert_eq!(stats.states, 2);
    assert_eq!(stats.transitions, 1);
    assert!(!stats.capped);
}

#[test]
fn invariant_true_always_holds() {
    let model = two_state_model();
    let runtime = Runtime::from_model(&model).unwrap();
    let query = Query::parse("A[] true", &model).unwrap();
    let outcome = checker::check(&runtime, &query, &CheckOptions::default()).unwrap();
    assert_eq!(outcome.verdict, Verdict::Holds);
    assert!(outcome.trace.is_none());
}

#[test]
fn unreachable_valuation_is_not_reachable() {
    // x counts 0,1,2 but never 3 because the guard stops at 2
    let graph = AgentGraph {
        name: "A".into(),
        locations: vec!["a".into()],
        initial: "a".into(),
        privates: vec![VarDecl::new("x", 0, 3, 0, VarKind::Private)],
        edges: vec![Edge::internal("a", "a")
            .with_guard(parse_expression("x<2").unwrap())
            .with_update("x", parse_expression("x+1").unwrap())],
    };
    let model = single(graph);
    let runtime = Runtime::from_model(&model).unwrap();
    let query = Query::parse("E<> A.x==3", &model).unwrap();
    let outcome = checker::check(&runtime, &query, &CheckOptions::default()).unwrap();
    assert_eq!(outcome.verdict, Verdict::Fails);

    let query = Query::parse("E<> A.x==2", &model).unwrap();
    let outcome = checker::check(&runtime, &query, &CheckOptions::default()).unwrap();
    assert_eq!(outcome.verdict, Verdict::Holds);
    // witness trace has two steps: x goes 0 -> 1 -> 2
    assert_eq!(outcome.trace.unwrap().steps.len(), 2);
}

#[test]
fn cap_yields_inconclusive() {
    let model = masabs_core::benchmarks::build_postal(2, 3).unwrap();
    let runtime = Runtime::from_model(&model).unwrap();
    let query = Query::parse(masabs_core::benchmarks::POSTAL_QUERY, &model).unwrap();
    let opts = CheckOptions {
        state_cap: 10,
        ..Default::default()
    };
    let outcome = checker::check(&runtime, &query, &opts).unwrap();
    assert_eq!(outcome.verdict, Verdict::Inconclusive);
    assert!(outcome.stats.capped);
}

#[test]
fn invariant_fails_iff_negation_reachable() {
    let params = GenParams::default();
    for seed in 0..40 {
        let model = modelgen::generate(seed, &params);
        let runtime = Runtime::from_model(&model).unwrap();
        let mut rng = modelgen::Rng::new(seed ^ 0xabcdef);
        let vars: Vec<VarDecl> = model
            .globals
            .iter()
            .cloned()
            .chain(
                model
                    .templates
                    .iter()
                    .flat_map(|t| t.graph.privates.iter().cloned()),
            )
            .collect();
        if vars.is_empty() {
            continue;
        }
        // atoms over template privates need qualification; restrict to globals
        let globals: Vec<VarDecl> = model.globals.to_vec();
        if globals.is_empty() {
            continue;
        }
        let atom = modelgen::random_atom(&mut rng, &globals);
        let invariant = Query {
            kind: masabs_core::io::text::QueryKind::Invariant,
            proposition: atom.clone(),
            text: format!("A[]({atom})"),
        };
        let reach_negation = Query {
            kind: masabs_core::io::text::QueryKind::Reachability,
            proposition: Expr::negation(atom.clone()),
            text: format!("E<>(!({atom}))"),
        };
        let inv = checker::check(&runtime, &invariant, &CheckOptions::default()).unwrap();
        let neg = checker::check(&runtime, &reach_negation, &CheckOptions::default()).unwrap();
        match inv.verdict {
            Verdict::Holds => assert_eq!(neg.verdict, Verdict::Fails, "seed {seed}"),
            Verdict::Fails => assert_eq!(neg.verdict, Verdict::Holds, "seed {seed}"),
            Verdict::Inconclusive => panic!("uncapped run cannot be inconclusive"),
        }
    }
}

#[test]
fn counterexample_replays_to_violation() {
    let model = masabs_core::benchmarks::build_postal(1, 2).unwrap();
    let runtime = Runtime::from_model(&model).unwrap();
    // a deliberately false invariant so we get a counterexample
    let query = Query::parse("A[] ep_sent==0", &model).unwrap();
    let outcome = checker::check(&runtime, &query, &CheckOptions::default()).unwrap();
    assert_eq!(outcome.verdict, Verdict::Fails);
    let trace = outcome.trace.unwrap();
    assert!(!trace.steps.is_empty());

    // replay: applying the recorded edges from the initial state reproduces
    // the violating state
    let mut state = runtime.initial_state();
    for step in &trace.steps {
        state = runtime
            .apply_edge(&state, &step.edge)
            .unwrap()
            .expect("trace edge enabled");
    }
    let (_, values) = runtime.decode(&state);
    let final_step = trace.steps.last().unwrap();
    assert_eq!(values, final_step.values);
    assert_ne!(values["ep_sent"], 0);
}

#[test]
fn exploration_deterministic_across_threads() {
    let model = masabs_core::benchmarks::build_postal(2, 2).unwrap();
    let runtime = Runtime::from_model(&model).unwrap();
    let baseline = checker::explore(
        &runtime,
        &CheckOptions {
            threads: 1,
            ..Default::default()
        },
    )
    .unwrap();
    for threads in [2, 4, 8] {
        let stats = checker::explore(
            &runtime,
            &CheckOptions {
                threads,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(stats.states, baseline.states, "threads={threads}");
        assert_eq!(stats.transitions, baseline.transitions, "threads={threads}");
    }
}

#[test]
fn combined_graph_explores_to_same_counts_as_direct() {
    let params = GenParams::default();
    for seed in 100..160 {
        let model = modelgen::generate(seed, &params);
        let direct = Runtime::from_model(&model).unwrap();
        let direct_stats = checker::explore(&direct, &CheckOptions::default()).unwrap();

        let combined = unfold::unfold_model(&model).unwrap();
        let lowered = unfold::to_single_template(&combined, &model);
        let combined_rt = Runtime::from_model(&lowered).unwrap();
        let combined_stats = checker::explore(&combined_rt, &CheckOptions::default()).unwrap();

        assert_eq!(
            direct_stats.states, combined_stats.states,
            "seed {seed}: state counts differ between direct and combined exploration"
        );
        assert_eq!(
            direct_stats.transitions, combined_stats.transitions,
            "seed {seed}: transition counts differ"
        );
    }
}

#[test]
fn compiled_eval_agrees_with_tree_eval() {
    // evaluate random guards on random reachable states through both paths
    let params = GenParams::default();
    for seed in 200..240 {
        let model = modelgen::generate(seed, &params);
        let runtime = Runtime::from_model(&model).unwrap();
        let mut rng = modelgen::Rng::new(seed);
        let vars: Vec<VarDecl> = model
            .globals
            .iter()
            .cloned()
            .chain(model.templates.iter().flat_map(|t| {
                // qualified display names of a count-1 template resolve in
                // both evaluators; skip multi-instance privates here
                if t.count == 1 {
                    t.graph
                        .privates
                        .iter()
                        .map(|v| VarDecl {
                            name: format!("{}.{}", t.graph.name, v.name),
                            ..v.clone()
                        })
                        .collect::<Vec<_>>()
                } else {
                    Vec::new()
                }
            }))
            .collect();
        if vars.is_empty() {
            continue;
        }
        let atom = modelgen::random_atom(&mut rng, &vars);
        let query = Query {
            kind: masabs_core::io::text::QueryKind::Invariant,
            proposition: atom.clone(),
            text: atom.to_string(),
        };
        // compiled route
        let compiled_verdict =
            checker::check(&runtime, &query, &CheckOptions::default()).unwrap();
        // tree route: explore and evaluate the proposition per state
        let projection = checker::project_reachable(
            &model,
            &approx::Target::Ext,
            &all_var_names(&model),
            &CheckOptions::default(),
        )
        .unwrap();
        let mut tree_holds = true;
        for vectors in projection.entries.values() {
            for vector in vectors {
                let env: BTreeMap<String, i64> = projection
                    .variables
                    .iter()
                    .cloned()
                    .zip(vector.iter().copied())
                    .collect();
                if eval(&atom, &env).unwrap() == 0 {
                    tree_holds = false;
                }
            }
        }
        assert_eq!(
            compiled_verdict.verdict == Verdict::Holds,
            tree_holds,
            "seed {seed}: compiled and tree evaluation disagree on A[]({atom})"
        );
    }
}

fn all_var_names(model: &MasTemplate) -> Vec<String> {
    let mut names: Vec<String> = model.globals.iter().map(|v| v.name.clone()).collect();
    for template in &model.templates {
        for instance in 1..=template.count {
            let display =
                unfold::instance_display(&template.graph.name, instance, template.count);
            for var in &template.graph.privates {
                names.push(format!("{display}.{}", var.name));
            }
        }
    }
    names
}

#[test]
fn project_reachable_voter_memory() {
    // the standalone voter-like template with handshakes stripped is the
    // oracle for the template-target upper approximation
    let graph = AgentGraph {
        name: "Voter".into(),
        locations: vec!["idle".into(), "waits".into(), "has".into(), "voted".into()],
        initial: "idle".into(),
        privates: vec![VarDecl::new("mem_dec", 0, 2, 0, VarKind::Private)],
        edges: vec![
            Edge::internal("idle", "waits")
                .with_select("dec", 1, 2)
                .with_update("mem_dec", parse_expression("dec").unwrap()),
            Edge::internal("waits", "has"),
            Edge::internal("has", "voted"),
        ],
    };
    let model = single(graph);
    let projection = checker::project_reachable(
        &model,
        &approx::Target::Template("Voter".into()),
        &["mem_dec".to_string()],
        &CheckOptions::default(),
    )
    .unwrap();
    let sets: BTreeMap<&str, Vec<Vec<i64>>> = projection
        .entries
        .iter()
        .map(|(k, v)| (k.as_str(), v.iter().cloned().collect()))
        .collect();
    assert_eq!(sets["idle"], vec![vec![0]]);
    assert_eq!(sets["waits"], vec![vec![1], vec![2]]);
    assert_eq!(sets["has"], vec![vec![1], vec![2]]);
    assert_eq!(sets["voted"], vec![vec![1], vec![2]]);
}

#[test]
fn project_reachable_full_valuation() {
    let model = two_state_model();
    let projection = checker::project_reachable(
        &model,
        &approx::Target::Ext,
        &[],
        &CheckOptions::default(),
    )
    .unwrap();
    assert_eq!(projection.entries.len(), 2);
    for vectors in projection.entries.values() {
        assert_eq!(vectors.iter().next().unwrap().len(), 0);
    }
}

#[test]
fn guard_dead_location_gets_no_projection_entry() {
    let graph = AgentGraph {
        name: "A".into(),
        locations: vec!["a".into(), "dead".into()],
        initial: "a".into(),
        privates: vec![VarDecl::new("x", 0, 1, 0, VarKind::Private)],
        edges: vec![Edge::internal("a", "dead").with_guard(Expr::Lit(0))],
    };
    let model = single(graph);
    let projection = checker::project_reachable(
        &model,
        &approx::Target::Template("A".into()),
        &["x".to_string()],
        &CheckOptions::default(),
    )
    .unwrap();
    // concretely unreachable: the location never appears in any state
    assert!(!projection.entries.contains_key("dead"));
    assert!(projection.entries.contains_key("a"));
}

#[test]
fn oracle_errors_when_capped() {
    let model = masabs_core::benchmarks::build_postal(2, 3).unwrap();
    let err = checker::project_reachable(
        &model,
        &approx::Target::Ext,
        &["ep_sent".to_string()],
        &CheckOptions {
            state_cap: 5,
            ..Default::default()
        },
    )
    .unwrap_err();
    assert!(matches!(err, checker::CheckError::OracleCapped));
}
