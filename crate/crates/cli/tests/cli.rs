//! Command behaviour through the real binary: output contracts, config
//! handling, and the end-to-end pipeline property on random models.

use std::path::Path;
use std::process::{Command, Output};

use masabs_core::approx::{ApproxOptions, ApproxRequest, DomainTag, Target};
use masabs_core::benchmarks;
use masabs_core::checker::{check, CheckOptions, Query, Runtime, Verdict};
use masabs_core::modelgen::{self, GenParams};
use masabs_core::{abstraction, io, unfold};

fn masabs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_masabs"))
        .args(args)
        .output()
        .expect("spawning masabs")
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn write_postal(dir: &Path) -> String {
    let model = benchmarks::build_postal(1, 3).unwrap();
    let path = dir.join("postal.xml");
    std::fs::write(&path, io::serialize_model(&model)).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn info_lists_voter_contents() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_postal(dir.path());
    let output = masabs(&["info", "--input", &model]);
    assert!(output.status.success());
    let text = stdout_of(&output);
    for needle in ["idle", "waits", "has", "voted", "mem_dec", "mem_vt", "mem_sg", "dec : int[1,2]"] {
        assert!(text.contains(needle), "info output lacks `{needle}`:\n{text}");
    }
}

#[test]
fn info_on_empty_model_lists_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.xml");
    std::fs::write(&path, io::serialize_model(&Default::default())).unwrap();
    let output = masabs(&["info", "--input", path.to_str().unwrap()]);
    assert!(output.status.success());
    let text = stdout_of(&output);
    assert!(!text.contains("template"));
}

#[test]
fn configure_without_flags_prints_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("x.cfg");
    std::fs::write(&config, "target = Voter\nvars = mem_vt\ntype = upper\n").unwrap();
    let before = std::fs::read_to_string(&config).unwrap();
    let output = masabs(&["configure", "--config", config.to_str().unwrap()]);
    assert!(output.status.success());
    assert_eq!(stdout_of(&output), before);
    assert_eq!(std::fs::read_to_string(&config).unwrap(), before);
}

#[test]
fn configure_merges_flags_over_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("x.cfg");
    std::fs::write(&config, "target = Voter\nvars = mem_vt\ntype = upper\n").unwrap();
    let output = masabs(&[
        "configure",
        "--config",
        config.to_str().unwrap(),
        "--vars",
        "mem_vt,mem_sg",
    ]);
    assert!(output.status.success());
    let text = std::fs::read_to_string(&config).unwrap();
    assert!(text.contains("vars = mem_vt, mem_sg"));
    assert!(text.contains("target = Voter"));
}

#[test]
fn unknown_config_key_warns_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_postal(dir.path());
    let config = dir.path().join("x.cfg");
    std::fs::write(&config, "colour = green\n").unwrap();
    let output = masabs(&[
        "info",
        "--input",
        &model,
        "--config",
        config.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("colour"), "stderr: {stderr}");
}

#[test]
fn check_json_shape() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_postal(dir.path());
    let output = masabs(&[
        "check",
        "--input",
        &model,
        "--query",
        benchmarks::POSTAL_QUERY,
        "--json",
    ]);
    assert!(output.status.success());
    let value: serde_json::Value = serde_json::from_str(stdout_of(&output).trim()).unwrap();
    assert_eq!(value["result"], "holds");
    assert!(value["states"].as_u64().unwrap() > 0);
    assert!(value["transitions"].as_u64().is_some());
    assert!(value["time_ms"].as_u64().is_some());
}

#[test]
fn check_prints_counterexample_trace() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_postal(dir.path());
    let output = masabs(&["check", "--input", &model, "--query", "A[] ep_sent==0"]);
    assert!(output.status.success());
    let text = stdout_of(&output);
    assert!(text.contains("verdict: fails"));
    assert!(text.contains("counterexample"));
    assert!(text.contains("final valuation"));

    // a violation in the initial state still reports that state
    let output = masabs(&["check", "--input", &model, "--query", "A[] ep_sent==1"]);
    assert!(output.status.success());
    let text = stdout_of(&output);
    assert!(text.contains("counterexample (0 steps)"));
    assert!(text.contains("ep_sent=0"));
}

#[test]
fn check_reads_query_from_file_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_postal(dir.path());
    let query_path = dir.path().join("q.txt");
    std::fs::write(&query_path, format!("{}\n", benchmarks::POSTAL_QUERY)).unwrap();
    let output = masabs(&[
        "check",
        "--input",
        &model,
        "--query-file",
        query_path.to_str().unwrap(),
        "--threads",
        "4",
        "--json",
    ]);
    assert!(output.status.success());
    let value: serde_json::Value = serde_json::from_str(stdout_of(&output).trim()).unwrap();
    assert_eq!(value["result"], "holds");

    // single- and multi-threaded runs report identical counts
    let single = masabs(&["check", "--input", &model, "--query", benchmarks::POSTAL_QUERY, "--json"]);
    let single: serde_json::Value = serde_json::from_str(stdout_of(&single).trim()).unwrap();
    assert_eq!(value["states"], single["states"]);
    assert_eq!(value["transitions"], single["transitions"]);
}

#[test]
fn bench_emits_models_and_json_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("models");
    let output = masabs(&[
        "bench",
        "postal",
        "--max",
        "1",
        "--emit-models",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let emitted = out.join("postal_nv1_nc3.xml");
    assert!(emitted.exists());
    io::parse_model(&std::fs::read_to_string(&emitted).unwrap()).unwrap();

    let output = masabs(&["bench", "postal", "--max", "1", "--json"]);
    assert!(output.status.success());
    let text = stdout_of(&output);
    let mut configs = Vec::new();
    for line in text.lines() {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(value["family"], "postal");
        assert_eq!(value["params"], "NV=1");
        assert_eq!(value["verdict"], "holds");
        configs.push(value["config"].as_str().unwrap().to_string());
    }
    assert_eq!(configs, vec!["concrete", "A1", "A2", "A3"]);
}

#[test]
fn bench_social_reports_reduction() {
    let output = masabs(&["bench", "social", "--max", "2", "--json"]);
    assert!(output.status.success());
    let text = stdout_of(&output);
    let abstract_line = text
        .lines()
        .find(|l| l.contains("\"abstract\""))
        .expect("abstract record present");
    let value: serde_json::Value = serde_json::from_str(abstract_line).unwrap();
    assert!(value["reduction"].as_f64().unwrap() >= 50.0);
}

#[test]
fn capped_bench_reports_memout() {
    let output = masabs(&["bench", "postal", "--max", "1", "--cap", "5", "--json"]);
    assert!(output.status.success());
    let text = stdout_of(&output);
    assert!(text.contains("\"memout\""), "{text}");
}

#[test]
fn check_handles_location_predicates() {
    let dir = tempfile::tempdir().unwrap();
    let model = benchmarks::build_social_ai(2).unwrap();
    let path = dir.path().join("social.xml");
    std::fs::write(&path, io::serialize_model(&model)).unwrap();
    let output = masabs(&[
        "check",
        "--input",
        path.to_str().unwrap(),
        "--query",
        benchmarks::SOCIAL_QUERY,
        "--json",
    ]);
    assert!(output.status.success());
    let value: serde_json::Value = serde_json::from_str(stdout_of(&output).trim()).unwrap();
    assert_eq!(value["result"], "holds");

    // reachability queries over instance locations: the attacker always
    // gets to strike, while the sole honest agent can never finish
    let output = masabs(&[
        "check",
        "--input",
        path.to_str().unwrap(),
        "--query",
        "E<> Attacker.lurk",
    ]);
    assert!(output.status.success());
    assert!(stdout_of(&output).contains("verdict: holds"));
    let output = masabs(&[
        "check",
        "--input",
        path.to_str().unwrap(),
        "--query",
        "E<> AI(1).wait",
    ]);
    assert!(output.status.success());
    assert!(stdout_of(&output).contains("verdict: fails"));
}

/// `unfold → approx(upper) → abstract → check(A[] p)` returning holds on
/// the abstraction implies holds on the original, end to end through the
/// binary, on a slice of the random corpus.
#[test]
fn pipeline_property_through_the_binary() {
    let params = GenParams::default();
    let dir = tempfile::tempdir().unwrap();
    let mut implications = 0u32;
    for seed in [11u64, 23, 42, 77, 131] {
        let model = modelgen::generate(seed, &params);
        let model_path = dir.path().join(format!("m{seed}.xml"));
        std::fs::write(&model_path, io::serialize_model(&model)).unwrap();
        let combined_path = dir.path().join(format!("c{seed}.xml"));

        let unfolded = masabs(&[
            "unfold",
            "--input",
            model_path.to_str().unwrap(),
            "--output",
            combined_path.to_str().unwrap(),
        ]);
        assert!(unfolded.status.success(), "seed {seed}: unfold failed");

        let combined =
            io::parse_model(&std::fs::read_to_string(&combined_path).unwrap()).unwrap();
        let vars: Vec<String> = combined
            .globals
            .iter()
            .chain(combined.templates[0].graph.privates.iter())
            .map(|v| v.name.clone())
            .collect();
        if vars.is_empty() {
            continue;
        }
        let remove = [vars[0].clone()];

        let domain_path = dir.path().join(format!("d{seed}.json"));
        let abstract_path = dir.path().join(format!("a{seed}.xml"));
        let approxed = masabs(&[
            "approx",
            "--input",
            combined_path.to_str().unwrap(),
            "--output",
            domain_path.to_str().unwrap(),
            "--target",
            "ext",
            "--vars",
            &remove.join(","),
            "--type",
            "upper",
        ]);
        assert!(approxed.status.success(), "seed {seed}: approx failed");
        let abstracted = masabs(&[
            "abstract",
            "--input",
            combined_path.to_str().unwrap(),
            "--domain",
            domain_path.to_str().unwrap(),
            "--output",
            abstract_path.to_str().unwrap(),
            "--target",
            "ext",
            "--vars",
            &remove.join(","),
            "--type",
            "upper",
        ]);
        assert!(abstracted.status.success(), "seed {seed}: abstract failed");

        // random invariants over the retained variables, compared via the
        // library checker on both models
        let abstract_model =
            io::parse_model(&std::fs::read_to_string(&abstract_path).unwrap()).unwrap();
        let retained: Vec<masabs_core::VarDecl> = combined
            .globals
            .iter()
            .chain(combined.templates[0].graph.privates.iter())
            .filter(|v| !remove.contains(&v.name))
            .cloned()
            .collect();
        if retained.is_empty() {
            continue;
        }
        let mut rng = modelgen::Rng::new(seed);
        let concrete_rt = Runtime::from_model(&combined).unwrap();
        let abstract_rt = Runtime::from_model(&abstract_model).unwrap();
        for _ in 0..5 {
            let atom = modelgen::random_atom(&mut rng, &retained);
            let query = Query {
                kind: io::text::QueryKind::Invariant,
                proposition: atom.clone(),
                text: format!("A[]({atom})"),
            };
            let on_abstract = check(&abstract_rt, &query, &CheckOptions::default())
                .unwrap()
                .verdict;
            if on_abstract == Verdict::Holds {
                let on_concrete = check(&concrete_rt, &query, &CheckOptions::default())
                    .unwrap()
                    .verdict;
                assert_eq!(on_concrete, Verdict::Holds, "seed {seed}: A[]({atom})");
                implications += 1;
            }
        }
    }
    assert!(implications > 0, "the corpus slice never produced a transferable verdict");
}

/// The A2-style scoped pipeline behaves identically through files and
/// through the library.
#[test]
fn scoped_abstraction_through_files_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let model = benchmarks::build_postal(2, 3).unwrap();
    let model_path = dir.path().join("postal.xml");
    std::fs::write(&model_path, io::serialize_model(&model)).unwrap();
    let domain_path = dir.path().join("d.json");
    let abstract_path = dir.path().join("a.xml");

    let approxed = masabs(&[
        "approx",
        "--input",
        model_path.to_str().unwrap(),
        "--output",
        domain_path.to_str().unwrap(),
        "--target",
        "Voter",
        "--vars",
        "mem_dec",
        "--type",
        "upper",
    ]);
    assert!(approxed.status.success());
    let abstracted = masabs(&[
        "abstract",
        "--input",
        model_path.to_str().unwrap(),
        "--domain",
        domain_path.to_str().unwrap(),
        "--output",
        abstract_path.to_str().unwrap(),
        "--target",
        "Voter",
        "--vars",
        "mem_dec",
        "--type",
        "upper",
        "--scope",
        "has,voted",
    ]);
    assert!(abstracted.status.success());

    let from_files = io::parse_model(&std::fs::read_to_string(&abstract_path).unwrap()).unwrap();
    let request = ApproxRequest {
        variables: vec!["mem_dec".into()],
        target: Target::Template("Voter".into()),
        tag: DomainTag::Upper,
    };
    let domain = masabs_core::approx(&model, &request, &ApproxOptions::default()).unwrap();
    let mapping = abstraction::MappingFunction {
        target: Target::Template("Voter".into()),
        scope: ["has".to_string(), "voted".to_string()].into(),
        remove: vec!["mem_dec".into()],
        merge: None,
    };
    let from_library = abstraction::abstract_model(&model, &mapping, &domain).unwrap();
    assert_eq!(from_files, from_library);

    // and the unfolded combined file of the abstraction still reparses
    let combined = unfold::unfold_model(&from_files).unwrap();
    let single = unfold::to_single_template(&combined, &from_files);
    let bytes = io::serialize_model(&single);
    assert_eq!(io::parse_model(&bytes).unwrap(), single);
}
