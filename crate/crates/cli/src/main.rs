//! Command-line front end: `configure`, `unfold`, `approx`, `abstract`,
//! `info`, `check`, and `bench`.
//!
//! Exit codes: 0 success, 1 I/O or parse error, 2 usage error,
//! 3 inconclusive verdict (state cap hit before a decision).

mod bench;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use masabs_core::abstraction::{abstract_model, MappingFunction, MergeSpec};
use masabs_core::approx::{approx, ApproxRequest, DomainTag, Target};
use masabs_core::checker::{self, CheckOptions, Query, Runtime, Verdict};
use masabs_core::io::{self, Config};
use masabs_core::unfold;

#[derive(Parser)]
#[command(name = "masabs", version, about = "Reduce agent-network model specifications by \
may/must variable abstraction, and check invariant/reachability queries on them")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Model file to read
    #[arg(long, global = true)]
    input: Option<PathBuf>,

    /// File to write (model, domain, or config output)
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Configuration file supplying defaults for the pipeline commands
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// State-count cap; exploration beyond it reports as inconclusive
    #[arg(long, global = true)]
    cap: Option<u64>,

    /// Worker threads for exploration (and bench grid points)
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Machine-readable JSON output
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Set parameters in the configuration file and print the result
    Configure(ConfigureArgs),
    /// Produce the combined graph of a model as a single-template file
    Unfold,
    /// Compute an upper/lower approximation of the local domain
    Approx(MappingArgs),
    /// Generate an abstract model from a local-domain file
    Abstract(AbstractArgs),
    /// List the variables, locations, and edges in the model
    Info,
    /// Decide an `A[] p` or `E<> p` query on the model's global state space
    Check(CheckArgs),
    /// Run the built-in benchmark families and print result tables
    Bench(bench::BenchArgs),
}

#[derive(Args, Default)]
struct MappingArgs {
    /// Target template name, or `ext` for the combined graph
    #[arg(long)]
    target: Option<String>,

    /// Variables to approximate/remove, comma separated
    #[arg(long, value_delimiter = ',')]
    vars: Vec<String>,

    /// Abstraction type: `upper` or `lower`
    #[arg(long = "type")]
    abstraction_type: Option<String>,

    /// Scope of the abstraction: locations, comma separated (default all)
    #[arg(long, value_delimiter = ',')]
    scope: Vec<String>,

    /// Merge variable name
    #[arg(long)]
    merge_name: Option<String>,

    /// Merge variable initial value
    #[arg(long)]
    merge_init: Option<i64>,

    /// Merge defining expression over the removed variables
    #[arg(long)]
    merge_expr: Option<String>,

    /// Channels assumed always available for lower approximations
    #[arg(long, value_delimiter = ',')]
    assume_sync: Vec<String>,

    /// Completion-enumeration cap per edge and vector
    #[arg(long)]
    completion_cap: Option<u64>,

    /// Cap on the total number of stored domain vectors
    #[arg(long)]
    max_vectors: Option<u64>,
}

#[derive(Args)]
struct ConfigureArgs {
    #[command(flatten)]
    mapping: MappingArgs,
}

#[derive(Args)]
struct AbstractArgs {
    /// Local-domain file produced by `approx`
    #[arg(long)]
    domain: Option<PathBuf>,

    #[command(flatten)]
    mapping: MappingArgs,
}

#[derive(Args)]
struct CheckArgs {
    /// Query text, e.g. 'A[](b_recv<=ep_sent && ep_sent<=NV)'
    #[arg(long)]
    query: Option<String>,

    /// File containing the query text
    #[arg(long)]
    query_file: Option<PathBuf>,
}

enum CliError {
    /// I/O or parse failure: exit 1.
    Input(String),
    /// Bad invocation or parameter value: exit 2.
    Usage(String),
    /// Exploration capped before a decision: exit 3.
    Inconclusive,
}

impl CliError {
    fn input(e: impl std::fmt::Display) -> CliError {
        CliError::Input(e.to_string())
    }

    fn usage(e: impl std::fmt::Display) -> CliError {
        CliError::Usage(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Configure(args) => cmd_configure(&cli, args),
        Command::Unfold => cmd_unfold(&cli),
        Command::Approx(args) => cmd_approx(&cli, args),
        Command::Abstract(args) => cmd_abstract(&cli, args),
        Command::Info => cmd_info(&cli),
        Command::Check(args) => cmd_check(&cli, args),
        Command::Bench(args) => bench::run(&cli, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Inconclusive) => ExitCode::from(3),
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("reading {}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &str) -> Result<(), CliError> {
    fs::write(path, bytes)
        .map_err(|e| CliError::Input(format!("writing {}: {e}", path.display())))
}

fn load_model(cli: &Cli) -> Result<(masabs_core::MasTemplate, PathBuf), CliError> {
    let path = resolve_input(cli)?;
    let bytes = read_file(&path)?;
    let model = io::parse_model(&bytes).map_err(CliError::input)?;
    Ok((model, path))
}

fn resolve_input(cli: &Cli) -> Result<PathBuf, CliError> {
    // read the config file first even when --input wins, so that warnings
    // about unknown keys always surface
    let config = load_config_file(cli)?;
    if let Some(path) = &cli.input {
        return Ok(path.clone());
    }
    if let Some(input) = config.and_then(|c| c.input) {
        return Ok(PathBuf::from(input));
    }
    Err(CliError::Usage(
        "no input model: pass --input or set `input` in the config file".into(),
    ))
}

fn resolve_output(cli: &Cli, config: &Config) -> Result<PathBuf, CliError> {
    if let Some(path) = &cli.output {
        return Ok(path.clone());
    }
    if let Some(output) = &config.output {
        return Ok(PathBuf::from(output));
    }
    Err(CliError::Usage(
        "no output path: pass --output or set `output` in the config file".into(),
    ))
}

fn load_config_file(cli: &Cli) -> Result<Option<Config>, CliError> {
    let Some(path) = &cli.config else {
        return Ok(None);
    };
    if !path.exists() {
        return Ok(None);
    }
    let bytes = read_file(path)?;
    let (config, warnings) = io::read_config(&bytes).map_err(CliError::usage)?;
    for warning in warnings {
        eprintln!("warning: {}: {warning}", path.display());
    }
    Ok(Some(config))
}

impl MappingArgs {
    /// Flags expressed as a config overlay; flags override file values.
    fn as_config(&self) -> Result<Config, CliError> {
        let abstraction_type = match &self.abstraction_type {
            None => None,
            Some(raw) => Some(DomainTag::parse(raw).ok_or_else(|| {
                CliError::Usage(format!("--type: `{raw}` is not one of `upper`, `lower`"))
            })?),
        };
        let merge = match (&self.merge_name, &self.merge_expr) {
            (Some(name), Some(expr)) => Some(io::MergeConfig {
                name: name.clone(),
                initial: self.merge_init.unwrap_or(0),
                expr: expr.clone(),
            }),
            (None, None) => None,
            _ => {
                return Err(CliError::Usage(
                    "--merge-name and --merge-expr must be given together".into(),
                ))
            }
        };
        Ok(Config {
            input: None,
            output: None,
            target: self.target.clone(),
            vars: self.vars.clone(),
            abstraction_type,
            scope: self.scope.clone(),
            merge,
            assume_sync: self.assume_sync.clone(),
            completion_cap: self.completion_cap,
            max_vectors: self.max_vectors,
        })
    }
}

/// Config seen by a pipeline command: file defaults overlaid by flags.
fn effective_config(cli: &Cli, args: &MappingArgs) -> Result<Config, CliError> {
    let base = load_config_file(cli)?.unwrap_or_default();
    let mut merged = base.merged_with(&args.as_config()?);
    if let Some(input) = &cli.input {
        merged.input = Some(input.display().to_string());
    }
    if let Some(output) = &cli.output {
        merged.output = Some(output.display().to_string());
    }
    Ok(merged)
}

fn cmd_configure(cli: &Cli, args: &ConfigureArgs) -> CliResult {
    let path = cli.config.as_ref().ok_or_else(|| {
        CliError::Usage("configure needs --config naming the file to update".into())
    })?;
    let base = load_config_file(cli)?.unwrap_or_default();
    let mut merged = base.merged_with(&args.mapping.as_config()?);
    if let Some(input) = &cli.input {
        merged.input = Some(input.display().to_string());
    }
    if let Some(output) = &cli.output {
        merged.output = Some(output.display().to_string());
    }
    let rendered = io::write_config(&merged);
    write_file(path, &rendered)?;
    print!("{rendered}");
    Ok(())
}

fn cmd_unfold(cli: &Cli) -> CliResult {
    let (model, _) = load_model(cli)?;
    let config = load_config_file(cli)?.unwrap_or_default();
    let output = resolve_output(cli, &config)?;
    let combined = unfold::unfold_model(&model).map_err(CliError::input)?;
    for warning in &combined.warnings {
        eprintln!("warning: {warning}");
    }
    let single = unfold::to_single_template(&combined, &model);
    write_file(&output, &io::serialize_model(&single))?;
    println!("{}", output.display());
    Ok(())
}

fn mapping_of(config: &Config) -> Result<(ApproxRequest, MappingFunction), CliError> {
    let target = Target::parse(
        config
            .target
            .as_deref()
            .ok_or_else(|| CliError::Usage("no target: pass --target or set it in the config".into()))?,
    );
    if config.vars.is_empty() {
        return Err(CliError::Usage(
            "no variables: pass --vars or set `vars` in the config".into(),
        ));
    }
    let tag = config.abstraction_type.ok_or_else(|| {
        CliError::Usage("no abstraction type: pass --type upper|lower or set `type`".into())
    })?;
    let merge = match &config.merge {
        None => None,
        Some(m) => Some(MergeSpec {
            name: m.name.clone(),
            initial: m.initial,
            expr: masabs_core::io::text::parse_expression(&m.expr)
                .map_err(|e| CliError::Usage(format!("merge_expr: {e}")))?,
        }),
    };
    let request = ApproxRequest {
        variables: config.vars.clone(),
        target: target.clone(),
        tag,
    };
    let mapping = MappingFunction {
        target,
        scope: config.scope.iter().cloned().collect::<BTreeSet<_>>(),
        remove: config.vars.clone(),
        merge,
    };
    Ok((request, mapping))
}

fn cmd_approx(cli: &Cli, args: &MappingArgs) -> CliResult {
    let config = effective_config(cli, args)?;
    let (model, _) = load_model(cli)?;
    let output = resolve_output(cli, &config)?;
    let (request, _) = mapping_of(&config)?;
    let domain = approx(&model, &request, &config.approx_options()).map_err(CliError::input)?;
    write_file(&output, &io::write_domain(&domain))?;
    println!("{}", output.display());
    Ok(())
}

fn cmd_abstract(cli: &Cli, args: &AbstractArgs) -> CliResult {
    let config = effective_config(cli, &args.mapping)?;
    let (model, _) = load_model(cli)?;
    let output = resolve_output(cli, &config)?;
    let domain_path = args
        .domain
        .as_ref()
        .ok_or_else(|| CliError::Usage("abstract needs --domain with the local-domain file".into()))?;
    let domain = io::read_domain(&read_file(domain_path)?).map_err(CliError::input)?;
    let (_, mapping) = mapping_of(&config)?;
    let abstracted = abstract_model(&model, &mapping, &domain).map_err(CliError::input)?;
    write_file(&output, &io::serialize_model(&abstracted))?;
    println!("{}", output.display());
    Ok(())
}

fn cmd_info(cli: &Cli) -> CliResult {
    let (model, path) = load_model(cli)?;
    if cli.json {
        let value = serde_json::json!({
            "file": path.display().to_string(),
            "constants": model.constants,
            "channels": model.channels,
            "globals": model.globals.iter().map(var_json).collect::<Vec<_>>(),
            "templates": model.templates.iter().map(|t| serde_json::json!({
                "name": t.graph.name,
                "count": t.count,
                "initial": t.graph.initial,
                "locations": t.graph.locations,
                "variables": t.graph.privates.iter().map(var_json).collect::<Vec<_>>(),
                "edges": t.graph.edges.len(),
            })).collect::<Vec<_>>(),
        });
        println!("{value}");
        return Ok(());
    }

    println!("{}", path.display());
    if !model.constants.is_empty() {
        let rendered: Vec<String> = model
            .constants
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        println!("constants: {}", rendered.join(", "));
    }
    if !model.channels.is_empty() {
        println!("channels: {}", model.channels.join(", "));
    }
    for var in &model.globals {
        println!("global {}", var_line(var));
    }
    for template in &model.templates {
        println!(
            "template {} (instances: {})",
            template.graph.name, template.count
        );
        for location in &template.graph.locations {
            let marker = if *location == template.graph.initial {
                " (initial)"
            } else {
                ""
            };
            println!("  location {location}{marker}");
        }
        for var in &template.graph.privates {
            println!("  var {}", var_line(var));
        }
        for edge in &template.graph.edges {
            let mut line = format!("  edge {} -> {}", edge.source, edge.target);
            if !edge.selects.is_empty() {
                let selects: Vec<String> = edge
                    .selects
                    .iter()
                    .map(|s| format!("{} : int[{},{}]", s.name, s.lo, s.hi))
                    .collect();
                line.push_str(&format!(" select {}", selects.join(", ")));
            }
            if !edge.guard.is_truth() {
                line.push_str(&format!(" guard {}", edge.guard));
            }
            if let Some(sync) = &edge.sync {
                line.push_str(&format!(" sync {sync}"));
            }
            if !edge.updates.is_empty() {
                let updates: Vec<String> = edge.updates.iter().map(|u| u.to_string()).collect();
                line.push_str(&format!(" do {}", updates.join(", ")));
            }
            println!("{line}");
        }
    }
    Ok(())
}

fn var_line(var: &masabs_core::VarDecl) -> String {
    format!(
        "int[{},{}] {} = {}",
        var.lo, var.hi, var.name, var.initial
    )
}

fn var_json(var: &masabs_core::VarDecl) -> serde_json::Value {
    serde_json::json!({
        "name": var.name,
        "lo": var.lo,
        "hi": var.hi,
        "initial": var.initial,
    })
}

fn cmd_check(cli: &Cli, args: &CheckArgs) -> CliResult {
    let (model, _) = load_model(cli)?;
    let query_text = match (&args.query, &args.query_file) {
        (Some(text), None) => text.clone(),
        (None, Some(path)) => read_file(path)?,
        (None, None) => {
            return Err(CliError::Usage(
                "check needs a query: pass --query or --query-file".into(),
            ))
        }
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "pass either --query or --query-file, not both".into(),
            ))
        }
    };
    let query = Query::parse(query_text.trim(), &model).map_err(CliError::input)?;
    let runtime = Runtime::from_model(&model).map_err(CliError::input)?;
    let opts = CheckOptions {
        state_cap: cli.cap.unwrap_or(u64::MAX),
        threads: cli.threads,
    };
    let outcome = checker::check(&runtime, &query, &opts).map_err(CliError::input)?;

    if cli.json {
        let result = match outcome.verdict {
            Verdict::Holds => "holds",
            Verdict::Fails => "fails",
            Verdict::Inconclusive => "inconclusive",
        };
        let value = serde_json::json!({
            "states": outcome.stats.states,
            "transitions": outcome.stats.transitions,
            "result": result,
            "time_ms": outcome.stats.time_ms,
        });
        println!("{value}");
    } else {
        println!("query: {}", query.text);
        match outcome.verdict {
            Verdict::Holds => println!("verdict: holds"),
            Verdict::Fails => println!("verdict: fails"),
            Verdict::Inconclusive => {
                println!("verdict: inconclusive (state cap reached)")
            }
        }
        println!(
            "states: {}  transitions: {}  peak frontier: {}  time: {} ms",
            outcome.stats.states,
            outcome.stats.transitions,
            outcome.stats.peak_frontier,
            outcome.stats.time_ms
        );
        if let Some(trace) = &outcome.trace {
            let role = if query.kind == masabs_core::io::text::QueryKind::Invariant {
                "counterexample"
            } else {
                "witness"
            };
            println!("{role} ({} steps):", trace.steps.len());
            for (i, step) in trace.steps.iter().enumerate() {
                println!("  {:>3}. {}", i + 1, step.label);
            }
            // a zero-step trace means the initial state already decides it
            let (locations, values) = match trace.steps.last() {
                Some(last) => (last.locations.clone(), last.values.clone()),
                None => runtime.decode(&runtime.initial_state()),
            };
            println!("  final locations: {}", locations.join(", "));
            let values: Vec<String> = values.iter().map(|(k, v)| format!("{k}={v}")).collect();
            println!("  final valuation: {}", values.join(", "));
        }
    }

    if outcome.verdict == Verdict::Inconclusive {
        return Err(CliError::Inconclusive);
    }
    Ok(())
}
