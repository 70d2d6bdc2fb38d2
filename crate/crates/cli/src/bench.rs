//! The benchmark harness: runs the built-in model families over a scaling
//! grid, concrete and abstract, and prints result tables with side-by-side
//! deltas against the originally reported state counts.

use clap::{Args, Subcommand};
use rayon::prelude::*;

use masabs_core::approx::ApproxOptions;
use masabs_core::benchmarks::{
    self, apply_abstraction_chain, reduction_percent, BenchRecord, PostalAbstraction,
    POSTAL_QUERY, SOCIAL_QUERY,
};
use masabs_core::checker::{check, CheckOptions, Query, Runtime, Verdict};
use masabs_core::MasTemplate;

use crate::{Cli, CliError, CliResult};

#[derive(Args)]
pub struct BenchArgs {
    #[command(subcommand)]
    family: Family,
}

#[derive(Subcommand)]
enum Family {
    /// Postal voting: concrete model plus abstractions A1, A2, A3
    Postal {
        /// Largest voter count; rows run NV = 1..=max
        #[arg(long, default_value_t = 3)]
        max: u32,

        /// Number of candidates
        #[arg(long, default_value_t = 3)]
        nc: u32,

        /// Write the concrete model files into this directory and exit
        #[arg(long)]
        emit_models: Option<std::path::PathBuf>,
    },
    /// Gossip-learning ring with an impersonating attacker
    Social {
        /// Largest total agent count; rows run agents = 2..=max
        #[arg(long, default_value_t = 4)]
        max: u32,

        /// Write the concrete model files into this directory and exit
        #[arg(long)]
        emit_models: Option<std::path::PathBuf>,
    },
}

struct Measured {
    states: u64,
    time_ms: u64,
    verdict: Verdict,
    capped: bool,
}

fn measure(model: &MasTemplate, query_text: &str, opts: &CheckOptions) -> Result<Measured, CliError> {
    let runtime = Runtime::from_model(model).map_err(CliError::input)?;
    let query = Query::parse(query_text, model).map_err(CliError::input)?;
    let outcome = check(&runtime, &query, opts).map_err(CliError::input)?;
    Ok(Measured {
        states: outcome.stats.states,
        time_ms: outcome.stats.time_ms,
        verdict: outcome.verdict,
        capped: outcome.stats.capped,
    })
}

fn verdict_name(verdict: Verdict) -> &'static str {
    match verdict {
        Verdict::Holds => "holds",
        Verdict::Fails => "fails",
        Verdict::Inconclusive => "inconclusive",
    }
}

pub fn run(cli: &Cli, args: &BenchArgs) -> CliResult {
    let opts = CheckOptions {
        state_cap: cli.cap.unwrap_or(u64::MAX),
        threads: 1,
    };
    match &args.family {
        Family::Postal {
            max,
            nc,
            emit_models: Some(dir),
        } => emit(dir, (1..=*max).map(|nv| {
            (
                format!("postal_nv{nv}_nc{nc}.xml"),
                masabs_core::benchmarks::build_postal(nv, *nc),
            )
        })),
        Family::Social {
            max,
            emit_models: Some(dir),
        } => emit(dir, (2..=*max).map(|agents| {
            (
                format!("social_ag{agents}.xml"),
                masabs_core::benchmarks::build_social_ai(agents),
            )
        })),
        Family::Postal { max, nc, .. } => postal(cli, *max, *nc, &opts),
        Family::Social { max, .. } => social(cli, *max, &opts),
    }
}

fn emit(
    dir: &std::path::Path,
    models: impl Iterator<Item = (String, Result<MasTemplate, masabs_core::benchmarks::BenchmarkError>)>,
) -> CliResult {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Input(format!("creating {}: {e}", dir.display())))?;
    for (name, model) in models {
        let model = model.map_err(CliError::usage)?;
        let path = dir.join(name);
        std::fs::write(&path, masabs_core::io::serialize_model(&model))
            .map_err(|e| CliError::Input(format!("writing {}: {e}", path.display())))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn parallelize<T: Send, F>(cli: &Cli, inputs: Vec<T>, task: F) -> Result<Vec<Vec<BenchRecord>>, CliError>
where
    F: Fn(T) -> Result<Vec<BenchRecord>, CliError> + Sync + Send,
{
    if cli.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build()
            .map_err(CliError::input)?;
        pool.install(|| inputs.into_par_iter().map(&task).collect())
    } else {
        inputs.into_iter().map(task).collect()
    }
}

fn postal(cli: &Cli, max: u32, nc: u32, opts: &CheckOptions) -> CliResult {
    if max < 1 {
        return Err(CliError::Usage("--max must be at least 1".into()));
    }
    let grid: Vec<u32> = (1..=max).collect();
    let opts = *opts;
    let rows = parallelize(cli, grid, |nv| {
        let concrete = benchmarks::build_postal(nv, nc).map_err(CliError::input)?;
        let mut records = Vec::new();
        let reference = benchmarks::reference::POSTAL_STATES.get(nv as usize - 1);
        let concrete_run = measure(&concrete, POSTAL_QUERY, &opts)?;
        records.push(BenchRecord {
            family: "postal".into(),
            params: format!("NV={nv}"),
            config: "concrete".into(),
            states: concrete_run.states,
            time_ms: concrete_run.time_ms,
            verdict: if concrete_run.capped {
                "memout".into()
            } else {
                verdict_name(concrete_run.verdict).into()
            },
            reduction: None,
            reference_states: reference.and_then(|r| r.0),
        });
        for which in PostalAbstraction::all() {
            let steps = benchmarks::postal_abstraction(which);
            let abstracted = apply_abstraction_chain(&concrete, &steps, &ApproxOptions::default())
                .map_err(CliError::input)?;
            let run = measure(&abstracted, POSTAL_QUERY, &opts)?;
            let reference_states = reference.and_then(|r| match which {
                PostalAbstraction::A1 => r.1,
                PostalAbstraction::A2 => r.2,
                PostalAbstraction::A3 => r.3,
            });
            records.push(BenchRecord {
                family: "postal".into(),
                params: format!("NV={nv}"),
                config: which.name().into(),
                states: run.states,
                time_ms: run.time_ms,
                verdict: if run.capped {
                    "memout".into()
                } else {
                    verdict_name(run.verdict).into()
                },
                reduction: (!run.capped && !concrete_run.capped)
                    .then(|| reduction_percent(concrete_run.states, run.states)),
                reference_states,
            });
        }
        Ok(records)
    })?;

    let records: Vec<BenchRecord> = rows.into_iter().flatten().collect();
    if cli.json {
        print_json(&records);
        return Ok(());
    }

    println!("postal voting, NC={nc}, query {POSTAL_QUERY}");
    println!(
        "{:>4} | {:>21} | {:>21} | {:>21} | {:>21}",
        "#V", "concrete #St/ref  t", "A1 #St/ref  t", "A2 #St/ref  t", "A3 #St/ref  t"
    );
    for nv in 1..=max {
        let params = format!("NV={nv}");
        let cell = |config: &str| -> String {
            let record = records
                .iter()
                .find(|r| r.params == params && r.config == config)
                .expect("record present");
            format_cell(record)
        };
        println!(
            "{:>4} | {:>21} | {:>21} | {:>21} | {:>21}",
            nv,
            cell("concrete"),
            cell("A1"),
            cell("A2"),
            cell("A3")
        );
    }
    print_verdict_summary(&records);
    Ok(())
}

fn social(cli: &Cli, max: u32, opts: &CheckOptions) -> CliResult {
    if max < 2 {
        return Err(CliError::Usage("--max must be at least 2".into()));
    }
    let grid: Vec<u32> = (2..=max).collect();
    let opts = *opts;
    let rows = parallelize(cli, grid, |agents| {
        let concrete = benchmarks::build_social_ai(agents).map_err(CliError::input)?;
        let reference = benchmarks::reference::SOCIAL_STATES.get(agents as usize - 2);
        let mut records = Vec::new();
        let concrete_run = measure(&concrete, SOCIAL_QUERY, &opts)?;
        records.push(BenchRecord {
            family: "social".into(),
            params: format!("Ag={agents}"),
            config: "concrete".into(),
            states: concrete_run.states,
            time_ms: concrete_run.time_ms,
            verdict: if concrete_run.capped {
                "memout".into()
            } else {
                verdict_name(concrete_run.verdict).into()
            },
            reduction: None,
            reference_states: reference.and_then(|r| r.0),
        });
        let (request, mapping) = benchmarks::social_abstraction();
        let abstracted =
            apply_abstraction_chain(&concrete, &[(request, mapping)], &ApproxOptions::default())
                .map_err(CliError::input)?;
        let run = measure(&abstracted, SOCIAL_QUERY, &opts)?;
        records.push(BenchRecord {
            family: "social".into(),
            params: format!("Ag={agents}"),
            config: "abstract".into(),
            states: run.states,
            time_ms: run.time_ms,
            verdict: if run.capped {
                "memout".into()
            } else {
                verdict_name(run.verdict).into()
            },
            reduction: (!run.capped && !concrete_run.capped)
                .then(|| reduction_percent(concrete_run.states, run.states)),
            reference_states: reference.and_then(|r| r.1),
        });
        Ok(records)
    })?;

    let records: Vec<BenchRecord> = rows.into_iter().flatten().collect();
    if cli.json {
        print_json(&records);
        return Ok(());
    }

    println!("social AI ring, query {SOCIAL_QUERY}");
    println!(
        "{:>4} | {:>21} | {:>21} | {:>16}",
        "#Ag", "concrete #St/ref  t", "abstract #St/ref  t", "reduct"
    );
    for agents in 2..=max {
        let params = format!("Ag={agents}");
        let record = |config: &str| {
            records
                .iter()
                .find(|r| r.params == params && r.config == config)
                .expect("record present")
        };
        let abstract_record = record("abstract");
        let reduct = match abstract_record.reduction {
            Some(percent) => format!("{percent:.2}%"),
            None => "--".into(),
        };
        let reference_reduct = benchmarks::reference::SOCIAL_STATES
            .get(agents as usize - 2)
            .and_then(|r| match (r.0, r.1) {
                (Some(c), Some(a)) => Some(format!("{:.2}%", (1.0 - a / c) * 100.0)),
                _ => None,
            })
            .unwrap_or_else(|| "--".into());
        println!(
            "{:>4} | {:>21} | {:>21} | {:>7}/{:>7}",
            agents,
            format_cell(record("concrete")),
            format_cell(abstract_record),
            reduct,
            reference_reduct
        );
    }
    print_verdict_summary(&records);
    Ok(())
}

fn format_states(states: u64) -> String {
    if states >= 1_000_000 {
        format!("{:.1}e+6", states as f64 / 1e6)
    } else {
        states.to_string()
    }
}

fn format_reference(reference: Option<f64>) -> String {
    match reference {
        None => "memout".into(),
        Some(r) if r >= 1e6 => format!("{:.1}e+6", r / 1e6),
        Some(r) => format!("{}", r as u64),
    }
}

fn format_cell(record: &BenchRecord) -> String {
    let states = if record.verdict == "memout" {
        "memout".to_string()
    } else {
        format_states(record.states)
    };
    format!(
        "{}/{} {:>5.1}",
        states,
        format_reference(record.reference_states),
        record.time_ms as f64 / 1000.0
    )
}

fn print_verdict_summary(records: &[BenchRecord]) {
    let mut summary: Vec<String> = Vec::new();
    for record in records {
        summary.push(format!(
            "{} {}: {}",
            record.params, record.config, record.verdict
        ));
    }
    println!("verdicts: {}", summary.join("; "));
}

fn print_json(records: &[BenchRecord]) {
    for record in records {
        let value = serde_json::json!({
            "family": record.family,
            "params": record.params,
            "config": record.config,
            "states": record.states,
            "time_ms": record.time_ms,
            "verdict": record.verdict,
            "reduction": record.reduction,
            "reference_states": record.reference_states,
        });
        println!("{value}");
    }
}
