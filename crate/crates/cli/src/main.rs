use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use seasql::config::{Ablation, BackendSpec, Config};
use seasql::dataset::{
    build_training_pairs, database_path, self_check, serialize_sft, GoldExample,
};
use seasql::eval::{evaluate, load_dataset, read_predictions, write_jsonl, EvalReport, Prediction};
use seasql::llm::{report_costs, CostLedger, CostReport};
use seasql::pipeline::{save_index, Backends, Pipeline, PipelineResult, SchemaCache, Task};
use seasql::schema::{introspect_database, ValueIndex};

#[derive(Parser)]
#[command(
    name = "seasql",
    version,
    about = "Semantic-enhanced text-to-SQL pipeline"
)]
struct Cli {
    /// JSON config file
    #[arg(long, global = true, value_name = "JSON")]
    config: Option<PathBuf>,
    /// Disable a stage: ses, abe or dea (repeatable)
    #[arg(long, global = true, value_name = "STAGE")]
    ablate: Vec<Ablation>,
    #[arg(long, global = true, value_name = "N")]
    parallelism: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    max_iters: Option<usize>,
    /// `http` or `scripted:<file>`
    #[arg(long, global = true, value_name = "SPEC")]
    backend: Option<BackendSpec>,
    /// Backend for the bias eliminator; defaults to --backend
    #[arg(long, global = true, value_name = "SPEC")]
    elim_backend: Option<BackendSpec>,
    /// Directory of cached value indexes
    #[arg(long, global = true, value_name = "DIR")]
    index_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Spider or BIRD style JSON array
    #[arg(long)]
    dataset: PathBuf,
    /// Directory holding `<db_id>/<db_id>.sqlite`
    #[arg(long)]
    db_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build and cache value indexes for every database under a directory
    Index {
        db_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pre-SQL only; writes predictions JSONL
    Generate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline; writes one result record per question
    Refine {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a predictions file
    Eval {
        #[command(flatten)]
        data: DataArgs,
        /// JSONL of {id, db_id, sql}; refine output is accepted too
        #[arg(long)]
        predictions: PathBuf,
        /// Refine output to include a cost summary from
        #[arg(long)]
        costs: Option<PathBuf>,
        /// Per-question records as JSONL
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the bias-eliminator training corpus
    BuildDataset {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        /// Full training pairs as JSONL
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Price the usage recorded in refine output
    CostReport {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let config = effective_config(&cli)?;
    match &cli.command {
        Command::Index { db_dir, out } => {
            let out = out
                .clone()
                .or(cli.index_dir.clone())
                .unwrap_or_else(|| "index".into());
            index(db_dir, &out, &config)?;
        }
        Command::Generate { data, out } => {
            let examples = load_dataset(&data.dataset, &data.db_dir)?;
            let (pipeline, _) = pipeline(&cli, &config)?;
            let mut preds = Vec::new();
            for (ex, r) in examples
                .iter()
                .zip(pipeline.generate_batch(&tasks(&examples)))
            {
                match r {
                    Ok((pre, _)) => preds.push(Prediction {
                        id: ex.id.clone(),
                        db_id: ex.db_id.clone(),
                        sql: pre.sql,
                    }),
                    Err(e) => eprintln!("warning: {}: {e}", ex.id),
                }
            }
            emit_jsonl(out.as_deref(), &preds)?;
            eprintln!("generated {} of {} questions", preds.len(), examples.len());
        }
        Command::Refine { data, out } => {
            let examples = load_dataset(&data.dataset, &data.db_dir)?;
            let (pipeline, _) = pipeline(&cli, &config)?;
            let mut results: Vec<PipelineResult> = Vec::new();
            for (ex, r) in examples.iter().zip(pipeline.run_batch(&tasks(&examples))) {
                match r {
                    Ok(r) => results.push(r),
                    Err(e) => eprintln!("warning: {}: {e}", ex.id),
                }
            }
            emit_jsonl(out.as_deref(), &results)?;
            let exhausted = results.iter().filter(|r| r.exhausted).count();
            eprintln!(
                "refined {} of {} questions ({exhausted} exhausted the adjustment loop)",
                results.len(),
                examples.len()
            );
        }
        Command::Eval {
            data,
            predictions,
            costs,
            records,
            out,
        } => {
            let examples = load_dataset(&data.dataset, &data.db_dir)?;
            let preds = read_predictions(predictions)?;
            let evaluated = evaluate(
                &examples,
                &preds,
                &config.executor,
                config.pipeline.parallelism,
            )?;
            if let Some(path) = records {
                write_jsonl(path, &evaluated)?;
            }
            let cost = costs
                .as_deref()
                .map(|p| cost_report(p, &config))
                .transpose()?;
            let report = EvalReport::new(&evaluated, cost, Some(config.clone()))?;
            emit_report(out.as_deref(), &report.to_json(), &report.table())?;
        }
        Command::BuildDataset { data, out, pairs } => {
            let examples = load_dataset(&data.dataset, &data.db_dir)?;
            let (pipeline, _) = pipeline(&cli, &config)?;
            let build = build_training_pairs(&pipeline, &examples)?;
            let n = serialize_sft(&build.pairs, out)?;
            if let Some(path) = pairs {
                write_jsonl(path, &build.pairs)?;
            }
            let check = self_check(&build.pairs, &config.executor);
            println!(
                "wrote {n} records to {}: kept_pre {} kept_gold {} (kept_pre fraction {:.3}), skipped {}",
                out.display(),
                build.kept_pre(),
                build.kept_gold(),
                build.kept_pre_fraction(),
                build.skipped.len()
            );
            println!(
                "self-check: {}/{} pairs reproduced",
                check.passed,
                build.pairs.len()
            );
            if !check.ok() {
                bail!("self-check failed for: {}", check.failed.join(", "));
            }
        }
        Command::CostReport { results, out } => {
            let report = cost_report(results, &config)?;
            let json = serde_json::to_string_pretty(&report)?;
            emit_report(out.as_deref(), &json, &cost_table(&report))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn effective_config(cli: &Cli) -> Result<Config> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    for a in &cli.ablate {
        config.pipeline.ablate(*a);
    }
    if let Some(n) = cli.parallelism {
        config.pipeline.parallelism = n;
    }
    if let Some(n) = cli.max_iters {
        config.pipeline.max_iters = n;
    }
    config.validate()?;
    Ok(config)
}

fn pipeline(cli: &Cli, config: &Config) -> Result<(Pipeline, Arc<CostLedger>)> {
    let gen_spec = match &cli.backend {
        Some(s) => s.clone(),
        None => config
            .gateway
            .backend
            .parse()
            .map_err(anyhow::Error::msg)
            .context("gateway.backend")?,
    };
    let elim_spec = match (&cli.elim_backend, &config.gateway.elim_backend) {
        (Some(s), _) => s.clone(),
        (None, Some(s)) => s
            .parse()
            .map_err(anyhow::Error::msg)
            .context("gateway.elim_backend")?,
        (None, None) => gen_spec.clone(),
    };
    let ledger = Arc::new(CostLedger::new());
    let gen_backend = gen_spec.instantiate()?;
    let elim_backend = if elim_spec == gen_spec {
        gen_backend.clone()
    } else {
        elim_spec.instantiate()?
    };
    let backends = Backends {
        generator: config.gateway.gateway(gen_backend, ledger.clone()),
        eliminator: config.gateway.gateway(elim_backend, ledger.clone()),
    };
    let cache = Arc::new(SchemaCache::new(cli.index_dir.clone()));
    Ok((
        Pipeline::with_cache(config.clone(), backends, cache),
        ledger,
    ))
}

fn tasks(examples: &[GoldExample]) -> Vec<Task> {
    examples
        .iter()
        .map(|e| Task {
            id: e.id.clone(),
            question: e.question.clone(),
            db_path: e.db_path.clone(),
        })
        .collect()
}

fn index(db_dir: &Path, out: &Path, config: &Config) -> Result<()> {
    let mut ids: Vec<String> = std::fs::read_dir(db_dir)
        .with_context(|| format!("reading {}", db_dir.display()))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|id| database_path(db_dir, id).is_file())
        .collect();
    ids.sort();
    if ids.is_empty() {
        bail!(
            "no `<db_id>/<db_id>.sqlite` databases under {}",
            db_dir.display()
        );
    }
    for id in ids {
        let path = database_path(db_dir, &id);
        let schema = introspect_database(&path)?;
        let index = ValueIndex::build(&path, &schema, &config.enhancement)?;
        let file = out.join(format!("{id}.index.json"));
        save_index(&file, &index).with_context(|| format!("writing {}", file.display()))?;
        let docs: usize = index.columns().iter().map(|c| c.len()).sum();
        println!(
            "{id}: {} columns, {docs} values -> {}",
            index.columns().len(),
            file.display()
        );
    }
    Ok(())
}

fn cost_report(results: &Path, config: &Config) -> Result<CostReport> {
    let text = std::fs::read_to_string(results)
        .with_context(|| format!("reading {}", results.display()))?;
    let ledger = CostLedger::new();
    for (n, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let r: PipelineResult = serde_json::from_str(line)
            .with_context(|| format!("{} line {}", results.display(), n + 1))?;
        for e in &r.usage.entries {
            ledger.record_calls(e.stage, &e.model_tag, e.calls, e.usage);
        }
        ledger.record_query();
    }
    Ok(report_costs(&ledger, &config.gateway.prices)?)
}

fn cost_table(r: &CostReport) -> String {
    let mut s = format!(
        "{:<12}{:>7}{:>12}{:>12}{:>14}\n",
        "stage", "calls", "prompt", "completion", "usd"
    );
    for (stage, c) in &r.stages {
        s += &format!(
            "{:<12}{:>7}{:>12}{:>12}{:>14.6}\n",
            stage.as_str(),
            c.calls,
            c.prompt_tokens,
            c.completion_tokens,
            c.cost_usd
        );
    }
    let t = &r.total;
    s += &format!(
        "{:<12}{:>7}{:>12}{:>12}{:>14.6}\n",
        "total", t.calls, t.prompt_tokens, t.completion_tokens, t.cost_usd
    );
    s += &format!(
        "{} queries, ${:.6} per query\n",
        r.queries, r.mean_cost_per_query_usd
    );
    s
}

fn emit_jsonl<T: serde::Serialize>(out: Option<&Path>, items: &[T]) -> Result<()> {
    match out {
        Some(path) => write_jsonl(path, items)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            for item in items {
                writeln!(stdout, "{}", serde_json::to_string(item)?)?;
            }
        }
    }
    Ok(())
}

/// JSON to `out` (table on stdout), or JSON on stdout (table on stderr).
fn emit_report(out: Option<&Path>, json: &str, table: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
            print!("{table}");
        }
        None => {
            println!("{json}");
            eprint!("{table}");
        }
    }
    Ok(())
}
