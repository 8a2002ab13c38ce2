//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use sha2::{Digest, Sha256};

use seasql::config::{BackendSpec, Config, ExecutorConfig};
use seasql::dataset::{build_training_pairs, load_dataset, self_check, TargetLabel};
use seasql::exec::{results_equal, Row, Value};
use seasql::llm::{
    BackendError, BackendReply, CompletionBackend, CompletionRequest, CostLedger, ScriptEntry,
    ScriptFile, ScriptedBackend,
};
use seasql::pipeline::{
    adjust, Backends, CandidateStage, Pipeline, RunUsage, SqlCandidate, Task, Terminal,
};
use seasql::prompt::{
    render_correct_prompt, render_elimination_prompt, render_generation_prompt,
    render_reflect_prompt, PromptKind, TranscriptStep, TranscriptView,
};
use seasql::schema::{ColumnIndex, ColumnRef, DEFAULT_B, DEFAULT_K1};

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn db(id: &str) -> PathBuf {
    fixtures()
        .join("databases")
        .join(id)
        .join(format!("{id}.sqlite"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("bm25 ranking matches brute force on 100 corpora", bm25),
        ("prompt templates match golden files", goldens),
        (
            "results_equal agrees with set oracle on 200 pairs",
            result_equality,
        ),
        ("adjustment loop step counts and memory", adjustment),
        (
            "training pair labels and self-check on mini dataset",
            substitution,
        ),
        ("ablations degrade EX monotonically", ablation),
        ("gold-as-predictions EX and VES", ves_sanity),
        (
            "cost ledger conservation over 50 parallel runs",
            cost_conservation,
        ),
        ("databases unchanged after evaluation", read_only),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(()) => println!("PASS {}: {name}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}: {name}: {why}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

// 1 -------------------------------------------------------------------------

fn brute_force_bm25(docs: &[Vec<&str>], query: &[&str]) -> Vec<(u32, f64)> {
    let (k1, b) = (1.2, 0.75);
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len()).sum::<usize>() as f64 / n;
    let terms: BTreeSet<&str> = query.iter().copied().collect();
    let mut out: Vec<(u32, f64)> = docs
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut s = 0.0;
            for t in &terms {
                let tf = d.iter().filter(|w| *w == t).count() as f64;
                if tf > 0.0 {
                    let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
                    let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                    s += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * d.len() as f64 / avgdl));
                }
            }
            (i as u32, s)
        })
        .collect();
    out.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    out
}

fn bm25() -> Check {
    const VOCAB: &[&str] = &[
        "alpha", "beta", "gamma", "delta", "park", "river", "north", "south", "old", "new",
    ];
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(7);
    for corpus in 0..100 {
        let n_docs = rng.random_range(1..=50);
        let mut seen = BTreeSet::new();
        let docs: Vec<Vec<&str>> = (0..n_docs)
            .map(|_| {
                let len = rng.random_range(1..=8);
                (0..len)
                    .map(|_| *VOCAB.choose(&mut rng).unwrap())
                    .collect::<Vec<_>>()
            })
            .filter(|d| seen.insert(d.join(" ")))
            .collect();
        let query: Vec<&str> = (0..rng.random_range(1..=4))
            .map(|_| *VOCAB.choose(&mut rng).unwrap())
            .collect();
        let index = ColumnIndex::new(
            ColumnRef::new("t", "c"),
            false,
            docs.iter().map(|d| d.join(" ")),
            10_000,
        );
        let got = index.rank(&query.join(" "), DEFAULT_K1, DEFAULT_B, usize::MAX);
        let want = brute_force_bm25(&docs, &query);
        ensure!(
            got.len() == want.len(),
            "corpus {corpus}: {} ranked, expected {}",
            got.len(),
            want.len()
        );
        for (rank, (g, w)) in got.iter().zip(&want).enumerate() {
            ensure!(
                g.doc == w.0 && (g.score - w.1).abs() <= 1e-9 * w.1.abs().max(1.0),
                "corpus {corpus} rank {rank}: got doc {} ({}), expected doc {} ({})",
                g.doc,
                g.score,
                w.0,
                w.1
            );
        }
    }
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(5), "took {took:?}");
    Ok(())
}

// 2 -------------------------------------------------------------------------

fn goldens() -> Check {
    const SCHEMA: &str = "table singer
  singer_id integer
  name text -- examples: 'Joe Sharp'
  country text -- examples: 'France', 'Netherlands'
  primary key: singer_id";
    const QUESTION: &str = "How many singers are from France?";
    let golden = |name: &str| {
        std::fs::read_to_string(fixtures().join("prompts").join(name))
            .map_err(|e| format!("{name}: {e}"))
    };
    let step0 = TranscriptStep {
        sql: "SELECT count(*) FROM singers WHERE country = 'France'".into(),
        error_message: "no such table: singers".into(),
        error_reason: None,
        new_sql: None,
    };
    let one = TranscriptView::new(vec![step0.clone()]).map_err(|e| e.to_string())?;
    let two = TranscriptView::new(vec![
        TranscriptStep {
            error_reason: Some("The table is called singer, not singers.".into()),
            new_sql: Some("SELECT count(*) FROM singer WHERE nation = 'France'".into()),
            ..step0
        },
        TranscriptStep {
            sql: "SELECT count(*) FROM singer WHERE nation = 'France'".into(),
            error_message: "no such column: nation".into(),
            error_reason: None,
            new_sql: None,
        },
    ])
    .map_err(|e| e.to_string())?;
    let e = |e: seasql::prompt::PromptError| e.to_string();
    let rendered = [
        (
            "gen_basic.txt",
            render_generation_prompt(SCHEMA, QUESTION).map_err(e)?.text,
        ),
        (
            "elim_basic.txt",
            render_elimination_prompt(
                SCHEMA,
                QUESTION,
                "SELECT count(*) FROM singer WHERE country = 'france'",
                "[(0,)]",
            )
            .map_err(e)?
            .text,
        ),
        (
            "reflect_1step.txt",
            render_reflect_prompt(SCHEMA, QUESTION, &one)
                .map_err(e)?
                .text,
        ),
        (
            "reflect_2step.txt",
            render_reflect_prompt(SCHEMA, QUESTION, &two)
                .map_err(e)?
                .text,
        ),
        (
            "correct_basic.txt",
            render_correct_prompt(
                SCHEMA,
                QUESTION,
                &one,
                "The table is called singer, not singers.",
            )
            .map_err(e)?
            .text,
        ),
    ];
    for (name, text) in &rendered {
        ensure!(
            *text == golden(name)?,
            "{name} differs from rendered prompt"
        );
    }
    ensure!(
        rendered[0].1.ends_with("SELECT"),
        "generation prompt must end in SELECT"
    );
    ensure!(
        rendered[4].1.ends_with("### Correct SQL: SELECT"),
        "correct prompt ending"
    );
    Ok(())
}

// 3 -------------------------------------------------------------------------

fn canonical(v: &Value) -> String {
    match v {
        Value::Null => "null".into(),
        Value::Integer(i) => format!("n:{:.4}", *i as f64),
        Value::Real(f) => format!("n:{f:.4}"),
        Value::Text(s) => format!("t:{s}"),
        Value::Blob(b) => format!("b:{:?}", b.blob),
    }
}

fn set_oracle(a: &[Row], b: &[Row]) -> bool {
    let set = |rs: &[Row]| {
        rs.iter()
            .map(|r| r.iter().map(canonical).collect::<Vec<_>>())
            .collect::<BTreeSet<_>>()
    };
    set(a) == set(b)
}

fn result_equality() -> Check {
    let mut rng = StdRng::seed_from_u64(11);
    let cell = |rng: &mut StdRng| match rng.random_range(0..4) {
        0 => Value::Null,
        1 => Value::Integer(rng.random_range(0..3)),
        2 => Value::Real(*[0.0, 1.0, 2.5, 2.5 + 1e-9, -3.75].choose(rng).unwrap()),
        _ => Value::Text(["a", "b", "1"].choose(rng).unwrap().to_string()),
    };
    let mut agree = 0;
    for i in 0..200 {
        let w = rng.random_range(1..4);
        let rows = |rng: &mut StdRng| -> Vec<Row> {
            (0..rng.random_range(0..6))
                .map(|_| (0..w).map(|_| cell(rng)).collect())
                .collect()
        };
        let a = rows(&mut rng);
        let b = if i % 2 == 0 {
            rows(&mut rng)
        } else {
            let mut b = a.clone();
            b.extend(a.iter().take(2).cloned());
            b.shuffle(&mut rng);
            b
        };
        let c = rows(&mut rng);
        ensure!(
            results_equal(&a, &b) == set_oracle(&a, &b),
            "pair {i} disagrees: {a:?} vs {b:?}"
        );
        ensure!(results_equal(&a, &a), "pair {i}: not reflexive");
        ensure!(
            results_equal(&a, &b) == results_equal(&b, &a),
            "pair {i}: not symmetric"
        );
        if results_equal(&a, &b) && results_equal(&b, &c) {
            ensure!(results_equal(&a, &c), "pair {i}: not transitive");
        }
        agree += 1;
    }
    ensure!(agree == 200, "{agree}/200");
    Ok(())
}

// 4 -------------------------------------------------------------------------

struct Recorder {
    inner: ScriptedBackend,
    prompts: Mutex<Vec<(PromptKind, String)>>,
}

impl CompletionBackend for Recorder {
    fn tag(&self) -> &str {
        "scripted"
    }
    fn model_tag(&self) -> &str {
        "scripted"
    }
    fn send(&self, req: &CompletionRequest) -> Result<BackendReply, BackendError> {
        self.prompts
            .lock()
            .unwrap()
            .push((req.prompt.kind, req.prompt.text.clone()));
        self.inner.send(req)
    }
}

/// Reflect/correct replies that fail `fails` times and then fix the query.
fn fixing_script(fails: usize, fix: bool) -> Vec<ScriptEntry> {
    let mut out = Vec::new();
    for k in 0..fails {
        out.push(ScriptEntry::text(format!("reason {k}")));
        out.push(ScriptEntry::text(format!(" missing_{k} FROM singer")));
    }
    if fix {
        out.push(ScriptEntry::text("use the name column"));
        out.push(ScriptEntry::text(" name FROM singer"));
    }
    out
}

fn run_adjust(
    script: Vec<ScriptEntry>,
    max_iters: usize,
) -> Result<(seasql::pipeline::AdjustmentTrace, Vec<(PromptKind, String)>), String> {
    let rec = Arc::new(Recorder {
        inner: ScriptedBackend::from_script(ScriptFile::queue(script)),
        prompts: Mutex::default(),
    });
    let gw = Config::default()
        .gateway
        .gateway(rec.clone(), Arc::new(CostLedger::new()));
    let seed = SqlCandidate {
        sql: "SELECT nope FROM singer".into(),
        stage: CandidateStage::Eliminated,
    };
    let mut usage = RunUsage::default();
    let trace = adjust(
        "List singer names.",
        "table singer",
        seed,
        &gw,
        &db("concert_singer"),
        &ExecutorConfig::default(),
        max_iters,
        &mut usage,
    )
    .map_err(|e| e.to_string())?;
    let prompts = rec.prompts.lock().unwrap().clone();
    Ok((trace, prompts))
}

fn adjustment() -> Check {
    for i in 1..=3 {
        let (trace, prompts) = run_adjust(fixing_script(i - 1, true), 5)?;
        ensure!(
            trace.steps.len() == i + 1,
            "fix on attempt {i}: {} steps",
            trace.steps.len()
        );
        ensure!(
            trace.terminal == Terminal::Succeeded,
            "fix on attempt {i}: {:?}",
            trace.terminal
        );

        let errors: Vec<&str> = trace.steps[..i]
            .iter()
            .filter_map(|s| s.outcome.error_message())
            .collect();
        ensure!(errors.len() == i, "expected {i} failing steps");
        let reflects: Vec<&String> = prompts
            .iter()
            .filter(|(k, _)| *k == PromptKind::Reflect)
            .map(|(_, t)| t)
            .collect();
        ensure!(
            reflects.len() == i,
            "{} reflect prompts for fix on attempt {i}",
            reflects.len()
        );
        for (step, p) in reflects.iter().enumerate() {
            for e in &errors[..=step] {
                ensure!(p.contains(e), "reflect prompt {step} lacks error `{e}`");
            }
        }
    }
    let (trace, _) = run_adjust(fixing_script(10, false), 3)?;
    ensure!(
        trace.steps.len() == 4,
        "never fixing: {} steps",
        trace.steps.len()
    );
    ensure!(
        matches!(trace.terminal, Terminal::Exhausted { .. }),
        "never fixing: {:?}",
        trace.terminal
    );
    Ok(())
}

// 5 -------------------------------------------------------------------------

fn scripted_pipeline(config: Config, script: &Path) -> Result<Pipeline, String> {
    let be = BackendSpec::Scripted(script.to_path_buf())
        .instantiate()
        .map_err(|e| e.to_string())?;
    let ledger = Arc::new(CostLedger::new());
    let backends = Backends {
        generator: config.gateway.gateway(be.clone(), ledger.clone()),
        eliminator: config.gateway.gateway(be, ledger),
    };
    Ok(Pipeline::new(config, backends))
}

fn fixture_config() -> Result<Config, String> {
    Config::load(&fixtures().join("config.json")).map_err(|e| e.to_string())
}

fn substitution() -> Check {
    let examples = load_dataset(
        &fixtures().join("mini_dev.json"),
        &fixtures().join("databases"),
    )
    .map_err(|e| e.to_string())?;
    ensure!(examples.len() == 20, "{} examples", examples.len());
    let pipeline = scripted_pipeline(
        fixture_config()?,
        &fixtures().join("scripts/generator_mix.json"),
    )?;
    let build = build_training_pairs(&pipeline, &examples).map_err(|e| e.to_string())?;
    ensure!(build.skipped.is_empty(), "skipped {:?}", build.skipped);
    ensure!(
        (build.kept_pre(), build.kept_gold()) == (12, 8),
        "kept_pre {} kept_gold {}",
        build.kept_pre(),
        build.kept_gold()
    );

    // labels agree with the declared generator mix
    let mix: serde_json::Map<String, serde_json::Value> = serde_json::from_str(
        &std::fs::read_to_string(fixtures().join("mini_dev_mix.json"))
            .map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    for pair in &build.pairs {
        let kind = mix.get(&pair.id).and_then(|v| v.as_str()).unwrap_or("?");
        let want = if matches!(kind, "exact" | "equivalent") {
            TargetLabel::KeptPre
        } else {
            TargetLabel::KeptGold
        };
        ensure!(
            pair.label == want,
            "{}: {kind} labelled {:?}",
            pair.id,
            pair.label
        );
    }

    let check = self_check(&build.pairs, &pipeline.config().executor);
    ensure!(
        check.passed == 20 && check.ok(),
        "self-check {}/20, failed {:?}",
        check.passed,
        check.failed
    );
    Ok(())
}

// 6 -------------------------------------------------------------------------

fn seasql(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_seasql"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "seasql {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn report_field(path: &Path, field: &str) -> Result<f64, String> {
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    v[field]
        .as_f64()
        .ok_or_else(|| format!("report has no `{field}`"))
}

fn ablated_ex(dir: &Path, name: &str, subcommand: &str, ablate: &[&str]) -> Result<f64, String> {
    let f = fixtures();
    let config = f.join("config.json");
    let script = format!("scripted:{}", f.join("scripts/ablation.json").display());
    let dataset = f.join("ablation.json");
    let dbs = f.join("databases");
    let preds = dir.join(format!("{name}.jsonl"));
    let report = dir.join(format!("{name}.report.json"));
    let mut args: Vec<&str> = vec!["--config", config.to_str().unwrap(), "--backend", &script];
    for a in ablate {
        args.extend(["--ablate", a]);
    }
    let mut gen = args.clone();
    gen.extend([
        subcommand,
        "--dataset",
        dataset.to_str().unwrap(),
        "--db-dir",
        dbs.to_str().unwrap(),
    ]);
    gen.extend(["--out", preds.to_str().unwrap()]);
    seasql(&gen)?;
    seasql(&[
        "--config",
        config.to_str().unwrap(),
        "eval",
        "--dataset",
        dataset.to_str().unwrap(),
        "--db-dir",
        dbs.to_str().unwrap(),
        "--predictions",
        preds.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ])?;
    report_field(&report, "ex")
}

fn ablation() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let full = ablated_ex(d, "full", "refine", &[])?;
    let mut line = format!("full {full:.3}");
    for stage in ["ses", "abe", "dea"] {
        let ex = ablated_ex(d, stage, "refine", &[stage])?;
        line += &format!(" -{stage} {ex:.3}");
        ensure!(full > ex, "full {full} does not exceed -{stage} {ex}");
    }
    let none = ablated_ex(d, "none", "refine", &["ses", "abe", "dea"])?;
    let pre_only = ablated_ex(d, "pre", "generate", &["ses"])?;
    ensure!(
        none == pre_only,
        "{line}: all ablated {none} != pre-SQL only {pre_only}"
    );
    Ok(())
}

// 7 -------------------------------------------------------------------------

fn gold_predictions(dataset: &Path, out: &Path) -> Result<(), String> {
    let examples =
        load_dataset(dataset, &fixtures().join("databases")).map_err(|e| e.to_string())?;
    let lines: Vec<String> = examples
        .iter()
        .map(|e| serde_json::json!({"id": e.id, "db_id": e.db_id, "sql": e.gold_sql}).to_string())
        .collect();
    std::fs::write(out, lines.join("\n") + "\n").map_err(|e| e.to_string())
}

fn ves_sanity() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dataset = fixtures().join("mini_dev.json");
    let preds = dir.path().join("gold.jsonl");
    let report = dir.path().join("report.json");
    gold_predictions(&dataset, &preds)?;
    let stdout = seasql(&[
        "eval",
        "--dataset",
        dataset.to_str().unwrap(),
        "--db-dir",
        fixtures().join("databases").to_str().unwrap(),
        "--predictions",
        preds.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ])?;
    let ex = report_field(&report, "ex")?;
    let ves = report_field(&report, "ves")?;
    ensure!(ex == 1.0, "EX {ex}");
    ensure!((ves - 1.0).abs() <= 0.15, "VES {ves}");
    ensure!(stdout.contains("EX 1.000"), "table output: {stdout}");
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(60), "took {took:?}");
    Ok(())
}

// 8 -------------------------------------------------------------------------

fn cost_conservation() -> Check {
    let mut config = fixture_config()?;
    config.pipeline.parallelism = 8;
    let pipeline = scripted_pipeline(config, &fixtures().join("scripts/ablation.json"))?;
    let examples = load_dataset(
        &fixtures().join("ablation.json"),
        &fixtures().join("databases"),
    )
    .map_err(|e| e.to_string())?;
    let tasks: Vec<Task> = (0..50)
        .map(|i| {
            let e = &examples[i % examples.len()];
            Task {
                id: format!("{}#{i}", e.id),
                question: e.question.clone(),
                db_path: e.db_path.clone(),
            }
        })
        .collect();
    let results = pipeline.run_batch(&tasks);
    ensure!(results.iter().all(|r| r.is_ok()), "some runs failed");

    let ledger = pipeline.backends().generator.ledger();
    let report = ledger
        .report(&pipeline.config().gateway.prices)
        .map_err(|e| e.to_string())?;
    ensure!(report.queries == 50, "{} queries recorded", report.queries);
    let stage_picos: u64 = report.stages.values().map(|s| s.cost_picodollars).sum();
    let stage_calls: u64 = report.stages.values().map(|s| s.calls).sum();
    ensure!(
        stage_picos == report.total.cost_picodollars,
        "stages {stage_picos} != total {}",
        report.total.cost_picodollars
    );
    ensure!(
        stage_calls == report.total.calls,
        "stage calls {stage_calls} != {}",
        report.total.calls
    );
    ensure!(report.total.cost_picodollars > 0, "nothing was charged");
    ensure!(
        report.mean_cost_per_query_usd == report.total.cost_usd / 50.0,
        "mean {} != {} / 50",
        report.mean_cost_per_query_usd,
        report.total.cost_usd
    );

    // the shared ledger equals the sum of per-run usage
    let per_run: u64 = results.iter().flatten().map(|r| r.usage.calls()).sum();
    ensure!(
        per_run == report.total.calls,
        "per-run calls {per_run} != ledger {}",
        report.total.calls
    );
    Ok(())
}

// 9 -------------------------------------------------------------------------

fn hashes() -> Result<Vec<(String, String)>, String> {
    ["concert_singer", "retail"]
        .iter()
        .map(|id| {
            let bytes = std::fs::read(db(id)).map_err(|e| e.to_string())?;
            Ok((id.to_string(), hex::encode(Sha256::digest(&bytes))))
        })
        .collect()
}

fn read_only() -> Check {
    let before = hashes()?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dataset = fixtures().join("mini_dev.json");
    let examples =
        load_dataset(&dataset, &fixtures().join("databases")).map_err(|e| e.to_string())?;
    let hostile = [
        "DELETE FROM singer",
        "DROP TABLE orders",
        "SELECT * FROM no_such_table",
        "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c) SELECT count(*) FROM c",
        "UPDATE customers SET name = 'x'; SELECT 1",
        "PRAGMA journal_mode = WAL",
    ];
    let lines: Vec<String> = examples
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let sql = hostile.get(i).copied().unwrap_or(&e.gold_sql);
            serde_json::json!({"id": e.id, "db_id": e.db_id, "sql": sql}).to_string()
        })
        .collect();
    let preds = dir.path().join("preds.jsonl");
    std::fs::write(&preds, lines.join("\n")).map_err(|e| e.to_string())?;

    let mut config: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(fixtures().join("config.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    config["executor"]["timeout_s"] = serde_json::json!(0.5);
    let config_path = dir.path().join("config.json");
    std::fs::write(&config_path, config.to_string()).map_err(|e| e.to_string())?;

    let records = dir.path().join("records.jsonl");
    let report = dir.path().join("report.json");
    seasql(&[
        "--config",
        config_path.to_str().unwrap(),
        "eval",
        "--dataset",
        dataset.to_str().unwrap(),
        "--db-dir",
        fixtures().join("databases").to_str().unwrap(),
        "--predictions",
        preds.to_str().unwrap(),
        "--records",
        records.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ])?;
    let text = std::fs::read_to_string(&records).map_err(|e| e.to_string())?;
    let statuses: Vec<String> = text
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).map(|v| {
                v["pred_outcome"]["status"]
                    .as_str()
                    .unwrap_or("")
                    .to_string()
            })
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    ensure!(
        statuses.iter().filter(|s| *s == "timeout").count() == 1,
        "statuses {statuses:?}"
    );
    ensure!(
        statuses.iter().filter(|s| *s == "failure").count() == hostile.len() - 1,
        "statuses {statuses:?}"
    );
    ensure!(
        report_field(&report, "correct")? == (examples.len() - hostile.len()) as f64,
        "unexpected correct count"
    );

    let after = hashes()?;
    ensure!(
        before == after,
        "database hashes changed: {before:?} -> {after:?}"
    );
    Ok(())
}
