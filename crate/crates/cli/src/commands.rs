use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use decal_core::io::{load_model, save_model, vocab_path};
use decal_core::search::{
    greedy_search, gsdc_enumerate, les_enumerate, sweep, vsp_export_features, write_features_bin, write_features_csv,
    write_trace_csv, CachedEvaluator, SearchResult, ValidationMrr,
};
use decal_core::{
    data::load_dataset, evaluate, train::train_with, EmbeddingTable, EvalReport, Signature, Split, TripleStore,
};
use serde::Serialize;

use crate::args::{Command, EvaluateCmd, ExportCmd, FeatureFormat, SearchCmd, StatsCmd, Strategy, TrainCmd};
use crate::config::{resolve_train, FileConfig};
use crate::manifest::{Manifest, Plan, SignatureInfo};
use crate::CliError;

const DEFAULT_MAX_ITERATIONS: usize = 10;
const MODEL_FILE: &str = "model.dcal";

pub fn run(command: Command) -> Result<(), CliError> {
    let plan = match command {
        Command::Train(cmd) => plan_train(cmd)?,
        Command::Search(cmd) => plan_search(cmd)?,
        Command::Evaluate(cmd) => plan_evaluate(cmd)?,
        Command::ExportFeatures(cmd) => plan_export(cmd),
        Command::Stats(cmd) => plan_stats(cmd),
        Command::Replay(cmd) => {
            let manifest = Manifest::read(&cmd.manifest)?;
            match cmd.out {
                Some(out) => manifest.plan.with_out(out),
                None => manifest.plan,
            }
        }
    };
    execute(plan)
}

fn plan_train(cmd: TrainCmd) -> Result<Plan, CliError> {
    let file = FileConfig::load(cmd.train.config.as_deref())?;
    let config = resolve_train(&cmd.train, &file);
    Ok(Plan::Train {
        data: absolute(&cmd.data),
        p: cmd.p.or(file.p).unwrap_or(1),
        q: cmd.q.or(file.q).unwrap_or(1),
        r: cmd.r.or(file.r).unwrap_or(1),
        config,
        out: cmd.out,
    })
}

fn plan_search(cmd: SearchCmd) -> Result<Plan, CliError> {
    let file = FileConfig::load(cmd.train.config.as_deref())?;
    let mut config = resolve_train(&cmd.train, &file);
    if let Some(epochs) = cmd.budget_epochs.or(file.budget_epochs) {
        config.epochs = epochs;
    }
    let cache_dir = match std::env::var_os("DECAL_CACHE_DIR") {
        Some(dir) => PathBuf::from(dir),
        None => cmd.out.join("cache"),
    };
    Ok(Plan::Search {
        data: absolute(&cmd.data),
        strategy: cmd.strategy,
        max_iterations: cmd.max_iterations.or(file.max_iterations).unwrap_or(DEFAULT_MAX_ITERATIONS),
        config,
        cache_dir: absolute(&cache_dir),
        out: cmd.out,
    })
}

fn plan_evaluate(cmd: EvaluateCmd) -> Result<Plan, CliError> {
    let split = cmd.split.parse::<Split>().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(Plan::Evaluate { data: absolute(&cmd.data), model: absolute(&cmd.model), split, out: cmd.out })
}

fn plan_export(cmd: ExportCmd) -> Plan {
    Plan::ExportFeatures { data: absolute(&cmd.data), model: absolute(&cmd.model), format: cmd.format, out: cmd.out }
}

fn plan_stats(cmd: StatsCmd) -> Plan {
    Plan::Stats { data: absolute(&cmd.data), out: cmd.out }
}

fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_owned())
}

fn execute(plan: Plan) -> Result<(), CliError> {
    let started = SystemTime::now();
    let store = load_dataset(plan.data())?;
    let (signature, outputs) = match &plan {
        Plan::Train { p, q, r, config, out, .. } => {
            let sig = Signature::new(*p, *q, *r, config.d)?;
            (Some(sig), run_train(&store, sig, config, out)?)
        }
        Plan::Search { strategy, max_iterations, config, cache_dir, out, .. } => {
            config.validate()?;
            let inner = ValidationMrr { store: &store, cfg: config.clone() };
            let evaluator = CachedEvaluator::new(inner, cache_dir, &store.fingerprint(), config)?;
            let (result, skipped) = match strategy {
                Strategy::Les => {
                    let s = sweep(&les_enumerate(config.d), config.d, &evaluator)?;
                    (s.result, s.skipped)
                }
                Strategy::Gsdc => {
                    let s = sweep(&gsdc_enumerate(config.d), config.d, &evaluator)?;
                    (s.result, s.skipped)
                }
                Strategy::Gs => (greedy_search(*max_iterations, config.d, &evaluator)?, Vec::new()),
            };
            let best = Signature::new(result.best.p, result.best.q, result.best.r, config.d)?;
            (Some(best), write_search(&result, &skipped, *strategy, config.d, out)?)
        }
        Plan::Evaluate { model, split, out, .. } => {
            let table = load_matching(model, &store)?;
            let report = evaluate(&table, &store, *split)?;
            let json = report_json(&report)?;
            println!("{json}");
            let mut outputs = Vec::new();
            if let Some(out) = out {
                fs::create_dir_all(out)?;
                let path = out.join(format!("eval_{}.json", split.name()));
                fs::write(&path, &json)?;
                outputs.push(path);
            }
            (Some(*table.sig()), outputs)
        }
        Plan::ExportFeatures { model, format, out, .. } => {
            let table = load_matching(model, &store)?;
            let features = vsp_export_features(&store, &table)?;
            fs::create_dir_all(out)?;
            let path = match format {
                FeatureFormat::Csv => out.join("features.csv"),
                FeatureFormat::Bin => out.join("features.bin"),
            };
            let mut w = BufWriter::new(File::create(&path)?);
            match format {
                FeatureFormat::Csv => write_features_csv(&features, &mut w)?,
                FeatureFormat::Bin => write_features_bin(&features, &mut w)?,
            }
            w.flush()?;
            eprintln!("wrote {} rows of {} features to {}", features.rows(), features.cols(), path.display());
            (Some(*table.sig()), vec![path])
        }
        Plan::Stats { out, .. } => {
            let json = serde_json::to_string_pretty(&store.stats())?;
            println!("{json}");
            let mut outputs = Vec::new();
            if let Some(out) = out {
                fs::create_dir_all(out)?;
                let path = out.join("stats.json");
                fs::write(&path, &json)?;
                outputs.push(path);
            }
            (None, outputs)
        }
    };

    if let Some(dir) = plan.out_dir().map(Path::to_owned) {
        let signature = signature.map(|s| SignatureInfo { p: s.p(), q: s.q(), r: s.r(), d: s.d() });
        let path = Manifest::new(plan, signature, started, outputs).write(&dir)?;
        eprintln!("manifest: {}", path.display());
    }
    Ok(())
}

fn report_json(report: &EvalReport) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(report)?)
}

/// Loads a model and checks that it was trained on `store`'s vocabulary.
fn load_matching(model: &Path, store: &TripleStore) -> Result<EmbeddingTable, CliError> {
    let (table, vocab) = load_model(model)?;
    if &vocab != store.vocab() {
        return Err(decal_core::Error::ShapeMismatch(format!(
            "model {} was trained on a different vocabulary than this dataset",
            model.display()
        ))
        .into());
    }
    Ok(table)
}

fn run_train(
    store: &TripleStore,
    sig: Signature,
    config: &decal_core::TrainConfig,
    out: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out)?;
    eprintln!("training {sig} for {} epochs", config.epochs);
    let log_every = (config.epochs / 10).max(1);
    let outcome = train_with(store, sig, config, |epoch, loss| {
        if (epoch + 1) % log_every == 0 {
            eprintln!("epoch {:>5}  loss {loss:.6}", epoch + 1);
        }
    })?;

    let mut outputs = Vec::new();
    let model = out.join(MODEL_FILE);
    save_model(&model, &outcome.table, store.vocab())?;
    outputs.push(vocab_path(&model));
    outputs.push(model);

    let loss_path = out.join("loss.csv");
    let mut w = BufWriter::new(File::create(&loss_path)?);
    writeln!(w, "epoch,loss")?;
    for (epoch, loss) in outcome.loss_trace.iter().enumerate() {
        writeln!(w, "{},{loss}", epoch + 1)?;
    }
    w.flush()?;
    outputs.push(loss_path);

    for split in Split::ALL {
        if store.triples(split).is_empty() {
            continue;
        }
        let report = evaluate(&outcome.table, store, split)?;
        eprintln!(
            "{:<5}  mrr {:.4}  hits@1 {:.4}  hits@3 {:.4}  hits@10 {:.4}",
            split.name(),
            report.mrr,
            report.hits1,
            report.hits3,
            report.hits10
        );
        let path = out.join(format!("eval_{}.json", split.name()));
        fs::write(&path, report_json(&report)?)?;
        outputs.push(path);
    }
    Ok(outputs)
}

#[derive(Serialize)]
struct BestSummary {
    strategy: Strategy,
    p: usize,
    q: usize,
    r: usize,
    d: usize,
    val_mrr: f64,
    iterations: usize,
    scored: usize,
    skipped: usize,
}

fn write_search(
    result: &SearchResult,
    skipped: &[decal_core::Conf],
    strategy: Strategy,
    d: usize,
    out: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out)?;
    let trace = out.join("trace.csv");
    let mut w = BufWriter::new(File::create(&trace)?);
    write_trace_csv(&result.trace, skipped, &mut w)?;
    w.flush()?;

    let summary = BestSummary {
        strategy,
        p: result.best.p,
        q: result.best.q,
        r: result.best.r,
        d,
        val_mrr: result.best.val_mrr,
        iterations: result.iterations,
        scored: result.trace.len(),
        skipped: skipped.len(),
    };
    let json = serde_json::to_string_pretty(&summary)?;
    println!("{json}");
    let best = out.join("best.json");
    fs::write(&best, json)?;
    Ok(vec![trace, best])
}
