use std::path::Path;

use anyhow::{bail, Context, Result};
use pan_core::data::bundle::{items_by_category, sha256_hex, to_json_bytes, MANIFEST_FILE};
use pan_core::data::tasks::{build_episodes, build_fitb_questions, resample_negative_sets};
use pan_core::evaluation::{
    attribute_map, attribute_rank_report, compatibility_auc, few_shot_accuracy, fitb_accuracy, mann_whitney_auc,
    pair_accuracy, recall_at_k, write_rank_report_csv, ConditionModel, MetricReport,
};
use pan_core::graph::SimilarityGraph;
use pan_core::training::held_out_pairs;
use pan_core::DatasetBundle;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::EvalArgs;
use crate::config::{split_for, EvalConfig, EvalTask};
use crate::manifest::{create_dir, hash_file, Checkpoint, RunManifest};
use crate::train::load_bundle;

pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";

#[derive(Debug, Serialize)]
struct ResolvedEval<'a> {
    task: &'static str,
    #[serde(flatten)]
    config: &'a EvalConfig,
}

pub struct EvalOutcome {
    pub reports: Vec<MetricReport>,
    pub details: Value,
    /// Task-specific tables written next to the metrics.
    pub tables: Vec<(&'static str, Vec<u8>)>,
}

pub fn run(a: &EvalArgs) -> Result<bool> {
    let cfg = EvalConfig::load(a.config.as_deref(), a.seed, a.fa, &a.options)?;
    let bundle = load_bundle(&a.bundle)?;
    let checkpoints = a
        .checkpoint
        .iter()
        .map(|p| Checkpoint::load(p))
        .collect::<Result<Vec<_>>>()?;
    let hashes = a
        .checkpoint
        .iter()
        .map(|p| hash_file(p))
        .collect::<Result<Vec<_>>>()?;
    let outcome = evaluate_into(a.task, &checkpoints, &hashes, &a.bundle, &bundle, &cfg, &a.out)?;
    for r in &outcome.reports {
        match r.interval {
            Some(h) => println!("{} {:.6} +/- {:.6} (n={})", r.metric, r.value, h, r.count),
            None => println!("{} {:.6} (n={})", r.metric, r.value, r.count),
        }
    }
    Ok(true)
}

/// Evaluates and writes metrics, tables and manifest into `out`.
pub fn evaluate_into(
    task: EvalTask,
    checkpoints: &[Checkpoint],
    checkpoint_hashes: &[String],
    bundle_dir: &Path,
    bundle: &DatasetBundle,
    cfg: &EvalConfig,
    out: &Path,
) -> Result<EvalOutcome> {
    let cfg = &EvalConfig {
        split: split_for(bundle, &cfg.split),
        ..cfg.clone()
    };
    let resolved = ResolvedEval { task: task.name(), config: cfg };
    create_dir(out)?;
    let mut manifest = RunManifest::new("eval", &resolved)?;
    let bundle_hash = hash_file(&bundle_dir.join(MANIFEST_FILE))?;
    manifest.inputs.insert("bundle_manifest".into(), bundle_hash.clone());
    for (i, h) in checkpoint_hashes.iter().enumerate() {
        manifest.inputs.insert(format!("checkpoint_{i}"), h.clone());
    }
    manifest.write(out)?;

    let outcome = evaluate(task, checkpoints, bundle, cfg)?;

    let mut fp = to_json_bytes(&resolved)?;
    fp.extend_from_slice(bundle_hash.as_bytes());
    for h in checkpoint_hashes {
        fp.extend_from_slice(h.as_bytes());
    }
    let fingerprint = sha256_hex(&fp);
    let doc = json!({
        "task": task.name(),
        "fingerprint": fingerprint,
        "config": serde_json::to_value(&resolved)?,
        "reports": outcome.reports,
        "details": outcome.details,
    });
    manifest.emit(out, METRICS_JSON, &to_json_bytes(&doc)?)?;
    manifest.emit(out, METRICS_CSV, &metrics_csv(&outcome.reports, &fingerprint)?)?;
    for (name, bytes) in &outcome.tables {
        manifest.emit(out, name, bytes)?;
    }
    manifest.write(out)?;
    Ok(outcome)
}

fn metrics_csv(reports: &[MetricReport], fingerprint: &str) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "value", "interval", "count", "fingerprint"])?;
    for r in reports {
        w.write_record([
            r.metric.clone(),
            r.value.to_string(),
            r.interval.map(|v| v.to_string()).unwrap_or_default(),
            r.count.to_string(),
            fingerprint.to_string(),
        ])?;
    }
    Ok(w.into_inner()?)
}

fn single(checkpoints: &[Checkpoint], task: EvalTask) -> Result<&Checkpoint> {
    match checkpoints {
        [c] => Ok(c),
        _ => bail!("{} takes exactly one checkpoint, got {}", task.name(), checkpoints.len()),
    }
}

fn conditions<'a>(c: &'a Checkpoint, task: EvalTask) -> Result<&'a dyn ConditionModel> {
    c.conditions()
        .with_context(|| format!("{} needs a model with similarity conditions", task.name()))
}

/// Outfits lying entirely inside `split`.
fn split_sets<'a>(bundle: &'a DatasetBundle, split: &str) -> Result<(Vec<Vec<usize>>, &'a [usize], &'a [usize])> {
    let items = bundle.split(split)?;
    let categories = bundle
        .categories
        .as_deref()
        .context("this task needs item categories in the bundle")?;
    let outfits = bundle.outfits.as_ref().context("this task needs outfits in the bundle")?;
    let mut member = vec![false; bundle.n()];
    for &i in items {
        member[i] = true;
    }
    let sets: Vec<Vec<usize>> = outfits
        .iter()
        .filter(|s| s.len() >= 2 && s.iter().all(|&i| member[i]))
        .cloned()
        .collect();
    if sets.is_empty() {
        bail!("split {split:?} has no outfits");
    }
    Ok((sets, items, categories))
}

/// Alternates the items of each class between query and gallery, in index order.
fn query_gallery(categories: &[usize], items: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let (mut query, mut gallery) = (Vec::new(), Vec::new());
    for members in items_by_category(categories, items).values() {
        for (r, &i) in members.iter().enumerate() {
            if r % 2 == 0 {
                query.push(i);
            } else {
                gallery.push(i);
            }
        }
    }
    query.sort_unstable();
    gallery.sort_unstable();
    (query, gallery)
}

pub fn evaluate(
    task: EvalTask,
    checkpoints: &[Checkpoint],
    bundle: &DatasetBundle,
    cfg: &EvalConfig,
) -> Result<EvalOutcome> {
    if checkpoints.is_empty() {
        bail!("no checkpoint given");
    }
    let d = bundle.features.cols();
    for c in checkpoints {
        if c.input_dim() != d {
            bail!(
                "dimension mismatch: checkpoint expects {} features, bundle has {d}",
                c.input_dim()
            );
        }
    }
    let x = &bundle.features;
    let mut details = Value::Null;
    let mut tables = Vec::new();
    let reports = match task {
        EvalTask::Fitb => {
            let model = single(checkpoints, task)?.scorer();
            let (sets, pool, cats) = split_sets(bundle, &cfg.split)?;
            let questions = build_fitb_questions(&sets, cfg.choices, cats, pool, cfg.seed)?;
            vec![fitb_accuracy(model, &questions, x)?]
        }
        EvalTask::Auc => {
            let model = single(checkpoints, task)?.scorer();
            let (sets, pool, cats) = split_sets(bundle, &cfg.split)?;
            let negatives = resample_negative_sets(&sets, cats, pool, cfg.seed)?;
            vec![compatibility_auc(model, &sets, &negatives, x)?]
        }
        EvalTask::Fewshot => {
            let model = single(checkpoints, task)?.scorer();
            let episodes = build_episodes(bundle, &cfg.split, cfg.way, cfg.shot, cfg.query, cfg.episodes, cfg.seed)?;
            vec![few_shot_accuracy(model, &episodes, x)?]
        }
        EvalTask::Recall => {
            let model = single(checkpoints, task)?.scorer();
            let cats = bundle.categories.as_deref().context("recall needs item categories")?;
            let (query, gallery) = query_gallery(cats, bundle.split(&cfg.split)?);
            let labels = |v: &[usize]| v.iter().map(|&i| cats[i]).collect::<Vec<_>>();
            vec![recall_at_k(
                &x.gather_rows(&query)?,
                &x.gather_rows(&gallery)?,
                &labels(&query),
                &labels(&gallery),
                cfg.k,
                Some(model),
            )?]
        }
        EvalTask::AttrMap => {
            let model = conditions(single(checkpoints, task)?, task)?;
            let table = bundle.attributes.as_ref().context("attr-map needs attributes")?;
            let pairs = eval_pairs(bundle, cfg)?.0;
            let r = attribute_map(model, x, &pairs, table, cfg.fa)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            for c in &r.per_condition {
                w.serialize(c)?;
            }
            tables.push(("attr_map.csv", w.into_inner()?));
            details = json!({ "per_condition": r.per_condition, "skipped": r.skipped });
            vec![r.report]
        }
        EvalTask::RankReport => {
            let models = checkpoints
                .iter()
                .map(|c| conditions(c, task))
                .collect::<Result<Vec<_>>>()?;
            let pairs = eval_pairs(bundle, cfg)?.0;
            let rows = attribute_rank_report(&models, x, &pairs)?;
            let mut csv = Vec::new();
            write_rank_report_csv(&rows, &mut csv)?;
            tables.push(("rank_report.csv", csv));
            details = json!({ "rows": rows });
            vec![MetricReport::new("rank_report_runs", models.len() as f64, pairs.len())]
        }
        EvalTask::PairAccuracy => {
            let model = single(checkpoints, task)?.scorer();
            let (pairs, links) = eval_pairs(bundle, cfg)?;
            let g = SimilarityGraph::empty(bundle.n());
            let scores = model.score_pairs(x, &g, &pairs)?;
            let acc = pair_accuracy(&scores, &links)?;
            let (pos, neg): (Vec<(f64, bool)>, Vec<(f64, bool)>) =
                scores.iter().copied().zip(links.iter().copied()).partition(|(_, l)| *l);
            let auc = mann_whitney_auc(
                &pos.iter().map(|p| p.0).collect::<Vec<_>>(),
                &neg.iter().map(|p| p.0).collect::<Vec<_>>(),
            )?;
            vec![
                MetricReport::new("pair_accuracy", acc, pairs.len()),
                MetricReport::new("pair_auc", auc, pairs.len()),
            ]
        }
    };
    Ok(EvalOutcome {
        reports,
        details,
        tables,
    })
}

type PairSet = (Vec<(usize, usize)>, Vec<bool>);

fn eval_pairs(bundle: &DatasetBundle, cfg: &EvalConfig) -> Result<PairSet> {
    let samples = held_out_pairs(bundle, &cfg.split, cfg.eval_pairs, cfg.seed)?;
    Ok(samples.iter().map(|p| ((p.i, p.j), p.e == 1)).unzip())
}

/// Primary metric of a finished evaluation, for sweeps.
pub fn headline(outcome: &EvalOutcome) -> Option<f64> {
    outcome.reports.first().map(|r| r.value)
}
