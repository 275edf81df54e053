use std::path::Path;

use anyhow::{anyhow, Context, Result};
use pan_core::data::bundle::MANIFEST_FILE;
use pan_core::evaluation::mean_and_interval;
use pan_core::CombineFn;
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{parse_fa, SweepArgs, SweepAxis};
use crate::config::{EvalConfig, EvalTask, TrainRunConfig};
use crate::eval::{evaluate_into, headline};
use crate::manifest::{create_dir, hash_file, RunManifest, CHECKPOINT_FILE};
use crate::train::{load_bundle, train_into};

pub const SWEEP_CSV: &str = "sweep.csv";
pub const SUMMARY_CSV: &str = "summary.csv";

#[derive(Debug, Clone, PartialEq)]
pub enum AxisValue {
    Lambda(f64),
    Conditions(usize),
    Fa(CombineFn),
}

impl AxisValue {
    pub fn parse(axis: SweepAxis, s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match axis {
            SweepAxis::Lambda => AxisValue::Lambda(s.parse().with_context(|| format!("bad lambda {s:?}"))?),
            SweepAxis::Conditions => {
                AxisValue::Conditions(s.parse().with_context(|| format!("bad condition count {s:?}"))?)
            }
            SweepAxis::Fa => AxisValue::Fa(parse_fa(s).map_err(|e| anyhow!(e))?),
        })
    }

    pub fn label(&self) -> String {
        match self {
            AxisValue::Lambda(v) => v.to_string(),
            AxisValue::Conditions(m) => m.to_string(),
            AxisValue::Fa(f) => f.to_string(),
        }
    }

    fn apply(&self, cfg: &mut TrainRunConfig) {
        match self {
            AxisValue::Lambda(v) => cfg.train.lambda = *v,
            AxisValue::Conditions(m) => cfg.conditions = Some(*m),
            AxisValue::Fa(f) => cfg.train.fa = *f,
        }
    }
}

#[derive(Debug, Serialize)]
struct ResolvedSweep<'a> {
    axis: &'static str,
    values: Vec<String>,
    runs: u64,
    task: &'static str,
    train: &'a TrainRunConfig,
    eval: &'a EvalConfig,
}

pub struct RunResult {
    pub value: String,
    pub run: u64,
    pub metric: Result<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub value: String,
    pub mean: f64,
    pub interval: f64,
    pub runs: usize,
    pub failed: usize,
}

/// Mean and `1.96 * sd / sqrt(R)` over the successful runs of each value,
/// in the order values first appear.
pub fn summarize(results: &[RunResult]) -> Vec<SummaryRow> {
    let mut order: Vec<String> = Vec::new();
    for r in results {
        if !order.contains(&r.value) {
            order.push(r.value.clone());
        }
    }
    order
        .into_iter()
        .map(|v| {
            let ok: Vec<f64> = results
                .iter()
                .filter(|r| r.value == v)
                .filter_map(|r| r.metric.as_ref().ok().copied())
                .collect();
            let failed = results.iter().filter(|r| r.value == v && r.metric.is_err()).count();
            let (mean, interval) = if ok.is_empty() { (f64::NAN, f64::NAN) } else { mean_and_interval(&ok) };
            SummaryRow {
                value: v,
                mean,
                interval,
                runs: ok.len(),
                failed,
            }
        })
        .collect()
}

fn axis_name(axis: SweepAxis) -> &'static str {
    match axis {
        SweepAxis::Lambda => "lambda",
        SweepAxis::Conditions => "conditions",
        SweepAxis::Fa => "fa",
    }
}

pub fn run(a: &SweepArgs) -> Result<bool> {
    let base = TrainRunConfig::load(a.config.as_deref(), &a.model)?;
    let values = a
        .values
        .iter()
        .map(|s| AxisValue::parse(a.axis, s))
        .collect::<Result<Vec<_>>>()?;
    let mut eval_cfg = EvalConfig {
        fa: base.train.fa,
        ..EvalConfig::default()
    };
    eval_cfg.apply(&a.eval);
    eval_cfg.check()?;
    let bundle = load_bundle(&a.bundle)?;
    let axis = axis_name(a.axis);

    create_dir(&a.out)?;
    let resolved = ResolvedSweep {
        axis,
        values: values.iter().map(AxisValue::label).collect(),
        runs: a.runs,
        task: a.task.name(),
        train: &base,
        eval: &eval_cfg,
    };
    let mut manifest = RunManifest::new("sweep", &resolved)?;
    manifest.add_input("bundle_manifest", &a.bundle.join(MANIFEST_FILE))?;
    manifest.write(&a.out)?;

    let grid: Vec<(&AxisValue, u64)> = values.iter().flat_map(|v| (0..a.runs).map(move |r| (v, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs as usize)
        .build()
        .context("building worker pool")?;
    let results: Vec<RunResult> = pool.install(|| {
        grid.par_iter()
            .map(|&(v, r)| {
                let dir = a.out.join(format!("{axis}={}", v.label())).join(format!("run{r}"));
                let metric = one_run(&a.bundle, &bundle, &base, &eval_cfg, a.task, v, r, &dir);
                RunResult {
                    value: v.label(),
                    run: r,
                    metric,
                }
            })
            .collect()
    });

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["value", "run", "metric"])?;
    for r in &results {
        let m = r.metric.as_ref().map(|m| m.to_string()).unwrap_or_default();
        w.write_record([r.value.clone(), r.run.to_string(), m])?;
    }
    manifest.emit(&a.out, SWEEP_CSV, &w.into_inner()?)?;

    let summary = summarize(&results);
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &summary {
        w.serialize(row)?;
    }
    manifest.emit(&a.out, SUMMARY_CSV, &w.into_inner()?)?;
    manifest.write(&a.out)?;

    for row in &summary {
        println!(
            "{axis}={} {} {:.6} +/- {:.6} ({} runs, {} failed)",
            row.value,
            a.task.name(),
            row.mean,
            row.interval,
            row.runs,
            row.failed
        );
    }
    let mut ok = true;
    for r in &results {
        if let Err(e) = &r.metric {
            eprintln!("run {axis}={} #{} failed: {e:#}", r.value, r.run);
            ok = false;
        }
    }
    Ok(ok)
}

#[allow(clippy::too_many_arguments)]
fn one_run(
    bundle_dir: &Path,
    bundle: &pan_core::DatasetBundle,
    base: &TrainRunConfig,
    eval_base: &EvalConfig,
    task: EvalTask,
    value: &AxisValue,
    run: u64,
    dir: &Path,
) -> Result<f64> {
    let mut cfg = base.clone();
    value.apply(&mut cfg);
    cfg.train.seed = base.train.seed + run;
    let mut eval_cfg = eval_base.clone();
    eval_cfg.seed = cfg.train.seed;
    eval_cfg.fa = cfg.train.fa;
    let train_dir = dir.join("train");
    let (checkpoint, _) = train_into(bundle_dir, bundle, cfg, &train_dir)?;
    let hash = hash_file(&train_dir.join(CHECKPOINT_FILE))?;
    let outcome = evaluate_into(task, &[checkpoint], &[hash], bundle_dir, bundle, &eval_cfg, &dir.join("eval"))?;
    headline(&outcome).context("evaluation produced no metric")
}
