use std::time::Instant;

use anyhow::{bail, Context, Result};
use pan_core::csm::init_params_with;
use pan_core::encoders::{Activation, Encoder, EncoderSpec};
use pan_core::gradcheck::{finite_diff_check_with, GradCheckOptions, GradCheckReport};
use pan_core::graph::SimilarityGraph;
use pan_core::training::{batch_loss_on_tape, AttributeTargets};
use pan_core::{Matrix, PanModel, PanRng, SeedStream};
use rand::Rng;

use crate::args::GradcheckArgs;

pub const THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub d: usize,
    pub m: usize,
    pub n: usize,
    pub h: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Self { d: 6, m: 4, n: 7, h: 5 }
    }
}

pub fn parse_dims(s: &str) -> Result<Dims> {
    let mut dims = Dims::default();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').with_context(|| format!("expected key=value, got {part:?}"))?;
        let v: usize = v.trim().parse().with_context(|| format!("bad size in {part:?}"))?;
        if v == 0 {
            bail!("{part:?}: sizes must be at least 1");
        }
        match k.trim() {
            "d" => dims.d = v,
            "M" | "m" => dims.m = v,
            "n" => dims.n = v,
            "h" => dims.h = v,
            other => bail!("unknown dimension {other:?}; expected d, M, n or h"),
        }
    }
    if dims.n < 2 {
        bail!("n must be at least 2 to form a pair");
    }
    Ok(dims)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Composition {
    Csm,
    MlpCsm,
    GcnCsm,
}

impl Composition {
    const ALL: [Composition; 3] = [Composition::Csm, Composition::MlpCsm, Composition::GcnCsm];

    fn label(self) -> &'static str {
        match self {
            Composition::Csm => "csm+loss",
            Composition::MlpCsm => "mlp+csm+loss",
            Composition::GcnCsm => "gcn2+csm+loss",
        }
    }

    fn encoder(self, h: usize) -> EncoderSpec {
        match self {
            Composition::Csm => EncoderSpec::Identity,
            Composition::MlpCsm => EncoderSpec::Mlp {
                layer_dims: vec![h, h],
                activation: Activation::Relu,
            },
            Composition::GcnCsm => EncoderSpec::Gcn {
                num_layers: 2,
                hidden_dim: h,
                layer_dropout: 0.3,
                edge_dropout: 0.15,
                activation: Activation::Relu,
            },
        }
    }
}

fn uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Result<Matrix<f64>> {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Ok(Matrix::new(rows, cols, data)?)
}

/// One randomized instance: data, labels, weights and dropout masks all
/// derive from `seed`.
fn check_one(c: Composition, dims: Dims, seed: u64, step: f64, options: GradCheckOptions) -> Result<GradCheckReport> {
    let streams = SeedStream::new(seed).child(c.label());
    let mut rng = streams.rng("data");
    let Dims { d, m, n, h } = dims;
    let x = uniform(n, d, &mut rng)?;

    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.6) || pairs.is_empty() {
                pairs.push((i, j));
            }
        }
    }
    let links: Vec<f64> = pairs.iter().map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
    let bits = |rng: &mut PanRng, p: f64| -> Vec<f64> {
        (0..pairs.len() * m).map(|_| f64::from(u8::from(rng.random_bool(p)))).collect()
    };
    let labels = bits(&mut rng, 0.5);
    let mut mask = bits(&mut rng, 0.8);
    mask[0] = 1.0;
    let targets = AttributeTargets {
        labels: Matrix::new(pairs.len(), m, labels)?,
        mask: Matrix::new(pairs.len(), m, mask)?,
    };
    let lambda = rng.random_range(0.1..2.0);
    let relevance = rng.random_bool(0.8);
    let mut graph = SimilarityGraph::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.4) {
                graph.add_edge(i, j)?;
            }
        }
    }

    let encoder = Encoder::init(&c.encoder(h), d, &mut streams.rng("init.encoder"))?;
    let csm = init_params_with(encoder.output_dim(), m, &mut streams.rng("init.csm"))?;
    let model = PanModel::new(encoder, csm, relevance)?;
    let adjacency = model.encoder.adjacency(Some(&graph), Some(&mut streams.rng("edges")))?;

    let report = finite_diff_check_with(&model, step, options, |tape, mdl| {
        let vars = mdl.bind(tape)?;
        let xv = tape.constant(x.clone());
        let mut dropout = streams.rng("dropout");
        let out = mdl.forward_on_tape(tape, &vars, xv, adjacency.as_ref(), Some(&mut dropout), &pairs)?;
        batch_loss_on_tape(tape, out.p, out.rho, &links, Some(&targets), lambda)
    })?;
    Ok(report)
}

/// Most kink-skipped entries tolerated, per thousand checked.
pub const MAX_KINKS_PER_MILLE: usize = 10;

pub struct Worst {
    pub report: GradCheckReport,
    pub seed: u64,
    pub composition: &'static str,
}

pub struct Summary {
    pub worst: Worst,
    pub checks: usize,
    pub entries: usize,
    pub kinks: usize,
}

/// Runs every composition for seeds `0..seeds`.
pub fn check_all(dims: Dims, seeds: u64, step: f64, flip_sign: bool) -> Result<Summary> {
    let options = GradCheckOptions {
        flip_sign,
        skip_kinks: true,
    };
    let mut worst: Option<Worst> = None;
    let (mut count, mut entries, mut kinks) = (0, 0, 0);
    for seed in 0..seeds {
        for c in Composition::ALL {
            let report = check_one(c, dims, seed, step, options)
                .with_context(|| format!("{} with seed {seed}", c.label()))?;
            count += 1;
            entries += report.entries_checked;
            kinks += report.kinks_skipped;
            if worst.as_ref().is_none_or(|w| report.max_rel_error > w.report.max_rel_error) {
                worst = Some(Worst {
                    report,
                    seed,
                    composition: c.label(),
                });
            }
        }
    }
    Ok(Summary {
        worst: worst.expect("at least one seed"),
        checks: count,
        entries,
        kinks,
    })
}

pub fn run(a: &GradcheckArgs) -> Result<bool> {
    let dims = parse_dims(&a.dims)?;
    if !(a.step > 0.0) {
        bail!("step must be positive");
    }
    let start = Instant::now();
    let summary = check_all(dims, a.seeds, a.step, a.inject_sign_error)?;
    let worst = &summary.worst;
    let r = &worst.report;
    println!(
        "checks {} (d={} M={} n={} h={}, {} seeds), {} entries, {} skipped at kinks, step {:e}, {:.2}s",
        summary.checks,
        dims.d,
        dims.m,
        dims.n,
        dims.h,
        a.seeds,
        summary.entries,
        summary.kinks,
        a.step,
        start.elapsed().as_secs_f64()
    );
    println!(
        "worst relative error {:.3e} at {} ({}, seed {}): analytic {:.6e} numeric {:.6e}",
        r.max_rel_error, r.worst_entry, worst.composition, worst.seed, r.analytic, r.numeric
    );
    if summary.kinks * 1000 > summary.entries * MAX_KINKS_PER_MILLE {
        eprintln!("FAIL: {} of {} entries sat on kinks", summary.kinks, summary.entries);
        return Ok(false);
    }
    if r.max_rel_error < THRESHOLD {
        println!("PASS");
        Ok(true)
    } else {
        eprintln!(
            "FAIL: {} exceeds {THRESHOLD:e} at {} ({}, seed {})",
            r.max_rel_error, r.worst_entry, worst.composition, worst.seed
        );
        Ok(false)
    }
}
