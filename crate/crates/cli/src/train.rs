use std::path::Path;

use anyhow::{bail, Context, Result};
use pan_core::attributes::randomize_labels;
use pan_core::data::bundle::MANIFEST_FILE;
use pan_core::training::{
    train_attr_similarity_baseline, train_link_only, train_multitask_baseline, train_pan, train_siamese_baseline,
    write_history_csv, HistoryRow,
};
use pan_core::{DatasetBundle, SeedStream};
use serde_json::json;

use crate::args::TrainArgs;
use crate::config::{split_for, AttributeSource, ModelKind, TrainRunConfig};
use crate::manifest::{create_dir, Baseline, Checkpoint, RunManifest, CHECKPOINT_FILE, HISTORY_FILE};

pub fn run(a: &TrainArgs) -> Result<bool> {
    let cfg = TrainRunConfig::load(a.config.as_deref(), &a.model)?;
    let bundle = load_bundle(&a.bundle)?;
    let (_, best) = train_into(&a.bundle, &bundle, cfg, &a.out)?;
    match best {
        Some((epoch, v)) => println!("best validation {v:.6} at epoch {epoch}"),
        None => println!("trained without validation"),
    }
    println!("checkpoint written to {}", a.out.join(CHECKPOINT_FILE).display());
    Ok(true)
}

pub fn load_bundle(dir: &Path) -> Result<DatasetBundle> {
    let (bundle, _) = DatasetBundle::load(dir).with_context(|| format!("loading bundle {}", dir.display()))?;
    Ok(bundle)
}

fn with_attribute_source(bundle: &DatasetBundle, cfg: &TrainRunConfig) -> Result<DatasetBundle> {
    let mut out = bundle.clone();
    match cfg.attributes {
        AttributeSource::Labels => {}
        AttributeSource::None => out.attributes = bundle.attributes.as_ref().map(|t| t.all_masked()),
        AttributeSource::Random => {
            let Some(t) = &bundle.attributes else {
                bail!("random labels need a bundle with attributes");
            };
            let seed = SeedStream::new(cfg.train.seed).child("random-labels").root();
            out.attributes = Some(randomize_labels(t, seed));
        }
    }
    Ok(out)
}

/// Trains per `cfg` and writes checkpoint, history and manifest into `out`.
/// Returns the checkpoint and the best validation `(epoch, value)`.
pub fn train_into(
    bundle_dir: &Path,
    bundle: &DatasetBundle,
    mut cfg: TrainRunConfig,
    out: &Path,
) -> Result<(Checkpoint, Option<(usize, f64)>)> {
    let csm = match cfg.model {
        ModelKind::Pan => Some(cfg.resolve_csm(bundle)?),
        _ => None,
    };
    cfg.train.train_split = split_for(bundle, &cfg.train.train_split);
    create_dir(out)?;
    let mut manifest = RunManifest::new("train", &cfg)?;
    manifest.add_input("bundle_manifest", &bundle_dir.join(MANIFEST_FILE))?;
    manifest.write(out)?;

    let data = with_attribute_source(bundle, &cfg)?;
    let t = &cfg.train;
    let (checkpoint, history, best): (Checkpoint, Vec<HistoryRow>, Option<(usize, f64)>) = match cfg.model {
        ModelKind::Pan => {
            let csm = csm.expect("resolved above");
            let o = train_pan::<f64>(&data, &cfg.encoder, &csm, t)?;
            let best = o.best_epoch.zip(o.best_val);
            (Checkpoint::Pan(o.model), o.history, best)
        }
        ModelKind::Siamese => {
            let (m, h) = train_siamese_baseline::<f64>(&data, &cfg.encoder, cfg.margin, t)?;
            (Checkpoint::Baseline(Baseline::Siamese { weights: m }), h, None)
        }
        ModelKind::Multitask => {
            let (m, h) = train_multitask_baseline::<f64>(&data, &cfg.encoder, t)?;
            (Checkpoint::Baseline(Baseline::Multitask { weights: m }), h, None)
        }
        ModelKind::LinkOnly => {
            let (m, h) = train_link_only::<f64>(&data, &cfg.encoder, t)?;
            (Checkpoint::Baseline(Baseline::LinkOnly { weights: m }), h, None)
        }
        ModelKind::AttrSim => {
            let (m, h) = train_attr_similarity_baseline::<f64>(&data, t, false)?;
            (Checkpoint::Baseline(Baseline::AttrSim { weights: m }), h, None)
        }
    };

    manifest.emit(out, CHECKPOINT_FILE, &checkpoint.to_json()?)?;
    let mut csv = Vec::new();
    write_history_csv(&history, &mut csv)?;
    manifest.emit(out, HISTORY_FILE, &csv)?;
    manifest.summary = Some(json!({
        "best_epoch": best.map(|b| b.0),
        "best_val": best.map(|b| b.1),
        "epochs_run": history.len(),
    }));
    manifest.write(out)?;
    Ok((checkpoint, best))
}
