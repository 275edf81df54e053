use anyhow::{Context, Result};
use pan_core::data::bundle::to_json_bytes;
use pan_core::data::synthetic::generate;

use crate::args::GenArgs;
use crate::config::GenConfig;

pub const ORACLE_FILE: &str = "oracle_report.json";

pub fn run(a: &GenArgs) -> Result<bool> {
    let cfg = GenConfig::resolve(a)?;
    let generated = generate(&cfg.synthetic, cfg.seed)?;
    let mut extra = Vec::new();
    if let Some(oracle) = &generated.oracle {
        extra.push((ORACLE_FILE, to_json_bytes(oracle)?));
    }
    let manifest = generated
        .bundle
        .save(&a.out, Some(serde_json::to_value(&cfg)?), &extra)
        .with_context(|| format!("writing bundle to {}", a.out.display()))?;
    println!(
        "wrote {} items x {} features to {}",
        manifest.items,
        manifest.feature_dim,
        a.out.display()
    );
    if let Some(o) = &generated.oracle {
        println!("presence-only bayes rate {:.6}", o.presence_only_bayes_rate);
    }
    Ok(true)
}
