//! On-disk dataset bundles: a directory of feature, attribute, graph, split
//! and auxiliary files tied together by a hashed manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attributes::{read_attribute_csv, read_confidence_csv, write_attribute_csv, write_confidence_csv, AttributeTable};
use crate::error::{PanError, Result};
use crate::graph::SimilarityGraph;
use crate::linalg::Matrix;

use super::features::{decode_panf, write_panf};

pub const FEATURES_FILE: &str = "features.panf";
pub const ATTRIBUTES_FILE: &str = "attributes.csv";
pub const CONFIDENCE_FILE: &str = "confidence.csv";
pub const GRAPH_FILE: &str = "graph.csv";
pub const SPLITS_FILE: &str = "splits.json";
pub const CATEGORIES_FILE: &str = "categories.csv";
pub const OUTFITS_FILE: &str = "outfits.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub features: Matrix<f64>,
    pub attributes: Option<AttributeTable>,
    pub graph: SimilarityGraph,
    pub splits: BTreeMap<String, Vec<usize>>,
    /// Item type for compatibility data, class label for few-shot data.
    pub categories: Option<Vec<usize>>,
    /// Ground-truth item sets, used for set-level evaluation.
    pub outfits: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: String,
    pub items: usize,
    pub feature_dim: usize,
    pub attributes: Option<usize>,
    /// File name to lowercase hex SHA-256 of its contents.
    pub files: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl DatasetBundle {
    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn split(&self, name: &str) -> Result<&[usize]> {
        self.splits
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| PanError::Consistency(format!("bundle has no split named {name:?}")))
    }

    /// Graph restricted to edges whose endpoints both lie in `split`.
    pub fn split_graph(&self, split: &str) -> Result<SimilarityGraph> {
        Ok(self.graph.restricted_to(self.split(split)?))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.graph.n() != n {
            return Err(PanError::Consistency(format!(
                "graph has {} nodes but features have {n} rows",
                self.graph.n()
            )));
        }
        if let Some(a) = &self.attributes {
            if a.n() != n {
                return Err(PanError::Consistency(format!(
                    "attribute table has {} rows but features have {n}",
                    a.n()
                )));
            }
        }
        if let Some(c) = &self.categories {
            if c.len() != n {
                return Err(PanError::Consistency(format!(
                    "{} category labels for {n} items",
                    c.len()
                )));
            }
        }
        let mut owner: Vec<Option<&str>> = vec![None; n];
        for (name, idx) in &self.splits {
            for &i in idx {
                if i >= n {
                    return Err(PanError::Consistency(format!(
                        "split {name:?} references item {i}, but only {n} items exist"
                    )));
                }
                if let Some(prev) = owner[i].replace(name) {
                    return Err(PanError::Consistency(format!(
                        "item {i} appears in both split {prev:?} and split {name:?}"
                    )));
                }
            }
        }
        for (i, j) in self.graph.edges() {
            if let (Some(a), Some(b)) = (owner[i], owner[j]) {
                if a != b {
                    return Err(PanError::Consistency(format!(
                        "edge ({i}, {j}) crosses from split {a:?} into {b:?}"
                    )));
                }
            }
        }
        if let Some(outfits) = &self.outfits {
            for (k, o) in outfits.iter().enumerate() {
                if let Some(&bad) = o.iter().find(|&&i| i >= n) {
                    return Err(PanError::Consistency(format!(
                        "outfit {k} references item {bad}, but only {n} items exist"
                    )));
                }
            }
        }
        Ok(())
    }

    fn encode_files(&self) -> Result<BTreeMap<&'static str, Vec<u8>>> {
        let mut files = BTreeMap::new();
        let mut buf = Vec::new();
        write_panf(&self.features, &mut buf)?;
        files.insert(FEATURES_FILE, buf);
        if let Some(a) = &self.attributes {
            let mut buf = Vec::new();
            write_attribute_csv(a, &mut buf)?;
            files.insert(ATTRIBUTES_FILE, buf);
            if a.confidence().is_some() {
                let mut buf = Vec::new();
                write_confidence_csv(a, &mut buf)?;
                files.insert(CONFIDENCE_FILE, buf);
            }
        }
        let mut buf = Vec::new();
        self.graph.write_csv(&mut buf)?;
        files.insert(GRAPH_FILE, buf);
        files.insert(SPLITS_FILE, to_json_bytes(&self.splits)?);
        if let Some(c) = &self.categories {
            let mut text = String::from("item_id,category\n");
            for (i, c) in c.iter().enumerate() {
                text.push_str(&format!("{i},{c}\n"));
            }
            files.insert(CATEGORIES_FILE, text.into_bytes());
        }
        if let Some(o) = &self.outfits {
            files.insert(OUTFITS_FILE, to_json_bytes(o)?);
        }
        Ok(files)
    }

    /// Writes every file plus `manifest.json`. `extra` files (such as an
    /// oracle report) are written and hashed alongside.
    pub fn save(
        &self,
        dir: &Path,
        generator: Option<serde_json::Value>,
        extra: &[(&str, Vec<u8>)],
    ) -> Result<BundleManifest> {
        self.validate()?;
        std::fs::create_dir_all(dir).map_err(|e| PanError::io(dir, e))?;
        let mut hashes = BTreeMap::new();
        let mut files: Vec<(String, Vec<u8>)> = self
            .encode_files()?
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        files.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
        for (name, bytes) in &files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| PanError::io(&path, e))?;
            hashes.insert(name.clone(), sha256_hex(bytes));
        }
        let manifest = BundleManifest {
            format: "pan-bundle/1".into(),
            items: self.n(),
            feature_dim: self.features.cols(),
            attributes: self.attributes.as_ref().map(AttributeTable::m),
            files: hashes,
            generator,
        };
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, to_json_bytes(&manifest)?).map_err(|e| PanError::io(&path, e))?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<(Self, BundleManifest)> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest: BundleManifest = serde_json::from_slice(&read(&manifest_path)?)?;
        let mut contents = BTreeMap::new();
        for (name, hash) in &manifest.files {
            let path = dir.join(name);
            let bytes = read(&path)?;
            let actual = sha256_hex(&bytes);
            if &actual != hash {
                return Err(PanError::Consistency(format!(
                    "{} hashes to {actual}, manifest records {hash}",
                    path.display()
                )));
            }
            contents.insert(name.as_str(), (path, bytes));
        }
        let get = |name: &str| {
            contents
                .get(name)
                .ok_or_else(|| PanError::Consistency(format!("manifest does not list {name}")))
        };
        let (path, bytes) = get(FEATURES_FILE)?;
        let features = decode_panf(bytes, &path.display().to_string())?;
        let n = features.rows();
        if n != manifest.items || features.cols() != manifest.feature_dim {
            return Err(PanError::Consistency(format!(
                "features are {n}x{} but manifest records {}x{}",
                features.cols(),
                manifest.items,
                manifest.feature_dim
            )));
        }
        let attributes = match contents.get(ATTRIBUTES_FILE) {
            Some((path, bytes)) => {
                let mut table = read_attribute_csv(bytes.as_slice(), &path.display().to_string())?;
                if let Some((cpath, cbytes)) = contents.get(CONFIDENCE_FILE) {
                    let conf = read_confidence_csv(cbytes.as_slice(), &cpath.display().to_string(), table.n(), table.m())?;
                    table = table.with_confidence(conf)?;
                }
                Some(table)
            }
            None => None,
        };
        let (path, bytes) = get(GRAPH_FILE)?;
        let graph = SimilarityGraph::read_csv(bytes.as_slice(), &path.display().to_string(), n)?;
        let (_, bytes) = get(SPLITS_FILE)?;
        let splits: BTreeMap<String, Vec<usize>> = serde_json::from_slice(bytes)?;
        let categories = match contents.get(CATEGORIES_FILE) {
            Some((path, bytes)) => Some(read_categories(bytes, &path.display().to_string(), n)?),
            None => None,
        };
        let outfits = match contents.get(OUTFITS_FILE) {
            Some((_, bytes)) => Some(serde_json::from_slice(bytes)?),
            None => None,
        };
        let bundle = Self {
            features,
            attributes,
            graph,
            splits,
            categories,
            outfits,
        };
        bundle.validate()?;
        Ok((bundle, manifest))
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| PanError::io(path, e))
}

pub fn to_json_bytes<S: Serialize + ?Sized>(value: &S) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn read_categories(bytes: &[u8], path: &str, n: usize) -> Result<Vec<usize>> {
    let mut out = vec![None; n];
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    for (r, rec) in rdr.records().enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| crate::attributes::csv_err(path, e))?;
        let parse = |s: &str| {
            s.parse::<usize>().map_err(|e| PanError::Parse {
                path: path.to_string(),
                line,
                message: format!("bad integer {s:?}: {e}"),
            })
        };
        if rec.len() != 2 {
            return Err(PanError::Parse {
                path: path.to_string(),
                line,
                message: format!("expected 2 cells, found {}", rec.len()),
            });
        }
        let (id, c) = (parse(&rec[0])?, parse(&rec[1])?);
        if id >= n {
            return Err(PanError::Consistency(format!("{path}: line {line}: item {id} out of range for {n} items")));
        }
        out[id] = Some(c);
    }
    out.into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| PanError::Consistency(format!("{path}: no category for item {i}"))))
        .collect()
}

/// Items grouped by category label, each group in ascending order.
pub fn items_by_category(categories: &[usize], items: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let uniq: BTreeSet<usize> = items.iter().copied().collect();
    for i in uniq {
        out.entry(categories[i]).or_default().push(i);
    }
    out
}
