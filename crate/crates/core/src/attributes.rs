//! Per-item binary attributes with missing-label masks, and the pairwise
//! label builder that turns two items' attributes into condition targets.

use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PanError, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeTable {
    n: usize,
    m: usize,
    values: Vec<u8>,
    mask: Vec<u8>,
    confidence: Option<Vec<u8>>,
}

/// Symmetric binary function combining two attribute labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombineFn {
    And,
    Or,
    Xor,
    Xnor,
    /// `[AND; XOR]`, AND block first; twice as many conditions.
    #[serde(rename = "and-xor")]
    AndConcatXor,
}

impl CombineFn {
    pub const ALL: [CombineFn; 5] = [
        CombineFn::And,
        CombineFn::Or,
        CombineFn::Xor,
        CombineFn::Xnor,
        CombineFn::AndConcatXor,
    ];

    pub fn label_len(self, m: usize) -> usize {
        match self {
            CombineFn::AndConcatXor => 2 * m,
            _ => m,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CombineFn::And => "and",
            CombineFn::Or => "or",
            CombineFn::Xor => "xor",
            CombineFn::Xnor => "xnor",
            CombineFn::AndConcatXor => "and-xor",
        }
    }

    fn apply(self, a: u8, b: u8) -> u8 {
        match self {
            CombineFn::And => a & b,
            CombineFn::Or => a | b,
            CombineFn::Xor => a ^ b,
            CombineFn::Xnor => 1 - (a ^ b),
            CombineFn::AndConcatXor => unreachable!("expanded by combine_pair"),
        }
    }
}

impl FromStr for CombineFn {
    type Err = PanError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "and" => Ok(CombineFn::And),
            "or" => Ok(CombineFn::Or),
            "xor" => Ok(CombineFn::Xor),
            "xnor" => Ok(CombineFn::Xnor),
            "and-xor" | "and_concat_xor" | "and-concat-xor" => Ok(CombineFn::AndConcatXor),
            other => Err(PanError::contract(format!("unknown attribute combination {other:?}"))),
        }
    }
}

impl std::fmt::Display for CombineFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairAttributeLabel {
    pub labels: Vec<u8>,
    /// 1 only where both items were labeled.
    pub mask: Vec<u8>,
}

pub fn combine_pair(
    a_i: &[u8],
    mask_i: &[u8],
    a_j: &[u8],
    mask_j: &[u8],
    fa: CombineFn,
) -> Result<PairAttributeLabel> {
    let m = a_i.len();
    for (len, _) in [(mask_i.len(), 0), (a_j.len(), 1), (mask_j.len(), 2)] {
        if len != m {
            return Err(PanError::Length {
                op: "combine_pair",
                expected: m,
                actual: len,
            });
        }
    }
    let mask: Vec<u8> = mask_i.iter().zip(mask_j).map(|(&x, &y)| x & y).collect();
    let label_of = |f: CombineFn| -> Vec<u8> {
        a_i.iter()
            .zip(a_j)
            .zip(&mask)
            .map(|((&x, &y), &k)| if k == 1 { f.apply(x, y) } else { 0 })
            .collect()
    };
    Ok(match fa {
        CombineFn::AndConcatXor => {
            let mut labels = label_of(CombineFn::And);
            labels.extend(label_of(CombineFn::Xor));
            let mut full_mask = mask.clone();
            full_mask.extend_from_slice(&mask);
            PairAttributeLabel {
                labels,
                mask: full_mask,
            }
        }
        f => PairAttributeLabel {
            labels: label_of(f),
            mask,
        },
    })
}

impl AttributeTable {
    pub fn new(n: usize, m: usize, values: Vec<u8>, mask: Vec<u8>) -> Result<Self> {
        for (what, v) in [("values", &values), ("mask", &mask)] {
            if v.len() != n * m {
                return Err(PanError::Length {
                    op: if what == "values" { "attribute values" } else { "attribute mask" },
                    expected: n * m,
                    actual: v.len(),
                });
            }
            if let Some(pos) = v.iter().position(|&x| x > 1) {
                return Err(PanError::contract(format!(
                    "attribute {what} entry ({}, {}) is {}, expected 0 or 1",
                    pos / m.max(1),
                    pos % m.max(1),
                    v[pos]
                )));
            }
        }
        Ok(Self {
            n,
            m,
            values,
            mask,
            confidence: None,
        })
    }

    pub fn fully_labeled(n: usize, m: usize, values: Vec<u8>) -> Result<Self> {
        Self::new(n, m, values, vec![1; n * m])
    }

    pub fn with_confidence(mut self, confidence: Vec<u8>) -> Result<Self> {
        if confidence.len() != self.n * self.m {
            return Err(PanError::Length {
                op: "attribute confidence",
                expected: self.n * self.m,
                actual: confidence.len(),
            });
        }
        self.confidence = Some(confidence);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self, i: usize) -> &[u8] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn mask(&self, i: usize) -> &[u8] {
        &self.mask[i * self.m..(i + 1) * self.m]
    }

    pub fn confidence(&self) -> Option<&[u8]> {
        self.confidence.as_deref()
    }

    pub fn labeled_count(&self) -> usize {
        self.mask.iter().filter(|&&k| k == 1).count()
    }

    pub fn pair_label(&self, i: usize, j: usize, fa: CombineFn) -> Result<PairAttributeLabel> {
        for idx in [i, j] {
            if idx >= self.n {
                return Err(PanError::Index { index: idx, len: self.n });
            }
        }
        combine_pair(self.values(i), self.mask(i), self.values(j), self.mask(j), fa)
    }

    /// Same table with every mask entry cleared.
    pub fn all_masked(&self) -> Self {
        Self {
            mask: vec![0; self.mask.len()],
            ..self.clone()
        }
    }

    /// Overwrites values at masked-out positions; labeled entries unchanged.
    pub fn with_masked_values(&self, fill: impl Fn(usize, usize) -> u8) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            for k in 0..self.m {
                if self.mask[i * self.m + k] == 0 {
                    out.values[i * self.m + k] = fill(i, k) & 1;
                }
            }
        }
        out
    }

    /// Keeps only the listed attribute columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.m) {
            return Err(PanError::Index { index: bad, len: self.m });
        }
        let pick = |src: &[u8]| -> Vec<u8> {
            (0..self.n)
                .flat_map(|i| columns.iter().map(move |&c| src[i * self.m + c]))
                .collect()
        };
        Ok(Self {
            n: self.n,
            m: columns.len(),
            values: pick(&self.values),
            mask: pick(&self.mask),
            confidence: self.confidence.as_deref().map(pick),
        })
    }
}

/// Clears the mask wherever confidence is at or below `min_conf`.
pub fn threshold_by_confidence(table: &AttributeTable, min_conf: u8) -> Result<AttributeTable> {
    let conf = table
        .confidence
        .as_ref()
        .ok_or_else(|| PanError::contract("confidence thresholding needs confidence scores"))?;
    let mut out = table.clone();
    for (k, &c) in out.mask.iter_mut().zip(conf) {
        if c <= min_conf {
            *k = 0;
        }
    }
    Ok(out)
}

/// Replaces every labeled value with a fair coin flip; the mask is kept.
pub fn randomize_labels(table: &AttributeTable, seed: u64) -> AttributeTable {
    let mut rng = rng_from_seed(seed);
    let mut out = table.clone();
    for (v, &k) in out.values.iter_mut().zip(&table.mask) {
        if k == 1 {
            *v = u8::from(rng.random::<bool>());
        }
    }
    out
}

fn header_check(path: &str, headers: &csv::StringRecord) -> Result<usize> {
    let fields: Vec<&str> = headers.iter().map(str::trim).collect();
    if fields.first() != Some(&"item_id") {
        return Err(PanError::Parse {
            path: path.to_string(),
            line: 1,
            message: format!("expected first column item_id, found {:?}", fields.first()),
        });
    }
    Ok(fields.len() - 1)
}

fn parse_item_id(path: &str, line: usize, field: &str, n_seen: usize) -> Result<usize> {
    field.trim().parse::<usize>().map_err(|e| PanError::Parse {
        path: path.to_string(),
        line,
        message: format!("bad item_id {field:?} in row {n_seen}: {e}"),
    })
}

/// Reads rows of `item_id,attr_0..` with cells `0`, `1` or `?`. Item ids
/// must be exactly `0..n` (any order).
pub fn read_attribute_csv<R: Read>(reader: R, path: &str) -> Result<AttributeTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let m = header_check(path, &headers)?;
    let mut rows: Vec<(usize, Vec<u8>, Vec<u8>)> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != m + 1 {
            return Err(PanError::Parse {
                path: path.to_string(),
                line,
                message: format!("expected {} cells, found {}", m + 1, rec.len()),
            });
        }
        let id = parse_item_id(path, line, &rec[0], r)?;
        let mut vals = Vec::with_capacity(m);
        let mut mask = Vec::with_capacity(m);
        for cell in rec.iter().skip(1) {
            let (v, k) = match cell {
                "0" => (0, 1),
                "1" => (1, 1),
                "?" => (0, 0),
                other => {
                    return Err(PanError::Parse {
                        path: path.to_string(),
                        line,
                        message: format!("attribute cell {other:?} is not 0, 1 or ?"),
                    })
                }
            };
            vals.push(v);
            mask.push(k);
        }
        rows.push((id, vals, mask));
    }
    let n = rows.len();
    let mut values = vec![0u8; n * m];
    let mut mask = vec![0u8; n * m];
    let mut seen = vec![false; n];
    for (id, v, k) in rows {
        if id >= n || seen[id] {
            return Err(PanError::Consistency(format!(
                "{path}: item_id {id} is duplicated or outside 0..{n}"
            )));
        }
        seen[id] = true;
        values[id * m..(id + 1) * m].copy_from_slice(&v);
        mask[id * m..(id + 1) * m].copy_from_slice(&k);
    }
    AttributeTable::new(n, m, values, mask)
}

/// Confidence file: same layout, integer cells 1-4.
pub fn read_confidence_csv<R: Read>(reader: R, path: &str, n: usize, m: usize) -> Result<Vec<u8>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let cols = header_check(path, &headers)?;
    if cols != m {
        return Err(PanError::Consistency(format!(
            "{path}: {cols} confidence columns for {m} attributes"
        )));
    }
    let mut out = vec![0u8; n * m];
    let mut count = 0;
    for (r, rec) in rdr.records().enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let id = parse_item_id(path, line, &rec[0], r)?;
        if id >= n {
            return Err(PanError::Index { index: id, len: n });
        }
        for (k, cell) in rec.iter().skip(1).enumerate() {
            let c: u8 = cell.parse().ok().filter(|c| (1..=4).contains(c)).ok_or_else(|| {
                PanError::Parse {
                    path: path.to_string(),
                    line,
                    message: format!("confidence {cell:?} is not an integer in 1..=4"),
                }
            })?;
            out[id * m + k] = c;
        }
        count += 1;
    }
    if count != n {
        return Err(PanError::Consistency(format!(
            "{path}: {count} confidence rows for {n} items"
        )));
    }
    Ok(out)
}

pub fn write_attribute_csv<W: Write>(table: &AttributeTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<String> = std::iter::once("item_id".to_string())
        .chain((0..table.m).map(|k| format!("attr_{k}")))
        .collect();
    w.write_record(&header).map_err(|e| csv_err("attributes", e))?;
    for i in 0..table.n {
        let row: Vec<String> = std::iter::once(i.to_string())
            .chain(table.values(i).iter().zip(table.mask(i)).map(|(&v, &k)| {
                if k == 0 {
                    "?".to_string()
                } else {
                    v.to_string()
                }
            }))
            .collect();
        w.write_record(&row).map_err(|e| csv_err("attributes", e))?;
    }
    w.flush().map_err(|e| PanError::io("attributes", e))?;
    Ok(())
}

pub fn write_confidence_csv<W: Write>(table: &AttributeTable, writer: W) -> Result<()> {
    let conf = table
        .confidence
        .as_ref()
        .ok_or_else(|| PanError::contract("table has no confidence scores"))?;
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<String> = std::iter::once("item_id".to_string())
        .chain((0..table.m).map(|k| format!("attr_{k}")))
        .collect();
    w.write_record(&header).map_err(|e| csv_err("confidence", e))?;
    for i in 0..table.n {
        let row: Vec<String> = std::iter::once(i.to_string())
            .chain(conf[i * table.m..(i + 1) * table.m].iter().map(u8::to_string))
            .collect();
        w.write_record(&row).map_err(|e| csv_err("confidence", e))?;
    }
    w.flush().map_err(|e| PanError::io("confidence", e))?;
    Ok(())
}

pub fn load_attribute_csv(path: &Path) -> Result<AttributeTable> {
    let f = std::fs::File::open(path).map_err(|e| PanError::io(path, e))?;
    read_attribute_csv(f, &path.display().to_string())
}

pub(crate) fn csv_err(path: &str, e: csv::Error) -> PanError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    PanError::Parse {
        path: path.to_string(),
        line,
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(fa: CombineFn, a: u8, b: u8) -> u8 {
        combine_pair(&[a], &[1], &[b], &[1], fa).unwrap().labels[0]
    }

    #[test]
    fn truth_tables() {
        assert_eq!(one(CombineFn::Or, 1, 0), 1);
        assert_eq!(one(CombineFn::Xor, 1, 0), 1);
        assert_eq!(one(CombineFn::And, 1, 0), 0);
        assert_eq!(one(CombineFn::Xnor, 1, 0), 0);
        assert_eq!(one(CombineFn::And, 0, 0), 0);
        assert_eq!(one(CombineFn::Or, 0, 0), 0);
        assert_eq!(one(CombineFn::Xor, 0, 0), 0);
        assert_eq!(one(CombineFn::Xnor, 0, 0), 1);
    }

    #[test]
    fn one_sided_label_is_unknown() {
        for fa in CombineFn::ALL {
            for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let out = combine_pair(&[a], &[1], &[b], &[0], fa).unwrap();
                assert!(out.mask.iter().all(|&k| k == 0));
            }
        }
    }

    #[test]
    fn concat_layout() {
        let out = combine_pair(&[1, 1], &[1, 0], &[1, 0], &[1, 1], CombineFn::AndConcatXor).unwrap();
        assert_eq!(out.labels, vec![1, 0, 0, 0]);
        assert_eq!(out.mask, vec![1, 0, 1, 0]);
    }

    #[test]
    fn length_mismatch() {
        assert!(combine_pair(&[1, 0], &[1], &[1, 0], &[1, 1], CombineFn::Or).is_err());
    }

    fn conf_table() -> AttributeTable {
        AttributeTable::new(
            4,
            3,
            vec![1, 0, 1, 0, 1, 1, 1, 1, 0, 0, 0, 1],
            vec![1, 1, 1, 1, 0, 1, 1, 1, 1, 1, 1, 1],
        )
        .unwrap()
        .with_confidence(vec![4, 2, 3, 1, 4, 2, 3, 3, 4, 2, 1, 4])
        .unwrap()
    }

    #[test]
    fn confidence_threshold_matches_per_entry_filter() {
        let t = conf_table();
        let out = threshold_by_confidence(&t, 2).unwrap();
        let conf = t.confidence().unwrap();
        for i in 0..4 {
            for k in 0..3 {
                let expect = if conf[i * 3 + k] <= 2 { 0 } else { t.mask(i)[k] };
                assert_eq!(out.mask(i)[k], expect);
                assert_eq!(out.values(i)[k], t.values(i)[k]);
            }
        }
        assert_eq!(threshold_by_confidence(&t, 0).unwrap(), t);
        let twos = t.clone().with_confidence(vec![2; 12]).unwrap();
        assert_eq!(threshold_by_confidence(&twos, 2).unwrap().labeled_count(), 0);
        let bare = AttributeTable::fully_labeled(1, 1, vec![1]).unwrap();
        assert!(threshold_by_confidence(&bare, 2).is_err());
    }

    #[test]
    fn randomized_labels_keep_mask_and_are_fair() {
        let n = 10_000;
        let t = AttributeTable::new(n, 1, vec![1; n], vec![1; n]).unwrap();
        let a = randomize_labels(&t, 4);
        assert_eq!(a, randomize_labels(&t, 4));
        let ones = (0..n).filter(|&i| a.values(i)[0] == 1).count() as f64;
        let sd = (n as f64 * 0.25).sqrt();
        assert!((ones - n as f64 / 2.0).abs() < 3.0 * sd);

        let masked = conf_table();
        let r = randomize_labels(&masked, 1);
        for i in 0..4 {
            assert_eq!(r.mask(i), masked.mask(i));
        }
    }

    #[test]
    fn csv_question_marks_become_mask_zeros() {
        let text = "item_id, attr_0, attr_1, attr_2\n1, ?, 1, 0\n0, 1, ?, ?\n";
        let t = read_attribute_csv(text.as_bytes(), "mem").unwrap();
        assert_eq!(t.n(), 2);
        assert_eq!(t.mask(0), &[1, 0, 0]);
        assert_eq!(t.mask(1), &[0, 1, 1]);
        assert_eq!(t.values(0), &[1, 0, 0]);
        assert_eq!(t.values(1), &[0, 1, 0]);

        let mut buf = Vec::new();
        write_attribute_csv(&t, &mut buf).unwrap();
        assert_eq!(read_attribute_csv(buf.as_slice(), "mem").unwrap(), t);
    }

    #[test]
    fn csv_errors_carry_lines() {
        let bad = "item_id,attr_0\n0,1\n1,2\n";
        match read_attribute_csv(bad.as_bytes(), "mem") {
            Err(PanError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let dup = "item_id,attr_0\n0,1\n0,0\n";
        assert!(matches!(
            read_attribute_csv(dup.as_bytes(), "mem"),
            Err(PanError::Consistency(_))
        ));
    }
}
