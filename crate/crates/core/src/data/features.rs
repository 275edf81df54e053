//! Feature matrix files: `PANF` little-endian binary and a CSV fallback.

use std::io::{Read, Write};
use std::path::Path;

use crate::attributes::csv_err;
use crate::error::{PanError, Result};
use crate::linalg::Matrix;

const MAGIC: &[u8; 4] = b"PANF";
const HEADER_LEN: usize = 12;

/// Encodes features as `PANF`, `u32 n`, `u32 d`, then `n*d` `f32` values.
/// Values are narrowed to 32 bits.
pub fn write_panf<W: Write>(features: &Matrix<f64>, mut writer: W) -> Result<()> {
    let n = u32::try_from(features.rows()).map_err(|_| PanError::contract("too many rows for PANF"))?;
    let d = u32::try_from(features.cols()).map_err(|_| PanError::contract("too many columns for PANF"))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * features.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&n.to_le_bytes());
    buf.extend_from_slice(&d.to_le_bytes());
    for &v in features.as_slice() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    writer.write_all(&buf).map_err(|e| PanError::io("features", e))
}

pub fn decode_panf(bytes: &[u8], path: &str) -> Result<Matrix<f64>> {
    if bytes.len() < HEADER_LEN {
        return Err(PanError::Truncated {
            path: path.to_string(),
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(PanError::Parse {
            path: path.to_string(),
            line: 0,
            message: "missing PANF magic bytes".into(),
        });
    }
    let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().expect("4-byte slice")) as usize;
    let (n, d) = (word(4), word(8));
    let expected = HEADER_LEN + 4 * n * d;
    if bytes.len() != expected {
        return Err(PanError::Truncated {
            path: path.to_string(),
            expected,
            actual: bytes.len(),
        });
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64)
        .collect();
    Matrix::new(n, d, data)
}

pub fn read_panf<R: Read>(mut reader: R, path: &str) -> Result<Matrix<f64>> {
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| PanError::io(path, e))?;
    decode_panf(&bytes, path)
}

pub fn load_panf(path: &Path) -> Result<Matrix<f64>> {
    let bytes = std::fs::read(path).map_err(|e| PanError::io(path, e))?;
    decode_panf(&bytes, &path.display().to_string())
}

/// Reads `item_id,f_0..f_{d-1}` rows; ids must cover `0..n`.
pub fn read_feature_csv<R: Read>(reader: R, path: &str) -> Result<Matrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let parse_err = |line: usize, message: String| PanError::Parse {
        path: path.to_string(),
        line,
        message,
    };
    if headers.get(0) != Some("item_id") {
        return Err(parse_err(1, "first column must be item_id".into()));
    }
    for (k, h) in headers.iter().skip(1).enumerate() {
        if h != format!("f_{k}") {
            return Err(parse_err(1, format!("expected column f_{k}, found {h:?}")));
        }
    }
    let d = headers.len() - 1;
    let mut rows: Vec<Option<Vec<f64>>> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != d + 1 {
            return Err(parse_err(line, format!("expected {} cells, found {}", d + 1, rec.len())));
        }
        let id: usize = rec[0]
            .parse()
            .map_err(|e| parse_err(line, format!("bad item_id {:?}: {e}", &rec[0])))?;
        let vals = rec
            .iter()
            .skip(1)
            .map(|c| {
                c.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(line, format!("bad feature value {c:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if id >= rows.len() {
            rows.resize(id + 1, None);
        }
        if rows[id].replace(vals).is_some() {
            return Err(parse_err(line, format!("duplicate item_id {id}")));
        }
    }
    let n = rows.len();
    let mut data = Vec::with_capacity(n * d);
    for (id, row) in rows.into_iter().enumerate() {
        let row = row.ok_or_else(|| PanError::Consistency(format!("{path}: item_id {id} missing")))?;
        data.extend(row);
    }
    Matrix::new(n, d, data)
}

pub fn write_feature_csv<W: Write>(features: &Matrix<f64>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["item_id".to_string()];
    header.extend((0..features.cols()).map(|k| format!("f_{k}")));
    w.write_record(&header).map_err(|e| csv_err("features", e))?;
    for r in 0..features.rows() {
        let mut rec = vec![r.to_string()];
        rec.extend(features.row(r).iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(|e| csv_err("features", e))?;
    }
    w.flush().map_err(|e| PanError::io("features", e))
}

/// Loads by extension: `.csv` goes through the CSV reader, anything else is
/// treated as `PANF`.
pub fn load_features(path: &Path) -> Result<Matrix<f64>> {
    if path.extension().is_some_and(|e| e == "csv") {
        let f = std::fs::File::open(path).map_err(|e| PanError::io(path, e))?;
        read_feature_csv(f, &path.display().to_string())
    } else {
        load_panf(path)
    }
}
