//! Labelled datasets: LIBSVM text ingestion and the binary cache format.

use std::io::{BufRead, Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, StopTimeError};

/// Row-major binary layout: magic, `n` and `d` as little-endian u64, the
/// `n x d` features as little-endian f64, then one signed byte per label.
pub const DATASET_MAGIC: &[u8; 5] = b"STDZ1";
/// Parameter checkpoint: magic, `p` as little-endian u64, then `p` f64.
pub const THETA_MAGIC: &[u8; 5] = b"STTH1";

/// Features `W` (one sample per row) and labels in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DMatrix<f64>,
    pub labels: DVector<f64>,
    /// Ground-truth weights when the data is synthetic.
    pub truth: Option<DVector<f64>>,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: DVector<f64>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(StopTimeError::contract("feature rows and label count differ"));
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(StopTimeError::contract("labels must be -1 or +1"));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(StopTimeError::contract("non-finite feature"));
        }
        Ok(Dataset { features, labels, truth: None })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    /// Append a constant-one intercept column.
    pub fn with_intercept(&self) -> Dataset {
        let d = self.d();
        let features = self.features.clone().insert_column(d, 1.0);
        Dataset {
            features,
            labels: self.labels.clone(),
            truth: None,
        }
    }
}

fn parse_label(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok.parse().map_err(|_| StopTimeError::Parse {
        line,
        msg: format!("bad label `{tok}`"),
    })?;
    if v == 1.0 {
        Ok(1.0)
    } else if v == 0.0 || v == -1.0 {
        Ok(-1.0)
    } else {
        Err(StopTimeError::Parse {
            line,
            msg: format!("label `{tok}` is not one of -1, 0, +1"),
        })
    }
}

/// Parse LIBSVM text without touching the columns: labels `{0,1}` and
/// `{-1,+1}` map to `{-1,+1}`, `d` is the largest index seen unless given.
pub fn parse_libsvm_raw<R: BufRead>(reader: R, dim: Option<usize>) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| StopTimeError::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        let content = match line.find('#') {
            Some(pos) => &line[..pos],
            None => &line[..],
        };
        let mut tokens = content.split_whitespace();
        let Some(label_tok) = tokens.next() else { continue };
        labels.push(parse_label(label_tok, lineno)?);
        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| StopTimeError::Parse {
                line: lineno,
                msg: format!("expected idx:val, got `{tok}`"),
            })?;
            let idx: usize = idx.parse().map_err(|_| StopTimeError::Parse {
                line: lineno,
                msg: format!("bad index `{idx}`"),
            })?;
            let val: f64 = val.parse().map_err(|_| StopTimeError::Parse {
                line: lineno,
                msg: format!("bad value `{val}`"),
            })?;
            if idx == 0 || idx <= last {
                return Err(StopTimeError::Parse {
                    line: lineno,
                    msg: format!("indices must be 1-based and ascending (got {idx} after {last})"),
                });
            }
            if !val.is_finite() {
                return Err(StopTimeError::Parse {
                    line: lineno,
                    msg: format!("non-finite value `{val}`"),
                });
            }
            last = idx;
            row.push((idx, val));
        }
        max_index = max_index.max(last);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(StopTimeError::EmptyDataset);
    }
    let d = match dim {
        Some(d) if d < max_index => {
            return Err(StopTimeError::contract(format!(
                "dimension override {d} below largest index {max_index}"
            )))
        }
        Some(d) => d,
        None => max_index,
    };
    let mut features = DMatrix::zeros(rows.len(), d);
    for (r, row) in rows.iter().enumerate() {
        for &(idx, val) in row {
            features[(r, idx - 1)] = val;
        }
    }
    Ok(Dataset {
        features,
        labels: DVector::from_vec(labels),
        truth: None,
    })
}

/// Parse LIBSVM text and append the intercept column.
pub fn parse_libsvm<R: BufRead>(reader: R, dim: Option<usize>) -> Result<Dataset> {
    Ok(parse_libsvm_raw(reader, dim)?.with_intercept())
}

/// Write every column in LIBSVM text (zeros omitted, shortest round-trip
/// float formatting).
pub fn write_libsvm<W: Write>(data: &Dataset, mut out: W) -> std::io::Result<()> {
    for r in 0..data.n() {
        let label = if data.labels[r] > 0.0 { "+1" } else { "-1" };
        write!(out, "{label}")?;
        for c in 0..data.d() {
            let v = data.features[(r, c)];
            if v != 0.0 {
                write!(out, " {}:{}", c + 1, v)?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_dataset_blob<W: Write>(data: &Dataset, mut out: W) -> std::io::Result<()> {
    out.write_all(DATASET_MAGIC)?;
    out.write_all(&(data.n() as u64).to_le_bytes())?;
    out.write_all(&(data.d() as u64).to_le_bytes())?;
    for r in 0..data.n() {
        for c in 0..data.d() {
            out.write_all(&data.features[(r, c)].to_le_bytes())?;
        }
    }
    let labels: Vec<u8> = data.labels.iter().map(|&y| (y as i8) as u8).collect();
    out.write_all(&labels)
}

fn read_exact_or_parse<R: Read>(input: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    input.read_exact(buf).map_err(|e| StopTimeError::Parse {
        line: 0,
        msg: format!("truncated blob ({what}): {e}"),
    })
}

fn read_u64<R: Read>(input: &mut R, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact_or_parse(input, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(input: &mut R, what: &str) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact_or_parse(input, &mut b, what)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_dataset_blob<R: Read>(mut input: R) -> Result<Dataset> {
    let mut magic = [0u8; 5];
    read_exact_or_parse(&mut input, &mut magic, "magic")?;
    if &magic != DATASET_MAGIC {
        return Err(StopTimeError::Parse {
            line: 0,
            msg: "not a dataset blob".into(),
        });
    }
    let n = read_u64(&mut input, "n")? as usize;
    let d = read_u64(&mut input, "d")? as usize;
    let mut features = DMatrix::zeros(n, d);
    for r in 0..n {
        for c in 0..d {
            features[(r, c)] = read_f64(&mut input, "features")?;
        }
    }
    let mut labels = vec![0u8; n];
    read_exact_or_parse(&mut input, &mut labels, "labels")?;
    let labels = DVector::from_iterator(n, labels.iter().map(|&b| b as i8 as f64));
    Dataset::new(features, labels)
}

pub fn write_theta_blob<W: Write>(theta: &DVector<f64>, mut out: W) -> std::io::Result<()> {
    out.write_all(THETA_MAGIC)?;
    out.write_all(&(theta.len() as u64).to_le_bytes())?;
    for v in theta.iter() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_theta_blob<R: Read>(mut input: R) -> Result<DVector<f64>> {
    let mut magic = [0u8; 5];
    read_exact_or_parse(&mut input, &mut magic, "magic")?;
    if &magic != THETA_MAGIC {
        return Err(StopTimeError::Parse {
            line: 0,
            msg: "not a parameter checkpoint".into(),
        });
    }
    let p = read_u64(&mut input, "p")? as usize;
    let mut theta = DVector::zeros(p);
    for v in theta.iter_mut() {
        *v = read_f64(&mut input, "values")?;
    }
    Ok(theta)
}
