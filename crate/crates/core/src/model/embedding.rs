//! Id-keyed real matrices: embeddings, and input features for the toy encoders.
//!
//! File format: a header line `dim=<d> count=<n>`, then one line per row holding
//! the id followed by `d` whitespace-separated decimal floats.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

/// Norms below this are treated as zero vectors.
pub const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    vectors: Array2<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        if ids.len() != vectors.nrows() {
            return Err(Error::Shape(format!(
                "{} ids for {} rows",
                ids.len(),
                vectors.nrows()
            )));
        }
        if vectors.ncols() == 0 {
            return Err(Error::Shape("embedding dim must be positive".into()));
        }
        if let Some((row, _)) = vectors
            .rows()
            .into_iter()
            .enumerate()
            .find(|(_, r)| r.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite(format!("row `{}`", ids[row])));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Duplicate {
                    kind: "embedding",
                    id: id.clone(),
                });
            }
        }
        Ok(EmbeddingMatrix { ids, vectors, index })
    }

    pub fn from_rows(rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let dim = rows.first().map_or(0, |(_, v)| v.len());
        let mut flat = Vec::with_capacity(rows.len() * dim);
        let mut ids = Vec::with_capacity(rows.len());
        for (id, v) in rows {
            if v.len() != dim {
                return Err(Error::Shape(format!("row `{id}` has {} values, expected {dim}", v.len())));
            }
            ids.push(id);
            flat.extend(v);
        }
        let vectors = Array2::from_shape_vec((ids.len(), dim), flat)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(ids, vectors)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<ArrayView1<'_, f64>> {
        self.position(id).map(|i| self.vectors.row(i))
    }

    /// Row-wise l2 normalization. Fails on a (near) zero row instead of dividing by it.
    pub fn normalized(&self) -> Result<Self> {
        let mut vectors = self.vectors.clone();
        for (i, mut row) in vectors.rows_mut().into_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if norm < ZERO_NORM {
                return Err(Error::NonFinite(format!(
                    "row `{}` has zero norm and cannot be normalized",
                    self.ids[i]
                )));
            }
            row /= norm;
        }
        Ok(EmbeddingMatrix {
            ids: self.ids.clone(),
            vectors,
            index: self.index.clone(),
        })
    }

    /// Largest `| ||row|| - 1 |` over all rows.
    pub fn max_norm_deviation(&self) -> f64 {
        self.vectors
            .rows()
            .into_iter()
            .map(|r| (r.dot(&r).sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Rows for `ids`, in that order.
    pub fn select(&self, ids: &[&str]) -> Result<Self> {
        let mut rows = Vec::with_capacity(ids.len());
        for id in ids {
            let row = self.get(id).ok_or_else(|| Error::UnknownId {
                kind: "embedding",
                id: id.to_string(),
            })?;
            rows.push((id.to_string(), row.to_vec()));
        }
        if rows.is_empty() {
            return Err(Error::Precondition("no rows selected".into()));
        }
        Self::from_rows(rows)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("dim={} count={}\n", self.dim(), self.len());
        for (id, row) in self.ids.iter().zip(self.vectors.rows()) {
            out.push_str(id);
            for v in row {
                write!(out, " {v}").expect("writing to a String cannot fail");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let at = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| at(1, "missing `dim=<d> count=<n>` header".into()))?;
        let (dim, count) = parse_header(header).ok_or_else(|| {
            at(1, format!("expected `dim=<d> count=<n>`, got `{header}`"))
        })?;
        let mut ids = Vec::with_capacity(count);
        let mut flat = Vec::with_capacity(count * dim);
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let id = parts.next().expect("nonblank line has a first token");
            let mut n = 0;
            for tok in parts {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| at(idx + 1, format!("`{tok}` is not a number")))?;
                flat.push(v);
                n += 1;
            }
            if n != dim {
                return Err(at(idx + 1, format!("expected {dim} values, got {n}")));
            }
            ids.push(id.to_string());
        }
        if ids.len() != count {
            return Err(at(1, format!("header declares {count} rows, found {}", ids.len())));
        }
        let vectors = Array2::from_shape_vec((count, dim), flat)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(ids, vectors)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut dim = None;
    let mut count = None;
    for tok in line.split_whitespace() {
        let (k, v) = tok.split_once('=')?;
        match k {
            "dim" => dim = Some(v.parse().ok()?),
            "count" => count = Some(v.parse().ok()?),
            _ => return None,
        }
    }
    let dim = dim?;
    (dim > 0).then_some((dim, count?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn normalize_rows() {
        let m = EmbeddingMatrix::new(vec!["a".into(), "b".into()], array![[3.0, 4.0], [0.0, -2.0]]).unwrap();
        let n = m.normalized().unwrap();
        assert!(n.max_norm_deviation() < 1e-12);
        assert_eq!(n.row(0).to_vec(), vec![0.6, 0.8]);
    }

    #[test]
    fn zero_row_is_an_error() {
        let m = EmbeddingMatrix::new(vec!["a".into()], array![[0.0, 0.0]]).unwrap();
        assert!(matches!(m.normalized(), Err(Error::NonFinite(_))));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(EmbeddingMatrix::new(vec!["a".into()], array![[f64::NAN, 0.0]]).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let m = EmbeddingMatrix::new(
            vec!["x".into(), "y".into()],
            array![[0.1 + 0.2, -1e-300], [std::f64::consts::PI, 5.0]],
        )
        .unwrap();
        let back = EmbeddingMatrix::parse(&m.to_text(), Path::new("e")).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn header_count_checked() {
        let err = EmbeddingMatrix::parse("dim=2 count=2\na 1 2\n", Path::new("e")).unwrap_err();
        assert!(err.to_string().contains("declares 2"));
        let err = EmbeddingMatrix::parse("dim=2 count=1\na 1\n", Path::new("e")).unwrap_err();
        assert!(err.to_string().contains("e:2"));
    }
}
