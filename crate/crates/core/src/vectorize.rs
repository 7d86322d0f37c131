//! Sparse TF-IDF weighting: `tf = ln(1 + freq)`, `idf = ln(N / df)`.

use std::collections::BTreeMap;
use std::io::Write;

use crate::textprep::{TokenizedDoc, Vocabulary};
use crate::{NicheError, Result};

/// Compressed-row sparse matrix with nonnegative entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(col, value)` lists; zeros are dropped and columns sorted.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        let n_rows = rows.len();
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                assert!(c < n_cols, "column {c} out of range");
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense(dense: &[Vec<f64>]) -> Self {
        let n_cols = dense.first().map_or(0, Vec::len);
        CsrMatrix::from_rows(
            n_cols,
            dense
                .iter()
                .map(|r| r.iter().copied().enumerate().collect())
                .collect(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows)
            .map(|i| {
                let mut r = vec![0.0; self.n_cols];
                for (c, v) in self.row(i) {
                    r[c] = v;
                }
                r
            })
            .collect()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n_rows) {
            *yi = self.row(i).map(|(c, v)| v * x[c]).sum();
        }
    }

    /// `y = A^T x`
    pub fn mul_t_vec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (i, &xi) in x.iter().enumerate().take(self.n_rows) {
            for (c, v) in self.row(i) {
                y[c] += v * xi;
            }
        }
    }

    /// Column means.
    pub fn col_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_cols];
        for (&c, &v) in self.indices.iter().zip(&self.values) {
            m[c] += v;
        }
        let n = self.n_rows.max(1) as f64;
        m.iter_mut().for_each(|x| *x /= n);
        m
    }

    /// Same matrix with columns reordered so new column `j` is old `perm[j]`.
    pub fn permute_cols(&self, perm: &[usize]) -> CsrMatrix {
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        CsrMatrix::from_rows(
            self.n_cols,
            (0..self.n_rows)
                .map(|i| self.row(i).map(|(c, v)| (inverse[c], v)).collect())
                .collect(),
        )
    }

    /// Coordinate dump: a `N C NNZ` header line, then one `row col value` line per entry.
    pub fn write_coo<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for i in 0..self.n_rows {
            for (c, v) in self.row(i) {
                writeln!(out, "{i} {c} {v}")?;
            }
        }
        Ok(())
    }
}

pub fn compute_tf(freq: usize) -> f64 {
    (1.0 + freq as f64).ln()
}

pub fn compute_idf(n_docs: usize, df: usize) -> Result<f64> {
    if df == 0 || df > n_docs {
        return Err(NicheError::Domain(format!(
            "idf needs 1 <= df <= N, got df={df}, N={n_docs}"
        )));
    }
    Ok((n_docs as f64 / df as f64).ln())
}

/// Switches for weighting variants; both default off.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TfIdfOptions {
    /// `ln((1 + N) / (1 + df)) + 1` instead of `ln(N / df)`.
    pub smooth_idf: bool,
    /// Scale each row to unit Euclidean norm.
    pub l2_normalize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfMatrix {
    pub doc_ids: Vec<String>,
    pub terms: Vec<String>,
    pub matrix: CsrMatrix,
}

pub fn tfidf_matrix(docs: &[TokenizedDoc], vocab: &Vocabulary) -> Result<TfIdfMatrix> {
    tfidf_matrix_with(docs, vocab, TfIdfOptions::default())
}

pub fn tfidf_matrix_with(
    docs: &[TokenizedDoc],
    vocab: &Vocabulary,
    opts: TfIdfOptions,
) -> Result<TfIdfMatrix> {
    let index = vocab.index();
    let idf: Vec<f64> = vocab
        .iter()
        .map(|(_, df)| {
            if opts.smooth_idf {
                Ok(((1.0 + vocab.n_docs() as f64) / (1.0 + df as f64)).ln() + 1.0)
            } else {
                compute_idf(vocab.n_docs(), df)
            }
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<(usize, f64)>> = docs
        .iter()
        .map(|d| {
            let mut freq: BTreeMap<usize, usize> = BTreeMap::new();
            for t in &d.tokens {
                if let Some(&c) = index.get(t.as_str()) {
                    *freq.entry(c).or_insert(0) += 1;
                }
            }
            if freq.is_empty() {
                log::warn!("document {} has no in-vocabulary terms", d.app_id);
            }
            let mut row: Vec<(usize, f64)> = freq
                .into_iter()
                .map(|(c, f)| (c, compute_tf(f) * idf[c]))
                .collect();
            if opts.l2_normalize {
                let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    row.iter_mut().for_each(|(_, v)| *v /= norm);
                }
            }
            row
        })
        .collect();
    Ok(TfIdfMatrix {
        doc_ids: docs.iter().map(|d| d.app_id.clone()).collect(),
        terms: vocab.terms().map(str::to_string).collect(),
        matrix: CsrMatrix::from_rows(vocab.len(), rows),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::build_vocabulary;

    fn doc(id: &str, toks: &[&str]) -> TokenizedDoc {
        TokenizedDoc {
            app_id: id.into(),
            tokens: toks.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn tf_values() {
        assert_eq!(compute_tf(0), 0.0);
        assert!((compute_tf(1) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((compute_tf(3) - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn idf_values() {
        assert_eq!(compute_idf(100, 100).unwrap(), 0.0);
        assert!((compute_idf(4, 2).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((compute_idf(1000, 1).unwrap() - 6.907_755_278_982_137).abs() < 1e-12);
        assert!(compute_idf(10, 0).is_err());
    }

    #[test]
    fn hand_cell() {
        let docs = [
            doc("0", &["t", "u"]),
            doc("1", &["t", "v"]),
            doc("2", &["u"]),
            doc("3", &["v"]),
        ];
        let vocab = build_vocabulary(&docs);
        let m = tfidf_matrix(&docs, &vocab).unwrap();
        let t = m.terms.iter().position(|s| s == "t").unwrap();
        assert!((m.matrix.get(0, t) - 0.480_453_013_918_201_4).abs() < 1e-12);
    }

    #[test]
    fn ubiquitous_term_column_is_zero() {
        let docs = [doc("0", &["a", "b"]), doc("1", &["a"])];
        let vocab = build_vocabulary(&docs);
        let m = tfidf_matrix(&docs, &vocab).unwrap();
        assert_eq!(m.matrix.get(0, 0), 0.0);
        assert_eq!(m.matrix.get(1, 0), 0.0);
        assert_eq!(m.matrix.nnz(), 1);
    }

    #[test]
    fn l2_rows_are_unit() {
        let docs = [doc("0", &["a", "b", "b"]), doc("1", &["c"])];
        let vocab = build_vocabulary(&docs);
        let opts = TfIdfOptions {
            l2_normalize: true,
            ..Default::default()
        };
        let m = tfidf_matrix_with(&docs, &vocab, opts).unwrap();
        let n0: f64 = m.matrix.row(0).map(|(_, v)| v * v).sum();
        assert!((n0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coo_dump_header() {
        let m = CsrMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 2.5]]);
        let mut buf = Vec::new();
        m.write_coo(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "2 2 2\n0 0 1\n1 1 2.5\n");
    }
}
