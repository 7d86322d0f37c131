//! Truncated SVD of the TF-IDF matrix and explained-ratio rank selection.
//!
//! Small or nearly-full-rank problems are solved exactly by one-sided Jacobi on
//! the densified matrix. Otherwise a seeded randomized block subspace iteration
//! runs until every retained triple satisfies
//! `||A v - sigma u|| <= tol * sigma_1`.
//!
//! The explained ratio is `sum_{i<=r} sigma_i^2 / ||A||_F^2`, on the uncentered
//! matrix unless centering is requested. Centering is applied implicitly so
//! the sparse matrix is never densified on the iterative path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::linalg::{dot, jacobi_svd, norm, orthonormalize, DenseMatrix};
use crate::vectorize::CsrMatrix;
use crate::{NicheError, Result};

/// Post-condition bound on the relative residual of each retained triple.
pub const RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdOptions {
    pub centered: bool,
    pub oversample: usize,
    pub max_iter: usize,
    /// Target residual for the iterative path; must not exceed [`RESIDUAL_TOL`].
    pub tol: f64,
}

impl Default for SvdOptions {
    fn default() -> Self {
        SvdOptions {
            centered: false,
            oversample: 10,
            max_iter: 200,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedMatrix {
    /// Document scores `U_r Sigma_r`, N x r.
    #[serde(skip)]
    pub embedding: DenseMatrix,
    pub singular_values: Vec<f64>,
    /// Right singular vectors, r x C.
    #[serde(skip)]
    pub components: DenseMatrix,
    /// Cumulative explained ratio at ranks 1..=r.
    pub explained_ratio: Vec<f64>,
    /// Denominator of the explained ratio.
    pub total_sq: f64,
    pub max_residual: f64,
}

impl ReducedMatrix {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }
}

struct Operator<'a> {
    a: &'a CsrMatrix,
    mean: Option<Vec<f64>>,
}

impl Operator<'_> {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.a.n_rows()];
        self.a.mul_vec(x, &mut y);
        if let Some(mu) = &self.mean {
            let shift = dot(mu, x);
            y.iter_mut().for_each(|v| *v -= shift);
        }
        y
    }

    fn apply_t(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.a.n_cols()];
        self.a.mul_t_vec(x, &mut y);
        if let Some(mu) = &self.mean {
            let s: f64 = x.iter().sum();
            y.iter_mut().zip(mu).for_each(|(v, m)| *v -= s * m);
        }
        y
    }

    fn total_sq(&self) -> f64 {
        let raw = self.a.frobenius_sq();
        match &self.mean {
            None => raw,
            Some(mu) => (raw - self.a.n_rows() as f64 * dot(mu, mu)).max(0.0),
        }
    }

    fn dense_rows(&self) -> Vec<Vec<f64>> {
        let mut rows = self.a.to_dense();
        if let Some(mu) = &self.mean {
            for r in &mut rows {
                r.iter_mut().zip(mu).for_each(|(v, m)| *v -= m);
            }
        }
        rows
    }
}

struct Triples {
    u: Vec<Vec<f64>>,
    sigma: Vec<f64>,
    v: Vec<Vec<f64>>,
}

fn dense_svd(op: &Operator<'_>) -> Triples {
    let rows = op.dense_rows();
    let (n, c) = (op.a.n_rows(), op.a.n_cols());
    if n >= c {
        let cols: Vec<Vec<f64>> = (0..c)
            .map(|j| rows.iter().map(|r| r[j]).collect())
            .collect();
        let s = jacobi_svd(cols);
        Triples {
            u: s.u,
            sigma: s.sigma,
            v: s.v,
        }
    } else {
        // A^T = U' S V'^T, so A = V' S U'^T
        let s = jacobi_svd(rows);
        Triples {
            u: s.v,
            sigma: s.sigma,
            v: s.u,
        }
    }
}

fn rayleigh_ritz(op: &Operator<'_>, q: &[Vec<f64>]) -> Triples {
    // B^T = A^T Q is C x l; its SVD V S W^T gives A ~ (Q W) S V^T
    let bt: Vec<Vec<f64>> = q.iter().map(|qi| op.apply_t(qi)).collect();
    let s = jacobi_svd(bt);
    let u =
        s.v.iter()
            .map(|w| {
                let mut ui = vec![0.0; op.a.n_rows()];
                for (qk, &wk) in q.iter().zip(w) {
                    ui.iter_mut().zip(qk).for_each(|(x, y)| *x += wk * y);
                }
                ui
            })
            .collect();
    Triples {
        u,
        sigma: s.sigma,
        v: s.u,
    }
}

fn max_residual(op: &Operator<'_>, t: &Triples, rank: usize) -> f64 {
    let scale = t.sigma.first().copied().unwrap_or(0.0);
    if scale == 0.0 {
        return 0.0;
    }
    (0..rank)
        .map(|i| {
            let av = op.apply(&t.v[i]);
            let r: Vec<f64> = av
                .iter()
                .zip(&t.u[i])
                .map(|(a, u)| a - t.sigma[i] * u)
                .collect();
            norm(&r) / scale
        })
        .fold(0.0, f64::max)
}

fn randomized_svd(
    op: &Operator<'_>,
    rank: usize,
    width: usize,
    seed: u64,
    opts: &SvdOptions,
) -> Result<Triples> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = op.a.n_cols();
    let mut q: Vec<Vec<f64>> = (0..width)
        .map(|_| {
            let omega: Vec<f64> = (0..c).map(|_| StandardNormal.sample(&mut rng)).collect();
            op.apply(&omega)
        })
        .collect();
    orthonormalize(&mut q);
    let mut last = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let mut z: Vec<Vec<f64>> = q.iter().map(|qi| op.apply_t(qi)).collect();
        orthonormalize(&mut z);
        q = z.iter().map(|zi| op.apply(zi)).collect();
        orthonormalize(&mut q);
        let t = rayleigh_ritz(op, &q);
        last = max_residual(op, &t, rank);
        if last <= opts.tol {
            return Ok(t);
        }
    }
    if last <= RESIDUAL_TOL {
        let t = rayleigh_ritz(op, &q);
        return Ok(t);
    }
    Err(NicheError::Numeric(format!(
        "subspace iteration did not converge: residual {last:.3e} after {} iterations",
        opts.max_iter
    )))
}

fn decompose(a: &CsrMatrix, rank: usize, seed: u64, opts: &SvdOptions) -> Result<(Triples, f64)> {
    let op = Operator {
        a,
        mean: opts.centered.then(|| a.col_means()),
    };
    let full = a.n_rows().min(a.n_cols());
    let width = (rank + opts.oversample).min(full);
    let mut t = if 2 * width >= full {
        dense_svd(&op)
    } else {
        randomized_svd(&op, rank, width, seed, opts)?
    };
    t.u.truncate(rank);
    t.sigma.truncate(rank);
    t.v.truncate(rank);
    // sign convention: the largest-magnitude loading of each component is nonnegative
    for (u, v) in t.u.iter_mut().zip(t.v.iter_mut()) {
        let pivot = v.iter().copied().fold(
            0.0f64,
            |best, x| if x.abs() > best.abs() { x } else { best },
        );
        if pivot < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let residual = max_residual(&op, &t, rank);
    if residual > RESIDUAL_TOL {
        return Err(NicheError::Numeric(format!(
            "singular triple residual {residual:.3e} exceeds {RESIDUAL_TOL:e}"
        )));
    }
    Ok((t, residual))
}

fn cumulative(sigma: &[f64], total_sq: f64) -> Vec<f64> {
    let mut acc = 0.0;
    sigma
        .iter()
        .map(|s| {
            acc += s * s;
            if total_sq > 0.0 {
                acc / total_sq
            } else {
                1.0
            }
        })
        .collect()
}

/// Rank-`rank` truncated SVD; requires `1 <= rank <= min(N, C) - 1`.
pub fn truncated_svd(matrix: &CsrMatrix, rank: usize, seed: u64) -> Result<ReducedMatrix> {
    truncated_svd_with(matrix, rank, seed, &SvdOptions::default())
}

pub fn truncated_svd_with(
    matrix: &CsrMatrix,
    rank: usize,
    seed: u64,
    opts: &SvdOptions,
) -> Result<ReducedMatrix> {
    let full = matrix.n_rows().min(matrix.n_cols());
    if rank == 0 || rank + 1 > full {
        return Err(NicheError::Parameter(format!(
            "rank must lie in [1, {}], got {rank}",
            full.saturating_sub(1)
        )));
    }
    let total_sq = Operator {
        a: matrix,
        mean: opts.centered.then(|| matrix.col_means()),
    }
    .total_sq();
    let (t, max_residual) = decompose(matrix, rank, seed, opts)?;
    let mut embedding = DenseMatrix::zeros(matrix.n_rows(), rank);
    for (k, (u, s)) in t.u.iter().zip(&t.sigma).enumerate() {
        for (i, x) in u.iter().enumerate() {
            embedding[(i, k)] = x * s;
        }
    }
    Ok(ReducedMatrix {
        embedding,
        explained_ratio: cumulative(&t.sigma, total_sq),
        singular_values: t.sigma,
        components: DenseMatrix::from_rows(&t.v),
        total_sq,
        max_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub rank: usize,
    pub sigma: f64,
    pub cumulative_ratio: f64,
}

/// Explained-ratio curve for ranks `1..=max_rank`; `max_rank` may reach `min(N, C)`.
pub fn explained_ratio_curve(
    matrix: &CsrMatrix,
    max_rank: usize,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    explained_ratio_curve_with(matrix, max_rank, seed, &SvdOptions::default())
}

pub fn explained_ratio_curve_with(
    matrix: &CsrMatrix,
    max_rank: usize,
    seed: u64,
    opts: &SvdOptions,
) -> Result<Vec<CurvePoint>> {
    let full = matrix.n_rows().min(matrix.n_cols());
    if max_rank == 0 || max_rank > full {
        return Err(NicheError::Parameter(format!(
            "max_rank must lie in [1, {full}], got {max_rank}"
        )));
    }
    let op = Operator {
        a: matrix,
        mean: opts.centered.then(|| matrix.col_means()),
    };
    let (t, _) = decompose(matrix, max_rank, seed, opts)?;
    let ratios = cumulative(&t.sigma, op.total_sq());
    Ok(t.sigma
        .iter()
        .zip(ratios)
        .enumerate()
        .map(|(i, (&sigma, cumulative_ratio))| CurvePoint {
            rank: i + 1,
            sigma,
            cumulative_ratio,
        })
        .collect())
}

/// Smallest rank whose cumulative ratio reaches `target`.
pub fn select_rank_at_ratio(curve: &[CurvePoint], target: f64) -> Result<usize> {
    if curve.is_empty() {
        return Err(NicheError::Parameter("empty explained-ratio curve".into()));
    }
    curve
        .iter()
        .find(|p| p.cumulative_ratio >= target)
        .map(|p| p.rank)
        .ok_or_else(|| {
            NicheError::Numeric(format!(
                "explained ratio {target} not reached by rank {} (ratio {:.4}); raise svd-max-rank",
                curve.len(),
                curve[curve.len() - 1].cumulative_ratio
            ))
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag321() -> CsrMatrix {
        CsrMatrix::from_dense(&[
            vec![3.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
    }

    #[test]
    fn diagonal_singular_values() {
        let r = truncated_svd(&diag321(), 2, 1).unwrap();
        assert!((r.singular_values[0] - 3.0).abs() < 1e-12);
        assert!((r.singular_values[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_curve() {
        let c = explained_ratio_curve(&diag321(), 3, 1).unwrap();
        assert!((c[0].cumulative_ratio - 9.0 / 14.0).abs() < 1e-12);
        assert!((c[2].cumulative_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_one_matrix() {
        let u = [1.0, 2.0, -1.0, 0.5];
        let v = [0.3, 0.0, 2.0];
        let dense: Vec<Vec<f64>> = u
            .iter()
            .map(|a| v.iter().map(|b| a * b).collect())
            .collect();
        let r = truncated_svd(&CsrMatrix::from_dense(&dense), 1, 3).unwrap();
        assert!((r.explained_ratio[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rank_out_of_range() {
        assert!(truncated_svd(&diag321(), 3, 0).is_err());
        assert!(truncated_svd(&diag321(), 0, 0).is_err());
    }

    #[test]
    fn select_rank() {
        let curve = [
            CurvePoint {
                rank: 1,
                sigma: 2.0,
                cumulative_ratio: 0.9,
            },
            CurvePoint {
                rank: 2,
                sigma: 1.0,
                cumulative_ratio: 0.96,
            },
        ];
        assert_eq!(select_rank_at_ratio(&curve, 0.95).unwrap(), 2);
        assert_eq!(select_rank_at_ratio(&curve, 0.0).unwrap(), 1);
        assert!(select_rank_at_ratio(&curve, 0.99).is_err());
    }

    #[test]
    fn centered_total_matches_dense() {
        let dense = vec![
            vec![1.0, 0.0, 2.0],
            vec![0.0, 3.0, 1.0],
            vec![4.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let m = CsrMatrix::from_dense(&dense);
        let opts = SvdOptions {
            centered: true,
            ..Default::default()
        };
        let c = explained_ratio_curve_with(&m, 3, 0, &opts).unwrap();
        assert!((c[2].cumulative_ratio - 1.0).abs() < 1e-10);
    }
}
