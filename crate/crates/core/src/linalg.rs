//! Small dense kernels shared by the reduction and regression code.

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        DenseMatrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let rows = columns.first().map_or(0, Vec::len);
        let mut m = DenseMatrix::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            for (i, &v) in c.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter_rows().map(<[f64]>::to_vec).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self * other`
    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Modified Gram-Schmidt with one reorthogonalisation pass. Columns that
/// collapse numerically are zeroed.
pub fn orthonormalize(columns: &mut [Vec<f64>]) {
    for j in 0..columns.len() {
        let original = norm(&columns[j]);
        for _ in 0..2 {
            for i in 0..j {
                let (done, rest) = columns.split_at_mut(j);
                let proj = dot(&done[i], &rest[0]);
                for (x, q) in rest[0].iter_mut().zip(&done[i]) {
                    *x -= proj * q;
                }
            }
        }
        let n = norm(&columns[j]);
        if n <= 1e-12 * original.max(f64::MIN_POSITIVE) || n == 0.0 {
            columns[j].iter_mut().for_each(|x| *x = 0.0);
        } else {
            columns[j].iter_mut().for_each(|x| *x /= n);
        }
    }
}

/// Thin SVD by one-sided (Hestenes) Jacobi rotations.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// Left vectors, one per singular value, each of length `m`.
    pub u: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    /// Right vectors, each of length `n`.
    pub v: Vec<Vec<f64>>,
}

/// SVD of the `m x n` matrix given by its `n` columns (each of length `m`),
/// requiring `m >= n`. Singular values come out sorted nonincreasing.
pub fn jacobi_svd(columns: Vec<Vec<f64>>) -> ThinSvd {
    let n = columns.len();
    let m = columns.first().map_or(0, Vec::len);
    assert!(m >= n, "jacobi_svd expects a tall matrix ({m} x {n})");
    let mut a = columns;
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let mut norms: Vec<f64> = a.iter().map(|c| dot(c, c)).collect();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(&a[p], &a[q]);
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate(&mut a, p, q, cs, sn);
                rotate(&mut v, p, q, cs, sn);
                norms[p] = dot(&a[p], &a[p]);
                norms[q] = dot(&a[q], &a[q]);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let sig: Vec<f64> = norms.iter().map(|x| x.sqrt()).collect();
    order.sort_by(|&i, &j| sig[j].total_cmp(&sig[i]).then(i.cmp(&j)));
    let mut out = ThinSvd {
        u: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
    };
    let floor = sig.iter().copied().fold(0.0, f64::max) * 1e-12;
    for j in order {
        let s = sig[j];
        let u = if s > floor {
            a[j].iter().map(|x| x / s).collect()
        } else {
            // numerically zero: a[j] / s is noise, so complete the basis instead
            complete_basis(&out.u, &a[j], m)
        };
        out.u.push(u);
        out.sigma.push(s);
        out.v.push(v[j].clone());
    }
    out
}

/// A unit vector orthogonal to every vector in `basis`, seeded by `hint` and
/// then by coordinate axes.
fn complete_basis(basis: &[Vec<f64>], hint: &[f64], m: usize) -> Vec<f64> {
    let axes = (0..m).map(|k| {
        let mut e = vec![0.0; m];
        e[k] = 1.0;
        e
    });
    for cand in std::iter::once(hint.to_vec()).chain(axes) {
        let start = norm(&cand);
        if start == 0.0 {
            continue;
        }
        let mut x = cand;
        for _ in 0..2 {
            for b in basis {
                let p = dot(b, &x);
                x.iter_mut().zip(b).for_each(|(xi, bi)| *xi -= p * bi);
            }
        }
        let n = norm(&x);
        if n > 1e-8 * start {
            x.iter_mut().for_each(|xi| *xi /= n);
            return x;
        }
    }
    vec![0.0; m]
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, cs: f64, sn: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = cs * xp - sn * xq;
        *y = sn * xp + cs * xq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_diagonal() {
        let s = jacobi_svd(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 3.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ]);
        assert_eq!(s.sigma, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn jacobi_reconstructs() {
        let cols = vec![
            vec![1.0, 2.0, 3.0, 4.0],
            vec![2.0, -1.0, 0.5, 0.0],
            vec![0.0, 1.0, 1.0, 1.0],
        ];
        let s = jacobi_svd(cols.clone());
        for (j, col) in cols.iter().enumerate() {
            for (i, &x) in col.iter().enumerate() {
                let rec: f64 = (0..3).map(|k| s.u[k][i] * s.sigma[k] * s.v[k][j]).sum();
                assert!((rec - x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn orthonormalize_zeroes_dependent_columns() {
        let mut cols = vec![
            vec![1.0, 1.0, 0.0],
            vec![2.0, 2.0, 0.0],
            vec![0.0, 0.0, 5.0],
        ];
        orthonormalize(&mut cols);
        assert!(norm(&cols[1]) == 0.0);
        assert!((norm(&cols[0]) - 1.0).abs() < 1e-14);
        assert!(dot(&cols[0], &cols[2]).abs() < 1e-14);
    }

    #[test]
    fn jacobi_left_vectors_stay_orthonormal_when_rank_deficient() {
        // third column is the sum of the first two
        let cols = vec![
            vec![1.0, 0.0, 2.0, 1.0],
            vec![0.0, 1.0, 1.0, 3.0],
            vec![1.0, 1.0, 3.0, 4.0],
        ];
        let s = jacobi_svd(cols);
        assert!(s.sigma[2] < 1e-12 * s.sigma[0]);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&s.u[i], &s.u[j]) - want).abs() < 1e-10, "u{i}.u{j}");
            }
        }
    }
}
