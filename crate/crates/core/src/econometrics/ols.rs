//! Householder-QR least squares with classical, HC1 and clustered errors.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::linalg::dot;
use crate::{NicheError, Result};

/// Relative size below which a pivot marks its column as collinear.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SeMode {
    #[default]
    Classical,
    Hc1,
    Cluster,
}

impl SeMode {
    pub fn parse(s: &str) -> Option<SeMode> {
        match s {
            "classical" => Some(SeMode::Classical),
            "hc1" => Some(SeMode::Hc1),
            "cluster" => Some(SeMode::Cluster),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SeMode::Classical => "classical",
            SeMode::Hc1 => "hc1",
            SeMode::Cluster => "cluster",
        }
    }
}

/// Named design columns of equal length.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Design {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Design {
    /// Design holding only an intercept column.
    pub fn with_intercept(n: usize) -> Self {
        Design {
            names: vec!["Intercept".into()],
            columns: vec![vec![1.0; n]],
        }
    }

    pub fn push(&mut self, name: impl Into<String>, column: Vec<f64>) {
        debug_assert!(self.columns.first().is_none_or(|c| c.len() == column.len()));
        self.names.push(name.into());
        self.columns.push(column);
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    pub fn predict(&self, beta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows()];
        for (col, b) in self.columns.iter().zip(beta) {
            out.iter_mut().zip(col).for_each(|(o, x)| *o += b * x);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Two-sided t-test p-values; `None` when the standard error is zero.
    pub p_values: Vec<Option<f64>>,
    pub n: usize,
    /// Coefficients plus the error variance.
    pub k_params: usize,
    pub rss: f64,
    pub log_likelihood: f64,
    pub aic: f64,
    pub bic: f64,
    pub r_squared: f64,
    pub se_mode: SeMode,
}

impl FitResult {
    pub fn position(&self, term: &str) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }

    pub fn coef(&self, term: &str) -> Option<f64> {
        self.position(term).map(|i| self.coefficients[i])
    }

    pub fn se(&self, term: &str) -> Option<f64> {
        self.position(term).map(|i| self.std_errors[i])
    }

    pub fn df_resid(&self) -> usize {
        self.n - self.terms.len()
    }
}

/// `ln L = -(n/2)(ln 2 pi + ln(rss/n) + 1)`, with `rss/n` floored at 1e-300.
pub fn gaussian_loglik(rss: f64, n: usize) -> f64 {
    let nf = n as f64;
    let sigma2 = (rss / nf).max(1e-300);
    -0.5 * nf * ((2.0 * std::f64::consts::PI).ln() + sigma2.ln() + 1.0)
}

pub fn aic_from(log_likelihood: f64, k: usize) -> f64 {
    -2.0 * log_likelihood + 2.0 * k as f64
}

pub fn bic_from(log_likelihood: f64, k: usize, n: usize) -> f64 {
    -2.0 * log_likelihood + (n as f64).ln() * k as f64
}

pub fn aic(fit: &FitResult) -> f64 {
    aic_from(fit.log_likelihood, fit.k_params)
}

pub fn bic(fit: &FitResult) -> f64 {
    bic_from(fit.log_likelihood, fit.k_params, fit.n)
}

struct Qr {
    /// Upper triangle, `r[i][j]` for `j >= i`.
    r: Vec<Vec<f64>>,
    qty: Vec<f64>,
}

fn householder(design: &Design, y: &[f64]) -> Result<Qr> {
    let n = design.n_rows();
    let p = design.n_cols();
    let mut a = design.columns.clone();
    let mut qty = y.to_vec();
    let mut collinear = Vec::new();
    // `row` trails `j` when a collinear column is skipped
    let mut row = 0;
    for j in 0..p {
        let original = dot(&design.columns[j], &design.columns[j]).sqrt();
        let alpha = dot(&a[j][row..], &a[j][row..]).sqrt();
        if alpha <= RANK_TOL * original || original == 0.0 {
            collinear.push(design.names[j].clone());
            continue;
        }
        let sign = if a[j][row] >= 0.0 { 1.0 } else { -1.0 };
        let mut v = a[j][row..].to_vec();
        v[0] += sign * alpha;
        let vv = dot(&v, &v);
        let reflect = |col: &mut [f64]| {
            let s = 2.0 * dot(&v, &col[row..]) / vv;
            col[row..]
                .iter_mut()
                .zip(&v)
                .for_each(|(c, vi)| *c -= s * vi);
        };
        for col in a.iter_mut().skip(j) {
            reflect(col);
        }
        reflect(&mut qty);
        row += 1;
    }
    if !collinear.is_empty() {
        return Err(NicheError::RankDeficient { columns: collinear });
    }
    let r = (0..p)
        .map(|i| (0..p).map(|j| if j >= i { a[j][i] } else { 0.0 }).collect())
        .collect();
    debug_assert!(qty.len() == n);
    Ok(Qr { r, qty })
}

fn upper_inverse(r: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = r.len();
    let mut inv = vec![vec![0.0; p]; p];
    for c in 0..p {
        for i in (0..=c).rev() {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in (i + 1)..=c {
                s -= r[i][k] * inv[k][c];
            }
            inv[i][c] = s / r[i][i];
        }
    }
    inv
}

/// OLS with classical standard errors.
pub fn ols_fit(design: &Design, y: &[f64]) -> Result<FitResult> {
    ols_fit_with(design, y, SeMode::Classical, None)
}

/// OLS with the chosen error mode; `clusters` gives a group id per row and is
/// required for [`SeMode::Cluster`].
pub fn ols_fit_with(
    design: &Design,
    y: &[f64],
    se_mode: SeMode,
    clusters: Option<&[usize]>,
) -> Result<FitResult> {
    let n = design.n_rows();
    let p = design.n_cols();
    if y.len() != n {
        return Err(NicheError::Parameter(format!(
            "outcome has {} rows, design {n}",
            y.len()
        )));
    }
    if n <= p {
        return Err(NicheError::Parameter(format!(
            "need more observations ({n}) than columns ({p})"
        )));
    }
    if !y.iter().all(|v| v.is_finite()) || !design.columns.iter().flatten().all(|v| v.is_finite()) {
        return Err(NicheError::Data(
            "non-finite value in regression data".into(),
        ));
    }
    let qr = householder(design, y)?;
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = ((i + 1)..p).map(|k| qr.r[i][k] * beta[k]).sum();
        beta[i] = (qr.qty[i] - s) / qr.r[i][i];
    }
    let fitted = design.predict(&beta);
    let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let rss = dot(&resid, &resid);
    let ybar = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum();
    let rinv = upper_inverse(&qr.r);
    let df = (n - p) as f64;
    let variances: Vec<f64> = match se_mode {
        SeMode::Classical => {
            let s2 = rss / df;
            rinv.iter().map(|row| s2 * dot(row, row)).collect()
        }
        SeMode::Hc1 | SeMode::Cluster => {
            let groups: Vec<usize> = match (se_mode, clusters) {
                (SeMode::Hc1, _) => (0..n).collect(),
                (_, Some(g)) if g.len() == n => g.to_vec(),
                _ => {
                    return Err(NicheError::Parameter(
                        "clustered errors need one group id per row".into(),
                    ));
                }
            };
            let n_groups = groups.iter().max().map_or(0, |m| m + 1);
            // scores s_g = sum_{i in g} x_i e_i
            let mut scores = vec![vec![0.0; p]; n_groups];
            for (i, &g) in groups.iter().enumerate() {
                for (j, col) in design.columns.iter().enumerate() {
                    scores[g][j] += col[i] * resid[i];
                }
            }
            let used = {
                let mut seen = vec![false; n_groups];
                groups.iter().for_each(|&g| seen[g] = true);
                seen.iter().filter(|&&s| s).count()
            };
            let factor = match se_mode {
                SeMode::Hc1 => n as f64 / df,
                _ => {
                    if used < 2 {
                        return Err(NicheError::Parameter(
                            "clustered errors need at least two groups".into(),
                        ));
                    }
                    let g = used as f64;
                    g / (g - 1.0) * (n as f64 - 1.0) / df
                }
            };
            // bread = R^-1 R^-T; var_jj = factor * sum_g (bread_j . s_g)^2
            let bread: Vec<Vec<f64>> = (0..p)
                .map(|a| (0..p).map(|b| dot(&rinv[a], &rinv[b])).collect())
                .collect();
            (0..p)
                .map(|j| {
                    factor
                        * scores
                            .iter()
                            .map(|s| dot(&bread[j], s).powi(2))
                            .sum::<f64>()
                })
                .collect()
        }
    };
    let std_errors: Vec<f64> = variances.iter().map(|v| v.max(0.0).sqrt()).collect();
    let t_dist = StudentsT::new(0.0, 1.0, df).map_err(|e| NicheError::Numeric(e.to_string()))?;
    let p_values = beta
        .iter()
        .zip(&std_errors)
        .map(|(b, se)| (*se > 0.0).then(|| 2.0 * (1.0 - t_dist.cdf((b / se).abs()))))
        .collect();
    let log_likelihood = gaussian_loglik(rss, n);
    let k_params = p + 1;
    let r_squared = if tss > 0.0 {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(FitResult {
        terms: design.names.clone(),
        coefficients: beta,
        std_errors,
        p_values,
        n,
        k_params,
        rss,
        log_likelihood,
        aic: aic_from(log_likelihood, k_params),
        bic: bic_from(log_likelihood, k_params, n),
        r_squared,
        se_mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simple(x: &[f64]) -> Design {
        let mut d = Design::with_intercept(x.len());
        d.push("x", x.to_vec());
        d
    }

    #[test]
    fn exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let f = ols_fit(&simple(&x), &y).unwrap();
        assert!(f.coefficients[0].abs() < 1e-12);
        assert!((f.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(f.rss < 1e-20);
    }

    #[test]
    fn constant_outcome() {
        let f = ols_fit(&simple(&[1.0, 5.0, 2.0, 7.0]), &[3.0; 4]).unwrap();
        assert!((f.coefficients[0] - 3.0).abs() < 1e-12);
        assert!(f.coefficients[1].abs() < 1e-12);
    }

    #[test]
    fn intercept_only_has_zero_r2() {
        let f = ols_fit(&Design::with_intercept(3), &[1.0, 2.0, 4.0]).unwrap();
        assert!(f.r_squared.abs() < 1e-12);
    }

    #[test]
    fn collinear_copy_is_named() {
        let y = [1.0, 2.0, 4.0, 3.0, 5.0, 4.5];
        let mut d = simple(&[0.5, 1.0, 1.5, 3.0, 2.0, 0.1]);
        d.push("z", vec![1.0, 0.0, 2.0, 1.0, 0.0, 3.0]);
        d.push("x_twice", vec![1.0, 2.0, 3.0, 6.0, 4.0, 0.2]);
        match ols_fit(&d, &y) {
            Err(NicheError::RankDeficient { columns }) => {
                assert_eq!(columns, vec!["x_twice".to_string()])
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn too_few_rows() {
        assert!(ols_fit(&simple(&[1.0, 2.0]), &[1.0, 2.0]).is_err());
    }

    #[test]
    fn loglik_values() {
        let v = gaussian_loglik(1.0, 1);
        assert!((v + 1.418_938_533_204_672_7).abs() < 1e-12);
        assert!(gaussian_loglik(2.0, 10) < gaussian_loglik(1.0, 10));
        assert!(gaussian_loglik(0.0, 5).is_finite());
        // scaling y by c shifts lnL by -n ln c
        let (n, c) = (7usize, 3.0f64);
        let shift = gaussian_loglik(2.5 * c * c, n) - gaussian_loglik(2.5, n);
        assert!((shift + n as f64 * c.ln()).abs() < 1e-10);
    }

    #[test]
    fn criteria_arithmetic() {
        assert_eq!(aic_from(-10.0, 3), 26.0);
        let n = 100;
        let gap = bic_from(-10.0, 3, n) - aic_from(-10.0, 3);
        assert!((gap - ((n as f64).ln() - 2.0) * 3.0).abs() < 1e-12);
        // past e^2 observations the per-parameter BIC penalty is larger
        assert!((8f64).ln() > 2.0);
    }

    #[test]
    fn hc1_and_cluster_run() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [0.1, 1.3, 1.9, 3.2, 3.8, 5.4];
        let d = simple(&x);
        let h = ols_fit_with(&d, &y, SeMode::Hc1, None).unwrap();
        assert!(h.std_errors.iter().all(|s| *s > 0.0));
        // singleton clusters reduce to HC1 up to the small-sample factor
        let ids: Vec<usize> = (0..6).collect();
        let c = ols_fit_with(&d, &y, SeMode::Cluster, Some(&ids)).unwrap();
        let ratio = (6.0f64 / 5.0 * 5.0 / 4.0) / (6.0 / 4.0);
        assert!((c.std_errors[1].powi(2) / h.std_errors[1].powi(2) - ratio).abs() < 1e-12);
        assert!(ols_fit_with(&d, &y, SeMode::Cluster, None).is_err());
    }
}
