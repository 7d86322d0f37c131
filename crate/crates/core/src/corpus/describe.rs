use serde::Serialize;

use super::{Category, DerivedRow, Variable};
use crate::{NicheError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    /// FULL, then the market-leader / market-follower split.
    MarketStatus,
    /// FULL, then one group per category.
    Category,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableSummary {
    pub variable: Variable,
    pub mean: Option<f64>,
    /// Sample standard deviation (n - 1 denominator).
    pub std: Option<f64>,
    pub min: Option<f64>,
    pub median: Option<f64>,
    pub max: Option<f64>,
    /// Share of rows with the flag set, in percent; dummies only.
    pub pct_true: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub group: String,
    pub count: usize,
    pub variables: Vec<VariableSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryTable {
    pub groups: Vec<GroupSummary>,
}

impl SummaryTable {
    pub fn group(&self, name: &str) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.group == name)
    }

    /// Long-format CSV: group, count, variable, mean, std, min, median, max, pct_true.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,count,variable,mean,std,min,median,max,pct_true\n");
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for g in &self.groups {
            for v in &g.variables {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    g.group,
                    g.count,
                    v.variable,
                    f(v.mean),
                    f(v.std),
                    f(v.min),
                    f(v.median),
                    f(v.max),
                    f(v.pct_true)
                ));
            }
        }
        out
    }
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn summarize_variable(rows: &[&DerivedRow], var: Variable) -> VariableSummary {
    let mut values: Vec<f64> = rows.iter().map(|r| var.value(r)).collect();
    if values.is_empty() {
        return VariableSummary {
            variable: var,
            mean: None,
            std: None,
            min: None,
            median: None,
            max: None,
            pct_true: None,
        };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        Some((values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
    } else {
        None
    };
    values.sort_by(f64::total_cmp);
    VariableSummary {
        variable: var,
        mean: Some(mean),
        std,
        min: values.first().copied(),
        median: Some(median_sorted(&values)),
        max: values.last().copied(),
        pct_true: var.is_dummy().then_some(100.0 * mean),
    }
}

fn summarize_group(name: &str, rows: Vec<&DerivedRow>, vars: &[Variable]) -> GroupSummary {
    GroupSummary {
        group: name.to_string(),
        count: rows.len(),
        variables: vars.iter().map(|&v| summarize_variable(&rows, v)).collect(),
    }
}

/// Mean, std, min, median, max (and percentage true for dummies) per variable
/// and group. Groups tile the FULL sample.
pub fn summarize(
    rows: &[DerivedRow],
    grouping: Grouping,
    vars: &[Variable],
) -> Result<SummaryTable> {
    if rows.is_empty() {
        return Err(NicheError::Data("cannot summarize an empty sample".into()));
    }
    let mut groups = vec![summarize_group("FULL", rows.iter().collect(), vars)];
    match grouping {
        Grouping::MarketStatus => {
            groups.push(summarize_group(
                "ML",
                rows.iter().filter(|r| r.market_leader).collect(),
                vars,
            ));
            groups.push(summarize_group(
                "MF",
                rows.iter().filter(|r| !r.market_leader).collect(),
                vars,
            ));
        }
        Grouping::Category => {
            for cat in Category::ALL {
                groups.push(summarize_group(
                    cat.name(),
                    rows.iter().filter(|r| r.category == cat).collect(),
                    vars,
                ));
            }
        }
    }
    Ok(SummaryTable { groups })
}

/// (FULL, ML, MF) row counts.
pub fn sample_counts(rows: &[DerivedRow]) -> (usize, usize, usize) {
    let ml = rows.iter().filter(|r| r.market_leader).count();
    (rows.len(), ml, rows.len() - ml)
}

/// Pearson correlation matrix. A zero-variance variable correlates 0 with
/// everything but itself.
pub fn correlation_matrix(rows: &[DerivedRow], vars: &[Variable]) -> Result<Vec<Vec<f64>>> {
    if rows.len() < 2 {
        return Err(NicheError::Data(
            "correlation needs at least two rows".into(),
        ));
    }
    let n = rows.len() as f64;
    let cols: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| {
            let xs: Vec<f64> = rows.iter().map(|r| v.value(r)).collect();
            let mean = xs.iter().sum::<f64>() / n;
            xs.into_iter().map(|x| x - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = cols
        .iter()
        .zip(vars)
        .map(|(c, v)| {
            let s = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            if s == 0.0 {
                log::warn!("{v} has zero variance; its correlations are set to 0");
            }
            s
        })
        .collect();
    let k = vars.len();
    let mut out = vec![vec![0.0; k]; k];
    for i in 0..k {
        out[i][i] = 1.0;
        for j in (i + 1)..k {
            let r = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else {
                let dot: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            out[i][j] = r;
            out[j][i] = r;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{synthetic_rows, RowModel};

    fn rows(n: usize, seed: u64) -> Vec<DerivedRow> {
        let mut m = RowModel::new(Variable::LogPrice, n);
        m.beta_niche = -0.3;
        synthetic_rows(&m, seed).unwrap()
    }

    #[test]
    fn groups_tile_the_full_sample() {
        let r = rows(301, 1);
        let t = summarize(&r, Grouping::MarketStatus, &[Variable::Niche]).unwrap();
        let count = |g: &str| t.group(g).unwrap().count;
        assert_eq!(count("ML") + count("MF"), count("FULL"));
        assert_eq!(sample_counts(&r), (count("FULL"), count("ML"), count("MF")));
        let t = summarize(&r, Grouping::Category, &[Variable::Niche]).unwrap();
        let total: usize = t.groups[1..].iter().map(|g| g.count).sum();
        assert_eq!(total, 301);
    }

    #[test]
    fn medians_match_sort_oracle() {
        for n in [40, 41] {
            let r = rows(n, n as u64);
            let t = summarize(&r, Grouping::MarketStatus, &Variable::CONTINUOUS).unwrap();
            for v in &t.group("FULL").unwrap().variables {
                let mut xs: Vec<f64> = r.iter().map(|row| v.variable.value(row)).collect();
                xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let want = if n % 2 == 1 {
                    xs[n / 2]
                } else {
                    (xs[n / 2 - 1] + xs[n / 2]) / 2.0
                };
                assert_eq!(v.median, Some(want), "{}", v.variable);
                assert_eq!(v.min, Some(xs[0]));
                assert_eq!(v.max, Some(xs[n - 1]));
            }
        }
    }

    #[test]
    fn constant_column_has_zero_std_and_dummies_report_percent() {
        let mut r = rows(20, 2);
        r.iter_mut().for_each(|row| row.size_mb = 12.5);
        r.iter_mut()
            .enumerate()
            .for_each(|(i, row)| row.adult = i < 5);
        let t = summarize(
            &r,
            Grouping::MarketStatus,
            &[Variable::AppSize, Variable::AdultContent],
        )
        .unwrap();
        let full = t.group("FULL").unwrap();
        assert_eq!(full.variables[0].std, Some(0.0));
        assert_eq!(full.variables[0].pct_true, None);
        assert_eq!(full.variables[1].pct_true, Some(25.0));
    }

    #[test]
    fn empty_group_has_absent_values() {
        let mut r = rows(10, 3);
        r.iter_mut().for_each(|row| row.market_leader = false);
        let t = summarize(&r, Grouping::MarketStatus, &[Variable::Niche]).unwrap();
        let ml = t.group("ML").unwrap();
        assert_eq!(ml.count, 0);
        assert_eq!(ml.variables[0].mean, None);
        assert!(summarize(&[], Grouping::MarketStatus, &[Variable::Niche]).is_err());
    }

    #[test]
    fn correlation_matrix_shape_and_planted_value() {
        let mut m = RowModel::new(Variable::LogPrice, 10_000);
        m.reviews_rating_corr = 0.8;
        let r = synthetic_rows(&m, 4).unwrap();
        let vars = [
            Variable::LogReviews,
            Variable::Rating,
            Variable::Niche,
            Variable::LogReviews,
        ];
        let c = correlation_matrix(&r, &vars).unwrap();
        for i in 0..4 {
            assert_eq!(c[i][i], 1.0);
            for j in 0..4 {
                assert_eq!(c[i][j], c[j][i]);
                assert!((-1.0..=1.0).contains(&c[i][j]));
            }
        }
        assert!((c[0][3] - 1.0).abs() < 1e-12);
        assert!((c[0][1] - 0.8).abs() < 0.03, "{}", c[0][1]);
    }

    #[test]
    fn negated_and_constant_columns() {
        let mut r = rows(50, 5);
        r.iter_mut().for_each(|row| {
            row.log_installs = -row.log_reviews;
            row.size_mb = 1.0;
        });
        let c = correlation_matrix(
            &r,
            &[
                Variable::LogReviews,
                Variable::LogInstalls,
                Variable::AppSize,
            ],
        )
        .unwrap();
        assert!((c[0][1] + 1.0).abs() < 1e-12);
        assert_eq!(c[0][2], 0.0);
        assert_eq!(c[2][2], 1.0);
    }
}
