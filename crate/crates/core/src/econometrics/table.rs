//! Coefficient tables with standard errors beneath and significance stars.

use serde::Serialize;

use super::ols::FitResult;

/// Two-sided p-value cut-offs for one, two and three stars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StarThresholds(pub [f64; 3]);

impl Default for StarThresholds {
    fn default() -> Self {
        StarThresholds([0.10, 0.05, 0.01])
    }
}

impl StarThresholds {
    pub fn stars(&self, p: Option<f64>) -> &'static str {
        match p {
            Some(p) if p < self.0[2] => "***",
            Some(p) if p < self.0[1] => "**",
            Some(p) if p < self.0[0] => "*",
            _ => "",
        }
    }
}

/// Rounds to two decimals and prints the shortest form with at least one
/// decimal digit: -0.334 -> "-0.33", 0.004 -> "0.0", 0.1 -> "0.1".
pub fn format_number(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let r = (x * 100.0).round() / 100.0;
    // keep the sign of tiny negatives, as in "-0.0"
    let r = if r == 0.0 && x < 0.0 { -0.0 } else { r };
    let s = format!("{r}");
    if s.contains('.') {
        s
    } else {
        format!("{s}.0")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub estimate: String,
    pub std_error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub label: String,
    pub cells: Vec<Option<Cell>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionTable {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
    /// Summary lines such as N and R squared.
    pub footer: Vec<(String, Vec<String>)>,
}

fn cell(fit: &FitResult, i: usize, stars: &StarThresholds) -> Cell {
    Cell {
        estimate: format!(
            "{}{}",
            format_number(fit.coefficients[i]),
            stars.stars(fit.p_values[i])
        ),
        std_error: format!("({})", format_number(fit.std_errors[i])),
    }
}

/// One column per fit, one row per term (the union of all terms in first-seen
/// order unless `terms` is given).
pub fn regression_table(
    title: &str,
    fits: &[(String, &FitResult)],
    terms: Option<&[String]>,
    stars: &StarThresholds,
) -> RegressionTable {
    let terms: Vec<String> = match terms {
        Some(t) => t.to_vec(),
        None => {
            let mut seen: Vec<String> = Vec::new();
            for (_, f) in fits {
                for t in &f.terms {
                    if !seen.contains(t) {
                        seen.push(t.clone());
                    }
                }
            }
            seen
        }
    };
    let rows = terms
        .iter()
        .map(|t| TableRow {
            label: t.clone(),
            cells: fits
                .iter()
                .map(|(_, f)| f.position(t).map(|i| cell(f, i, stars)))
                .collect(),
        })
        .collect();
    let footer = vec![
        (
            "N".to_string(),
            fits.iter().map(|(_, f)| f.n.to_string()).collect(),
        ),
        (
            "R2".to_string(),
            fits.iter()
                .map(|(_, f)| format_number(f.r_squared))
                .collect(),
        ),
        (
            "AIC".to_string(),
            fits.iter().map(|(_, f)| format!("{:.0}", f.aic)).collect(),
        ),
        (
            "BIC".to_string(),
            fits.iter().map(|(_, f)| format!("{:.0}", f.bic)).collect(),
        ),
    ];
    RegressionTable {
        title: title.to_string(),
        columns: fits.iter().map(|(l, _)| l.clone()).collect(),
        rows,
        footer,
    }
}

/// A single term across a grid of fits: one row per outcome, one column per
/// step (or any other layout), e.g. the Niche coefficient by step model.
pub fn coefficient_grid(
    title: &str,
    term: &str,
    columns: &[String],
    rows: &[(String, Vec<Option<&FitResult>>)],
    stars: &StarThresholds,
) -> RegressionTable {
    RegressionTable {
        title: title.to_string(),
        columns: columns.to_vec(),
        rows: rows
            .iter()
            .map(|(label, fits)| TableRow {
                label: label.clone(),
                cells: fits
                    .iter()
                    .map(|f| f.and_then(|f| f.position(term).map(|i| cell(f, i, stars))))
                    .collect(),
            })
            .collect(),
        footer: Vec::new(),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl RegressionTable {
    /// Estimate line then a standard-error line per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = std::iter::once("term".to_string())
            .chain(self.columns.iter().map(|c| csv_field(c)))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for row in &self.rows {
            let est: Vec<String> = row
                .cells
                .iter()
                .map(|c| c.as_ref().map_or(String::new(), |c| c.estimate.clone()))
                .collect();
            let se: Vec<String> = row
                .cells
                .iter()
                .map(|c| c.as_ref().map_or(String::new(), |c| c.std_error.clone()))
                .collect();
            out.push_str(&format!("{},{}\n", csv_field(&row.label), est.join(",")));
            out.push_str(&format!(",{}\n", se.join(",")));
        }
        for (label, vals) in &self.footer {
            out.push_str(&format!("{},{}\n", csv_field(label), vals.join(",")));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("### {}\n\n", self.title);
        out.push_str(&format!("| | {} |\n", self.columns.join(" | ")));
        out.push_str(&format!("|---|{}\n", "---|".repeat(self.columns.len())));
        for row in &self.rows {
            let est: Vec<&str> = row
                .cells
                .iter()
                .map(|c| c.as_ref().map_or("", |c| c.estimate.as_str()))
                .collect();
            let se: Vec<&str> = row
                .cells
                .iter()
                .map(|c| c.as_ref().map_or("", |c| c.std_error.as_str()))
                .collect();
            out.push_str(&format!("| {} | {} |\n", row.label, est.join(" | ")));
            out.push_str(&format!("| | {} |\n", se.join(" | ")));
        }
        for (label, vals) in &self.footer {
            out.push_str(&format!("| {} | {} |\n", label, vals.join(" | ")));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::econometrics::ols::SeMode;

    #[test]
    fn number_format() {
        assert_eq!(format_number(-0.334), "-0.33");
        assert_eq!(format_number(0.031), "0.03");
        assert_eq!(format_number(0.004), "0.0");
        assert_eq!(format_number(-0.004), "-0.0");
        assert_eq!(format_number(0.1), "0.1");
        assert_eq!(format_number(2.0), "2.0");
        assert_eq!(format_number(0.0149), "0.01");
    }

    #[test]
    fn star_rules() {
        let s = StarThresholds::default();
        assert_eq!(s.stars(Some(0.005)), "***");
        assert_eq!(s.stars(Some(0.03)), "**");
        assert_eq!(s.stars(Some(0.07)), "*");
        assert_eq!(s.stars(Some(0.5)), "");
        assert_eq!(s.stars(None), "");
    }

    fn fit() -> FitResult {
        FitResult {
            terms: vec!["Intercept".into(), "Niche".into()],
            coefficients: vec![1.0, -0.334],
            std_errors: vec![0.2, 0.031],
            p_values: vec![Some(0.5), Some(0.001)],
            n: 100,
            k_params: 3,
            rss: 1.0,
            log_likelihood: -10.0,
            aic: 26.0,
            bic: 30.0,
            r_squared: 0.25,
            se_mode: SeMode::Classical,
        }
    }

    #[test]
    fn rendered_cells() {
        let f = fit();
        let t = regression_table(
            "t",
            &[("LogPrice".into(), &f)],
            None,
            &StarThresholds::default(),
        );
        let niche = &t.rows[1].cells[0].as_ref().unwrap();
        assert_eq!(niche.estimate, "-0.33***");
        assert_eq!(niche.std_error, "(0.03)");
        assert_eq!(t.rows[0].cells[0].as_ref().unwrap().estimate, "1.0");
        let csv = t.to_csv();
        assert!(csv.starts_with("term,LogPrice\nIntercept,1.0\n,(0.2)\nNiche,-0.33***\n,(0.03)\n"));
        assert!(t.to_markdown().contains("| Niche | -0.33*** |"));
    }

    #[test]
    fn grid_layout() {
        let f = fit();
        let g = coefficient_grid(
            "niche by step",
            "Niche",
            &["Baseline".into(), "Step 1".into()],
            &[("LogPrice".into(), vec![Some(&f), None])],
            &StarThresholds::default(),
        );
        assert_eq!(g.rows[0].cells[0].as_ref().unwrap().estimate, "-0.33***");
        assert!(g.rows[0].cells[1].is_none());
    }
}
