//! Regression specifications over derived panel rows, best-subset step
//! selection and interaction designs.

use std::collections::BTreeMap;

use log::{debug, warn};
use rayon::prelude::*;
use serde::Serialize;

use super::ols::{ols_fit_with, Design, FitResult, SeMode};
use crate::corpus::{Category, DerivedRow, Period, Variable};
use crate::{NicheError, Result};

/// Candidate controls, in the order used for lexicographic tie-breaking.
pub const CANDIDATE_CONTROLS: [Variable; 5] = [
    Variable::LogReviews,
    Variable::DaysSinceLaunch,
    Variable::Rating,
    Variable::AppSize,
    Variable::AdultContent,
];

/// Outcomes of the step-model program.
pub const STEP_OUTCOMES: [Variable; 8] = [
    Variable::LogPrice,
    Variable::LogInstalls,
    Variable::InAppAds,
    Variable::InAppPurchases,
    Variable::AppDeath,
    Variable::ChangeToTier1,
    Variable::ChangeToTopFirm,
    Variable::MergerAcquisition,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum SampleFilter {
    Full,
    MarketLeader,
    MarketFollower,
}

impl SampleFilter {
    pub const ALL: [SampleFilter; 3] = [
        SampleFilter::Full,
        SampleFilter::MarketLeader,
        SampleFilter::MarketFollower,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SampleFilter::Full => "FULL",
            SampleFilter::MarketLeader => "ML",
            SampleFilter::MarketFollower => "MF",
        }
    }

    pub fn keeps(self, row: &DerivedRow) -> bool {
        match self {
            SampleFilter::Full => true,
            SampleFilter::MarketLeader => row.market_leader,
            SampleFilter::MarketFollower => !row.market_leader,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum InteractionScheme {
    PeriodNiche,
    CategoryNiche,
    MarketLeaderNiche,
}

impl InteractionScheme {
    pub fn name(self) -> &'static str {
        match self {
            InteractionScheme::PeriodNiche => "period_x_niche",
            InteractionScheme::CategoryNiche => "category_x_niche",
            InteractionScheme::MarketLeaderNiche => "ml_x_niche",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionSpec {
    pub outcome: Variable,
    /// Controls on top of the base terms (intercept, Niche, category dummies).
    pub controls: Vec<Variable>,
    pub interactions: Vec<InteractionScheme>,
    pub sample: SampleFilter,
    /// Adds period dummies for stacked app-month rows.
    pub pooled: bool,
    pub se_mode: SeMode,
}

impl RegressionSpec {
    pub fn new(outcome: Variable, sample: SampleFilter) -> Self {
        RegressionSpec {
            outcome,
            controls: Vec::new(),
            interactions: Vec::new(),
            sample,
            pooled: false,
            se_mode: SeMode::Classical,
        }
    }

    pub fn with_controls(mut self, controls: &[Variable]) -> Self {
        self.controls = controls.to_vec();
        self
    }
}

fn indicator(rows: &[&DerivedRow], f: impl Fn(&DerivedRow) -> bool) -> Vec<f64> {
    rows.iter().map(|r| if f(r) { 1.0 } else { 0.0 }).collect()
}

fn category_dummies(rows: &[&DerivedRow]) -> Vec<(String, Vec<f64>)> {
    Category::NON_BASELINE
        .iter()
        .map(|&c| (c.name().to_string(), indicator(rows, |r| r.category == c)))
        .collect()
}

fn period_dummies(rows: &[&DerivedRow]) -> Vec<(String, Vec<f64>)> {
    Period::NON_BASELINE
        .iter()
        .map(|&p| (p.name().to_string(), indicator(rows, |r| r.period == p)))
        .collect()
}

/// Main-effect dummies and their products with Niche.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionColumns {
    pub main_effects: Vec<(String, Vec<f64>)>,
    pub interactions: Vec<(String, Vec<f64>)>,
}

pub fn build_interactions(rows: &[DerivedRow], scheme: InteractionScheme) -> InteractionColumns {
    let refs: Vec<&DerivedRow> = rows.iter().collect();
    interactions_for(&refs, scheme)
}

fn interactions_for(rows: &[&DerivedRow], scheme: InteractionScheme) -> InteractionColumns {
    let main_effects = match scheme {
        InteractionScheme::PeriodNiche => period_dummies(rows),
        InteractionScheme::CategoryNiche => category_dummies(rows),
        InteractionScheme::MarketLeaderNiche => {
            vec![(
                "MarketLeader".to_string(),
                indicator(rows, |r| r.market_leader),
            )]
        }
    };
    let interactions = main_effects
        .iter()
        .map(|(name, col)| {
            let prod = col.iter().zip(rows).map(|(d, r)| d * r.niche).collect();
            (format!("{name}:Niche"), prod)
        })
        .collect();
    InteractionColumns {
        main_effects,
        interactions,
    }
}

/// Rows of `rows` kept by the sample filter.
pub fn filter_sample(rows: &[DerivedRow], sample: SampleFilter) -> Vec<&DerivedRow> {
    rows.iter().filter(|r| sample.keeps(r)).collect()
}

/// Design matrix, outcome and app cluster ids for a specification. Dummy and
/// interaction columns that are identically zero in the sample are dropped.
pub fn build_design(rows: &[&DerivedRow], spec: &RegressionSpec) -> (Design, Vec<f64>, Vec<usize>) {
    let mut d = Design::with_intercept(rows.len());
    d.push("Niche", rows.iter().map(|r| r.niche).collect());
    let mut optional = category_dummies(rows);
    if spec.pooled {
        optional.extend(period_dummies(rows));
    }
    for scheme in &spec.interactions {
        let cols = interactions_for(rows, *scheme);
        optional.extend(cols.main_effects);
        optional.extend(cols.interactions);
    }
    let mut controls_added = false;
    for (name, col) in optional {
        if d.contains(&name) {
            continue;
        }
        if !controls_added && name.contains(':') {
            // controls sit between the main effects and the interaction block
            push_controls(&mut d, rows, spec);
            controls_added = true;
        }
        if col.iter().all(|&v| v == 0.0) {
            debug!(
                "{} sample: dropping all-zero column {name}",
                spec.sample.name()
            );
            continue;
        }
        d.push(name, col);
    }
    if !controls_added {
        push_controls(&mut d, rows, spec);
    }
    let y = rows.iter().map(|r| spec.outcome.value(r)).collect();
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    let clusters = rows
        .iter()
        .map(|r| {
            let next = ids.len();
            *ids.entry(r.app_id.as_str()).or_insert(next)
        })
        .collect();
    (d, y, clusters)
}

fn push_controls(d: &mut Design, rows: &[&DerivedRow], spec: &RegressionSpec) {
    for v in CANDIDATE_CONTROLS
        .iter()
        .filter(|v| spec.controls.contains(v))
    {
        d.push(v.name(), rows.iter().map(|r| v.value(r)).collect());
    }
}

/// Fits a specification on the rows its sample filter keeps.
pub fn fit_spec(rows: &[DerivedRow], spec: &RegressionSpec) -> Result<FitResult> {
    let kept = filter_sample(rows, spec.sample);
    fit_rows(&kept, spec)
}

fn fit_rows(rows: &[&DerivedRow], spec: &RegressionSpec) -> Result<FitResult> {
    let (design, y, clusters) = build_design(rows, spec);
    ols_fit_with(&design, &y, spec.se_mode, Some(&clusters))
}

/// Pooled OLS over stacked app-month rows with period dummies.
pub fn pooled_ols(rows: &[DerivedRow], spec: &RegressionSpec) -> Result<FitResult> {
    let mut spec = spec.clone();
    spec.pooled = true;
    fit_spec(rows, &spec)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetScore {
    pub controls: Vec<Variable>,
    pub aic: f64,
    pub bic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepResult {
    pub step: usize,
    pub controls: Vec<Variable>,
    pub fit: FitResult,
    /// Every subset that fitted, in lexicographic order.
    pub candidates: Vec<SubsetScore>,
    pub skipped: Vec<Vec<Variable>>,
}

/// All `j`-subsets of the candidate controls in lexicographic index order.
pub fn control_subsets(j: usize) -> Vec<Vec<Variable>> {
    fn rec(start: usize, j: usize, cur: &mut Vec<Variable>, out: &mut Vec<Vec<Variable>>) {
        if cur.len() == j {
            out.push(cur.clone());
            return;
        }
        for i in start..CANDIDATE_CONTROLS.len() {
            cur.push(CANDIDATE_CONTROLS[i]);
            rec(i + 1, j, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if j <= CANDIDATE_CONTROLS.len() {
        rec(0, j, &mut Vec::new(), &mut out);
    }
    out
}

/// Best model among all `j`-subsets of the candidate controls: minimal AIC,
/// then BIC, then subset order. Subsets whose fit fails are skipped.
pub fn best_subset_step(
    rows: &[DerivedRow],
    spec: &RegressionSpec,
    j: usize,
) -> Result<StepResult> {
    if j > CANDIDATE_CONTROLS.len() {
        return Err(NicheError::Parameter(format!("step size {j} exceeds 5")));
    }
    let kept = filter_sample(rows, spec.sample);
    let subsets = control_subsets(j);
    let fits: Vec<Result<FitResult>> = subsets
        .par_iter()
        .map(|controls| {
            let s = RegressionSpec {
                controls: controls.clone(),
                ..spec.clone()
            };
            fit_rows(&kept, &s)
        })
        .collect();
    let mut best: Option<(usize, FitResult)> = None;
    let mut candidates = Vec::new();
    let mut skipped = Vec::new();
    let mut first_err = None;
    for (i, fit) in fits.into_iter().enumerate() {
        match fit {
            Ok(f) => {
                candidates.push(SubsetScore {
                    controls: subsets[i].clone(),
                    aic: f.aic,
                    bic: f.bic,
                });
                let better = match &best {
                    None => true,
                    Some((_, b)) => f
                        .aic
                        .total_cmp(&b.aic)
                        .then(f.bic.total_cmp(&b.bic))
                        .is_lt(),
                };
                if better {
                    best = Some((i, f));
                }
            }
            Err(e) => {
                warn!(
                    "{} {} step {j}: skipping controls {:?}: {e}",
                    spec.sample.name(),
                    spec.outcome.name(),
                    subsets[i].iter().map(|v| v.name()).collect::<Vec<_>>()
                );
                skipped.push(subsets[i].clone());
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some((i, fit)) => Ok(StepResult {
            step: j,
            controls: subsets[i].clone(),
            fit,
            candidates,
            skipped,
        }),
        None => Err(first_err.unwrap_or_else(|| NicheError::Data("no subsets to fit".into()))),
    }
}

/// Steps 0 through 5 for one outcome; steps where every subset fails are left out.
pub fn step_ladder(rows: &[DerivedRow], spec: &RegressionSpec) -> Result<Vec<StepResult>> {
    let mut out = Vec::new();
    let mut last_err = None;
    for j in 0..=CANDIDATE_CONTROLS.len() {
        match best_subset_step(rows, spec, j) {
            Ok(s) => out.push(s),
            Err(e) => last_err = Some(e),
        }
    }
    if out.is_empty() {
        return Err(last_err.unwrap_or_else(|| NicheError::Data("empty step ladder".into())));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepScore {
    pub step: usize,
    pub aic: f64,
    pub bic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StepChoice {
    pub chosen: usize,
    pub min_aic_step: usize,
    pub min_bic_step: usize,
    pub bic_agrees: bool,
}

/// Smallest step whose AIC is within `margin` of the minimum.
pub fn select_step_model(scores: &[StepScore], margin: f64) -> Result<StepChoice> {
    let argmin = |key: fn(&StepScore) -> f64| {
        scores
            .iter()
            .min_by(|a, b| key(a).total_cmp(&key(b)).then(a.step.cmp(&b.step)))
            .map(|s| (s.step, key(s)))
    };
    let (min_aic_step, min_aic) =
        argmin(|s| s.aic).ok_or_else(|| NicheError::Parameter("no step scores".into()))?;
    let (min_bic_step, _) = argmin(|s| s.bic).expect("nonempty");
    let chosen = scores
        .iter()
        .filter(|s| s.aic <= min_aic + margin)
        .map(|s| s.step)
        .min()
        .expect("the minimum qualifies");
    Ok(StepChoice {
        chosen,
        min_aic_step,
        min_bic_step,
        bic_agrees: min_bic_step == chosen,
    })
}
