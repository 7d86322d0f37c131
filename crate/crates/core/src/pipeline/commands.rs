use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use log::{info, warn};
use serde::Serialize;

use super::artifacts::{file_sha256, ArtifactDir};
use super::config::PipelineConfig;
use crate::cluster::{
    best_silhouette_k, coarse_k_grid, elbow_scan, fine_k_grid, kmeans_fit, niche_histogram,
    niche_index, sample_cluster_descriptions, ElbowRow, KMeansOptions,
};
use crate::corpus::{
    correlation_matrix, default_wave_dates, derive_variables, impute_all, ingest_jsonl,
    read_top_firms, read_wave_dates, sample_counts, summarize, write_jsonl, DerivedRow, Grouping,
    PanelDataset, Variable,
};
use crate::econometrics::{
    coefficient_grid, fit_spec, pooled_ols, regression_table, select_step_model, step_ladder,
    FitResult, InteractionScheme, RegressionSpec, RegressionTable, SampleFilter, StepChoice,
    StepScore, STEP_OUTCOMES,
};
use crate::equilibrium::{
    b_symmetric_equilibrium, default_sz_grid, sz_solve, BorensteinOutcome, BorensteinParams,
    NashGrid, SzParams, SzSweepRow,
};
use crate::reduce::{
    explained_ratio_curve_with, select_rank_at_ratio, truncated_svd_with, SvdOptions,
};
use crate::synthetic::{generate_panel, SyntheticSpec};
use crate::textprep::{
    build_vocabulary, filter_by_length, prune_vocabulary, threshold_sweep, Exclusion, TextCleaner,
    TokenizedDoc,
};
use crate::vectorize::tfidf_matrix;
use crate::{NicheError, Result};

pub const PANEL_RAW: &str = "panel_raw.jsonl";
pub const PANEL_IMPUTED: &str = "panel_imputed.jsonl";
pub const DELETIONS: &str = "deletions.csv";
pub const NICHE: &str = "niche.csv";
pub const NICHE_SUMMARY: &str = "niche_summary.json";
pub const STEP_SCORES: &str = "step_scores.csv";
pub const TABLES_MD: &str = "tables.md";
pub const FITS: &str = "fits.json";

/// Audit ranges sampled after clustering: very niche, middling, mainstream.
pub const AUDIT_RANGES: [(f64, f64); 3] = [(0.9, 1.0), (0.2, 0.7), (0.0, 0.1)];

const MIN_GRID: [f64; 6] = [0.0, 0.001, 0.002, 0.004, 0.008, 0.016];
const MAX_GRID: [f64; 6] = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

fn artifacts(cfg: &PipelineConfig) -> ArtifactDir {
    ArtifactDir::new(&cfg.out_dir, cfg.hash())
}

fn wave_dates(cfg: &PipelineConfig, n_months: usize) -> Result<Vec<NaiveDate>> {
    let dates = match &cfg.wave_dates {
        Some(p) => read_wave_dates(p)?,
        None => default_wave_dates(),
    };
    if dates.len() < n_months {
        return Err(NicheError::Config(format!(
            "{} wave dates for a {n_months}-month panel; pass wave-dates",
            dates.len()
        )));
    }
    Ok(dates[..n_months].to_vec())
}

fn write_panel(dir: &ArtifactDir, name: &str, panel: &PanelDataset) -> Result<()> {
    let mut buf = Vec::new();
    write_jsonl(panel, &mut buf).map_err(|e| NicheError::io(dir.path(name), e))?;
    dir.write_text(name, &String::from_utf8_lossy(&buf))?;
    Ok(())
}

fn load_panel(
    cfg: &PipelineConfig,
    dir: &ArtifactDir,
    name: &str,
    command: &str,
) -> Result<PanelDataset> {
    let path = dir.require(name, command)?;
    let panel = ingest_jsonl(&path)?;
    let dates = wave_dates(cfg, panel.n_months())?;
    let firms = match &cfg.top_firms {
        Some(p) => read_top_firms(p)?,
        None => Default::default(),
    };
    Ok(panel.with_wave_dates(dates)?.with_top_firms(firms))
}

/// Counts reported by `ingest`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub n_apps: usize,
    pub n_months: usize,
    pub n_records: usize,
    pub dropped: usize,
}

/// Parses the input JSONL and stores the dense panel.
pub fn cmd_ingest(cfg: &PipelineConfig) -> Result<IngestSummary> {
    cfg.validate()?;
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| NicheError::Config("input path not set (input / NICHE_INPUT)".into()))?;
    let panel = ingest_jsonl(input)?;
    wave_dates(cfg, panel.n_months())?;
    let dir = artifacts(cfg);
    write_panel(&dir, PANEL_RAW, &panel)?;
    let s = IngestSummary {
        n_apps: panel.n_apps(),
        n_months: panel.n_months(),
        n_records: panel.n_records(),
        dropped: panel.deletions.len(),
    };
    info!("ingested {} apps x {} months", s.n_apps, s.n_months);
    Ok(s)
}

/// Applies the imputation rules and records deleted apps.
pub fn cmd_impute(cfg: &PipelineConfig) -> Result<IngestSummary> {
    cfg.validate()?;
    let dir = artifacts(cfg);
    let raw = load_panel(cfg, &dir, PANEL_RAW, "ingest")?;
    let imputed = impute_all(&raw);
    write_panel(&dir, PANEL_IMPUTED, &imputed)?;
    let rows: Vec<Vec<String>> = imputed
        .deletions
        .iter()
        .map(|d| vec![d.app_id.clone(), d.reason.clone()])
        .collect();
    dir.write_csv(DELETIONS, &["app_id", "reason"], &rows)?;
    Ok(IngestSummary {
        n_apps: imputed.n_apps(),
        n_months: imputed.n_months(),
        n_records: imputed.n_records(),
        dropped: imputed.deletions.len(),
    })
}

/// Headline numbers from `niche`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NicheSummary {
    pub n_apps: usize,
    pub n_documents: usize,
    pub n_excluded: usize,
    pub n_terms: usize,
    pub svd_rank: usize,
    pub explained_ratio: f64,
    pub k: usize,
    pub k_source: String,
    pub inertia: f64,
    pub cluster_sizes: Vec<usize>,
}

fn f(x: f64) -> String {
    x.to_string()
}

fn elbow_rows(grid: &str, rows: &[ElbowRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                grid.to_string(),
                r.k.to_string(),
                f(r.inertia),
                r.silhouette.map_or(String::new(), f),
            ]
        })
        .collect()
}

/// Text preparation, TF-IDF, truncated SVD and k-means; writes the niche
/// index with its diagnostic curves.
pub fn cmd_niche(cfg: &PipelineConfig) -> Result<NicheSummary> {
    cfg.validate()?;
    let dir = artifacts(cfg);
    let panel = load_panel(cfg, &dir, PANEL_IMPUTED, "impute")?;
    let month = cfg.cross_section_month;
    if month >= panel.n_months() {
        return Err(NicheError::Config(format!(
            "cross-section-month {month} outside a {}-month panel",
            panel.n_months()
        )));
    }

    let cleaner = TextCleaner::default();
    let mut texts: BTreeMap<String, String> = BTreeMap::new();
    let mut excluded: Vec<(String, Exclusion)> = Vec::new();
    let mut docs: Vec<TokenizedDoc> = Vec::new();
    for (id, recs) in panel.iter() {
        let text = recs[month].description.clone().unwrap_or_default();
        match cleaner.clean(id, &text) {
            Ok(d) => docs.push(d),
            Err(e) => excluded.push((id.to_string(), e)),
        }
        texts.insert(id.to_string(), text);
    }
    let filtered = filter_by_length(docs, cfg.min_words, cfg.max_words, cfg.length_bin);
    excluded.extend(filtered.excluded.iter().cloned());
    excluded.sort_by(|a, b| a.0.cmp(&b.0));
    dir.write_csv(
        "exclusions.csv",
        &["app_id", "reason"],
        &excluded
            .iter()
            .map(|(id, e)| vec![id.clone(), e.reason().to_string()])
            .collect::<Vec<_>>(),
    )?;
    let bins = filtered
        .before
        .counts
        .len()
        .max(filtered.after.counts.len());
    let hist: Vec<Vec<String>> = (0..bins)
        .map(|i| {
            let w = cfg.length_bin;
            vec![
                (i * w).to_string(),
                ((i + 1) * w).to_string(),
                filtered
                    .before
                    .counts
                    .get(i)
                    .copied()
                    .unwrap_or(0)
                    .to_string(),
                filtered
                    .after
                    .counts
                    .get(i)
                    .copied()
                    .unwrap_or(0)
                    .to_string(),
            ]
        })
        .collect();
    dir.write_csv(
        "length_hist.csv",
        &["words_from", "words_to", "before", "after"],
        &hist,
    )?;

    let docs = filtered.kept;
    if docs.len() < 3 {
        return Err(NicheError::Data(format!(
            "only {} documents survive text preparation",
            docs.len()
        )));
    }
    let vocab = build_vocabulary(&docs);
    let sweep = threshold_sweep(&vocab, &MIN_GRID, &MAX_GRID)?;
    dir.write_csv(
        "threshold_sweep.csv",
        &["threshold_min", "threshold_max", "columns"],
        &sweep
            .iter()
            .map(|r| {
                vec![
                    f(r.threshold_min),
                    f(r.threshold_max),
                    r.columns.to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    let pruned = prune_vocabulary(&vocab, cfg.threshold_min, cfg.threshold_max)?;
    let tfidf = tfidf_matrix(&docs, &pruned)?;
    let m = &tfidf.matrix;
    let full = m.n_rows().min(m.n_cols());
    if full < 2 {
        return Err(NicheError::Data(format!(
            "TF-IDF matrix {}x{} too small",
            m.n_rows(),
            m.n_cols()
        )));
    }

    let opts = SvdOptions {
        centered: cfg.svd_centered,
        ..SvdOptions::default()
    };
    let curve = explained_ratio_curve_with(m, cfg.svd_max_rank.min(full), cfg.seed, &opts)?;
    dir.write_csv(
        "svd_curve.csv",
        &["rank", "sigma", "cumulative_ratio"],
        &curve
            .iter()
            .map(|p| vec![p.rank.to_string(), f(p.sigma), f(p.cumulative_ratio)])
            .collect::<Vec<_>>(),
    )?;
    let mut rank = select_rank_at_ratio(&curve, cfg.svd_ratio)?;
    if rank >= full {
        warn!(
            "rank {rank} reaches min(N, C) = {full}; truncating to {}",
            full - 1
        );
        rank = full - 1;
    }
    let reduced = truncated_svd_with(m, rank, cfg.seed, &opts)?;
    let emb = &reduced.embedding;
    let n = emb.rows();

    let kopts = KMeansOptions {
        n_restarts: cfg.kmeans_restarts,
        ..KMeansOptions::default()
    };
    let below_n = |g: &[usize]| -> Vec<usize> { g.iter().copied().filter(|&k| k < n).collect() };
    let coarse = below_n(&if cfg.k_coarse.is_empty() {
        coarse_k_grid(n)
    } else {
        cfg.k_coarse.clone()
    });
    let coarse_rows = elbow_scan(emb, &coarse, cfg.seed, false, &kopts)?;
    let fine_upper = coarse.get(1).or(coarse.last()).copied().unwrap_or(2);
    let fine = below_n(&if cfg.k_fine.is_empty() {
        fine_k_grid(fine_upper)
    } else {
        cfg.k_fine.clone()
    });
    let fine_rows = elbow_scan(emb, &fine, cfg.seed, true, &kopts)?;
    let mut elbow = elbow_rows("coarse", &coarse_rows);
    elbow.extend(elbow_rows("fine", &fine_rows));
    dir.write_csv("elbow.csv", &["grid", "k", "inertia", "silhouette"], &elbow)?;

    let (k, k_source) = match cfg.chosen_k {
        Some(k) => (k, "configured".to_string()),
        None => (
            best_silhouette_k(&fine_rows)
                .ok_or_else(|| NicheError::Data("empty fine k grid; set chosen-k".into()))?,
            "max silhouette on fine grid".to_string(),
        ),
    };
    if k >= n {
        return Err(NicheError::Config(format!(
            "chosen k {k} must be below the {n} documents"
        )));
    }
    let model = kmeans_fit(emb, k, cfg.seed, &kopts)?;
    let index = niche_index(&model);
    let niche_rows: Vec<Vec<String>> = tfidf
        .doc_ids
        .iter()
        .zip(&model.labels)
        .zip(&index.scores)
        .map(|((id, &c), &s)| {
            vec![
                id.clone(),
                c.to_string(),
                index.cluster_sizes[c].to_string(),
                f(s),
            ]
        })
        .collect();
    dir.write_csv(
        NICHE,
        &["app_id", "cluster", "cluster_size", "niche"],
        &niche_rows,
    )?;

    let counts = niche_histogram(&index.scores, cfg.hist_bin)?;
    dir.write_csv(
        "niche_hist.csv",
        &["niche_from", "niche_to", "count"],
        &counts
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let lo = i as f64 * cfg.hist_bin;
                vec![f(lo), f((lo + cfg.hist_bin).min(1.0)), c.to_string()]
            })
            .collect::<Vec<_>>(),
    )?;

    let corpus: Vec<(String, String)> = tfidf
        .doc_ids
        .iter()
        .map(|id| (id.clone(), texts[id].clone()))
        .collect();
    let mut audit = String::new();
    for (i, range) in AUDIT_RANGES.iter().enumerate() {
        let report = sample_cluster_descriptions(
            &model,
            &corpus,
            *range,
            3,
            5,
            cfg.seed.wrapping_add(i as u64),
        )?;
        audit.push_str(&report.render());
        audit.push('\n');
    }
    dir.write_text("audit.txt", &audit)?;

    let summary = NicheSummary {
        n_apps: panel.n_apps(),
        n_documents: n,
        n_excluded: excluded.len(),
        n_terms: m.n_cols(),
        svd_rank: rank,
        explained_ratio: reduced.explained_ratio.last().copied().unwrap_or(0.0),
        k,
        k_source,
        inertia: model.inertia,
        cluster_sizes: index.cluster_sizes.clone(),
    };
    dir.write_json(NICHE_SUMMARY, &summary)?;
    Ok(summary)
}

fn load_niche(dir: &ArtifactDir) -> Result<BTreeMap<String, f64>> {
    dir.read_csv(NICHE, "niche")?
        .into_iter()
        .map(|r| {
            let v = r["niche"]
                .parse::<f64>()
                .map_err(|e| NicheError::Data(format!("niche.csv: {e}")))?;
            Ok((r["app_id"].clone(), v))
        })
        .collect()
}

fn derived_rows(cfg: &PipelineConfig, dir: &ArtifactDir) -> Result<Vec<DerivedRow>> {
    let panel = load_panel(cfg, dir, PANEL_IMPUTED, "impute")?;
    let niche = load_niche(dir)?;
    let rows = derive_variables(&panel, &niche, &panel.wave_dates.clone(), cfg.anchor_date)?;
    if rows.is_empty() {
        return Err(NicheError::Data(
            "no derived rows: no app has a niche score".into(),
        ));
    }
    Ok(rows)
}

fn cross_section(rows: &[DerivedRow], month: usize) -> Result<Vec<DerivedRow>> {
    let cs: Vec<DerivedRow> = rows.iter().filter(|r| r.month == month).cloned().collect();
    if cs.is_empty() {
        return Err(NicheError::Config(format!(
            "no rows at cross-section-month {month}"
        )));
    }
    Ok(cs)
}

/// Summary statistics, correlations and sample counts of the cross-section.
pub fn cmd_describe(cfg: &PipelineConfig) -> Result<(usize, usize, usize)> {
    cfg.validate()?;
    let dir = artifacts(cfg);
    let rows = cross_section(&derived_rows(cfg, &dir)?, cfg.cross_section_month)?;
    let vars: Vec<Variable> = Variable::CONTINUOUS
        .iter()
        .chain(Variable::DUMMIES.iter())
        .copied()
        .collect();
    let market = summarize(&rows, Grouping::MarketStatus, &vars)?;
    dir.write_text("summary_market.csv", &market.to_csv())?;
    let category = summarize(&rows, Grouping::Category, &vars)?;
    dir.write_text("summary_category.csv", &category.to_csv())?;
    let x_vars = [
        Variable::Niche,
        Variable::LogReviews,
        Variable::DaysSinceLaunch,
        Variable::Rating,
        Variable::AppSize,
        Variable::AdultContent,
    ];
    let corr = correlation_matrix(&rows, &x_vars)?;
    let corr_rows: Vec<Vec<String>> = x_vars
        .iter()
        .zip(&corr)
        .map(|(v, row)| {
            std::iter::once(v.name().to_string())
                .chain(row.iter().map(|x| f(*x)))
                .collect()
        })
        .collect();
    let header: Vec<&str> = std::iter::once("variable")
        .chain(x_vars.iter().map(|v| v.name()))
        .collect();
    dir.write_csv("correlation.csv", &header, &corr_rows)?;
    let counts = sample_counts(&rows);
    dir.write_csv(
        "sample_counts.csv",
        &["sample", "count"],
        &[
            vec!["FULL".into(), counts.0.to_string()],
            vec!["ML".into(), counts.1.to_string()],
            vec!["MF".into(), counts.2.to_string()],
        ],
    )?;
    Ok(counts)
}

#[derive(Debug, Clone, Serialize)]
struct LabelledFit<'a> {
    table: String,
    column: String,
    sample: &'static str,
    fit: &'a FitResult,
}

#[derive(Debug, Clone, Serialize)]
struct Skipped {
    table: String,
    column: String,
    reason: String,
}

/// What `regress` produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressSummary {
    pub n_cross_section: usize,
    pub n_pooled: usize,
    pub choices: Vec<(String, String, StepChoice)>,
    pub n_fits: usize,
    pub n_skipped: usize,
}

fn has_variation(rows: &[DerivedRow], sample: SampleFilter, v: Variable) -> bool {
    let mut vals = rows.iter().filter(|r| sample.keeps(r)).map(|r| v.value(r));
    match vals.next() {
        Some(first) => vals.any(|x| x != first),
        None => false,
    }
}

fn table_files(
    dir: &ArtifactDir,
    stem: &str,
    table: &RegressionTable,
    md: &mut String,
) -> Result<()> {
    dir.write_text(&format!("{stem}.csv"), &table.to_csv())?;
    md.push_str(&table.to_markdown());
    md.push('\n');
    Ok(())
}

/// The table program: step ladders per sample and outcome, the chosen step
/// models, category and market-leader interactions, and pooled period
/// interactions over all months.
pub fn cmd_regress(cfg: &PipelineConfig) -> Result<RegressSummary> {
    cfg.validate()?;
    let dir = artifacts(cfg);
    let all_rows = derived_rows(cfg, &dir)?;
    let rows = cross_section(&all_rows, cfg.cross_section_month)?;
    let stars = cfg.stars();
    let mut md = String::new();
    let mut step_rows: Vec<Vec<String>> = Vec::new();
    let mut fits: Vec<(String, String, &'static str, FitResult)> = Vec::new();
    let mut skipped: Vec<Skipped> = Vec::new();
    let mut choices = Vec::new();
    // chosen controls per (sample, outcome), reused by the interaction tables
    let mut chosen_controls: BTreeMap<(SampleFilter, Variable), Vec<Variable>> = BTreeMap::new();

    for sample in SampleFilter::ALL {
        let s = sample.name();
        let mut grid_rows: Vec<(String, Vec<Option<FitResult>>)> = Vec::new();
        let mut chosen_fits: Vec<(String, FitResult)> = Vec::new();
        for outcome in STEP_OUTCOMES {
            let o = outcome.name();
            if !has_variation(&rows, sample, outcome) {
                warn!("{s}: {o} has no variation in the cross-section; skipped");
                skipped.push(Skipped {
                    table: format!("steps_{s}"),
                    column: o.into(),
                    reason: "outcome constant in sample".into(),
                });
                continue;
            }
            let mut spec = RegressionSpec::new(outcome, sample);
            spec.se_mode = cfg.se_mode;
            let ladder = match step_ladder(&rows, &spec) {
                Ok(l) => l,
                Err(e) => {
                    warn!("{s}: {o} step ladder failed: {e}");
                    skipped.push(Skipped {
                        table: format!("steps_{s}"),
                        column: o.into(),
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            let scores: Vec<StepScore> = ladder
                .iter()
                .map(|st| StepScore {
                    step: st.step,
                    aic: st.fit.aic,
                    bic: st.fit.bic,
                })
                .collect();
            let choice = select_step_model(&scores, cfg.step_margin)?;
            for st in &ladder {
                let controls: Vec<&str> = st.controls.iter().map(|v| v.name()).collect();
                step_rows.push(vec![
                    s.into(),
                    o.into(),
                    st.step.to_string(),
                    controls.join("+"),
                    f(st.fit.aic),
                    f(st.fit.bic),
                    (st.step == choice.min_aic_step).to_string(),
                    (st.step == choice.min_bic_step).to_string(),
                    (st.step == choice.chosen).to_string(),
                ]);
            }
            let mut cells: Vec<Option<FitResult>> = vec![None; 6];
            for st in &ladder {
                if st.step < 6 {
                    cells[st.step] = Some(st.fit.clone());
                }
                fits.push((
                    format!("steps_{s}"),
                    format!("{o} step {}", st.step),
                    s,
                    st.fit.clone(),
                ));
            }
            let chosen = ladder
                .iter()
                .find(|st| st.step == choice.chosen)
                .expect("chosen step is on the ladder");
            chosen_controls.insert((sample, outcome), chosen.controls.clone());
            chosen_fits.push((o.to_string(), chosen.fit.clone()));
            grid_rows.push((o.to_string(), cells));
            choices.push((s.to_string(), o.to_string(), choice));
        }
        let columns: Vec<String> = (0..6)
            .map(|j| {
                if j == 0 {
                    "Baseline".into()
                } else {
                    format!("Step {j}")
                }
            })
            .collect();
        let grid_refs: Vec<(String, Vec<Option<&FitResult>>)> = grid_rows
            .iter()
            .map(|(l, c)| (l.clone(), c.iter().map(Option::as_ref).collect()))
            .collect();
        let grid = coefficient_grid(
            &format!("Niche coefficient by step model ({s})"),
            "Niche",
            &columns,
            &grid_refs,
            &stars,
        );
        table_files(&dir, &format!("niche_steps_{s}"), &grid, &mut md)?;
        let refs: Vec<(String, &FitResult)> =
            chosen_fits.iter().map(|(l, fr)| (l.clone(), fr)).collect();
        let table = regression_table(
            &format!("Step-model regressions ({s})"),
            &refs,
            None,
            &stars,
        );
        table_files(&dir, &format!("regression_{s}"), &table, &mut md)?;
        for (l, fr) in chosen_fits {
            fits.push((format!("regression_{s}"), l, s, fr));
        }
    }
    dir.write_csv(
        STEP_SCORES,
        &[
            "sample", "outcome", "step", "controls", "aic", "bic", "min_aic", "min_bic", "chosen",
        ],
        &step_rows,
    )?;

    // interaction designs reuse each outcome's chosen controls
    let interaction_table = |stem: String,
                             title: String,
                             data: &[DerivedRow],
                             sample: SampleFilter,
                             scheme: InteractionScheme,
                             pooled: bool,
                             md: &mut String,
                             fits: &mut Vec<(String, String, &'static str, FitResult)>,
                             skipped: &mut Vec<Skipped>|
     -> Result<()> {
        let mut col_fits: Vec<(String, FitResult)> = Vec::new();
        for outcome in STEP_OUTCOMES {
            let Some(controls) = chosen_controls.get(&(sample, outcome)) else {
                continue;
            };
            if !has_variation(data, sample, outcome) {
                continue;
            }
            let mut spec = RegressionSpec::new(outcome, sample).with_controls(controls);
            spec.interactions = vec![scheme];
            spec.se_mode = cfg.se_mode;
            let res = if pooled {
                pooled_ols(data, &spec)
            } else {
                fit_spec(data, &spec)
            };
            match res {
                Ok(fr) => col_fits.push((outcome.name().to_string(), fr)),
                Err(e) => {
                    warn!("{stem}: {} failed: {e}", outcome.name());
                    skipped.push(Skipped {
                        table: stem.clone(),
                        column: outcome.name().into(),
                        reason: e.to_string(),
                    });
                }
            }
        }
        let refs: Vec<(String, &FitResult)> =
            col_fits.iter().map(|(l, fr)| (l.clone(), fr)).collect();
        let table = regression_table(&title, &refs, None, &stars);
        table_files(&dir, &stem, &table, md)?;
        for (l, fr) in col_fits {
            fits.push((stem.clone(), l, sample.name(), fr));
        }
        Ok(())
    };
    for sample in SampleFilter::ALL {
        let s = sample.name();
        interaction_table(
            format!("category_niche_{s}"),
            format!("Category x Niche interactions ({s})"),
            &rows,
            sample,
            InteractionScheme::CategoryNiche,
            false,
            &mut md,
            &mut fits,
            &mut skipped,
        )?;
    }
    interaction_table(
        "ml_niche_FULL".into(),
        "Market leader x Niche interactions (FULL)".into(),
        &rows,
        SampleFilter::Full,
        InteractionScheme::MarketLeaderNiche,
        false,
        &mut md,
        &mut fits,
        &mut skipped,
    )?;
    let n_months = all_rows.iter().map(|r| r.month).max().map_or(0, |m| m + 1);
    interaction_table(
        "pooled_period_niche_FULL".into(),
        format!("Pooled OLS with period x Niche interactions over {n_months} months (FULL)"),
        &all_rows,
        SampleFilter::Full,
        InteractionScheme::PeriodNiche,
        true,
        &mut md,
        &mut fits,
        &mut skipped,
    )?;

    dir.write_text(TABLES_MD, &md)?;
    let labelled: Vec<LabelledFit> = fits
        .iter()
        .map(|(t, c, s, fr)| LabelledFit {
            table: t.clone(),
            column: c.clone(),
            sample: s,
            fit: fr,
        })
        .collect();
    dir.write_json(
        FITS,
        &serde_json::json!({"fits": labelled, "skipped": skipped}),
    )?;
    Ok(RegressSummary {
        n_cross_section: rows.len(),
        n_pooled: all_rows.len(),
        choices,
        n_fits: fits.len(),
        n_skipped: skipped.len(),
    })
}

/// Which equilibrium model to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub enum EquilibriumRequest {
    /// One parameter point, or the default certification grid when `None`.
    ShafferZhang {
        params: Option<SzParams>,
        discrimination_grid: bool,
    },
    Borenstein {
        params: BorensteinParams,
        second_segment: Option<BorensteinParams>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum EquilibriumResult {
    ShafferZhang(Vec<SzSweepRow>),
    Borenstein(BorensteinOutcome),
}

/// Solves the requested model and writes its CSV.
pub fn cmd_equilibrium(
    cfg: &PipelineConfig,
    req: &EquilibriumRequest,
) -> Result<EquilibriumResult> {
    let dir = artifacts(cfg);
    match req {
        EquilibriumRequest::ShafferZhang {
            params,
            discrimination_grid,
        } => {
            let points = match params {
                Some(p) => {
                    p.validate()?;
                    vec![*p]
                }
                None => default_sz_grid(*discrimination_grid),
            };
            let grid = NashGrid::default();
            let rows = points
                .iter()
                .map(|p| sz_solve(p, &grid))
                .collect::<Result<Vec<_>>>()?;
            let out: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    let (ga, gb) = r
                        .theta_gradient
                        .map_or((String::new(), String::new()), |(a, b)| (f(a), f(b)));
                    vec![
                        f(r.params.theta),
                        f(r.params.l_alpha),
                        f(r.params.l_beta),
                        f(r.params.c),
                        r.params.discrimination.to_string(),
                        f(r.prices.p_a),
                        f(r.prices.p_tilde_a),
                        f(r.prices.p_b),
                        f(r.prices.p_tilde_b),
                        f(r.profits.0),
                        f(r.profits.1),
                        ga,
                        gb,
                        r.certified.to_string(),
                        f(r.best_gain),
                    ]
                })
                .collect();
            dir.write_csv(
                "equilibrium_sz.csv",
                &[
                    "theta",
                    "l_alpha",
                    "l_beta",
                    "c",
                    "discrimination",
                    "p_a",
                    "p_tilde_a",
                    "p_b",
                    "p_tilde_b",
                    "profit_a",
                    "profit_b",
                    "dprofit_a_dtheta",
                    "dprofit_b_dtheta",
                    "certified",
                    "best_gain",
                ],
                &out,
            )?;
            Ok(EquilibriumResult::ShafferZhang(rows))
        }
        EquilibriumRequest::Borenstein {
            params,
            second_segment,
        } => {
            let outcome = b_symmetric_equilibrium(params, second_segment.as_ref())?;
            let mut out = vec![seg_row("primary", &outcome.primary)];
            if let Some(s) = &outcome.secondary {
                out.push(seg_row("secondary", s));
            }
            dir.write_csv(
                "equilibrium_borenstein.csv",
                &[
                    "segment",
                    "price",
                    "quantity",
                    "margin_profit",
                    "regime",
                    "iterations",
                ],
                &out,
            )?;
            Ok(EquilibriumResult::Borenstein(outcome))
        }
    }
}

fn seg_row(name: &str, s: &crate::equilibrium::SegmentEquilibrium) -> Vec<String> {
    vec![
        name.into(),
        f(s.price),
        f(s.quantity),
        f(s.margin_profit),
        format!("{:?}", s.regime),
        s.iterations.to_string(),
    ]
}

/// Artifacts `report` reads, in report order.
pub const REPORT_INPUTS: [&str; 10] = [
    NICHE_SUMMARY,
    "sample_counts.csv",
    "summary_market.csv",
    "elbow.csv",
    "svd_curve.csv",
    "niche_hist.csv",
    STEP_SCORES,
    TABLES_MD,
    FITS,
    "audit.txt",
];

fn strip_header(s: &str) -> &str {
    if s.starts_with('#') {
        s.split_once('\n').map_or("", |(_, rest)| rest)
    } else {
        s
    }
}

fn csv_to_markdown(body: &str) -> String {
    let mut lines = body.lines().filter(|l| !l.is_empty());
    let Some(head) = lines.next() else {
        return String::new();
    };
    let cols = head.split(',').count();
    let mut out = format!(
        "| {} |\n|{}\n",
        head.replace(',', " | "),
        "---|".repeat(cols)
    );
    for l in lines {
        out.push_str(&format!("| {} |\n", l.replace(',', " | ")));
    }
    out
}

/// Assembles `report.md` from existing artifacts without recomputing anything.
pub fn cmd_report(cfg: &PipelineConfig) -> Result<std::path::PathBuf> {
    let dir = artifacts(cfg);
    let mut text: BTreeMap<&str, String> = BTreeMap::new();
    for name in REPORT_INPUTS {
        let producer = match name {
            NICHE_SUMMARY | "elbow.csv" | "svd_curve.csv" | "niche_hist.csv" | "audit.txt" => {
                "niche"
            }
            "sample_counts.csv" | "summary_market.csv" => "describe",
            _ => "regress",
        };
        text.insert(name, dir.read_to_string(name, producer)?);
    }
    let mut md = String::from("# Niche analysis report\n\n");
    let summary: serde_json::Value = serde_json::from_str(&text[NICHE_SUMMARY])
        .map_err(|e| NicheError::Data(format!("{NICHE_SUMMARY}: {e}")))?;
    md.push_str("## Niche index\n\n");
    for key in [
        "n_apps",
        "n_documents",
        "n_excluded",
        "n_terms",
        "svd_rank",
        "explained_ratio",
        "k",
        "k_source",
        "inertia",
    ] {
        md.push_str(&format!("- {key}: {}\n", summary[key]));
    }
    md.push('\n');
    for (title, name) in [
        ("Sample counts", "sample_counts.csv"),
        ("Summary statistics by market status", "summary_market.csv"),
        ("Elbow and silhouette scan", "elbow.csv"),
        ("Niche index histogram", "niche_hist.csv"),
        ("Step-model scores", STEP_SCORES),
    ] {
        md.push_str(&format!(
            "## {title}\n\n{}\n",
            csv_to_markdown(strip_header(&text[name]))
        ));
    }
    md.push_str("## Regression tables\n\n");
    md.push_str(strip_header(&text[TABLES_MD]));
    md.push_str("\n## Cluster audit\n\n```\n");
    md.push_str(strip_header(&text["audit.txt"]));
    md.push_str("```\n\n## Artifact checksums (SHA-256)\n\n| artifact | sha256 |\n|---|---|\n");
    for name in REPORT_INPUTS {
        md.push_str(&format!("| {name} | {} |\n", file_sha256(&dir.path(name))?));
    }
    dir.write_text("report.md", &md)
}

/// Writes a synthetic corpus, its manifest and top-firm list into `out`.
pub fn cmd_gen_synthetic(spec: &SyntheticSpec, out: &Path) -> Result<crate::synthetic::Manifest> {
    let corpus = generate_panel(spec)?;
    let mut jsonl = Vec::new();
    for r in &corpus.records {
        serde_json::to_writer(&mut jsonl, r).map_err(|e| NicheError::Data(e.to_string()))?;
        jsonl.push(b'\n');
    }
    super::artifacts::write_atomic(&out.join("panel.jsonl"), &jsonl)?;
    let mut manifest = serde_json::to_string_pretty(&corpus.manifest)
        .map_err(|e| NicheError::Data(e.to_string()))?;
    manifest.push('\n');
    super::artifacts::write_atomic(&out.join("manifest.json"), manifest.as_bytes())?;
    let mut firms = corpus.manifest.top_firms.join("\n");
    firms.push('\n');
    super::artifacts::write_atomic(&out.join("top_firms.txt"), firms.as_bytes())?;
    let dates: String = corpus
        .manifest
        .wave_dates
        .iter()
        .map(|d| format!("{d}\n"))
        .collect();
    super::artifacts::write_atomic(&out.join("wave_dates.txt"), dates.as_bytes())?;
    Ok(corpus.manifest)
}

/// ingest, impute, niche, describe, regress and report in sequence.
pub fn run_all(cfg: &PipelineConfig) -> Result<()> {
    cmd_ingest(cfg)?;
    cmd_impute(cfg)?;
    cmd_niche(cfg)?;
    cmd_describe(cfg)?;
    cmd_regress(cfg)?;
    cmd_report(cfg)?;
    Ok(())
}
