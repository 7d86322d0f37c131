//! App panel ingestion, imputation, variable derivation and descriptive statistics.
//!
//! The panel is stored dense: every retained app carries exactly one record per
//! month, with months missing from the input materialised as unscraped records
//! whose fields are all absent.

mod derive;
mod describe;
mod impute;
mod ingest;

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use derive::{
    assign_tiers, default_wave_dates, derive_variables, flag_market_leader, map_genre_to_category,
    period_for_date, Category, DerivedRow, Period, Variable, DEFAULT_ANCHOR,
};
pub use describe::{
    correlation_matrix, sample_counts, summarize, GroupSummary, Grouping, SummaryTable,
    VariableSummary,
};
pub use impute::{
    detect_app_death, impute_all, impute_locf, impute_monetization_flags, impute_stable,
};
pub use ingest::{ingest_jsonl, ingest_reader, read_top_firms, read_wave_dates, write_jsonl};

/// One app-month observation as scraped. Absent values stay `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppRecord {
    pub app_id: String,
    pub month: usize,
    pub scraped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub installs_lb: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains_ads: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offers_iap: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reviews: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub released: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_mb: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adult: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genre_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub firm: Option<String>,
}

impl AppRecord {
    /// A month the scraper never reached: everything absent.
    pub fn unscraped(app_id: &str, month: usize) -> Self {
        AppRecord {
            app_id: app_id.to_string(),
            month,
            scraped: false,
            description: None,
            price: None,
            installs_lb: None,
            contains_ads: None,
            offers_iap: None,
            rating: None,
            reviews: None,
            released: None,
            size_mb: None,
            adult: None,
            genre_id: None,
            firm: None,
        }
    }
}

/// Why an app was removed from the panel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deletion {
    pub app_id: String,
    pub reason: String,
}

/// The app x month panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    apps: BTreeMap<String, Vec<AppRecord>>,
    n_months: usize,
    pub wave_dates: Vec<NaiveDate>,
    pub top_firms: BTreeSet<String>,
    /// Apps removed by ingestion or imputation, in the order they were removed.
    pub deletions: Vec<Deletion>,
}

impl PanelDataset {
    pub fn empty() -> Self {
        PanelDataset {
            apps: BTreeMap::new(),
            n_months: 0,
            wave_dates: Vec::new(),
            top_firms: BTreeSet::new(),
            deletions: Vec::new(),
        }
    }

    /// Builds a panel from per-app month series. Each series must be dense
    /// (`series[m].month == m`) and all series must share one length.
    pub fn from_series(series: BTreeMap<String, Vec<AppRecord>>) -> crate::Result<Self> {
        let n_months = series.values().map(Vec::len).max().unwrap_or(0);
        for (id, recs) in &series {
            if recs.len() != n_months {
                return Err(crate::NicheError::Data(format!(
                    "app {id} has {} months, expected {n_months}",
                    recs.len()
                )));
            }
            for (m, r) in recs.iter().enumerate() {
                if r.month != m || &r.app_id != id {
                    return Err(crate::NicheError::Data(format!(
                        "app {id}: record at slot {m} is ({}, {})",
                        r.app_id, r.month
                    )));
                }
            }
        }
        Ok(PanelDataset {
            apps: series,
            n_months,
            ..PanelDataset::empty()
        })
    }

    pub fn n_apps(&self) -> usize {
        self.apps.len()
    }

    pub fn n_months(&self) -> usize {
        self.n_months
    }

    pub fn n_records(&self) -> usize {
        self.apps.len() * self.n_months
    }

    pub fn app(&self, app_id: &str) -> Option<&[AppRecord]> {
        self.apps.get(app_id).map(Vec::as_slice)
    }

    /// Apps in lexicographic id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[AppRecord])> {
        self.apps.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn records(&self) -> impl Iterator<Item = &AppRecord> {
        self.apps.values().flatten()
    }

    pub fn with_wave_dates(mut self, wave_dates: Vec<NaiveDate>) -> crate::Result<Self> {
        if wave_dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(crate::NicheError::Data(
                "wave dates must be strictly increasing".into(),
            ));
        }
        self.wave_dates = wave_dates;
        Ok(self)
    }

    pub fn with_top_firms(mut self, top_firms: BTreeSet<String>) -> Self {
        self.top_firms = top_firms;
        self
    }

    pub(crate) fn map_apps<F>(&self, stage: &str, f: F) -> PanelDataset
    where
        F: Fn(&[AppRecord]) -> Result<Vec<AppRecord>, String> + Sync,
    {
        use rayon::prelude::*;
        let results: Vec<(String, Result<Vec<AppRecord>, String>)> = self
            .apps
            .par_iter()
            .map(|(id, recs)| (id.clone(), f(recs)))
            .collect();
        let mut apps = BTreeMap::new();
        let mut deletions = self.deletions.clone();
        for (id, res) in results {
            match res {
                Ok(recs) => {
                    apps.insert(id, recs);
                }
                Err(reason) => {
                    log::warn!("{stage}: dropping app {id}: {reason}");
                    deletions.push(Deletion { app_id: id, reason });
                }
            }
        }
        PanelDataset {
            apps,
            n_months: self.n_months,
            wave_dates: self.wave_dates.clone(),
            top_firms: self.top_firms.clone(),
            deletions,
        }
    }
}
