use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::impute::{death_flags, mode_of};
use super::PanelDataset;
use crate::{NicheError, Result};

/// Day the analysis window closes; `days_since_launch` counts up to it.
pub const DEFAULT_ANCHOR: (i32, u32, u32) = (2021, 8, 13);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Game,
    Business,
    Social,
    Medical,
    Lifestyle,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Game,
        Category::Business,
        Category::Social,
        Category::Medical,
        Category::Lifestyle,
    ];
    /// Dummy categories in design order; lifestyle is the omitted baseline.
    pub const NON_BASELINE: [Category; 4] = [
        Category::Game,
        Category::Social,
        Category::Business,
        Category::Medical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Game => "Game",
            Category::Business => "Business",
            Category::Social => "Social",
            Category::Medical => "Medical",
            Category::Lifestyle => "Lifestyle",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Period {
    Before,
    After1,
    After2,
    After3,
    After4,
}

impl Period {
    pub const ALL: [Period; 5] = [
        Period::Before,
        Period::After1,
        Period::After2,
        Period::After3,
        Period::After4,
    ];
    pub const NON_BASELINE: [Period; 4] = [
        Period::After1,
        Period::After2,
        Period::After3,
        Period::After4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Period::Before => "Before",
            Period::After1 => "After_1",
            Period::After2 => "After_2",
            Period::After3 => "After_3",
            Period::After4 => "After_4",
        }
    }

    fn start(self) -> NaiveDate {
        let (y, m) = match self {
            Period::Before => (1900, 1),
            Period::After1 => (2020, 3),
            Period::After2 => (2020, 9),
            Period::After3 => (2021, 1),
            Period::After4 => (2021, 5),
        };
        NaiveDate::from_ymd_opt(y, m, 1).expect("valid period start")
    }
}

/// Period label for a wave date. Windows: before < 2020-03; After_1 Mar-Apr
/// 2020; After_2 Sep-Dec 2020; After_3 Jan-Apr 2021; After_4 May-Jul 2021.
/// Dates in the unlabelled gaps (May-Aug 2020, after Jul 2021) take the most
/// recent window that has opened.
pub fn period_for_date(date: NaiveDate) -> Period {
    Period::ALL
        .iter()
        .rev()
        .copied()
        .find(|p| date >= p.start())
        .unwrap_or(Period::Before)
}

/// Eighteen monthly waves, Jul 2019 .. Jul 2021, skipping the months no period
/// window covers.
pub fn default_wave_dates() -> Vec<NaiveDate> {
    [
        (2019, 7),
        (2019, 8),
        (2019, 10),
        (2019, 12),
        (2020, 2),
        (2020, 3),
        (2020, 4),
        (2020, 9),
        (2020, 10),
        (2020, 11),
        (2020, 12),
        (2021, 1),
        (2021, 2),
        (2021, 3),
        (2021, 4),
        (2021, 5),
        (2021, 6),
        (2021, 7),
    ]
    .iter()
    .map(|&(y, m)| NaiveDate::from_ymd_opt(y, m, 15).expect("valid wave date"))
    .collect()
}

fn normalize_genre(genre: &str) -> String {
    genre
        .trim()
        .to_lowercase()
        .replace(['_', '-'], " ")
        .replace('&', "and")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn classify_genre(genre: &str) -> Option<Category> {
    let g = normalize_genre(genre);
    if g == "game" || g == "games" || g.starts_with("game ") {
        return Some(Category::Game);
    }
    let cat = match g.as_str() {
        "finance"
        | "education"
        | "news and magazine"
        | "news and magazines"
        | "business"
        | "productivity"
        | "tools"
        | "books and reference"
        | "libraries and demo"
        | "libraries and demos"
        | "libraries"
        | "demos" => Category::Business,
        "communication"
        | "food and drink"
        | "social"
        | "shopping"
        | "dating"
        | "events"
        | "weather"
        | "maps and navigation"
        | "auto and vehicles" => Category::Social,
        "health and fitness" | "medical" => Category::Medical,
        "personalization"
        | "sports"
        | "music and audio"
        | "entertainment"
        | "travel and local"
        | "lifestyle"
        | "photography"
        | "video players"
        | "video players and editors"
        | "parenting"
        | "comics"
        | "art and design"
        | "beauty"
        | "house and home" => Category::Lifestyle,
        _ => return None,
    };
    Some(cat)
}

/// Store genre id to analysis category. Unknown genres fall into the residual
/// lifestyle class with a warning.
pub fn map_genre_to_category(genre_id: &str) -> Category {
    classify_genre(genre_id).unwrap_or_else(|| {
        log::warn!("unknown genre id {genre_id:?}; mapped to lifestyle");
        Category::Lifestyle
    })
}

/// Install-bracket tier: 1 for >= 10M, 2 for [100K, 10M), 3 below.
pub fn assign_tiers(installs_lb: u64) -> u8 {
    if installs_lb >= 10_000_000 {
        1
    } else if installs_lb >= 100_000 {
        2
    } else {
        3
    }
}

pub fn flag_market_leader(tier: u8, firm: &str, top_firms: &BTreeSet<String>) -> bool {
    tier == 1 || top_firms.contains(firm)
}

/// One app-month row of regression-ready variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedRow {
    pub app_id: String,
    pub month: usize,
    pub niche: f64,
    pub log_price: f64,
    pub log_installs: f64,
    pub log_reviews: f64,
    pub rating: f64,
    pub days_since_launch: i64,
    pub size_mb: f64,
    pub adult: bool,
    pub in_app_ads: bool,
    pub in_app_purchases: bool,
    pub category: Category,
    pub tier: u8,
    pub top_firm: bool,
    pub market_leader: bool,
    pub period: Period,
    pub app_death: bool,
    pub change_to_tier1: bool,
    pub change_to_top_firm: bool,
    pub merger_acquisition: bool,
}

/// Numeric view of a derived-row column, named as in the regression tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variable {
    Niche,
    LogPrice,
    LogInstalls,
    InAppAds,
    InAppPurchases,
    LogReviews,
    DaysSinceLaunch,
    Rating,
    AppSize,
    AdultContent,
    AppDeath,
    ChangeToTier1,
    ChangeToTopFirm,
    MergerAcquisition,
    MarketLeader,
    TopFirm,
}

impl Variable {
    pub const CONTINUOUS: [Variable; 7] = [
        Variable::Niche,
        Variable::LogPrice,
        Variable::LogInstalls,
        Variable::LogReviews,
        Variable::DaysSinceLaunch,
        Variable::Rating,
        Variable::AppSize,
    ];
    pub const DUMMIES: [Variable; 9] = [
        Variable::InAppAds,
        Variable::InAppPurchases,
        Variable::AdultContent,
        Variable::AppDeath,
        Variable::ChangeToTier1,
        Variable::ChangeToTopFirm,
        Variable::MergerAcquisition,
        Variable::MarketLeader,
        Variable::TopFirm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variable::Niche => "Niche",
            Variable::LogPrice => "LogPrice",
            Variable::LogInstalls => "LogInstalls",
            Variable::InAppAds => "InAppAds",
            Variable::InAppPurchases => "InAppPurchases",
            Variable::LogReviews => "logReviews",
            Variable::DaysSinceLaunch => "DaysSinceLaunch",
            Variable::Rating => "Rating",
            Variable::AppSize => "AppSize",
            Variable::AdultContent => "AdultContent",
            Variable::AppDeath => "AppDeath",
            Variable::ChangeToTier1 => "ChangeToTier1",
            Variable::ChangeToTopFirm => "ChangeToTopFirm",
            Variable::MergerAcquisition => "MergerAcquisition",
            Variable::MarketLeader => "MarketLeader",
            Variable::TopFirm => "TopFirm",
        }
    }

    pub fn is_dummy(self) -> bool {
        Variable::DUMMIES.contains(&self)
    }

    pub fn value(self, row: &DerivedRow) -> f64 {
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        match self {
            Variable::Niche => row.niche,
            Variable::LogPrice => row.log_price,
            Variable::LogInstalls => row.log_installs,
            Variable::InAppAds => b(row.in_app_ads),
            Variable::InAppPurchases => b(row.in_app_purchases),
            Variable::LogReviews => row.log_reviews,
            Variable::DaysSinceLaunch => row.days_since_launch as f64,
            Variable::Rating => row.rating,
            Variable::AppSize => row.size_mb,
            Variable::AdultContent => b(row.adult),
            Variable::AppDeath => b(row.app_death),
            Variable::ChangeToTier1 => b(row.change_to_tier1),
            Variable::ChangeToTopFirm => b(row.change_to_top_firm),
            Variable::MergerAcquisition => b(row.merger_acquisition),
            Variable::MarketLeader => b(row.market_leader),
            Variable::TopFirm => b(row.top_firm),
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn missing(app: &str, month: usize, var: &str) -> NicheError {
    NicheError::Data(format!(
        "app {app} month {month}: {var} absent after imputation"
    ))
}

/// Builds one row per retained app and month. Apps without a niche score
/// (excluded during text preparation) are skipped with a warning.
pub fn derive_variables(
    panel: &PanelDataset,
    niche: &BTreeMap<String, f64>,
    wave_dates: &[NaiveDate],
    anchor: NaiveDate,
) -> Result<Vec<DerivedRow>> {
    if wave_dates.len() < panel.n_months() {
        return Err(NicheError::Config(format!(
            "{} wave dates supplied for {} months",
            wave_dates.len(),
            panel.n_months()
        )));
    }
    let periods: Vec<Period> = wave_dates.iter().map(|&d| period_for_date(d)).collect();
    let mut rows = Vec::with_capacity(panel.n_records());
    for (id, recs) in panel.iter() {
        let Some(&niche_score) = niche.get(id) else {
            log::warn!("app {id} has no niche score; excluded from derived rows");
            continue;
        };
        let genre = mode_of(recs.iter().filter_map(|r| r.genre_id.clone()))
            .ok_or_else(|| missing(id, 0, "genre_id"))?;
        let category = map_genre_to_category(&genre);
        let scraped: Vec<bool> = recs.iter().map(|r| r.scraped).collect();
        let death = death_flags(&scraped);

        let mut prev: Option<(u8, bool, String)> = None;
        for (m, r) in recs.iter().enumerate() {
            let price = r.price.ok_or_else(|| missing(id, m, "price"))?;
            let installs = r.installs_lb.ok_or_else(|| missing(id, m, "installs_lb"))?;
            let reviews = r.reviews.ok_or_else(|| missing(id, m, "reviews"))?;
            let firm = r.firm.clone().ok_or_else(|| missing(id, m, "firm"))?;
            let released = r.released.ok_or_else(|| missing(id, m, "released"))?;
            let mut days = (anchor - released).num_days();
            if days < 0 {
                log::warn!("app {id}: release {released} after anchor {anchor}; days floored at 0");
                days = 0;
            }
            let tier = assign_tiers(installs);
            let top_firm = panel.top_firms.contains(&firm);
            let (change_to_tier1, change_to_top_firm, merger_acquisition) = match &prev {
                None => (false, false, false),
                Some((pt, ptop, pfirm)) => {
                    (tier == 1 && *pt != 1, top_firm && !ptop, *pfirm != firm)
                }
            };
            rows.push(DerivedRow {
                app_id: id.to_string(),
                month: m,
                niche: niche_score,
                log_price: (price + 1.0).ln(),
                log_installs: (installs as f64 + 1.0).ln(),
                log_reviews: (reviews as f64 + 1.0).ln(),
                rating: r.rating.ok_or_else(|| missing(id, m, "rating"))?,
                days_since_launch: days,
                size_mb: r.size_mb.ok_or_else(|| missing(id, m, "size_mb"))?,
                adult: r.adult.ok_or_else(|| missing(id, m, "adult"))?,
                in_app_ads: r
                    .contains_ads
                    .ok_or_else(|| missing(id, m, "contains_ads"))?,
                in_app_purchases: r.offers_iap.ok_or_else(|| missing(id, m, "offers_iap"))?,
                category,
                tier,
                top_firm,
                market_leader: flag_market_leader(tier, &firm, &panel.top_firms),
                period: periods[m],
                app_death: death[m],
                change_to_tier1,
                change_to_top_firm,
                merger_acquisition,
            });
            prev = Some((tier, top_firm, firm));
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, 15).unwrap()
    }

    #[test]
    fn genre_examples() {
        assert_eq!(map_genre_to_category("dating"), Category::Social);
        assert_eq!(map_genre_to_category("medical"), Category::Medical);
        assert_eq!(map_genre_to_category("GAME_ACTION"), Category::Game);
        assert_eq!(
            map_genre_to_category("NEWS_AND_MAGAZINES"),
            Category::Business
        );
        assert_eq!(
            map_genre_to_category("HEALTH_AND_FITNESS"),
            Category::Medical
        );
        assert_eq!(
            map_genre_to_category("MAPS_AND_NAVIGATION"),
            Category::Social
        );
        assert_eq!(map_genre_to_category("VIDEO_PLAYERS"), Category::Lifestyle);
        assert_eq!(classify_genre("NOT_A_GENRE"), None);
        assert_eq!(map_genre_to_category("NOT_A_GENRE"), Category::Lifestyle);
    }

    #[test]
    fn tier_boundaries() {
        assert_eq!(assign_tiers(10_000_000), 1);
        assert_eq!(assign_tiers(9_999_999), 2);
        assert_eq!(assign_tiers(100_000), 2);
        assert_eq!(assign_tiers(99_999), 3);
        assert_eq!(assign_tiers(0), 3);
    }

    #[test]
    fn market_leader_truth_table() {
        let top: BTreeSet<String> = ["Big".to_string()].into_iter().collect();
        for tier in 1..=3u8 {
            for firm in ["Big", "Small"] {
                let expected = tier == 1 || firm == "Big";
                assert_eq!(flag_market_leader(tier, firm, &top), expected);
            }
        }
    }

    #[test]
    fn period_windows() {
        assert_eq!(period_for_date(d(2019, 7)), Period::Before);
        assert_eq!(period_for_date(d(2020, 2)), Period::Before);
        assert_eq!(period_for_date(d(2020, 3)), Period::After1);
        assert_eq!(period_for_date(d(2020, 4)), Period::After1);
        assert_eq!(period_for_date(d(2020, 9)), Period::After2);
        assert_eq!(period_for_date(d(2020, 12)), Period::After2);
        assert_eq!(period_for_date(d(2021, 1)), Period::After3);
        assert_eq!(period_for_date(d(2021, 4)), Period::After3);
        assert_eq!(period_for_date(d(2021, 5)), Period::After4);
        assert_eq!(period_for_date(d(2021, 7)), Period::After4);
    }

    #[test]
    fn default_waves_cover_every_period() {
        let waves = default_wave_dates();
        assert_eq!(waves.len(), 18);
        let labels: BTreeSet<Period> = waves.iter().map(|&w| period_for_date(w)).collect();
        assert_eq!(labels.len(), 5);
    }
}
