//! Synthetic fixtures: app panels with planted topics and effects, and
//! regression-ready rows with known coefficients.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{
    default_wave_dates, period_for_date, AppRecord, Category, DerivedRow, PanelDataset, Variable,
};
use crate::textprep::TextCleaner;
use crate::{NicheError, Result};

/// Knobs for [`generate_panel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_apps: usize,
    pub n_months: usize,
    pub n_topics: usize,
    /// Topic `t` has expected share proportional to `topic_decay^t`.
    pub topic_decay: f64,
    pub words_per_topic: usize,
    /// Share of description tokens drawn from the app's own topic pool.
    pub topic_purity: f64,
    pub min_doc_words: usize,
    pub max_doc_words: usize,
    /// Weights for game, business, social, medical, lifestyle.
    pub category_weights: [f64; 5],
    pub log_price_intercept: f64,
    /// Planted effect of the topic niche score on ln(price + 1).
    pub beta_niche_log_price: f64,
    /// Planted effect of ln(reviews + 1) on ln(price + 1).
    pub beta_reviews_log_price: f64,
    pub log_price_noise: f64,
    /// Per-field probability that a month after the first is absent.
    pub missing_rate: f64,
    /// Apps whose price is absent at month 0 (dropped by imputation).
    pub n_month0_gaps: usize,
    /// Apps that stop being scraped part-way through.
    pub n_dying: usize,
    /// Apps that change developer once.
    pub n_acquired: usize,
    pub n_firms: usize,
    pub n_top_firms: usize,
    /// Apps with a description under the word floor.
    pub n_short: usize,
    /// Apps with a non-Latin description.
    pub n_non_english: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_apps: 200,
            n_months: 18,
            n_topics: 3,
            topic_decay: 0.6,
            words_per_topic: 12,
            topic_purity: 0.95,
            min_doc_words: 40,
            max_doc_words: 120,
            category_weights: [0.3, 0.2, 0.2, 0.1, 0.2],
            log_price_intercept: 1.5,
            beta_niche_log_price: -0.3,
            beta_reviews_log_price: 0.05,
            log_price_noise: 0.3,
            missing_rate: 0.03,
            n_month0_gaps: 2,
            n_dying: 10,
            n_acquired: 8,
            n_firms: 60,
            n_top_firms: 6,
            n_short: 2,
            n_non_english: 1,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    /// No absent fields, no gaps, no deaths: imputation is the identity.
    pub fn complete(mut self) -> Self {
        self.missing_rate = 0.0;
        self.n_month0_gaps = 0;
        self.n_dying = 0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let p = |m: String| Err(NicheError::Parameter(m));
        if self.n_apps == 0 || self.n_months == 0 || self.n_topics == 0 || self.words_per_topic == 0
        {
            return p("apps, months, topics and words per topic must be positive".into());
        }
        if self.n_firms == 0 || self.n_top_firms > self.n_firms {
            return p("need at least one firm and no more top firms than firms".into());
        }
        if self.min_doc_words == 0 || self.min_doc_words > self.max_doc_words {
            return p("document length bounds must satisfy 0 < min <= max".into());
        }
        if !(0.0..=1.0).contains(&self.topic_purity) || !(0.0..1.0).contains(&self.missing_rate) {
            return p("topic purity and missing rate must be probabilities".into());
        }
        if !(self.topic_decay > 0.0 && self.topic_decay <= 1.0) {
            return p("topic decay must lie in (0, 1]".into());
        }
        if self.category_weights.iter().any(|w| *w < 0.0)
            || self.category_weights.iter().sum::<f64>() <= 0.0
        {
            return p("category weights must be nonnegative and not all zero".into());
        }
        let special = self.n_month0_gaps + self.n_short + self.n_non_english;
        if special > self.n_apps {
            return p(format!(
                "{special} special apps requested but only {} apps",
                self.n_apps
            ));
        }
        if self.n_dying > self.n_apps || self.n_acquired > self.n_apps {
            return p("more dying or acquired apps than apps".into());
        }
        Ok(())
    }
}

/// Ground truth written next to a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: SyntheticSpec,
    pub n_apps: usize,
    pub n_months: usize,
    pub n_records: usize,
    pub wave_dates: Vec<NaiveDate>,
    pub top_firms: Vec<String>,
    /// Apps per topic.
    pub topic_sizes: Vec<usize>,
    /// `1 - size / largest` per topic.
    pub topic_niche: Vec<f64>,
    pub app_topic: BTreeMap<String, usize>,
    pub app_category: BTreeMap<String, String>,
    /// Apps imputation must drop.
    pub expected_deletions: Vec<String>,
    /// Apps text preparation must exclude.
    pub expected_exclusions: Vec<String>,
    pub dying_apps: Vec<String>,
    pub acquired_apps: Vec<String>,
    pub absent_fields: usize,
}

/// A generated panel and its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub records: Vec<AppRecord>,
    pub manifest: Manifest,
}

impl SyntheticCorpus {
    pub fn panel(&self) -> Result<PanelDataset> {
        let mut series: BTreeMap<String, Vec<AppRecord>> = BTreeMap::new();
        for r in &self.records {
            series.entry(r.app_id.clone()).or_default().push(r.clone());
        }
        let top: BTreeSet<String> = self.manifest.top_firms.iter().cloned().collect();
        Ok(PanelDataset::from_series(series)?
            .with_wave_dates(self.manifest.wave_dates.clone())?
            .with_top_firms(top))
    }
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const SHARED_WORDS: [&str; 8] = ["app", "free", "new", "best", "easy", "fun", "great", "play"];
const NON_LATIN: [&str; 6] = [
    "приложение",
    "игра",
    "новый",
    "лучший",
    "бесплатно",
    "простой",
];

const GENRES: [(Category, [&str; 2]); 5] = [
    (Category::Game, ["GAME_ACTION", "GAME_PUZZLE"]),
    (Category::Business, ["TOOLS", "FINANCE"]),
    (Category::Social, ["SOCIAL", "DATING"]),
    (Category::Medical, ["MEDICAL", "HEALTH_AND_FITNESS"]),
    (Category::Lifestyle, ["LIFESTYLE", "TRAVEL_AND_LOCAL"]),
];

/// Pseudo-words that the stemmer leaves unchanged, unique across the call.
fn word_pools(rng: &mut ChaCha8Rng, n_pools: usize, per_pool: usize) -> Vec<Vec<String>> {
    let cleaner = TextCleaner::default();
    let mut seen: BTreeSet<String> = SHARED_WORDS.iter().map(|w| w.to_string()).collect();
    let mut pools = Vec::with_capacity(n_pools);
    for _ in 0..n_pools {
        let mut pool = Vec::with_capacity(per_pool);
        while pool.len() < per_pool {
            let syllables = rng.gen_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push(*CONSONANTS.choose(rng).unwrap() as char);
                w.push(*VOWELS.choose(rng).unwrap() as char);
            }
            w.push(*CONSONANTS.choose(rng).unwrap() as char);
            if cleaner.stem(&w) == w && seen.insert(w.clone()) {
                pool.push(w);
            }
        }
        pools.push(pool);
    }
    pools
}

fn weighted_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn description(
    rng: &mut ChaCha8Rng,
    own: &[String],
    background: &[String],
    purity: f64,
    len: usize,
) -> String {
    let mut words: Vec<&str> = Vec::with_capacity(len + 2);
    words.extend(SHARED_WORDS.choose_multiple(rng, 2).copied());
    for _ in 0..len {
        let w = if rng.gen::<f64>() < purity {
            own.choose(rng).unwrap()
        } else {
            background.choose(rng).unwrap()
        };
        words.push(w);
    }
    words.join(" ")
}

/// Draws a topic per app from geometric weights; every topic gets at least one app.
fn assign_topics(rng: &mut ChaCha8Rng, n_apps: usize, n_topics: usize, decay: f64) -> Vec<usize> {
    let weights: Vec<f64> = (0..n_topics).map(|t| decay.powi(t as i32)).collect();
    let total: f64 = weights.iter().sum();
    // deterministic quotas by largest remainder, then shuffled
    let raw: Vec<f64> = weights.iter().map(|w| w / total * n_apps as f64).collect();
    let mut quota: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..n_topics).collect();
    order.sort_by(|&a, &b| {
        (raw[b] - raw[b].floor())
            .total_cmp(&(raw[a] - raw[a].floor()))
            .then(a.cmp(&b))
    });
    let mut left = n_apps - quota.iter().sum::<usize>();
    for &t in order.iter().cycle() {
        if left == 0 {
            break;
        }
        quota[t] += 1;
        left -= 1;
    }
    if n_apps >= n_topics {
        for t in 0..n_topics {
            while quota[t] == 0 {
                let donor = (0..n_topics)
                    .max_by_key(|&u| (quota[u], std::cmp::Reverse(u)))
                    .unwrap();
                quota[donor] -= 1;
                quota[t] += 1;
            }
        }
    }
    let mut topics: Vec<usize> = quota
        .iter()
        .enumerate()
        .flat_map(|(t, &q)| std::iter::repeat_n(t, q))
        .collect();
    topics.shuffle(rng);
    topics
}

/// Generates an app panel with planted topics, categories, price effects and
/// missingness. The same spec always yields the same corpus.
pub fn generate_panel(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_apps;
    let t_len = spec.n_months;
    let mut wave_dates = default_wave_dates();
    while wave_dates.len() < t_len {
        let last = *wave_dates.last().unwrap();
        wave_dates.push(last + Duration::days(30));
    }
    wave_dates.truncate(t_len);

    let mut pools = word_pools(&mut rng, spec.n_topics + 1, spec.words_per_topic);
    // the extra pool is the background vocabulary shared by all topics, made wider
    let mut background = pools.pop().unwrap();
    let extra: Vec<String> = word_pools(&mut rng, 4, spec.words_per_topic)
        .into_iter()
        .flatten()
        .filter(|w| pools.iter().all(|p| !p.contains(w)) && !background.contains(w))
        .collect();
    background.extend(extra);

    let topics = assign_topics(&mut rng, n, spec.n_topics, spec.topic_decay);
    let mut topic_sizes = vec![0usize; spec.n_topics];
    for &t in &topics {
        topic_sizes[t] += 1;
    }
    let largest = *topic_sizes.iter().max().unwrap();
    let topic_niche: Vec<f64> = topic_sizes
        .iter()
        .map(|&s| {
            if largest == 0 {
                0.0
            } else {
                1.0 - s as f64 / largest as f64
            }
        })
        .collect();

    let firms: Vec<String> = (0..spec.n_firms)
        .map(|i| format!("Studio {i:03}"))
        .collect();
    let top_firms: Vec<String> = firms[..spec.n_top_firms].to_vec();

    let ids: Vec<String> = (0..n).map(|i| format!("app{i:04}")).collect();
    // special roles on disjoint app index ranges, assigned by a shuffled order
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut take = |k: usize| {
        let s: BTreeSet<usize> = order[cursor..cursor + k].iter().copied().collect();
        cursor += k;
        s
    };
    let gap_apps = take(spec.n_month0_gaps);
    let short_apps = take(spec.n_short);
    let foreign_apps = take(spec.n_non_english);
    let mut pick = |k: usize| -> BTreeSet<usize> {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        all.into_iter().take(k).collect()
    };
    let dying = pick(spec.n_dying);
    let acquired = pick(spec.n_acquired);

    let normal: Normal<f64> = Normal::new(0.0, 1.0).expect("unit normal");
    let start = NaiveDate::from_ymd_opt(2012, 1, 1).expect("valid date");
    let mut records = Vec::with_capacity(n * t_len);
    let mut app_topic = BTreeMap::new();
    let mut app_category = BTreeMap::new();
    let mut absent_fields = 0usize;

    for (i, id) in ids.iter().enumerate() {
        let topic = topics[i];
        let cat_idx = weighted_index(&mut rng, &spec.category_weights);
        let (category, genres) = GENRES[cat_idx];
        let genre = genres[rng.gen_range(0..2)].to_string();
        app_topic.insert(id.clone(), topic);
        app_category.insert(id.clone(), category.name().to_string());

        let len = rng.gen_range(spec.min_doc_words..=spec.max_doc_words);
        let text = if short_apps.contains(&i) {
            description(&mut rng, &pools[topic], &background, spec.topic_purity, 5)
        } else if foreign_apps.contains(&i) {
            (0..len)
                .map(|_| *NON_LATIN.choose(&mut rng).unwrap())
                .collect::<Vec<_>>()
                .join(" ")
        } else {
            description(&mut rng, &pools[topic], &background, spec.topic_purity, len)
        };

        let firm0 = if rng.gen::<f64>() < 0.15 && spec.n_top_firms > 0 {
            top_firms[rng.gen_range(0..spec.n_top_firms)].clone()
        } else {
            firms[rng.gen_range(0..spec.n_firms)].clone()
        };
        let switch_month = acquired
            .contains(&i)
            .then(|| rng.gen_range(1..t_len.max(2)));
        let firm1 = firms[rng.gen_range(0..spec.n_firms)].clone();
        let death_month = dying
            .contains(&i)
            .then(|| rng.gen_range((t_len / 2).max(1)..t_len.max(2)));

        let released = start + Duration::days(rng.gen_range(0..2700));
        let size_mb = (3.0 + 1.0 * normal.sample(&mut rng)).exp().max(0.5);
        let adult = rng.gen::<f64>() < 0.1;
        let base_rating: f64 = (4.0 + 0.4 * normal.sample(&mut rng)).clamp(1.0, 5.0);
        let log_installs0 = 9.0 + 2.5 * normal.sample(&mut rng);
        let growth = 0.02 + 0.02 * normal.sample(&mut rng);
        let ads = rng.gen::<f64>() < 0.5;
        let iap = rng.gen::<f64>() < 0.4;

        let log_reviews0 = (log_installs0 - 4.0 + 0.8 * normal.sample(&mut rng)).max(0.0);
        let log_price = spec.log_price_intercept
            + spec.beta_niche_log_price * topic_niche[topic]
            + spec.beta_reviews_log_price * log_reviews0
            + spec.log_price_noise * normal.sample(&mut rng);
        let price = (log_price.exp() - 1.0).max(0.0);
        let price = (price * 100.0).round() / 100.0;

        for m in 0..t_len {
            let scraped = death_month.is_none_or(|d| m < d);
            if !scraped {
                records.push(AppRecord::unscraped(id, m));
                continue;
            }
            let li = log_installs0 + growth * m as f64;
            let installs = bracket(li.exp());
            let reviews = (log_reviews0 + growth * m as f64).exp().round() as u64;
            let firm = match switch_month {
                Some(s) if m >= s => firm1.clone(),
                _ => firm0.clone(),
            };
            let mut r = AppRecord {
                app_id: id.clone(),
                month: m,
                scraped: true,
                description: Some(text.clone()),
                price: Some(price),
                installs_lb: Some(installs),
                contains_ads: Some(ads),
                offers_iap: Some(iap),
                rating: Some(
                    ((base_rating + 0.05 * normal.sample(&mut rng)).clamp(0.0, 5.0) * 10.0).round()
                        / 10.0,
                ),
                reviews: Some(reviews),
                released: Some(released),
                size_mb: Some((size_mb * 10.0).round() / 10.0),
                adult: Some(adult),
                genre_id: Some(genre.clone()),
                firm: Some(firm),
            };
            if m == 0 && gap_apps.contains(&i) {
                r.price = None;
                absent_fields += 1;
            }
            if m > 0 && spec.missing_rate > 0.0 {
                absent_fields += blank_fields(&mut rng, &mut r, spec.missing_rate);
            }
            records.push(r);
        }
    }

    let name = |s: &BTreeSet<usize>| s.iter().map(|&i| ids[i].clone()).collect::<Vec<_>>();
    let mut expected_exclusions = name(&short_apps);
    expected_exclusions.extend(name(&foreign_apps));
    expected_exclusions.retain(|a| !gap_apps.iter().any(|&g| ids[g] == *a));
    expected_exclusions.sort();
    let manifest = Manifest {
        spec: spec.clone(),
        n_apps: n,
        n_months: t_len,
        n_records: records.len(),
        wave_dates,
        top_firms,
        topic_sizes,
        topic_niche,
        app_topic,
        app_category,
        expected_deletions: name(&gap_apps),
        expected_exclusions,
        dying_apps: name(&dying),
        acquired_apps: name(&acquired),
        absent_fields,
    };
    Ok(SyntheticCorpus { records, manifest })
}

/// Store install brackets: 1, 5, 10, 50, 100, ... up to 5e9.
fn bracket(x: f64) -> u64 {
    let mut lb = 0u64;
    let mut b = 1u64;
    while b <= 5_000_000_000 {
        for mult in [1, 5] {
            if (b * mult) as f64 <= x {
                lb = b * mult;
            }
        }
        b *= 10;
    }
    lb
}

/// Blanks each imputable field with probability `rate`; returns how many.
fn blank_fields(rng: &mut ChaCha8Rng, r: &mut AppRecord, rate: f64) -> usize {
    let mut count = 0;
    let mut hit = |rng: &mut ChaCha8Rng| {
        let h = rng.gen::<f64>() < rate;
        count += h as usize;
        h
    };
    if hit(rng) {
        r.description = None;
    }
    if hit(rng) {
        r.price = None;
    }
    if hit(rng) {
        r.installs_lb = None;
    }
    if hit(rng) {
        r.contains_ads = None;
    }
    if hit(rng) {
        r.offers_iap = None;
    }
    if hit(rng) {
        r.rating = None;
    }
    if hit(rng) {
        r.reviews = None;
    }
    if hit(rng) {
        r.released = None;
    }
    if hit(rng) {
        r.size_mb = None;
    }
    if hit(rng) {
        r.adult = None;
    }
    if hit(rng) {
        r.genre_id = None;
    }
    if hit(rng) {
        r.firm = None;
    }
    count
}

/// Data-generating process for regression rows. Controls and Niche are drawn
/// independently except for the planted correlation between logReviews and
/// Rating; the outcome is linear in them plus Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct RowModel {
    pub n_apps: usize,
    /// One row per app and month; 1 gives a cross-section.
    pub n_months: usize,
    pub outcome: Variable,
    pub intercept: f64,
    pub beta_niche: f64,
    pub controls: Vec<(Variable, f64)>,
    /// Coefficients on the period x Niche products, by non-baseline period.
    pub period_niche: [f64; 4],
    pub noise_sd: f64,
    pub reviews_rating_corr: f64,
    /// Share of apps flagged as market leaders.
    pub leader_share: f64,
}

impl RowModel {
    pub fn new(outcome: Variable, n_apps: usize) -> Self {
        RowModel {
            n_apps,
            n_months: 1,
            outcome,
            intercept: 1.0,
            beta_niche: 0.0,
            controls: Vec::new(),
            period_niche: [0.0; 4],
            noise_sd: 1.0,
            reviews_rating_corr: 0.0,
            leader_share: 0.2,
        }
    }
}

fn set_outcome(row: &mut DerivedRow, var: Variable, v: f64) -> Result<()> {
    match var {
        Variable::LogPrice => row.log_price = v,
        Variable::LogInstalls => row.log_installs = v,
        Variable::LogReviews => row.log_reviews = v,
        Variable::Rating => row.rating = v,
        Variable::AppSize => row.size_mb = v,
        other => {
            return Err(NicheError::Parameter(format!(
                "{other} cannot be a synthetic continuous outcome"
            )))
        }
    }
    Ok(())
}

/// Rows drawn from a [`RowModel`]. Deterministic in `seed`.
pub fn synthetic_rows(model: &RowModel, seed: u64) -> Result<Vec<DerivedRow>> {
    if model.n_apps == 0 || model.n_months == 0 {
        return Err(NicheError::Parameter(
            "row model needs apps and months".into(),
        ));
    }
    if !(-1.0..=1.0).contains(&model.reviews_rating_corr) {
        return Err(NicheError::Parameter(
            "correlation must lie in [-1, 1]".into(),
        ));
    }
    if model.controls.iter().any(|(v, _)| *v == model.outcome) {
        return Err(NicheError::Parameter(
            "outcome cannot also be a control".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal: Normal<f64> = Normal::new(0.0, 1.0).expect("unit normal");
    let waves = default_wave_dates();
    let rho = model.reviews_rating_corr;
    let mut rows = Vec::with_capacity(model.n_apps * model.n_months);
    for a in 0..model.n_apps {
        let category = Category::ALL[rng.gen_range(0..Category::ALL.len())];
        let niche: f64 = rng.gen();
        let leader = rng.gen::<f64>() < model.leader_share;
        let adult = rng.gen::<f64>() < 0.1;
        let size = (3.0 + normal.sample(&mut rng)).exp();
        let days = rng.gen_range(30..3000i64);
        for m in 0..model.n_months {
            let z1 = normal.sample(&mut rng);
            let z2 = rho * z1 + (1.0 - rho * rho).sqrt() * normal.sample(&mut rng);
            let period = period_for_date(waves[m % waves.len()]);
            let mut row = DerivedRow {
                app_id: format!("app{a:05}"),
                month: m,
                niche,
                log_price: 0.0,
                log_installs: 0.0,
                log_reviews: 6.0 + 2.0 * z1,
                rating: 4.0 + 0.4 * z2,
                days_since_launch: days + 30 * m as i64,
                size_mb: size,
                adult,
                in_app_ads: false,
                in_app_purchases: false,
                category,
                tier: if leader { 1 } else { 3 },
                top_firm: false,
                market_leader: leader,
                period,
                app_death: false,
                change_to_tier1: false,
                change_to_top_firm: false,
                merger_acquisition: false,
            };
            let mut y = model.intercept + model.beta_niche * niche;
            for (v, b) in &model.controls {
                y += b * v.value(&row);
            }
            if let Some(i) = crate::corpus::Period::NON_BASELINE
                .iter()
                .position(|p| *p == period)
            {
                y += model.period_niche[i] * niche;
            }
            y += model.noise_sd * normal.sample(&mut rng);
            set_outcome(&mut row, model.outcome, y)?;
            rows.push(row);
        }
    }
    Ok(rows)
}
