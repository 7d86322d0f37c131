use std::collections::BTreeMap;

use proptest::prelude::*;

use niche_core::cluster::{
    kmeans_fit, linspace_k, niche_histogram, niche_index, niche_score, KMeansOptions,
};
use niche_core::corpus::{assign_tiers, detect_app_death, impute_all, AppRecord, PanelDataset};
use niche_core::econometrics::{ols_fit, select_step_model, Design, StepScore};
use niche_core::equilibrium::{
    b_demand, sz_benchmark_equilibrium, sz_discrimination_equilibrium, BorensteinParams, SzParams,
};
use niche_core::linalg::DenseMatrix;
use niche_core::pipeline::PipelineConfig;
use niche_core::textprep::{build_vocabulary, prune_vocabulary, TextCleaner, TokenizedDoc};
use niche_core::vectorize::{tfidf_matrix, CsrMatrix};

fn docs_strategy() -> impl Strategy<Value = Vec<TokenizedDoc>> {
    prop::collection::vec(prop::collection::vec("[a-e]{1,2}", 1..30), 2..25).prop_map(|docs| {
        docs.into_iter()
            .enumerate()
            .map(|(i, tokens)| TokenizedDoc {
                app_id: format!("d{i}"),
                tokens,
            })
            .collect()
    })
}

fn points(rows: Vec<Vec<f64>>) -> DenseMatrix {
    DenseMatrix::from_rows(&rows)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stemming_reaches_a_fixpoint(word in "[a-z]{1,14}") {
        let c = TextCleaner::default();
        let s = c.stem(&word);
        prop_assert_eq!(c.stem(&s), s);
    }

    #[test]
    fn cleaning_is_idempotent(words in prop::collection::vec("[a-z]{2,10}", 1..40)) {
        let c = TextCleaner::default();
        let first = c.clean("x", &words.join(" ")).unwrap();
        let again = c.clean("x", &first.tokens.join(" ")).unwrap();
        prop_assert_eq!(again.tokens, first.tokens);
    }

    #[test]
    fn tfidf_is_nonnegative_and_matches_support(docs in docs_strategy()) {
        let vocab = build_vocabulary(&docs);
        let m = tfidf_matrix(&docs, &vocab).unwrap();
        prop_assert_eq!(m.matrix.n_rows(), docs.len());
        for (i, d) in docs.iter().enumerate() {
            for (j, t) in m.terms.iter().enumerate() {
                let v = m.matrix.get(i, j);
                prop_assert!(v >= 0.0);
                let df = vocab.df(t).unwrap();
                // ubiquitous terms carry zero weight
                prop_assert_eq!(v > 0.0, d.tokens.contains(t) && df < docs.len());
            }
        }
        prop_assert_eq!(CsrMatrix::from_dense(&m.matrix.to_dense()), m.matrix);
    }

    #[test]
    fn wider_thresholds_keep_more_terms(docs in docs_strategy(), lo in 0.0f64..0.5, hi in 0.5f64..1.0) {
        let vocab = build_vocabulary(&docs);
        let narrow = prune_vocabulary(&vocab, lo + 0.2, hi - 0.2);
        let wide = prune_vocabulary(&vocab, lo, hi);
        if let Ok(narrow) = narrow {
            prop_assert!(wide.is_ok());
            let wide = wide.unwrap();
            for t in narrow.terms() {
                prop_assert!(wide.df(t).is_some(), "{} dropped by wider band", t);
            }
        }
    }

    #[test]
    fn linspace_grid_is_sorted_and_bounded(lo in 2usize..10, span in 0usize..500, count in 1usize..40) {
        let hi = lo + span;
        let g = linspace_k(lo, hi, count);
        prop_assert_eq!(g[0], lo);
        prop_assert!(g.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(*g.last().unwrap() <= hi.max(lo));
        if count > 1 && span > 0 {
            prop_assert_eq!(*g.last().unwrap(), hi);
        }
    }

    #[test]
    fn niche_score_is_bounded_and_antimonotone(a in 1usize..1000, b in 1usize..1000, extra in 0usize..1000) {
        let largest = a.max(b) + extra;
        let (sa, sb) = (niche_score(a, largest), niche_score(b, largest));
        prop_assert!((0.0..1.0).contains(&sa));
        prop_assert_eq!(niche_score(largest, largest), 0.0);
        if a < b {
            prop_assert!(sa > sb);
        }
    }

    #[test]
    fn kmeans_labels_and_niche_histogram(
        rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), 8..60),
        k in 2usize..6,
        seed in 0u64..1000,
    ) {
        let x = points(rows);
        let m = kmeans_fit(&x, k, seed, &KMeansOptions { n_restarts: 2, ..Default::default() }).unwrap();
        prop_assert!(m.labels.iter().all(|&l| l < k));
        prop_assert_eq!(m.cluster_sizes().iter().sum::<usize>(), x.rows());
        let idx = niche_index(&m);
        let hist = niche_histogram(&idx.scores, 0.05).unwrap();
        prop_assert_eq!(hist.iter().sum::<usize>(), x.rows());
    }

    #[test]
    fn ols_residuals_are_orthogonal_to_the_design(
        cols in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 30), 1..4),
        y in prop::collection::vec(-10.0f64..10.0, 30),
    ) {
        let mut d = Design::with_intercept(30);
        for (j, c) in cols.into_iter().enumerate() {
            d.push(format!("x{j}"), c);
        }
        let fit = match ols_fit(&d, &y) {
            Ok(f) => f,
            Err(_) => return Ok(()),
        };
        let pred = d.predict(&fit.coefficients);
        let resid: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
        for c in &d.columns {
            let dot: f64 = c.iter().zip(&resid).map(|(a, b)| a * b).sum();
            let scale: f64 = c.iter().map(|v| v * v).sum::<f64>().sqrt() * resid.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(dot.abs() <= 1e-9 * scale.max(1.0));
        }
        let rss: f64 = resid.iter().map(|r| r * r).sum();
        prop_assert!((rss - fit.rss).abs() <= 1e-9 * rss.max(1.0));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&fit.r_squared));
    }

    #[test]
    fn chosen_step_never_exceeds_aic_minimum(aics in prop::collection::vec(-100.0f64..100.0, 1..7), margin in 0.0f64..5.0) {
        let scores: Vec<StepScore> = aics.iter().enumerate().map(|(step, &aic)| StepScore { step, aic, bic: aic }).collect();
        let c = select_step_model(&scores, margin).unwrap();
        let min = aics.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(c.chosen <= c.min_aic_step);
        prop_assert!(aics[c.chosen] <= min + margin);
    }

    #[test]
    fn tiers_are_monotone_in_installs(a in 0u64..100_000_000, b in 0u64..100_000_000) {
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(assign_tiers(hi) <= assign_tiers(lo));
    }

    #[test]
    fn death_is_a_suffix_of_unscraped_months(scraped in prop::collection::vec(any::<bool>(), 1..20)) {
        let recs: Vec<AppRecord> = scraped
            .iter()
            .enumerate()
            .map(|(m, &s)| AppRecord { scraped: s, ..AppRecord::unscraped("a", m) })
            .collect();
        let p = PanelDataset::from_series([("a".to_string(), recs)].into_iter().collect()).unwrap();
        let death = &detect_app_death(&p)["a"];
        for m in 0..scraped.len() {
            if death[m] {
                prop_assert!(!scraped[m]);
                prop_assert!(death[m..].iter().all(|&d| d));
            }
        }
        if let Some(last) = scraped.last() {
            prop_assert_eq!(death[scraped.len() - 1], !last);
        }
    }

    #[test]
    fn imputation_keeps_present_values(
        prices in prop::collection::vec(prop::option::of(0.0f64..10.0), 1..12),
        ratings in prop::collection::vec(prop::option::of(1.0f64..5.0), 1..12),
        ads in prop::collection::vec(prop::option::of(any::<bool>()), 1..12),
    ) {
        let n = prices.len().min(ratings.len()).min(ads.len());
        let recs: Vec<AppRecord> = (0..n)
            .map(|m| AppRecord {
                scraped: true,
                description: Some("text".into()),
                price: prices[m],
                installs_lb: Some(10),
                contains_ads: ads[m],
                offers_iap: Some(false),
                rating: ratings[m],
                reviews: Some(3),
                released: chrono::NaiveDate::from_ymd_opt(2019, 5, 1),
                size_mb: Some(4.0),
                adult: Some(false),
                genre_id: Some("TOOLS".into()),
                firm: Some("F".into()),
                ..AppRecord::unscraped("a", m)
            })
            .collect();
        let p = PanelDataset::from_series(BTreeMap::from([("a".to_string(), recs.clone())])).unwrap();
        let once = impute_all(&p);
        prop_assert_eq!(&impute_all(&once), &once);
        if let Some(out) = once.app("a") {
            for (b, a) in recs.iter().zip(out) {
                if b.price.is_some() { prop_assert_eq!(b.price, a.price); }
                if b.rating.is_some() { prop_assert_eq!(b.rating, a.rating); }
                if b.contains_ads.is_some() { prop_assert_eq!(b.contains_ads, a.contains_ads); }
                prop_assert!(a.price.is_some() && a.rating.is_some() && a.contains_ads.is_some());
            }
        } else {
            // deletion needs a month-0 price gap or a rating absent throughout
            prop_assert!(prices[0].is_none() || ratings[..n].iter().all(Option::is_none));
        }
    }

    #[test]
    fn loyalty_prices_cover_cost(theta in 0.5f64..=1.0, la in 0.01f64..5.0, lb in 0.01f64..5.0, c in 0.0f64..2.0) {
        let (p, pi) = sz_benchmark_equilibrium(&SzParams::new(theta, la, la, c, false).unwrap()).unwrap();
        prop_assert!(p.p_a >= p.p_b && p.p_b >= c);
        prop_assert!(pi.0 >= pi.1 && pi.1 >= 0.0);
        let (p, pi) = sz_discrimination_equilibrium(&SzParams::new(theta, la, lb, c, true).unwrap()).unwrap();
        prop_assert!(p.p_a > p.p_b && p.p_tilde_b > p.p_tilde_a);
        prop_assert!(p.p_tilde_a >= c && p.p_b >= c && pi.0 >= 0.0 && pi.1 >= 0.0);
    }

    #[test]
    fn circular_demand_slopes(
        n in 2usize..10,
        a in 0.5f64..4.0,
        c in 0.2f64..3.0,
        p1 in 0.0f64..4.0,
        p2 in 0.0f64..4.0,
        py in 0.0f64..4.0,
    ) {
        let params = BorensteinParams { n_brands: n, a, c_strength: c, ..BorensteinParams::default() };
        let (lo, hi) = (p1.min(p2), p1.max(p2));
        let q = |px: f64, py: f64| b_demand(&params, px, py).quantity;
        prop_assert!(q(hi, py) <= q(lo, py) + 1e-12);
        prop_assert!(q(py, lo) <= q(py, hi) + 1e-12);
        prop_assert!(q(lo, py) <= 2.0 * params.l / n as f64 + 1e-12);
    }

    #[test]
    fn config_round_trips_through_its_file_format(seed in any::<u64>(), min_words in 1usize..50, ratio in 0.5f64..1.0) {
        let mut cfg = PipelineConfig::default();
        cfg.set("seed", &seed.to_string()).unwrap();
        cfg.set("min-words", &min_words.to_string()).unwrap();
        cfg.set("svd-ratio", &ratio.to_string()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.conf");
        std::fs::write(&path, cfg.to_file_format()).unwrap();
        let mut back = PipelineConfig::default();
        back.apply_file(&path).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
        prop_assert_eq!(back.to_file_format(), cfg.to_file_format());
    }
}
