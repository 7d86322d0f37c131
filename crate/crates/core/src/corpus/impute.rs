use std::collections::BTreeMap;

use super::{AppRecord, PanelDataset};

/// Most frequent value; ties go to the value seen first.
pub(crate) fn mode_of<T: Clone + PartialEq>(values: impl Iterator<Item = T>) -> Option<T> {
    let mut counts: Vec<(T, usize)> = Vec::new();
    for v in values {
        match counts.iter_mut().find(|(c, _)| *c == v) {
            Some((_, n)) => *n += 1,
            None => counts.push((v, 1)),
        }
    }
    let best = counts.iter().map(|(_, n)| *n).max()?;
    counts.into_iter().find(|(_, n)| *n == best).map(|(v, _)| v)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Fills every `None` slot selected by `field` with `fill`, or reports the
/// variable as absent everywhere.
fn fill_all<T: Clone>(
    recs: &mut [AppRecord],
    name: &str,
    field: impl Fn(&mut AppRecord) -> &mut Option<T>,
    fill: Option<T>,
) -> Result<(), String> {
    let any_absent = recs.iter_mut().any(|r| field(r).is_none());
    if !any_absent {
        return Ok(());
    }
    let value = fill.ok_or_else(|| format!("{name} absent in all months"))?;
    for r in recs.iter_mut() {
        let slot = field(r);
        if slot.is_none() {
            *slot = Some(value.clone());
        }
    }
    Ok(())
}

fn stable_series(recs: &[AppRecord]) -> Result<Vec<AppRecord>, String> {
    let mut out = recs.to_vec();
    let adult = mode_of(recs.iter().filter_map(|r| r.adult));
    fill_all(&mut out, "adult", |r| &mut r.adult, adult)?;
    let released = mode_of(recs.iter().filter_map(|r| r.released));
    fill_all(&mut out, "released", |r| &mut r.released, released)?;
    let genre = mode_of(recs.iter().filter_map(|r| r.genre_id.clone()));
    fill_all(&mut out, "genre_id", |r| &mut r.genre_id, genre)?;
    let size = mean(recs.iter().filter_map(|r| r.size_mb));
    fill_all(&mut out, "size_mb", |r| &mut r.size_mb, size)?;
    let rating = mean(recs.iter().filter_map(|r| r.rating));
    fill_all(&mut out, "rating", |r| &mut r.rating, rating)?;
    // reviews is a count: the mean is rounded to the nearest integer
    let reviews =
        mean(recs.iter().filter_map(|r| r.reviews.map(|v| v as f64))).map(|m| m.round() as u64);
    fill_all(&mut out, "reviews", |r| &mut r.reviews, reviews)?;
    let description = mode_of(recs.iter().filter_map(|r| r.description.clone()));
    fill_all(&mut out, "description", |r| &mut r.description, description)?;
    Ok(out)
}

/// Per-app mode (discrete) or mean (continuous) imputation of the
/// slowly-varying variables. Apps missing one of them in every month are dropped.
pub fn impute_stable(panel: &PanelDataset) -> PanelDataset {
    panel.map_apps("impute_stable", stable_series)
}

fn carry_forward<T: Clone>(
    recs: &mut [AppRecord],
    name: &str,
    field: impl Fn(&mut AppRecord) -> &mut Option<T>,
) -> Result<(), String> {
    let mut last: Option<T> = None;
    for (m, r) in recs.iter_mut().enumerate() {
        let slot = field(r);
        match slot {
            Some(v) => last = Some(v.clone()),
            None => match &last {
                Some(v) => *slot = Some(v.clone()),
                None => return Err(format!("{name} absent at month {m} with no earlier value")),
            },
        }
    }
    Ok(())
}

fn locf_series(recs: &[AppRecord]) -> Result<Vec<AppRecord>, String> {
    let mut out = recs.to_vec();
    carry_forward(&mut out, "installs_lb", |r| &mut r.installs_lb)?;
    carry_forward(&mut out, "price", |r| &mut r.price)?;
    carry_forward(&mut out, "firm", |r| &mut r.firm)?;
    Ok(out)
}

/// Last-observation-carried-forward for installs, price and firm. Leading
/// gaps are never back-filled: an app missing any of them at month 0 is dropped.
pub fn impute_locf(panel: &PanelDataset) -> PanelDataset {
    panel.map_apps("impute_locf", locf_series)
}

fn flag_rules(values: &mut [Option<bool>]) {
    // rule 1: a single observed value fills every gap
    let mut observed = values.iter().flatten();
    if let Some(&first) = observed.next() {
        if observed.all(|&v| v == first) {
            values.iter_mut().for_each(|v| *v = Some(first));
            return;
        }
    }
    // rule 2: an unobserved first month is false
    if let Some(first) = values.first_mut() {
        first.get_or_insert(false);
    }
    // rule 3: carry forward
    let mut last = None;
    for v in values.iter_mut() {
        match v {
            Some(x) => last = Some(*x),
            None => *v = last,
        }
    }
}

fn monetization_series(recs: &[AppRecord]) -> Result<Vec<AppRecord>, String> {
    let mut out = recs.to_vec();
    let mut ads: Vec<Option<bool>> = out.iter().map(|r| r.contains_ads).collect();
    let mut iap: Vec<Option<bool>> = out.iter().map(|r| r.offers_iap).collect();
    flag_rules(&mut ads);
    flag_rules(&mut iap);
    for ((r, a), i) in out.iter_mut().zip(ads).zip(iap) {
        r.contains_ads = a;
        r.offers_iap = i;
    }
    Ok(out)
}

/// The three-rule fill for the ads and in-app-purchase flags: uniform fill when
/// every observed month agrees, otherwise month 0 defaults to false and the
/// rest carries forward.
pub fn impute_monetization_flags(panel: &PanelDataset) -> PanelDataset {
    panel.map_apps("impute_monetization_flags", monetization_series)
}

/// Stable variables, then the monetization flags, then LOCF with its month-0
/// deletion rule.
pub fn impute_all(panel: &PanelDataset) -> PanelDataset {
    impute_locf(&impute_monetization_flags(&impute_stable(panel)))
}

/// Death flags for one app's scrape history: true from the first month of an
/// unbroken run of failed scrapes reaching the last month.
pub(crate) fn death_flags(scraped: &[bool]) -> Vec<bool> {
    let alive_until = scraped.iter().rposition(|&s| s).map_or(0, |p| p + 1);
    (0..scraped.len()).map(|m| m >= alive_until).collect()
}

pub fn detect_app_death(panel: &PanelDataset) -> BTreeMap<String, Vec<bool>> {
    panel
        .iter()
        .map(|(id, recs)| {
            let scraped: Vec<bool> = recs.iter().map(|r| r.scraped).collect();
            (id.to_string(), death_flags(&scraped))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn base_series(n: usize) -> Vec<AppRecord> {
        (0..n)
            .map(|m| AppRecord {
                description: Some("words".into()),
                price: Some(0.0),
                installs_lb: Some(1000),
                contains_ads: Some(true),
                offers_iap: Some(false),
                rating: Some(4.0),
                reviews: Some(10),
                released: NaiveDate::from_ymd_opt(2019, 1, 1),
                size_mb: Some(10.0),
                adult: Some(false),
                genre_id: Some("TOOLS".into()),
                firm: Some("F".into()),
                scraped: true,
                ..AppRecord::unscraped("a", m)
            })
            .collect()
    }

    fn panel_of(recs: Vec<AppRecord>) -> PanelDataset {
        PanelDataset::from_series([("a".to_string(), recs)].into_iter().collect()).unwrap()
    }

    #[test]
    fn rating_mean_fill() {
        let mut s = base_series(3);
        s[0].rating = Some(4.0);
        s[1].rating = None;
        s[2].rating = Some(4.4);
        let p = impute_stable(&panel_of(s));
        let r: Vec<f64> = p
            .app("a")
            .unwrap()
            .iter()
            .map(|r| r.rating.unwrap())
            .collect();
        assert_eq!(r[0], 4.0);
        assert!((r[1] - 4.2).abs() < 1e-12);
        assert_eq!(r[2], 4.4);
    }

    #[test]
    fn adult_mode_fill() {
        let mut s = base_series(3);
        s[2].adult = None;
        let p = impute_stable(&panel_of(s));
        assert!(p.app("a").unwrap().iter().all(|r| r.adult == Some(false)));
    }

    #[test]
    fn reviews_mean_is_rounded() {
        let mut s = base_series(3);
        s[0].reviews = Some(10);
        s[1].reviews = None;
        s[2].reviews = Some(13);
        let p = impute_stable(&panel_of(s));
        assert_eq!(p.app("a").unwrap()[1].reviews, Some(12));
    }

    #[test]
    fn complete_panel_unchanged() {
        let p = panel_of(base_series(4));
        assert_eq!(impute_all(&p), p);
    }

    #[test]
    fn stable_variable_absent_everywhere_drops_app() {
        let mut s = base_series(2);
        s.iter_mut().for_each(|r| r.size_mb = None);
        let p = impute_stable(&panel_of(s));
        assert_eq!(p.n_apps(), 0);
        assert_eq!(p.deletions[0].reason, "size_mb absent in all months");
    }

    #[test]
    fn locf_carries_price_forward() {
        let mut s = base_series(3);
        s[0].price = Some(0.99);
        s[1].price = None;
        s[2].price = None;
        let p = impute_locf(&panel_of(s));
        assert!(p.app("a").unwrap().iter().all(|r| r.price == Some(0.99)));
    }

    #[test]
    fn locf_leading_gap_deletes_app() {
        let mut s = base_series(3);
        s[0].price = None;
        s[1].price = Some(1.99);
        s[2].price = None;
        let p = impute_locf(&panel_of(s));
        assert_eq!(p.n_apps(), 0);
        assert_eq!(p.deletions.len(), 1);
    }

    fn flags(v: &[Option<bool>]) -> Vec<Option<bool>> {
        let mut v = v.to_vec();
        flag_rules(&mut v);
        v
    }

    #[test]
    fn monetization_rules() {
        let (t, f) = (Some(true), Some(false));
        assert_eq!(flags(&[None, t, t]), vec![t, t, t]);
        assert_eq!(flags(&[None, t, f]), vec![f, t, f]);
        assert_eq!(flags(&[None, None, t, None, f]), vec![f, f, t, t, f]);
        assert_eq!(flags(&[None, None]), vec![f, f]);
    }

    #[test]
    fn death_examples() {
        let (t, f) = (true, false);
        assert_eq!(death_flags(&[t, t, f, t, f, f]), vec![f, f, f, f, t, t]);
        assert_eq!(death_flags(&[t, t, t]), vec![f, f, f]);
        assert_eq!(death_flags(&[t, f, f, f]), vec![f, t, t, t]);
    }
}
