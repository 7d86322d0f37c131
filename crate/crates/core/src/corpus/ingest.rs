use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::{AppRecord, Deletion, PanelDataset};
use crate::{NicheError, Result};

/// Reads one JSON object per line into a dense panel. Lines starting with `#`
/// are comments.
///
/// Months an app is missing from are filled with unscraped records. Apps with
/// no month-0 record are dropped, since the app id universe is fixed by the
/// first wave.
pub fn ingest_jsonl(path: &Path) -> Result<PanelDataset> {
    let file = File::open(path).map_err(|e| NicheError::io(path, e))?;
    ingest_reader(BufReader::new(file), path)
}

pub fn ingest_reader<R: BufRead>(reader: R, origin: &Path) -> Result<PanelDataset> {
    let mut by_app: BTreeMap<String, BTreeMap<usize, AppRecord>> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| NicheError::io(origin, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let rec: AppRecord = serde_json::from_str(&line).map_err(|e| NicheError::Parse {
            path: origin.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        validate(&rec).map_err(|message| NicheError::Parse {
            path: origin.to_path_buf(),
            line: line_no,
            message,
        })?;
        let months = by_app.entry(rec.app_id.clone()).or_default();
        if months.contains_key(&rec.month) {
            return Err(NicheError::Data(format!(
                "duplicate record for app {} month {} (line {line_no})",
                rec.app_id, rec.month
            )));
        }
        months.insert(rec.month, rec);
    }

    let n_months = by_app
        .values()
        .filter_map(|m| m.keys().next_back())
        .max()
        .map_or(0, |m| m + 1);
    let mut series = BTreeMap::new();
    let mut deletions = Vec::new();
    for (id, mut months) in by_app {
        if !months.contains_key(&0) {
            log::warn!("app {id} has no month-0 record; dropped");
            deletions.push(Deletion {
                app_id: id,
                reason: "absent from first wave".into(),
            });
            continue;
        }
        let dense: Vec<AppRecord> = (0..n_months)
            .map(|m| {
                months
                    .remove(&m)
                    .unwrap_or_else(|| AppRecord::unscraped(&id, m))
            })
            .collect();
        series.insert(id, dense);
    }
    let mut panel = PanelDataset::from_series(series)?;
    panel.deletions = deletions;
    Ok(panel)
}

fn validate(rec: &AppRecord) -> std::result::Result<(), String> {
    let nonneg = |name: &str, v: Option<f64>| match v {
        Some(x) if !(x.is_finite() && x >= 0.0) => {
            Err(format!("{name} must be nonnegative, got {x}"))
        }
        _ => Ok(()),
    };
    nonneg("price", rec.price)?;
    nonneg("rating", rec.rating)?;
    nonneg("size_mb", rec.size_mb)?;
    if let Some(r) = rec.rating {
        if r > 5.0 {
            return Err(format!("rating must lie in [0,5], got {r}"));
        }
    }
    if rec.app_id.is_empty() {
        return Err("empty app_id".into());
    }
    Ok(())
}

/// Writes the panel back out as JSONL, apps in id order and months ascending.
pub fn write_jsonl<W: Write>(panel: &PanelDataset, mut out: W) -> std::io::Result<()> {
    for rec in panel.records() {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// One firm name per line; blank lines ignored.
pub fn read_top_firms(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| NicheError::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// One ISO-8601 date per line, month 0 first. Lines starting with `#` are skipped.
pub fn read_wave_dates(path: &Path) -> Result<Vec<NaiveDate>> {
    let text = std::fs::read_to_string(path).map_err(|e| NicheError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            NaiveDate::parse_from_str(l.trim(), "%Y-%m-%d").map_err(|e| NicheError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn ingest_str(s: &str) -> Result<PanelDataset> {
        ingest_reader(Cursor::new(s.as_bytes()), Path::new("<mem>"))
    }

    #[test]
    fn empty_input_gives_empty_panel() {
        let p = ingest_str("").unwrap();
        assert_eq!(p.n_apps(), 0);
        assert_eq!(p.n_months(), 0);
    }

    #[test]
    fn single_full_line_round_trips() {
        let line = r#"{"app_id":"com.a","month":0,"scraped":true,"description":"hello world","price":0.99,"installs_lb":1000,"contains_ads":true,"offers_iap":false,"rating":4.5,"reviews":12,"released":"2018-05-01","size_mb":12.5,"adult":false,"genre_id":"TOOLS","firm":"Acme"}"#;
        let p = ingest_str(line).unwrap();
        assert_eq!(p.n_apps(), 1);
        assert_eq!(p.n_months(), 1);
        let rec = &p.app("com.a").unwrap()[0];
        assert_eq!(rec.price, Some(0.99));
        assert_eq!(rec.installs_lb, Some(1000));
        assert_eq!(rec.released, NaiveDate::from_ymd_opt(2018, 5, 1));
        assert_eq!(rec.firm.as_deref(), Some("Acme"));
        let mut buf = Vec::new();
        write_jsonl(&p, &mut buf).unwrap();
        let again = ingest_str(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(again, p);
    }

    #[test]
    fn null_and_missing_keys_are_absent_and_unknown_keys_ignored() {
        let p = ingest_str(r#"{"app_id":"x","month":0,"scraped":true,"price":null,"extra":[1,2]}"#)
            .unwrap();
        let rec = &p.app("x").unwrap()[0];
        assert_eq!(rec.price, None);
        assert_eq!(rec.rating, None);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err =
            ingest_str("{\"app_id\":\"x\",\"month\":0,\"scraped\":true}\n{oops}\n").unwrap_err();
        match err {
            NicheError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_key_is_data_error() {
        let s = "{\"app_id\":\"x\",\"month\":0,\"scraped\":true}\n{\"app_id\":\"x\",\"month\":0,\"scraped\":false}\n";
        assert!(matches!(ingest_str(s), Err(NicheError::Data(_))));
    }

    #[test]
    fn gaps_become_unscraped_and_late_apps_are_dropped() {
        let s = "{\"app_id\":\"a\",\"month\":0,\"scraped\":true}\n{\"app_id\":\"a\",\"month\":2,\"scraped\":true}\n{\"app_id\":\"b\",\"month\":1,\"scraped\":true}\n";
        let p = ingest_str(s).unwrap();
        assert_eq!(p.n_apps(), 1);
        assert_eq!(p.n_months(), 3);
        assert!(!p.app("a").unwrap()[1].scraped);
        assert_eq!(p.deletions.len(), 1);
        assert_eq!(p.deletions[0].app_id, "b");
    }

    #[test]
    fn negative_price_rejected() {
        let s = "{\"app_id\":\"a\",\"month\":0,\"scraped\":true,\"price\":-1}\n";
        assert!(matches!(
            ingest_str(s),
            Err(NicheError::Parse { line: 1, .. })
        ));
    }
}
