use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use niche_core::pipeline::{
    cmd_describe, cmd_gen_synthetic, cmd_impute, cmd_ingest, cmd_niche, cmd_regress, cmd_report,
    file_sha256, read_csv_file, PipelineConfig,
};
use niche_core::synthetic::SyntheticSpec;

fn config(data: &Path, out: &Path) -> PipelineConfig {
    PipelineConfig {
        input: Some(data.join("panel.jsonl")),
        top_firms: Some(data.join("top_firms.txt")),
        wave_dates: Some(data.join("wave_dates.txt")),
        out_dir: out.to_path_buf(),
        k_fine: vec![2, 3, 4, 5, 6, 8, 10, 12, 16, 20],
        ..PipelineConfig::default()
    }
}

fn checksums(dir: &Path) -> BTreeMap<String, String> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                file_sha256(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn synthetic_pipeline_recovers_planted_structure() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    let spec = SyntheticSpec::default();
    let manifest = cmd_gen_synthetic(&spec, &data).unwrap();
    let cfg = config(&data, &out);

    let ing = cmd_ingest(&cfg).unwrap();
    assert_eq!(
        (ing.n_apps, ing.n_months, ing.n_records),
        (manifest.n_apps, manifest.n_months, manifest.n_records)
    );
    let imp = cmd_impute(&cfg).unwrap();
    assert_eq!(imp.dropped, manifest.expected_deletions.len());

    let niche = cmd_niche(&cfg).unwrap();
    assert_eq!(niche.k, spec.n_topics);
    let excluded: BTreeSet<String> = read_csv_file(&out.join("exclusions.csv"))
        .unwrap()
        .into_iter()
        .map(|r| r["app_id"].clone())
        .collect();
    let deleted: BTreeSet<&String> = manifest.expected_deletions.iter().collect();
    for id in &manifest.expected_exclusions {
        assert!(
            excluded.contains(id) || deleted.contains(id),
            "{id} was not excluded"
        );
    }

    // each recovered cluster should be dominated by one planted topic
    let rows = read_csv_file(&out.join("niche.csv")).unwrap();
    assert_eq!(rows.len(), niche.n_documents);
    let mut table: BTreeMap<(String, usize), usize> = BTreeMap::new();
    for r in &rows {
        *table
            .entry((r["cluster"].clone(), manifest.app_topic[&r["app_id"]]))
            .or_default() += 1;
    }
    let mut majority: BTreeMap<&str, usize> = BTreeMap::new();
    for ((c, _), &n) in &table {
        let m = majority.entry(c.as_str()).or_default();
        *m = (*m).max(n);
    }
    let purity = majority.values().sum::<usize>() as f64 / rows.len() as f64;
    assert!(purity >= 0.9, "cluster purity {purity}");

    let (full, ml, mf) = cmd_describe(&cfg).unwrap();
    assert_eq!(full, ml + mf);
    assert_eq!(full, niche.n_documents);

    let reg = cmd_regress(&cfg).unwrap();
    assert!(reg.n_fits > 50);
    let fits: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("fits.json")).unwrap()).unwrap();
    let base = fits["fits"]
        .as_array()
        .unwrap()
        .iter()
        .find(|f| f["sample"] == "FULL" && f["column"] == "LogPrice step 0")
        .expect("FULL LogPrice step 0 fit");
    let terms: Vec<&str> = base["fit"]["terms"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t.as_str().unwrap())
        .collect();
    let i = terms.iter().position(|&t| t == "Niche").unwrap();
    let b = base["fit"]["coefficients"][i].as_f64().unwrap();
    let se = base["fit"]["std_errors"][i].as_f64().unwrap();
    assert!(
        (b - spec.beta_niche_log_price).abs() <= 3.0 * se,
        "Niche on LogPrice {b} (se {se}) vs planted {}",
        spec.beta_niche_log_price
    );

    let before = checksums(&out);
    let report = cmd_report(&cfg).unwrap();
    let mut after = checksums(&out);
    after.remove("report.md");
    assert_eq!(before, after, "report must not rewrite other artifacts");
    let text = std::fs::read_to_string(report).unwrap();
    assert!(text.contains(&before["niche_summary.json"]));
}

#[test]
fn commands_fail_cleanly_without_upstream_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), &tmp.path().join("out"));
    let err = cmd_regress(&cfg).unwrap_err();
    assert_eq!(err.exit_class() as u8, 3);
    assert!(
        err.to_string().contains("niche") || err.to_string().contains("impute"),
        "{err}"
    );
}
