use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::corpus::DEFAULT_ANCHOR;
use crate::econometrics::{SeMode, StarThresholds};
use crate::textprep::check_thresholds;
use crate::{NicheError, Result};

/// Every tunable of the pipeline. Keys in config files and CLI flags use the
/// kebab-case field names (`min-words`, `svd-ratio`, ...).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub top_firms: Option<PathBuf>,
    /// One ISO date per month; the built-in 18-wave calendar otherwise.
    pub wave_dates: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub min_words: usize,
    pub max_words: usize,
    pub threshold_min: f64,
    pub threshold_max: f64,
    pub svd_ratio: f64,
    pub svd_max_rank: usize,
    pub svd_centered: bool,
    /// Elbow grid; `linspace(2, N - 1, 5)` when empty.
    pub k_coarse: Vec<usize>,
    /// Silhouette grid; 30 points on `[2, k_coarse[1]]` when empty.
    pub k_fine: Vec<usize>,
    pub chosen_k: Option<usize>,
    pub kmeans_restarts: usize,
    pub seed: u64,
    pub anchor_date: NaiveDate,
    pub se_mode: SeMode,
    pub star_thresholds: [f64; 3],
    /// Month whose rows form the cross-section and whose descriptions are clustered.
    pub cross_section_month: usize,
    pub step_margin: f64,
    pub length_bin: usize,
    pub hist_bin: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: None,
            top_firms: None,
            wave_dates: None,
            out_dir: PathBuf::from("out"),
            min_words: 20,
            max_words: 400,
            threshold_min: 0.004,
            threshold_max: 0.7,
            svd_ratio: 0.95,
            svd_max_rank: 1000,
            svd_centered: false,
            k_coarse: Vec::new(),
            k_fine: Vec::new(),
            chosen_k: None,
            kmeans_restarts: 10,
            seed: 42,
            anchor_date: NaiveDate::from_ymd_opt(
                DEFAULT_ANCHOR.0,
                DEFAULT_ANCHOR.1,
                DEFAULT_ANCHOR.2,
            )
            .expect("valid anchor"),
            se_mode: SeMode::Classical,
            star_thresholds: StarThresholds::default().0,
            cross_section_month: 0,
            step_margin: 2.0,
            length_bin: 25,
            hist_bin: 0.05,
        }
    }
}

/// Keys that name files rather than tunables; excluded from the config hash.
pub const PATH_KEYS: [&str; 4] = ["input", "top-firms", "wave-dates", "out-dir"];

/// Environment variables that may override path keys.
pub const ENV_OVERRIDES: [(&str, &str); 4] = [
    ("NICHE_INPUT", "input"),
    ("NICHE_TOP_FIRMS", "top-firms"),
    ("NICHE_WAVE_DATES", "wave-dates"),
    ("NICHE_OUT_DIR", "out-dir"),
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| NicheError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let path = || (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "input" => self.input = path(),
            "top-firms" => self.top_firms = path(),
            "wave-dates" => self.wave_dates = path(),
            "out-dir" => self.out_dir = PathBuf::from(v),
            "min-words" => self.min_words = parse_num(key, v)?,
            "max-words" => self.max_words = parse_num(key, v)?,
            "threshold-min" => self.threshold_min = parse_num(key, v)?,
            "threshold-max" => self.threshold_max = parse_num(key, v)?,
            "svd-ratio" => self.svd_ratio = parse_num(key, v)?,
            "svd-max-rank" => self.svd_max_rank = parse_num(key, v)?,
            "svd-centered" => self.svd_centered = parse_num(key, v)?,
            "k-coarse" => self.k_coarse = parse_list(key, v)?,
            "k-fine" => self.k_fine = parse_list(key, v)?,
            "chosen-k" => {
                self.chosen_k = if v.is_empty() || v == "auto" {
                    None
                } else {
                    Some(parse_num(key, v)?)
                }
            }
            "kmeans-restarts" => self.kmeans_restarts = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "anchor-date" => {
                self.anchor_date = NaiveDate::parse_from_str(v, "%Y-%m-%d")
                    .map_err(|e| NicheError::Config(format!("anchor-date: {e}")))?
            }
            "se-mode" => {
                self.se_mode = SeMode::parse(v)
                    .ok_or_else(|| NicheError::Config(format!("se-mode: unknown mode {v:?}")))?
            }
            "star-thresholds" => {
                let t: Vec<f64> = parse_list(key, v)?;
                self.star_thresholds = t
                    .try_into()
                    .map_err(|_| NicheError::Config("star-thresholds needs three values".into()))?;
            }
            "cross-section-month" => self.cross_section_month = parse_num(key, v)?,
            "step-margin" => self.step_margin = parse_num(key, v)?,
            "length-bin" => self.length_bin = parse_num(key, v)?,
            "hist-bin" => self.hist_bin = parse_num(key, v)?,
            other => return Err(NicheError::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file. Blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| NicheError::io(path, e))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| NicheError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected key = value".into(),
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Path overrides from the environment, e.g. `NICHE_INPUT`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        for (var, key) in ENV_OVERRIDES {
            if let Some(v) = lookup(var) {
                self.set(key, &v)?;
            }
        }
        Ok(())
    }

    /// All keys with their current values, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let p = |x: &Option<PathBuf>| {
            x.as_ref()
                .map_or(String::new(), |p| p.display().to_string())
        };
        vec![
            ("input", p(&self.input)),
            ("top-firms", p(&self.top_firms)),
            ("wave-dates", p(&self.wave_dates)),
            ("out-dir", self.out_dir.display().to_string()),
            ("min-words", self.min_words.to_string()),
            ("max-words", self.max_words.to_string()),
            ("threshold-min", self.threshold_min.to_string()),
            ("threshold-max", self.threshold_max.to_string()),
            ("svd-ratio", self.svd_ratio.to_string()),
            ("svd-max-rank", self.svd_max_rank.to_string()),
            ("svd-centered", self.svd_centered.to_string()),
            ("k-coarse", join(&self.k_coarse)),
            ("k-fine", join(&self.k_fine)),
            (
                "chosen-k",
                self.chosen_k.map_or("auto".into(), |k| k.to_string()),
            ),
            ("kmeans-restarts", self.kmeans_restarts.to_string()),
            ("seed", self.seed.to_string()),
            ("anchor-date", self.anchor_date.to_string()),
            ("se-mode", self.se_mode.name().to_string()),
            ("star-thresholds", join(&self.star_thresholds)),
            ("cross-section-month", self.cross_section_month.to_string()),
            ("step-margin", self.step_margin.to_string()),
            ("length-bin", self.length_bin.to_string()),
            ("hist-bin", self.hist_bin.to_string()),
        ]
    }

    /// The config in its own file format.
    pub fn to_file_format(&self) -> String {
        self.entries()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// SHA-256 over the tunable keys (paths excluded), first 16 hex digits.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if !PATH_KEYS.contains(&k) {
                h.update(format!("{k}={v}\n").as_bytes());
            }
        }
        h.finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn stars(&self) -> StarThresholds {
        StarThresholds(self.star_thresholds)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NicheError::Config(m));
        if self.min_words > self.max_words {
            return bad(format!(
                "min-words {} exceeds max-words {}",
                self.min_words, self.max_words
            ));
        }
        check_thresholds(self.threshold_min, self.threshold_max)
            .map_err(|e| NicheError::Config(e.to_string()))?;
        if !(self.svd_ratio > 0.0 && self.svd_ratio <= 1.0) {
            return bad(format!("svd-ratio {} outside (0, 1]", self.svd_ratio));
        }
        if self.svd_max_rank == 0 {
            return bad("svd-max-rank must be positive".into());
        }
        for (name, grid) in [("k-coarse", &self.k_coarse), ("k-fine", &self.k_fine)] {
            if grid.iter().any(|&k| k < 2) || grid.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("{name} must be strictly ascending integers >= 2"));
            }
        }
        if matches!(self.chosen_k, Some(k) if k < 2) {
            return bad("chosen-k must be at least 2".into());
        }
        if self.kmeans_restarts == 0 {
            return bad("kmeans-restarts must be positive".into());
        }
        let t = self.star_thresholds;
        if !(t[0] > t[1] && t[1] > t[2] && t[2] > 0.0 && t[0] < 1.0) {
            return bad("star-thresholds must be strictly decreasing within (0, 1)".into());
        }
        if !(self.step_margin >= 0.0 && self.step_margin.is_finite()) {
            return bad("step-margin must be a nonnegative number".into());
        }
        if self.length_bin == 0 || !(self.hist_bin > 0.0 && self.hist_bin <= 1.0) {
            return bad("length-bin must be positive and hist-bin in (0, 1]".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn file_round_trip() {
        let mut c = PipelineConfig::default();
        c.set("k-fine", "2,3,4").unwrap();
        c.set("chosen-k", "3").unwrap();
        c.set("se-mode", "cluster").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("niche.conf");
        std::fs::write(&path, c.to_file_format()).unwrap();
        let mut d = PipelineConfig::default();
        d.apply_file(&path).unwrap();
        assert_eq!(c, d);
        assert_eq!(c.hash(), d.hash());
    }

    #[test]
    fn hash_ignores_paths_only() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.out_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn env_overrides_paths() {
        let mut c = PipelineConfig::default();
        c.apply_env(|v| (v == "NICHE_OUT_DIR").then(|| "/tmp/x".to_string()))
            .unwrap();
        assert_eq!(c.out_dir, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn violations_are_config_errors() {
        let mut c = PipelineConfig::default();
        c.threshold_min = 0.8;
        assert!(matches!(c.validate(), Err(NicheError::Config(_))));
        let mut c = PipelineConfig::default();
        assert!(c.set("no-such-key", "1").is_err());
        assert!(c.set("svd-ratio", "abc").is_err());
        c.svd_ratio = 1.5;
        assert!(c.validate().is_err());
    }
}
