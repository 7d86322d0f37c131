use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{NicheError, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// First line of every text artifact.
pub fn header_line(config_hash: &str) -> String {
    format!("# niche {TOOL_VERSION} config {config_hash}\n")
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| NicheError::io(dir, e))?;
    }
    let name = path
        .file_name()
        .map_or_else(|| "artifact".into(), |n| n.to_string_lossy().into_owned());
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let mut f = std::fs::File::create(&tmp).map_err(|e| NicheError::io(&tmp, e))?;
    f.write_all(contents).map_err(|e| NicheError::io(&tmp, e))?;
    f.sync_all().map_err(|e| NicheError::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| NicheError::io(path, e))
}

/// Artifact directory bound to one config hash.
#[derive(Debug, Clone)]
pub struct ArtifactDir {
    pub root: PathBuf,
    pub config_hash: String,
}

impl ArtifactDir {
    pub fn new(root: impl Into<PathBuf>, config_hash: impl Into<String>) -> Self {
        ArtifactDir {
            root: root.into(),
            config_hash: config_hash.into(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Text artifact with the header comment prepended.
    pub fn write_text(&self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.path(name);
        let mut s = header_line(&self.config_hash);
        s.push_str(body);
        write_atomic(&path, s.as_bytes())?;
        Ok(path)
    }

    /// CSV artifact: header comment, then the header row and records.
    pub fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| NicheError::Data(format!("writing {name}: {e}"));
        w.write_record(header).map_err(err)?;
        for r in rows {
            w.write_record(r).map_err(err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| NicheError::Data(format!("writing {name}: {e}")))?;
        self.write_text(name, &String::from_utf8_lossy(&bytes))
    }

    /// JSON artifact with a `_meta` object alongside `body`'s fields.
    pub fn write_json<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf> {
        let mut value = serde_json::to_value(body).map_err(|e| NicheError::Data(e.to_string()))?;
        let meta = serde_json::json!({"tool": "niche", "version": TOOL_VERSION, "config_hash": self.config_hash});
        match value.as_object_mut() {
            Some(obj) => {
                obj.insert("_meta".into(), meta);
            }
            None => value = serde_json::json!({"_meta": meta, "data": value}),
        }
        let mut s =
            serde_json::to_string_pretty(&value).map_err(|e| NicheError::Data(e.to_string()))?;
        s.push('\n');
        let path = self.path(name);
        write_atomic(&path, s.as_bytes())?;
        Ok(path)
    }

    /// Fails with a pointer to the producing command when `name` is absent.
    pub fn require(&self, name: &str, command: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(NicheError::MissingArtifact {
                path: p,
                command: command.to_string(),
            })
        }
    }

    pub fn read_to_string(&self, name: &str, command: &str) -> Result<String> {
        let p = self.require(name, command)?;
        std::fs::read_to_string(&p).map_err(|e| NicheError::io(&p, e))
    }

    /// CSV records keyed by column name; `#` lines are skipped.
    pub fn read_csv(&self, name: &str, command: &str) -> Result<Vec<BTreeMap<String, String>>> {
        let p = self.require(name, command)?;
        read_csv_file(&p)
    }
}

pub fn read_csv_file(path: &Path) -> Result<Vec<BTreeMap<String, String>>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| NicheError::Data(format!("{}: {e}", path.display())))?;
    let headers = r
        .headers()
        .map_err(|e| NicheError::Data(format!("{}: {e}", path.display())))?
        .clone();
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| NicheError::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: e.to_string(),
            })?;
            Ok(headers
                .iter()
                .map(str::to_string)
                .zip(rec.iter().map(str::to_string))
                .collect())
        })
        .collect()
}

/// Hex SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| NicheError::io(path, e))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let a = ArtifactDir::new(dir.path(), "abc");
        a.write_text("x.txt", "one\n").unwrap();
        a.write_text("x.txt", "two\n").unwrap();
        let s = std::fs::read_to_string(a.path("x.txt")).unwrap();
        assert_eq!(s, format!("# niche {TOOL_VERSION} config abc\ntwo\n"));
        let names: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn csv_round_trip_skips_header_comment() {
        let dir = tempfile::tempdir().unwrap();
        let a = ArtifactDir::new(dir.path(), "h");
        a.write_csv("t.csv", &["id", "v"], &[vec!["a,b".into(), "1".into()]])
            .unwrap();
        let rows = a.read_csv("t.csv", "niche").unwrap();
        assert_eq!(rows[0]["id"], "a,b");
        assert_eq!(rows[0]["v"], "1");
    }

    #[test]
    fn missing_artifact_names_command() {
        let dir = tempfile::tempdir().unwrap();
        let a = ArtifactDir::new(dir.path(), "h");
        match a.require("niche.csv", "niche") {
            Err(NicheError::MissingArtifact { command, .. }) => assert_eq!(command, "niche"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn json_carries_meta() {
        let dir = tempfile::tempdir().unwrap();
        let a = ArtifactDir::new(dir.path(), "h");
        a.write_json("f.json", &serde_json::json!({"x": 1}))
            .unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(a.path("f.json")).unwrap()).unwrap();
        assert_eq!(v["_meta"]["config_hash"], "h");
        assert_eq!(v["x"], 1);
    }
}
