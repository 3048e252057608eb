//! Run manifests and output rendering. Every file carries the manifest, and
//! nothing in it depends on wall-clock time unless `SOURCE_DATE_EPOCH` is set,
//! so equal inputs give byte-identical files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot serialise output: {0}")]
    Serialize(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// SHA-256 of the compact JSON encoding, lowercase hex.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("configs serialise to JSON");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub tool_version: String,
    /// Taken from `SOURCE_DATE_EPOCH` only.
    pub timestamp: Option<String>,
    pub outputs: Vec<String>,
    /// Effective configuration after defaults.
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new<T: Serialize>(command: &str, config: &T, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.to_string(),
            config_hash: config_hash(config),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: std::env::var("SOURCE_DATE_EPOCH").ok(),
            outputs: Vec::new(),
            config: serde_json::to_value(config).expect("configs serialise to JSON"),
        }
    }

    fn header(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# command: {}\n", self.command));
        out.push_str(&format!("# config_hash: {}\n", self.config_hash));
        out.push_str(&format!(
            "# seed: {}\n",
            self.seed
                .map_or_else(|| "none".to_string(), |s| s.to_string())
        ));
        out.push_str(&format!("# tool_version: {}\n", self.tool_version));
        if let Some(t) = &self.timestamp {
            out.push_str(&format!("# timestamp: {t}\n"));
        }
        out.push_str(&format!("# outputs: {}\n", self.outputs.join(",")));
        out.push_str(&format!("# config: {}\n", self.config));
        out
    }
}

/// Files rendered in memory and written together once all of them rendered.
#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(String, Vec<u8>)>,
}

enum Pending {
    Csv(String, String),
    Json(String, serde_json::Value),
}

/// Collects tables and records, then renders them with the final manifest.
#[derive(Default)]
pub struct OutputBuilder {
    pending: Vec<Pending>,
}

impl OutputBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> Result<&mut Self, ReportError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)
                .map_err(|e| ReportError::Serialize(e.to_string()))?;
        }
        let body = w
            .into_inner()
            .map_err(|e| ReportError::Serialize(e.to_string()))?;
        let body = String::from_utf8(body).map_err(|e| ReportError::Serialize(e.to_string()))?;
        self.pending.push(Pending::Csv(name.to_string(), body));
        Ok(self)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, record: &T) -> Result<&mut Self, ReportError> {
        let value =
            serde_json::to_value(record).map_err(|e| ReportError::Serialize(e.to_string()))?;
        self.pending.push(Pending::Json(name.to_string(), value));
        Ok(self)
    }

    pub fn finish(self, mut manifest: RunManifest) -> Result<OutputSet, ReportError> {
        manifest.outputs = self
            .pending
            .iter()
            .map(|p| match p {
                Pending::Csv(n, _) | Pending::Json(n, _) => n.clone(),
            })
            .collect();
        let mut files = Vec::new();
        for p in self.pending {
            match p {
                Pending::Csv(name, body) => {
                    let mut text = manifest.header();
                    text.push_str(&body);
                    files.push((name, text.into_bytes()));
                }
                Pending::Json(name, result) => {
                    let doc = serde_json::json!({ "manifest": manifest, "result": result });
                    let mut text = serde_json::to_string_pretty(&doc)
                        .map_err(|e| ReportError::Serialize(e.to_string()))?;
                    text.push('\n');
                    files.push((name, text.into_bytes()));
                }
            }
        }
        Ok(OutputSet { files })
    }
}

impl OutputSet {
    pub fn files(&self) -> &[(String, Vec<u8>)] {
        &self.files
    }

    /// Writes each file through a temporary sibling and a rename.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| ReportError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let target = dir.join(name);
            let tmp = dir.join(format!(".{name}.tmp"));
            std::fs::write(&tmp, bytes).map_err(io(&tmp))?;
            std::fs::rename(&tmp, &target).map_err(io(&target))?;
            written.push(target);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        k: u32,
        value: f64,
        diff: Option<f64>,
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = serde_json::json!({"x": 1, "y": [0.5, 2]});
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
        assert_eq!(config_hash(&a).len(), 64);
        assert_ne!(
            config_hash(&a),
            config_hash(&serde_json::json!({"x": 2, "y": [0.5, 2]}))
        );
        // empty input, known digest
        assert_eq!(
            Sha256::digest(b"")
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect::<String>(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn csv_and_json_carry_manifest() {
        let cfg = serde_json::json!({"nu": 1.0});
        let manifest = RunManifest {
            timestamp: None,
            ..RunManifest::new("sweep", &cfg, Some(7))
        };
        let rows = vec![
            Row {
                k: 1,
                value: 0.5,
                diff: None,
            },
            Row {
                k: 2,
                value: 0.25,
                diff: Some(1e-3),
            },
        ];
        let mut b = OutputBuilder::new();
        b.csv("table.csv", &rows)
            .unwrap()
            .json("result.json", &rows.len())
            .unwrap();
        let out = b.finish(manifest).unwrap();
        let csv = String::from_utf8(out.files()[0].1.clone()).unwrap();
        assert!(csv.starts_with("# command: sweep\n"));
        assert!(csv.contains("# seed: 7\n"));
        assert!(csv.contains("# outputs: table.csv,result.json\n"));
        assert!(csv.ends_with("k,value,diff\n1,0.5,\n2,0.25,0.001\n"));
        let json: serde_json::Value = serde_json::from_slice(&out.files()[1].1).unwrap();
        assert_eq!(json["result"], 2);
        assert_eq!(json["manifest"]["config"]["nu"], 1.0);

        let dir = tempfile::tempdir().unwrap();
        let paths = out.write_to(&dir.path().join("nested")).unwrap();
        assert_eq!(std::fs::read(&paths[0]).unwrap(), out.files()[0].1);
        assert_eq!(
            std::fs::read_dir(dir.path().join("nested"))
                .unwrap()
                .count(),
            2
        );
    }
}
