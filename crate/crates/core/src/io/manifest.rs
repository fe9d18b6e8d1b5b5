//! Dataset manifests (`path,labels,split` CSV) and label maps (`id → name` JSON).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: PathBuf,
    pub labels: Vec<usize>,
    pub split: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    /// Relative audio paths resolve against this directory.
    pub base_dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    path: String,
    labels: String,
    split: String,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut rows = Vec::new();
        for (i, rec) in reader.deserialize::<CsvRow>().enumerate() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let labels = parse_labels(&rec.labels)
                .map_err(|m| Error::data(path, format!("row {}: {m}", i + 1)))?;
            rows.push(ManifestRow {
                path: PathBuf::from(rec.path),
                labels,
                split: rec.split,
            });
        }
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Manifest { rows, base_dir })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        for r in &self.rows {
            let labels: Vec<String> = r.labels.iter().map(usize::to_string).collect();
            w.serialize(CsvRow {
                path: r.path.to_string_lossy().into_owned(),
                labels: labels.join(";"),
                split: r.split.clone(),
            })
            .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, row: &ManifestRow) -> PathBuf {
        if row.path.is_absolute() {
            row.path.clone()
        } else {
            self.base_dir.join(&row.path)
        }
    }

    /// Checks every label against `labels` and every audio path for existence.
    pub fn validate(&self, labels: &LabelMap) -> Result<()> {
        for (i, r) in self.rows.iter().enumerate() {
            if r.labels.is_empty() {
                return Err(Error::data(&r.path, format!("row {} has no labels", i + 1)));
            }
            if let Some(bad) = r.labels.iter().find(|&&l| l >= labels.len()) {
                return Err(Error::data(
                    &r.path,
                    format!("row {}: label {bad} is not in the {}-class label map", i + 1, labels.len()),
                ));
            }
            let p = self.resolve(r);
            if !p.is_file() {
                return Err(Error::data(p, "audio file not found"));
            }
        }
        Ok(())
    }

    /// Rows with the given split tag, with their indices.
    pub fn split<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = (usize, &'a ManifestRow)> + 'a {
        self.rows.iter().enumerate().filter(move |(_, r)| r.split == tag)
    }
}

fn parse_labels(s: &str) -> std::result::Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let id = part
            .parse::<usize>()
            .map_err(|_| format!("label {part:?} is not a class id"))?;
        if !out.contains(&id) {
            out.push(id);
        }
    }
    if out.is_empty() {
        return Err("no labels".into());
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::data(path, format!("{other:?}")),
    }
}

/// Class names indexed by id `0..C`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    names: Vec<String>,
}

impl LabelMap {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Input("label map is empty".into()));
        }
        Ok(LabelMap { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: BTreeMap<String, String> =
            serde_json::from_str(&text).map_err(|e| Error::data(path, format!("label map: {e}")))?;
        let mut by_id = BTreeMap::new();
        for (k, v) in raw {
            let id: usize = k
                .parse()
                .map_err(|_| Error::data(path, format!("label id {k:?} is not an integer")))?;
            by_id.insert(id, v);
        }
        for (expect, id) in by_id.keys().enumerate() {
            if *id != expect {
                return Err(Error::data(path, format!("label ids must be 0..C-1, missing {expect}")));
            }
        }
        Self::new(by_id.into_values().collect()).map_err(|e| Error::data(path, e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let map: BTreeMap<String, &String> = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (format!("{i}"), n))
            .collect();
        let mut text = serde_json::to_string_pretty(&map).map_err(|e| Error::Format(e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// `B × C` multi-hot rows for the given label lists.
    pub fn multi_hot(&self, labels: &[usize]) -> Vec<f32> {
        let mut row = vec![0.0; self.len()];
        for &l in labels {
            row[l] = 1.0;
        }
        row
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest {
            rows: vec![
                ManifestRow { path: "a.wav".into(), labels: vec![0, 2], split: "train".into() },
                ManifestRow { path: "b.wav".into(), labels: vec![1], split: "eval".into() },
            ],
            base_dir: dir.path().to_path_buf(),
        };
        let p = dir.path().join("m.csv");
        m.write(&p).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "path,labels,split\na.wav,0;2,train\nb.wav,1,eval\n"
        );
        assert_eq!(Manifest::read(&p).unwrap(), m);
        assert_eq!(m.split("eval").count(), 1);
    }

    #[test]
    fn validation_errors() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.wav"), b"").unwrap();
        let labels = LabelMap::new(vec!["x".into(), "y".into()]).unwrap();
        let mut m = Manifest {
            rows: vec![ManifestRow { path: "a.wav".into(), labels: vec![1], split: "train".into() }],
            base_dir: dir.path().to_path_buf(),
        };
        m.validate(&labels).unwrap();
        m.rows[0].labels = vec![2];
        assert!(m.validate(&labels).unwrap_err().to_string().contains("label 2"));
        m.rows[0] = ManifestRow { path: "missing.wav".into(), labels: vec![0], split: "train".into() };
        assert!(matches!(m.validate(&labels), Err(Error::Data { .. })));
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "path,labels,split\na.wav,cat,train\n").unwrap();
        assert!(Manifest::read(&p).is_err());
    }

    #[test]
    fn label_map_io() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.json");
        let m = LabelMap::new(vec!["tone".into(), "noise".into()]).unwrap();
        m.write(&p).unwrap();
        assert_eq!(LabelMap::read(&p).unwrap(), m);
        std::fs::write(&p, r#"{"0": "a", "2": "b"}"#).unwrap();
        assert!(LabelMap::read(&p).is_err());
        std::fs::write(&p, r#"{"x": "a"}"#).unwrap();
        assert!(LabelMap::read(&p).is_err());
        assert_eq!(m.multi_hot(&[1]), vec![0.0, 1.0]);
    }
}
