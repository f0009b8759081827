//! Dataset loading and persistence.
//!
//! Two on-disk layouts are supported, each with `train/` and `test/`
//! subdirectories under the dataset root:
//!
//! * `csv_dir`: one headerless CSV per entity (`<entity>.csv`, one row per
//!   timestep, one column per channel) plus `<entity>.labels.csv` holding
//!   one 0/1 value per line. Test labels are required, train labels
//!   optional.
//! * `raw_f32`: `<entity>.f32` holding row-major little-endian 32-bit
//!   floats, described by a `<entity>.json` sidecar with keys `entity`,
//!   `length`, `dims`, `labels_path` (path relative to the sidecar,
//!   null when the split is unlabeled).
//!
//! Anomaly scores persist as a `timestep,score` CSV beside a small JSON
//! header. All writes use the shortest round-trip decimal form, so a
//! reload is bit-identical.

use crate::data::{SplitTag, TimeSeries};
use crate::error::{Error, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetLayout {
    CsvDir,
    RawF32,
}

/// One entity's train and test series.
#[derive(Debug, Clone)]
pub struct EntityPair {
    pub train: TimeSeries,
    pub test: TimeSeries,
}

/// A loaded benchmark: named set of entities with a shared channel count.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub name: String,
    pub entities: Vec<EntityPair>,
}

impl DatasetBundle {
    pub fn new(name: impl Into<String>, entities: Vec<EntityPair>) -> Result<Self> {
        let name = name.into();
        let first = entities
            .first()
            .ok_or_else(|| Error::EmptyInput(format!("no entities found in dataset {name}")))?;
        let dims = first.train.dims();
        for e in &entities {
            if e.train.dims() != dims || e.test.dims() != dims {
                return Err(Error::ShapeMismatch(format!(
                    "entity {} has {}/{} channels, expected {dims}",
                    e.train.entity_id,
                    e.train.dims(),
                    e.test.dims()
                )));
            }
        }
        Ok(DatasetBundle { name, entities })
    }

    pub fn dims(&self) -> usize {
        self.entities[0].train.dims()
    }

    /// Labelled anomalous timesteps over total labelled timesteps, across
    /// every split that carries labels. `None` when nothing is labelled.
    pub fn anomaly_ratio(&self) -> Option<f64> {
        let mut anomalous = 0usize;
        let mut total = 0usize;
        for e in &self.entities {
            for s in [&e.train, &e.test] {
                if let Some(labels) = &s.labels {
                    total += labels.len();
                    anomalous += labels.iter().filter(|&&l| l == 1).count();
                }
            }
        }
        (total > 0).then(|| anomalous as f64 / total as f64)
    }
}

/// Load a dataset from `root` in the given layout. Entities are discovered
/// from the `test/` subdirectory and returned sorted by id.
pub fn load_dataset(root: &Path, layout: DatasetLayout) -> Result<DatasetBundle> {
    let name = root
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    let entities = match layout {
        DatasetLayout::CsvDir => load_csv_dir(root)?,
        DatasetLayout::RawF32 => load_raw_f32(root)?,
    };
    DatasetBundle::new(name, entities)
}

fn split_dir(root: &Path, split: SplitTag) -> PathBuf {
    root.join(match split {
        SplitTag::Train => "train",
        SplitTag::Test => "test",
    })
}

fn list_entities(dir: &Path, extension: &str, skip_suffix: &str) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir)
        .map_err(|e| Error::io(format!("reading directory {}", dir.display()), e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(format!("reading {}", dir.display()), e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some(extension) {
            continue;
        }
        let stem = match path.file_stem().and_then(|s| s.to_str()) {
            Some(s) => s.to_string(),
            None => continue,
        };
        if stem.ends_with(skip_suffix) {
            continue;
        }
        ids.push(stem);
    }
    ids.sort();
    Ok(ids)
}

fn load_csv_dir(root: &Path) -> Result<Vec<EntityPair>> {
    let test_dir = split_dir(root, SplitTag::Test);
    let ids = list_entities(&test_dir, "csv", ".labels")?;
    let mut entities = Vec::with_capacity(ids.len());
    for id in ids {
        let train = load_csv_entity(root, SplitTag::Train, &id, false)?;
        let test = load_csv_entity(root, SplitTag::Test, &id, true)?;
        entities.push(EntityPair { train, test });
    }
    Ok(entities)
}

fn load_csv_entity(
    root: &Path,
    split: SplitTag,
    id: &str,
    labels_required: bool,
) -> Result<TimeSeries> {
    let dir = split_dir(root, split);
    let values_path = dir.join(format!("{id}.csv"));
    if !values_path.exists() {
        return Err(Error::NotFound(format!(
            "values file {}",
            values_path.display()
        )));
    }
    let values = read_values_csv(&values_path)?;
    let labels_path = dir.join(format!("{id}.labels.csv"));
    let labels = if labels_path.exists() {
        Some(read_labels_csv(&labels_path)?)
    } else if labels_required {
        return Err(Error::LabelMissing(format!(
            "entity {id}: expected {}",
            labels_path.display()
        )));
    } else {
        None
    };
    TimeSeries::new(id, values, labels, split)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSidecar {
    entity: String,
    length: usize,
    dims: usize,
    labels_path: Option<String>,
}

fn load_raw_f32(root: &Path) -> Result<Vec<EntityPair>> {
    let test_dir = split_dir(root, SplitTag::Test);
    let ids = list_entities(&test_dir, "json", ".labels")?;
    let mut entities = Vec::with_capacity(ids.len());
    for id in ids {
        let train = load_raw_entity(root, SplitTag::Train, &id)?;
        let test = load_raw_entity(root, SplitTag::Test, &id)?;
        entities.push(EntityPair { train, test });
    }
    Ok(entities)
}

fn load_raw_entity(root: &Path, split: SplitTag, id: &str) -> Result<TimeSeries> {
    let dir = split_dir(root, split);
    let sidecar_path = dir.join(format!("{id}.json"));
    let sidecar_text = fs::read_to_string(&sidecar_path)
        .map_err(|e| Error::io(format!("reading sidecar {}", sidecar_path.display()), e))?;
    let sidecar: RawSidecar = serde_json::from_str(&sidecar_text).map_err(|e| Error::Parse {
        path: sidecar_path.display().to_string(),
        reason: e.to_string(),
    })?;
    let data_path = dir.join(format!("{id}.f32"));
    let bytes = fs::read(&data_path)
        .map_err(|e| Error::io(format!("reading values {}", data_path.display()), e))?;
    let expected = sidecar.length * sidecar.dims * 4;
    if bytes.len() != expected {
        return Err(Error::Corrupt {
            path: data_path.display().to_string(),
            reason: format!(
                "expected {expected} bytes for {}x{} f32, found {}",
                sidecar.length,
                sidecar.dims,
                bytes.len()
            ),
        });
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let values = Array2::from_shape_vec((sidecar.length, sidecar.dims), flat)
        .expect("length checked above");
    let labels = match &sidecar.labels_path {
        Some(rel) => Some(read_labels_csv(&dir.join(rel))?),
        None => None,
    };
    TimeSeries::new(sidecar.entity, values, labels, split)
}

/// Parse a headerless CSV of reals, one row per timestep.
pub fn read_values_csv(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let parse_err = |lineno: usize, reason: String| Error::Parse {
        path: path.display().to_string(),
        reason: format!("line {}: {reason}", lineno + 1),
    };
    let mut flat = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut count = 0usize;
        for tok in line.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad number {:?}", tok.trim())))?;
            flat.push(v);
            count += 1;
        }
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(parse_err(
                    lineno,
                    format!("expected {w} columns, found {count}"),
                ));
            }
            _ => {}
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| Error::Parse {
        path: path.display().to_string(),
        reason: "no rows".into(),
    })?;
    Ok(Array2::from_shape_vec((rows, width), flat).expect("row width enforced"))
}

/// Parse a label file: one 0/1 value per line.
pub fn read_labels_csv(path: &Path) -> Result<Vec<u8>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Parse {
            path: path.display().to_string(),
            reason: format!("line {}: bad label {line:?}", lineno + 1),
        })?;
        if v == 0.0 {
            labels.push(0);
        } else if v == 1.0 {
            labels.push(1);
        } else {
            return Err(Error::Parse {
                path: path.display().to_string(),
                reason: format!("line {}: label {v} outside {{0,1}}", lineno + 1),
            });
        }
    }
    Ok(labels)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Write a series into a `csv_dir` layout under `root`, in the directory
/// of its split tag. Labels, when present, go to `<entity>.labels.csv`.
pub fn save_csv_entity(root: &Path, series: &TimeSeries) -> Result<()> {
    let dir = split_dir(root, series.split_tag);
    let mut out = String::new();
    for row in series.values.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    write_file(&dir.join(format!("{}.csv", series.entity_id)), &out)?;
    if let Some(labels) = &series.labels {
        let mut out = String::new();
        for l in labels {
            out.push_str(&l.to_string());
            out.push('\n');
        }
        write_file(&dir.join(format!("{}.labels.csv", series.entity_id)), &out)?;
    }
    Ok(())
}

/// Write a series into a `raw_f32` layout under `root`. Values are
/// narrowed to f32.
pub fn save_raw_entity(root: &Path, series: &TimeSeries) -> Result<()> {
    let dir = split_dir(root, series.split_tag);
    fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let mut bytes = Vec::with_capacity(series.len() * series.dims() * 4);
    for v in series.values.iter() {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let data_path = dir.join(format!("{}.f32", series.entity_id));
    fs::write(&data_path, bytes)
        .map_err(|e| Error::io(format!("writing {}", data_path.display()), e))?;
    let labels_rel = series
        .labels
        .as_ref()
        .map(|_| format!("{}.labels.csv", series.entity_id));
    if let (Some(labels), Some(rel)) = (&series.labels, &labels_rel) {
        let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
        write_file(&dir.join(rel), &text)?;
    }
    let sidecar = RawSidecar {
        entity: series.entity_id.clone(),
        length: series.len(),
        dims: series.dims(),
        labels_path: labels_rel,
    };
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    write_file(&dir.join(format!("{}.json", series.entity_id)), &text)
}

/// JSON header written beside a score CSV.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScoreMeta {
    pub entity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// Persist per-timestep scores as `timestep,score` lines plus a JSON
/// header file. Scores must be finite; a reload is bit-identical.
pub fn save_scores_with_meta(scores: &[f64], path: &Path, meta: &ScoreMeta) -> Result<()> {
    if let Some(pos) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!(
            "score at timestep {pos} for entity {}",
            meta.entity
        )));
    }
    let mut out = String::new();
    for (t, s) in scores.iter().enumerate() {
        out.push_str(&format!("{t},{s}\n"));
    }
    write_file(path, &out)?;
    let header = serde_json::to_string_pretty(meta).expect("meta serializes");
    write_file(&meta_path(path), &header)
}

pub fn save_scores(entity_id: &str, scores: &[f64], path: &Path) -> Result<()> {
    save_scores_with_meta(
        scores,
        path,
        &ScoreMeta {
            entity: entity_id.to_string(),
            model_hash: None,
            threshold: None,
        },
    )
}

/// Inverse of [`save_scores_with_meta`].
pub fn load_scores(path: &Path) -> Result<(Vec<f64>, ScoreMeta)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut scores = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let corrupt = |reason: String| Error::Corrupt {
            path: path.display().to_string(),
            reason: format!("line {}: {reason}", lineno + 1),
        };
        let (t_tok, s_tok) = line
            .split_once(',')
            .ok_or_else(|| corrupt("expected timestep,score".into()))?;
        let t: usize = t_tok
            .parse()
            .map_err(|_| corrupt(format!("bad timestep {t_tok:?}")))?;
        if t != scores.len() {
            return Err(corrupt(format!("timestep {t}, expected {}", scores.len())));
        }
        let s: f64 = s_tok
            .parse()
            .map_err(|_| corrupt(format!("bad score {s_tok:?}")))?;
        scores.push(s);
    }
    let header_path = meta_path(path);
    let header = fs::read_to_string(&header_path)
        .map_err(|e| Error::io(format!("reading {}", header_path.display()), e))?;
    let meta: ScoreMeta = serde_json::from_str(&header).map_err(|e| Error::Parse {
        path: header_path.display().to_string(),
        reason: e.to_string(),
    })?;
    Ok((scores, meta))
}

/// Per-entity score vectors keyed by entity id, as produced by scoring a
/// whole bundle.
pub type ScoreSet = BTreeMap<String, Vec<f64>>;

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use tempfile::tempdir;

    fn series(id: &str, rows: usize, dims: usize, labels: Option<Vec<u8>>, split: SplitTag) -> TimeSeries {
        let values = Array2::from_shape_fn((rows, dims), |(t, d)| t as f64 + 0.25 * d as f64);
        TimeSeries::new(id, values, labels, split).unwrap()
    }

    fn write_fixture(root: &Path) {
        let e1_train = series("e1", 30, 2, None, SplitTag::Train);
        let e1_test = series("e1", 20, 2, Some(vec![0; 20]), SplitTag::Test);
        let mut labels = vec![0; 25];
        labels[10] = 1;
        labels[11] = 1;
        let e2_train = series("e2", 40, 2, Some(vec![0; 40]), SplitTag::Train);
        let e2_test = series("e2", 25, 2, Some(labels), SplitTag::Test);
        for s in [&e1_train, &e1_test, &e2_train, &e2_test] {
            save_csv_entity(root, s).unwrap();
        }
    }

    #[test]
    fn csv_dir_round_trip() {
        let dir = tempdir().unwrap();
        write_fixture(dir.path());
        let bundle = load_dataset(dir.path(), DatasetLayout::CsvDir).unwrap();
        assert_eq!(bundle.entities.len(), 2);
        assert_eq!(bundle.dims(), 2);
        let ids: Vec<&str> = bundle
            .entities
            .iter()
            .map(|e| e.train.entity_id.as_str())
            .collect();
        assert_eq!(ids, vec!["e1", "e2"]);
        let e1 = &bundle.entities[0];
        assert_eq!(e1.train.len(), 30);
        assert!(e1.train.labels.is_none());
        assert_eq!(e1.test.split_tag, SplitTag::Test);
        assert_eq!(e1.train.values[[3, 1]], 3.25);
        // 2 anomalous of 20 + 40 + 25 labelled timesteps
        let ratio = bundle.anomaly_ratio().unwrap();
        assert!((ratio - 2.0 / 85.0).abs() < 1e-12);
    }

    #[test]
    fn load_is_deterministic() {
        let dir = tempdir().unwrap();
        write_fixture(dir.path());
        let a = load_dataset(dir.path(), DatasetLayout::CsvDir).unwrap();
        let b = load_dataset(dir.path(), DatasetLayout::CsvDir).unwrap();
        for (x, y) in a.entities.iter().zip(&b.entities) {
            assert_eq!(x.train.values, y.train.values);
            assert_eq!(x.test.labels, y.test.labels);
        }
    }

    #[test]
    fn empty_dataset_errors() {
        let dir = tempdir().unwrap();
        fs::create_dir_all(dir.path().join("test")).unwrap();
        fs::create_dir_all(dir.path().join("train")).unwrap();
        let err = load_dataset(dir.path(), DatasetLayout::CsvDir).unwrap_err();
        assert!(err.to_string().contains("no entities found"), "{err}");
    }

    #[test]
    fn missing_test_labels_errors() {
        let dir = tempdir().unwrap();
        save_csv_entity(dir.path(), &series("e1", 10, 1, None, SplitTag::Train)).unwrap();
        save_csv_entity(dir.path(), &series("e1", 10, 1, None, SplitTag::Test)).unwrap();
        assert!(matches!(
            load_dataset(dir.path(), DatasetLayout::CsvDir),
            Err(Error::LabelMissing(_))
        ));
    }

    #[test]
    fn missing_train_split_errors() {
        let dir = tempdir().unwrap();
        save_csv_entity(dir.path(), &series("e1", 10, 1, Some(vec![0; 10]), SplitTag::Test))
            .unwrap();
        assert!(matches!(
            load_dataset(dir.path(), DatasetLayout::CsvDir),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn ragged_csv_errors() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "1,2\n3\n").unwrap();
        let err = read_values_csv(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn non_finite_values_named() {
        let dir = tempdir().unwrap();
        save_csv_entity(dir.path(), &series("e1", 5, 1, None, SplitTag::Train)).unwrap();
        fs::create_dir_all(dir.path().join("test")).unwrap();
        fs::write(dir.path().join("test/e1.csv"), "0\n1\nNaN\n2\n").unwrap();
        fs::write(dir.path().join("test/e1.labels.csv"), "0\n0\n1\n0\n").unwrap();
        let err = load_dataset(dir.path(), DatasetLayout::CsvDir).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert!(err.to_string().contains("timestep 2"), "{err}");
    }

    #[test]
    fn ragged_dims_across_entities_error() {
        let dir = tempdir().unwrap();
        save_csv_entity(dir.path(), &series("e1", 10, 2, None, SplitTag::Train)).unwrap();
        save_csv_entity(dir.path(), &series("e1", 10, 2, Some(vec![0; 10]), SplitTag::Test))
            .unwrap();
        save_csv_entity(dir.path(), &series("e2", 10, 3, None, SplitTag::Train)).unwrap();
        save_csv_entity(dir.path(), &series("e2", 10, 3, Some(vec![0; 10]), SplitTag::Test))
            .unwrap();
        assert!(matches!(
            load_dataset(dir.path(), DatasetLayout::CsvDir),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn raw_f32_round_trip() {
        let dir = tempdir().unwrap();
        // values exactly representable in f32
        let train = TimeSeries::new(
            "r1",
            arr2(&[[0.5, -1.25], [3.0, 0.0], [2.75, 8.5]]),
            None,
            SplitTag::Train,
        )
        .unwrap();
        let test = TimeSeries::new(
            "r1",
            arr2(&[[1.5, 2.5], [0.25, -0.75]]),
            Some(vec![0, 1]),
            SplitTag::Test,
        )
        .unwrap();
        save_raw_entity(dir.path(), &train).unwrap();
        save_raw_entity(dir.path(), &test).unwrap();
        let bundle = load_dataset(dir.path(), DatasetLayout::RawF32).unwrap();
        assert_eq!(bundle.entities.len(), 1);
        let e = &bundle.entities[0];
        assert_eq!(e.train.values, train.values);
        assert_eq!(e.test.values, test.values);
        assert_eq!(e.test.labels, Some(vec![0, 1]));
        assert!((bundle.anomaly_ratio().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn raw_f32_size_mismatch_is_corrupt() {
        let dir = tempdir().unwrap();
        let test = series("r1", 4, 2, Some(vec![0; 4]), SplitTag::Test);
        let train = series("r1", 4, 2, None, SplitTag::Train);
        save_raw_entity(dir.path(), &test).unwrap();
        save_raw_entity(dir.path(), &train).unwrap();
        let data = dir.path().join("test/r1.f32");
        let mut bytes = fs::read(&data).unwrap();
        bytes.pop();
        fs::write(&data, bytes).unwrap();
        assert!(matches!(
            load_dataset(dir.path(), DatasetLayout::RawF32),
            Err(Error::Corrupt { .. })
        ));
    }

    #[test]
    fn scores_round_trip_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("e1.scores.csv");
        let scores = vec![0.0, 1.5, 3.25, 1e-300, -7.125, 0.1, 2.0_f64.powi(-40)];
        save_scores("e1", &scores, &path).unwrap();
        let (back, meta) = load_scores(&path).unwrap();
        assert_eq!(back, scores);
        assert_eq!(meta.entity, "e1");
        assert_eq!(meta.model_hash, None);
    }

    #[test]
    fn empty_scores_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.scores.csv");
        save_scores("e", &[], &path).unwrap();
        let (back, _) = load_scores(&path).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn nan_scores_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.scores.csv");
        assert!(matches!(
            save_scores("e", &[0.0, f64::NAN], &path),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn score_meta_with_hash_and_threshold() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.scores.csv");
        let meta = ScoreMeta {
            entity: "m".into(),
            model_hash: Some("abc123".into()),
            threshold: Some(0.75),
        };
        save_scores_with_meta(&[1.0, 2.0], &path, &meta).unwrap();
        let (_, back) = load_scores(&path).unwrap();
        assert_eq!(back, meta);
    }

    #[test]
    fn tampered_score_index_detected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.scores.csv");
        save_scores("t", &[1.0, 2.0], &path).unwrap();
        fs::write(&path, "0,1\n5,2\n").unwrap();
        assert!(matches!(load_scores(&path), Err(Error::Corrupt { .. })));
    }
}
