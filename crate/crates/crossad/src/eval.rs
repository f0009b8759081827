//! Inference-time scoring and the evaluation protocol: distance-to-centre
//! anomaly scores, window-to-timestep mapping, per-entity AUROC/AUPR, and
//! dataset-level F1 from an aggregated confusion matrix. No point
//! adjustment anywhere.

use std::io::Write as _;
use std::path::Path;

use ndarray::ArrayView1;
use serde::Serialize;

use crate::data::{make_windows, Provenance, TimeSeries, Window, WindowLabel};
use crate::error::{Error, Result};
use crate::loss::{head_score, HeadVariant};
use crate::model::ModelState;

/// Windows encoded per forward pass while scoring.
const SCORE_CHUNK: usize = 256;

/// Squared distance between a classifier-space embedding and the centre.
pub fn score_from_embedding(embed: ArrayView1<'_, f64>, centre: ArrayView1<'_, f64>) -> f64 {
    embed
        .iter()
        .zip(centre.iter())
        .map(|(e, c)| (e - c) * (e - c))
        .sum()
}

/// Anomaly score of a single window: `‖g(w) − c‖²`.
pub fn anomaly_score(state: &ModelState, window: &Window) -> Result<f64> {
    Ok(anomaly_scores(state, &[window])?[0])
}

/// Anomaly scores for a batch of windows, encoded in chunks.
pub fn anomaly_scores(state: &ModelState, windows: &[&Window]) -> Result<Vec<f64>> {
    anomaly_scores_with(state, windows, HeadVariant::Cec)
}

/// [`anomaly_scores`] under an explicit head variant.
pub fn anomaly_scores_with(
    state: &ModelState,
    windows: &[&Window],
    head: HeadVariant,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(SCORE_CHUNK) {
        let embeds = state.classify(&state.encode(chunk)?);
        for row in embeds.rows() {
            out.push(head_score(head, row, state.centre.view()));
        }
    }
    Ok(out)
}

/// Map per-window scores onto per-timestep scores.
///
/// Each window's score lands on its last covered timestep
/// (`start + ws − 1`); earlier timesteps inherit the first window's score
/// and any gaps (stride > 1) or tail timesteps carry the last score
/// forward, so the output always has length `len`.
pub fn spread_window_scores(
    window_scores: &[f64],
    starts: &[usize],
    ws: usize,
    len: usize,
) -> Result<Vec<f64>> {
    if window_scores.is_empty() {
        return Err(Error::EmptyInput("window scores".into()));
    }
    if window_scores.len() != starts.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores for {} window starts",
            window_scores.len(),
            starts.len()
        )));
    }
    let mut out = vec![f64::NAN; len];
    for (&score, &start) in window_scores.iter().zip(starts) {
        let t = start + ws - 1;
        if t >= len {
            return Err(Error::ShapeMismatch(format!(
                "window at start {start} ends past series length {len}"
            )));
        }
        out[t] = score;
    }
    let mut last = window_scores[0];
    for slot in out.iter_mut() {
        if slot.is_nan() {
            *slot = last;
        } else {
            last = *slot;
        }
    }
    Ok(out)
}

/// Score every timestep of a series with a trained model.
///
/// The series is expected to be standardized with the same statistics
/// used at training time. The window size comes from the model config.
pub fn score_series(state: &ModelState, series: &TimeSeries, stride: usize) -> Result<Vec<f64>> {
    score_series_with(state, series, stride, HeadVariant::Cec)
}

/// [`score_series`] under an explicit head variant.
pub fn score_series_with(
    state: &ModelState,
    series: &TimeSeries,
    stride: usize,
    head: HeadVariant,
) -> Result<Vec<f64>> {
    let ws = state.config.encoder.window_size;
    let windows = make_windows(series, ws, stride)?;
    let refs: Vec<&Window> = windows.iter().collect();
    let scores = anomaly_scores_with(state, &refs, head)?;
    let starts: Vec<usize> = windows.iter().map(|w| w.start).collect();
    spread_window_scores(&scores, &starts, ws, series.len())
}

fn check_scores_labels(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("scores".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score at index {i}")));
    }
    Ok(())
}

/// Area under the ROC curve via the rank (Mann-Whitney) formulation;
/// tied scores count half.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_scores_labels(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUROC needs both classes, got {n_pos} positives and {n_neg} negatives"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // average ranks over tie groups, 1-based
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Area under the precision-recall curve as average precision: mean over
/// positives, ranked by descending score, of the precision at each
/// positive's rank. Ties keep their original order.
pub fn aupr(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_scores_labels(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric("AUPR needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    let mut seen_pos = 0usize;
    let mut ap = 0.0;
    for (rank0, &idx) in order.iter().enumerate() {
        if labels[idx] == 1 {
            seen_pos += 1;
            ap += seen_pos as f64 / (rank0 + 1) as f64;
        }
    }
    Ok(ap / n_pos as f64)
}

/// Per-timestep scores for one entity, with labels when known.
#[derive(Debug, Clone)]
pub struct ScoredSeries {
    pub entity_id: String,
    pub scores: Vec<f64>,
    pub labels: Option<Vec<u8>>,
    pub threshold: Option<f64>,
}

impl ScoredSeries {
    pub fn new(
        entity_id: impl Into<String>,
        scores: Vec<f64>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let entity_id = entity_id.into();
        if scores.is_empty() {
            return Err(Error::EmptyInput(format!("scores for entity {entity_id}")));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!(
                "score at index {i} of entity {entity_id}"
            )));
        }
        if let Some(l) = &labels {
            if l.len() != scores.len() {
                return Err(Error::ShapeMismatch(format!(
                    "entity {entity_id}: {} labels for {} scores",
                    l.len(),
                    scores.len()
                )));
            }
        }
        Ok(ScoredSeries {
            entity_id,
            scores,
            labels,
            threshold: None,
        })
    }

    fn labels(&self) -> Result<&[u8]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::LabelMissing(format!("entity {} is unlabelled", self.entity_id)))
    }
}

/// Best threshold and the aggregate confusion metrics at it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct F1Sweep {
    pub threshold: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Number of candidate thresholds in the quantile grid.
const F1_GRID: usize = 256;

fn confusion_f1(scored: &[ScoredSeries], threshold: f64) -> Result<F1Sweep> {
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for s in scored {
        let labels = s.labels()?;
        for (&score, &label) in s.scores.iter().zip(labels) {
            let pred = score >= threshold;
            match (pred, label == 1) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(F1Sweep {
        threshold,
        f1,
        precision,
        recall,
    })
}

/// Sweep a shared threshold over a 256-quantile grid of the pooled
/// scores; every series' confusion matrix is summed into one before F1
/// is computed. Ties on F1 resolve to the lowest threshold.
pub fn best_f1_aggregated(scored: &[ScoredSeries]) -> Result<F1Sweep> {
    if scored.is_empty() {
        return Err(Error::EmptyInput("scored series".into()));
    }
    let mut pooled: Vec<f64> = Vec::new();
    let mut any_pos = false;
    for s in scored {
        check_scores_labels(&s.scores, s.labels()?)?;
        any_pos |= s.labels()?.iter().any(|&l| l == 1);
        pooled.extend_from_slice(&s.scores);
    }
    if !any_pos {
        return Err(Error::UndefinedMetric(
            "aggregated F1 needs at least one positive timestep".into(),
        ));
    }
    pooled.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let n = pooled.len();
    let mut grid: Vec<f64> = (0..F1_GRID)
        .map(|i| pooled[i * (n - 1) / (F1_GRID - 1)])
        .collect();
    grid.dedup();

    let mut best: Option<F1Sweep> = None;
    for &threshold in &grid {
        let sweep = confusion_f1(scored, threshold)?;
        let better = match &best {
            None => true,
            Some(b) => sweep.f1 > b.f1,
        };
        if better {
            best = Some(sweep);
        }
    }
    Ok(best.expect("nonempty grid"))
}

/// Per-entity ranking metrics; `None` when the entity had a single class.
#[derive(Debug, Clone, Serialize)]
pub struct EntityMetrics {
    pub entity_id: String,
    pub aupr: Option<f64>,
    pub auroc: Option<f64>,
}

/// Dataset-level evaluation: aggregate F1 and per-entity AUPR/AUROC with
/// population mean and standard deviation.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub threshold: f64,
    pub aupr_mean: f64,
    pub aupr_std: f64,
    pub auroc_mean: f64,
    pub auroc_std: f64,
    pub entities: Vec<EntityMetrics>,
    pub skipped_entities: usize,
}

fn population_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Evaluate a full set of scored entities. Single-class entities are
/// skipped from the per-entity metric averages (and counted), but still
/// contribute to the aggregate confusion matrix.
pub fn dataset_report(scored: &[ScoredSeries]) -> Result<MetricReport> {
    let sweep = best_f1_aggregated(scored)?;
    let mut entities = Vec::with_capacity(scored.len());
    let mut auprs = Vec::new();
    let mut aurocs = Vec::new();
    let mut skipped = 0usize;
    for s in scored {
        let labels = s.labels()?;
        let metrics = match (aupr(&s.scores, labels), auroc(&s.scores, labels)) {
            (Ok(ap), Ok(roc)) => {
                auprs.push(ap);
                aurocs.push(roc);
                EntityMetrics {
                    entity_id: s.entity_id.clone(),
                    aupr: Some(ap),
                    auroc: Some(roc),
                }
            }
            (Err(Error::UndefinedMetric(_)), _) | (_, Err(Error::UndefinedMetric(_))) => {
                skipped += 1;
                EntityMetrics {
                    entity_id: s.entity_id.clone(),
                    aupr: None,
                    auroc: None,
                }
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        entities.push(metrics);
    }
    if aurocs.is_empty() {
        return Err(Error::UndefinedMetric(
            "every entity was single-class; no per-entity metrics".into(),
        ));
    }
    let (aupr_mean, aupr_std) = population_stats(&auprs);
    let (auroc_mean, auroc_std) = population_stats(&aurocs);
    Ok(MetricReport {
        f1: sweep.f1,
        precision: sweep.precision,
        recall: sweep.recall,
        threshold: sweep.threshold,
        aupr_mean,
        aupr_std,
        auroc_mean,
        auroc_std,
        entities,
        skipped_entities: skipped,
    })
}

/// Write per-window classifier-space embeddings as CSV for external
/// projection: entity, start, label, provenance, then one column per
/// embedding dimension.
pub fn export_embeddings(state: &ModelState, windows: &[&Window], path: &Path) -> Result<()> {
    if windows.is_empty() {
        return Err(Error::EmptyInput("windows to export".into()));
    }
    let embed_dim = state.config.embed_dim;
    let mut out = String::from("entity_id,start,label,provenance");
    for d in 0..embed_dim {
        out.push_str(&format!(",e{d}"));
    }
    out.push('\n');
    for chunk in windows.chunks(SCORE_CHUNK) {
        let embeds = state.classify(&state.encode(chunk)?);
        for (w, row) in chunk.iter().zip(embeds.rows()) {
            let provenance = match &w.provenance {
                Provenance::Original => "original".to_string(),
                Provenance::Injected(t) => format!("injected:{t}"),
            };
            let label = match w.label {
                WindowLabel::Normal => "normal",
                WindowLabel::Anomalous => "anomalous",
                WindowLabel::Unknown => "unknown",
            };
            out.push_str(&format!("{},{},{label},{provenance}", w.entity_id, w.start));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
    }
    let mut file = std::fs::File::create(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
