//! Ablation harness: loss-component removal, classifier-head variants,
//! and injection on/off, each trained under bit-identical seeds and data
//! order so only the ablated element differs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{compute_channel_stats, standardize};
use crate::dataset::EntityPair;
use crate::error::{Error, Result};
use crate::eval::{dataset_report, score_series_with, MetricReport, ScoredSeries};
use crate::loss::{HeadVariant, LossWeights};
use crate::train::{train, TrainConfig};
use crate::triplet::TargetNegative;

/// Gap, in units of the window size, separating anchors from their
/// distant-window negatives when injection is disabled.
pub const DISTANT_NEGATIVE_WINDOWS: usize = 10;

/// One trainable variant: a name plus the overrides that distinguish it
/// from the full model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSpec {
    pub name: String,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default)]
    pub head: HeadVariant,
    #[serde(default = "default_true")]
    pub injection_enabled: bool,
}

fn default_true() -> bool {
    true
}

impl VariantSpec {
    /// The unmodified pipeline; the baseline row of every table.
    pub fn full() -> Self {
        VariantSpec {
            name: "full".into(),
            weights: LossWeights::default(),
            head: HeadVariant::default(),
            injection_enabled: true,
        }
    }
}

fn zeroed(name: &str, f: impl FnOnce(&mut LossWeights)) -> VariantSpec {
    let mut v = VariantSpec::full();
    v.name = name.into();
    f(&mut v.weights);
    v
}

/// Loss-component removal table: the full model plus one variant per
/// loss term with that term's weight set to zero.
pub fn loss_removal_variants() -> Vec<VariantSpec> {
    vec![
        VariantSpec::full(),
        zeroed("w/o l_sup", |w| w.alpha = 0.0),
        zeroed("w/o l_self", |w| w.beta = 0.0),
        zeroed("w/o l_disc", |w| w.gamma = 0.0),
        zeroed("w/o l_cls", |w| w.lambda = 0.0),
    ]
}

/// Classifier-head table: centre-based entropy head against a plain
/// logistic head and a one-class distance head.
pub fn head_variants() -> Vec<VariantSpec> {
    let with_head = |name: &str, head| {
        let mut v = VariantSpec::full();
        v.name = name.into();
        v.head = head;
        v
    };
    vec![
        VariantSpec::full(),
        with_head("plain_bce", HeadVariant::PlainBce),
        with_head("deepsvdd", HeadVariant::DeepSvdd),
    ]
}

/// Injection table: with synthetic negatives versus real-anomaly source
/// negatives plus distant-window target negatives.
pub fn injection_variants() -> Vec<VariantSpec> {
    let mut off = VariantSpec::full();
    off.name = "w/o injection".into();
    off.injection_enabled = false;
    vec![VariantSpec::full(), off]
}

/// A set of variants trained under one shared configuration and seed
/// list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationPlan {
    pub variants: Vec<VariantSpec>,
    pub config: TrainConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

impl AblationPlan {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.variants.is_empty() {
            return Err(Error::EmptyInput("ablation plan variants".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::EmptyInput("ablation plan seeds".into()));
        }
        for (i, v) in self.variants.iter().enumerate() {
            if self.variants[..i].iter().any(|u| u.name == v.name) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate variant name {:?}",
                    v.name
                )));
            }
        }
        Ok(())
    }
}

/// The shared configuration with exactly one variant's overrides applied.
pub fn variant_config(base: &TrainConfig, variant: &VariantSpec, seed: u64) -> TrainConfig {
    let mut cfg = base.clone();
    cfg.weights = variant.weights.clone();
    cfg.head = variant.head;
    cfg.seed = seed;
    if !variant.injection_enabled {
        cfg.p_real_neg = 1.0;
        cfg.target_negative = TargetNegative::Distant {
            min_gap: DISTANT_NEGATIVE_WINDOWS * cfg.window_size(),
        };
    }
    cfg
}

/// Score the target test split with a trained model and report metrics.
/// The test split is standardized with the target train-split statistics,
/// matching what the model saw during training.
pub fn evaluate_target(
    state: &crate::model::ModelState,
    target: &EntityPair,
    stride: usize,
    head: HeadVariant,
) -> Result<MetricReport> {
    let stats = compute_channel_stats(&[&target.train])?;
    let test_std = standardize(&target.test, &stats)?;
    let scores = score_series_with(state, &test_std, stride, head)?;
    let scored = ScoredSeries::new(
        test_std.entity_id.clone(),
        scores,
        test_std.labels.clone(),
    )?;
    dataset_report(&[scored])
}

/// Metrics for one variant aggregated over the plan's seeds.
#[derive(Debug, Clone, Serialize)]
pub struct VariantMetrics {
    pub f1_median: f64,
    pub aupr_mean: f64,
    pub aupr_std: f64,
    pub auroc_mean: f64,
    pub auroc_std: f64,
    pub auroc_median: f64,
}

/// One table row: the variant name plus either metrics or the error that
/// stopped it.
#[derive(Debug, Clone, Serialize)]
pub struct VariantRow {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<VariantMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn summarize(name: &str, reports: &[MetricReport]) -> VariantRow {
    let f1s: Vec<f64> = reports.iter().map(|r| r.f1).collect();
    let auprs: Vec<f64> = reports.iter().map(|r| r.aupr_mean).collect();
    let aurocs: Vec<f64> = reports.iter().map(|r| r.auroc_mean).collect();
    let (aupr_mean, aupr_std) = mean_std(&auprs);
    let (auroc_mean, auroc_std) = mean_std(&aurocs);
    VariantRow {
        name: name.into(),
        metrics: Some(VariantMetrics {
            f1_median: median(&f1s),
            aupr_mean,
            aupr_std,
            auroc_mean,
            auroc_std,
            auroc_median: median(&aurocs),
        }),
        error: None,
    }
}

/// Train and evaluate every variant in the plan. A variant that fails
/// reports its error in its own row without stopping the others.
pub fn run_ablation(
    plan: &AblationPlan,
    source: &EntityPair,
    target: &EntityPair,
) -> Result<Vec<VariantRow>> {
    plan.validate()?;
    let mut rows = Vec::with_capacity(plan.variants.len());
    for variant in &plan.variants {
        let mut reports = Vec::with_capacity(plan.seeds.len());
        let mut error = None;
        for &seed in &plan.seeds {
            let cfg = variant_config(&plan.config, variant, seed);
            let outcome = train(source, target, &cfg).and_then(|(state, _)| {
                evaluate_target(&state, target, cfg.stride, variant.head)
            });
            match outcome {
                Ok(report) => reports.push(report),
                Err(e) => {
                    error = Some(e.to_string());
                    break;
                }
            }
        }
        rows.push(match error {
            None => summarize(&variant.name, &reports),
            Some(message) => VariantRow {
                name: variant.name.clone(),
                metrics: None,
                error: Some(message),
            },
        });
    }
    Ok(rows)
}

/// Write the comparison table as CSV; failed variants carry the error in
/// the last column.
pub fn write_ablation_csv(rows: &[VariantRow], path: &Path) -> Result<()> {
    let mut out =
        String::from("name,f1_median,aupr_mean,aupr_std,auroc_mean,auroc_std,auroc_median,error\n");
    for row in rows {
        match &row.metrics {
            Some(m) => out.push_str(&format!(
                "{},{},{},{},{},{},{},\n",
                row.name,
                m.f1_median,
                m.aupr_mean,
                m.aupr_std,
                m.auroc_mean,
                m.auroc_std,
                m.auroc_median
            )),
            None => out.push_str(&format!(
                "{},,,,,,,{}\n",
                row.name,
                row.error.as_deref().unwrap_or_default()
            )),
        }
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Write the comparison table as pretty-printed JSON.
pub fn write_ablation_json(rows: &[VariantRow], path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(rows)
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
    fs::write(path, json).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
