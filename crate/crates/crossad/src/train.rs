//! Adversarial training loop: one labelled source entity, one unlabelled
//! target entity, a shared encoder updated by the four-term objective.

use std::io::Write as _;
use std::path::Path;

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{compute_channel_stats, make_windows, standardize, Window, WindowLabel};
use crate::dataset::EntityPair;
use crate::error::{Error, Result};
use crate::inject::{inject, AnomalyType, InjectionSpec, MIN_SEGMENT_WINDOW};
use crate::loss::{
    discriminator_grad, head_grad, self_triplet_grad, sup_mean_margin_grad, total_loss,
    HeadVariant, LossWeights,
};
use crate::model::{grl_backward, ModelConfig, ModelState};
use crate::nn::Adam;
use crate::rng::{derive_seed, indexed_rng, stream_rng, STREAM_BATCH, STREAM_CENTRE};
use crate::triplet::{
    build_source_triplets, build_target_triplets_with, TargetNegative, Triplet,
};

/// Classifier batches reserve at least this fraction for anomalous
/// windows whenever the source has any.
pub const CLS_ANOMALOUS_FRACTION: f64 = 0.25;

/// Number of normal source windows averaged into the initial centre.
pub const CENTRE_INIT_SAMPLES: usize = 256;

fn default_stride() -> usize {
    1
}
fn default_epochs() -> usize {
    20
}
fn default_batch() -> usize {
    64
}
fn default_lr() -> f64 {
    1e-4
}
fn default_k_proximity() -> usize {
    5
}
fn default_p_real_neg() -> f64 {
    0.5
}
fn default_final_lr_fraction() -> f64 {
    1.0
}
fn default_average_tail_fraction() -> f64 {
    0.0
}

/// Everything one training run needs besides the data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Learning rate decays linearly to `learning_rate * final_lr_fraction`
    /// over training; 1.0 keeps it constant.
    #[serde(default = "default_final_lr_fraction")]
    pub final_lr_fraction: f64,
    /// When positive, the returned parameters are the average of the
    /// iterates over this final fraction of optimizer steps, which damps
    /// the step-to-step noise of the adversarial game.
    #[serde(default = "default_average_tail_fraction")]
    pub average_tail_fraction: f64,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default = "default_k_proximity")]
    pub k_proximity: usize,
    #[serde(default = "default_p_real_neg")]
    pub p_real_neg: f64,
    /// Optional cap on optimizer steps per epoch; `None` covers every
    /// source window once per epoch.
    #[serde(default)]
    pub steps_per_epoch: Option<usize>,
    #[serde(default)]
    pub target_negative: TargetNegative,
    /// Classifier-head variant; `Cec` is the main pipeline.
    #[serde(default)]
    pub head: HeadVariant,
    #[serde(default)]
    pub seed: u64,
}

impl TrainConfig {
    /// Defaults matching the reference hyperparameters.
    pub fn paper_default(input_dims: usize, seed: u64) -> Self {
        TrainConfig {
            model: ModelConfig::paper_default(input_dims, seed),
            stride: default_stride(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            final_lr_fraction: default_final_lr_fraction(),
            average_tail_fraction: default_average_tail_fraction(),
            weights: LossWeights::default(),
            k_proximity: default_k_proximity(),
            p_real_neg: default_p_real_neg(),
            steps_per_epoch: None,
            target_negative: TargetNegative::Injected,
            head: HeadVariant::default(),
            seed,
        }
    }

    /// Reduced configuration for fast experiments: the small model, a
    /// coarser training stride, and fewer epochs.
    pub fn small(input_dims: usize, window_size: usize, seed: u64) -> Self {
        TrainConfig {
            model: ModelConfig::small(input_dims, window_size, seed),
            stride: 4,
            epochs: 3,
            ..TrainConfig::paper_default(input_dims, seed)
        }
    }

    pub fn window_size(&self) -> usize {
        self.model.encoder.window_size
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.weights.validate()?;
        if self.stride == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "stride, epochs, and batch_size must be positive".into(),
            ));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(Error::InvalidParameter(
                "steps_per_epoch must be positive when set".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "final_lr_fraction {} outside (0, 1]",
                self.final_lr_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.average_tail_fraction) {
            return Err(Error::InvalidParameter(format!(
                "average_tail_fraction {} outside [0, 1]",
                self.average_tail_fraction
            )));
        }
        if self.k_proximity == 0 {
            return Err(Error::InvalidParameter(
                "k_proximity must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.p_real_neg) {
            return Err(Error::InvalidParameter(format!(
                "p_real_neg {} outside [0, 1]",
                self.p_real_neg
            )));
        }
        Ok(())
    }
}

/// Per-step loss record; `l_total` is the weighted recombination of the
/// four parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub step: usize,
    pub l_sup: f64,
    pub l_self: f64,
    pub l_disc: f64,
    pub l_cls: f64,
    pub l_total: f64,
}

/// One optimizer step's worth of data, all referencing windows owned by
/// the caller.
pub struct StepBatch<'a> {
    pub cls_windows: Vec<&'a Window>,
    pub cls_labels: Vec<WindowLabel>,
    pub trg_windows: Vec<&'a Window>,
    pub src_triplets: &'a [Triplet],
    pub trg_triplets: &'a [Triplet],
}

fn ensure_finite(value: f64, term: &str, step: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(format!("{term} at step {step}")))
    }
}

/// Adversarial warm-up factor in [0, 1): ramps the gradient-reversal
/// scale along 2/(1 + e^(-10p)) - 1 over training progress `p`, letting
/// the discriminator learn to separate domains before the encoder starts
/// fighting it.
pub fn grl_warmup(step: usize, total_steps: usize) -> f64 {
    let p = step as f64 / total_steps.max(1) as f64;
    2.0 / (1.0 + (-10.0 * p).exp()) - 1.0
}

/// Run one optimizer step over a mixed batch.
///
/// The classifier batch also serves as the discriminator's source half.
/// All windows pass through the encoder in a single fused batch; each
/// loss then reads its own row range. `mu` is the gradient-reversal scale
/// for this step (the training loop passes the warmed-up value). The
/// discriminator's parameters always receive the plain discriminator
/// gradients, while the encoder receives them reversed and scaled by
/// `mu * gamma`, so `gamma = 0` detaches the encoder from the domain loss
/// without stopping the discriminator itself from training.
pub fn train_step(
    state: &mut ModelState,
    opt: &mut Adam,
    batch: &StepBatch<'_>,
    weights: &LossWeights,
    head: HeadVariant,
    mu: f64,
    step: usize,
) -> Result<LossBreakdown> {
    let n_cls = batch.cls_windows.len();
    let n_trg = batch.trg_windows.len();
    let n_st = batch.src_triplets.len();
    let n_tt = batch.trg_triplets.len();

    let mut rows: Vec<&Window> = Vec::with_capacity(n_cls + n_trg + 3 * (n_st + n_tt));
    rows.extend(batch.cls_windows.iter().copied());
    rows.extend(batch.trg_windows.iter().copied());
    for triplets in [batch.src_triplets, batch.trg_triplets] {
        rows.extend(triplets.iter().map(|t| &t.anchor));
        rows.extend(triplets.iter().map(|t| &t.positive));
        rows.extend(triplets.iter().map(|t| &t.negative));
    }

    let x = state.batch_tensor(&rows)?;
    let reprs = state.encode_train(&x);

    let cls_end = n_cls;
    let trg_end = cls_end + n_trg;
    let sup_end = trg_end + 3 * n_st;
    let r_sup = reprs.slice(s![trg_end..sup_end, ..]);
    let (sa, rest) = r_sup.split_at(Axis(0), n_st);
    let (sp, sn) = rest.split_at(Axis(0), n_st);
    let r_tri = reprs.slice(s![sup_end.., ..]);
    let (ta, rest) = r_tri.split_at(Axis(0), n_tt);
    let (tp, tn) = rest.split_at(Axis(0), n_tt);

    let sup = sup_mean_margin_grad(sa, sp, sn, weights.margin)?;
    let l_sup = ensure_finite(sup.loss, "supervised contrastive term", step)?;
    let tri = self_triplet_grad(ta, tp, tn, weights.margin)?;
    let l_self = ensure_finite(tri.loss, "self-supervised triplet term", step)?;

    let r_cls = reprs.slice(s![..cls_end, ..]).to_owned();
    let embeds = state.classify_train(&r_cls);
    let cec = head_grad(head, embeds.view(), &batch.cls_labels, state.centre.view())?;
    let l_cls = ensure_finite(cec.loss, "classifier term", step)?;

    let r_disc = reprs.slice(s![..trg_end, ..]).to_owned();
    let probs = state.discriminate_train(&r_disc);
    let probs_slice = probs.as_slice().expect("contiguous probs");
    let disc = discriminator_grad(&probs_slice[..n_cls], &probs_slice[n_cls..])?;
    let l_disc = ensure_finite(disc.loss, "discriminator term", step)?;

    let l_total = ensure_finite(
        total_loss(l_sup, l_self, l_disc, l_cls, weights),
        "total loss",
        step,
    )?;

    let mut g_rows: Array2<f64> = Array2::zeros(reprs.dim());

    let g_cls_repr = state.classifier_backward(&(cec.embeddings * weights.lambda));
    let mut dst = g_rows.slice_mut(s![..cls_end, ..]);
    dst += &g_cls_repr;

    let g_probs = Array1::from_iter(disc.src.iter().chain(disc.trg.iter()).copied());
    let g_disc_out = state.discriminator_backward(&g_probs);
    let g_disc_enc = grl_backward(&g_disc_out, mu * weights.gamma);
    let mut dst = g_rows.slice_mut(s![..trg_end, ..]);
    dst += &g_disc_enc;

    let contributions = [
        (trg_end, sup.anchors * weights.alpha),
        (trg_end + n_st, sup.positives * weights.alpha),
        (trg_end + 2 * n_st, sup.negatives * weights.alpha),
        (sup_end, tri.anchors * weights.beta),
        (sup_end + n_tt, tri.positives * weights.beta),
        (sup_end + 2 * n_tt, tri.negatives * weights.beta),
    ];
    for (offset, grad) in contributions {
        let mut dst = g_rows.slice_mut(s![offset..offset + grad.nrows(), ..]);
        dst += &grad;
    }

    state.encoder_backward(&g_rows);
    opt.step(|f| state.visit_params(f));

    Ok(LossBreakdown {
        step,
        l_sup,
        l_self,
        l_disc,
        l_cls,
        l_total,
    })
}

/// Train on one (source, target) entity pair.
///
/// The labelled source split is the train split when it carries labels,
/// otherwise the test split; the target contributes its train split as
/// unlabelled windows. Both domains are standardized with their own
/// channel statistics. Returns the trained model (centre frozen from
/// before the first step) and the per-step loss log.
pub fn train(
    source: &EntityPair,
    target: &EntityPair,
    cfg: &TrainConfig,
) -> Result<(ModelState, Vec<LossBreakdown>)> {
    cfg.validate()?;
    let src_series = if source.train.labels.is_some() {
        &source.train
    } else {
        &source.test
    };
    if src_series.labels.is_none() {
        return Err(Error::LabelMissing(format!(
            "source entity {} has no labelled split",
            source.train.entity_id
        )));
    }
    let trg_series = &target.train;
    let dims = cfg.model.encoder.input_dims;
    if src_series.dims() != dims || trg_series.dims() != dims {
        return Err(Error::ShapeMismatch(format!(
            "model expects {dims} channels, source has {} and target has {}",
            src_series.dims(),
            trg_series.dims()
        )));
    }

    let ws = cfg.window_size();
    let src_std = standardize(src_series, &compute_channel_stats(&[src_series])?)?;
    let trg_std = standardize(trg_series, &compute_channel_stats(&[trg_series])?)?;
    let src_windows = make_windows(&src_std, ws, cfg.stride)?;
    let trg_windows = make_windows(&trg_std, ws, cfg.stride)?;
    let (s_anom, s_norm): (Vec<Window>, Vec<Window>) = src_windows
        .into_iter()
        .partition(|w| w.label == WindowLabel::Anomalous);

    let mut state = ModelState::new(cfg.model.clone())?;

    let mut centre_rng = stream_rng(cfg.seed, STREAM_CENTRE);
    if s_norm.is_empty() {
        return Err(Error::EmptyInput(
            "no normal source windows to initialize the centre".into(),
        ));
    }
    let n_centre = CENTRE_INIT_SAMPLES.min(s_norm.len());
    let centre_windows: Vec<&Window> = rand::seq::index::sample(&mut centre_rng, s_norm.len(), n_centre)
        .iter()
        .map(|i| &s_norm[i])
        .collect();
    state.init_centre(&centre_windows)?;

    let batch = cfg.batch_size;
    let n_src = s_norm.len() + s_anom.len();
    let mut steps = n_src.div_ceil(batch).max(1);
    if let Some(cap) = cfg.steps_per_epoch {
        steps = steps.min(cap);
    }
    // With injection on (p_real_neg < 1), anomalous classifier slots can
    // always be filled even if the source carries no labelled anomalies.
    let n_anom_req = if s_anom.is_empty() && cfg.p_real_neg >= 1.0 {
        0
    } else {
        ((CLS_ANOMALOUS_FRACTION * batch as f64).ceil() as usize).min(batch)
    };

    let mut opt = state.optimizer(cfg.learning_rate);
    let total_steps = cfg.epochs * steps;
    let avg_from = (cfg.average_tail_fraction > 0.0).then(|| {
        let tail = ((cfg.average_tail_fraction * total_steps as f64).ceil() as usize)
            .clamp(1, total_steps);
        total_steps - tail
    });
    let mut avg_sum = vec![0.0f64; if avg_from.is_some() { state.param_count() } else { 0 }];
    let mut avg_n = 0u64;
    let mut log = Vec::with_capacity(total_steps);
    for epoch in 0..cfg.epochs {
        let epoch_seed = derive_seed(cfg.seed, epoch as u64);
        let src_triplets =
            build_source_triplets(&s_norm, &s_anom, steps * batch, cfg.p_real_neg, epoch_seed)?;
        let trg_triplets = build_target_triplets_with(
            &trg_windows,
            cfg.k_proximity,
            steps * batch,
            epoch_seed,
            cfg.target_negative,
        )?;
        let mut batch_rng = indexed_rng(cfg.seed, STREAM_BATCH, epoch as u64);
        for step_in_epoch in 0..steps {
            // Anomalous slots mirror the triplet negatives: real labelled
            // windows with probability p_real_neg, injected ones otherwise,
            // so the head sees every injected anomaly class, not just the
            // classes the source happens to contain. Segment lengths are
            // randomized up to the whole window so the head also learns
            // fully warped or flattened windows, which the fixed-fraction
            // triplet negatives never produce.
            let mut injected_cls: Vec<Window> = Vec::new();
            let mut cls_windows: Vec<&Window> = Vec::with_capacity(batch);
            for _ in 0..n_anom_req {
                if !s_anom.is_empty() && batch_rng.gen_bool(cfg.p_real_neg) {
                    cls_windows.push(&s_anom[batch_rng.gen_range(0..s_anom.len())]);
                } else {
                    let base = &s_norm[batch_rng.gen_range(0..s_norm.len())];
                    let ty = if ws >= MIN_SEGMENT_WINDOW {
                        AnomalyType::ALL[batch_rng.gen_range(0..AnomalyType::ALL.len())]
                    } else {
                        AnomalyType::POINTWISE[batch_rng.gen_range(0..AnomalyType::POINTWISE.len())]
                    };
                    let mut ispec = InjectionSpec::new(ty, batch_rng.gen::<u64>());
                    if ty.is_segment_based() {
                        ispec.segment_fraction = Some(batch_rng.gen_range(0.3..=1.0));
                    }
                    injected_cls.push(inject(base, &ispec)?);
                }
            }
            cls_windows.extend(injected_cls.iter());
            for _ in n_anom_req..batch {
                cls_windows.push(&s_norm[batch_rng.gen_range(0..s_norm.len())]);
            }
            let cls_labels: Vec<WindowLabel> = cls_windows.iter().map(|w| w.label).collect();
            let trg_batch: Vec<&Window> = (0..batch)
                .map(|_| &trg_windows[batch_rng.gen_range(0..trg_windows.len())])
                .collect();
            let lo = step_in_epoch * batch;
            let step_batch = StepBatch {
                cls_windows,
                cls_labels,
                trg_windows: trg_batch,
                src_triplets: &src_triplets[lo..lo + batch],
                trg_triplets: &trg_triplets[lo..lo + batch],
            };
            let global_step = epoch * steps + step_in_epoch;
            let mu = cfg.model.grl_scale * grl_warmup(global_step, total_steps);
            let progress = global_step as f64 / (total_steps - 1).max(1) as f64;
            opt.lr = cfg.learning_rate * (1.0 - (1.0 - cfg.final_lr_fraction) * progress);
            log.push(train_step(
                &mut state,
                &mut opt,
                &step_batch,
                &cfg.weights,
                cfg.head,
                mu,
                global_step,
            )?);
            if avg_from.is_some_and(|from| global_step >= from) {
                let mut i = 0;
                state.visit_params(&mut |p, _| {
                    avg_sum[i] += *p;
                    i += 1;
                });
                avg_n += 1;
            }
        }
    }
    if avg_n > 0 {
        let n = avg_n as f64;
        let mut i = 0;
        state.visit_params(&mut |p, _| {
            *p = avg_sum[i] / n;
            i += 1;
        });
    }
    Ok((state, log))
}

/// Write the loss log as CSV: `step,l_sup,l_self,l_disc,l_cls,l_total`.
pub fn write_log_csv(path: &Path, log: &[LossBreakdown]) -> Result<()> {
    let mut out = String::from("step,l_sup,l_self,l_disc,l_cls,l_total\n");
    for row in log {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.step, row.l_sup, row.l_self, row.l_disc, row.l_cls, row.l_total
        ));
    }
    let mut file = std::fs::File::create(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SplitTag, TimeSeries};
    use crate::model::EncoderConfig;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_model(dims: usize, ws: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                input_dims: dims,
                window_size: ws,
                channels: vec![4, 6],
                kernel_size: 2,
                dilations: vec![1, 2],
                repr_dim: 8,
            },
            head_hidden: 6,
            embed_dim: 4,
            disc_hidden: 5,
            grl_scale: 1.0,
            init_seed: seed,
        }
    }

    fn tiny_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            model: tiny_model(2, 16, seed),
            stride: 2,
            epochs: 2,
            batch_size: 8,
            learning_rate: 1e-3,
            final_lr_fraction: 1.0,
            average_tail_fraction: 0.0,
            weights: LossWeights::default(),
            k_proximity: 5,
            p_real_neg: 0.5,
            steps_per_epoch: Some(3),
            target_negative: TargetNegative::Injected,
            head: HeadVariant::Cec,
            seed,
        }
    }

    fn toy_series(
        entity: &str,
        len: usize,
        dims: usize,
        labelled: bool,
        split: SplitTag,
        seed: u64,
    ) -> TimeSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = Array2::zeros((len, dims));
        for t in 0..len {
            for c in 0..dims {
                v[[t, c]] = (0.25 * t as f64 + c as f64).sin() + 0.05 * rng.gen_range(-1.0..1.0);
            }
        }
        let labels = if labelled {
            let mut l = vec![0u8; len];
            for t in len * 6 / 10..len * 7 / 10 {
                l[t] = 1;
                for c in 0..dims {
                    v[[t, c]] += 3.0;
                }
            }
            Some(l)
        } else {
            None
        };
        TimeSeries::new(entity, v, labels, split).unwrap()
    }

    fn toy_pair(labelled_train: bool, seed: u64) -> EntityPair {
        EntityPair {
            train: toy_series("e1", 120, 2, labelled_train, SplitTag::Train, seed),
            test: toy_series("e1", 120, 2, true, SplitTag::Test, seed + 1),
        }
    }

    /// Windows and labels for driving train_step directly.
    fn toy_step_inputs(
        cfg: &TrainConfig,
    ) -> (Vec<Window>, Vec<Window>, Vec<Window>, Vec<Triplet>, Vec<Triplet>) {
        let source = toy_pair(true, 5);
        let target = toy_pair(false, 6);
        let src_std =
            standardize(&source.train, &compute_channel_stats(&[&source.train]).unwrap()).unwrap();
        let trg_std =
            standardize(&target.train, &compute_channel_stats(&[&target.train]).unwrap()).unwrap();
        let src_windows = make_windows(&src_std, cfg.window_size(), cfg.stride).unwrap();
        let trg_windows = make_windows(&trg_std, cfg.window_size(), cfg.stride).unwrap();
        let (s_anom, s_norm): (Vec<Window>, Vec<Window>) = src_windows
            .into_iter()
            .partition(|w| w.label == WindowLabel::Anomalous);
        let src_triplets =
            build_source_triplets(&s_norm, &s_anom, cfg.batch_size, 0.5, 7).unwrap();
        let trg_triplets =
            build_target_triplets_with(&trg_windows, 5, cfg.batch_size, 7, TargetNegative::Injected)
                .unwrap();
        (s_norm, s_anom, trg_windows, src_triplets, trg_triplets)
    }

    fn step_batch<'a>(
        cfg: &TrainConfig,
        s_norm: &'a [Window],
        s_anom: &'a [Window],
        trg: &'a [Window],
        src_triplets: &'a [Triplet],
        trg_triplets: &'a [Triplet],
    ) -> StepBatch<'a> {
        let mut cls: Vec<&Window> = s_anom.iter().take(2).collect();
        cls.extend(s_norm.iter().take(cfg.batch_size - cls.len()));
        let labels = cls.iter().map(|w| w.label).collect();
        StepBatch {
            cls_windows: cls,
            cls_labels: labels,
            trg_windows: trg.iter().take(cfg.batch_size).collect(),
            src_triplets,
            trg_triplets,
        }
    }

    #[test]
    fn train_log_is_sequential_and_recombines() {
        let cfg = tiny_cfg(3);
        let (state, log) = train(&toy_pair(true, 1), &toy_pair(false, 2), &cfg).unwrap();
        assert_eq!(log.len(), cfg.epochs * 3);
        for (i, row) in log.iter().enumerate() {
            assert_eq!(row.step, i);
            let recomb = cfg.weights.alpha * row.l_sup
                + cfg.weights.beta * row.l_self
                + cfg.weights.gamma * row.l_disc
                + cfg.weights.lambda * row.l_cls;
            assert!((row.l_total - recomb).abs() < 1e-6);
            assert!(row.l_total.is_finite());
        }
        assert!(state.centre.iter().all(|c| c.abs() >= 0.1));
    }

    #[test]
    fn same_seed_trains_bit_identical_models() {
        let cfg = tiny_cfg(11);
        let (m1, log1) = train(&toy_pair(true, 1), &toy_pair(false, 2), &cfg).unwrap();
        let (m2, log2) = train(&toy_pair(true, 1), &toy_pair(false, 2), &cfg).unwrap();
        assert_eq!(m1.to_blob(), m2.to_blob());
        assert_eq!(log1, log2);
    }

    #[test]
    fn different_seeds_train_different_models() {
        let (m1, _) = train(&toy_pair(true, 1), &toy_pair(false, 2), &tiny_cfg(11)).unwrap();
        let (m2, _) = train(&toy_pair(true, 1), &toy_pair(false, 2), &tiny_cfg(12)).unwrap();
        assert_ne!(m1.to_blob(), m2.to_blob());
    }

    #[test]
    fn zero_weights_freeze_everything_but_the_discriminator() {
        let cfg = tiny_cfg(4);
        let (s_norm, s_anom, trg, st, tt) = toy_step_inputs(&cfg);
        let mut state = ModelState::new(cfg.model.clone()).unwrap();
        let refs: Vec<&Window> = s_norm.iter().take(8).collect();
        state.init_centre(&refs).unwrap();
        let before = state.to_blob();
        let disc_params = (cfg.model.disc_hidden * cfg.model.encoder.repr_dim
            + cfg.model.disc_hidden)
            + (cfg.model.disc_hidden + 1);
        let split = state.param_count() - disc_params;

        let weights = LossWeights {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            lambda: 0.0,
            margin: 1.0,
        };
        let mut opt = state.optimizer(1e-3);
        let batch = step_batch(&cfg, &s_norm, &s_anom, &trg, &st, &tt);
        train_step(&mut state, &mut opt, &batch, &weights, HeadVariant::Cec, 1.0, 0).unwrap();
        let after = state.to_blob();

        assert_eq!(before[..split], after[..split], "encoder or head moved");
        assert_ne!(
            before[split..state.param_count()],
            after[split..state.param_count()],
            "discriminator should keep training"
        );
        assert_eq!(
            before[state.param_count()..],
            after[state.param_count()..],
            "centre must stay frozen"
        );
    }

    #[test]
    fn grl_negates_and_scales_encoder_gradients() {
        let mu = 0.9;
        let gamma = 0.7;
        let mut cfg = tiny_cfg(8);
        cfg.model.grl_scale = mu;
        let (s_norm, _, trg, _, _) = toy_step_inputs(&cfg);
        let mut state = ModelState::new(cfg.model.clone()).unwrap();
        let rows: Vec<&Window> = s_norm.iter().take(4).chain(trg.iter().take(4)).collect();
        let x = state.batch_tensor(&rows).unwrap();

        let mut run = |reverse: bool| -> Vec<f64> {
            state.zero_grads();
            let reprs = state.encode_train(&x);
            let probs = state.discriminate_train(&reprs);
            let p = probs.as_slice().unwrap();
            let disc = discriminator_grad(&p[..4], &p[4..]).unwrap();
            let g_probs = Array1::from_iter(disc.src.iter().chain(disc.trg.iter()).copied());
            let g_out = state.discriminator_backward(&g_probs);
            let g_enc = if reverse {
                grl_backward(&g_out, mu * gamma)
            } else {
                g_out
            };
            state.encoder_backward(&g_enc);
            let mut grads = Vec::new();
            state.visit_params(&mut |_, g| grads.push(*g));
            grads
        };

        let reversed = run(true);
        let plain = run(false);
        let disc_params = (cfg.model.disc_hidden * cfg.model.encoder.repr_dim
            + cfg.model.disc_hidden)
            + (cfg.model.disc_hidden + 1);
        let split = reversed.len() - disc_params;
        for (i, (r, p)) in reversed.iter().zip(plain.iter()).enumerate() {
            if i < split {
                assert!(
                    (r - (-mu * gamma) * p).abs() <= 1e-12 * p.abs().max(1.0),
                    "encoder grad {i}: reversed {r} vs plain {p}"
                );
            } else {
                assert_eq!(r, p, "discriminator grad {i} must be unscaled");
            }
        }
    }

    #[test]
    fn unlabelled_train_split_falls_back_to_test_split() {
        let cfg = tiny_cfg(5);
        let source = toy_pair(false, 1);
        assert!(source.train.labels.is_none());
        let (_, log) = train(&source, &toy_pair(false, 2), &cfg).unwrap();
        assert!(!log.is_empty());
    }

    #[test]
    fn fully_unlabelled_source_is_rejected() {
        let cfg = tiny_cfg(5);
        let mut source = toy_pair(false, 1);
        source.test.labels = None;
        let err = train(&source, &toy_pair(false, 2), &cfg).unwrap_err();
        assert!(matches!(err, Error::LabelMissing(_)));
    }

    #[test]
    fn anomaly_free_source_still_trains() {
        let cfg = tiny_cfg(9);
        let mut source = toy_pair(true, 1);
        source.train.labels = Some(vec![0; source.train.len()]);
        let (_, log) = train(&source, &toy_pair(false, 2), &cfg).unwrap();
        assert_eq!(log.len(), cfg.epochs * 3);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut cfg = tiny_cfg(5);
        cfg.model.encoder.input_dims = 3;
        let err = train(&toy_pair(true, 1), &toy_pair(false, 2), &cfg).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
    }

    #[test]
    fn poisoned_parameters_abort_with_named_term() {
        let cfg = tiny_cfg(4);
        let (s_norm, s_anom, trg, st, tt) = toy_step_inputs(&cfg);
        let mut state = ModelState::new(cfg.model.clone()).unwrap();
        let refs: Vec<&Window> = s_norm.iter().take(8).collect();
        state.init_centre(&refs).unwrap();
        state.visit_params(&mut |p, _| *p = f64::NAN);
        let mut opt = state.optimizer(1e-3);
        let batch = step_batch(&cfg, &s_norm, &s_anom, &trg, &st, &tt);
        let err = train_step(&mut state, &mut opt, &batch, &LossWeights::default(), HeadVariant::Cec, 1.0, 0)
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)), "{err}");
        assert!(err.to_string().contains("term") || err.to_string().contains("distance"));
    }

    #[test]
    fn log_csv_round_trips_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let log = vec![
            LossBreakdown {
                step: 0,
                l_sup: 0.5,
                l_self: 0.25,
                l_disc: 0.7,
                l_cls: 0.1,
                l_total: 1.55,
            },
            LossBreakdown {
                step: 1,
                l_sup: 0.4,
                l_self: 0.2,
                l_disc: 0.69,
                l_cls: 0.09,
                l_total: 1.38,
            },
        ];
        write_log_csv(&path, &log).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,l_sup,l_self,l_disc,l_cls,l_total");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,0.5,0.25,"));
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let mut cfg = tiny_cfg(1);
        cfg.stride = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_cfg(1);
        cfg.learning_rate = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_cfg(1);
        cfg.p_real_neg = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_cfg(1);
        cfg.steps_per_epoch = Some(0);
        assert!(cfg.validate().is_err());
        assert!(tiny_cfg(1).validate().is_ok());
    }

    #[test]
    fn paper_default_matches_reference_hyperparameters() {
        let cfg = TrainConfig::paper_default(55, 0);
        assert_eq!(cfg.window_size(), 100);
        assert_eq!(cfg.stride, 1);
        assert_eq!(cfg.epochs, 20);
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.learning_rate, 1e-4);
        assert_eq!(cfg.weights.margin, 1.0);
        assert_eq!(cfg.k_proximity, 5);
    }

    #[test]
    fn train_config_json_round_trip_applies_defaults() {
        let json = r#"{"model": MODEL, "seed": 9}"#.replace(
            "MODEL",
            &serde_json::to_string(&tiny_model(2, 16, 9)).unwrap(),
        );
        let cfg: TrainConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg.epochs, 20);
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.target_negative, TargetNegative::Injected);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
