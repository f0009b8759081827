//! Training objectives: two contrastive terms, the domain-discriminator
//! BCE, the centre-based classifier term, and their weighted sum.
//!
//! All losses come in two flavours: a plain value function for evaluation
//! and a `*_grad` variant that additionally returns analytic gradients
//! with respect to the inputs (embeddings or probabilities). Gradients
//! follow the subgradient convention `max'(0) = 0`, so an inactive hinge
//! contributes exactly zero to both the value and the gradient.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::WindowLabel;
use crate::error::{Error, Result};

/// Lower clamp for BCE probabilities; the matching upper clamp is `1 - PROB_CLAMP`.
pub const PROB_CLAMP: f64 = 1e-7;

/// Scalar weights for the combined objective, plus the contrastive margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub margin: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            lambda: 1.0,
            margin: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("lambda", self.lambda),
            ("margin", self.margin),
        ];
        for (name, v) in named {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("loss weight {name}")));
            }
            if v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "loss weight {name} must be >= 0, got {v}"
                )));
            }
        }
        if self.margin <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "margin must be > 0, got {}",
                self.margin
            )));
        }
        Ok(())
    }
}

/// Loss value plus gradients for a contrastive term.
#[derive(Debug)]
pub struct ContrastiveGrads {
    pub loss: f64,
    pub anchors: Array2<f64>,
    pub positives: Array2<f64>,
    pub negatives: Array2<f64>,
}

/// Loss value plus gradients with respect to the raw probabilities.
#[derive(Debug)]
pub struct DiscriminatorGrads {
    pub loss: f64,
    pub src: Vec<f64>,
    pub trg: Vec<f64>,
}

/// Loss value plus gradient with respect to the embeddings.
#[derive(Debug)]
pub struct CecGrads {
    pub loss: f64,
    pub embeddings: Array2<f64>,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_pairs(anchors: &ArrayView2<'_, f64>, positives: &ArrayView2<'_, f64>) -> Result<()> {
    if anchors.nrows() == 0 {
        return Err(Error::EmptyInput("contrastive batch".into()));
    }
    if anchors.dim() != positives.dim() {
        return Err(Error::ShapeMismatch(format!(
            "anchors {:?} vs positives {:?}",
            anchors.dim(),
            positives.dim()
        )));
    }
    Ok(())
}

/// Mean-margin contrastive loss over a shared negative set.
///
/// Each anchor is pulled towards its positive and pushed away from the
/// average of all `|N|` negatives:
/// `(1/|B|) Σ_i max((1/|N|) Σ_j (‖a_i−p_i‖² − ‖a_i−n_j‖² + m), 0)`.
pub fn sup_mean_margin_loss(
    anchors: ArrayView2<'_, f64>,
    positives: ArrayView2<'_, f64>,
    negatives: ArrayView2<'_, f64>,
    margin: f64,
) -> Result<f64> {
    Ok(sup_mean_margin_grad(anchors, positives, negatives, margin)?.loss)
}

/// [`sup_mean_margin_loss`] with gradients. Negatives are shared, so
/// each negative row accumulates contributions from every active anchor.
pub fn sup_mean_margin_grad(
    anchors: ArrayView2<'_, f64>,
    positives: ArrayView2<'_, f64>,
    negatives: ArrayView2<'_, f64>,
    margin: f64,
) -> Result<ContrastiveGrads> {
    check_pairs(&anchors, &positives)?;
    if negatives.nrows() == 0 {
        return Err(Error::EmptyInput("negative set".into()));
    }
    if negatives.ncols() != anchors.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "anchors dim {} vs negatives dim {}",
            anchors.ncols(),
            negatives.ncols()
        )));
    }
    let b = anchors.nrows();
    let n = negatives.nrows();
    let (inv_b, inv_n) = (1.0 / b as f64, 1.0 / n as f64);
    let mut ga = Array2::zeros(anchors.dim());
    let mut gp = Array2::zeros(positives.dim());
    let mut gn = Array2::zeros(negatives.dim());
    let mut loss = 0.0;
    for i in 0..b {
        let a = anchors.row(i);
        let p = positives.row(i);
        let d_pos = sq_dist(a, p);
        let mean_neg: f64 = (0..n).map(|j| sq_dist(a, negatives.row(j))).sum::<f64>() * inv_n;
        let hinge = d_pos - mean_neg + margin;
        if hinge <= 0.0 {
            continue;
        }
        loss += hinge;
        for k in 0..anchors.ncols() {
            let diff_ap = a[k] - p[k];
            ga[[i, k]] += inv_b * 2.0 * diff_ap;
            gp[[i, k]] -= inv_b * 2.0 * diff_ap;
        }
        for j in 0..n {
            let neg = negatives.row(j);
            for k in 0..anchors.ncols() {
                let diff_an = a[k] - neg[k];
                ga[[i, k]] -= inv_b * inv_n * 2.0 * diff_an;
                gn[[j, k]] += inv_b * inv_n * 2.0 * diff_an;
            }
        }
    }
    Ok(ContrastiveGrads {
        loss: loss * inv_b,
        anchors: ga,
        positives: gp,
        negatives: gn,
    })
}

/// Per-row triplet loss: `(1/|B|) Σ_i max(‖a_i−p_i‖² − ‖a_i−n_i‖² + m, 0)`.
pub fn self_triplet_loss(
    anchors: ArrayView2<'_, f64>,
    positives: ArrayView2<'_, f64>,
    negatives: ArrayView2<'_, f64>,
    margin: f64,
) -> Result<f64> {
    Ok(self_triplet_grad(anchors, positives, negatives, margin)?.loss)
}

/// [`self_triplet_loss`] with gradients.
pub fn self_triplet_grad(
    anchors: ArrayView2<'_, f64>,
    positives: ArrayView2<'_, f64>,
    negatives: ArrayView2<'_, f64>,
    margin: f64,
) -> Result<ContrastiveGrads> {
    check_pairs(&anchors, &positives)?;
    if negatives.dim() != anchors.dim() {
        return Err(Error::ShapeMismatch(format!(
            "anchors {:?} vs negatives {:?}",
            anchors.dim(),
            negatives.dim()
        )));
    }
    let b = anchors.nrows();
    let inv_b = 1.0 / b as f64;
    let mut ga = Array2::zeros(anchors.dim());
    let mut gp = Array2::zeros(positives.dim());
    let mut gn = Array2::zeros(negatives.dim());
    let mut loss = 0.0;
    for i in 0..b {
        let a = anchors.row(i);
        let p = positives.row(i);
        let neg = negatives.row(i);
        let hinge = sq_dist(a, p) - sq_dist(a, neg) + margin;
        if hinge <= 0.0 {
            continue;
        }
        loss += hinge;
        for k in 0..anchors.ncols() {
            let diff_ap = a[k] - p[k];
            let diff_an = a[k] - neg[k];
            ga[[i, k]] += inv_b * 2.0 * (diff_ap - diff_an);
            gp[[i, k]] -= inv_b * 2.0 * diff_ap;
            gn[[i, k]] += inv_b * 2.0 * diff_an;
        }
    }
    Ok(ContrastiveGrads {
        loss: loss * inv_b,
        anchors: ga,
        positives: gp,
        negatives: gn,
    })
}

/// Domain-discriminator BCE: source windows are the positive class.
///
/// `−(1/(|S|+|T|)) (Σ log p_src + Σ log(1 − p_trg))` with probabilities
/// clamped to `[1e−7, 1−1e−7]`.
pub fn discriminator_loss(src_probs: &[f64], trg_probs: &[f64]) -> Result<f64> {
    Ok(discriminator_grad(src_probs, trg_probs)?.loss)
}

/// [`discriminator_loss`] with gradients with respect to each probability.
/// A clamped probability gets a zero gradient.
pub fn discriminator_grad(src_probs: &[f64], trg_probs: &[f64]) -> Result<DiscriminatorGrads> {
    if src_probs.is_empty() && trg_probs.is_empty() {
        return Err(Error::EmptyInput("discriminator batches".into()));
    }
    let inv_n = 1.0 / (src_probs.len() + trg_probs.len()) as f64;
    let mut loss = 0.0;
    let mut gs = vec![0.0; src_probs.len()];
    let mut gt = vec![0.0; trg_probs.len()];
    for (g, &p) in gs.iter_mut().zip(src_probs) {
        let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        loss -= pc.ln();
        if p > PROB_CLAMP && p < 1.0 - PROB_CLAMP {
            *g = -inv_n / p;
        }
    }
    for (g, &p) in gt.iter_mut().zip(trg_probs) {
        let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        loss -= (1.0 - pc).ln();
        if p > PROB_CLAMP && p < 1.0 - PROB_CLAMP {
            *g = inv_n / (1.0 - p);
        }
    }
    Ok(DiscriminatorGrads {
        loss: loss * inv_n,
        src: gs,
        trg: gt,
    })
}

/// Largest per-sample value either branch of the centre loss can take,
/// i.e. `−ln(1e−7)`; beyond it the probability clamp is active and the
/// gradient is zero.
const CEC_TERM_CAP: f64 = 16.11809565095832;

/// Centre-based entropy classifier loss.
///
/// With `d² = ‖g − c‖²` and pseudo-probability of anomaly
/// `p = 1 − exp(−d²)`, this is BCE against the window labels. A normal
/// sample's term reduces to `d²` exactly, so normals are pulled towards
/// the centre and anomalies pushed out.
pub fn cec_loss(
    embeddings: ArrayView2<'_, f64>,
    labels: &[WindowLabel],
    centre: ArrayView1<'_, f64>,
) -> Result<f64> {
    Ok(cec_grad(embeddings, labels, centre)?.loss)
}

/// [`cec_loss`] with the gradient with respect to the embeddings. The
/// centre is a frozen buffer and gets no gradient.
pub fn cec_grad(
    embeddings: ArrayView2<'_, f64>,
    labels: &[WindowLabel],
    centre: ArrayView1<'_, f64>,
) -> Result<CecGrads> {
    if embeddings.nrows() == 0 {
        return Err(Error::EmptyInput("classifier batch".into()));
    }
    if embeddings.nrows() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} embeddings vs {} labels",
            embeddings.nrows(),
            labels.len()
        )));
    }
    if embeddings.ncols() != centre.len() {
        return Err(Error::ShapeMismatch(format!(
            "embedding dim {} vs centre dim {}",
            embeddings.ncols(),
            centre.len()
        )));
    }
    let b = embeddings.nrows();
    let inv_b = 1.0 / b as f64;
    let mut grad = Array2::zeros(embeddings.dim());
    let mut loss = 0.0;
    for i in 0..b {
        let g = embeddings.row(i);
        let d2 = sq_dist(g, centre);
        if !d2.is_finite() {
            return Err(Error::NonFinite(format!(
                "squared centre distance of classifier batch row {i}"
            )));
        }
        // d(term)/d(d²); the chain through d² is 2(g − c).
        let dterm = match labels[i] {
            WindowLabel::Normal => {
                if d2 <= CEC_TERM_CAP {
                    loss += d2;
                    1.0
                } else {
                    loss += CEC_TERM_CAP;
                    0.0
                }
            }
            WindowLabel::Anomalous => {
                let p = -(-d2).exp_m1();
                if p > PROB_CLAMP && p < 1.0 - PROB_CLAMP {
                    loss -= p.ln();
                    -(-d2).exp() / p
                } else {
                    loss += if p <= PROB_CLAMP {
                        CEC_TERM_CAP
                    } else {
                        -(1.0 - PROB_CLAMP).ln()
                    };
                    0.0
                }
            }
            WindowLabel::Unknown => {
                return Err(Error::LabelMissing(format!(
                    "classifier batch row {i} has an unknown label"
                )));
            }
        };
        if dterm != 0.0 {
            for k in 0..embeddings.ncols() {
                grad[[i, k]] = inv_b * dterm * 2.0 * (g[k] - centre[k]);
            }
        }
    }
    Ok(CecGrads {
        loss: loss * inv_b,
        embeddings: grad,
    })
}

/// Classifier-head variants. `Cec` is the main pipeline; the other two
/// exist for head ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadVariant {
    #[default]
    Cec,
    PlainBce,
    DeepSvdd,
}

/// Head-variant dispatch for the classification term. All variants share
/// the [`CecGrads`] shape: a scalar loss plus gradients on the head
/// embeddings.
pub fn head_grad(
    head: HeadVariant,
    embeddings: ArrayView2<'_, f64>,
    labels: &[WindowLabel],
    centre: ArrayView1<'_, f64>,
) -> Result<CecGrads> {
    match head {
        HeadVariant::Cec => cec_grad(embeddings, labels, centre),
        HeadVariant::PlainBce => plain_bce_grad(embeddings, labels),
        HeadVariant::DeepSvdd => deepsvdd_grad(embeddings, labels, centre),
    }
}

/// Anomaly score under a head variant: squared centre distance for the
/// distance-based heads, predicted anomaly probability for `PlainBce`.
pub fn head_score(
    head: HeadVariant,
    embedding: ArrayView1<'_, f64>,
    centre: ArrayView1<'_, f64>,
) -> f64 {
    match head {
        HeadVariant::Cec | HeadVariant::DeepSvdd => sq_dist(embedding, centre),
        HeadVariant::PlainBce => sigmoid(mean_logit(embedding)),
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn mean_logit(embedding: ArrayView1<'_, f64>) -> f64 {
    embedding.mean().unwrap_or(0.0)
}

fn check_cls_batch(
    embeddings: ArrayView2<'_, f64>,
    labels: &[WindowLabel],
) -> Result<()> {
    if embeddings.nrows() == 0 {
        return Err(Error::EmptyInput("classifier batch".into()));
    }
    if embeddings.nrows() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} embeddings vs {} labels",
            embeddings.nrows(),
            labels.len()
        )));
    }
    Ok(())
}

/// Logistic head: the logit is the mean embedding coordinate and the loss
/// is standard BCE against the labels, in the stable softplus form.
pub fn plain_bce_grad(
    embeddings: ArrayView2<'_, f64>,
    labels: &[WindowLabel],
) -> Result<CecGrads> {
    check_cls_batch(embeddings, labels)?;
    let b = embeddings.nrows();
    let k = embeddings.ncols();
    let inv_b = 1.0 / b as f64;
    let mut grad = Array2::zeros(embeddings.dim());
    let mut loss = 0.0;
    for i in 0..b {
        let y = match labels[i] {
            WindowLabel::Normal => 0.0,
            WindowLabel::Anomalous => 1.0,
            WindowLabel::Unknown => {
                return Err(Error::LabelMissing(format!(
                    "classifier batch row {i} has an unknown label"
                )));
            }
        };
        let logit = mean_logit(embeddings.row(i));
        if !logit.is_finite() {
            return Err(Error::NonFinite(format!(
                "logit of classifier batch row {i}"
            )));
        }
        let softplus = logit.max(0.0) + (-logit.abs()).exp().ln_1p();
        loss += softplus - y * logit;
        let dlogit = sigmoid(logit) - y;
        grad.row_mut(i).fill(inv_b * dlogit / k as f64);
    }
    Ok(CecGrads {
        loss: loss * inv_b,
        embeddings: grad,
    })
}

/// One-class head: mean squared centre distance over the normal rows
/// only; anomalous rows never contribute loss or gradient.
pub fn deepsvdd_grad(
    embeddings: ArrayView2<'_, f64>,
    labels: &[WindowLabel],
    centre: ArrayView1<'_, f64>,
) -> Result<CecGrads> {
    check_cls_batch(embeddings, labels)?;
    if embeddings.ncols() != centre.len() {
        return Err(Error::ShapeMismatch(format!(
            "embedding dim {} vs centre dim {}",
            embeddings.ncols(),
            centre.len()
        )));
    }
    let normals: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| match l {
            WindowLabel::Normal => Some(Ok(i)),
            WindowLabel::Anomalous => None,
            WindowLabel::Unknown => Some(Err(Error::LabelMissing(format!(
                "classifier batch row {i} has an unknown label"
            )))),
        })
        .collect::<Result<_>>()?;
    let mut grad = Array2::zeros(embeddings.dim());
    if normals.is_empty() {
        return Ok(CecGrads {
            loss: 0.0,
            embeddings: grad,
        });
    }
    let inv_n = 1.0 / normals.len() as f64;
    let mut loss = 0.0;
    for &i in &normals {
        let g = embeddings.row(i);
        let d2 = sq_dist(g, centre);
        if !d2.is_finite() {
            return Err(Error::NonFinite(format!(
                "squared centre distance of classifier batch row {i}"
            )));
        }
        loss += d2;
        for j in 0..embeddings.ncols() {
            grad[[i, j]] = inv_n * 2.0 * (g[j] - centre[j]);
        }
    }
    Ok(CecGrads {
        loss: loss * inv_n,
        embeddings: grad,
    })
}

/// Weighted sum `α·l_sup + β·l_self + γ·l_disc + λ·l_cls`.
pub fn total_loss(l_sup: f64, l_self: f64, l_disc: f64, l_cls: f64, w: &LossWeights) -> f64 {
    w.alpha * l_sup + w.beta * l_self + w.gamma * l_disc + w.lambda * l_cls
}
