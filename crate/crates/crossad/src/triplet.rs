//! Triplet construction for the contrastive losses: supervised triplets
//! on the labelled source domain, proximity-based self-supervised
//! triplets on the unlabelled target domain.

use crate::data::{Window, WindowLabel};
use crate::error::{Error, Result};
use crate::inject::inject_random;
use crate::rng::{stream_rng, STREAM_TRIPLET_SOURCE, STREAM_TRIPLET_TARGET};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletDomain {
    Source,
    Target,
}

#[derive(Debug, Clone)]
pub struct Triplet {
    pub anchor: Window,
    pub positive: Window,
    pub negative: Window,
    pub domain: TripletDomain,
}

/// How target-triplet negatives are produced. `Injected` is the standard
/// path; `Distant` swaps in a real window far from the anchor (at least
/// `min_gap` timesteps away, or from another entity) for injection-free
/// ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetNegative {
    Injected,
    Distant { min_gap: usize },
}

impl Default for TargetNegative {
    fn default() -> Self {
        TargetNegative::Injected
    }
}

/// Build `batch` supervised source triplets. Anchors and positives are
/// distinct windows drawn uniformly from `s_norm`; each negative is, with
/// probability `p_real_neg`, a real anomalous window from `s_anom` (when
/// nonempty), otherwise an injected copy of the anchor.
pub fn build_source_triplets(
    s_norm: &[Window],
    s_anom: &[Window],
    batch: usize,
    p_real_neg: f64,
    seed: u64,
) -> Result<Vec<Triplet>> {
    if s_norm.len() < 2 {
        return Err(Error::NoPositivePair(format!(
            "need at least 2 normal source windows, found {}",
            s_norm.len()
        )));
    }
    if batch == 0 {
        return Err(Error::InvalidParameter("batch must be positive".into()));
    }
    if !(0.0..=1.0).contains(&p_real_neg) {
        return Err(Error::InvalidParameter(format!(
            "p_real_neg {p_real_neg} outside [0, 1]"
        )));
    }
    if let Some(w) = s_norm.iter().find(|w| w.label != WindowLabel::Normal) {
        return Err(Error::InvalidParameter(format!(
            "non-normal window (start {}) in source normal pool",
            w.start
        )));
    }
    if let Some(w) = s_anom.iter().find(|w| w.label != WindowLabel::Anomalous) {
        return Err(Error::InvalidParameter(format!(
            "non-anomalous window (start {}) in source anomaly pool",
            w.start
        )));
    }

    let mut rng = stream_rng(seed, STREAM_TRIPLET_SOURCE);
    let mut out = Vec::with_capacity(batch);
    for _ in 0..batch {
        let anchor_idx = rng.gen_range(0..s_norm.len());
        let positive_idx = loop {
            let idx = rng.gen_range(0..s_norm.len());
            if idx != anchor_idx {
                break idx;
            }
        };
        let anchor = s_norm[anchor_idx].clone();
        let negative = if !s_anom.is_empty() && rng.gen_bool(p_real_neg) {
            s_anom[rng.gen_range(0..s_anom.len())].clone()
        } else {
            inject_random(&anchor, rng.gen::<u64>())?
        };
        out.push(Triplet {
            positive: s_norm[positive_idx].clone(),
            anchor,
            negative,
            domain: TripletDomain::Source,
        });
    }
    Ok(out)
}

/// Build `batch` self-supervised target triplets: anchors drawn uniformly,
/// positives drawn uniformly from same-entity windows within
/// `k_proximity` timesteps of the anchor's start, negatives injected from
/// the anchor (or swapped for distant windows, per `negative_mode`).
/// Anchors without any eligible positive are redrawn.
pub fn build_target_triplets_with(
    t_windows: &[Window],
    k_proximity: usize,
    batch: usize,
    seed: u64,
    negative_mode: TargetNegative,
) -> Result<Vec<Triplet>> {
    if t_windows.len() < 2 {
        return Err(Error::NoPositivePair(format!(
            "need at least 2 target windows, found {}",
            t_windows.len()
        )));
    }
    if k_proximity == 0 || batch == 0 {
        return Err(Error::InvalidParameter(
            "k_proximity and batch must be positive".into(),
        ));
    }

    // start indices per entity, sorted, for proximity lookups
    let mut by_entity: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, w) in t_windows.iter().enumerate() {
        by_entity.entry(w.entity_id.as_str()).or_default().push(i);
    }
    for idxs in by_entity.values_mut() {
        idxs.sort_by_key(|&i| t_windows[i].start);
    }

    let positive_candidates = |i: usize| -> Vec<usize> {
        let w = &t_windows[i];
        by_entity[w.entity_id.as_str()]
            .iter()
            .copied()
            .filter(|&j| {
                j != i && t_windows[j].start.abs_diff(w.start) <= k_proximity
            })
            .collect()
    };
    let distant_candidates = |i: usize, min_gap: usize| -> Vec<usize> {
        let w = &t_windows[i];
        (0..t_windows.len())
            .filter(|&j| {
                t_windows[j].entity_id != w.entity_id
                    || t_windows[j].start.abs_diff(w.start) >= min_gap
            })
            .collect()
    };

    let eligible = |i: usize| -> bool {
        if positive_candidates(i).is_empty() {
            return false;
        }
        match negative_mode {
            TargetNegative::Injected => true,
            TargetNegative::Distant { min_gap } => !distant_candidates(i, min_gap).is_empty(),
        }
    };
    if !(0..t_windows.len()).any(eligible) {
        return Err(Error::NoPositivePair(format!(
            "no target window has a neighbor within {k_proximity} timesteps"
        )));
    }

    let mut rng = stream_rng(seed, STREAM_TRIPLET_TARGET);
    let mut out = Vec::with_capacity(batch);
    for _ in 0..batch {
        let anchor_idx = loop {
            let idx = rng.gen_range(0..t_windows.len());
            if eligible(idx) {
                break idx;
            }
        };
        let anchor = t_windows[anchor_idx].clone();
        let positives = positive_candidates(anchor_idx);
        let positive = t_windows[positives[rng.gen_range(0..positives.len())]].clone();
        let negative = match negative_mode {
            TargetNegative::Injected => inject_random(&anchor, rng.gen::<u64>())?,
            TargetNegative::Distant { min_gap } => {
                let pool = distant_candidates(anchor_idx, min_gap);
                t_windows[pool[rng.gen_range(0..pool.len())]].clone()
            }
        };
        out.push(Triplet {
            anchor,
            positive,
            negative,
            domain: TripletDomain::Target,
        });
    }
    Ok(out)
}

pub fn build_target_triplets(
    t_windows: &[Window],
    k_proximity: usize,
    batch: usize,
    seed: u64,
) -> Result<Vec<Triplet>> {
    build_target_triplets_with(t_windows, k_proximity, batch, seed, TargetNegative::Injected)
}
