//! Deterministic two-domain synthetic benchmark: sinusoidal base signals
//! with injected anomaly segments, plus brute-force metric oracles used to
//! cross-check the evaluation pipeline.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{compute_channel_stats, SplitTag, TimeSeries};
use crate::dataset::{save_csv_entity, DatasetBundle, EntityPair};
use crate::error::{Error, Result};
use crate::inject::{add_trend, flatten_segment, point_outlier, resample_segment, AnomalyType};
use crate::rng::{indexed_rng, STREAM_SYNTH};

/// Largest instance the quadratic oracles accept.
pub const ORACLE_MAX_POINTS: usize = 10_000;
/// Fraction of channels perturbed per anomaly segment.
const SEGMENT_CHANNEL_FRACTION: f64 = 0.3;
/// Injected channels must differ from the base by at least this multiple
/// of the channel std somewhere in the segment.
const SEGMENT_MIN_DEVIATION: f64 = 0.5;

/// Signal parameters for one domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainParams {
    /// Scale applied to the whole channel (signal and noise alike), so
    /// amplitude ratios carry through to raw std ratios.
    pub amplitude: f64,
    /// Multiplier on the base sinusoid frequencies.
    pub frequency: f64,
    /// Noise std relative to a unit-amplitude channel.
    pub noise: f64,
    /// Anomaly classes injected into this domain.
    pub classes: Vec<AnomalyType>,
}

/// Which half of the benchmark a series belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainSide {
    Source,
    Target,
}

impl DomainSide {
    fn entity_id(self) -> &'static str {
        match self {
            DomainSide::Source => "src",
            DomainSide::Target => "trg",
        }
    }
}

/// Full description of a two-domain benchmark instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    /// Train-split length per domain; the test split is half as long.
    pub length: usize,
    pub dims: usize,
    /// Reference window size; anomaly segments span `[ws, 3*ws]` steps.
    pub window_size: usize,
    /// Fraction of timesteps covered by anomaly segments, per split.
    pub anomaly_rate: f64,
    pub source: DomainParams,
    pub target: DomainParams,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            length: 20_000,
            dims: 5,
            window_size: 32,
            anomaly_rate: 0.08,
            source: DomainParams {
                amplitude: 1.0,
                frequency: 1.0,
                noise: 0.1,
                classes: vec![AnomalyType::Global, AnomalyType::Trend],
            },
            target: DomainParams {
                amplitude: 1.5,
                frequency: 1.3,
                noise: 0.1,
                classes: vec![AnomalyType::Seasonal, AnomalyType::Shapelet],
            },
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.anomaly_rate > 0.0 && self.anomaly_rate <= 0.3) {
            return Err(Error::InvalidParameter(format!(
                "anomaly_rate must be in (0, 0.3], got {}",
                self.anomaly_rate
            )));
        }
        if self.dims == 0 {
            return Err(Error::InvalidParameter("dims must be positive".into()));
        }
        if self.window_size < 8 {
            return Err(Error::InvalidParameter(format!(
                "window_size must be at least 8, got {}",
                self.window_size
            )));
        }
        if self.length < 8 * self.window_size {
            return Err(Error::InvalidParameter(format!(
                "length {} too short for window_size {}",
                self.length, self.window_size
            )));
        }
        for (name, p) in [("source", &self.source), ("target", &self.target)] {
            if p.classes.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "{name} domain has no anomaly classes"
                )));
            }
            if !(p.amplitude > 0.0 && p.amplitude.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} amplitude must be positive and finite"
                )));
            }
            if !(p.frequency > 0.0 && p.frequency.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} frequency must be positive and finite"
                )));
            }
            if !(p.noise >= 0.0 && p.noise.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} noise must be non-negative and finite"
                )));
            }
        }
        Ok(())
    }

    fn params(&self, side: DomainSide) -> &DomainParams {
        match side {
            DomainSide::Source => &self.source,
            DomainSide::Target => &self.target,
        }
    }

    fn split_length(&self, split: SplitTag) -> usize {
        match split {
            SplitTag::Train => self.length,
            SplitTag::Test => self.length / 2,
        }
    }
}

fn split_index(side: DomainSide, split: SplitTag) -> u64 {
    match (side, split) {
        (DomainSide::Source, SplitTag::Train) => 0,
        (DomainSide::Source, SplitTag::Test) => 1,
        (DomainSide::Target, SplitTag::Train) => 2,
        (DomainSide::Target, SplitTag::Test) => 3,
    }
}

/// Clean base signal: per channel, two incommensurate sinusoids plus
/// uniform noise, the whole channel scaled by the domain amplitude.
fn base_signal(len: usize, dims: usize, p: &DomainParams, rng: &mut ChaCha8Rng) -> Array2<f64> {
    // Uniform on [-a, a] has std a / sqrt(3); widen so `noise` is the std.
    let noise_half_width = p.noise * 3f64.sqrt();
    let mut values = Array2::zeros((len, dims));
    for c in 0..dims {
        let w1 = TAU * p.frequency * (1.0 + 0.15 * c as f64) / 48.0;
        let w2 = TAU * p.frequency * (1.0 + 0.40 * c as f64) / 17.0;
        let phase1 = rng.gen_range(0.0..TAU);
        let phase2 = rng.gen_range(0.0..TAU);
        for t in 0..len {
            let ft = t as f64;
            let signal = (w1 * ft + phase1).sin() + 0.5 * (w2 * ft + phase2).sin();
            let noise = rng.gen_range(-noise_half_width..noise_half_width);
            values[[t, c]] = p.amplitude * (signal + noise);
        }
    }
    values
}

/// Pick non-overlapping anomaly segments covering roughly
/// `rate * len` timesteps, each `window_size ..= 3*window_size` long so
/// every anomalous event spans at least one full detection window.
fn plan_segments(
    len: usize,
    window_size: usize,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    let target = ((rate * len as f64).round() as usize).max(1);
    let min_len = window_size;
    let max_len = 3 * window_size;
    let guard = window_size;
    let mut segments: Vec<(usize, usize)> = Vec::new();
    let mut covered = 0;
    let mut attempts = 0;
    while covered < target && attempts < 100_000 {
        attempts += 1;
        let mut seg_len = rng.gen_range(min_len..=max_len);
        let remaining = target - covered;
        if seg_len > remaining {
            seg_len = remaining.max(min_len);
        }
        if guard + seg_len + guard >= len {
            break;
        }
        let start = rng.gen_range(guard..len - guard - seg_len);
        let clear = segments
            .iter()
            .all(|&(s, l)| start + seg_len + guard <= s || s + l + guard <= start);
        if clear {
            segments.push((start, seg_len));
            covered += seg_len;
        }
    }
    segments.sort_unstable();
    segments
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Perturb `values` over one segment on a random subset of channels,
/// reusing the injection transforms at series level.
fn apply_segment(
    values: &mut Array2<f64>,
    start: usize,
    len: usize,
    class: AnomalyType,
    mean: &[f64],
    std: &[f64],
    rng: &mut ChaCha8Rng,
) {
    let dims = values.ncols();
    let n_ch = ((SEGMENT_CHANNEL_FRACTION * dims as f64).ceil() as usize).clamp(1, dims);
    let channels = sample(rng, dims, n_ch).into_vec();
    for ch in channels {
        let orig: Vec<f64> = values.column(ch).to_vec();
        let mut col = orig.clone();
        let sigma = std[ch];
        match class {
            AnomalyType::Global | AnomalyType::Contextual => {
                let (lo, hi) = if class == AnomalyType::Global {
                    (3.0, 6.0)
                } else {
                    (1.5, 3.0)
                };
                let k = rng.gen_range(lo..hi);
                let positive = rng.gen_bool(0.5);
                for t in start..start + len {
                    point_outlier(&mut col, t, mean[ch], sigma, k, positive);
                }
            }
            AnomalyType::Trend => {
                let k = rng.gen_range(1.0..3.0);
                let positive = rng.gen_bool(0.5);
                let slope = k * sigma / len as f64;
                let slope = if positive { slope } else { -slope };
                add_trend(&mut col[start..start + len], 0, slope);
            }
            AnomalyType::Seasonal => {
                let factor = if rng.gen_bool(0.5) { 2.0 } else { 0.5 };
                resample_segment(&mut col, start, len, factor);
            }
            AnomalyType::Shapelet => {
                flatten_segment(&mut col, start, len, 0.1 * sigma, rng);
            }
        }
        if max_abs_diff(&col, &orig) < SEGMENT_MIN_DEVIATION * sigma {
            for v in col[start..start + len].iter_mut() {
                *v += sigma;
            }
        }
        values.column_mut(ch).assign(&Array1::from(col));
    }
}

fn generate_with_segments(
    spec: &SynthSpec,
    side: DomainSide,
    split: SplitTag,
) -> Result<(TimeSeries, Vec<(usize, usize)>)> {
    spec.validate()?;
    let params = spec.params(side);
    let len = spec.split_length(split);
    let mut rng = indexed_rng(spec.seed, STREAM_SYNTH, split_index(side, split));

    let mut values = base_signal(len, spec.dims, params, &mut rng);
    let base = TimeSeries::new("base", values.clone(), None, split)?;
    let stats = compute_channel_stats(&[&base])?;

    let segments = plan_segments(len, spec.window_size, spec.anomaly_rate, &mut rng);
    for &(start, seg_len) in &segments {
        let class = params.classes[rng.gen_range(0..params.classes.len())];
        apply_segment(
            &mut values,
            start,
            seg_len,
            class,
            &stats.mean,
            &stats.std,
            &mut rng,
        );
    }

    let mut labels = vec![0u8; len];
    for &(start, seg_len) in &segments {
        labels[start..start + seg_len].fill(1);
    }
    let series = TimeSeries::new(side.entity_id(), values, Some(labels), split)?;
    Ok((series, segments))
}

/// Generate one split of one domain. Deterministic under `spec.seed`;
/// every (side, split) pair draws from its own stream.
pub fn generate_series(spec: &SynthSpec, side: DomainSide, split: SplitTag) -> Result<TimeSeries> {
    generate_with_segments(spec, side, split).map(|(series, _)| series)
}

/// Generate the train and test splits of one domain.
pub fn generate_domain(spec: &SynthSpec, side: DomainSide) -> Result<EntityPair> {
    Ok(EntityPair {
        train: generate_series(spec, side, SplitTag::Train)?,
        test: generate_series(spec, side, SplitTag::Test)?,
    })
}

/// Generate the full benchmark as (source, target) bundles.
pub fn generate_benchmark(spec: &SynthSpec) -> Result<(DatasetBundle, DatasetBundle)> {
    let source = DatasetBundle::new(
        "synth-source",
        vec![generate_domain(spec, DomainSide::Source)?],
    )?;
    let target = DatasetBundle::new(
        "synth-target",
        vec![generate_domain(spec, DomainSide::Target)?],
    )?;
    Ok((source, target))
}

/// Write the benchmark under `root/source` and `root/target` in the
/// `csv_dir` layout, returning the two dataset roots.
pub fn write_benchmark(spec: &SynthSpec, root: &Path) -> Result<(PathBuf, PathBuf)> {
    let (source, target) = generate_benchmark(spec)?;
    let source_dir = root.join("source");
    let target_dir = root.join("target");
    for (dir, bundle) in [(&source_dir, &source), (&target_dir, &target)] {
        for entity in &bundle.entities {
            save_csv_entity(dir, &entity.train)?;
            save_csv_entity(dir, &entity.test)?;
        }
    }
    Ok((source_dir, target_dir))
}

fn check_oracle_input(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.len() > ORACLE_MAX_POINTS {
        return Err(Error::InvalidParameter(format!(
            "oracle metrics accept at most {ORACLE_MAX_POINTS} points, got {}",
            scores.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {bad}")));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::InvalidParameter("labels must be 0 or 1".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::UndefinedMetric(
            "metric needs both classes present".into(),
        ));
    }
    Ok(())
}

/// AUROC by explicit enumeration of positive/negative pairs, counting
/// ties as half a win. Quadratic; the reference for the ranking version.
pub fn oracle_auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_oracle_input(scores, labels)?;
    let mut wins = 0.0;
    let mut pairs = 0usize;
    for (sp, _) in scores.iter().zip(labels).filter(|(_, &l)| l == 1) {
        for (sn, _) in scores.iter().zip(labels).filter(|(_, &l)| l == 0) {
            pairs += 1;
            if sp > sn {
                wins += 1.0;
            } else if sp == sn {
                wins += 0.5;
            }
        }
    }
    Ok(wins / pairs as f64)
}

/// Average precision by explicit per-positive rank counting, with ties
/// broken by original index as in a stable descending sort. Quadratic;
/// the reference for the ranking version.
pub fn oracle_aupr(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_oracle_input(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let mut total = 0.0;
    for (i, (&si, _)) in scores.iter().zip(labels).enumerate().filter(|(_, (_, &l))| l == 1) {
        let mut rank = 0usize;
        let mut pos_at_or_above = 0usize;
        for (j, (&sj, &lj)) in scores.iter().zip(labels).enumerate() {
            let above = sj > si || (sj == si && j < i);
            if above || j == i {
                rank += 1;
                if lj == 1 {
                    pos_at_or_above += 1;
                }
            }
        }
        total += pos_at_or_above as f64 / rank as f64;
    }
    Ok(total / n_pos as f64)
}
