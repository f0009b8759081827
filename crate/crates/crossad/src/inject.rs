//! Synthetic anomaly injection: turn a window into a labelled anomalous
//! window using one of five transform families.

use crate::data::{Provenance, Window, WindowLabel, STD_FLOOR};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, STREAM_INJECT, STREAM_INJECT_TYPE};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Minimum window length for any injection.
pub const MIN_WINDOW: usize = 8;
/// Minimum window length for the segment-based types (seasonal, shapelet).
pub const MIN_SEGMENT_WINDOW: usize = 16;
/// Local neighborhood width for contextual stats.
pub const CONTEXT_NEIGHBORHOOD: usize = 16;
/// Every injected channel must end up differing from the input by at
/// least this multiple of its in-window std.
pub const MIN_DEVIATION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyType {
    Global,
    Contextual,
    Seasonal,
    Trend,
    Shapelet,
}

impl AnomalyType {
    pub const ALL: [AnomalyType; 5] = [
        AnomalyType::Global,
        AnomalyType::Contextual,
        AnomalyType::Seasonal,
        AnomalyType::Trend,
        AnomalyType::Shapelet,
    ];

    /// Types applicable to windows shorter than [`MIN_SEGMENT_WINDOW`].
    pub const POINTWISE: [AnomalyType; 3] = [
        AnomalyType::Global,
        AnomalyType::Contextual,
        AnomalyType::Trend,
    ];

    pub fn is_segment_based(self) -> bool {
        matches!(self, AnomalyType::Seasonal | AnomalyType::Shapelet)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AnomalyType::Global => "global",
            AnomalyType::Contextual => "contextual",
            AnomalyType::Seasonal => "seasonal",
            AnomalyType::Trend => "trend",
            AnomalyType::Shapelet => "shapelet",
        }
    }
}

impl std::fmt::Display for AnomalyType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parameters of one injection. A fixed (window, spec) pair always yields
/// a bit-identical output.
///
/// `segment_fraction` and `magnitude` default per type when unset:
/// segment fraction 0.5 (seasonal) or 0.3 (shapelet); magnitude range
/// [3, 6] (global), [1.5, 3] (contextual), [1, 3] (trend slope factor).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectionSpec {
    #[serde(rename = "type")]
    pub anomaly_type: AnomalyType,
    pub seed: u64,
    #[serde(default = "default_channel_fraction")]
    pub channel_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude: Option<(f64, f64)>,
}

fn default_channel_fraction() -> f64 {
    0.3
}

impl InjectionSpec {
    pub fn new(anomaly_type: AnomalyType, seed: u64) -> Self {
        InjectionSpec {
            anomaly_type,
            seed,
            channel_fraction: default_channel_fraction(),
            segment_fraction: None,
            magnitude: None,
        }
    }

    pub fn segment_fraction(&self) -> f64 {
        self.segment_fraction.unwrap_or(match self.anomaly_type {
            AnomalyType::Shapelet => 0.3,
            _ => 0.5,
        })
    }

    pub fn magnitude_range(&self) -> (f64, f64) {
        self.magnitude.unwrap_or(match self.anomaly_type {
            AnomalyType::Global => (3.0, 6.0),
            AnomalyType::Contextual => (1.5, 3.0),
            _ => (1.0, 3.0),
        })
    }

    fn validate(&self, window_len: usize) -> Result<()> {
        if !(self.channel_fraction > 0.0 && self.channel_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "channel_fraction {} outside (0, 1]",
                self.channel_fraction
            )));
        }
        let sf = self.segment_fraction();
        if !(sf > 0.0 && sf <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "segment_fraction {sf} outside (0, 1]"
            )));
        }
        let (lo, hi) = self.magnitude_range();
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "magnitude range [{lo}, {hi}] must satisfy 0 < lo < hi"
            )));
        }
        if window_len < MIN_WINDOW {
            return Err(Error::WindowTooShort {
                length: window_len,
                min: MIN_WINDOW,
            });
        }
        if self.anomaly_type.is_segment_based() && window_len < MIN_SEGMENT_WINDOW {
            return Err(Error::WindowTooShort {
                length: window_len,
                min: MIN_SEGMENT_WINDOW,
            });
        }
        Ok(())
    }
}

/// Set `ch[t]` to `mean ± k·sigma`.
pub fn point_outlier(ch: &mut [f64], t: usize, mean: f64, sigma: f64, k: f64, positive: bool) {
    let sign = if positive { 1.0 } else { -1.0 };
    ch[t] = mean + sign * k * sigma;
}

/// Resample `ch[start..start + len]` in time by `factor` with linear
/// interpolation. Factor 2 replays the segment at double speed (two
/// periods); factor 0.5 stretches its first half over the segment. The
/// segment location is unchanged and `ch[start]` keeps its value.
pub fn resample_segment(ch: &mut [f64], start: usize, len: usize, factor: f64) {
    if len < 2 {
        return;
    }
    let seg: Vec<f64> = ch[start..start + len].to_vec();
    let denom = (len - 1) as f64;
    for i in 0..len {
        let pos = (i as f64 * factor) % denom;
        let lo = pos.floor() as usize;
        let frac = pos - lo as f64;
        ch[start + i] = seg[lo] * (1.0 - frac) + seg[lo + 1] * frac;
    }
}

/// Add a linear drift `slope·(t − onset)` to `ch[onset..]`.
pub fn add_trend(ch: &mut [f64], onset: usize, slope: f64) {
    for (offset, v) in ch[onset..].iter_mut().enumerate() {
        *v += slope * offset as f64;
    }
}

/// Replace `ch[start..start + len]` with a flat line at the segment's
/// starting value, plus uniform noise of the given amplitude.
pub fn flatten_segment(
    ch: &mut [f64],
    start: usize,
    len: usize,
    noise_amp: f64,
    rng: &mut impl Rng,
) {
    let level = ch[start];
    for v in ch[start..start + len].iter_mut() {
        let noise = if noise_amp > 0.0 {
            rng.gen_range(-noise_amp..noise_amp)
        } else {
            0.0
        };
        *v = level + noise;
    }
}

fn column_mean_std(col: &[f64]) -> (f64, f64) {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt().max(STD_FLOOR))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Transform `window` into a synthetic anomalous window.
///
/// Selects ⌈channel_fraction·D⌉ channels, applies the spec's transform to
/// each, and guarantees every modified channel deviates from the input by
/// at least [`MIN_DEVIATION`]·σ of that channel within the window. Cells
/// outside the selected channels (and, for segment types, outside the
/// selected segment) are bit-identical to the input.
pub fn inject(window: &Window, spec: &InjectionSpec) -> Result<Window> {
    let ws = window.len();
    let d = window.dims();
    spec.validate(ws)?;
    let mut rng = stream_rng(spec.seed, STREAM_INJECT);

    let n_ch = ((spec.channel_fraction * d as f64).ceil() as usize).clamp(1, d);
    let mut channels = sample(&mut rng, d, n_ch).into_vec();
    channels.sort_unstable();

    let segment = if spec.anomaly_type.is_segment_based() {
        let len = ((spec.segment_fraction() * ws as f64).round() as usize).clamp(2, ws);
        let start = rng.gen_range(0..=ws - len);
        Some((start, len))
    } else {
        None
    };

    let mut out = window.values.clone();
    let (mag_lo, mag_hi) = spec.magnitude_range();
    for &ch in &channels {
        let orig: Vec<f64> = window.values.column(ch).to_vec();
        let mut col = orig.clone();
        let (mean, sigma) = column_mean_std(&orig);
        let floor = MIN_DEVIATION * sigma;

        match spec.anomaly_type {
            AnomalyType::Global | AnomalyType::Contextual => {
                let n_points = rng.gen_range(1..=3usize);
                let mut last_t = 0;
                for _ in 0..n_points {
                    let t = rng.gen_range(0..ws);
                    let k = rng.gen_range(mag_lo..mag_hi);
                    let positive = rng.gen_bool(0.5);
                    let (m, s) = if spec.anomaly_type == AnomalyType::Contextual {
                        let mut lo = t.saturating_sub(CONTEXT_NEIGHBORHOOD / 2);
                        if lo + CONTEXT_NEIGHBORHOOD > ws {
                            lo = ws.saturating_sub(CONTEXT_NEIGHBORHOOD);
                        }
                        let hi = (lo + CONTEXT_NEIGHBORHOOD).min(ws);
                        column_mean_std(&orig[lo..hi])
                    } else {
                        (mean, sigma)
                    };
                    let old = col[t];
                    point_outlier(&mut col, t, m, s, k, positive);
                    if (col[t] - old).abs() < floor {
                        point_outlier(&mut col, t, m, s, k, !positive);
                    }
                    last_t = t;
                }
                if max_abs_diff(&col, &orig) < floor {
                    col[last_t] = orig[last_t] + 1.5 * floor;
                }
            }
            AnomalyType::Trend => {
                let onset = rng.gen_range(0..=ws / 3);
                let beta = rng.gen_range(mag_lo..mag_hi);
                let positive = rng.gen_bool(0.5);
                let reach = (ws - 1 - onset) as f64;
                let mag = (beta * sigma / ws as f64).max(floor / reach);
                add_trend(&mut col, onset, if positive { mag } else { -mag });
            }
            AnomalyType::Seasonal => {
                let (start, len) = segment.unwrap();
                let factor = if rng.gen_bool(0.5) { 2.0 } else { 0.5 };
                resample_segment(&mut col, start, len, factor);
                if max_abs_diff(&col, &orig) < floor {
                    for v in col[start..start + len].iter_mut() {
                        *v += sigma;
                    }
                }
            }
            AnomalyType::Shapelet => {
                let (start, len) = segment.unwrap();
                flatten_segment(&mut col, start, len, 0.1 * sigma, &mut rng);
                if max_abs_diff(&col, &orig) < floor {
                    for v in col[start..start + len].iter_mut() {
                        *v += sigma;
                    }
                }
            }
        }
        for (t, v) in col.into_iter().enumerate() {
            out[[t, ch]] = v;
        }
    }

    Ok(Window {
        entity_id: window.entity_id.clone(),
        start: window.start,
        values: out,
        provenance: Provenance::Injected(spec.anomaly_type),
        label: WindowLabel::Anomalous,
    })
}

/// Inject with a uniformly drawn anomaly type. Windows shorter than
/// [`MIN_SEGMENT_WINDOW`] fall back to the pointwise types.
pub fn inject_random(window: &Window, rng_seed: u64) -> Result<Window> {
    let mut rng = stream_rng(rng_seed, STREAM_INJECT_TYPE);
    let anomaly_type = if window.len() >= MIN_SEGMENT_WINDOW {
        AnomalyType::ALL[rng.gen_range(0..AnomalyType::ALL.len())]
    } else {
        AnomalyType::POINTWISE[rng.gen_range(0..AnomalyType::POINTWISE.len())]
    };
    inject(window, &InjectionSpec::new(anomaly_type, rng.gen::<u64>()))
}
