//! Canonical data model: series, windows, labels, windowing and
//! per-channel standardization.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

/// Floor applied to per-channel standard deviations so constant channels
/// do not divide by zero.
pub const STD_FLOOR: f64 = 1e-4;

/// Which split of a benchmark a series belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Test,
}

/// A multivariate time series: `values` has one row per timestep and one
/// column per channel. Labels, when present, mark anomalous timesteps.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub entity_id: String,
    pub values: Array2<f64>,
    pub labels: Option<Vec<u8>>,
    pub split_tag: SplitTag,
}

impl TimeSeries {
    pub fn new(
        entity_id: impl Into<String>,
        values: Array2<f64>,
        labels: Option<Vec<u8>>,
        split_tag: SplitTag,
    ) -> Result<Self> {
        let entity_id = entity_id.into();
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::EmptyInput(format!(
                "series {entity_id} has shape {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let t = pos / values.ncols();
            let d = pos % values.ncols();
            return Err(Error::NonFinite(format!(
                "series {entity_id} at timestep {t}, channel {d}"
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != values.nrows() {
                return Err(Error::ShapeMismatch(format!(
                    "series {entity_id}: {} labels for {} timesteps",
                    labels.len(),
                    values.nrows()
                )));
            }
            if let Some(bad) = labels.iter().find(|&&l| l > 1) {
                return Err(Error::InvalidParameter(format!(
                    "series {entity_id}: label value {bad} outside {{0,1}}"
                )));
            }
        }
        Ok(TimeSeries {
            entity_id,
            values,
            labels,
            split_tag,
        })
    }

    /// Number of timesteps.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Number of channels.
    pub fn dims(&self) -> usize {
        self.values.ncols()
    }
}

/// How a window came to be: sliced from a real series, or produced by the
/// anomaly injector (tagged with the type that was applied).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Original,
    Injected(crate::inject::AnomalyType),
}

/// Derived label of a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowLabel {
    Normal,
    Anomalous,
    Unknown,
}

/// A contiguous fixed-length slice of a series, with provenance and a
/// label derived from the covered timestep labels.
#[derive(Debug, Clone)]
pub struct Window {
    pub entity_id: String,
    pub start: usize,
    pub values: Array2<f64>,
    pub provenance: Provenance,
    pub label: WindowLabel,
}

impl Window {
    /// Window length in timesteps.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dims(&self) -> usize {
        self.values.ncols()
    }
}

/// Label for the window covering `labels[start..start + ws]`.
///
/// Anomalous iff any covered timestep is labelled 1; `Unknown` when the
/// parent series carries no labels.
pub fn label_window(labels: Option<&[u8]>, start: usize, ws: usize) -> WindowLabel {
    match labels {
        None => WindowLabel::Unknown,
        Some(labels) => {
            if labels[start..start + ws].iter().any(|&l| l == 1) {
                WindowLabel::Anomalous
            } else {
                WindowLabel::Normal
            }
        }
    }
}

/// Start indices of the overlapping windows of `series`: 0, stride, 2*stride, ...
///
/// There are exactly `(L - ws) / stride + 1` of them.
pub fn window_starts(len: usize, ws: usize, stride: usize) -> Result<Vec<usize>> {
    if ws == 0 || stride == 0 {
        return Err(Error::InvalidParameter(
            "window size and stride must be positive".into(),
        ));
    }
    if ws > len {
        return Err(Error::SeriesTooShort {
            length: len,
            window: ws,
        });
    }
    Ok((0..=(len - ws)).step_by(stride).collect())
}

/// Slice `series` into overlapping windows of size `ws` with the given
/// stride, ordered by start index. Each window carries the label derived
/// from the covered timesteps.
pub fn make_windows(series: &TimeSeries, ws: usize, stride: usize) -> Result<Vec<Window>> {
    let starts = window_starts(series.len(), ws, stride)?;
    let labels = series.labels.as_deref();
    Ok(starts
        .into_iter()
        .map(|start| Window {
            entity_id: series.entity_id.clone(),
            start,
            values: series.values.slice(ndarray::s![start..start + ws, ..]).to_owned(),
            provenance: Provenance::Original,
            label: label_window(labels, start, ws),
        })
        .collect())
}

/// View of one window's values without materializing a `Window`.
pub fn window_view(series: &TimeSeries, start: usize, ws: usize) -> ArrayView2<'_, f64> {
    series.values.slice(ndarray::s![start..start + ws, ..])
}

/// Per-channel mean and standard deviation, std floored at [`STD_FLOOR`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    /// Identity stats (mean 0, std 1) for `dims` channels.
    pub fn identity(dims: usize) -> Self {
        ChannelStats {
            mean: vec![0.0; dims],
            std: vec![1.0; dims],
        }
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }
}

/// Pooled per-channel stats over all timesteps of all series in the set.
pub fn compute_channel_stats(series_set: &[&TimeSeries]) -> Result<ChannelStats> {
    let first = series_set
        .first()
        .ok_or_else(|| Error::EmptyInput("channel stats over empty series set".into()))?;
    let dims = first.dims();
    for s in series_set {
        if s.dims() != dims {
            return Err(Error::ShapeMismatch(format!(
                "series {} has {} channels, expected {dims}",
                s.entity_id,
                s.dims()
            )));
        }
    }
    let total: usize = series_set.iter().map(|s| s.len()).sum();
    let mut mean = Array1::<f64>::zeros(dims);
    for s in series_set {
        mean += &s.values.sum_axis(ndarray::Axis(0));
    }
    mean /= total as f64;
    let mut var = Array1::<f64>::zeros(dims);
    for s in series_set {
        for row in s.values.rows() {
            for (d, &v) in row.iter().enumerate() {
                let diff = v - mean[d];
                var[d] += diff * diff;
            }
        }
    }
    var /= total as f64;
    let std = var.iter().map(|v| v.sqrt().max(STD_FLOOR)).collect();
    Ok(ChannelStats {
        mean: mean.to_vec(),
        std,
    })
}

/// Standardize a series channel-wise: `(x - mean) / std`. Labels and
/// metadata are unchanged.
pub fn standardize(series: &TimeSeries, stats: &ChannelStats) -> Result<TimeSeries> {
    if stats.dims() != series.dims() {
        return Err(Error::ShapeMismatch(format!(
            "stats cover {} channels, series {} has {}",
            stats.dims(),
            series.entity_id,
            series.dims()
        )));
    }
    let mut values = series.values.clone();
    for mut row in values.rows_mut() {
        for (d, v) in row.iter_mut().enumerate() {
            *v = (*v - stats.mean[d]) / stats.std[d];
        }
    }
    Ok(TimeSeries {
        entity_id: series.entity_id.clone(),
        values,
        labels: series.labels.clone(),
        split_tag: series.split_tag,
    })
}

/// Inverse of [`standardize`] with the same stats.
pub fn destandardize(series: &TimeSeries, stats: &ChannelStats) -> Result<TimeSeries> {
    if stats.dims() != series.dims() {
        return Err(Error::ShapeMismatch(format!(
            "stats cover {} channels, series {} has {}",
            stats.dims(),
            series.entity_id,
            series.dims()
        )));
    }
    let mut values = series.values.clone();
    for mut row in values.rows_mut() {
        for (d, v) in row.iter_mut().enumerate() {
            *v = *v * stats.std[d] + stats.mean[d];
        }
    }
    Ok(TimeSeries {
        entity_id: series.entity_id.clone(),
        values,
        labels: series.labels.clone(),
        split_tag: series.split_tag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use proptest::prelude::*;

    fn series(values: Array2<f64>, labels: Option<Vec<u8>>) -> TimeSeries {
        TimeSeries::new("t", values, labels, SplitTag::Train).unwrap()
    }

    #[test]
    fn window_count_small() {
        let s = series(Array2::zeros((5, 1)), None);
        assert_eq!(make_windows(&s, 3, 1).unwrap().len(), 3);
        let starts: Vec<usize> = make_windows(&s, 3, 1).unwrap().iter().map(|w| w.start).collect();
        assert_eq!(starts, vec![0, 1, 2]);
    }

    #[test]
    fn window_count_boundary() {
        let s = series(Array2::zeros((100, 2)), None);
        assert_eq!(make_windows(&s, 100, 1).unwrap().len(), 1);
    }

    #[test]
    fn window_count_msl_train() {
        // 58317 timesteps, ws 100, stride 1
        assert_eq!(window_starts(58317, 100, 1).unwrap().len(), 58218);
    }

    #[test]
    fn window_too_long_errors() {
        let s = series(Array2::zeros((5, 1)), None);
        assert!(matches!(
            make_windows(&s, 6, 1),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn window_labels() {
        assert_eq!(label_window(Some(&[0, 0, 0]), 0, 3), WindowLabel::Normal);
        assert_eq!(label_window(Some(&[0, 1, 0]), 0, 3), WindowLabel::Anomalous);
        assert_eq!(label_window(None, 0, 3), WindowLabel::Unknown);
    }

    #[test]
    fn derived_labels_on_windows() {
        let s = series(Array2::zeros((5, 1)), Some(vec![0, 0, 1, 0, 0]));
        let ws = make_windows(&s, 2, 1).unwrap();
        let labels: Vec<WindowLabel> = ws.iter().map(|w| w.label).collect();
        assert_eq!(
            labels,
            vec![
                WindowLabel::Normal,
                WindowLabel::Anomalous,
                WindowLabel::Anomalous,
                WindowLabel::Normal,
            ]
        );
    }

    #[test]
    fn stats_direct_arithmetic() {
        let s = series(arr2(&[[0.0], [2.0]]), None);
        let stats = compute_channel_stats(&[&s]).unwrap();
        assert_eq!(stats.mean, vec![1.0]);
        assert_eq!(stats.std, vec![1.0]);
    }

    #[test]
    fn stats_duplicate_series_pooling() {
        let s = series(arr2(&[[0.0], [2.0], [4.0]]), None);
        let one = compute_channel_stats(&[&s]).unwrap();
        let two = compute_channel_stats(&[&s, &s]).unwrap();
        assert_eq!(one.mean, two.mean);
        assert_eq!(one.std, two.std);
    }

    #[test]
    fn stats_constant_channel_floored() {
        let s = series(arr2(&[[5.0], [5.0], [5.0]]), None);
        let stats = compute_channel_stats(&[&s]).unwrap();
        assert_eq!(stats.std, vec![STD_FLOOR]);
        let z = standardize(&s, &stats).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stats_empty_set_errors() {
        assert!(matches!(
            compute_channel_stats(&[]),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn standardize_direct() {
        let s = series(arr2(&[[0.0], [2.0]]), None);
        let stats = ChannelStats {
            mean: vec![1.0],
            std: vec![1.0],
        };
        let z = standardize(&s, &stats).unwrap();
        assert_eq!(z.values, arr2(&[[-1.0], [1.0]]));
    }

    #[test]
    fn standardize_identity() {
        let s = series(arr2(&[[0.5, -3.0], [2.0, 7.0]]), Some(vec![0, 1]));
        let z = standardize(&s, &ChannelStats::identity(2)).unwrap();
        assert_eq!(z.values, s.values);
        assert_eq!(z.labels, s.labels);
    }

    #[test]
    fn standardize_dim_mismatch_errors() {
        let s = series(arr2(&[[0.0, 1.0]]), None);
        assert!(standardize(&s, &ChannelStats::identity(3)).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        let r = TimeSeries::new(
            "bad",
            arr2(&[[1.0], [f64::NAN]]),
            None,
            SplitTag::Train,
        );
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn bad_labels_rejected() {
        assert!(TimeSeries::new("x", arr2(&[[1.0]]), Some(vec![2]), SplitTag::Train).is_err());
        assert!(TimeSeries::new("x", arr2(&[[1.0]]), Some(vec![0, 1]), SplitTag::Train).is_err());
    }

    proptest! {
        #[test]
        fn window_count_law(len in 1usize..400, ws in 1usize..100, stride in 1usize..10) {
            prop_assume!(ws <= len);
            let starts = window_starts(len, ws, stride).unwrap();
            prop_assert_eq!(starts.len(), (len - ws) / stride + 1);
            for (i, s) in starts.iter().enumerate() {
                prop_assert_eq!(*s, i * stride);
            }
        }

        #[test]
        fn labeling_monotone(labels in proptest::collection::vec(0u8..=1, 8..40), flip in 0usize..40) {
            let ws = 4usize;
            prop_assume!(flip < labels.len());
            let mut more = labels.clone();
            more[flip] = 1;
            for start in 0..=(labels.len() - ws) {
                let before = label_window(Some(&labels), start, ws);
                let after = label_window(Some(&more), start, ws);
                if before == WindowLabel::Anomalous {
                    prop_assert_eq!(after, WindowLabel::Anomalous);
                }
            }
        }

        #[test]
        fn standardize_round_trip(
            raw in proptest::collection::vec(-1e3f64..1e3, 20..80),
        ) {
            let rows = raw.len() / 2;
            let values = Array2::from_shape_vec((rows, 2), raw[..rows * 2].to_vec()).unwrap();
            let s = series(values, None);
            let stats = compute_channel_stats(&[&s]).unwrap();
            let z = standardize(&s, &stats).unwrap();
            let back = destandardize(&z, &stats).unwrap();
            for (a, b) in s.values.iter().zip(back.values.iter()) {
                let scale = a.abs().max(1.0);
                prop_assert!((a - b).abs() / scale < 1e-9);
            }
        }
    }
}
