use chrono::NaiveDate;
use ndarray::{Array2, Array3, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{DataError, Result};

/// What a channel measures. Positional channels are structural inputs for
/// time-step alignment and are never prunable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    RlKpi,
    Ws,
    Positional,
    DerivedWs,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelMeta {
    pub name: String,
    pub kind: ChannelKind,
    pub unit: String,
    pub prunable: bool,
}

impl ChannelMeta {
    /// Positional channels are forced non-prunable.
    pub fn new(name: impl Into<String>, kind: ChannelKind, unit: impl Into<String>) -> Self {
        let prunable = kind != ChannelKind::Positional;
        ChannelMeta { name: name.into(), kind, unit: unit.into(), prunable }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub link_id: String,
    pub window_end_date: NaiveDate,
}

impl InstanceMeta {
    /// Stable identifier used by saliency stores and reports.
    pub fn instance_id(&self) -> String {
        format!("{}@{}", self.link_id, self.window_end_date)
    }
}

/// Windowed dataset: `values` is N instances x C channels x T timestamps,
/// `labels[n] = 1` means the link fails on the day after instance n's window.
///
/// Immutable after construction; safe to share read-only across workers.
#[derive(Debug, Clone)]
pub struct TimeSeriesDataset {
    values: Array3<f64>,
    labels: Vec<u8>,
    channel_meta: Vec<ChannelMeta>,
    instance_meta: Vec<InstanceMeta>,
    static_features: Option<Array2<f64>>,
    static_names: Vec<String>,
}

impl TimeSeriesDataset {
    pub fn new(
        values: Array3<f64>,
        labels: Vec<u8>,
        channel_meta: Vec<ChannelMeta>,
        instance_meta: Vec<InstanceMeta>,
        static_features: Option<Array2<f64>>,
        static_names: Vec<String>,
    ) -> Result<Self> {
        let (n, c, _t) = values.dim();
        if labels.len() != n {
            return Err(DataError::InvalidArgument(format!(
                "{} labels for {} instances",
                labels.len(),
                n
            )));
        }
        if instance_meta.len() != n {
            return Err(DataError::InvalidArgument(format!(
                "{} instance_meta entries for {} instances",
                instance_meta.len(),
                n
            )));
        }
        if channel_meta.len() != c {
            return Err(DataError::InvalidArgument(format!(
                "{} channel_meta entries for {} channels",
                channel_meta.len(),
                c
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return Err(DataError::InvalidArgument(format!("label {l} is not in {{0,1}}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DataError::InvalidArgument("values contain NaN or Inf".into()));
        }
        if let Some(s) = &static_features {
            if s.nrows() != n {
                return Err(DataError::InvalidArgument(format!(
                    "static_features has {} rows for {} instances",
                    s.nrows(),
                    n
                )));
            }
            if s.ncols() != static_names.len() {
                return Err(DataError::InvalidArgument(format!(
                    "{} static names for {} static columns",
                    static_names.len(),
                    s.ncols()
                )));
            }
        }
        Ok(TimeSeriesDataset {
            values,
            labels,
            channel_meta,
            instance_meta,
            static_features,
            static_names,
        })
    }

    pub fn n_instances(&self) -> usize {
        self.values.dim().0
    }

    pub fn n_channels(&self) -> usize {
        self.values.dim().1
    }

    pub fn t_len(&self) -> usize {
        self.values.dim().2
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn instance(&self, n: usize) -> ArrayView2<'_, f64> {
        self.values.index_axis(ndarray::Axis(0), n)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn channel_meta(&self) -> &[ChannelMeta] {
        &self.channel_meta
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channel_meta.iter().position(|m| m.name == name)
    }

    pub fn instance_meta(&self) -> &[InstanceMeta] {
        &self.instance_meta
    }

    pub fn static_features(&self) -> Option<&Array2<f64>> {
        self.static_features.as_ref()
    }

    pub fn static_names(&self) -> &[String] {
        &self.static_names
    }

    pub fn static_row(&self, n: usize) -> Option<Vec<f64>> {
        self.static_features.as_ref().map(|s| s.row(n).to_vec())
    }

    /// Replaces the value tensor, keeping all metadata. Used by normalization.
    pub(crate) fn with_values(&self, values: Array3<f64>) -> Result<Self> {
        TimeSeriesDataset::new(
            values,
            self.labels.clone(),
            self.channel_meta.clone(),
            self.instance_meta.clone(),
            self.static_features.clone(),
            self.static_names.clone(),
        )
    }
}

/// One link's daily history: `values` is C channels x D days, `failures[d] = 1`
/// means day `d` was a failure day. Dates are consecutive within runs but may
/// contain gaps; windowing only slides over consecutive stretches.
#[derive(Debug, Clone)]
pub struct LinkDaily {
    pub link_id: String,
    pub dates: Vec<NaiveDate>,
    pub values: Array2<f64>,
    pub failures: Vec<u8>,
}

/// Per-link daily series as produced by the loader or the synthetic generator,
/// before windowing. Channel order: RL KPIs, then WS channels grouped by
/// neighbor rank; the positional channel is appended during windowing.
#[derive(Debug, Clone)]
pub struct DailyDataset {
    pub links: Vec<LinkDaily>,
    pub channel_meta: Vec<ChannelMeta>,
    /// One static row per link, parallel to `links`.
    pub static_features: Option<Array2<f64>>,
    pub static_names: Vec<String>,
}

impl DailyDataset {
    pub fn n_channels(&self) -> usize {
        self.channel_meta.len()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channel_meta.iter().position(|m| m.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn meta(c: usize) -> Vec<ChannelMeta> {
        (0..c).map(|i| ChannelMeta::new(format!("ch{i}"), ChannelKind::RlKpi, "")).collect()
    }

    fn inst(n: usize) -> Vec<InstanceMeta> {
        (0..n)
            .map(|i| InstanceMeta {
                link_id: format!("L{i}"),
                window_end_date: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            })
            .collect()
    }

    #[test]
    fn rejects_nan_values() {
        let mut v = Array3::zeros((1, 2, 3));
        v[[0, 1, 2]] = f64::NAN;
        let err =
            TimeSeriesDataset::new(v, vec![0], meta(2), inst(1), None, vec![]).unwrap_err();
        assert!(err.to_string().contains("NaN"));
    }

    #[test]
    fn rejects_nonbinary_labels() {
        let v = Array3::zeros((1, 2, 3));
        assert!(TimeSeriesDataset::new(v, vec![2], meta(2), inst(1), None, vec![]).is_err());
    }

    #[test]
    fn positional_channels_are_never_prunable() {
        let m = ChannelMeta::new("pos", ChannelKind::Positional, "");
        assert!(!m.prunable);
        let m = ChannelMeta::new("bbe", ChannelKind::RlKpi, "count");
        assert!(m.prunable);
    }

    #[test]
    fn channel_meta_count_must_match() {
        let v = Array3::zeros((1, 2, 3));
        assert!(TimeSeriesDataset::new(v, vec![0], meta(3), inst(1), None, vec![]).is_err());
    }
}
