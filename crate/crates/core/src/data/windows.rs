use chrono::Duration;
use ndarray::Array3;

use super::dataset::{ChannelKind, ChannelMeta, DailyDataset, InstanceMeta, TimeSeriesDataset};
use super::{DataError, Result};

/// Counters emitted alongside the windowed dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WindowReport {
    /// Links too short to produce a single window.
    pub skipped_links: usize,
}

/// Slides an `n_days` window over each link's daily history. Each instance is
/// the `n_days`-day history ending at day `d`; its label is the failure
/// indicator of day `d+1`, so the label day is always strictly after the
/// window. A positional channel with values `0..n_days` is appended after the
/// data channels. Windows are only formed over consecutive calendar days.
pub fn make_windows(
    daily: &DailyDataset,
    n_days: usize,
) -> Result<(TimeSeriesDataset, WindowReport)> {
    if n_days < 1 {
        return Err(DataError::InvalidArgument("n_days must be >= 1".into()));
    }
    let c_data = daily.n_channels();
    let mut windows: Vec<(usize, usize)> = Vec::new(); // (link index, window end day index)
    let mut report = WindowReport::default();
    for (li, link) in daily.links.iter().enumerate() {
        let d = link.dates.len();
        if d < n_days + 1 {
            report.skipped_links += 1;
            continue;
        }
        let mut produced = false;
        for end in (n_days - 1)..(d - 1) {
            let start = end + 1 - n_days;
            let span_ok = link.dates[end] - link.dates[start] == Duration::days(n_days as i64 - 1);
            let label_ok = link.dates[end + 1] - link.dates[end] == Duration::days(1);
            if span_ok && label_ok {
                windows.push((li, end));
                produced = true;
            }
        }
        if !produced {
            report.skipped_links += 1;
        }
    }

    let n = windows.len();
    let mut values = Array3::zeros((n, c_data + 1, n_days));
    let mut labels = Vec::with_capacity(n);
    let mut instance_meta = Vec::with_capacity(n);
    for (w, &(li, end)) in windows.iter().enumerate() {
        let link = &daily.links[li];
        let start = end + 1 - n_days;
        for c in 0..c_data {
            for t in 0..n_days {
                values[[w, c, t]] = link.values[[c, start + t]];
            }
        }
        for t in 0..n_days {
            values[[w, c_data, t]] = t as f64;
        }
        labels.push(link.failures[end + 1]);
        instance_meta.push(InstanceMeta {
            link_id: link.link_id.clone(),
            window_end_date: link.dates[end],
        });
    }

    let mut channel_meta = daily.channel_meta.clone();
    channel_meta.push(ChannelMeta::new("positional", ChannelKind::Positional, "step"));

    let static_features = daily.static_features.as_ref().map(|rows| {
        let mut m = ndarray::Array2::zeros((n, rows.ncols()));
        for (w, &(li, _)) in windows.iter().enumerate() {
            m.row_mut(w).assign(&rows.row(li));
        }
        m
    });

    let dataset = TimeSeriesDataset::new(
        values,
        labels,
        channel_meta,
        instance_meta,
        static_features,
        daily.static_names.clone(),
    )?;
    Ok((dataset, report))
}
