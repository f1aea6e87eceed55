use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::dataset::{ChannelKind, ChannelMeta, DailyDataset, LinkDaily};
use super::{DataError, Result};

/// Declares the CSV column layout. The loader accepts 6 to 8 radio-link KPI
/// channels and exactly 9 weather-station channels; `ws_attach` controls how
/// many nearest stations contribute a WS channel block per link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub rl_channels: Vec<String>,
    pub ws_channels: Vec<String>,
    /// WS channels aggregated hourly->daily by sum instead of mean.
    pub sum_channels: Vec<String>,
    pub static_columns: Vec<String>,
    pub label_column: String,
    pub ws_attach: usize,
}

impl SchemaConfig {
    /// Canonical radio-access schema used by the synthetic generator.
    pub fn ran_default() -> Self {
        SchemaConfig {
            rl_channels: [
                "severely_error_second",
                "error_second",
                "unavail_second",
                "bbe",
                "rxlevmax",
                "capacity",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            ws_channels: [
                "temperature",
                "precipitation",
                "humidity",
                "wind_speed",
                "pressure",
                "dew_point",
                "cloud_cover",
                "visibility",
                "snow_depth",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            sum_channels: vec!["precipitation".into()],
            static_columns: vec!["region".into(), "band".into()],
            label_column: "failure".into(),
            ws_attach: 1,
        }
    }

    pub fn with_ws_attach(mut self, ws_attach: usize) -> Self {
        self.ws_attach = ws_attach;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(6..=8).contains(&self.rl_channels.len()) {
            return Err(DataError::InvalidArgument(format!(
                "schema must declare 6..=8 RL channels, got {}",
                self.rl_channels.len()
            )));
        }
        if self.ws_channels.len() != 9 {
            return Err(DataError::InvalidArgument(format!(
                "schema must declare exactly 9 WS channels, got {}",
                self.ws_channels.len()
            )));
        }
        if self.ws_attach < 1 {
            return Err(DataError::InvalidArgument("ws_attach must be >= 1".into()));
        }
        Ok(())
    }

    /// Channel metadata in loader order: RL KPIs, then WS blocks by neighbor
    /// rank. Suffix `_n<rank>` is used only when more than one station is
    /// attached.
    pub fn channel_meta(&self) -> Vec<ChannelMeta> {
        let mut meta: Vec<ChannelMeta> = self
            .rl_channels
            .iter()
            .map(|n| ChannelMeta::new(n.clone(), ChannelKind::RlKpi, rl_unit(n)))
            .collect();
        for rank in 1..=self.ws_attach {
            for n in &self.ws_channels {
                let name =
                    if self.ws_attach == 1 { n.clone() } else { format!("{n}_n{rank}") };
                meta.push(ChannelMeta::new(name, ChannelKind::Ws, ws_unit(n)));
            }
        }
        meta
    }
}

fn rl_unit(name: &str) -> &'static str {
    match name {
        "severely_error_second" | "error_second" | "unavail_second" => "s",
        "bbe" => "count",
        "rxlevmax" => "dBm",
        "capacity" => "Mbps",
        _ => "",
    }
}

fn ws_unit(name: &str) -> &'static str {
    match name {
        "temperature" | "dew_point" => "degC",
        "precipitation" => "mm",
        "humidity" | "cloud_cover" => "%",
        "wind_speed" => "m/s",
        "pressure" => "hPa",
        "visibility" => "km",
        "snow_depth" => "cm",
        _ => "",
    }
}

struct CsvTable {
    path: String,
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl CsvTable {
    fn open(path: &Path) -> Result<Self> {
        let display = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| match e.kind() {
                csv::ErrorKind::Io(_) => DataError::Io {
                    path: display.clone(),
                    source: std::io::Error::other(e.to_string()),
                },
                _ => DataError::Csv { path: display.clone(), source: e },
            })?;
        let headers = reader
            .headers()
            .map_err(|e| DataError::Csv { path: display.clone(), source: e })?
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            rows.push(rec.map_err(|e| DataError::Csv { path: display.clone(), source: e })?);
        }
        if rows.is_empty() {
            return Err(DataError::EmptyFile { path: display });
        }
        Ok(CsvTable { path: display, headers, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| DataError::SchemaMismatch {
            path: self.path.clone(),
            column: name.to_string(),
        })
    }

    fn str_at<'a>(&self, row: &'a csv::StringRecord, col: usize) -> &'a str {
        row.get(col).unwrap_or("")
    }

    fn date_at(&self, row: &csv::StringRecord, col: usize) -> Result<NaiveDate> {
        let raw = self.str_at(row, col);
        raw.parse().map_err(|_| DataError::Parse {
            path: self.path.clone(),
            what: "date".into(),
            value: raw.to_string(),
        })
    }

    /// Parses a float cell; empty and "nan" cells are reported as missing.
    fn value_at(&self, row: &csv::StringRecord, col: usize, column: &str) -> Result<Option<f64>> {
        let raw = self.str_at(row, col);
        if raw.is_empty() || raw.eq_ignore_ascii_case("nan") {
            return Ok(None);
        }
        raw.parse::<f64>().map(Some).map_err(|_| DataError::SchemaMismatch {
            path: self.path.clone(),
            column: column.to_string(),
        })
    }
}

/// Forward-fill then zero-fill one channel row in place.
fn impute(row: &mut [f64]) {
    let mut last: Option<f64> = None;
    for v in row.iter_mut() {
        if v.is_nan() {
            *v = last.unwrap_or(0.0);
        } else {
            last = Some(*v);
        }
    }
}

/// Loads the four-table CSV bundle into a per-link daily dataset.
///
/// Channels come out ordered RL KPIs first, then WS channel blocks by
/// ascending station distance; missing observations are forward-filled then
/// zero-filled; hourly WS rows are aggregated to daily values (mean, or sum
/// for channels listed in `schema.sum_channels`).
pub fn load_dataset(
    rl_kpi_path: &Path,
    ws_path: &Path,
    static_path: Option<&Path>,
    distances_path: &Path,
    schema: &SchemaConfig,
) -> Result<DailyDataset> {
    schema.validate()?;

    // rl_kpi.csv: link_id,date,<kpis...>,<label>
    let rl = CsvTable::open(rl_kpi_path)?;
    let rl_link_col = rl.column("link_id")?;
    let rl_date_col = rl.column("date")?;
    let rl_cols: Vec<usize> =
        schema.rl_channels.iter().map(|c| rl.column(c)).collect::<Result<_>>()?;
    let label_col = rl.column(&schema.label_column)?;

    // link_id -> date -> (kpi values, failure)
    let mut per_link: BTreeMap<String, BTreeMap<NaiveDate, (Vec<f64>, u8)>> = BTreeMap::new();
    for row in &rl.rows {
        let link = rl.str_at(row, rl_link_col).to_string();
        let date = rl.date_at(row, rl_date_col)?;
        let mut kpis = Vec::with_capacity(rl_cols.len());
        for (ci, &col) in rl_cols.iter().enumerate() {
            kpis.push(
                rl.value_at(row, col, &schema.rl_channels[ci])?.unwrap_or(f64::NAN),
            );
        }
        let raw_label = rl.str_at(row, label_col);
        let label = match raw_label {
            "0" => 0,
            "1" => 1,
            _ => {
                return Err(DataError::SchemaMismatch {
                    path: rl.path.clone(),
                    column: schema.label_column.clone(),
                })
            }
        };
        per_link.entry(link).or_default().insert(date, (kpis, label));
    }

    // ws.csv: station_id,date,hour,<channels...> aggregated to daily.
    let ws = CsvTable::open(ws_path)?;
    let ws_station_col = ws.column("station_id")?;
    let ws_date_col = ws.column("date")?;
    ws.column("hour")?;
    let ws_cols: Vec<usize> =
        schema.ws_channels.iter().map(|c| ws.column(c)).collect::<Result<_>>()?;

    // station -> date -> per-channel (sum, count) over hours
    let mut per_station: BTreeMap<String, BTreeMap<NaiveDate, Vec<(f64, usize)>>> =
        BTreeMap::new();
    for row in &ws.rows {
        let station = ws.str_at(row, ws_station_col).to_string();
        let date = ws.date_at(row, ws_date_col)?;
        let day = per_station
            .entry(station)
            .or_default()
            .entry(date)
            .or_insert_with(|| vec![(0.0, 0); ws_cols.len()]);
        for (ci, &col) in ws_cols.iter().enumerate() {
            if let Some(v) = ws.value_at(row, col, &schema.ws_channels[ci])? {
                day[ci].0 += v;
                day[ci].1 += 1;
            }
        }
    }
    let station_ids: Vec<String> = per_station.keys().cloned().collect();
    let station_index: BTreeMap<&str, usize> =
        station_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

    // distances.csv: link_id,station_id,distance_km
    let dist = CsvTable::open(distances_path)?;
    let d_link_col = dist.column("link_id")?;
    let d_station_col = dist.column("station_id")?;
    let d_km_col = dist.column("distance_km")?;
    let mut link_station_dist: BTreeMap<String, Vec<(f64, usize)>> = BTreeMap::new();
    for row in &dist.rows {
        let link = dist.str_at(row, d_link_col).to_string();
        let station = dist.str_at(row, d_station_col);
        let km = dist
            .value_at(row, d_km_col, "distance_km")?
            .ok_or_else(|| DataError::SchemaMismatch {
                path: dist.path.clone(),
                column: "distance_km".into(),
            })?;
        if let Some(&si) = station_index.get(station) {
            link_station_dist.entry(link).or_default().push((km, si));
        }
    }

    // static.csv: link_id,<categorical...> one-hot encoded.
    let statics = match (static_path, schema.static_columns.is_empty()) {
        (Some(path), false) => Some(load_static(path, &schema.static_columns)?),
        _ => None,
    };

    let channel_meta = schema.channel_meta();
    let n_rl = schema.rl_channels.len();
    let n_ws = schema.ws_channels.len();
    let mut links = Vec::new();
    for (link_id, days) in &per_link {
        let dates: Vec<NaiveDate> = days.keys().copied().collect();
        let d = dates.len();
        let mut values = Array2::from_elem((channel_meta.len(), d), f64::NAN);
        for (di, date) in dates.iter().enumerate() {
            let (kpis, _) = &days[date];
            for (ci, &v) in kpis.iter().enumerate() {
                values[[ci, di]] = v;
            }
        }

        // Attach the ws_attach nearest stations' daily values.
        let mut ranked = link_station_dist.get(link_id).cloned().unwrap_or_default();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if ranked.len() < schema.ws_attach {
            return Err(DataError::InvalidArgument(format!(
                "link {link_id} has {} station distances, schema needs {}",
                ranked.len(),
                schema.ws_attach
            )));
        }
        for rank in 0..schema.ws_attach {
            let station = &station_ids[ranked[rank].1];
            let station_days = &per_station[station.as_str()];
            for (di, date) in dates.iter().enumerate() {
                if let Some(day) = station_days.get(date) {
                    for ci in 0..n_ws {
                        let (sum, count) = day[ci];
                        if count > 0 {
                            let summed = schema.sum_channels.contains(&schema.ws_channels[ci]);
                            values[[n_rl + rank * n_ws + ci, di]] =
                                if summed { sum } else { sum / count as f64 };
                        }
                    }
                }
            }
        }

        for mut row in values.rows_mut() {
            impute(row.as_slice_mut().expect("standard layout"));
        }

        let failures = dates.iter().map(|date| days[date].1).collect();
        links.push(LinkDaily { link_id: link_id.clone(), dates, values, failures });
    }

    let (static_features, static_names) = match statics {
        Some((per_link_rows, names)) => {
            let cols = names.len();
            let mut m = Array2::zeros((links.len(), cols));
            for (li, link) in links.iter().enumerate() {
                if let Some(row) = per_link_rows.get(&link.link_id) {
                    for (ci, &v) in row.iter().enumerate() {
                        m[[li, ci]] = v;
                    }
                }
            }
            (Some(m), names)
        }
        None => (None, Vec::new()),
    };

    Ok(DailyDataset { links, channel_meta, static_features, static_names })
}

type StaticRows = (BTreeMap<String, Vec<f64>>, Vec<String>);

fn load_static(path: &Path, columns: &[String]) -> Result<StaticRows> {
    let table = CsvTable::open(path)?;
    let link_col = table.column("link_id")?;
    let cols: Vec<usize> = columns.iter().map(|c| table.column(c)).collect::<Result<_>>()?;

    // Collect category vocabularies in sorted order for stable one-hot layout.
    let mut vocab: Vec<std::collections::BTreeSet<String>> =
        vec![Default::default(); columns.len()];
    for row in &table.rows {
        for (ci, &col) in cols.iter().enumerate() {
            vocab[ci].insert(table.str_at(row, col).to_string());
        }
    }
    let mut names = Vec::new();
    let mut offsets = Vec::new();
    for (ci, col) in columns.iter().enumerate() {
        offsets.push(names.len());
        for v in &vocab[ci] {
            names.push(format!("{col}={v}"));
        }
    }

    let mut rows = BTreeMap::new();
    for row in &table.rows {
        let link = table.str_at(row, link_col).to_string();
        let mut one_hot = vec![0.0; names.len()];
        for (ci, &col) in cols.iter().enumerate() {
            let value = table.str_at(row, col);
            let pos = vocab[ci].iter().position(|v| v == value).expect("value seen in vocab");
            one_hot[offsets[ci] + pos] = 1.0;
        }
        rows.insert(link, one_hot);
    }
    Ok((rows, names))
}
