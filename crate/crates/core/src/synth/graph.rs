use serde::{Deserialize, Serialize};

use super::{Result, SynthError};

/// Link and station positions in km plus each link's K nearest stations,
/// sorted by ascending distance with ties broken toward the lower station
/// index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationGraph {
    pub link_positions: Vec<[f64; 2]>,
    pub station_positions: Vec<[f64; 2]>,
    pub neighbor_map: Vec<Vec<usize>>,
}

impl StationGraph {
    pub fn distance(&self, link: usize, station: usize) -> f64 {
        let l = self.link_positions[link];
        let s = self.station_positions[station];
        ((l[0] - s[0]).powi(2) + (l[1] - s[1]).powi(2)).sqrt()
    }
}

/// Euclidean K-nearest stations per link.
pub fn knearest_stations(
    link_positions: &[[f64; 2]],
    station_positions: &[[f64; 2]],
    k: usize,
) -> Result<StationGraph> {
    if k == 0 || k > station_positions.len() {
        return Err(SynthError::InvalidConfig(format!(
            "k = {k} with {} stations",
            station_positions.len()
        )));
    }
    let neighbor_map = link_positions
        .iter()
        .map(|l| {
            let mut by_distance: Vec<(f64, usize)> = station_positions
                .iter()
                .enumerate()
                .map(|(si, s)| {
                    (((l[0] - s[0]).powi(2) + (l[1] - s[1]).powi(2)).sqrt(), si)
                })
                .collect();
            by_distance.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            by_distance.into_iter().take(k).map(|(_, si)| si).collect()
        })
        .collect();
    Ok(StationGraph {
        link_positions: link_positions.to_vec(),
        station_positions: station_positions.to_vec(),
        neighbor_map,
    })
}
