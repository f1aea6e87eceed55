use ndarray::{Array2, Array3};

use crate::synth::StationGraph;

use super::{NnError, Result};

/// Per-link elementwise max over the K nearest stations of the transformed
/// station signals: `h_v[.,t] = max_{u in N_K(v)} act(W . X_u[.,t])`.
///
/// `ws_signals` is stations x channels x T, `w` maps the channel axis
/// (`c_out x c_in`, bias-free), and the output is links x c_out x T.
pub fn gnn_max_aggregate(
    ws_signals: &Array3<f64>,
    graph: &StationGraph,
    w: &Array2<f64>,
    activation: fn(f64) -> f64,
) -> Result<Array3<f64>> {
    let (stations, c_in, t) = ws_signals.dim();
    if stations != graph.station_positions.len() {
        return Err(NnError::Shape(format!(
            "ws_signals has {stations} stations, graph has {}",
            graph.station_positions.len()
        )));
    }
    if w.ncols() != c_in {
        return Err(NnError::Shape(format!(
            "weight matrix is {}x{}, signals have {c_in} channels",
            w.nrows(),
            w.ncols()
        )));
    }
    let c_out = w.nrows();
    let n_links = graph.neighbor_map.len();
    let mut out = Array3::from_elem((n_links, c_out, t), f64::NEG_INFINITY);
    for (v, neighbors) in graph.neighbor_map.iter().enumerate() {
        for &u in neighbors {
            if u >= stations {
                return Err(NnError::Shape(format!(
                    "neighbor map references station {u}, only {stations} available"
                )));
            }
            let xu = ws_signals.index_axis(ndarray::Axis(0), u);
            let transformed = w.dot(&xu).mapv(activation);
            for c in 0..c_out {
                for ti in 0..t {
                    let cell = &mut out[[v, c, ti]];
                    *cell = cell.max(transformed[[c, ti]]);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph(links: usize, stations: usize, k: usize, seed: u64) -> StationGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp: Vec<[f64; 2]> =
            (0..links).map(|_| [rng.random::<f64>() * 10.0, rng.random::<f64>() * 10.0]).collect();
        let sp: Vec<[f64; 2]> = (0..stations)
            .map(|_| [rng.random::<f64>() * 10.0, rng.random::<f64>() * 10.0])
            .collect();
        crate::synth::knearest_stations(&lp, &sp, k).unwrap()
    }

    fn identity(x: f64) -> f64 {
        x
    }

    #[test]
    fn single_neighbor_is_plain_transform() {
        let g = graph(3, 4, 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let signals = Array3::from_shape_fn((4, 2, 5), |_| rng.random::<f64>() - 0.5);
        let w = Array2::from_shape_fn((2, 2), |_| rng.random::<f64>() - 0.5);
        let out = gnn_max_aggregate(&signals, &g, &w, f64::tanh).unwrap();
        for (v, neighbors) in g.neighbor_map.iter().enumerate() {
            let expected = w
                .dot(&signals.index_axis(ndarray::Axis(0), neighbors[0]))
                .mapv(f64::tanh);
            for c in 0..2 {
                for t in 0..5 {
                    assert_eq!(out[[v, c, t]], expected[[c, t]]);
                }
            }
        }
    }

    #[test]
    fn identity_transform_takes_elementwise_max() {
        // One link whose two neighbors hold 2 and 5 in a cell: the aggregate
        // must be 5 there.
        let g = StationGraph {
            link_positions: vec![[0.0, 0.0]],
            station_positions: vec![[1.0, 0.0], [0.0, 1.0]],
            neighbor_map: vec![vec![0, 1]],
        };
        let mut signals = Array3::zeros((2, 1, 1));
        signals[[0, 0, 0]] = 2.0;
        signals[[1, 0, 0]] = 5.0;
        let w = Array2::eye(1);
        let out = gnn_max_aggregate(&signals, &g, &w, identity).unwrap();
        assert_eq!(out[[0, 0, 0]], 5.0);
    }

    #[test]
    fn matches_naive_triple_loop_oracle() {
        let g = graph(4, 5, 3, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let signals = Array3::from_shape_fn((5, 3, 4), |_| rng.random::<f64>() * 2.0 - 1.0);
        let w = Array2::from_shape_fn((2, 3), |_| rng.random::<f64>() - 0.5);
        let out = gnn_max_aggregate(&signals, &g, &w, f64::tanh).unwrap();

        for v in 0..4 {
            for c in 0..2 {
                for t in 0..4 {
                    let mut best = f64::NEG_INFINITY;
                    for &u in &g.neighbor_map[v] {
                        let mut acc = 0.0;
                        for i in 0..3 {
                            acc += w[[c, i]] * signals[[u, i, t]];
                        }
                        best = best.max(acc.tanh());
                    }
                    assert!((out[[v, c, t]] - best).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let g = graph(2, 3, 2, 1);
        let signals = Array3::zeros((3, 4, 2));
        let w = Array2::zeros((2, 3)); // wrong input width
        match gnn_max_aggregate(&signals, &g, &w, identity) {
            Err(NnError::Shape(msg)) => assert!(msg.contains("channels")),
            other => panic!("expected shape error, got {other:?}"),
        }
    }
}
