use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DataError, Result, TimeSeriesDataset};

/// Rolling-origin fold identifier. The highest fold spans the full time axis;
/// each lower fold drops the last 10% of the one above it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FoldId {
    F0,
    F1,
    F2,
    F3,
    F4,
}

impl FoldId {
    pub const ALL: [FoldId; 5] = [FoldId::F0, FoldId::F1, FoldId::F2, FoldId::F3, FoldId::F4];

    pub fn index(self) -> usize {
        match self {
            FoldId::F0 => 0,
            FoldId::F1 => 1,
            FoldId::F2 => 2,
            FoldId::F3 => 3,
            FoldId::F4 => 4,
        }
    }

    pub fn from_index(i: usize) -> Option<FoldId> {
        FoldId::ALL.get(i).copied()
    }
}

impl fmt::Display for FoldId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F{}", self.index())
    }
}

impl FromStr for FoldId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "F0" | "f0" => Ok(FoldId::F0),
            "F1" | "f1" => Ok(FoldId::F1),
            "F2" | "f2" => Ok(FoldId::F2),
            "F3" | "f3" => Ok(FoldId::F3),
            "F4" | "f4" => Ok(FoldId::F4),
            other => Err(format!("unknown fold \"{other}\" (expected F0..F4)")),
        }
    }
}

/// Half-open train/val/test intervals over the time axis of one fold.
/// Temporal order is always train < val < test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub fold_id: FoldId,
    pub train_range: Range<usize>,
    pub val_range: Range<usize>,
    pub test_range: Range<usize>,
}

impl FoldSpec {
    pub fn extent(&self) -> usize {
        self.test_range.end
    }
}

/// Splits `total_extent` time steps into `num_folds` rolling-origin folds.
///
/// The last fold spans `[0, total_extent)`; each earlier fold spans the first
/// 90% (floor) of the previous fold's extent. Within each fold the extent is
/// split 70/20/10: train and val are floored, the remainder goes to test so
/// the test interval never ends up empty.
pub fn rolling_origin_folds(total_extent: usize, num_folds: usize) -> Result<Vec<FoldSpec>> {
    if num_folds < 1 || num_folds > FoldId::ALL.len() {
        return Err(DataError::InvalidArgument(format!(
            "num_folds must be between 1 and {}, got {num_folds}",
            FoldId::ALL.len()
        )));
    }
    if total_extent < num_folds * 10 {
        return Err(DataError::InvalidArgument(format!(
            "total_extent {total_extent} too small for {num_folds} folds (need >= {})",
            num_folds * 10
        )));
    }
    let mut extents = vec![0usize; num_folds];
    extents[num_folds - 1] = total_extent;
    for i in (0..num_folds - 1).rev() {
        extents[i] = extents[i + 1] * 9 / 10;
    }
    let folds = extents
        .iter()
        .enumerate()
        .map(|(i, &extent)| {
            let train = extent * 7 / 10;
            let val = extent * 2 / 10;
            FoldSpec {
                fold_id: FoldId::from_index(i).expect("num_folds bounded above"),
                train_range: 0..train,
                val_range: train..train + val,
                test_range: train + val..extent,
            }
        })
        .collect();
    Ok(folds)
}

/// Instance indices of a windowed dataset assigned to one fold's splits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Assigns each instance to train/val/test by the rank of its window-end date
/// among the distinct window-end dates of the dataset. Instances whose rank
/// falls beyond the fold's extent are excluded (they belong to trimmed data).
pub fn fold_split(dataset: &TimeSeriesDataset, fold: &FoldSpec) -> SplitIndices {
    let dates: BTreeSet<_> =
        dataset.instance_meta().iter().map(|m| m.window_end_date).collect();
    let ranks: Vec<_> = dates.into_iter().collect();
    let mut split = SplitIndices { train: Vec::new(), val: Vec::new(), test: Vec::new() };
    for (n, meta) in dataset.instance_meta().iter().enumerate() {
        let rank = ranks
            .binary_search(&meta.window_end_date)
            .expect("window end date came from the dataset");
        if fold.train_range.contains(&rank) {
            split.train.push(n);
        } else if fold.val_range.contains(&rank) {
            split.val.push(n);
        } else if fold.test_range.contains(&rank) {
            split.test.push(n);
        }
    }
    split
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hundred_days_five_folds_matches_protocol() {
        let folds = rolling_origin_folds(100, 5).unwrap();
        let f4 = &folds[4];
        assert_eq!(f4.train_range, 0..70);
        assert_eq!(f4.val_range, 70..90);
        assert_eq!(f4.test_range, 90..100);
        let f3 = &folds[3];
        assert_eq!(f3.extent(), 90);
        assert_eq!(f3.train_range, 0..63);
        assert_eq!(f3.val_range, 63..81);
        assert_eq!(f3.test_range, 81..90);
    }

    #[test]
    fn small_extent_contracts_by_iterated_ninety_percent() {
        // Oracle: iterate the 0.9 contraction from 50 four times.
        let mut e = 50usize;
        let mut expected = vec![50];
        for _ in 0..4 {
            e = e * 9 / 10;
            expected.push(e);
        }
        expected.reverse();
        assert_eq!(expected[0], 32);

        let folds = rolling_origin_folds(50, 5).unwrap();
        let extents: Vec<_> = folds.iter().map(|f| f.extent()).collect();
        assert_eq!(extents, expected);
    }

    #[test]
    fn folds_partition_their_extent() {
        for extent in [50usize, 73, 100, 641] {
            for f in rolling_origin_folds(extent, 5).unwrap() {
                assert_eq!(f.train_range.start, 0);
                assert_eq!(f.train_range.end, f.val_range.start);
                assert_eq!(f.val_range.end, f.test_range.start);
                assert!(!f.test_range.is_empty());
                assert!(f.train_range.end <= f.val_range.start);
            }
        }
    }

    #[test]
    fn boundaries_are_deterministic() {
        assert_eq!(rolling_origin_folds(137, 5).unwrap(), rolling_origin_folds(137, 5).unwrap());
    }

    #[test]
    fn too_small_extent_is_rejected() {
        assert!(rolling_origin_folds(49, 5).is_err());
        assert!(rolling_origin_folds(50, 5).is_ok());
    }

    #[test]
    fn fold_id_parses_and_displays() {
        assert_eq!("F3".parse::<FoldId>().unwrap(), FoldId::F3);
        assert_eq!(FoldId::F2.to_string(), "F2");
        assert!("F5".parse::<FoldId>().is_err());
    }
}
