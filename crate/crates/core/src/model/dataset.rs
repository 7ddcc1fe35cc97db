//! Balanced, stratified 80/20 datasets of paired pressure maps.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ModelError, NUM_CLASSES};
use crate::analytics::raster::rasterize_pressure_map;
use crate::gateway::GaitSegment;
use crate::seed;
use crate::sim::gait::Foot;
use crate::sim::profile::ImpairmentLevel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetItem {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub label: ImpairmentLevel,
    /// provenance for reports, e.g. "P07@35000"
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub items: Vec<DatasetItem>,
    pub split_seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// items per class after balancing
    pub class_counts: [usize; NUM_CLASSES],
}

impl Dataset {
    pub fn train_items(&self) -> impl Iterator<Item = &DatasetItem> {
        self.train.iter().map(move |&i| &self.items[i])
    }

    pub fn test_items(&self) -> impl Iterator<Item = &DatasetItem> {
        self.test.iter().map(move |&i| &self.items[i])
    }

    pub fn counts(&self, idx: &[usize]) -> [usize; NUM_CLASSES] {
        let mut c = [0; NUM_CLASSES];
        for &i in idx {
            c[self.items[i].label.index()] += 1;
        }
        c
    }

    /// Copy with training labels permuted (chance-level control).
    pub fn with_shuffled_train_labels(&self, seed: u64) -> Self {
        let mut d = self.clone();
        let mut labels: Vec<ImpairmentLevel> = self.train.iter().map(|&i| self.items[i].label).collect();
        labels.shuffle(&mut seed::rng(seed, "label-shuffle"));
        for (&i, l) in self.train.iter().zip(labels) {
            d.items[i].label = l;
        }
        d
    }
}

/// Rasterize labelled segments into model inputs (one map per foot).
pub fn items_from_segments(segments: &[GaitSegment], h: usize, w: usize) -> Result<Vec<DatasetItem>, ModelError> {
    segments
        .iter()
        .map(|s| {
            let label = s
                .label
                .ok_or_else(|| ModelError::Dataset(format!("segment {}@{} has no label", s.patient_ref, s.start_ts)))?;
            Ok(DatasetItem {
                left: rasterize_pressure_map(s, Foot::Left, h, w).values,
                right: rasterize_pressure_map(s, Foot::Right, h, w).values,
                label,
                tag: format!("{}@{}", s.patient_ref, s.start_ts),
            })
        })
        .collect()
}

/// Downsample every class to the minority count, then split each class
/// 80/20 after a seeded shuffle. The test total is round(0.2·N); per-class
/// remainders are handed out in class order.
pub fn build_dataset(items: Vec<DatasetItem>, seed: u64) -> Result<Dataset, ModelError> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, it) in items.iter().enumerate() {
        by_class[it.label.index()].push(i);
    }
    if let Some(missing) = by_class.iter().position(Vec::is_empty) {
        let name = ImpairmentLevel::from_index(missing).expect("class index");
        return Err(ModelError::Dataset(format!("no segments for class {name}")));
    }
    let m = by_class.iter().map(Vec::len).min().expect("three classes");
    let mut rng = seed::rng(seed, "dataset");
    for ids in by_class.iter_mut() {
        ids.shuffle(&mut rng);
        ids.truncate(m);
        ids.sort_unstable();
        ids.shuffle(&mut rng);
    }
    let total = m * NUM_CLASSES;
    let target_test = (total as f64 * 0.2).round() as usize;
    let base = m / 5; // floor(0.2·m)
    let mut n_test = [base; NUM_CLASSES];
    let mut k = 0;
    while n_test.iter().sum::<usize>() < target_test {
        n_test[k % NUM_CLASSES] += 1;
        k += 1;
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (c, ids) in by_class.iter().enumerate() {
        test.extend_from_slice(&ids[..n_test[c]]);
        train.extend_from_slice(&ids[n_test[c]..]);
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok(Dataset {
        items,
        split_seed: seed,
        train,
        test,
        class_counts: [m; NUM_CLASSES],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn items(counts: [usize; 3]) -> Vec<DatasetItem> {
        let mut v = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for k in 0..n {
                v.push(DatasetItem {
                    left: vec![k as f64],
                    right: vec![c as f64],
                    label: ImpairmentLevel::from_index(c).unwrap(),
                    tag: format!("{c}-{k}"),
                });
            }
        }
        v
    }

    #[test]
    fn balanced_split_arithmetic() {
        let d = build_dataset(items([100, 100, 100]), 1).unwrap();
        assert_eq!(d.train.len(), 240);
        assert_eq!(d.test.len(), 60);
        assert_eq!(d.counts(&d.train), [80, 80, 80]);
        assert_eq!(d.counts(&d.test), [20, 20, 20]);
    }

    #[test]
    fn downsamples_to_minority() {
        let d = build_dataset(items([120, 100, 80]), 2).unwrap();
        assert_eq!(d.class_counts, [80, 80, 80]);
        assert_eq!(d.train.len() + d.test.len(), 240);
        let mut all: Vec<usize> = d.train.iter().chain(&d.test).copied().collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 240, "partitions overlap");
    }

    #[test]
    fn split_within_one_of_eighty_percent() {
        for m in [7usize, 33, 101, 103] {
            let d = build_dataset(items([m, m, m]), 3).unwrap();
            let n = 3 * m;
            let want = 0.8 * n as f64;
            assert!((d.train.len() as f64 - want).abs() <= 1.0, "m={m}: {}", d.train.len());
        }
    }

    #[test]
    fn deterministic_and_errors_on_missing_class() {
        assert_eq!(build_dataset(items([10, 10, 10]), 5).unwrap(), build_dataset(items([10, 10, 10]), 5).unwrap());
        assert!(matches!(build_dataset(items([10, 0, 10]), 5), Err(ModelError::Dataset(_))));
    }
}
