use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabelMap;
use crate::error::{Error, Result};

/// Disjoint train/test pixel coordinates, each sorted row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSplit {
    pub seed: u64,
    pub train_fraction: f64,
    pub train: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
}

/// Number of training pixels for a class with `count` labeled pixels.
///
/// `round(fraction * count)`, clamped to `[1, count - 1]` when
/// `count >= 2` so the class lands in both sets.
pub fn stratum_train_count(count: usize, fraction: f64) -> usize {
    let n = (fraction * count as f64).round() as usize;
    if count >= 2 {
        n.clamp(1, count - 1)
    } else {
        n.min(count)
    }
}

pub fn split_samples(labels: &LabelMap, train_fraction: f64, seed: u64) -> Result<SampleSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    if labels.labeled_count() == 0 {
        return Err(Error::NoLabeledPixels);
    }
    let mut per_class: Vec<Vec<(usize, usize)>> = vec![Vec::new(); labels.n_class() + 1];
    for (r, c) in labels.labeled() {
        per_class[labels.get(r, c) as usize].push((r, c));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for pixels in per_class.iter_mut().skip(1) {
        if pixels.is_empty() {
            continue;
        }
        pixels.shuffle(&mut rng);
        let n_train = stratum_train_count(pixels.len(), train_fraction);
        train.extend_from_slice(&pixels[..n_train]);
        test.extend_from_slice(&pixels[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SampleSplit {
        seed,
        train_fraction,
        train,
        test,
    })
}

impl SampleSplit {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split serializes")
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format("sample split", e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn three_pixels_two_thirds() {
        let labels = LabelMap::new(1, 3, vec![1, 1, 1]).unwrap();
        let s = split_samples(&labels, 2.0 / 3.0, 7).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (2, 1));
    }

    #[test]
    fn deterministic_under_seed() {
        let labels = LabelMap::new(4, 4, (0..16).map(|i| i % 4).collect()).unwrap();
        let a = split_samples(&labels, 0.5, 11).unwrap();
        let b = split_samples(&labels, 0.5, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unlabeled_map_is_error() {
        let labels = LabelMap::new(2, 2, vec![0; 4]).unwrap();
        assert!(matches!(
            split_samples(&labels, 0.5, 0),
            Err(Error::NoLabeledPixels)
        ));
    }

    #[test]
    fn bad_fraction_rejected() {
        let labels = LabelMap::new(1, 2, vec![1, 1]).unwrap();
        assert!(split_samples(&labels, 1.0, 0).is_err());
        assert!(split_samples(&labels, 0.0, 0).is_err());
    }

    #[test]
    fn json_shape() {
        let labels = LabelMap::new(1, 2, vec![1, 1]).unwrap();
        let s = split_samples(&labels, 0.5, 3).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        assert_eq!(v["seed"], 3);
        assert!(v["train"][0].is_array());
        assert_eq!(v["train"][0].as_array().unwrap().len(), 2);
    }

    proptest! {
        #[test]
        fn split_partitions_labeled_pixels(
            labels in prop::collection::vec(0u32..5, 1..80),
            fraction in 0.05f64..0.95,
            seed in any::<u64>(),
        ) {
            let w = labels.len();
            let map = LabelMap::new(1, w, labels.clone()).unwrap();
            prop_assume!(map.labeled_count() > 0);
            let s = split_samples(&map, fraction, seed).unwrap();
            let train: BTreeSet<_> = s.train.iter().copied().collect();
            let test: BTreeSet<_> = s.test.iter().copied().collect();
            let all: BTreeSet<_> = map.labeled().collect();
            prop_assert!(train.is_disjoint(&test));
            prop_assert_eq!(train.union(&test).copied().collect::<BTreeSet<_>>(), all);
            for class in 1..=4u32 {
                let n_c = labels.iter().filter(|&&l| l == class).count();
                let n_train = s.train.iter().filter(|&&(r, c)| map.get(r, c) == class).count();
                if n_c >= 2 {
                    let rounded = (fraction * n_c as f64).round() as usize;
                    if (1..n_c).contains(&rounded) {
                        prop_assert_eq!(n_train, rounded);
                    }
                    prop_assert!(n_train >= 1 && n_train < n_c);
                }
            }
        }
    }
}
