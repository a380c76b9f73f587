//! Feature-space interpretability measures: per-class Shannon entropy,
//! the Dunn index, and the coefficient of determination.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

impl LogBase {
    fn ln_scale(self) -> f64 {
        match self {
            LogBase::Natural => 1.0,
            LogBase::Two => std::f64::consts::LN_2,
        }
    }
}

/// Feature contributions: mean absolute activation per feature,
/// normalized to sum to 1 (uniform when every activation is zero).
pub fn feature_distribution<S: AsRef<[f64]>>(samples: &[S]) -> Result<Vec<f64>> {
    let first = samples.first().ok_or(Error::NoLabeledPixels)?;
    let m = first.as_ref().len();
    if m == 0 {
        return Err(Error::InvalidArgument("feature vectors are empty".into()));
    }
    let mut mean = vec![0.0; m];
    for s in samples {
        let s = s.as_ref();
        if s.len() != m {
            return Err(Error::Shape(format!("feature vector of length {} among length {m}", s.len())));
        }
        for (acc, v) in mean.iter_mut().zip(s) {
            *acc += v.abs();
        }
    }
    let total: f64 = mean.iter().sum();
    if total == 0.0 {
        return Ok(vec![1.0 / m as f64; m]);
    }
    Ok(mean.into_iter().map(|v| v / total).collect())
}

/// Entropy of a probability vector with `0 ln 0 = 0`.
pub fn entropy_of(p: &[f64], base: LogBase) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>() / base.ln_scale()
}

/// Shannon entropy of one class's feature vectors.
pub fn shannon_entropy<S: AsRef<[f64]>>(class_features: &[S], base: LogBase) -> Result<f64> {
    Ok(entropy_of(&feature_distribution(class_features)?, base))
}

/// Entropy for each class present in `labels` (label 0 is skipped),
/// keyed by class id in ascending order.
pub fn per_class_entropy<S: AsRef<[f64]>>(features: &[S], labels: &[u32], base: LogBase) -> Result<Vec<(u32, f64)>> {
    group_by_class(features, labels)?
        .into_iter()
        .map(|(c, group)| Ok((c, shannon_entropy(&group, base)?)))
        .collect()
}

fn group_by_class<'a, S: AsRef<[f64]>>(features: &'a [S], labels: &[u32]) -> Result<BTreeMap<u32, Vec<&'a [f64]>>> {
    if features.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} feature vectors but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let mut groups: BTreeMap<u32, Vec<&[f64]>> = BTreeMap::new();
    for (f, &l) in features.iter().zip(labels) {
        if l != 0 {
            groups.entry(l).or_default().push(f.as_ref());
        }
    }
    if groups.is_empty() {
        return Err(Error::NoLabeledPixels);
    }
    Ok(groups)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Minimum distance between class means over the largest within-class
/// pairwise distance. Only classes with at least two samples count.
pub fn dunn_index<S: AsRef<[f64]>>(features: &[S], labels: &[u32]) -> Result<f64> {
    let groups: Vec<Vec<&[f64]>> = group_by_class(features, labels)?
        .into_values()
        .filter(|g| g.len() >= 2)
        .collect();
    if groups.len() < 2 {
        return Err(Error::InvalidArgument(
            "Dunn index needs at least two classes with two or more samples".into(),
        ));
    }
    let means: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let mut m = vec![0.0; g[0].len()];
            for s in g {
                for (acc, v) in m.iter_mut().zip(*s) {
                    *acc += v;
                }
            }
            m.iter_mut().for_each(|v| *v /= g.len() as f64);
            m
        })
        .collect();
    let mut diameter: f64 = 0.0;
    for g in &groups {
        for i in 0..g.len() {
            for j in i + 1..g.len() {
                diameter = diameter.max(distance(g[i], g[j]));
            }
        }
    }
    if diameter == 0.0 {
        return Err(Error::ZeroIntraClassSpread);
    }
    let mut separation = f64::INFINITY;
    for i in 0..means.len() {
        for j in i + 1..means.len() {
            separation = separation.min(distance(&means[i], &means[j]));
        }
    }
    Ok(separation / diameter)
}

/// Squared Pearson correlation.
pub fn r_squared(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("x has {} values, y has {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 pairs, got {}", x.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy * sxy / (sxx * syy)).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn entropy_fixtures() {
        assert_eq!(shannon_entropy(&[[0.0, 3.0, 0.0]], LogBase::Natural).unwrap(), 0.0);
        assert_abs_diff_eq!(
            shannon_entropy(&[[1.0, 1.0, 1.0, 1.0]], LogBase::Natural).unwrap(),
            4f64.ln(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            shannon_entropy(&[[0.5, 0.25, 0.25]], LogBase::Natural).unwrap(),
            1.0397207708399179,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(shannon_entropy(&[[0.5, 0.25, 0.25]], LogBase::Two).unwrap(), 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(
            shannon_entropy(&[[0.0, 0.0]], LogBase::Natural).unwrap(),
            2f64.ln(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn entropy_uses_absolute_means() {
        let a = shannon_entropy(&[vec![1.0, -1.0], vec![-3.0, 3.0]], LogBase::Natural).unwrap();
        assert_abs_diff_eq!(a, 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn dunn_fixture() {
        let f = [[0.0], [0.2], [1.0], [1.2]];
        assert_abs_diff_eq!(dunn_index(&f, &[1, 1, 2, 2]).unwrap(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn dunn_errors() {
        let f = [[0.0], [0.0], [1.0], [1.0]];
        assert!(matches!(dunn_index(&f, &[1, 1, 2, 2]), Err(Error::ZeroIntraClassSpread)));
        assert!(dunn_index(&f, &[1, 1, 1, 2]).is_err());
    }

    #[test]
    fn r_squared_cases() {
        let x = [1.0, 2.0, 4.0, 7.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert_abs_diff_eq!(r_squared(&x, &y).unwrap(), 1.0, epsilon = 1e-15);
        assert!(matches!(r_squared(&x, &[3.0; 4]), Err(Error::ZeroVariance)));
        assert!(r_squared(&x[..2], &y[..2]).is_err());
    }

    proptest! {
        #[test]
        fn entropy_bounded(v in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 6), 1..5)) {
            let e = shannon_entropy(&v, LogBase::Natural).unwrap();
            prop_assert!(e >= 0.0 && e <= 6f64.ln() + 1e-12);
        }

        #[test]
        fn dunn_scale_invariant(
            pts in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 3), 6),
            a in 0.01f64..100.0,
        ) {
            let labels = [1, 1, 1, 2, 2, 2];
            let scaled: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|v| v * a).collect()).collect();
            if let (Ok(d1), Ok(d2)) = (dunn_index(&pts, &labels), dunn_index(&scaled, &labels)) {
                prop_assert!((d1 - d2).abs() <= 1e-9 * d1.max(1.0));
            }
        }
    }
}
