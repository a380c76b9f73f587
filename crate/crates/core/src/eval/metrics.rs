//! Confusion-matrix accuracy measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are truth, columns prediction; class ids are 1-based outside and
/// 0-based inside `counts`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_class: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(n_class: usize) -> Self {
        Self {
            n_class,
            counts: vec![vec![0; n_class]; n_class],
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_class).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }
}

/// Counts `(truth, pred)` pairs; pixels with truth 0 are skipped.
pub fn confusion(truth: &[u32], pred: &[u32], n_class: usize) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::Shape(format!(
            "truth has {} labels, prediction has {}",
            truth.len(),
            pred.len()
        )));
    }
    let mut cm = ConfusionMatrix::zeros(n_class);
    for (&t, &p) in truth.iter().zip(pred) {
        if t == 0 {
            continue;
        }
        if t as usize > n_class || p == 0 || p as usize > n_class {
            return Err(Error::InvalidArgument(format!(
                "label pair ({t}, {p}) outside 1..={n_class}"
            )));
        }
        cm.counts[t as usize - 1][p as usize - 1] += 1;
    }
    Ok(cm)
}

/// Overall accuracy and average per-class recall (classes without truth
/// pixels are left out of the average).
pub fn oa_aa(cm: &ConfusionMatrix) -> Result<(f64, f64)> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::NoLabeledPixels);
    }
    let oa = cm.trace() as f64 / total as f64;
    let recalls: Vec<f64> = (0..cm.n_class)
        .filter(|&i| cm.row_sum(i) > 0)
        .map(|i| cm.counts[i][i] as f64 / cm.row_sum(i) as f64)
        .collect();
    let aa = recalls.iter().sum::<f64>() / recalls.len() as f64;
    Ok((oa, aa))
}

pub fn kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::NoLabeledPixels);
    }
    let n = total as f64;
    let p_o = cm.trace() as f64 / n;
    let p_e = (0..cm.n_class)
        .map(|i| cm.row_sum(i) as f64 * cm.col_sum(i) as f64)
        .sum::<f64>()
        / (n * n);
    if p_e >= 1.0 {
        return Err(Error::Numeric("kappa undefined: chance agreement is 1".into()));
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// One-vs-rest sensitivity and specificity of 1-based `class`; `None`
/// where the denominator is zero.
pub fn sens_spec(cm: &ConfusionMatrix, class: u32) -> Result<(Option<f64>, Option<f64>)> {
    if class == 0 || class as usize > cm.n_class {
        return Err(Error::InvalidArgument(format!("class {class} outside 1..={}", cm.n_class)));
    }
    let c = class as usize - 1;
    let tp = cm.counts[c][c];
    let fn_ = cm.row_sum(c) - tp;
    let fp = cm.col_sum(c) - tp;
    let tn = cm.total() - tp - fn_ - fp;
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    Ok((ratio(tp, tp + fn_), ratio(tn, tn + fp)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: u32,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pixels: u64,
    pub overall_accuracy: f64,
    pub average_accuracy: f64,
    pub kappa: Option<f64>,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

pub fn metrics_report(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let (oa, aa) = oa_aa(cm)?;
    let per_class = (1..=cm.n_class as u32)
        .map(|c| {
            let (sensitivity, specificity) = sens_spec(cm, c)?;
            Ok(ClassMetrics {
                class: c,
                sensitivity,
                specificity,
            })
        })
        .collect::<Result<_>>()?;
    Ok(MetricsReport {
        pixels: cm.total(),
        overall_accuracy: oa,
        average_accuracy: aa,
        kappa: kappa(cm).ok(),
        per_class,
        confusion: cm.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cm(counts: Vec<Vec<u64>>) -> ConfusionMatrix {
        ConfusionMatrix {
            n_class: counts.len(),
            counts,
        }
    }

    #[test]
    fn worked_two_class() {
        let m = cm(vec![vec![8, 2], vec![5, 5]]);
        let (oa, aa) = oa_aa(&m).unwrap();
        assert_abs_diff_eq!(oa, 0.65, epsilon = 1e-15);
        assert_abs_diff_eq!(aa, 0.65, epsilon = 1e-15);
        assert_abs_diff_eq!(kappa(&m).unwrap(), 0.3, epsilon = 1e-15);
        let (s, p) = sens_spec(&m, 1).unwrap();
        assert_abs_diff_eq!(s.unwrap(), 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(p.unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn chance_level_kappa() {
        assert_abs_diff_eq!(kappa(&cm(vec![vec![5, 5], vec![5, 5]])).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_kappa_errors() {
        assert!(kappa(&cm(vec![vec![4, 0], vec![0, 0]])).is_err());
    }

    #[test]
    fn empty_class_left_out_of_aa() {
        let m = cm(vec![vec![3, 1, 0], vec![0, 0, 0], vec![0, 2, 2]]);
        let (_, aa) = oa_aa(&m).unwrap();
        assert_abs_diff_eq!(aa, (0.75 + 0.5) / 2.0, epsilon = 1e-15);
        assert_eq!(sens_spec(&m, 2).unwrap().0, None);
    }

    #[test]
    fn confusion_counts_and_skips_unlabeled() {
        let m = confusion(&[1, 0, 2, 2], &[2, 1, 2, 1], 2).unwrap();
        assert_eq!(m.counts, vec![vec![0, 1], vec![1, 1]]);
        assert!(confusion(&[1], &[1, 2], 2).is_err());
        assert!(oa_aa(&ConfusionMatrix::zeros(3)).is_err());
    }
}
