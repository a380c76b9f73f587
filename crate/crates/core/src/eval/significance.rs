//! McNemar's test between two classifiers on the same pixels.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 1-degree-of-freedom chi-squared significance bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Significance {
    #[serde(rename = "NS")]
    NotSignificant,
    /// p <= 0.1
    #[serde(rename = "*")]
    P10,
    /// p <= 0.05
    #[serde(rename = "**")]
    P05,
    /// p <= 0.01
    #[serde(rename = "***")]
    P01,
}

impl Significance {
    pub fn from_chi2(chi2: f64) -> Self {
        if chi2 >= 6.635 {
            Self::P01
        } else if chi2 >= 3.841 {
            Self::P05
        } else if chi2 >= 2.706 {
            Self::P10
        } else {
            Self::NotSignificant
        }
    }

    pub fn stars(self) -> &'static str {
        match self {
            Self::NotSignificant => "NS",
            Self::P10 => "*",
            Self::P05 => "**",
            Self::P01 => "***",
        }
    }
}

impl fmt::Display for Significance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.stars())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    /// A correct, B wrong.
    pub f12: u64,
    /// A wrong, B correct.
    pub f21: u64,
    pub chi2: f64,
    pub significance: Significance,
}

/// `(|f12 - f21| - 1)^2 / (f12 + f21)`.
pub fn mcnemar_from_counts(f12: u64, f21: u64) -> Result<McNemar> {
    if f12 + f21 == 0 {
        return Err(Error::NoDiscordantPairs);
    }
    let diff = f12.abs_diff(f21) as f64 - 1.0;
    let chi2 = diff * diff / (f12 + f21) as f64;
    Ok(McNemar {
        f12,
        f21,
        chi2,
        significance: Significance::from_chi2(chi2),
    })
}

/// Pixels with truth 0 are skipped.
pub fn mcnemar(truth: &[u32], pred_a: &[u32], pred_b: &[u32]) -> Result<McNemar> {
    if truth.len() != pred_a.len() || truth.len() != pred_b.len() {
        return Err(Error::Shape(format!(
            "lengths differ: truth {}, A {}, B {}",
            truth.len(),
            pred_a.len(),
            pred_b.len()
        )));
    }
    let (mut f12, mut f21) = (0, 0);
    for ((&t, &a), &b) in truth.iter().zip(pred_a).zip(pred_b) {
        if t == 0 {
            continue;
        }
        match (a == t, b == t) {
            (true, false) => f12 += 1,
            (false, true) => f21 += 1,
            _ => {}
        }
    }
    mcnemar_from_counts(f12, f21)
}

/// CSV table `model_a,model_b,f12,f21,chi2,significance`.
pub fn mcnemar_csv(rows: &[(String, String, McNemar)]) -> String {
    let mut out = String::from("model_a,model_b,f12,f21,chi2,significance\n");
    for (a, b, m) in rows {
        out.push_str(&format!("{a},{b},{},{},{},{}\n", m.f12, m.f21, m.chi2, m.significance));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn worked_fixture() {
        let m = mcnemar_from_counts(25, 10).unwrap();
        assert_abs_diff_eq!(m.chi2, 5.6, epsilon = 1e-12);
        assert_eq!(m.significance, Significance::P05);
        assert_eq!(m.significance.to_string(), "**");
    }

    #[test]
    fn balanced_is_not_significant() {
        let m = mcnemar_from_counts(10, 10).unwrap();
        assert_abs_diff_eq!(m.chi2, 0.05, epsilon = 1e-15);
        assert_eq!(m.significance, Significance::NotSignificant);
    }

    #[test]
    fn identical_predictions() {
        assert!(matches!(mcnemar(&[1, 2, 1], &[1, 1, 2], &[1, 1, 2]), Err(Error::NoDiscordantPairs)));
    }

    #[test]
    fn band_edges() {
        assert_eq!(Significance::from_chi2(6.635), Significance::P01);
        assert_eq!(Significance::from_chi2(3.841), Significance::P05);
        assert_eq!(Significance::from_chi2(2.706), Significance::P10);
        assert_eq!(Significance::from_chi2(2.7059), Significance::NotSignificant);
    }

    #[test]
    fn symmetric_in_models() {
        let truth = [1, 2, 3, 1, 2, 3, 1];
        let a = [1, 2, 1, 1, 3, 3, 2];
        let b = [2, 2, 3, 3, 2, 1, 1];
        let ab = mcnemar(&truth, &a, &b).unwrap();
        let ba = mcnemar(&truth, &b, &a).unwrap();
        assert_eq!(ab.chi2, ba.chi2);
        assert_eq!((ab.f12, ab.f21), (ba.f21, ba.f12));
    }
}
