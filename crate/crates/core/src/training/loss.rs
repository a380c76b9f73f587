//! Margin, reconstruction, and total losses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MarginVariant {
    /// Squared hinge on the capsule length for both terms.
    #[default]
    Canonical,
    /// Linear hinge on the squared length for the present-class term.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarginLossConfig {
    pub edge_plus: f64,
    pub edge_minus: f64,
    pub mu: f64,
    pub variant: MarginVariant,
}

impl Default for MarginLossConfig {
    fn default() -> Self {
        Self {
            edge_plus: 0.9,
            edge_minus: 0.1,
            mu: 0.5,
            variant: MarginVariant::Canonical,
        }
    }
}

impl MarginLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.edge_minus && self.edge_minus < self.edge_plus && self.edge_plus < 1.0) {
            return Err(Error::Config(format!(
                "margin edges must satisfy 0 < edge_minus < edge_plus < 1, got {} / {}",
                self.edge_minus, self.edge_plus
            )));
        }
        if self.mu <= 0.0 {
            return Err(Error::Config(format!("mu must be positive, got {}", self.mu)));
        }
        Ok(())
    }
}

pub(crate) fn margin_loss_value(lengths: &[f64], target: usize, cfg: &MarginLossConfig) -> f64 {
    lengths
        .iter()
        .enumerate()
        .map(|(i, &len)| {
            if i == target {
                match cfg.variant {
                    MarginVariant::Canonical => (cfg.edge_plus - len).max(0.0).powi(2),
                    MarginVariant::AsPrinted => (cfg.edge_plus - len * len).max(0.0),
                }
            } else {
                cfg.mu * (len - cfg.edge_minus).max(0.0).powi(2)
            }
        })
        .sum()
}

pub(crate) fn margin_loss_backward(
    lengths: &[f64],
    target: usize,
    cfg: &MarginLossConfig,
    upstream: f64,
    grad: &mut [f64],
) {
    for (i, (&len, g)) in lengths.iter().zip(grad.iter_mut()).enumerate() {
        let d = if i == target {
            match cfg.variant {
                MarginVariant::Canonical => -2.0 * (cfg.edge_plus - len).max(0.0),
                MarginVariant::AsPrinted => {
                    if cfg.edge_plus - len * len > 0.0 {
                        -2.0 * len
                    } else {
                        0.0
                    }
                }
            }
        } else {
            2.0 * cfg.mu * (len - cfg.edge_minus).max(0.0)
        };
        *g += upstream * d;
    }
}

/// Margin loss over per-class capsule lengths; `target` is a 1-based class id.
pub fn margin_loss(lengths: &[f64], target: u32, config: &MarginLossConfig) -> Result<f64> {
    if target == 0 || target as usize > lengths.len() {
        return Err(Error::InvalidArgument(format!(
            "target {target} outside [1, {}]",
            lengths.len()
        )));
    }
    Ok(margin_loss_value(lengths, target as usize - 1, config))
}

/// Mean squared error between a reconstruction and its target.
pub fn reconstruction_loss(y_hat: &[f64], y: &[f64]) -> Result<f64> {
    if y_hat.len() != y.len() || y.is_empty() {
        return Err(Error::Shape(format!(
            "reconstruction length {} vs target length {}",
            y_hat.len(),
            y.len()
        )));
    }
    Ok(y_hat.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

pub fn total_loss(margin: f64, recon: f64, theta: f64) -> f64 {
    margin + theta * recon
}

/// One-hot encoding of a 1-based class id.
pub fn one_hot(class: u32, n_class: usize) -> Vec<f64> {
    (1..=n_class as u32)
        .map(|c| if c == class { 1.0 } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn both_hinges_inactive() {
        let cfg = MarginLossConfig::default();
        assert_eq!(margin_loss(&[0.9, 0.1], 1, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn single_class_zero_length() {
        let cfg = MarginLossConfig::default();
        assert_abs_diff_eq!(margin_loss(&[0.0], 1, &cfg).unwrap(), 0.81, epsilon = 1e-15);
    }

    #[test]
    fn half_lengths() {
        let cfg = MarginLossConfig::default();
        assert_abs_diff_eq!(margin_loss(&[0.5, 0.5], 1, &cfg).unwrap(), 0.24, epsilon = 1e-15);
    }

    #[test]
    fn as_printed_differs() {
        let printed = MarginLossConfig {
            variant: MarginVariant::AsPrinted,
            ..Default::default()
        };
        // 0.9 - 0.25 = 0.65 on the target, 0.5 * 0.16 = 0.08 elsewhere
        assert_abs_diff_eq!(margin_loss(&[0.5, 0.5], 1, &printed).unwrap(), 0.73, epsilon = 1e-15);
    }

    #[test]
    fn target_out_of_range() {
        let cfg = MarginLossConfig::default();
        assert!(margin_loss(&[0.5, 0.5], 0, &cfg).is_err());
        assert!(margin_loss(&[0.5, 0.5], 3, &cfg).is_err());
    }

    #[test]
    fn reconstruction_cases() {
        assert_eq!(reconstruction_loss(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(reconstruction_loss(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.5);
        assert!(reconstruction_loss(&[0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn total_is_linear() {
        assert_abs_diff_eq!(total_loss(1.0, 2.0, 0.0005), 1.001, epsilon = 1e-15);
        assert_eq!(total_loss(0.7, 123.0, 0.0), 0.7);
        let a = total_loss(1.0, 2.0, 0.3);
        let b = total_loss(1.0, 4.0, 0.3);
        assert_abs_diff_eq!(b - a, 0.6, epsilon = 1e-12);
    }

    #[test]
    fn margin_gradient_matches_finite_difference() {
        for variant in [MarginVariant::Canonical, MarginVariant::AsPrinted] {
            let cfg = MarginLossConfig {
                variant,
                ..Default::default()
            };
            let lengths = [0.3, 0.6, 0.05, 0.95];
            let mut g = vec![0.0; 4];
            margin_loss_backward(&lengths, 1, &cfg, 1.0, &mut g);
            for i in 0..4 {
                let h = 1e-7;
                let mut a = lengths;
                let mut b = lengths;
                a[i] += h;
                b[i] -= h;
                let fd = (margin_loss_value(&a, 1, &cfg) - margin_loss_value(&b, 1, &cfg)) / (2.0 * h);
                assert_abs_diff_eq!(g[i], fd, epsilon = 1e-6);
            }
        }
    }
}
