//! Compares reverse-mode gradients of the full loss with central finite
//! differences on a small random model.
//!
//! Run with `cargo run --release --example gradcheck`.

use bitdnn::training::{run_gradcheck, GradcheckConfig, GradcheckMode};

fn main() -> bitdnn::Result<()> {
    for (label, cfg) in [
        ("random", GradcheckConfig::default()),
        (
            "zero plateau",
            GradcheckConfig {
                mode: GradcheckMode::InactiveHinges,
                ..Default::default()
            },
        ),
        (
            "corrupted",
            GradcheckConfig {
                corrupt_gradient: true,
                ..Default::default()
            },
        ),
    ] {
        let report = run_gradcheck(&cfg)?;
        println!(
            "{label:>12}: F_N={} samples={} max_rel_err={:.3e} {} ({:.1}s)",
            report.feature_len,
            report.checks.len(),
            report.max_relative_error,
            if report.passed { "PASS" } else { "FAIL" },
            report.seconds
        );
    }
    let worst = run_gradcheck(&GradcheckConfig::default())?
        .checks
        .into_iter()
        .max_by(|a, b| a.relative_error.total_cmp(&b.relative_error));
    if let Some(c) = worst {
        println!("worst entry: {}[{}] analytic={:.6e} numeric={:.6e}", c.tensor, c.index, c.analytic, c.numeric);
    }
    Ok(())
}
