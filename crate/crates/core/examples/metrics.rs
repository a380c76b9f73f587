//! Accuracy metrics, McNemar's test, and the feature diagnostics on small
//! hand-made inputs.

use bitdnn::eval::{
    confusion, dunn_index, mcnemar, mcnemar_from_counts, metrics_report, per_class_entropy, r_squared, LogBase,
};

fn main() -> bitdnn::Result<()> {
    let truth = [1, 1, 1, 2, 2, 2, 3, 3, 3, 0];
    let model_a = [1, 1, 2, 2, 2, 2, 3, 3, 1, 3];
    let model_b = [1, 2, 2, 2, 1, 2, 3, 1, 1, 3];

    let report = metrics_report(&confusion(&truth, &model_a, 3)?)?;
    println!("pixels {}  OA {:.4}  AA {:.4}", report.pixels, report.overall_accuracy, report.average_accuracy);
    if let Some(k) = report.kappa {
        println!("kappa {k:.4}");
    }
    for c in &report.per_class {
        let show = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v:.4}"));
        println!("class {}  sensitivity {}  specificity {}", c.class, show(c.sensitivity), show(c.specificity));
    }

    let m = mcnemar(&truth, &model_a, &model_b)?;
    println!("A vs B: f12 {} f21 {} chi2 {:.3} {}", m.f12, m.f21, m.chi2, m.significance);
    let m = mcnemar_from_counts(25, 10)?;
    println!("f12 25, f21 10: chi2 {:.3} {}", m.chi2, m.significance);

    let features = [
        vec![1.0, 0.0, 0.0],
        vec![0.9, 0.1, 0.0],
        vec![0.3, 0.3, 0.4],
        vec![0.4, 0.3, 0.3],
    ];
    let labels = [1, 1, 2, 2];
    for (class, h) in per_class_entropy(&features, &labels, LogBase::Two)? {
        println!("class {class} entropy {h:.4} bits");
    }
    println!("Dunn index {:.4}", dunn_index(&features, &labels)?);
    println!("R2 {:.4}", r_squared(&[1.0, 2.0, 3.0, 4.0], &[2.1, 3.9, 6.2, 7.8])?);
    Ok(())
}
