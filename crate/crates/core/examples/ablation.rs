//! Trains the three ablation variants on the same synthetic split:
//! model1 (whole spectrum, no enhancement), model2 (band slices, no
//! enhancement), and model3 (band slices with enhancement).
//!
//! `cargo run --release --example ablation -- [epochs] [seed]`

use bitdnn::cli::commands::{builtin_references, interpret_model, run_training};
use bitdnn::cli::config::{DatasetSource, RunConfig};
use bitdnn::model::Variant;
use bitdnn::synthetic::SyntheticConfig;

fn main() -> bitdnn::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().and_then(|a| a.parse().ok()).unwrap_or(15);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(2);

    println!(
        "{:<7} {:>6} {:>8} {:>8} {:>12} {:>10}",
        "variant", "F_N", "train OA", "test OA", "capsule H", "s/epoch"
    );
    for variant in [Variant::Model1, Variant::Model2, Variant::Model3] {
        let mut cfg = RunConfig::from_json(r#"{"dataset": {"kind": "synthetic"}}"#)?;
        cfg.dataset = DatasetSource::Synthetic(SyntheticConfig::default());
        cfg.patch_size = 5;
        cfg.seed = seed;
        cfg.train.epochs = epochs;
        cfg.apply_variant(variant);
        let data = cfg.load_dataset()?;
        let run = run_training(&cfg, &data, |_| {})?;
        let (refs, _) = builtin_references(&data);
        let (report, _) = interpret_model(&run.model, &data, cfg.entropy_base, &refs)?;
        let last = run.report.history.last().expect("at least one epoch");
        let secs = &run.report.epoch_seconds;
        println!(
            "{:<7} {:>6} {:>8.4} {:>8.4} {:>12.4} {:>10.3}",
            format!("{variant:?}").to_lowercase(),
            run.model.feature_len(),
            last.train_oa,
            last.test_oa.unwrap_or(f64::NAN),
            report.mean_capsule_entropy,
            secs.iter().sum::<f64>() / secs.len() as f64
        );
    }
    Ok(())
}
