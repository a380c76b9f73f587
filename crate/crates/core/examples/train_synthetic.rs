//! Trains the full model on a seeded three-class synthetic scene, reports
//! test metrics, and round-trips the checkpoint.
//!
//! `cargo run --release --example train_synthetic -- [epochs] [seed]`

use bitdnn::cli::commands::{evaluate_model, run_training, Subset};
use bitdnn::cli::config::{DatasetSource, RunConfig};
use bitdnn::synthetic::SyntheticConfig;
use bitdnn::training::checkpoint;

fn main() -> bitdnn::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().and_then(|a| a.parse().ok()).unwrap_or(10);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);

    let mut cfg = RunConfig::from_json(r#"{"dataset": {"kind": "synthetic"}}"#)?;
    cfg.dataset = DatasetSource::Synthetic(SyntheticConfig::default());
    cfg.patch_size = 5;
    cfg.seed = seed;
    cfg.train.epochs = epochs;
    let data = cfg.load_dataset()?;

    let run = run_training(&cfg, &data, |r| {
        println!(
            "epoch {:>3}  loss {:.5}  train OA {:.4}  test OA {:.4}",
            r.epoch,
            r.train_loss,
            r.train_oa,
            r.test_oa.unwrap_or(f64::NAN)
        )
    })?;
    println!(
        "{} parameters, {} Stage-1 features, {} train / {} test pixels",
        run.model.param_count(),
        run.model.feature_len(),
        run.split.train.len(),
        run.split.test.len()
    );

    let report = evaluate_model(&run.model, &data, &run.split.test, Subset::Test, None)?;
    let m = &report.metrics;
    let kappa = m.kappa.map_or("undefined".to_string(), |k| format!("{k:.4}"));
    println!("test OA {:.4}  AA {:.4}  kappa {kappa}", m.overall_accuracy, m.average_accuracy);

    let bytes = checkpoint::encode(&run.model, data.cube.wavelengths(), seed)?;
    let (restored, _) = checkpoint::decode(&bytes)?;
    println!("checkpoint: {} bytes, restores exactly: {}", bytes.len(), restored == run.model);
    Ok(())
}
