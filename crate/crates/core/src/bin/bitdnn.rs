use std::path::PathBuf;
use std::process::ExitCode;

use bitdnn::cli::commands::{
    cmd_evaluate, cmd_gradcheck, cmd_interpret, cmd_predict, cmd_train, InterpretabilityReport, Overrides,
    RSquaredEntry, Subset,
};
use bitdnn::model::Variant;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bitdnn", version, about = "Two-stage hyperspectral pixel classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed_override: Option<u64>,
    /// model1, model2, or model3.
    #[arg(long)]
    variant: Option<Variant>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed_override,
            variant: self.variant,
            output_dir: self.out.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train and write model.ckpt, history.csv, resolved_config.json, split.json.
    Train(#[command(flatten)] Common),
    /// Accuracy, kappa, and per-class metrics on a split subset.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// split.json from training; recomputed from the seed when omitted.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        subset: Subset,
        /// Prediction map CSV to compare against with McNemar's test.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Classify every pixel and write map.csv and map.pgm.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Feature entropy, Dunn index, R² against references, and CSV dumps.
    Interpret {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// CSV `row,col,<name>...`; built-in vegetation indices otherwise.
        #[arg(long)]
        references: Option<PathBuf>,
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        /// Gradient-check configuration (JSON); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed_override: Option<u64>,
    },
}

fn run(cli: Cli) -> bitdnn::Result<()> {
    match cli.command {
        Command::Train(common) => {
            let out = cmd_train(&common.config, &common.overrides(), |r| match r.test_oa {
                Some(t) => eprintln!(
                    "epoch {:>3}  loss {:.6}  train OA {:.4}  test OA {:.4}",
                    r.epoch, r.train_loss, r.train_oa, t
                ),
                None => eprintln!("epoch {:>3}  loss {:.6}  train OA {:.4}", r.epoch, r.train_loss, r.train_oa),
            })?;
            println!("{}", out.checkpoint.display());
        }
        Command::Evaluate {
            common,
            checkpoint,
            split,
            subset,
            compare,
        } => {
            let r = cmd_evaluate(
                &common.config,
                &checkpoint,
                &common.overrides(),
                split.as_deref(),
                subset,
                compare.as_deref(),
            )?;
            println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
        }
        Command::Predict { common, checkpoint } => {
            let out = cmd_predict(&common.config, &checkpoint, &common.overrides())?;
            println!("{}", out.csv.display());
            println!("{}", out.pgm.display());
        }
        Command::Interpret {
            common,
            checkpoint,
            references,
            compare,
        } => {
            let r = cmd_interpret(
                &common.config,
                &checkpoint,
                &common.overrides(),
                references.as_deref(),
                compare.as_deref(),
            )?;
            print_interpretation(&r);
        }
        Command::Gradcheck {
            config,
            out,
            seed_override,
        } => {
            let ov = Overrides {
                seed: seed_override,
                variant: None,
                output_dir: out,
            };
            let r = cmd_gradcheck(config.as_deref(), &ov)?;
            println!(
                "max relative error {:.3e} over {} entries ({} redrawn) in {:.2}s",
                r.max_relative_error,
                r.checks.len(),
                r.skipped,
                r.seconds
            );
        }
    }
    Ok(())
}

fn print_interpretation(r: &InterpretabilityReport) {
    println!("pixels {}  features {}  max entropy {:.4}", r.pixels, r.feature_len, r.max_stage1_entropy);
    for (s, c) in r.stage1_entropy.iter().zip(&r.capsule_entropy) {
        println!(
            "class {:>3}  stage-1 entropy {:.4}  capsule entropy {:.4}",
            s.class, s.entropy, c.entropy
        );
    }
    match (r.dunn_index, &r.dunn_note) {
        (Some(d), _) => println!("Dunn index {d:.4}"),
        (None, Some(note)) => println!("Dunn index unavailable: {note}"),
        (None, None) => {}
    }
    let mut best: Vec<&RSquaredEntry> = Vec::new();
    for e in &r.r_squared {
        match best.iter_mut().find(|b| b.reference == e.reference) {
            Some(b) if e.r_squared > b.r_squared => *b = e,
            Some(_) => {}
            None => best.push(e),
        }
    }
    for b in best {
        match b.r_squared {
            Some(v) => println!("{:<6} best R2 {:.4} ({})", b.reference, v, b.feature),
            None => println!("{:<6} R2 undefined", b.reference),
        }
    }
    for s in &r.skipped_references {
        println!("skipped: {s}");
    }
    if let Some(c) = &r.comparison {
        match (&c.mcnemar, &c.note) {
            (Some(m), _) => println!("McNemar vs {}: chi2 {:.3} {}", c.other, m.chi2, m.significance),
            (None, Some(note)) => println!("McNemar vs {}: {note}", c.other),
            (None, None) => {}
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
