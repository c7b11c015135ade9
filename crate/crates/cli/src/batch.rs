use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use regionlime_core::explainer::{ExplainConfig, Occlusion};
use regionlime_core::predictor::dataset::{load_dataset_dir, LabeledImages};
use regionlime_core::predictor::mlp::train_mlp;
use regionlime_core::predictor::{Classifier, ModelFile, PredictorSpec, TrainConfig};
use regionlime_core::robustness::{run_sweep, Method, NoiseSweepConfig, SweepImage};
use regionlime_core::segmentation::SegmentationConfig;
use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::{ensure_dir, parse_kebab, provenance, write_json, Outcome};

#[derive(Args, Debug, Serialize)]
pub struct RobustnessArgs {
    /// IDX files (train-*/t10k-*) or a PNG directory with labels.csv.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8")]
    pub sigmas: Vec<f64>,
    /// Number of test images.
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    /// Only use test images with this label.
    #[arg(long, default_value_t = 7, conflicts_with = "any_digit")]
    pub digit: usize,
    #[arg(long)]
    pub any_digit: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 5)]
    pub features: usize,
    /// Superpixel budget of the unconstrained method.
    #[arg(long, default_value_t = 12)]
    pub total_k: usize,
    /// Superpixels inside the digit mask for the masked method.
    #[arg(long, default_value_t = 4)]
    pub inner_k: usize,
    #[arg(long, default_value_t = 8)]
    pub outer_k: usize,
    /// Split `total_k` by mask area instead of using --inner-k/--outer-k.
    #[arg(long)]
    pub proportional: bool,
    #[arg(long, default_value_t = 1.0)]
    pub spatial_weight: f64,
    #[arg(long, default_value = "black", value_parser = parse_kebab::<Occlusion>)]
    pub occlusion: Occlusion,
    #[arg(long, default_value_t = 0.2)]
    pub foreground_threshold: f64,
    /// Predictor to explain; by default an MLP is trained on the dataset's
    /// training split first.
    #[arg(long)]
    pub predictor: Option<PredictorSpec>,
    /// Seed for that training run.
    #[arg(long, default_value_t = 7)]
    pub train_seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output location; not echoed in provenance so reruns compare equal.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub epochs: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 128)]
    pub hidden: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    /// Use only the first N training images.
    #[arg(long)]
    pub train_limit: Option<usize>,
    /// Output location; not echoed in provenance so reruns compare equal.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

fn select(test: &LabeledImages, digit: Option<usize>, count: usize) -> Vec<SweepImage> {
    test.images
        .iter()
        .zip(&test.labels)
        .enumerate()
        .filter(|(_, (_, &l))| digit.unwrap_or(l) == l)
        .take(count)
        .map(|(i, (img, _))| SweepImage { id: format!("test-{i}"), image: img.clone() })
        .collect()
}

pub fn robustness(args: &RobustnessArgs) -> CliResult<Outcome> {
    let splits = load_dataset_dir(&args.dataset)?;
    let (model, trained): (Arc<dyn Classifier>, Option<serde_json::Value>) = match &args.predictor {
        Some(spec) => (spec.build()?, None),
        None => {
            let train = splits
                .train
                .as_ref()
                .ok_or_else(|| CliError::input("dataset has no training split; pass --predictor"))?;
            let cfg = TrainConfig { seed: args.train_seed, ..TrainConfig::default() };
            let (mlp, report) = train_mlp(train, Some(&splits.test), &cfg)?;
            (Arc::new(mlp), Some(json!({ "config": report.config, "test_accuracy": report.test_accuracy })))
        }
    };
    let images = select(&splits.test, (!args.any_digit).then_some(args.digit), args.count);
    if images.len() < args.count {
        return Err(CliError::input(format!("only {} matching test images, {} requested", images.len(), args.count)));
    }
    let cfg = NoiseSweepConfig {
        sigmas: args.sigmas.clone(),
        seed: args.seed,
        total_k: args.total_k,
        masked_counts: (!args.proportional).then_some((args.inner_k, args.outer_k)),
        segmentation: SegmentationConfig { spatial_weight: args.spatial_weight, ..SegmentationConfig::default() },
        explain: ExplainConfig {
            num_samples: args.samples,
            num_features: args.features,
            occlusion: args.occlusion,
            seed: args.seed,
            ..ExplainConfig::default()
        },
        foreground_threshold: args.foreground_threshold,
        jobs: args.jobs,
    };
    let result = run_sweep(&cfg, &images, model.as_ref())?;
    ensure_dir(&args.out)?;
    let csv_path = args.out.join("records.csv");
    std::fs::write(&csv_path, result.to_csv()).map_err(|e| CliError::input(format!("{}: {e}", csv_path.display())))?;
    write_json(
        &args.out.join("summary.json"),
        &json!({
            "provenance": provenance("robustness", args),
            "sweep_config": cfg,
            "trained_model": trained,
            "images": images.iter().map(|i| &i.id).collect::<Vec<_>>(),
            "summary": result.summary,
        }),
    )?;
    let mut human = format!("{} records; mean distance per sigma (auto / masked):", result.records.len());
    for &s in &cfg.sigmas {
        let a = result.summary.cell(s, Method::Auto).map_or(f64::NAN, |c| c.mean);
        let m = result.summary.cell(s, Method::Masked).map_or(f64::NAN, |c| c.mean);
        human.push_str(&format!("\n  sigma {s}: {a:.3} / {m:.3}"));
    }
    Ok(Outcome { human, json: json!({ "out": args.out, "summary": result.summary }) })
}

pub fn train(args: &TrainArgs) -> CliResult<Outcome> {
    let splits = load_dataset_dir(&args.data)?;
    let mut train = splits.train.ok_or_else(|| CliError::input("no training split (train-images-idx3-ubyte) found"))?;
    if let Some(n) = args.train_limit {
        train = train.truncate(n);
    }
    let cfg = TrainConfig {
        hidden: args.hidden,
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        seed: args.seed,
    };
    let (mlp, report) = train_mlp(&train, Some(&splits.test), &cfg)?;
    ModelFile::Mlp(mlp).save(&args.out)?;
    let sidecar = PathBuf::from(format!("{}.json", args.out.display()));
    write_json(&sidecar, &json!({ "provenance": provenance("train-mnist", args), "report": report }))?;
    let acc = report.test_accuracy.unwrap_or(f64::NAN);
    Ok(Outcome {
        human: format!("test accuracy: {:.4} ({} test images); wrote {}", acc, splits.test.len(), args.out.display()),
        json: json!({ "test_accuracy": acc, "out": args.out, "report": report }),
    })
}
