//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::Args;
use serde::{Deserialize, Serialize};

use gridfuse::data::{
    apply_normalization, generate_dataset, load_dataset, save_dataset, Dataset, FramePair,
    GestureClass, CELLS, GRID,
};
use gridfuse::eval::{davies_bouldin, silhouette, ConfusionMatrix, MetricsReport};
use gridfuse::model::{load_checkpoint, save_checkpoint, FusionStrategy, Model, ModelConfig};
use gridfuse::power::{compare_strategies, read_latency_csv_file};
use gridfuse::quant::{
    calibrate, fold_batchnorm, load_quantized, quantize_model, save_quantized, QuantizedModel,
};
use gridfuse::train::{cross_validate, FoldReport};
use gridfuse::Tensor;

use crate::config::{ExperimentConfig, RunSnapshot};
use crate::util::{ensure_dir, init_threads, write_atomic, write_atomic_with};
use crate::CommonArgs;

// ---------------------------------------------------------------- generate

#[derive(Args)]
pub struct GenerateArgs {
    /// Output dataset path.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples_per_class: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

pub fn generate(args: GenerateArgs) -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::load_or_default(args.common.config.as_ref())?;
    cfg.apply_seed(args.seed);
    if let Some(n) = args.samples_per_class {
        cfg.generator.samples_per_class = n;
    }

    let dataset = generate_dataset(&cfg.generator)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_atomic_with(&args.out, |tmp| save_dataset(&dataset, tmp))?;

    let stem = args.out.file_stem().unwrap_or_default().to_string_lossy().into_owned();
    let dir = args.out.parent().unwrap_or(Path::new("."));
    RunSnapshot { command: "generate".into(), strategy: None, config: cfg }.write(dir, &stem)?;

    println!(
        "wrote {} samples ({} per class) to {}",
        dataset.len(),
        dataset.class_counts()[0],
        args.out.display()
    );
    Ok(())
}

// ------------------------------------------------------------------- train

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// vanilla | early | mid | late | ir_only | tof_only
    #[arg(long)]
    strategy: FusionStrategy,
    /// Output directory for checkpoints and the fold report.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

pub fn train(args: TrainArgs) -> anyhow::Result<()> {
    init_threads(args.common.jobs)?;
    let mut cfg = ExperimentConfig::load_or_default(args.common.config.as_ref())?;
    cfg.apply_seed(args.seed);
    if let Some(n) = args.max_epochs {
        cfg.train.max_epochs = n;
    }
    if let Some(k) = args.folds {
        cfg.folds = k;
    }

    let dataset = load_dataset(&args.dataset)?;
    let model_cfg = ModelConfig::standard(args.strategy);
    ensure_dir(&args.out_dir)?;

    let started = Instant::now();
    let result = cross_validate(&dataset, &model_cfg, &cfg.train, cfg.folds)?;
    let elapsed = started.elapsed();

    let mut report =
        FoldReport::from_result(&result, args.strategy.name(), cfg.train.seed, cfg.folds);
    for (entry, model) in report.folds.iter_mut().zip(&result.models) {
        let name = format!("fold{}.checkpoint.json", entry.fold);
        let path = args.out_dir.join(&name);
        write_atomic_with(&path, |tmp| save_checkpoint(model, tmp))?;
        entry.checkpoint = Some(name);
    }
    let report_text = serde_json::to_string_pretty(&report).map_err(gridfuse::Error::from)?;
    write_atomic(&args.out_dir.join("fold_report.json"), report_text.as_bytes())?;
    let folds = cfg.folds;
    RunSnapshot {
        command: "train".into(),
        strategy: Some(args.strategy.name().into()),
        config: cfg,
    }
    .write(&args.out_dir, "train")?;

    for fold in &report.folds {
        println!(
            "fold {}: accuracy {:.4} ({} epochs, best {})",
            fold.fold, fold.test_accuracy, fold.epochs_trained, fold.best_epoch
        );
    }
    println!(
        "{}: {:.2}% +/- {:.2}% over {} folds ({:.1?})",
        args.strategy,
        100.0 * report.mean_accuracy,
        100.0 * report.std_accuracy,
        folds,
        elapsed
    );
    Ok(())
}

// ---------------------------------------------------------------- evaluate

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

pub fn evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    init_threads(args.common.jobs)?;
    let model = load_checkpoint(&args.checkpoint)?;
    let dataset = load_dataset(&args.dataset)?;
    ensure_dir(&args.out_dir)?;

    let mut preds = Vec::with_capacity(dataset.len());
    let mut embeddings = Vec::with_capacity(dataset.len());
    for sample in &dataset.samples {
        let input = apply_normalization(sample, model.config.strategy, &model.norm_stats)?;
        let emb = model.extract_embedding(&input)?;
        let logits =
            gridfuse::nn::dense(&emb, &model.dense_weights, &model.dense_bias)?;
        preds.push(argmax(logits.data()));
        embeddings.push(emb.into_data());
    }
    let labels = dataset.labels();
    let cm = ConfusionMatrix::from_predictions(&preds, &labels, model.config.num_classes)?;

    let mut report = MetricsReport::from_confusion(&cm)?;
    report.silhouette = Some(silhouette(&embeddings, &labels)?);
    report.davies_bouldin = Some(davies_bouldin(&embeddings, &labels)?);

    let json = serde_json::to_string_pretty(&report).map_err(gridfuse::Error::from)?;
    write_atomic(&args.out_dir.join("metrics.json"), json.as_bytes())?;
    write_atomic(&args.out_dir.join("confusion.csv"), confusion_csv(&cm).as_bytes())?;
    let table = confusion_table(&cm);
    write_atomic(&args.out_dir.join("confusion.txt"), table.as_bytes())?;

    println!("{table}");
    println!(
        "accuracy {:.4}  macro F1 {:.4}  silhouette {:.4}  davies-bouldin {:.4}",
        report.accuracy,
        report.macro_f1,
        report.silhouette.unwrap(),
        report.davies_bouldin.unwrap()
    );
    Ok(())
}

fn confusion_csv(cm: &ConfusionMatrix) -> String {
    let mut out = String::from("true\\pred");
    for c in GestureClass::ALL {
        out.push(',');
        out.push_str(c.name());
    }
    out.push('\n');
    for t in 0..cm.classes() {
        out.push_str(GestureClass::ALL[t].name());
        for p in 0..cm.classes() {
            out.push_str(&format!(",{}", cm.get(t, p)));
        }
        out.push('\n');
    }
    out
}

fn confusion_table(cm: &ConfusionMatrix) -> String {
    let percents = cm.percent_rows();
    let mut out = String::from("row %     ");
    for c in GestureClass::ALL {
        out.push_str(&format!("{:>9}", c.name()));
    }
    out.push('\n');
    for (t, row) in percents.iter().enumerate() {
        out.push_str(&format!("{:<10}", GestureClass::ALL[t].name()));
        for v in row {
            out.push_str(&format!("{v:>9.1}"));
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------- quantize

#[derive(Args)]
pub struct QuantizeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset supplying calibration and agreement samples.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    /// Calibration subset size (stratified, seeded).
    #[arg(long, default_value_t = 512)]
    calibration_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Serialize)]
struct AgreementReport {
    samples: usize,
    top1_agreement: f64,
    mean_abs_prob_deviation: f64,
    logit_pearson_r: f64,
    weight_bytes: usize,
    file_bytes: u64,
    warnings: Vec<String>,
}

pub fn quantize(args: QuantizeArgs) -> anyhow::Result<()> {
    let model = load_checkpoint(&args.checkpoint)?;
    let dataset = load_dataset(&args.dataset)?;
    let folded = fold_batchnorm(&model)?;

    let calib_idx =
        stratified_subset(&dataset, args.calibration_samples, args.seed);
    let calib: Vec<Tensor> = calib_idx
        .iter()
        .map(|&i| apply_normalization(&dataset.samples[i], folded.config.strategy, &folded.norm_stats))
        .collect::<gridfuse::Result<_>>()?;
    let ranges = calibrate(&folded, &calib)?;
    let (qmodel, warnings) = quantize_model(&folded, &ranges)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_atomic_with(&args.out, |tmp| save_quantized(&qmodel, tmp))?;
    let file_bytes = std::fs::metadata(&args.out)?.len();

    let check = agreement(&folded, &qmodel, &dataset, 1000);
    let report = AgreementReport {
        samples: check.samples,
        top1_agreement: check.top1,
        mean_abs_prob_deviation: check.prob_dev,
        logit_pearson_r: check.pearson,
        weight_bytes: qmodel.weight_bytes(),
        file_bytes,
        warnings,
    };
    let json = serde_json::to_string_pretty(&report).map_err(gridfuse::Error::from)?;
    let report_path = args.out.with_extension("agreement.json");
    write_atomic(&report_path, json.as_bytes())?;

    println!(
        "quantized model: {} ({} weight bytes, {} file bytes)",
        args.out.display(),
        report.weight_bytes,
        report.file_bytes
    );
    println!(
        "float agreement over {} samples: top-1 {:.2}%, mean |dp| {:.4}, logit r {:.4}",
        report.samples,
        100.0 * report.top1_agreement,
        report.mean_abs_prob_deviation,
        report.logit_pearson_r
    );
    Ok(())
}

struct Agreement {
    samples: usize,
    top1: f64,
    prob_dev: f64,
    pearson: f64,
}

fn agreement(folded: &Model, qmodel: &QuantizedModel, dataset: &Dataset, cap: usize) -> Agreement {
    let step = (dataset.len() / cap.min(dataset.len()).max(1)).max(1);
    let mut agree = 0usize;
    let mut total = 0usize;
    let mut dev_sum = 0.0;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for sample in dataset.samples.iter().step_by(step) {
        let input =
            apply_normalization(sample, folded.config.strategy, &folded.norm_stats).unwrap();
        let fp = folded.predict(&input).unwrap();
        let qp = qmodel.predict_frame(sample).unwrap();
        let fl = folded.infer_logits(&input).unwrap();
        let ql = qmodel.infer_logits_quantized(&qmodel.quantize_input(&input)).unwrap();
        for (&x, &y) in fl.data().iter().zip(ql.data()) {
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
            n += 1.0;
        }
        agree += usize::from(argmax(fp.data()) == argmax(qp.data()));
        total += 1;
        dev_sum += fp
            .data()
            .iter()
            .zip(qp.data())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / fp.len() as f64;
    }
    Agreement {
        samples: total,
        top1: agree as f64 / total as f64,
        prob_dev: dev_sum / total as f64,
        pearson: (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt()),
    }
}

/// Deterministic stratified subset: up to `target` samples spread evenly
/// over the classes, stepping through each class's samples.
fn stratified_subset(dataset: &Dataset, target: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); GestureClass::COUNT];
    for (i, s) in dataset.samples.iter().enumerate() {
        per_class[s.label as usize].push(i);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let quota = (target / GestureClass::COUNT).max(1);
    let mut out = Vec::new();
    for class in per_class.iter_mut() {
        class.shuffle(&mut rng);
        out.extend(class.iter().take(quota));
    }
    out.sort_unstable();
    out
}

// ------------------------------------------------------------------- infer

#[derive(Args)]
pub struct InferArgs {
    /// Float checkpoint (.json) or quantized model (.qfg).
    #[arg(long)]
    model: PathBuf,
    /// Dataset to draw the sample from (with --index).
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    index: Option<usize>,
    /// Raw frame JSON: {"thermal": [[..8x8..]], "depth": [[..8x8..]]}.
    #[arg(long)]
    frame: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Deserialize)]
struct FrameJson {
    thermal: Vec<Vec<f32>>,
    depth: Vec<Vec<f32>>,
}

fn load_frame(args: &InferArgs) -> anyhow::Result<(FramePair, Option<usize>)> {
    match (&args.dataset, args.index, &args.frame) {
        (Some(ds), Some(index), None) => {
            let dataset = load_dataset(ds)?;
            let sample = dataset
                .samples
                .get(index)
                .with_context(|| format!("sample index {index} out of range ({})", dataset.len()))?
                .clone();
            let label = sample.label as usize;
            Ok((sample, Some(label)))
        }
        (None, None, Some(path)) => {
            let text = std::fs::read_to_string(path)?;
            let f: FrameJson = serde_json::from_str(&text).map_err(gridfuse::Error::from)?;
            let mut thermal = [0f32; CELLS];
            let mut depth = [0f32; CELLS];
            if f.thermal.len() != GRID || f.depth.len() != GRID {
                bail!("frame must be {GRID}x{GRID}");
            }
            for y in 0..GRID {
                if f.thermal[y].len() != GRID || f.depth[y].len() != GRID {
                    bail!("frame must be {GRID}x{GRID}");
                }
                for x in 0..GRID {
                    thermal[y * GRID + x] = f.thermal[y][x];
                    depth[y * GRID + x] = f.depth[y][x];
                }
            }
            Ok((FramePair { thermal, depth, label: 0 }, None))
        }
        _ => bail!("provide either --dataset with --index, or --frame"),
    }
}

enum AnyModel {
    Float(Model),
    Quantized(Box<QuantizedModel>),
}

fn load_any_model(path: &Path) -> anyhow::Result<AnyModel> {
    if path.extension().map_or(false, |e| e == "json") {
        Ok(AnyModel::Float(load_checkpoint(path)?))
    } else {
        Ok(AnyModel::Quantized(Box::new(load_quantized(path)?)))
    }
}

pub fn infer(args: InferArgs) -> anyhow::Result<()> {
    let (frame, true_label) = load_frame(&args)?;
    let probs = match load_any_model(&args.model)? {
        AnyModel::Float(model) => {
            let input = apply_normalization(&frame, model.config.strategy, &model.norm_stats)?;
            model.predict(&input)?
        }
        AnyModel::Quantized(q) => q.predict_frame(&frame)?,
    };
    let pred = argmax(probs.data());
    println!("predicted: {} (class {pred})", GestureClass::ALL[pred]);
    if let Some(label) = true_label {
        println!("true label: {} (class {label})", GestureClass::ALL[label]);
    }
    for (class, &p) in GestureClass::ALL.iter().zip(probs.data()) {
        println!("  {:<9} {:.4}", class.name(), p);
    }
    Ok(())
}

// ------------------------------------------------------------------- bench

#[derive(Args)]
pub struct BenchArgs {
    /// Float checkpoint (.json) or quantized model (.qfg).
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    /// Optional JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Serialize)]
struct BenchReport {
    model: String,
    iterations: usize,
    mean_us: f64,
    p50_us: f64,
    p95_us: f64,
    min_us: f64,
    max_us: f64,
    note: String,
}

pub fn bench(args: BenchArgs) -> anyhow::Result<()> {
    if args.iterations == 0 {
        bail!("iterations must be positive");
    }
    let dataset = load_dataset(&args.dataset)?;
    let frame = dataset.samples.first().context("dataset is empty")?.clone();
    let model = load_any_model(&args.model)?;

    let mut lat_us = Vec::with_capacity(args.iterations);
    match &model {
        AnyModel::Float(m) => {
            let input = apply_normalization(&frame, m.config.strategy, &m.norm_stats)?;
            for _ in 0..args.iterations.min(50) {
                std::hint::black_box(m.predict(&input)?); // warmup
            }
            for _ in 0..args.iterations {
                let t = Instant::now();
                std::hint::black_box(m.predict(&input)?);
                lat_us.push(t.elapsed().as_secs_f64() * 1e6);
            }
        }
        AnyModel::Quantized(q) => {
            for _ in 0..args.iterations.min(50) {
                std::hint::black_box(q.predict_frame(&frame)?);
            }
            for _ in 0..args.iterations {
                let t = Instant::now();
                std::hint::black_box(q.predict_frame(&frame)?);
                lat_us.push(t.elapsed().as_secs_f64() * 1e6);
            }
        }
    }
    lat_us.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pct = |p: f64| lat_us[(p * (lat_us.len() - 1) as f64).round() as usize];
    let report = BenchReport {
        model: args.model.display().to_string(),
        iterations: args.iterations,
        mean_us: lat_us.iter().sum::<f64>() / lat_us.len() as f64,
        p50_us: pct(0.50),
        p95_us: pct(0.95),
        min_us: lat_us[0],
        max_us: *lat_us.last().unwrap(),
        note: "host wall-clock timing; not comparable to on-target MCU latency".into(),
    };
    println!(
        "{} iterations: mean {:.1} us, p50 {:.1} us, p95 {:.1} us, min {:.1} us, max {:.1} us",
        report.iterations, report.mean_us, report.p50_us, report.p95_us, report.min_us, report.max_us
    );
    println!("note: {}", report.note);
    if let Some(out) = args.out {
        let json = serde_json::to_string_pretty(&report).map_err(gridfuse::Error::from)?;
        write_atomic(&out, json.as_bytes())?;
    }
    Ok(())
}

// ------------------------------------------------------------------- power

#[derive(Args)]
pub struct PowerArgs {
    /// CSV with header strategy,platform,latency_ms,p_active_mw.
    #[arg(long)]
    latency_table: PathBuf,
    /// Output report path (JSON; a .csv sibling is written too).
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    battery_mwh: Option<f64>,
    #[arg(long)]
    frame_rate_hz: Option<f64>,
    #[arg(long)]
    idle_mw: Option<f64>,
    #[command(flatten)]
    common: CommonArgs,
}

pub fn power(args: PowerArgs) -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::load_or_default(args.common.config.as_ref())?;
    if let Some(v) = args.battery_mwh {
        cfg.power.battery_energy_mwh = v;
    }
    if let Some(v) = args.frame_rate_hz {
        cfg.power.frame_rate_hz = v;
    }
    if let Some(v) = args.idle_mw {
        cfg.power.p_mcu_idle_mw = v;
    }

    let entries = read_latency_csv_file(&args.latency_table)?;
    let estimates = compare_strategies(&entries, &cfg.power)?;

    println!(
        "{:<10} {:<10} {:>11} {:>9} {:>11} {:>10}",
        "strategy", "platform", "latency_ms", "duty_%", "mean_mW", "life_h"
    );
    for e in &estimates {
        println!(
            "{:<10} {:<10} {:>11.3} {:>9.2} {:>11.2} {:>10.2}",
            e.entry.strategy,
            e.entry.platform,
            e.entry.latency_ms,
            100.0 * e.estimate.duty_cycle,
            e.estimate.mean_power_mw,
            e.estimate.battery_life_h
        );
    }

    if let Some(out) = args.out {
        let json = serde_json::to_string_pretty(&estimates).map_err(gridfuse::Error::from)?;
        write_atomic(&out, json.as_bytes())?;
        let mut csv =
            String::from("strategy,platform,latency_ms,p_active_mw,duty_cycle,mean_power_mw,battery_life_h\n");
        for e in &estimates {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.entry.strategy,
                e.entry.platform,
                e.entry.latency_ms,
                e.entry.p_active_mw,
                e.estimate.duty_cycle,
                e.estimate.mean_power_mw,
                e.estimate.battery_life_h
            ));
        }
        write_atomic(&out.with_extension("csv"), csv.as_bytes())?;
    }
    Ok(())
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
