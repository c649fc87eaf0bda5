//! Manual timing probe for full-scale training. Ignored by default; run with
//! `cargo test -p gridfuse --test perf_probe -- --ignored --nocapture`.

use std::time::Instant;

#[global_allocator]
static ALLOC: mimalloc::MiMalloc = mimalloc::MiMalloc;

use gridfuse::data::{generate_dataset, GeneratorConfig};
use gridfuse::model::{FusionStrategy, ModelConfig};
use gridfuse::train::{stratified_kfold, train_fold, TrainConfig};

#[test]
#[ignore]
fn epoch_timing_probe() {
    let t0 = Instant::now();
    let dataset = generate_dataset(&GeneratorConfig::default()).unwrap();
    println!("generate 8400 samples: {:?}", t0.elapsed());

    let splits = stratified_kfold(&dataset.labels(), 5, 0.1, 0).unwrap();
    let cfg = ModelConfig::standard(FusionStrategy::Early);
    let train_cfg = TrainConfig { max_epochs: 3, seed: 0, ..TrainConfig::default() };
    let t1 = Instant::now();
    let (_, history) = train_fold(&dataset, &splits[0], &cfg, &train_cfg).unwrap();
    let dt = t1.elapsed();
    println!(
        "3 epochs: {:?} ({:?}/epoch), losses {:?}",
        dt,
        dt / 3,
        history.epochs.iter().map(|e| (e.train_loss, e.val_loss)).collect::<Vec<_>>()
    );
}

#[test]
#[ignore]
fn convergence_probe() {
    let strategy = match std::env::var("PROBE_STRATEGY").as_deref() {
        Ok("ir") => FusionStrategy::IrOnly,
        Ok("tof") => FusionStrategy::TofOnly,
        _ => FusionStrategy::Early,
    };
    let dataset = generate_dataset(&GeneratorConfig::default()).unwrap();
    let splits = stratified_kfold(&dataset.labels(), 5, 0.1, 0).unwrap();
    let cfg = ModelConfig::standard(strategy);
    let train_cfg = TrainConfig { seed: 0, ..TrainConfig::default() };
    let t = Instant::now();
    let (model, history) = train_fold(&dataset, &splits[0], &cfg, &train_cfg).unwrap();
    let acc = gridfuse::train::test_accuracy(&model, &dataset, &splits[0].test).unwrap();
    println!(
        "fold trained in {:?}: {} epochs, best {}, test acc {:.4}",
        t.elapsed(),
        history.epochs.len(),
        history.best_epoch,
        acc
    );
    for e in &history.epochs {
        println!("  epoch {:3}  train {:.5}  val {:.5}", e.epoch, e.train_loss, e.val_loss);
    }
}

#[test]
#[ignore]
fn component_timing_probe() {
    use gridfuse::data::apply_normalization;
    use gridfuse::model::build_model;
    use gridfuse::tensor::Tensor;

    let dataset = generate_dataset(&GeneratorConfig {
        samples_per_class: 40,
        ..GeneratorConfig::default()
    })
    .unwrap();
    let cfg = ModelConfig::standard(FusionStrategy::Early);
    let model = build_model(&cfg, 0).unwrap();
    let refs: Vec<&gridfuse::data::FramePair> = dataset.samples.iter().collect();
    let stats = gridfuse::data::compute_normalization(&refs, cfg.strategy).unwrap();

    let n = 128;
    let mut batch = Tensor::zeros(&[n, 8, 8, 2]);
    let mut labels = Vec::new();
    for s in 0..n {
        let t = apply_normalization(&dataset.samples[s], cfg.strategy, &stats).unwrap();
        batch.data_mut()[s * 128..(s + 1) * 128].copy_from_slice(t.data());
        labels.push(dataset.samples[s].label as usize);
    }

    let reps = 50;
    let t = Instant::now();
    for _ in 0..reps {
        let _ = model.forward_train(&batch, &labels).unwrap();
    }
    println!("forward_train: {:?}/batch", t.elapsed() / reps);

    let cache = model.forward_train(&batch, &labels).unwrap();
    let t = Instant::now();
    for _ in 0..reps {
        let _ = model.backward(&cache, &labels, 1e-2).unwrap();
    }
    println!("backward: {:?}/batch", t.elapsed() / reps);

    let one = apply_normalization(&dataset.samples[0], cfg.strategy, &stats).unwrap();
    let t = Instant::now();
    for _ in 0..1000 {
        let _ = model.infer_logits(&one).unwrap();
    }
    println!("single-sample inference: {:?}", t.elapsed() / 1000);
}

#[test]
#[ignore]
fn stage_timing_probe() {
    use gridfuse::model::build_model;
    use gridfuse::nn::{batchnorm_train, conv2d_grouped, relu};
    use gridfuse::tensor::Tensor;

    let cfg = ModelConfig::standard(FusionStrategy::Early);
    let model = build_model(&cfg, 0).unwrap();
    let reps = 20;

    let mut x = Tensor::zeros(&[8, 8, 2]);
    for (i, v) in x.data_mut().iter_mut().enumerate() {
        *v = (i as f64 * 0.1).sin();
    }
    for (li, block) in model.blocks.iter().enumerate() {
        let t = Instant::now();
        for _ in 0..reps * 128 {
            let _ = conv2d_grouped(&x, &block.conv).unwrap();
        }
        let per_batch = t.elapsed() / reps;
        println!("conv{} serial: {:?}/128-batch", li + 1, per_batch);
        x = conv2d_grouped(&x, &block.conv).unwrap();
    }

    let model2 = model.clone();
    for (li, c) in [8usize, 16, 32].iter().enumerate() {
        let big = Tensor::zeros(&[128, 8, 8, *c]);
        let t = Instant::now();
        for _ in 0..reps {
            let _ = batchnorm_train(&big, &model2.blocks[li].bn).unwrap();
        }
        println!("bn{} train: {:?}/batch", li + 1, t.elapsed() / reps);
        let t = Instant::now();
        for _ in 0..reps {
            let _ = relu(&big);
        }
        println!("relu{}: {:?}/batch", li + 1, t.elapsed() / reps);
    }

    // allocation cost of the big temporaries
    let t = Instant::now();
    for _ in 0..reps {
        let z = Tensor::zeros(&[128, 8, 8, 32]);
        std::hint::black_box(&z);
    }
    println!("zeros [128,8,8,32]: {:?}", t.elapsed() / reps);
}

#[test]
#[ignore]
fn rayon_scaling_probe() {
    use rayon::prelude::*;
    let work = |seed: u64| -> f64 {
        let mut acc = seed as f64;
        for i in 0..20_000_000u64 {
            acc = acc * 0.999999 + i as f64 * 1e-9;
        }
        acc
    };
    let t = Instant::now();
    let s: f64 = (0..4u64).map(work).sum();
    let serial = t.elapsed();
    let t = Instant::now();
    let p: f64 = (0..4u64).into_par_iter().map(work).sum();
    let parallel = t.elapsed();
    println!("serial {serial:?} parallel {parallel:?} ratio {:.2} ({s} {p})", serial.as_secs_f64() / parallel.as_secs_f64());
}
