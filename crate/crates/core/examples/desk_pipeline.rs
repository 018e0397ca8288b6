//! End-to-end run on the synthetic dataset: featurize, train a teacher,
//! remove layers, distill a student, quantize its head, and compare.
//!
//! cargo run --release -p hivesig --example desk_pipeline

use std::time::Instant;

use hivesig::compress::{
    channel_preserving_convs, distill, prune_layers, quantize_head, size_report, DistillConfig,
};
use hivesig::evalmetrics::benchmark;
use hivesig::network::{
    build_student, build_teacher, fine_tune, stratified_split, train, to_bytes, ArchConfig, Dataset, Model,
    TrainingConfig,
};
use hivesig::synth::{synth_dataset, SynthConfig};
use hivesig::tfrepr::FeatureConfig;

fn val_accuracy(model: &Model, data: &Dataset, val: &[usize]) -> f64 {
    let sub = data.subset(val);
    let pred = hivesig::network::predict(model, &sub).unwrap();
    pred.iter().zip(&sub.labels).filter(|(p, l)| p == l).count() as f64 / sub.len() as f64
}

fn main() {
    let t0 = Instant::now();
    let synth = SynthConfig { clips_per_class: 200, ..Default::default() };
    let clips = synth_dataset(&synth);
    let feat = FeatureConfig::default();
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for c in &clips {
        let img = feat.compute(c).unwrap();
        images.push(img.raster(feat.raster_size, feat.channels).unwrap().data);
        labels.push(c.label.unwrap());
    }
    let data = Dataset::new(feat.input_shape(), images, labels, 4).unwrap();
    println!("featurized {} clips in {:.1}s", data.len(), t0.elapsed().as_secs_f64());

    let teacher_arch = ArchConfig { widths: vec![8, 8, 16, 16, 32, 32, 64, 256], ..ArchConfig::teacher() };
    let student_arch = ArchConfig { widths: vec![4, 4, 8, 8, 16, 16, 32, 256], ..ArchConfig::student() };
    let tcfg = TrainingConfig { max_epochs: 30, seed: 7, early_stop_patience: Some(8), ..Default::default() };
    let split = stratified_split(&data.labels, 4, tcfg.val_fraction, tcfg.seed).unwrap();

    let t = Instant::now();
    let (teacher, hist) = train(&build_teacher(&teacher_arch).unwrap(), &data, &tcfg).unwrap();
    for r in &hist.records {
        println!(
            "  epoch {:2} loss {:.4} acc {:.3} val_loss {:.4} val_acc {:.3}",
            r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
        );
    }
    println!("teacher: best epoch {} in {:.1}s", hist.best_epoch, t.elapsed().as_secs_f64());

    let names = channel_preserving_convs(&teacher).unwrap();
    let (pruned, _) = prune_layers(&teacher, &names).unwrap();
    let ft = TrainingConfig { max_epochs: 5, ..tcfg.clone() };
    let (pruned, _) = fine_tune(&pruned, &data, &ft).unwrap();

    let t = Instant::now();
    let dcfg = DistillConfig { training: tcfg.clone(), ..Default::default() };
    let (student, _) = distill(&teacher, &build_student(&student_arch).unwrap(), &data, &dcfg).unwrap();
    println!("student distilled in {:.1}s", t.elapsed().as_secs_f64());
    let calib = data.batch(&split.train[..64]);
    let (quant, qrep) = quantize_head(&student, &calib).unwrap();
    println!("quantize agreement {:.3} drift {:.4}", qrep.agreement, qrep.max_logit_drift);

    let val = data.subset(&split.val);
    for (name, m) in [("teacher", &teacher), ("layer_pruned", &pruned), ("student", &student), ("quantized", &quant)] {
        let b = benchmark(m, name, &val, 5).unwrap();
        println!(
            "{name:>13}: val_acc {:.4} params {:>7} bytes {:>8} file {:>8} latency {:.4}s",
            val_accuracy(m, &data, &split.val),
            b.params,
            size_report(m).param_bytes,
            to_bytes(m).len(),
            b.inference_seconds
        );
    }
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}
