//! Parameter/size accounting, quantization, distillation loss and pruning
//! properties.

use hivesig::autograd::{argmax_rows, cross_entropy, one_hot, softmax, softmax_t, Tensor};
use hivesig::compress::{
    distill, distillation_loss, prune_neurons, quantize_head, quantized_head_size, size_report, total_loss,
    DistillConfig, PruneStrategy, QuantParams, INT8_RANGE, QUANT_PARAMS_BYTES,
};
use hivesig::network::{
    build_head, build_student, count_params, train, ArchConfig, Dataset, HeadConfig, Model, NetworkSpec,
    TrainingConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn head_spec() -> NetworkSpec {
    NetworkSpec { input_shape: [256, 4, 4], layers: build_head(&HeadConfig::default(), 4), n_classes: 4 }
}

#[test]
fn head_parameter_breakdown() {
    let spec = head_spec();
    assert_eq!(count_params(&spec).unwrap(), 262_604);
    let m = Model::init(spec, 0).unwrap();
    let n = |name: &str| m.params[name].numel();
    assert_eq!(n("head.fc1.weight") + n("head.fc1.bias"), 256 * 4 * 4 * 64 + 64);
    assert_eq!(n("head.fc1.weight") + n("head.fc1.bias"), 262_208);
    assert_eq!(n("head.fc1.bn.gamma") + n("head.fc1.bn.beta"), 128);
    assert_eq!(n("head.fc2.weight") + n("head.fc2.bias"), 260);
    assert_eq!(n("head.fc2.bn.gamma") + n("head.fc2.bn.beta"), 8);
    assert_eq!(m.params.len(), 8);
}

#[test]
fn head_quantization_size_identity() {
    // component sizes fed symbolically: 2.5 total, 1.002 head
    assert_eq!(1.002 / 4.0, 0.2505);
    let s = quantized_head_size(2.5, 1.002);
    assert!((s - (2.5 - 1.002 + 0.2505)).abs() < 1e-12);
    assert_eq!(format!("{s:.2}"), "1.75");

    let m = Model::init(head_spec(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let calib = Tensor::new(vec![4, 256, 4, 4], (0..4 * 4096).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    let (q, rep) = quantize_head(&m, &calib).unwrap();
    let f32_payload = 4 * 262_604;
    assert_eq!(rep.head_bytes_before, f32_payload);
    assert_eq!(rep.head_bytes_after, f32_payload / 4 + QUANT_PARAMS_BYTES * rep.tensors.len());
    assert_eq!(size_report(&q).param_bytes, rep.head_bytes_after);
}

#[test]
fn quantize_round_trip_and_saturation() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (q_min, q_max) = INT8_RANGE;
    let mut checked = 0;
    for _ in 0..100 {
        let scale = 10f64.powf(rng.gen_range(-4.0..3.0));
        let a = rng.gen_range(-scale..scale);
        let b = rng.gen_range(-scale..scale);
        let qp = QuantParams::from_range(a.min(b), a.max(b), q_min, q_max).unwrap();
        assert!(qp.x_min <= 0.0 && qp.x_max >= 0.0);
        for _ in 0..1000 {
            let x = rng.gen_range(qp.x_min..=qp.x_max);
            let err = (x - qp.dequantize(qp.quantize(x))).abs();
            assert!(err <= qp.scale / 2.0 + 1e-9, "x {x} err {err} S {}", qp.scale);
            checked += 1;
        }
        assert_eq!(qp.dequantize(qp.quantize(0.0)), 0.0);
        let span = qp.x_max - qp.x_min;
        for _ in 0..10 {
            let d = rng.gen_range(qp.scale..10.0 * span + qp.scale);
            assert_eq!(qp.quantize(qp.x_max + d), q_max);
            assert_eq!(qp.quantize(qp.x_min - d), q_min);
        }
    }
    assert_eq!(checked, 100_000);
}

#[test]
fn uniform_student_distill_loss_is_ln2() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..100 {
        let c = rng.gen_range(-5.0..5.0);
        let student = softmax_t(&Tensor::new(vec![1, 2], vec![c, c]).unwrap(), rng.gen_range(0.5..8.0));
        let p = rng.gen_range(0.0..=1.0);
        let teacher = Tensor::new(vec![1, 2], vec![p, 1.0 - p]).unwrap();
        let loss: f64 = distillation_loss(&student, &teacher).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-6);
    }
}

#[test]
fn alpha_zero_is_plain_cross_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..200 {
        let (n, k) = (rng.gen_range(1..=8), rng.gen_range(2..=6));
        let z = Tensor::new(vec![n, k], (0..n * k).map(|_| rng.gen_range(-6.0..6.0)).collect()).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let teacher = softmax(&Tensor::new(vec![n, k], (0..n * k).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap());
        let parts = total_loss::<f64>(&z, &labels, &teacher, 0.0, 1.0, rng.gen_range(1.0..8.0)).unwrap();
        let plain = cross_entropy(&softmax(&z), &one_hot(&labels, k).unwrap()).unwrap();
        assert_eq!(parts.total.to_bits(), plain.to_bits());
    }
}

#[test]
fn temperature_preserves_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..1000 {
        let k = rng.gen_range(2..=10);
        let z = Tensor::new(vec![1, k], (0..k).map(|_| rng.gen_range(-10.0f64..10.0)).collect()).unwrap();
        let base = argmax_rows(&z).unwrap();
        let t = rng.gen_range(0.1..20.0);
        assert_eq!(argmax_rows(&softmax_t(&z, t)).unwrap(), base);
    }
}

#[test]
fn total_loss_matches_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    for _ in 0..200 {
        let (n, k) = (rng.gen_range(1..=6), rng.gen_range(2..=6));
        let z: Vec<f64> = (0..n * k).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let tl: Vec<f64> = (0..n * k).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let (alpha, beta, gamma) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(1.0..10.0));

        let soft = |v: &[f64], t: f64| -> Vec<f64> {
            let e: Vec<f64> = v.iter().map(|x| (x / t).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|x| x / s).collect()
        };
        let mut distill = 0.0;
        let mut gt = 0.0;
        for i in 0..n {
            let row = &z[i * k..(i + 1) * k];
            let ps = soft(row, gamma);
            let pt = soft(&tl[i * k..(i + 1) * k], gamma);
            for j in 0..k {
                distill -= pt[j] * ps[j].ln();
            }
            gt -= soft(row, 1.0)[labels[i]].ln();
        }
        let expected = alpha * distill / n as f64 + beta * gt / n as f64;

        let zt = Tensor::new(vec![n, k], z.clone()).unwrap();
        let teacher = softmax_t(&Tensor::new(vec![n, k], tl).unwrap(), gamma);
        let got = total_loss(&zt, &labels, &teacher, alpha, beta, gamma).unwrap();
        assert!((got.total - expected).abs() < 1e-12, "{} vs {expected}", got.total);
    }
}

fn tiny_data(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for i in 0..40 {
        let c = i % 4;
        images.push((0..3 * 8 * 8).map(|p| if p % 4 == c { 1.0 } else { 0.0 } + rng.gen_range(-0.2..0.2)).collect());
        labels.push(c);
    }
    Dataset::new([3, 8, 8], images, labels, 4).unwrap()
}

fn tiny_arch(widths: Vec<usize>, hidden: usize) -> ArchConfig {
    ArchConfig { widths, input_size: 8, head: HeadConfig { hidden, dropout: 0.2 }, ..ArchConfig::student() }
}

#[test]
fn ground_truth_only_distillation_reproduces_training() {
    let data = tiny_data(36);
    let spec = build_student(&tiny_arch(vec![4, 4], 8)).unwrap();
    let training = TrainingConfig { max_epochs: 3, batch_size: 8, seed: 5, ..Default::default() };
    let teacher = Model::init(build_student(&tiny_arch(vec![6, 6], 8)).unwrap(), 9).unwrap();
    let teacher_copy = teacher.clone();

    let (plain, h1) = train(&spec, &data, &training).unwrap();
    let cfg = DistillConfig { alpha: 0.0, beta: 1.0, training, ..Default::default() };
    let (student, h2) = distill(&teacher, &spec, &data, &cfg).unwrap();

    assert_eq!(teacher, teacher_copy);
    assert_eq!(plain.params, student.params);
    assert_eq!(h1.best_epoch, h2.best_epoch);
    for (a, b) in h1.records.iter().zip(&h2.records) {
        assert_eq!((a.train_loss, a.val_loss, a.train_acc, a.val_acc), (b.train_loss, b.val_loss, b.train_acc, b.val_acc));
    }
}

#[test]
fn pruned_parameter_count_matches_narrower_architecture() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for _ in 0..30 {
        let widths: Vec<usize> = (0..2 * rng.gen_range(1..=2)).map(|_| rng.gen_range(1..=8)).collect();
        let hidden = rng.gen_range(1..=16);
        let arch = tiny_arch(widths.clone(), hidden);
        let model = Model::init(build_student(&arch).unwrap(), rng.gen()).unwrap();
        let f = rng.gen_range(0.0..0.95);
        let strategy = if rng.gen_bool(0.5) { PruneStrategy::Magnitude } else { PruneStrategy::Random { seed: rng.gen() } };
        let (pruned, report) = prune_neurons(&model, f, strategy).unwrap();

        let shrink = |u: usize| u - ((u as f64 * f).floor() as usize).min(u - 1);
        let narrow = tiny_arch(widths.iter().map(|&w| shrink(w)).collect(), shrink(hidden));
        let expected = count_params(&build_student(&narrow).unwrap()).unwrap();
        assert_eq!(report.params_after, expected, "widths {widths:?} hidden {hidden} f {f}");
        assert_eq!(pruned.count_params().unwrap(), expected);
        assert_eq!(report.params_before, model.count_params().unwrap());
    }
}
