use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{
    argmax_rows, cross_entropy, one_hot, rmsprop_step, softmax, softmax_cross_entropy_grad,
    RmsPropConfig, RmsPropState, StepSchedule, Tensor,
};

use super::model::Model;
use super::runtime::Network;
use super::spec::NetworkSpec;
use super::NetworkError;

/// Labeled rasters, each flattened as C×H×W.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub input_shape: [usize; 3],
    pub images: Vec<Vec<f32>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(
        input_shape: [usize; 3],
        images: Vec<Vec<f32>>,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self, NetworkError> {
        let per: usize = input_shape.iter().product();
        if images.len() != labels.len() {
            return Err(NetworkError::ShapeMismatch(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(bad) = images.iter().position(|im| im.len() != per) {
            return Err(NetworkError::ShapeMismatch(format!(
                "image {bad} has {} values, expected {per}",
                images[bad].len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(NetworkError::ShapeMismatch(format!("label {l} outside {n_classes} classes")));
        }
        Ok(Self { input_shape, images, labels, n_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn batch(&self, idx: &[usize]) -> Tensor<f32> {
        let per: usize = self.input_shape.iter().product();
        let mut data = Vec::with_capacity(idx.len() * per);
        for &i in idx {
            data.extend_from_slice(&self.images[i]);
        }
        let [c, h, w] = self.input_shape;
        Tensor::new(vec![idx.len(), c, h, w], data).expect("images validated on construction")
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            input_shape: self.input_shape,
            images: idx.iter().map(|&i| self.images[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        self.labels.iter().for_each(|&l| counts[l] += 1);
        counts
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub optimizer: RmsPropConfig,
    pub max_epochs: usize,
    pub lr_factor: f64,
    pub lr_interval: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub val_fraction: f64,
    /// Stop once this many epochs pass without a new best snapshot.
    pub early_stop_patience: Option<usize>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            optimizer: RmsPropConfig::default(),
            max_epochs: 250,
            lr_factor: 0.5,
            lr_interval: 6,
            batch_size: 32,
            seed: 0,
            val_fraction: 0.15,
            early_stop_patience: None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), NetworkError> {
        let bad = |m: &str| Err(NetworkError::InvalidConfig(m.to_string()));
        if !(self.lr_factor > 0.0 && self.lr_factor <= 1.0) {
            return bad("lr_factor must lie in (0, 1]");
        }
        if self.lr_interval == 0 {
            return bad("lr_interval must be at least 1");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2 (batch norm needs batch statistics)");
        }
        if self.optimizer.lr0 < 0.0 || !(0.0..1.0).contains(&self.optimizer.rho) {
            return bad("optimizer settings out of range");
        }
        Ok(())
    }

    pub fn schedule(&self) -> StepSchedule {
        StepSchedule { lr0: self.optimizer.lr0, factor: self.lr_factor, interval: self.lr_interval }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distill_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl History {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.records.iter().find(|r| r.epoch == self.best_epoch)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Per-class seeded split; every class keeps at least one sample on each side.
pub fn stratified_split(
    labels: &[usize],
    n_classes: usize,
    val_fraction: f64,
    seed: u64,
) -> Result<Split, NetworkError> {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in 0..n_classes {
        let mut members: Vec<usize> =
            labels.iter().enumerate().filter(|(_, &l)| l == class).map(|(i, _)| i).collect();
        if members.len() < 2 {
            return Err(NetworkError::EmptyClass(class));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (class as u64).wrapping_mul(0x9E37_79B9));
        members.shuffle(&mut rng);
        let n_val = ((members.len() as f64 * val_fraction).round() as usize).clamp(1, members.len() - 1);
        val.extend_from_slice(&members[..n_val]);
        train.extend_from_slice(&members[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok(Split { train, val })
}

pub(crate) struct BatchLoss {
    pub total: f64,
    pub components: Option<(f64, f64)>,
    pub grad: Tensor<f32>,
}

/// Training objective evaluated on a mini-batch of logits.
pub(crate) trait Objective {
    fn evaluate(&self, logits: &Tensor<f32>, idx: &[usize], labels: &[usize]) -> Result<BatchLoss, NetworkError>;
}

pub(crate) struct CrossEntropyObjective {
    pub n_classes: usize,
}

impl Objective for CrossEntropyObjective {
    fn evaluate(&self, logits: &Tensor<f32>, _idx: &[usize], labels: &[usize]) -> Result<BatchLoss, NetworkError> {
        let probs = softmax(logits);
        let target = one_hot::<f32>(labels, self.n_classes)?;
        let loss = cross_entropy(&probs, &target)?;
        let grad = softmax_cross_entropy_grad(&probs, &target, 1.0)?;
        Ok(BatchLoss { total: f64::from(loss), components: None, grad })
    }
}

/// Eval-mode logits for `idx`, in order, computed in fixed-size batches.
pub fn eval_logits(
    net: &Network<f32>,
    data: &Dataset,
    idx: &[usize],
    batch_size: usize,
) -> Result<Tensor<f32>, NetworkError> {
    let k = net.spec().n_classes;
    let mut out = Vec::with_capacity(idx.len() * k);
    for chunk in idx.chunks(batch_size.max(1)) {
        out.extend_from_slice(net.infer(&data.batch(chunk))?.data());
    }
    Ok(Tensor::new(vec![idx.len(), k], out)?)
}

fn loss_and_accuracy(logits: &Tensor<f32>, labels: &[usize], k: usize) -> Result<(f64, f64), NetworkError> {
    let probs = softmax(logits);
    let loss = cross_entropy(&probs, &one_hot::<f32>(labels, k)?)?;
    let pred = argmax_rows(logits)?;
    let correct = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok((f64::from(loss), correct as f64 / labels.len().max(1) as f64))
}

fn batches(order: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    // a lone trailing sample cannot supply batch statistics
    if out.len() > 1 && out.last().map_or(false, |b| b.len() == 1) {
        let tail = out.pop().unwrap();
        out.last_mut().unwrap().extend(tail);
    }
    out
}

pub(crate) fn fit(
    start: &Model,
    data: &Dataset,
    cfg: &TrainingConfig,
    objective: &dyn Objective,
) -> Result<(Model, History), NetworkError> {
    cfg.validate()?;
    if data.input_shape != start.spec.input_shape {
        return Err(NetworkError::ShapeMismatch(format!(
            "dataset rasters {:?} do not match network input {:?}",
            data.input_shape, start.spec.input_shape
        )));
    }
    if data.n_classes != start.spec.n_classes {
        return Err(NetworkError::ShapeMismatch(format!(
            "dataset has {} classes, network {}",
            data.n_classes, start.spec.n_classes
        )));
    }
    let split = stratified_split(&data.labels, data.n_classes, cfg.val_fraction, cfg.seed)?;
    if split.train.len() < 2 {
        return Err(NetworkError::InvalidConfig("need at least two training samples".into()));
    }
    let val_labels: Vec<usize> = split.val.iter().map(|&i| data.labels[i]).collect();
    let k = data.n_classes;

    let mut net = Network::<f32>::from_model(start)?;
    net.set_dropout_seed(cfg.seed ^ 0xD809_0C7A);
    let mut state = RmsPropState::new();
    let schedule = cfg.schedule();
    let mut history = History::default();
    let mut best: Option<(Model, f64, f64)> = None;

    for epoch in 0..cfg.max_epochs {
        let lr = schedule.lr(epoch);
        let mut order = split.train.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64 + 1)));

        let (mut loss_sum, mut d_sum, mut g_sum, mut correct, mut seen) = (0.0, 0.0, 0.0, 0usize, 0usize);
        let mut has_components = false;
        for batch in batches(&order, cfg.batch_size) {
            let labels: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
            let logits = net.forward_train(&data.batch(&batch))?;
            let out = objective.evaluate(&logits, &batch, &labels)?;
            let n = batch.len() as f64;
            loss_sum += out.total * n;
            if let Some((d, g)) = out.components {
                has_components = true;
                d_sum += d * n;
                g_sum += g * n;
            }
            correct += argmax_rows(&logits)?.iter().zip(&labels).filter(|(p, l)| p == l).count();
            seen += batch.len();
            net.zero_grad();
            net.backward(out.grad, false)?;
            rmsprop_step(&mut net.params_mut(), &mut state, &cfg.optimizer, lr)?;
        }

        let val_logits = eval_logits(&net, data, &split.val, cfg.batch_size)?;
        let (val_loss, val_acc) = loss_and_accuracy(&val_logits, &val_labels, k)?;
        let seen_f = seen.max(1) as f64;
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / seen_f,
            val_loss,
            train_acc: correct as f64 / seen_f,
            val_acc,
            distill_loss: has_components.then(|| d_sum / seen_f),
            gt_loss: has_components.then(|| g_sum / seen_f),
        };
        log::info!(
            "epoch {epoch}: lr {lr:.2e} train_loss {:.4} train_acc {:.3} val_loss {:.4} val_acc {:.3}",
            record.train_loss,
            record.train_acc,
            val_loss,
            val_acc
        );
        history.records.push(record);

        let improved = match &best {
            None => true,
            Some((_, acc, loss)) => val_acc > *acc || (val_acc == *acc && val_loss < *loss),
        };
        if improved {
            best = Some((net.to_model(start), val_acc, val_loss));
            history.best_epoch = epoch;
        }
        if let Some(p) = cfg.early_stop_patience {
            if epoch >= history.best_epoch + p {
                break;
            }
        }
    }
    let model = match best {
        Some((m, _, _)) => m,
        None => start.clone(),
    };
    Ok((model, history))
}

/// Trains a freshly initialized network; returns the best-validation snapshot.
pub fn train(
    spec: &NetworkSpec,
    data: &Dataset,
    cfg: &TrainingConfig,
) -> Result<(Model, History), NetworkError> {
    let init = Model::init(spec.clone(), cfg.seed)?;
    fine_tune(&init, data, cfg)
}

/// Continues training from existing parameters.
pub fn fine_tune(
    model: &Model,
    data: &Dataset,
    cfg: &TrainingConfig,
) -> Result<(Model, History), NetworkError> {
    fit(model, data, cfg, &CrossEntropyObjective { n_classes: data.n_classes })
}

/// Class predictions for every sample, in dataset order.
pub fn predict(model: &Model, data: &Dataset) -> Result<Vec<usize>, NetworkError> {
    let net = Network::<f32>::from_model(model)?;
    let idx: Vec<usize> = (0..data.len()).collect();
    Ok(argmax_rows(&eval_logits(&net, data, &idx, 32)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_partition_preserving_proportions() {
        let labels: Vec<usize> = (0..103).map(|i| i % 4).collect();
        let s = stratified_split(&labels, 4, 0.15, 7).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        for c in 0..4 {
            let n = labels.iter().filter(|&&l| l == c).count() as f64;
            let v = s.val.iter().filter(|&&i| labels[i] == c).count() as f64;
            assert!((v - n * 0.15).abs() <= 1.0);
        }
        assert_eq!(s, stratified_split(&labels, 4, 0.15, 7).unwrap());
    }

    #[test]
    fn split_rejects_tiny_class() {
        let labels = vec![0, 0, 1, 2, 2, 3, 3];
        assert!(matches!(stratified_split(&labels, 4, 0.2, 0), Err(NetworkError::EmptyClass(1))));
    }

    #[test]
    fn lone_tail_sample_merged() {
        let b = batches(&[0, 1, 2, 3, 4], 2);
        assert_eq!(b, vec![vec![0, 1], vec![2, 3, 4]]);
        assert_eq!(batches(&[0, 1, 2, 3], 2).len(), 2);
    }

    #[test]
    fn config_validation() {
        assert!(TrainingConfig::default().validate().is_ok());
        let bad = TrainingConfig { lr_factor: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TrainingConfig { val_fraction: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TrainingConfig { lr_interval: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn dataset_rejects_bad_shapes() {
        assert!(Dataset::new([1, 2, 2], vec![vec![0.0; 4]], vec![0, 1], 2).is_err());
        assert!(Dataset::new([1, 2, 2], vec![vec![0.0; 3]], vec![0], 2).is_err());
        assert!(Dataset::new([1, 2, 2], vec![vec![0.0; 4]], vec![2], 2).is_err());
    }
}
