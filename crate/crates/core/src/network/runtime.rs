//! Executable form of a [`NetworkSpec`]: float parameters, forward caches and
//! reverse-mode backward over the sequential layer list.

use crate::autograd::{
    batchnorm, batchnorm_backward, batchnorm_infer, conv2d, conv2d_backward, dense,
    dense_backward, dropout, dropout_backward, maxpool2d, maxpool2d_backward, relu,
    relu_backward, softmax, BatchNormCache, BatchNormConfig, Conv2dGeometry, Mode, RunningStats,
    Scalar, Tensor,
};

use super::model::{Model, StoredTensor};
use super::spec::{LayerKind, NetworkSpec, Shape};
use super::NetworkError;

enum Node<T: Scalar> {
    Conv {
        layer: String,
        weight: Tensor<T>,
        bias: Tensor<T>,
        geom: Conv2dGeometry,
        input: Option<Tensor<T>>,
    },
    Norm {
        layer: String,
        gamma: Tensor<T>,
        beta: Tensor<T>,
        running: RunningStats<T>,
        cache: Option<BatchNormCache<T>>,
    },
    Relu {
        input: Option<Tensor<T>>,
    },
    Pool {
        k: usize,
        argmax: Vec<usize>,
        input_shape: Vec<usize>,
    },
    Dropout {
        p: f64,
        mask: Option<Vec<T>>,
    },
    Flatten {
        input_shape: Vec<usize>,
    },
    Dense {
        layer: String,
        weight: Tensor<T>,
        bias: Tensor<T>,
        input: Option<Tensor<T>>,
    },
}

pub struct Network<T: Scalar = f32> {
    spec: NetworkSpec,
    nodes: Vec<Node<T>>,
    bn: BatchNormConfig<T>,
    dropout_seed: u64,
    steps: u64,
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn load<T: Scalar>(model: &Model, name: &str, running: bool) -> Result<Tensor<T>, NetworkError> {
    let map = if running { &model.running_stats } else { &model.params };
    let stored: &StoredTensor =
        map.get(name).ok_or_else(|| NetworkError::InvalidModel(format!("missing tensor {name}")))?;
    let values = stored.to_f32().into_iter().map(|v| T::from_f64_lossy(f64::from(v))).collect();
    let t = Tensor::new(stored.shape.clone(), values)?;
    Ok(if running { t } else { t.into_param() })
}

impl<T: Scalar> Network<T> {
    pub fn from_model(model: &Model) -> Result<Self, NetworkError> {
        model.validate()?;
        let spec = model.spec.clone();
        let mut nodes = Vec::new();
        for layer in &spec.layers {
            let n = &layer.name;
            match &layer.kind {
                LayerKind::Conv { stride, pad, has_bn, .. } => {
                    nodes.push(Node::Conv {
                        layer: n.clone(),
                        weight: load(model, &format!("{n}.weight"), false)?,
                        bias: load(model, &format!("{n}.bias"), false)?,
                        geom: Conv2dGeometry { stride: *stride, pad: *pad },
                        input: None,
                    });
                    if *has_bn {
                        nodes.push(Self::norm_node(model, n)?);
                    }
                }
                LayerKind::Dense { has_bn, .. } => {
                    nodes.push(Node::Dense {
                        layer: n.clone(),
                        weight: load(model, &format!("{n}.weight"), false)?,
                        bias: load(model, &format!("{n}.bias"), false)?,
                        input: None,
                    });
                    if *has_bn {
                        nodes.push(Self::norm_node(model, n)?);
                    }
                }
                LayerKind::MaxPool { k } => {
                    nodes.push(Node::Pool { k: *k, argmax: Vec::new(), input_shape: Vec::new() })
                }
                LayerKind::Relu => nodes.push(Node::Relu { input: None }),
                LayerKind::Dropout { p } => nodes.push(Node::Dropout { p: *p, mask: None }),
                LayerKind::Flatten => nodes.push(Node::Flatten { input_shape: Vec::new() }),
            }
        }
        Ok(Self { spec, nodes, bn: BatchNormConfig::default(), dropout_seed: 0, steps: 0 })
    }

    fn norm_node(model: &Model, layer: &str) -> Result<Node<T>, NetworkError> {
        let mean = load::<T>(model, &format!("{layer}.bn.running_mean"), true)?;
        let var = load::<T>(model, &format!("{layer}.bn.running_var"), true)?;
        Ok(Node::Norm {
            layer: layer.to_string(),
            gamma: load(model, &format!("{layer}.bn.gamma"), false)?,
            beta: load(model, &format!("{layer}.bn.beta"), false)?,
            running: RunningStats { mean: mean.into_data(), var: var.into_data() },
            cache: None,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Seeds the dropout masks drawn by subsequent training forwards.
    pub fn set_dropout_seed(&mut self, seed: u64) {
        self.dropout_seed = seed;
        self.steps = 0;
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(), NetworkError> {
        let [c, h, w] = self.spec.input_shape;
        if x.shape().len() != 4 || x.shape()[1..] != [c, h, w] {
            return Err(NetworkError::ShapeMismatch(format!(
                "network expects [N, {c}, {h}, {w}], got {:?}",
                x.shape()
            )));
        }
        Ok(())
    }

    /// Eval-mode forward without caching; returns logits [N, classes].
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NetworkError> {
        self.check_input(x)?;
        let mut h = x.clone();
        for node in &self.nodes {
            h = match node {
                Node::Conv { weight, bias, geom, .. } => conv2d(&h, weight, Some(bias), *geom)?,
                Node::Norm { gamma, beta, running, .. } => {
                    batchnorm_infer(&h, gamma, beta, running, self.bn.eps)?
                }
                Node::Relu { .. } => relu(&h),
                Node::Pool { k, .. } => maxpool2d(&h, *k, *k)?.0,
                Node::Dropout { .. } => h,
                Node::Flatten { .. } => {
                    let n = h.shape()[0];
                    let rest = h.len() / n.max(1);
                    h.reshape(vec![n, rest])?
                }
                Node::Dense { weight, bias, .. } => dense(&h, weight, bias)?,
            };
        }
        Ok(h)
    }

    pub fn predict_proba(&self, x: &Tensor<T>) -> Result<Tensor<T>, NetworkError> {
        Ok(softmax(&self.infer(x)?))
    }

    /// Train-mode forward: batch statistics, active dropout, caches kept for
    /// [`Network::backward`].
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NetworkError> {
        self.check_input(x)?;
        let step = self.steps;
        self.steps += 1;
        let base = self.dropout_seed;
        let bn = self.bn;
        let mut h = x.clone();
        for (idx, node) in self.nodes.iter_mut().enumerate() {
            h = match node {
                Node::Conv { weight, bias, geom, input, .. } => {
                    let y = conv2d(&h, weight, Some(bias), *geom)?;
                    *input = Some(h);
                    y
                }
                Node::Norm { gamma, beta, running, cache, .. } => {
                    let (y, c) = batchnorm(&h, gamma, beta, running, Mode::Train, bn)?;
                    *cache = Some(c);
                    y
                }
                Node::Relu { input } => {
                    let y = relu(&h);
                    *input = Some(h);
                    y
                }
                Node::Pool { k, argmax, input_shape } => {
                    let (y, arg) = maxpool2d(&h, *k, *k)?;
                    *argmax = arg;
                    *input_shape = h.shape().to_vec();
                    y
                }
                Node::Dropout { p, mask } => {
                    let seed = mix64(mix64(base ^ step.rotate_left(17)) ^ idx as u64);
                    let (y, m) = dropout(&h, *p, seed, Mode::Train)?;
                    *mask = m;
                    y
                }
                Node::Flatten { input_shape } => {
                    *input_shape = h.shape().to_vec();
                    let n = h.shape()[0];
                    let rest = h.len() / n.max(1);
                    h.reshape(vec![n, rest])?
                }
                Node::Dense { weight, bias, input, .. } => {
                    let y = dense(&h, weight, bias)?;
                    *input = Some(h);
                    y
                }
            };
        }
        Ok(h)
    }

    /// Back-propagates `grad` (d loss / d logits) through the cached forward,
    /// accumulating parameter gradients. Returns d loss / d input when asked.
    pub fn backward(
        &mut self,
        grad: Tensor<T>,
        need_input_grad: bool,
    ) -> Result<Option<Tensor<T>>, NetworkError> {
        let missing = || NetworkError::ShapeMismatch("backward called without a training forward".into());
        let mut g = grad;
        let last = self.nodes.len();
        for (rev, node) in self.nodes.iter_mut().rev().enumerate() {
            let first = rev + 1 == last;
            let want_dx = !first || need_input_grad;
            g = match node {
                Node::Conv { weight, bias, geom, input, .. } => {
                    let x = input.take().ok_or_else(missing)?;
                    let grads = conv2d_backward(&x, weight, &g, *geom, want_dx)?;
                    weight.accumulate_grad(grads.weight.data())?;
                    bias.accumulate_grad(grads.bias.data())?;
                    match grads.input {
                        Some(dx) => dx,
                        None => return Ok(None),
                    }
                }
                Node::Norm { gamma, beta, cache, .. } => {
                    let c = cache.take().ok_or_else(missing)?;
                    let grads = batchnorm_backward(&g, gamma, &c)?;
                    gamma.accumulate_grad(grads.gamma.data())?;
                    beta.accumulate_grad(grads.beta.data())?;
                    grads.input
                }
                Node::Relu { input } => {
                    let x = input.take().ok_or_else(missing)?;
                    relu_backward(&x, &g)?
                }
                Node::Pool { argmax, input_shape, .. } => {
                    maxpool2d_backward(&g, argmax, input_shape)?
                }
                Node::Dropout { mask, .. } => dropout_backward(&g, mask.as_deref()),
                Node::Flatten { input_shape } => g.reshape(input_shape.clone())?,
                Node::Dense { weight, bias, input, .. } => {
                    let x = input.take().ok_or_else(missing)?;
                    let grads = dense_backward(&x, weight, &g)?;
                    weight.accumulate_grad(grads.weight.data())?;
                    bias.accumulate_grad(grads.bias.data())?;
                    grads.input
                }
            };
        }
        Ok(if need_input_grad { Some(g) } else { None })
    }

    /// Learnable tensors in canonical order.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for node in &mut self.nodes {
            match node {
                Node::Conv { weight, bias, .. } | Node::Dense { weight, bias, .. } => {
                    out.push(weight);
                    out.push(bias);
                }
                Node::Norm { gamma, beta, .. } => {
                    out.push(gamma);
                    out.push(beta);
                }
                _ => {}
            }
        }
        out
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match node {
                Node::Conv { layer, weight, bias, .. } | Node::Dense { layer, weight, bias, .. } => {
                    out.push((format!("{layer}.weight"), weight));
                    out.push((format!("{layer}.bias"), bias));
                }
                Node::Norm { layer, gamma, beta, .. } => {
                    out.push((format!("{layer}.bn.gamma"), gamma));
                    out.push((format!("{layer}.bn.beta"), beta));
                }
                _ => {}
            }
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Writes the current float parameters and running statistics into a
    /// model with the metadata of `template`.
    pub fn to_model(&self, template: &Model) -> Model {
        let to_f32 = |t: &[T]| t.iter().map(|v| v.to_f32().unwrap_or(f32::NAN)).collect::<Vec<_>>();
        let mut model = Model {
            spec: self.spec.clone(),
            params: Default::default(),
            running_stats: Default::default(),
            class_names: template.class_names.clone(),
            metadata: template.metadata.clone(),
        };
        for (name, t) in self.named_params() {
            model.params.insert(name, StoredTensor::f32(t.shape().to_vec(), to_f32(t.data())));
        }
        for node in &self.nodes {
            if let Node::Norm { layer, running, .. } = node {
                let n = running.mean.len();
                model.running_stats.insert(
                    format!("{layer}.bn.running_mean"),
                    StoredTensor::f32(vec![n], to_f32(&running.mean)),
                );
                model.running_stats.insert(
                    format!("{layer}.bn.running_var"),
                    StoredTensor::f32(vec![n], to_f32(&running.var)),
                );
            }
        }
        model
    }

    /// Activation shapes after each spec layer observed on a real forward.
    pub fn trace_shapes(&self, x: &Tensor<T>) -> Result<Vec<Shape>, NetworkError> {
        self.check_input(x)?;
        let mut shapes = Vec::new();
        let mut h = x.clone();
        let mut node_iter = self.nodes.iter().peekable();
        for layer in &self.spec.layers {
            let node = node_iter.next().expect("one node per layer");
            h = self.apply_eval(node, h)?;
            if layer.has_bn() {
                let bn = node_iter.next().expect("bn node follows");
                h = self.apply_eval(bn, h)?;
            }
            let dims = &h.shape()[1..];
            shapes.push(match dims {
                [c, hh, w] => Shape::Map { c: *c, h: *hh, w: *w },
                [n] => Shape::Flat(*n),
                other => {
                    return Err(NetworkError::ShapeMismatch(format!("unexpected activation {other:?}")))
                }
            });
        }
        Ok(shapes)
    }

    fn apply_eval(&self, node: &Node<T>, h: Tensor<T>) -> Result<Tensor<T>, NetworkError> {
        Ok(match node {
            Node::Conv { weight, bias, geom, .. } => conv2d(&h, weight, Some(bias), *geom)?,
            Node::Norm { gamma, beta, running, .. } => batchnorm_infer(&h, gamma, beta, running, self.bn.eps)?,
            Node::Relu { .. } => relu(&h),
            Node::Pool { k, .. } => maxpool2d(&h, *k, *k)?.0,
            Node::Dropout { .. } => h,
            Node::Flatten { .. } => {
                let n = h.shape()[0];
                let rest = h.len() / n.max(1);
                h.reshape(vec![n, rest])?
            }
            Node::Dense { weight, bias, .. } => dense(&h, weight, bias)?,
        })
    }
}
