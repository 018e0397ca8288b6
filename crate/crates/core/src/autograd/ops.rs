//! Layer kernels with explicit backward passes.
//!
//! All image tensors are NCHW. Reductions over the batch run in sample order,
//! so results do not depend on how the caller schedules work.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{expect_rank, Scalar, Tensor};
use super::AutogradError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dGeometry {
    pub stride: usize,
    pub pad: usize,
}

pub fn conv_output_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

struct ConvDims {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
}

fn conv_dims<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    geom: Conv2dGeometry,
) -> Result<ConvDims, AutogradError> {
    expect_rank(input, 4, "conv2d input")?;
    expect_rank(weight, 4, "conv2d weight")?;
    let (n, c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]);
    let (o, wc, kh, kw) = (weight.shape()[0], weight.shape()[1], weight.shape()[2], weight.shape()[3]);
    if wc != c {
        return Err(AutogradError::ShapeMismatch(format!(
            "conv2d: input has {c} channels, weight expects {wc}"
        )));
    }
    let ho = conv_output_dim(h, kh, geom.stride, geom.pad);
    let wo = conv_output_dim(w, kw, geom.stride, geom.pad);
    match (ho, wo) {
        (Some(ho), Some(wo)) => Ok(ConvDims { n, c, h, w, o, kh, kw, ho, wo }),
        _ => Err(AutogradError::ShapeMismatch(format!(
            "conv2d: kernel {kh}x{kw} does not fit input {h}x{w} with pad {} stride {}",
            geom.pad, geom.stride
        ))),
    }
}

/// Unfolds one CHW sample into a (C·KH·KW) × (HO·WO) column matrix.
fn im2col<T: Scalar>(x: &[T], d: &ConvDims, geom: Conv2dGeometry, cols: &mut [T]) {
    let spatial = d.ho * d.wo;
    let pad = geom.pad as isize;
    let mut row = 0;
    for ch in 0..d.c {
        let plane = &x[ch * d.h * d.w..(ch + 1) * d.h * d.w];
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let dst = &mut cols[row * spatial..(row + 1) * spatial];
                for oy in 0..d.ho {
                    let iy = (oy * geom.stride + ki) as isize - pad;
                    let out_row = &mut dst[oy * d.wo..(oy + 1) * d.wo];
                    if iy < 0 || iy >= d.h as isize {
                        out_row.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * d.w..(iy as usize + 1) * d.w];
                    for (ox, v) in out_row.iter_mut().enumerate() {
                        let ix = (ox * geom.stride + kj) as isize - pad;
                        *v = if ix < 0 || ix >= d.w as isize { T::zero() } else { src[ix as usize] };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Folds a column matrix back onto a CHW sample, accumulating overlaps.
fn col2im<T: Scalar>(cols: &[T], d: &ConvDims, geom: Conv2dGeometry, x: &mut [T]) {
    let spatial = d.ho * d.wo;
    let pad = geom.pad as isize;
    let mut row = 0;
    for ch in 0..d.c {
        let plane = &mut x[ch * d.h * d.w..(ch + 1) * d.h * d.w];
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let src = &cols[row * spatial..(row + 1) * spatial];
                for oy in 0..d.ho {
                    let iy = (oy * geom.stride + ki) as isize - pad;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * d.w..(iy as usize + 1) * d.w];
                    for ox in 0..d.wo {
                        let ix = (ox * geom.stride + kj) as isize - pad;
                        if ix >= 0 && ix < d.w as isize {
                            dst[ix as usize] = dst[ix as usize] + src[oy * d.wo + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Cross-correlation of `input` [N,C,H,W] with `weight` [O,C,KH,KW].
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    geom: Conv2dGeometry,
) -> Result<Tensor<T>, AutogradError> {
    let d = conv_dims(input, weight, geom)?;
    if let Some(b) = bias {
        if b.len() != d.o {
            return Err(AutogradError::ShapeMismatch(format!(
                "conv2d: bias has {} entries for {} filters",
                b.len(),
                d.o
            )));
        }
    }
    let k = d.c * d.kh * d.kw;
    let spatial = d.ho * d.wo;
    let mut out = vec![T::zero(); d.n * d.o * spatial];
    let mut cols = vec![T::zero(); k * spatial];
    let sample_in = d.c * d.h * d.w;
    for s in 0..d.n {
        im2col(&input.data()[s * sample_in..(s + 1) * sample_in], &d, geom, &mut cols);
        let y = &mut out[s * d.o * spatial..(s + 1) * d.o * spatial];
        if let Some(b) = bias {
            for (oc, row) in y.chunks_mut(spatial).enumerate() {
                row.iter_mut().for_each(|v| *v = b.data()[oc]);
            }
        }
        let beta = if bias.is_some() { T::one() } else { T::zero() };
        T::gemm(
            d.o,
            k,
            spatial,
            T::one(),
            weight.data(),
            (k as isize, 1),
            &cols,
            (spatial as isize, 1),
            beta,
            y,
            (spatial as isize, 1),
        );
    }
    Tensor::new(vec![d.n, d.o, d.ho, d.wo], out)
}

pub struct Conv2dGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    geom: Conv2dGeometry,
    need_input_grad: bool,
) -> Result<Conv2dGrads<T>, AutogradError> {
    let d = conv_dims(input, weight, geom)?;
    if grad_out.shape() != [d.n, d.o, d.ho, d.wo] {
        return Err(AutogradError::ShapeMismatch(format!(
            "conv2d backward: gradient shape {:?}, expected {:?}",
            grad_out.shape(),
            [d.n, d.o, d.ho, d.wo]
        )));
    }
    let k = d.c * d.kh * d.kw;
    let spatial = d.ho * d.wo;
    let sample_in = d.c * d.h * d.w;
    let mut dw = vec![T::zero(); d.o * k];
    let mut db = vec![T::zero(); d.o];
    let mut dx = if need_input_grad { Some(vec![T::zero(); d.n * sample_in]) } else { None };
    let mut cols = vec![T::zero(); k * spatial];
    let mut dcols = vec![T::zero(); k * spatial];
    for s in 0..d.n {
        let dy = &grad_out.data()[s * d.o * spatial..(s + 1) * d.o * spatial];
        for (oc, row) in dy.chunks(spatial).enumerate() {
            db[oc] = db[oc] + row.iter().copied().sum::<T>();
        }
        im2col(&input.data()[s * sample_in..(s + 1) * sample_in], &d, geom, &mut cols);
        // dW += dY · colsᵀ
        T::gemm(
            d.o,
            spatial,
            k,
            T::one(),
            dy,
            (spatial as isize, 1),
            &cols,
            (1, spatial as isize),
            T::one(),
            &mut dw,
            (k as isize, 1),
        );
        if let Some(dx) = dx.as_mut() {
            // dcols = Wᵀ · dY
            T::gemm(
                k,
                d.o,
                spatial,
                T::one(),
                weight.data(),
                (1, k as isize),
                dy,
                (spatial as isize, 1),
                T::zero(),
                &mut dcols,
                (spatial as isize, 1),
            );
            col2im(&dcols, &d, geom, &mut dx[s * sample_in..(s + 1) * sample_in]);
        }
    }
    Ok(Conv2dGrads {
        input: dx.map(|v| Tensor::new(input.shape().to_vec(), v)).transpose()?,
        weight: Tensor::new(weight.shape().to_vec(), dw)?,
        bias: Tensor::new(vec![d.o], db)?,
    })
}

/// Max pooling; returns the pooled tensor and, per output, the flat index of
/// the winning input element (first index on ties).
pub fn maxpool2d<T: Scalar>(
    input: &Tensor<T>,
    k: usize,
    stride: usize,
) -> Result<(Tensor<T>, Vec<usize>), AutogradError> {
    expect_rank(input, 4, "maxpool2d input")?;
    let (n, c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]);
    if k == 0 || stride == 0 || h < k || w < k || (stride == k && (h % k != 0 || w % k != 0)) {
        return Err(AutogradError::ShapeMismatch(format!(
            "maxpool2d: window {k} stride {stride} does not tile {h}x{w}"
        )));
    }
    let ho = (h - k) / stride + 1;
    let wo = (w - k) / stride + 1;
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut argmax = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best_idx = base + oy * stride * w + ox * stride;
                let mut best = x[best_idx];
                for i in 0..k {
                    for j in 0..k {
                        let idx = base + (oy * stride + i) * w + ox * stride + j;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    Ok((Tensor::new(vec![n, c, ho, wo], out)?, argmax))
}

pub fn maxpool2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor<T>, AutogradError> {
    if grad_out.len() != argmax.len() {
        return Err(AutogradError::ShapeMismatch(
            "maxpool2d backward: gradient does not match recorded argmax".into(),
        ));
    }
    let mut dx = vec![T::zero(); input_shape.iter().product()];
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        dx[idx] = dx[idx] + g;
    }
    Tensor::new(input_shape.to_vec(), dx)
}

/// Running statistics carried by a batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        Self { mean: vec![T::zero(); channels], var: vec![T::one(); channels] }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BatchNormConfig<T> {
    pub eps: T,
    pub momentum: T,
}

impl<T: Scalar> Default for BatchNormConfig<T> {
    fn default() -> Self {
        Self { eps: T::from_f64_lossy(1e-5), momentum: T::from_f64_lossy(0.1) }
    }
}

/// Values saved by the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    x_hat: Vec<T>,
    inv_std: Vec<T>,
    mode: Mode,
    shape: Vec<usize>,
}

fn bn_layout(shape: &[usize]) -> Result<(usize, usize, usize), AutogradError> {
    if shape.len() < 2 {
        return Err(AutogradError::ShapeMismatch(format!(
            "batchnorm needs [N, C, ...], got {shape:?}"
        )));
    }
    Ok((shape[0], shape[1], shape[2..].iter().product()))
}

/// Per-channel normalization over batch and spatial axes; works for both
/// [N,C,H,W] feature maps and [N,C] dense activations.
pub fn batchnorm<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running: &mut RunningStats<T>,
    mode: Mode,
    cfg: BatchNormConfig<T>,
) -> Result<(Tensor<T>, BatchNormCache<T>), AutogradError> {
    let (n, c, s) = bn_layout(input.shape())?;
    if gamma.len() != c || beta.len() != c || running.mean.len() != c || running.var.len() != c {
        return Err(AutogradError::ShapeMismatch(format!(
            "batchnorm: parameters do not match {c} channels"
        )));
    }
    let x = input.data();
    let m = n * s;
    let mut inv_std = vec![T::zero(); c];
    let mut mean = vec![T::zero(); c];
    match mode {
        Mode::Train => {
            if m < 2 {
                return Err(AutogradError::ShapeMismatch(
                    "batchnorm: training needs more than one value per channel".into(),
                ));
            }
            let mf = T::from_usize(m).unwrap();
            for ch in 0..c {
                let mut sum = T::zero();
                for b in 0..n {
                    let off = (b * c + ch) * s;
                    sum = sum + x[off..off + s].iter().copied().sum::<T>();
                }
                let mu = sum / mf;
                let mut sq = T::zero();
                for b in 0..n {
                    let off = (b * c + ch) * s;
                    sq = sq + x[off..off + s].iter().map(|&v| (v - mu) * (v - mu)).sum::<T>();
                }
                let var = sq / mf;
                mean[ch] = mu;
                inv_std[ch] = T::one() / (var + cfg.eps).sqrt();
                let unbiased = sq / T::from_usize(m - 1).unwrap();
                running.mean[ch] = (T::one() - cfg.momentum) * running.mean[ch] + cfg.momentum * mu;
                running.var[ch] =
                    (T::one() - cfg.momentum) * running.var[ch] + cfg.momentum * unbiased;
            }
        }
        Mode::Eval => {
            for ch in 0..c {
                mean[ch] = running.mean[ch];
                inv_std[ch] = T::one() / (running.var[ch] + cfg.eps).sqrt();
            }
        }
    }
    let mut x_hat = vec![T::zero(); x.len()];
    let mut y = vec![T::zero(); x.len()];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * s;
            let (g, bt) = (gamma.data()[ch], beta.data()[ch]);
            for i in off..off + s {
                let h = (x[i] - mean[ch]) * inv_std[ch];
                x_hat[i] = h;
                y[i] = g * h + bt;
            }
        }
    }
    let cache = BatchNormCache { x_hat, inv_std, mode, shape: input.shape().to_vec() };
    Ok((Tensor::new(input.shape().to_vec(), y)?, cache))
}

/// Eval-mode batch norm against fixed running statistics.
pub fn batchnorm_infer<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running: &RunningStats<T>,
    eps: T,
) -> Result<Tensor<T>, AutogradError> {
    let (n, c, s) = bn_layout(input.shape())?;
    if gamma.len() != c || beta.len() != c || running.mean.len() != c || running.var.len() != c {
        return Err(AutogradError::ShapeMismatch(format!(
            "batchnorm: parameters do not match {c} channels"
        )));
    }
    let mut y = input.data().to_vec();
    for b in 0..n {
        for ch in 0..c {
            let inv_std = T::one() / (running.var[ch] + eps).sqrt();
            let scale = gamma.data()[ch] * inv_std;
            let shift = beta.data()[ch] - running.mean[ch] * scale;
            let off = (b * c + ch) * s;
            y[off..off + s].iter_mut().for_each(|v| *v = *v * scale + shift);
        }
    }
    Tensor::new(input.shape().to_vec(), y)
}

pub struct BatchNormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

pub fn batchnorm_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    gamma: &Tensor<T>,
    cache: &BatchNormCache<T>,
) -> Result<BatchNormGrads<T>, AutogradError> {
    if grad_out.shape() != cache.shape.as_slice() {
        return Err(AutogradError::ShapeMismatch(
            "batchnorm backward: gradient shape differs from forward input".into(),
        ));
    }
    let (n, c, s) = bn_layout(&cache.shape)?;
    let dy = grad_out.data();
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * s;
            for i in off..off + s {
                dbeta[ch] = dbeta[ch] + dy[i];
                dgamma[ch] = dgamma[ch] + dy[i] * cache.x_hat[i];
            }
        }
    }
    let mut dx = vec![T::zero(); dy.len()];
    let mf = T::from_usize(n * s).unwrap();
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * s;
            let scale = gamma.data()[ch] * cache.inv_std[ch];
            for i in off..off + s {
                dx[i] = match cache.mode {
                    Mode::Eval => scale * dy[i],
                    Mode::Train => {
                        scale / mf * (mf * dy[i] - dbeta[ch] - cache.x_hat[i] * dgamma[ch])
                    }
                };
            }
        }
    }
    Ok(BatchNormGrads {
        input: Tensor::new(cache.shape.clone(), dx)?,
        gamma: Tensor::new(vec![c], dgamma)?,
        beta: Tensor::new(vec![c], dbeta)?,
    })
}

/// Affine map `x·Wᵀ + b` for `x` [N, in], `W` [out, in].
pub fn dense<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, AutogradError> {
    expect_rank(input, 2, "dense input")?;
    expect_rank(weight, 2, "dense weight")?;
    let (n, fan_in) = (input.shape()[0], input.shape()[1]);
    let (out, w_in) = (weight.shape()[0], weight.shape()[1]);
    if w_in != fan_in || bias.len() != out {
        return Err(AutogradError::ShapeMismatch(format!(
            "dense: input [{n}, {fan_in}] against weight {:?} and bias of {}",
            weight.shape(),
            bias.len()
        )));
    }
    let mut y = Vec::with_capacity(n * out);
    for _ in 0..n {
        y.extend_from_slice(bias.data());
    }
    T::gemm(
        n,
        fan_in,
        out,
        T::one(),
        input.data(),
        (fan_in as isize, 1),
        weight.data(),
        (1, fan_in as isize),
        T::one(),
        &mut y,
        (out as isize, 1),
    );
    Tensor::new(vec![n, out], y)
}

pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<DenseGrads<T>, AutogradError> {
    expect_rank(grad_out, 2, "dense gradient")?;
    let (n, fan_in) = (input.shape()[0], input.shape()[1]);
    let out = weight.shape()[0];
    if grad_out.shape() != [n, out] {
        return Err(AutogradError::ShapeMismatch(format!(
            "dense backward: gradient {:?}, expected [{n}, {out}]",
            grad_out.shape()
        )));
    }
    let dy = grad_out.data();
    let mut dw = vec![T::zero(); out * fan_in];
    T::gemm(
        out,
        n,
        fan_in,
        T::one(),
        dy,
        (1, out as isize),
        input.data(),
        (fan_in as isize, 1),
        T::zero(),
        &mut dw,
        (fan_in as isize, 1),
    );
    let mut db = vec![T::zero(); out];
    for row in dy.chunks(out) {
        for (acc, &g) in db.iter_mut().zip(row) {
            *acc = *acc + g;
        }
    }
    let mut dx = vec![T::zero(); n * fan_in];
    T::gemm(
        n,
        out,
        fan_in,
        T::one(),
        dy,
        (out as isize, 1),
        weight.data(),
        (fan_in as isize, 1),
        T::zero(),
        &mut dx,
        (fan_in as isize, 1),
    );
    Ok(DenseGrads {
        input: Tensor::new(input.shape().to_vec(), dx)?,
        weight: Tensor::new(weight.shape().to_vec(), dw)?,
        bias: Tensor::new(vec![out], db)?,
    })
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_backward<T: Scalar>(
    input: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>, AutogradError> {
    if input.shape() != grad_out.shape() {
        return Err(AutogradError::ShapeMismatch("relu backward: shape differs".into()));
    }
    let dx = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(input.shape().to_vec(), dx)
}

/// Inverted dropout. Returns the output and the per-element multiplier
/// applied (0 or 1/(1−p)), which is also the backward scale.
pub fn dropout<T: Scalar>(
    input: &Tensor<T>,
    p: f64,
    seed: u64,
    mode: Mode,
) -> Result<(Tensor<T>, Option<Vec<T>>), AutogradError> {
    if !(0.0..1.0).contains(&p) {
        return Err(AutogradError::InvalidProbability(p));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok((input.clone(), None));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep_scale = T::from_f64_lossy(1.0 / (1.0 - p));
    let mask: Vec<T> = (0..input.len())
        .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep_scale })
        .collect();
    let y = input.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
    Ok((Tensor::new(input.shape().to_vec(), y)?, Some(mask)))
}

pub fn dropout_backward<T: Scalar>(grad_out: &Tensor<T>, mask: Option<&[T]>) -> Tensor<T> {
    match mask {
        None => grad_out.clone(),
        Some(mask) => {
            let mut g = grad_out.clone();
            g.data_mut().iter_mut().zip(mask).for_each(|(v, &m)| *v = *v * m);
            g
        }
    }
}
