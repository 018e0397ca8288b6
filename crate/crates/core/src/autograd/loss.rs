use super::tensor::{expect_rank, Scalar, Tensor};
use super::AutogradError;

/// Lower bound applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Max-shifted softmax of one logit row, after dividing by `temperature`.
pub fn softmax_row<T: Scalar>(logits: &[T], temperature: T, out: &mut [T]) {
    debug_assert_eq!(logits.len(), out.len());
    if logits.is_empty() {
        return;
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = ((z - max) / temperature).exp();
        sum = sum + *o;
    }
    out.iter_mut().for_each(|o| *o = *o / sum);
}

/// Row-wise softmax over the last axis of a [N, K] tensor (or a [K] vector).
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    softmax_t(logits, T::one())
}

pub fn softmax_t<T: Scalar>(logits: &Tensor<T>, temperature: T) -> Tensor<T> {
    let k = *logits.shape().last().unwrap_or(&0);
    let mut out = logits.map(|_| T::zero());
    if k > 0 {
        for (row, o) in logits.data().chunks(k).zip(out.data_mut().chunks_mut(k)) {
            softmax_row(row, temperature, o);
        }
    }
    out
}

/// `−Σ target·ln(max(probs, ε))` for one distribution pair.
pub fn cross_entropy_row<T: Scalar>(probs: &[T], target: &[T]) -> T {
    let floor = T::from_f64_lossy(PROB_FLOOR);
    let mut loss = T::zero();
    for (&p, &t) in probs.iter().zip(target) {
        if t != T::zero() {
            loss = loss - t * p.max(floor).ln();
        }
    }
    loss
}

/// Mean cross-entropy over a batch of [N, K] distributions.
pub fn cross_entropy<T: Scalar>(probs: &Tensor<T>, target: &Tensor<T>) -> Result<T, AutogradError> {
    if probs.shape() != target.shape() || probs.is_empty() {
        return Err(AutogradError::ShapeMismatch(format!(
            "cross_entropy: probs {:?} vs target {:?}",
            probs.shape(),
            target.shape()
        )));
    }
    let k = *probs.shape().last().unwrap();
    let n = probs.len() / k;
    let total = probs
        .data()
        .chunks(k)
        .zip(target.data().chunks(k))
        .map(|(p, t)| cross_entropy_row(p, t))
        .fold(T::zero(), |a, b| a + b);
    Ok(total / T::from_usize(n).unwrap())
}

/// Gradient of mean `cross_entropy(softmax(z/Γ), target)` with respect to `z`.
///
/// `probs` must be `softmax(z/Γ)`. Per row the result is `(p·Σt − t)/Γ`, divided
/// by the batch size.
pub fn softmax_cross_entropy_grad<T: Scalar>(
    probs: &Tensor<T>,
    target: &Tensor<T>,
    temperature: T,
) -> Result<Tensor<T>, AutogradError> {
    if probs.shape() != target.shape() {
        return Err(AutogradError::ShapeMismatch(format!(
            "softmax_cross_entropy_grad: probs {:?} vs target {:?}",
            probs.shape(),
            target.shape()
        )));
    }
    let k = *probs.shape().last().unwrap_or(&1);
    let n = T::from_usize(probs.len() / k.max(1)).unwrap();
    let mut grad = probs.clone();
    for (g, t) in grad.data_mut().chunks_mut(k).zip(target.data().chunks(k)) {
        let mass = t.iter().copied().fold(T::zero(), |a, b| a + b);
        for (gi, &ti) in g.iter_mut().zip(t) {
            *gi = (*gi * mass - ti) / temperature / n;
        }
    }
    Ok(grad)
}

/// One-hot [N, K] target matrix from class ids.
pub fn one_hot<T: Scalar>(labels: &[usize], k: usize) -> Result<Tensor<T>, AutogradError> {
    let mut data = vec![T::zero(); labels.len() * k];
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(AutogradError::ShapeMismatch(format!("label {l} outside {k} classes")));
        }
        data[i * k + l] = T::one();
    }
    Tensor::new(vec![labels.len(), k], data)
}

pub fn argmax_rows<T: Scalar>(logits: &Tensor<T>) -> Result<Vec<usize>, AutogradError> {
    expect_rank(logits, 2, "argmax_rows")?;
    let k = logits.shape()[1];
    Ok(logits
        .data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(data: &[f64]) -> Tensor<f64> {
        Tensor::new(vec![data.len()], data.to_vec()).unwrap()
    }

    #[test]
    fn equal_logits_are_uniform() {
        let p = softmax(&v(&[3.0, 3.0, 3.0, 3.0]));
        for &x in p.data() {
            assert!((x - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn ln2_logit_gives_two_fifths() {
        let p = softmax(&v(&[2f64.ln(), 0.0, 0.0, 0.0]));
        let want = [0.4, 0.2, 0.2, 0.2];
        for (a, b) in p.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_is_shift_invariant_and_stable() {
        let a = softmax(&v(&[1.0, -2.0, 0.5]));
        let b = softmax(&v(&[1001.0, 998.0, 1000.5]));
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        let sum: f64 = b.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_one_hot_match_is_zero() {
        let p = Tensor::new(vec![1, 4], vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(cross_entropy::<f64>(&p, &p).unwrap() <= 1e-6);
    }

    #[test]
    fn cross_entropy_uniform_is_ln4() {
        let p = Tensor::new(vec![1, 4], vec![0.25; 4]).unwrap();
        let t = one_hot::<f64>(&[2], 4).unwrap();
        assert!((cross_entropy(&p, &t).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!((4f64.ln() - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_rejects_mismatch() {
        let p = Tensor::<f64>::zeros(&[1, 4]);
        let t = Tensor::<f64>::zeros(&[1, 3]);
        assert!(cross_entropy(&p, &t).is_err());
    }

    #[test]
    fn one_hot_rejects_out_of_range() {
        assert!(one_hot::<f32>(&[4], 4).is_err());
    }
}
