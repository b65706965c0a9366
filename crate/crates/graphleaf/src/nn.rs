//! Numeric primitives: He-uniform initialization, LeakyReLU, softmax and
//! the cross-entropy loss with its analytic gradient.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

/// Default negative slope used everywhere LeakyReLU appears.
pub const LEAKY_RELU_SLOPE: f64 = 0.2;

/// Draw a tensor i.i.d. uniform on [-sqrt(6/n_in), +sqrt(6/n_in)].
pub fn he_uniform_init<T: Scalar>(shape: &[usize], n_in: usize, rng: &mut Rng) -> Result<Tensor<T>> {
    if n_in == 0 {
        return Err(Error::Input("he_uniform_init: n_in must be >= 1".into()));
    }
    let bound = (6.0 / n_in as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|_| T::from_f64(rng.uniform_in(-bound, bound)))
        .collect();
    Tensor::from_vec(shape, data)
}

/// Elementwise max(x, slope*x). The gradient takes the slope branch at
/// exactly zero.
pub fn leaky_relu<T: Scalar>(x: &Tensor<T>, slope: f64) -> Tensor<T> {
    let s = T::from_f64(slope);
    x.map(|v| if v > T::ZERO { v } else { T::from_f64(s.to_f64() * v.to_f64()) })
}

pub fn leaky_relu_grad_factor<T: Scalar>(x: T, slope: f64) -> T {
    if x > T::ZERO {
        T::ONE
    } else {
        T::from_f64(slope)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let (rows, cols) = (logits.rows(), logits.cols());
    let mut out = Tensor::zeros(&[rows, cols]);
    for r in 0..rows {
        let row = logits.row(r);
        let max = row
            .iter()
            .fold(f64::NEG_INFINITY, |m, v| m.max(v.to_f64()));
        let mut sum = 0.0f64;
        let dst = &mut out.data_mut()[r * cols..(r + 1) * cols];
        for (d, v) in dst.iter_mut().zip(row.iter()) {
            let e = (v.to_f64() - max).exp();
            *d = T::from_f64(e);
            sum += e;
        }
        for d in dst.iter_mut() {
            *d = T::from_f64(d.to_f64() / sum);
        }
    }
    out
}

/// Mean cross-entropy over a batch of logits, plus its gradient with
/// respect to the logits: (softmax - onehot) / batch.
pub struct CrossEntropy<T> {
    pub loss: f64,
    pub grad_logits: Tensor<T>,
    pub probabilities: Tensor<T>,
}

pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[u32]) -> Result<CrossEntropy<T>> {
    let (batch, classes) = (logits.rows(), logits.cols());
    if classes < 2 {
        return Err(Error::Input(format!(
            "cross-entropy needs at least 2 classes, got {}",
            classes
        )));
    }
    if labels.len() != batch {
        return Err(Error::Input(format!(
            "label count {} does not match batch size {}",
            labels.len(),
            batch
        )));
    }
    for (i, &l) in labels.iter().enumerate() {
        if l as usize >= classes {
            return Err(Error::Input(format!(
                "label {} out of range for {} classes (sample {})",
                l, classes, i
            )));
        }
    }

    let probs = softmax_rows(logits);
    let mut grad = Tensor::zeros(&[batch, classes]);
    let inv_b = 1.0 / batch as f64;
    let mut loss = 0.0f64;
    for r in 0..batch {
        let label = labels[r] as usize;
        let p_row = probs.row(r);
        // log softmax recomputed from shifted logits for stability
        let row = logits.row(r);
        let max = row
            .iter()
            .fold(f64::NEG_INFINITY, |m, v| m.max(v.to_f64()));
        let log_sum: f64 = row.iter().map(|v| (v.to_f64() - max).exp()).sum::<f64>().ln();
        loss -= row[label].to_f64() - max - log_sum;

        let dst = &mut grad.data_mut()[r * classes..(r + 1) * classes];
        for (c, d) in dst.iter_mut().enumerate() {
            let onehot = if c == label { 1.0 } else { 0.0 };
            *d = T::from_f64((p_row[c].to_f64() - onehot) * inv_b);
        }
    }
    Ok(CrossEntropy {
        loss: loss * inv_b,
        grad_logits: grad,
        probabilities: probs,
    })
}
