//! Multinomial logistic regression on flattened images.
//!
//! Parameters are a `784 × 10` weight matrix stored row-major (entry
//! `(i, k)` at `i * 10 + k`) followed by the 10 biases.

use super::data::{Dataset, CLASSES, FEATURES};
use crate::Real;

/// Number of model parameters, `784 · 10 + 10`.
pub const PARAMS: usize = FEATURES * CLASSES + CLASSES;
const BIAS: usize = FEATURES * CLASSES;

fn logits<T: Real>(w: &[T], x: &[T]) -> [T; CLASSES] {
    let mut z = [T::zero(); CLASSES];
    z.copy_from_slice(&w[BIAS..]);
    for (i, &xi) in x.iter().enumerate() {
        if xi == T::zero() {
            continue;
        }
        let row = &w[i * CLASSES..(i + 1) * CLASSES];
        for (zk, &wk) in z.iter_mut().zip(row) {
            *zk += xi * wk;
        }
    }
    z
}

/// Softmax probabilities and `-ln p_label`, computed stably.
fn softmax_nll<T: Real>(z: &[T; CLASSES], label: usize) -> ([T; CLASSES], T) {
    let top = z.iter().copied().fold(T::neg_infinity(), T::max);
    let mut p = [T::zero(); CLASSES];
    let mut total = T::zero();
    for (pk, &zk) in p.iter_mut().zip(z) {
        *pk = (zk - top).exp();
        total += *pk;
    }
    for pk in &mut p {
        *pk /= total;
    }
    let nll = total.ln() - (z[label] - top);
    (p, nll)
}

/// Mean cross-entropy over `rows` of `ds` and its exact gradient.
pub fn local_loss_grad<T: Real>(w: &[T], ds: &Dataset<T>, rows: &[usize]) -> (T, Vec<T>) {
    assert_eq!(w.len(), PARAMS, "parameter vector has the wrong length");
    let mut grad = vec![T::zero(); PARAMS];
    if rows.is_empty() {
        return (T::zero(), grad);
    }
    let mut loss = T::zero();
    for &r in rows {
        let x = ds.row(r);
        let label = usize::from(ds.labels[r]);
        let (mut p, nll) = softmax_nll(&logits(w, x), label);
        loss += nll;
        p[label] -= T::one();
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            for (g, &pk) in grad[i * CLASSES..(i + 1) * CLASSES].iter_mut().zip(&p) {
                *g += xi * pk;
            }
        }
        for (g, &pk) in grad[BIAS..].iter_mut().zip(&p) {
            *g += pk;
        }
    }
    let n = T::from_count(rows.len());
    for g in &mut grad {
        *g /= n;
    }
    (loss / n, grad)
}

/// Mean cross-entropy and accuracy over the whole dataset.
pub fn evaluate<T: Real>(w: &[T], ds: &Dataset<T>) -> (T, T) {
    assert_eq!(w.len(), PARAMS, "parameter vector has the wrong length");
    if ds.is_empty() {
        return (T::zero(), T::zero());
    }
    let mut loss = T::zero();
    let mut correct = 0usize;
    for r in 0..ds.len() {
        let z = logits(w, ds.row(r));
        let label = usize::from(ds.labels[r]);
        loss += softmax_nll(&z, label).1;
        let predicted = (0..CLASSES).fold(0, |best, k| if z[k] > z[best] { k } else { best });
        if predicted == label {
            correct += 1;
        }
    }
    let n = T::from_count(ds.len());
    (loss / n, T::from_count(correct) / n)
}
