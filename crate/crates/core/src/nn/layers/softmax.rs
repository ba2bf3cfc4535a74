use crate::nn::scalar::Scalar;

/// Max-shifted softmax of one logit vector.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of one sample: `(loss, probabilities)` with
/// `loss = -log p[label]`, computed as `log Σ exp(z - max) - (z[label] - max)`.
pub fn softmax_xent<T: Scalar>(logits: &[T], label: usize) -> (T, Vec<T>) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let sum: T = logits.iter().map(|&z| (z - max).exp()).sum();
    let loss = sum.ln() - (logits[label] - max);
    (loss, softmax(logits))
}

/// Mean loss over a batch of `classes`-wide logit rows, the probabilities,
/// and the gradient `(p - onehot) / batch`.
pub fn softmax_xent_batch<T: Scalar>(logits: &[T], labels: &[usize], classes: usize) -> (T, Vec<T>, Vec<T>) {
    let batch = labels.len();
    let scale = T::one() / T::of(batch.max(1) as f64);
    let mut loss = T::zero();
    let mut probs = Vec::with_capacity(logits.len());
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &label) in logits.chunks_exact(classes).zip(labels) {
        let (l, p) = softmax_xent(row, label);
        loss += l;
        for (c, &pc) in p.iter().enumerate() {
            let onehot = if c == label { T::one() } else { T::zero() };
            grad.push((pc - onehot) * scale);
        }
        probs.extend(p);
    }
    (loss * scale, probs, grad)
}
