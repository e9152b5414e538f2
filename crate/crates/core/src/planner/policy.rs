//! Masked softmax over the legal action indices.

use rand::Rng;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MaskError {
    #[error("no legal actions")]
    NoLegalActions,
    #[error("action index {0} outside the logit vector")]
    OutOfRange(usize),
}

/// Softmax restricted to `legal`; every other entry is exactly zero.
pub fn masked_distribution(logits: &[f64], legal: &[usize]) -> Result<Vec<f64>, MaskError> {
    if legal.is_empty() {
        return Err(MaskError::NoLegalActions);
    }
    if let Some(&bad) = legal.iter().find(|&&i| i >= logits.len()) {
        return Err(MaskError::OutOfRange(bad));
    }
    let max = legal.iter().map(|&i| logits[i]).fold(f64::NEG_INFINITY, f64::max);
    let mut p = vec![0.0; logits.len()];
    let mut total = 0.0;
    for &i in legal {
        let e = (logits[i] - max).exp();
        p[i] = e;
        total += e;
    }
    for &i in legal {
        p[i] /= total;
    }
    Ok(p)
}

/// Draws an index from `probs`, restricted to `legal` (in the given order).
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], legal: &[usize], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &i in legal {
        acc += probs[i];
        if u < acc {
            return i;
        }
    }
    *legal.last().expect("non-empty legal set")
}

/// Highest-probability legal index; ties go to the smaller index.
pub fn greedy_index(logits: &[f64], legal: &[usize]) -> Option<usize> {
    legal
        .iter()
        .copied()
        .reduce(|best, i| if logits[i] > logits[best] { i } else { best })
}
