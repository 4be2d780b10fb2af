//! Small numeric helpers shared across the crate.

/// Euclidean norm.
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Dot product. Panics on length mismatch.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pairwise (tree) summation with a fixed reduction order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Arithmetic mean via pairwise summation.
pub fn pairwise_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(values) / values.len() as f64
}

/// Streaming pairwise reduction over fixed-length vectors.
///
/// Partial sums are combined binary-counter style, so the reduction tree
/// depends only on how many vectors were pushed, never on buffering or
/// scheduling. Memory is O(log N) vectors.
pub struct TreeAccumulator {
    dim: usize,
    levels: Vec<Option<Vec<f64>>>,
    count: usize,
}

impl TreeAccumulator {
    pub fn new(dim: usize) -> Self {
        Self { dim, levels: Vec::new(), count: 0 }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.dim);
        let mut carry = v.to_vec();
        let mut level = 0;
        loop {
            if level == self.levels.len() {
                self.levels.push(Some(carry));
                break;
            }
            match self.levels[level].take() {
                None => {
                    self.levels[level] = Some(carry);
                    break;
                }
                Some(existing) => {
                    for (c, e) in carry.iter_mut().zip(&existing) {
                        *c += e;
                    }
                    level += 1;
                }
            }
        }
        self.count += 1;
    }

    /// Total of all pushed vectors (zeros when nothing was pushed).
    pub fn sum(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.dim];
        for level in self.levels.iter().flatten() {
            for (t, l) in total.iter_mut().zip(level) {
                *t += l;
            }
        }
        total
    }

    /// Mean of all pushed vectors.
    pub fn mean(&self) -> Vec<f64> {
        let mut total = self.sum();
        if self.count > 0 {
            let inv = 1.0 / self.count as f64;
            for t in &mut total {
                *t *= inv;
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_inputs() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-12);
    }

    #[test]
    fn tree_accumulator_is_chunking_independent() {
        let vectors: Vec<Vec<f64>> = (0..37)
            .map(|i| vec![(i as f64).cos(), (i as f64 * 0.7).sin(), i as f64])
            .collect();
        let mut a = TreeAccumulator::new(3);
        for v in &vectors {
            a.push(v);
        }
        // Same pushes, same tree: the reduction depends only on count.
        let mut b = TreeAccumulator::new(3);
        for v in &vectors {
            b.push(v);
        }
        assert_eq!(a.sum(), b.sum());
        assert_eq!(a.count(), 37);
    }

    #[test]
    fn tree_accumulator_mean_of_constant_is_exact() {
        let mut acc = TreeAccumulator::new(2);
        for _ in 0..64 {
            acc.push(&[0.5, -2.0]);
        }
        assert_eq!(acc.mean(), vec![0.5, -2.0]);
    }
}
