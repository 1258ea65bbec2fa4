//! Hard thresholding and restricted sparse norms.

use ndarray::{Array1, ArrayView1};

/// Result of keeping the `k` largest-magnitude entries of a vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdedVector {
    pub values: Array1<f64>,
    /// Kept indices, in increasing order.
    pub support: Vec<usize>,
}

impl ThresholdedVector {
    pub fn norm(&self) -> f64 {
        self.values.dot(&self.values).sqrt()
    }
}

/// Indices of the `k` largest-magnitude entries; ties go to the lower index.
pub fn top_k_indices(v: ArrayView1<f64>, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[j].abs().total_cmp(&v[i].abs()).then(i.cmp(&j)));
    order.truncate(k.min(v.len()));
    order.sort_unstable();
    order
}

/// Keeps the `k` entries of largest absolute value and zeroes the rest.
pub fn top_k(v: ArrayView1<f64>, k: usize) -> ThresholdedVector {
    let support = top_k_indices(v, k);
    let mut values = Array1::zeros(v.len());
    for &i in &support {
        values[i] = v[i];
    }
    ThresholdedVector { values, support }
}

/// ℓ₂ norm of the `s` largest-magnitude entries, i.e. the largest ℓ₂ norm of
/// any restriction of `v` to at most `s` coordinates.
pub fn sparse_restricted_l2(v: ArrayView1<f64>, s: usize) -> f64 {
    let mut sq: Vec<f64> = v.iter().map(|x| x * x).collect();
    let s = s.min(sq.len());
    if s == 0 {
        return 0.0;
    }
    if s < sq.len() {
        sq.select_nth_unstable_by(s - 1, |a, b| b.total_cmp(a));
    }
    sq[..s].iter().sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn keeps_largest_magnitudes() {
        let t = top_k(array![3.0, -5.0, 1.0, 0.0].view(), 2);
        assert_eq!(t.values, array![3.0, -5.0, 0.0, 0.0]);
        assert_eq!(t.support, vec![0, 1]);
    }

    #[test]
    fn full_length_is_identity() {
        let v = array![0.5, -2.0, 7.0];
        assert_eq!(top_k(v.view(), 3).values, v);
        assert_eq!(top_k(v.view(), 10).values, v);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let t = top_k(array![2.0, -2.0].view(), 1);
        assert_eq!(t.values, array![2.0, 0.0]);
        let t = top_k(array![0.0, 1.0, -1.0, 1.0].view(), 2);
        assert_eq!(t.support, vec![1, 2]);
    }

    #[test]
    fn restricted_norm_examples() {
        assert_eq!(sparse_restricted_l2(array![3.0, 4.0, 0.0].view(), 2), 5.0);
        assert_eq!(sparse_restricted_l2(Array1::zeros(4).view(), 2), 0.0);
        let v = array![1.0, -2.0, 2.0];
        assert!((sparse_restricted_l2(v.view(), 5) - 3.0).abs() < 1e-15);
    }
}
