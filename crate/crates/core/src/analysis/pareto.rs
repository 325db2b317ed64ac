use std::cmp::Ordering;

use crate::scalar::Scalar;

/// Points not dominated by any point of smaller-or-equal size with a strictly
/// higher score, sorted by size then score.
pub fn pareto_frontier<T: Scalar>(points: &[(T, T)]) -> Vec<(T, T)> {
    let mut sorted: Vec<(T, T)> = points.to_vec();
    sorted.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal))
    });
    let mut out = Vec::new();
    let mut best_so_far = T::neg_infinity();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        // Best score among all points with size <= this group's size.
        let group_best = sorted[i..j]
            .iter()
            .map(|p| p.1)
            .fold(best_so_far, T::max);
        for &p in &sorted[i..j] {
            if p.1 >= group_best {
                out.push(p);
            }
        }
        best_so_far = group_best;
        i = j;
    }
    out
}
