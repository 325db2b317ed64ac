use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorrelationError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 paired observations, got {0}")]
    TooFewPoints(usize),
    #[error("series contains a non-finite value")]
    NonFinite,
}

/// Pearson, Spearman and Kendall tau-b of two paired series. A coefficient
/// is `None` when one of the series has zero variance (all ties).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult<T> {
    pub pearson: Option<T>,
    pub spearman: Option<T>,
    pub kendall: Option<T>,
    pub n: usize,
}

fn check<T: Scalar>(xs: &[T], ys: &[T]) -> Result<(), CorrelationError> {
    if xs.len() != ys.len() {
        return Err(CorrelationError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(CorrelationError::TooFewPoints(xs.len()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(CorrelationError::NonFinite);
    }
    Ok(())
}

fn clamp_unit<T: Scalar>(v: T) -> T {
    v.max(-T::one()).min(T::one())
}

fn cmp<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

pub fn correlations<T: Scalar>(xs: &[T], ys: &[T]) -> Result<CorrelationResult<T>, CorrelationError> {
    check(xs, ys)?;
    Ok(CorrelationResult {
        pearson: pearson_unchecked(xs, ys),
        spearman: pearson_unchecked(&average_ranks(xs), &average_ranks(ys)),
        kendall: kendall_unchecked(xs, ys),
        n: xs.len(),
    })
}

pub fn pearson<T: Scalar>(xs: &[T], ys: &[T]) -> Result<Option<T>, CorrelationError> {
    check(xs, ys)?;
    Ok(pearson_unchecked(xs, ys))
}

fn pearson_unchecked<T: Scalar>(xs: &[T], ys: &[T]) -> Option<T> {
    let n = T::from_usize_lossy(xs.len());
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return None;
    }
    Some(clamp_unit(sxy / (sxx.sqrt() * syy.sqrt())))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| cmp(&values[a], &values[b]));
    let mut ranks = vec![T::zero(); values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end
        let avg = T::from_usize_lossy(start + 1 + end) / T::lit(2.0);
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn tied_pairs<T: Scalar>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Counts strict inversions while merge-sorting `v` in place.
fn merge_count<T: Scalar>(v: &mut [T], buf: &mut Vec<T>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall's tau-b in `O(n log n)` (Knight's algorithm).
pub fn kendall_tau_b<T: Scalar>(xs: &[T], ys: &[T]) -> Result<Option<T>, CorrelationError> {
    check(xs, ys)?;
    Ok(kendall_unchecked(xs, ys))
}

fn kendall_unchecked<T: Scalar>(xs: &[T], ys: &[T]) -> Option<T> {
    let n = xs.len() as u64;
    let n0 = n * (n - 1) / 2;
    let mut pairs: Vec<(T, T)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pairs.sort_by(|a, b| cmp(&a.0, &b.0).then_with(|| cmp(&a.1, &b.1)));

    let sorted_x: Vec<T> = pairs.iter().map(|p| p.0).collect();
    let n1 = tied_pairs(&sorted_x);
    let mut n3 = 0u64;
    let mut run = 1u64;
    for w in pairs.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            n3 += run * (run - 1) / 2;
            run = 1;
        }
    }
    n3 += run * (run - 1) / 2;

    let mut y: Vec<T> = pairs.iter().map(|p| p.1).collect();
    let mut buf = Vec::with_capacity(y.len());
    let swaps = merge_count(&mut y, &mut buf);
    let n2 = tied_pairs(&y);

    let denom_x = n0 - n1;
    let denom_y = n0 - n2;
    if denom_x == 0 || denom_y == 0 {
        return None;
    }
    let s = n0 as i128 - n1 as i128 - n2 as i128 + n3 as i128 - 2 * swaps as i128;
    let num = T::from_i128(s)?;
    let den = (T::from_u64(denom_x)? * T::from_u64(denom_y)?).sqrt();
    Some(clamp_unit(num / den))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_linear() {
        let r = correlations(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        for v in [r.pearson, r.spearman, r.kendall] {
            assert!((v.unwrap() - 1.0f64).abs() < 1e-12);
        }
    }

    #[test]
    fn reversal() {
        let r = correlations(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        for v in [r.pearson, r.spearman, r.kendall] {
            assert!((v.unwrap() + 1.0f64).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_variance_is_null() {
        let r = correlations(&[1.0, 1.0, 1.0], &[3.0, 2.0, 1.0]).unwrap();
        assert_eq!(r.pearson, None);
        assert_eq!(r.spearman, None);
        assert_eq!(r.kendall, None);
    }

    #[test]
    fn errors() {
        assert_eq!(
            correlations(&[1.0, 2.0], &[1.0]),
            Err(CorrelationError::LengthMismatch(2, 1))
        );
        assert_eq!(
            correlations(&[1.0], &[1.0]),
            Err(CorrelationError::TooFewPoints(1))
        );
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn tau_b_with_ties() {
        // x = [1,1,2,3], y = [1,2,2,3]
        // pairs: (0,1) tie x; (0,2) C; (0,3) C; (1,2) tie y; (1,3) C; (2,3) C
        // S = 4, n0 = 6, n1 = 1, n2 = 1 -> 4 / 5
        let t: f64 = kendall_tau_b(&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 2.0, 3.0])
            .unwrap()
            .unwrap();
        assert!((t - 0.8).abs() < 1e-15);
    }
}
