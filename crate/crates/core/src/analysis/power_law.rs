use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FitError {
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("point {index} is not strictly positive")]
    NonPositivePoint { index: usize },
    #[error("all x values are equal; slope is undefined")]
    DegenerateX,
}

/// `y = a * x^b`, fitted by ordinary least squares on `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit<T> {
    pub a: T,
    pub b: T,
    /// Coefficient of determination in log-log space (the fit's own space).
    pub r_squared: T,
    /// Coefficient of determination of the back-transformed curve on raw `y`.
    pub r_squared_linear: T,
    pub n_points: usize,
}

impl<T: Scalar> PowerLawFit<T> {
    pub fn predict(&self, x: T) -> T {
        self.a * x.powf(self.b)
    }
}

fn r_squared<T: Scalar>(observed: &[T], fitted: &[T]) -> T {
    let n = T::from_usize_lossy(observed.len());
    let mean = observed.iter().copied().sum::<T>() / n;
    let ss_tot: T = observed.iter().map(|&y| (y - mean) * (y - mean)).sum();
    let ss_res: T = observed
        .iter()
        .zip(fitted)
        .map(|(&y, &f)| (y - f) * (y - f))
        .sum();
    if ss_tot == T::zero() {
        return if ss_res == T::zero() { T::one() } else { T::zero() };
    }
    T::one() - ss_res / ss_tot
}

pub fn fit_power_law<T: Scalar>(points: &[(T, T)]) -> Result<PowerLawFit<T>, FitError> {
    if points.len() < 2 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    if let Some(index) = points
        .iter()
        .position(|&(x, y)| !(x > T::zero() && y > T::zero()) || !x.is_finite() || !y.is_finite())
    {
        return Err(FitError::NonPositivePoint { index });
    }
    let lx: Vec<T> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<T> = points.iter().map(|p| p.1.ln()).collect();
    let n = T::from_usize_lossy(points.len());
    let mx = lx.iter().copied().sum::<T>() / n;
    let my = ly.iter().copied().sum::<T>() / n;
    let sxx: T = lx.iter().map(|&x| (x - mx) * (x - mx)).sum();
    if sxx == T::zero() {
        return Err(FitError::DegenerateX);
    }
    let sxy: T = lx.iter().zip(&ly).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let intercept = my - b * mx;
    let a = intercept.exp();

    let fitted_log: Vec<T> = lx.iter().map(|&x| intercept + b * x).collect();
    let ys: Vec<T> = points.iter().map(|p| p.1).collect();
    let fitted: Vec<T> = points.iter().map(|p| a * p.0.powf(b)).collect();
    Ok(PowerLawFit {
        a,
        b,
        r_squared: r_squared(&ly, &fitted_log),
        r_squared_linear: r_squared(&ys, &fitted),
        n_points: points.len(),
    })
}
