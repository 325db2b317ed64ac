use serde::{Deserialize, Serialize};

use super::correlation::pearson;
use crate::scalar::Scalar;

/// One evaluated transition: how close the input already was to the target,
/// and how close the prediction got.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainRow<T> {
    /// `sim(S_t, S_{t+1})`
    pub baseline: T,
    /// `sim(prediction, S_{t+1})`
    pub predicted: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainPoint<T> {
    pub x: T,
    pub gain: T,
    /// Largest gain attainable at `x` when similarity is bounded by 1.
    pub ceiling: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainAnalysis<T> {
    pub points: Vec<GainPoint<T>>,
    /// Pearson correlation between the baseline and predicted series.
    pub pearson: Option<T>,
}

pub fn gain_analysis<T: Scalar>(rows: &[GainRow<T>]) -> GainAnalysis<T> {
    let points = rows
        .iter()
        .map(|r| GainPoint {
            x: r.baseline,
            gain: r.predicted - r.baseline,
            ceiling: T::one() - r.baseline,
        })
        .collect();
    let xs: Vec<T> = rows.iter().map(|r| r.baseline).collect();
    let ys: Vec<T> = rows.iter().map(|r| r.predicted).collect();
    GainAnalysis {
        points,
        pearson: pearson(&xs, &ys).ok().flatten(),
    }
}
