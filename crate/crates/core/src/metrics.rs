//! MAE, rMAE and aCC for label regression.
//!
//! Predictions and targets are `S × D` tables given as rows. Each row is one
//! sample holding `N` points of `point_dim` coordinates laid out point after
//! point, so `D = N · point_dim`.
//!
//! * MAE defaults to the Euclidean distance per sample and point. Mean and
//!   population std are taken over all `S · N` distances.
//!   [`MaeConvention::PerCoordinate`] uses `|pred − target|` per entry instead.
//! * rMAE is the mean absolute error of each output column divided by that
//!   column's target std, then averaged over the columns whose std exceeds
//!   [`ZERO_STD`].
//! * aCC is the Pearson correlation of each column, averaged over all columns.
//!   A column where either series is constant contributes 0.
//!
//! All standard deviations are population (divide by `S`).

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Standard deviations at or below this are treated as zero.
pub const ZERO_STD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaeConvention {
    /// Distance between `point_dim`-vectors.
    Euclidean { point_dim: usize },
    /// Absolute difference per output entry.
    PerCoordinate,
}

impl MaeConvention {
    pub fn name(&self) -> &'static str {
        match self {
            MaeConvention::Euclidean { .. } => "euclidean",
            MaeConvention::PerCoordinate => "per-coordinate",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionReport {
    pub mae_mean: f64,
    pub mae_std: f64,
    pub rmae: f64,
    pub acc: f64,
    pub n_samples: usize,
    pub n_outputs: usize,
    pub convention: MaeConvention,
}

fn check_shapes<R: AsRef<[f64]>>(pred: &[R], target: &[R]) -> Result<usize> {
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch { expected: target.len(), got: pred.len() });
    }
    let Some(first) = target.first() else {
        return Err(Error::EmptyEvaluationSet);
    };
    let d = first.as_ref().len();
    if d == 0 {
        return Err(Error::Empty("output row"));
    }
    for (p, t) in pred.iter().zip(target) {
        if t.as_ref().len() != d {
            return Err(Error::ShapeMismatch { expected: d, got: t.as_ref().len() });
        }
        if p.as_ref().len() != d {
            return Err(Error::ShapeMismatch { expected: d, got: p.as_ref().len() });
        }
    }
    Ok(d)
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

fn column<R: AsRef<[f64]>>(rows: &[R], d: usize) -> Vec<f64> {
    rows.iter().map(|r| r.as_ref()[d]).collect()
}

/// Mean and population std of the per-point errors.
pub fn mae<R: AsRef<[f64]>>(pred: &[R], target: &[R], convention: MaeConvention) -> Result<(f64, f64)> {
    let d = check_shapes(pred, target)?;
    let mut errors = Vec::new();
    match convention {
        MaeConvention::Euclidean { point_dim } => {
            if point_dim == 0 || d % point_dim != 0 {
                return Err(Error::ShapeMismatch { expected: point_dim, got: d });
            }
            errors.reserve(pred.len() * d / point_dim);
            for (p, t) in pred.iter().zip(target) {
                for (pp, tp) in p.as_ref().chunks_exact(point_dim).zip(t.as_ref().chunks_exact(point_dim)) {
                    let sq: f64 = pp.iter().zip(tp).map(|(a, b)| (a - b) * (a - b)).sum();
                    errors.push(libm::sqrt(sq));
                }
            }
        }
        MaeConvention::PerCoordinate => {
            for (p, t) in pred.iter().zip(target) {
                errors.extend(p.as_ref().iter().zip(t.as_ref()).map(|(a, b)| libm::fabs(a - b)));
            }
        }
    }
    Ok(mean_and_std(&errors))
}

pub fn rmae<R: AsRef<[f64]>>(pred: &[R], target: &[R]) -> Result<f64> {
    let d = check_shapes(pred, target)?;
    let (mut sum, mut used) = (0.0, 0usize);
    for k in 0..d {
        let t = column(target, k);
        let (_, std) = mean_and_std(&t);
        if std <= ZERO_STD {
            continue;
        }
        let abs_err = pred.iter().zip(&t).map(|(p, t)| libm::fabs(p.as_ref()[k] - t)).sum::<f64>() / t.len() as f64;
        sum += abs_err / std;
        used += 1;
    }
    if used == 0 {
        return Err(Error::ZeroVariance);
    }
    Ok(sum / used as f64)
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, sx) = mean_and_std(x);
    let (my, sy) = mean_and_std(y);
    if sx <= ZERO_STD || sy <= ZERO_STD {
        return 0.0;
    }
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.len() as f64;
    (cov / (sx * sy)).clamp(-1.0, 1.0)
}

pub fn acc<R: AsRef<[f64]>>(pred: &[R], target: &[R]) -> Result<f64> {
    let d = check_shapes(pred, target)?;
    if target.len() < 2 {
        return Err(Error::TooFewSamples { got: target.len(), need: 2 });
    }
    let total: f64 = (0..d).map(|k| pearson(&column(pred, k), &column(target, k))).sum();
    Ok(total / d as f64)
}

pub fn report<R: AsRef<[f64]>>(pred: &[R], target: &[R], convention: MaeConvention) -> Result<RegressionReport> {
    let (mae_mean, mae_std) = mae(pred, target, convention)?;
    Ok(RegressionReport {
        mae_mean,
        mae_std,
        rmae: rmae(pred, target)?,
        acc: acc(pred, target)?,
        n_samples: target.len(),
        n_outputs: target[0].as_ref().len(),
        convention,
    })
}
