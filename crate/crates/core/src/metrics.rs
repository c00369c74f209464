//! Localization error metrics.
//!
//! Note the MAE convention: for 2-D positions it is the mean of
//! `(|dx| + |dy|) / 2`, i.e. half the usual L1 mean. In general it is the
//! per-dimension mean absolute error, `(1/N) sum_i (sum_d |e_id|) / No`.
//! RMSE is over Euclidean position errors, `sqrt((1/N) sum_i |e_i|^2)`.

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult<T> {
    pub mae: T,
    pub rmse: T,
    /// Euclidean error of every sample.
    pub per_sample_errors: Vec<T>,
}

fn check_pairs<T>(truth: &[Vec<T>], pred: &[Vec<T>]) -> Result<usize> {
    check_dim("prediction count", truth.len(), pred.len())?;
    let Some(first) = truth.first() else {
        return Err(Error::Usage("metrics need at least one sample".into()));
    };
    let dims = first.len();
    if dims == 0 {
        return Err(Error::Usage("metrics need at least one target dimension".into()));
    }
    for (t, p) in truth.iter().zip(pred) {
        check_dim("truth width", dims, t.len())?;
        check_dim("prediction width", dims, p.len())?;
    }
    Ok(dims)
}

pub fn mae<T: Scalar>(truth: &[Vec<T>], pred: &[Vec<T>]) -> Result<T> {
    let dims = check_pairs(truth, pred)?;
    let total: T = truth
        .iter()
        .zip(pred)
        .map(|(t, p)| t.iter().zip(p).map(|(a, b)| (*a - *b).abs()).sum::<T>() / T::of_usize(dims))
        .sum();
    Ok(total / T::of_usize(truth.len()))
}

fn squared_distance<T: Scalar>(t: &[T], p: &[T]) -> T {
    t.iter().zip(p).map(|(a, b)| (*a - *b) * (*a - *b)).sum()
}

pub fn rmse<T: Scalar>(truth: &[Vec<T>], pred: &[Vec<T>]) -> Result<T> {
    check_pairs(truth, pred)?;
    let total: T = truth
        .iter()
        .zip(pred)
        .map(|(t, p)| squared_distance(t, p))
        .sum();
    Ok((total / T::of_usize(truth.len())).sqrt())
}

pub fn evaluate<T: Scalar>(truth: &[Vec<T>], pred: &[Vec<T>]) -> Result<EvalResult<T>> {
    Ok(EvalResult {
        mae: mae(truth, pred)?,
        rmse: rmse(truth, pred)?,
        per_sample_errors: truth
            .iter()
            .zip(pred)
            .map(|(t, p)| squared_distance(t, p).sqrt())
            .collect(),
    })
}

/// Per-sample error table. Two-dimensional targets use the columns
/// `x_true,y_true,x_pred,y_pred,abs_err_x,abs_err_y,eucl_err`; other widths
/// use `true_d`, `pred_d`, `abs_err_d` per dimension, then `eucl_err`.
pub fn write_errors_csv<T: Scalar, W: std::io::Write>(out: W, truth: &[Vec<T>], pred: &[Vec<T>]) -> Result<()> {
    let dims = check_pairs(truth, pred)?;
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = if dims == 2 {
        ["x_true", "y_true", "x_pred", "y_pred", "abs_err_x", "abs_err_y", "eucl_err"]
            .map(String::from)
            .to_vec()
    } else {
        let mut h: Vec<String> = (0..dims).map(|d| format!("true_{d}")).collect();
        h.extend((0..dims).map(|d| format!("pred_{d}")));
        h.extend((0..dims).map(|d| format!("abs_err_{d}")));
        h.push("eucl_err".into());
        h
    };
    w.write_record(&header)?;
    for (t, p) in truth.iter().zip(pred) {
        let abs = t.iter().zip(p).map(|(a, b)| (*a - *b).abs());
        let row: Vec<String> = t
            .iter()
            .chain(p)
            .copied()
            .chain(abs)
            .chain(std::iter::once(squared_distance(t, p).sqrt()))
            .map(|v| v.to_string())
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
