//! Reconstruction and classification losses with their gradients.

use super::matrix::Matrix;
use crate::error::{Error, Result};

fn check_same_shape(context: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            context,
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    Ok(())
}

/// Mean over every element of the squared difference. An empty batch has loss 0.
pub fn mse_loss(x: &Matrix, x_hat: &Matrix) -> Result<f64> {
    check_same_shape("mse_loss", x, x_hat)?;
    let n = x.as_slice().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = x
        .as_slice()
        .iter()
        .zip(x_hat.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / n as f64)
}

/// ∂mse/∂x_hat = 2·(x_hat − x)/size.
pub fn mse_gradient(x: &Matrix, x_hat: &Matrix) -> Result<Matrix> {
    check_same_shape("mse_gradient", x, x_hat)?;
    let n = x.as_slice().len().max(1) as f64;
    let data = x
        .as_slice()
        .iter()
        .zip(x_hat.as_slice())
        .map(|(a, b)| 2.0 * (b - a) / n)
        .collect();
    Matrix::from_vec(x.rows(), x.cols(), data)
}

/// Mean over features of the squared error, one value per row.
pub fn per_sample_mse(x: &Matrix, x_hat: &Matrix) -> Result<Vec<f64>> {
    check_same_shape("per_sample_mse", x, x_hat)?;
    let d = x.cols().max(1) as f64;
    Ok((0..x.rows())
        .map(|r| {
            x.row(r)
                .iter()
                .zip(x_hat.row(r))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / d
        })
        .collect())
}

/// Numerically stable row softmax.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn check_labels(logits: &Matrix, labels: &[usize]) -> Result<()> {
    if labels.len() != logits.rows() {
        return Err(Error::shape("cross_entropy labels", logits.rows(), labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= logits.cols()) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            classes: logits.cols(),
        });
    }
    Ok(())
}

/// Mean negative log-softmax probability of the true class.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(logits, labels)?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    Ok(total / labels.len() as f64)
}

/// ∂ce/∂logits = (softmax − onehot)/batch.
pub fn cross_entropy_gradient(logits: &Matrix, labels: &[usize]) -> Result<Matrix> {
    check_labels(logits, labels)?;
    let mut g = softmax_rows(logits);
    let n = labels.len().max(1) as f64;
    for (r, &y) in labels.iter().enumerate() {
        let row = g.row_mut(r);
        row[y] -= 1.0;
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    Ok(g)
}
