use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Projects rows onto their leading principal components.
///
/// Works through the n×n Gram matrix of the centered rows, so cost is
/// independent of the row width. Returns at most `min(components, n)`
/// columns; components with (numerically) zero variance are dropped.
/// Each component's sign is fixed so its largest-magnitude score is positive.
pub fn pca_project(rows: &[Vec<f64>], components: usize) -> Result<Vec<Vec<f64>>> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::Empty("PCA input"));
    }
    let width = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != width) {
        return Err(Error::shape("PCA row", width, r.len()));
    }
    let mut mean = vec![0.0; width];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    let gram = DMatrix::from_fn(n, n, |i, j| {
        centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum::<f64>()
    });
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(*v));
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&c| eig.eigenvalues[c] > top * 1e-12 && eig.eigenvalues[c] > 0.0)
        .take(components)
        .collect();

    let mut scores = vec![Vec::with_capacity(keep.len()); n];
    for &c in &keep {
        let scale = eig.eigenvalues[c].sqrt();
        let col = eig.eigenvectors.column(c);
        let pivot = col
            .iter()
            .copied()
            .fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for (i, s) in scores.iter_mut().enumerate() {
            s.push(sign * col[i] * scale);
        }
    }
    Ok(scores)
}
