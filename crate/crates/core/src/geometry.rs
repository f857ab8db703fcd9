//! Small vector helpers shared by the clustering and index code.

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Weighted mean of rows; `None` when the total weight is zero.
pub fn weighted_mean<'a>(
    rows: impl IntoIterator<Item = (&'a [f64], f64)>,
    dim: usize,
) -> Option<Vec<f64>> {
    let mut acc = vec![0.0; dim];
    let mut total = 0.0;
    for (row, w) in rows {
        for (a, x) in acc.iter_mut().zip(row) {
            *a += w * x;
        }
        total += w;
    }
    if total > 0.0 {
        acc.iter_mut().for_each(|a| *a /= total);
        Some(acc)
    } else {
        None
    }
}
