//! Small dense helpers shared across modules.

use nalgebra::{DMatrix, DVector};

/// Largest singular value (spectral norm). Zero for empty matrices.
pub fn sigma_max(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Smallest of the `min(rows, cols)` singular values.
pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().min()
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Concatenates equally sized vectors.
pub fn stack(parts: &[DVector<f64>]) -> DVector<f64> {
    let n: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(n);
    let mut off = 0;
    for p in parts {
        out.rows_mut(off, p.len()).copy_from(p);
        off += p.len();
    }
    out
}

/// Splits a stacked vector into `count` blocks of `size`.
pub fn unstack(v: &DVector<f64>, count: usize, size: usize) -> Vec<DVector<f64>> {
    (0..count).map(|i| v.rows(i * size, size).into_owned()).collect()
}

/// `‖a − b‖ / max(‖b‖, floor)`.
pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>, floor: f64) -> f64 {
    (a - b).norm() / b.norm().max(floor)
}
