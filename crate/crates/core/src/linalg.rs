use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

/// Relative pivot size below which a system is treated as singular.
const PIVOT_TOL: f64 = 1e-12;

/// Solves `a x = b` by partially pivoted LU. Returns `None` when the matrix is
/// numerically singular.
pub(crate) fn solve_square(a: DMatrix<f64>, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    debug_assert_eq!(n, b.len());
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    let lu = a.lu();
    let u = lu.u();
    let min_pivot = (0..n).fold(f64::INFINITY, |m, i| m.min(u[(i, i)].abs()));
    if min_pivot <= PIVOT_TOL * scale {
        return None;
    }
    let x = lu.solve(&DVector::from_column_slice(b))?;
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(x.iter().copied().collect())
}
