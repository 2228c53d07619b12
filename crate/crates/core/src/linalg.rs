//! Small dense solves with a 1-norm condition estimate.

use nalgebra::{DMatrix, DVector};

/// Solution of a dense system together with `κ₁(A) = ‖A‖₁ ‖A⁻¹‖₁`.
#[derive(Clone, Debug)]
pub struct DenseSolve {
    pub x: DVector<f64>,
    pub condition: f64,
}

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// LU with partial pivoting. Returns `Err(condition)` when the matrix is
/// singular, non-finite or its condition estimate exceeds `max_condition`.
pub fn lu_solve(a: &DMatrix<f64>, b: &DVector<f64>, max_condition: f64) -> Result<DenseSolve, f64> {
    if a.nrows() == 0 {
        return Ok(DenseSolve { x: DVector::zeros(0), condition: 1.0 });
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(f64::INFINITY);
    }
    let lu = a.clone().lu();
    let inv = lu.try_inverse().ok_or(f64::INFINITY)?;
    let condition = norm1(a) * norm1(&inv);
    if !condition.is_finite() || condition > max_condition {
        return Err(condition);
    }
    let x = a.clone().lu().solve(b).ok_or(condition)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(condition);
    }
    Ok(DenseSolve { x, condition })
}
