use alloc::vec::Vec;

use super::{FlatVector, GradVector, ParamVector};

/// Central-difference gradient `(f(θ+h·eᵢ) − f(θ−h·eᵢ)) / 2h` per coordinate.
///
/// Costs two evaluations of `loss` per parameter; meant as a test oracle.
pub fn fd_gradient<E>(
    mut loss: impl FnMut(&ParamVector) -> Result<f64, E>,
    theta: &ParamVector,
    h: f64,
) -> Result<GradVector, E> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut grad = Vec::with_capacity(theta.total_dim());
    for (i, &x) in theta.values().iter().enumerate() {
        let plus = loss(&theta.with_coordinate(i, x + h))?;
        let minus = loss(&theta.with_coordinate(i, x - h))?;
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(GradVector::from_parts(theta.layout().clone(), grad))
}
