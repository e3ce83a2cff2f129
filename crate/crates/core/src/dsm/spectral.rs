//! Spectral-norm projection by power iteration.

use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, Tensor};

/// Persistent left singular vector estimate for one weight matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerIterationState {
    pub u: Vec<f64>,
}

impl PowerIterationState {
    pub fn new(rows: usize) -> Self {
        let v = 1.0 / (rows as f64).sqrt();
        PowerIterationState { u: vec![v; rows] }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

/// Largest singular value estimate of the row-major `rows × cols` matrix
/// after `iters` power iterations warm-started from `state`.
pub fn estimate_spectral_norm(
    weight: &[f64],
    rows: usize,
    cols: usize,
    state: &mut PowerIterationState,
    iters: usize,
) -> f64 {
    debug_assert_eq!(weight.len(), rows * cols);
    if state.u.len() != rows {
        *state = PowerIterationState::new(rows);
    }
    let mut sigma = 0.0;
    let mut v = vec![0.0; cols];
    for _ in 0..iters.max(1) {
        // v = Wᵀu
        v.fill(0.0);
        for (r, &ur) in state.u.iter().enumerate() {
            axpy(ur, &weight[r * cols..(r + 1) * cols], &mut v);
        }
        if normalize(&mut v) == 0.0 {
            // u is orthogonal to the row space; restart from a basis vector.
            state.u.fill(0.0);
            state.u[0] = 1.0;
            v.fill(0.0);
            axpy(1.0, &weight[..cols], &mut v);
            if normalize(&mut v) == 0.0 {
                return estimate_by_rows(weight, rows, cols);
            }
        }
        // u = Wv
        for r in 0..rows {
            state.u[r] = dot(&weight[r * cols..(r + 1) * cols], &v);
        }
        sigma = normalize(&mut state.u);
    }
    sigma
}

/// Fallback when power iteration degenerates: the largest row norm, which
/// is zero exactly when the matrix is.
fn estimate_by_rows(weight: &[f64], rows: usize, cols: usize) -> f64 {
    (0..rows)
        .map(|r| {
            dot(
                &weight[r * cols..(r + 1) * cols],
                &weight[r * cols..(r + 1) * cols],
            )
            .sqrt()
        })
        .fold(0.0, f64::max)
}

/// Scale `weight` in place so its spectral norm is `min(current, target)`.
/// Returns the norm estimate before projection.
pub fn project_spectral_norm(
    weight: &mut [f64],
    rows: usize,
    cols: usize,
    target: f64,
    state: &mut PowerIterationState,
    iters: usize,
) -> f64 {
    let sigma = estimate_spectral_norm(weight, rows, cols, state, iters);
    if sigma > target {
        let k = target / sigma;
        for w in weight.iter_mut() {
            *w *= k;
        }
    }
    sigma
}

/// Rescale a matrix so that its spectral norm does not exceed `target`;
/// matrices already below the target are returned unchanged.
pub fn spectral_normalize(weight: &Tensor, target: f64, iters: usize) -> Result<Tensor> {
    if iters < 1 {
        return Err(Error::Param("power iteration needs iters >= 1".into()));
    }
    if !(target > 0.0) {
        return Err(Error::Param(format!(
            "spectral target must be > 0, got {target}"
        )));
    }
    let (rows, cols) = match weight.shape() {
        &[r, c] => (r, c),
        other => return Err(Error::Shape(format!("expected a matrix, got {other:?}"))),
    };
    let mut out = weight.clone();
    let mut state = PowerIterationState::new(rows);
    project_spectral_norm(out.data_mut(), rows, cols, target, &mut state, iters);
    Ok(out)
}
