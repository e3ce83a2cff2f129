use super::Tensor;
use crate::error::{Error, Result};

/// Default node count for line integrals (four Simpson intervals).
pub const DEFAULT_SIMPSON_NODES: usize = 5;

/// Composite Simpson weights on `n` equispaced nodes over `[0, 1]`.
///
/// Odd `n` uses the 1/3 rule throughout. Even `n` (an odd number of
/// intervals) closes the last three intervals with the 3/8 rule, so `n = 4`
/// is the classic four-point 3/8 rule. Every variant is exact for cubics.
pub fn simpson_weights(n: usize) -> Result<Vec<f64>> {
    if n < 3 {
        return Err(Error::Param(format!(
            "Simpson quadrature needs at least 3 nodes, got {n}"
        )));
    }
    let intervals = n - 1;
    let h = 1.0 / intervals as f64;
    let mut w = vec![0.0; n];
    let third_intervals = if intervals % 2 == 0 {
        intervals
    } else {
        intervals - 3
    };
    for k in (0..third_intervals).step_by(2) {
        w[k] += h / 3.0;
        w[k + 1] += 4.0 * h / 3.0;
        w[k + 2] += h / 3.0;
    }
    if third_intervals != intervals {
        let k = third_intervals;
        let c = 3.0 * h / 8.0;
        w[k] += c;
        w[k + 1] += 3.0 * c;
        w[k + 2] += 3.0 * c;
        w[k + 3] += c;
    }
    Ok(w)
}

/// Line integral `∫₀¹ f(a + t(b−a))·(b−a) dt` by composite Simpson.
pub fn simpson_line_integral<F>(f: F, a: &Tensor, b: &Tensor, n_points: usize) -> Result<f64>
where
    F: FnMut(&Tensor) -> Tensor,
{
    simpson_line_integral_with_ends(f, a, b, n_points, None, None)
}

/// As [`simpson_line_integral`], reusing already-known field values at the
/// endpoints to save evaluations.
///
/// Node positions are formed as `(a·(n−1−j) + b·j)/(n−1)` and node values
/// are summed in mirrored pairs, so for symmetric rules (odd `n`, or `n = 4`)
/// swapping `a` and `b` negates the result bit for bit.
pub fn simpson_line_integral_with_ends<F>(
    mut f: F,
    a: &Tensor,
    b: &Tensor,
    n_points: usize,
    f_at_a: Option<&Tensor>,
    f_at_b: Option<&Tensor>,
) -> Result<f64>
where
    F: FnMut(&Tensor) -> Tensor,
{
    let weights = simpson_weights(n_points)?;
    a.check_same_shape(b)?;
    if a == b {
        return Ok(0.0);
    }
    let direction = b - a;
    let last = n_points - 1;
    let denom = last as f64;

    let mut values = Vec::with_capacity(n_points);
    for j in 0..n_points {
        let field = match (j, f_at_a, f_at_b) {
            (0, Some(fa), _) => fa.clone(),
            (0, None, _) => f(a),
            (j, _, Some(fb)) if j == last => fb.clone(),
            (j, _, None) if j == last => f(b),
            _ => {
                let (wa, wb) = ((last - j) as f64, j as f64);
                let p = a.zip_map(b, |x, y| (x * wa + y * wb) / denom);
                f(&p)
            }
        };
        field.check_same_shape(a)?;
        let g = field.dot(&direction);
        if !g.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite field value at quadrature node {j}"
            )));
        }
        values.push(g);
    }

    let mut total = 0.0;
    for j in 0..n_points / 2 {
        let k = last - j;
        total += weights[j] * values[j] + weights[k] * values[k];
    }
    if n_points % 2 == 1 {
        let mid = n_points / 2;
        total += weights[mid] * values[mid];
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Tensor {
        Tensor::from_vec(xs.to_vec())
    }

    #[test]
    fn weights_sum_to_one() {
        for n in 3..12 {
            let s: f64 = simpson_weights(n).unwrap().iter().sum();
            assert!((s - 1.0).abs() < 1e-14, "n={n}");
        }
    }

    #[test]
    fn too_few_nodes_is_an_error() {
        assert!(simpson_line_integral(|x| x.clone(), &v(&[0.0]), &v(&[1.0]), 2).is_err());
    }

    #[test]
    fn zero_length_path_is_exactly_zero() {
        let a = v(&[0.3, -1.2]);
        let r = simpson_line_integral(|_| panic!("no evaluation needed"), &a, &a, 5).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn gaussian_score_gives_exact_log_density_difference() {
        let r = simpson_line_integral(|x| -x, &v(&[0.0, 0.0]), &v(&[2.0, 0.0]), 5).unwrap();
        assert!((r + 2.0).abs() < 1e-12, "{r}");
    }

    #[test]
    fn four_point_rule_is_exact_for_cubic_potentials() {
        // g(x) = x^3 - 2x, ∇g = 3x^2 - 2.
        let grad = |x: &Tensor| x.map(|t| 3.0 * t * t - 2.0);
        let g = |t: f64| t.powi(3) - 2.0 * t;
        for n in [4, 5, 6, 7] {
            let r = simpson_line_integral(grad, &v(&[-0.7]), &v(&[1.9]), n).unwrap();
            assert!((r - (g(1.9) - g(-0.7))).abs() < 1e-12, "n={n} r={r}");
        }
    }

    #[test]
    fn fourth_order_convergence_on_quartic_field() {
        // g(x) = x^6 restricted to a segment; doubling intervals cuts error ~16x.
        let grad = |x: &Tensor| x.map(|t| 6.0 * t.powi(5));
        let (a, b) = (v(&[0.1]), v(&[1.3]));
        let exact = 1.3f64.powi(6) - 0.1f64.powi(6);
        let e1 = (simpson_line_integral(grad, &a, &b, 5).unwrap() - exact).abs();
        let e2 = (simpson_line_integral(grad, &a, &b, 9).unwrap() - exact).abs();
        let ratio = e1 / e2;
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn swapping_endpoints_negates_exactly() {
        let field = |x: &Tensor| x.map(|t| (3.0 * t).sin() - t * t);
        let a = v(&[0.123, -0.77, 2.5]);
        let b = v(&[-1.31, 0.4, 2.25]);
        for n in [3, 4, 5, 9] {
            let fwd = simpson_line_integral(field, &a, &b, n).unwrap();
            let bwd = simpson_line_integral(field, &b, &a, n).unwrap();
            assert_eq!(fwd, -bwd, "n={n}");
        }
    }

    #[test]
    fn cached_endpoints_give_same_result() {
        let field = |x: &Tensor| x.map(|t| t.cos());
        let a = v(&[0.2, 0.4]);
        let b = v(&[1.0, -0.3]);
        let plain = simpson_line_integral(field, &a, &b, 5).unwrap();
        let cached =
            simpson_line_integral_with_ends(field, &a, &b, 5, Some(&field(&a)), Some(&field(&b)))
                .unwrap();
        assert_eq!(plain, cached);
    }
}
