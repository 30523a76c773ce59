//! Derivative-free Nelder-Mead simplex minimizer for the low-dimensional
//! covariance parameter search.

/// Result of a simplex run.
#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Standard Nelder-Mead (reflection 1, expansion 2, contraction 1/2, shrink
/// 1/2) from an orthogonal simplex around `x0`. Converges when the spread of
/// simplex values over a full cycle falls below `tol`.
pub fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    tol: f64,
    max_evals: usize,
) -> SimplexResult {
    let dim = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut points: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let v0 = eval(x0, &mut evals);
    points.push((x0.to_vec(), v0));
    for i in 0..dim {
        let mut xi = x0.to_vec();
        xi[i] += step;
        let vi = eval(&xi, &mut evals);
        points.push((xi, vi));
    }

    let mut converged = false;
    while evals < max_evals {
        points.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("no NaN values"));
        let spread = points[dim].1 - points[0].1;
        if spread.abs() < tol {
            converged = true;
            break;
        }
        // Centroid of all but the worst.
        let mut centroid = vec![0.0; dim];
        for (x, _) in points.iter().take(dim) {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / dim as f64;
            }
        }
        let worst = points[dim].clone();
        let lerp = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let reflect = lerp(1.0);
        let v_reflect = eval(&reflect, &mut evals);
        if v_reflect < points[0].1 {
            let expand = lerp(2.0);
            let v_expand = eval(&expand, &mut evals);
            points[dim] = if v_expand < v_reflect {
                (expand, v_expand)
            } else {
                (reflect, v_reflect)
            };
        } else if v_reflect < points[dim - 1].1 {
            points[dim] = (reflect, v_reflect);
        } else {
            let contract = if v_reflect < worst.1 {
                lerp(0.5)
            } else {
                lerp(-0.5)
            };
            let v_contract = eval(&contract, &mut evals);
            if v_contract < worst.1.min(v_reflect) {
                points[dim] = (contract, v_contract);
            } else {
                // Shrink toward the best point.
                let best = points[0].0.clone();
                for p in points.iter_mut().skip(1) {
                    let shrunk: Vec<f64> = best
                        .iter()
                        .zip(&p.0)
                        .map(|(b, x)| b + 0.5 * (x - b))
                        .collect();
                    let v = eval(&shrunk, &mut evals);
                    *p = (shrunk, v);
                }
            }
        }
    }
    points.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("no NaN values"));
    SimplexResult {
        x: points[0].0.clone(),
        value: points[0].1,
        evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic_bowl() {
        let mut f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2) + 5.0;
        let res = nelder_mead(&mut f, &[0.0, 0.0], 1.0, 1e-12, 2000);
        assert!(res.converged);
        assert!((res.x[0] - 3.0).abs() < 1e-5, "{:?}", res.x);
        assert!((res.x[1] + 1.0).abs() < 1e-5);
        assert!((res.value - 5.0).abs() < 1e-9);
    }

    #[test]
    fn minimizes_rosenbrock_eventually() {
        let mut f = |x: &[f64]| {
            let a = 1.0 - x[0];
            let b = x[1] - x[0] * x[0];
            a * a + 100.0 * b * b
        };
        let res = nelder_mead(&mut f, &[-1.2, 1.0], 0.5, 1e-14, 20_000);
        assert!((res.x[0] - 1.0).abs() < 1e-4, "{:?}", res.x);
        assert!((res.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn respects_eval_cap() {
        let mut f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let res = nelder_mead(&mut f, &[10.0, 10.0, 10.0], 1.0, 0.0, 50);
        assert!(!res.converged);
        assert!(res.evals <= 55, "{}", res.evals);
    }

    #[test]
    fn nan_objective_treated_as_infinite() {
        let mut f = |x: &[f64]| {
            if x[0] < 0.0 {
                f64::NAN
            } else {
                (x[0] - 2.0).powi(2)
            }
        };
        let res = nelder_mead(&mut f, &[5.0], 1.0, 1e-12, 500);
        assert!((res.x[0] - 2.0).abs() < 1e-5);
    }
}
