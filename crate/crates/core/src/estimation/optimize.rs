//! Simplex search and Newton polishing.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub(crate) struct SimplexOptions {
    pub max_evals: usize,
    /// Stop once the simplex diameter (infinity norm) falls below this.
    pub x_tol: f64,
    /// ... and the spread of function values below this.
    pub f_tol: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct SimplexResult {
    pub x: Vec<f64>,
    pub evals: usize,
    pub iterations: usize,
    pub size: f64,
}

/// Nelder-Mead minimization with standard coefficients. Non-finite values
/// count as `+inf`.
pub(crate) fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    steps: &[f64],
    opts: SimplexOptions,
) -> SimplexResult {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), v0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += steps[i];
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    let size = |s: &[(Vec<f64>, f64)]| {
        let best = &s[0].0;
        s[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(best).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    };

    let mut iterations = 0;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        let diam = size(&simplex);
        if evals >= opts.max_evals
            || (diam < opts.x_tol && spread.abs() <= opts.f_tol * (simplex[0].1.abs() + opts.f_tol))
        {
            return SimplexResult {
                x: simplex[0].0.clone(),
                evals,
                iterations,
                size: diam,
            };
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let xc = along(0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < fr.min(simplex[n].1) {
            simplex[n] = (xc, fc);
            continue;
        }
        // Shrink towards the best vertex.
        let best = simplex[0].0.clone();
        for item in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = best
                .iter()
                .zip(&item.0)
                .map(|(b, x)| b + 0.5 * (x - b))
                .collect();
            let v = eval(&x, &mut evals);
            *item = (x, v);
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NewtonOptions {
    pub max_iterations: usize,
    pub rel_f_tol: f64,
    pub rel_x_tol: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evals: usize,
    pub converged: bool,
}

/// Damped Newton ascent for a smooth concave-ish objective.
///
/// `obj(x)` returns value, gradient and (row-major) Hessian, or `None`
/// outside the domain. `feasible` screens trial points before evaluation.
pub(crate) fn newton_maximize(
    mut obj: impl FnMut(&[f64]) -> Option<(f64, Vec<f64>, Vec<f64>)>,
    feasible: impl Fn(&[f64]) -> bool,
    x0: &[f64],
    opts: NewtonOptions,
) -> Option<NewtonResult> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut f, mut g, mut h) = obj(&x)?;
    let mut evals = 1;
    for it in 1..=opts.max_iterations {
        let step = newton_direction(&g, &h, n);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            if feasible(&trial) {
                evals += 1;
                if let Some((ft, gt, ht)) = obj(&trial) {
                    if ft.is_finite() && ft >= f - 1e-12 * f.abs() {
                        accepted = Some((trial, ft, gt, ht));
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn, hn)) = accepted else {
            return Some(NewtonResult {
                grad_norm: norm(&g),
                x,
                f,
                iterations: it,
                evals,
                converged: false,
            });
        };
        let df = (fn_ - f).abs() / f.abs().max(1e-300);
        let dx_ok = xn
            .iter()
            .zip(&x)
            .all(|(a, b)| (a - b).abs() <= opts.rel_x_tol * a.abs().max(1.0));
        x = xn;
        f = fn_;
        g = gn;
        h = hn;
        if df < opts.rel_f_tol && dx_ok {
            return Some(NewtonResult {
                grad_norm: norm(&g),
                x,
                f,
                iterations: it,
                evals,
                converged: true,
            });
        }
    }
    Some(NewtonResult {
        grad_norm: norm(&g),
        x,
        f,
        iterations: opts.max_iterations,
        evals,
        converged: false,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Solves `(-H + lambda D) s = g`, raising `lambda` until the system is positive definite.
fn newton_direction(g: &[f64], h: &[f64], n: usize) -> Vec<f64> {
    let neg_h = DMatrix::from_row_slice(n, n, h).map(|v| -v);
    let rhs = DVector::from_column_slice(g);
    let scale: Vec<f64> = (0..n).map(|i| neg_h[(i, i)].abs().max(1e-300)).collect();
    let mut lambda = 0.0;
    for _ in 0..40 {
        let mut m = neg_h.clone();
        for i in 0..n {
            m[(i, i)] += lambda * scale[i];
        }
        if let Some(ch) = m.cholesky() {
            return ch.solve(&rhs).iter().copied().collect();
        }
        lambda = if lambda == 0.0 { 1e-6 } else { lambda * 10.0 };
    }
    // Scaled gradient step as a last resort.
    g.iter().zip(&scale).map(|(gi, s)| gi / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_minimizes_rosenbrock() {
        let r = nelder_mead(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            &[0.5, 0.5],
            SimplexOptions {
                max_evals: 5000,
                x_tol: 1e-9,
                f_tol: 1e-14,
            },
        );
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r.x);
    }

    #[test]
    fn newton_maximizes_concave_quadratic() {
        // f = -(x0 - 1)^2 - 2 (x1 + 3)^2 - x0 x1
        let obj = |x: &[f64]| {
            let f = -(x[0] - 1.0).powi(2) - 2.0 * (x[1] + 3.0).powi(2) - x[0] * x[1];
            let g = vec![-2.0 * (x[0] - 1.0) - x[1], -4.0 * (x[1] + 3.0) - x[0]];
            let h = vec![-2.0, -1.0, -1.0, -4.0];
            Some((f, g, h))
        };
        let r = newton_maximize(
            obj,
            |_| true,
            &[10.0, 10.0],
            NewtonOptions {
                max_iterations: 50,
                rel_f_tol: 1e-12,
                rel_x_tol: 1e-10,
            },
        )
        .unwrap();
        assert!(r.converged);
        // Stationary point: -2x0 + 2 - x1 = 0, -x0 - 4x1 - 12 = 0.
        assert!((r.x[0] - 20.0 / 7.0).abs() < 1e-9);
        assert!((r.x[1] + 26.0 / 7.0).abs() < 1e-9);
    }
}
