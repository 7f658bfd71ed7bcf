//! Damped Gauss-Newton (Levenberg-style) least squares for the small
//! nonlinear models of this module. Parameters can be box-constrained;
//! standard errors come from the local curvature at the solution.

use super::FitError;

pub struct LsqProblem<'a> {
    /// model(params, x) -> predicted y
    pub model: &'a dyn Fn(&[f64], f64) -> f64,
    /// Analytic Jacobian d model / d params; numeric central differences
    /// when absent.
    pub jacobian: Option<&'a dyn Fn(&[f64], f64) -> Vec<f64>>,
    pub x: &'a [f64],
    pub y: &'a [f64],
    /// Per-point weights 1/sigma^2; unweighted when absent.
    pub weights: Option<&'a [f64]>,
    pub lower: Option<&'a [f64]>,
    pub upper: Option<&'a [f64]>,
}

#[derive(Debug, Clone)]
pub struct LsqOptions {
    pub max_iterations: usize,
    pub ftol: f64,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            ftol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LsqFit {
    pub params: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Row-major covariance of the parameters.
    pub covariance: Vec<f64>,
    pub chi2: f64,
    pub residual_norm: f64,
    pub iterations: usize,
}

pub fn levenberg_marquardt(
    problem: &LsqProblem,
    initial: &[f64],
    options: &LsqOptions,
) -> Result<LsqFit, FitError> {
    let n = problem.x.len();
    let np = initial.len();
    if n < np {
        return Err(FitError::Domain(format!(
            "{n} data points cannot constrain {np} parameters"
        )));
    }
    let weight = |i: usize| problem.weights.map_or(1.0, |w| w[i]);
    let clamp = |p: &mut [f64]| {
        if let Some(lo) = problem.lower {
            for k in 0..np {
                p[k] = p[k].max(lo[k]);
            }
        }
        if let Some(hi) = problem.upper {
            for k in 0..np {
                p[k] = p[k].min(hi[k]);
            }
        }
    };

    let chi2_of = |p: &[f64]| -> f64 {
        (0..n)
            .map(|i| {
                let r = problem.y[i] - (problem.model)(p, problem.x[i]);
                weight(i) * r * r
            })
            .sum()
    };

    let jacobian_row = |p: &[f64], x: f64| -> Vec<f64> {
        if let Some(jac) = problem.jacobian {
            return jac(p, x);
        }
        let mut row = vec![0.0; np];
        let mut pp = p.to_vec();
        for k in 0..np {
            let h = (1e-6 * p[k].abs()).max(1e-9);
            pp[k] = p[k] + h;
            let up = (problem.model)(&pp, x);
            pp[k] = p[k] - h;
            let down = (problem.model)(&pp, x);
            pp[k] = p[k];
            row[k] = (up - down) / (2.0 * h);
        }
        row
    };

    let mut params = initial.to_vec();
    clamp(&mut params);
    let mut chi2 = chi2_of(&params);
    let mut lambda = 1e-3;
    let mut stall = 0usize;
    let mut iterations = 0usize;

    while iterations < options.max_iterations {
        iterations += 1;
        // assemble J^T W J and J^T W r
        let mut jtj = vec![0.0; np * np];
        let mut jtr = vec![0.0; np];
        for i in 0..n {
            let row = jacobian_row(&params, problem.x[i]);
            let r = problem.y[i] - (problem.model)(&params, problem.x[i]);
            let w = weight(i);
            for a in 0..np {
                jtr[a] += w * row[a] * r;
                for b in 0..np {
                    jtj[a * np + b] += w * row[a] * row[b];
                }
            }
        }

        let mut improved = false;
        for _ in 0..30 {
            let mut damped = jtj.clone();
            for a in 0..np {
                damped[a * np + a] += lambda * jtj[a * np + a].max(1e-30);
            }
            let Some(delta) = solve(&damped, &jtr, np) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = params.iter().zip(&delta).map(|(p, d)| p + d).collect();
            clamp(&mut trial);
            let trial_chi2 = chi2_of(&trial);
            if trial_chi2 <= chi2 {
                let gain = chi2 - trial_chi2;
                params = trial;
                chi2 = trial_chi2;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if gain <= options.ftol * chi2.max(1e-300) {
                    stall += 1;
                } else {
                    stall = 0;
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e14 {
                break;
            }
        }
        if !improved {
            stall += 1;
        }
        if stall >= 3 {
            break;
        }
    }

    if iterations >= options.max_iterations && stall == 0 {
        return Err(FitError::NonConvergence {
            iterations,
            residual_norm: chi2.sqrt(),
        });
    }

    // curvature-based covariance, scaled by the reduced chi-square
    let mut jtj = vec![0.0; np * np];
    for i in 0..n {
        let row = jacobian_row(&params, problem.x[i]);
        let w = weight(i);
        for a in 0..np {
            for b in 0..np {
                jtj[a * np + b] += w * row[a] * row[b];
            }
        }
    }
    let covariance = invert(&jtj, np).ok_or(FitError::Singular)?;
    let dof = (n - np).max(1) as f64;
    let scale = (chi2 / dof).max(0.0);
    let covariance: Vec<f64> = covariance.iter().map(|c| c * scale).collect();
    let std_errors: Vec<f64> = (0..np)
        .map(|k| covariance[k * np + k].max(0.0).sqrt())
        .collect();

    Ok(LsqFit {
        params,
        std_errors,
        covariance,
        chi2,
        residual_norm: chi2.sqrt(),
        iterations,
    })
}

/// Gaussian elimination with partial pivoting; None if singular.
fn solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            m[i * n + col]
                .abs()
                .partial_cmp(&m[j * n + col].abs())
                .unwrap()
        })?;
        if m[pivot * n + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            rhs.swap(col, pivot);
        }
        for row in col + 1..n {
            let f = m[row * n + col] / m[col * n + col];
            for k in col..n {
                m[row * n + k] -= f * m[col * n + k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut sum = rhs[row];
        for k in row + 1..n {
            sum -= m[row * n + k] * x[k];
        }
        x[row] = sum / m[row * n + row];
    }
    Some(x)
}

fn invert(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut out = vec![0.0; n * n];
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        let x = solve(a, &e, n)?;
        for row in 0..n {
            out[row * n + col] = x[row];
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn recovers_exponential_decay() {
        let truth = [2.0, 0.35];
        let model = |p: &[f64], x: f64| p[0] * (-p[1] * x).exp();
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let y: Vec<f64> = x.iter().map(|&xi| model(&truth, xi)).collect();
        let fit = levenberg_marquardt(
            &LsqProblem {
                model: &model,
                jacobian: None,
                x: &x,
                y: &y,
                weights: None,
                lower: None,
                upper: None,
            },
            &[1.0, 1.0],
            &LsqOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(fit.params[0], truth[0], epsilon = 1e-8);
        assert_relative_eq!(fit.params[1], truth[1], epsilon = 1e-8);
    }

    #[test]
    fn solve_small_system() {
        // 2x2: [[2,1],[1,3]] x = [5, 10] -> x = [1, 3]
        let x = solve(&[2.0, 1.0, 1.0, 3.0], &[5.0, 10.0], 2).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn singular_system_yields_none() {
        assert!(solve(&[1.0, 2.0, 2.0, 4.0], &[1.0, 2.0], 2).is_none());
    }
}
