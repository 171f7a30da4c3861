//! Damped least-squares minimizer for the small, smooth fit problems here.
//!
//! Classic Levenberg–Marquardt schedule: solve (JᵀJ + λ·diag JᵀJ)δ = Jᵀr,
//! accept a step only when the residual sum of squares strictly decreases,
//! shrink λ on acceptance and grow it on rejection. The accepted-RSS history
//! is returned so callers can check the monotone-descent contract.

/// Model surface the minimizer needs: value and gradient w.r.t. parameters.
pub trait LmModel {
    fn n_params(&self) -> usize;
    fn eval(&self, params: &[f64], x: f64) -> f64;
    fn gradient(&self, params: &[f64], x: f64, out: &mut [f64]);
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative parameter-step size below which an accepted step terminates
    /// the search as converged.
    pub rel_step_tol: f64,
    pub lambda_init: f64,
    pub lambda_max: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 10_000,
            rel_step_tol: 1e-8,
            lambda_init: 1e-3,
            lambda_max: 1e14,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// RSS after each accepted step, starting from the initial value.
    pub accepted_rss: Vec<f64>,
}

fn rss_of<M: LmModel>(model: &M, params: &[f64], data: &[(f64, f64)]) -> f64 {
    data.iter()
        .map(|&(x, y)| {
            let r = y - model.eval(params, x);
            r * r
        })
        .sum()
}

/// Solve A·x = b in place for small symmetric systems; returns None when the
/// pivot degenerates.
fn solve_small(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))?;
        if pivot < 1e-300 {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in row + 1..n {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

pub fn levenberg_marquardt<M: LmModel>(
    model: &M,
    data: &[(f64, f64)],
    initial: &[f64],
    opts: LmOptions,
) -> LmOutcome {
    let k = model.n_params();
    let mut params = initial.to_vec();
    let mut rss = rss_of(model, &params, data);
    let mut accepted_rss = vec![rss];
    let mut lambda = opts.lambda_init;
    let mut grad = vec![0.0; k];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        // Normal equations from the current Jacobian.
        let mut jtj = vec![vec![0.0; k]; k];
        let mut jtr = vec![0.0; k];
        for &(x, y) in data {
            model.gradient(&params, x, &mut grad);
            let r = y - model.eval(&params, x);
            for i in 0..k {
                jtr[i] += grad[i] * r;
                for j in i..k {
                    jtj[i][j] += grad[i] * grad[j];
                }
            }
        }
        for i in 0..k {
            for j in 0..i {
                jtj[i][j] = jtj[j][i];
            }
        }

        let mut a = jtj.clone();
        for i in 0..k {
            a[i][i] += lambda * jtj[i][i].max(1e-30);
        }
        let mut b = jtr.clone();
        let step = solve_small(&mut a, &mut b);

        let trial: Option<(Vec<f64>, f64)> = step.map(|delta| {
            let p: Vec<f64> = params.iter().zip(&delta).map(|(p, d)| p + d).collect();
            let new_rss = rss_of(model, &p, data);
            (p, new_rss)
        });

        match trial {
            Some((p, new_rss)) if new_rss.is_finite() && new_rss < rss => {
                let max_rel_step = p
                    .iter()
                    .zip(&params)
                    .map(|(new, old)| (new - old).abs() / old.abs().max(1e-12))
                    .fold(0.0, f64::max);
                params = p;
                rss = new_rss;
                accepted_rss.push(rss);
                lambda = (lambda / 10.0).max(1e-12);
                if max_rel_step < opts.rel_step_tol || rss == 0.0 {
                    converged = true;
                    break;
                }
            }
            _ => {
                lambda *= 10.0;
                if lambda > opts.lambda_max {
                    break;
                }
            }
        }
    }

    LmOutcome {
        params,
        rss,
        iterations,
        converged,
        accepted_rss,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    struct Parabola;

    impl LmModel for Parabola {
        fn n_params(&self) -> usize {
            2
        }
        fn eval(&self, p: &[f64], x: f64) -> f64 {
            p[0] * x * x + p[1]
        }
        fn gradient(&self, _p: &[f64], x: f64, out: &mut [f64]) {
            out[0] = x * x;
            out[1] = 1.0;
        }
    }

    #[test]
    fn recovers_parabola() {
        let data: Vec<(f64, f64)> = (-10..=10)
            .map(|i| {
                let x = i as f64 / 2.0;
                (x, 3.25 * x * x - 1.5)
            })
            .collect();
        let out = levenberg_marquardt(&Parabola, &data, &[1.0, 0.0], LmOptions::default());
        assert!(out.converged);
        assert_relative_eq!(out.params[0], 3.25, max_relative = 1e-8);
        assert_relative_eq!(out.params[1], -1.5, max_relative = 1e-7);
    }

    #[test]
    fn accepted_rss_is_monotone() {
        let data: Vec<(f64, f64)> = (-10..=10)
            .map(|i| {
                let x = i as f64 / 2.0;
                (x, 2.0 * x * x + 0.3 + 0.05 * (x * 7.0).sin())
            })
            .collect();
        let out = levenberg_marquardt(&Parabola, &data, &[0.5, 5.0], LmOptions::default());
        for w in out.accepted_rss.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }
}
