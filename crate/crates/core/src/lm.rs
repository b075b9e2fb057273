//! Dense Levenberg-Marquardt for the small least-squares problems of the
//! search.

use crate::linalg::Matrix;

pub(crate) trait LeastSquares {
    fn params(&self) -> usize;
    fn residuals(&self) -> usize;
    /// Fills `r` and the row-major Jacobian `jac` (`residuals × params`).
    fn evaluate(&self, x: &[f64], r: &mut [f64], jac: &mut [f64]);
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LmOptions {
    pub max_iterations: usize,
    /// Stop once `Σ r²` falls below this.
    pub target_cost: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct LmOutcome {
    pub x: Vec<f64>,
    pub cost: f64,
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

pub(crate) fn minimize<P: LeastSquares>(problem: &P, start: Vec<f64>, opts: LmOptions) -> LmOutcome {
    let (n, m) = (problem.params(), problem.residuals());
    let mut x = start;
    let mut r = vec![0.0; m];
    let mut jac = vec![0.0; m * n];
    problem.evaluate(&x, &mut r, &mut jac);
    let mut current = cost(&r);
    let mut mu = -1.0;
    let mut nu = 2.0;
    let mut trial_r = vec![0.0; m];
    let mut trial_jac = vec![0.0; m * n];

    for _ in 0..opts.max_iterations {
        if current <= opts.target_cost || !current.is_finite() {
            break;
        }
        // Normal equations JᵀJ and Jᵀr.
        let mut jtj = Matrix::<f64>::zeros(n, n);
        let mut jtr = vec![0.0; n];
        for k in 0..m {
            let row = &jac[k * n..(k + 1) * n];
            for a in 0..n {
                if row[a] == 0.0 {
                    continue;
                }
                jtr[a] += row[a] * r[k];
                for b in a..n {
                    jtj[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                jtj[(a, b)] = jtj[(b, a)];
            }
        }
        let gradient = jtr.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
        if gradient < 1e-30 {
            break;
        }
        if mu < 0.0 {
            let diag_max = (0..n).map(|a| jtj[(a, a)]).fold(0.0f64, f64::max);
            mu = 1e-3 * diag_max.max(1e-12);
        }
        let mut damped = jtj.clone();
        for a in 0..n {
            damped[(a, a)] += mu;
        }
        let rhs: Vec<f64> = jtr.iter().map(|g| -g).collect();
        let Some(step) = damped.solve(&rhs) else {
            mu *= nu;
            nu *= 2.0;
            continue;
        };
        let step_norm = step.iter().map(|s| s * s).sum::<f64>().sqrt();
        let x_norm = x.iter().map(|s| s * s).sum::<f64>().sqrt();
        if step_norm <= 1e-15 * (x_norm + 1e-15) {
            break;
        }
        let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
        problem.evaluate(&trial, &mut trial_r, &mut trial_jac);
        let trial_cost = cost(&trial_r);
        // Gain ratio against the linear model.
        let predicted: f64 = step.iter().zip(&jtr).map(|(s, g)| s * (mu * s - g)).sum();
        let rho = (current - trial_cost) / (predicted.abs() + f64::MIN_POSITIVE);
        if trial_cost < current && trial_cost.is_finite() {
            x = trial;
            std::mem::swap(&mut r, &mut trial_r);
            std::mem::swap(&mut jac, &mut trial_jac);
            current = trial_cost;
            mu *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
            nu = 2.0;
        } else {
            mu *= nu;
            nu *= 2.0;
            if !mu.is_finite() {
                break;
            }
        }
    }
    LmOutcome { x, cost: current }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rosenbrock as residuals (1 - x, 10 (y - x²)).
    struct Rosenbrock;

    impl LeastSquares for Rosenbrock {
        fn params(&self) -> usize {
            2
        }

        fn residuals(&self) -> usize {
            2
        }

        fn evaluate(&self, x: &[f64], r: &mut [f64], jac: &mut [f64]) {
            r[0] = 1.0 - x[0];
            r[1] = 10.0 * (x[1] - x[0] * x[0]);
            jac.copy_from_slice(&[-1.0, 0.0, -20.0 * x[0], 10.0]);
        }
    }

    #[test]
    fn solves_rosenbrock() {
        let out = minimize(&Rosenbrock, vec![-1.2, 1.0], LmOptions { max_iterations: 500, target_cost: 1e-28 });
        assert!(out.cost < 1e-20, "cost {}", out.cost);
        assert!((out.x[0] - 1.0).abs() < 1e-9 && (out.x[1] - 1.0).abs() < 1e-9);
    }
}
