//! A compact BFGS minimizer with backtracking line search.

/// Settings for [`minimize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iters: usize,
    /// Stop once the largest absolute gradient component falls below this.
    pub grad_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iters: 200,
            grad_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_max: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final inverse Hessian approximation (row-major), reusable as a warm start.
    pub inverse_hessian: Vec<f64>,
}

/// Relative rounding level of objectives that are long sums.
const VALUE_RESOLUTION: f64 = 1e-13;

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` from `x0`. `f` writes the gradient into its second argument
/// and may return `+∞` outside its domain. The returned value never exceeds
/// `f(x0)`.
///
/// Converges when the largest gradient component drops below `grad_tol`, or
/// when the line search fails along a direction whose predicted decrease is
/// below rounding level of the objective.
pub fn minimize<F>(f: F, x0: &[f64], opts: BfgsOptions) -> BfgsOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    minimize_warm(f, x0, opts, None)
}

/// [`minimize`] starting from a previous inverse Hessian approximation.
pub fn minimize_warm<F>(mut f: F, x0: &[f64], opts: BfgsOptions, inverse_hessian: Option<&[f64]>) -> BfgsOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut value = f(&x, &mut g);
    let warm = inverse_hessian.filter(|h| h.len() == n * n && h.iter().all(|v| v.is_finite()));
    let mut hinv = match warm {
        Some(h) => h.to_vec(),
        None => {
            let mut h = vec![0.0; n * n];
            for i in 0..n {
                h[i * n + i] = 1.0;
            }
            h
        }
    };
    let mut first_step = warm.is_none();
    let mut iterations = 0;
    let mut at_noise_floor = false;
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];

    while iterations < opts.max_iters && value.is_finite() {
        if max_abs(&g) < opts.grad_tol {
            break;
        }
        for i in 0..n {
            dir[i] = -(0..n).map(|j| hinv[i * n + j] * g[j]).sum::<f64>();
        }
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 {
            // Lost descent: restart from steepest descent.
            hinv.iter_mut().enumerate().for_each(|(i, v)| *v = if i / n == i % n { 1.0 } else { 0.0 });
            dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
            slope = -dot(&g, &g);
            first_step = true;
        }
        let mut step = if first_step {
            (1.0 / max_abs(&g).max(1e-300)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = false;
        let mut new_value = value;
        let noise = VALUE_RESOLUTION * (1.0 + value.abs());
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            new_value = f(&x_new, &mut g_new);
            if new_value.is_finite() && new_value <= value + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            // Below the resolution of the objective, judge the step by the gradient.
            if -slope * step < noise
                && new_value.is_finite()
                && new_value <= value + noise
                && max_abs(&g_new) < max_abs(&g)
            {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            // No representable decrease left along a descent direction.
            at_noise_floor = -slope <= 1e-12 * (1.0 + value.abs());
            break;
        }
        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let yv: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy = dot(&s, &yv);
        let decrease = value - new_value;
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        value = new_value;
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() {
            if first_step {
                let scale = sy / dot(&yv, &yv);
                hinv.iter_mut().enumerate().for_each(|(i, v)| *v = if i / n == i % n { scale } else { 0.0 });
                first_step = false;
            }
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| hinv[i * n + j] * yv[j]).sum()).collect();
            let yhy = dot(&yv, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    hinv[i * n + j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
        }
        if decrease <= 1e-16 * value.abs() && max_abs(&s) < 1e-14 {
            at_noise_floor = -slope <= 1e-12 * (1.0 + value.abs());
            break;
        }
    }
    let grad_max = max_abs(&g);
    BfgsOutcome {
        converged: grad_max < opts.grad_tol || at_noise_floor,
        x,
        value,
        grad_max,
        iterations,
        inverse_hessian: hinv,
    }
}
