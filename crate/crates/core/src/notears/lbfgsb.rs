//! Limited-memory BFGS for simple bound constraints.
//!
//! Each iteration fixes the variables that sit on a bound with the gradient
//! pushing outward, builds a two-loop L-BFGS direction on the remaining free
//! variables, and backtracks along the projected path until the Armijo
//! condition holds. Accepted steps never increase the objective.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub lower: f64,
    pub upper: f64,
}

impl Bound {
    pub const NONNEGATIVE: Self = Self {
        lower: 0.0,
        upper: f64::INFINITY,
    };
    pub const ZERO: Self = Self {
        lower: 0.0,
        upper: 0.0,
    };

    fn project(self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsbOptions {
    pub memory: usize,
    /// Stop when the projected gradient's infinity norm falls below this.
    pub pgtol: f64,
    /// Stop when `(f_k - f_{k+1}) <= ftol * max(|f_k|, |f_{k+1}|, 1)`.
    pub ftol: f64,
    pub max_iter: usize,
}

impl Default for LbfgsbOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            pgtol: 1e-6,
            ftol: 1e7 * f64::EPSILON,
            max_iter: 15_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ProjectedGradient,
    RelativeReduction,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
    /// Objective after each accepted step, starting with the initial point.
    pub history: Vec<f64>,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Minimizes `objective` within `bounds` starting from `x0`.
///
/// `objective(x, grad)` returns `f(x)` and writes the gradient into `grad`.
pub fn minimize<F>(mut objective: F, x0: &[f64], bounds: &[Bound], opts: &LbfgsbOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    assert_eq!(bounds.len(), n, "one bound per variable");
    let mut x: Vec<f64> = x0.iter().zip(bounds).map(|(v, b)| b.project(*v)).collect();
    let mut g = vec![0.0; n];
    let mut f = objective(&x, &mut g);
    let mut evaluations = 1;
    let mut history = vec![f];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(opts.memory);

    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut free = vec![false; n];

    for iter in 0..opts.max_iter {
        let pg_norm = projected_gradient_norm(&x, &g, bounds);
        if pg_norm <= opts.pgtol {
            return finish(x, f, iter, evaluations, StopReason::ProjectedGradient, history);
        }
        for i in 0..n {
            let b = bounds[i];
            free[i] =
                !(b.lower == b.upper || (x[i] <= b.lower && g[i] > 0.0) || (x[i] >= b.upper && g[i] < 0.0));
        }

        let mut accepted = None;
        for attempt in 0..2 {
            if attempt == 1 {
                if memory.is_empty() {
                    break;
                }
                memory.clear();
            }
            two_loop_direction(&g, &free, &memory, &mut dir);
            let mut slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
            if !(slope < 0.0) {
                for i in 0..n {
                    dir[i] = if free[i] { -g[i] } else { 0.0 };
                }
                slope = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
                if !(slope < 0.0) {
                    break;
                }
            }
            let dir_max = dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut step = if memory.is_empty() {
                (1.0 / dir_max).min(1.0)
            } else {
                1.0
            };
            for _ in 0..MAX_BACKTRACKS {
                for i in 0..n {
                    x_new[i] = bounds[i].project(x[i] + step * dir[i]);
                }
                let decrease: f64 = (0..n).map(|i| g[i] * (x_new[i] - x[i])).sum();
                if decrease == 0.0 && x_new == x {
                    break;
                }
                let f_trial = objective(&x_new, &mut g_new);
                evaluations += 1;
                if f_trial.is_finite() && f_trial <= f + ARMIJO_C1 * decrease {
                    accepted = Some(f_trial);
                    break;
                }
                // safeguarded quadratic interpolation along the step
                let quad = if f_trial.is_finite() {
                    let denom = 2.0 * (f_trial - f - decrease);
                    if denom > 0.0 {
                        -decrease / denom
                    } else {
                        0.5
                    }
                } else {
                    0.1
                };
                step *= quad.clamp(0.1, 0.5);
            }
            if accepted.is_some() {
                break;
            }
        }

        let Some(f_next) = accepted else {
            return finish(x, f, iter, evaluations, StopReason::LineSearchFailed, history);
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        if sy > f64::EPSILON * yy {
            if memory.len() == opts.memory {
                memory.pop_front();
            }
            memory.push_back((s, y));
        }

        let reduction = f - f_next;
        let scale = f.abs().max(f_next.abs()).max(1.0);
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_next;
        history.push(f);
        if reduction <= opts.ftol * scale {
            return finish(
                x,
                f,
                iter + 1,
                evaluations,
                StopReason::RelativeReduction,
                history,
            );
        }
    }
    finish(
        x,
        f,
        opts.max_iter,
        evaluations,
        StopReason::MaxIterations,
        history,
    )
}

fn finish(
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    evaluations: usize,
    stop: StopReason,
    history: Vec<f64>,
) -> Minimum {
    Minimum {
        x,
        f,
        iterations,
        evaluations,
        stop,
        history,
    }
}

/// `|| P(x - g) - x ||_inf`.
pub fn projected_gradient_norm(x: &[f64], g: &[f64], bounds: &[Bound]) -> f64 {
    x.iter()
        .zip(g)
        .zip(bounds)
        .map(|((xi, gi), b)| (b.project(xi - gi) - xi).abs())
        .fold(0.0, f64::max)
}

// Two-loop recursion restricted to the free coordinates.
fn two_loop_direction(g: &[f64], free: &[bool], memory: &VecDeque<(Vec<f64>, Vec<f64>)>, dir: &mut [f64]) {
    let masked_dot = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .zip(free)
            .filter(|(_, &f)| f)
            .map(|((x, y), _)| x * y)
            .sum()
    };
    let mut q: Vec<f64> = g
        .iter()
        .zip(free)
        .map(|(gi, &f)| if f { *gi } else { 0.0 })
        .collect();
    let mut alphas = Vec::with_capacity(memory.len());
    let mut gamma = 1.0;
    let mut have_pair = false;
    for (s, y) in memory.iter().rev() {
        let sy = masked_dot(s, y);
        if sy <= 0.0 {
            alphas.push(None);
            continue;
        }
        if !have_pair {
            let yy = masked_dot(y, y);
            if yy > 0.0 {
                gamma = sy / yy;
            }
            have_pair = true;
        }
        let rho = 1.0 / sy;
        let a = rho * masked_dot(s, &q);
        for i in 0..q.len() {
            if free[i] {
                q[i] -= a * y[i];
            }
        }
        alphas.push(Some((a, rho)));
    }
    q.iter_mut().for_each(|v| *v *= gamma);
    for ((s, y), entry) in memory.iter().zip(alphas.iter().rev()) {
        if let Some((a, rho)) = *entry {
            let b = rho * masked_dot(y, &q);
            for i in 0..q.len() {
                if free[i] {
                    q[i] += (a - b) * s[i];
                }
            }
        }
    }
    for i in 0..dir.len() {
        dir[i] = if free[i] { -q[i] } else { 0.0 };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn unconstrained_rosenbrock() {
        let free = [Bound {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }; 2];
        let opts = LbfgsbOptions {
            ftol: 0.0,
            pgtol: 1e-9,
            ..Default::default()
        };
        let m = minimize(rosenbrock, &[-1.2, 1.0], &free, &opts);
        assert_eq!(m.stop, StopReason::ProjectedGradient);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6);
        assert!(m.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn active_bound_is_respected() {
        // min (x-2)^2 + (y+3)^2 with x <= 1, y >= 0
        let bounds = [
            Bound {
                lower: f64::NEG_INFINITY,
                upper: 1.0,
            },
            Bound::NONNEGATIVE,
        ];
        let m = minimize(
            |x, g| {
                g[0] = 2.0 * (x[0] - 2.0);
                g[1] = 2.0 * (x[1] + 3.0);
                (x[0] - 2.0).powi(2) + (x[1] + 3.0).powi(2)
            },
            &[0.0, 5.0],
            &bounds,
            &LbfgsbOptions::default(),
        );
        assert_eq!(m.x, vec![1.0, 0.0]);
        assert!((m.f - 10.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_variables_stay_put() {
        let bounds = [Bound::ZERO, Bound::NONNEGATIVE];
        let m = minimize(
            |x, g| {
                g[0] = 2.0 * (x[0] - 5.0);
                g[1] = 2.0 * (x[1] - 5.0);
                (x[0] - 5.0).powi(2) + (x[1] - 5.0).powi(2)
            },
            &[3.0, 0.0],
            &bounds,
            &LbfgsbOptions::default(),
        );
        assert_eq!(m.x[0], 0.0);
        assert!((m.x[1] - 5.0).abs() < 1e-8);
    }
}
