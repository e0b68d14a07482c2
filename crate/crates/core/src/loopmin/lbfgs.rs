//! Preconditioned limited-memory BFGS with a strong Wolfe line search.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iters: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant of the strong Wolfe condition.
    pub c2: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iters: 2000,
            c1: 1e-4,
            c2: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIters,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct LbfgsReport {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Minimize `objective` (value + gradient into the second argument) from `x0`.
///
/// `precondition` applies an approximate inverse Hessian in place and
/// `converged` is consulted with the current gradient after every iteration.
pub fn minimize<F, P, C>(
    mut objective: F,
    x0: Vec<f64>,
    precondition: P,
    converged: C,
    cfg: &LbfgsConfig,
) -> LbfgsReport
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
    P: Fn(&mut [f64]),
    C: Fn(&[f64]) -> bool,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = objective(&x, &mut g);
    let mut evaluations = 1;
    let mut history: VecDeque<Pair> = VecDeque::with_capacity(cfg.memory);
    let mut d = vec![0.0; n];
    let mut alpha_buf = vec![0.0; cfg.memory];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut iterations = 0;
    let mut retried = false;

    let stop = loop {
        if converged(&g) {
            break StopReason::Converged;
        }
        if iterations >= cfg.max_iters {
            break StopReason::MaxIters;
        }

        // two-loop recursion: d = -H g
        d.copy_from_slice(&g);
        for (i, pair) in history.iter().enumerate().rev() {
            let a = pair.rho * dot(&pair.s, &d);
            alpha_buf[i] = a;
            for (dj, yj) in d.iter_mut().zip(&pair.y) {
                *dj -= a * yj;
            }
        }
        precondition(&mut d);
        if let Some(last) = history.back() {
            let mut py = last.y.clone();
            precondition(&mut py);
            let gamma = dot(&last.s, &last.y) / dot(&last.y, &py);
            if gamma.is_finite() && gamma > 0.0 {
                d.iter_mut().for_each(|v| *v *= gamma);
            }
        }
        for (i, pair) in history.iter().enumerate() {
            let b = pair.rho * dot(&pair.y, &d);
            for (dj, sj) in d.iter_mut().zip(&pair.s) {
                *dj += (alpha_buf[i] - b) * sj;
            }
        }
        d.iter_mut().for_each(|v| *v = -*v);

        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            history.clear();
            d.copy_from_slice(&g);
            precondition(&mut d);
            d.iter_mut().for_each(|v| *v = -*v);
            slope = dot(&g, &d);
            if !(slope < 0.0) {
                break StopReason::LineSearchFailed;
            }
        }

        let ls = line_search(
            &mut objective,
            &x,
            f,
            slope,
            &d,
            &mut x_new,
            &mut g_new,
            cfg,
        );
        evaluations += ls.evaluations;
        let Some(f_new) = ls.value else {
            if history.is_empty() || retried {
                break StopReason::LineSearchFailed;
            }
            history.clear();
            retried = true;
            continue;
        };
        retried = false;

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back(Pair { s, y, rho: 1.0 / sy });
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_new;
        iterations += 1;
    };

    LbfgsReport {
        x,
        f,
        grad: g,
        iterations,
        evaluations,
        stop,
    }
}

struct LineSearchOutcome {
    value: Option<f64>,
    evaluations: usize,
}

/// Bracketing + zoom search for a step satisfying the strong Wolfe conditions.
/// On success `x_new`/`g_new` hold the accepted point.
#[allow(clippy::too_many_arguments)]
fn line_search<F>(
    objective: &mut F,
    x: &[f64],
    f0: f64,
    slope0: f64,
    d: &[f64],
    x_new: &mut [f64],
    g_new: &mut [f64],
    cfg: &LbfgsConfig,
) -> LineSearchOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    const MAX_EVALS: usize = 40;
    let mut evaluations = 0;
    let mut eval = |t: f64, x_new: &mut [f64], g_new: &mut [f64]| -> (f64, f64) {
        for ((xn, xi), di) in x_new.iter_mut().zip(x).zip(d) {
            *xn = xi + t * di;
        }
        let f = objective(x_new, g_new);
        (f, dot(g_new, d))
    };

    // Near a minimizer value differences drown in round-off; tolerate that much
    // increase so the curvature test can still drive the gradient down.
    let f_tol = 1e-12 * f0.abs().max(1e-300);
    let mut t_prev = 0.0;
    let mut f_prev = f0;
    let mut s_prev = slope0;
    let mut t = 1.0;
    let mut bracket: Option<(f64, f64, f64, f64, f64, f64)> = None;
    while evaluations < MAX_EVALS {
        let (ft, st) = eval(t, x_new, g_new);
        evaluations += 1;
        if !ft.is_finite() {
            t = 0.5 * (t_prev + t);
            continue;
        }
        if ft > f0 + cfg.c1 * t * slope0 + f_tol || (evaluations > 1 && ft >= f_prev + f_tol) {
            bracket = Some((t_prev, f_prev, s_prev, t, ft, st));
            break;
        }
        if st.abs() <= -cfg.c2 * slope0 {
            return LineSearchOutcome {
                value: Some(ft),
                evaluations,
            };
        }
        if st >= 0.0 {
            bracket = Some((t, ft, st, t_prev, f_prev, s_prev));
            break;
        }
        t_prev = t;
        f_prev = ft;
        s_prev = st;
        t *= 2.0;
    }
    let Some((mut lo, mut f_lo, mut s_lo, mut hi, mut f_hi, mut s_hi)) = bracket else {
        return LineSearchOutcome {
            value: None,
            evaluations,
        };
    };

    while evaluations < MAX_EVALS {
        let tj = cubic_step(lo, f_lo, s_lo, hi, f_hi, s_hi);
        let (fj, sj) = eval(tj, x_new, g_new);
        evaluations += 1;
        if !fj.is_finite() || fj > f0 + cfg.c1 * tj * slope0 + f_tol || fj >= f_lo + f_tol {
            hi = tj;
            f_hi = fj;
            s_hi = sj;
        } else {
            if sj.abs() <= -cfg.c2 * slope0 {
                return LineSearchOutcome {
                    value: Some(fj),
                    evaluations,
                };
            }
            if sj * (hi - lo) >= 0.0 {
                hi = lo;
                f_hi = f_lo;
                s_hi = s_lo;
            }
            lo = tj;
            f_lo = fj;
            s_lo = sj;
        }
        if (hi - lo).abs() < 1e-16 * lo.abs().max(1.0) {
            break;
        }
    }
    // Accept the best decreasing point when the interval collapses at round-off.
    if lo > 0.0 && f_lo < f0 {
        let (f, _) = eval(lo, x_new, g_new);
        return LineSearchOutcome {
            value: Some(f),
            evaluations: evaluations + 1,
        };
    }
    LineSearchOutcome {
        value: None,
        evaluations,
    }
}

/// Minimizer of the cubic interpolant on `[lo, hi]`, safeguarded towards the
/// interior; falls back to bisection.
fn cubic_step(lo: f64, f_lo: f64, s_lo: f64, hi: f64, f_hi: f64, s_hi: f64) -> f64 {
    let (a, b) = if lo < hi { (lo, hi) } else { (hi, lo) };
    let mid = 0.5 * (lo + hi);
    if !f_hi.is_finite() || !s_hi.is_finite() {
        return mid;
    }
    let d1 = s_lo + s_hi - 3.0 * (f_lo - f_hi) / (lo - hi);
    let disc = d1 * d1 - s_lo * s_hi;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (hi - lo).signum() * disc.sqrt();
    let t = hi - (hi - lo) * (s_hi + d2 - d1) / (s_hi - s_lo + 2.0 * d2);
    let margin = 0.1 * (b - a);
    if t.is_finite() && t > a + margin && t < b - margin {
        t
    } else {
        mid
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let report = minimize(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            vec![-1.2, 1.0],
            |_| {},
            |g| g.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-10,
            &LbfgsConfig::default(),
        );
        assert_eq!(report.stop, StopReason::Converged);
        assert!((report.x[0] - 1.0).abs() < 1e-8 && (report.x[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn preconditioner_is_used() {
        // badly scaled quadratic; exact diagonal preconditioner makes it trivial
        let scales = [1.0, 1e4, 1e-3];
        let report = minimize(
            |x, g| {
                let mut f = 0.0;
                for i in 0..3 {
                    g[i] = scales[i] * (x[i] - 1.0);
                    f += 0.5 * scales[i] * (x[i] - 1.0).powi(2);
                }
                f
            },
            vec![0.0; 3],
            |d| {
                for i in 0..3 {
                    d[i] /= scales[i];
                }
            },
            |g| g.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-12,
            &LbfgsConfig::default(),
        );
        assert_eq!(report.stop, StopReason::Converged);
        assert!(report.iterations <= 2, "{}", report.iterations);
    }
}
