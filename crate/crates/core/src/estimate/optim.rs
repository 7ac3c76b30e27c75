//! Derivative-free simplex search followed by a quasi-Newton polish.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimOptions {
    /// Total objective evaluations allowed across both phases.
    pub max_evals: usize,
    /// Evaluations reserved for the simplex phase.
    pub simplex_evals: usize,
    /// Stop when an iteration improves the objective by less than this.
    pub ftol: f64,
    /// Initial simplex edge length in unconstrained coordinates.
    pub simplex_step: f64,
    /// Skip the quasi-Newton phase.
    pub simplex_only: bool,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions { max_evals: 4000, simplex_evals: 400, ftol: 1e-9, simplex_step: 0.25, simplex_only: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub iterations: usize,
    pub converged: bool,
    pub budget_exhausted: bool,
    /// Objective at the accepted point after each iteration; nonincreasing.
    pub history: Vec<f64>,
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Minimizes `f` from `x0`. Non-finite values reject a probe point.
pub fn optimize(f: impl FnMut(&[f64]) -> f64, x0: &[f64], opts: &OptimOptions) -> Result<OptimResult> {
    let mut obj = Counted { f, evals: 0 };
    let f0 = obj.call(x0);
    if !f0.is_finite() {
        return Err(Error::domain("objective is not finite at the starting point"));
    }
    let mut history = vec![f0];
    let nm_budget = opts.simplex_evals.min(opts.max_evals);
    let (x, fx, nm_iters, nm_converged) = nelder_mead(&mut obj, x0, f0, nm_budget, opts, &mut history);
    if opts.simplex_only {
        let exhausted = obj.evals >= opts.max_evals;
        return Ok(OptimResult {
            x,
            f: fx,
            evals: obj.evals,
            iterations: nm_iters,
            converged: nm_converged,
            budget_exhausted: exhausted,
            history,
        });
    }
    let (x, fx, q_iters, converged) = bfgs(&mut obj, x, fx, opts.max_evals, opts.ftol, &mut history);
    Ok(OptimResult {
        x,
        f: fx,
        evals: obj.evals,
        iterations: nm_iters + q_iters,
        converged,
        budget_exhausted: !converged && obj.evals >= opts.max_evals,
        history,
    })
}

fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    obj: &mut Counted<F>,
    x0: &[f64],
    f0: f64,
    budget: usize,
    opts: &OptimOptions,
    history: &mut Vec<f64>,
) -> (Vec<f64>, f64, usize, bool) {
    let n = x0.len();
    if n == 0 {
        return (x0.to_vec(), f0, 0, true);
    }
    let mut pts: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), f0)];
    for i in 0..n {
        if obj.evals >= budget {
            break;
        }
        let mut x = x0.to_vec();
        x[i] += opts.simplex_step * x[i].abs().max(1.0);
        let fx = obj.call(&x);
        pts.push((x, fx));
    }
    if pts.len() < n + 1 {
        return (x0.to_vec(), f0, 0, false);
    }
    let mut iters = 0;
    let mut converged = false;
    while obj.evals < budget {
        pts.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (pts[0].1, pts[n].1);
        if worst.is_finite() && (worst - best).abs() < opts.ftol {
            converged = true;
            break;
        }
        iters += 1;
        let centroid: Vec<f64> = (0..n).map(|j| pts[..n].iter().map(|p| p.0[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (pts[n].0[j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = obj.call(&xr);
        if fr < pts[0].1 {
            let xe = along(-2.0);
            let fe = obj.call(&xe);
            pts[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < pts[n - 1].1 {
            pts[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < pts[n].1 {
                let xc = along(-0.5);
                let fc = obj.call(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = obj.call(&xc);
                (xc, fc)
            };
            if fc < pts[n].1.min(fr) {
                pts[n] = (xc, fc);
            } else {
                let lead = pts[0].0.clone();
                for p in pts.iter_mut().skip(1) {
                    let x: Vec<f64> = (0..n).map(|j| lead[j] + 0.5 * (p.0[j] - lead[j])).collect();
                    let fx = obj.call(&x);
                    *p = (x, fx);
                }
            }
        }
        let current = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        if current < *history.last().unwrap() {
            history.push(current);
        }
    }
    pts.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = pts.swap_remove(0);
    (x, f, iters, converged)
}

fn gradient<F: FnMut(&[f64]) -> f64>(obj: &mut Counted<F>, x: &[f64], fx: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let up = obj.call(&probe);
        probe[i] = x[i] - h;
        let down = obj.call(&probe);
        probe[i] = x[i];
        g[i] = match (up.is_finite(), down.is_finite()) {
            (true, true) => (up - down) / (2.0 * h),
            (true, false) => (up - fx) / h,
            (false, true) => (fx - down) / h,
            (false, false) => 0.0,
        };
    }
    g
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn bfgs<F: FnMut(&[f64]) -> f64>(
    obj: &mut Counted<F>,
    mut x: Vec<f64>,
    mut fx: f64,
    budget: usize,
    ftol: f64,
    history: &mut Vec<f64>,
) -> (Vec<f64>, f64, usize, bool) {
    let n = x.len();
    let identity = |scale: f64| -> Vec<Vec<f64>> {
        (0..n).map(|i| (0..n).map(|j| if i == j { scale } else { 0.0 }).collect()).collect()
    };
    let mut h = identity(1.0);
    let mut g = gradient(obj, &x, fx);
    let mut iters = 0;
    let mut fresh = true;
    let mut small_steps = 0;
    while obj.evals + 2 * n < budget {
        iters += 1;
        let mut d: Vec<f64> = h.iter().map(|row| -dot(row, &g)).collect();
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            h = identity(1.0);
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
            if slope == 0.0 {
                return (x, fx, iters, true);
            }
        }
        // backtracking with an Armijo condition
        let mut step = 1.0;
        let mut accepted = None;
        while obj.evals < budget && step > 1e-12 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let fnew = obj.call(&xn);
            if fnew.is_finite() && fnew <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fnew));
                break;
            }
            step *= if fnew.is_finite() { 0.5 } else { 0.1 };
        }
        let Some((xn, fnew)) = accepted else {
            if fresh {
                return (x, fx, iters, true);
            }
            h = identity(1.0);
            fresh = true;
            continue;
        };
        let improvement = fx - fnew;
        let gn = gradient(obj, &xn, fnew);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        x = xn;
        fx = fnew;
        g = gn;
        history.push(fx);
        if improvement < ftol {
            small_steps += 1;
            let g_inf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if (small_steps >= 2 && g_inf <= 1e-6 * fx.abs().max(1.0)) || small_steps >= 5 {
                return (x, fx, iters, true);
            }
        } else {
            small_steps = 0;
        }
        let sy = dot(&s, &yv);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() {
            if fresh {
                let scale = sy / dot(&yv, &yv);
                h = identity(scale);
            }
            let hy: Vec<f64> = h.iter().map(|row| dot(row, &yv)).collect();
            let yhy = dot(&yv, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
            fresh = false;
        }
    }
    (x, fx, iters, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let target = [1.5, -2.0, 0.25];
        for x0 in [[0.0, 0.0, 0.0], [10.0, -7.0, 3.0], [-4.0, 4.0, -4.0]] {
            let r = optimize(
                |x| x.iter().zip(&target).enumerate().map(|(i, (a, b))| (i as f64 + 1.0) * (a - b).powi(2)).sum(),
                &x0,
                &OptimOptions::default(),
            )
            .unwrap();
            for (a, b) in r.x.iter().zip(&target) {
                assert!((a - b).abs() < 1e-6, "{:?}", r.x);
            }
        }
    }

    #[test]
    fn rosenbrock() {
        let opts = OptimOptions { max_evals: 10_000, ..Default::default() };
        let r = optimize(|x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2), &[-1.2, 1.0], &opts).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
        assert!(r.evals <= 10_000);
    }

    #[test]
    fn non_finite_probes_are_rejected() {
        // a cliff: infinite for x < 0.5
        let r = optimize(
            |x| if x[0] < 0.5 { f64::INFINITY } else { (x[0] - 0.5).powi(2) + x[1] * x[1] + 0.1 * x[0] },
            &[3.0, 1.0],
            &OptimOptions::default(),
        )
        .unwrap();
        assert!(r.f.is_finite());
        assert!((r.x[0] - 0.5).abs() < 1e-3 && r.x[1].abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn history_never_increases() {
        let r =
            optimize(|x| (x[0] - 3.0).powi(4) + (x[1] + x[0]).powi(2), &[0.0, 0.0], &OptimOptions::default()).unwrap();
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn rejects_non_finite_start() {
        assert!(optimize(|_| f64::NAN, &[0.0], &OptimOptions::default()).is_err());
    }
}
