//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! The line search brackets a step satisfying the strong Wolfe conditions by
//! extrapolation and then shrinks the bracket with safeguarded cubic
//! interpolation, in the style of Nocedal & Wright (Algorithms 3.5/3.6).

use std::collections::VecDeque;
use std::time::Instant;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub max_iters: usize,
    /// Number of correction pairs kept (`m`).
    pub history_size: usize,
    /// Stop once the largest gradient component is at most this.
    pub grad_tol: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Objective evaluations allowed per line search.
    pub max_line_search: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self { max_iters: 1000, history_size: 10, grad_tol: 1e-9, c1: 1e-4, c2: 0.9, max_line_search: 40 }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::Config(format!("need 0 < c1 < c2 < 1, got c1={}, c2={}", self.c1, self.c2)));
        }
        if self.history_size == 0 || self.max_line_search == 0 {
            return Err(Error::Config("history_size and max_line_search must be positive".into()));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::Config(format!("grad_tol must be non-negative, got {}", self.grad_tol)));
        }
        Ok(())
    }
}

/// Outcome of one minimisation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub final_loss: f64,
    pub iterations_used: usize,
    /// Loss at the start and after every accepted step.
    pub loss_history: Vec<f64>,
    pub elapsed_seconds: f64,
    pub evaluations: usize,
    /// Gradient tolerance reached.
    pub converged: bool,
    /// The last line search found no strong-Wolfe point.
    pub line_search_failed: bool,
}

type Eval = (f64, Vec<f64>);

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> Result<Eval>> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> Result<Eval> {
        self.evals += 1;
        let (f, g) = (self.f)(x)?;
        if !f.is_finite() {
            return Err(Error::NonFinite("objective value".into()));
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient component {i}")));
        }
        Ok((f, g))
    }

    fn eval_along(&mut self, x: &[f64], t: f64, d: &[f64]) -> Result<Eval> {
        let trial: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + t * di).collect();
        self.eval(&trial)
    }
}

/// Minimiser of the cubic interpolating `(x1, f1, g1)` and `(x2, f2, g2)`,
/// clamped to `bounds`; falls back to bisection when the cubic has no real
/// minimiser.
fn cubic_interpolate(x1: f64, f1: f64, g1: f64, x2: f64, f2: f64, g2: f64, bounds: Option<(f64, f64)>) -> f64 {
    let (lo, hi) = bounds.unwrap_or(if x1 <= x2 { (x1, x2) } else { (x2, x1) });
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let d2_sq = d1 * d1 - g1 * g2;
    if d2_sq >= 0.0 {
        let d2 = d2_sq.sqrt();
        let t = if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        };
        if t.is_finite() {
            return t.clamp(lo, hi);
        }
    }
    0.5 * (lo + hi)
}

enum Search {
    Found { t: f64, f: f64, g: Vec<f64> },
    /// No strong-Wolfe point; carries the best sufficient-decrease point, if any.
    Failed(Option<(f64, f64, Vec<f64>)>),
}

#[derive(Clone)]
struct Trial {
    t: f64,
    f: f64,
    g: Vec<f64>,
    gtd: f64,
}

#[allow(clippy::too_many_arguments)]
fn strong_wolfe<F: FnMut(&[f64]) -> Result<Eval>>(
    obj: &mut Counted<F>,
    x: &[f64],
    t0: f64,
    d: &[f64],
    f0: f64,
    g0: &[f64],
    gtd0: f64,
    cfg: &OptimConfig,
) -> Result<Search> {
    let max_trials = cfg.max_line_search;
    let d_norm = inf_norm(d);
    let armijo = |t: f64, f: f64| f <= f0 + cfg.c1 * t * gtd0;
    let curvature = |gtd: f64| gtd.abs() <= -cfg.c2 * gtd0;

    let mut t = t0;
    let (f, g) = obj.eval_along(x, t, d)?;
    let mut cur = Trial { t, gtd: dot(&g, d), f, g };
    let mut trials = 1;
    let mut prev = Trial { t: 0.0, f: f0, g: g0.to_vec(), gtd: gtd0 };

    // Bracketing phase.
    let mut bracket: [Trial; 2];
    loop {
        if !armijo(cur.t, cur.f) || (trials > 1 && cur.f >= prev.f) {
            bracket = [prev, cur];
            break;
        }
        if curvature(cur.gtd) {
            return Ok(Search::Found { t: cur.t, f: cur.f, g: cur.g });
        }
        if cur.gtd >= 0.0 {
            bracket = [prev, cur];
            break;
        }
        if trials >= max_trials {
            // Still decreasing; accept the sufficient-decrease point.
            return Ok(Search::Failed(Some((cur.t, cur.f, cur.g))));
        }
        let min_step = cur.t + 0.01 * (cur.t - prev.t);
        let max_step = cur.t * 10.0;
        t = cubic_interpolate(prev.t, prev.f, prev.gtd, cur.t, cur.f, cur.gtd, Some((min_step, max_step)));
        let (f, g) = obj.eval_along(x, t, d)?;
        trials += 1;
        prev = std::mem::replace(&mut cur, Trial { t, gtd: dot(&g, d), f, g });
    }

    // Zoom phase: bracket[low] always satisfies sufficient decrease (or is t = 0).
    let mut insufficient_progress = false;
    let (mut low, mut high) = if bracket[0].f <= bracket[1].f { (0, 1) } else { (1, 0) };
    while trials < max_trials {
        if (bracket[1].t - bracket[0].t).abs() * d_norm < 1e-12 {
            break;
        }
        let (b0, b1) = (&bracket[0], &bracket[1]);
        t = cubic_interpolate(b0.t, b0.f, b0.gtd, b1.t, b1.f, b1.gtd, None);
        let (bmin, bmax) = (b0.t.min(b1.t), b0.t.max(b1.t));
        let eps = 0.1 * (bmax - bmin);
        if (bmax - t).min(t - bmin) < eps {
            if insufficient_progress || t >= bmax || t <= bmin {
                t = if (t - bmax).abs() < (t - bmin).abs() { bmax - eps } else { bmin + eps };
                insufficient_progress = false;
            } else {
                insufficient_progress = true;
            }
        } else {
            insufficient_progress = false;
        }
        let (f, g) = obj.eval_along(x, t, d)?;
        trials += 1;
        let trial = Trial { t, gtd: dot(&g, d), f, g };
        if !armijo(trial.t, trial.f) || trial.f >= bracket[low].f {
            bracket[high] = trial;
            if bracket[0].f <= bracket[1].f {
                low = 0;
                high = 1;
            } else {
                low = 1;
                high = 0;
            }
        } else {
            if curvature(trial.gtd) {
                return Ok(Search::Found { t: trial.t, f: trial.f, g: trial.g });
            }
            if trial.gtd * (bracket[high].t - bracket[low].t) >= 0.0 {
                bracket[high] = bracket[low].clone();
            }
            bracket[low] = trial;
        }
    }
    let best = &bracket[low];
    if best.t > 0.0 && best.f < f0 && armijo(best.t, best.f) {
        Ok(Search::Failed(Some((best.t, best.f, best.g.clone()))))
    } else {
        Ok(Search::Failed(None))
    }
}

/// Minimises `objective` from `x0`. The objective returns the value and the
/// gradient; a non-finite value aborts with [`Error::NonFinite`].
pub fn minimize<F>(objective: F, x0: Vec<f64>, cfg: &OptimConfig) -> Result<(Vec<f64>, TrainReport)>
where
    F: FnMut(&[f64]) -> Result<Eval>,
{
    cfg.validate()?;
    let start = Instant::now();
    let mut obj = Counted { f: objective, evals: 0 };
    let mut x = x0;
    let (mut f, mut g) = obj.eval(&x)?;
    let mut history = vec![f];
    let mut converged = inf_norm(&g) <= cfg.grad_tol;
    let mut line_search_failed = false;
    let mut iterations = 0;
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.history_size);

    while !converged && iterations < cfg.max_iters {
        let mut d = two_loop(&g, &pairs);
        let mut gtd = dot(&g, &d);
        if !(gtd < 0.0) {
            pairs.clear();
            d = g.iter().map(|v| -v).collect();
            gtd = -dot(&g, &g);
        }
        let t0 = if pairs.is_empty() { (1.0 / g.iter().map(|v| v.abs()).sum::<f64>()).min(1.0) } else { 1.0 };

        let (t, f_new, g_new) = match strong_wolfe(&mut obj, &x, t0, &d, f, &g, gtd, cfg)? {
            Search::Found { t, f, g } => (t, f, g),
            Search::Failed(best) => {
                line_search_failed = true;
                match best {
                    Some(step) => step,
                    None => break,
                }
            }
        };

        let s: Vec<f64> = d.iter().map(|di| t * di).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        f = f_new;
        g = g_new;
        history.push(f);
        iterations += 1;

        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if pairs.len() == cfg.history_size {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        converged = inf_norm(&g) <= cfg.grad_tol;
        if line_search_failed {
            break;
        }
    }

    let report = TrainReport {
        final_loss: f,
        iterations_used: iterations,
        loss_history: history,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        evaluations: obj.evals,
        converged,
        line_search_failed,
    };
    Ok((x, report))
}

/// `-H g` from the stored correction pairs.
fn two_loop(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut alphas = vec![0.0; pairs.len()];
    for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
        let a = rho * dot(s, &q);
        alphas[k] = a;
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (k, (s, y, rho)) in pairs.iter().enumerate() {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (alphas[k] - b) * si;
        }
    }
    q
}
