//! Small unconstrained optimizers used by the distance and bound searches.
//!
//! [`bfgs`] is a dense inverse-Hessian BFGS with either a strong Wolfe line
//! search (smooth objectives) or a weak Wolfe bracketing search suited to
//! nonsmooth objectives. [`multistart`] runs independent seeded starts in
//! parallel and keeps their order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LineSearch {
    /// Strong Wolfe conditions via bracketing and cubic interpolation.
    StrongWolfe,
    /// Weak Wolfe conditions via bisection/expansion.
    WeakWolfe,
}

#[derive(Clone, Debug)]
pub struct BfgsConfig {
    pub max_iter: usize,
    pub max_evals: usize,
    /// Stop once `‖∇f‖ ≤ grad_tol · max(1, f)`.
    pub grad_tol: f64,
    pub line_search: LineSearch,
    pub c1: f64,
    pub c2: f64,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        BfgsConfig {
            max_iter: 500,
            max_evals: 2000,
            grad_tol: 1e-8,
            line_search: LineSearch::StrongWolfe,
            c1: 1e-4,
            c2: 0.9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    MaxEvaluations,
    LineSearchFailed,
    /// The problem's normalization hook rejected the iterate.
    Degenerate,
}

#[derive(Clone, Debug)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
}

impl BfgsOutcome {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::GradientTolerance
    }
}

pub enum Normalization {
    Unchanged,
    /// The iterate was divided by this factor.
    Scaled(f64),
    Degenerate,
}

pub trait Problem {
    fn eval(&mut self, x: &[f64]) -> (f64, Vec<f64>);

    /// Called after each accepted step; scale-invariant problems rescale `x`.
    fn normalize(&mut self, _x: &mut [f64]) -> Normalization {
        Normalization::Unchanged
    }
}

/// Adapts a closure returning value and gradient.
pub struct FnProblem<F>(pub F);

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> Problem for FnProblem<F> {
    fn eval(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.0)(x)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(x: &[f64], alpha: f64, p: &[f64]) -> Vec<f64> {
    x.iter().zip(p).map(|(a, b)| a + alpha * b).collect()
}

struct Counter<'a, P: Problem> {
    problem: &'a mut P,
    evals: usize,
}

impl<P: Problem> Counter<'_, P> {
    fn eval(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        self.evals += 1;
        let (f, g) = self.problem.eval(x);
        if f.is_finite() {
            (f, g)
        } else {
            (f64::INFINITY, g)
        }
    }
}

struct Trial {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    x: Vec<f64>,
}

fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    t.is_finite().then_some(t)
}

#[allow(clippy::too_many_arguments)]
fn strong_wolfe<P: Problem>(
    ctx: &mut Counter<P>,
    x: &[f64],
    f0: f64,
    d0: f64,
    p: &[f64],
    alpha0: f64,
    cfg: &BfgsConfig,
    budget: usize,
) -> Option<Trial> {
    let eval_at = |ctx: &mut Counter<P>, a: f64| {
        let xa = axpy(x, a, p);
        let (fa, ga) = ctx.eval(&xa);
        let da = dot(&ga, p);
        (Trial { alpha: a, f: fa, g: ga, x: xa }, da)
    };
    let start = ctx.evals;
    let mut prev = Trial { alpha: 0.0, f: f0, g: Vec::new(), x: x.to_vec() };
    let mut dprev = d0;
    let mut alpha = alpha0;
    let mut first = true;
    loop {
        if ctx.evals - start >= budget {
            return None;
        }
        let (cur, dcur) = eval_at(ctx, alpha);
        if cur.f > f0 + cfg.c1 * alpha * d0 || (!first && cur.f >= prev.f) {
            return zoom(ctx, x, f0, d0, p, prev, dprev, cur, dcur, cfg, start, budget);
        }
        if dcur.abs() <= -cfg.c2 * d0 {
            return Some(cur);
        }
        if dcur >= 0.0 {
            return zoom(ctx, x, f0, d0, p, cur, dcur, prev, dprev, cfg, start, budget);
        }
        first = false;
        let next = (2.0 * alpha).min(alpha * 10.0);
        prev = cur;
        dprev = dcur;
        alpha = next;
        if alpha > 1e10 {
            return Some(prev);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn zoom<P: Problem>(
    ctx: &mut Counter<P>,
    x: &[f64],
    f0: f64,
    d0: f64,
    p: &[f64],
    mut lo: Trial,
    mut dlo: f64,
    mut hi: Trial,
    mut dhi: f64,
    cfg: &BfgsConfig,
    start: usize,
    budget: usize,
) -> Option<Trial> {
    loop {
        if ctx.evals - start >= budget || (hi.alpha - lo.alpha).abs() < 1e-16 * lo.alpha.abs().max(1e-300) {
            return (lo.alpha > 0.0).then_some(lo);
        }
        let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
        let width = b - a;
        let mut alpha = if hi.f.is_finite() {
            cubic_min(lo.alpha, lo.f, dlo, hi.alpha, hi.f, dhi).unwrap_or(0.5 * (a + b))
        } else {
            0.5 * (a + b)
        };
        if !(alpha > a + 0.1 * width && alpha < b - 0.1 * width) {
            alpha = 0.5 * (a + b);
        }
        let xa = axpy(x, alpha, p);
        let (fa, ga) = ctx.eval(&xa);
        let da = dot(&ga, p);
        let cur = Trial { alpha, f: fa, g: ga, x: xa };
        if fa > f0 + cfg.c1 * alpha * d0 || fa >= lo.f {
            hi = cur;
            dhi = da;
        } else {
            if da.abs() <= -cfg.c2 * d0 {
                return Some(cur);
            }
            if da * (hi.alpha - lo.alpha) >= 0.0 {
                hi = std::mem::replace(&mut lo, cur);
                dhi = dlo;
            } else {
                lo = cur;
            }
            dlo = da;
        }
    }
}

/// Lewis–Overton bracketing search for the weak Wolfe conditions.
#[allow(clippy::too_many_arguments)]
fn weak_wolfe<P: Problem>(
    ctx: &mut Counter<P>,
    x: &[f64],
    f0: f64,
    d0: f64,
    p: &[f64],
    alpha0: f64,
    cfg: &BfgsConfig,
    budget: usize,
) -> Option<Trial> {
    let start = ctx.evals;
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    let mut alpha = alpha0;
    let mut best: Option<Trial> = None;
    while ctx.evals - start < budget {
        let xa = axpy(x, alpha, p);
        let (fa, ga) = ctx.eval(&xa);
        let da = dot(&ga, p);
        let cur = Trial { alpha, f: fa, g: ga, x: xa };
        if fa > f0 + cfg.c1 * alpha * d0 {
            hi = alpha;
        } else if da < cfg.c2 * d0 {
            lo = alpha;
            if best.as_ref().is_none_or(|b| cur.f < b.f) {
                best = Some(cur);
            }
        } else {
            return Some(cur);
        }
        alpha = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo };
        if hi.is_finite() && hi - lo < 1e-15 * hi {
            break;
        }
    }
    best
}

/// Minimizes `problem` from `x0` with BFGS.
pub fn bfgs<P: Problem>(problem: &mut P, x0: &[f64], cfg: &BfgsConfig) -> BfgsOutcome {
    let dim = x0.len();
    let mut ctx = Counter { problem, evals: 0 };
    let mut x = x0.to_vec();
    let (mut f, mut g) = ctx.eval(&x);
    let mut h = identity(dim);
    let mut scaled_once = false;
    let mut iterations = 0;
    let stop = loop {
        let gn = norm(&g);
        if gn <= cfg.grad_tol * f.abs().max(1.0) {
            break StopReason::GradientTolerance;
        }
        if iterations >= cfg.max_iter {
            break StopReason::MaxIterations;
        }
        if ctx.evals >= cfg.max_evals {
            break StopReason::MaxEvaluations;
        }
        let mut p = matvec_neg(&h, &g);
        let mut d0 = dot(&g, &p);
        if d0 >= 0.0 || !d0.is_finite() {
            h = identity(dim);
            scaled_once = false;
            p = g.iter().map(|v| -v).collect();
            d0 = -gn * gn;
        }
        let alpha0 = if iterations == 0 { (1.0 / gn).min(1.0) } else { 1.0 };
        let budget = (cfg.max_evals - ctx.evals).min(40);
        let trial = match cfg.line_search {
            LineSearch::StrongWolfe => strong_wolfe(&mut ctx, &x, f, d0, &p, alpha0, cfg, budget),
            LineSearch::WeakWolfe => weak_wolfe(&mut ctx, &x, f, d0, &p, alpha0, cfg, budget),
        };
        let Some(trial) = trial else {
            break StopReason::LineSearchFailed;
        };
        if trial.f >= f && trial.alpha * norm(&p) <= 1e-15 * norm(&x).max(1e-300) {
            break StopReason::LineSearchFailed;
        }
        iterations += 1;
        let s: Vec<f64> = p.iter().map(|v| trial.alpha * v).collect();
        let y: Vec<f64> = trial.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if !scaled_once {
                let gamma = sy / dot(&y, &y);
                for v in h.iter_mut() {
                    *v *= gamma;
                }
                scaled_once = true;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
        x = trial.x;
        f = trial.f;
        g = trial.g;
        match ctx.problem.normalize(&mut x) {
            Normalization::Unchanged => {}
            Normalization::Scaled(c) => {
                for v in g.iter_mut() {
                    *v *= c;
                }
                let c2 = 1.0 / (c * c);
                for v in h.iter_mut() {
                    *v *= c2;
                }
            }
            Normalization::Degenerate => break StopReason::Degenerate,
        }
    };
    BfgsOutcome {
        grad_norm: norm(&g),
        x,
        f,
        iterations,
        evaluations: ctx.evals,
        stop,
    }
}

fn identity(dim: usize) -> Vec<f64> {
    let mut h = vec![0.0; dim * dim];
    for i in 0..dim {
        h[i * dim + i] = 1.0;
    }
    h
}

fn matvec_neg(h: &[f64], g: &[f64]) -> Vec<f64> {
    let dim = g.len();
    (0..dim).map(|i| -dot(&h[i * dim..(i + 1) * dim], g)).collect()
}

/// `H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let dim = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..dim).map(|i| dot(&h[i * dim..(i + 1) * dim], y)).collect();
    let yhy = dot(y, &hy);
    let coef = (1.0 + rho * yhy) * rho;
    for i in 0..dim {
        for j in 0..dim {
            h[i * dim + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

/// Central-difference gradient with a relative step.
pub fn fd_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let step = h * x[i].abs().max(1.0);
            let orig = xp[i];
            xp[i] = orig + step;
            let fp = f(&xp);
            xp[i] = orig - step;
            let fm = f(&xp);
            xp[i] = orig;
            (fp - fm) / (2.0 * step)
        })
        .collect()
}

/// Value-only objective wrapped with a finite-difference gradient.
pub struct FdProblem<F> {
    pub f: F,
    pub step: f64,
}

impl<F: FnMut(&[f64]) -> f64> Problem for FdProblem<F> {
    fn eval(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        let fx = (self.f)(x);
        let g = fd_gradient(&mut self.f, x, self.step);
        (fx, g)
    }
}

/// Deterministic generator for start `index` under a global `seed`.
pub fn start_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Runs `starts` independent jobs in parallel; results keep start order.
pub fn multistart<T, F>(starts: usize, seed: u64, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> T + Sync,
{
    (0..starts)
        .into_par_iter()
        .map(|i| {
            let mut rng = start_rng(seed, i);
            job(i, &mut rng)
        })
        .collect()
}

/// Index of the smallest key; ties go to the lowest index, NaN keys never win.
pub fn argmin_by_key<T>(items: &[T], key: impl Fn(&T) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, it) in items.iter().enumerate() {
        let k = key(it);
        if k.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| k < b) {
            best = Some((i, k));
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        (f, g)
    }

    #[test]
    fn bfgs_solves_rosenbrock() {
        let out = bfgs(&mut FnProblem(rosenbrock), &[-1.2, 1.0], &BfgsConfig::default());
        assert!(out.converged(), "{:?}", out.stop);
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn weak_wolfe_handles_kinks() {
        // f(x) = |x_0| + 2|x_1| + 0.1 x_0^2, minimum at 0
        let f = |x: &[f64]| {
            let v = x[0].abs() + 2.0 * x[1].abs() + 0.1 * x[0] * x[0];
            let g = vec![x[0].signum() + 0.2 * x[0], 2.0 * x[1].signum()];
            (v, g)
        };
        let cfg = BfgsConfig { line_search: LineSearch::WeakWolfe, c2: 0.5, ..Default::default() };
        let out = bfgs(&mut FnProblem(f), &[1.3, -0.7], &cfg);
        assert!(out.f < 1e-6, "f = {}", out.f);
    }

    #[test]
    fn finite_difference_gradient_of_quadratic() {
        let mut f = |x: &[f64]| 3.0 * x[0] * x[0] + x[0] * x[1] - x[1];
        let g = fd_gradient(&mut f, &[0.5, -2.0], 1e-6);
        assert!((g[0] - 1.0).abs() < 1e-7);
        assert!((g[1] + 0.5).abs() < 1e-7);
    }

    #[test]
    fn multistart_is_deterministic_and_ordered() {
        use rand::Rng;
        let a = multistart(8, 42, |i, rng| (i, rng.random::<u64>()));
        let b = multistart(8, 42, |i, rng| (i, rng.random::<u64>()));
        assert_eq!(a, b);
        assert!(a.iter().enumerate().all(|(i, (j, _))| i == *j));
        assert_ne!(a[0].1, a[1].1);
    }

    #[test]
    fn argmin_prefers_lowest_index() {
        assert_eq!(argmin_by_key(&[3.0, 1.0, 1.0, f64::NAN], |x| *x), Some(1));
        assert_eq!(argmin_by_key::<f64>(&[], |x| *x), None);
    }
}
