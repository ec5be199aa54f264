//! Direct minimization of `f(X) = ‖H X (M X)†‖_s` over chain matrices.
//!
//! `H = [P(λ0) … P^{(p)}(λ0)/p!] = G M` with `G = [A_0 … A_k]`, so
//! `H X (M X)† = G Y Y†` for `Y = M X`, and the minimizing perturbation of a
//! fixed `X` is `[ΔA_0 … ΔA_k] = -H X (M X)†`.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::bounds::{self, BoundResult, SearchConfig};
use crate::certify::{multiplicity_at_least, recover_chain};
use crate::linalg::{default_rank_tol, pinv_from_svd, CMat, CVec, Svd, C64, ZERO};
use crate::optim::{self, BfgsConfig, LineSearch, Normalization, Problem};
use crate::polyalg::{
    build_m, build_t, eval_derivative_row, truncation_order, GammaVector, MatrixPolynomial,
    NormKind, PerturbationPolynomial,
};
use crate::{Error, Result};

pub use crate::linalg::pseudoinverse;

/// Structured `X` built from candidate chain vectors `x_0 … x_r`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainMatrix {
    xs: Vec<CVec>,
    #[serde(skip)]
    gamma: GammaVector,
    k: usize,
}

impl ChainMatrix {
    pub fn new(xs: Vec<CVec>, gamma: GammaVector, k: usize) -> Result<Self> {
        let n = xs.first().map(|x| x.len()).ok_or(Error::ZeroEigenvector)?;
        if n == 0 || xs.iter().any(|x| x.len() != n) {
            return Err(Error::Dimension("chain vectors must share a positive length".into()));
        }
        if gamma.len() + 1 != xs.len() {
            return Err(Error::Dimension(format!(
                "{} chain vectors need {} scaling parameters, got {}",
                xs.len(),
                xs.len() - 1,
                gamma.len()
            )));
        }
        if xs[0].iter().all(|z| *z == ZERO) {
            return Err(Error::ZeroEigenvector);
        }
        Ok(ChainMatrix { xs, gamma, k })
    }

    /// Chain matrix with all scaling parameters equal to one.
    pub fn unscaled(xs: Vec<CVec>, k: usize) -> Result<Self> {
        let r = xs.len().saturating_sub(1);
        Self::new(xs, GammaVector::ones(r), k)
    }

    pub fn r(&self) -> usize {
        self.xs.len() - 1
    }

    pub fn n(&self) -> usize {
        self.xs[0].len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn xs(&self) -> &[CVec] {
        &self.xs
    }

    pub fn gamma(&self) -> &GammaVector {
        &self.gamma
    }

    /// The `(p+1)n × (r+1)` matrix whose block `(d, c)`, `d ≤ min(c, p)`, is
    /// `(Π_{t=c-d}^{c-1} γ_t) x_{c-d}`.
    pub fn materialize(&self) -> CMat {
        let (n, r) = (self.n(), self.r());
        let p = truncation_order(r, self.k);
        let mut x = CMat::zeros((p + 1) * n, r + 1);
        for c in 0..=r {
            for d in 0..=c.min(p) {
                let scale = self.gamma.product(c - d, c);
                x.view_mut((d * n, c), (n, 1))
                    .copy_from(&(&self.xs[c - d] * C64::new(scale, 0.0)));
            }
        }
        x
    }

    /// Equivalent chain with `γ = 1`: `X_γ(x) = X_1(y) diag(g)` where
    /// `g_j = γ_0 ⋯ γ_{j-1}` and `y_j = x_j / g_j`, so the column space and
    /// the objective are unchanged.
    pub fn to_unscaled(&self) -> ChainMatrix {
        let xs = self
            .xs
            .iter()
            .enumerate()
            .map(|(j, x)| x * C64::new(1.0 / self.gamma.product(0, j), 0.0))
            .collect();
        ChainMatrix { xs, gamma: GammaVector::ones(self.r()), k: self.k }
    }
}

/// Whether the chain vectors are optimized over the reals or the complexes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Field {
    Real,
    Complex,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FieldChoice {
    /// Real when `P` and `λ0` are real, complex otherwise.
    Auto,
    Real,
    Complex,
}

impl FieldChoice {
    pub fn resolve(self, poly: &MatrixPolynomial, lambda0: C64) -> Field {
        match self {
            FieldChoice::Real => Field::Real,
            FieldChoice::Complex => Field::Complex,
            FieldChoice::Auto if poly.is_real() && lambda0.im == 0.0 => Field::Real,
            FieldChoice::Auto => Field::Complex,
        }
    }
}

/// Precomputed data for evaluating `f` and its gradient at fixed `(P, λ0, r)`.
#[derive(Clone, Debug)]
pub struct DistanceObjective {
    n: usize,
    k: usize,
    r: usize,
    norm: NormKind,
    g: CMat,
    h_row: CMat,
    m: CMat,
}

/// Value of the objective together with the pieces the gradient needs.
struct Evaluated {
    value: f64,
    /// `H X (M X)†`, the negated optimal perturbation.
    solution: CMat,
    y: CMat,
    y_pinv: CMat,
    rank_cliff: bool,
}

#[derive(Clone, Debug)]
pub struct Gradient {
    pub value: f64,
    /// One block per chain vector `x_j`, in the Wirtinger convention
    /// `d f = Re Σ_j ⟨grad_j, dx_j⟩`.
    pub blocks: Vec<CVec>,
    pub rank_cliff: bool,
}

impl DistanceObjective {
    pub fn new(poly: &MatrixPolynomial, lambda0: C64, r: usize, norm: NormKind) -> Self {
        let (n, k) = (poly.n(), poly.degree());
        let p = truncation_order(r, k);
        DistanceObjective {
            n,
            k,
            r,
            norm,
            g: poly.stacked(),
            h_row: eval_derivative_row(poly, lambda0, p).as_matrix(),
            m: build_m(lambda0, k, r, n),
        }
    }

    pub fn norm(&self) -> NormKind {
        self.norm
    }

    fn evaluate(&self, x: &CMat) -> Evaluated {
        let y = &self.m * x;
        let svd = Svd::new(&y);
        let tol = default_rank_tol(y.nrows(), y.ncols());
        let cut = tol * svd.sigma_max();
        let y_pinv = pinv_from_svd(&svd, tol, y.ncols(), y.nrows());
        let solution = &self.h_row * x * &y_pinv;
        let rank = svd.s.iter().filter(|&&s| s > cut).count();
        let rank_cliff = rank == 0
            || svd.s[rank - 1] < 1e3 * cut
            || (rank < svd.s.len() && svd.s[rank - 1] < 1e3 * svd.s[rank]);
        Evaluated { value: self.norm.of(&solution), solution, y, y_pinv, rank_cliff }
    }

    /// `f(X) = ‖H X (M X)†‖_s`.
    pub fn value(&self, chain: &ChainMatrix) -> f64 {
        self.evaluate(&chain.materialize()).value
    }

    /// `[ΔA_0 … ΔA_k] = -H X (M X)†`, from the same pseudoinverse as [`value`](Self::value).
    pub fn perturbation(&self, chain: &ChainMatrix) -> PerturbationPolynomial {
        let ev = self.evaluate(&chain.materialize());
        PerturbationPolynomial::from_stacked(&(-ev.solution), self.n)
            .expect("solution has n rows and (k+1)n columns")
    }

    /// Gradient of `f²` (Frobenius) or a subgradient of `f` (spectral norm)
    /// with respect to the chain vectors, for `γ = 1`.
    pub fn gradient(&self, chain: &ChainMatrix) -> Gradient {
        let ev = self.evaluate(&chain.materialize());
        let psi = self.psi(&ev);
        Gradient {
            value: ev.value,
            blocks: self.accumulate(&psi),
            rank_cliff: ev.rank_cliff,
        }
    }

    /// `ψ = M^H ∇_Y`, with `∇_Y = 2 (I - Y Y†) G^H G (Y†)^H` for `f²` and
    /// `(I - Y Y†) G^H u v^H (Y†)^H` for the top singular pair `(u, v)` of
    /// `G Y Y†` in the spectral case.
    fn psi(&self, ev: &Evaluated) -> CMat {
        let grad_y = match self.norm {
            NormKind::Frobenius => {
                let gy = &self.g * ev.y_pinv.adjoint();
                let z = self.g.adjoint() * gy * C64::new(2.0, 0.0);
                &z - &ev.y * (&ev.y_pinv * &z)
            }
            NormKind::Two => {
                let svd = Svd::new(&ev.solution);
                let u = svd.u.column(0).into_owned();
                let v = svd.v.column(0).into_owned();
                let left = self.g.adjoint() * u;
                let left = &left - &ev.y * (&ev.y_pinv * &left);
                let right = &ev.y_pinv * v;
                left * right.adjoint()
            }
        };
        self.m.adjoint() * grad_y
    }

    /// Sums `ψ` over the positions where each `x_j` occurs in `X`.
    fn accumulate(&self, psi: &CMat) -> Vec<CVec> {
        let (n, r) = (self.n, self.r);
        let p = truncation_order(r, self.k);
        let mut blocks = vec![CVec::zeros(n); r + 1];
        for c in 0..=r {
            for d in 0..=c.min(p) {
                blocks[c - d] += psi.view((d * n, c), (n, 1));
            }
        }
        blocks
    }

    /// Value that the optimizer minimizes: `f²` for Frobenius, `f` for the
    /// spectral norm.
    pub fn smooth_value(&self, f: f64) -> f64 {
        match self.norm {
            NormKind::Frobenius => f * f,
            NormKind::Two => f,
        }
    }
}

/// Free function form of [`DistanceObjective::value`].
pub fn objective(
    poly: &MatrixPolynomial,
    lambda0: C64,
    r: usize,
    chain: &ChainMatrix,
    norm: NormKind,
) -> f64 {
    DistanceObjective::new(poly, lambda0, r, norm).value(&chain.to_unscaled())
}

/// Gradient of `f(X)²` in the Frobenius norm.
#[allow(non_snake_case)]
pub fn gradient_F(poly: &MatrixPolynomial, lambda0: C64, r: usize, chain: &ChainMatrix) -> Gradient {
    DistanceObjective::new(poly, lambda0, r, NormKind::Frobenius).gradient(chain)
}

pub fn extract_perturbation(
    poly: &MatrixPolynomial,
    lambda0: C64,
    r: usize,
    chain: &ChainMatrix,
    norm: NormKind,
) -> PerturbationPolynomial {
    DistanceObjective::new(poly, lambda0, r, norm).perturbation(&chain.to_unscaled())
}

/// Packs chain vectors into real optimization variables.
pub fn to_vars(xs: &[CVec], field: Field) -> Vec<f64> {
    let mut out = Vec::new();
    for x in xs {
        for z in x.iter() {
            out.push(z.re);
            if field == Field::Complex {
                out.push(z.im);
            }
        }
    }
    out
}

pub fn from_vars(vars: &[f64], n: usize, field: Field) -> Vec<CVec> {
    let width = match field {
        Field::Real => 1,
        Field::Complex => 2,
    };
    vars.chunks(n * width)
        .map(|chunk| {
            CVec::from_iterator(
                n,
                chunk.chunks(width).map(|c| C64::new(c[0], c.get(1).copied().unwrap_or(0.0))),
            )
        })
        .collect()
}

fn grad_to_vars(blocks: &[CVec], field: Field) -> Vec<f64> {
    to_vars(blocks, field)
}

struct ChainProblem<'a> {
    obj: &'a DistanceObjective,
    field: Field,
    cliffs: usize,
}

impl ChainProblem<'_> {
    fn chain(&self, vars: &[f64]) -> Option<ChainMatrix> {
        ChainMatrix::unscaled(from_vars(vars, self.obj.n, self.field), self.obj.k).ok()
    }
}

impl Problem for ChainProblem<'_> {
    fn eval(&mut self, vars: &[f64]) -> (f64, Vec<f64>) {
        let Some(chain) = self.chain(vars) else {
            return (f64::INFINITY, vec![0.0; vars.len()]);
        };
        let grad = self.obj.gradient(&chain);
        if grad.rank_cliff {
            self.cliffs += 1;
        }
        (self.obj.smooth_value(grad.value), grad_to_vars(&grad.blocks, self.field))
    }

    fn normalize(&mut self, vars: &mut [f64]) -> Normalization {
        let c = vars.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(c.is_finite() && c > 0.0) {
            return Normalization::Degenerate;
        }
        for v in vars.iter_mut() {
            *v /= c;
        }
        let width = match self.field {
            Field::Real => 1,
            Field::Complex => 2,
        };
        let lead = vars[..self.obj.n * width].iter().map(|v| v * v).sum::<f64>().sqrt();
        if lead < 1e-10 {
            Normalization::Degenerate
        } else {
            Normalization::Scaled(c)
        }
    }
}

#[derive(Clone, Debug)]
pub struct DistoptConfig {
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub max_evals: usize,
    pub grad_tol: f64,
    pub field: FieldChoice,
    /// Extra starting points tried before the random ones.
    pub seeds: Vec<ChainMatrix>,
    /// Restarts allowed per start when `x_0` collapses.
    pub max_restarts: usize,
}

impl Default for DistoptConfig {
    fn default() -> Self {
        DistoptConfig {
            starts: 10,
            seed: 0,
            max_iter: 500,
            max_evals: 2500,
            grad_tol: 1e-8,
            field: FieldChoice::Auto,
            seeds: Vec::new(),
            max_restarts: 3,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimizationResult {
    pub value: f64,
    pub x_star: ChainMatrix,
    #[serde(skip)]
    pub perturbation: PerturbationPolynomial,
    pub iterations: usize,
    pub evaluations: usize,
    pub restarts: usize,
    pub converged: bool,
    pub grad_norm: f64,
    /// Index of the winning start (seeds first, then random starts).
    pub best_start: usize,
    pub rank_cliff_hits: usize,
    pub field: Field,
}

/// Starting points from the right singular vectors of `T(P, λ0)` belonging to
/// its `r + 1` smallest singular values.
pub fn svd_seeds(poly: &MatrixPolynomial, lambda0: C64, r: usize) -> Vec<Vec<CVec>> {
    let n = poly.n();
    let t = build_t(poly, lambda0, r);
    let svd = Svd::new(&t);
    let dim = t.ncols();
    (0..=r)
        .filter_map(|i| {
            let col = svd.v.column(dim - 1 - i).into_owned();
            let xs: Vec<CVec> = (0..=r).map(|j| col.rows(j * n, n).into_owned()).collect();
            xs[0].norm().gt(&1e-8).then_some(xs)
        })
        .collect()
}

/// Rotates a complex chain by a global phase so that its largest entry is
/// real, then keeps the real part.
fn realify(xs: &[CVec]) -> Vec<CVec> {
    let big = xs
        .iter()
        .flat_map(|x| x.iter())
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(C64::new(1.0, 0.0));
    let phase = if big.norm() > 0.0 { big.conj() / big.norm() } else { C64::new(1.0, 0.0) };
    xs.iter().map(|x| (x * phase).map(|z| C64::new(z.re, 0.0))).collect()
}

fn random_chain(rng: &mut impl rand::Rng, n: usize, r: usize, field: Field) -> Vec<CVec> {
    (0..=r)
        .map(|_| {
            CVec::from_fn(n, |_, _| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = if field == Field::Complex { StandardNormal.sample(rng) } else { 0.0 };
                C64::new(re, im)
            })
        })
        .collect()
}

struct RunOutcome {
    value: f64,
    vars: Vec<f64>,
    iterations: usize,
    evaluations: usize,
    restarts: usize,
    converged: bool,
    grad_norm: f64,
    cliffs: usize,
}

fn run_start(
    obj: &DistanceObjective,
    field: Field,
    start: Vec<f64>,
    cfg: &DistoptConfig,
    rng: &mut impl rand::Rng,
) -> RunOutcome {
    let bcfg = BfgsConfig {
        max_iter: cfg.max_iter,
        max_evals: cfg.max_evals,
        grad_tol: cfg.grad_tol,
        line_search: match obj.norm {
            NormKind::Frobenius => LineSearch::StrongWolfe,
            NormKind::Two => LineSearch::WeakWolfe,
        },
        c1: 1e-4,
        c2: match obj.norm {
            NormKind::Frobenius => 0.9,
            NormKind::Two => 0.5,
        },
    };
    let mut problem = ChainProblem { obj, field, cliffs: 0 };
    let mut x0 = start;
    let mut restarts = 0;
    let mut iterations = 0;
    let mut evaluations = 0;
    loop {
        let norm0 = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm0 > 0.0 {
            x0.iter_mut().for_each(|v| *v /= norm0);
        }
        let out = optim::bfgs(&mut problem, &x0, &bcfg);
        iterations += out.iterations;
        evaluations += out.evaluations;
        if out.stop == optim::StopReason::Degenerate && restarts < cfg.max_restarts {
            restarts += 1;
            x0 = out
                .x
                .iter()
                .map(|v| v + 1e-2 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                .collect::<Vec<f64>>();
            continue;
        }
        let value = problem
            .chain(&out.x)
            .map(|c| obj.value(&c))
            .unwrap_or(f64::INFINITY);
        let converged = out.converged();
        return RunOutcome {
            value,
            vars: out.x,
            iterations,
            evaluations,
            restarts,
            converged,
            grad_norm: out.grad_norm,
            cliffs: problem.cliffs,
        };
    }
}

/// Multistart BFGS for `δ_s(P, λ0, r+1)` with `γ = 1`.
///
/// If `λ0` already has multiplicity at least `r + 1`, returns zero with
/// `ΔP = 0` without optimizing.
pub fn minimize(
    poly: &MatrixPolynomial,
    lambda0: C64,
    r: usize,
    norm: NormKind,
    cfg: &DistoptConfig,
) -> Result<OptimizationResult> {
    let (n, k) = (poly.n(), poly.degree());
    if r == 0 || r >= k * n {
        return Err(Error::InvalidParameter(format!("r = {r} must satisfy 1 ≤ r < kn = {}", k * n)));
    }
    let field = cfg.field.resolve(poly, lambda0);
    let (already, _) = multiplicity_at_least(poly, lambda0, r + 1, 0.0)?;
    if already {
        let xs = recover_chain(poly, lambda0, r + 1, 0.0)
            .or_else(|_| svd_seeds(poly, lambda0, r).into_iter().next().ok_or(Error::ZeroEigenvector))?;
        return Ok(OptimizationResult {
            value: 0.0,
            x_star: ChainMatrix::unscaled(xs, k)?,
            perturbation: MatrixPolynomial::zeros(n, k),
            iterations: 0,
            evaluations: 0,
            restarts: 0,
            converged: true,
            grad_norm: 0.0,
            best_start: 0,
            rank_cliff_hits: 0,
            field,
        });
    }
    let obj = DistanceObjective::new(poly, lambda0, r, norm);
    let mut fixed: Vec<Vec<CVec>> = cfg.seeds.iter().map(|c| c.to_unscaled().xs).collect();
    fixed.extend(svd_seeds(poly, lambda0, r));
    if field == Field::Real {
        fixed = fixed.iter().map(|xs| realify(xs)).collect();
    }
    let fixed: Vec<Vec<f64>> = fixed
        .iter()
        .filter(|xs| xs[0].norm() > 1e-8)
        .map(|xs| to_vars(xs, field))
        .collect();
    let total = fixed.len() + cfg.starts;
    let runs = optim::multistart(total, cfg.seed, |i, rng| {
        let start = match fixed.get(i) {
            Some(v) => v.clone(),
            None => to_vars(&random_chain(rng, n, r, field), field),
        };
        run_start(&obj, field, start, cfg, rng)
    });
    let best = optim::argmin_by_key(&runs, |o| o.value).ok_or_else(|| {
        Error::InvalidParameter("no optimization start produced a finite value".into())
    })?;
    let win = &runs[best];
    let x_star = ChainMatrix::unscaled(from_vars(&win.vars, n, field), k)?;
    let perturbation = obj.perturbation(&x_star);
    Ok(OptimizationResult {
        value: win.value,
        x_star,
        perturbation,
        iterations: runs.iter().map(|o| o.iterations).sum(),
        evaluations: runs.iter().map(|o| o.evaluations).sum(),
        restarts: runs.iter().map(|o| o.restarts).sum(),
        converged: win.converged,
        grad_norm: win.grad_norm,
        best_start: best,
        rank_cliff_hits: runs.iter().map(|o| o.cliffs).sum(),
        field,
    })
}

/// Which matrix attains the closed-form rank-one restricted distance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Attained {
    X,
    Y,
}

/// Frobenius distance to a defective eigenvalue at zero under rank-one
/// coefficient perturbations, `min{σ_min(X), σ_min(Y)}`, for `rank A_0 = n-1`.
pub fn rank1_restricted_distance(poly: &MatrixPolynomial) -> Result<(f64, Attained)> {
    let n = poly.n();
    if poly.degree() < 1 {
        return Err(Error::InvalidPolynomial("degree must be at least one".into()));
    }
    let svd = Svd::new(poly.coeff(0));
    let rank = svd.rank(10.0 * default_rank_tol(n, n));
    if rank != n - 1 {
        return Err(Error::RankCondition { rank, expected: n - 1 });
    }
    let a = svd.u.adjoint() * poly.coeff(1) * &svd.v;
    let mut x = CMat::zeros(n, n);
    let mut y = CMat::zeros(n, n);
    for i in 0..n - 1 {
        x[(i, i)] = C64::new(svd.s[i], 0.0);
        y[(i, i)] = C64::new(svd.s[i], 0.0);
        y[(i, n - 1)] = a[(i, n - 1)];
    }
    for j in 0..n {
        x[(n - 1, j)] = a[(n - 1, j)];
    }
    y[(n - 1, n - 1)] = a[(n - 1, n - 1)];
    let sx = crate::linalg::singular_values(&x)[n - 1];
    let sy = crate::linalg::singular_values(&y)[n - 1];
    Ok(if sx <= sy { (sx, Attained::X) } else { (sy, Attained::Y) })
}

/// Upper bound for `r = 1`, `λ0 = 0` that also admits `γ` with `v_0 = 0`,
/// where `ΔA_0 = -f(γ) u_1 v_1^*` has norm `f(γ)`.
pub fn gamma_free_r1_refinement(
    poly: &MatrixPolynomial,
    norm: NormKind,
    search: &SearchConfig,
) -> Result<BoundResult> {
    let standard = bounds::upper_bound(poly, ZERO, 1, norm, search)?;
    let refined = bounds::search_gamma_free(poly, search)?;
    Ok(match refined {
        Some(b) if b.value < standard.value => b,
        _ => standard,
    })
}

/// `ΔP` with `ΔA_0 = -f u_1 v_1^*` and all other coefficients zero.
pub fn gamma_free_perturbation(n: usize, k: usize, f: f64, u1: &CVec, v1: &CVec) -> PerturbationPolynomial {
    let mut coeffs = vec![CMat::zeros(n, n); k + 1];
    coeffs[0] = u1 * v1.adjoint() * C64::new(-f, 0.0);
    MatrixPolynomial::new(coeffs).expect("finite rank-one coefficient")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_poly(rng: &mut ChaCha8Rng, n: usize, k: usize) -> MatrixPolynomial {
        let coeffs = (0..=k)
            .map(|_| CMat::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), 0.0)))
            .collect();
        MatrixPolynomial::new(coeffs).unwrap()
    }

    fn random_xs(rng: &mut ChaCha8Rng, n: usize, r: usize) -> Vec<CVec> {
        (0..=r)
            .map(|_| CVec::from_fn(n, |_, _| C64::new(rng.random_range(-1.0..1.0), 0.0)))
            .collect()
    }

    #[test]
    fn chain_matrix_layout_for_r_above_k() {
        let xs: Vec<CVec> = (0..4).map(|j| CVec::from_element(1, C64::new(j as f64 + 1.0, 0.0))).collect();
        let gamma = GammaVector::new(vec![2.0, 3.0, 5.0]).unwrap();
        let x = ChainMatrix::new(xs, gamma, 1).unwrap().materialize();
        // rows: derivative order 0..=1, columns: c = 0..=3
        let expect = [[1.0, 2.0, 3.0, 4.0], [0.0, 2.0 * 1.0, 3.0 * 2.0, 5.0 * 3.0]];
        for d in 0..2 {
            for c in 0..4 {
                assert_eq!(x[(d, c)], C64::new(expect[d][c], 0.0), "({d},{c})");
            }
        }
    }

    #[test]
    fn unscaling_preserves_column_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs = random_xs(&mut rng, 2, 3);
        let gamma = GammaVector::new(vec![0.5, 3.0, 1.7]).unwrap();
        let scaled = ChainMatrix::new(xs, gamma, 3).unwrap();
        let plain = scaled.to_unscaled();
        let g = [1.0, 0.5, 1.5, 2.55];
        let xm = plain.materialize();
        let xg = scaled.materialize();
        for (c, &gc) in g.iter().enumerate() {
            let diff = xg.column(c) - xm.column(c) * C64::new(gc, 0.0);
            assert!(diff.norm() < 1e-12);
        }
    }

    #[test]
    fn exact_chain_gives_zero_objective_and_gradient() {
        let lam0 = C64::new(0.4, 0.0);
        let a0 = CMat::from_row_slice(2, 2, &[-lam0, -ONE, ZERO, -lam0]);
        let p = MatrixPolynomial::new(vec![a0, CMat::identity(2, 2)]).unwrap();
        let xs = vec![
            CVec::from_vec(vec![ONE, ZERO]),
            CVec::from_vec(vec![ZERO, ONE]),
        ];
        let chain = ChainMatrix::unscaled(xs, 1).unwrap();
        assert!(objective(&p, lam0, 1, &chain, NormKind::Frobenius) < 1e-15);
        let g = gradient_F(&p, lam0, 1, &chain);
        assert!(g.blocks.iter().all(|b| b.norm() < 1e-14));
        let dp = extract_perturbation(&p, lam0, 1, &chain, NormKind::Two);
        assert!(dp.norm(NormKind::Frobenius) < 1e-15);
    }

    #[test]
    fn objective_is_scale_invariant_and_matches_perturbation_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = random_poly(&mut rng, 2, 3);
        let lam0 = C64::new(0.7, 0.0);
        let xs = random_xs(&mut rng, 2, 2);
        let chain = ChainMatrix::unscaled(xs.clone(), 3).unwrap();
        for norm in [NormKind::Frobenius, NormKind::Two] {
            let f = objective(&p, lam0, 2, &chain, norm);
            for c in [2.0, 1e3, 1e-3] {
                let scaled: Vec<CVec> = xs.iter().map(|x| x * C64::new(c, 0.0)).collect();
                let fc = objective(&p, lam0, 2, &ChainMatrix::unscaled(scaled, 3).unwrap(), norm);
                assert!((fc - f).abs() <= 1e-12 * f);
            }
            let dp = extract_perturbation(&p, lam0, 2, &chain, norm);
            assert!((dp.norm(norm) - f).abs() <= 1e-12 * f);
        }
    }

    #[test]
    fn zero_lambda_perturbation_has_trailing_zero_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_poly(&mut rng, 2, 4);
        let chain = ChainMatrix::unscaled(random_xs(&mut rng, 2, 1), 4).unwrap();
        let dp = extract_perturbation(&p, ZERO, 1, &chain, NormKind::Frobenius);
        for i in 2..=4 {
            assert!(dp.coeff(i).norm() == 0.0);
        }
    }

    fn fd_check(norm: NormKind, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_poly(&mut rng, 2, 3);
        let lam0 = C64::new(rng.random_range(-1.0..1.0), 0.0);
        let r = 2;
        let obj = DistanceObjective::new(&p, lam0, r, norm);
        let xs = random_xs(&mut rng, 2, r);
        let vars = to_vars(&xs, Field::Real);
        let g = obj.gradient(&ChainMatrix::unscaled(xs, 3).unwrap());
        let analytic = to_vars(&g.blocks, Field::Real);
        let mut f = |v: &[f64]| {
            let c = ChainMatrix::unscaled(from_vars(v, 2, Field::Real), 3).unwrap();
            obj.smooth_value(obj.value(&c))
        };
        let fd = optim::fd_gradient(&mut f, &vars, 1e-6);
        for (a, b) in analytic.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0), "{a} vs {b}");
        }
        // tangential invariance
        let along: f64 = analytic.iter().zip(&vars).map(|(a, b)| a * b).sum();
        assert!(along.abs() < 1e-10);
    }

    #[test]
    fn frobenius_gradient_matches_finite_differences() {
        fd_check(NormKind::Frobenius, 21);
    }

    #[test]
    fn spectral_subgradient_matches_finite_differences_at_smooth_point() {
        fd_check(NormKind::Two, 22);
    }

    #[test]
    fn complex_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let coeffs = (0..=2)
            .map(|_| CMat::from_fn(2, 2, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))))
            .collect();
        let p = MatrixPolynomial::new(coeffs).unwrap();
        let lam0 = C64::new(0.3, -0.4);
        let obj = DistanceObjective::new(&p, lam0, 3, NormKind::Frobenius);
        let xs: Vec<CVec> = (0..4)
            .map(|_| CVec::from_fn(2, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))))
            .collect();
        let vars = to_vars(&xs, Field::Complex);
        let g = obj.gradient(&ChainMatrix::unscaled(xs, 2).unwrap());
        let analytic = to_vars(&g.blocks, Field::Complex);
        let mut f = |v: &[f64]| {
            obj.smooth_value(obj.value(&ChainMatrix::unscaled(from_vars(v, 2, Field::Complex), 2).unwrap()))
        };
        let fd = optim::fd_gradient(&mut f, &vars, 1e-6);
        for (a, b) in analytic.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn rank1_hand_example() {
        let p = MatrixPolynomial::from_real_rows(2, &[&[1.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]]).unwrap();
        let (d, _) = rank1_restricted_distance(&p).unwrap();
        assert!((d - 1.0).abs() < 1e-14);
        let q = MatrixPolynomial::from_real_rows(2, &[&[2.0, 0.0, 0.0, 0.0], &[0.3, 0.4, 0.5, 0.0]]).unwrap();
        assert!(rank1_restricted_distance(&q).unwrap().0 < 1e-15);
        let w = MatrixPolynomial::from_real_rows(2, &[&[2.0, 0.0, 0.0, 0.0], &[0.0, 5.0, 0.1, 0.2]]).unwrap();
        let (d, which) = rank1_restricted_distance(&w).unwrap();
        let y = CMat::from_row_slice(2, 2, &[C64::new(2.0, 0.0), C64::new(5.0, 0.0), ZERO, C64::new(0.2, 0.0)]);
        assert!((d - crate::linalg::singular_values(&y)[1]).abs() < 1e-14);
        assert_eq!(which, Attained::Y);
        let bad = MatrixPolynomial::from_real_rows(2, &[&[1.0, 0.0, 0.0, 1.0], &[1.0, 0.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(rank1_restricted_distance(&bad), Err(Error::RankCondition { rank: 2, .. })));
    }

    #[test]
    fn minimize_returns_zero_on_planted_multiplicity() {
        let lam0 = C64::new(0.4, 0.0);
        let a0 = CMat::from_row_slice(2, 2, &[-lam0, -ONE, ZERO, -lam0]);
        let p = MatrixPolynomial::new(vec![a0, CMat::identity(2, 2)]).unwrap();
        let out = minimize(&p, lam0, 1, NormKind::Frobenius, &DistoptConfig::default()).unwrap();
        assert_eq!(out.value, 0.0);
        assert_eq!(out.iterations, 0);
    }
}
