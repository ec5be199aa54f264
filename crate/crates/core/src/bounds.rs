//! Computable lower and upper bounds on `δ_s(P, λ0, r+1)`.
//!
//! Each bound has an inner evaluator at fixed parameters (`γ` or `a`) and an
//! outer multistart search in log coordinates. Every evaluated parameter
//! yields a valid bound, so the searches keep the best value seen anywhere,
//! including finite-difference probes.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::distopt::{gamma_free_perturbation, ChainMatrix};
use crate::linalg::{
    default_rank_tol, pseudoinverse, singular_values, spectral_norm, CMat, CVec, Svd, C64, ZERO,
};
use crate::optim::{self, BfgsConfig, FdProblem, LineSearch};
use crate::polyalg::{
    build_e, build_m, build_t, build_t_gamma, GammaVector, MatrixPolynomial,
    NormKind, PerturbationPolynomial,
};
use crate::{Error, Result};

/// Positive weights `a_1 … a_{r+1}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingVector {
    entries: Vec<f64>,
}

impl ScalingVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if let Some(bad) = entries.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::InvalidParameter(format!("scaling entries must be positive, got {bad}")));
        }
        Ok(ScalingVector { entries })
    }

    pub fn ones(len: usize) -> Self {
        ScalingVector { entries: vec![1.0; len] }
    }

    /// `a = [1, e^{b_1}, …, e^{b_r}]`.
    pub fn from_log_tail(b: &[f64]) -> Self {
        let mut entries = vec![1.0];
        entries.extend(b.iter().map(|x| x.exp()));
        ScalingVector { entries }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, Serialize)]
pub enum BoundParameters {
    Gamma(GammaVector),
    Scaling(ScalingVector),
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundResult {
    pub value: f64,
    pub parameters: BoundParameters,
    pub evaluations: usize,
    /// Upper bounds only.
    #[serde(skip)]
    pub perturbation: Option<PerturbationPolynomial>,
    /// Whether some start ran out of its evaluation budget.
    pub budget_exhausted: bool,
    /// Relative gap between the chosen singular value and its neighbours.
    pub singular_gap: Option<f64>,
    /// Set when the bound came from a `γ` with `v_0 = 0`.
    pub gamma_free: bool,
}

impl BoundResult {
    pub fn gamma(&self) -> Option<&GammaVector> {
        match &self.parameters {
            BoundParameters::Gamma(g) => Some(g),
            BoundParameters::Scaling(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SearchConfig {
    pub starts: usize,
    /// Objective evaluations allowed per start.
    pub budget: usize,
    pub seed: u64,
    /// Builds the upper bound from `σ_{(r+1)n-r+offset}` instead of
    /// `σ_{(r+1)n-r}`.
    pub singular_offset: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { starts: 10, budget: 200, seed: 0, singular_offset: 0 }
    }
}

fn check_r(poly: &MatrixPolynomial, r: usize) -> Result<()> {
    let kn = poly.degree() * poly.n();
    if r == 0 || r >= kn {
        return Err(Error::InvalidParameter(format!("r = {r} must satisfy 1 ≤ r < kn = {kn}")));
    }
    Ok(())
}

/// A singular triple of `T_γ(P, λ0)`.
#[derive(Clone, Debug)]
pub struct SingularTriple {
    pub value: f64,
    pub u: CVec,
    pub v: CVec,
    /// `min(σ_{i-1} - σ_i, σ_i - σ_{i+1}) / σ_max`.
    pub gap: f64,
}

fn triple_at(t: &CMat, index: usize) -> SingularTriple {
    let svd = Svd::new(t);
    let s = &svd.s;
    let smax = svd.sigma_max().max(f64::MIN_POSITIVE);
    let below = if index + 1 < s.len() { s[index] - s[index + 1] } else { s[index] };
    let above = if index > 0 { s[index - 1] - s[index] } else { f64::INFINITY };
    SingularTriple {
        value: s[index],
        u: svd.u.column(index).into_owned(),
        v: svd.v.column(index).into_owned(),
        gap: below.min(above) / smax,
    }
}

/// `f(γ) = σ_{(r+1)n-r}(T_γ(P, λ0))` with a unit left/right singular pair.
pub fn f_gamma(poly: &MatrixPolynomial, lambda0: C64, gamma: &GammaVector) -> (f64, CVec, CVec) {
    let t = f_gamma_triple(poly, lambda0, gamma, 0);
    (t.value, t.u, t.v)
}

/// Like [`f_gamma`] but `offset` positions further down the spectrum.
pub fn f_gamma_triple(
    poly: &MatrixPolynomial,
    lambda0: C64,
    gamma: &GammaVector,
    offset: usize,
) -> SingularTriple {
    let r = gamma.len();
    let t = build_t_gamma(poly, lambda0, gamma);
    triple_at(&t, ((r + 1) * (poly.n() - 1) + offset).min(t.ncols() - 1))
}

fn column_weight(gamma: &[f64], r: usize, from: usize, p: usize) -> f64 {
    // 1 + Σ_{t=from}^{p} Π_{i=t}^{p} γ²_{r+1-i}, with 1-based γ
    1.0 + (from..=p)
        .map(|t| (t..=p).map(|i| gamma[r - i].powi(2)).product::<f64>())
        .sum::<f64>()
}

/// `F_1(γ)` for `r ≤ k` and `F_2(γ)` for `r > k`, given `‖M(λ0; r)‖_2`.
pub fn f_weight(m_norm: f64, gamma: &GammaVector, k: usize) -> f64 {
    let g = gamma.as_slice();
    let r = g.len();
    let inner = if r <= k {
        (1..=r).map(|p| column_weight(g, r, 1, p)).fold(0.0, f64::max)
    } else {
        let head = (1..=k).map(|p| column_weight(g, r, 1, p)).fold(0.0, f64::max);
        let tail = (k + 1..=r)
            .map(|p| column_weight(g, r, p - k + 1, p))
            .fold(0.0, f64::max);
        head.max(tail)
    };
    m_norm * m_norm * inner
}

/// `f(γ) / √F(γ)`, a lower bound for every `γ`.
pub fn lb1_value(poly: &MatrixPolynomial, lambda0: C64, gamma: &GammaVector) -> f64 {
    let m = build_m(lambda0, poly.degree(), gamma.len(), poly.n());
    lb1_value_with(poly, lambda0, gamma, spectral_norm(&m))
}

fn lb1_value_with(poly: &MatrixPolynomial, lambda0: C64, gamma: &GammaVector, m_norm: f64) -> f64 {
    let (f, _, _) = f_gamma(poly, lambda0, gamma);
    f / f_weight(m_norm, gamma, poly.degree()).sqrt()
}

struct SearchOutcome {
    x: Vec<f64>,
    value: f64,
    evaluations: usize,
    exhausted: bool,
}

/// Multistart FD-gradient BFGS on `objective` over `R^dim`. The first start
/// is the origin; the rest are standard normal. Returns the best point ever
/// evaluated.
fn search_min<F>(dim: usize, cfg: &SearchConfig, objective: F) -> SearchOutcome
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let bcfg = BfgsConfig {
        max_iter: usize::MAX,
        // each gradient costs 2·dim extra evaluations
        max_evals: (cfg.budget / (2 * dim + 1)).max(2),
        grad_tol: 1e-10,
        line_search: LineSearch::WeakWolfe,
        c1: 1e-4,
        c2: 0.5,
    };
    let runs = optim::multistart(cfg.starts.max(1), cfg.seed, |i, rng| {
        let x0: Vec<f64> = if i == 0 {
            vec![0.0; dim]
        } else {
            (0..dim).map(|_| StandardNormal.sample(rng)).collect()
        };
        let mut best = (x0.clone(), f64::INFINITY);
        let mut evals = 0usize;
        let step = 1e-6;
        let out = {
            let mut problem = FdProblem {
                f: |x: &[f64]| {
                    evals += 1;
                    let v = objective(x);
                    if v < best.1 {
                        best = (x.to_vec(), v);
                    }
                    v
                },
                step,
            };
            optim::bfgs(&mut problem, &x0, &bcfg)
        };
        let exhausted = out.stop == optim::StopReason::MaxEvaluations;
        (best, evals, exhausted)
    });
    let idx = optim::argmin_by_key(&runs, |((_, v), _, _)| *v).unwrap_or(0);
    let ((x, value), _, _) = &runs[idx];
    SearchOutcome {
        x: x.clone(),
        value: *value,
        evaluations: runs.iter().map(|(_, e, _)| e).sum(),
        exhausted: runs.iter().any(|(_, _, ex)| *ex),
    }
}

/// Maximizes `f(γ)/√F(γ)` over `γ = e^t`.
pub fn lower_bound_sigma(
    poly: &MatrixPolynomial,
    lambda0: C64,
    r: usize,
    cfg: &SearchConfig,
) -> Result<BoundResult> {
    check_r(poly, r)?;
    let m_norm = spectral_norm(&build_m(lambda0, poly.degree(), r, poly.n()));
    let out = search_min(r, cfg, |t| {
        let gamma = GammaVector::from_log(t).ok();
        match gamma {
            Some(g) => -lb1_value_with(poly, lambda0, &g, m_norm),
            None => f64::INFINITY,
        }
    });
    Ok(BoundResult {
        value: -out.value,
        parameters: BoundParameters::Gamma(GammaVector::from_log(&out.x)?),
        evaluations: out.evaluations,
        perturbation: None,
        budget_exhausted: out.exhausted,
        singular_gap: None,
        gamma_free: false,
    })
}

/// Unscaled `(I ⊗ M) E T^{-1}`, or `E T^{-1}` at `λ0 = 0`.
pub fn scaling_base(poly: &MatrixPolynomial, lambda0: C64, r: usize) -> Result<CMat> {
    let (n, k) = (poly.n(), poly.degree());
    let t = build_t(poly, lambda0, r);
    let s = singular_values(&t);
    let ratio = s[s.len() - 1] / s[0].max(f64::MIN_POSITIVE);
    if ratio <= 1e2 * default_rank_tol(t.nrows(), t.ncols()) {
        return Err(Error::EigenvalueAtLambda0 { ratio });
    }
    let tinv = t.try_inverse().ok_or(Error::EigenvalueAtLambda0 { ratio })?;
    let e = build_e(r, k, n);
    if lambda0 == ZERO {
        Ok(e * tinv)
    } else {
        let m = build_m(lambda0, k, r, n);
        Ok(crate::linalg::kron_identity(r + 1, &m) * e * tinv)
    }
}

/// `W_row(a) B0 W_col(a)^{-1}` with row blocks of `B0.nrows()/(r+1)` rows
/// and column blocks of `n` columns.
pub fn apply_scaling(b0: &CMat, a: &ScalingVector, n: usize) -> CMat {
    let parts = a.len();
    let row_block = b0.nrows() / parts;
    let mut b = b0.clone();
    for i in 0..parts {
        for j in 0..parts {
            let c = C64::new(a.as_slice()[i] / a.as_slice()[j], 0.0);
            let mut view = b.view_mut((i * row_block, j * n), (row_block, n));
            view *= c;
        }
    }
    b
}

/// `B(λ0, a, P)` (or `B̂(0, a, P)` at `λ0 = 0`).
pub fn build_b(poly: &MatrixPolynomial, lambda0: C64, r: usize, a: &ScalingVector) -> Result<CMat> {
    if a.len() != r + 1 {
        return Err(Error::Dimension(format!("scaling needs {} entries, got {}", r + 1, a.len())));
    }
    Ok(apply_scaling(&scaling_base(poly, lambda0, r)?, a, poly.n()))
}

/// Maximizes `1/σ_{r+1}(B(λ0, a, P))` over `a = [1, e^b]`.
pub fn lower_bound_scaling(
    poly: &MatrixPolynomial,
    lambda0: C64,
    r: usize,
    cfg: &SearchConfig,
) -> Result<BoundResult> {
    check_r(poly, r)?;
    let b0 = scaling_base(poly, lambda0, r)?;
    let n = poly.n();
    let out = search_min(r, cfg, |b| {
        if b.iter().any(|x| !x.is_finite() || x.abs() > 300.0) {
            return f64::INFINITY;
        }
        let a = ScalingVector::from_log_tail(b);
        singular_values(&apply_scaling(&b0, &a, n))[r]
    });
    Ok(BoundResult {
        value: 1.0 / out.value,
        parameters: BoundParameters::Scaling(ScalingVector::from_log_tail(&out.x)),
        evaluations: out.evaluations,
        perturbation: None,
        budget_exhausted: out.exhausted,
        singular_gap: None,
        gamma_free: false,
    })
}

/// The construction behind the upper bound at one `γ`.
#[derive(Clone, Debug)]
pub struct UpperBoundPoint {
    pub value: f64,
    pub perturbation: PerturbationPolynomial,
    /// `V(γ)` as a chain matrix (the same layout as the optimizer's `X`).
    pub chain: ChainMatrix,
    pub gap: f64,
}

/// Relative size of `v_0` below which `γ` is treated as outside `Γ_0`.
pub const GAMMA0_TOL: f64 = 1e-8;

/// Relative singular-value tolerance a candidate `ΔP` must meet before its
/// norm is accepted as an upper bound.
pub const CERTIFY_TOL: f64 = 1e-11;

fn certifies(poly: &MatrixPolynomial, delta: &PerturbationPolynomial, lambda0: C64, r_plus_1: usize) -> bool {
    poly.add(delta)
        .and_then(|q| crate::certify::multiplicity_at_least(&q, lambda0, r_plus_1, CERTIFY_TOL))
        .is_ok_and(|(ok, _)| ok)
}

/// `f(γ) ‖U(γ) (M V(γ))†‖_s` with `ΔG = -f(γ) U(γ) (M V(γ))†`; `None` when
/// `γ ∉ Γ_0`.
pub fn upper_bound_at(
    poly: &MatrixPolynomial,
    lambda0: C64,
    gamma: &GammaVector,
    norm: NormKind,
    offset: usize,
) -> Option<UpperBoundPoint> {
    let (n, k, r) = (poly.n(), poly.degree(), gamma.len());
    let tr = f_gamma_triple(poly, lambda0, gamma, offset);
    let v0 = tr.v.rows(0, n).norm();
    if v0 <= GAMMA0_TOL * tr.v.norm() {
        return None;
    }
    let vs: Vec<CVec> = (0..=r).map(|j| tr.v.rows(j * n, n).into_owned()).collect();
    let chain = ChainMatrix::new(vs, gamma.clone(), k).ok()?;
    let mut u = CMat::zeros(n, r + 1);
    for j in 0..=r {
        u.set_column(j, &tr.u.rows(j * n, n));
    }
    let mv = build_m(lambda0, k, r, n) * chain.materialize();
    let dg = u * pseudoinverse(&mv, default_rank_tol(mv.nrows(), mv.ncols())) * C64::new(-tr.value, 0.0);
    let perturbation = PerturbationPolynomial::from_stacked(&dg, n).ok()?;
    if !certifies(poly, &perturbation, lambda0, r + 1) {
        return None;
    }
    Some(UpperBoundPoint { value: norm.of(&dg), perturbation, chain, gap: tr.gap })
}

/// Minimizes the constructive upper bound over `γ ∈ Γ_0`; the value is
/// `+∞` if no evaluated `γ` lies in `Γ_0`.
pub fn upper_bound(
    poly: &MatrixPolynomial,
    lambda0: C64,
    r: usize,
    norm: NormKind,
    cfg: &SearchConfig,
) -> Result<BoundResult> {
    check_r(poly, r)?;
    let out = search_min(r, cfg, |t| match GammaVector::from_log(t) {
        Ok(g) => upper_bound_at(poly, lambda0, &g, norm, cfg.singular_offset)
            .map_or(f64::INFINITY, |p| p.value),
        Err(_) => f64::INFINITY,
    });
    let gamma = GammaVector::from_log(&out.x)?;
    let point = upper_bound_at(poly, lambda0, &gamma, norm, cfg.singular_offset);
    Ok(BoundResult {
        value: point.as_ref().map_or(f64::INFINITY, |p| p.value),
        singular_gap: point.as_ref().map(|p| p.gap),
        perturbation: point.map(|p| p.perturbation),
        parameters: BoundParameters::Gamma(gamma),
        evaluations: out.evaluations,
        budget_exhausted: out.exhausted,
        gamma_free: false,
    })
}

/// `V(γ*)` of an upper-bound result, as an optimizer starting point.
pub fn upper_bound_chain(
    poly: &MatrixPolynomial,
    lambda0: C64,
    bound: &BoundResult,
    norm: NormKind,
    offset: usize,
) -> Option<ChainMatrix> {
    upper_bound_at(poly, lambda0, bound.gamma()?, norm, offset).map(|p| p.chain)
}

/// For `r = 1`, `λ0 = 0`: scans `γ` for points with `v_0 = 0`, where the
/// bound is `f(γ)` itself. `None` if no such point was met.
pub fn search_gamma_free(poly: &MatrixPolynomial, cfg: &SearchConfig) -> Result<Option<BoundResult>> {
    check_r(poly, 1)?;
    let n = poly.n();
    let free_value = |t: f64| -> Option<(f64, CVec, CVec)> {
        let g = GammaVector::new(vec![t.exp()]).ok()?;
        let (f, u, v) = f_gamma(poly, ZERO, &g);
        if v.rows(0, n).norm() > GAMMA0_TOL * v.norm() {
            return None;
        }
        let u1 = u.rows(n, n) / C64::new(u.rows(n, n).norm(), 0.0);
        let v1 = v.rows(n, n) / C64::new(v.rows(n, n).norm(), 0.0);
        let dp = gamma_free_perturbation(n, poly.degree(), f, &u1, &v1);
        certifies(poly, &dp, ZERO, 2).then_some((f, u1, v1))
    };
    let grid = (0..=cfg.budget.max(2)).map(|i| -20.0 + 40.0 * i as f64 / cfg.budget.max(2) as f64);
    let mut best: Option<(f64, f64, CVec, CVec)> = None;
    let mut evals = 0;
    for t in grid {
        evals += 1;
        if let Some((f, u1, v1)) = free_value(t) {
            if best.as_ref().is_none_or(|b| f < b.1) {
                best = Some((t, f, u1, v1));
            }
        }
    }
    Ok(best.map(|(t, f, u1, v1)| {
        BoundResult {
            value: f,
            parameters: BoundParameters::Gamma(GammaVector::new(vec![t.exp()]).expect("positive")),
            evaluations: evals,
            perturbation: Some(gamma_free_perturbation(n, poly.degree(), f, &u1, &v1)),
            budget_exhausted: false,
            singular_gap: None,
            gamma_free: true,
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;
    use crate::tables::example1;

    /// Squared largest column norm of the stacked `E_γ` selector.
    fn stacked_e_weight(gamma: &[f64], k: usize) -> f64 {
        let r = gamma.len();
        let p = r.min(k);
        (0..=r)
            .map(|c| {
                (c..=r)
                    .filter(|i| i - c <= p)
                    .map(|i| gamma[c..i].iter().product::<f64>().powi(2))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn weight_matches_stacked_selector_norm() {
        let cases: [(&[f64], usize); 5] = [
            (&[1.0], 3),
            (&[0.3, 2.0, 1.1], 3),
            (&[1.7, 0.4, 0.9, 2.2, 0.5], 2),
            (&[0.8, 1.3, 3.0, 0.2], 1),
            (&[2.0, 0.5], 4),
        ];
        for (g, k) in cases {
            let gamma = GammaVector::new(g.to_vec()).unwrap();
            let lit = f_weight(1.0, &gamma, k);
            let oracle = stacked_e_weight(g, k);
            assert!((lit - oracle).abs() < 1e-12 * oracle, "{g:?} k={k}: {lit} vs {oracle}");
        }
    }

    #[test]
    fn weight_at_ones_and_zero_shift() {
        for r in 1..=3 {
            let gamma = GammaVector::ones(r);
            let m = build_m(ZERO, 3, r, 2);
            let mn = spectral_norm(&m);
            assert!((mn - 1.0).abs() < 1e-14);
            assert!((f_weight(mn, &gamma, 3) - (r + 1) as f64).abs() < 1e-12);
            let p = example1();
            let (f, _, _) = f_gamma(&p, ZERO, &gamma);
            assert!((lb1_value(&p, ZERO, &gamma) - f / ((r + 1) as f64).sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_pair_residual() {
        let p = example1();
        let gamma = GammaVector::new(vec![0.7, 1.9]).unwrap();
        let (f, u, v) = f_gamma(&p, C64::new(1.0, 0.0), &gamma);
        let t = build_t_gamma(&p, C64::new(1.0, 0.0), &gamma);
        assert!((t * v - u * C64::new(f, 0.0)).norm() < 1e-10);
        assert!(f > 0.0);
        assert!(lb1_value(&p, ZERO, &GammaVector::ones(1)) <= 0.10683102 + 1e-8);
    }

    #[test]
    fn scaling_invariance_under_common_factor() {
        let p = example1();
        let a = ScalingVector::new(vec![0.5, 2.0, 1.3]).unwrap();
        let ca = ScalingVector::new(a.as_slice().iter().map(|x| 7.5 * x).collect()).unwrap();
        let lam = C64::new(1.0, 0.0);
        let b1 = build_b(&p, lam, 2, &a).unwrap();
        let b2 = build_b(&p, lam, 2, &ca).unwrap();
        assert!((&b1 - &b2).norm() <= 1e-12 * b1.norm());
        let plain = scaling_base(&p, lam, 2).unwrap();
        assert_eq!(build_b(&p, lam, 2, &ScalingVector::ones(3)).unwrap(), plain);
    }

    #[test]
    fn eigenvalue_at_lambda0_is_rejected() {
        let a0 = CMat::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]);
        let p = MatrixPolynomial::new(vec![a0, CMat::identity(2, 2)]).unwrap();
        assert!(matches!(scaling_base(&p, ZERO, 1), Err(Error::EigenvalueAtLambda0 { .. })));
    }

    #[test]
    fn upper_bound_perturbation_norm_equals_value() {
        let p = example1();
        let gamma = GammaVector::new(vec![1.4]).unwrap();
        for norm in [NormKind::Frobenius, NormKind::Two] {
            let pt = upper_bound_at(&p, ZERO, &gamma, norm, 0).unwrap();
            assert!((pt.perturbation.norm(norm) - pt.value).abs() <= 1e-10 * pt.value);
            let q = p.add(&pt.perturbation).unwrap();
            let (f, _, _) = f_gamma(&q, ZERO, &gamma);
            assert!(f < 1e-12);
        }
    }

    #[test]
    fn planted_multiplicity_gives_zero_upper_bound() {
        let a0 = CMat::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]);
        let a2 = CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, C64::new(0.5, 0.0)]);
        let p = MatrixPolynomial::new(vec![a0, CMat::identity(2, 2), a2]).unwrap();
        let ub = upper_bound(&p, ZERO, 1, NormKind::Frobenius, &SearchConfig::default()).unwrap();
        assert!(ub.value < 1e-12, "{}", ub.value);
        assert!(ub.perturbation.unwrap().norm(NormKind::Frobenius) < 1e-12);
    }
}
