//! Generalized μ-value bookkeeping.
//!
//! The distance equals a reciprocal generalized μ-value of
//! `(I ⊗ M) E T(P, λ0)^{-1}` (or `E T(P, 0)^{-1}`). μ-values are not computed
//! here; the module builds the matrices and checks, for a given perturbation,
//! that the nullity conditions agree with the rank condition on
//! `T(P + ΔP, λ0)`.

use serde::Serialize;

use crate::bounds::{build_b, scaling_base, ScalingVector};
use crate::linalg::{kron_identity, nullity, numerical_rank, CMat, Svd, C64, ZERO};
use crate::polyalg::{
    build_e, build_m, build_t, eval_derivative_row, truncation_order, MatrixPolynomial,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PerturbationClass {
    /// `I_{r+1} ⊗ [ΔA_0 … ΔA_k]`.
    S1,
    /// `I_{r+1} ⊗ [ΔA_0 … ΔA_{min(r,k)}]`.
    S2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PerturbationClassTag {
    pub class: PerturbationClass,
    pub r: usize,
    pub n: usize,
    pub k: usize,
}

impl PerturbationClassTag {
    /// `S2` at `λ0 = 0`, `S1` otherwise.
    pub fn for_point(lambda0: C64, r: usize, n: usize, k: usize) -> Self {
        let class = if lambda0 == ZERO { PerturbationClass::S2 } else { PerturbationClass::S1 };
        PerturbationClassTag { class, r, n, k }
    }

    /// Number of coefficient blocks in one Kronecker factor.
    pub fn blocks(&self) -> usize {
        match self.class {
            PerturbationClass::S1 => self.k + 1,
            PerturbationClass::S2 => truncation_order(self.r, self.k) + 1,
        }
    }

    /// `I_{r+1} ⊗ [ΔA_0 … ΔA_{blocks-1}]`.
    pub fn embed(&self, delta: &MatrixPolynomial) -> CMat {
        let row = crate::linalg::hstack(&delta.coeffs()[..self.blocks()]);
        kron_identity(self.r + 1, &row)
    }
}

/// `B(λ0, a, P)`; with `a = None` the unscaled matrix of the μ-value
/// characterization.
pub fn build_mu_matrix(
    poly: &MatrixPolynomial,
    lambda0: C64,
    r: usize,
    a: Option<&ScalingVector>,
) -> Result<CMat> {
    match a {
        Some(a) => build_b(poly, lambda0, r, a),
        None => scaling_base(poly, lambda0, r),
    }
}

/// `inf{‖M‖_2 : rank(I_p - M N) ≤ p - i} = 1/σ_i(N)` together with the
/// minimizer `Σ_{j≤i} σ_j^{-1} v_j u_j^*` (1-based `i`).
pub fn min_norm_rank_drop(n_mat: &CMat, i: usize) -> Result<(f64, CMat)> {
    let (q, p) = n_mat.shape();
    if i == 0 || i > p.min(q) {
        return Err(Error::InvalidParameter(format!("index {i} outside 1..={}", p.min(q))));
    }
    let svd = Svd::new(n_mat);
    let si = svd.s[i - 1];
    if si <= crate::linalg::default_rank_tol(q, p) * svd.sigma_max() {
        return Err(Error::VanishingSingularValue { index: i });
    }
    let mut m = CMat::zeros(p, q);
    for j in 0..i {
        m += svd.v.column(j) * svd.u.column(j).adjoint() * C64::new(1.0 / svd.s[j], 0.0);
    }
    Ok((1.0 / si, m))
}

#[derive(Clone, Debug, Serialize)]
pub struct MuConsistencyReport {
    pub class: PerturbationClassTag,
    pub tol: f64,
    /// `nullity(I - T(Δ, λ0) T(P, λ0)^{-1})` with `Δ = -ΔP`.
    pub nullity_toeplitz: usize,
    /// `nullity(I - (I ⊗ [Δ(λ0) … Δ^{(p)}(λ0)/p!]) E T^{-1})`.
    pub nullity_row: usize,
    /// `nullity(I - (I ⊗ [ΔA_0 … ΔA_k])(I ⊗ M) E T^{-1})`, or the `S2` form
    /// at `λ0 = 0`.
    pub nullity_mu: usize,
    pub required: usize,
    pub mu_condition: bool,
    /// `rank T(P + ΔP, λ0) ≤ (r+1)(n-1)`.
    pub rank_condition: bool,
    pub rank_perturbed: usize,
    pub consistent: bool,
}

/// Checks the μ-value nullity conditions for the perturbation `ΔP` against
/// the rank of `T(P + ΔP, λ0)`. All nullities count singular values at or
/// below `tol · σ_max`.
pub fn mu_consistency_check(
    poly: &MatrixPolynomial,
    lambda0: C64,
    r: usize,
    delta: &MatrixPolynomial,
    tol: f64,
) -> Result<MuConsistencyReport> {
    let (n, k) = (poly.n(), poly.degree());
    if delta.n() != n || delta.degree() != k {
        return Err(Error::Dimension("ΔP must match the shape of P".into()));
    }
    let t = build_t(poly, lambda0, r);
    let tinv = {
        let s = crate::linalg::singular_values(&t);
        let ratio = s[s.len() - 1] / s[0].max(f64::MIN_POSITIVE);
        t.clone().try_inverse().filter(|_| ratio > 1e-14).ok_or(Error::EigenvalueAtLambda0 { ratio })?
    };
    let neg = delta.scaled(C64::new(-1.0, 0.0));
    let dim = t.nrows();
    let id = CMat::identity(dim, dim);
    let e = build_e(r, k, n);

    let t_delta = build_t(&neg, lambda0, r);
    let nullity_toeplitz = nullity(&(&id - t_delta * &tinv), tol);

    let p = truncation_order(r, k);
    let row = eval_derivative_row(&neg, lambda0, p).as_matrix();
    let nullity_row = nullity(&(&id - kron_identity(r + 1, &row) * &e * &tinv), tol);

    let class = PerturbationClassTag::for_point(lambda0, r, n, k);
    let mu_mat = match class.class {
        PerturbationClass::S1 => {
            let m = build_m(lambda0, k, r, n);
            class.embed(&neg) * kron_identity(r + 1, &m) * &e * &tinv
        }
        PerturbationClass::S2 => class.embed(&neg) * &e * &tinv,
    };
    let nullity_mu = nullity(&(&id - mu_mat), tol);

    let perturbed = poly.add(delta)?;
    let rank_perturbed = numerical_rank(&build_t(&perturbed, lambda0, r), tol);
    let required = r + 1;
    let mu_condition = nullity_mu >= required;
    let rank_condition = rank_perturbed <= (r + 1) * (n - 1);
    Ok(MuConsistencyReport {
        class,
        tol,
        nullity_toeplitz,
        nullity_row,
        nullity_mu,
        required,
        mu_condition,
        rank_condition,
        rank_perturbed,
        consistent: mu_condition == rank_condition
            && (nullity_toeplitz >= required) == mu_condition
            && (nullity_row >= required) == mu_condition,
    })
}
