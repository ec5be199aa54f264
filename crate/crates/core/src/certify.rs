//! Numerical certificates for eigenvalue multiplicity at a point.
//!
//! Rank tests on `T(P, λ0)` are cross-checked against eigenvalues of the
//! first companion pencil, computed independently by shift-and-invert plus a
//! complex Schur decomposition.

use nalgebra::Schur;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::linalg::{default_rank_tol, hstack, singular_values, spectral_norm, CMat, CVec, Svd, C64, ZERO};
use crate::polyalg::{build_t, MatrixPolynomial, NormKind};
use crate::{Error, Result};

/// Relative gap below which a rank verdict is reported as ill-conditioned.
pub const AMBIGUITY_FACTOR: f64 = 10.0;

/// `σ_min/σ_max` of `P(z)` below which a sample point counts as singular.
pub const REGULARITY_TOL: f64 = 1e-11;

#[derive(Clone, Debug, Serialize)]
pub struct RankCertificate {
    /// `σ_{(r+1)n-r}(T(P, λ0))`.
    pub sigma_target: f64,
    pub sigma_max: f64,
    /// `max(σ_max(T), ‖[D_0 … D_k]‖_2)` over all Taylor coefficients at `λ0`;
    /// stays meaningful when `T` itself vanishes.
    pub scale: f64,
    /// Number of singular values strictly above `threshold`.
    pub rank_estimate: usize,
    /// Absolute cutoff, `tol · scale`.
    pub threshold: f64,
    /// Set when `σ_target / scale` lies within a factor of ten of `tol`.
    pub ambiguous: bool,
}

impl RankCertificate {
    pub fn relative_sigma(&self) -> f64 {
        if self.scale == 0.0 {
            0.0
        } else {
            self.sigma_target / self.scale
        }
    }
}

fn check_multiplicity(poly: &MatrixPolynomial, r_plus_1: usize) -> Result<usize> {
    let kn = poly.degree() * poly.n();
    if r_plus_1 < 1 || r_plus_1 > kn.max(1) {
        return Err(Error::InvalidParameter(format!(
            "multiplicity {r_plus_1} outside 1..={kn}"
        )));
    }
    Ok(r_plus_1 - 1)
}

/// Tests whether `λ0` has algebraic multiplicity at least `r_plus_1`, i.e.
/// whether `rank T(P, λ0) ≤ (r+1)(n-1)`. A `tol` of zero selects the default
/// `max_dim · ε`.
pub fn multiplicity_at_least(
    poly: &MatrixPolynomial,
    lambda0: C64,
    r_plus_1: usize,
    tol: f64,
) -> Result<(bool, RankCertificate)> {
    let r = check_multiplicity(poly, r_plus_1)?;
    let n = poly.n();
    let t = build_t(poly, lambda0, r);
    let dim = (r + 1) * n;
    let tol = if tol > 0.0 { tol } else { default_rank_tol(dim, dim) };
    let s = singular_values(&t);
    let sigma_max = s[0];
    let sigma_target = s[(r + 1) * (n - 1)];
    let scale = sigma_max.max(spectral_norm(&hstack(&poly.taylor_coefficients(lambda0))));
    let threshold = tol * scale;
    let rank_estimate = s.iter().filter(|&&x| x > threshold).count();
    let rel = if scale == 0.0 { 0.0 } else { sigma_target / scale };
    let ambiguous = rel > 0.0 && rel.max(tol) / rel.min(tol) < AMBIGUITY_FACTOR;
    let cert = RankCertificate { sigma_target, sigma_max, scale, rank_estimate, threshold, ambiguous };
    Ok((sigma_target <= threshold, cert))
}

/// Outcome of sampling `P(z)` at random points.
#[derive(Clone, Debug, Serialize)]
pub struct RegularityProbe {
    pub samples: usize,
    /// Largest `σ_min/σ_max` over the samples.
    pub best_ratio: f64,
    pub singular: bool,
}

/// Samples `P(z)` at `2kn + 1` seeded random points in the annulus
/// `0.5 ≤ |z| ≤ 2`; the polynomial is declared singular when every sample is
/// numerically rank deficient.
pub fn probe_regularity(poly: &MatrixPolynomial) -> RegularityProbe {
    let n = poly.n();
    let samples = 2 * poly.degree().max(1) * n + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_f2e6);
    if poly.coeffs().iter().all(|a| a.iter().all(|z| *z == ZERO)) {
        return RegularityProbe { samples: 0, best_ratio: 0.0, singular: true };
    }
    let mut best = 0.0f64;
    for _ in 0..samples {
        let rho = rng.random_range(0.5..2.0);
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let z = C64::from_polar(rho, theta);
        let s = singular_values(&poly.eval(z));
        let ratio = if s[0] == 0.0 { 0.0 } else { s[n - 1] / s[0] };
        best = best.max(ratio);
    }
    RegularityProbe { samples, best_ratio: best, singular: best < REGULARITY_TOL }
}

/// Eigenvalues of the first companion pencil `C_1(λ) = λB + A`.
#[derive(Clone, Debug, Serialize)]
pub struct CompanionSpectrum {
    pub finite: Vec<C64>,
    pub infinite: usize,
}

impl CompanionSpectrum {
    /// Finite eigenvalues within `radius` of `center`.
    pub fn count_within(&self, center: C64, radius: f64) -> usize {
        self.finite.iter().filter(|z| (**z - center).norm() <= radius).count()
    }
}

/// `B = diag(A_k, I, …, I)`, `A = [[A_{k-1} … A_0], [-I 0 …], …]`.
pub fn companion_pencil(poly: &MatrixPolynomial) -> (CMat, CMat) {
    let n = poly.n();
    let k = poly.degree();
    let dim = k * n;
    let mut b = CMat::identity(dim, dim);
    b.view_mut((0, 0), (n, n)).copy_from(poly.coeff(k));
    let mut a = CMat::zeros(dim, dim);
    for j in 0..k {
        a.view_mut((0, j * n), (n, n)).copy_from(poly.coeff(k - 1 - j));
    }
    for i in 1..k {
        a.view_mut((i * n, (i - 1) * n), (n, n))
            .copy_from(&(-CMat::identity(n, n)));
    }
    (a, b)
}

/// All `kn` eigenvalues of `P`, with infinite ones counted separately.
///
/// Uses `K = (A + τB)^{-1} B`, whose eigenvalue `μ` maps to `λ = τ - 1/μ`;
/// `μ ≈ 0` marks an infinite eigenvalue.
pub fn companion_eigenvalues(poly: &MatrixPolynomial) -> Result<CompanionSpectrum> {
    if poly.degree() == 0 {
        return Ok(CompanionSpectrum { finite: Vec::new(), infinite: 0 });
    }
    if probe_regularity(poly).singular {
        return Err(Error::SingularPolynomial);
    }
    let (a, b) = companion_pencil(poly);
    let dim = a.nrows();
    let scale = poly.norm(NormKind::Frobenius).max(f64::MIN_POSITIVE);
    let mut best: Option<(f64, C64, CMat)> = None;
    for j in 0..8 {
        let theta = 0.7 + 1.3 * j as f64;
        let tau = C64::from_polar(1.0 + 0.37 * j as f64, theta);
        let shifted = &a + &b * tau;
        let s = singular_values(&shifted);
        let rcond = s[dim - 1] / s[0].max(f64::MIN_POSITIVE);
        if best.as_ref().is_none_or(|(r, _, _)| rcond > *r) {
            best = Some((rcond, tau, shifted));
        }
        if rcond > 1e-6 {
            break;
        }
    }
    let (_, tau, shifted) = best.expect("at least one shift tried");
    let inv = shifted.lu().solve(&b).ok_or(Error::SingularPolynomial)?;
    let mu = Schur::new(inv.clone())
        .eigenvalues()
        .expect("complex Schur form is triangular");
    let knorm = Svd::new(&inv).sigma_max();
    let cut = 1e3 * f64::EPSILON * knorm.max(1.0 / scale);
    let mut finite = Vec::with_capacity(dim);
    let mut infinite = 0;
    for m in mu.iter() {
        if m.norm() <= cut {
            infinite += 1;
        } else {
            finite.push(tau - C64::new(1.0, 0.0) / m);
        }
    }
    Ok(CompanionSpectrum { finite, infinite })
}

/// Default eigenvalue-cluster radius `tol^{1/(r+1)} · ‖P‖_F`.
pub fn cluster_radius(poly: &MatrixPolynomial, r_plus_1: usize, tol: f64) -> f64 {
    tol.powf(1.0 / r_plus_1 as f64) * poly.norm(NormKind::Frobenius)
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub regular: bool,
    pub tol: f64,
    /// `σ_{(r+1)n-r}(T(P+ΔP, λ0))` relative to the certificate scale.
    pub sigma_ratio: Option<f64>,
    pub rank: Option<RankCertificate>,
    pub radius: f64,
    /// Companion eigenvalues of `P + ΔP` within `radius` of `λ0`.
    pub cluster_count: Option<usize>,
    pub passed: bool,
    pub note: Option<String>,
}

/// Checks that `P + ΔP` has `λ0` as an eigenvalue of multiplicity at least
/// `r_plus_1`, both by rank and by the eigenvalue cluster.
pub fn verify_perturbation(
    poly: &MatrixPolynomial,
    delta: &MatrixPolynomial,
    lambda0: C64,
    r_plus_1: usize,
    tol: f64,
) -> Result<VerificationReport> {
    let perturbed = poly.add(delta)?;
    let radius = cluster_radius(&perturbed, r_plus_1, tol);
    verify_with_radius(&perturbed, lambda0, r_plus_1, tol, radius)
}

/// Same as [`verify_perturbation`] with an explicit cluster radius, applied
/// to the already perturbed polynomial.
pub fn verify_with_radius(
    perturbed: &MatrixPolynomial,
    lambda0: C64,
    r_plus_1: usize,
    tol: f64,
    radius: f64,
) -> Result<VerificationReport> {
    check_multiplicity(perturbed, r_plus_1)?;
    if probe_regularity(perturbed).singular {
        return Ok(VerificationReport {
            regular: false,
            tol,
            sigma_ratio: None,
            rank: None,
            radius,
            cluster_count: None,
            passed: false,
            note: Some("P + ΔP is numerically singular; no multiplicity verdict".into()),
        });
    }
    let (_, cert) = multiplicity_at_least(perturbed, lambda0, r_plus_1, tol)?;
    let sigma_ratio = cert.relative_sigma();
    let spectrum = companion_eigenvalues(perturbed)?;
    let count = spectrum.count_within(lambda0, radius);
    let passed = sigma_ratio <= tol && count >= r_plus_1;
    Ok(VerificationReport {
        regular: true,
        tol,
        sigma_ratio: Some(sigma_ratio),
        rank: Some(cert),
        radius,
        cluster_count: Some(count),
        passed,
        note: None,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct JordanChainCertificate {
    pub lambda0: C64,
    pub chain: Vec<CVec>,
    /// `‖Σ_{i=0}^{j} P^{(i)}(λ0)/i! · x_{j-i}‖_2` for each `j`.
    pub residuals: Vec<f64>,
}

impl JordanChainCertificate {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

pub fn chain_residuals(
    poly: &MatrixPolynomial,
    lambda0: C64,
    chain: &[CVec],
) -> Result<JordanChainCertificate> {
    let n = poly.n();
    let x0 = chain.first().ok_or(Error::ZeroEigenvector)?;
    if chain.iter().any(|x| x.len() != n) {
        return Err(Error::Dimension(format!("chain vectors must have length {n}")));
    }
    if x0.iter().all(|z| *z == ZERO) {
        return Err(Error::ZeroEigenvector);
    }
    let taylor = poly.taylor_coefficients(lambda0);
    let residuals = (0..chain.len())
        .map(|j| {
            let mut acc = CVec::zeros(n);
            for (i, d) in taylor.iter().enumerate().take(j + 1) {
                acc += d * &chain[j - i];
            }
            acc.norm()
        })
        .collect();
    Ok(JordanChainCertificate { lambda0, chain: chain.to_vec(), residuals })
}

/// Extracts a Jordan chain `x_0 … x_{len-1}` from the numerical null space of
/// `T(P, λ0)` with `len` diagonal blocks.
///
/// Among unit null vectors, picks the one whose leading block is largest; a
/// vanishing leading block means no chain of that length exists.
pub fn recover_chain(
    poly: &MatrixPolynomial,
    lambda0: C64,
    len: usize,
    tol: f64,
) -> Result<Vec<CVec>> {
    if len == 0 {
        return Err(Error::InvalidParameter("chain length must be positive".into()));
    }
    let n = poly.n();
    let t = build_t(poly, lambda0, len - 1);
    let svd = Svd::new(&t);
    let dim = t.ncols();
    let tol = if tol > 0.0 { tol } else { default_rank_tol(dim, dim) };
    let rank = svd.rank(tol);
    if rank == dim {
        return Err(Error::ZeroEigenvector);
    }
    let null = svd.v.columns(rank, dim - rank).into_owned();
    let lead = null.rows(0, n).into_owned();
    let lead_svd = Svd::new(&lead);
    if lead_svd.sigma_max() <= 1e-8 {
        return Err(Error::ZeroEigenvector);
    }
    let z = &null * lead_svd.v.column(0);
    Ok((0..len).map(|j| z.rows(j * n, n).into_owned()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;

    fn jordan_pencil(lam0: C64) -> MatrixPolynomial {
        let a0 = CMat::from_row_slice(2, 2, &[-lam0, -ONE, ZERO, -lam0]);
        MatrixPolynomial::new(vec![a0, CMat::identity(2, 2)]).unwrap()
    }

    #[test]
    fn nilpotent_jordan_block_has_multiplicity_two() {
        let p = jordan_pencil(ZERO);
        let (yes, cert) = multiplicity_at_least(&p, ZERO, 2, 0.0).unwrap();
        assert!(yes);
        assert_eq!(cert.rank_estimate, 2);
        assert!(!cert.ambiguous);
    }

    #[test]
    fn scalar_quadratic_roots() {
        let p = MatrixPolynomial::from_real_rows(1, &[&[-1.0], &[0.0], &[1.0]]).unwrap();
        let mut eig = companion_eigenvalues(&p).unwrap().finite;
        eig.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert_eq!(eig.len(), 2);
        assert!((eig[0] - C64::new(-1.0, 0.0)).norm() < 1e-12);
        assert!((eig[1] - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn zero_leading_coefficient_gives_infinite_eigenvalues() {
        // λ·0 + λ^0 · diag(1, 2) has two infinite eigenvalues
        let a0 = CMat::from_diagonal(&CVec::from_vec(vec![ONE, C64::new(2.0, 0.0)]));
        let p = MatrixPolynomial::new(vec![a0, CMat::zeros(2, 2)]).unwrap();
        let spec = companion_eigenvalues(&p).unwrap();
        assert_eq!(spec.infinite, 2);
        assert!(spec.finite.is_empty());
    }

    #[test]
    fn singular_polynomial_is_detected() {
        let a = CMat::from_row_slice(2, 2, &[ONE, ZERO, C64::new(3.0, 0.0), ZERO]);
        let p = MatrixPolynomial::new(vec![a.clone(), a * C64::new(-2.0, 1.0)]).unwrap();
        assert!(probe_regularity(&p).singular);
        assert!(matches!(companion_eigenvalues(&p), Err(Error::SingularPolynomial)));
        let q = jordan_pencil(ZERO);
        assert!(!probe_regularity(&q).singular);
    }

    #[test]
    fn eigenpair_residual_vanishes() {
        let lam0 = C64::new(0.25, 0.5);
        let p = jordan_pencil(lam0);
        let x0 = CVec::from_vec(vec![ONE, ZERO]);
        let cert = chain_residuals(&p, lam0, std::slice::from_ref(&x0)).unwrap();
        assert!(cert.max_residual() < 1e-15);
        // x_1 = e_2 completes the chain for λI - J
        let x1 = CVec::from_vec(vec![ZERO, ONE]);
        let cert = chain_residuals(&p, lam0, &[x0, x1]).unwrap();
        assert!(cert.max_residual() < 1e-15);
        assert!(matches!(
            chain_residuals(&p, lam0, &[CVec::zeros(2)]),
            Err(Error::ZeroEigenvector)
        ));
    }

    #[test]
    fn recovered_chain_from_jordan_block() {
        let lam0 = C64::new(-0.5, 0.0);
        let p = jordan_pencil(lam0);
        let chain = recover_chain(&p, lam0, 2, 1e-10).unwrap();
        let cert = chain_residuals(&p, lam0, &chain).unwrap();
        assert!(cert.max_residual() < 1e-12);
        assert!(chain[0].norm() > 0.1);
    }

    #[test]
    fn zero_perturbation_of_planted_double_eigenvalue_passes() {
        let lam0 = C64::new(0.3, 0.0);
        let p = jordan_pencil(lam0);
        let dp = MatrixPolynomial::zeros(2, 1);
        let rep = verify_perturbation(&p, &dp, lam0, 2, 1e-8).unwrap();
        assert!(rep.passed, "{rep:?}");
        let minus = p.scaled(C64::new(-1.0, 0.0));
        let rep = verify_perturbation(&p, &minus, lam0, 2, 1e-8).unwrap();
        assert!(!rep.regular && !rep.passed);
    }
}
