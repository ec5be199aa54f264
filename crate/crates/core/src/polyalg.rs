//! Matrix polynomials and the structured matrices built from them.
//!
//! All builders are pure functions; the returned matrices are dense.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::{binomial, frobenius_norm, hstack, kron, spectral_norm, CMat, C64, ONE, ZERO};
use crate::{Error, Result};

/// Which coefficient norm measures a perturbation.
///
/// `Frobenius` is `(Σ ‖A_i‖_F²)^{1/2}`, `Two` is `‖[A_0 … A_k]‖_2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NormKind {
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "F")]
    Frobenius,
}

impl NormKind {
    pub fn of(self, a: &CMat) -> f64 {
        match self {
            NormKind::Two => spectral_norm(a),
            NormKind::Frobenius => frobenius_norm(a),
        }
    }
}

impl std::str::FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2" => Ok(NormKind::Two),
            "F" | "f" | "fro" => Ok(NormKind::Frobenius),
            other => Err(Error::InvalidParameter(format!("unknown norm '{other}' (use 2 or F)"))),
        }
    }
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NormKind::Two => write!(f, "2"),
            NormKind::Frobenius => write!(f, "F"),
        }
    }
}

/// `P(λ) = Σ_{i=0}^{k} λ^i A_i` with square complex coefficients.
///
/// The degree is the number of stored coefficients minus one; a zero leading
/// coefficient is kept as is.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixPolynomial {
    coeffs: Vec<CMat>,
}

impl MatrixPolynomial {
    pub fn new(coeffs: Vec<CMat>) -> Result<Self> {
        let first = coeffs
            .first()
            .ok_or_else(|| Error::InvalidPolynomial("no coefficients".into()))?;
        let n = first.nrows();
        if n == 0 {
            return Err(Error::InvalidPolynomial("empty coefficient matrices".into()));
        }
        for (i, a) in coeffs.iter().enumerate() {
            if a.shape() != (n, n) {
                return Err(Error::InvalidPolynomial(format!(
                    "coefficient A_{i} has shape {:?}, expected ({n}, {n})",
                    a.shape()
                )));
            }
            if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidPolynomial(format!("coefficient A_{i} is not finite")));
            }
        }
        Ok(MatrixPolynomial { coeffs })
    }

    pub fn from_real(coeffs: Vec<DMatrix<f64>>) -> Result<Self> {
        Self::new(coeffs.iter().map(crate::linalg::to_complex).collect())
    }

    /// Row-major real coefficients, one slice per `A_i`.
    pub fn from_real_rows(n: usize, coeffs: &[&[f64]]) -> Result<Self> {
        Self::from_real(
            coeffs
                .iter()
                .map(|c| DMatrix::from_row_slice(n, n, c))
                .collect(),
        )
    }

    pub fn zeros(n: usize, k: usize) -> Self {
        MatrixPolynomial { coeffs: vec![CMat::zeros(n, n); k + 1] }
    }

    pub fn n(&self) -> usize {
        self.coeffs[0].nrows()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[CMat] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize) -> &CMat {
        &self.coeffs[i]
    }

    pub fn is_real(&self) -> bool {
        self.coeffs.iter().all(crate::linalg::is_real)
    }

    /// `G = [A_0 … A_k]`, an `n × (k+1)n` matrix.
    pub fn stacked(&self) -> CMat {
        hstack(&self.coeffs)
    }

    /// Inverse of [`stacked`](Self::stacked).
    pub fn from_stacked(g: &CMat, n: usize) -> Result<Self> {
        if n == 0 || g.nrows() != n || !g.ncols().is_multiple_of(n) || g.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "stacked coefficients of shape {:?} do not split into {n}×{n} blocks",
                g.shape()
            )));
        }
        Self::new(crate::linalg::split_columns(g, n))
    }

    pub fn eval(&self, lambda: C64) -> CMat {
        let mut acc = self.coeffs[self.degree()].clone();
        for a in self.coeffs.iter().rev().skip(1) {
            acc = acc * lambda + a;
        }
        acc
    }

    /// Taylor coefficients `P^{(j)}(λ0)/j!` for `j = 0..=k`, by repeated
    /// synthetic division.
    pub fn taylor_coefficients(&self, lambda0: C64) -> Vec<CMat> {
        let k = self.degree();
        let mut b = self.coeffs.clone();
        for j in 0..k {
            for i in (j..k).rev() {
                let next = b[i + 1].clone();
                b[i] += next * lambda0;
            }
        }
        b
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::Frobenius => self
                .coeffs
                .iter()
                .map(|a| frobenius_norm(a).powi(2))
                .sum::<f64>()
                .sqrt(),
            NormKind::Two => spectral_norm(&self.stacked()),
        }
    }

    /// `rev P(λ) = Σ λ^i A_{k-i}`.
    pub fn reversed(&self) -> Self {
        MatrixPolynomial { coeffs: self.coeffs.iter().rev().cloned().collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(MatrixPolynomial {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn scaled(&self, c: C64) -> Self {
        MatrixPolynomial { coeffs: self.coeffs.iter().map(|a| a * c).collect() }
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.n() != other.n() || self.degree() != other.degree() {
            return Err(Error::Dimension(format!(
                "polynomials of size/degree ({}, {}) and ({}, {})",
                self.n(),
                self.degree(),
                other.n(),
                other.degree()
            )));
        }
        Ok(())
    }
}

/// Perturbations `ΔP` are ordinary matrix polynomials of the same shape.
pub type PerturbationPolynomial = MatrixPolynomial;

/// Strictly positive scaling parameters `γ_1 … γ_r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GammaVector {
    entries: Vec<f64>,
}

impl GammaVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if let Some(bad) = entries.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::InvalidParameter(format!("γ entries must be positive, got {bad}")));
        }
        Ok(GammaVector { entries })
    }

    pub fn ones(r: usize) -> Self {
        GammaVector { entries: vec![1.0; r] }
    }

    /// `γ_i = exp(t_i)`.
    pub fn from_log(t: &[f64]) -> Result<Self> {
        Self::new(t.iter().map(|x| x.exp()).collect())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    /// `Π_{t=from}^{to-1} γ_t` with zero-based indices (empty product is 1).
    pub fn product(&self, from: usize, to: usize) -> f64 {
        self.entries[from..to].iter().product()
    }
}

impl TryFrom<Vec<f64>> for GammaVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        GammaVector::new(v)
    }
}

impl From<GammaVector> for Vec<f64> {
    fn from(g: GammaVector) -> Self {
        g.entries
    }
}

/// `[Q(λ0), Q'(λ0), …, Q^{(p)}(λ0)/p!]`, blocks beyond the degree are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeRow {
    pub lambda0: C64,
    pub blocks: Vec<CMat>,
}

impl DerivativeRow {
    pub fn order(&self) -> usize {
        self.blocks.len() - 1
    }

    /// The row as one `n × (p+1)n` matrix.
    pub fn as_matrix(&self) -> CMat {
        hstack(&self.blocks)
    }
}

/// `p = min{r, k}`.
pub fn truncation_order(r: usize, k: usize) -> usize {
    r.min(k)
}

pub fn eval_derivative_row(poly: &MatrixPolynomial, lambda0: C64, p: usize) -> DerivativeRow {
    let n = poly.n();
    let mut taylor = poly.taylor_coefficients(lambda0);
    taylor.resize(p + 1, CMat::zeros(n, n));
    DerivativeRow { lambda0, blocks: taylor }
}

/// `H(λ0)` of size `(k+1) × (p+1)` with `H(i, j) = C(i, j) λ0^{i-j}` (zero-based).
pub fn build_h(lambda0: C64, k: usize, r: usize) -> CMat {
    let p = truncation_order(r, k);
    CMat::from_fn(k + 1, p + 1, |i, j| {
        if i >= j {
            lambda0.powu((i - j) as u32) * binomial(i, j)
        } else {
            ZERO
        }
    })
}

/// `M(λ0; r) = H(λ0) ⊗ I_n`.
pub fn build_m(lambda0: C64, k: usize, r: usize, n: usize) -> CMat {
    kron(&build_h(lambda0, k, r), &CMat::identity(n, n))
}

/// Block lower-triangular `T_γ(P, λ0)` of size `(r+1)n`.
///
/// Block `(i, j)`, `i ≥ j`, is `(Π_{t=j}^{i-1} γ_t) · P^{(i-j)}(λ0)/(i-j)!`
/// (zero-based `γ`), and vanishes once `i - j` exceeds the degree.
pub fn build_t_gamma(poly: &MatrixPolynomial, lambda0: C64, gamma: &GammaVector) -> CMat {
    let r = gamma.len();
    let n = poly.n();
    let k = poly.degree();
    let row = eval_derivative_row(poly, lambda0, truncation_order(r, k));
    let mut t = CMat::zeros((r + 1) * n, (r + 1) * n);
    for i in 0..=r {
        for j in 0..=i {
            let d = i - j;
            if d > k {
                continue;
            }
            let scale = gamma.product(j, i);
            t.view_mut((i * n, j * n), (n, n))
                .copy_from(&(&row.blocks[d] * C64::new(scale, 0.0)));
        }
    }
    t
}

/// `T(P, λ0) = T_γ(P, λ0)` with `γ = [1 … 1]` of length `r`.
pub fn build_t(poly: &MatrixPolynomial, lambda0: C64, r: usize) -> CMat {
    build_t_gamma(poly, lambda0, &GammaVector::ones(r))
}

/// Selector `E` with `T(Q, λ0) = (I_{r+1} ⊗ row) E`.
///
/// Stacks `Ẽ_1 … Ẽ_{r+1}` (each the first `p+1` rows of the anti-diagonal
/// selector `E_i`) and takes the Kronecker product with `I_n`.
pub fn build_e(r: usize, k: usize, n: usize) -> CMat {
    let p = truncation_order(r, k);
    let mut sel = CMat::zeros((r + 1) * (p + 1), r + 1);
    for i in 0..=r {
        for d in 0..=i.min(p) {
            sel[(i * (p + 1) + d, i - d)] = ONE;
        }
    }
    kron(&sel, &CMat::identity(n, n))
}

/// The structured matrices attached to `(P, λ0, γ)`.
#[derive(Clone, Debug)]
pub struct StructuredMatrixSet {
    pub h: CMat,
    pub m: CMat,
    pub e: CMat,
    pub t_gamma: CMat,
}

impl StructuredMatrixSet {
    pub fn build(poly: &MatrixPolynomial, lambda0: C64, gamma: &GammaVector) -> Self {
        let (n, k, r) = (poly.n(), poly.degree(), gamma.len());
        StructuredMatrixSet {
            h: build_h(lambda0, k, r),
            m: build_m(lambda0, k, r, n),
            e: build_e(r, k, n),
            t_gamma: build_t_gamma(poly, lambda0, gamma),
        }
    }
}

pub fn poly_norm(poly: &MatrixPolynomial, kind: NormKind) -> f64 {
    poly.norm(kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::kron_identity;
    use crate::tables::example1;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    pub(crate) fn random_poly(rng: &mut ChaCha8Rng, n: usize, k: usize, complex: bool) -> MatrixPolynomial {
        let coeffs = (0..=k)
            .map(|_| {
                CMat::from_fn(n, n, |_, _| {
                    let im = if complex { rng.random_range(-1.0..1.0) } else { 0.0 };
                    C64::new(rng.random_range(-1.0..1.0), im)
                })
            })
            .collect();
        MatrixPolynomial::new(coeffs).unwrap()
    }

    #[test]
    fn constant_polynomial_row_is_zero_padded() {
        let a0 = CMat::from_fn(2, 2, |i, j| c((i + 2 * j) as f64 + 1.0));
        let p = MatrixPolynomial::new(vec![a0.clone()]).unwrap();
        let row = eval_derivative_row(&p, C64::new(0.3, -1.0), 2);
        assert_eq!(row.blocks.len(), 3);
        assert_eq!(row.blocks[0], a0);
        assert!(row.blocks[1].iter().all(|z| *z == ZERO));
        assert!(row.blocks[2].iter().all(|z| *z == ZERO));
    }

    #[test]
    fn row_at_zero_reproduces_coefficients() {
        let p = example1();
        let row = eval_derivative_row(&p, ZERO, 3);
        for i in 0..=3 {
            assert_eq!(&row.blocks[i], p.coeff(i));
        }
    }

    #[test]
    fn h_small_cases() {
        let h = build_h(c(1.0), 1, 1);
        assert_eq!(h, CMat::from_row_slice(2, 2, &[c(1.0), ZERO, c(1.0), c(1.0)]));
        let h = build_h(c(2.0), 3, 3);
        assert_eq!(h[(3, 1)], c(12.0));
        let h0 = build_h(ZERO, 4, 2);
        for i in 0..5 {
            for j in 0..3 {
                assert_eq!(h0[(i, j)], if i == j { ONE } else { ZERO });
            }
        }
    }

    /// Finite differences of the monomials `λ^i` against the closed form.
    #[test]
    fn h_matches_finite_difference_derivatives() {
        let lambda0 = 0.7;
        let h = build_h(c(lambda0), 4, 2);
        let step = 1e-3;
        for i in 0..5 {
            let f = |x: f64| x.powi(i as i32);
            let d1 = (f(lambda0 + step) - f(lambda0 - step)) / (2.0 * step);
            let d2 = (f(lambda0 + step) - 2.0 * f(lambda0) + f(lambda0 - step)) / (step * step) / 2.0;
            assert!((h[(i, 0)].re - f(lambda0)).abs() < 1e-12);
            assert!((h[(i, 1)].re - d1).abs() < 1e-5, "i={i}");
            assert!((h[(i, 2)].re - d2).abs() < 1e-5, "i={i}");
        }
    }

    #[test]
    fn m_is_h_for_scalar_polynomials() {
        let lam = C64::new(0.4, 0.2);
        assert_eq!(build_m(lam, 3, 2, 1), build_h(lam, 3, 2));
        let m = build_m(ZERO, 3, 3, 2);
        assert_eq!(m, CMat::identity(8, 8));
    }

    #[test]
    fn t_gamma_smallest_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_poly(&mut rng, 2, 3, true);
        let lam = C64::new(0.5, -0.1);
        let t = build_t_gamma(&p, lam, &GammaVector::ones(1));
        let row = eval_derivative_row(&p, lam, 1);
        assert_eq!(t.view((0, 0), (2, 2)), row.blocks[0]);
        assert_eq!(t.view((2, 0), (2, 2)), row.blocks[1]);
        assert_eq!(t.view((2, 2), (2, 2)), row.blocks[0]);
        assert!(t.view((0, 2), (2, 2)).iter().all(|z| *z == ZERO));
    }

    #[test]
    fn jordan_block_pencil_has_rank_drop() {
        // P(λ) = λI - J_2(λ0)
        let lam0 = C64::new(0.3, 0.0);
        let a0 = CMat::from_row_slice(2, 2, &[-lam0, -ONE, ZERO, -lam0]);
        let p = MatrixPolynomial::new(vec![a0, CMat::identity(2, 2)]).unwrap();
        for g in [0.1, 1.0, 7.0] {
            let t = build_t_gamma(&p, lam0, &GammaVector::new(vec![g]).unwrap());
            let s = crate::linalg::singular_values(&t);
            assert!(s[2] < 1e-14 * s[0], "σ_3 = {}", s[2]);
        }
    }

    #[test]
    fn selector_for_r_one() {
        let e = build_e(1, 3, 1);
        let expect = CMat::from_row_slice(4, 2, &[ONE, ZERO, ZERO, ZERO, ZERO, ONE, ONE, ZERO]);
        assert_eq!(e, expect);
        let e = build_e(4, 2, 3);
        for i in 0..e.nrows() {
            let nz: Vec<_> = e.row(i).iter().filter(|z| **z != ZERO).copied().collect();
            assert!(nz.len() <= 1 && nz.iter().all(|z| *z == ONE));
        }
    }

    #[test]
    fn norms_of_simple_polynomials() {
        let z = MatrixPolynomial::zeros(3, 2);
        assert_eq!(z.norm(NormKind::Frobenius), 0.0);
        assert_eq!(z.norm(NormKind::Two), 0.0);
        let mut p = MatrixPolynomial::zeros(2, 2);
        p.coeffs[0] = CMat::identity(2, 2);
        assert!((p.norm(NormKind::Frobenius) - 2f64.sqrt()).abs() < 1e-15);
        assert!((p.norm(NormKind::Two) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn stacked_round_trip_and_reverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_poly(&mut rng, 3, 2, true);
        assert_eq!(MatrixPolynomial::from_stacked(&p.stacked(), 3).unwrap(), p);
        assert_eq!(p.reversed().reversed(), p);
        assert_eq!(p.reversed().coeff(0), p.coeff(2));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(MatrixPolynomial::new(vec![]).is_err());
        assert!(MatrixPolynomial::new(vec![CMat::zeros(2, 2), CMat::zeros(2, 3)]).is_err());
        let mut a = CMat::zeros(2, 2);
        a[(0, 0)] = C64::new(f64::NAN, 0.0);
        assert!(MatrixPolynomial::new(vec![a]).is_err());
        assert!(GammaVector::new(vec![1.0, 0.0]).is_err());
        assert!(GammaVector::new(vec![-2.0]).is_err());
    }

    fn scale_rel(a: &CMat) -> f64 {
        a.norm().max(1e-300)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn derivative_row_matches_lemma_product(seed in 0u64..10_000, n in 1usize..4, k in 1usize..5,
                                                r in 1usize..7, re in -1.5f64..1.5, im in -1.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_poly(&mut rng, n, k, true);
            let lam = C64::new(re, im);
            let row = eval_derivative_row(&p, lam, truncation_order(r, k)).as_matrix();
            let via_m = p.stacked() * build_m(lam, k, r, n);
            prop_assert!((&row - &via_m).norm() <= 1e-12 * scale_rel(&row));
        }

        #[test]
        fn toeplitz_factorization(seed in 0u64..10_000, n in 1usize..4, k in 1usize..5,
                                  r in 1usize..7, re in -1.5f64..1.5, im in -1.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_poly(&mut rng, n, k, true);
            let lam = C64::new(re, im);
            let t = build_t(&p, lam, r);
            let row = eval_derivative_row(&p, lam, truncation_order(r, k)).as_matrix();
            let fact = kron_identity(r + 1, &row) * build_e(r, k, n);
            prop_assert!((&t - &fact).norm() <= 1e-12 * scale_rel(&t));
        }

        #[test]
        fn gamma_scaling_touches_only_crossing_blocks(seed in 0u64..10_000, n in 1usize..3, k in 1usize..4,
                                                      r in 1usize..6, c in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_poly(&mut rng, n, k, true);
            let lam = C64::new(0.3, 0.1);
            let gamma: Vec<f64> = (0..r).map(|_| rng.random_range(0.2..3.0)).collect();
            let t_idx = rng.random_range(0..r);
            let mut scaled = gamma.clone();
            scaled[t_idx] *= c;
            let t0 = build_t_gamma(&p, lam, &GammaVector::new(gamma).unwrap());
            let t1 = build_t_gamma(&p, lam, &GammaVector::new(scaled).unwrap());
            for i in 0..=r {
                for j in 0..=r {
                    let b0 = t0.view((i * n, j * n), (n, n)).into_owned();
                    let b1 = t1.view((i * n, j * n), (n, n)).into_owned();
                    if j <= t_idx && t_idx < i {
                        let expect = &b0 * C64::new(c, 0.0);
                        prop_assert!((&b1 - &expect).norm() <= 1e-13 * (1.0 + expect.norm()));
                    } else {
                        prop_assert_eq!(b0, b1);
                    }
                }
            }
        }

        #[test]
        fn spectral_norm_below_frobenius(seed in 0u64..10_000, n in 1usize..4, k in 0usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_poly(&mut rng, n, k, true);
            prop_assert!(p.norm(NormKind::Two) <= p.norm(NormKind::Frobenius) * (1.0 + 1e-14));
        }
    }
}
