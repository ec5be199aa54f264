//! Dense complex linear-algebra helpers shared by every module.

use nalgebra::{DMatrix, DVector, SVD};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Thin singular value decomposition `A = U diag(s) V^*` with `s` descending.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    /// Right singular vectors as columns (not `V^*`).
    pub v: CMat,
}

impl Svd {
    pub fn new(a: &CMat) -> Self {
        assert!(
            a.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
            "SVD of a matrix with non-finite entries"
        );
        let svd = SVD::new(a.clone(), true, true);
        let u = svd.u.expect("u requested");
        let v = svd.v_t.expect("v_t requested").adjoint();
        let s = svd.singular_values.iter().copied().collect();
        Svd { u, s, v }
    }

    pub fn sigma_max(&self) -> f64 {
        self.s.first().copied().unwrap_or(0.0)
    }

    /// Number of singular values strictly above `rel_tol * σ_max`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let cut = rel_tol * self.sigma_max();
        self.s.iter().filter(|&&x| x > cut).count()
    }
}

/// Singular values only, descending.
pub fn singular_values(a: &CMat) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let svd = SVD::new(a.clone(), false, false);
    svd.singular_values.iter().copied().collect()
}

/// Default numerical-rank threshold relative to σ_max: `max(m, n) · ε`.
pub fn default_rank_tol(rows: usize, cols: usize) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON
}

/// Count of singular values above `rel_tol · σ_max`.
pub fn numerical_rank(a: &CMat, rel_tol: f64) -> usize {
    let s = singular_values(a);
    let cut = rel_tol * s.first().copied().unwrap_or(0.0);
    s.iter().filter(|&&x| x > cut).count()
}

/// `ncols - rank`, with singular values ≤ `rel_tol · σ_max` counted as zero.
pub fn nullity(a: &CMat, rel_tol: f64) -> usize {
    a.ncols() - numerical_rank(a, rel_tol)
}

pub fn spectral_norm(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    singular_values(a).first().copied().unwrap_or(0.0)
}

pub fn frobenius_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Moore–Penrose pseudoinverse via SVD; singular values at or below
/// `rank_tol · σ_max` are treated as zero.
pub fn pseudoinverse(a: &CMat, rank_tol: f64) -> CMat {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return CMat::zeros(n, m);
    }
    let svd = Svd::new(a);
    pinv_from_svd(&svd, rank_tol, n, m)
}

pub(crate) fn pinv_from_svd(svd: &Svd, rank_tol: f64, rows_out: usize, cols_out: usize) -> CMat {
    let cut = rank_tol * svd.sigma_max();
    let mut out = CMat::zeros(rows_out, cols_out);
    for (j, &sj) in svd.s.iter().enumerate() {
        if sj <= cut || sj == 0.0 {
            continue;
        }
        let vj = svd.v.column(j);
        let uj = svd.u.column(j);
        out += (vj * uj.adjoint()) * C64::new(1.0 / sj, 0.0);
    }
    out
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            out.view_mut((i * br, j * bc), (br, bc))
                .copy_from(&(b * aij));
        }
    }
    out
}

/// `I_m ⊗ b` without forming the identity.
pub fn kron_identity(m: usize, b: &CMat) -> CMat {
    let (br, bc) = b.shape();
    let mut out = CMat::zeros(m * br, m * bc);
    for i in 0..m {
        out.view_mut((i * br, i * bc), (br, bc)).copy_from(b);
    }
    out
}

/// Horizontal concatenation of equally tall blocks.
pub fn hstack(blocks: &[CMat]) -> CMat {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack: row mismatch");
        out.view_mut((0, c), b.shape()).copy_from(b);
        c += b.ncols();
    }
    out
}

/// Splits a wide matrix into consecutive column blocks of width `w`.
pub fn split_columns(a: &CMat, w: usize) -> Vec<CMat> {
    assert!(w > 0 && a.ncols().is_multiple_of(w));
    (0..a.ncols() / w)
        .map(|i| a.columns(i * w, w).into_owned())
        .collect()
}

pub fn is_real(a: &CMat) -> bool {
    a.iter().all(|z| z.im == 0.0)
}

pub fn to_complex(a: &DMatrix<f64>) -> CMat {
    a.map(|x| C64::new(x, 0.0))
}

pub fn cvec_norm(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Binomial coefficient as `f64` (exact for the small arguments used here).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cmat(rng: &mut ChaCha8Rng, m: usize, n: usize) -> CMat {
        CMat::from_fn(m, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn pinv_of_identity_is_identity() {
        let i = CMat::identity(4, 4);
        let p = pseudoinverse(&i, 1e-12);
        assert!((p - i).norm() < 1e-14);
    }

    #[test]
    fn pinv_of_rank_one_outer_product() {
        let u = CVec::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        let v = CVec::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]);
        let a = &u * v.adjoint();
        let p = pseudoinverse(&a, 1e-12);
        let expect = &v * u.adjoint();
        assert!((p - expect).norm() < 1e-14);
    }

    #[test]
    fn pinv_tall_full_rank_is_left_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_cmat(&mut rng, 6, 4);
        let p = pseudoinverse(&a, 1e-12);
        // normal-equations oracle: A† = (A^* A)^{-1} A^*
        let ne = (a.adjoint() * &a).try_inverse().unwrap() * a.adjoint();
        assert!((&p - &ne).norm() < 1e-10);
        assert!((&p * &a - CMat::identity(4, 4)).norm() < 1e-10);
    }

    #[test]
    fn penrose_identities_on_rank_deficient_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_cmat(&mut rng, 5, 2) * random_cmat(&mut rng, 2, 4);
        let p = pseudoinverse(&a, 1e-10);
        let na = a.norm();
        assert!((&a * &p * &a - &a).norm() <= 1e-10 * na);
        assert!((&p * &a * &p - &p).norm() <= 1e-10 * p.norm());
        let ap = &a * &p;
        let pa = &p * &a;
        assert!((ap.adjoint() - &ap).norm() <= 1e-10);
        assert!((pa.adjoint() - &pa).norm() <= 1e-10);
    }

    #[test]
    fn kron_identity_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_cmat(&mut rng, 2, 5);
        let k = kron_identity(3, &d);
        assert!((frobenius_norm(&k) - 3f64.sqrt() * frobenius_norm(&d)).abs() < 1e-12);
        assert!((spectral_norm(&k) - spectral_norm(&d)).abs() < 1e-12);
        let full = kron(&CMat::identity(3, 3), &d);
        assert_eq!(full, k);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(3, 1), 3.0);
        assert_eq!(binomial(6, 3), 20.0);
        assert_eq!(binomial(2, 5), 0.0);
    }
}
