//! End-to-end analysis: pre-checks, bounds, optimization and certificates.

use serde::Serialize;

use crate::bounds::{self, BoundResult, SearchConfig};
use crate::certify::{
    multiplicity_at_least, probe_regularity, verify_perturbation, RegularityProbe, VerificationReport,
};
use crate::distopt::{self, DistoptConfig, Field};
use crate::io::InstanceFile;
use crate::mulink::{mu_consistency_check, MuConsistencyReport};
use crate::polyalg::{MatrixPolynomial, NormKind};
use crate::{Error, Result, C64};

#[derive(Clone, Debug)]
pub struct AnalysisConfig {
    pub lambda0: C64,
    /// Target multiplicity `r + 1`.
    pub r_plus_1: usize,
    pub norm: NormKind,
    pub distopt: DistoptConfig,
    pub search: SearchConfig,
    /// Tolerance for certifying the optimizer's perturbation.
    pub distance_tol: f64,
    /// Tolerance for certifying the upper-bound perturbation.
    pub bound_tol: f64,
    /// Relative singular-value cutoff for the μ-value nullities.
    pub mu_tol: f64,
    pub run_optimizer: bool,
}

impl AnalysisConfig {
    pub fn new(lambda0: C64, r_plus_1: usize, norm: NormKind) -> Self {
        AnalysisConfig {
            lambda0,
            r_plus_1,
            norm,
            distopt: DistoptConfig::default(),
            search: SearchConfig::default(),
            distance_tol: 1e-6,
            bound_tol: 1e-8,
            mu_tol: 1e-8,
            run_optimizer: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.distopt.seed = seed;
        self.search.seed = seed;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Status {
    Computed,
    /// `P` is numerically singular, so every distance is zero.
    SingularPolynomial,
    /// `λ0` already has multiplicity at least `r + 1`.
    AlreadyMultiple,
}

#[derive(Clone, Debug, Serialize)]
pub struct Certificates {
    pub verification: VerificationReport,
    pub mu_consistency: Option<MuConsistencyReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimizerSummary {
    pub iterations: usize,
    pub evaluations: usize,
    pub restarts: usize,
    pub converged: bool,
    pub grad_norm: f64,
    pub best_start: usize,
    pub field: Field,
    pub rank_cliff_hits: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSettings {
    pub seed: u64,
    pub starts: usize,
    pub max_iter: usize,
    pub bound_starts: usize,
    pub bound_budget: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct DistanceReport {
    pub lambda0: [f64; 2],
    pub r_plus_1: usize,
    pub norm: NormKind,
    pub n: usize,
    pub k: usize,
    pub status: Status,
    pub regularity: RegularityProbe,
    pub lower_bound_sigma: Option<f64>,
    pub lower_bound_scaling: Option<f64>,
    pub distance: Option<f64>,
    pub upper_bound: Option<f64>,
    pub upper_bound_gamma_free: bool,
    pub upper_bound_gamma: Option<Vec<f64>>,
    pub perturbation: Option<InstanceFile>,
    pub upper_bound_perturbation: Option<InstanceFile>,
    pub distance_certificates: Option<Certificates>,
    pub upper_bound_certificates: Option<Certificates>,
    pub optimizer: Option<OptimizerSummary>,
    /// `lb ≤ distance ≤ ub` up to `slack`.
    pub sandwich_ok: bool,
    pub slack: f64,
    pub settings: RunSettings,
    pub notes: Vec<String>,
}

impl DistanceReport {
    pub fn best_lower_bound(&self) -> Option<f64> {
        match (self.lower_bound_sigma, self.lower_bound_scaling) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        }
    }

    /// Whether every produced perturbation passed its certificate.
    pub fn certificates_pass(&self) -> bool {
        [&self.distance_certificates, &self.upper_bound_certificates]
            .iter()
            .all(|c| c.as_ref().is_none_or(|c| c.verification.passed))
    }
}

fn certify(
    poly: &MatrixPolynomial,
    delta: &MatrixPolynomial,
    cfg: &AnalysisConfig,
    tol: f64,
) -> Result<Certificates> {
    let r = cfg.r_plus_1 - 1;
    let verification = verify_perturbation(poly, delta, cfg.lambda0, cfg.r_plus_1, tol)?;
    let mu_consistency = match mu_consistency_check(poly, cfg.lambda0, r, delta, cfg.mu_tol) {
        Ok(rep) => Some(rep),
        Err(Error::EigenvalueAtLambda0 { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(Certificates { verification, mu_consistency })
}

/// Runs the full analysis of `δ_s(P, λ0, r+1)`.
pub fn analyze(poly: &MatrixPolynomial, cfg: &AnalysisConfig) -> Result<DistanceReport> {
    let (n, k) = (poly.n(), poly.degree());
    if cfg.r_plus_1 < 2 || cfg.r_plus_1 > k * n {
        return Err(Error::InvalidParameter(format!(
            "multiplicity r + 1 = {} must lie in 2..={}",
            cfg.r_plus_1,
            k * n
        )));
    }
    let r = cfg.r_plus_1 - 1;
    let lambda0 = cfg.lambda0;
    let mut report = DistanceReport {
        lambda0: [lambda0.re, lambda0.im],
        r_plus_1: cfg.r_plus_1,
        norm: cfg.norm,
        n,
        k,
        status: Status::Computed,
        regularity: probe_regularity(poly),
        lower_bound_sigma: None,
        lower_bound_scaling: None,
        distance: None,
        upper_bound: None,
        upper_bound_gamma_free: false,
        upper_bound_gamma: None,
        perturbation: None,
        upper_bound_perturbation: None,
        distance_certificates: None,
        upper_bound_certificates: None,
        optimizer: None,
        sandwich_ok: true,
        slack: 1e-6 * poly.norm(cfg.norm),
        settings: RunSettings {
            seed: cfg.distopt.seed,
            starts: cfg.distopt.starts,
            max_iter: cfg.distopt.max_iter,
            bound_starts: cfg.search.starts,
            bound_budget: cfg.search.budget,
        },
        notes: Vec::new(),
    };
    if report.regularity.singular {
        report.status = Status::SingularPolynomial;
        report.distance = Some(0.0);
        report.notes.push(
            "P is numerically singular; it lies arbitrarily close to polynomials with any \
             prescribed elementary divisor, so the distance is 0"
                .into(),
        );
        return Ok(report);
    }
    let (already, cert) = multiplicity_at_least(poly, lambda0, cfg.r_plus_1, 0.0)?;
    if already {
        report.status = Status::AlreadyMultiple;
        report.distance = Some(0.0);
        report.notes.push(format!(
            "λ0 already has multiplicity ≥ {} (σ ratio {:.3e})",
            cfg.r_plus_1,
            cert.relative_sigma()
        ));
        return Ok(report);
    }
    if cert.ambiguous {
        report.notes.push("rank of T(P, λ0) is ill-conditioned near the threshold".into());
    }

    report.lower_bound_sigma = Some(bounds::lower_bound_sigma(poly, lambda0, r, &cfg.search)?.value);
    match bounds::lower_bound_scaling(poly, lambda0, r, &cfg.search) {
        Ok(b) => report.lower_bound_scaling = Some(b.value),
        Err(Error::EigenvalueAtLambda0 { ratio }) => report.notes.push(format!(
            "T(P, λ0) is numerically singular (ratio {ratio:.3e}); only the σ-based lower bound applies"
        )),
        Err(e) => return Err(e),
    }

    let ub: BoundResult = if r == 1 && lambda0 == C64::new(0.0, 0.0) {
        distopt::gamma_free_r1_refinement(poly, cfg.norm, &cfg.search)?
    } else {
        bounds::upper_bound(poly, lambda0, r, cfg.norm, &cfg.search)?
    };
    if ub.value.is_finite() {
        report.upper_bound = Some(ub.value);
        report.upper_bound_gamma_free = ub.gamma_free;
        report.upper_bound_gamma = ub.gamma().map(|g| g.as_slice().to_vec());
        if let Some(dp) = &ub.perturbation {
            report.upper_bound_perturbation = Some(InstanceFile::from_polynomial(dp));
            report.upper_bound_certificates = Some(certify(poly, dp, cfg, cfg.bound_tol)?);
        }
    } else {
        report.notes.push("no evaluated γ had a nonzero leading block v_0".into());
    }

    if cfg.run_optimizer {
        let mut dcfg = cfg.distopt.clone();
        if !ub.gamma_free {
            if let Some(seed) = bounds::upper_bound_chain(poly, lambda0, &ub, cfg.norm, cfg.search.singular_offset) {
                dcfg.seeds.insert(0, seed);
            }
        }
        let opt = distopt::minimize(poly, lambda0, r, cfg.norm, &dcfg)?;
        report.distance = Some(opt.value);
        report.perturbation = Some(InstanceFile::from_polynomial(&opt.perturbation));
        report.distance_certificates = Some(certify(poly, &opt.perturbation, cfg, cfg.distance_tol)?);
        report.optimizer = Some(OptimizerSummary {
            iterations: opt.iterations,
            evaluations: opt.evaluations,
            restarts: opt.restarts,
            converged: opt.converged,
            grad_norm: opt.grad_norm,
            best_start: opt.best_start,
            field: opt.field,
            rank_cliff_hits: opt.rank_cliff_hits,
        });
    }

    let slack = report.slack;
    let lb = report.best_lower_bound().unwrap_or(0.0);
    let mut ok = true;
    if let Some(d) = report.distance {
        ok &= lb <= d + slack;
        if let Some(u) = report.upper_bound {
            ok &= d <= u + slack;
        }
    } else if let Some(u) = report.upper_bound {
        ok &= lb <= u + slack;
    }
    report.sandwich_ok = ok;
    Ok(report)
}
