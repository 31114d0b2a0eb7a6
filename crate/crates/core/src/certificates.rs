//! Closed-form suboptimality certificates for greedy designs.
//!
//! For an α-supermodular cost (multiplicative relaxation) the greedy
//! design of length `ℓ` satisfies
//!
//! ```text
//! f(G_ℓ) <= [1 − Π_{h<ℓ} (1 − 1/Σ_{s<k} α(h,h+s)⁻¹)] f(D★) <= (1 − e^{−ᾱℓ/k}) f(D★)
//! ```
//!
//! and for an ε-supermodular cost (additive relaxation)
//!
//! ```text
//! f(G_ℓ) <= [1 − (1 − 1/k)^ℓ] f(D★) + (1/k) Σ_{s<k} Σ_{h<ℓ} ε(h,h+s) (1 − 1/k)^{ℓ−1−h}
//!        <= (1 − e^{−ℓ/k}) (f(D★) + k ε̄)
//! ```
//!
//! The A cost is α-supermodular with
//! `α(a, ·) >= κ(H)⁻² λmin(R_θ⁻¹) / (λmax(R_θ⁻¹) + a ℓ_max)` and the E cost is
//! ε-supermodular with `ε(a, b) <= (b − a) σmax(H)² λmax(R_θ)² ℓ_max`.

use serde::{Deserialize, Serialize};

use crate::criteria::Criterion;
use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};
use crate::model::Pool;

/// Below this ratio `σmin(H)/σmax(H)` the target counts as rank deficient.
pub const RANK_TOL: f64 = 1e-12;

/// Spectral constants of a pool that enter the closed-form bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSpectra {
    /// `κ(H) = σmax(H)/σmin(H)`, `None` when `H` has rank below `p`.
    pub kappa_h: Option<f64>,
    pub sigma_max_h: f64,
    pub sigma_min_h: f64,
    pub lambda_min_prior_info: f64,
    pub lambda_max_prior_info: f64,
    pub lambda_max_prior_cov: f64,
    pub ell_max: f64,
    /// `λmax(M_e)` for every experiment, sorted in decreasing order.
    pub lambda_max_m_desc: Vec<f64>,
}

impl PoolSpectra {
    pub fn new(pool: &Pool) -> Self {
        // Singular values of H from HᵀH (p × p): rank < p shows up as σmin = 0.
        let h = pool.target();
        let hth = SymMatrix::symmetrize(h.transpose() * h);
        let (lo, hi) = linalg::extreme_eigs(&hth);
        let sigma_max_h = hi.max(0.0).sqrt();
        let sigma_min_h = lo.max(0.0).sqrt();
        let kappa_h = (sigma_max_h > 0.0 && sigma_min_h > RANK_TOL * sigma_max_h).then(|| sigma_max_h / sigma_min_h);
        let (lambda_min_prior_info, lambda_max_prior_info) = linalg::extreme_eigs(pool.prior_info());
        let lambda_max_prior_cov = linalg::lambda_max(pool.prior_cov());
        let mut lambda_max_m_desc: Vec<f64> = pool.experiments().iter().map(|e| e.lambda_max()).collect();
        lambda_max_m_desc.sort_by(|a, b| b.total_cmp(a));
        Self {
            kappa_h,
            sigma_max_h,
            sigma_min_h,
            lambda_min_prior_info,
            lambda_max_prior_info,
            lambda_max_prior_cov,
            ell_max: lambda_max_m_desc.first().copied().unwrap_or(0.0),
            lambda_max_m_desc,
        }
    }

    fn kappa(&self) -> Result<f64> {
        self.kappa_h.ok_or(Error::RankDeficientTarget {
            ratio: if self.sigma_max_h > 0.0 { self.sigma_min_h / self.sigma_max_h } else { 0.0 },
        })
    }

    /// `κ(H)⁻² λmin(R_θ⁻¹) / (λmax(R_θ⁻¹) + a ℓ_max)`.
    pub fn alpha_bound(&self, a: usize) -> Result<f64> {
        let kappa = self.kappa()?;
        Ok(self.lambda_min_prior_info / (kappa * kappa * (self.lambda_max_prior_info + a as f64 * self.ell_max)))
    }

    /// Same bound with `a ℓ_max` replaced by the sum of the `a` largest
    /// `λmax(M_e)`; with replacement every term is `ℓ_max`.
    pub fn alpha_bound_tightened(&self, a: usize, with_replacement: bool) -> Result<f64> {
        let kappa = self.kappa()?;
        let spectral_sum: f64 = if with_replacement {
            a as f64 * self.ell_max
        } else {
            self.lambda_max_m_desc.iter().take(a).sum()
        };
        Ok(self.lambda_min_prior_info / (kappa * kappa * (self.lambda_max_prior_info + spectral_sum)))
    }

    /// `c = σmax(H)² λmax(R_θ)² ℓ_max`, the per-step slope of the ε bound.
    pub fn epsilon_slope(&self) -> f64 {
        self.sigma_max_h.powi(2) * self.lambda_max_prior_cov.powi(2) * self.ell_max
    }

    /// `(b − a) c`.
    pub fn epsilon_bound(&self, a: usize, b: usize) -> Result<f64> {
        if b < a {
            return Err(Error::InvalidArgument(format!("epsilon bound needs b >= a, got a={a}, b={b}")));
        }
        Ok((b - a) as f64 * self.epsilon_slope())
    }
}

pub fn alpha_bound_a(pool: &Pool, a: usize) -> Result<f64> {
    PoolSpectra::new(pool).alpha_bound(a)
}

pub fn alpha_bound_tightened(pool: &Pool, a: usize, with_replacement: bool) -> Result<f64> {
    PoolSpectra::new(pool).alpha_bound_tightened(a, with_replacement)
}

pub fn epsilon_bound_e(pool: &Pool, a: usize, b: usize) -> Result<f64> {
    PoolSpectra::new(pool).epsilon_bound(a, b)
}

/// Pool constants recorded alongside a multiplicative certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaParams {
    pub kappa_h: f64,
    pub lambda_min_prior_info: f64,
    pub lambda_max_prior_info: f64,
    pub ell_max: f64,
    pub tightened: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCertificate {
    pub k: usize,
    pub ell: usize,
    /// `min_{a <= b < a+k} α(a, b)` for each `a < ℓ`.
    pub per_a: Vec<f64>,
    pub alpha_bar: f64,
    pub factor_product: f64,
    pub factor_exp: f64,
    pub equivalent_alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<AlphaParams>,
}

fn check_sizes(k: usize, ell: usize) -> Result<()> {
    if k == 0 || ell == 0 {
        return Err(Error::InvalidArgument(format!("certificates need k >= 1 and ell >= 1, got k={k}, ell={ell}")));
    }
    Ok(())
}

/// Product-form and exponential-form multiplicative guarantees for an
/// arbitrary `α(a, b)`. Infinite α (no constraint) is accepted.
pub fn alpha_guarantee(alpha: impl Fn(usize, usize) -> f64, k: usize, ell: usize) -> Result<AlphaCertificate> {
    check_sizes(k, ell)?;
    let mut alpha_bar = f64::INFINITY;
    // α over a <= b < ℓ + k; the product only needs b < a + k.
    for a in 0..ell {
        for b in a..ell + k {
            let v = alpha(a, b);
            if v.is_nan() || v <= 0.0 {
                return Err(Error::InvalidAlpha { a, b, value: v });
            }
            alpha_bar = alpha_bar.min(v);
        }
    }
    let mut per_a = Vec::with_capacity(ell);
    let mut product = 1.0;
    for h in 0..ell {
        let inv_sum: f64 = (0..k).map(|s| 1.0 / alpha(h, h + s)).sum();
        per_a.push((0..k).map(|s| alpha(h, h + s)).fold(f64::INFINITY, f64::min));
        // A step factor below 0 would only strengthen the claim; clamp it.
        let step = (1.0 - 1.0 / inv_sum).clamp(0.0, 1.0);
        product *= step;
    }
    let factor_product = 1.0 - product;
    let factor_exp = 1.0 - (-alpha_bar * ell as f64 / k as f64).exp();
    let equivalent_alpha = equivalent_alpha(factor_product, k, ell)?;
    Ok(AlphaCertificate {
        k,
        ell,
        per_a,
        alpha_bar,
        factor_product,
        factor_exp,
        equivalent_alpha,
        params: None,
    })
}

/// `α̂ = k (1 − (1 − factor)^{1/ℓ})`: the constant α whose product form
/// reproduces `factor_product`.
pub fn equivalent_alpha(factor_product: f64, k: usize, ell: usize) -> Result<f64> {
    check_sizes(k, ell)?;
    if !(factor_product <= 1.0) {
        return Err(Error::DegenerateFactor { factor: factor_product });
    }
    let remaining = 1.0 - factor_product;
    Ok(k as f64 * (1.0 - remaining.powf(1.0 / ell as f64)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonCertificate {
    pub k: usize,
    pub ell: usize,
    /// `per_ab[a][s] = ε(a, a + s)` for `a < ℓ`, `s < k`.
    pub per_ab: Vec<Vec<f64>>,
    pub epsilon_bar: f64,
    /// `1 − (1 − 1/k)^ℓ`, multiplying `f(D★)`.
    pub multiplicative: f64,
    pub additive_product: f64,
    /// `(1 − e^{−ℓ/k}) k ε̄`.
    pub additive_exp: f64,
    pub equivalent_epsilon: f64,
    /// `(1 − e^{−ℓ/k}) (f★ + k ε̄)` when `f★` is known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exp_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_star: Option<f64>,
}

impl EpsilonCertificate {
    /// Right-hand side of the product/sum form for a given `f(D★)`.
    pub fn product_bound(&self, f_star: f64) -> f64 {
        self.multiplicative * f_star + self.additive_product
    }
}

fn discount_weights(k: usize, ell: usize) -> Vec<f64> {
    let q = 1.0 - 1.0 / k as f64;
    (0..ell).map(|h| q.powi((ell - 1 - h) as i32)).collect()
}

pub fn epsilon_guarantee(
    epsilon: impl Fn(usize, usize) -> f64,
    k: usize,
    ell: usize,
    f_star: Option<f64>,
) -> Result<EpsilonCertificate> {
    check_sizes(k, ell)?;
    let mut epsilon_bar = f64::NEG_INFINITY;
    for a in 0..ell {
        for b in a..ell + k {
            let v = epsilon(a, b);
            if v.is_nan() {
                return Err(Error::InvalidArgument(format!("epsilon({a}, {b}) is NaN")));
            }
            epsilon_bar = epsilon_bar.max(v);
        }
    }
    let weights = discount_weights(k, ell);
    let per_ab: Vec<Vec<f64>> = (0..ell).map(|h| (0..k).map(|s| epsilon(h, h + s)).collect()).collect();
    let additive_product = per_ab
        .iter()
        .zip(&weights)
        .map(|(row, w)| row.iter().sum::<f64>() * w)
        .sum::<f64>()
        / k as f64;
    let q = 1.0 - 1.0 / k as f64;
    let multiplicative = 1.0 - q.powi(ell as i32);
    let exp_factor = 1.0 - (-(ell as f64) / k as f64).exp();
    let additive_exp = exp_factor * k as f64 * epsilon_bar;
    let equivalent_epsilon = equivalent_epsilon(additive_product, k, ell)?;
    Ok(EpsilonCertificate {
        k,
        ell,
        per_ab,
        epsilon_bar,
        multiplicative,
        additive_product,
        additive_exp,
        equivalent_epsilon,
        exp_bound: f_star.map(|f| exp_factor * (f + k as f64 * epsilon_bar)),
        f_star,
    })
}

/// `ε̂ = additive_product / Σ_{h<ℓ} (1 − 1/k)^{ℓ−1−h}`.
pub fn equivalent_epsilon(additive_product: f64, k: usize, ell: usize) -> Result<f64> {
    check_sizes(k, ell)?;
    let total: f64 = discount_weights(k, ell).iter().sum();
    Ok(additive_product / total)
}

/// Classical guarantee for exactly supermodular costs such as D.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DGuarantee {
    pub k: usize,
    /// `1 − (1 − 1/k)^k`.
    pub finite: f64,
    /// `1 − e⁻¹`.
    pub exponential: f64,
}

pub fn d_guarantee(k: usize) -> Result<DGuarantee> {
    if k == 0 {
        return Err(Error::InvalidArgument("d_guarantee needs k >= 1".into()));
    }
    let q = 1.0 - 1.0 / k as f64;
    Ok(DGuarantee { k, finite: 1.0 - q.powi(k as i32), exponential: 1.0 - (-1.0f64).exp() })
}

/// α certificate for the A cost from the closed-form spectral bound.
pub fn a_certificate(pool: &Pool, k: usize, ell: usize, tightened: bool, with_replacement: bool) -> Result<AlphaCertificate> {
    let spectra = PoolSpectra::new(pool);
    let kappa_h = spectra.kappa()?;
    let per_a: Vec<f64> = (0..ell)
        .map(|a| {
            if tightened {
                spectra.alpha_bound_tightened(a, with_replacement)
            } else {
                spectra.alpha_bound(a)
            }
        })
        .collect::<Result<_>>()?;
    let mut cert = alpha_guarantee(|a, _| per_a[a], k, ell)?;
    cert.params = Some(AlphaParams {
        kappa_h,
        lambda_min_prior_info: spectra.lambda_min_prior_info,
        lambda_max_prior_info: spectra.lambda_max_prior_info,
        ell_max: spectra.ell_max,
        tightened,
    });
    Ok(cert)
}

/// ε certificate for the E cost from the closed-form spectral bound.
pub fn e_certificate(pool: &Pool, k: usize, ell: usize, f_star: Option<f64>) -> Result<EpsilonCertificate> {
    let c = PoolSpectra::new(pool).epsilon_slope();
    epsilon_guarantee(|a, b| (b - a) as f64 * c, k, ell, f_star)
}

/// Serialized certificate with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub pool_hash: String,
    pub criterion: Criterion,
    pub k: usize,
    pub ell: usize,
    pub spectra: PoolSpectra,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<AlphaCertificate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<EpsilonCertificate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<DGuarantee>,
}

pub struct CertifyOptions {
    pub tightened: bool,
    pub with_replacement: bool,
    pub f_star: Option<f64>,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { tightened: false, with_replacement: true, f_star: None }
    }
}

/// Certificate matching the criterion: α for A, ε for E, the classical
/// factor for D.
pub fn certify(pool: &Pool, criterion: Criterion, k: usize, ell: usize, opts: &CertifyOptions) -> Result<CertificateReport> {
    check_sizes(k, ell)?;
    let mut report = CertificateReport {
        pool_hash: crate::io::pool_hash(pool),
        criterion,
        k,
        ell,
        spectra: PoolSpectra::new(pool),
        alpha: None,
        epsilon: None,
        d: None,
    };
    match criterion {
        Criterion::A => report.alpha = Some(a_certificate(pool, k, ell, opts.tightened, opts.with_replacement)?),
        Criterion::E => report.epsilon = Some(e_certificate(pool, k, ell, opts.f_star)?),
        Criterion::D => {
            pool.check_d_criterion()?;
            report.d = Some(d_guarantee(k)?);
        }
    }
    Ok(report)
}
