use rayon::prelude::*;

use super::laplace::{ExactLaplace, LaplaceTransform, PppBound};
use super::qmc::ShiftedKronecker;
use super::quadrature::{integrate_with_breakpoints, Tolerance};
use super::special::ppp_gamma_product;
use super::{CoverageResult, Method, QuadratureSpec};
use crate::error::{invalid, Result};
use crate::model::{validate_policy, CachingPolicy, ContentLibrary, NetworkConfig};

/// Independent random shifts used to estimate the QMC error.
const QMC_REPLICATES: u64 = 8;

/// Smallest `k` such that `P(K > k) < tail_mass` for `K ~ Poisson(mean)`.
pub fn poisson_cutoff(mean: f64, tail_mass: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let mut pmf = (-mean).exp();
    let mut cdf = pmf;
    let mut k = 0usize;
    while 1.0 - cdf >= tail_mass && k < 10_000 {
        k += 1;
        pmf *= mean / k as f64;
        cdf += pmf;
    }
    k
}

fn check_prob(c_m: f64) -> Result<()> {
    if (0.0..=1.0).contains(&c_m) {
        Ok(())
    } else {
        Err(invalid(format!(
            "caching probability must lie in [0, 1], got {c_m}"
        )))
    }
}

/// Coverage given `k` caterers at i.i.d. Rayleigh(√2σ) distances, with an
/// absolute error estimate.
fn given_k_with_error(
    k: usize,
    cfg: &NetworkConfig,
    quad: &QuadratureSpec,
    laplace: &dyn LaplaceTransform,
) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(invalid(
            "coverage needs at least one catering device (k >= 1)",
        ));
    }
    let two_sigma = 2.0 * cfg.sigma();
    let alpha = cfg.alpha();
    let theta = cfg.theta();

    if k == 1 {
        // w = h²/(4σ²) turns the Rayleigh(√2σ) density into e^{-w}
        let f = |w: f64| laplace.laplace(theta * (two_sigma * w.sqrt()).powf(alpha)) * (-w).exp();
        let r = integrate_with_breakpoints(
            f,
            &[0.0, 0.5, 2.0, 6.0, 20.0, 80.0],
            Tolerance::new(quad.abs_tol * 1e-2, quad.rel_tol * 1e-2),
        )?;
        return Ok((r.value, r.abs_error));
    }

    let per_rep = (quad.mc_integration_samples as u64).div_ceil(QMC_REPLICATES);
    let means: Vec<f64> = (0..QMC_REPLICATES)
        .into_par_iter()
        .map(|rep| {
            let seq = ShiftedKronecker::new(k, quad.integration_seed, rep);
            let mut u = vec![0.0; k];
            let mut acc = 0.0;
            for n in 0..per_rep {
                seq.point(n, &mut u);
                let s: f64 = u
                    .iter()
                    .map(|&x| {
                        let h = two_sigma * (-(-x).ln_1p()).sqrt();
                        h.powf(-alpha)
                    })
                    .sum();
                acc += laplace.laplace(theta / s);
            }
            acc / per_rep as f64
        })
        .collect();
    let r = QMC_REPLICATES as f64;
    let mean = means.iter().sum::<f64>() / r;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (r - 1.0);
    Ok((mean, (var / r).sqrt()))
}

/// `P[R_m > ρ | k]`: the Laplace transform averaged over `k` i.i.d.
/// Rayleigh(√2σ) serving distances.
///
/// `k = 1` is a one-dimensional adaptive quadrature; larger `k` use
/// randomly shifted Kronecker QMC with `quad.mc_integration_samples` points.
pub fn coverage_given_k(
    k: usize,
    cfg: &NetworkConfig,
    quad: &QuadratureSpec,
    laplace: &dyn LaplaceTransform,
) -> Result<f64> {
    quad.validate()?;
    given_k_with_error(k, cfg, quad, laplace).map(|(v, _)| v)
}

/// The `k = 1` term of the Poisson caterer mixture:
/// `n̄ c e^{−n̄ c} · P[R > ρ | 1]`.
pub fn coverage_k1_term(
    c_m: f64,
    cfg: &NetworkConfig,
    quad: &QuadratureSpec,
    laplace: &dyn LaplaceTransform,
) -> Result<f64> {
    check_prob(c_m)?;
    let mean = cfg.n_bar() * c_m;
    Ok(mean * (-mean).exp() * coverage_given_k(1, cfg, quad, laplace)?)
}

/// Caches `P[R > ρ | k]` for `k = 1..=k_max(n̄)` so that coverage can be
/// evaluated for many caching probabilities at the cost of one set of
/// serving-distance integrals.
#[derive(Debug, Clone)]
pub struct CoverageEvaluator {
    method: Method,
    n_bar: f64,
    tail_mass: f64,
    per_k: Vec<f64>,
    per_k_error: Vec<f64>,
}

impl CoverageEvaluator {
    pub fn new(
        cfg: &NetworkConfig,
        quad: &QuadratureSpec,
        laplace: &dyn LaplaceTransform,
    ) -> Result<Self> {
        quad.validate()?;
        let k_max = poisson_cutoff(cfg.n_bar(), quad.k_max_tail_mass).max(1);
        let values: Vec<(f64, f64)> = (1..=k_max)
            .into_par_iter()
            .map(|k| given_k_with_error(k, cfg, quad, laplace))
            .collect::<Result<_>>()?;
        let (per_k, per_k_error) = values.into_iter().unzip();
        Ok(CoverageEvaluator {
            method: laplace.method(),
            n_bar: cfg.n_bar(),
            tail_mass: quad.k_max_tail_mass,
            per_k,
            per_k_error,
        })
    }

    pub fn exact(cfg: &NetworkConfig, quad: &QuadratureSpec) -> Result<Self> {
        let table = ExactLaplace::build(cfg, quad)?;
        Self::new(cfg, quad, &table)
    }

    pub fn ppp_bound(cfg: &NetworkConfig, quad: &QuadratureSpec) -> Result<Self> {
        Self::new(cfg, quad, &PppBound::new(cfg)?)
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// `P[R > ρ | k]` for `1 <= k <= k_max`.
    pub fn given_k(&self, k: usize) -> Option<f64> {
        k.checked_sub(1).and_then(|i| self.per_k.get(i).copied())
    }

    pub fn k_max(&self) -> usize {
        self.per_k.len()
    }

    /// Poisson mixture `Σ_{k>=1} Pois(k; n̄ c) P[R > ρ | k]`, truncated at the
    /// first `k` whose residual mass is below `tail_mass`.
    pub fn coverage(&self, c_m: f64) -> Result<CoverageResult> {
        self.coverage_truncated(c_m, self.tail_mass)
    }

    pub(crate) fn coverage_truncated(&self, c_m: f64, tail_mass: f64) -> Result<CoverageResult> {
        check_prob(c_m)?;
        let mean = self.n_bar * c_m;
        if mean == 0.0 {
            return Ok(CoverageResult {
                value: 0.0,
                method: self.method,
                error: 0.0,
            });
        }
        let k_max = poisson_cutoff(mean, tail_mass).min(self.per_k.len());
        let mut pmf = (-mean).exp();
        let mut value = 0.0;
        let mut error = 0.0;
        let mut mass = pmf;
        for k in 1..=k_max {
            pmf *= mean / k as f64;
            mass += pmf;
            value += pmf * self.per_k[k - 1];
            error += pmf * self.per_k_error[k - 1];
        }
        Ok(CoverageResult {
            value: value.clamp(0.0, 1.0),
            method: self.method,
            error: error + (1.0 - mass).max(0.0),
        })
    }
}

/// Coverage probability of a file cached with probability `c_m`.
pub fn coverage_content(
    c_m: f64,
    cfg: &NetworkConfig,
    quad: &QuadratureSpec,
    method: Method,
) -> Result<CoverageResult> {
    check_prob(c_m)?;
    match method {
        Method::ExactTcp => CoverageEvaluator::exact(cfg, quad)?.coverage(c_m),
        Method::PppBound => CoverageEvaluator::ppp_bound(cfg, quad)?.coverage(c_m),
        Method::ClosedFormK1 => {
            let mean = cfg.n_bar() * c_m;
            Ok(CoverageResult {
                value: mean * (-mean).exp() / compute_z(cfg)?,
                method,
                error: 0.0,
            })
        }
    }
}

/// `Z = 4σ²π n̄ λ_p θ^{2/α} Γ(1+2/α) Γ(1−2/α) + 1`.
pub fn compute_z(cfg: &NetworkConfig) -> Result<f64> {
    let g = ppp_gamma_product(cfg.alpha())?;
    let s2 = cfg.sigma() * cfg.sigma();
    Ok(4.0
        * s2
        * std::f64::consts::PI
        * cfg.n_bar()
        * cfg.lambda_p()
        * cfg.theta().powf(2.0 / cfg.alpha())
        * g
        + 1.0)
}

/// `P_o(c) = Σ_m q_m (c_m + (1 − c_m) P(R_m > ρ))` with the coverage
/// supplied by `coverage_fn(c_m)`.
///
/// Only the box constraints are checked here; the cache-size constraint is
/// the caller's business.
pub fn offloading_gain<F>(
    policy: &CachingPolicy,
    library: &ContentLibrary,
    mut coverage_fn: F,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if policy.len() != library.n_files() {
        return Err(invalid(format!(
            "policy has {} entries but the library has {} files",
            policy.len(),
            library.n_files()
        )));
    }
    let mut total = 0.0;
    for (&q, &c) in library.popularity().iter().zip(policy.probs()) {
        check_prob(c)?;
        let cov = if c < 1.0 { coverage_fn(c)? } else { 0.0 };
        total += q * (c + (1.0 - c) * cov);
    }
    Ok(total.clamp(0.0, 1.0))
}

pub(crate) fn k1_objective(probs: &[f64], popularity: &[f64], n_bar: f64, z: f64) -> f64 {
    probs
        .iter()
        .zip(popularity)
        .map(|(&c, &q)| q * (c + (1.0 - c) * c * n_bar * (-c * n_bar).exp() / z))
        .sum()
}

/// Closed-form single-caterer lower bound on the offloading gain,
/// `Σ_m q_m (c_m + (1 − c_m) c_m n̄ e^{−c_m n̄} / Z)`.
pub fn offloading_closed_form_k1(
    policy: &CachingPolicy,
    library: &ContentLibrary,
    cfg: &NetworkConfig,
) -> Result<f64> {
    validate_policy(policy, library)?;
    let z = compute_z(cfg)?;
    Ok(k1_objective(
        policy.probs(),
        library.popularity(),
        cfg.n_bar(),
        z,
    ))
}
