//! Domain types shared by the analytic, optimizer and simulator modules:
//! network geometry and channel parameters, the content library with its
//! Zipf popularity law, and probabilistic caching policies.
//!
//! All lengths are meters and all densities are per square meter.

use crate::error::{invalid, Error, Result, Violation};

/// Tolerance on `Σ c_m = M` accepted by [`validate_policy`].
pub const POLICY_SUM_TOL: f64 = 1e-8;

/// Spatial and channel parameters of the clustered D2D network.
///
/// The SIR threshold is stored as a linear value `theta`; the rate threshold
/// `rho` (bits/s/Hz) is derived through `theta = 2^rho - 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    lambda_p: f64,
    n_bar: f64,
    sigma: f64,
    alpha: f64,
    gamma_d: f64,
    theta: f64,
}

impl NetworkConfig {
    pub fn new(
        lambda_p: f64,
        n_bar: f64,
        sigma: f64,
        alpha: f64,
        gamma_d: f64,
        theta: f64,
    ) -> Result<Self> {
        let cfg = NetworkConfig {
            lambda_p,
            n_bar,
            sigma,
            alpha,
            gamma_d,
            theta,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Default operating point: σ = 50 m, n̄ = 8, λ_p = 40 clusters/km²,
    /// α = 4, θ = 0 dB, unit transmit power.
    pub fn reference() -> Self {
        NetworkConfig {
            lambda_p: 40.0e-6,
            n_bar: 8.0,
            sigma: 50.0,
            alpha: 4.0,
            gamma_d: 1.0,
            theta: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda_p", self.lambda_p),
            ("n_bar", self.n_bar),
            ("sigma", self.sigma),
            ("gamma_d", self.gamma_d),
            ("theta", self.theta),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !(self.alpha.is_finite() && self.alpha > 2.0) {
            return Err(Error::Domain(format!(
                "path-loss exponent must exceed 2, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    pub fn lambda_p(&self) -> f64 {
        self.lambda_p
    }
    pub fn n_bar(&self) -> f64 {
        self.n_bar
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn gamma_d(&self) -> f64 {
        self.gamma_d
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Rate threshold in bits/s/Hz.
    pub fn rho(&self) -> f64 {
        self.theta.ln_1p() / std::f64::consts::LN_2
    }

    pub fn with_lambda_p(mut self, v: f64) -> Result<Self> {
        self.lambda_p = v;
        self.validate().map(|_| self)
    }
    pub fn with_n_bar(mut self, v: f64) -> Result<Self> {
        self.n_bar = v;
        self.validate().map(|_| self)
    }
    pub fn with_sigma(mut self, v: f64) -> Result<Self> {
        self.sigma = v;
        self.validate().map(|_| self)
    }
    pub fn with_alpha(mut self, v: f64) -> Result<Self> {
        self.alpha = v;
        self.validate().map(|_| self)
    }
    pub fn with_gamma_d(mut self, v: f64) -> Result<Self> {
        self.gamma_d = v;
        self.validate().map(|_| self)
    }
    pub fn with_theta(mut self, v: f64) -> Result<Self> {
        self.theta = v;
        self.validate().map(|_| self)
    }
    pub fn with_theta_db(self, db: f64) -> Result<Self> {
        self.with_theta(db_to_linear(db))
    }
    pub fn with_rho(self, rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(invalid(format!("rho must be finite and > 0, got {rho}")));
        }
        self.with_theta(rho.exp2() - 1.0)
    }
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::reference()
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Zipf request probabilities `q_m = m^-β / Σ_k k^-β`, `m = 1..=n_files`.
pub fn zipf_popularity(n_files: usize, beta: f64) -> Result<Vec<f64>> {
    if n_files == 0 {
        return Err(invalid("library must contain at least one file"));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(invalid(format!(
            "Zipf exponent must be finite and >= 0, got {beta}"
        )));
    }
    let weights: Vec<f64> = (1..=n_files).map(|m| (m as f64).powf(-beta)).collect();
    // smallest terms first
    let norm: f64 = weights.iter().rev().sum();
    Ok(weights.into_iter().map(|w| w / norm).collect())
}

/// File catalog with Zipf popularity and per-device cache size `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentLibrary {
    n_files: usize,
    beta: f64,
    cache_size: usize,
    popularity: Vec<f64>,
}

impl ContentLibrary {
    pub fn new(n_files: usize, beta: f64, cache_size: usize) -> Result<Self> {
        let popularity = zipf_popularity(n_files, beta)?;
        if cache_size == 0 || cache_size >= n_files {
            return Err(invalid(format!(
                "cache size must satisfy 1 <= M < N_f, got M={cache_size}, N_f={n_files}"
            )));
        }
        Ok(ContentLibrary {
            n_files,
            beta,
            cache_size,
            popularity,
        })
    }

    /// N_f = 100, β = 0.5, M = 5.
    pub fn reference() -> Self {
        Self::new(100, 0.5, 5).expect("default library is valid")
    }

    pub fn n_files(&self) -> usize {
        self.n_files
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn cache_size(&self) -> usize {
        self.cache_size
    }
    pub fn popularity(&self) -> &[f64] {
        &self.popularity
    }
}

/// Per-file caching probabilities `c_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct CachingPolicy {
    probs: Vec<f64>,
}

impl CachingPolicy {
    /// Wraps a probability vector without checking it. Use
    /// [`validate_policy`] before feeding it to the analysis.
    pub fn from_probs(probs: Vec<f64>) -> Self {
        CachingPolicy { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Shannon entropy (nats) of the normalized vector `c / Σc`.
    pub fn entropy(&self) -> f64 {
        let total: f64 = self.probs.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        self.probs
            .iter()
            .map(|&c| c / total)
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum()
    }
}

/// Checks the box constraints `0 <= c_m <= 1` and `Σ c_m = M`.
pub fn validate_policy(policy: &CachingPolicy, library: &ContentLibrary) -> Result<()> {
    if policy.len() != library.n_files() {
        return Err(invalid(format!(
            "policy has {} entries but the library has {} files",
            policy.len(),
            library.n_files()
        )));
    }
    let mut violations = Vec::new();
    for (file, &c) in policy.probs().iter().enumerate() {
        if !c.is_finite() {
            violations.push(Violation::NotFinite { file });
        } else if c < 0.0 {
            violations.push(Violation::BelowZero { file, value: c });
        } else if c > 1.0 {
            violations.push(Violation::AboveOne { file, value: c });
        }
    }
    let sum: f64 = policy.probs().iter().sum();
    if !((sum - library.cache_size() as f64).abs() <= POLICY_SUM_TOL) {
        violations.push(Violation::SumMismatch {
            sum,
            cache_size: library.cache_size(),
        });
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::PolicyViolation(violations))
    }
}

/// Cache the `M` most popular files on every device.
pub fn policy_cpf(library: &ContentLibrary) -> CachingPolicy {
    let m = library.cache_size();
    CachingPolicy::from_probs(
        (0..library.n_files())
            .map(|i| if i < m { 1.0 } else { 0.0 })
            .collect(),
    )
}

/// `c_m ∝ q_m`, clipped at 1 with the clipped excess spread over the
/// remaining files in proportion to their popularity.
pub fn policy_zipf_proportional(library: &ContentLibrary) -> CachingPolicy {
    let q = library.popularity();
    let n = q.len();
    let mut clipped = vec![false; n];
    let mut probs = vec![0.0; n];
    loop {
        let n_clipped = clipped.iter().filter(|&&b| b).count();
        let budget = library.cache_size() as f64 - n_clipped as f64;
        let free_mass: f64 = q
            .iter()
            .zip(&clipped)
            .rev()
            .filter(|(_, &c)| !c)
            .map(|(&qm, _)| qm)
            .sum();
        let mut newly_clipped = false;
        for i in 0..n {
            if clipped[i] {
                probs[i] = 1.0;
                continue;
            }
            let c = if free_mass > 0.0 {
                budget * q[i] / free_mass
            } else {
                0.0
            };
            if c > 1.0 {
                clipped[i] = true;
                newly_clipped = true;
            }
            probs[i] = c.min(1.0);
        }
        if !newly_clipped {
            break;
        }
    }
    CachingPolicy::from_probs(probs)
}

/// `c_m = M / N_f` for every file.
pub fn policy_uniform(library: &ContentLibrary) -> CachingPolicy {
    let c = library.cache_size() as f64 / library.n_files() as f64;
    CachingPolicy::from_probs(vec![c; library.n_files()])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn zipf_single_file() {
        assert_eq!(zipf_popularity(1, 2.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn zipf_uniform_when_beta_zero() {
        let q = zipf_popularity(4, 0.0).unwrap();
        for v in q {
            assert!(close(v, 0.25, 1e-15));
        }
    }

    #[test]
    fn zipf_reference_head() {
        // 1 / Σ_{k<=100} k^-0.5 evaluated at 30 digits
        let q = zipf_popularity(100, 0.5).unwrap();
        assert!(close(q[0], 0.053_793_507_888_897_2, 1e-15));
    }

    #[test]
    fn zipf_rejects_bad_arguments() {
        assert!(matches!(
            zipf_popularity(0, 1.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            zipf_popularity(3, -0.1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn validate_examples() {
        let lib = ContentLibrary::new(4, 0.5, 2).unwrap();
        assert!(
            validate_policy(&CachingPolicy::from_probs(vec![1.0, 1.0, 0.0, 0.0]), &lib).is_ok()
        );
        assert!(validate_policy(&CachingPolicy::from_probs(vec![0.5; 4]), &lib).is_ok());
        let err = validate_policy(&CachingPolicy::from_probs(vec![1.2, 0.8, 0.0, 0.0]), &lib)
            .unwrap_err();
        match err {
            Error::PolicyViolation(v) => {
                assert_eq!(
                    v,
                    vec![Violation::AboveOne {
                        file: 0,
                        value: 1.2
                    }]
                );
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn validate_length_mismatch() {
        let lib = ContentLibrary::new(4, 0.5, 2).unwrap();
        let err = validate_policy(&CachingPolicy::from_probs(vec![1.0, 1.0]), &lib).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn validate_reports_sum_and_sign() {
        let lib = ContentLibrary::new(3, 0.0, 1).unwrap();
        let err =
            validate_policy(&CachingPolicy::from_probs(vec![-0.1, 0.3, 0.3]), &lib).unwrap_err();
        let Error::PolicyViolation(v) = err else {
            panic!()
        };
        assert_eq!(v.len(), 2);
        assert!(matches!(v[0], Violation::BelowZero { file: 0, .. }));
        assert!(matches!(v[1], Violation::SumMismatch { .. }));
    }

    #[test]
    fn cpf_examples() {
        let lib = ContentLibrary::new(4, 0.7, 2).unwrap();
        assert_eq!(policy_cpf(&lib).probs(), &[1.0, 1.0, 0.0, 0.0]);
        let lib = ContentLibrary::reference();
        let c = policy_cpf(&lib);
        assert!(c.probs()[..5].iter().all(|&x| x == 1.0));
        assert!(c.probs()[5..].iter().all(|&x| x == 0.0));
        let lib = ContentLibrary::new(6, 1.0, 5).unwrap();
        assert_eq!(policy_cpf(&lib).probs(), &[1.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn zipf_proportional_examples() {
        let lib = ContentLibrary::new(10, 0.0, 5).unwrap();
        for &c in policy_zipf_proportional(&lib).probs() {
            assert!(close(c, 0.5, 1e-15));
        }
        let lib = ContentLibrary::reference();
        let c = policy_zipf_proportional(&lib);
        assert!(close(c.probs()[0], 0.268_967_539_444_486, 1e-14));
        validate_policy(&c, &lib).unwrap();

        let lib = ContentLibrary::new(3, 30.0, 2).unwrap();
        let c = policy_zipf_proportional(&lib);
        assert_eq!(c.probs()[0], 1.0);
        // one slot left for files 2 and 3, split in proportion 2^-30 : 3^-30
        let r = (2.0f64 / 3.0).powi(30);
        assert!(close(c.probs()[1], 1.0 / (1.0 + r), 1e-12));
        assert!(close(c.probs()[2], r / (1.0 + r), 1e-12));
        validate_policy(&c, &lib).unwrap();
    }

    #[test]
    fn zipf_proportional_converges_to_cpf() {
        let lib = ContentLibrary::new(10, 50.0, 3).unwrap();
        let z = policy_zipf_proportional(&lib);
        let c = policy_cpf(&lib);
        let max_diff = z
            .probs()
            .iter()
            .zip(c.probs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_diff < 1e-6);
    }

    #[test]
    fn uniform_examples() {
        let lib = ContentLibrary::reference();
        assert!(policy_uniform(&lib)
            .probs()
            .iter()
            .all(|&c| close(c, 0.05, 1e-16)));
        let lib = ContentLibrary::new(2, 1.0, 1).unwrap();
        assert_eq!(policy_uniform(&lib).probs(), &[0.5, 0.5]);
        assert!(ContentLibrary::new(5, 1.0, 5).is_err());
    }

    #[test]
    fn network_config_conversions() {
        let cfg = NetworkConfig::reference();
        assert!(close(cfg.rho(), 1.0, 1e-15));
        let cfg = cfg.with_rho(2.0).unwrap();
        assert!(close(cfg.theta(), 3.0, 1e-15));
        let cfg = cfg.with_theta_db(0.0).unwrap();
        assert_eq!(cfg.theta(), 1.0);
        assert!(matches!(cfg.with_alpha(2.0), Err(Error::Domain(_))));
        assert!(cfg.with_sigma(0.0).is_err());
        assert!(cfg.with_lambda_p(f64::NAN).is_err());
    }

    #[test]
    fn entropy_of_uniform_and_point_mass() {
        let p = CachingPolicy::from_probs(vec![0.5; 4]);
        assert!(close(p.entropy(), 4f64.ln(), 1e-15));
        let p = CachingPolicy::from_probs(vec![1.0, 0.0, 0.0]);
        assert_eq!(p.entropy(), 0.0);
    }
}
