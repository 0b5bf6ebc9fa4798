//! Monte Carlo simulation of cooperative D2D content delivery.
//!
//! Every trial redraws the whole network, the cache contents and the fading.
//! Remote clusters interfere in the worst-case sense: all of their devices
//! transmit. Trial `i` of a run with seed `s` draws from two ChaCha8 streams of
//! the key `s`: stream `2i` for the typical device's own cluster, its caches
//! and the desired-link fading, and stream `2i + 1` for the remote clusters
//! and their fading. Estimates are therefore independent of the worker count
//! and bit-identical for a given seed, and enlarging the window only adds
//! interferers to each trial.

mod network;

pub use network::{default_r_sim, sample_network, Point, TcpRealization};

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::model::{CachingPolicy, ContentLibrary, NetworkConfig};
use network::{complex_gaussian, dist2, path_gain, Sampler};

/// Minimum trial count accepted by the estimators.
pub const MIN_TRIALS: u64 = 1000;

/// Trials per work unit; partial sums are combined in block order.
const BLOCK: u64 = 512;

/// Result of serving one request at the typical device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    /// The typical device has the file in its own cache.
    LocalHit,
    /// Joint transmission from the caching cluster members reached the SIR
    /// threshold.
    D2dSuccess,
    /// Some cluster members cache the file but the SIR is below threshold.
    D2dSirFail,
    /// No other member of the cluster caches the file.
    ClusterMiss,
}

impl Outcome {
    pub fn offloaded(&self) -> bool {
        matches!(self, Outcome::LocalHit | Outcome::D2dSuccess)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    /// Half-width of the normal-approximation 95% confidence interval.
    pub half_width_95: f64,
    pub trials: u64,
    pub seed: u64,
}

impl MonteCarloEstimate {
    fn bernoulli(successes: f64, trials: u64, seed: u64) -> Self {
        let n = trials as f64;
        let mean = successes / n;
        MonteCarloEstimate {
            mean,
            half_width_95: 1.96 * (mean * (1.0 - mean) / n).sqrt(),
            trials,
            seed,
        }
    }

    fn from_moments(sum: f64, sum_sq: f64, trials: u64, seed: u64) -> Self {
        let n = trials as f64;
        let mean = sum / n;
        let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        MonteCarloEstimate {
            mean,
            half_width_95: 1.96 * (var / n).sqrt(),
            trials,
            seed,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.mean - x).abs() <= self.half_width_95
    }
}

/// How [`estimate_offloading_with`] averages over the requested file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OffloadingEstimator {
    /// Evaluate every file on each realization and weight by popularity,
    /// averaging the local hit analytically.
    #[default]
    Stratified,
    /// Draw one file per trial from the popularity law.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OffloadingOptions {
    pub estimator: OffloadingEstimator,
    /// Simulation window; [`default_r_sim`] when `None`.
    pub r_sim: Option<f64>,
}

struct TrialRng {
    local: ChaCha8Rng,
    remote: ChaCha8Rng,
}

impl TrialRng {
    fn new(seed: u64, trial: u64) -> Self {
        let mut local = ChaCha8Rng::seed_from_u64(seed);
        let mut remote = local.clone();
        local.set_stream(2 * trial);
        remote.set_stream(2 * trial + 1);
        TrialRng { local, remote }
    }
}

/// Sums `f` over trials `0..trials`, returning `(Σf, Σf²)`. Blocks run in
/// parallel; their partial sums are added in a fixed order.
fn accumulate<F>(trials: u64, seed: u64, f: F) -> Result<(f64, f64)>
where
    F: Fn(&mut TrialRng) -> Result<f64> + Sync,
{
    let blocks = trials.div_ceil(BLOCK);
    let parts = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for t in (b * BLOCK)..((b + 1) * BLOCK).min(trials) {
                let x = f(&mut TrialRng::new(seed, t))?;
                sum += x;
                sum_sq += x * x;
            }
            Ok((sum, sum_sq))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts
        .iter()
        .fold((0.0, 0.0), |(s, q), (a, b)| (s + a, q + b)))
}

fn check_trials(trials: u64) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(invalid(format!(
            "need at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    Ok(())
}

fn check_prob(c: f64) -> Result<()> {
    if (0.0..=1.0).contains(&c) {
        Ok(())
    } else {
        Err(invalid(format!(
            "caching probability must lie in [0, 1], got {c}"
        )))
    }
}

fn check_policy(policy: &CachingPolicy, library: &ContentLibrary) -> Result<()> {
    if policy.len() != library.n_files() {
        return Err(invalid(format!(
            "policy has {} entries but the library has {} files",
            policy.len(),
            library.n_files()
        )));
    }
    policy.probs().iter().try_for_each(|&c| check_prob(c))
}

/// Caching members of the representative cluster and their combined
/// received power `|Σ G_i d_i^{−α/2}|²`.
fn joint_signal<R: Rng + ?Sized>(
    center: &Point,
    members: &[Point],
    c: f64,
    alpha: f64,
    rng: &mut R,
) -> (usize, f64) {
    let mut k = 0;
    let (mut re, mut im) = (0.0, 0.0);
    for y in members {
        if rng.random::<f64>() < c {
            k += 1;
            let amp = path_gain(dist2(center, y), alpha).sqrt();
            let (g_re, g_im) = complex_gaussian(rng);
            re += amp * g_re;
            im += amp * g_im;
        }
    }
    (k, re * re + im * im)
}

/// The transmit power is common to all links and cancels in the SIR.
fn d2d_outcome(k: usize, signal: f64, interference: f64, theta: f64) -> Outcome {
    if k == 0 {
        Outcome::ClusterMiss
    } else if signal >= theta * interference {
        Outcome::D2dSuccess
    } else {
        Outcome::D2dSirFail
    }
}

/// Serves a request for `file` on a stored realization, drawing cache
/// contents and fading from `rng`.
pub fn simulate_request<R: Rng + ?Sized>(
    realization: &TcpRealization,
    policy: &CachingPolicy,
    file: usize,
    cfg: &NetworkConfig,
    rng: &mut R,
) -> Result<Outcome> {
    let c = *policy.probs().get(file).ok_or_else(|| {
        invalid(format!(
            "file index {file} out of range for {} files",
            policy.len()
        ))
    })?;
    check_prob(c)?;
    if rng.random::<f64>() < c {
        return Ok(Outcome::LocalHit);
    }
    let (k, signal) = joint_signal(
        &realization.representative_center,
        &realization.representative_members,
        c,
        cfg.alpha(),
        rng,
    );
    if k == 0 {
        return Ok(Outcome::ClusterMiss);
    }
    let interference = realization.interference(cfg.alpha(), rng);
    Ok(d2d_outcome(k, signal, interference, cfg.theta()))
}

/// One request that missed the local cache: returns the caterer count and
/// the outcome.
fn d2d_trial(
    sampler: &Sampler,
    c: f64,
    theta: f64,
    rng: &mut TrialRng,
    members: &mut Vec<Point>,
) -> (usize, Outcome) {
    let center = sampler.representative(&mut rng.local, members);
    let (k, signal) = joint_signal(&center, members, c, sampler.alpha, &mut rng.local);
    if k == 0 {
        return (0, Outcome::ClusterMiss);
    }
    let interference = sampler.remote_interference(&mut rng.remote);
    (k, d2d_outcome(k, signal, interference, theta))
}

/// Probability that a request not served locally is delivered by the
/// cluster at SIR ≥ θ, when every device caches the file with probability
/// `c_m`. Trials without a caching cluster member count as failures.
pub fn estimate_coverage(
    c_m: f64,
    cfg: &NetworkConfig,
    trials: u64,
    r_sim: f64,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    check_trials(trials)?;
    check_prob(c_m)?;
    let sampler = Sampler::new(cfg, r_sim)?;
    let (hits, _) = accumulate(trials, seed, |rng| {
        let mut members = Vec::new();
        let (_, outcome) = d2d_trial(&sampler, c_m, cfg.theta(), rng, &mut members);
        Ok(if outcome == Outcome::D2dSuccess {
            1.0
        } else {
            0.0
        })
    })?;
    Ok(MonteCarloEstimate::bernoulli(hits, trials, seed))
}

/// Coverage estimate split by the number of caching cluster members:
/// entry `k` holds `(trials with k caterers, successes among them)`.
pub fn coverage_by_caterers(
    c_m: f64,
    cfg: &NetworkConfig,
    trials: u64,
    r_sim: f64,
    seed: u64,
) -> Result<Vec<(u64, u64)>> {
    check_trials(trials)?;
    check_prob(c_m)?;
    let sampler = Sampler::new(cfg, r_sim)?;
    let blocks = trials.div_ceil(BLOCK);
    let parts: Vec<Vec<(u64, u64)>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut counts: Vec<(u64, u64)> = Vec::new();
            let mut members = Vec::new();
            for t in (b * BLOCK)..((b + 1) * BLOCK).min(trials) {
                let (k, outcome) = d2d_trial(
                    &sampler,
                    c_m,
                    cfg.theta(),
                    &mut TrialRng::new(seed, t),
                    &mut members,
                );
                if counts.len() <= k {
                    counts.resize(k + 1, (0, 0));
                }
                counts[k].0 += 1;
                counts[k].1 += u64::from(outcome == Outcome::D2dSuccess);
            }
            counts
        })
        .collect();
    let mut total: Vec<(u64, u64)> = Vec::new();
    for part in parts {
        if total.len() < part.len() {
            total.resize(part.len(), (0, 0));
        }
        for (acc, (n, s)) in total.iter_mut().zip(part) {
            acc.0 += n;
            acc.1 += s;
        }
    }
    Ok(total)
}

/// Number of members of the typical device's cluster caching a file held
/// with probability `c_m`, one entry per trial.
pub fn caterer_counts(c_m: f64, cfg: &NetworkConfig, trials: u64, seed: u64) -> Result<Vec<usize>> {
    check_prob(c_m)?;
    let sampler = Sampler::new(cfg, default_r_sim(cfg))?;
    Ok((0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = TrialRng::new(seed, t);
            let mut members = Vec::new();
            sampler.representative(&mut rng.local, &mut members);
            members
                .iter()
                .filter(|_| rng.local.random::<f64>() < c_m)
                .count()
        })
        .collect())
}

/// Monte Carlo estimate of `E[exp(−s I)]` for the unit-power worst-case
/// interference `I` at the typical device.
pub fn estimate_interference_laplace(
    s: f64,
    cfg: &NetworkConfig,
    trials: u64,
    r_sim: f64,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    check_trials(trials)?;
    if !(s.is_finite() && s >= 0.0) {
        return Err(invalid(format!(
            "transform argument must be finite and >= 0, got {s}"
        )));
    }
    let sampler = Sampler::new(cfg, r_sim)?;
    let (sum, sum_sq) = accumulate(trials, seed, |rng| {
        Ok((-s * sampler.remote_interference(&mut rng.remote)).exp())
    })?;
    Ok(MonteCarloEstimate::from_moments(sum, sum_sq, trials, seed))
}

/// Offloading gain of `policy` with the stratified estimator and the
/// default window.
pub fn estimate_offloading(
    policy: &CachingPolicy,
    library: &ContentLibrary,
    cfg: &NetworkConfig,
    trials: u64,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    estimate_offloading_with(
        policy,
        library,
        cfg,
        trials,
        seed,
        OffloadingOptions::default(),
    )
}

/// Offloading gain: the probability that a request is served from the
/// device's own cache or by its cluster at SIR ≥ θ.
///
/// Only the box constraints of `policy` are checked.
pub fn estimate_offloading_with(
    policy: &CachingPolicy,
    library: &ContentLibrary,
    cfg: &NetworkConfig,
    trials: u64,
    seed: u64,
    options: OffloadingOptions,
) -> Result<MonteCarloEstimate> {
    check_trials(trials)?;
    check_policy(policy, library)?;
    let r_sim = options.r_sim.unwrap_or_else(|| default_r_sim(cfg));
    let sampler = Sampler::new(cfg, r_sim)?;
    let q = library.popularity();
    let c = policy.probs();
    let theta = cfg.theta();
    match options.estimator {
        OffloadingEstimator::Stratified => {
            let (sum, sum_sq) = accumulate(trials, seed, |rng| {
                let mut members = Vec::new();
                let center = sampler.representative(&mut rng.local, &mut members);
                let amps: Vec<(f64, f64)> = members
                    .iter()
                    .map(|y| {
                        let a = path_gain(dist2(&center, y), sampler.alpha).sqrt();
                        let (g_re, g_im) = complex_gaussian(&mut rng.local);
                        (a * g_re, a * g_im)
                    })
                    .collect();
                let interference = sampler.remote_interference(&mut rng.remote);
                let mut value = 0.0;
                for (&q_m, &c_m) in q.iter().zip(c) {
                    if c_m >= 1.0 {
                        value += q_m;
                        continue;
                    }
                    let mut k = 0;
                    let (mut re, mut im) = (0.0, 0.0);
                    for &(a_re, a_im) in &amps {
                        if rng.local.random::<f64>() < c_m {
                            k += 1;
                            re += a_re;
                            im += a_im;
                        }
                    }
                    let served = d2d_outcome(k, re * re + im * im, interference, theta);
                    let d2d = if served == Outcome::D2dSuccess {
                        1.0
                    } else {
                        0.0
                    };
                    value += q_m * (c_m + (1.0 - c_m) * d2d);
                }
                Ok(value)
            })?;
            Ok(MonteCarloEstimate::from_moments(sum, sum_sq, trials, seed))
        }
        OffloadingEstimator::Sampled => {
            let files = WeightedIndex::new(q)
                .map_err(|e| invalid(format!("popularity is not a distribution: {e}")))?;
            let (hits, _) = accumulate(trials, seed, |rng| {
                let m = files.sample(&mut rng.local);
                if rng.local.random::<f64>() < c[m] {
                    return Ok(1.0);
                }
                let mut members = Vec::new();
                let (_, outcome) = d2d_trial(&sampler, c[m], theta, rng, &mut members);
                Ok(if outcome.offloaded() { 1.0 } else { 0.0 })
            })?;
            Ok(MonteCarloEstimate::bernoulli(hits, trials, seed))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{
        coverage_given_k, laplace_exact, CoverageEvaluator, PppBound, QuadratureSpec,
    };
    use crate::model::policy_zipf_proportional;

    fn reference() -> NetworkConfig {
        NetworkConfig::reference()
    }

    #[test]
    fn forced_local_hit() {
        let cfg = reference();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = sample_network(&cfg, 1500.0, &mut rng).unwrap();
        let policy = CachingPolicy::from_probs(vec![1.0, 0.0]);
        for _ in 0..50 {
            assert_eq!(
                simulate_request(&net, &policy, 0, &cfg, &mut rng).unwrap(),
                Outcome::LocalHit
            );
        }
        assert!(simulate_request(&net, &policy, 2, &cfg, &mut rng).is_err());
    }

    #[test]
    fn vanishing_threshold_succeeds_with_any_caterer() {
        let cfg = reference().with_theta(1e-300).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let policy = CachingPolicy::from_probs(vec![0.3]);
        for _ in 0..200 {
            let net = sample_network(&cfg, 1500.0, &mut rng).unwrap();
            let out = simulate_request(&net, &policy, 0, &cfg, &mut rng).unwrap();
            assert!(matches!(
                out,
                Outcome::LocalHit | Outcome::D2dSuccess | Outcome::ClusterMiss
            ));
        }
    }

    #[test]
    fn nothing_cached_means_no_coverage() {
        let est = estimate_coverage(0.0, &reference(), 1000, 1500.0, 3).unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(est.half_width_95, 0.0);
    }

    #[test]
    fn full_caching_offloads_everything() {
        let library = ContentLibrary::new(10, 0.8, 3).unwrap();
        let policy = CachingPolicy::from_probs(vec![1.0; 10]);
        for estimator in [
            OffloadingEstimator::Stratified,
            OffloadingEstimator::Sampled,
        ] {
            let options = OffloadingOptions {
                estimator,
                r_sim: Some(1000.0),
            };
            let est = estimate_offloading_with(&policy, &library, &reference(), 1000, 4, options)
                .unwrap();
            assert_eq!(est.mean, 1.0);
            assert_eq!(est.half_width_95, 0.0);
        }
    }

    #[test]
    fn bernoulli_half_width() {
        let est = estimate_coverage(1.0, &reference(), 2000, 1500.0, 5).unwrap();
        let p = est.mean;
        assert!((est.half_width_95 - 1.96 * (p * (1.0 - p) / 2000.0).sqrt()).abs() < 1e-15);
        assert_eq!(est.trials, 2000);
        assert_eq!(est.seed, 5);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = reference();
        let a = estimate_coverage(0.4, &cfg, 3000, 1500.0, 11).unwrap();
        let b = estimate_coverage(0.4, &cfg, 3000, 1500.0, 11).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        let c = estimate_coverage(0.4, &cfg, 3000, 1500.0, 12).unwrap();
        assert_ne!(a.mean.to_bits(), c.mean.to_bits());
    }

    #[test]
    fn rejects_too_few_trials_and_bad_probabilities() {
        let cfg = reference();
        assert!(estimate_coverage(0.5, &cfg, 999, 1500.0, 1).is_err());
        assert!(estimate_coverage(1.5, &cfg, 1000, 1500.0, 1).is_err());
        let library = ContentLibrary::new(3, 0.5, 1).unwrap();
        let bad = CachingPolicy::from_probs(vec![0.5, 0.5]);
        assert!(estimate_offloading(&bad, &library, &cfg, 1000, 1).is_err());
    }

    #[test]
    fn single_caterer_coverage_matches_analysis() {
        // with one caterer the serving distance is exactly Rayleigh(√2σ)
        let cfg = reference();
        let quad = QuadratureSpec::default();
        let bound = PppBound::new(&cfg).unwrap();
        let counts = coverage_by_caterers(0.125, &cfg, 20_000, default_r_sim(&cfg), 21).unwrap();
        let (n, s) = counts[1];
        let p = s as f64 / n as f64;
        let hw = 1.96 * (p * (1.0 - p) / n as f64).sqrt();
        let lower = coverage_given_k(1, &cfg, &quad, &bound).unwrap();
        let eval = CoverageEvaluator::exact(&cfg, &quad).unwrap();
        let exact = eval.given_k(1).unwrap();
        assert!(
            (p - exact).abs() < hw + 5e-3,
            "sim {p} ± {hw}, exact {exact}"
        );
        assert!(p > lower - hw);
    }

    #[test]
    fn interference_transform_matches_exact() {
        let cfg = reference();
        let quad = QuadratureSpec::default();
        for s in [2e4, 2e5, 1e6] {
            let est =
                estimate_interference_laplace(s, &cfg, 20_000, default_r_sim(&cfg), 31).unwrap();
            let exact = laplace_exact(s, &cfg, &quad).unwrap();
            assert!(
                (est.mean - exact).abs() < 2.0 * est.half_width_95 + 2e-3,
                "s={s}: {} vs {exact}",
                est.mean
            );
        }
    }

    #[test]
    fn sampled_and_stratified_offloading_agree() {
        let cfg = reference();
        let library = ContentLibrary::new(20, 0.8, 2).unwrap();
        let policy = policy_zipf_proportional(&library);
        let a = estimate_offloading(&policy, &library, &cfg, 8000, 41).unwrap();
        let options = OffloadingOptions {
            estimator: OffloadingEstimator::Sampled,
            r_sim: None,
        };
        let b = estimate_offloading_with(&policy, &library, &cfg, 8000, 42, options).unwrap();
        assert!(a.half_width_95 < b.half_width_95);
        assert!(
            (a.mean - b.mean).abs()
                < 1.2 * (a.half_width_95.powi(2) + b.half_width_95.powi(2)).sqrt() + 1e-3
        );
    }

    #[test]
    fn caterer_counts_have_poisson_mean() {
        let counts = caterer_counts(0.25, &reference(), 40_000, 51).unwrap();
        let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
        assert!((mean - 2.0).abs() < 4.0 * (2.0 / 40_000f64).sqrt());
    }
}
