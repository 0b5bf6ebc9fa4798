//! Caching placement that maximizes the single-caterer offloading bound
//!
//! ```text
//! maximize   Σ_m q_m g(c_m),   g(c) = c + (1 − c) c n̄ e^{−c n̄} / Z
//! subject to Σ_m c_m = M,  0 <= c_m <= 1.
//! ```
//!
//! The per-file objective is concave only on `[0, c_i]` with
//! `c_i = ((4 + n̄) − √(n̄² + 8)) / (2n̄)`; for `n̄ > 1` it is convex on
//! `[c_i, 1]`. The solver bisects on the multiplier of the cache-size
//! constraint, maximizing each file's Lagrangian globally. The resulting
//! caching sum can jump over `M`; when that happens a feasible point is
//! recovered from the two sides of the jump and improved by pairwise
//! exchanges followed by a Newton solve of the stationarity system.
//! [`grid_search_oracle`] provides a brute-force check.

use std::fmt;

use rayon::prelude::*;

use crate::analytic::compute_z;
use crate::error::{invalid, Error, Result};
use crate::model::{validate_policy, CachingPolicy, ContentLibrary, NetworkConfig};

const MULTIPLIER_TOL: f64 = 1e-12;
const SUM_TOL: f64 = 1e-9;
const MAX_POLISH_SWEEPS: usize = 500;
const PAIR_SCAN_POINTS: usize = 64;
const ORACLE_BUDGET: f64 = 2e8;

/// `d/dc [q_m g(c)] = q_m + (q_m n̄ e^{−c n̄} / Z)(1 − c(2 + n̄ − n̄c))`.
pub fn marginal_gain(c: f64, q_m: f64, n_bar: f64, z: f64) -> f64 {
    q_m + (q_m * n_bar * (-c * n_bar).exp() / z) * (1.0 - c * (2.0 + n_bar - n_bar * c))
}

fn per_file(c: f64, q_m: f64, n_bar: f64, z: f64) -> f64 {
    q_m * (c + (1.0 - c) * c * n_bar * (-c * n_bar).exp() / z)
}

fn curvature(c: f64, q_m: f64, n_bar: f64, z: f64) -> f64 {
    let nc = n_bar * c;
    q_m * (n_bar * (-nc).exp() / z) * (-2.0 - 2.0 * n_bar + 4.0 * nc + n_bar * nc - nc * nc)
}

/// Start of the convex region of the per-file objective, or `None` when it
/// is concave on all of `[0, 1]`.
pub fn inflection_point(n_bar: f64) -> Option<f64> {
    if !(n_bar > 0.0) {
        return None;
    }
    // smaller root of n̄²c² − (4n̄ + n̄²)c + 2 + 2n̄, in cancellation-free form
    let c = 2.0 * (2.0 + 2.0 * n_bar) / (n_bar * (4.0 + n_bar + (n_bar * n_bar + 8.0).sqrt()));
    (c < 1.0).then_some(c)
}

/// Maximizer of the per-file Lagrangian `q_m g(c) − v* c` by the threshold
/// rule: 1 below `marginal_gain(1)`, 0 above `marginal_gain(0)`, otherwise
/// the stationary point on the concave branch.
pub fn solve_c_given_v(v_star: f64, q_m: f64, n_bar: f64, z: f64) -> Result<f64> {
    if !(v_star.is_finite() && q_m >= 0.0 && n_bar > 0.0 && z > 0.0) {
        return Err(invalid(format!(
            "invalid inputs v*={v_star}, q_m={q_m}, n_bar={n_bar}, Z={z}"
        )));
    }
    if q_m == 0.0 {
        return Ok(if v_star < 0.0 { 1.0 } else { 0.0 });
    }
    if v_star < marginal_gain(1.0, q_m, n_bar, z) {
        return Ok(1.0);
    }
    if v_star > marginal_gain(0.0, q_m, n_bar, z) {
        return Ok(0.0);
    }
    // marginal_gain is strictly decreasing on the concave branch
    let mut lo = 0.0;
    let mut hi = inflection_point(n_bar).unwrap_or(1.0);
    if marginal_gain(hi, q_m, n_bar, z) > v_star {
        return Err(Error::Numerical(format!(
            "no stationary point for v*={v_star} on the concave branch [0, {hi}]"
        )));
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        if marginal_gain(mid, q_m, n_bar, z) > v_star {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Global maximizer over `[0, 1]` of the per-file Lagrangian
/// `q_m g(c) − v* c`.
///
/// Agrees with [`solve_c_given_v`] wherever the per-file objective is
/// concave. Where it is not, the threshold rule can return 1 although the
/// stationary point on the concave branch scores higher; this function
/// compares the candidates instead, which makes the caching sum
/// non-increasing in `v*` and any multiplier that meets the cache size a
/// certificate of global optimality.
pub fn lagrangian_argmax(v_star: f64, q_m: f64, n_bar: f64, z: f64) -> Result<f64> {
    if !(v_star.is_finite() && q_m >= 0.0 && n_bar > 0.0 && z > 0.0) {
        return Err(invalid(format!(
            "invalid inputs v*={v_star}, q_m={q_m}, n_bar={n_bar}, Z={z}"
        )));
    }
    let lagrangian = |c: f64| per_file(c, q_m, n_bar, z) - v_star * c;
    let top = inflection_point(n_bar).unwrap_or(1.0);
    let branch = if v_star >= marginal_gain(0.0, q_m, n_bar, z) {
        0.0
    } else if v_star <= marginal_gain(top, q_m, n_bar, z) {
        top
    } else {
        let (mut lo, mut hi) = (0.0, top);
        loop {
            let mid = 0.5 * (lo + hi);
            if !(mid > lo && mid < hi) {
                break;
            }
            if marginal_gain(mid, q_m, n_bar, z) > v_star {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let mut best = (branch, lagrangian(branch));
    for c in [1.0, 0.0] {
        let l = lagrangian(c);
        if l > best.1 {
            best = (c, l);
        }
    }
    Ok(best.0)
}

/// How a file's caching probability sits with respect to the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileCase {
    ClampedOne,
    ClampedZero,
    Interior,
}

impl FileCase {
    pub fn as_str(&self) -> &'static str {
        match self {
            FileCase::ClampedOne => "clamped-1",
            FileCase::ClampedZero => "clamped-0",
            FileCase::Interior => "interior",
        }
    }
}

impl fmt::Display for FileCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A file whose optimal probability lies where its objective is convex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcavityWarning {
    pub file: usize,
    pub c: f64,
    pub second_derivative: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktDiagnostics {
    pub cases: Vec<FileCase>,
    /// `|Σ c − M|`.
    pub sum_residual: f64,
    /// Largest `|v* − marginal_gain(c_m)|` over interior files.
    pub stationarity_residual: f64,
    pub concavity_warnings: Vec<ConcavityWarning>,
    /// Start of the convex region of the per-file objective, if any.
    pub convex_from: Option<f64>,
    /// Set when the caching sum jumped over the cache size; names the
    /// file that was given a fractional share of the jump.
    pub split_file: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub policy: CachingPolicy,
    /// Lagrange multiplier of the cache-size constraint.
    pub multiplier: f64,
    pub objective: f64,
    pub diagnostics: KktDiagnostics,
}

struct Problem<'a> {
    q: &'a [f64],
    n_bar: f64,
    z: f64,
    m: f64,
}

impl Problem<'_> {
    fn caching(&self, v: f64) -> Result<Vec<f64>> {
        self.q
            .iter()
            .map(|&q| lagrangian_argmax(v, q, self.n_bar, self.z))
            .collect()
    }

    fn objective(&self, c: &[f64]) -> f64 {
        c.iter()
            .zip(self.q)
            .map(|(&c, &q)| per_file(c, q, self.n_bar, self.z))
            .sum()
    }

    fn marginal(&self, file: usize, c: f64) -> f64 {
        marginal_gain(c, self.q[file], self.n_bar, self.z)
    }

    /// Bisection on the multiplier. Returns the bracket and, if the sum can
    /// be matched, the caching vector at the solution.
    fn bisect(&self) -> Result<(f64, f64, Option<Vec<f64>>)> {
        let mut lo = 0.0;
        let mut hi = self
            .q
            .iter()
            .map(|&q| marginal_gain(0.0, q, self.n_bar, self.z))
            .fold(0.0, f64::max);
        let sum_lo: f64 = self.caching(lo)?.iter().sum();
        let sum_hi: f64 = self.caching(hi)?.iter().sum();
        if !(sum_lo > self.m && sum_hi < self.m) {
            return Err(invalid(format!(
                "multiplier search does not bracket the cache size {} (sums {sum_lo} and {sum_hi})",
                self.m
            )));
        }
        while hi - lo > MULTIPLIER_TOL {
            let mid = 0.5 * (lo + hi);
            if !(mid > lo && mid < hi) {
                break;
            }
            let c = self.caching(mid)?;
            let s: f64 = c.iter().sum();
            if (s - self.m).abs() < SUM_TOL {
                return Ok((mid, mid, Some(c)));
            }
            if s > self.m {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((lo, hi, None))
    }

    /// Feasible point from the two sides of a jump: files keep their value
    /// above the jump, and jumping files (in index order) take their value
    /// below it while the budget allows, the last one taking the remainder.
    fn recover(&self, c_lo: &[f64], c_hi: &[f64]) -> (Vec<f64>, Option<usize>) {
        let mut c = c_hi.to_vec();
        let mut split = None;
        for f in 0..c.len() {
            if c_lo[f] == c_hi[f] {
                continue;
            }
            let room = self.m - c.iter().sum::<f64>();
            if room <= 0.0 {
                break;
            }
            if c_lo[f] - c_hi[f] > room {
                c[f] = c_hi[f] + room;
                split = Some(f);
                break;
            }
            c[f] = c_lo[f];
        }
        (c, split)
    }

    fn best_pair_split(&self, i: usize, j: usize, s: f64) -> f64 {
        let (q_i, q_j) = (self.q[i], self.q[j]);
        let f = |x: f64| {
            per_file(x, q_i, self.n_bar, self.z) + per_file(s - x, q_j, self.n_bar, self.z)
        };
        let a = (s - 1.0).max(0.0);
        let b = s.min(1.0);
        let step = (b - a) / PAIR_SCAN_POINTS as f64;
        let mut best = (a, f(a));
        for k in 1..=PAIR_SCAN_POINTS {
            let x = if k == PAIR_SCAN_POINTS {
                b
            } else {
                a + k as f64 * step
            };
            let fx = f(x);
            if fx > best.1 {
                best = (x, fx);
            }
        }
        // golden-section refinement around the best scan point
        let mut lo = (best.0 - step).max(a);
        let mut hi = (best.0 + step).min(b);
        let r = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = hi - r * (hi - lo);
        let mut x2 = lo + r * (hi - lo);
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..80 {
            if f1 < f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + r * (hi - lo);
                f2 = f(x2);
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - r * (hi - lo);
                f1 = f(x1);
            }
        }
        let x = 0.5 * (lo + hi);
        let x = if f(x) > best.1 { x } else { best.0 };
        // prefer the box edges when they are as good to rounding
        let slack = 1e-15 * f(x).abs().max(1e-300);
        if f(b) >= f(x) - slack {
            b
        } else if f(a) >= f(x) - slack {
            a
        } else {
            x
        }
    }

    /// Pairwise exchange ascent at fixed total.
    fn polish(&self, c: &mut [f64]) {
        let n = c.len();
        for _ in 0..MAX_POLISH_SWEEPS {
            let mut gain = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    let both_clamped = (c[i] == 0.0 && c[j] == 0.0) || (c[i] == 1.0 && c[j] == 1.0);
                    if both_clamped {
                        continue;
                    }
                    let s = c[i] + c[j];
                    let before = per_file(c[i], self.q[i], self.n_bar, self.z)
                        + per_file(c[j], self.q[j], self.n_bar, self.z);
                    let x = snap(self.best_pair_split(i, j, s));
                    let y = snap(s - x);
                    let after = per_file(x, self.q[i], self.n_bar, self.z)
                        + per_file(y, self.q[j], self.n_bar, self.z);
                    if after > before {
                        c[i] = x;
                        c[j] = y;
                        gain += after - before;
                    }
                }
            }
            if gain <= 1e-16 {
                break;
            }
        }
    }

    /// Newton iteration on `q_m g'(c_m) = v, Σ c_m = M` over the interior
    /// files. Leaves `c` untouched if the iteration leaves the box or loses
    /// objective.
    fn refine(&self, c: &mut [f64]) {
        let interior: Vec<usize> = (0..c.len()).filter(|&f| c[f] > 0.0 && c[f] < 1.0).collect();
        if interior.is_empty() {
            return;
        }
        let fixed: f64 = (0..c.len())
            .filter(|f| !interior.contains(f))
            .map(|f| c[f])
            .sum();
        let target = self.m - fixed;
        let mut x: Vec<f64> = interior.iter().map(|&f| c[f]).collect();
        let mut v = interior
            .iter()
            .zip(&x)
            .map(|(&f, &xf)| self.marginal(f, xf))
            .sum::<f64>()
            / interior.len() as f64;
        for _ in 0..50 {
            let r: Vec<f64> = interior
                .iter()
                .zip(&x)
                .map(|(&f, &xf)| self.marginal(f, xf) - v)
                .collect();
            let r_sum = x.iter().sum::<f64>() - target;
            let worst = r.iter().fold(r_sum.abs(), |a, b| a.max(b.abs()));
            if worst < 1e-15 {
                break;
            }
            let h: Vec<f64> = interior
                .iter()
                .zip(&x)
                .map(|(&f, &xf)| curvature(xf, self.q[f], self.n_bar, self.z))
                .collect();
            if h.iter().any(|hf| hf.abs() < 1e-300) {
                return;
            }
            let inv_sum: f64 = h.iter().map(|hf| 1.0 / hf).sum();
            if inv_sum.abs() < 1e-300 {
                return;
            }
            let dv = (r.iter().zip(&h).map(|(rf, hf)| rf / hf).sum::<f64>() - r_sum) / inv_sum;
            for ((xf, rf), hf) in x.iter_mut().zip(&r).zip(&h) {
                *xf += (dv - rf) / hf;
            }
            v += dv;
        }
        if x.iter().any(|&xf| !(xf > 0.0 && xf < 1.0)) {
            return;
        }
        let mut trial = c.to_vec();
        for (&f, &xf) in interior.iter().zip(&x) {
            trial[f] = xf;
        }
        if self.objective(&trial) >= self.objective(c) - 1e-13 {
            c.copy_from_slice(&trial);
        }
    }

    /// Puts any residual of the sum on the interior file with the most
    /// room, so that the policy meets the cache size to rounding. Files on
    /// the box edges are never moved.
    fn fix_sum(&self, c: &mut [f64]) {
        let residual = self.m - c.iter().sum::<f64>();
        if residual == 0.0 {
            return;
        }
        let room = |x: f64| if residual > 0.0 { 1.0 - x } else { x };
        if let Some(f) = (0..c.len())
            .filter(|&f| c[f] > 0.0 && c[f] < 1.0 && room(c[f]) >= residual.abs())
            .max_by(|&a, &b| room(c[a]).total_cmp(&room(c[b])))
        {
            c[f] += residual;
        }
    }
}

/// Rounds values within rounding distance of the box edges onto them.
fn snap(x: f64) -> f64 {
    if x < 1e-12 {
        0.0
    } else if x > 1.0 - 1e-12 {
        1.0
    } else {
        x
    }
}

/// Solves the cache-placement problem for the single-caterer objective.
pub fn solve_p1(library: &ContentLibrary, cfg: &NetworkConfig) -> Result<KktSolution> {
    let z = compute_z(cfg)?;
    let q = library.popularity();
    let problem = Problem {
        q,
        n_bar: cfg.n_bar(),
        z,
        m: library.cache_size() as f64,
    };

    let (lo, hi, exact) = problem.bisect()?;
    let (mut c, split_file) = match exact {
        Some(c) => (c, None),
        None => {
            let c_lo = problem.caching(lo)?;
            let c_hi = problem.caching(hi)?;
            let (mut c, split) = problem.recover(&c_lo, &c_hi);
            problem.polish(&mut c);
            (c, split)
        }
    };
    problem.refine(&mut c);
    problem.fix_sum(&mut c);

    // equal popularity is interchangeable: order each tie group descending
    let mut start = 0;
    while start < c.len() {
        let end = (start..c.len())
            .find(|&f| q[f] != q[start])
            .unwrap_or(c.len());
        c[start..end].sort_by(|a, b| b.total_cmp(a));
        start = end;
    }

    let cases: Vec<FileCase> = c
        .iter()
        .map(|&x| {
            if x >= 1.0 {
                FileCase::ClampedOne
            } else if x <= 0.0 {
                FileCase::ClampedZero
            } else {
                FileCase::Interior
            }
        })
        .collect();
    let interior: Vec<usize> = (0..c.len())
        .filter(|&f| cases[f] == FileCase::Interior)
        .collect();
    let multiplier = if interior.is_empty() {
        0.5 * (lo + hi)
    } else {
        interior
            .iter()
            .map(|&f| problem.marginal(f, c[f]))
            .sum::<f64>()
            / interior.len() as f64
    };
    let stationarity_residual = interior
        .iter()
        .map(|&f| (multiplier - problem.marginal(f, c[f])).abs())
        .fold(0.0, f64::max);
    let concavity_warnings = interior
        .iter()
        .filter_map(|&f| {
            let second_derivative = curvature(c[f], q[f], cfg.n_bar(), z);
            (second_derivative > 0.0).then_some(ConcavityWarning {
                file: f,
                c: c[f],
                second_derivative,
            })
        })
        .collect();
    let split_file = split_file.map(|s| {
        interior
            .iter()
            .copied()
            .find(|&f| curvature(c[f], q[f], cfg.n_bar(), z) > 0.0)
            .unwrap_or(s)
    });

    let policy = CachingPolicy::from_probs(c);
    validate_policy(&policy, library)?;
    let sum_residual = (policy.probs().iter().sum::<f64>() - problem.m).abs();
    let objective = problem.objective(policy.probs());
    Ok(KktSolution {
        policy,
        multiplier,
        objective,
        diagnostics: KktDiagnostics {
            cases,
            sum_residual,
            stationarity_residual,
            concavity_warnings,
            convex_from: inflection_point(cfg.n_bar()),
            split_file,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub policy: CachingPolicy,
    pub objective: f64,
}

/// Exhaustive search over `{c : Σc = M, c_m ∈ {0, step, …, 1}}`.
///
/// Only for small libraries (`N_f <= 6`); `1/step` must be an integer and
/// `step <= 0.05`.
pub fn grid_search_oracle(
    library: &ContentLibrary,
    cfg: &NetworkConfig,
    step: f64,
) -> Result<OracleResult> {
    let n = library.n_files();
    if n > 6 {
        return Err(invalid(format!(
            "grid oracle supports at most 6 files, got {n}"
        )));
    }
    if !(step > 0.0 && step <= 0.05) {
        return Err(invalid(format!(
            "grid step must lie in (0, 0.05], got {step}"
        )));
    }
    let levels = (1.0 / step).round() as usize;
    if ((levels as f64) * step - 1.0).abs() > 1e-9 {
        return Err(invalid(format!(
            "1/step must be an integer, got step {step}"
        )));
    }
    let combos = ((levels + 1) as f64).powi(n as i32 - 1);
    if combos > ORACLE_BUDGET {
        return Err(invalid(format!(
            "grid oracle would visit {combos:e} points, budget is {ORACLE_BUDGET:e}"
        )));
    }
    let z = compute_z(cfg)?;
    let target = library.cache_size() * levels;
    let table: Vec<Vec<f64>> = library
        .popularity()
        .iter()
        .map(|&q| {
            (0..=levels)
                .map(|k| per_file(k as f64 / levels as f64, q, cfg.n_bar(), z))
                .collect()
        })
        .collect();

    fn search(
        table: &[Vec<f64>],
        file: usize,
        remaining: usize,
        acc: f64,
        units: &mut Vec<usize>,
        best: &mut (f64, Vec<usize>),
    ) {
        let levels = table[file].len() - 1;
        if file + 1 == table.len() {
            if remaining <= levels {
                let total = acc + table[file][remaining];
                if total > best.0 {
                    units.push(remaining);
                    *best = (total, units.clone());
                    units.pop();
                }
            }
            return;
        }
        let files_left = table.len() - file - 1;
        for k in 0..=remaining.min(levels) {
            if remaining - k > files_left * levels {
                continue;
            }
            units.push(k);
            search(
                table,
                file + 1,
                remaining - k,
                acc + table[file][k],
                units,
                best,
            );
            units.pop();
        }
    }

    let best = (0..=target.min(levels))
        .into_par_iter()
        .map(|k0| {
            let mut best = (f64::NEG_INFINITY, Vec::new());
            let mut units = vec![k0];
            if n == 1 {
                if k0 == target {
                    best = (table[0][k0], units);
                }
            } else {
                search(&table, 1, target - k0, table[0][k0], &mut units, &mut best);
            }
            best
        })
        .reduce(
            || (f64::NEG_INFINITY, Vec::new()),
            |a, b| if b.0 > a.0 { b } else { a },
        );
    if best.1.is_empty() {
        return Err(invalid("no grid point meets the cache size"));
    }
    let probs = best.1.iter().map(|&k| k as f64 / levels as f64).collect();
    Ok(OracleResult {
        policy: CachingPolicy::from_probs(probs),
        objective: best.0,
    })
}

/// Numerical second derivative of the per-file objective at one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvaturePoint {
    pub c: f64,
    pub second_derivative: f64,
    /// True where the per-file objective is convex.
    pub convex: bool,
}

/// Differentiates [`marginal_gain`] on `grid_points` equispaced points of
/// `[0, 1]` and flags where the per-file objective is convex.
pub fn concavity_report(
    q_m: f64,
    n_bar: f64,
    z: f64,
    grid_points: usize,
) -> Result<Vec<CurvaturePoint>> {
    if grid_points < 10 {
        return Err(invalid(format!(
            "concavity report needs >= 10 points, got {grid_points}"
        )));
    }
    let h = 1e-5;
    let d = |c: f64| marginal_gain(c, q_m, n_bar, z);
    Ok((0..grid_points)
        .map(|i| {
            let c = i as f64 / (grid_points - 1) as f64;
            let second_derivative = if c - h < 0.0 {
                (-3.0 * d(c) + 4.0 * d(c + h) - d(c + 2.0 * h)) / (2.0 * h)
            } else if c + h > 1.0 {
                (3.0 * d(c) - 4.0 * d(c - h) + d(c - 2.0 * h)) / (2.0 * h)
            } else {
                (d(c + h) - d(c - h)) / (2.0 * h)
            };
            CurvaturePoint {
                c,
                second_derivative,
                convex: second_derivative > 0.0,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{policy_cpf, policy_uniform, policy_zipf_proportional};

    const Z_REFERENCE: f64 = 16.791_367_041_742_973_790;

    #[test]
    fn marginal_gain_thresholds() {
        let (q, n, z) = (0.07, 8.0, Z_REFERENCE);
        assert!((marginal_gain(0.0, q, n, z) - q * (1.0 + n / z)).abs() < 1e-16);
        assert!((marginal_gain(1.0, q, n, z) - q * (1.0 - n * (-n).exp() / z)).abs() < 1e-16);
    }

    #[test]
    fn marginal_gain_reference_value() {
        // high-precision evaluation of the closed form
        let got = marginal_gain(0.5, 0.0538, 8.0, Z_REFERENCE);
        assert!((got - 0.052_861_059_059_918_81).abs() < 1e-15, "{got}");
    }

    #[test]
    fn marginal_gain_matches_finite_difference() {
        for c in [0.05, 0.3, 0.7, 0.95] {
            let h = 1e-6;
            let fd = (per_file(c + h, 0.1, 8.0, 3.0) - per_file(c - h, 0.1, 8.0, 3.0)) / (2.0 * h);
            assert!((fd - marginal_gain(c, 0.1, 8.0, 3.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn inflection_matches_curvature_sign_change() {
        let ci = inflection_point(8.0).unwrap();
        assert!((ci - (12.0 - 72f64.sqrt()) / 16.0).abs() < 1e-15);
        assert!(curvature(ci - 1e-6, 1.0, 8.0, 3.0) < 0.0);
        assert!(curvature(ci + 1e-6, 1.0, 8.0, 3.0) > 0.0);
        assert!(inflection_point(1.0).is_none());
        assert!(inflection_point(0.5).is_none());
    }

    #[test]
    fn threshold_rule() {
        let (q, n, z) = (0.05, 8.0, Z_REFERENCE);
        assert_eq!(solve_c_given_v(0.0, q, n, z).unwrap(), 1.0);
        assert_eq!(
            solve_c_given_v(q * (1.0 + n / z) * 1.01, q, n, z).unwrap(),
            0.0
        );
    }

    #[test]
    fn root_round_trip() {
        // concave everywhere for n̄ <= 1
        let (q, z) = (0.05, 1.7);
        let v = marginal_gain(0.3, q, 0.8, z);
        let c = solve_c_given_v(v, q, 0.8, z).unwrap();
        assert!((marginal_gain(c, q, 0.8, z) - v).abs() < 1e-8);
        assert!((c - 0.3).abs() < 1e-9);

        // n̄ = 8: round trip holds where the marginal is above its value at 1
        let n = 8.0;
        for c0 in [0.01, 0.05, 0.1] {
            let v = marginal_gain(c0, q, n, Z_REFERENCE);
            let c = solve_c_given_v(v, q, n, Z_REFERENCE).unwrap();
            assert!((marginal_gain(c, q, n, Z_REFERENCE) - v).abs() < 1e-8);
            assert!((c - c0).abs() < 1e-9);
        }
    }

    #[test]
    fn convex_branch_marginal_maps_to_full_caching() {
        // below the lower threshold the rule caches the file fully
        let (q, n) = (0.05, 8.0);
        let v = marginal_gain(0.3, q, n, Z_REFERENCE);
        assert!(v < marginal_gain(1.0, q, n, Z_REFERENCE));
        assert_eq!(solve_c_given_v(v, q, n, Z_REFERENCE).unwrap(), 1.0);
    }

    #[test]
    fn lagrangian_argmax_agrees_with_threshold_rule_when_concave() {
        let (q, n, z) = (0.08, 0.9, 1.4);
        for k in 0..=60 {
            let v = k as f64 / 40.0 * marginal_gain(0.0, q, n, z);
            let a = solve_c_given_v(v, q, n, z).unwrap();
            let b = lagrangian_argmax(v, q, n, z).unwrap();
            assert!((a - b).abs() < 1e-12, "v={v}: {a} vs {b}");
        }
    }

    #[test]
    fn lagrangian_argmax_beats_full_caching_when_it_should() {
        // v just below the lower threshold: the threshold rule says 1, but
        // the concave-branch stationary point has the larger Lagrangian
        let (q, n, z) = (0.03, 8.0, 3.05);
        let v = 0.95 * marginal_gain(1.0, q, n, z);
        assert_eq!(solve_c_given_v(v, q, n, z).unwrap(), 1.0);
        let c = lagrangian_argmax(v, q, n, z).unwrap();
        let l = |c: f64| per_file(c, q, n, z) - v * c;
        assert!(c < 1.0 && l(c) > l(1.0));
        assert!((marginal_gain(c, q, n, z) - v).abs() < 1e-12);
    }

    #[test]
    fn lagrangian_sum_is_non_increasing() {
        let q = crate::model::zipf_popularity(30, 0.7).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..=400 {
            let v = k as f64 / 400.0 * 0.2;
            let s: f64 = q
                .iter()
                .map(|&qm| lagrangian_argmax(v, qm, 8.0, 3.0).unwrap())
                .sum();
            assert!(s <= prev + 1e-12);
            prev = s;
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(solve_c_given_v(f64::NAN, 0.1, 8.0, 2.0).is_err());
        assert!(solve_c_given_v(0.1, 0.1, 0.0, 2.0).is_err());
        assert!(concavity_report(0.1, 8.0, 2.0, 9).is_err());
    }

    fn check_structure(sol: &KktSolution, library: &ContentLibrary) {
        validate_policy(&sol.policy, library).unwrap();
        assert!(sol.diagnostics.sum_residual < 1e-8);
        assert!(
            sol.diagnostics.stationarity_residual < 1e-8,
            "{:?}",
            sol.diagnostics
        );
        let c = sol.policy.probs();
        assert!(c.windows(2).all(|w| w[0] >= w[1] - 1e-12), "{c:?}");
    }

    #[test]
    fn uniform_popularity_is_symmetric() {
        let library = ContentLibrary::new(100, 0.0, 5).unwrap();
        let sol = solve_p1(&library, &NetworkConfig::reference()).unwrap();
        check_structure(&sol, &library);
        for &c in sol.policy.probs() {
            assert!((c - 0.05).abs() < 1e-9);
        }
        assert!(sol.diagnostics.split_file.is_none());
    }

    #[test]
    fn two_files_honor_cache_size() {
        let library = ContentLibrary::new(2, 0.8, 1).unwrap();
        let sol = solve_p1(&library, &NetworkConfig::reference()).unwrap();
        check_structure(&sol, &library);
    }

    #[test]
    fn matches_grid_oracle() {
        let cfg = NetworkConfig::reference();
        for beta in [0.0, 0.5, 1.0] {
            let library = ContentLibrary::new(5, beta, 2).unwrap();
            let sol = solve_p1(&library, &cfg).unwrap();
            check_structure(&sol, &library);
            let oracle = grid_search_oracle(&library, &cfg, 0.05).unwrap();
            assert!(sol.objective >= oracle.objective - 1e-4, "beta {beta}");
        }
    }

    #[test]
    fn reference_dominates_baselines() {
        let cfg = NetworkConfig::reference();
        let library = ContentLibrary::reference();
        let sol = solve_p1(&library, &cfg).unwrap();
        check_structure(&sol, &library);
        for base in [
            policy_cpf(&library),
            policy_uniform(&library),
            policy_zipf_proportional(&library),
        ] {
            let o = crate::analytic::offloading_closed_form_k1(&base, &library, &cfg).unwrap();
            assert!(sol.objective >= o - 1e-12);
        }
        let direct =
            crate::analytic::offloading_closed_form_k1(&sol.policy, &library, &cfg).unwrap();
        assert!((sol.objective - direct).abs() < 1e-14);
    }

    #[test]
    fn oracle_rejects_large_problems() {
        let cfg = NetworkConfig::reference();
        assert!(grid_search_oracle(&ContentLibrary::new(7, 0.5, 2).unwrap(), &cfg, 0.05).is_err());
        assert!(grid_search_oracle(&ContentLibrary::new(4, 0.5, 2).unwrap(), &cfg, 0.1).is_err());
        assert!(grid_search_oracle(&ContentLibrary::new(4, 0.5, 2).unwrap(), &cfg, 0.03).is_err());
        assert!(grid_search_oracle(&ContentLibrary::new(6, 0.5, 2).unwrap(), &cfg, 0.01).is_err());
    }

    #[test]
    fn concavity_report_flags_convex_tail() {
        let report = concavity_report(0.05, 8.0, Z_REFERENCE, 101).unwrap();
        assert_eq!(report.len(), 101);
        assert!(!report[0].convex);
        assert!(report[100].convex);
        // closed form at c = 1: q n̄ e^{−n̄}/Z · (2n̄ − 2)
        let want = 0.05 * 8.0 * (-8f64).exp() / Z_REFERENCE * 14.0;
        assert!((report[100].second_derivative - want).abs() < 1e-8);
        let small = concavity_report(0.05, 0.01, 1.5, 20).unwrap();
        assert!(small.iter().all(|p| !p.convex));
    }
}
