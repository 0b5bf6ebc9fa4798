use rayon::prelude::*;

use super::{Experiment, ExperimentSpec, Point, ResultRow, ResultTable};
use crate::analytic::{
    compute_z, offloading_gain, CoverageEvaluator, ExactLaplace, LaplaceTransform, PppBound,
};
use crate::error::{invalid, Result};
use crate::model::{
    policy_cpf, policy_zipf_proportional, CachingPolicy, ContentLibrary, NetworkConfig,
};
use crate::optimizer::solve_p1;
use crate::simulator::{default_r_sim, estimate_coverage, estimate_offloading, MonteCarloEstimate};

const SIMULATION: &str = "simulation";
const KKT: &str = "kkt";
/// Points of the log grid on which the two Laplace transforms are compared.
const LAPLACE_GRID_POINTS: usize = 30;
/// Decades of `tγ` spanned by that grid.
const LAPLACE_GRID_DECADES: f64 = 6.0;

/// Seed of the `index`-th sweep point; point 0 uses the base seed.
pub(crate) fn point_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Runs every sweep point and collects the rows in sweep order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultTable> {
    spec.validate().map_err(invalid)?;
    let mut parameters: Vec<String> = spec
        .sweep_params
        .iter()
        .map(|p| p.column().to_string())
        .collect();
    if spec.experiment == Experiment::PolicyHistogram {
        parameters.push("file".into());
    }
    let rows: Vec<Vec<ResultRow>> = spec
        .sweep
        .par_iter()
        .enumerate()
        .map(|(i, point)| run_point(spec, i, point))
        .collect::<Result<_>>()?;
    Ok(ResultTable {
        parameters,
        rows: rows.into_iter().flatten().collect(),
    })
}

struct Rows<'a> {
    spec: &'a ExperimentSpec,
    parameters: Vec<Option<f64>>,
    seed: u64,
    out: Vec<ResultRow>,
}

impl Rows<'_> {
    fn push(&mut self, metric: &str, method: &str, value: f64) {
        self.push_with(metric, method, value, self.parameters.clone());
    }

    fn push_with(&mut self, metric: &str, method: &str, value: f64, parameters: Vec<Option<f64>>) {
        self.out.push(ResultRow {
            parameters,
            metric: metric.into(),
            method: method.into(),
            value,
            ci_half_width: None,
            trials: None,
            seed: None,
        });
    }

    fn push_estimate(&mut self, metric: &str, e: MonteCarloEstimate) {
        self.out.push(ResultRow {
            parameters: self.parameters.clone(),
            metric: metric.into(),
            method: SIMULATION.into(),
            value: e.mean,
            ci_half_width: Some(e.half_width_95),
            trials: Some(e.trials),
            seed: Some(e.seed),
        });
    }

    fn simulate(&self) -> bool {
        self.spec.trials > 0
    }
}

struct Evaluators {
    exact: CoverageEvaluator,
    bound: CoverageEvaluator,
    table: ExactLaplace,
    ppp: PppBound,
}

impl Evaluators {
    fn new(spec: &ExperimentSpec, cfg: &NetworkConfig) -> Result<Self> {
        let table = ExactLaplace::build(cfg, &spec.quadrature)?;
        let ppp = PppBound::new(cfg)?;
        let (exact, bound) = rayon::join(
            || CoverageEvaluator::new(cfg, &spec.quadrature, &table),
            || CoverageEvaluator::new(cfg, &spec.quadrature, &ppp),
        );
        Ok(Evaluators {
            exact: exact?,
            bound: bound?,
            table,
            ppp,
        })
    }
}

fn run_point(spec: &ExperimentSpec, index: usize, point: &Point) -> Result<Vec<ResultRow>> {
    let (cfg, library) = spec.point_config(point).map_err(invalid)?;
    let mut rows = Rows {
        spec,
        parameters: point.iter().map(|&(_, v)| Some(v)).collect(),
        seed: point_seed(spec.seed, index),
        out: Vec::new(),
    };
    match spec.experiment {
        Experiment::CoverageVsSigma => {
            coverage_rows(&mut rows, &cfg, &Evaluators::new(spec, &cfg)?)?
        }
        Experiment::OffloadVsBeta => offload_rows(&mut rows, &cfg, &library)?,
        Experiment::PolicyHistogram => histogram_rows(&mut rows, &cfg, &library)?,
        Experiment::ValidateBounds => bound_rows(&mut rows, &cfg, &library)?,
        Experiment::CustomSweep => {
            let ev = Evaluators::new(spec, &cfg)?;
            coverage_rows(&mut rows, &cfg, &ev)?;
            let sol = solve_p1(&library, &cfg)?;
            policy_offloading_rows(
                &mut rows,
                "offloading_pc",
                &sol.policy,
                sol.objective,
                &library,
                &cfg,
                &ev,
            )?;
        }
    }
    Ok(rows.out)
}

fn coverage_rows(rows: &mut Rows, cfg: &NetworkConfig, ev: &Evaluators) -> Result<()> {
    let c = rows.spec.caching_probability;
    rows.push("coverage", "exact-tcp", ev.exact.coverage(c)?.value);
    rows.push("coverage", "ppp-bound", ev.bound.coverage(c)?.value);
    if rows.simulate() {
        let e = estimate_coverage(c, cfg, rows.spec.trials, default_r_sim(cfg), rows.seed)?;
        rows.push_estimate("coverage", e);
    }
    Ok(())
}

fn policy_offloading_rows(
    rows: &mut Rows,
    metric: &str,
    policy: &CachingPolicy,
    closed_form: f64,
    library: &ContentLibrary,
    cfg: &NetworkConfig,
    ev: &Evaluators,
) -> Result<()> {
    rows.push(metric, "closed-form-k1", closed_form);
    let exact = offloading_gain(policy, library, |c| Ok(ev.exact.coverage(c)?.value))?;
    rows.push(metric, "exact-tcp", exact);
    if rows.simulate() {
        let e = estimate_offloading(policy, library, cfg, rows.spec.trials, rows.seed)?;
        rows.push_estimate(metric, e);
    }
    Ok(())
}

fn offload_rows(rows: &mut Rows, cfg: &NetworkConfig, library: &ContentLibrary) -> Result<()> {
    let ev = Evaluators::new(rows.spec, cfg)?;
    let sol = solve_p1(library, cfg)?;
    let zipf = policy_zipf_proportional(library);
    let cpf = policy_cpf(library);
    let k1 = |p: &CachingPolicy| crate::analytic::offloading_closed_form_k1(p, library, cfg);
    policy_offloading_rows(
        rows,
        "offloading_pc",
        &sol.policy,
        sol.objective,
        library,
        cfg,
        &ev,
    )?;
    policy_offloading_rows(
        rows,
        "offloading_zipf",
        &zipf,
        k1(&zipf)?,
        library,
        cfg,
        &ev,
    )?;
    policy_offloading_rows(rows, "offloading_cpf", &cpf, k1(&cpf)?, library, cfg, &ev)?;
    Ok(())
}

fn histogram_rows(rows: &mut Rows, cfg: &NetworkConfig, library: &ContentLibrary) -> Result<()> {
    let sol = solve_p1(library, cfg)?;
    for (m, &c) in sol.policy.probs().iter().enumerate() {
        let mut params = rows.parameters.clone();
        params.push(Some((m + 1) as f64));
        rows.push_with("caching_probability", KKT, c, params);
    }
    rows.parameters.push(None);
    rows.push("entropy", KKT, sol.policy.entropy());
    rows.push("multiplier", KKT, sol.multiplier);
    rows.push("objective", "closed-form-k1", sol.objective);
    Ok(())
}

fn bound_rows(rows: &mut Rows, cfg: &NetworkConfig, library: &ContentLibrary) -> Result<()> {
    let ev = Evaluators::new(rows.spec, cfg)?;

    // tγ grid on which the PPP exponent runs from 1e-2 upwards
    let start = (1e-2 / ev.ppp.coefficient()).powf(cfg.alpha() / 2.0);
    let step = LAPLACE_GRID_DECADES / (LAPLACE_GRID_POINTS - 1) as f64;
    let laplace_violation = (0..LAPLACE_GRID_POINTS)
        .map(|i| {
            let x = start * 10f64.powf(i as f64 * step);
            ev.ppp.laplace(x) - ev.table.laplace(x)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    rows.push(
        "laplace_order_violation",
        "exact-tcp-vs-ppp-bound",
        laplace_violation,
    );

    let c = rows.spec.caching_probability;
    let coverage_violation = ev.bound.coverage(c)?.value - ev.exact.coverage(c)?.value;
    rows.push(
        "coverage_order_violation",
        "exact-tcp-vs-ppp-bound",
        coverage_violation,
    );

    let z = compute_z(cfg)?;
    rows.push("z", "closed-form", z);

    // closed-form single-caterer term against its quadrature counterpart
    let sol = solve_p1(library, cfg)?;
    let p1 = ev
        .bound
        .given_k(1)
        .ok_or_else(|| invalid("no single-caterer term"))?;
    let n_bar = cfg.n_bar();
    let residual = library
        .popularity()
        .iter()
        .zip(sol.policy.probs())
        .map(|(&q, &c)| {
            let k1 = c * n_bar * (-c * n_bar).exp();
            q * (1.0 - c) * (k1 / z - k1 * p1).abs()
        })
        .fold(0.0, f64::max);
    rows.push(
        "closed_form_k1_residual",
        "closed-form-k1-vs-quadrature",
        residual,
    );
    Ok(())
}
