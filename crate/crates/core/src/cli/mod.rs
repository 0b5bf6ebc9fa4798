//! Batch experiment runner: configuration loading, experiment execution and
//! result serialization for the `coopcache` binary.

mod config;
mod experiments;
mod output;

pub use config::{load_config, parse_config, ConfigError};
pub use experiments::run_experiment;
pub use output::{emit_results, format_number, write_results};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::analytic::QuadratureSpec;
use crate::model::{ContentLibrary, NetworkConfig};
use crate::simulator::MIN_TRIALS;

/// Named experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum Experiment {
    /// Coverage of a cached file versus σ and λ_p: exact, bound, simulation.
    CoverageVsSigma,
    /// Offloading gain of the optimized, Zipf and CPF policies versus β.
    OffloadVsBeta,
    /// Optimized caching vectors and their entropy.
    PolicyHistogram,
    /// Bound ordering and closed-form identity residuals.
    ValidateBounds,
    /// Coverage and optimized offloading over an arbitrary sweep.
    CustomSweep,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::CoverageVsSigma,
        Experiment::OffloadVsBeta,
        Experiment::PolicyHistogram,
        Experiment::ValidateBounds,
        Experiment::CustomSweep,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::CoverageVsSigma => "coverage-vs-sigma",
            Experiment::OffloadVsBeta => "offload-vs-beta",
            Experiment::PolicyHistogram => "policy-histogram",
            Experiment::ValidateBounds => "validate-bounds",
            Experiment::CustomSweep => "custom-sweep",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Experiment::ALL.iter().map(|e| e.as_str()).collect();
                format!(
                    "unknown experiment {s:?}; expected one of {}",
                    names.join(", ")
                )
            })
    }
}

/// Sweepable parameters, in output column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Param {
    Sigma,
    LambdaP,
    NBar,
    Alpha,
    Theta,
    GammaD,
    Beta,
    NFiles,
    CacheSize,
}

impl Param {
    pub const ALL: [Param; 9] = [
        Param::Sigma,
        Param::LambdaP,
        Param::NBar,
        Param::Alpha,
        Param::Theta,
        Param::GammaD,
        Param::Beta,
        Param::NFiles,
        Param::CacheSize,
    ];

    /// Configuration key.
    pub fn key(&self) -> &'static str {
        match self {
            Param::Sigma => "sigma",
            Param::LambdaP => "lambda_p",
            Param::NBar => "n_bar",
            Param::Alpha => "alpha",
            Param::Theta => "theta",
            Param::GammaD => "gamma_d",
            Param::Beta => "beta",
            Param::NFiles => "n_files",
            Param::CacheSize => "cache_size",
        }
    }

    /// Output column, naming the SI unit where there is one.
    pub fn column(&self) -> &'static str {
        match self {
            Param::Sigma => "sigma_m",
            Param::LambdaP => "lambda_p_per_m2",
            Param::Theta => "theta_linear",
            Param::GammaD => "gamma_d_linear",
            other => other.key(),
        }
    }

    fn unit_hint(&self) -> &'static str {
        match self {
            Param::Sigma => "use m or km",
            Param::LambdaP => "use \"per m2\" or \"per km2\"",
            Param::Theta | Param::GammaD => "use dB or a bare linear value",
            _ => "this parameter takes a bare number",
        }
    }
}

impl FromStr for Param {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Param::ALL
            .into_iter()
            .find(|p| p.key() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Param::ALL.iter().map(|p| p.key()).collect();
                format!(
                    "unknown sweep parameter {s:?}; expected one of {}",
                    names.join(", ")
                )
            })
    }
}

/// One sweep point: parameter values in SI units.
pub type Point = Vec<(Param, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    #[value(name = "jsonl")]
    JsonLines,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "jsonl" | "json-lines" => Ok(OutputFormat::JsonLines),
            _ => Err(format!(
                "unknown output format {s:?}; expected csv or jsonl"
            )),
        }
    }
}

/// Everything needed to run one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub network: NetworkConfig,
    pub library: ContentLibrary,
    /// Swept parameters, in column order.
    pub sweep_params: Vec<Param>,
    pub sweep: Vec<Point>,
    /// Monte Carlo trials per point; 0 skips the simulation rows.
    pub trials: u64,
    pub seed: u64,
    pub quadrature: QuadratureSpec,
    /// Caching probability used by the coverage metrics.
    pub caching_probability: f64,
    pub output: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    sweep_is_default: bool,
}

pub const DEFAULT_TRIALS: u64 = 20_000;
pub const DEFAULT_SEED: u64 = 1;

fn grid(sigmas: &[f64], lambdas: &[f64]) -> Vec<Point> {
    config::cartesian(&[
        (Param::Sigma, sigmas.to_vec()),
        (Param::LambdaP, lambdas.to_vec()),
    ])
}

fn default_sweep(experiment: Experiment) -> (Vec<Param>, Vec<Point>) {
    let coverage_grid = || grid(&[10.0, 25.0, 50.0, 100.0], &[10e-6, 20e-6, 40e-6]);
    match experiment {
        Experiment::CoverageVsSigma | Experiment::ValidateBounds => {
            (vec![Param::Sigma, Param::LambdaP], coverage_grid())
        }
        Experiment::OffloadVsBeta => (
            vec![Param::Beta],
            (0..=6)
                .map(|i| vec![(Param::Beta, 0.25 * i as f64)])
                .collect(),
        ),
        Experiment::PolicyHistogram => (
            vec![Param::Sigma, Param::LambdaP],
            vec![
                vec![(Param::Sigma, 10.0), (Param::LambdaP, 20e-6)],
                vec![(Param::Sigma, 100.0), (Param::LambdaP, 50e-6)],
            ],
        ),
        Experiment::CustomSweep => (Vec::new(), vec![Vec::new()]),
    }
}

impl ExperimentSpec {
    /// Default operating point with the experiment's default sweep.
    pub fn defaults(experiment: Experiment) -> Self {
        let (sweep_params, sweep) = default_sweep(experiment);
        ExperimentSpec {
            experiment,
            network: NetworkConfig::reference(),
            library: ContentLibrary::reference(),
            sweep_params,
            sweep,
            trials: DEFAULT_TRIALS,
            seed: DEFAULT_SEED,
            quadrature: QuadratureSpec::default(),
            caching_probability: 1.0,
            output: None,
            format: None,
            sweep_is_default: true,
        }
    }

    /// Switches experiment; a sweep that was not configured explicitly
    /// follows the new experiment's default.
    pub fn with_experiment(mut self, experiment: Experiment) -> Self {
        self.experiment = experiment;
        if self.sweep_is_default {
            (self.sweep_params, self.sweep) = default_sweep(experiment);
        }
        self
    }

    pub(crate) fn set_sweep(&mut self, params: Vec<Param>, points: Vec<Point>) {
        self.sweep_params = params;
        self.sweep = points;
        self.sweep_is_default = false;
    }

    /// Network and library at one sweep point.
    pub fn point_config(
        &self,
        point: &[(Param, f64)],
    ) -> Result<(NetworkConfig, ContentLibrary), String> {
        let mut cfg = self.network;
        let mut lib = (
            self.library.n_files(),
            self.library.beta(),
            self.library.cache_size(),
        );
        for &(param, value) in point {
            (cfg, lib) = config::apply(param, value, cfg, lib)?;
        }
        let library = ContentLibrary::new(lib.0, lib.1, lib.2).map_err(|e| e.to_string())?;
        Ok((cfg, library))
    }

    /// Checks the settings that are not enforced by the field types.
    pub fn validate(&self) -> Result<(), String> {
        if self.trials != 0 && self.trials < MIN_TRIALS {
            return Err(format!(
                "trials must be 0 (no simulation) or at least {MIN_TRIALS}, got {}",
                self.trials
            ));
        }
        if !(0.0..=1.0).contains(&self.caching_probability) {
            return Err(format!(
                "caching_probability must lie in [0, 1], got {}",
                self.caching_probability
            ));
        }
        if self.sweep.is_empty() {
            return Err("the sweep has no points".into());
        }
        for point in &self.sweep {
            self.point_config(point)
                .map_err(|e| format!("sweep point {}: {e}", describe(point)))?;
        }
        Ok(())
    }
}

fn describe(point: &[(Param, f64)]) -> String {
    let parts: Vec<String> = point
        .iter()
        .map(|(p, v)| format!("{}={}", p.key(), format_number(*v)))
        .collect();
    format!("[{}]", parts.join(", "))
}

/// One output record.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    /// Values of the table's parameter columns; `None` leaves a cell empty.
    pub parameters: Vec<Option<f64>>,
    pub metric: String,
    pub method: String,
    pub value: f64,
    pub ci_half_width: Option<f64>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    /// Parameter column names.
    pub parameters: Vec<String>,
    pub rows: Vec<ResultRow>,
}

pub const VALUE_COLUMNS: [&str; 6] = [
    "metric",
    "method",
    "value",
    "ci_half_width",
    "trials",
    "seed",
];

impl ResultTable {
    /// Every column, parameters first.
    pub fn columns(&self) -> Vec<String> {
        self.parameters
            .iter()
            .cloned()
            .chain(VALUE_COLUMNS.iter().map(|s| s.to_string()))
            .collect()
    }
}
