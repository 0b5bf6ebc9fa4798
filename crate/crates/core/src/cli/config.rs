//! TOML experiment configuration.
//!
//! ```toml
//! experiment = "coverage-vs-sigma"
//! seed = 7
//! trials = 50000
//!
//! [network]
//! sigma = "50 m"
//! lambda_p = "40 per km2"
//! theta = "0 dB"
//!
//! [library]
//! beta = 0.5
//!
//! [sweep]
//! sigma = ["10 m", "25 m", "50 m", "100 m"]
//! lambda_p = ["10 per km2", "20 per km2", "40 per km2"]
//! ```
//!
//! Bare numbers are SI (metres, devices per m², linear ratios). Unset keys
//! keep their defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::Spanned;

use super::{Experiment, ExperimentSpec, Param, Point};
use crate::model::{db_to_linear, ContentLibrary, NetworkConfig};

/// A configuration problem, with the 1-based line it refers to when known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: Option<PathBuf>,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = &self.path {
            write!(f, "{}", p.display())?;
            if let Some(l) = self.line {
                write!(f, ":{l}")?;
            }
            write!(f, ": ")?;
        } else if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Quantity {
    Int(i64),
    Float(f64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<Spanned<String>>,
    seed: Option<Spanned<i64>>,
    trials: Option<Spanned<i64>>,
    output: Option<String>,
    format: Option<Spanned<String>>,
    caching_probability: Option<Spanned<Quantity>>,
    network: Option<RawNetwork>,
    library: Option<RawLibrary>,
    sweep: Option<BTreeMap<String, Spanned<Vec<Spanned<Quantity>>>>>,
    quadrature: Option<RawQuadrature>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    sigma: Option<Spanned<Quantity>>,
    lambda_p: Option<Spanned<Quantity>>,
    n_bar: Option<Spanned<Quantity>>,
    alpha: Option<Spanned<Quantity>>,
    theta: Option<Spanned<Quantity>>,
    gamma_d: Option<Spanned<Quantity>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLibrary {
    n_files: Option<Spanned<Quantity>>,
    beta: Option<Spanned<Quantity>>,
    cache_size: Option<Spanned<Quantity>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuadrature {
    rel_tol: Option<Spanned<f64>>,
    abs_tol: Option<Spanned<f64>>,
    v_max_sigma_mult: Option<Spanned<f64>>,
    k_max_tail_mass: Option<Spanned<f64>>,
    mc_integration_samples: Option<Spanned<i64>>,
    integration_seed: Option<Spanned<i64>>,
}

struct Source<'a> {
    text: &'a str,
    path: Option<&'a Path>,
}

impl Source<'_> {
    fn line_of(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())]
            .matches('\n')
            .count()
            + 1
    }

    fn error(&self, span: Option<Range<usize>>, message: impl Into<String>) -> ConfigError {
        ConfigError {
            path: self.path.map(Path::to_path_buf),
            line: span.map(|s| self.line_of(s.start)),
            message: message.into(),
        }
    }
}

/// Splits `"40 per km2"` into `(40.0, "per km2")`.
fn split_number(text: &str) -> Option<(f64, &str)> {
    let text = text.trim();
    let end = text
        .char_indices()
        .find(|&(i, ch)| {
            !(ch.is_ascii_digit()
                || ch == '.'
                || ch == '+'
                || ch == '-'
                || ((ch == 'e' || ch == 'E') && i > 0))
        })
        .map_or(text.len(), |(i, _)| i);
    // a trailing exponent marker belongs to the unit, not the number
    let mut end = end;
    while end > 0 && !text[..end].ends_with(|c: char| c.is_ascii_digit() || c == '.') {
        end -= 1;
    }
    let value = text[..end].parse().ok()?;
    Some((value, text[end..].trim()))
}

fn normalize_unit(unit: &str) -> String {
    unit.to_ascii_lowercase()
        .replace("per ", "/")
        .replace("^", "")
        .replace('²', "2")
        .split_whitespace()
        .collect()
}

/// Converts a quantity for `param` to SI.
fn to_si(param: Param, q: &Quantity) -> Result<f64, String> {
    let (value, unit) = match q {
        Quantity::Int(i) => (*i as f64, String::new()),
        Quantity::Float(f) => (*f, String::new()),
        Quantity::Text(t) => {
            let (v, u) =
                split_number(t).ok_or_else(|| format!("cannot read a number from {t:?}"))?;
            (v, normalize_unit(u))
        }
    };
    let scale = match (param, unit.as_str()) {
        (_, "") => return Ok(value),
        (Param::Sigma, "m") => 1.0,
        (Param::Sigma, "km") => 1e3,
        (Param::LambdaP, "/m2") => 1.0,
        (Param::LambdaP, "/km2") => 1e-6,
        (Param::Theta | Param::GammaD, "db") => return Ok(db_to_linear(value)),
        _ => {
            return Err(format!(
                "unit {unit:?} is not accepted for {}; {}",
                param.key(),
                param.unit_hint()
            ))
        }
    };
    Ok(value * scale)
}

fn integer(param: Param, v: f64) -> Result<usize, String> {
    if v >= 0.0 && v == v.floor() && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(format!(
            "{} must be a non-negative integer, got {v}",
            param.key()
        ))
    }
}

/// Applies one parameter value to the base configuration.
pub(crate) fn apply(
    param: Param,
    value: f64,
    cfg: NetworkConfig,
    lib: (usize, f64, usize),
) -> Result<(NetworkConfig, (usize, f64, usize)), String> {
    let (n_files, beta, cache) = lib;
    let e = |r: crate::Result<NetworkConfig>| r.map_err(|e| e.to_string());
    Ok(match param {
        Param::Sigma => (e(cfg.with_sigma(value))?, lib),
        Param::LambdaP => (e(cfg.with_lambda_p(value))?, lib),
        Param::NBar => (e(cfg.with_n_bar(value))?, lib),
        Param::Alpha => (e(cfg.with_alpha(value))?, lib),
        Param::Theta => (e(cfg.with_theta(value))?, lib),
        Param::GammaD => (e(cfg.with_gamma_d(value))?, lib),
        Param::Beta => (cfg, (n_files, value, cache)),
        Param::NFiles => (cfg, (integer(param, value)?, beta, cache)),
        Param::CacheSize => (cfg, (n_files, beta, integer(param, value)?)),
    })
}

fn positive_u64(src: &Source, v: &Spanned<i64>, name: &str) -> Result<u64, ConfigError> {
    u64::try_from(*v.get_ref())
        .map_err(|_| src.error(Some(v.span()), format!("{name} must be non-negative")))
}

/// Reads an experiment specification from TOML text.
pub fn parse_config(text: &str, path: Option<&Path>) -> Result<ExperimentSpec, ConfigError> {
    let src = Source { text, path };
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| src.line_of(s.start));
        ConfigError {
            path: path.map(Path::to_path_buf),
            line,
            message: e.message().trim().to_string(),
        }
    })?;

    let experiment = match &raw.experiment {
        Some(s) => s
            .get_ref()
            .parse::<Experiment>()
            .map_err(|m| src.error(Some(s.span()), m))?,
        None => Experiment::CoverageVsSigma,
    };
    let mut spec = ExperimentSpec::defaults(experiment);

    if let Some(s) = &raw.seed {
        spec.seed = positive_u64(&src, s, "seed")?;
    }
    if let Some(t) = &raw.trials {
        spec.trials = positive_u64(&src, t, "trials")?;
    }
    spec.output = raw.output.map(PathBuf::from);
    if let Some(f) = &raw.format {
        spec.format = Some(
            f.get_ref()
                .parse()
                .map_err(|m| src.error(Some(f.span()), m))?,
        );
    }
    if let Some(c) = &raw.caching_probability {
        let v = match c.get_ref() {
            Quantity::Int(i) => *i as f64,
            Quantity::Float(f) => *f,
            Quantity::Text(_) => {
                return Err(src.error(Some(c.span()), "caching_probability must be a number"))
            }
        };
        spec.caching_probability = v;
    }

    let mut cfg = spec.network;
    let mut lib = (
        spec.library.n_files(),
        spec.library.beta(),
        spec.library.cache_size(),
    );
    let mut set = |param: Param, q: &Option<Spanned<Quantity>>| -> Result<(), ConfigError> {
        if let Some(q) = q {
            let err = |m: String| src.error(Some(q.span()), m);
            let v = to_si(param, q.get_ref()).map_err(err)?;
            (cfg, lib) = apply(param, v, cfg, lib).map_err(err)?;
        }
        Ok(())
    };
    let net = raw.network.unwrap_or_default();
    set(Param::Sigma, &net.sigma)?;
    set(Param::LambdaP, &net.lambda_p)?;
    set(Param::NBar, &net.n_bar)?;
    set(Param::Alpha, &net.alpha)?;
    set(Param::Theta, &net.theta)?;
    set(Param::GammaD, &net.gamma_d)?;
    let library = raw.library.unwrap_or_default();
    set(Param::NFiles, &library.n_files)?;
    set(Param::Beta, &library.beta)?;
    set(Param::CacheSize, &library.cache_size)?;
    spec.network = cfg;
    spec.library = ContentLibrary::new(lib.0, lib.1, lib.2)
        .map_err(|e| src.error(None, format!("[library]: {e}")))?;

    if let Some(q) = raw.quadrature {
        let mut quad = spec.quadrature;
        let mut last = None;
        let mut f = |slot: &mut f64, v: &Option<Spanned<f64>>| {
            if let Some(v) = v {
                *slot = *v.get_ref();
                last = Some(v.span());
            }
        };
        f(&mut quad.rel_tol, &q.rel_tol);
        f(&mut quad.abs_tol, &q.abs_tol);
        f(&mut quad.v_max_sigma_mult, &q.v_max_sigma_mult);
        f(&mut quad.k_max_tail_mass, &q.k_max_tail_mass);
        if let Some(n) = &q.mc_integration_samples {
            quad.mc_integration_samples = positive_u64(&src, n, "mc_integration_samples")? as usize;
        }
        if let Some(s) = &q.integration_seed {
            quad.integration_seed = positive_u64(&src, s, "integration_seed")?;
        }
        quad.validate()
            .map_err(|e| src.error(last, format!("[quadrature]: {e}")))?;
        spec.quadrature = quad;
    }

    if let Some(axes) = raw.sweep {
        let mut parsed: Vec<(Param, Vec<f64>)> = Vec::new();
        for (key, values) in &axes {
            let param: Param = key.parse().map_err(|m| src.error(Some(values.span()), m))?;
            if values.get_ref().is_empty() {
                return Err(src.error(
                    Some(values.span()),
                    format!("sweep over {key} has no values"),
                ));
            }
            let vals = values
                .get_ref()
                .iter()
                .map(|q| to_si(param, q.get_ref()).map_err(|m| src.error(Some(q.span()), m)))
                .collect::<Result<Vec<_>, _>>()?;
            parsed.push((param, vals));
        }
        parsed.sort_by_key(|(p, _)| *p);
        spec.set_sweep(parsed.iter().map(|(p, _)| *p).collect(), cartesian(&parsed));
    }

    spec.validate().map_err(|m| src.error(None, m))?;
    Ok(spec)
}

/// All combinations of the axis values, first axis outermost.
pub(crate) fn cartesian(axes: &[(Param, Vec<f64>)]) -> Vec<Point> {
    let mut points: Vec<Point> = vec![Vec::new()];
    for (param, values) in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push((*param, v));
                    q
                })
            })
            .collect();
    }
    points
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentSpec, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: Some(path.to_path_buf()),
        line: None,
        message: format!("cannot read configuration: {e}"),
    })?;
    parse_config(&text, Some(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_default_operating_point() {
        let spec = parse_config("", None).unwrap();
        assert_eq!(spec.network, NetworkConfig::reference());
        assert_eq!(spec.library, ContentLibrary::reference());
        assert_eq!(spec.experiment, Experiment::CoverageVsSigma);
        assert_eq!(spec.sweep.len(), 12);
    }

    #[test]
    fn units_convert_to_si() {
        let spec = parse_config(
            "[network]\nsigma = \"0.05 km\"\nlambda_p = \"40 per km2\"\ntheta = \"0 dB\"\ngamma_d = \"10 dB\"\n",
            None,
        )
        .unwrap();
        assert_eq!(spec.network.sigma(), 50.0);
        assert!((spec.network.lambda_p() - 4e-5).abs() < 1e-18);
        assert_eq!(spec.network.theta(), 1.0);
        assert!((spec.network.gamma_d() - 10.0).abs() < 1e-12);
        let spec = parse_config("[network]\nlambda_p = \"40 /km^2\"\nsigma = 25\n", None).unwrap();
        assert!((spec.network.lambda_p() - 4e-5).abs() < 1e-18);
        assert_eq!(spec.network.sigma(), 25.0);
    }

    #[test]
    fn number_splitting() {
        assert_eq!(split_number("40 per km2"), Some((40.0, "per km2")));
        assert_eq!(split_number("1e-5 per m2"), Some((1e-5, "per m2")));
        assert_eq!(split_number("-3dB"), Some((-3.0, "dB")));
        assert_eq!(split_number("km"), None);
    }

    #[test]
    fn errors_carry_the_line() {
        let text = "seed = 3\n[network]\nsigma = \"50 parsecs\"\n";
        let err = parse_config(text, Some(Path::new("exp.toml"))).unwrap_err();
        assert_eq!(err.line, Some(3));
        assert!(err.to_string().starts_with("exp.toml:3: "), "{err}");
        assert!(err.message.contains("sigma"));

        let err = parse_config("[network]\nsigmaa = 3\n", None).unwrap_err();
        assert!(err.line.is_some());
        assert!(err.message.contains("sigmaa"));

        let err = parse_config("\n\n[network]\nn_bar = -1\n", None).unwrap_err();
        assert_eq!(err.line, Some(4));
    }

    #[test]
    fn trials_must_be_zero_or_large() {
        assert!(parse_config("trials = 500\n", None).is_err());
        assert!(parse_config("trials = 0\n", None).is_ok());
        assert!(parse_config("trials = -1\n", None).is_err());
    }

    #[test]
    fn sweep_axes_follow_column_order() {
        let spec = parse_config(
            "experiment = \"custom-sweep\"\n[sweep]\nbeta = [0.5, 1.0]\nsigma = [\"10 m\", \"20 m\", \"30 m\"]\n",
            None,
        )
        .unwrap();
        assert_eq!(spec.sweep_params, [Param::Sigma, Param::Beta]);
        assert_eq!(spec.sweep.len(), 6);
        assert_eq!(
            spec.sweep[1],
            vec![(Param::Sigma, 10.0), (Param::Beta, 1.0)]
        );
    }

    #[test]
    fn invalid_sweep_values_are_rejected() {
        let text = "[sweep]\ncache_size = [100]\n";
        assert!(parse_config(text, None).is_err());
        let text = "[sweep]\nsigma = []\n";
        assert_eq!(parse_config(text, None).unwrap_err().line, Some(2));
    }

    #[test]
    fn cli_experiment_switch_keeps_explicit_sweeps() {
        let spec = parse_config("", None)
            .unwrap()
            .with_experiment(Experiment::OffloadVsBeta);
        assert_eq!(spec.sweep.len(), 7);
        let spec = parse_config("[sweep]\nbeta = [0.1]\n", None)
            .unwrap()
            .with_experiment(Experiment::OffloadVsBeta);
        assert_eq!(spec.sweep, vec![vec![(Param::Beta, 0.1)]]);
    }
}
