use std::cell::RefCell;
use std::f64::consts::PI;

use rayon::prelude::*;

use super::quadrature::{integrate_with_breakpoints, Tolerance};
use super::special::{ppp_gamma_product, rician_pdf_unchecked};
use super::{Method, QuadratureSpec};
use crate::error::{invalid, Error, Result};
use crate::model::NetworkConfig;

/// Rician mass beyond this many σ from the center distance is below 1e-31.
const RICIAN_SPAN_SIGMAS: f64 = 12.0;
/// Ratio between the end of the log-scale outer integral and its start.
const LOG_REGION_SPAN: f64 = 1e3;

/// Laplace transform of the aggregate interference, as a function of the
/// product `t·γ_d` (equal to `θ / s` for a serving-signal level `s`).
pub trait LaplaceTransform: Sync {
    fn laplace(&self, t_gamma: f64) -> f64;
    fn method(&self) -> Method;
}

/// Closed-form PPP bound `exp(−π n̄ λ_p (tγ_d)^{2/α} Γ(1+2/α) Γ(1−2/α))`.
#[derive(Debug, Clone, Copy)]
pub struct PppBound {
    coeff: f64,
    delta: f64,
}

impl PppBound {
    pub fn new(cfg: &NetworkConfig) -> Result<Self> {
        let coeff = PI * cfg.n_bar() * cfg.lambda_p() * ppp_gamma_product(cfg.alpha())?;
        Ok(PppBound {
            coeff,
            delta: 2.0 / cfg.alpha(),
        })
    }

    /// The exponent `π n̄ λ_p Γ(1+2/α) Γ(1−2/α)` multiplying `(tγ_d)^{2/α}`.
    pub fn coefficient(&self) -> f64 {
        self.coeff
    }
}

impl LaplaceTransform for PppBound {
    fn laplace(&self, t_gamma: f64) -> f64 {
        if t_gamma <= 0.0 {
            return 1.0;
        }
        (-self.coeff * t_gamma.powf(self.delta)).exp()
    }
    fn method(&self) -> Method {
        Method::PppBound
    }
}

pub fn laplace_ppp_bound(t_gamma: f64, cfg: &NetworkConfig) -> Result<f64> {
    check_t_gamma(t_gamma)?;
    Ok(PppBound::new(cfg)?.laplace(t_gamma))
}

fn check_t_gamma(t_gamma: f64) -> Result<()> {
    if t_gamma.is_finite() && t_gamma > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!(
            "t·γ_d must be finite and > 0, got {t_gamma}"
        )))
    }
}

/// `ζ(v, t) = ∫ tγ_d / (u^α + tγ_d) · Rice(u; v, σ) du`: the probability-weighted
/// interference kernel of one device whose cluster center sits at distance `v`.
pub fn zeta_kernel(
    v: f64,
    t_gamma: f64,
    cfg: &NetworkConfig,
    quad: &QuadratureSpec,
) -> Result<f64> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(invalid(format!(
            "cluster distance must be finite and >= 0, got {v}"
        )));
    }
    check_t_gamma(t_gamma)?;
    zeta(v, t_gamma, cfg, quad)
}

fn zeta(v: f64, t_gamma: f64, cfg: &NetworkConfig, quad: &QuadratureSpec) -> Result<f64> {
    let sigma = cfg.sigma();
    let alpha = cfg.alpha();
    let lo = (v - RICIAN_SPAN_SIGMAS * sigma).max(0.0);
    let hi = v + RICIAN_SPAN_SIGMAS * sigma;
    let u0 = t_gamma.powf(1.0 / alpha);
    let mut points = vec![lo];
    for p in [v, u0] {
        if p > lo && p < hi {
            points.push(p);
        }
    }
    points.push(hi);
    points.sort_by(f64::total_cmp);
    points.dedup();

    let integrand = |u: f64| {
        let kernel = 1.0 / (1.0 + (u / u0).powf(alpha));
        kernel * rician_pdf_unchecked(u, v, sigma)
    };
    let tol = Tolerance::new(quad.abs_tol * 1e-2, quad.rel_tol * 1e-2);
    let r = integrate_with_breakpoints(integrand, &points, tol)
        .map_err(|e| Error::Numerical(format!("zeta kernel at v={v}, tγ={t_gamma:e}: {e}")))?;
    Ok(r.value.clamp(0.0, 1.0))
}

/// Exponent `E` of `L_I = exp(−E)` and its estimated absolute error.
fn interference_exponent(
    t_gamma: f64,
    cfg: &NetworkConfig,
    quad: &QuadratureSpec,
) -> Result<(f64, f64)> {
    let alpha = cfg.alpha();
    let n_bar = cfg.n_bar();
    let sigma = cfg.sigma();
    let scale = 2.0 * PI * cfg.lambda_p();
    let u0 = t_gamma.powf(1.0 / alpha);

    let v1 = (quad.v_max_sigma_mult * sigma + 5.0 / (PI * cfg.lambda_p()).sqrt()).max(4.0 * u0);
    let v2 = LOG_REGION_SPAN * v1;

    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let blocked = |v: f64| -> f64 {
        match zeta(v, t_gamma, cfg, quad) {
            Ok(z) => -(-n_bar * z).exp_m1(),
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    };

    let tol = Tolerance::new(quad.abs_tol / scale, quad.rel_tol);
    let mut near_points = vec![0.0];
    if u0 < v1 {
        near_points.push(u0);
    }
    near_points.push(v1);
    let near = integrate_with_breakpoints(|v| blocked(v) * v, &near_points, tol);
    let far = integrate_with_breakpoints(
        |s: f64| {
            let v = s.exp();
            blocked(v) * v * v
        },
        &[v1.ln(), v2.ln()],
        tol,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let near = near?;
    let far = far?;

    // beyond v2 the cluster kernel is n̄ tγ/(v^α + tγ) to relative O((σ/v)²)
    let w = v2 / u0;
    let tail = n_bar
        * u0
        * u0
        * (w.powf(2.0 - alpha) / (alpha - 2.0) - w.powf(2.0 - 2.0 * alpha) / (2.0 * alpha - 2.0)
            + w.powf(2.0 - 3.0 * alpha) / (3.0 * alpha - 2.0));

    let exponent = scale * (near.value + far.value + tail);
    let error = scale * (near.abs_error + far.abs_error);
    Ok((exponent, error))
}

/// Exact conditional Laplace transform of the inter-cluster interference,
/// `exp(−2πλ_p ∫ (1 − e^{−n̄ ζ(v,t)}) v dv)`, by nested adaptive quadrature.
pub fn laplace_exact(t_gamma: f64, cfg: &NetworkConfig, quad: &QuadratureSpec) -> Result<f64> {
    check_t_gamma(t_gamma)?;
    quad.validate()?;
    let (e, _) = interference_exponent(t_gamma, cfg, quad)?;
    Ok((-e).exp())
}

/// Tabulated exact Laplace transform.
///
/// `ln E(tγ)` is smooth and nearly linear in `ln tγ` (slope `2/α` at both
/// ends), so it is sampled on a uniform log grid and interpolated with
/// four-point Lagrange polynomials. Outside the grid the exponent follows
/// the `(tγ)^{2/α}` power law of its end points.
#[derive(Debug, Clone)]
pub struct ExactLaplace {
    x0: f64,
    step: f64,
    log_exponent: Vec<f64>,
    delta: f64,
    max_error: f64,
}

impl ExactLaplace {
    /// Grid spacing in `ln tγ`.
    pub const STEP: f64 = 0.2;
    /// Range of the PPP exponent covered by the grid.
    const PPP_EXPONENT_RANGE: (f64, f64) = (1e-9, 1e3);

    pub fn build(cfg: &NetworkConfig, quad: &QuadratureSpec) -> Result<Self> {
        quad.validate()?;
        let ppp = PppBound::new(cfg)?;
        let half_alpha = cfg.alpha() / 2.0;
        let (a_lo, a_hi) = Self::PPP_EXPONENT_RANGE;
        let x_lo = half_alpha * (a_lo / ppp.coefficient()).ln();
        let x_hi = half_alpha * (a_hi / ppp.coefficient()).ln();
        let n = ((x_hi - x_lo) / Self::STEP).ceil() as usize + 1;

        let values: Vec<(f64, f64)> = (0..n)
            .into_par_iter()
            .map(|i| interference_exponent((x_lo + i as f64 * Self::STEP).exp(), cfg, quad))
            .collect::<Result<_>>()?;
        let mut log_exponent = Vec::with_capacity(n);
        let mut max_error: f64 = 0.0;
        for (e, err) in values {
            if !(e > 0.0) {
                return Err(Error::Numerical(format!(
                    "non-positive interference exponent {e} while tabulating"
                )));
            }
            log_exponent.push(e.ln());
            max_error = max_error.max(err);
        }
        Ok(ExactLaplace {
            x0: x_lo,
            step: Self::STEP,
            log_exponent,
            delta: 2.0 / cfg.alpha(),
            max_error,
        })
    }

    /// Largest quadrature error estimate among the tabulated exponents.
    pub fn max_error(&self) -> f64 {
        self.max_error
    }

    /// Interference exponent `E` with `L_I = exp(−E)`.
    pub fn exponent(&self, t_gamma: f64) -> f64 {
        if t_gamma <= 0.0 {
            return 0.0;
        }
        let x = t_gamma.ln();
        let last = self.log_exponent.len() - 1;
        let x_end = self.x0 + last as f64 * self.step;
        let y = if x <= self.x0 {
            self.log_exponent[0] + self.delta * (x - self.x0)
        } else if x >= x_end {
            self.log_exponent[last] + self.delta * (x - x_end)
        } else {
            let pos = (x - self.x0) / self.step;
            let i = (pos.floor() as usize).clamp(1, last - 2) - 1;
            let t = pos - i as f64;
            let y = &self.log_exponent[i..i + 4];
            // Lagrange basis on nodes 0, 1, 2, 3
            let l0 = -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0;
            let l1 = t * (t - 2.0) * (t - 3.0) / 2.0;
            let l2 = -t * (t - 1.0) * (t - 3.0) / 2.0;
            let l3 = t * (t - 1.0) * (t - 2.0) / 6.0;
            l0 * y[0] + l1 * y[1] + l2 * y[2] + l3 * y[3]
        };
        y.exp()
    }
}

impl LaplaceTransform for ExactLaplace {
    fn laplace(&self, t_gamma: f64) -> f64 {
        (-self.exponent(t_gamma)).exp()
    }
    fn method(&self) -> Method {
        Method::ExactTcp
    }
}
