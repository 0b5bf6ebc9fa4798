//! Numerical evaluation of the D2D coverage probability and the offloading
//! gain.
//!
//! Two interference models are provided behind [`LaplaceTransform`]:
//! the exact inter-cluster Laplace transform of the Thomas cluster process
//! ([`ExactLaplace`]) and its closed-form PPP lower bound ([`PppBound`]).
//! Coverage conditioned on `k` cooperating caterers averages the transform
//! over i.i.d. Rayleigh(√2σ) serving distances; unconditional coverage mixes
//! the conditional values with the Poisson caterer-count law.

mod coverage;
mod laplace;
mod qmc;
pub mod quadrature;
pub mod special;

pub use coverage::{
    compute_z, coverage_content, coverage_given_k, coverage_k1_term, offloading_closed_form_k1,
    offloading_gain, poisson_cutoff, CoverageEvaluator,
};
pub use laplace::{
    laplace_exact, laplace_ppp_bound, zeta_kernel, ExactLaplace, LaplaceTransform, PppBound,
};
pub use special::{bessel_i0_scaled, gamma_function, ppp_gamma_product, rician_pdf};

use crate::error::{invalid, Result};
use std::fmt;

/// Accuracy controls for the nested integrals and the Poisson mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Outer-integral radius, in units of σ, past which the interference
    /// integrand is integrated on a logarithmic scale and closed by its
    /// power-law tail.
    pub v_max_sigma_mult: f64,
    /// Residual Poisson mass at which the caterer-count sum is cut.
    pub k_max_tail_mass: f64,
    /// Points used by the quasi-Monte Carlo serving-distance integral.
    pub mc_integration_samples: usize,
    /// Seed of the random shifts applied to the QMC point set.
    pub integration_seed: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            v_max_sigma_mult: 10.0,
            k_max_tail_mass: 1e-9,
            mc_integration_samples: 200_000,
            integration_seed: 0x5eed_c0ffee,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("v_max_sigma_mult", self.v_max_sigma_mult),
            ("k_max_tail_mass", self.k_max_tail_mass),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.k_max_tail_mass >= 1.0 {
            return Err(invalid("k_max_tail_mass must be below 1"));
        }
        if self.mc_integration_samples < 1000 {
            return Err(invalid(format!(
                "mc_integration_samples must be >= 1000, got {}",
                self.mc_integration_samples
            )));
        }
        Ok(())
    }
}

/// Interference model used to evaluate coverage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    ExactTcp,
    PppBound,
    ClosedFormK1,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::ExactTcp => "exact-tcp",
            Method::PppBound => "ppp-bound",
            Method::ClosedFormK1 => "closed-form-k1",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageResult {
    pub value: f64,
    pub method: Method,
    /// Estimated absolute numerical error (truncation plus integration).
    pub error: f64,
}
