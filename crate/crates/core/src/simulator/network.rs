//! Sampling of Thomas cluster process realizations seen from a typical
//! device at the origin.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};

use crate::error::{invalid, Result};
use crate::model::NetworkConfig;

pub type Point = [f64; 2];

/// One draw of the network around the typical device.
///
/// Cache contents and fading are not stored; they are drawn per request by
/// [`simulate_request`](super::simulate_request).
#[derive(Debug, Clone, PartialEq)]
pub struct TcpRealization {
    /// Centers of the remote clusters, in order of increasing distance.
    pub cluster_centers: Vec<Point>,
    /// Member offsets of each remote cluster relative to its center.
    pub members: Vec<Vec<Point>>,
    /// Center of the typical device's own cluster.
    pub representative_center: Point,
    /// Offsets of the other members of the representative cluster; the
    /// typical device itself is not included.
    pub representative_members: Vec<Point>,
}

impl TcpRealization {
    pub fn remote_device_count(&self) -> usize {
        self.members.iter().map(Vec::len).sum()
    }

    /// Aggregate interference at the origin with unit transmit power and
    /// fresh Rayleigh fading on every remote link.
    pub fn interference<R: Rng + ?Sized>(&self, alpha: f64, rng: &mut R) -> f64 {
        let mut total = 0.0;
        for (center, members) in self.cluster_centers.iter().zip(&self.members) {
            for y in members {
                let h: f64 = Exp1.sample(rng);
                total += h * path_gain(dist2(center, y), alpha);
            }
        }
        total
    }
}

/// Default simulation window: `20/√(πλ_p) + 10σ`.
pub fn default_r_sim(cfg: &NetworkConfig) -> f64 {
    20.0 / (PI * cfg.lambda_p()).sqrt() + 10.0 * cfg.sigma()
}

pub(crate) fn check_r_sim(r_sim: f64) -> Result<()> {
    if r_sim.is_finite() && r_sim > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!(
            "simulation radius must be finite and > 0, got {r_sim}"
        )))
    }
}

/// Per-configuration sampling state.
pub(crate) struct Sampler {
    members: Poisson<f64>,
    sigma: f64,
    lambda_p: f64,
    pub(crate) alpha: f64,
    pub(crate) r_sim: f64,
}

impl Sampler {
    pub(crate) fn new(cfg: &NetworkConfig, r_sim: f64) -> Result<Self> {
        check_r_sim(r_sim)?;
        let members = Poisson::new(cfg.n_bar())
            .map_err(|e| invalid(format!("mean cluster size {}: {e}", cfg.n_bar())))?;
        Ok(Sampler {
            members,
            sigma: cfg.sigma(),
            lambda_p: cfg.lambda_p(),
            alpha: cfg.alpha(),
            r_sim,
        })
    }

    fn offset<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let x: f64 = StandardNormal.sample(rng);
        let y: f64 = StandardNormal.sample(rng);
        [self.sigma * x, self.sigma * y]
    }

    fn cluster_size<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.members.sample(rng) as usize
    }

    /// Center of the typical device's cluster (a Gaussian offset from the
    /// origin, so at Rayleigh(σ) distance) and its other members.
    pub(crate) fn representative<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        members: &mut Vec<Point>,
    ) -> Point {
        let center = self.offset(rng);
        members.clear();
        let n = self.cluster_size(rng);
        members.extend((0..n).map(|_| self.offset(rng)));
        center
    }

    /// Visits the remote parents inside the window in order of increasing
    /// distance. The parent radii are generated from exponential increments
    /// of `λ_p π r²`, so enlarging the window extends a realization instead
    /// of redrawing it.
    pub(crate) fn for_each_remote<R, F>(&self, rng: &mut R, mut visit: F)
    where
        R: Rng + ?Sized,
        F: FnMut(Point, &mut R),
    {
        let rate = PI * self.lambda_p;
        let mut mass = 0.0;
        loop {
            let e: f64 = Exp1.sample(rng);
            mass += e;
            let r = (mass / rate).sqrt();
            if r > self.r_sim {
                break;
            }
            let phi = 2.0 * PI * rng.random::<f64>();
            visit([r * phi.cos(), r * phi.sin()], rng);
        }
    }

    /// Unit-power Rayleigh-faded interference from every device of every
    /// remote cluster, without storing the realization.
    pub(crate) fn remote_interference<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut total = 0.0;
        self.for_each_remote(rng, |center, rng| {
            let n = self.cluster_size(rng);
            for _ in 0..n {
                let y = self.offset(rng);
                let h: f64 = Exp1.sample(rng);
                total += h * path_gain(dist2(&center, &y), self.alpha);
            }
        });
        total
    }

    pub(crate) fn network<R: Rng + ?Sized>(&self, rng: &mut R) -> TcpRealization {
        let mut representative_members = Vec::new();
        let representative_center = self.representative(rng, &mut representative_members);
        let mut cluster_centers = Vec::new();
        let mut members = Vec::new();
        self.for_each_remote(rng, |center, rng| {
            let n = self.cluster_size(rng);
            cluster_centers.push(center);
            members.push((0..n).map(|_| self.offset(rng)).collect());
        });
        TcpRealization {
            cluster_centers,
            members,
            representative_center,
            representative_members,
        }
    }
}

/// Draws a network realization in a disc of radius `r_sim` around the
/// typical device.
pub fn sample_network<R: Rng + ?Sized>(
    cfg: &NetworkConfig,
    r_sim: f64,
    rng: &mut R,
) -> Result<TcpRealization> {
    Ok(Sampler::new(cfg, r_sim)?.network(rng))
}

#[inline]
pub(crate) fn dist2(center: &Point, offset: &Point) -> f64 {
    let x = center[0] + offset[0];
    let y = center[1] + offset[1];
    x * x + y * y
}

/// `d^{-α}` from the squared distance.
#[inline]
pub(crate) fn path_gain(d2: f64, alpha: f64) -> f64 {
    if alpha == 4.0 {
        1.0 / (d2 * d2)
    } else {
        d2.powf(-0.5 * alpha)
    }
}

/// Standard circularly-symmetric complex Gaussian, `E|G|² = 1`.
#[inline]
pub(crate) fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    (FRAC_1_SQRT_2 * re, FRAC_1_SQRT_2 * im)
}
