//! Random generation of flight ingredients: uniform directions, displacement
//! times on the simplex, and deviation counts.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::{gamma, ln_gamma, mittag_leffler};

/// The `(d, c, t, h)` tuple every law depends on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightParams {
    pub d: usize,
    pub c: f64,
    pub t: f64,
    pub h: u32,
}

impl FlightParams {
    pub fn new(d: usize, c: f64, t: f64, h: u32) -> Result<Self> {
        let p = FlightParams { d, c, t, h };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::domain(format!("speed c = {} must be > 0", self.c)));
        }
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(Error::domain(format!("horizon t = {} must be > 0", self.t)));
        }
        match self.h {
            1 if self.d >= 2 => Ok(()),
            2 if self.d >= 3 => Ok(()),
            1 | 2 => Err(Error::domain(format!(
                "dimension d = {} too small for h = {} (need d >= 2 for h = 1, d >= 3 for h = 2)",
                self.d, self.h
            ))),
            h => Err(Error::domain(format!(
                "Dirichlet variant h = {h} must be 1 or 2"
            ))),
        }
    }

    /// Radius `ct` of the free-flight support.
    pub fn ct(&self) -> f64 {
        self.c * self.t
    }

    pub fn dim(&self) -> f64 {
        self.d as f64
    }

    /// Common Dirichlet parameter `d/h - 1`.
    pub fn dirichlet_shape(&self) -> f64 {
        self.dim() / self.h as f64 - 1.0
    }

    /// `(d - h) / 2`, the Mittag-Leffler index of the weighted Poisson count.
    pub fn ml_alpha(&self) -> f64 {
        0.5 * (self.dim() - self.h as f64)
    }
}

/// Law of the displacement times `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepLaw {
    /// Dirichlet with all parameters `d/h - 1`.
    DirichletH,
    /// Uniform on the simplex.
    UniformSimplex,
}

impl StepLaw {
    pub fn shape(&self, params: &FlightParams) -> f64 {
        match self {
            StepLaw::DirichletH => params.dirichlet_shape(),
            StepLaw::UniformSimplex => 1.0,
        }
    }
}

/// Law of the number of deviations in `[0, t]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CountLaw {
    Fixed(u32),
    /// Weighted Poisson with Mittag-Leffler normalization.
    WeightedPoissonMl {
        lambda: f64,
    },
    /// Homogeneous Poisson process with rate `lambda`.
    Poisson {
        lambda: f64,
    },
}

impl CountLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CountLaw::Fixed(_) => Ok(()),
            CountLaw::WeightedPoissonMl { lambda } | CountLaw::Poisson { lambda } => {
                if lambda > 0.0 && lambda.is_finite() {
                    Ok(())
                } else {
                    Err(Error::domain(format!("rate lambda = {lambda} must be > 0")))
                }
            }
        }
    }
}

/// Seeded, reproducible stream of random bits. Owned by one worker at a time.
#[derive(Debug, Clone)]
pub struct RandomSource(ChaCha8Rng);

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Independent stream `k` derived from a base seed (`seed XOR k`).
    pub fn stream(seed: u64, k: u64) -> Self {
        RandomSource::new(seed ^ k)
    }

    /// Uniform variate in the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        loop {
            let u: f64 = self.0.random();
            if u > 0.0 {
                return u;
            }
        }
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// A unit vector of R^d.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitDirection(Vec<f64>);

impl UnitDirection {
    pub fn components(&self) -> &[f64] {
        &self.0
    }

    /// Hyperspherical angles `(theta_1, ..., theta_{d-2}, phi)` of this direction,
    /// in the convention `v_d = cos theta_1`, `v_{d-1} = sin theta_1 cos theta_2`,
    /// ..., `v_1 = sin theta_1 ... sin theta_{d-2} sin phi`.
    pub fn angles(&self) -> DirectionAngles {
        let v = &self.0;
        let d = v.len();
        let mut theta = Vec::with_capacity(d.saturating_sub(2));
        for j in 1..=d.saturating_sub(2) {
            // components v_1 .. v_{d-j}
            let rest: f64 = v[..d - j].iter().map(|c| c * c).sum::<f64>().sqrt();
            theta.push(rest.atan2(v[d - j]));
        }
        let mut phi = v[0].atan2(v[1]);
        if phi < 0.0 {
            phi += 2.0 * PI;
        }
        DirectionAngles { theta, phi }
    }
}

/// Hyperspherical coordinates of a direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionAngles {
    pub theta: Vec<f64>,
    pub phi: f64,
}

impl DirectionAngles {
    pub fn to_direction(&self) -> UnitDirection {
        let m = self.theta.len();
        let d = m + 2;
        let mut v = vec![0.0; d];
        let mut sin_prod = 1.0;
        for (j, th) in self.theta.iter().enumerate() {
            v[d - 1 - j] = sin_prod * th.cos();
            sin_prod *= th.sin();
        }
        v[1] = sin_prod * self.phi.cos();
        v[0] = sin_prod * self.phi.sin();
        UnitDirection(v)
    }
}

/// Uniform direction on the unit sphere of R^d (normalized Gaussian vector).
pub fn sample_direction(d: usize, rng: &mut RandomSource) -> Result<UnitDirection> {
    if d < 2 {
        return Err(Error::domain(format!("direction dimension {d} < 2")));
    }
    Ok(UnitDirection(draw_unit(d, rng)))
}

pub(crate) fn draw_unit(d: usize, rng: &mut RandomSource) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|c: &f64| c * c).sum::<f64>().sqrt();
        if n > 1e-150 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

/// Joint density of the hyperspherical angles of a uniform direction.
pub fn direction_density(angles: &DirectionAngles, d: usize) -> f64 {
    let h = 0.5 * d as f64;
    let norm = gamma(h) / (2.0 * PI.powf(h));
    let prod: f64 = angles
        .theta
        .iter()
        .enumerate()
        .map(|(j, th)| th.sin().powi((d - 2 - j) as i32))
        .product();
    norm * prod
}

/// Displacement times `tau_1..tau_{n+1}`, positive and summing to `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementTimes(Vec<f64>);

impl DisplacementTimes {
    pub fn tau(&self) -> &[f64] {
        &self.0
    }

    pub fn deviations(&self) -> usize {
        self.0.len() - 1
    }
}

/// Draws displacement times from a symmetric Dirichlet law scaled by `t`.
#[derive(Debug, Clone)]
pub struct DisplacementSampler {
    gamma: Gamma<f64>,
    t: f64,
}

impl DisplacementSampler {
    pub fn new(params: &FlightParams, law: StepLaw) -> Result<Self> {
        let shape = law.shape(params);
        let gamma = Gamma::new(shape, 1.0)
            .map_err(|e| Error::domain(format!("gamma shape {shape}: {e}")))?;
        Ok(DisplacementSampler { gamma, t: params.t })
    }

    pub fn sample(&self, n: usize, rng: &mut RandomSource) -> DisplacementTimes {
        if n == 0 {
            return DisplacementTimes(vec![self.t]);
        }
        loop {
            let g: Vec<f64> = (0..=n).map(|_| self.gamma.sample(rng)).collect();
            let s: f64 = g.iter().sum();
            if s > 0.0 && g.iter().all(|&x| x > 0.0) {
                let mut tau: Vec<f64> = g[..n].iter().map(|x| self.t * x / s).collect();
                let last = self.t - tau.iter().sum::<f64>();
                if last > 0.0 {
                    tau.push(last);
                    return DisplacementTimes(tau);
                }
            }
        }
    }
}

/// One draw of the displacement times for `n` deviations.
pub fn sample_displacements(
    n: usize,
    params: &FlightParams,
    law: StepLaw,
    rng: &mut RandomSource,
) -> Result<DisplacementTimes> {
    Ok(DisplacementSampler::new(params, law)?.sample(n, rng))
}

/// Probability that exactly `n` deviations occur in `[0, t]`.
pub fn count_pmf(n: u32, t: f64, law: CountLaw, params: &FlightParams) -> Result<f64> {
    law.validate()?;
    match law {
        CountLaw::Fixed(k) => Ok(if k == n { 1.0 } else { 0.0 }),
        CountLaw::Poisson { lambda } => {
            let m = lambda * t;
            let nf = n as f64;
            Ok((nf * m.ln() - m - ln_gamma(nf + 1.0)).exp())
        }
        CountLaw::WeightedPoissonMl { lambda } => {
            let norm = ml_normalizer(lambda * t, params)?;
            Ok(ml_weight(n, lambda * t, params) / norm)
        }
    }
}

/// `E_{(d-h)/2, d/2}(lambda t)`.
pub fn ml_normalizer(lambda_t: f64, params: &FlightParams) -> Result<f64> {
    mittag_leffler(params.ml_alpha(), 0.5 * params.dim(), lambda_t)
}

fn ml_weight(n: u32, lambda_t: f64, params: &FlightParams) -> f64 {
    let nf = n as f64;
    (nf * lambda_t.ln() - ln_gamma(params.ml_alpha() * nf + 0.5 * params.dim())).exp()
}

const COUNT_TAIL: f64 = 1e-12;
const COUNT_TABLE_MAX: usize = 100_000;

/// Inverse-CDF sampler for a count law, built once per `(law, t, d, h)`.
#[derive(Debug, Clone)]
pub struct CountSampler {
    fixed: Option<u32>,
    cdf: Vec<f64>,
}

impl CountSampler {
    pub fn new(t: f64, law: CountLaw, params: &FlightParams) -> Result<Self> {
        law.validate()?;
        if let CountLaw::Fixed(n) = law {
            return Ok(CountSampler {
                fixed: Some(n),
                cdf: Vec::new(),
            });
        }
        let mut cdf = Vec::new();
        let mut acc = 0.0;
        let mut prev = 0.0;
        for n in 0..COUNT_TABLE_MAX as u32 {
            let p = count_pmf(n, t, law, params)?;
            acc += p;
            cdf.push(acc);
            if acc >= 1.0 - COUNT_TAIL && p <= prev {
                return Ok(CountSampler { fixed: None, cdf });
            }
            prev = p;
        }
        Err(Error::precision(format!(
            "count table exceeded {COUNT_TABLE_MAX} entries before tail mass < {COUNT_TAIL}"
        )))
    }

    pub fn sample(&self, rng: &mut RandomSource) -> u32 {
        if let Some(n) = self.fixed {
            return n;
        }
        let u = rng.uniform();
        self.cdf.partition_point(|&c| c < u) as u32
    }

    /// Cumulative probabilities `P{N <= n}` of the tabulated range.
    pub fn table(&self) -> &[f64] {
        &self.cdf
    }
}

/// One draw of the deviation count.
pub fn sample_count(
    t: f64,
    law: CountLaw,
    params: &FlightParams,
    rng: &mut RandomSource,
) -> Result<u32> {
    if !(t > 0.0) {
        return Err(Error::domain(format!("time t = {t} must be > 0")));
    }
    Ok(CountSampler::new(t, law, params)?.sample(rng))
}
