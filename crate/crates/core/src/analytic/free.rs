//! Free flights: conditional Dirichlet densities and the Poisson-count
//! closed forms in dimensions 2 and 4.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::sampling::FlightParams;
use crate::specfun::{ln_gamma, reg_inc_beta, unit_sphere_area};

use super::DeficitDensity;

/// Cartesian density of the free flight with `n >= 1` deviations,
/// `p(x) = C (c²t² - |x|²)^(b - 1)` on `|x| < ct` with `b = n(d-h)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletDensity {
    params: FlightParams,
    n: u32,
    shape_b: f64,
    ln_coef: f64,
    coef: f64,
}

impl DirichletDensity {
    pub fn new(params: FlightParams, n: u32) -> Result<Self> {
        params.validate()?;
        if n == 0 {
            return Err(Error::domain(
                "the free law with n = 0 is singular (uniform on S_ct), not a density",
            ));
        }
        let d = params.dim();
        let alpha = params.ml_alpha();
        let shape_b = alpha * n as f64;
        let a = shape_b + 0.5 * d;
        let ln_coef = ln_gamma(a)
            - ln_gamma(shape_b)
            - 0.5 * d * PI.ln()
            - (2.0 * a - 2.0) * params.ct().ln();
        Ok(DirichletDensity {
            params,
            n,
            shape_b,
            ln_coef,
            coef: ln_coef.exp(),
        })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// Second Beta parameter `n(d-h)/2` of `D²/(ct)²`.
    pub fn shape_b(&self) -> f64 {
        self.shape_b
    }

    pub fn params(&self) -> &FlightParams {
        &self.params
    }

    /// Density at a point of norm `r`.
    pub fn at_radius(&self, r: f64) -> f64 {
        let ct = self.params.ct();
        self.at_deficit((ct - r) * (ct + r))
    }
}

impl DeficitDensity for DirichletDensity {
    fn at_deficit(&self, w: f64) -> f64 {
        if !(w > 0.0) {
            return 0.0;
        }
        if self.shape_b == 1.0 {
            self.coef
        } else {
            (self.ln_coef + (self.shape_b - 1.0) * w.ln()).exp()
        }
    }
}

/// Cartesian density at any `x` with `|x| = r`, given `n >= 1` deviations.
/// Zero for `r >= ct`.
pub fn free_density_dirichlet(r: f64, params: &FlightParams, n: u32) -> Result<f64> {
    if r < 0.0 || !r.is_finite() {
        return Err(Error::domain(format!("radius {r} must be >= 0")));
    }
    Ok(DirichletDensity::new(*params, n)?.at_radius(r))
}

/// Density of the distance `|X(t)|` given `n >= 1` deviations.
pub fn radial_free_density(r: f64, params: &FlightParams, n: u32) -> Result<f64> {
    let p = free_density_dirichlet(r, params, n)?;
    Ok(unit_sphere_area(params.d) * r.powi(params.d as i32 - 1) * p)
}

/// `P{|X(t)| <= r}` given `n >= 1` deviations: `I(r²/(ct)²; d/2, n(d-h)/2)`.
pub fn free_radial_cdf(r: f64, params: &FlightParams, n: u32) -> Result<f64> {
    let law = DirichletDensity::new(*params, n)?;
    let ct = params.ct();
    if r <= 0.0 {
        return Ok(0.0);
    }
    if r >= ct {
        return Ok(1.0);
    }
    reg_inc_beta((r / ct).powi(2), 0.5 * params.dim(), law.shape_b())
}

/// Closed-form free density under a homogeneous Poisson count, available for
/// `(d, h) = (2, 1)` and `(4, 2)`. The atom `e^{-λt}` on `S_ct` is separate.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonClosedForm {
    params: FlightParams,
    lambda: f64,
}

impl PoissonClosedForm {
    pub fn new(params: FlightParams, lambda: f64) -> Result<Self> {
        params.validate()?;
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::domain(format!("rate lambda = {lambda} must be > 0")));
        }
        match (params.d, params.h) {
            (2, 1) | (4, 2) => Ok(PoissonClosedForm { params, lambda }),
            (d, h) => Err(Error::domain(format!(
                "Poisson closed form exists only for (d, h) = (2, 1) or (4, 2), got ({d}, {h})"
            ))),
        }
    }

    pub fn atom_mass(&self) -> f64 {
        (-self.lambda * self.params.t).exp()
    }
}

impl DeficitDensity for PoissonClosedForm {
    fn at_deficit(&self, w: f64) -> f64 {
        if !(w > 0.0) {
            return 0.0;
        }
        let FlightParams { c, t, d, .. } = self.params;
        let l = self.lambda;
        if d == 2 {
            let s = w.sqrt();
            l * (-l * t + l / c * s).exp() / (2.0 * PI * c * s)
        } else {
            let k = l / (c * c * t);
            l / (c.powi(4) * t.powi(3) * PI * PI) * (-l * t + k * w).exp() * (2.0 + k * w)
        }
    }
}

/// Absolutely continuous part of the free density under a Poisson count at
/// a point of norm `r < ct`, for `(d, h)` in `{(2, 1), (4, 2)}`.
pub fn uncond_free_density_poisson(r: f64, params: &FlightParams, lambda: f64) -> Result<f64> {
    if r < 0.0 || !r.is_finite() {
        return Err(Error::domain(format!("radius {r} must be >= 0")));
    }
    let law = PoissonClosedForm::new(*params, lambda)?;
    let ct = params.ct();
    Ok(law.at_deficit((ct - r) * (ct + r)))
}
