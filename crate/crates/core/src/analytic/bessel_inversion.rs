//! Free density by numerical inversion of the characteristic function,
//! independent of the Dirichlet closed form.
//!
//! For a rotation-invariant law with characteristic function `Ψ(|ξ|)`,
//! `p(r) = (2π)^{-d/2} ∫_0^∞ Ψ(ρ) ρ^{d-1} J_ν(ρr)/(ρr)^ν dρ` with `ν = d/2 - 1`.
//! Given `n` deviations, `Ψ(ρ) = E[Π_k φ(cρτ_k)]` where
//! `φ(z) = Γ(d/2)(2/z)^ν J_ν(z)` is the characteristic function of one
//! uniform direction and `τ/t` is Dirichlet.
//!
//! Numerics:
//! - `Ψ` is built by stick-breaking, `Ψ_k(σ) = E[φ(σV) Ψ_{k-1}(σ(1-V))]` with
//!   `V ~ Beta(q, kq)`. Each expectation is a composite Gauss-Legendre sum in
//!   `θ` after `V = sin²θ`, which removes the endpoint singularities of the
//!   Beta weight. Intermediate `Ψ_k` are tabulated on a fine grid and
//!   interpolated with 8-point Lagrange stencils.
//! - The outer integral is damped by `exp(-ε²ρ²/2)`, which smooths the
//!   density at scale `ε`; two damping widths are combined by Richardson
//!   extrapolation to cancel the `O(ε²)` bias. `ε` is tied to the distance
//!   from `r` to the rim `ct`, so the density jump there stays invisible.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::par::map_indexed;
use crate::quad::gauss_legendre;
use crate::sampling::{FlightParams, StepLaw};
use crate::specfun::{bessel_j, gamma, ln_beta};

const MAX_DEVIATIONS: u32 = 3;
// damping width is (ct - r) / EPS_DIVISOR; the coarse width cuts the rim jump
// at EPS_DIVISOR standard deviations
const EPS_DIVISOR: f64 = 5.0;
// exp(-x²/2) < 1e-11 beyond x = 7
const DAMP_CUTOFF: f64 = 7.0;
const GL_ORDER: usize = 16;
// phase budget per Gauss-Legendre panel
const PANEL_PHASE: f64 = 20.0;
const TABLE_STEP: f64 = 0.1;
const STENCIL: usize = 8;

/// `φ(z) = Γ(d/2) (2/z)^ν J_ν(z)`, with `φ(0) = 1`.
fn unit_cf(d: usize, z: f64) -> Result<f64> {
    if z < 1e-4 {
        return Ok(1.0 - z * z / (2.0 * d as f64));
    }
    match d {
        2 => bessel_j(0.0, z),
        3 => Ok(z.sin() / z),
        4 => Ok(2.0 * bessel_j(1.0, z)? / z),
        _ => {
            let nu = 0.5 * d as f64 - 1.0;
            Ok(gamma(0.5 * d as f64) * (2.0 / z).powf(nu) * bessel_j(nu, z)?)
        }
    }
}

/// Uniformly spaced table of `Ψ_k`, interpolated locally.
#[derive(Debug, Clone)]
struct Table {
    values: Vec<f64>,
}

impl Table {
    // Ψ_k is even, so the stencil may reach below zero.
    fn eval(&self, x: f64) -> f64 {
        let pos = x / TABLE_STEP;
        let last = self.values.len() - 1;
        let j0 = ((pos.floor() as isize) - (STENCIL as isize / 2 - 1))
            .min((last + 1 - STENCIL) as isize);
        // barycentric Lagrange on equispaced nodes
        let mut num = 0.0;
        let mut den = 0.0;
        let mut binom = 1.0;
        for k in 0..STENCIL {
            let j = j0 + k as isize;
            let v = self.values[j.unsigned_abs()];
            let diff = pos - j as f64;
            if diff == 0.0 {
                return v;
            }
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let w = sign * binom / diff;
            num += w * v;
            den += w;
            binom = binom * (STENCIL - 1 - k) as f64 / (k + 1) as f64;
        }
        num / den
    }
}

/// Expectation of `g(V, 1-V)` for `V ~ Beta(a, b)` with enough panels to
/// resolve oscillation of angular frequency `omega` in `V`.
fn beta_expectation<G>(a: f64, b: f64, omega: f64, gl: &(Vec<f64>, Vec<f64>), g: G) -> Result<f64>
where
    G: Fn(f64, f64) -> Result<f64>,
{
    let panels = ((omega * 0.5 * PI / PANEL_PHASE).ceil() as usize).max(2);
    let width = 0.5 * PI / panels as f64;
    let norm = 2.0 / ln_beta(a, b).exp();
    let mut sum = 0.0;
    for m in 0..panels {
        let lo = m as f64 * width;
        for (x, w) in gl.0.iter().zip(&gl.1) {
            let th = lo + 0.5 * width * (x + 1.0);
            let (s, c) = th.sin_cos();
            let jac = s.powf(2.0 * a - 1.0) * c.powf(2.0 * b - 1.0);
            sum += w * jac * g(s * s, c * c)?;
        }
    }
    Ok(sum * 0.5 * width * norm)
}

/// Cached characteristic function and outer quadrature nodes for one
/// `(params, n, step law)`, valid for radii up to `r_max`.
#[derive(Debug, Clone)]
pub struct BesselInversion {
    params: FlightParams,
    r_max: f64,
    rho: Vec<f64>,
    weights: Vec<f64>,
    psi: Vec<f64>,
}

impl BesselInversion {
    pub fn new(params: FlightParams, n: u32, law: StepLaw, r_max: f64) -> Result<Self> {
        params.validate()?;
        if n == 0 || n > MAX_DEVIATIONS {
            return Err(Error::precision(format!(
                "Bessel inversion supports 1 <= n <= {MAX_DEVIATIONS}, got {n}"
            )));
        }
        let ct = params.ct();
        if !(r_max > 0.0 && r_max < ct) {
            return Err(Error::domain(format!(
                "r_max = {r_max} must lie in (0, ct)"
            )));
        }
        let d = params.d;
        let q = law.shape(&params);
        let gl = gauss_legendre(GL_ORDER);

        let eps_fine = (ct - r_max) / EPS_DIVISOR / 2.0;
        let rho_max = DAMP_CUTOFF / eps_fine;
        let sigma_max = ct * rho_max;

        // Ψ_1 .. Ψ_{n-1} tables
        let mut tables: Vec<Table> = Vec::new();
        let points = (sigma_max / TABLE_STEP).ceil() as usize + STENCIL + 1;
        for k in 1..n {
            let prev = tables.last();
            let kq = k as f64 * q;
            let vals = map_indexed(points, |j| {
                let sigma = j as f64 * TABLE_STEP;
                beta_expectation(q, kq, 2.0 * sigma, &gl, |v, w| {
                    let tail = match prev {
                        None => unit_cf(d, sigma * w)?,
                        Some(t) => t.eval(sigma * w),
                    };
                    Ok(unit_cf(d, sigma * v)? * tail)
                })
            });
            let values = vals.into_iter().collect::<Result<Vec<_>>>()?;
            tables.push(Table { values });
        }

        // outer nodes: panels of width π/ct
        let panel = PI / ct;
        let panels = (rho_max / panel).ceil() as usize;
        let mut rho = Vec::with_capacity(panels * GL_ORDER);
        let mut weights = Vec::with_capacity(panels * GL_ORDER);
        for m in 0..panels {
            let lo = m as f64 * panel;
            for (x, w) in gl.0.iter().zip(&gl.1) {
                rho.push(lo + 0.5 * panel * (x + 1.0));
                weights.push(0.5 * panel * w);
            }
        }
        let nq = n as f64 * q;
        let last = tables.last();
        let psi = map_indexed(rho.len(), |i| {
            let sigma = ct * rho[i];
            beta_expectation(q, nq, 2.0 * sigma, &gl, |v, w| {
                let tail = match last {
                    None => unit_cf(d, sigma * w)?,
                    Some(t) => t.eval(sigma * w),
                };
                Ok(unit_cf(d, sigma * v)? * tail)
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

        Ok(BesselInversion {
            params,
            r_max,
            rho,
            weights,
            psi,
        })
    }

    /// Characteristic function `Ψ(ρ)` at the cached outer nodes.
    pub fn characteristic(&self) -> (&[f64], &[f64]) {
        (&self.rho, &self.psi)
    }

    fn damped(&self, r: f64, eps: f64) -> Result<f64> {
        let d = self.params.d;
        let cut = DAMP_CUTOFF / eps;
        let mut sum = 0.0;
        for ((&rho, &w), &psi) in self.rho.iter().zip(&self.weights).zip(&self.psi) {
            if rho > cut {
                break;
            }
            let damp = (-0.5 * (eps * rho).powi(2)).exp();
            sum += w * psi * rho.powi(d as i32 - 1) * unit_cf(d, rho * r)? * damp;
        }
        // J_ν(z)/z^ν = φ(z) / (2^ν Γ(ν+1))
        let nu = 0.5 * d as f64 - 1.0;
        Ok(sum / ((2.0 * PI).powf(0.5 * d as f64) * 2f64.powf(nu) * gamma(nu + 1.0)))
    }

    /// Density at a point of norm `r`, `0 < r <= r_max`.
    pub fn density(&self, r: f64) -> Result<f64> {
        if !(r > 0.0 && r <= self.r_max) {
            return Err(Error::domain(format!(
                "radius {r} outside (0, {}]",
                self.r_max
            )));
        }
        let eps = (self.params.ct() - r) / EPS_DIVISOR;
        let coarse = self.damped(r, eps)?;
        let fine = self.damped(r, 0.5 * eps)?;
        Ok((4.0 * fine - coarse) / 3.0)
    }
}

/// Density of the free flight with `n` deviations at a point of norm `r`,
/// by inversion of its characteristic function. Supports `1 <= n <= 3`.
pub fn free_density_bessel(r: f64, params: &FlightParams, n: u32, law: StepLaw) -> Result<f64> {
    BesselInversion::new(*params, n, law, r)?.density(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cf_closed_forms() {
        for &z in &[0.0f64, 1e-6, 0.3, 5.0, 40.0] {
            let s = if z == 0.0 { 1.0 } else { z.sin() / z };
            assert!((unit_cf(3, z).unwrap() - s).abs() < 1e-12);
            let g = unit_cf(5, z).unwrap();
            let want = if z < 1e-3 {
                1.0 - z * z / 10.0
            } else {
                3.0 * (z.sin() - z * z.cos()) / z.powi(3)
            };
            assert!((g - want).abs() < 1e-10, "z={z}: {g} vs {want}");
        }
    }

    #[test]
    fn table_interpolation_is_accurate() {
        let values: Vec<f64> = (0..400).map(|j| (j as f64 * TABLE_STEP).cos()).collect();
        let t = Table { values };
        for &x in &[0.01, 0.37, 5.55, 20.123, 39.5] {
            assert!((t.eval(x) - x.cos()).abs() < 1e-11, "x={x}");
        }
    }

    #[test]
    fn planar_one_step_cf() {
        // d = 2, uniform steps, n = 1: Ψ(ρ) = sin(ctρ)/(ctρ)
        let params = FlightParams::new(2, 1.0, 1.0, 1).unwrap();
        let inv = BesselInversion::new(params, 1, StepLaw::DirichletH, 0.5).unwrap();
        let (rho, psi) = inv.characteristic();
        for i in (0..rho.len()).step_by(37) {
            let want = rho[i].sin() / rho[i];
            assert!(
                (psi[i] - want).abs() < 1e-12,
                "rho={}: {} vs {want}",
                rho[i],
                psi[i]
            );
        }
    }

    #[test]
    fn rejects_unsupported() {
        let params = FlightParams::new(3, 1.0, 1.0, 1).unwrap();
        assert!(matches!(
            free_density_bessel(0.5, &params, 4, StepLaw::DirichletH),
            Err(Error::Precision(_))
        ));
        assert!(free_density_bessel(1.0, &params, 1, StepLaw::DirichletH).is_err());
    }
}
