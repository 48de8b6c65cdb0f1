//! Flights reflected in a hyperplane `{<a, x> = b}`.
//!
//! Integrals over regions cut by the hyperplane `x_d = b` use polar
//! coordinates `(s, u)`, with `s = |x|` and `u = x_d / |x|` the cosine of the
//! angle to `e_d`. Under a uniform direction `u` has CDF
//! `F_u(v) = I((1+v)/2; (d-1)/2, (d-1)/2)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{Hyperplane, Point};
use crate::quad::{tanh_sinh_edges, QuadTolerance};
use crate::sampling::{CountLaw, FlightParams};
use crate::specfun::{reg_inc_beta, unit_sphere_area};

use super::free::DirichletDensity;
use super::uncond::{ml_exponential_closed_form, CountMixture};
use super::DeficitDensity;

/// Law of the hyperplane-reflected flight built on a free Cartesian density.
#[derive(Debug, Clone)]
pub struct HyperplaneLaw {
    params: FlightParams,
    plane: Hyperplane,
    density: Arc<dyn DeficitDensity>,
    singular_mass: f64,
    tol: QuadTolerance,
}

impl HyperplaneLaw {
    pub fn new(
        params: FlightParams,
        plane: Hyperplane,
        density: Arc<dyn DeficitDensity>,
        singular_mass: f64,
    ) -> Result<Self> {
        params.validate()?;
        if plane.dim() != params.d {
            return Err(Error::domain(format!(
                "hyperplane dimension {} differs from d = {}",
                plane.dim(),
                params.d
            )));
        }
        Ok(HyperplaneLaw {
            params,
            plane,
            density,
            singular_mass,
            tol: QuadTolerance::default(),
        })
    }

    /// Conditional law given `n >= 1` deviations.
    pub fn conditional(params: FlightParams, plane: Hyperplane, n: u32) -> Result<Self> {
        let dens = DirichletDensity::new(params, n)?;
        HyperplaneLaw::new(params, plane, Arc::new(dens), 0.0)
    }

    /// Unconditional law under a count law (series form).
    pub fn unconditional(params: FlightParams, plane: Hyperplane, law: CountLaw) -> Result<Self> {
        let mix = CountMixture::new(params, law)?;
        let atom = mix.atom_mass();
        HyperplaneLaw::new(params, plane, Arc::new(mix), atom)
    }

    /// Mass carried by flights without deviations (on `∂L ∪ ∂V`).
    pub fn singular_mass(&self) -> f64 {
        self.singular_mass
    }

    fn reaches_plane(&self) -> bool {
        self.params.t >= self.plane.first_contact_time(self.params.c)
    }

    /// Density `p(|x|) 1_L(x) + p(|ν(x)|) 1_V(x)` of the continuous part.
    pub fn density(&self, x: &Point) -> Result<f64> {
        if x.dim() != self.params.d {
            return Err(Error::domain("point dimension differs from d"));
        }
        let c2 = self.params.ct().powi(2);
        let free = self.density.at_deficit(c2 - x.norm_sq());
        if !self.reaches_plane() {
            return Ok(free);
        }
        let level = self.plane.level(x);
        let b = self.plane.offset();
        let mut v = 0.0;
        if level < b {
            v += free;
        }
        if level <= b {
            v += self
                .density
                .at_deficit(c2 - self.plane.reflected_norm_sq(x));
        }
        Ok(v)
    }

    fn axis_offset(&self) -> Result<f64> {
        let a = self.plane.normal();
        let d = a.len();
        if a[..d - 1].iter().any(|&v| v != 0.0) || a[d - 1] <= 0.0 {
            return Err(Error::domain(
                "polar reduction needs the normal to be a positive multiple of e_d",
            ));
        }
        let b = self.plane.offset() / a[d - 1];
        if !(b > 0.0) {
            return Err(Error::domain(format!(
                "hyperplane offset b = {b} must be > 0"
            )));
        }
        Ok(b)
    }

    fn u_cdf(&self, v: f64) -> f64 {
        if v <= -1.0 {
            return 0.0;
        }
        if v >= 1.0 {
            return 1.0;
        }
        let k = 0.5 * (self.params.dim() - 1.0);
        reg_inc_beta(0.5 * (1.0 + v), k, k).unwrap_or(f64::NAN)
    }

    // P{|X'| <= r} given the free radius s.
    fn conditional_cdf(&self, s: f64, r: f64, b: f64) -> f64 {
        let mut g = if s <= r { self.u_cdf(b / s) } else { 0.0 };
        if s > b {
            let lo = (b / s).max((s * s + 4.0 * b * b - r * r) / (4.0 * b * s));
            g += 1.0 - self.u_cdf(lo);
        }
        g
    }

    /// `P{|X'(t)| <= r}` for a hyperplane with normal along `e_d`.
    pub fn distance_cdf(&self, r: f64) -> Result<f64> {
        let ct = self.params.ct();
        if !(r > 0.0) {
            return Err(Error::domain(format!("radius {r} must be > 0")));
        }
        let b = self.axis_offset()?;
        if r >= ct {
            return Ok(1.0);
        }
        let d = self.params.d;
        let area = unit_sphere_area(d);
        if !self.reaches_plane() {
            // no reflection: plain radial law
            let f = |s: f64, _: f64, _: f64| {
                area * s.powi(d as i32 - 1) * self.density.at_deficit((ct - s) * (ct + s))
            };
            return tanh_sinh_edges(&f, 0.0, r, self.tol);
        }
        let mut cuts: Vec<f64> = [r, b, 2.0 * b - r, 2.0 * b + r, r - 2.0 * b]
            .into_iter()
            .filter(|&x| x > 0.0 && x < ct)
            .collect();
        cuts.push(0.0);
        cuts.push(ct);
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        cuts.dedup();
        let mut total = 0.0;
        for seg in cuts.windows(2) {
            let (lo, hi) = (seg[0], seg[1]);
            let at_rim = hi == ct;
            let f = |s: f64, _: f64, db: f64| {
                if s <= 0.0 {
                    return 0.0;
                }
                let w = if at_rim {
                    db * (ct + s)
                } else {
                    (ct - s) * (ct + s)
                };
                area * s.powi(d as i32 - 1)
                    * self.density.at_deficit(w)
                    * self.conditional_cdf(s, r, b)
            };
            total += tanh_sinh_edges(&f, lo, hi, self.tol)?;
        }
        total += self.singular_mass * self.conditional_cdf(ct, r, b);
        Ok(total.min(1.0))
    }

    /// Integral of the density over `L ∪ V` in polar coordinates, plus the
    /// singular mass.
    pub fn total_mass(&self) -> Result<f64> {
        let ct = self.params.ct();
        let b = self.axis_offset()?;
        let d = self.params.d;
        if !self.reaches_plane() {
            return Err(Error::domain("the flight does not reach the hyperplane"));
        }
        let sub_area = if d == 2 { 2.0 } else { unit_sphere_area(d - 1) };
        let full_area = unit_sphere_area(d);
        let wexp = 0.5 * (d as f64 - 3.0);
        let tol = self.tol;

        // L part: angular integral in closed form
        let mut cuts = vec![0.0, ct];
        if b < ct {
            cuts.insert(1, b);
        }
        let mut mass = 0.0;
        for seg in cuts.windows(2) {
            let at_rim = seg[1] == ct;
            let l_part = |s: f64, _: f64, db: f64| -> f64 {
                if s <= 0.0 {
                    return 0.0;
                }
                let w = if at_rim {
                    db * (ct + s)
                } else {
                    (ct - s) * (ct + s)
                };
                full_area * s.powi(d as i32 - 1) * self.density.at_deficit(w) * self.u_cdf(b / s)
            };
            mass += tanh_sinh_edges(&l_part, seg[0], seg[1], tol)?;
        }

        // V part: u runs over [max(-1, u0), min(1, b/s)], where
        // |ν(x)|² = s² + 4b² - 4bsu = c²t² at u = u0
        let v_inner = |s: f64| -> Result<f64> {
            let u0 = (s * s + 4.0 * b * b - ct * ct) / (4.0 * b * s);
            let lo = u0.max(-1.0);
            let hi = (b / s).min(1.0);
            if !(hi > lo) {
                return Ok(0.0);
            }
            let lo_is_rim = u0 > -1.0;
            let f = |u: f64, da: f64, db: f64| -> f64 {
                let deficit = if lo_is_rim {
                    4.0 * b * s * da
                } else {
                    4.0 * b * s * (u - u0)
                };
                let one_minus = if hi == 1.0 { db } else { 1.0 - u };
                let one_plus = if lo == -1.0 { da } else { 1.0 + u };
                (one_minus * one_plus).powf(wexp) * self.density.at_deficit(deficit)
            };
            tanh_sinh_edges(&f, lo, hi, tol)
        };
        let err = std::cell::Cell::new(None);
        let v_outer = |s: f64, _: f64, _: f64| -> f64 {
            if s <= 0.0 {
                return 0.0;
            }
            match v_inner(s) {
                Ok(v) => sub_area * s.powi(d as i32 - 1) * v,
                Err(e) => {
                    err.set(Some(e));
                    0.0
                }
            }
        };
        let mut cuts: Vec<f64> = [b, (ct - 2.0 * b).abs()]
            .into_iter()
            .filter(|&x| x > 0.0 && x < ct)
            .collect();
        cuts.push(0.0);
        cuts.push(ct);
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        cuts.dedup();
        for seg in cuts.windows(2) {
            mass += tanh_sinh_edges(&v_outer, seg[0], seg[1], tol)?;
        }
        if let Some(e) = err.take() {
            return Err(e);
        }
        Ok(mass + self.singular_mass)
    }
}

/// Density of the hyperplane-reflected flight given `n >= 1` deviations.
pub fn hyperplane_density(
    x: &Point,
    params: &FlightParams,
    n: u32,
    plane: &Hyperplane,
) -> Result<f64> {
    HyperplaneLaw::conditional(*params, plane.clone(), n)?.density(x)
}

/// Continuous density and singular mass of the hyperplane-reflected flight
/// under the weighted Poisson count.
pub fn hyperplane_uncond_density_ml(
    x: &Point,
    params: &FlightParams,
    lambda: f64,
    plane: &Hyperplane,
) -> Result<(f64, f64)> {
    let law = HyperplaneLaw::unconditional(
        *params,
        plane.clone(),
        CountLaw::WeightedPoissonMl { lambda },
    )?;
    Ok((law.density(x)?, law.singular_mass()))
}

/// Exponential closed form (`d - h = 2`) applied to both branches.
pub fn hyperplane_ml_closed_form(
    x: &Point,
    params: &FlightParams,
    lambda: f64,
    plane: &Hyperplane,
) -> Result<f64> {
    let level = plane.level(x);
    let b = plane.offset();
    let mut v = 0.0;
    if level < b {
        v += ml_exponential_closed_form(x.norm(), params, lambda, None)?;
    }
    if level <= b {
        let nu = plane.reflected_norm_sq(x).max(0.0).sqrt();
        v += ml_exponential_closed_form(nu, params, lambda, None)?;
    }
    Ok(v)
}

/// Total mass of the weighted-Poisson hyperplane law over `L ∪ V` plus its
/// singular mass, for the hyperplane `x_d = b`.
pub fn hyperplane_total_mass_ml(params: &FlightParams, lambda: f64, b: f64) -> Result<f64> {
    let plane = Hyperplane::axis(params.d, b)?;
    HyperplaneLaw::unconditional(*params, plane, CountLaw::WeightedPoissonMl { lambda })?
        .total_mass()
}

/// `P{|X'(t)| <= r}` given `n` deviations for the hyperplane `x_d = b`.
pub fn hyperplane_distance_cdf(r: f64, params: &FlightParams, n: u32, b: f64) -> Result<f64> {
    let plane = Hyperplane::axis(params.d, b)?;
    let law = if n == 0 {
        let mix = CountMixture::new(*params, CountLaw::Fixed(0))?;
        HyperplaneLaw::new(*params, plane, Arc::new(mix), 1.0)?
    } else {
        HyperplaneLaw::conditional(*params, plane, n)?
    };
    law.distance_cdf(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::free::free_radial_cdf;
    use std::f64::consts::PI;

    fn p(d: usize, c: f64, t: f64, h: u32) -> FlightParams {
        FlightParams::new(d, c, t, h).unwrap()
    }

    #[test]
    fn uniform_case_doubles_in_overlap() {
        let pp = p(2, 1.0, 1.0, 1);
        let plane = Hyperplane::axis(2, 0.5).unwrap();
        let x = Point::new(vec![0.0, 0.2]).unwrap();
        let v = hyperplane_density(&x, &pp, 2, &plane).unwrap();
        assert!((v - 2.0 / PI).abs() < 1e-14);
        let deep = Point::new(vec![0.0, -0.9]).unwrap();
        let v = hyperplane_density(&deep, &pp, 2, &plane).unwrap();
        assert!((v - 1.0 / PI).abs() < 1e-14);
        let beyond = Point::new(vec![0.0, 0.7]).unwrap();
        assert_eq!(hyperplane_density(&beyond, &pp, 2, &plane).unwrap(), 0.0);
    }

    #[test]
    fn cdf_below_first_case_is_free() {
        // V stays at distance 2b - ct from the origin
        let pp = p(3, 1.0, 1.0, 1);
        let b = 0.6;
        let r = 0.18;
        let a = hyperplane_distance_cdf(r, &pp, 2, b).unwrap();
        let f = free_radial_cdf(r, &pp, 2).unwrap();
        assert!((a - f).abs() < 1e-10, "{a} vs {f}");
    }

    #[test]
    fn cdf_tends_to_one() {
        for &(d, h, n) in &[(2, 1, 2), (3, 1, 1), (3, 2, 1), (4, 2, 2)] {
            let pp = p(d, 1.0, 1.0, h);
            let v = hyperplane_distance_cdf(1.0 - 1e-9, &pp, n, 0.6).unwrap();
            assert!((v - 1.0).abs() < 5e-4, "({d},{h},{n}): {v}");
        }
    }

    #[test]
    fn ml_total_mass() {
        let pp = p(3, 1.0, 1.0, 1);
        let m = hyperplane_total_mass_ml(&pp, 1.0, 0.4).unwrap();
        assert!((m - 1.0).abs() < 5e-4, "{m}");
    }
}
