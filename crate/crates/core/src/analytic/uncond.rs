//! Unconditional laws: mixtures of the conditional densities over the
//! deviation count, their closed forms, and the atoms carried by flights
//! without deviations.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sampling::{ml_normalizer, CountLaw, FlightParams};
use crate::specfun::{gamma, ln_gamma, mittag_leffler};

use super::free::{DirichletDensity, PoissonClosedForm};
use super::{DeficitDensity, RadialLaw};

const MAX_TERMS: u32 = 10_000;
const TERM_TOL: f64 = 1e-18;

/// `Σ_{n>=1} P{N = n} p_n(x)`: the absolutely continuous part of an
/// unconditional free density. The `n = 0` mass is reported by [`atom_mass`](CountMixture::atom_mass).
#[derive(Debug, Clone)]
pub struct CountMixture {
    terms: Vec<(f64, DirichletDensity)>,
    atom_mass: f64,
}

impl CountMixture {
    pub fn new(params: FlightParams, law: CountLaw) -> Result<Self> {
        params.validate()?;
        law.validate()?;
        let lt = match law {
            CountLaw::Fixed(n) => {
                return if n == 0 {
                    Ok(CountMixture {
                        terms: Vec::new(),
                        atom_mass: 1.0,
                    })
                } else {
                    Ok(CountMixture {
                        terms: vec![(1.0, DirichletDensity::new(params, n)?)],
                        atom_mass: 0.0,
                    })
                };
            }
            CountLaw::WeightedPoissonMl { lambda } | CountLaw::Poisson { lambda } => {
                lambda * params.t
            }
        };
        let alpha = params.ml_alpha();
        let half_d = 0.5 * params.dim();
        let ln_pmf: Box<dyn Fn(u32) -> f64> = match law {
            CountLaw::Poisson { .. } => {
                Box::new(move |n| n as f64 * lt.ln() - lt - ln_gamma(n as f64 + 1.0))
            }
            _ => {
                let ln_norm = ml_normalizer(lt, &params)?.ln();
                Box::new(move |n| {
                    n as f64 * lt.ln() - ln_gamma(alpha * n as f64 + half_d) - ln_norm
                })
            }
        };
        let atom_mass = ln_pmf(0).exp();
        let mut terms = Vec::new();
        let mut prev = atom_mass;
        for n in 1..=MAX_TERMS {
            let w = ln_pmf(n).exp();
            terms.push((w, DirichletDensity::new(params, n)?));
            // the peak of p_n grows like (n alpha)^{d/2}
            let bound = w * (1.0 + alpha * n as f64).powf(half_d);
            if w < prev && bound < TERM_TOL {
                return Ok(CountMixture { terms, atom_mass });
            }
            prev = w;
        }
        Err(Error::precision(format!(
            "count mixture did not reach its tail bound within {MAX_TERMS} terms"
        )))
    }

    /// Probability of no deviation.
    pub fn atom_mass(&self) -> f64 {
        self.atom_mass
    }

    pub fn terms(&self) -> usize {
        self.terms.len()
    }
}

impl DeficitDensity for CountMixture {
    fn at_deficit(&self, w: f64) -> f64 {
        self.terms
            .iter()
            .map(|(p, dens)| p * dens.at_deficit(w))
            .sum()
    }
}

/// Probability `1/(E_{(d-h)/2, d/2}(λt) Γ(d/2))` of no deviation under the
/// weighted Poisson count.
pub fn ml_atom_mass(params: &FlightParams, lambda: f64) -> Result<f64> {
    CountLaw::WeightedPoissonMl { lambda }.validate()?;
    Ok(1.0 / (ml_normalizer(lambda * params.t, params)? * gamma(0.5 * params.dim())))
}

/// Unconditional radial law of the free flight under `law` (series form).
pub fn uncond_free_law(params: &FlightParams, law: CountLaw) -> Result<RadialLaw> {
    let mix = CountMixture::new(*params, law)?;
    let atom = mix.atom_mass();
    Ok(RadialLaw::free(*params, Arc::new(mix), atom))
}

/// Unconditional radial law of the sphere-reflected flight under `law`
/// (series form); the atom sits at `R²/ct`.
pub fn uncond_reflected_law(
    params: &FlightParams,
    law: CountLaw,
    radius: f64,
) -> Result<RadialLaw> {
    let mix = CountMixture::new(*params, law)?;
    let atom = mix.atom_mass();
    RadialLaw::reflected(*params, Arc::new(mix), atom, radius)
}

/// Reflected flight under the weighted Poisson count.
pub fn uncond_reflected_density_ml(
    params: &FlightParams,
    lambda: f64,
    radius: f64,
) -> Result<RadialLaw> {
    uncond_reflected_law(params, CountLaw::WeightedPoissonMl { lambda }, radius)
}

/// Reflected flight under a Poisson count, from the closed-form free density
/// (`(d, h)` in `{(2, 1), (4, 2)}`); the atom `e^{-λt}` sits at `R²/ct`.
pub fn uncond_reflected_poisson(
    params: &FlightParams,
    lambda: f64,
    radius: f64,
) -> Result<RadialLaw> {
    let dens = PoissonClosedForm::new(*params, lambda)?;
    let atom = dens.atom_mass();
    RadialLaw::reflected(*params, Arc::new(dens), atom, radius)
}

/// Free flight under a Poisson count, closed form; the atom sits on `S_ct`.
pub fn uncond_free_poisson(params: &FlightParams, lambda: f64) -> Result<RadialLaw> {
    let dens = PoissonClosedForm::new(*params, lambda)?;
    let atom = dens.atom_mass();
    Ok(RadialLaw::free(*params, Arc::new(dens), atom))
}

/// Closed form of the continuous part of the free density under the
/// weighted Poisson count at a point of norm `r`:
/// `λt w^{α-1} E_{α,α}(λt w^α) / ((ct)^d π^{d/2} E_{α,d/2}(λt))`
/// with `w = 1 - r²/(ct)²` and `α = (d-h)/2`.
pub fn ml_closed_form_free(r: f64, params: &FlightParams, lambda: f64) -> Result<f64> {
    CountLaw::WeightedPoissonMl { lambda }.validate()?;
    let ct = params.ct();
    if r < 0.0 {
        return Err(Error::domain(format!("radius {r} must be >= 0")));
    }
    if r >= ct {
        return Ok(0.0);
    }
    let alpha = params.ml_alpha();
    let lt = lambda * params.t;
    let w = (ct - r) * (ct + r) / (ct * ct);
    let g = lt * w.powf(alpha);
    let num = lt * w.powf(alpha - 1.0) * mittag_leffler(alpha, alpha, g)?;
    let den = ct.powi(params.d as i32) * PI.powf(0.5 * params.dim()) * ml_normalizer(lt, params)?;
    Ok(num / den)
}

/// Reflected version of [`ml_closed_form_free`].
pub fn ml_closed_form_reflected(
    r: f64,
    params: &FlightParams,
    lambda: f64,
    radius: f64,
) -> Result<f64> {
    reflect_pointwise(r, params, radius, |x| {
        ml_closed_form_free(x, params, lambda)
    })
}

/// The exponential closed form for `d - h = 2`:
/// `λ / (c^d t^{d-1} π^{d/2} E_{1,d/2}(λt)) exp(λt (1 - r²/(ct)²))`.
pub fn ml_exponential_closed_form(
    r: f64,
    params: &FlightParams,
    lambda: f64,
    radius: Option<f64>,
) -> Result<f64> {
    if params.d - params.h as usize != 2 {
        return Err(Error::domain("the exponential closed form needs d - h = 2"));
    }
    CountLaw::WeightedPoissonMl { lambda }.validate()?;
    let FlightParams { c, t, d, .. } = *params;
    let ct = params.ct();
    let norm = mittag_leffler(1.0, 0.5 * params.dim(), lambda * t)?;
    let free = |x: f64| -> Result<f64> {
        if x >= ct {
            return Ok(0.0);
        }
        let w = (ct - x) * (ct + x) / (ct * ct);
        Ok(
            lambda / (c.powi(d as i32) * t.powi(d as i32 - 1) * PI.powf(0.5 * params.dim()) * norm)
                * (lambda * t * w).exp(),
        )
    };
    match radius {
        None => free(r),
        Some(rr) => reflect_pointwise(r, params, rr, free),
    }
}

fn reflect_pointwise<F>(r: f64, params: &FlightParams, radius: f64, free: F) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(radius > 0.0) {
        return Err(Error::domain(format!("sphere radius {radius} must be > 0")));
    }
    let ct = params.ct();
    if ct <= radius {
        return free(r);
    }
    if r <= 0.0 || r > radius {
        return Ok(0.0);
    }
    let mut v = if r < radius { free(r)? } else { 0.0 };
    if r > radius * radius / ct {
        v += (radius / r).powi(2 * params.d as i32) * free(radius * radius / r)?;
    }
    Ok(v)
}

/// `P{|X*(t)| <= r}` for the reflected planar flight (`d = 2, h = 1`) under a
/// Poisson count, atom at `R²/ct` included:
/// `1 - e^{-λt + (λ/c)√(c²t² - r²)} + e^{-λt + (λ/c)√(c²t² - R⁴/r²)} 1{R²/ct < r <= R}`.
pub fn cdf_distance_reflected_poisson_2d(
    r: f64,
    c: f64,
    t: f64,
    lambda: f64,
    radius: f64,
) -> Result<f64> {
    for (name, v) in [("c", c), ("t", t), ("lambda", lambda), ("R", radius)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::domain(format!("{name} = {v} must be > 0")));
        }
    }
    let ct = c * t;
    if ct <= radius {
        return Err(Error::domain(format!(
            "need t > R/c (ct = {ct}, R = {radius})"
        )));
    }
    if !(r > 0.0 && r <= radius) {
        return Err(Error::domain(format!("radius {r} outside (0, {radius}]")));
    }
    let lt = lambda * t;
    let mut f = 1.0 - (-lt + lambda / c * ((ct - r) * (ct + r)).sqrt()).exp();
    // the atom sits at R²/ct itself
    if r >= radius * radius / ct {
        let img = radius * radius / r;
        f += (-lt + lambda / c * ((ct - img) * (ct + img)).max(0.0).sqrt()).exp();
    }
    Ok(f.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(d: usize, c: f64, t: f64, h: u32) -> FlightParams {
        FlightParams::new(d, c, t, h).unwrap()
    }

    #[test]
    fn ml_atom_example() {
        let pp = p(3, 1.0, 1.0, 1);
        let want = 1.0 / (mittag_leffler(1.0, 1.5, 1.0).unwrap() * gamma(1.5));
        assert!((ml_atom_mass(&pp, 1.0).unwrap() - want).abs() < 1e-15);
        let mix = CountMixture::new(pp, CountLaw::WeightedPoissonMl { lambda: 1.0 }).unwrap();
        assert!((mix.atom_mass() - want).abs() < 1e-14);
    }

    #[test]
    fn series_matches_general_closed_form() {
        for &(d, h) in &[(3, 1), (4, 2), (5, 1), (3, 2), (2, 1), (5, 2)] {
            let pp = p(d, 1.2, 1.5, h);
            let mix = CountMixture::new(pp, CountLaw::WeightedPoissonMl { lambda: 1.3 }).unwrap();
            let law = RadialLaw::free(pp, Arc::new(mix), 0.0);
            for i in 0..15 {
                let r = pp.ct() * (i as f64 + 0.5) / 15.0;
                let s = law.cartesian(r);
                let c = ml_closed_form_free(r, &pp, 1.3).unwrap();
                assert!((s - c).abs() <= 1e-10 * c, "d={d} h={h} r={r}: {s} vs {c}");
            }
        }
    }

    #[test]
    fn poisson_series_matches_closed_form() {
        for &(d, h) in &[(2, 1), (4, 2)] {
            let pp = p(d, 1.0, 2.0, h);
            let series = uncond_free_law(&pp, CountLaw::Poisson { lambda: 1.0 }).unwrap();
            let closed = uncond_free_poisson(&pp, 1.0).unwrap();
            assert!((series.atom().unwrap().mass - (-2.0f64).exp()).abs() < 1e-15);
            for i in 0..20 {
                let r = 2.0 * (i as f64 + 0.5) / 20.0;
                let a = series.cartesian(r);
                let b = closed.cartesian(r);
                assert!((a - b).abs() <= 1e-10 * b, "d={d} r={r}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn poisson_2d_cdf_boundaries() {
        let f = cdf_distance_reflected_poisson_2d(1.0, 1.0, 2.0, 1.0, 1.0).unwrap();
        assert!((f - 1.0).abs() < 1e-14);
        let r = 0.3;
        let f = cdf_distance_reflected_poisson_2d(r, 1.0, 2.0, 1.0, 1.0).unwrap();
        let want = 1.0 - (-2.0 + (4.0f64 - r * r).sqrt()).exp();
        assert!((f - want).abs() < 1e-15);
        assert!(cdf_distance_reflected_poisson_2d(0.3, 1.0, 0.5, 1.0, 1.0).is_err());
    }
}
