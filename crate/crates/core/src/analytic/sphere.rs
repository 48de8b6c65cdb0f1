//! Flights reflected in the sphere `S_R`, conditional on `n >= 1` deviations.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sampling::FlightParams;
use crate::specfun::{ln_beta, ln_gamma, reg_inc_beta, unit_sphere_area};

use super::free::{free_radial_cdf, DirichletDensity};
use super::RadialLaw;

fn check_radius(radius: f64) -> Result<()> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("sphere radius {radius} must be > 0")))
    }
}

/// Radial law of the reflected flight given `n >= 1` deviations.
pub fn reflected_law(params: &FlightParams, n: u32, radius: f64) -> Result<RadialLaw> {
    let dens = DirichletDensity::new(*params, n)?;
    RadialLaw::reflected(*params, Arc::new(dens), 0.0, radius)
}

/// Cartesian density of the reflected flight at any point of norm `r`.
pub fn reflected_density_sphere(r: f64, params: &FlightParams, n: u32, radius: f64) -> Result<f64> {
    check_radius(radius)?;
    if r < 0.0 || !r.is_finite() {
        return Err(Error::domain(format!("radius {r} must be >= 0")));
    }
    Ok(reflected_law(params, n, radius)?.cartesian(r))
}

/// Radial density `q*(r) = area(S^{d-1}) r^{d-1} p*(r)`.
pub fn reflected_radial_density(r: f64, params: &FlightParams, n: u32, radius: f64) -> Result<f64> {
    let p = reflected_density_sphere(r, params, n, radius)?;
    Ok(unit_sphere_area(params.d) * r.powi(params.d as i32 - 1) * p)
}

/// `P{|X*(t)| <= r}` for `0 < r <= R` given `n >= 1` deviations.
pub fn reflected_radial_cdf(r: f64, params: &FlightParams, n: u32, radius: f64) -> Result<f64> {
    check_radius(radius)?;
    if !(r > 0.0 && r <= radius) {
        return Err(Error::domain(format!("radius {r} outside (0, {radius}]")));
    }
    let ct = params.ct();
    if ct <= radius {
        return free_radial_cdf(r, params, n);
    }
    let a = 0.5 * params.dim();
    let b = DirichletDensity::new(*params, n)?.shape_b();
    let mut f = reg_inc_beta((r / ct).powi(2), a, b)?;
    if r > radius * radius / ct {
        let z = (radius * radius / (ct * r)).powi(2);
        f += 1.0 - reg_inc_beta(z, a, b)?;
    }
    Ok(f.min(1.0))
}

// P{lo <= Y <= hi} for Y ~ Binomial(m, p), summed term by term.
fn binomial_range(m: u64, p: f64, lo: u64, hi: u64) -> f64 {
    if hi < lo {
        return 0.0;
    }
    let mf = m as f64;
    (lo..=hi.min(m))
        .map(|j| {
            let jf = j as f64;
            let ln_choose = ln_gamma(mf + 1.0) - ln_gamma(jf + 1.0) - ln_gamma(mf - jf + 1.0);
            let lp = if j == 0 { 0.0 } else { jf * p.ln() };
            let lq = if j == m {
                0.0
            } else {
                (mf - jf) * (1.0 - p).ln()
            };
            (ln_choose + lp + lq).exp()
        })
        .sum()
}

/// Same CDF as [`reflected_radial_cdf`] through binomial tail sums; needs
/// `h = 2` and even `d`.
pub fn reflected_radial_cdf_binomial(
    r: f64,
    params: &FlightParams,
    n: u32,
    radius: f64,
) -> Result<f64> {
    check_radius(radius)?;
    if params.h != 2 || !params.d.is_multiple_of(2) {
        return Err(Error::domain("binomial form needs h = 2 and even d"));
    }
    if n == 0 {
        return Err(Error::domain("n must be >= 1"));
    }
    if !(r > 0.0 && r <= radius) {
        return Err(Error::domain(format!("radius {r} outside (0, {radius}]")));
    }
    let d = params.d as u64;
    let m = (n as u64 + 1) * (d - 2) / 2;
    let ct = params.ct();
    let free = |x: f64| binomial_range(m, (x / ct).powi(2).min(1.0), d / 2, m);
    if ct <= radius {
        return Ok(if r >= ct { 1.0 } else { free(r) });
    }
    let mut f = free(r);
    if r > radius * radius / ct {
        let z = (radius * radius / (ct * r)).powi(2);
        f += binomial_range(m, z, 0, d / 2 - 1);
    }
    Ok(f.min(1.0))
}

/// `E[|X*(t)|^m]` given `n >= 1`: closed form when `d > m`, quadrature otherwise.
pub fn reflected_moment(m: u32, params: &FlightParams, n: u32, radius: f64) -> Result<f64> {
    if (m as usize) < params.d {
        reflected_moment_closed_form(m, params, n, radius)
    } else {
        reflected_moment_quadrature(m, params, n, radius)
    }
}

/// Beta-function form of the `m`-th moment, valid for `d > m`.
///
/// With `z = R²/(ct)²` and `b = n(d-h)/2`:
/// `(ct)^m B(z; (d+m)/2, b)/B(d/2, b) + (R²/ct)^m [B((d-m)/2, b) - B(z; (d-m)/2, b)]/B(d/2, b)`.
pub fn reflected_moment_closed_form(
    m: u32,
    params: &FlightParams,
    n: u32,
    radius: f64,
) -> Result<f64> {
    check_radius(radius)?;
    let d = params.dim();
    let mf = m as f64;
    if !(d > mf) {
        return Err(Error::domain(format!(
            "closed-form moment needs d > m (d={d}, m={m})"
        )));
    }
    let b = DirichletDensity::new(*params, n)?.shape_b();
    let ct = params.ct();
    let a = 0.5 * d;
    let up = 0.5 * (d + mf);
    let dn = 0.5 * (d - mf);
    let ratio_up = (ln_beta(up, b) - ln_beta(a, b)).exp();
    if ct <= radius {
        return Ok(ct.powi(m as i32) * ratio_up);
    }
    let z = (radius / ct).powi(2);
    let ratio_dn = (ln_beta(dn, b) - ln_beta(a, b)).exp();
    let inner = ct.powi(m as i32) * ratio_up * reg_inc_beta(z, up, b)?;
    let outer = (radius * radius / ct).powi(m as i32) * ratio_dn * (1.0 - reg_inc_beta(z, dn, b)?);
    Ok(inner + outer)
}

/// `∫ r^m q*(r) dr` by quadrature.
pub fn reflected_moment_quadrature(
    m: u32,
    params: &FlightParams,
    n: u32,
    radius: f64,
) -> Result<f64> {
    reflected_law(params, n, radius)?.moment(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn p(d: usize, c: f64, t: f64, h: u32) -> FlightParams {
        FlightParams::new(d, c, t, h).unwrap()
    }

    #[test]
    fn density_examples() {
        let pp = p(2, 1.0, 2.0, 1);
        let v = reflected_density_sphere(0.4, &pp, 2, 1.0).unwrap();
        assert!((v - 1.0 / (4.0 * PI)).abs() < 1e-15);
        let v = reflected_density_sphere(0.8, &pp, 2, 1.0).unwrap();
        assert!((v - (1.0 + 0.8f64.powi(-4)) / (4.0 * PI)).abs() < 1e-14);
        assert_eq!(reflected_density_sphere(1.2, &pp, 2, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn jump_only_at_inner_radius() {
        let pp = p(2, 1.0, 2.0, 1);
        let r0 = 0.5;
        let eps = 1e-9;
        let below = reflected_density_sphere(r0 - eps, &pp, 2, 1.0).unwrap();
        let above = reflected_density_sphere(r0 + eps, &pp, 2, 1.0).unwrap();
        assert!(above - below > 1e-3);
        for &x in &[0.2, 0.7, 0.95] {
            let l = reflected_density_sphere(x - eps, &pp, 2, 1.0).unwrap();
            let r = reflected_density_sphere(x + eps, &pp, 2, 1.0).unwrap();
            assert!((l - r).abs() < 1e-6);
        }
    }

    #[test]
    fn cdf_examples() {
        let pp = p(2, 1.0, 2.0, 1);
        assert!((reflected_radial_cdf(0.8, &pp, 2, 1.0).unwrap() - 0.769375).abs() < 1e-12);
        assert!((reflected_radial_cdf(0.4, &pp, 2, 1.0).unwrap() - 0.04).abs() < 1e-12);
        assert!((reflected_radial_cdf(1.0, &pp, 2, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(reflected_radial_cdf(0.0, &pp, 2, 1.0).is_err());
        assert!(reflected_radial_cdf(1.1, &pp, 2, 1.0).is_err());
    }

    #[test]
    fn binomial_matches_incomplete_beta() {
        for &(d, n) in &[(4, 1), (4, 3), (6, 2), (8, 1)] {
            let pp = p(d, 1.0, 2.0, 2);
            for i in 1..=40 {
                let r = i as f64 / 40.0;
                let a = reflected_radial_cdf(r, &pp, n, 1.0).unwrap();
                let b = reflected_radial_cdf_binomial(r, &pp, n, 1.0).unwrap();
                assert!((a - b).abs() < 1e-10, "d={d} n={n} r={r}: {a} vs {b}");
            }
        }
        assert!(reflected_radial_cdf_binomial(0.5, &p(3, 1.0, 2.0, 2), 1, 1.0).is_err());
    }

    #[test]
    fn moments_agree() {
        let pp = p(2, 1.0, 2.0, 1);
        assert!((reflected_moment(0, &pp, 2, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let cf = reflected_moment_closed_form(1, &pp, 2, 1.0).unwrap();
        let q = reflected_moment_quadrature(1, &pp, 2, 1.0).unwrap();
        assert!((cf - q).abs() < 1e-9, "{cf} vs {q}");
        assert!(reflected_moment_closed_form(3, &pp, 2, 1.0).is_err());
        assert!(reflected_moment(3, &pp, 2, 1.0).unwrap() > 0.0);
    }

    #[test]
    fn short_horizon_is_free() {
        let pp = p(3, 1.0, 0.8, 1);
        let a = reflected_radial_cdf(0.5, &pp, 2, 1.0).unwrap();
        let b = free_radial_cdf(0.5, &pp, 2).unwrap();
        assert_eq!(a, b);
    }
}
