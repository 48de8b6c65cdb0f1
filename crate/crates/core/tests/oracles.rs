//! Library values checked against known closed-form constants and against oracles
//! computed here independently (statrs special functions, direct series,
//! brute-force quadrature).

use std::f64::consts::PI;

use reflecting_flights::analytic::sphere::reflected_law;
use reflecting_flights::analytic::{
    cdf_distance_reflected_poisson_2d, free_density_dirichlet, hyperplane_density, ml_atom_mass,
    ml_exponential_closed_form, radial_free_density, reflected_density_sphere,
    reflected_moment_closed_form, reflected_radial_cdf, uncond_free_density_poisson,
};
use reflecting_flights::epd::{
    convergence_order, epd_residual, field_value, ConvergenceOrder, EpdFieldSpec, StencilConfig,
};
use reflecting_flights::flight::reflect_terminal_sphere;
use reflecting_flights::geometry::{
    classify_halfspace_region, invert_in_sphere, reflect_in_hyperplane, Hyperplane, Point,
    ReflectionSphere,
};
use reflecting_flights::sampling::{count_pmf, CountLaw, FlightParams};
use reflecting_flights::specfun::{bessel_j, inc_beta, mittag_leffler, reg_inc_beta};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma, ln_gamma};

fn params(d: usize, c: f64, t: f64, h: u32) -> FlightParams {
    FlightParams::new(d, c, t, h).unwrap()
}

fn pt(v: &[f64]) -> Point {
    Point::new(v.to_vec()).unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1e-300)
}

// Free Cartesian density given n deviations, written out from scratch.
fn dirichlet_oracle(r: f64, d: usize, h: u32, n: u32, ct: f64) -> f64 {
    if r >= ct {
        return 0.0;
    }
    let b = n as f64 * (d - h as usize) as f64 / 2.0;
    let df = d as f64;
    let ln_k = ln_gamma(b + df / 2.0) - ln_gamma(b) - 0.5 * df * PI.ln() - df * ct.ln();
    ln_k.exp() * (1.0 - r * r / (ct * ct)).powf(b - 1.0)
}

// Composite Simpson with the endpoints taken as one-sided limits, so a jump
// of the integrand at a breakpoint does not leak in.
fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let nudge = 1e-12 * (b - a);
    let mut s = f(a + nudge) + f(b - nudge);
    for k in 1..panels {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn uniform_cases_match_closed_form_constants() {
    for &ct in &[1.0, 2.5] {
        let p2 = params(2, 1.0, ct, 1);
        let p3 = params(3, 1.0, ct, 1);
        let p4 = params(4, 1.0, ct, 2);
        for &s in &[0.1, 0.5, 0.9] {
            let r = s * ct;
            assert!(close(
                free_density_dirichlet(r, &p2, 2).unwrap(),
                1.0 / (PI * ct * ct),
                1e-12
            ));
            let want3 = gamma(2.5) / (PI.powf(1.5) * ct.powi(3));
            assert!(close(
                free_density_dirichlet(r, &p3, 1).unwrap(),
                want3,
                1e-12
            ));
            let want4 = gamma(3.0) / (PI * PI * ct.powi(4));
            assert!(close(
                free_density_dirichlet(r, &p4, 1).unwrap(),
                want4,
                1e-12
            ));
        }
    }
    // radial density of the unit-disk uniform law is 2r
    let p = params(2, 1.0, 1.0, 1);
    assert!(close(radial_free_density(0.3, &p, 2).unwrap(), 0.6, 1e-12));
}

#[test]
fn free_density_matches_independent_formula() {
    for &(d, h) in &[(2usize, 1u32), (3, 1), (3, 2), (4, 1), (4, 2), (5, 2)] {
        let p = params(d, 1.3, 1.7, h);
        for n in 1..=4 {
            for &s in &[0.05, 0.4, 0.77, 0.99] {
                let r = s * p.ct();
                let got = free_density_dirichlet(r, &p, n).unwrap();
                let want = dirichlet_oracle(r, d, h, n, p.ct());
                assert!(
                    close(got, want, 1e-12),
                    "d={d} h={h} n={n} r={r}: {got} vs {want}"
                );
            }
        }
    }
}

#[test]
fn reflected_planar_values() {
    let p = params(2, 1.0, 2.0, 1);
    let got = reflected_density_sphere(0.4, &p, 2, 1.0).unwrap();
    assert!(close(got, 1.0 / (4.0 * PI), 1e-12));
    let got = reflected_density_sphere(0.8, &p, 2, 1.0).unwrap();
    assert!(close(got, (1.0 + 1.0 / 0.8f64.powi(4)) / (4.0 * PI), 1e-12));
    assert!(close(
        reflected_radial_cdf(0.8, &p, 2, 1.0).unwrap(),
        0.769375,
        1e-12
    ));
    assert!(close(
        reflected_radial_cdf(0.4, &p, 2, 1.0).unwrap(),
        0.04,
        1e-12
    ));
}

#[test]
fn reflected_cdf_and_moments_match_brute_force() {
    let radius = 1.0;
    for &(d, h, n) in &[(3usize, 1u32, 2u32), (4, 2, 1), (5, 1, 3)] {
        let p = params(d, 1.0, 2.0, h);
        let ct = p.ct();
        let area = 2.0 * PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0);
        let q = |r: f64| {
            let mut v = if r <= radius {
                dirichlet_oracle(r, d, h, n, ct)
            } else {
                0.0
            };
            if r > radius * radius / ct && r <= radius {
                v += (radius / r).powi(2 * d as i32)
                    * dirichlet_oracle(radius * radius / r, d, h, n, ct);
            }
            area * r.powi(d as i32 - 1) * v
        };
        // integrands are smooth between the breakpoints R²/ct and R
        let inner = radius * radius / ct;
        let mass = |hi: f64, m: i32| {
            let lo_part = simpson(|r| r.powi(m) * q(r), 0.0, hi.min(inner), 2000);
            let hi_part = if hi > inner {
                simpson(|r| r.powi(m) * q(r), inner, hi, 2000)
            } else {
                0.0
            };
            lo_part + hi_part
        };
        for &r in &[0.3, 0.6, 0.9, 1.0] {
            let got = reflected_radial_cdf(r, &p, n, radius).unwrap();
            assert!(
                (got - mass(r, 0)).abs() < 1e-9,
                "d={d} r={r}: {got} vs {}",
                mass(r, 0)
            );
        }
        for m in 1..=2u32 {
            let got = reflected_moment_closed_form(m, &p, n, radius).unwrap();
            assert!(close(got, mass(radius, m as i32), 1e-9), "d={d} m={m}");
        }
    }
}

#[test]
fn incomplete_beta_against_statrs() {
    for &(z, a, b) in &[
        (0.1, 0.5, 2.0),
        (0.5, 2.0, 2.0),
        (0.9, 1.5, 0.5),
        (0.3, 3.0, 7.5),
    ] {
        let got = reg_inc_beta(z, a, b).unwrap();
        assert!((got - beta_reg(a, b, z)).abs() < 1e-12, "({z}, {a}, {b})");
        let full = gamma(a) * gamma(b) / gamma(a + b);
        assert!(close(inc_beta(z, a, b).unwrap(), got * full, 1e-12));
    }
    // binomial identity for integer parameters
    assert!((reg_inc_beta(0.5, 2.0, 2.0).unwrap() - 0.5).abs() < 1e-14);
}

#[test]
fn bessel_half_integer_and_tabulated() {
    let half = (2.0 / PI).sqrt() * 1f64.sin();
    assert!((bessel_j(0.5, 1.0).unwrap() - half).abs() < 1e-12);
    assert!((bessel_j(0.5, 1.0).unwrap() - 0.6713967).abs() < 1e-6);
    assert!((bessel_j(0.0, 1.0).unwrap() - 0.765_197_686_557_966_6).abs() < 1e-12);
    assert!((bessel_j(1.0, 2.5).unwrap() - 0.497_094_102_464_274_1).abs() < 1e-12);
    for &x in &[0.3, 4.0, 17.0] {
        let want = (2.0 / (PI * x)).sqrt() * (x.sin() / x - x.cos());
        assert!((bessel_j(1.5, x).unwrap() - want).abs() < 1e-11, "x={x}");
    }
}

#[test]
fn mittag_leffler_identities() {
    assert!((mittag_leffler(1.0, 1.0, 2.0).unwrap() - 2f64.exp()).abs() < 1e-9);
    assert!((mittag_leffler(1.0, 2.0, 1.0).unwrap() - (1f64.exp() - 1.0)).abs() < 1e-9);
    for &x in &[0.0f64, 0.3, 1.5, 2.5] {
        let want = (x * x).exp() * erfc(-x);
        assert!(
            close(mittag_leffler(0.5, 1.0, x).unwrap(), want, 1e-10),
            "x={x}"
        );
    }
    // E_{2,1}(x²) = cosh x
    assert!(close(
        mittag_leffler(2.0, 1.0, 4.0).unwrap(),
        2f64.cosh(),
        1e-12
    ));
}

#[test]
fn weighted_poisson_atom_and_pmf() {
    let p = params(3, 1.0, 1.0, 1);
    let want = 1.0 / (mittag_leffler(1.0, 1.5, 1.0).unwrap() * gamma(1.5));
    assert!(close(ml_atom_mass(&p, 1.0).unwrap(), want, 1e-12));
    let pmf0 = count_pmf(0, 1.0, CountLaw::WeightedPoissonMl { lambda: 1.0 }, &p).unwrap();
    assert!(close(pmf0, want, 1e-12));

    // d = 4, h = 2, λt = 1: normalizer E_{1,2}(1) = e - 1 by direct summation
    let p = params(4, 1.0, 1.0, 2);
    let norm: f64 = (0..40).map(|k| 1.0 / gamma(k as f64 + 2.0)).sum();
    let pmf1 = count_pmf(1, 1.0, CountLaw::WeightedPoissonMl { lambda: 1.0 }, &p).unwrap();
    assert!(close(pmf1, 1.0 / (gamma(3.0) * norm), 1e-12));
    assert!((pmf1 - 0.5 / (1f64.exp() - 1.0)).abs() < 1e-12);
}

#[test]
fn exponential_closed_form_in_three_dimensions() {
    // λ/(c³t²π^{3/2}E_{1,3/2}(λt)) exp{λt(1 - r²/c²t²)}
    let (c, t, lambda) = (1.3, 2.0, 0.7);
    let p = params(3, c, t, 1);
    let e = mittag_leffler(1.0, 1.5, lambda * t).unwrap();
    for &r in &[0.1, 1.0, 2.4] {
        let want = lambda / (c.powi(3) * t * t * PI.powf(1.5) * e)
            * (lambda * t * (1.0 - r * r / (c * c * t * t))).exp();
        let got = ml_exponential_closed_form(r, &p, lambda, None).unwrap();
        assert!(close(got, want, 1e-12));
    }
}

#[test]
fn poisson_closed_forms_against_series() {
    let (c, t, lambda) = (1.0, 2.0, 1.3);
    let lt = lambda * t;
    for &(d, h) in &[(2usize, 1u32), (4, 2)] {
        let p = params(d, c, t, h);
        for &r in &[0.0, 0.5, 1.2, 1.9] {
            let series: f64 = (1..200)
                .map(|n| {
                    let pmf = (n as f64 * lt.ln() - lt - ln_gamma(n as f64 + 1.0)).exp();
                    pmf * dirichlet_oracle(r, d, h, n, c * t)
                })
                .sum();
            let got = uncond_free_density_poisson(r, &p, lambda).unwrap();
            assert!(close(got, series, 1e-10), "d={d} r={r}: {got} vs {series}");
        }
    }
    let p = params(4, c, t, 2);
    let want = lambda / (c.powi(4) * t.powi(3) * PI * PI) * (2.0 + lt);
    assert!(close(
        uncond_free_density_poisson(0.0, &p, lambda).unwrap(),
        want,
        1e-12
    ));
}

#[test]
fn planar_poisson_cdf_first_term() {
    let (c, t, lambda, radius) = (1.0, 2.0, 1.0, 1.0);
    for &r in &[0.1f64, 0.3, 0.49] {
        let want = 1.0 - (-lambda * t + lambda / c * (c * c * t * t - r * r).sqrt()).exp();
        let got = cdf_distance_reflected_poisson_2d(r, c, t, lambda, radius).unwrap();
        assert!(close(got, want, 1e-13));
    }
    let at_r = cdf_distance_reflected_poisson_2d(radius, c, t, lambda, radius).unwrap();
    assert!((at_r - 1.0).abs() < 1e-14);
}

#[test]
fn map_values() {
    let s = ReflectionSphere::new(2.0).unwrap();
    assert_eq!(
        invert_in_sphere(&pt(&[1.0, 0.0]), &s).unwrap(),
        pt(&[4.0, 0.0])
    );
    let unit = ReflectionSphere::new(1.0).unwrap();
    assert_eq!(
        invert_in_sphere(&pt(&[1.0, 0.0]), &unit).unwrap(),
        pt(&[1.0, 0.0])
    );
    let plane = Hyperplane::new(vec![0.0, 1.0], 1.0).unwrap();
    assert_eq!(
        reflect_in_hyperplane(&pt(&[0.0, 3.0]), &plane),
        pt(&[0.0, -1.0])
    );
    assert_eq!(
        reflect_in_hyperplane(&pt(&[0.0, 1.5]), &plane),
        pt(&[0.0, 0.5])
    );
    // |ν(x)| = 1.1 > ct, so x is not in V
    let plane = Hyperplane::axis(2, 1.0).unwrap();
    let x = pt(&[0.0, 0.9]);
    assert!((plane.reflected_norm_sq(&x) - 1.21).abs() < 1e-14);
    assert!(!classify_halfspace_region(&x, &plane, 1.05).in_v);
}

#[test]
fn terminal_reflection_values() {
    let p = params(2, 1.0, 2.0, 1);
    let o = reflect_terminal_sphere(&pt(&[1.6, 0.0]), 2, 1.0, &p).unwrap();
    assert!((o.reflected_position.norm() - 0.625).abs() < 1e-15);
    let o = reflect_terminal_sphere(&pt(&[0.0, 2.0]), 0, 1.0, &p).unwrap();
    assert!((o.reflected_position.norm() - 0.5).abs() < 1e-15);
    assert!(o.atom_flag && o.reflected_flag);
}

#[test]
fn hyperplane_uniform_value() {
    let p = params(2, 1.0, 1.0, 1);
    let plane = Hyperplane::axis(2, 0.5).unwrap();
    let got = hyperplane_density(&pt(&[0.0, 0.2]), &p, 2, &plane).unwrap();
    assert!(close(got, 2.0 / PI, 1e-12));
}

#[test]
fn epd_special_cases() {
    let p = params(2, 1.0, 2.0, 1);
    // f̄ with β = 1 at |x| = R is c²t² - R⁴/|x|²
    let spec = EpdFieldSpec::fbar(p, 1.0, 1.0).unwrap();
    assert!((field_value(&spec, &pt(&[1.0, 0.0]), 2.0).unwrap() - 3.0).abs() < 1e-12);

    // d = 4, β = 1: u_tt - u_t/t = c²Δu
    let p4 = params(4, 1.0, 20.0, 2);
    let spec = EpdFieldSpec::fbar(p4, 1.0, 4.0).unwrap();
    let x = pt(&[1.9, 1.9, 1.9, 1.9]);
    assert!((spec.a_beta(&x, 20.0) - 1.0).abs() < 1e-14);
    let res = epd_residual(&spec, &x, 20.0, &StencilConfig::uniform(1e-3).unwrap()).unwrap();
    assert!(res.absolute.abs() < 1e-6, "residual {}", res.absolute);

    // β = (d-1)/2 reduces to the wave equation
    let p3 = params(3, 1.0, 2.0, 1);
    let spec = EpdFieldSpec::fbeta(p3, 1.0).unwrap();
    let x = pt(&[0.3, -0.2, 0.5]);
    let res = epd_residual(&spec, &x, 2.0, &StencilConfig::uniform(1e-3).unwrap()).unwrap();
    assert!(res.absolute.abs() < 1e-5 * res.wave_term.abs().max(1e-300));

    // FHat with β = 1 is a quadratic, so its residual sits at rounding level
    let plane = Hyperplane::axis(2, 0.6).unwrap();
    let spec = EpdFieldSpec::fhat(p, 1.0, plane.clone()).unwrap();
    let x = pt(&[0.2, 0.3]);
    let cfg = StencilConfig::uniform(0.01).unwrap();
    assert_eq!(
        convergence_order(&spec, &x, 2.0, &cfg).unwrap(),
        ConvergenceOrder::Converged
    );
    let spec = EpdFieldSpec::fhat(p, 2.5, plane).unwrap();
    let q = convergence_order(&spec, &x, 2.0, &cfg)
        .unwrap()
        .order()
        .unwrap();
    assert!((q - 2.0).abs() < 0.4, "order {q}");
    let spec = EpdFieldSpec::fbeta(p, 2.0).unwrap();
    let q = convergence_order(&spec, &pt(&[0.4, -0.3]), 2.0, &cfg)
        .unwrap()
        .order()
        .unwrap();
    assert!((q - 2.0).abs() < 0.4, "order {q}");
}

#[test]
fn normalization_examples() {
    let p = params(3, 1.0, 2.0, 1);
    let law = reflected_law(&p, 2, 1.0).unwrap();
    assert!((law.total_mass().unwrap() - 1.0).abs() < 1e-6);
}
