//! Finite-difference checks of the Euler-Poisson-Darboux identities solved by
//! the power-law fields behind the flight densities.
//!
//! Every equation is written as
//! `u_tt + (k/t) u_t + (z/t²) u = c² [Δu + s u + g <x, ∇u>]`
//! with coefficients depending on the field kind:
//!
//! | kind        | field                                    | `k`                      |
//! |-------------|------------------------------------------|--------------------------|
//! | `FBeta`     | `(c²t² - |x|²)^β`                        | `-(2β - 1 + d)`          |
//! | `FHat`      | `(c²t² - |ν(x)|²)^β`                     | `-(2β - 1 + d)`          |
//! | `FBar`      | `(c²t² - R⁴/|x|²)^β`                     | `-a_β(x)`                |
//! | `PDensity`  | free density with `n` deviations         | `(n+1)(d-h) + h - 1`     |
//! | `PBar`      | reflected density on the annulus         | `2(2β+d) - a_β(x)`       |
//!
//! Only `PBar` has the zero-order and gradient terms.

use crate::analytic::free::DirichletDensity;
use crate::analytic::DeficitDensity;
use crate::error::{Error, Result};
use crate::geometry::{Hyperplane, Point};
use crate::sampling::{FlightParams, RandomSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldKind {
    FBeta,
    FBar,
    FHat,
    PDensity,
    PBar,
}

impl FieldKind {
    pub fn name(self) -> &'static str {
        match self {
            FieldKind::FBeta => "fbeta",
            FieldKind::FBar => "fbar",
            FieldKind::FHat => "fhat",
            FieldKind::PDensity => "pdensity",
            FieldKind::PBar => "pbar",
        }
    }
}

impl std::str::FromStr for FieldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fbeta" => Ok(FieldKind::FBeta),
            "fbar" => Ok(FieldKind::FBar),
            "fhat" => Ok(FieldKind::FHat),
            "pdensity" => Ok(FieldKind::PDensity),
            "pbar" => Ok(FieldKind::PBar),
            other => Err(Error::config(format!("unknown field kind '{other}'"))),
        }
    }
}

/// A field together with the equation it is checked against.
#[derive(Debug, Clone, PartialEq)]
pub struct EpdFieldSpec {
    kind: FieldKind,
    beta: f64,
    params: FlightParams,
    n: u32,
    radius: f64,
    plane: Option<Hyperplane>,
    coef_offset: f64,
}

impl EpdFieldSpec {
    fn base(kind: FieldKind, beta: f64, params: FlightParams) -> Result<Self> {
        params.validate()?;
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::domain(format!(
                "exponent beta = {beta} must be >= 0"
            )));
        }
        Ok(EpdFieldSpec {
            kind,
            beta,
            params,
            n: 0,
            radius: 0.0,
            plane: None,
            coef_offset: 0.0,
        })
    }

    pub fn fbeta(params: FlightParams, beta: f64) -> Result<Self> {
        Self::base(FieldKind::FBeta, beta, params)
    }

    pub fn fbar(params: FlightParams, beta: f64, radius: f64) -> Result<Self> {
        let mut s = Self::base(FieldKind::FBar, beta, params)?;
        s.radius = check_radius(radius)?;
        Ok(s)
    }

    pub fn fhat(params: FlightParams, beta: f64, plane: Hyperplane) -> Result<Self> {
        if plane.dim() != params.d {
            return Err(Error::domain("hyperplane dimension differs from d"));
        }
        let mut s = Self::base(FieldKind::FHat, beta, params)?;
        s.plane = Some(plane);
        Ok(s)
    }

    /// Free density with `n >= 1` deviations; `β = n(d-h)/2 - 1`.
    pub fn pdensity(params: FlightParams, n: u32) -> Result<Self> {
        let beta = density_beta(&params, n)?;
        let mut s = Self::base(FieldKind::PDensity, beta, params)?;
        s.n = n;
        Ok(s)
    }

    /// Reflected density on the annulus `R²/ct < |x| < R`.
    pub fn pbar(params: FlightParams, n: u32, radius: f64) -> Result<Self> {
        let beta = density_beta(&params, n)?;
        let mut s = Self::base(FieldKind::PBar, beta, params)?;
        s.n = n;
        s.radius = check_radius(radius)?;
        Ok(s)
    }

    /// Shift the first-order coefficient `k` by `delta`. A nonzero shift turns
    /// the check into a negative control.
    pub fn with_coef_offset(mut self, delta: f64) -> Self {
        self.coef_offset = delta;
        self
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn params(&self) -> &FlightParams {
        &self.params
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn plane(&self) -> Option<&Hyperplane> {
        self.plane.as_ref()
    }

    pub fn coef_offset(&self) -> f64 {
        self.coef_offset
    }

    fn at_time(&self, t: f64) -> FlightParams {
        FlightParams { t, ..self.params }
    }

    /// Signed distance of `x` from the boundary of the field's domain at time
    /// `t`; positive inside.
    pub fn domain_gap(&self, x: &Point, t: f64) -> f64 {
        let ct = self.params.c * t;
        let r = x.norm();
        match self.kind {
            FieldKind::FBeta | FieldKind::PDensity => ct - r,
            FieldKind::FBar | FieldKind::PBar => {
                let inner = self.radius * self.radius / ct;
                (r - inner).min(self.radius - r)
            }
            FieldKind::FHat => {
                let plane = self.plane.as_ref().expect("FHat carries a plane");
                let norm_a = plane.normal().iter().map(|v| v * v).sum::<f64>().sqrt();
                let to_plane = (plane.offset() - plane.level(x)) / norm_a;
                to_plane.min(ct - plane.reflected_norm_sq(x).max(0.0).sqrt())
            }
        }
    }

    /// True when every point within `margin` of `(x, t)` in space and time
    /// lies in the domain.
    pub fn is_interior(&self, x: &Point, t: f64, margin: f64) -> bool {
        t - margin > 0.0
            && self.domain_gap(x, t - margin) > margin
            && self.domain_gap(x, t + margin) > margin
    }

    /// `a_β(x)` at time `t`.
    pub fn a_beta(&self, x: &Point, t: f64) -> f64 {
        let d = self.params.dim();
        let b = self.beta;
        let r2 = x.norm_sq();
        let r4 = self.radius.powi(4);
        let ct2 = (self.params.c * t).powi(2);
        2.0 * b - 1.0
            + r4 / r2
                * ((4.0 - d) / r2 + 2.0 * (b - 1.0) * (1.0 - r4 / (r2 * r2)) / (ct2 - r4 / r2))
    }

    // first-order coefficient k, zero-order numerator z, and the spatial
    // extras (s, g)
    fn coefficients(&self, x: &Point, t: f64) -> (f64, f64, f64, f64) {
        let d = self.params.dim();
        let b = self.beta;
        let (k, z, s, g) = match self.kind {
            FieldKind::FBeta | FieldKind::FHat => (-(2.0 * b - 1.0 + d), 0.0, 0.0, 0.0),
            FieldKind::FBar => (-self.a_beta(x, t), 0.0, 0.0, 0.0),
            FieldKind::PDensity => {
                let h = self.params.h as f64;
                ((self.n as f64 + 1.0) * (d - h) + h - 1.0, 0.0, 0.0, 0.0)
            }
            FieldKind::PBar => {
                let e = 2.0 * b + d;
                let a = self.a_beta(x, t);
                let r2 = x.norm_sq();
                (
                    2.0 * e - a,
                    e * (e - 1.0 - a),
                    2.0 * d * (3.0 * d - 2.0) / r2,
                    4.0 * d / r2,
                )
            }
        };
        (k + self.coef_offset, z, s, g)
    }
}

fn check_radius(radius: f64) -> Result<f64> {
    if radius > 0.0 && radius.is_finite() {
        Ok(radius)
    } else {
        Err(Error::domain(format!("sphere radius {radius} must be > 0")))
    }
}

fn density_beta(params: &FlightParams, n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("density fields need n >= 1"));
    }
    Ok(params.ml_alpha() * n as f64 - 1.0)
}

/// Exact value of the field at `(x, t)`.
pub fn field_value(spec: &EpdFieldSpec, x: &Point, t: f64) -> Result<f64> {
    if x.dim() != spec.params.d {
        return Err(Error::domain(format!(
            "point has dimension {}, field has {}",
            x.dim(),
            spec.params.d
        )));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("time t = {t} must be > 0")));
    }
    let gap = spec.domain_gap(x, t);
    // the annulus includes its outer sphere
    let closed = matches!(spec.kind, FieldKind::FBar | FieldKind::PBar)
        && x.norm() - spec.radius * spec.radius / (spec.params.c * t) > 0.0
        && gap == spec.radius - x.norm();
    if !(gap > 0.0 || (closed && gap >= -1e-12 * spec.radius)) {
        return Err(Error::domain(format!(
            "({:?}, {t}) lies outside the {} domain",
            x.coords(),
            spec.kind.name()
        )));
    }
    let ct2 = (spec.params.c * t).powi(2);
    let r2 = x.norm_sq();
    let pow = |w: f64| {
        if spec.beta == 0.0 {
            1.0
        } else {
            w.powf(spec.beta)
        }
    };
    Ok(match spec.kind {
        FieldKind::FBeta => pow(ct2 - r2),
        FieldKind::FBar => pow(ct2 - spec.radius.powi(4) / r2),
        FieldKind::FHat => {
            let plane = spec.plane.as_ref().expect("FHat carries a plane");
            pow(ct2 - plane.reflected_norm_sq(x))
        }
        FieldKind::PDensity => DirichletDensity::new(spec.at_time(t), spec.n)?.at_deficit(ct2 - r2),
        FieldKind::PBar => {
            let dens = DirichletDensity::new(spec.at_time(t), spec.n)?;
            let ratio = spec.radius * spec.radius / r2;
            ratio.powi(spec.params.d as i32) * dens.at_deficit(ct2 - spec.radius.powi(4) / r2)
        }
    })
}

/// Finite-difference steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilConfig {
    pub step_space: f64,
    pub step_time: f64,
}

impl StencilConfig {
    pub fn new(step_space: f64, step_time: f64) -> Result<Self> {
        if !(step_space > 0.0 && step_time > 0.0) {
            return Err(Error::domain("stencil steps must be > 0"));
        }
        Ok(StencilConfig {
            step_space,
            step_time,
        })
    }

    pub fn uniform(step: f64) -> Result<Self> {
        Self::new(step, step)
    }

    pub fn halved(&self) -> Self {
        StencilConfig {
            step_space: 0.5 * self.step_space,
            step_time: 0.5 * self.step_time,
        }
    }
}

/// Residual of the field's equation at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpdResidual {
    /// `LHS - RHS`
    pub absolute: f64,
    /// `|LHS - RHS| / max(|u_tt|, |c²Δu|, 1e-30)`
    pub relative: f64,
    pub u_tt: f64,
    /// `c² Δu`
    pub wave_term: f64,
    /// Size of the rounding error the stencil can produce.
    pub noise: f64,
}

/// Central-difference residual of the equation matched to `spec` at `(x, t)`.
pub fn epd_residual(
    spec: &EpdFieldSpec,
    x: &Point,
    t: f64,
    cfg: &StencilConfig,
) -> Result<EpdResidual> {
    let hx = cfg.step_space;
    let ht = cfg.step_time;
    let d = spec.params.d;
    let c2 = spec.params.c * spec.params.c;
    let u0 = field_value(spec, x, t)?;
    let up = field_value(spec, x, t + ht)?;
    let um = field_value(spec, x, t - ht)?;
    let mut umax = u0.abs().max(up.abs()).max(um.abs());

    let u_tt = (up - 2.0 * u0 + um) / (ht * ht);
    let u_t = (up - um) / (2.0 * ht);

    let mut lap = 0.0;
    let mut radial_grad = 0.0;
    let mut e = vec![0.0; d];
    for i in 0..d {
        e[i] = 1.0;
        let fp = field_value(spec, &x.offset(&e, hx), t)?;
        let fm = field_value(spec, &x.offset(&e, -hx), t)?;
        e[i] = 0.0;
        umax = umax.max(fp.abs()).max(fm.abs());
        lap += (fp - 2.0 * u0 + fm) / (hx * hx);
        radial_grad += x.coords()[i] * (fp - fm) / (2.0 * hx);
    }

    let (k, z, s, g) = spec.coefficients(x, t);
    let lhs = u_tt + k / t * u_t + z / (t * t) * u0;
    let wave_term = c2 * lap;
    let rhs = wave_term + c2 * (s * u0 + g * radial_grad);
    let absolute = lhs - rhs;
    let scale = u_tt.abs().max(wave_term.abs()).max(1e-30);
    let r = x.norm();
    let noise = 16.0
        * f64::EPSILON
        * umax
        * (4.0 / (ht * ht) + k.abs() / (t * ht) + c2 * (4.0 * d as f64 / (hx * hx) + g * r / hx));
    Ok(EpdResidual {
        absolute,
        relative: absolute.abs() / scale,
        u_tt,
        wave_term,
        noise,
    })
}

/// Observed order of the residual under one step halving.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvergenceOrder {
    Order(f64),
    /// Both residuals are at rounding level, so no order can be read off.
    Converged,
}

impl ConvergenceOrder {
    pub fn order(&self) -> Option<f64> {
        match self {
            ConvergenceOrder::Order(p) => Some(*p),
            ConvergenceOrder::Converged => None,
        }
    }
}

const CONVERGED_FLOOR: f64 = 1e-13;

/// `log₂(res(s) / res(s/2))` with `s` taken from `cfg`.
pub fn convergence_order(
    spec: &EpdFieldSpec,
    x: &Point,
    t: f64,
    cfg: &StencilConfig,
) -> Result<ConvergenceOrder> {
    let coarse = epd_residual(spec, x, t, cfg)?;
    let fine = epd_residual(spec, x, t, &cfg.halved())?;
    let small = |r: &EpdResidual| r.absolute.abs() <= CONVERGED_FLOOR.max(r.noise);
    if small(&coarse) && small(&fine) {
        return Ok(ConvergenceOrder::Converged);
    }
    Ok(ConvergenceOrder::Order(
        (coarse.absolute.abs() / fine.absolute.abs()).log2(),
    ))
}

/// Uniform draw from the part of the domain whose `margin`-neighbourhood in
/// space and time stays inside.
pub fn sample_interior_point(
    spec: &EpdFieldSpec,
    t: f64,
    margin: f64,
    rng: &mut RandomSource,
) -> Result<Point> {
    let d = spec.params.d;
    let ct = spec.params.c * t;
    let (center, half) = match spec.kind {
        FieldKind::FBeta | FieldKind::PDensity => (vec![0.0; d], ct),
        FieldKind::FBar | FieldKind::PBar => (vec![0.0; d], spec.radius),
        FieldKind::FHat => {
            // V is the mirror image of a subset of B_ct, so it sits in the
            // ball of radius ct around the mirror image of the origin
            let plane = spec.plane.as_ref().expect("FHat carries a plane");
            let o = crate::geometry::reflect_in_hyperplane(&Point::origin(d), plane);
            (o.into_coords(), ct)
        }
    };
    for _ in 0..1_000_000 {
        let coords = center
            .iter()
            .map(|c| c + half * (2.0 * rng.uniform() - 1.0))
            .collect();
        let x = Point::new(coords)?;
        if spec.is_interior(&x, t, margin) {
            return Ok(x);
        }
    }
    Err(Error::precision(format!(
        "no interior point with margin {margin} found for {}",
        spec.kind.name()
    )))
}
