//! Exact laws of free and reflected flights: conditional densities given the
//! number of deviations, radial CDFs and moments, and unconditional laws
//! under weighted-Poisson and Poisson counts.
//!
//! Every law handled here is rotation invariant, and its Cartesian density
//! is a function of the deficit `w = c²t² - |x|²`. A [`RadialLaw`] wraps such
//! a density together with the optional reflecting sphere and atom.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quad::{tanh_sinh_edges, QuadTolerance};
use crate::sampling::FlightParams;
use crate::specfun::unit_sphere_area;

pub mod bessel_inversion;
pub mod free;
pub mod hyperplane;
pub mod sphere;
pub mod uncond;

pub use bessel_inversion::{free_density_bessel, BesselInversion};
pub use free::{
    free_density_dirichlet, free_radial_cdf, radial_free_density, uncond_free_density_poisson,
    DirichletDensity, PoissonClosedForm,
};
pub use hyperplane::{
    hyperplane_density, hyperplane_distance_cdf, hyperplane_total_mass_ml,
    hyperplane_uncond_density_ml,
};
pub use sphere::{
    reflected_density_sphere, reflected_moment, reflected_moment_closed_form,
    reflected_moment_quadrature, reflected_radial_cdf, reflected_radial_cdf_binomial,
    reflected_radial_density,
};
pub use uncond::{
    cdf_distance_reflected_poisson_2d, ml_atom_mass, ml_closed_form_free, ml_closed_form_reflected,
    ml_exponential_closed_form, uncond_reflected_density_ml, uncond_reflected_poisson,
    CountMixture,
};

/// A rotation-invariant Cartesian density written as a function of the
/// deficit `w = c²t² - |x|²`; zero for `w <= 0`.
pub trait DeficitDensity: Send + Sync + fmt::Debug {
    fn at_deficit(&self, w: f64) -> f64;
}

/// A point mass of a radial law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

/// Law of the distance from the origin, possibly after reflection in the
/// sphere of radius `R`.
///
/// With reflection active (`ct > R`) the Cartesian density is
/// `p(|x|) 1{|x| < R} + (R/|x|)^{2d} p(R²/|x|) 1{R²/ct < |x| <= R}`.
#[derive(Debug, Clone)]
pub struct RadialLaw {
    params: FlightParams,
    radius: Option<f64>,
    density: Arc<dyn DeficitDensity>,
    atom: Option<Atom>,
    tol: QuadTolerance,
}

impl RadialLaw {
    /// Free law with Cartesian density `density` and an optional atom on `S_ct`.
    pub fn free(params: FlightParams, density: Arc<dyn DeficitDensity>, atom_mass: f64) -> Self {
        RadialLaw {
            params,
            radius: None,
            density,
            atom: (atom_mass > 0.0).then_some(Atom {
                location: params.ct(),
                mass: atom_mass,
            }),
            tol: QuadTolerance::default(),
        }
    }

    /// Law reflected in the sphere of radius `radius`. When `ct <= radius`
    /// the sphere is never reached and the free law is returned.
    pub fn reflected(
        params: FlightParams,
        density: Arc<dyn DeficitDensity>,
        atom_mass: f64,
        radius: f64,
    ) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::domain(format!("sphere radius {radius} must be > 0")));
        }
        let mut law = RadialLaw::free(params, density, atom_mass);
        if params.ct() > radius {
            law.radius = Some(radius);
            if let Some(a) = law.atom.as_mut() {
                a.location = radius * radius / params.ct();
            }
        }
        Ok(law)
    }

    pub fn with_tolerance(mut self, tol: QuadTolerance) -> Self {
        self.tol = tol;
        self
    }

    pub fn params(&self) -> &FlightParams {
        &self.params
    }

    pub fn atom(&self) -> Option<Atom> {
        self.atom
    }

    /// Active reflecting radius, if the flight can reach the sphere.
    pub fn radius(&self) -> Option<f64> {
        self.radius
    }

    /// Upper end of the support.
    pub fn r_max(&self) -> f64 {
        self.radius.unwrap_or(self.params.ct())
    }

    /// Inner radius `R²/ct` of the reflected annulus.
    pub fn inner_radius(&self) -> Option<f64> {
        self.radius.map(|rr| rr * rr / self.params.ct())
    }

    /// Cartesian density at any point of norm `r`.
    pub fn cartesian(&self, r: f64) -> f64 {
        let ct = self.params.ct();
        self.cartesian_with(r, (ct - r) * (ct + r), None)
    }

    // `w1` is the deficit of `r`; `w2` (if given) the deficit of `R²/r`.
    fn cartesian_with(&self, r: f64, w1: f64, w2: Option<f64>) -> f64 {
        if r < 0.0 {
            return 0.0;
        }
        match self.radius {
            None => self.density.at_deficit(w1),
            Some(rr) => {
                if r > rr {
                    return 0.0;
                }
                let ct = self.params.ct();
                let mut v = if r < rr {
                    self.density.at_deficit(w1)
                } else {
                    0.0
                };
                // an exact image deficit means the node is in the annulus even
                // if `r` rounded onto its inner edge
                if r > rr * rr / ct || w2.is_some_and(|w| w > 0.0) {
                    let img = rr * rr / r;
                    let w = w2.unwrap_or((ct - img) * (ct + img));
                    v += (rr / r).powi(2 * self.params.d as i32) * self.density.at_deficit(w);
                }
                v
            }
        }
    }

    /// Radial density of the absolutely continuous part.
    pub fn density(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let d = self.params.d;
        unit_sphere_area(d) * r.powi(d as i32 - 1) * self.cartesian(r)
    }

    /// Points where the radial density jumps or blows up.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.radius {
            Some(rr) => vec![rr * rr / self.params.ct(), rr],
            None => vec![self.params.ct()],
        }
    }

    /// `∫_lo^hi r^m q(r) dr` over the continuous part.
    pub fn weighted_mass(&self, lo: f64, hi: f64, m: u32) -> Result<f64> {
        let lo = lo.max(0.0);
        let hi = hi.min(self.r_max());
        if hi <= lo {
            return Ok(0.0);
        }
        let ct = self.params.ct();
        let d = self.params.d;
        let area = unit_sphere_area(d);
        let mut cuts = vec![lo];
        cuts.extend(self.breakpoints().into_iter().filter(|&x| x > lo && x < hi));
        cuts.push(hi);
        let inner = self.inner_radius();
        let mut total = 0.0;
        for seg in cuts.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let ends_at_ct = self.radius.is_none() && b == ct;
            let starts_at_inner = inner == Some(a);
            let f = |r: f64, da: f64, db: f64| -> f64 {
                if r <= 0.0 {
                    return 0.0;
                }
                let w1 = if ends_at_ct {
                    db * (ct + r)
                } else {
                    (ct - r) * (ct + r)
                };
                let w2 = if starts_at_inner {
                    let rr = self.radius.unwrap();
                    let img = rr * rr / r;
                    Some(ct * da / r * (ct + img))
                } else {
                    None
                };
                area * r.powi(d as i32 - 1 + m as i32) * self.cartesian_with(r, w1, w2)
            };
            total += tanh_sinh_edges(&f, a, b, self.tol)?;
        }
        Ok(total)
    }

    /// Mass of the continuous part on `[lo, hi]`.
    pub fn mass(&self, lo: f64, hi: f64) -> Result<f64> {
        self.weighted_mass(lo, hi, 0)
    }

    /// Continuous mass plus atom mass.
    pub fn total_mass(&self) -> Result<f64> {
        Ok(self.mass(0.0, self.r_max())? + self.atom.map_or(0.0, |a| a.mass))
    }

    /// `P{D <= r}` including the atom, by quadrature.
    pub fn cdf(&self, r: f64) -> Result<f64> {
        if r <= 0.0 {
            return Ok(0.0);
        }
        let atom = match self.atom {
            Some(a) if r >= a.location => a.mass,
            _ => 0.0,
        };
        Ok((self.mass(0.0, r)? + atom).min(1.0))
    }

    /// `E[D^m]` including the atom, by quadrature.
    pub fn moment(&self, m: u32) -> Result<f64> {
        let atom = self
            .atom
            .map_or(0.0, |a| a.mass * a.location.powi(m as i32));
        Ok(self.weighted_mass(0.0, self.r_max(), m)? + atom)
    }
}

/// Metadata attached to a [`DensityGrid`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridMeta {
    pub params: FlightParams,
    /// Count description, e.g. `n=2` or `poisson(lambda=1)`.
    pub count: String,
    /// Surface description, e.g. `none`, `sphere(R=1)`, `hyperplane(b=0.6)`.
    pub surface: String,
    /// Which law the values come from.
    pub law: String,
    pub atom: Option<Atom>,
}

/// Tabulated radial density, Cartesian density and CDF.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityGrid {
    pub meta: GridMeta,
    pub radii: Vec<f64>,
    /// Density of the distance `|X(t)|` (continuous part).
    pub density: Vec<f64>,
    /// Density of `X(t)` at a point of norm `r`.
    pub cartesian: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl DensityGrid {
    /// Evaluates `law` on `points` evenly spaced radii in `[r_min, r_max]`.
    pub fn tabulate(
        law: &RadialLaw,
        r_min: f64,
        r_max: f64,
        points: usize,
        meta: GridMeta,
    ) -> Result<Self> {
        let radii = linspace(r_min, r_max, points)?;
        let density: Vec<f64> = radii.iter().map(|&r| law.density(r)).collect();
        let cartesian: Vec<f64> = radii.iter().map(|&r| law.cartesian(r)).collect();
        let cdf = radii
            .iter()
            .map(|&r| law.cdf(r))
            .collect::<Result<Vec<_>>>()?;
        DensityGrid::from_columns(meta, radii, density, cartesian, cdf)
    }

    pub fn from_columns(
        meta: GridMeta,
        radii: Vec<f64>,
        density: Vec<f64>,
        cartesian: Vec<f64>,
        cdf: Vec<f64>,
    ) -> Result<Self> {
        if density
            .iter()
            .chain(&cartesian)
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Error::precision(
                "density grid has negative or non-finite values",
            ));
        }
        Ok(DensityGrid {
            meta,
            radii,
            density,
            cartesian,
            cdf,
        })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "r,density,cartesian,cdf")?;
        for (i, r) in self.radii.iter().enumerate() {
            let (q, p, f) = (self.density[i], self.cartesian[i], self.cdf[i]);
            writeln!(out, "{r},{q},{p},{f}")?;
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self).map_err(|e| Error::Io(e.to_string()))
    }
}

/// `points` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if points == 0 || !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::domain(format!("bad grid [{lo}, {hi}] x {points}")));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let step = (hi - lo) / (points - 1) as f64;
    Ok((0..points)
        .map(|i| {
            if i + 1 == points {
                hi
            } else {
                lo + step * i as f64
            }
        })
        .collect())
}
