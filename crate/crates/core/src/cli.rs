//! Configuration-driven experiment runner behind the `rflight` binary.
//!
//! A configuration is a flat text file of `key = value` lines (`#` starts a
//! comment). Command-line flags override file values. Recognised keys:
//!
//! | key            | meaning                                              | default          |
//! |----------------|------------------------------------------------------|------------------|
//! | `mode`         | `simulate`, `density`, `cdf`, `moments`, `validate`, `epd-check` | `density` |
//! | `d c t h`      | flight parameters                                    | `2 1 1 1`        |
//! | `count_law`    | `fixed`, `poisson`, `weighted-poisson`               | `fixed`          |
//! | `n`            | deviations for `fixed`                               | `1`              |
//! | `lambda`       | rate for the Poisson laws                            |                  |
//! | `step_law`     | `dirichlet`, `uniform-simplex`                       | `dirichlet`      |
//! | `surface`      | `none`, `sphere`, `hyperplane`                       | inferred         |
//! | `radius`       | sphere radius `R`                                    |                  |
//! | `plane_b`      | hyperplane offset `b`                                |                  |
//! | `plane_normal` | comma-separated normal `a`                           | `e_d`            |
//! | `samples`      | Monte Carlo sample size                              | `100000`         |
//! | `grid`         | `r_min,r_max,points`                                 | whole support    |
//! | `seed`         | base seed                                            | `42`             |
//! | `workers`      | independent random streams                           | `4`              |
//! | `out`          | output file (stdout if absent)                       |                  |
//! | `format`       | `csv`, `json`                                        | `csv`            |
//! | `bins`         | chi-square bins                                      | `50`             |
//! | `ks_tolerance` | KS distance accepted by `validate`                   | `0.01`           |
//! | `max_moment`   | highest moment order for `moments`                   | `4`              |
//! | `beta`         | exponent for `epd-check` power-law fields            | `2.5`            |
//! | `epd_step`     | coarsest finite-difference step                      | `0.01`           |
//! | `epd_points`   | random points per field                              | `20`             |

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Parser;
use serde::Serialize;

use crate::analytic::hyperplane::HyperplaneLaw;
use crate::analytic::sphere::{reflected_law, reflected_moment_closed_form, reflected_radial_cdf};
use crate::analytic::uncond::{
    cdf_distance_reflected_poisson_2d, uncond_free_law, uncond_reflected_law,
};
use crate::analytic::{
    free_radial_cdf, linspace, DensityGrid, DirichletDensity, GridMeta, RadialLaw,
};
use crate::epd::{
    convergence_order, epd_residual, sample_interior_point, ConvergenceOrder, EpdFieldSpec,
    StencilConfig,
};
use crate::error::{Error, Result};
use crate::geometry::{Hyperplane, Point};
use crate::montecarlo::{histogram, Simulation, SimulationResult, Surface};
use crate::sampling::{CountLaw, FlightParams, RandomSource, StepLaw};
use crate::stats::{
    atom_mass_estimate, atom_within_sigmas, chi_square_density, ks_statistic,
    ks_statistic_with_atom, GofReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Simulate,
    Density,
    Cdf,
    Moments,
    Validate,
    EpdCheck,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Density => "density",
            Mode::Cdf => "cdf",
            Mode::Moments => "moments",
            Mode::Validate => "validate",
            Mode::EpdCheck => "epd-check",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "simulate" => Mode::Simulate,
            "density" => Mode::Density,
            "cdf" => Mode::Cdf,
            "moments" => Mode::Moments,
            "validate" => Mode::Validate,
            "epd-check" => Mode::EpdCheck,
            other => return Err(Error::config(format!("unknown mode '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceSpec {
    None,
    Sphere { radius: f64 },
    Hyperplane { normal: Vec<f64>, b: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub r_min: f64,
    pub r_max: f64,
    pub points: usize,
}

/// Everything one run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub params: FlightParams,
    pub count_law: CountLaw,
    pub step_law: StepLaw,
    pub surface: SurfaceSpec,
    pub samples: u64,
    pub grid: Option<GridSpec>,
    pub seed: u64,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub bins: usize,
    pub ks_tolerance: f64,
    pub max_moment: u32,
    pub beta: f64,
    pub epd_step: f64,
    pub epd_points: usize,
}

const KEYS: &[&str] = &[
    "mode",
    "d",
    "c",
    "t",
    "h",
    "count_law",
    "n",
    "lambda",
    "step_law",
    "surface",
    "radius",
    "plane_b",
    "plane_normal",
    "samples",
    "grid",
    "seed",
    "workers",
    "out",
    "format",
    "bins",
    "ks_tolerance",
    "max_moment",
    "beta",
    "epd_step",
    "epd_points",
];

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(format!("cannot parse {key} = '{v}'")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

/// Reads `key = value` lines.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected key = value", i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

impl ExperimentConfig {
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::config(format!("unknown key '{k}'")));
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let num =
            |k: &str, default: f64| -> Result<f64> { get(k).map_or(Ok(default), |v| parse(k, v)) };

        let mode = get("mode").map_or(Ok(Mode::Density), Mode::from_str)?;
        let d = get("d").map_or(Ok(2), |v| parse("d", v))?;
        let h = get("h").map_or(Ok(1), |v| parse("h", v))?;
        let params = FlightParams {
            d,
            c: num("c", 1.0)?,
            t: num("t", 1.0)?,
            h,
        };

        let lambda = get("lambda")
            .map(|v| parse::<f64>("lambda", v))
            .transpose()?;
        let kind = get("count_law").unwrap_or(if lambda.is_some() { "poisson" } else { "fixed" });
        let need_lambda =
            || lambda.ok_or_else(|| Error::config(format!("count_law = {kind} needs lambda")));
        let count_law = match kind {
            "fixed" => CountLaw::Fixed(get("n").map_or(Ok(1), |v| parse("n", v))?),
            "poisson" => CountLaw::Poisson {
                lambda: need_lambda()?,
            },
            "weighted-poisson" => CountLaw::WeightedPoissonMl {
                lambda: need_lambda()?,
            },
            other => return Err(Error::config(format!("unknown count_law '{other}'"))),
        };

        let step_law = match get("step_law").unwrap_or("dirichlet") {
            "dirichlet" => StepLaw::DirichletH,
            "uniform-simplex" => StepLaw::UniformSimplex,
            other => return Err(Error::config(format!("unknown step_law '{other}'"))),
        };

        let radius = get("radius")
            .map(|v| parse::<f64>("radius", v))
            .transpose()?;
        let plane_b = get("plane_b")
            .map(|v| parse::<f64>("plane_b", v))
            .transpose()?;
        let inferred = match (radius, plane_b) {
            (Some(_), Some(_)) => {
                return Err(Error::config("give either radius or plane_b, not both"))
            }
            (Some(_), None) => "sphere",
            (None, Some(_)) => "hyperplane",
            (None, None) => "none",
        };
        let surface = match get("surface").unwrap_or(inferred) {
            "none" => SurfaceSpec::None,
            "sphere" => SurfaceSpec::Sphere {
                radius: radius.ok_or_else(|| Error::config("surface = sphere needs radius"))?,
            },
            "hyperplane" => {
                let b =
                    plane_b.ok_or_else(|| Error::config("surface = hyperplane needs plane_b"))?;
                let normal = match get("plane_normal") {
                    Some(v) => parse_list("plane_normal", v)?,
                    None => {
                        let mut a = vec![0.0; d];
                        if d > 0 {
                            a[d - 1] = 1.0;
                        }
                        a
                    }
                };
                SurfaceSpec::Hyperplane { normal, b }
            }
            other => return Err(Error::config(format!("unknown surface '{other}'"))),
        };

        let grid = match get("grid") {
            None => None,
            Some(v) => {
                let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(Error::config("grid must be r_min,r_max,points"));
                }
                Some(GridSpec {
                    r_min: parse("grid", parts[0])?,
                    r_max: parse("grid", parts[1])?,
                    points: parse("grid", parts[2])?,
                })
            }
        };

        let format = match get("format").unwrap_or("csv") {
            "csv" => Format::Csv,
            "json" => Format::Json,
            other => return Err(Error::config(format!("unknown format '{other}'"))),
        };

        let cfg = ExperimentConfig {
            mode,
            params,
            count_law,
            step_law,
            surface,
            samples: get("samples").map_or(Ok(100_000), |v| parse("samples", v))?,
            grid,
            seed: get("seed").map_or(Ok(42), |v| parse("seed", v))?,
            workers: get("workers").map_or(Ok(4), |v| parse("workers", v))?,
            out: get("out").map(PathBuf::from),
            format,
            bins: get("bins").map_or(Ok(50), |v| parse("bins", v))?,
            ks_tolerance: num("ks_tolerance", 0.01)?,
            max_moment: get("max_moment").map_or(Ok(4), |v| parse("max_moment", v))?,
            beta: num("beta", 2.5)?,
            epd_step: num("epd_step", 0.01)?,
            epd_points: get("epd_points").map_or(Ok(20), |v| parse("epd_points", v))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_map(&parse_config_text(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical key-value form; `parse(to_map)` reproduces the config.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("mode", self.mode.name().into());
        put("d", self.params.d.to_string());
        put("c", self.params.c.to_string());
        put("t", self.params.t.to_string());
        put("h", self.params.h.to_string());
        match self.count_law {
            CountLaw::Fixed(n) => {
                put("count_law", "fixed".into());
                put("n", n.to_string());
            }
            CountLaw::Poisson { lambda } => {
                put("count_law", "poisson".into());
                put("lambda", lambda.to_string());
            }
            CountLaw::WeightedPoissonMl { lambda } => {
                put("count_law", "weighted-poisson".into());
                put("lambda", lambda.to_string());
            }
        }
        put(
            "step_law",
            match self.step_law {
                StepLaw::DirichletH => "dirichlet",
                StepLaw::UniformSimplex => "uniform-simplex",
            }
            .into(),
        );
        match &self.surface {
            SurfaceSpec::None => put("surface", "none".into()),
            SurfaceSpec::Sphere { radius } => {
                put("surface", "sphere".into());
                put("radius", radius.to_string());
            }
            SurfaceSpec::Hyperplane { normal, b } => {
                put("surface", "hyperplane".into());
                put("plane_b", b.to_string());
                let a: Vec<String> = normal.iter().map(f64::to_string).collect();
                put("plane_normal", a.join(","));
            }
        }
        put("samples", self.samples.to_string());
        if let Some(g) = self.grid {
            put("grid", format!("{},{},{}", g.r_min, g.r_max, g.points));
        }
        put("seed", self.seed.to_string());
        put("workers", self.workers.to_string());
        if let Some(o) = &self.out {
            put("out", o.display().to_string());
        }
        put(
            "format",
            match self.format {
                Format::Csv => "csv",
                Format::Json => "json",
            }
            .into(),
        );
        put("bins", self.bins.to_string());
        put("ks_tolerance", self.ks_tolerance.to_string());
        put("max_moment", self.max_moment.to_string());
        put("beta", self.beta.to_string());
        put("epd_step", self.epd_step.to_string());
        put("epd_points", self.epd_points.to_string());
        m
    }

    fn is_axis_plane(&self) -> bool {
        match &self.surface {
            SurfaceSpec::Hyperplane { normal, .. } => {
                let d = normal.len();
                d > 0 && normal[d - 1] > 0.0 && normal[..d - 1].iter().all(|&v| v == 0.0)
            }
            _ => false,
        }
    }

    /// Checks every cross-field invariant; violations are config errors.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| Error::config(e.to_string());
        self.params.validate().map_err(cfg_err)?;
        self.count_law.validate().map_err(cfg_err)?;
        match &self.surface {
            SurfaceSpec::Sphere { radius } if !(*radius > 0.0 && radius.is_finite()) => {
                return Err(Error::config(format!("radius = {radius} must be > 0")));
            }
            SurfaceSpec::Hyperplane { normal, b } => {
                if normal.len() != self.params.d {
                    return Err(Error::config(format!(
                        "plane_normal has {} components, d = {}",
                        normal.len(),
                        self.params.d
                    )));
                }
                Hyperplane::new(normal.clone(), *b).map_err(cfg_err)?;
            }
            _ => {}
        }
        if self.workers == 0 {
            return Err(Error::config("workers must be >= 1"));
        }
        if let Some(g) = self.grid {
            if g.points == 0 || !(g.r_min >= 0.0 && g.r_max >= g.r_min) {
                return Err(Error::config(
                    "grid needs 0 <= r_min <= r_max and points >= 1",
                ));
            }
        }
        let analytic = !matches!(self.mode, Mode::Simulate | Mode::EpdCheck);
        if analytic
            && self.step_law == StepLaw::UniformSimplex
            && self.params.dirichlet_shape() != 1.0
        {
            return Err(Error::config(
                "analytic laws need step_law = dirichlet (uniform-simplex only when d/h = 2)",
            ));
        }
        if analytic && matches!(self.surface, SurfaceSpec::Hyperplane { .. }) {
            if !self.is_axis_plane() {
                return Err(Error::config("hyperplane laws need plane_normal along e_d"));
            }
            if let SurfaceSpec::Hyperplane { b, .. } = self.surface {
                if !(b > 0.0) {
                    return Err(Error::config("hyperplane laws need plane_b > 0"));
                }
            }
        }
        if matches!(self.mode, Mode::Simulate | Mode::Validate) && self.samples == 0 {
            return Err(Error::config("samples must be >= 1"));
        }
        if self.mode == Mode::Validate && self.samples < 2 {
            return Err(Error::config("validate needs samples >= 2"));
        }
        if self.mode == Mode::EpdCheck && !(self.beta >= 0.0 && self.epd_step > 0.0) {
            return Err(Error::config("epd-check needs beta >= 0 and epd_step > 0"));
        }
        Ok(())
    }

    fn plane(&self) -> Result<Option<Hyperplane>> {
        match &self.surface {
            SurfaceSpec::Hyperplane { normal, b } => Ok(Some(Hyperplane::new(normal.clone(), *b)?)),
            _ => Ok(None),
        }
    }

    pub fn simulation(&self) -> Result<Simulation> {
        let surface = match &self.surface {
            SurfaceSpec::None => Surface::Free,
            SurfaceSpec::Sphere { radius } => Surface::Sphere(*radius),
            SurfaceSpec::Hyperplane { .. } => Surface::Hyperplane(self.plane()?.unwrap()),
        };
        Ok(Simulation {
            params: self.params,
            count_law: self.count_law,
            step_law: self.step_law,
            surface,
            samples: self.samples,
            seed: self.seed,
            workers: self.workers,
        })
    }

    fn count_label(&self) -> String {
        match self.count_law {
            CountLaw::Fixed(n) => format!("n={n}"),
            CountLaw::Poisson { lambda } => format!("poisson(lambda={lambda})"),
            CountLaw::WeightedPoissonMl { lambda } => format!("weighted-poisson(lambda={lambda})"),
        }
    }

    fn surface_label(&self) -> String {
        match &self.surface {
            SurfaceSpec::None => "none".into(),
            SurfaceSpec::Sphere { radius } => format!("sphere(R={radius})"),
            SurfaceSpec::Hyperplane { b, .. } => format!("hyperplane(b={b})"),
        }
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.to_map() {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Analytic law of `|X(t)|` matched to a configuration.
pub enum DistanceLaw {
    Radial(RadialLaw),
    Hyperplane(HyperplaneLaw),
}

impl DistanceLaw {
    pub fn for_config(cfg: &ExperimentConfig) -> Result<Self> {
        let p = &cfg.params;
        Ok(match (&cfg.surface, cfg.count_law) {
            (SurfaceSpec::None, CountLaw::Fixed(n)) => {
                let dens = DirichletDensity::new(*p, n)?;
                DistanceLaw::Radial(RadialLaw::free(*p, std::sync::Arc::new(dens), 0.0))
            }
            (SurfaceSpec::None, law) => DistanceLaw::Radial(uncond_free_law(p, law)?),
            (SurfaceSpec::Sphere { radius }, CountLaw::Fixed(n)) => {
                DistanceLaw::Radial(reflected_law(p, n, *radius)?)
            }
            (SurfaceSpec::Sphere { radius }, law) => {
                DistanceLaw::Radial(uncond_reflected_law(p, law, *radius)?)
            }
            (SurfaceSpec::Hyperplane { .. }, law) => {
                let plane = cfg.plane()?.unwrap();
                DistanceLaw::Hyperplane(match law {
                    CountLaw::Fixed(n) => HyperplaneLaw::conditional(*p, plane, n)?,
                    law => HyperplaneLaw::unconditional(*p, plane, law)?,
                })
            }
        })
    }

    pub fn support_max(&self, cfg: &ExperimentConfig) -> f64 {
        match self {
            DistanceLaw::Radial(l) => l.r_max(),
            DistanceLaw::Hyperplane(_) => cfg.params.ct(),
        }
    }

    /// Singular mass and, for a single atom, its location.
    pub fn atom(&self) -> (f64, Option<f64>) {
        match self {
            DistanceLaw::Radial(l) => l.atom().map_or((0.0, None), |a| (a.mass, Some(a.location))),
            DistanceLaw::Hyperplane(h) => (h.singular_mass(), None),
        }
    }

    /// `P{|X| <= r}`, preferring closed forms where they exist.
    pub fn cdf(&self, cfg: &ExperimentConfig, r: f64) -> Result<f64> {
        if r <= 0.0 {
            return Ok(0.0);
        }
        let p = &cfg.params;
        match (self, &cfg.surface, cfg.count_law) {
            (DistanceLaw::Hyperplane(h), ..) => h.distance_cdf(r),
            (DistanceLaw::Radial(_), SurfaceSpec::None, CountLaw::Fixed(n)) => {
                free_radial_cdf(r, p, n)
            }
            (DistanceLaw::Radial(l), SurfaceSpec::Sphere { radius }, CountLaw::Fixed(n)) => {
                if r >= l.r_max() {
                    Ok(1.0)
                } else if p.ct() <= *radius {
                    free_radial_cdf(r, p, n)
                } else {
                    reflected_radial_cdf(r, p, n, *radius)
                }
            }
            (
                DistanceLaw::Radial(l),
                SurfaceSpec::Sphere { radius },
                CountLaw::Poisson { lambda },
            ) if p.d == 2 && p.h == 1 && p.ct() > *radius => {
                if r >= l.r_max() {
                    Ok(1.0)
                } else {
                    cdf_distance_reflected_poisson_2d(r, p.c, p.t, lambda, *radius)
                }
            }
            (DistanceLaw::Radial(l), ..) => l.cdf(r),
        }
    }
}

fn grid_for(cfg: &ExperimentConfig, law: &DistanceLaw) -> Result<Vec<f64>> {
    let g = cfg.grid.unwrap_or(GridSpec {
        r_min: 0.0,
        r_max: law.support_max(cfg),
        points: 101,
    });
    linspace(g.r_min, g.r_max, g.points)
}

fn meta(cfg: &ExperimentConfig, law: &DistanceLaw, what: &str) -> GridMeta {
    let (mass, location) = law.atom();
    GridMeta {
        params: cfg.params,
        count: cfg.count_label(),
        surface: cfg.surface_label(),
        law: what.into(),
        atom: location.map(|location| crate::analytic::Atom { location, mass }),
    }
}

/// Density and CDF table for `density` (quadrature CDF) or `cdf` (closed-form
/// CDF where available).
pub fn density_grid(cfg: &ExperimentConfig, closed_cdf: bool) -> Result<DensityGrid> {
    let law = DistanceLaw::for_config(cfg)?;
    let radii = grid_for(cfg, &law)?;
    match &law {
        DistanceLaw::Radial(l) => {
            let density: Vec<f64> = radii.iter().map(|&r| l.density(r)).collect();
            let cartesian: Vec<f64> = radii.iter().map(|&r| l.cartesian(r)).collect();
            let cdf = radii
                .iter()
                .map(|&r| {
                    if closed_cdf {
                        law.cdf(cfg, r)
                    } else {
                        l.cdf(r)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let what =
                "density of |X(t)| (continuous part), density of X(t) at norm r, P{|X(t)| <= r}";
            DensityGrid::from_columns(meta(cfg, &law, what), radii, density, cartesian, cdf)
        }
        DistanceLaw::Hyperplane(h) => {
            let normal = match &cfg.surface {
                SurfaceSpec::Hyperplane { normal, .. } => normal.clone(),
                _ => unreachable!(),
            };
            let na = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
            let cartesian = radii
                .iter()
                .map(|&r| h.density(&Point::new(normal.iter().map(|a| r * a / na).collect())?))
                .collect::<Result<Vec<_>>>()?;
            let top = law.support_max(cfg);
            let cdf_at = |r: f64| law.cdf(cfg, r.clamp(0.0, top));
            let cdf = radii
                .iter()
                .map(|&r| cdf_at(r))
                .collect::<Result<Vec<_>>>()?;
            // no closed radial density: central difference of the distance CDF
            let step = 1e-5 * top;
            let density = radii
                .iter()
                .map(|&r| {
                    let (lo, hi) = ((r - step).max(0.0), (r + step).min(top));
                    Ok(((cdf_at(hi)? - cdf_at(lo)?) / (hi - lo)).max(0.0))
                })
                .collect::<Result<Vec<_>>>()?;
            let what = "density of |X'(t)| (difference quotient of the CDF), \
                        density of X'(t) at r * a/|a|, P{|X'(t)| <= r}";
            DensityGrid::from_columns(meta(cfg, &law, what), radii, density, cartesian, cdf)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRow {
    pub m: u32,
    pub quadrature: f64,
    pub closed_form: Option<f64>,
}

/// `E|X(t)|^m` for `m = 1..=max_moment`.
pub fn moment_table(cfg: &ExperimentConfig) -> Result<Vec<MomentRow>> {
    let law = match DistanceLaw::for_config(cfg)? {
        DistanceLaw::Radial(l) => l,
        DistanceLaw::Hyperplane(_) => {
            return Err(Error::config(
                "moments are available for free and sphere flights",
            ))
        }
    };
    (1..=cfg.max_moment)
        .map(|m| {
            let closed_form = match (&cfg.surface, cfg.count_law) {
                (SurfaceSpec::Sphere { radius }, CountLaw::Fixed(n))
                    if (m as usize) < cfg.params.d =>
                {
                    Some(reflected_moment_closed_form(m, &cfg.params, n, *radius)?)
                }
                _ => None,
            };
            Ok(MomentRow {
                m,
                quadrature: law.moment(m)?,
                closed_form,
            })
        })
        .collect()
}

/// Simulates the configured flight and compares it with its analytic law.
pub fn validate_run(cfg: &ExperimentConfig) -> Result<(GofReport, SimulationResult)> {
    let law = DistanceLaw::for_config(cfg)?;
    let sim = cfg.simulation()?.run()?;
    let (atom_mass, atom_location) = law.atom();
    let batch = sim.batch();
    let (ks_distance, ks_pvalue) = match &law {
        DistanceLaw::Hyperplane(_) => {
            let all = crate::stats::SampleBatch::new(sim.all_distances(), 0)?;
            ks_statistic(&all, |r| law.cdf(cfg, r).unwrap_or(f64::NAN))?
        }
        DistanceLaw::Radial(_) => match atom_location {
            Some(loc) => ks_statistic_with_atom(
                &batch,
                |r| law.cdf(cfg, r).unwrap_or(f64::NAN),
                loc,
                atom_mass,
            )?,
            None => {
                if batch.atom_count > 0 {
                    return Err(Error::precision(
                        "zero-deviation flights under a law without atom",
                    ));
                }
                ks_statistic(&batch, |r| law.cdf(cfg, r).unwrap_or(f64::NAN))?
            }
        },
    };
    if !ks_distance.is_finite() {
        return Err(Error::precision("analytic CDF failed during the KS scan"));
    }
    let chi2 = match &law {
        DistanceLaw::Radial(l) if batch.values.len() >= 10 * cfg.bins.max(2) => {
            let scale = 1.0 / (1.0 - atom_mass);
            Some(chi_square_density(
                &batch,
                |r| scale * l.density(r),
                0.0,
                l.r_max(),
                cfg.bins.max(2),
            )?)
        }
        _ => None,
    };
    let est = atom_mass_estimate(&batch, 3.0)?;
    let atom_ok = atom_within_sigmas(&batch, atom_mass, 3.0);
    let passed = ks_distance < cfg.ks_tolerance && atom_ok && sim.violations == 0;
    Ok((
        GofReport {
            samples: sim.total(),
            ks_distance,
            ks_pvalue,
            chi2,
            atom_mass_hat: est.mass,
            atom_ci: (est.lo, est.hi),
            atom_mass_exact: atom_mass,
            passed,
        },
        sim,
    ))
}

/// One line of an `epd-check` report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpdRow {
    pub kind: &'static str,
    pub beta: f64,
    pub control: bool,
    pub point: Vec<f64>,
    pub step: f64,
    pub residual: f64,
    pub relative: f64,
    /// `None` on the coarsest step; `Some(None)` when converged to rounding.
    pub order: Option<Option<f64>>,
}

const EPD_HALVINGS: usize = 3;

/// Residuals of every field applicable to the configuration at
/// `epd_points` random interior points, over three step halvings.
pub fn epd_report(cfg: &ExperimentConfig) -> Result<Vec<EpdRow>> {
    let p = cfg.params;
    let t = p.t;
    let mut specs = vec![
        (EpdFieldSpec::fbeta(p, cfg.beta)?, false),
        (
            EpdFieldSpec::fbeta(p, cfg.beta)?.with_coef_offset(-1.0),
            true,
        ),
    ];
    if let CountLaw::Fixed(n) = cfg.count_law {
        if n >= 1 {
            specs.push((EpdFieldSpec::pdensity(p, n)?, false));
        }
    }
    match &cfg.surface {
        SurfaceSpec::Sphere { radius } if p.ct() > *radius => {
            specs.push((EpdFieldSpec::fbar(p, cfg.beta, *radius)?, false));
            if let CountLaw::Fixed(n) = cfg.count_law {
                if n >= 1 {
                    specs.push((EpdFieldSpec::pbar(p, n, *radius)?, false));
                }
            }
        }
        SurfaceSpec::Hyperplane { .. } => {
            specs.push((
                EpdFieldSpec::fhat(p, cfg.beta, cfg.plane()?.unwrap())?,
                false,
            ));
        }
        _ => {}
    }
    let mut rng = RandomSource::new(cfg.seed);
    let mut rows = Vec::new();
    for (spec, control) in &specs {
        for _ in 0..cfg.epd_points {
            let x = sample_interior_point(spec, t, 10.0 * cfg.epd_step, &mut rng)?;
            let mut stencil = StencilConfig::uniform(cfg.epd_step)?;
            for level in 0..=EPD_HALVINGS {
                let res = epd_residual(spec, &x, t, &stencil)?;
                let order = if level == 0 {
                    None
                } else {
                    let coarse = StencilConfig::uniform(2.0 * stencil.step_space)?;
                    Some(match convergence_order(spec, &x, t, &coarse)? {
                        ConvergenceOrder::Order(q) => Some(q),
                        ConvergenceOrder::Converged => None,
                    })
                };
                rows.push(EpdRow {
                    kind: spec.kind().name(),
                    beta: spec.beta(),
                    control: *control,
                    point: x.coords().to_vec(),
                    step: stencil.step_space,
                    residual: res.absolute,
                    relative: res.relative,
                    order,
                });
                stencil = stencil.halved();
            }
        }
    }
    Ok(rows)
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Box::new(BufWriter::new(File::create(p)?))
        }
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Io(e.to_string())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = path
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}{ext}"))
}

/// Outcome of [`run_experiment`]: `passed` is false only for a failed
/// `validate` run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunStatus {
    pub passed: bool,
}

/// Runs the configured mode and writes its artifacts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunStatus> {
    cfg.validate()?;
    let mut passed = true;
    match cfg.mode {
        Mode::Simulate => {
            let sim = cfg.simulation()?.run()?;
            let hi = match &cfg.surface {
                SurfaceSpec::Sphere { radius } => radius.min(cfg.params.ct()),
                _ => cfg.params.ct(),
            };
            let bins = cfg.bins.max(1);
            let (centres, dens) = histogram(&sim.distances, 0.0, hi, bins);
            let mut out = open_out(&cfg.out)?;
            match cfg.format {
                Format::Json => {
                    let doc = serde_json::json!({
                        "meta": { "config": cfg.to_map() },
                        "samples": sim,
                        "histogram": { "r": centres, "density": dens },
                    });
                    serde_json::to_writer_pretty(&mut out, &doc).map_err(json_err)?;
                    writeln!(out)?;
                }
                Format::Csv => {
                    writeln!(out, "distance,deviations_zero")?;
                    for r in &sim.distances {
                        writeln!(out, "{r},0")?;
                    }
                    for r in &sim.atom_distances {
                        writeln!(out, "{r},1")?;
                    }
                    out.flush()?;
                    let mut hist: Box<dyn Write> = match &cfg.out {
                        Some(p) => open_out(&Some(sibling(p, "_hist")))?,
                        None => Box::new(BufWriter::new(std::io::stdout())),
                    };
                    writeln!(hist, "r,density")?;
                    for (c, v) in centres.iter().zip(&dens) {
                        writeln!(hist, "{c},{v}")?;
                    }
                    hist.flush()?;
                }
            }
        }
        Mode::Density | Mode::Cdf => {
            let grid = density_grid(cfg, cfg.mode == Mode::Cdf)?;
            let mut out = open_out(&cfg.out)?;
            match cfg.format {
                Format::Csv => grid.write_csv(&mut out)?,
                Format::Json => {
                    grid.write_json(&mut out)?;
                    writeln!(out)?;
                }
            }
            out.flush()?;
        }
        Mode::Moments => {
            let rows = moment_table(cfg)?;
            let mut out = open_out(&cfg.out)?;
            match cfg.format {
                Format::Csv => {
                    writeln!(out, "m,quadrature,closed_form")?;
                    for r in &rows {
                        let cf = r.closed_form.map(|v| v.to_string()).unwrap_or_default();
                        writeln!(out, "{},{},{cf}", r.m, r.quadrature)?;
                    }
                }
                Format::Json => {
                    let doc =
                        serde_json::json!({ "meta": { "config": cfg.to_map() }, "moments": rows });
                    serde_json::to_writer_pretty(&mut out, &doc).map_err(json_err)?;
                    writeln!(out)?;
                }
            }
            out.flush()?;
        }
        Mode::Validate => {
            let (report, _) = validate_run(cfg)?;
            passed = report.passed;
            let mut out = open_out(&cfg.out)?;
            match cfg.format {
                Format::Json => writeln!(out, "{}", report.to_json()?)?,
                Format::Csv => {
                    writeln!(out, "key,value")?;
                    writeln!(out, "samples,{}", report.samples)?;
                    writeln!(out, "ks_distance,{}", report.ks_distance)?;
                    writeln!(out, "ks_pvalue,{}", report.ks_pvalue)?;
                    if let Some(c) = report.chi2 {
                        writeln!(out, "chi2,{}", c.chi2)?;
                        writeln!(out, "chi2_dof,{}", c.dof)?;
                        writeln!(out, "chi2_pvalue,{}", c.pvalue)?;
                    }
                    writeln!(out, "atom_mass_hat,{}", report.atom_mass_hat)?;
                    writeln!(out, "atom_ci_lo,{}", report.atom_ci.0)?;
                    writeln!(out, "atom_ci_hi,{}", report.atom_ci.1)?;
                    writeln!(out, "atom_mass_exact,{}", report.atom_mass_exact)?;
                    writeln!(out, "passed,{}", report.passed)?;
                }
            }
            out.flush()?;
        }
        Mode::EpdCheck => {
            let rows = epd_report(cfg)?;
            let mut out = open_out(&cfg.out)?;
            match cfg.format {
                Format::Json => {
                    serde_json::to_writer_pretty(&mut out, &rows).map_err(json_err)?;
                    writeln!(out)?;
                }
                Format::Csv => {
                    writeln!(out, "kind,beta,control,point,step,residual,relative,order")?;
                    for r in &rows {
                        let pt: Vec<String> = r.point.iter().map(f64::to_string).collect();
                        let order = match r.order {
                            None => String::new(),
                            Some(None) => "converged".into(),
                            Some(Some(q)) => q.to_string(),
                        };
                        writeln!(
                            out,
                            "{},{},{},{},{},{},{},{order}",
                            r.kind,
                            r.beta,
                            r.control,
                            pt.join(" "),
                            r.step,
                            r.residual,
                            r.relative
                        )?;
                    }
                }
            }
            out.flush()?;
        }
    }
    Ok(RunStatus { passed })
}

/// Process exit code for an outcome.
pub fn exit_code(result: &Result<RunStatus>) -> i32 {
    match result {
        Ok(RunStatus { passed: true }) => 0,
        Ok(RunStatus { passed: false }) => 4,
        Err(Error::Config(_)) | Err(Error::Domain(_)) => 2,
        Err(Error::Precision(_)) => 3,
        Err(Error::Io(_)) => 1,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "rflight",
    version,
    about = "Random flights reflected on spheres and hyperplanes"
)]
struct Args {
    /// What to run.
    #[arg(value_enum)]
    mode: Mode,
    /// Key-value configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    c: Option<String>,
    #[arg(long)]
    t: Option<String>,
    #[arg(long)]
    h: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    /// fixed | poisson | weighted-poisson
    #[arg(long)]
    count_law: Option<String>,
    /// dirichlet | uniform-simplex
    #[arg(long)]
    step_law: Option<String>,
    /// Reflect in the sphere of this radius.
    #[arg(long)]
    radius: Option<String>,
    /// Reflect in the hyperplane x_d = b.
    #[arg(long)]
    plane_b: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    /// r_min,r_max,points
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv | json
    #[arg(long)]
    format: Option<String>,
    /// Any other key, as KEY=VALUE.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

fn resolve(args: &Args) -> Result<ExperimentConfig> {
    let mut map = match &args.config {
        Some(p) => parse_config_text(&std::fs::read_to_string(p)?)?,
        None => BTreeMap::new(),
    };
    let flags = [
        ("d", &args.d),
        ("c", &args.c),
        ("t", &args.t),
        ("h", &args.h),
        ("n", &args.n),
        ("lambda", &args.lambda),
        ("count_law", &args.count_law),
        ("step_law", &args.step_law),
        ("radius", &args.radius),
        ("plane_b", &args.plane_b),
        ("samples", &args.samples),
        ("grid", &args.grid),
        ("seed", &args.seed),
        ("workers", &args.workers),
        ("format", &args.format),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            map.insert(k.to_string(), v.clone());
        }
    }
    if args.radius.is_some() {
        map.remove("plane_b");
        map.insert("surface".into(), "sphere".into());
    }
    if args.plane_b.is_some() {
        map.remove("radius");
        map.insert("surface".into(), "hyperplane".into());
    }
    if args.n.is_some() && args.count_law.is_none() && args.lambda.is_none() {
        map.insert("count_law".into(), "fixed".into());
    }
    if let Some(o) = &args.out {
        map.insert("out".into(), o.display().to_string());
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    map.insert("mode".into(), args.mode.name().into());
    ExperimentConfig::from_map(&map)
}

/// Entry point of the binary; returns the process exit code.
pub fn run_from_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = resolve(&args).and_then(|cfg| {
        if args.print_config {
            print!("{cfg}");
            return Ok(RunStatus { passed: true });
        }
        run_experiment(&cfg)
    });
    match &result {
        Err(e) => eprintln!("rflight: {e}"),
        Ok(RunStatus { passed: false }) => eprintln!("rflight: validation failed"),
        _ => {}
    }
    exit_code(&result)
}
