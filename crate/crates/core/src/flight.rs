//! Free random flights and their reflected versions.

use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::{
    classify_sphere_region, invert_in_sphere, reflect_in_hyperplane, Hyperplane, Point,
    ReflectionSphere, SphereRegion,
};
use crate::sampling::{draw_unit, DisplacementSampler, FlightParams, RandomSource, StepLaw};

/// Vertices of a piecewise-linear flight path.
///
/// `vertices[0]` is the origin and `vertices[n + 1]` the terminal point;
/// `times` holds `0 = t_0 < t_1 < ... < t_n` followed by the horizon `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub vertices: Vec<Point>,
    pub times: Vec<f64>,
}

impl Trajectory {
    pub fn terminal(&self) -> &Point {
        self.vertices
            .last()
            .expect("trajectory has at least two vertices")
    }

    pub fn deviations(&self) -> usize {
        self.vertices.len() - 2
    }

    /// Writes one row per vertex: `index,time,x1,...,xd`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.vertices[0].dim();
        let header: Vec<String> = ["index".to_string(), "time".to_string()]
            .into_iter()
            .chain((1..=d).map(|i| format!("x{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (i, (p, t)) in self.vertices.iter().zip(&self.times).enumerate() {
            let coords: Vec<String> = p.coords().iter().map(|c| c.to_string()).collect();
            writeln!(out, "{i},{t},{}", coords.join(","))?;
        }
        Ok(())
    }
}

/// Terminal state of one flight, free and reflected.
#[derive(Debug, Clone, PartialEq)]
pub struct FlightOutcome {
    pub free_position: Point,
    pub reflected_position: Point,
    pub n: usize,
    pub reflected_flag: bool,
    /// Set for flights without deviations, whose terminal point lies on the
    /// singular support (`S_ct` free, `S_{R²/ct}` after sphere reflection).
    pub atom_flag: bool,
}

/// Reflecting surface.
#[derive(Debug, Clone, PartialEq)]
pub enum Reflector {
    Sphere(ReflectionSphere),
    Hyperplane(Hyperplane),
}

/// Draws flights for fixed parameters; reusable across many samples.
#[derive(Debug, Clone)]
pub struct FlightSampler {
    params: FlightParams,
    steps: DisplacementSampler,
}

impl FlightSampler {
    pub fn new(params: FlightParams, law: StepLaw) -> Result<Self> {
        params.validate()?;
        Ok(FlightSampler {
            params,
            steps: DisplacementSampler::new(&params, law)?,
        })
    }

    pub fn params(&self) -> &FlightParams {
        &self.params
    }

    pub fn trajectory(&self, n: usize, rng: &mut RandomSource) -> Trajectory {
        let d = self.params.d;
        let c = self.params.c;
        let tau = self.steps.sample(n, rng);
        let mut vertices = Vec::with_capacity(n + 2);
        let mut times = Vec::with_capacity(n + 2);
        let mut pos = vec![0.0; d];
        let mut clock = 0.0;
        vertices.push(Point::from_vec_unchecked(pos.clone()));
        times.push(0.0);
        for (k, &tk) in tau.tau().iter().enumerate() {
            let v = draw_unit(d, rng);
            for (p, vi) in pos.iter_mut().zip(&v) {
                *p += c * tk * vi;
            }
            clock = if k == n { self.params.t } else { clock + tk };
            vertices.push(Point::from_vec_unchecked(pos.clone()));
            times.push(clock);
        }
        Trajectory { vertices, times }
    }

    /// Terminal point only, without storing the path.
    pub fn terminal(&self, n: usize, rng: &mut RandomSource) -> Point {
        let d = self.params.d;
        let c = self.params.c;
        let tau = self.steps.sample(n, rng);
        let mut pos = vec![0.0; d];
        for &tk in tau.tau() {
            let v = draw_unit(d, rng);
            for (p, vi) in pos.iter_mut().zip(&v) {
                *p += c * tk * vi;
            }
        }
        Point::from_vec_unchecked(pos)
    }
}

/// One free flight with `n` deviations.
pub fn free_flight(
    params: FlightParams,
    n: usize,
    law: StepLaw,
    rng: &mut RandomSource,
) -> Result<Trajectory> {
    Ok(FlightSampler::new(params, law)?.trajectory(n, rng))
}

/// Reflection of a free terminal point in the sphere of radius `radius`.
pub fn reflect_terminal_sphere(
    x: &Point,
    n: usize,
    radius: f64,
    params: &FlightParams,
) -> Result<FlightOutcome> {
    let sphere = ReflectionSphere::new(radius)?;
    let identity = FlightOutcome {
        free_position: x.clone(),
        reflected_position: x.clone(),
        n,
        reflected_flag: false,
        atom_flag: n == 0,
    };
    if params.ct() <= radius {
        return Ok(identity);
    }
    match classify_sphere_region(x, radius, params.ct()) {
        SphereRegion::InsideBall => Ok(identity),
        SphereRegion::OnSphere(s) if s == radius => Ok(identity),
        _ => Ok(FlightOutcome {
            reflected_position: invert_in_sphere(x, &sphere)?,
            reflected_flag: true,
            ..identity
        }),
    }
}

/// Reflection of a free terminal point in a hyperplane.
pub fn reflect_terminal_hyperplane(
    x: &Point,
    n: usize,
    plane: &Hyperplane,
    params: &FlightParams,
) -> Result<FlightOutcome> {
    if x.dim() != plane.dim() {
        return Err(Error::domain(format!(
            "point dimension {} differs from hyperplane dimension {}",
            x.dim(),
            plane.dim()
        )));
    }
    let identity = FlightOutcome {
        free_position: x.clone(),
        reflected_position: x.clone(),
        n,
        reflected_flag: false,
        atom_flag: n == 0,
    };
    if params.t < plane.first_contact_time(params.c) || plane.level(x) < plane.offset() {
        return Ok(identity);
    }
    Ok(FlightOutcome {
        reflected_position: mirror_below(x, plane),
        reflected_flag: true,
        ..identity
    })
}

// Mirror image, nudged back if rounding lands it beyond the hyperplane.
fn mirror_below(x: &Point, plane: &Hyperplane) -> Point {
    let mut y = reflect_in_hyperplane(x, plane);
    let a2: f64 = plane.normal().iter().map(|a| a * a).sum();
    for _ in 0..4 {
        let excess = plane.level(&y) - plane.offset();
        if excess <= 0.0 {
            break;
        }
        let step = -(excess / a2).max(f64::EPSILON * plane.offset().abs().max(1.0)) * 2.0;
        y = y.offset(plane.normal(), step);
    }
    y
}

/// Reflected flight in the sphere of radius `radius` (terminal position only).
pub fn reflect_flight_sphere(
    traj: &Trajectory,
    radius: f64,
    params: &FlightParams,
) -> Result<FlightOutcome> {
    reflect_terminal_sphere(traj.terminal(), traj.deviations(), radius, params)
}

/// Reflected flight in a hyperplane (terminal position only).
pub fn reflect_flight_hyperplane(
    traj: &Trajectory,
    plane: &Hyperplane,
    params: &FlightParams,
) -> Result<FlightOutcome> {
    reflect_terminal_hyperplane(traj.terminal(), traj.deviations(), plane, params)
}

/// Samples every segment of `traj` at `samples_per_segment` evenly spaced
/// points and maps the points lying beyond the surface back inside.
pub fn render_reflected_path(
    traj: &Trajectory,
    surface: &Reflector,
    samples_per_segment: usize,
) -> Result<Vec<Point>> {
    if samples_per_segment < 2 {
        return Err(Error::domain("samples_per_segment must be >= 2"));
    }
    let map = |p: Point| -> Result<Point> {
        match surface {
            Reflector::Sphere(s) => {
                if p.norm() > s.radius() {
                    invert_in_sphere(&p, s)
                } else {
                    Ok(p)
                }
            }
            Reflector::Hyperplane(h) => {
                if h.level(&p) > h.offset() {
                    Ok(reflect_in_hyperplane(&p, h))
                } else {
                    Ok(p)
                }
            }
        }
    };
    let m = samples_per_segment - 1;
    let mut out = Vec::with_capacity(traj.vertices.len() * m + 1);
    out.push(map(traj.vertices[0].clone())?);
    for pair in traj.vertices.windows(2) {
        let (a, b) = (pair[0].coords(), pair[1].coords());
        for k in 1..=m {
            let s = k as f64 / m as f64;
            let p: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect();
            out.push(map(Point::from_vec_unchecked(p))?);
        }
    }
    Ok(out)
}
