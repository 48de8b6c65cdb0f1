//! Seeded Monte Carlo runs of free and reflected flights.
//!
//! A run with `workers = k` splits the samples into `k` chunks; chunk `i`
//! draws from `RandomSource::stream(seed, i)` and chunks are concatenated in
//! index order, so the output depends on `(seed, workers)` only, never on
//! thread scheduling or on whether the `parallel` feature is enabled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flight::{reflect_terminal_hyperplane, reflect_terminal_sphere, FlightSampler};
use crate::geometry::Hyperplane;
use crate::par::map_indexed;
use crate::sampling::{CountLaw, CountSampler, FlightParams, RandomSource, StepLaw};
use crate::stats::SampleBatch;

/// Reflecting surface of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum Surface {
    Free,
    Sphere(f64),
    Hyperplane(Hyperplane),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub params: FlightParams,
    pub count_law: CountLaw,
    pub step_law: StepLaw,
    pub surface: Surface,
    pub samples: u64,
    pub seed: u64,
    pub workers: usize,
}

/// Terminal distances `|X(t)|` after reflection, with the zero-deviation
/// flights kept apart.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimulationResult {
    /// Flights with at least one deviation.
    pub distances: Vec<f64>,
    /// Flights without deviations.
    pub atom_distances: Vec<f64>,
    /// Flights whose terminal point was mapped by the surface.
    pub reflected: u64,
    /// Reflected points found beyond a hyperplane (must stay zero).
    pub violations: u64,
    /// `counts[n]` flights had `n` deviations.
    pub counts: Vec<u64>,
}

impl SimulationResult {
    pub fn total(&self) -> u64 {
        (self.distances.len() + self.atom_distances.len()) as u64
    }

    /// Continuous part as values, zero-deviation flights as the atom count.
    pub fn batch(&self) -> SampleBatch {
        SampleBatch {
            values: self.distances.clone(),
            atom_count: self.atom_distances.len() as u64,
            total: self.total(),
        }
    }

    /// Every distance, zero-deviation flights included.
    pub fn all_distances(&self) -> Vec<f64> {
        let mut v = self.distances.clone();
        v.extend_from_slice(&self.atom_distances);
        v
    }

    /// Sample mean and standard error of `|X|^m` over all flights.
    pub fn moment(&self, m: u32) -> (f64, f64) {
        let vals: Vec<f64> = self
            .distances
            .iter()
            .chain(&self.atom_distances)
            .map(|r| r.powi(m as i32))
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    fn merge(&mut self, other: SimulationResult) {
        self.distances.extend(other.distances);
        self.atom_distances.extend(other.atom_distances);
        self.reflected += other.reflected;
        self.violations += other.violations;
        if other.counts.len() > self.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
    }
}

/// Equal-width histogram of `values` on `[lo, hi]`: `(bin centres, densities)`.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> (Vec<f64>, Vec<f64>) {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &v in values {
        if v >= lo && v <= hi {
            counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
        }
    }
    let n = values.len().max(1) as f64;
    let centres = (0..bins).map(|k| lo + (k as f64 + 0.5) * width).collect();
    let dens = counts.iter().map(|&c| c as f64 / (n * width)).collect();
    (centres, dens)
}

impl Simulation {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.count_law.validate()?;
        if self.workers == 0 {
            return Err(Error::config("workers must be >= 1"));
        }
        if self.samples == 0 {
            return Err(Error::config("samples must be >= 1"));
        }
        match &self.surface {
            Surface::Sphere(r) if !(*r > 0.0 && r.is_finite()) => {
                Err(Error::config(format!("sphere radius {r} must be > 0")))
            }
            Surface::Hyperplane(p) if p.dim() != self.params.d => {
                Err(Error::config("hyperplane dimension differs from d"))
            }
            _ => Ok(()),
        }
    }

    pub fn run(&self) -> Result<SimulationResult> {
        self.validate()?;
        let flights = FlightSampler::new(self.params, self.step_law)?;
        let counts = CountSampler::new(self.params.t, self.count_law, &self.params)?;
        let k = self.workers as u64;
        let chunks = map_indexed(self.workers, |i| {
            let i = i as u64;
            let len = self.samples / k + u64::from(i < self.samples % k);
            let mut rng = RandomSource::stream(self.seed, i);
            self.run_chunk(len, &flights, &counts, &mut rng)
        });
        let mut out = SimulationResult::default();
        for c in chunks {
            out.merge(c?);
        }
        Ok(out)
    }

    fn run_chunk(
        &self,
        len: u64,
        flights: &FlightSampler,
        counts: &CountSampler,
        rng: &mut RandomSource,
    ) -> Result<SimulationResult> {
        let mut out = SimulationResult::default();
        for _ in 0..len {
            let n = counts.sample(rng) as usize;
            let x = flights.terminal(n, rng);
            let (r, reflected) = match &self.surface {
                Surface::Free => (x.norm(), false),
                Surface::Sphere(radius) => {
                    let o = reflect_terminal_sphere(&x, n, *radius, &self.params)?;
                    (o.reflected_position.norm(), o.reflected_flag)
                }
                Surface::Hyperplane(plane) => {
                    let o = reflect_terminal_hyperplane(&x, n, plane, &self.params)?;
                    if plane.level(&o.reflected_position) > plane.offset() {
                        out.violations += 1;
                    }
                    (o.reflected_position.norm(), o.reflected_flag)
                }
            };
            out.reflected += u64::from(reflected);
            if out.counts.len() <= n {
                out.counts.resize(n + 1, 0);
            }
            out.counts[n] += 1;
            if n == 0 {
                out.atom_distances.push(r);
            } else {
                out.distances.push(r);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(workers: usize, surface: Surface) -> Simulation {
        Simulation {
            params: FlightParams::new(2, 1.0, 2.0, 1).unwrap(),
            count_law: CountLaw::Poisson { lambda: 1.0 },
            step_law: StepLaw::DirichletH,
            surface,
            samples: 2001,
            seed: 42,
            workers,
        }
    }

    #[test]
    fn deterministic_and_partitioned() {
        let a = sim(3, Surface::Sphere(1.0)).run().unwrap();
        let b = sim(3, Surface::Sphere(1.0)).run().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.total(), 2001);
        assert_eq!(a.counts.iter().sum::<u64>(), 2001);
        assert!(a
            .distances
            .iter()
            .chain(&a.atom_distances)
            .all(|&r| r <= 1.0 + 1e-12));
        for r in &a.atom_distances {
            assert!((r - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn hyperplane_has_no_violations() {
        let plane = Hyperplane::axis(2, 0.6).unwrap();
        let r = sim(2, Surface::Hyperplane(plane)).run().unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.reflected > 0);
    }

    #[test]
    fn histogram_integrates_to_one() {
        let (_, d) = histogram(&[0.1, 0.2, 0.25, 0.9], 0.0, 1.0, 10);
        let s: f64 = d.iter().map(|v| v * 0.1).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        let mut s = sim(0, Surface::Free);
        assert!(matches!(s.run(), Err(Error::Config(_))));
        s.workers = 1;
        s.surface = Surface::Sphere(-1.0);
        assert!(s.run().is_err());
    }
}
