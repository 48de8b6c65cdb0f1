//! Goodness-of-fit machinery tying Monte Carlo batches to analytic laws.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::quad::{integrate, QuadTolerance};

/// Radial samples split into the absolutely continuous part and the count of
/// samples that landed on the singular sphere.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SampleBatch {
    pub values: Vec<f64>,
    pub atom_count: u64,
    pub total: u64,
}

impl SampleBatch {
    pub fn new(values: Vec<f64>, atom_count: u64) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite sample {v}")));
        }
        let total = values.len() as u64 + atom_count;
        Ok(SampleBatch {
            values,
            atom_count,
            total,
        })
    }

    /// Append `other`; batches merge associatively.
    pub fn merge(&mut self, other: SampleBatch) {
        self.values.extend(other.values);
        self.atom_count += other.atom_count;
        self.total += other.total;
    }

    pub fn atom_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.atom_count as f64 / self.total as f64
        }
    }
}

/// Asymptotic Kolmogorov tail `P{sqrt(N) D > λ}` with the usual small-sample
/// correction of `λ`.
pub fn kolmogorov_pvalue(distance: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * distance;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

// sup |F_emp - F| over sorted data, where F may jump: `left(x)` is F(x-)
fn sup_distance<F, L>(sorted: &[f64], cdf: F, left: L) -> f64
where
    F: Fn(f64) -> f64,
    L: Fn(f64) -> f64,
{
    let n = sorted.len() as f64;
    let mut best: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == x {
            j += 1;
        }
        best = best
            .max((i as f64 / n - left(x)).abs())
            .max((j as f64 / n - cdf(x)).abs());
        i = j;
    }
    best
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// KS distance and p-value of the continuous part of `batch` against `cdf`,
/// which must be the CDF of the continuous part alone.
pub fn ks_statistic<F: Fn(f64) -> f64>(batch: &SampleBatch, cdf: F) -> Result<(f64, f64)> {
    if batch.values.is_empty() {
        return Err(Error::domain("KS statistic of an empty batch"));
    }
    let v = sorted(&batch.values);
    let d = sup_distance(&v, &cdf, &cdf);
    Ok((d, kolmogorov_pvalue(d, v.len())))
}

/// KS distance of the whole batch, atom included, against a CDF that jumps by
/// `atom_mass` at `atom_location`.
pub fn ks_statistic_with_atom<F: Fn(f64) -> f64>(
    batch: &SampleBatch,
    cdf: F,
    atom_location: f64,
    atom_mass: f64,
) -> Result<(f64, f64)> {
    if batch.total == 0 {
        return Err(Error::domain("KS statistic of an empty batch"));
    }
    let mut v = batch.values.clone();
    v.extend(std::iter::repeat_n(
        atom_location,
        batch.atom_count as usize,
    ));
    let v = sorted(&v);
    let left = |x: f64| {
        if x == atom_location {
            cdf(x) - atom_mass
        } else {
            cdf(x)
        }
    };
    let d = sup_distance(&v, &cdf, left);
    Ok((d, kolmogorov_pvalue(d, v.len())))
}

/// Pearson test outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub chi2: f64,
    pub dof: usize,
    pub pvalue: f64,
}

const MIN_EXPECTED: f64 = 5.0;

/// Pearson statistic of the continuous part of `batch` against `density` on
/// `bins` equal-width bins of `[lo, hi]`. Adjacent bins are merged until each
/// expects at least 5 samples.
pub fn chi_square_density<F: Fn(f64) -> f64>(
    batch: &SampleBatch,
    density: F,
    lo: f64,
    hi: f64,
    bins: usize,
) -> Result<ChiSquare> {
    if !(hi > lo) || bins < 2 {
        return Err(Error::domain(
            "chi-square needs hi > lo and at least 2 bins",
        ));
    }
    let n = batch.values.len();
    let width = (hi - lo) / bins as f64;
    let mut observed = vec![0.0; bins];
    for &v in &batch.values {
        if v >= lo && v <= hi {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            observed[k] += 1.0;
        }
    }
    let tol = QuadTolerance {
        abs: 1e-12,
        rel: 1e-9,
        ..QuadTolerance::default()
    };
    let mut expected = Vec::with_capacity(bins);
    for k in 0..bins {
        let a = lo + k as f64 * width;
        let b = if k + 1 == bins { hi } else { a + width };
        expected.push(n as f64 * integrate(&density, a, b, &[], tol)?);
    }

    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for k in 0..bins {
        o += observed[k];
        e += expected[k];
        if e >= MIN_EXPECTED {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    if cells.len() < 2 {
        return Err(Error::domain(format!(
            "too few samples ({n}) for a chi-square test with 5 expected per bin"
        )));
    }
    let chi2: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::domain(e.to_string()))?;
    Ok(ChiSquare {
        chi2,
        dof,
        pvalue: dist.sf(chi2),
    })
}

/// `∫_lo^hi density + atom_mass`, with the integral split at `breakpoints`.
pub fn normalization_check<F: Fn(f64) -> f64>(
    density: F,
    lo: f64,
    hi: f64,
    breakpoints: &[f64],
    atom_mass: f64,
) -> Result<f64> {
    let tol = QuadTolerance {
        abs: 1e-10,
        rel: 1e-8,
        ..QuadTolerance::default()
    };
    Ok(integrate(density, lo, hi, breakpoints, tol)? + atom_mass)
}

/// Binomial estimate of an atom's mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomEstimate {
    pub mass: f64,
    pub std_error: f64,
    /// Wilson score interval at `z` standard errors.
    pub lo: f64,
    pub hi: f64,
}

pub fn atom_mass_estimate(batch: &SampleBatch, z: f64) -> Result<AtomEstimate> {
    if batch.total == 0 {
        return Err(Error::domain("atom mass of an empty batch"));
    }
    let n = batch.total as f64;
    let p = batch.atom_fraction();
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Ok(AtomEstimate {
        mass: p,
        std_error: (p * (1.0 - p) / n).sqrt(),
        lo: (centre - half).max(0.0),
        hi: (centre + half).min(1.0),
    })
}

/// Whether the observed atom fraction lies within `k` binomial standard
/// deviations of the exact mass `p0`.
pub fn atom_within_sigmas(batch: &SampleBatch, p0: f64, k: f64) -> bool {
    let n = batch.total as f64;
    let sigma = (p0 * (1.0 - p0) / n).sqrt();
    (batch.atom_fraction() - p0).abs() <= k * sigma
}

/// Goodness-of-fit summary of one simulation against its analytic law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub samples: u64,
    pub ks_distance: f64,
    pub ks_pvalue: f64,
    pub chi2: Option<ChiSquare>,
    pub atom_mass_hat: f64,
    pub atom_ci: (f64, f64),
    pub atom_mass_exact: f64,
    pub passed: bool,
}

impl GofReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::RandomSource;

    fn uniform_batch(n: usize, seed: u64) -> SampleBatch {
        let mut rng = RandomSource::new(seed);
        SampleBatch::new((0..n).map(|_| rng.uniform()).collect(), 0).unwrap()
    }

    #[test]
    fn ks_null_and_degenerate() {
        let b = uniform_batch(10_000, 1);
        let (d, p) = ks_statistic(&b, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(d < 1.63 / 100.0 && p > 0.01);
        let b = SampleBatch::new(vec![0.3; 50], 0).unwrap();
        let (d, _) = ks_statistic(&b, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((d - 0.7).abs() < 1e-12);
        assert!(ks_statistic(&SampleBatch::default(), |x| x).is_err());
    }

    #[test]
    fn ks_with_atom_counts_the_jump() {
        // half the mass at 0.5, the rest uniform on (0, 1)
        let mut rng = RandomSource::new(2);
        let values: Vec<f64> = (0..5000).map(|_| rng.uniform()).collect();
        let b = SampleBatch::new(values, 5000).unwrap();
        let cdf = |x: f64| 0.5 * x.clamp(0.0, 1.0) + if x >= 0.5 { 0.5 } else { 0.0 };
        let (d, _) = ks_statistic_with_atom(&b, cdf, 0.5, 0.5).unwrap();
        assert!(d < 0.02, "{d}");
        let wrong = |x: f64| x.clamp(0.0, 1.0);
        let (d, _) = ks_statistic_with_atom(&b, wrong, 0.5, 0.0).unwrap();
        assert!(d > 0.2);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // P{K > 1.36} ≈ 0.049, P{K > 1.63} ≈ 0.010
        let n = 1_000_000;
        let s = (n as f64).sqrt();
        assert!((kolmogorov_pvalue(1.36 / s, n) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_pvalue(1.63 / s, n) - 0.0098).abs() < 1e-3);
    }

    #[test]
    fn chi_square_uniform() {
        let b = uniform_batch(20_000, 3);
        let r = chi_square_density(&b, |_| 1.0, 0.0, 1.0, 40).unwrap();
        assert_eq!(r.dof, 39);
        assert!((r.chi2 / r.dof as f64 - 1.0).abs() < 0.5);
        let r = chi_square_density(&b, |x| 2.0 * x, 0.0, 1.0, 40).unwrap();
        assert!(r.pvalue < 1e-6);
        let tiny = uniform_batch(6, 4);
        assert!(chi_square_density(&tiny, |_| 1.0, 0.0, 1.0, 10).is_err());
    }

    #[test]
    fn normalization() {
        let v = normalization_check(|_| 0.0, 0.0, 1.0, &[], 1.0).unwrap();
        assert_eq!(v, 1.0);
        // integrable edge singularity
        let v = normalization_check(|x| 0.5 / (1.0 - x).sqrt(), 0.0, 1.0, &[], 0.0).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "{v}");
    }

    #[test]
    fn atom_interval() {
        let b = SampleBatch::new(vec![0.1; 900], 100).unwrap();
        let e = atom_mass_estimate(&b, 1.96).unwrap();
        assert!((e.mass - 0.1).abs() < 1e-15);
        assert!(e.lo < 0.1 && e.hi > 0.1 && e.hi - e.lo < 0.05);
        assert!(atom_within_sigmas(&b, 0.11, 3.0));
        assert!(!atom_within_sigmas(&b, 0.2, 3.0));
    }

    #[test]
    fn merge_is_additive() {
        let mut a = SampleBatch::new(vec![1.0, 2.0], 1).unwrap();
        a.merge(SampleBatch::new(vec![3.0], 2).unwrap());
        assert_eq!(a.total, 6);
        assert_eq!(a.atom_count, 3);
        assert_eq!(a.values, vec![1.0, 2.0, 3.0]);
    }
}
