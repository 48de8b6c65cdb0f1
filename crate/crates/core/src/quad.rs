//! Quadrature kernels: double-exponential (tanh-sinh) integration for
//! integrands with endpoint singularities, Gauss-Legendre panels for smooth
//! oscillatory integrands, and Gauss-Jacobi rules for expectations under Beta
//! laws.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadTolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_level: u32,
}

impl Default for QuadTolerance {
    fn default() -> Self {
        QuadTolerance {
            abs: 1e-12,
            rel: 1e-10,
            max_level: 12,
        }
    }
}

/// Tanh-sinh integral of `f` over `[a, b]`.
///
/// Nodes never land on the endpoints, so integrable endpoint singularities
/// are fine. Interior kinks or jumps must be passed as breakpoints to
/// [`integrate`].
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: QuadTolerance) -> Result<f64> {
    // nodes that round onto an endpoint are dropped
    tanh_sinh_edges(
        &|x, _, _| if x > a && x < b { f(x) } else { 0.0 },
        a,
        b,
        tol,
    )
}

/// Like [`tanh_sinh`], but `f(x, x - a, b - x)` also receives the distances
/// to both endpoints, computed without cancellation. Integrands with a
/// singular factor such as `(b - x)^(-1/2)` should use the distances so that
/// nodes closer than one ulp to an endpoint still contribute.
pub fn tanh_sinh_edges<F: Fn(f64, f64, f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: QuadTolerance,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::domain(format!("tanh_sinh: bad interval [{a}, {b}]")));
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    const T_MAX: f64 = 3.5;

    // Contribution of abscissa t (and -t when t > 0).
    let eval = |t: f64| -> f64 {
        let u = FRAC_PI_2 * t.sinh();
        let cu = u.cosh();
        let w = half * FRAC_PI_2 * t.cosh() / (cu * cu);
        if t == 0.0 {
            return w * f(mid, half, half);
        }
        // distance of the node from the nearer endpoint
        let delta = half * 2.0 / ((2.0 * u.abs()).exp() + 1.0);
        if !(delta > 0.0) {
            return 0.0;
        }
        let far = 2.0 * half - delta;
        w * (f(b - delta, far, delta) + f(a + delta, delta, far))
    };

    let mut h = 1.0;
    let mut sum = eval(0.0);
    let mut k = 1.0;
    while k * h <= T_MAX {
        sum += eval(k * h);
        k += 1.0;
    }
    let mut estimate = sum * h;
    for level in 1..=tol.max_level {
        h *= 0.5;
        let mut k = 1.0;
        while k * h <= T_MAX {
            sum += eval(k * h);
            k += 2.0;
        }
        let next = sum * h;
        if !next.is_finite() {
            return Err(Error::precision("tanh_sinh: non-finite integrand value"));
        }
        let err = (next - estimate).abs();
        estimate = next;
        if err <= tol.abs.max(tol.rel * next.abs()) && level >= 3 {
            return Ok(next);
        }
    }
    Err(Error::precision(format!(
        "tanh_sinh did not converge on [{a}, {b}] (last estimate {estimate})"
    )))
}

/// Integral of `f` over `[a, b]`, split at every breakpoint strictly inside.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    tol: QuadTolerance,
) -> Result<f64> {
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&x| x > a && x < b && x.is_finite())
        .collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let mut lo = a;
    let mut total = 0.0;
    for &c in cuts.iter().chain(std::iter::once(&b)) {
        if c > lo {
            total += tanh_sinh(&f, lo, c, tol)?;
        }
        lo = c;
    }
    Ok(total)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            dp = nf * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// A quadrature rule for expectations under the Beta(a, b) law on `[0, 1]`.
///
/// Weights sum to one: `Σ w_i g(v_i) ≈ E[g(V)]` for `V ~ Beta(a, b)`.
#[derive(Debug, Clone)]
pub struct BetaRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl BetaRule {
    /// Golub-Welsch construction from the Jacobi recurrence.
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) || n == 0 {
            return Err(Error::domain("BetaRule: need a, b > 0 and n >= 1"));
        }
        // Jacobi weight (1-x)^al (1+x)^be with v = (1+x)/2
        let al = b - 1.0;
        let be = a - 1.0;
        let ab = al + be;
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            let kf = k as f64;
            let diag = if k == 0 {
                (be - al) / (ab + 2.0)
            } else {
                (be * be - al * al) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
            };
            jac[(k, k)] = diag;
            if k + 1 < n {
                let m = kf + 1.0;
                let off2 = if k == 0 {
                    4.0 * (1.0 + al) * (1.0 + be) / ((2.0 + ab).powi(2) * (3.0 + ab))
                } else {
                    4.0 * m * (m + al) * (m + be) * (m + ab)
                        / ((2.0 * m + ab).powi(2) * (2.0 * m + ab + 1.0) * (2.0 * m + ab - 1.0))
                };
                let off = off2.sqrt();
                jac[(k, k + 1)] = off;
                jac[(k + 1, k)] = off;
            }
        }
        let eig = SymmetricEigen::new(jac);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (0.5 * (1.0 + eig.eigenvalues[i]), v0 * v0)
            })
            .collect();
        pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        Ok(BetaRule {
            nodes: pairs.iter().map(|p| p.0.clamp(0.0, 1.0)).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        })
    }
}
