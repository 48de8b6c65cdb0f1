//! Reflection maps and region classification.
//!
//! Two reflecting surfaces are supported: the sphere of radius `R` centered
//! at the origin (reflection by circular inversion `x -> R² x / |x|²`) and an
//! arbitrary hyperplane `<a, x> = b` (mirror reflection).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative width of the band around a sphere treated as lying on it.
pub const SPHERE_TIE_TOL: f64 = 1e-12;

/// A point of R^d, d >= 2, with finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::domain(format!(
                "point dimension {} < 2",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("point has non-finite coordinates"));
        }
        Ok(Point(coords))
    }

    pub fn origin(d: usize) -> Self {
        Point(vec![0.0; d.max(2)])
    }

    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, s: f64) -> Point {
        Point(self.0.iter().map(|c| c * s).collect())
    }

    /// `self + s * dir`
    pub fn offset(&self, dir: &[f64], s: f64) -> Point {
        Point(self.0.iter().zip(dir).map(|(c, v)| c + s * v).collect())
    }

    pub fn distance(&self, other: &Point) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// The sphere of radius `R` centered at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectionSphere {
    radius: f64,
}

impl ReflectionSphere {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::domain(format!("sphere radius {radius} must be > 0")));
        }
        Ok(ReflectionSphere { radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// The hyperplane `{x : <a, x> = b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    normal: Vec<f64>,
    offset: f64,
    normal_sq: f64,
}

impl Hyperplane {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        if normal.iter().any(|c| !c.is_finite()) || !offset.is_finite() {
            return Err(Error::domain("hyperplane has non-finite parameters"));
        }
        let normal_sq: f64 = normal.iter().map(|c| c * c).sum();
        if normal_sq == 0.0 {
            return Err(Error::domain("hyperplane normal must be nonzero"));
        }
        Ok(Hyperplane {
            normal,
            offset,
            normal_sq,
        })
    }

    /// The hyperplane `x_d = b` (normal `e_d`).
    pub fn axis(d: usize, b: f64) -> Result<Self> {
        let mut a = vec![0.0; d];
        a[d - 1] = 1.0;
        Hyperplane::new(a, b)
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// Euclidean distance of the hyperplane from the origin.
    pub fn distance_from_origin(&self) -> f64 {
        self.offset.abs() / self.normal_sq.sqrt()
    }

    /// First time a flight of speed `c` can touch the hyperplane.
    pub fn first_contact_time(&self, c: f64) -> f64 {
        self.offset.abs() / (c * self.normal_sq.sqrt())
    }

    /// `<a, x>`
    pub fn level(&self, x: &Point) -> f64 {
        x.dot(&self.normal)
    }

    /// `|nu(x)|²` via `|x|² + (4b² - 4b<a,x>) / <a,a>`.
    pub fn reflected_norm_sq(&self, x: &Point) -> f64 {
        let b = self.offset;
        x.norm_sq() + (4.0 * b * b - 4.0 * b * self.level(x)) / self.normal_sq
    }
}

/// Position of a point relative to the reflecting sphere `S_R` and the
/// free-flight support sphere `S_ct`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SphereRegion {
    /// `|x| < R`
    InsideBall,
    /// `inner < |x| <= outer`, here `R < |x| < ct`
    Annulus { inner: f64, outer: f64 },
    /// `|x|` equal (up to rounding) to the given radius, `R` or `ct`
    OnSphere(f64),
    /// `|x| > ct`
    Outside,
}

/// Membership flags for the sets `L`, `U`, `V` of a hyperplane within the
/// ball `B_ct`, and their boundary pieces on `S_ct`.
///
/// `L` and `V` overlap, so this is a set of flags rather than one tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HalfspaceRegion {
    pub in_l: bool,
    pub in_u: bool,
    pub in_v: bool,
    pub on_boundary_l: bool,
    pub on_boundary_u: bool,
    pub on_boundary_v: bool,
}

impl HalfspaceRegion {
    pub fn outside(&self) -> bool {
        !(self.in_l
            || self.in_u
            || self.in_v
            || self.on_boundary_l
            || self.on_boundary_u
            || self.on_boundary_v)
    }
}

fn near(value: f64, target: f64) -> bool {
    (value - target).abs() <= SPHERE_TIE_TOL * target.abs().max(f64::MIN_POSITIVE)
}

/// Circular inversion `R² x / |x|²` in the origin-centered sphere.
pub fn invert_in_sphere(x: &Point, s: &ReflectionSphere) -> Result<Point> {
    invert_about(x, None, s.radius())
}

/// Inversion in the sphere of radius `radius` centered at `center`.
pub(crate) fn invert_about(x: &Point, center: Option<&Point>, radius: f64) -> Result<Point> {
    let rel: Vec<f64> = match center {
        Some(c) => x
            .coords()
            .iter()
            .zip(c.coords())
            .map(|(a, b)| a - b)
            .collect(),
        None => x.coords().to_vec(),
    };
    let n2: f64 = rel.iter().map(|v| v * v).sum();
    if n2 == 0.0 {
        return Err(Error::domain("inversion is undefined at the center"));
    }
    let k = radius * radius / n2;
    let out = match center {
        Some(c) => rel.iter().zip(c.coords()).map(|(v, o)| k * v + o).collect(),
        None => rel.iter().map(|v| k * v).collect(),
    };
    Ok(Point(out))
}

/// Mirror image `x + 2 (b - <a,x>) a / <a,a>`.
pub fn reflect_in_hyperplane(x: &Point, h: &Hyperplane) -> Point {
    assert_eq!(x.dim(), h.dim(), "point and hyperplane dimensions differ");
    let k = 2.0 * (h.offset - h.level(x)) / h.normal_sq;
    x.offset(&h.normal, k)
}

/// Classify `x` against `B_R`, the annulus `C_{R,ct}`, and the spheres `S_R`, `S_ct`.
pub fn classify_sphere_region(x: &Point, radius: f64, ct: f64) -> SphereRegion {
    let r = x.norm();
    if near(r, radius) {
        SphereRegion::OnSphere(radius)
    } else if near(r, ct) {
        SphereRegion::OnSphere(ct)
    } else if r < radius {
        SphereRegion::InsideBall
    } else if r < ct {
        SphereRegion::Annulus {
            inner: radius,
            outer: ct,
        }
    } else {
        SphereRegion::Outside
    }
}

/// Classify `x` against the sets `L`, `U`, `V` (and their boundaries on `S_ct`).
pub fn classify_halfspace_region(x: &Point, h: &Hyperplane, ct: f64) -> HalfspaceRegion {
    let c2 = ct * ct;
    let n2 = x.norm_sq();
    let level = h.level(x);
    let b = h.offset();
    let nu2 = h.reflected_norm_sq(x);
    let on_ct = near(n2.sqrt(), ct);
    let nu_on_ct = near(nu2.max(0.0).sqrt(), ct);
    HalfspaceRegion {
        in_l: !on_ct && n2 < c2 && level < b,
        in_u: !on_ct && n2 < c2 && level >= b,
        in_v: !nu_on_ct && nu2 < c2 && level <= b,
        on_boundary_l: on_ct && level < b,
        on_boundary_u: on_ct && level >= b,
        on_boundary_v: nu_on_ct && level <= b,
    }
}

/// Jacobian matrix of `map` at `x` by central differences.
pub fn numerical_jacobian<F>(map: F, x: &Point, step: f64) -> DMatrix<f64>
where
    F: Fn(&Point) -> Point,
{
    let d = x.dim();
    let mut jac = DMatrix::<f64>::zeros(d, d);
    let mut e = vec![0.0; d];
    for j in 0..d {
        e[j] = 1.0;
        let plus = map(&x.offset(&e, step));
        let minus = map(&x.offset(&e, -step));
        e[j] = 0.0;
        for i in 0..d {
            jac[(i, j)] = (plus.coords()[i] - minus.coords()[i]) / (2.0 * step);
        }
    }
    jac
}

/// Determinant of the Jacobian of `map` at `x` by central differences.
pub fn numerical_jacobian_det<F>(map: F, x: &Point, step: f64) -> f64
where
    F: Fn(&Point) -> Point,
{
    numerical_jacobian(map, x, step).determinant()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    #[test]
    fn inversion_examples() {
        let s1 = ReflectionSphere::new(1.0).unwrap();
        assert_eq!(
            invert_in_sphere(&p(&[1.0, 0.0]), &s1).unwrap(),
            p(&[1.0, 0.0])
        );
        let s2 = ReflectionSphere::new(2.0).unwrap();
        assert_eq!(
            invert_in_sphere(&p(&[1.0, 0.0]), &s2).unwrap(),
            p(&[4.0, 0.0])
        );
        let s = ReflectionSphere::new(1.5).unwrap();
        let x = p(&[0.3, 0.4]);
        let back = invert_in_sphere(&invert_in_sphere(&x, &s).unwrap(), &s).unwrap();
        assert!(back.distance(&x) < 1e-14);
        assert!(matches!(
            invert_in_sphere(&Point::origin(3), &s),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn general_center_inversion() {
        let c = p(&[1.0, 1.0]);
        let y = invert_about(&p(&[3.0, 1.0]), Some(&c), 2.0).unwrap();
        assert!(y.distance(&p(&[3.0, 1.0])) < 1e-15);
        let y = invert_about(&p(&[2.0, 1.0]), Some(&c), 2.0).unwrap();
        assert!(y.distance(&p(&[5.0, 1.0])) < 1e-15);
    }

    #[test]
    fn hyperplane_examples() {
        let h = Hyperplane::new(vec![0.0, 1.0], 1.0).unwrap();
        assert_eq!(reflect_in_hyperplane(&p(&[0.0, 1.0]), &h), p(&[0.0, 1.0]));
        assert_eq!(reflect_in_hyperplane(&p(&[0.0, 3.0]), &h), p(&[0.0, -1.0]));
        assert!(Hyperplane::new(vec![0.0, 0.0], 1.0).is_err());
        let h = Hyperplane::new(vec![3.0, 4.0], -10.0).unwrap();
        assert!((h.first_contact_time(2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sphere_region_examples() {
        let at = |r: f64| p(&[r, 0.0]);
        assert_eq!(
            classify_sphere_region(&at(0.5), 1.0, 2.0),
            SphereRegion::InsideBall
        );
        assert_eq!(
            classify_sphere_region(&at(1.5), 1.0, 2.0),
            SphereRegion::Annulus {
                inner: 1.0,
                outer: 2.0
            }
        );
        assert_eq!(
            classify_sphere_region(&at(2.0), 1.0, 2.0),
            SphereRegion::OnSphere(2.0)
        );
        assert_eq!(
            classify_sphere_region(&at(1.0), 1.0, 2.0),
            SphereRegion::OnSphere(1.0)
        );
        assert_eq!(
            classify_sphere_region(&at(1.0 + 1e-14), 1.0, 2.0),
            SphereRegion::OnSphere(1.0)
        );
        assert_eq!(
            classify_sphere_region(&at(2.5), 1.0, 2.0),
            SphereRegion::Outside
        );
    }

    #[test]
    fn halfspace_region_examples() {
        let h = Hyperplane::new(vec![0.0, 1.0], 1.0).unwrap();
        let r = classify_halfspace_region(&p(&[0.0, 0.5]), &h, 3.0);
        assert!(r.in_l && !r.in_u);
        let r = classify_halfspace_region(&p(&[0.0, 2.0]), &h, 3.0);
        assert!(r.in_u && !r.in_l && !r.in_v);
        // |nu(x)| = 1.1 > ct = 1.05
        let x = p(&[0.0, 0.9]);
        assert!((h.reflected_norm_sq(&x).sqrt() - 1.1).abs() < 1e-15);
        let r = classify_halfspace_region(&x, &h, 1.05);
        assert!(r.in_l && !r.in_v);
        // L and V overlap
        let h = Hyperplane::new(vec![0.0, 1.0], 0.5).unwrap();
        let r = classify_halfspace_region(&p(&[0.0, 0.2]), &h, 1.0);
        assert!(r.in_l && r.in_v);
        let r = classify_halfspace_region(&p(&[0.0, -1.0]), &h, 1.0);
        assert!(r.on_boundary_l && !r.in_l);
        assert!(classify_halfspace_region(&p(&[0.0, -3.0]), &h, 1.0).outside());
    }

    #[test]
    fn point_validation() {
        assert!(Point::new(vec![1.0]).is_err());
        assert!(Point::new(vec![1.0, f64::NAN]).is_err());
    }
}
