//! Geodesic model spaces: Euclidean `R^n` and the tripod R-tree.
//!
//! Both spaces expose the same two primitives, a metric `d` and a convex
//! combination `W(x, y, lambda) = (1 - lambda) x + lambda y` that walks the
//! geodesic from `x` to `y`. `axiom_audit` checks the hyperbolic-space
//! axioms (W1)-(W4) together with the two derived identities
//!
//! ```text
//! d(x, W(x,y,l)) = l d(x,y),          d(y, W(x,y,l)) = (1-l) d(x,y)
//! d(W(x,z,l), W(y,w,t)) <= (1-l) d(x,y) + l d(z,w) + |l-t| d(y,w)
//! ```
//!
//! on caller-supplied samples, so an implementation bug in either primitive
//! surfaces as a concrete counterexample rather than a downstream mystery.

use serde::Serialize;
use thiserror::Error;

use crate::audit::AuditReport;

/// Absolute part of the tolerance for metric identities; scaled by
/// `1 + max pairwise distance` of the sample.
pub const AXIOM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("coefficient {0} outside [0, 1]")]
    CoefficientRange(f64),
    #[error("point has {got} coordinates, space has dimension {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("point kind does not match space kind ({0})")]
    KindMismatch(&'static str),
    #[error("tripod ray {0} outside 0..=2")]
    RayRange(u8),
    #[error("tripod radial coordinate {0} is negative or non-finite")]
    RadialRange(f64),
    #[error("coordinate {0} is not finite")]
    NonFinite(f64),
    #[error("euclid dimension must be >= 1")]
    ZeroDimension,
}

/// Convex weight validated into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexCoefficient(f64);

impl ConvexCoefficient {
    pub fn new(lambda: f64) -> Result<Self, SpaceError> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(SpaceError::CoefficientRange(lambda));
        }
        Ok(ConvexCoefficient(lambda))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// A point of one of the model spaces.
///
/// Tripod points are canonical: the glue point (radial coordinate 0) is
/// always stored on ray 0, so structural equality agrees with the metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Point {
    Euclid(Vec<f64>),
    Tripod { ray: u8, t: f64 },
}

impl Point {
    pub fn euclid(coords: impl Into<Vec<f64>>) -> Point {
        Point::Euclid(coords.into())
    }

    pub fn tripod(ray: u8, t: f64) -> Point {
        if t == 0.0 {
            Point::Tripod { ray: 0, t: 0.0 }
        } else {
            Point::Tripod { ray, t }
        }
    }

    pub fn coords(&self) -> Option<&[f64]> {
        match self {
            Point::Euclid(v) => Some(v),
            Point::Tripod { .. } => None,
        }
    }

    /// Number of scalars needed to store the point.
    pub fn scalar_count(&self) -> usize {
        match self {
            Point::Euclid(v) => v.len(),
            Point::Tripod { .. } => 2,
        }
    }
}

/// One of the two supported model spaces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Space {
    Euclid { dim: usize },
    Tripod,
}

impl Space {
    pub fn euclid(dim: usize) -> Result<Space, SpaceError> {
        if dim == 0 {
            return Err(SpaceError::ZeroDimension);
        }
        Ok(Space::Euclid { dim })
    }

    pub fn tripod() -> Space {
        Space::Tripod
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Space::Euclid { .. } => "euclid",
            Space::Tripod => "tripod",
        }
    }

    /// Zero vector, respectively the glue point of the three rays.
    pub fn origin(&self) -> Point {
        match self {
            Space::Euclid { dim } => Point::Euclid(vec![0.0; *dim]),
            Space::Tripod => Point::Tripod { ray: 0, t: 0.0 },
        }
    }

    /// Validate that `p` is a well-formed point of this space.
    pub fn check_point(&self, p: &Point) -> Result<(), SpaceError> {
        match (self, p) {
            (Space::Euclid { dim }, Point::Euclid(v)) => {
                if v.len() != *dim {
                    return Err(SpaceError::DimensionMismatch {
                        got: v.len(),
                        want: *dim,
                    });
                }
                for &c in v {
                    if !c.is_finite() {
                        return Err(SpaceError::NonFinite(c));
                    }
                }
                Ok(())
            }
            (Space::Tripod, Point::Tripod { ray, t }) => {
                if *ray > 2 {
                    return Err(SpaceError::RayRange(*ray));
                }
                if !t.is_finite() || *t < 0.0 {
                    return Err(SpaceError::RadialRange(*t));
                }
                Ok(())
            }
            (Space::Euclid { .. }, _) => Err(SpaceError::KindMismatch("expected euclid point")),
            (Space::Tripod, _) => Err(SpaceError::KindMismatch("expected tripod point")),
        }
    }

    /// Geodesic distance between two points.
    pub fn distance(&self, p: &Point, q: &Point) -> Result<f64, SpaceError> {
        self.check_point(p)?;
        self.check_point(q)?;
        Ok(match (p, q) {
            (Point::Euclid(a), Point::Euclid(b)) => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            (Point::Tripod { ray: rp, t: tp }, Point::Tripod { ray: rq, t: tq }) => {
                // Same ray (or either point at the glue): walk along the ray.
                // Different rays: the path goes through the glue point.
                if rp == rq || *tp == 0.0 || *tq == 0.0 {
                    (tp - tq).abs()
                } else {
                    tp + tq
                }
            }
            _ => unreachable!("check_point enforces matching kinds"),
        })
    }

    /// The point `(1 - lambda) p + lambda q` on the geodesic from `p` to `q`.
    ///
    /// Endpoints are returned exactly for `lambda` in `{0, 1}`.
    pub fn combine(
        &self,
        p: &Point,
        q: &Point,
        lambda: ConvexCoefficient,
    ) -> Result<Point, SpaceError> {
        self.check_point(p)?;
        self.check_point(q)?;
        let l = lambda.value();
        if l == 0.0 {
            return Ok(p.clone());
        }
        if l == 1.0 {
            return Ok(q.clone());
        }
        Ok(match (p, q) {
            (Point::Euclid(a), Point::Euclid(b)) => Point::Euclid(
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (1.0 - l) * x + l * y)
                    .collect(),
            ),
            (Point::Tripod { ray: rp, t: tp }, Point::Tripod { ray: rq, t: tq }) => {
                if rp == rq || *tp == 0.0 || *tq == 0.0 {
                    let ray = if *tp != 0.0 { *rp } else { *rq };
                    Point::tripod(ray, (1.0 - l) * tp + l * tq)
                } else {
                    // Walk through the glue: arclength s from p along p -> 0 -> q.
                    let s = l * (tp + tq);
                    if s <= *tp {
                        Point::tripod(*rp, tp - s)
                    } else {
                        Point::tripod(*rq, s - tp)
                    }
                }
            }
            _ => unreachable!("check_point enforces matching kinds"),
        })
    }
}

/// Inputs for one axiom check: four points plus two weights.
#[derive(Debug, Clone)]
pub struct AxiomSample {
    pub x: Point,
    pub y: Point,
    pub z: Point,
    pub w: Point,
    pub lambda: f64,
    pub lambda_tilde: f64,
}

/// Audit the hyperbolic-space axioms on the given samples.
///
/// Equalities are checked to `1e-12 * (1 + scale)` and inequalities are
/// allowed the same slack, where `scale` is the largest pairwise distance
/// among the four sample points.
pub fn axiom_audit(space: &Space, samples: &[AxiomSample]) -> Result<AuditReport, SpaceError> {
    let mut report = AuditReport::new(format!("axioms({})", space.kind_name()));
    for (i, s) in samples.iter().enumerate() {
        let l = ConvexCoefficient::new(s.lambda)?;
        let lt = ConvexCoefficient::new(s.lambda_tilde)?;
        let (lv, ltv) = (l.value(), lt.value());

        let d = |a: &Point, b: &Point| space.distance(a, b);
        let dxy = d(&s.x, &s.y)?;
        let dxz = d(&s.x, &s.z)?;
        let dxw = d(&s.x, &s.w)?;
        let dyz = d(&s.y, &s.z)?;
        let dyw = d(&s.y, &s.w)?;
        let dzw = d(&s.z, &s.w)?;
        let scale = dxy.max(dxz).max(dxw).max(dyz).max(dyw).max(dzw);
        let tol = AXIOM_TOL * (1.0 + scale);

        let wxy = space.combine(&s.x, &s.y, l)?;
        let wxy_t = space.combine(&s.x, &s.y, lt)?;
        let wyx = space.combine(&s.y, &s.x, ConvexCoefficient::new(1.0 - lv)?)?;
        let wxz = space.combine(&s.x, &s.z, l)?;
        let wyw = space.combine(&s.y, &s.w, l)?;
        let wyw_t = space.combine(&s.y, &s.w, lt)?;

        // (W1) with z as the outside point.
        report.check_le(
            "W1",
            i,
            d(&s.z, &wxy)?,
            (1.0 - lv) * dxz + lv * dyz,
            tol,
        );
        // (W2): moving only the weight moves the point proportionally.
        report.check_eq("W2", i, d(&wxy, &wxy_t)?, (lv - ltv).abs() * dxy, tol);
        // (W3): the combination is symmetric under swapping arguments.
        report.check_eq("W3", i, d(&wxy, &wyx)?, 0.0, tol);
        // (W4): joint nonexpansiveness in both endpoints.
        report.check_le(
            "W4",
            i,
            d(&wxz, &wyw)?,
            (1.0 - lv) * dxy + lv * dzw,
            tol,
        );
        // Endpoint distance identities.
        report.check_eq("endpoint-x", i, d(&s.x, &wxy)?, lv * dxy, tol);
        report.check_eq("endpoint-y", i, d(&s.y, &wxy)?, (1.0 - lv) * dxy, tol);
        // Mixed-weight comparison of two combinations.
        report.check_le(
            "mixed-weights",
            i,
            d(&wxz, &wyw_t)?,
            (1.0 - lv) * dxy + lv * dzw + (lv - ltv).abs() * dyw,
            tol,
        );
    }
    Ok(report)
}
