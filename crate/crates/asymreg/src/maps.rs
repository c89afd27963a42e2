//! Self-maps and resolvent families over the model spaces.
//!
//! A [`MapObject`] pairs a concrete map with its declared regularity class
//! (nonexpansive, a rho-contraction, or constant); `lipschitz_audit` checks
//! the declaration against sampled pairs instead of trusting it. Resolvent
//! families provide `gamma`-indexed members
//!
//! * `(I + gamma A)^{-1}` for a symmetric PSD matrix `A`,
//! * the scaled soft-threshold `prox_{gamma w |.|_1}`,
//! * the geodesic resolvent of `f = d(., a)^2 / 2`, which moves `x` toward
//!   the anchor `a` by the fraction `gamma / (1 + gamma)`.
//!
//! `c1_audit` checks the family-compatibility inequality
//! `d(T_n y, T_m y) <= |g_n - g_m| / g_n * d(y, T_n y)` that the
//! proximal-point trace audits rely on.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::audit::AuditReport;
use crate::spaces::{ConvexCoefficient, Point, Space, SpaceError};

/// Slack multiplier for Lipschitz audits: `1e-12 * (1 + d(x, y))`.
pub const LIPSCHITZ_TOL: f64 = 1e-12;
/// Slack multiplier for the family-compatibility audit.
pub const C1_TOL: f64 = 1e-10;
/// Fixture certification tolerance multiplier: `1e-10 * (1 + d(origin, p))`.
pub const FIXTURE_TOL: f64 = 1e-10;
/// Residual tolerance for the linear resolvent solve.
pub const SOLVE_TOL: f64 = 1e-10;
/// Step threshold below which the averaged fixed-point iteration stops.
pub const NUMERIC_FIXTURE_STEP: f64 = 1e-13;

#[derive(Debug, Error)]
pub enum MapError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("map `{map}` is not defined on {space} space")]
    WrongSpace { map: &'static str, space: &'static str },
    #[error("rotation requires dimension 2, space has {0}")]
    RotationDimension(usize),
    #[error("scale factor {0} outside [0, 1)")]
    ScaleFactor(f64),
    #[error("contraction modulus {0} outside [0, 1)")]
    ContractionModulus(f64),
    #[error("resolvent index gamma = {0} must be positive and finite")]
    GammaRange(f64),
    #[error("l1 weight {0} must be nonnegative and finite")]
    WeightRange(f64),
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix asymmetric at ({i},{j}): |a_ij - a_ji| = {diff}")]
    NotSymmetric { i: usize, j: usize, diff: f64 },
    #[error("matrix not positive semidefinite: eigenvalue {0}")]
    NotPsd(f64),
    #[error("matrix dimension {matrix} does not match space dimension {space}")]
    MatrixDimension { matrix: usize, space: usize },
    #[error("linear solve failed for gamma = {0}")]
    SolveFailed(f64),
    #[error("linear solve residual {residual} exceeds {tol}")]
    SolveResidual { residual: f64, tol: f64 },
    #[error("fixture rejected: d(p, T p) = {distance} exceeds {tol}")]
    FixtureRejected { distance: f64, tol: f64 },
    #[error("averaged iteration did not reach step {target} within {iterations} iterations (last step {last})")]
    FixtureNotConverged { target: f64, iterations: usize, last: f64 },
    #[error("angle {0} is not finite")]
    AngleNotFinite(f64),
}

/// Declared regularity class of a map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum MapKind {
    Nonexpansive,
    Contraction { rho: f64 },
    Constant,
}

impl MapKind {
    /// Lipschitz constant implied by the declaration.
    pub fn lipschitz(&self) -> f64 {
        match self {
            MapKind::Nonexpansive => 1.0,
            MapKind::Contraction { rho } => *rho,
            MapKind::Constant => 0.0,
        }
    }

    /// Contraction modulus usable in viscosity schemes.
    pub fn rho(&self) -> Option<f64> {
        match self {
            MapKind::Nonexpansive => None,
            MapKind::Contraction { rho } => Some(*rho),
            MapKind::Constant => Some(0.0),
        }
    }
}

/// Concrete map implementations.
#[derive(Debug, Clone)]
pub enum MapOp {
    Identity,
    /// `x -> -x` on euclid.
    Negation,
    /// Rotation of the plane by `angle` radians.
    Rotation { angle: f64 },
    /// Tripod isometry swapping rays 0 and 1, fixing ray 2 and the glue.
    RaySwap,
    Constant { value: Point },
    /// Radial scaling: `x -> factor * x` (euclid), `t -> factor * t` (tripod).
    Scale { factor: f64 },
    /// A fixed member of a resolvent family.
    Resolvent { family: Box<ResolventFamily>, gamma: f64 },
}

/// A self-map of a space together with its declared regularity class.
#[derive(Debug, Clone)]
pub struct MapObject {
    space: Space,
    op: MapOp,
    kind: MapKind,
}

impl MapObject {
    /// Build a map with an explicitly declared kind. The declaration is
    /// validated for well-formedness only; whether the map honors it is the
    /// business of `lipschitz_audit`.
    pub fn with_kind(space: Space, op: MapOp, kind: MapKind) -> Result<MapObject, MapError> {
        match (&op, &space) {
            (MapOp::Negation, Space::Tripod) => {
                return Err(MapError::WrongSpace { map: "negation", space: "tripod" })
            }
            (MapOp::Rotation { angle }, Space::Euclid { dim }) => {
                if *dim != 2 {
                    return Err(MapError::RotationDimension(*dim));
                }
                if !angle.is_finite() {
                    return Err(MapError::AngleNotFinite(*angle));
                }
            }
            (MapOp::Rotation { .. }, Space::Tripod) => {
                return Err(MapError::WrongSpace { map: "rotation", space: "tripod" })
            }
            (MapOp::RaySwap, Space::Euclid { .. }) => {
                return Err(MapError::WrongSpace { map: "ray_swap", space: "euclid" })
            }
            (MapOp::Constant { value }, _) => space.check_point(value)?,
            (MapOp::Scale { factor }, _) => {
                if !factor.is_finite() || !(0.0..1.0).contains(factor) {
                    return Err(MapError::ScaleFactor(*factor));
                }
            }
            (MapOp::Resolvent { family, gamma }, _) => {
                if family.space() != &space {
                    return Err(MapError::WrongSpace { map: "resolvent", space: space.kind_name() });
                }
                check_gamma(*gamma)?;
            }
            _ => {}
        }
        if let MapKind::Contraction { rho } = kind {
            if !rho.is_finite() || !(0.0..1.0).contains(&rho) {
                return Err(MapError::ContractionModulus(rho));
            }
        }
        Ok(MapObject { space, op, kind })
    }

    pub fn identity(space: Space) -> MapObject {
        MapObject { space, op: MapOp::Identity, kind: MapKind::Nonexpansive }
    }

    pub fn negation(space: Space) -> Result<MapObject, MapError> {
        Self::with_kind(space, MapOp::Negation, MapKind::Nonexpansive)
    }

    pub fn rotation(space: Space, angle: f64) -> Result<MapObject, MapError> {
        Self::with_kind(space, MapOp::Rotation { angle }, MapKind::Nonexpansive)
    }

    pub fn ray_swap(space: Space) -> Result<MapObject, MapError> {
        Self::with_kind(space, MapOp::RaySwap, MapKind::Nonexpansive)
    }

    pub fn constant(space: Space, value: Point) -> Result<MapObject, MapError> {
        Self::with_kind(space, MapOp::Constant { value }, MapKind::Constant)
    }

    /// Radial contraction by `factor`, declared with modulus `factor`.
    pub fn scale(space: Space, factor: f64) -> Result<MapObject, MapError> {
        Self::with_kind(
            space,
            MapOp::Scale { factor },
            MapKind::Contraction { rho: factor },
        )
    }

    pub fn resolvent(family: ResolventFamily, gamma: f64) -> Result<MapObject, MapError> {
        let space = family.space().clone();
        Self::with_kind(
            space,
            MapOp::Resolvent { family: Box::new(family), gamma },
            MapKind::Nonexpansive,
        )
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn apply(&self, x: &Point) -> Result<Point, MapError> {
        self.space.check_point(x)?;
        Ok(match (&self.op, x) {
            (MapOp::Identity, _) => x.clone(),
            (MapOp::Negation, Point::Euclid(v)) => Point::Euclid(v.iter().map(|c| -c).collect()),
            (MapOp::Rotation { angle }, Point::Euclid(v)) => {
                let (s, c) = angle.sin_cos();
                Point::Euclid(vec![c * v[0] - s * v[1], s * v[0] + c * v[1]])
            }
            (MapOp::RaySwap, Point::Tripod { ray, t }) => {
                let ray = match ray {
                    0 => 1,
                    1 => 0,
                    r => *r,
                };
                Point::tripod(ray, *t)
            }
            (MapOp::Constant { value }, _) => value.clone(),
            (MapOp::Scale { factor }, Point::Euclid(v)) => {
                Point::Euclid(v.iter().map(|c| factor * c).collect())
            }
            (MapOp::Scale { factor }, Point::Tripod { ray, t }) => {
                Point::tripod(*ray, factor * t)
            }
            (MapOp::Resolvent { family, gamma }, _) => family.resolve(*gamma, x)?,
            _ => unreachable!("with_kind enforces op/space compatibility"),
        })
    }

    /// A fixed point known in closed form, when the menu map has one.
    pub fn analytic_fixed_point(&self) -> Option<Point> {
        match &self.op {
            MapOp::Identity => Some(self.space.origin()),
            MapOp::Negation => Some(self.space.origin()),
            MapOp::Rotation { .. } => Some(self.space.origin()),
            MapOp::RaySwap => Some(self.space.origin()),
            MapOp::Constant { value } => Some(value.clone()),
            MapOp::Scale { .. } => Some(self.space.origin()),
            MapOp::Resolvent { family, .. } => family.analytic_fixed_point(),
        }
    }
}

/// Check `d(T x, T y) <= L d(x, y) + 1e-12 (1 + d(x, y))` on sampled pairs,
/// with `L` taken from the declared kind. Also reports the worst observed
/// ratio `d(T x, T y) / d(x, y)`.
pub fn lipschitz_audit(map: &MapObject, pairs: &[(Point, Point)]) -> Result<AuditReport, MapError> {
    let l = map.kind().lipschitz();
    let mut report = AuditReport::new(format!("lipschitz(L={l})"));
    for (i, (x, y)) in pairs.iter().enumerate() {
        let dxy = map.space.distance(x, y)?;
        let dfxy = map.space.distance(&map.apply(x)?, &map.apply(y)?)?;
        report.check_le("lipschitz", i, dfxy, l * dxy, LIPSCHITZ_TOL * (1.0 + dxy));
        if dxy > 0.0 {
            report.observe_ratio(dfxy / dxy);
        }
    }
    Ok(report)
}

fn check_gamma(gamma: f64) -> Result<(), MapError> {
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(MapError::GammaRange(gamma));
    }
    Ok(())
}

/// Symmetric positive semidefinite matrix, validated on construction:
/// symmetry to 1e-12 entrywise, eigenvalues >= -1e-10.
#[derive(Debug, Clone)]
pub struct PsdMatrix {
    m: DMatrix<f64>,
}

impl PsdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<PsdMatrix, MapError> {
        if m.nrows() != m.ncols() {
            return Err(MapError::NotSquare { rows: m.nrows(), cols: m.ncols() });
        }
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                let diff = (m[(i, j)] - m[(j, i)]).abs();
                if diff > 1e-12 {
                    return Err(MapError::NotSymmetric { i, j, diff });
                }
            }
        }
        let eigen = m.clone().symmetric_eigen();
        if let Some(min) = eigen
            .eigenvalues
            .iter()
            .cloned()
            .min_by(|a, b| a.total_cmp(b))
        {
            if min < -1e-10 {
                return Err(MapError::NotPsd(min));
            }
        }
        Ok(PsdMatrix { m })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<PsdMatrix, MapError> {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) || n != cols {
            return Err(MapError::NotSquare { rows: n, cols });
        }
        let m = DMatrix::from_fn(n, cols, |i, j| rows[i][j]);
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }
}

/// Solve `(I + gamma A) y = x` and verify the residual to
/// `1e-10 * (1 + |x|)`. `A` must already be validated PSD, so the system
/// matrix is symmetric positive definite and the Cholesky solve succeeds.
pub fn resolve_linear(a: &PsdMatrix, gamma: f64, x: &[f64]) -> Result<Vec<f64>, MapError> {
    check_gamma(gamma)?;
    let n = a.dim();
    if x.len() != n {
        return Err(MapError::MatrixDimension { matrix: n, space: x.len() });
    }
    let system = DMatrix::identity(n, n) + a.matrix() * gamma;
    let rhs = DVector::from_column_slice(x);
    let y = system
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .or_else(|| system.clone().lu().solve(&rhs))
        .ok_or(MapError::SolveFailed(gamma))?;
    let residual = (&system * &y - &rhs).norm();
    let tol = SOLVE_TOL * (1.0 + rhs.norm());
    if residual > tol {
        return Err(MapError::SolveResidual { residual, tol });
    }
    Ok(y.iter().cloned().collect())
}

/// Componentwise soft threshold: the proximal map of `w |.|_1` at step
/// `gamma`, i.e. `y_i = sign(x_i) max(|x_i| - gamma w, 0)`.
pub fn prox_l1(weight: f64, gamma: f64, x: &[f64]) -> Result<Vec<f64>, MapError> {
    check_gamma(gamma)?;
    if !weight.is_finite() || weight < 0.0 {
        return Err(MapError::WeightRange(weight));
    }
    let th = gamma * weight;
    Ok(x.iter()
        .map(|&c| {
            let shrunk = c.abs() - th;
            if shrunk > 0.0 {
                shrunk.copysign(c)
            } else {
                0.0
            }
        })
        .collect())
}

/// Geodesic resolvent of `f = d(., anchor)^2 / 2`: the minimizer of
/// `f(y) + d(x, y)^2 / (2 gamma)` lies on the geodesic from `x` to the
/// anchor at parameter `gamma / (1 + gamma)`.
pub fn jost_resolve(
    space: &Space,
    anchor: &Point,
    gamma: f64,
    x: &Point,
) -> Result<Point, MapError> {
    check_gamma(gamma)?;
    let l = ConvexCoefficient::new(gamma / (1.0 + gamma))?;
    Ok(space.combine(x, anchor, l)?)
}

/// Source of a gamma-indexed resolvent family.
#[derive(Debug, Clone)]
pub enum FamilySource {
    LinearPsd { a: PsdMatrix },
    L1Scaled { weight: f64 },
    QuadraticToPoint { anchor: Point },
}

/// A family `gamma -> T_gamma` of resolvents on one space.
#[derive(Debug, Clone)]
pub struct ResolventFamily {
    space: Space,
    source: FamilySource,
}

impl ResolventFamily {
    pub fn linear_psd(space: Space, a: PsdMatrix) -> Result<ResolventFamily, MapError> {
        match &space {
            Space::Euclid { dim } => {
                if *dim != a.dim() {
                    return Err(MapError::MatrixDimension { matrix: a.dim(), space: *dim });
                }
            }
            Space::Tripod => {
                return Err(MapError::WrongSpace { map: "linear resolvent", space: "tripod" })
            }
        }
        Ok(ResolventFamily { space, source: FamilySource::LinearPsd { a } })
    }

    pub fn l1_scaled(space: Space, weight: f64) -> Result<ResolventFamily, MapError> {
        if matches!(space, Space::Tripod) {
            return Err(MapError::WrongSpace { map: "l1 prox", space: "tripod" });
        }
        if !weight.is_finite() || weight < 0.0 {
            return Err(MapError::WeightRange(weight));
        }
        Ok(ResolventFamily { space, source: FamilySource::L1Scaled { weight } })
    }

    pub fn quadratic_to_point(space: Space, anchor: Point) -> Result<ResolventFamily, MapError> {
        space.check_point(&anchor)?;
        Ok(ResolventFamily { space, source: FamilySource::QuadraticToPoint { anchor } })
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn source(&self) -> &FamilySource {
        &self.source
    }

    pub fn resolve(&self, gamma: f64, x: &Point) -> Result<Point, MapError> {
        self.space.check_point(x)?;
        match (&self.source, x) {
            (FamilySource::LinearPsd { a }, Point::Euclid(v)) => {
                Ok(Point::Euclid(resolve_linear(a, gamma, v)?))
            }
            (FamilySource::L1Scaled { weight }, Point::Euclid(v)) => {
                Ok(Point::Euclid(prox_l1(*weight, gamma, v)?))
            }
            (FamilySource::QuadraticToPoint { anchor }, _) => {
                jost_resolve(&self.space, anchor, gamma, x)
            }
            _ => unreachable!("constructors enforce source/space compatibility"),
        }
    }

    /// A point fixed by every member of the family.
    pub fn analytic_fixed_point(&self) -> Option<Point> {
        match &self.source {
            FamilySource::LinearPsd { .. } => Some(self.space.origin()),
            FamilySource::L1Scaled { .. } => Some(self.space.origin()),
            FamilySource::QuadraticToPoint { anchor } => Some(anchor.clone()),
        }
    }

    /// One family member packaged as a nonexpansive map.
    pub fn member(&self, gamma: f64) -> Result<MapObject, MapError> {
        MapObject::resolvent(self.clone(), gamma)
    }
}

/// Audit the family-compatibility inequality
/// `d(T_n y, T_m y) <= |g_n - g_m| / g_n * d(y, T_n y) + slack`
/// over all ordered index pairs and all sample points, with slack
/// `1e-10 * (1 + scale)` where `scale` is the largest residual
/// `d(y, T_n y)` seen for the sample.
pub fn c1_audit(
    family: &ResolventFamily,
    gammas: &[f64],
    samples: &[Point],
) -> Result<AuditReport, MapError> {
    let mut report = AuditReport::new("family-compatibility");
    for g in gammas {
        check_gamma(*g)?;
    }
    for (i, y) in samples.iter().enumerate() {
        let images: Vec<Point> = gammas
            .iter()
            .map(|&g| family.resolve(g, y))
            .collect::<Result<_, _>>()?;
        let residuals: Vec<f64> = images
            .iter()
            .map(|ty| family.space.distance(y, ty))
            .collect::<Result<_, _>>()?;
        let scale = residuals.iter().cloned().fold(0.0f64, f64::max);
        let slack = C1_TOL * (1.0 + scale);
        for (n, &gn) in gammas.iter().enumerate() {
            for (m, &gm) in gammas.iter().enumerate() {
                if n == m {
                    continue;
                }
                let lhs = family.space.distance(&images[n], &images[m])?;
                let rhs = (gn - gm).abs() / gn * residuals[n];
                report.check_le("family-compatibility", i, lhs, rhs, slack);
            }
        }
    }
    Ok(report)
}

/// Where a fixture's fixed point came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Provenance {
    Analytic,
    Numeric { step_tol: f64 },
}

/// A claimed common fixed point, certified before any trace is trusted.
#[derive(Debug, Clone, Serialize)]
pub struct FixedPointFixture {
    pub point: Point,
    pub provenance: Provenance,
}

impl FixedPointFixture {
    pub fn analytic(point: Point) -> FixedPointFixture {
        FixedPointFixture { point, provenance: Provenance::Analytic }
    }

    fn tol(&self, space: &Space) -> Result<f64, MapError> {
        let scale = space.distance(&space.origin(), &self.point)?;
        Ok(FIXTURE_TOL * (1.0 + scale))
    }

    /// Check `d(p, T p) <= 1e-10 (1 + d(origin, p))`.
    pub fn certify_map(&self, map: &MapObject) -> Result<(), MapError> {
        let tol = self.tol(map.space())?;
        let image = map.apply(&self.point)?;
        let distance = map.space().distance(&self.point, &image)?;
        if distance > tol {
            return Err(MapError::FixtureRejected { distance, tol });
        }
        Ok(())
    }

    /// Check that every listed family member fixes the point.
    pub fn certify_family(
        &self,
        family: &ResolventFamily,
        gammas: &[f64],
    ) -> Result<(), MapError> {
        let tol = self.tol(family.space())?;
        for &g in gammas {
            let image = family.resolve(g, &self.point)?;
            let distance = family.space().distance(&self.point, &image)?;
            if distance > tol {
                return Err(MapError::FixtureRejected { distance, tol });
            }
        }
        Ok(())
    }

    /// Locate a fixed point by the averaged iteration
    /// `x <- (x + T x) / 2`, stopping once the step drops below `1e-13`.
    pub fn solve_numeric(
        map: &MapObject,
        start: &Point,
        max_iterations: usize,
    ) -> Result<FixedPointFixture, MapError> {
        let space = map.space();
        let half = ConvexCoefficient::new(0.5).expect("0.5 is a valid weight");
        let mut x = start.clone();
        let mut last = f64::INFINITY;
        for _ in 0..max_iterations {
            let tx = map.apply(&x)?;
            let next = space.combine(&x, &tx, half)?;
            last = space.distance(&x, &next)?;
            x = next;
            if last < NUMERIC_FIXTURE_STEP {
                let fixture = FixedPointFixture {
                    point: x,
                    provenance: Provenance::Numeric { step_tol: NUMERIC_FIXTURE_STEP },
                };
                fixture.certify_map(map)?;
                return Ok(fixture);
            }
        }
        Err(MapError::FixtureNotConverged {
            target: NUMERIC_FIXTURE_STEP,
            iterations: max_iterations,
            last,
        })
    }
}
