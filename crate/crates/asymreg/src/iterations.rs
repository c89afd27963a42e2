//! Trace generators for the four anchored iteration schemes.
//!
//! All four recurrences share the convex-combination convention
//! `combine(a, b, alpha) = (1 - alpha) a + alpha b`, so the anchor (or the
//! contraction image) always carries weight `1 - alpha_n`:
//!
//! ```text
//! halpern  x_{n+1} = (1 - a_n) u      + a_n T x_n
//! sam      x_{n+1} = (1 - a_n) f(x_n) + a_n T x_n
//! aim      x_{n+1} = T((1 - a_n) f(x_n) + a_n x_n)
//! happa    x_{n+1} = (1 - a_n) u      + a_n T_{g_n} x_n
//! ```
//!
//! A [`Trace`] records every residual the rate certifiers need, plus the
//! evaluated schedule, so downstream audits never re-derive trace data.

use serde::Serialize;
use thiserror::Error;

use crate::maps::{MapError, MapKind, MapObject, ResolventFamily};
use crate::spaces::{ConvexCoefficient, Point, Space, SpaceError};

/// Schedule evaluations this far outside `[0, 1]` are rejected rather than
/// clamped; anything closer is rounding noise from the closed forms.
const ALPHA_GUARD: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum IterationError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("horizon must be >= 1")]
    HorizonZero,
    #[error("this scheme takes a weight-only schedule, got one with resolvent indices")]
    ScheduleHasGamma,
    #[error("this scheme needs resolvent indices, the schedule has none")]
    ScheduleMissingGamma,
    #[error("schedule kind `{got}` is not accepted by {scheme}")]
    ScheduleKind { scheme: &'static str, got: &'static str },
    #[error("explicit schedule has {got} entries, horizon needs {needed}")]
    ExplicitTooShort { needed: usize, got: usize },
    #[error("schedule weight at n = {n} is {value}, outside [0, 1]")]
    AlphaOutOfRange { n: usize, value: f64 },
    #[error("resolvent index at n = {n} is {value}, must be positive")]
    GammaOutOfRange { n: usize, value: f64 },
    #[error("contraction modulus {map} does not match schedule modulus {schedule}")]
    RhoMismatch { schedule: f64, map: f64 },
    #[error("viscosity term must be a declared contraction or constant map")]
    ContractionRequired,
    #[error("map acts on a different space than the iteration")]
    SpaceMismatch,
    #[error("comparison index m = {m} exceeds horizon {horizon}")]
    CrossBeyondHorizon { m: usize, horizon: usize },
}

/// Smallest integer at least `1 / (1 - rho)`, with protection against the
/// float quotient landing a hair above an exact integer (e.g. rho = 0.9
/// gives 10.000000000000002, which must not ceil to 11).
pub fn ceil_inv_one_minus(rho: f64) -> u64 {
    let inv = 1.0 / (1.0 - rho);
    let nearest = inv.round();
    if (inv - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as u64
    } else {
        inv.ceil() as u64
    }
}

/// Weight (and optional resolvent-index) schedule.
#[derive(Debug, Clone)]
pub enum Schedule {
    /// `a_0 = 0`, then `a_n = 1 - 2/(n+1)` (so `a_1 = 0` as well).
    HalpernProp2,
    /// `a_n = 1 - 1/(n+2)`, for anchor-at-start runs on euclid spaces.
    Lieder,
    /// `a_n = 1 - 2 / ((1-rho)(n+J))` with `J = 2 ceil(1/(1-rho))`.
    SamProp5 { rho: f64 },
    /// `a_n = 1 - 2/(n+2)` with resolvent indices `g_n = (n+2)/(n+1)`.
    HappaProp9,
    Explicit {
        alphas: Vec<f64>,
        gammas: Option<Vec<f64>>,
    },
}

impl Schedule {
    pub fn sam_prop5(rho: f64) -> Result<Schedule, IterationError> {
        if !rho.is_finite() || !(0.0..1.0).contains(&rho) {
            return Err(IterationError::RhoMismatch { schedule: rho, map: rho });
        }
        Ok(Schedule::SamProp5 { rho })
    }

    /// Literal schedule. Weights must lie in `[0, 1]` and indices must be
    /// positive; lists are rejected up front, not at evaluation time.
    pub fn explicit(
        alphas: Vec<f64>,
        gammas: Option<Vec<f64>>,
    ) -> Result<Schedule, IterationError> {
        for (n, &a) in alphas.iter().enumerate() {
            if !a.is_finite() || !(0.0..=1.0).contains(&a) {
                return Err(IterationError::AlphaOutOfRange { n, value: a });
            }
        }
        if let Some(gs) = &gammas {
            if gs.len() != alphas.len() {
                return Err(IterationError::ExplicitTooShort {
                    needed: alphas.len(),
                    got: gs.len(),
                });
            }
            for (n, &g) in gs.iter().enumerate() {
                if !g.is_finite() || g <= 0.0 {
                    return Err(IterationError::GammaOutOfRange { n, value: g });
                }
            }
        }
        Ok(Schedule::Explicit { alphas, gammas })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Schedule::HalpernProp2 => "halpern_prop2",
            Schedule::Lieder => "lieder",
            Schedule::SamProp5 { .. } => "sam_prop5",
            Schedule::HappaProp9 => "happa_prop9",
            Schedule::Explicit { .. } => "explicit",
        }
    }

    pub fn has_gamma(&self) -> bool {
        matches!(
            self,
            Schedule::HappaProp9 | Schedule::Explicit { gammas: Some(_), .. }
        )
    }

    pub fn alpha(&self, n: usize) -> Result<f64, IterationError> {
        let raw = match self {
            Schedule::HalpernProp2 => {
                if n == 0 {
                    0.0
                } else {
                    1.0 - 2.0 / (n as f64 + 1.0)
                }
            }
            Schedule::Lieder => 1.0 - 1.0 / (n as f64 + 2.0),
            Schedule::SamProp5 { rho } => {
                let j = (2 * ceil_inv_one_minus(*rho)) as f64;
                1.0 - 2.0 / ((1.0 - rho) * (n as f64 + j))
            }
            Schedule::HappaProp9 => 1.0 - 2.0 / (n as f64 + 2.0),
            Schedule::Explicit { alphas, .. } => {
                return alphas.get(n).copied().ok_or(IterationError::ExplicitTooShort {
                    needed: n + 1,
                    got: alphas.len(),
                })
            }
        };
        if !raw.is_finite() || !(-ALPHA_GUARD..=1.0 + ALPHA_GUARD).contains(&raw) {
            return Err(IterationError::AlphaOutOfRange { n, value: raw });
        }
        Ok(raw.clamp(0.0, 1.0))
    }

    pub fn gamma(&self, n: usize) -> Result<Option<f64>, IterationError> {
        match self {
            Schedule::HappaProp9 => Ok(Some((n as f64 + 2.0) / (n as f64 + 1.0))),
            Schedule::Explicit { gammas: Some(gs), .. } => gs
                .get(n)
                .copied()
                .map(Some)
                .ok_or(IterationError::ExplicitTooShort { needed: n + 1, got: gs.len() }),
            _ => Ok(None),
        }
    }
}

/// Which recurrence produced a trace; viscosity schemes carry the modulus
/// their per-step audits need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SchemeTag {
    Halpern,
    Sam { rho: f64 },
    Aim { rho: f64 },
    Happa,
}

impl SchemeTag {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeTag::Halpern => "halpern",
            SchemeTag::Sam { .. } => "sam",
            SchemeTag::Aim { .. } => "aim",
            SchemeTag::Happa => "happa",
        }
    }
}

/// A certified fixed point plus the integer envelope constant, carried into
/// the trace so audits can check boundedness step by step.
#[derive(Debug, Clone, Serialize)]
pub struct FixtureInfo {
    pub point: Point,
    pub m: u64,
}

#[derive(Debug, Clone)]
pub struct TraceOptions {
    /// Points are stored only while `(horizon + 1) * scalars_per_point`
    /// stays at or below this cap; residuals are always stored.
    pub memory_cap_scalars: usize,
    pub fixture: Option<FixtureInfo>,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions { memory_cap_scalars: 1_000_000, fixture: None }
    }
}

/// Everything recorded while running one iteration.
///
/// Residual indexing: `step_residuals[n] = d(x_n, x_{n+1})` for
/// `n < horizon`; all other series run over `0..=horizon`.
#[derive(Debug, Clone)]
pub struct Trace {
    pub scheme: SchemeTag,
    pub horizon: usize,
    pub points: Option<Vec<Point>>,
    pub step_residuals: Vec<f64>,
    pub map_residuals: Vec<f64>,
    /// `d(f(x_n), T x_n)` for sam, `d(x_n, f(x_n))` for aim.
    pub aux_residuals: Option<Vec<f64>>,
    /// For each requested index `m`: `d(x_n, T_{g_m} x_n)` over all `n`.
    pub cross_residuals: Vec<(usize, Vec<f64>)>,
    pub dist_to_fixture: Option<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub gammas: Option<Vec<f64>>,
    pub start: Point,
    pub anchor: Option<Point>,
    pub fixture: Option<FixtureInfo>,
}

impl Trace {
    pub fn space_scalars(&self, horizon: usize, start: &Point) -> usize {
        (horizon + 1) * start.scalar_count()
    }
}

struct Recorder {
    space: Space,
    keep_points: bool,
    points: Vec<Point>,
    current: Point,
    step: Vec<f64>,
    dist: Option<Vec<f64>>,
    fixture: Option<FixtureInfo>,
}

impl Recorder {
    fn new(
        space: &Space,
        start: &Point,
        horizon: usize,
        opts: &TraceOptions,
    ) -> Result<Recorder, IterationError> {
        let keep_points = (horizon + 1) * start.scalar_count() <= opts.memory_cap_scalars;
        let mut rec = Recorder {
            space: space.clone(),
            keep_points,
            points: if keep_points { Vec::with_capacity(horizon + 1) } else { Vec::new() },
            current: start.clone(),
            step: Vec::with_capacity(horizon),
            dist: opts.fixture.as_ref().map(|_| Vec::with_capacity(horizon + 1)),
            fixture: opts.fixture.clone(),
        };
        if keep_points {
            rec.points.push(start.clone());
        }
        rec.observe_fixture(start)?;
        Ok(rec)
    }

    fn observe_fixture(&mut self, x: &Point) -> Result<(), IterationError> {
        if let (Some(dist), Some(fx)) = (self.dist.as_mut(), self.fixture.as_ref()) {
            dist.push(self.space.distance(x, &fx.point)?);
        }
        Ok(())
    }

    fn advance(&mut self, next: Point) -> Result<(), IterationError> {
        self.step.push(self.space.distance(&self.current, &next)?);
        self.observe_fixture(&next)?;
        if self.keep_points {
            self.points.push(next.clone());
        }
        self.current = next;
        Ok(())
    }

    fn current(&self) -> &Point {
        &self.current
    }

    fn finish(self) -> (Option<Vec<Point>>, Vec<f64>, Option<Vec<f64>>) {
        let points = if self.keep_points { Some(self.points) } else { None };
        (points, self.step, self.dist)
    }
}

fn eval_alphas(schedule: &Schedule, horizon: usize) -> Result<Vec<f64>, IterationError> {
    (0..=horizon).map(|n| schedule.alpha(n)).collect()
}

fn check_inputs(
    space: &Space,
    map_space: &Space,
    points: &[&Point],
    horizon: usize,
) -> Result<(), IterationError> {
    if horizon == 0 {
        return Err(IterationError::HorizonZero);
    }
    if map_space != space {
        return Err(IterationError::SpaceMismatch);
    }
    for p in points {
        space.check_point(p)?;
    }
    Ok(())
}

/// Anchored iteration `x_{n+1} = (1 - a_n) u + a_n T x_n`.
pub fn run_halpern(
    space: &Space,
    map: &MapObject,
    start: &Point,
    anchor: &Point,
    schedule: &Schedule,
    horizon: usize,
    opts: &TraceOptions,
) -> Result<Trace, IterationError> {
    check_inputs(space, map.space(), &[start, anchor], horizon)?;
    match schedule {
        Schedule::HalpernProp2 | Schedule::Lieder => {}
        Schedule::Explicit { gammas: None, .. } => {}
        Schedule::Explicit { gammas: Some(_), .. } | Schedule::HappaProp9 => {
            return Err(IterationError::ScheduleHasGamma)
        }
        other => {
            return Err(IterationError::ScheduleKind {
                scheme: "halpern",
                got: other.kind_name(),
            })
        }
    }
    let alphas = eval_alphas(schedule, horizon)?;
    let mut rec = Recorder::new(space, start, horizon, opts)?;
    let mut map_residuals = Vec::with_capacity(horizon + 1);
    for &alpha in &alphas[..horizon] {
        let tx = map.apply(rec.current())?;
        map_residuals.push(space.distance(rec.current(), &tx)?);
        let next = space.combine(anchor, &tx, ConvexCoefficient::new(alpha)?)?;
        rec.advance(next)?;
    }
    let tx = map.apply(rec.current())?;
    map_residuals.push(space.distance(rec.current(), &tx)?);
    let (points, step_residuals, dist_to_fixture) = rec.finish();
    Ok(Trace {
        scheme: SchemeTag::Halpern,
        horizon,
        points,
        step_residuals,
        map_residuals,
        aux_residuals: None,
        cross_residuals: Vec::new(),
        dist_to_fixture,
        alphas,
        gammas: None,
        start: start.clone(),
        anchor: Some(anchor.clone()),
        fixture: opts.fixture.clone(),
    })
}

fn viscosity_modulus(
    contraction: &MapObject,
    schedule: &Schedule,
    scheme: &'static str,
) -> Result<f64, IterationError> {
    let rho = match contraction.kind() {
        MapKind::Contraction { rho } => rho,
        MapKind::Constant => 0.0,
        MapKind::Nonexpansive => return Err(IterationError::ContractionRequired),
    };
    match schedule {
        Schedule::SamProp5 { rho: srho } => {
            if *srho != rho {
                return Err(IterationError::RhoMismatch { schedule: *srho, map: rho });
            }
        }
        Schedule::Explicit { gammas: None, .. } => {}
        Schedule::Explicit { gammas: Some(_), .. } => {
            return Err(IterationError::ScheduleHasGamma)
        }
        other => {
            return Err(IterationError::ScheduleKind { scheme, got: other.kind_name() })
        }
    }
    Ok(rho)
}

/// Viscosity iteration `x_{n+1} = (1 - a_n) f(x_n) + a_n T x_n`.
pub fn run_sam(
    space: &Space,
    map: &MapObject,
    contraction: &MapObject,
    start: &Point,
    schedule: &Schedule,
    horizon: usize,
    opts: &TraceOptions,
) -> Result<Trace, IterationError> {
    check_inputs(space, map.space(), &[start], horizon)?;
    if contraction.space() != space {
        return Err(IterationError::SpaceMismatch);
    }
    let rho = viscosity_modulus(contraction, schedule, "sam")?;
    let alphas = eval_alphas(schedule, horizon)?;
    let mut rec = Recorder::new(space, start, horizon, opts)?;
    let mut map_residuals = Vec::with_capacity(horizon + 1);
    let mut aux = Vec::with_capacity(horizon + 1);
    for &alpha in &alphas[..horizon] {
        let x = rec.current().clone();
        let tx = map.apply(&x)?;
        let fx = contraction.apply(&x)?;
        map_residuals.push(space.distance(&x, &tx)?);
        aux.push(space.distance(&fx, &tx)?);
        let next = space.combine(&fx, &tx, ConvexCoefficient::new(alpha)?)?;
        rec.advance(next)?;
    }
    let x = rec.current().clone();
    let tx = map.apply(&x)?;
    map_residuals.push(space.distance(&x, &tx)?);
    aux.push(space.distance(&contraction.apply(&x)?, &tx)?);
    let (points, step_residuals, dist_to_fixture) = rec.finish();
    Ok(Trace {
        scheme: SchemeTag::Sam { rho },
        horizon,
        points,
        step_residuals,
        map_residuals,
        aux_residuals: Some(aux),
        cross_residuals: Vec::new(),
        dist_to_fixture,
        alphas,
        gammas: None,
        start: start.clone(),
        anchor: None,
        fixture: opts.fixture.clone(),
    })
}

/// Alternative iteration `x_{n+1} = T((1 - a_n) f(x_n) + a_n x_n)`.
pub fn run_aim(
    space: &Space,
    map: &MapObject,
    contraction: &MapObject,
    start: &Point,
    schedule: &Schedule,
    horizon: usize,
    opts: &TraceOptions,
) -> Result<Trace, IterationError> {
    check_inputs(space, map.space(), &[start], horizon)?;
    if contraction.space() != space {
        return Err(IterationError::SpaceMismatch);
    }
    let rho = viscosity_modulus(contraction, schedule, "aim")?;
    let alphas = eval_alphas(schedule, horizon)?;
    let mut rec = Recorder::new(space, start, horizon, opts)?;
    let mut map_residuals = Vec::with_capacity(horizon + 1);
    let mut aux = Vec::with_capacity(horizon + 1);
    for &alpha in &alphas[..horizon] {
        let x = rec.current().clone();
        let tx = map.apply(&x)?;
        let fx = contraction.apply(&x)?;
        map_residuals.push(space.distance(&x, &tx)?);
        aux.push(space.distance(&x, &fx)?);
        let inner = space.combine(&fx, &x, ConvexCoefficient::new(alpha)?)?;
        rec.advance(map.apply(&inner)?)?;
    }
    let x = rec.current().clone();
    map_residuals.push(space.distance(&x, &map.apply(&x)?)?);
    aux.push(space.distance(&x, &contraction.apply(&x)?)?);
    let (points, step_residuals, dist_to_fixture) = rec.finish();
    Ok(Trace {
        scheme: SchemeTag::Aim { rho },
        horizon,
        points,
        step_residuals,
        map_residuals,
        aux_residuals: Some(aux),
        cross_residuals: Vec::new(),
        dist_to_fixture,
        alphas,
        gammas: None,
        start: start.clone(),
        anchor: None,
        fixture: opts.fixture.clone(),
    })
}

/// Proximal-point Halpern iteration `x_{n+1} = (1 - a_n) u + a_n T_{g_n} x_n`
/// over a resolvent family. `cross` asks for the extra residual series
/// `d(x_n, T_{g_m} x_n)` at fixed indices `m`.
#[allow(clippy::too_many_arguments)]
pub fn run_happa(
    space: &Space,
    family: &ResolventFamily,
    start: &Point,
    anchor: &Point,
    schedule: &Schedule,
    horizon: usize,
    cross: &[usize],
    opts: &TraceOptions,
) -> Result<Trace, IterationError> {
    check_inputs(space, family.space(), &[start, anchor], horizon)?;
    match schedule {
        Schedule::HappaProp9 | Schedule::Explicit { gammas: Some(_), .. } => {}
        Schedule::Explicit { gammas: None, .. } => {
            return Err(IterationError::ScheduleMissingGamma)
        }
        other => {
            return Err(IterationError::ScheduleKind { scheme: "happa", got: other.kind_name() })
        }
    }
    for &m in cross {
        if m > horizon {
            return Err(IterationError::CrossBeyondHorizon { m, horizon });
        }
    }
    let alphas = eval_alphas(schedule, horizon)?;
    let gammas: Vec<f64> = (0..=horizon)
        .map(|n| {
            schedule
                .gamma(n)?
                .ok_or(IterationError::ScheduleMissingGamma)
        })
        .collect::<Result<_, _>>()?;
    let cross_gammas: Vec<f64> = cross.iter().map(|&m| gammas[m]).collect();

    let mut rec = Recorder::new(space, start, horizon, opts)?;
    let mut map_residuals = Vec::with_capacity(horizon + 1);
    let mut cross_residuals: Vec<(usize, Vec<f64>)> = cross
        .iter()
        .map(|&m| (m, Vec::with_capacity(horizon + 1)))
        .collect();
    for n in 0..horizon {
        let x = rec.current().clone();
        let tx = family.resolve(gammas[n], &x)?;
        map_residuals.push(space.distance(&x, &tx)?);
        for (slot, &gm) in cross_residuals.iter_mut().zip(&cross_gammas) {
            let tmx = family.resolve(gm, &x)?;
            slot.1.push(space.distance(&x, &tmx)?);
        }
        let next = space.combine(anchor, &tx, ConvexCoefficient::new(alphas[n])?)?;
        rec.advance(next)?;
    }
    let x = rec.current().clone();
    let tx = family.resolve(gammas[horizon], &x)?;
    map_residuals.push(space.distance(&x, &tx)?);
    for (slot, &gm) in cross_residuals.iter_mut().zip(&cross_gammas) {
        let tmx = family.resolve(gm, &x)?;
        slot.1.push(space.distance(&x, &tmx)?);
    }
    let (points, step_residuals, dist_to_fixture) = rec.finish();
    Ok(Trace {
        scheme: SchemeTag::Happa,
        horizon,
        points,
        step_residuals,
        map_residuals,
        aux_residuals: None,
        cross_residuals,
        dist_to_fixture,
        alphas,
        gammas: Some(gammas),
        start: start.clone(),
        anchor: Some(anchor.clone()),
        fixture: opts.fixture.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::PsdMatrix;

    fn euclid(dim: usize) -> Space {
        Space::euclid(dim).unwrap()
    }

    fn pt(v: f64) -> Point {
        Point::euclid([v])
    }

    fn coords0(trace: &Trace, n: usize) -> f64 {
        trace.points.as_ref().unwrap()[n].coords().unwrap()[0]
    }

    #[test]
    fn schedule_values() {
        let s = Schedule::HalpernProp2;
        assert_eq!(s.alpha(0).unwrap(), 0.0);
        assert_eq!(s.alpha(1).unwrap(), 0.0);
        assert!((s.alpha(2).unwrap() - 1.0 / 3.0).abs() < 1e-15);

        assert_eq!(Schedule::Lieder.alpha(0).unwrap(), 0.5);

        let happa = Schedule::HappaProp9;
        assert_eq!(happa.alpha(0).unwrap(), 0.0);
        assert_eq!(happa.gamma(0).unwrap(), Some(2.0));
        assert_eq!(happa.gamma(1).unwrap(), Some(1.5));

        // rho = 0.9: 1/(1-rho) floats to 10.000000000000002; J must be 20
        // and the first weight must clamp to exactly zero.
        assert_eq!(ceil_inv_one_minus(0.9), 10);
        assert_eq!(ceil_inv_one_minus(0.5), 2);
        assert_eq!(ceil_inv_one_minus(0.0), 1);
        assert_eq!(ceil_inv_one_minus(0.3), 2);
        let s9 = Schedule::sam_prop5(0.9).unwrap();
        assert_eq!(s9.alpha(0).unwrap(), 0.0);
        let s5 = Schedule::sam_prop5(0.5).unwrap();
        assert_eq!(s5.alpha(0).unwrap(), 0.0);
    }

    #[test]
    fn explicit_schedule_validation() {
        assert!(Schedule::explicit(vec![0.0, 1.5], None).is_err());
        assert!(Schedule::explicit(vec![0.0, 0.5], Some(vec![1.0])).is_err());
        assert!(Schedule::explicit(vec![0.5], Some(vec![-1.0])).is_err());
        Schedule::explicit(vec![0.0, 0.5, 1.0], None).unwrap();
    }

    #[test]
    fn halpern_literal_prefix() {
        let space = euclid(1);
        let map = MapObject::negation(space.clone()).unwrap();
        let trace = run_halpern(
            &space,
            &map,
            &pt(1.0),
            &pt(1.0),
            &Schedule::HalpernProp2,
            5,
            &TraceOptions::default(),
        )
        .unwrap();
        assert_eq!(coords0(&trace, 0), 1.0);
        assert_eq!(coords0(&trace, 1), 1.0);
        assert_eq!(coords0(&trace, 2), 1.0);
        assert!((coords0(&trace, 3) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(trace.step_residuals.len(), 5);
        assert_eq!(trace.map_residuals.len(), 6);
        assert_eq!(trace.alphas.len(), 6);
    }

    #[test]
    fn halpern_identity_map_stalls_at_anchor() {
        let space = euclid(2);
        let map = MapObject::identity(space.clone());
        let u = Point::euclid([0.25, -1.0]);
        let trace = run_halpern(
            &space,
            &map,
            &Point::euclid([3.0, 3.0]),
            &u,
            &Schedule::HalpernProp2,
            10,
            &TraceOptions::default(),
        )
        .unwrap();
        for n in 1..=10 {
            assert_eq!(trace.points.as_ref().unwrap()[n], u);
        }
        for n in 1..=10 {
            assert_eq!(trace.map_residuals[n], 0.0);
        }
    }

    #[test]
    fn zero_weights_pin_iterate_to_anchor() {
        let space = euclid(1);
        let map = MapObject::negation(space.clone()).unwrap();
        let sched = Schedule::explicit(vec![0.0; 9], None).unwrap();
        let trace = run_halpern(
            &space,
            &map,
            &pt(4.0),
            &pt(2.0),
            &sched,
            8,
            &TraceOptions::default(),
        )
        .unwrap();
        for n in 1..=8 {
            assert_eq!(coords0(&trace, n), 2.0);
        }
    }

    #[test]
    fn sam_first_step_is_contraction_image() {
        let space = euclid(2);
        let map = MapObject::rotation(space.clone(), std::f64::consts::FRAC_PI_2).unwrap();
        let f = MapObject::scale(space.clone(), 0.5).unwrap();
        let sched = Schedule::sam_prop5(0.5).unwrap();
        let trace = run_sam(
            &space,
            &map,
            &f,
            &Point::euclid([2.0, -1.0]),
            &sched,
            3,
            &TraceOptions::default(),
        )
        .unwrap();
        // J = 4 makes a_0 = 0, so x_1 = f(x_0) exactly.
        assert_eq!(
            trace.points.as_ref().unwrap()[1],
            Point::euclid([1.0, -0.5])
        );
        assert_eq!(trace.scheme, SchemeTag::Sam { rho: 0.5 });
    }

    #[test]
    fn sam_with_constant_term_matches_halpern() {
        let space = euclid(2);
        let map = MapObject::rotation(space.clone(), std::f64::consts::FRAC_PI_2).unwrap();
        let u = Point::euclid([1.0, 0.0]);
        let f = MapObject::constant(space.clone(), u.clone()).unwrap();
        let horizon = 50;
        let sam_sched = Schedule::sam_prop5(0.0).unwrap();
        let sam = run_sam(&space, &map, &f, &u, &sam_sched, horizon, &TraceOptions::default())
            .unwrap();
        let alphas: Vec<f64> = (0..=horizon).map(|n| sam_sched.alpha(n).unwrap()).collect();
        let halpern = run_halpern(
            &space,
            &map,
            &u,
            &u,
            &Schedule::explicit(alphas, None).unwrap(),
            horizon,
            &TraceOptions::default(),
        )
        .unwrap();
        assert_eq!(sam.points, halpern.points);
        assert_eq!(sam.step_residuals, halpern.step_residuals);
        assert_eq!(sam.map_residuals, halpern.map_residuals);
    }

    #[test]
    fn aim_first_step_under_identity_map() {
        let space = euclid(1);
        let map = MapObject::identity(space.clone());
        let f = MapObject::scale(space.clone(), 0.5).unwrap();
        let sched = Schedule::sam_prop5(0.5).unwrap();
        let trace =
            run_aim(&space, &map, &f, &pt(2.0), &sched, 2, &TraceOptions::default()).unwrap();
        assert_eq!(coords0(&trace, 1), 1.0);
    }

    #[test]
    fn aim_negation_recurrence_matches_direct_evaluation() {
        let space = euclid(1);
        let map = MapObject::negation(space.clone()).unwrap();
        let f = MapObject::constant(space.clone(), pt(0.0)).unwrap();
        let sched = Schedule::sam_prop5(0.0).unwrap();
        let trace =
            run_aim(&space, &map, &f, &pt(1.0), &sched, 20, &TraceOptions::default()).unwrap();
        let mut x = 1.0;
        for n in 0..20 {
            let a = sched.alpha(n).unwrap();
            x = -(a * x);
            assert_eq!(coords0(&trace, n + 1), x, "n = {n}");
        }
    }

    fn identity_family_1d() -> ResolventFamily {
        let a = PsdMatrix::from_rows(&[vec![1.0]]).unwrap();
        ResolventFamily::linear_psd(euclid(1), a).unwrap()
    }

    #[test]
    fn happa_literal_prefix() {
        let family = identity_family_1d();
        let trace = run_happa(
            &euclid(1),
            &family,
            &pt(1.0),
            &pt(1.0),
            &Schedule::HappaProp9,
            3,
            &[],
            &TraceOptions::default(),
        )
        .unwrap();
        assert_eq!(coords0(&trace, 1), 1.0);
        assert!((coords0(&trace, 2) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn happa_constant_gamma_matches_halpern_on_fixed_member() {
        let family = identity_family_1d();
        let space = euclid(1);
        let horizon = 40;
        let gamma = 0.75;
        let sched = Schedule::explicit(
            (0..=horizon).map(|n| Schedule::HappaProp9.alpha(n).unwrap()).collect(),
            Some(vec![gamma; horizon + 1]),
        )
        .unwrap();
        let happa = run_happa(
            &space,
            &family,
            &pt(1.0),
            &pt(1.0),
            &sched,
            horizon,
            &[],
            &TraceOptions::default(),
        )
        .unwrap();
        let member = family.member(gamma).unwrap();
        let halpern = run_halpern(
            &space,
            &member,
            &pt(1.0),
            &pt(1.0),
            &Schedule::explicit(
                (0..=horizon).map(|n| Schedule::HappaProp9.alpha(n).unwrap()).collect(),
                None,
            )
            .unwrap(),
            horizon,
            &TraceOptions::default(),
        )
        .unwrap();
        assert_eq!(happa.points, halpern.points);
        assert_eq!(happa.step_residuals, halpern.step_residuals);
    }

    #[test]
    fn happa_unit_weights_give_plain_proximal_point() {
        let family = identity_family_1d();
        let horizon = 10;
        let sched = Schedule::explicit(
            vec![1.0; horizon + 1],
            Some((0..=horizon).map(|n| (n as f64 + 2.0) / (n as f64 + 1.0)).collect()),
        )
        .unwrap();
        let trace = run_happa(
            &euclid(1),
            &family,
            &pt(1.0),
            &pt(9.0),
            &sched,
            horizon,
            &[],
            &TraceOptions::default(),
        )
        .unwrap();
        // The resolvent solves (1 + gamma) y = x by Cholesky, which rounds
        // differently from plain division, so compare to relative precision.
        let mut x = 1.0;
        for n in 0..horizon {
            let g = (n as f64 + 2.0) / (n as f64 + 1.0);
            x /= 1.0 + g;
            let got = coords0(&trace, n + 1);
            assert!((got - x).abs() <= 1e-12 * x.abs(), "n = {n}: got {got}, want {x}");
        }
    }

    #[test]
    fn happa_records_cross_series() {
        let family = identity_family_1d();
        let trace = run_happa(
            &euclid(1),
            &family,
            &pt(1.0),
            &pt(1.0),
            &Schedule::HappaProp9,
            20,
            &[0, 5, 20],
            &TraceOptions::default(),
        )
        .unwrap();
        assert_eq!(trace.cross_residuals.len(), 3);
        for (_, series) in &trace.cross_residuals {
            assert_eq!(series.len(), 21);
        }
        // d(x_0, T_{g_0} x_0) appears in both the family and cross-0 series.
        assert_eq!(trace.cross_residuals[0].1[0], trace.map_residuals[0]);
    }

    #[test]
    fn scheme_schedule_mismatches_are_rejected() {
        let space = euclid(1);
        let map = MapObject::negation(space.clone()).unwrap();
        let family = identity_family_1d();
        let f = MapObject::scale(space.clone(), 0.5).unwrap();
        let opts = TraceOptions::default();

        assert!(matches!(
            run_halpern(&space, &map, &pt(1.0), &pt(1.0), &Schedule::HappaProp9, 5, &opts),
            Err(IterationError::ScheduleHasGamma)
        ));
        assert!(matches!(
            run_halpern(
                &space, &map, &pt(1.0), &pt(1.0),
                &Schedule::sam_prop5(0.5).unwrap(), 5, &opts
            ),
            Err(IterationError::ScheduleKind { .. })
        ));
        assert!(matches!(
            run_happa(
                &space, &family, &pt(1.0), &pt(1.0),
                &Schedule::HalpernProp2, 5, &[], &opts
            ),
            Err(IterationError::ScheduleKind { .. })
        ));
        assert!(matches!(
            run_happa(
                &space, &family, &pt(1.0), &pt(1.0),
                &Schedule::explicit(vec![0.5; 6], None).unwrap(), 5, &[], &opts
            ),
            Err(IterationError::ScheduleMissingGamma)
        ));
        assert!(matches!(
            run_sam(
                &space, &map, &f, &pt(1.0),
                &Schedule::sam_prop5(0.25).unwrap(), 5, &opts
            ),
            Err(IterationError::RhoMismatch { .. })
        ));
        assert!(matches!(
            run_sam(&space, &map, &map, &pt(1.0), &Schedule::sam_prop5(0.5).unwrap(), 5, &opts),
            Err(IterationError::ContractionRequired)
        ));
        assert!(matches!(
            run_happa(
                &space, &family, &pt(1.0), &pt(1.0),
                &Schedule::HappaProp9, 5, &[9], &opts
            ),
            Err(IterationError::CrossBeyondHorizon { .. })
        ));
        assert!(matches!(
            run_halpern(&space, &map, &pt(1.0), &pt(1.0), &Schedule::HalpernProp2, 0, &opts),
            Err(IterationError::HorizonZero)
        ));
    }

    #[test]
    fn explicit_schedule_shorter_than_horizon_fails() {
        let space = euclid(1);
        let map = MapObject::negation(space.clone()).unwrap();
        let sched = Schedule::explicit(vec![0.5; 3], None).unwrap();
        assert!(matches!(
            run_halpern(&space, &map, &pt(1.0), &pt(1.0), &sched, 5, &TraceOptions::default()),
            Err(IterationError::ExplicitTooShort { .. })
        ));
    }

    #[test]
    fn traces_are_deterministic() {
        let space = euclid(2);
        let map = MapObject::rotation(space.clone(), 1.0).unwrap();
        let run = || {
            run_halpern(
                &space,
                &map,
                &Point::euclid([1.0, 2.0]),
                &Point::euclid([0.5, 0.0]),
                &Schedule::HalpernProp2,
                200,
                &TraceOptions::default(),
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.points, b.points);
        assert_eq!(a.step_residuals, b.step_residuals);
        assert_eq!(a.map_residuals, b.map_residuals);
    }

    #[test]
    fn memory_cap_drops_points_but_keeps_residuals() {
        let space = euclid(1);
        let map = MapObject::negation(space.clone()).unwrap();
        let opts = TraceOptions {
            memory_cap_scalars: 10,
            fixture: Some(FixtureInfo { point: pt(0.0), m: 1 }),
        };
        let trace = run_halpern(
            &space,
            &map,
            &pt(1.0),
            &pt(1.0),
            &Schedule::HalpernProp2,
            100,
            &opts,
        )
        .unwrap();
        assert!(trace.points.is_none());
        assert_eq!(trace.step_residuals.len(), 100);
        assert_eq!(trace.map_residuals.len(), 101);
        assert_eq!(trace.dist_to_fixture.as_ref().unwrap().len(), 101);
    }
}
