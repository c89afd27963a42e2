//! Closed-form rates, bound curves, and the certification engine.
//!
//! A rate function `phi` certifies a residual series `b` when
//! `b_n <= 1/(k+1)` for every `k` and every `n >= phi(k)`. Each scheme's
//! catalog entry also carries the hyperbolic bound curve the rate was
//! derived from (where one exists); the curve check is the stronger of the
//! two since a finite horizon cannot witness a "for all n >= phi(k)" claim.
//!
//! The module also houses the comparison-sequence lemma of Sabach and
//! Shtern as a standalone oracle: instances carry their own sequences, the
//! check evaluates hypothesis and conclusion separately, and a seeded sweep
//! asserts that the first always forces the second.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::audit::AuditReport;
use crate::iterations::{ceil_inv_one_minus, SchemeTag, Trace};
use crate::maps::{FixedPointFixture, MapError, MapObject};
use crate::spaces::{Point, Space, SpaceError};

/// Absolute slack on every rate and curve certification; far below any
/// genuine violation of an O(M/n) bound, far above float drift at 1e4.
pub const CERTIFY_SLACK: f64 = 1e-9;
/// Per-step lemma inequalities get slack `1e-10 * (1 + M)`.
pub const LEMMA_SLACK_UNIT: f64 = 1e-10;
/// Trace boundedness is `d(x_n, p) <= M + 1e-9`.
pub const BOUNDEDNESS_SLACK: f64 = 1e-9;
/// Comparison-sequence checks get slack `1e-12 * (1 + L)`.
pub const COMPARISON_SLACK_UNIT: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum RateError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("sequence too short: need {needed} entries, got {got}")]
    SequenceTooShort { needed: usize, got: usize },
    #[error("viscosity envelope needs a declared contraction or constant map")]
    ContractionRequired,
    #[error("trace has no `{0}` residual series")]
    SeriesMissing(String),
    #[error("trace carries no certified fixture, audit needs M")]
    MissingFixture,
    #[error("contraction modulus must lie in [0, 1), got {0}")]
    RhoRange(f64),
}

// ---------------------------------------------------------------------------
// Comparison-sequence lemma (Sabach-Shtern)
// ---------------------------------------------------------------------------

/// An instance of the comparison-sequence lemma: coefficients
/// `a_n = N / (gamma (n + J))` with `J >= N >= 2` and `gamma` in `(0, 1]`,
/// a nonnegative sequence `s` with `s_0 <= L`, and a perturbation sequence
/// `c` bounded above by `L`.
///
/// Hypothesis (per step): `s_{n+1} <= (1 - gamma a_{n+1}) s_n + (a_n - a_{n+1}) c_n`.
/// Conclusion: `s_n <= J L / (gamma (n + J))`.
#[derive(Debug, Clone, Serialize)]
pub struct SabachShternInstance {
    pub ell: f64,
    pub big_n: u64,
    pub big_j: u64,
    pub gamma: f64,
    pub s: Vec<f64>,
    pub c: Vec<f64>,
}

impl SabachShternInstance {
    pub fn new(
        ell: f64,
        big_n: u64,
        big_j: u64,
        gamma: f64,
        s: Vec<f64>,
        c: Vec<f64>,
    ) -> Result<SabachShternInstance, RateError> {
        let inst = SabachShternInstance { ell, big_n, big_j, gamma, s, c };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<(), RateError> {
        if !self.ell.is_finite() || self.ell <= 0.0 {
            return Err(RateError::InvalidInstance(format!("L = {} must be positive", self.ell)));
        }
        if self.big_n < 2 {
            return Err(RateError::InvalidInstance(format!("N = {} must be >= 2", self.big_n)));
        }
        if self.big_j < self.big_n {
            return Err(RateError::InvalidInstance(format!(
                "J = {} must be >= N = {}",
                self.big_j, self.big_n
            )));
        }
        if !self.gamma.is_finite() || self.gamma <= 0.0 || self.gamma > 1.0 {
            return Err(RateError::InvalidInstance(format!(
                "gamma = {} must lie in (0, 1]",
                self.gamma
            )));
        }
        if self.s.is_empty() {
            return Err(RateError::InvalidInstance("s is empty".into()));
        }
        if self.s[0] > self.ell {
            return Err(RateError::InvalidInstance(format!(
                "s_0 = {} exceeds L = {}",
                self.s[0], self.ell
            )));
        }
        for (n, &v) in self.s.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(RateError::InvalidInstance(format!("s_{n} = {v} is not nonnegative")));
            }
        }
        for (n, &v) in self.c.iter().enumerate() {
            if !v.is_finite() || v > self.ell {
                return Err(RateError::InvalidInstance(format!(
                    "c_{n} = {v} exceeds L = {}",
                    self.ell
                )));
            }
        }
        Ok(())
    }

    /// `a_n = N / (gamma (n + J))`; decreasing, and `gamma a_n <= N/J <= 1`.
    pub fn coefficient(&self, n: usize) -> f64 {
        self.big_n as f64 / (self.gamma * (n as f64 + self.big_j as f64))
    }

    /// Concluded envelope `J L / (gamma (n + J))`.
    pub fn bound(&self, n: usize) -> f64 {
        self.big_j as f64 * self.ell / (self.gamma * (n as f64 + self.big_j as f64))
    }

    /// The tight instance: `c = L`, `gamma = 1`, `N = J = 2`, `s_0 = L = 1`,
    /// and `s` built by running the hypothesis with equality. Its closed
    /// form is `s_n = 2/(n+2)`, meeting the concluded envelope exactly.
    pub fn equality_witness(horizon: usize) -> SabachShternInstance {
        let a = |n: usize| 2.0 / (n as f64 + 2.0);
        let mut s = Vec::with_capacity(horizon + 1);
        s.push(1.0);
        for n in 0..horizon {
            let next = (1.0 - a(n + 1)) * s[n] + (a(n) - a(n + 1));
            s.push(next);
        }
        SabachShternInstance {
            ell: 1.0,
            big_n: 2,
            big_j: 2,
            gamma: 1.0,
            s,
            c: vec![1.0; horizon],
        }
    }

    /// Random instance satisfying the hypothesis by construction:
    /// parameters are drawn from wide ranges, `c_n` in `[0, L]`, and each
    /// `s_{n+1}` is the hypothesis right-hand side shrunk by a random
    /// factor in `[0.5, 1]`, so the inequality holds with real slack.
    pub fn random(seed: u64, horizon: usize) -> SabachShternInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ell = 10f64.powf(rng.random_range(-2.0..=2.0));
        let gamma: f64 = rng.random_range(0.05..=1.0);
        let big_n = rng.random_range(2..=6u64);
        let big_j = rng.random_range(big_n..=big_n + 20);
        let inst_a = |n: usize| big_n as f64 / (gamma * (n as f64 + big_j as f64));
        let mut s = Vec::with_capacity(horizon + 1);
        let mut c = Vec::with_capacity(horizon);
        s.push(rng.random_range(0.0..=ell));
        for n in 0..horizon {
            let cn = rng.random_range(0.0..=ell);
            c.push(cn);
            let rhs = (1.0 - gamma * inst_a(n + 1)) * s[n] + (inst_a(n) - inst_a(n + 1)) * cn;
            let shrink = 1.0 - 0.5 * rng.random::<f64>();
            s.push(rhs * shrink);
        }
        SabachShternInstance { ell, big_n, big_j, gamma, s, c }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SabachShternReport {
    pub horizon: usize,
    pub hypothesis_ok: bool,
    pub conclusion_ok: bool,
    /// Largest `s_{n+1} - rhs_n`; nonpositive when the hypothesis holds.
    pub worst_hypothesis_margin: f64,
    /// Largest `s_n - bound_n`; nonpositive when the conclusion holds.
    pub worst_conclusion_margin: f64,
    /// `hypothesis_ok` implies `conclusion_ok`; false is a soundness break.
    pub sound: bool,
}

pub fn sabach_shtern_check(
    inst: &SabachShternInstance,
    horizon: usize,
) -> Result<SabachShternReport, RateError> {
    inst.validate()?;
    if inst.s.len() < horizon + 1 {
        return Err(RateError::SequenceTooShort { needed: horizon + 1, got: inst.s.len() });
    }
    if inst.c.len() < horizon {
        return Err(RateError::SequenceTooShort { needed: horizon, got: inst.c.len() });
    }
    let slack = COMPARISON_SLACK_UNIT * (1.0 + inst.ell);
    let mut worst_hypothesis = f64::NEG_INFINITY;
    for n in 0..horizon {
        let rhs = (1.0 - inst.gamma * inst.coefficient(n + 1)) * inst.s[n]
            + (inst.coefficient(n) - inst.coefficient(n + 1)) * inst.c[n];
        worst_hypothesis = worst_hypothesis.max(inst.s[n + 1] - rhs);
    }
    let mut worst_conclusion = f64::NEG_INFINITY;
    for n in 0..=horizon {
        worst_conclusion = worst_conclusion.max(inst.s[n] - inst.bound(n));
    }
    let hypothesis_ok = worst_hypothesis <= slack;
    let conclusion_ok = worst_conclusion <= slack;
    Ok(SabachShternReport {
        horizon,
        hypothesis_ok,
        conclusion_ok,
        worst_hypothesis_margin: worst_hypothesis,
        worst_conclusion_margin: worst_conclusion,
        sound: !hypothesis_ok || conclusion_ok,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub instances: usize,
    pub horizon: usize,
    pub seed: u64,
    pub hypothesis_holds: usize,
    pub soundness_violations: usize,
    pub worst_conclusion_margin: f64,
}

/// Seeded soundness sweep: every randomly built instance must satisfy the
/// hypothesis (it does by construction) and therefore the conclusion.
pub fn sabach_shtern_sweep(
    instances: usize,
    horizon: usize,
    seed: u64,
) -> Result<SweepReport, RateError> {
    let mut hypothesis_holds = 0;
    let mut soundness_violations = 0;
    let mut worst_conclusion = f64::NEG_INFINITY;
    for i in 0..instances {
        let inst = SabachShternInstance::random(seed.wrapping_add(i as u64), horizon);
        let report = sabach_shtern_check(&inst, horizon)?;
        if report.hypothesis_ok {
            hypothesis_holds += 1;
            worst_conclusion = worst_conclusion.max(report.worst_conclusion_margin);
            if !report.conclusion_ok {
                soundness_violations += 1;
            }
        }
    }
    Ok(SweepReport {
        instances,
        horizon,
        seed,
        hypothesis_holds,
        soundness_violations,
        worst_conclusion_margin: worst_conclusion,
    })
}

// ---------------------------------------------------------------------------
// Envelope constant M
// ---------------------------------------------------------------------------

/// Positive integer envelope constant together with the real quantity it
/// had to dominate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MConstant {
    pub m: u64,
    pub required: f64,
}

/// How the envelope is fed: anchored schemes bound `d(x,p)` and `d(u,p)`;
/// viscosity schemes bound `d(x,p)` and `d(p, f(p)) / (1 - rho)`.
#[derive(Debug, Clone, Copy)]
pub enum MRecipe<'a> {
    Anchor { u: &'a Point },
    Viscosity { f: &'a MapObject },
}

/// Smallest valid positive integer >= `required`, with a snap window so a
/// distance that floats a hair above an exact integer does not bump M.
fn integer_envelope(required: f64) -> u64 {
    let nearest = required.round();
    let snapped = if (required - nearest).abs() <= 1e-9 * (1.0 + nearest.abs()) {
        nearest
    } else {
        required.ceil()
    };
    snapped.max(1.0) as u64
}

pub fn compute_m(
    space: &Space,
    x: &Point,
    fixture: &FixedPointFixture,
    recipe: MRecipe,
) -> Result<MConstant, RateError> {
    let p = &fixture.point;
    let dxp = space.distance(x, p)?;
    let required = match recipe {
        MRecipe::Anchor { u } => dxp.max(space.distance(u, p)?),
        MRecipe::Viscosity { f } => {
            let rho = f.kind().rho().ok_or(RateError::ContractionRequired)?;
            if !(0.0..1.0).contains(&rho) {
                return Err(RateError::RhoRange(rho));
            }
            let fp = f.apply(p)?;
            dxp.max(space.distance(p, &fp)? / (1.0 - rho))
        }
    };
    Ok(MConstant { m: integer_envelope(required), required })
}

// ---------------------------------------------------------------------------
// Rate functions and catalog
// ---------------------------------------------------------------------------

/// Affine rate `phi(k) = slope (k+1) - offset`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RatePhi {
    pub slope: f64,
    pub offset: f64,
}

impl RatePhi {
    pub fn eval(&self, k: usize) -> f64 {
        self.slope * (k as f64 + 1.0) - self.offset
    }

    /// First index the rate claims anything about; negative values clamp
    /// to 0 (the claim then covers the whole series).
    pub fn eval_index(&self, k: usize) -> usize {
        let v = self.eval(k);
        if v <= 0.0 {
            0
        } else {
            v.round() as usize
        }
    }
}

/// Envelope `numerator / (n + shift)`, claimed for `n >= start`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundCurve {
    pub numerator: f64,
    pub shift: f64,
    pub start: usize,
}

impl BoundCurve {
    pub fn eval(&self, n: f64) -> f64 {
        self.numerator / (n + self.shift)
    }
}

/// Which residual series of a trace a rate talks about.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ResidualKind {
    /// `d(x_{n+1}, x_n)`
    Step,
    /// `d(x_n, T x_n)` for a single map
    Map,
    /// `d(x_n, T_n x_n)` along a varying resolvent family
    Family,
    /// `d(x_n, T_m x_n)` against the fixed family member at index `m`
    Cross(usize),
}

impl ResidualKind {
    pub fn label(&self) -> String {
        match self {
            ResidualKind::Step => "step".into(),
            ResidualKind::Map => "map".into(),
            ResidualKind::Family => "family".into(),
            ResidualKind::Cross(m) => format!("cross(m={m})"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RateFunction {
    pub name: String,
    pub kind: ResidualKind,
    pub phi: RatePhi,
    pub curve: Option<BoundCurve>,
    /// When true, `curve(phi(k)) = 1/(k+1)` is an algebraic identity and is
    /// certified two-sided; otherwise only `curve(phi(k)) <= 1/(k+1)` is
    /// required (the direction that makes the curve imply the rate).
    pub consistency_exact: bool,
}

/// Scheme parameters the catalog needs.
#[derive(Debug, Clone)]
pub enum CatalogParams {
    Halpern { m: u64 },
    /// Hilbert-space anchored-at-start run: the sharp envelope scales with
    /// the real starting distance, the rate with its integer envelope.
    Lieder { m: u64, initial_distance: f64 },
    Sam { rho: f64, m: u64 },
    Aim { rho: f64, m: u64 },
    Happa { m: u64, cross: Vec<usize> },
}

fn entry(
    name: String,
    kind: ResidualKind,
    slope: f64,
    offset: f64,
    curve: Option<BoundCurve>,
    consistency_exact: bool,
) -> RateFunction {
    RateFunction { name, kind, phi: RatePhi { slope, offset }, curve, consistency_exact }
}

fn check_rho(rho: f64) -> Result<(), RateError> {
    if !rho.is_finite() || !(0.0..1.0).contains(&rho) {
        return Err(RateError::RhoRange(rho));
    }
    Ok(())
}

/// All proven rate functions for a scheme, with their bound curves.
pub fn rate_catalog(params: &CatalogParams) -> Result<Vec<RateFunction>, RateError> {
    let catalog = match params {
        CatalogParams::Halpern { m } => {
            let m = *m as f64;
            vec![
                entry("halpern step rate".into(), ResidualKind::Step, 8.0 * m, 1.0, None, false),
                entry("halpern map rate".into(), ResidualKind::Map, 16.0 * m, 1.0, None, false),
            ]
        }
        CatalogParams::Lieder { m, initial_distance } => {
            let mf = *m as f64;
            if !initial_distance.is_finite() || *initial_distance < 0.0 {
                return Err(RateError::InvalidInstance(format!(
                    "initial distance {initial_distance} must be nonnegative"
                )));
            }
            if *initial_distance > mf + CERTIFY_SLACK {
                return Err(RateError::InvalidInstance(format!(
                    "envelope M = {m} does not dominate the starting distance {initial_distance}"
                )));
            }
            let curve = BoundCurve { numerator: 2.0 * initial_distance, shift: 1.0, start: 1 };
            // curve(phi(k)) = D/(M(k+1)): exact only when D = M.
            let exact = (initial_distance / mf - 1.0).abs() <= CERTIFY_SLACK;
            vec![entry(
                "lieder map rate".into(),
                ResidualKind::Map,
                2.0 * mf,
                1.0,
                Some(curve),
                exact,
            )]
        }
        CatalogParams::Sam { rho, m } | CatalogParams::Aim { rho, m } => {
            check_rho(*rho)?;
            let scheme = if matches!(params, CatalogParams::Sam { .. }) { "sam" } else { "aim" };
            let m = *m as f64;
            let ci = ceil_inv_one_minus(*rho) as f64;
            let j = 2.0 * ci;
            // curve(phi(k)) = 1/((1-rho) ci (k+1)): the identity is exact
            // only when ci is the exact reciprocal of 1-rho.
            let exact = ((1.0 - rho) * ci - 1.0).abs() <= CERTIFY_SLACK;
            let step_curve =
                BoundCurve { numerator: 2.0 * m * j / (1.0 - rho), shift: j, start: 0 };
            let map_curve =
                BoundCurve { numerator: 2.0 * m * (j + 2.0) / (1.0 - rho), shift: j, start: 0 };
            vec![
                entry(
                    format!("{scheme} step rate"),
                    ResidualKind::Step,
                    4.0 * m * ci * ci,
                    2.0 * ci,
                    Some(step_curve),
                    exact,
                ),
                entry(
                    format!("{scheme} map rate"),
                    ResidualKind::Map,
                    4.0 * m * ci * ci + 4.0 * m * ci,
                    2.0 * ci,
                    Some(map_curve),
                    exact,
                ),
            ]
        }
        CatalogParams::Happa { m, cross } => {
            let m = *m as f64;
            let curve = |num: f64| BoundCurve { numerator: num * m, shift: 2.0, start: 0 };
            let mut entries = vec![
                entry(
                    "happa step rate".into(),
                    ResidualKind::Step,
                    6.0 * m,
                    2.0,
                    Some(curve(6.0)),
                    true,
                ),
                entry(
                    "happa family rate".into(),
                    ResidualKind::Family,
                    10.0 * m,
                    2.0,
                    Some(curve(10.0)),
                    true,
                ),
            ];
            for &mi in cross {
                entries.push(entry(
                    format!("happa cross rate (m={mi})"),
                    ResidualKind::Cross(mi),
                    20.0 * m,
                    2.0,
                    Some(curve(20.0)),
                    true,
                ));
            }
            entries
        }
    };
    Ok(catalog)
}

// ---------------------------------------------------------------------------
// Certification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Witness {
    pub k: Option<usize>,
    pub n: usize,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub rate: RateFunction,
    pub series_len: usize,
    pub rate_pass: bool,
    pub checked_ks: usize,
    pub unchecked_ks: Vec<usize>,
    pub worst_rate_excess: Option<f64>,
    pub rate_witness: Option<Witness>,
    pub curve_pass: Option<bool>,
    pub worst_curve_excess: Option<f64>,
    pub curve_witness: Option<Witness>,
    pub consistency_pass: Option<bool>,
    pub worst_consistency_residual: Option<f64>,
}

impl RateReport {
    pub fn passed(&self) -> bool {
        self.rate_pass && self.curve_pass.unwrap_or(true) && self.consistency_pass.unwrap_or(true)
    }
}

fn residual_series<'a>(trace: &'a Trace, kind: &ResidualKind) -> Result<&'a [f64], RateError> {
    match kind {
        ResidualKind::Step => Ok(&trace.step_residuals),
        ResidualKind::Map => {
            if matches!(trace.scheme, SchemeTag::Happa) {
                Err(RateError::SeriesMissing("map (proximal traces expose `family`)".into()))
            } else {
                Ok(&trace.map_residuals)
            }
        }
        ResidualKind::Family => {
            if matches!(trace.scheme, SchemeTag::Happa) {
                Ok(&trace.map_residuals)
            } else {
                Err(RateError::SeriesMissing("family".into()))
            }
        }
        ResidualKind::Cross(m) => trace
            .cross_residuals
            .iter()
            .find(|(mi, _)| mi == m)
            .map(|(_, s)| s.as_slice())
            .ok_or_else(|| RateError::SeriesMissing(format!("cross(m={m})"))),
    }
}

/// Certify one rate function against a trace.
///
/// Three checks: (a) the rate itself, `b_n <= 1/(k+1)` for `k <= k_max`
/// and `phi(k) <= n < series length` (k values whose `phi(k)` lies beyond
/// the series are reported unchecked, not failed); (b) the bound curve,
/// `b_n <= curve(n)` for all recorded `n >= start`; (c) curve/rate
/// consistency at `n = phi(k)` for `k <= 100`, algebraic so independent of
/// the horizon. All at absolute slack 1e-9.
pub fn certify(trace: &Trace, rf: &RateFunction, k_max: usize) -> Result<RateReport, RateError> {
    let series = residual_series(trace, &rf.kind)?;
    let len = series.len();

    // One suffix-max pass makes each k check O(1).
    let mut suffix = vec![f64::NEG_INFINITY; len];
    let mut running = f64::NEG_INFINITY;
    for i in (0..len).rev() {
        running = running.max(series[i]);
        suffix[i] = running;
    }

    let mut unchecked_ks = Vec::new();
    let mut checked_ks = 0;
    let mut worst_rate: Option<f64> = None;
    let mut rate_witness = None;
    let mut rate_pass = true;
    for k in 0..=k_max {
        let n_phi = rf.phi.eval_index(k);
        if n_phi >= len {
            unchecked_ks.push(k);
            continue;
        }
        checked_ks += 1;
        let bound = 1.0 / (k as f64 + 1.0);
        let excess = suffix[n_phi] - bound;
        worst_rate = Some(worst_rate.map_or(excess, |w: f64| w.max(excess)));
        if excess > CERTIFY_SLACK && rate_witness.is_none() {
            rate_pass = false;
            let n = (n_phi..len)
                .find(|&i| series[i] - bound > CERTIFY_SLACK)
                .expect("suffix max exceeded the bound, so some entry does");
            rate_witness = Some(Witness { k: Some(k), n, value: series[n], bound });
        }
    }

    let mut curve_pass = None;
    let mut worst_curve: Option<f64> = None;
    let mut curve_witness = None;
    let mut consistency_pass = None;
    let mut worst_consistency = None;
    if let Some(curve) = &rf.curve {
        let mut pass = true;
        for (n, &value) in series.iter().enumerate().skip(curve.start) {
            let bound = curve.eval(n as f64);
            let excess = value - bound;
            worst_curve = Some(worst_curve.map_or(excess, |w: f64| w.max(excess)));
            if excess > CERTIFY_SLACK && curve_witness.is_none() {
                pass = false;
                curve_witness = Some(Witness { k: None, n, value, bound });
            }
        }
        curve_pass = Some(pass);

        let mut one_sided = f64::NEG_INFINITY;
        let mut two_sided = 0.0_f64;
        for k in 0..=100usize {
            let n_phi = rf.phi.eval(k).max(curve.start as f64);
            let at_phi = curve.eval(n_phi);
            let target = 1.0 / (k as f64 + 1.0);
            one_sided = one_sided.max(at_phi - target);
            two_sided = two_sided.max((at_phi - target).abs());
        }
        let ok = if rf.consistency_exact {
            two_sided <= CERTIFY_SLACK
        } else {
            one_sided <= CERTIFY_SLACK
        };
        consistency_pass = Some(ok);
        worst_consistency = Some(if rf.consistency_exact { two_sided } else { one_sided });
    }

    Ok(RateReport {
        rate: rf.clone(),
        series_len: len,
        rate_pass,
        checked_ks,
        unchecked_ks,
        worst_rate_excess: worst_rate,
        rate_witness,
        curve_pass,
        worst_curve_excess: worst_curve,
        curve_witness,
        consistency_pass,
        worst_consistency_residual: worst_consistency,
    })
}

// ---------------------------------------------------------------------------
// Per-step lemma audit
// ---------------------------------------------------------------------------

/// Check the per-step inequalities behind each scheme's rate proof, plus
/// trace boundedness `d(x_n, p) <= M`. Needs the trace to carry its
/// certified fixture (for M).
pub fn lemma_audit(trace: &Trace) -> Result<AuditReport, RateError> {
    let fixture = trace.fixture.as_ref().ok_or(RateError::MissingFixture)?;
    let m = fixture.m as f64;
    let slack = LEMMA_SLACK_UNIT * (1.0 + m);
    let mut report = AuditReport::new(format!("{} per-step lemma", trace.scheme.name()));

    if let Some(dist) = &trace.dist_to_fixture {
        for (n, &d) in dist.iter().enumerate() {
            report.check_le("boundedness d(x_n,p) <= M", n, d, m, BOUNDEDNESS_SLACK);
        }
    } else {
        return Err(RateError::SeriesMissing("distance to fixture".into()));
    }

    let step = &trace.step_residuals;
    let alphas = &trace.alphas;
    match trace.scheme {
        SchemeTag::Halpern => {}
        SchemeTag::Sam { rho } | SchemeTag::Aim { rho } => {
            let aux = trace
                .aux_residuals
                .as_ref()
                .ok_or_else(|| RateError::SeriesMissing("aux".into()))?;
            for n in 0..step.len().saturating_sub(1) {
                let lhs = step[n + 1];
                let rhs = (1.0 - (1.0 - rho) * (1.0 - alphas[n + 1])) * step[n]
                    + (alphas[n + 1] - alphas[n]).abs() * aux[n];
                report.check_le("step recurrence", n, lhs, rhs, slack);
            }
            for n in 0..step.len() {
                let rhs = step[n] + (1.0 - alphas[n]) * aux[n];
                report.check_le("map residual vs step", n, trace.map_residuals[n], rhs, slack);
            }
            for (n, &v) in aux.iter().enumerate() {
                report.check_le("aux residual vs envelope", n, v, 2.0 * m, slack);
            }
        }
        SchemeTag::Happa => {
            let gammas = trace
                .gammas
                .as_ref()
                .ok_or_else(|| RateError::SeriesMissing("gamma".into()))?;
            let family = &trace.map_residuals;
            for n in 0..step.len().saturating_sub(1) {
                let lhs = step[n + 1];
                let rhs = alphas[n + 1] * step[n]
                    + 2.0 * m * alphas[n + 1] * (gammas[n] - gammas[n + 1]).abs() / gammas[n]
                    + 2.0 * m * (alphas[n + 1] - alphas[n]).abs();
                report.check_le("step recurrence", n, lhs, rhs, slack);
            }
            for n in 0..step.len() {
                let rhs = step[n] + 2.0 * m * (1.0 - alphas[n]);
                report.check_le("family residual vs step", n, family[n], rhs, slack);
            }
            for (mi, series) in &trace.cross_residuals {
                let gm = gammas[*mi];
                let check = format!("fixed-member comparison (m={mi})");
                for (n, &v) in series.iter().enumerate() {
                    let rhs = (1.0 + (gammas[n] - gm).abs() / gammas[n]) * family[n];
                    report.check_le(&check, n, v, rhs, slack);
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iterations::{run_halpern, run_happa, run_sam, FixtureInfo, Schedule, TraceOptions};
    use crate::maps::{PsdMatrix, ResolventFamily};
    use proptest::prelude::*;

    fn euclid(dim: usize) -> Space {
        Space::euclid(dim).unwrap()
    }

    fn pt(v: f64) -> Point {
        Point::euclid([v])
    }

    // --------------------------------------------------------- comparison

    #[test]
    fn zero_instance_passes() {
        let inst =
            SabachShternInstance::new(1.0, 2, 2, 1.0, vec![0.0; 11], vec![0.0; 10]).unwrap();
        let report = sabach_shtern_check(&inst, 10).unwrap();
        assert!(report.hypothesis_ok);
        assert!(report.conclusion_ok);
        assert!(report.sound);
    }

    #[test]
    fn equality_witness_matches_closed_form() {
        let horizon = 10_000;
        let inst = SabachShternInstance::equality_witness(horizon);
        assert!((inst.s[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((inst.s[2] - 0.5).abs() < 1e-15);
        let mut worst = 0.0_f64;
        for (n, &s) in inst.s.iter().enumerate() {
            worst = worst.max((s - 2.0 / (n as f64 + 2.0)).abs());
        }
        assert!(worst <= 1e-12, "drift {worst}");
        let report = sabach_shtern_check(&inst, horizon).unwrap();
        assert!(report.hypothesis_ok);
        assert!(report.conclusion_ok);
    }

    #[test]
    fn closed_form_satisfies_equality_recurrence() {
        // One step from s_n = 2/(n+2) lands on 2/(n+3).
        for n in 0..1000usize {
            let a = |i: usize| 2.0 / (i as f64 + 2.0);
            let s = 2.0 / (n as f64 + 2.0);
            let next = (1.0 - a(n + 1)) * s + (a(n) - a(n + 1));
            assert!((next - 2.0 / (n as f64 + 3.0)).abs() <= 1e-12, "n = {n}");
        }
    }

    #[test]
    fn instance_invariants_are_enforced() {
        // s_0 above L
        assert!(matches!(
            SabachShternInstance::new(1.0, 2, 2, 1.0, vec![1.5], vec![]),
            Err(RateError::InvalidInstance(_))
        ));
        // N below 2
        assert!(SabachShternInstance::new(1.0, 1, 2, 1.0, vec![0.5], vec![]).is_err());
        // J below N
        assert!(SabachShternInstance::new(1.0, 3, 2, 1.0, vec![0.5], vec![]).is_err());
        // gamma outside (0, 1]
        assert!(SabachShternInstance::new(1.0, 2, 2, 0.0, vec![0.5], vec![]).is_err());
        assert!(SabachShternInstance::new(1.0, 2, 2, 1.5, vec![0.5], vec![]).is_err());
        // c above L
        assert!(SabachShternInstance::new(1.0, 2, 2, 1.0, vec![0.5, 0.4], vec![2.0]).is_err());
        // negative s
        assert!(SabachShternInstance::new(1.0, 2, 2, 1.0, vec![0.5, -0.1], vec![0.0]).is_err());
    }

    #[test]
    fn check_requires_sequences_up_to_horizon() {
        let inst = SabachShternInstance::new(1.0, 2, 2, 1.0, vec![0.0; 5], vec![0.0; 4]).unwrap();
        assert!(matches!(
            sabach_shtern_check(&inst, 10),
            Err(RateError::SequenceTooShort { .. })
        ));
    }

    #[test]
    fn random_instances_are_sound() {
        let report = sabach_shtern_sweep(50, 1000, 7).unwrap();
        assert_eq!(report.hypothesis_holds, 50);
        assert_eq!(report.soundness_violations, 0);
        assert!(report.worst_conclusion_margin <= 0.0);
    }

    proptest! {
        #[test]
        fn hypothesis_forces_conclusion(seed in 0u64..1_000_000) {
            let inst = SabachShternInstance::random(seed, 200);
            let report = sabach_shtern_check(&inst, 200).unwrap();
            prop_assert!(report.hypothesis_ok);
            prop_assert!(report.conclusion_ok);
        }
    }

    // ----------------------------------------------------------- envelope

    #[test]
    fn envelope_is_ceiling_of_requirement() {
        let space = euclid(1);
        let fixture = FixedPointFixture::analytic(pt(0.0));
        let m = compute_m(&space, &pt(3.5), &fixture, MRecipe::Anchor { u: &pt(2.0) }).unwrap();
        assert_eq!(m.m, 4);
        assert_eq!(m.required, 3.5);

        // degenerate start at the fixed point still yields a positive M
        let m = compute_m(&space, &pt(0.0), &fixture, MRecipe::Anchor { u: &pt(0.0) }).unwrap();
        assert_eq!(m.m, 1);
    }

    #[test]
    fn envelope_viscosity_recipe() {
        let space = euclid(1);
        let fixture = FixedPointFixture::analytic(pt(0.0));
        // f constant at 0.3 declared with modulus 0.5: requirement is
        // max(d(x,p), 0.3/0.5) = max(1, 0.6) = 1.
        let f = MapObject::with_kind(
            space.clone(),
            crate::maps::MapOp::Constant { value: pt(0.3) },
            crate::maps::MapKind::Contraction { rho: 0.5 },
        )
        .unwrap();
        let m = compute_m(&space, &pt(1.0), &fixture, MRecipe::Viscosity { f: &f }).unwrap();
        assert_eq!(m.m, 1);
        assert_eq!(m.required, 1.0);

        let nonexpansive = MapObject::negation(space.clone()).unwrap();
        assert!(matches!(
            compute_m(&space, &pt(1.0), &fixture, MRecipe::Viscosity { f: &nonexpansive }),
            Err(RateError::ContractionRequired)
        ));
    }

    #[test]
    fn envelope_snaps_float_noise() {
        assert_eq!(integer_envelope(0.0), 1);
        assert_eq!(integer_envelope(1.0), 1);
        assert_eq!(integer_envelope(1.0 + 1e-12), 1);
        assert_eq!(integer_envelope(1.0 + 1e-6), 2);
        assert_eq!(integer_envelope(2.3), 3);
    }

    // ------------------------------------------------------------ catalog

    #[test]
    fn catalog_closed_forms() {
        let halpern = rate_catalog(&CatalogParams::Halpern { m: 1 }).unwrap();
        assert_eq!(halpern.len(), 2);
        assert_eq!((halpern[0].phi.slope, halpern[0].phi.offset), (8.0, 1.0));
        assert_eq!((halpern[1].phi.slope, halpern[1].phi.offset), (16.0, 1.0));
        assert!(halpern[0].curve.is_none());

        let sam = rate_catalog(&CatalogParams::Sam { rho: 0.5, m: 1 }).unwrap();
        assert_eq!((sam[0].phi.slope, sam[0].phi.offset), (16.0, 4.0));
        assert_eq!((sam[1].phi.slope, sam[1].phi.offset), (24.0, 4.0));
        // J = 4, 1/(1 - rho) = 2: step curve 2MJ/((1-rho)(n+J)) = 16/(n+4)
        // and map curve 2M(J+2)/((1-rho)(n+J)) = 24/(n+4).
        let c = sam[0].curve.unwrap();
        assert_eq!((c.numerator, c.shift), (16.0, 4.0));
        let c = sam[1].curve.unwrap();
        assert_eq!((c.numerator, c.shift), (24.0, 4.0));

        // rho = 0 degenerates to the halved anchored rates.
        let degenerate = rate_catalog(&CatalogParams::Sam { rho: 0.0, m: 3 }).unwrap();
        assert_eq!((degenerate[0].phi.slope, degenerate[0].phi.offset), (12.0, 2.0));
        assert_eq!((degenerate[1].phi.slope, degenerate[1].phi.offset), (24.0, 2.0));

        let happa = rate_catalog(&CatalogParams::Happa { m: 1, cross: vec![5] }).unwrap();
        assert_eq!(happa.len(), 3);
        assert_eq!((happa[0].phi.slope, happa[0].phi.offset), (6.0, 2.0));
        assert_eq!((happa[1].phi.slope, happa[1].phi.offset), (10.0, 2.0));
        assert_eq!((happa[2].phi.slope, happa[2].phi.offset), (20.0, 2.0));
        assert_eq!(happa[2].kind, ResidualKind::Cross(5));

        let lieder =
            rate_catalog(&CatalogParams::Lieder { m: 1, initial_distance: 1.0 }).unwrap();
        assert_eq!((lieder[0].phi.slope, lieder[0].phi.offset), (2.0, 1.0));
        assert_eq!(lieder[0].curve.unwrap().start, 1);
        assert!(lieder[0].consistency_exact);
    }

    #[test]
    fn catalog_consistency_identity() {
        // curve(phi(k)) = 1/(k+1) exactly for the proximal entries and for
        // moduli whose 1/(1-rho) is an integer.
        for params in [
            CatalogParams::Happa { m: 3, cross: vec![0, 7] },
            CatalogParams::Sam { rho: 0.5, m: 2 },
            CatalogParams::Sam { rho: 0.9, m: 1 },
            CatalogParams::Sam { rho: 0.0, m: 4 },
            CatalogParams::Lieder { m: 2, initial_distance: 2.0 },
        ] {
            for rf in rate_catalog(&params).unwrap() {
                assert!(rf.consistency_exact, "{}", rf.name);
                let curve = rf.curve.unwrap();
                for k in 0..=100usize {
                    let lhs = curve.eval(rf.phi.eval(k));
                    let rhs = 1.0 / (k as f64 + 1.0);
                    assert!((lhs - rhs).abs() <= 1e-12, "{} at k = {k}", rf.name);
                }
            }
        }
        // Non-integer reciprocal: the identity degrades to an inequality.
        for rf in rate_catalog(&CatalogParams::Sam { rho: 0.3, m: 1 }).unwrap() {
            assert!(!rf.consistency_exact);
            let curve = rf.curve.unwrap();
            for k in 0..=100usize {
                assert!(curve.eval(rf.phi.eval(k)) <= 1.0 / (k as f64 + 1.0) + 1e-12);
            }
        }
    }

    #[test]
    fn lieder_envelope_must_dominate_start() {
        assert!(rate_catalog(&CatalogParams::Lieder { m: 1, initial_distance: 1.5 }).is_err());
    }

    // ------------------------------------------------------ certification

    fn halpern_fixture_trace(horizon: usize) -> Trace {
        let space = euclid(1);
        let map = MapObject::negation(space.clone()).unwrap();
        let opts = TraceOptions {
            fixture: Some(FixtureInfo { point: pt(0.0), m: 1 }),
            ..TraceOptions::default()
        };
        run_halpern(
            &space,
            &map,
            &pt(1.0),
            &pt(1.0),
            &Schedule::HalpernProp2,
            horizon,
            &opts,
        )
        .unwrap()
    }

    #[test]
    fn certify_matches_brute_force() {
        let trace = halpern_fixture_trace(2000);
        for rf in rate_catalog(&CatalogParams::Halpern { m: 1 }).unwrap() {
            let report = certify(&trace, &rf, 30).unwrap();
            let series = match rf.kind {
                ResidualKind::Step => &trace.step_residuals,
                _ => &trace.map_residuals,
            };
            let mut worst = f64::NEG_INFINITY;
            let mut pass = true;
            let mut checked = 0;
            for k in 0..=30usize {
                let n_phi = rf.phi.eval_index(k);
                if n_phi >= series.len() {
                    continue;
                }
                checked += 1;
                for &value in &series[n_phi..] {
                    let excess = value - 1.0 / (k as f64 + 1.0);
                    worst = worst.max(excess);
                    if excess > CERTIFY_SLACK {
                        pass = false;
                    }
                }
            }
            assert_eq!(report.rate_pass, pass, "{}", rf.name);
            assert_eq!(report.checked_ks, checked);
            assert_eq!(report.worst_rate_excess.unwrap(), worst);
            assert!(report.passed());
        }
    }

    #[test]
    fn constant_residual_fails_with_witness() {
        // x = u = 0.5 under negation with zero weights: x_n = 0.5 forever,
        // so the map residual is exactly 1 at every n.
        let space = euclid(1);
        let map = MapObject::negation(space.clone()).unwrap();
        let sched = Schedule::explicit(vec![0.0; 61], None).unwrap();
        let trace = run_halpern(
            &space,
            &map,
            &pt(0.5),
            &pt(0.5),
            &sched,
            60,
            &TraceOptions::default(),
        )
        .unwrap();
        let rf = RateFunction {
            name: "linear test rate".into(),
            kind: ResidualKind::Map,
            phi: RatePhi { slope: 1.0, offset: 1.0 },
            curve: None,
            consistency_exact: false,
        };
        let report = certify(&trace, &rf, 10).unwrap();
        assert!(!report.rate_pass);
        let witness = report.rate_witness.unwrap();
        assert_eq!(witness.k, Some(1));
        assert_eq!(witness.n, 1);
        assert_eq!(witness.value, 1.0);
        assert_eq!(witness.bound, 0.5);
    }

    #[test]
    fn unchecked_ks_are_reported_not_failed() {
        let trace = halpern_fixture_trace(10);
        let rf = &rate_catalog(&CatalogParams::Halpern { m: 1 }).unwrap()[0];
        // phi(k) = 8(k+1)-1: only k = 0 (phi = 7) fits a length-10 series.
        let report = certify(&trace, rf, 50).unwrap();
        assert_eq!(report.checked_ks, 1);
        assert_eq!(report.unchecked_ks, (1..=50).collect::<Vec<_>>());
        assert!(report.rate_pass);
    }

    #[test]
    fn sam_trace_certifies_and_degenerates_to_halved_rates() {
        let space = euclid(2);
        let map = MapObject::rotation(space.clone(), std::f64::consts::FRAC_PI_2).unwrap();
        let u = Point::euclid([1.0, 0.0]);
        let f = MapObject::constant(space.clone(), u.clone()).unwrap();
        let opts = TraceOptions {
            fixture: Some(FixtureInfo { point: Point::euclid([0.0, 0.0]), m: 1 }),
            ..TraceOptions::default()
        };
        let sched = Schedule::sam_prop5(0.0).unwrap();
        let trace = run_sam(&space, &map, &f, &u, &sched, 4000, &opts).unwrap();
        let catalog = rate_catalog(&CatalogParams::Sam { rho: 0.0, m: 1 }).unwrap();
        assert_eq!((catalog[0].phi.slope, catalog[0].phi.offset), (4.0, 2.0));
        assert_eq!((catalog[1].phi.slope, catalog[1].phi.offset), (8.0, 2.0));
        for rf in &catalog {
            let report = certify(&trace, rf, 40).unwrap();
            assert!(report.passed(), "{} failed", rf.name);
        }
        let audit = lemma_audit(&trace).unwrap();
        assert!(audit.passed(), "{:?}", audit.violations.first());
    }

    #[test]
    fn happa_trace_certifies_with_cross_members() {
        let a = PsdMatrix::from_rows(&[vec![1.0]]).unwrap();
        let family = ResolventFamily::linear_psd(euclid(1), a).unwrap();
        let opts = TraceOptions {
            fixture: Some(FixtureInfo { point: pt(0.0), m: 1 }),
            ..TraceOptions::default()
        };
        let trace = run_happa(
            &euclid(1),
            &family,
            &pt(1.0),
            &pt(1.0),
            &Schedule::HappaProp9,
            3000,
            &[0, 5],
            &opts,
        )
        .unwrap();
        let catalog = rate_catalog(&CatalogParams::Happa { m: 1, cross: vec![0, 5] }).unwrap();
        for rf in &catalog {
            let report = certify(&trace, rf, 40).unwrap();
            assert!(report.passed(), "{} failed", rf.name);
        }
        let audit = lemma_audit(&trace).unwrap();
        assert!(audit.passed(), "{:?}", audit.violations.first());
    }

    #[test]
    fn lemma_audit_needs_fixture_and_matching_series() {
        let space = euclid(1);
        let map = MapObject::negation(space.clone()).unwrap();
        let trace = run_halpern(
            &space,
            &map,
            &pt(1.0),
            &pt(1.0),
            &Schedule::HalpernProp2,
            10,
            &TraceOptions::default(),
        )
        .unwrap();
        assert!(matches!(lemma_audit(&trace), Err(RateError::MissingFixture)));

        // asking a halpern trace for a family series is a kind error
        let rf = rate_catalog(&CatalogParams::Happa { m: 1, cross: vec![] }).unwrap()
            .remove(1);
        assert!(matches!(certify(&trace, &rf, 5), Err(RateError::SeriesMissing(_))));
    }

    #[test]
    fn halpern_lemma_audit_checks_boundedness() {
        let trace = halpern_fixture_trace(500);
        let audit = lemma_audit(&trace).unwrap();
        assert!(audit.passed());
        assert_eq!(audit.checks, 501);
    }
}
