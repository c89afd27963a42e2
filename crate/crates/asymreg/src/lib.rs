//! Numerical certification of asymptotic-regularity rates for Halpern-type
//! iterations in W-hyperbolic spaces.
//!
//! The crate provides:
//!
//! * geodesic model spaces with a validated convex-combination operation
//!   ([`spaces`]),
//! * nonexpansive/contractive self-maps and resolvent families with
//!   Lipschitz and resolvent-compatibility audits ([`maps`]),
//! * trace generators for the Halpern, viscosity (SAM), alternative (AIM)
//!   and proximal-point Halpern iterations ([`iterations`]),
//! * closed-form convergence-rate catalogs, per-step inequality audits and
//!   the Sabach-Shtern comparison-sequence oracle ([`rates`]),
//! * a config-driven experiment harness with CSV/JSON reporting
//!   ([`harness`]).
//!
//! Every certified quantity is checked against trace data at explicit,
//! documented tolerances; nothing is asserted from theory alone.

pub mod audit;
pub mod harness;
pub mod iterations;
pub mod maps;
pub mod rates;
pub mod sampling;
pub mod spaces;

pub use audit::{AuditReport, Violation};
pub use iterations::{
    run_aim, run_halpern, run_happa, run_sam, Schedule, SchemeTag, Trace, TraceOptions,
};
pub use maps::{FixedPointFixture, MapKind, MapObject, MapOp, Provenance, ResolventFamily};
pub use rates::{
    certify, compute_m, lemma_audit, rate_catalog, BoundCurve, CatalogParams, MConstant,
    RateFunction, RatePhi, RateReport, ResidualKind, SabachShternInstance,
};
pub use sampling::Sampler;
pub use spaces::{axiom_audit, AxiomSample, ConvexCoefficient, Point, Space};
