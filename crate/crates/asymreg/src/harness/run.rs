//! Experiment orchestration: assemble fixtures, run the iteration, execute
//! every applicable audit and certification, emit CSV and JSON summary.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use crate::audit::AuditReport;
use crate::iterations::{
    run_aim, run_halpern, run_happa, run_sam, FixtureInfo, Schedule, Trace, TraceOptions,
};
use crate::maps::{c1_audit, lipschitz_audit, FixedPointFixture};
use crate::rates::{
    certify, compute_m, lemma_audit, rate_catalog, CatalogParams, MRecipe, RateReport,
};
use crate::sampling::Sampler;
use crate::spaces::axiom_audit;

use super::config::{ExperimentConfig, SchemeKind};
use super::csv::emit_csv;
use super::{HarnessError, OUTPUT_DIR_VAR};

/// Audit samples live in this ball; every packaged fixture stays well
/// inside it.
const SAMPLE_RADIUS: f64 = 4.0;

fn fixture_err<E: std::fmt::Display>(e: E) -> HarnessError {
    HarnessError::Fixture(e.to_string())
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub scheme: String,
    pub space: String,
    pub horizon: usize,
    pub k_max: usize,
    pub seed: u64,
    pub m: u64,
    pub m_required: f64,
    pub fixture: FixedPointFixture,
    pub audits: Vec<AuditReport>,
    pub rates: Vec<RateReport>,
    pub passed: bool,
    pub wall_ms: u128,
    pub csv_path: String,
    pub config: BTreeMap<String, String>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub trace: Trace,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.summary.passed
    }
}

fn merge_audit(target: &mut AuditReport, src: AuditReport) {
    target.checks += src.checks;
    target.worst_excess = target.worst_excess.max(src.worst_excess);
    target.worst_ratio = match (target.worst_ratio, src.worst_ratio) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    };
    target.violations.extend(src.violations);
}

/// Resolvent indices the compatibility and fixture checks exercise: the
/// schedule's first eleven, plus any comparison indices.
fn gamma_grid(cfg: &ExperimentConfig) -> Result<Vec<f64>, HarnessError> {
    let mut grid = Vec::new();
    for n in 0..=cfg.horizon.min(10) {
        if let Some(g) = cfg.schedule.gamma(n).map_err(fixture_err)? {
            grid.push(g);
        }
    }
    for &m in &cfg.cross {
        if let Some(g) = cfg.schedule.gamma(m).map_err(fixture_err)? {
            grid.push(g);
        }
    }
    grid.sort_by(|a, b| a.partial_cmp(b).expect("schedule indices are finite"));
    grid.dedup();
    Ok(grid)
}

fn locate_fixture(
    cfg: &ExperimentConfig,
    gamma_grid: &[f64],
) -> Result<FixedPointFixture, HarnessError> {
    match (&cfg.map, &cfg.family) {
        (Some(map), None) => {
            let fixture = match map.analytic_fixed_point() {
                Some(p) => FixedPointFixture::analytic(p),
                None => FixedPointFixture::solve_numeric(map, &cfg.start, 100_000)
                    .map_err(fixture_err)?,
            };
            fixture.certify_map(map).map_err(fixture_err)?;
            Ok(fixture)
        }
        (None, Some(family)) => {
            let p = family
                .analytic_fixed_point()
                .ok_or_else(|| HarnessError::Fixture("family has no known fixed point".into()))?;
            let fixture = FixedPointFixture::analytic(p);
            fixture.certify_family(family, gamma_grid).map_err(fixture_err)?;
            Ok(fixture)
        }
        _ => Err(HarnessError::Fixture("config names neither a map nor a family".into())),
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome, HarnessError> {
    let started = Instant::now();
    let mut audits = Vec::new();

    let samples = Sampler::new(cfg.seed)
        .axiom_samples(&cfg.space, cfg.audit_samples, SAMPLE_RADIUS)
        .map_err(fixture_err)?;
    let mut axiom_report = axiom_audit(&cfg.space, &samples).map_err(fixture_err)?;
    axiom_report.seed = Some(cfg.seed);
    audits.push(axiom_report);

    let pairs = Sampler::new(cfg.seed.wrapping_add(1))
        .pairs(&cfg.space, 100, SAMPLE_RADIUS)
        .map_err(fixture_err)?;
    if let Some(map) = &cfg.map {
        let mut report = lipschitz_audit(map, &pairs).map_err(fixture_err)?;
        report.name = "lipschitz: map".into();
        report.seed = Some(cfg.seed.wrapping_add(1));
        audits.push(report);
    }
    if let Some(f) = &cfg.contraction {
        let mut report = lipschitz_audit(f, &pairs).map_err(fixture_err)?;
        report.name = "lipschitz: contraction".into();
        report.seed = Some(cfg.seed.wrapping_add(1));
        audits.push(report);
    }

    let grid = gamma_grid(cfg)?;
    let fixture = locate_fixture(cfg, &grid)?;

    if let Some(family) = &cfg.family {
        let mut members = AuditReport::new("lipschitz: family members");
        members.seed = Some(cfg.seed.wrapping_add(1));
        for &g in &grid {
            let member = family.member(g).map_err(fixture_err)?;
            let report = lipschitz_audit(&member, &pairs).map_err(fixture_err)?;
            merge_audit(&mut members, report);
        }
        audits.push(members);

        let points = Sampler::new(cfg.seed.wrapping_add(2))
            .points(&cfg.space, 20, SAMPLE_RADIUS)
            .map_err(fixture_err)?;
        let mut report = c1_audit(family, &grid, &points).map_err(fixture_err)?;
        report.seed = Some(cfg.seed.wrapping_add(2));
        audits.push(report);
    }

    let recipe = match cfg.scheme {
        SchemeKind::Sam | SchemeKind::Aim => MRecipe::Viscosity {
            f: cfg.contraction.as_ref().expect("viscosity configs carry a contraction"),
        },
        _ => MRecipe::Anchor { u: cfg.anchor.as_ref().expect("anchored configs carry an anchor") },
    };
    let m = compute_m(&cfg.space, &cfg.start, &fixture, recipe).map_err(fixture_err)?;

    let opts = TraceOptions {
        memory_cap_scalars: cfg.memory_cap,
        fixture: Some(FixtureInfo { point: fixture.point.clone(), m: m.m }),
    };
    let trace = match cfg.scheme {
        SchemeKind::Halpern => run_halpern(
            &cfg.space,
            cfg.map.as_ref().expect("halpern configs carry a map"),
            &cfg.start,
            cfg.anchor.as_ref().expect("halpern configs carry an anchor"),
            &cfg.schedule,
            cfg.horizon,
            &opts,
        ),
        SchemeKind::Sam => run_sam(
            &cfg.space,
            cfg.map.as_ref().expect("sam configs carry a map"),
            cfg.contraction.as_ref().expect("sam configs carry a contraction"),
            &cfg.start,
            &cfg.schedule,
            cfg.horizon,
            &opts,
        ),
        SchemeKind::Aim => run_aim(
            &cfg.space,
            cfg.map.as_ref().expect("aim configs carry a map"),
            cfg.contraction.as_ref().expect("aim configs carry a contraction"),
            &cfg.start,
            &cfg.schedule,
            cfg.horizon,
            &opts,
        ),
        SchemeKind::Happa | SchemeKind::Hppa => run_happa(
            &cfg.space,
            cfg.family.as_ref().expect("proximal configs carry a family"),
            &cfg.start,
            cfg.anchor.as_ref().expect("proximal configs carry an anchor"),
            &cfg.schedule,
            cfg.horizon,
            &cfg.cross,
            &opts,
        ),
    }
    .map_err(fixture_err)?;

    audits.push(lemma_audit(&trace).map_err(fixture_err)?);

    let params = match (cfg.scheme, &cfg.schedule) {
        (SchemeKind::Halpern, Schedule::HalpernProp2) => Some(CatalogParams::Halpern { m: m.m }),
        (SchemeKind::Halpern, Schedule::Lieder) => Some(CatalogParams::Lieder {
            m: m.m,
            initial_distance: cfg
                .space
                .distance(&cfg.start, &fixture.point)
                .map_err(fixture_err)?,
        }),
        (SchemeKind::Sam, Schedule::SamProp5 { rho }) => {
            Some(CatalogParams::Sam { rho: *rho, m: m.m })
        }
        (SchemeKind::Aim, Schedule::SamProp5 { rho }) => {
            Some(CatalogParams::Aim { rho: *rho, m: m.m })
        }
        (SchemeKind::Happa | SchemeKind::Hppa, Schedule::HappaProp9) => {
            Some(CatalogParams::Happa { m: m.m, cross: cfg.cross.clone() })
        }
        // Explicit schedules run all audits but certify no closed-form
        // rates: those are proven for the named schedules only.
        _ => None,
    };
    let mut catalog = match params {
        Some(p) => rate_catalog(&p).map_err(fixture_err)?,
        None => Vec::new(),
    };

    if let Some(o) = &cfg.rate_override {
        let entry = catalog.iter_mut().find(|rf| rf.name == o.rate).ok_or_else(|| {
            HarnessError::config("override.rate", format!("no catalog entry named `{}`", o.rate))
        })?;
        if let Some(v) = o.phi_slope {
            entry.phi.slope = v;
        }
        if let Some(v) = o.phi_offset {
            entry.phi.offset = v;
        }
        if let Some(v) = o.curve_numerator {
            match &mut entry.curve {
                Some(c) => c.numerator = v,
                None => {
                    return Err(HarnessError::config(
                        "override.curve_numerator",
                        format!("entry `{}` has no bound curve", o.rate),
                    ))
                }
            }
        }
        // An overridden closed form no longer matches its curve by
        // construction; only the genuine checks should decide the verdict.
        entry.consistency_exact = false;
    }

    let rates: Vec<RateReport> = catalog
        .iter()
        .map(|rf| certify(&trace, rf, cfg.k_max))
        .collect::<Result<_, _>>()
        .map_err(fixture_err)?;

    let passed = audits.iter().all(|a| a.passed()) && rates.iter().all(|r| r.passed());

    let default_dir = || {
        std::env::var_os(OUTPUT_DIR_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
    };
    let csv_path = cfg
        .output_csv
        .clone()
        .unwrap_or_else(|| default_dir().join(format!("{}.csv", cfg.name)));
    let summary_path = cfg
        .output_summary
        .clone()
        .unwrap_or_else(|| csv_path.with_extension("summary.json"));

    emit_csv(&trace, &rates, &csv_path)?;

    let summary = RunSummary {
        name: cfg.name.clone(),
        scheme: cfg.scheme.name().to_string(),
        space: cfg.space.kind_name().to_string(),
        horizon: cfg.horizon,
        k_max: cfg.k_max,
        seed: cfg.seed,
        m: m.m,
        m_required: m.required,
        fixture,
        audits,
        rates,
        passed,
        wall_ms: started.elapsed().as_millis(),
        csv_path: csv_path.display().to_string(),
        config: cfg.echo.clone(),
    };
    if let Some(dir) = summary_path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut json = serde_json::to_string_pretty(&summary)
        .map_err(|e| HarnessError::Fixture(format!("summary serialization: {e}")))?;
    json.push('\n');
    std::fs::write(&summary_path, json)?;

    Ok(RunOutcome { summary, trace, csv_path, summary_path })
}

#[cfg(test)]
mod tests {
    use super::super::config::parse_config;
    use super::*;

    fn minimal_halpern(dir: &std::path::Path, horizon: usize) -> ExperimentConfig {
        let text = format!(
            r#"
scheme = "halpern"
[space]
kind = "euclid"
dim = 1
[map]
kind = "negation"
[start]
euclid = [1.0]
[anchor]
euclid = [1.0]
[run]
horizon = {horizon}
k_max = 10
[output]
csv = "{}"
"#,
            dir.join("halpern.csv").display()
        );
        parse_config(&text, "halpern-test").unwrap()
    }

    #[test]
    fn minimal_halpern_run_passes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = minimal_halpern(dir.path(), 400);
        let outcome = run_experiment(&cfg).unwrap();
        assert!(outcome.passed(), "{:#?}", outcome.summary.rates);
        assert_eq!(outcome.summary.m, 1);
        assert!(outcome.csv_path.exists());
        assert!(outcome.summary_path.exists());
        let text = std::fs::read_to_string(&outcome.csv_path).unwrap();
        assert_eq!(text.lines().count(), 402);
    }

    #[test]
    fn csv_is_byte_identical_across_runs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = minimal_halpern(dir.path(), 200);
        run_experiment(&cfg).unwrap();
        let first = std::fs::read(dir.path().join("halpern.csv")).unwrap();
        run_experiment(&cfg).unwrap();
        let second = std::fs::read(dir.path().join("halpern.csv")).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn corrupted_rate_fails_with_witness() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            r#"
scheme = "halpern"
[space]
kind = "euclid"
dim = 1
[map]
kind = "negation"
[start]
euclid = [1.0]
[anchor]
euclid = [1.0]
[run]
horizon = 300
k_max = 10
[output]
csv = "{}"
[override]
rate = "halpern step rate"
phi_slope = 1.0
phi_offset = 1.0
"#,
            dir.path().join("bad.csv").display()
        );
        let cfg = parse_config(&text, "corrupted").unwrap();
        let outcome = run_experiment(&cfg).unwrap();
        assert!(!outcome.passed());
        let report = &outcome.summary.rates[0];
        assert!(!report.rate_pass);
        // Steps are d(x_n, x_{n+1}) = [0, 0, 2/3, 0, ...], so k = 0 (bound 1)
        // still passes and the first failing k is 1: 2/3 > 1/2 at n = 2.
        let witness = report.rate_witness.unwrap();
        assert_eq!(witness.k, Some(1));
        assert_eq!(witness.n, 2);
        assert!((witness.value - 2.0 / 3.0).abs() <= 1e-15);
        assert_eq!(witness.bound, 0.5);
    }

    #[test]
    fn unknown_override_name_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            r#"
scheme = "halpern"
[space]
kind = "euclid"
dim = 1
[map]
kind = "negation"
[start]
euclid = [1.0]
[anchor]
euclid = [1.0]
[run]
horizon = 50
[output]
csv = "{}"
[override]
rate = "no such rate"
phi_slope = 1.0
"#,
            dir.path().join("x.csv").display()
        );
        let cfg = parse_config(&text, "bad-override").unwrap();
        assert!(matches!(run_experiment(&cfg), Err(HarnessError::Config { .. })));
    }

    #[test]
    fn happa_identity_trace_hits_hand_computed_point() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            r#"
scheme = "happa"
[space]
kind = "euclid"
dim = 1
[family]
kind = "linear_psd"
matrix = [[1.0]]
[start]
euclid = [1.0]
[anchor]
euclid = [1.0]
[run]
horizon = 12
k_max = 0
cross = [0, 5]
[output]
csv = "{}"
"#,
            dir.path().join("happa.csv").display()
        );
        let cfg = parse_config(&text, "happa-test").unwrap();
        let outcome = run_experiment(&cfg).unwrap();
        let text = std::fs::read_to_string(&outcome.csv_path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let header: Vec<&str> = lines[0].split(',').collect();
        assert!(header.contains(&"cross_residual_0"));
        assert!(header.contains(&"cross_residual_5"));
        let x_col = header.iter().position(|&h| h == "x0").unwrap();
        let row2: Vec<&str> = lines[3].split(',').collect();
        let x2: f64 = row2[x_col].parse().unwrap();
        assert!((x2 - 0.8).abs() < 1e-15, "x_2 = {x2}");
    }
}
