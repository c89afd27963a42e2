//! Experiment config: flat dotted-key TOML with a strict allowlist.
//!
//! Every key is either consumed by the scheme being configured or reported
//! as an error; there is no silent tolerance for typos or keys left over
//! from another scheme.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use crate::iterations::Schedule;
use crate::maps::{MapObject, PsdMatrix, ResolventFamily};
use crate::spaces::{Point, Space};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum SchemeKind {
    Halpern,
    Sam,
    Aim,
    Happa,
    /// Proximal-point Halpern restricted to euclid spaces.
    Hppa,
}

impl SchemeKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Halpern => "halpern",
            SchemeKind::Sam => "sam",
            SchemeKind::Aim => "aim",
            SchemeKind::Happa => "happa",
            SchemeKind::Hppa => "hppa",
        }
    }

    fn is_proximal(&self) -> bool {
        matches!(self, SchemeKind::Happa | SchemeKind::Hppa)
    }

    fn is_viscosity(&self) -> bool {
        matches!(self, SchemeKind::Sam | SchemeKind::Aim)
    }
}

/// Deliberate corruption of one catalog entry, for falsification runs: the
/// named rate gets its closed form or curve replaced before certification.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RateOverride {
    pub rate: String,
    pub phi_slope: Option<f64>,
    pub phi_offset: Option<f64>,
    pub curve_numerator: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub space: Space,
    pub scheme: SchemeKind,
    /// `T` for halpern/sam/aim runs.
    pub map: Option<MapObject>,
    /// `f` for viscosity runs.
    pub contraction: Option<MapObject>,
    /// Resolvent family for proximal runs.
    pub family: Option<ResolventFamily>,
    pub start: Point,
    pub anchor: Option<Point>,
    pub schedule: Schedule,
    pub horizon: usize,
    pub k_max: usize,
    pub seed: u64,
    pub audit_samples: usize,
    pub cross: Vec<usize>,
    pub memory_cap: usize,
    pub output_csv: Option<PathBuf>,
    pub output_summary: Option<PathBuf>,
    pub rate_override: Option<RateOverride>,
    /// Raw key/value echo, kept for the run summary.
    pub echo: BTreeMap<String, String>,
}

const KNOWN_KEYS: &[&str] = &[
    "space.kind",
    "space.dim",
    "scheme",
    "map.kind",
    "map.angle",
    "map.rho",
    "map.value",
    "map.ray",
    "map.t",
    "contraction.kind",
    "contraction.rho",
    "contraction.value",
    "contraction.ray",
    "contraction.t",
    "family.kind",
    "family.matrix",
    "family.weight",
    "family.anchor",
    "family.ray",
    "family.t",
    "start.euclid",
    "start.ray",
    "start.t",
    "anchor.euclid",
    "anchor.ray",
    "anchor.t",
    "schedule.kind",
    "schedule.rho",
    "schedule.alphas",
    "schedule.gammas",
    "run.horizon",
    "run.k_max",
    "run.seed",
    "run.audit_samples",
    "run.cross",
    "run.memory_cap",
    "output.csv",
    "output.summary",
    "override.rate",
    "override.phi_slope",
    "override.phi_offset",
    "override.curve_numerator",
];

fn flatten(prefix: &str, value: &toml::Value, out: &mut BTreeMap<String, toml::Value>) {
    if let toml::Value::Table(table) = value {
        for (k, v) in table {
            let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            flatten(&key, v, out);
        }
    } else {
        out.insert(prefix.to_string(), value.clone());
    }
}

/// Key/value bag that tracks which keys were consumed; anything left over
/// at the end is an unknown or inapplicable key.
struct Bag {
    values: BTreeMap<String, toml::Value>,
    used: RefCell<BTreeSet<String>>,
}

fn number(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Float(f) => Some(*f),
        toml::Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

impl Bag {
    fn get(&self, key: &str) -> Option<&toml::Value> {
        let v = self.values.get(key);
        if v.is_some() {
            self.used.borrow_mut().insert(key.to_string());
        }
        v
    }

    fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn str(&self, key: &str) -> Result<Option<String>, HarnessError> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s.clone())),
            Some(other) => Err(HarnessError::config(key, format!("expected a string, got {other}"))),
        }
    }

    fn require_str(&self, key: &str) -> Result<String, HarnessError> {
        self.str(key)?.ok_or_else(|| HarnessError::config(key, "required key is missing"))
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, HarnessError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => number(v)
                .map(Some)
                .ok_or_else(|| HarnessError::config(key, format!("expected a number, got {v}"))),
        }
    }

    fn require_f64(&self, key: &str) -> Result<f64, HarnessError> {
        self.f64(key)?.ok_or_else(|| HarnessError::config(key, "required key is missing"))
    }

    fn usize(&self, key: &str, default: usize) -> Result<usize, HarnessError> {
        match self.get(key) {
            None => Ok(default),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(*i as usize),
            Some(other) => {
                Err(HarnessError::config(key, format!("expected a nonnegative integer, got {other}")))
            }
        }
    }

    fn u64(&self, key: &str, default: u64) -> Result<u64, HarnessError> {
        match self.get(key) {
            None => Ok(default),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(*i as u64),
            Some(other) => {
                Err(HarnessError::config(key, format!("expected a nonnegative integer, got {other}")))
            }
        }
    }

    fn f64_array(&self, key: &str) -> Result<Option<Vec<f64>>, HarnessError> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::Array(items)) => items
                .iter()
                .map(|v| {
                    number(v).ok_or_else(|| {
                        HarnessError::config(key, format!("expected numbers, got {v}"))
                    })
                })
                .collect::<Result<Vec<f64>, _>>()
                .map(Some),
            Some(other) => Err(HarnessError::config(key, format!("expected an array, got {other}"))),
        }
    }

    fn usize_array(&self, key: &str) -> Result<Option<Vec<usize>>, HarnessError> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
                    other => Err(HarnessError::config(
                        key,
                        format!("expected nonnegative integers, got {other}"),
                    )),
                })
                .collect::<Result<Vec<usize>, _>>()
                .map(Some),
            Some(other) => Err(HarnessError::config(key, format!("expected an array, got {other}"))),
        }
    }

    fn matrix(&self, key: &str) -> Result<Option<Vec<Vec<f64>>>, HarnessError> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::Array(rows)) => rows
                .iter()
                .map(|row| match row {
                    toml::Value::Array(items) => items
                        .iter()
                        .map(|v| {
                            number(v).ok_or_else(|| {
                                HarnessError::config(key, format!("expected numbers, got {v}"))
                            })
                        })
                        .collect::<Result<Vec<f64>, _>>(),
                    other => Err(HarnessError::config(
                        key,
                        format!("expected an array of arrays, got row {other}"),
                    )),
                })
                .collect::<Result<Vec<Vec<f64>>, _>>()
                .map(Some),
            Some(other) => Err(HarnessError::config(key, format!("expected an array, got {other}"))),
        }
    }

    fn finish(&self) -> Result<(), HarnessError> {
        let used = self.used.borrow();
        for key in self.values.keys() {
            if !used.contains(key) {
                let message = if KNOWN_KEYS.contains(&key.as_str()) {
                    "key is not applicable to this scheme"
                } else {
                    "unknown key"
                };
                return Err(HarnessError::config(key, message));
            }
        }
        Ok(())
    }
}

/// Read a point from `{prefix}.euclid` (array) or `{prefix}.ray`/`{prefix}.t`.
fn point(bag: &Bag, space: &Space, prefix: &str) -> Result<Option<Point>, HarnessError> {
    let array_key = if prefix == "family" {
        "family.anchor".to_string()
    } else if prefix == "map" || prefix == "contraction" {
        format!("{prefix}.value")
    } else {
        format!("{prefix}.euclid")
    };
    let ray_key = format!("{prefix}.ray");
    let t_key = format!("{prefix}.t");
    match space {
        Space::Euclid { .. } => match bag.f64_array(&array_key)? {
            Some(coords) => {
                let p = Point::euclid(coords);
                space
                    .check_point(&p)
                    .map_err(|e| HarnessError::config(&array_key, e.to_string()))?;
                Ok(Some(p))
            }
            None => Ok(None),
        },
        Space::Tripod => {
            if !bag.has(&ray_key) && !bag.has(&t_key) {
                return Ok(None);
            }
            let ray = bag.u64(&ray_key, 0)?;
            let t = bag.require_f64(&t_key)?;
            if ray > 2 {
                return Err(HarnessError::config(&ray_key, format!("ray {ray} must be 0, 1, or 2")));
            }
            let p = Point::tripod(ray as u8, t);
            space
                .check_point(&p)
                .map_err(|e| HarnessError::config(&t_key, e.to_string()))?;
            Ok(Some(p))
        }
    }
}

fn require_point(bag: &Bag, space: &Space, prefix: &str) -> Result<Point, HarnessError> {
    point(bag, space, prefix)?.ok_or_else(|| {
        HarnessError::config(
            &format!("{prefix}.*"),
            format!("{prefix} point is required for this scheme/space"),
        )
    })
}

fn build_map(bag: &Bag, space: &Space, prefix: &str) -> Result<MapObject, HarnessError> {
    let kind_key = format!("{prefix}.kind");
    let kind = bag.require_str(&kind_key)?;
    let build = |r: Result<MapObject, crate::maps::MapError>| {
        r.map_err(|e| HarnessError::config(&kind_key, e.to_string()))
    };
    match kind.as_str() {
        "negation" => build(MapObject::negation(space.clone())),
        "rotation" => {
            let angle = bag.require_f64(&format!("{prefix}.angle"))?;
            build(MapObject::rotation(space.clone(), angle))
        }
        "ray_swap" => build(MapObject::ray_swap(space.clone())),
        "constant" => {
            let value = require_point(bag, space, prefix)?;
            build(MapObject::constant(space.clone(), value))
        }
        "linear_contraction" => {
            let rho = bag.require_f64(&format!("{prefix}.rho"))?;
            if !rho.is_finite() || !(0.0..1.0).contains(&rho) {
                return Err(HarnessError::config(
                    &format!("{prefix}.rho"),
                    format!("contraction modulus must be >= 0 and < 1, got {rho}"),
                ));
            }
            build(MapObject::scale(space.clone(), rho))
        }
        other => Err(HarnessError::config(&kind_key, format!("unknown map kind `{other}`"))),
    }
}

fn build_family(bag: &Bag, space: &Space) -> Result<ResolventFamily, HarnessError> {
    let kind = bag.require_str("family.kind")?;
    match kind.as_str() {
        "linear_psd" => {
            let rows = bag
                .matrix("family.matrix")?
                .ok_or_else(|| HarnessError::config("family.matrix", "required for linear_psd"))?;
            let a = PsdMatrix::from_rows(&rows)
                .map_err(|e| HarnessError::config("family.matrix", e.to_string()))?;
            ResolventFamily::linear_psd(space.clone(), a)
                .map_err(|e| HarnessError::config("family.kind", e.to_string()))
        }
        "l1" => {
            let weight = bag.require_f64("family.weight")?;
            ResolventFamily::l1_scaled(space.clone(), weight)
                .map_err(|e| HarnessError::config("family.weight", e.to_string()))
        }
        "quadratic_to_point" => {
            let anchor = require_point(bag, space, "family")?;
            ResolventFamily::quadratic_to_point(space.clone(), anchor)
                .map_err(|e| HarnessError::config("family.anchor", e.to_string()))
        }
        other => Err(HarnessError::config("family.kind", format!("unknown family kind `{other}`"))),
    }
}

fn build_schedule(
    bag: &Bag,
    scheme: SchemeKind,
    contraction: Option<&MapObject>,
) -> Result<Schedule, HarnessError> {
    let default_kind = match scheme {
        SchemeKind::Halpern => "halpern_prop2",
        SchemeKind::Sam | SchemeKind::Aim => "sam_prop5",
        SchemeKind::Happa | SchemeKind::Hppa => "happa_prop9",
    };
    let kind = bag.str("schedule.kind")?.unwrap_or_else(|| default_kind.to_string());
    match kind.as_str() {
        "halpern_prop2" => {
            if scheme != SchemeKind::Halpern {
                return Err(HarnessError::config(
                    "schedule.kind",
                    format!("halpern_prop2 does not drive the {} scheme", scheme.name()),
                ));
            }
            Ok(Schedule::HalpernProp2)
        }
        "lieder" => {
            if scheme != SchemeKind::Halpern {
                return Err(HarnessError::config(
                    "schedule.kind",
                    format!("lieder does not drive the {} scheme", scheme.name()),
                ));
            }
            Ok(Schedule::Lieder)
        }
        "sam_prop5" => {
            if !scheme.is_viscosity() {
                return Err(HarnessError::config(
                    "schedule.kind",
                    format!("sam_prop5 does not drive the {} scheme", scheme.name()),
                ));
            }
            let declared = contraction
                .and_then(|f| f.kind().rho())
                .ok_or_else(|| HarnessError::config("contraction.kind", "needs a modulus"))?;
            let rho = bag.f64("schedule.rho")?.unwrap_or(declared);
            if rho != declared {
                return Err(HarnessError::config(
                    "schedule.rho",
                    format!("schedule modulus {rho} does not match the contraction's {declared}"),
                ));
            }
            Schedule::sam_prop5(rho)
                .map_err(|e| HarnessError::config("schedule.rho", e.to_string()))
        }
        "happa_prop9" => {
            if !scheme.is_proximal() {
                return Err(HarnessError::config(
                    "schedule.kind",
                    format!("happa_prop9 does not drive the {} scheme", scheme.name()),
                ));
            }
            Ok(Schedule::HappaProp9)
        }
        "explicit" => {
            let alphas = bag
                .f64_array("schedule.alphas")?
                .ok_or_else(|| HarnessError::config("schedule.alphas", "required for explicit"))?;
            let gammas = bag.f64_array("schedule.gammas")?;
            if scheme.is_proximal() && gammas.is_none() {
                return Err(HarnessError::config(
                    "schedule.gammas",
                    "proximal schemes need resolvent indices",
                ));
            }
            if !scheme.is_proximal() && gammas.is_some() {
                return Err(HarnessError::config(
                    "schedule.gammas",
                    "only proximal schemes take resolvent indices",
                ));
            }
            Schedule::explicit(alphas, gammas)
                .map_err(|e| HarnessError::config("schedule.alphas", e.to_string()))
        }
        other => {
            Err(HarnessError::config("schedule.kind", format!("unknown schedule kind `{other}`")))
        }
    }
}

/// Parse and validate a config from TOML text. `name` becomes the run name
/// (and the default output file stem).
pub fn parse_config(text: &str, name: &str) -> Result<ExperimentConfig, HarnessError> {
    let table: toml::Table =
        text.parse().map_err(|e: toml::de::Error| HarnessError::Parse(e.to_string()))?;
    let value = toml::Value::Table(table);
    let mut flat = BTreeMap::new();
    flatten("", &value, &mut flat);
    let echo: BTreeMap<String, String> =
        flat.iter().map(|(k, v)| (k.clone(), v.to_string())).collect();
    let bag = Bag { values: flat, used: RefCell::new(BTreeSet::new()) };

    let space = match bag.require_str("space.kind")?.as_str() {
        "euclid" => {
            let dim = bag.usize("space.dim", 0)?;
            Space::euclid(dim).map_err(|e| HarnessError::config("space.dim", e.to_string()))?
        }
        "tripod" => Space::tripod(),
        other => {
            return Err(HarnessError::config("space.kind", format!("unknown space `{other}`")))
        }
    };

    let scheme = match bag.require_str("scheme")?.as_str() {
        "halpern" => SchemeKind::Halpern,
        "sam" => SchemeKind::Sam,
        "aim" => SchemeKind::Aim,
        "happa" => SchemeKind::Happa,
        "hppa" => SchemeKind::Hppa,
        other => return Err(HarnessError::config("scheme", format!("unknown scheme `{other}`"))),
    };
    if scheme == SchemeKind::Hppa && space == Space::Tripod {
        return Err(HarnessError::config("scheme", "hppa runs in euclid spaces only"));
    }

    let map = if scheme.is_proximal() { None } else { Some(build_map(&bag, &space, "map")?) };
    let contraction =
        if scheme.is_viscosity() { Some(build_map(&bag, &space, "contraction")?) } else { None };
    if let Some(f) = &contraction {
        if f.kind().rho().is_none() {
            return Err(HarnessError::config(
                "contraction.kind",
                "viscosity term must be a contraction or constant map",
            ));
        }
    }
    let family = if scheme.is_proximal() { Some(build_family(&bag, &space)?) } else { None };

    let start = require_point(&bag, &space, "start")?;
    let needs_anchor = !scheme.is_viscosity();
    let anchor = if needs_anchor { Some(require_point(&bag, &space, "anchor")?) } else { None };

    let schedule = build_schedule(&bag, scheme, contraction.as_ref())?;
    if matches!(schedule, Schedule::Lieder) {
        if !matches!(space, Space::Euclid { .. }) {
            return Err(HarnessError::config("schedule.kind", "lieder needs a euclid space"));
        }
        if anchor.as_ref() != Some(&start) {
            return Err(HarnessError::config(
                "anchor.euclid",
                "lieder anchors the iteration at its start: anchor must equal start",
            ));
        }
    }

    let horizon = bag.usize("run.horizon", 10_000)?;
    if horizon == 0 {
        return Err(HarnessError::config("run.horizon", "horizon must be >= 1"));
    }
    let k_max = bag.usize("run.k_max", 50)?;
    let seed = bag.u64("run.seed", 42)?;
    let audit_samples = bag.usize("run.audit_samples", 200)?;
    if audit_samples == 0 {
        return Err(HarnessError::config("run.audit_samples", "must be >= 1"));
    }
    let cross = bag.usize_array("run.cross")?.unwrap_or_default();
    if !cross.is_empty() && !scheme.is_proximal() {
        return Err(HarnessError::config("run.cross", "only proximal schemes take cross indices"));
    }
    for &m in &cross {
        if m > horizon {
            return Err(HarnessError::config(
                "run.cross",
                format!("index {m} exceeds horizon {horizon}"),
            ));
        }
    }
    let memory_cap = bag.usize("run.memory_cap", 1_000_000)?;

    let output_csv = bag.str("output.csv")?.map(PathBuf::from);
    let output_summary = bag.str("output.summary")?.map(PathBuf::from);

    let rate_override = match bag.str("override.rate")? {
        Some(rate) => {
            let o = RateOverride {
                rate,
                phi_slope: bag.f64("override.phi_slope")?,
                phi_offset: bag.f64("override.phi_offset")?,
                curve_numerator: bag.f64("override.curve_numerator")?,
            };
            if o.phi_slope.is_none() && o.phi_offset.is_none() && o.curve_numerator.is_none() {
                return Err(HarnessError::config(
                    "override.rate",
                    "an override must change at least one constant",
                ));
            }
            Some(o)
        }
        None => None,
    };

    bag.finish()?;

    Ok(ExperimentConfig {
        name: name.to_string(),
        space,
        scheme,
        map,
        contraction,
        family,
        start,
        anchor,
        schedule,
        horizon,
        k_max,
        seed,
        audit_samples,
        cross,
        memory_cap,
        output_csv,
        output_summary,
        rate_override,
        echo,
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".to_string());
    parse_config(&text, &name)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
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
horizon = 1000
"#;

    #[test]
    fn minimal_halpern_config_is_valid() {
        let cfg = parse_config(MINIMAL, "minimal").unwrap();
        assert_eq!(cfg.scheme, SchemeKind::Halpern);
        assert_eq!(cfg.horizon, 1000);
        assert_eq!(cfg.k_max, 50);
        assert_eq!(cfg.seed, 42);
        assert!(matches!(cfg.schedule, Schedule::HalpernProp2));
        assert!(cfg.map.is_some());
        assert!(cfg.rate_override.is_none());
    }

    #[test]
    fn unknown_key_is_named() {
        let text = format!("{MINIMAL}\n[extra]\nknob = 1\n");
        let err = parse_config(&text, "bad").unwrap_err();
        assert!(err.to_string().contains("extra.knob"), "{err}");
    }

    #[test]
    fn inapplicable_key_is_rejected() {
        let text = format!("{MINIMAL}\n[contraction]\nrho = 0.5\n");
        let err = parse_config(&text, "bad").unwrap_err();
        assert!(err.to_string().contains("contraction.rho"), "{err}");
        assert!(err.to_string().contains("not applicable"), "{err}");
    }

    #[test]
    fn contraction_modulus_one_is_rejected() {
        let text = r#"
scheme = "sam"
[space]
kind = "euclid"
dim = 1
[map]
kind = "negation"
[contraction]
kind = "linear_contraction"
rho = 1.0
[start]
euclid = [1.0]
"#;
        let err = parse_config(text, "bad").unwrap_err();
        assert!(err.to_string().contains("< 1"), "{err}");
    }

    #[test]
    fn proximal_explicit_schedule_needs_gammas() {
        let text = r#"
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
[schedule]
kind = "explicit"
alphas = [0.0, 0.5]
"#;
        let err = parse_config(text, "bad").unwrap_err();
        assert!(err.to_string().contains("schedule.gammas"), "{err}");
    }

    #[test]
    fn hppa_rejects_tripod() {
        let text = r#"
scheme = "hppa"
[space]
kind = "tripod"
[family]
kind = "quadratic_to_point"
ray = 0
t = 1.0
[start]
ray = 1
t = 1.0
[anchor]
ray = 1
t = 1.0
"#;
        let err = parse_config(text, "bad").unwrap_err();
        assert!(err.to_string().contains("euclid"), "{err}");
    }

    #[test]
    fn lieder_schedule_requires_anchor_at_start() {
        let text = r#"
scheme = "halpern"
[space]
kind = "euclid"
dim = 1
[map]
kind = "negation"
[start]
euclid = [1.0]
[anchor]
euclid = [2.0]
[schedule]
kind = "lieder"
"#;
        let err = parse_config(text, "bad").unwrap_err();
        assert!(err.to_string().contains("anchor"), "{err}");
    }

    #[test]
    fn tripod_points_parse() {
        let text = r#"
scheme = "halpern"
[space]
kind = "tripod"
[map]
kind = "ray_swap"
[start]
ray = 0
t = 1.0
[anchor]
ray = 1
t = 0.5
"#;
        let cfg = parse_config(text, "tripod").unwrap();
        assert_eq!(cfg.start, Point::tripod(0, 1.0));
        assert_eq!(cfg.anchor, Some(Point::tripod(1, 0.5)));
    }

    #[test]
    fn cross_indices_only_for_proximal_and_within_horizon() {
        let text = MINIMAL.replace("horizon = 1000", "horizon = 1000\nextra = 1");
        assert!(parse_config(&text, "bad").is_err());

        let with_cross = MINIMAL.replace("horizon = 1000", "horizon = 1000\ncross = [0, 5]");
        let err = parse_config(&with_cross, "bad").unwrap_err();
        assert!(err.to_string().contains("run.cross"), "{err}");

        let text = r#"
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
horizon = 100
cross = [500]
"#;
        let err = parse_config(text, "bad").unwrap_err();
        assert!(err.to_string().contains("exceeds horizon"), "{err}");
    }

    #[test]
    fn override_must_change_something() {
        let text = format!("{MINIMAL}\n[override]\nrate = \"halpern step rate\"\n");
        let err = parse_config(&text, "bad").unwrap_err();
        assert!(err.to_string().contains("override.rate"), "{err}");
    }

    #[test]
    fn explicit_schedule_parses_for_halpern() {
        let text = r#"
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
[schedule]
kind = "explicit"
alphas = [0.0, 0.5, 0.9]
[run]
horizon = 2
"#;
        let cfg = parse_config(text, "explicit").unwrap();
        assert!(matches!(cfg.schedule, Schedule::Explicit { .. }));
    }

    #[test]
    fn rotation_requires_dimension_two() {
        let text = MINIMAL.replace("dim = 1", "dim = 3").replace("negation", "rotation");
        let text = text.replace("[start]", "angle = 0.5\n[start]");
        let text = text
            .replace("euclid = [1.0]\n[anchor]", "euclid = [1.0, 0.0, 0.0]\n[anchor]")
            .replace("euclid = [1.0]\n[run]", "euclid = [1.0, 0.0, 0.0]\n[run]");
        let err = parse_config(&text, "bad").unwrap_err();
        assert!(err.to_string().contains("map.kind"), "{err}");
    }
}
