//! Run configuration: one JSON document per run, every block optional.

use std::f64::consts::{E, PI, SQRT_2};
use std::path::Path;

use quasimin::field::{DEFAULT_R0, MAX_PUNCTURES};
use quasimin::integrator::{Direction, IntegratorConfig};
use quasimin::oracle::DEFAULT_BOUND;
use quasimin::recurrence::{BallPair, ConjugacySpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub field: FieldConfig,
    pub integrator: IntegratorConfig,
    pub orbit: OrbitConfig,
    pub density: DensityConfig,
    pub scan_t: ScanTConfig,
    pub recurrence: RecurrenceConfig,
    pub oracle: OracleConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            field: FieldConfig::default(),
            integrator: IntegratorConfig::default(),
            orbit: OrbitConfig::default(),
            density: DensityConfig::default(),
            scan_t: ScanTConfig::default(),
            recurrence: RecurrenceConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    pub alpha: f64,
    /// Empty list: the unslowed linear field.
    pub punctures: Vec<[f64; 2]>,
    pub r0: f64,
    pub depth: u32,
    pub special_points: Vec<[f64; 2]>,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            alpha: SQRT_2,
            punctures: vec![[0.5, 0.5]],
            r0: DEFAULT_R0,
            depth: 50,
            special_points: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrbitConfig {
    pub start: [f64; 2],
    pub horizon: f64,
    pub direction: Direction,
    /// When set, iterate the time-`map_t` map instead of tracing the flow.
    pub map_t: Option<f64>,
    pub iterations: u64,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        OrbitConfig {
            start: [0.1, 0.2],
            horizon: 10.0,
            direction: Direction::Forward,
            map_t: None,
            iterations: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDensityConfig {
    pub t: f64,
    pub iterations: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityConfig {
    pub m: usize,
    pub horizon: f64,
    pub starts: Vec<[f64; 2]>,
    pub random_starts: usize,
    pub include_punctures: bool,
    /// When set, rows describe time-t map orbits instead of flow orbits.
    pub map: Option<MapDensityConfig>,
    pub write_pgm: bool,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            m: 20,
            horizon: 1e4,
            starts: Vec::new(),
            random_starts: 10,
            include_punctures: true,
            map: None,
            write_pgm: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanTConfig {
    pub t_values: Vec<f64>,
    pub start: [f64; 2],
    pub iterations: u64,
    pub m: usize,
    pub oracle_bound: u32,
    /// Scan the slowed field; by default the linear field of the same slope.
    pub slowed: bool,
}

impl Default for ScanTConfig {
    fn default() -> Self {
        ScanTConfig {
            t_values: vec![1.0, 0.5, SQRT_2 / 2.0, 3f64.sqrt(), PI / 3.0, E / 2.0],
            start: [0.1234, 0.5678],
            iterations: 100_000,
            m: 20,
            oracle_bound: DEFAULT_BOUND,
            slowed: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecurrenceConfig {
    pub t: f64,
    /// Conjugacy; a seed-derived random spec when absent.
    pub spec: Option<ConjugacySpec>,
    pub m: usize,
    pub delta: f64,
    pub n_max: u64,
    pub certificates: Vec<BallPair>,
    /// Extra concentric pairs with seed-derived centres.
    pub random_certificates: usize,
    pub samples_per_u: usize,
}

impl Default for RecurrenceConfig {
    fn default() -> Self {
        RecurrenceConfig {
            t: SQRT_2 - 1.0,
            spec: None,
            m: 20,
            delta: 0.05,
            n_max: 50_000,
            certificates: Vec::new(),
            random_certificates: 5,
            samples_per_u: 17,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub beta: f64,
    pub gamma: f64,
    pub bound: u32,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            beta: 1.0,
            gamma: SQRT_2,
            bound: DEFAULT_BOUND,
        }
    }
}

/// Defaults as shown by `--help`.
pub const DEFAULTS_HELP: &str = "\
Configuration is a single JSON document (--config); every block and field is optional.
Defaults:
  seed                           0 (overridden by --seed)
  field.alpha                    √2
  field.punctures                [[0.5, 0.5]]   ([] = unslowed linear field)
  field.r0                       0.05
  field.depth                    50
  field.special_points           []
  integrator.rel_tol / abs_tol   1e-12 / 1e-14
  integrator.max_steps           10000000
  integrator.max_step_len        0.025
  integrator.stall_speed         1e-8
  integrator.stall_horizon       1000
  orbit.start                    [0.1, 0.2]
  orbit.horizon                  10
  orbit.direction                \"forward\"
  orbit.map_t / iterations       null / 100
  density.m                      20
  density.horizon                10000
  density.starts                 []
  density.random_starts          10
  density.include_punctures      true
  density.map                    null   ({\"t\": .., \"iterations\": ..} for time-t maps)
  density.write_pgm              true
  scan_t.t_values                [1, 1/2, √2/2, √3, π/3, e/2]
  scan_t.start                   [0.1234, 0.5678]
  scan_t.iterations              100000
  scan_t.m                       20
  scan_t.oracle_bound            10000
  scan_t.slowed                  false
  recurrence.t                   √2 − 1
  recurrence.spec                null   (random from seed)
  recurrence.m / delta / n_max   20 / 0.05 / 50000
  recurrence.certificates        []
  recurrence.random_certificates 5
  recurrence.samples_per_u       17
  oracle.beta / gamma / bound    1 / √2 / 10000

Exit codes: 0 success, 1 configuration error, 2 construction rejected, 3 numeric or I/O failure.";

pub fn load(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("at `{path}`: {}", e.inner()))
    })
}

fn bad(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("at `{path}`: {msg}"))
}

fn check_point(path: &str, p: &[f64; 2]) -> Result<(), CliError> {
    if p.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(bad(path, "coordinates must be finite"))
    }
}

impl ExperimentConfig {
    /// Checks everything that serde cannot, reporting the offending path.
    pub fn validate(&self) -> Result<(), CliError> {
        let f = &self.field;
        if f.punctures.len() > MAX_PUNCTURES {
            return Err(bad("field.punctures", format!("at most {MAX_PUNCTURES} punctures")));
        }
        for (i, p) in f.punctures.iter().enumerate() {
            check_point(&format!("field.punctures[{i}]"), p)?;
        }
        for (i, p) in f.special_points.iter().enumerate() {
            check_point(&format!("field.special_points[{i}]"), p)?;
        }
        if f.depth == 0 {
            return Err(bad("field.depth", "must be at least 1"));
        }
        self.integrator.validate().map_err(|e| bad("integrator", e))?;

        let o = &self.orbit;
        check_point("orbit.start", &o.start)?;
        if !(o.horizon.is_finite() && o.horizon > 0.0) {
            return Err(bad("orbit.horizon", "must be positive"));
        }
        if o.map_t.is_some_and(|t| !t.is_finite()) {
            return Err(bad("orbit.map_t", "must be finite"));
        }
        if o.iterations == 0 {
            return Err(bad("orbit.iterations", "must be at least 1"));
        }

        let d = &self.density;
        if d.m == 0 || d.m > 4096 {
            return Err(bad("density.m", "must be in 1..=4096"));
        }
        if !(d.horizon.is_finite() && d.horizon > 0.0) {
            return Err(bad("density.horizon", "must be positive"));
        }
        for (i, p) in d.starts.iter().enumerate() {
            check_point(&format!("density.starts[{i}]"), p)?;
        }
        if let Some(map) = &d.map {
            if !map.t.is_finite() {
                return Err(bad("density.map.t", "must be finite"));
            }
            if map.iterations == 0 {
                return Err(bad("density.map.iterations", "must be at least 1"));
            }
        }

        let s = &self.scan_t;
        if s.t_values.is_empty() {
            return Err(bad("scan_t.t_values", "must not be empty"));
        }
        if let Some(i) = s.t_values.iter().position(|t| !t.is_finite()) {
            return Err(bad(&format!("scan_t.t_values[{i}]"), "must be finite"));
        }
        check_point("scan_t.start", &s.start)?;
        if s.iterations == 0 {
            return Err(bad("scan_t.iterations", "must be at least 1"));
        }
        if s.m == 0 || s.m > 4096 {
            return Err(bad("scan_t.m", "must be in 1..=4096"));
        }
        if s.oracle_bound == 0 {
            return Err(bad("scan_t.oracle_bound", "must be at least 1"));
        }

        let r = &self.recurrence;
        if !r.t.is_finite() {
            return Err(bad("recurrence.t", "must be finite"));
        }
        if let Some(spec) = &r.spec {
            spec.validate().map_err(|e| bad("recurrence.spec", e))?;
        }
        if r.m == 0 {
            return Err(bad("recurrence.m", "must be positive"));
        }
        if !(r.delta > 0.0 && r.delta < 0.25) {
            return Err(bad("recurrence.delta", "must lie in (0, 0.25)"));
        }
        if r.n_max == 0 {
            return Err(bad("recurrence.n_max", "must be at least 1"));
        }
        for (i, pair) in r.certificates.iter().enumerate() {
            pair.validate().map_err(|e| bad(&format!("recurrence.certificates[{i}]"), e))?;
        }

        let q = &self.oracle;
        if !(q.beta.is_finite() && q.gamma.is_finite()) {
            return Err(bad("oracle", "beta and gamma must be finite"));
        }
        if q.bound == 0 {
            return Err(bad("oracle.bound", "must be at least 1"));
        }
        Ok(())
    }
}
