//! Experiment description and its TOML scenario-file form.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedder::{Algorithm, ORACLE_MAX_CELLS};
use crate::grid::EdiBorder;
use crate::requests::{Mode, Operator, PriorityPolicy, ServiceKind, ServiceSpec};
use crate::traffic::{RateTable, Rates};

pub const SCHEMA_VERSION: u32 = 1;

/// The bundled scenario with the published experiment parameters.
pub const BUNDLED_SCENARIO: &str = include_str!("../scenarios/paper.scenario");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid scenario field `{field}`: {reason}")]
    Validation { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        field: field.into(),
        reason: reason.into(),
    }
}

/// Simulation switches for sensitivity runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimOptions {
    pub edi_border: EdiBorder,
    /// Use the rounded mean lifetime instead of sampling it.
    pub fixed_duration: bool,
    /// Requests may be embedded in the round they arrive.
    pub same_round_eligibility: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            edi_border: EdiBorder::Ignored,
            fixed_duration: false,
            same_round_eligibility: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Pre,
    Emergency,
    Post,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Pre, Phase::Emergency, Phase::Post];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Pre => "pre",
            Phase::Emergency => "emergency",
            Phase::Post => "post",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub f: usize,
    pub t: usize,
    pub horizon: u32,
    pub emergency_start: u32,
    pub emergency_end: u32,
    /// Indexed in [`ServiceKind::ALL`] order.
    pub services: [ServiceSpec; 3],
    pub rates: RateTable,
    pub policy: PriorityPolicy,
    pub algorithm: Algorithm,
    pub smoothing_window: usize,
    pub options: SimOptions,
}

impl Scenario {
    /// 20x20 substrate, 1000 rounds, emergency over rounds 300..700.
    pub fn standard() -> Self {
        Scenario {
            f: 20,
            t: 20,
            horizon: 1000,
            emergency_start: 300,
            emergency_end: 700,
            services: ServiceKind::ALL.map(ServiceSpec::standard),
            rates: RateTable::standard(),
            policy: PriorityPolicy::standard(),
            algorithm: Algorithm::Dynamic,
            smoothing_window: 25,
            options: SimOptions::default(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.f, self.t)
    }

    pub fn capacity(&self) -> usize {
        self.f * self.t
    }

    pub fn service(&self, kind: ServiceKind) -> &ServiceSpec {
        &self.services[kind as usize]
    }

    pub fn service_mut(&mut self, kind: ServiceKind) -> &mut ServiceSpec {
        &mut self.services[kind as usize]
    }

    pub fn mode_at(&self, round: u32) -> Mode {
        if (self.emergency_start..self.emergency_end).contains(&round) {
            Mode::Emergency
        } else {
            Mode::Normal
        }
    }

    pub fn phase_at(&self, round: u32) -> Phase {
        if round < self.emergency_start {
            Phase::Pre
        } else if round < self.emergency_end {
            Phase::Emergency
        } else {
            Phase::Post
        }
    }

    pub fn with_algorithm(mut self, algorithm: Algorithm) -> Self {
        self.algorithm = algorithm;
        self
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.f == 0 {
            return Err(invalid("substrate.f", "must be at least 1"));
        }
        if self.t == 0 {
            return Err(invalid("substrate.t", "must be at least 1"));
        }
        if self.emergency_start > self.emergency_end {
            return Err(invalid("emergency.start", "must not exceed emergency.end"));
        }
        if self.emergency_end > self.horizon {
            return Err(invalid("emergency.end", "must not exceed horizon"));
        }
        if self.smoothing_window == 0 {
            return Err(invalid("smoothing_window", "must be at least 1"));
        }
        if self.algorithm == Algorithm::Oracle && self.capacity() > ORACLE_MAX_CELLS {
            return Err(invalid(
                "algorithm",
                format!("oracle engine supports at most {ORACLE_MAX_CELLS} cells"),
            ));
        }
        for (i, spec) in self.services.iter().enumerate() {
            let path = |k: &str| format!("services[{i}].{k}");
            if spec.kind != ServiceKind::ALL[i] {
                return Err(invalid(path("kind"), "services out of voice, video, msg order"));
            }
            if !(spec.mean_duration.is_finite() && spec.mean_duration >= 1.0) {
                return Err(invalid(path("mean_duration"), "must be a finite number >= 1"));
            }
            if spec.size_min < 1 {
                return Err(invalid(path("size_min"), "must be at least 1"));
            }
            if spec.size_max < spec.size_min {
                return Err(invalid(path("size_max"), "must be >= size_min"));
            }
            if spec.size_max > self.capacity() {
                return Err(invalid(path("size_max"), "exceeds substrate capacity"));
            }
            if spec.max_delay < 1 {
                return Err(invalid(path("max_delay"), "must be at least 1"));
            }
        }
        for op in Operator::ALL {
            for svc in ServiceKind::ALL {
                let r = self.rates.rates(op, svc);
                for (mode, v) in [("normal", r.normal), ("emergency", r.emergency)] {
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(invalid(
                            format!("operators.{op}.rates.{mode}.{svc}"),
                            "must be a finite rate >= 0",
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        let scenario = file.into_scenario()?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&ScenarioFile::from_scenario(self)).expect("scenario file always serializes")
    }
}

impl Default for Scenario {
    fn default() -> Self {
        Self::standard()
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::from_toml_str(&text)
}

fn default_algorithm() -> Algorithm {
    Algorithm::Dynamic
}

fn default_smoothing() -> usize {
    25
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema: u32,
    horizon: u32,
    #[serde(default = "default_algorithm")]
    algorithm: Algorithm,
    #[serde(default = "default_smoothing")]
    smoothing_window: usize,
    substrate: SubstrateSection,
    emergency: EmergencySection,
    #[serde(default)]
    options: SimOptions,
    services: Vec<ServiceSpec>,
    operators: Vec<OperatorSection>,
    policy: PolicySection,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubstrateSection {
    f: usize,
    t: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmergencySection {
    start: u32,
    end: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorSection {
    name: String,
    is_ps: bool,
    rates: OperatorRates,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorRates {
    normal: ServiceRates,
    emergency: ServiceRates,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServiceRates {
    #[serde(skip_serializing_if = "Option::is_none")]
    voice: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    video: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    msg: Option<f64>,
}

impl ServiceRates {
    fn get(&self, kind: ServiceKind) -> Option<f64> {
        match kind {
            ServiceKind::Voice => self.voice,
            ServiceKind::Video => self.video,
            ServiceKind::Msg => self.msg,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicySection {
    normal: Vec<PolicyEntry>,
    emergency: Vec<PolicyEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyEntry {
    operator: String,
    service: ServiceKind,
    level: u32,
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<Scenario, ScenarioError> {
        if self.schema != SCHEMA_VERSION {
            return Err(invalid(
                "schema",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema),
            ));
        }

        let mut services: Vec<Option<ServiceSpec>> = vec![None; 3];
        for (i, spec) in self.services.into_iter().enumerate() {
            let slot = &mut services[spec.kind as usize];
            if slot.is_some() {
                return Err(invalid(
                    format!("services[{i}].kind"),
                    format!("duplicate service `{}`", spec.kind),
                ));
            }
            *slot = Some(spec);
        }
        let mut specs = Vec::with_capacity(3);
        for (kind, spec) in ServiceKind::ALL.into_iter().zip(services) {
            specs.push(spec.ok_or_else(|| invalid("services", format!("missing service `{kind}`")))?);
        }
        let services: [ServiceSpec; 3] = specs.try_into().expect("three services");

        let mut rates = RateTable::zero();
        let mut seen = Vec::new();
        for (i, op) in self.operators.iter().enumerate() {
            let owner: Operator = op
                .name
                .parse()
                .map_err(|e| invalid(format!("operators[{i}].name"), e))?;
            if owner.is_public_safety() != op.is_ps {
                return Err(invalid(
                    format!("operators[{i}].is_ps"),
                    format!("operator `{owner}` must have is_ps = {}", owner.is_public_safety()),
                ));
            }
            if seen.contains(&owner) {
                return Err(invalid(
                    format!("operators[{i}].name"),
                    format!("duplicate operator `{owner}`"),
                ));
            }
            seen.push(owner);
            for svc in ServiceKind::ALL {
                let field = |mode: &str| format!("operators[{i}].rates.{mode}.{svc}");
                let normal = op
                    .rates
                    .normal
                    .get(svc)
                    .ok_or_else(|| invalid(field("normal"), "missing rate for declared service"))?;
                let emergency = op
                    .rates
                    .emergency
                    .get(svc)
                    .ok_or_else(|| invalid(field("emergency"), "missing rate for declared service"))?;
                rates.set(owner, svc, Rates { normal, emergency });
            }
        }
        for owner in Operator::ALL {
            if !seen.contains(&owner) {
                return Err(invalid("operators", format!("missing operator `{owner}`")));
            }
        }

        let mut levels = Vec::new();
        for (mode, entries) in [
            (Mode::Normal, &self.policy.normal),
            (Mode::Emergency, &self.policy.emergency),
        ] {
            for (i, e) in entries.iter().enumerate() {
                let owner: Operator = e
                    .operator
                    .parse()
                    .map_err(|err| invalid(format!("policy.{mode}[{i}].operator"), err))?;
                if levels
                    .iter()
                    .any(|((m, o, s), _)| *m == mode && *o == owner && *s == e.service)
                {
                    return Err(invalid(format!("policy.{mode}[{i}]"), "duplicate entry"));
                }
                levels.push(((mode, owner, e.service), e.level));
            }
        }
        let policy = PriorityPolicy::from_levels(levels)
            .map_err(|(mode, op, svc)| invalid(format!("policy.{mode}"), format!("missing level for {op} {svc}")))?;

        Ok(Scenario {
            f: self.substrate.f,
            t: self.substrate.t,
            horizon: self.horizon,
            emergency_start: self.emergency.start,
            emergency_end: self.emergency.end,
            services,
            rates,
            policy,
            algorithm: self.algorithm,
            smoothing_window: self.smoothing_window,
            options: self.options,
        })
    }

    fn from_scenario(s: &Scenario) -> Self {
        let rates_for = |owner: Operator, pick: fn(Rates) -> f64| ServiceRates {
            voice: Some(pick(s.rates.rates(owner, ServiceKind::Voice))),
            video: Some(pick(s.rates.rates(owner, ServiceKind::Video))),
            msg: Some(pick(s.rates.rates(owner, ServiceKind::Msg))),
        };
        let operators = Operator::ALL
            .into_iter()
            .map(|owner| OperatorSection {
                name: owner.as_str().to_string(),
                is_ps: owner.is_public_safety(),
                rates: OperatorRates {
                    normal: rates_for(owner, |r| r.normal),
                    emergency: rates_for(owner, |r| r.emergency),
                },
            })
            .collect();
        let entries = |mode: Mode| {
            let mut out: Vec<PolicyEntry> = Operator::ALL
                .into_iter()
                .flat_map(|o| ServiceKind::ALL.into_iter().map(move |svc| (o, svc)))
                .map(|(o, svc)| PolicyEntry {
                    operator: o.as_str().to_string(),
                    service: svc,
                    level: s.policy.priority_of(o, svc, mode),
                })
                .collect();
            // highest level first reads as a ranking
            out.sort_by_key(|e| std::cmp::Reverse(e.level));
            out
        };
        ScenarioFile {
            schema: SCHEMA_VERSION,
            horizon: s.horizon,
            algorithm: s.algorithm,
            smoothing_window: s.smoothing_window,
            substrate: SubstrateSection { f: s.f, t: s.t },
            emergency: EmergencySection {
                start: s.emergency_start,
                end: s.emergency_end,
            },
            options: s.options,
            services: s.services.to_vec(),
            operators,
            policy: PolicySection {
                normal: entries(Mode::Normal),
                emergency: entries(Mode::Emergency),
            },
        }
    }
}
