//! Declarative system description: parsing, validation and normalization.
//!
//! The on-disk format is TOML. A minimal document:
//!
//! ```toml
//! nodes = ["pcc", "grid"]
//! slack = "grid"
//!
//! [system]
//! rated_frequency_hz = 50.0
//!
//! [[branches]]
//! from = "pcc"
//! to = "grid"
//! inductance_pu = 0.3
//!
//! [[converters]]
//! name = "VSC1"
//! node = "pcc"
//! pll_kp = 6.5
//! pll_ki = 15782.0
//!
//! [[operating_point]]
//! name = "VSC1"
//! p_pu = 0.5
//! q_pu = 0.0
//! ```
//!
//! Optional `[[cases]]` blocks (`id`, `label`, nested `[[cases.operating_point]]`)
//! override the base operating point for the converters they list, and an
//! optional `[options]` table tunes the analysis. Converter order in the
//! file fixes the converter index everywhere downstream.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SCAN_FMIN_HZ: f64 = 0.5;
pub const DEFAULT_SCAN_FMAX_HZ: f64 = 60.0;
pub const DEFAULT_SCAN_POINTS: usize = 1200;
pub const DEFAULT_ROOT_TOL_HZ: f64 = 1e-4;
pub const DEFAULT_SIM_DT_S: f64 = 1e-4;
pub const DEFAULT_SIM_DURATION_S: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: String,
    pub to: String,
    /// Per-unit reactance at rated frequency.
    pub inductance_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConverterSpec {
    pub name: String,
    pub node: String,
    pub pll_kp: f64,
    pub pll_ki: f64,
}

/// Complex-power setpoint of one converter; positive means injection into
/// the network.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PowerSetpoint {
    pub p_pu: f64,
    pub q_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub flat_voltage: bool,
    pub scan_fmin_hz: f64,
    pub scan_fmax_hz: f64,
    pub scan_points: usize,
    pub root_tol_hz: f64,
    pub sim_dt_s: f64,
    pub sim_duration_s: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            flat_voltage: false,
            scan_fmin_hz: DEFAULT_SCAN_FMIN_HZ,
            scan_fmax_hz: DEFAULT_SCAN_FMAX_HZ,
            scan_points: DEFAULT_SCAN_POINTS,
            root_tol_hz: DEFAULT_ROOT_TOL_HZ,
            sim_dt_s: DEFAULT_SIM_DT_S,
            sim_duration_s: DEFAULT_SIM_DURATION_S,
        }
    }
}

/// A numbered alternative operating point stored alongside the base one.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingCase {
    pub id: u32,
    pub label: Option<String>,
    /// Overrides keyed by converter name; unlisted converters keep the base setpoint.
    pub overrides: BTreeMap<String, PowerSetpoint>,
}

/// Normalized system description. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub rated_frequency_hz: f64,
    pub nodes: Vec<String>,
    pub branches: Vec<Branch>,
    pub slack_node: String,
    pub converters: Vec<ConverterSpec>,
    /// One entry per converter, in converter order.
    pub operating_point: Vec<PowerSetpoint>,
    pub cases: Vec<OperatingCase>,
    pub options: AnalysisOptions,
}

impl SystemSpec {
    /// Rated angular frequency ω0 in rad/s.
    pub fn omega0(&self) -> f64 {
        2.0 * PI * self.rated_frequency_hz
    }

    pub fn n_converters(&self) -> usize {
        self.converters.len()
    }

    pub fn converter_index(&self, name: &str) -> Option<usize> {
        self.converters.iter().position(|c| c.name == name)
    }

    pub fn p_vector(&self) -> Vec<f64> {
        self.operating_point.iter().map(|s| s.p_pu).collect()
    }

    pub fn q_vector(&self) -> Vec<f64> {
        self.operating_point.iter().map(|s| s.q_pu).collect()
    }

    /// Copy of this spec whose base operating point is replaced by case `id`.
    pub fn with_case(&self, id: u32) -> Result<SystemSpec> {
        let case = self
            .cases
            .iter()
            .find(|c| c.id == id)
            .ok_or(Error::UnknownCase(id))?;
        let mut out = self.clone();
        for (name, sp) in &case.overrides {
            let i = self
                .converter_index(name)
                .ok_or_else(|| Error::UnknownConverter(name.clone()))?;
            out.operating_point[i] = *sp;
        }
        Ok(out)
    }

    /// Copy with converter `i`'s setpoint replaced.
    pub fn with_setpoint(&self, i: usize, sp: PowerSetpoint) -> SystemSpec {
        let mut out = self.clone();
        out.operating_point[i] = sp;
        out
    }
}

/// Machine-readable invariant breach reported by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    RatedFrequencyNonpositive,
    DuplicateNode,
    UnknownNode,
    SlackUndeclared,
    BranchSelfLoop,
    BranchNonpositiveL,
    NoConverters,
    DuplicateConverterName,
    ConverterOnSlack,
    DuplicateConverterNode,
    PllNonpositiveGain,
    GraphDisconnected,
    OpUnknownConverter,
    OpMissingConverter,
    OpNonfinite,
    DuplicateCase,
    ScanRangeInvalid,
    ScanPointsTooFew,
    OptionNonpositive,
}

impl ViolationCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::RatedFrequencyNonpositive => "RATED_FREQUENCY_NONPOSITIVE",
            Self::DuplicateNode => "DUPLICATE_NODE",
            Self::UnknownNode => "UNKNOWN_NODE",
            Self::SlackUndeclared => "SLACK_UNDECLARED",
            Self::BranchSelfLoop => "BRANCH_SELF_LOOP",
            Self::BranchNonpositiveL => "BRANCH_NONPOSITIVE_L",
            Self::NoConverters => "NO_CONVERTERS",
            Self::DuplicateConverterName => "DUPLICATE_CONVERTER_NAME",
            Self::ConverterOnSlack => "CONVERTER_ON_SLACK",
            Self::DuplicateConverterNode => "DUPLICATE_CONVERTER_NODE",
            Self::PllNonpositiveGain => "PLL_NONPOSITIVE_GAIN",
            Self::GraphDisconnected => "GRAPH_DISCONNECTED",
            Self::OpUnknownConverter => "OP_UNKNOWN_CONVERTER",
            Self::OpMissingConverter => "OP_MISSING_CONVERTER",
            Self::OpNonfinite => "OP_NONFINITE",
            Self::DuplicateCase => "DUPLICATE_CASE",
            Self::ScanRangeInvalid => "SCAN_RANGE_INVALID",
            Self::ScanPointsTooFew => "SCAN_POINTS_TOO_FEW",
            Self::OptionNonpositive => "OPTION_NONPOSITIVE",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn violation(code: ViolationCode, message: impl Into<String>) -> Violation {
    Violation {
        code,
        message: message.into(),
    }
}

// On-disk layout.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    nodes: Vec<String>,
    slack: String,
    system: RawSystem,
    #[serde(default)]
    branches: Vec<Branch>,
    #[serde(default)]
    converters: Vec<ConverterSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    operating_point: Option<Vec<RawSetpoint>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    cases: Vec<RawCase>,
    #[serde(default)]
    options: RawOptions,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    rated_frequency_hz: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSetpoint {
    name: String,
    p_pu: f64,
    q_pu: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCase {
    id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default)]
    operating_point: Vec<RawSetpoint>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptions {
    flat_voltage: Option<bool>,
    scan_fmin_hz: Option<f64>,
    scan_fmax_hz: Option<f64>,
    scan_points: Option<usize>,
    root_tol_hz: Option<f64>,
    sim_dt_s: Option<f64>,
    sim_duration_s: Option<f64>,
}

/// Parses and validates a configuration document.
pub fn parse_system_spec(text: &str) -> Result<SystemSpec> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|s| line_col(text, s.start))
            .unwrap_or((0, 0));
        Error::Syntax {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let (spec, mut problems) = normalize(raw);
    problems.extend(validate(&spec));
    if problems.is_empty() {
        Ok(spec)
    } else {
        Err(Error::Invalid(problems))
    }
}

pub fn load_system_spec(path: impl AsRef<std::path::Path>) -> Result<SystemSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_system_spec(&text)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map(|s| s.chars().count()).unwrap_or(0) + 1;
    (line, column)
}

fn normalize(raw: RawConfig) -> (SystemSpec, Vec<Violation>) {
    let mut problems = Vec::new();
    let names: Vec<&str> = raw.converters.iter().map(|c| c.name.as_str()).collect();

    let mut operating_point = vec![PowerSetpoint::default(); raw.converters.len()];
    if let Some(entries) = &raw.operating_point {
        let mut seen = vec![false; raw.converters.len()];
        for e in entries {
            match names.iter().position(|n| *n == e.name) {
                Some(i) => {
                    operating_point[i] = PowerSetpoint {
                        p_pu: e.p_pu,
                        q_pu: e.q_pu,
                    };
                    seen[i] = true;
                }
                None => problems.push(violation(
                    ViolationCode::OpUnknownConverter,
                    format!("operating_point names unknown converter '{}'", e.name),
                )),
            }
        }
        for (i, s) in seen.iter().enumerate() {
            if !s {
                problems.push(violation(
                    ViolationCode::OpMissingConverter,
                    format!("operating_point has no entry for converter '{}'", names[i]),
                ));
            }
        }
    }

    let mut cases = Vec::with_capacity(raw.cases.len());
    for c in raw.cases {
        let mut overrides = BTreeMap::new();
        for e in c.operating_point {
            if !names.contains(&e.name.as_str()) {
                problems.push(violation(
                    ViolationCode::OpUnknownConverter,
                    format!("case {} names unknown converter '{}'", c.id, e.name),
                ));
                continue;
            }
            overrides.insert(
                e.name,
                PowerSetpoint {
                    p_pu: e.p_pu,
                    q_pu: e.q_pu,
                },
            );
        }
        cases.push(OperatingCase {
            id: c.id,
            label: c.label,
            overrides,
        });
    }

    let d = AnalysisOptions::default();
    let o = raw.options;
    let options = AnalysisOptions {
        flat_voltage: o.flat_voltage.unwrap_or(d.flat_voltage),
        scan_fmin_hz: o.scan_fmin_hz.unwrap_or(d.scan_fmin_hz),
        scan_fmax_hz: o.scan_fmax_hz.unwrap_or(d.scan_fmax_hz),
        scan_points: o.scan_points.unwrap_or(d.scan_points),
        root_tol_hz: o.root_tol_hz.unwrap_or(d.root_tol_hz),
        sim_dt_s: o.sim_dt_s.unwrap_or(d.sim_dt_s),
        sim_duration_s: o.sim_duration_s.unwrap_or(d.sim_duration_s),
    };

    let spec = SystemSpec {
        rated_frequency_hz: raw.system.rated_frequency_hz,
        nodes: raw.nodes,
        branches: raw.branches,
        slack_node: raw.slack,
        converters: raw.converters,
        operating_point,
        cases,
        options,
    };
    (spec, problems)
}

/// Returns every violated invariant; an empty list means the spec is valid.
pub fn validate(spec: &SystemSpec) -> Vec<Violation> {
    use ViolationCode::*;
    let mut out = Vec::new();

    if !(spec.rated_frequency_hz > 0.0 && spec.rated_frequency_hz.is_finite()) {
        out.push(violation(
            RatedFrequencyNonpositive,
            format!("system.rated_frequency_hz must be > 0, got {}", spec.rated_frequency_hz),
        ));
    }

    let mut declared = HashSet::new();
    for n in &spec.nodes {
        if !declared.insert(n.as_str()) {
            out.push(violation(DuplicateNode, format!("node '{n}' declared twice")));
        }
    }
    let slack_ok = declared.contains(spec.slack_node.as_str());
    if !slack_ok {
        out.push(violation(
            SlackUndeclared,
            format!("slack node '{}' is not a declared node", spec.slack_node),
        ));
    }

    for (k, b) in spec.branches.iter().enumerate() {
        for end in [&b.from, &b.to] {
            if !declared.contains(end.as_str()) {
                out.push(violation(
                    UnknownNode,
                    format!("branches[{k}] endpoint '{end}' is not a declared node"),
                ));
            }
        }
        if b.from == b.to {
            out.push(violation(
                BranchSelfLoop,
                format!("branches[{k}] connects '{}' to itself", b.from),
            ));
        }
        if !(b.inductance_pu > 0.0 && b.inductance_pu.is_finite()) {
            out.push(violation(
                BranchNonpositiveL,
                format!(
                    "branches[{k}] ({}-{}) inductance_pu must be > 0, got {}",
                    b.from, b.to, b.inductance_pu
                ),
            ));
        }
    }

    if spec.converters.is_empty() {
        out.push(violation(NoConverters, "at least one converter is required"));
    }
    let mut names = HashSet::new();
    let mut conv_nodes = HashSet::new();
    for c in &spec.converters {
        if !names.insert(c.name.as_str()) {
            out.push(violation(
                DuplicateConverterName,
                format!("converter name '{}' used twice", c.name),
            ));
        }
        if !declared.contains(c.node.as_str()) {
            out.push(violation(
                UnknownNode,
                format!("converter '{}' node '{}' is not a declared node", c.name, c.node),
            ));
        }
        if c.node == spec.slack_node {
            out.push(violation(
                ConverterOnSlack,
                format!("converter may not attach to slack (converter '{}')", c.name),
            ));
        }
        if !conv_nodes.insert(c.node.as_str()) {
            out.push(violation(
                DuplicateConverterNode,
                format!("node '{}' hosts more than one converter", c.node),
            ));
        }
        for (label, v) in [("pll_kp", c.pll_kp), ("pll_ki", c.pll_ki)] {
            if !(v > 0.0 && v.is_finite()) {
                out.push(violation(
                    PllNonpositiveGain,
                    format!("converter '{}' {label} must be > 0, got {v}", c.name),
                ));
            }
        }
    }

    if slack_ok {
        let reachable = reachable_from(spec, &spec.slack_node);
        for n in &spec.nodes {
            if !reachable.contains(n.as_str()) {
                out.push(violation(
                    GraphDisconnected,
                    format!("node '{n}' has no path to slack '{}'", spec.slack_node),
                ));
            }
        }
    }

    if spec.operating_point.len() != spec.converters.len() {
        out.push(violation(
            OpMissingConverter,
            format!(
                "operating point has {} entries for {} converters",
                spec.operating_point.len(),
                spec.converters.len()
            ),
        ));
    }
    let all_setpoints = spec
        .operating_point
        .iter()
        .map(|s| ("operating_point".to_string(), s))
        .chain(spec.cases.iter().flat_map(|c| {
            c.overrides
                .values()
                .map(move |s| (format!("case {}", c.id), s))
        }));
    for (ctx, s) in all_setpoints {
        if !(s.p_pu.is_finite() && s.q_pu.is_finite()) {
            out.push(violation(OpNonfinite, format!("{ctx} has a non-finite setpoint")));
        }
    }
    let mut ids = HashSet::new();
    for c in &spec.cases {
        if !ids.insert(c.id) {
            out.push(violation(DuplicateCase, format!("case id {} declared twice", c.id)));
        }
        for name in c.overrides.keys() {
            if spec.converter_index(name).is_none() {
                out.push(violation(
                    OpUnknownConverter,
                    format!("case {} names unknown converter '{name}'", c.id),
                ));
            }
        }
    }

    let o = &spec.options;
    if !(o.scan_fmin_hz > 0.0 && o.scan_fmin_hz < o.scan_fmax_hz && o.scan_fmax_hz.is_finite()) {
        out.push(violation(
            ScanRangeInvalid,
            format!(
                "options.scan_fmin_hz ({}) must be > 0 and below scan_fmax_hz ({})",
                o.scan_fmin_hz, o.scan_fmax_hz
            ),
        ));
    }
    if o.scan_points < 2 {
        out.push(violation(
            ScanPointsTooFew,
            format!("options.scan_points must be >= 2, got {}", o.scan_points),
        ));
    }
    for (label, v) in [
        ("root_tol_hz", o.root_tol_hz),
        ("sim_dt_s", o.sim_dt_s),
        ("sim_duration_s", o.sim_duration_s),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            out.push(violation(
                OptionNonpositive,
                format!("options.{label} must be > 0, got {v}"),
            ));
        }
    }
    if o.sim_dt_s > 0.0 && o.sim_duration_s <= o.sim_dt_s {
        out.push(violation(
            OptionNonpositive,
            "options.sim_duration_s must exceed options.sim_dt_s",
        ));
    }

    out
}

fn reachable_from<'a>(spec: &'a SystemSpec, start: &'a str) -> HashSet<&'a str> {
    let mut adj: HashMap<&str, Vec<&str>> = HashMap::new();
    for b in &spec.branches {
        adj.entry(b.from.as_str()).or_default().push(b.to.as_str());
        adj.entry(b.to.as_str()).or_default().push(b.from.as_str());
    }
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(n) = queue.pop_front() {
        for &m in adj.get(n).map(Vec::as_slice).unwrap_or(&[]) {
            if seen.insert(m) {
                queue.push_back(m);
            }
        }
    }
    seen
}

/// Writes the normalized spec back out as a configuration document with
/// every default spelled out.
pub fn to_config_string(spec: &SystemSpec) -> String {
    let raw = RawConfig {
        nodes: spec.nodes.clone(),
        slack: spec.slack_node.clone(),
        system: RawSystem {
            rated_frequency_hz: spec.rated_frequency_hz,
        },
        branches: spec.branches.clone(),
        converters: spec.converters.clone(),
        operating_point: Some(
            spec.converters
                .iter()
                .zip(&spec.operating_point)
                .map(|(c, s)| RawSetpoint {
                    name: c.name.clone(),
                    p_pu: s.p_pu,
                    q_pu: s.q_pu,
                })
                .collect(),
        ),
        cases: spec
            .cases
            .iter()
            .map(|c| RawCase {
                id: c.id,
                label: c.label.clone(),
                operating_point: c
                    .overrides
                    .iter()
                    .map(|(name, s)| RawSetpoint {
                        name: name.clone(),
                        p_pu: s.p_pu,
                        q_pu: s.q_pu,
                    })
                    .collect(),
            })
            .collect(),
        options: RawOptions {
            flat_voltage: Some(spec.options.flat_voltage),
            scan_fmin_hz: Some(spec.options.scan_fmin_hz),
            scan_fmax_hz: Some(spec.options.scan_fmax_hz),
            scan_points: Some(spec.options.scan_points),
            root_tol_hz: Some(spec.options.root_tol_hz),
            sim_dt_s: Some(spec.options.sim_dt_s),
            sim_duration_s: Some(spec.options.sim_duration_s),
        },
    };
    toml::to_string(&raw).expect("spec serializes to TOML")
}
