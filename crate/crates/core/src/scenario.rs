//! Declarative scenario files (TOML) and leader input programs.
//!
//! ```toml
//! [scenario]
//! name = "example1"
//! mode = "track"            # track | consensus | formation
//! duration = 20.0
//! dt = 0.001
//! log_branch = "plus_pi"    # or "minus_pi"
//!
//! [gains]
//! k_p = 25.0
//! k_d = 60.0
//! k = 3.0
//! k_e = 5.0
//!
//! [[nodes]]
//! id = 1
//! theta = "-pi/2"           # number or a multiple of pi
//! x = 500.0
//! y = -500.0
//! omega = 2.0
//! vx = 10.0
//!
//! [[topology.link]]
//! child = 3
//! parents = [1, 2]
//! weights = [0.5]           # optional
//!
//! [inputs.u_theta]
//! kind = "cos"
//! amplitude = 0.15
//! frequency = 0.4
//!
//! [[formation.offset]]
//! node = 1
//! p = [-15.0, 15.0]
//! ```

use std::fs;
use std::path::Path;

use nalgebra::Vector2;
use serde::Deserialize;
use thiserror::Error;

use crate::controllers::Gains;
use crate::dynamics::{ControlInput, RobotState};
use crate::formation::FormationSpec;
use crate::liegroup::LogBranch;
use crate::network::{Link, Topology};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Validation(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Validation(msg.into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Track,
    Consensus,
    Formation,
}

/// One input channel as a function of time.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Expr {
    Constant {
        value: f64,
    },
    /// `A sin(ω t + φ)`.
    Sin {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `A cos(ω t + φ)`.
    Cos {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    Piecewise {
        segments: Vec<Segment>,
    },
    /// Zero-order hold: `values[i]` applies on `[times[i], times[i+1])`.
    Table {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct Segment {
    pub start: f64,
    #[serde(flatten)]
    pub expr: Expr,
}

impl Default for Expr {
    fn default() -> Self {
        Expr::Constant { value: 0.0 }
    }
}

impl Expr {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Expr::Constant { value } => *value,
            Expr::Sin {
                amplitude,
                frequency,
                phase,
            } => amplitude * (frequency * t + phase).sin(),
            Expr::Cos {
                amplitude,
                frequency,
                phase,
            } => amplitude * (frequency * t + phase).cos(),
            Expr::Piecewise { segments } => segments
                .iter()
                .rev()
                .find(|s| s.start <= t)
                .map_or(0.0, |s| s.expr.eval(t)),
            Expr::Table { times, values } => {
                let i = times.partition_point(|&ti| ti <= t);
                if i == 0 {
                    0.0
                } else {
                    values[i - 1]
                }
            }
        }
    }

    fn validate(&self, channel: &str) -> Result<(), ScenarioError> {
        match self {
            Expr::Constant { value } if !value.is_finite() => invalid(format!("{channel}: non-finite constant")),
            Expr::Sin {
                amplitude,
                frequency,
                phase,
            }
            | Expr::Cos {
                amplitude,
                frequency,
                phase,
            } if ![amplitude, frequency, phase].iter().all(|v| v.is_finite()) => {
                invalid(format!("{channel}: non-finite sinusoid parameter"))
            }
            Expr::Piecewise { segments } => {
                match segments.first() {
                    None => return invalid(format!("{channel}: piecewise input has no segments")),
                    Some(s) if s.start != 0.0 => {
                        return invalid(format!("{channel}: first segment must start at t = 0"))
                    }
                    _ => {}
                }
                if segments.windows(2).any(|w| !(w[1].start > w[0].start)) {
                    return invalid(format!("{channel}: segment starts must increase"));
                }
                for s in segments {
                    s.expr.validate(channel)?;
                }
                Ok(())
            }
            Expr::Table { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return invalid(format!("{channel}: table needs equal, non-empty times and values"));
                }
                if times[0] != 0.0 {
                    return invalid(format!("{channel}: table must start at t = 0"));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return invalid(format!("{channel}: table times must increase"));
                }
                if !values.iter().all(|v| v.is_finite()) {
                    return invalid(format!("{channel}: non-finite table value"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Leader reference input; the lateral channel is always zero.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputProgram {
    #[serde(default)]
    pub u_theta: Expr,
    #[serde(default)]
    pub u_x: Expr,
}

impl InputProgram {
    pub fn eval(&self, t: f64) -> ControlInput {
        ControlInput::planar(self.u_theta.eval(t), self.u_x.eval(t))
    }
}

/// Angle given as a number or as text like `"pi"`, `"-pi/2"`, `"3*pi/4"`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
enum Angle {
    Number(f64),
    Text(String),
}

impl Angle {
    fn radians(&self) -> Result<f64, ScenarioError> {
        match self {
            Angle::Number(v) => Ok(*v),
            Angle::Text(s) => parse_angle(s).ok_or_else(|| ScenarioError::Parse(format!("bad angle {s:?}"))),
        }
    }
}

pub fn parse_angle(text: &str) -> Option<f64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let s = s.to_ascii_lowercase();
    if let Ok(v) = s.parse::<f64>() {
        return Some(v);
    }
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, s.strip_prefix('+').unwrap_or(&s)),
    };
    let (num, den) = match body.split_once('/') {
        Some((n, d)) => (n, d.parse::<f64>().ok()?),
        None => (body, 1.0),
    };
    let coeff = match num.strip_suffix("pi")? {
        "" => 1.0,
        c => c.strip_suffix('*').unwrap_or(c).parse::<f64>().ok()?,
    };
    Some(sign * coeff * std::f64::consts::PI / den)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    scenario: RawHeader,
    gains: Option<RawGains>,
    nodes: Vec<RawNode>,
    #[serde(default)]
    topology: RawTopology,
    #[serde(default)]
    inputs: InputProgram,
    formation: Option<RawFormation>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHeader {
    #[serde(default)]
    name: String,
    mode: Mode,
    duration: f64,
    #[serde(default = "default_dt")]
    dt: f64,
    #[serde(default)]
    log_branch: Option<String>,
    #[serde(default)]
    output: Option<String>,
    #[serde(default = "default_threshold")]
    convergence_threshold: f64,
}

fn default_dt() -> f64 {
    crate::dynamics::DEFAULT_DT
}

fn default_threshold() -> f64 {
    0.1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGains {
    k_p: f64,
    k_d: f64,
    k: f64,
    k_e: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: usize,
    theta: Angle,
    x: f64,
    y: f64,
    #[serde(default)]
    omega: f64,
    #[serde(default)]
    vx: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    #[serde(default)]
    link: Vec<RawLink>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    child: usize,
    parents: Vec<usize>,
    weights: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFormation {
    #[serde(default)]
    offset: Vec<RawOffset>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOffset {
    node: usize,
    p: [f64; 2],
}

/// A fully validated scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub mode: Mode,
    pub duration: f64,
    pub dt: f64,
    pub branch: LogBranch,
    pub gains: Gains,
    pub topology: Topology,
    pub initial: Vec<RobotState>,
    pub leader_input: InputProgram,
    pub formation: Option<FormationSpec>,
    pub output: Option<String>,
    /// Error level used for the convergence-time metric.
    pub convergence_threshold: f64,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let raw: RawFile = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Scenario::from_raw(raw)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut s = Scenario::parse(&text)?;
        if s.name.is_empty() {
            s.name = path
                .file_stem()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(s)
    }

    fn from_raw(raw: RawFile) -> Result<Self, ScenarioError> {
        let h = raw.scenario;
        if !(h.dt > 0.0) || !h.dt.is_finite() {
            return invalid(format!("dt must be positive, got {}", h.dt));
        }
        if !(h.duration >= h.dt) || !h.duration.is_finite() {
            return invalid(format!("duration {} must be at least dt {}", h.duration, h.dt));
        }
        if !(h.convergence_threshold > 0.0) {
            return invalid("convergence_threshold must be positive");
        }
        let branch = match h.log_branch.as_deref() {
            None | Some("plus_pi") => LogBranch::PlusPi,
            Some("minus_pi") => LogBranch::MinusPi,
            Some(other) => return invalid(format!("log_branch must be plus_pi or minus_pi, got {other:?}")),
        };
        let gains = match raw.gains {
            None => Gains::default(),
            Some(g) => Gains::new(g.k_p, g.k_d, g.k, g.k_e).map_err(|e| ScenarioError::Validation(e.to_string()))?,
        };

        let n = raw.nodes.len();
        if n < 2 {
            return invalid("need a leader (node 0) and at least one follower");
        }
        let mut initial = vec![None; n];
        for node in &raw.nodes {
            if node.id >= n {
                return invalid(format!("node ids must be 0..{}, got {}", n - 1, node.id));
            }
            if initial[node.id].is_some() {
                return invalid(format!("node {} defined twice", node.id));
            }
            let s = RobotState::planar(node.theta.radians()?, node.x, node.y, node.omega, node.vx);
            if !s.is_finite() {
                return invalid(format!("node {} has non-finite initial state", node.id));
            }
            initial[node.id] = Some(s);
        }
        let initial: Vec<RobotState> = initial.into_iter().map(Option::unwrap).collect();

        if h.mode == Mode::Track && n != 2 {
            return invalid(format!("track mode takes exactly two nodes, got {n}"));
        }
        let topology = if raw.topology.link.is_empty() {
            Topology::chain(n)
        } else {
            let links: Vec<Link> = raw
                .topology
                .link
                .into_iter()
                .map(|l| Link {
                    child: l.child,
                    parents: l.parents,
                    weights: l.weights,
                })
                .collect();
            Topology::new(n, &links)
        }
        .map_err(|e| ScenarioError::Validation(e.to_string()))?;

        raw.inputs.u_theta.validate("u_theta")?;
        raw.inputs.u_x.validate("u_x")?;

        let formation = match (h.mode, raw.formation) {
            (Mode::Formation, None) => return invalid("formation mode needs [[formation.offset]] entries"),
            (Mode::Formation, Some(f)) => {
                let mut spec = FormationSpec::new(n);
                let mut seen = vec![false; n];
                for o in f.offset {
                    if o.node == 0 || o.node >= n {
                        return invalid(format!("formation offset for invalid follower {}", o.node));
                    }
                    if seen[o.node] {
                        return invalid(format!("formation offset for node {} given twice", o.node));
                    }
                    if !o.p.iter().all(|v| v.is_finite()) {
                        return invalid(format!("non-finite formation offset for node {}", o.node));
                    }
                    seen[o.node] = true;
                    spec.set(o.node, Vector2::new(o.p[0], o.p[1]));
                }
                if let Some(missing) = (1..n).find(|&i| !seen[i]) {
                    return invalid(format!("formation offset missing for node {missing}"));
                }
                Some(spec)
            }
            (_, Some(_)) => return invalid("formation offsets given outside formation mode"),
            (_, None) => None,
        };

        Ok(Scenario {
            name: h.name,
            mode: h.mode,
            duration: h.duration,
            dt: h.dt,
            branch,
            gains,
            topology,
            initial,
            leader_input: raw.inputs,
            formation,
            output: h.output,
            convergence_threshold: h.convergence_threshold,
        })
    }

    /// Number of steps; the log has `steps() + 1` rows per node.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn with_dt(mut self, dt: f64) -> Result<Self, ScenarioError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return invalid(format!("dt must be positive, got {dt}"));
        }
        if !(self.duration >= dt) {
            return invalid(format!("duration {} must be at least dt {dt}", self.duration));
        }
        self.dt = dt;
        Ok(self)
    }

    pub fn with_duration(mut self, duration: f64) -> Result<Self, ScenarioError> {
        if !(duration >= self.dt) || !duration.is_finite() {
            return invalid(format!("duration {duration} must be at least dt {}", self.dt));
        }
        self.duration = duration;
        Ok(self)
    }
}

/// Scenario files shipped with the crate, by name.
pub const BUILTIN: &[(&str, &str)] = &[
    ("example1", include_str!("../scenarios/example1.scenario")),
    ("example2", include_str!("../scenarios/example2.scenario")),
    ("example3_pos_pi", include_str!("../scenarios/example3_pos_pi.scenario")),
    ("example3_neg_pi", include_str!("../scenarios/example3_neg_pi.scenario")),
    ("example4", include_str!("../scenarios/example4.scenario")),
    ("example5", include_str!("../scenarios/example5.scenario")),
];

/// Look up a shipped scenario by name, with or without the `.scenario` suffix.
pub fn builtin(name: &str) -> Option<Result<Scenario, ScenarioError>> {
    let key = name.strip_suffix(".scenario").unwrap_or(name);
    BUILTIN.iter().find(|(n, _)| *n == key).map(|(n, text)| {
        Scenario::parse(text).map(|mut s| {
            if s.name.is_empty() {
                s.name = n.to_string();
            }
            s
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const MINIMAL: &str = r#"
[scenario]
mode = "track"
duration = 1.0
dt = 0.01

[[nodes]]
id = 0
theta = 0.0
x = 0.0
y = 0.0

[[nodes]]
id = 1
theta = "-pi/2"
x = 1.0
y = 2.0

[inputs.u_x]
kind = "constant"
value = 1.0
"#;

    #[test]
    fn angles() {
        assert_eq!(parse_angle("pi"), Some(PI));
        assert_eq!(parse_angle("-pi"), Some(-PI));
        assert_eq!(parse_angle("-pi/2"), Some(-PI / 2.0));
        assert_eq!(parse_angle("3*pi/4"), Some(3.0 * PI / 4.0));
        assert_eq!(parse_angle("0.25"), Some(0.25));
        assert_eq!(parse_angle("tau"), None);
    }

    #[test]
    fn minimal_scenario() {
        let s = Scenario::parse(MINIMAL).unwrap();
        assert_eq!(s.mode, Mode::Track);
        assert_eq!(s.steps(), 100);
        assert_eq!(s.initial[1].pose.theta(), -PI / 2.0);
        assert_eq!(s.leader_input.eval(0.3), ControlInput::planar(0.0, 1.0));
        assert_eq!(s.gains, Gains::default());
        assert_eq!(s.branch, LogBranch::PlusPi);
    }

    #[test]
    fn bad_dt_rejected() {
        let text = MINIMAL.replace("dt = 0.01", "dt = -0.01");
        assert!(matches!(Scenario::parse(&text), Err(ScenarioError::Validation(_))));
        let text = MINIMAL.replace("duration = 1.0", "duration = 0.001");
        assert!(matches!(Scenario::parse(&text), Err(ScenarioError::Validation(_))));
    }

    #[test]
    fn syntax_error_is_parse_error() {
        assert!(matches!(Scenario::parse("[scenario"), Err(ScenarioError::Parse(_))));
        let text = MINIMAL.replace("kind = \"constant\"", "kind = \"ramp\"");
        assert!(matches!(Scenario::parse(&text), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn formation_needs_offsets() {
        let text = MINIMAL.replace("mode = \"track\"", "mode = \"formation\"");
        assert!(matches!(Scenario::parse(&text), Err(ScenarioError::Validation(_))));
    }

    #[test]
    fn piecewise_and_table() {
        let pw = Expr::Piecewise {
            segments: vec![
                Segment {
                    start: 0.0,
                    expr: Expr::Constant { value: 0.0 },
                },
                Segment {
                    start: 3.0,
                    expr: Expr::Sin {
                        amplitude: 0.1,
                        frequency: 0.5,
                        phase: -1.5,
                    },
                },
            ],
        };
        assert_eq!(pw.eval(2.999), 0.0);
        assert_eq!(pw.eval(3.0), 0.0);
        assert!((pw.eval(4.0) - 0.1 * 0.5f64.sin()).abs() < 1e-15);
        let tab = Expr::Table {
            times: vec![0.0, 1.0, 2.0],
            values: vec![1.0, -1.0, 0.0],
        };
        assert_eq!(tab.eval(0.0), 1.0);
        assert_eq!(tab.eval(0.999), 1.0);
        assert_eq!(tab.eval(1.0), -1.0);
        assert_eq!(tab.eval(50.0), 0.0);
        assert!(tab.validate("x").is_ok());
        let unordered = Expr::Table {
            times: vec![0.0, 2.0, 1.0],
            values: vec![1.0, 1.0, 1.0],
        };
        assert!(unordered.validate("x").is_err());
    }

    #[test]
    fn piecewise_from_toml() {
        let text = format!(
            "{MINIMAL}\n[inputs.u_theta]\nkind = \"piecewise\"\n[[inputs.u_theta.segments]]\nstart = 0.0\nkind = \"constant\"\nvalue = 0.0\n[[inputs.u_theta.segments]]\nstart = 3.0\nkind = \"sin\"\namplitude = 0.1\nfrequency = 0.5\nphase = -1.5\n"
        );
        let s = Scenario::parse(&text).unwrap();
        assert!(matches!(s.leader_input.u_theta, Expr::Piecewise { ref segments } if segments.len() == 2));
    }

    #[test]
    fn builtins_parse() {
        for (name, _) in BUILTIN {
            let s = builtin(name).unwrap().unwrap();
            assert_eq!(&s.name, name);
        }
        assert!(builtin("nope").is_none());
    }
}
