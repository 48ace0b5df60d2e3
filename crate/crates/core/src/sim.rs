//! Fixed-step run loop, trajectory log and summary metrics.

use std::io::{self, Write};

use thiserror::Error;

use crate::controllers::{law_discrepancy, Gains};
use crate::dynamics::{relative_state, step, ControlInput, DynamicsError, RobotState};
use crate::formation::{desired_attitude_rate, formation_step, leader_stopped, FormationSpec};
use crate::liegroup::{log_se2, LogBranch};
use crate::network::{pipeline_step, StepCommands, Topology};
use crate::scenario::{Mode, Scenario};

/// Any state component beyond this magnitude counts as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e9;

pub const CSV_HEADER: &str = "t,node,theta,x,y,omega,vx,vy,u_theta,u_x,err_pose,err_twist";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("numerical divergence at t = {t} on node {node}")]
    NumericalDivergence { t: f64, node: usize },
    #[error("dynamics error on node {node}: {source}")]
    Dynamics {
        node: usize,
        #[source]
        source: DynamicsError,
    },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// One log row: a node's state at `t`, the input held over `[t, t + dt)`,
/// and its error against the reference it tracks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Row {
    pub t: f64,
    pub node: usize,
    pub state: RobotState,
    pub input: ControlInput,
    pub err_pose: f64,
    pub err_twist: f64,
}

fn sig9(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:.8e}")
    }
}

impl Row {
    pub fn to_csv(&self) -> String {
        let s = &self.state;
        let mut out = format!("{},{}", sig9(self.t), self.node);
        for v in [
            s.pose.theta(),
            s.pose.x(),
            s.pose.y(),
            s.twist.omega,
            s.twist.vx,
            s.twist.vy,
            self.input.u_theta,
            self.input.u_x,
            self.err_pose,
            self.err_twist,
        ] {
            out.push(',');
            out.push_str(&sig9(v));
        }
        out
    }
}

/// Per-follower results.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FollowerSummary {
    pub node: usize,
    pub initial_err_pose: f64,
    pub terminal_err_pose: f64,
    /// `‖p_i − p_ref‖` at the end of the run.
    pub terminal_err_position: f64,
    /// `‖log(g₀ᵢ)‖` against the root at the start and end.
    pub initial_leader_err: f64,
    pub terminal_leader_err: f64,
    /// `‖R_cᵀ(p_i − p_c) − p̄‖` at the end (formation mode; 0 otherwise).
    pub terminal_formation_err: f64,
    pub max_vy: f64,
    /// First time after which `err_pose` stays below the scenario threshold.
    pub convergence_time: Option<f64>,
}

/// Run-level diagnostics that are logged rather than asserted by the run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    /// Largest actuated-channel gap between the closed-form law and its
    /// assembled form.
    pub max_law_discrepancy: f64,
    /// Largest lateral velocity of any tracked reference.
    pub max_reference_vy: f64,
    /// Largest `|dθ̄/dt|` neglected by the constant-offset transport.
    pub max_offset_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub followers: Vec<FollowerSummary>,
    pub diagnostics: Diagnostics,
}

impl Summary {
    /// Metric names accepted by [`Summary::metric`].
    pub const METRICS: &'static [&'static str] = &[
        "terminal_err",
        "terminal_err_pose",
        "consensus_ratio",
        "formation_err",
        "max_vy",
        "convergence_time",
        "law_discrepancy",
        "reference_vy",
        "offset_rate",
    ];

    fn max_of(&self, f: impl Fn(&FollowerSummary) -> f64) -> f64 {
        self.followers.iter().map(f).fold(0.0, f64::max)
    }

    /// Worst case over followers; `None` for an unknown name.
    pub fn metric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "terminal_err" => self.max_of(|f| f.terminal_err_position),
            "terminal_err_pose" => self.max_of(|f| f.terminal_err_pose),
            "consensus_ratio" => self.max_of(|f| {
                if f.initial_leader_err > 0.0 {
                    f.terminal_leader_err / f.initial_leader_err
                } else {
                    f.terminal_leader_err
                }
            }),
            "formation_err" => self.max_of(|f| f.terminal_formation_err),
            "max_vy" => self.max_of(|f| f.max_vy),
            "convergence_time" => self.max_of(|f| f.convergence_time.unwrap_or(f64::INFINITY)),
            "law_discrepancy" => self.diagnostics.max_law_discrepancy,
            "reference_vy" => self.diagnostics.max_reference_vy,
            "offset_rate" => self.diagnostics.max_offset_rate,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimResult {
    pub rows: Vec<Row>,
    pub summary: Summary,
}

impl SimResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(w, "{}", r.to_csv())?;
        }
        w.flush()
    }

    /// Rows of one node in time order.
    pub fn node_rows(&self, node: usize) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(move |r| r.node == node)
    }
}

/// Commands for all nodes under the scenario's mode.
pub fn mode_step(
    mode: Mode,
    topology: &Topology,
    states: &[RobotState],
    formation: Option<&FormationSpec>,
    leader_input: ControlInput,
    gains: &Gains,
    branch: LogBranch,
) -> StepCommands {
    match (mode, formation) {
        (Mode::Formation, Some(spec)) => formation_step(topology, states, spec, leader_input, gains, branch),
        _ => pipeline_step(topology, states, leader_input, gains, branch, |_, vl| vl),
    }
}

fn check_finite(t: f64, states: &[RobotState]) -> Result<(), SimError> {
    match states
        .iter()
        .position(|s| !s.is_finite() || s.max_abs() > DIVERGENCE_BOUND)
    {
        Some(node) => Err(SimError::NumericalDivergence { t, node }),
        None => Ok(()),
    }
}

pub fn run(scenario: &Scenario) -> Result<SimResult, SimError> {
    let n = scenario.topology.node_count();
    let steps = scenario.steps();
    let dt = scenario.dt;
    let formation = scenario.formation.as_ref();
    let mut states = scenario.initial.clone();
    let mut rows = Vec::with_capacity((steps + 1) * n);
    let mut followers: Vec<FollowerSummary> = (0..n)
        .map(|node| FollowerSummary {
            node,
            ..Default::default()
        })
        .collect();
    let mut diag = Diagnostics::default();
    let mut last_above = vec![None::<f64>; n];

    check_finite(0.0, &states)?;
    for k in 0..=steps {
        let t = k as f64 * dt;
        let u0 = scenario.leader_input.eval(t);
        let cmds = mode_step(
            scenario.mode,
            &scenario.topology,
            &states,
            formation,
            u0,
            &scenario.gains,
            scenario.branch,
        );
        let root = states[0];
        for node in 0..n {
            let state = states[node];
            let (err_pose, err_twist) = match &cmds.commands[node] {
                None => (0.0, 0.0),
                Some(cmd) => {
                    let ctx = &cmd.context;
                    let position_only = scenario.mode == Mode::Formation && leader_stopped(&cmd.reference.twist);
                    let err_pose = if position_only {
                        ctx.relative.pose.p.norm()
                    } else {
                        ctx.exp_coords().norm()
                    };
                    let f = &mut followers[node];
                    f.max_vy = f.max_vy.max(state.twist.vy.abs());
                    diag.max_law_discrepancy = diag
                        .max_law_discrepancy
                        .max(law_discrepancy(ctx, &scenario.gains).actuated);
                    diag.max_reference_vy = diag.max_reference_vy.max(cmd.reference.twist.vy.abs());
                    if let Some(spec) = formation {
                        let parent = crate::network::virtual_leader(
                            &scenario.topology,
                            node,
                            &states,
                            &cmds.inputs,
                            scenario.branch,
                        );
                        let rate = desired_attitude_rate(&spec.offset(node), &parent.twist, &parent.input);
                        diag.max_offset_rate = diag.max_offset_rate.max(rate);
                        if k == steps {
                            let rel = relative_state(&RobotState::new(parent.pose, parent.twist), &state);
                            f.terminal_formation_err = (rel.pose.p - spec.offset(node)).norm();
                        }
                    }
                    let leader_err = log_se2(&relative_state(&root, &state).pose, scenario.branch).norm();
                    if k == 0 {
                        f.initial_err_pose = err_pose;
                        f.initial_leader_err = leader_err;
                    }
                    if k == steps {
                        f.terminal_err_pose = err_pose;
                        f.terminal_err_position = ctx.relative.pose.p.norm();
                        f.terminal_leader_err = leader_err;
                    }
                    if err_pose >= scenario.convergence_threshold {
                        last_above[node] = Some(t);
                    }
                    (err_pose, ctx.relative.twist.norm())
                }
            };
            rows.push(Row {
                t,
                node,
                state,
                input: cmds.inputs[node],
                err_pose,
                err_twist,
            });
        }
        if k == steps {
            break;
        }
        for node in 0..n {
            states[node] = step(&states[node], &cmds.inputs[node], dt).map_err(|source| SimError::Dynamics { node, source })?;
        }
        check_finite(t + dt, &states)?;
    }

    let end = steps as f64 * dt;
    for node in 1..n {
        followers[node].convergence_time = match last_above[node] {
            None => Some(0.0),
            Some(t) if t < end => Some(t + dt),
            Some(_) => None,
        };
    }
    followers.remove(0);
    Ok(SimResult {
        rows,
        summary: Summary {
            followers,
            diagnostics: diag,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(text_nodes: &str, mode: &str, extra: &str) -> Scenario {
        let text = format!(
            "[scenario]\nmode = \"{mode}\"\nduration = 0.1\ndt = 0.01\n{text_nodes}\n{extra}"
        );
        Scenario::parse(&text).unwrap()
    }

    const TWO_AT_REST: &str = "[[nodes]]\nid = 0\ntheta = 0.0\nx = 0.0\ny = 0.0\n[[nodes]]\nid = 1\ntheta = 0.0\nx = 0.0\ny = 0.0\n";

    #[test]
    fn coincident_rest_has_zero_error() {
        let r = run(&scenario(TWO_AT_REST, "track", "")).unwrap();
        assert_eq!(r.rows.len(), 11 * 2);
        assert!(r.rows.iter().all(|row| row.err_pose == 0.0 && row.err_twist == 0.0));
        assert_eq!(r.summary.followers[0].convergence_time, Some(0.0));
    }

    #[test]
    fn csv_format() {
        let r = run(&scenario(TWO_AT_REST, "track", "[inputs.u_x]\nkind = \"constant\"\nvalue = 1.0\n")).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        let second = lines.nth(2).unwrap();
        assert!(second.starts_with("1.00000000e-2,0,"));
        assert_eq!(text.lines().count(), 1 + 22);
    }

    #[test]
    fn metrics_by_name() {
        let r = run(&scenario(TWO_AT_REST, "track", "")).unwrap();
        for name in Summary::METRICS {
            assert!(r.summary.metric(name).is_some(), "{name}");
        }
        assert!(r.summary.metric("bogus").is_none());
    }

    #[test]
    fn divergence_is_reported() {
        let nodes = "[[nodes]]\nid = 0\ntheta = 0.0\nx = 0.0\ny = 0.0\n[[nodes]]\nid = 1\ntheta = 0.0\nx = 0.0\ny = 0.0\n";
        let s = scenario(nodes, "track", "[inputs.u_x]\nkind = \"constant\"\nvalue = 1e15\n");
        assert!(matches!(run(&s), Err(SimError::NumericalDivergence { .. })));
    }
}
