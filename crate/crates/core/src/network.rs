//! Directed acyclic communication graphs, convex combinations of parent
//! states on SE(2), and the consensus-tracking pipeline.

use std::collections::VecDeque;

use thiserror::Error;

use crate::controllers::{single_follower_tracking, Gains, TrackingContext};
use crate::dynamics::{ControlInput, RobotState};
use crate::liegroup::{compose, exp_se2, inverse, log_se2, LogBranch, Pose, Twist};

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("topology needs at least one node")]
    Empty,
    #[error("node {node} is out of range (node count {count})")]
    UnknownNode { node: usize, count: usize },
    #[error("node {node} has more than one parent list")]
    DuplicateLink { node: usize },
    #[error("node {node} lists parent {parent} twice")]
    DuplicateParent { node: usize, parent: usize },
    #[error("cycle through node {node}")]
    CycleDetected { node: usize },
    #[error("root node 0 must not have parents")]
    RootHasParents,
    #[error("nodes {nodes:?} have no parents; only node 0 may be a root")]
    MultipleRoots { nodes: Vec<usize> },
    #[error("node {node} is not reachable from node 0")]
    UnreachableNode { node: usize },
    #[error("weight {value} of node {node} is outside [0, 1]")]
    WeightOutOfRange { node: usize, value: f64 },
    #[error("node {node} has {parents} parents and needs {expected} weights, got {got}")]
    WeightCount {
        node: usize,
        parents: usize,
        expected: usize,
        got: usize,
    },
}

/// Parent list of one follower. Weights may be omitted to take the uniform
/// choice `λʲ = 1/(j+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub child: usize,
    pub parents: Vec<usize>,
    pub weights: Option<Vec<f64>>,
}

impl Link {
    pub fn new(child: usize, parents: Vec<usize>) -> Self {
        Link {
            child,
            parents,
            weights: None,
        }
    }

    pub fn weighted(child: usize, parents: Vec<usize>, weights: Vec<f64>) -> Self {
        Link {
            child,
            parents,
            weights: Some(weights),
        }
    }
}

/// Weights that give every parent equal effective share under the iterated
/// combination.
pub fn uniform_weights(parent_count: usize) -> Vec<f64> {
    (1..parent_count).map(|j| 1.0 / (j as f64 + 1.0)).collect()
}

/// A validated DAG with node 0 as the only root.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    parents: Vec<Vec<usize>>,
    weights: Vec<Vec<f64>>,
    order: Vec<usize>,
}

impl Topology {
    pub fn new(node_count: usize, links: &[Link]) -> Result<Self, TopologyError> {
        if node_count == 0 {
            return Err(TopologyError::Empty);
        }
        let mut parents: Vec<Option<Vec<usize>>> = vec![None; node_count];
        let mut weights = vec![Vec::new(); node_count];
        for link in links {
            let node = link.child;
            if node >= node_count {
                return Err(TopologyError::UnknownNode { node, count: node_count });
            }
            if parents[node].is_some() {
                return Err(TopologyError::DuplicateLink { node });
            }
            for (i, &p) in link.parents.iter().enumerate() {
                if p >= node_count {
                    return Err(TopologyError::UnknownNode { node: p, count: node_count });
                }
                if link.parents[..i].contains(&p) {
                    return Err(TopologyError::DuplicateParent { node, parent: p });
                }
            }
            let w = match &link.weights {
                Some(w) => w.clone(),
                None => uniform_weights(link.parents.len()),
            };
            let expected = link.parents.len().saturating_sub(1);
            if w.len() != expected {
                return Err(TopologyError::WeightCount {
                    node,
                    parents: link.parents.len(),
                    expected,
                    got: w.len(),
                });
            }
            if let Some(&value) = w.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(TopologyError::WeightOutOfRange { node, value });
            }
            parents[node] = Some(link.parents.clone());
            weights[node] = w;
        }
        let parents: Vec<Vec<usize>> = parents.into_iter().map(Option::unwrap_or_default).collect();

        let order = topological_order(&parents)?;
        if !parents[0].is_empty() {
            return Err(TopologyError::RootHasParents);
        }
        let roots: Vec<usize> = (1..node_count).filter(|&n| parents[n].is_empty()).collect();
        if !roots.is_empty() {
            return Err(TopologyError::MultipleRoots { nodes: roots });
        }
        if let Some(node) = unreachable_from_root(&parents) {
            return Err(TopologyError::UnreachableNode { node });
        }
        Ok(Topology {
            parents,
            weights,
            order,
        })
    }

    /// `0 → 1 → … → n−1`.
    pub fn chain(node_count: usize) -> Result<Self, TopologyError> {
        let links: Vec<Link> = (1..node_count).map(|i| Link::new(i, vec![i - 1])).collect();
        Topology::new(node_count, &links)
    }

    pub fn node_count(&self) -> usize {
        self.parents.len()
    }

    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    pub fn weights(&self, node: usize) -> &[f64] {
        &self.weights[node]
    }

    /// Evaluation order, root first, parents before children.
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

// Kahn's algorithm; ties broken by node index so the order is deterministic.
fn topological_order(parents: &[Vec<usize>]) -> Result<Vec<usize>, TopologyError> {
    let n = parents.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut children = vec![Vec::new(); n];
    for (child, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p].push(child);
        }
    }
    let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(node) = ready.pop_first() {
        order.push(node);
        for &c in &children[node] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    match (0..n).find(|&i| indegree[i] > 0) {
        Some(node) => Err(TopologyError::CycleDetected { node }),
        None => Ok(order),
    }
}

fn unreachable_from_root(parents: &[Vec<usize>]) -> Option<usize> {
    let n = parents.len();
    let mut children = vec![Vec::new(); n];
    for (child, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p].push(child);
        }
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(node) = queue.pop_front() {
        for &c in &children[node] {
            if !seen[c] {
                seen[c] = true;
                queue.push_back(c);
            }
        }
    }
    seen.iter().position(|s| !s)
}

fn check_weights(values: usize, weights: &[f64]) {
    assert!(
        values >= 1 && weights.len() == values - 1,
        "{} values need {} weights, got {}",
        values,
        values.saturating_sub(1),
        weights.len()
    );
}

/// Iterated geodesic interpolation in listing order:
/// `g ← g exp(λ log(g⁻¹ gⱼ))`.
///
/// # Panics
/// If `parents` is empty or `weights.len() != parents.len() - 1`.
pub fn convex_pose(parents: &[Pose], weights: &[f64], branch: LogBranch) -> Pose {
    check_weights(parents.len(), weights);
    let mut g = parents[0];
    for (gj, &lambda) in parents[1..].iter().zip(weights) {
        let x = log_se2(&compose(&inverse(&g), gj), branch);
        g = compose(&g, &exp_se2(&x.scale(lambda)));
    }
    g
}

/// `ξ ← (1 − λ)ξ + λξⱼ`, in listing order.
///
/// # Panics
/// Same conditions as [`convex_pose`].
pub fn convex_twist(parents: &[Twist], weights: &[f64]) -> Twist {
    check_weights(parents.len(), weights);
    let mut xi = parents[0];
    for (xj, &lambda) in parents[1..].iter().zip(weights) {
        xi = xi.scale(1.0 - lambda) + xj.scale(lambda);
    }
    xi
}

pub fn convex_input(parents: &[ControlInput], weights: &[f64]) -> ControlInput {
    let twists: Vec<Twist> = parents.iter().map(ControlInput::as_twist).collect();
    ControlInput::from_twist(&convex_twist(&twists, weights))
}

/// The reference a follower tracks: its parents' convex combination, or a
/// transformed copy of it in formation mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VirtualLeader {
    pub pose: Pose,
    pub twist: Twist,
    pub input: ControlInput,
}

impl VirtualLeader {
    pub fn from_state(state: &RobotState, input: &ControlInput) -> Self {
        VirtualLeader {
            pose: state.pose,
            twist: state.twist,
            input: *input,
        }
    }
}

/// Combine the parents of `node`. `inputs` must already hold the parents'
/// commands for this step.
pub fn virtual_leader(
    topology: &Topology,
    node: usize,
    states: &[RobotState],
    inputs: &[ControlInput],
    branch: LogBranch,
) -> VirtualLeader {
    let ps = topology.parents(node);
    let w = topology.weights(node);
    if let [p] = ps {
        return VirtualLeader::from_state(&states[*p], &inputs[*p]);
    }
    let poses: Vec<Pose> = ps.iter().map(|&p| states[p].pose).collect();
    let twists: Vec<Twist> = ps.iter().map(|&p| states[p].twist).collect();
    let us: Vec<ControlInput> = ps.iter().map(|&p| inputs[p]).collect();
    VirtualLeader {
        pose: convex_pose(&poses, w, branch),
        twist: convex_twist(&twists, w),
        input: convex_input(&us, w),
    }
}

/// One follower's command together with what it was computed against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeCommand {
    pub input: ControlInput,
    pub reference: VirtualLeader,
    pub context: TrackingContext,
}

/// Commands for every node at one instant. Entry 0 is the leader's own
/// input; followers get `None` for `command` only at index 0.
#[derive(Clone, Debug, PartialEq)]
pub struct StepCommands {
    pub inputs: Vec<ControlInput>,
    pub commands: Vec<Option<NodeCommand>>,
}

/// Shared pipeline: for each follower in topological order, combine its
/// parents, map the combination through `reference`, and apply the tracking
/// law against the result.
pub fn pipeline_step<F>(
    topology: &Topology,
    states: &[RobotState],
    leader_input: ControlInput,
    gains: &Gains,
    branch: LogBranch,
    mut reference: F,
) -> StepCommands
where
    F: FnMut(usize, VirtualLeader) -> VirtualLeader,
{
    let n = topology.node_count();
    assert_eq!(states.len(), n, "one state per node");
    let mut inputs = vec![ControlInput::zero(); n];
    let mut commands = vec![None; n];
    inputs[0] = leader_input;
    for &node in &topology.order()[1..] {
        let combined = virtual_leader(topology, node, states, &inputs, branch);
        let target = reference(node, combined);
        let context = TrackingContext::new(&target.pose, &target.twist, &target.input, &states[node], branch);
        let input = single_follower_tracking(&context, gains);
        inputs[node] = input;
        commands[node] = Some(NodeCommand {
            input,
            reference: target,
            context,
        });
    }
    StepCommands { inputs, commands }
}

/// Consensus-tracking commands, indexed by node (entry 0 is `leader_input`).
pub fn consensus_step_inputs(
    topology: &Topology,
    states: &[RobotState],
    leader_input: ControlInput,
    gains: &Gains,
    branch: LogBranch,
) -> Vec<ControlInput> {
    pipeline_step(topology, states, leader_input, gains, branch, |_, vl| vl).inputs
}
