//! Generalized PageRank optimization instances.
//!
//! An instance is a weighted, costed digraph with a start node `v_s` (no
//! incoming edges) and an absorbing, cost-free target `v_t`. Some edges are
//! *free*: a [`Policy`] decides which of them are active. Nodes whose
//! outgoing edges are all free must keep exactly one of them active, and an
//! exclusivity pair (two free edges forming the whole out-set of a node)
//! likewise activates exactly one member.
//!
//! Policies are also viewed as a vector of choices over the instance's
//! [`Decision`] points: a `Toggle` is one free edge at a node that also has
//! fixed edges (choice 0 = off, 1 = on), a `OneOf` is a node that must
//! activate exactly one of its free edges (choice = index into the sorted
//! edge list).

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type EdgeId = usize;

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub weight: f64,
    pub cost: f64,
    pub free: bool,
}

impl Edge {
    pub fn fixed(from: NodeId, to: NodeId) -> Self {
        Edge {
            from,
            to,
            weight: 1.0,
            cost: 1.0,
            free: false,
        }
    }

    pub fn free(from: NodeId, to: NodeId) -> Self {
        Edge {
            free: true,
            ..Edge::fixed(from, to)
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_cost(mut self, cost: f64) -> Self {
        self.cost = cost;
        self
    }
}

/// A support graph before the target node is split.
#[derive(Clone, Debug, PartialEq)]
pub struct Digraph {
    pub names: Vec<String>,
    pub edges: Vec<Edge>,
}

/// How nodes without outgoing edges are repaired.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DanglingRepair {
    /// Fixed unit edges to every other node.
    #[default]
    ConnectToAll,
    /// A single fixed unit edge to the given node.
    LinkTo(NodeId),
}

impl Digraph {
    pub fn new(n: usize) -> Self {
        Digraph {
            names: (0..n).map(|i| i.to_string()).collect(),
            edges: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn add_edge(&mut self, edge: Edge) -> EdgeId {
        assert!(edge.from < self.n() && edge.to < self.n());
        self.edges.push(edge);
        self.edges.len() - 1
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n()];
        for e in &self.edges {
            d[e.from] += 1;
        }
        d
    }

    /// Gives every node without outgoing edges fixed unit edges according to
    /// `mode`. Idempotent.
    pub fn repair_dangling(&self, mode: DanglingRepair) -> Digraph {
        let n = self.n();
        let degrees = self.out_degrees();
        let mut out = self.clone();
        for (u, &d) in degrees.iter().enumerate() {
            if d > 0 {
                continue;
            }
            match mode {
                DanglingRepair::ConnectToAll => {
                    for v in (0..n).filter(|&v| v != u) {
                        out.edges.push(Edge::fixed(u, v));
                    }
                    if n == 1 {
                        out.edges.push(Edge::fixed(u, u));
                    }
                }
                DanglingRepair::LinkTo(v) => out.edges.push(Edge::fixed(u, v)),
            }
        }
        out
    }
}

/// Correspondence between a support graph and its split instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMap {
    /// The node of the support graph that was split.
    pub original_target: NodeId,
    /// `node_of[u]` is the instance node for support node `u`; the split
    /// node maps to `v_s`.
    pub node_of: Vec<NodeId>,
    pub start: NodeId,
    pub target: NodeId,
}

/// Splits `v` into a start node (all of `v`'s outgoing edges) and an
/// absorbing target (all incoming edges plus a zero-cost self-loop).
///
/// Support nodes keep their indices, `v` becomes `v_s`, and `v_t` is
/// appended as the last node. An edge `v -> v` becomes `v_s -> v_t`.
pub fn split_target(graph: &Digraph, v: NodeId) -> Result<(GproInstance, SplitMap)> {
    let n = graph.n();
    if v >= n {
        return Err(Error::Malformed(format!("target {v} out of range")));
    }
    if !graph.edges.iter().any(|e| e.from == v) {
        return Err(Error::Malformed(format!("target {v} has no outgoing edge")));
    }
    if !graph.edges.iter().any(|e| e.to == v) {
        return Err(Error::Malformed(format!("target {v} has no incoming edge")));
    }
    let start = v;
    let target = n;
    let mut names = graph.names.clone();
    names[v] = format!("{}#s", graph.names[v]);
    names.push(format!("{}#t", graph.names[v]));
    let mut edges: Vec<Edge> = graph
        .edges
        .iter()
        .map(|e| Edge {
            to: if e.to == v { target } else { e.to },
            ..e.clone()
        })
        .collect();
    edges.push(Edge::fixed(target, target).with_cost(0.0));
    let instance = GproInstance::new(names, start, target, edges, Vec::new(), None)?;
    let map = SplitMap {
        original_target: v,
        node_of: (0..n).collect(),
        start,
        target,
    };
    Ok((instance, map))
}

/// Where the random walk restarts when zapping happens.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Restart {
    /// Uniform over every node of the split instance, `v_s` and `v_t`
    /// included.
    #[default]
    AllNodes,
    /// Uniform over every node except `v_s`: the original node set, with
    /// the split node represented by `v_t`.
    ExcludeStart,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Zapping {
    /// Restart probability `c` in (0, 1).
    pub probability: f64,
    pub restart: Restart,
    /// Cost charged for a restart jump.
    pub cost: f64,
}

impl Zapping {
    pub fn new(probability: f64) -> Self {
        Zapping {
            probability,
            restart: Restart::AllNodes,
            cost: 1.0,
        }
    }

    /// Whether `node` receives restart mass.
    pub fn restarts_at(&self, node: NodeId, start: NodeId) -> bool {
        match self.restart {
            Restart::AllNodes => true,
            Restart::ExcludeStart => node != start,
        }
    }

    pub fn restart_count(&self, n: usize) -> usize {
        match self.restart {
            Restart::AllNodes => n,
            Restart::ExcludeStart => n - 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionKind {
    /// A single free edge that may be on or off.
    Toggle,
    /// Exactly one of the listed free edges is active.
    OneOf,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decision {
    pub node: NodeId,
    pub kind: DecisionKind,
    /// Sorted by edge index; a `Toggle` holds exactly one edge.
    pub edges: Vec<EdgeId>,
}

impl Decision {
    pub fn arity(&self) -> usize {
        match self.kind {
            DecisionKind::Toggle => 2,
            DecisionKind::OneOf => self.edges.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GproInstance {
    names: Vec<String>,
    start: NodeId,
    target: NodeId,
    edges: Vec<Edge>,
    exclusivity: Vec<[EdgeId; 2]>,
    zapping: Option<Zapping>,
    out: Vec<Vec<EdgeId>>,
    decisions: Vec<Decision>,
    decision_of_edge: Vec<Option<usize>>,
}

impl GproInstance {
    /// Builds an instance. Only structural sanity (indices in range) is
    /// checked here; semantic invariants are reported by [`validate`].
    pub fn new(
        names: Vec<String>,
        start: NodeId,
        target: NodeId,
        edges: Vec<Edge>,
        exclusivity: Vec<[EdgeId; 2]>,
        zapping: Option<Zapping>,
    ) -> Result<Self> {
        let n = names.len();
        if start >= n || target >= n {
            return Err(Error::Malformed(format!(
                "v_s={start} / v_t={target} out of range for {n} nodes"
            )));
        }
        for (id, e) in edges.iter().enumerate() {
            if e.from >= n || e.to >= n {
                return Err(Error::Malformed(format!(
                    "edge {id} ({} -> {}) out of range for {n} nodes",
                    e.from, e.to
                )));
            }
        }
        for pair in &exclusivity {
            if pair.iter().any(|&e| e >= edges.len()) {
                return Err(Error::Malformed(format!(
                    "exclusivity pair {pair:?} references a missing edge"
                )));
            }
        }
        let mut out = vec![Vec::new(); n];
        for (id, e) in edges.iter().enumerate() {
            out[e.from].push(id);
        }
        let mut instance = GproInstance {
            names,
            start,
            target,
            edges,
            exclusivity,
            zapping,
            out,
            decisions: Vec::new(),
            decision_of_edge: Vec::new(),
        };
        instance.classify();
        Ok(instance)
    }

    fn classify(&mut self) {
        let mut decisions = Vec::new();
        for node in 0..self.n() {
            let free: Vec<EdgeId> = self.out[node]
                .iter()
                .copied()
                .filter(|&e| self.edges[e].free)
                .collect();
            if free.is_empty() {
                continue;
            }
            let has_fixed = free.len() < self.out[node].len();
            let paired = self.exclusivity.iter().any(|p| {
                free.len() == 2 && !has_fixed && p.contains(&free[0]) && p.contains(&free[1])
            });
            if paired || !has_fixed {
                decisions.push(Decision {
                    node,
                    kind: DecisionKind::OneOf,
                    edges: free,
                });
            } else {
                decisions.extend(free.into_iter().map(|e| Decision {
                    node,
                    kind: DecisionKind::Toggle,
                    edges: vec![e],
                }));
            }
        }
        decisions.sort_by_key(|d| d.edges[0]);
        let mut decision_of_edge = vec![None; self.edges.len()];
        for (i, d) in decisions.iter().enumerate() {
            for &e in &d.edges {
                decision_of_edge[e] = Some(i);
            }
        }
        self.decisions = decisions;
        self.decision_of_edge = decision_of_edge;
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn start(&self) -> NodeId {
        self.start
    }

    pub fn target(&self) -> NodeId {
        self.target
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id]
    }

    pub fn out_edges(&self, node: NodeId) -> &[EdgeId] {
        &self.out[node]
    }

    pub fn exclusivity(&self) -> &[[EdgeId; 2]] {
        &self.exclusivity
    }

    pub fn zapping(&self) -> Option<&Zapping> {
        self.zapping.as_ref()
    }

    pub fn decisions(&self) -> &[Decision] {
        &self.decisions
    }

    pub fn decision_of_edge(&self, edge: EdgeId) -> Option<usize> {
        self.decision_of_edge[edge]
    }

    pub fn free_edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        (0..self.edges.len()).filter(|&e| self.edges[e].free)
    }

    /// Number of free edges `f`.
    pub fn free_count(&self) -> usize {
        self.edges.iter().filter(|e| e.free).count()
    }

    /// Number of feasible policies: the product of decision arities.
    pub fn policy_count(&self) -> f64 {
        self.decisions.iter().map(|d| d.arity() as f64).product()
    }

    pub fn with_zapping(&self, zapping: Option<Zapping>) -> GproInstance {
        GproInstance {
            zapping,
            ..self.clone()
        }
    }

    pub fn with_edges(&self, edges: Vec<Edge>, exclusivity: Vec<[EdgeId; 2]>) -> Result<Self> {
        GproInstance::new(
            self.names.clone(),
            self.start,
            self.target,
            edges,
            exclusivity,
            self.zapping,
        )
    }
}

/// An invariant violation found by [`validate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    StartIsTarget { node: NodeId },
    NegativeWeight { edge: EdgeId, from: NodeId, to: NodeId },
    ZeroWeight { edge: EdgeId, from: NodeId, to: NodeId },
    NonFinite { edge: EdgeId, from: NodeId, to: NodeId },
    TargetNotAbsorbing { edge: EdgeId, to: NodeId },
    TargetLoopMissing { node: NodeId },
    TargetLoopCost { edge: EdgeId },
    TargetLoopFree { edge: EdgeId },
    StartHasIncoming { edge: EdgeId, from: NodeId },
    Exclusivity { pair: usize, reason: String },
    Dangling { node: NodeId },
    /// The target is unreachable from `node` under some feasible policy.
    Improper { node: NodeId },
    Zapping { probability: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::StartIsTarget { node } => write!(f, "v_s and v_t are both node {node}"),
            Violation::NegativeWeight { from, to, .. } => {
                write!(f, "negative weight on ({from}, {to})")
            }
            Violation::ZeroWeight { from, to, .. } => write!(f, "zero weight on ({from}, {to})"),
            Violation::NonFinite { from, to, .. } => {
                write!(f, "non-finite weight or cost on ({from}, {to})")
            }
            Violation::TargetNotAbsorbing { edge, to } => {
                write!(f, "target has outgoing edge {edge} to node {to}")
            }
            Violation::TargetLoopMissing { node } => write!(f, "target {node} lacks its self-loop"),
            Violation::TargetLoopCost { edge } => write!(f, "target self-loop {edge} has nonzero cost"),
            Violation::TargetLoopFree { edge } => write!(f, "target self-loop {edge} is free"),
            Violation::StartHasIncoming { edge, from } => {
                write!(f, "start node has incoming edge {edge} from node {from}")
            }
            Violation::Exclusivity { pair, reason } => {
                write!(f, "exclusivity pair {pair}: {reason}")
            }
            Violation::Dangling { node } => write!(f, "node {node} has no outgoing edge"),
            Violation::Improper { node } => {
                write!(f, "target unreachable from node {node} under some policy")
            }
            Violation::Zapping { probability } => {
                write!(f, "zapping probability {probability} outside (0, 1)")
            }
        }
    }
}

/// Returns every invariant violation, in a deterministic order.
pub fn validate(instance: &GproInstance) -> Vec<Violation> {
    let mut v = Vec::new();
    let (s, t) = (instance.start, instance.target);
    if s == t {
        v.push(Violation::StartIsTarget { node: s });
    }
    if let Some(z) = &instance.zapping {
        if !(z.probability > 0.0 && z.probability < 1.0) || !z.cost.is_finite() {
            v.push(Violation::Zapping {
                probability: z.probability,
            });
        }
    }
    for (id, e) in instance.edges.iter().enumerate() {
        let (from, to) = (e.from, e.to);
        if !e.weight.is_finite() || !e.cost.is_finite() {
            v.push(Violation::NonFinite { edge: id, from, to });
        } else if e.weight < 0.0 {
            v.push(Violation::NegativeWeight { edge: id, from, to });
        } else if e.weight == 0.0 {
            v.push(Violation::ZeroWeight { edge: id, from, to });
        }
    }
    let mut has_loop = false;
    for &id in &instance.out[t] {
        let e = &instance.edges[id];
        if e.to != t {
            v.push(Violation::TargetNotAbsorbing { edge: id, to: e.to });
            continue;
        }
        has_loop = true;
        if e.cost != 0.0 {
            v.push(Violation::TargetLoopCost { edge: id });
        }
        if e.free {
            v.push(Violation::TargetLoopFree { edge: id });
        }
    }
    if !has_loop {
        v.push(Violation::TargetLoopMissing { node: t });
    }
    if s != t {
        for (id, e) in instance.edges.iter().enumerate() {
            if e.to == s {
                v.push(Violation::StartHasIncoming { edge: id, from: e.from });
            }
        }
    }
    let mut seen = BTreeSet::new();
    for (i, pair) in instance.exclusivity.iter().enumerate() {
        let [a, b] = *pair;
        let (ea, eb) = (&instance.edges[a], &instance.edges[b]);
        let reason = if a == b {
            Some("both members are the same edge".to_string())
        } else if !seen.insert(a) || !seen.insert(b) {
            Some("an edge belongs to more than one pair".to_string())
        } else if !ea.free || !eb.free {
            Some("both members must be free".to_string())
        } else if ea.from != eb.from {
            Some(format!("edges leave different nodes {} and {}", ea.from, eb.from))
        } else if instance.out[ea.from].len() != 2 {
            Some(format!(
                "node {} has out-degree {}, expected 2",
                ea.from,
                instance.out[ea.from].len()
            ))
        } else {
            None
        };
        if let Some(reason) = reason {
            v.push(Violation::Exclusivity { pair: i, reason });
        }
    }
    for node in 0..instance.n() {
        if instance.out[node].is_empty() {
            v.push(Violation::Dangling { node });
        }
    }
    if instance.zapping.is_none() {
        for node in improper_nodes(instance) {
            v.push(Violation::Improper { node });
        }
    }
    v
}

/// Nodes from which the target is unreachable under at least one feasible
/// policy (ignoring zapping).
///
/// A node is safe when every feasible local configuration keeps an active
/// positive-weight edge into the safe set; activating more toggles only adds
/// successors, so the worst case for a toggle node is "all toggles off".
pub fn improper_nodes(instance: &GproInstance) -> Vec<NodeId> {
    let n = instance.n();
    let mut safe = vec![false; n];
    safe[instance.target] = true;
    let usable = |e: &Edge| e.weight > 0.0 && e.weight.is_finite();
    loop {
        let mut changed = false;
        for node in 0..n {
            if safe[node] {
                continue;
            }
            let edges = &instance.out[node];
            let fixed: Vec<&Edge> = edges
                .iter()
                .map(|&e| &instance.edges[e])
                .filter(|e| !e.free)
                .collect();
            let ok = if fixed.is_empty() {
                // one-of node: every choice must lead to safety
                !edges.is_empty()
                    && edges.iter().all(|&e| {
                        let e = &instance.edges[e];
                        usable(e) && safe[e.to]
                    })
            } else {
                fixed.iter().any(|e| usable(e) && safe[e.to])
            };
            if ok {
                safe[node] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (0..n).filter(|&i| !safe[i]).collect()
}

/// Rewrites weights to 1 and costs to 1 (0 on the target's edges): the
/// plain PageRank-optimization special case.
pub fn canonical_pro(instance: &GproInstance) -> GproInstance {
    let t = instance.target;
    let edges = instance
        .edges
        .iter()
        .map(|e| Edge {
            weight: 1.0,
            cost: if e.from == t { 0.0 } else { 1.0 },
            ..e.clone()
        })
        .collect();
    let zapping = instance.zapping.map(|z| Zapping { cost: 1.0, ..z });
    GproInstance {
        edges,
        zapping,
        ..instance.clone()
    }
}

/// Replaces exclusivity pair `pair` by a free edge of weight 1 (the first
/// member) and a fixed edge of weight `epsilon` (the second member).
///
/// Experimental: this does not preserve the optimum in general.
pub fn epsilon_exclusivity_emulation(
    instance: &GproInstance,
    pair: usize,
    epsilon: f64,
) -> Result<GproInstance> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Malformed(format!("epsilon must be positive, got {epsilon}")));
    }
    let [a, b] = *instance
        .exclusivity
        .get(pair)
        .ok_or_else(|| Error::Malformed(format!("no exclusivity pair {pair}")))?;
    let mut edges = instance.edges.clone();
    edges[a].weight = 1.0;
    edges[a].free = true;
    edges[b].weight = epsilon;
    edges[b].free = false;
    let mut exclusivity = instance.exclusivity.clone();
    exclusivity.remove(pair);
    instance.with_edges(edges, exclusivity)
}

/// Activation state of every edge; fixed edges are always active.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Policy {
    active: Vec<bool>,
}

impl Policy {
    /// Every toggle on, every one-of decision on its lowest-index edge.
    pub fn initial(instance: &GproInstance) -> Policy {
        let choices: Vec<usize> = instance
            .decisions
            .iter()
            .map(|d| match d.kind {
                DecisionKind::Toggle => 1,
                DecisionKind::OneOf => 0,
            })
            .collect();
        Policy::from_choices(instance, &choices)
    }

    /// Every toggle off, every one-of decision on its lowest-index edge.
    pub fn all_off(instance: &GproInstance) -> Policy {
        Policy::from_choices(instance, &vec![0; instance.decisions.len()])
    }

    /// Builds a policy from one choice per decision point.
    ///
    /// Panics if a choice is out of range for its decision.
    pub fn from_choices(instance: &GproInstance, choices: &[usize]) -> Policy {
        assert_eq!(choices.len(), instance.decisions.len());
        let mut active: Vec<bool> = instance.edges.iter().map(|e| !e.free).collect();
        for (d, &c) in instance.decisions.iter().zip(choices) {
            assert!(c < d.arity(), "choice {c} out of range for {d:?}");
            match d.kind {
                DecisionKind::Toggle => active[d.edges[0]] = c == 1,
                DecisionKind::OneOf => active[d.edges[c]] = true,
            }
        }
        Policy { active }
    }

    /// Activates exactly the given free edges.
    pub fn from_active(instance: &GproInstance, free_active: &[EdgeId]) -> Result<Policy> {
        let mut active: Vec<bool> = instance.edges.iter().map(|e| !e.free).collect();
        for &e in free_active {
            if e >= active.len() {
                return Err(Error::InfeasiblePolicy(format!("edge {e} does not exist")));
            }
            if !instance.edges[e].free {
                return Err(Error::NotFree { edge: e });
            }
            active[e] = true;
        }
        let policy = Policy { active };
        policy.choices(instance)?;
        Ok(policy)
    }

    pub fn is_active(&self, edge: EdgeId) -> bool {
        self.active[edge]
    }

    /// Active free edges in index order.
    pub fn active_free(&self, instance: &GproInstance) -> Vec<EdgeId> {
        instance.free_edges().filter(|&e| self.active[e]).collect()
    }

    /// The choice vector, or an error when the policy breaks a one-of rule.
    pub fn choices(&self, instance: &GproInstance) -> Result<Vec<usize>> {
        if self.active.len() != instance.edges.len() {
            return Err(Error::InfeasiblePolicy(format!(
                "policy covers {} edges, instance has {}",
                self.active.len(),
                instance.edges.len()
            )));
        }
        for (e, edge) in instance.edges.iter().enumerate() {
            if !edge.free && !self.active[e] {
                return Err(Error::InfeasiblePolicy(format!("fixed edge {e} is inactive")));
            }
        }
        instance
            .decisions
            .iter()
            .map(|d| match d.kind {
                DecisionKind::Toggle => Ok(usize::from(self.active[d.edges[0]])),
                DecisionKind::OneOf => {
                    let on: Vec<usize> = (0..d.edges.len())
                        .filter(|&i| self.active[d.edges[i]])
                        .collect();
                    if on.len() == 1 {
                        Ok(on[0])
                    } else {
                        Err(Error::InfeasiblePolicy(format!(
                            "node {} must activate exactly one of {:?}, has {}",
                            d.node,
                            d.edges,
                            on.len()
                        )))
                    }
                }
            })
            .collect()
    }

    pub fn is_feasible(&self, instance: &GproInstance) -> bool {
        self.choices(instance).is_ok()
    }

    /// `'1'`/`'0'` per free edge, in edge-index order.
    pub fn bitstring(&self, instance: &GproInstance) -> String {
        instance
            .free_edges()
            .map(|e| if self.active[e] { '1' } else { '0' })
            .collect()
    }

    /// Free edges whose state differs between the two policies.
    pub fn diff(&self, other: &Policy) -> Vec<EdgeId> {
        (0..self.active.len())
            .filter(|&e| self.active[e] != other.active[e])
            .collect()
    }

    pub fn to_file(&self, instance: &GproInstance) -> PolicyFile {
        PolicyFile {
            active: self.active_free(instance),
        }
    }
}

// ---------------------------------------------------------------------------
// JSON formats

/// A number given either as a JSON number or as a decimal / `p/q` string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Number {
    Float(f64),
    Text(String),
}

impl Number {
    fn value(&self) -> Result<f64> {
        match self {
            Number::Float(x) => Ok(*x),
            Number::Text(s) => parse_number(s),
        }
    }
}

pub(crate) fn parse_number(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::Malformed(format!("cannot parse number {s:?}"));
    if let Some((p, q)) = s.split_once('/') {
        let p: f64 = p.trim().parse().map_err(|_| bad())?;
        let q: f64 = q.trim().parse().map_err(|_| bad())?;
        return Ok(p / q);
    }
    s.parse().map_err(|_| bad())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct EdgeRecord {
    from: NodeId,
    to: NodeId,
    weight: Number,
    cost: Number,
    #[serde(default)]
    free: bool,
}

/// On-disk instance format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    nodes: Vec<String>,
    v_s: NodeId,
    v_t: NodeId,
    edges: Vec<EdgeRecord>,
    #[serde(default)]
    exclusivity: Vec<[EdgeId; 2]>,
    #[serde(default)]
    zapping: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    zap_restart: Option<Restart>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    zap_cost: Option<Number>,
}

/// On-disk policy format: the active free edges.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub active: Vec<EdgeId>,
}

impl GproInstance {
    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            nodes: self.names.clone(),
            v_s: self.start,
            v_t: self.target,
            edges: self
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    from: e.from,
                    to: e.to,
                    weight: Number::Float(e.weight),
                    cost: Number::Float(e.cost),
                    free: e.free,
                })
                .collect(),
            exclusivity: self.exclusivity.clone(),
            zapping: self.zapping.map(|z| Number::Float(z.probability)),
            zap_restart: self
                .zapping
                .filter(|z| z.restart != Restart::AllNodes)
                .map(|z| z.restart),
            zap_cost: self
                .zapping
                .filter(|z| z.cost != 1.0)
                .map(|z| Number::Float(z.cost)),
        }
    }

    pub fn from_file(file: &InstanceFile) -> Result<Self> {
        let edges = file
            .edges
            .iter()
            .map(|r| {
                Ok(Edge {
                    from: r.from,
                    to: r.to,
                    weight: r.weight.value()?,
                    cost: r.cost.value()?,
                    free: r.free,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let zapping = match &file.zapping {
            None => None,
            Some(c) => Some(Zapping {
                probability: c.value()?,
                restart: file.zap_restart.unwrap_or_default(),
                cost: file.zap_cost.as_ref().map(Number::value).transpose()?.unwrap_or(1.0),
            }),
        };
        GproInstance::new(
            file.nodes.clone(),
            file.v_s,
            file.v_t,
            edges,
            file.exclusivity.clone(),
            zapping,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        GproInstance::from_file(&file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn minimal() -> GproInstance {
        let edges = vec![Edge::fixed(0, 1), Edge::fixed(1, 1).with_cost(0.0)];
        GproInstance::new(vec!["s".into(), "t".into()], 0, 1, edges, vec![], None).unwrap()
    }

    #[test]
    fn minimal_instance_is_valid() {
        assert!(validate(&minimal()).is_empty());
    }

    #[test]
    fn negative_weight_is_reported_with_location() {
        let edges = vec![
            Edge::fixed(0, 1).with_weight(-1.0),
            Edge::fixed(1, 1).with_cost(0.0),
        ];
        let inst = GproInstance::new(vec!["s".into(), "t".into()], 0, 1, edges, vec![], None).unwrap();
        let v = validate(&inst);
        assert_eq!(v[0], Violation::NegativeWeight { edge: 0, from: 0, to: 1 });
        // the unusable edge also strands the start
        assert_eq!(v[1..], [Violation::Improper { node: 0 }]);
    }

    #[test]
    fn stranded_node_under_all_off_policy_is_improper() {
        // u = 1 has a fixed self-loop and a free edge to t: switching the
        // free edge off traps the walk at u.
        let edges = vec![
            Edge::fixed(0, 1),
            Edge::fixed(1, 1),
            Edge::free(1, 2),
            Edge::fixed(2, 2).with_cost(0.0),
        ];
        let inst = GproInstance::new(vec!["s".into(), "u".into(), "t".into()], 0, 2, edges, vec![], None)
            .unwrap();
        // reachability oracle: BFS over fixed edges only
        let mut reach_t = [false, false, true];
        for _ in 0..3 {
            for e in inst.edges().iter().filter(|e| !e.free) {
                if reach_t[e.to] {
                    reach_t[e.from] = true;
                }
            }
        }
        assert!(!reach_t[1] && !reach_t[0]);
        let v = validate(&inst);
        assert!(v.contains(&Violation::Improper { node: 1 }));
        assert!(v.contains(&Violation::Improper { node: 0 }));
    }

    #[test]
    fn split_of_single_looping_node() {
        let mut g = Digraph::new(1);
        g.add_edge(Edge::fixed(0, 0));
        let (inst, map) = split_target(&g, 0).unwrap();
        assert_eq!(inst.n(), 2);
        assert_eq!((map.start, map.target), (0, 1));
        assert_eq!(inst.edges()[0], Edge::fixed(0, 1));
        assert_eq!(inst.edges()[1], Edge::fixed(1, 1).with_cost(0.0));
        assert!(validate(&inst).is_empty());
    }

    #[test]
    fn split_of_three_cycle() {
        // a=0 -> b=1 -> v=2 -> a
        let mut g = Digraph::new(3);
        g.add_edge(Edge::fixed(0, 1));
        g.add_edge(Edge::fixed(1, 2));
        g.add_edge(Edge::fixed(2, 0));
        let (inst, _) = split_target(&g, 2).unwrap();
        let got: BTreeSet<(usize, usize)> = inst.edges().iter().map(|e| (e.from, e.to)).collect();
        let want: BTreeSet<(usize, usize)> = [(0, 1), (1, 3), (2, 0), (3, 3)].into_iter().collect();
        assert_eq!(got, want);
        assert_eq!(inst.n(), 4);
        assert!(validate(&inst).is_empty());
    }

    #[test]
    fn split_redirects_parallel_paths() {
        let mut g = Digraph::new(4);
        for u in 1..4 {
            g.add_edge(Edge::fixed(u, 0));
            g.add_edge(Edge::fixed(0, u));
        }
        let (inst, map) = split_target(&g, 0).unwrap();
        assert_eq!(inst.edges().len(), g.edges.len() + 1);
        assert!(inst.edges().iter().all(|e| e.to != map.start));
        assert_eq!(inst.edges().iter().filter(|e| e.to == map.target).count(), 4);
        assert_eq!(inst.out_edges(map.start).len(), 3);
    }

    #[test]
    fn split_rejects_isolated_target() {
        let mut g = Digraph::new(2);
        g.add_edge(Edge::fixed(0, 1));
        assert!(split_target(&g, 0).is_err());
        assert!(split_target(&g, 1).is_err());
    }

    #[test]
    fn repair_connects_sink_to_every_other_node() {
        let mut g = Digraph::new(5);
        for u in 0..4 {
            g.add_edge(Edge::fixed(u, (u + 1) % 4));
        }
        let r = g.repair_dangling(DanglingRepair::ConnectToAll);
        assert_eq!(r.edges.iter().filter(|e| e.from == 4).count(), 4);
        assert_eq!(r.repair_dangling(DanglingRepair::ConnectToAll), r);
    }

    #[test]
    fn repair_of_two_dangling_components_reaches_target() {
        // {0 <- 1} and {2 <- 3} with 0 and 2 dangling; target 0
        let mut g = Digraph::new(4);
        g.add_edge(Edge::fixed(1, 0));
        g.add_edge(Edge::fixed(3, 2));
        let r = g.repair_dangling(DanglingRepair::ConnectToAll);
        let (inst, _) = split_target(&r, 0).unwrap();
        assert!(improper_nodes(&inst).is_empty());
        assert!(validate(&inst).is_empty());
    }

    #[test]
    fn canonical_pro_rewrites_weights_and_costs() {
        let edges = vec![
            Edge::fixed(0, 1).with_weight(3.0).with_cost(2.5),
            Edge::free(0, 2).with_weight(0.5),
            Edge::fixed(1, 2).with_cost(7.0),
            Edge::fixed(2, 2).with_cost(0.0),
        ];
        let inst = GproInstance::new(
            vec!["s".into(), "a".into(), "t".into()],
            0,
            2,
            edges,
            vec![],
            Some(Zapping::new(0.15)),
        )
        .unwrap();
        let c = canonical_pro(&inst);
        assert!(c.edges().iter().all(|e| e.weight == 1.0));
        assert_eq!(c.edges().iter().map(|e| e.cost).collect::<Vec<_>>(), vec![1.0, 1.0, 1.0, 0.0]);
        assert_eq!(c.zapping().unwrap().probability, 0.15);
        assert_eq!(c.free_count(), inst.free_count());
        assert_eq!(canonical_pro(&c), c);
    }

    fn paired() -> GproInstance {
        // s -> {a, b} exclusive; a, b -> t
        let edges = vec![
            Edge::free(0, 1),
            Edge::free(0, 2),
            Edge::fixed(1, 3),
            Edge::fixed(2, 3).with_cost(3.0),
            Edge::fixed(3, 3).with_cost(0.0),
        ];
        GproInstance::new(
            vec!["s".into(), "a".into(), "b".into(), "t".into()],
            0,
            3,
            edges,
            vec![[0, 1]],
            None,
        )
        .unwrap()
    }

    #[test]
    fn epsilon_emulation_builds_free_plus_fixed() {
        let inst = paired();
        let em = epsilon_exclusivity_emulation(&inst, 0, 1e-3).unwrap();
        assert!(em.exclusivity().is_empty());
        assert!(em.edge(0).free && em.edge(0).weight == 1.0);
        assert!(!em.edge(1).free && em.edge(1).weight == 1e-3);
        assert_eq!(em.decisions().len(), 1);
        assert_eq!(em.decisions()[0].kind, DecisionKind::Toggle);
        assert!(epsilon_exclusivity_emulation(&inst, 0, 0.0).is_err());
        assert!(epsilon_exclusivity_emulation(&inst, 0, -1.0).is_err());
    }

    #[test]
    fn exclusivity_violations() {
        let mut edges = paired().edges().to_vec();
        edges.push(Edge::fixed(0, 3));
        let inst = paired().with_edges(edges, vec![[0, 1]]).unwrap();
        assert!(matches!(validate(&inst)[0], Violation::Exclusivity { pair: 0, .. }));
    }

    #[test]
    fn policy_choices_round_trip() {
        let inst = paired();
        assert_eq!(inst.decisions().len(), 1);
        assert_eq!(inst.policy_count(), 2.0);
        let p = Policy::from_choices(&inst, &[1]);
        assert_eq!(p.active_free(&inst), vec![1]);
        assert_eq!(p.choices(&inst).unwrap(), vec![1]);
        assert!(Policy::from_active(&inst, &[0, 1]).is_err());
        assert!(Policy::from_active(&inst, &[]).is_err());
        assert!(matches!(Policy::from_active(&inst, &[2]), Err(Error::NotFree { edge: 2 })));
    }

    #[test]
    fn json_accepts_decimal_strings() {
        let text = r#"{
            "nodes": ["s", "t"], "v_s": 0, "v_t": 1,
            "edges": [
                {"from": 0, "to": 1, "weight": "0.1", "cost": "1/3", "free": false},
                {"from": 1, "to": 1, "weight": 1, "cost": 0}
            ],
            "exclusivity": [], "zapping": null
        }"#;
        let inst = GproInstance::from_json(text).unwrap();
        assert_eq!(inst.edge(0).weight, 0.1);
        assert_eq!(inst.edge(0).cost, 1.0 / 3.0);
        assert!(validate(&inst).is_empty());
        assert_eq!(GproInstance::from_json(&inst.to_json()).unwrap(), inst);
    }

    #[test]
    fn zapping_round_trips_with_options() {
        let inst = minimal().with_zapping(Some(Zapping {
            probability: 0.15,
            restart: Restart::ExcludeStart,
            cost: 2.0,
        }));
        let back = GproInstance::from_json(&inst.to_json()).unwrap();
        assert_eq!(back, inst);
    }
}
