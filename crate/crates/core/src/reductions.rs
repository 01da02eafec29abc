//! Value-preserving reductions between stochastic shortest path problems
//! and instances with free edges.
//!
//! Every reduction returns a [`ReductionMap`] that relates decision points
//! of the original and the derived problem. For an SSP a decision point is
//! a state and its choice is an action index; for a [`GproInstance`] it is
//! an entry of [`GproInstance::decisions`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpro::{DecisionKind, Edge, GproInstance, NodeId};
use crate::ssp::{Action, SspInstance, Transition};

/// Joint choices of a group of original decision points and derived
/// choices realizing them. `None` marks a derived point whose choice does
/// not matter.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceRow {
    pub original: Vec<usize>,
    pub derived: Vec<Option<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceLink {
    pub original: Vec<usize>,
    pub derived: Vec<usize>,
    pub rows: Vec<ChoiceRow>,
}

impl ChoiceLink {
    fn identity(original: usize, derived: usize, arity: usize) -> Self {
        ChoiceLink {
            original: vec![original],
            derived: vec![derived],
            rows: (0..arity)
                .map(|a| ChoiceRow {
                    original: vec![a],
                    derived: vec![Some(a)],
                })
                .collect(),
        }
    }
}

/// One reduction step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionStage {
    pub original_points: usize,
    pub derived_points: usize,
    pub links: Vec<ChoiceLink>,
    /// For every original state or node, the derived ones standing for it;
    /// the first carries its value.
    pub state_map: Vec<Vec<usize>>,
}

/// A chain of reduction steps, applied in order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionMap {
    pub stages: Vec<ReductionStage>,
}

impl ReductionStage {
    fn forward(&self, choices: &[usize]) -> Result<Vec<usize>> {
        check_len("original", choices.len(), self.original_points)?;
        let mut out = vec![0; self.derived_points];
        for link in &self.links {
            let key: Vec<usize> = link.original.iter().map(|&p| choices[p]).collect();
            let row = link
                .rows
                .iter()
                .find(|r| r.original == key)
                .ok_or_else(|| Error::InfeasiblePolicy(format!("no derived choice for {key:?}")))?;
            for (&p, c) in link.derived.iter().zip(&row.derived) {
                out[p] = c.unwrap_or(0);
            }
        }
        Ok(out)
    }

    fn backward(&self, choices: &[usize]) -> Result<Vec<usize>> {
        check_len("derived", choices.len(), self.derived_points)?;
        let mut out = vec![0; self.original_points];
        for link in &self.links {
            let row = link
                .rows
                .iter()
                .find(|r| {
                    link.derived
                        .iter()
                        .zip(&r.derived)
                        .all(|(&p, c)| c.is_none_or(|c| c == choices[p]))
                })
                .ok_or_else(|| {
                    Error::InfeasiblePolicy(format!("derived choices at {:?} match no original choice", link.derived))
                })?;
            for (&p, &c) in link.original.iter().zip(&row.original) {
                out[p] = c;
            }
        }
        Ok(out)
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::InfeasiblePolicy(format!(
            "{what} choice vector has {got} entries, expected {want}"
        )))
    }
}

impl ReductionMap {
    fn single(stage: ReductionStage) -> Self {
        ReductionMap { stages: vec![stage] }
    }

    /// Applies `next` after `self`.
    pub fn then(mut self, next: ReductionMap) -> ReductionMap {
        self.stages.extend(next.stages);
        self
    }

    /// Derived choices realizing original `choices`.
    pub fn forward(&self, choices: &[usize]) -> Result<Vec<usize>> {
        self.stages
            .iter()
            .try_fold(choices.to_vec(), |c, stage| stage.forward(&c))
    }

    /// Original choices realized by derived `choices`.
    pub fn backward(&self, choices: &[usize]) -> Result<Vec<usize>> {
        self.stages
            .iter()
            .rev()
            .try_fold(choices.to_vec(), |c, stage| stage.backward(&c))
    }

    /// Derived state or node carrying the value of each original one.
    pub fn value_nodes(&self) -> Vec<usize> {
        self.state_map().iter().map(|s| s[0]).collect()
    }

    /// Composite correspondence of original to derived states or nodes.
    pub fn state_map(&self) -> Vec<Vec<usize>> {
        let Some(first) = self.stages.first() else {
            return Vec::new();
        };
        let mut map = first.state_map.clone();
        for stage in &self.stages[1..] {
            map = map
                .iter()
                .map(|ids| {
                    let mut out: Vec<usize> = Vec::new();
                    for &id in ids {
                        for &d in &stage.state_map[id] {
                            if !out.contains(&d) {
                                out.push(d);
                            }
                        }
                    }
                    out
                })
                .collect();
        }
        map
    }
}

fn identity_stage(ssp: &SspInstance, actions: &[Vec<Action>]) -> ReductionStage {
    let n = ssp.n();
    ReductionStage {
        original_points: n,
        derived_points: actions.len(),
        links: (0..n)
            .filter(|&s| ssp.actions(s).len() > 1)
            .map(|s| ChoiceLink::identity(s, s, ssp.actions(s).len()))
            .collect(),
        state_map: (0..n).map(|s| vec![s]).collect(),
    }
}

/// Replaces every state with `k >= 3` actions by a chain of `k - 1`
/// two-action states joined by zero-cost moves: state `u_i` either takes
/// original action `i` or passes to `u_{i+1}`, and the last one chooses
/// between the final two actions.
pub fn split_multiaction(ssp: &SspInstance) -> Result<(SspInstance, ReductionMap)> {
    let n = ssp.n();
    let mut actions: Vec<Vec<Action>> = ssp.all_actions().to_vec();
    let mut names = ssp.names().to_vec();
    let mut stage = identity_stage(ssp, &actions);
    stage.links.retain(|l| ssp.actions(l.original[0]).len() <= 2);
    for s in 0..n {
        let k = ssp.actions(s).len();
        if k <= 2 || s == ssp.target() {
            continue;
        }
        let original = ssp.actions(s);
        // chain states: s itself, then k - 2 new ones
        let mut chain = vec![s];
        for i in 1..k - 1 {
            chain.push(actions.len());
            names.push(format!("{}~{i}", ssp.names()[s]));
            actions.push(Vec::new());
        }
        for (i, &u) in chain.iter().enumerate() {
            actions[u] = if i + 1 < chain.len() {
                vec![original[i].clone(), Action::deterministic(chain[i + 1], 0.0)]
            } else {
                vec![original[i].clone(), original[i + 1].clone()]
            };
        }
        let rows = (0..k)
            .map(|j| {
                let derived = (0..chain.len())
                    .map(|i| {
                        if i < j.min(chain.len() - 1) {
                            Some(1)
                        } else if i == j {
                            Some(0)
                        } else if i == chain.len() - 1 && j == k - 1 {
                            Some(1)
                        } else {
                            None
                        }
                    })
                    .collect();
                ChoiceRow {
                    original: vec![j],
                    derived,
                }
            })
            .collect();
        stage.links.push(ChoiceLink {
            original: vec![s],
            derived: chain.clone(),
            rows,
        });
        stage.state_map[s] = chain;
    }
    stage.derived_points = actions.len();
    let out = SspInstance::new(names, ssp.target(), actions)?;
    Ok((out, ReductionMap::single(stage)))
}

/// Routes every probabilistic action of a two-action state through a new
/// single-action state reached deterministically at zero cost, so that all
/// choices are between deterministic moves.
pub fn split_probabilistic(ssp: &SspInstance) -> Result<(SspInstance, ReductionMap)> {
    let n = ssp.n();
    if let Some(s) = (0..n).find(|&s| s != ssp.target() && ssp.actions(s).len() > 2) {
        return Err(Error::Invalid(format!(
            "state {s} has {} actions; split multi-action states first",
            ssp.actions(s).len()
        )));
    }
    let mut actions: Vec<Vec<Action>> = ssp.all_actions().to_vec();
    let mut names = ssp.names().to_vec();
    let mut stage = identity_stage(ssp, &actions);
    for s in 0..n {
        if s == ssp.target() || ssp.actions(s).len() != 2 {
            continue;
        }
        for a in 0..2 {
            let action = &ssp.actions(s)[a];
            if action.is_deterministic() {
                continue;
            }
            let u = actions.len();
            names.push(format!("{}~a{a}", ssp.names()[s]));
            actions.push(vec![action.clone()]);
            actions[s][a] = Action::deterministic(u, 0.0);
            stage.state_map[s].push(u);
        }
    }
    stage.derived_points = actions.len();
    let out = SspInstance::new(names, ssp.target(), actions)?;
    Ok((out, ReductionMap::single(stage)))
}

/// Encodes an SSP in which every state has one action or two
/// deterministic ones. States keep their indices (the SSP target becomes
/// `v_t`) and a new start node with unit-weight zero-cost edges to every
/// other state is appended. A single action becomes fixed edges with
/// weight = probability and cost = transition cost; two deterministic
/// actions become an exclusive pair of free edges.
pub fn ssp_to_gpro(ssp: &SspInstance) -> Result<(GproInstance, ReductionMap)> {
    let n = ssp.n();
    let t = ssp.target();
    let start = n;
    let mut edges = Vec::new();
    let mut pairs = Vec::new();
    let mut paired_states = Vec::new();
    for s in 0..n {
        let list = ssp.actions(s);
        if s == t {
            edges.push(Edge::fixed(t, t).with_cost(0.0));
            continue;
        }
        match list.len() {
            0 => return Err(Error::Invalid(format!("state {s} has no actions"))),
            1 => {
                for tr in list[0].merged().transitions {
                    edges.push(Edge::fixed(s, tr.to).with_weight(tr.prob).with_cost(tr.cost));
                }
            }
            2 if list.iter().all(Action::is_deterministic) => {
                let first = edges.len();
                for a in list {
                    let tr = a.merged().transitions[0];
                    edges.push(Edge::free(s, tr.to).with_cost(tr.cost));
                }
                pairs.push([first, first + 1]);
                paired_states.push((s, first));
            }
            k => {
                return Err(Error::Invalid(format!(
                    "state {s} has {k} actions, not one or two deterministic ones"
                )))
            }
        }
    }
    let others: Vec<usize> = (0..n).filter(|&s| s != t).collect();
    if others.is_empty() {
        edges.push(Edge::fixed(start, t).with_cost(0.0));
    }
    for &s in &others {
        edges.push(Edge::fixed(start, s).with_cost(0.0));
    }
    let mut names = ssp.names().to_vec();
    names.push("v_s".to_string());
    let instance = GproInstance::new(names, start, t, edges, pairs, None)?;
    let links = paired_states
        .iter()
        .map(|&(s, e)| {
            let d = instance.decision_of_edge(e).expect("paired edge is a decision");
            ChoiceLink::identity(s, d, 2)
        })
        .collect();
    let stage = ReductionStage {
        original_points: n,
        derived_points: instance.decisions().len(),
        links,
        state_map: (0..n).map(|s| vec![s]).collect(),
    };
    Ok((instance, ReductionMap::single(stage)))
}

/// Full pipeline from an arbitrary SSP: multi-action splitting,
/// probabilistic splitting, then [`ssp_to_gpro`].
pub fn reduce_ssp(ssp: &SspInstance) -> Result<(GproInstance, ReductionMap)> {
    let (a, m1) = split_multiaction(ssp)?;
    let (b, m2) = split_probabilistic(&a)?;
    let (g, m3) = ssp_to_gpro(&b)?;
    Ok((g, m1.then(m2).then(m3)))
}

/// How free edges at nodes that also have fixed edges are encoded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// One auxiliary two-action state per such edge: the walk enters it with
    /// the edge's share of the node's total weight, then either exits along
    /// the edge (on) or returns to the node at zero cost (off). Exact without
    /// zapping; zapping instances are rejected.
    #[default]
    Gadget,
    /// One action per subset of the node's free edges, with the normalized
    /// and restart-mixed distribution of that subset. Exact with zapping,
    /// exponential in the free degree of a node.
    LocalSubsets,
}

/// Most free edges one node may carry under [`Encoding::LocalSubsets`].
pub const MAX_LOCAL_FREE: usize = 16;

/// Encodes an instance as an SSP with states `0..n` for its nodes
/// (`v_t` is the target) followed by any auxiliary states.
pub fn gpro_to_ssp(instance: &GproInstance, encoding: Encoding) -> Result<(SspInstance, ReductionMap)> {
    let n = instance.n();
    let t = instance.target();
    if encoding == Encoding::Gadget && instance.zapping().is_some() {
        return Err(Error::Unsupported(
            "the gadget encoding is inexact under zapping; use local subsets".into(),
        ));
    }
    let zap = instance.zapping().map(|z| {
        let share = 1.0 / z.restart_count(n) as f64;
        let dist: Vec<Transition> = (0..n)
            .filter(|&j| z.restarts_at(j, instance.start()))
            .map(|j| Transition::new(j, share, z.cost))
            .collect();
        (z.probability, dist)
    });
    // Distribution over `edges` normalized by weight, mixed with restarts.
    let mix = |edges: &[&Edge]| -> Action {
        let total: f64 = edges.iter().map(|e| e.weight).sum();
        let keep = zap.as_ref().map_or(1.0, |z| 1.0 - z.0);
        let mut ts: Vec<Transition> = edges
            .iter()
            .map(|e| Transition::new(e.to, keep * e.weight / total, e.cost))
            .collect();
        if let Some((c, dist)) = &zap {
            ts.extend(dist.iter().map(|d| Transition::new(d.to, c * d.prob, d.cost)));
        }
        Action::new(ts)
    };

    let mut names = instance.names().to_vec();
    let mut actions: Vec<Vec<Action>> = vec![Vec::new(); n];
    let mut links = Vec::new();
    for i in 0..n {
        if i == t {
            actions[i] = vec![Action::deterministic(t, 0.0)];
            continue;
        }
        let out = instance.out_edges(i);
        if out.is_empty() {
            return Err(Error::NoActiveOutEdge { node: i });
        }
        let fixed: Vec<&Edge> = out
            .iter()
            .map(|&e| instance.edge(e))
            .filter(|e| !e.free)
            .collect();
        let points: Vec<usize> = (0..instance.decisions().len())
            .filter(|&d| instance.decisions()[d].node == i)
            .collect();
        if points.is_empty() {
            actions[i] = vec![mix(&fixed)];
            continue;
        }
        let first = &instance.decisions()[points[0]];
        if first.kind == DecisionKind::OneOf {
            actions[i] = first.edges.iter().map(|&e| mix(&[instance.edge(e)])).collect();
            links.push(ChoiceLink::identity(points[0], i, first.arity()));
            continue;
        }
        match encoding {
            Encoding::Gadget => {
                let total: f64 = out.iter().map(|&e| instance.edge(e).weight).sum();
                let mut ts = Vec::new();
                for &e in out {
                    let edge = instance.edge(e);
                    let p = edge.weight / total;
                    if !edge.free {
                        ts.push(Transition::new(edge.to, p, edge.cost));
                        continue;
                    }
                    let aux = actions.len();
                    names.push(format!("{}~e{e}", instance.names()[i]));
                    actions.push(vec![
                        Action::deterministic(edge.to, edge.cost),
                        Action::deterministic(i, 0.0),
                    ]);
                    ts.push(Transition::new(aux, p, 0.0));
                    let d = instance.decision_of_edge(e).expect("free edge has a decision");
                    links.push(ChoiceLink {
                        original: vec![d],
                        derived: vec![aux],
                        rows: vec![
                            ChoiceRow {
                                original: vec![0],
                                derived: vec![Some(1)],
                            },
                            ChoiceRow {
                                original: vec![1],
                                derived: vec![Some(0)],
                            },
                        ],
                    });
                }
                actions[i] = vec![Action::new(ts)];
            }
            Encoding::LocalSubsets => {
                let k = points.len();
                if k > MAX_LOCAL_FREE {
                    return Err(Error::Unsupported(format!(
                        "node {i} has {k} free edges; local subsets allow at most {MAX_LOCAL_FREE}"
                    )));
                }
                let free: Vec<&Edge> = points
                    .iter()
                    .map(|&d| instance.edge(instance.decisions()[d].edges[0]))
                    .collect();
                let mut list = Vec::with_capacity(1 << k);
                let mut rows = Vec::with_capacity(1 << k);
                for mask in 0..1usize << k {
                    let mut active = fixed.clone();
                    active.extend((0..k).filter(|b| mask >> b & 1 == 1).map(|b| free[b]));
                    list.push(mix(&active));
                    rows.push(ChoiceRow {
                        original: (0..k).map(|b| mask >> b & 1).collect(),
                        derived: vec![Some(mask)],
                    });
                }
                actions[i] = list;
                links.push(ChoiceLink {
                    original: points,
                    derived: vec![i],
                    rows,
                });
            }
        }
    }
    let derived_points = actions.len();
    let ssp = SspInstance::new(names, t, actions)?;
    let stage = ReductionStage {
        original_points: instance.decisions().len(),
        derived_points,
        links,
        state_map: (0..n).map(|i| vec![i]).collect(),
    };
    Ok((ssp, ReductionMap::single(stage)))
}

/// Node of a [`ssp_to_gpro`] instance that carries the value of SSP state
/// `s`.
pub fn node_of_state(map: &ReductionMap, s: usize) -> NodeId {
    map.value_nodes()[s]
}
