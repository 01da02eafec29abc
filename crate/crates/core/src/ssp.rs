//! Stochastic shortest path problems.
//!
//! States carry lists of actions; each action is a sparse distribution over
//! successor states with a cost per transition. The target state is
//! absorbing and cost-free. Policies pick one action per state.

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{self, CscMatrix};
use crate::tolerance;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub to: usize,
    #[serde(rename = "p")]
    pub prob: f64,
    #[serde(rename = "c")]
    pub cost: f64,
}

impl Transition {
    pub fn new(to: usize, prob: f64, cost: f64) -> Self {
        Transition { to, prob, cost }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action {
    pub transitions: Vec<Transition>,
}

impl Action {
    pub fn new(transitions: Vec<Transition>) -> Self {
        Action { transitions }
    }

    pub fn deterministic(to: usize, cost: f64) -> Self {
        Action::new(vec![Transition::new(to, 1.0, cost)])
    }

    /// Moves to a single successor with probability one.
    pub fn is_deterministic(&self) -> bool {
        let support: Vec<_> = self.transitions.iter().filter(|t| t.prob > 0.0).collect();
        support.len() == 1 && support[0].prob == 1.0
    }

    pub fn expected_cost(&self) -> f64 {
        self.transitions.iter().map(|t| t.prob * t.cost).sum()
    }

    /// `sum_s' p (c + values[s'])`
    pub fn q_value(&self, values: &[f64]) -> f64 {
        self.transitions.iter().map(|t| t.prob * (t.cost + values[t.to])).sum()
    }

    /// Merges transitions to the same successor; the merged cost keeps the
    /// expected cost unchanged.
    pub fn merged(&self) -> Action {
        let mut ts: Vec<Transition> = self.transitions.iter().copied().filter(|t| t.prob > 0.0).collect();
        ts.sort_by_key(|t| t.to);
        let mut out: Vec<Transition> = Vec::with_capacity(ts.len());
        for t in ts {
            match out.last_mut() {
                Some(last) if last.to == t.to => {
                    let p = last.prob + t.prob;
                    last.cost = (last.prob * last.cost + t.prob * t.cost) / p;
                    last.prob = p;
                }
                _ => out.push(t),
            }
        }
        Action::new(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SspInstance {
    names: Vec<String>,
    target: usize,
    actions: Vec<Vec<Action>>,
}

/// One action index per state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SspPolicy(pub Vec<usize>);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SspViolation {
    NoActions { state: usize },
    BadProbabilities { state: usize, action: usize, sum: f64 },
    NegativeProbability { state: usize, action: usize },
    NonFiniteCost { state: usize, action: usize },
    TargetNotAbsorbing { action: usize },
    /// Some policy never reaches the target from `state`.
    Improper { state: usize },
}

impl SspInstance {
    pub fn new(names: Vec<String>, target: usize, actions: Vec<Vec<Action>>) -> Result<Self> {
        let n = names.len();
        if actions.len() != n {
            return Err(Error::Malformed(format!(
                "{} action lists for {n} states",
                actions.len()
            )));
        }
        if target >= n {
            return Err(Error::Malformed(format!("target {target} out of range")));
        }
        for (s, list) in actions.iter().enumerate() {
            for a in list {
                if let Some(t) = a.transitions.iter().find(|t| t.to >= n) {
                    return Err(Error::Malformed(format!(
                        "state {s} has a transition to missing state {}",
                        t.to
                    )));
                }
            }
        }
        Ok(SspInstance {
            names,
            target,
            actions,
        })
    }

    /// Unnamed states `0..n`.
    pub fn unnamed(target: usize, actions: Vec<Vec<Action>>) -> Result<Self> {
        let names = (0..actions.len()).map(|i| format!("s{i}")).collect();
        SspInstance::new(names, target, actions)
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn actions(&self, state: usize) -> &[Action] {
        &self.actions[state]
    }

    pub fn all_actions(&self) -> &[Vec<Action>] {
        &self.actions
    }

    /// Total number of actions over non-target states (`m`).
    pub fn action_count(&self) -> usize {
        (0..self.n())
            .filter(|&s| s != self.target)
            .map(|s| self.actions[s].len())
            .sum()
    }

    pub fn max_actions(&self) -> usize {
        self.actions.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Number of distinct policies.
    pub fn policy_count(&self) -> f64 {
        (0..self.n())
            .filter(|&s| s != self.target)
            .map(|s| self.actions[s].len() as f64)
            .product()
    }

    pub fn first_policy(&self) -> SspPolicy {
        SspPolicy(vec![0; self.n()])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SspFile {
            states: self.names.clone(),
            target: self.target,
            actions: self.actions.clone(),
        })
        .expect("ssp serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SspFile = serde_json::from_str(text)?;
        SspInstance::new(file.states, file.target, file.actions)
    }
}

/// On-disk SSP format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SspFile {
    pub states: Vec<String>,
    pub target: usize,
    pub actions: Vec<Vec<Action>>,
}

pub fn validate(ssp: &SspInstance) -> Vec<SspViolation> {
    let mut v = Vec::new();
    for s in 0..ssp.n() {
        if ssp.actions[s].is_empty() {
            v.push(SspViolation::NoActions { state: s });
        }
        for (a, action) in ssp.actions[s].iter().enumerate() {
            if action.transitions.iter().any(|t| t.prob < 0.0 || !t.prob.is_finite()) {
                v.push(SspViolation::NegativeProbability { state: s, action: a });
            }
            let sum: f64 = action.transitions.iter().map(|t| t.prob).sum();
            if (sum - 1.0).abs() > tolerance::ROW_SUM {
                v.push(SspViolation::BadProbabilities { state: s, action: a, sum });
            }
            if action.transitions.iter().any(|t| !t.cost.is_finite()) {
                v.push(SspViolation::NonFiniteCost { state: s, action: a });
            }
            if s == ssp.target
                && action
                    .transitions
                    .iter()
                    .any(|t| t.prob > 0.0 && (t.to != s || t.cost != 0.0))
            {
                v.push(SspViolation::TargetNotAbsorbing { action: a });
            }
        }
    }
    for state in improper_states(ssp) {
        v.push(SspViolation::Improper { state });
    }
    v
}

/// States from which some policy avoids the target forever.
pub fn improper_states(ssp: &SspInstance) -> Vec<usize> {
    let n = ssp.n();
    let mut safe = vec![false; n];
    safe[ssp.target] = true;
    loop {
        let mut changed = false;
        for s in 0..n {
            if safe[s] || ssp.actions[s].is_empty() {
                continue;
            }
            let ok = ssp.actions[s]
                .iter()
                .all(|a| a.transitions.iter().any(|t| t.prob > 0.0 && safe[t.to]));
            if ok {
                safe[s] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (0..n).filter(|&s| !safe[s]).collect()
}

/// Cost-to-target of every state under `policy` (`J[target] = 0`).
pub fn evaluate(ssp: &SspInstance, policy: &SspPolicy) -> Result<Vec<f64>> {
    let n = ssp.n();
    let t = ssp.target;
    if policy.0.len() != n {
        return Err(Error::InfeasiblePolicy(format!(
            "policy has {} entries for {n} states",
            policy.0.len()
        )));
    }
    let mut index = vec![usize::MAX; n];
    let nodes: Vec<usize> = (0..n).filter(|&s| s != t).collect();
    for (k, &s) in nodes.iter().enumerate() {
        index[s] = k;
    }
    let mut triplets = Vec::new();
    let mut rhs = Vec::with_capacity(nodes.len());
    for (k, &s) in nodes.iter().enumerate() {
        let a = ssp.actions[s]
            .get(policy.0[s])
            .ok_or_else(|| Error::InfeasiblePolicy(format!("state {s} has no action {}", policy.0[s])))?;
        triplets.push((k, k, 1.0));
        for tr in &a.transitions {
            if index[tr.to] != usize::MAX {
                triplets.push((k, index[tr.to], -tr.prob));
            }
        }
        rhs.push(a.expected_cost());
    }
    let m = CscMatrix::from_triplets(nodes.len(), &triplets);
    let x = sparse::solve_refined(&m, &rhs)?;
    let ax = m.mul_vec(&x);
    let residual = ax.iter().zip(&rhs).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    let bound = tolerance::scaled(tolerance::RESIDUAL, sparse::inf_norm(&x));
    if !residual.is_finite() {
        return Err(Error::Singular);
    }
    if residual > bound {
        return Err(Error::Residual {
            residual,
            tolerance: bound,
        });
    }
    let mut values = vec![0.0; n];
    for (k, &s) in nodes.iter().enumerate() {
        values[s] = x[k];
    }
    Ok(values)
}

/// Greedy one-step lookahead: in every state, the action with the least
/// Q-value; the current action is kept when within tolerance of the best.
pub fn improve(ssp: &SspInstance, policy: &SspPolicy, values: &[f64]) -> SspPolicy {
    let choice = (0..ssp.n())
        .map(|s| {
            let actions = &ssp.actions[s];
            if s == ssp.target || actions.len() <= 1 {
                return policy.0[s];
            }
            let q: Vec<f64> = actions.iter().map(|a| a.q_value(values)).collect();
            let best = q.iter().copied().fold(f64::INFINITY, f64::min);
            let ok = |x: f64| x <= best + tolerance::scaled(tolerance::COMPARE, best);
            if ok(q[policy.0[s]]) {
                policy.0[s]
            } else {
                (0..q.len()).find(|&a| ok(q[a])).unwrap()
            }
        })
        .collect();
    SspPolicy(choice)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PiResult {
    pub policy: SspPolicy,
    pub values: Vec<f64>,
    /// Evaluations performed, the confirming one included.
    pub iterations: usize,
}

/// Howard's policy iteration with all-state greedy improvement.
pub fn policy_iteration(ssp: &SspInstance, initial: &SspPolicy) -> Result<PiResult> {
    let mut policy = initial.clone();
    let mut seen = HashSet::new();
    let mut iterations = 0;
    loop {
        let values = evaluate(ssp, &policy)?;
        iterations += 1;
        let next = improve(ssp, &policy, &values);
        if next == policy {
            return Ok(PiResult {
                policy,
                values,
                iterations,
            });
        }
        if !seen.insert(policy.clone()) || seen.contains(&next) {
            return Err(Error::NoConvergence {
                cap: iterations,
                change: f64::NAN,
            });
        }
        policy = next;
    }
}

#[derive(Clone, Debug)]
pub struct ViOptions {
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Starting values; zero when absent.
    pub initial: Option<Vec<f64>>,
}

impl Default for ViOptions {
    fn default() -> Self {
        ViOptions {
            epsilon: tolerance::VALUE_ITERATION,
            max_iterations: 1_000_000,
            initial: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViResult {
    pub values: Vec<f64>,
    /// Bellman updates applied.
    pub iterations: usize,
    /// Greedy policy with respect to the final values.
    pub policy: SspPolicy,
    /// Sup-norm change of every update, in order.
    pub changes: Vec<f64>,
}

/// Synchronous value iteration until the sup-norm change of one Bellman
/// update is at most `epsilon`.
pub fn value_iteration(ssp: &SspInstance, options: &ViOptions) -> Result<ViResult> {
    let n = ssp.n();
    let mut values = options.initial.clone().unwrap_or_else(|| vec![0.0; n]);
    values[ssp.target] = 0.0;
    let mut changes = Vec::new();
    for iteration in 1..=options.max_iterations {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                if s == ssp.target {
                    0.0
                } else {
                    ssp.actions[s]
                        .iter()
                        .map(|a| a.q_value(&values))
                        .fold(f64::INFINITY, f64::min)
                }
            })
            .collect();
        let change = next
            .iter()
            .zip(&values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        values = next;
        changes.push(change);
        if change <= options.epsilon {
            let policy = improve(ssp, &ssp.first_policy(), &values);
            return Ok(ViResult {
                values,
                iterations: iteration,
                policy,
                changes,
            });
        }
    }
    Err(Error::NoConvergence {
        cap: options.max_iterations,
        change: changes.last().copied().unwrap_or(f64::NAN),
    })
}

/// Quantities that parameterize value-iteration convergence bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SspParameters {
    pub states: usize,
    pub actions: usize,
    /// Smallest nonzero transition probability.
    pub eta: f64,
    /// Bits needed to write every probability and cost as a fraction.
    pub delta: u64,
    /// Largest shortest-path step count between a non-target state and any
    /// state it can reach.
    pub diameter: usize,
}

pub fn parameters(ssp: &SspInstance) -> SspParameters {
    let mut eta = f64::INFINITY;
    let mut delta = 0u64;
    for list in &ssp.actions {
        for a in list {
            for t in &a.transitions {
                if t.prob > 0.0 {
                    eta = eta.min(t.prob);
                }
                delta += rational_bits(t.prob) + rational_bits(t.cost);
            }
        }
    }
    SspParameters {
        states: ssp.n(),
        actions: ssp.action_count(),
        eta,
        delta,
        diameter: diameter(ssp),
    }
}

/// `n^2 ln(n delta) / c`, the shape of the iteration bound under zapping.
pub fn zapping_bound_shape(n: usize, delta: u64, c: f64) -> f64 {
    let n = n as f64;
    n * n * (n * delta as f64).max(1.0).ln() / c
}

fn diameter(ssp: &SspInstance) -> usize {
    let n = ssp.n();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|s| {
            let mut next: Vec<usize> = ssp.actions[s]
                .iter()
                .flat_map(|a| a.transitions.iter().filter(|t| t.prob > 0.0).map(|t| t.to))
                .collect();
            next.sort_unstable();
            next.dedup();
            next
        })
        .collect();
    let mut worst = 0;
    for s in (0..n).filter(|&s| s != ssp.target) {
        let mut dist = vec![usize::MAX; n];
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    worst = worst.max(dist[v]);
                    queue.push_back(v);
                }
            }
        }
    }
    worst
}

/// Bits of the best fraction `p/q` with `q <= 2^20` approximating `x`.
fn rational_bits(x: f64) -> u64 {
    let (p, q) = best_fraction(x.abs(), 1 << 20);
    let bits = |v: u64| u64::from(64 - v.max(1).leading_zeros());
    1 + bits(p) + bits(q)
}

fn best_fraction(x: f64, max_den: u64) -> (u64, u64) {
    // continued-fraction convergents
    let (mut h0, mut h1) = (0u64, 1u64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a > 1e15 {
            break;
        }
        let a = a as u64;
        let h2 = a.saturating_mul(h1).saturating_add(h0);
        let k2 = a.saturating_mul(k1).saturating_add(k0);
        if k2 > max_den {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a as f64;
        if frac < 1e-12 {
            break;
        }
        r = 1.0 / frac;
    }
    (h1, k1.max(1))
}
