//! PageRank Iteration: policy iteration specialised to free-edge
//! activation.
//!
//! Each round evaluates the current policy exactly, then switches
//! simultaneously every free edge whose switch would improve its source
//! node's hitting time. Maximizing the target's PageRank means minimizing
//! `phi[v_s]`; minimizing the PageRank reverses every comparison.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpro::{DecisionKind, EdgeId, GproInstance, Policy};
use crate::hitting::{self, HittingTimes};
use crate::tolerance;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    /// Maximize the target's PageRank (minimize `phi[v_s]`).
    #[default]
    #[serde(alias = "max")]
    MaximizePagerank,
    /// Minimize the target's PageRank (maximize `phi[v_s]`).
    #[serde(alias = "min")]
    MinimizePagerank,
}

impl Sense {
    /// `a` is strictly better than `b` beyond the comparison tolerance.
    pub fn better(self, a: f64, b: f64) -> bool {
        let margin = tolerance::scaled(tolerance::COMPARE, a.abs().max(b.abs()));
        match self {
            Sense::MaximizePagerank => a < b - margin,
            Sense::MinimizePagerank => a > b + margin,
        }
    }

    /// `a` is at least as good as `b` up to tolerance.
    pub fn at_least_as_good(self, a: f64, b: f64) -> bool {
        !self.better(b, a)
    }

    /// Best of two objective values.
    pub fn pick(self, a: f64, b: f64) -> f64 {
        match self {
            Sense::MaximizePagerank => a.min(b),
            Sense::MinimizePagerank => a.max(b),
        }
    }

    pub fn parse(s: &str) -> Option<Sense> {
        match s {
            "max" | "maximize" | "maximize_pagerank" => Some(Sense::MaximizePagerank),
            "min" | "minimize" | "minimize_pagerank" => Some(Sense::MinimizePagerank),
            _ => None,
        }
    }
}

/// `sum_j q_ij (K_ij + phi_j)` over the active edges of every node: the
/// part of `phi_i` a policy controls. Without zapping this is `phi_i`
/// itself (and 0 at the target).
pub fn local_values(instance: &GproInstance, policy: &Policy, phi: &HittingTimes) -> Vec<f64> {
    (0..instance.n())
        .map(|i| {
            if i == instance.target() {
                return 0.0;
            }
            let (mut num, mut den) = (0.0, 0.0);
            for &e in instance.out_edges(i) {
                if policy.is_active(e) {
                    let edge = instance.edge(e);
                    num += edge.weight * (edge.cost + phi.phi[edge.to]);
                    den += edge.weight;
                }
            }
            if den > 0.0 {
                num / den
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

/// One greedy improvement step.
///
/// * A toggle edge `(i, j)` is active in the result iff
///   `psi_i >= K_ij + phi_j` (maximization), where `psi_i` is the local
///   value of `i`; within tolerance the edge is activated, as in the
///   non-strict rule.
/// * A one-of decision moves to the edge minimizing `K + phi_head`,
///   staying put when the current edge is within tolerance of the best and
///   otherwise taking the lowest-index edge among the co-best.
pub fn greedy_improve(instance: &GproInstance, policy: &Policy, phi: &HittingTimes, sense: Sense) -> Policy {
    let psi = local_values(instance, policy, phi);
    let current = policy
        .choices(instance)
        .expect("greedy step requires a feasible policy");
    let candidate = |e: EdgeId| {
        let edge = instance.edge(e);
        edge.cost + phi.phi[edge.to]
    };
    let choices: Vec<usize> = instance
        .decisions()
        .iter()
        .zip(&current)
        .map(|(d, &cur)| match d.kind {
            DecisionKind::Toggle => {
                let x = candidate(d.edges[0]);
                usize::from(sense.at_least_as_good(x, psi[d.node]))
            }
            DecisionKind::OneOf => {
                let values: Vec<f64> = d.edges.iter().map(|&e| candidate(e)).collect();
                let best = values.iter().copied().reduce(|a, b| sense.pick(a, b)).unwrap();
                if sense.at_least_as_good(values[cur], best) {
                    cur
                } else {
                    (0..values.len())
                        .find(|&k| sense.at_least_as_good(values[k], best))
                        .unwrap()
                }
            }
        })
        .collect();
    Policy::from_choices(instance, &choices)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    /// A policy repeated or the iteration guard was exceeded.
    GuardTripped,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriStep {
    pub policy: Policy,
    pub phi: Vec<f64>,
    /// Edges switched when moving to the next policy (empty on the last
    /// step of a converged run).
    pub switched: Vec<EdgeId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriTrace {
    pub sense: Sense,
    pub steps: Vec<PriStep>,
    pub termination: Termination,
}

impl PriTrace {
    /// Number of evaluate/improve rounds, the confirming round included.
    pub fn evaluations(&self) -> usize {
        self.steps.len()
    }

    /// Number of rounds that changed the policy.
    pub fn improvements(&self) -> usize {
        self.steps.iter().filter(|s| !s.switched.is_empty()).count()
    }

    pub fn final_policy(&self) -> &Policy {
        &self.steps.last().expect("trace is never empty").policy
    }

    pub fn final_phi(&self) -> &[f64] {
        &self.steps.last().expect("trace is never empty").phi
    }

    pub fn objective(&self, instance: &GproInstance) -> f64 {
        self.final_phi()[instance.start()]
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    /// Policy-changing rounds after which no switched edge keeps its new
    /// state until the end (rounds that make no final decision).
    pub fn rounds_without_final_decision(&self) -> Vec<usize> {
        let rounds = self.steps.len().saturating_sub(1);
        let mut last_switch = std::collections::HashMap::new();
        for (k, step) in self.steps.iter().enumerate() {
            for &e in &step.switched {
                last_switch.insert(e, k);
            }
        }
        (0..rounds)
            .filter(|&k| {
                let sw = &self.steps[k].switched;
                !sw.is_empty() && !sw.iter().any(|e| last_switch[e] == k)
            })
            .collect()
    }

    pub fn to_file(&self, instance: &GproInstance) -> TraceFile {
        TraceFile {
            sense: self.sense,
            free_edges: instance.free_edges().collect(),
            termination: self.termination,
            evaluations: self.evaluations(),
            improvements: self.improvements(),
            iterations: self
                .steps
                .iter()
                .map(|s| TraceRecord {
                    policy: s.policy.bitstring(instance),
                    phi: s.phi.clone(),
                    switched: s.switched.clone(),
                })
                .collect(),
        }
    }
}

/// JSON export of a trace: policies as bitstrings over `free_edges`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub sense: Sense,
    pub free_edges: Vec<EdgeId>,
    pub termination: Termination,
    pub evaluations: usize,
    pub improvements: usize,
    pub iterations: Vec<TraceRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub policy: String,
    pub phi: Vec<f64>,
    pub switched: Vec<EdgeId>,
}

/// Default iteration guard `2^f + 1`.
pub fn default_guard(instance: &GproInstance) -> usize {
    let f = instance.free_count();
    if f >= usize::BITS as usize - 1 {
        usize::MAX
    } else {
        (1usize << f).saturating_add(1)
    }
}

/// Runs PageRank Iteration from `initial` until the policy is a fixpoint.
///
/// Every hitting time must move in the direction of `sense` from one round
/// to the next; a violation is a numerical fault and aborts with
/// [`Error::NonMonotone`].
pub fn solve(instance: &GproInstance, initial: &Policy, sense: Sense, guard: usize) -> Result<PriTrace> {
    initial.choices(instance)?;
    let mut policy = initial.clone();
    let mut seen = HashSet::new();
    let mut steps: Vec<PriStep> = Vec::new();
    loop {
        let phi = hitting::hitting_times(instance, &policy)?;
        if let Some(prev) = steps.last() {
            for (&before, &after) in prev.phi.iter().zip(&phi.phi) {
                if sense.better(before, after) {
                    return Err(Error::NonMonotone {
                        iteration: steps.len(),
                        before,
                        after,
                    });
                }
            }
        }
        let next = greedy_improve(instance, &policy, &phi, sense);
        let switched = policy.diff(&next);
        seen.insert(policy.clone());
        let done = switched.is_empty();
        steps.push(PriStep {
            policy,
            phi: phi.phi,
            switched,
        });
        if done {
            return Ok(PriTrace {
                sense,
                steps,
                termination: Termination::Converged,
            });
        }
        if steps.len() >= guard || seen.contains(&next) {
            return Ok(PriTrace {
                sense,
                steps,
                termination: Termination::GuardTripped,
            });
        }
        policy = next;
    }
}

/// [`solve`] from the default initial policy with the default guard.
pub fn solve_default(instance: &GproInstance, sense: Sense) -> Result<PriTrace> {
    solve(instance, &Policy::initial(instance), sense, default_guard(instance))
}

/// A feasible policy drawn uniformly per decision point.
pub fn random_policy<R: Rng + ?Sized>(instance: &GproInstance, rng: &mut R) -> Policy {
    let choices: Vec<usize> = instance
        .decisions()
        .iter()
        .map(|d| rng.gen_range(0..d.arity()))
        .collect();
    Policy::from_choices(instance, &choices)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    /// Iterations per run ([`iterations_of`]), in input order.
    pub counts: Vec<usize>,
    pub max: usize,
    pub mean: f64,
    /// Indices of runs whose count exceeds the number of free edges.
    pub exceeding_f: Vec<usize>,
    pub free_edges: usize,
}

/// Runs [`solve`] from each initial policy and summarizes iteration
/// counts.
pub fn iteration_count(instance: &GproInstance, starts: &[Policy], sense: Sense) -> Result<IterationStats> {
    let f = instance.free_count();
    let guard = default_guard(instance);
    let counts = starts
        .iter()
        .map(|p| solve(instance, p, sense, guard).map(|t| iterations_of(&t)))
        .collect::<Result<Vec<_>>>()?;
    let max = counts.iter().copied().max().unwrap_or(0);
    let mean = if counts.is_empty() {
        0.0
    } else {
        counts.iter().sum::<usize>() as f64 / counts.len() as f64
    };
    let exceeding_f = (0..counts.len()).filter(|&i| counts[i] > f).collect();
    Ok(IterationStats {
        counts,
        max,
        mean,
        exceeding_f,
        free_edges: f,
    })
}

/// The iteration count compared against the `f` barrier: rounds that
/// changed the policy. The confirming evaluation of the final policy is not
/// counted, so a run that starts at the optimum takes zero iterations.
pub fn iterations_of(trace: &PriTrace) -> usize {
    trace.improvements()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpro::Edge;

    /// v_s -> t fixed, v_s -> a free, a -> t
    fn shortcut() -> GproInstance {
        GproInstance::new(
            vec!["s".into(), "a".into(), "t".into()],
            0,
            2,
            vec![
                Edge::fixed(0, 2),
                Edge::free(0, 1),
                Edge::fixed(1, 2),
                Edge::fixed(2, 2).with_cost(0.0),
            ],
            vec![],
            None,
        )
        .unwrap()
    }

    #[test]
    fn greedy_drops_a_detour() {
        let inst = shortcut();
        let on = Policy::initial(&inst);
        let phi = hitting::hitting_times(&inst, &on).unwrap();
        assert!((phi.phi[0] - 1.5).abs() < 1e-12);
        // 1.5 >= 1 + 1 is false
        let next = greedy_improve(&inst, &on, &phi, Sense::MaximizePagerank);
        assert!(!next.is_active(1));
        let worse = greedy_improve(&inst, &on, &phi, Sense::MinimizePagerank);
        assert!(worse.is_active(1));
    }

    #[test]
    fn exact_tie_activates() {
        // s -> t (cost 2) fixed and s -> a free with a -> t: phi_s = 2 when
        // the free edge is off, and K + phi_a = 1 + 1 = 2.
        let inst = GproInstance::new(
            vec!["s".into(), "a".into(), "t".into()],
            0,
            2,
            vec![
                Edge::fixed(0, 2).with_cost(2.0),
                Edge::free(0, 1),
                Edge::fixed(1, 2),
                Edge::fixed(2, 2).with_cost(0.0),
            ],
            vec![],
            None,
        )
        .unwrap();
        let off = Policy::all_off(&inst);
        let phi = hitting::hitting_times(&inst, &off).unwrap();
        assert_eq!(phi.phi[0], 2.0);
        assert_eq!(phi.phi[1] + 1.0, 2.0);
        let next = greedy_improve(&inst, &off, &phi, Sense::MaximizePagerank);
        assert!(next.is_active(1));
        // and the activated policy is a fixpoint
        let phi2 = hitting::hitting_times(&inst, &next).unwrap();
        assert_eq!(greedy_improve(&inst, &next, &phi2, Sense::MaximizePagerank), next);
    }

    #[test]
    fn no_free_edges_single_round() {
        let inst = GproInstance::new(
            vec!["s".into(), "t".into()],
            0,
            1,
            vec![Edge::fixed(0, 1), Edge::fixed(1, 1).with_cost(0.0)],
            vec![],
            None,
        )
        .unwrap();
        let p = Policy::initial(&inst);
        let phi = hitting::hitting_times(&inst, &p).unwrap();
        assert_eq!(greedy_improve(&inst, &p, &phi, Sense::MaximizePagerank), p);
        let trace = solve_default(&inst, Sense::MaximizePagerank).unwrap();
        assert_eq!(trace.evaluations(), 1);
        assert_eq!(iterations_of(&trace), 0);
        assert_eq!(trace.final_policy(), &p);
    }

    #[test]
    fn shortcut_converges_in_two_rounds() {
        let inst = shortcut();
        let trace = solve_default(&inst, Sense::MaximizePagerank).unwrap();
        assert!(trace.converged());
        assert_eq!(trace.evaluations(), 2);
        assert_eq!(iterations_of(&trace), 1);
        assert!(!trace.final_policy().is_active(1));
        assert_eq!(trace.objective(&inst), 1.0);
        assert!(trace.rounds_without_final_decision().is_empty());
    }

    #[test]
    fn one_of_moves_to_nearest_head() {
        // s -> {a, b} one-of; a -> t direct, b -> c -> t
        let inst = GproInstance::new(
            ["s", "a", "b", "c", "t"].iter().map(|s| s.to_string()).collect(),
            0,
            4,
            vec![
                Edge::free(0, 2),
                Edge::free(0, 1),
                Edge::fixed(1, 4),
                Edge::fixed(2, 3),
                Edge::fixed(3, 4),
                Edge::fixed(4, 4).with_cost(0.0),
            ],
            vec![],
            None,
        )
        .unwrap();
        let trace = solve_default(&inst, Sense::MaximizePagerank).unwrap();
        assert!(trace.final_policy().is_active(1));
        assert!(!trace.final_policy().is_active(0));
        assert_eq!(trace.objective(&inst), 2.0);
        let worst = solve_default(&inst, Sense::MinimizePagerank).unwrap();
        assert_eq!(worst.objective(&inst), 3.0);
    }

    #[test]
    fn trace_file_records_bitstrings() {
        let inst = shortcut();
        let trace = solve_default(&inst, Sense::MaximizePagerank).unwrap();
        let file = trace.to_file(&inst);
        assert_eq!(file.free_edges, vec![1]);
        assert_eq!(file.iterations[0].policy, "1");
        assert_eq!(file.iterations[1].policy, "0");
        let text = serde_json::to_string(&file).unwrap();
        let back: TraceFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, file);
    }
}
