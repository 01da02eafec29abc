//! Exhaustive policy enumeration, the ground truth for small instances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpro::{GproInstance, Policy};
use crate::hitting;
use crate::pri::Sense;
use crate::ssp::{self, SspInstance, SspPolicy};
use crate::tolerance;

/// Default cap on free edges for enumeration.
pub const DEFAULT_CAP: usize = 20;

/// Mixed-radix counter over choice vectors, first entry most significant.
#[derive(Clone, Debug)]
pub struct ChoiceCounter {
    radix: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl ChoiceCounter {
    pub fn new(radix: Vec<usize>) -> Self {
        let next = if radix.iter().all(|&r| r > 0) {
            Some(vec![0; radix.len()])
        } else {
            None
        };
        ChoiceCounter { radix, next }
    }
}

impl Iterator for ChoiceCounter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        for k in (0..succ.len()).rev() {
            succ[k] += 1;
            if succ[k] < self.radix[k] {
                self.next = Some(succ);
                return Some(current);
            }
            succ[k] = 0;
        }
        Some(current)
    }
}

/// Every feasible policy of `instance`, in lexicographic order of choice
/// vectors. Fails when the instance has more than `cap` free edges.
pub fn enumerate_policies(instance: &GproInstance, cap: usize) -> Result<impl Iterator<Item = Policy> + '_> {
    let f = instance.free_count();
    if f > cap {
        return Err(Error::TooManyPolicies {
            free: f,
            cap,
            count: instance.policy_count(),
        });
    }
    let radix = instance.decisions().iter().map(|d| d.arity()).collect();
    Ok(ChoiceCounter::new(radix).map(move |c| Policy::from_choices(instance, &c)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    /// Best `phi[v_s]` over all policies.
    pub optimum: f64,
    /// Policies attaining it within tolerance.
    pub argopt: Vec<Policy>,
    /// Best `phi` of every node over all policies.
    pub node_optima: Vec<f64>,
    pub evaluated: usize,
}

impl OracleResult {
    pub fn is_optimal(&self, value: f64) -> bool {
        (value - self.optimum).abs() <= tolerance::scaled(tolerance::OPTIMUM, self.optimum)
    }
}

/// Evaluates every policy and returns the best hitting time of `v_s` and of
/// each node. Evaluation failures name the offending policy.
pub fn brute_force_optimum(instance: &GproInstance, sense: Sense, cap: usize) -> Result<OracleResult> {
    let mut values = Vec::new();
    let mut node_optima: Option<Vec<f64>> = None;
    for policy in enumerate_policies(instance, cap)? {
        let phi = hitting::hitting_times(instance, &policy).map_err(|e| Error::PolicyEvaluation {
            policy: policy.bitstring(instance),
            source: Box::new(e),
        })?;
        node_optima = Some(match node_optima {
            None => phi.phi.clone(),
            Some(best) => best.iter().zip(&phi.phi).map(|(&a, &b)| sense.pick(a, b)).collect(),
        });
        values.push((phi.phi[instance.start()], policy));
    }
    let optimum = values
        .iter()
        .map(|v| v.0)
        .reduce(|a, b| sense.pick(a, b))
        .expect("at least one policy");
    let bound = tolerance::scaled(tolerance::OPTIMUM, optimum);
    let evaluated = values.len();
    let argopt = values
        .into_iter()
        .filter(|(v, _)| (v - optimum).abs() <= bound)
        .map(|(_, p)| p)
        .collect();
    Ok(OracleResult {
        optimum,
        argopt,
        node_optima: node_optima.unwrap_or_default(),
        evaluated,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SspOracle {
    /// Least cost of every state over all policies.
    pub values: Vec<f64>,
    /// A policy attaining the least cost of every state at once.
    pub policy: SspPolicy,
    pub evaluated: usize,
}

/// Evaluates every SSP policy. Fails when there are more than
/// `2^cap` policies.
pub fn ssp_brute_force(instance: &SspInstance, cap: usize) -> Result<SspOracle> {
    let count = instance.policy_count();
    if count > 2f64.powi(cap as i32) {
        return Err(Error::TooManyPolicies {
            free: instance.action_count(),
            cap,
            count,
        });
    }
    let radix = (0..instance.n())
        .map(|s| if s == instance.target() { 1 } else { instance.actions(s).len() })
        .collect();
    let mut best: Option<(Vec<f64>, SspPolicy)> = None;
    let mut values: Vec<f64> = Vec::new();
    let mut evaluated = 0;
    for choice in ChoiceCounter::new(radix) {
        let policy = SspPolicy(choice);
        let j = ssp::evaluate(instance, &policy).map_err(|e| Error::PolicyEvaluation {
            policy: format!("{:?}", policy.0),
            source: Box::new(e),
        })?;
        evaluated += 1;
        if values.is_empty() {
            values = j.clone();
        } else {
            for (v, x) in values.iter_mut().zip(&j) {
                *v = v.min(*x);
            }
        }
        let total: f64 = j.iter().sum();
        if best.as_ref().is_none_or(|(b, _)| total < b.iter().sum::<f64>()) {
            best = Some((j, policy));
        }
    }
    let (_, policy) = best.expect("at least one policy");
    Ok(SspOracle {
        values,
        policy,
        evaluated,
    })
}
