//! Dense reference computations built straight from edge lists, sharing no
//! code with the library's sparse evaluation path.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use pro_core::gpro::{GproInstance, Policy, Restart};
use pro_core::ssp::{SspInstance, SspPolicy};

pub fn fixture_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn load_fixture(name: &str) -> GproInstance {
    let text = std::fs::read_to_string(fixture_path(name)).unwrap();
    GproInstance::from_json(&text).unwrap()
}

/// Transition matrix and expected one-step cost per node.
pub fn dense_chain(instance: &GproInstance, policy: &Policy) -> (DMatrix<f64>, DVector<f64>) {
    let n = instance.n();
    let t = instance.target();
    let mut q = DMatrix::zeros(n, n);
    let mut r = DVector::zeros(n);
    let mut weight = vec![0.0; n];
    for (id, e) in instance.edges().iter().enumerate() {
        if e.from != t && (!e.free || policy.is_active(id)) {
            weight[e.from] += e.weight;
        }
    }
    let zap = instance.zapping().copied();
    let c = zap.map_or(0.0, |z| z.probability);
    for (id, e) in instance.edges().iter().enumerate() {
        if e.from == t || (e.free && !policy.is_active(id)) {
            continue;
        }
        let p = (1.0 - c) * e.weight / weight[e.from];
        q[(e.from, e.to)] += p;
        r[e.from] += p * e.cost;
    }
    if let Some(z) = zap {
        let targets: Vec<usize> = match z.restart {
            Restart::AllNodes => (0..n).collect(),
            Restart::ExcludeStart => (0..n).filter(|&j| j != instance.start()).collect(),
        };
        for i in (0..n).filter(|&i| i != t) {
            for &j in &targets {
                q[(i, j)] += c / targets.len() as f64;
            }
            r[i] += c * z.cost;
        }
    }
    q[(t, t)] = 1.0;
    (q, r)
}

/// `phi = (I - Q_TT)^{-1} r_T` over the non-target nodes.
pub fn dense_phi(instance: &GproInstance, policy: &Policy) -> Vec<f64> {
    let (q, r) = dense_chain(instance, policy);
    let t = instance.target();
    let keep: Vec<usize> = (0..instance.n()).filter(|&i| i != t).collect();
    let m = keep.len();
    let a = DMatrix::from_fn(m, m, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - q[(keep[i], keep[j])]
    });
    let b = DVector::from_fn(m, |i, _| r[keep[i]]);
    let x = a.lu().solve(&b).expect("nonsingular");
    let mut phi = vec![0.0; instance.n()];
    for (k, &i) in keep.iter().enumerate() {
        phi[i] = x[k];
    }
    phi
}

/// Stationary distribution of the chain with `v_t` folded into `v_s`,
/// reported per instance node (`v_t` gets 0).
pub fn dense_pagerank(instance: &GproInstance, policy: &Policy) -> Vec<f64> {
    let (q, _) = dense_chain(instance, policy);
    let (s, t) = (instance.start(), instance.target());
    let n = instance.n();
    let nodes: Vec<usize> = (0..n).filter(|&i| i != t).collect();
    let pos = |j: usize| nodes.iter().position(|&k| k == if j == t { s } else { j }).unwrap();
    let m = nodes.len();
    let mut p = DMatrix::zeros(m, m);
    for (a, &i) in nodes.iter().enumerate() {
        for j in 0..n {
            p[(a, pos(j))] += q[(i, j)];
        }
    }
    // (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1
    let mut a = p.transpose() - DMatrix::identity(m, m);
    let mut b = DVector::zeros(m);
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    b[m - 1] = 1.0;
    let pi = a.lu().solve(&b).expect("irreducible");
    let mut out = vec![0.0; n];
    for (k, &i) in nodes.iter().enumerate() {
        out[i] = pi[k];
    }
    out
}

/// Dense policy evaluation of an SSP.
pub fn dense_ssp_values(ssp: &SspInstance, policy: &SspPolicy) -> Vec<f64> {
    let n = ssp.n();
    let t = ssp.target();
    let keep: Vec<usize> = (0..n).filter(|&i| i != t).collect();
    let m = keep.len();
    let mut a = DMatrix::identity(m, m);
    let mut b = DVector::zeros(m);
    for (k, &s) in keep.iter().enumerate() {
        for tr in &ssp.actions(s)[policy.0[s]].transitions {
            b[k] += tr.prob * tr.cost;
            if let Some(j) = keep.iter().position(|&x| x == tr.to) {
                a[(k, j)] -= tr.prob;
            }
        }
    }
    let x = a.lu().solve(&b).expect("proper policy");
    let mut out = vec![0.0; n];
    for (k, &s) in keep.iter().enumerate() {
        out[s] = x[k];
    }
    out
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
