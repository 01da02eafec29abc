//! Exact policy evaluation.
//!
//! Transition probabilities are the active out-weights of a node,
//! normalized. With zapping probability `c`, every non-target row becomes
//! `(1 - c) * normalized + c * restart`, where `restart` is uniform over the
//! restart set; the restart term is never materialized; the solves treat it
//! as a rank-one update.

use std::io::Write;

use crate::error::{Error, Result};
use crate::gpro::{GproInstance, NodeId, Policy, Zapping};
use crate::sparse::{self, CscMatrix, SparseLu};
use crate::tolerance;

/// One outgoing transition of the non-restart part of a row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub to: NodeId,
    pub prob: f64,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq)]
struct Restarts {
    c: f64,
    cost: f64,
    /// restart probability per node, summing to one
    dist: Vec<f64>,
}

/// Row-stochastic transition matrix of an instance under a policy.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    target: NodeId,
    /// Normalized active edges per row (parallel edges kept separate).
    rows: Vec<Vec<Step>>,
    zap: Option<Restarts>,
}

pub fn transition_matrix(instance: &GproInstance, policy: &Policy) -> Result<TransitionMatrix> {
    policy.choices(instance)?;
    let n = instance.n();
    let target = instance.target();
    let mut rows = Vec::with_capacity(n);
    for node in 0..n {
        if node == target {
            rows.push(vec![Step {
                to: target,
                prob: 1.0,
                cost: 0.0,
            }]);
            continue;
        }
        let active: Vec<_> = instance
            .out_edges(node)
            .iter()
            .filter(|&&e| policy.is_active(e))
            .map(|&e| instance.edge(e))
            .filter(|e| e.weight > 0.0)
            .collect();
        let total: f64 = active.iter().map(|e| e.weight).sum();
        if active.is_empty() || !(total > 0.0) {
            return Err(Error::NoActiveOutEdge { node });
        }
        rows.push(
            active
                .iter()
                .map(|e| Step {
                    to: e.to,
                    prob: e.weight / total,
                    cost: e.cost,
                })
                .collect(),
        );
    }
    let zap = instance.zapping().map(|z| restarts(z, instance));
    Ok(TransitionMatrix { target, rows, zap })
}

fn restarts(z: &Zapping, instance: &GproInstance) -> Restarts {
    let n = instance.n();
    let share = 1.0 / z.restart_count(n) as f64;
    Restarts {
        c: z.probability,
        cost: z.cost,
        dist: (0..n)
            .map(|j| if z.restarts_at(j, instance.start()) { share } else { 0.0 })
            .collect(),
    }
}

impl TransitionMatrix {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn target(&self) -> NodeId {
        self.target
    }

    /// Non-restart transitions of `row`, probabilities summing to one.
    pub fn local_row(&self, row: NodeId) -> &[Step] {
        &self.rows[row]
    }

    /// Restart probability `c` (0 without zapping).
    pub fn zapping(&self) -> f64 {
        self.zap.as_ref().map_or(0.0, |z| z.c)
    }

    fn zap_weight(&self, row: NodeId) -> f64 {
        if row == self.target {
            0.0
        } else {
            self.zapping()
        }
    }

    /// Entry `Q[i][j]`.
    pub fn get(&self, i: NodeId, j: NodeId) -> f64 {
        let c = self.zap_weight(i);
        let local: f64 = self.rows[i].iter().filter(|s| s.to == j).map(|s| s.prob).sum();
        let restart = self.zap.as_ref().map_or(0.0, |z| z.dist[j]);
        (1.0 - c) * local + c * restart
    }

    pub fn row_sum(&self, i: NodeId) -> f64 {
        (0..self.n()).map(|j| self.get(i, j)).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| (0..self.n()).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// `sum_j Q[i][j] * K[i][j] * g[j]`, restart jumps charged the restart
    /// cost.
    pub fn weighted_cost(&self, i: NodeId, g: &[f64]) -> f64 {
        let c = self.zap_weight(i);
        let local: f64 = self.rows[i].iter().map(|s| s.prob * s.cost * g[s.to]).sum();
        let restart = match &self.zap {
            Some(z) if c > 0.0 => z.cost * z.dist.iter().zip(g).map(|(p, x)| p * x).sum::<f64>(),
            _ => 0.0,
        };
        (1.0 - c) * local + c * restart
    }

    /// Expected immediate cost of leaving `i`.
    pub fn expected_cost(&self, i: NodeId) -> f64 {
        let ones = vec![1.0; self.n()];
        self.weighted_cost(i, &ones)
    }

    /// Expected cost-to-target through the non-restart part of row `i`:
    /// `sum_j q_ij (K_ij + phi_j)`. Without zapping this equals `phi_i`.
    pub fn local_value(&self, i: NodeId, phi: &[f64]) -> f64 {
        self.rows[i].iter().map(|s| s.prob * (s.cost + phi[s.to])).sum()
    }

    /// `(Q x)_i`.
    pub fn apply(&self, i: NodeId, x: &[f64]) -> f64 {
        let c = self.zap_weight(i);
        let local: f64 = self.rows[i].iter().map(|s| s.prob * x[s.to]).sum();
        let restart = match &self.zap {
            Some(z) if c > 0.0 => z.dist.iter().zip(x).map(|(p, v)| p * v).sum::<f64>(),
            _ => 0.0,
        };
        (1.0 - c) * local + c * restart
    }

    /// Writes `Q` as CSV rows `i,j,q` (nonzero entries only).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,q")?;
        for i in 0..self.n() {
            for j in 0..self.n() {
                let q = self.get(i, j);
                if q != 0.0 {
                    writeln!(w, "{i},{j},{q}")?;
                }
            }
        }
        Ok(())
    }
}

/// Linear system `(I - Q_TT) x = r` over the transient nodes `T` of a chain
/// in which the given nodes are absorbing.
struct AbsorbingSystem<'a> {
    tm: &'a TransitionMatrix,
    /// transient index of each node, `usize::MAX` if absorbing
    index: Vec<usize>,
    nodes: Vec<NodeId>,
    /// `B = I - (1 - c) P_TT`
    b: CscMatrix,
    lu: SparseLu,
    /// `B^{-1} (c 1)` and `1 - z_T^T B^{-1} (c 1)` for the restart update
    rank_one: Option<(Vec<f64>, f64, Vec<f64>)>,
}

impl<'a> AbsorbingSystem<'a> {
    fn new(tm: &'a TransitionMatrix, absorbing: &[NodeId]) -> Result<Self> {
        let n = tm.n();
        let mut index = vec![usize::MAX; n];
        let mut nodes = Vec::new();
        for i in 0..n {
            if !absorbing.contains(&i) {
                index[i] = nodes.len();
                nodes.push(i);
            }
        }
        let m = nodes.len();
        let c = tm.zapping();
        let mut triplets = Vec::with_capacity(m * 3);
        for (ti, &i) in nodes.iter().enumerate() {
            triplets.push((ti, ti, 1.0));
            for s in &tm.rows[i] {
                let tj = index[s.to];
                if tj != usize::MAX {
                    triplets.push((ti, tj, -(1.0 - c) * s.prob));
                }
            }
        }
        let b = CscMatrix::from_triplets(m, &triplets);
        let lu = SparseLu::factor(&b)?;
        let rank_one = match &tm.zap {
            Some(z) if c > 0.0 => {
                let u = vec![c; m];
                let bu = sparse::refine(&b, &lu, &u);
                let zt: Vec<f64> = nodes.iter().map(|&i| z.dist[i]).collect();
                let denom = 1.0 - zt.iter().zip(&bu).map(|(p, x)| p * x).sum::<f64>();
                if denom.abs() <= 1e-14 {
                    return Err(Error::Singular);
                }
                Some((bu, denom, zt))
            }
            _ => None,
        };
        Ok(AbsorbingSystem {
            tm,
            index,
            nodes,
            b,
            lu,
            rank_one,
        })
    }

    fn apply_inverse(&self, r: &[f64]) -> Vec<f64> {
        let mut x = sparse::refine(&self.b, &self.lu, r);
        if let Some((bu, denom, zt)) = &self.rank_one {
            let coef = zt.iter().zip(&x).map(|(p, v)| p * v).sum::<f64>() / denom;
            for (xi, ui) in x.iter_mut().zip(bu) {
                *xi += coef * ui;
            }
        }
        x
    }

    /// `(I - Q_TT) x`
    fn apply_operator(&self, x: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.tm.n()];
        for (ti, &i) in self.nodes.iter().enumerate() {
            full[i] = x[ti];
        }
        self.nodes
            .iter()
            .enumerate()
            .map(|(ti, &i)| x[ti] - self.tm.apply(i, &full))
            .collect()
    }

    /// Solves with one refinement step and checks the residual.
    fn solve(&self, r: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.apply_inverse(r);
        let ax = self.apply_operator(&x);
        let resid: Vec<f64> = r.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let d = self.apply_inverse(&resid);
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi += di;
        }
        let ax = self.apply_operator(&x);
        let residual = r
            .iter()
            .zip(&ax)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        let bound = tolerance::scaled(tolerance::RESIDUAL, sparse::inf_norm(&x));
        if !residual.is_finite() || !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Singular);
        }
        if residual > bound {
            return Err(Error::Residual {
                residual,
                tolerance: bound,
            });
        }
        Ok(x)
    }

    fn scatter(&self, x: &[f64], fill: &[f64]) -> Vec<f64> {
        let mut out = fill.to_vec();
        for (ti, &i) in self.nodes.iter().enumerate() {
            out[i] = x[ti];
        }
        out
    }
}

/// Expected accumulated cost from each node to the target.
#[derive(Clone, Debug, PartialEq)]
pub struct HittingTimes {
    pub phi: Vec<f64>,
}

impl HittingTimes {
    pub fn get(&self, node: NodeId) -> f64 {
        self.phi[node]
    }
}

/// First hitting times of the target under `policy`.
pub fn hitting_times(instance: &GproInstance, policy: &Policy) -> Result<HittingTimes> {
    let tm = transition_matrix(instance, policy)?;
    hitting_times_of(&tm)
}

/// First hitting times for an already-built transition matrix.
pub fn hitting_times_of(tm: &TransitionMatrix) -> Result<HittingTimes> {
    let target = tm.target();
    let sys = AbsorbingSystem::new(tm, &[target])?;
    let rhs: Vec<f64> = sys.nodes.iter().map(|&i| tm.expected_cost(i)).collect();
    let x = sys.solve(&rhs)?;
    Ok(HittingTimes {
        phi: sys.scatter(&x, &vec![0.0; tm.n()]),
    })
}

/// Stationary distribution of the chain with `v_s` and `v_t` merged back
/// into the original target node.
#[derive(Clone, Debug, PartialEq)]
pub struct PageRank {
    /// Indexed by instance node; the merged node's score is stored at
    /// `v_s`, and `v_t` holds 0.
    pub scores: Vec<f64>,
    /// `|pi Q - pi|_inf` of the merged chain.
    pub residual: f64,
}

impl PageRank {
    pub fn of(&self, node: NodeId) -> f64 {
        self.scores[node]
    }
}

pub fn pagerank(instance: &GproInstance, policy: &Policy) -> Result<PageRank> {
    let tm = transition_matrix(instance, policy)?;
    pagerank_of(&tm, instance.start())
}

pub fn pagerank_of(tm: &TransitionMatrix, start: NodeId) -> Result<PageRank> {
    let n = tm.n();
    let target = tm.target();
    // merged index: drop the target, send its column to the start node
    let merged = |j: NodeId| -> usize {
        let j = if j == target { start } else { j };
        if j > target {
            j - 1
        } else {
            j
        }
    };
    let m = n - 1;
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for i in (0..n).filter(|&i| i != target) {
        for s in &tm.rows[i] {
            rows[merged(i)].push((merged(s.to), s.prob));
        }
    }
    let c = tm.zapping();
    let mut restart = vec![0.0; m];
    if let Some(z) = &tm.zap {
        for (j, &p) in z.dist.iter().enumerate() {
            restart[merged(j)] += p;
        }
    }

    let pi = if c > 0.0 {
        // pi = c z^T (I - (1-c) P)^{-1}
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            triplets.push((i, i, 1.0));
            for &(j, p) in row {
                triplets.push((j, i, -(1.0 - c) * p));
            }
        }
        let a = CscMatrix::from_triplets(m, &triplets);
        let rhs: Vec<f64> = restart.iter().map(|z| c * z).collect();
        let lu = SparseLu::factor(&a)?;
        sparse::refine(&a, &lu, &rhs)
    } else {
        if let Some(node) = unreachable_in_merged(&rows, merged(start)) {
            // report in instance numbering
            let node = if node >= target { node + 1 } else { node };
            return Err(Error::Reducible { node });
        }
        // (I - P)^T pi = 0 with the merged node's equation replaced by sum(pi) = 1
        let anchor = merged(start);
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if i != anchor {
                triplets.push((i, i, 1.0));
            }
            for &(j, p) in row {
                if j != anchor {
                    triplets.push((j, i, -p));
                }
            }
        }
        for i in 0..m {
            triplets.push((anchor, i, 1.0));
        }
        let a = CscMatrix::from_triplets(m, &triplets);
        let mut rhs = vec![0.0; m];
        rhs[anchor] = 1.0;
        let lu = SparseLu::factor(&a).map_err(|_| Error::Reducible { node: start })?;
        sparse::refine(&a, &lu, &rhs)
    };

    // residual of pi Q = pi on the merged chain
    let mut next = vec![0.0; m];
    let mass: f64 = pi.iter().sum();
    for (i, row) in rows.iter().enumerate() {
        for &(j, p) in row {
            next[j] += (1.0 - c) * pi[i] * p;
        }
    }
    for (j, z) in restart.iter().enumerate() {
        next[j] += c * mass * z;
    }
    let residual = next
        .iter()
        .zip(&pi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let mut scores = vec![0.0; n];
    for i in (0..n).filter(|&i| i != target) {
        scores[i] = pi[merged(i)];
    }
    Ok(PageRank { scores, residual })
}

/// A merged-chain node that is not mutually reachable with `root`.
fn unreachable_in_merged(rows: &[Vec<(usize, f64)>], root: usize) -> Option<usize> {
    let m = rows.len();
    let search = |forward: bool| {
        let mut adj = vec![Vec::new(); m];
        for (i, row) in rows.iter().enumerate() {
            for &(j, p) in row {
                if p > 0.0 {
                    if forward {
                        adj[i].push(j);
                    } else {
                        adj[j].push(i);
                    }
                }
            }
        }
        let mut seen = vec![false; m];
        let mut stack = vec![root];
        seen[root] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    };
    let fwd = search(true);
    let bwd = search(false);
    (0..m).find(|&i| !(fwd[i] && bwd[i]))
}

/// Split of `phi_u` according to whether the walk from `u` meets `w`
/// before the target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decomposition {
    /// Probability of reaching the target without visiting `w`.
    pub p_uv: f64,
    /// Mean cost of the `w`-avoiding paths (0 when `p_uv = 0`).
    pub phi_uv: f64,
    /// Mean cost from `u` to the first visit of `w`, given that `w` is
    /// visited (0 when `p_uv = 1`).
    pub phi_uw: f64,
    pub phi_u: f64,
    pub phi_w: f64,
}

impl Decomposition {
    pub fn p_uw(&self) -> f64 {
        1.0 - self.p_uv
    }

    /// `p_uv phi_uv + (1 - p_uv)(phi_uw + phi_w)`
    pub fn reconstruct(&self) -> f64 {
        self.p_uv * self.phi_uv + self.p_uw() * (self.phi_uw + self.phi_w)
    }

    pub fn reconstruction_error(&self) -> f64 {
        (self.phi_u - self.reconstruct()).abs()
    }
}

pub fn decompose(instance: &GproInstance, policy: &Policy, u: NodeId, w: NodeId) -> Result<Decomposition> {
    let tm = transition_matrix(instance, policy)?;
    decompose_of(&tm, u, w)
}

pub fn decompose_of(tm: &TransitionMatrix, u: NodeId, w: NodeId) -> Result<Decomposition> {
    let target = tm.target();
    if u == w || u == target || w == target || u >= tm.n() || w >= tm.n() {
        return Err(Error::Malformed(format!(
            "decomposition needs distinct non-target nodes, got u={u}, w={w}"
        )));
    }
    let phi = hitting_times_of(tm)?.phi;
    let sys = AbsorbingSystem::new(tm, &[w, target]).map_err(|e| match e {
        Error::Singular => Error::Degenerate { u, w },
        other => other,
    })?;
    let n = tm.n();

    // h = P(target before w)
    let mut boundary = vec![0.0; n];
    boundary[target] = 1.0;
    let rhs: Vec<f64> = sys.nodes.iter().map(|&i| tm.apply(i, &boundary)).collect();
    let h = sys.scatter(&sys.solve(&rhs)?, &boundary);
    let g: Vec<f64> = h.iter().map(|x| 1.0 - x).collect();

    // cost accumulated on the way to each absorbing node
    let rhs_a: Vec<f64> = sys.nodes.iter().map(|&i| tm.weighted_cost(i, &h)).collect();
    let rhs_b: Vec<f64> = sys.nodes.iter().map(|&i| tm.weighted_cost(i, &g)).collect();
    let a = sys.solve(&rhs_a)?;
    let b = sys.solve(&rhs_b)?;
    let ti = sys.index[u];
    let p_uv = h[u].clamp(0.0, 1.0);
    let p_uw = 1.0 - p_uv;
    if !(p_uv > 0.0) && !(p_uw > 0.0) {
        return Err(Error::Degenerate { u, w });
    }
    let phi_uv = if p_uv > 0.0 { a[ti] / p_uv } else { 0.0 };
    let phi_uw = if p_uw > 0.0 { b[ti] / p_uw } else { 0.0 };
    Ok(Decomposition {
        p_uv,
        phi_uv,
        phi_uw,
        phi_u: phi[u],
        phi_w: phi[w],
    })
}

/// Writes `node,phi` rows.
pub fn write_phi_csv<W: Write>(phi: &HittingTimes, mut w: W) -> Result<()> {
    writeln!(w, "node,phi")?;
    for (i, x) in phi.phi.iter().enumerate() {
        writeln!(w, "{i},{x}")?;
    }
    Ok(())
}
