//! Seeded random instances: support graphs, free-edge placement, weighted
//! instances with exclusivity pairs, and random SSPs.
//!
//! Every generator takes a `u64` seed and is deterministic given it.
//! [`derive_seed`] turns a master seed and an index into independent
//! per-instance seeds.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpro::{self, DanglingRepair, Digraph, Edge, EdgeId, GproInstance, NodeId, Zapping};
use crate::ssp::{self, Action, SspInstance, Transition};

/// Attempts before a generator gives up on a constraint.
pub const MAX_ATTEMPTS: usize = 1000;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of the `index`-th instance drawn under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Directed G(n, p) with self-loops allowed; dangling nodes are linked to
/// every other node.
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Digraph {
    let mut rng = rng(seed);
    let mut g = Digraph::new(n);
    for u in 0..n {
        for v in 0..n {
            if rng.gen_bool(p.clamp(0.0, 1.0)) {
                g.add_edge(Edge::fixed(u, v));
            }
        }
    }
    g.repair_dangling(DanglingRepair::ConnectToAll)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawConfig {
    /// Exponent `gamma` of `P(d) ~ d^-gamma`.
    pub exponent: f64,
    pub min_degree: usize,
}

impl Default for PowerLawConfig {
    fn default() -> Self {
        PowerLawConfig {
            exponent: 2.5,
            min_degree: 1,
        }
    }
}

/// Draws from `P(d) ~ d^-gamma` on `min..=max`.
pub fn sample_power_law_degree<R: Rng + ?Sized>(rng: &mut R, gamma: f64, min: usize, max: usize) -> usize {
    let weights: Vec<f64> = (min..=max).map(|d| (d as f64).powf(-gamma)).collect();
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        if x < *w {
            return min + k;
        }
        x -= w;
    }
    max
}

/// Directed graph with power-law out- and in-degree propensities: each
/// node draws an out-degree, and each out-stub is wired to a distinct head
/// chosen with probability proportional to that head's drawn in-degree.
pub fn power_law(n: usize, config: &PowerLawConfig, seed: u64) -> Result<Digraph> {
    if n == 0 || config.min_degree == 0 || config.min_degree > n || config.exponent <= 0.0 {
        return Err(Error::Generator(format!("bad power-law parameters for n={n}: {config:?}")));
    }
    let mut rng = rng(seed);
    let out: Vec<usize> = (0..n)
        .map(|_| sample_power_law_degree(&mut rng, config.exponent, config.min_degree, n))
        .collect();
    let pull: Vec<f64> = (0..n)
        .map(|_| sample_power_law_degree(&mut rng, config.exponent, config.min_degree, n) as f64)
        .collect();
    let mut g = Digraph::new(n);
    for (u, &d) in out.iter().enumerate() {
        let mut weights = pull.clone();
        for _ in 0..d {
            let total: f64 = weights.iter().sum();
            let mut x = rng.gen::<f64>() * total;
            let mut v = n - 1;
            for (k, w) in weights.iter().enumerate() {
                if x < *w {
                    v = k;
                    break;
                }
                x -= w;
            }
            // without replacement: no parallel edges
            weights[v] = 0.0;
            g.add_edge(Edge::fixed(u, v));
        }
    }
    Ok(g.repair_dangling(DanglingRepair::ConnectToAll))
}

/// Which edges of a split instance may become free.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "node", rename_all = "snake_case")]
pub enum FreeEdgeMode {
    /// Any edge except the target's loop.
    #[default]
    Uniform,
    /// Edges out of one node `w`, drawn at random when not given.
    SingleSource(Option<NodeId>),
    /// Edges out of `v_s`.
    SourceVs,
    /// Edges out of `v_s` and of one other node.
    SourceVsAndW,
}

/// Splits `graph` at `target`, then marks `f` edges free according to
/// `mode`. Every node keeps at least one fixed out-edge, so all decisions
/// are independent toggles. Draws are repeated until the instance
/// validates.
pub fn sample_free_edges(
    graph: &Digraph,
    target: NodeId,
    f: usize,
    mode: FreeEdgeMode,
    seed: u64,
) -> Result<GproInstance> {
    place_free_edges(graph, target, f, mode, seed, MAX_ATTEMPTS)
}

/// Placement draws per graph in [`generate`] before a new graph is drawn.
const PLACEMENTS_PER_GRAPH: usize = 20;

fn place_free_edges(
    graph: &Digraph,
    target: NodeId,
    f: usize,
    mode: FreeEdgeMode,
    seed: u64,
    attempts: usize,
) -> Result<GproInstance> {
    let (base, _) = gpro::split_target(graph, target)?;
    let mut rng = rng(seed);
    let out_degree: Vec<usize> = (0..base.n()).map(|u| base.out_edges(u).len()).collect();
    let (vs, vt) = (base.start(), base.target());
    let capacity = |u: NodeId| out_degree[u].saturating_sub(1);
    for _ in 0..attempts {
        let chosen: Vec<EdgeId> = match mode {
            FreeEdgeMode::Uniform => {
                let mut pool: Vec<EdgeId> = (0..base.edges().len())
                    .filter(|&e| base.edge(e).from != vt)
                    .collect();
                pool.shuffle(&mut rng);
                let mut used = vec![0; base.n()];
                let mut out = Vec::new();
                for e in pool {
                    let u = base.edge(e).from;
                    if out.len() < f && used[u] < capacity(u) {
                        used[u] += 1;
                        out.push(e);
                    }
                }
                if out.len() < f {
                    return Err(Error::Generator(format!(
                        "only {} edges can be free while keeping a fixed edge per node",
                        out.len()
                    )));
                }
                out
            }
            FreeEdgeMode::SingleSource(w) => {
                let w = match w {
                    Some(w) => w,
                    None => pick_node(&mut rng, &base, |u| capacity(u) >= f)?,
                };
                if w == vt || capacity(w) < f {
                    return Err(Error::Generator(format!("node {w} cannot carry {f} free edges")));
                }
                choose_out(&mut rng, &base, w, f)
            }
            FreeEdgeMode::SourceVs => {
                if capacity(vs) < f {
                    return Err(Error::Generator(format!("v_s cannot carry {f} free edges")));
                }
                choose_out(&mut rng, &base, vs, f)
            }
            FreeEdgeMode::SourceVsAndW => {
                let w = pick_node(&mut rng, &base, |u| u != vs && capacity(u) >= 1)?;
                let lo = f.saturating_sub(capacity(w)).max(usize::from(f >= 2));
                let hi = capacity(vs).min(if f >= 2 { f - 1 } else { f });
                if lo > hi {
                    continue;
                }
                let at_vs = rng.gen_range(lo..=hi);
                let mut out = choose_out(&mut rng, &base, vs, at_vs);
                out.extend(choose_out(&mut rng, &base, w, f - at_vs));
                out
            }
        };
        let mut edges = base.edges().to_vec();
        for e in chosen {
            edges[e].free = true;
        }
        if !fixed_edges_reach(&edges, base.n(), vt) {
            continue;
        }
        let inst = base.with_edges(edges, Vec::new())?;
        if gpro::validate(&inst).is_empty() {
            return Ok(inst);
        }
    }
    Err(Error::Generator(format!(
        "no valid placement of {f} free edges after {attempts} draws"
    )))
}

/// Whether every node reaches `target` over fixed edges alone, the
/// properness condition when all free edges are toggles.
fn fixed_edges_reach(edges: &[Edge], n: usize, target: NodeId) -> bool {
    let mut into = vec![Vec::new(); n];
    for e in edges.iter().filter(|e| !e.free) {
        into[e.to].push(e.from);
    }
    let mut seen = vec![false; n];
    seen[target] = true;
    let mut stack = vec![target];
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &u in &into[v] {
            if !seen[u] {
                seen[u] = true;
                count += 1;
                stack.push(u);
            }
        }
    }
    count == n
}

fn pick_node<R: Rng + ?Sized>(rng: &mut R, inst: &GproInstance, ok: impl Fn(NodeId) -> bool) -> Result<NodeId> {
    let nodes: Vec<NodeId> = (0..inst.n())
        .filter(|&u| u != inst.target() && u != inst.start() && ok(u))
        .collect();
    nodes
        .choose(rng)
        .copied()
        .ok_or_else(|| Error::Generator("no node has enough out-edges".into()))
}

fn choose_out<R: Rng + ?Sized>(rng: &mut R, inst: &GproInstance, u: NodeId, k: usize) -> Vec<EdgeId> {
    let mut pool = inst.out_edges(u).to_vec();
    pool.shuffle(rng);
    pool.truncate(k);
    pool
}

/// Support-graph family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// Edge probability drawn uniformly from `[p_min, p_max]` per instance.
    ErdosRenyi { p_min: f64, p_max: f64 },
    PowerLaw { exponent: f64, min_degree: usize },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::ErdosRenyi { .. } => "erdos_renyi",
            Family::PowerLaw { .. } => "power_law",
        }
    }

    pub fn graph(&self, n: usize, seed: u64) -> Result<Digraph> {
        match *self {
            Family::ErdosRenyi { p_min, p_max } => {
                let p = if p_max > p_min {
                    rng(seed ^ 0x5eed).gen_range(p_min..=p_max)
                } else {
                    p_min
                };
                Ok(erdos_renyi(n, p, seed))
            }
            Family::PowerLaw { exponent, min_degree } => power_law(
                n,
                &PowerLawConfig {
                    exponent,
                    min_degree,
                },
                seed,
            ),
        }
    }
}

/// Everything needed to draw one instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub family: Family,
    pub n: usize,
    pub f: usize,
    pub mode: FreeEdgeMode,
}

/// Draws graphs from the family (node 0 is split) until free edges can be
/// placed.
pub fn generate(spec: &InstanceSpec, seed: u64) -> Result<GproInstance> {
    let mut last = None;
    for attempt in 0..MAX_ATTEMPTS as u64 {
        let s = derive_seed(seed, attempt);
        let graph = spec.family.graph(spec.n, s)?;
        match place_free_edges(&graph, 0, spec.f, spec.mode, s.rotate_left(17), PLACEMENTS_PER_GRAPH) {
            Ok(inst) => return Ok(inst),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::Generator("no attempts".into())))
}

/// Random instance with general weights and costs, optional one-of nodes
/// (exclusive pairs) and optional zapping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedConfig {
    pub n: usize,
    pub edge_probability: f64,
    /// Free toggle edges.
    pub free: usize,
    /// Nodes whose out-edges are replaced by an exclusive pair.
    pub pairs: usize,
    pub max_weight: u32,
    /// Costs are drawn from `{1/4, 2/4, ..., max_cost}`.
    pub max_cost: f64,
    pub zapping: Option<f64>,
}

impl Default for WeightedConfig {
    fn default() -> Self {
        WeightedConfig {
            n: 6,
            edge_probability: 0.4,
            free: 3,
            pairs: 1,
            max_weight: 4,
            max_cost: 3.0,
            zapping: None,
        }
    }
}

pub fn weighted_instance(config: &WeightedConfig, seed: u64) -> Result<GproInstance> {
    for attempt in 0..MAX_ATTEMPTS as u64 {
        let s = derive_seed(seed, attempt);
        if let Ok(inst) = weighted_attempt(config, s) {
            return Ok(inst);
        }
    }
    Err(Error::Generator(format!("no valid weighted instance for {config:?}")))
}

fn weighted_attempt(config: &WeightedConfig, seed: u64) -> Result<GproInstance> {
    let graph = erdos_renyi(config.n, config.edge_probability, seed);
    let mut rng = rng(seed.rotate_left(29));
    let (base, _) = gpro::split_target(&graph, 0)?;
    let (vs, vt) = (base.start(), base.target());
    let quarters = (config.max_cost * 4.0).round().max(1.0) as u32;
    let draw = |e: &Edge, rng: &mut ChaCha8Rng| {
        let weight = f64::from(rng.gen_range(1..=config.max_weight.max(1)));
        let cost = f64::from(rng.gen_range(1..=quarters)) / 4.0;
        e.clone().with_weight(weight).with_cost(cost)
    };
    // pair nodes: two fresh free edges replace all out-edges
    let mut candidates: Vec<NodeId> = (0..base.n()).filter(|&u| u != vs && u != vt).collect();
    candidates.shuffle(&mut rng);
    let paired: Vec<NodeId> = candidates.into_iter().take(config.pairs).collect();
    if paired.len() < config.pairs {
        return Err(Error::Generator("not enough nodes for pairs".into()));
    }
    let mut edges = Vec::new();
    let mut pairs = Vec::new();
    for e in base.edges() {
        if e.from == vt {
            continue;
        }
        if !paired.contains(&e.from) {
            edges.push(draw(e, &mut rng));
        }
    }
    for &u in &paired {
        let a = rng.gen_range(0..base.n());
        let b = rng.gen_range(0..base.n());
        if a == vs || b == vs || a == b {
            return Err(Error::Generator("bad pair heads".into()));
        }
        pairs.push([edges.len(), edges.len() + 1]);
        edges.push(draw(&Edge::free(u, a), &mut rng));
        edges.push(draw(&Edge::free(u, b), &mut rng));
    }
    // toggles at nodes that keep a fixed edge
    let mut pool: Vec<usize> = (0..edges.len())
        .filter(|&i| !edges[i].free && edges[i].from != vt)
        .collect();
    pool.shuffle(&mut rng);
    let mut fixed_left = vec![0usize; base.n()];
    for e in &edges {
        if !e.free {
            fixed_left[e.from] += 1;
        }
    }
    let mut made = 0;
    for i in pool {
        if made == config.free {
            break;
        }
        let u = edges[i].from;
        if fixed_left[u] >= 2 {
            fixed_left[u] -= 1;
            edges[i].free = true;
            made += 1;
        }
    }
    if made < config.free {
        return Err(Error::Generator("not enough edges for toggles".into()));
    }
    edges.push(Edge::fixed(vt, vt).with_cost(0.0));
    let zapping = config.zapping.map(Zapping::new);
    let inst = GproInstance::new(base.names().to_vec(), vs, vt, edges, pairs, zapping)?;
    let violations = gpro::validate(&inst);
    // zapping skips the properness check; demand it anyway
    if violations.is_empty() && gpro::improper_nodes(&inst).is_empty() {
        Ok(inst)
    } else {
        Err(Error::Generator(format!("{violations:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SspConfig {
    /// States including the target.
    pub states: usize,
    pub max_actions: usize,
    pub max_support: usize,
    /// Upper bound on `sum_s (k_s - 1)`, keeping enumeration feasible.
    pub max_extra_actions: usize,
    pub max_cost: f64,
}

impl Default for SspConfig {
    fn default() -> Self {
        SspConfig {
            states: 6,
            max_actions: 3,
            max_support: 3,
            max_extra_actions: 10,
            max_cost: 3.0,
        }
    }
}

/// Random proper SSP. State 0 is the target; every action puts positive
/// probability on some lower-numbered state, so every policy is proper.
pub fn random_ssp(config: &SspConfig, seed: u64) -> Result<SspInstance> {
    if config.states < 1 || config.max_actions < 1 || config.max_support < 1 {
        return Err(Error::Generator(format!("bad ssp parameters {config:?}")));
    }
    let mut rng = rng(seed);
    let n = config.states;
    let quarters = (config.max_cost * 4.0).round().max(1.0) as u32;
    let mut budget = config.max_extra_actions;
    let mut actions = vec![vec![Action::deterministic(0, 0.0)]];
    for s in 1..n {
        let k = rng.gen_range(1..=config.max_actions).min(budget + 1);
        budget -= k - 1;
        let list = (0..k)
            .map(|_| {
                let support = rng.gen_range(1..=config.max_support);
                let mut heads = vec![rng.gen_range(0..s)];
                for _ in 1..support {
                    heads.push(rng.gen_range(0..n));
                }
                let weights: Vec<u32> = heads.iter().map(|_| rng.gen_range(1..=4)).collect();
                let total: u32 = weights.iter().sum();
                let ts = heads
                    .iter()
                    .zip(&weights)
                    .map(|(&h, &w)| {
                        let cost = if h == 0 && rng.gen_bool(0.2) {
                            0.0
                        } else {
                            f64::from(rng.gen_range(1..=quarters)) / 4.0
                        };
                        Transition::new(h, f64::from(w) / f64::from(total), cost)
                    })
                    .collect();
                Action::new(ts).merged()
            })
            .collect();
        actions.push(list);
    }
    let inst = SspInstance::unnamed(0, actions)?;
    debug_assert!(ssp::validate(&inst).is_empty());
    Ok(inst)
}
