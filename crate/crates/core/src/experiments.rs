//! Experiment drivers: iteration-growth sweeps, the conjecture hunt with
//! its counterexample archive, and checks of the proved iteration bounds.
//!
//! Work is spread over the rayon pool; results are merged in seed order so
//! every report is a pure function of its configuration.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{self, derive_seed, Family, FreeEdgeMode, InstanceSpec, WeightedConfig};
use crate::gpro::{GproInstance, InstanceFile, Policy};
use crate::oracle;
use crate::pri::{self, PriTrace, Sense, TraceFile};
use crate::reductions::{self, Encoding};
use crate::ssp::{self, SspPolicy, ViOptions};
use crate::tolerance;

/// Initial policy of a PRI run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    /// Every toggle on.
    #[default]
    AllActive,
    /// Drawn from the instance seed.
    Random,
}

fn start_policy(instance: &GproInstance, start: Start, seed: u64) -> Policy {
    match start {
        Start::AllActive => Policy::initial(instance),
        Start::Random => pri::random_policy(instance, &mut generators::rng(seed.rotate_left(7))),
    }
}

fn run_pri(instance: &GproInstance, start: Start, seed: u64, sense: Sense) -> Result<PriTrace> {
    let initial = start_policy(instance, start, seed);
    pri::solve(instance, &initial, sense, pri::default_guard(instance))
}

// ---------------------------------------------------------------- sweep

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub family: Family,
    pub f_min: usize,
    pub f_max: usize,
    pub repetitions: usize,
    /// Instance size is `max(n_min, ceil(nodes_per_free * f))`.
    pub n_min: usize,
    pub nodes_per_free: f64,
    pub mode: FreeEdgeMode,
    pub start: Start,
    pub sense: Sense,
    pub master_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            family: Family::PowerLaw {
                exponent: 2.5,
                min_degree: 2,
            },
            f_min: 3,
            f_max: 30,
            repetitions: 5,
            n_min: 10,
            nodes_per_free: 3.0,
            mode: FreeEdgeMode::Uniform,
            start: Start::AllActive,
            sense: Sense::MaximizePagerank,
            master_seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub f: usize,
    pub n: usize,
    pub count: usize,
    pub mean_iters: f64,
    pub max_iters: usize,
    /// Runs with more than `f` iterations.
    pub exceeding_f: usize,
    /// Runs stopped by the `2^f + 1` guard.
    pub guard_tripped: usize,
    pub errors: usize,
}

/// PRI iteration counts for every `f` in range, `repetitions` instances
/// each.
pub fn sweep_f(config: &SweepConfig) -> Vec<SweepRow> {
    (config.f_min..=config.f_max)
        .map(|f| {
            let n = config
                .n_min
                .max((config.nodes_per_free * f as f64).ceil() as usize);
            let spec = InstanceSpec {
                family: config.family,
                n,
                f,
                mode: config.mode,
            };
            let outcomes: Vec<Result<PriTrace>> = (0..config.repetitions as u64)
                .into_par_iter()
                .map(|rep| {
                    let seed = derive_seed(derive_seed(config.master_seed, f as u64), rep);
                    let instance = generators::generate(&spec, seed)?;
                    run_pri(&instance, config.start, seed, config.sense)
                })
                .collect();
            let traces: Vec<&PriTrace> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
            let iters: Vec<usize> = traces.iter().map(|t| pri::iterations_of(t)).collect();
            SweepRow {
                f,
                n,
                count: iters.len(),
                mean_iters: if iters.is_empty() {
                    0.0
                } else {
                    iters.iter().sum::<usize>() as f64 / iters.len() as f64
                },
                max_iters: iters.iter().copied().max().unwrap_or(0),
                exceeding_f: iters.iter().filter(|&&k| k > f).count(),
                guard_tripped: traces.iter().filter(|t| !t.converged()).count(),
                errors: outcomes.len() - traces.len(),
            }
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

// ----------------------------------------------------------------- hunt

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HuntConfig {
    pub families: Vec<Family>,
    pub n_min: usize,
    pub n_max: usize,
    pub f_min: usize,
    pub f_max: usize,
    pub budget: u64,
    pub master_seed: u64,
    pub mode: FreeEdgeMode,
    pub start: Start,
    pub sense: Sense,
    /// Directory receiving barrier hits and counterexamples.
    pub archive: Option<PathBuf>,
    /// Progress file; an existing one with the same configuration resumes.
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_every: u64,
    /// Instance files run before the generated ones.
    pub inject: Vec<PathBuf>,
}

impl Default for HuntConfig {
    fn default() -> Self {
        HuntConfig {
            families: vec![
                Family::ErdosRenyi {
                    p_min: 0.1,
                    p_max: 0.9,
                },
                Family::PowerLaw {
                    exponent: 2.5,
                    min_degree: 2,
                },
            ],
            n_min: 5,
            n_max: 15,
            f_min: 3,
            f_max: 10,
            budget: 10_000,
            master_seed: 1,
            mode: FreeEdgeMode::Uniform,
            start: Start::AllActive,
            sense: Sense::MaximizePagerank,
            archive: None,
            checkpoint: None,
            checkpoint_every: 10_000,
            inject: Vec::new(),
        }
    }
}

impl HuntConfig {
    /// Instance drawn at `index`.
    pub fn spec(&self, index: u64) -> (InstanceSpec, u64) {
        let seed = derive_seed(self.master_seed, index);
        let mut rng = generators::rng(seed);
        let family = self.families[rng.gen_range(0..self.families.len())];
        let n = rng.gen_range(self.n_min..=self.n_max.max(self.n_min));
        let f = rng.gen_range(self.f_min..=self.f_max.max(self.f_min));
        (
            InstanceSpec {
                family,
                n,
                f,
                mode: self.mode,
            },
            seed,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hit {
    /// Generated index, or the injected file name.
    pub label: String,
    pub seed: Option<u64>,
    pub free_edges: usize,
    pub iterations: usize,
    pub archived: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HuntReport {
    pub processed: u64,
    /// `histogram[f][iterations]` = runs.
    pub histogram: BTreeMap<usize, BTreeMap<usize, u64>>,
    /// Runs with exactly `f` iterations.
    pub barrier_hits: Vec<Hit>,
    /// Runs with more than `f` iterations.
    pub counterexamples: Vec<Hit>,
    pub guard_tripped: u64,
    pub errors: Vec<String>,
}

impl HuntReport {
    pub fn found_counterexample(&self) -> bool {
        !self.counterexamples.is_empty()
    }

    /// Fraction of runs at exactly `f` iterations.
    pub fn barrier_rate(&self) -> f64 {
        let total: u64 = self.histogram.values().flat_map(|h| h.values()).sum();
        if total == 0 {
            0.0
        } else {
            self.barrier_hits.len() as f64 / total as f64
        }
    }
}

/// Self-contained record of an archived run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub kind: String,
    pub label: String,
    pub seed: Option<u64>,
    pub spec: Option<InstanceSpec>,
    pub config: HuntConfig,
    pub iterations: usize,
    pub instance: InstanceFile,
    pub trace: TraceFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    config: HuntConfig,
    next_index: u64,
    report: HuntReport,
}

enum Outcome {
    Done {
        instance: GproInstance,
        trace: PriTrace,
    },
    Failed(String),
}

struct Job {
    label: String,
    seed: Option<u64>,
    spec: Option<InstanceSpec>,
    outcome: Outcome,
}

/// Runs PRI on injected instances, then on `budget` generated ones.
pub fn hunt(config: &HuntConfig) -> Result<HuntReport> {
    if config.families.is_empty() {
        return Err(Error::Invalid("hunt needs at least one family".into()));
    }
    let mut report = HuntReport::default();
    let mut next = 0;
    if let Some(path) = config.checkpoint.as_ref().filter(|p| p.exists()) {
        let saved: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        if saved.config == *config {
            report = saved.report;
            next = saved.next_index;
        }
    }
    if let Some(dir) = &config.archive {
        fs::create_dir_all(dir)?;
    }
    if next == 0 {
        let injected: Vec<Job> = config
            .inject
            .par_iter()
            .map(|path| {
                let label = path.display().to_string();
                let outcome = fs::read_to_string(path)
                    .map_err(Error::from)
                    .and_then(|text| GproInstance::from_json(&text))
                    .and_then(|instance| {
                        let trace = run_pri(&instance, config.start, 0, config.sense)?;
                        Ok(Outcome::Done { instance, trace })
                    })
                    .unwrap_or_else(|e| Outcome::Failed(e.to_string()));
                Job {
                    label,
                    seed: None,
                    spec: None,
                    outcome,
                }
            })
            .collect();
        for job in injected {
            record(config, &mut report, job)?;
        }
    }
    let chunk = config.checkpoint_every.max(1);
    while next < config.budget {
        let end = (next + chunk).min(config.budget);
        let jobs: Vec<Job> = (next..end)
            .into_par_iter()
            .map(|index| {
                let (spec, seed) = config.spec(index);
                let outcome = generators::generate(&spec, seed)
                    .and_then(|instance| {
                        let trace = run_pri(&instance, config.start, seed, config.sense)?;
                        Ok(Outcome::Done { instance, trace })
                    })
                    .unwrap_or_else(|e| Outcome::Failed(e.to_string()));
                Job {
                    label: index.to_string(),
                    seed: Some(seed),
                    spec: Some(spec),
                    outcome,
                }
            })
            .collect();
        for job in jobs {
            record(config, &mut report, job)?;
        }
        next = end;
        if let Some(path) = &config.checkpoint {
            let saved = Checkpoint {
                config: config.clone(),
                next_index: next,
                report: report.clone(),
            };
            fs::write(path, serde_json::to_string(&saved)?)?;
        }
    }
    Ok(report)
}

fn record(config: &HuntConfig, report: &mut HuntReport, job: Job) -> Result<()> {
    let (instance, trace) = match job.outcome {
        Outcome::Done { instance, trace } => (instance, trace),
        Outcome::Failed(e) => {
            report.errors.push(format!("{}: {e}", job.label));
            return Ok(());
        }
    };
    report.processed += 1;
    let f = instance.free_count();
    let iterations = pri::iterations_of(&trace);
    *report.histogram.entry(f).or_default().entry(iterations).or_default() += 1;
    if !trace.converged() {
        report.guard_tripped += 1;
    }
    if iterations < f {
        return Ok(());
    }
    let kind = if iterations > f { "counterexample" } else { "barrier_hit" };
    let archived = match &config.archive {
        Some(dir) => {
            let name = job.label.replace(|c: char| !c.is_ascii_alphanumeric(), "_");
            let path = dir.join(format!("{kind}-{name}.json"));
            let rec = ArchiveRecord {
                kind: kind.to_string(),
                label: job.label.clone(),
                seed: job.seed,
                spec: job.spec,
                config: config.clone(),
                iterations,
                instance: instance.to_file(),
                trace: trace.to_file(&instance),
            };
            fs::write(&path, serde_json::to_string_pretty(&rec)?)?;
            Some(path)
        }
        None => None,
    };
    let hit = Hit {
        label: job.label,
        seed: job.seed,
        free_edges: f,
        iterations,
        archived,
    };
    if iterations > f {
        report.counterexamples.push(hit);
    } else {
        report.barrier_hits.push(hit);
    }
    Ok(())
}

pub fn write_histogram_csv<W: Write>(report: &HuntReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["f", "iterations", "count"])?;
    for (f, h) in &report.histogram {
        for (k, c) in h {
            out.write_record([f.to_string(), k.to_string(), c.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

// ------------------------------------------------- single-node theorem

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SingleNodeConfig {
    pub instances: usize,
    pub families: Vec<Family>,
    pub n_min: usize,
    pub n_max: usize,
    pub f_max: usize,
    pub random_starts: usize,
    /// Compare the `v_s`-only family against the oracle.
    pub oracle: bool,
    pub master_seed: u64,
    pub archive: Option<PathBuf>,
}

impl Default for SingleNodeConfig {
    fn default() -> Self {
        SingleNodeConfig {
            instances: 1000,
            families: vec![
                Family::ErdosRenyi {
                    p_min: 0.4,
                    p_max: 0.95,
                },
                Family::PowerLaw {
                    exponent: 2.1,
                    min_degree: 3,
                },
            ],
            n_min: 5,
            n_max: 12,
            f_max: 8,
            random_starts: 10,
            oracle: true,
            master_seed: 3,
            archive: None,
        }
    }
}

pub const SINGLE_NODE_MODES: [FreeEdgeMode; 3] = [
    FreeEdgeMode::SingleSource(None),
    FreeEdgeMode::SourceVs,
    FreeEdgeMode::SourceVsAndW,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleNodeViolation {
    pub index: usize,
    pub seed: u64,
    pub mode: FreeEdgeMode,
    pub start: usize,
    pub kind: String,
    pub detail: String,
    pub archived: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SingleNodeReport {
    pub instances: usize,
    pub runs: usize,
    /// `histogram[iterations]` over all runs.
    pub histogram: BTreeMap<usize, u64>,
    /// Runs at exactly `f` iterations.
    pub at_bound: usize,
    pub violations: Vec<SingleNodeViolation>,
    pub errors: Vec<String>,
}

/// Instance `index` of the single-node family.
pub fn single_node_instance(config: &SingleNodeConfig, index: usize) -> Result<(GproInstance, FreeEdgeMode, u64)> {
    let seed = derive_seed(config.master_seed, index as u64);
    let mode = SINGLE_NODE_MODES[index % SINGLE_NODE_MODES.len()];
    let mut rng = generators::rng(seed);
    let family = config.families[(index / SINGLE_NODE_MODES.len()) % config.families.len()];
    let n = rng.gen_range(config.n_min..=config.n_max.max(config.n_min));
    let lo = if mode == FreeEdgeMode::SourceVsAndW { 2 } else { 1 };
    let hi = config.f_max.min(n.saturating_sub(2)).max(lo);
    let f = rng.gen_range(lo..=hi);
    let spec = InstanceSpec { family, n, f, mode };
    Ok((generators::generate(&spec, seed)?, mode, seed))
}

/// Checks the per-trace claims: at most `f` iterations, a final decision in
/// every round, and for a single node `w != v_s` the dominance
/// `phi_w` drops at least as much as any other node in every round.
pub fn check_single_node_trace(instance: &GproInstance, trace: &PriTrace, mode: FreeEdgeMode) -> Vec<(String, String)> {
    let mut found = Vec::new();
    let f = instance.free_count();
    let iterations = pri::iterations_of(trace);
    if !trace.converged() {
        found.push(("guard".into(), "run did not converge".into()));
    }
    if iterations > f {
        found.push(("bound".into(), format!("{iterations} iterations with f = {f}")));
    }
    let stale = trace.rounds_without_final_decision();
    if !stale.is_empty() {
        found.push(("final_decision".into(), format!("rounds {stale:?} make no final decision")));
    }
    if mode == FreeEdgeMode::SingleSource(None) {
        let w = instance.edge(instance.free_edges().next().expect("free edges")).from;
        for (k, pair) in trace.steps.windows(2).enumerate() {
            let dw = pair[0].phi[w] - pair[1].phi[w];
            for u in 0..instance.n() {
                let du = pair[0].phi[u] - pair[1].phi[u];
                if du > dw + tolerance::scaled(tolerance::COMPARE, pair[0].phi[u]) {
                    found.push((
                        "dominance".into(),
                        format!("round {k}: node {u} dropped {du}, w = {w} only {dw}"),
                    ));
                }
            }
        }
    }
    found
}

pub fn single_node_check(config: &SingleNodeConfig) -> Result<SingleNodeReport> {
    if let Some(dir) = &config.archive {
        fs::create_dir_all(dir)?;
    }
    type Item = std::result::Result<(usize, Vec<usize>, Vec<SingleNodeViolation>), String>;
    let items: Vec<Item> = (0..config.instances)
        .into_par_iter()
        .map(|index| {
            let (instance, mode, seed) = single_node_instance(config, index).map_err(|e| format!("{index}: {e}"))?;
            let mut starts = vec![Policy::initial(&instance)];
            let mut rng = generators::rng(seed.rotate_left(11));
            starts.extend((0..config.random_starts).map(|_| pri::random_policy(&instance, &mut rng)));
            let mut iterations = Vec::new();
            let mut violations = Vec::new();
            let mut push = |start: usize, kind: String, detail: String, trace: Option<&PriTrace>| {
                let archived = config.archive.as_ref().and_then(|dir| {
                    let path = dir.join(format!("single-node-{index}-{start}-{kind}.json"));
                    let body = serde_json::json!({
                        "seed": seed,
                        "mode": mode,
                        "instance": instance.to_file(),
                        "trace": trace.map(|t| t.to_file(&instance)),
                    });
                    fs::write(&path, serde_json::to_string_pretty(&body).ok()?).ok()?;
                    Some(path)
                });
                violations.push(SingleNodeViolation {
                    index,
                    seed,
                    mode,
                    start,
                    kind,
                    detail,
                    archived,
                });
            };
            let mut best = None;
            for (k, start) in starts.iter().enumerate() {
                match pri::solve(&instance, start, Sense::MaximizePagerank, pri::default_guard(&instance)) {
                    Ok(trace) => {
                        iterations.push(pri::iterations_of(&trace));
                        for (kind, detail) in check_single_node_trace(&instance, &trace, mode) {
                            push(k, kind, detail, Some(&trace));
                        }
                        best.get_or_insert_with(|| trace.objective(&instance));
                    }
                    Err(e) => push(k, "error".into(), e.to_string(), None),
                }
            }
            if config.oracle && mode == FreeEdgeMode::SourceVs {
                match (oracle::brute_force_optimum(&instance, Sense::MaximizePagerank, oracle::DEFAULT_CAP), best) {
                    (Ok(o), Some(v)) if !o.is_optimal(v) => {
                        push(0, "oracle".into(), format!("PRI {v} vs optimum {}", o.optimum), None)
                    }
                    (Err(e), _) => push(0, "oracle".into(), e.to_string(), None),
                    _ => {}
                }
            }
            Ok((instance.free_count(), iterations, violations))
        })
        .collect();
    let mut report = SingleNodeReport::default();
    for item in items {
        match item {
            Ok((f, iterations, violations)) => {
                report.instances += 1;
                report.runs += iterations.len();
                report.at_bound += iterations.iter().filter(|&&k| k == f).count();
                for k in iterations {
                    *report.histogram.entry(k).or_default() += 1;
                }
                report.violations.extend(violations);
            }
            Err(e) => report.errors.push(e),
        }
    }
    Ok(report)
}

// --------------------------------------------------------- zapping theorem

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZappingConfig {
    pub instances: usize,
    pub probabilities: Vec<f64>,
    pub n_min: usize,
    pub n_max: usize,
    pub free: usize,
    pub pairs: usize,
    pub vi_epsilon: f64,
    pub master_seed: u64,
}

impl Default for ZappingConfig {
    fn default() -> Self {
        ZappingConfig {
            instances: 300,
            probabilities: vec![0.05, 0.15, 0.3],
            n_min: 5,
            n_max: 20,
            free: 5,
            pairs: 1,
            vi_epsilon: tolerance::VALUE_ITERATION,
            master_seed: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedRun {
    pub index: usize,
    pub seed: u64,
    pub c: f64,
    pub states: usize,
    /// Howard policy iteration on the SSP encoding, policy-changing rounds.
    pub pi: usize,
    /// Bellman updates from the initial policy's values until the update
    /// changes no value by more than the tolerance.
    pub vi: usize,
    /// PageRank Iteration on the instance itself.
    pub pri: usize,
    /// `n^2 ln(n delta) / c`.
    pub shape: f64,
    /// Optimal values agree across PI, VI and PRI.
    pub values_agree: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZappingSummary {
    pub c: f64,
    pub pairs: usize,
    pub mean_pi: f64,
    pub max_pi: usize,
    pub mean_vi: f64,
    pub max_vi: usize,
    pub mean_pri: f64,
    /// Largest `pi / shape`.
    pub max_ratio: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ZappingReport {
    pub runs: Vec<PairedRun>,
    pub summary: Vec<ZappingSummary>,
    /// Pairs with more PI iterations than VI iterations.
    pub pi_exceeds_vi: Vec<usize>,
    pub value_mismatches: Vec<usize>,
    pub errors: Vec<String>,
}

pub fn zapping_paired_run(config: &ZappingConfig, index: usize) -> Result<PairedRun> {
    let seed = derive_seed(config.master_seed, index as u64);
    let c = config.probabilities[index % config.probabilities.len()];
    let n = generators::rng(seed).gen_range(config.n_min..=config.n_max.max(config.n_min));
    let instance = generators::weighted_instance(
        &WeightedConfig {
            n,
            free: config.free,
            pairs: config.pairs,
            zapping: Some(c),
            ..WeightedConfig::default()
        },
        seed,
    )?;
    let (model, map) = reductions::gpro_to_ssp(&instance, Encoding::LocalSubsets)?;
    let initial = Policy::initial(&instance);
    let mu0 = SspPolicy(map.forward(&initial.choices(&instance)?)?);
    let j0 = ssp::evaluate(&model, &mu0)?;
    let pi = ssp::policy_iteration(&model, &mu0)?;
    let vi = ssp::value_iteration(
        &model,
        &ViOptions {
            epsilon: config.vi_epsilon,
            initial: Some(j0),
            ..ViOptions::default()
        },
    )?;
    let trace = pri::solve(&instance, &initial, Sense::MaximizePagerank, pri::default_guard(&instance))?;
    let params = ssp::parameters(&model);
    let s = instance.start();
    let agree = |a: f64, b: f64| (a - b).abs() <= 1e-6 * (1.0 + a.abs());
    Ok(PairedRun {
        index,
        seed,
        c,
        states: model.n(),
        pi: pi.iterations - 1,
        vi: vi.iterations,
        pri: pri::iterations_of(&trace),
        shape: ssp::zapping_bound_shape(model.n(), params.delta, c),
        values_agree: agree(pi.values[s], vi.values[s]) && agree(pi.values[s], trace.objective(&instance)),
    })
}

pub fn zapping_check(config: &ZappingConfig) -> ZappingReport {
    let outcomes: Vec<Result<PairedRun>> = (0..config.instances)
        .into_par_iter()
        .map(|i| zapping_paired_run(config, i))
        .collect();
    let mut report = ZappingReport::default();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(run) => {
                if run.pi > run.vi {
                    report.pi_exceeds_vi.push(run.index);
                }
                if !run.values_agree {
                    report.value_mismatches.push(run.index);
                }
                report.runs.push(run);
            }
            Err(e) => report.errors.push(format!("{i}: {e}")),
        }
    }
    for &c in &config.probabilities {
        let runs: Vec<&PairedRun> = report.runs.iter().filter(|r| r.c == c).collect();
        if runs.is_empty() {
            continue;
        }
        let mean = |g: &dyn Fn(&PairedRun) -> usize| runs.iter().map(|r| g(r) as f64).sum::<f64>() / runs.len() as f64;
        report.summary.push(ZappingSummary {
            c,
            pairs: runs.len(),
            mean_pi: mean(&|r| r.pi),
            max_pi: runs.iter().map(|r| r.pi).max().unwrap_or(0),
            mean_vi: mean(&|r| r.vi),
            max_vi: runs.iter().map(|r| r.vi).max().unwrap_or(0),
            mean_pri: mean(&|r| r.pri),
            max_ratio: runs.iter().map(|r| r.pi as f64 / r.shape).fold(0.0, f64::max),
        });
    }
    report
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TheoremConfig {
    pub single_node: Option<SingleNodeConfig>,
    pub zapping: Option<ZappingConfig>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub single_node: Option<SingleNodeReport>,
    pub zapping: Option<ZappingReport>,
}

impl TheoremReport {
    /// A proved bound failed: an implementation fault.
    pub fn violated(&self) -> bool {
        self.single_node
            .as_ref()
            .is_some_and(|r| !r.violations.is_empty() || !r.errors.is_empty())
            || self
                .zapping
                .as_ref()
                .is_some_and(|r| !r.pi_exceeds_vi.is_empty() || !r.value_mismatches.is_empty())
    }
}

pub fn theorem_checks(config: &TheoremConfig) -> Result<TheoremReport> {
    Ok(TheoremReport {
        single_node: config.single_node.as_ref().map(single_node_check).transpose()?,
        zapping: config.zapping.as_ref().map(zapping_check),
    })
}

/// Reads a JSON configuration file, or the default when `path` is absent.
pub fn load_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_str(&fs::read_to_string(p)?)?),
        None => Ok(T::default()),
    }
}
