use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use pro_core::experiments::{self, HuntConfig, HuntReport, Start, SweepConfig, TheoremConfig};
use pro_core::generators::{self, Family, FreeEdgeMode, InstanceSpec};
use pro_core::gpro::{self, GproInstance, Policy, PolicyFile};
use pro_core::hitting;
use pro_core::oracle;
use pro_core::pri::{self, Sense};
use pro_core::reductions::{self, Encoding};
use pro_core::ssp::{self, SspInstance};
use pro_core::Error;

/// Exit status when the hunt finds a run with more than `f` iterations.
const EXIT_COUNTEREXAMPLE: u8 = 2;
/// Exit status when an instance or a proved bound is violated.
const EXIT_VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(name = "probench", version, about = "PageRank Iteration experiment harness")]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, env = "PROBENCH_WORKERS", global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an instance (or an SSP) against every invariant.
    Validate {
        #[arg(long, conflicts_with = "ssp", required_unless_present = "ssp")]
        instance: Option<PathBuf>,
        #[arg(long)]
        ssp: Option<PathBuf>,
    },
    /// Run PageRank Iteration.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = SenseArg::Max)]
        sense: SenseArg,
        /// Initial policy file (`{"active": [...]}`); all toggles on otherwise.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Write the full trace as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write final hitting times as CSV.
        #[arg(long)]
        phi: Option<PathBuf>,
    },
    /// Enumerate every policy and report the optimum.
    Oracle {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = SenseArg::Max)]
        sense: SenseArg,
        #[arg(long, default_value_t = oracle::DEFAULT_CAP)]
        cap: usize,
    },
    /// Convert between instances and stochastic shortest path problems.
    Reduce {
        #[command(subcommand)]
        direction: Reduce,
    },
    /// Generate random instances.
    Gen(GenArgs),
    /// Iteration counts as the number of free edges grows.
    SweepF {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        f_min: Option<usize>,
        #[arg(long)]
        f_max: Option<usize>,
        #[arg(long)]
        repetitions: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// CSV destination (stdout otherwise).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search random instances for runs longer than `f` iterations.
    Hunt {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        archive: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Extra instance files to run first.
        #[arg(long)]
        inject: Vec<PathBuf>,
        #[arg(long, value_enum)]
        start: Option<StartArg>,
        /// Iteration histogram as CSV.
        #[arg(long)]
        histogram: Option<PathBuf>,
        /// JSON summary (stdout otherwise).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Check the proved iteration bounds on random families.
    Theorems {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Instances for the single-node family (overrides the config).
        #[arg(long)]
        single_node: Option<usize>,
        /// Paired runs for the zapping family (overrides the config).
        #[arg(long)]
        zapping: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Reduce {
    /// Instance to SSP.
    ToSsp {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = EncodingArg::Gadget)]
        encoding: EncodingArg,
        #[arg(long)]
        out: PathBuf,
        /// Write the decision-point correspondence.
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// SSP to instance, splitting multi-action and probabilistic states.
    FromSsp {
        #[arg(long)]
        ssp: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        map: Option<PathBuf>,
    },
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value_t = FamilyArg::Er)]
    family: FamilyArg,
    #[arg(long)]
    n: usize,
    /// Edge probability (Erdős–Rényi).
    #[arg(long, default_value_t = 0.3)]
    p: f64,
    /// Degree exponent (power law).
    #[arg(long, default_value_t = 2.5)]
    exponent: f64,
    #[arg(long, default_value_t = 2)]
    min_degree: usize,
    #[arg(long)]
    f: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Uniform)]
    mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SenseArg {
    Max,
    Min,
}

impl From<SenseArg> for Sense {
    fn from(s: SenseArg) -> Sense {
        match s {
            SenseArg::Max => Sense::MaximizePagerank,
            SenseArg::Min => Sense::MinimizePagerank,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodingArg {
    Gadget,
    LocalSubsets,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Er,
    PowerLaw,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Uniform,
    SingleSource,
    SourceVs,
    SourceVsAndW,
}

#[derive(Clone, Copy, ValueEnum)]
enum StartArg {
    AllActive,
    Random,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        // only fails when a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let violation = e
                .downcast_ref::<Error>()
                .is_some_and(|e| matches!(e, Error::NonMonotone { .. }));
            ExitCode::from(if violation { EXIT_VIOLATION } else { 1 })
        }
    }
}

fn read_instance(path: &Path) -> Result<GproInstance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    GproInstance::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_ssp(path: &Path) -> Result<SspInstance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    SspInstance::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit(value: &serde_json::Value, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            match writeln!(out, "{text}") {
                // a closed reader (e.g. `| head`) is not an error
                Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
                other => Ok(other?),
            }
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Validate { instance, ssp } => validate(instance, ssp),
        Command::Solve {
            instance,
            sense,
            policy,
            trace,
            phi,
        } => solve(&instance, sense.into(), policy, trace, phi),
        Command::Oracle { instance, sense, cap } => {
            let inst = read_instance(&instance)?;
            let result = oracle::brute_force_optimum(&inst, sense.into(), cap)?;
            emit(
                &json!({
                    "optimum": result.optimum,
                    "evaluated": result.evaluated,
                    "argopt": result.argopt.iter().map(|p| p.to_file(&inst)).collect::<Vec<_>>(),
                    "node_optima": result.node_optima,
                }),
                None,
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Reduce { direction } => reduce(direction),
        Command::Gen(args) => generate(args),
        Command::SweepF {
            config,
            f_min,
            f_max,
            repetitions,
            seed,
            out,
        } => {
            let mut cfg: SweepConfig = experiments::load_config(config.as_deref())?;
            cfg.f_min = f_min.unwrap_or(cfg.f_min);
            cfg.f_max = f_max.unwrap_or(cfg.f_max);
            cfg.repetitions = repetitions.unwrap_or(cfg.repetitions);
            cfg.master_seed = seed.unwrap_or(cfg.master_seed);
            let rows = experiments::sweep_f(&cfg);
            match out {
                Some(p) => experiments::write_sweep_csv(&rows, fs::File::create(&p)?)?,
                None => experiments::write_sweep_csv(&rows, io::stdout().lock())?,
            }
            let flagged = rows.iter().any(|r| r.exceeding_f > 0 || r.guard_tripped > 0);
            Ok(if flagged {
                ExitCode::from(EXIT_COUNTEREXAMPLE)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Hunt {
            config,
            budget,
            seed,
            archive,
            checkpoint,
            inject,
            start,
            histogram,
            summary,
        } => {
            let mut cfg: HuntConfig = experiments::load_config(config.as_deref())?;
            cfg.budget = budget.unwrap_or(cfg.budget);
            cfg.master_seed = seed.unwrap_or(cfg.master_seed);
            cfg.archive = archive.or(cfg.archive);
            cfg.checkpoint = checkpoint.or(cfg.checkpoint);
            cfg.inject.extend(inject);
            if let Some(s) = start {
                cfg.start = match s {
                    StartArg::AllActive => Start::AllActive,
                    StartArg::Random => Start::Random,
                };
            }
            let report = experiments::hunt(&cfg)?;
            if let Some(p) = histogram {
                experiments::write_histogram_csv(&report, fs::File::create(&p)?)?;
            }
            emit(
                &json!({
                    "config": cfg,
                    "processed": report.processed,
                    "histogram": report.histogram,
                    "barrier_hits": report.barrier_hits,
                    "barrier_rate": report.barrier_rate(),
                    "counterexamples": report.counterexamples,
                    "guard_tripped": report.guard_tripped,
                    "errors": report.errors,
                }),
                summary.as_deref(),
            )?;
            Ok(ExitCode::from(hunt_status(&report)))
        }
        Command::Theorems {
            config,
            single_node,
            zapping,
            out,
        } => {
            let mut cfg: TheoremConfig = match config {
                Some(p) => experiments::load_config(Some(&p))?,
                None => TheoremConfig {
                    single_node: Some(Default::default()),
                    zapping: Some(Default::default()),
                },
            };
            if let Some(k) = single_node {
                cfg.single_node.get_or_insert_with(Default::default).instances = k;
            }
            if let Some(k) = zapping {
                cfg.zapping.get_or_insert_with(Default::default).instances = k;
            }
            let report = experiments::theorem_checks(&cfg)?;
            let mut value = serde_json::to_value(&report)?;
            // per-pair rows are bulky; keep them only in file output
            if out.is_none() {
                if let Some(z) = value.get_mut("zapping").and_then(|v| v.as_object_mut()) {
                    z.remove("runs");
                }
            }
            emit(&value, out.as_deref())?;
            Ok(if report.violated() {
                ExitCode::from(EXIT_VIOLATION)
            } else {
                ExitCode::SUCCESS
            })
        }
    }
}

fn hunt_status(report: &HuntReport) -> u8 {
    if report.found_counterexample() {
        EXIT_COUNTEREXAMPLE
    } else {
        0
    }
}

fn validate(instance: Option<PathBuf>, ssp_path: Option<PathBuf>) -> Result<ExitCode> {
    let (violations, messages) = match (instance, ssp_path) {
        (Some(p), _) => {
            let inst = read_instance(&p)?;
            let v = gpro::validate(&inst);
            let messages: Vec<String> = v.iter().map(ToString::to_string).collect();
            (serde_json::to_value(&v)?, messages)
        }
        (None, Some(p)) => {
            let model = read_ssp(&p)?;
            let v = ssp::validate(&model);
            let messages: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
            (serde_json::to_value(&v)?, messages)
        }
        (None, None) => bail!("give --instance or --ssp"),
    };
    let ok = messages.is_empty();
    emit(
        &json!({ "valid": ok, "violations": violations, "messages": messages }),
        None,
    )?;
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VIOLATION)
    })
}

fn solve(
    path: &Path,
    sense: Sense,
    policy: Option<PathBuf>,
    trace_out: Option<PathBuf>,
    phi_out: Option<PathBuf>,
) -> Result<ExitCode> {
    let inst = read_instance(path)?;
    let violations = gpro::validate(&inst);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("invalid: {v}");
        }
        return Ok(ExitCode::from(EXIT_VIOLATION));
    }
    let initial = match policy {
        Some(p) => {
            let file: PolicyFile = serde_json::from_str(&fs::read_to_string(&p)?)?;
            Policy::from_active(&inst, &file.active)?
        }
        None => Policy::initial(&inst),
    };
    let trace = pri::solve(&inst, &initial, sense, pri::default_guard(&inst))?;
    if let Some(p) = trace_out {
        fs::write(&p, serde_json::to_string_pretty(&trace.to_file(&inst))?)?;
    }
    let last = trace.final_policy();
    if let Some(p) = phi_out {
        let phi = hitting::HittingTimes {
            phi: trace.final_phi().to_vec(),
        };
        hitting::write_phi_csv(&phi, fs::File::create(&p)?)?;
    }
    let pagerank = hitting::pagerank(&inst, last).ok().map(|pr| pr.of(inst.start()));
    emit(
        &json!({
            "objective": trace.objective(&inst),
            "pagerank": pagerank,
            "iterations": pri::iterations_of(&trace),
            "evaluations": trace.evaluations(),
            "converged": trace.converged(),
            "policy": last.to_file(&inst),
            "phi": trace.final_phi(),
        }),
        None,
    )?;
    Ok(if trace.converged() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VIOLATION)
    })
}

fn reduce(direction: Reduce) -> Result<ExitCode> {
    match direction {
        Reduce::ToSsp {
            instance,
            encoding,
            out,
            map,
        } => {
            let inst = read_instance(&instance)?;
            let encoding = match encoding {
                EncodingArg::Gadget => Encoding::Gadget,
                EncodingArg::LocalSubsets => Encoding::LocalSubsets,
            };
            let (model, m) = reductions::gpro_to_ssp(&inst, encoding)?;
            fs::write(&out, model.to_json())?;
            if let Some(p) = map {
                fs::write(&p, serde_json::to_string_pretty(&m)?)?;
            }
            emit(
                &json!({ "states": model.n(), "actions": model.action_count(), "value_nodes": m.value_nodes() }),
                None,
            )?;
        }
        Reduce::FromSsp { ssp: path, out, map } => {
            let model = read_ssp(&path)?;
            let (inst, m) = reductions::reduce_ssp(&model)?;
            fs::write(&out, inst.to_json())?;
            if let Some(p) = map {
                fs::write(&p, serde_json::to_string_pretty(&m)?)?;
            }
            emit(
                &json!({ "nodes": inst.n(), "free_edges": inst.free_count(), "value_nodes": m.value_nodes() }),
                None,
            )?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn generate(args: GenArgs) -> Result<ExitCode> {
    let family = match args.family {
        FamilyArg::Er => Family::ErdosRenyi {
            p_min: args.p,
            p_max: args.p,
        },
        FamilyArg::PowerLaw => Family::PowerLaw {
            exponent: args.exponent,
            min_degree: args.min_degree,
        },
    };
    let mode = match args.mode {
        ModeArg::Uniform => FreeEdgeMode::Uniform,
        ModeArg::SingleSource => FreeEdgeMode::SingleSource(None),
        ModeArg::SourceVs => FreeEdgeMode::SourceVs,
        ModeArg::SourceVsAndW => FreeEdgeMode::SourceVsAndW,
    };
    let spec = InstanceSpec {
        family,
        n: args.n,
        f: args.f,
        mode,
    };
    fs::create_dir_all(&args.out)?;
    let width = args.count.max(1).to_string().len();
    for i in 0..args.count {
        let seed = generators::derive_seed(args.seed, i);
        let inst = generators::generate(&spec, seed)?;
        let path = args.out.join(format!("instance-{i:0width$}.json"));
        fs::write(&path, inst.to_json())?;
    }
    emit(
        &json!({ "spec": spec, "master_seed": args.seed, "count": args.count, "out": args.out }),
        None,
    )?;
    Ok(ExitCode::SUCCESS)
}
