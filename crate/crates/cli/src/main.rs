//! `salc` — benchmark and verification harness for the self-adjusting list
//! classifier.
//!
//! Subcommands:
//! * `run`    — classify a trace under one or more list variants and emit
//!   per-variant metrics rows (CSV or JSON lines).
//! * `verify` — run the correctness and competitiveness suites at desk
//!   scale; exits nonzero with a counterexample dump on any violation.
//! * `stats`  — print dependency-graph statistics for a ruleset.
//!
//! Exit codes: 0 ok, 1 usage or malformed input, 2 verification failure,
//! 3 I/O error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use salc_core::list::{self, CostLedger, CostModel, DagProvider};
use salc_core::oracle::{self, RandomInstance};
use salc_core::workload::{self, LocalityParams, Request, Trace};
use salc_core::{
    Alpha, Classifier, ClassifierVariant, DepDag, NodeId, Ruleset,
};

#[derive(Parser)]
#[command(name = "salc", version, about = "Self-adjusting list classifier benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a classification experiment and emit metrics rows.
    Run(RunArgs),
    /// Run the verification suites (bounds, equivalence, competitive sweeps).
    Verify(VerifyArgs),
    /// Print dependency-graph statistics for a ruleset.
    Stats(StatsArgs),
}

#[derive(Args)]
struct RulesetSource {
    /// Ruleset file in the filter format (one rule per line).
    #[arg(long, value_name = "PATH")]
    ruleset: Option<PathBuf>,
    /// Synthetic ruleset: `n,overlap_density,seed` (e.g. `64,0.1,7`).
    #[arg(long, value_name = "N,DENSITY,SEED")]
    synthetic: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    ruleset: RulesetSource,
    /// Trace file (packet lines, or `A id` / `I <rule>` / `D id` lines).
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Generated trace: `kind,param,seed` with kind one of zipf, runs,
    /// uniform (param is the zipf exponent or mean run length; ignored for
    /// uniform).
    #[arg(long, value_name = "KIND,PARAM,SEED")]
    gen: Option<String>,
    /// Number of packets per generated trace.
    #[arg(long, default_value_t = 10_000)]
    packets: usize,
    /// Variants to run.
    #[arg(long, value_delimiter = ',', default_value = "memoryless,fast,static")]
    variants: Vec<String>,
    /// Repetitions; generated traces are re-seeded with seed + rep.
    #[arg(long, default_value_t = 32)]
    reps: u32,
    /// Access-cost multiplier for the stored-graph variant (integer or `p/q`).
    #[arg(long, default_value = "5")]
    alpha: String,
    /// Output format: csv or jsonl.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Output path; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Largest instance size for the exhaustive-optimum sweeps (at most 8).
    #[arg(long, default_value_t = 5)]
    max_n: usize,
    /// Instances per sweep.
    #[arg(long, default_value_t = 250)]
    instances: usize,
    /// Longest request sequence per instance in the optimum sweeps.
    #[arg(long, default_value_t = 12)]
    requests: usize,
    /// Dependency edge probability for random instances.
    #[arg(long, default_value_t = 0.3)]
    edge_prob: f64,
    #[arg(long, default_value_t = 0xC0FFEE)]
    seed: u64,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    ruleset: RulesetSource,
    /// Also dump the full edge list (`u v` per line) to this path.
    #[arg(long, value_name = "PATH")]
    dump_dag: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Verification(String),
    Io(String),
}

impl Failure {
    fn exit(&self) -> ExitCode {
        let (code, prefix, msg) = match self {
            Failure::Usage(m) => (1, "error", m),
            Failure::Verification(m) => (2, "verification failed", m),
            Failure::Io(m) => (3, "i/o error", m),
        };
        eprintln!("{prefix}: {msg}");
        ExitCode::from(code)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if ok { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Stats(args) => cmd_stats(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.exit(),
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

struct LoadedRuleset {
    ruleset: Ruleset,
    achieved_density: Option<f64>,
}

fn load_ruleset(source: &RulesetSource) -> Result<LoadedRuleset, Failure> {
    match (&source.ruleset, &source.synthetic) {
        (Some(path), None) => {
            let text = read_file(path)?;
            let ruleset = salc_core::parse_classbench_ruleset(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            Ok(LoadedRuleset { ruleset, achieved_density: None })
        }
        (None, Some(spec)) => {
            let parts: Vec<&str> = spec.split(',').collect();
            if parts.len() != 3 {
                return Err(Failure::Usage(format!(
                    "--synthetic expects `n,density,seed`, got `{spec}`"
                )));
            }
            let n: usize = parts[0]
                .trim()
                .parse()
                .map_err(|_| Failure::Usage(format!("bad rule count `{}`", parts[0])))?;
            let density: f64 = parts[1]
                .trim()
                .parse()
                .map_err(|_| Failure::Usage(format!("bad density `{}`", parts[1])))?;
            let seed: u64 = parts[2]
                .trim()
                .parse()
                .map_err(|_| Failure::Usage(format!("bad seed `{}`", parts[2])))?;
            let synth = workload::gen_synthetic_ruleset(n, density, seed)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            Ok(LoadedRuleset {
                ruleset: synth.ruleset,
                achieved_density: Some(synth.achieved_density),
            })
        }
        _ => Err(Failure::Usage(
            "provide exactly one of --ruleset or --synthetic".to_string(),
        )),
    }
}

enum TraceSource {
    File(Trace),
    Generated(LocalityParams),
}

impl TraceSource {
    fn label(&self) -> String {
        match self {
            TraceSource::File(_) => "file".to_string(),
            TraceSource::Generated(params) => params.label(),
        }
    }

    fn seed(&self) -> u64 {
        match self {
            TraceSource::File(_) => 0,
            TraceSource::Generated(params) => params.seed,
        }
    }
}

fn load_trace_source(args: &RunArgs, ruleset: &Ruleset) -> Result<TraceSource, Failure> {
    match (&args.trace, &args.gen) {
        (Some(path), None) => {
            let text = read_file(path)?;
            let trace = workload::parse_classbench_trace(&text, ruleset)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            Ok(TraceSource::File(trace))
        }
        (None, Some(spec)) => {
            let parts: Vec<&str> = spec.split(',').collect();
            if parts.len() != 3 {
                return Err(Failure::Usage(format!(
                    "--gen expects `kind,param,seed`, got `{spec}`"
                )));
            }
            let kind: workload::LocalityKind =
                parts[0].trim().parse().map_err(Failure::Usage)?;
            let param: f64 = parts[1]
                .trim()
                .parse()
                .map_err(|_| Failure::Usage(format!("bad generator parameter `{}`", parts[1])))?;
            let seed: u64 = parts[2]
                .trim()
                .parse()
                .map_err(|_| Failure::Usage(format!("bad seed `{}`", parts[2])))?;
            let params = match kind {
                workload::LocalityKind::Zipf => LocalityParams::zipf(param, seed),
                workload::LocalityKind::Runs => LocalityParams::runs(param, seed),
                workload::LocalityKind::Uniform => Ok(LocalityParams::uniform(seed)),
            }
            .map_err(|e| Failure::Usage(e.to_string()))?;
            Ok(TraceSource::Generated(params))
        }
        _ => Err(Failure::Usage("provide exactly one of --trace or --gen".to_string())),
    }
}

#[derive(Serialize)]
struct MetricsRow {
    variant: String,
    ruleset_size: usize,
    locality: String,
    avg_lookup_nodes: f64,
    avg_swap_nodes: f64,
    avg_counted_cost: f64,
    memory_bytes: u64,
    max_depth: usize,
    avg_out_degree: f64,
    avg_ancestors: f64,
    full_edges: usize,
    reduced_edges: usize,
    seed: u64,
}

const CSV_HEADER: &str = "variant,ruleset_size,locality,avg_lookup_nodes,avg_swap_nodes,\
avg_counted_cost,memory_bytes,max_depth,avg_out_degree,avg_ancestors,full_edges,reduced_edges,seed";

impl MetricsRow {
    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{},{},{:.6},{:.6},{},{},{}",
            self.variant,
            self.ruleset_size,
            self.locality,
            self.avg_lookup_nodes,
            self.avg_swap_nodes,
            self.avg_counted_cost,
            self.memory_bytes,
            self.max_depth,
            self.avg_out_degree,
            self.avg_ancestors,
            self.full_edges,
            self.reduced_edges,
            self.seed,
        )
    }
}

struct RepResult {
    lookup: u64,
    swaps: u64,
    counted: f64,
    requests: u64,
}

fn run_requests(classifier: &mut Classifier, trace: &Trace) -> Result<(), Failure> {
    for request in &trace.requests {
        let outcome = match request {
            Request::Packet { packet, .. } => {
                classifier.classify(packet);
                Ok(())
            }
            Request::Access(id) => classifier.access_node(*id).map(|_| ()),
            Request::Insert(rule) => classifier.insert_rule((**rule).clone()).map(|_| ()),
            Request::Delete(id) => classifier.delete_rule(*id).map(|_| ()),
        };
        outcome.map_err(|e| Failure::Usage(format!("trace request failed: {e}")))?;
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    if args.reps < 1 {
        return Err(Failure::Usage("--reps must be at least 1".to_string()));
    }
    if args.format != "csv" && args.format != "jsonl" {
        return Err(Failure::Usage(format!("unknown format `{}`", args.format)));
    }
    let alpha: Alpha = args
        .alpha
        .parse()
        .map_err(|_| Failure::Usage(format!("bad alpha `{}`", args.alpha)))?;
    let mut variants: Vec<ClassifierVariant> = args
        .variants
        .iter()
        .map(|v| v.parse().map_err(Failure::Usage))
        .collect::<Result<_, _>>()?;
    variants.sort_by_key(|v| v.to_string());
    variants.dedup();
    if variants.is_empty() {
        return Err(Failure::Usage("at least one variant required".to_string()));
    }

    let loaded = load_ruleset(&args.ruleset)?;
    let trace_source = load_trace_source(&args, &loaded.ruleset)?;
    let full_dag = DepDag::from_ruleset(&loaded.ruleset);
    let reduced_edges = full_dag.transitive_reduction().edge_count();
    let dag_stats = full_dag.stats();

    let mut rows = Vec::new();
    for &variant in &variants {
        let variant_alpha = match variant {
            ClassifierVariant::MrfFast => alpha,
            _ => Alpha::one(),
        };
        let pristine = Classifier::with_alpha(loaded.ruleset.clone(), variant, variant_alpha)
            .map_err(|e| Failure::Usage(e.to_string()))?;
        let memory_bytes = pristine.memory_footprint();
        let reps: Vec<RepResult> = (0..args.reps)
            .into_par_iter()
            .map(|rep| -> Result<RepResult, Failure> {
                // Every repetition starts from a pristine classifier, so
                // traces with structural updates replay correctly too.
                let mut classifier = pristine.clone();
                let trace;
                let trace_ref = match &trace_source {
                    TraceSource::File(t) => t,
                    TraceSource::Generated(params) => {
                        let rep_params = LocalityParams {
                            seed: params.seed.wrapping_add(u64::from(rep)),
                            ..*params
                        };
                        trace = workload::gen_trace(&loaded.ruleset, &rep_params, args.packets)
                            .map_err(|e| Failure::Usage(e.to_string()))?;
                        &trace
                    }
                };
                run_requests(&mut classifier, trace_ref)?;
                let totals = classifier.totals();
                Ok(RepResult {
                    lookup: totals.lookup_nodes,
                    swaps: totals.swap_nodes,
                    counted: salc_core::cost_to_f64(totals.counted_cost(variant_alpha)),
                    requests: classifier.requests(),
                })
            })
            .collect::<Result<_, _>>()?;

        let mut lookup_avg = 0.0;
        let mut swap_avg = 0.0;
        let mut counted_avg = 0.0;
        for rep in &reps {
            let requests = rep.requests.max(1) as f64;
            lookup_avg += rep.lookup as f64 / requests;
            swap_avg += rep.swaps as f64 / requests;
            counted_avg += rep.counted / requests;
        }
        let k = reps.len() as f64;
        rows.push(MetricsRow {
            variant: variant.to_string(),
            ruleset_size: loaded.ruleset.len(),
            locality: trace_source.label(),
            avg_lookup_nodes: lookup_avg / k,
            avg_swap_nodes: swap_avg / k,
            avg_counted_cost: counted_avg / k,
            memory_bytes,
            max_depth: dag_stats.max_depth,
            avg_out_degree: dag_stats.avg_out_degree,
            avg_ancestors: dag_stats.avg_ancestors,
            full_edges: full_dag.edge_count(),
            reduced_edges,
            seed: trace_source.seed(),
        });
    }

    let mut out = String::new();
    if args.format == "csv" {
        out.push_str(CSV_HEADER);
        out.push('\n');
        for row in &rows {
            out.push_str(&row.to_csv());
            out.push('\n');
        }
    } else {
        for row in &rows {
            let line = serde_json::to_string(row)
                .map_err(|e| Failure::Io(format!("serializing row: {e}")))?;
            out.push_str(&line);
            out.push('\n');
        }
    }
    match &args.out {
        Some(path) => std::fs::write(path, out)
            .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?,
        None => print!("{out}"),
    }
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<(), Failure> {
    let loaded = load_ruleset(&args.ruleset)?;
    let dag = DepDag::from_ruleset(&loaded.ruleset);
    let reduced = dag.transitive_reduction();
    let stats = dag.stats();
    println!("nodes: {}", dag.node_count());
    println!("full edges: {}", dag.edge_count());
    println!("reduced edges: {}", reduced.edge_count());
    println!("max depth: {}", stats.max_depth);
    println!("avg out-degree: {:.6}", stats.avg_out_degree);
    println!("avg ancestors: {:.6}", stats.avg_ancestors);
    if let Some(density) = loaded.achieved_density {
        println!("achieved overlap density: {density:.6}");
    }
    if let Some(path) = &args.dump_dag {
        std::fs::write(path, dag.dump_edges())
            .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn dump_instance(inst: &RandomInstance) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "  nodes: {}", inst.initial.len());
    let _ = writeln!(
        out,
        "  initial: {:?}",
        inst.initial.order().iter().map(|id| id.0).collect::<Vec<_>>()
    );
    let _ = writeln!(
        out,
        "  requests: {:?}",
        inst.requests.iter().map(|id| id.0).collect::<Vec<_>>()
    );
    let edges = inst.dag.dump_edges();
    if edges.is_empty() {
        let _ = writeln!(out, "  edges: (none)");
    } else {
        let _ = writeln!(out, "  edges (u depends on v):");
        for line in edges.lines() {
            let _ = writeln!(out, "    {line}");
        }
    }
    out
}

/// Truncates an instance to the shortest failing request prefix.
fn minimize<F>(inst: &RandomInstance, fails: F) -> RandomInstance
where
    F: Fn(&RandomInstance) -> bool,
{
    for t in 1..=inst.requests.len() {
        let candidate = RandomInstance {
            dag: inst.dag.clone(),
            initial: inst.initial.clone(),
            requests: inst.requests[..t].to_vec(),
        };
        if fails(&candidate) {
            return candidate;
        }
    }
    inst.clone()
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    if args.max_n > oracle::OPT_MAX_NODES {
        return Err(Failure::Usage(format!(
            "refusing --max-n {}: the exhaustive optimum enumerates permutations and is limited to {} nodes",
            args.max_n,
            oracle::OPT_MAX_NODES
        )));
    }
    if args.max_n < 2 {
        return Err(Failure::Usage("--max-n must be at least 2".to_string()));
    }
    let mut failures = Vec::new();

    // Rearrangement bound and feasibility across the full size range.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let mut violation = None;
        let mut accesses = 0u64;
        'sweep: for i in 0..args.instances {
            let n = rng.gen_range(8..=64);
            let inst = oracle::random_instance(n, 24, args.edge_prob, &mut rng);
            let provider = DagProvider::new(&inst.dag);
            let mut cfg = inst.initial.clone();
            let model = CostModel::unit();
            let mut ledger = CostLedger::new();
            for (t, &request) in inst.requests.iter().enumerate() {
                let out = list::mrf_access(&mut cfg, &provider, request, &model, &mut ledger)
                    .expect("requests target present nodes");
                accesses += 1;
                if out.transpositions > out.pre_position as u64
                    || !inst.dag.validate_feasible(&cfg).unwrap()
                {
                    violation = Some((i, t, inst));
                    break 'sweep;
                }
            }
        }
        match violation {
            None => println!("PASS rearrangement-bound: transpositions <= position and feasibility on {accesses} accesses"),
            Some((i, t, inst)) => {
                let minimized = RandomInstance {
                    dag: inst.dag.clone(),
                    initial: inst.initial.clone(),
                    requests: inst.requests[..=t].to_vec(),
                };
                failures.push(format!(
                    "rearrangement-bound: violated at instance {i}, request {t} (seed {})\n{}",
                    args.seed,
                    dump_instance(&minimized)
                ));
            }
        }
    }

    // Move-To-Front equivalence with no dependencies.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed ^ 0x11);
        let mut diverged = None;
        'mtf: for i in 0..args.instances {
            let n = rng.gen_range(2..=10);
            let inst = oracle::random_instance(n, 20, 0.0, &mut rng);
            let provider = DagProvider::new(&inst.dag);
            let mut cfg = inst.initial.clone();
            let mut reference: Vec<NodeId> = inst.initial.order().to_vec();
            let model = CostModel::unit();
            let mut ledger = CostLedger::new();
            for (t, &request) in inst.requests.iter().enumerate() {
                list::mrf_access(&mut cfg, &provider, request, &model, &mut ledger).unwrap();
                let at = reference.iter().position(|&v| v == request).unwrap();
                reference.remove(at);
                reference.insert(0, request);
                if cfg.order() != reference {
                    diverged = Some((i, t, inst));
                    break 'mtf;
                }
            }
        }
        match diverged {
            None => println!("PASS mtf-equivalence: empty-graph runs match Move-To-Front exactly"),
            Some((i, t, inst)) => failures.push(format!(
                "mtf-equivalence: diverged at instance {i}, request {t}\n{}",
                dump_instance(&inst)
            )),
        }
    }

    // Strict competitiveness and per-event audits against the optimum.
    let alphas = [
        (Alpha::one(), 4u64),
        (Alpha::from_int(2).unwrap(), 4),
        (Alpha::from_int(5).unwrap(), 6),
    ];
    for (alpha, bound) in alphas {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed ^ 0x22);
        let mut bad_ratio = None;
        let mut bad_audit = None;
        for i in 0..args.instances {
            let n = rng.gen_range(2..=args.max_n);
            let m = rng.gen_range(1..=args.requests.max(1));
            let inst = oracle::random_instance(n, m, args.edge_prob, &mut rng);
            let opt = oracle::opt_offline(&inst.dag, &inst.initial, &inst.requests, alpha)
                .expect("within the exhaustive limit");
            let mrf = oracle::run_mrf(&inst.dag, &inst.initial, &inst.requests, alpha)
                .expect("well-formed instance");
            if mrf.total_cost > salc_core::cost_from_int(bound) * opt.total_cost {
                bad_ratio.get_or_insert((i, inst.clone()));
            }
            if alpha == Alpha::one() {
                let audits = oracle::run_with_audit(
                    &inst.dag,
                    &inst.initial,
                    &inst.requests,
                    alpha,
                    &opt.witness,
                )
                .expect("witness aligned with requests");
                if let Some(t) = audits
                    .iter()
                    .position(|a| !a.bounds_hold() || !a.invariants_hold())
                {
                    bad_audit.get_or_insert((i, t, inst));
                }
            }
            if bad_ratio.is_some() || bad_audit.is_some() {
                break;
            }
        }
        match bad_ratio {
            None => println!(
                "PASS competitive-bound (alpha {alpha}): cost <= {bound} * optimum on {} instances",
                args.instances
            ),
            Some((i, inst)) => {
                let minimized = minimize(&inst, |candidate| {
                    let opt =
                        oracle::opt_offline(&candidate.dag, &candidate.initial, &candidate.requests, alpha)
                            .unwrap();
                    let mrf =
                        oracle::run_mrf(&candidate.dag, &candidate.initial, &candidate.requests, alpha)
                            .unwrap();
                    mrf.total_cost > salc_core::cost_from_int(bound) * opt.total_cost
                });
                failures.push(format!(
                    "competitive-bound (alpha {alpha}): exceeded {bound} * optimum at instance {i} (seed {})\n{}",
                    args.seed,
                    dump_instance(&minimized)
                ));
            }
        }
        if alpha == Alpha::one() {
            match bad_audit {
                None => println!(
                    "PASS event-audits: created <= k, destroyed >= l, delta <= k - l on {} instances",
                    args.instances
                ),
                Some((i, t, inst)) => {
                    let minimized = RandomInstance {
                        dag: inst.dag.clone(),
                        initial: inst.initial.clone(),
                        requests: inst.requests[..=t].to_vec(),
                    };
                    failures.push(format!(
                        "event-audits: bound violated at instance {i}, event {t} (seed {})\n{}",
                        args.seed,
                        dump_instance(&minimized)
                    ));
                }
            }
        }
    }

    if failures.is_empty() {
        println!("all checks passed");
        Ok(())
    } else {
        for failure in &failures {
            eprintln!("FAIL {failure}");
        }
        Err(Failure::Verification(format!("{} check(s) failed", failures.len())))
    }
}
