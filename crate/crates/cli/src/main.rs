//! `dynfl`: generate, solve, preprocess, round and verify dynamic facility
//! location instances.
//!
//! Exit status: 0 on success, 1 on a usage error, 2 on a data error, 3 when
//! a statistical bound check fails.

mod files;

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use dynfl::evaluate::{
    approximation_report, check_bounds, cost, perturbation_experiment, run_trials,
    ApproximationReport, BoundReport, TrialStats,
};
use dynfl::instance::{generate_drifting, read_instance, write_instance, Instance};
use dynfl::lp::{lp_cost_breakdown, solve_instance, DEFAULT_TOL};
use dynfl::oracle::{brute_force, DEFAULT_LIMIT};
use dynfl::preprocess::{duplicate_facilities, stabilize};
use dynfl::rounding::round_with_seed;
use serde::Serialize;

use files::{parse_json, read_prep, read_text, to_json, write_text, PrepFile, SolutionFile};

#[derive(Parser, Debug)]
#[command(
    name = "dynfl",
    version,
    about = "Dynamic facility location via exponential clocks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Output path; JSON goes to standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Leave the timestamp out of reports.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a drifting-points instance.
    Gen {
        #[arg(long)]
        nf: usize,
        #[arg(long)]
        nc: usize,
        #[arg(long = "T")]
        horizon: usize,
        #[arg(long, default_value_t = 0.1)]
        drift: f64,
        #[arg(long, default_value_t = 1.0)]
        g: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Check an instance's costs and bipartite triangle inequalities.
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Solve the LP relaxation.
    Solve {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Stabilize and duplicate an LP solution.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Round a preprocessed solution once.
    Round {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo bound checks, from an instance or a preprocessed solution.
    Experiment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Shared-clock comparison of two preprocessed solutions.
    Perturb {
        #[arg(long = "inA")]
        in_a: PathBuf,
        #[arg(long = "inB")]
        in_b: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Exact optimum by enumeration.
    Oracle {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_LIMIT)]
        limit: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Solve, preprocess, run trials and compare against the exact optimum
    /// when it is within the enumeration limit.
    Pipeline {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_LIMIT)]
        limit: u64,
        #[command(flatten)]
        common: Common,
    },
}

/// The settings a report was produced with.
#[derive(Debug, Clone, Default, Serialize)]
struct RunConfig {
    subcommand: &'static str,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    inputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    limit: Option<u64>,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp: Option<u64>,
    report: &'a T,
}

#[derive(Debug)]
enum Failure {
    Data {
        stage: &'static str,
        message: String,
    },
    Bounds(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Data { stage, message } => write!(f, "{stage}: {message}"),
            Failure::Bounds(m) => write!(f, "bound check failed: {m}"),
        }
    }
}

/// Tags a data error with the stage it came from.
fn at<T, E: fmt::Display>(stage: &'static str, r: Result<T, E>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Data {
        stage,
        message: e.to_string(),
    })
}

/// Writes JSON to `--out`, or to standard output when absent. Returns
/// whether a human summary may go to standard output.
fn emit(common: &Common, json: &str) -> Result<bool, Failure> {
    match &common.out {
        Some(path) => {
            at("output", write_text(path, json))?;
            Ok(true)
        }
        None => {
            print!("{json}");
            Ok(false)
        }
    }
}

fn emit_report<T: Serialize>(
    common: &Common,
    config: &RunConfig,
    report: &T,
) -> Result<bool, Failure> {
    let timestamp = (!common.no_timestamp).then(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs())
    });
    emit(
        common,
        &to_json(&Envelope {
            config,
            timestamp,
            report,
        }),
    )
}

fn load_instance(path: &Path) -> Result<Instance, Failure> {
    at("read instance", read_instance(path))
}

fn summarize_bounds(bounds: &BoundReport) {
    println!(
        "bounds      {} checks, {} failed, {} structure violations",
        bounds.checks.len(),
        bounds.failures,
        bounds.structure_violations
    );
    for c in bounds.failed().take(10) {
        println!(
            "  failed {} t={:?} copy={:?} client={:?}: empirical {:.6} vs bound {:.6} (sigma {:.3e})",
            c.name, c.t, c.copy, c.client, c.empirical, c.bound, c.sigma
        );
    }
}

fn summarize_approximation(r: &ApproximationReport) {
    println!(
        "lp          {:.6} (opening {:.6}, connection {:.6}, switching {:.6})",
        r.lp.total(),
        r.lp.opening,
        r.lp.connection,
        r.lp.switching
    );
    println!(
        "algorithm   {:.6} +- {:.3e} over {} trials",
        r.algorithm.total.mean,
        r.algorithm.total.sigma(),
        r.trials
    );
    if let Some(ratio) = r.ratio {
        println!("ratio/lp    {:.4}", ratio.mean);
    }
    if let Some(opt) = &r.oracle {
        println!("optimum     {:.6} ({} tuples)", opt.cost, opt.enumerated);
        if let Some(ratio) = opt.ratio {
            println!("ratio/opt   {:.4}", ratio.mean);
        }
    }
    for c in r.checks.iter().filter(|c| !c.passed) {
        println!("  failed {}: {:.6} vs {:.6}", c.name, c.empirical, c.bound);
    }
    summarize_bounds(&r.bounds);
    println!("result      {}", if r.passed { "pass" } else { "FAIL" });
}

#[derive(Serialize)]
struct ValidationOutput<'a> {
    passed: bool,
    violations: &'a [dynfl::instance::Violation],
}

#[derive(Serialize)]
struct RoundOutput {
    seed: u64,
    solution: dynfl::rounding::RoundedSolution,
    #[serde(skip_serializing_if = "Option::is_none")]
    cost: Option<dynfl::evaluate::CostBreakdown>,
}

#[derive(Serialize)]
struct PrepExperiment {
    stats: TrialStats,
    bounds: BoundReport,
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Gen {
            nf,
            nc,
            horizon,
            drift,
            g,
            seed,
            common,
        } => {
            let inst = at("gen", generate_drifting(nf, nc, horizon, drift, g, seed))?;
            match &common.out {
                Some(path) => {
                    at("output", write_instance(&inst, path))?;
                    println!(
                        "wrote {nf} facilities, {nc} clients, T={horizon} to {}",
                        path.display()
                    );
                }
                None => print!("{}", to_json(&inst)),
            }
        }
        Command::Validate { input, common } => {
            let inst = load_instance(&input)?;
            let report = inst.validate();
            let config = RunConfig {
                subcommand: "validate",
                inputs: vec![input.clone()],
                ..Default::default()
            };
            let out = ValidationOutput {
                passed: report.passed(),
                violations: &report.violations,
            };
            if emit_report(&common, &config, &out)? {
                println!(
                    "{}: {} violation(s)",
                    input.display(),
                    report.violations.len()
                );
            }
            if let Some(v) = report.violations.first() {
                return Err(Failure::Data {
                    stage: "validate",
                    message: format!("{} violation(s), first: {v}", report.violations.len()),
                });
            }
        }
        Command::Solve { input, tol, common } => {
            let inst = load_instance(&input)?;
            let lp = at("solve", solve_instance(&inst, tol))?;
            let file = SolutionFile::new(&inst, &lp);
            if emit(&common, &to_json(&file))? {
                println!(
                    "lp optimum {:.9} after {} pivots (opening {:.6}, connection {:.6}, switching {:.6})",
                    lp.objective,
                    lp.iterations,
                    lp.breakdown.opening,
                    lp.breakdown.connection,
                    lp.breakdown.switching
                );
            }
        }
        Command::Preprocess { input, common } => {
            let text = at("read solution", read_text(&input))?;
            let file: SolutionFile = at("read solution", parse_json(&input, &text))?;
            let frac = at("read solution", file.fractional())?;
            let stable = at("stabilize", stabilize(&frac))?;
            let stabilized = at("stabilize", lp_cost_breakdown(&stable, &file.instance))?;
            let prep = at("duplicate", duplicate_facilities(&stable))?;
            at("duplicate", prep.validate())?;
            let out = PrepFile {
                instance: file.instance.clone(),
                lp: file.breakdown(),
                stabilized,
                preprocessed: prep,
            };
            if emit(&common, &to_json(&out))? {
                println!(
                    "{} copies of {} facilities; stabilized cost {:.6} (lp {:.6})",
                    out.preprocessed.num_copies(),
                    out.preprocessed.num_facilities,
                    stabilized.total(),
                    file.breakdown().total()
                );
            }
        }
        Command::Round {
            input,
            seed,
            common,
        } => {
            let prep = at("read preprocessed", read_prep(&input))?;
            let solution = at("round", round_with_seed(&prep.preprocessed, seed))?;
            let cost = match &prep.instance {
                Some(inst) => Some(at("evaluate", cost(inst, &solution))?),
                None => None,
            };
            let config = RunConfig {
                subcommand: "round",
                inputs: vec![input],
                seed: Some(seed),
                ..Default::default()
            };
            let out = RoundOutput {
                seed,
                solution,
                cost,
            };
            if emit_report(&common, &config, &out)? {
                if let Some(c) = cost {
                    println!(
                        "cost {:.6} (opening {:.6}, connection {:.6}, switching {:.6})",
                        c.total, c.opening, c.connection, c.switching
                    );
                }
            }
        }
        Command::Experiment {
            input,
            trials,
            seed,
            tol,
            common,
        } => {
            let text = at("read input", read_text(&input))?;
            let value: serde_json::Value = at("read input", parse_json(&input, &text))?;
            let config = RunConfig {
                subcommand: "experiment",
                inputs: vec![input.clone()],
                seed: Some(seed),
                trials: Some(trials),
                tol: Some(tol),
                limit: None,
            };
            if value.get("preprocessed").is_some() {
                let prep = at("read preprocessed", read_prep(&input))?;
                let inst = prep.instance.expect("prep files carry the instance");
                let stats = at(
                    "experiment",
                    run_trials(&inst, &prep.preprocessed, trials, seed),
                )?;
                let bounds = at("bounds", check_bounds(&stats, &prep.preprocessed, &inst))?;
                let passed = bounds.passed;
                let out = PrepExperiment { stats, bounds };
                if emit_report(&common, &config, &out)? {
                    summarize_bounds(&out.bounds);
                }
                if !passed {
                    return Err(Failure::Bounds(format!(
                        "{} check(s) failed",
                        out.bounds.failures
                    )));
                }
            } else {
                let inst = load_instance(&input)?;
                let report = at(
                    "experiment",
                    approximation_report(&inst, trials, seed, tol, 0),
                )?;
                finish_approximation(&common, &config, &report)?;
            }
        }
        Command::Perturb {
            in_a,
            in_b,
            trials,
            seed,
            common,
        } => {
            let a = at("read prepA", read_prep(&in_a))?;
            let b = at("read prepB", read_prep(&in_b))?;
            let report = at(
                "perturb",
                perturbation_experiment(
                    &a.preprocessed,
                    &b.preprocessed,
                    None::<&BTreeSet<usize>>,
                    trials,
                    seed,
                ),
            )?;
            let config = RunConfig {
                subcommand: "perturb",
                inputs: vec![in_a, in_b],
                seed: Some(seed),
                trials: Some(trials),
                ..Default::default()
            };
            if emit_report(&common, &config, &report)? {
                for (t, e) in report.differing_paths.iter().enumerate() {
                    println!(
                        "t={t}: |K|={} differing paths {:.4} +- {:.2e} (bound {})",
                        report.changed[t].len(),
                        e.mean,
                        e.sigma(),
                        7 * report.changed[t].len()
                    );
                }
            }
            if !report.passed {
                return Err(Failure::Bounds("differing-path bound".into()));
            }
        }
        Command::Oracle {
            input,
            limit,
            common,
        } => {
            let inst = load_instance(&input)?;
            let exact = at("oracle", brute_force(&inst, limit))?;
            let config = RunConfig {
                subcommand: "oracle",
                inputs: vec![input],
                limit: Some(limit),
                ..Default::default()
            };
            if emit_report(&common, &config, &exact)? {
                println!("optimum {:.9} over {} tuples", exact.cost, exact.enumerated);
            }
        }
        Command::Pipeline {
            input,
            trials,
            seed,
            tol,
            limit,
            common,
        } => {
            let inst = load_instance(&input)?;
            let report = at(
                "pipeline",
                approximation_report(&inst, trials, seed, tol, limit),
            )?;
            let config = RunConfig {
                subcommand: "pipeline",
                inputs: vec![input],
                seed: Some(seed),
                trials: Some(trials),
                tol: Some(tol),
                limit: Some(limit),
            };
            finish_approximation(&common, &config, &report)?;
        }
    }
    Ok(())
}

fn finish_approximation(
    common: &Common,
    config: &RunConfig,
    report: &ApproximationReport,
) -> Result<(), Failure> {
    if emit_report(common, config, report)? {
        summarize_approximation(report);
    }
    if report.passed {
        Ok(())
    } else {
        let failed = report.checks.iter().filter(|c| !c.passed).count() + report.bounds.failures;
        Err(Failure::Bounds(format!("{failed} check(s) failed")))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(match f {
                Failure::Data { .. } => 2,
                Failure::Bounds(_) => 3,
            })
        }
    }
}
