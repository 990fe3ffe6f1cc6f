//! `imt-solve`: solve a native `.imt` instance or an SMT-LIB script.
//!
//! Exit codes: 0 optimal/sat (or an accepted replay), 10 infeasible,
//! 20 unbounded, 30 budget exceeded, 1 usage, input or check errors.

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use imt_core::engine::{kernel_budgets, prepare_instance};
use imt_core::frontend::oracle::brute_force_solve_capped;
use imt_core::frontend::random::{random_instance, RandomParams};
use imt_core::frontend::{abstract_variables, parse_native, parse_smtlib, print_native, OracleError};
use imt_core::kernel::{replay_trace, ReplayVerdict, Trace};
use imt_core::{solve, Assignment, Config, ImtInstance, Int, SolveStatus, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Native,
    Smt,
}

#[derive(Parser, Debug)]
#[command(name = "imt-solve", version, about = "Branch-and-cut solver for ILP modulo EUF")]
struct Cli {
    /// Input file (`.imt` native, `.smt2` SMT-LIB).
    input: Option<PathBuf>,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Bound `[-N, N]` for variables without declared bounds.
    #[arg(long, value_name = "N")]
    default_bound: Option<u64>,
    /// Write the kernel step trace to PATH.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Check the trace at PATH against the input instead of solving.
    #[arg(long, value_name = "PATH", conflicts_with = "trace")]
    replay: Option<PathBuf>,
    /// Cross-check the answer with exhaustive enumeration when the box is small.
    #[arg(long)]
    oracle_check: bool,
    /// Maximum number of search nodes.
    #[arg(long, value_name = "N")]
    node_budget: Option<u64>,
    /// Maximum number of cuts added per node and round.
    #[arg(long, value_name = "N")]
    cut_cap: Option<usize>,
    /// Seed for `--generate`.
    #[arg(long, value_name = "N", default_value_t = 0)]
    seed: u64,
    /// Print a random native instance for `--seed` and exit.
    #[arg(long)]
    generate: bool,
}

const ORACLE_NODE_CAP: u64 = 5_000_000;

struct Loaded {
    instance: ImtInstance,
    offset: Int,
    /// Variables shown in the model.
    shown: Vec<VarId>,
    bools: Vec<VarId>,
    has_objective: bool,
    print_model: bool,
}

fn infer_format(path: &Path) -> Result<Format> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("imt") => Ok(Format::Native),
        Some("smt2") | Some("smt") => Ok(Format::Smt),
        _ => bail!("cannot infer the format of {}; pass --format", path.display()),
    }
}

fn load(cli: &Cli, path: &Path) -> Result<Loaded> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let format = match cli.format {
        Some(f) => f,
        None => infer_format(path)?,
    };
    let default_bound = cli.default_bound.map(Int::from);
    match format {
        Format::Native => {
            let instance = parse_native(&text).with_context(|| format!("parsing {}", path.display()))?;
            Ok(Loaded {
                shown: instance.vars.iter().cloned().collect(),
                bools: Vec::new(),
                has_objective: !instance.objective.is_empty(),
                offset: Int::from(0),
                print_model: true,
                instance,
            })
        }
        Format::Smt => {
            let problem = parse_smtlib(&text).with_context(|| format!("parsing {}", path.display()))?;
            let abs = abstract_variables(&problem, default_bound.as_ref()).context("encoding")?;
            Ok(Loaded {
                bools: problem.bools.iter().map(|b| VarId::new(b)).collect(),
                shown: abs.source_vars,
                has_objective: abs.has_objective,
                offset: abs.objective_offset,
                print_model: problem.get_model || abs.has_objective,
                instance: abs.instance,
            })
        }
    }
}

fn config(cli: &Cli) -> Config {
    let mut cfg = Config::default();
    if let Some(n) = cli.node_budget {
        cfg.node_budget = Some(n);
    }
    if let Some(n) = cli.cut_cap {
        cfg.cut_cap_per_node = n;
    }
    cfg.default_bound = cli.default_bound.map(Int::from);
    cfg.emit_trace = cli.trace.is_some();
    cfg
}

fn print_model(l: &Loaded, a: &Assignment) {
    for v in &l.shown {
        let Ok(x) = a.get(v) else { continue };
        if l.bools.contains(v) {
            println!("({v} {})", if x > &Int::from(0) { "true" } else { "false" });
        } else {
            println!("({v} {x})");
        }
    }
}

/// Compares with enumeration; `Ok(false)` when the box is too large.
fn oracle_check(inst: &ImtInstance, status: &SolveStatus) -> Result<bool> {
    let oracle = match brute_force_solve_capped(inst, &inst.bounds, ORACLE_NODE_CAP) {
        Ok(s) => s,
        Err(OracleError::BoxTooLarge(_) | OracleError::Unbounded(_) | OracleError::Overflow) => return Ok(false),
    };
    let agree = match (status, &oracle) {
        (SolveStatus::Infeasible, SolveStatus::Infeasible) => true,
        (SolveStatus::Optimal { value: a, .. }, SolveStatus::Optimal { value: b, .. }) => a == b,
        _ => false,
    };
    if !agree {
        bail!("oracle mismatch: solver says {status:?}, enumeration says {oracle:?}");
    }
    Ok(true)
}

fn run(cli: Cli) -> Result<u8> {
    if cli.generate {
        print!("{}", print_native(&random_instance(cli.seed, &RandomParams::default())));
        return Ok(0);
    }
    let Some(path) = cli.input.as_deref() else {
        bail!("no input file given");
    };
    let loaded = load(&cli, path)?;
    let cfg = config(&cli);

    if let Some(tp) = &cli.replay {
        let file = fs::File::open(tp).with_context(|| format!("opening {}", tp.display()))?;
        let trace = Trace::read_from(BufReader::new(file)).context("reading trace")?;
        let inst = prepare_instance(&loaded.instance, cfg.default_bound.as_ref());
        return match replay_trace(&inst, &trace, kernel_budgets(&cfg))? {
            ReplayVerdict::Accepted(_) => {
                println!("trace accepted");
                Ok(0)
            }
            ReplayVerdict::Rejected { index, reason } => {
                println!("trace rejected at step {index}: {reason:?}");
                Ok(1)
            }
        };
    }

    let result = solve(&loaded.instance, &cfg)?;
    let s = &result.stats;
    eprintln!(
        "nodes {} lp {} cuts {} branches {} propagations {} theory-conflicts {} steps {}",
        s.nodes, s.lp_solves, s.cuts, s.branches, s.propagations, s.theory_conflicts, s.steps
    );
    if let (Some(tp), Some(trace)) = (&cli.trace, &result.trace) {
        let file = fs::File::create(tp).with_context(|| format!("creating {}", tp.display()))?;
        trace.write_to(std::io::BufWriter::new(file))?;
    }
    if cli.oracle_check {
        let inst = prepare_instance(&loaded.instance, cfg.default_bound.as_ref());
        if oracle_check(&inst, &result.status)? {
            eprintln!("oracle agrees");
        } else {
            eprintln!("oracle check skipped: box too large or unbounded");
        }
    }
    Ok(match &result.status {
        SolveStatus::Optimal { assignment, value } => {
            if loaded.has_objective {
                println!("optimal {}", value + &loaded.offset);
            } else {
                println!("sat");
            }
            if loaded.print_model {
                print_model(&loaded, assignment);
            }
            0
        }
        SolveStatus::Infeasible => {
            println!("infeasible");
            10
        }
        SolveStatus::Unbounded { .. } => {
            println!("unbounded");
            20
        }
        SolveStatus::BudgetExceeded { .. } => {
            println!("unknown");
            30
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
