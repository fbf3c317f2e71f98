//! Command-line front end: TOML documents in, deterministic text reports out.
//!
//! Five subcommands cover the library surface: `solve`, `compare`, `nlexp`,
//! `recover` and `extend-static`. Every run prints a report built by
//! [`crate::report`] and exits with a documented code:
//!
//! * 0: success (and, for `compare`, the order conclusion holds)
//! * 2: unreadable or invalid input documents
//! * 3: a numeric solve or recovery failed
//! * 4: an assumption probe found a violation
//! * 5: comparison conditions verified but the conclusion failed
//! * 6: a finding: an order counterexample or an inconsistency certificate
//!
//! Findings (6) are results, not failures: the report carries the full
//! numeric evidence. `BSDE_NUM_THREADS` caps the worker pool used for the
//! per-level parallel sweeps.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;

use crate::comparison::{
    check_conditions, linear_delta_analysis, strictness_analysis, ComparisonOutcome,
    ModeSchedule,
};
use crate::document::{
    build_driver, build_terminal, build_tree, parse_driver_doc, parse_static_map,
    parse_terminal_doc, parse_tree_doc, DriverDoc,
};
use crate::driver::Driver;
use crate::error::{Error, Result};
use crate::nlexp::{check_balanced, expectation_from_driver, risk_measure};
use crate::recovery::{
    recover_from_endpoints, recover_from_one_step, validate_phi, EndpointOracle, OneStepOracle,
    ZeroHedgingFunction,
};
use crate::report::{fmt_num, fmt_vec, sha256_hex, ReportBuilder};
use crate::representation::{GainsMatrix, GainsProcess};
use crate::solver::{check_driver_assumptions, solve, BsdeSolution, ProbeConfig};
use crate::static2dyn::{builtin_static, extend_static, ExtensionResult, Inconsistency};
use crate::testkit;
use crate::tree::{AdaptedProcess, ScenarioTree};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_SOLVE: i32 = 3;
pub const EXIT_PROBE: i32 = 4;
pub const EXIT_CONCLUSION: i32 = 5;
pub const EXIT_FINDING: i32 = 6;

/// Finished run: the full report text and the process exit code.
#[derive(Clone, Debug)]
pub struct CliOutcome {
    pub report: String,
    pub exit_code: i32,
}

#[derive(Debug, Parser)]
#[command(
    name = "bsde",
    version,
    about = "Backward stochastic difference equations on finite scenario trees"
)]
pub struct Cli {
    /// Also write the report to this file.
    #[arg(long, global = true, value_name = "PATH")]
    pub report: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the backward equation for a driver and terminal condition.
    Solve(SolveArgs),
    /// Verify the order conditions for two problems and check the conclusion.
    Compare(CompareArgs),
    /// Evaluate the induced nonlinear expectation or risk measure.
    Nlexp(NlexpArgs),
    /// Recover driver values from observed solution maps.
    Recover(RecoverArgs),
    /// Extend a static map to a dynamic family, or certify that none exists.
    ExtendStatic(ExtendStaticArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Scenario tree document.
    #[arg(long, value_name = "PATH")]
    pub tree: PathBuf,
    /// Driver document.
    #[arg(long, value_name = "PATH")]
    pub driver: PathBuf,
    /// Terminal condition document.
    #[arg(long, value_name = "PATH")]
    pub terminal: PathBuf,
    /// Number of grid points per component in the assumption probe.
    #[arg(long, value_name = "N")]
    pub probe_grid: Option<usize>,
    /// Agreement tolerance used by the assumption probe.
    #[arg(long, value_name = "TOL")]
    pub tolerance: Option<f64>,
}

#[derive(Clone, Copy, Debug, Eq, PartialEq, ValueEnum)]
pub enum CompareMode {
    Standard,
    Alternate,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Scenario tree document.
    #[arg(long, value_name = "PATH")]
    pub tree: PathBuf,
    /// First driver document.
    #[arg(long, value_name = "PATH")]
    pub driver: PathBuf,
    /// Second driver document.
    #[arg(long, value_name = "PATH")]
    pub driver2: PathBuf,
    /// First terminal condition document.
    #[arg(long, value_name = "PATH")]
    pub terminal: PathBuf,
    /// Second terminal condition document.
    #[arg(long, value_name = "PATH")]
    pub terminal2: PathBuf,
    /// Which sensitivity/monotonicity condition pair to verify.
    #[arg(long, value_enum, default_value_t = CompareMode::Standard)]
    pub mode: CompareMode,
}

#[derive(Clone, Copy, Debug, Eq, PartialEq, ValueEnum)]
pub enum EvalMode {
    Expectation,
    Risk,
}

#[derive(Debug, Args)]
pub struct NlexpArgs {
    /// Scenario tree document.
    #[arg(long, value_name = "PATH")]
    pub tree: PathBuf,
    /// Driver document; must be normalized and independent of y.
    #[arg(long, value_name = "PATH")]
    pub driver: PathBuf,
    /// Terminal condition document: the variable to evaluate.
    #[arg(long, value_name = "PATH")]
    pub terminal: PathBuf,
    /// Evaluation time.
    #[arg(long, default_value_t = 0)]
    pub time: usize,
    /// Report the expectation itself or the induced risk measure.
    #[arg(long, value_enum, default_value_t = EvalMode::Expectation)]
    pub mode: EvalMode,
}

#[derive(Clone, Copy, Debug, Eq, PartialEq, ValueEnum)]
pub enum RecoverMethod {
    /// Probe a one-step solution map.
    OneStep,
    /// Probe an endpoint map together with a zero-gains section.
    Endpoints,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    /// Scenario tree document.
    #[arg(long, value_name = "PATH")]
    pub tree: PathBuf,
    /// Driver document used to generate the observed maps.
    #[arg(long, value_name = "PATH")]
    pub driver: PathBuf,
    /// Time level whose one-step map is observed.
    #[arg(long, default_value_t = 0)]
    pub time: usize,
    /// Which observed-map interface to recover from.
    #[arg(long, value_enum, default_value_t = RecoverMethod::OneStep)]
    pub method: RecoverMethod,
    /// Number of random (value, gains) probes.
    #[arg(long, default_value_t = 20)]
    pub probes: usize,
    /// Seed for the probe sampler.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ExtendStaticArgs {
    /// Scenario tree document.
    #[arg(long, value_name = "PATH")]
    pub tree: PathBuf,
    /// Terminal condition document: the variable to extend.
    #[arg(long, value_name = "PATH")]
    pub terminal: PathBuf,
    /// Static map selector: mean, essinf, mixture:alpha=A or entropic:gamma=G.
    #[arg(long, value_name = "MAP")]
    pub static_map: String,
}

/// Sizes the global worker pool from `BSDE_NUM_THREADS` if the variable is
/// set to a positive integer. Later calls are ignored once a pool exists.
pub fn init_thread_pool_from_env() {
    if let Ok(raw) = std::env::var("BSDE_NUM_THREADS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

/// Entry point for the `bsde` binary: parses arguments, runs the command,
/// prints the report and returns the exit code.
pub fn main() -> i32 {
    init_thread_pool_from_env();
    let cli = Cli::parse();
    let outcome = run(&cli);
    print!("{}", outcome.report);
    if let Some(path) = &cli.report {
        if let Err(e) = std::fs::write(path, &outcome.report) {
            eprintln!("could not write report to {}: {e}", path.display());
            return EXIT_PARSE;
        }
    }
    outcome.exit_code
}

/// Dispatches a parsed command line.
pub fn run(cli: &Cli) -> CliOutcome {
    match &cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Nlexp(args) => cmd_nlexp(args),
        Command::Recover(args) => cmd_recover(args),
        Command::ExtendStatic(args) => cmd_extend_static(args),
    }
}

// ---- shared plumbing -------------------------------------------------------

struct LoadedFile {
    path: String,
    text: String,
    digest: String,
}

fn load(path: &Path) -> Result<LoadedFile> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Document(format!("could not read {}: {e}", path.display()))
    })?;
    Ok(LoadedFile {
        path: path.display().to_string(),
        digest: sha256_hex(text.as_bytes()),
        text,
    })
}

/// Maps an error to the exit code its class is documented under.
fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::SolveAt { source, .. } => exit_code_for(source),
        Error::RootFindDivergence(_)
        | Error::NonFiniteDriverValue { .. }
        | Error::NonzeroConditionalMean { .. }
        | Error::OracleInconsistent(_)
        | Error::InconsistentPair(_) => EXIT_SOLVE,
        Error::DriverNotNormalized(_)
        | Error::DriverDependsOnY(_)
        | Error::BalancednessProbeFailed(_) => EXIT_PROBE,
        _ => EXIT_PARSE,
    }
}

fn error_outcome(command: &str, err: &Error) -> CliOutcome {
    let exit_code = exit_code_for(err);
    let mut b = ReportBuilder::new(command);
    b.section("error");
    b.kv("message", err.to_string());
    status(&mut b, "error", exit_code);
    CliOutcome {
        report: b.finish(),
        exit_code,
    }
}

fn status(b: &mut ReportBuilder, result: &str, exit: i32) {
    b.section("status");
    b.kv("result", result);
    b.kv("exit", exit.to_string());
}

fn input_section(b: &mut ReportBuilder, files: &[(&str, &LoadedFile)]) {
    b.section("inputs");
    for (name, file) in files {
        b.kv(&format!("{name} path"), &file.path);
        b.kv(&format!("{name} sha256"), &file.digest);
    }
}

fn tree_lines(b: &mut ReportBuilder, tree: &ScenarioTree) {
    b.kv("states", tree.n_states().to_string());
    b.kv("horizon", tree.horizon().to_string());
    b.kv("initial state", tree.initial_state().to_string());
}

fn fmt_rows(rows: &[Vec<f64>]) -> String {
    let inner = rows.iter().map(|r| fmt_vec(r)).collect::<Vec<_>>();
    format!("[{}]", inner.join(", "))
}

fn fmt_gains(z: &GainsMatrix) -> String {
    let rows: Vec<Vec<f64>> = (0..z.n_rows()).map(|i| z.row(i).to_vec()).collect();
    fmt_rows(&rows)
}

/// One-line description of the driver a document selects, with the same
/// defaults the builder applies.
fn driver_summary(doc: &DriverDoc) -> String {
    if let Some(b) = &doc.builtin {
        match b.family.as_str() {
            "linear" => {
                let y_matrix = b
                    .y_matrix
                    .clone()
                    .unwrap_or_else(|| vec![vec![0.0; doc.dim]; doc.dim]);
                let weights = b.increment_weights.clone().unwrap_or_default();
                let offset = b.offset.clone().unwrap_or_else(|| vec![0.0; doc.dim]);
                format!(
                    "linear (y matrix {}, increment weights {}, offset {})",
                    fmt_rows(&y_matrix),
                    fmt_vec(&weights),
                    fmt_vec(&offset)
                )
            }
            family => match b.gamma {
                Some(g) => format!("{family} (gamma = {})", fmt_num(g)),
                None => family.to_string(),
            },
        }
    } else if let Some(t) = &doc.tabular {
        format!(
            "tabular ({} states, {} y points)",
            t.n_states,
            t.y_axis.len()
        )
    } else {
        "unspecified".to_string()
    }
}

fn value_table(
    b: &mut ReportBuilder,
    tree: &ScenarioTree,
    values: &AdaptedProcess,
    key: &str,
) -> Result<()> {
    for t in values.first_time()..=values.last_time() {
        for atom in tree.atoms_at(t)? {
            b.kv(
                &format!("{key} t={t} {}", tree.label(atom)),
                fmt_vec(values.value(atom)),
            );
        }
    }
    Ok(())
}

fn gains_table(b: &mut ReportBuilder, tree: &ScenarioTree, z: &GainsProcess) -> Result<()> {
    for t in 0..z.end_time() {
        for atom in tree.atoms_at(t)? {
            b.kv(
                &format!("z t={t} {}", tree.label(atom)),
                fmt_gains(z.at(atom)),
            );
        }
    }
    Ok(())
}

fn solution_sections(
    b: &mut ReportBuilder,
    tree: &ScenarioTree,
    solution: &BsdeSolution,
) -> Result<()> {
    b.section("value process");
    value_table(b, tree, &solution.y, "y")?;
    b.section("gains process");
    gains_table(b, tree, &solution.z)?;
    b.section("diagnostics");
    b.kv("levels solved", tree.horizon().to_string());
    b.kv_num("max residual", solution.diagnostics.max_residual);
    b.kv(
        "total iterations",
        solution.diagnostics.total_iterations.to_string(),
    );
    Ok(())
}

fn probe_config(grid: Option<usize>, tolerance: Option<f64>, seed: u64) -> ProbeConfig {
    let mut config = ProbeConfig::default();
    if let Some(n) = grid {
        config.y_grid.2 = n.max(2);
    }
    if let Some(t) = tolerance {
        config.tolerance = t;
    }
    config.seed = seed;
    config
}

// ---- solve -----------------------------------------------------------------

pub fn cmd_solve(args: &SolveArgs) -> CliOutcome {
    solve_impl(args).unwrap_or_else(|e| error_outcome("solve", &e))
}

fn solve_impl(args: &SolveArgs) -> Result<CliOutcome> {
    let tree_file = load(&args.tree)?;
    let driver_file = load(&args.driver)?;
    let terminal_file = load(&args.terminal)?;

    let tree = build_tree(&parse_tree_doc(&tree_file.text)?)?;
    let driver_doc = parse_driver_doc(&driver_file.text)?;
    let driver = build_driver(&driver_doc)?;
    let terminal = build_terminal(&parse_terminal_doc(&terminal_file.text)?, &tree)?;

    let mut b = ReportBuilder::new("solve");
    input_section(
        &mut b,
        &[
            ("tree", &tree_file),
            ("driver", &driver_file),
            ("terminal", &terminal_file),
        ],
    );
    b.section("problem");
    tree_lines(&mut b, &tree);
    b.kv("driver", driver_summary(&driver_doc));
    b.kv("dimension", driver.dim().to_string());

    let config = probe_config(args.probe_grid, args.tolerance, 7);
    let assumptions = check_driver_assumptions(&tree, &driver, &config)?;
    b.section("assumption probe");
    b.kv("atoms probed", assumptions.atoms_probed.to_string());
    b.kv("evaluations", assumptions.evaluations.to_string());
    b.kv("findings", assumptions.findings.len().to_string());
    for (k, f) in assumptions.findings.iter().enumerate() {
        b.kv(
            &format!("finding {k}"),
            format!("{} at t={} {}: {}", f.kind.as_str(), f.time, f.path, f.detail),
        );
    }
    if !assumptions.clean() {
        status(&mut b, "probe-violations", EXIT_PROBE);
        return Ok(CliOutcome {
            report: b.finish(),
            exit_code: EXIT_PROBE,
        });
    }

    let solution = solve(&tree, &driver, &terminal)?;
    solution_sections(&mut b, &tree, &solution)?;
    status(&mut b, "ok", EXIT_OK);
    Ok(CliOutcome {
        report: b.finish(),
        exit_code: EXIT_OK,
    })
}

// ---- compare ---------------------------------------------------------------

pub fn cmd_compare(args: &CompareArgs) -> CliOutcome {
    compare_impl(args).unwrap_or_else(|e| error_outcome("compare", &e))
}

fn compare_impl(args: &CompareArgs) -> Result<CliOutcome> {
    let tree_file = load(&args.tree)?;
    let driver1_file = load(&args.driver)?;
    let driver2_file = load(&args.driver2)?;
    let terminal1_file = load(&args.terminal)?;
    let terminal2_file = load(&args.terminal2)?;

    let tree = build_tree(&parse_tree_doc(&tree_file.text)?)?;
    let driver1_doc = parse_driver_doc(&driver1_file.text)?;
    let driver1 = build_driver(&driver1_doc)?;
    let driver2 = build_driver(&parse_driver_doc(&driver2_file.text)?)?;
    let q1 = build_terminal(&parse_terminal_doc(&terminal1_file.text)?, &tree)?;
    let q2 = build_terminal(&parse_terminal_doc(&terminal2_file.text)?, &tree)?;

    let (schedule, mode_name) = match args.mode {
        CompareMode::Standard => (ModeSchedule::standard(), "standard"),
        CompareMode::Alternate => (ModeSchedule::alternate(), "alternate"),
    };

    let mut b = ReportBuilder::new("compare");
    input_section(
        &mut b,
        &[
            ("tree", &tree_file),
            ("driver1", &driver1_file),
            ("driver2", &driver2_file),
            ("terminal1", &terminal1_file),
            ("terminal2", &terminal2_file),
        ],
    );
    b.section("problem");
    tree_lines(&mut b, &tree);
    b.kv("dimension", driver1.dim().to_string());
    b.kv("mode", mode_name);

    let outcome = check_conditions(&tree, &driver1, &driver2, &q1, &q2, &schedule)?;
    let report = &outcome.report;

    b.section("terminal order");
    for gap in &report.terminal_gaps {
        b.kv(
            &format!("{} comp {}", gap.path, gap.component),
            format!("gap = {} ({})", fmt_num(gap.gap), gap.class.as_str()),
        );
    }
    b.kv("holds", report.terminal_order_holds.to_string());

    b.section("conditions");
    for check in &report.atom_checks {
        let prefix = format!("t={} {}", check.time, check.path);
        for c in &check.components {
            b.kv(
                &format!("{prefix} comp {} order gap", c.component),
                format!("{} ({})", fmt_num(c.order_gap), c.order_gap_class.as_str()),
            );
            b.kv(
                &format!("{prefix} comp {} sensitivity", c.component),
                format!(
                    "lhs = {}, min gap = {} at states {:?}, margin = {} ({}), rows equivalent = {}",
                    fmt_num(c.sensitivity_lhs),
                    fmt_num(c.min_gap),
                    c.min_gap_argmin,
                    fmt_num(c.sensitivity_margin),
                    c.sensitivity_class.as_str(),
                    c.row_equivalent
                ),
            );
        }
        b.kv(
            &format!("{prefix} monotonicity"),
            check.monotonicity_verdict.as_str(),
        );
        b.kv(
            &format!("{prefix} hypothesis margin"),
            fmt_num(check.hypothesis_margin),
        );
        if let Some(ok) = check.scalar_monotone_probe {
            b.kv(
                &format!("{prefix} scalar probe"),
                if ok { "increasing" } else { "violated" },
            );
        }
    }
    b.kv("driver order holds", report.driver_order_holds.to_string());
    b.kv("sensitivity holds", report.sensitivity_holds.to_string());
    b.kv("monotonicity holds", report.monotonicity_holds.to_string());

    let strict = strictness_analysis(&tree, &driver1, &driver2, &outcome)?;
    b.section("strictness");
    b.kv("equalities", strict.equalities.len().to_string());
    for (k, e) in strict.equalities.iter().enumerate() {
        b.kv(
            &format!("equality {k}"),
            format!(
                "t={} {} comp {} propagates = {}",
                e.time, e.path, e.component, e.propagation_ok
            ),
        );
        for (j, failure) in e.failures.iter().enumerate() {
            b.kv(&format!("equality {k} failure {j}"), failure);
        }
    }
    b.kv("all propagate", strict.all_propagate().to_string());

    linear_response_section(&mut b, &tree, &driver1_doc, &outcome)?;

    b.section("conclusion");
    b.kv("root difference", fmt_vec(&report.root_difference));
    b.kv_num("minimum difference", report.conclusion_min);
    for (k, v) in report.conclusion_violations.iter().enumerate() {
        b.kv(
            &format!("violation {k}"),
            format!(
                "t={} {} comp {} difference = {}",
                v.time,
                v.path,
                v.component,
                fmt_num(v.difference)
            ),
        );
    }
    b.kv("conditions hold", report.conditions_hold().to_string());
    b.kv("conclusion holds", report.conclusion_holds().to_string());

    let (result, exit_code) = if report.conclusion_holds() {
        ("order-preserved", EXIT_OK)
    } else if report.conditions_hold() {
        ("conditions-hold-but-conclusion-fails", EXIT_CONCLUSION)
    } else {
        ("counterexample", EXIT_FINDING)
    };
    status(&mut b, result, exit_code);
    Ok(CliOutcome {
        report: b.finish(),
        exit_code,
    })
}

/// For an affine first driver, reports the one-step solution response
/// (I - B)^-1 dE to the realized terminal-mean shift dE. The relation is
/// per step, so it equals the realized root difference only over one
/// period; its sign sensitivity in B is the point of the section.
fn linear_response_section(
    b: &mut ReportBuilder,
    tree: &ScenarioTree,
    driver1_doc: &DriverDoc,
    outcome: &ComparisonOutcome,
) -> Result<()> {
    let builtin = match &driver1_doc.builtin {
        Some(builtin) if builtin.family == "linear" => builtin,
        _ => return Ok(()),
    };
    let dim = driver1_doc.dim;
    let y_matrix = builtin
        .y_matrix
        .clone()
        .unwrap_or_else(|| vec![vec![0.0; dim]; dim]);

    let q1 = &outcome.solution1.y;
    let q2 = &outcome.solution2.y;
    let end = q1.last_time();
    let mut delta_e = vec![0.0; dim];
    for atom in tree.atoms_at(end)? {
        let p = tree.prob(atom);
        let v1 = q1.value(atom);
        let v2 = q2.value(atom);
        for i in 0..dim {
            delta_e[i] += p * (v1[i] - v2[i]);
        }
    }

    b.section("linear response");
    b.kv("y matrix", fmt_rows(&y_matrix));
    b.kv("terminal mean shift", fmt_vec(&delta_e));
    match linear_delta_analysis(&y_matrix, &delta_e) {
        Ok(delta_y) => {
            b.kv("one-step response", fmt_vec(&delta_y));
        }
        Err(e) => {
            b.kv("one-step response", format!("unavailable: {e}"));
        }
    }
    Ok(())
}

// ---- nlexp -----------------------------------------------------------------

pub fn cmd_nlexp(args: &NlexpArgs) -> CliOutcome {
    nlexp_impl(args).unwrap_or_else(|e| error_outcome("nlexp", &e))
}

fn nlexp_impl(args: &NlexpArgs) -> Result<CliOutcome> {
    let tree_file = load(&args.tree)?;
    let driver_file = load(&args.driver)?;
    let terminal_file = load(&args.terminal)?;

    let tree = build_tree(&parse_tree_doc(&tree_file.text)?)?;
    let driver_doc = parse_driver_doc(&driver_file.text)?;
    let driver = build_driver(&driver_doc)?;
    let q = build_terminal(&parse_terminal_doc(&terminal_file.text)?, &tree)?;

    let mode_name = match args.mode {
        EvalMode::Expectation => "expectation",
        EvalMode::Risk => "risk",
    };

    let mut b = ReportBuilder::new("nlexp");
    input_section(
        &mut b,
        &[
            ("tree", &tree_file),
            ("driver", &driver_file),
            ("terminal", &terminal_file),
        ],
    );
    b.section("problem");
    tree_lines(&mut b, &tree);
    b.kv("driver", driver_summary(&driver_doc));
    b.kv("mode", mode_name);
    b.kv("time", args.time.to_string());

    // Probe balance on the variable itself plus a scaled and a shifted copy.
    let dim = q.dim();
    let ones = AdaptedProcess::from_fn(&tree, q.first_time(), dim, |_| vec![1.0; dim])?;
    let family = vec![q.clone(), q.scale(0.5), q.add(&ones)?];
    let balance = check_balanced(&tree, &driver, &family)?;
    b.section("balance probe");
    b.kv("family size", family.len().to_string());
    b.kv("pairwise checks", balance.checks.len().to_string());
    let strict = balance.checks.iter().filter(|c| c.strictness_ok).count();
    b.kv("checks passing", strict.to_string());
    b.kv(
        "monotonicity failures",
        balance.monotonicity_failures.len().to_string(),
    );
    if let Some(violation) = balance.first_violation() {
        b.kv("first violation", violation);
        status(&mut b, "probe-violations", EXIT_PROBE);
        return Ok(CliOutcome {
            report: b.finish(),
            exit_code: EXIT_PROBE,
        });
    }

    let e = expectation_from_driver(&tree, &driver, &family)?;
    let values = match args.mode {
        EvalMode::Expectation => e.evaluate(&tree, &q, args.time)?,
        EvalMode::Risk => risk_measure(&tree, &e, &q, args.time)?,
    };

    b.section("evaluation");
    value_table(&mut b, &tree, &values, mode_name)?;
    status(&mut b, "ok", EXIT_OK);
    Ok(CliOutcome {
        report: b.finish(),
        exit_code: EXIT_OK,
    })
}

// ---- recover ---------------------------------------------------------------

pub fn cmd_recover(args: &RecoverArgs) -> CliOutcome {
    recover_impl(args).unwrap_or_else(|e| error_outcome("recover", &e))
}

fn recover_impl(args: &RecoverArgs) -> Result<CliOutcome> {
    let tree_file = load(&args.tree)?;
    let driver_file = load(&args.driver)?;

    let tree = build_tree(&parse_tree_doc(&tree_file.text)?)?;
    let driver_doc = parse_driver_doc(&driver_file.text)?;
    let driver = build_driver(&driver_doc)?;
    if args.time >= tree.horizon() {
        return Err(Error::TimeOutOfRange {
            time: args.time,
            horizon: tree.horizon().saturating_sub(1),
        });
    }

    let method_name = match args.method {
        RecoverMethod::OneStep => "one-step",
        RecoverMethod::Endpoints => "endpoints",
    };

    let mut b = ReportBuilder::new("recover");
    input_section(&mut b, &[("tree", &tree_file), ("driver", &driver_file)]);
    b.section("problem");
    tree_lines(&mut b, &tree);
    b.kv("driver", driver_summary(&driver_doc));
    b.kv("method", method_name);
    b.kv("time", args.time.to_string());
    b.kv("probes", args.probes.to_string());
    b.kv("seed", args.seed.to_string());

    let exit_code = match args.method {
        RecoverMethod::OneStep => recover_one_step(&mut b, &tree, &driver, args)?,
        RecoverMethod::Endpoints => recover_endpoints(&mut b, &tree, &driver, args)?,
    };
    let result = if exit_code == EXIT_OK {
        "ok"
    } else {
        "probe-violations"
    };
    status(&mut b, result, exit_code);
    Ok(CliOutcome {
        report: b.finish(),
        exit_code,
    })
}

fn recover_one_step(
    b: &mut ReportBuilder,
    tree: &ScenarioTree,
    driver: &Driver,
    args: &RecoverArgs,
) -> Result<i32> {
    let oracle = OneStepOracle::from_driver(tree, driver, args.time)?;
    let atoms = tree.atoms_at(args.time)?;
    let config = ProbeConfig {
        seed: args.seed,
        ..ProbeConfig::default()
    };

    b.section("map probe");
    let mut findings = 0usize;
    let mut queries = 0usize;
    for atom in &atoms {
        let probe = validate_phi(tree, &oracle, *atom, &config)?;
        queries += probe.queries;
        for f in &probe.findings {
            b.kv(
                &format!("finding {findings}"),
                format!("{} at {}: {}", f.kind.as_str(), f.path, f.detail),
            );
            findings += 1;
        }
    }
    b.kv("queries", queries.to_string());
    b.kv("findings", findings.to_string());
    if findings > 0 {
        return Ok(EXIT_PROBE);
    }

    b.section("recovery");
    let dim = driver.dim();
    let mut rng = testkit::rng(args.seed);
    let mut max_err = 0.0_f64;
    for k in 0..args.probes.max(1) {
        let atom = atoms[k % atoms.len()];
        let y: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let z = testkit::random_canonical_gains(&mut rng, tree, atom, dim, 3.0)?;
        let recovered = recover_from_one_step(tree, &oracle, atom, &y, &z)?;
        let direct = driver.eval(tree, atom, &y, &z)?;
        let err = recovered
            .iter()
            .zip(&direct)
            .map(|(a, c)| (a - c).abs())
            .fold(0.0_f64, f64::max);
        max_err = max_err.max(err);
        b.kv(
            &format!("probe {k} {}", tree.label(atom)),
            format!(
                "y = {}, recovered = {}, direct = {}, error = {}",
                fmt_vec(&y),
                fmt_vec(&recovered),
                fmt_vec(&direct),
                fmt_num(err)
            ),
        );
    }
    b.section("summary");
    b.kv_num("max abs error", max_err);
    Ok(EXIT_OK)
}

fn recover_endpoints(
    b: &mut ReportBuilder,
    tree: &ScenarioTree,
    driver: &Driver,
    args: &RecoverArgs,
) -> Result<i32> {
    let zh = ZeroHedgingFunction::from_driver(driver);
    let endpoints = EndpointOracle::from_driver(tree, driver, args.time)?;
    let atoms = tree.atoms_at(args.time)?;

    b.section("recovery");
    let dim = driver.dim();
    let mut rng = testkit::rng(args.seed);
    let mut max_err = 0.0_f64;
    for k in 0..args.probes.max(1) {
        let atom = atoms[k % atoms.len()];
        let y_next = AdaptedProcess::from_fn(tree, args.time + 1, dim, |_| {
            (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()
        })?;
        let step = recover_from_endpoints(tree, &zh, &endpoints, atom, &y_next)?;
        let direct = driver.eval(tree, atom, &step.y, &step.z)?;
        let err = step
            .f_value
            .iter()
            .zip(&direct)
            .map(|(a, c)| (a - c).abs())
            .fold(0.0_f64, f64::max);
        max_err = max_err.max(err);
        b.kv(
            &format!("probe {k} {}", tree.label(atom)),
            format!(
                "y = {}, recovered = {}, direct = {}, error = {}",
                fmt_vec(&step.y),
                fmt_vec(&step.f_value),
                fmt_vec(&direct),
                fmt_num(err)
            ),
        );
    }
    b.section("summary");
    b.kv("pair consistency", "verified on constant samples");
    b.kv_num("max abs error", max_err);
    Ok(EXIT_OK)
}

// ---- extend-static ---------------------------------------------------------

pub fn cmd_extend_static(args: &ExtendStaticArgs) -> CliOutcome {
    extend_static_impl(args).unwrap_or_else(|e| error_outcome("extend-static", &e))
}

fn extend_static_impl(args: &ExtendStaticArgs) -> Result<CliOutcome> {
    let tree_file = load(&args.tree)?;
    let terminal_file = load(&args.terminal)?;

    let tree = build_tree(&parse_tree_doc(&tree_file.text)?)?;
    let q = build_terminal(&parse_terminal_doc(&terminal_file.text)?, &tree)?;
    let kind = parse_static_map(&args.static_map)?;
    let e = builtin_static(kind)?;

    let mut b = ReportBuilder::new("extend-static");
    input_section(
        &mut b,
        &[("tree", &tree_file), ("terminal", &terminal_file)],
    );
    b.section("problem");
    tree_lines(&mut b, &tree);
    b.kv("static map", e.label());
    b.kv("monotone declared", e.monotone_declared().to_string());

    match extend_static(&tree, &e, &q)? {
        ExtensionResult::Extended(family) => {
            b.section("extension");
            value_table(&mut b, &tree, &family, "y")?;
            status(&mut b, "extended", EXIT_OK);
            Ok(CliOutcome {
                report: b.finish(),
                exit_code: EXIT_OK,
            })
        }
        ExtensionResult::Inconsistent(certificate) => {
            b.section("certificate");
            match &certificate {
                Inconsistency::UnsolvableAtom {
                    time,
                    path,
                    target,
                    nearest_value,
                    y_nearest,
                } => {
                    b.kv("kind", "unsolvable-atom");
                    b.kv("time", time.to_string());
                    b.kv("path", path);
                    b.kv_num("target", *target);
                    b.kv_num("nearest value", *nearest_value);
                    b.kv_num("y at stall", *y_nearest);
                }
                Inconsistency::TowerMismatch {
                    time,
                    slice_time,
                    path,
                    y_from_terminal,
                    y_from_slice,
                    e_terminal,
                    e_slice,
                    gap,
                } => {
                    b.kv("kind", "tower-mismatch");
                    b.kv("time", time.to_string());
                    b.kv("slice time", slice_time.to_string());
                    b.kv("path", path);
                    b.kv_num("y from terminal", *y_from_terminal);
                    b.kv_num("y from slice", *y_from_slice);
                    b.kv_num("map of terminal", *e_terminal);
                    b.kv_num("map of slice", *e_slice);
                    b.kv_num("gap", *gap);
                }
            }
            status(&mut b, "inconsistent", EXIT_FINDING);
            Ok(CliOutcome {
                report: b.finish(),
                exit_code: EXIT_FINDING,
            })
        }
    }
}
