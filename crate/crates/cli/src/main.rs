//! `qtree` command line: run simulations, check traces and label sequences,
//! compare the two checkers exhaustively, and replay the worked examples.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails, 2 on usage or
//! input errors.

use std::collections::BTreeMap;
use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use similar::TextDiff;
use thiserror::Error;

use qtree::checker::{count_sequences, EnumBounds};
use qtree::figures::{Figure, FigureError};
use qtree::harness::{
    check_endtoend, check_equivalence, check_refinement, evaluate, InstanceReport, RunOutcome,
};
use qtree::sim::{parse_schedule, ConfigError, Protocol, SimConfig, SimError, Trace};
use qtree::{Label, Mode, Round};

/// Throughput assumed when estimating how long an enumeration would take.
const SEQUENCES_PER_SECOND: u128 = 250_000;

#[derive(Parser)]
#[command(
    name = "qtree",
    version,
    about = "Simulate consensus protocols and check them against QTree"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more seeded simulations and check every trace.
    Run(Box<RunArgs>),
    /// Check a trace file or a file of invocation labels.
    Check(CheckArgs),
    /// Compare the declarative checker and replay on every small sequence.
    Enumerate(EnumerateArgs),
    /// Replay a worked example and diff it against its golden.
    Figure(FigureArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// paxos, multipaxos, raft, pbft or hotstuff.
    #[arg(long)]
    protocol: Option<String>,
    /// Number of processes.
    #[arg(long)]
    n: Option<usize>,
    /// Faults tolerated; sets the default n and quorums.
    #[arg(long)]
    f: Option<usize>,
    /// Phase-one (join) quorum size.
    #[arg(long)]
    q1: Option<usize>,
    /// Phase-two (vote) quorum size.
    #[arg(long)]
    q2: Option<usize>,
    /// Seed for every random scheduler choice.
    #[arg(long)]
    seed: Option<u64>,
    /// Inclusive seed range `a..b`; runs every seed in parallel.
    #[arg(long, conflicts_with = "seed")]
    seeds: Option<String>,
    /// Maximum scheduler steps per run.
    #[arg(long)]
    steps: Option<u64>,
    /// Per-message drop probability.
    #[arg(long)]
    drop: Option<f64>,
    /// Per-message duplication probability.
    #[arg(long)]
    duplicate: Option<f64>,
    /// Delivery delay range in steps, `lo..hi`.
    #[arg(long)]
    delay: Option<String>,
    /// Comma-separated Byzantine process ids.
    #[arg(long)]
    byzantine: Option<String>,
    /// equivocate, withhold, replay-stale or vote-without-join.
    #[arg(long)]
    strategy: Option<String>,
    /// Crash plan `pid@step,...`.
    #[arg(long)]
    crash: Option<String>,
    /// Scripted schedule file; replaces the random scheduler.
    #[arg(long)]
    schedule: Option<PathBuf>,
    /// Any other config key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    extra: Vec<String>,
    /// Write the trace here; with --seeds, a directory of `seed-<k>.trc`.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Single,
    Smr,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Single => Mode::SingleDecree,
            ModeArg::Smr => Mode::Smr,
        }
    }
}

#[derive(Args)]
struct CheckArgs {
    /// A trace (starts with `# protocol=`) or one label per line.
    file: PathBuf,
    /// Mode for label files; inferred from the round form when omitted.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Args)]
struct EnumerateArgs {
    #[arg(long, default_value_t = 4)]
    max_len: usize,
    #[arg(long, default_value_t = 3)]
    max_round: u64,
    /// Number of distinct values.
    #[arg(long, default_value_t = 2)]
    values: usize,
    /// Enumerate one mode only; both by default.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Refuse bounds that yield more sequences than this.
    #[arg(long, default_value_t = 50_000_000)]
    limit: u128,
}

#[derive(Args)]
struct FigureArgs {
    /// fig2, fig3, fig4 or all.
    name: String,
    /// Print the rendered output as well.
    #[arg(long)]
    show: bool,
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Figure(#[from] FigureError),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{path}: line {line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{0}")]
    Usage(String),
}

/// Whether every check a command ran passed.
type Passed = bool;

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn build_config(args: &RunArgs) -> Result<SimConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => SimConfig::load(path)?,
        None => SimConfig::new(Protocol::Paxos, 1),
    };
    // `protocol` and `f` reset derived defaults, so they go first.
    let mut overrides: Vec<(&str, String)> = Vec::new();
    let mut push = |key: &'static str, value: Option<String>| {
        if let Some(v) = value {
            overrides.push((key, v));
        }
    };
    push("protocol", args.protocol.clone());
    push("f", args.f.map(|v| v.to_string()));
    push("n", args.n.map(|v| v.to_string()));
    push("q1", args.q1.map(|v| v.to_string()));
    push("q2", args.q2.map(|v| v.to_string()));
    push("seed", args.seed.map(|v| v.to_string()));
    push("steps", args.steps.map(|v| v.to_string()));
    push("drop", args.drop.map(|v| v.to_string()));
    push("duplicate", args.duplicate.map(|v| v.to_string()));
    push("delay", args.delay.clone());
    push("byzantine", args.byzantine.clone());
    push("strategy", args.strategy.clone());
    push("crash", args.crash.clone());
    for (key, value) in overrides {
        config.set(key, &value)?;
    }
    for item in &args.extra {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{item}`")))?;
        config.set(key.trim(), value.trim())?;
    }
    if let Some(path) = &args.schedule {
        let text = read(path)?;
        let schedule = parse_schedule(&text).map_err(|e| CliError::Parse {
            path: path.display().to_string(),
            line: e.line,
            reason: e.reason,
        })?;
        config.schedule = Some(schedule);
    }
    config.validate()?;
    Ok(config)
}

fn parse_seeds(range: &str) -> Result<RangeInclusive<u64>, CliError> {
    let bad = || CliError::Usage(format!("--seeds expects `a..b`, got `{range}`"));
    let (lo, hi) = range.split_once("..").ok_or_else(bad)?;
    let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: u64 = hi.trim().parse().map_err(|_| bad())?;
    Ok(lo..=hi)
}

fn print_outcome(outcome: &RunOutcome, digest: &str, verbose: bool) {
    let verdict = if outcome.passes() { "pass" } else { "fail" };
    println!(
        "seed={} linpoints={} decisions={} digest={digest} result={verdict}",
        outcome.seed, outcome.linpoints, outcome.decisions
    );
    if verbose || !outcome.passes() {
        print!("{}", outcome.refinement);
        for violation in &outcome.safety {
            println!("safety: {violation}");
        }
    }
}

fn cmd_run(args: &RunArgs) -> Result<Passed, CliError> {
    let base = build_config(args)?;
    let Some(range) = args.seeds.as_deref().map(parse_seeds).transpose()? else {
        let (trace, outcome) = evaluate(&base)?;
        if let Some(path) = &args.trace {
            write(path, &trace.render())?;
        }
        print_outcome(&outcome, &trace.digest(), true);
        return Ok(outcome.passes() && outcome.refinement.concordant());
    };
    if let Some(dir) = &args.trace {
        fs::create_dir_all(dir).map_err(|e| CliError::Io {
            path: dir.display().to_string(),
            reason: e.to_string(),
        })?;
    }
    let runs: Vec<(Trace, RunOutcome)> = range
        .into_par_iter()
        .map(|seed| evaluate(&base.clone().with_seed(seed)))
        .collect::<Result<_, _>>()?;
    let mut passed = 0;
    for (trace, outcome) in &runs {
        if let Some(dir) = &args.trace {
            write(
                &dir.join(format!("seed-{}.trc", outcome.seed)),
                &trace.render(),
            )?;
        }
        print_outcome(outcome, &trace.digest(), false);
        if outcome.passes() && outcome.refinement.concordant() {
            passed += 1;
        }
    }
    println!(
        "runs={} passed={passed} failed={}",
        runs.len(),
        runs.len() - passed
    );
    Ok(passed == runs.len())
}

fn is_trace(text: &str) -> bool {
    text.lines()
        .map(str::trim)
        .any(|l| l.starts_with("step=") || l.starts_with("# protocol="))
}

fn cmd_check(args: &CheckArgs) -> Result<Passed, CliError> {
    let text = read(&args.file)?;
    let path = args.file.display().to_string();
    if is_trace(&text) {
        let trace = Trace::parse(&text).map_err(|e| CliError::Parse {
            path,
            line: e.line,
            reason: e.reason,
        })?;
        let report = check_refinement(&trace, trace.header.protocol.mode());
        let safety = check_endtoend(&trace);
        print!("{report}");
        for violation in &safety {
            println!("safety: {violation}");
        }
        let passed = report.passes() && report.concordant() && safety.is_empty();
        println!("result={}", if passed { "pass" } else { "fail" });
        return Ok(passed);
    }
    let mut by_instance: BTreeMap<u64, Vec<Label>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let label: Label = line
            .parse()
            .map_err(|e: qtree::label::LabelError| CliError::Parse {
                path: path.clone(),
                line: i + 1,
                reason: e.to_string(),
            })?;
        by_instance.entry(label.sn).or_default().push(label);
    }
    let mode = args.mode.map(Mode::from).unwrap_or_else(|| {
        let pairs = by_instance
            .values()
            .flatten()
            .any(|l| matches!(l.op.round(), Round::Pair { .. }));
        if pairs {
            Mode::Smr
        } else {
            Mode::SingleDecree
        }
    });
    if by_instance.is_empty() {
        by_instance.insert(0, Vec::new());
    }
    let mut passed = true;
    for (sn, seq) in &by_instance {
        let report = InstanceReport::check(*sn, seq, mode);
        println!("{report}");
        passed &= report.passes() && report.concordant();
    }
    println!("result={}", if passed { "pass" } else { "fail" });
    Ok(passed)
}

fn cmd_enumerate(args: &EnumerateArgs) -> Result<Passed, CliError> {
    let bounds = EnumBounds::new(args.max_len, args.max_round, args.values);
    let modes: Vec<Mode> = match args.mode {
        Some(m) => vec![m.into()],
        None => vec![Mode::SingleDecree, Mode::Smr],
    };
    let per_mode = count_sequences(&bounds);
    let total = per_mode.and_then(|c| c.checked_mul(modes.len() as u128));
    match total {
        Some(total) if total <= args.limit => {}
        _ => {
            let estimate = match total {
                Some(t) => format!("{t} sequences, roughly {} s", t / SEQUENCES_PER_SECOND),
                None => "more than 2^128 sequences".to_string(),
            };
            return Err(CliError::Usage(format!(
                "refusing to enumerate: {estimate} exceeds --limit {}",
                args.limit
            )));
        }
    }
    let mut passed = true;
    for mode in modes {
        let report = check_equivalence(&bounds, mode);
        print!("mode={mode} {report}");
        passed &= report.discordant.is_empty();
    }
    Ok(passed)
}

fn cmd_figure(args: &FigureArgs) -> Result<Passed, CliError> {
    let figures = if args.name == "all" {
        Figure::ALL.to_vec()
    } else {
        vec![args.name.parse()?]
    };
    let mut passed = true;
    for fig in figures {
        let rendered = fig.render()?;
        if args.show {
            print!("{rendered}");
        }
        if rendered == fig.golden() {
            println!("{fig}: match");
            continue;
        }
        passed = false;
        println!("{fig}: differs from golden");
        let diff = TextDiff::from_lines(fig.golden(), rendered.as_str());
        print!(
            "{}",
            diff.unified_diff()
                .header(&format!("{fig}.golden"), &format!("{fig} (replayed)"))
        );
    }
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Check(args) => cmd_check(args),
        Command::Enumerate(args) => cmd_enumerate(args),
        Command::Figure(args) => cmd_figure(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
