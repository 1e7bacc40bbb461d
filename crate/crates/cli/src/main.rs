//! `biclab`: runs one experiment and exits 0 (all assertions hold), 1 (some
//! assertion failed) or 2 (usage or input error).

use std::path::PathBuf;
use std::process::ExitCode;

use biclab::runner::{run, ExperimentConfig, ExperimentKind};
use biclab::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "biclab", version, about = "Monte-Carlo audits of incentive-compatible exploration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Experiment config (JSON); defaults are used for anything it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "BICLAB_SEED")]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replications: Option<u64>,
}

#[derive(Args, Clone)]
struct GameArgs {
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Atom of the game (0-based).
    #[arg(long)]
    j: Option<usize>,
    /// Samples per informed atom; omitted means exact values.
    #[arg(long)]
    samples: Option<u32>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand)]
enum Command {
    BicAudit(RunArgs),
    Corollary(RunArgs),
    #[command(name = "counterexample-1")]
    Counterexample1(RunArgs),
    #[command(name = "counterexample-2")]
    Counterexample2(RunArgs),
    GlmAudit(RunArgs),
    SemibanditExplore(GameArgs),
    GameSolve(GameArgs),
    GameSweep(GameArgs),
    /// Extreme-point reduction; `reduce extreme-points` is accepted too.
    Reduce {
        #[arg(value_enum)]
        target: Option<ReduceTarget>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// `audit bic` or `audit corollary`.
    Audit {
        #[arg(value_enum)]
        what: AuditTarget,
        #[command(flatten)]
        run: RunArgs,
    },
    /// `counterexample one` or `counterexample two`.
    Counterexample {
        #[arg(value_enum)]
        which: Which,
        #[command(flatten)]
        run: RunArgs,
    },
    /// `game solve` or `game sweep`.
    Game {
        #[arg(value_enum)]
        action: GameAction,
        #[command(flatten)]
        args: GameArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReduceTarget {
    ExtremePoints,
}

#[derive(Clone, Copy, ValueEnum)]
enum AuditTarget {
    Bic,
    Corollary,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    One,
    Two,
}

#[derive(Clone, Copy, ValueEnum)]
enum GameAction {
    Solve,
    Sweep,
}

const DEFAULT_REPLICATIONS: u64 = 10_000;

fn resolve(kind: ExperimentKind, args: &RunArgs, game: Option<&GameArgs>) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path)?;
            if cfg.kind != kind {
                return Err(Error::InvalidInput(format!("config is for {} but the command is {}", cfg.kind.as_str(), kind.as_str())));
            }
            cfg
        }
        None => ExperimentConfig::new(kind, DEFAULT_REPLICATIONS, 0),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    if args.jobs.is_some() {
        cfg.parallelism = args.jobs;
    }
    if args.out.is_some() {
        cfg.output = args.out.clone();
    }
    if let Some(g) = game {
        if g.instance.is_some() {
            cfg.instance = g.instance.clone();
        }
        if g.j.is_some() {
            cfg.params.j = g.j;
        }
        if g.samples.is_some() {
            cfg.params.n = g.samples;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn config_for(cmd: &Command) -> Result<ExperimentConfig, Error> {
    use ExperimentKind as K;
    match cmd {
        Command::BicAudit(a) | Command::Audit { what: AuditTarget::Bic, run: a } => resolve(K::BicAudit, a, None),
        Command::Corollary(a) | Command::Audit { what: AuditTarget::Corollary, run: a } => resolve(K::Corollary, a, None),
        Command::Counterexample1(a) | Command::Counterexample { which: Which::One, run: a } => resolve(K::Counterexample1, a, None),
        Command::Counterexample2(a) | Command::Counterexample { which: Which::Two, run: a } => resolve(K::Counterexample2, a, None),
        Command::GlmAudit(a) => resolve(K::GlmAudit, a, None),
        Command::SemibanditExplore(g) => resolve(K::SemibanditExplore, &g.run, Some(g)),
        Command::GameSolve(g) | Command::Game { action: GameAction::Solve, args: g } => resolve(K::GameSolve, &g.run, Some(g)),
        Command::GameSweep(g) | Command::Game { action: GameAction::Sweep, args: g } => resolve(K::GameSweep, &g.run, Some(g)),
        Command::Reduce { run: a, .. } => resolve(K::Reduce, a, None),
    }
}

/// Input problems are usage errors; anything raised by the computation is a failed run.
fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_) | Error::Parse(_) | Error::Json(_) | Error::Io(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = config_for(&cli.command).and_then(|cfg| run(&cfg));
    match result {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            for failure in &outcome.failures {
                eprintln!("FAIL {failure}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
