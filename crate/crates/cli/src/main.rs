use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use congame::bench::{self, BenchError};
use congame::generators::{generate, GenSpec};
use congame::hardness::{
    build_flip_game, derive_subcircuits, positivize, structural_check, CircuitBundle, FlipInstance, GadgetParams,
};
use congame::rational::{self, Rational};
use congame::solver::{solve, Scheduler, SolverConfig, SolverError};
use congame::verify::{
    approximation_factor, audit_identities, brute_min_potential, enumerate_equilibria, enumeration_budget, Factor,
    VerifyError,
};
use congame::{CongestionGame, GameView, State};

/// Approximate pure Nash equilibria in congestion games.
#[derive(Parser)]
#[command(name = "congame", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded random instance.
    Gen(GenArgs),
    /// Run the phased solver and print a summary line.
    Solve(SolveArgs),
    /// Compute the approximation factor of a state.
    Verify(VerifyArgs),
    /// Minimum potential and exact equilibria by enumeration.
    Brute(BruteArgs),
    /// Sampled checks of the potential identities.
    Audit(AuditArgs),
    /// Build the gadget game for a Flip circuit or a circuit bundle.
    FlipGen(FlipGenArgs),
    /// Sweep seeded instances through the solver and write CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    /// JSON generator spec; the flags below are ignored when given.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 6)]
    resources: usize,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 1)]
    min_strategies: usize,
    #[arg(long, default_value_t = 3)]
    max_strategies: usize,
    #[arg(long, default_value_t = 1)]
    min_size: usize,
    /// Defaults to min(3, resources).
    #[arg(long)]
    max_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    min_coeff: u64,
    #[arg(long, default_value_t = 9)]
    max_coeff: u64,
    #[arg(long)]
    symmetric: bool,
    /// Output file (stdout when omitted).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = 1)]
    psi: u32,
    /// Potential ratio bound, required for degree 2 and above (e.g. "3" or "7/2").
    #[arg(long)]
    theta: Option<String>,
    /// `round-robin` or `random:<seed>`.
    #[arg(long, default_value = "round-robin")]
    scheduler: String,
    #[arg(long)]
    move_cap: Option<u128>,
    /// Write the move trace as JSON.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the move trace as CSV.
    #[arg(long)]
    trace_csv: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    instance: PathBuf,
    /// State as a JSON array, a comma-separated list, or a file holding either.
    state: String,
    /// Approximation factor to test against ("inf" allowed).
    #[arg(long, default_value = "1")]
    rho: String,
    /// Print the full per-player report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BruteArgs {
    instance: PathBuf,
    /// Also list every exact equilibrium.
    #[arg(long)]
    equilibria: bool,
}

#[derive(Args)]
struct AuditArgs {
    /// Instance to audit; a seeded linear corpus when omitted.
    instance: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Corpus size when no instance is given.
    #[arg(long, default_value_t = 20)]
    corpus: u64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct FlipGenArgs {
    /// Flip circuit JSON (`inputs`, `gates`, `outputs`) or circuit bundle JSON (`s0`, `flips`).
    circuit: PathBuf,
    /// Integer alpha; defaults to ceil(max(rho, 2)).
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long, default_value = "2")]
    rho: String,
    /// Override for M.
    #[arg(long)]
    big_m: Option<String>,
    /// Apply the positivizing rescale to the emitted game.
    #[arg(long)]
    positivize: bool,
    /// Also write the derived circuit bundle.
    #[arg(long)]
    bundle_out: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated player counts.
    #[arg(long, default_value = "4,8,12,16", value_delimiter = ',')]
    n: Vec<usize>,
    /// Seeds per player count.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    #[arg(long, default_value_t = 12)]
    resources: usize,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 1)]
    psi: u32,
    #[arg(long)]
    theta: Option<String>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

/// Failure classes with distinct exit codes.
enum Failure {
    Validation(anyhow::Error),
    Budget(anyhow::Error),
    Contract(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Budget(_) => 3,
            Failure::Contract(_) => 4,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Validation(e) | Failure::Budget(e) | Failure::Contract(e) => e,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Validation(e)
    }
}

impl From<VerifyError> for Failure {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::BudgetExceeded { .. } => Failure::Budget(e.into()),
            other => Failure::Validation(other.into()),
        }
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::CapExceeded { .. } => Failure::Contract(e.into()),
            other => Failure::Validation(other.into()),
        }
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Solver(s) => s.into(),
            other => Failure::Validation(other.into()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_or_print(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, format!("{text}\n")).with_context(|| format!("cannot write {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn load_game(path: &Path) -> anyhow::Result<CongestionGame> {
    CongestionGame::from_json(&read(path)?).with_context(|| format!("invalid instance {}", path.display()))
}

fn parse_rational(s: &str, what: &str) -> anyhow::Result<Rational> {
    rational::parse(s).map_err(|e| anyhow!("invalid {what} {s:?}: {}", e.0))
}

fn parse_scheduler(s: &str) -> anyhow::Result<Scheduler> {
    match s.split_once(':') {
        None if s == "round-robin" => Ok(Scheduler::RoundRobin),
        Some(("random", seed)) => Ok(Scheduler::SeededRandom(seed.parse().context("invalid scheduler seed")?)),
        _ => Err(anyhow!("unknown scheduler {s:?} (expected round-robin or random:<seed>)")),
    }
}

fn parse_state(arg: &str, game: &CongestionGame) -> anyhow::Result<State> {
    let text = if Path::new(arg).is_file() { read(Path::new(arg))? } else { arg.to_string() };
    let text = text.trim();
    let choice: Vec<usize> = if text.starts_with('[') {
        serde_json::from_str(text).context("state must be a JSON array of strategy indices")?
    } else {
        text.split(',').map(|t| t.trim().parse::<usize>()).collect::<Result<_, _>>().context("invalid state list")?
    };
    let state = State::new(choice);
    game.check_state(&state)?;
    Ok(state)
}

fn cmd_gen(a: GenArgs) -> Outcome {
    let spec = match &a.spec {
        Some(p) => GenSpec::from_json(&read(p)?).map_err(anyhow::Error::from)?,
        None => GenSpec {
            seed: a.seed,
            players: a.n,
            resources: a.resources,
            strategies: (a.min_strategies, a.max_strategies),
            strategy_size: (a.min_size, a.max_size.unwrap_or(3.min(a.resources))),
            degree: a.d,
            coeffs: (a.min_coeff, a.max_coeff),
            symmetric: a.symmetric,
        },
    };
    let game = generate(&spec).map_err(anyhow::Error::from)?;
    write_or_print(a.out.as_deref(), &game.to_json())?;
    Ok(())
}

fn cmd_solve(a: SolveArgs) -> Outcome {
    let game = load_game(&a.instance)?;
    let config = SolverConfig {
        psi: a.psi,
        theta_override: a.theta.as_deref().map(|t| parse_rational(t, "theta")).transpose()?,
        move_cap: a.move_cap,
        scheduler: parse_scheduler(&a.scheduler)?,
    };
    let outcome = match solve(&game, &config) {
        Err(SolverError::CapExceeded { cap, trace }) => {
            if let Some(p) = &a.trace {
                write_or_print(Some(p), &trace.to_json())?;
            }
            return Err(SolverError::CapExceeded { cap, trace }.into());
        }
        r => r?,
    };
    if let Some(p) = &a.trace {
        write_or_print(Some(p), &outcome.trace.to_json())?;
    }
    if let Some(p) = &a.trace_csv {
        fs::write(p, outcome.trace.to_csv()).with_context(|| format!("cannot write {}", p.display()))?;
    }
    let rho = approximation_factor(&game, outcome.final_state()).rho;
    let ok = rho.le(&outcome.params.bound);
    println!(
        "moves={} rho_star={} bound={} ok={}",
        outcome.trace.moves.len(),
        rho,
        rational::format(&outcome.params.bound),
        ok
    );
    if ok {
        Ok(())
    } else {
        Err(Failure::Contract(anyhow!("final state misses the guaranteed factor")))
    }
}

fn cmd_verify(a: VerifyArgs) -> Outcome {
    let game = load_game(&a.instance)?;
    let state = parse_state(&a.state, &game)?;
    let rho = Factor::parse(&a.rho).map_err(|e| anyhow!("invalid rho {:?}: {}", a.rho, e.0))?;
    let report = approximation_factor(&game, &state);
    if a.json {
        println!("{}", report.to_json());
    }
    let within = report.rho <= rho;
    let witness = report.witness.as_ref().map(|w| format!(" witness={}:{}", w.player, w.strategy)).unwrap_or_default();
    println!("rho_star={} within={within}{witness}", report.rho);
    Ok(())
}

fn cmd_brute(a: BruteArgs) -> Outcome {
    let game = load_game(&a.instance)?;
    let budget = enumeration_budget();
    let (state, phi) = brute_min_potential(&game, budget)?;
    println!("phi_star={} argmin={:?}", rational::format(&phi), state.as_slice());
    let eqs = enumerate_equilibria(&game, &Factor::one(), budget)?;
    println!("equilibria={}", eqs.len());
    if a.equilibria {
        for s in &eqs {
            println!("{:?} phi={}", s.as_slice(), rational::format(&game.potential(s)));
        }
    }
    Ok(())
}

fn cmd_audit(a: AuditArgs) -> Outcome {
    let games: Vec<(String, CongestionGame)> = match &a.instance {
        Some(p) => vec![(p.display().to_string(), load_game(p)?)],
        None => (0..a.corpus)
            .map(|s| {
                let spec = GenSpec::linear(a.seed + s, 2 + (s % 3) as usize, 4);
                Ok((format!("seed {}", a.seed + s), generate(&spec)?))
            })
            .collect::<Result<_, congame::generators::GenError>>()
            .map_err(anyhow::Error::from)?,
    };
    let budget = enumeration_budget();
    let mut total = 0;
    for (name, game) in &games {
        let report = audit_identities(game, a.seed, a.trials, budget)?;
        let v = report.violation_count();
        total += v;
        if a.json {
            println!("{}", report.to_json());
        }
        let max = report.max_ratio.as_ref().map(|r| r.to_string()).unwrap_or_else(|| "-".into());
        println!("{name}: violations={v} max_ratio={max}");
    }
    println!("games={} violations={total}", games.len());
    if total == 0 {
        Ok(())
    } else {
        Err(Failure::Contract(anyhow!("{total} identity violations")))
    }
}

fn cmd_flip_gen(a: FlipGenArgs) -> Outcome {
    let text = read(&a.circuit)?;
    let value: serde_json::Value = serde_json::from_str(&text).context("circuit file is not JSON")?;
    let bundle = if value.get("s0").is_some() {
        CircuitBundle::from_json(&text).map_err(anyhow::Error::from)?
    } else {
        let c = FlipInstance::from_json(&text).map_err(anyhow::Error::from)?;
        derive_subcircuits(&c).map_err(anyhow::Error::from)?
    };
    if let Some(p) = &a.bundle_out {
        write_or_print(Some(p), &bundle.to_json())?;
    }
    let rho = parse_rational(&a.rho, "rho")?;
    let big_m = a.big_m.as_deref().map(|m| parse_rational(m, "M")).transpose()?;
    let params = match &a.alpha {
        Some(alpha) => {
            GadgetParams::with_alpha(parse_rational(alpha, "alpha")?, &rho, bundle.total_gates(), bundle.outputs, big_m)
        }
        None => GadgetParams::new(&rho, bundle.total_gates(), bundle.outputs, big_m),
    }
    .map_err(anyhow::Error::from)?;
    let fg = build_flip_game(&bundle, &params).map_err(anyhow::Error::from)?;
    let report = structural_check(&fg.game);
    let game = if a.positivize {
        positivize(&fg.game, &params.alpha, fg.game.num_resources()).map_err(anyhow::Error::from)?
    } else {
        fg.game
    };
    write_or_print(a.out.as_deref(), &game.to_json())?;
    eprintln!(
        "gates={} players={} resources={} max_players_per_resource={} structural={}",
        bundle.total_gates(),
        game.num_players(),
        game.num_resources(),
        report.max_players,
        if report.pass { "pass" } else { "fail" }
    );
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Contract(anyhow!("structural check failed: {:?}", report.sharing_violations)))
    }
}

fn cmd_bench(a: BenchArgs) -> Outcome {
    if a.n.is_empty() || a.seeds == 0 {
        return Err(anyhow!("bench needs at least one player count and one seed").into());
    }
    let config = SolverConfig {
        psi: a.psi,
        theta_override: a.theta.as_deref().map(|t| parse_rational(t, "theta")).transpose()?,
        ..SolverConfig::default()
    };
    let specs = bench::sweep(&a.n, a.seeds, a.first_seed, a.resources, a.d);
    let records = bench::run_all(&specs, &config).into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut buf = Vec::new();
    bench::write_csv(&records, &mut buf)?;
    let text = String::from_utf8(buf).context("csv is not UTF-8")?;
    match &a.out {
        Some(p) => fs::write(p, &text).with_context(|| format!("cannot write {}", p.display()))?,
        None => print!("{text}"),
    }
    let failed = records.iter().filter(|r| !r.ok).count();
    eprintln!("runs={} failed={failed}", records.len());
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Contract(anyhow!("{failed} runs missed the guaranteed factor")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Brute(a) => cmd_brute(a),
        Command::Audit(a) => cmd_audit(a),
        Command::FlipGen(a) => cmd_flip_gen(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
