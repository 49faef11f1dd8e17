//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a criterion fails that is not listed in `KNOWN_FAILURES`.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use congame::bench;
use congame::game::{aggregate_metrics, LatencyFunction};
use congame::generators::{generate, GenSpec};
use congame::hardness::{
    build_flip_game, check_equilibria, derive_subcircuits, positivize, random_flip_instance, structural_check,
    GadgetParams,
};
use congame::rational::{self, int, ratio, Rational};
use congame::solver::{check_discipline, move_bound, solve, SolverConfig, SolverError};
use congame::verify::{
    approximation_factor, brute_min_potential, enumerate_equilibria, random_state, search_high_ratio, Factor,
    DEFAULT_BUDGET,
};
use congame::{CongestionGame, GameView, Mode, SubgameView};

/// Criteria whose failure is understood and documented; they still print FAIL.
const KNOWN_FAILURES: &[u32] = &[7];

/// Runtime ceilings stated by the criteria.
const C1_LIMIT: Duration = Duration::from_secs(60);
const C7_LIMIT: Duration = Duration::from_secs(120);

/// Node budget for the pruned equilibrium search on gadget games.
const HARDNESS_NODE_BUDGET: u128 = 500_000_000;

struct Verdict {
    id: u32,
    pass: bool,
    detail: String,
}

fn verdict(id: u32, pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { id, pass, detail: detail.into() }
}

fn lin(slope: i64) -> LatencyFunction {
    LatencyFunction::new(vec![int(0), int(slope)])
}

/// The seeded linear corpus shared by criteria 1, 2 and 6.
fn linear_corpus() -> Vec<GenSpec> {
    [4usize, 8, 12, 16]
        .iter()
        .flat_map(|&n| (0..50u64).map(move |s| GenSpec::linear(1000 * n as u64 + s, n, 4 + (s as usize % 9))))
        .collect()
}

/// Instances where the start state is far from any equilibrium, so the
/// solver actually moves players.
fn busy_games() -> Vec<CongestionGame> {
    let mut games = Vec::new();
    for n in [4usize, 8, 16] {
        let all: Vec<Vec<usize>> = (0..n).map(|e| vec![e]).collect();
        games.push(CongestionGame::new(Mode::Standard, vec![lin(1); n], vec![all; n]).unwrap());
    }
    // one heavy player and many light ones on a shared pair of resources
    for n in [8usize, 12] {
        let mut players = vec![vec![vec![0], vec![1]]; n - 1];
        players.push(vec![vec![0], vec![2]]);
        let lat = vec![lin(1), LatencyFunction::affine(int(1), int(2)), LatencyFunction::constant(int(100_000))];
        games.push(CongestionGame::new(Mode::Standard, lat, players).unwrap());
    }
    for seed in 0..20 {
        let spec = GenSpec { symmetric: true, strategies: (2, 3), ..GenSpec::linear(seed, 8, 3) };
        games.push(generate(&spec).unwrap());
    }
    games
}

fn criteria_1_2(specs: &[GenSpec]) -> (Verdict, Verdict) {
    let start = Instant::now();
    let config = SolverConfig::default();
    let mut over_bound = Vec::new();
    let mut over_moves = Vec::new();
    let mut worst_margin: Option<(usize, BigInt, u64)> = None;
    let mut total_moves = 0usize;
    for spec in specs {
        let game = generate(spec).unwrap();
        let out = solve(&game, &config).unwrap();
        let rho = approximation_factor(&game, out.final_state()).rho;
        if !rho.le(&out.params.bound) {
            over_bound.push((spec.seed, rho.to_string()));
        }
        let moves = out.trace.moves.len();
        total_moves += moves;
        let mb = move_bound(game.num_players(), out.params.d, config.psi);
        if BigInt::from(moves) > mb {
            over_moves.push(spec.seed);
        }
        if worst_margin.as_ref().is_none_or(|(m, b, _)| BigInt::from(moves) * b > BigInt::from(*m) * &mb) {
            worst_margin = Some((moves, mb, spec.seed));
        }
    }
    let elapsed = start.elapsed();

    // margin record for plotting
    let records: Vec<_> = bench::run_all(specs, &config).into_iter().map(Result::unwrap).collect();
    let csv = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance_bench.csv");
    bench::write_csv(&records, fs::File::create(&csv).unwrap()).unwrap();

    let c1 = verdict(
        1,
        over_bound.is_empty() && elapsed < C1_LIMIT,
        format!(
            "{} runs, {} over the bound {:?}, {:.1}s (limit {}s)",
            specs.len(),
            over_bound.len(),
            over_bound.iter().take(3).collect::<Vec<_>>(),
            elapsed.as_secs_f64(),
            C1_LIMIT.as_secs()
        ),
    );
    let (wm, wb, ws) = worst_margin.unwrap();
    let c2 = verdict(
        2,
        over_moves.is_empty(),
        format!(
            "{} runs, {} total moves, {} over the bound; tightest run seed {ws}: {wm} moves vs bound {wb}; csv at {}",
            specs.len(),
            total_moves,
            over_moves.len(),
            csv.display()
        ),
    );
    (c1, c2)
}

fn criterion_3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut trials, mut violations) = (0usize, 0usize);
    for g in 0..100u64 {
        let spec =
            GenSpec { degree: 1 + (g % 3) as usize, ..GenSpec::linear(g, 2 + (g % 7) as usize, 3 + (g % 6) as usize) };
        let game = generate(&spec).unwrap();
        for _ in 0..100 {
            let s = random_state(&game, &mut rng);
            let u = rng.gen_range(0..game.num_players());
            let k = rng.gen_range(0..game.strategies(u).len());
            let t = s.with(u, k);
            let d_phi = game.potential(&t) - game.potential(&s);
            let d_cost = game.player_cost(&t, u) - game.player_cost(&s, u);
            trials += 1;
            if d_phi != d_cost {
                violations += 1;
            }
        }
    }
    verdict(3, trials >= 10_000 && violations == 0, format!("{trials} triples, {violations} violations"))
}

fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let games: Vec<CongestionGame> = (0..50u64)
        .map(|g| {
            let spec = GenSpec {
                degree: 1 + (g % 3) as usize,
                ..GenSpec::linear(500 + g, 2 + (g % 9) as usize, 3 + (g % 8) as usize)
            };
            generate(&spec).unwrap()
        })
        .collect();
    let (mut sandwich, mut sub, mut mono) = (0usize, 0usize, 0usize);
    let trials = 5_000;
    for t in 0..trials {
        let game = &games[t % games.len()];
        let s = random_state(game, &mut rng);
        if !aggregate_metrics(game, &s).sandwich_holds() {
            sandwich += 1;
        }
        let n = game.num_players();
        let mut players: Vec<usize> = (0..n).collect();
        players.shuffle(&mut rng);
        let (f, rest) = players.split_at(rng.gen_range(0..=n));
        let phi = game.potential(&s);
        let phi_f = SubgameView::new(game, f, &s).potential(&s);
        let phi_rest = SubgameView::new(game, rest, &s).potential(&s);
        if phi > &phi_f + &phi_rest {
            sub += 1;
        }
        if phi < phi_f {
            mono += 1;
        }
    }
    verdict(
        4,
        sandwich + sub + mono == 0,
        format!("{trials} trials each: sandwich {sandwich}, subadditivity {sub}, monotonicity {mono} violations"),
    )
}

fn criterion_5() -> Verdict {
    let mut games = Vec::new();
    for seed in 0..60u64 {
        let players = 2 + (seed % 3) as usize;
        let spec = GenSpec { strategies: (1, 3), ..GenSpec::linear(seed, players, 3 + (seed % 4) as usize) };
        games.push(("random", generate(&spec).unwrap()));
    }
    for seed in 0..8 {
        games.push(("hill-climb", search_high_ratio(seed, 4, 5, 3, 150).0));
    }
    games.push((
        "chain",
        CongestionGame::new(
            Mode::Standard,
            vec![lin(8), lin(4), lin(2), lin(1), lin(1)],
            (0..4).map(|u| vec![vec![u], vec![u + 1]]).collect(),
        )
        .unwrap(),
    ));

    let two = int(2);
    let (mut equilibria, mut violations) = (0usize, 0usize);
    let mut best: (Rational, &str) = (int(1), "none");
    for (family, game) in &games {
        assert!(game.num_players() <= 4 && (0..game.num_players()).all(|u| game.strategies(u).len() <= 3));
        let (_, min) = brute_min_potential(game, DEFAULT_BUDGET).unwrap();
        for s in enumerate_equilibria(game, &Factor::one(), DEFAULT_BUDGET).unwrap() {
            equilibria += 1;
            let phi = game.potential(&s);
            if phi > &two * &min {
                violations += 1;
            }
            if let Factor::Finite(r) = Factor::ratio(&phi, &min) {
                if r > best.0 {
                    best = (r, family);
                }
            }
        }
    }
    let target = best.0 > ratio(3, 2);
    let stretch = best.0 > ratio(19, 10);
    verdict(
        5,
        violations == 0 && target,
        format!(
            "{} games, {equilibria} equilibria, {violations} above 2x; max ratio {} ({}) target >3/2 {}, stretch >19/10 {}",
            games.len(),
            rational::format(&best.0),
            best.1,
            if target { "met" } else { "missed" },
            if stretch { "met" } else { "not reached" }
        ),
    )
}

fn criterion_6(specs: &[GenSpec]) -> Verdict {
    let config = SolverConfig::default();
    let mut games: Vec<CongestionGame> = specs.iter().map(|s| generate(s).unwrap()).collect();
    games.extend(busy_games());
    let (mut traces, mut moves, mut bad) = (0usize, 0usize, Vec::new());
    for (idx, game) in games.iter().enumerate() {
        for config in [
            config.clone(),
            SolverConfig { scheduler: congame::solver::Scheduler::SeededRandom(idx as u64), ..config.clone() },
        ] {
            let out = solve(game, &config).unwrap();
            let report = check_discipline(game, &out);
            traces += 1;
            moves += report.moves_checked;
            if !report.ok() {
                bad.push((idx, report.violations[0].clone()));
            }
        }
    }
    verdict(
        6,
        bad.is_empty() && moves > 0,
        format!("{traces} traces, {moves} moves audited, {} traces with violations {:?}", bad.len(), bad.first()),
    )
}

fn criterion_7() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut structural_fail, mut no_eq, mut comparisons, mut flipped) = (0usize, 0usize, 0usize, 0usize);
    let mut spurious: Vec<(u64, Vec<Vec<bool>>)> = Vec::new();
    let mut total_eq = 0usize;
    let bundles = 24u64;
    for seed in 0..bundles {
        let inputs = 1 + (seed % 2) as usize;
        let gates = 1 + ((seed / 2) % 2) as usize;
        let c = random_flip_instance(seed, inputs, gates, 1);
        let bundle = derive_subcircuits(&c).unwrap();
        let params = GadgetParams::for_bundle(&bundle, &int(2)).unwrap();
        let fg = build_flip_game(&bundle, &params).unwrap();
        if !structural_check(&fg.game).pass {
            structural_fail += 1;
        }
        let check = check_equilibria(&fg, &c, HARDNESS_NODE_BUDGET).unwrap();
        total_eq += check.equilibria;
        if check.equilibria == 0 {
            no_eq += 1;
        }
        if !check.not_local_min.is_empty() {
            spurious.push((seed, check.not_local_min.clone()));
        }

        let pos = positivize(&fg.game, &params.alpha, fg.game.num_resources()).unwrap();
        let mut found = 0;
        while found < 1_000 / bundles as usize + 1 {
            let s = random_state(&fg.game, &mut rng);
            let u = rng.gen_range(0..fg.game.num_players());
            let k = fg.game.strategies(u).len();
            let (a, b) = (rng.gen_range(0..k), rng.gen_range(0..k));
            let (sa, sb) = (s.with(u, a), s.with(u, b));
            let (ca, cb) = (fg.game.player_cost(&sa, u), fg.game.player_cost(&sb, u));
            if ca == cb {
                continue;
            }
            found += 1;
            comparisons += 1;
            if (ca < cb) != (pos.player_cost(&sa, u) < pos.player_cost(&sb, u)) {
                flipped += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = structural_fail == 0
        && no_eq == 0
        && spurious.is_empty()
        && comparisons >= 1_000
        && flipped == 0
        && elapsed < C7_LIMIT;
    verdict(
        7,
        pass,
        format!(
            "{bundles} bundles: structural failures {structural_fail}, without equilibria {no_eq}, {total_eq} equilibria, \
             bundles with non-local-minimum equilibria {} {:?}; positivize {comparisons} comparisons, {flipped} flipped; {:.1}s (limit {}s)",
            spurious.len(),
            spurious,
            elapsed.as_secs_f64(),
            C7_LIMIT.as_secs()
        ),
    )
}

fn criterion_8() -> Verdict {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance_determinism");
    fs::create_dir_all(&dir).unwrap();
    let mut mismatches = Vec::new();
    let mut files = 0;
    for seed in [1u64, 17, 99] {
        let mut runs = Vec::new();
        for run in 0..2 {
            let spec = GenSpec::linear(seed, 8, 5);
            let game = generate(&spec).unwrap();
            let inst = dir.join(format!("instance_{seed}_{run}.json"));
            fs::write(&inst, game.to_json()).unwrap();
            let reread = CongestionGame::from_json(&fs::read_to_string(&inst).unwrap()).unwrap();
            let config =
                SolverConfig { scheduler: congame::solver::Scheduler::SeededRandom(seed), ..SolverConfig::default() };
            let trace = dir.join(format!("trace_{seed}_{run}.json"));
            fs::write(&trace, solve(&reread, &config).unwrap().trace.to_json()).unwrap();
            let c = random_flip_instance(seed, 2, 2, 1);
            let bundle = derive_subcircuits(&c).unwrap();
            let flip = dir.join(format!("flip_{seed}_{run}.json"));
            let fg = build_flip_game(&bundle, &GadgetParams::for_bundle(&bundle, &int(2)).unwrap()).unwrap();
            fs::write(&flip, fg.game.to_json()).unwrap();
            runs.push([inst, trace, flip].map(|p| fs::read(p).unwrap()));
        }
        for (k, name) in ["instance", "trace", "flip game"].iter().enumerate() {
            files += 1;
            if runs[0][k] != runs[1][k] {
                mismatches.push(format!("{name} seed {seed}"));
            }
        }
    }
    // the crowded game has a non-trivial trace
    let all: Vec<Vec<usize>> = (0..8).map(|e| vec![e]).collect();
    let crowded = CongestionGame::new(Mode::Standard, vec![lin(1); 8], vec![all; 8]).unwrap();
    let a = solve(&crowded, &SolverConfig::default()).unwrap().trace.to_json();
    let b = solve(&crowded, &SolverConfig::default()).unwrap().trace.to_json();
    files += 1;
    if a != b {
        mismatches.push("crowded trace".into());
    }
    verdict(8, mismatches.is_empty(), format!("{files} file pairs compared, mismatches {mismatches:?}"))
}

fn criterion_9() -> Verdict {
    let theta = int(3);
    let config = SolverConfig { theta_override: Some(theta.clone()), ..SolverConfig::default() };
    let (mut runs, mut capped, mut over, mut moves) = (0usize, 0usize, 0usize, 0usize);
    let mut max_rho = Factor::one();
    for n in [4usize, 8] {
        for seed in 0..25u64 {
            let spec = GenSpec { degree: 2, ..GenSpec::linear(9000 + seed, n, 4 + (seed % 6) as usize) };
            let game = generate(&spec).unwrap();
            runs += 1;
            match solve(&game, &config) {
                Ok(out) => {
                    assert_eq!(out.params.theta, theta);
                    moves += out.trace.moves.len();
                    let rho = approximation_factor(&game, out.final_state()).rho;
                    if !rho.le(&out.params.bound) {
                        over += 1;
                    }
                    max_rho = max_rho.max(rho);
                }
                Err(SolverError::CapExceeded { .. }) => capped += 1,
                Err(e) => panic!("degree 2 solve failed: {e}"),
            }
        }
    }
    verdict(
        9,
        capped == 0 && over == 0,
        format!("{runs} degree-2 runs with theta 3: {capped} hit the cap, {over} over the bound, {moves} moves, max rho* {max_rho}"),
    )
}

fn main() -> ExitCode {
    let corpus = linear_corpus();
    let mut verdicts = Vec::new();
    let (c1, c2) = criteria_1_2(&corpus);
    verdicts.push(c1);
    verdicts.push(c2);
    verdicts.push(criterion_3());
    verdicts.push(criterion_4());
    verdicts.push(criterion_5());
    verdicts.push(criterion_6(&corpus));
    verdicts.push(criterion_7());
    verdicts.push(criterion_8());
    verdicts.push(criterion_9());

    let mut unexpected = 0;
    for v in &verdicts {
        let known = KNOWN_FAILURES.contains(&v.id);
        let tag = match (v.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {}: {tag}: {}", v.id, v.detail);
        if !v.pass && !known {
            unexpected += 1;
        }
        if v.pass && known {
            println!("criterion {}: listed as a known failure but passed", v.id);
        }
    }
    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!("acceptance: {passed}/{} PASS", verdicts.len());
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
