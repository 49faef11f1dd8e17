use proptest::prelude::*;

use congame::dynamics::{best_response, find_threshold_move};
use congame::game::{aggregate_metrics, LatencyFunction};
use congame::generators::{generate, GenSpec};
use congame::hardness::{pair_to_linear, LatencyPair};
use congame::rational::{self, int, ratio, Rational};
use congame::solver::{check_discipline, solve, Scheduler, SolverConfig};
use congame::verify::{approximation_factor, is_approx_equilibrium, Factor};
use congame::{CongestionGame, GameView, Mode, State, SubgameView};

/// A standard game with small non-negative coefficients and a state in it.
fn game_and_state() -> impl Strategy<Value = (CongestionGame, State)> {
    (1usize..6, 1usize..7, 0usize..4)
        .prop_flat_map(|(n, m, d)| {
            let coeffs = prop::collection::vec(prop::collection::vec(0i64..10, d + 1), m);
            let subset = prop::collection::btree_set(0..m, 1..=m.min(3));
            let strategies = prop::collection::vec(prop::collection::vec(subset, 1..4), n);
            (coeffs, strategies)
        })
        .prop_flat_map(|(coeffs, strategies)| {
            let choice: Vec<_> = strategies.iter().map(|s| 0..s.len()).collect();
            (Just(coeffs), Just(strategies), choice)
        })
        .prop_map(|(coeffs, strategies, choice)| {
            let latencies =
                coeffs.into_iter().map(|c| LatencyFunction::new(c.into_iter().map(int).collect())).collect();
            let players =
                strategies.into_iter().map(|ss| ss.into_iter().map(|s| s.into_iter().collect()).collect()).collect();
            (CongestionGame::new(Mode::Standard, latencies, players).unwrap(), State::new(choice))
        })
}

fn subset_of(n: usize, mask: u32) -> (Vec<usize>, Vec<usize>) {
    (0..n).partition(|u| mask >> u & 1 == 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rosenthal_identity((g, s) in game_and_state(), u in 0usize..6, k in 0usize..4) {
        let u = u % g.num_players();
        let k = k % g.strategies(u).len();
        let t = s.with(u, k);
        prop_assert_eq!(g.potential(&t) - g.potential(&s), g.player_cost(&t, u) - g.player_cost(&s, u));
    }

    #[test]
    fn potential_sandwich((g, s) in game_and_state()) {
        prop_assert!(aggregate_metrics(&g, &s).sandwich_holds());
    }

    #[test]
    fn subadditivity_and_monotonicity((g, s) in game_and_state(), mask in any::<u32>()) {
        let (f, rest) = subset_of(g.num_players(), mask);
        let phi = g.potential(&s);
        let phi_f = SubgameView::new(&g, &f, &s).potential(&s);
        let phi_rest = SubgameView::new(&g, &rest, &s).potential(&s);
        prop_assert!(phi <= &phi_f + &phi_rest);
        prop_assert!(phi >= phi_f);
    }

    #[test]
    fn empty_active_set_has_zero_potential((g, s) in game_and_state()) {
        prop_assert_eq!(SubgameView::new(&g, &[], &s).potential(&s), int(0));
    }

    #[test]
    fn subgame_costs_match((g, s) in game_and_state(), mask in any::<u32>()) {
        let (f, _) = subset_of(g.num_players(), mask);
        let view = SubgameView::new(&g, &f, &s);
        for &u in &f {
            prop_assert_eq!(view.player_cost(&s, u), g.player_cost(&s, u));
            prop_assert_eq!(best_response(&view, &s, u), best_response(&g, &s, u));
            for k in 0..g.strategies(u).len() {
                prop_assert_eq!(view.deviation_cost(&s, u, k).unwrap(), g.deviation_cost(&s, u, k).unwrap());
            }
        }
    }

    #[test]
    fn growth_bounds(coeffs in prop::collection::vec(0i64..20, 1..5), n in 2usize..12) {
        let f = LatencyFunction::new(coeffs.into_iter().map(int).collect());
        let d = f.degree() as u32;
        let f1 = f.eval(1).unwrap();
        for x in 1..n {
            let fx = f.eval(x).unwrap();
            prop_assert!(f.eval(x + 1).unwrap() <= int(2i64.pow(d)) * &fx);
            prop_assert!(fx <= int((n as i64).pow(d)) * &f1);
        }
    }

    #[test]
    fn threshold_move_exists_iff_not_best_response((g, s) in game_and_state(), u in 0usize..6) {
        let u = u % g.num_players();
        let cost = g.player_cost(&s, u);
        let (_, br) = best_response(&g, &s, u);
        let mv = find_threshold_move(&g, &s, u, &int(1)).unwrap();
        prop_assert_eq!(mv.is_some(), br < cost);
    }

    #[test]
    fn best_response_is_scale_invariant((g, s) in game_and_state(), u in 0usize..6, num in 1i64..50, den in 1i64..50) {
        let u = u % g.num_players();
        let c = ratio(num, den);
        let scaled = CongestionGame::new(
            Mode::Standard,
            g.latencies().iter().map(|f| f.scaled(&c)).collect(),
            (0..g.num_players()).map(|v| g.strategies(v).to_vec()).collect(),
        ).unwrap();
        let (k, cost) = best_response(&g, &s, u);
        let (k2, cost2) = best_response(&scaled, &s, u);
        prop_assert_eq!(k, k2);
        prop_assert_eq!(cost * c, cost2);
    }

    #[test]
    fn json_round_trip((g, _) in game_and_state()) {
        let text = g.to_json();
        let back = CongestionGame::from_json(&text).unwrap();
        prop_assert_eq!(back.to_json(), text);
    }

    #[test]
    fn rational_text_round_trip(num in any::<i64>(), den in 1i64..i64::MAX) {
        let r = ratio(num, den);
        prop_assert_eq!(rational::parse(&rational::format(&r)).unwrap(), r);
    }

    #[test]
    fn latency_pairs_hit_both_values(a in -1000i64..1000, b in -1000i64..1000) {
        let f = pair_to_linear(&LatencyPair::new(int(a), int(b)));
        prop_assert_eq!(f.eval(1).unwrap(), int(a));
        prop_assert_eq!(f.eval(2).unwrap(), int(b));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn solver_guarantee_and_discipline(seed in any::<u64>(), n in 4usize..12, m in 2usize..10, sched in any::<Option<u64>>()) {
        let game = generate(&GenSpec::linear(seed, n, m)).unwrap();
        let scheduler = sched.map_or(Scheduler::RoundRobin, Scheduler::SeededRandom);
        let out = solve(&game, &SolverConfig { scheduler, ..SolverConfig::default() }).unwrap();
        prop_assert!(approximation_factor(&game, out.final_state()).rho.le(&out.params.bound));
        prop_assert!(is_approx_equilibrium(&game, out.final_state(), &Factor::Finite(out.params.bound.clone())));
        let report = check_discipline(&game, &out);
        prop_assert!(report.ok(), "{:?}", report.violations);
        let mut prev: Option<Rational> = None;
        for m in &out.trace.moves {
            prop_assert!(m.is_consistent());
            prop_assert!(m.potential_after < m.potential_before);
            if let Some(p) = &prev {
                prop_assert_eq!(p, &m.potential_before);
            }
            prev = Some(m.potential_after.clone());
        }
    }

    #[test]
    fn generator_contract(seed in any::<u64>(), n in 1usize..8, m in 1usize..8, symmetric in any::<bool>()) {
        let spec = GenSpec { symmetric, ..GenSpec::linear(seed, n, m) };
        let g = generate(&spec).unwrap();
        prop_assert_eq!(g.to_json(), generate(&spec).unwrap().to_json());
        prop_assert!(g.latencies().iter().all(LatencyFunction::has_nonnegative_coeffs));
        for u in 0..n {
            let ss = g.strategies(u);
            prop_assert!(ss.iter().all(|s| !s.is_empty()));
            for i in 0..ss.len() {
                for j in 0..i {
                    prop_assert_ne!(&ss[i], &ss[j]);
                }
            }
            if symmetric {
                prop_assert_eq!(ss, g.strategies(0));
            }
        }
    }

    #[test]
    fn zero_coefficients_make_every_state_an_equilibrium(seed in any::<u64>(), (g, s) in game_and_state()) {
        let spec = GenSpec { coeffs: (0, 0), ..GenSpec::linear(seed, g.num_players(), g.num_resources()) };
        let zero = generate(&spec).unwrap();
        let s = State::new(s.as_slice().iter().enumerate().map(|(u, &k)| k % zero.strategies(u).len()).collect());
        prop_assert_eq!(approximation_factor(&zero, &s).rho, Factor::one());
    }
}
