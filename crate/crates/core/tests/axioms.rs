mod common;

use cfbanzhaf_core::game::{Coalition, Game, TabulatedGame, ThresholdPolicy};
use cfbanzhaf_core::semivalues::{exact_banzhaf, exact_semivalue, exact_shapley, top_k, WeightFunction};
use common::{additive, max_abs_diff, random_game};
use proptest::prelude::*;

const NONE: ThresholdPolicy = ThresholdPolicy::NONE;

fn both(n: usize) -> [WeightFunction; 2] {
    [WeightFunction::shapley(n).unwrap(), WeightFunction::banzhaf(n).unwrap()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shapley_is_efficient(n in 1usize..=10, seed in any::<u64>()) {
        let g = random_game(n, seed);
        let phi = exact_shapley(&g, &NONE).unwrap().values;
        let total: f64 = phi.iter().sum();
        prop_assert!((total - g.at((1 << n) - 1)).abs() <= 1e-9);
    }

    #[test]
    fn dummy_player_gets_its_constant(n in 2usize..=9, seed in any::<u64>(), c in -1.0f64..1.0) {
        // player n−1 adds exactly c to every coalition
        let base = random_game(n - 1, seed);
        let g = TabulatedGame::from_fn(n, |m| {
            let rest = base.at(m & ((1 << (n - 1)) - 1));
            if m >> (n - 1) & 1 == 1 { rest + c } else { rest }
        }).unwrap();
        for w in both(n) {
            let v = exact_semivalue(&g, &w, &NONE).unwrap().values;
            prop_assert!((v[n - 1] - c).abs() <= 1e-12, "{:?}: {} vs {}", w.kind(), v[n - 1], c);
        }
    }

    #[test]
    fn symmetric_players_tie(n in 2usize..=9, seed in any::<u64>()) {
        // U depends on players 0 and 1 only through how many of them are present
        let base = random_game(n, seed);
        let g = TabulatedGame::from_fn(n, |m| {
            let swapped = (m & !0b11) | (m & 1) << 1 | (m >> 1 & 1);
            0.5 * (base.at(m) + base.at(swapped))
        }).unwrap();
        for w in both(n) {
            let v = exact_semivalue(&g, &w, &NONE).unwrap().values;
            prop_assert!((v[0] - v[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn values_are_linear(n in 1usize..=9, s1 in any::<u64>(), s2 in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let (g1, g2) = (random_game(n, s1), random_game(n, s2));
        let mix = TabulatedGame::from_fn(n, |m| a * g1.at(m) + b * g2.at(m)).unwrap();
        for w in both(n) {
            let v1 = exact_semivalue(&g1, &w, &NONE).unwrap().values;
            let v2 = exact_semivalue(&g2, &w, &NONE).unwrap().values;
            let vm = exact_semivalue(&mix, &w, &NONE).unwrap().values;
            let expected: Vec<f64> = v1.iter().zip(&v2).map(|(x, y)| a * x + b * y).collect();
            prop_assert!(max_abs_diff(&vm, &expected) <= 1e-9);
        }
    }

    #[test]
    fn top_k_ignores_positive_scaling(n in 2usize..=8, seed in any::<u64>(), alpha in 0.01f64..100.0, k in 1usize..=8) {
        let k = k.min(n);
        let g = random_game(n, seed);
        let scaled = g.map(|u| alpha * u);
        let a = exact_banzhaf(&g, &NONE).unwrap();
        let b = exact_banzhaf(&scaled, &NONE).unwrap();
        prop_assert_eq!(a.top_k(k).unwrap(), b.top_k(k).unwrap());
    }

    #[test]
    fn hinge_is_one_lipschitz(xs in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..64), b in 0.0f64..1.5) {
        let h = ThresholdPolicy::fixed_hinge(b);
        let (mut lhs, mut rhs) = (0.0, 0.0);
        for (u, v) in xs {
            let d = h.apply(u, 1.0).value_or_zero() - h.apply(v, 1.0).value_or_zero();
            lhs += d * d;
            rhs += (u - v) * (u - v);
        }
        prop_assert!(lhs <= rhs + 1e-15);
    }
}

#[test]
fn additive_games_recover_their_weights() {
    let a = [0.31, -0.2, 0.05, 0.0, 0.7];
    let g = additive(&a);
    for w in both(5) {
        let v = exact_semivalue(&g, &w, &NONE).unwrap().values;
        assert!(max_abs_diff(&v, &a) < 1e-12);
    }
}

#[test]
fn semivalues_of_a_tabulated_game_match_the_game_trait() {
    let g = random_game(6, 3);
    let c = Coalition::from_members(6, [1, 4]);
    assert_eq!(g.value(&c), g.at(0b010010));
    let r = exact_banzhaf(&g, &NONE).unwrap();
    assert_eq!(r.values.len(), 6);
    assert_eq!(r.utility_calls, 64);
    assert_eq!(top_k(&r.values, 6).unwrap().len(), 6);
}
