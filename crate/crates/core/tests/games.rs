use losr_core::freeset::DeterministicWiring;
use losr_core::games::{self, Analyzer, Game, PayoffTable};
use losr_core::random;
use losr_core::resources::{PartySystems, PartyWiring};
use losr_core::transforms::{self, LocalOp, LosrTransform};
use losr_core::types::SystemType;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cc(n: usize) -> PartySystems {
    PartySystems::new(SystemType::classical(n), SystemType::classical(n))
}

fn random_game<R: Rng>(w: &PartyWiring, rng: &mut R) -> Game {
    let z = Analyzer::default_for(w);
    let n: usize = z.counts().iter().product();
    let f = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let payoff = PayoffTable::from_flat(z.counts(), f).unwrap();
    Game::new(*w, z, payoff).unwrap()
}

fn random_wiring_transform<R: Rng>(rng: &mut R) -> LosrTransform {
    let pick = |rng: &mut R| {
        let all = DeterministicWiring::enumerate(2, 2, 2, 2);
        all[rng.random_range(0..all.len())].clone()
    };
    let (wa, wb) = (pick(rng), pick(rng));
    LosrTransform::product(
        LocalOp::Comb(wa.to_comb(cc(2)).unwrap()),
        LocalOp::Comb(wb.to_comb(cc(2)).unwrap()),
    )
}

#[test]
fn optimal_performance_is_monotone_on_twenty_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = PartyWiring::new(cc(2), cc(2));
    for k in 0..20 {
        let g = random_game(&w, &mut rng);
        let r = random::resource(&w, 2, &mut rng).unwrap();
        let t = random_wiring_transform(&mut rng);
        let tr = transforms::apply(&t, &r).unwrap();
        let before = games::performance_exact_classical(&g, &r).unwrap();
        let after = games::performance_exact_classical(&g, &tr).unwrap();
        assert!(after <= before + 1e-9, "triple {k}: {after} > {before}");
        // the identity wiring is among the candidates
        assert!(games::evaluate(&g, &r).unwrap() <= before + 1e-9);
    }
}

fn typed(kinds: [u8; 4]) -> PartyWiring {
    let s = |k: u8| match k % 3 {
        0 => SystemType::TRIVIAL,
        1 => SystemType::classical(2),
        _ => SystemType::quantum(2),
    };
    PartyWiring::new(
        PartySystems::new(s(kinds[0]), s(kinds[1])),
        PartySystems::new(s(kinds[2]), s(kinds[3])),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn evaluation_is_trace_against_game_operator(seed in any::<u64>(), kinds in any::<[u8; 4]>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = typed(kinds);
        let g = random_game(&w, &mut rng);
        let r = random::resource(&w, 2, &mut rng).unwrap();
        let direct = games::evaluate(&g, &r).unwrap();
        let op = games::game_operator(&g).trace_product_re(r.matrix());
        prop_assert!((direct - op).abs() < 1e-10, "{} vs {}", direct, op);
    }

    #[test]
    fn pushforward_preserves_values(seed in any::<u64>(), kinds in any::<[u8; 4]>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = typed(kinds);
        let g = random_game(&w, &mut rng);
        let (enc, dec) = games::sq_pair(&w);
        let pg = games::pushforward(&g, &enc, &dec).unwrap();
        for _ in 0..3 {
            let r = random::resource(&w, 2, &mut rng).unwrap();
            let er = transforms::apply(&enc, &r).unwrap();
            let lhs = games::evaluate(&pg, &er).unwrap();
            let rhs = games::evaluate(&g, &r).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9, "{} vs {}", lhs, rhs);
        }
    }

    #[test]
    fn game_values_are_affine_in_the_resource(seed in any::<u64>(), p in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = typed([2, 2, 1, 2]);
        let g = random_game(&w, &mut rng);
        let r1 = random::resource(&w, 2, &mut rng).unwrap();
        let r2 = random::resource(&w, 2, &mut rng).unwrap();
        let m = losr_core::Resource::mix(&[(p, &r1), (1.0 - p, &r2)]).unwrap();
        let want = p * games::evaluate(&g, &r1).unwrap() + (1.0 - p) * games::evaluate(&g, &r2).unwrap();
        prop_assert!((games::evaluate(&g, &m).unwrap() - want).abs() < 1e-10);
    }
}

#[test]
fn game_operator_round_trips_through_payoffs() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let w = typed([2, 2, 2, 2]);
    let g = random_game(&w, &mut rng);
    let op = games::game_operator(&g);
    let back = games::game_from_operator(&op, &w, Analyzer::default_for(&w)).unwrap();
    assert!(games::game_operator(&back).dist(&op) < 1e-9);
}

#[test]
fn chsh_is_bounded_by_one_on_random_boxes() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let w = PartyWiring::new(cc(2), cc(2));
    for _ in 0..30 {
        let r = random::resource(&w, 2, &mut rng).unwrap();
        let v = games::evaluate(&games::chsh(), &r).unwrap();
        assert!((-1e-12..=1.0 + 1e-12).contains(&v));
    }
}
