use losr_core::linalg::{self, states, CMatrix};
use losr_core::random;
use losr_core::resources::{self, boxes, validate, PartySystems, PartyWiring, Resource, ViolationKind};
use losr_core::types::{GlobalType, SystemType};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn typed(kinds: [u8; 4], d: usize) -> PartyWiring {
    let s = |k: u8| match k % 3 {
        0 => SystemType::TRIVIAL,
        1 => SystemType::classical(d),
        _ => SystemType::quantum(d),
    };
    PartyWiring::new(
        PartySystems::new(s(kinds[0]), s(kinds[1])),
        PartySystems::new(s(kinds[2]), s(kinds[3])),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_resources_validate(seed in any::<u64>(), kinds in any::<[u8; 4]>(), d in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random::resource(&typed(kinds, d), 2, &mut rng).unwrap();
        let v = validate(&r, 1e-9);
        prop_assert!(v.is_empty(), "{:?}", v);
    }

    #[test]
    fn classical_factors_are_dephasing_fixed_points(seed in any::<u64>(), kinds in any::<[u8; 4]>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = typed(kinds, 2);
        let r = random::resource(&w, 2, &mut rng).unwrap();
        let dims = w.dims();
        for (k, s) in w.systems().iter().enumerate() {
            if s.is_classical() {
                let d = linalg::dephase(r.matrix(), &dims, k).unwrap();
                prop_assert!(d.dist(r.matrix()) < 1e-12);
            }
        }
    }

    #[test]
    fn json_round_trip(seed in any::<u64>(), kinds in any::<[u8; 4]>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random::resource(&typed(kinds, 2), 2, &mut rng).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        let back: Resource = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.wiring(), r.wiring());
        prop_assert!(back.matrix().dist(r.matrix()) < 1e-12);
    }

    #[test]
    fn mixtures_stay_valid(seed in any::<u64>(), p in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = typed([1, 2, 2, 1], 2);
        let r1 = random::resource(&w, 2, &mut rng).unwrap();
        let r2 = random::resource(&w, 2, &mut rng).unwrap();
        let m = Resource::mix(&[(p, &r1), (1.0 - p, &r2)]).unwrap();
        prop_assert!(validate(&m, 1e-9).is_empty());
    }

    #[test]
    fn box_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random::resource(&typed([1, 1, 1, 1], 2), 2, &mut rng).unwrap();
        let p = resources::to_box(&r).unwrap();
        let back = resources::from_box(&p).unwrap();
        prop_assert!(back.matrix().dist(r.matrix()) < 1e-12);
    }
}

#[test]
fn signaling_channel_is_rejected() {
    // A's output copies B's input
    let signaling = resources::CorrelationTable::from_fn(2, 2, 2, 2, |a, b, _, y| {
        if a == y && b == 0 {
            1.0
        } else {
            0.0
        }
    });
    let w = typed([1, 1, 1, 1], 2);
    let bad = Resource::new_unchecked(w, CMatrix::from_real_diag(signaling.flat())).unwrap();
    let v = validate(&bad, 1e-9);
    assert!(v.iter().any(|x| x.kind == ViolationKind::SignalingBToA), "{v:?}");
    assert!(v.iter().all(|x| x.kind != ViolationKind::SignalingAToB));
}

#[test]
fn non_positive_choi_is_rejected() {
    let r = resources::from_state(&states::phi_plus(), 2, 2).unwrap();
    let mut m = r.matrix().clone();
    m.add_scaled(&CMatrix::identity(4), -0.3);
    m.add_scaled(&CMatrix::basis_projector(4, 0), 1.2);
    let bad = Resource::new_unchecked(*r.wiring(), m).unwrap();
    assert!(!validate(&bad, 1e-9).is_empty());
}

#[test]
fn global_types_parse_and_print() {
    for s in ["II->QQ", "QQ->CC", "CI->QC", "IQ->IQ"] {
        let t: GlobalType = s.parse().unwrap();
        assert_eq!(t.to_string(), s);
    }
    let r = resources::from_box(&boxes::pr_box()).unwrap();
    assert_eq!(r.global_type().to_string(), "CC->CC");
}
