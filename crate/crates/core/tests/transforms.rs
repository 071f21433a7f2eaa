use losr_core::linalg::{self, states, CMatrix};
use losr_core::random;
use losr_core::resources::{self, boxes, validate, Party, PartySystems, PartyWiring, Resource};
use losr_core::transforms::{self, LocalOp, LosrTransform};
use losr_core::types::{SystemKind, SystemType};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn system(kind: u8, dim: usize) -> SystemType {
    match kind % 3 {
        0 => SystemType::TRIVIAL,
        1 => SystemType::classical(dim),
        _ => SystemType::quantum(dim),
    }
}

fn wiring_with_quantum_a(d: usize, k: [u8; 3]) -> PartyWiring {
    PartyWiring::new(
        PartySystems::new(system(k[0], 2), SystemType::quantum(d)),
        PartySystems::new(system(k[1], 2), system(k[2], 2)),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn decode_inverts_encode(seed in any::<u64>(), d in 2usize..4, k in any::<[u8; 3]>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = wiring_with_quantum_a(d, k);
        let r = random::resource(&w, 2, &mut rng).unwrap();
        let e = transforms::apply(&transforms::sq_encode(Party::A, d), &r).unwrap();
        prop_assert!(validate(&e, 1e-9).is_empty());
        prop_assert_eq!(e.wiring().a.output, SystemType::classical(d * d));
        prop_assert_eq!(e.wiring().a.input.kind(), SystemKind::Quantum);
        let back = transforms::apply(&transforms::sq_decode(Party::A, d), &e).unwrap();
        prop_assert!(back.matrix().dist(r.matrix()) < 1e-8);
    }

    #[test]
    fn transforms_are_linear(seed in any::<u64>(), k in any::<[u8; 3]>(), p in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = wiring_with_quantum_a(2, k);
        let r1 = random::resource(&w, 2, &mut rng).unwrap();
        let r2 = random::resource(&w, 2, &mut rng).unwrap();
        let t = transforms::sq_encode(Party::A, 2);
        let mixed = Resource::mix(&[(p, &r1), (1.0 - p, &r2)]).unwrap();
        let lhs = transforms::apply(&t, &mixed).unwrap();
        let rhs = Resource::mix(&[
            (p, &transforms::apply(&t, &r1).unwrap()),
            (1.0 - p, &transforms::apply(&t, &r2).unwrap()),
        ])
        .unwrap();
        prop_assert!(lhs.matrix().dist(rhs.matrix()) < 1e-12);
    }

    #[test]
    fn encoder_is_injective(seed in any::<u64>(), k in any::<[u8; 3]>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = wiring_with_quantum_a(2, k);
        let r1 = random::resource(&w, 2, &mut rng).unwrap();
        let r2 = random::resource(&w, 2, &mut rng).unwrap();
        let t = transforms::sq_encode(Party::A, 2);
        let d_in = r1.matrix().dist(r2.matrix());
        let d_out = transforms::apply(&t, &r1).unwrap().matrix().dist(transforms::apply(&t, &r2).unwrap().matrix());
        // distinct resources stay distinct (the decoder is a left inverse)
        prop_assert!(d_out > 1e-6 * d_in);
    }

    #[test]
    fn sequential_composition_of_transforms(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = PartyWiring::new(
            PartySystems::new(SystemType::TRIVIAL, SystemType::quantum(2)),
            PartySystems::new(SystemType::TRIVIAL, SystemType::quantum(2)),
        );
        let r = random::resource(&w, 2, &mut rng).unwrap();
        let t1 = LosrTransform::from_name("sq-encode-both:2").unwrap();
        let kernel: Vec<Vec<f64>> = (0..2)
            .map(|o| (0..4).map(|i| if (i % 2) == o { 1.0 } else { 0.0 }).collect())
            .collect();
        let t2 = transforms::relabel_output(Party::B, kernel).unwrap();
        let stepwise = transforms::apply(&t2, &transforms::apply(&t1, &r).unwrap()).unwrap();
        let joint = transforms::apply(&transforms::compose(&t2, &t1), &r).unwrap();
        prop_assert!(stepwise.matrix().dist(joint.matrix()) < 1e-12);
        prop_assert!(validate(&joint, 1e-9).is_empty());
    }

    #[test]
    fn shared_randomness_mixes_branches(p in 0.0f64..1.0) {
        let pr = resources::from_box(&boxes::pr_box()).unwrap();
        let flip: Vec<Vec<f64>> = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let t_flip = transforms::relabel_output(Party::A, flip.clone()).unwrap();
        let both = LosrTransform::new(vec![
            transforms::Branch { p, a: LocalOp::Identity, b: LocalOp::Identity },
            transforms::Branch { p: 1.0 - p, a: LocalOp::RelabelOutput { kernel: flip }, b: LocalOp::Identity },
        ])
        .unwrap();
        let want = Resource::mix(&[(p, &pr), (1.0 - p, &transforms::apply(&t_flip, &pr).unwrap())]).unwrap();
        let got = transforms::apply(&both, &pr).unwrap();
        prop_assert!(got.matrix().dist(want.matrix()) < 1e-12);
    }
}

#[test]
fn fifty_round_trips_d2_and_d3() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for k in 0..50 {
        let d = 2 + k % 2;
        let w = wiring_with_quantum_a(d, [rng.random(), rng.random(), rng.random()]);
        let r = random::resource(&w, 3, &mut rng).unwrap();
        let back = transforms::apply(
            &transforms::sq_decode(Party::A, d),
            &transforms::apply(&transforms::sq_encode(Party::A, d), &r).unwrap(),
        )
        .unwrap();
        assert!(back.matrix().dist(r.matrix()) < 1e-8, "case {k}");
    }
}

#[test]
fn encoding_a_state_gives_semiquantum_channel() {
    let r = resources::from_state(&states::phi_plus(), 2, 2).unwrap();
    let e = transforms::apply(&LosrTransform::from_name("sq-encode-both:2").unwrap(), &r).unwrap();
    assert_eq!(e.global_type().to_string(), "QQ->CC");
    // P(0,0) = Tr[(rho_A^T (x) rho_B) Phi+] / 4
    let ra = CMatrix::projector(&states::ket(2, 0));
    let rb = CMatrix::projector(&states::ket(2, 0));
    let out = e.output_state(&ra, &rb).unwrap();
    let p00 = out[(0, 0)].re;
    let overlap = linalg::tensor(&ra.transpose(), &rb).trace_product_re(&states::phi_plus());
    assert!((p00 - overlap / 4.0).abs() < 1e-12, "{p00} vs {overlap}");
}

#[test]
fn encoder_rejects_classical_output() {
    let pr = resources::from_box(&boxes::pr_box()).unwrap();
    assert!(transforms::apply(&transforms::sq_encode(Party::A, 2), &pr).is_err());
}
