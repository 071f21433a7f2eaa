use losr_core::freeset::{self, Certificate, MembershipVerdict};
use losr_core::linalg::{self, states, CMatrix};
use losr_core::random;
use losr_core::resources::{boxes, flatten4, Assemblage, CorrelationTable};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Largest of the eight CHSH expressions; for binary boxes locality holds iff it is at most 2.
fn max_chsh(p: &CorrelationTable) -> f64 {
    let e = |x: usize, y: usize| {
        (0..2)
            .flat_map(|a| (0..2).map(move |b| (a, b)))
            .map(|(a, b)| if a == b { 1.0 } else { -1.0 } * p.get(a, b, x, y))
            .sum::<f64>()
    };
    let mut best = f64::NEG_INFINITY;
    for odd in 0..4 {
        for sign in [1.0, -1.0] {
            let mut s = 0.0;
            for (k, (x, y)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                s += if k == odd { -1.0 } else { 1.0 } * e(x, y);
            }
            best = best.max(sign * s);
        }
    }
    best
}

/// PR box variant `a xor b = xy xor (u x) xor (v y) xor w`.
fn pr_variant(u: usize, v: usize, w: usize) -> CorrelationTable {
    CorrelationTable::from_fn(2, 2, 2, 2, |a, b, x, y| {
        if (a ^ b) == ((x & y) ^ (u & x) ^ (v & y) ^ w) {
            0.5
        } else {
            0.0
        }
    })
}

fn random_ns_box<R: Rng>(rng: &mut R) -> CorrelationTable {
    let mut parts = Vec::new();
    for _ in 0..3 {
        let (u, v, w) = (rng.random_range(0..2), rng.random_range(0..2), rng.random_range(0..2));
        parts.push(pr_variant(u, v, w));
    }
    for _ in 0..3 {
        let alpha = [rng.random_range(0..2), rng.random_range(0..2)];
        let beta = [rng.random_range(0..2), rng.random_range(0..2)];
        parts.push(boxes::deterministic(2, 2, &alpha, &beta));
    }
    parts.push(boxes::uniform(2, 2, 2, 2));
    let w: Vec<f64> = (0..parts.len()).map(|_| rng.random::<f64>().powi(3)).collect();
    let total: f64 = w.iter().sum();
    let refs: Vec<(f64, &CorrelationTable)> = w.iter().map(|x| x / total).zip(parts.iter()).collect();
    CorrelationTable::mix(&refs).unwrap()
}

fn check_certificate(p: &CorrelationTable, cert: &Certificate) {
    match cert {
        Certificate::LocalDecomposition { terms, residual } => {
            let parts: Vec<CorrelationTable> = terms
                .iter()
                .map(|t| boxes::deterministic(2, 2, &t.alpha, &t.beta))
                .collect();
            let total: f64 = terms.iter().map(|t| t.weight).sum();
            assert!((total - 1.0).abs() < 1e-9);
            let refs: Vec<(f64, &CorrelationTable)> = terms.iter().map(|t| t.weight).zip(parts.iter()).collect();
            let recon = CorrelationTable::mix(&refs).unwrap();
            assert!(recon.max_diff(p) < 1e-8 && *residual < 1e-8);
        }
        Certificate::Dual { f, bound, value } => {
            let (_, flat) = flatten4(f).unwrap();
            let dot = |q: &CorrelationTable| q.flat().iter().zip(&flat).map(|(a, b)| a * b).sum::<f64>();
            assert!((dot(p) - value).abs() < 1e-9);
            for code in 0..16usize {
                let q = boxes::deterministic(2, 2, &[code & 1, (code >> 1) & 1], &[(code >> 2) & 1, code >> 3]);
                assert!(dot(&q) <= bound + 1e-9);
            }
            assert!(value > bound);
        }
        other => panic!("unexpected certificate {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn locality_lp_agrees_with_chsh_facets(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_ns_box(&mut rng);
        let s = max_chsh(&p);
        prop_assume!((s - 2.0).abs() > 1e-6);
        let rep = freeset::box_is_local(&p, 1e-9).unwrap();
        let want = if s < 2.0 { MembershipVerdict::Free } else { MembershipVerdict::NonFree };
        prop_assert_eq!(rep.verdict, want, "chsh {}", s);
        check_certificate(&p, &rep.certificate);
    }

    #[test]
    fn product_mixtures_pass_ppt(seed in any::<u64>(), da in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rho = CMatrix::zeros(2 * da, 2 * da);
        for _ in 0..3 {
            let t = linalg::tensor(&random::density_matrix(da, &mut rng), &random::density_matrix(2, &mut rng));
            rho.add_scaled(&t, 1.0 / 3.0);
        }
        let rep = freeset::state_is_ppt(&rho, da, 2, 1e-9).unwrap();
        prop_assert_eq!(rep.verdict, MembershipVerdict::Free);
    }

    #[test]
    fn pure_entangled_states_fail_ppt(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random::haar_unitary(2, &mut rng);
        let v = random::haar_unitary(2, &mut rng);
        let local = linalg::tensor(&u, &v);
        let rho = local.matmul(&states::phi_plus()).matmul(&local.adjoint());
        let rep = freeset::state_is_ppt(&rho, 2, 2, 1e-9).unwrap();
        prop_assert_eq!(rep.verdict, MembershipVerdict::NonFree);
        match rep.certificate {
            Certificate::Witness { w, bound, value } => {
                prop_assert!((w.trace_product_re(&rho) - value).abs() < 1e-9);
                prop_assert!(value > bound);
            }
            other => prop_assert!(false, "unexpected certificate {:?}", other),
        }
    }
}

#[test]
fn werner_045_is_local_on_a_measurement_grid() {
    let rho = states::werner(0.45);
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    for k in 0..20 {
        let angles: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let pa = [boxes::xz_projective(angles[0]), boxes::xz_projective(angles[1])];
        let pb = [boxes::xz_projective(angles[2]), boxes::xz_projective(angles[3])];
        let p = boxes::from_quantum(&rho, &pa, &pb);
        let rep = freeset::box_is_local(&p, 1e-9).unwrap();
        assert_eq!(rep.verdict, MembershipVerdict::Free, "pair {k}");
        check_certificate(&p, &rep.certificate);
    }
}

#[test]
fn pr_box_converts_down_but_not_up() {
    let pr = boxes::pr_box();
    let local = boxes::deterministic(2, 2, &[0, 0], &[0, 0]);
    let down = freeset::box_convertible(&pr, &local, 1e-9).unwrap();
    assert_eq!(down.verdict, MembershipVerdict::Free);
    let up = freeset::box_convertible(&local, &pr, 1e-9).unwrap();
    assert_eq!(up.verdict, MembershipVerdict::NonFree);
}

#[test]
fn wiring_mixture_reconstructs_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let src = random_ns_box(&mut rng);
        let t = rng.random::<f64>();
        let target = CorrelationTable::mix(&[(t, &src), (1.0 - t, &boxes::uniform(2, 2, 2, 2))]).unwrap();
        let rep = freeset::box_convertible(&src, &target, 1e-9).unwrap();
        assert_eq!(rep.verdict, MembershipVerdict::Free);
        let Certificate::WiringMixture { terms, .. } = rep.certificate else {
            panic!("expected a wiring mixture");
        };
        let parts: Vec<CorrelationTable> = terms
            .iter()
            .map(|w| freeset::apply_wirings(&src, &w.a, &w.b).unwrap())
            .collect();
        let refs: Vec<(f64, &CorrelationTable)> = terms.iter().map(|w| w.weight).zip(parts.iter()).collect();
        assert!(CorrelationTable::mix(&refs).unwrap().max_diff(&target) < 1e-8);
    }
}

fn pauli_assemblage(rho: &CMatrix) -> Assemblage {
    let povms = vec![boxes::xz_projective(0.0), boxes::xz_projective(PI / 2.0)];
    Assemblage::from_state_measurements(rho, 2, 2, &povms).unwrap()
}

#[test]
fn steering_verdicts_carry_checkable_certificates() {
    let singlet = pauli_assemblage(&states::singlet());
    let rep = freeset::assemblage_is_unsteerable(&singlet, 1e-9).unwrap();
    assert_eq!(rep.verdict, MembershipVerdict::NonFree);
    let Certificate::SteeringDual { f, bound, value } = rep.certificate else {
        panic!("expected a steering functional");
    };
    let direct: f64 = (0..2)
        .flat_map(|x| (0..2).map(move |a| (x, a)))
        .map(|(x, a)| f[x][a].trace_product_re(&singlet.sigma[x][a]))
        .sum();
    assert!((direct - value).abs() < 1e-9 && value > bound);

    // two Pauli settings steer the Werner state only above 1/sqrt(2)
    let noisy = pauli_assemblage(&states::werner(0.6));
    let rep = freeset::assemblage_is_unsteerable(&noisy, 1e-9).unwrap();
    assert_eq!(rep.verdict, MembershipVerdict::Free);
    let Certificate::Lhs { terms, .. } = rep.certificate else {
        panic!("expected an LHS model");
    };
    for x in 0..2 {
        for a in 0..2 {
            let mut s = CMatrix::zeros(2, 2);
            for t in terms.iter().filter(|t| t.response[x] == a) {
                s.add_scaled(&t.sigma, 1.0);
            }
            assert!(s.dist(&noisy.sigma[x][a]) < 1e-6);
        }
    }
}
