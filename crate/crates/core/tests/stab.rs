use nlqc::qcore::linalg::{self, C64};
use nlqc::qcore::{entropy, StateOrDensity, StateVector};
use nlqc::stab::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense state after a circuit, built from textbook gate matrices.
fn dense_state(n: usize, gates: &[CliffordGate]) -> Vec<C64> {
    let mut psi = vec![C64::new(0.0, 0.0); 1 << n];
    psi[0] = C64::new(1.0, 0.0);
    let u = circuit_matrix(gates, n).unwrap();
    let v = linalg::matmul(&u, &nlqc::qcore::CMat::from_column_slice(1 << n, 1, &psi));
    v.iter().copied().collect()
}

/// Pauli word from letters via Kronecker products (independent of `to_matrix`).
fn dense_pauli(letters: &[usize]) -> nlqc::qcore::CMat {
    linalg::pauli_string(letters)
}

fn word(n: usize, mut idx: usize) -> Vec<usize> {
    let mut w = vec![0; n];
    for q in (0..n).rev() {
        w[q] = idx % 4;
        idx /= 4;
    }
    w
}

fn pauli_from_letters(letters: &[usize]) -> Pauli {
    let s: String = letters.iter().map(|&k| ['I', 'X', 'Y', 'Z'][k]).collect();
    s.parse().unwrap()
}

fn check_all_expectations(n: usize, gates: &[CliffordGate]) {
    let psi = dense_state(n, gates);
    let mut tab = Tableau::zero(n);
    tab.apply_all(gates).unwrap();
    for idx in 0..4usize.pow(n as u32) {
        let w = word(n, idx);
        let m = dense_pauli(&w);
        let mv = linalg::matmul(&m, &nlqc::qcore::CMat::from_column_slice(1 << n, 1, &psi));
        let dense = linalg::inner(&psi, mv.as_slice());
        let e = tab.expectation(&pauli_from_letters(&w));
        assert!((dense - e).norm() < 1e-10, "word {w:?}: dense {dense} tableau {e}");
    }
}

#[test]
fn random_circuit_matches_dense_simulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..3 {
        let mut gates = random_clifford_circuit(5, 20, &mut rng);
        gates.push(CliffordGate::Sdg(rng.random_range(0..5)));
        gates.push(CliffordGate::Cz(0, 3));
        gates.push(CliffordGate::Swap(1, 4));
        gates.push(CliffordGate::Y(2));
        check_all_expectations(5, &gates);
    }
}

#[test]
fn clifford_conjugation_textbook() {
    let mut p: Pauli = "XI".parse().unwrap();
    CliffordGate::Cnot(0, 1).conjugate(&mut p);
    assert_eq!(p.to_string(), "+XX");
    let mut p: Pauli = "YY".parse().unwrap();
    CliffordGate::Cnot(0, 1).conjugate(&mut p);
    assert_eq!(p.to_string(), "-XZ");
    let mut p: Pauli = "X".parse().unwrap();
    CliffordGate::S(0).conjugate(&mut p);
    assert_eq!(p.to_string(), "+Y");
    let mut p: Pauli = "Y".parse().unwrap();
    CliffordGate::H(0).conjugate(&mut p);
    assert_eq!(p.to_string(), "-Y");
}

#[test]
fn pauli_product_matches_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let a = pauli_from_letters(&word(3, rng.random_range(0..64))).mul_phase(rng.random_range(0..4));
        let b = pauli_from_letters(&word(3, rng.random_range(0..64)));
        let lhs = a.mul(&b).to_matrix();
        let rhs = linalg::matmul(&a.to_matrix(), &b.to_matrix());
        assert!(linalg::frobenius(&(lhs - rhs)) < 1e-12);
        assert!(linalg::frobenius(&(a.adjoint().to_matrix() - a.to_matrix().adjoint())) < 1e-12);
    }
}

#[test]
fn h_twice_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t = random_tableau(4, &mut rng);
    let mut u = t.clone();
    u.apply(&CliffordGate::H(2)).unwrap();
    u.apply(&CliffordGate::H(2)).unwrap();
    assert_eq!(t, u);
    assert!(Tableau::zero(2).apply(&CliffordGate::H(5)).is_err());
}

#[test]
fn measurement_collapses_and_repeats() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut t = Tableau::zero(2);
    t.apply(&CliffordGate::H(0)).unwrap();
    t.apply(&CliffordGate::Cnot(0, 1)).unwrap();
    let zz: Pauli = "ZI".parse().unwrap();
    let b = t.measure(&zz, &mut rng).unwrap();
    for _ in 0..5 {
        assert_eq!(t.measure(&zz, &mut rng).unwrap(), b);
        assert_eq!(t.measure(&"IZ".parse().unwrap(), &mut rng).unwrap(), b);
    }
    // The measured state agrees with its dense vector.
    let psi = t.to_state_vector().unwrap();
    let idx = if b { 3 } else { 0 };
    assert!((psi.amplitudes()[idx].norm() - 1.0).abs() < 1e-12);
}

/// Exhaustive oracle: search all 2^m stabilizer products.
fn exhaustive_clean(code: &StabilizerCode, l: &Pauli, region: &[usize]) -> bool {
    let m = code.stabilizers.len();
    (0..1u32 << m).any(|mask| {
        let mut p = l.clone();
        for i in 0..m {
            if mask >> i & 1 == 1 {
                p = p.mul(&code.stabilizers[i]);
            }
        }
        p.support().iter().all(|q| region.contains(q))
    })
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0..1u32 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|&i| m >> i & 1 == 1).collect())
        .collect()
}

#[test]
fn steane_cleaning_matches_exhaustive_search() {
    let code = StabilizerCode::steane();
    for k in 0..=7 {
        for region in subsets(7, k) {
            for l in [&code.logical_x[0], &code.logical_z[0]] {
                let fast = clean_logical(&code, l, &region).unwrap();
                assert_eq!(fast.is_some(), exhaustive_clean(&code, l, &region), "{region:?}");
                if let Some(r) = fast {
                    assert!(r.support().iter().all(|q| region.contains(q)));
                    assert_eq!(code.logical_class(&r).unwrap(), code.logical_class(l).unwrap());
                    // Same action on the code space.
                    let p = code.code_projector();
                    let diff = linalg::matmul(&(r.to_matrix() - l.to_matrix()), &p);
                    assert!(linalg::frobenius(&diff) < 1e-10);
                }
            }
            let rec = recoverable(&code, &region, 0).unwrap();
            if k >= 5 {
                assert!(rec);
            }
            if k <= 2 {
                assert!(!rec);
            }
        }
    }
}

#[test]
fn cleaning_rejects_non_logical() {
    let code = StabilizerCode::steane();
    let bad: Pauli = "XIIIIII".parse().unwrap();
    assert!(clean_logical(&code, &bad, &[0]).is_err());
    assert!(clean_logical(&code, &code.logical_x[0], &(0..7).collect::<Vec<_>>()).unwrap().is_some());
}

#[test]
fn code_text_round_trip() {
    let code = StabilizerCode::steane();
    let text = code.to_string();
    let back: StabilizerCode = text.parse().unwrap();
    assert_eq!(code, back);
    assert!("S +XX\nS +ZI\n".parse::<StabilizerCode>().is_err());
}

fn dense_entropy(t: &Tableau, region: &[usize]) -> f64 {
    let psi = t.to_state_vector().unwrap();
    entropy(StateOrDensity::Pure(&psi), region).unwrap()
}

#[test]
fn entropies_match_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let t = random_tableau(5, &mut rng);
        for region in [vec![0], vec![1, 2], vec![0, 3, 4], vec![0, 1, 2, 3]] {
            let s = region_entropy(&t, &region) as f64;
            assert!((s - dense_entropy(&t, &region)).abs() < 1e-9);
        }
    }
}

#[test]
fn small_entropy_examples() {
    let t = Tableau::zero(3);
    assert_eq!(region_entropy(&t, &[0, 2]), 0);
    let mut bell = Tableau::zero(2);
    bell.apply_all(&[CliffordGate::H(0), CliffordGate::Cnot(0, 1)]).unwrap();
    assert_eq!(region_entropy(&bell, &[0]), 1);
    // Two Bell pairs (0,1) and (2,3).
    let mut two = Tableau::zero(4);
    two.apply_all(&[
        CliffordGate::H(0),
        CliffordGate::Cnot(0, 1),
        CliffordGate::H(2),
        CliffordGate::Cnot(2, 3),
    ])
    .unwrap();
    assert_eq!(mutual_information(&two, &[0, 1], &[2, 3]).unwrap(), 0);
    assert_eq!(mutual_information(&two, &[0], &[1]).unwrap(), 2);
    let mut ghz = Tableau::zero(3);
    ghz.apply_all(&[CliffordGate::H(0), CliffordGate::Cnot(0, 1), CliffordGate::Cnot(1, 2)])
        .unwrap();
    let mi = mutual_information(&ghz, &[0], &[2]).unwrap();
    let psi = ghz.to_state_vector().unwrap();
    let dense = entropy(StateOrDensity::Pure(&psi), &[0]).unwrap()
        + entropy(StateOrDensity::Pure(&psi), &[2]).unwrap()
        - entropy(StateOrDensity::Pure(&psi), &[0, 2]).unwrap();
    assert_eq!(mi, 1);
    assert!((dense - 1.0).abs() < 1e-9);
    assert!(mutual_information(&ghz, &[0, 1], &[1]).is_err());
}

#[test]
fn from_stabilizers_rebuilds_destabilizers() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let t = random_tableau(6, &mut rng);
        let u = Tableau::from_stabilizers(t.stabilizers().to_vec()).unwrap();
        for (i, d) in u.destabilizers().iter().enumerate() {
            for (j, s) in u.stabilizers().iter().enumerate() {
                assert_eq!(d.commutes(s), i != j);
            }
            for d2 in u.destabilizers() {
                assert!(d.commutes(d2));
            }
        }
        let e = StateVector::normalized(vec![2; 6], u.to_state_vector().unwrap().into_amplitudes()).unwrap();
        let f = t.to_state_vector().unwrap();
        assert!((e.inner(&f).norm() - 1.0).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn entropy_is_symmetric_for_pure_states(seed in any::<u64>(), mask in 0u32..64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_tableau(6, &mut rng);
        let r: Vec<usize> = (0..6).filter(|i| mask >> i & 1 == 1).collect();
        let c: Vec<usize> = (0..6).filter(|i| mask >> i & 1 == 0).collect();
        prop_assert_eq!(region_entropy(&t, &r), region_entropy(&t, &c));
    }

    #[test]
    fn tableau_matches_dense_for_short_circuits(seed in any::<u64>(), n in 1usize..=4, len in 0usize..=30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gates = random_clifford_circuit(n, len, &mut rng);
        check_all_expectations(n, &gates);
    }

    #[test]
    fn no_cloning_of_logicals(mask in 0u32..128) {
        let code = StabilizerCode::steane();
        let r: Vec<usize> = (0..7).filter(|i| mask >> i & 1 == 1).collect();
        let c: Vec<usize> = (0..7).filter(|i| mask >> i & 1 == 0).collect();
        prop_assert!(!(recoverable(&code, &r, 0).unwrap() && recoverable(&code, &c, 0).unwrap()));
    }
}
