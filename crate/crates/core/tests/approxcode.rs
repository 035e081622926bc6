use std::collections::BTreeMap;

use nlqc::approxcode::*;
use nlqc::lattice::{evolve_model, tfim, Ring};
use nlqc::qcore::linalg::{self, C64};
use nlqc::qcore::{channel_distance_bounds, CMat, Channel, DenseOperator, StateVector};
use nlqc::spread::ModelCorrelator;
use nlqc::stab::StabilizerCode;
use nlqc::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Steane `|0_L⟩` by projecting `|0⟩^7` with the X-type checks of the
/// Hamming code, and transversal `X̄`, `Z̄`, all from bit arithmetic.
fn steane_by_hand() -> (Vec<C64>, CMat, CMat) {
    let checks = [0b1111000usize, 0b1100110, 0b1010101];
    let mut amps = vec![C64::new(0.0, 0.0); 128];
    amps[0] = C64::new(1.0, 0.0);
    for c in checks {
        let mut next = amps.clone();
        for (i, a) in amps.iter().enumerate() {
            next[i ^ c] += *a;
        }
        amps = next.into_iter().map(|a| a * 0.5).collect();
    }
    let norm = linalg::vec_norm(&amps);
    amps.iter_mut().for_each(|a| *a /= norm);
    let x = CMat::from_fn(128, 128, |r, c| if r == c ^ 127 { linalg::ONE } else { linalg::ZERO });
    let z = CMat::from_fn(128, 128, |r, c| {
        if r != c {
            linalg::ZERO
        } else if (r.count_ones() % 2) == 0 {
            linalg::ONE
        } else {
            -linalg::ONE
        }
    });
    (amps, x, z)
}

#[test]
fn trivial_code_is_the_identity() {
    let (x, z) = generalized_paulis(2);
    let v = build_isometry(&pauli_powers(&x, 2), &[linalg::ONE, linalg::ZERO], None).unwrap();
    assert!(linalg::frobenius(&(&v.matrix - linalg::identity(2))) < 1e-14);
    let c = code_conditions(&v.matrix, &x, &z).unwrap();
    assert!(c.isometry_defect < 1e-14 && c.intertwining < 1e-14 && c.projector_commutator < 1e-14);
}

#[test]
fn steane_encoder_satisfies_code_conditions() {
    let (zero, x, z) = steane_by_hand();
    let v = build_isometry(&pauli_powers(&x, 2), &zero, None).unwrap();
    assert!(v.defect < 1e-10);
    assert!((v.defect - v.recompute_defect()).abs() < 1e-12);
    let c = code_conditions(&v.matrix, &x, &z).unwrap();
    assert!(c.isometry_defect < 1e-10, "{c:?}");
    assert!(c.intertwining < 1e-10, "{c:?}");
    assert!(c.projector_commutator < 1e-10, "{c:?}");
}

#[test]
fn library_steane_seed_spans_the_same_code() {
    let (zero, x, _) = steane_by_hand();
    let by_hand = build_isometry(&pauli_powers(&x, 2), &zero, None).unwrap();
    let code = StabilizerCode::steane();
    let (seed, xl, zl) = stabilizer_seed(&code).unwrap();
    let lib = build_isometry(&pauli_powers(&xl, 2), seed.amplitudes(), None).unwrap();
    let c = code_conditions(&lib.matrix, &xl, &zl).unwrap();
    assert!(c.isometry_defect < 1e-10 && c.intertwining < 1e-10 && c.projector_commutator < 1e-10);
    let p1 = linalg::matmul(&by_hand.matrix, &by_hand.matrix.adjoint());
    let p2 = linalg::matmul(&lib.matrix, &lib.matrix.adjoint());
    assert!(linalg::op_norm(&(p1 - p2)) < 1e-10);
}

#[test]
fn dependent_excitations_are_rejected() {
    let id = linalg::identity(2);
    let err = build_isometry(&[id.clone(), id], &[linalg::ONE, linalg::ZERO], None).unwrap_err();
    assert!(matches!(err, Error::NotIsometry { .. }));
}

fn steane_oracle() -> DenseOracle {
    let (zero, x, _) = steane_by_hand();
    let mut operators = BTreeMap::new();
    operators.insert("1".to_string(), linalg::identity(128));
    operators.insert("X".to_string(), x);
    DenseOracle {
        state: zero,
        operators,
        hamiltonian: None,
    }
}

fn steane_labels() -> Vec<(String, String)> {
    vec![("1".into(), "1".into()), ("X".into(), "X".into())]
}

#[test]
fn exact_oracle_gives_an_exact_isometry() {
    let v = build_isometry_from_oracle(&steane_oracle(), &steane_labels(), 0.0).unwrap();
    assert_eq!(v.frame, Frame::Gram);
    assert!(v.defect < 1e-12);
    assert!(linalg::frobenius(&(&v.matrix - linalg::identity(2))) < 1e-12);
}

#[test]
fn noisy_oracle_defect_is_of_order_eta() {
    let eta = 1e-3;
    for seed in 0..5 {
        let noisy = NoisyOracle {
            inner: steane_oracle(),
            eta,
            seed,
        };
        let v = build_isometry_from_oracle(&noisy, &steane_labels(), 0.0).unwrap();
        assert!(v.defect > 0.0 && v.defect <= 10.0 * eta, "{}", v.defect);
        let p = polish_isometry(&v).unwrap();
        assert!(p.defect <= 1e-12);
    }
}

#[test]
fn oracle_gram_matches_dense_evolution() {
    let ring = Ring::qubits(4).unwrap();
    let model = tfim(ring, 1.0, 0.6, 0.0);
    let t = 0.4;
    let nlqc::lattice::ModelSpec::LocalHamiltonian { terms, .. } = model.clone() else {
        unreachable!()
    };
    let x0 = DenseOperator::pauli(0, 1);
    let mut operators = BTreeMap::new();
    operators.insert("1".to_string(), DenseOperator::identity(vec![0], vec![2]).unwrap());
    operators.insert("X0".to_string(), x0.clone());
    let state = StateVector::zero(ring.dims());
    let oracle = ModelCorrelator {
        ring,
        terms,
        state: state.clone(),
        operators,
    };
    let labels = vec![("1".to_string(), "1".to_string()), ("X0".to_string(), "X0".to_string())];
    let g = build_isometry_from_oracle(&oracle, &labels, t).unwrap();

    let u = evolve_model(&model.at_time(t), ring).unwrap();
    let x_full = nlqc::qcore::embed(&x0, &ring.dims()).unwrap();
    let heis = linalg::matmul(&u.matrix().adjoint(), &linalg::matmul(x_full.matrix(), u.matrix()));
    let dense = build_isometry(&[linalg::identity(16), heis], state.amplitudes(), Some(u.matrix())).unwrap();
    let gram_dense = linalg::matmul(&dense.matrix.adjoint(), &dense.matrix);
    let gram_oracle = linalg::matmul(&g.matrix.adjoint(), &g.matrix);
    assert!(linalg::frobenius(&(gram_dense - gram_oracle)) < 1e-9);
}

#[test]
fn polish_examples() {
    let (zero, x, _) = steane_by_hand();
    let v = build_isometry(&pauli_powers(&x, 2), &zero, None).unwrap();
    let p = polish_isometry(&v).unwrap();
    assert!(linalg::frobenius(&(&p.matrix - &v.matrix)) < 1e-12);

    let scaled = CodeIsometry::new(&v.matrix * C64::new(1.01, 0.0), vec![], Frame::Physical);
    let p = polish_isometry(&scaled).unwrap();
    assert!(linalg::frobenius(&(&p.matrix - &v.matrix)) < 1e-12);
    assert!(linalg::op_norm(&(&p.matrix - &scaled.matrix)) <= 2.0 * scaled.defect);

    let bad = CodeIsometry::new(&v.matrix * C64::new(1.3, 0.0), vec![], Frame::Physical);
    assert!(matches!(polish_isometry(&bad), Err(Error::NotIsometry { .. })));
}

#[test]
fn sweep_scaling_laws() {
    let code = StabilizerCode::steane();
    let etas = [1e-2, 1e-3, 1e-4];
    let seeds: Vec<u64> = (0..5).collect();
    let pts = eta_sweep(&code, &etas, &seeds).unwrap();
    assert_eq!(pts.len(), 15);
    let xs: Vec<f64> = pts.iter().map(|p| p.eta).collect();
    let defects: Vec<f64> = pts.iter().map(|p| p.defect).collect();
    let inter: Vec<f64> = pts.iter().map(|p| p.intertwining).collect();
    let shifts: Vec<f64> = pts.iter().map(|p| p.polish_shift).collect();
    let s_def = loglog_slope(&xs, &defects).unwrap();
    let s_int = loglog_slope(&xs, &inter).unwrap();
    let s_pol = loglog_slope(&defects, &shifts).unwrap();
    assert!((s_def - 1.0).abs() <= 0.1, "{s_def}");
    assert!((s_int - 0.5).abs() <= 0.15, "{s_int}");
    assert!((s_pol - 1.0).abs() <= 0.1, "{s_pol}");
    for p in &pts {
        assert!(p.polish_shift <= 2.0 * p.defect);
    }
}

#[test]
fn reconstruct_unitary_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u = linalg::haar_unitary(4, &mut rng);
    let op = DenseOperator::new(vec![0, 1], vec![2, 2], u.clone()).unwrap();
    assert!(linalg::frobenius(&(reconstruct_unitary(&op).matrix() - u)) < 1e-12);

    let zero = DenseOperator::new(vec![0], vec![3], CMat::zeros(3, 3)).unwrap();
    assert!(reconstruct_unitary(&zero).unitarity_defect() < 1e-10);

    let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
        C64::new(2.0, 0.0),
        C64::new(0.5, 0.0),
        C64::new(-3.0, 0.0),
    ]));
    let r = reconstruct_unitary(&DenseOperator::new(vec![0], vec![3], d).unwrap());
    let want = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
        C64::new(1.0, 0.0),
        C64::new(1.0, 0.0),
        C64::new(-1.0, 0.0),
    ]));
    assert!(linalg::frobenius(&(r.matrix() - want)) < 1e-12);
}

#[test]
fn isometry_bound_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u = linalg::haar_unitary(8, &mut rng);
    let v = u.columns(0, 2).into_owned();
    assert_eq!(isometry_channel_bound(&v, &v).unwrap(), 0.0);

    let phi = 0.7;
    let w = &v * C64::from_polar(1.0, phi);
    let bound = isometry_channel_bound(&v, &w).unwrap();
    assert!((bound - 2.0 * (C64::new(1.0, 0.0) - C64::from_polar(1.0, phi)).norm()).abs() < 1e-12);
    let (lo, _) = channel_distance_bounds(
        &Channel::new(vec![2], vec![8], vec![v.clone()]).unwrap(),
        &Channel::new(vec![2], vec![8], vec![w]).unwrap(),
    )
    .unwrap();
    assert!(lo < 1e-12);

    assert!(isometry_channel_bound(&v, &(&v * C64::new(2.0, 0.0))).is_err());
}

#[test]
fn isometry_bound_dominates_choi_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..30 {
        let v = linalg::haar_unitary(6, &mut rng).columns(0, 3).into_owned();
        let g = linalg::ginibre(6, 3, &mut rng) * C64::new(0.005 * (1 + k % 5) as f64, 0.0);
        let w = polish_isometry(&CodeIsometry::new(&v + g, vec![], Frame::Physical)).unwrap().matrix;
        let bound = isometry_channel_bound(&v, &w).unwrap();
        let (lo, _) = channel_distance_bounds(
            &Channel::new(vec![3], vec![6], vec![v.clone()]).unwrap(),
            &Channel::new(vec![3], vec![6], vec![w]).unwrap(),
        )
        .unwrap();
        // `lo` bounds half the diamond distance.
        assert!(bound >= 2.0 * lo - 1e-12, "{bound} < {}", 2.0 * lo);
    }
}

#[test]
fn certificate_examples() {
    assert_eq!(compose_certificate(0.0, 0.0, 0.0, 0.0, None).unwrap().total, 0.0);
    let c = compose_certificate(0.01, 0.02, 0.03, 0.04, None).unwrap();
    assert!((c.total - 0.10).abs() < 1e-15);
    assert!(c.parametric.is_none());
    assert!(matches!(
        compose_certificate(0.01, -0.02, 0.0, 0.0, None),
        Err(Error::NegativeInput(_))
    ));

    let p = PhysicalParams::new(1e-4, 1e-6, 2.0, 3.0, 0.5);
    let c = compose_certificate(0.01, 0.02, 0.03, 0.04, Some(p)).unwrap();
    let expect = 1e-2 + 1e-3 + 2.0 * (-1.5f64).exp();
    assert!((c.parametric.unwrap() - expect).abs() < 1e-15);
    let json = serde_json::to_string(&c).unwrap();
    let back: ErrorCertificate = serde_json::from_str(&json).unwrap();
    assert_eq!(back, c);
    assert!(json.contains("c_spread"));
}

#[test]
fn end_to_end_certificate_dominates() {
    let cfg = EndToEndConfig::default();
    let fit = end_to_end_fit(&cfg).unwrap();
    let r = end_to_end(&cfg, &fit).unwrap();
    assert!(r.dominated, "{} > {}", r.measured_lower, r.certificate.total);
    assert!(r.measured_lower > 0.0);
    assert!(r.certificate.eps_enc > 0.0 && r.certificate.eps_dyn > 0.0);
}

#[test]
fn loglog_slope_recovers_power_laws() {
    let xs = [1.0, 10.0, 100.0];
    let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(0.5)).collect();
    assert!((loglog_slope(&xs, &ys).unwrap() - 0.5).abs() < 1e-12);
    assert!(loglog_slope(&[1.0], &[1.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn certificate_is_additive(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0, d in 0.0f64..1.0) {
        let cert = compose_certificate(a, b, c, d, None).unwrap();
        prop_assert!((cert.total - (a + b + c + d)).abs() < 1e-14);
        prop_assert!(cert.total >= a.max(b).max(c).max(d));
    }

    #[test]
    fn reconstruction_is_unitary(seed in 0u64..1000, d in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = linalg::ginibre(d, d, &mut rng);
        let r = reconstruct_unitary(&DenseOperator::new(vec![0], vec![d], m).unwrap());
        prop_assert!(r.unitarity_defect() < 1e-10);
    }

    #[test]
    fn polish_is_idempotent(seed in 0u64..1000, scale in 0.0f64..0.1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = linalg::haar_unitary(5, &mut rng).columns(0, 2).into_owned();
        let g = linalg::ginibre(5, 2, &mut rng);
        let g = &g * C64::new(scale / linalg::frobenius(&g), 0.0);
        let once = polish_isometry(&CodeIsometry::new(v + g, vec![], Frame::Physical)).unwrap();
        let twice = polish_isometry(&once).unwrap();
        prop_assert!(once.defect <= 1e-12);
        prop_assert!(linalg::frobenius(&(&once.matrix - &twice.matrix)) < 1e-12);
    }
}
