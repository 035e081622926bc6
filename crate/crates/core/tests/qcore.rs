use nlqc::qcore::linalg::{haar_unitary, identity, kron, matmul, pauli, swap2};
use nlqc::qcore::*;
use nlqc::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn random_matrix(d: usize, rng: &mut ChaCha8Rng) -> CMat {
    CMat::from_fn(d, d, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
}

fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn embed_single_factor() {
    let z = DenseOperator::pauli(0, 3);
    let e = embed(&z, &[2, 2]).unwrap();
    let want = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0), c(1.0), c(-1.0), c(-1.0)]));
    assert_eq!(e.matrix(), &want);
    let id = DenseOperator::identity(vec![1], vec![2]).unwrap();
    assert_eq!(embed(&id, &[2, 2]).unwrap().matrix(), &identity(4));
}

#[test]
fn embed_swap_matches_basis_enumeration() {
    let sw = DenseOperator::new(vec![0, 2], vec![2, 2], swap2()).unwrap();
    let e = embed(&sw, &[2, 2, 2]).unwrap();
    for i in 0..8usize {
        let (b0, b1, b2) = ((i >> 2) & 1, (i >> 1) & 1, i & 1);
        let j = (b2 << 2) | (b1 << 1) | b0;
        for r in 0..8 {
            let want = if r == j { 1.0 } else { 0.0 };
            assert_eq!(e.matrix()[(r, i)], c(want));
        }
    }
}

#[test]
fn embed_errors() {
    let z = DenseOperator::pauli(3, 3);
    assert!(matches!(embed(&z, &[2, 2]), Err(Error::SupportOutOfRange { .. })));
    let q = DenseOperator::identity(vec![0], vec![3]).unwrap();
    assert!(matches!(embed(&q, &[2, 2]), Err(Error::DimensionMismatch(_))));
}

#[test]
fn partial_trace_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_matrix(2, &mut rng);
    let b = random_matrix(3, &mut rng);
    let ab = DenseOperator::new(vec![0, 1], vec![2, 3], kron(&a, &b)).unwrap();
    let r = partial_trace(&ab, &[1]).unwrap();
    assert!(max_abs(&(r.matrix() - &a * b.trace())) < 1e-12);
    assert_eq!(r.support(), &[0]);

    // tr_1 SWAP = Σ_i ⟨i|·|i⟩ over the first factor, enumerated by hand.
    let sw = DenseOperator::new(vec![0, 1], vec![2, 2], swap2()).unwrap();
    let t = partial_trace(&sw, &[0]).unwrap();
    let mut want = CMat::zeros(2, 2);
    for i in 0..2 {
        for a in 0..2 {
            for b in 0..2 {
                want[(a, b)] += swap2()[(2 * i + a, 2 * i + b)];
            }
        }
    }
    assert_eq!(t.matrix(), &want);
    assert_eq!(want, identity(2));

    assert!(matches!(partial_trace(&sw, &[5]), Err(Error::NotInSupport(5))));
}

#[test]
fn twirl_examples() {
    let sw = DenseOperator::new(vec![0, 1], vec![2, 2], swap2()).unwrap();
    let t = twirl(&sw, &[0]).unwrap();
    assert!(max_abs(&(t.matrix() - identity(4) * c(0.5))) < 1e-12);
    let id = DenseOperator::identity(vec![0, 1, 2], vec![2, 2, 2]).unwrap();
    assert!(max_abs(&(twirl(&id, &[1, 2]).unwrap().matrix() - identity(8))) < 1e-12);
}

#[test]
fn twirl_matches_haar_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let op = DenseOperator::new(vec![0, 1, 2], vec![2, 2, 2], random_matrix(8, &mut rng)).unwrap();
    let t = twirl(&op, &[1]).unwrap();
    let mut acc = CMat::zeros(8, 8);
    let samples = 2000;
    for _ in 0..samples {
        let u = haar_unitary(2, &mut rng);
        let ue = embed(&DenseOperator::new(vec![1], vec![2], u).unwrap(), &[2, 2, 2]).unwrap();
        acc += conjugate_op(ue.matrix(), op.matrix());
    }
    acc /= c(samples as f64);
    let err = linalg::op_norm(&(acc - t.matrix()));
    assert!(err < 5e-2, "{err}");
}

fn conjugate_op(u: &CMat, a: &CMat) -> CMat {
    matmul(&matmul(u, a), &u.adjoint())
}

#[test]
fn polar_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let u = haar_unitary(4, &mut rng);
    let op = DenseOperator::new(vec![0, 1], vec![2, 2], u.clone()).unwrap();
    assert!(max_abs(&(polar_unitary(&op).unwrap().matrix() - &u)) < 1e-10);
    let op2 = op.scale(c(2.0));
    assert!(max_abs(&(polar_unitary(&op2).unwrap().matrix() - &u)) < 1e-10);

    let k = DenseOperator::new(vec![0, 1], vec![2, 2], &u + random_matrix(4, &mut rng) * c(0.1)).unwrap();
    let p = polar_unitary(&k).unwrap();
    let dp = linalg::frobenius(&(p.matrix() - k.matrix()));
    for _ in 0..50 {
        let v = haar_unitary(4, &mut rng);
        assert!(dp <= linalg::frobenius(&(v - k.matrix())) + 1e-12);
    }

    let mut sing = CMat::zeros(2, 2);
    sing[(0, 0)] = c(1.0);
    let s = DenseOperator::new(vec![0], vec![2], sing).unwrap();
    assert!(matches!(polar_unitary(&s), Err(Error::Singular { .. })));
}

#[test]
fn schatten_examples() {
    let z = DenseOperator::pauli(0, 3);
    assert!((schatten_norm(&z, Schatten::Inf) - 1.0).abs() < 1e-12);
    assert!((schatten_norm(&z, Schatten::One) - 2.0).abs() < 1e-12);
    assert!((schatten_norm(&z, Schatten::Two) - 2f64.sqrt()).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = DenseOperator::new(vec![0, 1, 2], vec![2, 2, 2], random_matrix(8, &mut rng)).unwrap();
    let (i, t, o) = (
        schatten_norm(&a, Schatten::Inf),
        schatten_norm(&a, Schatten::Two),
        schatten_norm(&a, Schatten::One),
    );
    assert!(i <= t && t <= o);
}

fn bell() -> StateVector {
    let s = 0.5f64.sqrt();
    StateVector::new(vec![2, 2], vec![c(s), c(0.0), c(0.0), c(s)]).unwrap()
}

#[test]
fn entropy_examples() {
    let zero = StateVector::zero(vec![2, 2]);
    assert!(entropy(StateOrDensity::Pure(&zero), &[0]).unwrap().abs() < 1e-12);
    assert!((entropy(StateOrDensity::Pure(&bell()), &[0]).unwrap() - 1.0).abs() < 1e-12);
    let rho = bell().density();
    assert!(entropy(StateOrDensity::Density(&rho), &[0, 1]).unwrap().abs() < 1e-10);
    assert!((entropy(StateOrDensity::Density(&rho), &[1]).unwrap() - 1.0).abs() < 1e-10);
    let bad = DenseOperator::pauli(0, 3);
    assert!(matches!(entropy(StateOrDensity::Density(&bad), &[0]), Err(Error::NotPsd { .. })));
}

#[test]
fn channel_distance_examples() {
    let id = Channel::identity(vec![2]);
    assert_eq!(channel_distance_bounds(&id, &id).unwrap(), (0.0, 0.0));
    let z = Channel::unitary(vec![2], pauli(3)).unwrap();
    let (lo, hi) = channel_distance_bounds(&id, &z).unwrap();
    assert!((lo - 1.0).abs() < 1e-12 && (hi - 2.0).abs() < 1e-12);

    // Oracle: search pure inputs on qubit ⊗ ancilla for the largest output
    // trace distance; the maximum is the full diamond distance 2.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut best = 0.0f64;
    let z_ext = kron(&pauli(3), &identity(2));
    for _ in 0..400 {
        let v = linalg::to_dvector(&linalg::random_state(4, &mut rng));
        let a = &v * v.adjoint();
        let b = matmul(&matmul(&z_ext, &a), &z_ext);
        best = best.max(linalg::hermitian_trace_norm(&(a - b)));
    }
    assert!(best > 1.9 && best <= 2.0 + 1e-9, "{best}");
    // The searched value approaches the true maximum from below.
    assert!(lo <= 1.0 + 1e-12 && best / 2.0 <= hi + 1e-9);

    let two = Channel::identity(vec![2, 2]);
    assert!(matches!(channel_distance_bounds(&id, &two), Err(Error::DimensionMismatch(_))));
}

fn random_channel(rng: &mut ChaCha8Rng) -> Channel {
    // Stinespring: a Haar isometry 2 → 2⊗2 split into two Kraus operators.
    let u = haar_unitary(4, rng);
    let k0 = CMat::from_fn(2, 2, |i, j| u[(2 * i, j)]);
    let k1 = CMat::from_fn(2, 2, |i, j| u[(2 * i + 1, j)]);
    Channel::new(vec![2], vec![2], vec![k0, k1]).unwrap()
}

#[test]
fn channel_bounds_are_ordered() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..30 {
        let (a, b) = (random_channel(&mut rng), random_channel(&mut rng));
        let (lo, hi) = channel_distance_bounds(&a, &b).unwrap();
        assert!(0.0 <= lo && lo <= hi);
    }
    // Different Kraus sets, same channel.
    let h = 0.5f64.sqrt();
    let k = vec![identity(2) * c(h), pauli(3) * c(h)];
    let rot = vec![(identity(2) + pauli(3)) * c(0.5), (identity(2) - pauli(3)) * c(0.5)];
    let a = Channel::new(vec![2], vec![2], k).unwrap();
    let b = Channel::new(vec![2], vec![2], rot).unwrap();
    assert!(channel_distance_bounds(&a, &b).unwrap().1 < 1e-10);
}

#[test]
fn kraus_validation() {
    let bad = vec![identity(2) * c(0.9)];
    assert!(matches!(Channel::new(vec![2], vec![2], bad.clone()), Err(Error::NotTracePreserving { .. })));
    assert!(Channel::subnormalized(vec![2], vec![2], bad).unwrap().is_subnormalized());
}

#[test]
fn isometry_distance_examples() {
    let i2 = identity(2);
    let d = isometry_channel_distance(&i2, &i2).unwrap();
    assert_eq!(d.bound, 0.0);
    assert!(d.exact.unwrap().abs() < 1e-12);

    let phase = C64::from_polar(1.0, 0.7);
    let d = isometry_channel_distance(&i2, &(&i2 * phase)).unwrap();
    assert!(d.exact.unwrap().abs() < 1e-7);
    assert!((d.bound - 2.0 * (c(1.0) - phase).norm()).abs() < 1e-12);

    let d = isometry_channel_distance(&i2, &pauli(3)).unwrap();
    assert!((d.exact.unwrap() - 2.0).abs() < 1e-12);
    // Pinch against the Choi sandwich (unhalved convention: 2·lower ≤ exact ≤ 2·upper).
    let (lo, hi) = channel_distance_bounds(&Channel::identity(vec![2]), &Channel::unitary(vec![2], pauli(3)).unwrap()).unwrap();
    assert!(2.0 * lo <= 2.0 + 1e-12 && 2.0 <= 2.0 * hi + 1e-12);

    let not_iso = identity(2) * c(2.0);
    assert!(matches!(isometry_channel_distance(&i2, &not_iso), Err(Error::NotIsometry { .. })));

    // Rectangular isometries report the bound only.
    let v = CMat::from_fn(4, 2, |i, j| if i == j { c(1.0) } else { c(0.0) });
    assert!(isometry_channel_distance(&v, &v).unwrap().exact.is_none());
}

#[test]
fn exact_diamond_for_small_rotation() {
    // V = 1, W = diag(1, e^{iθ}): hull distance cos(θ/2), exact 2 sin(θ/2).
    let th = 0.9f64;
    let mut w = identity(2);
    w[(1, 1)] = C64::from_polar(1.0, th);
    let d = isometry_channel_distance(&identity(2), &w).unwrap();
    assert!((d.exact.unwrap() - 2.0 * (th / 2.0).sin()).abs() < 1e-10);
    assert!(d.exact.unwrap() <= d.bound + 1e-12);
}

fn three_qubit_op(seed: u64) -> DenseOperator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseOperator::new(vec![0, 1, 2], vec![2, 2, 2], random_matrix(8, &mut rng)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn partial_trace_preserves_trace(seed in any::<u64>(), mask in 1u8..8) {
        let op = three_qubit_op(seed);
        let traced: Vec<usize> = (0..3).filter(|k| mask >> k & 1 == 1).collect();
        let r = partial_trace(&op, &traced).unwrap();
        prop_assert!((r.trace() - op.trace()).norm() < 1e-12);
    }

    #[test]
    fn twirl_commutes_with_region_unitaries(seed in any::<u64>(), site in 0usize..3) {
        let op = three_qubit_op(seed);
        let t = twirl(&op, &[site]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for _ in 0..100 {
            let u = DenseOperator::new(vec![site], vec![2], haar_unitary(2, &mut rng)).unwrap();
            let ue = embed(&u, &[2, 2, 2]).unwrap();
            let com = ue.commutator(&t).unwrap();
            prop_assert!(schatten_norm(&com, Schatten::Inf) < 1e-10);
        }
    }

    #[test]
    fn polar_is_unitary_and_idempotent(seed in any::<u64>()) {
        let op = three_qubit_op(seed);
        let p = polar_unitary(&op).unwrap();
        prop_assert!(p.unitarity_defect() < 1e-10);
        let pp = polar_unitary(&p).unwrap();
        prop_assert!(max_abs(&(pp.matrix() - p.matrix())) < 1e-10);
    }

    #[test]
    fn entropy_is_bounded_and_symmetric(seed in any::<u64>(), mask in 1u8..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi = StateVector::random(vec![2; 4], &mut rng);
        let r: Vec<usize> = (0..4).filter(|k| mask >> k & 1 == 1).collect();
        let rc: Vec<usize> = (0..4).filter(|k| mask >> k & 1 == 0).collect();
        let s = entropy(StateOrDensity::Pure(&psi), &r).unwrap();
        let sc = entropy(StateOrDensity::Pure(&psi), &rc).unwrap();
        prop_assert!(s >= 0.0 && s <= r.len().min(rc.len()) as f64 + 1e-9);
        prop_assert!((s - sc).abs() < 1e-9);
    }

    #[test]
    fn bounds_vanish_iff_same_choi(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_channel(&mut rng);
        let b = random_channel(&mut rng);
        let (lo, _) = channel_distance_bounds(&a, &a).unwrap();
        prop_assert!(lo < 1e-10);
        let (lo, _) = channel_distance_bounds(&a, &b).unwrap();
        let same = max_abs(&(a.choi() - b.choi())) < 1e-10;
        prop_assert_eq!(lo < 1e-10, same);
    }
}
