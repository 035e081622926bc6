use std::f64::consts::PI;
use std::sync::OnceLock;

use nlqc::decompose::*;
use nlqc::lattice::*;
use nlqc::protocol::*;
use nlqc::qcore::linalg::{self, C64};
use nlqc::qcore::tensor::{digits, from_digits};
use nlqc::qcore::CMat;
use nlqc::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ring8() -> Ring {
    Ring::qubits(8).unwrap()
}

fn random_rho(d: usize, rng: &mut ChaCha8Rng) -> CMat {
    let g = linalg::ginibre(d, d, rng);
    let m = linalg::matmul(&g, &g.adjoint());
    let tr = m.trace();
    m / tr
}

fn brickwork_case() -> &'static (ModelSpec, QuarterDecomposition) {
    static CASE: OnceLock<(ModelSpec, QuarterDecomposition)> = OnceLock::new();
    CASE.get_or_init(|| {
        let spec = random_brickwork(ring8(), 1, 5);
        let u = evolve_model(&spec, ring8()).unwrap();
        (spec, decompose_swap(&u, ring8(), false).unwrap())
    })
}

/// Brute force on `A ⊗ B ⊗ ring`: swap permutation, then `1 ⊗ U`, then the
/// reduced state of the two designated sites.
fn brute_force(spec: &ModelSpec, ring: Ring, rho_ab: &CMat) -> CMat {
    let n = ring.n_sites();
    let (c0, c1) = designated_sites(ring);
    let dims = vec![2; n + 2];
    let dim = 1 << (n + 2);
    let ring_dim = 1 << n;
    let perm = |i: usize| {
        let mut g = digits(i, &dims);
        g.swap(0, 2 + c0);
        g.swap(1, 2 + c1);
        from_digits(&g, &dims)
    };
    let mut rho = CMat::zeros(dim, dim);
    for a in 0..4 {
        for b in 0..4 {
            rho[(perm(a * ring_dim), perm(b * ring_dim))] = rho_ab[(a, b)];
        }
    }
    let u = evolve_model(spec, ring).unwrap();
    let m = linalg::kron(&linalg::identity(4), u.matrix());
    let rho = linalg::conjugate(&m, &rho);
    let mut out = CMat::zeros(4, 4);
    for i in 0..dim {
        for j in 0..dim {
            let (gi, gj) = (digits(i, &dims), digits(j, &dims));
            let rest_equal = (0..n + 2).all(|k| k == 2 + c0 || k == 2 + c1 || gi[k] == gj[k]);
            if rest_equal {
                let r = 2 * gi[2 + c0] + gi[2 + c1];
                let c = 2 * gj[2 + c0] + gj[2 + c1];
                out[(r, c)] += rho[(i, j)];
            }
        }
    }
    out
}

#[test]
fn designated_sites_sit_in_the_quarters() {
    for n in [6, 8, 10, 12] {
        let ring = Ring::qubits(n).unwrap();
        let q = quarter_regions(ring);
        let (c0, c1) = designated_sites(ring);
        assert!(q.w.contains(c0) && q.n.contains(c0));
        assert!(q.e.contains(c1) && q.s.contains(c1));
    }
}

#[test]
fn identity_dynamics_returns_the_input() {
    let ring = ring8();
    let spec = PseudoBulkSpec::swap_default(ring, ModelSpec::empty_circuit());
    let dec = decompose_circuit(&ModelSpec::empty_circuit(), ring).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..3 {
        let rho = random_rho(4, &mut rng);
        let direct = pseudo_bulk_dynamics(&spec, &rho).unwrap();
        assert!(linalg::frobenius(&(direct.matrix() - &rho)) < 1e-12);
        let run = run_nlqc(&spec, &dec, &rho).unwrap();
        assert!(linalg::frobenius(&(run.output.matrix() - &rho)) < 1e-12);
        assert_eq!(run.transcript.exchange_count(), 1);
    }
}

#[test]
fn trace_and_replace_forgets_the_input() {
    let ring = Ring::qubits(6).unwrap();
    let mut spec = PseudoBulkSpec::swap_default(ring, tfim(ring, 1.0, 0.7, 0.3));
    let (c0, c1) = designated_sites(ring);
    spec.decoder_a = LocalMap::trace_and_replace(c0, 2);
    spec.decoder_b = LocalMap::trace_and_replace(c1, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rho = random_rho(4, &mut rng);
    let out = pseudo_bulk_dynamics(&spec, &rho).unwrap();
    let mut zero = CMat::zeros(4, 4);
    zero[(0, 0)] = C64::new(1.0, 0.0);
    assert!(linalg::frobenius(&(out.matrix() - zero)) < 1e-12);
}

#[test]
fn brickwork_matches_brute_force() {
    let (model, _) = brickwork_case();
    let spec = PseudoBulkSpec::swap_default(ring8(), model.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..2 {
        let rho = random_rho(4, &mut rng);
        let out = pseudo_bulk_dynamics(&spec, &rho).unwrap();
        assert!((out.trace().re - 1.0).abs() < 1e-10);
        let oracle = brute_force(model, ring8(), &rho);
        assert!(linalg::frobenius(&(out.matrix() - oracle)) < 1e-10);
    }
}

#[test]
fn nonlocal_execution_matches_pseudo_bulk() {
    let (model, dec) = brickwork_case();
    let spec = PseudoBulkSpec::swap_default(ring8(), model.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let rho = random_rho(4, &mut rng);
        let direct = pseudo_bulk_dynamics(&spec, &rho).unwrap();
        let run = run_nlqc(&spec, dec, &rho).unwrap();
        let td = trace_distance(&direct, &run.output).unwrap();
        assert!(td <= 1e-9, "{td}");
        audit(&run.transcript).unwrap();
    }
}

#[test]
fn faults_are_rejected() {
    let (model, dec) = brickwork_case();
    let spec = PseudoBulkSpec::swap_default(ring8(), model.clone());
    let rho = random_rho(4, &mut ChaCha8Rng::seed_from_u64(5));
    for fault in Fault::ALL {
        match run_nlqc_with(&spec, dec, &rho, Some(fault)) {
            Err(Error::Locality { witness, .. }) => assert!(!witness.is_empty()),
            other => panic!("{fault:?}: expected a locality error, got {other:?}"),
        }
    }
}

#[test]
fn early_post_names_the_piece() {
    let (model, dec) = brickwork_case();
    let spec = PseudoBulkSpec::swap_default(ring8(), model.clone());
    let rho = random_rho(4, &mut ChaCha8Rng::seed_from_u64(6));
    let err = run_nlqc_with(&spec, dec, &rho, Some(Fault::EarlyPost)).unwrap_err();
    let Error::Locality { event, party, witness } = err else {
        panic!("wrong error");
    };
    assert_eq!(event, 2);
    assert_eq!(party, "Alice");
    assert!(witness.starts_with("U_N"), "{witness}");
}

#[test]
fn missing_piece_is_an_error() {
    let ring = ring8();
    let spec = PseudoBulkSpec::swap_default(ring, ModelSpec::empty_circuit());
    let mut dec = decompose_circuit(&ModelSpec::empty_circuit(), ring).unwrap();
    dec.pieces.retain(|p| p.half != Half::S);
    let rho = random_rho(4, &mut ChaCha8Rng::seed_from_u64(7));
    assert!(matches!(run_nlqc(&spec, &dec, &rho), Err(Error::Invalid(_))));
}

#[test]
fn encoder_outside_its_half_is_invalid() {
    let ring = ring8();
    let mut spec = PseudoBulkSpec::swap_default(ring, ModelSpec::empty_circuit());
    let (_, c1) = designated_sites(ring);
    spec.encoder_a = LocalMap::swap_in(c1, 2);
    assert!(spec.validate().is_err());
    let rho = random_rho(4, &mut ChaCha8Rng::seed_from_u64(8));
    assert!(pseudo_bulk_dynamics(&spec, &rho).is_err());
}

#[test]
fn input_dimension_is_checked() {
    let spec = PseudoBulkSpec::swap_default(ring8(), ModelSpec::empty_circuit());
    let rho = linalg::identity(8) / C64::new(8.0, 0.0);
    assert!(matches!(pseudo_bulk_dynamics(&spec, &rho), Err(Error::DimensionMismatch(_))));
}

#[test]
fn truncated_decomposition_within_certificate() {
    let ring = Ring::qubits(6).unwrap();
    let times: Vec<f64> = (1..=8).map(|k| k as f64 * 0.1).collect();
    let fit = nlqc::spread::lr_profile(&tfim(ring, 0.25, 0.25, 0.0), ring, &times, &[1, 2, 3]).unwrap();
    let model = tfim(ring, 0.25, 0.25, 0.3 * 2.0 * PI / 8.0);
    let dec = decompose_swap_model(&model, ring, true, Some(&fit)).unwrap();
    let spec = PseudoBulkSpec::swap_default(ring, model);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..4 {
        let rho = random_rho(4, &mut rng);
        let direct = pseudo_bulk_dynamics(&spec, &rho).unwrap();
        let run = run_nlqc(&spec, &dec, &rho).unwrap();
        let td = trace_distance(&direct, &run.output).unwrap();
        assert!(td <= dec.residual_bound, "{td} > {}", dec.residual_bound);
    }
}

#[test]
fn transcript_round_trips_through_json() {
    let ring = ring8();
    let spec = PseudoBulkSpec::swap_default(ring, ModelSpec::empty_circuit());
    let dec = decompose_circuit(&ModelSpec::empty_circuit(), ring).unwrap();
    let rho = random_rho(4, &mut ChaCha8Rng::seed_from_u64(10));
    let t = run_nlqc(&spec, &dec, &rho).unwrap().transcript;
    let back: Transcript = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
    assert_eq!(back, t);
    audit(&back).unwrap();
}

#[test]
fn rewind_is_plain_swap_without_dynamics() {
    let ring = Ring::qubits(6).unwrap();
    let (c0, c1) = designated_sites(ring);
    for (model, t) in [(tfim(ring, 1.0, 1.0, 0.0), 0.0), (tfim(ring, 0.0, 0.0, 0.0), 0.4)] {
        for site in [c0, c1] {
            let enc = time_rewind_encoder(&model, ring, t, site).unwrap();
            assert!(enc.defect < 1e-12, "{}", enc.defect);
            let u = &enc.map.channel.kraus()[0];
            // Identity on the rest of the half, SWAP on (input, site).
            let pos = enc.map.inputs.iter().position(|p| *p == Port::Site(site)).unwrap();
            let k = enc.map.inputs.len();
            let dims = vec![2; k];
            for col in 0..u.ncols() {
                let mut g = digits(col, &dims);
                g.swap(0, pos);
                let row = from_digits(&g, &dims);
                assert!((u[(row, col)] - C64::new(1.0, 0.0)).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn rewind_defect_within_light_cone_bound() {
    let ring = Ring::qubits(6).unwrap();
    let model = tfim(ring, 1.0, 1.0, 0.0);
    let times: Vec<f64> = (1..=4).map(|k| k as f64 * 0.1).collect();
    let fit = nlqc::spread::lr_profile(&model, ring, &times, &[1, 2, 3]).unwrap();
    let (c0, _) = designated_sites(ring);
    let enc = time_rewind_encoder(&model, ring, 0.2, c0).unwrap();
    assert_eq!(enc.half, Half::W);
    let q = quarter_regions(ring);
    let d_half = region_distance(ring, &Region::from_sites(ring, [c0]), &q.e).unwrap();
    let bound = fit.bound(d_half, 0.2);
    assert!(enc.defect > 0.0);
    assert!(enc.defect <= bound, "{} > {bound}", enc.defect);
}

#[test]
fn rewind_precondition() {
    let ring = Ring::qubits(6).unwrap();
    let model = tfim(ring, 1.0, 1.0, 0.0);
    assert!(matches!(time_rewind_encoder(&model, ring, 1.2, 5), Err(Error::Precondition(_))));
}
