//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use nlqc::approxcode::*;
use nlqc::decompose::*;
use nlqc::holocode::*;
use nlqc::lattice::*;
use nlqc::protocol::{audit, run_nlqc_with, Fault, PseudoBulkSpec};
use nlqc::qcore::linalg::{self, C64};
use nlqc::qcore::{entropy, CMat, StateOrDensity, StateVector};
use nlqc::spread::lr_profile;
use nlqc::stab::{random_clifford_circuit, StabilizerCode};
use nlqc::teleport::*;
use nlqc::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = std::result::Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Debug>(e: E) -> String {
    format!("{e:?}")
}

fn ring8() -> Ring {
    Ring::qubits(8).unwrap()
}

const QUARTER: f64 = 2.0 * PI / 8.0;

/// Criterion 1 also hands its model and decomposition to criterion 2.
fn exact_decomposition(shared: &mut Vec<(ModelSpec, DenseOperator, QuarterDecomposition)>) -> Outcome {
    let start = Instant::now();
    let spec = random_brickwork(ring8(), 1, 21);
    let u = evolve_model(&spec, ring8()).map_err(err)?;
    let dec = decompose_swap(&u, ring8(), false).map_err(err)?;
    let residual = verify_decomposition(&dec, &u, ring8(), 20, 7).map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    shared.push((spec, u, dec));
    check(
        residual <= 1e-9,
        format!("max residual {residual:.2e} over 20 product inputs (≤ 1e-9), {secs:.1} s"),
    )
}

use nlqc::qcore::DenseOperator;

fn circuit_equivalence(shared: &[(ModelSpec, DenseOperator, QuarterDecomposition)]) -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let owned;
        let (spec, swap) = if seed == 0 {
            (&shared[0].0, &shared[0].2)
        } else {
            let spec = random_brickwork(ring8(), 1, 100 + seed);
            let u = evolve_model(&spec, ring8()).map_err(err)?;
            owned = (spec, decompose_swap(&u, ring8(), false).map_err(err)?);
            (&owned.0, &owned.1)
        };
        let circ = decompose_circuit(spec, ring8()).map_err(err)?;
        let u_c = assemble_dense(&circ).map_err(err)?;
        worst = worst.max(channel_agreement(swap, &u_c, ring8()).map_err(err)?);
    }
    check(worst < 1e-8, format!("worst channel gap {worst:.2e} over 5 circuits (< 1e-8)"))
}

fn truncation_certificate() -> Outcome {
    let ring = Ring::qubits(6).map_err(err)?;
    let times: Vec<f64> = (1..=8).map(|k| k as f64 * 0.1).collect();
    let fit = lr_profile(&tfim(ring, 0.25, 0.25, 0.0), ring, &times, &[1, 2, 3]).map_err(err)?;
    let mut residuals = Vec::new();
    let mut ok = true;
    let mut detail = String::new();
    for frac in [0.3, 0.5] {
        let t = frac * QUARTER;
        let spec = tfim(ring, 0.25, 0.25, t);
        let dec = decompose_swap_model(&spec, ring, true, Some(&fit)).map_err(err)?;
        let u = evolve_model(&spec, ring).map_err(err)?;
        let r = verify_decomposition(&dec, &u, ring, 10, 1).map_err(err)?;
        let bound = 4.0 * fit.a * (-fit.b * (QUARTER - fit.v * t)).exp();
        ok &= r <= bound;
        detail += &format!("t={frac}·2π/8: {r:.2e} ≤ {bound:.2e}; ");
        residuals.push(r);
    }
    ok &= residuals[0] < residuals[1];
    check(ok, format!("{detail}increasing: {}", residuals[0] < residuals[1]))
}

/// Criterion 4; also counts clean runs for criterion 10.
fn toy_model(clean_runs: &mut usize) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures = Vec::new();
    let mut max_spread = 0.0f64;
    for k in [2, 3, 4] {
        let cfg = StackConfig::alternating(k, 32);
        for trial in 0..10 {
            let word = random_clifford_circuit(k, 40, &mut rng);
            let r = match run_toy_protocol(&cfg, &word, &ToyInputs::Choi, None) {
                Ok(r) => r,
                Err(e) => {
                    failures.push(format!("k={k} #{trial}: {e}"));
                    continue;
                }
            };
            if audit(&r.transcript).is_ok() {
                *clean_runs += 1;
            }
            for &(h, v, both) in &r.translation_spreads {
                max_spread = max_spread.max(h).max(v).max(both);
            }
            let ok = r.verdict.logical_match
                && r.transversal_action_ok
                && r.input_recoverable.iter().all(|&x| x)
                && r.output_recoverable.iter().all(|&x| x)
                && r.translation_spreads.iter().all(|&(h, v, b)| h < QUARTER && v < QUARTER && b < QUARTER);
            if !ok {
                failures.push(format!("k={k} #{trial}: {:?}", r.verdict.mismatches));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        failures.is_empty(),
        format!(
            "30 targets, max translation spread {max_spread:.3} < {QUARTER:.3}, {secs:.1} s{}",
            if failures.is_empty() { String::new() } else { format!("; failures {failures:?}") }
        ),
    )
}

fn entanglement_scaling() -> Outcome {
    let s: Vec<usize> = (1..=3)
        .map(|k| build_stack(&StackConfig::alternating(k, 32)).map(|st| st.cut_entropy()))
        .collect::<nlqc::Result<_>>()
        .map_err(err)?;
    let mut ok = s[0] > 0 && s[1] - s[0] == s[0] && s[2] - s[1] == s[0];
    let mut dense = Vec::new();
    for k in 1..=2 {
        let stack = build_stack(&StackConfig::alternating(k, 32)).map_err(err)?;
        let psi = stack.tableau().to_state_vector().map_err(err)?;
        let e = entropy(StateOrDensity::Pure(&psi), &stack.registers_in(Half::W)).map_err(err)?;
        ok &= (e - s[k - 1] as f64).abs() < 1e-8;
        dense.push(e);
    }
    check(ok, format!("tableau entropies {s:?}, dense {dense:.6?}"))
}

fn exact_code() -> Outcome {
    let (seed, x, z) = stabilizer_seed(&StabilizerCode::steane()).map_err(err)?;
    let v = build_isometry(&pauli_powers(&x, 2), seed.amplitudes(), None).map_err(err)?;
    let c = code_conditions(&v.matrix, &x, &z).map_err(err)?;
    check(
        c.isometry_defect <= 1e-10 && c.intertwining <= 1e-10 && c.projector_commutator <= 1e-10,
        format!("{c:?}"),
    )
}

fn scaling_laws() -> Outcome {
    let pts = eta_sweep(&StabilizerCode::steane(), &[1e-2, 1e-3, 1e-4], &[0, 1, 2, 3, 4]).map_err(err)?;
    let xs: Vec<f64> = pts.iter().map(|p| p.eta).collect();
    let defect: Vec<f64> = pts.iter().map(|p| p.defect).collect();
    let inter: Vec<f64> = pts.iter().map(|p| p.intertwining).collect();
    let s_def = loglog_slope(&xs, &defect).map_err(err)?;
    let s_int = loglog_slope(&xs, &inter).map_err(err)?;
    check(
        (s_def - 1.0).abs() <= 0.1 && (s_int - 0.5).abs() <= 0.15,
        format!("defect slope {s_def:.3} (1 ± 0.1), intertwining slope {s_int:.3} (0.5 ± 0.15)"),
    )
}

fn certificate_dominance() -> Outcome {
    let base = EndToEndConfig::default();
    let fit = end_to_end_fit(&base).map_err(err)?;
    let dec = end_to_end_decomposition(&base, &fit).map_err(err)?;
    let mut ok = true;
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let cfg = EndToEndConfig { seed, ..base.clone() };
        let r = end_to_end_with(&cfg, &dec).map_err(err)?;
        ok &= r.measured_lower <= r.certificate.total;
        worst = worst.max(r.measured_lower / r.certificate.total);
    }
    check(ok, format!("5 seeds, largest measured/certificate ratio {worst:.3}"))
}

fn teleportation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let bell = PortResource::bell(1).map_err(err)?;
    let mut worst_normal = 0.0f64;
    for seed in 0..20 {
        let psi = StateVector::random(vec![2, 2], &mut rng);
        let t = teleport_normal(&psi, &bell, seed).map_err(err)?;
        worst_normal = worst_normal.max((1.0 - t.fidelity).abs());
    }
    let mut completeness = 0.0f64;
    let mut fid = Vec::new();
    let mut agreement = 0.0f64;
    for n in [1, 2, 4] {
        let r = PortResource::new(n, 1).map_err(err)?;
        let pgm = r.pgm().map_err(err)?;
        let dim = 1 << (n + 1);
        let mut sum = CMat::zeros(dim, dim);
        for x in 0..n {
            sum += pgm.element(x);
        }
        completeness = completeness.max(linalg::op_norm(&(sum - linalg::identity(dim))));
        let choi = pbt_average_fidelity_choi(&r).map_err(err)?;
        let traj = pbt_average_fidelity_trajectories(&r).map_err(err)?;
        agreement = agreement.max((choi - traj).abs());
        fid.push(choi);
    }
    let increasing = fid.windows(2).all(|w| w[1] > w[0]);
    let one = StateVector::new(vec![2], vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).map_err(err)?;
    let mut mi = 0.0f64;
    for n in [1, 2] {
        mi = mi.max(run_appendix_d(&one, &one, n, false, 1).map_err(err)?.mutual_information.abs());
    }
    let padded = run_appendix_d(&one, &one, 2, true, 1).map_err(err)?;
    check(
        worst_normal <= 1e-12
            && completeness <= 1e-10
            && increasing
            && agreement <= 1e-6
            && mi <= 1e-9
            && padded.x0_distance <= 1e-9,
        format!(
            "normal 1−F {worst_normal:.1e}; completeness {completeness:.1e}; F_avg {fid:.4?}; \
             route gap {agreement:.1e}; I(V'0:V'1) {mi:.1e}; X'0 distance {:.1e}",
            padded.x0_distance
        ),
    )
}

fn harness_soundness(clean_runs: usize) -> Outcome {
    let mut named = Vec::new();
    let word = [nlqc::stab::CliffordGate::H(0), nlqc::stab::CliffordGate::Cnot(0, 1)];
    for f in Fault::ALL {
        match run_toy_protocol(&StackConfig::default(), &word, &ToyInputs::Choi, Some(f)) {
            Err(Error::Locality { witness, .. }) if !witness.is_empty() => named.push(format!("toy {f:?}")),
            other => return Err(format!("toy {f:?} not caught: {:?}", other.map(|r| r.verdict))),
        }
    }
    let spec = random_brickwork(ring8(), 1, 3);
    let u = evolve_model(&spec, ring8()).map_err(err)?;
    let dec = decompose_swap(&u, ring8(), false).map_err(err)?;
    let pb = PseudoBulkSpec::swap_default(ring8(), spec);
    let rho = CMat::identity(4, 4) * C64::new(0.25, 0.0);
    for f in Fault::ALL {
        match run_nlqc_with(&pb, &dec, &rho, Some(f)) {
            Err(Error::Locality { witness, .. }) if !witness.is_empty() => named.push(format!("dense {f:?}")),
            other => return Err(format!("dense {f:?} not caught: {:?}", other.map(|r| r.output))),
        }
    }
    let clean_dense = run_nlqc_with(&pb, &dec, &rho, None).is_ok();
    check(
        named.len() == 6 && clean_runs == 30 && clean_dense,
        format!("faults caught {named:?}; clean toy runs passing audit {clean_runs}/30"),
    )
}

#[test]
fn acceptance() {
    let mut shared = Vec::new();
    let mut clean = 0;
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    results.push((1, exact_decomposition(&mut shared)));
    results.push((
        2,
        if shared.is_empty() {
            Err("criterion 1 produced no decomposition".into())
        } else {
            circuit_equivalence(&shared)
        },
    ));
    results.push((3, truncation_certificate()));
    results.push((4, toy_model(&mut clean)));
    results.push((5, entanglement_scaling()));
    results.push((6, exact_code()));
    results.push((7, scaling_laws()));
    results.push((8, certificate_dominance()));
    results.push((9, teleportation()));
    results.push((10, harness_soundness(clean)));
    let mut failed = Vec::new();
    for (k, r) in &results {
        match r {
            Ok(d) => println!("criterion {k:>2}: PASS  {d}"),
            Err(d) => {
                println!("criterion {k:>2}: FAIL  {d}");
                failed.push(*k);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
