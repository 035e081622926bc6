//! Subcommand handlers. Each returns a result record plus the list of
//! failed checks; an empty list means the run verified.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nlqc::approxcode::{self, EndToEndConfig};
use nlqc::decompose::{decompose_swap, decompose_swap_model, verify_decomposition};
use nlqc::holocode::{run_toy_protocol, HoloCodeSpec, StackConfig, ToyInputs};
use nlqc::lattice::{evolve_model, random_brickwork, tfim, ModelSpec, Region, Ring};
use nlqc::protocol::{audit, pseudo_bulk_dynamics, run_nlqc_with, trace_distance, PseudoBulkSpec};
use nlqc::qcore::linalg::{self, C64};
use nlqc::qcore::{CMat, DenseOperator, StateVector};
use nlqc::spread::{self, Candidate, DictionaryEntry, ModelCorrelator, SimulationCheck};
use nlqc::stab::random_clifford_circuit;
use nlqc::teleport::{self, PortResource};
use nlqc::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::*;

const QUARTER: f64 = 2.0 * PI / 8.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub event: usize,
    pub party: String,
    pub witness: String,
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub result: Value,
    pub failures: Vec<String>,
    pub witness: Option<Witness>,
}

impl Outcome {
    fn new(result: Value, failures: Vec<String>) -> Self {
        Outcome { result, failures, witness: None }
    }
}

/// Errors that abort a run without a verification verdict.
#[derive(Debug)]
pub struct UsageError(pub String);

impl From<Error> for UsageError {
    fn from(e: Error) -> Self {
        UsageError(e.to_string())
    }
}

type Run = Result<Outcome, UsageError>;

/// Verification errors become a failed outcome; everything else is a usage error.
fn verdict(e: Error) -> Run {
    match e {
        Error::Locality { event, party, witness } => Ok(Outcome {
            result: json!({ "error": "locality" }),
            failures: vec![format!("locality violation at event {event} ({party}): {witness}")],
            witness: Some(Witness { event, party, witness }),
        }),
        e @ (Error::SupportViolation { .. } | Error::Geometry { .. } | Error::NotLogical(_)) => {
            Ok(Outcome::new(json!({ "error": e.to_string() }), vec![e.to_string()]))
        }
        e => Err(e.into()),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result records serialize")
}

fn model_spec(model: &ModelConfig, ring: Ring) -> ModelSpec {
    match *model {
        ModelConfig::Brickwork { depth, seed, .. } => random_brickwork(ring, depth, seed.unwrap_or(0)),
        ModelConfig::Tfim { j, h, time, .. } => tfim(ring, j, h, time),
    }
}

pub fn execute(cfg: &RunConfig) -> Run {
    let out = match cfg.subcommand {
        SubcommandName::Spread => spread_cmd(cfg),
        SubcommandName::Decompose => decompose_cmd(cfg),
        SubcommandName::Protocol => protocol_cmd(cfg),
        SubcommandName::Holocode => holocode_cmd(cfg),
        SubcommandName::Teleport => teleport_cmd(cfg),
        SubcommandName::Certify => certify_cmd(cfg),
        SubcommandName::CheckSim => check_sim_cmd(cfg),
    };
    out.or_else(verdict)
}

fn spread_cmd(cfg: &RunConfig) -> Result<Outcome, Error> {
    let model = cfg.model.as_ref().expect("effective config has a model");
    let grid = cfg.spread.clone().unwrap_or_default();
    let ring = Ring::qubits(model.n_sites())?;
    match model {
        ModelConfig::Brickwork { depth, .. } => {
            let u = evolve_model(&model_spec(model, ring), ring)?;
            let s = spread::exact_spread(&u, ring)?;
            // A depth-D brickwork moves information at most D sites.
            let cone = *depth as f64 * ring.spacing();
            let mut failures = Vec::new();
            if s > cone + cfg.tolerances.residual {
                failures.push(format!("spread {s} exceeds the circuit light cone {cone}"));
            }
            Ok(Outcome::new(json!({ "kind": "exact", "spread": s, "light_cone": cone, "quarter": QUARTER }), failures))
        }
        ModelConfig::Tfim { j, h, .. } => {
            let fit = spread::lr_profile(&tfim(ring, *j, *h, 0.0), ring, &grid.times, &grid.distances)?;
            let mut failures = Vec::new();
            if fit.residual > cfg.tolerances.residual {
                failures.push(format!("fit leaves samples above the bound: residual {}", fit.residual));
            }
            Ok(Outcome::new(json!({ "kind": "lieb_robinson", "fit": to_value(&fit) }), failures))
        }
    }
}

fn decompose_cmd(cfg: &RunConfig) -> Result<Outcome, Error> {
    let model = cfg.model.as_ref().expect("effective config has a model");
    let sec = cfg.decompose.clone().unwrap_or_default();
    let ring = Ring::qubits(model.n_sites())?;
    let spec = model_spec(model, ring);
    let u = evolve_model(&spec, ring)?;
    let (mut dec, fit) = match model {
        ModelConfig::Brickwork { .. } => (decompose_swap(&u, ring, sec.truncate)?, None),
        ModelConfig::Tfim { j, h, .. } => {
            let fit = spread::lr_profile(&tfim(ring, *j, *h, 0.0), ring, &sec.lightcone.times, &sec.lightcone.distances)?;
            (decompose_swap_model(&spec, ring, sec.truncate, Some(&fit))?, Some(fit))
        }
    };
    let measured = verify_decomposition(&dec, &u, ring, sec.inputs, cfg.seed)?;
    dec.measured_residual = Some(measured);
    let allowed = if dec.truncated { dec.residual_bound.max(cfg.tolerances.residual) } else { cfg.tolerances.residual };
    let mut failures = Vec::new();
    if !(measured <= allowed) {
        failures.push(format!("measured residual {measured:e} exceeds the allowed {allowed:e}"));
    }
    Ok(Outcome::new(
        json!({
            "manifest": to_value(&dec.manifest()),
            "measured_residual": measured,
            "allowed_residual": allowed,
            "inputs": sec.inputs,
            "fit": fit.map(|f| to_value(&f)),
        }),
        failures,
    ))
}

fn protocol_cmd(cfg: &RunConfig) -> Result<Outcome, Error> {
    let model = cfg.model.as_ref().expect("effective config has a model");
    let sec = cfg.protocol.clone().unwrap_or_default();
    let ring = Ring::qubits(model.n_sites())?;
    let spec = model_spec(model, ring);
    let u = evolve_model(&spec, ring)?;
    let dec = decompose_swap(&u, ring, false)?;
    let pb = PseudoBulkSpec::swap_default(ring, spec);
    let mut gaps = Vec::new();
    let mut exchanges = 0;
    let mut failures = Vec::new();
    for k in 0..sec.inputs as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(k));
        let rho = StateVector::random(vec![pb.dim_a, pb.dim_b], &mut rng).density().into_matrix();
        let run = run_nlqc_with(&pb, &dec, &rho, sec.fault)?;
        if let Err(e) = audit(&run.transcript) {
            failures.push(format!("input {k}: transcript audit failed: {e}"));
        }
        exchanges = run.transcript.exchange_count();
        let target = pseudo_bulk_dynamics(&pb, &rho)?;
        let gap = trace_distance(&run.output, &target)?;
        if gap > cfg.tolerances.channel {
            failures.push(format!("input {k}: trace distance {gap:e} to the pseudo-bulk output"));
        }
        gaps.push(gap);
    }
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    Ok(Outcome::new(
        json!({ "inputs": sec.inputs, "trace_distances": gaps, "worst": worst, "exchanges": exchanges }),
        failures,
    ))
}

fn holocode_cmd(cfg: &RunConfig) -> Result<Outcome, Error> {
    let sec = cfg.holocode.clone().unwrap_or_default();
    let mut stack = StackConfig::alternating(sec.blocks, sec.n_sites);
    for b in &mut stack.blocks {
        b.code = HoloCodeSpec { layers: sec.layers, boundary: None };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for trial in 0..sec.targets {
        let word = random_clifford_circuit(sec.blocks, sec.target_len, &mut rng);
        let r = run_toy_protocol(&stack, &word, &ToyInputs::Choi, sec.fault)?;
        let spreads_ok = r.translation_spreads.iter().all(|&(h, v, b)| h < QUARTER && v < QUARTER && b < QUARTER);
        let checks = [
            (r.verdict.logical_match, "logical channel mismatch"),
            (r.transversal_action_ok, "transversal action differs from the target"),
            (r.input_recoverable.iter().all(|&x| x), "input logical not recoverable on its half"),
            (r.output_recoverable.iter().all(|&x| x), "output logical not recoverable on its half"),
            (spreads_ok, "translation spread reaches 2π/8"),
            (audit(&r.transcript).is_ok(), "transcript audit failed"),
        ];
        for (ok, what) in checks {
            if !ok {
                failures.push(format!("target {trial}: {what}"));
            }
        }
        runs.push(json!({
            "target_gates": word.len(),
            "verdict": to_value(&r.verdict),
            "translation_spreads": r.translation_spreads,
            "dynamics_spread": r.dynamics_spread,
            "piece_gate_counts": r.piece_gate_counts,
            "exchanges": r.transcript.exchange_count(),
        }));
    }
    Ok(Outcome::new(json!({ "blocks": sec.blocks, "runs": runs }), failures))
}

fn teleport_cmd(cfg: &RunConfig) -> Result<Outcome, Error> {
    let sec = cfg.teleport.clone().unwrap_or_default();
    let tol = &cfg.tolerances;
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let psi = StateVector::random(vec![2, 2], &mut rng);
    let normal = teleport::teleport_normal(&psi, &PortResource::bell(1)?, cfg.seed)?;
    if (1.0 - normal.fidelity).abs() > tol.fidelity_gap {
        failures.push(format!("normal teleportation fidelity {}", normal.fidelity));
    }

    let mut pbt = Vec::new();
    let mut last: Option<(usize, f64)> = None;
    let mut ports = sec.ports.clone();
    ports.sort_unstable();
    ports.dedup();
    for &n in &ports {
        let r = PortResource::new(n, 1)?;
        let pgm = r.pgm()?;
        let dim = 1 << (n + 1);
        let mut sum = CMat::zeros(dim, dim);
        for x in 0..n {
            sum += pgm.element(x);
        }
        let completeness = linalg::op_norm(&(sum - linalg::identity(dim)));
        let choi = teleport::pbt_average_fidelity_choi(&r)?;
        let traj = teleport::pbt_average_fidelity_trajectories(&r)?;
        if completeness > tol.completeness {
            failures.push(format!("N={n}: POVM completeness defect {completeness:e}"));
        }
        if (choi - traj).abs() > tol.fidelity_gap {
            failures.push(format!("N={n}: fidelity routes differ by {:e}", (choi - traj).abs()));
        }
        if let Some((m, f)) = last {
            if choi <= f {
                failures.push(format!("fidelity not increasing from N={m} to N={n}"));
            }
        }
        last = Some((n, choi));
        pbt.push(json!({ "ports": n, "completeness_defect": completeness, "fidelity_choi": choi, "fidelity_trajectories": traj }));
    }

    let mut cascades = Vec::new();
    for &n in &sec.cascade_ports {
        let a = StateVector::random(vec![2], &mut rng);
        let b = StateVector::random(vec![2], &mut rng);
        let rep = teleport::run_appendix_d(&a, &b, n, sec.otp, cfg.seed)?;
        if rep.mutual_information.abs() > tol.mutual_information {
            failures.push(format!("cascade N={n}: resource mutual information {:e}", rep.mutual_information));
        }
        if sec.otp && rep.x0_distance > tol.mutual_information {
            failures.push(format!("cascade N={n}: padded record distance {:e}", rep.x0_distance));
        }
        cascades.push(to_value(&rep));
    }
    Ok(Outcome::new(
        json!({
            "normal": { "outcome": to_value(&normal.outcome), "fidelity": normal.fidelity },
            "pbt": pbt,
            "cascades": cascades,
        }),
        failures,
    ))
}

fn certify_cmd(cfg: &RunConfig) -> Result<Outcome, Error> {
    let sec = cfg.certify.clone().unwrap_or_default();
    let mut result = serde_json::Map::new();
    let mut failures = Vec::new();
    if let Some(c) = &sec.compose {
        let cert = approxcode::compose_certificate(c.eps_enc, c.eps_rec, c.eps_dyn, c.eps_spread, c.physical)?;
        result.insert("certificate".into(), to_value(&cert));
    }
    if let Some(e) = &sec.end_to_end {
        let base = EndToEndConfig {
            n_sites: e.n_sites,
            j: e.j,
            h: e.h,
            frac: e.frac,
            kappa: e.kappa,
            zeta: e.zeta,
            seed: cfg.seed,
        };
        let fit = approxcode::end_to_end_fit(&base)?;
        let dec = approxcode::end_to_end_decomposition(&base, &fit)?;
        let mut runs = Vec::new();
        for k in 0..e.runs as u64 {
            let c = EndToEndConfig { seed: cfg.seed.wrapping_add(k), ..base.clone() };
            let r = approxcode::end_to_end_with(&c, &dec)?;
            if !r.dominated {
                failures.push(format!(
                    "seed {}: measured {:e} exceeds certificate {:e}",
                    c.seed, r.measured_lower, r.certificate.total
                ));
            }
            runs.push(to_value(&r));
        }
        result.insert("fit".into(), to_value(&fit));
        result.insert("end_to_end".into(), Value::Array(runs));
    }
    Ok(Outcome::new(Value::Object(result), failures))
}

fn check_sim_cmd(cfg: &RunConfig) -> Result<Outcome, Error> {
    let sec = cfg.check_sim.clone().unwrap_or_default();
    let f = sec.fine_factor;
    let coarse = Ring::qubits(sec.n_sites)?;
    let fine = Ring::qubits(sec.n_sites * f)?;
    if let Some(&p) = sec.probes.iter().find(|&&p| p >= sec.n_sites) {
        return Err(Error::Invalid(format!("probe site {p} is off the {}-site ring", sec.n_sites)));
    }
    let dictionary: Vec<DictionaryEntry> = sec
        .probes
        .iter()
        .map(|&s| DictionaryEntry {
            label: format!("Z{s}"),
            operator: DenseOperator::pauli(s, 3),
            declared_support: Region::from_sites(coarse, [s]),
        })
        .collect();
    let candidate = Candidate {
        ring: coarse,
        model: tfim(coarse, sec.j, sec.h, 0.0),
        state: StateVector::zero(coarse.dims()),
        dictionary,
    };
    // Fine reference: block-averaged Z over `f` sites, evolved `f` times faster.
    let ModelSpec::LocalHamiltonian { terms, .. } = tfim(fine, f as f64 * sec.j, f as f64 * sec.h, 0.0) else {
        unreachable!("tfim is a Hamiltonian model")
    };
    let mut operators = BTreeMap::new();
    for &s in &sec.probes {
        let support: Vec<usize> = (f * s..f * (s + 1)).collect();
        let mut m = CMat::zeros(1 << f, 1 << f);
        for i in 0..f {
            let mut z = CMat::identity(1, 1);
            for k in 0..f {
                z = linalg::kron(&z, &if k == i { linalg::pauli(3) } else { linalg::identity(2) });
            }
            m += z;
        }
        let m = m * C64::new(1.0 / f as f64, 0.0);
        operators.insert(format!("Z{s}"), DenseOperator::new(support, vec![2; f], m)?);
    }
    let reference = ModelCorrelator { ring: fine, terms, state: StateVector::zero(fine.dims()), operators };
    let check = SimulationCheck {
        delta: sec.delta,
        horizon: sec.horizon,
        times: sec.times.clone(),
        max_len: sec.max_len,
        lr_distances: sec.lr_distances.clone(),
    };
    let rep = spread::check_simulation_conditions(&candidate, &reference, &check)?;
    let mut failures = rep.support_failures.clone();
    if rep.delta_measured > rep.delta_allowed {
        failures.push(format!("correlation error {:e} exceeds {:e}", rep.delta_measured, rep.delta_allowed));
    }
    if !rep.passed && failures.is_empty() {
        failures.push("simulation conditions not met".into());
    }
    Ok(Outcome::new(to_value(&rep), failures))
}
