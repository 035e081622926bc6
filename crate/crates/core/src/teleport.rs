//! Teleportation primitives: ordinary Bell-measurement teleportation,
//! port-based teleportation with the pretty-good measurement, and the
//! three-party cascade that moves all entanglement into classical records.
//!
//! Registers are qudits of dimension `d = 2^{n_A}`. A [`PortResource`] holds
//! `N` maximally entangled pairs ordered `A'_1 … A'_N, B'_1 … B'_N`.

use std::sync::OnceLock;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::linalg::{self, matmul, ONE, ZERO};
use crate::qcore::{partial_trace, von_neumann_bits, CMat, DenseOperator, StateVector, C64};

/// Largest register count (in qubits) the state-vector routes will touch.
pub const MAX_QUBITS: usize = 20;
/// Default cap on ports per stage in the cascade.
pub const CASCADE_MAX_PORTS: usize = 3;
/// Allowed deviation of `Σ Π_x` from the identity.
pub const COMPLETENESS_TOL: f64 = 1e-9;

/// `N` maximally entangled pairs of `n_a`-qubit registers.
#[derive(Debug)]
pub struct PortResource {
    n_ports: usize,
    n_a: usize,
    state: StateVector,
    pgm: OnceLock<Pgm>,
}

/// Pretty-good measurement for port-based teleportation.
///
/// `Π_x = W_x W_x† + Δ/N` acting on `(A, A'_1 … A'_N)`, where `W_x W_x†` is
/// `ρ^{-1/2} σ_x ρ^{-1/2}` and `Δ = 1 − Σ_x W_x W_x†`.
#[derive(Debug, Clone)]
pub struct Pgm {
    pub factors: Vec<CMat>,
    pub delta: CMat,
    pub completeness_defect: f64,
    pub delta_min_eigenvalue: f64,
}

impl Pgm {
    pub fn n_outcomes(&self) -> usize {
        self.factors.len()
    }

    /// Dense POVM element for outcome `x`.
    pub fn element(&self, x: usize) -> CMat {
        let w = &self.factors[x];
        matmul(w, &w.adjoint()) + &self.delta * C64::new(1.0 / self.factors.len() as f64, 0.0)
    }
}

impl PortResource {
    pub fn new(n_ports: usize, n_a: usize) -> Result<Self> {
        if n_ports == 0 || n_a == 0 {
            return Err(Error::Invalid("port resource needs N ≥ 1 and n_A ≥ 1".into()));
        }
        let qubits = 2 * n_ports * n_a + n_a;
        if qubits > MAX_QUBITS {
            return Err(Error::CapExceeded {
                dim: qubits,
                cap: MAX_QUBITS,
            });
        }
        let d = 1usize << n_a;
        let half = d.pow(n_ports as u32);
        // Pair x links digit x of the A' block to digit x of the B' block, so
        // the state is Σ_i |i⟩_{A'}|i⟩_{B'} over multi-indices i.
        let mut amps = vec![ZERO; half * half];
        let amp = C64::new(1.0 / (half as f64).sqrt(), 0.0);
        for i in 0..half {
            amps[i * half + i] = amp;
        }
        let state = StateVector::new(vec![d; 2 * n_ports], amps)?;
        Ok(PortResource {
            n_ports,
            n_a,
            state,
            pgm: OnceLock::new(),
        })
    }

    /// A single Bell pair, the resource for ordinary teleportation.
    pub fn bell(n_a: usize) -> Result<Self> {
        Self::new(1, n_a)
    }

    pub fn n_ports(&self) -> usize {
        self.n_ports
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn local_dim(&self) -> usize {
        1 << self.n_a
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    /// The PGM, built on first use.
    pub fn pgm(&self) -> Result<&Pgm> {
        if let Some(p) = self.pgm.get() {
            return Ok(p);
        }
        let p = build_pgm(self.local_dim(), self.n_ports)?;
        Ok(self.pgm.get_or_init(|| p))
    }
}

fn build_pgm(d: usize, n: usize) -> Result<Pgm> {
    let dn = d.pow(n as u32);
    let dim = d * dn;
    let others = dn / d;
    // Columns of V_x are Σ_c |a = c, a'_x = c, rest = o⟩ for each assignment o
    // of the remaining ports, so σ_x = V_x V_x† / d^N.
    let port_stride = |x: usize| d.pow((n - 1 - x) as u32);
    let column_indices = |x: usize, o: usize| -> Vec<usize> {
        let s = port_stride(x);
        // Insert a zero digit for port x into the N−1 digit index o.
        let hi = o / s;
        let lo = o % s;
        let base = hi * s * d + lo;
        (0..d).map(|c| c * dn + base + c * s).collect()
    };
    let mut rho = CMat::zeros(dim, dim);
    let scale = 1.0 / dn as f64;
    for x in 0..n {
        for o in 0..others {
            let idx = column_indices(x, o);
            for &i in &idx {
                for &j in &idx {
                    rho[(i, j)] += C64::new(scale, 0.0);
                }
            }
        }
    }
    let inv_sqrt = linalg::hermitian_fn(&rho, |l| {
        if l > 1e-12 {
            C64::new(1.0 / l.sqrt(), 0.0)
        } else {
            ZERO
        }
    });
    let norm = C64::new(scale.sqrt(), 0.0);
    let mut factors = Vec::with_capacity(n);
    let mut sum = CMat::zeros(dim, dim);
    for x in 0..n {
        let mut w = CMat::zeros(dim, others);
        for o in 0..others {
            for j in column_indices(x, o) {
                for r in 0..dim {
                    w[(r, o)] += inv_sqrt[(r, j)] * norm;
                }
            }
        }
        sum += matmul(&w, &w.adjoint());
        factors.push(w);
    }
    let delta = linalg::identity(dim) - &sum;
    let delta_min_eigenvalue = linalg::hermitian_eigenvalues(&delta)[0];
    let pgm = Pgm {
        completeness_defect: 0.0,
        factors,
        delta,
        delta_min_eigenvalue,
    };
    let mut total = CMat::zeros(dim, dim);
    for x in 0..n {
        total += pgm.element(x);
    }
    let completeness_defect = linalg::op_norm(&(total - linalg::identity(dim)));
    if completeness_defect > COMPLETENESS_TOL || delta_min_eigenvalue < -COMPLETENESS_TOL {
        return Err(Error::Incomplete {
            defect: completeness_defect.max(-delta_min_eigenvalue),
        });
    }
    Ok(Pgm {
        completeness_defect,
        ..pgm
    })
}

/// Measured label of a teleportation run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Pauli(String),
    Port(usize),
}

/// Result of one teleportation.
#[derive(Debug, Clone)]
pub struct TeleportOutcome {
    pub outcome: Outcome,
    pub probability: f64,
    /// Receiver's register followed by the reference, before any correction.
    pub state: CMat,
    /// Fidelity with the input: after the Pauli correction for ordinary
    /// teleportation, as received for port-based teleportation.
    pub fidelity: f64,
}

/// `n`-qubit Pauli labels in index order: digit `k` of qubit `q` is I, X, Y, Z.
pub fn pauli_label(index: usize, n_a: usize) -> String {
    (0..n_a)
        .map(|q| ['I', 'X', 'Y', 'Z'][(index >> (2 * (n_a - 1 - q))) & 3])
        .collect()
}

/// Matrix of a Pauli label such as `"XZ"`.
pub fn pauli_matrix(label: &str) -> Result<CMat> {
    let digits = label
        .chars()
        .map(|c| match c {
            'I' => Ok(0),
            'X' => Ok(1),
            'Y' => Ok(2),
            'Z' => Ok(3),
            _ => Err(Error::Invalid(format!("bad pauli label '{label}'"))),
        })
        .collect::<Result<Vec<usize>>>()?;
    Ok(linalg::pauli_string(&digits))
}

fn input_split(state: &StateVector, d: usize) -> Result<usize> {
    let dims = state.dims();
    if dims.first() != Some(&d) {
        return Err(Error::DimensionMismatch(format!(
            "input register has dims {dims:?}, expected leading factor {d}"
        )));
    }
    Ok(dims[1..].iter().product())
}

/// Fidelity `⟨ψ|ρ|ψ⟩` of a density with a pure target.
pub fn pure_fidelity(rho: &CMat, psi: &[C64]) -> f64 {
    let v = linalg::to_dvector(psi);
    (v.adjoint() * rho * &v)[(0, 0)].re.clamp(0.0, 1.0)
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &p) in probs.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Bell-measurement teleportation of factor 0 of `state`.
///
/// The Bell basis is `(P ⊗ 1)|Φ⟩` on `(A, A')`; outcome `P` leaves `P|ψ⟩` on
/// the receiver's register and the reference.
pub fn teleport_normal(state: &StateVector, resource: &PortResource, seed: u64) -> Result<TeleportOutcome> {
    if resource.n_ports != 1 {
        return Err(Error::DimensionMismatch(format!(
            "ordinary teleportation uses one pair, resource has {}",
            resource.n_ports
        )));
    }
    let d = resource.local_dim();
    let r = input_split(state, d)?;
    let psi = state.amplitudes();
    let omega = resource.state.amplitudes();
    let n_labels = d * d;
    let mut branches = Vec::with_capacity(n_labels);
    for k in 0..n_labels {
        let label = pauli_label(k, resource.n_a);
        let p = pauli_matrix(&label)?;
        // Bell vector b[a, a'] = P[a, a'] / √d.
        let inv = 1.0 / (d as f64).sqrt();
        let mut out = vec![ZERO; d * r];
        for a in 0..d {
            for ap in 0..d {
                let b = p[(a, ap)] * inv;
                if b == ZERO {
                    continue;
                }
                for bp in 0..d {
                    let w = omega[ap * d + bp];
                    if w == ZERO {
                        continue;
                    }
                    for ri in 0..r {
                        out[bp * r + ri] += b.conj() * psi[a * r + ri] * w;
                    }
                }
            }
        }
        branches.push((label, out));
    }
    let probs: Vec<f64> = branches.iter().map(|(_, v)| linalg::vec_norm(v).powi(2)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = sample_index(&probs, &mut rng);
    let (label, out) = branches.swap_remove(k);
    let norm = probs[k].sqrt();
    let out: Vec<C64> = out.into_iter().map(|a| a / norm).collect();
    let v = linalg::to_dvector(&out);
    let rho = &v * v.adjoint();
    let corr = linalg::kron(&pauli_matrix(&label)?.adjoint(), &linalg::identity(r));
    let corrected = matmul(&corr, &v_as_col(&out));
    let fid = linalg::inner(psi, corrected.as_slice()).norm_sqr();
    Ok(TeleportOutcome {
        outcome: Outcome::Pauli(label),
        probability: probs[k],
        state: rho,
        fidelity: fid.clamp(0.0, 1.0),
    })
}

fn v_as_col(v: &[C64]) -> CMat {
    CMat::from_column_slice(v.len(), 1, v)
}

/// Unnormalized receiver states `(B'_1 … B'_N, R)` for every outcome, from
/// the explicit joint state of input and resource.
fn joint_branches(state: &StateVector, resource: &PortResource) -> Result<Vec<CMat>> {
    let d = resource.local_dim();
    let r = input_split(state, d)?;
    let n = resource.n_ports;
    let half = d.pow(n as u32);
    if (2 * half * d * r) > (1 << MAX_QUBITS) {
        return Err(Error::CapExceeded {
            dim: half * half * d * r,
            cap: 1 << MAX_QUBITS,
        });
    }
    let pgm = resource.pgm()?;
    let psi = state.amplitudes();
    let omega = resource.state.amplitudes();
    // Rows (a, a'), columns (b', ρ-reference).
    let m = CMat::from_fn(d * half, half * r, |row, col| {
        let (a, ap) = (row / half, row % half);
        let (bp, ri) = (col / r, col % r);
        psi[a * r + ri] * omega[ap * half + bp]
    });
    let delta_part = matmul(&m.adjoint(), &matmul(&pgm.delta, &m)) * C64::new(1.0 / n as f64, 0.0);
    Ok(pgm
        .factors
        .iter()
        .map(|w| {
            let y = matmul(&w.adjoint(), &m);
            (matmul(&y.adjoint(), &y) + &delta_part).transpose()
        })
        .collect())
}

fn port_marginal(joint: &CMat, d: usize, n: usize, r: usize, x: usize) -> Result<CMat> {
    let mut dims = vec![d; n];
    let mut support: Vec<usize> = (0..n).collect();
    if r > 1 {
        dims.push(r);
        support.push(n);
    }
    let op = DenseOperator::new(support, dims, joint.clone())?;
    let traced: Vec<usize> = (0..n).filter(|&y| y != x).collect();
    Ok(partial_trace(&op, &traced)?.into_matrix())
}

/// Port-based teleportation of factor 0 of `state` using the PGM.
///
/// Returns the measured port and the state of that port with the reference.
pub fn run_pbt(state: &StateVector, resource: &PortResource, seed: u64) -> Result<TeleportOutcome> {
    let d = resource.local_dim();
    let r = input_split(state, d)?;
    let n = resource.n_ports;
    let branches = joint_branches(state, resource)?;
    let probs: Vec<f64> = branches.iter().map(|b| b.trace().re).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = sample_index(&probs, &mut rng);
    let rho = port_marginal(&branches[x], d, n, r, x)? * C64::new(1.0 / probs[x], 0.0);
    let fidelity = pure_fidelity(&rho, state.amplitudes());
    Ok(TeleportOutcome {
        outcome: Outcome::Port(x),
        probability: probs[x],
        state: rho,
        fidelity,
    })
}

/// Unnormalized joint receiver states for a density input without reference,
/// via `tr_{AA'}[Π_x (ρ ⊗ Φ^{⊗N})] = (tr_A[Π_x (ρ ⊗ 1)])^T / d^N`.
fn density_branches(rho: &CMat, resource: &PortResource) -> Result<Vec<CMat>> {
    let d = resource.local_dim();
    if rho.nrows() != d || rho.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "input density is {}x{}, ports carry dimension {d}",
            rho.nrows(),
            rho.ncols()
        )));
    }
    let pgm = resource.pgm()?;
    let half = d.pow(resource.n_ports as u32);
    let scale = C64::new(1.0 / half as f64, 0.0);
    Ok((0..pgm.n_outcomes())
        .map(|x| {
            let pi = pgm.element(x);
            let k = CMat::from_fn(half, half, |i, j| {
                let mut s = ZERO;
                for a in 0..d {
                    for b in 0..d {
                        s += pi[(a * half + i, b * half + j)] * rho[(b, a)];
                    }
                }
                s
            });
            k.transpose() * scale
        })
        .collect())
}

/// Average fidelity from the Choi state: teleport half of `|Φ⟩_{AR}`, sum the
/// branches and use `F_avg = (d F_e + 1)/(d + 1)`.
pub fn pbt_average_fidelity_choi(resource: &PortResource) -> Result<f64> {
    let d = resource.local_dim();
    let n = resource.n_ports;
    let mut amps = vec![ZERO; d * d];
    for i in 0..d {
        amps[i * d + i] = C64::new(1.0 / (d as f64).sqrt(), 0.0);
    }
    let phi = StateVector::new(vec![d, d], amps.clone())?;
    let mut choi = CMat::zeros(d * d, d * d);
    for (x, b) in joint_branches(&phi, resource)?.iter().enumerate() {
        choi += port_marginal(b, d, n, d, x)?;
    }
    let fe = pure_fidelity(&choi, &amps);
    Ok((d as f64 * fe + 1.0) / (d as f64 + 1.0))
}

/// The six single-qubit Pauli eigenstates, an exact state 3-design.
pub fn qubit_design() -> Vec<[C64; 2]> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    vec![
        [ONE, ZERO],
        [ZERO, ONE],
        [C64::new(s, 0.0), C64::new(s, 0.0)],
        [C64::new(s, 0.0), C64::new(-s, 0.0)],
        [C64::new(s, 0.0), C64::new(0.0, s)],
        [C64::new(s, 0.0), C64::new(0.0, -s)],
    ]
}

/// Average fidelity by enumerating trajectories: each design input, each
/// outcome weighted by its probability. Qubit ports only.
pub fn pbt_average_fidelity_trajectories(resource: &PortResource) -> Result<f64> {
    if resource.n_a != 1 {
        return Err(Error::Precondition("trajectory average needs n_A = 1".into()));
    }
    let n = resource.n_ports;
    let design = qubit_design();
    let mut total = 0.0;
    for psi in &design {
        let v = CMat::from_column_slice(2, 1, psi);
        let rho = &v * v.adjoint();
        for (x, b) in density_branches(&rho, resource)?.iter().enumerate() {
            let p = b.trace().re;
            if p <= 0.0 {
                continue;
            }
            let out = port_marginal(b, 2, n, 1, x)? * C64::new(1.0 / p, 0.0);
            total += p * pure_fidelity(&out, psi);
        }
    }
    Ok(total / design.len() as f64)
}

/// Monte Carlo average fidelity over Haar inputs and sampled outcomes; trials
/// run in parallel, trial `k` seeded with `seed + k`.
pub fn pbt_average_fidelity_sampled(resource: &PortResource, trials: usize, seed: u64) -> Result<f64> {
    let d = resource.local_dim();
    let n = resource.n_ports;
    resource.pgm()?;
    let fids = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let psi = linalg::random_state(d, &mut rng);
            let v = CMat::from_column_slice(d, 1, &psi);
            let branches = density_branches(&(&v * v.adjoint()), resource)?;
            let probs: Vec<f64> = branches.iter().map(|b| b.trace().re).collect();
            let x = sample_index(&probs, &mut rng);
            let out = port_marginal(&branches[x], d, n, 1, x)? * C64::new(1.0 / probs[x], 0.0);
            Ok(pure_fidelity(&out, &psi))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(fids.iter().sum::<f64>() / trials.max(1) as f64)
}

/// Classical outcomes of the cascade, ports indexed from 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadeRecords {
    pub n_ports: usize,
    /// Charlie → Alice.
    pub x1: usize,
    /// Alice's port `i` → Charlie.
    pub x2: Vec<usize>,
    /// Charlie's port `(i, j)` → Bob.
    pub x3: Vec<Vec<usize>>,
}

/// Follows the records to Bob's port `(x1, x2[x1], x3[x1][x2[x1]])`.
pub fn resolve_chain(records: &CascadeRecords) -> Result<[usize; 3]> {
    let n = records.n_ports;
    let bad = |msg: String| Err(Error::InconsistentRecords(msg));
    if records.x2.len() != n || records.x3.len() != n || records.x3.iter().any(|row| row.len() != n) {
        return bad(format!("record shapes do not match N = {n}"));
    }
    let in_range = |v: usize| v < n;
    if !in_range(records.x1)
        || !records.x2.iter().all(|&v| in_range(v))
        || !records.x3.iter().flatten().all(|&v| in_range(v))
    {
        return bad(format!("port index outside 0..{n}"));
    }
    let i = records.x1;
    let j = records.x2[i];
    Ok([i, j, records.x3[i][j]])
}

/// Pre-protocol resource of the cascade: what Charlie's port teleportations
/// leave behind before any input exists.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CascadeResource {
    pub n_ports: usize,
    /// `I(V'_0 : V'_1)` in bits, summed over the independent blocks.
    pub mutual_information: f64,
    /// Block carrying the Bell halves shared with Alice and Bob.
    pub first_block_information: f64,
    /// One of the `N²` blocks relaying Alice's port halves to Bob.
    pub relay_block_information: f64,
    /// Distribution of each of Charlie's records.
    pub record_distribution: Vec<f64>,
}

fn mutual_information(rho: &CMat, dims: &[usize], a: &[usize], b: &[usize]) -> Result<f64> {
    let op = DenseOperator::new((0..dims.len()).collect(), dims.to_vec(), rho.clone())?;
    let keep = |region: &[usize]| -> Result<f64> {
        let traced: Vec<usize> = (0..dims.len()).filter(|f| !region.contains(f)).collect();
        Ok(von_neumann_bits(partial_trace(&op, &traced)?.matrix()))
    };
    let ab: Vec<usize> = a.iter().chain(b).copied().collect();
    Ok((keep(a)? + keep(b)? - keep(&ab)?).max(0.0))
}

/// Builds the resource block by block. Each block is Charlie port-teleporting
/// half of a 4-dimensional maximally entangled pair; the records are summed
/// over, which is how `V'_0 V'_1` sees them.
pub fn cascade_resource(n_ports: usize) -> Result<CascadeResource> {
    check_cascade_ports(n_ports)?;
    let ports = PortResource::new(n_ports, 2)?;
    let d = 4;
    let mut amps = vec![ZERO; d * d];
    for i in 0..d {
        amps[i * d + i] = C64::new(0.5, 0.0);
    }
    let phi = StateVector::new(vec![d, d], amps)?;
    let branches = joint_branches(&phi, &ports)?;
    let record_distribution: Vec<f64> = branches.iter().map(|b| b.trace().re).collect();
    let mut total = CMat::zeros(branches[0].nrows(), branches[0].ncols());
    for b in &branches {
        total += b;
    }
    let port_factors: Vec<usize> = (0..n_ports).collect();
    // First block: the reference is Alice's Bell half a' and Bob's b'.
    let mut dims = vec![d; n_ports];
    dims.extend([2, 2]);
    let mut alice = port_factors.clone();
    alice.push(n_ports);
    let first = mutual_information(&total, &dims, &alice, &[n_ports + 1])?;
    // Relay block: the reference is Alice's half, the ports are Bob's.
    let mut dims = vec![d; n_ports];
    dims.push(d);
    let relay = mutual_information(&total, &dims, &[n_ports], &port_factors)?;
    Ok(CascadeResource {
        n_ports,
        mutual_information: first + (n_ports * n_ports) as f64 * relay,
        first_block_information: first,
        relay_block_information: relay,
        record_distribution,
    })
}

impl CascadeResource {
    /// Trace distance of `ρ_{X'_0 X'_1}` from `1/N ⊗ ρ_{X'_1}` for one record
    /// after `V'_0` (and with it any pad key) is traced out.
    ///
    /// With the pad `X'_0 = x + k mod N` for a uniform key `k` held in `V'_0`.
    /// Records are independent across blocks, so one record decides the joint
    /// question.
    pub fn x0_distance(&self, otp: bool) -> f64 {
        let n = self.n_ports;
        let p = &self.record_distribution;
        let mut dist = 0.0;
        for s in 0..n {
            for (x, &px) in p.iter().enumerate() {
                let joint = if otp {
                    px / n as f64
                } else if s == x {
                    px
                } else {
                    0.0
                };
                dist += (joint - px / n as f64).abs();
            }
        }
        0.5 * dist
    }
}

fn check_cascade_ports(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Invalid("cascade needs at least one port".into()));
    }
    if n > CASCADE_MAX_PORTS {
        return Err(Error::CapExceeded {
            dim: n.pow(3),
            cap: CASCADE_MAX_PORTS.pow(3),
        });
    }
    Ok(())
}

/// Outcome of one cascade run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CascadeReport {
    pub n_ports: usize,
    pub otp: bool,
    pub seed: u64,
    pub pauli_a: String,
    pub pauli_b: String,
    pub records: CascadeRecords,
    /// Charlie's records as Alice receives them (padded when `otp`).
    pub x0_register: Vec<usize>,
    pub chain: [usize; 3],
    /// Fidelity of the chain register with its stage target: after the
    /// ordinary teleportations, after Charlie → Alice plus Alice's correction,
    /// after Alice → Charlie, and after Charlie → Bob plus Bob's correction.
    pub stage_fidelities: Vec<f64>,
    pub final_fidelity: f64,
    pub mutual_information: f64,
    pub x0_distance: f64,
    /// Present when `otp`: whether `X'_0` is maximally mixed given `X'_1`.
    pub otp_check: Option<bool>,
}

/// Applies `u` to every density in a nested list of port marginals.
fn conjugate_all(ports: &mut [CMat], u: &CMat) {
    for p in ports {
        *p = linalg::conjugate(u, p);
    }
}

/// Port-based teleportation of a density, keeping every port marginal.
fn pbt_marginals<R: Rng + ?Sized>(
    rho: &CMat,
    resource: &PortResource,
    rng: &mut R,
) -> Result<(usize, Vec<CMat>)> {
    let d = resource.local_dim();
    let n = resource.n_ports;
    let branches = density_branches(rho, resource)?;
    let probs: Vec<f64> = branches.iter().map(|b| b.trace().re).collect();
    let x = sample_index(&probs, rng);
    let inv = C64::new(1.0 / probs[x], 0.0);
    let marginals = (0..n)
        .map(|y| Ok(port_marginal(&branches[x], d, n, 1, y)? * inv))
        .collect::<Result<Vec<_>>>()?;
    Ok((x, marginals))
}

/// Runs the three-party cascade on single-qubit inputs `A` and `B`.
///
/// Every port is tracked through its reduced state; the records of ports off
/// the final chain are sampled from those marginals.
pub fn run_appendix_d(
    psi_a: &StateVector,
    psi_b: &StateVector,
    n_ports: usize,
    otp: bool,
    seed: u64,
) -> Result<CascadeReport> {
    check_cascade_ports(n_ports)?;
    for psi in [psi_a, psi_b] {
        if psi.dims() != [2] {
            return Err(Error::DimensionMismatch(format!(
                "cascade inputs are single qubits, got dims {:?}",
                psi.dims()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bell = PortResource::bell(1)?;
    let ports = PortResource::new(n_ports, 2)?;
    let n = n_ports;

    let ta = teleport_normal(psi_a, &bell, rng.next_u64())?;
    let tb = teleport_normal(psi_b, &bell, rng.next_u64())?;
    let (Outcome::Pauli(pa), Outcome::Pauli(pb)) = (&ta.outcome, &tb.outcome) else {
        unreachable!()
    };
    let (ma, mb) = (pauli_matrix(pa)?, pauli_matrix(pb)?);
    let ideal: Vec<C64> = psi_a.tensor(psi_b).into_amplitudes();
    let i2 = linalg::identity(2);
    let target = |u: &CMat| matmul(u, &v_as_col(&ideal)).as_slice().to_vec();
    let charlie = linalg::kron(&ta.state, &tb.state);
    let mut stage_fidelities = vec![pure_fidelity(&charlie, &target(&linalg::kron(&ma, &mb)))];

    // Charlie → Alice, then Alice undoes her Pauli on every port.
    let (x1, mut alice) = pbt_marginals(&charlie, &ports, &mut rng)?;
    conjugate_all(&mut alice, &linalg::kron(&ma.adjoint(), &i2));
    let mid = target(&linalg::kron(&i2, &mb));
    stage_fidelities.push(pure_fidelity(&alice[x1], &mid));

    // Alice → Charlie, port by port.
    let mut x2 = Vec::with_capacity(n);
    let mut charlie_ports = Vec::with_capacity(n);
    for rho in &alice {
        let (x, m) = pbt_marginals(rho, &ports, &mut rng)?;
        x2.push(x);
        charlie_ports.push(m);
    }
    stage_fidelities.push(pure_fidelity(&charlie_ports[x1][x2[x1]], &mid));

    // Charlie → Bob, then Bob applies his Pauli to every port.
    let bob_fix = linalg::kron(&i2, &mb.adjoint());
    let mut x3 = vec![Vec::with_capacity(n); n];
    let mut bob = vec![Vec::with_capacity(n); n];
    for (i, row) in charlie_ports.iter().enumerate() {
        for rho in row {
            let (x, mut m) = pbt_marginals(rho, &ports, &mut rng)?;
            conjugate_all(&mut m, &bob_fix);
            x3[i].push(x);
            bob[i].push(m);
        }
    }

    let records = CascadeRecords { n_ports: n, x1, x2, x3 };
    // Charlie's records (x1, then x3 row-major) as Alice receives them.
    let plain: Vec<usize> = std::iter::once(records.x1)
        .chain(records.x3.iter().flatten().copied())
        .collect();
    let keys: Vec<usize> = plain.iter().map(|_| if otp { rng.random_range(0..n) } else { 0 }).collect();
    let x0_register: Vec<usize> = plain.iter().zip(&keys).map(|(x, k)| (x + k) % n).collect();
    let decrypted: Vec<usize> = x0_register.iter().zip(&keys).map(|(x, k)| (x + n - k) % n).collect();
    if decrypted != plain {
        return Err(Error::InconsistentRecords("pad does not invert".into()));
    }
    let chain = resolve_chain(&records)?;
    let out = &bob[chain[0]][chain[1]][chain[2]];
    let final_fidelity = pure_fidelity(out, &ideal);
    stage_fidelities.push(final_fidelity);

    let resource = cascade_resource(n)?;
    let x0_distance = resource.x0_distance(otp);
    Ok(CascadeReport {
        n_ports: n,
        otp,
        seed,
        pauli_a: pa.clone(),
        pauli_b: pb.clone(),
        records,
        x0_register,
        chain,
        stage_fidelities,
        final_fidelity,
        mutual_information: resource.mutual_information,
        x0_distance,
        otp_check: otp.then_some(x0_distance <= 1e-9),
    })
}
