//! Code isometries built from excitation operators or correlation data,
//! polishing to exact isometries, unitary reconstruction, and the additive
//! error certificate. Norms on `V†V − 1` are operator norms throughout.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decompose::{decompose_swap_model, Half, QuarterDecomposition};
use crate::error::{Error, Result};
use crate::lattice::{self, tfim, Ring};
use crate::protocol::{self, LocalMap, Port, PseudoBulkSpec};
use crate::qcore::linalg::{self, C64};
use crate::qcore::{self, tensor, CMat, Channel, DenseOperator, StateVector};
use crate::spread::{self, LightConeFit, ModelCorrelator};
use crate::stab::{stabilizer_vector, StabilizerCode};

/// Largest `‖V†V − 1‖` a construction may have before it is rejected.
pub const MAX_DEFECT: f64 = 0.5;

/// Correlation functions `⟨O_1(t_1) ⋯ O_m(t_m)⟩` of labeled operators,
/// accurate to `eta` times the product of operator norms.
pub trait CorrelationOracle {
    fn correlator(&self, ops: &[(String, f64)]) -> Result<C64>;
    fn operator_norm(&self, label: &str) -> Result<f64>;

    fn eta(&self) -> f64 {
        0.0
    }

    fn max_len(&self) -> usize {
        usize::MAX
    }
}

/// Evaluates a correlator and rejects values outside `∏‖O_i‖ + m·η`.
pub fn checked_correlator(oracle: &dyn CorrelationOracle, ops: &[(String, f64)]) -> Result<C64> {
    if ops.len() > oracle.max_len() {
        return Err(Error::Invalid(format!(
            "product of {} operators exceeds the oracle limit {}",
            ops.len(),
            oracle.max_len()
        )));
    }
    let v = oracle.correlator(ops)?;
    let mut bound = 1.0;
    for (label, _) in ops {
        bound *= oracle.operator_norm(label)?;
    }
    bound += ops.len() as f64 * oracle.eta();
    if v.norm() > bound * (1.0 + 1e-9) + 1e-12 {
        return Err(Error::Invalid(format!("correlator {} exceeds its norm bound {bound}", v.norm())));
    }
    Ok(v)
}

impl CorrelationOracle for ModelCorrelator {
    fn correlator(&self, ops: &[(String, f64)]) -> Result<C64> {
        self.evaluate(ops)
    }

    fn operator_norm(&self, label: &str) -> Result<f64> {
        self.operators
            .get(label)
            .map(|o| linalg::op_norm(o.matrix()))
            .ok_or_else(|| Error::MissingCorrelator(label.into()))
    }
}

/// Correlators on an arbitrary finite system: a fixed state, full-space
/// operators, and an optional Hamiltonian for `O(t) = e^{iHt} O e^{−iHt}`.
#[derive(Clone, Debug)]
pub struct DenseOracle {
    pub state: Vec<C64>,
    pub operators: BTreeMap<String, CMat>,
    pub hamiltonian: Option<CMat>,
}

impl DenseOracle {
    fn propagator(&self, t: f64) -> Option<CMat> {
        let h = self.hamiltonian.as_ref()?;
        (t != 0.0).then(|| linalg::hermitian_fn(h, |l| C64::from_polar(1.0, -l * t)))
    }
}

impl CorrelationOracle for DenseOracle {
    fn correlator(&self, ops: &[(String, f64)]) -> Result<C64> {
        let mut v = linalg::to_dvector(&self.state);
        for (label, t) in ops.iter().rev() {
            let o = self
                .operators
                .get(label)
                .ok_or_else(|| Error::MissingCorrelator(label.clone()))?;
            if o.ncols() != v.len() {
                return Err(Error::DimensionMismatch(format!("operator {label}")));
            }
            v = match self.propagator(*t) {
                Some(u) => u.adjoint() * (o * (&u * v)),
                None => o * v,
            };
        }
        Ok(linalg::inner(&self.state, v.as_slice()))
    }

    fn operator_norm(&self, label: &str) -> Result<f64> {
        self.operators
            .get(label)
            .map(linalg::op_norm)
            .ok_or_else(|| Error::MissingCorrelator(label.into()))
    }
}

/// Adds seeded complex Gaussian noise with modulus scale `eta / 3` (clipped at
/// `eta`) to every correlator of an inner oracle. The noise is a function of
/// the query, so repeated queries agree.
#[derive(Clone, Debug)]
pub struct NoisyOracle<O> {
    pub inner: O,
    pub eta: f64,
    pub seed: u64,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

impl<O: CorrelationOracle> CorrelationOracle for NoisyOracle<O> {
    fn correlator(&self, ops: &[(String, f64)]) -> Result<C64> {
        let exact = self.inner.correlator(ops)?;
        let key = spread::TableReference::key(ops);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(key.as_bytes()));
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        let mut z = C64::new(re, im) * (self.eta / (3.0 * std::f64::consts::SQRT_2));
        if z.norm() > self.eta {
            z *= self.eta / z.norm();
        }
        Ok(exact + z)
    }

    fn operator_norm(&self, label: &str) -> Result<f64> {
        self.inner.operator_norm(label)
    }

    fn eta(&self) -> f64 {
        self.inner.eta() + self.eta
    }

    fn max_len(&self) -> usize {
        self.inner.max_len()
    }
}

/// Coordinates in which [`CodeIsometry::matrix`] is written.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Rows index the physical Hilbert space.
    Physical,
    /// `V = G^{1/2}` for the measured Gram matrix `G`: the isometry written
    /// in an orthonormal basis of its own range.
    Gram,
}

/// `V: logical → physical` with its recorded defect `‖V†V − 1‖_∞`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CodeIsometry {
    #[serde(with = "lattice::matrix_serde")]
    pub matrix: CMat,
    pub defect: f64,
    pub labels: Vec<String>,
    pub frame: Frame,
}

impl CodeIsometry {
    pub fn new(matrix: CMat, labels: Vec<String>, frame: Frame) -> Self {
        let defect = linalg::isometry_defect(&matrix);
        CodeIsometry {
            matrix,
            defect,
            labels,
            frame,
        }
    }

    pub fn logical_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn recompute_defect(&self) -> f64 {
        linalg::isometry_defect(&self.matrix)
    }
}

fn reject_large(defect: f64) -> Result<()> {
    if !(defect < MAX_DEFECT) {
        return Err(Error::NotIsometry { defect });
    }
    Ok(())
}

/// Generalized Paulis `X|j⟩ = |j+1⟩`, `Z|j⟩ = e^{2πij/N}|j⟩`.
pub fn generalized_paulis(n: usize) -> (CMat, CMat) {
    let x = CMat::from_fn(n, n, |r, c| if r == (c + 1) % n { linalg::ONE } else { linalg::ZERO });
    let z = CMat::from_fn(n, n, |r, c| {
        if r == c {
            C64::from_polar(1.0, 2.0 * PI * r as f64 / n as f64)
        } else {
            linalg::ZERO
        }
    });
    (x, z)
}

/// `[1, X, X², …, X^{N−1}]`.
pub fn pauli_powers(x: &CMat, n: usize) -> Vec<CMat> {
    let mut out = vec![linalg::identity(x.nrows())];
    for k in 1..n {
        out.push(linalg::matmul(x, &out[k - 1]));
    }
    out
}

/// `V = U_t Σ_i f_i|0⟩⟨i_L|` from explicit excitation operators `f_i`.
pub fn build_isometry(excitations: &[CMat], state: &[C64], evolution: Option<&CMat>) -> Result<CodeIsometry> {
    if excitations.is_empty() {
        return Err(Error::Invalid("no excitation operators".into()));
    }
    let dim = state.len();
    let psi = linalg::to_dvector(state);
    let mut v = CMat::zeros(dim, excitations.len());
    for (i, f) in excitations.iter().enumerate() {
        if f.nrows() != dim || f.ncols() != dim {
            return Err(Error::DimensionMismatch(format!("excitation {i} is {}x{}", f.nrows(), f.ncols())));
        }
        v.set_column(i, &(f * &psi));
    }
    if let Some(u) = evolution {
        if u.nrows() != dim || u.ncols() != dim {
            return Err(Error::DimensionMismatch("evolution".into()));
        }
        v = linalg::matmul(u, &v);
    }
    let labels = (0..excitations.len()).map(|i| format!("X^{i}")).collect();
    let iso = CodeIsometry::new(v, labels, Frame::Physical);
    reject_large(iso.defect)?;
    Ok(iso)
}

/// Isometry from the oracle's Gram matrix `G_ij = ⟨f_i(t)† f_j(t)⟩`, written
/// in the [`Frame::Gram`] frame. `excitations` pairs each label with the label
/// of its adjoint.
pub fn build_isometry_from_oracle(
    oracle: &dyn CorrelationOracle,
    excitations: &[(String, String)],
    t: f64,
) -> Result<CodeIsometry> {
    let k = excitations.len();
    let mut g = CMat::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let ops = [(excitations[i].1.clone(), t), (excitations[j].0.clone(), t)];
            let v = checked_correlator(oracle, &ops)?;
            if i == j {
                g[(i, i)] = C64::new(v.re, 0.0);
            } else {
                g[(i, j)] = v;
                g[(j, i)] = v.conj();
            }
        }
    }
    let defect = linalg::op_norm(&(&g - linalg::identity(k)));
    reject_large(defect)?;
    let sqrt = linalg::hermitian_fn(&g, |l| C64::new(l.max(0.0).sqrt(), 0.0));
    let labels = excitations.iter().map(|(l, _)| l.clone()).collect();
    let mut iso = CodeIsometry::new(sqrt, labels, Frame::Gram);
    // The Gram defect is the defining quantity; keep it rather than the
    // defect of the square root (they agree up to rounding).
    iso.defect = defect;
    Ok(iso)
}

/// `Ṽ = V (V†V)^{−1/2}`.
pub fn polish_isometry(v: &CodeIsometry) -> Result<CodeIsometry> {
    reject_large(v.recompute_defect())?;
    let g = linalg::matmul(&v.matrix.adjoint(), &v.matrix);
    let inv_sqrt = linalg::hermitian_fn(&g, |l| C64::new(1.0 / l.sqrt(), 0.0));
    Ok(CodeIsometry::new(
        linalg::matmul(&v.matrix, &inv_sqrt),
        v.labels.clone(),
        v.frame,
    ))
}

/// Replaces every singular value by one: `Σ λ̃_i |i′⟩⟨i|` with `λ̃ = 1`, which
/// also covers vanishing singular values.
pub fn reconstruct_unitary(o: &DenseOperator) -> DenseOperator {
    let svd = o.matrix().clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    DenseOperator::new(o.support().to_vec(), o.dims().to_vec(), linalg::matmul(&u, &v_t))
        .expect("shape is preserved")
}

/// `2‖V − W‖_∞`, an upper bound on the diamond distance of the isometric
/// channels.
pub fn isometry_channel_bound(v: &CMat, w: &CMat) -> Result<f64> {
    Ok(qcore::isometry_channel_distance(v, w)?.bound)
}

/// Exact-code checks: `‖V†V − 1‖`, `max_ab ‖X_P^a Z_P^b V − V X_L^a Z_L^b‖`
/// and `max_ab ‖[VV†, X_P^a Z_P^b]‖`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeConditions {
    pub isometry_defect: f64,
    pub intertwining: f64,
    pub projector_commutator: f64,
}

pub fn code_conditions(v: &CMat, x_p: &CMat, z_p: &CMat) -> Result<CodeConditions> {
    let n = v.ncols();
    if x_p.nrows() != v.nrows() || z_p.nrows() != v.nrows() {
        return Err(Error::DimensionMismatch("physical Paulis vs isometry".into()));
    }
    let (x_l, z_l) = generalized_paulis(n);
    let (xp, zp, xl, zl) = (pauli_powers(x_p, n), pauli_powers(z_p, n), pauli_powers(&x_l, n), pauli_powers(&z_l, n));
    let proj = linalg::matmul(v, &v.adjoint());
    let mut out = CodeConditions {
        isometry_defect: linalg::isometry_defect(v),
        intertwining: 0.0,
        projector_commutator: 0.0,
    };
    for a in 0..n {
        for b in 0..n {
            let p = linalg::matmul(&xp[a], &zp[b]);
            let l = linalg::matmul(&xl[a], &zl[b]);
            let lhs = linalg::matmul(&p, v);
            let rhs = linalg::matmul(v, &l);
            out.intertwining = out.intertwining.max(linalg::op_norm(&(lhs - rhs)));
            out.projector_commutator = out.projector_commutator.max(linalg::op_norm(&linalg::commutator(&proj, &p)));
        }
    }
    Ok(out)
}

/// `|0_L⟩` of a stabilizer code with one logical qubit, and the dense
/// logical `X̄`, `Z̄`.
pub fn stabilizer_seed(code: &StabilizerCode) -> Result<(StateVector, CMat, CMat)> {
    if code.k() != 1 {
        return Err(Error::Invalid(format!("expected one logical qubit, found {}", code.k())));
    }
    let n = code.n;
    let mut gens = code.stabilizers.clone();
    gens.push(code.logical_z[0].clone());
    let zero = stabilizer_vector(&gens, n)?;
    Ok((zero, code.logical_x[0].to_matrix(), code.logical_z[0].to_matrix()))
}

/// One point of the perturbation sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub eta: f64,
    pub seed: u64,
    /// `‖V†V − 1‖`.
    pub defect: f64,
    /// `‖Ṽ − V‖`.
    pub polish_shift: f64,
    /// `‖V X_L − X_P V‖`.
    pub intertwining: f64,
}

/// Excitations `f_i = X̄^i + √η |n_i⟩⟨0_L|` whose leak vectors `n_i` are
/// seeded unit vectors orthogonal to the code space. Every correlator in the
/// algebra of `X̄`, `Z̄` then moves by at most `η` times the operator norms.
pub fn leaky_excitations(code: &StabilizerCode, eta: f64, seed: u64) -> Result<(Vec<CMat>, StateVector, CMat)> {
    let (zero, x_p, _) = stabilizer_seed(code)?;
    let proj = code.code_projector();
    let dim = zero.amplitudes().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = eta.sqrt();
    let zero_row = linalg::to_dvector(zero.amplitudes()).adjoint();
    let mut out = Vec::new();
    for (i, p) in pauli_powers(&x_p, 2).into_iter().enumerate() {
        let g = linalg::ginibre(dim, 1, &mut rng);
        let leak = &g - &proj * &g;
        let norm = leak.norm();
        if norm < 1e-9 {
            return Err(Error::Invalid(format!("leak vector {i} vanished")));
        }
        out.push(p + (leak * zero_row.clone()) * C64::new(s / norm, 0.0));
    }
    Ok((out, zero, x_p))
}

/// Defect, polish shift and intertwining error over `η × seeds`.
pub fn eta_sweep(code: &StabilizerCode, etas: &[f64], seeds: &[u64]) -> Result<Vec<SweepPoint>> {
    let (x_l, _) = generalized_paulis(2);
    let grid: Vec<(f64, u64)> = etas.iter().flat_map(|&e| seeds.iter().map(move |&s| (e, s))).collect();
    grid.par_iter()
        .map(|&(eta, seed)| {
            let (fs, zero, x_p) = leaky_excitations(code, eta, seed)?;
            let v = build_isometry(&fs, zero.amplitudes(), None)?;
            let polished = polish_isometry(&v)?;
            let inter = linalg::matmul(&v.matrix, &x_l) - linalg::matmul(&x_p, &v.matrix);
            Ok(SweepPoint {
                eta,
                seed,
                defect: v.defect,
                polish_shift: linalg::op_norm(&(&polished.matrix - &v.matrix)),
                intertwining: linalg::op_norm(&inter),
            })
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Invalid("slope needs two or more paired points".into()));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(Error::Invalid("log-log slope needs positive data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Invalid("all x values coincide".into()));
    }
    Ok(sxy / sxx)
}

/// Physical parameters of the parametric bound
/// `c_CFT √G_N + c_sim √δ + c_spread a e^{−b Δτ}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub g_n: f64,
    pub delta: f64,
    pub a: f64,
    pub b: f64,
    pub delta_tau: f64,
    #[serde(default = "one")]
    pub c_cft: f64,
    #[serde(default = "one")]
    pub c_sim: f64,
    #[serde(default = "one")]
    pub c_spread: f64,
}

fn one() -> f64 {
    1.0
}

impl PhysicalParams {
    /// All constants set to one.
    pub fn new(g_n: f64, delta: f64, a: f64, b: f64, delta_tau: f64) -> Self {
        PhysicalParams {
            g_n,
            delta,
            a,
            b,
            delta_tau,
            c_cft: 1.0,
            c_sim: 1.0,
            c_spread: 1.0,
        }
    }

    pub fn value(&self) -> f64 {
        self.c_cft * self.g_n.sqrt() + self.c_sim * self.delta.sqrt() + self.c_spread * self.a * (-self.b * self.delta_tau).exp()
    }
}

/// Additive ledger of the four error sources and its total.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorCertificate {
    pub eps_enc: f64,
    pub eps_rec: f64,
    pub eps_dyn: f64,
    pub eps_spread: f64,
    pub total: f64,
    pub physical: Option<PhysicalParams>,
    pub parametric: Option<f64>,
}

pub fn compose_certificate(
    eps_enc: f64,
    eps_rec: f64,
    eps_dyn: f64,
    eps_spread: f64,
    physical: Option<PhysicalParams>,
) -> Result<ErrorCertificate> {
    let named = [("eps_enc", eps_enc), ("eps_rec", eps_rec), ("eps_dyn", eps_dyn), ("eps_spread", eps_spread)];
    for (name, v) in named {
        if v.is_nan() || v < 0.0 {
            return Err(Error::NegativeInput(format!("{name} = {v}")));
        }
    }
    if let Some(p) = &physical {
        let fields = [
            ("g_n", p.g_n),
            ("delta", p.delta),
            ("a", p.a),
            ("b", p.b),
            ("c_cft", p.c_cft),
            ("c_sim", p.c_sim),
            ("c_spread", p.c_spread),
        ];
        for (name, v) in fields {
            if v.is_nan() || v < 0.0 {
                return Err(Error::NegativeInput(format!("{name} = {v}")));
            }
        }
    }
    Ok(ErrorCertificate {
        eps_enc,
        eps_rec,
        eps_dyn,
        eps_spread,
        total: eps_enc + eps_rec + eps_dyn + eps_spread,
        physical,
        parametric: physical.map(|p| p.value()),
    })
}

/// Full diamond-norm bounds from normalized Choi matrices:
/// `‖J_1 − J_2‖₁ ≤ ‖Φ_1 − Φ_2‖◇ ≤ d_in ‖J_1 − J_2‖₁`.
pub fn choi_diamond_bounds(j1: &CMat, j2: &CMat, d_in: usize) -> Result<(f64, f64)> {
    if j1.shape() != j2.shape() {
        return Err(Error::DimensionMismatch("Choi matrices".into()));
    }
    let lower = linalg::hermitian_trace_norm(&(j1 - j2));
    Ok((lower, d_in as f64 * lower))
}

/// Desk-scale end-to-end instance: TFIM ring, truncated swap decomposition,
/// perturbed swap encoders, conjugated-swap decoders with a perturbed output
/// rotation, and a perturbed time-`τ` code `Ṽ_τ ≈ U V₀ Γ†` for a product
/// target `Γ = Γ_A ⊗ Γ_B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndToEndConfig {
    pub n_sites: usize,
    pub j: f64,
    pub h: f64,
    /// `τ = frac · 2π/8`.
    pub frac: f64,
    /// Strength of the encoder/decoder perturbations.
    pub kappa: f64,
    /// Size of the perturbation of `V_τ` before polishing.
    pub zeta: f64,
    pub seed: u64,
}

impl Default for EndToEndConfig {
    fn default() -> Self {
        EndToEndConfig {
            n_sites: 8,
            j: 0.25,
            h: 0.25,
            frac: 0.3,
            kappa: 1e-3,
            zeta: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EndToEndReport {
    pub config: EndToEndConfig,
    pub tau: f64,
    pub certificate: ErrorCertificate,
    /// `‖J_impl − J_Γ‖₁`, a lower bound on `‖implemented − Γ‖◇`.
    pub measured_lower: f64,
    pub decoder_defects: [f64; 2],
    pub dominated: bool,
}

/// Light-cone fit used by [`end_to_end`], from the time-zero model.
pub fn end_to_end_fit(cfg: &EndToEndConfig) -> Result<LightConeFit> {
    let ring = Ring::qubits(cfg.n_sites)?;
    let times: Vec<f64> = (1..=8).map(|k| k as f64 * 0.1).collect();
    spread::lr_profile(&tfim(ring, cfg.j, cfg.h, 0.0), ring, &times, &[1, 2, 3])
}

fn random_hermitian(d: usize, rng: &mut ChaCha8Rng) -> CMat {
    let g = linalg::ginibre(d, d, rng);
    let h = (&g + g.adjoint()) * C64::new(0.5, 0.0);
    let norm = linalg::op_norm(&h);
    h / C64::new(norm, 0.0)
}

fn perturbation(d: usize, kappa: f64, rng: &mut ChaCha8Rng) -> CMat {
    let h = random_hermitian(d, rng);
    linalg::hermitian_fn(&h, |l| C64::from_polar(1.0, kappa * l))
}

/// Embeds a matrix on the leading factors of a map's ports.
fn leading(m: &CMat, total: usize) -> CMat {
    let rest = total / m.nrows();
    linalg::kron(m, &linalg::identity(rest))
}

/// The swap-in code `|ab⟩ ↦ |a⟩_{c0} |b⟩_{c1} |0…0⟩` as a ring isometry.
fn swap_in_code(ring: Ring, c0: usize, c1: usize) -> CMat {
    let n = ring.n_sites();
    let dims = ring.dims();
    let mut v = CMat::zeros(ring.hilbert_dim(), 4);
    for a in 0..2 {
        for b in 0..2 {
            let mut digits = vec![0; n];
            digits[c0] = a;
            digits[c1] = b;
            v[(tensor::from_digits(&digits, &dims), 2 * a + b)] = linalg::ONE;
        }
    }
    v
}

/// Truncated decomposition of the instance's dynamics. It depends on the
/// model only, so runs that differ in `seed` can share it.
pub fn end_to_end_decomposition(cfg: &EndToEndConfig, fit: &LightConeFit) -> Result<QuarterDecomposition> {
    let ring = Ring::qubits(cfg.n_sites)?;
    let model = tfim(ring, cfg.j, cfg.h, cfg.frac * 2.0 * PI / 8.0);
    decompose_swap_model(&model, ring, true, Some(fit))
}

/// Runs the instance and checks `measured_lower ≤ certificate.total`.
pub fn end_to_end(cfg: &EndToEndConfig, fit: &LightConeFit) -> Result<EndToEndReport> {
    end_to_end_with(cfg, &end_to_end_decomposition(cfg, fit)?)
}

/// [`end_to_end`] with a precomputed [`end_to_end_decomposition`].
pub fn end_to_end_with(cfg: &EndToEndConfig, dec: &QuarterDecomposition) -> Result<EndToEndReport> {
    let ring = Ring::qubits(cfg.n_sites)?;
    let tau = cfg.frac * 2.0 * PI / 8.0;
    let model = tfim(ring, cfg.j, cfg.h, tau);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (c0, c1) = protocol::designated_sites(ring);

    // Nonlocal implementation of U and its light-cone certificate, doubled
    // because the certificate bounds the isometries in operator norm.
    let eps_spread = 2.0 * dec.residual_bound;

    // Encoders: swap-in followed by a small rotation of (input, site).
    let swap = linalg::swap_qudits(2);
    let p_a = perturbation(4, cfg.kappa, &mut rng);
    let p_b = perturbation(4, cfg.kappa, &mut rng);
    let enc = |p: &CMat, site: usize| -> Result<LocalMap> {
        Ok(LocalMap {
            label: format!("perturbed-swap-in@{site}"),
            inputs: vec![Port::Input, Port::Site(site)],
            outputs: vec![Port::Input, Port::Site(site)],
            channel: Channel::unitary(vec![2, 2], linalg::matmul(p, &swap))?,
        })
    };
    let id4 = linalg::identity(4);
    let eps_enc = 2.0 * (linalg::op_norm(&(&p_a - &id4)) + linalg::op_norm(&(&p_b - &id4)));

    // Target and the time-τ code defined from it.
    let gamma_a = linalg::haar_unitary(2, &mut rng);
    let gamma_b = linalg::haar_unitary(2, &mut rng);
    let gamma = linalg::kron(&gamma_a, &gamma_b);
    let u = lattice::evolve_model(&model, ring)?;
    let v0 = swap_in_code(ring, c0, c1);
    let uv0 = linalg::matmul(u.matrix(), &v0);
    let noise = linalg::ginibre(ring.hilbert_dim(), 4, &mut rng);
    let noise_norm = linalg::op_norm(&noise);
    let v_tau_raw = linalg::matmul(&uv0, &gamma.adjoint()) + noise * C64::new(cfg.zeta / noise_norm, 0.0);
    let v_tau = polish_isometry(&CodeIsometry::new(v_tau_raw, vec![], Frame::Physical))?.matrix;
    let eps_dyn = isometry_channel_bound(&uv0, &linalg::matmul(&v_tau, &gamma))?;

    // Decoders: conjugated swap-out truncated to N / S, then Γ and a small
    // rotation on the output register.
    let mut decoder = |site: usize, half: Half, g: &CMat| -> Result<(LocalMap, f64)> {
        let t = protocol::conjugated_swap(&model, ring, tau, site, half, Port::Output)?;
        let w = linalg::matmul(&perturbation(2, cfg.kappa, &mut rng), g);
        let total = t.map.channel.input_dim();
        let m = linalg::matmul(&leading(&w, total), &t.map.channel.kraus()[0]);
        let dims = t.map.channel.input_dims().to_vec();
        Ok((
            LocalMap {
                label: format!("decoder@{site}"),
                inputs: t.map.inputs.clone(),
                outputs: t.map.outputs.clone(),
                channel: Channel::unitary(dims, m)?,
            },
            t.defect,
        ))
    };
    let (dec_a, defect_a) = decoder(c0, Half::N, &gamma_a)?;
    let (dec_b, defect_b) = decoder(c1, Half::S, &gamma_b)?;

    let eps_rec = reconstruction_error(ring, &v_tau, &dec_a, &dec_b)?;

    let spec = PseudoBulkSpec {
        ring,
        model,
        resource: StateVector::zero(ring.dims()),
        encoder_a: enc(&p_a, c0)?,
        encoder_b: enc(&p_b, c1)?,
        decoder_a: dec_a,
        decoder_b: dec_b,
        dim_a: 2,
        dim_b: 2,
        tau,
    };
    let run = protocol::nlqc_choi(&spec, dec)?;
    let target = Channel::unitary(vec![2, 2], gamma)?.choi();
    let (measured_lower, _) = choi_diamond_bounds(run.output.matrix(), &target, 4)?;
    let certificate = compose_certificate(eps_enc, eps_rec, eps_dyn, eps_spread, None)?;
    Ok(EndToEndReport {
        config: cfg.clone(),
        tau,
        dominated: measured_lower <= certificate.total,
        certificate,
        measured_lower,
        decoder_defects: [defect_a, defect_b],
    })
}

/// Upper bound on `‖R_τ ∘ C̃_τ − id‖◇` with `C̃_τ = Ṽ_τ · Ṽ_τ†`, from the
/// Choi matrix of the composition.
fn reconstruction_error(ring: Ring, v_tau: &CMat, dec_a: &LocalMap, dec_b: &LocalMap) -> Result<f64> {
    let n = ring.n_sites();
    let big = ring.hilbert_dim();
    // Factors: R (4), ring sites 1..=n, Ã (n+1), B̃ (n+2).
    let mut dims = vec![4];
    dims.extend(ring.dims());
    dims.extend([2, 2]);
    let mut amps = vec![linalg::ZERO; 4 * big * 4];
    for i in 0..4 {
        for r in 0..big {
            amps[(i * big + r) * 4] = v_tau[(r, i)] * 0.5;
        }
    }
    for (map, out) in [(dec_a, n + 1), (dec_b, n + 2)] {
        let factors: Vec<usize> = map
            .inputs
            .iter()
            .map(|p| match p {
                Port::Output => out,
                Port::Site(k) => 1 + k,
                Port::Input => unreachable!("decoders read no input register"),
            })
            .collect();
        qcore::apply_local(&mut amps, &dims, &factors, &map.channel.kraus()[0]);
    }
    let psi = StateVector::new(dims, amps)?;
    let choi = psi.reduced_density(&[0, n + 1, n + 2])?;
    let ideal = Channel::identity(vec![2, 2]).choi();
    let (_, upper) = choi_diamond_bounds(choi.matrix(), &ideal, 4)?;
    Ok(upper)
}
