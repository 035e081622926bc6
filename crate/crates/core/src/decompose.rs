//! Four-piece decompositions `U ≈ U_N U_S U_W U_E`, by circuit regrouping and
//! by the auxiliary-copy swap-conjugate construction, with residual
//! certificates.
//!
//! Doubled systems index the original sites as factors `0..n` and the copy
//! `S′` as factors `n..2n`, site `j` of the copy being factor `n + j`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{self, quarter_regions, region_distance, ModelSpec, Quarters, Region, Ring};
use crate::qcore::linalg::{self, C64};
use crate::qcore::{self, partial_trace, polar_unitary, CMat, DenseOperator, StateVector};
use crate::spread::{self, LightConeFit};

/// The compass halves, in tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Half {
    W,
    E,
    N,
    S,
}

impl Half {
    pub const ALL: [Half; 4] = [Half::W, Half::E, Half::N, Half::S];

    pub fn region<'a>(&self, q: &'a Quarters) -> &'a Region {
        match self {
            Half::W => &q.w,
            Half::E => &q.e,
            Half::N => &q.n,
            Half::S => &q.s,
        }
    }

    /// The complementary half.
    pub fn far(&self) -> Half {
        match self {
            Half::W => Half::E,
            Half::E => Half::W,
            Half::N => Half::S,
            Half::S => Half::N,
        }
    }

    pub fn party(&self) -> PartyTag {
        match self {
            Half::W => PartyTag::AlicePre,
            Half::E => PartyTag::BobPre,
            Half::N => PartyTag::AlicePost,
            Half::S => PartyTag::BobPost,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Half::W => "U_W",
            Half::E => "U_E",
            Half::N => "U_N",
            Half::S => "U_S",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PartyTag {
    AlicePre,
    BobPre,
    AlicePost,
    BobPost,
}

impl PartyTag {
    pub fn is_pre(&self) -> bool {
        matches!(self, PartyTag::AlicePre | PartyTag::BobPre)
    }
}

/// One quarter-supported unitary.
#[derive(Clone, Debug)]
pub struct Piece {
    pub half: Half,
    pub party: PartyTag,
    pub operator: DenseOperator,
    /// Factor indices the piece is allowed to act on.
    pub declared: Vec<usize>,
}

/// Pieces in product order `[U_N, U_S, U_W, U_E]`: `U_E` acts first.
#[derive(Clone, Debug)]
pub struct QuarterDecomposition {
    pub ring: Ring,
    pub pieces: Vec<Piece>,
    pub uses_aux_copy: bool,
    /// Groups were twirled and re-unitarized.
    pub truncated: bool,
    pub residual_bound: f64,
    pub measured_residual: Option<f64>,
    /// Site groups of the swap construction (empty for circuit regrouping).
    pub groups: Vec<(Half, Vec<usize>)>,
}

impl QuarterDecomposition {
    pub fn factor_dims(&self) -> Vec<usize> {
        let n = if self.uses_aux_copy {
            2 * self.ring.n_sites()
        } else {
            self.ring.n_sites()
        };
        vec![self.ring.local_dim(); n]
    }

    pub fn piece(&self, half: Half) -> Option<&Piece> {
        self.pieces.iter().find(|p| p.half == half)
    }

    /// Applies `U_N U_S U_W U_E` to a state on [`Self::factor_dims`].
    pub fn apply(&self, psi: &mut StateVector) -> Result<()> {
        for p in self.pieces.iter().rev() {
            psi.apply(&p.operator)?;
        }
        Ok(())
    }

    pub fn with_certificate(mut self, bound: f64) -> Self {
        self.residual_bound = bound;
        self
    }

    /// JSON-friendly manifest.
    pub fn manifest(&self) -> DecompositionManifest {
        DecompositionManifest {
            n_sites: self.ring.n_sites(),
            uses_aux_copy: self.uses_aux_copy,
            truncated: self.truncated,
            order: self.pieces.iter().map(|p| p.half.name().to_string()).collect(),
            pieces: self
                .pieces
                .iter()
                .map(|p| PieceManifest {
                    name: p.half.name().to_string(),
                    party: p.party,
                    support: p.operator.support().to_vec(),
                    declared: p.declared.clone(),
                })
                .collect(),
            groups: self.groups.clone(),
            residual_bound: self.residual_bound,
            measured_residual: self.measured_residual,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PieceManifest {
    pub name: String,
    pub party: PartyTag,
    pub support: Vec<usize>,
    pub declared: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionManifest {
    pub n_sites: usize,
    pub uses_aux_copy: bool,
    pub truncated: bool,
    pub order: Vec<String>,
    pub pieces: Vec<PieceManifest>,
    pub groups: Vec<(Half, Vec<usize>)>,
    pub residual_bound: f64,
    pub measured_residual: Option<f64>,
}

/// A gate for causal regrouping: the registers it touches and the ring sites
/// those registers sit on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GateFootprint {
    pub registers: Vec<usize>,
    pub sites: Vec<usize>,
}

/// Assigns each gate (in time order) to one of the four pieces.
///
/// A gate goes to `U_W`/`U_E` when its sites lie in that half and every
/// earlier gate sharing a register was also assigned there; otherwise it goes
/// to `U_N` or `U_S`, which must then contain its sites.
pub fn assign_gates(gates: &[GateFootprint], ring: Ring) -> Result<Vec<Half>> {
    let q = quarter_regions(ring);
    let inside = |h: Half, g: &GateFootprint| g.sites.iter().all(|&s| h.region(&q).contains(s));
    let mut out: Vec<Half> = Vec::with_capacity(gates.len());
    let mut last_post = std::collections::HashSet::new();
    let mut last_pre: std::collections::HashMap<usize, Half> = std::collections::HashMap::new();
    for (i, g) in gates.iter().enumerate() {
        let blocked = g.registers.iter().any(|r| last_post.contains(r));
        let mut assigned = None;
        if !blocked {
            for h in [Half::W, Half::E] {
                let consistent = g
                    .registers
                    .iter()
                    .all(|r| last_pre.get(r).is_none_or(|&p| p == h));
                if inside(h, g) && consistent {
                    assigned = Some(h);
                    break;
                }
            }
        }
        let h = match assigned {
            Some(h) => h,
            None => {
                if inside(Half::N, g) {
                    Half::N
                } else if inside(Half::S, g) {
                    Half::S
                } else {
                    return Err(Error::UnassignableGate {
                        gate: i,
                        sites: g.sites.clone(),
                    });
                }
            }
        };
        for &r in &g.registers {
            if h == Half::N || h == Half::S {
                last_post.insert(r);
            } else {
                last_pre.insert(r, h);
            }
        }
        out.push(h);
    }
    Ok(out)
}

/// Regroups a brickwork circuit into four pieces on the undoubled ring.
pub fn decompose_circuit(spec: &ModelSpec, ring: Ring) -> Result<QuarterDecomposition> {
    let layers = match spec {
        ModelSpec::BrickworkCircuit { layers } => layers,
        _ => return Err(Error::Invalid("decompose_circuit needs a brickwork circuit".into())),
    };
    spec.validate(ring)?;
    let gates: Vec<&lattice::Gate> = layers.iter().flatten().collect();
    let footprints: Vec<GateFootprint> = gates
        .iter()
        .map(|g| GateFootprint {
            registers: g.sites.to_vec(),
            sites: g.sites.to_vec(),
        })
        .collect();
    let assignment = assign_gates(&footprints, ring)?;
    let q = quarter_regions(ring);
    let d = ring.local_dim();
    let mut pieces = Vec::new();
    for half in [Half::N, Half::S, Half::W, Half::E] {
        let sites = half.region(&q).sites();
        let dims = vec![d; sites.len()];
        let mut op = DenseOperator::identity(sites.clone(), dims.clone())?;
        for (g, _) in gates.iter().zip(&assignment).filter(|(_, &h)| h == half) {
            let gate = DenseOperator::new(g.sites.to_vec(), vec![d; 2], g.unitary.clone())?;
            op = gate.extend_to(&sites, &dims)?.compose(&op)?;
        }
        pieces.push(Piece {
            half,
            party: half.party(),
            operator: op,
            declared: sites,
        });
    }
    let mut dec = QuarterDecomposition {
        ring,
        pieces,
        uses_aux_copy: false,
        truncated: false,
        residual_bound: 0.0,
        measured_residual: None,
        groups: Vec::new(),
    };
    let u = lattice::evolve_model(spec, ring)?;
    let assembled = assemble_dense(&dec)?;
    let diff = assembled.matrix() - u.matrix();
    dec.measured_residual = Some(linalg::op_norm(&diff));
    Ok(dec)
}

/// Dense product `U_N U_S U_W U_E` on the decomposition's factors.
pub fn assemble_dense(dec: &QuarterDecomposition) -> Result<DenseOperator> {
    let dims = dec.factor_dims();
    let all: Vec<usize> = (0..dims.len()).collect();
    let mut acc = DenseOperator::identity(all.clone(), dims.clone())?;
    for p in dec.pieces.iter().rev() {
        acc = p.operator.extend_to(&all, &dims)?.compose(&acc)?;
    }
    Ok(acc)
}

/// Assigns each site to a half containing it whose far half is as distant as
/// possible; ties go W, E, N, S.
pub fn site_groups(ring: Ring) -> Result<Vec<(Half, Vec<usize>)>> {
    let q = quarter_regions(ring);
    let mut groups: Vec<(Half, Vec<usize>)> = Half::ALL.iter().map(|&h| (h, Vec::new())).collect();
    for phi in 0..ring.n_sites() {
        let single = Region::from_sites(ring, [phi]);
        let mut best: Option<(Half, f64)> = None;
        for h in Half::ALL {
            if !h.region(&q).contains(phi) {
                continue;
            }
            let dist = region_distance(ring, &single, h.far().region(&q))?;
            if best.is_none_or(|(_, b)| dist > b + 1e-12) {
                best = Some((h, dist));
            }
        }
        let (h, _) = best.expect("every site lies in two halves");
        groups.iter_mut().find(|g| g.0 == h).unwrap().1.push(phi);
    }
    Ok(groups)
}

/// Smallest distance between a site group and the far half of its assigned half.
pub fn group_margin(ring: Ring) -> Result<f64> {
    let q = quarter_regions(ring);
    let mut m = f64::INFINITY;
    for (h, sites) in site_groups(ring)? {
        if sites.is_empty() {
            continue;
        }
        let g = Region::from_sites(ring, sites);
        m = m.min(region_distance(ring, &g, h.far().region(&q))?);
    }
    Ok(m)
}

/// Generalized Pauli basis `X^a Z^b` on `k` qudits of dimension `d`.
fn pauli_basis(d: usize, k: usize) -> Vec<CMat> {
    let x = linalg::shift(d);
    let z = linalg::clock(d);
    let mut single = Vec::new();
    for a in 0..d {
        for b in 0..d {
            let mut m = linalg::identity(d);
            for _ in 0..a {
                m = linalg::matmul(&x, &m);
            }
            for _ in 0..b {
                m = linalg::matmul(&m, &z);
            }
            single.push(m);
        }
    }
    let mut out = vec![linalg::identity(1)];
    for _ in 0..k {
        out = out
            .iter()
            .flat_map(|acc| single.iter().map(move |p| linalg::kron(acc, p)))
            .collect();
    }
    out
}

/// Output of the swap construction before packaging.
struct GroupOperator {
    half: Half,
    op: DenseOperator,
    tail: f64,
}

/// `K_G = ∏_{φ∈G} U′ Σ_φ U′†`, restricted to `G ∪ Q′` by a twirl over the
/// copy's far half. Uses `Σ = d^{-1} Σ_P P ⊗ P†` so that
/// `K_G = d^{-|G|} Σ_P P_G ⊗ (U P† U†)_{S′}`.
fn group_operator(u: &CMat, ring: Ring, half: Half, sites: &[usize]) -> Result<GroupOperator> {
    let n = ring.n_sites();
    let d = ring.local_dim();
    let dims = ring.dims();
    let q = quarter_regions(ring);
    let keep = half.region(&q).sites();
    let far = half.far().region(&q).sites();
    let basis = pauli_basis(d, sites.len());
    let k = sites.len();
    let pieces: Vec<(CMat, CMat, f64)> = basis
        .par_iter()
        .map(|p| -> Result<(CMat, CMat, f64)> {
            let local = DenseOperator::new(sites.to_vec(), vec![d; k], p.adjoint())?;
            let full = qcore::embed(&local, &dims)?;
            let image = DenseOperator::new((0..n).collect(), dims.clone(), linalg::conjugate(u, full.matrix()))?;
            let reduced = partial_trace(&image, &far)?;
            let scaled = reduced.scale(C64::new(1.0 / (d.pow(far.len() as u32)) as f64, 0.0));
            let back = scaled.extend_to(&(0..n).collect::<Vec<_>>(), &dims)?;
            let tail = linalg::op_norm(&(image.matrix() - back.matrix()));
            Ok((p.clone(), scaled.into_matrix(), tail))
        })
        .collect::<Result<Vec<_>>>()?;
    let dim = d.pow((k + keep.len()) as u32);
    let mut acc = CMat::zeros(dim, dim);
    let mut tail = 0.0f64;
    for (p, img, t) in &pieces {
        acc += linalg::kron(p, img);
        tail = tail.max(*t);
    }
    acc *= C64::new(1.0 / d.pow(k as u32) as f64, 0.0);
    let mut support: Vec<usize> = sites.to_vec();
    support.extend(keep.iter().map(|&j| n + j));
    let op = DenseOperator::new(support, vec![d; k + keep.len()], acc)?;
    Ok(GroupOperator {
        half,
        op,
        tail,
    })
}

/// Swap of site `j` with its copy `n + j`, for every `j` in `sites`.
fn group_swap(ring: Ring, sites: &[usize]) -> Result<DenseOperator> {
    let n = ring.n_sites();
    let d = ring.local_dim();
    let mut acc: Option<DenseOperator> = None;
    for &j in sites {
        let s = DenseOperator::new(vec![j, n + j], vec![d, d], linalg::swap_qudits(d))?;
        acc = Some(match acc {
            None => s,
            Some(a) => a.compose(&s)?,
        });
    }
    Ok(acc.unwrap_or(DenseOperator::identity(Vec::new(), Vec::new())?))
}

/// Swap-conjugate decomposition on the doubled ring. Without truncation the
/// unitary must have exact spread ≤ 2π/8; with truncation each group is
/// twirled onto its half and re-unitarized by polar decomposition.
pub fn decompose_swap(u: &DenseOperator, ring: Ring, truncate: bool) -> Result<QuarterDecomposition> {
    if u.support().len() != ring.n_sites() || u.dims() != ring.dims().as_slice() {
        return Err(Error::DimensionMismatch("unitary must act on the full ring".into()));
    }
    if !truncate {
        let s = spread::exact_spread(u, ring)?;
        if s > 2.0 * PI / 8.0 + 1e-12 {
            return Err(Error::Precondition(format!(
                "exact spread {s:.6} exceeds 2π/8; use the truncated path"
            )));
        }
    }
    let n = ring.n_sites();
    let q = quarter_regions(ring);
    let groups = site_groups(ring)?;
    let ops: Vec<GroupOperator> = groups
        .iter()
        .map(|(h, sites)| group_operator(u.matrix(), ring, *h, sites))
        .collect::<Result<_>>()?;
    let mut pieces = Vec::new();
    for half in [Half::N, Half::S, Half::W, Half::E] {
        let g = ops.iter().find(|g| g.half == half).unwrap();
        let k = if truncate {
            polar_unitary(&g.op)?
        } else {
            if g.tail > 1e-9 {
                return Err(Error::Precondition(format!(
                    "{} has a tail of norm {:e} on the far half",
                    half.name(),
                    g.tail
                )));
            }
            g.op.clone()
        };
        let region = half.region(&q).sites();
        // N and S together cover the ring, so their swaps make up the
        // global exchange of S and S′.
        let op = if half == Half::N || half == Half::S {
            group_swap(ring, &region)?.compose(&k)?
        } else {
            k
        };
        let mut declared = region.clone();
        declared.extend(region.iter().map(|&j| n + j));
        pieces.push(Piece {
            half,
            party: half.party(),
            operator: op,
            declared,
        });
    }
    Ok(QuarterDecomposition {
        ring,
        pieces,
        uses_aux_copy: true,
        truncated: truncate,
        residual_bound: if truncate { f64::INFINITY } else { 0.0 },
        measured_residual: None,
        groups,
    })
}

/// Evolves the model, decomposes it, and attaches the light-cone certificate
/// when a fit is supplied.
pub fn decompose_swap_model(
    spec: &ModelSpec,
    ring: Ring,
    truncate: bool,
    fit: Option<&LightConeFit>,
) -> Result<QuarterDecomposition> {
    let u = lattice::evolve_model(spec, ring)?;
    let dec = decompose_swap(&u, ring, truncate)?;
    match (spec, fit) {
        (ModelSpec::LocalHamiltonian { time, .. }, Some(f)) if truncate => {
            let eps = certify_residual(f, *time, ring)?;
            Ok(dec.with_certificate(eps))
        }
        _ => Ok(dec),
    }
}

/// `ε_spread = 4 a exp(−b (2π/8 − v t))`; `+∞` once `v t ≥ 2π/8`.
pub fn certify_residual(fit: &LightConeFit, t: f64, ring: Ring) -> Result<f64> {
    let margin = 2.0 * PI / 8.0;
    if group_margin(ring)? < margin - 1e-12 {
        return Err(Error::Precondition(
            "ring geometry leaves a group closer than 2π/8 to its far half".into(),
        ));
    }
    if fit.v * t >= margin {
        return Ok(f64::INFINITY);
    }
    Ok(4.0 * fit.a * (-fit.b * (margin - fit.v * t)).exp())
}

/// Random inputs for verification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputEnsemble {
    Product,
    Haar,
}

/// Max over seeded random `|ψ⟩` of the distance between the assembled pieces
/// and `U ⊗ U†` (or `U`) on `|ψ⟩|0⟩`, after checking each piece's support.
pub fn verify_decomposition(
    dec: &QuarterDecomposition,
    u: &DenseOperator,
    ring: Ring,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    verify_decomposition_with(dec, u, ring, trials, seed, InputEnsemble::Product)
}

pub fn verify_decomposition_with(
    dec: &QuarterDecomposition,
    u: &DenseOperator,
    ring: Ring,
    trials: usize,
    seed: u64,
    ensemble: InputEnsemble,
) -> Result<f64> {
    check_piece_supports(dec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let copy = if dec.uses_aux_copy {
        let mut z = StateVector::zero(ring.dims());
        z.apply(&u.adjoint())?;
        Some(z)
    } else {
        None
    };
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let psi = match ensemble {
            InputEnsemble::Product => StateVector::random_product(ring.dims(), &mut rng),
            InputEnsemble::Haar => StateVector::random(ring.dims(), &mut rng),
        };
        let mut u_psi = psi.clone();
        u_psi.apply(u)?;
        let diff = match &copy {
            Some(c) => {
                let mut state = psi.tensor(&StateVector::zero(ring.dims()));
                dec.apply(&mut state)?;
                if dec.truncated {
                    // The copy's evolution is not pinned: compare against the
                    // closest `U|ψ⟩ ⊗ |χ⟩`, at distance `√(2 − 2c)`.
                    let c = system_overlap(&state, &u_psi);
                    (2.0 - 2.0 * c).max(0.0).sqrt()
                } else {
                    vec_distance(&state, &u_psi.tensor(c))
                }
            }
            None => {
                let mut state = psi;
                dec.apply(&mut state)?;
                vec_distance(&state, &u_psi)
            }
        };
        worst = worst.max(diff);
    }
    Ok(worst)
}

fn vec_distance(a: &StateVector, b: &StateVector) -> f64 {
    a.amplitudes()
        .iter()
        .zip(b.amplitudes())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// `‖(⟨φ| ⊗ 1)|Φ⟩‖` for `|Φ⟩` on `S ⊗ S′` and `|φ⟩` on `S`.
fn system_overlap(big: &StateVector, phi: &StateVector) -> f64 {
    let d = phi.amplitudes().len();
    let amps = big.amplitudes();
    (0..d)
        .map(|j| {
            phi.amplitudes()
                .iter()
                .enumerate()
                .map(|(i, p)| p.conj() * amps[i * d + j])
                .sum::<C64>()
                .norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

/// Each piece must commute with every single-site generator outside its
/// declared factors.
pub fn check_piece_supports(dec: &QuarterDecomposition) -> Result<()> {
    for p in &dec.pieces {
        let op = &p.operator;
        let outside: Vec<usize> = op
            .support()
            .iter()
            .copied()
            .filter(|f| !p.declared.contains(f))
            .collect();
        if outside.is_empty() {
            continue;
        }
        let acts = spread::operator_support(op.matrix(), op.dims(), 1e-9);
        for (pos, &f) in op.support().iter().enumerate() {
            if outside.contains(&f) && acts.contains(&pos) {
                return Err(Error::SupportViolation {
                    piece: p.half.name().to_string(),
                    witness: format!("single-site Pauli on factor {f} fails to commute"),
                });
            }
        }
    }
    Ok(())
}

/// Upper bound `2‖W_1 − W_2‖_F` on the diamond distance between the channels
/// on `S` of a doubled decomposition (copy discarded) and of `U_c`, with
/// `W_1 = V(· ⊗ |0⟩)` and `W_2 = U_c ⊗ U_c†|0⟩`, accumulated over basis inputs.
pub fn channel_agreement(swap: &QuarterDecomposition, u_c: &DenseOperator, ring: Ring) -> Result<f64> {
    if !swap.uses_aux_copy {
        return Err(Error::Invalid("first argument must use the auxiliary copy".into()));
    }
    let dim = ring.hilbert_dim();
    let dims = ring.dims();
    let mut copy = StateVector::zero(dims.clone());
    copy.apply(&u_c.adjoint())?;
    let zero = StateVector::zero(dims.clone());
    let total: f64 = (0..dim)
        .map(|i| -> Result<f64> {
            let basis = StateVector::basis(dims.clone(), &qcore::tensor::digits(i, &dims))?;
            let mut state = basis.tensor(&zero);
            swap.apply(&mut state)?;
            let mut t = basis;
            t.apply(u_c)?;
            let target = t.tensor(&copy);
            Ok(state
                .amplitudes()
                .iter()
                .zip(target.amplitudes())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>())
        })
        .sum::<Result<f64>>()?;
    Ok(2.0 * total.sqrt())
}
