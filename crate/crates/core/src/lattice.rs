//! Ring geometry, compass regions and the model library (brickwork circuits
//! and nearest-neighbour Hamiltonians).

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::linalg::{self, matmul, C64};
use crate::qcore::{embed, CMat, DenseOperator, StateVector};

/// Largest Hilbert dimension for which full dense matrices are formed.
pub const DENSE_CAP: usize = 1 << 12;

/// Discretized circle of `n_sites` sites with `local_dim` levels each.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ring {
    n_sites: usize,
    local_dim: usize,
}

impl Ring {
    /// Rings need an even site count so the compass halves are exact site sets.
    pub fn new(n_sites: usize, local_dim: usize) -> Result<Self> {
        if n_sites < 4 || n_sites % 2 != 0 {
            return Err(Error::InvalidRing(format!(
                "n_sites = {n_sites}; need an even number ≥ 4"
            )));
        }
        if local_dim < 2 {
            return Err(Error::InvalidRing(format!("local_dim = {local_dim}")));
        }
        Ok(Ring { n_sites, local_dim })
    }

    pub fn qubits(n_sites: usize) -> Result<Self> {
        Ring::new(n_sites, 2)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    /// Whether all four quarters (N∩E etc.) are equal-sized site sets.
    pub fn has_exact_quarters(&self) -> bool {
        self.n_sites % 4 == 0
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n_sites as f64
    }

    pub fn angle(&self, site: usize) -> f64 {
        self.spacing() * (site % self.n_sites) as f64
    }

    /// Arc distance between two sites in lattice steps.
    pub fn steps(&self, a: usize, b: usize) -> usize {
        let d = (a % self.n_sites).abs_diff(b % self.n_sites);
        d.min(self.n_sites - d)
    }

    /// Arc distance between two sites in radians.
    pub fn site_distance(&self, a: usize, b: usize) -> f64 {
        self.steps(a, b) as f64 * self.spacing()
    }

    pub fn dims(&self) -> Vec<usize> {
        vec![self.local_dim; self.n_sites]
    }

    pub fn hilbert_dim(&self) -> usize {
        self.local_dim.pow(self.n_sites as u32)
    }

    pub fn all(&self) -> Region {
        Region::from_sites(*self, 0..self.n_sites)
    }
}

/// Set of ring sites stored as disjoint maximal arcs `[start, start + len)`
/// taken modulo the ring size.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    ring_sites: usize,
    arcs: Vec<(usize, usize)>,
}

impl Region {
    pub fn from_sites(ring: Ring, sites: impl IntoIterator<Item = usize>) -> Self {
        let n = ring.n_sites;
        let mut mark = vec![false; n];
        for s in sites {
            mark[s % n] = true;
        }
        Region {
            ring_sites: n,
            arcs: arcs_from_marks(&mark),
        }
    }

    pub fn empty(ring: Ring) -> Self {
        Region {
            ring_sites: ring.n_sites,
            arcs: Vec::new(),
        }
    }

    /// Canonical arcs: sorted by start, merged, with a wrapping arc last.
    pub fn arcs(&self) -> &[(usize, usize)] {
        &self.arcs
    }

    pub fn sites(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .arcs
            .iter()
            .flat_map(|&(s, l)| (s..s + l).map(|k| k % self.ring_sites))
            .collect();
        v.sort_unstable();
        v
    }

    pub fn len(&self) -> usize {
        self.arcs.iter().map(|a| a.1).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }

    pub fn contains(&self, site: usize) -> bool {
        let site = site % self.ring_sites;
        self.arcs.iter().any(|&(s, l)| {
            let off = (site + self.ring_sites - s) % self.ring_sites;
            off < l
        })
    }

    fn marks(&self) -> Vec<bool> {
        let mut m = vec![false; self.ring_sites];
        for s in self.sites() {
            m[s] = true;
        }
        m
    }

    fn with_marks(&self, m: Vec<bool>) -> Region {
        Region {
            ring_sites: self.ring_sites,
            arcs: arcs_from_marks(&m),
        }
    }

    pub fn union(&self, other: &Region) -> Region {
        let (a, b) = (self.marks(), other.marks());
        self.with_marks(a.iter().zip(&b).map(|(x, y)| *x || *y).collect())
    }

    pub fn intersection(&self, other: &Region) -> Region {
        let (a, b) = (self.marks(), other.marks());
        self.with_marks(a.iter().zip(&b).map(|(x, y)| *x && *y).collect())
    }

    pub fn complement(&self) -> Region {
        self.with_marks(self.marks().into_iter().map(|x| !x).collect())
    }

    pub fn is_subset(&self, other: &Region) -> bool {
        self.sites().iter().all(|&s| other.contains(s))
    }
}

fn arcs_from_marks(mark: &[bool]) -> Vec<(usize, usize)> {
    let n = mark.len();
    if mark.iter().all(|&m| m) {
        return vec![(0, n)];
    }
    let mut arcs = Vec::new();
    let mut k = 0;
    while k < n {
        if mark[k] {
            let start = k;
            while k < n && mark[k] {
                k += 1;
            }
            arcs.push((start, k - start));
        } else {
            k += 1;
        }
    }
    // Merge an arc touching site n-1 with one starting at 0.
    if arcs.len() >= 2 {
        let first = arcs[0];
        let last = *arcs.last().unwrap();
        if first.0 == 0 && last.0 + last.1 == n {
            arcs.remove(0);
            let l = arcs.last_mut().unwrap();
            l.1 += first.1;
        }
    }
    arcs
}

/// The four compass halves.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quarters {
    pub w: Region,
    pub e: Region,
    pub n: Region,
    pub s: Region,
}

/// `W = [−π, 0)`, `E = [0, π)`, `N = [−π/2, π/2)`, `S = [π/2, −π/2)`.
pub fn quarter_regions(ring: Ring) -> Quarters {
    let n = ring.n_sites;
    // Site angle 2πk/n compared against multiples of π/2 in exact arithmetic.
    let w = Region::from_sites(ring, (0..n).filter(|&k| 2 * k >= n));
    let e = Region::from_sites(ring, (0..n).filter(|&k| 2 * k < n));
    let north = Region::from_sites(ring, (0..n).filter(|&k| 4 * k < n || 4 * k >= 3 * n));
    let s = north.complement();
    Quarters { w, e, n: north, s }
}

/// Minimum arc distance (radians) between two regions; 0 if they intersect.
pub fn region_distance(ring: Ring, r1: &Region, r2: &Region) -> Result<f64> {
    if r1.is_empty() || r2.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let a = r1.sites();
    let b = r2.sites();
    let steps = a
        .iter()
        .flat_map(|&x| b.iter().map(move |&y| ring.steps(x, y)))
        .min()
        .unwrap();
    Ok(steps as f64 * ring.spacing())
}

/// Two-site gate in a brickwork layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub sites: [usize; 2],
    #[serde(with = "matrix_serde")]
    pub unitary: CMat,
}

/// Local Hamiltonian term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub sites: Vec<usize>,
    #[serde(with = "matrix_serde")]
    pub matrix: CMat,
}

/// Lattice dynamics: a brickwork circuit or a time-independent local Hamiltonian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ModelSpec {
    BrickworkCircuit { layers: Vec<Vec<Gate>> },
    LocalHamiltonian { terms: Vec<Term>, time: f64 },
}

impl ModelSpec {
    pub fn empty_circuit() -> Self {
        ModelSpec::BrickworkCircuit { layers: Vec::new() }
    }

    /// Checks hermiticity/unitarity and the locality of terms and gates.
    pub fn validate(&self, ring: Ring) -> Result<()> {
        let d = ring.local_dim;
        match self {
            ModelSpec::BrickworkCircuit { layers } => {
                for (li, layer) in layers.iter().enumerate() {
                    let mut used = Vec::new();
                    for g in layer {
                        let [a, b] = g.sites;
                        if a >= ring.n_sites || b >= ring.n_sites || ring.steps(a, b) != 1 {
                            return Err(Error::Invalid(format!(
                                "layer {li}: gate on {a},{b} is not nearest-neighbour"
                            )));
                        }
                        if used.contains(&a) || used.contains(&b) {
                            return Err(Error::Invalid(format!("layer {li}: overlapping gates")));
                        }
                        used.extend([a, b]);
                        if g.unitary.nrows() != d * d || g.unitary.ncols() != d * d {
                            return Err(Error::DimensionMismatch("gate matrix".into()));
                        }
                        let defect = linalg::isometry_defect(&g.unitary);
                        if defect > 1e-10 {
                            return Err(Error::NotUnitary { defect });
                        }
                    }
                }
            }
            ModelSpec::LocalHamiltonian { terms, .. } => {
                for t in terms {
                    if t.sites.is_empty() || t.sites.len() > 2 {
                        return Err(Error::Invalid("terms act on one or two sites".into()));
                    }
                    if t.sites.iter().any(|&s| s >= ring.n_sites) {
                        return Err(Error::Invalid("term site out of range".into()));
                    }
                    if t.sites.len() == 2 && ring.steps(t.sites[0], t.sites[1]) != 1 {
                        return Err(Error::Invalid("two-site terms must be nearest-neighbour".into()));
                    }
                    let dim = d.pow(t.sites.len() as u32);
                    if t.matrix.nrows() != dim || t.matrix.ncols() != dim {
                        return Err(Error::DimensionMismatch("term matrix".into()));
                    }
                    let herm = linalg::frobenius(&(&t.matrix - t.matrix.adjoint()));
                    if herm > 1e-12 {
                        return Err(Error::Invalid(format!("term not hermitian ({herm:e})")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Same Hamiltonian at another time; circuits are returned unchanged.
    pub fn at_time(&self, t: f64) -> ModelSpec {
        match self {
            ModelSpec::LocalHamiltonian { terms, .. } => ModelSpec::LocalHamiltonian {
                terms: terms.clone(),
                time: t,
            },
            other => other.clone(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            ModelSpec::BrickworkCircuit { layers } => layers.len(),
            ModelSpec::LocalHamiltonian { .. } => 0,
        }
    }
}

/// Transverse-field Ising ring `H = −J Σ Z_i Z_{i+1} − h Σ X_i`.
pub fn tfim(ring: Ring, j: f64, h: f64, time: f64) -> ModelSpec {
    let zz = linalg::kron(&linalg::pauli(3), &linalg::pauli(3)) * C64::new(-j, 0.0);
    let x = linalg::pauli(1) * C64::new(-h, 0.0);
    let n = ring.n_sites;
    let mut terms = Vec::with_capacity(2 * n);
    for k in 0..n {
        terms.push(Term {
            sites: vec![k, (k + 1) % n],
            matrix: zz.clone(),
        });
        terms.push(Term {
            sites: vec![k],
            matrix: x.clone(),
        });
    }
    ModelSpec::LocalHamiltonian { terms, time }
}

/// Dense Hamiltonian of a local model.
pub fn hamiltonian_matrix(terms: &[Term], ring: Ring) -> Result<CMat> {
    let dim = ring.hilbert_dim();
    if dim > DENSE_CAP {
        return Err(Error::CapExceeded { dim, cap: DENSE_CAP });
    }
    let dims = ring.dims();
    let mut h = CMat::zeros(dim, dim);
    for t in terms {
        let op = DenseOperator::new(
            t.sites.clone(),
            vec![ring.local_dim; t.sites.len()],
            t.matrix.clone(),
        )?;
        h += embed(&op, &dims)?.matrix();
    }
    Ok(h)
}

/// Full unitary of the model (dense, capped at [`DENSE_CAP`]).
pub fn evolve_model(spec: &ModelSpec, ring: Ring) -> Result<DenseOperator> {
    spec.validate(ring)?;
    let dim = ring.hilbert_dim();
    if dim > DENSE_CAP {
        return Err(Error::CapExceeded { dim, cap: DENSE_CAP });
    }
    let dims = ring.dims();
    let all: Vec<usize> = (0..ring.n_sites).collect();
    let u = match spec {
        ModelSpec::BrickworkCircuit { layers } => {
            let mut u = linalg::identity(dim);
            for layer in layers {
                for g in layer {
                    let op = DenseOperator::new(
                        g.sites.to_vec(),
                        vec![ring.local_dim; 2],
                        g.unitary.clone(),
                    )?;
                    u = matmul(embed(&op, &dims)?.matrix(), &u);
                }
            }
            u
        }
        ModelSpec::LocalHamiltonian { terms, time } => {
            let h = hamiltonian_matrix(terms, ring)?;
            linalg::expm(&(h * C64::new(0.0, -time)))
        }
    };
    DenseOperator::new(all, dims, u)
}

/// Applies the model's dynamics to a state vector without forming dense
/// matrices (brickwork gate by gate, Hamiltonians by stepped Taylor series).
pub fn evolve_state(spec: &ModelSpec, ring: Ring, psi: &StateVector) -> Result<StateVector> {
    spec.validate(ring)?;
    match spec {
        ModelSpec::BrickworkCircuit { layers } => {
            let mut out = psi.clone();
            for layer in layers {
                for g in layer {
                    let op = DenseOperator::new(
                        g.sites.to_vec(),
                        vec![ring.local_dim; 2],
                        g.unitary.clone(),
                    )?;
                    out.apply(&op)?;
                }
            }
            Ok(out)
        }
        ModelSpec::LocalHamiltonian { terms, time } => {
            let amps = propagate(terms, ring, psi.amplitudes(), *time);
            StateVector::normalized(psi.dims().to_vec(), amps)
        }
    }
}

/// `H|ψ⟩` for a sum of local terms.
pub fn apply_hamiltonian(terms: &[Term], ring: Ring, amps: &[C64]) -> Vec<C64> {
    let dims = ring.dims();
    let mut out = vec![C64::new(0.0, 0.0); amps.len()];
    for t in terms {
        let mut tmp = amps.to_vec();
        crate::qcore::apply_local(&mut tmp, &dims, &t.sites, &t.matrix);
        for (o, v) in out.iter_mut().zip(tmp) {
            *o += v;
        }
    }
    out
}

/// `e^{−iHt}|ψ⟩` by Taylor series on steps with ‖H‖·dt ≤ 2.
pub fn propagate(terms: &[Term], ring: Ring, amps: &[C64], t: f64) -> Vec<C64> {
    let hnorm: f64 = terms.iter().map(|x| linalg::op_norm(&x.matrix)).sum();
    if t == 0.0 {
        return amps.to_vec();
    }
    let steps = ((hnorm * t.abs()) / 2.0).ceil().max(1.0) as usize;
    let dt = t / steps as f64;
    let mut psi = amps.to_vec();
    for _ in 0..steps {
        let mut term = psi.clone();
        let mut acc = psi.clone();
        for k in 1..60 {
            let h = apply_hamiltonian(terms, ring, &term);
            let c = C64::new(0.0, -dt / k as f64);
            term = h.into_iter().map(|z| z * c).collect();
            let size = linalg::vec_norm(&term);
            for (a, b) in acc.iter_mut().zip(&term) {
                *a += b;
            }
            if size < 1e-17 {
                break;
            }
        }
        psi = acc;
    }
    psi
}

/// `depth` layers of Haar-random two-site gates on alternating pairings.
pub fn random_brickwork(ring: Ring, depth: usize, seed: u64) -> ModelSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = ring.n_sites;
    let d = ring.local_dim;
    let layers = (0..depth)
        .map(|layer| {
            let offset = layer % 2;
            (0..n / 2)
                .map(|k| {
                    let a = (2 * k + offset) % n;
                    Gate {
                        sites: [a, (a + 1) % n],
                        unitary: linalg::haar_unitary(d * d, &mut rng),
                    }
                })
                .collect()
        })
        .collect();
    ModelSpec::BrickworkCircuit { layers }
}

/// Serializes complex matrices as rows of `[re, im]` pairs.
pub mod matrix_serde {
    use super::{CMat, C64};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMat, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        if rows.iter().any(|x| x.len() != c) {
            return Err(serde::de::Error::custom("ragged matrix"));
        }
        Ok(CMat::from_fn(r, c, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
    }
}
