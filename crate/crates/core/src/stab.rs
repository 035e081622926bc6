//! Stabilizer engine: Pauli arithmetic over GF(2) with phases mod 4, Clifford
//! tableaus, codes, cleaning, and entropies of stabilizer states.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::linalg::{self, C64};
use crate::qcore::{CMat, StateVector};

/// Packed bit vector.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Bits {
    len: usize,
    words: Vec<u64>,
}

impl Bits {
    pub fn zeros(len: usize) -> Self {
        Bits {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        let m = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= m;
        } else {
            self.words[i / 64] &= !m;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn xor_assign(&mut self, o: &Bits) {
        for (a, b) in self.words.iter_mut().zip(&o.words) {
            *a ^= b;
        }
    }

    pub fn and_count(&self, o: &Bits) -> u32 {
        self.words
            .iter()
            .zip(&o.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum()
    }

    pub fn count(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&i| self.get(i))
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            write!(f, "{}", self.get(i) as u8)?;
        }
        Ok(())
    }
}

/// `i^phase · ∏_q X_q^{x_q} Z_q^{z_q}` (X to the left of Z on each qubit).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Pauli {
    pub x: Bits,
    pub z: Bits,
    pub phase: u8,
}

impl Pauli {
    pub fn identity(n: usize) -> Self {
        Pauli {
            x: Bits::zeros(n),
            z: Bits::zeros(n),
            phase: 0,
        }
    }

    /// Hermitian single-qubit Pauli `k ∈ {0: I, 1: X, 2: Y, 3: Z}` on qubit `q`.
    pub fn single(n: usize, q: usize, k: u8) -> Self {
        let mut p = Pauli::identity(n);
        match k {
            1 => p.x.set(q, true),
            2 => {
                p.x.set(q, true);
                p.z.set(q, true);
                p.phase = 1;
            }
            3 => p.z.set(q, true),
            _ => {}
        }
        p
    }

    pub fn x_on(n: usize, qubits: impl IntoIterator<Item = usize>) -> Self {
        let mut p = Pauli::identity(n);
        for q in qubits {
            p.x.set(q, true);
        }
        p
    }

    pub fn z_on(n: usize, qubits: impl IntoIterator<Item = usize>) -> Self {
        let mut p = Pauli::identity(n);
        for q in qubits {
            p.z.set(q, true);
        }
        p
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Letter on qubit `q`: 0 I, 1 X, 2 Y, 3 Z.
    pub fn letter(&self, q: usize) -> u8 {
        match (self.x.get(q), self.z.get(q)) {
            (false, false) => 0,
            (true, false) => 1,
            (true, true) => 2,
            (false, true) => 3,
        }
    }

    pub fn weight(&self) -> usize {
        (0..self.n()).filter(|&q| self.x.get(q) || self.z.get(q)).count()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.n()).filter(|&q| self.x.get(q) || self.z.get(q)).collect()
    }

    pub fn is_identity_up_to_phase(&self) -> bool {
        self.x.is_zero() && self.z.is_zero()
    }

    /// Phase relative to the Hermitian form: `self = i^k · (±1 Hermitian)`.
    /// Returns the sign `s` with `self = (−1)^s · H`, or `None` if not Hermitian.
    pub fn hermitian_sign(&self) -> Option<u8> {
        let y = self.x.and_count(&self.z) as u8 % 4;
        // X^x Z^z = i^{-y} (Hermitian product), so self = i^{phase - y} H.
        let rel = (self.phase + 4 - y) % 4;
        match rel {
            0 => Some(0),
            2 => Some(1),
            _ => None,
        }
    }

    pub fn commutes(&self, o: &Pauli) -> bool {
        (self.x.and_count(&o.z) + self.z.and_count(&o.x)) % 2 == 0
    }

    /// Operator product `self · o`.
    pub fn mul(&self, o: &Pauli) -> Pauli {
        let mut x = self.x.clone();
        x.xor_assign(&o.x);
        let mut z = self.z.clone();
        z.xor_assign(&o.z);
        let swap = self.z.and_count(&o.x) as u8 % 2;
        Pauli {
            x,
            z,
            phase: (self.phase + o.phase + 2 * swap) % 4,
        }
    }

    pub fn mul_phase(&self, k: u8) -> Pauli {
        let mut p = self.clone();
        p.phase = (p.phase + k) % 4;
        p
    }

    /// Hermitian conjugate.
    pub fn adjoint(&self) -> Pauli {
        // (X^x Z^z)† = Z^z X^x = (−1)^{x·z} X^x Z^z
        let y = self.x.and_count(&self.z) as u8 % 2;
        Pauli {
            x: self.x.clone(),
            z: self.z.clone(),
            phase: ((4 - self.phase) + 2 * y) % 4,
        }
    }

    /// Restriction to `qubits` (kept in the given order), phase reset to the
    /// Hermitian form on the restricted Pauli.
    pub fn restrict(&self, qubits: &[usize]) -> Pauli {
        let mut p = Pauli::identity(qubits.len());
        for (i, &q) in qubits.iter().enumerate() {
            p.x.set(i, self.x.get(q));
            p.z.set(i, self.z.get(q));
        }
        p.phase = p.x.and_count(&p.z) as u8 % 4;
        p
    }

    /// Places this Pauli onto qubits `map[i]` of an `n`-qubit register.
    pub fn embed(&self, n: usize, map: &[usize]) -> Pauli {
        let mut p = Pauli::identity(n);
        for (i, &q) in map.iter().enumerate() {
            p.x.set(q, self.x.get(i));
            p.z.set(q, self.z.get(i));
        }
        p.phase = self.phase;
        p
    }

    /// Concatenated vector `(x | z)` of length `2n`.
    pub fn symplectic(&self) -> Bits {
        let n = self.n();
        let mut b = Bits::zeros(2 * n);
        for q in 0..n {
            b.set(q, self.x.get(q));
            b.set(n + q, self.z.get(q));
        }
        b
    }

    /// Dense `2^n × 2^n` matrix (qubit 0 most significant).
    pub fn to_matrix(&self) -> CMat {
        let n = self.n();
        let dim = 1usize << n;
        let mut m = CMat::zeros(dim, dim);
        let mut xmask = 0usize;
        let mut zmask = 0usize;
        for q in 0..n {
            let bit = 1usize << (n - 1 - q);
            if self.x.get(q) {
                xmask |= bit;
            }
            if self.z.get(q) {
                zmask |= bit;
            }
        }
        let ph = phase_c64(self.phase);
        // (X^x Z^z)|j⟩ = (−1)^{z·j} |j ⊕ x⟩
        for j in 0..dim {
            let s = if (zmask & j).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            m[(j ^ xmask, j)] = ph * s;
        }
        m
    }

    /// Applies the Pauli to a qubit state vector in place.
    pub fn apply_to(&self, amps: &mut [C64]) {
        let n = self.n();
        let mut xmask = 0usize;
        let mut zmask = 0usize;
        for q in 0..n {
            let bit = 1usize << (n - 1 - q);
            if self.x.get(q) {
                xmask |= bit;
            }
            if self.z.get(q) {
                zmask |= bit;
            }
        }
        let ph = phase_c64(self.phase);
        let old = amps.to_vec();
        for (j, &a) in old.iter().enumerate() {
            let s = if (zmask & j).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            amps[j ^ xmask] = ph * s * a;
        }
    }
}

pub fn phase_c64(k: u8) -> C64 {
    match k % 4 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

impl fmt::Display for Pauli {
    /// Hermitian-form sign (`+`, `-`, `+i`, `-i`) followed by letters.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let y = self.x.and_count(&self.z) as u8 % 4;
        let rel = (self.phase + 4 - y) % 4;
        let sign = ["+", "+i", "-", "-i"][rel as usize];
        write!(f, "{sign}")?;
        for q in 0..self.n() {
            write!(f, "{}", ['I', 'X', 'Y', 'Z'][self.letter(q) as usize])?;
        }
        Ok(())
    }
}

impl fmt::Debug for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for Pauli {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (rel, body) = if let Some(r) = s.strip_prefix("+i") {
            (1, r)
        } else if let Some(r) = s.strip_prefix("-i") {
            (3, r)
        } else if let Some(r) = s.strip_prefix('+') {
            (0, r)
        } else if let Some(r) = s.strip_prefix('-') {
            (2, r)
        } else {
            (0, s)
        };
        let mut p = Pauli::identity(body.len());
        for (q, c) in body.chars().enumerate() {
            match c {
                'I' | '_' => {}
                'X' => p.x.set(q, true),
                'Y' => {
                    p.x.set(q, true);
                    p.z.set(q, true);
                }
                'Z' => p.z.set(q, true),
                _ => return Err(Error::Invalid(format!("bad Pauli letter {c:?} in {s:?}"))),
            }
        }
        let y = p.x.and_count(&p.z) as u8 % 4;
        p.phase = (rel + y) % 4;
        Ok(p)
    }
}

impl Serialize for Pauli {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Pauli {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Clifford gates acting on qubit indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CliffordGate {
    H(usize),
    S(usize),
    Sdg(usize),
    X(usize),
    Y(usize),
    Z(usize),
    Cnot(usize, usize),
    Cz(usize, usize),
    Swap(usize, usize),
}

impl CliffordGate {
    pub fn qubits(&self) -> Vec<usize> {
        use CliffordGate::*;
        match *self {
            H(q) | S(q) | Sdg(q) | X(q) | Y(q) | Z(q) => vec![q],
            Cnot(a, b) | Cz(a, b) | Swap(a, b) => vec![a, b],
        }
    }

    pub fn inverse(&self) -> CliffordGate {
        use CliffordGate::*;
        match *self {
            S(q) => Sdg(q),
            Sdg(q) => S(q),
            g => g,
        }
    }

    /// Same gate on relabelled qubits.
    pub fn relabel(&self, f: impl Fn(usize) -> usize) -> CliffordGate {
        use CliffordGate::*;
        match *self {
            H(q) => H(f(q)),
            S(q) => S(f(q)),
            Sdg(q) => Sdg(f(q)),
            X(q) => X(f(q)),
            Y(q) => Y(f(q)),
            Z(q) => Z(f(q)),
            Cnot(a, b) => Cnot(f(a), f(b)),
            Cz(a, b) => Cz(f(a), f(b)),
            Swap(a, b) => Swap(f(a), f(b)),
        }
    }

    /// Dense unitary on its own qubits (in [`Self::qubits`] order).
    pub fn matrix(&self) -> CMat {
        use CliffordGate::*;
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let c = |re: f64, im: f64| C64::new(re, im);
        match *self {
            H(_) => CMat::from_row_slice(2, 2, &[c(r, 0.), c(r, 0.), c(r, 0.), c(-r, 0.)]),
            S(_) => CMat::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(0., 1.)]),
            Sdg(_) => CMat::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(0., -1.)]),
            X(_) => linalg::pauli(1),
            Y(_) => linalg::pauli(2),
            Z(_) => linalg::pauli(3),
            Cnot(_, _) => {
                let mut m = CMat::zeros(4, 4);
                for (i, j) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
                    m[(i, j)] = c(1., 0.);
                }
                m
            }
            Cz(_, _) => {
                let mut m = linalg::identity(4);
                m[(3, 3)] = c(-1., 0.);
                m
            }
            Swap(_, _) => linalg::swap2(),
        }
    }

    /// Conjugates `p ↦ G p G†` in place.
    pub fn conjugate(&self, p: &mut Pauli) {
        use CliffordGate::*;
        match *self {
            H(q) => {
                let (x, z) = (p.x.get(q), p.z.get(q));
                if x && z {
                    p.phase = (p.phase + 2) % 4;
                }
                p.x.set(q, z);
                p.z.set(q, x);
            }
            S(q) => {
                if p.x.get(q) {
                    p.phase = (p.phase + 1) % 4;
                    p.z.flip(q);
                }
            }
            Sdg(q) => {
                if p.x.get(q) {
                    p.phase = (p.phase + 3) % 4;
                    p.z.flip(q);
                }
            }
            X(q) => {
                if p.z.get(q) {
                    p.phase = (p.phase + 2) % 4;
                }
            }
            Z(q) => {
                if p.x.get(q) {
                    p.phase = (p.phase + 2) % 4;
                }
            }
            Y(q) => {
                if p.x.get(q) ^ p.z.get(q) {
                    p.phase = (p.phase + 2) % 4;
                }
            }
            Cnot(c, t) => {
                if p.x.get(c) {
                    p.x.flip(t);
                }
                if p.z.get(t) {
                    p.z.flip(c);
                }
            }
            Cz(a, b) => {
                // CZ = H_b CNOT H_b
                H(b).conjugate(p);
                Cnot(a, b).conjugate(p);
                H(b).conjugate(p);
            }
            Swap(a, b) => {
                let (xa, za) = (p.x.get(a), p.z.get(a));
                p.x.set(a, p.x.get(b));
                p.z.set(a, p.z.get(b));
                p.x.set(b, xa);
                p.z.set(b, za);
            }
        }
    }
}

/// Conjugates a Pauli through a gate sequence (first gate applied first).
pub fn conjugate_through(gates: &[CliffordGate], p: &Pauli) -> Pauli {
    let mut q = p.clone();
    for g in gates {
        g.conjugate(&mut q);
    }
    q
}

/// Dense unitary of a Clifford circuit on `n` qubits.
pub fn circuit_matrix(gates: &[CliffordGate], n: usize) -> Result<CMat> {
    use crate::qcore::DenseOperator;
    let dims = vec![2; n];
    let mut acc = linalg::identity(1 << n);
    for g in gates {
        let qs = g.qubits();
        if qs.iter().any(|&q| q >= n) {
            return Err(Error::SupportOutOfRange {
                factor: *qs.iter().max().unwrap(),
                n,
            });
        }
        let op = DenseOperator::new(qs.clone(), vec![2; qs.len()], g.matrix())?;
        let full = crate::qcore::embed(&op, &dims)?;
        acc = linalg::matmul(full.matrix(), &acc);
    }
    Ok(acc)
}

/// Pure stabilizer state: `n` stabilizers and matching destabilizers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tableau {
    n: usize,
    stabilizers: Vec<Pauli>,
    destabilizers: Vec<Pauli>,
}

impl Tableau {
    /// `|0…0⟩`.
    pub fn zero(n: usize) -> Self {
        Tableau {
            n,
            stabilizers: (0..n).map(|q| Pauli::single(n, q, 3)).collect(),
            destabilizers: (0..n).map(|q| Pauli::single(n, q, 1)).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn stabilizers(&self) -> &[Pauli] {
        &self.stabilizers
    }

    pub fn destabilizers(&self) -> &[Pauli] {
        &self.destabilizers
    }

    fn check(&self, g: &CliffordGate) -> Result<()> {
        for q in g.qubits() {
            if q >= self.n {
                return Err(Error::SupportOutOfRange { factor: q, n: self.n });
            }
        }
        if let CliffordGate::Cnot(a, b) | CliffordGate::Cz(a, b) | CliffordGate::Swap(a, b) = g {
            if a == b {
                return Err(Error::DuplicateFactor(*a));
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, g: &CliffordGate) -> Result<()> {
        self.check(g)?;
        for p in self.stabilizers.iter_mut().chain(self.destabilizers.iter_mut()) {
            g.conjugate(p);
        }
        Ok(())
    }

    pub fn apply_all(&mut self, gates: &[CliffordGate]) -> Result<()> {
        for g in gates {
            self.apply(g)?;
        }
        Ok(())
    }

    /// Conjugation by a Pauli (a Pauli "gate").
    pub fn apply_pauli(&mut self, q: &Pauli) -> Result<()> {
        if q.n() != self.n {
            return Err(Error::DimensionMismatch("Pauli length".into()));
        }
        for p in self.stabilizers.iter_mut().chain(self.destabilizers.iter_mut()) {
            if !p.commutes(q) {
                p.phase = (p.phase + 2) % 4;
            }
        }
        Ok(())
    }

    /// `⟨P⟩` for a Pauli `P` (any phase).
    pub fn expectation(&self, p: &Pauli) -> C64 {
        if self.stabilizers.iter().any(|s| !s.commutes(p)) {
            return C64::new(0.0, 0.0);
        }
        // P = c · ∏ s_i over i with d_i anticommuting with P.
        let mut prod = Pauli::identity(self.n);
        for (s, d) in self.stabilizers.iter().zip(&self.destabilizers) {
            if !d.commutes(p) {
                prod = prod.mul(s);
            }
        }
        debug_assert!(prod.x == p.x && prod.z == p.z);
        // P = i^{p.phase − prod.phase} · prod, and ⟨prod⟩ = 1.
        phase_c64((p.phase + 4 - prod.phase) % 4)
    }

    /// Projective measurement of a Hermitian Pauli; returns the outcome bit
    /// (`(−1)^b`), drawing indeterminate outcomes from `rng`.
    pub fn measure<R: Rng + ?Sized>(&mut self, p: &Pauli, rng: &mut R) -> Result<bool> {
        if p.hermitian_sign().is_none() {
            return Err(Error::Invalid(format!("{p} is not Hermitian")));
        }
        let hit = (0..self.n).find(|&i| !self.stabilizers[i].commutes(p));
        match hit {
            None => {
                let e = self.expectation(p);
                Ok(e.re < 0.0)
            }
            Some(k) => {
                let sk = self.stabilizers[k].clone();
                for i in 0..self.n {
                    if i != k && !self.stabilizers[i].commutes(p) {
                        self.stabilizers[i] = self.stabilizers[i].mul(&sk);
                    }
                    if i != k && !self.destabilizers[i].commutes(p) {
                        self.destabilizers[i] = self.destabilizers[i].mul(&sk);
                    }
                }
                self.destabilizers[k] = sk;
                let b: bool = rng.random();
                self.stabilizers[k] = if b { p.mul_phase(2) } else { p.clone() };
                Ok(b)
            }
        }
    }

    /// Dense state vector (up to global phase).
    pub fn to_state_vector(&self) -> Result<StateVector> {
        stabilizer_vector(&self.stabilizers, self.n)
    }

    /// Stabilizer state from `n` independent commuting Hermitian generators.
    /// Destabilizers are reconstructed by symplectic Gram–Schmidt.
    pub fn from_stabilizers(gens: Vec<Pauli>) -> Result<Self> {
        let n = gens.first().map(|g| g.n()).unwrap_or(0);
        if gens.len() != n || gen_rank(&gens) != n {
            return Err(Error::Invalid("need n independent generators".into()));
        }
        check_commuting(&gens)?;
        let destab = destabilizers_for(&gens)?;
        Ok(Tableau {
            n,
            stabilizers: gens,
            destabilizers: destab,
        })
    }
}

/// `apply_clifford` with value semantics.
pub fn apply_clifford(tab: &Tableau, gate: &CliffordGate) -> Result<Tableau> {
    let mut t = tab.clone();
    t.apply(gate)?;
    Ok(t)
}

fn check_commuting(gens: &[Pauli]) -> Result<()> {
    for (i, a) in gens.iter().enumerate() {
        if a.hermitian_sign().is_none() {
            return Err(Error::Invalid(format!("generator {a} is not Hermitian")));
        }
        for b in &gens[i + 1..] {
            if !a.commutes(b) {
                return Err(Error::Invalid(format!("generators {a} and {b} anticommute")));
            }
        }
    }
    Ok(())
}

/// Finds `d_i` with `{d_i, s_i} = 0` and `[d_i, s_j] = [d_i, d_j] = 0`.
fn destabilizers_for(gens: &[Pauli]) -> Result<Vec<Pauli>> {
    let n = gens.len();
    let mut out = solve_dual(gens)?;
    // d_j ← d_j g_i keeps ⟨d_j, g_k⟩ and flips only ⟨d_j, d_i⟩.
    for i in 0..n {
        for j in i + 1..n {
            if !out[i].commutes(&out[j]) {
                out[j] = out[j].mul(&gens[i]);
            }
        }
    }
    for d in out.iter_mut() {
        d.phase = d.x.and_count(&d.z) as u8 % 4;
    }
    Ok(out)
}

/// Paulis `d_i` with symplectic products `⟨d_i, g_j⟩ = δ_ij`.
fn solve_dual(gens: &[Pauli]) -> Result<Vec<Pauli>> {
    let n = gens[0].n();
    let m = gens.len();
    // ⟨d, g⟩ = d_x·g_z + d_z·g_x: rows are (g_z | g_x) acting on (d_x | d_z).
    let rows: Vec<Bits> = gens
        .iter()
        .map(|g| {
            let mut b = Bits::zeros(2 * n);
            for q in 0..n {
                b.set(q, g.z.get(q));
                b.set(n + q, g.x.get(q));
            }
            b
        })
        .collect();
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut rhs = Bits::zeros(m);
        rhs.set(i, true);
        let sol = gf2_solve_right(&rows, 2 * n, &rhs)
            .ok_or_else(|| Error::Invalid("generators are not independent".into()))?;
        let mut d = Pauli::identity(n);
        for q in 0..n {
            d.x.set(q, sol.get(q));
            d.z.set(q, sol.get(n + q));
        }
        out.push(d);
    }
    Ok(out)
}

/// Solves `A v = rhs` over GF(2), `A` given by rows of length `cols`.
fn gf2_solve_right(rows: &[Bits], cols: usize, rhs: &Bits) -> Option<Bits> {
    let m = rows.len();
    let mut a: Vec<Bits> = rows.to_vec();
    let mut b: Vec<bool> = (0..m).map(|i| rhs.get(i)).collect();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == m {
            break;
        }
        let Some(p) = (r..m).find(|&i| a[i].get(c)) else {
            continue;
        };
        a.swap(r, p);
        b.swap(r, p);
        for i in 0..m {
            if i != r && a[i].get(c) {
                let row = a[r].clone();
                a[i].xor_assign(&row);
                b[i] ^= b[r];
            }
        }
        pivots.push(c);
        r += 1;
    }
    if (r..m).any(|i| b[i]) {
        return None;
    }
    let mut v = Bits::zeros(cols);
    for (i, &c) in pivots.iter().enumerate() {
        v.set(c, b[i]);
    }
    Some(v)
}

/// GF(2) rank of a set of Paulis (ignoring phases).
pub fn gen_rank(gens: &[Pauli]) -> usize {
    let vecs: Vec<Bits> = gens.iter().map(|g| g.symplectic()).collect();
    bits_rank(vecs)
}

fn bits_rank(mut vecs: Vec<Bits>) -> usize {
    let Some(len) = vecs.first().map(|v| v.len()) else {
        return 0;
    };
    let mut r = 0;
    for c in 0..len {
        let Some(p) = (r..vecs.len()).find(|&i| vecs[i].get(c)) else {
            continue;
        };
        vecs.swap(r, p);
        let piv = vecs[r].clone();
        for v in vecs.iter_mut().skip(r + 1) {
            if v.get(c) {
                v.xor_assign(&piv);
            }
        }
        r += 1;
        if r == vecs.len() {
            break;
        }
    }
    r
}

/// Dense vector stabilized by `gens` (pure case) obtained by projecting a
/// deterministic dense seed vector.
pub fn stabilizer_vector(gens: &[Pauli], n: usize) -> Result<StateVector> {
    let dim = 1usize << n;
    // A seed with generic overlap with every stabilizer state.
    let mut amps: Vec<C64> = (0..dim)
        .map(|j| {
            let t = j as f64 + 1.0;
            C64::new((t * 0.7548).sin() + 1.3, (t * 1.2119).cos())
        })
        .collect();
    for g in gens {
        let mut ga = amps.clone();
        g.apply_to(&mut ga);
        for (a, b) in amps.iter_mut().zip(&ga) {
            *a = (*a + *b) * 0.5;
        }
    }
    StateVector::normalized(vec![2; n], amps)
}

/// `S(R) = |R| − m + rank(G restricted to R̄)` in bits, for `m` independent
/// commuting generators on `n` qubits.
pub fn generator_entropy(gens: &[Pauli], region: &[usize]) -> usize {
    let n = gens.first().map(|g| g.n()).unwrap_or(0);
    let inside: Vec<bool> = (0..n).map(|q| region.contains(&q)).collect();
    let comp: Vec<usize> = (0..n).filter(|&q| !inside[q]).collect();
    let m = gen_rank(gens);
    let restricted: Vec<Pauli> = gens.iter().map(|g| g.restrict(&comp)).collect();
    let r_in = (0..n).filter(|&q| inside[q]).count();
    r_in + gen_rank(&restricted) - m
}

/// Entanglement entropy (bits) of a region of a pure stabilizer state.
pub fn region_entropy(tab: &Tableau, region: &[usize]) -> usize {
    let mut r: Vec<usize> = region.to_vec();
    r.sort_unstable();
    r.dedup();
    generator_entropy(&tab.stabilizers, &r)
}

pub fn mutual_information(tab: &Tableau, r1: &[usize], r2: &[usize]) -> Result<usize> {
    if r1.iter().any(|q| r2.contains(q)) {
        return Err(Error::Invalid("regions overlap".into()));
    }
    let mut u: Vec<usize> = r1.iter().chain(r2).copied().collect();
    u.sort_unstable();
    u.dedup();
    Ok(region_entropy(tab, r1) + region_entropy(tab, r2) - region_entropy(tab, &u))
}

/// Stabilizer code with `k` logical pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StabilizerCode {
    pub n: usize,
    pub stabilizers: Vec<Pauli>,
    pub logical_x: Vec<Pauli>,
    pub logical_z: Vec<Pauli>,
}

impl StabilizerCode {
    pub fn new(stabilizers: Vec<Pauli>, logical_x: Vec<Pauli>, logical_z: Vec<Pauli>) -> Result<Self> {
        let n = stabilizers
            .first()
            .or(logical_x.first())
            .map(|p| p.n())
            .ok_or_else(|| Error::Invalid("empty code".into()))?;
        let code = StabilizerCode {
            n,
            stabilizers,
            logical_x,
            logical_z,
        };
        code.validate()?;
        Ok(code)
    }

    pub fn k(&self) -> usize {
        self.logical_x.len()
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.stabilizers.iter().chain(&self.logical_x).chain(&self.logical_z);
        if all.clone().any(|p| p.n() != self.n) {
            return Err(Error::DimensionMismatch("code operators differ in length".into()));
        }
        check_commuting(&self.stabilizers)?;
        if gen_rank(&self.stabilizers) != self.stabilizers.len() {
            return Err(Error::Invalid("stabilizer generators are dependent".into()));
        }
        if self.logical_x.len() != self.logical_z.len() {
            return Err(Error::Invalid("unpaired logical operators".into()));
        }
        if self.stabilizers.len() + self.k() != self.n {
            return Err(Error::Invalid(format!(
                "rank {} with {} logicals on {} qubits",
                self.stabilizers.len(),
                self.k(),
                self.n
            )));
        }
        for (i, (x, z)) in self.logical_x.iter().zip(&self.logical_z).enumerate() {
            for s in &self.stabilizers {
                if !s.commutes(x) || !s.commutes(z) {
                    return Err(Error::Invalid(format!("logical {i} anticommutes with {s}")));
                }
            }
            for (j, (x2, z2)) in self.logical_x.iter().zip(&self.logical_z).enumerate() {
                let want = i != j;
                if x.commutes(z2) != want || !x.commutes(x2) || !z.commutes(z2) {
                    return Err(Error::Invalid(format!("logicals {i}, {j} are not canonical pairs")));
                }
            }
        }
        Ok(())
    }

    /// The [[7,1,3]] Steane code with `X̄ = X^⊗7`, `Z̄ = Z^⊗7`.
    pub fn steane() -> Self {
        let rows = ["1111000", "1100110", "1010101"];
        let mut stabs = Vec::new();
        for r in rows {
            let q: Vec<usize> = r.char_indices().filter(|(_, c)| *c == '1').map(|(i, _)| i).collect();
            stabs.push(Pauli::x_on(7, q.iter().copied()));
        }
        for r in rows {
            let q: Vec<usize> = r.char_indices().filter(|(_, c)| *c == '1').map(|(i, _)| i).collect();
            stabs.push(Pauli::z_on(7, q.iter().copied()));
        }
        StabilizerCode::new(stabs, vec![Pauli::x_on(7, 0..7)], vec![Pauli::z_on(7, 0..7)]).unwrap()
    }

    /// `[[n, n, 1]]` trivial code.
    pub fn trivial(n: usize) -> Self {
        StabilizerCode {
            n,
            stabilizers: Vec::new(),
            logical_x: (0..n).map(|q| Pauli::single(n, q, 1)).collect(),
            logical_z: (0..n).map(|q| Pauli::single(n, q, 3)).collect(),
        }
    }

    /// Commutes with all stabilizers.
    pub fn in_normalizer(&self, p: &Pauli) -> bool {
        p.n() == self.n && self.stabilizers.iter().all(|s| s.commutes(p))
    }

    /// Logical class `(a, b)` with `p ∝ X̄^a Z̄^b · (stabilizer)`.
    pub fn logical_class(&self, p: &Pauli) -> Result<(Vec<bool>, Vec<bool>)> {
        if !self.in_normalizer(p) {
            return Err(Error::NotLogical(p.to_string()));
        }
        let a = self.logical_z.iter().map(|z| !z.commutes(p)).collect();
        let b = self.logical_x.iter().map(|x| !x.commutes(p)).collect();
        Ok((a, b))
    }

    /// Is `p` (up to phase) in the stabilizer group?
    pub fn is_stabilizer_element(&self, p: &Pauli) -> bool {
        if !self.in_normalizer(p) {
            return false;
        }
        let (a, b) = self.logical_class(p).unwrap();
        a.iter().chain(&b).all(|&v| !v)
    }

    /// Encoding circuit-free check: dense projector onto the code space.
    pub fn code_projector(&self) -> CMat {
        let dim = 1usize << self.n;
        let mut p = linalg::identity(dim);
        for s in &self.stabilizers {
            let m = (linalg::identity(dim) + s.to_matrix()) * C64::new(0.5, 0.0);
            p = linalg::matmul(&m, &p);
        }
        p
    }
}

impl fmt::Display for StabilizerCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.stabilizers {
            writeln!(f, "S {s}")?;
        }
        for (x, z) in self.logical_x.iter().zip(&self.logical_z) {
            writeln!(f, "X {x}")?;
            writeln!(f, "Z {z}")?;
        }
        Ok(())
    }
}

impl FromStr for StabilizerCode {
    type Err = Error;

    /// Lines `S <pauli>`, `X <pauli>`, `Z <pauli>`; `#` starts a comment.
    fn from_str(s: &str) -> Result<Self> {
        let (mut st, mut lx, mut lz) = (Vec::new(), Vec::new(), Vec::new());
        for line in s.lines() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (tag, body) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::Invalid(format!("malformed code line {line:?}")))?;
            let p: Pauli = body.parse()?;
            match tag {
                "S" => st.push(p),
                "X" => lx.push(p),
                "Z" => lz.push(p),
                _ => return Err(Error::Invalid(format!("unknown tag {tag:?}"))),
            }
        }
        StabilizerCode::new(st, lx, lz)
    }
}

/// Representative of `logical` supported inside `region`, obtained by
/// multiplying with stabilizers; `None` if there is none.
pub fn clean_logical(code: &StabilizerCode, logical: &Pauli, region: &[usize]) -> Result<Option<Pauli>> {
    if !code.in_normalizer(logical) {
        return Err(Error::NotLogical(logical.to_string()));
    }
    let n = code.n;
    let outside: Vec<usize> = (0..n).filter(|q| !region.contains(q)).collect();
    if outside.is_empty() {
        return Ok(Some(logical.clone()));
    }
    let m = code.stabilizers.len();
    // Column order: (x_q, z_q) for q ascending, so pivots favour low sites.
    let proj = |p: &Pauli| {
        let mut b = Bits::zeros(2 * outside.len());
        for (i, &q) in outside.iter().enumerate() {
            b.set(2 * i, p.x.get(q));
            b.set(2 * i + 1, p.z.get(q));
        }
        b
    };
    let mut rows: Vec<(Bits, Bits)> = code
        .stabilizers
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut tag = Bits::zeros(m);
            tag.set(i, true);
            (proj(s), tag)
        })
        .collect();
    let cols = 2 * outside.len();
    let mut echelon: Vec<(usize, Bits, Bits)> = Vec::new();
    for c in 0..cols {
        let Some(p) = rows.iter().position(|(v, _)| v.get(c)) else {
            continue;
        };
        let (pv, pt) = rows.remove(p);
        for (v, t) in rows.iter_mut() {
            if v.get(c) {
                v.xor_assign(&pv);
                t.xor_assign(&pt);
            }
        }
        echelon.push((c, pv, pt));
    }
    let mut target = proj(logical);
    let mut combo = Bits::zeros(m);
    for (c, v, t) in &echelon {
        if target.get(*c) {
            target.xor_assign(v);
            combo.xor_assign(t);
        }
    }
    if !target.is_zero() {
        return Ok(None);
    }
    let mut rep = logical.clone();
    for i in combo.ones() {
        rep = rep.mul(&code.stabilizers[i]);
    }
    debug_assert!(outside.iter().all(|&q| !rep.x.get(q) && !rep.z.get(q)));
    Ok(Some(rep))
}

/// Both `X̄_j` and `Z̄_j` can be cleaned into `region`. Cross-checked against
/// the complement criterion; a disagreement is reported as an error.
pub fn recoverable(code: &StabilizerCode, region: &[usize], logical_index: usize) -> Result<bool> {
    if logical_index >= code.k() {
        return Err(Error::NotLogical(format!("logical index {logical_index}")));
    }
    let x = clean_logical(code, &code.logical_x[logical_index], region)?.is_some();
    let z = clean_logical(code, &code.logical_z[logical_index], region)?.is_some();
    let by_cleaning = x && z;
    let by_complement = complement_blind(code, region, logical_index);
    if by_cleaning != by_complement {
        return Err(Error::Invalid(format!(
            "cleaning ({by_cleaning}) and complement ({by_complement}) criteria disagree"
        )));
    }
    Ok(by_cleaning)
}

/// True iff every normalizer element supported on the complement of `region`
/// commutes with `X̄_j` and `Z̄_j`, i.e. the complement learns nothing about
/// logical `j`.
pub fn complement_blind(code: &StabilizerCode, region: &[usize], j: usize) -> bool {
    let n = code.n;
    let comp: Vec<usize> = (0..n).filter(|q| !region.contains(q)).collect();
    if comp.is_empty() {
        return true;
    }
    let c = comp.len();
    // Unknown (x|z) on the complement; constraints ⟨u, s⟩ = 0 for every stabilizer.
    let rows: Vec<Bits> = code
        .stabilizers
        .iter()
        .map(|s| {
            let mut b = Bits::zeros(2 * c);
            for (i, &q) in comp.iter().enumerate() {
                b.set(i, s.z.get(q));
                b.set(c + i, s.x.get(q));
            }
            b
        })
        .collect();
    for u in gf2_null_space(&rows, 2 * c) {
        let mut p = Pauli::identity(n);
        for (i, &q) in comp.iter().enumerate() {
            p.x.set(q, u.get(i));
            p.z.set(q, u.get(c + i));
        }
        if !p.commutes(&code.logical_x[j]) || !p.commutes(&code.logical_z[j]) {
            return false;
        }
    }
    true
}

/// Basis of `{v : A v = 0}` over GF(2).
fn gf2_null_space(rows: &[Bits], cols: usize) -> Vec<Bits> {
    let mut a: Vec<Bits> = rows.to_vec();
    let m = a.len();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == m {
            break;
        }
        let Some(p) = (r..m).find(|&i| a[i].get(c)) else {
            continue;
        };
        a.swap(r, p);
        for i in 0..m {
            if i != r && a[i].get(c) {
                let row = a[r].clone();
                a[i].xor_assign(&row);
            }
        }
        pivots.push(c);
        r += 1;
    }
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = Bits::zeros(cols);
            v.set(f, true);
            for (i, &pc) in pivots.iter().enumerate() {
                if a[i].get(f) {
                    v.set(pc, true);
                }
            }
            v
        })
        .collect()
}

/// Random Clifford circuit from `{H, S, CNOT}` with `len` gates.
pub fn random_clifford_circuit<R: Rng + ?Sized>(n: usize, len: usize, rng: &mut R) -> Vec<CliffordGate> {
    (0..len)
        .map(|_| {
            let kind = if n < 2 { rng.random_range(0..2) } else { rng.random_range(0..3) };
            match kind {
                0 => CliffordGate::H(rng.random_range(0..n)),
                1 => CliffordGate::S(rng.random_range(0..n)),
                _ => {
                    let a = rng.random_range(0..n);
                    let mut b = rng.random_range(0..n - 1);
                    if b >= a {
                        b += 1;
                    }
                    CliffordGate::Cnot(a, b)
                }
            }
        })
        .collect()
}

/// Random pure stabilizer state from a random circuit of `6 n²+2` gates.
pub fn random_tableau<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Tableau {
    let mut t = Tableau::zero(n);
    let gates = random_clifford_circuit(n, 6 * n * n + 2, rng);
    t.apply_all(&gates).expect("gates in range");
    t
}
