//! Exact and approximate (light-cone) spread of lattice unitaries, light-cone
//! fits, and the simulation-condition checker.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{self, ModelSpec, Region, Ring, Term};
use crate::qcore::linalg::{self, matmul, C64};
use crate::qcore::tensor;
use crate::qcore::{CMat, DenseOperator, StateVector};

/// Floor used for `a` when no sample is positive.
pub const A_FLOOR: f64 = 1e-300;
/// Floors used when the least-squares slopes have the wrong sign.
pub const B_FLOOR: f64 = 1e-3;
pub const V_FLOOR: f64 = 1e-3;
/// Commutator ratios at or below this are treated as exact zeros in the fit.
pub const ZERO_RATIO: f64 = 1e-13;

/// Fitted bound `a · exp(−b (d − v t))`, distances in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightConeFit {
    pub a: f64,
    pub b: f64,
    pub v: f64,
    /// Largest relative excess of a sample over the bound (0 when dominated).
    pub residual: f64,
    pub samples: Vec<LightConeSample>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightConeSample {
    pub t: f64,
    /// Distance in radians.
    pub d: f64,
    /// `max ‖[O(t), O′]‖ / (‖O‖ ‖O′‖)` over probes at this distance.
    pub ratio: f64,
}

impl LightConeFit {
    pub fn bound(&self, d: f64, t: f64) -> f64 {
        self.a * (-self.b * (d - self.v * t)).exp()
    }
}

/// Generalized Pauli generators (shift, clock) on each site.
fn generator(dims: &[usize], site: usize, clock: bool) -> Generator {
    Generator {
        d: dims[site],
        stride: tensor::strides(dims)[site],
        clock,
    }
}

struct Generator {
    d: usize,
    stride: usize,
    clock: bool,
}

impl Generator {
    fn digit(&self, idx: usize) -> usize {
        (idx / self.stride) % self.d
    }

    /// Index shifted by `+k` on this factor's digit.
    fn shifted(&self, idx: usize, k: usize) -> usize {
        let dg = self.digit(idx);
        let nd = (dg + k) % self.d;
        idx + nd * self.stride - dg * self.stride
    }

    /// `[G, B]` materialized.
    fn commutator(&self, b: &CMat) -> CMat {
        let n = b.nrows();
        if self.clock {
            let w: Vec<C64> = (0..self.d)
                .map(|j| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / self.d as f64))
                .collect();
            CMat::from_fn(n, n, |r, c| {
                b[(r, c)] * (w[self.digit(r)] - w[self.digit(c)])
            })
        } else {
            // (X B)[r, c] = B[r − 1, c];  (B X)[r, c] = B[r, c + 1].
            CMat::from_fn(n, n, |r, c| {
                b[(self.shifted(r, self.d - 1), c)] - b[(r, self.shifted(c, 1))]
            })
        }
    }
}

/// Single-site operator basis (excluding identity): `X^a Z^b`, normalized.
fn site_basis(d: usize) -> Vec<CMat> {
    let x = linalg::shift(d);
    let z = linalg::clock(d);
    let mut out = Vec::new();
    for a in 0..d {
        for b in 0..d {
            if a == 0 && b == 0 {
                continue;
            }
            let mut m = linalg::identity(d);
            for _ in 0..a {
                m = matmul(&x, &m);
            }
            for _ in 0..b {
                m = matmul(&m, &z);
            }
            out.push(m);
        }
    }
    out
}

/// Sites `j` on which `b` acts nontrivially, i.e. fails to commute with the
/// site's shift or clock generator beyond `tol` in operator norm.
pub fn operator_support(b: &CMat, dims: &[usize], tol: f64) -> Vec<usize> {
    (0..dims.len())
        .filter(|&j| {
            [false, true].iter().any(|&clock| {
                let c = generator(dims, j, clock).commutator(b);
                !linalg::op_norm_at_most(&c, tol)
            })
        })
        .collect()
}

/// Smallest `s` (radians) such that `U A U†` commutes with every single-site
/// operator farther than `s` from the site of `A`, for all sites and basis `A`.
pub fn exact_spread(u: &DenseOperator, ring: Ring) -> Result<f64> {
    let dims = ring.dims();
    if u.dims() != dims.as_slice() || u.support().len() != ring.n_sites() {
        return Err(Error::DimensionMismatch("unitary must act on the full ring".into()));
    }
    let defect = u.unitarity_defect();
    if defect > 1e-9 {
        return Err(Error::NotUnitary { defect });
    }
    let basis = site_basis(ring.local_dim());
    let um = u.matrix();
    let jobs: Vec<(usize, usize)> = (0..ring.n_sites())
        .flat_map(|phi| (0..basis.len()).map(move |k| (phi, k)))
        .collect();
    let worst = jobs
        .par_iter()
        .map(|&(phi, k)| -> Result<usize> {
            let a = DenseOperator::new(vec![phi], vec![ring.local_dim()], basis[k].clone())?;
            let full = crate::qcore::embed(&a, &dims)?;
            let b = linalg::conjugate(um, full.matrix());
            let supp = operator_support(&b, &dims, 1e-10);
            Ok(supp.iter().map(|&j| ring.steps(phi, j)).max().unwrap_or(0))
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .max()
        .unwrap_or(0);
    Ok(worst as f64 * ring.spacing())
}

/// `‖[A, B]‖` for dense `A` and a unitary `B` acting on one site:
/// `‖AB − BA‖ = ‖A − B A B†‖`. Exact for small dimension, Lanczos above.
fn commutator_norm(a: &CMat, dims: &[usize], site: usize, b: &CMat) -> f64 {
    let c = match monomial(b) {
        Some(perm) => {
            // B|k⟩ = ph_k |σ(k)⟩ on the site digit, so (B A B†)[r, c] is one
            // phased entry of A.
            let stride = tensor::strides(dims)[site];
            let d = dims[site];
            let pre = |r: usize| -> (usize, C64) {
                let dg = (r / stride) % d;
                let (src, ph) = perm[dg];
                (r + src * stride - dg * stride, ph)
            };
            let n = a.nrows();
            let rows: Vec<(usize, C64)> = (0..n).map(pre).collect();
            CMat::from_fn(n, n, |r, col| {
                let (rp, pr) = rows[r];
                let (cp, pc) = rows[col];
                a[(r, col)] - pr * a[(rp, cp)] * pc.conj()
            })
        }
        None => a - left_local(&left_local(a, dims, site, b).adjoint(), dims, site, b).adjoint(),
    };
    let n = c.nrows();
    if n <= 256 {
        return linalg::op_norm(&c);
    }
    // Pauli-type probes make C Hermitian or anti-Hermitian.
    let scale = linalg::frobenius(&c).max(f64::MIN_POSITIVE);
    if linalg::frobenius(&(&c - c.adjoint())) <= 1e-12 * scale {
        return lanczos_extreme(n, |v| matvec(&c, v), 30);
    }
    if linalg::frobenius(&(&c + c.adjoint())) <= 1e-12 * scale {
        return lanczos_extreme(n, |v| matvec(&c, v).into_iter().map(|z| z * C64::new(0.0, 1.0)).collect(), 30);
    }
    let cd = c.adjoint();
    lanczos_extreme(n, |v| matvec(&cd, &matvec(&c, v)), 60).sqrt()
}

/// For a matrix with one nonzero per row, `row k ↦ (column, entry)`.
fn monomial(b: &CMat) -> Option<Vec<(usize, C64)>> {
    (0..b.nrows())
        .map(|k| {
            let nz: Vec<usize> = (0..b.ncols()).filter(|&j| b[(k, j)].norm() > 0.0).collect();
            (nz.len() == 1).then(|| (nz[0], b[(k, nz[0])]))
        })
        .collect()
}

/// `(1 ⊗ b ⊗ 1) · m`, column by column.
fn left_local(m: &CMat, dims: &[usize], site: usize, b: &CMat) -> CMat {
    let mut out = m.clone();
    let n = out.nrows();
    for col in out.as_mut_slice().chunks_mut(n) {
        crate::qcore::apply_local(col, dims, &[site], b);
    }
    out
}

fn matvec(m: &CMat, v: &[C64]) -> Vec<C64> {
    let x = nalgebra::DVector::from_column_slice(v);
    (m * x).iter().copied().collect()
}

/// Largest |Ritz value| of a Hermitian operator after `k` Lanczos steps with
/// full reorthogonalization, from a fixed pseudo-random start.
fn lanczos_extreme(n: usize, op: impl Fn(&[C64]) -> Vec<C64>, k: usize) -> f64 {
    let k = k.min(n);
    let mut q: Vec<Vec<C64>> = Vec::with_capacity(k);
    let mut start: Vec<C64> = (0..n)
        .map(|i| {
            let x = ((i as f64 + 1.0) * 0.618_033_988_75).fract() - 0.5;
            let y = ((i as f64 + 1.0) * 0.414_213_562_37).fract() - 0.5;
            C64::new(x, y)
        })
        .collect();
    let nrm = linalg::vec_norm(&start);
    start.iter_mut().for_each(|z| *z /= nrm);
    q.push(start);
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    for j in 0..k {
        let mut w = op(&q[j]);
        let a = linalg::inner(&q[j], &w).re;
        alpha.push(a);
        for qi in &q {
            let c = linalg::inner(qi, &w);
            w.iter_mut().zip(qi).for_each(|(x, y)| *x -= c * y);
        }
        let b = linalg::vec_norm(&w);
        if b < 1e-12 || j + 1 == k {
            break;
        }
        beta.push(b);
        q.push(w.into_iter().map(|z| z / b).collect());
    }
    let m = alpha.len();
    let t = DMatrix::<f64>::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j || j + 1 == i {
            beta[i.min(j)]
        } else {
            0.0
        }
    });
    t.symmetric_eigenvalues().iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Whether shifting every term by one site maps the term list onto itself.
pub fn is_translation_invariant(terms: &[Term], ring: Ring) -> bool {
    let n = ring.n_sites();
    let key = |t: &Term, shift: usize| -> (Vec<usize>, Vec<(i64, i64)>) {
        let sites: Vec<usize> = t.sites.iter().map(|&s| (s + shift) % n).collect();
        let m: Vec<(i64, i64)> = t
            .matrix
            .iter()
            .map(|z| ((z.re * 1e9).round() as i64, (z.im * 1e9).round() as i64))
            .collect();
        (sites, m)
    };
    let mut orig: Vec<_> = terms.iter().map(|t| key(t, 0)).collect();
    let mut shifted: Vec<_> = terms.iter().map(|t| key(t, 1)).collect();
    orig.sort();
    shifted.sort();
    orig == shifted
}

/// Samples `‖[O(t), O′]‖` on the `(t, d)` grid for Pauli probes and fits the
/// light-cone bound. `distances` are in lattice steps.
pub fn lr_profile(spec: &ModelSpec, ring: Ring, times: &[f64], distances: &[usize]) -> Result<LightConeFit> {
    let samples = lr_samples(spec, ring, times, distances)?;
    fit_light_cone(samples)
}

/// Commutator samples without fitting.
pub fn lr_samples(spec: &ModelSpec, ring: Ring, times: &[f64], distances: &[usize]) -> Result<Vec<LightConeSample>> {
    let terms = match spec {
        ModelSpec::LocalHamiltonian { terms, .. } => terms,
        ModelSpec::BrickworkCircuit { .. } => {
            return Err(Error::Invalid("lr_profile needs a Hamiltonian model".into()))
        }
    };
    spec.validate(ring)?;
    let mut distinct: Vec<usize> = distances.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Invalid("need at least 3 distinct distances to fit".into()));
    }
    let h = lattice::hamiltonian_matrix(terms, ring)?;
    let (vals, vecs) = linalg::hermitian_eigen(&h);
    let vd = vecs.adjoint();
    let dims = ring.dims();
    let basis = site_basis(ring.local_dim());
    let sources: Vec<usize> = if is_translation_invariant(terms, ring) {
        vec![0]
    } else {
        (0..ring.n_sites()).collect()
    };
    let local = |site: usize, m: &CMat| -> Result<CMat> {
        let op = DenseOperator::new(vec![site], vec![ring.local_dim()], m.clone())?;
        Ok(crate::qcore::embed(&op, &dims)?.into_matrix())
    };
    // Probe operators in the energy eigenbasis.
    let mut rotated = Vec::new();
    for &phi in &sources {
        for m in &basis {
            let full = local(phi, m)?;
            rotated.push((phi, matmul(&matmul(&vd, &full), &vecs)));
        }
    }
    let mut out = Vec::new();
    for &t in times {
        let phase: Vec<C64> = vals.iter().map(|&l| C64::from_polar(1.0, l * t)).collect();
        let evolved: Vec<(usize, CMat)> = rotated
            .par_iter()
            .map(|(phi, m)| {
                let dm = CMat::from_fn(m.nrows(), m.ncols(), |i, j| phase[i] * m[(i, j)] * phase[j].conj());
                (*phi, matmul(&matmul(&vecs, &dm), &vd))
            })
            .collect();
        let nb = basis.len();
        for &d in &distinct {
            let jobs: Vec<(usize, usize, usize)> = evolved
                .iter()
                .enumerate()
                .flat_map(|(ei, (phi, _))| {
                    let n = ring.n_sites();
                    let a = (phi + d) % n;
                    let b = (phi + n - d % n) % n;
                    let mut v = vec![a];
                    if b != a {
                        v.push(b);
                    }
                    v.into_iter()
                        .flat_map(move |s| (0..nb).map(move |k| (ei, s, k)))
                })
                .collect();
            let ratio = jobs
                .par_iter()
                .map(|&(ei, s, k)| -> Result<f64> { Ok(commutator_norm(&evolved[ei].1, &dims, s, &basis[k])) })
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            out.push(LightConeSample {
                t,
                d: d as f64 * ring.spacing(),
                ratio,
            });
        }
    }
    Ok(out)
}

/// Least squares on `ln r = c0 + c1 d + c2 t`, `b = −c1`, `v = c2 / b`, then
/// the smallest inflation of `a` making the bound dominate every sample.
pub fn fit_light_cone(samples: Vec<LightConeSample>) -> Result<LightConeFit> {
    let mut ds: Vec<f64> = samples.iter().map(|s| s.d).collect();
    ds.sort_by(f64::total_cmp);
    ds.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if ds.len() < 3 {
        return Err(Error::Invalid("need at least 3 distinct distances to fit".into()));
    }
    let pos: Vec<&LightConeSample> = samples.iter().filter(|s| s.ratio > ZERO_RATIO).collect();
    let (mut a, mut b, mut v) = (A_FLOOR, 1.0, 1.0);
    if pos.len() >= 3 {
        let x = DMatrix::<f64>::from_fn(pos.len(), 3, |i, j| match j {
            0 => 1.0,
            1 => pos[i].d,
            _ => pos[i].t,
        });
        let y = nalgebra::DVector::<f64>::from_fn(pos.len(), |i, _| pos[i].ratio.ln());
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * &y;
        if let Some(c) = xtx.clone().lu().solve(&xty).filter(|c| c.iter().all(|z| z.is_finite())) {
            b = (-c[1]).max(B_FLOOR);
            v = if c[1] < 0.0 { (c[2] / b).max(V_FLOOR) } else { V_FLOOR };
            // Intercept refit with the (possibly clamped) slopes.
            let c0 = pos
                .iter()
                .map(|s| s.ratio.ln() + b * (s.d - v * s.t))
                .sum::<f64>()
                / pos.len() as f64;
            a = c0.exp().max(A_FLOOR);
        }
    } else if !pos.is_empty() {
        a = A_FLOOR;
    }
    let needed = samples
        .iter()
        .map(|s| s.ratio / (-b * (s.d - v * s.t)).exp())
        .fold(0.0, f64::max);
    if needed > a {
        a = needed * (1.0 + 1e-12);
    }
    let mut fit = LightConeFit {
        a,
        b,
        v,
        residual: 0.0,
        samples,
    };
    fit.residual = fit
        .samples
        .iter()
        .map(|s| ((s.ratio - fit.bound(s.d, s.t)) / fit.bound(s.d, s.t)).max(0.0))
        .fold(0.0, f64::max);
    Ok(fit)
}

/// Entry of the candidate operator dictionary.
#[derive(Clone, Debug)]
pub struct DictionaryEntry {
    pub label: String,
    pub operator: DenseOperator,
    pub declared_support: Region,
}

/// Source of reference correlators `⟨ψ| ∏_k M_k(t_k) |ψ⟩`, keyed by labels.
pub trait CorrelationReference: Sync {
    fn correlator(&self, ops: &[(String, f64)]) -> Option<C64>;
}

/// Reference backed by an explicit table.
#[derive(Clone, Debug, Default)]
pub struct TableReference {
    pub values: BTreeMap<String, C64>,
}

impl TableReference {
    pub fn key(ops: &[(String, f64)]) -> String {
        ops.iter()
            .map(|(l, t)| format!("{l}@{t:.12}"))
            .collect::<Vec<_>>()
            .join("*")
    }
}

impl CorrelationReference for TableReference {
    fn correlator(&self, ops: &[(String, f64)]) -> Option<C64> {
        self.values.get(&Self::key(ops)).copied()
    }
}

/// A model with a state and a labeled operator dictionary, evaluated by
/// state-vector propagation.
#[derive(Clone, Debug)]
pub struct ModelCorrelator {
    pub ring: Ring,
    pub terms: Vec<Term>,
    pub state: StateVector,
    pub operators: BTreeMap<String, DenseOperator>,
}

impl ModelCorrelator {
    /// `⟨ψ| O_1(t_1) ⋯ O_m(t_m) |ψ⟩` with `O(t) = e^{iHt} O e^{−iHt}`.
    pub fn evaluate(&self, ops: &[(String, f64)]) -> Result<C64> {
        // Right to left, merging adjacent propagators:
        // e^{iHt_1} O_1 e^{−iH(t_1−t_2)} O_2 ⋯ O_m e^{−iHt_m} |ψ⟩.
        let mut v = self.state.amplitudes().to_vec();
        let mut now = 0.0;
        for (label, t) in ops.iter().rev() {
            let op = self
                .operators
                .get(label)
                .ok_or_else(|| Error::MissingCorrelator(label.clone()))?;
            v = lattice::propagate(&self.terms, self.ring, &v, *t - now);
            now = *t;
            crate::qcore::apply_local(&mut v, &self.ring.dims(), op.support(), op.matrix());
        }
        v = lattice::propagate(&self.terms, self.ring, &v, -now);
        Ok(linalg::inner(self.state.amplitudes(), &v))
    }
}

impl CorrelationReference for ModelCorrelator {
    fn correlator(&self, ops: &[(String, f64)]) -> Option<C64> {
        self.evaluate(ops).ok()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationCheckReport {
    pub delta_measured: f64,
    pub delta_allowed: f64,
    pub support_ok: bool,
    pub support_failures: Vec<String>,
    pub lightcone: LightConeFit,
    pub times_checked: Vec<f64>,
    pub correlators_checked: usize,
    pub passed: bool,
}

/// Candidate model for [`check_simulation_conditions`].
#[derive(Clone, Debug)]
pub struct Candidate {
    pub ring: Ring,
    pub model: ModelSpec,
    pub state: StateVector,
    pub dictionary: Vec<DictionaryEntry>,
}

/// Settings of the condition check.
#[derive(Clone, Debug)]
pub struct SimulationCheck {
    pub delta: f64,
    pub horizon: f64,
    pub times: Vec<f64>,
    pub max_len: usize,
    pub lr_distances: Vec<usize>,
}

/// All words of length 1..=m over `(operator, time)` letters.
pub fn correlator_words(labels: &[String], times: &[f64], m: usize) -> Vec<Vec<(String, f64)>> {
    let letters: Vec<(String, f64)> = labels
        .iter()
        .flat_map(|l| times.iter().map(move |&t| (l.clone(), t)))
        .collect();
    let mut out = Vec::new();
    let mut frontier: Vec<Vec<(String, f64)>> = vec![Vec::new()];
    for _ in 0..m {
        let mut next = Vec::new();
        for w in &frontier {
            for l in &letters {
                let mut x = w.clone();
                x.push(l.clone());
                next.push(x);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Checks support containment, correlation error against the reference, and
/// the light-cone fit of the candidate.
pub fn check_simulation_conditions(
    candidate: &Candidate,
    reference: &dyn CorrelationReference,
    check: &SimulationCheck,
) -> Result<SimulationCheckReport> {
    if let Some(&t) = check.times.iter().find(|&&t| t >= check.horizon) {
        return Err(Error::Precondition(format!("time {t} is not below the horizon {}", check.horizon)));
    }
    let terms = match &candidate.model {
        ModelSpec::LocalHamiltonian { terms, .. } => terms.clone(),
        ModelSpec::BrickworkCircuit { .. } => {
            return Err(Error::Invalid("simulation check needs a Hamiltonian".into()))
        }
    };
    let dims = candidate.ring.dims();
    let mut failures = Vec::new();
    for e in &candidate.dictionary {
        let full = crate::qcore::embed(&e.operator, &dims)?;
        let supp = operator_support(full.matrix(), &dims, 1e-10);
        if let Some(s) = supp.iter().find(|&&s| !e.declared_support.contains(s)) {
            failures.push(format!("{}: acts on site {s} outside its declared region", e.label));
        }
    }
    let correlator = ModelCorrelator {
        ring: candidate.ring,
        terms,
        state: candidate.state.clone(),
        operators: candidate
            .dictionary
            .iter()
            .map(|e| (e.label.clone(), e.operator.clone()))
            .collect(),
    };
    let norms: BTreeMap<String, f64> = candidate
        .dictionary
        .iter()
        .map(|e| (e.label.clone(), linalg::op_norm(e.operator.matrix())))
        .collect();
    let labels: Vec<String> = candidate.dictionary.iter().map(|e| e.label.clone()).collect();
    let words = correlator_words(&labels, &check.times, check.max_len);
    let errors = words
        .par_iter()
        .map(|w| -> Result<f64> {
            let mine = correlator.evaluate(w)?;
            let theirs = reference
                .correlator(w)
                .ok_or_else(|| Error::MissingCorrelator(TableReference::key(w)))?;
            let scale: f64 = w.iter().map(|(l, _)| norms[l]).product();
            Ok((mine - theirs).norm() / scale.max(f64::MIN_POSITIVE))
        })
        .collect::<Result<Vec<f64>>>()?;
    let delta_measured = errors.into_iter().fold(0.0, f64::max);
    let lightcone = lr_profile(&candidate.model, candidate.ring, &check.times, &check.lr_distances)?;
    let support_ok = failures.is_empty();
    Ok(SimulationCheckReport {
        passed: support_ok && delta_measured <= check.delta && lightcone.residual <= 0.0,
        delta_measured,
        delta_allowed: check.delta,
        support_ok,
        support_failures: failures,
        lightcone,
        times_checked: check.times.clone(),
        correlators_checked: words.len(),
    })
}

