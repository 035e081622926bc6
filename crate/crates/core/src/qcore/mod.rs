//! Dense linear-algebra substrate: operators and states on labeled tensor
//! factors, partial traces, twirls, norms, polar decomposition, entropies and
//! Choi-matrix channel comparison.
//!
//! Factor ordering is row-major with ascending factor index throughout: in a
//! product basis index, factor 0 is the most significant digit.

pub mod linalg;
pub mod tensor;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use linalg::{CMat, C64};
use linalg::{matmul, ONE, ZERO};
use tensor::{product, SplitTable};

/// Threshold for validating unitarity and isometry of inputs.
pub const INPUT_TOL: f64 = 1e-9;
/// Guarantee on unitarity of outputs.
pub const OUTPUT_TOL: f64 = 1e-10;
/// Singular values below this count as zero.
pub const SINGULAR_CUTOFF: f64 = 1e-12;

/// Square operator on an ordered set of tensor factors.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    support: Vec<usize>,
    dims: Vec<usize>,
    mat: CMat,
}

impl DenseOperator {
    /// Builds an operator; the support is re-sorted ascending (permuting the
    /// matrix accordingly) so every operator uses the same factor ordering.
    pub fn new(support: Vec<usize>, dims: Vec<usize>, mat: CMat) -> Result<Self> {
        if support.len() != dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} support factors but {} dims",
                support.len(),
                dims.len()
            )));
        }
        for (i, s) in support.iter().enumerate() {
            if support[..i].contains(s) {
                return Err(Error::DuplicateFactor(*s));
            }
        }
        let d = product(&dims);
        if mat.nrows() != d || mat.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{}, factor dims give {d}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let mut order: Vec<usize> = (0..support.len()).collect();
        order.sort_by_key(|&k| support[k]);
        if order.iter().enumerate().all(|(i, &k)| i == k) {
            return Ok(DenseOperator { support, dims, mat });
        }
        let new_support: Vec<usize> = order.iter().map(|&k| support[k]).collect();
        let new_dims: Vec<usize> = order.iter().map(|&k| dims[k]).collect();
        let perm = factor_permutation(&dims, &order);
        let mat = CMat::from_fn(d, d, |i, j| mat[(perm[i], perm[j])]);
        Ok(DenseOperator {
            support: new_support,
            dims: new_dims,
            mat,
        })
    }

    /// Identity on the given factors.
    pub fn identity(support: Vec<usize>, dims: Vec<usize>) -> Result<Self> {
        let d = product(&dims);
        DenseOperator::new(support, dims, linalg::identity(d))
    }

    /// Single-qubit Pauli (0 = I, 1 = X, 2 = Y, 3 = Z) on one factor.
    pub fn pauli(factor: usize, k: usize) -> Self {
        DenseOperator {
            support: vec![factor],
            dims: vec![2],
            mat: linalg::pauli(k),
        }
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn adjoint(&self) -> Self {
        DenseOperator {
            support: self.support.clone(),
            dims: self.dims.clone(),
            mat: self.mat.adjoint(),
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        DenseOperator {
            support: self.support.clone(),
            dims: self.dims.clone(),
            mat: &self.mat * c,
        }
    }

    /// Product `self · other` after embedding both on the union of supports.
    pub fn compose(&self, other: &DenseOperator) -> Result<Self> {
        let (a, b) = common_support(self, other)?;
        Ok(DenseOperator {
            support: a.support.clone(),
            dims: a.dims.clone(),
            mat: matmul(&a.mat, &b.mat),
        })
    }

    pub fn add(&self, other: &DenseOperator) -> Result<Self> {
        let (a, b) = common_support(self, other)?;
        Ok(DenseOperator {
            support: a.support.clone(),
            dims: a.dims.clone(),
            mat: &a.mat + &b.mat,
        })
    }

    pub fn sub(&self, other: &DenseOperator) -> Result<Self> {
        self.add(&other.scale(-ONE))
    }

    pub fn commutator(&self, other: &DenseOperator) -> Result<Self> {
        self.compose(other)?.sub(&other.compose(self)?)
    }

    /// ‖U†U − 1‖_∞.
    pub fn unitarity_defect(&self) -> f64 {
        linalg::isometry_defect(&self.mat)
    }

    /// Extends the operator by identities to the factors in `support`
    /// (a superset of the current support), with given per-factor dims.
    pub fn extend_to(&self, support: &[usize], dims: &[usize]) -> Result<Self> {
        let mut local = Vec::with_capacity(self.support.len());
        for (&s, &d) in self.support.iter().zip(&self.dims) {
            let pos = support
                .iter()
                .position(|&x| x == s)
                .ok_or(Error::NotInSupport(s))?;
            if dims[pos] != d {
                return Err(Error::DimensionMismatch(format!(
                    "factor {s}: dim {d} vs {}",
                    dims[pos]
                )));
            }
            local.push(pos);
        }
        let relabeled = DenseOperator {
            support: local,
            dims: self.dims.clone(),
            mat: self.mat.clone(),
        };
        let full = embed(&relabeled, dims)?;
        DenseOperator::new(support.to_vec(), dims.to_vec(), full.mat)
    }
}

fn common_support(a: &DenseOperator, b: &DenseOperator) -> Result<(DenseOperator, DenseOperator)> {
    let mut pairs: Vec<(usize, usize)> = a
        .support
        .iter()
        .copied()
        .zip(a.dims.iter().copied())
        .collect();
    for (&s, &d) in b.support.iter().zip(&b.dims) {
        match pairs.iter().find(|p| p.0 == s) {
            Some(p) if p.1 != d => {
                return Err(Error::DimensionMismatch(format!(
                    "factor {s}: dim {} vs {d}",
                    p.1
                )))
            }
            Some(_) => {}
            None => pairs.push((s, d)),
        }
    }
    pairs.sort();
    let support: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let dims: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    Ok((a.extend_to(&support, &dims)?, b.extend_to(&support, &dims)?))
}

/// `perm[new_index] = old_index` when factors are reordered so that new
/// factor `i` is old factor `order[i]`.
fn factor_permutation(old_dims: &[usize], order: &[usize]) -> Vec<usize> {
    let old_strides = tensor::strides(old_dims);
    let new_dims: Vec<usize> = order.iter().map(|&k| old_dims[k]).collect();
    let d = product(old_dims);
    (0..d)
        .map(|i| {
            let dg = tensor::digits(i, &new_dims);
            dg.iter()
                .zip(order)
                .map(|(&x, &k)| x * old_strides[k])
                .sum()
        })
        .collect()
}

/// Normalized pure state over `factor_dims`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    dims: Vec<usize>,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn new(dims: Vec<usize>, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != product(&dims) {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for dimension {}",
                amps.len(),
                product(&dims)
            )));
        }
        let norm = linalg::vec_norm(&amps);
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized { norm });
        }
        Ok(StateVector { dims, amps })
    }

    /// Normalizes the amplitudes before validation.
    pub fn normalized(dims: Vec<usize>, amps: Vec<C64>) -> Result<Self> {
        let norm = linalg::vec_norm(&amps);
        if norm == 0.0 {
            return Err(Error::NotNormalized { norm });
        }
        StateVector::new(dims, amps.into_iter().map(|z| z / norm).collect())
    }

    pub fn basis(dims: Vec<usize>, digits: &[usize]) -> Result<Self> {
        if digits.len() != dims.len() || digits.iter().zip(&dims).any(|(a, b)| a >= b) {
            return Err(Error::DimensionMismatch("basis digits".into()));
        }
        let mut amps = vec![ZERO; product(&dims)];
        amps[tensor::from_digits(digits, &dims)] = ONE;
        Ok(StateVector { dims, amps })
    }

    pub fn zero(dims: Vec<usize>) -> Self {
        let mut amps = vec![ZERO; product(&dims)];
        amps[0] = ONE;
        StateVector { dims, amps }
    }

    pub fn random<R: Rng + ?Sized>(dims: Vec<usize>, rng: &mut R) -> Self {
        let amps = linalg::random_state(product(&dims), rng);
        StateVector { dims, amps }
    }

    /// Product of independently Haar-random single-factor states.
    pub fn random_product<R: Rng + ?Sized>(dims: Vec<usize>, rng: &mut R) -> Self {
        let mut amps = vec![ONE];
        for &d in &dims {
            let v = linalg::random_state(d, rng);
            amps = amps
                .iter()
                .flat_map(|a| v.iter().map(move |b| a * b))
                .collect();
        }
        StateVector { dims, amps }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        linalg::vec_norm(&self.amps)
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        linalg::inner(&self.amps, &other.amps)
    }

    /// `self ⊗ other`.
    pub fn tensor(&self, other: &StateVector) -> StateVector {
        let amps = self
            .amps
            .iter()
            .flat_map(|a| other.amps.iter().map(move |b| a * b))
            .collect();
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        StateVector { dims, amps }
    }

    /// Applies `op` in place; the operator's support indexes this state's factors.
    pub fn apply(&mut self, op: &DenseOperator) -> Result<()> {
        for (&s, &d) in op.support.iter().zip(&op.dims) {
            if s >= self.dims.len() {
                return Err(Error::SupportOutOfRange {
                    factor: s,
                    n: self.dims.len(),
                });
            }
            if self.dims[s] != d {
                return Err(Error::DimensionMismatch(format!(
                    "factor {s}: state dim {} vs operator dim {d}",
                    self.dims[s]
                )));
            }
        }
        apply_local(&mut self.amps, &self.dims, &op.support, &op.mat);
        Ok(())
    }

    /// Reduced density matrix on `region` (ascending factor order).
    pub fn reduced_density(&self, region: &[usize]) -> Result<DenseOperator> {
        let mut region = region.to_vec();
        region.sort_unstable();
        region.dedup();
        for &r in &region {
            if r >= self.dims.len() {
                return Err(Error::SupportOutOfRange {
                    factor: r,
                    n: self.dims.len(),
                });
            }
        }
        let t = SplitTable::new(&self.dims, &region);
        let m = CMat::from_fn(t.d_sub, t.d_rest, |s, r| self.amps[t.at(r, s)]);
        let rho = matmul(&m, &m.adjoint());
        let dims = region.iter().map(|&k| self.dims[k]).collect();
        DenseOperator::new(region, dims, rho)
    }

    pub fn density(&self) -> DenseOperator {
        let v = linalg::to_dvector(&self.amps);
        let rho = &v * v.adjoint();
        DenseOperator {
            support: (0..self.dims.len()).collect(),
            dims: self.dims.clone(),
            mat: rho,
        }
    }
}

/// Applies a dense matrix acting on `factors` (in that order) to a state vector.
pub fn apply_local(amps: &mut [C64], dims: &[usize], factors: &[usize], mat: &CMat) {
    let t = SplitTable::new(dims, factors);
    debug_assert_eq!(mat.nrows(), t.d_sub);
    // Gather into columns (one per rest index), multiply, scatter back.
    let g = CMat::from_fn(t.d_sub, t.d_rest, |s, r| amps[t.at(r, s)]);
    let out = matmul(mat, &g);
    for r in 0..t.d_rest {
        for s in 0..t.d_sub {
            amps[t.at(r, s)] = out[(s, r)];
        }
    }
}

/// `op ⊗ 1` on the complement, with support = every factor of `full_dims`.
pub fn embed(op: &DenseOperator, full_dims: &[usize]) -> Result<DenseOperator> {
    for (&s, &d) in op.support.iter().zip(&op.dims) {
        if s >= full_dims.len() {
            return Err(Error::SupportOutOfRange {
                factor: s,
                n: full_dims.len(),
            });
        }
        if full_dims[s] != d {
            return Err(Error::DimensionMismatch(format!(
                "factor {s}: operator dim {d} vs system dim {}",
                full_dims[s]
            )));
        }
    }
    let t = SplitTable::new(full_dims, &op.support);
    let d = product(full_dims);
    let mut m = CMat::zeros(d, d);
    for r in 0..t.d_rest {
        for a in 0..t.d_sub {
            let i = t.at(r, a);
            for b in 0..t.d_sub {
                let v = op.mat[(a, b)];
                if v != ZERO {
                    m[(i, t.at(r, b))] = v;
                }
            }
        }
    }
    Ok(DenseOperator {
        support: (0..full_dims.len()).collect(),
        dims: full_dims.to_vec(),
        mat: m,
    })
}

/// Traces out `traced_factors` (labels from `op.support`).
pub fn partial_trace(op: &DenseOperator, traced_factors: &[usize]) -> Result<DenseOperator> {
    let mut local = Vec::new();
    for &f in traced_factors {
        let pos = op
            .support
            .iter()
            .position(|&s| s == f)
            .ok_or(Error::NotInSupport(f))?;
        if !local.contains(&pos) {
            local.push(pos);
        }
    }
    let kept: Vec<usize> = (0..op.support.len()).filter(|k| !local.contains(k)).collect();
    let t = SplitTable::new(&op.dims, &kept);
    let mut m = CMat::zeros(t.d_sub, t.d_sub);
    for r in 0..t.d_rest {
        for a in 0..t.d_sub {
            let i = t.at(r, a);
            for b in 0..t.d_sub {
                m[(a, b)] += op.mat[(i, t.at(r, b))];
            }
        }
    }
    Ok(DenseOperator {
        support: kept.iter().map(|&k| op.support[k]).collect(),
        dims: kept.iter().map(|&k| op.dims[k]).collect(),
        mat: m,
    })
}

/// Haar twirl over `region_factors`: `(tr_R op / d_R) ⊗ 1_R`, on the same support.
pub fn twirl(op: &DenseOperator, region_factors: &[usize]) -> Result<DenseOperator> {
    let reduced = partial_trace(op, region_factors)?;
    let d_r: usize = op
        .support
        .iter()
        .zip(&op.dims)
        .filter(|(s, _)| region_factors.contains(s))
        .map(|(_, d)| d)
        .product();
    reduced
        .scale(C64::new(1.0 / d_r as f64, 0.0))
        .extend_to(&op.support, &op.dims)
}

/// Closest unitary in Frobenius norm, `K (K†K)^{-1/2}`.
pub fn polar_unitary(op: &DenseOperator) -> Result<DenseOperator> {
    let svd = op.mat.clone().svd(true, true);
    let sigma = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    if sigma <= SINGULAR_CUTOFF {
        return Err(Error::Singular { sigma });
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    Ok(DenseOperator {
        support: op.support.clone(),
        dims: op.dims.clone(),
        mat: matmul(&u, &v_t),
    })
}

/// Schatten norm selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schatten {
    One,
    Two,
    Inf,
}

pub fn schatten_norm(op: &DenseOperator, p: Schatten) -> f64 {
    matrix_schatten(&op.mat, p)
}

pub fn matrix_schatten(m: &CMat, p: Schatten) -> f64 {
    match p {
        Schatten::Two => linalg::frobenius(m),
        Schatten::Inf => linalg::op_norm(m),
        Schatten::One => linalg::singular_values(m).iter().sum(),
    }
}

/// Input accepted by [`entropy`].
pub enum StateOrDensity<'a> {
    Pure(&'a StateVector),
    Density(&'a DenseOperator),
}

/// Von Neumann entropy (bits) of the reduced state on `region_factors`.
pub fn entropy(input: StateOrDensity<'_>, region_factors: &[usize]) -> Result<f64> {
    let rho = match input {
        StateOrDensity::Pure(psi) => psi.reduced_density(region_factors)?,
        StateOrDensity::Density(rho) => {
            let vals = linalg::hermitian_eigenvalues(&rho.mat);
            let min = vals.first().copied().unwrap_or(0.0);
            if min < -1e-9 {
                return Err(Error::NotPsd { min_eig: min });
            }
            let traced: Vec<usize> = rho
                .support
                .iter()
                .copied()
                .filter(|s| !region_factors.contains(s))
                .collect();
            partial_trace(rho, &traced)?
        }
    };
    Ok(von_neumann_bits(&rho.mat))
}

/// Entropy in bits of a density matrix; eigenvalues below 1e-14 are dropped.
pub fn von_neumann_bits(rho: &CMat) -> f64 {
    linalg::hermitian_eigenvalues(rho)
        .into_iter()
        .filter(|&l| l > 1e-14)
        .map(|l| -l * l.log2())
        .sum::<f64>()
        .max(0.0)
}

/// CP map given by Kraus operators (rectangular, output × input).
#[derive(Clone, Debug)]
pub struct Channel {
    input_dims: Vec<usize>,
    output_dims: Vec<usize>,
    kraus: Vec<CMat>,
    subnormalized: bool,
}

impl Channel {
    pub fn new(input_dims: Vec<usize>, output_dims: Vec<usize>, kraus: Vec<CMat>) -> Result<Self> {
        Self::build(input_dims, output_dims, kraus, false)
    }

    /// Trace non-increasing map: Σ K†K ≤ 1.
    pub fn subnormalized(input_dims: Vec<usize>, output_dims: Vec<usize>, kraus: Vec<CMat>) -> Result<Self> {
        Self::build(input_dims, output_dims, kraus, true)
    }

    fn build(input_dims: Vec<usize>, output_dims: Vec<usize>, kraus: Vec<CMat>, sub: bool) -> Result<Self> {
        let din = product(&input_dims);
        let dout = product(&output_dims);
        if kraus.is_empty() {
            return Err(Error::Invalid("channel needs at least one Kraus operator".into()));
        }
        let mut sum = CMat::zeros(din, din);
        for k in &kraus {
            if k.nrows() != dout || k.ncols() != din {
                return Err(Error::DimensionMismatch(format!(
                    "Kraus operator {}x{} for channel {din} -> {dout}",
                    k.nrows(),
                    k.ncols()
                )));
            }
            sum += matmul(&k.adjoint(), k);
        }
        let diff = &sum - linalg::identity(din);
        if sub {
            let top = linalg::hermitian_eigenvalues(&diff).last().copied().unwrap_or(0.0);
            if top > INPUT_TOL {
                return Err(Error::NotTracePreserving { defect: top });
            }
        } else {
            let defect = linalg::op_norm(&diff);
            if defect > INPUT_TOL {
                return Err(Error::NotTracePreserving { defect });
            }
        }
        Ok(Channel {
            input_dims,
            output_dims,
            kraus,
            subnormalized: sub,
        })
    }

    pub fn unitary(dims: Vec<usize>, u: CMat) -> Result<Self> {
        Channel::new(dims.clone(), dims, vec![u])
    }

    pub fn identity(dims: Vec<usize>) -> Self {
        let d = product(&dims);
        Channel {
            input_dims: dims.clone(),
            output_dims: dims,
            kraus: vec![linalg::identity(d)],
            subnormalized: false,
        }
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    pub fn output_dims(&self) -> &[usize] {
        &self.output_dims
    }

    pub fn kraus(&self) -> &[CMat] {
        &self.kraus
    }

    pub fn is_subnormalized(&self) -> bool {
        self.subnormalized
    }

    pub fn input_dim(&self) -> usize {
        product(&self.input_dims)
    }

    pub fn output_dim(&self) -> usize {
        product(&self.output_dims)
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        let mut out = CMat::zeros(self.output_dim(), self.output_dim());
        for k in &self.kraus {
            out += linalg::conjugate(k, rho);
        }
        out
    }

    /// Sequential composition: `other ∘ self`.
    pub fn then(&self, other: &Channel) -> Result<Channel> {
        if self.output_dim() != other.input_dim() {
            return Err(Error::DimensionMismatch("channel composition".into()));
        }
        let mut kraus = Vec::with_capacity(self.kraus.len() * other.kraus.len());
        for b in &other.kraus {
            for a in &self.kraus {
                kraus.push(matmul(b, a));
            }
        }
        Ok(Channel {
            input_dims: self.input_dims.clone(),
            output_dims: other.output_dims.clone(),
            kraus,
            subnormalized: self.subnormalized || other.subnormalized,
        })
    }

    /// Normalized Choi state `(1/d_in) Σ_ij |i⟩⟨j| ⊗ Φ(|i⟩⟨j|)`.
    pub fn choi(&self) -> CMat {
        let din = self.input_dim();
        let dout = self.output_dim();
        let mut j = CMat::zeros(din * dout, din * dout);
        for k in &self.kraus {
            let v = nalgebra::DVector::from_fn(din * dout, |idx, _| {
                let (i, o) = (idx / dout, idx % dout);
                k[(o, i)]
            });
            j += &v * v.adjoint();
        }
        j * C64::new(1.0 / din as f64, 0.0)
    }
}

/// Lower and upper bound on the trace-normalized diamond distance
/// `½‖Φ1 − Φ2‖◇`: `lower = ½‖J1 − J2‖₁` on normalized Choi states and
/// `upper = d_in · lower`.
pub fn channel_distance_bounds(a: &Channel, b: &Channel) -> Result<(f64, f64)> {
    if a.input_dim() != b.input_dim() || a.output_dim() != b.output_dim() {
        return Err(Error::DimensionMismatch(format!(
            "channels {}->{} and {}->{}",
            a.input_dim(),
            a.output_dim(),
            b.input_dim(),
            b.output_dim()
        )));
    }
    let diff = a.choi() - b.choi();
    let lower = 0.5 * linalg::hermitian_trace_norm(&diff);
    Ok((lower, a.input_dim() as f64 * lower))
}

/// Distance between two isometric channels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsometryDistance {
    /// `2‖V − W‖_∞`, an upper bound on `‖V·V† − W·W†‖◇`.
    pub bound: f64,
    /// Exact `‖V·V† − W·W†‖◇` when both are square unitaries.
    pub exact: Option<f64>,
}

pub fn isometry_channel_distance(v: &CMat, w: &CMat) -> Result<IsometryDistance> {
    if v.shape() != w.shape() {
        return Err(Error::DimensionMismatch(format!(
            "isometries {:?} vs {:?}",
            v.shape(),
            w.shape()
        )));
    }
    for m in [v, w] {
        let defect = linalg::isometry_defect(m);
        if defect > INPUT_TOL {
            return Err(Error::NotIsometry { defect });
        }
    }
    let bound = 2.0 * linalg::op_norm(&(v - w));
    let exact = if v.nrows() == v.ncols() {
        let m = matmul(&v.adjoint(), w);
        let schur = nalgebra::Schur::new(m);
        let (_, t) = schur.unpack();
        let angles: Vec<f64> = (0..t.nrows()).map(|k| t[(k, k)].arg()).collect();
        let r = hull_distance_unit_circle(&angles);
        Some(2.0 * (1.0 - r * r).max(0.0).sqrt())
    } else {
        None
    };
    Ok(IsometryDistance { bound, exact })
}

/// Distance from the origin to the convex hull of unit-circle points `e^{iθ}`,
/// found by a one-dimensional search over supporting directions.
pub fn hull_distance_unit_circle(angles: &[f64]) -> f64 {
    use std::f64::consts::PI;
    if angles.is_empty() {
        return 0.0;
    }
    let mut a: Vec<f64> = angles.iter().map(|x| x.rem_euclid(2.0 * PI)).collect();
    a.sort_by(f64::total_cmp);
    // Distance = max over directions φ of min_k cos(θ_k − φ), clamped at 0.
    // The optimum bisects the largest gap's complement; search the gaps.
    let mut best = 0.0f64;
    for k in 0..a.len() {
        let next = if k + 1 < a.len() { a[k + 1] } else { a[0] + 2.0 * PI };
        let gap = next - a[k];
        if gap >= PI {
            let arc = 2.0 * PI - gap;
            best = best.max((arc / 2.0).cos());
        }
    }
    best.max(0.0)
}
