//! Dense complex linear algebra for small quantum systems.
//!
//! Composite spaces use a single Kronecker convention everywhere in the crate:
//! **left-factor-major**. For factors with dimensions `d_0, d_1, ..., d_{k-1}`
//! the basis state `|x_0, x_1, ..., x_{k-1}⟩` lives at flat index
//! `((x_0 · d_1 + x_1) · d_2 + x_2) ...`, so the last factor varies fastest.
//! `tensor(|0⟩, |1⟩)` is therefore `(0, 1, 0, 0)`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Tolerance used for exactness checks (normalization, unitarity, trace).
pub const EXACT_TOL: f64 = 1e-10;
/// Tolerance used for decomposition reconstructions.
pub const RECON_TOL: f64 = 1e-9;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// A ket in a finite-dimensional Hilbert space.
#[derive(Clone, PartialEq)]
pub struct StateVector {
    amps: Vec<C64>,
}

impl StateVector {
    pub fn new(amps: Vec<C64>) -> Self {
        assert!(!amps.is_empty(), "state vector must have positive dimension");
        Self { amps }
    }

    pub fn from_real(amps: &[f64]) -> Self {
        Self::new(amps.iter().map(|&a| re(a)).collect())
    }

    /// Computational basis vector `|k⟩` of dimension `dim`.
    pub fn basis(dim: usize, k: usize) -> Self {
        assert!(k < dim, "basis index {k} out of range for dimension {dim}");
        let mut amps = vec![ZERO; dim];
        amps[k] = ONE;
        Self { amps }
    }

    /// `(|0⟩ + |1⟩)/√2`
    pub fn plus() -> Self {
        let h = core::f64::consts::FRAC_1_SQRT_2;
        Self::from_real(&[h, h])
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn amps_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amps(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.norm_sqr())
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() < EXACT_TOL
    }

    /// Returns the normalized vector, or `None` for a (numerically) zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        if n < 1e-300 {
            return None;
        }
        Some(self.scaled(re(1.0 / n)))
    }

    pub fn scaled(&self, k: C64) -> Self {
        Self { amps: self.amps.iter().map(|a| a * k).collect() }
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &StateVector) -> C64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn add(&self, other: &StateVector) -> StateVector {
        debug_assert_eq!(self.dim(), other.dim());
        Self { amps: self.amps.iter().zip(&other.amps).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &StateVector) -> StateVector {
        debug_assert_eq!(self.dim(), other.dim());
        Self { amps: self.amps.iter().zip(&other.amps).map(|(a, b)| a - b).collect() }
    }

    /// `|self⟩⟨self|`
    pub fn projector(&self) -> Operator {
        Operator::outer(self, self)
    }

    /// Max-norm distance between two vectors.
    pub fn max_distance(&self, other: &StateVector) -> f64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

impl fmt::Debug for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.amps.iter()).finish()
    }
}

/// A square complex matrix, stored row-major.
#[derive(Clone, PartialEq)]
pub struct Operator {
    dim: usize,
    data: Vec<C64>,
}

impl Operator {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for k in 0..dim {
            m.data[k * dim + k] = ONE;
        }
        m
    }

    /// Builds an operator from row-major entries.
    pub fn from_rows(dim: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), dim * dim, "operator needs dim*dim entries");
        Self { dim, data }
    }

    pub fn from_real_rows(dim: usize, data: &[f64]) -> Self {
        Self::from_rows(dim, data.iter().map(|&x| re(x)).collect())
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for col in 0..dim {
                data.push(f(r, col));
            }
        }
        Self { dim, data }
    }

    pub fn diagonal(diag: &[C64]) -> Self {
        let dim = diag.len();
        Self::from_fn(dim, |r, col| if r == col { diag[r] } else { ZERO })
    }

    /// `|ket⟩⟨bra|`
    pub fn outer(ket: &StateVector, bra: &StateVector) -> Self {
        let dim = ket.dim();
        assert_eq!(dim, bra.dim());
        Self::from_fn(dim, |r, col| ket.amps[r] * bra.amps[col].conj())
    }

    /// Pauli X.
    pub fn pauli_x() -> Self {
        Self::from_real_rows(2, &[0.0, 1.0, 1.0, 0.0])
    }

    /// Pauli Z.
    pub fn pauli_z() -> Self {
        Self::from_real_rows(2, &[1.0, 0.0, 0.0, -1.0])
    }

    pub fn hadamard() -> Self {
        let h = core::f64::consts::FRAC_1_SQRT_2;
        Self::from_real_rows(2, &[h, h, h, -h])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, r: usize, col: usize) -> C64 {
        self.data[r * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, r: usize, col: usize, v: C64) {
        self.data[r * self.dim + col] = v;
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn column(&self, col: usize) -> StateVector {
        StateVector::new((0..self.dim).map(|r| self.get(r, col)).collect())
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |r, col| self.get(col, r).conj())
    }

    pub fn matmul(&self, other: &Operator) -> Self {
        assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut out = vec![ZERO; d * d];
        for r in 0..d {
            for k in 0..d {
                let a = self.data[r * d + k];
                if a == ZERO {
                    continue;
                }
                let row = &other.data[k * d..(k + 1) * d];
                for (o, b) in out[r * d..(r + 1) * d].iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        Self { dim: d, data: out }
    }

    pub fn add(&self, other: &Operator) -> Self {
        assert_eq!(self.dim, other.dim);
        Self { dim: self.dim, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Operator) -> Self {
        assert_eq!(self.dim, other.dim);
        Self { dim: self.dim, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    pub fn scaled(&self, k: C64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|a| a * k).collect() }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|k| self.get(k, k)).sum()
    }

    /// Matrix-vector product without any unitarity check.
    pub fn apply(&self, s: &StateVector) -> StateVector {
        assert_eq!(self.dim, s.dim());
        let d = self.dim;
        let amps =
            (0..d).map(|r| self.data[r * d..(r + 1) * d].iter().zip(&s.amps).map(|(a, b)| a * b).sum()).collect();
        StateVector { amps }
    }

    /// `⟨s|self|s⟩`
    pub fn expectation(&self, s: &StateVector) -> C64 {
        s.inner(&self.apply(s))
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// `‖U†U − I‖_max`
    pub fn unitarity_deviation(&self) -> f64 {
        self.adjoint().matmul(self).sub(&Operator::identity(self.dim)).max_abs()
    }

    pub fn is_unitary(&self) -> bool {
        self.unitarity_deviation() < EXACT_TOL
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        self.sub(&self.adjoint()).max_abs()
    }

    /// Density operator check: Hermitian, unit trace, positive semidefinite,
    /// all to within [`EXACT_TOL`].
    pub fn is_density(&self) -> bool {
        if self.hermiticity_deviation() > EXACT_TOL {
            return false;
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > EXACT_TOL || tr.im.abs() > EXACT_TOL {
            return false;
        }
        hermitian_eigenvalues(self).iter().all(|&e| e >= -EXACT_TOL)
    }

    /// Purity `tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        self.matmul(self).trace().re
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        Self::from_fn(m.nrows(), |r, col| m[(r, col)])
    }
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for r in 0..self.dim {
            list.entry(&&self.data[r * self.dim..(r + 1) * self.dim]);
        }
        list.finish()
    }
}

/// Kronecker product, left-factor-major.
pub trait Tensor {
    fn tensor(&self, other: &Self) -> Self;
}

impl Tensor for StateVector {
    fn tensor(&self, other: &Self) -> Self {
        let mut amps = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        StateVector { amps }
    }
}

impl Tensor for Operator {
    fn tensor(&self, other: &Self) -> Self {
        let (da, db) = (self.dim, other.dim);
        Operator::from_fn(da * db, |r, col| self.get(r / db, col / db) * other.get(r % db, col % db))
    }
}

pub fn tensor<T: Tensor>(a: &T, b: &T) -> T {
    a.tensor(b)
}

/// Kronecker product of a non-empty list of factors.
pub fn tensor_all<T: Tensor + Clone>(factors: &[T]) -> T {
    let (first, rest) = factors.split_first().expect("tensor_all needs at least one factor");
    rest.iter().fold(first.clone(), |acc, f| acc.tensor(f))
}

/// Applies `u` to `s`, checking dimensions and unitarity.
pub fn apply_unitary(u: &Operator, s: &StateVector) -> Result<StateVector> {
    if u.dim() != s.dim() {
        return Err(Error::DimensionMismatch { expected: u.dim(), actual: s.dim() });
    }
    let deviation = u.unitarity_deviation();
    if deviation >= EXACT_TOL {
        return Err(Error::NotUnitary { deviation });
    }
    Ok(u.apply(s))
}

/// Mixed-radix helpers for composite index arithmetic.
pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

fn validate_keep(dims: &[usize], keep: &[usize]) -> Result<()> {
    for (pos, &k) in keep.iter().enumerate() {
        if k >= dims.len() {
            return Err(Error::InvalidSubsystem(alloc::format!("factor {k} out of range for {} factors", dims.len())));
        }
        if keep[..pos].contains(&k) {
            return Err(Error::InvalidSubsystem(alloc::format!("factor {k} listed twice")));
        }
    }
    Ok(())
}

/// Reduced operator on the factors listed in `keep` (in that order).
pub fn partial_trace(rho: &Operator, dims: &[usize], keep: &[usize]) -> Result<Operator> {
    let total: usize = dims.iter().product();
    if total != rho.dim() {
        return Err(Error::DimensionMismatch { expected: total, actual: rho.dim() });
    }
    validate_keep(dims, keep)?;
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !keep.contains(k)).collect();
    let st = strides(dims);
    let kept_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
    let kept_total: usize = kept_dims.iter().product();
    let traced_total: usize = traced_dims.iter().product();

    let offset = |sel: &[usize], sel_dims: &[usize], mut idx: usize| -> usize {
        let mut off = 0;
        for p in (0..sel.len()).rev() {
            off += (idx % sel_dims[p]) * st[sel[p]];
            idx /= sel_dims[p];
        }
        off
    };
    let kept_off: Vec<usize> = (0..kept_total).map(|i| offset(keep, &kept_dims, i)).collect();
    let traced_off: Vec<usize> = (0..traced_total).map(|i| offset(&traced, &traced_dims, i)).collect();

    Ok(Operator::from_fn(kept_total, |r, col| {
        traced_off.iter().map(|&t| rho.get(kept_off[r] + t, kept_off[col] + t)).sum()
    }))
}

/// Reorders the tensor factors of `s`: factor `k` of the result is factor
/// `order[k]` of the input.
pub fn reorder_factors(s: &StateVector, dims: &[usize], order: &[usize]) -> Result<StateVector> {
    let total: usize = dims.iter().product();
    if total != s.dim() {
        return Err(Error::DimensionMismatch { expected: total, actual: s.dim() });
    }
    if order.len() != dims.len() {
        return Err(Error::InvalidSubsystem("reorder needs a full permutation".into()));
    }
    validate_keep(dims, order)?;
    let st = strides(dims);
    let new_dims: Vec<usize> = order.iter().map(|&k| dims[k]).collect();
    let mut out = vec![ZERO; total];
    for (new_idx, slot) in out.iter_mut().enumerate() {
        let mut rem = new_idx;
        let mut old_idx = 0;
        for p in (0..order.len()).rev() {
            old_idx += (rem % new_dims[p]) * st[order[p]];
            rem /= new_dims[p];
        }
        *slot = s.amps[old_idx];
    }
    Ok(StateVector::new(out))
}

/// Applies `u` to the factors at `positions` (in that order) of a composite
/// vector with factor dimensions `dims`, in place.
pub(crate) fn apply_on_factors(amps: &mut [C64], dims: &[usize], positions: &[usize], u: &Operator) {
    let st = strides(dims);
    let sub_dims: Vec<usize> = positions.iter().map(|&p| dims[p]).collect();
    let sub_total: usize = sub_dims.iter().product();
    debug_assert_eq!(sub_total, u.dim());
    let rest: Vec<usize> = (0..dims.len()).filter(|p| !positions.contains(p)).collect();
    let rest_total: usize = rest.iter().map(|&p| dims[p]).product();

    let sub_off: Vec<usize> = (0..sub_total)
        .map(|mut i| {
            let mut off = 0;
            for q in (0..positions.len()).rev() {
                off += (i % sub_dims[q]) * st[positions[q]];
                i /= sub_dims[q];
            }
            off
        })
        .collect();

    let mut buf = vec![ZERO; sub_total];
    for mut r in 0..rest_total {
        let mut base = 0;
        for &p in rest.iter().rev() {
            base += (r % dims[p]) * st[p];
            r /= dims[p];
        }
        for (b, off) in buf.iter_mut().zip(&sub_off) {
            *b = amps[base + off];
        }
        for (row, off) in sub_off.iter().enumerate() {
            let mut acc = ZERO;
            for (col, b) in buf.iter().enumerate() {
                let m = u.get(row, col);
                if m != ZERO {
                    acc += m * b;
                }
            }
            amps[base + off] = acc;
        }
    }
}

/// Schmidt form `|s⟩ = Σ_k a_k |α_k⟩ ⊗ |β_k⟩` across a bipartition.
#[derive(Debug, Clone)]
pub struct Schmidt {
    /// Non-negative, descending.
    pub coefficients: Vec<f64>,
    pub left: Vec<StateVector>,
    pub right: Vec<StateVector>,
}

impl Schmidt {
    pub fn rank(&self, tol: f64) -> usize {
        self.coefficients.iter().filter(|&&a| a > tol).count()
    }

    pub fn reconstruct(&self) -> StateVector {
        let dim = self.left[0].dim() * self.right[0].dim();
        let mut acc = StateVector::new(vec![ZERO; dim]);
        for ((a, l), r) in self.coefficients.iter().zip(&self.left).zip(&self.right) {
            acc = acc.add(&l.tensor(r).scaled(re(*a)));
        }
        acc
    }
}

/// Schmidt decomposition of `s` over `left_dim ⊗ right_dim`.
///
/// Computed from the singular value decomposition of the reshaped coefficient
/// matrix `M[x][y] = s[x·right_dim + y]`. Ties among singular values keep the
/// order the SVD produced (stable sort), so the result is deterministic.
pub fn schmidt_decompose(s: &StateVector, left_dim: usize, right_dim: usize) -> Result<Schmidt> {
    if left_dim * right_dim != s.dim() {
        return Err(Error::DimensionMismatch { expected: left_dim * right_dim, actual: s.dim() });
    }
    let m = DMatrix::from_row_slice(left_dim, right_dim, s.amps());
    let svd = m.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Numerical("SVD produced no U".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD produced no V†".into()))?;
    let sv = svd.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap_or(core::cmp::Ordering::Equal));

    let mut coefficients = Vec::with_capacity(order.len());
    let mut left = Vec::with_capacity(order.len());
    let mut right = Vec::with_capacity(order.len());
    for k in order {
        coefficients.push(sv[k]);
        left.push(StateVector::new(u.column(k).iter().copied().collect()));
        right.push(StateVector::new(v_t.row(k).iter().copied().collect()));
    }
    Ok(Schmidt { coefficients, left, right })
}

/// Real eigenvalues of a Hermitian operator, ascending.
pub fn hermitian_eigenvalues(h: &Operator) -> Vec<f64> {
    let mut ev: Vec<f64> = h.to_nalgebra().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    ev
}

/// `½‖ρ − σ‖₁` for Hermitian arguments.
pub fn trace_distance(rho: &Operator, sigma: &Operator) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), actual: sigma.dim() });
    }
    let diff = rho.sub(sigma);
    let d = 0.5 * hermitian_eigenvalues(&diff).iter().map(|e| e.abs()).sum::<f64>();
    Ok(d.clamp(0.0, 1.0))
}

/// Computational-basis measurement of one factor of a composite pure state.
/// Returns `(outcome, probability, renormalized post-measurement state)`.
pub fn measure_factor<R: Rng + ?Sized>(
    s: &StateVector,
    dims: &[usize],
    factor: usize,
    rng: &mut R,
) -> Result<(usize, f64, StateVector)> {
    let total: usize = dims.iter().product();
    if total != s.dim() {
        return Err(Error::DimensionMismatch { expected: total, actual: s.dim() });
    }
    if factor >= dims.len() {
        return Err(Error::InvalidSubsystem(alloc::format!("factor {factor} out of range")));
    }
    let st = strides(dims);
    let d = dims[factor];
    let digit = |idx: usize| (idx / st[factor]) % d;
    let mut probs = vec![0.0; d];
    for (idx, a) in s.amps().iter().enumerate() {
        probs[digit(idx)] += a.norm_sqr();
    }
    let outcome = sample_index(&probs, rng);
    let p = probs[outcome];
    let scale = re(1.0 / libm::sqrt(p));
    let amps =
        s.amps().iter().enumerate().map(|(idx, a)| if digit(idx) == outcome { a * scale } else { ZERO }).collect();
    Ok((outcome, p, StateVector::new(amps)))
}

/// Samples an index from unnormalized non-negative weights.
pub fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    let mut last = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last = k;
        if x < w {
            return k;
        }
        x -= w;
    }
    last
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller; u1 in (0, 1]
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}

/// Haar-random unitary via QR of a complex Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Operator {
    let m = DMatrix::from_fn(dim, dim, |_, _| c(gaussian(rng), gaussian(rng)));
    let qr = m.qr();
    let mut q = qr.q();
    let r = qr.r();
    for col in 0..dim {
        let d = r[(col, col)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for row in 0..dim {
            q[(row, col)] *= phase;
        }
    }
    Operator::from_nalgebra(&q)
}

/// Haar-random normalized state.
pub fn random_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> StateVector {
    let v = StateVector::new((0..dim).map(|_| c(gaussian(rng), gaussian(rng))).collect());
    v.normalized().expect("gaussian vector is nonzero")
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::FRAC_1_SQRT_2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bell() -> StateVector {
        StateVector::from_real(&[FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2])
    }

    #[test]
    fn tensor_basis_bookkeeping() {
        let v = tensor(&StateVector::basis(2, 0), &StateVector::basis(2, 1));
        assert_eq!(v, StateVector::from_real(&[0.0, 1.0, 0.0, 0.0]));
        assert_eq!(tensor(&Operator::identity(2), &Operator::identity(2)), Operator::identity(4));
        let pp = tensor(&StateVector::plus(), &StateVector::plus());
        assert!(pp.max_distance(&StateVector::from_real(&[0.5; 4])) < 1e-15);
    }

    #[test]
    fn tensor_is_associative_in_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_state(2, &mut rng);
        let b = random_state(3, &mut rng);
        let cc = random_state(2, &mut rng);
        let left = tensor(&tensor(&a, &b), &cc);
        assert!(left.max_distance(&tensor(&a, &tensor(&b, &cc))) < 1e-15);
        // layout is exact on basis vectors
        for (i, j, k) in [(0, 0, 0), (1, 2, 1), (0, 1, 1)] {
            let (x, y, z) = (StateVector::basis(2, i), StateVector::basis(3, j), StateVector::basis(2, k));
            let l = tensor(&tensor(&x, &y), &z);
            assert_eq!(l, tensor(&x, &tensor(&y, &z)));
            assert_eq!(l, StateVector::basis(12, (i * 3 + j) * 2 + k));
        }
    }

    #[test]
    fn apply_unitary_examples() {
        let one = apply_unitary(&Operator::pauli_x(), &StateVector::basis(2, 0)).unwrap();
        assert_eq!(one, StateVector::basis(2, 1));
        let h = apply_unitary(&Operator::hadamard(), &StateVector::basis(2, 0)).unwrap();
        assert!(h.max_distance(&StateVector::plus()) < 1e-15);
    }

    #[test]
    fn apply_unitary_errors() {
        let err = apply_unitary(&Operator::identity(4), &StateVector::basis(2, 0)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        let bad = Operator::from_real_rows(2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(apply_unitary(&bad, &StateVector::basis(2, 0)), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn partial_trace_of_bell_is_maximally_mixed() {
        let rho = bell().projector();
        let red = partial_trace(&rho, &[2, 2], &[1]).unwrap();
        assert!(red.sub(&Operator::identity(2).scaled(re(0.5))).max_abs() < 1e-15);
    }

    #[test]
    fn partial_trace_rejects_bad_subsets() {
        let rho = bell().projector();
        assert!(partial_trace(&rho, &[2, 2], &[2]).is_err());
        assert!(partial_trace(&rho, &[2, 2], &[0, 0]).is_err());
        assert!(partial_trace(&rho, &[2, 3], &[0]).is_err());
    }

    #[test]
    fn partial_trace_keeps_order_of_keep_list() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_state(2, &mut rng).projector();
        let b = random_state(3, &mut rng).projector();
        let ab = a.tensor(&b);
        let swapped = partial_trace(&ab, &[2, 3], &[1, 0]).unwrap();
        assert!(swapped.sub(&b.tensor(&a)).max_abs() < 1e-12);
    }

    #[test]
    fn schmidt_examples() {
        let s = schmidt_decompose(&bell(), 2, 2).unwrap();
        assert!((s.coefficients[0] - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((s.coefficients[1] - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(s.reconstruct().max_distance(&bell()) < 1e-12);

        let prod = tensor(&StateVector::plus(), &StateVector::basis(2, 1));
        let s = schmidt_decompose(&prod, 2, 2).unwrap();
        assert!((s.coefficients[0] - 1.0).abs() < 1e-12);
        assert_eq!(s.rank(1e-9), 1);
    }

    #[test]
    fn trace_distance_examples() {
        let zero = StateVector::basis(2, 0).projector();
        let one = StateVector::basis(2, 1).projector();
        let mixed = Operator::identity(2).scaled(re(0.5));
        assert!(trace_distance(&zero, &zero).unwrap() < 1e-15);
        assert!((trace_distance(&zero, &one).unwrap() - 1.0).abs() < 1e-12);
        assert!((trace_distance(&mixed, &zero).unwrap() - 0.5).abs() < 1e-12);
        assert!(trace_distance(&zero, &Operator::identity(3)).is_err());
    }

    #[test]
    fn reorder_swaps_factors() {
        let v = tensor(&StateVector::basis(2, 1), &StateVector::basis(3, 2));
        let w = reorder_factors(&v, &[2, 3], &[1, 0]).unwrap();
        assert_eq!(w, tensor(&StateVector::basis(3, 2), &StateVector::basis(2, 1)));
    }

    #[test]
    fn apply_on_factors_matches_kronecker() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = random_state(12, &mut rng);
        let u = random_unitary(2, &mut rng);
        // act on the last factor of 3 ⊗ 2 ⊗ 2
        let full = Operator::identity(6).tensor(&u);
        let mut amps = s.amps().to_vec();
        apply_on_factors(&mut amps, &[3, 2, 2], &[2], &u);
        assert!(StateVector::new(amps).max_distance(&full.apply(&s)) < 1e-12);
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in [1, 2, 5, 16] {
            assert!(random_unitary(d, &mut rng).unitarity_deviation() < 1e-12);
        }
    }

    #[test]
    fn measure_factor_collapses() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (k, p, post) = measure_factor(&bell(), &[2, 2], 0, &mut rng).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        assert_eq!(post, StateVector::basis(4, if k == 0 { 0 } else { 3 }));
    }
}
