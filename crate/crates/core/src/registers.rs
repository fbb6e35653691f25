//! Named registers and the branched-product state representation.
//!
//! A [`BranchedState`] is a short superposition `Σ_b c_b |F_b⟩` where every
//! branch `|F_b⟩` is a tensor product of normalized factors, each factor a
//! dense vector over a small set of registers. Branches need not be orthogonal;
//! all probabilities and overlaps include the cross terms.
//!
//! Within a factor the registers are laid out left-factor-major in the order of
//! the factor's register list (see [`crate::linalg`]).

use alloc::borrow::Cow;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;
use core::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    apply_on_factors, re, reorder_factors, sample_index, strides, Operator, StateVector, Tensor, C64, EXACT_TOL, ONE,
    ZERO,
};

type AlignedBlock<'a> = (Cow<'a, [RegisterId]>, Cow<'a, StateVector>, Cow<'a, StateVector>);

pub const DEFAULT_BRANCH_CAP: usize = 64;
pub const DEFAULT_DENSE_CAP: usize = 1 << 14;

/// Branches whose amplitude falls below this are discarded.
const PRUNE_TOL: f64 = 1e-14;

/// Handle to a register allocated in a [`BranchedState`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RegisterId(u32);

impl RegisterId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub(crate) fn from_index(k: usize) -> Self {
        Self(k as u32)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegisterInfo {
    pub label: String,
    pub dim: usize,
}

/// Outcome of a projective computational-basis measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementRecord {
    pub register: RegisterId,
    pub outcome: usize,
    pub probability: f64,
}

/// One tensor factor of a branch.
#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    pub regs: Vec<RegisterId>,
    pub vec: StateVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub amp: C64,
    pub factors: Vec<Factor>,
}

impl Branch {
    fn locate(&self, reg: RegisterId) -> Option<(usize, usize)> {
        self.factors.iter().enumerate().find_map(|(fi, f)| f.regs.iter().position(|&r| r == reg).map(|p| (fi, p)))
    }
}

/// Elementary operations recorded when tracing is enabled. Replaying them on
/// an unfactored simulator reproduces the state exactly.
#[derive(Clone, Debug)]
pub enum TraceEvent {
    AddRegister { id: RegisterId, dim: usize, init: StateVector },
    Unitary { regs: Vec<RegisterId>, op: Operator },
    Collapse { reg: RegisterId, outcome: usize },
}

/// The BB84 encoding `|a, g⟩`: basis `a`, value `g`.
/// `|0,0⟩ = (1,0)`, `|0,1⟩ = (0,1)`, `|1,0⟩ = (1,1)/√2`, `|1,1⟩ = (1,−1)/√2`.
pub fn prepare_bb84(a: u8, g: u8) -> StateVector {
    assert!(a < 2 && g < 2, "BB84 labels are bits");
    let h = FRAC_1_SQRT_2;
    match (a, g) {
        (0, 0) => StateVector::basis(2, 0),
        (0, 1) => StateVector::basis(2, 1),
        (1, 0) => StateVector::from_real(&[h, h]),
        _ => StateVector::from_real(&[h, -h]),
    }
}

/// Joint pure state over named registers in branched-product form.
#[derive(Clone, Debug)]
pub struct BranchedState {
    registers: Vec<RegisterInfo>,
    branches: Vec<Branch>,
    branch_cap: usize,
    dense_cap: usize,
    trace: Option<Vec<TraceEvent>>,
}

impl Default for BranchedState {
    fn default() -> Self {
        Self::new()
    }
}

impl BranchedState {
    pub fn new() -> Self {
        Self::with_caps(DEFAULT_BRANCH_CAP, DEFAULT_DENSE_CAP)
    }

    pub fn with_caps(branch_cap: usize, dense_cap: usize) -> Self {
        Self {
            registers: Vec::new(),
            branches: vec![Branch { amp: ONE, factors: Vec::new() }],
            branch_cap,
            dense_cap,
            trace: None,
        }
    }

    /// Starts recording [`TraceEvent`]s. Must be called before any register
    /// is added for the trace to be replayable.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn trace(&self) -> Option<&[TraceEvent]> {
        self.trace.as_deref()
    }

    fn record(&mut self, ev: impl FnOnce() -> TraceEvent) {
        if let Some(t) = self.trace.as_mut() {
            t.push(ev());
        }
    }

    pub fn branch_cap(&self) -> usize {
        self.branch_cap
    }

    pub fn set_branch_cap(&mut self, cap: usize) {
        self.branch_cap = cap;
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn registers(&self) -> &[RegisterInfo] {
        &self.registers
    }

    pub fn register_ids(&self) -> impl Iterator<Item = RegisterId> + '_ {
        (0..self.registers.len() as u32).map(RegisterId)
    }

    pub fn label(&self, reg: RegisterId) -> &str {
        &self.registers[reg.index()].label
    }

    pub fn dim(&self, reg: RegisterId) -> usize {
        self.registers[reg.index()].dim
    }

    pub fn find(&self, label: &str) -> Option<RegisterId> {
        self.registers.iter().position(|r| r.label == label).map(|p| RegisterId(p as u32))
    }

    fn check_live(&self, reg: RegisterId) -> Result<()> {
        if reg.index() < self.registers.len() {
            Ok(())
        } else {
            Err(Error::UnknownRegister(format!("#{}", reg.0)))
        }
    }

    fn check_distinct_live(&self, regs: &[RegisterId]) -> Result<()> {
        for (k, &r) in regs.iter().enumerate() {
            self.check_live(r)?;
            if regs[..k].contains(&r) {
                return Err(Error::InvalidSubsystem(format!("register {} listed twice", self.label(r))));
            }
        }
        Ok(())
    }

    /// Allocates a register in product with the current state.
    pub fn add_register(&mut self, label: impl Into<String>, init: StateVector) -> Result<RegisterId> {
        let label = label.into();
        if self.find(&label).is_some() {
            return Err(Error::DuplicateRegister(label));
        }
        let init = init
            .normalized()
            .filter(|_| init.is_normalized())
            .ok_or_else(|| Error::Numerical(format!("initial state of {label} is not normalized")))?;
        let id = RegisterId(self.registers.len() as u32);
        let dim = init.dim();
        self.registers.push(RegisterInfo { label, dim });
        for b in &mut self.branches {
            b.factors.push(Factor { regs: vec![id], vec: init.clone() });
        }
        self.record(|| TraceEvent::AddRegister { id, dim, init });
        Ok(id)
    }

    fn merge_into_one(branch: &mut Branch, regs: &[RegisterId]) -> usize {
        let mut idx: Vec<usize> = regs.iter().map(|&r| branch.locate(r).expect("live register").0).collect();
        idx.sort_unstable();
        idx.dedup();
        if idx.len() == 1 {
            return idx[0];
        }
        let first = idx[0];
        let mut merged = branch.factors[first].clone();
        for &k in &idx[1..] {
            let f = &branch.factors[k];
            merged.vec = merged.vec.tensor(&f.vec);
            merged.regs.extend_from_slice(&f.regs);
        }
        for &k in idx[1..].iter().rev() {
            branch.factors.remove(k);
        }
        branch.factors[first] = merged;
        first
    }

    fn apply_in_branch(&self, branch: &mut Branch, regs: &[RegisterId], u: &Operator) {
        let fi = Self::merge_into_one(branch, regs);
        let f = &mut branch.factors[fi];
        let dims: Vec<usize> = f.regs.iter().map(|&r| self.dim(r)).collect();
        let positions: Vec<usize> = regs.iter().map(|r| f.regs.iter().position(|x| x == r).unwrap()).collect();
        apply_on_factors(f.vec.amps_mut(), &dims, &positions, u);
    }

    fn check_operator(&self, regs: &[RegisterId], u: &Operator) -> Result<()> {
        self.check_distinct_live(regs)?;
        let d: usize = regs.iter().map(|&r| self.dim(r)).product();
        if d != u.dim() {
            return Err(Error::DimensionMismatch { expected: d, actual: u.dim() });
        }
        let deviation = u.unitarity_deviation();
        if deviation >= EXACT_TOL {
            return Err(Error::NotUnitary { deviation });
        }
        Ok(())
    }

    /// Applies `u` (laid out over `regs` in the given order) to every branch.
    /// Factors touched by `regs` are merged; the branch structure is unchanged.
    pub fn apply_joint_unitary(&mut self, regs: &[RegisterId], u: &Operator) -> Result<()> {
        self.check_operator(regs, u)?;
        let mut branches = core::mem::take(&mut self.branches);
        for b in &mut branches {
            self.apply_in_branch(b, regs, u);
        }
        self.branches = branches;
        self.record(|| TraceEvent::Unitary { regs: regs.to_vec(), op: u.clone() });
        Ok(())
    }

    /// Applies the control-diagonal unitary `Σ_c |e_c⟩⟨e_c| ⊗ ops[c]` where
    /// `e_c` are the columns of `basis`, by splitting each branch along the
    /// control basis instead of entangling the control with the targets.
    ///
    /// The control register must sit in a factor of its own in every branch.
    pub fn apply_conditioned(
        &mut self,
        control: RegisterId,
        basis: &Operator,
        targets: &[RegisterId],
        ops: &[Operator],
    ) -> Result<()> {
        let mut all = vec![control];
        all.extend_from_slice(targets);
        self.check_distinct_live(&all)?;
        let dc = self.dim(control);
        if basis.dim() != dc || ops.len() != dc {
            return Err(Error::DimensionMismatch { expected: dc, actual: ops.len() });
        }
        let deviation = basis.unitarity_deviation();
        if deviation >= EXACT_TOL {
            return Err(Error::NotUnitary { deviation });
        }
        for op in ops {
            self.check_operator(targets, op)?;
        }
        let basis_vecs: Vec<StateVector> = (0..dc).map(|k| basis.column(k)).collect();

        let mut splits = Vec::with_capacity(self.branches.len());
        for b in &self.branches {
            let (fi, _) = b.locate(control).unwrap();
            if b.factors[fi].regs.len() != 1 {
                return Err(Error::ControlNotSeparable(self.label(control).into()));
            }
            let coefs: Vec<(usize, C64)> = basis_vecs
                .iter()
                .enumerate()
                .map(|(k, e)| (k, e.inner(&b.factors[fi].vec)))
                .filter(|(_, c)| c.norm() >= PRUNE_TOL)
                .collect();
            splits.push((fi, coefs));
        }
        let count: usize = splits.iter().map(|(_, c)| c.len()).sum();
        if count > self.branch_cap {
            return Err(Error::BranchCapExceeded { cap: self.branch_cap });
        }

        let mut out = Vec::with_capacity(count);
        for (b, (fi, coefs)) in core::mem::take(&mut self.branches).into_iter().zip(splits) {
            let last = coefs.len().saturating_sub(1);
            let mut owned = Some(b);
            for (n, (k, coef)) in coefs.into_iter().enumerate() {
                let mut nb = if n == last { owned.take().unwrap() } else { owned.as_ref().unwrap().clone() };
                nb.amp *= coef;
                nb.factors[fi].vec = basis_vecs[k].clone();
                self.apply_in_branch(&mut nb, targets, &ops[k]);
                out.push(nb);
            }
        }
        self.branches = out;

        if self.trace.is_some() {
            let dt: usize = ops[0].dim();
            let mut full = Operator::zeros(dc * dt);
            for (k, e) in basis_vecs.iter().enumerate() {
                full = full.add(&e.projector().tensor(&ops[k]));
            }
            self.record(|| TraceEvent::Unitary { regs: all, op: full });
        }
        Ok(())
    }

    /// Factor blocks of two branches aligned on a common partition: each
    /// returned triple is `(registers, vector in a, vector in b)` with both
    /// vectors laid out in the same register order.
    fn aligned_blocks<'a>(&self, a: &'a Branch, b: &'a Branch) -> Vec<AlignedBlock<'a>> {
        let same =
            a.factors.len() == b.factors.len() && a.factors.iter().zip(&b.factors).all(|(x, y)| x.regs == y.regs);
        if same {
            return a
                .factors
                .iter()
                .zip(&b.factors)
                .map(|(x, y)| (Cow::Borrowed(&x.regs[..]), Cow::Borrowed(&x.vec), Cow::Borrowed(&y.vec)))
                .collect();
        }

        // union-find over register indices
        let n = self.registers.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for f in a.factors.iter().chain(&b.factors) {
            let r0 = find(&mut parent, f.regs[0].index());
            for r in &f.regs[1..] {
                let rr = find(&mut parent, r.index());
                parent[rr] = r0;
            }
        }
        let mut roots: Vec<usize> = Vec::new();
        let mut group_a: Vec<Vec<usize>> = Vec::new();
        let mut group_b: Vec<Vec<usize>> = Vec::new();
        for (fi, f) in a.factors.iter().enumerate() {
            let r = find(&mut parent, f.regs[0].index());
            match roots.iter().position(|&x| x == r) {
                Some(g) => group_a[g].push(fi),
                None => {
                    roots.push(r);
                    group_a.push(vec![fi]);
                    group_b.push(Vec::new());
                }
            }
        }
        for (fi, f) in b.factors.iter().enumerate() {
            let r = find(&mut parent, f.regs[0].index());
            let g = roots.iter().position(|&x| x == r).expect("both branches cover all registers");
            group_b[g].push(fi);
        }

        let fuse = |br: &Branch, idx: &[usize]| -> (Vec<RegisterId>, StateVector) {
            let mut regs = br.factors[idx[0]].regs.clone();
            let mut v = br.factors[idx[0]].vec.clone();
            for &k in &idx[1..] {
                regs.extend_from_slice(&br.factors[k].regs);
                v = v.tensor(&br.factors[k].vec);
            }
            (regs, v)
        };
        let mut out = Vec::with_capacity(roots.len());
        for g in 0..roots.len() {
            let (ra, va) = fuse(a, &group_a[g]);
            let (rb, vb) = fuse(b, &group_b[g]);
            let vb = if ra == rb {
                vb
            } else {
                let dims: Vec<usize> = rb.iter().map(|&r| self.dim(r)).collect();
                let order: Vec<usize> = ra.iter().map(|r| rb.iter().position(|x| x == r).unwrap()).collect();
                reorder_factors(&vb, &dims, &order).expect("aligned blocks share registers")
            };
            out.push((Cow::Owned(ra), Cow::Owned(va), Cow::Owned(vb)));
        }
        out
    }

    /// `⟨F_a|Π_reg=k|F_b⟩` for every outcome `k` of `reg`.
    fn pair_outcome_overlaps(&self, a: &Branch, b: &Branch, reg: RegisterId) -> Vec<C64> {
        let d = self.dim(reg);
        let mut scalar = ONE;
        let mut per = vec![ZERO; d];
        for (regs, va, vb) in self.aligned_blocks(a, b) {
            match regs.iter().position(|&r| r == reg) {
                None => {
                    scalar *= va.inner(&vb);
                    if scalar == ZERO {
                        return vec![ZERO; d];
                    }
                }
                Some(pos) => {
                    let dims: Vec<usize> = regs.iter().map(|&r| self.dim(r)).collect();
                    let st = strides(&dims);
                    for (idx, (x, y)) in va.amps().iter().zip(vb.amps()).enumerate() {
                        per[(idx / st[pos]) % dims[pos]] += x.conj() * y;
                    }
                }
            }
        }
        per.iter().map(|p| p * scalar).collect()
    }

    fn pair_overlap(&self, a: &Branch, b: &Branch) -> C64 {
        self.aligned_blocks(a, b).iter().map(|(_, va, vb)| va.inner(vb)).product()
    }

    /// `‖ψ‖²` including cross terms between branches.
    pub fn norm_sqr(&self) -> f64 {
        let mut acc = ZERO;
        for (i, a) in self.branches.iter().enumerate() {
            acc += re(a.amp.norm_sqr());
            for b in &self.branches[i + 1..] {
                let t = a.amp.conj() * b.amp * self.pair_overlap(a, b);
                acc += t + t.conj();
            }
        }
        acc.re
    }

    /// `⟨self|other⟩` for two states over the same registers.
    pub fn inner(&self, other: &BranchedState) -> Result<C64> {
        if self.registers != other.registers {
            return Err(Error::InvalidSubsystem("states are over different registers".into()));
        }
        let mut acc = ZERO;
        for a in &self.branches {
            for b in &other.branches {
                acc += a.amp.conj() * b.amp * self.pair_overlap(a, b);
            }
        }
        Ok(acc)
    }

    /// Born probabilities of the computational-basis outcomes of `reg`.
    pub fn outcome_probabilities(&self, reg: RegisterId) -> Result<Vec<f64>> {
        self.check_live(reg)?;
        let d = self.dim(reg);
        let mut acc = vec![0.0; d];
        for (i, a) in self.branches.iter().enumerate() {
            let (fi, pos) = a.locate(reg).unwrap();
            let f = &a.factors[fi];
            let dims: Vec<usize> = f.regs.iter().map(|&r| self.dim(r)).collect();
            let st = strides(&dims);
            let w = a.amp.norm_sqr();
            for (idx, x) in f.vec.amps().iter().enumerate() {
                acc[(idx / st[pos]) % d] += w * x.norm_sqr();
            }
            for b in &self.branches[i + 1..] {
                let per = self.pair_outcome_overlaps(a, b, reg);
                let k = a.amp.conj() * b.amp;
                for (slot, p) in acc.iter_mut().zip(per) {
                    *slot += 2.0 * (k * p).re;
                }
            }
        }
        for p in &mut acc {
            *p = p.clamp(0.0, 1.0);
        }
        Ok(acc)
    }

    /// Projects `reg` onto outcome `k` without renormalizing.
    fn project_in_place(&mut self, reg: RegisterId, k: usize) {
        let mut kept = Vec::with_capacity(self.branches.len());
        for mut b in core::mem::take(&mut self.branches) {
            let (fi, pos) = b.locate(reg).unwrap();
            let f = &b.factors[fi];
            let dims: Vec<usize> = f.regs.iter().map(|&r| self.dim(r)).collect();
            let st = strides(&dims);
            let d = dims[pos];
            let rest: Vec<C64> =
                f.vec.amps().iter().enumerate().filter(|(idx, _)| (idx / st[pos]) % d == k).map(|(_, a)| *a).collect();
            let rest_vec = StateVector::new(rest);
            let n = rest_vec.norm();
            if n * b.amp.norm() < PRUNE_TOL {
                continue;
            }
            b.amp *= re(n);
            let mut regs = f.regs.clone();
            regs.remove(pos);
            let collapsed = Factor { regs: vec![reg], vec: StateVector::basis(d, k) };
            if regs.is_empty() {
                b.factors[fi] = collapsed;
            } else {
                b.factors[fi] = Factor { regs, vec: rest_vec.scaled(re(1.0 / n)) };
                b.factors.insert(fi, collapsed);
            }
            kept.push(b);
        }
        self.branches = kept;
    }

    /// Copy of the state projected onto `reg = k`, not renormalized. Its
    /// squared norm is the probability of that outcome.
    pub fn projected(&self, reg: RegisterId, k: usize) -> Result<BranchedState> {
        self.check_live(reg)?;
        if k >= self.dim(reg) {
            return Err(Error::InvalidSubsystem(format!("outcome {k} out of range")));
        }
        let mut s = self.clone();
        s.trace = None;
        s.project_in_place(reg, k);
        Ok(s)
    }

    /// Forces outcome `k` on `reg` and renormalizes. Returns its probability.
    pub fn collapse(&mut self, reg: RegisterId, k: usize) -> Result<f64> {
        let p = self.outcome_probabilities(reg)?[k];
        if p < PRUNE_TOL {
            return Err(Error::Numerical(format!("outcome {k} of {} has zero probability", self.label(reg))));
        }
        self.project_in_place(reg, k);
        let scale = re(1.0 / libm::sqrt(p));
        for b in &mut self.branches {
            b.amp *= scale;
        }
        self.record(|| TraceEvent::Collapse { reg, outcome: k });
        Ok(p)
    }

    /// Born-rule computational-basis measurement of `reg`.
    pub fn measure_register<R: Rng + ?Sized>(&mut self, reg: RegisterId, rng: &mut R) -> Result<MeasurementRecord> {
        let probs = self.outcome_probabilities(reg)?;
        let outcome = sample_index(&probs, rng);
        let probability = self.collapse(reg, outcome)?;
        Ok(MeasurementRecord { register: reg, outcome, probability })
    }

    /// Amplitude of the computational basis state whose digit for register
    /// `r` is `digits[r.index()]`.
    pub fn amplitude_at(&self, digits: &[usize]) -> C64 {
        let mut acc = ZERO;
        for b in &self.branches {
            let mut prod = b.amp;
            for f in &b.factors {
                let mut idx = 0;
                for &r in &f.regs {
                    idx = idx * self.dim(r) + digits[r.index()];
                }
                prod *= f.vec.amps()[idx];
                if prod == ZERO {
                    break;
                }
            }
            acc += prod;
        }
        acc
    }

    /// Full Kronecker expansion with registers in `order`.
    pub fn to_dense(&self, order: &[RegisterId]) -> Result<StateVector> {
        self.check_distinct_live(order)?;
        if order.len() != self.registers.len() {
            return Err(Error::InvalidSubsystem("dense order must list every live register".into()));
        }
        let dim = order.iter().try_fold(1usize, |acc, &r| acc.checked_mul(self.dim(r))).unwrap_or(usize::MAX);
        if dim > self.dense_cap {
            return Err(Error::DenseCapExceeded { dim, cap: self.dense_cap });
        }
        let mut acc = StateVector::new(vec![ZERO; dim]);
        for b in &self.branches {
            let mut regs: Vec<RegisterId> = Vec::new();
            let mut v = StateVector::new(vec![b.amp]);
            for f in &b.factors {
                regs.extend_from_slice(&f.regs);
                v = v.tensor(&f.vec);
            }
            if regs.is_empty() {
                acc = acc.add(&v);
                continue;
            }
            let dims: Vec<usize> = regs.iter().map(|&r| self.dim(r)).collect();
            let perm: Vec<usize> = order.iter().map(|r| regs.iter().position(|x| x == r).unwrap()).collect();
            acc = acc.add(&reorder_factors(&v, &dims, &perm)?);
        }
        Ok(acc)
    }

    /// Reduced density operator on `regs` (in that order).
    pub fn reduced_density(&self, regs: &[RegisterId]) -> Result<Operator> {
        self.check_distinct_live(regs)?;
        let kept_dim: usize = regs.iter().map(|&r| self.dim(r)).product();
        let mut rho = Operator::zeros(kept_dim);
        for a in &self.branches {
            for b in &self.branches {
                let mut scalar = a.amp * b.amp.conj();
                let mut sel_regs: Vec<RegisterId> = Vec::new();
                let mut va = StateVector::new(vec![ONE]);
                let mut vb = StateVector::new(vec![ONE]);
                for (bregs, xa, xb) in self.aligned_blocks(a, b) {
                    if bregs.iter().any(|r| regs.contains(r)) {
                        sel_regs.extend_from_slice(&bregs);
                        va = va.tensor(&xa);
                        vb = vb.tensor(&xb);
                    } else {
                        scalar *= xb.inner(&xa);
                    }
                }
                if scalar == ZERO {
                    continue;
                }
                // bring kept registers to the front in requested order
                let dims: Vec<usize> = sel_regs.iter().map(|&r| self.dim(r)).collect();
                let mut perm: Vec<usize> = regs.iter().map(|r| sel_regs.iter().position(|x| x == r).unwrap()).collect();
                let rest_pos: Vec<usize> = (0..sel_regs.len()).filter(|p| !perm.contains(p)).collect();
                perm.extend(rest_pos);
                let va = reorder_factors(&va, &dims, &perm)?;
                let vb = reorder_factors(&vb, &dims, &perm)?;
                let rest = va.dim() / kept_dim;
                for x in 0..kept_dim {
                    for y in 0..kept_dim {
                        let mut s = ZERO;
                        for t in 0..rest {
                            s += va.amps()[x * rest + t] * vb.amps()[y * rest + t].conj();
                        }
                        if s != ZERO {
                            rho.set(x, y, rho.get(x, y) + scalar * s);
                        }
                    }
                }
            }
        }
        Ok(rho)
    }

    /// Deterministic text dump: amplitudes at 12 significant digits, entries
    /// with modulus below 1e-12 omitted.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "branches {}", self.branches.len());
        for (bi, b) in self.branches.iter().enumerate() {
            let _ = writeln!(out, "branch {bi} amp {}", fmt_c(b.amp));
            for f in &b.factors {
                let labels: Vec<&str> = f.regs.iter().map(|&r| self.label(r)).collect();
                let _ = writeln!(out, "  factor [{}]", labels.join(","));
                let dims: Vec<usize> = f.regs.iter().map(|&r| self.dim(r)).collect();
                for (idx, a) in f.vec.amps().iter().enumerate() {
                    if a.norm() < 1e-12 {
                        continue;
                    }
                    let mut digits = Vec::with_capacity(dims.len());
                    let mut rem = idx;
                    for &d in dims.iter().rev() {
                        digits.push(rem % d);
                        rem /= d;
                    }
                    digits.reverse();
                    let ds: Vec<String> = digits.iter().map(|d| format!("{d}")).collect();
                    let _ = writeln!(out, "    |{}> {}", ds.join(","), fmt_c(*a));
                }
            }
        }
        out
    }
}

fn fmt_c(z: C64) -> String {
    let clean = |x: f64| if x.abs() < 1e-12 { 0.0 } else { x };
    format!("({:.11e}, {:.11e})", clean(z.re), clean(z.im))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{random_state, random_unitary};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bb84_encodings() {
        let h = FRAC_1_SQRT_2;
        assert_eq!(prepare_bb84(0, 1), StateVector::basis(2, 1));
        assert_eq!(prepare_bb84(0, 0), StateVector::basis(2, 0));
        assert_eq!(prepare_bb84(1, 0), StateVector::from_real(&[h, h]));
        assert_eq!(prepare_bb84(1, 1), StateVector::from_real(&[h, -h]));
    }

    #[test]
    fn duplicate_labels_rejected() {
        let mut s = BranchedState::new();
        s.add_register("A", StateVector::basis(2, 0)).unwrap();
        assert!(matches!(s.add_register("A", StateVector::basis(2, 0)), Err(Error::DuplicateRegister(_))));
    }

    #[test]
    fn identity_leaves_structure_unchanged() {
        let mut s = BranchedState::new();
        let a = s.add_register("A", StateVector::plus()).unwrap();
        let b = s.add_register("B", StateVector::basis(2, 1)).unwrap();
        let before = s.debug_dump();
        s.apply_joint_unitary(&[a], &Operator::identity(2)).unwrap();
        assert_eq!(s.debug_dump(), before);
        // a joint identity merges factors but does not change the dense state
        let dense = s.to_dense(&[a, b]).unwrap();
        s.apply_joint_unitary(&[a, b], &Operator::identity(4)).unwrap();
        assert_eq!(s.branch_count(), 1);
        assert!(s.to_dense(&[a, b]).unwrap().max_distance(&dense) < 1e-15);
    }

    #[test]
    fn unknown_register_and_bad_operator() {
        let mut s = BranchedState::new();
        let a = s.add_register("A", StateVector::plus()).unwrap();
        assert!(matches!(
            s.apply_joint_unitary(&[RegisterId(7)], &Operator::identity(2)),
            Err(Error::UnknownRegister(_))
        ));
        assert!(matches!(s.apply_joint_unitary(&[a], &Operator::identity(4)), Err(Error::DimensionMismatch { .. })));
        let bad = Operator::from_real_rows(2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(s.apply_joint_unitary(&[a], &bad), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn measure_plus_and_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut s = BranchedState::new();
        let a = s.add_register("A", StateVector::plus()).unwrap();
        let rec = s.measure_register(a, &mut rng).unwrap();
        assert!(rec.outcome < 2);
        assert!((rec.probability - 0.5).abs() < 1e-12);
        let again = s.measure_register(a, &mut rng).unwrap();
        assert_eq!(again.outcome, rec.outcome);
        assert!((again.probability - 1.0).abs() < 1e-12);

        let mut t = BranchedState::new();
        let b = t.add_register("B", StateVector::basis(2, 1)).unwrap();
        let rec = t.measure_register(b, &mut rng).unwrap();
        assert_eq!((rec.outcome, rec.probability), (1, 1.0));
    }

    #[test]
    fn measurement_frequency_on_plus() {
        let mut ones = 0usize;
        for seed in 0..10_000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = BranchedState::new();
            let a = s.add_register("A", StateVector::plus()).unwrap();
            ones += s.measure_register(a, &mut rng).unwrap().outcome;
        }
        let mean = ones as f64 / 10_000.0;
        assert!((mean - 0.5).abs() < 0.015, "mean {mean}");
    }

    #[test]
    fn conditioned_split_equals_controlled_gate() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut s = BranchedState::new();
        let c0 = s.add_register("C", random_state(2, &mut rng)).unwrap();
        let t = s.add_register("T", random_state(3, &mut rng)).unwrap();
        let u0 = random_unitary(3, &mut rng);
        let u1 = random_unitary(3, &mut rng);
        let mut dense = s.clone();
        s.apply_conditioned(c0, &Operator::identity(2), &[t], &[u0.clone(), u1.clone()]).unwrap();
        assert_eq!(s.branch_count(), 2);
        let p0 = StateVector::basis(2, 0).projector();
        let p1 = StateVector::basis(2, 1).projector();
        let cu = p0.tensor(&u0).add(&p1.tensor(&u1));
        dense.apply_joint_unitary(&[c0, t], &cu).unwrap();
        let a = s.to_dense(&[c0, t]).unwrap();
        let b = dense.to_dense(&[c0, t]).unwrap();
        assert!(a.max_distance(&b) < 1e-12);
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_orthogonal_branches_keep_cross_terms() {
        // split in the X basis and measure in Z: cross terms matter
        let mut s = BranchedState::new();
        let c0 = s.add_register("C", StateVector::basis(2, 0)).unwrap();
        let t = s.add_register("T", StateVector::basis(2, 0)).unwrap();
        let h = Operator::hadamard();
        // CNOT(T -> C) written as conditioned on C in the X basis
        s.apply_conditioned(c0, &h, &[t], &[Operator::identity(2), Operator::pauli_z()]).unwrap();
        assert_eq!(s.branch_count(), 2);
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        let p = s.outcome_probabilities(c0).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12, "{p:?}");
    }

    #[test]
    fn branch_cap_is_enforced() {
        let mut s = BranchedState::with_caps(2, DEFAULT_DENSE_CAP);
        let c0 = s.add_register("C", StateVector::from_real(&[0.6, 0.8])).unwrap();
        let c1 = s.add_register("D", StateVector::plus()).unwrap();
        s.apply_conditioned(c0, &Operator::identity(2), &[c1], &[Operator::identity(2), Operator::pauli_x()]).unwrap();
        let e = s.add_register("E", StateVector::plus()).unwrap();
        let err = s
            .apply_conditioned(e, &Operator::identity(2), &[c1], &[Operator::identity(2), Operator::pauli_z()])
            .unwrap_err();
        assert_eq!(err, Error::BranchCapExceeded { cap: 2 });
    }

    #[test]
    fn control_must_be_separable() {
        let mut s = BranchedState::new();
        let a = s.add_register("A", StateVector::plus()).unwrap();
        let b = s.add_register("B", StateVector::basis(2, 0)).unwrap();
        let cnot = Operator::from_real_rows(4, &[1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 0., 1., 0., 0., 1., 0.]);
        s.apply_joint_unitary(&[a, b], &cnot).unwrap();
        let c0 = s.add_register("C", StateVector::basis(2, 0)).unwrap();
        assert!(matches!(
            s.apply_conditioned(a, &Operator::identity(2), &[c0], &[Operator::identity(2), Operator::pauli_x()]),
            Err(Error::ControlNotSeparable(_))
        ));
    }

    #[test]
    fn dense_cap_is_enforced() {
        let mut s = BranchedState::with_caps(DEFAULT_BRANCH_CAP, 8);
        let regs: Vec<RegisterId> =
            (0..4).map(|k| s.add_register(format!("q{k}"), StateVector::plus()).unwrap()).collect();
        assert!(matches!(s.to_dense(&regs), Err(Error::DenseCapExceeded { dim: 16, cap: 8 })));
        assert_eq!(
            s.to_dense(&regs[..3]).unwrap_err(),
            Error::InvalidSubsystem("dense order must list every live register".into())
        );
    }

    #[test]
    fn to_dense_of_two_orthogonal_branches_has_unit_norm() {
        let mut s = BranchedState::new();
        let c0 = s.add_register("C", StateVector::plus()).unwrap();
        let t = s.add_register("T", StateVector::basis(2, 0)).unwrap();
        s.apply_conditioned(c0, &Operator::identity(2), &[t], &[Operator::identity(2), Operator::pauli_x()]).unwrap();
        let v = s.to_dense(&[t, c0]).unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-12);
        // (|00> + |11>)/√2 is invariant under the swap of order
        assert!((v.amps()[0].re - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((v.amps()[3].re - FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn reduced_density_of_bell_pair() {
        let mut s = BranchedState::new();
        let c0 = s.add_register("C", StateVector::plus()).unwrap();
        let t = s.add_register("T", StateVector::basis(2, 0)).unwrap();
        s.apply_conditioned(c0, &Operator::identity(2), &[t], &[Operator::identity(2), Operator::pauli_x()]).unwrap();
        let rho = s.reduced_density(&[t]).unwrap();
        assert!(rho.sub(&Operator::identity(2).scaled(re(0.5))).max_abs() < 1e-12);
        let both = s.reduced_density(&[c0, t]).unwrap();
        assert!((both.purity() - 1.0).abs() < 1e-12);
    }
}
