//! Lo's switch-unitary attack on ideal one-sided computations, and the check
//! that its key premise fails for the commitment-based protocol.
//!
//! A model is a unitary on `A ⊗ B` where `A` holds Alice's input
//! `i = (m0, m1)` (encoded `2·m0 + m1`) and `B` holds Bob's input `j`, his
//! output bit `o` and any residual registers. If Alice's reduced state is
//! independent of `j`, a Bob-local unitary turns the `j1` run into the `j2`
//! run after the fact, so Bob learns both messages.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    measure_factor, partial_trace, random_unitary, re, schmidt_decompose, trace_distance, Operator, StateVector,
    Tensor, C64, EXACT_TOL, RECON_TOL, ZERO,
};
use crate::protocol::{run_session_retrying, BobStrategy, ProtocolConfig, SessionResult, Variant};
use crate::seeding::derive_seed;

/// Number of classical Alice inputs.
pub const ALICE_INPUTS: usize = 4;

/// `m_j` for Alice input `i`.
pub fn message(i: usize, j: usize) -> u8 {
    let (m0, m1) = ((i >> 1) & 1, i & 1);
    (if j == 0 { m0 } else { m1 }) as u8
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdealProtocolModel {
    pub u: Operator,
    pub alice_dim: usize,
    /// Bob's registers, in order: input `j`, output `o`, then residuals.
    pub bob_dims: Vec<usize>,
    /// `f[i][j]`
    pub f: Vec<[u8; 2]>,
}

impl IdealProtocolModel {
    pub fn bob_dim(&self) -> usize {
        self.bob_dims.iter().product()
    }

    /// `|j, 0, 0, …⟩` on Bob's side.
    pub fn bob_input(&self, j: usize) -> StateVector {
        StateVector::basis(self.bob_dim(), j * self.bob_dim() / self.bob_dims[0])
    }

    /// `U |i⟩_A |j, 0…⟩_B`.
    pub fn run(&self, i: usize, j: usize) -> StateVector {
        self.u.apply(&StateVector::basis(self.alice_dim, i).tensor(&self.bob_input(j)))
    }

    /// Bob's state `ρ^{i,j}`.
    pub fn bob_state(&self, i: usize, j: usize) -> Result<Operator> {
        partial_trace(&self.run(i, j).projector(), &[self.alice_dim, self.bob_dim()], &[1])
    }

    /// Probability that Bob's output register reads `f(i, j)` in an honest run.
    pub fn output_correctness(&self, i: usize, j: usize) -> f64 {
        let mut dims = vec![self.alice_dim];
        dims.extend_from_slice(&self.bob_dims);
        let st = crate::linalg::strides(&dims);
        let want = self.f[i][j] as usize;
        self.run(i, j)
            .amps()
            .iter()
            .enumerate()
            .filter(|(k, _)| (k / st[2]) % dims[2] == want)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Alice and her dice purification for Bob input `j`:
    /// `|v_j⟩ = ½ Σ_i |i⟩_D ⊗ U(|i⟩_A |j⟩_B)`, laid out as `(D A) ⊗ B`.
    pub fn purified(&self, j: usize) -> StateVector {
        let d = self.alice_dim;
        let amp = re(1.0 / libm::sqrt(d as f64));
        let mut acc = StateVector::new(vec![ZERO; d * d * self.bob_dim()]);
        for i in 0..d {
            acc = acc.add(&StateVector::basis(d, i).tensor(&self.run(i, j)).scaled(amp));
        }
        acc
    }

    /// Reduced state of dice and Alice for Bob input `j`.
    pub fn alice_reduction(&self, j: usize) -> Result<Operator> {
        let dd = self.alice_dim * self.alice_dim;
        partial_trace(&self.purified(j).projector(), &[dd, self.bob_dim()], &[0])
    }
}

fn table() -> Vec<[u8; 2]> {
    (0..ALICE_INPUTS).map(|i| [message(i, 0), message(i, 1)]).collect()
}

fn permutation(dim: usize, map: impl Fn(usize) -> usize) -> Operator {
    let mut u = Operator::zeros(dim);
    for col in 0..dim {
        u.set(map(col), col, re(1.0));
    }
    u
}

/// The ideal 1-2 OT `|i⟩|j, o, x⟩ → |i⟩|j, o ⊕ m_j, x ⊕ m_{1−j}⟩`.
///
/// The residual `x` takes the message Bob did not ask for. Without it the
/// dice-purified reductions on Alice's side would depend on `j`.
pub fn build_ideal_ot() -> IdealProtocolModel {
    let u = permutation(ALICE_INPUTS * 8, |k| {
        let (i, j, o, x) = (k / 8, (k / 4) % 2, (k / 2) % 2, k % 2);
        let o2 = o ^ message(i, j) as usize;
        let x2 = x ^ message(i, 1 - j) as usize;
        i * 8 + j * 4 + o2 * 2 + x2
    });
    IdealProtocolModel { u, alice_dim: ALICE_INPUTS, bob_dims: vec![2, 2, 2], f: table() }
}

/// `|i⟩|j, o⟩ → |i⟩|j, o ⊕ m_j⟩` with nothing else on Bob's side. Computes
/// the right function, but Alice's reduction depends on `j`.
pub fn build_bare_ot() -> IdealProtocolModel {
    let u = permutation(ALICE_INPUTS * 4, |k| {
        let (i, j, o) = (k / 4, (k / 2) % 2, k % 2);
        i * 4 + j * 2 + (o ^ message(i, j) as usize)
    });
    IdealProtocolModel { u, alice_dim: ALICE_INPUTS, bob_dims: vec![2, 2], f: table() }
}

/// A Haar-random unitary on the bare layout, used as a non-concealing
/// instance.
pub fn build_random_model<R: Rng + ?Sized>(rng: &mut R) -> IdealProtocolModel {
    IdealProtocolModel {
        u: random_unitary(ALICE_INPUTS * 4, rng),
        alice_dim: ALICE_INPUTS,
        bob_dims: vec![2, 2],
        f: table(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwitchUnitary {
    pub op: Operator,
    pub from: usize,
    pub to: usize,
    /// Largest difference between matched Schmidt coefficients of `v_from`
    /// and `v_to`.
    pub coefficient_gap: f64,
    /// `‖(I ⊗ U)|v_from⟩ − |v_to⟩‖`
    pub residual: f64,
}

/// Orthonormal completion of `vecs` to a basis of `C^dim`.
fn complement(vecs: &[StateVector], dim: usize) -> Vec<StateVector> {
    let mut basis: Vec<StateVector> = vecs.to_vec();
    let mut extra = Vec::new();
    for k in 0..dim {
        if basis.len() == dim {
            break;
        }
        let mut v = StateVector::basis(dim, k);
        for _ in 0..2 {
            for b in &basis {
                v = v.sub(&b.scaled(b.inner(&v)));
            }
        }
        if let Some(n) = v.normalized().filter(|_| v.norm() > 1e-8) {
            basis.push(n.clone());
            extra.push(n);
        }
    }
    extra
}

fn identity_tensor(left: usize, u: &Operator, s: &StateVector) -> StateVector {
    Operator::identity(left).tensor(u).apply(s)
}

/// Builds `U^{j1,j2}` from matched Schmidt forms of the purified runs.
pub fn construct_switch_unitary(model: &IdealProtocolModel, j1: usize, j2: usize) -> Result<SwitchUnitary> {
    let distance = trace_distance(&model.alice_reduction(j1)?, &model.alice_reduction(j2)?)?;
    if distance >= RECON_TOL {
        return Err(Error::AliceReductionMismatch { distance });
    }
    let dl = model.alice_dim * model.alice_dim;
    let db = model.bob_dim();
    let v1 = model.purified(j1);
    let v2 = model.purified(j2);
    let s1 = schmidt_decompose(&v1, dl, db)?;
    let s2 = schmidt_decompose(&v2, dl, db)?;
    let coefficient_gap = s1.coefficients.iter().zip(&s2.coefficients).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let rank = s1.rank(EXACT_TOL);
    let mut targets = Vec::with_capacity(db);
    for k in 0..rank {
        // β′_k = (⟨α_k| ⊗ I)|v_to⟩ / a_k
        let alpha = &s1.left[k];
        let amps: Vec<C64> =
            (0..db).map(|y| (0..dl).map(|x| alpha.amps()[x].conj() * v2.amps()[x * db + y]).sum::<C64>()).collect();
        targets.push(StateVector::new(amps).scaled(re(1.0 / s1.coefficients[k])));
    }
    let sources: Vec<StateVector> = s1.right[..rank].to_vec();
    let source_rest = complement(&sources, db);
    let target_rest = complement(&targets, db);
    if source_rest.len() != target_rest.len() {
        return Err(Error::Numerical("switch completion has mismatched ranks".into()));
    }

    let mut op = Operator::zeros(db);
    for (t, s) in targets.iter().chain(&target_rest).zip(sources.iter().chain(&source_rest)) {
        op = op.add(&Operator::outer(t, s));
    }
    let deviation = op.unitarity_deviation();
    if deviation >= EXACT_TOL {
        return Err(Error::NotUnitary { deviation });
    }
    let residual = identity_tensor(dl, &op, &v1).sub(&v2).norm();
    if residual >= RECON_TOL {
        return Err(Error::Numerical(format!("switch leaves residual {residual:e}")));
    }
    Ok(SwitchUnitary { op, from: j1, to: j2, coefficient_gap, residual })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwitchReport {
    /// Trace distance of `U ρ^{i,from} U†` from `ρ^{i,to}` for each `i`.
    pub per_input: Vec<f64>,
    pub max_distance: f64,
    /// The same comparison for the input-averaged states.
    pub averaged_distance: f64,
}

pub fn verify_switch(model: &IdealProtocolModel, sw: &SwitchUnitary) -> Result<SwitchReport> {
    let u = &sw.op;
    let ud = u.adjoint();
    let db = model.bob_dim();
    let mut per_input = Vec::with_capacity(model.alice_dim);
    let mut avg_from = Operator::zeros(db);
    let mut avg_to = Operator::zeros(db);
    let w = re(1.0 / model.alice_dim as f64);
    for i in 0..model.alice_dim {
        let from = model.bob_state(i, sw.from)?;
        let to = model.bob_state(i, sw.to)?;
        let moved = u.matmul(&from).matmul(&ud);
        per_input.push(trace_distance(&moved, &to)?);
        avg_from = avg_from.add(&moved.scaled(w));
        avg_to = avg_to.add(&to.scaled(w));
    }
    let max_distance = per_input.iter().copied().fold(0.0, f64::max);
    let averaged_distance = trace_distance(&avg_from, &avg_to)?;
    Ok(SwitchReport { per_input, max_distance, averaged_distance })
}

fn measure_output<R: Rng + ?Sized>(
    model: &IdealProtocolModel,
    s: &StateVector,
    rng: &mut R,
) -> Result<(u8, StateVector)> {
    let mut dims = vec![model.alice_dim];
    dims.extend_from_slice(&model.bob_dims);
    let (o, _, post) = measure_factor(s, &dims, 2, rng)?;
    Ok((o as u8, post))
}

/// Runs with `j = 0`, reads the output, switches to `j = 1` and reads again.
pub fn double_extraction<R: Rng + ?Sized>(model: &IdealProtocolModel, i: usize, rng: &mut R) -> Result<(u8, u8)> {
    let sw = construct_switch_unitary(model, 0, 1)?;
    double_extraction_with(model, &sw, i, rng)
}

/// [`double_extraction`] with a prebuilt switch.
pub fn double_extraction_with<R: Rng + ?Sized>(
    model: &IdealProtocolModel,
    sw: &SwitchUnitary,
    i: usize,
    rng: &mut R,
) -> Result<(u8, u8)> {
    if i >= model.alice_dim {
        return Err(Error::InvalidSubsystem(format!("Alice input {i} out of range")));
    }
    let (m0, post) = measure_output(model, &model.run(i, sw.from), rng)?;
    let switched = identity_tensor(model.alice_dim, &sw.op, &post);
    let (m1, _) = measure_output(model, &switched, rng)?;
    Ok((m0, m1))
}

/// Alice's announcements `(β0, β1)` for one 1-2 session, recomputed under
/// both labelings of Bob's subsets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DependenceRecord {
    pub parity_i0: u8,
    pub parity_i1: u8,
    /// `(J0, J1) = (I0, I1)`
    pub beta_ordered: (u8, u8),
    /// `(J0, J1) = (I1, I0)`
    pub beta_swapped: (u8, u8),
}

impl DependenceRecord {
    pub fn from_session(r: &SessionResult) -> Result<Self> {
        let (i0, i1) = r
            .bob_subsets
            .as_ref()
            .ok_or_else(|| Error::Protocol("dependence records need an honest, completed session".into()))?;
        let bits = r.alice_bits();
        if bits.len() != 2 {
            return Err(Error::InvalidConfig("dependence records need the 1-2 variant".into()));
        }
        let p0 = r.alice.g_parity(i0);
        let p1 = r.alice.g_parity(i1);
        Ok(Self {
            parity_i0: p0,
            parity_i1: p1,
            beta_ordered: (bits[0] ^ p0, bits[1] ^ p1),
            beta_swapped: (bits[0] ^ p1, bits[1] ^ p0),
        })
    }

    /// Alice's effective input does not depend on the labeling.
    pub fn constant_in_j(&self) -> bool {
        self.beta_ordered == self.beta_swapped
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub hits: u64,
    pub trials: u64,
}

impl Tally {
    pub fn add(&mut self, hit: bool) {
        self.hits += u64::from(hit);
        self.trials += 1;
    }

    pub fn rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.hits as f64 / self.trials as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DependenceReport {
    pub records: Vec<DependenceRecord>,
    /// Sessions with `⊕_{I0} g ≠ ⊕_{I1} g`.
    pub parity_differs: u64,
    /// Among those, sessions whose two β-records differ.
    pub non_constant: u64,
    /// Sessions where a Bob-side relabeling leaves Alice's input unchanged,
    /// i.e. where the independent-input projection would be valid.
    pub projection_valid: u64,
    pub honest_joint: Tally,
    pub entangling_joint: Tally,
    pub entangling_targeted: Tally,
    pub entangling_untargeted: Tally,
}

impl DependenceReport {
    pub fn non_constant_rate(&self) -> f64 {
        if self.parity_differs == 0 {
            0.0
        } else {
            self.non_constant as f64 / self.parity_differs as f64
        }
    }

    pub fn add_honest(&mut self, r: &SessionResult) -> Result<()> {
        let rec = DependenceRecord::from_session(r)?;
        self.add_record(rec, r.correct.iter().all(|&c| c));
        Ok(())
    }

    pub fn add_record(&mut self, rec: DependenceRecord, honest_joint: bool) {
        if rec.parity_i0 != rec.parity_i1 {
            self.parity_differs += 1;
            self.non_constant += u64::from(!rec.constant_in_j());
        }
        self.projection_valid += u64::from(rec.constant_in_j());
        self.honest_joint.add(honest_joint);
        self.records.push(rec);
    }

    pub fn add_entangling(&mut self, r: &SessionResult) -> Result<()> {
        let t = r
            .bob
            .as_ref()
            .and_then(|b| b.target)
            .ok_or_else(|| Error::Protocol("entangling session has no target".into()))?;
        self.add_entangling_outcome(&r.correct, t);
        Ok(())
    }

    /// `correct` holds both bits; `target` is the one Bob went after.
    pub fn add_entangling_outcome(&mut self, correct: &[bool], target: u8) {
        let t = target as usize;
        self.entangling_joint.add(correct.iter().all(|&c| c));
        self.entangling_targeted.add(correct[t]);
        self.entangling_untargeted.add(correct[1 - t]);
    }
}

/// Sequential dependence check over `trials` sessions of each kind.
pub fn bcqot_dependence_check(config: &ProtocolConfig, trials: u64) -> Result<DependenceReport> {
    if config.variant != Variant::OneOutOfTwo {
        return Err(Error::InvalidConfig("dependence check needs the 1-2 variant".into()));
    }
    let mut report = DependenceReport::default();
    for k in 0..trials {
        let c = config.with_seed(derive_seed(config.seed, k));
        report.add_honest(&run_session_retrying(&c, BobStrategy::Honest)?)?;
        report.add_entangling(&run_session_retrying(&c, BobStrategy::Entangling { target: 0 })?)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ideal_ot_table_and_unitarity() {
        let m = build_ideal_ot();
        assert!(m.u.unitarity_deviation() < 1e-12);
        assert_eq!(m.f[2], [1, 0]);
        for i in 0..4 {
            for j in 0..2 {
                assert!((m.output_correctness(i, j) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn switch_moves_v0_to_v1() {
        let m = build_ideal_ot();
        let sw = construct_switch_unitary(&m, 0, 1).unwrap();
        assert!(sw.residual < 1e-9);
        assert!(sw.coefficient_gap < 1e-9);
        let rep = verify_switch(&m, &sw).unwrap();
        assert!(rep.max_distance < 1e-9, "{rep:?}");
        assert!(rep.averaged_distance < 1e-9);
        let same = construct_switch_unitary(&m, 1, 1).unwrap();
        assert!(same.residual < 1e-9);
    }

    #[test]
    fn non_concealing_models_are_rejected() {
        assert!(matches!(construct_switch_unitary(&build_bare_ot(), 0, 1), Err(Error::AliceReductionMismatch { .. })));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = build_random_model(&mut rng);
        assert!(matches!(construct_switch_unitary(&r, 0, 1), Err(Error::AliceReductionMismatch { .. })));
    }

    #[test]
    fn extraction_reads_both_messages() {
        let m = build_ideal_ot();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert_eq!(double_extraction(&m, 1, &mut rng).unwrap(), (0, 1));
        assert_eq!(double_extraction(&m, 3, &mut rng).unwrap(), (1, 1));
    }
}
