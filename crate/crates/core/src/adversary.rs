//! The entangling ("honest-but-curious") Bob.
//!
//! Instead of measuring, Bob entangles each incoming qubit with a basis
//! register `B[i]` held in `|+⟩` and a result register `H[i]`, commits
//! coherent copies of both, and after the basis announcement writes the
//! "bases agree" predicate, XORed with a superposed ordering qubit `S′`, into
//! `Γ[i]`. Measuring `Γ` lets him announce `(J0, J1)` such that for either
//! choice of `s` one half of the `S′` superposition has `J_s ⊆ T0`.
//!
//! Once the final message arrives, the part of Bob's state that matters is a
//! qutrit: `√w |d⟩ + √(1 − w) |?⟩` where `d` is Alice's bit decoded in the
//! good half. A fixed two-outcome POVM distinguishes the two hypotheses.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, re, Operator, StateVector, Tensor, EXACT_TOL};
use crate::protocol::{
    open_pairs, random_subset, BobOutput, BobParty, Lab, Message, ProtocolConfig, QubitBatch, TestOpening,
};
use crate::registers::RegisterId;
use crate::vault::CommitmentId;

/// Tolerance used when classifying the good-branch weight.
const WEIGHT_TOL: f64 = 1e-9;

fn proj(k: usize) -> Operator {
    StateVector::basis(2, k).projector()
}

/// `U1` on `(B, φ, H)`: copies `φ`, read in basis `B`, into `H`.
pub fn u1() -> Operator {
    let plus = StateVector::plus().projector();
    let minus = Operator::identity(2).sub(&plus);
    let x = Operator::pauli_x();
    let i2 = Operator::identity(2);
    let b0 = proj(0).tensor(&i2).add(&proj(1).tensor(&x));
    let b1 = plus.tensor(&i2).add(&minus.tensor(&x));
    proj(0).tensor(&b0).add(&proj(1).tensor(&b1))
}

/// `U2` on `(C, E, Ψ)`: copies the control into both `E` and `Ψ`.
pub fn u2() -> Operator {
    let x = Operator::pauli_x();
    proj(0).tensor(&Operator::identity(4)).add(&proj(1).tensor(&x.tensor(&x)))
}

/// `U3` on `(B, Γ)` for announced basis `a` and ordering value `s′`:
/// `Γ ⊕= [B ≠ a] ⊕ s′`.
pub fn u3(a: u8, s_prime: u8) -> Operator {
    let (same, diff) = (proj(a as usize), proj(1 - a as usize));
    let x = Operator::pauli_x();
    let i2 = Operator::identity(2);
    if s_prime == 0 {
        same.tensor(&i2).add(&diff.tensor(&x))
    } else {
        same.tensor(&x).add(&diff.tensor(&i2))
    }
}

/// Two-outcome POVM `{E0, I − E0}` on the effective qutrit `{|0⟩, |1⟩, |?⟩}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PovmPair {
    e0: Operator,
}

impl PovmPair {
    pub fn new(e0: Operator) -> Result<Self> {
        if e0.dim() != 3 {
            return Err(Error::InvalidPovm(format!("element has dimension {}", e0.dim())));
        }
        if e0.hermiticity_deviation() > EXACT_TOL {
            return Err(Error::InvalidPovm("element is not Hermitian".into()));
        }
        let ev = hermitian_eigenvalues(&e0);
        if ev.iter().any(|&l| !(-EXACT_TOL..=1.0 + EXACT_TOL).contains(&l)) {
            return Err(Error::InvalidPovm("eigenvalues outside [0, 1]".into()));
        }
        Ok(Self { e0 })
    }

    /// The reference element
    /// `E0 = (1/6)[[2+√3, −1, 1+√3], [−1, 2−√3, 1−√3], [1+√3, 1−√3, 2]]`.
    pub fn reference() -> Self {
        let r3 = libm::sqrt(3.0);
        let rows = [
            2.0 + r3,
            -1.0,
            1.0 + r3, //
            -1.0,
            2.0 - r3,
            1.0 - r3, //
            1.0 + r3,
            1.0 - r3,
            2.0,
        ];
        let e0 = Operator::from_real_rows(3, &rows).scaled(re(1.0 / 6.0));
        Self::new(e0).expect("reference element is a valid effect")
    }

    pub fn e0(&self) -> &Operator {
        &self.e0
    }

    pub fn e1(&self) -> Operator {
        Operator::identity(3).sub(&self.e0)
    }

    /// Probability that the outcome reads `k` on state `v`.
    pub fn probability(&self, k: u8, v: &StateVector) -> f64 {
        let p0 = self.e0.expectation(v).re.clamp(0.0, 1.0);
        if k == 0 {
            p0
        } else {
            1.0 - p0
        }
    }
}

/// `|Φ_b⟩ = (|b⟩ + |?⟩)/√2`.
pub fn phi_state(b: u8) -> StateVector {
    let h = core::f64::consts::FRAC_1_SQRT_2;
    let mut amps = [0.0; 3];
    amps[b as usize] = h;
    amps[2] = h;
    StateVector::from_real(&amps)
}

/// Success probability of `povm` on equiprobable `|Φ0⟩`, `|Φ1⟩`.
pub fn analytic_reliability(povm: &PovmPair) -> f64 {
    0.5 * povm.probability(0, &phi_state(0)) + 0.5 * povm.probability(1, &phi_state(1))
}

/// Bob's state restricted to what decides his guess.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveDecodeState {
    /// Squared norm of the half where `J_target ⊆ T0`.
    pub weight: f64,
    /// `β ⊕ parity` in the good half.
    pub label: u8,
    /// `√w |label⟩ + √(1 − w) |?⟩`.
    pub vector: StateVector,
    pub good_parity: u8,
    /// `|P(parity = 0) − 1/2|` in the other half, when it is present.
    pub fail_parity_bias: Option<f64>,
    /// The two halves are both present with weight 1/2 (otherwise one of
    /// them vanished and `S′` is effectively classical).
    pub coherent: bool,
}

/// What the cheat produced in one session.
#[derive(Clone, Debug, PartialEq)]
pub struct CheatReport {
    pub target: u8,
    pub weight: f64,
    pub label: u8,
    pub fail_parity_bias: Option<f64>,
    pub coherent: bool,
    pub povm_outcome: Option<u8>,
    pub p_correct: f64,
    pub branches: usize,
}

impl CheatReport {
    pub fn to_text(&self) -> String {
        let bias = self.fail_parity_bias.map_or_else(|| String::from("-"), |b| format!("{b:.8e}"));
        let outcome = self.povm_outcome.map_or_else(|| String::from("-"), |o| format!("{o}"));
        format!(
            "target={} weight={:.8e} label={} fail_bias={bias} coherent={} povm={outcome} p_correct={:.8e} branches={}",
            self.target, self.weight, self.label, self.coherent, self.p_correct, self.branches
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct IndexRegs {
    b: RegisterId,
    h: RegisterId,
}

/// The entangling Bob. `target` picks the bit he goes after in the 1-2
/// variant; in the all-or-nothing variant Alice's `s` decides.
#[derive(Clone, Debug)]
pub struct EntanglingBob {
    pub target: u8,
    pub povm: PovmPair,
    regs: Vec<IndexRegs>,
    commitments: Vec<(CommitmentId, CommitmentId)>,
    r: Vec<usize>,
    s_prime: Option<RegisterId>,
    parity: Option<RegisterId>,
    j: [Vec<usize>; 2],
    decoded: bool,
}

impl EntanglingBob {
    pub fn new(target: u8) -> Self {
        Self::with_povm(target, PovmPair::reference())
    }

    pub fn with_povm(target: u8, povm: PovmPair) -> Self {
        Self {
            target: target & 1,
            povm,
            regs: Vec::new(),
            commitments: Vec::new(),
            r: Vec::new(),
            s_prime: None,
            parity: None,
            j: [Vec::new(), Vec::new()],
            decoded: false,
        }
    }

    pub fn subsets(&self) -> (&[usize], &[usize]) {
        (&self.j[0], &self.j[1])
    }

    /// Step 2: entangle with each qubit and commit `Ψ[i]`, `Ψ′[i]`.
    pub fn attach_u1_and_commit(
        &mut self,
        lab: &mut Lab,
        config: &ProtocolConfig,
        batch: &QubitBatch,
    ) -> Result<Vec<(CommitmentId, CommitmentId)>> {
        let phis = lab.load_qubits(batch)?;
        let (u1, u2) = (u1(), u2());
        let zero = StateVector::basis(2, 0);
        self.regs.clear();
        self.commitments.clear();
        for (i, &phi) in phis.iter().enumerate() {
            let b = lab.add(format!("B[{i}]"), StateVector::plus())?;
            let h = lab.add(format!("H[{i}]"), zero.clone())?;
            lab.apply(&[b, phi, h], &u1)?;
            let e = lab.add(format!("E[{i}]"), zero.clone())?;
            let psi = lab.add(format!("Psi[{i}]"), zero.clone())?;
            lab.apply(&[b, e, psi], &u2)?;
            let e2 = lab.add(format!("E'[{i}]"), zero.clone())?;
            let psi2 = lab.add(format!("Psi'[{i}]"), zero.clone())?;
            lab.apply(&[h, e2, psi2], &u2)?;
            let cb = lab.commit(psi, config.bc_mode)?;
            let ch = lab.commit(psi2, config.bc_mode)?;
            self.regs.push(IndexRegs { b, h });
            self.commitments.push((cb, ch));
        }
        Ok(self.commitments.clone())
    }

    pub fn test_unveil(&mut self, lab: &mut Lab, r: &[usize]) -> Result<Vec<TestOpening>> {
        self.r = r.to_vec();
        open_pairs(lab, &self.commitments, r)
    }

    /// Step 4: `U3` conditioned on `S′ = |+⟩`, measure `Γ`, sample
    /// `J0 ⊆ {Γ = 0} − R` and `J1 ⊆ {Γ = 1} − R`.
    pub fn apply_u3_partition(
        &mut self,
        lab: &mut Lab,
        config: &ProtocolConfig,
        bases: &[u8],
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<usize>, Vec<usize>)> {
        if bases.len() != self.regs.len() {
            return Err(Error::Protocol(format!("{} bases announced for {} qubits", bases.len(), self.regs.len())));
        }
        let sp = lab.add("Sprime", StateVector::plus())?;
        self.s_prime = Some(sp);
        let ident = Operator::identity(2);
        let mut pools: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for (i, regs) in self.regs.iter().enumerate() {
            if self.r.contains(&i) {
                continue;
            }
            let gamma = lab.add(format!("Gamma[{i}]"), StateVector::basis(2, 0))?;
            lab.apply_conditioned(sp, &ident, &[regs.b, gamma], &[u3(bases[i], 0), u3(bases[i], 1)])?;
            let g = lab.measure(gamma)?.outcome;
            pools[g].push(i);
        }
        let k = config.subset_size;
        for (side, pool) in pools.iter().enumerate() {
            if pool.len() < k {
                return Err(Error::InfeasibleSubsets(format!("Gamma = {side} has {} < {k} indices", pool.len())));
            }
        }
        self.j = [random_subset(&pools[0], k, rng), random_subset(&pools[1], k, rng)];
        Ok((self.j[0].clone(), self.j[1].clone()))
    }

    /// Writes `⊕_{i ∈ J_t} H[i]` into a fresh parity register by splitting it
    /// in the `X` basis and applying `Z` to each `H[i]` on the `|−⟩` side.
    pub fn parity(&mut self, lab: &mut Lab, t: u8) -> Result<RegisterId> {
        if self.parity.is_some() {
            return Err(Error::TargetAlreadyDecoded);
        }
        let p = lab.add("Parity", StateVector::basis(2, 0))?;
        let ops = [Operator::identity(2), Operator::pauli_z()];
        let hadamard = Operator::hadamard();
        for &i in &self.j[t as usize] {
            lab.apply_conditioned(p, &hadamard, &[self.regs[i].h], &ops)?;
        }
        self.parity = Some(p);
        Ok(p)
    }

    /// Splits the current state by `S′` and reads off the effective qutrit.
    /// The good half is `S′ = t`, where `J_t` was drawn from the agreeing
    /// positions.
    pub fn build_effective_state(&self, lab: &Lab, t: u8, beta: u8) -> Result<EffectiveDecodeState> {
        let sp = self.s_prime.ok_or_else(|| Error::Protocol("no ordering register yet".into()))?;
        let p = self.parity.ok_or_else(|| Error::Protocol("parity not computed".into()))?;
        let good = lab.state.projected(sp, t as usize)?;
        let weight = good.norm_sqr().clamp(0.0, 1.0);
        let coherent = (weight - 0.5).abs() < WEIGHT_TOL;
        let classical = !(WEIGHT_TOL..=1.0 - WEIGHT_TOL).contains(&weight);
        if !coherent && !classical {
            return Err(Error::InconsistentEffectiveState { weight });
        }

        let mut good_parity = 0;
        if weight > WEIGHT_TOL {
            let p_zero = good.outcome_probabilities(p)?[0] / weight;
            if p_zero > 1.0 - WEIGHT_TOL {
                good_parity = 0;
            } else if p_zero < WEIGHT_TOL {
                good_parity = 1;
            } else {
                return Err(Error::NonDeterministicParity { p_zero });
            }
        }
        let fail_parity_bias = if weight < 1.0 - WEIGHT_TOL {
            let bad = lab.state.projected(sp, 1 - t as usize)?;
            let wb = bad.norm_sqr();
            Some((bad.outcome_probabilities(p)?[0] / wb - 0.5).abs())
        } else {
            None
        };

        let label = beta ^ good_parity;
        let mut amps = [0.0; 3];
        amps[label as usize] = libm::sqrt(weight);
        amps[2] = libm::sqrt(1.0 - weight);
        Ok(EffectiveDecodeState {
            weight,
            label,
            vector: StateVector::from_real(&amps),
            good_parity,
            fail_parity_bias,
            coherent,
        })
    }

    /// Guesses one bit from the effective state. Coherent: apply the POVM.
    /// Classical: measure `S′`; decode exactly in the good half, guess
    /// uniformly otherwise.
    fn guess(&self, lab: &mut Lab, eff: &EffectiveDecodeState, t: u8) -> Result<(u8, f64, Option<u8>)> {
        if eff.coherent {
            let p0 = self.povm.probability(0, &eff.vector);
            let outcome = u8::from(rand::Rng::random::<f64>(&mut lab.nature) >= p0);
            let p_correct = self.povm.probability(eff.label, &eff.vector);
            Ok((outcome, p_correct, Some(outcome)))
        } else {
            let sp = self.s_prime.expect("checked by build_effective_state");
            let s = lab.measure(sp)?.outcome as u8;
            if s == t {
                Ok((eff.label, 1.0, None))
            } else {
                let g = u8::from(rand::Rng::random::<bool>(&mut lab.nature));
                Ok((g, 0.5, None))
            }
        }
    }

    fn report(&self, lab: &Lab, t: u8, eff: &EffectiveDecodeState, p_correct: f64, outcome: Option<u8>) -> CheatReport {
        CheatReport {
            target: t,
            weight: eff.weight,
            label: eff.label,
            fail_parity_bias: eff.fail_parity_bias,
            coherent: eff.coherent,
            povm_outcome: outcome,
            p_correct,
            branches: lab.state.branch_count(),
        }
    }

    /// Step 5 decoding against the all-or-nothing final message.
    pub fn povm_decode(&mut self, lab: &mut Lab, s: u8, beta: u8) -> Result<BobOutput> {
        if self.decoded {
            return Err(Error::TargetAlreadyDecoded);
        }
        self.parity(lab, s)?;
        let eff = self.build_effective_state(lab, s, beta)?;
        let (bit, p_correct, outcome) = self.guess(lab, &eff, s)?;
        self.decoded = true;
        let cheat = self.report(lab, s, &eff, p_correct, outcome);
        Ok(BobOutput {
            bits: vec![bit],
            certain: vec![false],
            p_correct: Some(p_correct),
            target: None,
            cheat: Some(cheat),
        })
    }

    /// Step 5′ decoding of bit `target`; the other bit is a uniform guess.
    pub fn povm_decode_12ot(&mut self, lab: &mut Lab, betas: [u8; 2], rng: &mut ChaCha8Rng) -> Result<BobOutput> {
        if self.decoded {
            return Err(Error::TargetAlreadyDecoded);
        }
        let t = self.target;
        self.parity(lab, t)?;
        let eff = self.build_effective_state(lab, t, betas[t as usize])?;
        let (bit, p_correct, outcome) = self.guess(lab, &eff, t)?;
        self.decoded = true;
        let other = u8::from(rand::Rng::random::<bool>(rng));
        let mut bits = vec![other, other];
        bits[t as usize] = bit;
        let cheat = self.report(lab, t, &eff, p_correct, outcome);
        Ok(BobOutput {
            bits,
            certain: vec![false, false],
            p_correct: Some(p_correct),
            target: Some(t),
            cheat: Some(cheat),
        })
    }
}

impl BobParty for EntanglingBob {
    fn receive(
        &mut self,
        lab: &mut Lab,
        config: &ProtocolConfig,
        batch: &QubitBatch,
        _rng: &mut ChaCha8Rng,
    ) -> Result<Vec<(CommitmentId, CommitmentId)>> {
        self.attach_u1_and_commit(lab, config, batch)
    }

    fn test_unveil(&mut self, lab: &mut Lab, r: &[usize]) -> Result<Vec<TestOpening>> {
        EntanglingBob::test_unveil(self, lab, r)
    }

    fn partition(
        &mut self,
        lab: &mut Lab,
        config: &ProtocolConfig,
        bases: &[u8],
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<usize>, Vec<usize>)> {
        self.apply_u3_partition(lab, config, bases, rng)
    }

    fn decode(
        &mut self,
        lab: &mut Lab,
        _config: &ProtocolConfig,
        last: &Message,
        rng: &mut ChaCha8Rng,
    ) -> Result<BobOutput> {
        match *last {
            Message::FinalAoN { s, beta } => self.povm_decode(lab, s, beta),
            Message::Final12 { beta0, beta1 } => self.povm_decode_12ot(lab, [beta0, beta1], rng),
            ref m => Err(Error::Protocol(format!("cannot decode from {m}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn building_blocks_are_unitary() {
        assert!(u1().is_unitary());
        assert!(u2().is_unitary());
        for a in 0..2 {
            for s in 0..2 {
                assert!(u3(a, s).is_unitary());
            }
        }
    }

    #[test]
    fn u1_records_bb84_value() {
        use crate::registers::prepare_bb84;
        for a in 0..2u8 {
            for g in 0..2u8 {
                let inp =
                    StateVector::basis(2, a as usize).tensor(&prepare_bb84(a, g)).tensor(&StateVector::basis(2, 0));
                let out = u1().apply(&inp);
                // H must read g with certainty when B = a
                let p: f64 =
                    out.amps().iter().enumerate().filter(|(k, _)| k % 2 == g as usize).map(|(_, x)| x.norm_sqr()).sum();
                assert!((p - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reference_povm_reliability() {
        let povm = PovmPair::reference();
        let want = (2.0 + libm::sqrt(3.0)) / 4.0;
        assert!((analytic_reliability(&povm) - want).abs() < 1e-12);
        assert!((povm.probability(0, &phi_state(0)) - want).abs() < 1e-12);
        let q = StateVector::basis(3, 2);
        assert!((povm.probability(0, &q) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_effects() {
        assert!(PovmPair::new(Operator::identity(2)).is_err());
        assert!(PovmPair::new(Operator::identity(3).scaled(re(1.5))).is_err());
        let mut m = Operator::zeros(3);
        m.set(0, 1, re(0.3));
        assert!(PovmPair::new(m).is_err());
    }
}
