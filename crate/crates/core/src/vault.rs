//! Ideal bit-commitment functionality.
//!
//! The vault holds committed registers on behalf of a trusted party. While a
//! commitment is open its register is off limits to both parties, and the
//! receiver sees only a fixed dummy state. A `NonBccc` commitment keeps the
//! register coherent inside the joint state; a `Bccc` commitment measures it
//! in the computational basis at commit time and stores the classical bit.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{re, Operator, StateVector};
use crate::registers::{BranchedState, RegisterId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BcMode {
    /// Generic secure commitment; accepts a register in superposition.
    NonBccc,
    /// Commitment with a certificate of classicality.
    Bccc,
}

impl fmt::Display for BcMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BcMode::NonBccc => "non-bccc",
            BcMode::Bccc => "bccc",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CommitmentId(pub usize);

impl fmt::Display for CommitmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommitStatus {
    Open,
    Unveiled(u8),
}

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    register: RegisterId,
    mode: BcMode,
    stored: Option<u8>,
    status: CommitStatus,
}

/// Result of an unveil. `honest` is the receiver's evidence check: it fails
/// only when the committer claims a value other than the committed one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UnveilRecord {
    pub id: CommitmentId,
    pub value: u8,
    pub honest: bool,
}

#[derive(Clone, Debug, Default)]
pub struct CommitmentVault {
    entries: Vec<Entry>,
}

impl CommitmentVault {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn open_count(&self) -> usize {
        self.entries.iter().filter(|e| e.status == CommitStatus::Open).count()
    }

    pub fn status(&self, id: CommitmentId) -> Result<CommitStatus> {
        self.entry(id).map(|e| e.status)
    }

    pub fn mode(&self, id: CommitmentId) -> Result<BcMode> {
        self.entry(id).map(|e| e.mode)
    }

    pub fn register(&self, id: CommitmentId) -> Result<RegisterId> {
        self.entry(id).map(|e| e.register)
    }

    fn entry(&self, id: CommitmentId) -> Result<&Entry> {
        self.entries.get(id.0).ok_or(Error::UnknownCommitment(id.0))
    }

    /// Whether `reg` is currently locked inside an open commitment.
    pub fn is_vaulted(&self, reg: RegisterId) -> bool {
        self.entries.iter().any(|e| e.register == reg && e.status == CommitStatus::Open)
    }

    /// Fails if any of `regs` is locked in the vault.
    pub fn ensure_accessible(&self, state: &BranchedState, regs: &[RegisterId]) -> Result<()> {
        match regs.iter().find(|&&r| self.is_vaulted(r)) {
            Some(&r) => Err(Error::RegisterVaulted(state.label(r).into())),
            None => Ok(()),
        }
    }

    /// Commits the qubit register `reg`.
    pub fn commit<R: Rng + ?Sized>(
        &mut self,
        state: &mut BranchedState,
        reg: RegisterId,
        mode: BcMode,
        rng: &mut R,
    ) -> Result<CommitmentId> {
        if reg.index() >= state.registers().len() {
            return Err(Error::UnknownRegister(format!("#{}", reg.index())));
        }
        if state.dim(reg) != 2 {
            return Err(Error::InvalidSubsystem(format!("{} is not a qubit", state.label(reg))));
        }
        if self.entries.iter().any(|e| e.register == reg) {
            return Err(Error::DoubleCommit(state.label(reg).into()));
        }
        let stored = match mode {
            BcMode::NonBccc => None,
            BcMode::Bccc => Some(state.measure_register(reg, rng)?.outcome as u8),
        };
        let id = CommitmentId(self.entries.len());
        self.entries.push(Entry { register: reg, mode, stored, status: CommitStatus::Open });
        Ok(id)
    }

    /// Opens commitment `id`. A coherent commitment is measured now, which
    /// collapses every register entangled with it.
    pub fn unveil<R: Rng + ?Sized>(
        &mut self,
        state: &mut BranchedState,
        id: CommitmentId,
        rng: &mut R,
    ) -> Result<UnveilRecord> {
        let entry = self.entries.get(id.0).ok_or(Error::UnknownCommitment(id.0))?;
        if let CommitStatus::Unveiled(_) = entry.status {
            return Err(Error::AlreadyUnveiled(id.0));
        }
        let value = match entry.stored {
            Some(v) => v,
            None => state.measure_register(entry.register, rng)?.outcome as u8,
        };
        self.entries[id.0].status = CommitStatus::Unveiled(value);
        Ok(UnveilRecord { id, value, honest: true })
    }

    /// Unveil in which the committer announces `claimed`; the evidence check
    /// fails when the claim differs from the committed value.
    pub fn unveil_claimed<R: Rng + ?Sized>(
        &mut self,
        state: &mut BranchedState,
        id: CommitmentId,
        claimed: u8,
        rng: &mut R,
    ) -> Result<UnveilRecord> {
        let mut rec = self.unveil(state, id, rng)?;
        rec.honest = rec.value == claimed;
        rec.value = claimed;
        Ok(rec)
    }

    /// What the receiver holds for commitment `id`: the maximally mixed
    /// dummy while open, the revealed basis state once unveiled.
    pub fn receiver_view(&self, id: CommitmentId) -> Result<Operator> {
        Ok(match self.entry(id)?.status {
            CommitStatus::Open => Operator::identity(2).scaled(re(0.5)),
            CommitStatus::Unveiled(v) => StateVector::basis(2, v as usize).projector(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{trace_distance, Operator, StateVector};
    use core::f64::consts::FRAC_1_SQRT_2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cnot() -> Operator {
        Operator::from_real_rows(4, &[1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 0., 1., 0., 0., 1., 0.])
    }

    /// (|0⟩_X|0⟩_C + |1⟩_X|1⟩_C)/√2 with X to be committed.
    fn entangled_pair() -> (BranchedState, RegisterId, RegisterId) {
        let mut s = BranchedState::new();
        let x = s.add_register("X", StateVector::plus()).unwrap();
        let cc = s.add_register("C", StateVector::basis(2, 0)).unwrap();
        s.apply_joint_unitary(&[x, cc], &cnot()).unwrap();
        (s, x, cc)
    }

    #[test]
    fn non_bccc_keeps_entanglement_and_unveils_correlated() {
        let mut zeros = 0;
        for seed in 0..2000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (mut s, x, cc) = entangled_pair();
            let mut v = CommitmentVault::new();
            let id = v.commit(&mut s, x, BcMode::NonBccc, &mut rng).unwrap();
            // still pure and entangled while committed
            let rho_c = s.reduced_density(&[cc]).unwrap();
            assert!((rho_c.get(0, 1).norm()).abs() < 1e-12);
            assert!((s.reduced_density(&[x, cc]).unwrap().purity() - 1.0).abs() < 1e-12);
            let rec = v.unveil(&mut s, id, &mut rng).unwrap();
            let c_val = s.measure_register(cc, &mut rng).unwrap().outcome as u8;
            assert_eq!(c_val, rec.value);
            zeros += usize::from(rec.value == 0);
        }
        let f = zeros as f64 / 2000.0;
        assert!((f - 0.5).abs() < 0.04, "{f}");
    }

    #[test]
    fn bccc_collapses_committer_coherence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = BranchedState::new();
        let x = s.add_register("X", StateVector::plus()).unwrap();
        let cc = s.add_register("C", StateVector::basis(2, 0)).unwrap();
        // put C in a basis correlated with X but check coherence of the joint XC
        s.apply_joint_unitary(&[x, cc], &cnot()).unwrap();
        let before = s.reduced_density(&[x, cc]).unwrap();
        assert!((before.get(0, 3).re - 0.5).abs() < 1e-12);
        let mut v = CommitmentVault::new();
        v.commit(&mut s, x, BcMode::Bccc, &mut rng).unwrap();
        let after = s.reduced_density(&[cc]).unwrap();
        assert!(after.get(0, 1).norm() < 1e-12);
        assert!((after.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn classical_commit_unveils_deterministically() {
        for mode in [BcMode::NonBccc, BcMode::Bccc] {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let mut s = BranchedState::new();
            let x = s.add_register("X", StateVector::basis(2, 1)).unwrap();
            let mut v = CommitmentVault::new();
            let id = v.commit(&mut s, x, mode, &mut rng).unwrap();
            assert_eq!(v.unveil(&mut s, id, &mut rng).unwrap().value, 1);
        }
    }

    #[test]
    fn unveil_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = BranchedState::new();
        let x = s.add_register("X", StateVector::basis(2, 0)).unwrap();
        let mut v = CommitmentVault::new();
        let id = v.commit(&mut s, x, BcMode::NonBccc, &mut rng).unwrap();
        assert_eq!(v.commit(&mut s, x, BcMode::NonBccc, &mut rng), Err(Error::DoubleCommit("X".into())));
        assert_eq!(v.unveil(&mut s, id, &mut rng).unwrap().value, 0);
        assert_eq!(v.unveil(&mut s, id, &mut rng), Err(Error::AlreadyUnveiled(0)));
        assert_eq!(v.unveil(&mut s, CommitmentId(9), &mut rng), Err(Error::UnknownCommitment(9)));
        assert_eq!(v.receiver_view(CommitmentId(9)), Err(Error::UnknownCommitment(9)));
    }

    #[test]
    fn vaulted_registers_are_inaccessible_until_unveiled() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = BranchedState::new();
        let x = s.add_register("X", StateVector::basis(2, 0)).unwrap();
        let mut v = CommitmentVault::new();
        let id = v.commit(&mut s, x, BcMode::NonBccc, &mut rng).unwrap();
        assert_eq!(v.ensure_accessible(&s, &[x]), Err(Error::RegisterVaulted("X".into())));
        v.unveil(&mut s, id, &mut rng).unwrap();
        assert!(v.ensure_accessible(&s, &[x]).is_ok());
    }

    #[test]
    fn receiver_view_is_concealing() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = BranchedState::new();
        let zero = s.add_register("Z", StateVector::basis(2, 0)).unwrap();
        let one = s.add_register("O", StateVector::basis(2, 1)).unwrap();
        let sup = s.add_register("S", StateVector::from_real(&[0.6, 0.8])).unwrap();
        let mut v = CommitmentVault::new();
        let ids = [zero, one, sup].map(|r| v.commit(&mut s, r, BcMode::NonBccc, &mut rng).unwrap());
        let views = ids.map(|id| v.receiver_view(id).unwrap());
        for w in &views[1..] {
            assert!(trace_distance(&views[0], w).unwrap() < 1e-12);
        }
        v.unveil(&mut s, ids[1], &mut rng).unwrap();
        assert_eq!(v.receiver_view(ids[1]).unwrap(), StateVector::basis(2, 1).projector());
    }

    #[test]
    fn claimed_unveil_detects_lies() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = BranchedState::new();
        let x = s.add_register("X", StateVector::basis(2, 1)).unwrap();
        let y = s.add_register("Y", StateVector::basis(2, 1)).unwrap();
        let mut v = CommitmentVault::new();
        let a = v.commit(&mut s, x, BcMode::NonBccc, &mut rng).unwrap();
        let b = v.commit(&mut s, y, BcMode::Bccc, &mut rng).unwrap();
        assert!(!v.unveil_claimed(&mut s, a, 0, &mut rng).unwrap().honest);
        assert!(v.unveil_claimed(&mut s, b, 1, &mut rng).unwrap().honest);
    }

    #[test]
    fn half_half_commitment_frequency() {
        let mut zeros = 0usize;
        for seed in 0..10_000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = BranchedState::new();
            let x = s.add_register("X", StateVector::from_real(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2])).unwrap();
            let mut v = CommitmentVault::new();
            let id = v.commit(&mut s, x, BcMode::NonBccc, &mut rng).unwrap();
            zeros += usize::from(v.unveil(&mut s, id, &mut rng).unwrap().value == 0);
        }
        let f = zeros as f64 / 10_000.0;
        assert!((f - 0.5).abs() < 0.015, "{f}");
    }
}
