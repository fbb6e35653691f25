//! Unfactored reference simulator.
//!
//! Stores the full joint state as a sparse map from basis digits to
//! amplitudes, with no branching or factoring. Replaying the operation trace
//! of a [`BranchedState`] here gives an independent computation of the same
//! vector.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{re, Operator, StateVector, C64, ZERO};
use crate::registers::{BranchedState, RegisterId, TraceEvent};

const DROP_TOL: f64 = 1e-15;

#[derive(Clone, Debug)]
pub struct SparseState {
    dims: Vec<usize>,
    amps: BTreeMap<Vec<u8>, C64>,
}

impl Default for SparseState {
    fn default() -> Self {
        Self::new()
    }
}

impl SparseState {
    pub fn new() -> Self {
        let mut amps = BTreeMap::new();
        amps.insert(Vec::new(), re(1.0));
        Self { dims: Vec::new(), amps }
    }

    /// Rebuilds a state from a recorded trace.
    pub fn replay(events: &[TraceEvent]) -> Result<Self> {
        let mut s = Self::new();
        for ev in events {
            match ev {
                TraceEvent::AddRegister { id, dim, init } => {
                    if id.index() != s.dims.len() {
                        return Err(Error::UnknownRegister(format!("#{} added out of order", id.index())));
                    }
                    s.add_register(*dim, init)?;
                }
                TraceEvent::Unitary { regs, op } => s.apply(regs, op)?,
                TraceEvent::Collapse { reg, outcome } => s.collapse(*reg, *outcome)?,
            }
        }
        Ok(s)
    }

    pub fn support(&self) -> usize {
        self.amps.len()
    }

    pub fn register_count(&self) -> usize {
        self.dims.len()
    }

    pub fn amplitude(&self, digits: &[u8]) -> C64 {
        self.amps.get(digits).copied().unwrap_or(ZERO)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn add_register(&mut self, dim: usize, init: &StateVector) -> Result<RegisterId> {
        if dim != init.dim() || dim > 256 {
            return Err(Error::DimensionMismatch { expected: dim, actual: init.dim() });
        }
        let mut next = BTreeMap::new();
        for (key, a) in &self.amps {
            for (k, x) in init.amps().iter().enumerate() {
                if x.norm() > DROP_TOL {
                    let mut nk = key.clone();
                    nk.push(k as u8);
                    next.insert(nk, a * x);
                }
            }
        }
        self.amps = next;
        self.dims.push(dim);
        Ok(RegisterId::from_index(self.dims.len() - 1))
    }

    pub fn apply(&mut self, regs: &[RegisterId], op: &Operator) -> Result<()> {
        let dims: Vec<usize> = regs
            .iter()
            .map(|r| self.dims.get(r.index()).copied().ok_or_else(|| Error::UnknownRegister(format!("#{}", r.index()))))
            .collect::<Result<_>>()?;
        let total: usize = dims.iter().product();
        if total != op.dim() {
            return Err(Error::DimensionMismatch { expected: total, actual: op.dim() });
        }
        let mut next: BTreeMap<Vec<u8>, C64> = BTreeMap::new();
        for (key, a) in &self.amps {
            let col = regs.iter().zip(&dims).fold(0, |acc, (r, d)| acc * d + key[r.index()] as usize);
            for row in 0..total {
                let m = op.get(row, col);
                if m.norm() <= DROP_TOL {
                    continue;
                }
                let mut nk = key.clone();
                let mut rem = row;
                for (r, d) in regs.iter().zip(&dims).rev() {
                    nk[r.index()] = (rem % d) as u8;
                    rem /= d;
                }
                *next.entry(nk).or_insert(ZERO) += a * m;
            }
        }
        next.retain(|_, v| v.norm() > DROP_TOL);
        self.amps = next;
        Ok(())
    }

    pub fn collapse(&mut self, reg: RegisterId, outcome: usize) -> Result<()> {
        let i = reg.index();
        if i >= self.dims.len() {
            return Err(Error::UnknownRegister(format!("#{i}")));
        }
        self.amps.retain(|k, _| k[i] as usize == outcome);
        let p = self.norm_sqr();
        if p <= DROP_TOL {
            return Err(Error::Numerical(format!("outcome {outcome} has zero probability")));
        }
        let scale = re(1.0 / libm::sqrt(p));
        for v in self.amps.values_mut() {
            *v *= scale;
        }
        Ok(())
    }

    /// `⟨self|state⟩`.
    pub fn overlap(&self, state: &BranchedState) -> Result<C64> {
        if state.registers().len() != self.dims.len() {
            return Err(Error::DimensionMismatch { expected: self.dims.len(), actual: state.registers().len() });
        }
        let mut digits = alloc::vec![0usize; self.dims.len()];
        let mut acc = ZERO;
        for (key, a) in &self.amps {
            for (d, k) in digits.iter_mut().zip(key) {
                *d = *k as usize;
            }
            acc += a.conj() * state.amplitude_at(&digits);
        }
        Ok(acc)
    }

    /// `|⟨self|state⟩|²` for normalized inputs.
    pub fn fidelity(&self, state: &BranchedState) -> Result<f64> {
        Ok(self.overlap(state)?.norm_sqr())
    }
}

/// Replays `state`'s trace and returns the fidelity between the two
/// representations.
pub fn trace_fidelity(state: &BranchedState) -> Result<f64> {
    let events = state.trace().ok_or_else(|| Error::Protocol("tracing was not enabled".into()))?;
    SparseState::replay(events)?.fidelity(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_unitary;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn replay_matches_branched_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = BranchedState::new();
        s.enable_trace();
        let a = s.add_register("a", StateVector::plus()).unwrap();
        let b = s.add_register("b", StateVector::basis(3, 1)).unwrap();
        let c = s.add_register("c", StateVector::basis(2, 0)).unwrap();
        s.apply_joint_unitary(&[b, c], &random_unitary(6, &mut rng)).unwrap();
        s.apply_conditioned(a, &Operator::identity(2), &[c], &[Operator::identity(2), Operator::pauli_x()]).unwrap();
        s.measure_register(b, &mut rng).unwrap();
        let f = trace_fidelity(&s).unwrap();
        assert!((f - 1.0).abs() < 1e-12, "{f}");
        let r = SparseState::replay(s.trace().unwrap()).unwrap();
        assert!((r.norm_sqr() - 1.0).abs() < 1e-12);
    }
}
