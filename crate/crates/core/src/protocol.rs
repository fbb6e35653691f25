//! The commitment-based all-or-nothing / 1-out-of-2 oblivious transfer
//! protocol as a pair of state machines exchanging [`Message`]s.
//!
//! Flow (indices are 0-based throughout):
//!
//! 1. Alice sends `n` BB84 qubits `|a_i, g_i⟩`.
//! 2. Bob measures each in a basis `b_i`, gets `h_i`, and commits `(b_i, h_i)`.
//! 3. Alice picks a test set `R`; Bob unveils those commitments; Alice aborts
//!    if some `i ∈ R` has `a_i = b_i` but `g_i ≠ h_i`.
//! 4. Alice announces the bases. Bob picks `I0 ⊆ T0 − R`, `I1 ⊆ T1 − R` of
//!    equal size and sends them in random order as `(J0, J1)`.
//! 5. AoN: Alice sends `s` and `β_s = b ⊕ ⊕_{J_s} g`. 1-2: she sends
//!    `β0 = b0 ⊕ ⊕_{J0} g` and `β1 = b1 ⊕ ⊕_{J1} g`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::adversary::{CheatReport, EntanglingBob};
use crate::error::{Error, Result};
use crate::linalg::{Operator, StateVector};
use crate::registers::{prepare_bb84, BranchedState, MeasurementRecord, RegisterId};
use crate::seeding::{derive_seed, SessionRngs};
use crate::vault::{BcMode, CommitmentId, CommitmentVault, UnveilRecord};

/// Fraction of `n` used for `|I0| = |I1|`.
pub const SUBSET_FRACTION: f64 = 0.24;
/// Sessions whose random basis split cannot supply two subsets are redrawn
/// with a derived seed at most this many times.
pub const MAX_ATTEMPTS: u32 = 64;
/// Smallest `n` accepted by [`ProtocolConfig::validate`].
pub const MIN_N: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    AllOrNothing,
    OneOutOfTwo,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::AllOrNothing => "aon",
            Variant::OneOutOfTwo => "12ot",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub n: usize,
    /// `|I0| = |I1|`; defaults to `floor(0.24 n)`.
    pub subset_size: usize,
    /// `|R|`; the test set is a uniformly random subset of this size.
    /// Defaults to `ceil(n / 5)`.
    pub test_set_size: usize,
    pub variant: Variant,
    pub bc_mode: BcMode,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn new(n: usize, variant: Variant, bc_mode: BcMode, seed: u64) -> Self {
        Self { n, subset_size: default_subset_size(n), test_set_size: n.div_ceil(5), variant, bc_mode, seed }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < MIN_N {
            return Err(Error::InvalidConfig(format!("n = {} is below the minimum of {MIN_N}", self.n)));
        }
        self.validate_structure()
    }

    /// Only the feasibility constraints, without the lower bound on `n`.
    pub fn validate_structure(&self) -> Result<()> {
        if self.subset_size == 0 {
            return Err(Error::InvalidConfig("subset_size must be positive".into()));
        }
        if self.test_set_size > self.n {
            return Err(Error::InvalidConfig(format!("test set size {} exceeds n = {}", self.test_set_size, self.n)));
        }
        if 2 * self.subset_size > self.n - self.test_set_size {
            return Err(Error::InvalidConfig(format!(
                "2 * subset_size = {} exceeds n - |R| = {}",
                2 * self.subset_size,
                self.n - self.test_set_size
            )));
        }
        Ok(())
    }

    pub fn bit_count(&self) -> usize {
        match self.variant {
            Variant::AllOrNothing => 1,
            Variant::OneOutOfTwo => 2,
        }
    }
}

/// `floor(0.24 n)`, computed in integers to avoid rounding surprises.
pub fn default_subset_size(n: usize) -> usize {
    n * 24 / 100
}

/// The qubits Alice hands over in step 1.
#[derive(Clone, Debug, PartialEq)]
pub struct QubitBatch {
    pub qubits: Vec<StateVector>,
}

/// One unveiled test position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TestOpening {
    pub index: usize,
    pub basis: UnveilRecord,
    pub result: UnveilRecord,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    QubitBatch { n: usize },
    CommitBatch { pairs: Vec<(CommitmentId, CommitmentId)> },
    TestRequest { r: Vec<usize> },
    TestUnveil { openings: Vec<TestOpening> },
    Abort,
    BasesAnnounce { bases: Vec<u8> },
    SubsetsAnnounce { j0: Vec<usize>, j1: Vec<usize> },
    FinalAoN { s: u8, beta: u8 },
    Final12 { beta0: u8, beta1: u8 },
}

fn bits(v: &[u8]) -> String {
    v.iter().map(|b| if *b == 0 { '0' } else { '1' }).collect()
}

fn list(v: &[usize]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("[{}]", parts.join(","))
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Message::QubitBatch { n } => write!(f, "QubitBatch n={n}"),
            Message::CommitBatch { pairs } => write!(f, "CommitBatch pairs={}", pairs.len()),
            Message::TestRequest { r } => write!(f, "TestRequest R={}", list(r)),
            Message::TestUnveil { openings } => {
                let parts: Vec<String> = openings
                    .iter()
                    .map(|o| {
                        let flag = if o.basis.honest && o.result.honest { "" } else { "!" };
                        format!("{}:{}{}{flag}", o.index, o.basis.value, o.result.value)
                    })
                    .collect();
                write!(f, "TestUnveil [{}]", parts.join(","))
            }
            Message::Abort => write!(f, "Abort"),
            Message::BasesAnnounce { bases } => write!(f, "BasesAnnounce a={}", bits(bases)),
            Message::SubsetsAnnounce { j0, j1 } => {
                write!(f, "SubsetsAnnounce J0={} J1={}", list(j0), list(j1))
            }
            Message::FinalAoN { s, beta } => write!(f, "FinalAoN s={s} beta={beta}"),
            Message::Final12 { beta0, beta1 } => write!(f, "Final12 beta0={beta0} beta1={beta1}"),
        }
    }
}

/// Ordered record of every message of one run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SessionTranscript {
    messages: Vec<Message>,
}

impl SessionTranscript {
    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn aborted(&self) -> bool {
        matches!(self.messages.last(), Some(Message::Abort))
    }

    /// Appends `m`, enforcing the step order. Nothing may follow an abort.
    pub fn push(&mut self, m: Message) -> Result<()> {
        let rank = |m: &Message| match m {
            Message::QubitBatch { .. } => 0,
            Message::CommitBatch { .. } => 1,
            Message::TestRequest { .. } => 2,
            Message::TestUnveil { .. } => 3,
            Message::Abort => 4,
            Message::BasesAnnounce { .. } => 4,
            Message::SubsetsAnnounce { .. } => 5,
            Message::FinalAoN { .. } | Message::Final12 { .. } => 6,
        };
        if self.aborted() {
            return Err(Error::Protocol("message after abort".into()));
        }
        let expected = self.messages.len();
        if rank(&m) != expected {
            return Err(Error::Protocol(format!("{m} out of order at position {expected}")));
        }
        self.messages.push(m);
        Ok(())
    }
}

/// Probability that Alice aborts against a Bob who flips every committed
/// result, by enumerating all `(a_i, b_i)` over a test set of size `r`.
pub fn lying_abort_probability(r: usize) -> f64 {
    let total = 1u64 << (2 * r);
    let caught = (0..total).filter(|&x| (0..r).any(|i| (x >> (2 * i)) & 1 == (x >> (2 * i + 1)) & 1)).count();
    caught as f64 / total as f64
}

/// Alice's secret input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AliceSecret {
    AllOrNothing { b: u8 },
    OneOutOfTwo { b0: u8, b1: u8 },
}

impl AliceSecret {
    pub fn bits(&self) -> Vec<u8> {
        match *self {
            AliceSecret::AllOrNothing { b } => vec![b],
            AliceSecret::OneOutOfTwo { b0, b1 } => vec![b0, b1],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AliceState {
    pub a: Vec<u8>,
    pub g: Vec<u8>,
    pub r: Vec<usize>,
    pub secret: AliceSecret,
    pub s: Option<u8>,
    pub betas: Vec<u8>,
}

impl AliceState {
    pub fn n(&self) -> usize {
        self.a.len()
    }

    /// `⊕_{i ∈ set} g_i`
    pub fn g_parity(&self, set: &[usize]) -> u8 {
        set.iter().fold(0, |acc, &i| acc ^ self.g[i])
    }
}

fn random_bit<R: Rng + ?Sized>(rng: &mut R) -> u8 {
    u8::from(rng.random::<bool>())
}

/// Step 1: uniform `(a_i, g_i)` and the secret bit(s).
pub fn alice_prepare<R: Rng + ?Sized>(config: &ProtocolConfig, rng: &mut R) -> (AliceState, QubitBatch) {
    let n = config.n;
    let mut a = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    for _ in 0..n {
        a.push(random_bit(rng));
        g.push(random_bit(rng));
    }
    let secret = match config.variant {
        Variant::AllOrNothing => AliceSecret::AllOrNothing { b: random_bit(rng) },
        Variant::OneOutOfTwo => AliceSecret::OneOutOfTwo { b0: random_bit(rng), b1: random_bit(rng) },
    };
    let qubits = a.iter().zip(&g).map(|(&ai, &gi)| prepare_bb84(ai, gi)).collect();
    (AliceState { a, g, r: Vec::new(), secret, s: None, betas: Vec::new() }, QubitBatch { qubits })
}

/// Sorted uniformly random `k`-subset of `pool`.
pub(crate) fn random_subset<R: Rng + ?Sized>(pool: &[usize], k: usize, rng: &mut R) -> Vec<usize> {
    let mut out: Vec<usize> = sample(rng, pool.len(), k).into_iter().map(|p| pool[p]).collect();
    out.sort_unstable();
    out
}

/// Step 3, first half: the test set `R`.
pub fn alice_choose_test_set<R: Rng + ?Sized>(alice: &mut AliceState, config: &ProtocolConfig, rng: &mut R) -> Message {
    let all: Vec<usize> = (0..config.n).collect();
    alice.r = random_subset(&all, config.test_set_size, rng);
    Message::TestRequest { r: alice.r.clone() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestVerdict {
    Accept,
    Abort,
}

/// Step 3, second half: Alice's check of the unveiled pairs.
pub fn alice_test(alice: &AliceState, openings: &[TestOpening]) -> Result<TestVerdict> {
    let mut idx: Vec<usize> = openings.iter().map(|o| o.index).collect();
    idx.sort_unstable();
    if idx != alice.r {
        return Err(Error::UnveilMismatch);
    }
    for o in openings {
        if !o.basis.honest || !o.result.honest {
            return Ok(TestVerdict::Abort);
        }
        let i = o.index;
        if alice.a[i] == o.basis.value && alice.g[i] != o.result.value {
            return Ok(TestVerdict::Abort);
        }
    }
    Ok(TestVerdict::Accept)
}

pub fn alice_announce_bases(alice: &AliceState) -> Message {
    Message::BasesAnnounce { bases: alice.a.clone() }
}

fn check_subsets(alice: &AliceState, config: &ProtocolConfig, j0: &[usize], j1: &[usize]) -> Result<()> {
    let n = alice.n();
    for (name, j) in [("J0", j0), ("J1", j1)] {
        if j.len() != config.subset_size {
            return Err(Error::MalformedSubsets(format!(
                "|{name}| = {} but subset size is {}",
                j.len(),
                config.subset_size
            )));
        }
        if j.iter().any(|&i| i >= n) {
            return Err(Error::MalformedSubsets(format!("{name} has an index out of range")));
        }
        if j.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::MalformedSubsets(format!("{name} is not strictly increasing")));
        }
        if j.iter().any(|i| alice.r.contains(i)) {
            return Err(Error::MalformedSubsets(format!("{name} intersects R")));
        }
    }
    if j0.iter().any(|i| j1.contains(i)) {
        return Err(Error::MalformedSubsets("J0 and J1 intersect".into()));
    }
    Ok(())
}

/// Step 5 (AoN) or 5′ (1-2).
pub fn alice_final<R: Rng + ?Sized>(
    alice: &mut AliceState,
    config: &ProtocolConfig,
    j0: &[usize],
    j1: &[usize],
    rng: &mut R,
) -> Result<Message> {
    check_subsets(alice, config, j0, j1)?;
    Ok(match alice.secret {
        AliceSecret::AllOrNothing { b } => {
            let s = random_bit(rng);
            let beta = b ^ alice.g_parity(if s == 0 { j0 } else { j1 });
            alice.s = Some(s);
            alice.betas = vec![beta];
            Message::FinalAoN { s, beta }
        }
        AliceSecret::OneOutOfTwo { b0, b1 } => {
            let beta0 = b0 ^ alice.g_parity(j0);
            let beta1 = b1 ^ alice.g_parity(j1);
            alice.betas = vec![beta0, beta1];
            Message::Final12 { beta0, beta1 }
        }
    })
}

/// Shared quantum workspace of one session: the joint state, the commitment
/// vault and the generator used for Born-rule sampling.
#[derive(Clone, Debug)]
pub struct Lab {
    pub state: BranchedState,
    pub vault: CommitmentVault,
    pub nature: ChaCha8Rng,
}

impl Lab {
    pub fn new(nature: ChaCha8Rng) -> Self {
        Self { state: BranchedState::new(), vault: CommitmentVault::new(), nature }
    }

    pub fn with_state(state: BranchedState, nature: ChaCha8Rng) -> Self {
        Self { state, vault: CommitmentVault::new(), nature }
    }

    /// Places Alice's qubits in registers `phi[i]`.
    pub fn load_qubits(&mut self, batch: &QubitBatch) -> Result<Vec<RegisterId>> {
        batch.qubits.iter().enumerate().map(|(i, q)| self.state.add_register(format!("phi[{i}]"), q.clone())).collect()
    }

    pub fn add(&mut self, label: impl Into<String>, init: StateVector) -> Result<RegisterId> {
        self.state.add_register(label, init)
    }

    pub fn apply(&mut self, regs: &[RegisterId], u: &Operator) -> Result<()> {
        self.vault.ensure_accessible(&self.state, regs)?;
        self.state.apply_joint_unitary(regs, u)
    }

    pub fn apply_conditioned(
        &mut self,
        control: RegisterId,
        basis: &Operator,
        targets: &[RegisterId],
        ops: &[Operator],
    ) -> Result<()> {
        self.vault.ensure_accessible(&self.state, &[control])?;
        self.vault.ensure_accessible(&self.state, targets)?;
        self.state.apply_conditioned(control, basis, targets, ops)
    }

    pub fn measure(&mut self, reg: RegisterId) -> Result<MeasurementRecord> {
        self.vault.ensure_accessible(&self.state, &[reg])?;
        self.state.measure_register(reg, &mut self.nature)
    }

    pub fn commit(&mut self, reg: RegisterId, mode: BcMode) -> Result<CommitmentId> {
        self.vault.commit(&mut self.state, reg, mode, &mut self.nature)
    }

    pub fn unveil(&mut self, id: CommitmentId) -> Result<UnveilRecord> {
        self.vault.unveil(&mut self.state, id, &mut self.nature)
    }
}

/// What Bob ends up with. `bits[k]` is his final value for Alice's bit `k`
/// (a uniform guess where he has nothing better).
#[derive(Clone, Debug, PartialEq)]
pub struct BobOutput {
    pub bits: Vec<u8>,
    /// `certain[k]`: Bob knows he decoded bit `k` exactly.
    pub certain: Vec<bool>,
    /// Analytic probability that the decoded (targeted) bit is right, when
    /// the strategy can compute one.
    pub p_correct: Option<f64>,
    pub target: Option<u8>,
    pub cheat: Option<CheatReport>,
}

/// Interface of a Bob implementation driven by [`run_session`].
pub trait BobParty {
    /// Step 2. Returns the commitment ids per index.
    fn receive(
        &mut self,
        lab: &mut Lab,
        config: &ProtocolConfig,
        batch: &QubitBatch,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<(CommitmentId, CommitmentId)>>;

    /// Step 3: open the commitments at the test positions.
    fn test_unveil(&mut self, lab: &mut Lab, r: &[usize]) -> Result<Vec<TestOpening>>;

    /// Step 4: choose `(J0, J1)`.
    fn partition(
        &mut self,
        lab: &mut Lab,
        config: &ProtocolConfig,
        bases: &[u8],
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<usize>, Vec<usize>)>;

    /// Step 5 / 5′.
    fn decode(
        &mut self,
        lab: &mut Lab,
        config: &ProtocolConfig,
        last: &Message,
        rng: &mut ChaCha8Rng,
    ) -> Result<BobOutput>;
}

/// Honest Bob's bookkeeping.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BobHonestState {
    pub b: Vec<u8>,
    pub h: Vec<u8>,
    pub commitments: Vec<(CommitmentId, CommitmentId)>,
    pub r: Vec<usize>,
    pub t0: Vec<usize>,
    pub t1: Vec<usize>,
    pub i0: Vec<usize>,
    pub i1: Vec<usize>,
    pub j0: Vec<usize>,
    pub j1: Vec<usize>,
    pub decoded: Option<u8>,
}

impl BobHonestState {
    pub fn h_parity(&self, set: &[usize]) -> u8 {
        set.iter().fold(0, |acc, &i| acc ^ self.h[i])
    }

    /// Whether `J0 = I0` (the ordering coin came up "no swap").
    pub fn ordered(&self) -> bool {
        self.j0 == self.i0
    }
}

/// Honest Bob. With `lie_on_test` set he commits the complement of every
/// measured `h_i`, so each test position with matching bases exposes him.
#[derive(Clone, Debug, Default)]
pub struct HonestBob {
    pub state: BobHonestState,
    pub lie_on_test: bool,
}

impl HonestBob {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lying() -> Self {
        Self { lie_on_test: true, ..Self::default() }
    }
}

/// Step 2 for honest Bob: measure in random bases, commit `(b_i, h_i)`.
pub fn bob_honest_measure_and_commit(
    bob: &mut HonestBob,
    lab: &mut Lab,
    config: &ProtocolConfig,
    batch: &QubitBatch,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(CommitmentId, CommitmentId)>> {
    let phis = lab.load_qubits(batch)?;
    let n = phis.len();
    let mut st = BobHonestState { b: Vec::with_capacity(n), h: Vec::with_capacity(n), ..Default::default() };
    for (i, &phi) in phis.iter().enumerate() {
        let b = random_bit(rng);
        if b == 1 {
            lab.apply(&[phi], &Operator::hadamard())?;
        }
        let h = lab.measure(phi)?.outcome as u8;
        st.b.push(b);
        st.h.push(h);
        let committed_h = h ^ u8::from(bob.lie_on_test);
        let rb = lab.add(format!("B[{i}]"), StateVector::basis(2, b as usize))?;
        let rh = lab.add(format!("H[{i}]"), StateVector::basis(2, committed_h as usize))?;
        let cb = lab.commit(rb, config.bc_mode)?;
        let ch = lab.commit(rh, config.bc_mode)?;
        st.commitments.push((cb, ch));
    }
    bob.state = st;
    Ok(bob.state.commitments.clone())
}

pub(crate) fn open_pairs(
    lab: &mut Lab,
    pairs: &[(CommitmentId, CommitmentId)],
    r: &[usize],
) -> Result<Vec<TestOpening>> {
    r.iter()
        .map(|&i| {
            let (cb, ch) = pairs[i];
            Ok(TestOpening { index: i, basis: lab.unveil(cb)?, result: lab.unveil(ch)? })
        })
        .collect()
}

/// Step 4 for honest Bob.
pub fn bob_partition_honest(
    bob: &mut BobHonestState,
    config: &ProtocolConfig,
    bases: &[u8],
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = bob.b.len();
    if bases.len() != n {
        return Err(Error::Protocol(format!("{} bases announced for {n} qubits", bases.len())));
    }
    bob.t0 = (0..n).filter(|&i| bases[i] == bob.b[i]).collect();
    bob.t1 = (0..n).filter(|&i| bases[i] != bob.b[i]).collect();
    let pool0: Vec<usize> = bob.t0.iter().copied().filter(|i| !bob.r.contains(i)).collect();
    let pool1: Vec<usize> = bob.t1.iter().copied().filter(|i| !bob.r.contains(i)).collect();
    let k = config.subset_size;
    if pool0.len() < k {
        return Err(Error::InfeasibleSubsets(format!("T0 - R has {} < {k} indices", pool0.len())));
    }
    if pool1.len() < k {
        return Err(Error::InfeasibleSubsets(format!("T1 - R has {} < {k} indices", pool1.len())));
    }
    bob.i0 = random_subset(&pool0, k, rng);
    bob.i1 = random_subset(&pool1, k, rng);
    if rng.random::<bool>() {
        bob.j0 = bob.i1.clone();
        bob.j1 = bob.i0.clone();
    } else {
        bob.j0 = bob.i0.clone();
        bob.j1 = bob.i1.clone();
    }
    Ok((bob.j0.clone(), bob.j1.clone()))
}

/// Step 5 / 5′ for honest Bob. Where he cannot decode he records a uniform
/// guess so that reliability can be measured.
pub fn bob_decode_honest(bob: &mut BobHonestState, last: &Message, rng: &mut ChaCha8Rng) -> Result<BobOutput> {
    match *last {
        Message::FinalAoN { s, beta } => {
            let js = if s == 0 { &bob.j0 } else { &bob.j1 };
            let got = *js == bob.i0;
            let bit = if got { beta ^ bob.h_parity(js) } else { random_bit(rng) };
            bob.decoded = got.then_some(bit);
            Ok(BobOutput { bits: vec![bit], certain: vec![got], p_correct: None, target: None, cheat: None })
        }
        Message::Final12 { beta0, beta1 } => {
            let t = if bob.ordered() { 0 } else { 1 };
            let (beta_t, jt) = if t == 0 { (beta0, &bob.j0) } else { (beta1, &bob.j1) };
            let bit = beta_t ^ bob.h_parity(jt);
            bob.decoded = Some(bit);
            let other = random_bit(rng);
            let (bits, certain) =
                if t == 0 { (vec![bit, other], vec![true, false]) } else { (vec![other, bit], vec![false, true]) };
            Ok(BobOutput { bits, certain, p_correct: None, target: Some(t), cheat: None })
        }
        ref m => Err(Error::Protocol(format!("cannot decode from {m}"))),
    }
}

impl BobParty for HonestBob {
    fn receive(
        &mut self,
        lab: &mut Lab,
        config: &ProtocolConfig,
        batch: &QubitBatch,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<(CommitmentId, CommitmentId)>> {
        bob_honest_measure_and_commit(self, lab, config, batch, rng)
    }

    fn test_unveil(&mut self, lab: &mut Lab, r: &[usize]) -> Result<Vec<TestOpening>> {
        self.state.r = r.to_vec();
        open_pairs(lab, &self.state.commitments, r)
    }

    fn partition(
        &mut self,
        _lab: &mut Lab,
        config: &ProtocolConfig,
        bases: &[u8],
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<usize>, Vec<usize>)> {
        bob_partition_honest(&mut self.state, config, bases, rng)
    }

    fn decode(
        &mut self,
        _lab: &mut Lab,
        _config: &ProtocolConfig,
        last: &Message,
        rng: &mut ChaCha8Rng,
    ) -> Result<BobOutput> {
        bob_decode_honest(&mut self.state, last, rng)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BobStrategy {
    Honest,
    /// The entangling honest-but-curious Bob; `target` selects which bit he
    /// decodes in the 1-2 variant (ignored for AoN).
    Entangling {
        target: u8,
    },
    LyingUnveiler,
}

impl fmt::Display for BobStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BobStrategy::Honest => f.write_str("honest"),
            BobStrategy::Entangling { target } => write!(f, "entangling(t{target})"),
            BobStrategy::LyingUnveiler => f.write_str("lying-unveiler"),
        }
    }
}

/// Everything observable about one protocol run.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionResult {
    pub seed: u64,
    pub attempts: u32,
    pub n: usize,
    pub variant: Variant,
    pub bc_mode: BcMode,
    pub strategy: BobStrategy,
    pub transcript: SessionTranscript,
    pub alice: AliceState,
    pub aborted: bool,
    pub bob: Option<BobOutput>,
    /// Per secret bit: Bob's final value equals Alice's.
    pub correct: Vec<bool>,
    /// Honest Bob only: whether he kept `J0 = I0`.
    pub bob_ordered: Option<bool>,
    /// Honest Bob only: `(I0, I1)`.
    pub bob_subsets: Option<(Vec<usize>, Vec<usize>)>,
}

impl SessionResult {
    pub fn alice_bits(&self) -> Vec<u8> {
        self.alice.secret.bits()
    }

    /// Stable text serialization.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "session seed={} attempts={} variant={} bc_mode={} strategy={} n={}",
            self.seed, self.attempts, self.variant, self.bc_mode, self.strategy, self.n
        );
        let _ = writeln!(
            out,
            "alice a={} g={} bits={}",
            bits(&self.alice.a),
            bits(&self.alice.g),
            bits(&self.alice_bits())
        );
        let _ = writeln!(out, "aborted {}", self.aborted);
        match &self.bob {
            None => {
                let _ = writeln!(out, "bob -");
            }
            Some(b) => {
                let certain: Vec<&str> = b.certain.iter().map(|c| if *c { "1" } else { "0" }).collect();
                let p = b.p_correct.map_or_else(|| String::from("-"), |p| format!("{p:.8e}"));
                let t = b.target.map_or_else(|| String::from("-"), |t| format!("{t}"));
                let _ =
                    writeln!(out, "bob bits={} certain={} p_correct={p} target={t}", bits(&b.bits), certain.join(""));
                if let Some(c) = &b.cheat {
                    let _ = writeln!(out, "cheat {}", c.to_text());
                }
            }
        }
        let correct: Vec<&str> = self.correct.iter().map(|c| if *c { "1" } else { "0" }).collect();
        let _ = writeln!(out, "correct {}", correct.join(""));
        let _ = writeln!(out, "transcript {}", self.transcript.len());
        for (k, m) in self.transcript.messages().iter().enumerate() {
            let _ = writeln!(out, "{} {m}", k + 1);
        }
        out
    }
}

/// Runs one session with the seed in `config`.
pub fn run_session(config: &ProtocolConfig, strategy: BobStrategy) -> Result<SessionResult> {
    config.validate()?;
    dispatch(config, strategy, None)
}

fn dispatch(
    config: &ProtocolConfig,
    strategy: BobStrategy,
    cps: Option<&mut Vec<Checkpoint>>,
) -> Result<SessionResult> {
    match strategy {
        BobStrategy::Honest => drive(config, strategy, &mut HonestBob::new(), cps),
        BobStrategy::LyingUnveiler => drive(config, strategy, &mut HonestBob::lying(), cps),
        BobStrategy::Entangling { target } => drive(config, strategy, &mut EntanglingBob::new(target), cps),
    }
}

/// Like [`run_session`], but a session whose basis split cannot supply the
/// two subsets is redrawn under `derive_seed(seed, attempt)`.
pub fn run_session_retrying(config: &ProtocolConfig, strategy: BobStrategy) -> Result<SessionResult> {
    retrying(config, |c| run_session(c, strategy), |r, a| r.attempts = a)
}

fn retrying<T>(
    config: &ProtocolConfig,
    mut run: impl FnMut(&ProtocolConfig) -> Result<T>,
    mut mark: impl FnMut(&mut T, u32),
) -> Result<T> {
    let mut last = None;
    for attempt in 0..MAX_ATTEMPTS {
        let seed = if attempt == 0 { config.seed } else { derive_seed(config.seed, u64::from(attempt)) };
        match run(&config.with_seed(seed)) {
            Ok(mut r) => {
                mark(&mut r, attempt + 1);
                return Ok(r);
            }
            Err(e @ Error::InfeasibleSubsets(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::InfeasibleSubsets("no attempts".into())))
}

/// Snapshot of the joint state after a protocol step, with its operation
/// trace.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub step: &'static str,
    pub state: BranchedState,
}

/// Runs a session with tracing enabled and a snapshot after every step.
/// Only the structural constraints are checked, so tiny `n` is allowed.
pub fn run_traced(config: &ProtocolConfig, strategy: BobStrategy) -> Result<(SessionResult, Vec<Checkpoint>)> {
    config.validate_structure()?;
    let mut cps = Vec::new();
    let r = dispatch(config, strategy, Some(&mut cps))?;
    Ok((r, cps))
}

/// [`run_traced`] with the redraw rule of [`run_session_retrying`].
pub fn run_traced_retrying(config: &ProtocolConfig, strategy: BobStrategy) -> Result<(SessionResult, Vec<Checkpoint>)> {
    retrying(config, |c| run_traced(c, strategy), |r, a| r.0.attempts = a)
}

/// Drives a session with an arbitrary Bob implementation.
pub fn run_with<B: BobParty + core::any::Any>(
    config: &ProtocolConfig,
    strategy: BobStrategy,
    bob: &mut B,
) -> Result<SessionResult> {
    config.validate()?;
    drive(config, strategy, bob, None)
}

fn drive<B: BobParty + core::any::Any>(
    config: &ProtocolConfig,
    strategy: BobStrategy,
    bob: &mut B,
    mut cps: Option<&mut Vec<Checkpoint>>,
) -> Result<SessionResult> {
    let SessionRngs { alice: mut ra, bob: mut rb, nature } = SessionRngs::new(config.seed);
    let mut lab = Lab::new(nature);
    if cps.is_some() {
        lab.state.enable_trace();
    }
    let mut snap = |lab: &Lab, step: &'static str| {
        if let Some(c) = cps.as_deref_mut() {
            c.push(Checkpoint { step, state: lab.state.clone() });
        }
    };
    let mut tx = SessionTranscript::default();

    let (mut alice, batch) = alice_prepare(config, &mut ra);
    tx.push(Message::QubitBatch { n: batch.qubits.len() })?;
    let pairs = bob.receive(&mut lab, config, &batch, &mut rb)?;
    if pairs.len() != config.n {
        return Err(Error::Protocol(format!("{} commitment pairs for n = {}", pairs.len(), config.n)));
    }
    snap(&lab, "commit");
    tx.push(Message::CommitBatch { pairs })?;
    let req = alice_choose_test_set(&mut alice, config, &mut ra);
    tx.push(req)?;
    let r = alice.r.clone();
    let openings = bob.test_unveil(&mut lab, &r)?;
    snap(&lab, "test");
    let verdict = alice_test(&alice, &openings)?;
    tx.push(Message::TestUnveil { openings })?;

    let mut result = SessionResult {
        seed: config.seed,
        attempts: 1,
        n: config.n,
        variant: config.variant,
        bc_mode: config.bc_mode,
        strategy,
        transcript: SessionTranscript::default(),
        alice: alice.clone(),
        aborted: true,
        bob: None,
        correct: Vec::new(),
        bob_ordered: None,
        bob_subsets: None,
    };
    if verdict == TestVerdict::Abort {
        tx.push(Message::Abort)?;
        result.transcript = tx;
        return Ok(result);
    }

    tx.push(alice_announce_bases(&alice))?;
    let (j0, j1) = bob.partition(&mut lab, config, &alice.a, &mut rb)?;
    snap(&lab, "partition");
    tx.push(Message::SubsetsAnnounce { j0: j0.clone(), j1: j1.clone() })?;
    let last = alice_final(&mut alice, config, &j0, &j1, &mut ra)?;
    tx.push(last.clone())?;
    let out = bob.decode(&mut lab, config, &last, &mut rb)?;
    snap(&lab, "decode");

    let truth = alice.secret.bits();
    result.correct = out.bits.iter().zip(&truth).map(|(x, y)| x == y).collect();
    if let Some(h) = (bob as &dyn core::any::Any).downcast_ref::<HonestBob>() {
        result.bob_ordered = Some(h.state.ordered());
        result.bob_subsets = Some((h.state.i0.clone(), h.state.i1.clone()));
    }
    result.alice = alice;
    result.aborted = false;
    result.bob = Some(out);
    result.transcript = tx;
    Ok(result)
}
