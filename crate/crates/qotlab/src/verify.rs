//! The ten acceptance checks, each reported as one pass/fail line.

use std::collections::HashMap;
use std::fmt;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use qotlab_core::adversary::{analytic_reliability, phi_state, PovmPair};
use qotlab_core::linalg::{trace_distance, StateVector};
use qotlab_core::lo::{build_bare_ot, build_ideal_ot, construct_switch_unitary, verify_switch};
use qotlab_core::protocol::{
    lying_abort_probability, run_session_retrying, run_traced_retrying, BobStrategy, Message, ProtocolConfig, Variant,
};
use qotlab_core::reference::trace_fidelity;
use qotlab_core::registers::BranchedState;
use qotlab_core::seeding::{derive_seed, SessionRngs};
use qotlab_core::vault::{BcMode, CommitmentVault};

use crate::runner::{run_scenario, worker_count, RunSummary};
use crate::scenario::{Scenario, ScenarioKind};

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    pub trials: u64,
    pub lo_trials: u64,
    pub oracle_sessions: u64,
    pub oracle_n: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 42, trials: 10_000, lo_trials: 100, oracle_sessions: 100, oracle_n: 5 }
    }
}

#[derive(Clone, Debug)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] criterion {:>2} {}: {}", self.id, self.name, self.detail)
    }
}

pub const NAMES: [&str; 10] = [
    "honest AoN baseline",
    "entangling cheat (non-BCCC)",
    "analytic POVM check",
    "BCCC counterfactual",
    "test-step soundness",
    "1-2 OT cheat",
    "Lo attack on ideal OT",
    "dependence failure on BC-based QOT",
    "representation oracle",
    "privacy invariants",
];

fn within(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

/// Runs the checks, caching scenario summaries shared between them.
pub struct Verifier {
    opts: VerifyOptions,
    cache: HashMap<ScenarioKind, (Result<RunSummary, String>, Duration)>,
}

impl Verifier {
    pub fn new(opts: VerifyOptions) -> Self {
        Self { opts, cache: HashMap::new() }
    }

    fn summary(&mut self, kind: ScenarioKind) -> Result<(RunSummary, Duration), String> {
        let (trials, seed) =
            (if kind == ScenarioKind::LoIdeal { self.opts.lo_trials } else { self.opts.trials }, self.opts.seed);
        let entry = self.cache.entry(kind).or_insert_with(|| {
            let start = Instant::now();
            let r = run_scenario(&Scenario::new(kind).with_trials(trials), seed).map_err(|e| e.to_string());
            (r, start.elapsed())
        });
        entry.0.clone().map(|s| (s, entry.1))
    }

    pub fn check(&mut self, id: u8) -> CriterionResult {
        let name = NAMES[(id - 1) as usize];
        let outcome = match id {
            1 => self.c1(),
            2 => self.c2(),
            3 => c3(),
            4 => self.c4(),
            5 => self.c5(),
            6 => self.c6(),
            7 => self.c7(),
            8 => self.c8(),
            9 => self.c9(),
            10 => self.c10(),
            _ => Err(format!("no criterion {id}")),
        };
        match outcome {
            Ok((passed, detail)) => CriterionResult { id, name, passed, detail },
            Err(detail) => CriterionResult { id, name, passed: false, detail: format!("error: {detail}") },
        }
    }

    pub fn run_all(&mut self) -> Vec<CriterionResult> {
        (1..=10).map(|id| self.check(id)).collect()
    }

    fn c1(&mut self) -> Result<(bool, String), String> {
        let (s, t) = self.summary(ScenarioKind::HonestAon)?;
        let ok = within(s.match_rate, 0.735, 0.765) && t < Duration::from_secs(60);
        Ok((ok, format!("match_rate={:.4} in [0.735, 0.765], runtime={:.2}s < 60s", s.match_rate, t.as_secs_f64())))
    }

    fn c2(&mut self) -> Result<(bool, String), String> {
        let (s, _) = self.summary(ScenarioKind::CheatAon)?;
        let ok = within(s.match_rate, 0.923, 0.943);
        Ok((
            ok,
            format!(
                "match_rate={:.4} in [0.923, 0.943], reference={:.7}",
                s.match_rate,
                s.analytic_reference.unwrap_or(f64::NAN)
            ),
        ))
    }

    fn c4(&mut self) -> Result<(bool, String), String> {
        let (s, _) = self.summary(ScenarioKind::CheatAonBccc)?;
        let ok = within(s.match_rate, 0.735, 0.765);
        Ok((ok, format!("match_rate={:.4} in [0.735, 0.765]", s.match_rate)))
    }

    fn c5(&mut self) -> Result<(bool, String), String> {
        let (honest, _) = self.summary(ScenarioKind::HonestAon)?;
        let (cheat, _) = self.summary(ScenarioKind::CheatAon)?;
        let (lying, _) = self.summary(ScenarioKind::LyingUnveiler)?;
        let r = Scenario::new(ScenarioKind::LyingUnveiler).config.test_set_size;
        let oracle = lying_abort_probability(r);
        let (lo, hi) = lying.wilson95;
        let ok = honest.abort_rate == 0.0 && cheat.abort_rate == 0.0 && within(oracle, lo, hi);
        Ok((
            ok,
            format!(
                "honest aborts={} entangling aborts={} lying abort_rate={:.4} wilson=[{lo:.4}, {hi:.4}] oracle={oracle:.5}",
                honest.aborts, cheat.aborts, lying.abort_rate
            ),
        ))
    }

    fn c6(&mut self) -> Result<(bool, String), String> {
        let mut ok = true;
        let mut parts = Vec::new();
        for kind in [ScenarioKind::Cheat12otT0, ScenarioKind::Cheat12otT1] {
            let (s, _) = self.summary(kind)?;
            let untargeted = s.extra("untargeted_rate").ok_or("missing untargeted rate")?;
            let joint = s.extra("joint_rate").ok_or("missing joint rate")?;
            ok &= within(s.match_rate, 0.923, 0.943) && within(untargeted, 0.48, 0.52) && joint < 0.55;
            parts.push(format!(
                "{}: targeted={:.4} untargeted={untargeted:.4} joint={joint:.4}",
                s.scenario, s.match_rate
            ));
        }
        Ok((ok, parts.join("; ")))
    }

    fn c7(&mut self) -> Result<(bool, String), String> {
        let model = build_ideal_ot();
        let sw = construct_switch_unitary(&model, 0, 1).map_err(|e| e.to_string())?;
        let rep = verify_switch(&model, &sw).map_err(|e| e.to_string())?;
        let bare_rejected = construct_switch_unitary(&build_bare_ot(), 0, 1).is_err();
        let (s, _) = self.summary(ScenarioKind::LoIdeal)?;
        let ok = rep.max_distance < 1e-9 && s.hits == s.trials && bare_rejected;
        Ok((
            ok,
            format!(
                "max trace distance={:.3e} over 4 inputs, double extraction {}/{} trials x 4 inputs, bare model rejected={bare_rejected}",
                rep.max_distance, s.hits, s.trials
            ),
        ))
    }

    fn c8(&mut self) -> Result<(bool, String), String> {
        let (s, _) = self.summary(ScenarioKind::LoBcqot)?;
        let non_constant = s.extra("non_constant_rate").ok_or("missing non_constant_rate")?;
        let honest = s.extra("honest_joint_rate").ok_or("missing honest_joint_rate")?;
        let ok = non_constant > 0.99 && s.match_rate <= 0.55 && honest <= 0.55;
        Ok((
            ok,
            format!(
                "non-constant beta records={non_constant:.4} (> 0.99), entangling joint={:.4}, honest joint={honest:.4} (<= 0.55)",
                s.match_rate
            ),
        ))
    }

    fn c9(&mut self) -> Result<(bool, String), String> {
        let cases = [
            (Variant::AllOrNothing, BcMode::NonBccc, BobStrategy::Honest),
            (Variant::AllOrNothing, BcMode::NonBccc, BobStrategy::Entangling { target: 0 }),
            (Variant::OneOutOfTwo, BcMode::NonBccc, BobStrategy::Entangling { target: 1 }),
            (Variant::AllOrNothing, BcMode::Bccc, BobStrategy::Entangling { target: 0 }),
            (Variant::OneOutOfTwo, BcMode::NonBccc, BobStrategy::LyingUnveiler),
        ];
        let (n, seed) = (self.opts.oracle_n, self.opts.seed);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(worker_count()).build().map_err(|e| e.to_string())?;
        let worst: Result<Vec<(f64, usize)>, String> = pool.install(|| {
            (0..self.opts.oracle_sessions)
                .into_par_iter()
                .map(|k| {
                    let (v, m, st) = cases[k as usize % cases.len()];
                    let c = ProtocolConfig::new(n, v, m, derive_seed(seed, k));
                    let (_, cps) = run_traced_retrying(&c, st).map_err(|e| e.to_string())?;
                    let mut w = 1.0f64;
                    for cp in &cps {
                        w = w.min(trace_fidelity(&cp.state).map_err(|e| e.to_string())?);
                    }
                    Ok((w, cps.len()))
                })
                .collect()
        });
        let worst = worst?;
        let min = worst.iter().map(|w| w.0).fold(1.0, f64::min);
        let steps: usize = worst.iter().map(|w| w.1).sum();
        let ok = min > 1.0 - 1e-9;
        Ok((ok, format!("n={n}, {} sessions, {steps} checkpoints, min fidelity={min:.15}", worst.len())))
    }

    fn c10(&mut self) -> Result<(bool, String), String> {
        let concealing = commitment_concealing_distance().map_err(|e| e.to_string())?;
        let (p, stat) = ordering_independence(self.opts.seed, self.opts.trials)?;
        let ok = concealing < 1e-12 && p > 0.01;
        Ok((ok, format!("concealing trace distance={concealing:.3e}, ordering chi-square={stat:.3} p={p:.4}")))
    }
}

fn c3() -> Result<(bool, String), String> {
    let povm = PovmPair::reference();
    let want = (2.0 + 3f64.sqrt()) / 4.0;
    let d0 = (povm.probability(0, &phi_state(0)) - want).abs();
    let d1 = (povm.probability(1, &phi_state(1)) - want).abs();
    let e0 = povm.e0();
    let idempotent = e0.matmul(e0).sub(e0).max_abs();
    let trace = (e0.trace().re - 1.0).abs();
    let ok = d0 < 1e-12 && d1 < 1e-12 && idempotent < 1e-12 && trace < 1e-12;
    Ok((
        ok,
        format!(
            "reliability={:.12}, |dev| b=0 {d0:.1e} b=1 {d1:.1e}, |E0^2-E0|={idempotent:.1e}, |tr E0 - 1|={trace:.1e}",
            analytic_reliability(&povm)
        ),
    ))
}

/// Largest trace distance between the receiver's views of commitments to
/// `|0⟩`, `|1⟩` and `|+⟩`.
pub fn commitment_concealing_distance() -> qotlab_core::Result<f64> {
    let mut views = Vec::new();
    for (k, init) in [StateVector::basis(2, 0), StateVector::basis(2, 1), StateVector::plus()].into_iter().enumerate() {
        for mode in [BcMode::NonBccc, BcMode::Bccc] {
            let mut rng = SessionRngs::new(k as u64).nature;
            let mut state = BranchedState::new();
            let mut vault = CommitmentVault::new();
            let reg = state.add_register("c", init.clone())?;
            let id = vault.commit(&mut state, reg, mode, &mut rng)?;
            views.push(vault.receiver_view(id)?);
        }
    }
    let mut worst = 0.0f64;
    for a in &views {
        for b in &views {
            worst = worst.max(trace_distance(a, b)?);
        }
    }
    Ok(worst)
}

/// Chi-square test of independence between honest Bob's ordering coin and
/// features of Alice's view: which announced subset starts first and the
/// parity of her `g` over `J0`. Returns `(p, statistic)`.
pub fn ordering_independence(seed: u64, trials: u64) -> Result<(f64, f64), String> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(worker_count()).build().map_err(|e| e.to_string())?;
    let cells: Result<Vec<(usize, usize)>, String> = pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|k| {
                let c = ProtocolConfig::new(25, Variant::AllOrNothing, BcMode::NonBccc, derive_seed(seed ^ 0x5eed, k));
                let r = run_session_retrying(&c, BobStrategy::Honest).map_err(|e| e.to_string())?;
                let ordered = r.bob_ordered.ok_or("honest session without ordering")?;
                let (j0, j1) = r
                    .transcript
                    .messages()
                    .iter()
                    .find_map(|m| match m {
                        Message::SubsetsAnnounce { j0, j1 } => Some((j0.clone(), j1.clone())),
                        _ => None,
                    })
                    .ok_or("no subsets announced")?;
                let first = usize::from(j0[0] < j1[0]);
                let parity = r.alice.g_parity(&j0) as usize;
                Ok((usize::from(ordered), first * 2 + parity))
            })
            .collect()
    });
    let mut table = [[0u64; 4]; 2];
    for (row, col) in cells? {
        table[row][col] += 1;
    }
    let total: u64 = table.iter().flatten().sum();
    let rows: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..4).map(|c| table[0][c] + table[1][c]).collect();
    let used: Vec<usize> = (0..4).filter(|&c| cols[c] > 0).collect();
    if rows.contains(&0) || used.len() < 2 {
        return Err("degenerate contingency table".into());
    }
    let mut stat = 0.0;
    for (r, row) in table.iter().enumerate() {
        for &c in &used {
            let expected = rows[r] as f64 * cols[c] as f64 / total as f64;
            stat += (row[c] as f64 - expected).powi(2) / expected;
        }
    }
    let dof = (used.len() - 1) as f64;
    let chi = ChiSquared::new(dof).map_err(|e| e.to_string())?;
    Ok((1.0 - chi.cdf(stat), stat))
}
