//! Parallel, order-independent Monte Carlo runs.
//!
//! Session `k` of a run with master seed `m` uses seed `derive_seed(m, k)`,
//! so results do not depend on scheduling or on the number of workers.

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use qotlab_core::lo::{
    build_ideal_ot, construct_switch_unitary, double_extraction_with, verify_switch, DependenceRecord, DependenceReport,
};
use qotlab_core::protocol::{run_session_retrying, BobStrategy, Variant};
use qotlab_core::seeding::{derive_seed, SessionRngs};
use qotlab_core::stats::wilson95;
use qotlab_core::vault::BcMode;

use crate::scenario::{Scenario, ScenarioKind};
use crate::HarnessError;

pub const WORKERS_ENV: &str = "QOTLAB_WORKERS";

/// Worker bound from `QOTLAB_WORKERS`, else the machine's parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Aggregate of one scenario run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub scenario: String,
    pub trials: u64,
    pub n: usize,
    pub variant: Variant,
    pub bc_mode: BcMode,
    pub master_seed: u64,
    /// `hits / scored`. For the lying unveiler a hit is an abort; elsewhere it
    /// is a correct (targeted) bit in a completed session.
    pub match_rate: f64,
    pub wilson95: (f64, f64),
    pub abort_rate: f64,
    pub analytic_reference: Option<f64>,
    pub hits: u64,
    pub scored: u64,
    pub aborts: u64,
    /// Sessions redrawn because the subsets were infeasible.
    pub redraws: u64,
    /// Scenario-specific rates, in a fixed order.
    pub extras: Vec<(&'static str, f64)>,
    /// SHA-256 over the per-session records, hex.
    pub digest: String,
}

impl RunSummary {
    pub fn extra(&self, key: &str) -> Option<f64> {
        self.extras.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }
}

#[derive(Clone, Debug, Default)]
struct Trial {
    hit: bool,
    scored: bool,
    aborted: bool,
    redraws: u64,
    untargeted: Option<bool>,
    joint: Option<bool>,
    got: Option<bool>,
    digest: [u8; 32],
    /// lo-bcqot: the honest record, honest joint success, cheat correctness.
    dependence: Option<(DependenceRecord, bool, Vec<bool>)>,
}

fn hash(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

fn protocol_trial(sc: &Scenario, strategy: BobStrategy, seed: u64) -> Result<Trial, qotlab_core::Error> {
    let r = run_session_retrying(&sc.config.with_seed(seed), strategy)?;
    let mut t = Trial {
        redraws: u64::from(r.attempts - 1),
        aborted: r.aborted,
        digest: hash(&r.to_text()),
        ..Trial::default()
    };
    if sc.kind == ScenarioKind::LyingUnveiler {
        t.scored = true;
        t.hit = r.aborted;
    } else if let Some(bob) = &r.bob {
        let target = bob.target.unwrap_or(0) as usize;
        t.scored = true;
        t.hit = r.correct[target];
        if r.correct.len() == 2 {
            t.untargeted = Some(r.correct[1 - target]);
            t.joint = Some(r.correct.iter().all(|&c| c));
        }
        if strategy == BobStrategy::Honest {
            t.got = Some(bob.certain.iter().any(|&c| c));
        }
    }
    Ok(t)
}

fn dependence_trial(sc: &Scenario, seed: u64) -> Result<Trial, qotlab_core::Error> {
    let c = sc.config.with_seed(seed);
    let honest = run_session_retrying(&c, BobStrategy::Honest)?;
    let cheat = run_session_retrying(&c, BobStrategy::Entangling { target: 0 })?;
    let mut text = honest.to_text();
    text.push_str(&cheat.to_text());
    Ok(Trial {
        hit: cheat.correct.iter().all(|&c| c),
        scored: true,
        aborted: honest.aborted || cheat.aborted,
        redraws: u64::from(honest.attempts - 1) + u64::from(cheat.attempts - 1),
        digest: hash(&text),
        dependence: Some((
            DependenceRecord::from_session(&honest)?,
            honest.correct.iter().all(|&c| c),
            cheat.correct.clone(),
        )),
        ..Trial::default()
    })
}

/// Runs every session of `sc` under `master_seed` and aggregates.
pub fn run_scenario(sc: &Scenario, master_seed: u64) -> Result<RunSummary, HarnessError> {
    sc.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;

    let mut extras: Vec<(&'static str, f64)> = Vec::new();
    let lo = if sc.kind == ScenarioKind::LoIdeal {
        let model = build_ideal_ot();
        let sw = construct_switch_unitary(&model, 0, 1)?;
        extras.push(("switch_max_trace_distance", verify_switch(&model, &sw)?.max_distance));
        Some((model, sw))
    } else {
        None
    };

    let run_one = |k: u64| -> Result<Trial, qotlab_core::Error> {
        let seed = derive_seed(master_seed, k);
        match (sc.kind, &lo) {
            (ScenarioKind::LoIdeal, Some((model, sw))) => {
                let mut rng = SessionRngs::new(seed).nature;
                let mut text = format!("lo-ideal seed={seed}");
                let mut all = true;
                for i in 0..model.alice_dim {
                    let (m0, m1) = double_extraction_with(model, sw, i, &mut rng)?;
                    all &= [m0, m1] == model.f[i];
                    text.push_str(&format!(" {i}:{m0}{m1}"));
                }
                Ok(Trial { hit: all, scored: true, digest: hash(&text), ..Trial::default() })
            }
            (ScenarioKind::LoBcqot, _) => dependence_trial(sc, seed),
            (kind, _) => protocol_trial(sc, kind.strategy().expect("protocol scenario"), seed),
        }
    };

    let results: Vec<Result<Trial, qotlab_core::Error>> =
        pool.install(|| (0..sc.trials).into_par_iter().map(run_one).collect());

    let mut trials = Vec::with_capacity(results.len());
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(t) => trials.push(t),
            Err(source) => {
                return Err(HarnessError::Session { scenario: sc.name().to_string(), index: index as u64, source })
            }
        }
    }

    let mut hasher = Sha256::new();
    let (mut hits, mut scored, mut aborts, mut redraws) = (0u64, 0u64, 0u64, 0u64);
    let (mut untargeted, mut untargeted_n, mut joint, mut joint_n, mut got, mut got_n) =
        (0u64, 0u64, 0u64, 0u64, 0u64, 0u64);
    let mut dep = DependenceReport::default();
    for t in &trials {
        hasher.update(t.digest);
        hits += u64::from(t.hit && t.scored);
        scored += u64::from(t.scored);
        aborts += u64::from(t.aborted);
        redraws += t.redraws;
        if let Some(u) = t.untargeted {
            untargeted += u64::from(u);
            untargeted_n += 1;
        }
        if let Some(j) = t.joint {
            joint += u64::from(j);
            joint_n += 1;
        }
        if let Some(g) = t.got {
            got += u64::from(g);
            got_n += 1;
        }
        if let Some((rec, honest_joint, cheat)) = &t.dependence {
            dep.add_record(rec.clone(), *honest_joint);
            dep.add_entangling_outcome(cheat, 0);
        }
    }

    let rate = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    if untargeted_n > 0 {
        extras.push(("untargeted_rate", rate(untargeted, untargeted_n)));
    }
    if joint_n > 0 {
        extras.push(("joint_rate", rate(joint, joint_n)));
    }
    if got_n > 0 {
        extras.push(("certain_rate", rate(got, got_n)));
    }
    if sc.kind == ScenarioKind::LoBcqot {
        extras.push(("non_constant_rate", dep.non_constant_rate()));
        extras.push(("parity_differs_rate", rate(dep.parity_differs, sc.trials)));
        extras.push(("projection_valid_rate", rate(dep.projection_valid, sc.trials)));
        extras.push(("honest_joint_rate", dep.honest_joint.rate()));
        extras.push(("entangling_targeted_rate", dep.entangling_targeted.rate()));
        extras.push(("entangling_untargeted_rate", dep.entangling_untargeted.rate()));
    }
    extras.push(("redraw_rate", rate(redraws, sc.trials)));

    let digest = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok(RunSummary {
        scenario: sc.name().to_string(),
        trials: sc.trials,
        n: sc.config.n,
        variant: sc.config.variant,
        bc_mode: sc.config.bc_mode,
        master_seed,
        match_rate: rate(hits, scored),
        wilson95: wilson95(hits, scored),
        abort_rate: rate(aborts, sc.trials),
        analytic_reference: sc.analytic_reference(),
        hits,
        scored,
        aborts,
        redraws,
        extras,
        digest,
    })
}
