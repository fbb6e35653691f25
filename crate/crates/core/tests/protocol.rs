use statrs::distribution::{ChiSquared, ContinuousCDF};

use qotlab_core::linalg::StateVector;
use qotlab_core::protocol::{
    lying_abort_probability, run_session, run_session_retrying, BobStrategy, Message, ProtocolConfig, Variant,
};
use qotlab_core::registers::BranchedState;
use qotlab_core::seeding::{derive_seed, SessionRngs};
use qotlab_core::vault::{BcMode, CommitmentVault};
use qotlab_core::Error;

fn aon(seed: u64) -> ProtocolConfig {
    ProtocolConfig::new(25, Variant::AllOrNothing, BcMode::NonBccc, seed)
}

#[test]
fn honest_aon_session_has_seven_messages() {
    let r = run_session_retrying(&aon(1), BobStrategy::Honest).unwrap();
    let m = r.transcript.messages();
    assert_eq!(m.len(), 7);
    assert!(matches!(m[0], Message::QubitBatch { n: 25 }));
    assert!(matches!(m[1], Message::CommitBatch { .. }));
    assert!(matches!(m[2], Message::TestRequest { .. }));
    assert!(matches!(m[3], Message::TestUnveil { .. }));
    assert!(matches!(m[4], Message::BasesAnnounce { .. }));
    assert!(matches!(m[5], Message::SubsetsAnnounce { .. }));
    assert!(matches!(m[6], Message::FinalAoN { .. }));
    assert!(!r.aborted);
}

#[test]
fn sessions_are_deterministic_in_the_seed() {
    for strategy in [BobStrategy::Honest, BobStrategy::Entangling { target: 0 }, BobStrategy::LyingUnveiler] {
        let a = run_session_retrying(&aon(9), strategy).unwrap();
        let b = run_session_retrying(&aon(9), strategy).unwrap();
        assert_eq!(a.to_text(), b.to_text());
    }
    let a = run_session_retrying(&aon(9), BobStrategy::Honest).unwrap();
    let c = run_session_retrying(&aon(10), BobStrategy::Honest).unwrap();
    assert_ne!(a.to_text(), c.to_text());
}

#[test]
fn empty_test_set_is_accepted() {
    let mut c = aon(3);
    c.test_set_size = 0;
    let r = run_session_retrying(&c, BobStrategy::LyingUnveiler).unwrap();
    assert!(!r.aborted);
    assert!(matches!(&r.transcript.messages()[2], Message::TestRequest { r } if r.is_empty()));
    assert_eq!(lying_abort_probability(0), 0.0);
}

#[test]
fn infeasible_basis_split_is_reported_and_redrawn() {
    let mut c = ProtocolConfig::new(8, Variant::AllOrNothing, BcMode::NonBccc, 0);
    c.test_set_size = 0;
    c.subset_size = 4;
    let mut seen = 0;
    for k in 0..64 {
        let cfg = c.with_seed(derive_seed(1, k));
        match run_session(&cfg, BobStrategy::Honest) {
            Err(Error::InfeasibleSubsets(_)) => {
                seen += 1;
                let r = run_session_retrying(&cfg, BobStrategy::Honest).unwrap();
                assert!(r.attempts > 1);
            }
            other => assert!(other.is_ok(), "{other:?}"),
        }
    }
    assert!(seen > 0);
}

#[test]
fn config_bounds() {
    assert!(ProtocolConfig::new(7, Variant::AllOrNothing, BcMode::NonBccc, 0).validate().is_err());
    let c = ProtocolConfig::new(25, Variant::AllOrNothing, BcMode::NonBccc, 0);
    assert_eq!((c.subset_size, c.test_set_size), (6, 5));
    assert!(c.validate().is_ok());
    let mut bad = c.clone();
    bad.subset_size = 11;
    assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
}

#[test]
fn lying_abort_probability_oracle() {
    assert!((lying_abort_probability(1) - 0.5).abs() < 1e-15);
    assert!((lying_abort_probability(5) - (1.0 - 0.5f64.powi(5))).abs() < 1e-12);
}

#[test]
fn honest_one_out_of_two_delivers_the_chosen_bit() {
    for k in 0..50 {
        let c = ProtocolConfig::new(25, Variant::OneOutOfTwo, BcMode::Bccc, derive_seed(4, k));
        let r = run_session_retrying(&c, BobStrategy::Honest).unwrap();
        let bob = r.bob.as_ref().unwrap();
        let chosen = bob.certain.iter().position(|&c| c).unwrap();
        assert!(r.correct[chosen]);
    }
}

#[test]
fn unveiled_superposition_is_unbiased() {
    let trials = 4000u64;
    let mut ones = 0u64;
    for k in 0..trials {
        let mut rng = SessionRngs::new(derive_seed(77, k)).nature;
        let mut state = BranchedState::new();
        let mut vault = CommitmentVault::new();
        let reg = state.add_register("c", StateVector::plus()).unwrap();
        let id = vault.commit(&mut state, reg, BcMode::NonBccc, &mut rng).unwrap();
        ones += u64::from(vault.unveil(&mut state, id, &mut rng).unwrap().value);
    }
    let e = trials as f64 / 2.0;
    let stat = ((ones as f64 - e).powi(2) + ((trials - ones) as f64 - e).powi(2)) / e;
    let p = 1.0 - ChiSquared::new(1.0).unwrap().cdf(stat);
    assert!(p > 0.001, "chi-square {stat}, p {p}");
}

#[test]
fn golden_session_text() {
    let r = run_session_retrying(&aon(7), BobStrategy::Entangling { target: 0 }).unwrap();
    assert_eq!(r.to_text(), include_str!("golden/entangling_aon_seed7.txt"));
}
