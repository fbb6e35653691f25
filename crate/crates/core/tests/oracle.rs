use qotlab_core::protocol::{run_traced_retrying, BobStrategy, ProtocolConfig, Variant};
use qotlab_core::reference::{trace_fidelity, SparseState};
use qotlab_core::seeding::derive_seed;
use qotlab_core::vault::BcMode;

#[test]
fn branched_state_matches_full_replay() {
    for k in 0..12u64 {
        let (variant, target) = if k % 2 == 0 { (Variant::AllOrNothing, 0) } else { (Variant::OneOutOfTwo, 1) };
        let mode = if k % 3 == 0 { BcMode::Bccc } else { BcMode::NonBccc };
        let c = ProtocolConfig::new(5, variant, mode, derive_seed(31, k));
        let (_, cps) = run_traced_retrying(&c, BobStrategy::Entangling { target }).unwrap();
        assert!(!cps.is_empty());
        for cp in &cps {
            let f = trace_fidelity(&cp.state).unwrap();
            assert!(f > 1.0 - 1e-9, "session {k} step {}: fidelity {f}", cp.step);
            let replay = SparseState::replay(cp.state.trace().unwrap()).unwrap();
            assert!((replay.norm_sqr() - 1.0).abs() < 1e-9);
        }
    }
}
