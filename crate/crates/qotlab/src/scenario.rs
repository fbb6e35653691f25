//! Named experiment presets.

use std::fmt;
use std::str::FromStr;

use qotlab_core::adversary::{analytic_reliability, PovmPair};
use qotlab_core::protocol::{lying_abort_probability, BobStrategy, ProtocolConfig, Variant};
use qotlab_core::vault::BcMode;

use crate::HarnessError;

pub const DEFAULT_N: usize = 25;
pub const DEFAULT_TRIALS: u64 = 10_000;
pub const DEFAULT_LO_TRIALS: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    HonestAon,
    CheatAon,
    CheatAonBccc,
    Honest12ot,
    Cheat12otT0,
    Cheat12otT1,
    LyingUnveiler,
    LoIdeal,
    LoBcqot,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 9] = [
        ScenarioKind::HonestAon,
        ScenarioKind::CheatAon,
        ScenarioKind::CheatAonBccc,
        ScenarioKind::Honest12ot,
        ScenarioKind::Cheat12otT0,
        ScenarioKind::Cheat12otT1,
        ScenarioKind::LyingUnveiler,
        ScenarioKind::LoIdeal,
        ScenarioKind::LoBcqot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::HonestAon => "honest-aon",
            ScenarioKind::CheatAon => "cheat-aon",
            ScenarioKind::CheatAonBccc => "cheat-aon-bccc",
            ScenarioKind::Honest12ot => "honest-12ot",
            ScenarioKind::Cheat12otT0 => "cheat-12ot-t0",
            ScenarioKind::Cheat12otT1 => "cheat-12ot-t1",
            ScenarioKind::LyingUnveiler => "lying-unveiler",
            ScenarioKind::LoIdeal => "lo-ideal",
            ScenarioKind::LoBcqot => "lo-bcqot",
        }
    }

    pub fn default_variant(self) -> Variant {
        match self {
            ScenarioKind::Honest12ot
            | ScenarioKind::Cheat12otT0
            | ScenarioKind::Cheat12otT1
            | ScenarioKind::LoBcqot => Variant::OneOutOfTwo,
            _ => Variant::AllOrNothing,
        }
    }

    pub fn default_bc_mode(self) -> BcMode {
        if self == ScenarioKind::CheatAonBccc {
            BcMode::Bccc
        } else {
            BcMode::NonBccc
        }
    }

    pub fn default_trials(self) -> u64 {
        if self == ScenarioKind::LoIdeal {
            DEFAULT_LO_TRIALS
        } else {
            DEFAULT_TRIALS
        }
    }

    /// Bob's strategy for protocol scenarios; `None` for the Lo scenarios.
    pub fn strategy(self) -> Option<BobStrategy> {
        Some(match self {
            ScenarioKind::HonestAon | ScenarioKind::Honest12ot => BobStrategy::Honest,
            ScenarioKind::CheatAon | ScenarioKind::CheatAonBccc | ScenarioKind::Cheat12otT0 => {
                BobStrategy::Entangling { target: 0 }
            }
            ScenarioKind::Cheat12otT1 => BobStrategy::Entangling { target: 1 },
            ScenarioKind::LyingUnveiler => BobStrategy::LyingUnveiler,
            ScenarioKind::LoIdeal | ScenarioKind::LoBcqot => return None,
        })
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| HarnessError::UnknownScenario(s.to_string()))
    }
}

/// A preset plus the protocol configuration and trial count it runs with.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub config: ProtocolConfig,
    pub trials: u64,
}

impl Scenario {
    pub fn new(kind: ScenarioKind) -> Self {
        Self {
            kind,
            config: ProtocolConfig::new(DEFAULT_N, kind.default_variant(), kind.default_bc_mode(), 0),
            trials: kind.default_trials(),
        }
    }

    pub fn with_n(mut self, n: usize) -> Self {
        let keep = (self.config.variant, self.config.bc_mode, self.config.seed);
        self.config = ProtocolConfig::new(n, keep.0, keep.1, keep.2);
        self
    }

    pub fn with_trials(mut self, trials: u64) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_variant(mut self, v: Variant) -> Self {
        self.config.variant = v;
        self
    }

    pub fn with_bc_mode(mut self, m: BcMode) -> Self {
        self.config.bc_mode = m;
        self
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials == 0 {
            return Err(HarnessError::InvalidScenario("trials must be at least 1".into()));
        }
        if self.kind == ScenarioKind::LoBcqot && self.config.variant != Variant::OneOutOfTwo {
            return Err(HarnessError::InvalidScenario("lo-bcqot runs the 1-2 variant".into()));
        }
        if let Some(BobStrategy::Entangling { target: 1 }) = self.kind.strategy() {
            if self.config.variant != Variant::OneOutOfTwo {
                return Err(HarnessError::InvalidScenario("target 1 needs the 1-2 variant".into()));
            }
        }
        if self.kind != ScenarioKind::LoIdeal {
            self.config.validate()?;
        }
        Ok(())
    }

    /// Expected value of `match_rate`, where one is known in closed form.
    pub fn analytic_reference(&self) -> Option<f64> {
        let povm = analytic_reliability(&PovmPair::reference());
        let coherent = self.config.bc_mode == BcMode::NonBccc;
        match self.kind {
            ScenarioKind::HonestAon | ScenarioKind::Honest12ot => match self.config.variant {
                Variant::AllOrNothing => Some(0.75),
                Variant::OneOutOfTwo => Some(1.0),
            },
            ScenarioKind::CheatAon
            | ScenarioKind::CheatAonBccc
            | ScenarioKind::Cheat12otT0
            | ScenarioKind::Cheat12otT1 => Some(if coherent { povm } else { 0.75 }),
            ScenarioKind::LyingUnveiler => Some(lying_abort_probability(self.config.test_set_size)),
            ScenarioKind::LoIdeal => Some(1.0),
            ScenarioKind::LoBcqot => Some(if coherent { povm * 0.5 } else { 0.375 }),
        }
    }
}
