//! Per-agent PPO learners, trajectory segments, replay buffers and the
//! exploration schedule used by the advisors.

mod nets;
mod ppo;
mod replay;

pub use nets::{act, sample_categorical, ActSample, PolicyNet, ValueNet};
pub use ppo::{
    actor_backward, actor_loss, advantages, critic_backward, critic_loss, discounted_returns, segment_returns,
    ActorLoss, ActorObjective, Learner, PpoConfig, SegmentStep, TrajectorySegment, TransferTarget, UpdateReport,
};
pub use replay::{Batch, ReplayBuffer, DEFAULT_REPLAY_CAPACITY};

use serde::{Deserialize, Serialize};

/// Linear annealing from `start` to `finish` over `anneal_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub finish: f64,
    pub anneal_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            finish: 0.05,
            anneal_steps: 50_000,
        }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, t: u64) -> f64 {
        if t >= self.anneal_steps {
            return self.finish;
        }
        let frac = t as f64 / self.anneal_steps as f64;
        let lo = self.start.min(self.finish);
        let hi = self.start.max(self.finish);
        (self.start + frac * (self.finish - self.start)).clamp(lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn epsilon_endpoints_are_exact() {
        let s = EpsilonSchedule::default();
        assert_eq!(s.value(0), 1.0);
        assert_eq!(s.value(50_000), 0.05);
        assert_eq!(s.value(10_000_000), 0.05);
    }

    #[test]
    fn epsilon_midpoint() {
        assert!((EpsilonSchedule::default().value(25_000) - 0.525).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn epsilon_is_monotone_and_bounded(a in 0u64..200_000, b in 0u64..200_000) {
            let s = EpsilonSchedule::default();
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(s.value(hi) <= s.value(lo));
            prop_assert!((0.05..=1.0).contains(&s.value(a)));
            let linear = 1.0 - a as f64 * (0.95 / 5e4);
            prop_assert!((s.value(a) - linear.clamp(0.05, 1.0)).abs() < 1e-12);
        }
    }
}
