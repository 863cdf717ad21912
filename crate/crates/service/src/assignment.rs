use std::collections::BTreeMap;

use demfeed::Condition;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentMode {
    UniformRandom,
    #[default]
    BlockRandomized,
}

/// How sessions are spread over conditions.
///
/// Both modes are a pure function of (seed, session index), so assignment
/// continues the same sequence after a restart. In block mode every
/// condition with positive weight appears once per block; in uniform mode
/// each session is an independent weighted draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentPolicy {
    #[serde(default)]
    pub mode: AssignmentMode,
    #[serde(default = "equal_weights")]
    pub weights: BTreeMap<Condition, f64>,
    #[serde(default)]
    pub seed: u64,
}

fn equal_weights() -> BTreeMap<Condition, f64> {
    Condition::ALL.into_iter().map(|c| (c, 1.0)).collect()
}

impl Default for AssignmentPolicy {
    fn default() -> Self {
        Self {
            mode: AssignmentMode::default(),
            weights: equal_weights(),
            seed: 0,
        }
    }
}

const UNIFORM_DOMAIN: u64 = 0x5e_ed0f_a551_9e5e;

impl AssignmentPolicy {
    pub fn uniform(seed: u64) -> Self {
        Self {
            mode: AssignmentMode::UniformRandom,
            seed,
            ..Self::default()
        }
    }

    pub fn block(seed: u64) -> Self {
        Self {
            mode: AssignmentMode::BlockRandomized,
            seed,
            ..Self::default()
        }
    }

    fn weight(&self, c: Condition) -> f64 {
        self.weights.get(&c).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if let Some((c, w)) = self.weights.iter().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return Err(ServiceError::BadRequest(format!("weight for {c} must be a non-negative number, got {w}")));
        }
        if Condition::ALL.iter().map(|c| self.weight(*c)).sum::<f64>() <= 0.0 {
            return Err(ServiceError::BadRequest("assignment weights must sum to more than 0".into()));
        }
        Ok(())
    }

    /// Conditions eligible for assignment, in canonical order.
    pub fn active(&self) -> Vec<Condition> {
        Condition::ALL.into_iter().filter(|c| self.weight(*c) > 0.0).collect()
    }

    /// Condition for the `index`-th session (0-based).
    pub fn assign(&self, index: u64) -> Condition {
        let active = self.active();
        match self.mode {
            AssignmentMode::BlockRandomized => {
                let n = active.len() as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(index / n);
                let mut block = active;
                block.shuffle(&mut rng);
                block[(index % n) as usize]
            }
            AssignmentMode::UniformRandom => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ UNIFORM_DOMAIN);
                rng.set_stream(index);
                let weights: Vec<f64> = active.iter().map(|c| self.weight(*c)).collect();
                let dist = WeightedIndex::new(&weights).expect("validated weights");
                active[dist.sample(&mut rng)]
            }
        }
    }
}
