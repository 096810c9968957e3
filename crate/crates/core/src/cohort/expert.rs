use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ConfusionBias;
use crate::error::{Error, Result};
use crate::labels::ClassLabel;

/// Stand-in for a human reviewer. Agrees with the ground truth with
/// probability `agreement_rate`; otherwise answers with a confusion-biased
/// wrong class. Each sequence's answer is a pure function of
/// `(seed, sequence_id)`, so asking twice gives the same answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedExpert {
    pub agreement_rate: f64,
    pub seed: u64,
    pub confusion: ConfusionBias,
}

impl SimulatedExpert {
    pub fn new(agreement_rate: f64, seed: u64) -> Result<Self> {
        let e = Self {
            agreement_rate,
            seed,
            confusion: ConfusionBias::default(),
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.agreement_rate) {
            return Err(Error::Config(format!(
                "agreement rate {} outside [0, 1]",
                self.agreement_rate
            )));
        }
        self.confusion.validate()
    }

    pub fn review(&self, sequence_id: &str, true_label: ClassLabel) -> ClassLabel {
        let mut rng = crate::rng::stream(self.seed, &format!("expert/{sequence_id}"));
        let agree: f64 = rng.random();
        let pick: f64 = rng.random();
        if agree < self.agreement_rate {
            true_label
        } else {
            self.confusion.wrong_label(true_label, pick)
        }
    }
}
