use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{ClassLabel, NUM_CLASSES};

/// Row-stochastic matrix with a zero diagonal: where a mislabel of class `i` lands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionBias(pub [[f64; NUM_CLASSES]; NUM_CLASSES]);

impl Default for ConfusionBias {
    /// 70/30 split between the two clinically adjacent classes.
    fn default() -> Self {
        use ClassLabel::*;
        let adjacent = [
            (Seizure, Lpd, Lrda),
            (Lpd, Seizure, Gpd),
            (Gpd, Lpd, Grda),
            (Grda, Lrda, Gpd),
            (Lrda, Seizure, Grda),
        ];
        let mut m = [[0.0; NUM_CLASSES]; NUM_CLASSES];
        for (c, major, minor) in adjacent {
            m[c.index()][major.index()] = 0.7;
            m[c.index()][minor.index()] = 0.3;
        }
        ConfusionBias(m)
    }
}

impl ConfusionBias {
    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.0.iter().enumerate() {
            if row[i] != 0.0 {
                return Err(Error::Config(format!("confusion row {i} has a nonzero diagonal")));
            }
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::Config(format!("confusion row {i} has a negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("confusion row {i} sums to {sum}")));
            }
        }
        Ok(())
    }

    /// Map a uniform draw in `[0, 1)` to a wrong class for `truth`.
    pub fn wrong_label(&self, truth: ClassLabel, u: f64) -> ClassLabel {
        let row = &self.0[truth.index()];
        let mut acc = 0.0;
        let mut last = None;
        for (j, p) in row.iter().enumerate() {
            if *p <= 0.0 {
                continue;
            }
            acc += p;
            last = Some(j);
            if u < acc {
                return ClassLabel::ALL[j];
            }
        }
        // Rounding can leave `acc` a hair under 1.
        ClassLabel::ALL[last.expect("validated row has mass")]
    }
}

/// Replace each label, independently with probability `rho`, by a class drawn
/// from its confusion row. Two uniforms are consumed per label regardless of
/// outcome so the stream alignment does not depend on `rho`.
pub fn corrupt_labels(truth: &[ClassLabel], rho: f64, confusion: &ConfusionBias, seed: u64) -> Result<Vec<ClassLabel>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Config(format!("corruption rate {rho} outside [0, 1]")));
    }
    confusion.validate()?;
    let mut rng = crate::rng::stream(seed, "corrupt");
    Ok(truth
        .iter()
        .map(|&t| {
            let flip: f64 = rng.random();
            let pick: f64 = rng.random();
            if flip < rho {
                confusion.wrong_label(t, pick)
            } else {
                t
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<ClassLabel> {
        (0..n).map(|i| ClassLabel::ALL[i % NUM_CLASSES]).collect()
    }

    #[test]
    fn default_confusion_is_valid() {
        let c = ConfusionBias::default();
        c.validate().unwrap();
        assert_eq!(c.wrong_label(ClassLabel::Seizure, 0.1), ClassLabel::Lpd);
        assert_eq!(c.wrong_label(ClassLabel::Seizure, 0.95), ClassLabel::Lrda);
        assert_eq!(c.wrong_label(ClassLabel::Seizure, 0.999_999_999_999), ClassLabel::Lrda);
    }

    #[test]
    fn extremes_of_rho() {
        let t = labels(500);
        let c = ConfusionBias::default();
        assert_eq!(corrupt_labels(&t, 0.0, &c, 3).unwrap(), t);
        let all = corrupt_labels(&t, 1.0, &c, 3).unwrap();
        assert!(all.iter().zip(&t).all(|(a, b)| a != b));
        assert!(corrupt_labels(&t, 1.5, &c, 3).is_err());
    }

    #[test]
    fn flip_count_within_binomial_interval() {
        let t = labels(1000);
        let noisy = corrupt_labels(&t, 0.2, &ConfusionBias::default(), 42).unwrap();
        let flipped = noisy.iter().zip(&t).filter(|(a, b)| a != b).count();
        assert!((160..=240).contains(&flipped), "{flipped}");
        assert_eq!(noisy, corrupt_labels(&t, 0.2, &ConfusionBias::default(), 42).unwrap());
    }

    #[test]
    fn rate_converges_over_many_labels() {
        let t = labels(20_000);
        for (seed, rho) in [(1, 0.1), (2, 0.35), (3, 0.6)] {
            let noisy = corrupt_labels(&t, rho, &ConfusionBias::default(), seed).unwrap();
            let rate = noisy.iter().zip(&t).filter(|(a, b)| a != b).count() as f64 / 20_000.0;
            assert!((rate - rho).abs() <= 0.03, "rho {rho} observed {rate}");
        }
    }

    #[test]
    fn rejects_bad_matrices() {
        let mut c = ConfusionBias::default();
        c.0[0][0] = 0.1;
        assert!(c.validate().is_err());
        let mut c = ConfusionBias::default();
        c.0[2][1] = 0.5;
        assert!(c.validate().is_err());
    }
}
