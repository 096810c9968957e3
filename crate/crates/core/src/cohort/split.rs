use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// How test patients relate to training patients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatientMode {
    /// Test patients never appear in training.
    Unseen,
    /// Every patient with two or more sequences appears on both sides.
    Known,
}

impl std::str::FromStr for PatientMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unseen" => Ok(PatientMode::Unseen),
            "known" => Ok(PatientMode::Known),
            other => Err(Error::Input(format!("unknown patient mode {other:?}"))),
        }
    }
}

/// Assign each sequence (given by its patient id) to train or test.
pub fn split_by_patient(patients: &[&str], mode: PatientMode, test_fraction: f64, seed: u64) -> Result<Vec<Split>> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Config(format!("test fraction {test_fraction} outside [0, 1)")));
    }
    let mut by_patient: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in patients.iter().enumerate() {
        by_patient.entry(p).or_default().push(i);
    }
    let mut rng = crate::rng::stream(seed, "split");
    let mut out = vec![Split::Train; patients.len()];
    match mode {
        PatientMode::Unseen => {
            let target = (test_fraction * patients.len() as f64).round() as usize;
            let mut ids: Vec<&str> = by_patient.keys().copied().collect();
            ids.shuffle(&mut rng);
            let mut taken = 0;
            for id in ids {
                if taken >= target {
                    break;
                }
                for &i in &by_patient[id] {
                    out[i] = Split::Test;
                    taken += 1;
                }
            }
        }
        PatientMode::Known => {
            for idx in by_patient.values() {
                let mut idx = idx.clone();
                idx.shuffle(&mut rng);
                let n = idx.len();
                let k = if n >= 2 {
                    ((test_fraction * n as f64).round() as usize).clamp(1, n - 1)
                } else {
                    0
                };
                for &i in &idx[..k] {
                    out[i] = Split::Test;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn patients() -> Vec<String> {
        (0..400).map(|i| format!("P{:03}", i % 20)).collect()
    }

    fn sets(p: &[String], s: &[Split]) -> (BTreeSet<String>, BTreeSet<String>, usize) {
        let mut tr = BTreeSet::new();
        let mut te = BTreeSet::new();
        let mut n_test = 0;
        for (id, sp) in p.iter().zip(s) {
            match sp {
                Split::Train => {
                    tr.insert(id.clone());
                }
                Split::Test => {
                    te.insert(id.clone());
                    n_test += 1;
                }
            }
        }
        (tr, te, n_test)
    }

    #[test]
    fn unseen_split_has_disjoint_patients() {
        let p = patients();
        let refs: Vec<&str> = p.iter().map(String::as_str).collect();
        let s = split_by_patient(&refs, PatientMode::Unseen, 0.2, 5).unwrap();
        let (tr, te, n) = sets(&p, &s);
        assert!(tr.is_disjoint(&te));
        assert_eq!(n, 80);
    }

    #[test]
    fn known_split_shares_every_patient() {
        let p = patients();
        let refs: Vec<&str> = p.iter().map(String::as_str).collect();
        let s = split_by_patient(&refs, PatientMode::Known, 0.2, 5).unwrap();
        let (tr, te, n) = sets(&p, &s);
        assert_eq!(tr, te);
        assert_eq!(n, 80);
        assert_eq!(s, split_by_patient(&refs, PatientMode::Known, 0.2, 5).unwrap());
    }
}
