//! The five EEG pattern classes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub const NUM_CLASSES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    Seizure,
    #[serde(rename = "LPD")]
    Lpd,
    #[serde(rename = "GPD")]
    Gpd,
    #[serde(rename = "GRDA")]
    Grda,
    #[serde(rename = "LRDA")]
    Lrda,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; NUM_CLASSES] = [
        ClassLabel::Seizure,
        ClassLabel::Lpd,
        ClassLabel::Gpd,
        ClassLabel::Grda,
        ClassLabel::Lrda,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ClassLabel> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Seizure => "Seizure",
            ClassLabel::Lpd => "LPD",
            ClassLabel::Gpd => "GPD",
            ClassLabel::Grda => "GRDA",
            ClassLabel::Lrda => "LRDA",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Input(format!("unknown class label {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        for c in ClassLabel::ALL {
            assert_eq!(ClassLabel::from_index(c.index()), Some(c));
            assert_eq!(c.name().parse::<ClassLabel>().unwrap(), c);
        }
        assert!(ClassLabel::from_index(5).is_none());
        assert!("Other".parse::<ClassLabel>().is_err());
    }

    #[test]
    fn serde_uses_clinical_names() {
        assert_eq!(serde_json::to_string(&ClassLabel::Lrda).unwrap(), "\"LRDA\"");
        let c: ClassLabel = serde_json::from_str("\"Seizure\"").unwrap();
        assert_eq!(c, ClassLabel::Seizure);
    }
}
