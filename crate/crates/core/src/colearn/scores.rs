use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ranking used to pick which disagreements go to the expert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Confidence,
    Margin,
    Entropy,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Confidence, Strategy::Margin, Strategy::Entropy];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Confidence => "confidence",
            Strategy::Margin => "margin",
            Strategy::Entropy => "entropy",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Strategy::Confidence => "High Confidence",
            Strategy::Margin => "Margin",
            Strategy::Entropy => "Entropy",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "confidence" | "high-confidence" | "high_confidence" => Ok(Strategy::Confidence),
            "margin" => Ok(Strategy::Margin),
            "entropy" => Ok(Strategy::Entropy),
            _ => Err(Error::Usage(format!(
                "unknown strategy {s:?} (expected confidence, margin or entropy)"
            ))),
        }
    }
}

fn check_probs(p: &[f64]) -> Result<()> {
    let s: f64 = p.iter().sum();
    if p.is_empty() || (s - 1.0).abs() > 1e-4 || p.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Input(format!("not a probability vector (sum {s})")));
    }
    Ok(())
}

/// Confidence `max p`, margin `p(1) - p(2)`, or entropy `-sum p ln p`.
pub fn uncertainty_score(p: &[f64], strategy: Strategy) -> Result<f64> {
    check_probs(p)?;
    Ok(match strategy {
        Strategy::Confidence => p.iter().copied().fold(0.0, f64::max),
        Strategy::Margin => {
            let mut s = p.to_vec();
            s.sort_by(|a, b| b.total_cmp(a));
            s[0] - s.get(1).copied().unwrap_or(0.0)
        }
        Strategy::Entropy => -p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>(),
    })
}

/// Score oriented so that larger means more certain.
pub fn certainty(p: &[f64], strategy: Strategy) -> Result<f64> {
    let s = uncertainty_score(p, strategy)?;
    Ok(if strategy == Strategy::Entropy { -s } else { s })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_extremes() {
        let u = [0.2; 5];
        assert!((uncertainty_score(&u, Strategy::Confidence).unwrap() - 0.2).abs() < 1e-12);
        assert!(uncertainty_score(&u, Strategy::Margin).unwrap().abs() < 1e-12);
        assert!((uncertainty_score(&u, Strategy::Entropy).unwrap() - 5f64.ln()).abs() < 1e-12);
        let h = [0.0, 0.0, 1.0, 0.0, 0.0];
        assert_eq!(uncertainty_score(&h, Strategy::Confidence).unwrap(), 1.0);
        assert_eq!(uncertainty_score(&h, Strategy::Margin).unwrap(), 1.0);
        assert_eq!(uncertainty_score(&h, Strategy::Entropy).unwrap(), 0.0);
    }

    #[test]
    fn mixed_vector_by_direct_summation() {
        let p = [0.5, 0.3, 0.1, 0.07, 0.03];
        assert!((uncertainty_score(&p, Strategy::Margin).unwrap() - 0.2).abs() < 1e-12);
        let e: f64 = p.iter().map(|v: &f64| -v * v.ln()).sum();
        assert!((uncertainty_score(&p, Strategy::Entropy).unwrap() - e).abs() < 1e-12);
        assert!((e - 1.2294).abs() < 1e-4);
    }

    #[test]
    fn unnormalised_input_rejected() {
        assert!(matches!(
            uncertainty_score(&[0.5, 0.6], Strategy::Confidence).unwrap_err(),
            Error::Input(_)
        ));
    }

    #[test]
    fn parse_names() {
        assert_eq!("high-confidence".parse::<Strategy>().unwrap(), Strategy::Confidence);
        assert!("random".parse::<Strategy>().is_err());
    }
}
