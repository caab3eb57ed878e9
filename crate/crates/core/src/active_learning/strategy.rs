use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ProbeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Strategy {
    /// Rank by classifier `P(unreliable)` from a single surrogate.
    Probe,
    /// Rank by scaled σ across `K` surrogates.
    Ensemble(usize),
    Random,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Probe => write!(f, "probe"),
            Strategy::Ensemble(k) => write!(f, "ensemble:{k}"),
            Strategy::Random => write!(f, "random"),
        }
    }
}

impl FromStr for Strategy {
    type Err = ProbeError;

    /// `probe`, `random`, `ensemble` (K = 4) or `ensemble:K`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probe" => Ok(Strategy::Probe),
            "random" => Ok(Strategy::Random),
            "ensemble" => Ok(Strategy::Ensemble(4)),
            _ => {
                let k = s
                    .strip_prefix("ensemble:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .ok_or_else(|| ProbeError::Config(format!("unknown strategy `{s}`")))?;
                if k < 2 {
                    return Err(ProbeError::Config("an ensemble strategy needs K ≥ 2".into()));
                }
                Ok(Strategy::Ensemble(k))
            }
        }
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Strategy {
    type Error = ProbeError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Order `(mol_id, score)` pairs by descending score, ties by ascending id.
pub fn rank_pool(ids: &[u64], scores: &[f64]) -> Result<Vec<(u64, f64)>> {
    if ids.len() != scores.len() {
        return Err(ProbeError::dim("rank_pool", &[ids.len()], &[scores.len()]));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(ProbeError::Data(format!("acquisition score {s} is not a number")));
    }
    let mut ranked: Vec<(u64, f64)> = ids.iter().copied().zip(scores.iter().copied()).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_and_ties() {
        let r = rank_pool(&[7, 3], &[0.1, 0.9]).unwrap();
        assert_eq!(r.iter().map(|x| x.0).collect::<Vec<_>>(), vec![3, 7]);
        let r = rank_pool(&[9, 2, 5], &[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(r.iter().map(|x| x.0).collect::<Vec<_>>(), vec![2, 5, 9]);
        assert!(rank_pool(&[1], &[f64::NAN]).is_err());
    }

    #[test]
    fn parse_strategies() {
        for s in ["probe", "random", "ensemble:3"] {
            assert_eq!(s.parse::<Strategy>().unwrap().to_string(), s);
        }
        assert_eq!("ensemble".parse::<Strategy>().unwrap(), Strategy::Ensemble(4));
        assert!("ensemble:1".parse::<Strategy>().is_err());
        assert!("greedy".parse::<Strategy>().is_err());
    }
}
