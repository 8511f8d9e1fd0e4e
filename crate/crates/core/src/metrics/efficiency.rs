use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label fractions (percent) averaged into the data-efficiency score.
pub const SCARCE_FRACTIONS: [f64; 3] = [10.0, 2.5, 1.25];

fn same_fraction(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractionValue {
    pub k: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    /// `P(k)`, ordered by descending `k`.
    pub scores: Vec<FractionValue>,
    /// `RPD(k) = 1 - P(k) / P(100)`, same order as `scores`.
    pub rpd: Vec<FractionValue>,
    /// Mean retention `P(k) / P(100)` over the scarce fractions that were
    /// run; `None` if none of them were.
    pub de: Option<f64>,
}

impl EfficiencyReport {
    pub fn score(&self, k: f64) -> Option<f64> {
        self.scores.iter().find(|s| same_fraction(s.k, k)).map(|s| s.value)
    }

    pub fn rpd_at(&self, k: f64) -> Option<f64> {
        self.rpd.iter().find(|s| same_fraction(s.k, k)).map(|s| s.value)
    }
}

/// Builds the efficiency summary from `(k, P(k))` pairs.
pub fn efficiency_report(scores: &[(f64, f64)]) -> Result<EfficiencyReport> {
    let base = scores
        .iter()
        .find(|(k, _)| same_fraction(*k, 100.0))
        .map(|&(_, p)| p)
        .ok_or(Error::MissingBaseline)?;
    if !(base > 0.0) {
        return Err(Error::RatioDomain(format!("P(100) = {base} must be positive")));
    }
    let mut sorted: Vec<FractionValue> = scores.iter().map(|&(k, value)| FractionValue { k, value }).collect();
    sorted.sort_by(|a, b| b.k.total_cmp(&a.k));
    let rpd = sorted
        .iter()
        .map(|s| FractionValue {
            k: s.k,
            value: 1.0 - s.value / base,
        })
        .collect();
    let retained: Vec<f64> = SCARCE_FRACTIONS
        .iter()
        .filter_map(|&k| sorted.iter().find(|s| same_fraction(s.k, k)))
        .map(|s| s.value / base)
        .collect();
    let de = (!retained.is_empty()).then(|| retained.iter().sum::<f64>() / retained.len() as f64);
    Ok(EfficiencyReport {
        scores: sorted,
        rpd,
        de,
    })
}

/// Retention of in-domain performance on the site-shifted (`gen`) and
/// cross-corpus (`ext`) test sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub p_in: f64,
    pub p_gen: f64,
    pub p_ext: f64,
    pub r_site: f64,
    pub r_ext: f64,
    pub r_2hop: f64,
}

pub fn transfer_report(p_in: f64, p_gen: f64, p_ext: f64) -> Result<TransferReport> {
    if !(p_in > 0.0) {
        return Err(Error::RatioDomain(format!("in-domain score {p_in} must be positive")));
    }
    if !(p_gen > 0.0) {
        return Err(Error::RatioDomain(format!("generalizability score {p_gen} must be positive")));
    }
    Ok(TransferReport {
        p_in,
        p_gen,
        p_ext,
        r_site: p_gen / p_in,
        r_ext: p_ext / p_gen,
        r_2hop: p_ext / p_in,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_scores_give_unit_efficiency() {
        let r = efficiency_report(&[(100.0, 60.0), (10.0, 60.0), (2.5, 60.0), (1.25, 60.0)]).unwrap();
        assert!(r.rpd.iter().all(|v| v.value == 0.0));
        assert_eq!(r.de, Some(1.0));
        assert_eq!(r.scores[0].k, 100.0);
    }

    #[test]
    fn missing_baseline() {
        assert!(matches!(efficiency_report(&[(10.0, 1.0)]), Err(Error::MissingBaseline)));
    }

    #[test]
    fn identical_domains() {
        let t = transfer_report(0.7, 0.7, 0.7).unwrap();
        assert_eq!((t.r_site, t.r_ext, t.r_2hop), (1.0, 1.0, 1.0));
        assert!(matches!(transfer_report(0.0, 1.0, 1.0), Err(Error::RatioDomain(_))));
    }
}
