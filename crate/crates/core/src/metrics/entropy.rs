use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Remainder mass above which a top-k entropy is marked as a lower bound.
pub const REMAINDER_TOLERANCE: f64 = 1e-6;
/// Allowed deviation of `sum(top) + remainder` from 1.
pub const MASS_TOLERANCE: f64 = 1e-6;

/// Observed distribution at one generated position: the most probable tokens
/// in descending order plus the unobserved remainder mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDistribution {
    pub top: Vec<(String, f64)>,
    pub remainder: f64,
}

impl TokenDistribution {
    /// Sorts descending; a total above 1 is renormalized.
    pub fn from_probs(mut top: Vec<(String, f64)>) -> Self {
        top.retain(|(_, p)| p.is_finite() && *p > 0.0);
        top.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let total: f64 = top.iter().map(|t| t.1).sum();
        if total > 1.0 {
            top.iter_mut().for_each(|t| t.1 /= total);
            return Self { top, remainder: 0.0 };
        }
        Self {
            top,
            remainder: (1.0 - total).max(0.0),
        }
    }

    pub fn from_logprobs(top: impl IntoIterator<Item = (String, f64)>) -> Self {
        Self::from_probs(top.into_iter().map(|(t, lp)| (t, lp.exp())).collect())
    }

    pub fn one_hot(token: impl Into<String>) -> Self {
        Self {
            top: vec![(token.into(), 1.0)],
            remainder: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut total = self.remainder;
        let mut last = f64::INFINITY;
        for (t, p) in &self.top {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::invalid(format!("probability {p} of {t:?} outside [0, 1]")));
            }
            if *p > last {
                return Err(Error::invalid("distribution is not sorted descending"));
            }
            last = *p;
            total += p;
        }
        if !(0.0..=1.0).contains(&self.remainder) || (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::invalid(format!("distribution mass {total} is not 1")));
        }
        Ok(())
    }

    pub fn is_lower_bound(&self) -> bool {
        self.remainder > REMAINDER_TOLERANCE
    }

    /// Shannon entropy with the remainder counted as one outcome.
    pub fn entropy(&self, base: LogBase) -> f64 {
        let h: f64 = self
            .top
            .iter()
            .map(|(_, p)| *p)
            .chain(std::iter::once(self.remainder))
            .filter(|p| *p > 0.0)
            .map(|p| -p * p.ln())
            .sum();
        h / base.ln_base()
    }

    /// First `k` entries; the dropped mass joins the remainder.
    pub fn truncated(&self, k: usize) -> Self {
        let top: Vec<_> = self.top.iter().take(k).cloned().collect();
        let dropped: f64 = self.top.iter().skip(k).map(|t| t.1).sum();
        Self {
            top,
            remainder: self.remainder + dropped,
        }
    }

    pub fn is_numeric(token: &str) -> bool {
        !token.is_empty() && token.bytes().all(|b| b.is_ascii_digit())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
    Ten,
}

impl LogBase {
    fn ln_base(self) -> f64 {
        match self {
            Self::Natural => 1.0,
            Self::Two => std::f64::consts::LN_2,
            Self::Ten => std::f64::consts::LN_10,
        }
    }
}

/// Distribution at one generated position of a slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRecord {
    /// Spatial index for value positions; running separator count otherwise.
    pub position: usize,
    pub separator: bool,
    pub distribution: TokenDistribution,
}

/// Spatially averaged entropy of one slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyValue {
    pub value: f64,
    /// Largest number of explicit entries at any position.
    pub k: usize,
    pub lower_bound: bool,
}

/// Mean entropy over the value positions `0..n_space`; separator records are
/// ignored.
pub fn mean_entropy(records: &[DistributionRecord], n_space: usize, base: LogBase) -> Result<EntropyValue> {
    if n_space == 0 {
        return Err(Error::invalid("no spatial positions"));
    }
    let mut per_position: Vec<Option<&TokenDistribution>> = vec![None; n_space];
    for r in records.iter().filter(|r| !r.separator) {
        match per_position.get_mut(r.position) {
            Some(slot @ None) => *slot = Some(&r.distribution),
            Some(Some(_)) => return Err(Error::invalid(format!("position {} recorded twice", r.position))),
            None => return Err(Error::invalid(format!("position {} beyond {n_space}", r.position))),
        }
    }
    let mut sum = 0.0;
    let mut k = 0;
    let mut lower_bound = false;
    for (i, d) in per_position.into_iter().enumerate() {
        let d = d.ok_or_else(|| Error::invalid(format!("no distribution for position {i}")))?;
        sum += d.entropy(base);
        k = k.max(d.top.len());
        lower_bound |= d.is_lower_bound();
    }
    Ok(EntropyValue {
        value: sum / n_space as f64,
        k,
        lower_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(position: usize, d: TokenDistribution) -> DistributionRecord {
        DistributionRecord {
            position,
            separator: false,
            distribution: d,
        }
    }

    fn uniform(n: usize) -> TokenDistribution {
        TokenDistribution::from_probs((0..n).map(|i| (format!("{:03}", 150 + i), 1.0 / n as f64)).collect())
    }

    #[test]
    fn one_hot_is_zero() {
        let r: Vec<_> = (0..5).map(|i| rec(i, TokenDistribution::one_hot("500"))).collect();
        let h = mean_entropy(&r, 5, LogBase::Natural).unwrap();
        assert_eq!(h.value, 0.0);
        assert!(!h.lower_bound);
        assert_eq!(h.k, 1);
    }

    #[test]
    fn uniform_is_log_n() {
        for n in [2, 3, 7, 20] {
            let r: Vec<_> = (0..4).map(|i| rec(i, uniform(n))).collect();
            let h = mean_entropy(&r, 4, LogBase::Natural).unwrap().value;
            assert!((h - (n as f64).ln()).abs() < 1e-12);
            let h2 = mean_entropy(&r, 4, LogBase::Two).unwrap().value;
            assert!((h2 - (n as f64).log2()).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_of_two_positions() {
        let r = vec![rec(0, TokenDistribution::one_hot("500")), rec(1, uniform(2))];
        let h = mean_entropy(&r, 2, LogBase::Natural).unwrap().value;
        assert!((h - std::f64::consts::LN_2 / 2.0).abs() < 1e-15);
        assert!((h - 0.3466).abs() < 1e-4);
    }

    #[test]
    fn separators_ignored_and_gaps_rejected() {
        let mut r = vec![rec(0, uniform(2)), rec(1, uniform(2))];
        r.push(DistributionRecord {
            position: 0,
            separator: true,
            distribution: uniform(3),
        });
        assert!((mean_entropy(&r, 2, LogBase::Natural).unwrap().value - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(mean_entropy(&r[..1], 2, LogBase::Natural).is_err());
        assert!(mean_entropy(&[rec(0, uniform(2)), rec(0, uniform(2))], 2, LogBase::Natural).is_err());
    }

    #[test]
    fn remainder_counts_as_one_outcome_and_marks_lower_bound() {
        let d = TokenDistribution::from_probs(vec![("500".into(), 0.5)]);
        assert_eq!(d.remainder, 0.5);
        assert!((d.entropy(LogBase::Natural) - std::f64::consts::LN_2).abs() < 1e-15);
        let h = mean_entropy(&[rec(0, d)], 1, LogBase::Natural).unwrap();
        assert!(h.lower_bound);
    }

    #[test]
    fn from_logprobs_sorts_and_validates() {
        let d = TokenDistribution::from_logprobs(vec![("501".into(), 0.25f64.ln()), ("500".into(), 0.75f64.ln())]);
        assert_eq!(d.top[0].0, "500");
        d.validate().unwrap();
        let bad = TokenDistribution {
            top: vec![("1".into(), 0.2), ("2".into(), 0.7)],
            remainder: 0.1,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn truncation_moves_mass_to_remainder() {
        let d = uniform(4).truncated(1);
        assert_eq!(d.top.len(), 1);
        assert!((d.remainder - 0.75).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn entropy_bounded_by_log_k_plus_one(ws in proptest::collection::vec(0.001f64..1.0, 1..20), rem in 0.0f64..0.5) {
            let total: f64 = ws.iter().sum();
            let probs: Vec<(String, f64)> = ws.iter().enumerate()
                .map(|(i, w)| (i.to_string(), w / total * (1.0 - rem))).collect();
            let d = TokenDistribution::from_probs(probs);
            d.validate().unwrap();
            let h = d.entropy(LogBase::Natural);
            prop_assert!(h >= 0.0);
            prop_assert!(h <= ((d.top.len() + 1) as f64).ln() + 1e-12);
        }
    }
}
