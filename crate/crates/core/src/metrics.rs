//! Ranking utility and group fairness metrics.
//!
//! NDCG uses raw relevance as gain with a `log2(i + 1)` discount.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::Attribute;
use crate::error::{Error, Result};
use crate::stats;

pub const NDCG_GAIN: &str = "raw relevance, discount log2(position + 1)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupFlags {
    pub race: bool,
    pub gender: bool,
    pub country: bool,
}

impl GroupFlags {
    pub fn get(&self, a: Attribute) -> bool {
        match a {
            Attribute::Race => self.race,
            Attribute::Gender => self.gender,
            Attribute::Country => self.country,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub id: String,
    pub score: f64,
    pub relevance: f64,
    pub groups: GroupFlags,
}

/// Entries in rank order: scores non-increasing, ids unique.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedList {
    entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn new(entries: Vec<RankedEntry>) -> Result<Self> {
        if let Some(w) = entries.windows(2).position(|w| w[1].score > w[0].score) {
            return Err(Error::domain(format!("scores increase at position {}", w + 2)));
        }
        let mut seen = HashSet::with_capacity(entries.len());
        if let Some(e) = entries.iter().find(|e| !seen.insert(e.id.as_str())) {
            return Err(Error::domain(format!("duplicate id `{}` in ranking", e.id)));
        }
        Ok(RankedList { entries })
    }

    /// Sorts by descending score, ties by ascending id.
    pub fn from_unsorted(mut entries: Vec<RankedEntry>) -> Result<Self> {
        if entries.iter().any(|e| e.score.is_nan()) {
            return Err(Error::domain("NaN score"));
        }
        entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        RankedList::new(entries)
    }

    pub fn entries(&self) -> &[RankedEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn relevances(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.relevance).collect()
    }
}

pub fn dcg(relevances: &[f64], k: Option<usize>) -> f64 {
    let k = k.unwrap_or(relevances.len()).min(relevances.len());
    relevances[..k]
        .iter()
        .enumerate()
        .map(|(i, rel)| rel / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG of relevances listed in rank order.
pub fn ndcg_of(relevances: &[f64], k: Option<usize>) -> Result<f64> {
    if relevances.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::UndefinedMetric("relevance must be finite and non-negative".into()));
    }
    let mut ideal = relevances.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg(&ideal, k);
    if !(idcg > 0.0) {
        return Err(Error::UndefinedMetric("NDCG needs a positive relevance in the cutoff".into()));
    }
    Ok((dcg(relevances, k) / idcg).min(1.0))
}

pub fn ndcg(rl: &RankedList, k: Option<usize>) -> Result<f64> {
    ndcg_of(&rl.relevances(), k)
}

/// Mean 1-based position of group-1 items minus that of group-0 items.
/// Positive means group 1 sits lower in the list.
pub fn rank_gap_by(rl: &RankedList, in_group: impl Fn(&RankedEntry) -> bool) -> Result<f64> {
    let (avg1, avg0) = average_positions(rl, in_group)?;
    Ok(avg1 - avg0)
}

pub fn rank_gap(rl: &RankedList, attribute: Attribute) -> Result<f64> {
    rank_gap_by(rl, |e| e.groups.get(attribute))
}

/// Mean positions of (group 1, group 0).
pub fn average_positions(rl: &RankedList, in_group: impl Fn(&RankedEntry) -> bool) -> Result<(f64, f64)> {
    let mut sums = [(0.0, 0usize); 2];
    for (i, e) in rl.entries.iter().enumerate() {
        let s = &mut sums[usize::from(in_group(e))];
        s.0 += (i + 1) as f64;
        s.1 += 1;
    }
    if sums.iter().any(|s| s.1 == 0) {
        return Err(Error::UndefinedMetric("rank gap needs both groups in the list".into()));
    }
    Ok((sums[1].0 / sums[1].1 as f64, sums[0].0 / sums[0].1 as f64))
}

/// Absolute difference in mean prediction between the two groups.
pub fn parity_gap(predictions: &[f64], group: &[bool]) -> Result<f64> {
    if predictions.len() != group.len() {
        return Err(Error::Shape {
            expected: predictions.len(),
            actual: group.len(),
        });
    }
    let mut acc = [(0.0, 0usize); 2];
    for (p, &g) in predictions.iter().zip(group) {
        let a = &mut acc[usize::from(g)];
        a.0 += p;
        a.1 += 1;
    }
    if acc.iter().any(|a| a.1 == 0) {
        return Err(Error::UndefinedMetric("parity gap needs both groups".into()));
    }
    Ok((acc[1].0 / acc[1].1 as f64 - acc[0].0 / acc[0].1 as f64).abs())
}

/// Sample Pearson correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::UndefinedMetric("correlation needs at least two points".into()));
    }
    let mx = stats::mean(x);
    let my = stats::mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::UndefinedMetric("correlation with zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(rels: &[f64], g: &[bool]) -> Vec<RankedEntry> {
        rels.iter()
            .zip(g)
            .enumerate()
            .map(|(i, (&r, &b))| RankedEntry {
                id: format!("{i:03}"),
                score: 1.0 - i as f64 / 100.0,
                relevance: r,
                groups: GroupFlags { race: b, gender: false, country: !b },
            })
            .collect()
    }

    #[test]
    fn ideal_ordering_scores_one() {
        assert_eq!(ndcg_of(&[3.0, 2.0, 2.0, 1.0], None).unwrap(), 1.0);
        assert_eq!(ndcg_of(&[3.0, 1.0, 2.0], Some(1)).unwrap(), 1.0);
    }

    #[test]
    fn reversed_ordering_below_one() {
        let v = ndcg_of(&[1.0, 2.0, 3.0], None).unwrap();
        assert!(v < 1.0 && v > 0.0);
    }

    #[test]
    fn all_zero_relevance_is_undefined() {
        assert!(matches!(ndcg_of(&[0.0, 0.0], None), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn rank_gap_hand_values() {
        let rl = RankedList::new(entries(&[1.0; 4], &[false, false, true, true])).unwrap();
        assert_eq!(rank_gap(&rl, Attribute::Race).unwrap(), 2.0);
        assert_eq!(rank_gap(&rl, Attribute::Country).unwrap(), -2.0);
        // mirror image: 1 0 0 1
        let rl = RankedList::new(entries(&[1.0; 4], &[true, false, false, true])).unwrap();
        assert_eq!(rank_gap(&rl, Attribute::Race).unwrap(), 0.0);
        let one_group = RankedList::new(entries(&[1.0; 2], &[true, true])).unwrap();
        assert!(rank_gap(&one_group, Attribute::Race).is_err());
    }

    #[test]
    fn ranked_list_invariants() {
        let mut e = entries(&[1.0, 2.0], &[true, false]);
        e[1].score = 5.0;
        assert!(RankedList::new(e.clone()).is_err());
        let sorted = RankedList::from_unsorted(e).unwrap();
        assert_eq!(sorted.entries()[0].id, "001");
        let mut dup = entries(&[1.0, 2.0], &[true, false]);
        dup[1].id = dup[0].id.clone();
        assert!(RankedList::new(dup).is_err());
    }

    #[test]
    fn parity_gap_values() {
        assert_eq!(parity_gap(&[0.3, 0.3, 0.3], &[true, false, false]).unwrap(), 0.0);
        let g = parity_gap(&[0.8, 0.8, 0.6, 0.6], &[true, true, false, false]).unwrap();
        assert!((g - 0.2).abs() < 1e-15);
        assert!(parity_gap(&[0.1], &[true]).is_err());
    }

    #[test]
    fn pearson_identity_and_antisymmetry() {
        let x = [1.0, 2.5, 3.0, 7.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_r(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson_r(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(pearson_r(&x, &[1.0; 4]).is_err());
        assert!(pearson_r(&[1.0], &[1.0]).is_err());
    }
}
