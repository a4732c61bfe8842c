//! Fairness-regularized acceptance scoring.
//!
//! The network minimizes mean binary cross-entropy plus `lambda` times a
//! weighted sum of squared statistical-parity differences:
//!
//! ```text
//! fairness = w_race    * (mean_{race=1} y_hat    - mean_all y_hat)^2
//!          + w_country * (mean_{country=1} y_hat - mean_all y_hat)^2
//! ```
//!
//! Gender is intentionally absent from the penalty; it is only measured.

mod mlp;
mod study;

pub use mlp::{Layer, Mlp};
pub use study::{
    ablation, ablation_label, ablation_table, comparison_table, evaluate, evaluate_scores, lambda_sweep, sweep_table,
    AblationRow, EvalOptions, GroupEvaluation, ModelEvaluation, StudyPoint, SweepRow,
};

use serde::{Deserialize, Serialize};

use crate::data::{Attribute, PaperRecord};
use crate::error::{Error, Result};
use crate::metrics::{GroupFlags, RankedEntry, RankedList};
use crate::stats::{self, sigmoid};

const PROB_EPS: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessConfig {
    pub lambda: f64,
    pub w_race: f64,
    pub w_country: f64,
}

impl Default for FairnessConfig {
    fn default() -> Self {
        FairnessConfig {
            lambda: 0.0,
            w_race: 1.0,
            w_country: 1.0,
        }
    }
}

impl FairnessConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("lambda", self.lambda), ("w_race", self.w_race), ("w_country", self.w_country)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(field, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Protected-group membership per example.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FairnessGroups {
    pub race: Vec<bool>,
    pub country: Vec<bool>,
}

impl FairnessGroups {
    pub fn from_records(records: &[PaperRecord]) -> Self {
        FairnessGroups {
            race: records.iter().map(|r| r.race).collect(),
            country: records.iter().map(|r| r.country).collect(),
        }
    }
}

/// `(group mean - global mean)` and the group size, for one protected group.
fn parity_difference(preds: &[f64], group: &[bool], weight: f64, name: &str) -> Result<Option<(f64, usize)>> {
    if weight == 0.0 {
        return Ok(None);
    }
    if group.len() != preds.len() {
        return Err(Error::Shape {
            expected: preds.len(),
            actual: group.len(),
        });
    }
    let (sum, count) = preds
        .iter()
        .zip(group)
        .filter(|(_, &g)| g)
        .fold((0.0, 0usize), |(s, c), (p, _)| (s + p, c + 1));
    if count == 0 {
        return Err(Error::domain(format!("protected group `{name}` is empty but has positive weight")));
    }
    Ok(Some((sum / count as f64 - stats::mean(preds), count)))
}

pub fn fairness_loss(preds: &[f64], groups: &FairnessGroups, cfg: &FairnessConfig) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::domain("fairness loss of no predictions"));
    }
    let mut loss = 0.0;
    for (group, w, name) in [(&groups.race, cfg.w_race, "race"), (&groups.country, cfg.w_country, "country")] {
        if let Some((d, _)) = parity_difference(preds, group, w, name)? {
            loss += w * d * d;
        }
    }
    Ok(loss)
}

/// d fairness / d prediction for every example.
fn fairness_gradient(preds: &[f64], groups: &FairnessGroups, cfg: &FairnessConfig) -> Result<Vec<f64>> {
    let n = preds.len() as f64;
    let mut grad = vec![0.0; preds.len()];
    for (group, w, name) in [(&groups.race, cfg.w_race, "race"), (&groups.country, cfg.w_country, "country")] {
        if let Some((d, count)) = parity_difference(preds, group, w, name)? {
            let inv = 1.0 / count as f64;
            for (g, &member) in grad.iter_mut().zip(group) {
                let dmean = if member { inv } else { 0.0 } - 1.0 / n;
                *g += 2.0 * w * d * dmean;
            }
        }
    }
    Ok(grad)
}

fn check_labels(preds: &[f64], labels: &[bool]) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::Shape {
            expected: preds.len(),
            actual: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::domain("loss of no predictions"));
    }
    Ok(())
}

/// Mean binary cross-entropy on probabilities.
pub fn cross_entropy(preds: &[f64], labels: &[bool]) -> Result<f64> {
    check_labels(preds, labels)?;
    let total: f64 = preds
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / preds.len() as f64)
}

/// Cross-entropy plus `lambda` times the parity penalty.
pub fn total_loss(preds: &[f64], labels: &[bool], groups: &FairnessGroups, cfg: &FairnessConfig) -> Result<f64> {
    let ce = cross_entropy(preds, labels)?;
    if cfg.lambda == 0.0 {
        return Ok(ce);
    }
    Ok(ce + cfg.lambda * fairness_loss(preds, groups, cfg)?)
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Loss components at the current parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub prediction: f64,
    pub fairness: f64,
}

/// Training objective and its gradient with respect to `net.params()`.
///
/// Cross-entropy is evaluated from logits (`softplus(z) - y z`) so the
/// objective stays finite for saturated outputs.
pub fn loss_and_gradient(
    net: &Mlp,
    features: &[Vec<f64>],
    labels: &[bool],
    groups: &FairnessGroups,
    cfg: &FairnessConfig,
) -> Result<(LossParts, Vec<f64>)> {
    let (logits, caches) = net.forward_batch(features)?;
    let preds: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
    check_labels(&preds, labels)?;
    let n = preds.len() as f64;
    let prediction = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| softplus(z) - if y { z } else { 0.0 })
        .sum::<f64>()
        / n;
    let (fairness, fair_grad) = if cfg.lambda == 0.0 {
        (0.0, None)
    } else {
        (fairness_loss(&preds, groups, cfg)?, Some(fairness_gradient(&preds, groups, cfg)?))
    };
    let dlogit: Vec<f64> = preds
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (&p, &y))| {
            let ce = (p - f64::from(u8::from(y))) / n;
            match &fair_grad {
                Some(g) => ce + cfg.lambda * g[i] * p * (1.0 - p),
                None => ce,
            }
        })
        .collect();
    let grad = net.backward(&caches, &dlogit);
    Ok((
        LossParts {
            total: prediction + cfg.lambda * fairness,
            prediction,
            fairness,
        },
        grad,
    ))
}

/// Standardizes h-index; other features are already in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    pub h_index_mean: f64,
    pub h_index_sd: f64,
}

pub const FEATURE_NAMES: [&str; 5] = ["h_index_z", "prestige", "race", "gender", "country"];

impl FeatureEncoder {
    pub fn fit(records: &[PaperRecord]) -> Self {
        let h: Vec<f64> = records.iter().map(|r| r.h_index).collect();
        let mean = stats::mean(&h);
        let sd = (h.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h.len() as f64).sqrt();
        FeatureEncoder {
            h_index_mean: mean,
            h_index_sd: if sd > 0.0 { sd } else { 1.0 },
        }
    }

    pub fn encode(&self, r: &PaperRecord) -> Vec<f64> {
        let flag = |b: bool| f64::from(u8::from(b));
        vec![
            (r.h_index - self.h_index_mean) / self.h_index_sd,
            r.prestige,
            flag(r.race),
            flag(r.gender),
            flag(r.country),
        ]
    }

    pub fn encode_all(&self, records: &[PaperRecord]) -> Vec<Vec<f64>> {
        records.iter().map(|r| self.encode(r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub hidden_dims: Vec<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 2000,
            lr: 0.05,
            seed: 0,
            hidden_dims: vec![16],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs_run: usize,
    pub final_total_loss: f64,
    pub final_prediction_loss: f64,
    pub final_fairness_loss: f64,
    pub seed: u64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankerModel {
    pub layer_dims: Vec<usize>,
    pub activation: String,
    pub network: Mlp,
    pub encoder: FeatureEncoder,
    pub fairness_config: FairnessConfig,
    pub train_meta: TrainMeta,
}

impl RankerModel {
    pub fn score(&self, r: &PaperRecord) -> Result<f64> {
        self.network.forward(&self.encoder.encode(r))
    }

    pub fn scores(&self, records: &[PaperRecord]) -> Result<Vec<f64>> {
        records.iter().map(|r| self.score(r)).collect()
    }
}

/// Forward pass on an already-encoded feature vector.
pub fn forward(m: &RankerModel, features: &[f64]) -> Result<f64> {
    m.network.forward(features)
}

pub fn labels(records: &[PaperRecord]) -> Vec<bool> {
    records.iter().map(PaperRecord::accepted).collect()
}

pub fn train(records: &[PaperRecord], cfg: &FairnessConfig, hyper: &TrainOptions) -> Result<RankerModel> {
    train_with_trace(records, cfg, hyper).map(|(m, _)| m)
}

/// Full-batch gradient descent. The trace holds the total loss before each
/// update followed by the loss at the returned parameters.
pub fn train_with_trace(
    records: &[PaperRecord],
    cfg: &FairnessConfig,
    hyper: &TrainOptions,
) -> Result<(RankerModel, Vec<f64>)> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::domain("cannot train on an empty dataset"));
    }
    if !(hyper.lr > 0.0 && hyper.lr.is_finite()) {
        return Err(Error::config("lr", "must be positive"));
    }
    let labels = labels(records);
    if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
        return Err(Error::domain("training needs both label classes"));
    }
    let encoder = FeatureEncoder::fit(records);
    let features = encoder.encode_all(records);
    let groups = FairnessGroups::from_records(records);

    let mut dims = vec![FEATURE_NAMES.len()];
    dims.extend(&hyper.hidden_dims);
    dims.push(1);
    let mut rng = stats::child_rng(hyper.seed, 0);
    let mut net = Mlp::init(&dims, &mut rng)?;

    let make = |net: &Mlp, epochs_run: usize, parts: LossParts| RankerModel {
        layer_dims: dims.clone(),
        activation: "relu hidden, sigmoid output".into(),
        network: net.clone(),
        encoder,
        fairness_config: *cfg,
        train_meta: TrainMeta {
            epochs_run,
            final_total_loss: parts.total,
            final_prediction_loss: parts.prediction,
            final_fairness_loss: parts.fairness,
            seed: hyper.seed,
            lr: hyper.lr,
        },
    };

    let mut trace = Vec::with_capacity(hyper.epochs + 1);
    let mut last_finite: Option<(Mlp, usize, LossParts)> = None;
    for epoch in 0..=hyper.epochs {
        let (parts, grad) = loss_and_gradient(&net, &features, &labels, &groups, cfg)?;
        if !parts.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            let (net, ep, parts) = last_finite.unwrap_or((net.clone(), epoch, parts));
            return Err(Error::Diverged {
                epoch,
                last_finite: Box::new(make(&net, ep, parts)),
            });
        }
        trace.push(parts.total);
        if epoch == hyper.epochs {
            return Ok((make(&net, epoch, parts), trace));
        }
        last_finite = Some((net.clone(), epoch, parts));
        let mut p = net.params();
        for (w, g) in p.iter_mut().zip(&grad) {
            *w -= hyper.lr * g;
        }
        net.set_params(&p);
    }
    unreachable!("loop returns at the final epoch")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub id: String,
    pub score: f64,
    pub rank: usize,
}

/// Descending score, ties by ascending id; ranks start at 1.
pub fn rank(m: &RankerModel, records: &[PaperRecord]) -> Result<Vec<RankedItem>> {
    let scores = m.scores(records)?;
    Ok(rank_scores(records, &scores))
}

pub fn rank_scores(records: &[PaperRecord], scores: &[f64]) -> Vec<RankedItem> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| records[a].id.cmp(&records[b].id)));
    order
        .into_iter()
        .enumerate()
        .map(|(pos, i)| RankedItem {
            id: records[i].id.clone(),
            score: scores[i],
            rank: pos + 1,
        })
        .collect()
}

/// Ranked list of `records` by `scores`, with the given relevance per record.
pub fn ranked_list(records: &[PaperRecord], scores: &[f64], relevance: &[f64]) -> Result<RankedList> {
    if scores.len() != records.len() || relevance.len() != records.len() {
        return Err(Error::Shape {
            expected: records.len(),
            actual: scores.len().min(relevance.len()),
        });
    }
    let entries = records
        .iter()
        .zip(scores)
        .zip(relevance)
        .map(|((r, &score), &rel)| RankedEntry {
            id: r.id.clone(),
            score,
            relevance: rel,
            groups: GroupFlags {
                race: r.race,
                gender: r.gender,
                country: r.country,
            },
        })
        .collect();
    RankedList::from_unsorted(entries)
}

pub(crate) fn group_flags(records: &[PaperRecord], a: Attribute) -> Vec<bool> {
    records.iter().map(|r| r.flag(a)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn groups(race: &[bool], country: &[bool]) -> FairnessGroups {
        FairnessGroups {
            race: race.to_vec(),
            country: country.to_vec(),
        }
    }

    #[test]
    fn hand_evaluated_fairness_loss() {
        let g = groups(&[true, false, false, false], &[false, true, false, false]);
        let cfg = FairnessConfig { lambda: 1.0, w_race: 1.0, w_country: 1.0 };
        let v = fairness_loss(&[1.0, 0.0, 0.0, 0.0], &g, &cfg).unwrap();
        assert!((v - 0.625).abs() < 1e-15);
    }

    #[test]
    fn equal_predictions_or_zero_weights_give_zero() {
        let g = groups(&[true, false, true], &[false, false, true]);
        let cfg = FairnessConfig { lambda: 3.0, w_race: 2.0, w_country: 0.5 };
        assert_eq!(fairness_loss(&[0.25; 3], &g, &cfg).unwrap(), 0.0);
        let off = FairnessConfig { w_race: 0.0, w_country: 0.0, ..cfg };
        assert_eq!(fairness_loss(&[0.9, 0.1, 0.3], &g, &off).unwrap(), 0.0);
    }

    #[test]
    fn empty_protected_group_with_weight_errors() {
        let g = groups(&[false, false], &[true, false]);
        let cfg = FairnessConfig { lambda: 1.0, w_race: 1.0, w_country: 1.0 };
        assert!(matches!(fairness_loss(&[0.2, 0.3], &g, &cfg), Err(Error::Domain(_))));
        let race_off = FairnessConfig { w_race: 0.0, ..cfg };
        assert!(fairness_loss(&[0.2, 0.3], &g, &race_off).is_ok());
    }

    #[test]
    fn lambda_zero_is_cross_entropy() {
        let g = groups(&[true, false], &[false, true]);
        let preds = [0.7, 0.2];
        let y = [true, false];
        let cfg = FairnessConfig { lambda: 0.0, w_race: 5.0, w_country: 5.0 };
        assert_eq!(total_loss(&preds, &y, &g, &cfg).unwrap(), cross_entropy(&preds, &y).unwrap());
    }

    #[test]
    fn near_perfect_uniform_predictions() {
        let g = groups(&[true, false, false], &[false, false, true]);
        let cfg = FairnessConfig { lambda: 10.0, ..Default::default() };
        let loss = total_loss(&[1.0 - 1e-12; 3], &[true; 3], &g, &cfg).unwrap();
        assert!((0.0..1e-10).contains(&loss));
    }

    #[test]
    fn rank_orders_and_breaks_ties_by_id() {
        let rec = |id: &str| PaperRecord {
            id: id.into(),
            race: false,
            gender: false,
            country: false,
            h_index: 1.0,
            prestige: 0.0,
            outcome: 1,
        };
        let records = [rec("b"), rec("a"), rec("c")];
        let items = rank_scores(&records, &[0.1, 0.9, 0.1]);
        let ids: Vec<_> = items.iter().map(|i| (i.id.as_str(), i.rank)).collect();
        assert_eq!(ids, vec![("a", 1), ("b", 2), ("c", 3)]);
    }

    #[test]
    fn config_validation() {
        assert!(FairnessConfig { lambda: -1.0, ..Default::default() }.validate().is_err());
        assert!(FairnessConfig { w_country: f64::NAN, ..Default::default() }.validate().is_err());
    }
}
