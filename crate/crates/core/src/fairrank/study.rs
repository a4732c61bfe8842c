//! Model evaluation, lambda sweeps and weight ablations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{group_flags, ranked_list, train, FairnessConfig, RankerModel, TrainMeta, TrainOptions};
use crate::data::{Attribute, PaperRecord, TreatmentSpec};
use crate::error::{Error, Result};
use crate::estimators::{self, IpwOptions};
use crate::metrics;
use crate::table;
use crate::weighting::WeightSet;

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Relevance per record for NDCG; defaults to the outcome rank.
    pub relevance: Option<Vec<f64>>,
    pub ndcg_cutoff: Option<usize>,
    pub ipw: IpwOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEvaluation {
    pub attribute: Attribute,
    pub avg_rank_group1: f64,
    pub avg_rank_group0: f64,
    pub rank_gap: f64,
    pub parity_gap: f64,
    /// IPW effect of the attribute on the model score.
    pub ate_ipw: Option<f64>,
    pub ate_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub ndcg: f64,
    pub mean_score: f64,
    pub groups: Vec<GroupEvaluation>,
}

impl ModelEvaluation {
    pub fn group(&self, a: Attribute) -> &GroupEvaluation {
        self.groups.iter().find(|g| g.attribute == a).expect("all attributes evaluated")
    }
}

/// Weights are fitted once per dataset and reused for every model.
struct Context {
    relevance: Vec<f64>,
    cutoff: Option<usize>,
    weights: Vec<(Attribute, Result<WeightSet, String>)>,
}

impl Context {
    fn new(records: &[PaperRecord], opts: &EvalOptions) -> Result<Self> {
        let relevance = match &opts.relevance {
            Some(r) if r.len() != records.len() => {
                return Err(Error::Shape {
                    expected: records.len(),
                    actual: r.len(),
                })
            }
            Some(r) => r.clone(),
            None => records.iter().map(|r| f64::from(r.outcome)).collect(),
        };
        let weights = Attribute::ALL
            .iter()
            .map(|&a| {
                let w = estimators::ipw_pipeline(records, &TreatmentSpec::standard(a), &opts.ipw)
                    .map(|fit| fit.weights)
                    .map_err(|e| e.to_string());
                (a, w)
            })
            .collect();
        Ok(Context {
            relevance,
            cutoff: opts.ndcg_cutoff,
            weights,
        })
    }

    fn evaluate(&self, records: &[PaperRecord], scores: &[f64]) -> Result<ModelEvaluation> {
        let rl = ranked_list(records, scores, &self.relevance)?;
        let ndcg = metrics::ndcg(&rl, self.cutoff)?;
        let mut groups = Vec::with_capacity(3);
        for (a, weights) in &self.weights {
            let a = *a;
            let (avg1, avg0) = metrics::average_positions(&rl, |e| e.groups.get(a))?;
            let flags = group_flags(records, a);
            let parity_gap = metrics::parity_gap(scores, &flags)?;
            let (ate_ipw, ate_error) = match weights {
                Ok(w) => match estimators::weighted_difference(&flags, scores, &w.weights) {
                    Ok(v) => (Some(v), None),
                    Err(e) => (None, Some(e.to_string())),
                },
                Err(e) => (None, Some(e.clone())),
            };
            groups.push(GroupEvaluation {
                attribute: a,
                avg_rank_group1: avg1,
                avg_rank_group0: avg0,
                rank_gap: avg1 - avg0,
                parity_gap,
                ate_ipw,
                ate_error,
            });
        }
        Ok(ModelEvaluation {
            ndcg,
            mean_score: crate::stats::mean(scores),
            groups,
        })
    }
}

pub fn evaluate(m: &RankerModel, records: &[PaperRecord], opts: &EvalOptions) -> Result<ModelEvaluation> {
    let scores = m.scores(records)?;
    evaluate_scores(records, &scores, opts)
}

/// Same as [`evaluate`] for an arbitrary score vector.
pub fn evaluate_scores(records: &[PaperRecord], scores: &[f64], opts: &EvalOptions) -> Result<ModelEvaluation> {
    Context::new(records, opts)?.evaluate(records, scores)
}

/// One line of a sweep or ablation; metric fields are empty when the point failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub lambda: f64,
    pub w_race: f64,
    pub w_country: f64,
    pub status: String,
    pub ate_race: Option<f64>,
    pub ate_gender: Option<f64>,
    pub ate_country: Option<f64>,
    pub ndcg: Option<f64>,
    pub rank_gap_race: Option<f64>,
    pub rank_gap_gender: Option<f64>,
    pub rank_gap_country: Option<f64>,
    pub parity_gap_race: Option<f64>,
    pub parity_gap_gender: Option<f64>,
    pub parity_gap_country: Option<f64>,
    pub final_total_loss: Option<f64>,
    pub error: Option<String>,
}

pub type AblationRow = SweepRow;

impl SweepRow {
    fn new(label: String, cfg: &FairnessConfig, outcome: &Result<(TrainMeta, ModelEvaluation)>) -> Self {
        let mut row = SweepRow {
            label,
            lambda: cfg.lambda,
            w_race: cfg.w_race,
            w_country: cfg.w_country,
            status: "ok".into(),
            ate_race: None,
            ate_gender: None,
            ate_country: None,
            ndcg: None,
            rank_gap_race: None,
            rank_gap_gender: None,
            rank_gap_country: None,
            parity_gap_race: None,
            parity_gap_gender: None,
            parity_gap_country: None,
            final_total_loss: None,
            error: None,
        };
        match outcome {
            Ok((meta, ev)) => {
                let (r, g, c) = (ev.group(Attribute::Race), ev.group(Attribute::Gender), ev.group(Attribute::Country));
                row.ate_race = r.ate_ipw;
                row.ate_gender = g.ate_ipw;
                row.ate_country = c.ate_ipw;
                row.ndcg = Some(ev.ndcg);
                row.rank_gap_race = Some(r.rank_gap);
                row.rank_gap_gender = Some(g.rank_gap);
                row.rank_gap_country = Some(c.rank_gap);
                row.parity_gap_race = Some(r.parity_gap);
                row.parity_gap_gender = Some(g.parity_gap);
                row.parity_gap_country = Some(c.parity_gap);
                row.final_total_loss = Some(meta.final_total_loss);
            }
            Err(e) => {
                row.status = "failed".into();
                row.error = Some(e.to_string());
            }
        }
        row
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// A study point: its table row and, when training succeeded, the model.
#[derive(Debug, Clone)]
pub struct StudyPoint {
    pub row: SweepRow,
    pub model: Option<RankerModel>,
    pub evaluation: Option<ModelEvaluation>,
}

fn run_points(
    records: &[PaperRecord],
    points: Vec<(String, FairnessConfig)>,
    hyper: &TrainOptions,
    opts: &EvalOptions,
) -> Result<Vec<StudyPoint>> {
    let ctx = Context::new(records, opts)?;
    Ok(points
        .into_par_iter()
        .map(|(label, cfg)| {
            let trained = train(records, &cfg, hyper).and_then(|m| {
                let scores = m.scores(records)?;
                let ev = ctx.evaluate(records, &scores)?;
                Ok((m, ev))
            });
            let summary = trained.as_ref().map(|(m, ev)| (m.train_meta.clone(), ev.clone())).map_err(clone_err);
            let row = SweepRow::new(label, &cfg, &summary);
            let (model, evaluation) = match trained {
                Ok((m, ev)) => (Some(m), Some(ev)),
                Err(_) => (None, None),
            };
            StudyPoint { row, model, evaluation }
        })
        .collect())
}

fn clone_err(e: &Error) -> Error {
    Error::Domain(e.to_string())
}

/// One model per lambda, all from the same initialization seed, with the
/// given fairness weights.
pub fn lambda_sweep(
    records: &[PaperRecord],
    lambdas: &[f64],
    weights: (f64, f64),
    hyper: &TrainOptions,
    opts: &EvalOptions,
) -> Result<Vec<StudyPoint>> {
    if lambdas.is_empty() {
        return Err(Error::config("lambdas", "empty grid"));
    }
    if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::config("lambdas", "values must be finite and >= 0"));
    }
    if lambdas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::config("lambdas", "must be sorted ascending"));
    }
    let points = lambdas
        .iter()
        .map(|&lambda| {
            let cfg = FairnessConfig {
                lambda,
                w_race: weights.0,
                w_country: weights.1,
            };
            cfg.validate()?;
            Ok((format!("lambda={lambda}"), cfg))
        })
        .collect::<Result<Vec<_>>>()?;
    run_points(records, points, hyper, opts)
}

/// `Balanced`, `Race-Focused`, `Country-Focused` or `No Fairness`, followed by the ratio.
pub fn ablation_label(w_race: f64, w_country: f64) -> String {
    let kind = if w_race == 0.0 && w_country == 0.0 {
        "No Fairness"
    } else if w_race == w_country {
        "Balanced"
    } else if w_race > w_country {
        "Race-Focused"
    } else {
        "Country-Focused"
    };
    format!("{kind} ({w_race}:{w_country})")
}

/// A `lambda = 0` baseline followed by one model per weight pair.
pub fn ablation(
    records: &[PaperRecord],
    weight_pairs: &[(f64, f64)],
    lambda: f64,
    hyper: &TrainOptions,
    opts: &EvalOptions,
) -> Result<Vec<StudyPoint>> {
    let mut points = vec![("Baseline".to_string(), FairnessConfig::default())];
    for &(w_race, w_country) in weight_pairs {
        let cfg = FairnessConfig {
            lambda,
            w_race,
            w_country,
        };
        cfg.validate()?;
        points.push((ablation_label(w_race, w_country), cfg));
    }
    run_points(records, points, hyper, opts)
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.digits$}"))
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                format!("{}", r.lambda),
                fmt_opt(r.ate_race, 4),
                fmt_opt(r.ate_gender, 4),
                fmt_opt(r.ate_country, 4),
                fmt_opt(r.ndcg, 4),
                fmt_opt(r.rank_gap_race, 1),
                fmt_opt(r.rank_gap_gender, 1),
                fmt_opt(r.rank_gap_country, 1),
                r.status.clone(),
            ]
        })
        .collect();
    table::render(
        &["Lambda", "ATE race", "ATE gender", "ATE country", "NDCG", "Gap race", "Gap gender", "Gap country", "Status"],
        &body,
    )
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                fmt_opt(r.rank_gap_race, 1),
                fmt_opt(r.rank_gap_country, 1),
                fmt_opt(r.rank_gap_gender, 1),
                fmt_opt(r.ndcg, 4),
            ]
        })
        .collect();
    table::render(&["Weights (race:country)", "Race gap", "Country gap", "Gender gap", "NDCG"], &body)
}

/// Baseline against fair model: average ranks, gap and NDCG per attribute.
pub fn comparison_table(baseline: &ModelEvaluation, fair: &ModelEvaluation) -> String {
    let mut body = Vec::new();
    for (name, ev) in [("Baseline", baseline), ("Fair", fair)] {
        for g in &ev.groups {
            body.push(vec![
                name.to_string(),
                g.attribute.to_string(),
                format!("{:.1}", g.avg_rank_group1),
                format!("{:.1}", g.avg_rank_group0),
                format!("{:.1}", g.rank_gap),
                format!("{:.4}", ev.ndcg),
            ]);
        }
    }
    table::render(&["Model", "Attribute", "Avg rank (1)", "Avg rank (0)", "Gap", "NDCG"], &body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(ablation_label(0.5, 0.5), "Balanced (0.5:0.5)");
        assert_eq!(ablation_label(0.9, 0.1), "Race-Focused (0.9:0.1)");
        assert_eq!(ablation_label(0.1, 0.9), "Country-Focused (0.1:0.9)");
        assert_eq!(ablation_label(0.0, 0.0), "No Fairness (0:0)");
    }
}
