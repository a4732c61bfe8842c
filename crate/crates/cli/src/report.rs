//! The report.json model and every table and figure derived from it.
//!
//! Rendering reads only the report, so `causal-audit report <dir>` can
//! rebuild tables and figures without recomputing anything.

use causal_audit::data::{Attribute, Summary};
use causal_audit::estimators::{self, CausalEstimate, Method, StratumEstimate, SubgroupEstimate};
use causal_audit::fairrank::{self, FairnessConfig, ModelEvaluation, SweepRow, TrainMeta, TrainOptions};
use causal_audit::propensity::LogisticModel;
use causal_audit::weighting::{BalanceReport, WeightDiagnostics};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::output::{csv_bytes, RunDir};
use crate::svg::{self, ForestRow, Series};
use crate::CliError;

pub const SCHEMA_VERSION: &str = "1.0.0";
pub const SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub command: String,
    pub tool_version: String,
    pub run_id: String,
    pub run_config: Value,
    pub sign_convention: String,
    pub ndcg_gain: String,
    pub audit: Option<AuditReport>,
    pub train: Option<TrainReport>,
    pub study: Option<StudyReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodEstimate {
    pub method: Method,
    pub estimate: Option<CausalEstimate>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverlapHistogram {
    pub edges: Vec<f64>,
    pub treated: Vec<usize>,
    pub control: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveBin {
    pub h_low: f64,
    pub h_high: f64,
    pub n_group1: usize,
    pub acceptance_group1: Option<f64>,
    pub n_group0: usize,
    pub acceptance_group0: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributeAudit {
    pub attribute: Attribute,
    pub naive_difference: Option<f64>,
    pub propensity_model: Option<LogisticModel>,
    pub weight_diagnostics: Option<WeightDiagnostics>,
    pub balance: Option<BalanceReport>,
    pub estimates: Vec<MethodEstimate>,
    pub strata: Option<Vec<StratumEstimate>>,
    pub overlap: Option<OverlapHistogram>,
    pub acceptance_curve: Vec<CurveBin>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Intersectional {
    pub pair: [Attribute; 2],
    pub rows: Option<Vec<SubgroupEstimate>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub data_sha256: String,
    pub summary: Summary,
    pub attributes: Vec<AttributeAudit>,
    pub intersectional: Intersectional,
    /// Primary (attribute, method) estimates that could not be computed.
    pub primary_failures: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub model_path: String,
    pub fairness: FairnessConfig,
    pub train_meta: TrainMeta,
    pub evaluation: ModelEvaluation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub data_sha256: String,
    pub train_options: TrainOptions,
    pub relevance: String,
    /// Reserved; the comparison applies no further fairness adjustment.
    pub alpha: Option<f64>,
    pub model: TrainedModel,
    pub baseline: Option<TrainedModel>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyReport {
    pub kind: String,
    pub data_sha256: String,
    pub train_options: TrainOptions,
    pub relevance: String,
    pub rows: Vec<SweepRow>,
    pub model_paths: Vec<Option<String>>,
    pub failed_points: usize,
}

#[derive(Serialize)]
struct AteCsv<'a> {
    attribute: &'a str,
    method: &'a str,
    ate: Option<f64>,
    ci_low: Option<f64>,
    ci_high: Option<f64>,
    alpha: Option<f64>,
    n_treated: Option<usize>,
    n_control: Option<usize>,
    seed: Option<u64>,
    n_boot: Option<usize>,
    bootstrap_failures: Option<usize>,
    naive_difference: Option<f64>,
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct BalanceCsv<'a> {
    treatment: &'a str,
    covariate: &'a str,
    mean_treated_pre: f64,
    mean_control_pre: f64,
    smd_pre: f64,
    mean_treated_post: f64,
    mean_control_post: f64,
    smd_post: f64,
}

#[derive(Serialize)]
struct StratumCsv<'a> {
    attribute: &'a str,
    stratum: usize,
    lower: Option<f64>,
    upper: Option<f64>,
    n: usize,
    method: &'a str,
    ate: Option<f64>,
    ci_low: Option<f64>,
    ci_high: Option<f64>,
    seed: Option<u64>,
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct ComparisonCsv<'a> {
    model: &'a str,
    lambda: f64,
    attribute: &'a str,
    avg_rank_group1: f64,
    avg_rank_group0: f64,
    rank_gap: f64,
    parity_gap: f64,
    ate_ipw: Option<f64>,
    ndcg: f64,
    seed: u64,
}

pub fn render(report: &Report, dir: &mut RunDir) -> Result<(), CliError> {
    if let Some(a) = &report.audit {
        render_audit(a, dir)?;
    }
    if let Some(t) = &report.train {
        render_train(t, dir)?;
    }
    if let Some(s) = &report.study {
        render_study(s, dir)?;
    }
    Ok(())
}

fn render_audit(a: &AuditReport, dir: &mut RunDir) -> Result<(), CliError> {
    dir.write("tables/summary.txt", a.summary.to_text_table().as_bytes())?;

    let mut balance_txt = String::new();
    let mut balance_rows = Vec::new();
    for at in &a.attributes {
        if let Some(b) = &at.balance {
            balance_txt.push_str(&b.to_text_table());
            balance_txt.push('\n');
            balance_rows.extend(b.rows.iter().map(|r| BalanceCsv {
                treatment: &b.treatment,
                covariate: &r.covariate,
                mean_treated_pre: r.mean_treated_pre,
                mean_control_pre: r.mean_control_pre,
                smd_pre: r.smd_pre,
                mean_treated_post: r.mean_treated,
                mean_control_post: r.mean_control,
                smd_post: r.smd_post,
            }));
        }
    }
    dir.write("tables/balance.txt", balance_txt.as_bytes())?;
    dir.write("tables/balance.csv", &csv_bytes(&balance_rows)?)?;

    let mut ate_rows = Vec::new();
    let mut ok_rows = Vec::new();
    for at in &a.attributes {
        for m in &at.estimates {
            let e = m.estimate.as_ref();
            ate_rows.push(AteCsv {
                attribute: at.attribute.name(),
                method: m.method.name(),
                ate: e.map(|e| e.ate),
                ci_low: e.map(|e| e.ci[0]),
                ci_high: e.map(|e| e.ci[1]),
                alpha: e.map(|e| e.alpha),
                n_treated: e.map(|e| e.n_treated),
                n_control: e.map(|e| e.n_control),
                seed: e.map(|e| e.seed),
                n_boot: e.map(|e| e.n_boot),
                bootstrap_failures: e.map(|e| e.bootstrap_failures),
                naive_difference: at.naive_difference,
                error: m.error.as_deref(),
            });
            if let Some(e) = e {
                ok_rows.push((at.attribute, e.clone()));
            }
        }
    }
    // IPW rows first, as in the usual effect table layout
    ok_rows.sort_by_key(|(attr, e)| (e.method != Method::Ipw, *attr));
    dir.write("tables/ate.txt", estimators::ate_table(&ok_rows).as_bytes())?;
    dir.write("tables/ate.csv", &csv_bytes(&ate_rows)?)?;

    let mut strata_txt = String::new();
    let mut strata_rows = Vec::new();
    for at in &a.attributes {
        if let Some(strata) = &at.strata {
            strata_txt.push_str(&format!("{} (h_index strata)\n", at.attribute));
            strata_txt.push_str(&estimators::stratified_table(strata));
            strata_txt.push('\n');
            strata_rows.extend(strata.iter().map(|s| {
                let e = s.estimate.as_ref();
                StratumCsv {
                    attribute: at.attribute.name(),
                    stratum: s.stratum,
                    lower: s.lower,
                    upper: s.upper,
                    n: s.n,
                    method: Method::Ipw.name(),
                    ate: e.map(|e| e.ate),
                    ci_low: e.map(|e| e.ci[0]),
                    ci_high: e.map(|e| e.ci[1]),
                    seed: e.map(|e| e.seed),
                    error: s.error.as_deref(),
                }
            }));
        }
    }
    dir.write("tables/stratified.txt", strata_txt.as_bytes())?;
    dir.write("tables/stratified.csv", &csv_bytes(&strata_rows)?)?;

    if let Some(rows) = &a.intersectional.rows {
        dir.write("tables/intersectional.txt", estimators::intersectional_table(rows).as_bytes())?;
        dir.write("tables/intersectional.csv", &csv_bytes(rows)?)?;
    }

    for at in &a.attributes {
        let name = at.attribute.name();
        if let Some(h) = &at.overlap {
            let svg = svg::histogram(
                &format!("Propensity score overlap: {name}"),
                "propensity score",
                &h.edges,
                &[
                    (at.attribute.level_label(true).to_string(), h.treated.clone()),
                    (at.attribute.level_label(false).to_string(), h.control.clone()),
                ],
            );
            dir.write(&format!("figures/propensity_overlap_{name}.svg"), svg.as_bytes())?;
        }
        if !at.acceptance_curve.is_empty() {
            let mid = |b: &CurveBin| 0.5 * (b.h_low + b.h_high);
            let series = |level: bool| Series {
                name: at.attribute.level_label(level).to_string(),
                points: at
                    .acceptance_curve
                    .iter()
                    .filter_map(|b| {
                        let rate = if level { b.acceptance_group1 } else { b.acceptance_group0 };
                        rate.map(|r| (mid(b), r))
                    })
                    .collect(),
            };
            let svg = svg::line_chart(
                &format!("Acceptance rate by h-index: {name}"),
                "max author h-index (bin midpoint)",
                "acceptance rate",
                &[series(true), series(false)],
            );
            dir.write(&format!("figures/acceptance_by_h_index_{name}.svg"), svg.as_bytes())?;
        }
    }

    let mut forest_rows = Vec::new();
    for at in &a.attributes {
        for m in &at.estimates {
            if let Some(e) = &m.estimate {
                forest_rows.push(ForestRow {
                    label: format!("{} ({})", at.attribute, if m.method == Method::Ipw { "IPW" } else { "LR" }),
                    estimate: e.ate,
                    low: e.ci[0],
                    high: e.ci[1],
                    group: usize::from(m.method != Method::Ipw),
                });
            }
        }
    }
    let svg = svg::forest("Average treatment effects", "ATE (outcome rank)", &forest_rows, &["IPW", "Regression"]);
    dir.write("figures/ate_forest.svg", svg.as_bytes())?;
    Ok(())
}

fn comparison_rows<'a>(label: &'a str, m: &'a TrainedModel) -> Vec<ComparisonCsv<'a>> {
    m.evaluation
        .groups
        .iter()
        .map(|g| ComparisonCsv {
            model: label,
            lambda: m.fairness.lambda,
            attribute: g.attribute.name(),
            avg_rank_group1: g.avg_rank_group1,
            avg_rank_group0: g.avg_rank_group0,
            rank_gap: g.rank_gap,
            parity_gap: g.parity_gap,
            ate_ipw: g.ate_ipw,
            ndcg: m.evaluation.ndcg,
            seed: m.train_meta.seed,
        })
        .collect()
}

fn render_train(t: &TrainReport, dir: &mut RunDir) -> Result<(), CliError> {
    let mut rows = Vec::new();
    if let Some(b) = &t.baseline {
        rows.extend(comparison_rows("baseline", b));
        dir.write(
            "tables/comparison.txt",
            fairrank::comparison_table(&b.evaluation, &t.model.evaluation).as_bytes(),
        )?;
    }
    rows.extend(comparison_rows("model", &t.model));
    dir.write("tables/evaluation.csv", &csv_bytes(&rows)?)?;
    Ok(())
}

fn render_study(s: &StudyReport, dir: &mut RunDir) -> Result<(), CliError> {
    let stem = if s.kind == "sweep" { "sweep" } else { "ablation" };
    let txt = if s.kind == "sweep" {
        fairrank::sweep_table(&s.rows)
    } else {
        fairrank::ablation_table(&s.rows)
    };
    dir.write(&format!("tables/{stem}.txt"), txt.as_bytes())?;
    dir.write(&format!("tables/{stem}.csv"), &csv_bytes(&s.rows)?)?;
    dir.write_json(&format!("tables/{stem}.json"), &s.rows)?;
    if s.kind == "sweep" {
        let pick = |f: fn(&SweepRow) -> Option<f64>| -> Vec<(f64, f64)> {
            s.rows.iter().filter_map(|r| f(r).map(|v| (r.lambda, v))).collect()
        };
        let series = vec![
            Series {
                name: "Race".into(),
                points: pick(|r| r.ate_race),
            },
            Series {
                name: "Gender (unpenalized)".into(),
                points: pick(|r| r.ate_gender),
            },
            Series {
                name: "Country".into(),
                points: pick(|r| r.ate_country),
            },
        ];
        let svg = svg::line_chart("Causal bias of model scores vs fairness strength", "lambda", "ATE (IPW) on score", &series);
        dir.write("figures/ate_vs_lambda.svg", svg.as_bytes())?;
        let gaps = vec![
            Series {
                name: "Race".into(),
                points: pick(|r| r.rank_gap_race),
            },
            Series {
                name: "Gender (unpenalized)".into(),
                points: pick(|r| r.rank_gap_gender),
            },
            Series {
                name: "Country".into(),
                points: pick(|r| r.rank_gap_country),
            },
        ];
        let svg = svg::line_chart("Rank gap vs fairness strength", "lambda", "mean rank, group 1 minus group 0", &gaps);
        dir.write("figures/rank_gap_vs_lambda.svg", svg.as_bytes())?;
    }
    Ok(())
}
