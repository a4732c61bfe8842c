//! Inverse-propensity weights and standardized-mean-difference balance checks.

use serde::{Deserialize, Serialize};

use crate::data::{Covariate, PaperRecord, TreatmentSpec};
use crate::error::{Error, Result};
use crate::stats;

pub const DEFAULT_CLIP: [f64; 2] = [0.01, 0.99];
pub const DEFAULT_SMD_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightOptions {
    pub stabilized: bool,
    /// Propensities are clamped into `[lo, hi]` before inversion when set.
    pub clip: Option<[f64; 2]>,
}

impl Default for WeightOptions {
    fn default() -> Self {
        WeightOptions {
            stabilized: true,
            clip: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightDiagnostics {
    pub min: f64,
    pub max: f64,
    pub effective_sample_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    pub weights: Vec<f64>,
    pub stabilized: bool,
    pub clip_bounds: Option<[f64; 2]>,
    pub diagnostics: WeightDiagnostics,
}

impl WeightSet {
    pub fn from_weights(weights: Vec<f64>, stabilized: bool, clip_bounds: Option<[f64; 2]>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::domain("empty weight vector"));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::domain(format!("weight at row {i} is not positive and finite")));
        }
        let diagnostics = WeightDiagnostics {
            min: weights.iter().copied().fold(f64::INFINITY, f64::min),
            max: weights.iter().copied().fold(0.0, f64::max),
            effective_sample_size: effective_sample_size(&weights),
        };
        Ok(WeightSet {
            weights,
            stabilized,
            clip_bounds,
            diagnostics,
        })
    }

    pub fn uniform(n: usize) -> Self {
        WeightSet::from_weights(vec![1.0; n.max(1)], false, None).expect("unit weights")
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Kish effective sample size `(sum w)^2 / sum w^2`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    // exact n for uniform weights
    if weights.iter().all(|w| *w == weights[0]) {
        return weights.len() as f64;
    }
    (s * s / s2).min(weights.len() as f64)
}

/// `1/e` for treated rows and `1/(1-e)` for control rows; stabilization
/// multiplies by the empirical treated and control shares respectively.
pub fn ipw_weights(
    records: &[PaperRecord],
    spec: &TreatmentSpec,
    scores: &[f64],
    opts: &WeightOptions,
) -> Result<WeightSet> {
    if scores.len() != records.len() {
        return Err(Error::Shape {
            expected: records.len(),
            actual: scores.len(),
        });
    }
    if let Some([lo, hi]) = opts.clip {
        if !(lo > 0.0 && lo < hi && hi < 1.0) {
            return Err(Error::config("clip", format!("bounds [{lo}, {hi}] must satisfy 0 < lo < hi < 1")));
        }
    }
    let treated = spec.treated_flags(records);
    let (n_treated, _) = spec.check_groups(records)?;
    let share = n_treated as f64 / records.len() as f64;

    let scores: Vec<f64> = match opts.clip {
        Some([lo, hi]) => scores.iter().map(|e| e.clamp(lo, hi)).collect(),
        None => scores.to_vec(),
    };
    let bad: Vec<usize> = scores
        .iter()
        .enumerate()
        .filter(|(_, e)| !(**e > 0.0 && **e < 1.0))
        .map(|(i, _)| i)
        .collect();
    if !bad.is_empty() {
        return Err(Error::Positivity { rows: bad });
    }

    let weights = treated
        .iter()
        .zip(&scores)
        .map(|(&t, &e)| match (t, opts.stabilized) {
            (true, false) => 1.0 / e,
            (false, false) => 1.0 / (1.0 - e),
            (true, true) => share / e,
            (false, true) => (1.0 - share) / (1.0 - e),
        })
        .collect();
    WeightSet::from_weights(weights, opts.stabilized, opts.clip)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupMeans {
    pub treated: f64,
    pub control: f64,
}

fn split(values: &[f64], treated: &[bool], weights: &[f64]) -> [(Vec<f64>, Vec<f64>); 2] {
    let mut groups: [(Vec<f64>, Vec<f64>); 2] = Default::default();
    for ((v, t), w) in values.iter().zip(treated).zip(weights) {
        let g = &mut groups[usize::from(*t)];
        g.0.push(*v);
        g.1.push(*w);
    }
    groups
}

/// Standardized mean difference on raw covariate values.
///
/// Means are weighted when `weights` is given; the pooled SD
/// `sqrt((s1^2 + s0^2) / 2)` always uses unweighted sample variances.
pub fn smd_values(values: &[f64], treated: &[bool], weights: Option<&[f64]>) -> Result<(f64, GroupMeans)> {
    let ones;
    let w = match weights {
        Some(w) => w,
        None => {
            ones = vec![1.0; values.len()];
            &ones
        }
    };
    let [(v0, w0), (v1, w1)] = split(values, treated, w);
    if v0.is_empty() || v1.is_empty() {
        return Err(Error::domain("SMD needs both treatment groups"));
    }
    let pooled = ((stats::sample_variance(&v1) + stats::sample_variance(&v0)) / 2.0).sqrt();
    let means = GroupMeans {
        treated: stats::weighted_mean(&v1, &w1),
        control: stats::weighted_mean(&v0, &w0),
    };
    if !(pooled > 0.0) {
        return Err(Error::DegenerateCovariate(String::new()));
    }
    Ok(((means.treated - means.control) / pooled, means))
}

pub fn smd(
    records: &[PaperRecord],
    spec: &TreatmentSpec,
    covariate: Covariate,
    weights: Option<&WeightSet>,
) -> Result<f64> {
    let values: Vec<f64> = records.iter().map(|r| covariate.value(r)).collect();
    let treated = spec.treated_flags(records);
    if let Some(w) = weights {
        check_aligned(records, w)?;
    }
    smd_values(&values, &treated, weights.map(|w| w.weights.as_slice()))
        .map(|(d, _)| d)
        .map_err(|e| name_covariate(e, covariate))
}

fn name_covariate(e: Error, c: Covariate) -> Error {
    match e {
        Error::DegenerateCovariate(_) => Error::DegenerateCovariate(c.name().to_string()),
        other => other,
    }
}

fn check_aligned(records: &[PaperRecord], w: &WeightSet) -> Result<()> {
    if w.len() != records.len() {
        return Err(Error::Shape {
            expected: records.len(),
            actual: w.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub mean_treated_pre: f64,
    pub mean_control_pre: f64,
    pub smd_pre: f64,
    pub mean_treated: f64,
    pub mean_control: f64,
    pub smd_post: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub treatment: String,
    pub rows: Vec<BalanceRow>,
    pub threshold: f64,
    pub balanced: bool,
}

pub fn balance_report(records: &[PaperRecord], spec: &TreatmentSpec, weights: &WeightSet) -> Result<BalanceReport> {
    balance_report_with_threshold(records, spec, weights, DEFAULT_SMD_THRESHOLD)
}

pub fn balance_report_with_threshold(
    records: &[PaperRecord],
    spec: &TreatmentSpec,
    weights: &WeightSet,
    threshold: f64,
) -> Result<BalanceReport> {
    check_aligned(records, weights)?;
    let treated = spec.treated_flags(records);
    let mut rows = Vec::with_capacity(spec.covariates.len());
    for &c in &spec.covariates {
        let values: Vec<f64> = records.iter().map(|r| c.value(r)).collect();
        let (smd_pre, pre) = smd_values(&values, &treated, None).map_err(|e| name_covariate(e, c))?;
        let (smd_post, post) =
            smd_values(&values, &treated, Some(&weights.weights)).map_err(|e| name_covariate(e, c))?;
        rows.push(BalanceRow {
            covariate: c.name().to_string(),
            mean_treated_pre: pre.treated,
            mean_control_pre: pre.control,
            smd_pre,
            mean_treated: post.treated,
            mean_control: post.control,
            smd_post,
        });
    }
    let balanced = rows.iter().all(|r| r.smd_post.abs() < threshold);
    Ok(BalanceReport {
        treatment: spec.treatment.name(),
        rows,
        threshold,
        balanced,
    })
}

impl BalanceReport {
    pub fn to_text_table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    self.treatment.clone(),
                    r.covariate.clone(),
                    format!("{:.3}", r.mean_treated_pre),
                    format!("{:.3}", r.mean_control_pre),
                    format!("{:.2}", r.smd_pre),
                    format!("{:.3}", r.mean_treated),
                    format!("{:.3}", r.mean_control),
                    format!("{:.2}", r.smd_post),
                ]
            })
            .collect();
        crate::table::render(
            &[
                "Comparison",
                "Covariate",
                "Group 1 Mean (Pre)",
                "Group 0 Mean (Pre)",
                "SMD (Pre)",
                "Group 1 Mean (Post)",
                "Group 0 Mean (Post)",
                "SMD (Post)",
            ],
            &rows,
        )
    }
}
