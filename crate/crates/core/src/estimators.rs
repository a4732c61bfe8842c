//! Average treatment effect estimators, percentile bootstrap intervals, and
//! stratified / intersectional breakdowns.
//!
//! Every effect is treated-minus-control on the outcome rank, where a higher
//! rank is better. A negative ATE therefore means the treated group (coded 1)
//! is disadvantaged.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Attribute, Covariate, PaperRecord, Treatment, TreatmentSpec};
use crate::error::{Error, Result};
use crate::linalg;
use crate::propensity::{self, FitOptions, LogisticModel};
use crate::stats;
use crate::weighting::{self, WeightOptions, WeightSet};

pub const SIGN_CONVENTION: &str = "treated_minus_control; higher outcome is better; negative favors control";

/// Resamples allowed to fail before an interval is refused.
pub const MAX_FAILURE_SHARE: f64 = 0.10;
pub const MIN_BOOTSTRAP: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ipw,
    LinearRegression,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ipw => "ipw",
            Method::LinearRegression => "linear_regression",
        }
    }
}

/// Weighted-mean difference between treated and control units.
pub fn weighted_difference(treated: &[bool], outcomes: &[f64], weights: &[f64]) -> Result<f64> {
    if treated.len() != outcomes.len() || weights.len() != outcomes.len() {
        return Err(Error::Shape {
            expected: outcomes.len(),
            actual: weights.len().min(treated.len()),
        });
    }
    let mut acc = [[0.0f64; 2]; 2];
    for ((&t, &y), &w) in treated.iter().zip(outcomes).zip(weights) {
        let g = &mut acc[usize::from(t)];
        g[0] += w * y;
        g[1] += w;
    }
    for (g, name) in acc.iter().zip(["control", "treated"]) {
        if !(g[1] > 0.0) {
            return Err(Error::DegenerateGroup {
                treatment: "weighted".into(),
                group: name,
            });
        }
    }
    Ok(acc[1][0] / acc[1][1] - acc[0][0] / acc[0][1])
}

fn outcomes(records: &[PaperRecord]) -> Vec<f64> {
    records.iter().map(|r| f64::from(r.outcome)).collect()
}

/// Difference in weighted mean outcome rank, treated minus control.
pub fn ate_ipw(records: &[PaperRecord], spec: &TreatmentSpec, weights: &WeightSet) -> Result<f64> {
    spec.check_groups(records)?;
    weighted_difference(&spec.treated_flags(records), &outcomes(records), &weights.weights)
}

/// Unadjusted difference in mean outcome rank.
pub fn naive_difference(records: &[PaperRecord], spec: &TreatmentSpec) -> Result<f64> {
    ate_ipw(records, spec, &WeightSet::uniform(records.len()))
}

/// Treatment coefficient from OLS of the outcome on intercept, treatment and
/// the covariates of `spec`.
pub fn ate_linear_regression(records: &[PaperRecord], spec: &TreatmentSpec) -> Result<f64> {
    spec.check_groups(records)?;
    let treated = spec.treated_flags(records);
    let mut columns = vec![
        vec![1.0; records.len()],
        treated.iter().map(|&t| f64::from(u8::from(t))).collect(),
    ];
    let mut names = vec!["intercept".to_string(), spec.treatment.name()];
    for &c in &spec.covariates {
        columns.push(records.iter().map(|r| c.value(r)).collect());
        names.push(c.name().to_string());
    }
    let beta = linalg::least_squares_qr(&columns, &outcomes(records), 1e-10).map_err(|dep| Error::Collinear {
        columns: dep.into_iter().map(|j| names[j].clone()).collect(),
    })?;
    Ok(beta[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IpwOptions {
    pub fit: FitOptions,
    pub weights: WeightOptions,
}

#[derive(Debug, Clone)]
pub struct IpwFit {
    pub model: LogisticModel,
    pub scores: Vec<f64>,
    pub weights: WeightSet,
    pub ate: f64,
}

/// Fit the propensity model, weight, and take the weighted difference.
pub fn ipw_pipeline(records: &[PaperRecord], spec: &TreatmentSpec, opts: &IpwOptions) -> Result<IpwFit> {
    let model = propensity::fit_logistic(records, spec, &opts.fit)?;
    let scores = propensity::propensity_scores(&model, records, spec)?;
    let weights = weighting::ipw_weights(records, spec, &scores, &opts.weights)?;
    let ate = ate_ipw(records, spec, &weights)?;
    Ok(IpwFit {
        model,
        scores,
        weights,
        ate,
    })
}

/// A statistic computed from a sample of records.
pub trait Estimator: Sync {
    fn estimate(&self, records: &[PaperRecord], spec: &TreatmentSpec) -> Result<f64>;
}

impl<F> Estimator for F
where
    F: Fn(&[PaperRecord], &TreatmentSpec) -> Result<f64> + Sync,
{
    fn estimate(&self, records: &[PaperRecord], spec: &TreatmentSpec) -> Result<f64> {
        self(records, spec)
    }
}

/// Full IPW pipeline, including the propensity refit.
#[derive(Debug, Clone, Copy, Default)]
pub struct IpwEstimator(pub IpwOptions);

impl Estimator for IpwEstimator {
    fn estimate(&self, records: &[PaperRecord], spec: &TreatmentSpec) -> Result<f64> {
        ipw_pipeline(records, spec, &self.0).map(|f| f.ate)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RegressionEstimator;

impl Estimator for RegressionEstimator {
    fn estimate(&self, records: &[PaperRecord], spec: &TreatmentSpec) -> Result<f64> {
        ate_linear_regression(records, spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub n_boot: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            n_boot: 1000,
            alpha: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub low: f64,
    pub high: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

/// Row indices for resample `r`: `n` draws with replacement from stream `r`.
pub fn resample_indices(n: usize, seed: u64, r: usize) -> Vec<usize> {
    let mut rng = stats::child_rng(seed, r as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Percentile bootstrap interval at level `1 - alpha`.
///
/// Resample `r` draws from an RNG stream derived from `(seed, r)`, so the
/// result does not depend on scheduling. Failed resamples are skipped; more
/// than [`MAX_FAILURE_SHARE`] of them is an error.
pub fn bootstrap_ci<E: Estimator + ?Sized>(
    estimator: &E,
    records: &[PaperRecord],
    spec: &TreatmentSpec,
    opts: &BootstrapOptions,
) -> Result<BootstrapInterval> {
    if opts.n_boot < MIN_BOOTSTRAP {
        return Err(Error::config("n_boot", format!("must be at least {MIN_BOOTSTRAP}")));
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::config("alpha", "must lie in (0, 1)"));
    }
    if records.is_empty() {
        return Err(Error::domain("bootstrap of an empty sample"));
    }
    let results: Vec<Option<f64>> = (0..opts.n_boot)
        .into_par_iter()
        .map(|r| {
            let sample: Vec<PaperRecord> = resample_indices(records.len(), opts.seed, r)
                .into_iter()
                .map(|i| records[i].clone())
                .collect();
            estimator.estimate(&sample, spec).ok().filter(|v| v.is_finite())
        })
        .collect();
    let mut ok: Vec<f64> = results.iter().flatten().copied().collect();
    let n_failed = opts.n_boot - ok.len();
    if n_failed as f64 > MAX_FAILURE_SHARE * opts.n_boot as f64 {
        return Err(Error::UnstableEstimate {
            failed: n_failed,
            total: opts.n_boot,
        });
    }
    ok.sort_by(f64::total_cmp);
    Ok(BootstrapInterval {
        low: stats::quantile_sorted(&ok, opts.alpha / 2.0),
        high: stats::quantile_sorted(&ok, 1.0 - opts.alpha / 2.0),
        n_ok: ok.len(),
        n_failed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalEstimate {
    pub ate: f64,
    pub ci: [f64; 2],
    pub alpha: f64,
    pub method: Method,
    pub n_treated: usize,
    pub n_control: usize,
    pub seed: u64,
    pub n_boot: usize,
    pub bootstrap_failures: usize,
    /// Set when the full-sample point estimate falls outside the interval.
    pub outside_ci: bool,
    pub sign_convention: String,
}

impl CausalEstimate {
    pub fn ci_low(&self) -> f64 {
        self.ci[0]
    }

    pub fn ci_high(&self) -> f64 {
        self.ci[1]
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci[0] <= value && value <= self.ci[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EstimateOptions {
    pub ipw: IpwOptions,
    pub bootstrap: BootstrapOptions,
}

/// Point estimate on the full sample plus its bootstrap interval.
pub fn estimate_effect(
    method: Method,
    records: &[PaperRecord],
    spec: &TreatmentSpec,
    opts: &EstimateOptions,
) -> Result<CausalEstimate> {
    let (n_treated, n_control) = spec.check_groups(records)?;
    let ipw = IpwEstimator(opts.ipw);
    let estimator: &dyn Estimator = match method {
        Method::Ipw => &ipw,
        Method::LinearRegression => &RegressionEstimator,
    };
    let ate = estimator.estimate(records, spec)?;
    let ci = bootstrap_ci(estimator, records, spec, &opts.bootstrap)?;
    Ok(CausalEstimate {
        ate,
        ci: [ci.low, ci.high],
        alpha: opts.bootstrap.alpha,
        method,
        n_treated,
        n_control,
        seed: opts.bootstrap.seed,
        n_boot: opts.bootstrap.n_boot,
        bootstrap_failures: ci.n_failed,
        outside_ci: !(ci.low <= ate && ate <= ci.high),
        sign_convention: SIGN_CONVENTION.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumEstimate {
    pub stratum: usize,
    /// Exclusive lower bound on the stratifying variable; `None` for the first stratum.
    pub lower: Option<f64>,
    /// Inclusive upper bound; `None` for the last stratum.
    pub upper: Option<f64>,
    pub n: usize,
    pub estimate: Option<CausalEstimate>,
    /// Why the stratum could not be estimated.
    pub error: Option<String>,
}

/// Stratum index per value: cut points are the empirical `k / n_strata`
/// quantiles, and a value equal to a cut point goes to the lower stratum.
pub fn assign_strata(values: &[f64], n_strata: usize) -> (Vec<usize>, Vec<f64>) {
    let sorted = stats::sorted_copy(values);
    let cuts: Vec<f64> = (1..n_strata)
        .map(|k| stats::quantile_sorted(&sorted, k as f64 / n_strata as f64))
        .collect();
    let idx = values
        .iter()
        .map(|&v| cuts.iter().filter(|&&c| v > c).count())
        .collect();
    (idx, cuts)
}

/// Runs the IPW pipeline (with bootstrap interval) separately inside each
/// quantile stratum of `strat_var`. Strata lacking a treatment group are
/// returned with `estimate: None`.
pub fn stratified_ate(
    records: &[PaperRecord],
    spec: &TreatmentSpec,
    strat_var: Covariate,
    n_strata: usize,
    opts: &EstimateOptions,
) -> Result<Vec<StratumEstimate>> {
    if n_strata == 0 {
        return Err(Error::config("n_strata", "must be positive"));
    }
    if records.is_empty() {
        return Err(Error::domain("stratification of an empty sample"));
    }
    let values: Vec<f64> = records.iter().map(|r| strat_var.value(r)).collect();
    let (assignment, cuts) = assign_strata(&values, n_strata);
    let out = (0..n_strata)
        .map(|s| {
            let rows: Vec<PaperRecord> = records
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a == s)
                .map(|(r, _)| r.clone())
                .collect();
            let result = if rows.is_empty() {
                Err(Error::domain("empty stratum"))
            } else {
                estimate_effect(Method::Ipw, &rows, spec, opts)
            };
            let (estimate, error) = match result {
                Ok(e) => (Some(e), None),
                Err(e) => (None, Some(e.to_string())),
            };
            StratumEstimate {
                stratum: s,
                lower: s.checked_sub(1).map(|k| cuts[k]),
                upper: cuts.get(s).copied(),
                n: rows.len(),
                estimate,
                error,
            }
        })
        .collect();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupEstimate {
    pub label: String,
    pub first_level: bool,
    pub second_level: bool,
    pub n: usize,
    pub ate_ipw: Option<f64>,
    pub ate_lr: Option<f64>,
    pub error: Option<String>,
}

/// Effect of membership in each cell of `pair` against all other units,
/// adjusted for `covariates`, under the requested methods. Cells are listed
/// as (0,0), (0,1), (1,0), (1,1).
pub fn intersectional_ate(
    records: &[PaperRecord],
    pair: (Attribute, Attribute),
    covariates: &[Covariate],
    methods: &[Method],
    opts: &IpwOptions,
) -> Result<Vec<SubgroupEstimate>> {
    if pair.0 == pair.1 {
        return Err(Error::config("group_def", "attributes must differ"));
    }
    let mut out = Vec::with_capacity(4);
    for (first_level, second_level) in [(false, false), (false, true), (true, false), (true, true)] {
        let spec = TreatmentSpec::new(
            Treatment::Cell {
                first: pair.0,
                first_level,
                second: pair.1,
                second_level,
            },
            covariates.to_vec(),
        )?;
        let n = records.iter().filter(|r| spec.treatment.is_treated(r)).count();
        let mut row = SubgroupEstimate {
            label: format!("{}, {}", pair.0.level_label(first_level), pair.1.level_label(second_level)),
            first_level,
            second_level,
            n,
            ate_ipw: None,
            ate_lr: None,
            error: None,
        };
        let mut errors = Vec::new();
        for &m in methods {
            let res = match m {
                Method::Ipw => IpwEstimator(*opts).estimate(records, &spec),
                Method::LinearRegression => ate_linear_regression(records, &spec),
            };
            match (m, res) {
                (Method::Ipw, Ok(v)) => row.ate_ipw = Some(v),
                (Method::LinearRegression, Ok(v)) => row.ate_lr = Some(v),
                (m, Err(e)) => errors.push(format!("{}: {e}", m.name())),
            }
        }
        if !errors.is_empty() {
            row.error = Some(errors.join("; "));
        }
        out.push(row);
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:+.3}"))
}

/// Demographic, treated level, comparison level, ATE, CI.
pub fn ate_table(rows: &[(Attribute, CausalEstimate)]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(a, e)| {
            vec![
                a.name().to_string(),
                a.level_label(true).to_string(),
                a.level_label(false).to_string(),
                e.method.name().to_string(),
                format!("{:+.3}", e.ate),
                format!("({:.3}, {:.3})", e.ci[0], e.ci[1]),
            ]
        })
        .collect();
    let level = rows.first().map_or(95.0, |(_, e)| 100.0 * (1.0 - e.alpha));
    let ci_header = format!("{level:.0}% CI");
    crate::table::render(&["Demo.", "Treat.", "Comp.", "Method", "ATE", &ci_header], &body)
}

pub fn intersectional_table(rows: &[SubgroupEstimate]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.label.clone(), r.n.to_string(), fmt_opt(r.ate_ipw), fmt_opt(r.ate_lr)])
        .collect();
    crate::table::render(&["Demographic Group", "N", "ATE (IPW)", "ATE (LR)"], &body)
}

pub fn stratified_table(rows: &[StratumEstimate]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|s| {
            let range = format!(
                "({}, {}]",
                s.lower.map_or("-inf".into(), |v| format!("{v:.2}")),
                s.upper.map_or("inf".into(), |v| format!("{v:.2}"))
            );
            let (ate, ci) = match &s.estimate {
                Some(e) => (format!("{:+.3}", e.ate), format!("({:.3}, {:.3})", e.ci[0], e.ci[1])),
                None => ("n/a".into(), s.error.clone().unwrap_or_default()),
            };
            vec![format!("Q{}", s.stratum + 1), range, s.n.to_string(), ate, ci]
        })
        .collect();
    crate::table::render(&["Stratum", "Range", "N", "ATE (IPW)", "CI"], &body)
}
