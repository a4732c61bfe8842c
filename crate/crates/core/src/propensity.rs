//! Logistic propensity model fitted by penalized Newton-Raphson (IRLS).
//!
//! Covariates are standardized before fitting; reported coefficients are on
//! the original scale. An optional ridge penalty applies to the standardized
//! slopes only, never to the intercept.

use serde::{Deserialize, Serialize};

use crate::data::{Covariate, PaperRecord, TreatmentSpec};
use crate::error::{Error, Result};
use crate::linalg;
use crate::stats::sigmoid;

/// Standardized-scale slope magnitude treated as evidence of separation
/// when no ridge penalty is in force.
pub const SEPARATION_CAP: f64 = 20.0;

const P_MIN: f64 = 1e-16;
const P_MAX: f64 = 1.0 - f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Convergence threshold on the Euclidean norm of the standardized-scale gradient.
    pub tol: f64,
    pub max_iter: usize,
    pub ridge: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-8,
            max_iter: 100,
            ridge: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub ridge_penalty: f64,
    pub log_likelihood: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub covariate_names: Vec<String>,
    pub fit_meta: FitMeta,
}

impl LogisticModel {
    pub fn linear_predictor(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.coefficients.len() {
            return Err(Error::Shape {
                expected: self.coefficients.len(),
                actual: x.len(),
            });
        }
        Ok(self.intercept + linalg::dot(&self.coefficients, x))
    }

    /// Probability strictly inside (0, 1) for covariate vector `x`.
    pub fn probability(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.linear_predictor(x)?).clamp(P_MIN, P_MAX))
    }
}

pub fn covariate_row(r: &PaperRecord, covariates: &[Covariate]) -> Vec<f64> {
    covariates.iter().map(|c| c.value(r)).collect()
}

pub fn predict_propensity(m: &LogisticModel, r: &PaperRecord, spec: &TreatmentSpec) -> Result<f64> {
    if m.coefficients.len() != spec.covariates.len() {
        return Err(Error::Shape {
            expected: m.coefficients.len(),
            actual: spec.covariates.len(),
        });
    }
    m.probability(&covariate_row(r, &spec.covariates))
}

pub fn propensity_scores(m: &LogisticModel, records: &[PaperRecord], spec: &TreatmentSpec) -> Result<Vec<f64>> {
    records.iter().map(|r| predict_propensity(m, r, spec)).collect()
}

pub fn fit_logistic(records: &[PaperRecord], spec: &TreatmentSpec, opts: &FitOptions) -> Result<LogisticModel> {
    fit_logistic_with_trace(records, spec, opts).map(|(m, _)| m)
}

/// Like [`fit_logistic`], also returning the penalized log-likelihood after
/// every accepted iterate (starting with the initial point).
pub fn fit_logistic_with_trace(
    records: &[PaperRecord],
    spec: &TreatmentSpec,
    opts: &FitOptions,
) -> Result<(LogisticModel, Vec<f64>)> {
    if spec.covariates.is_empty() {
        return Err(Error::config("covariates", "propensity model needs at least one covariate"));
    }
    if !(opts.ridge >= 0.0) || !(opts.tol > 0.0) {
        return Err(Error::config("fit_options", "ridge must be >= 0 and tol > 0"));
    }
    spec.check_groups(records)?;
    let t: Vec<f64> = spec
        .treated_flags(records)
        .into_iter()
        .map(|b| f64::from(u8::from(b)))
        .collect();
    let design = StandardizedDesign::new(records, &spec.covariates)?;
    let fit = newton(&design, &t, opts);
    let model = design.to_model(&fit, opts.ridge);
    match fit.outcome {
        Outcome::Converged => Ok((model, fit.trace)),
        Outcome::Separated(j) => Err(Error::Separation {
            covariate: spec.covariates[j].name().to_string(),
            cap: SEPARATION_CAP,
            suggested_ridge: 1.0,
        }),
        Outcome::Exhausted => Err(Error::NonConvergence {
            iterations: fit.iterations,
            gradient_norm: fit.gradient_norm,
            last: Box::new(model),
        }),
    }
}

struct StandardizedDesign {
    /// Row-major `n x (p + 1)`, first column all ones.
    x: Vec<f64>,
    n: usize,
    cols: usize,
    means: Vec<f64>,
    sds: Vec<f64>,
    names: Vec<String>,
}

impl StandardizedDesign {
    fn new(records: &[PaperRecord], covariates: &[Covariate]) -> Result<Self> {
        let n = records.len();
        let p = covariates.len();
        let mut means = Vec::with_capacity(p);
        let mut sds = Vec::with_capacity(p);
        for c in covariates {
            let vals: Vec<f64> = records.iter().map(|r| c.value(r)).collect();
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("covariate `{c}` has non-finite values")));
            }
            let m = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            if !(var > 0.0) {
                return Err(Error::DegenerateCovariate(c.name().to_string()));
            }
            means.push(m);
            sds.push(var.sqrt());
        }
        let cols = p + 1;
        let mut x = Vec::with_capacity(n * cols);
        for r in records {
            x.push(1.0);
            for (j, c) in covariates.iter().enumerate() {
                x.push((c.value(r) - means[j]) / sds[j]);
            }
        }
        Ok(StandardizedDesign {
            x,
            n,
            cols,
            means,
            sds,
            names: covariates.iter().map(|c| c.name().to_string()).collect(),
        })
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.cols..(i + 1) * self.cols]
    }

    fn to_model(&self, fit: &NewtonFit, ridge: f64) -> LogisticModel {
        let b = &fit.beta;
        let coefficients: Vec<f64> = (0..self.cols - 1).map(|j| b[j + 1] / self.sds[j]).collect();
        let intercept = b[0]
            - (0..self.cols - 1)
                .map(|j| b[j + 1] * self.means[j] / self.sds[j])
                .sum::<f64>();
        LogisticModel {
            intercept,
            coefficients,
            covariate_names: self.names.clone(),
            fit_meta: FitMeta {
                iterations: fit.iterations,
                final_gradient_norm: fit.gradient_norm,
                ridge_penalty: ridge,
                log_likelihood: fit.trace.last().copied().unwrap_or(f64::NAN),
                converged: matches!(fit.outcome, Outcome::Converged),
            },
        }
    }
}

enum Outcome {
    Converged,
    Separated(usize),
    Exhausted,
}

struct NewtonFit {
    beta: Vec<f64>,
    iterations: usize,
    gradient_norm: f64,
    trace: Vec<f64>,
    outcome: Outcome,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn penalized_loglik(d: &StandardizedDesign, t: &[f64], beta: &[f64], ridge: f64) -> f64 {
    let ll: f64 = (0..d.n)
        .map(|i| {
            let z = linalg::dot(d.row(i), beta);
            t[i] * z - softplus(z)
        })
        .sum();
    ll - 0.5 * ridge * beta[1..].iter().map(|b| b * b).sum::<f64>()
}

/// Gradient and Hessian of the negated penalized log-likelihood's curvature,
/// i.e. `g = X'(t - p) - ridge * b` and `H = X'WX + ridge * I` (slopes only).
fn gradient_hessian(d: &StandardizedDesign, t: &[f64], beta: &[f64], ridge: f64) -> (Vec<f64>, Vec<f64>) {
    let k = d.cols;
    let mut g = vec![0.0; k];
    let mut h = vec![0.0; k * k];
    for i in 0..d.n {
        let row = d.row(i);
        let p = sigmoid(linalg::dot(row, beta));
        let resid = t[i] - p;
        let w = p * (1.0 - p);
        for a in 0..k {
            g[a] += resid * row[a];
            for b in 0..=a {
                h[a * k + b] += w * row[a] * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            h[b * k + a] = h[a * k + b];
        }
    }
    for j in 1..k {
        g[j] -= ridge * beta[j];
        h[j * k + j] += ridge;
    }
    (g, h)
}

fn newton(d: &StandardizedDesign, t: &[f64], opts: &FitOptions) -> NewtonFit {
    let k = d.cols;
    let mut beta = vec![0.0; k];
    let mut ll = penalized_loglik(d, t, &beta, opts.ridge);
    let mut trace = vec![ll];
    let mut gradient_norm = f64::INFINITY;
    let mut iterations = 0;
    // slack for rounding once the optimum is reached
    let slack = |ll: f64| 64.0 * f64::EPSILON * (ll.abs() + 1.0);

    while iterations <= opts.max_iter {
        let (g, h) = gradient_hessian(d, t, &beta, opts.ridge);
        gradient_norm = linalg::dot(&g, &g).sqrt();
        if gradient_norm <= opts.tol {
            return NewtonFit {
                beta,
                iterations,
                gradient_norm,
                trace,
                outcome: Outcome::Converged,
            };
        }
        if iterations == opts.max_iter {
            break;
        }
        iterations += 1;

        let mut accepted = None;
        if let Some(delta) = linalg::cholesky_solve(&h, &g) {
            accepted = line_search(d, t, &beta, &delta, ll, opts.ridge, slack(ll));
        }
        if accepted.is_none() {
            // gradient ascent fallback, scaled by the largest curvature
            let scale = 1.0 / (0..k).map(|j| h[j * k + j]).fold(1e-12, f64::max);
            let dir: Vec<f64> = g.iter().map(|v| v * scale).collect();
            accepted = line_search(d, t, &beta, &dir, ll, opts.ridge, slack(ll));
        }
        let Some((next, next_ll)) = accepted else {
            // no ascent possible at working precision
            break;
        };
        beta = next;
        ll = next_ll;
        trace.push(ll);

        if opts.ridge == 0.0 {
            if let Some(j) = (1..k).find(|&j| beta[j].abs() > SEPARATION_CAP) {
                return NewtonFit {
                    beta,
                    iterations,
                    gradient_norm,
                    trace,
                    outcome: Outcome::Separated(j - 1),
                };
            }
        }
    }
    NewtonFit {
        beta,
        iterations,
        gradient_norm,
        trace,
        outcome: Outcome::Exhausted,
    }
}

fn line_search(
    d: &StandardizedDesign,
    t: &[f64],
    beta: &[f64],
    dir: &[f64],
    ll: f64,
    ridge: f64,
    slack: f64,
) -> Option<(Vec<f64>, f64)> {
    let mut step = 1.0;
    for _ in 0..40 {
        let cand: Vec<f64> = beta.iter().zip(dir).map(|(b, s)| b + step * s).collect();
        let cand_ll = penalized_loglik(d, t, &cand, ridge);
        if cand_ll.is_finite() && cand_ll >= ll - slack {
            return Some((cand, cand_ll.max(ll)));
        }
        step *= 0.5;
    }
    None
}
