use std::collections::HashMap;
use std::path::{Path, PathBuf};

use causal_audit::data::{self, Attribute, Covariate, CsvOptions, ExtraColumns, PaperRecord, TreatmentSpec};
use causal_audit::estimators::{
    self, BootstrapOptions, EstimateOptions, IpwOptions, Method, SIGN_CONVENTION,
};
use causal_audit::fairrank::{self, EvalOptions, FairnessConfig, RankerModel, StudyPoint, TrainOptions};
use causal_audit::metrics::NDCG_GAIN;
use causal_audit::propensity::FitOptions;
use causal_audit::scm::{self, ScmConfig};
use causal_audit::weighting::WeightOptions;
use serde::Serialize;
use serde_json::json;

use crate::args::{self, AblateArgs, AuditArgs, DataArgs, GenerateArgs, Preset, SweepArgs, TrainArgs, TrainFlags};
use crate::output::{csv_bytes, sha256_file, RunConfig, RunDir};
use crate::report::{
    self, AttributeAudit, AuditReport, CurveBin, Intersectional, MethodEstimate, OverlapHistogram, Report,
    StudyReport, TrainReport, TrainedModel, SCHEMA_VERSION,
};
use crate::CliError;

const OVERLAP_BINS: usize = 20;
const CURVE_BINS: usize = 8;

/// What a finished command leaves behind.
#[derive(Debug)]
pub struct Outcome {
    pub run_dir: PathBuf,
    /// Zero on success, one when the analysis partly failed.
    pub exit_code: u8,
}

fn new_report(command: &str, run: &RunConfig) -> Report {
    Report {
        schema_version: SCHEMA_VERSION.into(),
        command: command.into(),
        tool_version: run.tool_version.clone(),
        run_id: run.run_id(),
        run_config: serde_json::to_value(run).expect("serializes"),
        sign_convention: SIGN_CONVENTION.into(),
        ndcg_gain: NDCG_GAIN.into(),
        audit: None,
        train: None,
        study: None,
    }
}

fn finish(report: &Report, mut dir: RunDir, extra: serde_json::Value, exit_code: u8) -> Result<Outcome, CliError> {
    report::render(report, &mut dir)?;
    dir.write_json("report.json", report)?;
    dir.write("report.schema.json", report::SCHEMA.as_bytes())?;
    let run_dir = dir.finish(&report.run_id, &report.command, extra)?;
    Ok(Outcome { run_dir, exit_code })
}

fn load(d: &DataArgs) -> Result<(Vec<PaperRecord>, String), CliError> {
    let Some(path) = &d.data else {
        return Err(CliError::Usage("no dataset given (--data or a config `data` key)".into()));
    };
    if !path.is_file() {
        return Err(CliError::Usage(format!("{}: no such file", path.display())));
    }
    let opts = CsvOptions {
        extra_columns: if d.ignore_extra_columns {
            ExtraColumns::Ignore
        } else {
            ExtraColumns::Reject
        },
    };
    let ds = data::read_csv_path(path, opts).map_err(|e| CliError::Analysis(format!("{}: {e}", path.display())))?;
    Ok((ds.into_records(), sha256_file(path)?))
}

pub fn generate(a: &GenerateArgs) -> Result<Outcome, CliError> {
    let mut cfg = match a.preset {
        Preset::Default => ScmConfig::default(),
        Preset::StrongConfounding => ScmConfig::strong_confounding(),
    };
    cfg.seed = a.seed;
    cfg.treatment = a.treatment;
    if let Some(n) = a.n {
        cfg.n_units = usize::try_from(n).map_err(|_| CliError::Usage("--n too large".into()))?;
    }
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut cfg.tau_race, a.tau_race);
    set(&mut cfg.tau_gender, a.tau_gender);
    set(&mut cfg.tau_country, a.tau_country);
    set(&mut cfg.base_rates.race, a.race_rate);
    set(&mut cfg.base_rates.gender, a.gender_rate);
    set(&mut cfg.base_rates.country, a.country_rate);
    set(&mut cfg.coef_conf_institution, a.confounding);
    set(&mut cfg.effect_modifier_quality, a.effect_modifier);
    set(&mut cfg.outcome_noise_sd, a.outcome_noise_sd);
    cfg.validate()?;

    let units = scm::generate(&cfg)?;
    let true_ate = scm::true_ate(&units)?;
    let run = RunConfig::new("generate", a, None);
    let mut dir = RunDir::create(&a.common.out, &run)?;
    let records: Vec<PaperRecord> = units.iter().map(|u| u.record.clone()).collect();
    let mut csv = Vec::new();
    data::write_csv(&records, &mut csv)?;
    dir.write("dataset.csv", &csv)?;

    #[derive(Serialize)]
    struct TruthRow<'a> {
        id: &'a str,
        y_if_treated: u8,
        y_if_control: u8,
        y_merit: u8,
    }
    let truth_rows: Vec<TruthRow> = units
        .iter()
        .map(|u| TruthRow {
            id: &u.record.id,
            y_if_treated: u.y_if_treated,
            y_if_control: u.y_if_control,
            y_merit: u.y_merit,
        })
        .collect();
    dir.write("truth.csv", &csv_bytes(&truth_rows)?)?;
    let truth = json!({
        "schema_version": SCHEMA_VERSION,
        "treatment": cfg.treatment,
        "true_ate": true_ate,
        "n_units": cfg.n_units,
        "seed": cfg.seed,
        "sign_convention": SIGN_CONVENTION,
        "scm_config": cfg,
    });
    dir.write_json("truth.json", &truth)?;
    let run_dir = dir.finish(&run.run_id(), "generate", json!({"dataset": "dataset.csv", "truth": "truth.json"}))?;
    Ok(Outcome { run_dir, exit_code: 0 })
}

fn overlap(scores: &[f64], treated: &[bool]) -> OverlapHistogram {
    let edges: Vec<f64> = (0..=OVERLAP_BINS).map(|i| i as f64 / OVERLAP_BINS as f64).collect();
    let mut t = vec![0; OVERLAP_BINS];
    let mut c = vec![0; OVERLAP_BINS];
    for (&s, &is_t) in scores.iter().zip(treated) {
        let b = ((s * OVERLAP_BINS as f64) as usize).min(OVERLAP_BINS - 1);
        if is_t {
            t[b] += 1;
        } else {
            c[b] += 1;
        }
    }
    OverlapHistogram {
        edges,
        treated: t,
        control: c,
    }
}

/// Acceptance rate (outcome rank 2 or 3) per group within h-index quantile bins.
fn acceptance_curve(records: &[PaperRecord], a: Attribute) -> Vec<CurveBin> {
    let h: Vec<f64> = records.iter().map(|r| r.h_index).collect();
    let (bins, _) = estimators::assign_strata(&h, CURVE_BINS);
    (0..CURVE_BINS)
        .filter_map(|b| {
            let rows: Vec<&PaperRecord> = records.iter().zip(&bins).filter(|(_, &k)| k == b).map(|(r, _)| r).collect();
            if rows.is_empty() {
                return None;
            }
            let lo = rows.iter().map(|r| r.h_index).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(|r| r.h_index).fold(f64::NEG_INFINITY, f64::max);
            let rate = |level: bool| {
                let g: Vec<_> = rows.iter().filter(|r| r.flag(a) == level).collect();
                let n = g.len();
                let acc = g.iter().filter(|r| r.accepted()).count();
                (n, (n > 0).then(|| acc as f64 / n as f64))
            };
            let (n1, r1) = rate(true);
            let (n0, r0) = rate(false);
            Some(CurveBin {
                h_low: lo,
                h_high: hi,
                n_group1: n1,
                acceptance_group1: r1,
                n_group0: n0,
                acceptance_group0: r0,
            })
        })
        .collect()
}

pub fn audit(a: &AuditArgs) -> Result<Outcome, CliError> {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(CliError::Usage("--alpha must lie in (0, 1)".into()));
    }
    if a.intersect.len() != 2 || a.intersect[0] == a.intersect[1] {
        return Err(CliError::Usage("--intersect needs two distinct attributes".into()));
    }
    let ipw = IpwOptions {
        fit: FitOptions {
            ridge: a.ridge,
            ..FitOptions::default()
        },
        weights: WeightOptions {
            stabilized: a.stabilized,
            clip: args::parse_clip(&a.clip)?,
        },
    };
    let opts = EstimateOptions {
        ipw,
        bootstrap: BootstrapOptions {
            n_boot: a.n_boot as usize,
            alpha: a.alpha,
            seed: a.seed,
        },
    };
    let (records, sha) = load(&a.data)?;
    let run = RunConfig::new("audit", a, Some(sha.clone()));
    let summary = data::summarize(&records)?;

    let mut attributes = Vec::new();
    let mut failures = 0;
    for attr in Attribute::ALL {
        let spec = TreatmentSpec::standard(attr);
        let mut section = AttributeAudit {
            attribute: attr,
            naive_difference: None,
            propensity_model: None,
            weight_diagnostics: None,
            balance: None,
            estimates: Vec::new(),
            strata: None,
            overlap: None,
            acceptance_curve: acceptance_curve(&records, attr),
            errors: Vec::new(),
        };
        match estimators::naive_difference(&records, &spec) {
            Ok(v) => section.naive_difference = Some(v),
            Err(e) => section.errors.push(format!("naive difference: {e}")),
        }
        match estimators::ipw_pipeline(&records, &spec, &ipw) {
            Ok(fit) => {
                section.overlap = Some(overlap(&fit.scores, &spec.treated_flags(&records)));
                match causal_audit::weighting::balance_report(&records, &spec, &fit.weights) {
                    Ok(b) => section.balance = Some(b),
                    Err(e) => section.errors.push(format!("balance: {e}")),
                }
                section.weight_diagnostics = Some(fit.weights.diagnostics);
                section.propensity_model = Some(fit.model);
            }
            Err(e) => section.errors.push(format!("propensity: {e}")),
        }
        for method in [Method::Ipw, Method::LinearRegression] {
            let (estimate, error) = match estimators::estimate_effect(method, &records, &spec, &opts) {
                Ok(e) => (Some(e), None),
                Err(e) => {
                    failures += 1;
                    (None, Some(e.to_string()))
                }
            };
            section.estimates.push(MethodEstimate { method, estimate, error });
        }
        match estimators::stratified_ate(&records, &spec, Covariate::HIndex, a.strata as usize, &opts) {
            Ok(s) => section.strata = Some(s),
            Err(e) => section.errors.push(format!("strata: {e}")),
        }
        attributes.push(section);
    }
    let pair = (a.intersect[0], a.intersect[1]);
    let intersectional = match estimators::intersectional_ate(
        &records,
        pair,
        &[Covariate::HIndex, Covariate::Prestige],
        &[Method::Ipw, Method::LinearRegression],
        &ipw,
    ) {
        Ok(rows) => Intersectional {
            pair: [pair.0, pair.1],
            rows: Some(rows),
            error: None,
        },
        Err(e) => Intersectional {
            pair: [pair.0, pair.1],
            rows: None,
            error: Some(e.to_string()),
        },
    };
    for s in &attributes {
        for m in &s.estimates {
            if let Some(e) = &m.error {
                eprintln!("{} {}: {e}", s.attribute, m.method.name());
            }
        }
    }
    let mut report = new_report("audit", &run);
    report.audit = Some(AuditReport {
        data_sha256: sha,
        summary,
        attributes,
        intersectional,
        primary_failures: failures,
    });
    let dir = RunDir::create(&a.common.out, &run)?;
    finish(&report, dir, json!({"report": "report.json"}), u8::from(failures > 0))
}

fn hyper(t: &TrainFlags) -> Result<TrainOptions, CliError> {
    if t.hidden.contains(&0) {
        return Err(CliError::Usage("--hidden widths must be positive".into()));
    }
    if !(t.lr > 0.0 && t.lr.is_finite()) {
        return Err(CliError::Usage("--lr must be positive".into()));
    }
    Ok(TrainOptions {
        epochs: t.epochs,
        lr: t.lr,
        seed: t.seed,
        hidden_dims: t.hidden.clone(),
    })
}

/// Relevance per record from `file`'s `column`, matched on `id`.
fn load_relevance(records: &[PaperRecord], file: &Path, column: &str) -> Result<Vec<f64>, CliError> {
    let err = |m: String| CliError::Analysis(format!("{}: {m}", file.display()));
    let mut rdr = csv::Reader::from_path(file).map_err(|e| err(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| err(format!("no `{name}` column")));
    let (id_col, rel_col) = (find("id")?, find(column)?);
    let mut map = HashMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| err(e.to_string()))?;
        let v: f64 = row[rel_col]
            .trim()
            .parse()
            .map_err(|_| err(format!("row {}: `{}` is not a number", i + 1, &row[rel_col])))?;
        map.insert(row[id_col].to_string(), v);
    }
    records
        .iter()
        .map(|r| map.get(&r.id).copied().ok_or_else(|| err(format!("no relevance for id `{}`", r.id))))
        .collect()
}

fn eval_options(records: &[PaperRecord], t: &TrainFlags) -> Result<(EvalOptions, String), CliError> {
    match &t.relevance_file {
        Some(f) => Ok((
            EvalOptions {
                relevance: Some(load_relevance(records, f, &t.relevance_column)?),
                ..EvalOptions::default()
            },
            format!("column `{}` of {}", t.relevance_column, f.display()),
        )),
        None => Ok((EvalOptions::default(), "outcome rank".into())),
    }
}

fn write_model(dir: &mut RunDir, rel: &str, m: &RankerModel) -> Result<String, CliError> {
    dir.write_json(rel, m)?;
    Ok(rel.to_string())
}

fn trained(
    dir: &mut RunDir,
    rel: &str,
    records: &[PaperRecord],
    cfg: FairnessConfig,
    hyper: &TrainOptions,
    eval: &EvalOptions,
) -> Result<(TrainedModel, RankerModel), CliError> {
    let model = fairrank::train(records, &cfg, hyper)?;
    let evaluation = fairrank::evaluate(&model, records, eval)?;
    let model_path = write_model(dir, rel, &model)?;
    Ok((
        TrainedModel {
            model_path,
            fairness: cfg,
            train_meta: model.train_meta.clone(),
            evaluation,
        },
        model,
    ))
}

pub fn train(a: &TrainArgs) -> Result<Outcome, CliError> {
    let cfg = FairnessConfig {
        lambda: a.lambda,
        w_race: a.w_race,
        w_country: a.w_country,
    };
    cfg.validate()?;
    let hyper = hyper(&a.train)?;
    let (records, sha) = load(&a.data)?;
    let (eval, relevance) = eval_options(&records, &a.train)?;
    let run = RunConfig::new("train", a, Some(sha.clone()));
    let mut dir = RunDir::create(&a.common.out, &run)?;
    let (model, ranker) = trained(&mut dir, "models/model.json", &records, cfg, &hyper, &eval)?;
    let baseline = if cfg.lambda > 0.0 {
        let base_cfg = FairnessConfig { lambda: 0.0, ..cfg };
        Some(trained(&mut dir, "models/baseline.json", &records, base_cfg, &hyper, &eval)?.0)
    } else {
        None
    };
    let ranking = fairrank::rank(&ranker, &records)?;
    dir.write("tables/ranking.csv", &csv_bytes(&ranking)?)?;
    let mut report = new_report("train", &run);
    report.train = Some(TrainReport {
        data_sha256: sha,
        train_options: hyper,
        relevance,
        alpha: None,
        model,
        baseline,
    });
    finish(&report, dir, json!({"model": "models/model.json", "ranking": "tables/ranking.csv"}), 0)
}

fn study(
    kind: &str,
    run: RunConfig,
    out: &Path,
    sha: String,
    hyper: TrainOptions,
    relevance: String,
    points: Vec<StudyPoint>,
) -> Result<Outcome, CliError> {
    let mut dir = RunDir::create(out, &run)?;
    let mut model_paths = Vec::new();
    let mut links = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let path = match &p.model {
            Some(m) => Some(write_model(&mut dir, &format!("models/{kind}_{i:02}.json"), m)?),
            None => None,
        };
        if let Some(e) = &p.row.error {
            eprintln!("{}: {e}", p.row.label);
        }
        links.push(json!({
            "label": p.row.label,
            "lambda": p.row.lambda,
            "w_race": p.row.w_race,
            "w_country": p.row.w_country,
            "status": p.row.status,
            "model": path,
        }));
        model_paths.push(path);
    }
    let failed = points.iter().filter(|p| !p.row.ok()).count();
    let mut report = new_report(&run.command, &run);
    report.study = Some(StudyReport {
        kind: kind.into(),
        data_sha256: sha,
        train_options: hyper,
        relevance,
        rows: points.into_iter().map(|p| p.row).collect(),
        model_paths,
        failed_points: failed,
    });
    let all_failed = failed == report.study.as_ref().map_or(0, |s| s.rows.len());
    finish(&report, dir, json!({ "points": links }), u8::from(all_failed))
}

pub fn sweep(a: &SweepArgs) -> Result<Outcome, CliError> {
    let hyper = hyper(&a.train)?;
    let (records, sha) = load(&a.data)?;
    let (eval, relevance) = eval_options(&records, &a.train)?;
    let run = RunConfig::new("sweep", a, Some(sha.clone()));
    let points = fairrank::lambda_sweep(&records, &a.lambdas, (a.w_race, a.w_country), &hyper, &eval)?;
    study("sweep", run, &a.common.out, sha, hyper, relevance, points)
}

pub fn ablate(a: &AblateArgs) -> Result<Outcome, CliError> {
    let pairs = a
        .weights
        .iter()
        .map(|s| args::parse_weight_pair(s))
        .collect::<Result<Vec<_>, _>>()?;
    let hyper = hyper(&a.train)?;
    let (records, sha) = load(&a.data)?;
    let (eval, relevance) = eval_options(&records, &a.train)?;
    let run = RunConfig::new("ablate", a, Some(sha.clone()));
    let points = fairrank::ablation(&records, &pairs, a.lambda, &hyper, &eval)?;
    study("ablation", run, &a.common.out, sha, hyper, relevance, points)
}

pub fn report(run_dir: &Path) -> Result<Outcome, CliError> {
    let path = run_dir.join("report.json");
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let report: Report =
        serde_json::from_str(&text).map_err(|e| CliError::Analysis(format!("{}: {e}", path.display())))?;
    if report.schema_version.split('.').next() != SCHEMA_VERSION.split('.').next() {
        return Err(CliError::Analysis(format!(
            "report schema {} is not compatible with {SCHEMA_VERSION}",
            report.schema_version
        )));
    }
    let mut dir = RunDir::open(run_dir);
    report::render(&report, &mut dir)?;
    Ok(Outcome {
        run_dir: run_dir.to_path_buf(),
        exit_code: 0,
    })
}
