//! Record schema, treatment specification, and CSV ingestion.
//!
//! Binary attributes are coded so that `true` (CSV `1`) marks the
//! historically disadvantaged group: minority race, female, Global South.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

pub const CSV_HEADER: [&str; 7] = [
    "id", "race", "gender", "country", "h_index", "prestige", "outcome",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Race,
    Gender,
    Country,
}

impl Attribute {
    pub const ALL: [Attribute; 3] = [Attribute::Race, Attribute::Gender, Attribute::Country];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Race => "race",
            Attribute::Gender => "gender",
            Attribute::Country => "country",
        }
    }

    /// Human label for the `0`/`1` level of this attribute.
    pub fn level_label(self, level: bool) -> &'static str {
        match (self, level) {
            (Attribute::Race, false) => "Majority",
            (Attribute::Race, true) => "Minority",
            (Attribute::Gender, false) => "Male",
            (Attribute::Gender, true) => "Female",
            (Attribute::Country, false) => "Global North",
            (Attribute::Country, true) => "Global South",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "race" => Ok(Attribute::Race),
            "gender" => Ok(Attribute::Gender),
            "country" => Ok(Attribute::Country),
            other => Err(Error::domain(format!("unknown attribute `{other}`"))),
        }
    }
}

/// A column usable as a propensity-model covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    HIndex,
    Prestige,
    Race,
    Gender,
    Country,
}

impl Covariate {
    pub fn name(self) -> &'static str {
        match self {
            Covariate::HIndex => "h_index",
            Covariate::Prestige => "prestige",
            Covariate::Race => "race",
            Covariate::Gender => "gender",
            Covariate::Country => "country",
        }
    }

    pub fn value(self, r: &PaperRecord) -> f64 {
        match self {
            Covariate::HIndex => r.h_index,
            Covariate::Prestige => r.prestige,
            Covariate::Race => f64::from(u8::from(r.race)),
            Covariate::Gender => f64::from(u8::from(r.gender)),
            Covariate::Country => f64::from(u8::from(r.country)),
        }
    }

    pub fn as_attribute(self) -> Option<Attribute> {
        match self {
            Covariate::Race => Some(Attribute::Race),
            Covariate::Gender => Some(Attribute::Gender),
            Covariate::Country => Some(Attribute::Country),
            _ => None,
        }
    }
}

impl fmt::Display for Covariate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Covariate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h_index" => Ok(Covariate::HIndex),
            "prestige" => Ok(Covariate::Prestige),
            "race" => Ok(Covariate::Race),
            "gender" => Ok(Covariate::Gender),
            "country" => Ok(Covariate::Country),
            other => Err(Error::domain(format!("unknown covariate `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub id: String,
    pub race: bool,
    pub gender: bool,
    pub country: bool,
    pub h_index: f64,
    pub prestige: f64,
    pub outcome: u8,
}

impl PaperRecord {
    pub fn flag(&self, attr: Attribute) -> bool {
        match attr {
            Attribute::Race => self.race,
            Attribute::Gender => self.gender,
            Attribute::Country => self.country,
        }
    }

    pub(crate) fn set_flag(&mut self, attr: Attribute, value: bool) {
        match attr {
            Attribute::Race => self.race = value,
            Attribute::Gender => self.gender = value,
            Attribute::Country => self.country = value,
        }
    }

    /// Binary acceptance label: ranks 2 and 3 count as accepted.
    pub fn accepted(&self) -> bool {
        self.outcome >= 2
    }

    fn validate(&self, row: usize) -> Result<()> {
        let err = |message: String| Error::Row { row, message };
        if !(1..=3).contains(&self.outcome) {
            return Err(err(format!("outcome {} outside {{1,2,3}}", self.outcome)));
        }
        if !self.h_index.is_finite() || self.h_index < 0.0 {
            return Err(err(format!("h_index {} must be finite and >= 0", self.h_index)));
        }
        if !self.prestige.is_finite() || !(0.0..=1.0).contains(&self.prestige) {
            return Err(err(format!("prestige {} outside [0, 1]", self.prestige)));
        }
        if self.id.is_empty() {
            return Err(err("empty id".into()));
        }
        Ok(())
    }
}

/// Which units count as treated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Treatment {
    Attribute(Attribute),
    /// Membership in one cell of a two-attribute cross-classification.
    Cell {
        first: Attribute,
        first_level: bool,
        second: Attribute,
        second_level: bool,
    },
}

impl Treatment {
    pub fn is_treated(&self, r: &PaperRecord) -> bool {
        match *self {
            Treatment::Attribute(a) => r.flag(a),
            Treatment::Cell {
                first,
                first_level,
                second,
                second_level,
            } => r.flag(first) == first_level && r.flag(second) == second_level,
        }
    }

    fn involves(&self, attr: Attribute) -> bool {
        match *self {
            Treatment::Attribute(a) => a == attr,
            Treatment::Cell { first, second, .. } => first == attr || second == attr,
        }
    }

    pub fn name(&self) -> String {
        match *self {
            Treatment::Attribute(a) => a.name().to_string(),
            Treatment::Cell {
                first,
                first_level,
                second,
                second_level,
            } => format!(
                "{}={}&{}={}",
                first,
                u8::from(first_level),
                second,
                u8::from(second_level)
            ),
        }
    }
}

impl From<Attribute> for Treatment {
    fn from(a: Attribute) -> Self {
        Treatment::Attribute(a)
    }
}

/// Role assignment for one causal analysis: the treatment and the
/// covariates entering its propensity model. The outcome is always the
/// record's acceptance rank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatmentSpec {
    pub treatment: Treatment,
    pub covariates: Vec<Covariate>,
}

impl TreatmentSpec {
    pub fn new(treatment: impl Into<Treatment>, covariates: Vec<Covariate>) -> Result<Self> {
        let treatment = treatment.into();
        for (i, c) in covariates.iter().enumerate() {
            if let Some(a) = c.as_attribute() {
                if treatment.involves(a) {
                    return Err(Error::config(
                        "covariates",
                        format!("treatment attribute `{a}` cannot also be a covariate"),
                    ));
                }
            }
            if covariates[..i].contains(c) {
                return Err(Error::config("covariates", format!("`{c}` listed twice")));
            }
        }
        Ok(TreatmentSpec {
            treatment,
            covariates,
        })
    }

    /// Treatment on `attr` adjusted for h-index and prestige.
    pub fn standard(attr: Attribute) -> Self {
        TreatmentSpec {
            treatment: Treatment::Attribute(attr),
            covariates: vec![Covariate::HIndex, Covariate::Prestige],
        }
    }

    pub fn treated_flags(&self, records: &[PaperRecord]) -> Vec<bool> {
        records.iter().map(|r| self.treatment.is_treated(r)).collect()
    }

    /// Errors unless both treatment groups are non-empty.
    pub fn check_groups(&self, records: &[PaperRecord]) -> Result<(usize, usize)> {
        let n_treated = records.iter().filter(|r| self.treatment.is_treated(r)).count();
        let n_control = records.len() - n_treated;
        let group = if n_treated == 0 {
            "treated"
        } else if n_control == 0 {
            "control"
        } else {
            return Ok((n_treated, n_control));
        };
        Err(Error::DegenerateGroup {
            treatment: self.treatment.name(),
            group,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Synthetic,
    Ingested,
}

/// Validated, immutable collection of records with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<PaperRecord>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(records: Vec<PaperRecord>, provenance: Provenance) -> Result<Self> {
        let mut seen: HashMap<&str, usize> = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            r.validate(i + 1)?;
            if let Some(first) = seen.insert(&r.id, i + 1) {
                return Err(Error::DuplicateId {
                    id: r.id.clone(),
                    first,
                    second: i + 1,
                });
            }
        }
        Ok(Dataset {
            records,
            provenance,
        })
    }

    pub fn records(&self) -> &[PaperRecord] {
        &self.records
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<PaperRecord> {
        self.records
    }
}

/// How to treat columns outside the canonical schema.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ExtraColumns {
    #[default]
    Reject,
    Ignore,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CsvOptions {
    pub extra_columns: ExtraColumns,
}

pub fn read_csv_path(path: impl AsRef<Path>, opts: CsvOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    parse_csv(std::io::BufReader::new(file), opts)
}

/// Parses the canonical CSV. Row numbers in errors count data rows from 1.
pub fn parse_csv<R: Read>(input: R, opts: CsvOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(input);
    let header = reader.headers()?.clone();
    let mut index = [0usize; 7];
    for (slot, name) in index.iter_mut().zip(CSV_HEADER) {
        *slot = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }
    if opts.extra_columns == ExtraColumns::Reject {
        if let Some(extra) = header.iter().find(|h| !CSV_HEADER.contains(h)) {
            return Err(Error::UnknownColumn(extra.to_string()));
        }
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let field = |k: usize| -> Result<&str> {
            let v = row.get(index[k]).unwrap_or("");
            if v.is_empty() {
                Err(Error::Row {
                    row: row_no,
                    message: format!("missing value for `{}`", CSV_HEADER[k]),
                })
            } else {
                Ok(v)
            }
        };
        let binary = |k: usize| -> Result<bool> {
            match field(k)? {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::Row {
                    row: row_no,
                    message: format!("`{}` must be 0 or 1, got `{other}`", CSV_HEADER[k]),
                }),
            }
        };
        let real = |k: usize| -> Result<f64> {
            let s = field(k)?;
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Row {
                    row: row_no,
                    message: format!("`{}` is not a finite number: `{s}`", CSV_HEADER[k]),
                })
        };
        let outcome_str = field(6)?;
        let outcome = outcome_str.parse::<u8>().map_err(|_| Error::Row {
            row: row_no,
            message: format!("`outcome` is not an integer: `{outcome_str}`"),
        })?;
        let record = PaperRecord {
            id: field(0)?.to_string(),
            race: binary(1)?,
            gender: binary(2)?,
            country: binary(3)?,
            h_index: real(4)?,
            prestige: real(5)?,
            outcome,
        };
        record.validate(row_no)?;
        records.push(record);
    }
    Dataset::new(records, Provenance::Ingested)
}

/// Writes the canonical CSV. Reals use shortest round-trip formatting, so
/// `parse_csv` recovers every field bit for bit.
pub fn write_csv<W: Write>(records: &[PaperRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.id.as_str(),
            if r.race { "1" } else { "0" },
            if r.gender { "1" } else { "0" },
            if r.country { "1" } else { "0" },
            &r.h_index.to_string(),
            &r.prestige.to_string(),
            &r.outcome.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSummary {
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub min: f64,
    pub max: f64,
}

impl ContinuousSummary {
    pub fn of(xs: &[f64]) -> Self {
        let sorted = stats::sorted_copy(xs);
        let q1 = stats::quantile_sorted(&sorted, 0.25);
        let q3 = stats::quantile_sorted(&sorted, 0.75);
        ContinuousSummary {
            mean: stats::mean(xs),
            sd: stats::sample_variance(xs).sqrt(),
            median: stats::quantile_sorted(&sorted, 0.5),
            q1,
            q3,
            iqr: q3 - q1,
            min: sorted[0],
            max: sorted[sorted.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeShare {
    pub attribute: Attribute,
    pub level0: String,
    pub level1: String,
    /// Fraction coded `1`.
    pub share1: f64,
}

/// Descriptive statistics in the layout of a dataset-overview table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub shares: Vec<AttributeShare>,
    pub prestige_mean: f64,
    pub h_index: ContinuousSummary,
    pub outcome: ContinuousSummary,
    /// Counts of outcome ranks 1, 2, 3.
    pub outcome_counts: [usize; 3],
}

pub fn summarize(records: &[PaperRecord]) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::domain("cannot summarize an empty dataset"));
    }
    let n = records.len();
    let shares = Attribute::ALL
        .iter()
        .map(|&a| AttributeShare {
            attribute: a,
            level0: a.level_label(false).into(),
            level1: a.level_label(true).into(),
            share1: records.iter().filter(|r| r.flag(a)).count() as f64 / n as f64,
        })
        .collect();
    let h: Vec<f64> = records.iter().map(|r| r.h_index).collect();
    let y: Vec<f64> = records.iter().map(|r| f64::from(r.outcome)).collect();
    let mut outcome_counts = [0; 3];
    for r in records {
        outcome_counts[usize::from(r.outcome - 1)] += 1;
    }
    Ok(Summary {
        n,
        shares,
        prestige_mean: records.iter().map(|r| r.prestige).sum::<f64>() / n as f64,
        h_index: ContinuousSummary::of(&h),
        outcome: ContinuousSummary::of(&y),
        outcome_counts,
    })
}

impl Summary {
    /// Aligned text table: characteristic, statistic, value.
    pub fn to_text_table(&self) -> String {
        let mut rows: Vec<[String; 3]> = Vec::new();
        let title = |a: Attribute| match a {
            Attribute::Race => "Author Race",
            Attribute::Gender => "Author Gender",
            Attribute::Country => "Country of Affiliation",
        };
        for s in &self.shares {
            rows.push([
                title(s.attribute).into(),
                s.level0.clone(),
                format!("{:.1}%", 100.0 * (1.0 - s.share1)),
            ]);
            rows.push([String::new(), s.level1.clone(), format!("{:.1}%", 100.0 * s.share1)]);
        }
        rows.push([
            "Institutional Prestige".into(),
            "Mean".into(),
            format!("{:.3}", self.prestige_mean),
        ]);
        for (name, c, digits) in [
            ("Max h-index", &self.h_index, 2),
            ("Acceptance Rank", &self.outcome, 2),
        ] {
            rows.push([
                name.into(),
                "Mean (SD)".into(),
                format!("{:.*} ({:.*})", digits, c.mean, digits, c.sd),
            ]);
            rows.push([
                String::new(),
                "Median (IQR)".into(),
                format!("{:.1} ({:.1})", c.median, c.iqr),
            ]);
            let short = |v: f64| if v.fract() == 0.0 { format!("{v}") } else { format!("{v:.1}") };
            rows.push([String::new(), "Range".into(), format!("{}-{}", short(c.min), short(c.max))]);
        }
        let header = ["Characteristic", "Category / Statistic", "Value"];
        crate::table::render(&header, &rows)
    }
}
