//! Long-format hierarchical data: ingestion, validation, and descriptive
//! summaries (score/count proportions over time, Kaplan–Meier curves).
//!
//! A [`Dataset`] is immutable after construction and safe to share across
//! worker threads. Rows are grouped by subject and canonically sorted by the
//! primary predictor (time); subjects keep their order of first appearance in
//! the input file.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Outcome kind of the response column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    Gaussian,
    Binary,
    Categorical,
    Count,
    Tte,
}

impl OutcomeKind {
    /// True for the outcome kinds whose response is passed to the likelihood
    /// kernel as a predictor column.
    pub fn is_discrete(self) -> bool {
        matches!(
            self,
            OutcomeKind::Binary | OutcomeKind::Categorical | OutcomeKind::Count | OutcomeKind::Tte
        )
    }
}

impl std::fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            OutcomeKind::Gaussian => "gaussian",
            OutcomeKind::Binary => "binary",
            OutcomeKind::Categorical => "categorical",
            OutcomeKind::Count => "count",
            OutcomeKind::Tte => "tte",
        };
        f.write_str(s)
    }
}

/// Column-name mapping from a delimited file into a [`Dataset`].
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Schema {
    /// Grouping (subject id) column.
    pub group: String,
    /// Predictor columns; the first is the primary predictor (time) used for
    /// sorting and binning. For discrete outcomes the response column must be
    /// one of these (the observation is passed to the kernel as a predictor).
    pub predictors: Vec<String>,
    /// Response column.
    pub response: String,
    /// Subject-level covariate columns (numeric; 0/1 indicators for
    /// categorical covariates — pre-encoding is the caller's job).
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Censoring-indicator column (required for tte; 1 = censored).
    #[serde(default)]
    pub censoring: Option<String>,
}

/// All rows of one subject, kept sorted ascending by the primary predictor.
#[derive(Debug, Clone)]
pub struct SubjectData {
    /// Subject id as it appeared in the group column.
    pub id: String,
    /// Predictor columns, aligned with [`Schema::predictors`]; each inner
    /// vector holds one column over this subject's rows.
    pub preds: Vec<Vec<f64>>,
    /// Response column over this subject's rows.
    pub response: Vec<f64>,
    /// Censoring indicators (0/1) for tte data.
    pub cens: Option<Vec<f64>>,
    /// Subject-level covariates aligned with the dataset covariate names;
    /// missing values are stored as NaN.
    pub covariates: Vec<f64>,
}

impl SubjectData {
    /// Number of rows for this subject.
    pub fn n_rows(&self) -> usize {
        self.response.len()
    }

    /// Primary-predictor (time) column.
    pub fn times(&self) -> &[f64] {
        &self.preds[0]
    }
}

/// Validated long-format dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Subjects in order of first appearance.
    pub subjects: Vec<SubjectData>,
    /// Column schema the data was loaded with.
    pub schema: Schema,
    /// Outcome kind of the response.
    pub outcome: OutcomeKind,
    /// Row-indexed notes about rejected rows / missing covariates collected
    /// during loading.
    pub load_warnings: Vec<String>,
}

impl Dataset {
    /// Number of subjects N.
    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    /// Total number of rows Σ n_i.
    pub fn n_rows(&self) -> usize {
        self.subjects.iter().map(|s| s.n_rows()).sum()
    }

    /// Number of observation rows carrying likelihood information: for tte
    /// this excludes the time-0 anchor rows, otherwise it equals [`Self::n_rows`].
    pub fn n_obs(&self) -> usize {
        match self.outcome {
            OutcomeKind::Tte => self
                .subjects
                .iter()
                .map(|s| s.times().iter().filter(|&&t| t > 0.0).count())
                .sum(),
            _ => self.n_rows(),
        }
    }

    /// Index of a covariate by name.
    pub fn covariate_index(&self, name: &str) -> Result<usize> {
        self.schema
            .covariates
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::validation(format!("`{name}` is not a covariate column")))
    }

    /// Largest observed response (useful for count truncation rules).
    pub fn max_response(&self) -> f64 {
        self.subjects
            .iter()
            .flat_map(|s| s.response.iter().cloned())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Restrict to subjects with non-missing values for the given covariate
    /// indices. Returns the restricted dataset and the excluded subject ids.
    pub fn require_covariates(&self, cov_idx: &[usize]) -> (Dataset, Vec<String>) {
        let mut kept = Vec::new();
        let mut excluded = Vec::new();
        for s in &self.subjects {
            if cov_idx.iter().any(|&j| s.covariates[j].is_nan()) {
                excluded.push(s.id.clone());
            } else {
                kept.push(s.clone());
            }
        }
        let mut ds = Dataset {
            subjects: kept,
            schema: self.schema.clone(),
            outcome: self.outcome,
            load_warnings: self.load_warnings.clone(),
        };
        if !excluded.is_empty() {
            ds.load_warnings.push(format!(
                "{} subject(s) excluded for missing covariate values: {}",
                excluded.len(),
                excluded.join(",")
            ));
        }
        (ds, excluded)
    }

    /// Replace missing (NaN) values of one covariate by the median over
    /// subjects with observed values.
    pub fn impute_median(&mut self, name: &str) -> Result<()> {
        let j = self.covariate_index(name)?;
        let observed: Vec<f64> = self
            .subjects
            .iter()
            .map(|s| s.covariates[j])
            .filter(|v| !v.is_nan())
            .collect();
        if observed.is_empty() {
            return Err(Error::validation(format!(
                "cannot impute `{name}`: no observed values"
            )));
        }
        let med = crate::numerics::quantile(&observed, 0.5)?;
        let mut n_imputed = 0usize;
        for s in &mut self.subjects {
            if s.covariates[j].is_nan() {
                s.covariates[j] = med;
                n_imputed += 1;
            }
        }
        if n_imputed > 0 {
            self.load_warnings
                .push(format!("imputed {n_imputed} missing `{name}` value(s) by median {med}"));
        }
        Ok(())
    }
}

/// One (stratum, bin, category) cell of a descriptive summary.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ProportionSeries {
    /// Stratum label (`"all"` when unstratified).
    pub stratum: String,
    /// Bin label: a time value, a time interval, or an event time for KM rows.
    pub bin: String,
    /// Category label: score value, count bin, or `"km"` for survival rows.
    pub category: String,
    /// Proportion in [0,1]; for KM rows the survival estimate S(t).
    pub proportion: f64,
    /// Denominator: rows in the (stratum, bin), or the at-risk count for KM.
    pub denominator: usize,
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

fn parse_cell(raw: &str) -> Option<f64> {
    let t = raw.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Load and validate a delimited file (comma-separated, '.' decimal mark,
/// UTF-8, header row) into a [`Dataset`].
///
/// Rows missing a mandatory value (group, any predictor, response, or the
/// censoring column for tte) are rejected and reported by input row number in
/// [`Dataset::load_warnings`]. Missing covariate values are retained as NaN;
/// subjects carrying them are excluded later only by fits that use those
/// covariates.
pub fn load_dataset(path: impl AsRef<Path>, schema: &Schema, outcome: OutcomeKind) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;

    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::validation(format!("column `{name}` not found in header")))
    };

    let group_ix = col(&schema.group)?;
    let pred_ix: Vec<usize> = schema
        .predictors
        .iter()
        .map(|p| col(p))
        .collect::<Result<_>>()?;
    if pred_ix.is_empty() {
        return Err(Error::validation("schema needs at least one predictor column"));
    }
    let resp_ix = col(&schema.response)?;
    let cov_ix: Vec<usize> = schema
        .covariates
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;
    let cens_ix = match (&schema.censoring, outcome) {
        (Some(c), _) => Some(col(c)?),
        (None, OutcomeKind::Tte) => {
            return Err(Error::validation("tte data requires a censoring column in the schema"))
        }
        (None, _) => None,
    };
    if outcome.is_discrete() && outcome != OutcomeKind::Tte && !schema.predictors.contains(&schema.response)
    {
        return Err(Error::validation(format!(
            "for {outcome} outcomes the response column `{}` must also be listed among the predictors",
            schema.response
        )));
    }

    struct RawSubject {
        id: String,
        rows: Vec<(Vec<f64>, f64, Option<f64>)>, // (predictors, response, cens)
        covs: Vec<f64>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut by_id: BTreeMap<String, RawSubject> = BTreeMap::new();
    let mut warnings: Vec<String> = Vec::new();

    for (row_no, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row_no + 2; // header is line 1
        let id = rec.get(group_ix).unwrap_or("").trim().to_string();
        if id.is_empty() {
            warnings.push(format!("row {line}: missing group id — rejected"));
            continue;
        }
        let mut preds = Vec::with_capacity(pred_ix.len());
        let mut bad: Option<String> = None;
        for (&ix, name) in pred_ix.iter().zip(&schema.predictors) {
            match parse_cell(rec.get(ix).unwrap_or("")) {
                Some(v) => preds.push(v),
                None => {
                    bad = Some(name.clone());
                    break;
                }
            }
        }
        if let Some(name) = bad {
            warnings.push(format!("row {line}: missing/invalid `{name}` — rejected"));
            continue;
        }
        let resp = match parse_cell(rec.get(resp_ix).unwrap_or("")) {
            Some(v) => v,
            None => {
                warnings.push(format!(
                    "row {line}: missing/invalid `{}` — rejected",
                    schema.response
                ));
                continue;
            }
        };
        let cens = match cens_ix {
            Some(ix) => match parse_cell(rec.get(ix).unwrap_or("")) {
                Some(v) if v == 0.0 || v == 1.0 => Some(v),
                Some(v) => {
                    return Err(Error::validation(format!(
                        "row {line}: censoring value {v} is not 0/1"
                    )))
                }
                None => {
                    warnings.push(format!(
                        "row {line}: missing/invalid censoring value — rejected"
                    ));
                    continue;
                }
            },
            None => None,
        };
        let covs: Vec<f64> = cov_ix
            .iter()
            .map(|&ix| parse_cell(rec.get(ix).unwrap_or("")).unwrap_or(f64::NAN))
            .collect();

        let subj = by_id.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            RawSubject { id, rows: Vec::new(), covs: covs.clone() }
        });
        // Covariates must be constant within subject (NaN-aware comparison);
        // fill values a later row provides for an earlier missing one.
        for (j, (&have, &new)) in subj.covs.clone().iter().zip(&covs).enumerate() {
            if have.is_nan() && !new.is_nan() {
                subj.covs[j] = new;
            } else if !have.is_nan() && !new.is_nan() && have != new {
                return Err(Error::validation(format!(
                    "subject {}: covariate `{}` varies within subject ({} vs {})",
                    subj.id, schema.covariates[j], have, new
                )));
            }
        }
        subj.rows.push((preds, resp, cens));
    }

    let mut subjects = Vec::with_capacity(order.len());
    for id in order {
        let raw = by_id.remove(&id).expect("id recorded in order map");
        if raw.rows.is_empty() {
            continue;
        }
        // Canonical sort by primary predictor (stable, preserving input order
        // for ties).
        let mut idx: Vec<usize> = (0..raw.rows.len()).collect();
        idx.sort_by(|&a, &b| {
            raw.rows[a].0[0]
                .partial_cmp(&raw.rows[b].0[0])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut preds: Vec<Vec<f64>> = vec![Vec::with_capacity(idx.len()); pred_ix.len()];
        let mut response = Vec::with_capacity(idx.len());
        let mut cens: Vec<f64> = Vec::new();
        for &i in &idx {
            let (p, r, c) = &raw.rows[i];
            for (k, &v) in p.iter().enumerate() {
                preds[k].push(v);
            }
            response.push(*r);
            if let Some(cv) = c {
                cens.push(*cv);
            }
        }
        subjects.push(SubjectData {
            id,
            preds,
            response,
            cens: if cens_ix.is_some() { Some(cens) } else { None },
            covariates: raw.covs,
        });
    }

    if subjects.is_empty() {
        return Err(Error::validation("dataset has no complete rows"));
    }

    // Outcome-specific validation.
    for s in &subjects {
        match outcome {
            OutcomeKind::Tte => {
                let t = s.times();
                if t.iter().any(|&x| x < 0.0) {
                    return Err(Error::validation(format!(
                        "subject {}: negative time in tte data",
                        s.id
                    )));
                }
                if t.first() != Some(&0.0) {
                    return Err(Error::validation(format!(
                        "subject {}: tte data requires a time-0 anchor row",
                        s.id
                    )));
                }
                if t.iter().filter(|&&x| x == 0.0).count() > 1 {
                    return Err(Error::validation(format!(
                        "subject {}: duplicate time-0 rows in tte data",
                        s.id
                    )));
                }
            }
            OutcomeKind::Binary => {
                if s.response.iter().any(|&y| y != 0.0 && y != 1.0) {
                    return Err(Error::validation(format!(
                        "subject {}: binary response outside {{0,1}}",
                        s.id
                    )));
                }
            }
            OutcomeKind::Count => {
                if s.response.iter().any(|&y| y < 0.0 || y.fract() != 0.0) {
                    return Err(Error::validation(format!(
                        "subject {}: count response must be a nonnegative integer",
                        s.id
                    )));
                }
            }
            _ => {}
        }
    }

    Ok(Dataset { subjects, schema: schema.clone(), outcome, load_warnings: warnings })
}

// ---------------------------------------------------------------------------
// Binning
// ---------------------------------------------------------------------------

/// Time-axis binning rule shared by the observed summaries and the VPC so
/// that observed and simulated statistics go through identical code.
#[derive(Debug, Clone)]
pub enum TimeBins {
    /// Exact distinct time values (designs with few nominal times).
    Distinct(Vec<f64>),
    /// Half-open interval edges `[e_k, e_{k+1})`; the last interval is closed.
    Quantile(Vec<f64>),
}

/// Maximum number of distinct time values before switching to quantile bins.
pub const MAX_DISTINCT_TIMES: usize = 12;

/// Number of equal-count quantile bins used beyond that.
pub const N_QUANTILE_BINS: usize = 8;

impl TimeBins {
    /// Build the binning rule from all observed times in the dataset.
    pub fn from_dataset(ds: &Dataset) -> Result<TimeBins> {
        let mut times: Vec<f64> = ds
            .subjects
            .iter()
            .flat_map(|s| s.times().iter().cloned())
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut distinct = times.clone();
        distinct.dedup();
        if distinct.len() <= MAX_DISTINCT_TIMES {
            return Ok(TimeBins::Distinct(distinct));
        }
        let mut edges = Vec::with_capacity(N_QUANTILE_BINS + 1);
        for k in 0..=N_QUANTILE_BINS {
            edges.push(crate::numerics::quantile(&times, k as f64 / N_QUANTILE_BINS as f64)?);
        }
        edges.dedup();
        Ok(TimeBins::Quantile(edges))
    }

    /// Number of bins.
    pub fn len(&self) -> usize {
        match self {
            TimeBins::Distinct(v) => v.len(),
            TimeBins::Quantile(e) => e.len() - 1,
        }
    }

    /// True when there are no bins (empty dataset).
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Bin index for a time value, or None when it falls outside every bin.
    pub fn assign(&self, t: f64) -> Option<usize> {
        match self {
            TimeBins::Distinct(v) => v.iter().position(|&x| x == t),
            TimeBins::Quantile(e) => {
                if t < e[0] || t > *e.last().unwrap() {
                    return None;
                }
                let n = e.len() - 1;
                for k in 0..n {
                    if t < e[k + 1] || (k == n - 1 && t <= e[k + 1]) {
                        return Some(k);
                    }
                }
                None
            }
        }
    }

    /// Human-readable label per bin.
    pub fn labels(&self) -> Vec<String> {
        match self {
            TimeBins::Distinct(v) => v.iter().map(|t| format_num(*t)).collect(),
            TimeBins::Quantile(e) => (0..e.len() - 1)
                .map(|k| format!("[{},{}{}", format_num(e[k]), format_num(e[k + 1]),
                                 if k == e.len() - 2 { "]" } else { ")" }))
                .collect(),
        }
    }
}

fn format_num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e12 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

/// Category definition shared by observed summaries and the VPC.
#[derive(Debug, Clone)]
pub enum Categories {
    /// Distinct observed values, ascending (binary/categorical).
    Distinct(Vec<f64>),
    /// Count bins from strictly increasing break points; the last bin is
    /// open-ended `[b_last, ∞)`.
    CountBins(Vec<f64>),
}

impl Categories {
    /// Build categories for a dataset, honoring optional count breaks.
    pub fn from_dataset(ds: &Dataset, breaks: Option<&[f64]>) -> Result<Categories> {
        match (ds.outcome, breaks) {
            (OutcomeKind::Count, Some(b)) => {
                if b.len() < 2 || b.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::validation("count breaks must be strictly increasing with ≥2 edges"));
                }
                Ok(Categories::CountBins(b.to_vec()))
            }
            _ => {
                let mut vals: Vec<f64> = ds
                    .subjects
                    .iter()
                    .flat_map(|s| s.response.iter().cloned())
                    .collect();
                vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                vals.dedup();
                Ok(Categories::Distinct(vals))
            }
        }
    }

    /// Number of categories.
    pub fn len(&self) -> usize {
        match self {
            Categories::Distinct(v) => v.len(),
            Categories::CountBins(b) => b.len() - 1 + 1, // intervals + open tail
        }
    }

    /// True when no categories exist.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Category index for a response value.
    pub fn assign(&self, y: f64) -> Option<usize> {
        match self {
            Categories::Distinct(v) => v.iter().position(|&x| x == y),
            Categories::CountBins(b) => {
                if y < b[0] {
                    return None;
                }
                for k in 0..b.len() - 1 {
                    if y < b[k + 1] {
                        return Some(k);
                    }
                }
                Some(b.len() - 1)
            }
        }
    }

    /// Label per category.
    pub fn labels(&self) -> Vec<String> {
        match self {
            Categories::Distinct(v) => v.iter().map(|y| format_num(*y)).collect(),
            Categories::CountBins(b) => {
                let mut out = Vec::with_capacity(b.len());
                for k in 0..b.len() - 1 {
                    let lo = b[k];
                    let hi = b[k + 1];
                    if hi - lo == 1.0 && lo == lo.trunc() {
                        out.push(format_num(lo));
                    } else {
                        out.push(format!("{}-{}", format_num(lo), format_num(hi - 1.0)));
                    }
                }
                out.push(format!("{}+", format_num(*b.last().unwrap())));
                out
            }
        }
    }
}

/// Strata of a dataset: `None` → single stratum "all"; otherwise one stratum
/// per distinct value of the named covariate.
pub fn strata(ds: &Dataset, stratify_by: Option<&str>) -> Result<Vec<(String, Vec<usize>)>> {
    match stratify_by {
        None => Ok(vec![("all".to_string(), (0..ds.n_subjects()).collect())]),
        Some(name) => {
            let j = ds.covariate_index(name)?;
            let mut vals: Vec<f64> = ds
                .subjects
                .iter()
                .map(|s| s.covariates[j])
                .filter(|v| !v.is_nan())
                .collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            vals.dedup();
            Ok(vals
                .into_iter()
                .map(|v| {
                    let label = format!("{name}={}", format_num(v));
                    let idx = ds
                        .subjects
                        .iter()
                        .enumerate()
                        .filter(|(_, s)| s.covariates[j] == v)
                        .map(|(i, _)| i)
                        .collect();
                    (label, idx)
                })
                .collect())
        }
    }
}

// ---------------------------------------------------------------------------
// Observed summaries
// ---------------------------------------------------------------------------

/// Core tabulation: per (stratum, time bin) the proportion of each category.
/// `responses` overrides the observed responses (used by the VPC to push
/// simulated replicates through the identical code path); when `None` the
/// dataset's own responses are used.
pub fn discrete_proportions(
    ds: &Dataset,
    responses: Option<&[Vec<f64>]>,
    bins: &TimeBins,
    cats: &Categories,
    strata_def: &[(String, Vec<usize>)],
) -> Vec<ProportionSeries> {
    let bin_labels = bins.labels();
    let cat_labels = cats.labels();
    let mut out = Vec::new();
    for (stratum, subj_idx) in strata_def {
        // counts[bin][cat]
        let mut counts = vec![vec![0usize; cats.len()]; bins.len()];
        let mut denom = vec![0usize; bins.len()];
        for &si in subj_idx {
            let s = &ds.subjects[si];
            let resp: &[f64] = match responses {
                Some(r) => &r[si],
                None => &s.response,
            };
            for (row, &t) in s.times().iter().enumerate() {
                let (Some(b), Some(c)) = (bins.assign(t), cats.assign(resp[row])) else {
                    continue;
                };
                counts[b][c] += 1;
                denom[b] += 1;
            }
        }
        for b in 0..bins.len() {
            if denom[b] == 0 {
                continue;
            }
            for c in 0..cats.len() {
                out.push(ProportionSeries {
                    stratum: stratum.clone(),
                    bin: bin_labels[b].clone(),
                    category: cat_labels[c].clone(),
                    proportion: counts[b][c] as f64 / denom[b] as f64,
                    denominator: denom[b],
                });
            }
        }
    }
    out
}

/// One step of a Kaplan–Meier curve.
#[derive(Debug, Clone, PartialEq)]
pub struct KmStep {
    /// Event time.
    pub time: f64,
    /// Number at risk just before this time.
    pub n_risk: usize,
    /// Number of events at this time.
    pub n_events: usize,
    /// Product-limit estimate S(t).
    pub survival: f64,
}

/// Product-limit (Kaplan–Meier) estimator from per-subject
/// `(time, event)` pairs (`event` = true for an observed event).
pub fn kaplan_meier(data: &[(f64, bool)]) -> Vec<KmStep> {
    let mut sorted: Vec<(f64, bool)> = data.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let n = sorted.len();
    let mut steps = Vec::new();
    let mut surv = 1.0;
    let mut i = 0;
    while i < n {
        let t = sorted[i].0;
        let mut d = 0usize;
        let mut removed = 0usize;
        while i < n && sorted[i].0 == t {
            if sorted[i].1 {
                d += 1;
            }
            removed += 1;
            i += 1;
        }
        let at_risk = n - (i - removed);
        if d > 0 {
            surv *= 1.0 - d as f64 / at_risk as f64;
            steps.push(KmStep { time: t, n_risk: at_risk, n_events: d, survival: surv });
        }
    }
    steps
}

/// Evaluate a KM curve (from [`kaplan_meier`]) at the given grid times
/// (step function, right-continuous; S=1 before the first event).
pub fn km_evaluate(steps: &[KmStep], grid: &[f64]) -> Vec<f64> {
    grid.iter()
        .map(|&t| {
            let mut s = 1.0;
            for st in steps {
                if st.time <= t {
                    s = st.survival;
                } else {
                    break;
                }
            }
            s
        })
        .collect()
}

/// Per-subject `(time, event)` pairs for tte data: the non-anchor row of each
/// subject (event ⇔ censoring indicator 0).
pub fn tte_pairs(ds: &Dataset) -> Result<Vec<(f64, bool)>> {
    if ds.outcome != OutcomeKind::Tte {
        return Err(Error::validation("tte_pairs requires a tte dataset"));
    }
    let mut out = Vec::with_capacity(ds.n_subjects());
    for s in &ds.subjects {
        let cens = s
            .cens
            .as_ref()
            .ok_or_else(|| Error::validation("tte dataset missing censoring column"))?;
        for (row, &t) in s.times().iter().enumerate() {
            if t > 0.0 {
                out.push((t, cens[row] == 0.0));
            }
        }
    }
    Ok(out)
}

/// Summarize a discrete-outcome dataset: per-category proportions over time
/// bins for binary/categorical/count outcomes, Kaplan–Meier survival per
/// stratum for tte.
pub fn summarize_discrete(
    ds: &Dataset,
    breaks: Option<&[f64]>,
    stratify_by: Option<&str>,
) -> Result<Vec<ProportionSeries>> {
    if !ds.outcome.is_discrete() {
        return Err(Error::validation(format!(
            "summarize_discrete requires a discrete outcome (got {})",
            ds.outcome
        )));
    }
    let strata_def = strata(ds, stratify_by)?;
    if ds.outcome == OutcomeKind::Tte {
        let mut out = Vec::new();
        for (stratum, subj_idx) in &strata_def {
            let pairs: Vec<(f64, bool)> = subj_idx
                .iter()
                .flat_map(|&si| {
                    let s = &ds.subjects[si];
                    let cens = s.cens.as_ref().expect("validated tte data");
                    s.times()
                        .iter()
                        .enumerate()
                        .filter(|(_, &t)| t > 0.0)
                        .map(|(row, &t)| (t, cens[row] == 0.0))
                        .collect::<Vec<_>>()
                })
                .collect();
            for st in kaplan_meier(&pairs) {
                out.push(ProportionSeries {
                    stratum: stratum.clone(),
                    bin: format_num(st.time),
                    category: "km".to_string(),
                    proportion: st.survival,
                    denominator: st.n_risk,
                });
            }
        }
        return Ok(out);
    }
    let bins = TimeBins::from_dataset(ds)?;
    let cats = Categories::from_dataset(ds, breaks)?;
    Ok(discrete_proportions(ds, None, &bins, &cats, &strata_def))
}

/// Export a proportion series as tidy CSV (stratum, bin, category, prop, n).
pub fn write_proportions_csv(path: impl AsRef<Path>, series: &[ProportionSeries]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["stratum", "bin", "category", "prop", "n"])?;
    for p in series {
        w.write_record([
            p.stratum.as_str(),
            p.bin.as_str(),
            p.category.as_str(),
            &format!("{}", p.proportion),
            &format!("{}", p.denominator),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn binary_schema() -> Schema {
        Schema {
            group: "id".into(),
            predictors: vec!["time".into(), "y".into()],
            response: "y".into(),
            covariates: vec!["trt".into()],
            censoring: None,
        }
    }

    #[test]
    fn loads_and_sorts_rows_within_subject() {
        let f = write_tmp(
            "id,time,y,trt\n\
             a,2,1,0\n\
             a,0,0,0\n\
             a,1,1,0\n\
             b,0,1,1\n",
        );
        let ds = load_dataset(f.path(), &binary_schema(), OutcomeKind::Binary).unwrap();
        assert_eq!(ds.n_subjects(), 2);
        assert_eq!(ds.subjects[0].times(), &[0.0, 1.0, 2.0]);
        assert_eq!(ds.subjects[0].response, vec![0.0, 1.0, 1.0]);
        assert_eq!(ds.subjects[1].covariates, vec![1.0]);
        assert_eq!(ds.n_rows(), 4);
    }

    #[test]
    fn reordering_rows_gives_identical_dataset() {
        let fwd = write_tmp("id,time,y,trt\na,0,0,0\na,1,1,0\na,2,1,0\n");
        let rev = write_tmp("id,time,y,trt\na,2,1,0\na,1,1,0\na,0,0,0\n");
        let d1 = load_dataset(fwd.path(), &binary_schema(), OutcomeKind::Binary).unwrap();
        let d2 = load_dataset(rev.path(), &binary_schema(), OutcomeKind::Binary).unwrap();
        assert_eq!(d1.subjects[0].times(), d2.subjects[0].times());
        assert_eq!(d1.subjects[0].response, d2.subjects[0].response);
    }

    #[test]
    fn rejects_rows_with_missing_mandatory_values() {
        let f = write_tmp("id,time,y,trt\na,0,0,0\na,,1,0\nb,0,NA,1\nb,1,1,1\n");
        let ds = load_dataset(f.path(), &binary_schema(), OutcomeKind::Binary).unwrap();
        assert_eq!(ds.n_rows(), 2);
        assert_eq!(ds.load_warnings.len(), 2);
        assert!(ds.load_warnings[0].contains("row 3"));
        assert!(ds.load_warnings[1].contains("row 4"));
    }

    #[test]
    fn missing_covariates_kept_as_nan_and_excludable() {
        let f = write_tmp("id,time,y,trt\na,0,0,NA\nb,0,1,1\n");
        let ds = load_dataset(f.path(), &binary_schema(), OutcomeKind::Binary).unwrap();
        assert!(ds.subjects[0].covariates[0].is_nan());
        let (sub, excluded) = ds.require_covariates(&[0]);
        assert_eq!(sub.n_subjects(), 1);
        assert_eq!(excluded, vec!["a".to_string()]);
    }

    #[test]
    fn impute_median_fills_missing() {
        let f = write_tmp("id,time,y,trt\na,0,0,NA\nb,0,1,1\nc,0,1,3\nd,0,0,5\n");
        let mut ds = load_dataset(f.path(), &binary_schema(), OutcomeKind::Binary).unwrap();
        ds.impute_median("trt").unwrap();
        assert_eq!(ds.subjects[0].covariates[0], 3.0);
    }

    #[test]
    fn missing_column_is_a_schema_error() {
        let f = write_tmp("id,time,y\na,0,0\n");
        let err = load_dataset(f.path(), &binary_schema(), OutcomeKind::Binary).unwrap_err();
        assert!(err.to_string().contains("`trt`"));
    }

    #[test]
    fn tte_requires_time_zero_anchor() {
        let schema = Schema {
            group: "id".into(),
            predictors: vec!["time".into()],
            response: "time".into(),
            covariates: vec![],
            censoring: Some("cens".into()),
        };
        let good = write_tmp("id,time,cens\na,0,0\na,120,0\n");
        let ds = load_dataset(good.path(), &schema, OutcomeKind::Tte).unwrap();
        assert_eq!(ds.n_obs(), 1);
        let bad = write_tmp("id,time,cens\na,120,0\n");
        let err = load_dataset(bad.path(), &schema, OutcomeKind::Tte).unwrap_err();
        assert!(err.to_string().contains("time-0 anchor"));
    }

    #[test]
    fn covariate_varying_within_subject_is_an_error() {
        let f = write_tmp("id,time,y,trt\na,0,0,0\na,1,1,1\n");
        let err = load_dataset(f.path(), &binary_schema(), OutcomeKind::Binary).unwrap_err();
        assert!(err.to_string().contains("varies within subject"));
    }

    #[test]
    fn proportions_sum_to_one_per_bin() {
        let f = write_tmp(
            "id,time,y,trt\n\
             a,0,0,0\na,1,1,0\n\
             b,0,1,0\nb,1,1,0\n\
             c,0,0,1\nc,1,0,1\n",
        );
        let ds = load_dataset(f.path(), &binary_schema(), OutcomeKind::Binary).unwrap();
        let series = summarize_discrete(&ds, None, None).unwrap();
        let mut by_bin: BTreeMap<String, f64> = BTreeMap::new();
        for p in &series {
            *by_bin.entry(p.bin.clone()).or_insert(0.0) += p.proportion;
        }
        for (_, total) in by_bin {
            assert!((total - 1.0).abs() < 1e-12);
        }
        // Hand-counted: at t=0, one of three responses is... a=0,b=1,c=0 → p(1)=1/3.
        let p1_t0 = series
            .iter()
            .find(|p| p.bin == "0" && p.category == "1")
            .unwrap();
        assert!((p1_t0.proportion - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(p1_t0.denominator, 3);
    }

    #[test]
    fn stratified_proportions_match_hand_counts() {
        let f = write_tmp(
            "id,time,y,trt\n\
             a,0,1,0\nb,0,1,0\nc,0,0,1\nd,0,1,1\n",
        );
        let ds = load_dataset(f.path(), &binary_schema(), OutcomeKind::Binary).unwrap();
        let series = summarize_discrete(&ds, None, Some("trt")).unwrap();
        let arm0 = series
            .iter()
            .find(|p| p.stratum == "trt=0" && p.category == "1")
            .unwrap();
        assert_eq!(arm0.proportion, 1.0);
        let arm1 = series
            .iter()
            .find(|p| p.stratum == "trt=1" && p.category == "1")
            .unwrap();
        assert_eq!(arm1.proportion, 0.5);
    }

    #[test]
    fn count_breaks_regroup_categories() {
        let f = write_tmp(
            "id,time,y,trt\n\
             a,0,0,0\nb,0,3,0\nc,0,17,0\nd,0,90,0\n",
        );
        let schema = Schema {
            group: "id".into(),
            predictors: vec!["time".into(), "y".into()],
            response: "y".into(),
            covariates: vec!["trt".into()],
            censoring: None,
        };
        let ds = load_dataset(f.path(), &schema, OutcomeKind::Count).unwrap();
        let breaks = [0.0, 1.0, 9.0, 16.0, 25.0, 80.0];
        let series = summarize_discrete(&ds, Some(&breaks), None).unwrap();
        let labels: Vec<&str> = series.iter().map(|p| p.category.as_str()).collect();
        assert_eq!(labels, vec!["0", "1-8", "9-15", "16-24", "25-79", "80+"]);
        let sum: f64 = series.iter().map(|p| p.proportion).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        let p80 = series.iter().find(|p| p.category == "80+").unwrap();
        assert!((p80.proportion - 0.25).abs() < 1e-12);
    }

    #[test]
    fn quantile_bins_kick_in_beyond_twelve_distinct_times() {
        let mut content = String::from("id,time,y,trt\n");
        for i in 0..40 {
            content.push_str(&format!("s{i},{},1,0\n", i as f64 * 0.25));
        }
        let f = write_tmp(&content);
        let ds = load_dataset(f.path(), &binary_schema(), OutcomeKind::Binary).unwrap();
        let bins = TimeBins::from_dataset(&ds).unwrap();
        assert_eq!(bins.len(), N_QUANTILE_BINS);
        // Every observed time lands in exactly one bin.
        for s in &ds.subjects {
            for &t in s.times() {
                assert!(bins.assign(t).is_some());
            }
        }
    }

    #[test]
    fn km_matches_hand_computed_product_limit() {
        // Classic worked example: times 1,2+,3,4,5+ (+ = censored).
        let data = [(1.0, true), (2.0, false), (3.0, true), (4.0, true), (5.0, false)];
        let steps = kaplan_meier(&data);
        assert_eq!(steps.len(), 3);
        // S(1)=4/5; S(3)=4/5·2/3; S(4)=4/5·2/3·1/2.
        assert!((steps[0].survival - 0.8).abs() < 1e-12);
        assert!((steps[1].survival - 0.8 * (2.0 / 3.0)).abs() < 1e-12);
        assert!((steps[2].survival - 0.8 * (2.0 / 3.0) * 0.5).abs() < 1e-12);
        assert_eq!(steps[0].n_risk, 5);
        assert_eq!(steps[1].n_risk, 3);
        assert_eq!(steps[2].n_risk, 2);
    }

    #[test]
    fn km_without_censoring_equals_empirical_survival() {
        let data: Vec<(f64, bool)> = (1..=10).map(|i| (i as f64, true)).collect();
        let steps = kaplan_meier(&data);
        for st in &steps {
            let empirical = data.iter().filter(|(t, _)| *t > st.time).count() as f64 / 10.0;
            assert!((st.survival - empirical).abs() < 1e-12);
        }
    }

    #[test]
    fn km_evaluate_is_a_right_continuous_step_function() {
        let steps = kaplan_meier(&[(1.0, true), (3.0, true)]);
        let s = km_evaluate(&steps, &[0.0, 0.5, 1.0, 2.0, 3.0, 9.0]);
        assert_eq!(s[0], 1.0);
        assert_eq!(s[1], 1.0);
        assert!((s[2] - 0.5).abs() < 1e-12);
        assert!((s[3] - 0.5).abs() < 1e-12);
        assert_eq!(s[4], 0.0);
        assert_eq!(s[5], 0.0);
    }

    #[test]
    fn single_subject_single_row_dataset() {
        let f = write_tmp("id,time,y,trt\na,0,0.5,0\n");
        let schema = Schema {
            group: "id".into(),
            predictors: vec!["time".into()],
            response: "y".into(),
            covariates: vec![],
            censoring: None,
        };
        let ds = load_dataset(f.path(), &schema, OutcomeKind::Gaussian).unwrap();
        assert_eq!(ds.n_subjects(), 1);
        assert_eq!(ds.subjects[0].n_rows(), 1);
    }
}
