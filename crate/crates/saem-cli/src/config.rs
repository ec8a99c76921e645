//! Fit configuration files.
//!
//! A fit is described by a plain-text TOML file with four sections:
//!
//! ```toml
//! [model]
//! name = "binary-logistic"          # built-in registry name
//!
//! [[model.parameters]]              # per-parameter overrides (by name)
//! name = "theta1"
//! init = -0.5
//! transform = "identity"            # identity | log | logit
//! iiv = true
//!
//! [[model.covariates]]              # covariate relations
//! parameter = "theta2"
//! column = "treatment"
//!
//! [model.omega]                     # random-effect covariance
//! corr = [["a0", "a1"]]             # estimated covariances, by name pair
//! init = [[1.0, 0.0], [0.0, 1.0]]   # full d×d initial matrix
//!
//! [model.error]                     # Gaussian outcomes only
//! kind = "constant"                 # constant | proportional | combined | exponential
//! a = 1.0
//!
//! [data]
//! path = "data/toenail.csv"
//! outcome = "binary"                # gaussian | binary | ordinal | count | tte
//! group = "id"
//! time = "time"
//! response = "y"
//! covariates = ["treatment"]
//! censoring = "cens"                # tte only (1 = censored)
//! impute_median = []                # covariates to median-impute up front
//!
//! [options]                         # estimation settings (all optional)
//! k1 = 600
//! k2 = 100
//! chains = 10
//! seed = 1234567
//!
//! [likelihood]
//! method = "is"                     # is | gq | lin | none
//! ```
//!
//! Command-line flags (`--data`, `--model`, `--seed`, `--chains`, `--k1`,
//! `--k2`) override the corresponding file entries; everything else keeps
//! the engine defaults when omitted.

use std::path::{Path, PathBuf};

use saem_core::builtins;
use saem_core::data::{OutcomeKind, Schema};
use saem_core::likelihood::{LikelihoodMethod, LikelihoodOptions};
use saem_core::model::{CovariateRelation, ErrorModel, NlmeModel, OmegaPattern, Transform};
use saem_core::rng::derive_seed;
use saem_core::saem::SaemOptions;

use crate::{CliError, Result};

// ---------------------------------------------------------------------------
// Raw file format
// ---------------------------------------------------------------------------

/// Top-level structure of a fit-configuration file.
#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Model section.
    pub model: ModelSection,
    /// Data section.
    pub data: DataSection,
    /// Estimation options (optional; engine defaults apply).
    #[serde(default)]
    pub options: OptionsSection,
    /// Likelihood settings (optional; importance sampling by default).
    #[serde(default)]
    pub likelihood: LikelihoodSection,
}

/// `[model]` section.
#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Built-in model registry name.
    pub name: String,
    /// Per-parameter overrides of the registry defaults.
    #[serde(default)]
    pub parameters: Vec<ParameterOverride>,
    /// Covariate relations in declared order.
    #[serde(default)]
    pub covariates: Vec<CovariateEntry>,
    /// Random-effect covariance settings.
    #[serde(default)]
    pub omega: OmegaSection,
    /// Residual-error model (Gaussian outcomes only).
    #[serde(default)]
    pub error: Option<ErrorSection>,
}

/// One `[[model.parameters]]` entry: overrides applied onto the registry
/// defaults, keyed by parameter name.
#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterOverride {
    /// Parameter name (must exist in the model).
    pub name: String,
    /// Initial value on the natural scale.
    #[serde(default)]
    pub init: Option<f64>,
    /// Scale transform: `identity` (or `id`), `log`, `logit`.
    #[serde(default)]
    pub transform: Option<String>,
    /// Whether the parameter carries inter-individual variability.
    #[serde(default)]
    pub iiv: Option<bool>,
}

/// One `[[model.covariates]]` entry.
#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateEntry {
    /// Target parameter name.
    pub parameter: String,
    /// Covariate column name.
    pub column: String,
}

/// `[model.omega]` section.
#[derive(Debug, Clone, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaSection {
    /// Estimated covariances as parameter-name pairs.
    #[serde(default)]
    pub corr: Vec<(String, String)>,
    /// Full d×d initial matrix (natural variance scale).
    #[serde(default)]
    pub init: Option<Vec<Vec<f64>>>,
}

/// `[model.error]` section.
#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorSection {
    /// Error-model kind: `constant`, `proportional`, `combined`,
    /// `exponential`.
    pub kind: String,
    /// Additive component (defaults to 1 where applicable).
    #[serde(default)]
    pub a: Option<f64>,
    /// Proportional component (defaults to 0.1 where applicable).
    #[serde(default)]
    pub b: Option<f64>,
}

/// `[data]` section.
#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Data file path (may be overridden by `--data`). Relative paths are
    /// resolved against the working directory first, then the config file's
    /// directory.
    #[serde(default)]
    pub path: Option<String>,
    /// Outcome kind: `gaussian`, `binary`, `ordinal` (or `categorical`),
    /// `count`, `tte`.
    pub outcome: String,
    /// Grouping (subject id) column.
    #[serde(default = "default_group")]
    pub group: String,
    /// Primary predictor (time) column.
    #[serde(default = "default_time")]
    pub time: String,
    /// Additional predictor columns beyond time.
    #[serde(default)]
    pub predictors: Vec<String>,
    /// Response column. Optional for `tte`, where the time column is the
    /// response.
    #[serde(default)]
    pub response: Option<String>,
    /// Subject-level covariate columns.
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Censoring-indicator column (`tte` only; 1 = censored).
    #[serde(default)]
    pub censoring: Option<String>,
    /// Covariates to median-impute immediately after loading.
    #[serde(default)]
    pub impute_median: Vec<String>,
}

fn default_group() -> String {
    "id".to_string()
}

fn default_time() -> String {
    "time".to_string()
}

/// `[options]` section: every field optional, engine defaults otherwise.
#[derive(Debug, Clone, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsSection {
    /// Exploration iterations K1.
    #[serde(default)]
    pub k1: Option<usize>,
    /// Smoothing iterations K2.
    #[serde(default)]
    pub k2: Option<usize>,
    /// Number of MCMC chains (0 = automatic).
    #[serde(default)]
    pub chains: Option<usize>,
    /// Burn-in iterations.
    #[serde(default)]
    pub burn: Option<usize>,
    /// Kernel sub-iterations `[m1, m2, m3]`.
    #[serde(default)]
    pub mcmc: Option<(usize, usize, usize)>,
    /// Simulated-annealing factor τ ∈ (0, 1].
    #[serde(default)]
    pub tau: Option<f64>,
    /// Annealing window length (iterations).
    #[serde(default)]
    pub anneal: Option<usize>,
    /// Target Metropolis–Hastings acceptance rate.
    #[serde(default)]
    pub target_accept: Option<f64>,
    /// Master RNG seed.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Initial covariate coefficients, aligned with the covariate relations.
    #[serde(default)]
    pub beta_init: Option<Vec<f64>>,
}

/// `[likelihood]` section.
#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LikelihoodSection {
    /// Method: `is` (importance sampling), `gq` (adaptive Gauss–Hermite),
    /// `lin` (linearization), or `none` to skip likelihood estimation.
    #[serde(default = "default_ll_method")]
    pub method: String,
    /// Importance-sampling sample size per subject.
    #[serde(default)]
    pub n_is: Option<usize>,
    /// Gauss–Hermite nodes per dimension.
    #[serde(default)]
    pub n_nodes: Option<usize>,
    /// Seed for the Monte-Carlo draws (default: derived from the master
    /// seed).
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_ll_method() -> String {
    "is".to_string()
}

impl Default for LikelihoodSection {
    fn default() -> Self {
        LikelihoodSection { method: default_ll_method(), n_is: None, n_nodes: None, seed: None }
    }
}

// ---------------------------------------------------------------------------
// Command-line overrides
// ---------------------------------------------------------------------------

/// Flag values that override the corresponding config-file entries.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    /// `--data`: data file path.
    pub data: Option<PathBuf>,
    /// `--model`: built-in model name.
    pub model: Option<String>,
    /// `--seed`: master RNG seed.
    pub seed: Option<u64>,
    /// `--chains`: number of MCMC chains.
    pub chains: Option<usize>,
    /// `--k1`: exploration iterations.
    pub k1: Option<usize>,
    /// `--k2`: smoothing iterations.
    pub k2: Option<usize>,
    /// `--impute-median`: additional covariates to median-impute.
    pub impute_median: Vec<String>,
}

// ---------------------------------------------------------------------------
// Resolution
// ---------------------------------------------------------------------------

/// A fully resolved fit task: everything needed to load the data and run the
/// engine.
#[derive(Debug, Clone)]
pub struct ResolvedFit {
    /// The model specification.
    pub model: NlmeModel,
    /// Column schema for loading.
    pub schema: Schema,
    /// Outcome kind.
    pub outcome: OutcomeKind,
    /// Resolved data file path.
    pub data_path: PathBuf,
    /// Covariates to median-impute after loading (config + flags, deduped).
    pub impute_median: Vec<String>,
    /// Engine options.
    pub options: SaemOptions,
    /// Likelihood method (`None` = skip likelihood estimation).
    pub likelihood: Option<(LikelihoodMethod, LikelihoodOptions)>,
}

/// Parse an outcome-kind name.
pub fn parse_outcome(s: &str) -> Result<OutcomeKind> {
    match s.to_ascii_lowercase().as_str() {
        "gaussian" | "continuous" => Ok(OutcomeKind::Gaussian),
        "binary" => Ok(OutcomeKind::Binary),
        "ordinal" | "categorical" => Ok(OutcomeKind::Categorical),
        "count" => Ok(OutcomeKind::Count),
        "tte" | "survival" => Ok(OutcomeKind::Tte),
        _ => Err(CliError::validation(format!(
            "unknown outcome `{s}`; expected gaussian, binary, ordinal, count, or tte"
        ))),
    }
}

fn parse_transform(s: &str) -> Result<Transform> {
    match s.to_ascii_lowercase().as_str() {
        "identity" | "id" => Ok(Transform::Identity),
        "log" => Ok(Transform::Log),
        "logit" => Ok(Transform::Logit),
        _ => Err(CliError::validation(format!(
            "unknown transform `{s}`; expected identity, log, or logit"
        ))),
    }
}

/// Parse a likelihood-method name (`none` → `Ok(None)`).
pub fn parse_ll_method(s: &str) -> Result<Option<LikelihoodMethod>> {
    match s.to_ascii_lowercase().as_str() {
        "is" | "importance-sampling" => Ok(Some(LikelihoodMethod::ImportanceSampling)),
        "gq" | "gauss-hermite" => Ok(Some(LikelihoodMethod::GaussHermite)),
        "lin" | "linearization" => Ok(Some(LikelihoodMethod::Linearization)),
        "none" => Ok(None),
        _ => Err(CliError::validation(format!(
            "unknown likelihood method `{s}`; expected is, gq, lin, or none"
        ))),
    }
}

impl FitConfig {
    /// Read and parse a configuration file.
    pub fn load(path: &Path) -> Result<FitConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::validation(format!("cannot read config `{}`: {e}", path.display()))
        })?;
        toml::from_str(&text).map_err(|e| {
            CliError::validation(format!(
                "config `{}`: {}",
                path.display(),
                compact_toml_error(&e)
            ))
        })
    }

    /// Resolve the configuration against command-line overrides into a
    /// runnable fit task. `config_dir` is the directory of the config file,
    /// used as a fallback root for relative data paths.
    pub fn resolve(&self, cli: &CliOverrides, config_dir: &Path) -> Result<ResolvedFit> {
        let outcome = parse_outcome(&self.data.outcome)?;
        let model_name = cli.model.clone().unwrap_or_else(|| self.model.name.clone());
        let model = self.build_model(&model_name, outcome)?;
        let schema = self.build_schema(outcome)?;
        let data_path = self.resolve_data_path(cli, config_dir)?;

        let mut impute = self.data.impute_median.clone();
        for c in &cli.impute_median {
            if !impute.contains(c) {
                impute.push(c.clone());
            }
        }

        let options = self.build_options(cli, &model)?;
        let likelihood = self.build_likelihood(options.seed)?;

        Ok(ResolvedFit {
            model,
            schema,
            outcome,
            data_path,
            impute_median: impute,
            options,
            likelihood,
        })
    }

    fn resolve_data_path(&self, cli: &CliOverrides, config_dir: &Path) -> Result<PathBuf> {
        let raw: PathBuf = match (&cli.data, &self.data.path) {
            (Some(p), _) => p.clone(),
            (None, Some(p)) => PathBuf::from(p),
            (None, None) => {
                return Err(CliError::validation(
                    "no data file: set [data] path in the config or pass --data",
                ))
            }
        };
        // Prefer the path as given (working-directory relative); fall back to
        // the config file's directory so bundled configs work from anywhere.
        if raw.is_relative() && !raw.exists() {
            let alt = config_dir.join(&raw);
            if alt.exists() {
                return Ok(alt);
            }
        }
        Ok(raw)
    }

    fn build_model(&self, name: &str, outcome: OutcomeKind) -> Result<NlmeModel> {
        let entry = builtins::builtin(name)?;
        if entry.model.outcome() != outcome {
            return Err(CliError::validation(format!(
                "model `{name}` produces {} outcomes but the data section declares {}",
                entry.model.outcome(),
                outcome
            )));
        }
        let mut params = entry.defaults.clone();
        let index_of = |pname: &str| -> Result<usize> {
            params.iter().position(|p| p.name == pname).ok_or_else(|| {
                CliError::validation(format!(
                    "model `{name}` has no parameter `{pname}` (parameters: {})",
                    params.iter().map(|p| p.name.as_str()).collect::<Vec<_>>().join(", ")
                ))
            })
        };

        for ov in &self.model.parameters {
            let k = index_of(&ov.name)?;
            if let Some(init) = ov.init {
                params[k].init = init;
            }
            if let Some(tr) = &ov.transform {
                params[k].transform = parse_transform(tr)?;
            }
            if let Some(iiv) = ov.iiv {
                params[k].iiv = iiv;
            }
        }

        let mut covariates = Vec::with_capacity(self.model.covariates.len());
        for e in &self.model.covariates {
            let k = index_of(&e.parameter)?;
            covariates.push(CovariateRelation { param: k, covariate: e.column.clone() });
        }

        let diag: Vec<bool> = params.iter().map(|p| p.iiv).collect();
        let mut corr = Vec::with_capacity(self.model.omega.corr.len());
        for (a, b) in &self.model.omega.corr {
            let i = index_of(a)?;
            let j = index_of(b)?;
            if i == j {
                return Err(CliError::validation(format!(
                    "Ω covariance pair ({a},{b}) names the same parameter twice"
                )));
            }
            corr.push((i.min(j), i.max(j)));
        }
        corr.sort_unstable();

        let error = match (&self.model.error, outcome) {
            (Some(e), OutcomeKind::Gaussian) => Some(build_error(e)?),
            (None, OutcomeKind::Gaussian) => Some(ErrorModel::Constant { a: 1.0 }),
            (Some(_), _) => {
                return Err(CliError::validation(
                    "error model is only meaningful for Gaussian outcomes",
                ))
            }
            (None, _) => None,
        };

        Ok(NlmeModel {
            model: entry.model,
            params,
            covariates,
            omega: OmegaPattern { diag, corr },
            error,
        })
    }

    fn build_schema(&self, outcome: OutcomeKind) -> Result<Schema> {
        let d = &self.data;
        let response = match (&d.response, outcome) {
            (Some(r), _) => r.clone(),
            (None, OutcomeKind::Tte) => d.time.clone(),
            (None, _) => {
                return Err(CliError::validation(
                    "the data section needs a response column",
                ))
            }
        };
        let mut predictors = vec![d.time.clone()];
        for p in &d.predictors {
            if !predictors.contains(p) {
                predictors.push(p.clone());
            }
        }
        // Discrete non-tte kernels receive the observation as a predictor
        // column; include the response there automatically.
        if outcome.is_discrete() && outcome != OutcomeKind::Tte && !predictors.contains(&response) {
            predictors.push(response.clone());
        }
        if outcome == OutcomeKind::Tte && d.censoring.is_none() {
            return Err(CliError::validation(
                "tte data requires a censoring column in the data section",
            ));
        }
        Ok(Schema {
            group: d.group.clone(),
            predictors,
            response,
            covariates: d.covariates.clone(),
            censoring: d.censoring.clone(),
        })
    }

    fn build_options(&self, cli: &CliOverrides, model: &NlmeModel) -> Result<SaemOptions> {
        let o = &self.options;
        let mut opts = SaemOptions::default();
        if let Some(v) = o.k1 {
            opts.k1 = v;
        }
        if let Some(v) = o.k2 {
            opts.k2 = v;
        }
        if let Some(v) = o.chains {
            opts.n_chains = v;
        }
        if let Some(v) = o.burn {
            opts.n_burn = v;
        }
        if let Some(v) = o.mcmc {
            opts.n_mcmc = v;
        }
        if let Some(v) = o.tau {
            opts.tau = v;
        }
        if let Some(v) = o.anneal {
            opts.anneal_len = Some(v);
        }
        if let Some(v) = o.target_accept {
            opts.target_accept = v;
        }
        if let Some(v) = o.seed {
            opts.seed = v;
        }
        opts.beta_init = o.beta_init.clone();
        opts.omega_init = self.model.omega.init.clone();

        // Flags win over the file.
        if let Some(v) = cli.seed {
            opts.seed = v;
        }
        if let Some(v) = cli.chains {
            opts.n_chains = v;
        }
        if let Some(v) = cli.k1 {
            opts.k1 = v;
        }
        if let Some(v) = cli.k2 {
            opts.k2 = v;
        }

        if let Some(beta) = &opts.beta_init {
            if beta.len() != model.covariates.len() {
                return Err(CliError::validation(format!(
                    "beta_init has {} entries for {} covariate relation(s)",
                    beta.len(),
                    model.covariates.len()
                )));
            }
        }
        Ok(opts)
    }

    fn build_likelihood(&self, master_seed: u64) -> Result<Option<(LikelihoodMethod, LikelihoodOptions)>> {
        let Some(method) = parse_ll_method(&self.likelihood.method)? else {
            return Ok(None);
        };
        let mut opts = LikelihoodOptions {
            seed: derive_seed(master_seed, "likelihood", &[]),
            ..LikelihoodOptions::default()
        };
        if let Some(v) = self.likelihood.n_is {
            opts.n_is = v;
        }
        if let Some(v) = self.likelihood.n_nodes {
            opts.n_nodes = v;
        }
        if let Some(v) = self.likelihood.seed {
            opts.seed = v;
        }
        opts.conditional.seed = derive_seed(master_seed, "likelihood-conditional", &[]);
        Ok(Some((method, opts)))
    }
}

fn build_error(e: &ErrorSection) -> Result<ErrorModel> {
    let a = e.a.unwrap_or(1.0);
    let b = e.b.unwrap_or(0.1);
    let model = match e.kind.to_ascii_lowercase().as_str() {
        "constant" => ErrorModel::Constant { a },
        "proportional" => ErrorModel::Proportional { b },
        "combined" => ErrorModel::Combined { a, b },
        "exponential" => ErrorModel::Exponential { a },
        other => {
            return Err(CliError::validation(format!(
                "unknown error model `{other}`; expected constant, proportional, combined, or exponential"
            )))
        }
    };
    model.validate()?;
    Ok(model)
}

/// Flatten a TOML parse error to a single line (multi-line messages break
/// the one-line error contract).
pub fn compact_toml_error(e: &toml::de::Error) -> String {
    let msg = e.message().to_string();
    match e.span() {
        Some(span) => format!("{msg} (at offset {})", span.start),
        None => msg,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_binary() -> &'static str {
        r#"
[model]
name = "binary-logistic"

[data]
path = "toenail.csv"
outcome = "binary"
response = "y"
covariates = ["treatment"]
"#
    }

    fn parse(text: &str) -> FitConfig {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn minimal_config_resolves_with_defaults() {
        let cfg = parse(minimal_binary());
        let r = cfg.resolve(&CliOverrides::default(), Path::new(".")).unwrap();
        assert_eq!(r.model.model.name(), "binary-logistic");
        assert_eq!(r.outcome, OutcomeKind::Binary);
        // Response auto-appended to the predictors for a discrete outcome.
        assert_eq!(r.schema.predictors, vec!["time".to_string(), "y".to_string()]);
        assert_eq!(r.options.k1, 300);
        assert_eq!(r.options.n_chains, 1);
        // Default likelihood: importance sampling with a derived seed.
        let (method, ll) = r.likelihood.unwrap();
        assert_eq!(method, LikelihoodMethod::ImportanceSampling);
        assert_eq!(ll.seed, derive_seed(1, "likelihood", &[]));
    }

    #[test]
    fn overrides_apply_in_flag_over_file_order() {
        let text = format!(
            "{}\n[options]\nk1 = 600\nseed = 42\nchains = 10\n",
            minimal_binary()
        );
        let cfg = parse(&text);
        let cli = CliOverrides { seed: Some(7), k1: Some(100), ..CliOverrides::default() };
        let r = cfg.resolve(&cli, Path::new(".")).unwrap();
        assert_eq!(r.options.seed, 7); // flag wins
        assert_eq!(r.options.k1, 100); // flag wins
        assert_eq!(r.options.n_chains, 10); // file value kept
    }

    #[test]
    fn parameter_overrides_and_covariates() {
        let text = r#"
[model]
name = "binary-logistic"

[[model.parameters]]
name = "theta1"
init = -0.5

[[model.covariates]]
parameter = "theta2"
column = "treatment"

[data]
path = "x.csv"
outcome = "binary"
response = "y"
covariates = ["treatment"]
"#;
        let r = parse(text).resolve(&CliOverrides::default(), Path::new(".")).unwrap();
        assert_eq!(r.model.params[0].init, -0.5);
        assert_eq!(r.model.covariates.len(), 1);
        assert_eq!(r.model.covariates[0].param, 1);
        assert_eq!(r.model.fixed_names()[2], "beta_treatment(theta2)");
    }

    #[test]
    fn omega_corr_resolves_name_pairs() {
        let text = r#"
[model]
name = "zip-lin"

[[model.parameters]]
name = "a1"
iiv = true

[model.omega]
corr = [["a1", "a0"]]
init = [[0.8, -0.05, 0.0], [-0.05, 0.06, 0.0], [0.0, 0.0, 0.0]]

[data]
path = "x.csv"
outcome = "count"
response = "y"
"#;
        let r = parse(text).resolve(&CliOverrides::default(), Path::new(".")).unwrap();
        assert_eq!(r.model.omega.corr, vec![(0, 1)]); // order normalized
        assert_eq!(
            r.options.omega_init.as_deref().unwrap()[0],
            vec![0.8, -0.05, 0.0]
        );
    }

    #[test]
    fn unknown_names_are_rejected() {
        let bad_param = r#"
[model]
name = "binary-logistic"

[[model.parameters]]
name = "theta9"
init = 1.0

[data]
path = "x.csv"
outcome = "binary"
response = "y"
"#;
        let err = parse(bad_param)
            .resolve(&CliOverrides::default(), Path::new("."))
            .unwrap_err();
        assert!(err.to_string().contains("theta9"));

        let bad_key = "[model]\nname = \"binary-logistic\"\nnope = 1\n\n[data]\noutcome = \"binary\"\nresponse = \"y\"\n";
        assert!(toml::from_str::<FitConfig>(bad_key).is_err());
    }

    #[test]
    fn outcome_mismatch_is_rejected() {
        let text = r#"
[model]
name = "binary-logistic"

[data]
path = "x.csv"
outcome = "count"
response = "y"
"#;
        let err = parse(text)
            .resolve(&CliOverrides::default(), Path::new("."))
            .unwrap_err();
        assert!(err.to_string().contains("binary"));
    }

    #[test]
    fn tte_defaults_response_to_time_and_needs_censoring() {
        let ok = r#"
[model]
name = "tte-weibull"

[data]
path = "x.csv"
outcome = "tte"
censoring = "cens"
"#;
        let r = parse(ok).resolve(&CliOverrides::default(), Path::new(".")).unwrap();
        assert_eq!(r.schema.response, "time");
        assert_eq!(r.schema.censoring.as_deref(), Some("cens"));

        let missing = r#"
[model]
name = "tte-weibull"

[data]
path = "x.csv"
outcome = "tte"
"#;
        let err = parse(missing)
            .resolve(&CliOverrides::default(), Path::new("."))
            .unwrap_err();
        assert!(err.to_string().contains("censoring"));
    }

    #[test]
    fn gaussian_error_model_defaults_and_kinds() {
        let text = r#"
[model]
name = "gaussian-linear"

[model.error]
kind = "combined"
a = 2.0
b = 0.3

[data]
path = "x.csv"
outcome = "gaussian"
response = "y"
"#;
        let r = parse(text).resolve(&CliOverrides::default(), Path::new(".")).unwrap();
        assert_eq!(r.model.error, Some(ErrorModel::Combined { a: 2.0, b: 0.3 }));

        // No [model.error] on a Gaussian outcome falls back to constant.
        let bare = r#"
[model]
name = "gaussian-linear"

[data]
path = "x.csv"
outcome = "gaussian"
response = "y"
"#;
        let r = parse(bare).resolve(&CliOverrides::default(), Path::new(".")).unwrap();
        assert_eq!(r.model.error, Some(ErrorModel::Constant { a: 1.0 }));
    }

    #[test]
    fn likelihood_method_none_skips_estimation() {
        let text = format!("{}\n[likelihood]\nmethod = \"none\"\n", minimal_binary());
        let r = parse(&text).resolve(&CliOverrides::default(), Path::new(".")).unwrap();
        assert!(r.likelihood.is_none());
    }

    #[test]
    fn impute_median_merges_config_and_flags() {
        let mut cfg = parse(minimal_binary());
        cfg.data.impute_median = vec!["treatment".to_string()];
        let cli = CliOverrides {
            impute_median: vec!["treatment".to_string(), "age".to_string()],
            ..CliOverrides::default()
        };
        let r = cfg.resolve(&cli, Path::new(".")).unwrap();
        assert_eq!(r.impute_median, vec!["treatment".to_string(), "age".to_string()]);
    }

    #[test]
    fn data_path_falls_back_to_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d.csv"), "id,time,y\n").unwrap();
        let mut cfg = parse(minimal_binary());
        cfg.data.path = Some("d.csv".to_string());
        let r = cfg.resolve(&CliOverrides::default(), dir.path()).unwrap();
        assert_eq!(r.data_path, dir.path().join("d.csv"));
        // --data takes precedence over the file entry.
        let cli = CliOverrides { data: Some(PathBuf::from("other.csv")), ..CliOverrides::default() };
        let r = cfg.resolve(&cli, dir.path()).unwrap();
        assert_eq!(r.data_path, PathBuf::from("other.csv"));
    }
}
