//! Run configuration: a single TOML file covering data schema, model
//! formulas, estimator selection, weighting method, bootstrap, and the
//! simulation scenarios.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Deserialize;

use mediate::data::{ColumnType, Roles, Schema};
use mediate::estimators::{
    registry, validate_requirements, FormulaSet, MenuConfig, Selection, WeightsMethod,
};
use mediate::inference::{BootstrapConfig, Scheme};
use mediate::simlab::ScenarioSpec;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub workers: usize,
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub formulas: FormulaSet,
    #[serde(default)]
    pub estimators: EstimatorsConfig,
    #[serde(default)]
    pub weights: WeightsConfig,
    #[serde(default)]
    pub options: OptionsConfig,
    #[serde(default)]
    pub bootstrap: BootstrapSection,
    pub simulate: Option<SimulateConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub exposure: String,
    pub outcome: String,
    pub covariates: Vec<String>,
    pub mediators: Vec<String>,
    #[serde(default = "default_true")]
    pub drop_missing: bool,
    /// Column type declarations: "numeric", "categorical", or "binary".
    #[serde(default)]
    pub types: BTreeMap<String, ColumnType>,
}

fn default_true() -> bool {
    true
}

impl DataConfig {
    pub fn schema(&self) -> Schema {
        Schema {
            roles: Roles {
                exposure: self.exposure.clone(),
                outcome: self.outcome.clone(),
                covariates: self.covariates.clone(),
                mediators: self.mediators.clone(),
            },
            types: self.types.clone(),
            drop_missing: self.drop_missing,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EstimatorsConfig {
    /// "all" or an explicit list of registry ids.
    #[serde(default)]
    pub select: SelectField,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SelectField {
    Keyword(String),
    Ids(Vec<String>),
}

impl Default for SelectField {
    fn default() -> Self {
        SelectField::Keyword("all".into())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    #[serde(default = "default_method")]
    pub method: WeightsMethod,
    /// Optional hard cap on estimated weights (reported loudly when it binds).
    pub cap: Option<f64>,
}

fn default_method() -> WeightsMethod {
    WeightsMethod::Expr2
}

impl Default for WeightsConfig {
    fn default() -> Self {
        WeightsConfig {
            method: default_method(),
            cap: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsConfig {
    /// Mediator-simulation replicates for fuMsimYpred.
    #[serde(default = "default_nsim")]
    pub nsim: usize,
    /// Joint three-arm covariate adjustment for the psxCadj row.
    #[serde(default)]
    pub cadj_joint: bool,
}

fn default_nsim() -> usize {
    100
}

impl Default for OptionsConfig {
    fn default() -> Self {
        OptionsConfig {
            nsim: default_nsim(),
            cadj_joint: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
}

fn default_replicates() -> usize {
    1000
}

fn default_level() -> f64 {
    0.95
}

fn default_scheme() -> Scheme {
    Scheme::DirichletContinuous
}

impl Default for BootstrapSection {
    fn default() -> Self {
        BootstrapSection {
            enabled: false,
            replicates: default_replicates(),
            level: default_level(),
            scheme: default_scheme(),
        }
    }
}

impl BootstrapSection {
    pub fn to_config(&self, seed: u64) -> BootstrapConfig {
        BootstrapConfig {
            replicates: self.replicates,
            level: self.level,
            seed,
            scheme: self.scheme,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Scenario preset: "robustness" (the full ledger-verification suite),
    /// "discrete" (binary-outcome saturated world spot checks), or
    /// "desk-all-correct". Alternatively supply an inline [simulate.scenario].
    pub preset: Option<String>,
    pub scenario: Option<ScenarioSpec>,
    #[serde(default = "default_sim_n")]
    pub n: usize,
    #[serde(default = "default_sim_reps")]
    pub reps: usize,
    #[serde(default = "default_truth_draws")]
    pub truth_draws: usize,
    /// Attach bootstrap intervals per replication (uses the [bootstrap]
    /// block) and report empirical coverage.
    #[serde(default)]
    pub coverage: bool,
}

fn default_sim_n() -> usize {
    5000
}

fn default_sim_reps() -> usize {
    200
}

fn default_truth_draws() -> usize {
    2_000_000
}

/// Validate everything that can be checked before touching data; returns
/// every problem found, not just the first.
pub fn validate(config: &RunConfig, need_data: bool, need_simulate: bool) -> Vec<String> {
    let mut errors = Vec::new();

    if need_data {
        match &config.data {
            None => errors.push("missing [data] section".into()),
            Some(data) => {
                if data.covariates.is_empty() {
                    errors.push("[data] needs at least one covariate".into());
                }
                if data.mediators.is_empty() {
                    errors.push("[data] needs at least one mediator".into());
                }
            }
        }
        let selection = match selection_of(config) {
            Ok(s) => s,
            Err(e) => {
                errors.push(e);
                Selection::All
            }
        };
        match config.formulas.parse() {
            Err(e) => errors.push(e.to_string()),
            Ok(formulas) => {
                let mut menu = MenuConfig::new(formulas);
                menu.selection = selection;
                menu.weights_method = config.weights.method;
                errors.extend(validate_requirements(&menu));
                if let Some(w) = &menu.formulas.working {
                    if w.rhs_variables()
                        .iter()
                        .any(|v| v == "arm" || v.starts_with("__arm"))
                    {
                        errors.push(
                            "working formula must not reference `arm`; arm indicators are added automatically"
                                .into(),
                        );
                    }
                }
            }
        }
        if config.bootstrap.enabled {
            if config.bootstrap.replicates < 2 {
                errors.push("[bootstrap] replicates must be >= 2".into());
            }
            if !(config.bootstrap.level > 0.0 && config.bootstrap.level < 1.0) {
                errors.push("[bootstrap] level must be in (0,1)".into());
            }
        }
        if config.options.nsim == 0 {
            errors.push("[options] nsim must be positive".into());
        }
    }

    if need_simulate {
        match &config.simulate {
            None => errors.push("missing [simulate] section".into()),
            Some(sim) => {
                match (&sim.preset, &sim.scenario) {
                    (None, None) => {
                        errors.push("[simulate] needs a preset or an inline scenario".into())
                    }
                    (Some(p), None) => {
                        if !["robustness", "discrete", "desk-all-correct"].contains(&p.as_str()) {
                            errors.push(format!(
                                "unknown simulate preset `{p}` (expected robustness, discrete, or desk-all-correct)"
                            ));
                        }
                    }
                    (None, Some(sc)) => {
                        if let Err(e) = sc.dgp.validate() {
                            errors.push(e.to_string());
                        }
                        if let Err(e) = sc.formula_set().parse() {
                            errors.push(e.to_string());
                        }
                    }
                    (Some(_), Some(_)) => errors.push(
                        "[simulate] preset and inline scenario are mutually exclusive".into(),
                    ),
                }
                if sim.n == 0 || sim.reps == 0 {
                    errors.push("[simulate] n and reps must be positive".into());
                }
            }
        }
    }

    errors
}

pub fn selection_of(config: &RunConfig) -> Result<Selection, String> {
    match &config.estimators.select {
        SelectField::Keyword(k) if k == "all" => Ok(Selection::All),
        SelectField::Keyword(other) => Err(format!(
            "estimators.select: expected \"all\" or a list of ids, got `{other}`"
        )),
        SelectField::Ids(ids) => {
            let mut bad = Vec::new();
            for id in ids {
                if !registry().iter().any(|e| e.id == id) {
                    bad.push(id.clone());
                }
            }
            if bad.is_empty() {
                Ok(Selection::Ids(ids.clone()))
            } else {
                Err(format!("unknown estimator id(s): {}", bad.join(", ")))
            }
        }
    }
}

/// Build the menu configuration from a validated run config.
pub fn menu_config(config: &RunConfig) -> Result<MenuConfig, String> {
    let formulas = config.formulas.parse().map_err(|e| e.to_string())?;
    let mut menu = MenuConfig::new(formulas);
    menu.selection = selection_of(config)?;
    menu.weights_method = config.weights.method;
    menu.nsim = config.options.nsim;
    menu.cadj_joint = config.options.cadj_joint;
    menu.weight_cap = config.weights.cap;
    menu.seed = config.seed;
    Ok(menu)
}
