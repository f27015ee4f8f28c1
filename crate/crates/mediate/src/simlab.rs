//! Synthetic data generation, a Monte-Carlo truth oracle, misspecification
//! scenarios, and the bias/coverage experiment runner.
//!
//! A [`DgpSpec`] is a set of fully parameterized structural equations drawn
//! sequentially C -> A -> M -> Y. The truth oracle simulates both arms'
//! mediator blocks per draw and evaluates the outcome-law means, so the
//! decomposition NDE0 + NIE1 = TE holds exactly on shared draws.
//! Misspecification always lives on the analyst side: a [`ScenarioSpec`]
//! carries a correct and a corrupted formula set per estimation component
//! and picks between them with per-component flags; the generating laws are
//! never touched.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::{Column, Dataset, Roles};
use crate::error::{Error, Result};
use crate::estimators::{
    registry, run_menu, Component, EstimatorInfo, FormulaSet, MenuConfig, Selection, WeightsMethod,
};
use crate::inference::{bootstrap_ci, BootstrapConfig};
use crate::rng::{derive_seed, substream};

const TAG_GENERATE: u64 = 0x6E;
const TAG_TRUTH: u64 = 0x7A;
const TAG_MENU: u64 = 0x4D;

// ---------------------------------------------------------------------------
// Data-generating process
// ---------------------------------------------------------------------------

/// Marginal law of one covariate (covariates are drawn independently).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum CovariateLaw {
    Bernoulli { p: f64 },
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Covariate {
    pub name: String,
    #[serde(flatten)]
    pub law: CovariateLaw,
}

/// One additive term of a linear predictor: `coef` times the product of the
/// named variables (one name = main effect, several = product term).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LpTerm {
    pub vars: Vec<String>,
    pub coef: f64,
}

/// Linear predictor over covariates, the exposure, and mediators.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LinearPredictor {
    pub intercept: f64,
    #[serde(default)]
    pub terms: Vec<LpTerm>,
}

impl LinearPredictor {
    fn eval(&self, lookup: &dyn Fn(&str) -> f64) -> f64 {
        let mut value = self.intercept;
        for term in &self.terms {
            let mut prod = term.coef;
            for var in &term.vars {
                prod *= lookup(var);
            }
            value += prod;
        }
        value
    }
}

/// Per-arm conditional mediator law.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MediatorLaw {
    /// Logit-linear Bernoulli.
    Binary {
        arm0: LinearPredictor,
        arm1: LinearPredictor,
    },
    /// Linear-normal with a shared residual standard deviation.
    Continuous {
        arm0: LinearPredictor,
        arm1: LinearPredictor,
        sd: f64,
    },
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MediatorSpec {
    pub name: String,
    #[serde(flatten)]
    pub law: MediatorLaw,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OutcomeKind {
    Binary,
    Continuous { sd: f64 },
}

/// Outcome law; the linear predictor may reference covariates, mediators,
/// the exposure name, and products of them.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct OutcomeLaw {
    #[serde(flatten)]
    pub kind: OutcomeKind,
    pub lp: LinearPredictor,
}

/// Parametric structural equations for C, A|C, M|C,A and Y|C,A,M.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DgpSpec {
    pub covariates: Vec<Covariate>,
    pub propensity: LinearPredictor,
    pub mediators: Vec<MediatorSpec>,
    pub outcome: OutcomeLaw,
    #[serde(default = "default_exposure_name")]
    pub exposure_name: String,
    #[serde(default = "default_outcome_name")]
    pub outcome_name: String,
}

fn default_exposure_name() -> String {
    "a".into()
}

fn default_outcome_name() -> String {
    "y".into()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl DgpSpec {
    /// Validate the spec: positivity requires the propensity to stay within
    /// [0.05, 0.95] over the covariate supports, which rules out unbounded
    /// covariates in the propensity and lets the bound be checked by
    /// interval arithmetic.
    pub fn validate(&self) -> Result<()> {
        let mut names = std::collections::BTreeSet::new();
        for c in &self.covariates {
            if !names.insert(c.name.clone()) {
                return Err(Error::Simulation(format!(
                    "duplicate covariate `{}`",
                    c.name
                )));
            }
        }
        for m in &self.mediators {
            if !names.insert(m.name.clone()) {
                return Err(Error::Simulation(format!(
                    "duplicate variable `{}`",
                    m.name
                )));
            }
        }
        let range_of = |name: &str| -> Result<(f64, f64)> {
            let cov = self
                .covariates
                .iter()
                .find(|c| c.name == name)
                .ok_or_else(|| {
                    Error::Simulation(format!(
                        "propensity references `{name}`, which is not a covariate"
                    ))
                })?;
            match cov.law {
                CovariateLaw::Bernoulli { .. } => Ok((0.0, 1.0)),
                CovariateLaw::Uniform { lo, hi } => Ok((lo, hi)),
                CovariateLaw::Normal { .. } => Err(Error::Simulation(format!(
                    "propensity depends on unbounded covariate `{name}`; positivity cannot be verified"
                ))),
            }
        };
        let mut lo = self.propensity.intercept;
        let mut hi = self.propensity.intercept;
        for term in &self.propensity.terms {
            let mut bounds = (term.coef, term.coef);
            for var in &term.vars {
                let (a, b) = range_of(var)?;
                let candidates = [bounds.0 * a, bounds.0 * b, bounds.1 * a, bounds.1 * b];
                bounds = (
                    candidates.iter().copied().fold(f64::INFINITY, f64::min),
                    candidates.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                );
            }
            lo += bounds.0;
            hi += bounds.1;
        }
        let (p_lo, p_hi) = (sigmoid(lo), sigmoid(hi));
        if p_lo < 0.05 || p_hi > 0.95 {
            return Err(Error::Simulation(format!(
                "propensity range [{p_lo:.4}, {p_hi:.4}] escapes the positivity bound [0.05, 0.95]"
            )));
        }

        // Every law may reference only what exists when it is drawn.
        let cov_names: Vec<&str> = self.covariates.iter().map(|c| c.name.as_str()).collect();
        let check_refs = |lp: &LinearPredictor, allowed: &[&str], what: &str| -> Result<()> {
            for term in &lp.terms {
                for var in &term.vars {
                    if !allowed.contains(&var.as_str()) {
                        return Err(Error::Simulation(format!(
                            "{what} references `{var}`, which is not available at that stage"
                        )));
                    }
                }
            }
            Ok(())
        };
        let mut allowed = cov_names.clone();
        for m in &self.mediators {
            let what = format!("mediator `{}` law", m.name);
            match &m.law {
                MediatorLaw::Binary { arm0, arm1 } => {
                    check_refs(arm0, &allowed, &what)?;
                    check_refs(arm1, &allowed, &what)?;
                }
                MediatorLaw::Continuous { arm0, arm1, sd } => {
                    if !(*sd > 0.0) {
                        return Err(Error::Simulation(format!(
                            "mediator `{}` needs a positive residual sd",
                            m.name
                        )));
                    }
                    check_refs(arm0, &allowed, &what)?;
                    check_refs(arm1, &allowed, &what)?;
                }
            }
            allowed.push(m.name.as_str());
        }
        allowed.push(self.exposure_name.as_str());
        check_refs(&self.outcome.lp, &allowed, "outcome law")?;
        if let OutcomeKind::Continuous { sd } = self.outcome.kind {
            if !(sd > 0.0) {
                return Err(Error::Simulation("outcome needs a positive residual sd".into()));
            }
        }
        Ok(())
    }

    fn draw_covariates<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.covariates
            .iter()
            .map(|c| match c.law {
                CovariateLaw::Bernoulli { p } => {
                    if rng.gen::<f64>() < p {
                        1.0
                    } else {
                        0.0
                    }
                }
                CovariateLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.gen::<f64>(),
                CovariateLaw::Normal { mean, sd } => {
                    let z: f64 = rng.sample(StandardNormal);
                    mean + sd * z
                }
            })
            .collect()
    }

    /// Draw the mediator block for one unit under the given arm.
    fn draw_mediators<R: Rng>(&self, covs: &[f64], arm: u8, rng: &mut R) -> Vec<f64> {
        let mut meds: Vec<f64> = Vec::with_capacity(self.mediators.len());
        for spec in &self.mediators {
            let lookup = |name: &str| self.lookup(covs, Some(arm as f64), &meds, name);
            let value = match &spec.law {
                MediatorLaw::Binary { arm0, arm1 } => {
                    let lp = if arm == 1 { arm1 } else { arm0 };
                    if rng.gen::<f64>() < sigmoid(lp.eval(&lookup)) {
                        1.0
                    } else {
                        0.0
                    }
                }
                MediatorLaw::Continuous { arm0, arm1, sd } => {
                    let lp = if arm == 1 { arm1 } else { arm0 };
                    let z: f64 = rng.sample(StandardNormal);
                    lp.eval(&lookup) + sd * z
                }
            };
            meds.push(value);
        }
        meds
    }

    /// Mean of the outcome law at the given covariates, arm, and mediators.
    fn outcome_mean(&self, covs: &[f64], arm: f64, meds: &[f64]) -> f64 {
        let lookup = |name: &str| self.lookup(covs, Some(arm), meds, name);
        let lp = self.outcome.lp.eval(&lookup);
        match self.outcome.kind {
            OutcomeKind::Binary => sigmoid(lp),
            OutcomeKind::Continuous { .. } => lp,
        }
    }

    fn lookup(&self, covs: &[f64], arm: Option<f64>, meds: &[f64], name: &str) -> f64 {
        if let Some(i) = self.covariates.iter().position(|c| c.name == name) {
            return covs[i];
        }
        if name == self.exposure_name {
            return arm.expect("exposure referenced before assignment");
        }
        if let Some(i) = self.mediators.iter().position(|m| m.name == name) {
            if i < meds.len() {
                return meds[i];
            }
            panic!("law references mediator `{name}` before it is drawn");
        }
        panic!("law references unknown variable `{name}`");
    }
}

/// Draw an i.i.d. dataset of `n` rows from the structural equations,
/// sequentially C -> A -> M -> Y. Deterministic given the seed.
pub fn generate(dgp: &DgpSpec, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Simulation("cannot generate an empty dataset".into()));
    }
    dgp.validate()?;
    let mut rng = substream(seed, &[TAG_GENERATE]);
    let k_cov = dgp.covariates.len();
    let k_med = dgp.mediators.len();
    let mut cov_cols = vec![Vec::with_capacity(n); k_cov];
    let mut a_col = Vec::with_capacity(n);
    let mut med_cols = vec![Vec::with_capacity(n); k_med];
    let mut y_col = Vec::with_capacity(n);

    for _ in 0..n {
        let covs = dgp.draw_covariates(&mut rng);
        let p = sigmoid(
            dgp.propensity
                .eval(&|name| dgp.lookup(&covs, None, &[], name)),
        );
        let arm: u8 = if rng.gen::<f64>() < p { 1 } else { 0 };
        let meds = dgp.draw_mediators(&covs, arm, &mut rng);
        let mu = dgp.outcome_mean(&covs, arm as f64, &meds);
        let y = match dgp.outcome.kind {
            OutcomeKind::Binary => {
                if rng.gen::<f64>() < mu {
                    1.0
                } else {
                    0.0
                }
            }
            OutcomeKind::Continuous { sd } => {
                let z: f64 = rng.sample(StandardNormal);
                mu + sd * z
            }
        };
        for (col, v) in cov_cols.iter_mut().zip(&covs) {
            col.push(*v);
        }
        a_col.push(arm as f64);
        for (col, v) in med_cols.iter_mut().zip(&meds) {
            col.push(*v);
        }
        y_col.push(y);
    }

    let mut columns: Vec<(String, Column)> = Vec::new();
    for (spec, col) in dgp.covariates.iter().zip(cov_cols) {
        columns.push((spec.name.clone(), Column::Numeric(col)));
    }
    columns.push((dgp.exposure_name.clone(), Column::Numeric(a_col)));
    for (spec, col) in dgp.mediators.iter().zip(med_cols) {
        columns.push((spec.name.clone(), Column::Numeric(col)));
    }
    columns.push((dgp.outcome_name.clone(), Column::Numeric(y_col)));

    Dataset::new(
        columns,
        Roles {
            exposure: dgp.exposure_name.clone(),
            outcome: dgp.outcome_name.clone(),
            covariates: dgp.covariates.iter().map(|c| c.name.clone()).collect(),
            mediators: dgp.mediators.iter().map(|m| m.name.clone()).collect(),
        },
    )
}

/// Monte-Carlo truth for the effect pair, with standard errors.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct TrueEffects {
    pub nde0: f64,
    pub nie1: f64,
    pub te: f64,
    pub ey1: f64,
    pub ey0: f64,
    pub ey1m0: f64,
    pub se_nde0: f64,
    pub se_nie1: f64,
    pub se_te: f64,
    pub draws: usize,
}

impl TrueEffects {
    pub fn effect(&self, which: &str) -> (f64, f64) {
        match which {
            "nde0" => (self.nde0, self.se_nde0),
            "nie1" => (self.nie1, self.se_nie1),
            "te" => (self.te, self.se_te),
            other => panic!("unknown effect `{other}`"),
        }
    }
}

/// Simulate the truth: draw C, draw M0 and M1 from the per-arm mediator
/// laws, evaluate the outcome-law means at (C,1,M1), (C,0,M0), (C,1,M0),
/// and average. TE is accumulated as NDE0 + NIE1 on the same draws, so the
/// decomposition is exact by construction.
pub fn true_effects(dgp: &DgpSpec, n_mc: usize, seed: u64) -> Result<TrueEffects> {
    if n_mc < 100_000 {
        return Err(Error::Simulation(
            "truth oracle needs at least 1e5 draws".into(),
        ));
    }
    dgp.validate()?;
    let mut rng = substream(seed, &[TAG_TRUTH]);
    let mut sums = [0.0f64; 3]; // nde, nie, te
    let mut sumsq = [0.0f64; 3];
    let mut pos = [0.0f64; 3]; // ey1, ey0, ey1m0
    for _ in 0..n_mc {
        let covs = dgp.draw_covariates(&mut rng);
        let m0 = dgp.draw_mediators(&covs, 0, &mut rng);
        let m1 = dgp.draw_mediators(&covs, 1, &mut rng);
        let mu_1m1 = dgp.outcome_mean(&covs, 1.0, &m1);
        let mu_0m0 = dgp.outcome_mean(&covs, 0.0, &m0);
        let mu_1m0 = dgp.outcome_mean(&covs, 1.0, &m0);
        let nde = mu_1m0 - mu_0m0;
        let nie = mu_1m1 - mu_1m0;
        let te = nde + nie;
        for (k, v) in [nde, nie, te].into_iter().enumerate() {
            sums[k] += v;
            sumsq[k] += v * v;
        }
        pos[0] += mu_1m1;
        pos[1] += mu_0m0;
        pos[2] += mu_1m0;
    }
    let n = n_mc as f64;
    let mean = |k: usize| sums[k] / n;
    let se = |k: usize| {
        let m = mean(k);
        ((sumsq[k] / n - m * m) / n).sqrt()
    };
    Ok(TrueEffects {
        nde0: mean(0),
        nie1: mean(1),
        // Constructed from the same draws, so the decomposition is exact.
        te: mean(0) + mean(1),
        ey1: pos[0] / n,
        ey0: pos[1] / n,
        ey1m0: pos[2] / n,
        se_nde0: se(0),
        se_nie1: se(1),
        se_te: se(2),
        draws: n_mc,
    })
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

/// Per-component correctness flags: `true` picks the correct formula,
/// `false` the deliberately misspecified one.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ComponentFlags {
    pub propensity: bool,
    pub exposure_cm: bool,
    pub mediator_density: bool,
    pub outcome_c_treated: bool,
    pub outcome_c_control: bool,
    pub outcome_cm_treated: bool,
    pub crossworld_c: bool,
    pub nde_c: bool,
}

impl ComponentFlags {
    pub fn all_correct() -> Self {
        ComponentFlags {
            propensity: true,
            exposure_cm: true,
            mediator_density: true,
            outcome_c_treated: true,
            outcome_c_control: true,
            outcome_cm_treated: true,
            crossworld_c: true,
            nde_c: true,
        }
    }

    pub fn none_correct() -> Self {
        ComponentFlags {
            propensity: false,
            exposure_cm: false,
            mediator_density: false,
            outcome_c_treated: false,
            outcome_c_control: false,
            outcome_cm_treated: false,
            crossworld_c: false,
            nde_c: false,
        }
    }

    /// Whether an abstract estimation component is consistent under these
    /// flags (cross-world weights need both the propensity and the exposure
    /// odds model; their mediator-related part only the latter).
    pub fn component_ok(&self, c: Component) -> bool {
        match c {
            Component::W1 | Component::W0 => self.propensity,
            Component::Wx => self.propensity && self.exposure_cm,
            Component::WxMediatorPart | Component::Wsx => self.exposure_cm,
            Component::MedDensity => self.mediator_density,
            Component::OutcomeC1 => self.outcome_c_treated,
            Component::OutcomeC0 => self.outcome_c_control,
            Component::OutcomeCM1 => self.outcome_cm_treated,
            Component::CrossworldC => self.crossworld_c,
            Component::NdeC => self.nde_c,
        }
    }
}

/// Whether the ledger predicts the estimator consistent under the flags:
/// some consistency subset must hold entirely.
pub fn expect_consistent(info: &EstimatorInfo, flags: &ComponentFlags) -> bool {
    info.consistency_sets
        .iter()
        .any(|set| set.iter().all(|c| flags.component_ok(*c)))
}

/// Whether the flags violate a component the estimator is not allowed to
/// have wrong (and the ledger therefore predicts it inconsistent).
pub fn violates_not_allowed(info: &EstimatorInfo, flags: &ComponentFlags) -> bool {
    info.not_allowed.iter().any(|c| !flags.component_ok(*c))
}

/// A data-generating process plus an analyst with per-component formula
/// corruption.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub dgp: DgpSpec,
    pub correct: FormulaSet,
    pub misspecified: FormulaSet,
    pub flags: ComponentFlags,
}

impl ScenarioSpec {
    /// The analyst's formula set under this scenario's flags.
    pub fn formula_set(&self) -> FormulaSet {
        let pick = |ok: bool, a: &Option<String>, b: &Option<String>| {
            if ok {
                a.clone()
            } else {
                b.clone().or_else(|| a.clone())
            }
        };
        let f = &self.flags;
        let c = &self.correct;
        let m = &self.misspecified;
        FormulaSet {
            propensity: pick(f.propensity, &c.propensity, &m.propensity),
            exposure_cm: pick(f.exposure_cm, &c.exposure_cm, &m.exposure_cm),
            outcome_c_treated: pick(
                f.outcome_c_treated,
                &c.outcome_c_treated,
                &m.outcome_c_treated,
            ),
            outcome_c_control: pick(
                f.outcome_c_control,
                &c.outcome_c_control,
                &m.outcome_c_control,
            ),
            outcome_cm_treated: pick(
                f.outcome_cm_treated,
                &c.outcome_cm_treated,
                &m.outcome_cm_treated,
            ),
            crossworld_c: pick(f.crossworld_c, &c.crossworld_c, &m.crossworld_c),
            nde_c: pick(f.nde_c, &c.nde_c, &m.nde_c),
            working: c.working.clone(),
            mediator_order: c.mediator_order.clone(),
            mediator_factors: if f.mediator_density {
                c.mediator_factors.clone()
            } else {
                m.mediator_factors.clone()
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Experiment runner
// ---------------------------------------------------------------------------

/// Configuration of a repeated-sampling experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    /// Draws for the truth oracle.
    pub truth_draws: usize,
    pub selection: Selection,
    pub weights_method: WeightsMethod,
    pub nsim: usize,
    pub msim_exact: bool,
    pub cadj_joint: bool,
    pub bootstrap: Option<BootstrapConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 5000,
            reps: 200,
            seed: 0,
            truth_draws: 2_000_000,
            selection: Selection::All,
            weights_method: WeightsMethod::Expr2,
            nsim: 100,
            msim_exact: false,
            cadj_joint: false,
            bootstrap: None,
        }
    }
}

/// Per-estimator, per-effect summary over replications.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ExperimentRow {
    pub estimator: String,
    pub effect: String,
    pub truth: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub empirical_se: f64,
    pub rmse: f64,
    /// |bias| / (empirical SE / sqrt(reps)).
    pub standardized_bias: f64,
    pub coverage: Option<f64>,
    pub failures: usize,
    pub reps_used: usize,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ExperimentTable {
    pub scenario: String,
    pub n: usize,
    pub reps: usize,
    pub truth: TrueEffects,
    pub rows: Vec<ExperimentRow>,
}

const EFFECTS: [&str; 3] = ["nde0", "nie1", "te"];

struct RepOutcome {
    /// Per selected estimator: the three effects, or None on failure.
    estimates: Vec<Option<[f64; 3]>>,
    /// Per selected estimator x effect: CI cover indicator, when bootstrap on.
    covered: Option<Vec<Option<[bool; 3]>>>,
}

/// Run `reps` replications of generate -> estimate (optionally with a
/// bootstrap interval per replication) and summarize bias, SE, RMSE and
/// coverage against the Monte-Carlo truth. Deterministic given the seed and
/// independent of worker count.
pub fn run_experiment(scenario: &ScenarioSpec, cfg: &ExperimentConfig) -> Result<ExperimentTable> {
    scenario.dgp.validate()?;
    let truth = true_effects(
        &scenario.dgp,
        cfg.truth_draws,
        derive_seed(cfg.seed, &[TAG_TRUTH]),
    )?;
    let formulas = scenario.formula_set().parse()?;

    let selected: Vec<&EstimatorInfo> = match &cfg.selection {
        Selection::All => registry().iter().collect(),
        Selection::Ids(ids) => {
            let mut v = Vec::new();
            for id in ids {
                v.push(crate::estimators::find(id)?);
            }
            v
        }
    };
    let truth_by_effect = [truth.nde0, truth.nie1, truth.te];

    let base_menu = {
        let mut mc = MenuConfig::new(formulas);
        mc.weights_method = cfg.weights_method;
        mc.selection = cfg.selection.clone();
        mc.nsim = cfg.nsim;
        mc.msim_exact = cfg.msim_exact;
        mc.cadj_joint = cfg.cadj_joint;
        mc
    };

    let outcomes: Vec<Result<RepOutcome>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| run_one_rep(scenario, cfg, &base_menu, &selected, &truth_by_effect, rep))
        .collect();

    // Aggregate.
    let mut rows = Vec::with_capacity(selected.len() * 3);
    for (ei, info) in selected.iter().enumerate() {
        for (k, effect) in EFFECTS.iter().enumerate() {
            let mut values = Vec::with_capacity(cfg.reps);
            let mut covers = Vec::new();
            let mut failures = 0usize;
            for rep in &outcomes {
                match rep {
                    Ok(out) => match out.estimates[ei] {
                        Some(est) => {
                            values.push(est[k]);
                            if let Some(cov) = &out.covered {
                                if let Some(c) = cov[ei] {
                                    covers.push(c[k]);
                                }
                            }
                        }
                        None => failures += 1,
                    },
                    Err(_) => failures += 1,
                }
            }
            let truth_k = truth_by_effect[k];
            let reps_used = values.len();
            let (mean_est, se, rmse) = if reps_used > 0 {
                let m = values.iter().sum::<f64>() / reps_used as f64;
                let var = if reps_used > 1 {
                    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (reps_used - 1) as f64
                } else {
                    0.0
                };
                let mse = values
                    .iter()
                    .map(|v| (v - truth_k) * (v - truth_k))
                    .sum::<f64>()
                    / reps_used as f64;
                (m, var.sqrt(), mse.sqrt())
            } else {
                (f64::NAN, f64::NAN, f64::NAN)
            };
            let bias = mean_est - truth_k;
            let standardized = if se > 0.0 && reps_used > 1 {
                bias.abs() / (se / (reps_used as f64).sqrt())
            } else {
                f64::NAN
            };
            rows.push(ExperimentRow {
                estimator: info.id.to_string(),
                effect: effect.to_string(),
                truth: truth_k,
                mean_estimate: mean_est,
                bias,
                empirical_se: se,
                rmse,
                standardized_bias: standardized,
                coverage: if covers.is_empty() {
                    None
                } else {
                    Some(covers.iter().filter(|c| **c).count() as f64 / covers.len() as f64)
                },
                failures,
                reps_used,
            });
        }
    }

    Ok(ExperimentTable {
        scenario: scenario.name.clone(),
        n: cfg.n,
        reps: cfg.reps,
        truth,
        rows,
    })
}

fn run_one_rep(
    scenario: &ScenarioSpec,
    cfg: &ExperimentConfig,
    base_menu: &MenuConfig,
    selected: &[&EstimatorInfo],
    truth_by_effect: &[f64; 3],
    rep: usize,
) -> Result<RepOutcome> {
    let ds = generate(
        &scenario.dgp,
        cfg.n,
        derive_seed(cfg.seed, &[TAG_GENERATE, rep as u64]),
    )?;
    let mut menu = base_menu.clone();
    menu.seed = derive_seed(cfg.seed, &[TAG_MENU, rep as u64]);
    let outcomes = run_menu(&menu, &ds, None)?;

    let mut estimates: Vec<Option<[f64; 3]>> = Vec::with_capacity(selected.len());
    for out in &outcomes {
        estimates.push(out.result.as_ref().ok().map(|r| [r.nde0, r.nie1, r.te]));
    }

    let covered = match &cfg.bootstrap {
        None => None,
        Some(bcfg) => {
            let labels: Vec<String> = selected
                .iter()
                .flat_map(|e| EFFECTS.iter().map(move |eff| format!("{}|{eff}", e.id)))
                .collect();
            let point: Vec<f64> = estimates
                .iter()
                .flat_map(|est| match est {
                    Some(v) => v.to_vec(),
                    None => vec![f64::NAN; 3],
                })
                .collect();
            let mut rep_cfg = bcfg.clone();
            rep_cfg.seed = derive_seed(cfg.seed, &[0xB0, rep as u64]);
            let report = bootstrap_ci(ds.n(), &rep_cfg, &labels, &point, |w, tag| {
                let mut m = base_menu.clone();
                m.seed = derive_seed(cfg.seed, &[TAG_MENU, rep as u64, tag]);
                let outs = run_menu(&m, &ds, Some(w))?;
                Ok(outs
                    .iter()
                    .flat_map(|o| match &o.result {
                        Ok(r) => vec![Some(r.nde0), Some(r.nie1), Some(r.te)],
                        Err(_) => vec![None, None, None],
                    })
                    .collect())
            })?;
            let mut per_est = Vec::with_capacity(selected.len());
            for (ei, est) in estimates.iter().enumerate() {
                if est.is_none() {
                    per_est.push(None);
                    continue;
                }
                let mut flags = [false; 3];
                let mut ok = true;
                for k in 0..3 {
                    let iv = &report.intervals[ei * 3 + k];
                    if iv.lower.is_nan() || iv.unreliable {
                        ok = false;
                        break;
                    }
                    flags[k] = iv.lower <= truth_by_effect[k] && truth_by_effect[k] <= iv.upper;
                }
                per_est.push(if ok { Some(flags) } else { None });
            }
            Some(per_est)
        }
    };

    Ok(RepOutcome { estimates, covered })
}

pub mod presets;
