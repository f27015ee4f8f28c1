//! Menu orchestration: shared component fits and row evaluation.
//!
//! Components that several rows consume (the propensity model, the weight
//! sets, the conditional outcome models, the mediator densities) are fitted
//! once per run and reused, so every row is computed from identical inputs.
//! A failing component surfaces as an error entry on the rows that need it;
//! the rest of the menu still runs.

use rand_chacha::ChaCha12Rng;

use crate::data::{subsample, Dataset, SampleView, Which};
use crate::error::{Error, Result};
use crate::formula::FormulaSpec;
use crate::glm::{self, Family, FittedModel};
use crate::meddensity::{self, FactorizedDensity, FittedOn};
use crate::rng::substream;
use crate::weights::{self, WeightSet};

use super::ops::{self, CadjArm, MediatorDraw};
use super::{
    registry, EstimateReport, EstimatorInfo, EstimatorOutcome, ReportDiagnostics, RowKind,
};

/// How the cross-world weights are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightsMethod {
    /// Density ratio times inverse propensity.
    Expr1,
    /// Exposure odds given covariates and mediators times inverse probability.
    Expr2,
    /// Stacked-sample membership odds against the pseudo control sample.
    Expr3,
}

/// The model formulas a run works from. Fields may stay `None` when no
/// selected estimator needs them.
#[derive(Debug, Clone, Default)]
pub struct MenuFormulas {
    /// Exposure given covariates (the propensity model).
    pub propensity: Option<FormulaSpec>,
    /// Exposure given covariates and mediators.
    pub exposure_cm: Option<FormulaSpec>,
    /// Outcome given covariates, treated arm.
    pub outcome_c_treated: Option<FormulaSpec>,
    /// Outcome given covariates, control arm.
    pub outcome_c_control: Option<FormulaSpec>,
    /// Outcome given covariates and mediators, treated arm.
    pub outcome_cm_treated: Option<FormulaSpec>,
    /// Cross-world outcome given covariates (second-stage regressions).
    pub crossworld_c: Option<FormulaSpec>,
    /// Individual direct-effect proxy given covariates.
    pub nde_c: Option<FormulaSpec>,
    /// Working model covariate terms (arm indicators are added internally).
    pub working: Option<FormulaSpec>,
    /// Mediator factor order for the factorized density.
    pub mediator_order: Vec<String>,
    /// One density factor formula per mediator, aligned with the order.
    pub mediator_factors: Vec<FormulaSpec>,
}

/// Formula strings as they appear in config files; [`FormulaSet::parse`]
/// turns them into a [`MenuFormulas`].
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormulaSet {
    pub propensity: Option<String>,
    pub exposure_cm: Option<String>,
    pub outcome_c_treated: Option<String>,
    pub outcome_c_control: Option<String>,
    pub outcome_cm_treated: Option<String>,
    pub crossworld_c: Option<String>,
    pub nde_c: Option<String>,
    pub working: Option<String>,
    #[serde(default)]
    pub mediator_order: Vec<String>,
    #[serde(default)]
    pub mediator_factors: Vec<String>,
}

impl FormulaSet {
    pub fn parse(&self) -> Result<MenuFormulas> {
        let parse_opt = |s: &Option<String>, what: &str| -> Result<Option<FormulaSpec>> {
            match s {
                None => Ok(None),
                Some(text) => crate::formula::parse_formula(text)
                    .map(Some)
                    .map_err(|e| Error::InvalidConfig(format!("{what} formula: {e}"))),
            }
        };
        let mut mediator_factors = Vec::with_capacity(self.mediator_factors.len());
        for (i, text) in self.mediator_factors.iter().enumerate() {
            mediator_factors.push(
                crate::formula::parse_formula(text)
                    .map_err(|e| Error::InvalidConfig(format!("mediator factor {i}: {e}")))?,
            );
        }
        Ok(MenuFormulas {
            propensity: parse_opt(&self.propensity, "propensity")?,
            exposure_cm: parse_opt(&self.exposure_cm, "exposure_cm")?,
            outcome_c_treated: parse_opt(&self.outcome_c_treated, "outcome_c_treated")?,
            outcome_c_control: parse_opt(&self.outcome_c_control, "outcome_c_control")?,
            outcome_cm_treated: parse_opt(&self.outcome_cm_treated, "outcome_cm_treated")?,
            crossworld_c: parse_opt(&self.crossworld_c, "crossworld_c")?,
            nde_c: parse_opt(&self.nde_c, "nde_c")?,
            working: parse_opt(&self.working, "working")?,
            mediator_order: self.mediator_order.clone(),
            mediator_factors,
        })
    }
}

/// Which menu rows to run.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum Selection {
    #[default]
    All,
    Ids(Vec<String>),
}

/// Configuration of one menu run.
#[derive(Debug, Clone)]
pub struct MenuConfig {
    pub formulas: MenuFormulas,
    pub weights_method: WeightsMethod,
    pub selection: Selection,
    /// Mediator-simulation replicates for the fuMsimYpred rows.
    pub nsim: usize,
    /// Exact lattice summation instead of simulation (all-binary mediators).
    pub msim_exact: bool,
    pub seed: u64,
    /// Joint three-arm fit for the psxCadj row (separate two-arm fits
    /// otherwise).
    pub cadj_joint: bool,
    /// Optional weight cap; capped unit counts are reported loudly.
    pub weight_cap: Option<f64>,
}

impl MenuConfig {
    pub fn new(formulas: MenuFormulas) -> Self {
        MenuConfig {
            formulas,
            weights_method: WeightsMethod::Expr2,
            selection: Selection::All,
            nsim: 100,
            msim_exact: false,
            seed: 0,
            cadj_joint: false,
            weight_cap: None,
        }
    }

    fn selected(&self) -> Result<Vec<&'static EstimatorInfo>> {
        match &self.selection {
            Selection::All => Ok(registry().iter().collect()),
            Selection::Ids(ids) => {
                let mut out = Vec::with_capacity(ids.len());
                for id in ids {
                    out.push(super::find(id)?);
                }
                if out.is_empty() {
                    return Err(Error::InvalidConfig("estimator selection is empty".into()));
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Needs {
    w1w0: bool,
    wx: bool,
    wsx: bool,
    yc_ss: bool,
    yc_ps: bool,
    ycm1_s1: bool,
    ycm1_px: bool,
    dens_s0: bool,
    dens_p0: bool,
    working: bool,
    nde: bool,
    crossworld: bool,
}

fn needs_of(kinds: &[RowKind], method: WeightsMethod) -> Needs {
    use RowKind::*;
    let mut n = Needs::default();
    for kind in kinds {
        match kind {
            PosPsYobsPxYobs => {
                n.w1w0 = true;
                n.wx = true;
            }
            PosPsYobsP0YpredS1 => {
                n.w1w0 = true;
                n.ycm1_s1 = true;
            }
            PosPsYobsP0YpredPx => {
                n.w1w0 = true;
                n.wx = true;
                n.ycm1_px = true;
            }
            PosFuYpredSsP0YpredS1 => {
                n.w1w0 = true;
                n.yc_ss = true;
                n.ycm1_s1 = true;
            }
            PosFuYpredPsP0YpredPx => {
                n.w1w0 = true;
                n.wx = true;
                n.yc_ps = true;
                n.ycm1_px = true;
            }
            PosFuYpredSsFuYpredSx => {
                n.yc_ss = true;
                n.wsx = true;
                n.crossworld = true;
            }
            PosFuYpredPsFuYpredPx => {
                n.w1w0 = true;
                n.wx = true;
                n.yc_ps = true;
                n.crossworld = true;
            }
            PosFuYpredSsFuY2predS1s0 => {
                n.yc_ss = true;
                n.ycm1_s1 = true;
                n.crossworld = true;
            }
            PosFuYpredPsFuY2predPxp0 => {
                n.w1w0 = true;
                n.wx = true;
                n.yc_ps = true;
                n.ycm1_px = true;
                n.crossworld = true;
            }
            PosFuYpredSsFuMsimS0s1 => {
                n.yc_ss = true;
                n.ycm1_s1 = true;
                n.dens_s0 = true;
            }
            PosFuYpredPsFuMsimP0px => {
                n.w1w0 = true;
                n.wx = true;
                n.yc_ps = true;
                n.ycm1_px = true;
                n.dens_p0 = true;
            }
            EffPsxCadj => {
                n.w1w0 = true;
                n.wx = true;
                n.working = true;
            }
            EffNdeS1s0TePsCadj => {
                n.w1w0 = true;
                n.ycm1_s1 = true;
                n.nde = true;
                n.working = true;
            }
            EffNdeS1s0NiePsYpredS1Cadj => {
                n.w1w0 = true;
                n.ycm1_s1 = true;
                n.nde = true;
                n.working = true;
            }
            EffNdePxp0NiePsYpredPxCadj => {
                n.w1w0 = true;
                n.wx = true;
                n.ycm1_px = true;
                n.nde = true;
                n.working = true;
            }
            EffNdeS1s0TeFuYpredSs => {
                n.yc_ss = true;
                n.ycm1_s1 = true;
                n.nde = true;
            }
            EffNdePxp0TeFuYpredPs => {
                n.w1w0 = true;
                n.wx = true;
                n.yc_ps = true;
                n.ycm1_px = true;
                n.nde = true;
            }
        }
    }
    if n.wx {
        // Every estimation route for the cross-world weights builds on the
        // inverse probability weights or the propensity.
        n.w1w0 = true;
        if method == WeightsMethod::Expr1 {
            n.dens_s0 = true;
        }
    }
    n
}

/// Validate that every selected estimator's required formulas are present.
/// Returns all gaps at once (empty = valid).
pub fn validate_requirements(config: &MenuConfig) -> Vec<String> {
    let mut gaps = Vec::new();
    let selected = match config.selected() {
        Ok(s) => s,
        Err(e) => return vec![e.to_string()],
    };
    let kinds: Vec<RowKind> = selected.iter().map(|e| e.kind).collect();
    let needs = needs_of(&kinds, config.weights_method);
    let f = &config.formulas;
    let mut require = |ok: bool, what: &str, who: &str| {
        if !ok {
            gaps.push(format!("missing {what} formula (required by {who})"));
        }
    };
    if needs.w1w0 {
        require(f.propensity.is_some(), "propensity", "weighting estimators");
    }
    if needs.wx {
        match config.weights_method {
            WeightsMethod::Expr1 => {
                require(
                    !f.mediator_factors.is_empty(),
                    "mediator density factor",
                    "cross-world weights (expr1)",
                );
            }
            WeightsMethod::Expr2 | WeightsMethod::Expr3 => {
                require(
                    f.exposure_cm.is_some(),
                    "exposure-given-covariates-and-mediators",
                    "cross-world weights",
                );
            }
        }
    }
    if needs.wsx {
        require(
            f.exposure_cm.is_some(),
            "exposure-given-covariates-and-mediators",
            "the cross-world subsample weights",
        );
    }
    if needs.yc_ss || needs.yc_ps {
        require(
            f.outcome_c_treated.is_some(),
            "treated-arm outcome-given-covariates",
            "fuYpred",
        );
        require(
            f.outcome_c_control.is_some(),
            "control-arm outcome-given-covariates",
            "fuYpred",
        );
    }
    if needs.ycm1_s1 || needs.ycm1_px {
        require(
            f.outcome_cm_treated.is_some(),
            "outcome-given-covariates-and-mediators",
            "cross-world outcome prediction",
        );
    }
    if needs.crossworld {
        require(
            f.crossworld_c.is_some(),
            "cross-world-outcome-given-covariates",
            "fuYpred/fuY2pred",
        );
    }
    if needs.nde {
        require(
            f.nde_c.is_some(),
            "direct-effect-proxy-given-covariates",
            "fuNDEpred",
        );
    }
    if needs.working {
        require(
            f.working.is_some(),
            "working model",
            "covariate-adjustment estimators",
        );
    }
    if needs.dens_s0 || needs.dens_p0 {
        if f.mediator_order.is_empty() || f.mediator_factors.is_empty() {
            gaps.push("missing mediator density factors (required by fuMsimYpred)".into());
        } else if f.mediator_order.len() != f.mediator_factors.len() {
            gaps.push("mediator order and factor formulas have different lengths".into());
        }
    }
    gaps
}

macro_rules! slot {
    ($cond:expr, $body:expr) => {
        if $cond {
            Some($body)
        } else {
            None
        }
    };
}

type Slot<T> = Option<Result<T>>;

/// Components fitted once per run and shared across rows.
pub struct SharedFits {
    pub outcome_family: Family,
    pub outcome_binary: bool,
    pub propensity: Slot<(FittedModel, Vec<f64>)>,
    pub w1: Slot<WeightSet>,
    pub w0: Slot<WeightSet>,
    pub exposure_cm: Slot<FittedModel>,
    pub wx: Slot<WeightSet>,
    pub wsx: Slot<WeightSet>,
    pub yc1_ss: Slot<FittedModel>,
    pub yc0_ss: Slot<FittedModel>,
    pub yc1_ps: Slot<FittedModel>,
    pub yc0_ps: Slot<FittedModel>,
    pub ycm1_s1: Slot<FittedModel>,
    pub ycm1_px: Slot<FittedModel>,
    pub pred_ctrl_s1: Slot<Vec<f64>>,
    pub pred_ctrl_px: Slot<Vec<f64>>,
    pub dens_s0: Slot<FactorizedDensity>,
    pub dens_s1: Slot<FactorizedDensity>,
    pub dens_p0: Slot<FactorizedDensity>,
    /// Loud notes, e.g. weight capping counts.
    pub notes: Vec<String>,
}

fn take<'s, T>(slot: &'s Slot<T>, what: &str) -> Result<&'s T> {
    match slot {
        Some(Ok(v)) => Ok(v),
        Some(Err(e)) => Err(e.clone()),
        None => Err(Error::InvalidConfig(format!(
            "component `{what}` was not fitted"
        ))),
    }
}

fn missing(what: &str) -> Error {
    Error::InvalidConfig(format!("missing {what} formula"))
}

impl SharedFits {
    /// Fit every shared component the selected rows need.
    pub fn compute(config: &MenuConfig, ds: &Dataset, base: Option<&[f64]>) -> Result<SharedFits> {
        let selected = config.selected()?;
        let kinds: Vec<RowKind> = selected.iter().map(|e| e.kind).collect();
        let needs = needs_of(&kinds, config.weights_method);
        let f = &config.formulas;
        let outcome_binary = ds.outcome_is_binary()?;
        let outcome_family = if outcome_binary {
            Family::BinomialLogit
        } else {
            Family::GaussianIdentity
        };
        let mut notes = Vec::new();

        let propensity: Slot<(FittedModel, Vec<f64>)> = slot!(needs.w1w0, {
            f.propensity
                .as_ref()
                .ok_or_else(|| missing("propensity"))
                .and_then(|spec| weights::fit_propensity(spec, ds, base))
        });

        let mut w1: Slot<WeightSet> = None;
        let mut w0: Slot<WeightSet> = None;
        if needs.w1w0 {
            let pair = match propensity.as_ref().unwrap() {
                Ok((_, probs)) => weights::ipw_weights(probs, ds),
                Err(e) => Err(e.clone()),
            };
            match pair {
                Ok((a, b)) => {
                    let (a, b) = match config.weight_cap {
                        Some(cap) => {
                            let (a, na) = a.capped(cap);
                            let (b, nb) = b.capped(cap);
                            if na + nb > 0 {
                                notes.push(format!(
                                    "weight cap {cap} applied: {na} treated and {nb} control units capped"
                                ));
                            }
                            (a, b)
                        }
                        None => (a, b),
                    };
                    w1 = Some(Ok(a));
                    w0 = Some(Ok(b));
                }
                Err(e) => {
                    w1 = Some(Err(e.clone()));
                    w0 = Some(Err(e));
                }
            }
        }

        let need_acm = needs.wsx
            || (needs.wx
                && matches!(
                    config.weights_method,
                    WeightsMethod::Expr2 | WeightsMethod::Expr3
                ));
        let exposure_cm: Slot<FittedModel> = slot!(need_acm, {
            f.exposure_cm
                .as_ref()
                .ok_or_else(|| missing("exposure-given-covariates-and-mediators"))
                .and_then(|spec| glm::fit(spec, &SampleView::full(ds), Family::BinomialLogit, base))
        });

        let fit_density_on =
            |fitted_on: FittedOn, sample: &SampleView<'_>| -> Result<FactorizedDensity> {
                if f.mediator_order.is_empty() {
                    return Err(missing("mediator density factor"));
                }
                meddensity::fit_density(
                    &f.mediator_order,
                    &f.mediator_factors,
                    sample,
                    fitted_on,
                    base,
                )
            };

        let need_dens_s0 =
            needs.dens_s0 || (needs.wx && config.weights_method == WeightsMethod::Expr1);
        let dens_s0: Slot<FactorizedDensity> = slot!(need_dens_s0, {
            fit_density_on(FittedOn::ControlSubsample, &subsample(ds, Which::Control))
        });
        let dens_s1: Slot<FactorizedDensity> =
            slot!(needs.wx && config.weights_method == WeightsMethod::Expr1, {
                fit_density_on(FittedOn::TreatedSubsample, &subsample(ds, Which::Treated))
            });

        let wx: Slot<WeightSet> = slot!(needs.wx, {
            (|| {
                let (_, probs) = take(&propensity, "propensity")?;
                let set = match config.weights_method {
                    WeightsMethod::Expr1 => {
                        let d0 = take(&dens_s0, "mediator density (control)")?;
                        let d1 = take(&dens_s1, "mediator density (treated)")?;
                        let treated = subsample(ds, Which::Treated);
                        let f0 = meddensity::density_at(d0, &treated)?;
                        let f1 = meddensity::density_at(d1, &treated)?;
                        weights::crossworld_expr1(probs, &f0, &f1, ds)?
                    }
                    WeightsMethod::Expr2 => {
                        let acm = take(&exposure_cm, "exposure-given-covariates-and-mediators")?;
                        weights::crossworld_expr2(probs, acm, ds)?
                    }
                    WeightsMethod::Expr3 => {
                        let acm_spec = f
                            .exposure_cm
                            .as_ref()
                            .ok_or_else(|| missing("exposure-given-covariates-and-mediators"))?;
                        let stack_spec = FormulaSpec {
                            response: "__membership".into(),
                            terms: acm_spec.terms.clone(),
                        };
                        let w0 = take(&w0, "pseudo-control weights")?;
                        weights::crossworld_expr3(&stack_spec, w0, ds, base)?
                    }
                };
                match config.weight_cap {
                    Some(cap) => {
                        let (set, n) = set.capped(cap);
                        if n > 0 {
                            notes.push(format!(
                                "weight cap {cap} applied: {n} cross-world weights capped"
                            ));
                        }
                        Ok(set)
                    }
                    None => Ok(set),
                }
            })()
        });

        let wsx: Slot<WeightSet> = slot!(needs.wsx, {
            take(&exposure_cm, "exposure-given-covariates-and-mediators")
                .and_then(|acm| weights::sx_weights(acm, ds))
        });

        let fit_outcome = |spec: &Option<FormulaSpec>,
                           what: &str,
                           sample: Result<SampleView<'_>>|
         -> Result<FittedModel> {
            let spec = spec.as_ref().ok_or_else(|| missing(what))?;
            glm::fit(spec, &sample?, outcome_family, base)
        };

        let yc1_ss: Slot<FittedModel> = slot!(needs.yc_ss, {
            fit_outcome(
                &f.outcome_c_treated,
                "treated-arm outcome",
                Ok(subsample(ds, Which::Treated)),
            )
        });
        let yc0_ss: Slot<FittedModel> = slot!(needs.yc_ss, {
            fit_outcome(
                &f.outcome_c_control,
                "control-arm outcome",
                Ok(subsample(ds, Which::Control)),
            )
        });
        let yc1_ps: Slot<FittedModel> = slot!(needs.yc_ps, {
            fit_outcome(
                &f.outcome_c_treated,
                "treated-arm outcome",
                take(&w1, "pseudo-treated weights").map(|w| w.pseudo_sample(ds)),
            )
        });
        let yc0_ps: Slot<FittedModel> = slot!(needs.yc_ps, {
            fit_outcome(
                &f.outcome_c_control,
                "control-arm outcome",
                take(&w0, "pseudo-control weights").map(|w| w.pseudo_sample(ds)),
            )
        });
        let ycm1_s1: Slot<FittedModel> = slot!(needs.ycm1_s1, {
            fit_outcome(
                &f.outcome_cm_treated,
                "outcome-given-covariates-and-mediators",
                Ok(subsample(ds, Which::Treated)),
            )
        });
        let ycm1_px: Slot<FittedModel> = slot!(needs.ycm1_px, {
            fit_outcome(
                &f.outcome_cm_treated,
                "outcome-given-covariates-and-mediators",
                take(&wx, "cross-world weights").map(|w| w.pseudo_sample(ds)),
            )
        });

        let predict_ctrl = |model: &Slot<FittedModel>, what: &str| -> Result<Vec<f64>> {
            let m = take(model, what)?;
            glm::predict(m, &subsample(ds, Which::Control))
        };
        let pred_ctrl_s1: Slot<Vec<f64>> = slot!(
            needs.ycm1_s1,
            predict_ctrl(&ycm1_s1, "outcome model (treated subsample)")
        );
        let pred_ctrl_px: Slot<Vec<f64>> = slot!(
            needs.ycm1_px,
            predict_ctrl(&ycm1_px, "outcome model (pseudo cross-world)")
        );

        let dens_p0: Slot<FactorizedDensity> = slot!(needs.dens_p0, {
            take(&w0, "pseudo-control weights")
                .and_then(|w| fit_density_on(FittedOn::PseudoControl, &w.pseudo_sample(ds)))
        });

        Ok(SharedFits {
            outcome_family,
            outcome_binary,
            propensity,
            w1,
            w0,
            exposure_cm,
            wx,
            wsx,
            yc1_ss,
            yc0_ss,
            yc1_ps,
            yc0_ps,
            ycm1_s1,
            ycm1_px,
            pred_ctrl_s1,
            pred_ctrl_px,
            dens_s0,
            dens_s1,
            dens_p0,
            notes,
        })
    }
}

struct RowCtx<'a> {
    ds: &'a Dataset,
    base: Option<&'a [f64]>,
    config: &'a MenuConfig,
    fits: &'a SharedFits,
}

impl<'a> RowCtx<'a> {
    fn diagnostics(
        &self,
        weight_sets: &[&WeightSet],
        models: &[(&str, &FittedModel)],
    ) -> ReportDiagnostics {
        ReportDiagnostics {
            ess: weight_sets
                .iter()
                .map(|w| {
                    (
                        format!("{:?}", w.target).to_lowercase(),
                        weights::effective_sample_size(&w.values),
                    )
                })
                .collect(),
            converged: models
                .iter()
                .map(|(n, m)| (n.to_string(), m.summary.converged))
                .collect(),
        }
    }

    fn msim_rng(&self, row_index: usize) -> ChaCha12Rng {
        substream(self.config.seed, &[0x4D51, row_index as u64])
    }

    fn msim_draw(&self, row_index: usize) -> MediatorDraw {
        if self.config.msim_exact {
            MediatorDraw::ExactLattice
        } else {
            MediatorDraw::Simulate {
                nsim: self.config.nsim,
                rng: self.msim_rng(row_index),
            }
        }
    }

    fn crossworld_spec(&self) -> Result<&FormulaSpec> {
        self.config
            .formulas
            .crossworld_c
            .as_ref()
            .ok_or_else(|| missing("cross-world-outcome-given-covariates"))
    }

    fn nde_spec(&self) -> Result<&FormulaSpec> {
        self.config
            .formulas
            .nde_c
            .as_ref()
            .ok_or_else(|| missing("direct-effect-proxy"))
    }

    fn working_spec(&self) -> Result<&FormulaSpec> {
        self.config
            .formulas
            .working
            .as_ref()
            .ok_or_else(|| missing("working model"))
    }

    fn working_family(&self) -> Family {
        // Nonlinear working models predict on the full sample; linear ones
        // take arm coefficients and are reserved for continuous outcomes.
        if self.fits.outcome_binary {
            Family::BinomialLogit
        } else {
            Family::GaussianIdentity
        }
    }

    fn arm_observed(&self, name: &str, w: &WeightSet) -> Result<CadjArm> {
        let y = self.ds.outcome()?;
        Ok(CadjArm {
            name: name.into(),
            rows: w.rows.clone(),
            weights: w.values.clone(),
            response: w.rows.iter().map(|&i| y[i]).collect(),
        })
    }

    fn arm_substituted(&self, name: &str, w: &WeightSet, response: Vec<f64>) -> CadjArm {
        CadjArm {
            name: name.into(),
            rows: w.rows.clone(),
            weights: w.values.clone(),
            response,
        }
    }
}

fn pos_report(
    info: &EstimatorInfo,
    ey1: f64,
    ey0: f64,
    ey1m0: f64,
    components: &[&str],
    diagnostics: ReportDiagnostics,
) -> EstimateReport {
    let effects = ops::combine_pos(ey1, ey0, ey1m0);
    EstimateReport {
        estimator: info.id.to_string(),
        robustness: info.robustness,
        ey1: Some(ey1),
        ey0: Some(ey0),
        ey1m0: Some(ey1m0),
        nde0: effects.nde0,
        nie1: effects.nie1,
        te: effects.te,
        components_used: components.iter().map(|s| s.to_string()).collect(),
        diagnostics,
    }
}

fn effect_report(
    info: &EstimatorInfo,
    nde0: f64,
    nie1: f64,
    components: &[&str],
    diagnostics: ReportDiagnostics,
) -> EstimateReport {
    EstimateReport {
        estimator: info.id.to_string(),
        robustness: info.robustness,
        ey1: None,
        ey0: None,
        ey1m0: None,
        nde0,
        nie1,
        te: nde0 + nie1,
        components_used: components.iter().map(|s| s.to_string()).collect(),
        diagnostics,
    }
}

fn evaluate_row(
    info: &EstimatorInfo,
    row_index: usize,
    ctx: &RowCtx<'_>,
) -> Result<EstimateReport> {
    let ds = ctx.ds;
    let base = ctx.base;
    let fits = ctx.fits;
    let family = fits.outcome_family;
    match info.kind {
        RowKind::PosPsYobsPxYobs => {
            let w1 = take(&fits.w1, "w1")?;
            let w0 = take(&fits.w0, "w0")?;
            let wx = take(&fits.wx, "wx")?;
            let (ey1, ey0) = ops::reg_ps_yobs(ds, w1, w0, base)?;
            let ey1m0 = ops::cross_px_yobs(ds, wx, base)?;
            Ok(pos_report(
                info,
                ey1,
                ey0,
                ey1m0,
                &["w1", "w0", "wx"],
                ctx.diagnostics(&[w1, w0, wx], &[]),
            ))
        }
        RowKind::PosPsYobsP0YpredS1 | RowKind::PosPsYobsP0YpredPx => {
            let px_variant = info.kind == RowKind::PosPsYobsP0YpredPx;
            let w1 = take(&fits.w1, "w1")?;
            let w0 = take(&fits.w0, "w0")?;
            let (model_slot, pred_slot, label) = if px_variant {
                (&fits.ycm1_px, &fits.pred_ctrl_px, "ycm1_px")
            } else {
                (&fits.ycm1_s1, &fits.pred_ctrl_s1, "ycm1_s1")
            };
            let model = take(model_slot, label)?;
            let preds = take(pred_slot, label)?;
            let (ey1, ey0) = ops::reg_ps_yobs(ds, w1, w0, base)?;
            let ey1m0 = ops::cross_p0_ypred(ds, preds, w0, base)?;
            Ok(pos_report(
                info,
                ey1,
                ey0,
                ey1m0,
                &["w1", "w0", label],
                ctx.diagnostics(&[w1, w0], &[(label, model)]),
            ))
        }
        RowKind::PosFuYpredSsP0YpredS1 => {
            let w0 = take(&fits.w0, "w0")?;
            let m1 = take(&fits.yc1_ss, "yc1_ss")?;
            let m0 = take(&fits.yc0_ss, "yc0_ss")?;
            let preds = take(&fits.pred_ctrl_s1, "ycm1_s1")?;
            let model = take(&fits.ycm1_s1, "ycm1_s1")?;
            let (ey1, ey0) = ops::reg_fu_ypred(ds, m1, m0, base)?;
            let ey1m0 = ops::cross_p0_ypred(ds, preds, w0, base)?;
            Ok(pos_report(
                info,
                ey1,
                ey0,
                ey1m0,
                &["w0", "yc1_ss", "yc0_ss", "ycm1_s1"],
                ctx.diagnostics(&[w0], &[("yc1_ss", m1), ("yc0_ss", m0), ("ycm1_s1", model)]),
            ))
        }
        RowKind::PosFuYpredPsP0YpredPx => {
            let w0 = take(&fits.w0, "w0")?;
            let w1 = take(&fits.w1, "w1")?;
            let m1 = take(&fits.yc1_ps, "yc1_ps")?;
            let m0 = take(&fits.yc0_ps, "yc0_ps")?;
            let preds = take(&fits.pred_ctrl_px, "ycm1_px")?;
            let (ey1, ey0) = ops::reg_fu_ypred(ds, m1, m0, base)?;
            let ey1m0 = ops::cross_p0_ypred(ds, preds, w0, base)?;
            Ok(pos_report(
                info,
                ey1,
                ey0,
                ey1m0,
                &["w1", "w0", "wx", "yc1_ps", "yc0_ps", "ycm1_px"],
                ctx.diagnostics(&[w1, w0], &[("yc1_ps", m1), ("yc0_ps", m0)]),
            ))
        }
        RowKind::PosFuYpredSsFuYpredSx | RowKind::PosFuYpredPsFuYpredPx => {
            let px_variant = info.kind == RowKind::PosFuYpredPsFuYpredPx;
            let (m1, m0, wlabel, wset) = if px_variant {
                (
                    take(&fits.yc1_ps, "yc1_ps")?,
                    take(&fits.yc0_ps, "yc0_ps")?,
                    "wx",
                    take(&fits.wx, "wx")?,
                )
            } else {
                (
                    take(&fits.yc1_ss, "yc1_ss")?,
                    take(&fits.yc0_ss, "yc0_ss")?,
                    "wsx",
                    take(&fits.wsx, "wsx")?,
                )
            };
            let (ey1, ey0) = ops::reg_fu_ypred(ds, m1, m0, base)?;
            let (ey1m0, second) =
                ops::cross_fu_ypred(ds, ctx.crossworld_spec()?, family, wset, base)?;
            Ok(pos_report(
                info,
                ey1,
                ey0,
                ey1m0,
                &[wlabel, "yc1", "yc0", "crossworld_c"],
                ctx.diagnostics(&[wset], &[("crossworld_c", &second)]),
            ))
        }
        RowKind::PosFuYpredSsFuY2predS1s0 | RowKind::PosFuYpredPsFuY2predPxp0 => {
            let robust = info.kind == RowKind::PosFuYpredPsFuY2predPxp0;
            let (m1, m0, preds, w0_opt) = if robust {
                (
                    take(&fits.yc1_ps, "yc1_ps")?,
                    take(&fits.yc0_ps, "yc0_ps")?,
                    take(&fits.pred_ctrl_px, "ycm1_px")?,
                    Some(take(&fits.w0, "w0")?),
                )
            } else {
                (
                    take(&fits.yc1_ss, "yc1_ss")?,
                    take(&fits.yc0_ss, "yc0_ss")?,
                    take(&fits.pred_ctrl_s1, "ycm1_s1")?,
                    None,
                )
            };
            let (ey1, ey0) = ops::reg_fu_ypred(ds, m1, m0, base)?;
            let (ey1m0, stage2) =
                ops::cross_fu_y2pred(ds, ctx.crossworld_spec()?, family, preds, w0_opt, base)?;
            let sets: Vec<&WeightSet> = w0_opt.into_iter().collect();
            Ok(pos_report(
                info,
                ey1,
                ey0,
                ey1m0,
                &["yc1", "yc0", "ycm1", "crossworld_c"],
                ctx.diagnostics(&sets, &[("crossworld_c_stage2", &stage2)]),
            ))
        }
        RowKind::PosFuYpredSsFuMsimS0s1 | RowKind::PosFuYpredPsFuMsimP0px => {
            let robust = info.kind == RowKind::PosFuYpredPsFuMsimP0px;
            let (m1, m0, dens, outcome_cm) = if robust {
                (
                    take(&fits.yc1_ps, "yc1_ps")?,
                    take(&fits.yc0_ps, "yc0_ps")?,
                    take(&fits.dens_p0, "dens_p0")?,
                    take(&fits.ycm1_px, "ycm1_px")?,
                )
            } else {
                (
                    take(&fits.yc1_ss, "yc1_ss")?,
                    take(&fits.yc0_ss, "yc0_ss")?,
                    take(&fits.dens_s0, "dens_s0")?,
                    take(&fits.ycm1_s1, "ycm1_s1")?,
                )
            };
            let (ey1, ey0) = ops::reg_fu_ypred(ds, m1, m0, base)?;
            let ey1m0 =
                ops::cross_fu_msim_ypred(ds, dens, outcome_cm, ctx.msim_draw(row_index), base)?;
            Ok(pos_report(
                info,
                ey1,
                ey0,
                ey1m0,
                &["yc1", "yc0", "meddensity", "ycm1"],
                ctx.diagnostics(&[], &[("ycm1", outcome_cm)]),
            ))
        }
        RowKind::EffPsxCadj => {
            let w1 = take(&fits.w1, "w1")?;
            let w0 = take(&fits.w0, "w0")?;
            let wx = take(&fits.wx, "wx")?;
            let working = ctx.working_spec()?;
            let wf = ctx.working_family();
            let p0 = ctx.arm_observed("p0", w0)?;
            let px = ctx.arm_observed("px", wx)?;
            let p1 = ctx.arm_observed("p1", w1)?;
            let (nde0, nie1) = if ctx.config.cadj_joint {
                let contrasts = ops::cadj_effect(ds, &[p0, px, p1], working, wf, base)?;
                (contrasts[0], contrasts[1] - contrasts[0])
            } else {
                let nde =
                    ops::cadj_effect(ds, &[p0, ctx.arm_observed("px", wx)?], working, wf, base)?[0];
                let nie = ops::cadj_effect(ds, &[px, p1], working, wf, base)?[0];
                (nde, nie)
            };
            Ok(effect_report(
                info,
                nde0,
                nie1,
                &["w1", "w0", "wx", "working"],
                ctx.diagnostics(&[w1, w0, wx], &[]),
            ))
        }
        RowKind::EffNdeS1s0TePsCadj => {
            let w1 = take(&fits.w1, "w1")?;
            let w0 = take(&fits.w0, "w0")?;
            let preds = take(&fits.pred_ctrl_s1, "ycm1_s1")?;
            let nde0 = ops::nde_fu_ndepred(ds, ctx.nde_spec()?, preds, None, base)?;
            let te = ops::cadj_effect(
                ds,
                &[ctx.arm_observed("p0", w0)?, ctx.arm_observed("p1", w1)?],
                ctx.working_spec()?,
                ctx.working_family(),
                base,
            )?[0];
            let nie1 = te - nde0;
            Ok(effect_report(
                info,
                nde0,
                nie1,
                &["w1", "w0", "ycm1_s1", "nde_c", "working"],
                ctx.diagnostics(&[w1, w0], &[]),
            ))
        }
        RowKind::EffNdeS1s0NiePsYpredS1Cadj | RowKind::EffNdePxp0NiePsYpredPxCadj => {
            let robust = info.kind == RowKind::EffNdePxp0NiePsYpredPxCadj;
            let w1 = take(&fits.w1, "w1")?;
            let w0 = take(&fits.w0, "w0")?;
            let (preds, w0_opt) = if robust {
                (
                    take(&fits.pred_ctrl_px, "ycm1_px")?,
                    Some(take(&fits.w0, "w0")?),
                )
            } else {
                (take(&fits.pred_ctrl_s1, "ycm1_s1")?, None)
            };
            let nde0 = ops::nde_fu_ndepred(ds, ctx.nde_spec()?, preds, w0_opt, base)?;
            // Two-arm trial: pseudo control with substituted cross-world
            // outcome against pseudo treated with the observed outcome.
            let sub = ctx.arm_substituted("p0_ypred", w0, preds.clone());
            let nie1 = ops::cadj_effect(
                ds,
                &[sub, ctx.arm_observed("p1", w1)?],
                ctx.working_spec()?,
                ctx.working_family(),
                base,
            )?[0];
            Ok(effect_report(
                info,
                nde0,
                nie1,
                &[
                    "w1",
                    "w0",
                    if robust { "ycm1_px" } else { "ycm1_s1" },
                    "nde_c",
                    "working",
                ],
                ctx.diagnostics(&[w1, w0], &[]),
            ))
        }
        RowKind::EffNdeS1s0TeFuYpredSs | RowKind::EffNdePxp0TeFuYpredPs => {
            let robust = info.kind == RowKind::EffNdePxp0TeFuYpredPs;
            let (m1, m0, preds, w0_opt) = if robust {
                (
                    take(&fits.yc1_ps, "yc1_ps")?,
                    take(&fits.yc0_ps, "yc0_ps")?,
                    take(&fits.pred_ctrl_px, "ycm1_px")?,
                    Some(take(&fits.w0, "w0")?),
                )
            } else {
                (
                    take(&fits.yc1_ss, "yc1_ss")?,
                    take(&fits.yc0_ss, "yc0_ss")?,
                    take(&fits.pred_ctrl_s1, "ycm1_s1")?,
                    None,
                )
            };
            let nde0 = ops::nde_fu_ndepred(ds, ctx.nde_spec()?, preds, w0_opt, base)?;
            let (ey1, ey0) = ops::reg_fu_ypred(ds, m1, m0, base)?;
            let te = ey1 - ey0;
            let nie1 = te - nde0;
            let sets: Vec<&WeightSet> = w0_opt.into_iter().collect();
            Ok(effect_report(
                info,
                nde0,
                nie1,
                &["yc1", "yc0", "ycm1", "nde_c"],
                ctx.diagnostics(&sets, &[("yc1", m1), ("yc0", m0)]),
            ))
        }
    }
}

/// Run the selected estimator menu over shared fitted components.
///
/// Per-estimator failures become error entries; they never abort the run.
/// `base` carries bootstrap observation weights (None for the point
/// estimate).
pub fn run_menu(
    config: &MenuConfig,
    ds: &Dataset,
    base: Option<&[f64]>,
) -> Result<Vec<EstimatorOutcome>> {
    run_menu_full(config, ds, base).map(|(outcomes, _)| outcomes)
}

/// Like [`run_menu`], also returning the shared fits for report serialization.
pub fn run_menu_full(
    config: &MenuConfig,
    ds: &Dataset,
    base: Option<&[f64]>,
) -> Result<(Vec<EstimatorOutcome>, SharedFits)> {
    if let Some(b) = base {
        if b.len() != ds.n() {
            return Err(Error::InvalidConfig(
                "base weight vector length mismatch".into(),
            ));
        }
    }
    let selected = config.selected()?;
    let fits = SharedFits::compute(config, ds, base)?;
    let ctx = RowCtx {
        ds,
        base,
        config,
        fits: &fits,
    };
    let mut out = Vec::with_capacity(selected.len());
    for info in selected {
        let row_index = registry()
            .iter()
            .position(|e| e.id == info.id)
            .expect("registry entry");
        let result = evaluate_row(info, row_index, &ctx);
        out.push(EstimatorOutcome {
            id: info.id.to_string(),
            result,
        });
    }
    Ok((out, fits))
}

/// Serializable summary of one shared model fit.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ModelSummary {
    pub label: String,
    pub formula: String,
    pub family: Family,
    pub coefficients: Vec<(String, f64)>,
    pub converged: bool,
    pub iterations: usize,
    pub mean_recovery_residual: f64,
}

fn summarize(label: &str, model: &FittedModel) -> ModelSummary {
    ModelSummary {
        label: label.to_string(),
        formula: model.spec.to_string(),
        family: model.family,
        coefficients: model
            .column_names
            .iter()
            .cloned()
            .zip(model.coefficients.iter().copied())
            .collect(),
        converged: model.summary.converged,
        iterations: model.summary.iterations,
        mean_recovery_residual: model.summary.mean_recovery_residual,
    }
}

impl SharedFits {
    /// Summaries of every successfully fitted shared model.
    pub fn model_summaries(&self) -> Vec<ModelSummary> {
        let mut out = Vec::new();
        if let Some(Ok((m, _))) = &self.propensity {
            out.push(summarize("propensity", m));
        }
        for (label, slot) in [
            ("exposure_cm", &self.exposure_cm),
            ("outcome_c_treated_ss", &self.yc1_ss),
            ("outcome_c_control_ss", &self.yc0_ss),
            ("outcome_c_treated_ps", &self.yc1_ps),
            ("outcome_c_control_ps", &self.yc0_ps),
            ("outcome_cm_treated_s1", &self.ycm1_s1),
            ("outcome_cm_treated_px", &self.ycm1_px),
        ] {
            if let Some(Ok(m)) = slot {
                out.push(summarize(label, m));
            }
        }
        for (label, slot) in [
            ("meddensity_s0", &self.dens_s0),
            ("meddensity_s1", &self.dens_s1),
            ("meddensity_p0", &self.dens_p0),
        ] {
            if let Some(Ok(fd)) = slot {
                for factor in &fd.factors {
                    out.push(summarize(
                        &format!("{label}.{}", factor.mediator),
                        &factor.model,
                    ));
                }
            }
        }
        out
    }

    /// Diagnostics of every successfully computed weight set.
    pub fn weight_diagnostics(&self) -> Vec<crate::weights::WeightDiagnostics> {
        [&self.w1, &self.w0, &self.wx, &self.wsx]
            .into_iter()
            .filter_map(|slot| match slot {
                Some(Ok(w)) => Some(w.diagnostics()),
                _ => None,
            })
            .collect()
    }
}
