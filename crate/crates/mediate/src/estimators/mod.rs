//! The estimator menu.
//!
//! Point estimators come in two families. The potential-outcome rows combine
//! an estimator of E[Y1] and E[Y0] (weighting, prediction, or weighted
//! prediction) with an estimator of the cross-world mean E[Y1M0], and derive
//! the effects as NDE0 = E[Y1M0] - E[Y0], NIE1 = E[Y1] - E[Y1M0],
//! TE = NDE0 + NIE1. The direct-effect rows regress an individual-effect
//! proxy on covariates or treat pseudo samples as arms of a mimicked
//! randomized trial with a covariate-adjusting working model.
//!
//! [`registry`] lists every menu row with its robustness ledger: the
//! component subsets that each guarantee consistency, and the components it
//! cannot tolerate being wrong.

mod menu;
mod ops;

pub use menu::{
    run_menu, run_menu_full, validate_requirements, FormulaSet, MenuConfig, MenuFormulas,
    ModelSummary, Selection, SharedFits, WeightsMethod,
};
pub use ops::{
    cadj_effect, combine_pos, cross_fu_msim_ypred, cross_fu_y2pred, cross_fu_ypred, cross_p0_ypred,
    cross_px_yobs, full_sample_mean, nde_fu_ndepred, reg_fu_ypred, reg_ps_yobs, CadjArm,
    MediatorDraw,
};

use crate::error::Result;

/// Robustness class of a menu row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Robustness {
    NonRobust,
    MoreRobust,
    Robust,
}

/// An estimation component that can be correct or inconsistent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Component {
    /// omega1(C) weights.
    W1,
    /// omega0(C) weights.
    W0,
    /// omega_x(C,M) cross-world weights.
    Wx,
    /// The mediator-related factor of omega_x(C,M).
    WxMediatorPart,
    /// omega_sx(C,M) odds weights.
    Wsx,
    /// Conditional mediator density P(M|C,A=0).
    MedDensity,
    /// E[Y|C,A=1].
    OutcomeC1,
    /// E[Y|C,A=0].
    OutcomeC0,
    /// E[Y|C,M,A=1].
    OutcomeCM1,
    /// E[Y1M0|C].
    CrossworldC,
    /// E[NDE0|C].
    NdeC,
}

/// How a menu row is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    PosPsYobsPxYobs,
    PosPsYobsP0YpredS1,
    PosPsYobsP0YpredPx,
    PosFuYpredSsP0YpredS1,
    PosFuYpredPsP0YpredPx,
    PosFuYpredSsFuYpredSx,
    PosFuYpredPsFuYpredPx,
    PosFuYpredSsFuY2predS1s0,
    PosFuYpredPsFuY2predPxp0,
    PosFuYpredSsFuMsimS0s1,
    PosFuYpredPsFuMsimP0px,
    EffPsxCadj,
    EffNdeS1s0TePsCadj,
    EffNdeS1s0NiePsYpredS1Cadj,
    EffNdePxp0NiePsYpredPxCadj,
    EffNdeS1s0TeFuYpredSs,
    EffNdePxp0TeFuYpredPs,
}

impl RowKind {
    /// True for the eleven potential-outcome combination rows.
    pub fn is_pos(&self) -> bool {
        use RowKind::*;
        matches!(
            self,
            PosPsYobsPxYobs
                | PosPsYobsP0YpredS1
                | PosPsYobsP0YpredPx
                | PosFuYpredSsP0YpredS1
                | PosFuYpredPsP0YpredPx
                | PosFuYpredSsFuYpredSx
                | PosFuYpredPsFuYpredPx
                | PosFuYpredSsFuY2predS1s0
                | PosFuYpredPsFuY2predPxp0
                | PosFuYpredSsFuMsimS0s1
                | PosFuYpredPsFuMsimP0px
        )
    }
}

/// Registry entry: identity, robustness class, and the consistency ledger.
#[derive(Debug, Clone)]
pub struct EstimatorInfo {
    pub id: &'static str,
    pub kind: RowKind,
    pub robustness: Robustness,
    /// Component subsets; consistency of all members of any one subset
    /// guarantees the estimator's consistency.
    pub consistency_sets: &'static [&'static [Component]],
    /// Components that, if inconsistent, render the estimator inconsistent
    /// regardless of everything else (empty for the robust rows).
    pub not_allowed: &'static [Component],
}

use Component::*;
use Robustness::*;

static REGISTRY: &[EstimatorInfo] = &[
    EstimatorInfo {
        id: "POs|psYobs-pxYobs",
        kind: RowKind::PosPsYobsPxYobs,
        robustness: NonRobust,
        consistency_sets: &[&[W1, W0, Wx]],
        not_allowed: &[W1, W0, Wx],
    },
    EstimatorInfo {
        id: "POs|psYobs-p0Ypred(s1)",
        kind: RowKind::PosPsYobsP0YpredS1,
        robustness: NonRobust,
        consistency_sets: &[&[W1, W0, OutcomeCM1]],
        not_allowed: &[W1, W0, OutcomeCM1],
    },
    EstimatorInfo {
        id: "POs|psYobs-p0Ypred(px)",
        kind: RowKind::PosPsYobsP0YpredPx,
        robustness: MoreRobust,
        consistency_sets: &[&[W1, W0, OutcomeCM1], &[W1, W0, Wx]],
        not_allowed: &[W1, W0],
    },
    EstimatorInfo {
        id: "POs|fuYpred(ss)-p0Ypred(s1)",
        kind: RowKind::PosFuYpredSsP0YpredS1,
        robustness: NonRobust,
        consistency_sets: &[&[W0, OutcomeC1, OutcomeC0, OutcomeCM1]],
        not_allowed: &[W0, OutcomeC1, OutcomeC0, OutcomeCM1],
    },
    EstimatorInfo {
        id: "POs|fuYpred(ps)-p0Ypred(px)",
        kind: RowKind::PosFuYpredPsP0YpredPx,
        robustness: MoreRobust,
        consistency_sets: &[
            &[W0, OutcomeC1, OutcomeCM1],
            &[W1, W0, OutcomeCM1],
            &[W1, W0, Wx],
        ],
        not_allowed: &[W0],
    },
    EstimatorInfo {
        id: "POs|fuYpred(ss)-fuYpred(sx)",
        kind: RowKind::PosFuYpredSsFuYpredSx,
        robustness: NonRobust,
        consistency_sets: &[&[Wsx, OutcomeC1, OutcomeC0, CrossworldC]],
        not_allowed: &[Wsx, OutcomeC1, OutcomeC0, CrossworldC],
    },
    EstimatorInfo {
        id: "POs|fuYpred(ps)-fuYpred(px)",
        kind: RowKind::PosFuYpredPsFuYpredPx,
        robustness: MoreRobust,
        consistency_sets: &[
            &[WxMediatorPart, OutcomeC1, OutcomeC0, CrossworldC],
            &[W1, W0, Wx],
        ],
        not_allowed: &[WxMediatorPart],
    },
    EstimatorInfo {
        id: "POs|fuYpred(ss)-fuY2pred(s1s0)",
        kind: RowKind::PosFuYpredSsFuY2predS1s0,
        robustness: NonRobust,
        consistency_sets: &[&[OutcomeC1, OutcomeC0, OutcomeCM1, CrossworldC]],
        not_allowed: &[OutcomeC1, OutcomeC0, OutcomeCM1, CrossworldC],
    },
    EstimatorInfo {
        id: "POs|fuYpred(ps)-fuY2pred(pxp0)",
        kind: RowKind::PosFuYpredPsFuY2predPxp0,
        robustness: Robust,
        consistency_sets: &[
            &[OutcomeC1, OutcomeC0, OutcomeCM1, CrossworldC],
            &[W1, W0, OutcomeCM1],
            &[W1, W0, Wx],
        ],
        not_allowed: &[],
    },
    EstimatorInfo {
        id: "POs|fuYpred(ss)-fuMsimYpred(s0s1)",
        kind: RowKind::PosFuYpredSsFuMsimS0s1,
        robustness: NonRobust,
        consistency_sets: &[&[MedDensity, OutcomeC1, OutcomeC0, OutcomeCM1]],
        not_allowed: &[MedDensity, OutcomeC1, OutcomeC0, OutcomeCM1],
    },
    EstimatorInfo {
        id: "POs|fuYpred(ps)-fuMsimYpred(p0px)",
        kind: RowKind::PosFuYpredPsFuMsimP0px,
        robustness: MoreRobust,
        consistency_sets: &[
            &[MedDensity, OutcomeC1, OutcomeC0, OutcomeCM1],
            &[W1, W0, MedDensity, OutcomeCM1],
            &[W1, W0, Wx, MedDensity],
        ],
        not_allowed: &[MedDensity],
    },
    EstimatorInfo {
        id: "NDE&NIE|psxCadj",
        kind: RowKind::EffPsxCadj,
        robustness: NonRobust,
        consistency_sets: &[&[W1, W0, Wx]],
        not_allowed: &[W1, W0, Wx],
    },
    EstimatorInfo {
        id: "NDE|fuNDEpred(s1s0)+TE|psCadj",
        kind: RowKind::EffNdeS1s0TePsCadj,
        robustness: NonRobust,
        consistency_sets: &[&[W1, W0, OutcomeCM1, NdeC]],
        not_allowed: &[W1, W0, OutcomeCM1, NdeC],
    },
    EstimatorInfo {
        id: "NDE|fuNDEpred(s1s0)+NIE|psYpred(s1)Cadj",
        kind: RowKind::EffNdeS1s0NiePsYpredS1Cadj,
        robustness: NonRobust,
        consistency_sets: &[&[W1, W0, OutcomeCM1, NdeC]],
        not_allowed: &[W1, W0, OutcomeCM1, NdeC],
    },
    EstimatorInfo {
        id: "NDE|fuNDEpred(pxp0)+NIE|psYpred(px)Cadj",
        kind: RowKind::EffNdePxp0NiePsYpredPxCadj,
        robustness: MoreRobust,
        consistency_sets: &[&[W1, W0, OutcomeCM1], &[W1, W0, Wx]],
        not_allowed: &[W1, W0],
    },
    EstimatorInfo {
        id: "NDE|fuNDEpred(s1s0)+TE|fuYpred(ss)",
        kind: RowKind::EffNdeS1s0TeFuYpredSs,
        robustness: NonRobust,
        consistency_sets: &[&[OutcomeC1, OutcomeC0, OutcomeCM1, NdeC]],
        not_allowed: &[OutcomeC1, OutcomeC0, OutcomeCM1, NdeC],
    },
    EstimatorInfo {
        id: "NDE|fuNDEpred(pxp0)+TE|fuYpred(ps)",
        kind: RowKind::EffNdePxp0TeFuYpredPs,
        robustness: Robust,
        consistency_sets: &[
            &[OutcomeC1, OutcomeC0, OutcomeCM1, NdeC],
            &[W1, W0, OutcomeCM1],
            &[W1, W0, Wx],
        ],
        not_allowed: &[],
    },
];

/// The closed menu registry: eleven potential-outcome rows followed by six
/// direct effect-estimation rows.
pub fn registry() -> &'static [EstimatorInfo] {
    REGISTRY
}

/// Look up a registry entry by id.
pub fn find(id: &str) -> Result<&'static EstimatorInfo> {
    REGISTRY
        .iter()
        .find(|e| e.id == id)
        .ok_or_else(|| crate::error::Error::InvalidConfig(format!("unknown estimator `{id}`")))
}

/// Point estimates of the effect pair and their sum.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct Effects {
    pub nde0: f64,
    pub nie1: f64,
    pub te: f64,
}

/// Ess values and convergence flags attached to a report.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct ReportDiagnostics {
    pub ess: Vec<(String, f64)>,
    pub converged: Vec<(String, bool)>,
}

/// One estimator's results plus provenance.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EstimateReport {
    pub estimator: String,
    pub robustness: Robustness,
    pub ey1: Option<f64>,
    pub ey0: Option<f64>,
    pub ey1m0: Option<f64>,
    pub nde0: f64,
    pub nie1: f64,
    pub te: f64,
    /// Shared component fits this row consumed.
    pub components_used: Vec<String>,
    pub diagnostics: ReportDiagnostics,
}

/// A menu row's outcome: a report, or the error that row hit (other rows
/// keep running).
#[derive(Debug, Clone)]
pub struct EstimatorOutcome {
    pub id: String,
    pub result: Result<EstimateReport>,
}
