//! Ready-made data-generating processes and scenario suites.
//!
//! `dgp_linear_gaussian` is the workhorse for robustness experiments: every
//! estimation component has an exactly correct parametric form (the
//! Gaussian outcome is linear, the continuous mediator has arm-shift-only
//! effects with shared slopes and variance, and the binary mediator depends
//! on a binary covariate only), so "correct" analyst formulas are truly
//! correct and "misspecified" ones omit strong terms. `dgp_discrete_saturated`
//! is a fully binary world where saturated formulas are correct for any law,
//! used for exact plug-in comparisons and binary-outcome spot checks.
//! `dgp_desk_binary` is a mixed desk-scale process whose formulas exercise
//! splines and the factorized density.

use super::{
    ComponentFlags, Covariate, CovariateLaw, DgpSpec, LinearPredictor, LpTerm, MediatorLaw,
    MediatorSpec, OutcomeKind, OutcomeLaw, ScenarioSpec,
};
use crate::estimators::FormulaSet;

fn lp(intercept: f64, terms: &[(&[&str], f64)]) -> LinearPredictor {
    LinearPredictor {
        intercept,
        terms: terms
            .iter()
            .map(|(vars, coef)| LpTerm {
                vars: vars.iter().map(|v| v.to_string()).collect(),
                coef: *coef,
            })
            .collect(),
    }
}

/// Continuous-outcome process where every analysis component has an exactly
/// correct parametric form.
pub fn dgp_linear_gaussian() -> DgpSpec {
    DgpSpec {
        covariates: vec![
            Covariate {
                name: "c1".into(),
                law: CovariateLaw::Bernoulli { p: 0.5 },
            },
            Covariate {
                name: "c2".into(),
                law: CovariateLaw::Bernoulli { p: 0.35 },
            },
            Covariate {
                name: "c3".into(),
                law: CovariateLaw::Uniform { lo: -1.0, hi: 1.0 },
            },
        ],
        propensity: lp(-0.1, &[(&["c1"], 0.5), (&["c2"], -0.4), (&["c3"], 0.9)]),
        mediators: vec![
            MediatorSpec {
                name: "mb".into(),
                law: MediatorLaw::Binary {
                    arm0: lp(-0.4, &[(&["c1"], 0.8)]),
                    arm1: lp(0.5, &[(&["c1"], 0.8)]),
                },
            },
            MediatorSpec {
                name: "mc".into(),
                law: MediatorLaw::Continuous {
                    arm0: lp(
                        0.0,
                        &[
                            (&["c1"], 0.4),
                            (&["c2"], 0.3),
                            (&["c3"], 0.5),
                            (&["mb"], 0.8),
                        ],
                    ),
                    arm1: lp(
                        0.8,
                        &[
                            (&["c1"], 0.4),
                            (&["c2"], 0.3),
                            (&["c3"], 0.5),
                            (&["mb"], 0.8),
                        ],
                    ),
                    sd: 0.8,
                },
            },
        ],
        outcome: OutcomeLaw {
            kind: OutcomeKind::Continuous { sd: 1.0 },
            lp: lp(
                0.3,
                &[
                    (&["a"], 0.5),
                    (&["c1"], 0.4),
                    (&["c2"], -0.3),
                    (&["c3"], 0.7),
                    (&["mb"], 0.5),
                    (&["mc"], 0.6),
                    (&["a", "mc"], 0.6),
                    (&["mb", "mc"], 0.8),
                ],
            ),
        },
        exposure_name: "a".into(),
        outcome_name: "y".into(),
    }
}

pub fn formulas_linear_gaussian_correct() -> FormulaSet {
    FormulaSet {
        propensity: Some("a ~ c1 + c2 + c3".into()),
        exposure_cm: Some("a ~ c1 + c2 + c3 + mb + mc + c1:mb".into()),
        outcome_c_treated: Some("y ~ c1 + c2 + c3 + c1:c2 + c1:c3".into()),
        outcome_c_control: Some("y ~ c1 + c2 + c3 + c1:c2 + c1:c3".into()),
        outcome_cm_treated: Some("y ~ c1 + c2 + c3 + mb + mc + mb:mc".into()),
        crossworld_c: Some("y ~ c1 + c2 + c3 + c1:c2 + c1:c3".into()),
        nde_c: Some("d ~ c1 + c2 + c3 + c1:c2 + c1:c3".into()),
        working: Some("y ~ c1 + c2".into()),
        mediator_order: vec!["mb".into(), "mc".into()],
        mediator_factors: vec!["mb ~ c1".into(), "mc ~ c1 + c2 + c3 + mb".into()],
    }
}

/// Corrupted analyst formulas: each drops the strong terms of its component
/// (the c3 confounder, the mediator terms of the exposure odds model, or the
/// whole mediator block of the outcome model).
pub fn formulas_linear_gaussian_misspecified() -> FormulaSet {
    FormulaSet {
        propensity: Some("a ~ c1 + c2".into()),
        exposure_cm: Some("a ~ c1 + c2".into()),
        outcome_c_treated: Some("y ~ c1 + c2".into()),
        outcome_c_control: Some("y ~ c1 + c2".into()),
        outcome_cm_treated: Some("y ~ c1 + c2 + c3".into()),
        crossworld_c: Some("y ~ c1 + c2".into()),
        nde_c: Some("d ~ 1".into()),
        working: Some("y ~ c1 + c2".into()),
        mediator_order: vec!["mb".into(), "mc".into()],
        mediator_factors: vec!["mb ~ 1".into(), "mc ~ c1 + c2".into()],
    }
}

/// Fully binary world (two covariates, one mediator, binary outcome) where
/// saturated formulas are exactly correct for any generating law.
pub fn dgp_discrete_saturated() -> DgpSpec {
    DgpSpec {
        covariates: vec![
            Covariate {
                name: "c1".into(),
                law: CovariateLaw::Bernoulli { p: 0.5 },
            },
            Covariate {
                name: "c2".into(),
                law: CovariateLaw::Bernoulli { p: 0.4 },
            },
        ],
        propensity: lp(
            -0.2,
            &[(&["c1"], 1.3), (&["c2"], -0.5), (&["c1", "c2"], 0.4)],
        ),
        mediators: vec![MediatorSpec {
            name: "m".into(),
            law: MediatorLaw::Binary {
                arm0: lp(
                    -0.5,
                    &[(&["c1"], 1.0), (&["c2"], 0.4), (&["c1", "c2"], 0.3)],
                ),
                arm1: lp(0.4, &[(&["c1"], 0.6), (&["c2"], -0.3)]),
            },
        }],
        outcome: OutcomeLaw {
            kind: OutcomeKind::Binary,
            lp: lp(
                -0.8,
                &[
                    (&["a"], 0.2),
                    (&["c1"], 1.0),
                    (&["c2"], 0.4),
                    (&["m"], 0.7),
                    (&["a", "m"], 0.4),
                    (&["a", "c1"], 1.0),
                    (&["c1", "m"], -0.2),
                ],
            ),
        },
        exposure_name: "a".into(),
        outcome_name: "y".into(),
    }
}

pub fn formulas_discrete_correct() -> FormulaSet {
    FormulaSet {
        propensity: Some("a ~ c1*c2".into()),
        exposure_cm: Some("a ~ c1*c2*m".into()),
        outcome_c_treated: Some("y ~ c1*c2".into()),
        outcome_c_control: Some("y ~ c1*c2".into()),
        outcome_cm_treated: Some("y ~ c1*c2*m".into()),
        crossworld_c: Some("y ~ c1*c2".into()),
        nde_c: Some("d ~ c1*c2".into()),
        working: Some("y ~ c1".into()),
        mediator_order: vec!["m".into()],
        mediator_factors: vec!["m ~ c1*c2".into()],
    }
}

pub fn formulas_discrete_misspecified() -> FormulaSet {
    FormulaSet {
        propensity: Some("a ~ c2".into()),
        exposure_cm: Some("a ~ c1*c2".into()),
        outcome_c_treated: Some("y ~ c2".into()),
        outcome_c_control: Some("y ~ c2".into()),
        outcome_cm_treated: Some("y ~ c1*c2".into()),
        crossworld_c: Some("y ~ c2".into()),
        nde_c: Some("d ~ 1".into()),
        working: Some("y ~ c1".into()),
        mediator_order: vec!["m".into()],
        mediator_factors: vec!["m ~ 1".into()],
    }
}

/// Desk-scale mixed process: two binary and one continuous covariate, binary
/// exposure, one binary and one continuous mediator, binary outcome. Its
/// formulas exercise spline terms and the factorized density.
pub fn dgp_desk_binary() -> DgpSpec {
    DgpSpec {
        covariates: vec![
            Covariate {
                name: "c1".into(),
                law: CovariateLaw::Bernoulli { p: 0.5 },
            },
            Covariate {
                name: "c2".into(),
                law: CovariateLaw::Bernoulli { p: 0.4 },
            },
            Covariate {
                name: "c3".into(),
                law: CovariateLaw::Uniform { lo: -1.0, hi: 1.0 },
            },
        ],
        propensity: lp(-0.2, &[(&["c1"], 0.4), (&["c2"], -0.3), (&["c3"], 0.6)]),
        mediators: vec![
            MediatorSpec {
                name: "mb".into(),
                law: MediatorLaw::Binary {
                    arm0: lp(-0.3, &[(&["c1"], 0.5), (&["c3"], 0.3)]),
                    arm1: lp(0.4, &[(&["c1"], 0.5), (&["c3"], 0.3)]),
                },
            },
            MediatorSpec {
                name: "mc".into(),
                law: MediatorLaw::Continuous {
                    arm0: lp(0.0, &[(&["c1"], 0.3), (&["c3"], 0.4), (&["mb"], 0.5)]),
                    arm1: lp(0.6, &[(&["c1"], 0.3), (&["c3"], 0.4), (&["mb"], 0.5)]),
                    sd: 0.7,
                },
            },
        ],
        outcome: OutcomeLaw {
            kind: OutcomeKind::Binary,
            lp: lp(
                -0.5,
                &[
                    (&["a"], 0.4),
                    (&["c1"], 0.3),
                    (&["c2"], -0.2),
                    (&["c3"], 0.5),
                    (&["mb"], 0.4),
                    (&["mc"], 0.5),
                    (&["a", "mc"], 0.2),
                ],
            ),
        },
        exposure_name: "a".into(),
        outcome_name: "y".into(),
    }
}

pub fn formulas_desk_binary() -> FormulaSet {
    FormulaSet {
        propensity: Some("a ~ c1 + c2 + ns(c3,3)".into()),
        exposure_cm: Some("a ~ c1 + c2 + ns(c3,3) + mb + mc".into()),
        outcome_c_treated: Some("y ~ c1 + c2 + ns(c3,3)".into()),
        outcome_c_control: Some("y ~ c1 + c2 + ns(c3,3)".into()),
        outcome_cm_treated: Some("y ~ c1 + c2 + ns(c3,3) + mb + mc".into()),
        crossworld_c: Some("y ~ c1 + c2 + ns(c3,3)".into()),
        nde_c: Some("d ~ c1 + c2 + ns(c3,3)".into()),
        working: Some("y ~ c1 + c2 + c3".into()),
        mediator_order: vec!["mb".into(), "mc".into()],
        mediator_factors: vec!["mb ~ c1 + c3".into(), "mc ~ c1 + c3 + mb".into()],
    }
}

#[allow(clippy::too_many_arguments)]
fn flags(
    propensity: bool,
    exposure_cm: bool,
    mediator_density: bool,
    outcome_c_treated: bool,
    outcome_c_control: bool,
    outcome_cm_treated: bool,
    crossworld_c: bool,
    nde_c: bool,
) -> ComponentFlags {
    ComponentFlags {
        propensity,
        exposure_cm,
        mediator_density,
        outcome_c_treated,
        outcome_c_control,
        outcome_cm_treated,
        crossworld_c,
        nde_c,
    }
}

/// One scenario over the linear-Gaussian process.
pub fn linear_gaussian_scenario(name: &str, flags: ComponentFlags) -> ScenarioSpec {
    ScenarioSpec {
        name: name.to_string(),
        dgp: dgp_linear_gaussian(),
        correct: formulas_linear_gaussian_correct(),
        misspecified: formulas_linear_gaussian_misspecified(),
        flags,
    }
}

/// The robustness-matrix scenario suite: one scenario per distinct
/// component-correctness pattern needed to exercise every consistency
/// subset of every menu row, plus one single-component violation per
/// "not allowed to be inconsistent" entry.
pub fn robustness_scenarios() -> Vec<ScenarioSpec> {
    let mut out = Vec::new();
    let mut push = |name: &str, f: ComponentFlags| out.push(linear_gaussian_scenario(name, f));
    push("all-correct", ComponentFlags::all_correct());
    // Component subsets (tied components are corrected together: the
    // propensity drives both omega1 and omega0).
    push(
        "weights-only",
        flags(true, true, false, false, false, false, false, false),
    );
    push(
        "weights-outcome-cm",
        flags(true, false, false, false, false, true, false, false),
    );
    push(
        "w0-yc1-outcome-cm",
        flags(true, false, false, true, false, true, false, false),
    );
    push(
        "w0-outcome-models",
        flags(true, false, false, true, true, true, false, false),
    );
    push(
        "outcome-models",
        flags(false, false, false, true, true, true, true, false),
    );
    push(
        "mediator-part-outcomes",
        flags(false, true, false, true, true, false, true, false),
    );
    push(
        "density-outcomes",
        flags(false, false, true, true, true, true, false, false),
    );
    push(
        "weights-density-outcome-cm",
        flags(true, false, true, false, false, true, false, false),
    );
    push(
        "weights-acm-density",
        flags(true, true, true, false, false, false, false, false),
    );
    push(
        "weights-outcome-cm-nde",
        flags(true, false, false, false, false, true, false, true),
    );
    push(
        "effect-models",
        flags(false, false, false, true, true, true, false, true),
    );
    // Single-component violations (everything else correct).
    push(
        "break-propensity",
        flags(false, true, true, true, true, true, true, true),
    );
    push(
        "break-exposure-cm",
        flags(true, false, true, true, true, true, true, true),
    );
    push(
        "break-density",
        flags(true, true, false, true, true, true, true, true),
    );
    push(
        "break-outcome-cm",
        flags(true, true, true, true, true, false, true, true),
    );
    push(
        "break-nde-c",
        flags(true, true, true, true, true, true, true, false),
    );
    out
}

/// Binary-outcome spot checks on the saturated discrete world.
pub fn discrete_scenarios() -> Vec<ScenarioSpec> {
    let mk = |name: &str, f: ComponentFlags| ScenarioSpec {
        name: name.to_string(),
        dgp: dgp_discrete_saturated(),
        correct: formulas_discrete_correct(),
        misspecified: formulas_discrete_misspecified(),
        flags: f,
    };
    vec![
        mk("discrete-all-correct", ComponentFlags::all_correct()),
        mk(
            "discrete-break-propensity",
            flags(false, true, true, true, true, true, true, true),
        ),
        mk(
            "discrete-break-outcome-cm",
            flags(true, true, true, true, true, false, true, true),
        ),
    ]
}
