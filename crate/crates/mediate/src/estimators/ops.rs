//! Building-block operations the menu rows are assembled from.
//!
//! Every operation that averages over the full sample takes optional
//! per-row `base` weights so that a bootstrap replicate's observation
//! weights compose multiplicatively with the analysis weights everywhere.
//! Weighted means are normalized, which makes all results invariant to
//! rescaling any weight set by a positive constant.

use rand_chacha::ChaCha12Rng;

use crate::data::{subsample, Dataset, SampleView, Which};
use crate::error::{Error, Result};
use crate::formula::FormulaSpec;
use crate::glm::{self, Family, FittedModel};
use crate::meddensity::{self, FactorizedDensity};
use crate::weights::WeightSet;

use super::Effects;

/// Base-weighted mean of per-row values over the full sample.
pub fn full_sample_mean(values: &[f64], base: Option<&[f64]>) -> f64 {
    match base {
        None => values.iter().sum::<f64>() / values.len() as f64,
        Some(b) => {
            let num: f64 = values.iter().zip(b).map(|(v, w)| v * w).sum();
            let den: f64 = b.iter().sum();
            num / den
        }
    }
}

fn weighted_mean_on_rows(
    values_by_row: &[f64],
    rows: &[usize],
    weights: &[f64],
    base: Option<&[f64]>,
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&row, &w) in rows.iter().zip(weights) {
        let b = base.map(|b| b[row]).unwrap_or(1.0);
        num += w * b * values_by_row[row];
        den += w * b;
    }
    num / den
}

/// Normalized weighted mean of a weight set's target variable values
/// (per-dataset-row `values`), e.g. the observed outcome over a pseudo
/// sample.
pub fn weighted_outcome_mean(
    ds: &Dataset,
    values_by_row: &[f64],
    w: &WeightSet,
    base: Option<&[f64]>,
) -> f64 {
    debug_assert_eq!(values_by_row.len(), ds.n());
    weighted_mean_on_rows(values_by_row, &w.rows, &w.values, base)
}

/// Observed-outcome means over the pseudo treated and pseudo control
/// samples: (E[Y1], E[Y0]).
pub fn reg_ps_yobs(
    ds: &Dataset,
    w1: &WeightSet,
    w0: &WeightSet,
    base: Option<&[f64]>,
) -> Result<(f64, f64)> {
    let y = ds.outcome()?;
    Ok((
        weighted_outcome_mean(ds, y, w1, base),
        weighted_outcome_mean(ds, y, w0, base),
    ))
}

/// Full-sample averages of per-arm outcome-model predictions: (E[Y1], E[Y0]).
/// The models are fit elsewhere (to subsamples or pseudo samples).
pub fn reg_fu_ypred(
    ds: &Dataset,
    model_treated: &FittedModel,
    model_control: &FittedModel,
    base: Option<&[f64]>,
) -> Result<(f64, f64)> {
    let full = SampleView::full(ds);
    let p1 = glm::predict(model_treated, &full)?;
    let p0 = glm::predict(model_control, &full)?;
    Ok((full_sample_mean(&p1, base), full_sample_mean(&p0, base)))
}

/// Observed-outcome mean over the pseudo cross-world sample: E[Y1M0].
pub fn cross_px_yobs(ds: &Dataset, wx: &WeightSet, base: Option<&[f64]>) -> Result<f64> {
    Ok(weighted_outcome_mean(ds, ds.outcome()?, wx, base))
}

/// Average of predicted cross-world outcomes over the pseudo control sample.
/// `pred_ctrl` holds predictions aligned to the control rows.
pub fn cross_p0_ypred(
    _ds: &Dataset,
    pred_ctrl: &[f64],
    w0: &WeightSet,
    base: Option<&[f64]>,
) -> Result<f64> {
    if pred_ctrl.len() != w0.rows.len() {
        return Err(Error::Data(
            "control predictions misaligned with pseudo-control".into(),
        ));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&row, &w), &p) in w0.rows.iter().zip(&w0.values).zip(pred_ctrl) {
        let b = base.map(|b| b[row]).unwrap_or(1.0);
        num += w * b * p;
        den += w * b;
    }
    Ok(num / den)
}

/// Fit an outcome-given-covariates model on the weighted treated subsample
/// (odds weights for the cross-world subsample variant, omega_x for the
/// pseudo cross-world variant), predict on the full sample, and average.
pub fn cross_fu_ypred(
    ds: &Dataset,
    crossworld_spec: &FormulaSpec,
    family: Family,
    weights: &WeightSet,
    base: Option<&[f64]>,
) -> Result<(f64, FittedModel)> {
    let sample = weights.pseudo_sample(ds);
    let model = glm::fit(crossworld_spec, &sample, family, base)?;
    let preds = glm::predict(&model, &SampleView::full(ds))?;
    Ok((full_sample_mean(&preds, base), model))
}

/// Second stage of the double outcome-model fit: regress predicted
/// cross-world outcomes on covariates in the control subsample (unweighted)
/// or pseudo control sample (`w0`), predict on the full sample, and average.
pub fn cross_fu_y2pred(
    ds: &Dataset,
    crossworld_spec: &FormulaSpec,
    family: Family,
    pred_ctrl: &[f64],
    w0: Option<&WeightSet>,
    base: Option<&[f64]>,
) -> Result<(f64, FittedModel)> {
    let sample = match w0 {
        Some(w) => w.pseudo_sample(ds),
        None => subsample(ds, Which::Control),
    };
    if pred_ctrl.len() != sample.len() {
        return Err(Error::Data(
            "stage-one predictions misaligned with control rows".into(),
        ));
    }
    let model = glm::fit_with_response(crossworld_spec, &sample, family, pred_ctrl, base)?;
    let preds = glm::predict(&model, &SampleView::full(ds))?;
    Ok((full_sample_mean(&preds, base), model))
}

/// How the mediator block is integrated out in the simulation estimator.
#[allow(clippy::large_enum_variant)]
pub enum MediatorDraw {
    /// Monte Carlo: `nsim` replicates from the given stream.
    Simulate { nsim: usize, rng: ChaCha12Rng },
    /// Exact summation over the binary-mediator lattice.
    ExactLattice,
}

/// Mediator-simulation estimator of E[Y1M0]: simulate the control-arm
/// mediator block for every unit of the full sample, predict the outcome
/// under treatment at the simulated mediators, and average over replicates
/// and units (or sum exactly over the lattice).
pub fn cross_fu_msim_ypred(
    ds: &Dataset,
    density: &FactorizedDensity,
    outcome_cm: &FittedModel,
    draw: MediatorDraw,
    base: Option<&[f64]>,
) -> Result<f64> {
    let full = SampleView::full(ds);
    match draw {
        MediatorDraw::Simulate { nsim, mut rng } => {
            if nsim == 0 {
                return Err(Error::InvalidConfig("nsim must be positive".into()));
            }
            let mut total = 0.0;
            for _ in 0..nsim {
                let draws = meddensity::simulate(density, &full, &mut rng)?;
                let mut view = full.clone();
                for (name, values) in draws {
                    view = view.with_override(&name, values)?;
                }
                let preds = glm::predict(outcome_cm, &view)?;
                total += full_sample_mean(&preds, base);
            }
            Ok(total / nsim as f64)
        }
        MediatorDraw::ExactLattice => {
            let points = meddensity::lattice(density, &full)?;
            let n = full.len();
            let mut per_unit = vec![0.0; n];
            for (assignment, probs) in points {
                let mut view = full.clone();
                for (name, value) in &assignment {
                    view = view.with_override(name, vec![*value; n])?;
                }
                let preds = glm::predict(outcome_cm, &view)?;
                for i in 0..n {
                    per_unit[i] += probs[i] * preds[i];
                }
            }
            Ok(full_sample_mean(&per_unit, base))
        }
    }
}

/// Derive the effect pair from the three potential-outcome means. TE is
/// constructed as NDE0 + NIE1, so the decomposition holds exactly.
pub fn combine_pos(ey1: f64, ey0: f64, ey1m0: f64) -> Effects {
    let nde0 = ey1m0 - ey0;
    let nie1 = ey1 - ey1m0;
    Effects {
        nde0,
        nie1,
        te: nde0 + nie1,
    }
}

/// Individual-effect regression estimator of NDE0.
///
/// `pred_ctrl` are cross-world predictions on control rows; the proxy is
/// prediction minus observed outcome. For binary outcomes the proxy lies in
/// [-1, 1] and is fit through the bounded logit transformation; continuous
/// outcomes use a Gaussian fit. The effect regression runs on the control
/// subsample (`w0` = None) or the pseudo control sample, then predictions
/// are averaged over the full sample.
pub fn nde_fu_ndepred(
    ds: &Dataset,
    nde_spec: &FormulaSpec,
    pred_ctrl: &[f64],
    w0: Option<&WeightSet>,
    base: Option<&[f64]>,
) -> Result<f64> {
    let sample = match w0 {
        Some(w) => w.pseudo_sample(ds),
        None => subsample(ds, Which::Control),
    };
    if pred_ctrl.len() != sample.len() {
        return Err(Error::Data(
            "predictions misaligned with control rows".into(),
        ));
    }
    let y = ds.outcome()?;
    let proxy: Vec<f64> = sample
        .rows()
        .iter()
        .zip(pred_ctrl)
        .map(|(&row, &p)| p - y[row])
        .collect();
    let model = if ds.outcome_is_binary()? {
        glm::fit_transformed_bounded(nde_spec, &sample, &proxy, -1.0, 1.0, base)?
    } else {
        glm::fit_with_response(nde_spec, &sample, Family::GaussianIdentity, &proxy, base)?
    };
    let preds = glm::predict(&model, &SampleView::full(ds))?;
    Ok(full_sample_mean(&preds, base))
}

/// One arm of a mimicked randomized trial.
pub struct CadjArm {
    pub name: String,
    /// Dataset row indices of the arm's units.
    pub rows: Vec<usize>,
    /// Pseudo-sample weights aligned to `rows`.
    pub weights: Vec<f64>,
    /// The arm's outcome values aligned to `rows` (observed or substituted).
    pub response: Vec<f64>,
}

const ARM_VARS: [&str; 2] = ["__arm1", "__arm2"];

/// Covariate-adjusted contrasts of arm outcome means.
///
/// Stacks the arms, fits a working model of the outcome on arm indicators
/// plus the covariate terms of `working_spec` (the indicators and intercept
/// are always included, which enforces group mean recovery structurally; it
/// is asserted post-fit at 1e-6), and returns the k-1 contrasts of each arm
/// against `arms[0]`. Linear working models contrast the arm coefficients;
/// nonlinear ones predict all potential outcomes for every unit of the full
/// sample and contrast the prediction means.
pub fn cadj_effect(
    ds: &Dataset,
    arms: &[CadjArm],
    working_spec: &FormulaSpec,
    family: Family,
    base: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if arms.len() < 2 || arms.len() > 3 {
        return Err(Error::InvalidConfig(
            "covariate adjustment needs 2 or 3 arms".into(),
        ));
    }
    if working_spec
        .rhs_variables()
        .iter()
        .any(|v| v.starts_with("__arm"))
    {
        return Err(Error::InvalidConfig(
            "working model must not reference arm indicators; they are added automatically".into(),
        ));
    }
    let k = arms.len();

    // Stack rows, weights, responses, and arm indicator overrides.
    let mut rows = Vec::new();
    let mut weights = Vec::new();
    let mut response = Vec::new();
    let mut indicators: Vec<Vec<f64>> = vec![Vec::new(); k - 1];
    for (j, arm) in arms.iter().enumerate() {
        if arm.rows.len() != arm.weights.len() || arm.rows.len() != arm.response.len() {
            return Err(Error::Data(format!("arm `{}` is misaligned", arm.name)));
        }
        rows.extend_from_slice(&arm.rows);
        weights.extend_from_slice(&arm.weights);
        response.extend_from_slice(&arm.response);
        for (d, ind) in indicators.iter_mut().enumerate() {
            let v = if j == d + 1 { 1.0 } else { 0.0 };
            ind.resize(ind.len() + arm.rows.len(), v);
        }
    }
    let mut stacked = SampleView::from_rows(ds, rows).with_weights(weights)?;
    for (d, ind) in indicators.iter().enumerate() {
        stacked = stacked.with_override(ARM_VARS[d], ind.clone())?;
    }

    // Arm main effects first, then the working covariate terms.
    let mut terms = Vec::with_capacity(working_spec.terms.len() + k - 1);
    for arm_var in ARM_VARS.iter().take(k - 1) {
        terms.push(crate::formula::Term {
            factors: vec![crate::formula::Factor::Var(arm_var.to_string())],
        });
    }
    terms.extend(working_spec.terms.iter().cloned());
    let spec = FormulaSpec {
        response: working_spec.response.clone(),
        terms,
    };

    let model = glm::fit_with_response(&spec, &stacked, family, &response, base)?;

    // Group mean recovery, per arm.
    let fitted = glm::predict(&model, &stacked)?;
    let w = stacked.effective_weights(base);
    let mut offset = 0;
    for arm in arms {
        let len = arm.rows.len();
        let mut wy = 0.0;
        let mut wp = 0.0;
        for i in offset..offset + len {
            wy += w[i] * response[i];
            wp += w[i] * fitted[i];
        }
        if (wp - wy).abs() / wy.abs().max(1.0) > 1e-6 {
            return Err(Error::Data(format!(
                "working model failed group mean recovery on arm `{}`",
                arm.name
            )));
        }
        offset += len;
    }

    match family {
        Family::GaussianIdentity => {
            // Arm coefficients sit right after the intercept.
            Ok((0..k - 1).map(|d| model.coefficients[1 + d]).collect())
        }
        Family::BinomialLogit => {
            // Predict every potential outcome on the original full sample.
            let n = ds.n();
            let full = SampleView::full(ds);
            let mut arm_means = Vec::with_capacity(k);
            for j in 0..k {
                let mut view = full.clone();
                for (d, arm_var) in ARM_VARS.iter().take(k - 1).enumerate() {
                    let v = if j == d + 1 { 1.0 } else { 0.0 };
                    view = view.with_override(arm_var, vec![v; n])?;
                }
                let preds = glm::predict(&model, &view)?;
                arm_means.push(full_sample_mean(&preds, base));
            }
            Ok((1..k).map(|j| arm_means[j] - arm_means[0]).collect())
        }
    }
}
