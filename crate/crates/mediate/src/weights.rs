//! Estimation of the weighting functions that build pseudo samples.
//!
//! Four weight families are covered: inverse probability weights for the
//! pseudo treated and control samples, cross-world weights for the pseudo
//! cross-world sample (with three interchangeable estimation routes), and
//! odds weights for the pseudo cross-world subsample. Weighted means are
//! normalized downstream, so all estimators are invariant to rescaling a
//! weight set by a positive constant; stabilized (mean-1) copies are used
//! for display and balance checking only.

use crate::data::{subsample, Dataset, SampleView, Which};
use crate::error::{Error, Result};
use crate::formula::FormulaSpec;
use crate::glm::{self, Family, FittedModel};
use crate::wstats;

/// Which pseudo sample a weight set targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightTarget {
    /// Pseudo treated sample (weights live on treated units).
    P1,
    /// Pseudo control sample (weights live on control units).
    P0,
    /// Pseudo cross-world sample (weights live on treated units).
    Px,
    /// Pseudo cross-world subsample (odds weights on treated units).
    Sx,
}

/// Provenance of a weight estimation route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMethod {
    Ipw,
    Expr1DensityRatio,
    Expr2Odds,
    Expr3Stacked,
}

/// Per-unit nonnegative weights on one subsample.
#[derive(Debug, Clone)]
pub struct WeightSet {
    pub target: WeightTarget,
    /// Dataset row indices the weights live on.
    pub rows: Vec<usize>,
    pub values: Vec<f64>,
    pub stabilized: bool,
    pub method: WeightMethod,
    /// Labels of the fitted models this set was computed from.
    pub component_models: Vec<String>,
    /// Number of units whose component probabilities hit the positivity
    /// guard (within 1e-12 of 0 or 1).
    pub n_extreme: usize,
}

/// Positivity and concentration diagnostics for a weight set.
#[derive(Debug, Clone, serde::Serialize)]
pub struct WeightDiagnostics {
    pub target: WeightTarget,
    pub method: WeightMethod,
    pub n: usize,
    pub ess: f64,
    pub max: f64,
    /// Stabilized-weight quantiles at 0.05/0.25/0.5/0.75/0.95.
    pub quantiles: [f64; 5],
    pub n_extreme: usize,
    pub n_capped: usize,
}

impl WeightSet {
    fn validate(self) -> Result<Self> {
        if self.rows.len() != self.values.len() {
            return Err(Error::Weights("weight/row length mismatch".into()));
        }
        if let Some(bad) = self.values.iter().find(|w| !w.is_finite() || **w <= 0.0) {
            return Err(Error::Weights(format!("invalid weight {bad}")));
        }
        Ok(self)
    }

    /// Copy rescaled to mean 1 (for display and balance checking).
    pub fn stabilized(&self) -> WeightSet {
        let mean = wstats::mean(&self.values);
        WeightSet {
            values: self.values.iter().map(|w| w / mean).collect(),
            stabilized: true,
            ..self.clone()
        }
    }

    /// Copy with values capped at `cap`; returns the number of capped units.
    pub fn capped(&self, cap: f64) -> (WeightSet, usize) {
        let n_capped = self.values.iter().filter(|w| **w > cap).count();
        let set = WeightSet {
            values: self.values.iter().map(|w| w.min(cap)).collect(),
            ..self.clone()
        };
        (set, n_capped)
    }

    pub fn diagnostics(&self) -> WeightDiagnostics {
        let st = self.stabilized();
        let q = |p| wstats::quantile_of(&st.values, p);
        WeightDiagnostics {
            target: self.target,
            method: self.method,
            n: self.values.len(),
            ess: effective_sample_size(&self.values),
            max: self
                .values
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max),
            quantiles: [q(0.05), q(0.25), q(0.5), q(0.75), q(0.95)],
            n_extreme: self.n_extreme,
            n_capped: 0,
        }
    }

    /// Weighted view over the rows this set lives on.
    pub fn pseudo_sample<'a>(&self, ds: &'a Dataset) -> SampleView<'a> {
        SampleView::from_rows(ds, self.rows.clone())
            .with_weights(self.values.clone())
            .expect("weight set validated at construction")
    }
}

/// (sum w)^2 / sum(w^2): the equivalent unweighted sample size.
pub fn effective_sample_size(w: &[f64]) -> f64 {
    let s: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|x| x * x).sum();
    s * s / s2
}

const EXTREME_EPS: f64 = 1e-12;

fn count_extreme(probs: &[f64]) -> usize {
    probs
        .iter()
        .filter(|&&p| !(EXTREME_EPS..=1.0 - EXTREME_EPS).contains(&p))
        .count()
}

/// Fit the propensity model P(A=1|C) on the full sample.
///
/// Returns the fitted model and per-row propensities.
pub fn fit_propensity(
    spec: &FormulaSpec,
    ds: &Dataset,
    base: Option<&[f64]>,
) -> Result<(FittedModel, Vec<f64>)> {
    if spec.response != ds.roles().exposure {
        return Err(Error::InvalidConfig(format!(
            "propensity response `{}` is not the exposure column `{}`",
            spec.response,
            ds.roles().exposure
        )));
    }
    let full = SampleView::full(ds);
    let model = glm::fit(spec, &full, Family::BinomialLogit, base)?;
    let probs = glm::predict(&model, &full)?;
    Ok((model, probs))
}

/// Inverse probability weights: omega1 = 1/P(A=1|C) on treated units and
/// omega0 = 1/P(A=0|C) on control units.
pub fn ipw_weights(propensity: &[f64], ds: &Dataset) -> Result<(WeightSet, WeightSet)> {
    if propensity.len() != ds.n() {
        return Err(Error::Weights("propensity vector length mismatch".into()));
    }
    let n_extreme = count_extreme(propensity);
    let w1 = WeightSet {
        target: WeightTarget::P1,
        rows: ds.treated_rows().to_vec(),
        values: ds
            .treated_rows()
            .iter()
            .map(|&i| 1.0 / propensity[i])
            .collect(),
        stabilized: false,
        method: WeightMethod::Ipw,
        component_models: vec!["propensity".into()],
        n_extreme,
    }
    .validate()?;
    let w0 = WeightSet {
        target: WeightTarget::P0,
        rows: ds.control_rows().to_vec(),
        values: ds
            .control_rows()
            .iter()
            .map(|&i| 1.0 / (1.0 - propensity[i]))
            .collect(),
        stabilized: false,
        method: WeightMethod::Ipw,
        component_models: vec!["propensity".into()],
        n_extreme,
    }
    .validate()?;
    Ok((w1, w0))
}

/// Odds weights omega_sx = P(A=0|C,M)/P(A=1|C,M) on treated units, from a
/// fitted exposure-given-covariates-and-mediators model.
pub fn sx_weights(exposure_cm: &FittedModel, ds: &Dataset) -> Result<WeightSet> {
    let treated = subsample(ds, Which::Treated);
    let probs = glm::predict(exposure_cm, &treated)?;
    WeightSet {
        target: WeightTarget::Sx,
        rows: treated.rows().to_vec(),
        values: probs.iter().map(|&q| (1.0 - q) / q).collect(),
        stabilized: false,
        method: WeightMethod::Expr2Odds,
        component_models: vec!["exposure_cm".into()],
        n_extreme: count_extreme(&probs),
    }
    .validate()
}

/// Cross-world weights via the density-ratio route:
/// omega_x = [1/P(A=1|C)] * [P(M|C,A=0)/P(M|C,A=1)].
///
/// `dens0`/`dens1` are per-treated-unit conditional mediator densities
/// evaluated at the observed mediator values, fitted on the control and
/// treated subsamples respectively.
pub fn crossworld_expr1(
    propensity: &[f64],
    dens0: &[f64],
    dens1: &[f64],
    ds: &Dataset,
) -> Result<WeightSet> {
    let rows = ds.treated_rows().to_vec();
    if dens0.len() != rows.len() || dens1.len() != rows.len() {
        return Err(Error::Weights("density vector length mismatch".into()));
    }
    if let Some(pos) = dens1.iter().position(|&d| d <= 0.0) {
        return Err(Error::Weights(format!(
            "zero mediator density in the ratio denominator at treated unit {pos}"
        )));
    }
    let values: Vec<f64> = rows
        .iter()
        .zip(dens0.iter().zip(dens1))
        .map(|(&i, (&d0, &d1))| (1.0 / propensity[i]) * (d0 / d1))
        .collect();
    WeightSet {
        target: WeightTarget::Px,
        rows,
        values,
        stabilized: false,
        method: WeightMethod::Expr1DensityRatio,
        component_models: vec![
            "propensity".into(),
            "meddensity_a0".into(),
            "meddensity_a1".into(),
        ],
        n_extreme: count_extreme(propensity),
    }
    .validate()
}

/// Cross-world weights via the odds route:
/// omega_x = [P(A=0|C,M)/P(A=1|C,M)] * [1/P(A=0|C)].
pub fn crossworld_expr2(
    propensity: &[f64],
    exposure_cm: &FittedModel,
    ds: &Dataset,
) -> Result<WeightSet> {
    let treated = subsample(ds, Which::Treated);
    let q = glm::predict(exposure_cm, &treated)?;
    let rows = treated.rows().to_vec();
    let values: Vec<f64> = rows
        .iter()
        .zip(&q)
        .map(|(&i, &qi)| ((1.0 - qi) / qi) * (1.0 / (1.0 - propensity[i])))
        .collect();
    let n_extreme = count_extreme(propensity) + count_extreme(&q);
    WeightSet {
        target: WeightTarget::Px,
        rows,
        values,
        stabilized: false,
        method: WeightMethod::Expr2Odds,
        component_models: vec!["propensity".into(), "exposure_cm".into()],
        n_extreme,
    }
    .validate()
}

/// Cross-world weights via the stacked-sample route.
///
/// The treated subsample (membership 0, weight 1) is stacked with the pseudo
/// control sample (membership 1, weight omega0), a logit model of membership
/// given covariates and mediators is fit to the stack, and the weights are
/// the predicted odds of pseudo-control membership evaluated on the treated
/// units. The result matches the other routes up to a constant factor, which
/// every downstream estimator is invariant to.
pub fn crossworld_expr3(
    stack_spec: &FormulaSpec,
    w0: &WeightSet,
    ds: &Dataset,
    base: Option<&[f64]>,
) -> Result<WeightSet> {
    if w0.target != WeightTarget::P0 {
        return Err(Error::Weights(
            "expr3 needs pseudo-control (p0) weights".into(),
        ));
    }
    let treated_rows = ds.treated_rows().to_vec();
    let mut rows = treated_rows.clone();
    rows.extend_from_slice(&w0.rows);
    let mut weights = vec![1.0; treated_rows.len()];
    weights.extend_from_slice(&w0.values);
    let mut membership = vec![0.0; treated_rows.len()];
    membership.resize(membership.len() + w0.rows.len(), 1.0);

    let stacked = SampleView::from_rows(ds, rows).with_weights(weights)?;
    let model = glm::fit_with_response(
        stack_spec,
        &stacked,
        Family::BinomialLogit,
        &membership,
        base,
    )?;

    let treated = subsample(ds, Which::Treated);
    let probs = glm::predict(&model, &treated)?;
    WeightSet {
        target: WeightTarget::Px,
        rows: treated_rows,
        values: probs.iter().map(|&p| p / (1.0 - p)).collect(),
        stabilized: false,
        method: WeightMethod::Expr3Stacked,
        component_models: vec!["propensity".into(), "stacked_membership".into()],
        n_extreme: w0.n_extreme + count_extreme(&probs),
    }
    .validate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, Dataset, Roles};
    use crate::formula::parse_formula;

    fn roles() -> Roles {
        Roles {
            exposure: "a".into(),
            outcome: "y".into(),
            covariates: vec!["c".into()],
            mediators: vec!["m".into()],
        }
    }

    fn small_ds() -> Dataset {
        // Every (c, m) cell contains both exposure values.
        Dataset::new(
            vec![
                (
                    "c".to_string(),
                    Column::Numeric(vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0]),
                ),
                (
                    "a".to_string(),
                    Column::Numeric(vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]),
                ),
                (
                    "m".to_string(),
                    Column::Numeric(vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]),
                ),
                (
                    "y".to_string(),
                    Column::Numeric(vec![1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0]),
                ),
            ],
            roles(),
        )
        .unwrap()
    }

    #[test]
    fn constant_half_propensity_gives_weight_two() {
        let ds = small_ds();
        let prop = vec![0.5; 8];
        let (w1, w0) = ipw_weights(&prop, &ds).unwrap();
        assert!(w1.values.iter().all(|&w| (w - 2.0).abs() < 1e-12));
        assert!(w0.values.iter().all(|&w| (w - 2.0).abs() < 1e-12));
    }

    #[test]
    fn quarter_propensity_gives_weight_four_on_treated() {
        let ds = small_ds();
        let mut prop = vec![0.5; 8];
        prop[0] = 0.25;
        let (w1, _) = ipw_weights(&prop, &ds).unwrap();
        assert!((w1.values[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn intercept_only_propensity_recovers_treated_fraction() {
        let ds = small_ds();
        let spec = parse_formula("a ~ 1").unwrap();
        let (_, probs) = fit_propensity(&spec, &ds, None).unwrap();
        for p in probs {
            assert!((p - 0.5).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_half_exposure_cm_gives_unit_sx_weights() {
        let ds = small_ds();
        let spec = parse_formula("a ~ 1").unwrap();
        let model = glm::fit(&spec, &SampleView::full(&ds), Family::BinomialLogit, None).unwrap();
        let wsx = sx_weights(&model, &ds).unwrap();
        assert!(wsx.values.iter().all(|&w| (w - 1.0).abs() < 1e-8));
    }

    #[test]
    fn expr2_factorizes_into_sx_times_inverse_probability() {
        let ds = small_ds();
        let acm = parse_formula("a ~ c + m").unwrap();
        let model = glm::fit(&acm, &SampleView::full(&ds), Family::BinomialLogit, None).unwrap();
        let prop_spec = parse_formula("a ~ c").unwrap();
        let (_, prop) = fit_propensity(&prop_spec, &ds, None).unwrap();
        let wx = crossworld_expr2(&prop, &model, &ds).unwrap();
        let wsx = sx_weights(&model, &ds).unwrap();
        for ((&row, &x), &sx) in wx.rows.iter().zip(&wx.values).zip(&wsx.values) {
            let expected = sx / (1.0 - prop[row]);
            assert!((x - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_densities_reduce_expr1_to_ipw() {
        let ds = small_ds();
        let prop = vec![0.4; 8];
        let n_t = ds.treated_rows().len();
        let dens = vec![0.37; n_t];
        let wx = crossworld_expr1(&prop, &dens, &dens, &ds).unwrap();
        let (w1, _) = ipw_weights(&prop, &ds).unwrap();
        for (a, b) in wx.values.iter().zip(&w1.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn stabilized_weights_have_mean_one() {
        let ds = small_ds();
        let prop = vec![0.3, 0.6, 0.4, 0.5, 0.2, 0.7, 0.35, 0.65];
        let (w1, _) = ipw_weights(&prop, &ds).unwrap();
        let st = w1.stabilized();
        let mean: f64 = st.values.iter().sum::<f64>() / st.values.len() as f64;
        assert!((mean - 1.0).abs() < 1e-10);
        assert!(st.stabilized);
    }

    #[test]
    fn ess_matches_definitions() {
        assert!((effective_sample_size(&[3.0; 7]) - 7.0).abs() < 1e-12);
        let dominated = {
            let mut w = vec![0.0001; 50];
            w[0] = 1.0;
            w
        };
        assert!(effective_sample_size(&dominated) < 1.01);
    }

    #[test]
    fn ess_never_exceeds_unit_count() {
        // Cauchy-Schwarz: (sum w)^2 <= n * sum w^2.
        let mut rng_state = 12345u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((rng_state >> 33) as f64 / (1u64 << 31) as f64) + 0.01
        };
        for n in [1usize, 3, 10, 100] {
            let w: Vec<f64> = (0..n).map(|_| next()).collect();
            assert!(effective_sample_size(&w) <= n as f64 + 1e-9);
        }
    }

    #[test]
    fn extreme_propensity_is_flagged() {
        let ds = small_ds();
        let mut prop = vec![0.5; 8];
        prop[1] = 1.0 - 1e-14;
        let (w1, _) = ipw_weights(&prop, &ds).unwrap();
        assert_eq!(w1.n_extreme, 1);
    }

    #[test]
    fn cap_reports_affected_units() {
        let ds = small_ds();
        let prop = vec![0.05, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5];
        let (w1, _) = ipw_weights(&prop, &ds).unwrap();
        let (capped, n) = w1.capped(10.0);
        assert_eq!(n, 1);
        assert!(capped.values.iter().all(|&w| w <= 10.0));
    }
}
