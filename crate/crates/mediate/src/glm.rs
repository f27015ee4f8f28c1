//! Weighted generalized linear models with canonical links.
//!
//! Two families are supported: Gaussian with identity link (weighted least
//! squares) and binomial with logit link (IRLS, accepting fractional
//! responses in [0,1] as a quasi-likelihood). Every design carries an
//! intercept, so fitted models satisfy weighted mean recovery on their
//! fitting sample: the weighted average prediction equals the weighted
//! average response. The weighted-model estimators depend on exactly this
//! property.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::data::{ResolvedVar, SampleView};
use crate::error::{Error, Result};
use crate::formula::{build_design, DesignMatrix, FormulaSpec, SplineKnots};

/// Model family (canonical links only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    GaussianIdentity,
    BinomialLogit,
}

const MAX_IRLS_ITERATIONS: usize = 100;
const COEF_TOLERANCE: f64 = 1e-8;
const DEVIANCE_TOLERANCE: f64 = 1e-10;
const SEPARATION_BOUND: f64 = 30.0;

/// Convergence and diagnostic information from one fit.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FitSummary {
    pub n: usize,
    pub sum_weights: f64,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
    /// |sum(w*yhat) - sum(w*y)| / max(1, |sum(w*y)|) on the fitting sample.
    pub mean_recovery_residual: f64,
}

/// A fitted weighted GLM, carrying everything needed to predict on new data.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub spec: FormulaSpec,
    pub family: Family,
    pub coefficients: Vec<f64>,
    pub column_names: Vec<String>,
    pub knots: SplineKnots,
    pub levels: BTreeMap<String, Vec<String>>,
    /// For bounded-response fits: (lower, upper) of the original scale.
    pub bounds: Option<(f64, f64)>,
    pub summary: FitSummary,
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

/// Weighted cross products: returns (X'WX, X'Wz).
fn cross_products(design: &DesignMatrix, w: &[f64], z: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let p = design.p;
    let mut xtwx = DMatrix::<f64>::zeros(p, p);
    let mut xtwz = DVector::<f64>::zeros(p);
    for (i, row) in design.rows().enumerate() {
        let wi = w[i];
        if wi == 0.0 {
            continue;
        }
        let wz = wi * z[i];
        for a in 0..p {
            let xa = row[a];
            if xa == 0.0 {
                continue;
            }
            xtwz[a] += wz * xa;
            let wxa = wi * xa;
            for b in a..p {
                xtwx[(a, b)] += wxa * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtwx[(a, b)] = xtwx[(b, a)];
        }
    }
    (xtwx, xtwz)
}

/// Identify columns that are linear combinations of earlier ones, by a
/// Cholesky sweep over the weighted Gram matrix.
fn collinear_columns(design: &DesignMatrix, w: &[f64]) -> Vec<String> {
    let p = design.p;
    let (gram, _) = cross_products(design, w, &vec![0.0; design.n]);
    let scale = (0..p).map(|j| gram[(j, j)]).fold(0.0f64, f64::max).max(1.0);
    let tol = scale * 1e-10;
    let mut l = DMatrix::<f64>::zeros(p, p);
    let mut dropped = Vec::new();
    let mut alive = vec![true; p];
    for j in 0..p {
        let mut d = gram[(j, j)];
        for k in 0..j {
            if alive[k] {
                d -= l[(j, k)] * l[(j, k)];
            }
        }
        if d <= tol {
            dropped.push(design.column_names[j].clone());
            alive[j] = false;
            continue;
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in j + 1..p {
            let mut v = gram[(i, j)];
            for k in 0..j {
                if alive[k] {
                    v -= l[(i, k)] * l[(j, k)];
                }
            }
            l[(i, j)] = v / dj;
        }
    }
    if dropped.is_empty() {
        dropped.push("(unidentified)".into());
    }
    dropped
}

fn solve_weighted(design: &DesignMatrix, w: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    let (xtwx, xtwz) = cross_products(design, w, z);
    match Cholesky::new(xtwx) {
        Some(chol) => Ok(chol.solve(&xtwz).iter().copied().collect()),
        None => Err(Error::RankDeficient(collinear_columns(design, w))),
    }
}

fn weighted_sum(values: &[f64], w: &[f64]) -> f64 {
    values.iter().zip(w).map(|(v, wi)| v * wi).sum()
}

fn binomial_deviance(y: &[f64], mu: &[f64], w: &[f64]) -> f64 {
    let mut dev = 0.0;
    for ((&yi, &mi), &wi) in y.iter().zip(mu).zip(w) {
        let mi = clamp_prob(mi);
        let mut d = 0.0;
        if yi > 0.0 {
            d += yi * (yi / mi).ln();
        }
        if yi < 1.0 {
            d += (1.0 - yi) * ((1.0 - yi) / (1.0 - mi)).ln();
        }
        dev += 2.0 * wi * d;
    }
    dev
}

fn fit_design(
    design: &DesignMatrix,
    y: &[f64],
    w: &[f64],
    family: Family,
) -> Result<(Vec<f64>, FitSummary)> {
    let n = design.n;
    let sum_w: f64 = w.iter().sum();
    if sum_w <= 0.0 || w.iter().all(|&x| x == 0.0) {
        return Err(Error::AllZeroWeights);
    }

    match family {
        Family::GaussianIdentity => {
            let coef = solve_weighted(design, w, y)?;
            let mut dev = 0.0;
            let mut wyhat = 0.0;
            for (i, row) in design.rows().enumerate() {
                let eta: f64 = row.iter().zip(&coef).map(|(x, b)| x * b).sum();
                let r = y[i] - eta;
                dev += w[i] * r * r;
                wyhat += w[i] * eta;
            }
            let wy = weighted_sum(y, w);
            let summary = FitSummary {
                n,
                sum_weights: sum_w,
                converged: true,
                iterations: 1,
                deviance: dev,
                mean_recovery_residual: (wyhat - wy).abs() / wy.abs().max(1.0),
            };
            Ok((coef, summary))
        }
        Family::BinomialLogit => {
            if let Some(&bad) = y.iter().find(|v| **v < 0.0 || **v > 1.0) {
                return Err(Error::ResponseOutOfBounds {
                    family: "binomial-logit",
                    value: bad,
                });
            }
            let p = design.p;
            let mut coef = vec![0.0; p];
            let ybar = clamp_prob(weighted_sum(y, w) / sum_w);
            coef[0] = (ybar / (1.0 - ybar)).ln();

            let mut eta = vec![0.0; n];
            let mut mu = vec![0.0; n];
            let mut s = vec![0.0; n];
            let mut z = vec![0.0; n];
            let mut deviance = f64::INFINITY;
            for iter in 1..=MAX_IRLS_ITERATIONS {
                for (i, row) in design.rows().enumerate() {
                    eta[i] = row.iter().zip(&coef).map(|(x, b)| x * b).sum();
                    mu[i] = sigmoid(eta[i]);
                    let v = (mu[i] * (1.0 - mu[i])).max(1e-12);
                    s[i] = w[i] * v;
                    z[i] = eta[i] + (y[i] - mu[i]) / v;
                }
                let new_coef = solve_weighted(design, &s, &z)?;
                if new_coef.iter().any(|b| b.abs() > SEPARATION_BOUND) {
                    return Err(Error::Separation(SEPARATION_BOUND));
                }
                let delta = new_coef
                    .iter()
                    .zip(&coef)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                coef = new_coef;
                for (i, row) in design.rows().enumerate() {
                    eta[i] = row.iter().zip(&coef).map(|(x, b)| x * b).sum();
                    mu[i] = sigmoid(eta[i]);
                }
                let new_dev = binomial_deviance(y, &mu, w);
                let dev_change = (deviance - new_dev).abs();
                deviance = new_dev;
                if delta < COEF_TOLERANCE || dev_change < DEVIANCE_TOLERANCE {
                    let wyhat = weighted_sum(&mu, w);
                    let wy = weighted_sum(y, w);
                    let summary = FitSummary {
                        n,
                        sum_weights: sum_w,
                        converged: true,
                        iterations: iter,
                        deviance,
                        mean_recovery_residual: (wyhat - wy).abs() / wy.abs().max(1.0),
                    };
                    return Ok((coef, summary));
                }
            }
            Err(Error::NonConvergence(MAX_IRLS_ITERATIONS))
        }
    }
}

fn resolve_response(spec: &FormulaSpec, sample: &SampleView<'_>) -> Result<Vec<f64>> {
    match sample.resolve(&spec.response)? {
        ResolvedVar::Numeric(v) => Ok(v.into_owned()),
        ResolvedVar::Categorical { .. } => Err(Error::Data(format!(
            "response `{}` must be numeric",
            spec.response
        ))),
    }
}

/// Fit `spec` on `sample` with the sample's analysis weights times optional
/// per-dataset-row `base` weights (all ones when `None`).
pub fn fit(
    spec: &FormulaSpec,
    sample: &SampleView<'_>,
    family: Family,
    base: Option<&[f64]>,
) -> Result<FittedModel> {
    let y = resolve_response(spec, sample)?;
    fit_with_response(spec, sample, family, &y, base)
}

/// Fit with an explicit response vector (used for constructed responses such
/// as predicted cross-world outcomes or effect proxies).
pub fn fit_with_response(
    spec: &FormulaSpec,
    sample: &SampleView<'_>,
    family: Family,
    y: &[f64],
    base: Option<&[f64]>,
) -> Result<FittedModel> {
    if y.len() != sample.len() {
        return Err(Error::Data(format!(
            "response length {} does not match sample size {}",
            y.len(),
            sample.len()
        )));
    }
    let design = build_design(spec, sample, None)?;
    let w = sample.effective_weights(base);
    let (coefficients, summary) = fit_design(&design, y, &w, family)?;
    Ok(FittedModel {
        spec: spec.clone(),
        family,
        coefficients,
        column_names: design.column_names,
        knots: design.knots,
        levels: design.levels,
        bounds: None,
        summary,
    })
}

/// Fit a response bounded in `[lower, upper]` by mapping it onto [0,1],
/// fitting a fractional-response logit, and back-transforming predictions.
pub fn fit_transformed_bounded(
    spec: &FormulaSpec,
    sample: &SampleView<'_>,
    y: &[f64],
    lower: f64,
    upper: f64,
    base: Option<&[f64]>,
) -> Result<FittedModel> {
    assert!(upper > lower);
    if let Some(&bad) = y.iter().find(|v| **v < lower || **v > upper) {
        return Err(Error::ResponseOutOfBounds {
            family: "bounded-logit",
            value: bad,
        });
    }
    let transformed: Vec<f64> = y.iter().map(|v| (v - lower) / (upper - lower)).collect();
    let mut model = fit_with_response(spec, sample, Family::BinomialLogit, &transformed, base)?;
    model.bounds = Some((lower, upper));
    Ok(model)
}

/// Map a bounded value onto [0,1].
pub fn bounded_transform(y: f64, lower: f64, upper: f64) -> f64 {
    (y - lower) / (upper - lower)
}

/// Inverse of [`bounded_transform`].
pub fn bounded_back_transform(t: f64, lower: f64, upper: f64) -> f64 {
    t * (upper - lower) + lower
}

/// Per-unit mean-response predictions over `sample`, reusing the knots and
/// categorical level layout recorded at fit time.
pub fn predict(model: &FittedModel, sample: &SampleView<'_>) -> Result<Vec<f64>> {
    let design = build_design(&model.spec, sample, Some((&model.knots, &model.levels)))?;
    if design.p != model.coefficients.len() {
        return Err(Error::Data(format!(
            "design width {} does not match fitted coefficient count {}",
            design.p,
            model.coefficients.len()
        )));
    }
    let mut out = Vec::with_capacity(design.n);
    for row in design.rows() {
        let eta: f64 = row
            .iter()
            .zip(&model.coefficients)
            .map(|(x, b)| x * b)
            .sum();
        let pred = match model.family {
            Family::GaussianIdentity => eta,
            Family::BinomialLogit => {
                let p = clamp_prob(sigmoid(eta));
                match model.bounds {
                    Some((lo, hi)) => bounded_back_transform(p, lo, hi),
                    None => p,
                }
            }
        };
        if !pred.is_finite() {
            return Err(Error::Data("non-finite prediction".into()));
        }
        out.push(pred);
    }
    Ok(out)
}
