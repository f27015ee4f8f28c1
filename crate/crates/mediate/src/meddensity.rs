//! Factorized conditional mediator densities.
//!
//! The joint density of a (possibly multivariate) mediator block given
//! covariates is factored into a chain of one-dimensional conditionals in a
//! user-chosen order: a logit model for each binary mediator and a
//! Gaussian linear model (constant residual variance) for each continuous
//! one, each conditioning on the covariates and the mediators earlier in the
//! order. The fitted object supports per-unit density evaluation, sequential
//! simulation, and exact lattice enumeration when all factors are binary.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::SampleView;
use crate::error::{Error, Result};
use crate::formula::FormulaSpec;
use crate::glm::{self, Family, FittedModel};

const PROB_CLIP: f64 = 1e-12;

/// What kind of conditional model a factor uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorKind {
    Binary,
    Continuous,
}

/// One fitted factor of the chain.
#[derive(Debug, Clone)]
pub struct DensityFactor {
    pub mediator: String,
    pub kind: FactorKind,
    pub model: FittedModel,
    /// Residual variance (continuous factors only).
    pub sigma2: Option<f64>,
}

/// Sample a factorized density was fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FittedOn {
    ControlSubsample,
    PseudoControl,
    TreatedSubsample,
    PseudoSample,
}

/// Factorized conditional mediator density P(M | C) on one arm.
#[derive(Debug, Clone)]
pub struct FactorizedDensity {
    pub order: Vec<String>,
    pub factors: Vec<DensityFactor>,
    pub fitted_on: FittedOn,
}

fn clip_prob(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

/// Fit the factor chain in `order` on `sample` (weighted when the sample
/// carries weights). Each factor's formula may condition on covariates and
/// on mediators earlier in the order only.
pub fn fit_density(
    order: &[String],
    specs: &[FormulaSpec],
    sample: &SampleView<'_>,
    fitted_on: FittedOn,
    base: Option<&[f64]>,
) -> Result<FactorizedDensity> {
    if order.is_empty() {
        return Err(Error::Density("mediator order is empty".into()));
    }
    if order.len() != specs.len() {
        return Err(Error::Density(
            "one formula per mediator factor is required".into(),
        ));
    }
    let ds = sample.dataset();
    let mut factors = Vec::with_capacity(order.len());
    for (k, (name, spec)) in order.iter().zip(specs).enumerate() {
        if &spec.response != name {
            return Err(Error::Density(format!(
                "factor {k} formula response `{}` does not match mediator `{name}`",
                spec.response
            )));
        }
        for var in spec.rhs_variables() {
            if let Some(pos) = order.iter().position(|m| *m == var) {
                if pos >= k {
                    return Err(Error::Density(format!(
                        "factor for `{name}` conditions on `{var}`, which is not earlier in the order"
                    )));
                }
            }
        }
        let col = ds.column(name)?;
        let kind = if col.is_binary01() {
            FactorKind::Binary
        } else {
            FactorKind::Continuous
        };
        if !col.is_numeric() {
            return Err(Error::Density(format!(
                "mediator `{name}` must be numeric (binary 0/1 or continuous)"
            )));
        }
        let factor = match kind {
            FactorKind::Binary => {
                let model = glm::fit(spec, sample, Family::BinomialLogit, base)?;
                DensityFactor {
                    mediator: name.clone(),
                    kind,
                    model,
                    sigma2: None,
                }
            }
            FactorKind::Continuous => {
                let model = glm::fit(spec, sample, Family::GaussianIdentity, base)?;
                // Residual variance: weighted RSS over the sum of weights.
                let w = sample.effective_weights(base);
                let preds = glm::predict(&model, sample)?;
                let obs = match sample.resolve(name)? {
                    crate::data::ResolvedVar::Numeric(v) => v.into_owned(),
                    _ => unreachable!("checked numeric above"),
                };
                let mut rss = 0.0;
                let mut sw = 0.0;
                for ((o, p), wi) in obs.iter().zip(&preds).zip(&w) {
                    rss += wi * (o - p) * (o - p);
                    sw += wi;
                }
                let sigma2 = rss / sw;
                if !sigma2.is_finite() || sigma2 <= 0.0 {
                    return Err(Error::Density(format!(
                        "non-positive residual variance for continuous mediator `{name}`"
                    )));
                }
                DensityFactor {
                    mediator: name.clone(),
                    kind,
                    model,
                    sigma2: Some(sigma2),
                }
            }
        };
        factors.push(factor);
    }
    Ok(FactorizedDensity {
        order: order.to_vec(),
        factors,
        fitted_on,
    })
}

/// Per-unit joint density of the observed mediator values over `sample`:
/// the product over factors of the Bernoulli probability (binary) or normal
/// density with fitted mean and residual variance (continuous).
pub fn density_at(fd: &FactorizedDensity, sample: &SampleView<'_>) -> Result<Vec<f64>> {
    let n = sample.len();
    let mut dens = vec![1.0; n];
    for factor in &fd.factors {
        let preds = glm::predict(&factor.model, sample)?;
        let obs = match sample.resolve(&factor.mediator)? {
            crate::data::ResolvedVar::Numeric(v) => v.into_owned(),
            _ => {
                return Err(Error::Density(format!(
                    "mediator `{}` not numeric",
                    factor.mediator
                )))
            }
        };
        match factor.kind {
            FactorKind::Binary => {
                for i in 0..n {
                    let p = clip_prob(preds[i]);
                    dens[i] *= if obs[i] == 1.0 { p } else { 1.0 - p };
                }
            }
            FactorKind::Continuous => {
                let s2 = factor.sigma2.expect("continuous factor has variance");
                let norm = 1.0 / (2.0 * std::f64::consts::PI * s2).sqrt();
                for i in 0..n {
                    let r = obs[i] - preds[i];
                    dens[i] *= norm * (-r * r / (2.0 * s2)).exp();
                }
            }
        }
    }
    Ok(dens)
}

/// Simulate one mediator block for every unit of `sample`, drawing factors
/// sequentially in the fitted order. Deterministic given the stream state.
///
/// Returns one vector per mediator, aligned to the sample's rows.
pub fn simulate<R: Rng>(
    fd: &FactorizedDensity,
    sample: &SampleView<'_>,
    rng: &mut R,
) -> Result<Vec<(String, Vec<f64>)>> {
    let mut current = sample.clone();
    let mut out = Vec::with_capacity(fd.factors.len());
    for factor in &fd.factors {
        let preds = glm::predict(&factor.model, &current)?;
        let draws: Vec<f64> = match factor.kind {
            FactorKind::Binary => preds
                .iter()
                .map(|&p| {
                    let p = clip_prob(p);
                    if rng.gen::<f64>() < p {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
            FactorKind::Continuous => {
                let sd = factor
                    .sigma2
                    .expect("continuous factor has variance")
                    .sqrt();
                preds
                    .iter()
                    .map(|&mu| {
                        let z: f64 = rng.sample(StandardNormal);
                        mu + sd * z
                    })
                    .collect()
            }
        };
        // Later factors condition on the values drawn so far.
        current = current.with_override(&factor.mediator, draws.clone())?;
        out.push((factor.mediator.clone(), draws));
    }
    Ok(out)
}

/// One lattice point: a mediator assignment and its per-unit probability.
pub type LatticePoint = (Vec<(String, f64)>, Vec<f64>);

/// Exact enumeration over the mediator lattice when all factors are binary.
///
/// Returns every lattice assignment with its per-unit probability: one
/// `(assignment, probabilities)` pair per point, where `assignment` maps
/// mediator names to 0/1 values and `probabilities` is aligned to the
/// sample's rows.
pub fn lattice(fd: &FactorizedDensity, sample: &SampleView<'_>) -> Result<Vec<LatticePoint>> {
    if fd.factors.iter().any(|f| f.kind != FactorKind::Binary) {
        return Err(Error::Density(
            "lattice enumeration requires all-binary mediators".into(),
        ));
    }
    let k = fd.factors.len();
    let n = sample.len();
    let mut out = Vec::with_capacity(1 << k);
    for mask in 0u32..(1 << k) {
        let assignment: Vec<(String, f64)> = fd
            .factors
            .iter()
            .enumerate()
            .map(|(j, f)| {
                (
                    f.mediator.clone(),
                    if mask & (1 << j) != 0 { 1.0 } else { 0.0 },
                )
            })
            .collect();
        let mut view = sample.clone();
        for (name, value) in &assignment {
            view = view.with_override(name, vec![*value; n])?;
        }
        let probs = density_at(fd, &view)?;
        out.push((assignment, probs));
    }
    Ok(out)
}
