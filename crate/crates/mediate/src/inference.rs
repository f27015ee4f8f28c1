//! Continuous-weights (Dirichlet) bootstrap confidence intervals.
//!
//! A bootstrap replicate is a vector of per-observation weights that gets
//! multiplied into every weighted fit and weighted mean of the estimation
//! pipeline. The continuous scheme draws from the uniform Dirichlet scaled
//! by n, so the weights sum to n, have mean 1 and variance (n-1)/(n+1), and
//! never drop an observation; the multinomial scheme reproduces ordinary
//! resampling as integer counts. Replicates run in parallel with per-index
//! substreams, so results are identical regardless of worker count.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::wstats;

/// Weight-drawing scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    DirichletContinuous,
    MultinomialResampling,
}

/// Bootstrap configuration.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
    pub scheme: Scheme,
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::InvalidConfig(
                "bootstrap replicates must be >= 2".into(),
            ));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig(
                "bootstrap level must be in (0,1)".into(),
            ));
        }
        Ok(())
    }
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 1000,
            level: 0.95,
            seed: 0,
            scheme: Scheme::DirichletContinuous,
        }
    }
}

/// Per-statistic percentile interval.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Interval {
    pub label: String,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub replicate_failures: usize,
    /// Set when more than 20% of replicates failed for this statistic.
    pub unreliable: bool,
}

/// Intervals for a batch of statistics computed from shared replicates.
#[derive(Debug, Clone, serde::Serialize)]
pub struct IntervalReport {
    pub replicates: usize,
    pub level: f64,
    pub scheme: Scheme,
    /// Quantile rule used on the replicate distribution.
    pub quantile_rule: &'static str,
    pub intervals: Vec<Interval>,
}

/// Draw one replicate's observation weights.
pub fn draw_bootstrap_weights<R: Rng>(n: usize, scheme: Scheme, rng: &mut R) -> Vec<f64> {
    assert!(n >= 1);
    match scheme {
        Scheme::DirichletContinuous => {
            // Uniform Dirichlet scaled by n: normalized standard exponentials.
            let draws: Vec<f64> = (0..n)
                .map(|_| rng.sample::<f64, _>(Exp1).max(f64::MIN_POSITIVE))
                .collect();
            let total: f64 = draws.iter().sum();
            let scale = n as f64 / total;
            draws.into_iter().map(|e| e * scale).collect()
        }
        Scheme::MultinomialResampling => {
            let mut counts = vec![0.0; n];
            for _ in 0..n {
                counts[rng.gen_range(0..n)] += 1.0;
            }
            counts
        }
    }
}

/// Percentile bootstrap intervals for a vector of statistics.
///
/// `pipeline(weights, tag)` must re-run the complete estimation under the
/// replicate's observation weights (every weighted fit and weighted mean),
/// returning one value per label (None marks a per-statistic failure, Err a
/// whole-replicate failure). `tag` is the replicate index for deriving any
/// internal RNG substreams. `point` are the full-data estimates (weights
/// all one).
pub fn bootstrap_ci<F>(
    n: usize,
    cfg: &BootstrapConfig,
    labels: &[String],
    point: &[f64],
    pipeline: F,
) -> Result<IntervalReport>
where
    F: Fn(&[f64], u64) -> Result<Vec<Option<f64>>> + Sync,
{
    cfg.validate()?;
    assert_eq!(labels.len(), point.len());

    let replicate_stats: Vec<Result<Vec<Option<f64>>>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(cfg.seed, &[0xB007, b as u64]);
            let w = draw_bootstrap_weights(n, cfg.scheme, &mut rng);
            let stats = pipeline(&w, b as u64)?;
            if stats.len() != labels.len() {
                return Err(Error::Data(
                    "pipeline returned wrong statistic count".into(),
                ));
            }
            Ok(stats)
        })
        .collect();

    let alpha = (1.0 - cfg.level) / 2.0;
    let mut intervals = Vec::with_capacity(labels.len());
    for (j, label) in labels.iter().enumerate() {
        let mut values: Vec<f64> = Vec::with_capacity(cfg.replicates);
        let mut failures = 0usize;
        for rep in &replicate_stats {
            match rep {
                Ok(stats) => match stats[j] {
                    Some(v) if v.is_finite() => values.push(v),
                    _ => failures += 1,
                },
                Err(_) => failures += 1,
            }
        }
        let (lower, upper) = if values.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            values.sort_by(|a, b| a.total_cmp(b));
            (
                wstats::quantile(&values, alpha),
                wstats::quantile(&values, 1.0 - alpha),
            )
        };
        intervals.push(Interval {
            label: label.clone(),
            point: point[j],
            lower,
            upper,
            replicate_failures: failures,
            unreliable: failures * 5 > cfg.replicates,
        });
    }

    Ok(IntervalReport {
        replicates: cfg.replicates,
        level: cfg.level,
        scheme: cfg.scheme,
        quantile_rule: "linear interpolation between order statistics",
        intervals,
    })
}
