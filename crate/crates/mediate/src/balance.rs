//! Multi-way weighted balance diagnostics.
//!
//! Standardized differences compare weighted variable means between pairs of
//! (pseudo) samples, always anchored on the full-sample standard deviation in
//! the denominator. Categorical variables are expanded to per-level
//! indicators. Weighted quantiles at five points are reported for continuous
//! variables as a distributional check beyond means.

use crate::data::{Column, Dataset, SampleView};
use crate::error::{Error, Result};
use crate::wstats;

/// A named weighted sample entering balance comparisons.
pub struct NamedSample<'a> {
    pub name: String,
    pub view: SampleView<'a>,
}

impl<'a> NamedSample<'a> {
    pub fn new(name: impl Into<String>, view: SampleView<'a>) -> Self {
        NamedSample {
            name: name.into(),
            view,
        }
    }
}

/// One comparison row: weighted means of one variable in two samples and
/// their standardized difference.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BalanceRow {
    pub sample_a: String,
    pub sample_b: String,
    pub variable: String,
    pub mean_a: f64,
    pub mean_b: f64,
    /// (mean_a - mean_b) / anchor_sd; 0/0 defined as 0, x/0 as +/- infinity.
    pub std_diff: f64,
}

/// Weighted quantiles of one continuous variable in one sample.
#[derive(Debug, Clone, serde::Serialize)]
pub struct QuantileRow {
    pub sample: String,
    pub variable: String,
    /// 0.05 / 0.25 / 0.5 / 0.75 / 0.95 weighted quantiles.
    pub quantiles: [f64; 5],
}

/// Balance table over a set of comparisons.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BalanceReport {
    pub comparisons: Vec<BalanceRow>,
    /// Full-sample standard deviation per expanded variable.
    pub anchor_sd: Vec<(String, f64)>,
    pub quantiles: Vec<QuantileRow>,
}

impl BalanceReport {
    pub fn max_abs_std_diff(&self) -> f64 {
        self.comparisons
            .iter()
            .map(|r| r.std_diff.abs())
            .fold(0.0, f64::max)
    }

    /// Largest |standardized difference| among rows comparing the two named
    /// samples (in either order) over the given variables; None when no such
    /// row exists.
    pub fn max_abs_between(&self, a: &str, b: &str) -> Option<f64> {
        let rows: Vec<&BalanceRow> = self
            .comparisons
            .iter()
            .filter(|r| {
                (r.sample_a == a && r.sample_b == b) || (r.sample_a == b && r.sample_b == a)
            })
            .collect();
        if rows.is_empty() {
            None
        } else {
            Some(rows.iter().map(|r| r.std_diff.abs()).fold(0.0, f64::max))
        }
    }
}

/// A variable expanded into one or more numeric columns over the full dataset.
struct Expanded {
    name: String,
    values: Vec<f64>,
}

fn expand_variable(ds: &Dataset, var: &str) -> Result<Vec<Expanded>> {
    match ds.column(var)? {
        Column::Numeric(v) => Ok(vec![Expanded {
            name: var.to_string(),
            values: v.clone(),
        }]),
        Column::Categorical { codes, levels } => {
            let mut out = Vec::with_capacity(levels.len());
            for (j, level) in levels.iter().enumerate() {
                let values: Vec<f64> = codes
                    .iter()
                    .map(|&c| if c as usize == j { 1.0 } else { 0.0 })
                    .collect();
                out.push(Expanded {
                    name: format!("{var}={level}"),
                    values,
                });
            }
            Ok(out)
        }
    }
}

fn sample_mean(expanded: &Expanded, sample: &SampleView<'_>) -> f64 {
    let vals: Vec<f64> = sample.rows().iter().map(|&i| expanded.values[i]).collect();
    let w = sample.effective_weights(None);
    wstats::weighted_mean(&vals, &w)
}

fn std_diff(mean_a: f64, mean_b: f64, sd: f64) -> f64 {
    let diff = mean_a - mean_b;
    if sd > 0.0 {
        diff / sd
    } else if diff == 0.0 {
        0.0
    } else {
        // Zero anchor spread with a nonzero difference.
        f64::INFINITY.copysign(diff)
    }
}

/// Requested comparison between two samples over a variable list.
pub struct ComparisonSpec<'s> {
    pub sample_a: &'s str,
    pub sample_b: &'s str,
    pub variables: Vec<String>,
}

/// Compute a balance table for explicit sample pairs.
///
/// The anchor standard deviation is always the unweighted full-sample SD of
/// the (expanded) variable, so balance numbers stay comparable across pseudo
/// samples and are invariant to positive rescaling of any weight vector.
pub fn balance_table(
    ds: &Dataset,
    samples: &[NamedSample<'_>],
    comparisons: &[ComparisonSpec<'_>],
) -> Result<BalanceReport> {
    let find = |name: &str| -> Result<&NamedSample> {
        samples
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Data(format!("unknown balance sample `{name}`")))
    };

    let mut rows = Vec::new();
    let mut anchors: Vec<(String, f64)> = Vec::new();
    let mut quantiles = Vec::new();
    let mut quantiles_done: Vec<(String, String)> = Vec::new();

    for cmp in comparisons {
        let a = find(cmp.sample_a)?;
        let b = find(cmp.sample_b)?;
        for var in &cmp.variables {
            for expanded in expand_variable(ds, var)? {
                let sd = match anchors.iter().find(|(n, _)| n == &expanded.name) {
                    Some((_, sd)) => *sd,
                    None => {
                        let sd = wstats::sd(&expanded.values);
                        anchors.push((expanded.name.clone(), sd));
                        sd
                    }
                };
                let mean_a = sample_mean(&expanded, &a.view);
                let mean_b = sample_mean(&expanded, &b.view);
                rows.push(BalanceRow {
                    sample_a: a.name.clone(),
                    sample_b: b.name.clone(),
                    variable: expanded.name.clone(),
                    mean_a,
                    mean_b,
                    std_diff: std_diff(mean_a, mean_b, sd),
                });
            }
            // Distributional check for continuous variables.
            if ds.column(var)?.is_numeric() && !ds.column(var)?.is_binary01() {
                for s in [a, b] {
                    let key = (s.name.clone(), var.clone());
                    if quantiles_done.contains(&key) {
                        continue;
                    }
                    quantiles_done.push(key);
                    let vals: Vec<f64> = s
                        .view
                        .rows()
                        .iter()
                        .map(|&i| ds.numeric(var).unwrap()[i])
                        .collect();
                    let w = s.view.effective_weights(None);
                    let q = |p| wstats::weighted_quantile(&vals, &w, p);
                    quantiles.push(QuantileRow {
                        sample: s.name.clone(),
                        variable: var.clone(),
                        quantiles: [q(0.05), q(0.25), q(0.5), q(0.75), q(0.95)],
                    });
                }
            }
        }
    }
    Ok(BalanceReport {
        comparisons: rows,
        anchor_sd: anchors,
        quantiles,
    })
}

/// The standard comparison set for mediation pseudo samples: each pseudo
/// sample against the full sample and against each other on covariates, plus
/// the cross-world versus pseudo-control comparison on covariates and
/// mediators.
pub fn standard_comparisons<'s>(
    covariates: &[String],
    mediators: &[String],
    pseudo_names: &'s [&'s str],
) -> Vec<ComparisonSpec<'s>> {
    let mut cmps = Vec::new();
    for &name in pseudo_names {
        cmps.push(ComparisonSpec {
            sample_a: name,
            sample_b: "full",
            variables: covariates.to_vec(),
        });
    }
    if pseudo_names.contains(&"p1") && pseudo_names.contains(&"p0") {
        cmps.push(ComparisonSpec {
            sample_a: "p1",
            sample_b: "p0",
            variables: covariates.to_vec(),
        });
    }
    if pseudo_names.contains(&"px") && pseudo_names.contains(&"p0") {
        let mut vars = covariates.to_vec();
        vars.extend_from_slice(mediators);
        cmps.push(ComparisonSpec {
            sample_a: "px",
            sample_b: "p0",
            variables: vars,
        });
    }
    cmps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, Dataset, Roles};

    fn ds() -> Dataset {
        Dataset::new(
            vec![
                (
                    "c".to_string(),
                    Column::Numeric(vec![0.2, 1.4, -0.3, 0.8, 0.1, 1.9]),
                ),
                (
                    "g".to_string(),
                    Column::Categorical {
                        codes: vec![0, 1, 0, 1, 0, 1],
                        levels: vec!["u".into(), "v".into()],
                    },
                ),
                (
                    "a".to_string(),
                    Column::Numeric(vec![1., 0., 1., 0., 1., 0.]),
                ),
                (
                    "m".to_string(),
                    Column::Numeric(vec![0., 1., 1., 0., 1., 0.]),
                ),
                (
                    "y".to_string(),
                    Column::Numeric(vec![1., 0., 1., 1., 0., 1.]),
                ),
            ],
            Roles {
                exposure: "a".into(),
                outcome: "y".into(),
                covariates: vec!["c".into(), "g".into()],
                mediators: vec!["m".into()],
            },
        )
        .unwrap()
    }

    #[test]
    fn full_sample_against_itself_is_all_zero() {
        let ds = ds();
        let samples = vec![
            NamedSample::new("full", SampleView::full(&ds)),
            NamedSample::new("p1", SampleView::full(&ds)),
        ];
        let cmps = vec![ComparisonSpec {
            sample_a: "p1",
            sample_b: "full",
            variables: vec!["c".into(), "g".into()],
        }];
        let report = balance_table(&ds, &samples, &cmps).unwrap();
        assert!(report.comparisons.iter().all(|r| r.std_diff == 0.0));
    }

    #[test]
    fn balance_is_invariant_to_weight_rescaling() {
        let ds = ds();
        let rows: Vec<usize> = vec![0, 2, 4];
        let w = vec![1.0, 2.5, 0.5];
        let scaled: Vec<f64> = w.iter().map(|x| 37.0 * x).collect();
        let mk = |weights: Vec<f64>| {
            vec![
                NamedSample::new("full", SampleView::full(&ds)),
                NamedSample::new(
                    "p1",
                    SampleView::from_rows(&ds, rows.clone())
                        .with_weights(weights)
                        .unwrap(),
                ),
            ]
        };
        let cmps = || {
            vec![ComparisonSpec {
                sample_a: "p1",
                sample_b: "full",
                variables: vec!["c".into()],
            }]
        };
        let r1 = balance_table(&ds, &mk(w), &cmps()).unwrap();
        let r2 = balance_table(&ds, &mk(scaled), &cmps()).unwrap();
        for (a, b) in r1.comparisons.iter().zip(&r2.comparisons) {
            assert!((a.std_diff - b.std_diff).abs() < 1e-12);
        }
    }

    #[test]
    fn near_equal_prevalences_give_near_zero_smd() {
        // Binary prevalence 0.447 in one sample vs 0.448 in the anchor, with
        // anchor SD about 0.497: SMD about 0.002.
        let sd = (0.448f64 * (1.0 - 0.448)).sqrt();
        let smd = std_diff(0.447, 0.448, sd);
        assert!(smd.abs() < 0.01);
    }

    #[test]
    fn zero_anchor_sd_with_nonzero_diff_reports_infinite() {
        assert!(std_diff(0.3, 0.1, 0.0).is_infinite());
        assert_eq!(std_diff(0.2, 0.2, 0.0), 0.0);
    }

    #[test]
    fn categorical_variables_expand_per_level() {
        let ds = ds();
        let samples = vec![
            NamedSample::new("full", SampleView::full(&ds)),
            NamedSample::new("p1", SampleView::from_rows(&ds, vec![0, 2, 4])),
        ];
        let cmps = vec![ComparisonSpec {
            sample_a: "p1",
            sample_b: "full",
            variables: vec!["g".into()],
        }];
        let report = balance_table(&ds, &samples, &cmps).unwrap();
        let vars: Vec<&str> = report
            .comparisons
            .iter()
            .map(|r| r.variable.as_str())
            .collect();
        assert_eq!(vars, vec!["g=u", "g=v"]);
    }

    #[test]
    fn standard_comparisons_cover_the_required_pairs() {
        let cov = vec!["c".to_string()];
        let med = vec!["m".to_string()];
        let cmps = standard_comparisons(&cov, &med, &["p1", "p0", "px"]);
        let pairs: Vec<(String, String)> = cmps
            .iter()
            .map(|c| (c.sample_a.to_string(), c.sample_b.to_string()))
            .collect();
        assert!(pairs.contains(&("p1".into(), "full".into())));
        assert!(pairs.contains(&("p0".into(), "full".into())));
        assert!(pairs.contains(&("px".into(), "full".into())));
        assert!(pairs.contains(&("p1".into(), "p0".into())));
        assert!(pairs.contains(&("px".into(), "p0".into())));
        let px_p0 = cmps.last().unwrap();
        assert!(px_p0.variables.contains(&"m".to_string()));
    }
}
