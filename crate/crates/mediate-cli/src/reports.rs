//! Report file writers. Every output embeds the config hash, the effective
//! seed, and the tool version in a leading comment line (CSV) or dedicated
//! fields (JSON).

use std::fmt::Write as _;
use std::path::Path;

use mediate::balance::BalanceReport;
use mediate::estimators::{EstimatorOutcome, ModelSummary};
use mediate::inference::IntervalReport;
use mediate::simlab::ExperimentTable;
use mediate::weights::WeightDiagnostics;

pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: &'static str,
}

impl Provenance {
    pub fn comment_line(&self) -> String {
        format!(
            "# config_hash={} seed={} version={}\n",
            self.config_hash, self.seed, self.version
        )
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// estimates.csv: one row per estimator, effects as columns, interval
/// columns when a bootstrap report is attached.
pub fn estimates_csv(
    outcomes: &[EstimatorOutcome],
    intervals: Option<&IntervalReport>,
    prov: &Provenance,
) -> String {
    let mut s = prov.comment_line();
    s.push_str("estimator,robustness,ey1,ey0,ey1m0,nde0,nie1,te");
    if intervals.is_some() {
        s.push_str(",nde0_lower,nde0_upper,nie1_lower,nie1_upper,te_lower,te_upper");
    }
    s.push_str(",error\n");
    for (i, out) in outcomes.iter().enumerate() {
        match &out.result {
            Ok(r) => {
                let _ = write!(
                    s,
                    "{},{:?},{},{},{},{},{},{}",
                    csv_field(&out.id),
                    r.robustness,
                    fmt_opt(r.ey1),
                    fmt_opt(r.ey0),
                    fmt_opt(r.ey1m0),
                    r.nde0,
                    r.nie1,
                    r.te
                );
                if let Some(report) = intervals {
                    for k in 0..3 {
                        let iv = &report.intervals[i * 3 + k];
                        let _ = write!(s, ",{},{}", iv.lower, iv.upper);
                    }
                }
                s.push_str(",\n");
            }
            Err(e) => {
                let _ = write!(s, "{},,,,,,,", csv_field(&out.id));
                if intervals.is_some() {
                    s.push_str(",,,,,,");
                }
                let _ = writeln!(s, ",{}", csv_field(&e.to_string()));
            }
        }
    }
    s
}

pub fn balance_csv(report: &BalanceReport, prov: &Provenance) -> String {
    let mut s = prov.comment_line();
    s.push_str("sample_a,sample_b,variable,mean_a,mean_b,std_diff\n");
    for row in &report.comparisons {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            csv_field(&row.sample_a),
            csv_field(&row.sample_b),
            csv_field(&row.variable),
            row.mean_a,
            row.mean_b,
            row.std_diff
        );
    }
    s
}

pub fn experiment_csv(tables: &[ExperimentTable], coverage: bool, prov: &Provenance) -> String {
    let mut s = prov.comment_line();
    s.push_str(
        "scenario,estimator,effect,truth,mean_estimate,bias,empirical_se,rmse,standardized_bias",
    );
    if coverage {
        s.push_str(",coverage");
    }
    s.push_str(",failures,reps_used\n");
    for table in tables {
        for row in &table.rows {
            let _ = write!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                csv_field(&table.scenario),
                csv_field(&row.estimator),
                row.effect,
                row.truth,
                row.mean_estimate,
                row.bias,
                row.empirical_se,
                row.rmse,
                row.standardized_bias
            );
            if coverage {
                let _ = write!(s, ",{}", fmt_opt(row.coverage));
            }
            let _ = writeln!(s, ",{},{}", row.failures, row.reps_used);
        }
    }
    s
}

/// Full JSON run report for the estimate command.
#[derive(serde::Serialize)]
pub struct RunReport<'a> {
    pub config_hash: &'a str,
    pub seed: u64,
    pub version: &'a str,
    pub ingest: &'a mediate::data::IngestReport,
    pub estimates: Vec<EstimateJson<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intervals: Option<&'a IntervalReport>,
    pub weight_diagnostics: &'a [WeightDiagnostics],
    pub model_summaries: &'a [ModelSummary],
    pub notes: &'a [String],
}

#[derive(serde::Serialize)]
pub struct EstimateJson<'a> {
    pub estimator: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<&'a mediate::estimators::EstimateReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Reserved for an asymptotic variance estimate; not populated.
    pub asymptotic_variance: Option<f64>,
}

pub fn estimate_json(outcomes: &[EstimatorOutcome]) -> Vec<EstimateJson<'_>> {
    outcomes
        .iter()
        .map(|o| match &o.result {
            Ok(r) => EstimateJson {
                estimator: &o.id,
                report: Some(r),
                error: None,
                asymptotic_variance: None,
            },
            Err(e) => EstimateJson {
                estimator: &o.id,
                report: None,
                error: Some(e.to_string()),
                asymptotic_variance: None,
            },
        })
        .collect()
}

fn csv_field(raw: &str) -> String {
    if raw.contains(',') || raw.contains('"') || raw.contains('\n') {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw.to_string()
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
    }
    std::fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}
