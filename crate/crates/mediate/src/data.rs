//! Columnar dataset model with declared variable roles.
//!
//! A [`Dataset`] holds named numeric or categorical columns plus a role map
//! (covariates, one binary exposure, a mediator block, one outcome). Datasets
//! are immutable after construction and safe to share across threads.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Role a column plays in the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Covariate,
    Exposure,
    Mediator,
    Outcome,
}

/// Declared storage type of a column in the ingestion schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Numeric,
    Categorical,
    /// Parsed as 0/1 and normalized to a numeric column.
    Binary,
}

/// A single column of data.
#[derive(Debug, Clone)]
pub enum Column {
    Numeric(Vec<f64>),
    /// Codes index into `levels`; the first level is the reference level.
    Categorical {
        codes: Vec<u32>,
        levels: Vec<String>,
    },
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Column::Numeric(_))
    }

    /// Numeric values, if this is a numeric column.
    pub fn as_numeric(&self) -> Option<&[f64]> {
        match self {
            Column::Numeric(v) => Some(v),
            _ => None,
        }
    }

    /// True when numeric with every value in {0,1}.
    pub fn is_binary01(&self) -> bool {
        match self {
            Column::Numeric(v) => v.iter().all(|&x| x == 0.0 || x == 1.0),
            _ => false,
        }
    }
}

/// Role declarations for a dataset.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Roles {
    pub exposure: String,
    pub outcome: String,
    pub covariates: Vec<String>,
    pub mediators: Vec<String>,
}

impl Roles {
    pub fn role_of(&self, name: &str) -> Option<Role> {
        if self.exposure == name {
            Some(Role::Exposure)
        } else if self.outcome == name {
            Some(Role::Outcome)
        } else if self.covariates.iter().any(|c| c == name) {
            Some(Role::Covariate)
        } else if self.mediators.iter().any(|m| m == name) {
            Some(Role::Mediator)
        } else {
            None
        }
    }
}

/// Column schema for CSV ingestion.
#[derive(Debug, Clone)]
pub struct Schema {
    pub roles: Roles,
    /// Column type declarations; undeclared role columns default to
    /// `Binary` for the exposure and `Numeric` otherwise.
    pub types: BTreeMap<String, ColumnType>,
    /// Drop rows with missing cells (reported) instead of erroring.
    pub drop_missing: bool,
}

/// Report of what ingestion did.
#[derive(Debug, Clone, serde::Serialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_dropped_missing: usize,
    pub n: usize,
    pub n_treated: usize,
    pub n_control: usize,
}

/// Immutable columnar dataset with role declarations.
#[derive(Debug, Clone)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Column>,
    index: BTreeMap<String, usize>,
    n: usize,
    roles: Roles,
    treated_rows: Vec<usize>,
    control_rows: Vec<usize>,
}

impl Dataset {
    /// Build a dataset from named columns and role declarations, enforcing
    /// all invariants (exactly one binary exposure with both values present,
    /// at least one covariate and mediator, exactly one outcome, no missing
    /// values, consistent lengths).
    pub fn new(columns: Vec<(String, Column)>, roles: Roles) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Data("dataset has no columns".into()));
        }
        let n = columns[0].1.len();
        if n == 0 {
            return Err(Error::Data("dataset has no rows".into()));
        }
        let mut names = Vec::with_capacity(columns.len());
        let mut cols = Vec::with_capacity(columns.len());
        let mut index = BTreeMap::new();
        for (name, col) in columns {
            if col.len() != n {
                return Err(Error::Data(format!(
                    "column `{name}` has {} rows, expected {n}",
                    col.len()
                )));
            }
            if let Column::Numeric(v) = &col {
                if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
                    return Err(Error::Data(format!(
                        "column `{name}` contains non-finite value {bad}"
                    )));
                }
            }
            if index.insert(name.clone(), names.len()).is_some() {
                return Err(Error::Data(format!("duplicate column `{name}`")));
            }
            names.push(name);
            cols.push(col);
        }

        for want in std::iter::once(&roles.exposure)
            .chain(std::iter::once(&roles.outcome))
            .chain(roles.covariates.iter())
            .chain(roles.mediators.iter())
        {
            if !index.contains_key(want) {
                return Err(Error::ColumnNotFound(want.clone()));
            }
        }
        if roles.covariates.is_empty() {
            return Err(Error::Data("at least one covariate is required".into()));
        }
        if roles.mediators.is_empty() {
            return Err(Error::Data("at least one mediator is required".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in std::iter::once(&roles.exposure)
            .chain(std::iter::once(&roles.outcome))
            .chain(roles.covariates.iter())
            .chain(roles.mediators.iter())
        {
            if !seen.insert(name.clone()) {
                return Err(Error::Data(format!(
                    "column `{name}` declared in two roles"
                )));
            }
        }

        let exp_col = &cols[index[&roles.exposure]];
        let exp = match exp_col {
            Column::Numeric(v) => v,
            Column::Categorical { .. } => {
                return Err(Error::Data(format!(
                    "exposure column `{}` must be numeric 0/1",
                    roles.exposure
                )))
            }
        };
        let mut treated_rows = Vec::new();
        let mut control_rows = Vec::new();
        for (i, &a) in exp.iter().enumerate() {
            if a == 1.0 {
                treated_rows.push(i);
            } else if a == 0.0 {
                control_rows.push(i);
            } else {
                return Err(Error::NonBinaryExposure {
                    column: roles.exposure.clone(),
                    value: format!("{a}"),
                });
            }
        }
        if treated_rows.is_empty() {
            return Err(Error::EmptySubsample("treated"));
        }
        if control_rows.is_empty() {
            return Err(Error::EmptySubsample("control"));
        }

        Ok(Dataset {
            names,
            columns: cols,
            index,
            n,
            roles,
            treated_rows,
            control_rows,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn roles(&self) -> &Roles {
        &self.roles
    }

    pub fn column_names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.index
            .get(name)
            .map(|&i| &self.columns[i])
            .ok_or_else(|| Error::ColumnNotFound(name.to_string()))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Numeric values of a column (error for categorical columns).
    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        match self.column(name)? {
            Column::Numeric(v) => Ok(v),
            Column::Categorical { .. } => Err(Error::Data(format!(
                "column `{name}` is categorical where numeric values are required"
            ))),
        }
    }

    /// Exposure indicator (0/1) per row.
    pub fn exposure(&self) -> &[f64] {
        self.numeric(&self.roles.exposure.clone())
            .expect("validated at construction")
    }

    /// Outcome values per row (numeric; binary outcomes are 0/1).
    pub fn outcome(&self) -> Result<&[f64]> {
        self.numeric(&self.roles.outcome)
    }

    /// True when the outcome takes only values 0/1.
    pub fn outcome_is_binary(&self) -> Result<bool> {
        Ok(self.column(&self.roles.outcome)?.is_binary01())
    }

    pub fn treated_rows(&self) -> &[usize] {
        &self.treated_rows
    }

    pub fn control_rows(&self) -> &[usize] {
        &self.control_rows
    }
}

/// Which subsample a view selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Treated,
    Control,
}

/// A (possibly weighted) view over a subset of a dataset's rows.
///
/// Views may repeat rows (used when stacking pseudo samples) and may override
/// numeric columns (used when predicting with simulated mediator values or
/// synthetic arm indicators). Immutable once built.
#[derive(Debug, Clone)]
pub struct SampleView<'a> {
    ds: &'a Dataset,
    rows: Vec<usize>,
    weights: Option<Vec<f64>>,
    overrides: BTreeMap<String, Vec<f64>>,
}

impl<'a> SampleView<'a> {
    /// View over all rows, unweighted.
    pub fn full(ds: &'a Dataset) -> Self {
        SampleView {
            ds,
            rows: (0..ds.n()).collect(),
            weights: None,
            overrides: BTreeMap::new(),
        }
    }

    /// View over an explicit row-index set.
    pub fn from_rows(ds: &'a Dataset, rows: Vec<usize>) -> Self {
        SampleView {
            ds,
            rows,
            weights: None,
            overrides: BTreeMap::new(),
        }
    }

    /// Attach per-unit analysis weights (length must match the view).
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.rows.len() {
            return Err(Error::Weights(format!(
                "weight vector length {} does not match view size {}",
                weights.len(),
                self.rows.len()
            )));
        }
        if let Some(bad) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Weights(format!("invalid analysis weight {bad}")));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    /// Override a numeric variable with values aligned to this view's rows.
    pub fn with_override(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.rows.len() {
            return Err(Error::Data(format!(
                "override for `{name}` has length {}, expected {}",
                values.len(),
                self.rows.len()
            )));
        }
        self.overrides.insert(name.to_string(), values);
        Ok(self)
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.ds
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Resolve a variable over this view: override first, then dataset column.
    pub fn resolve(&self, name: &str) -> Result<ResolvedVar<'_>> {
        if let Some(vals) = self.overrides.get(name) {
            return Ok(ResolvedVar::Numeric(std::borrow::Cow::Borrowed(vals)));
        }
        match self.ds.column(name)? {
            Column::Numeric(v) => {
                let gathered: Vec<f64> = self.rows.iter().map(|&i| v[i]).collect();
                Ok(ResolvedVar::Numeric(std::borrow::Cow::Owned(gathered)))
            }
            Column::Categorical { codes, levels } => {
                let gathered: Vec<u32> = self.rows.iter().map(|&i| codes[i]).collect();
                Ok(ResolvedVar::Categorical {
                    codes: gathered,
                    levels,
                })
            }
        }
    }

    /// Effective fit weights: analysis weights times optional per-dataset-row
    /// base weights (the bootstrap composition hook).
    pub fn effective_weights(&self, base: Option<&[f64]>) -> Vec<f64> {
        let mut w: Vec<f64> = match &self.weights {
            Some(ws) => ws.clone(),
            None => vec![1.0; self.rows.len()],
        };
        if let Some(b) = base {
            for (wi, &row) in w.iter_mut().zip(&self.rows) {
                *wi *= b[row];
            }
        }
        w
    }
}

/// A variable resolved over a view's rows.
pub enum ResolvedVar<'a> {
    Numeric(std::borrow::Cow<'a, [f64]>),
    Categorical {
        codes: Vec<u32>,
        levels: &'a [String],
    },
}

/// View over the treated or control subsample.
pub fn subsample(ds: &Dataset, which: Which) -> SampleView<'_> {
    let rows = match which {
        Which::Treated => ds.treated_rows().to_vec(),
        Which::Control => ds.control_rows().to_vec(),
    };
    SampleView::from_rows(ds, rows)
}

/// Ingest a CSV file with a header row according to `schema`.
///
/// Cells are considered missing when empty or equal to `NA`. Rows with
/// missing cells among the declared columns are dropped (and counted) when
/// `schema.drop_missing` is set, and rejected otherwise. Only declared
/// columns are retained.
pub fn ingest_csv<P: AsRef<Path>>(path: P, schema: &Schema) -> Result<(Dataset, IngestReport)> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();
    ingest_records(
        &headers,
        reader.records().map(|r| {
            r.map(|rec| rec.iter().map(|s| s.to_string()).collect::<Vec<_>>())
                .map_err(Error::from)
        }),
        schema,
    )
}

fn column_type(schema: &Schema, name: &str) -> ColumnType {
    if let Some(t) = schema.types.get(name) {
        return *t;
    }
    if name == schema.roles.exposure {
        ColumnType::Binary
    } else {
        ColumnType::Numeric
    }
}

fn declared_columns(schema: &Schema) -> Vec<String> {
    let r = &schema.roles;
    let mut cols: Vec<String> = Vec::new();
    cols.extend(r.covariates.iter().cloned());
    cols.push(r.exposure.clone());
    cols.extend(r.mediators.iter().cloned());
    cols.push(r.outcome.clone());
    cols
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "NA"
}

fn ingest_records<I>(
    headers: &[String],
    records: I,
    schema: &Schema,
) -> Result<(Dataset, IngestReport)>
where
    I: Iterator<Item = Result<Vec<String>>>,
{
    let declared = declared_columns(schema);
    let mut positions = Vec::with_capacity(declared.len());
    for name in &declared {
        let pos = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::ColumnNotFound(name.clone()))?;
        positions.push(pos);
    }

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); declared.len()];
    let mut rows_read = 0usize;
    let mut dropped = 0usize;
    for record in records {
        let record = record?;
        rows_read += 1;
        if positions
            .iter()
            .any(|&p| p >= record.len() || is_missing(&record[p]))
        {
            if schema.drop_missing {
                dropped += 1;
                continue;
            }
            return Err(Error::Data(format!(
                "row {rows_read} has a missing value and drop_missing is disabled"
            )));
        }
        for (slot, &p) in raw.iter_mut().zip(&positions) {
            slot.push(record[p].trim().to_string());
        }
    }
    if raw[0].is_empty() {
        return Err(Error::Data("no complete rows after ingestion".into()));
    }

    let mut columns: Vec<(String, Column)> = Vec::with_capacity(declared.len());
    for (name, cells) in declared.iter().zip(raw) {
        let col = match column_type(schema, name) {
            ColumnType::Numeric => {
                let mut vals = Vec::with_capacity(cells.len());
                for cell in &cells {
                    let v: f64 = cell.parse().map_err(|_| {
                        Error::Data(format!(
                            "column `{name}`: cannot parse `{cell}` as a number"
                        ))
                    })?;
                    vals.push(v);
                }
                Column::Numeric(vals)
            }
            ColumnType::Binary => {
                let mut vals = Vec::with_capacity(cells.len());
                for cell in &cells {
                    match cell.as_str() {
                        "0" => vals.push(0.0),
                        "1" => vals.push(1.0),
                        other => {
                            if name == &schema.roles.exposure {
                                return Err(Error::NonBinaryExposure {
                                    column: name.clone(),
                                    value: other.to_string(),
                                });
                            }
                            return Err(Error::Data(format!(
                                "column `{name}`: expected 0/1, got `{other}`"
                            )));
                        }
                    }
                }
                Column::Numeric(vals)
            }
            ColumnType::Categorical => {
                // Level order = order of first appearance; first level is the
                // reference level.
                let mut levels: Vec<String> = Vec::new();
                let mut codes = Vec::with_capacity(cells.len());
                for cell in &cells {
                    let code = match levels.iter().position(|l| l == cell) {
                        Some(i) => i as u32,
                        None => {
                            levels.push(cell.clone());
                            (levels.len() - 1) as u32
                        }
                    };
                    codes.push(code);
                }
                Column::Categorical { codes, levels }
            }
        };
        columns.push((name.clone(), col));
    }

    let ds = Dataset::new(columns, schema.roles.clone())?;
    let report = IngestReport {
        rows_read,
        rows_dropped_missing: dropped,
        n: ds.n(),
        n_treated: ds.treated_rows().len(),
        n_control: ds.control_rows().len(),
    };
    Ok((ds, report))
}
