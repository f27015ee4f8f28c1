//! Model-formula parsing and design-matrix construction.
//!
//! Grammar: `response ~ term (+ term)*` where a term is a chain of factors
//! joined by `*` or `:`. A factor is a variable name or a natural cubic
//! spline `ns(x, df)`. `a*b` expands to `a + b + a:b`; longer `*` chains
//! expand to all main effects and all higher-order interactions. `a:b` is the
//! interaction alone. `y ~ 1` is the intercept-only formula.
//!
//! Designs always carry an intercept as the first column. A categorical
//! variable with L levels contributes L-1 dummy columns against its first
//! (reference) level. `ns(x, df)` contributes df columns; boundary knots sit
//! at the sample min/max and the df-1 interior knots at equally spaced
//! quantiles. Knots computed at fit time are recorded and reused verbatim at
//! prediction time.

use std::collections::BTreeMap;
use std::fmt;

use crate::data::{ResolvedVar, SampleView};
use crate::error::{Error, Result};
use crate::wstats;

/// One multiplicative factor inside a term.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Factor {
    Var(String),
    Spline { var: String, df: usize },
}

impl Factor {
    pub fn var_name(&self) -> &str {
        match self {
            Factor::Var(v) => v,
            Factor::Spline { var, .. } => var,
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Factor::Var(v) => write!(f, "{v}"),
            Factor::Spline { var, df } => write!(f, "ns({var},{df})"),
        }
    }
}

/// A model term: one factor is a main effect, several are an interaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub factors: Vec<Factor>,
}

impl Term {
    fn dedup_key(&self) -> Vec<Factor> {
        let mut k = self.factors.clone();
        k.sort();
        k
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.factors.iter().map(|x| x.to_string()).collect();
        write!(f, "{}", parts.join(":"))
    }
}

/// Parsed model formula.
#[derive(Debug, Clone, PartialEq)]
pub struct FormulaSpec {
    pub response: String,
    pub terms: Vec<Term>,
}

impl FormulaSpec {
    /// All variable names referenced on the right-hand side.
    pub fn rhs_variables(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for term in &self.terms {
            for factor in &term.factors {
                let v = factor.var_name();
                if !seen.iter().any(|s: &String| s == v) {
                    seen.push(v.to_string());
                }
            }
        }
        seen
    }
}

impl fmt::Display for FormulaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "{} ~ 1", self.response);
        }
        let parts: Vec<String> = self.terms.iter().map(|t| t.to_string()).collect();
        write!(f, "{} ~ {}", self.response, parts.join(" + "))
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(String),
    Tilde,
    Plus,
    Star,
    Colon,
    LParen,
    RParen,
    Comma,
    One,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(mut self) -> Result<Vec<(usize, Tok)>> {
        let mut out = Vec::new();
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() {
            let start = self.pos;
            let c = bytes[self.pos] as char;
            match c {
                ' ' | '\t' | '\n' | '\r' => {
                    self.pos += 1;
                }
                '~' => {
                    out.push((start, Tok::Tilde));
                    self.pos += 1;
                }
                '+' => {
                    out.push((start, Tok::Plus));
                    self.pos += 1;
                }
                '*' => {
                    out.push((start, Tok::Star));
                    self.pos += 1;
                }
                ':' => {
                    out.push((start, Tok::Colon));
                    self.pos += 1;
                }
                '(' => {
                    out.push((start, Tok::LParen));
                    self.pos += 1;
                }
                ')' => {
                    out.push((start, Tok::RParen));
                    self.pos += 1;
                }
                ',' => {
                    out.push((start, Tok::Comma));
                    self.pos += 1;
                }
                c if c.is_ascii_alphabetic() || c == '_' || c == '.' => {
                    let mut end = self.pos + 1;
                    while end < bytes.len() {
                        let d = bytes[end] as char;
                        if d.is_ascii_alphanumeric() || d == '_' || d == '.' {
                            end += 1;
                        } else {
                            break;
                        }
                    }
                    out.push((start, Tok::Ident(self.src[self.pos..end].to_string())));
                    self.pos = end;
                }
                c if c.is_ascii_digit() || c == '-' => {
                    let mut end = self.pos + 1;
                    while end < bytes.len() && (bytes[end] as char).is_ascii_digit() {
                        end += 1;
                    }
                    let text = &self.src[self.pos..end];
                    if text == "1" {
                        out.push((start, Tok::One));
                    } else {
                        out.push((start, Tok::Int(text.to_string())));
                    }
                    self.pos = end;
                }
                other => {
                    return Err(Error::FormulaSyntax {
                        position: start,
                        message: format!("unexpected character `{other}`"),
                    })
                }
            }
        }
        Ok(out)
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    i: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.i).map(|(p, _)| *p).unwrap_or(self.len)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.i).map(|(_, t)| t.clone());
        self.i += 1;
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::FormulaSyntax {
            position: self.pos(),
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: &Tok, what: &str) -> Result<()> {
        match self.peek() {
            Some(t) if t == tok => {
                self.i += 1;
                Ok(())
            }
            _ => self.err(format!("expected {what}")),
        }
    }

    fn factor(&mut self) -> Result<Factor> {
        let at = self.pos();
        match self.bump() {
            Some(Tok::Ident(name)) => {
                if self.peek() == Some(&Tok::LParen) {
                    if name != "ns" {
                        return Err(Error::UnknownFunction(name));
                    }
                    self.i += 1;
                    let var = match self.bump() {
                        Some(Tok::Ident(v)) => v,
                        _ => return self.err("expected variable name inside ns()"),
                    };
                    self.expect(&Tok::Comma, "`,` inside ns()")?;
                    let df = match self.bump() {
                        Some(Tok::Int(d)) => d,
                        Some(Tok::One) => "1".to_string(),
                        _ => return self.err("expected integer spline df"),
                    };
                    self.expect(&Tok::RParen, "`)` closing ns()")?;
                    let df: i64 = df.parse().map_err(|_| Error::InvalidSplineDf(df.clone()))?;
                    if df < 1 {
                        return Err(Error::InvalidSplineDf(df.to_string()));
                    }
                    Ok(Factor::Spline {
                        var,
                        df: df as usize,
                    })
                } else {
                    Ok(Factor::Var(name))
                }
            }
            _ => Err(Error::FormulaSyntax {
                position: at,
                message: "expected a variable or ns(...)".into(),
            }),
        }
    }

    /// A chain of factors joined by `*` or `:` (not mixed).
    fn term_chain(&mut self) -> Result<Vec<Term>> {
        let first = self.factor()?;
        let mut factors = vec![first];
        let mut op: Option<Tok> = None;
        while let Some(this @ (Tok::Star | Tok::Colon)) = self.peek().cloned() {
            match &op {
                None => op = Some(this.clone()),
                Some(prev) if *prev != this => {
                    return self.err("cannot mix `*` and `:` within one term");
                }
                _ => {}
            }
            self.i += 1;
            factors.push(self.factor()?);
        }
        match op {
            None => Ok(vec![Term { factors }]),
            Some(Tok::Colon) => Ok(vec![Term { factors }]),
            Some(Tok::Star) => {
                // All non-empty subsets, ordered by size then position.
                let k = factors.len();
                if k > 16 {
                    return self.err("`*` chain is too long");
                }
                let mut out = Vec::new();
                for size in 1..=k {
                    for mask in 1u32..(1 << k) {
                        if mask.count_ones() as usize != size {
                            continue;
                        }
                        let subset: Vec<Factor> = (0..k)
                            .filter(|i| mask & (1 << i) != 0)
                            .map(|i| factors[i].clone())
                            .collect();
                        out.push(Term { factors: subset });
                    }
                }
                Ok(out)
            }
            _ => unreachable!(),
        }
    }
}

/// Parse a formula string.
pub fn parse_formula(text: &str) -> Result<FormulaSpec> {
    let toks = Lexer { src: text, pos: 0 }.tokens()?;
    let mut p = Parser {
        toks,
        i: 0,
        len: text.len(),
    };
    let response = match p.bump() {
        Some(Tok::Ident(name)) => name,
        _ => return p.err("expected response name"),
    };
    p.expect(&Tok::Tilde, "`~` after the response")?;
    let mut terms: Vec<Term> = Vec::new();
    if p.peek() == Some(&Tok::One) && p.toks.len() == p.i + 1 {
        p.i += 1;
    } else {
        loop {
            if p.peek() == Some(&Tok::One) {
                // `1` inside a sum is just the (always present) intercept
                p.i += 1;
            } else {
                terms.extend(p.term_chain()?);
            }
            match p.peek() {
                Some(Tok::Plus) => {
                    p.i += 1;
                }
                None => break,
                _ => return p.err("expected `+` or end of formula"),
            }
        }
    }
    if p.i != p.toks.len() {
        return p.err("trailing input");
    }
    // Deduplicate terms (order-insensitive within a term, first occurrence kept).
    let mut seen: Vec<Vec<Factor>> = Vec::new();
    let mut deduped = Vec::new();
    for term in terms {
        let key = term.dedup_key();
        if !seen.contains(&key) {
            seen.push(key);
            deduped.push(term);
        }
    }
    Ok(FormulaSpec {
        response,
        terms: deduped,
    })
}

// ---------------------------------------------------------------------------
// Natural cubic spline basis
// ---------------------------------------------------------------------------

/// Stored spline knots, keyed by `(variable, df)`.
pub type SplineKnots = BTreeMap<(String, usize), Vec<f64>>;

/// Knot vector for `ns(x, df)`: boundary knots at min/max, df-1 interior
/// knots at equally spaced quantiles.
fn compute_knots(x: &[f64], df: usize) -> Result<Vec<f64>> {
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let lo = sorted[0];
    let hi = sorted[sorted.len() - 1];
    if hi <= lo {
        return Err(Error::DegenerateKnots(String::new()));
    }
    let mut knots = Vec::with_capacity(df + 1);
    knots.push(lo);
    for i in 1..df {
        knots.push(wstats::quantile(&sorted, i as f64 / df as f64));
    }
    knots.push(hi);
    Ok(knots)
}

/// Evaluate the natural cubic spline basis (df = knots.len()-1 columns) at `x`.
///
/// The basis is the truncated-power construction evaluated on the knot-range
/// standardized scale, which keeps column magnitudes O(1): the first column
/// is the standardized linear term, the remaining df-1 columns are
/// differences of scaled cubic hinge terms. Each basis function is exactly
/// linear outside the boundary knots.
fn ns_basis_row(knots: &[f64], x: f64, out: &mut [f64]) {
    let k = knots.len();
    let lo = knots[0];
    let hi = knots[k - 1];
    let span = hi - lo;
    let u = (x - lo) / span;
    let kappa: Vec<f64> = knots.iter().map(|&t| (t - lo) / span).collect();
    let cube = |v: f64| if v > 0.0 { v * v * v } else { 0.0 };
    let d = |j: usize| -> f64 {
        (cube(u - kappa[j]) - cube(u - kappa[k - 1])) / (kappa[k - 1] - kappa[j])
    };
    out[0] = u;
    if k >= 3 {
        let d_last = d(k - 2);
        for j in 0..k - 2 {
            out[j + 1] = d(j) - d_last;
        }
    }
}

// ---------------------------------------------------------------------------
// Design matrices
// ---------------------------------------------------------------------------

/// A dense design matrix plus the metadata needed to rebuild it verbatim.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    /// Row-major n x p storage; the first column is the intercept.
    data: Vec<f64>,
    pub n: usize,
    pub p: usize,
    pub column_names: Vec<String>,
    pub knots: SplineKnots,
    /// Level lists of every categorical variable used, recorded at build time.
    pub levels: BTreeMap<String, Vec<String>>,
}

impl DesignMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.p + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.p)
    }
}

/// Expanded columns of a single factor over a sample.
struct FactorBlock {
    names: Vec<String>,
    cols: Vec<Vec<f64>>,
}

fn factor_block(
    factor: &Factor,
    sample: &SampleView<'_>,
    stored_knots: Option<&SplineKnots>,
    knots_out: &mut SplineKnots,
    levels_out: &mut BTreeMap<String, Vec<String>>,
    stored_levels: Option<&BTreeMap<String, Vec<String>>>,
) -> Result<FactorBlock> {
    match factor {
        Factor::Var(name) => match sample.resolve(name)? {
            ResolvedVar::Numeric(values) => Ok(FactorBlock {
                names: vec![name.clone()],
                cols: vec![values.into_owned()],
            }),
            ResolvedVar::Categorical { codes, levels } => {
                if let Some(stored) = stored_levels.and_then(|m| m.get(name)) {
                    // The fitted layout is authoritative at prediction time.
                    for level in levels {
                        if !stored.contains(level)
                            && codes.iter().any(|&c| levels[c as usize] == *level)
                        {
                            return Err(Error::UnseenLevel {
                                variable: name.clone(),
                                level: level.clone(),
                            });
                        }
                    }
                    let mut cols = vec![vec![0.0; codes.len()]; stored.len() - 1];
                    let mut names = Vec::with_capacity(stored.len() - 1);
                    for (j, level) in stored.iter().enumerate().skip(1) {
                        names.push(format!("{name}={level}"));
                        for (i, &c) in codes.iter().enumerate() {
                            if levels[c as usize] == *level {
                                cols[j - 1][i] = 1.0;
                            }
                        }
                    }
                    levels_out.insert(name.clone(), stored.clone());
                    Ok(FactorBlock { names, cols })
                } else {
                    let mut cols = vec![vec![0.0; codes.len()]; levels.len().saturating_sub(1)];
                    let mut names = Vec::with_capacity(levels.len().saturating_sub(1));
                    for (j, level) in levels.iter().enumerate().skip(1) {
                        names.push(format!("{name}={level}"));
                        for (i, &c) in codes.iter().enumerate() {
                            if c as usize == j {
                                cols[j - 1][i] = 1.0;
                            }
                        }
                    }
                    levels_out.insert(name.clone(), levels.to_vec());
                    Ok(FactorBlock { names, cols })
                }
            }
        },
        Factor::Spline { var, df } => {
            let values = match sample.resolve(var)? {
                ResolvedVar::Numeric(v) => v.into_owned(),
                ResolvedVar::Categorical { .. } => {
                    return Err(Error::Data(format!(
                        "spline variable `{var}` must be numeric"
                    )))
                }
            };
            let key = (var.clone(), *df);
            let knots = match stored_knots.and_then(|m| m.get(&key)) {
                Some(k) => k.clone(),
                None => match knots_out.get(&key) {
                    Some(k) => k.clone(),
                    None => compute_knots(&values, *df)
                        .map_err(|_| Error::DegenerateKnots(var.clone()))?,
                },
            };
            knots_out.insert(key, knots.clone());
            let mut cols = vec![vec![0.0; values.len()]; *df];
            let mut row = vec![0.0; *df];
            for (i, &x) in values.iter().enumerate() {
                ns_basis_row(&knots, x, &mut row);
                for (j, col) in cols.iter_mut().enumerate() {
                    col[i] = row[j];
                }
            }
            let names = (1..=*df).map(|j| format!("ns({var},{df})#{j}")).collect();
            Ok(FactorBlock { names, cols })
        }
    }
}

/// Build the design matrix of `spec` over `sample`.
///
/// When `stored` carries knots/levels from a previous build (a fitted model),
/// they are reused verbatim; otherwise knots are computed from the sample and
/// recorded in the result.
pub fn build_design(
    spec: &FormulaSpec,
    sample: &SampleView<'_>,
    stored: Option<(&SplineKnots, &BTreeMap<String, Vec<String>>)>,
) -> Result<DesignMatrix> {
    let n = sample.len();
    let mut knots_out = SplineKnots::new();
    let mut levels_out = BTreeMap::new();
    let (stored_knots, stored_levels) = match stored {
        Some((k, l)) => (Some(k), Some(l)),
        None => (None, None),
    };

    let mut names = vec!["(intercept)".to_string()];
    let mut columns: Vec<Vec<f64>> = vec![vec![1.0; n]];

    for term in &spec.terms {
        let blocks: Vec<FactorBlock> = term
            .factors
            .iter()
            .map(|f| {
                factor_block(
                    f,
                    sample,
                    stored_knots,
                    &mut knots_out,
                    &mut levels_out,
                    stored_levels,
                )
            })
            .collect::<Result<_>>()?;
        // Cartesian product of block columns; interaction columns are
        // elementwise products of the expanded lower-order columns.
        let mut combo_names: Vec<String> = vec![String::new()];
        let mut combo_cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
        for block in &blocks {
            let mut next_names = Vec::with_capacity(combo_names.len() * block.names.len());
            let mut next_cols = Vec::with_capacity(combo_cols.len() * block.cols.len());
            for (cn, cc) in combo_names.iter().zip(&combo_cols) {
                for (bn, bc) in block.names.iter().zip(&block.cols) {
                    let name = if cn.is_empty() {
                        bn.clone()
                    } else {
                        format!("{cn}:{bn}")
                    };
                    let col: Vec<f64> = cc.iter().zip(bc).map(|(a, b)| a * b).collect();
                    next_names.push(name);
                    next_cols.push(col);
                }
            }
            combo_names = next_names;
            combo_cols = next_cols;
        }
        names.extend(combo_names);
        columns.extend(combo_cols);
    }

    let p = columns.len();
    let mut data = vec![0.0; n * p];
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            data[i * p + j] = v;
        }
    }
    Ok(DesignMatrix {
        data,
        n,
        p,
        column_names: names,
        knots: knots_out,
        levels: levels_out,
    })
}
