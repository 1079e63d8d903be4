//! Potential-outcomes layer: paired logistic arms, unit-level log
//! probability ratios, and their averages over (sub)populations.
//!
//! The two arms are modelled as conditionally independent given covariates,
//! so each arm is fit and sampled on its own rows.

use std::fmt;

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fit::MapResult;
use crate::model::log_sigmoid;
use crate::posterior::{posterior_summary, GaussianApprox, PosteriorSummary, SampleMatrix};

/// Posterior object for one arm.
#[derive(Debug, Clone, PartialEq)]
pub enum ArmPosterior {
    Map(MapResult),
    Gaussian(GaussianApprox),
    Samples(SampleMatrix),
}

impl ArmPosterior {
    /// Point estimate: the mode, the approximation mean, or the sample mean.
    pub fn point(&self) -> DVector<f64> {
        match self {
            ArmPosterior::Map(m) => m.beta_hat.clone(),
            ArmPosterior::Gaussian(g) => g.mean.clone(),
            ArmPosterior::Samples(s) => s.mean(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ArmPosterior::Map(m) => m.beta_hat.len(),
            ArmPosterior::Gaussian(g) => g.mean.len(),
            ArmPosterior::Samples(s) => s.draws.ncols(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmFits {
    pub treatment: ArmPosterior,
    pub control: ArmPosterior,
    pub covariate_names: Vec<String>,
}

impl ArmFits {
    pub fn new(
        treatment: ArmPosterior,
        control: ArmPosterior,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let p = covariate_names.len();
        if treatment.dim() != p || control.dim() != p {
            return Err(Error::Dimension(format!(
                "arm dimensions {} / {} do not match {p} covariates",
                treatment.dim(),
                control.dim()
            )));
        }
        Ok(Self {
            treatment,
            control,
            covariate_names,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectResult {
    pub group_label: String,
    pub gamma_avg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_unit: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PosteriorSummary>,
}

impl EffectResult {
    /// Attach the posterior mean and equal-tailed interval of the draws.
    pub fn summarize(mut self, level: f64) -> Result<Self> {
        let draws = self
            .draws
            .as_deref()
            .ok_or_else(|| Error::Invalid("effect has no posterior draws".into()))?;
        self.summary = Some(posterior_summary(draws, level)?);
        Ok(self)
    }
}

/// `log σ(x'β_t) − log σ(x'β_c)`.
pub fn log_prob_ratio(
    x: DVectorView<'_, f64>,
    beta_t: &DVector<f64>,
    beta_c: &DVector<f64>,
) -> Result<f64> {
    if x.len() != beta_t.len() || x.len() != beta_c.len() {
        return Err(Error::Dimension(format!(
            "covariate length {} vs coefficients {} / {}",
            x.len(),
            beta_t.len(),
            beta_c.len()
        )));
    }
    Ok(log_sigmoid(x.dot(beta_t)) - log_sigmoid(x.dot(beta_c)))
}

fn masked_rows(x: &DMatrix<f64>, mask: &[bool]) -> Result<Vec<usize>> {
    if mask.len() != x.nrows() {
        return Err(Error::Dimension(format!(
            "mask has length {}, covariates have {} rows",
            mask.len(),
            x.nrows()
        )));
    }
    let rows: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if rows.is_empty() {
        return Err(Error::Invalid("subgroup mask selects no rows".into()));
    }
    Ok(rows)
}

fn mean_effect(x: &DMatrix<f64>, rows: &[usize], bt: &DVector<f64>, bc: &DVector<f64>) -> f64 {
    let eta_t = x * bt;
    let eta_c = x * bc;
    let s: f64 = rows
        .iter()
        .map(|&i| log_sigmoid(eta_t[i]) - log_sigmoid(eta_c[i]))
        .sum();
    s / rows.len() as f64
}

/// Average log probability ratio over the masked rows.
pub fn avg_effect(
    x: &DMatrix<f64>,
    mask: &[bool],
    beta_t: &DVector<f64>,
    beta_c: &DVector<f64>,
    label: &str,
) -> Result<EffectResult> {
    let rows = masked_rows(x, mask)?;
    let per_unit = rows
        .iter()
        .map(|&i| log_prob_ratio(x.row(i).transpose().as_view(), beta_t, beta_c))
        .collect::<Result<Vec<f64>>>()?;
    let gamma_avg = per_unit.iter().sum::<f64>() / per_unit.len() as f64;
    Ok(EffectResult {
        group_label: label.to_owned(),
        gamma_avg,
        per_unit: Some(per_unit),
        draws: None,
        summary: None,
    })
}

/// Posterior draws of the average effect, pairing draw `k` of each arm.
/// `gamma_avg` is the mean of the draws.
pub fn posterior_effect_distribution(
    x: &DMatrix<f64>,
    mask: &[bool],
    samples_t: &SampleMatrix,
    samples_c: &SampleMatrix,
    label: &str,
) -> Result<EffectResult> {
    if samples_t.len() != samples_c.len() {
        return Err(Error::Dimension(format!(
            "arm draw counts differ: {} vs {}",
            samples_t.len(),
            samples_c.len()
        )));
    }
    if samples_t.draws.ncols() != x.ncols() || samples_c.draws.ncols() != x.ncols() {
        return Err(Error::Dimension("sample width does not match covariates".into()));
    }
    let rows = masked_rows(x, mask)?;
    let draws: Vec<f64> = (0..samples_t.len())
        .map(|k| {
            let bt = samples_t.draws.row(k).transpose();
            let bc = samples_c.draws.row(k).transpose();
            mean_effect(x, &rows, &bt, &bc)
        })
        .collect();
    if draws.is_empty() {
        return Err(Error::Invalid("no posterior draws".into()));
    }
    let gamma_avg = draws.iter().sum::<f64>() / draws.len() as f64;
    Ok(EffectResult {
        group_label: label.to_owned(),
        gamma_avg,
        per_unit: None,
        draws: Some(draws),
        summary: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Gt,
    Ge,
    Lt,
    Le,
}

impl CmpOp {
    fn eval(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
        }
    }
}

/// A subgroup selector of the form `column op value`, e.g. `hsdip == 1`.
/// The empty string and `all` select every row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subgroup {
    pub label: String,
    pub condition: Option<(String, CmpOp, f64)>,
}

impl Subgroup {
    pub fn all() -> Self {
        Self {
            label: "All".into(),
            condition: None,
        }
    }

    pub fn new(label: &str, column: &str, op: CmpOp, value: f64) -> Self {
        Self {
            label: label.into(),
            condition: Some((column.into(), op, value)),
        }
    }

    pub fn parse(expr: &str) -> Result<Self> {
        let e = expr.trim();
        if e.is_empty() || e.eq_ignore_ascii_case("all") {
            return Ok(Self::all());
        }
        // Two-character operators first so `>=` is not read as `>`.
        for (tok, op) in [
            ("==", CmpOp::Eq),
            ("!=", CmpOp::Ne),
            (">=", CmpOp::Ge),
            ("<=", CmpOp::Le),
            (">", CmpOp::Gt),
            ("<", CmpOp::Lt),
        ] {
            if let Some((lhs, rhs)) = e.split_once(tok) {
                let column = lhs.trim();
                let value: f64 = rhs.trim().parse().map_err(|_| {
                    Error::Invalid(format!("cannot parse value in subgroup '{expr}'"))
                })?;
                if column.is_empty() {
                    return Err(Error::Invalid(format!("missing column in '{expr}'")));
                }
                return Ok(Self {
                    label: e.to_owned(),
                    condition: Some((column.to_owned(), op, value)),
                });
            }
        }
        Err(Error::Invalid(format!(
            "subgroup '{expr}' must look like `column op value`"
        )))
    }

    pub fn mask(&self, data: &Dataset) -> Result<Vec<bool>> {
        match &self.condition {
            None => Ok(vec![true; data.n()]),
            Some((col, op, v)) => {
                let j = data
                    .column_index(col)
                    .ok_or_else(|| Error::Invalid(format!("unknown column '{col}'")))?;
                Ok(data
                    .covariates()
                    .column(j)
                    .iter()
                    .map(|&x| op.eval(x, *v))
                    .collect())
            }
        }
    }
}

impl fmt::Display for Subgroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.condition {
            None => write!(f, "all"),
            Some((c, op, v)) => write!(f, "{c} {} {v}", op.symbol()),
        }
    }
}
