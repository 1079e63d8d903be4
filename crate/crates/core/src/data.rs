//! Observed and synthetic data containers.
//!
//! The intercept is always an explicit all-ones column named
//! [`INTERCEPT`]; nothing in the library adds one implicitly except the CSV
//! loader.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const INTERCEPT: &str = "__intercept__";
pub const RESPONSE_COL: &str = "__y__";
pub const TREATMENT_COL: &str = "__z__";
pub const WEIGHT_COL: &str = "__w__";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariates: DMatrix<f64>,
    response: DVector<f64>,
    treatment: Option<Vec<bool>>,
    weights: DVector<f64>,
    column_names: Vec<String>,
}

impl Dataset {
    /// Unit-weight dataset without treatment indicator.
    pub fn new(
        covariates: DMatrix<f64>,
        response: DVector<f64>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        let n = covariates.nrows();
        Self::from_parts(
            covariates,
            response,
            None,
            DVector::from_element(n, 1.0),
            column_names,
        )
    }

    pub fn from_parts(
        covariates: DMatrix<f64>,
        response: DVector<f64>,
        treatment: Option<Vec<bool>>,
        weights: DVector<f64>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        let n = covariates.nrows();
        let p = covariates.ncols();
        if response.len() != n {
            return Err(Error::Dimension(format!(
                "response has length {} but covariates have {n} rows",
                response.len()
            )));
        }
        if weights.len() != n {
            return Err(Error::Dimension(format!(
                "weights have length {} but covariates have {n} rows",
                weights.len()
            )));
        }
        if let Some(t) = &treatment {
            if t.len() != n {
                return Err(Error::Dimension(format!(
                    "treatment has length {} but covariates have {n} rows",
                    t.len()
                )));
            }
        }
        if column_names.len() != p {
            return Err(Error::Dimension(format!(
                "{} column names for {p} covariates",
                column_names.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Invalid(format!(
                "weights must be positive and finite, found {w}"
            )));
        }
        if covariates.iter().chain(response.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset contains non-finite values".into()));
        }
        Ok(Self {
            covariates,
            response,
            treatment,
            weights,
            column_names,
        })
    }

    /// Zero-row dataset with the given columns.
    pub fn empty(column_names: Vec<String>) -> Self {
        let p = column_names.len();
        Self {
            covariates: DMatrix::zeros(0, p),
            response: DVector::zeros(0),
            treatment: None,
            weights: DVector::zeros(0),
            column_names,
        }
    }

    pub fn with_weights(self, weights: DVector<f64>) -> Result<Self> {
        Self::from_parts(
            self.covariates,
            self.response,
            self.treatment,
            weights,
            self.column_names,
        )
    }

    pub fn with_treatment(self, treatment: Vec<bool>) -> Result<Self> {
        Self::from_parts(
            self.covariates,
            self.response,
            Some(treatment),
            self.weights,
            self.column_names,
        )
    }

    pub fn with_response(self, response: DVector<f64>) -> Result<Self> {
        Self::from_parts(
            self.covariates,
            response,
            self.treatment,
            self.weights,
            self.column_names,
        )
    }

    pub fn n(&self) -> usize {
        self.covariates.nrows()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn treatment(&self) -> Option<&[bool]> {
        self.treatment.as_deref()
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn intercept_index(&self) -> Option<usize> {
        self.column_index(INTERCEPT)
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn weighted_response_mean(&self) -> f64 {
        self.weights.dot(&self.response) / self.total_weight()
    }

    /// Rows at the given indices, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n()) {
            return Err(Error::Dimension(format!(
                "row index {bad} out of range for {} rows",
                self.n()
            )));
        }
        let x = self.covariates.select_rows(rows);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.response[r]));
        let w = DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.weights[r]));
        let t = self
            .treatment
            .as_ref()
            .map(|t| rows.iter().map(|&r| t[r]).collect());
        Ok(Self {
            covariates: x,
            response: y,
            treatment: t,
            weights: w,
            column_names: self.column_names.clone(),
        })
    }

    /// Rows whose treatment flag equals `treated`.
    pub fn arm(&self, treated: bool) -> Result<Self> {
        let t = self
            .treatment
            .as_ref()
            .ok_or_else(|| Error::Invalid("dataset has no treatment indicator".into()))?;
        let rows: Vec<usize> = (0..self.n()).filter(|&i| t[i] == treated).collect();
        self.select_rows(&rows)
    }

    /// Row-wise concatenation. Column names must agree. The treatment
    /// indicator is kept only when both sides carry one.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if self.column_names != other.column_names {
            return Err(Error::Dimension(
                "cannot concatenate datasets with different columns".into(),
            ));
        }
        let (n1, n2, p) = (self.n(), other.n(), self.p());
        let x = DMatrix::from_fn(n1 + n2, p, |i, j| {
            if i < n1 {
                self.covariates[(i, j)]
            } else {
                other.covariates[(i - n1, j)]
            }
        });
        let y = DVector::from_iterator(
            n1 + n2,
            self.response.iter().chain(other.response.iter()).cloned(),
        );
        let w = DVector::from_iterator(
            n1 + n2,
            self.weights.iter().chain(other.weights.iter()).cloned(),
        );
        let t = match (&self.treatment, &other.treatment) {
            (Some(a), Some(b)) => Some(a.iter().chain(b.iter()).cloned().collect()),
            _ => None,
        };
        Ok(Self {
            covariates: x,
            response: y,
            treatment: t,
            weights: w,
            column_names: self.column_names.clone(),
        })
    }

    /// Covariates mapped through `X ↦ X·A` (column names kept).
    pub fn transform_covariates(&self, a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != self.p() || a.ncols() != self.p() {
            return Err(Error::Dimension(format!(
                "transform must be {p}x{p}",
                p = self.p()
            )));
        }
        Ok(Self {
            covariates: &self.covariates * a,
            ..self.clone()
        })
    }

    pub(crate) fn replace_covariates(&self, x: DMatrix<f64>) -> Result<Self> {
        Self::from_parts(
            x,
            self.response.clone(),
            self.treatment.clone(),
            self.weights.clone(),
            self.column_names.clone(),
        )
    }

    /// Responses must lie in `[0, 1]`; fractional values are expected-value
    /// synthetic responses.
    pub fn check_bernoulli(&self) -> Result<()> {
        match self.response.iter().find(|y| !(0.0..=1.0).contains(*y)) {
            Some(y) => Err(Error::Invalid(format!(
                "bernoulli response {y} outside [0, 1]"
            ))),
            None => Ok(()),
        }
    }

    /// Read the CSV format: header row, reserved `__y__`, `__z__`, `__w__`
    /// columns, covariates in file order, and an `__intercept__` column
    /// prepended unless already present.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let find = |name: &str| headers.iter().position(|h| h == name);
        let y_col = find(RESPONSE_COL);
        let z_col = find(TREATMENT_COL);
        let w_col = find(WEIGHT_COL);
        let cov_cols: Vec<usize> = (0..headers.len())
            .filter(|&i| Some(i) != y_col && Some(i) != z_col && Some(i) != w_col)
            .collect();
        let has_intercept = cov_cols.iter().any(|&i| headers[i] == INTERCEPT);

        let mut names: Vec<String> = Vec::new();
        if !has_intercept {
            names.push(INTERCEPT.to_owned());
        }
        names.extend(cov_cols.iter().map(|&i| headers[i].clone()));

        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut zs = Vec::new();
        let mut ws = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                let raw = rec.get(i).unwrap_or("");
                raw.parse::<f64>().map_err(|_| {
                    Error::Invalid(format!(
                        "row {}: cannot parse '{raw}' in column '{}'",
                        line + 1,
                        headers[i]
                    ))
                })
            };
            if !has_intercept {
                xs.push(1.0);
            }
            for &c in &cov_cols {
                xs.push(parse(c)?);
            }
            ys.push(match y_col {
                Some(c) => parse(c)?,
                None => 0.0,
            });
            if let Some(c) = z_col {
                let z = parse(c)?;
                if z != 0.0 && z != 1.0 {
                    return Err(Error::Invalid(format!(
                        "row {}: treatment must be 0 or 1, found {z}",
                        line + 1
                    )));
                }
                zs.push(z == 1.0);
            }
            ws.push(match w_col {
                Some(c) => parse(c)?,
                None => 1.0,
            });
        }
        let n = ys.len();
        let p = names.len();
        let x = DMatrix::from_row_slice(n, p, &xs);
        Self::from_parts(
            x,
            DVector::from_vec(ys),
            z_col.map(|_| zs),
            DVector::from_vec(ws),
            names,
        )
    }

    pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    /// Write the CSV format. All columns are written, including the
    /// intercept, response, treatment (when present) and weights.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.column_names.iter().map(String::as_str).collect();
        header.push(RESPONSE_COL);
        if self.treatment.is_some() {
            header.push(TREATMENT_COL);
        }
        header.push(WEIGHT_COL);
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self
                .covariates
                .row(i)
                .iter()
                .map(|v| v.to_string())
                .collect();
            rec.push(self.response[i].to_string());
            if let Some(t) = &self.treatment {
                rec.push(if t[i] { "1" } else { "0" }.to_owned());
            }
            rec.push(self.weights[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}
