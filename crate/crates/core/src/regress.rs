//! Regression kernel: ordinary least squares, logistic regression by
//! iteratively reweighted least squares, prediction and average marginal
//! effects.
//!
//! Every estimator in [`crate::estimators`] is assembled from these pieces.
//! All functions are pure; fits carry the column names of the design they were
//! estimated on so predictions can be checked against a new design.
//!
//! No analytic standard errors are produced here. Per-dataset uncertainty comes
//! from [`crate::montecarlo::bootstrap_se`].

use crate::linalg;
use thiserror::Error;

/// Name of the intercept column, always the first column of a [`DesignMatrix`].
pub const INTERCEPT: &str = "(intercept)";

/// IRLS stops when the largest absolute coefficient change falls below this.
pub const IRLS_TOL: f64 = 1e-8;
/// IRLS gives up after this many iterations.
pub const IRLS_MAX_ITER: usize = 50;
/// Bound on standardized logistic coefficients; beyond it the fit is
/// considered separated.
pub const SEPARATION_BOUND: f64 = 30.0;
/// Probability clamp used for the IRLS working weights only.
pub const WEIGHT_CLIP: f64 = 1e-10;
/// Reported probabilities are kept this far from 0 and 1 so they stay
/// representable as values strictly inside the unit interval.
const REPORT_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegressError {
    #[error("dimension mismatch: expected {expected} rows, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("design is rank deficient at column `{column}`")]
    RankDeficient { column: String },
    #[error("fewer rows ({rows}) than columns ({columns})")]
    TooFewRows { rows: usize, columns: usize },
    #[error("duplicate design column `{0}`")]
    DuplicateColumn(String),
    #[error("column mismatch: {0}")]
    ColumnMismatch(String),
    #[error("response value at row {row} is not 0 or 1")]
    NonBinaryResponse { row: usize },
    #[error("non-finite value in column `{column}` at row {row}")]
    NonFinite { column: String, row: usize },
    #[error("logistic fit separated: coefficient `{column}` exceeded the standardized bound")]
    Separation { column: String },
    #[error("IRLS did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
}

impl RegressError {
    /// Short stable name used when tallying failures.
    pub fn kind(&self) -> &'static str {
        match self {
            RegressError::DimensionMismatch { .. } => "DimensionMismatch",
            RegressError::RankDeficient { .. } => "RankDeficient",
            RegressError::TooFewRows { .. } => "TooFewRows",
            RegressError::DuplicateColumn(_) => "DuplicateColumn",
            RegressError::ColumnMismatch(_) => "ColumnMismatch",
            RegressError::NonBinaryResponse { .. } => "NonBinaryResponse",
            RegressError::NonFinite { .. } => "NonFinite",
            RegressError::Separation { .. } => "Separation",
            RegressError::NonConvergence { .. } => "NonConvergence",
        }
    }
}

pub type Result<T> = std::result::Result<T, RegressError>;

/// Column-major design matrix whose first column is always the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    rows: usize,
}

impl DesignMatrix {
    /// Intercept followed by the given regressors, in order.
    pub fn with_intercept<S: Into<String>>(
        rows: usize,
        regressors: impl IntoIterator<Item = (S, Vec<f64>)>,
    ) -> Result<Self> {
        let mut names = vec![INTERCEPT.to_string()];
        let mut columns = vec![vec![1.0; rows]];
        for (name, values) in regressors {
            let name = name.into();
            if values.len() != rows {
                return Err(RegressError::DimensionMismatch {
                    expected: rows,
                    found: values.len(),
                });
            }
            if names.contains(&name) {
                return Err(RegressError::DuplicateColumn(name));
            }
            if let Some(row) = values.iter().position(|v| !v.is_finite()) {
                return Err(RegressError::NonFinite { column: name, row });
            }
            names.push(name);
            columns.push(values);
        }
        Ok(Self {
            names,
            columns,
            rows,
        })
    }

    pub fn intercept_only(rows: usize) -> Self {
        Self {
            names: vec![INTERCEPT.to_string()],
            columns: vec![vec![1.0; rows]],
            rows,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.index_of(name).map(|j| self.columns[j].as_slice())
    }

    /// Design built from the rows at `indices` (repeats allowed).
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| indices.iter().map(|&i| c[i]).collect())
                .collect(),
            rows: indices.len(),
        }
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Copy of the design with every entry of `name` replaced by `value`.
    pub fn with_column_value(&self, name: &str, value: f64) -> Result<Self> {
        let j = self
            .index_of(name)
            .ok_or_else(|| RegressError::ColumnMismatch(format!("no column `{name}`")))?;
        let mut out = self.clone();
        out.columns[j].iter_mut().for_each(|v| *v = value);
        Ok(out)
    }

    fn linear_predictor(&self, coefficients: &[f64]) -> Vec<f64> {
        let mut eta = vec![0.0; self.rows];
        for (col, b) in self.columns.iter().zip(coefficients) {
            for (e, x) in eta.iter_mut().zip(col) {
                *e += b * x;
            }
        }
        eta
    }

    fn check_shape(&self, y_len: usize) -> Result<()> {
        if y_len != self.rows {
            return Err(RegressError::DimensionMismatch {
                expected: self.rows,
                found: y_len,
            });
        }
        if self.rows < self.ncols() {
            return Err(RegressError::TooFewRows {
                rows: self.rows,
                columns: self.ncols(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitKind {
    Ols,
    Logistic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub kind: FitKind,
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Probability scale for logistic fits.
    pub fitted_values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Only set for logistic fits.
    pub log_likelihood: Option<f64>,
}

impl RegressionFit {
    pub fn coef(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.coefficients[j])
    }
}

/// Ordinary least squares.
pub fn ols_fit(x: &DesignMatrix, y: &[f64]) -> Result<RegressionFit> {
    x.check_shape(y.len())?;
    let beta = linalg::least_squares(&x.columns, y).map_err(|e| RegressError::RankDeficient {
        column: x.names[e.column].clone(),
    })?;
    let fitted = x.linear_predictor(&beta);
    let residuals = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    Ok(RegressionFit {
        kind: FitKind::Ols,
        names: x.names.clone(),
        coefficients: beta,
        fitted_values: fitted,
        residuals,
        converged: true,
        iterations: 1,
        log_likelihood: None,
    })
}

/// Maximum-likelihood logistic regression by IRLS, started from zero.
pub fn logistic_fit(x: &DesignMatrix, y: &[f64]) -> Result<RegressionFit> {
    x.check_shape(y.len())?;
    if let Some(row) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(RegressError::NonBinaryResponse { row });
    }

    let n = x.rows;
    let p = x.ncols();
    let (means, sds) = column_moments(x);

    let mut beta = vec![0.0; p];
    let mut converged = false;
    let mut iterations = 0;
    let mut weighted: Vec<Vec<f64>> = vec![vec![0.0; n]; p];
    let mut z = vec![0.0; n];

    while iterations < IRLS_MAX_ITER {
        iterations += 1;
        let eta = x.linear_predictor(&beta);
        for i in 0..n {
            let mu = inv_logit(eta[i]).clamp(WEIGHT_CLIP, 1.0 - WEIGHT_CLIP);
            let w = mu * (1.0 - mu);
            let sw = w.sqrt();
            z[i] = sw * (eta[i] + (y[i] - mu) / w);
            for (wc, c) in weighted.iter_mut().zip(&x.columns) {
                wc[i] = sw * c[i];
            }
        }
        let next =
            linalg::least_squares(&weighted, &z).map_err(|e| RegressError::RankDeficient {
                column: x.names[e.column].clone(),
            })?;
        let delta = next
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        beta = next;

        // Separation guard on the standardized scale: slopes times column SD,
        // intercept evaluated at the column means.
        let centered_intercept: f64 = beta[0]
            + beta[1..]
                .iter()
                .zip(&means[1..])
                .map(|(b, m)| b * m)
                .sum::<f64>();
        if centered_intercept.abs() > SEPARATION_BOUND {
            return Err(RegressError::Separation {
                column: x.names[0].clone(),
            });
        }
        for j in 1..p {
            if (beta[j] * sds[j]).abs() > SEPARATION_BOUND {
                return Err(RegressError::Separation {
                    column: x.names[j].clone(),
                });
            }
        }

        if delta < IRLS_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(RegressError::NonConvergence { iterations });
    }

    let eta = x.linear_predictor(&beta);
    let fitted: Vec<f64> = eta.iter().map(|&e| inv_logit(e)).collect();
    let residuals = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let log_likelihood = y
        .iter()
        .zip(&eta)
        .map(|(&yi, &e)| yi * e - softplus(e))
        .sum();
    Ok(RegressionFit {
        kind: FitKind::Logistic,
        names: x.names.clone(),
        coefficients: beta,
        fitted_values: fitted,
        residuals,
        converged,
        iterations,
        log_likelihood: Some(log_likelihood),
    })
}

/// Linear predictor for OLS fits, inverse-logit of it for logistic fits.
pub fn predict(fit: &RegressionFit, x_new: &DesignMatrix) -> Result<Vec<f64>> {
    if fit.names != x_new.names {
        return Err(RegressError::ColumnMismatch(format!(
            "fit columns {:?} vs design columns {:?}",
            fit.names, x_new.names
        )));
    }
    let eta = x_new.linear_predictor(&fit.coefficients);
    Ok(match fit.kind {
        FitKind::Ols => eta,
        FitKind::Logistic => eta.into_iter().map(inv_logit).collect(),
    })
}

/// Mean over subjects of the prediction with `target` set to `contrast.1`
/// minus the prediction with it set to `contrast.0`; every other column keeps
/// its observed value.
pub fn average_marginal_effect(
    fit: &RegressionFit,
    x: &DesignMatrix,
    target: &str,
    contrast: (f64, f64),
) -> Result<f64> {
    let (low, high) = contrast;
    let lo = predict(fit, &x.with_column_value(target, low)?)?;
    let hi = predict(fit, &x.with_column_value(target, high)?)?;
    let n = x.rows as f64;
    Ok(hi.iter().zip(&lo).map(|(h, l)| h - l).sum::<f64>() / n)
}

/// Numerically stable inverse logit, kept strictly inside (0, 1).
pub fn inv_logit(eta: f64) -> f64 {
    let p = if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    };
    p.clamp(REPORT_FLOOR, 1.0 - REPORT_FLOOR)
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn column_moments(x: &DesignMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows as f64;
    x.columns
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / n;
            let v = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            (m, v.sqrt())
        })
        .unzip()
}
