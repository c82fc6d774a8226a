use nalgebra::{DMatrix, DVector};

use super::LearnError;

/// Relative frequencies.
pub fn mle_categorical(counts: &[u64]) -> Result<Vec<f64>, LearnError> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(LearnError::EmptyData);
    }
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// Posterior predictive under a Dirichlet prior: `(α_k + C_k) / Σ (α_q + C_q)`.
pub fn dirichlet_predictive(counts: &[u64], alpha: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = counts.iter().zip(alpha).map(|(&c, &a)| a + c as f64).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

/// Rows of regressor values (without the constant column) and the response.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegressionDesign {
    pub regressors: Vec<Vec<f64>>,
    pub response: Vec<f64>,
}

impl RegressionDesign {
    pub fn new(regressors: Vec<Vec<f64>>, response: Vec<f64>) -> Self {
        RegressionDesign { regressors, response }
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) {
        self.regressors.push(x);
        self.response.push(y);
    }

    pub fn rows(&self) -> usize {
        self.response.len()
    }

    /// `U`: a leading column of ones followed by the regressors.
    pub fn matrix(&self, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows(), n + 1, |i, j| if j == 0 { 1.0 } else { self.regressors[i][j - 1] })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Residual standard deviation with divisor `k − n − 1`.
    pub sd: f64,
}

impl OlsFit {
    pub fn variance(&self) -> f64 {
        self.sd * self.sd
    }
}

const SINGULAR_TOL: f64 = 1e-12;

/// Least squares through a QR factorization of the design matrix.
pub fn ols_fit(design: &RegressionDesign) -> Result<OlsFit, LearnError> {
    let k = design.rows();
    let n = design.regressors.first().map_or(0, |r| r.len());
    if design.regressors.iter().any(|r| r.len() != n) {
        return Err(LearnError::Invalid("regressor rows differ in length".into()));
    }
    if k <= n + 1 {
        return Err(LearnError::InsufficientRows { rows: k, regressors: n });
    }
    let u = design.matrix(n);
    let l = DVector::from_column_slice(&design.response);
    let qr = u.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..=n).map(|i| r[(i, i)].abs()).collect();
    let scale = diag.iter().cloned().fold(0.0, f64::max);
    if scale == 0.0 || diag.iter().any(|&d| d <= SINGULAR_TOL * scale) {
        return Err(LearnError::SingularDesign);
    }
    let qtl = qr.q().transpose() * &l;
    let b = r.solve_upper_triangular(&qtl).ok_or(LearnError::SingularDesign)?;
    let resid = &l - &u * &b;
    let rss = resid.dot(&resid);
    Ok(OlsFit {
        intercept: b[0],
        coefficients: b.iter().skip(1).cloned().collect(),
        sd: (rss / (k - n - 1) as f64).sqrt(),
    })
}

/// Sample mean and standard deviation with divisor `k − 1`.
pub fn mean_sd(xs: &[f64]) -> Result<(f64, f64), LearnError> {
    let design = RegressionDesign::new(vec![vec![]; xs.len()], xs.to_vec());
    let fit = ols_fit(&design)?;
    Ok((fit.intercept, fit.sd))
}
