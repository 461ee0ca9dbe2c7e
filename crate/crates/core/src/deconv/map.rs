use nalgebra::linalg::SymmetricTridiagonal;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use super::operator::Whitened;
use super::{check_target, ConvolutionOperator, DeconvSolution, Penalty};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapConfig {
    pub lambda: f64,
    pub penalty: Penalty,
}

impl MapConfig {
    pub fn new(lambda: f64) -> Self {
        Self { lambda, penalty: Penalty::Identity }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub partitions: usize,
    pub train_fraction: f64,
    pub lambda_grid: Vec<f64>,
    pub penalty: Penalty,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            partitions: 20,
            train_fraction: 0.7,
            lambda_grid: log_grid(1e-4, 1e1, 25),
            penalty: Penalty::Identity,
        }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.partitions == 0 {
            return Err(Error::InvalidParameter("at least one partition is required".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "train fraction {} not in (0, 1)",
                self.train_fraction
            )));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::Empty("lambda grid"));
        }
        if self.lambda_grid.iter().any(|l| !(l.is_finite() && *l > 0.0))
            || self.lambda_grid.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::InvalidParameter("lambda grid must be positive and sorted".into()));
        }
        Ok(())
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub(crate) fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
}

/// Closed-form Tikhonov solution `(H^T H + lambda P^T P)^{-1} H^T y`.
///
/// Solved in the dual: with `A = H P^{-1}`, `s = P^{-1} A^T (A A^T + lambda I)^{-1} y`,
/// which only factors an `N x N` positive-definite matrix.
pub fn solve_map(op: &ConvolutionOperator, y: &[f64], cfg: &MapConfig) -> Result<DeconvSolution> {
    check_target(op, y)?;
    if !(cfg.lambda >= 0.0 && cfg.lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda {} must be >= 0", cfg.lambda)));
    }
    let w = Whitened::new(op, cfg.penalty);
    let mut g = w.gram();
    for i in 0..g.nrows() {
        g[(i, i)] += cfg.lambda;
    }
    let chol = g.cholesky().ok_or(Error::Singular("regularized normal matrix"))?;
    let v = chol.solve(&DVector::from_column_slice(y));
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Singular("regularized normal matrix"));
    }
    let s = w.source_from_dual(&v);
    let residual = op.residual_norm(&s, y)?;
    let mut sol = DeconvSolution::new(s, residual);
    sol.effective_lambda = Some(cfg.lambda);
    Ok(sol)
}

/// Row partitions (train, validation) used by [`solve_map_cv`]; both sides
/// sorted ascending.
pub fn cv_partitions(n: usize, cv: &CvConfig, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    cv.validate()?;
    let n_train = (cv.train_fraction * n as f64).round() as usize;
    if n_train < 10 || n - n_train.min(n) < 10 {
        return Err(Error::InvalidParameter(format!(
            "{n} rows cannot be split into training and validation sets of at least 10"
        )));
    }
    Ok((0..cv.partitions)
        .map(|p| {
            let mut rows: Vec<usize> = (0..n).collect();
            rows.shuffle(&mut seed::rng(seed::derive(seed, &[seed::tag::CV_PARTITION, p as u64])));
            let mut train = rows[..n_train].to_vec();
            let mut valid = rows[n_train..].to_vec();
            train.sort_unstable();
            valid.sort_unstable();
            (train, valid)
        })
        .collect())
}

/// Tikhonov solution with the weight picked from `cv.lambda_grid` by the
/// average validation error over random row partitions.
pub fn solve_map_cv(
    op: &ConvolutionOperator,
    y: &[f64],
    cv: &CvConfig,
    seed: u64,
) -> Result<DeconvSolution> {
    check_target(op, y)?;
    let parts = cv_partitions(op.target_len(), cv, seed)?;
    let w = Whitened::new(op, cv.penalty);
    let g = w.gram();
    let grid = &cv.lambda_grid;
    let mut totals = vec![0.0; grid.len()];

    for (train, valid) in &parts {
        // Training solve in the dual: s_t = A_t^T (G_tt + lambda I)^{-1} y_t,
        // so predictions on validation rows are G_vt (G_tt + lambda I)^{-1} y_t.
        // With G_tt = Q T Q^T every grid point costs one tridiagonal solve.
        let g_tt = select(&g, train, train);
        let g_vt = select(&g, valid, train);
        let y_t = DVector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
        let y_v = DVector::from_iterator(valid.len(), valid.iter().map(|&i| y[i]));
        let (q, diag, off) = SymmetricTridiagonal::new(g_tt).unpack();
        let b = q.tr_mul(&y_t);
        let m = &g_vt * &q;
        for (total, &lambda) in totals.iter_mut().zip(grid) {
            let z = solve_shifted_tridiagonal(diag.as_slice(), off.as_slice(), lambda, b.as_slice())
                .ok_or(Error::Singular("regularized training matrix"))?;
            *total += (&m * DVector::from_vec(z) - &y_v).norm();
        }
    }

    let curve: Vec<(f64, f64)> =
        grid.iter().zip(&totals).map(|(&l, t)| (l, t / parts.len() as f64)).collect();
    let best = curve
        .iter()
        .filter(|(_, d)| d.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(l, _)| *l)
        .ok_or(Error::Singular("validation error"))?;
    let mut sol = solve_map(op, y, &MapConfig { lambda: best, penalty: cv.penalty })?;
    sol.cv_curve = Some(curve);
    Ok(sol)
}

/// Solves `(T + shift I) x = b` for symmetric tridiagonal `T` given by its
/// diagonal and off-diagonal, without pivoting (the shifted matrix is
/// positive definite for a Gram matrix and a positive shift).
fn solve_shifted_tridiagonal(diag: &[f64], off: &[f64], shift: f64, b: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut pivot = diag[0] + shift;
    if !(pivot > 0.0) {
        return None;
    }
    x[0] = b[0] / pivot;
    for i in 1..n {
        c[i - 1] = off[i - 1] / pivot;
        pivot = diag[i] + shift - off[i - 1] * c[i - 1];
        if !(pivot > 0.0) {
            return None;
        }
        x[i] = (b[i] - off[i - 1] * x[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Some(x)
}

fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}
