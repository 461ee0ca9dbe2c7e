use nalgebra::{DMatrix, DVector};

use super::{check_target, ConvolutionOperator, DeconvSolution};
use crate::error::{Error, Result};

/// Relative size of the smallest `R` diagonal below which `H` is treated as
/// rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Exact solution of the underdetermined system with at most `N` non-zero
/// components (the "basic" least-squares solution).
///
/// QR with column pivoting `H P = Q [R1 R2]` selects `N` independent
/// columns; the solution is `P [R1^{-1} Q^T y; 0]`. Rank-deficient systems
/// fall back to the SVD pseudo-inverse and are flagged.
pub fn solve_ml(op: &ConvolutionOperator, y: &[f64]) -> Result<DeconvSolution> {
    check_target(op, y)?;
    let h = op.to_dense();
    let n = h.nrows();
    let rhs = DVector::from_column_slice(y);

    let qr = h.clone().col_piv_qr();
    let r = qr.r();
    let r1 = r.columns(0, n).into_owned();
    let basic = full_rank(&r1)
        .then(|| r1.solve_upper_triangular(&qr.q().tr_mul(&rhs)))
        .flatten()
        .map(|z| {
            let mut s = DVector::zeros(h.ncols());
            s.rows_mut(0, n).copy_from(&z);
            qr.p().inv_permute_rows(&mut s);
            s.as_slice().to_vec()
        });
    finish(op, y, h, basic)
}

/// Minimum-norm exact solution `H^T (H H^T)^{-1} y`, via the QR
/// factorization `H^T = Q R`: `s = Q R^{-T} y`. Same rank-deficiency
/// handling as [`solve_ml`].
pub fn solve_ml_min_norm(op: &ConvolutionOperator, y: &[f64]) -> Result<DeconvSolution> {
    check_target(op, y)?;
    let h = op.to_dense();
    let rhs = DVector::from_column_slice(y);
    let qr = h.transpose().qr();
    let r = qr.r();
    let min_norm = full_rank(&r)
        .then(|| r.tr_solve_upper_triangular(&rhs))
        .flatten()
        .map(|z| (qr.q() * z).as_slice().to_vec());
    finish(op, y, h, min_norm)
}

fn full_rank(r: &DMatrix<f64>) -> bool {
    let diag: Vec<f64> = r.diagonal().iter().map(|v| v.abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    max > 0.0 && min > RANK_TOL * max
}

fn finish(
    op: &ConvolutionOperator,
    y: &[f64],
    h: DMatrix<f64>,
    exact: Option<Vec<f64>>,
) -> Result<DeconvSolution> {
    let (s, rank_deficient) = match exact {
        Some(s) => (s, false),
        None => {
            let svd = h.svd(true, true);
            let cutoff = RANK_TOL * svd.singular_values.max();
            let s = svd
                .solve(&DVector::from_column_slice(y), cutoff)
                .map_err(|_| Error::Singular("pseudo-inverse of the convolution matrix"))?;
            (s.as_slice().to_vec(), true)
        }
    };
    let residual = op.residual_norm(&s, y)?;
    let mut sol = DeconvSolution::new(s, residual);
    sol.rank_deficient = rank_deficient;
    Ok(sol)
}
