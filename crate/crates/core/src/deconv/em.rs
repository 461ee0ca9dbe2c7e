use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::operator::Whitened;
use super::{check_target, ConvolutionOperator, DeconvSolution, Penalty};
use crate::error::{Error, Result};

/// Eigendecomposition `A A^T = U diag(L) U^T` of the whitened operator,
/// shared by every iteration of one EM run.
struct EmBasis {
    op: ConvolutionOperator,
    penalty: Penalty,
    u: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

/// Posterior covariance of the source,
/// `Sigma_s = (a H^T H + b P^T P)^{-1}` with `a = eps^-2` and `b = gamma^-2`,
/// kept in factored form. [`PosteriorCovariance::to_dense`] materializes it.
#[derive(Clone)]
pub struct PosteriorCovariance {
    basis: Arc<EmBasis>,
    a: f64,
    b: f64,
}

impl fmt::Debug for PosteriorCovariance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PosteriorCovariance")
            .field("dim", &self.dim())
            .field("noise_precision", &self.a)
            .field("prior_precision", &self.b)
            .finish()
    }
}

impl PosteriorCovariance {
    pub fn dim(&self) -> usize {
        self.basis.op.source_len()
    }

    /// `eps^-2` of the previous iterate.
    pub fn noise_precision(&self) -> f64 {
        self.a
    }

    /// `gamma^-2` of the previous iterate.
    pub fn prior_precision(&self) -> f64 {
        self.b
    }

    /// The equivalent Tikhonov weight `eps^2 / gamma^2`.
    pub fn lambda(&self) -> f64 {
        self.b / self.a
    }

    /// `Tr(H^T H Sigma_s)`.
    pub fn trace_gram(&self) -> f64 {
        self.basis.eigenvalues.iter().map(|l| l / (self.a * l + self.b)).sum()
    }

    /// `Tr(P^T P Sigma_s)`.
    pub fn trace_penalized(&self) -> f64 {
        let n = self.basis.eigenvalues.len();
        let ns = self.dim();
        self.basis.eigenvalues.iter().map(|l| 1.0 / (self.a * l + self.b)).sum::<f64>()
            + (ns - n) as f64 / self.b
    }

    /// Dense `N_s x N_s` matrix via the Woodbury identity.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let basis = &*self.basis;
        let w = Whitened::new(&basis.op, basis.penalty);
        let rho = self.lambda();
        let mut m = basis.u.tr_mul(&w.dense());
        for (i, l) in basis.eigenvalues.iter().enumerate() {
            m.row_mut(i).scale_mut(1.0 / (l + rho).sqrt());
        }
        let ns = self.dim();
        let whitened = (DMatrix::identity(ns, ns) - m.tr_mul(&m)) / self.b;
        match basis.penalty {
            Penalty::Identity => whitened,
            p => {
                let pinv = DMatrix::from_fn(ns, ns, |i, j| {
                    let mut e = vec![0.0; ns];
                    e[j] = 1.0;
                    p.inverse_apply(&e)[i]
                });
                &pinv * whitened * pinv.transpose()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmState {
    pub epsilon: f64,
    pub gamma: f64,
    pub mu_s: Vec<f64>,
    pub sigma_s: PosteriorCovariance,
    pub iteration: usize,
}

/// Joint estimation of the source and the noise and prior scales.
///
/// Iteration `i` computes the posterior `(mu_s, Sigma_s)` under the previous
/// `(eps, gamma)` and then updates both scales in closed form. All traces and
/// norms are evaluated in the eigenbasis of `A A^T`, so each iteration costs
/// one adjoint application after a single eigendecomposition.
pub fn solve_em(
    op: &ConvolutionOperator,
    y: &[f64],
    penalty: Penalty,
    iters: usize,
    eps0: f64,
    gamma0: f64,
) -> Result<DeconvSolution> {
    check_target(op, y)?;
    if iters == 0 {
        return Err(Error::InvalidParameter("EM needs at least one iteration".into()));
    }
    for (name, v) in [("eps0", eps0), ("gamma0", gamma0)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
        }
    }
    let w = Whitened::new(op, penalty);
    let eig = w.gram().symmetric_eigen();
    let eigenvalues: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    let c = eig.eigenvectors.tr_mul(&DVector::from_column_slice(y));
    let y_energy: f64 = y.iter().map(|v| v * v).sum();
    // Part of y outside the span of U; zero up to rounding.
    let outside = (y_energy - c.norm_squared()).max(0.0);
    let basis = Arc::new(EmBasis { op: op.clone(), penalty, u: eig.eigenvectors, eigenvalues });

    let n = op.target_len() as f64;
    let ns = op.source_len() as f64;
    let (mut eps, mut gamma) = (eps0, gamma0);
    let mut trajectory = Vec::with_capacity(iters);
    for iteration in 1..=iters {
        let a = eps.powi(-2);
        let b = gamma.powi(-2);
        let rho = b / a;
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::Singular("EM precision matrix"));
        }
        let sigma = PosteriorCovariance { basis: Arc::clone(&basis), a, b };
        let coeffs: Vec<f64> =
            c.iter().zip(&basis.eigenvalues).map(|(ci, l)| ci / (l + rho)).collect();
        let residual: f64 = c
            .iter()
            .zip(&basis.eigenvalues)
            .zip(&coeffs)
            .map(|((ci, l), wi)| (ci - l * wi).powi(2))
            .sum::<f64>()
            + outside;
        let mean_energy: f64 =
            basis.eigenvalues.iter().zip(&coeffs).map(|(l, wi)| l * wi * wi).sum();
        let t1 = residual + sigma.trace_gram();
        let t2 = sigma.trace_penalized() + mean_energy;

        let mu_s = w.source_from_dual(&(&basis.u * DVector::from_vec(coeffs)));
        eps = (t1 / n).sqrt();
        gamma = (t2 / ns).sqrt();
        if !(eps > 0.0 && gamma > 0.0 && eps.is_finite() && gamma.is_finite()) {
            return Err(Error::Singular("EM precision matrix"));
        }
        trajectory.push(EmState { epsilon: eps, gamma, mu_s, sigma_s: sigma, iteration });
    }

    let last = trajectory.last().expect("iters >= 1");
    let s = last.mu_s.clone();
    let residual = op.residual_norm(&s, y)?;
    let mut sol = DeconvSolution::new(s, residual);
    sol.effective_lambda = Some(eps * eps / (gamma * gamma));
    sol.em_trajectory = Some(trajectory);
    Ok(sol)
}

/// Observed-data log-likelihood `log p(y | eps, gamma)` of the state's scales.
pub fn em_objective(
    state: &EmState,
    op: &ConvolutionOperator,
    y: &[f64],
    penalty: Penalty,
) -> Result<f64> {
    log_evidence(op, y, penalty, state.epsilon, state.gamma)
}

/// `log N(y; 0, eps^2 I + gamma^2 H (P^T P)^{-1} H^T)`, by dense Cholesky.
pub fn log_evidence(
    op: &ConvolutionOperator,
    y: &[f64],
    penalty: Penalty,
    eps: f64,
    gamma: f64,
) -> Result<f64> {
    check_target(op, y)?;
    if !(eps > 0.0 && gamma >= 0.0 && eps.is_finite() && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("scales eps={eps}, gamma={gamma}")));
    }
    let w = Whitened::new(op, penalty);
    let mut cov = w.gram() * (gamma * gamma);
    for i in 0..cov.nrows() {
        cov[(i, i)] += eps * eps;
    }
    let chol = cov.cholesky().ok_or(Error::Singular("evidence covariance"))?;
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let z = chol.l().solve_lower_triangular(&DVector::from_column_slice(y)).ok_or(Error::Singular("evidence covariance"))?;
    let n = y.len() as f64;
    Ok(-0.5 * (n * (2.0 * std::f64::consts::PI).ln() + log_det + z.norm_squared()))
}
