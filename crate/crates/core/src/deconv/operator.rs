use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Valid-part convolution `H s` with a kernel of `N_h` taps: maps a source
/// of `N_s = N + N_h - 1` samples to the `N` samples where kernel and source
/// overlap entirely.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionOperator {
    kernel: Vec<f64>,
    target_len: usize,
}

impl ConvolutionOperator {
    pub fn new(kernel: Vec<f64>, target_len: usize) -> Result<Self> {
        if kernel.is_empty() {
            return Err(Error::Empty("convolution kernel"));
        }
        if target_len == 0 {
            return Err(Error::InvalidParameter("target length must be >= 1".into()));
        }
        Ok(Self { kernel, target_len })
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn kernel_len(&self) -> usize {
        self.kernel.len()
    }

    /// `N`.
    pub fn target_len(&self) -> usize {
        self.target_len
    }

    /// `N_s = N + N_h - 1`.
    pub fn source_len(&self) -> usize {
        self.target_len + self.kernel.len() - 1
    }

    pub fn apply(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.source_len() {
            return Err(Error::DimensionMismatch { expected: self.source_len(), got: s.len() });
        }
        let nh = self.kernel.len();
        Ok((0..self.target_len)
            .map(|i| {
                // Row i touches s[i .. i + nh], kernel reversed.
                s[i..i + nh].iter().rev().zip(&self.kernel).map(|(a, b)| a * b).sum()
            })
            .collect())
    }

    pub fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.target_len {
            return Err(Error::DimensionMismatch { expected: self.target_len, got: y.len() });
        }
        let nh = self.kernel.len();
        let mut out = vec![0.0; self.source_len()];
        for (i, &v) in y.iter().enumerate() {
            for (o, k) in out[i..i + nh].iter_mut().rev().zip(&self.kernel) {
                *o += v * k;
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let nh = self.kernel.len();
        DMatrix::from_fn(self.target_len, self.source_len(), |i, j| {
            if j >= i && j < i + nh {
                self.kernel[i + nh - 1 - j]
            } else {
                0.0
            }
        })
    }

    /// `H H^T`, which is Toeplitz with the kernel autocorrelation.
    pub fn gram(&self) -> DMatrix<f64> {
        let nh = self.kernel.len();
        let auto: Vec<f64> = (0..nh)
            .map(|lag| self.kernel[..nh - lag].iter().zip(&self.kernel[lag..]).map(|(a, b)| a * b).sum())
            .collect();
        let n = self.target_len;
        DMatrix::from_fn(n, n, |i, j| {
            let lag = i.abs_diff(j);
            if lag < nh {
                auto[lag]
            } else {
                0.0
            }
        })
    }

    pub fn residual_norm(&self, s: &[f64], y: &[f64]) -> Result<f64> {
        let hs = self.apply(s)?;
        Ok(hs.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
    }
}

/// Penalty operator `P` of the Tikhonov term `lambda ||P s||^2`. Both
/// variants are square and invertible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Penalty {
    /// `P = I`: minimum-energy prior.
    #[default]
    Identity,
    /// First difference with kernel `[1, -1]`; row 0 keeps `s[0]`.
    FirstDifference,
}

impl Penalty {
    pub fn apply(&self, s: &[f64]) -> Vec<f64> {
        match self {
            Penalty::Identity => s.to_vec(),
            Penalty::FirstDifference => (0..s.len())
                .map(|i| if i == 0 { s[0] } else { s[i] - s[i - 1] })
                .collect(),
        }
    }

    /// `P^{-1} u`.
    pub fn inverse_apply(&self, u: &[f64]) -> Vec<f64> {
        match self {
            Penalty::Identity => u.to_vec(),
            Penalty::FirstDifference => u
                .iter()
                .scan(0.0, |acc, &v| {
                    *acc += v;
                    Some(*acc)
                })
                .collect(),
        }
    }

    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        match self {
            Penalty::Identity => DMatrix::identity(n, n),
            Penalty::FirstDifference => DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    1.0
                } else if j + 1 == i {
                    -1.0
                } else {
                    0.0
                }
            }),
        }
    }
}

/// `A = H P^{-1}` with `s = P^{-1} u`, which turns the penalized problem into
/// ridge regression on `u`. Keeps the dense matrix only when `P != I`.
pub(crate) struct Whitened<'a> {
    pub op: &'a ConvolutionOperator,
    pub penalty: Penalty,
    dense: Option<DMatrix<f64>>,
}

impl<'a> Whitened<'a> {
    pub fn new(op: &'a ConvolutionOperator, penalty: Penalty) -> Self {
        let dense = match penalty {
            Penalty::Identity => None,
            Penalty::FirstDifference => {
                // Right-multiplying by the cumulative-sum matrix turns each row
                // into its reversed running sum.
                let h = op.to_dense();
                let (n, ns) = h.shape();
                let mut a = DMatrix::zeros(n, ns);
                for i in 0..n {
                    let mut acc = 0.0;
                    for j in (0..ns).rev() {
                        acc += h[(i, j)];
                        a[(i, j)] = acc;
                    }
                }
                Some(a)
            }
        };
        Self { op, penalty, dense }
    }

    /// `A A^T`.
    pub fn gram(&self) -> DMatrix<f64> {
        match &self.dense {
            None => self.op.gram(),
            Some(a) => a * a.transpose(),
        }
    }

    /// `A^T v`.
    pub fn adjoint(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.dense {
            None => DVector::from_vec(self.op.adjoint(v.as_slice()).expect("length N")),
            Some(a) => a.tr_mul(v),
        }
    }

    pub fn dense(&self) -> DMatrix<f64> {
        match &self.dense {
            None => self.op.to_dense(),
            Some(a) => a.clone(),
        }
    }

    /// `s = P^{-1} A^T v`.
    pub fn source_from_dual(&self, v: &DVector<f64>) -> Vec<f64> {
        self.penalty.inverse_apply(self.adjoint(v).as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    #[test]
    fn identity_kernel() {
        let op = ConvolutionOperator::new(vec![1.0], 4).unwrap();
        assert_eq!(op.source_len(), 4);
        assert_eq!(op.apply(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn difference_kernel_by_hand() {
        let op = ConvolutionOperator::new(vec![1.0, -1.0], 3).unwrap();
        assert_eq!(op.source_len(), 4);
        let (a, b, c, d) = (1.0, 4.0, 9.0, 16.0);
        assert_eq!(op.apply(&[a, b, c, d]).unwrap(), vec![b - a, c - b, d - c]);
    }

    #[test]
    fn matches_valid_part_of_full_convolution() {
        let mut rng = seed::rng(1);
        let kernel: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let op = ConvolutionOperator::new(kernel.clone(), 8).unwrap();
        let mut full = vec![0.0; 16];
        for (i, a) in s.iter().enumerate() {
            for (j, b) in kernel.iter().enumerate() {
                full[i + j] += a * b;
            }
        }
        let valid = &full[4..12];
        for (x, y) in op.apply(&s).unwrap().iter().zip(valid) {
            assert!((x - y).abs() < 1e-14);
        }
        // Unit impulse at j reproduces the kernel segment in column j.
        let dense = op.to_dense();
        for j in 0..12 {
            let mut e = vec![0.0; 12];
            e[j] = 1.0;
            let col = op.apply(&e).unwrap();
            for i in 0..8 {
                assert_eq!(col[i], dense[(i, j)]);
            }
        }
    }

    #[test]
    fn adjoint_identity_and_gram() {
        let mut rng = seed::rng(2);
        let kernel: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let op = ConvolutionOperator::new(kernel, 20).unwrap();
        let s: Vec<f64> = (0..op.source_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs: f64 = op.apply(&s).unwrap().iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = s.iter().zip(op.adjoint(&y).unwrap()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);

        let h = op.to_dense();
        let g = &h * h.transpose();
        assert!((g - op.gram()).abs().max() < 1e-12);
    }

    #[test]
    fn empty_kernel_is_rejected() {
        assert!(ConvolutionOperator::new(vec![], 3).is_err());
    }

    #[test]
    fn penalty_inverse_round_trip() {
        let s = [1.0, -2.0, 0.5, 4.0];
        for p in [Penalty::Identity, Penalty::FirstDifference] {
            let back = p.inverse_apply(&p.apply(&s));
            for (a, b) in back.iter().zip(&s) {
                assert!((a - b).abs() < 1e-15);
            }
            let dense = p.to_dense(4) * DVector::from_row_slice(&s);
            assert_eq!(dense.as_slice(), p.apply(&s).as_slice());
        }
    }

    #[test]
    fn whitened_difference_matches_dense_product() {
        let op = ConvolutionOperator::new(vec![0.5, -1.0, 2.0], 6).unwrap();
        let w = Whitened::new(&op, Penalty::FirstDifference);
        let pinv = Penalty::FirstDifference.to_dense(op.source_len()).try_inverse().unwrap();
        let expected = op.to_dense() * pinv;
        assert!((w.dense() - expected).abs().max() < 1e-12);
    }
}
