//! Multinomial dispersion matrices and Gaussian sampling from them.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::pmf::Pmf;
use crate::rng::RngStream;

/// Eigenvalues below this are treated as roundoff and clamped to zero.
pub const PSD_CLAMP: f64 = 1e-10;
/// Eigenvalues below this make a matrix not positive semidefinite.
pub const PSD_REJECT: f64 = 1e-8;

/// `Gamma[i][j] = 1{i = j} p(i) - p(i) p(j)` for `i, j < dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionMatrix {
    entries: DMatrix<f64>,
}

impl DispersionMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Wraps a symmetric matrix; used for matrices built elsewhere.
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(invalid("dispersion matrix must be square"));
        }
        let asym = (&entries - entries.transpose()).amax();
        if asym > 1e-12 {
            return Err(invalid(format!("matrix is not symmetric (off by {asym:e})")));
        }
        Ok(Self { entries })
    }
}

pub fn dispersion_matrix(p: &Pmf, dim: usize) -> DispersionMatrix {
    let mass = p.padded(dim);
    let entries = DMatrix::from_fn(dim, dim, |i, j| {
        let diag = if i == j { mass[i] } else { 0.0 };
        diag - mass[i] * mass[j]
    });
    DispersionMatrix { entries }
}

/// A matrix `L` with `L L' = Gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFactor {
    factor: DMatrix<f64>,
}

impl GaussianFactor {
    /// Wraps any square factor; the sampled law is `N(0, L L')`.
    pub fn new(factor: DMatrix<f64>) -> Result<Self> {
        if !factor.is_square() {
            return Err(invalid("factor must be square"));
        }
        Ok(Self { factor })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// `L z` for `z` i.i.d. standard normal, written into `out`.
    pub fn sample_into(&self, rng: &mut RngStream, z: &mut Vec<f64>, out: &mut Vec<f64>) {
        let d = self.dim();
        z.clear();
        z.extend((0..d).map(|_| -> f64 { StandardNormal.sample(rng) }));
        out.clear();
        out.resize(d, 0.0);
        for (j, zj) in z.iter().enumerate() {
            for (o, l) in out.iter_mut().zip(self.factor.column(j).iter()) {
                *o += l * zj;
            }
        }
    }
}

/// Symmetric square root through the eigendecomposition, with roundoff
/// eigenvalues clamped at zero.
pub fn factor_psd(m: &DispersionMatrix) -> Result<GaussianFactor> {
    let eig = SymmetricEigen::new(m.entries.clone());
    let min = eig.eigenvalues.min();
    if min < -PSD_REJECT {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    let roots = eig
        .eigenvalues
        .map(|v| if v < PSD_CLAMP { 0.0 } else { v.sqrt() });
    let v = &eig.eigenvectors;
    let factor = v * DMatrix::from_diagonal(&roots) * v.transpose();
    Ok(GaussianFactor { factor })
}

pub fn sample_gaussian(f: &GaussianFactor, rng: &mut RngStream) -> Vec<f64> {
    let mut z = Vec::new();
    let mut out = Vec::new();
    f.sample_into(rng, &mut z, &mut out);
    out
}

/// Numerical rank of the dispersion matrix of `(Delta g(1), .., Delta g(S))`
/// for the Gaussian limit `g` attached to `p`. Equals `S` when that matrix
/// is invertible.
pub fn rank_diagnostic(p: &Pmf) -> Result<usize> {
    let s = p.support_end();
    if s == 0 {
        return Err(invalid("rank diagnostic needs support end >= 1"));
    }
    let sigma = dispersion_matrix(p, s + 1);
    let mut b = DMatrix::<f64>::zeros(s, s + 1);
    for j in 0..s - 1 {
        b[(j, j)] = 1.0;
        b[(j, j + 1)] = -2.0;
        b[(j, j + 2)] = 1.0;
    }
    // The last row drops the g(S + 1) term, which vanishes in the limit.
    b[(s - 1, s - 1)] = 1.0;
    b[(s - 1, s)] = -2.0;
    let v = &b * sigma.entries() * b.transpose();
    let eig = SymmetricEigen::new(v);
    let max = eig.eigenvalues.amax();
    Ok(eig
        .eigenvalues
        .iter()
        .filter(|&&e| e > 1e-10 * max)
        .count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pmf::{empirical_pmf, null_mixture, null_triangular, Sample};

    #[test]
    fn dispersion_examples() {
        let zero = dispersion_matrix(&Pmf::dirac(), 2);
        assert!(zero.entries().iter().all(|&v| v == 0.0));

        let half = Pmf::new(vec![0.5, 0.5]).unwrap();
        let m = dispersion_matrix(&half, 3);
        let want = DMatrix::from_row_slice(3, 3, &[0.25, -0.25, 0.0, -0.25, 0.25, 0.0, 0.0, 0.0, 0.0]);
        assert!((m.entries() - want).amax() < 1e-15);

        for p in [null_triangular(), null_mixture()] {
            let m = dispersion_matrix(&p, p.support_end() + 2);
            let ones = nalgebra::DVector::from_element(m.dim(), 1.0);
            assert!((m.entries() * ones).amax() < 1e-15);
            let last = m.dim() - 1;
            assert!(m.entries().row(last).iter().all(|&v| v == 0.0));
            let eig = SymmetricEigen::new(m.entries().clone());
            assert!(eig.eigenvalues.min() >= -1e-10);
        }
    }

    #[test]
    fn factor_examples() {
        let zero = DispersionMatrix::from_matrix(DMatrix::zeros(3, 3)).unwrap();
        assert!(factor_psd(&zero).unwrap().matrix().iter().all(|&v| v == 0.0));

        let id = DispersionMatrix::from_matrix(DMatrix::identity(4, 4)).unwrap();
        let f = factor_psd(&id).unwrap();
        assert!((f.matrix() - DMatrix::<f64>::identity(4, 4)).amax() < 1e-14);

        let p = empirical_pmf(&Sample::new(vec![0, 0, 1, 3]).unwrap());
        let gamma = dispersion_matrix(&p, 5);
        let f = factor_psd(&gamma).unwrap();
        let back = f.matrix() * f.matrix().transpose();
        assert!((back - gamma.entries()).amax() < 1e-10);
    }

    #[test]
    fn factor_rejects_indefinite() {
        let m = DispersionMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]))
            .unwrap();
        assert!(matches!(factor_psd(&m), Err(Error::NotPsd { .. })));
        assert!(DispersionMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0])).is_err());
    }

    #[test]
    fn gaussian_examples() {
        let zero = GaussianFactor::new(DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(sample_gaussian(&zero, &mut RngStream::new(1)), vec![0.0; 3]);

        let f = factor_psd(&dispersion_matrix(&null_mixture(), 7)).unwrap();
        let a = sample_gaussian(&f, &mut RngStream::new(4));
        let b = sample_gaussian(&f, &mut RngStream::new(4));
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_covariance_matches() {
        for p in [null_triangular(), null_mixture()] {
            let gamma = dispersion_matrix(&p, 7);
            let f = factor_psd(&gamma).unwrap();
            let draws = 100_000;
            let mut rng = RngStream::new(99);
            let mut acc = DMatrix::<f64>::zeros(7, 7);
            let (mut z, mut g) = (Vec::new(), Vec::new());
            for _ in 0..draws {
                f.sample_into(&mut rng, &mut z, &mut g);
                let v = nalgebra::DVector::from_column_slice(&g);
                acc += &v * v.transpose();
            }
            acc /= draws as f64;
            assert!((acc - gamma.entries()).amax() < 0.01);
        }
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_diagnostic(&null_triangular()).unwrap(), 5);
        assert_eq!(rank_diagnostic(&null_mixture()).unwrap(), 5);
        assert_eq!(rank_diagnostic(&Pmf::new(vec![0.5, 0.5]).unwrap()).unwrap(), 1);
        assert!(rank_diagnostic(&Pmf::dirac()).is_err());
    }
}
