//! Sample standardization: mean, biased covariance, the symmetric inverse
//! square root of the covariance, and the scaled residuals
//! `Z_i = S^{-1/2} (X_i - mean)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative eigenvalue threshold below which the covariance is treated as
/// singular: `lambda_min <= SINGULARITY_RTOL * lambda_max`.
pub const SINGULARITY_RTOL: f64 = 1e-12;

/// A raw n x p sample, one observation per row.
#[derive(Debug, Clone)]
pub struct SampleMatrix {
    data: DMatrix<f64>,
}

impl SampleMatrix {
    /// Wrap an n x p matrix of observations. All entries must be finite and
    /// there must be at least one row.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidInput("empty sample".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("sample contains non-finite entries".into()));
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("empty sample".into()));
        }
        let p = rows[0].len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidInput("ragged rows".into()));
        }
        Self::new(DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
    }

    /// Univariate sample as an n x 1 matrix.
    pub fn from_column(col: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_fn(col.len(), 1, |i, _| col[i]))
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }
}

/// Mean, biased covariance, its symmetric inverse square root, and the
/// scaled residuals of a sample.
#[derive(Debug, Clone)]
pub struct Standardization {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
    pub residuals: DMatrix<f64>,
}

/// Arithmetic column means.
pub fn sample_mean(x: &SampleMatrix) -> DVector<f64> {
    let n = x.n() as f64;
    DVector::from_fn(x.p(), |j, _| x.data.column(j).sum() / n)
}

/// Biased (divisor n) sample covariance matrix.
pub fn sample_cov_biased(x: &SampleMatrix) -> Result<DMatrix<f64>> {
    if x.n() < 2 {
        return Err(Error::InvalidInput("covariance needs n >= 2".into()));
    }
    let n = x.n();
    let p = x.p();
    let mean = sample_mean(x);
    let mut cov = DMatrix::zeros(p, p);
    for i in 0..n {
        for a in 0..p {
            let da = x.data[(i, a)] - mean[a];
            for b in a..p {
                cov[(a, b)] += da * (x.data[(i, b)] - mean[b]);
            }
        }
    }
    cov /= n as f64;
    for a in 0..p {
        for b in 0..a {
            cov[(a, b)] = cov[(b, a)];
        }
    }
    Ok(cov)
}

fn check_symmetric(s: &DMatrix<f64>, tol: f64) -> Result<()> {
    let scale = s.amax().max(1.0);
    for a in 0..s.nrows() {
        for b in (a + 1)..s.ncols() {
            if (s[(a, b)] - s[(b, a)]).abs() > tol * scale {
                return Err(Error::InvalidInput("matrix is not symmetric".into()));
            }
        }
    }
    Ok(())
}

/// The unique symmetric positive-definite `A` with `A s A = I`, computed by
/// a symmetric eigendecomposition (a Cholesky factor would not be symmetric).
///
/// Returns [`Error::SingularCovariance`] when the smallest eigenvalue falls
/// at or below `SINGULARITY_RTOL` times the largest.
pub fn sym_inv_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if s.nrows() != s.ncols() {
        return Err(Error::InvalidInput("matrix is not square".into()));
    }
    check_symmetric(s, 1e-10)?;
    let eig = s.clone().symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_ev = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max_ev > 0.0) || min_ev <= SINGULARITY_RTOL * max_ev {
        return Err(Error::SingularCovariance);
    }
    let p = s.nrows();
    let inv_sqrt_evs = DVector::from_fn(p, |k, _| eig.eigenvalues[k].sqrt().recip());
    let mut scaled = eig.eigenvectors.clone();
    for k in 0..p {
        scaled.column_mut(k).scale_mut(inv_sqrt_evs[k]);
    }
    Ok(&scaled * eig.eigenvectors.transpose())
}

/// The unique symmetric positive-semidefinite square root of `s`.
pub fn sym_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(s, 1e-10)?;
    let eig = s.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l < -1e-10) {
        return Err(Error::InvalidInput("matrix is not positive semidefinite".into()));
    }
    let p = s.nrows();
    let mut scaled = eig.eigenvectors.clone();
    for k in 0..p {
        scaled.column_mut(k).scale_mut(eig.eigenvalues[k].max(0.0).sqrt());
    }
    Ok(&scaled * eig.eigenvectors.transpose())
}

/// Standardize a sample into scaled residuals `Z_i = S^{-1/2}(X_i - mean)`.
///
/// Requires `n >= p + 1`; a singular covariance propagates as
/// [`Error::SingularCovariance`].
pub fn scaled_residuals(x: &SampleMatrix) -> Result<Standardization> {
    if x.n() < x.p() + 1 {
        return Err(Error::InvalidInput(format!(
            "need n >= p + 1, got n = {}, p = {}",
            x.n(),
            x.p()
        )));
    }
    let mean = sample_mean(x);
    let cov = sample_cov_biased(x)?;
    let inv_sqrt = sym_inv_sqrt(&cov)?;
    let mut centered = x.data.clone();
    for i in 0..x.n() {
        for j in 0..x.p() {
            centered[(i, j)] -= mean[j];
        }
    }
    let residuals = &centered * &inv_sqrt; // inv_sqrt symmetric, so rows are S^{-1/2}(x_i - mean)
    Ok(Standardization { mean, cov, inv_sqrt, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn cross_sample() -> SampleMatrix {
        SampleMatrix::from_rows(&[
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ])
        .unwrap()
    }

    #[test]
    fn mean_of_symmetric_sample_is_zero() {
        let m = sample_mean(&cross_sample());
        assert_abs_diff_eq!(m[0], 0.0);
        assert_abs_diff_eq!(m[1], 0.0);
    }

    #[test]
    fn mean_of_single_row_is_identity() {
        let x = SampleMatrix::from_rows(&[vec![3.5]]).unwrap();
        assert_abs_diff_eq!(sample_mean(&x)[0], 3.5);
    }

    #[test]
    fn mean_of_gaussian_sample_is_near_zero() {
        let mut rng = crate::rng::substream(7, 0);
        let rows: Vec<Vec<f64>> = (0..1000)
            .map(|_| {
                (0..2)
                    .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect()
            })
            .collect();
        let x = SampleMatrix::from_rows(&rows).unwrap();
        // independent plain summation oracle
        let mut s = [0.0f64; 2];
        for r in &rows {
            s[0] += r[0];
            s[1] += r[1];
        }
        let m = sample_mean(&x);
        assert_abs_diff_eq!(m[0], s[0] / 1000.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m[1], s[1] / 1000.0, epsilon = 1e-12);
        let bound = 4.0 / (1000.0f64).sqrt();
        assert!(m[0].abs() < bound && m[1].abs() < bound);
    }

    #[test]
    fn cov_of_cross_sample() {
        let c = sample_cov_biased(&cross_sample()).unwrap();
        assert_abs_diff_eq!(c[(0, 0)], 0.5);
        assert_abs_diff_eq!(c[(1, 1)], 0.5);
        assert_abs_diff_eq!(c[(0, 1)], 0.0);
    }

    #[test]
    fn cov_of_constant_sample_is_zero() {
        let x = SampleMatrix::from_rows(&vec![vec![2.0, -1.0]; 5]).unwrap();
        let c = sample_cov_biased(&x).unwrap();
        assert!(c.amax() < 1e-15);
    }

    #[test]
    fn cov_requires_two_rows() {
        let x = SampleMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(matches!(sample_cov_biased(&x), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn cov_matches_brute_force_double_loop() {
        let mut rng = crate::rng::substream(3, 0);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let x = SampleMatrix::from_rows(&rows).unwrap();
        let c = sample_cov_biased(&x).unwrap();
        let mean: Vec<f64> = (0..3).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / 5.0).collect();
        for a in 0..3 {
            for b in 0..3 {
                let mut acc = 0.0;
                for r in &rows {
                    acc += (r[a] - mean[a]) * (r[b] - mean[b]);
                }
                assert_abs_diff_eq!(c[(a, b)], acc / 5.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn inv_sqrt_of_identity() {
        let a = sym_inv_sqrt(&DMatrix::identity(3, 3)).unwrap();
        assert!((a - DMatrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn inv_sqrt_of_diagonal() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let a = sym_inv_sqrt(&s).unwrap();
        assert_abs_diff_eq!(a[(0, 0)], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(a[(1, 1)], 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(a[(0, 1)], 0.0, epsilon = 1e-14);
    }

    fn random_spd(p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = crate::rng::substream(seed, 0);
        let b = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(p, p) * 0.5
    }

    #[test]
    fn inv_sqrt_verified_by_multiplication() {
        let s = random_spd(4, 1);
        let a = sym_inv_sqrt(&s).unwrap();
        let asa = &a * &s * &a;
        let resid = asa - DMatrix::identity(4, 4);
        // spectral norm bounded by Frobenius norm
        assert!(resid.norm() < 1e-10);
        // symmetric output
        assert!((&a - a.transpose()).amax() < 1e-10);
    }

    #[test]
    fn inv_sqrt_eigenvalues_are_reciprocal_roots() {
        let s = random_spd(4, 2);
        let a = sym_inv_sqrt(&s).unwrap();
        let mut ev_s: Vec<f64> = s.symmetric_eigen().eigenvalues.iter().map(|l| l.sqrt().recip()).collect();
        let mut ev_a: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().cloned().collect();
        ev_s.sort_by(|x, y| x.partial_cmp(y).unwrap());
        ev_a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (x, y) in ev_s.iter().zip(&ev_a) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-10);
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        assert!(matches!(sym_inv_sqrt(&s), Err(Error::SingularCovariance)));
    }

    #[test]
    fn residuals_of_cross_sample() {
        let st = scaled_residuals(&cross_sample()).unwrap();
        let sqrt2 = std::f64::consts::SQRT_2;
        let expected = [[sqrt2, 0.0], [-sqrt2, 0.0], [0.0, sqrt2], [0.0, -sqrt2]];
        for i in 0..4 {
            for j in 0..2 {
                assert_abs_diff_eq!(st.residuals[(i, j)], expected[i][j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn residual_second_moment_is_identity() {
        let mut rng = crate::rng::substream(11, 0);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..3.0)).collect())
            .collect();
        let st = scaled_residuals(&SampleMatrix::from_rows(&rows).unwrap()).unwrap();
        let ztz = st.residuals.transpose() * &st.residuals / 40.0;
        assert!((ztz - DMatrix::identity(3, 3)).amax() < 1e-8);
        for j in 0..3 {
            assert!(st.residuals.column(j).sum().abs() / 40.0 < 1e-10);
        }
    }

    #[test]
    fn translation_invariance() {
        let mut rng = crate::rng::substream(13, 0);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0] + 10.0, r[1] - 3.0]).collect();
        let a = scaled_residuals(&SampleMatrix::from_rows(&rows).unwrap()).unwrap();
        let b = scaled_residuals(&SampleMatrix::from_rows(&shifted).unwrap()).unwrap();
        assert!((a.residuals - b.residuals).amax() < 1e-10);
    }

    #[test]
    fn univariate_scale_invariance() {
        let mut rng = crate::rng::substream(17, 0);
        let col: Vec<f64> = (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scaled: Vec<f64> = col.iter().map(|v| v * -7.5).collect();
        let a = scaled_residuals(&SampleMatrix::from_column(&col).unwrap()).unwrap();
        let b = scaled_residuals(&SampleMatrix::from_column(&scaled).unwrap()).unwrap();
        // for c < 0 the residuals flip sign with the scaling
        for i in 0..25 {
            assert_abs_diff_eq!(a.residuals[(i, 0)], -b.residuals[(i, 0)], epsilon = 1e-10);
        }
        let pos: Vec<f64> = col.iter().map(|v| v * 3.0).collect();
        let c = scaled_residuals(&SampleMatrix::from_column(&pos).unwrap()).unwrap();
        assert!((&a.residuals - &c.residuals).amax() < 1e-10);
    }

    #[test]
    fn affine_equivariance_preserves_ztz() {
        let mut rng = crate::rng::substream(19, 0);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let x = SampleMatrix::from_rows(&rows).unwrap();
        let a_mat = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, -0.5, 1.0, 0.2, 0.1, 0.0, 1.5]);
        let xa = SampleMatrix::new(x.data() * a_mat.transpose()).unwrap();
        let z = scaled_residuals(&x).unwrap().residuals;
        let za = scaled_residuals(&xa).unwrap().residuals;
        let g1 = z.transpose() * &z;
        let g2 = za.transpose() * &za;
        assert!((&g1 - &g2).amax() < 1e-8);
        // residuals of XA^T equal Z O^T for orthogonal O; recover O by least squares
        // O^T = (Z^T Z)^{-1} Z^T Za  since Z has full column rank
        let ot = g1.clone().lu().solve(&(z.transpose() * &za)).unwrap();
        assert!((&ot * ot.transpose() - DMatrix::identity(3, 3)).amax() < 1e-8);
        assert!((&z * &ot - za).amax() < 1e-8);
    }
}
