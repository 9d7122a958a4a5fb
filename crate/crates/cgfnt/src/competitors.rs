//! Competitor tests for the power studies: the energy statistic and
//! Mardia's skewness and kurtosis, all evaluated on scaled residuals and
//! calibrated by the same Monte Carlo machinery as the main test.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::rng::substream;

/// Truncation policy for the expected-norm series.
const SERIES_RTOL: f64 = 1e-12;
const SERIES_MAX_TERMS: usize = 500;

/// `E || a - X ||` for `X ~ N(0, I_p)`, by the alternating series
/// `sqrt(2) G((p+1)/2)/G(p/2) + sqrt(2/pi) sum_k ...`.
///
/// Truncates when a term drops below `1e-12` of the partial sum; failure
/// to converge within 500 terms is a [`Error::NumericLimit`], and callers
/// fall back to a Monte Carlo estimate.
pub fn expected_norm_to_std_normal(a: &DVector<f64>, p: usize) -> Result<f64> {
    if a.len() != p {
        return Err(Error::InvalidInput("vector dimension does not match p".into()));
    }
    let pf = p as f64;
    let lead = std::f64::consts::SQRT_2 * (ln_gamma((pf + 1.0) / 2.0) - ln_gamma(pf / 2.0)).exp();
    let norm = a.norm();
    if norm == 0.0 {
        return Ok(lead);
    }
    let ln_norm_sq = 2.0 * norm.ln();
    let ln_gp1 = ln_gamma((pf + 1.0) / 2.0);
    let coef = (2.0 / std::f64::consts::PI).sqrt();
    let mut sum = 0.0;
    for k in 0..SERIES_MAX_TERMS {
        let kf = k as f64;
        let ln_mag = (kf + 1.0) * ln_norm_sq - ln_gamma(kf + 1.0) - kf * std::f64::consts::LN_2
            + ln_gp1
            + ln_gamma(kf + 1.5)
            - ln_gamma(kf + pf / 2.0 + 1.0)
            - ((2.0 * kf + 1.0) * (2.0 * kf + 2.0)).ln();
        let term = if k % 2 == 0 { ln_mag.exp() } else { -ln_mag.exp() };
        sum += term;
        let total = lead + coef * sum;
        if term.abs() * coef <= SERIES_RTOL * total.abs() && k > 0 {
            return Ok(total);
        }
    }
    Err(Error::NumericLimit(format!(
        "expected-norm series did not converge within {SERIES_MAX_TERMS} terms at |a| = {norm}"
    )))
}

/// Monte Carlo estimate of `E || a - X ||` over `draws` standard normal
/// vectors; the deterministic fallback for the series.
pub fn expected_norm_mc(a: &DVector<f64>, p: usize, draws: usize, seed: u64) -> f64 {
    let chunks = map_indexed(draws.div_ceil(4096), |c| {
        let mut rng = substream(seed, c as u64);
        let lo = c * 4096;
        let hi = (lo + 4096).min(draws);
        let mut s = 0.0;
        for _ in lo..hi {
            let mut sq = 0.0;
            for j in 0..p {
                let d = a[j] - rng.sample::<f64, _>(StandardNormal);
                sq += d * d;
            }
            s += sq.sqrt();
        }
        s
    });
    chunks.iter().sum::<f64>() / draws as f64
}

/// Energy statistic value plus how many expected-norm evaluations fell
/// back to Monte Carlo.
#[derive(Debug, Clone, Copy)]
pub struct EnergyStatistic {
    pub value: f64,
    pub series_fallbacks: usize,
}

/// The energy statistic on scaled residuals:
/// `n (2/n sum_i E|z_i - X| - 2 G((p+1)/2)/G(p/2) - (1/n^2) sum_ij |z_i - z_j|)`.
pub fn energy_statistic(z: &DMatrix<f64>) -> Result<EnergyStatistic> {
    let n = z.nrows();
    let p = z.ncols();
    if n == 0 {
        return Err(Error::InvalidInput("empty residual matrix".into()));
    }
    let pf = p as f64;
    let mid = 2.0 * (ln_gamma((pf + 1.0) / 2.0) - ln_gamma(pf / 2.0)).exp();

    let expect_terms = map_indexed(n, |i| {
        let zi = z.row(i).transpose();
        match expected_norm_to_std_normal(&zi, p) {
            Ok(v) => (v, 0usize),
            // deterministic fallback keyed by the row index
            Err(Error::NumericLimit(_)) => (expected_norm_mc(&zi, p, 1_000_000, 0xE4E1 + i as u64), 1),
            Err(_) => unreachable!("dimension checked above"),
        }
    });
    let series_fallbacks = expect_terms.iter().map(|(_, f)| f).sum();
    let expect_sum: f64 = expect_terms.iter().map(|(v, _)| v).sum();

    let pair_rows = map_indexed(n, |i| {
        let mut s = 0.0;
        for j in (i + 1)..n {
            let mut sq = 0.0;
            for k in 0..p {
                let d = z[(i, k)] - z[(j, k)];
                sq += d * d;
            }
            s += sq.sqrt();
        }
        s
    });
    let pair_sum: f64 = 2.0 * pair_rows.iter().sum::<f64>();

    let nf = n as f64;
    let value = nf * (2.0 / nf * expect_sum - mid - pair_sum / (nf * nf));
    Ok(EnergyStatistic { value, series_fallbacks })
}

/// Mardia's skewness `b_{1,p} = (1/n^2) sum_ij (z_i' z_j)^3`.
pub fn mardia_skewness(z: &DMatrix<f64>) -> f64 {
    let n = z.nrows();
    let p = z.ncols();
    let rows = map_indexed(n, |i| {
        let mut s = 0.0;
        for j in 0..n {
            let mut dot = 0.0;
            for k in 0..p {
                dot += z[(i, k)] * z[(j, k)];
            }
            s += dot * dot * dot;
        }
        s
    });
    rows.iter().sum::<f64>() / (n * n) as f64
}

/// Mardia's kurtosis `b_{2,p} = (1/n) sum_i |z_i|^4`.
pub fn mardia_kurtosis(z: &DMatrix<f64>) -> f64 {
    let n = z.nrows();
    let p = z.ncols();
    let mut s = 0.0;
    for i in 0..n {
        let mut sq = 0.0;
        for k in 0..p {
            sq += z[(i, k)] * z[(i, k)];
        }
        s += sq * sq;
    }
    s / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::standardize::{scaled_residuals, SampleMatrix};
    use approx::assert_abs_diff_eq;

    #[test]
    fn expected_norm_at_origin_p1() {
        let a = DVector::zeros(1);
        let v = expected_norm_to_std_normal(&a, 1).unwrap();
        assert_abs_diff_eq!(v, (2.0 / std::f64::consts::PI).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn expected_norm_at_origin_p3() {
        let a = DVector::zeros(3);
        let v = expected_norm_to_std_normal(&a, 3).unwrap();
        // sqrt(2) Gamma(2)/Gamma(1.5) = 2 sqrt(2) / sqrt(pi)
        assert_abs_diff_eq!(v, 2.0 * std::f64::consts::SQRT_2 / std::f64::consts::PI.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn expected_norm_series_matches_mc_oracle() {
        let a = DVector::from_vec(vec![1.0, 1.0]);
        let series = expected_norm_to_std_normal(&a, 2).unwrap();
        let draws = 10_000_000;
        let mc = expected_norm_mc(&a, 2, draws, 1);
        // norm has variance <= 2 here; 4 MC standard errors
        let se = (2.0f64 / draws as f64).sqrt();
        assert!((series - mc).abs() < 4.0 * se, "series {series} vs mc {mc}");
    }

    #[test]
    fn expected_norm_series_grid_vs_mc() {
        for &p in &[1usize, 2, 3, 5] {
            for &r in &[0.0, 0.5, 1.0, 2.0, 4.0] {
                let mut a = DVector::zeros(p);
                a[0] = r;
                let series = expected_norm_to_std_normal(&a, p).unwrap();
                let mc = expected_norm_mc(&a, p, 400_000, (p as u64) << 8 | r as u64);
                let se = ((p as f64 + r * r) / 400_000.0).sqrt();
                assert!((series - mc).abs() < 4.0 * se, "p={p} |a|={r}: {series} vs {mc}");
            }
        }
    }

    #[test]
    fn energy_single_point_at_origin() {
        for p in [1usize, 2, 3] {
            let z = DMatrix::zeros(1, p);
            let e = energy_statistic(&z).unwrap();
            let pf = p as f64;
            let g = (ln_gamma((pf + 1.0) / 2.0) - ln_gamma(pf / 2.0)).exp();
            let expect = 2.0 * (std::f64::consts::SQRT_2 - 1.0) * g;
            assert_abs_diff_eq!(e.value, expect, epsilon = 1e-10);
        }
    }

    #[test]
    fn energy_is_nonnegative_on_null_samples() {
        for seed in 0..200 {
            let mut rng = substream(500 + seed, 0);
            let rows: Vec<Vec<f64>> = (0..20)
                .map(|_| (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
                .collect();
            let st = scaled_residuals(&SampleMatrix::from_rows(&rows).unwrap()).unwrap();
            let e = energy_statistic(&st.residuals).unwrap();
            assert!(e.value >= -1e-8, "energy {}", e.value);
        }
    }

    #[test]
    fn mardia_skewness_vanishes_on_symmetric_set() {
        let z = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, -1.0, -0.5, 0.3, -0.7, -0.3, 0.7]);
        assert_abs_diff_eq!(mardia_skewness(&z), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mardia_skewness_sign_flip_invariance() {
        let mut rng = substream(42, 0);
        let z = DMatrix::from_fn(10, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let flipped = -z.clone();
        assert_abs_diff_eq!(mardia_skewness(&z), mardia_skewness(&flipped), epsilon = 1e-12);
    }

    #[test]
    fn mardia_kurtosis_of_unit_rows() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0]);
        assert_abs_diff_eq!(mardia_kurtosis(&z), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn orthogonal_invariance_of_competitors() {
        let mut rng = substream(77, 0);
        let z = DMatrix::from_fn(15, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        // random rotation from QR of a Gaussian matrix
        let g = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = g.qr().q();
        let zr = &z * q.transpose();
        assert!((energy_statistic(&z).unwrap().value - energy_statistic(&zr).unwrap().value).abs() < 1e-8);
        assert!((mardia_skewness(&z) - mardia_skewness(&zr)).abs() < 1e-8);
        assert!((mardia_kurtosis(&z) - mardia_kurtosis(&zr)).abs() < 1e-8);
    }

    #[test]
    fn mardia_kurtosis_null_mean() {
        // MC mean of b_{2,p} for n = 50, p = 3 against the brute-force oracle
        // and the p(p+2)(n-1)/(n+1) approximation
        let reps = 2000;
        let vals = map_indexed(reps, |r| {
            let mut rng = substream(900, r as u64);
            let rows: Vec<Vec<f64>> = (0..50)
                .map(|_| (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
                .collect();
            let st = scaled_residuals(&SampleMatrix::from_rows(&rows).unwrap()).unwrap();
            mardia_kurtosis(&st.residuals)
        });
        let mean = vals.iter().sum::<f64>() / reps as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (reps as f64 - 1.0);
        let se = (var / reps as f64).sqrt();
        let approx_mean = 3.0 * 5.0 * 49.0 / 51.0;
        assert!((mean - approx_mean).abs() < 3.0 * se + 0.05, "mean {mean} vs {approx_mean} (se {se})");
    }
}
