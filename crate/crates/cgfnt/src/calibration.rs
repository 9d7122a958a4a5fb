//! Monte Carlo calibration of the null distribution and the calibrated
//! test runners.
//!
//! Replications run on independent substreams keyed by the replication
//! index, and all reductions walk results in index order, so serial and
//! parallel calibrations are bit-identical.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::ecgf::{stat_pair, stat_univariate, EvalPointSet, PairStatistics};
use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::rng::substream;
use crate::standardize::{scaled_residuals, SampleMatrix};

/// Whether a calibration targets the multivariate pair statistic or the
/// univariate statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalKind {
    Multivariate,
    Univariate,
}

/// Simulated null distribution of the test statistic for one
/// `(n, p, point set, S, seed)` cell.
///
/// For the multivariate kind `null_t` holds studentized max statistics; for
/// the univariate kind it holds raw statistic values (a single component
/// needs no studentization) and the `mean_d`/`sd_d` slots carry its
/// moments.
#[derive(Debug, Clone)]
pub struct NullCalibration {
    pub n: usize,
    pub p: usize,
    pub point_set: EvalPointSet,
    pub s_reps: usize,
    pub mean_h: f64,
    pub sd_h: f64,
    pub mean_d: f64,
    pub sd_d: f64,
    /// Sorted ascending, length `s_reps`.
    pub null_t: Vec<f64>,
    pub kind: CalKind,
    pub seed: u64,
    /// Replications redrawn because of a singular simulated covariance
    /// (a probability-zero event under the null).
    pub redraw_count: usize,
}

fn standard_normal_sample(n: usize, p: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// One null replication: draw `n` iid `N(0, I_p)` rows from the given
/// substream, standardize, compute the pair. Redraws on a singular
/// covariance and reports how many redraws were needed.
fn null_pair_rep(n: usize, p: usize, pts: &EvalPointSet, mut rng: impl Rng) -> (PairStatistics, usize) {
    let mut redraws = 0;
    loop {
        let x = SampleMatrix::new(standard_normal_sample(n, p, &mut rng)).expect("finite draws");
        match scaled_residuals(&x) {
            Ok(st) => {
                let pair = stat_pair(&st.residuals, pts).expect("dimensions match");
                return (pair, redraws);
            }
            Err(Error::SingularCovariance) => redraws += 1,
            Err(e) => panic!("unexpected calibration failure: {e}"),
        }
    }
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone, s: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / s as f64;
    let ss = values.map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, (ss / (s as f64 - 1.0)).sqrt())
}

/// Calibrate the multivariate pair statistic under `N_p(0, I_p)`.
pub fn calibrate_null(
    n: usize,
    p: usize,
    pts: &EvalPointSet,
    s_reps: usize,
    seed: u64,
) -> Result<NullCalibration> {
    if n < p + 1 {
        return Err(Error::InvalidInput("calibration needs n >= p + 1".into()));
    }
    if s_reps < 100 {
        return Err(Error::InvalidInput("calibration needs S >= 100".into()));
    }
    if pts.dim() != p {
        return Err(Error::InvalidInput("point set dimension does not match p".into()));
    }
    let reps = map_indexed(s_reps, |s| null_pair_rep(n, p, pts, substream(seed, s as u64)));
    let redraw_count = reps.iter().map(|(_, r)| r).sum();
    let (mean_h, sd_h) = mean_sd(reps.iter().map(|(pr, _)| pr.h_stat), s_reps);
    let (mean_d, sd_d) = mean_sd(reps.iter().map(|(pr, _)| pr.d_stat), s_reps);
    if !(sd_h > 0.0) || !(sd_d > 0.0) {
        return Err(Error::CorruptCalibration("degenerate null standard deviation".into()));
    }
    let mut null_t: Vec<f64> = reps
        .iter()
        .map(|(pr, _)| ((pr.h_stat - mean_h) / sd_h).max((pr.d_stat - mean_d) / sd_d))
        .collect();
    null_t.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(NullCalibration {
        n,
        p,
        point_set: pts.clone(),
        s_reps,
        mean_h,
        sd_h,
        mean_d,
        sd_d,
        null_t,
        kind: CalKind::Multivariate,
        seed,
        redraw_count,
    })
}

/// Calibrate the univariate statistic under `N(0, 1)`.
pub fn calibrate_null_univariate(
    n: usize,
    pts: &EvalPointSet,
    s_reps: usize,
    seed: u64,
) -> Result<NullCalibration> {
    if n < 2 {
        return Err(Error::InvalidInput("calibration needs n >= 2".into()));
    }
    if s_reps < 100 {
        return Err(Error::InvalidInput("calibration needs S >= 100".into()));
    }
    if pts.dim() != 1 {
        return Err(Error::InvalidInput("univariate calibration needs a 1-d point set".into()));
    }
    let reps = map_indexed(s_reps, |s| {
        let mut rng = substream(seed, s as u64);
        let mut redraws = 0;
        loop {
            let x = SampleMatrix::new(standard_normal_sample(n, 1, &mut rng)).expect("finite draws");
            match scaled_residuals(&x) {
                Ok(st) => {
                    let col: Vec<f64> = st.residuals.column(0).iter().cloned().collect();
                    let u = stat_univariate(&col, pts).expect("1-d points");
                    return (u, redraws);
                }
                Err(Error::SingularCovariance) => redraws += 1,
                Err(e) => panic!("unexpected calibration failure: {e}"),
            }
        }
    });
    let redraw_count = reps.iter().map(|(_, r)| r).sum();
    let (mean_u, sd_u) = mean_sd(reps.iter().map(|(u, _)| *u), s_reps);
    if !(sd_u > 0.0) {
        return Err(Error::CorruptCalibration("degenerate null standard deviation".into()));
    }
    let mut null_t: Vec<f64> = reps.iter().map(|(u, _)| *u).collect();
    null_t.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(NullCalibration {
        n,
        p: 1,
        point_set: pts.clone(),
        s_reps,
        mean_h: 0.0,
        sd_h: 1.0,
        mean_d: mean_u,
        sd_d: sd_u,
        null_t,
        kind: CalKind::Univariate,
        seed,
        redraw_count,
    })
}

/// Studentized max statistic for an observed pair against this calibration.
pub fn studentized_t(pair: &PairStatistics, cal: &NullCalibration) -> Result<f64> {
    if cal.kind != CalKind::Multivariate {
        return Err(Error::CalibrationMismatch("univariate calibration used for pair statistic".into()));
    }
    if pair.n != cal.n || pair.point_set_seed != cal.point_set.seed() {
        return Err(Error::CalibrationMismatch(format!(
            "pair computed for (n = {}, point seed = {}) but calibration is (n = {}, point seed = {})",
            pair.n,
            pair.point_set_seed,
            cal.n,
            cal.point_set.seed()
        )));
    }
    if !(cal.sd_h > 0.0) || !(cal.sd_d > 0.0) {
        return Err(Error::CorruptCalibration("nonpositive null standard deviation".into()));
    }
    Ok(((pair.h_stat - cal.mean_h) / cal.sd_h).max((pair.d_stat - cal.mean_d) / cal.sd_d))
}

/// Empirical upper-`alpha` critical value: the `ceil((1 - alpha) S)`-th
/// order statistic of the stored null sample.
pub fn critical_value(cal: &NullCalibration, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput("alpha must lie in (0, 1)".into()));
    }
    let s = cal.null_t.len();
    let rank = (((1.0 - alpha) * s as f64).ceil() as usize).clamp(1, s);
    Ok(cal.null_t[rank - 1])
}

/// Add-one Monte Carlo p-value `(1 + #{null >= t_obs}) / (S + 1)`.
pub fn p_value(t_obs: f64, cal: &NullCalibration) -> f64 {
    // null_t is sorted ascending; count entries >= t_obs
    let idx = cal.null_t.partition_point(|&v| v < t_obs);
    let count = cal.null_t.len() - idx;
    (1 + count) as f64 / (cal.null_t.len() + 1) as f64
}

/// Components of the multivariate decision, reported alongside the result.
#[derive(Debug, Clone, Copy)]
pub struct TestComponents {
    pub h_stat: f64,
    pub d_stat: f64,
    pub studentized_h: f64,
    pub studentized_d: f64,
}

/// Outcome of a calibrated test.
#[derive(Debug, Clone)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub components: Option<TestComponents>,
    /// True when the sample covariance was singular; the null is rejected
    /// outright with p-value 0.
    pub degenerate_covariance: bool,
}

/// Run the calibrated multivariate test on a sample.
pub fn run_test(x: &SampleMatrix, cal: &NullCalibration, alpha: f64) -> Result<TestResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput("alpha must lie in (0, 1)".into()));
    }
    if cal.kind != CalKind::Multivariate {
        return Err(Error::CalibrationMismatch("univariate calibration passed to run_test".into()));
    }
    if x.n() != cal.n || x.p() != cal.p {
        return Err(Error::InvalidInput(format!(
            "sample is {}x{} but calibration expects {}x{}",
            x.n(),
            x.p(),
            cal.n,
            cal.p
        )));
    }
    let st = match scaled_residuals(x) {
        Ok(st) => st,
        Err(Error::SingularCovariance) => {
            return Ok(TestResult {
                statistic: f64::INFINITY,
                p_value: 0.0,
                reject: true,
                alpha,
                components: None,
                degenerate_covariance: true,
            })
        }
        Err(e) => return Err(e),
    };
    let pair = stat_pair(&st.residuals, &cal.point_set)?;
    let t = studentized_t(&pair, cal)?;
    let p = p_value(t, cal);
    Ok(TestResult {
        statistic: t,
        p_value: p,
        reject: p <= alpha,
        alpha,
        components: Some(TestComponents {
            h_stat: pair.h_stat,
            d_stat: pair.d_stat,
            studentized_h: (pair.h_stat - cal.mean_h) / cal.sd_h,
            studentized_d: (pair.d_stat - cal.mean_d) / cal.sd_d,
        }),
        degenerate_covariance: false,
    })
}

/// Run the calibrated univariate test on a sample.
pub fn run_test_univariate(x: &[f64], cal: &NullCalibration, alpha: f64) -> Result<TestResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput("alpha must lie in (0, 1)".into()));
    }
    if cal.kind != CalKind::Univariate {
        return Err(Error::CalibrationMismatch("multivariate calibration passed to run_test_univariate".into()));
    }
    if x.len() != cal.n {
        return Err(Error::InvalidInput(format!(
            "sample has n = {} but calibration expects n = {}",
            x.len(),
            cal.n
        )));
    }
    let sample = SampleMatrix::from_column(x)?;
    let st = match scaled_residuals(&sample) {
        Ok(st) => st,
        Err(Error::SingularCovariance) => {
            return Ok(TestResult {
                statistic: f64::INFINITY,
                p_value: 0.0,
                reject: true,
                alpha,
                components: None,
                degenerate_covariance: true,
            })
        }
        Err(e) => return Err(e),
    };
    let col: Vec<f64> = st.residuals.column(0).iter().cloned().collect();
    let u = stat_univariate(&col, &cal.point_set)?;
    let p = p_value(u, cal);
    Ok(TestResult {
        statistic: u,
        p_value: p,
        reject: p <= alpha,
        alpha,
        components: None,
        degenerate_covariance: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_cal() -> NullCalibration {
        let pts = EvalPointSet::sample(2, 20, 3.0, 1).unwrap();
        calibrate_null(12, 2, &pts, 400, 1).unwrap()
    }

    #[test]
    fn calibration_invariants() {
        let cal = small_cal();
        assert!(cal.sd_h > 0.0 && cal.sd_d > 0.0);
        assert!(cal.null_t.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(cal.null_t.len(), 400);
        assert_eq!(cal.redraw_count, 0);
    }

    #[test]
    fn calibration_is_deterministic() {
        let pts = EvalPointSet::sample(2, 10, 3.0, 2).unwrap();
        let a = calibrate_null(10, 2, &pts, 200, 5).unwrap();
        let b = calibrate_null(10, 2, &pts, 200, 5).unwrap();
        assert_eq!(a.null_t, b.null_t);
        assert_eq!(a.mean_h.to_bits(), b.mean_h.to_bits());
        assert_eq!(a.sd_d.to_bits(), b.sd_d.to_bits());
    }

    #[test]
    fn critical_value_order_statistics() {
        let cal = small_cal();
        let s = cal.null_t.len();
        // alpha below 1/S -> ceil((1 - alpha) S) = S -> maximum
        assert_eq!(critical_value(&cal, 0.5 / s as f64).unwrap(), *cal.null_t.last().unwrap());
        // alpha = 1/S -> the (S-1)-th order statistic
        assert_eq!(critical_value(&cal, 1.0 / s as f64).unwrap(), cal.null_t[s - 2]);
        // alpha = 0.5 -> ceil(0.5 S) = S/2-th order statistic
        assert_eq!(critical_value(&cal, 0.5).unwrap(), cal.null_t[s / 2 - 1]);
        assert!(critical_value(&cal, 0.0).is_err());
        assert!(critical_value(&cal, 1.0).is_err());
    }

    #[test]
    fn critical_value_rank_at_5_percent() {
        let mut cal = small_cal();
        cal.null_t = (1..=10_000).map(|i| i as f64).collect();
        cal.s_reps = 10_000;
        assert_eq!(critical_value(&cal, 0.05).unwrap(), 9500.0);
    }

    #[test]
    fn fraction_above_critical_value() {
        let cal = small_cal();
        let cv = critical_value(&cal, 0.05).unwrap();
        let above = cal.null_t.iter().filter(|&&v| v > cv).count() as f64 / cal.null_t.len() as f64;
        assert!((above - 0.05).abs() <= 1.0 / cal.null_t.len() as f64 + 0.05 / cal.null_t.len() as f64 + 1e-12);
    }

    #[test]
    fn p_value_extremes_and_monotonicity() {
        let cal = small_cal();
        let s = cal.null_t.len() as f64;
        let max = *cal.null_t.last().unwrap();
        let min = *cal.null_t.first().unwrap();
        assert_abs_diff_eq!(p_value(max + 1.0, &cal), 1.0 / (s + 1.0));
        assert_abs_diff_eq!(p_value(min, &cal), 1.0);
        let med = cal.null_t[cal.null_t.len() / 2];
        assert!((p_value(med, &cal) - 0.5).abs() < 1.0 / s + 1e-12);
        let mut prev = f64::INFINITY;
        for t in [-10.0, 0.0, 1.0, 2.0, 5.0] {
            let p = p_value(t, &cal);
            assert!(p <= prev);
            prev = p;
        }
    }

    #[test]
    fn studentization_at_calibration_means() {
        let cal = small_cal();
        let pair = PairStatistics {
            h_stat: cal.mean_h,
            d_stat: cal.mean_d,
            n: cal.n,
            point_set_seed: cal.point_set.seed(),
        };
        assert_abs_diff_eq!(studentized_t(&pair, &cal).unwrap(), 0.0);
        let pair2 = PairStatistics {
            h_stat: cal.mean_h + 2.0 * cal.sd_h,
            d_stat: cal.mean_d,
            n: cal.n,
            point_set_seed: cal.point_set.seed(),
        };
        assert_abs_diff_eq!(studentized_t(&pair2, &cal).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn studentization_rejects_mismatched_calibration() {
        let cal = small_cal();
        let pair = PairStatistics { h_stat: 1.0, d_stat: 1.0, n: cal.n + 1, point_set_seed: cal.point_set.seed() };
        assert!(matches!(studentized_t(&pair, &cal), Err(Error::CalibrationMismatch(_))));
    }

    #[test]
    fn degenerate_sample_is_rejected_outright() {
        let cal = small_cal();
        // duplicated column -> rank-deficient covariance
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, i as f64]).collect();
        let x = SampleMatrix::from_rows(&rows).unwrap();
        let res = run_test(&x, &cal, 0.05).unwrap();
        assert!(res.degenerate_covariance);
        assert!(res.reject);
        assert_eq!(res.p_value, 0.0);
    }

    #[test]
    fn univariate_constant_sample_is_rejected() {
        let pts = EvalPointSet::sample(1, 20, 3.0, 3).unwrap();
        let cal = calibrate_null_univariate(10, &pts, 200, 7).unwrap();
        let res = run_test_univariate(&[2.0; 10], &cal, 0.05).unwrap();
        assert!(res.degenerate_covariance && res.reject);
    }

    #[test]
    fn translation_invariance_of_t() {
        let cal = small_cal();
        let mut rng = substream(99, 0);
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0] + 4.0, r[1] - 2.0]).collect();
        let a = run_test(&SampleMatrix::from_rows(&rows).unwrap(), &cal, 0.05).unwrap();
        let b = run_test(&SampleMatrix::from_rows(&shifted).unwrap(), &cal, 0.05).unwrap();
        assert_abs_diff_eq!(a.statistic, b.statistic, epsilon = 1e-9 * a.statistic.abs().max(1.0));
        assert_eq!(a.reject, b.reject);
    }
}
