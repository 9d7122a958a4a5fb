//! The power-study runner: Monte Carlo rejection proportions for the
//! calibrated tests and the competitor statistics over a common set of
//! replications.

use std::time::Instant;

use crate::calibration::{
    calibrate_null, calibrate_null_univariate, p_value, studentized_t, NullCalibration,
};
use crate::competitors::{energy_statistic, mardia_kurtosis, mardia_skewness};
use crate::distributions::{sample_stream, DistributionSpec};
use crate::ecgf::{stat_pair, stat_univariate, EvalPointSet};
use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::standardize::scaled_residuals;

/// Which test a power study evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestKind {
    /// Studentized max of the pair (the headline test).
    T,
    /// Off-diagonal component alone, upper-tailed at its own critical value.
    HOnly,
    /// Diagonal component alone.
    DOnly,
    /// Univariate statistic (p = 1 only).
    U,
    Energy,
    MardiaSkew,
    /// Two-sided: the null can fail through either kurtosis tail.
    MardiaKurt,
}

impl TestKind {
    pub fn label(self) -> &'static str {
        match self {
            TestKind::T => "t",
            TestKind::HOnly => "h",
            TestKind::DOnly => "d",
            TestKind::U => "u",
            TestKind::Energy => "energy",
            TestKind::MardiaSkew => "mardia_skew",
            TestKind::MardiaKurt => "mardia_kurt",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "t" => TestKind::T,
            "h" => TestKind::HOnly,
            "d" => TestKind::DOnly,
            "u" => TestKind::U,
            "energy" => TestKind::Energy,
            "mardia_skew" | "mskew" => TestKind::MardiaSkew,
            "mardia_kurt" | "mkurt" => TestKind::MardiaKurt,
            other => return Err(Error::InvalidInput(format!("unknown test `{other}`"))),
        })
    }
}

/// One power-study cell.
#[derive(Debug, Clone)]
pub struct PowerStudyConfig {
    pub spec: DistributionSpec,
    pub n: usize,
    pub replications: usize,
    pub alpha: f64,
    pub tests: Vec<TestKind>,
    pub master_seed: u64,
    /// Calibration cell: coordinate range, point count, null replications, seed.
    pub radius: f64,
    pub n_points: usize,
    pub cal_reps: usize,
    pub cal_seed: u64,
}

/// Null critical values for every statistic a study needs, all derived
/// from one shared pass of null replications.
#[derive(Debug, Clone)]
pub struct CalibratedTests {
    pub alpha: f64,
    /// Full calibration for T (multivariate) or U (univariate).
    pub cal: Option<NullCalibration>,
    pub h_crit: Option<f64>,
    pub d_crit: Option<f64>,
    pub energy_crit: Option<f64>,
    pub skew_crit: Option<f64>,
    /// Lower and upper alpha/2 kurtosis bounds.
    pub kurt_bounds: Option<(f64, f64)>,
}

fn upper_crit(mut values: Vec<f64>, alpha: f64) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let s = values.len();
    let rank = (((1.0 - alpha) * s as f64).ceil() as usize).clamp(1, s);
    values[rank - 1]
}

fn two_sided_bounds(mut values: Vec<f64>, alpha: f64) -> (f64, f64) {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let s = values.len() as f64;
    let lo = ((alpha / 2.0 * s).floor() as usize).min(values.len() - 1);
    let hi = ((((1.0 - alpha / 2.0) * s).ceil() as usize).max(1) - 1).min(values.len() - 1);
    (values[lo], values[hi])
}

/// Calibrate every requested statistic for the `(n, p)` cell in one pass.
///
/// The pair calibration reuses [`calibrate_null`], which draws the same
/// substream-per-replication null samples as the competitor loop below, so
/// the shared-seed statistics are computed on identical data.
pub fn calibrate_statistics(
    n: usize,
    p: usize,
    pts: &EvalPointSet,
    s_reps: usize,
    seed: u64,
    tests: &[TestKind],
    alpha: f64,
) -> Result<CalibratedTests> {
    let needs = |k: TestKind| tests.contains(&k);
    if needs(TestKind::U) && p != 1 {
        return Err(Error::InvalidInput("the univariate test needs p = 1".into()));
    }
    let mut out = CalibratedTests {
        alpha,
        cal: None,
        h_crit: None,
        d_crit: None,
        energy_crit: None,
        skew_crit: None,
        kurt_bounds: None,
    };

    if needs(TestKind::T) || needs(TestKind::HOnly) || needs(TestKind::DOnly) {
        out.cal = Some(calibrate_null(n, p, pts, s_reps, seed)?);
    } else if needs(TestKind::U) {
        out.cal = Some(calibrate_null_univariate(n, pts, s_reps, seed)?);
    }

    // statistics that need their own null samples share one replication loop
    let raw_needed = needs(TestKind::HOnly)
        || needs(TestKind::DOnly)
        || needs(TestKind::Energy)
        || needs(TestKind::MardiaSkew)
        || needs(TestKind::MardiaKurt);
    if raw_needed {
        let reps = map_indexed(s_reps, |s| {
            let mut rng = crate::rng::substream(seed, s as u64);
            loop {
                let x = crate::standardize::SampleMatrix::new(nalgebra::DMatrix::from_fn(
                    n,
                    p,
                    |_, _| rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal),
                ))
                .expect("finite draws");
                match scaled_residuals(&x) {
                    Ok(st) => {
                        let pair = if needs(TestKind::HOnly) || needs(TestKind::DOnly) {
                            stat_pair(&st.residuals, pts).ok().map(|pr| (pr.h_stat, pr.d_stat))
                        } else {
                            None
                        };
                        let energy = if needs(TestKind::Energy) {
                            Some(energy_statistic(&st.residuals).expect("nonempty").value)
                        } else {
                            None
                        };
                        let skew = needs(TestKind::MardiaSkew).then(|| mardia_skewness(&st.residuals));
                        let kurt = needs(TestKind::MardiaKurt).then(|| mardia_kurtosis(&st.residuals));
                        return (pair, energy, skew, kurt);
                    }
                    Err(Error::SingularCovariance) => continue,
                    Err(e) => panic!("unexpected calibration failure: {e}"),
                }
            }
        });
        if needs(TestKind::HOnly) {
            out.h_crit = Some(upper_crit(reps.iter().map(|r| r.0.unwrap().0).collect(), alpha));
        }
        if needs(TestKind::DOnly) {
            out.d_crit = Some(upper_crit(reps.iter().map(|r| r.0.unwrap().1).collect(), alpha));
        }
        if needs(TestKind::Energy) {
            out.energy_crit = Some(upper_crit(reps.iter().map(|r| r.1.unwrap()).collect(), alpha));
        }
        if needs(TestKind::MardiaSkew) {
            out.skew_crit = Some(upper_crit(reps.iter().map(|r| r.2.unwrap()).collect(), alpha));
        }
        if needs(TestKind::MardiaKurt) {
            out.kurt_bounds =
                Some(two_sided_bounds(reps.iter().map(|r| r.3.unwrap()).collect(), alpha));
        }
    }
    Ok(out)
}

/// Rejection proportion and binomial standard error for one test.
#[derive(Debug, Clone, Copy)]
pub struct RejectionRate {
    pub test: TestKind,
    pub proportion: f64,
    pub se: f64,
}

/// Result of one power-study cell.
#[derive(Debug, Clone)]
pub struct PowerStudyResult {
    pub rates: Vec<RejectionRate>,
    pub replications: usize,
    pub degenerate_count: usize,
    pub wall_seconds: f64,
}

/// Run one cell against precomputed calibrations.
pub fn power_study_with(cfg: &PowerStudyConfig, cals: &CalibratedTests) -> Result<PowerStudyResult> {
    if cfg.replications < 100 {
        return Err(Error::InvalidInput("power study needs >= 100 replications".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::InvalidInput("alpha must lie in (0, 1)".into()));
    }
    cfg.spec.validate()?;
    let start = Instant::now();

    let needs_pair = cfg
        .tests
        .iter()
        .any(|t| matches!(t, TestKind::T | TestKind::HOnly | TestKind::DOnly));
    if (needs_pair || cfg.tests.contains(&TestKind::U)) && cals.cal.is_none() {
        return Err(Error::InvalidInput("requested tests need a calibration".into()));
    }

    let per_rep = map_indexed(cfg.replications, |r| {
        let x = sample_stream(&cfg.spec, cfg.n, cfg.master_seed, r as u64).expect("validated spec");
        let mut rejected = vec![false; cfg.tests.len()];
        let st = match scaled_residuals(&x) {
            Ok(st) => st,
            Err(Error::SingularCovariance) => {
                // a degenerate sample rejects every test outright
                rejected.iter_mut().for_each(|b| *b = true);
                return (rejected, true);
            }
            Err(e) => panic!("unexpected standardization failure: {e}"),
        };
        let pair = if needs_pair {
            Some(stat_pair(&st.residuals, &cals.cal.as_ref().unwrap().point_set).expect("dims match"))
        } else {
            None
        };
        for (k, &test) in cfg.tests.iter().enumerate() {
            rejected[k] = match test {
                TestKind::T => {
                    let cal = cals.cal.as_ref().unwrap();
                    let t = studentized_t(pair.as_ref().unwrap(), cal).unwrap();
                    p_value(t, cal) <= cfg.alpha
                }
                TestKind::HOnly => pair.as_ref().unwrap().h_stat > cals.h_crit.unwrap(),
                TestKind::DOnly => pair.as_ref().unwrap().d_stat > cals.d_crit.unwrap(),
                TestKind::U => {
                    let cal = cals.cal.as_ref().unwrap();
                    let col: Vec<f64> = st.residuals.column(0).iter().cloned().collect();
                    let u = stat_univariate(&col, &cal.point_set).unwrap();
                    p_value(u, cal) <= cfg.alpha
                }
                TestKind::Energy => {
                    energy_statistic(&st.residuals).expect("nonempty").value > cals.energy_crit.unwrap()
                }
                TestKind::MardiaSkew => mardia_skewness(&st.residuals) > cals.skew_crit.unwrap(),
                TestKind::MardiaKurt => {
                    let (lo, hi) = cals.kurt_bounds.unwrap();
                    let b2 = mardia_kurtosis(&st.residuals);
                    b2 < lo || b2 > hi
                }
            };
        }
        (rejected, false)
    });

    let degenerate_count = per_rep.iter().filter(|(_, d)| *d).count();
    let reps_f = cfg.replications as f64;
    let rates = cfg
        .tests
        .iter()
        .enumerate()
        .map(|(k, &test)| {
            let hits = per_rep.iter().filter(|(r, _)| r[k]).count() as f64;
            let prop = hits / reps_f;
            RejectionRate { test, proportion: prop, se: (prop * (1.0 - prop) / reps_f).sqrt() }
        })
        .collect();

    Ok(PowerStudyResult {
        rates,
        replications: cfg.replications,
        degenerate_count,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Calibrate and run one cell.
pub fn power_study(cfg: &PowerStudyConfig) -> Result<PowerStudyResult> {
    let p = cfg.spec.dim();
    let pts = EvalPointSet::sample(p, cfg.n_points, cfg.radius, cfg.cal_seed)?;
    let cals =
        calibrate_statistics(cfg.n, p, &pts, cfg.cal_reps, cfg.cal_seed, &cfg.tests, cfg.alpha)?;
    power_study_with(cfg, &cals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::MarginalSpec;

    fn base_cfg(spec: DistributionSpec, tests: Vec<TestKind>) -> PowerStudyConfig {
        PowerStudyConfig {
            spec,
            n: 20,
            replications: 200,
            alpha: 0.05,
            tests,
            master_seed: 77,
            radius: 3.0,
            n_points: 40,
            cal_reps: 400,
            cal_seed: 177,
        }
    }

    #[test]
    fn null_size_is_near_alpha() {
        let spec = DistributionSpec::ProductMarginal {
            marginal: MarginalSpec::Normal { mu: 0.0, sigma: 1.0 },
            p: 2,
        };
        let res = power_study(&base_cfg(spec, vec![TestKind::T])).unwrap();
        let rate = res.rates[0];
        assert!(rate.proportion < 0.15, "size {}", rate.proportion);
        assert!((rate.se - (rate.proportion * (1.0 - rate.proportion) / 200.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn gross_alternative_has_high_power() {
        let spec = DistributionSpec::ProductMarginal { marginal: MarginalSpec::Exp { rate: 1.0 }, p: 2 };
        let res = power_study(&base_cfg(spec, vec![TestKind::T, TestKind::MardiaSkew])).unwrap();
        for r in &res.rates {
            assert!(r.proportion > 0.5, "{:?} power {}", r.test, r.proportion);
        }
    }

    #[test]
    fn univariate_study_runs() {
        let spec = DistributionSpec::ProductMarginal { marginal: MarginalSpec::Uniform { a: 0.0, b: 1.0 }, p: 1 };
        let mut cfg = base_cfg(spec, vec![TestKind::U]);
        cfg.n = 30;
        let res = power_study(&cfg).unwrap();
        assert!(res.rates[0].proportion > 0.1);
    }

    #[test]
    fn study_is_deterministic() {
        let spec = DistributionSpec::ProductMarginal { marginal: MarginalSpec::Laplace, p: 2 };
        let cfg = base_cfg(spec, vec![TestKind::T, TestKind::Energy]);
        let a = power_study(&cfg).unwrap();
        let b = power_study(&cfg).unwrap();
        for (x, y) in a.rates.iter().zip(&b.rates) {
            assert_eq!(x.proportion.to_bits(), y.proportion.to_bits());
        }
    }

    #[test]
    fn u_with_p_above_one_is_rejected() {
        let spec = DistributionSpec::ProductMarginal { marginal: MarginalSpec::Laplace, p: 2 };
        assert!(power_study(&base_cfg(spec, vec![TestKind::U])).is_err());
    }
}
