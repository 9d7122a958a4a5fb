//! The `verify` command: numerical checks of the asymptotic theory, run
//! at desk scale and emitted as a JSON report.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::distributions::{sample, DistributionSpec, MarginalSpec};
use crate::ecgf::{stat_pair, EvalPointSet};
use crate::influence::{
    consistency_limit_check, linearization_residual, mean_zero_check, InfluenceFn,
};
use crate::rng::substream;
use crate::standardize::scaled_residuals;

#[derive(Debug, Clone, Serialize)]
pub struct MeanZeroRecord {
    pub function: String,
    pub p: usize,
    pub t: Vec<f64>,
    pub max_abs_mean_over_se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearizationRecord {
    pub n_grid: Vec<usize>,
    pub median_residuals: Vec<f64>,
    pub slope: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyRecord {
    pub marginal: String,
    pub n: usize,
    pub empirical: f64,
    pub analytic: f64,
    pub relative_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecreaseRecord {
    pub n_grid: Vec<usize>,
    pub h_over_n: Vec<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub quick: bool,
    pub mean_zero: Vec<MeanZeroRecord>,
    pub linearization: LinearizationRecord,
    pub consistency: Vec<ConsistencyRecord>,
    pub multivariate_decrease: DecreaseRecord,
    pub passed: bool,
}

const FUNCTIONS: [(InfluenceFn, &str); 6] = [
    (InfluenceFn::F0, "f0"),
    (InfluenceFn::F1, "f1"),
    (InfluenceFn::F2, "f2"),
    (InfluenceFn::G1, "g1"),
    (InfluenceFn::G2, "g2"),
    (InfluenceFn::H, "h"),
];

fn random_t(p: usize, rng: &mut impl Rng) -> DVector<f64> {
    // uniform direction, radius capped at 1 to keep MC variance tame
    let mut t = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let r: f64 = rng.gen::<f64>().powf(1.0 / p as f64);
    t *= r / t.norm();
    t
}

fn mean_zero_suite(quick: bool, seed: u64) -> Vec<MeanZeroRecord> {
    let m = if quick { 20_000 } else { 200_000 };
    let t_per_p = if quick { 2 } else { 5 };
    let mut out = Vec::new();
    let mut rng = substream(seed, 0);
    for p in 1..=3usize {
        for k in 0..t_per_p {
            let t = random_t(p, &mut rng);
            for (which, name) in FUNCTIONS {
                let (mean, se) =
                    mean_zero_check(which, &t, m, seed ^ (p as u64) << 16 ^ (k as u64) << 8)
                        .expect("m above the floor");
                let mut worst: f64 = 0.0;
                for i in 0..mean.nrows() {
                    for j in 0..mean.ncols() {
                        let s = se[(i, j)].max(1e-300);
                        worst = worst.max(mean[(i, j)].abs() / s);
                    }
                }
                out.push(MeanZeroRecord {
                    function: name.to_string(),
                    p,
                    t: t.iter().cloned().collect(),
                    max_abs_mean_over_se: worst,
                    pass: worst <= 4.0,
                });
            }
        }
    }
    out
}

fn linearization_suite(quick: bool, seed: u64) -> LinearizationRecord {
    let grid: &[usize] = if quick { &[100, 1000] } else { &[100, 1000, 10_000] };
    let reps = if quick { 20 } else { 50 };
    let t = DVector::from_vec(vec![0.3, 0.4]); // |t| = 0.5
    let rep = linearization_residual(grid, &t, reps, seed).expect("valid grid");
    let decreasing = rep.residual_norms.windows(2).all(|w| w[1] < w[0]);
    let pass = decreasing && rep.slope <= -0.25;
    LinearizationRecord {
        n_grid: rep.n_grid,
        median_residuals: rep.residual_norms,
        slope: rep.slope,
        pass,
    }
}

fn consistency_suite(quick: bool, seed: u64) -> Vec<ConsistencyRecord> {
    let pts = EvalPointSet::sample(1, 20, 0.4, seed ^ 0xC0).expect("valid");
    let mut out = Vec::new();

    let n_normal = if quick { 20_000 } else { 100_000 };
    let (emp, _) = consistency_limit_check(
        &MarginalSpec::Normal { mu: 0.0, sigma: 1.0 },
        &pts,
        n_normal,
        seed ^ 1,
    )
    .expect("valid points");
    out.push(ConsistencyRecord {
        marginal: "normal".into(),
        n: n_normal,
        empirical: emp,
        analytic: 0.0,
        relative_error: emp,
        pass: emp < 0.01,
    });

    let exp = MarginalSpec::Exp { rate: 1.0 };
    let mut prev_err = f64::INFINITY;
    for (i, &n) in [10_000usize, if quick { 50_000 } else { 100_000 }].iter().enumerate() {
        let (emp, ana) = consistency_limit_check(&exp, &pts, n, seed ^ 2).expect("valid points");
        let rel = (emp - ana).abs() / ana;
        // the final (largest-n) run must land within 5%; the shrink
        // relative to the smaller n is only enforced in the full run,
        // where the 10x gap leaves room above the MC noise
        let pass = if i == 0 {
            true
        } else if quick {
            rel < 0.05
        } else {
            rel < 0.05 && rel < prev_err
        };
        prev_err = rel;
        out.push(ConsistencyRecord {
            marginal: "exp".into(),
            n,
            empirical: emp,
            analytic: ana,
            relative_error: rel,
            pass,
        });
    }
    out
}

fn decrease_suite(quick: bool, seed: u64) -> DecreaseRecord {
    // normal marginals through a Gaussian copula: an exact multivariate
    // normal, so the off-diagonal statistic over n must vanish
    let spec = DistributionSpec::CopulaLaw {
        copula: crate::distributions::CopulaSpec::Gaussian { rho: 0.5 },
        marginals: vec![MarginalSpec::Normal { mu: 0.0, sigma: 1.0 }; 3],
    };
    let grid: Vec<usize> = if quick { vec![1000, 10_000] } else { vec![1000, 10_000, 100_000] };
    let pts = EvalPointSet::sample(3, 25, 1.0, seed ^ 0xD0).expect("valid");
    let mut h_over_n = Vec::new();
    for &n in &grid {
        let x = sample(&spec, n, seed ^ n as u64).expect("valid spec");
        let st = scaled_residuals(&x).expect("full rank");
        let pair = stat_pair(&st.residuals, &pts).expect("dims match");
        h_over_n.push(pair.h_stat / n as f64);
    }
    let pass = h_over_n.windows(2).all(|w| w[1] < w[0]);
    DecreaseRecord { n_grid: grid, h_over_n, pass }
}

/// Run the verification suites and collect a report.
pub fn run_verify(quick: bool, seed: u64) -> VerifyReport {
    let mean_zero = mean_zero_suite(quick, seed);
    let linearization = linearization_suite(quick, seed.wrapping_add(1));
    let consistency = consistency_suite(quick, seed.wrapping_add(2));
    let multivariate_decrease = decrease_suite(quick, seed.wrapping_add(3));
    let passed = mean_zero.iter().all(|r| r.pass)
        && linearization.pass
        && consistency.iter().all(|r| r.pass)
        && multivariate_decrease.pass;
    VerifyReport { quick, mean_zero, linearization, consistency, multivariate_decrease, passed }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes_and_serializes() {
        let report = run_verify(true, 2024);
        assert!(report.passed, "{}", serde_json::to_string_pretty(&report).unwrap());
        let json = serde_json::to_value(&report).unwrap();
        assert!(json.get("mean_zero").unwrap().as_array().unwrap().len() >= 12);
        assert!(json.get("passed").unwrap().as_bool().unwrap());
    }
}
