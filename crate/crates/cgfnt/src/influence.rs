//! First-order influence functions of the CGF-Hessian statistic and the
//! numerical checks that back the asymptotic theory: Monte Carlo mean-zero
//! verification, the linearization residual of `sqrt(n)(H_L(t) - I)`, and
//! the large-n limit of the univariate statistic.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::distributions::MarginalSpec;
use crate::ecgf::{ecgf_eval, stat_univariate, EvalPointSet};
use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::rng::substream;
use crate::standardize::{scaled_residuals, SampleMatrix};

/// All six influence objects evaluated at one `(x, t)` pair.
#[derive(Debug, Clone)]
pub struct InfluenceEval {
    pub f0: f64,
    pub f1: DVector<f64>,
    pub f2: DMatrix<f64>,
    pub g1: DMatrix<f64>,
    pub g2: DMatrix<f64>,
    pub h: DMatrix<f64>,
}

/// `Q^h = d(t t')/dt_h`: zero except for row and column `h`, which hold
/// `t`, and the `(h, h)` entry, which is `2 t_h`.
pub fn q_matrix(t: &DVector<f64>, h: usize) -> DMatrix<f64> {
    let p = t.len();
    let mut q = DMatrix::zeros(p, p);
    for j in 0..p {
        q[(h, j)] = t[j];
        q[(j, h)] = t[j];
    }
    q[(h, h)] = 2.0 * t[h];
    q
}

/// Evaluate `f0, f1, f2, g1, g2, h` at `(x, t)`.
///
/// `h` is normalized as `exp(-|t|^2) (g1 + g2)`: dividing the first-order
/// expansion of `M H_M - (grad M)(grad M)' - M^2 I` by the squared
/// population MGF `exp(|t|^2)` is what turns it into an expansion of
/// `H_Lambda(t) - I`, and only this normalization makes the linearization
/// residual vanish numerically.
pub fn influence_eval(x: &DVector<f64>, t: &DVector<f64>) -> InfluenceEval {
    let p = x.len();
    assert_eq!(p, t.len(), "dimension mismatch");
    let eye = DMatrix::identity(p, p);
    let norm_sq = t.norm_squared();
    let pref = (norm_sq / 2.0).exp();
    let tx = t.dot(x);
    let xxt_i = x * x.transpose() - &eye;
    let ttt = t * t.transpose();
    let i_ttt = &eye + &ttt;

    let f0 = pref * (-tx - tx * tx / 2.0 + norm_sq / 2.0);
    let f1 = (&i_ttt * x + (2.0 * &eye + &ttt) * &xxt_i * t / 2.0) * -pref;

    // double sum: sum_h (Q^h + t_h(t t' + I)) * sum_k t_k (x_h x_k - 1(h=k))
    //           = sum_h (Q^h + t_h(t t' + I)) * (x_h t'x - t_h)
    let mut dsum = DMatrix::zeros(p, p);
    for hh in 0..p {
        let c = x[hh] * tx - t[hh];
        if c == 0.0 {
            continue;
        }
        dsum += (q_matrix(t, hh) + t[hh] * &i_ttt) * c;
    }
    let f2 = pref
        * (-(&xxt_i * &i_ttt) / 2.0 - x * t.transpose() - (&i_ttt * &xxt_i) / 2.0
            - t * x.transpose()
            - &dsum / 2.0
            - &i_ttt * tx);

    let g1 = (pref * tx.exp()) * (&xxt_i + &ttt - t * x.transpose() - x * t.transpose());
    let g2 = pref
        * (&f2 + f0 * &i_ttt - t * f1.transpose() - &f1 * t.transpose() - 2.0 * f0 * &eye);
    let h = (-norm_sq).exp() * (&g1 + &g2);

    InfluenceEval { f0, f1, f2, g1, g2, h }
}

/// Which influence object a Monte Carlo check targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfluenceFn {
    F0,
    F1,
    F2,
    G1,
    G2,
    H,
}

fn as_matrix(e: &InfluenceEval, which: InfluenceFn) -> DMatrix<f64> {
    match which {
        InfluenceFn::F0 => DMatrix::from_element(1, 1, e.f0),
        InfluenceFn::F1 => DMatrix::from_column_slice(e.f1.len(), 1, e.f1.as_slice()),
        InfluenceFn::F2 => e.f2.clone(),
        InfluenceFn::G1 => e.g1.clone(),
        InfluenceFn::G2 => e.g2.clone(),
        InfluenceFn::H => e.h.clone(),
    }
}

/// Componentwise Monte Carlo mean and standard error of one influence
/// object over `m` iid `N(0, I_p)` draws.
pub fn mean_zero_check(
    which: InfluenceFn,
    t: &DVector<f64>,
    m: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if m < 10_000 {
        return Err(Error::InvalidInput("mean-zero check needs m >= 10^4".into()));
    }
    let p = t.len();
    const CHUNK: usize = 4096;
    let chunks = map_indexed(m.div_ceil(CHUNK), |c| {
        let mut rng = substream(seed, c as u64);
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(m);
        let mut sum: Option<DMatrix<f64>> = None;
        let mut sum_sq: Option<DMatrix<f64>> = None;
        for _ in lo..hi {
            let x = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let v = as_matrix(&influence_eval(&x, t), which);
            let v2 = v.component_mul(&v);
            sum = Some(match sum {
                Some(s) => s + &v,
                None => v,
            });
            sum_sq = Some(match sum_sq {
                Some(s) => s + &v2,
                None => v2,
            });
        }
        (sum.unwrap(), sum_sq.unwrap())
    });
    let mut total = chunks[0].0.clone_owned() * 0.0;
    let mut total_sq = total.clone();
    for (s, s2) in &chunks {
        total += s;
        total_sq += s2;
    }
    let mf = m as f64;
    let mean = &total / mf;
    let var = (&total_sq / mf - mean.component_mul(&mean)) / (mf - 1.0) * mf;
    let se = var.map(|v| (v.max(0.0) / mf).sqrt());
    Ok((mean, se))
}

/// Per-n medians of the linearization residual and the fitted log-log rate.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub n_grid: Vec<usize>,
    pub residual_norms: Vec<f64>,
    pub slope: f64,
}

/// Median over `reps` replications, per `n`, of the Frobenius norm
/// `| sqrt(n)(H_L(t) - I) - n^{-1/2} sum_i h(X_i; t) |` on `N(0, I_p)`
/// data, with `H_L` evaluated on the scaled residuals.
pub fn linearization_residual(
    n_grid: &[usize],
    t: &DVector<f64>,
    reps: usize,
    seed: u64,
) -> Result<ConvergenceReport> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("n grid must be strictly ascending".into()));
    }
    if reps == 0 {
        return Err(Error::InvalidInput("reps must be positive".into()));
    }
    let p = t.len();
    let mut residual_norms = Vec::with_capacity(n_grid.len());
    for (gi, &n) in n_grid.iter().enumerate() {
        let mut vals = map_indexed(reps, |r| {
            let mut rng = substream(seed, ((gi as u64) << 32) | r as u64);
            let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let st = scaled_residuals(&SampleMatrix::new(x.clone()).unwrap()).unwrap();
            let hess = ecgf_eval(&st.residuals, t).hess_lambda;
            let nf = n as f64;
            let mut lin = DMatrix::zeros(p, p);
            for i in 0..n {
                let xi = x.row(i).transpose();
                lin += influence_eval(&xi, t).h;
            }
            let diff = nf.sqrt() * (hess - DMatrix::identity(p, p)) - lin / nf.sqrt();
            diff.norm()
        });
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = if reps % 2 == 1 {
            vals[reps / 2]
        } else {
            (vals[reps / 2 - 1] + vals[reps / 2]) / 2.0
        };
        residual_norms.push(med);
    }
    // least-squares slope of ln(median) on ln(n)
    let k = n_grid.len() as f64;
    let xs: Vec<f64> = n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = residual_norms.iter().map(|&v| v.max(1e-300).ln()).collect();
    let xm = xs.iter().sum::<f64>() / k;
    let ym = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Ok(ConvergenceReport { n_grid: n_grid.to_vec(), residual_norms, slope })
}

/// Second derivative of the standardized cumulant generating function for
/// the marginals with a closed form: normal (identically 1) and
/// exponential (`(1 - t)^{-2}` for `t < 1` after standardization).
pub fn standardized_cgf_second(marginal: &MarginalSpec, t: f64) -> Result<f64> {
    match marginal {
        MarginalSpec::Normal { .. } => Ok(1.0),
        MarginalSpec::Exp { rate } => {
            if !(*rate > 0.0) {
                return Err(Error::InvalidInput("exponential rate must be positive".into()));
            }
            // standardized Exp has MGF domain t < 1 regardless of the rate
            if t >= 1.0 {
                return Err(Error::InvalidInput(format!(
                    "point {t} outside the standardized-exponential MGF domain (t < 1)"
                )));
            }
            Ok((1.0 - t).powi(-2))
        }
        other => Err(Error::InvalidInput(format!(
            "no closed-form standardized CGF for {other:?}"
        ))),
    }
}

/// Compare the per-n value of the univariate statistic divided by `n`
/// against its analytic limit `sum_l (L''(t_l) - 1)^2`.
pub fn consistency_limit_check(
    marginal: &MarginalSpec,
    pts: &EvalPointSet,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if pts.dim() != 1 {
        return Err(Error::InvalidInput("consistency check is univariate".into()));
    }
    let mut analytic = 0.0;
    for t in pts.points() {
        let dev = standardized_cgf_second(marginal, t[0])? - 1.0;
        analytic += dev * dev;
    }
    let mut rng = substream(seed, 0);
    let col: Vec<f64> = (0..n).map(|_| marginal.sample_one(&mut rng)).collect();
    let st = scaled_residuals(&SampleMatrix::from_column(&col)?)?;
    let z: Vec<f64> = st.residuals.column(0).iter().cloned().collect();
    let empirical = stat_univariate(&z, pts)? / n as f64;
    Ok((empirical, analytic))
}
