//! Exchangeable copula samplers.
//!
//! Archimedean families use their frailty constructions (gamma, positive
//! stable, logarithmic-series, geometric); elliptical families draw an
//! equicorrelated Gaussian or t vector and push it through the marginal
//! CDF.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma as GammaDist, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal as NormalDist, StudentsT};

use crate::error::{Error, Result};
use crate::rng::substream;

/// An exchangeable copula family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CopulaSpec {
    /// theta > 0.
    Clayton(f64),
    /// theta >= 1.
    Gumbel(f64),
    /// theta > 0 (the exchangeable frailty construction needs complete
    /// monotonicity, which fails for negative theta beyond p = 2).
    Frank(f64),
    /// theta in [0, 1).
    Amh(f64),
    TCopula { rho: f64, df: f64 },
    Gaussian { rho: f64 },
}

impl CopulaSpec {
    pub fn validate(&self, p: usize) -> Result<()> {
        if p < 2 {
            return Err(Error::InvalidInput("copula needs p >= 2".into()));
        }
        use CopulaSpec::*;
        let ok = match *self {
            Clayton(theta) => theta > 0.0,
            Gumbel(theta) => theta >= 1.0,
            Frank(theta) => theta > 0.0,
            Amh(theta) => (0.0..1.0).contains(&theta),
            TCopula { rho, df } => (-1.0 / (p as f64 - 1.0) < rho && rho < 1.0) && df > 0.0,
            Gaussian { rho } => -1.0 / (p as f64 - 1.0) < rho && rho < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid copula parameters: {self:?}")))
        }
    }

    /// Draw one p-vector of dependent uniforms.
    pub fn sample_row(&self, p: usize, rng: &mut impl Rng) -> Vec<f64> {
        use CopulaSpec::*;
        match *self {
            Clayton(theta) => {
                let w = GammaDist::new(1.0 / theta, 1.0).unwrap().sample(rng);
                (0..p)
                    .map(|_| {
                        let e = exp1(rng);
                        (1.0 + e / w).powf(-1.0 / theta)
                    })
                    .collect()
            }
            Gumbel(theta) => {
                if theta == 1.0 {
                    return (0..p).map(|_| rng.gen()).collect();
                }
                let w = positive_stable(1.0 / theta, rng);
                (0..p)
                    .map(|_| {
                        let e = exp1(rng);
                        (-((e / w).powf(1.0 / theta))).exp()
                    })
                    .collect()
            }
            Frank(theta) => {
                let pr = 1.0 - (-theta).exp();
                let w = log_series(pr, rng) as f64;
                (0..p)
                    .map(|_| {
                        let e = exp1(rng);
                        let v = 1.0 - pr * (-e / w).exp();
                        -(v.ln()) / theta
                    })
                    .collect()
            }
            Amh(theta) => {
                if theta == 0.0 {
                    return (0..p).map(|_| rng.gen()).collect();
                }
                // geometric frailty on {1, 2, ...} with success prob 1 - theta
                let u: f64 = rng.gen();
                let w = (u.ln() / theta.ln()).floor() + 1.0;
                (0..p)
                    .map(|_| {
                        let e = exp1(rng);
                        (1.0 - theta) / ((e / w).exp() - theta)
                    })
                    .collect()
            }
            TCopula { rho, df } => {
                let z = equicorrelated_normal(p, rho, rng);
                let w = ChiSquared::new(df).unwrap().sample(rng);
                let scale = (df / w).sqrt();
                let tdist = StudentsT::new(0.0, 1.0, df).unwrap();
                z.iter().map(|&zi| tdist.cdf(zi * scale)).collect()
            }
            Gaussian { rho } => {
                let z = equicorrelated_normal(p, rho, rng);
                let std = NormalDist::standard();
                z.iter().map(|&zi| std.cdf(zi)).collect()
            }
        }
    }
}

fn exp1(rng: &mut impl Rng) -> f64 {
    -(1.0 - rng.gen::<f64>()).ln()
}

/// Equicorrelated normal vector via the closed-form symmetric square root
/// of `(1 - rho) I + rho J`.
fn equicorrelated_normal(p: usize, rho: f64, rng: &mut impl Rng) -> Vec<f64> {
    let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
    let a = (1.0 - rho).sqrt();
    let b = ((1.0 + (p as f64 - 1.0) * rho).sqrt() - a) / p as f64;
    let s: f64 = z.iter().sum();
    z.iter().map(|&zi| a * zi + b * s).collect()
}

/// Positive alpha-stable draw (Chambers-Mallows-Stuck), Laplace transform
/// `exp(-s^alpha)`, for `alpha` in (0, 1).
fn positive_stable(alpha: f64, rng: &mut impl Rng) -> f64 {
    let v = std::f64::consts::PI * rng.gen::<f64>();
    let w = exp1(rng);
    let a = (alpha * v).sin() / v.sin().powf(1.0 / alpha);
    let b = ((1.0 - alpha) * v).sin() / w;
    a * b.powf((1.0 - alpha) / alpha)
}

/// Logarithmic-series draw, `P(W = k) = -pr^k / (k ln(1 - pr))`, via
/// Kemp's second accelerated generator.
fn log_series(pr: f64, rng: &mut impl Rng) -> u64 {
    debug_assert!((0.0..1.0).contains(&pr));
    let u1: f64 = rng.gen();
    if u1 > pr {
        return 1;
    }
    let u2: f64 = rng.gen();
    let q = 1.0 - ((1.0 - pr).ln() * u2).exp();
    if u1 < q * q {
        let k = (1.0 + u1.ln() / q.ln()).floor();
        return k.max(1.0) as u64;
    }
    if u1 > q {
        1
    } else {
        2
    }
}

/// Draw `count` rows from the copula; each column is marginally U(0, 1).
/// Draw `index` uses substream `index` of `seed`, so generation may be
/// partitioned across threads without changing the output.
pub fn copula_sample(c: &CopulaSpec, p: usize, count: usize, seed: u64) -> Result<DMatrix<f64>> {
    c.validate(p)?;
    let rows = crate::exec::map_indexed(count, |i| {
        let mut rng = substream(seed, i as u64);
        c.sample_row(p, &mut rng)
    });
    Ok(DMatrix::from_fn(count, p, |i, j| rows[i][j]))
}
