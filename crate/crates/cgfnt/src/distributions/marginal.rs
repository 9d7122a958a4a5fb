//! Univariate marginal samplers and quantile functions.

use rand::Rng;
use rand_distr::{
    Beta as BetaDist, Cauchy as CauchyDist, ChiSquared, Distribution, Gamma as GammaDist,
    LogNormal as LogNormalDist, StandardNormal, StudentT as StudentTDist, Weibull as WeibullDist,
};
use statrs::distribution::{ContinuousCDF, Normal as NormalDist};

use crate::error::{Error, Result};

/// A univariate marginal distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarginalSpec {
    Uniform { a: f64, b: f64 },
    Beta { alpha: f64, beta: f64 },
    /// Generalized lambda distribution by its percentile function.
    Gld { l1: f64, l2: f64, l3: f64, l4: f64 },
    /// Normal(mu, sigma) truncated to the interval (a, b).
    TruncNormal { a: f64, b: f64, mu: f64, sigma: f64 },
    Laplace,
    Logistic,
    Cauchy,
    StudentT { df: f64 },
    Exp { rate: f64 },
    LogNormal { mu: f64, sigma: f64 },
    /// Shape-rate parameterization.
    Gamma { shape: f64, rate: f64 },
    /// Shape-scale parameterization.
    Weibull { shape: f64, scale: f64 },
    /// Scale-shape parameterization, support `[scale, inf)`.
    Pareto { scale: f64, shape: f64 },
    ChiSq { df: f64 },
    /// Scale-contaminated normal: weight from N(0, b^2), rest from N(0, 1).
    ScConN { weight: f64, b: f64 },
    /// Location-contaminated normal: weight from N(a, 1), rest from N(0, 1).
    LoConN { weight: f64, a: f64 },
    Normal { mu: f64, sigma: f64 },
}

impl MarginalSpec {
    pub fn validate(&self) -> Result<()> {
        use MarginalSpec::*;
        let ok = match *self {
            Uniform { a, b } => a < b,
            Beta { alpha, beta } => alpha > 0.0 && beta > 0.0,
            Gld { l2, .. } => l2 != 0.0,
            TruncNormal { a, b, sigma, .. } => a < b && sigma > 0.0,
            Laplace | Logistic | Cauchy => true,
            StudentT { df } => df > 0.0,
            Exp { rate } => rate > 0.0,
            LogNormal { sigma, .. } => sigma > 0.0,
            Gamma { shape, rate } => shape > 0.0 && rate > 0.0,
            Weibull { shape, scale } => shape > 0.0 && scale > 0.0,
            Pareto { scale, shape } => scale > 0.0 && shape > 0.0,
            ChiSq { df } => df > 0.0,
            ScConN { weight, b } => (0.0..=1.0).contains(&weight) && b > 0.0,
            LoConN { weight, .. } => (0.0..=1.0).contains(&weight),
            Normal { sigma, .. } => sigma > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid marginal parameters: {self:?}")))
        }
    }

    /// Draw one value. Inverse-transform families consume exactly one
    /// uniform; rejection-based families consume a variable number of draws.
    pub fn sample_one(&self, rng: &mut impl Rng) -> f64 {
        use MarginalSpec::*;
        match *self {
            Uniform { a, b } => a + (b - a) * rng.gen::<f64>(),
            Beta { alpha, beta } => BetaDist::new(alpha, beta).unwrap().sample(rng),
            Gld { l1, l2, l3, l4 } => gld_quantile([l1, l2, l3, l4], rng.gen()).unwrap(),
            TruncNormal { a, b, mu, sigma } => {
                trunc_normal_quantile(a, b, mu, sigma, rng.gen()).unwrap()
            }
            Laplace => {
                let u: f64 = rng.gen();
                if u < 0.5 {
                    (2.0 * u).ln()
                } else {
                    -(2.0 * (1.0 - u)).ln()
                }
            }
            Logistic => {
                let u: f64 = rng.gen();
                (u / (1.0 - u)).ln()
            }
            Cauchy => CauchyDist::new(0.0, 1.0).unwrap().sample(rng),
            StudentT { df } => StudentTDist::new(df).unwrap().sample(rng),
            Exp { rate } => -(1.0 - rng.gen::<f64>()).ln() / rate,
            LogNormal { mu, sigma } => LogNormalDist::new(mu, sigma).unwrap().sample(rng),
            Gamma { shape, rate } => GammaDist::new(shape, 1.0 / rate).unwrap().sample(rng),
            Weibull { shape, scale } => WeibullDist::new(scale, shape).unwrap().sample(rng),
            Pareto { scale, shape } => scale * (1.0 - rng.gen::<f64>()).powf(-1.0 / shape),
            ChiSq { df } => ChiSquared::new(df).unwrap().sample(rng),
            ScConN { weight, b } => {
                let z: f64 = rng.sample(StandardNormal);
                if rng.gen::<f64>() < weight {
                    b * z
                } else {
                    z
                }
            }
            LoConN { weight, a } => {
                let z: f64 = rng.sample(StandardNormal);
                if rng.gen::<f64>() < weight {
                    z + a
                } else {
                    z
                }
            }
            Normal { mu, sigma } => mu + sigma * rng.sample::<f64, _>(StandardNormal),
        }
    }

    /// Quantile function, where one is available in closed form (used to
    /// push copula uniforms through marginals).
    pub fn quantile(&self, u: f64) -> Result<f64> {
        use MarginalSpec::*;
        match *self {
            Uniform { a, b } => Ok(a + (b - a) * u),
            Gld { l1, l2, l3, l4 } => gld_quantile([l1, l2, l3, l4], u),
            TruncNormal { a, b, mu, sigma } => trunc_normal_quantile(a, b, mu, sigma, u),
            Laplace => Ok(if u < 0.5 { (2.0 * u).ln() } else { -(2.0 * (1.0 - u)).ln() }),
            Logistic => Ok((u / (1.0 - u)).ln()),
            Cauchy => Ok((std::f64::consts::PI * (u - 0.5)).tan()),
            Exp { rate } => Ok(-(1.0 - u).ln() / rate),
            Pareto { scale, shape } => Ok(scale * (1.0 - u).powf(-1.0 / shape)),
            Normal { mu, sigma } => {
                Ok(mu + sigma * NormalDist::standard().inverse_cdf(u.clamp(f64::MIN_POSITIVE, 1.0 - 1e-16)))
            }
            LogNormal { mu, sigma } => {
                Ok((mu + sigma * NormalDist::standard().inverse_cdf(u.clamp(f64::MIN_POSITIVE, 1.0 - 1e-16))).exp())
            }
            StudentT { df } => {
                let d = statrs::distribution::StudentsT::new(0.0, 1.0, df)
                    .map_err(|e| Error::InvalidInput(e.to_string()))?;
                Ok(d.inverse_cdf(u.clamp(f64::MIN_POSITIVE, 1.0 - 1e-16)))
            }
            _ => Err(Error::InvalidInput(format!("no closed-form quantile for {self:?}"))),
        }
    }
}

/// The GLD percentile function `Q(u) = l1 + (u^l3 - (1-u)^l4) / l2`.
pub fn gld_quantile(lambda: [f64; 4], u: f64) -> Result<f64> {
    let [l1, l2, l3, l4] = lambda;
    if l2 == 0.0 {
        return Err(Error::InvalidInput("GLD scale parameter must be nonzero".into()));
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidInput("quantile argument must lie in [0, 1]".into()));
    }
    Ok(l1 + (u.powf(l3) - (1.0 - u).powf(l4)) / l2)
}

/// Inverse-CDF quantile of Normal(mu, sigma) truncated to (a, b).
pub fn trunc_normal_quantile(a: f64, b: f64, mu: f64, sigma: f64, u: f64) -> Result<f64> {
    if !(a < b) || !(sigma > 0.0) {
        return Err(Error::InvalidInput("truncated normal needs a < b and sigma > 0".into()));
    }
    let std = NormalDist::standard();
    let lo = std.cdf((a - mu) / sigma);
    let hi = std.cdf((b - mu) / sigma);
    if hi - lo < 1e-12 {
        return Err(Error::InvalidInput("truncation interval carries negligible normal mass".into()));
    }
    let q = std.inverse_cdf((lo + u * (hi - lo)).clamp(f64::MIN_POSITIVE, 1.0 - 1e-16));
    Ok((mu + sigma * q).clamp(a, b))
}

/// Draw `count` iid truncated-normal values from the substream keyed by
/// `seed`.
pub fn trunc_normal_sample(a: f64, b: f64, mu: f64, sigma: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = crate::rng::substream(seed, 0);
    (0..count).map(|_| trunc_normal_quantile(a, b, mu, sigma, rng.gen())).collect()
}
