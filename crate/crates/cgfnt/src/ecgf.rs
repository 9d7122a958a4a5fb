//! Empirical moment/cumulant generating function machinery and the test
//! statistics built from it.
//!
//! All exponential sums are computed with a max-shift: with
//! `c = max_i t' z_i` we accumulate `w_i = exp(t' z_i - c)`. The shift
//! cancels algebraically in every CGF ratio, so large `|t' z_i|` never
//! overflows intermediate sums.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::rng::substream;

/// A fixed set of evaluation points with every coordinate in `[-R, R]`.
///
/// The set is regenerated bit-identically from `(seed, dim, len, radius)`
/// and is shared verbatim between calibration and data evaluation; the test
/// statistic is distribution-free only conditional on the point set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPointSet {
    points: Vec<DVector<f64>>,
    radius: f64,
    dim: usize,
    seed: u64,
}

impl EvalPointSet {
    /// Sample `n_points` points with coordinates drawn iid uniformly from
    /// `[-radius, radius]`. In one dimension this is the interval
    /// `[-R, R]`; in higher dimensions the points fill the cube, which
    /// keeps each coordinate's reach at `R` regardless of `p` (the per-
    /// coordinate reach is what the diagonal statistic responds to).
    pub fn sample(dim: usize, n_points: usize, radius: f64, seed: u64) -> Result<Self> {
        if dim == 0 || n_points == 0 {
            return Err(Error::InvalidInput("point set needs dim >= 1 and N >= 1".into()));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidInput("radius must be positive".into()));
        }
        let mut rng = substream(seed, 0);
        let mut points = Vec::with_capacity(n_points);
        for _ in 0..n_points {
            let t =
                DVector::from_fn(dim, |_, _| rng.gen::<f64>() * 2.0 * radius - radius);
            points.push(t);
        }
        Ok(Self { points, radius, dim, seed })
    }

    /// Build a point set from explicit points (used by tests and by the
    /// calibration file reader).
    pub fn from_points(points: Vec<DVector<f64>>, radius: f64, seed: u64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("empty point set".into()));
        }
        let dim = points[0].len();
        if points.iter().any(|t| t.len() != dim) {
            return Err(Error::InvalidInput("point dimensions differ".into()));
        }
        if points.iter().any(|t| t.amax() > radius * (1.0 + 1e-12) + 1e-12) {
            return Err(Error::InvalidInput("point coordinate outside the stated range".into()));
        }
        Ok(Self { points, radius, dim, seed })
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Empirical MGF, gradient, Hessian, and CGF Hessian at one point.
#[derive(Debug, Clone)]
pub struct EcgfEval {
    /// `M(t) = (1/n) sum exp(t' z_i)`.
    pub m: f64,
    /// `(1/n) sum z_i exp(t' z_i)`.
    pub grad: DVector<f64>,
    /// `(1/n) sum z_i z_i' exp(t' z_i)`.
    pub hess_m: DMatrix<f64>,
    /// `(M hess_m - grad grad') / M^2`, the Hessian of `log M`.
    pub hess_lambda: DMatrix<f64>,
}

/// Evaluate the empirical MGF and CGF Hessian of the rows of `z` at `t`.
pub fn ecgf_eval(z: &DMatrix<f64>, t: &DVector<f64>) -> EcgfEval {
    let n = z.nrows();
    let p = z.ncols();
    assert!(n > 0, "empty residual matrix");
    assert_eq!(p, t.len(), "dimension mismatch");

    let dots: Vec<f64> = (0..n).map(|i| (0..p).map(|j| t[j] * z[(i, j)]).sum()).collect();
    let c = dots.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut sm = 0.0;
    let mut sg = DVector::zeros(p);
    let mut sh = DMatrix::zeros(p, p);
    for i in 0..n {
        let w = (dots[i] - c).exp();
        sm += w;
        for a in 0..p {
            let za = z[(i, a)];
            sg[a] += za * w;
            for b in a..p {
                sh[(a, b)] += za * z[(i, b)] * w;
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            sh[(a, b)] = sh[(b, a)];
        }
    }

    // hess_lambda = (sm*sh - sg sg') / sm^2: the shift c cancels.
    let hess_lambda = DMatrix::from_fn(p, p, |a, b| (sm * sh[(a, b)] - sg[a] * sg[b]) / (sm * sm));
    let nf = n as f64;
    let scale = c.exp() / nf;
    EcgfEval {
        m: sm * scale,
        grad: &sg * scale,
        hess_m: &sh * scale,
        hess_lambda,
    }
}

/// Second derivative of the univariate empirical CGF of `col` at `t`.
///
/// Equals the `(j,j)` entry of [`ecgf_eval`] at the axis point `s_j`, at a
/// fraction of the cost.
pub fn marginal_cgf_second(col: &[f64], t: f64) -> f64 {
    assert!(!col.is_empty(), "empty column");
    let c = col.iter().map(|&z| t * z).fold(f64::NEG_INFINITY, f64::max);
    let mut sm = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for &z in col {
        let w = (t * z - c).exp();
        sm += w;
        s1 += z * w;
        s2 += z * z * w;
    }
    (sm * s2 - s1 * s1) / (sm * sm)
}

/// The pair `(H, D)` of discretized L2 statistics over a point set.
#[derive(Debug, Clone, Copy)]
pub struct PairStatistics {
    /// `n * sum_l sum_{i<j} hess_lambda_ij(t_l)^2` - the dependence part.
    pub h_stat: f64,
    /// `n * sum_l sum_i (D_ii(t_l) - 1)^2` - the marginal part.
    pub d_stat: f64,
    pub n: usize,
    pub point_set_seed: u64,
}

/// Compute `(H, D)` for the scaled residuals `z` over `pts`.
///
/// The diagonal matrix `D(t_l)` is evaluated per coordinate with the
/// univariate marginal routine; its off-diagonal complement equals the
/// off-diagonal part of the full CGF Hessian.
pub fn stat_pair(z: &DMatrix<f64>, pts: &EvalPointSet) -> Result<PairStatistics> {
    let n = z.nrows();
    let p = z.ncols();
    if p != pts.dim() {
        return Err(Error::InvalidInput(format!(
            "point set dimension {} does not match sample dimension {}",
            pts.dim(),
            p
        )));
    }
    let cols: Vec<Vec<f64>> = (0..p).map(|j| z.column(j).iter().cloned().collect()).collect();
    // one (h, d) contribution per point; summed in point index order so the
    // result is independent of the thread count
    let contributions = map_indexed(pts.len(), |l| {
        let t = &pts.points()[l];
        let mut h = 0.0;
        if p > 1 {
            let ev = ecgf_eval(z, t);
            for a in 0..p {
                for b in (a + 1)..p {
                    h += ev.hess_lambda[(a, b)] * ev.hess_lambda[(a, b)];
                }
            }
        }
        let mut d = 0.0;
        for j in 0..p {
            let dev = marginal_cgf_second(&cols[j], t[j]) - 1.0;
            d += dev * dev;
        }
        (h, d)
    });
    let nf = n as f64;
    let (mut h_sum, mut d_sum) = (0.0, 0.0);
    for (h, d) in contributions {
        h_sum += h;
        d_sum += d;
    }
    Ok(PairStatistics {
        h_stat: nf * h_sum,
        d_stat: nf * d_sum,
        n,
        point_set_seed: pts.seed(),
    })
}

/// The univariate statistic `n * sum_l (Lambda''(t_l) - 1)^2` on scaled
/// residuals. The leading factor `n` matches the normalization of the
/// multivariate pair; the calibrated test decision is unaffected by it.
pub fn stat_univariate(z_col: &[f64], pts: &EvalPointSet) -> Result<f64> {
    if pts.dim() != 1 {
        return Err(Error::InvalidInput("univariate statistic needs a 1-d point set".into()));
    }
    if z_col.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    let contributions = map_indexed(pts.len(), |l| {
        let dev = marginal_cgf_second(z_col, pts.points()[l][0]) - 1.0;
        dev * dev
    });
    Ok(z_col.len() as f64 * contributions.iter().sum::<f64>())
}
