//! Textual grammar for distribution specs, used by the CLI.
//!
//! ```text
//! spec     := "product:" marginal ":p=" INT
//!           | "copula:" copula ":marginal=" marginal ":p=" INT
//!           | "mixture:" ("scconn" | "loconn") "(" NUM "," NUM ")"
//!           | "mvnormal" [":mean=" ("zero" | "seq")] [":cov=" ("identity" | "equi(" NUM ")")] ":p=" INT
//!           | "mvmix:w=" NUM [":rho=" NUM] ":p=" INT
//!           | "mt(" NUM "):p=" INT
//! marginal := normal(mu,sigma) | uniform(a,b) | beta(a,b) | gld(l1,l2,l3,l4)
//!           | trunc(a,b,mu,sigma) | laplace | logistic | cauchy | t(df)
//!           | exp(rate) | lognormal(mu,sigma) | gamma(shape,rate)
//!           | weibull(shape,scale) | pareto(scale,shape) | chisq(df)
//!           | scconn(w,b) | loconn(w,a)
//! copula   := clayton(t) | gumbel(t) | frank(t) | amh(t)
//!           | tcopula(rho,df) | gaussian(rho)
//! ```
//!
//! `mvmix:w=W:rho=RHO:p=P` is the two-component mixture
//! `W N(0, I) + (1-W) N(0, S)` where `S` has unit diagonal and `RHO`
//! (default 0.5) off-diagonal.

use nalgebra::{DMatrix, DVector};

use super::{equicorrelation, CopulaSpec, DistributionSpec, MarginalSpec};
use crate::error::{Error, Result};

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn eat(&mut self, token: &str) -> bool {
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<()> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(self.err(&format!("expected `{token}`")))
        }
    }

    fn err(&self, msg: &str) -> Error {
        Error::Spec { pos: self.pos, msg: msg.into() }
    }

    fn ident(&mut self) -> &'a str {
        let end = self
            .rest()
            .char_indices()
            .find(|(_, c)| !c.is_ascii_alphanumeric() && *c != '_')
            .map(|(i, _)| i)
            .unwrap_or(self.rest().len());
        let id = &self.rest()[..end];
        self.pos += end;
        id
    }

    fn number(&mut self) -> Result<f64> {
        let end = self
            .rest()
            .char_indices()
            .find(|(_, c)| !matches!(c, '0'..='9' | '.' | '-' | '+' | 'e' | 'E'))
            .map(|(i, _)| i)
            .unwrap_or(self.rest().len());
        let tok = &self.rest()[..end];
        let v: f64 = tok.parse().map_err(|_| self.err("expected a number"))?;
        self.pos += end;
        Ok(v)
    }

    fn args(&mut self, count: usize) -> Result<Vec<f64>> {
        self.expect("(")?;
        let mut out = Vec::with_capacity(count);
        for k in 0..count {
            if k > 0 {
                self.expect(",")?;
            }
            out.push(self.number()?);
        }
        self.expect(")")?;
        Ok(out)
    }

    fn dim_suffix(&mut self) -> Result<usize> {
        self.expect(":p=")?;
        let v = self.number()?;
        if v < 1.0 || v.fract() != 0.0 {
            return Err(self.err("dimension must be a positive integer"));
        }
        Ok(v as usize)
    }
}

fn parse_marginal(c: &mut Cursor) -> Result<MarginalSpec> {
    let at = c.pos;
    let name = c.ident();
    let spec = match name {
        "normal" => {
            let a = c.args(2)?;
            MarginalSpec::Normal { mu: a[0], sigma: a[1] }
        }
        "uniform" => {
            let a = c.args(2)?;
            MarginalSpec::Uniform { a: a[0], b: a[1] }
        }
        "beta" => {
            let a = c.args(2)?;
            MarginalSpec::Beta { alpha: a[0], beta: a[1] }
        }
        "gld" => {
            let a = c.args(4)?;
            MarginalSpec::Gld { l1: a[0], l2: a[1], l3: a[2], l4: a[3] }
        }
        "trunc" => {
            let a = c.args(4)?;
            MarginalSpec::TruncNormal { a: a[0], b: a[1], mu: a[2], sigma: a[3] }
        }
        "laplace" => MarginalSpec::Laplace,
        "logistic" => MarginalSpec::Logistic,
        "cauchy" => MarginalSpec::Cauchy,
        "t" => {
            let a = c.args(1)?;
            MarginalSpec::StudentT { df: a[0] }
        }
        "exp" => {
            let a = c.args(1)?;
            MarginalSpec::Exp { rate: a[0] }
        }
        "lognormal" => {
            let a = c.args(2)?;
            MarginalSpec::LogNormal { mu: a[0], sigma: a[1] }
        }
        "gamma" => {
            let a = c.args(2)?;
            MarginalSpec::Gamma { shape: a[0], rate: a[1] }
        }
        "weibull" => {
            let a = c.args(2)?;
            MarginalSpec::Weibull { shape: a[0], scale: a[1] }
        }
        "pareto" => {
            let a = c.args(2)?;
            MarginalSpec::Pareto { scale: a[0], shape: a[1] }
        }
        "chisq" => {
            let a = c.args(1)?;
            MarginalSpec::ChiSq { df: a[0] }
        }
        "scconn" => {
            let a = c.args(2)?;
            MarginalSpec::ScConN { weight: a[0], b: a[1] }
        }
        "loconn" => {
            let a = c.args(2)?;
            MarginalSpec::LoConN { weight: a[0], a: a[1] }
        }
        _ => return Err(Error::Spec { pos: at, msg: format!("unknown marginal `{name}`") }),
    };
    spec.validate()?;
    Ok(spec)
}

fn parse_copula(c: &mut Cursor) -> Result<CopulaSpec> {
    let at = c.pos;
    let name = c.ident();
    let spec = match name {
        "clayton" => CopulaSpec::Clayton(c.args(1)?[0]),
        "gumbel" => CopulaSpec::Gumbel(c.args(1)?[0]),
        "frank" => CopulaSpec::Frank(c.args(1)?[0]),
        "amh" => CopulaSpec::Amh(c.args(1)?[0]),
        "tcopula" => {
            let a = c.args(2)?;
            CopulaSpec::TCopula { rho: a[0], df: a[1] }
        }
        "gaussian" => CopulaSpec::Gaussian { rho: c.args(1)?[0] },
        _ => return Err(Error::Spec { pos: at, msg: format!("unknown copula `{name}`") }),
    };
    Ok(spec)
}

/// Parse the canonical textual form of a [`DistributionSpec`].
pub fn parse_spec(text: &str) -> Result<DistributionSpec> {
    let mut c = Cursor { text, pos: 0 };
    let spec = if c.eat("product:") {
        let marginal = parse_marginal(&mut c)?;
        let p = c.dim_suffix()?;
        DistributionSpec::ProductMarginal { marginal, p }
    } else if c.eat("copula:") {
        let copula = parse_copula(&mut c)?;
        c.expect(":marginal=")?;
        let marginal = parse_marginal(&mut c)?;
        let p = c.dim_suffix()?;
        DistributionSpec::CopulaLaw { copula, marginals: vec![marginal; p] }
    } else if c.eat("mixture:") {
        let marginal = parse_marginal(&mut c)?;
        match marginal {
            MarginalSpec::ScConN { .. } | MarginalSpec::LoConN { .. } => {}
            _ => return Err(c.err("mixture: expects scconn(...) or loconn(...)")),
        }
        DistributionSpec::ProductMarginal { marginal, p: 1 }
    } else if c.eat("mvnormal") {
        let mut seq_mean = false;
        let mut rho = None;
        if c.eat(":mean=") {
            let m = c.ident();
            match m {
                "zero" => {}
                "seq" => seq_mean = true,
                _ => return Err(c.err("mean must be `zero` or `seq`")),
            }
        }
        if c.eat(":cov=") {
            if c.eat("identity") {
            } else if c.eat("equi") {
                rho = Some(c.args(1)?[0]);
            } else {
                return Err(c.err("cov must be `identity` or `equi(rho)`"));
            }
        }
        let p = c.dim_suffix()?;
        let mean = if seq_mean {
            DVector::from_fn(p, |j, _| (j + 1) as f64)
        } else {
            DVector::zeros(p)
        };
        let cov = match rho {
            Some(r) => equicorrelation(p, r),
            None => DMatrix::identity(p, p),
        };
        DistributionSpec::MultivariateNormal { mean, cov }
    } else if c.eat("mvmix:w=") {
        let w = c.number()?;
        let rho = if c.eat(":rho=") { c.number()? } else { 0.5 };
        let p = c.dim_suffix()?;
        DistributionSpec::NormalMixture {
            weights: vec![w, 1.0 - w],
            means: vec![DVector::zeros(p); 2],
            covs: vec![DMatrix::identity(p, p), equicorrelation(p, rho)],
        }
    } else if c.eat("mt") {
        let df = c.args(1)?[0];
        let p = c.dim_suffix()?;
        DistributionSpec::MultivariateT { df, p }
    } else {
        return Err(c.err("expected product:, copula:, mixture:, mvnormal, mvmix: or mt"));
    };
    if !c.rest().is_empty() {
        return Err(c.err("trailing input"));
    }
    spec.validate()?;
    Ok(spec)
}
