//! Gaussian-copula datasets with structured correlation.
//!
//! Rows are `N(0, Sigma)` with unit variances, generated in `O(p)` per row from
//! the structure of `Sigma`, then pushed through `F^{-1}(Phi(.))` entrywise.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma};
use statrs::function::erf::erfc;

use crate::data::DataMatrix;
use crate::error::{invalid, Error, Result};
use crate::rng::substream;
use crate::stats::{empirical_quantile, max_sum_statistic, SampleArray};

/// Correlation structure of the latent Gaussian rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovarianceSpec {
    Identity,
    /// `Sigma_jk = rho^|j-k|`.
    Ar1 { rho: f64 },
    /// `Sigma_jk = rho` off the diagonal, 1 on it.
    CompoundSymmetry { rho: f64 },
}

impl CovarianceSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CovarianceSpec::Identity => Ok(()),
            CovarianceSpec::Ar1 { rho } if rho > -1.0 && rho < 1.0 => Ok(()),
            CovarianceSpec::Ar1 { rho } => {
                Err(invalid("rho", format!("AR(1) needs rho in (-1, 1), got {rho}")))
            }
            CovarianceSpec::CompoundSymmetry { rho } if (0.0..1.0).contains(&rho) => Ok(()),
            CovarianceSpec::CompoundSymmetry { rho } => Err(invalid(
                "rho",
                format!("compound symmetry needs rho in [0, 1), got {rho}"),
            )),
        }
    }

    /// Entry `Sigma_jk`.
    pub fn entry(&self, j: usize, k: usize) -> f64 {
        if j == k {
            return 1.0;
        }
        match *self {
            CovarianceSpec::Identity => 0.0,
            CovarianceSpec::Ar1 { rho } => rho.powi(j.abs_diff(k) as i32),
            CovarianceSpec::CompoundSymmetry { rho } => rho,
        }
    }

    /// Fills `row` with one `N(0, Sigma)` draw.
    pub fn fill_row<R: Rng + ?Sized>(&self, rng: &mut R, row: &mut [f64]) {
        match *self {
            CovarianceSpec::Identity => {
                for y in row.iter_mut() {
                    *y = rng.sample(StandardNormal);
                }
            }
            CovarianceSpec::Ar1 { rho } => {
                let innov = (1.0 - rho * rho).sqrt();
                let mut prev: f64 = 0.0;
                for (j, y) in row.iter_mut().enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    prev = if j == 0 { z } else { rho * prev + innov * z };
                    *y = prev;
                }
            }
            CovarianceSpec::CompoundSymmetry { rho } => {
                let g: f64 = rng.sample(StandardNormal);
                let (shared, own) = (rho.sqrt() * g, (1.0 - rho).sqrt());
                for y in row.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *y = shared + own * z;
                }
            }
        }
    }
}

impl fmt::Display for CovarianceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovarianceSpec::Identity => f.write_str("identity"),
            CovarianceSpec::Ar1 { rho } => write!(f, "ar1({rho})"),
            CovarianceSpec::CompoundSymmetry { rho } => write!(f, "cs({rho})"),
        }
    }
}

fn parse_call<'a>(s: &'a str, names: &[&str]) -> Option<&'a str> {
    names.iter().find_map(|name| {
        s.strip_prefix(name)
            .and_then(|r| r.strip_prefix('('))
            .and_then(|r| r.strip_suffix(')'))
    })
}

fn parse_param(s: &str, raw: &str) -> Result<f64> {
    raw.trim()
        .parse()
        .map_err(|e| Error::Parse(format!("bad parameter in `{s}`: {e}")))
}

impl FromStr for CovarianceSpec {
    type Err = Error;

    /// `identity`, `ar1(<rho>)`, `cs(<rho>)` or `compound(<rho>)`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase().replace(' ', "");
        let spec = if t == "identity" || t == "id" {
            CovarianceSpec::Identity
        } else if let Some(r) = parse_call(&t, &["ar1"]) {
            CovarianceSpec::Ar1 {
                rho: parse_param(s, r)?,
            }
        } else if let Some(r) = parse_call(&t, &["cs", "compound"]) {
            CovarianceSpec::CompoundSymmetry {
                rho: parse_param(s, r)?,
            }
        } else {
            return Err(Error::Parse(format!("unknown covariance `{s}`")));
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Target marginal law of every entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarginalSpec {
    StandardNormal,
    /// Gamma with unit scale; shape 1 is Exp(1).
    Gamma { shape: f64 },
}

impl MarginalSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MarginalSpec::Gamma { shape } if !(shape > 0.0 && shape.is_finite()) => Err(
                invalid("shape", format!("gamma shape must be positive, got {shape}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            MarginalSpec::StandardNormal => 0.0,
            MarginalSpec::Gamma { shape } => shape,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            MarginalSpec::StandardNormal => std_normal_cdf(x),
            MarginalSpec::Gamma { shape } => {
                if x <= 0.0 {
                    0.0
                } else if shape == 1.0 {
                    -(-x).exp_m1()
                } else {
                    gamma(shape).cdf(x)
                }
            }
        }
    }

    /// `F^{-1}(Phi(y))`.
    pub fn transform(&self, y: f64) -> f64 {
        match *self {
            MarginalSpec::StandardNormal => y,
            MarginalSpec::Gamma { shape } if shape == 1.0 => exp_from_gaussian(y),
            MarginalSpec::Gamma { shape } => gamma(shape).inverse_cdf(std_normal_cdf(y)),
        }
    }
}

fn gamma(shape: f64) -> Gamma {
    Gamma::new(shape, 1.0).expect("validated gamma shape")
}

impl fmt::Display for MarginalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarginalSpec::StandardNormal => f.write_str("normal"),
            MarginalSpec::Gamma { shape } => write!(f, "gamma({shape})"),
        }
    }
}

impl FromStr for MarginalSpec {
    type Err = Error;

    /// `normal`, `exp` or `gamma(<shape>)`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase().replace(' ', "");
        let spec = match t.as_str() {
            "normal" | "gaussian" => MarginalSpec::StandardNormal,
            "exp" | "exponential" => MarginalSpec::Gamma { shape: 1.0 },
            _ => match parse_call(&t, &["gamma"]) {
                Some(r) => MarginalSpec::Gamma {
                    shape: parse_param(s, r)?,
                },
                None => return Err(Error::Parse(format!("unknown marginal `{s}`"))),
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

macro_rules! string_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: serde::Serializer>(
                &self,
                s: S,
            ) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_string())
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: serde::Deserializer<'de>>(
                d: D,
            ) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(CovarianceSpec);
string_serde!(MarginalSpec);

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Exp(1) quantile of `Phi(y)`, i.e. `-ln(1 - Phi(y)) = -ln Phi(-y)`.
fn exp_from_gaussian(y: f64) -> f64 {
    if y < 0.0 {
        // Phi(-y) is close to 1 here; go through Phi(y) instead
        -(-std_normal_cdf(y)).ln_1p()
    } else {
        -std_normal_cdf(-y).ln()
    }
}

/// `n` i.i.d. `N(0, Sigma)` rows. Row `i` is drawn from `substream(seed, [i])`,
/// so the first `p'` columns of a wider draw equal a narrower draw.
pub fn generate_gaussian_matrix(
    n: usize,
    p: usize,
    cov: &CovarianceSpec,
    seed: u64,
) -> Result<DataMatrix> {
    cov.validate()?;
    if n == 0 || p == 0 {
        return Err(Error::Empty("data matrix needs n >= 1 and p >= 1"));
    }
    let mut values = vec![0.0; n * p];
    for (i, row) in values.chunks_exact_mut(p).enumerate() {
        let mut rng = substream(seed, &[i as u64]);
        cov.fill_row(&mut rng, row);
    }
    let mut d = DataMatrix::from_parts_unchecked(n, p, values);
    d.set_true_mean_unchecked(vec![0.0; p]);
    Ok(d)
}

/// Entrywise `F^{-1}(Phi(y))`; the result carries the marginal mean as its
/// population mean.
pub fn apply_marginal(gauss: &DataMatrix, marginal: &MarginalSpec) -> Result<DataMatrix> {
    marginal.validate()?;
    let values = gauss.values().iter().map(|&y| marginal.transform(y)).collect();
    let mut d = DataMatrix::new(gauss.nrows(), gauss.ncols(), values)?;
    d.set_true_mean_unchecked(vec![marginal.mean(); gauss.ncols()]);
    Ok(d)
}

/// One simulated dataset with its population mean attached.
pub fn simulate_dataset(
    n: usize,
    p: usize,
    cov: &CovarianceSpec,
    marginal: &MarginalSpec,
    seed: u64,
) -> Result<DataMatrix> {
    apply_marginal(&generate_gaussian_matrix(n, p, cov, seed)?, marginal)
}

/// Shape of the data-generating process behind `T_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSlice {
    pub n: usize,
    pub p: usize,
    pub covariance: CovarianceSpec,
    pub marginal: MarginalSpec,
}

/// `R` independent draws of `T_n` centred at the population mean; draw `r`
/// uses dataset seed `substream`-derived from `(seed, r)`.
pub fn true_statistic_draws(design: &DesignSlice, r: usize, seed: u64) -> Result<Vec<f64>> {
    if r == 0 {
        return Err(invalid("R", "need at least one draw"));
    }
    design.covariance.validate()?;
    design.marginal.validate()?;
    let mean = vec![design.marginal.mean(); design.p];
    (0..r)
        .into_par_iter()
        .map(|k| {
            let s = crate::rng::derive_seed(seed, &[k as u64]);
            let d = simulate_dataset(design.n, design.p, &design.covariance, &design.marginal, s)?;
            max_sum_statistic(&d, &mean)
        })
        .collect()
}

/// Upper-`alpha` quantile of `T_n` estimated from `R` simulated datasets.
pub fn estimate_true_quantile(design: &DesignSlice, alpha: f64, r: usize, seed: u64) -> Result<f64> {
    let draws = SampleArray::new(true_statistic_draws(design, r, seed)?)?;
    empirical_quantile(&draws, alpha)
}
