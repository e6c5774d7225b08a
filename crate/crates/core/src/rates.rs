//! Closed-form approximation rates for the max-of-sums statistic.
//!
//! Every unspecified universal constant is a caller-supplied multiplier that
//! defaults to 1, so the outputs are rates up to constants rather than
//! certified probabilities. Logarithms are natural; `log p` is floored at 1
//! and `log(np)` is evaluated as `ln(n * p)`.

use serde::{Deserialize, Serialize};

use crate::data::{Centering, DataMatrix};
use crate::error::{invalid, Error, Result};
use crate::stats::floored_ln;

/// Multipliers standing in for the unspecified universal constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateConstants {
    pub piece1: f64,
    pub piece2: f64,
    pub piece3: f64,
    pub overall: f64,
}

impl Default for RateConstants {
    fn default() -> Self {
        Self {
            piece1: 1.0,
            piece2: 1.0,
            piece3: 1.0,
            overall: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateInputs {
    pub n: usize,
    pub p: usize,
    /// Moment / truncation level `M`.
    pub m: f64,
    pub sigma_bar: f64,
    /// Either the smoothing width `eps` or the quantile `t_{alpha + eta0}`.
    pub eps: f64,
    pub constants: RateConstants,
}

impl RateInputs {
    pub fn new(n: usize, p: usize, m: f64, sigma_bar: f64, eps: f64) -> Result<Self> {
        let r = Self {
            n,
            p,
            m,
            sigma_bar,
            eps,
            constants: RateConstants::default(),
        };
        r.validate()?;
        Ok(r)
    }

    pub fn with_constants(mut self, constants: RateConstants) -> Result<Self> {
        self.constants = constants;
        self.validate()?;
        Ok(self)
    }

    pub fn with_eps(mut self, eps: f64) -> Result<Self> {
        self.eps = eps;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(invalid("n, p", "must be at least 1"));
        }
        positive("M", self.m)?;
        positive("sigma_bar", self.sigma_bar)?;
        positive("eps", self.eps)?;
        let c = &self.constants;
        for (name, v) in [
            ("c_piece1", c.piece1),
            ("c_piece2", c.piece2),
            ("c_piece3", c.piece3),
            ("c_overall", c.overall),
        ] {
            positive(name, v)?;
        }
        Ok(())
    }

    pub fn log_np(&self) -> f64 {
        log_np(self.n, self.p)
    }

    pub fn log_p(&self) -> f64 {
        floored_ln(self.p as f64)
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive and finite, got {v}")))
    }
}

/// `ln(n p)`.
pub fn log_np(n: usize, p: usize) -> f64 {
    (n as f64 * p as f64).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBreakdown {
    pub piece1: f64,
    pub piece2: f64,
    pub piece3: f64,
    /// 1, 2 or 3.
    pub active_piece: u8,
    /// `((log np)^3 / n)^{1/4} M`: below it the third piece is smallest.
    pub lower_breakpoint: f64,
    /// `sigma_bar / sqrt(log p)`: above it the first piece is smallest.
    pub upper_breakpoint: f64,
    pub value: f64,
}

/// Relative gap under which two pieces count as tied.
const TIE_TOL: f64 = 1e-12;

/// Three-piece LP pre-distance rate, minimised over the pieces.
///
/// With equal piece constants the smallest piece is the first for
/// `eps >= sigma_bar / sqrt(log p)`, the third for
/// `eps <= ((log np)^3 / n)^{1/4} M` and the second in between; ties go to the
/// lower index.
pub fn eta_bar(inputs: &RateInputs) -> Result<RateBreakdown> {
    inputs.validate()?;
    let RateInputs {
        n,
        m,
        sigma_bar,
        eps,
        constants: c,
        ..
    } = *inputs;
    let n = n as f64;
    let lnp3 = inputs.log_np().powi(3);
    let logp = inputs.log_p();

    let piece1 = c.piece1 * (lnp3 / n).sqrt() * m * m / (eps * eps);
    let piece2 = c.piece2 * (lnp3 * logp / n).sqrt() * m * m / (eps * sigma_bar);
    let piece3 = c.piece3 * (lnp3 * logp * logp / n).powf(0.25) * m / sigma_bar;

    let pieces = [piece1, piece2, piece3];
    let value = pieces.iter().copied().fold(f64::INFINITY, f64::min);
    let active = pieces
        .iter()
        .position(|&v| v <= value * (1.0 + TIE_TOL))
        .expect("finite pieces");

    Ok(RateBreakdown {
        piece1,
        piece2,
        piece3,
        active_piece: active as u8 + 1,
        lower_breakpoint: (lnp3 / n).powf(0.25) * m,
        upper_breakpoint: sigma_bar / logp.sqrt(),
        value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageBound {
    pub value: f64,
    /// The bound is at least 1 and says nothing.
    pub vacuous: bool,
    pub breakdown: RateBreakdown,
}

/// Coverage-error bound of the conservative bootstrap:
/// `c * (eta_bar(t) + 1/(np) + q0)`, with `inputs.eps` holding `t`.
pub fn conservative_coverage_bound(inputs: &RateInputs, q0: f64) -> Result<CoverageBound> {
    if !(inputs.eps > 0.0) {
        return Err(invalid(
            "t",
            format!("the quantile must be positive, got {}", inputs.eps),
        ));
    }
    if !(0.0..=1.0).contains(&q0) {
        return Err(invalid("q0", format!("must lie in [0, 1], got {q0}")));
    }
    let breakdown = eta_bar(inputs)?;
    let np = inputs.n as f64 * inputs.p as f64;
    let value = inputs.constants.overall * (breakdown.value + 1.0 / np + q0);
    Ok(CoverageBound {
        value,
        vacuous: value >= 1.0,
        breakdown,
    })
}

/// Effective width `eps_n t / (1 + eps_n)` for inflation factor `1 + eps_n`.
pub fn inflated_width(t: f64, inflation: f64) -> Result<f64> {
    positive("t", t)?;
    positive("inflation", inflation)?;
    Ok(inflation * t / (1.0 + inflation))
}

/// Coverage bound for a general inflation `1 + eps_n`.
pub fn coverage_bound_inflated(
    inputs: &RateInputs,
    inflation: f64,
    q0: f64,
) -> Result<CoverageBound> {
    let eps = inflated_width(inputs.eps, inflation)?;
    conservative_coverage_bound(&inputs.with_eps(eps)?, q0)
}

/// Exact-bootstrap bound `4 tail + c ((log np)^3 (log p)^2 / n)^{1/4} M / sigma_bar`.
///
/// `inputs.eps` is not used.
pub fn exact_coverage_bound(inputs: &RateInputs, tail_prob: f64) -> Result<f64> {
    inputs.validate()?;
    if !(0.0..=1.0).contains(&tail_prob) {
        return Err(invalid(
            "tail_prob",
            format!("must lie in [0, 1], got {tail_prob}"),
        ));
    }
    let n = inputs.n as f64;
    let logp = inputs.log_p();
    let rate = (inputs.log_np().powi(3) * logp * logp / n).powf(0.25) * inputs.m / inputs.sigma_bar;
    Ok(4.0 * tail_prob + inputs.constants.overall * rate)
}

/// Max-norm level whose exceedance defines `q0`:
/// `max(M (n / log np)^{1/4}, sqrt(n) eps / log np)`.
pub fn q0_threshold(n: usize, p: usize, m: f64, eps: f64) -> Result<f64> {
    positive("M", m)?;
    positive("eps", eps)?;
    if n == 0 || p == 0 {
        return Err(invalid("n, p", "must be at least 1"));
    }
    let l = log_np(n, p);
    let n = n as f64;
    Ok((m * (n / l).powf(0.25)).max(n.sqrt() * eps / l))
}

/// Fraction of datasets whose largest centred entry exceeds [`q0_threshold`].
///
/// Each dataset must carry its population mean.
pub fn q0_estimate<I>(datasets: I, m: f64, eps: f64) -> Result<f64>
where
    I: IntoIterator<Item = DataMatrix>,
{
    let mut total = 0usize;
    let mut hits = 0usize;
    for d in datasets {
        let center = d.centers(Centering::Known)?;
        let level = q0_threshold(d.nrows(), d.ncols(), m, eps)?;
        if d.max_abs_deviation(&center) > level {
            hits += 1;
        }
        total += 1;
    }
    if total == 0 {
        return Err(Error::Empty("q0 needs at least one dataset"));
    }
    Ok((hits as f64 / total as f64).clamp(0.0, 1.0))
}

/// Tail conditions on the centred entries `|X_ij - E X_ij|` with scale `B_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailCondition {
    /// Almost surely bounded by `B_n`.
    Bounded,
    /// `E exp(|.|^2 / B_n^2) <= 2`.
    SubGaussian,
    /// `E exp(|.| / B_n) <= 2`.
    SubExponential,
    /// Averaged `q`-th moment of the row max-norm at most `B_n^q`, `q > 2`.
    MaxMoment { q: f64 },
}

impl std::str::FromStr for TailCondition {
    type Err = Error;

    /// Accepts `E1`..`E3`, `E4:<q>` or the names `bounded`, `subgaussian`,
    /// `subexponential`, `moment:<q>`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "e1" | "bounded" => Ok(Self::Bounded),
            "e2" | "subgaussian" | "sub-gaussian" => Ok(Self::SubGaussian),
            "e3" | "subexponential" | "sub-exponential" => Ok(Self::SubExponential),
            _ => {
                let q = t
                    .strip_prefix("e4:")
                    .or_else(|| t.strip_prefix("moment:"))
                    .ok_or_else(|| Error::Parse(format!("unknown tail condition `{s}`")))?;
                let q: f64 = q
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad moment order in `{s}`: {e}")))?;
                Ok(Self::MaxMoment { q })
            }
        }
    }
}

/// Truncation level `M` that makes the tail term of the coverage bound
/// negligible under `condition`. `c` is the unspecified constant of the
/// sub-Gaussian and sub-exponential cases.
pub fn select_m(
    condition: TailCondition,
    b_n: f64,
    m4: f64,
    n: usize,
    p: usize,
    c: f64,
) -> Result<f64> {
    positive("B_n", b_n)?;
    positive("M4", m4)?;
    positive("c", c)?;
    if n == 0 || p == 0 {
        return Err(invalid("n, p", "must be at least 1"));
    }
    let l = log_np(n, p);
    let n = n as f64;
    Ok(match condition {
        TailCondition::Bounded => m4.max((l / n).powf(0.25) * b_n),
        TailCondition::SubGaussian => (c * (l.powi(3) / n).powf(0.25) * b_n).max(m4),
        TailCondition::SubExponential => (c * (l.powi(5) / n).powf(0.25) * b_n).max(m4),
        TailCondition::MaxMoment { q } => {
            if !(q > 2.0) {
                return Err(invalid("q", format!("moment order must exceed 2, got {q}")));
            }
            m4
        }
    })
}

/// Comparison remainder `K_{n,m*}(eps)` for `m* in {3, 4}`.
///
/// `moment_diffs[k]` is the moment mismatch of order `k + 2`
/// (`m = 2, ..., m* - 1`), `coef[k]` its constant; `coef[m* - 2]` multiplies
/// the top-order term `M^{m*} + M_Y^{m*}`. `coef` defaults to all ones when
/// empty.
pub fn k_n_mstar(
    n: usize,
    p: usize,
    eps: f64,
    mstar: u32,
    moment_diffs: &[f64],
    m_top: f64,
    m_top_y: f64,
    coef: &[f64],
) -> Result<f64> {
    if !(mstar == 3 || mstar == 4) {
        return Err(invalid("mstar", format!("must be 3 or 4, got {mstar}")));
    }
    positive("eps", eps)?;
    if n == 0 || p == 0 {
        return Err(invalid("n, p", "must be at least 1"));
    }
    let lower = (mstar - 2) as usize;
    if moment_diffs.len() != lower {
        return Err(Error::DimensionMismatch {
            expected: lower,
            got: moment_diffs.len(),
        });
    }
    let ones = vec![1.0; lower + 1];
    let coef = if coef.is_empty() { &ones[..] } else { coef };
    if coef.len() != lower + 1 {
        return Err(Error::DimensionMismatch {
            expected: lower + 1,
            got: coef.len(),
        });
    }
    if moment_diffs.iter().chain([&m_top, &m_top_y]).any(|v| !(*v >= 0.0)) {
        return Err(invalid("moments", "must be non-negative"));
    }
    let l = log_np(n, p);
    let n = n as f64;
    let scale = |m: u32| l.powi(m as i32 - 1) / (n.powf(m as f64 / 2.0 - 1.0) * eps.powi(m as i32));
    let matched: f64 = moment_diffs
        .iter()
        .zip(coef)
        .enumerate()
        .map(|(k, (d, c))| c * scale(k as u32 + 2) * d)
        .sum();
    let top = coef[lower]
        * scale(mstar)
        * (m_top.powi(mstar as i32) + m_top_y.powi(mstar as i32));
    Ok(matched + top)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntiConcentrationBound {
    /// `c [(log np)^3 (log p)^{1/2} / n * M4^4 / (eps^3 sigma_bar) + eps sqrt(log p) / sigma_bar]`.
    pub main: f64,
    /// Truncation probability bound, clamped to `[0, 1]`.
    pub rho: f64,
    pub truncation_level: f64,
    pub value: f64,
}

/// Truncation level `a_n = c0 sqrt(n) eps / log(np)`.
pub fn truncation_level(n: usize, p: usize, eps: f64, c0: f64) -> f64 {
    c0 * (n as f64).sqrt() * eps / log_np(n, p)
}

/// `max_j (1/n) sum_i X_ij^4 1{|X_ij| >= level}` on data centred by `centering`.
pub fn truncated_fourth_moment(data: &DataMatrix, level: f64, centering: Centering) -> Result<f64> {
    let center = data.centers(centering)?;
    let mut acc = vec![0.0; data.ncols()];
    for row in data.rows() {
        for ((a, x), c) in acc.iter_mut().zip(row).zip(&center) {
            let d = x - c;
            if d.abs() >= level {
                *a += d.powi(4);
            }
        }
    }
    let n = data.nrows() as f64;
    Ok(acc.into_iter().fold(0.0, f64::max) / n)
}

/// Anti-concentration bound for `T_n` at width `eps`.
pub fn anti_concentration_bound(
    n: usize,
    p: usize,
    eps: f64,
    m4: f64,
    sigma_bar: f64,
    truncated_moment: f64,
    c0: f64,
    c: f64,
) -> Result<AntiConcentrationBound> {
    positive("eps", eps)?;
    positive("M4", m4)?;
    positive("sigma_bar", sigma_bar)?;
    positive("c0", c0)?;
    positive("c", c)?;
    if !(truncated_moment >= 0.0) {
        return Err(invalid("truncated_moment", "must be non-negative"));
    }
    if n == 0 || p == 0 {
        return Err(invalid("n, p", "must be at least 1"));
    }
    let l = log_np(n, p);
    let logp = floored_ln(p as f64);
    let nf = n as f64;
    let main = c
        * (l.powi(3) * logp.sqrt() / nf * m4.powi(4) / (eps.powi(3) * sigma_bar)
            + eps * logp.sqrt() / sigma_bar);
    let rho = (4.0 * l.powi(3) / (c0.powi(3) * nf * eps.powi(4)) * truncated_moment).clamp(0.0, 1.0);
    Ok(AntiConcentrationBound {
        main,
        rho,
        truncation_level: truncation_level(n, p, eps, c0),
        value: main + 2.0 * rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit(n: usize, p: usize, m: f64, sb: f64, eps: f64) -> RateInputs {
        RateInputs::new(n, p, m, sb, eps).unwrap()
    }

    #[test]
    fn eta_bar_example() {
        let b = eta_bar(&unit(10_000, 100, 1.0, 1.0, 1.0)).unwrap();
        // sqrt(ln(1e6)^3 / 1e4)
        let l = 1e6f64.ln();
        assert_relative_eq!(b.piece1, (l * l * l / 1e4).sqrt(), max_relative = 1e-14);
        assert!((b.piece1 - 0.5135).abs() < 1e-4);
        assert_eq!(b.active_piece, 1);
        assert_eq!(b.value, b.piece1);
        assert!((b.upper_breakpoint - 0.466).abs() < 1e-3);
    }

    #[test]
    fn eta_bar_breakpoints_are_continuous() {
        let base = unit(100_000, 50, 0.5, 2.0, 1.0);
        let up = eta_bar(&base).unwrap().upper_breakpoint;
        let b = eta_bar(&base.with_eps(up).unwrap()).unwrap();
        assert_relative_eq!(b.piece1, b.piece2, max_relative = 1e-12);
        assert_eq!(b.active_piece, 1);
        let lo = b.lower_breakpoint;
        let b = eta_bar(&base.with_eps(lo).unwrap()).unwrap();
        assert_relative_eq!(b.piece2, b.piece3, max_relative = 1e-12);
        assert_eq!(b.active_piece, 2);
    }

    #[test]
    fn eta_bar_rejects_nonpositive() {
        assert!(RateInputs::new(10, 10, 0.0, 1.0, 1.0).is_err());
        assert!(RateInputs::new(10, 10, 1.0, -1.0, 1.0).is_err());
        assert!(RateInputs::new(0, 10, 1.0, 1.0, 1.0).is_err());
        let c = RateConstants {
            piece2: 0.0,
            ..Default::default()
        };
        assert!(unit(10, 10, 1.0, 1.0, 1.0).with_constants(c).is_err());
    }

    #[test]
    fn conservative_bound_example() {
        let b = conservative_coverage_bound(&unit(200, 1000, 1.0, 1.0, 3.0), 0.0).unwrap();
        let l = 2e5f64.ln();
        let oracle = (l.powi(3) / 200.0).sqrt() / 9.0 + 1.0 / 2e5;
        assert_relative_eq!(b.value, oracle, max_relative = 1e-14);
        assert!((b.value - (0.3351 + 5e-6)).abs() < 1e-4);
        assert!(!b.vacuous);

        let v = conservative_coverage_bound(&unit(200, 1000, 1.0, 1.0, 3.0), 1.0).unwrap();
        assert!(v.value >= 1.0 && v.vacuous);
        assert!(conservative_coverage_bound(&unit(200, 1000, 1.0, 1.0, 3.0), 1.5).is_err());
    }

    #[test]
    fn small_inflation_falls_back_to_worst_piece() {
        let inputs = unit(200, 1000, 1.0, 1.0, 3.0);
        let w = coverage_bound_inflated(&inputs, 1e-9, 0.0).unwrap();
        assert_eq!(w.breakdown.active_piece, 3);
        let np = 2e5;
        assert_relative_eq!(w.value, w.breakdown.piece3 + 1.0 / np, max_relative = 1e-12);
        assert_relative_eq!(inflated_width(3.0, 0.01).unwrap(), 3.0 / 101.0, max_relative = 1e-15);
    }

    #[test]
    fn exact_bound_examples() {
        let inputs = unit(10_000, 100, 1.0, 1.0, 1.0);
        let v = exact_coverage_bound(&inputs, 0.0).unwrap();
        let l = 1e6f64.ln();
        let lp = 100f64.ln();
        assert_relative_eq!(v, (l.powi(3) * lp * lp / 1e4).powf(0.25), max_relative = 1e-14);
        assert!((v - 1.5377).abs() < 2e-4);
        assert_relative_eq!(exact_coverage_bound(&inputs, 0.25).unwrap() - v, 1.0, max_relative = 1e-12);
        let doubled = RateInputs { m: 2.0, ..inputs };
        assert_relative_eq!(exact_coverage_bound(&doubled, 0.0).unwrap(), 2.0 * v, max_relative = 1e-14);
    }

    #[test]
    fn q0_trivial_cases() {
        let d = DataMatrix::from_rows(&[[0.1, -0.2], [0.0, 0.3]])
            .unwrap()
            .with_true_mean(vec![0.0, 0.0])
            .unwrap();
        assert_eq!(q0_estimate(vec![d.clone(); 3], 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(q0_estimate(vec![d.clone(); 3], 1e-12, 1e-12).unwrap(), 1.0);
        assert!(q0_estimate(Vec::<DataMatrix>::new(), 1.0, 1.0).is_err());
        let no_mean = DataMatrix::from_rows(&[[1.0]]).unwrap();
        assert!(q0_estimate(vec![no_mean], 1.0, 1.0).is_err());
    }

    #[test]
    fn select_m_examples() {
        let e1 = select_m(TailCondition::Bounded, 1.0, 0.5, 10_000, 100, 1.0).unwrap();
        assert_eq!(e1, 0.5);
        let raw = (1e6f64.ln() / 1e4).powf(0.25);
        assert!((raw - 0.19279).abs() < 1e-5);
        assert_eq!(select_m(TailCondition::Bounded, 10.0, 0.5, 10_000, 100, 1.0).unwrap(), 10.0 * raw);
        let e4 = TailCondition::MaxMoment { q: 4.0 };
        assert_eq!(select_m(e4, 1e6, 0.7, 10, 10, 1.0).unwrap(), 0.7);
        assert!(select_m(TailCondition::MaxMoment { q: 2.0 }, 1.0, 0.7, 10, 10, 1.0).is_err());
        let e2 = select_m(TailCondition::SubGaussian, 3.0, 0.1, 1000, 50, 1.0).unwrap();
        let e3 = select_m(TailCondition::SubExponential, 3.0, 0.1, 1000, 50, 1.0).unwrap();
        assert!(e3 >= e2);
        assert_eq!("E4:3.5".parse::<TailCondition>().unwrap(), TailCondition::MaxMoment { q: 3.5 });
        assert_eq!("e2".parse::<TailCondition>().unwrap(), TailCondition::SubGaussian);
        assert!("E5".parse::<TailCondition>().is_err());
    }

    #[test]
    fn k_examples() {
        // m* = 4, n = 100, p = 10, eps = 1, unit moments and constants
        let k = k_n_mstar(100, 10, 1.0, 4, &[1.0, 1.0], 1.0, 1.0, &[]).unwrap();
        let l = 1000f64.ln();
        let oracle = l / 1.0 + l * l / 10.0 + 2.0 * l.powi(3) / 100.0;
        assert_relative_eq!(k, oracle, max_relative = 1e-14);
        assert!((k - 18.27).abs() < 0.01);

        let only_top = k_n_mstar(100, 10, 1.0, 3, &[0.0], 1.5, 0.5, &[]).unwrap();
        let top = l * l / 10f64 * (1.5f64.powi(3) + 0.5f64.powi(3));
        assert_relative_eq!(only_top, top, max_relative = 1e-14);

        // dominant remainder scales as eps^{-m*}
        let a = k_n_mstar(100, 10, 0.01, 4, &[0.0, 0.0], 1.0, 1.0, &[]).unwrap();
        let b = k_n_mstar(100, 10, 0.005, 4, &[0.0, 0.0], 1.0, 1.0, &[]).unwrap();
        assert_relative_eq!(b / a, 16.0, max_relative = 1e-12);

        assert!(k_n_mstar(100, 10, 1.0, 5, &[1.0, 1.0, 1.0], 1.0, 1.0, &[]).is_err());
        assert!(k_n_mstar(100, 10, 1.0, 4, &[1.0], 1.0, 1.0, &[]).is_err());
    }

    #[test]
    fn anti_concentration_bound_examples() {
        // p = 2 floors log p at 1, so a negligible M4 leaves exactly eps
        let b = anti_concentration_bound(1, 2, 0.4, 1e-9, 1.0, 0.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(b.main, 0.4, max_relative = 1e-12);
        assert_eq!(b.rho, 0.0);
        assert_eq!(b.value, b.main);

        // U-shape over an eps grid
        let vals: Vec<f64> = (1..200)
            .map(|i| {
                anti_concentration_bound(10_000, 100, i as f64 * 0.01, 1.0, 1.0, 0.0, 1.0, 1.0)
                    .unwrap()
                    .main
            })
            .collect();
        let argmin = vals
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!(argmin > 0 && argmin < vals.len() - 1);
        assert!(vals[..argmin].windows(2).all(|w| w[0] >= w[1]));
        assert!(vals[argmin..].windows(2).all(|w| w[0] <= w[1]));

        let big = anti_concentration_bound(10, 10, 0.01, 1.0, 1.0, 1e6, 1.0, 1.0).unwrap();
        assert_eq!(big.rho, 1.0);
    }

    #[test]
    fn truncated_fourth_moment_example() {
        let d = DataMatrix::from_rows(&[[2.0, 0.5], [-3.0, 0.1], [0.1, 0.0]])
            .unwrap()
            .with_true_mean(vec![0.0, 0.0])
            .unwrap();
        let v = truncated_fourth_moment(&d, 1.0, Centering::Known).unwrap();
        assert_relative_eq!(v, (16.0 + 81.0) / 3.0, max_relative = 1e-15);
        assert_eq!(truncated_fourth_moment(&d, 10.0, Centering::Known).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn continuity_at_breakpoints(n in 1usize..1_000_000, p in 1usize..100_000,
                                     m in 0.01f64..100.0, sb in 0.01f64..100.0) {
            let base = unit(n, p, m, sb, 1.0);
            let b = eta_bar(&base).unwrap();
            let at_up = eta_bar(&base.with_eps(b.upper_breakpoint).unwrap()).unwrap();
            prop_assert!((at_up.piece1 - at_up.piece2).abs() <= 1e-9 * at_up.piece1);
            let at_lo = eta_bar(&base.with_eps(b.lower_breakpoint).unwrap()).unwrap();
            prop_assert!((at_lo.piece2 - at_lo.piece3).abs() <= 1e-9 * at_lo.piece2);
        }

        #[test]
        fn regions_follow_breakpoints(n in 1usize..1_000_000, p in 1usize..100_000,
                                      m in 0.01f64..10.0, sb in 0.01f64..10.0,
                                      log_eps in -6.0f64..4.0) {
            let eps = log_eps.exp();
            let b = eta_bar(&unit(n, p, m, sb, eps)).unwrap();
            let (lo, up) = (b.lower_breakpoint, b.upper_breakpoint);
            prop_assume!(lo < up);
            prop_assume!((eps / lo - 1.0).abs() > 1e-9 && (eps / up - 1.0).abs() > 1e-9);
            let expected = if eps >= up { 1 } else if eps <= lo { 3 } else { 2 };
            prop_assert_eq!(b.active_piece, expected);
            prop_assert_eq!(b.value, b.piece1.min(b.piece2).min(b.piece3));
        }

        #[test]
        fn monotone_in_eps_and_m(n in 1usize..100_000, p in 1usize..10_000,
                                 m in 0.1f64..10.0, sb in 0.1f64..10.0) {
            let grid: Vec<f64> = (1..60).map(|i| 0.05 * i as f64).collect();
            let by_eps: Vec<f64> = grid.iter()
                .map(|&e| eta_bar(&unit(n, p, m, sb, e)).unwrap().value).collect();
            prop_assert!(by_eps.windows(2).all(|w| w[1] <= w[0]));
            let by_m: Vec<f64> = grid.iter()
                .map(|&mm| eta_bar(&unit(n, p, mm, sb, 1.0)).unwrap().value).collect();
            prop_assert!(by_m.windows(2).all(|w| w[1] >= w[0]));
        }

        // below n p = 15 the growth of (log np)^3 outpaces 1/n
        #[test]
        fn doubling_n_shrinks_every_piece(n in 15usize..1_000_000, p in 1usize..10_000,
                                          m in 0.1f64..10.0, sb in 0.1f64..10.0, eps in 0.01f64..10.0) {
            let a = eta_bar(&unit(n, p, m, sb, eps)).unwrap();
            let b = eta_bar(&unit(2 * n, p, m, sb, eps)).unwrap();
            for (x, y) in [(a.piece1, b.piece1), (a.piece2, b.piece2), (a.piece3, b.piece3)] {
                prop_assert!(x.is_finite() && x > 0.0 && y > 0.0);
                prop_assert!(y < x);
            }
        }
    }
}
