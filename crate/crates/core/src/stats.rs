//! Deterministic statistics on data matrices and scalar sample arrays.
//!
//! Everything here is a pure function of its inputs.

use std::collections::BTreeMap;

use crate::data::{Centering, DataMatrix};
use crate::error::{invalid, Error, Result};

/// `max(ln x, 1)`, the floored logarithm used by every rate formula.
pub fn floored_ln(x: f64) -> f64 {
    x.ln().max(1.0)
}

/// `max_j n^{-1/2} sum_i (x[i][j] - mean[j])`.
pub fn max_sum_statistic(data: &DataMatrix, mean: &[f64]) -> Result<f64> {
    if mean.len() != data.ncols() {
        return Err(Error::DimensionMismatch {
            expected: data.ncols(),
            got: mean.len(),
        });
    }
    if mean.iter().any(|m| !m.is_finite()) {
        return Err(invalid("mean", "must be finite"));
    }
    let mut sums = vec![0.0; data.ncols()];
    for row in data.rows() {
        for ((s, x), m) in sums.iter_mut().zip(row).zip(mean) {
            *s += x - m;
        }
    }
    let max = sums.into_iter().fold(f64::NEG_INFINITY, f64::max);
    Ok(max / (data.nrows() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary {
    /// Per-column standard deviation around the chosen centre.
    pub sigma: Vec<f64>,
    /// Soft minimum of `sigma`.
    pub sigma_bar: f64,
    /// `M_m` keyed by order `m`; `M_m^m` is the largest average absolute m-th moment.
    pub max_moment: BTreeMap<u32, f64>,
}

impl MomentSummary {
    pub fn min_sigma(&self) -> f64 {
        self.sigma.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn moment_summary(
    data: &DataMatrix,
    orders: &[u32],
    centering: Centering,
) -> Result<MomentSummary> {
    if let Some(&m) = orders.iter().find(|&&m| m < 2) {
        return Err(invalid("orders", format!("moment order {m} is below 2")));
    }
    let center = data.centers(centering)?;
    let n = data.nrows() as f64;
    let p = data.ncols();

    let mut second = vec![0.0; p];
    let mut higher: Vec<Vec<f64>> = vec![vec![0.0; p]; orders.len()];
    for row in data.rows() {
        for j in 0..p {
            let d = row[j] - center[j];
            second[j] += d * d;
            let a = d.abs();
            for (acc, &m) in higher.iter_mut().zip(orders) {
                acc[j] += a.powi(m as i32);
            }
        }
    }
    let sigma: Vec<f64> = second.iter().map(|s| (s / n).sqrt()).collect();
    let sigma_bar = soft_minimum(&sigma)?;

    let max_moment = orders
        .iter()
        .zip(&higher)
        .map(|(&m, acc)| {
            let mm = acc.iter().fold(0.0f64, |a, &s| a.max(s / n));
            (m, mm.powf(1.0 / m as f64))
        })
        .collect();

    Ok(MomentSummary {
        sigma,
        sigma_bar,
        max_moment,
    })
}

/// Soft minimum of a set of standard deviations:
/// `min_j (2 + sqrt(2 ln p)) / (1/s_(1) + (1 + sqrt(2 ln j)) / s_(j))` over the
/// ascending order statistics `s_(j)`.
///
/// The logarithms are unfloored here so that equal inputs return themselves.
pub fn soft_minimum(sigma: &[f64]) -> Result<f64> {
    if sigma.is_empty() {
        return Err(Error::Empty("soft minimum of no columns"));
    }
    if let Some(col) = sigma.iter().position(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::DegenerateColumn { col });
    }
    let mut sorted = sigma.to_vec();
    sorted.sort_by(f64::total_cmp);
    let p = sorted.len() as f64;
    let numer = 2.0 + (2.0 * p.ln()).sqrt();
    let first = sorted[0];
    let best = sorted
        .iter()
        .enumerate()
        .map(|(idx, &s)| {
            let j = (idx + 1) as f64;
            numer / (1.0 / first + (1.0 + (2.0 * j.ln()).sqrt()) / s)
        })
        .fold(f64::INFINITY, f64::min);
    Ok(best)
}

/// Log-sum-exp smooth maximum `beta^{-1} ln sum_j exp(beta z_j)`.
pub fn softmax(z: &[f64], beta: f64) -> Result<f64> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(invalid("beta", format!("must be positive, got {beta}")));
    }
    if z.is_empty() {
        return Err(Error::Empty("softmax of an empty vector"));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(invalid("z", "must be finite"));
    }
    let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = z.iter().map(|&v| (beta * (v - top)).exp()).sum();
    Ok(top + s.ln() / beta)
}

/// Finite collection of scalar draws, e.g. bootstrap replicates of `T*`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleArray {
    values: Vec<f64>,
    sorted: bool,
}

impl SampleArray {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("sample array"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: 0 });
        }
        Ok(Self {
            values,
            sorted: false,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_sorted(&self) -> bool {
        self.sorted
    }

    pub fn sort(&mut self) {
        if !self.sorted {
            self.values.sort_by(f64::total_cmp);
            self.sorted = true;
        }
    }

    pub fn into_sorted(mut self) -> Self {
        self.sort();
        self
    }

    fn sorted_values(&self) -> std::borrow::Cow<'_, [f64]> {
        if self.sorted {
            std::borrow::Cow::Borrowed(&self.values)
        } else {
            let mut v = self.values.clone();
            v.sort_by(f64::total_cmp);
            std::borrow::Cow::Owned(v)
        }
    }

    /// Empirical CDF `#{x <= t} / B`; requires a sorted array.
    fn ecdf_sorted(sorted: &[f64], t: f64) -> f64 {
        sorted.partition_point(|&x| x <= t) as f64 / sorted.len() as f64
    }

    pub fn ecdf(&self, t: f64) -> f64 {
        Self::ecdf_sorted(&self.sorted_values(), t)
    }
}

/// Rank `ceil(B (1 - alpha))` (1-based) of the order statistic realising the
/// upper `alpha` quantile on `B` draws.
pub fn quantile_rank(len: usize, alpha: f64) -> usize {
    let b = len as f64;
    // Guard against 1000 * 0.95 landing a hair above 950.
    let raw = b * (1.0 - alpha);
    let k = (raw - raw.abs() * 1e-12).ceil();
    (k.max(1.0) as usize).min(len)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")))
    }
}

/// Upper-`alpha` empirical quantile: the smallest sample value `t` with at
/// most a fraction `alpha` of the draws strictly above it.
pub fn empirical_quantile(samples: &SampleArray, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let k = quantile_rank(samples.len(), alpha);
    if samples.is_sorted() {
        return Ok(samples.values[k - 1]);
    }
    let mut work = samples.values.clone();
    let (_, kth, _) = work.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}

/// `sup_t #{ t - eps <= x < t } / B` on the empirical measure.
///
/// Any maximising half-open window can be slid right until its closed left end
/// touches a sample point, so it suffices to scan windows `[x_(i), x_(i) + eps)`.
pub fn anti_concentration_estimate(samples: &SampleArray, eps: f64) -> Result<f64> {
    if !(eps >= 0.0) {
        return Err(invalid("eps", format!("must be non-negative, got {eps}")));
    }
    let sorted = samples.sorted_values();
    let mut best = 0usize;
    let mut hi = 0usize;
    for lo in 0..sorted.len() {
        if hi < lo {
            hi = lo;
        }
        let right = sorted[lo] + eps;
        while hi < sorted.len() && sorted[hi] < right {
            hi += 1;
        }
        best = best.max(hi - lo);
    }
    Ok(best as f64 / sorted.len() as f64)
}

/// Levy-Prokhorov pre-distance at a single `(eps, t)`:
/// `max{0, F_X(t - eps) - F_Y(t), F_Y(t - eps) - F_X(t)}` on empirical CDFs.
pub fn lp_pre_distance_estimate(
    samples_x: &SampleArray,
    samples_y: &SampleArray,
    eps: f64,
    t: f64,
) -> Result<f64> {
    if !(eps >= 0.0) {
        return Err(invalid("eps", format!("must be non-negative, got {eps}")));
    }
    let x = samples_x.sorted_values();
    let y = samples_y.sorted_values();
    Ok(lp_at(&x, &y, eps, t))
}

fn lp_at(x: &[f64], y: &[f64], eps: f64, t: f64) -> f64 {
    let fx = |s| SampleArray::ecdf_sorted(x, s);
    let fy = |s| SampleArray::ecdf_sorted(y, s);
    0.0f64
        .max(fx(t - eps) - fy(t))
        .max(fy(t - eps) - fx(t))
}

/// `sup_t` of [`lp_pre_distance_estimate`].
///
/// Each one-sided term is a right-continuous step function whose upward
/// jumps sit at `x_i + eps` (resp. `y_i + eps`), so the supremum is attained
/// on that finite candidate set. The shifted CDF is read off at the atom
/// itself rather than at `(x_i + eps) - eps`, which can round below `x_i`.
pub fn lp_pre_distance_sup(
    samples_x: &SampleArray,
    samples_y: &SampleArray,
    eps: f64,
) -> Result<f64> {
    if !(eps >= 0.0) {
        return Err(invalid("eps", format!("must be non-negative, got {eps}")));
    }
    let x = samples_x.sorted_values();
    let y = samples_y.sorted_values();
    let one_side = |a: &[f64], b: &[f64]| {
        a.iter()
            .map(|&s| SampleArray::ecdf_sorted(a, s) - SampleArray::ecdf_sorted(b, s + eps))
            .fold(0.0, f64::max)
    };
    Ok(one_side(&x, &y).max(one_side(&y, &x)))
}

/// Two-sample Kolmogorov-Smirnov distance by a merge sweep.
pub fn ks_distance(samples_x: &SampleArray, samples_y: &SampleArray) -> f64 {
    let x = samples_x.sorted_values();
    let y = samples_y.sorted_values();
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < x.len() || j < y.len() {
        let next = match (x.get(i), y.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        while i < x.len() && x[i] <= next {
            i += 1;
        }
        while j < y.len() && y[j] <= next {
            j += 1;
        }
        d = d.max((i as f64 / nx - j as f64 / ny).abs());
    }
    d
}

/// One-sample KS statistic of `samples` against a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &SampleArray, cdf: F) -> f64 {
    let sorted = samples.sorted_values();
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn samples(v: &[f64]) -> SampleArray {
        SampleArray::new(v.to_vec()).unwrap()
    }

    #[test]
    fn max_sum_examples() {
        let d = DataMatrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert_eq!(max_sum_statistic(&d, &[1.0, 2.0]).unwrap(), 0.0);

        let d = DataMatrix::from_rows(&[[1.0, -1.0], [3.0, 1.0]]).unwrap();
        let t = max_sum_statistic(&d, &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(t, 2.0f64.sqrt(), epsilon = 1e-15);

        assert!(matches!(
            max_sum_statistic(&d, &[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(max_sum_statistic(&d, &[0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn max_sum_matches_exhaustive_small_matrices() {
        // Every 2x2 matrix over {-2..2}, plus mixed shapes up to 4x4 via a counter.
        let entries = [-2.0, -1.0, 0.0, 1.0, 2.0];
        for n in 1..=4usize {
            for p in 1..=4usize {
                let cells = n * p;
                let total = if cells <= 6 { 5usize.pow(cells as u32) } else { 4000 };
                for code in 0..total {
                    let mut c = if cells <= 6 { code } else { code.wrapping_mul(2654435761) };
                    let vals: Vec<f64> = (0..cells)
                        .map(|_| {
                            let v = entries[c % 5];
                            c /= 5;
                            v
                        })
                        .collect();
                    let d = DataMatrix::new(n, p, vals.clone()).unwrap();
                    let mean = vec![0.0; p];
                    let mut best = f64::NEG_INFINITY;
                    for j in 0..p {
                        let s: f64 = (0..n).map(|i| vals[i * p + j]).sum();
                        best = best.max(s);
                    }
                    let got = max_sum_statistic(&d, &mean).unwrap();
                    assert_eq!(got, best / (n as f64).sqrt());
                }
            }
        }
    }

    #[test]
    fn soft_minimum_examples() {
        // (2 + sqrt(2 ln 2)) / (1 + (1 + sqrt(2 ln 2)) / 2), the j = 2 branch.
        let r = (2.0 * 2f64.ln()).sqrt();
        let expected = (2.0 + r) / (1.0 + (1.0 + r) / 2.0);
        let got = soft_minimum(&[1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(got, 1.5213, epsilon = 1e-4);

        for p in [1usize, 2, 3, 17, 400] {
            let s = soft_minimum(&vec![0.7; p]).unwrap();
            assert_abs_diff_eq!(s, 0.7, epsilon = 1e-12);
        }
        assert!(matches!(
            soft_minimum(&[1.0, 0.0]),
            Err(Error::DegenerateColumn { col: 1 })
        ));
    }

    #[test]
    fn moment_summary_examples() {
        let d = DataMatrix::from_rows(&[[0.0], [2.0]])
            .unwrap()
            .with_true_mean(vec![1.0])
            .unwrap();
        let m = moment_summary(&d, &[2, 4], Centering::Known).unwrap();
        assert_abs_diff_eq!(m.sigma[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.max_moment[&4], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.sigma_bar, 1.0, epsilon = 1e-15);

        assert!(moment_summary(&d, &[1], Centering::Known).is_err());
        let flat = DataMatrix::from_rows(&[[1.0, 0.0], [1.0, 2.0]]).unwrap();
        assert!(matches!(
            moment_summary(&flat, &[4], Centering::Sample),
            Err(Error::DegenerateColumn { col: 0 })
        ));
    }

    #[test]
    fn moment_summary_uses_sample_or_known_centre() {
        let d = DataMatrix::from_rows(&[[1.0, 0.0], [3.0, 4.0], [5.0, 2.0]])
            .unwrap()
            .with_true_mean(vec![0.0, 0.0])
            .unwrap();
        let s = moment_summary(&d, &[3], Centering::Sample).unwrap();
        // column 0: deviations -2, 0, 2
        assert_abs_diff_eq!(s.sigma[0], (8.0f64 / 3.0).sqrt(), epsilon = 1e-14);
        let k = moment_summary(&d, &[3], Centering::Known).unwrap();
        assert_abs_diff_eq!(k.sigma[0], (35.0f64 / 3.0).sqrt(), epsilon = 1e-14);
        // M_3^3 = max(mean |x|^3) = max((1+27+125)/3, (0+64+8)/3) = 51
        assert_abs_diff_eq!(k.max_moment[&3], 51f64.cbrt(), epsilon = 1e-13);
    }

    #[test]
    fn softmax_examples() {
        assert_abs_diff_eq!(softmax(&[0.0, 0.0], 1.0).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(
            softmax(&[0.0; 7], 3.0).unwrap(),
            7f64.ln() / 3.0,
            epsilon = 1e-15
        );
        assert!(softmax(&[1.0], 0.0).is_err());
        assert!(softmax(&[1.0], -2.0).is_err());
        // no overflow for large inputs
        assert_abs_diff_eq!(softmax(&[1e5, 1e5], 1.0).unwrap(), 1e5 + 2f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(empirical_quantile(&samples(&[4.0, 1.0, 3.0, 2.0]), 0.25).unwrap(), 3.0);
        assert_eq!(empirical_quantile(&samples(&[2.5]), 0.3).unwrap(), 2.5);
        let v: Vec<f64> = (1..=1000).rev().map(f64::from).collect();
        assert_eq!(empirical_quantile(&samples(&v), 0.05).unwrap(), 950.0);
        assert_eq!(
            empirical_quantile(&samples(&v).into_sorted(), 0.05).unwrap(),
            950.0
        );
        assert!(empirical_quantile(&samples(&v), 1.5).is_err());
        assert!(SampleArray::new(vec![]).is_err());
    }

    #[test]
    fn quantile_realises_tail_definition() {
        // inf{t : #(x > t)/B <= alpha}, brute force over the sample points
        let v = [0.3, -1.0, 2.2, 2.2, 0.9, 5.0, -0.4, 1.1, 3.3];
        let s = samples(&v);
        for alpha in [0.05, 0.1, 0.2, 1.0 / 3.0, 0.5, 0.8, 0.95] {
            let mut cands: Vec<f64> = v.to_vec();
            cands.sort_by(f64::total_cmp);
            let oracle = cands
                .iter()
                .copied()
                .find(|&t| v.iter().filter(|&&x| x > t).count() as f64 / v.len() as f64 <= alpha)
                .unwrap();
            assert_eq!(empirical_quantile(&s, alpha).unwrap(), oracle, "alpha {alpha}");
        }
    }

    #[test]
    fn anti_concentration_examples() {
        let s = samples(&[0.0, 0.3, 0.6, 0.9]);
        assert_eq!(anti_concentration_estimate(&s, 0.35).unwrap(), 0.5);
        assert_eq!(anti_concentration_estimate(&s, 0.0).unwrap(), 0.0);
        assert_eq!(anti_concentration_estimate(&s, 1.0).unwrap(), 1.0);
        // ties are counted with multiplicity
        let t = samples(&[1.0, 1.0, 1.0, 5.0]);
        assert_eq!(anti_concentration_estimate(&t, 0.01).unwrap(), 0.75);
        assert!(anti_concentration_estimate(&s, -0.1).is_err());
    }

    #[test]
    fn lp_examples() {
        let x = samples(&[0.0, 1.0]);
        let y = samples(&[2.0, 3.0]);
        assert_eq!(lp_pre_distance_estimate(&x, &y, 0.1, 1.5).unwrap(), 1.0);
        assert_eq!(lp_pre_distance_sup(&x, &x, 0.0).unwrap(), 0.0);
        assert_eq!(ks_distance(&x, &y), 1.0);
    }

    fn brute_force_lp_sup(x: &[f64], y: &[f64], eps: f64) -> f64 {
        // dense grid of t plus every jump location
        let sx = samples(x);
        let sy = samples(y);
        let mut best = 0.0f64;
        let mut ts: Vec<f64> = x
            .iter()
            .chain(y)
            .flat_map(|&v| [v, v + eps, (v + eps).next_up(), (v + eps).next_up().next_up()])
            .collect();
        ts.extend((0..2000).map(|i| -6.0 + i as f64 * 0.006));
        for t in ts {
            best = best.max(lp_pre_distance_estimate(&sx, &sy, eps, t).unwrap());
        }
        best
    }

    proptest! {
        #[test]
        fn softmax_sandwich(z in prop::collection::vec(-50.0f64..50.0, 1..100),
                            beta in prop::sample::select(vec![1.0, 10.0, 100.0])) {
            let f = softmax(&z, beta).unwrap();
            let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(top <= f);
            prop_assert!(f <= top + (z.len() as f64).ln() / beta);
        }

        #[test]
        fn soft_minimum_dominates_minimum(s in prop::collection::vec(0.01f64..10.0, 1..60)) {
            let bar = soft_minimum(&s).unwrap();
            let min = s.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(bar >= min * (1.0 - 1e-15));
        }

        #[test]
        fn quantile_monotone_and_member(v in prop::collection::vec(-10.0f64..10.0, 1..200),
                                        a in 0.01f64..0.99, b in 0.01f64..0.99) {
            let s = samples(&v);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let q_lo = empirical_quantile(&s, lo).unwrap();
            let q_hi = empirical_quantile(&s, hi).unwrap();
            prop_assert!(q_hi <= q_lo);
            prop_assert!(v.contains(&q_lo));
        }

        #[test]
        fn anti_concentration_monotone(v in prop::collection::vec(-3.0f64..3.0, 1..100),
                                       e1 in 0.0f64..2.0, e2 in 0.0f64..2.0) {
            let s = samples(&v);
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            let w_lo = anti_concentration_estimate(&s, lo).unwrap();
            let w_hi = anti_concentration_estimate(&s, hi).unwrap();
            prop_assert!(w_lo <= w_hi);
            prop_assert!((0.0..=1.0).contains(&w_hi));
        }

        #[test]
        fn lp_monotone_in_eps(x in prop::collection::vec(-3.0f64..3.0, 1..40),
                              y in prop::collection::vec(-3.0f64..3.0, 1..40),
                              t in -4.0f64..4.0, e1 in 0.0f64..2.0, e2 in 0.0f64..2.0) {
            let (sx, sy) = (samples(&x), samples(&y));
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(lp_pre_distance_estimate(&sx, &sy, hi, t).unwrap()
                <= lp_pre_distance_estimate(&sx, &sy, lo, t).unwrap());
        }

        #[test]
        fn lp_sup_at_zero_is_ks(x in prop::collection::vec(-3.0f64..3.0, 1..40),
                                y in prop::collection::vec(-3.0f64..3.0, 1..40)) {
            let (sx, sy) = (samples(&x), samples(&y));
            let sup = lp_pre_distance_sup(&sx, &sy, 0.0).unwrap();
            prop_assert_eq!(sup, ks_distance(&sx, &sy));
        }

        #[test]
        fn lp_sup_matches_grid_search(x in prop::collection::vec(-3.0f64..3.0, 1..15),
                                      y in prop::collection::vec(-3.0f64..3.0, 1..15),
                                      eps in 0.0f64..1.0) {
            let got = lp_pre_distance_sup(&samples(&x), &samples(&y), eps).unwrap();
            prop_assert_eq!(got, brute_force_lp_sup(&x, &y, eps));
        }
    }
}
