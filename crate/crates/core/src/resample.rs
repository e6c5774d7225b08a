//! Empirical and multiplier (wild) bootstrap for the coordinate-max of sums.
//!
//! Replicates never materialise a resampled matrix: each bootstrap draw is a
//! weight vector `w` over the rows of the centred sample, and the replicate
//! statistic is `max_j sum_i w_i (X_ij - Xbar_j) / sqrt(n)`. For the empirical
//! bootstrap `w` holds multinomial resampling counts, for the multiplier
//! bootstrap it holds i.i.d. multipliers.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{invalid, Error, Result};
use crate::rng::{substream, StreamRng};
use crate::stats::SampleArray;

/// Law of the bootstrap multipliers `W_i` (mean 0, variance 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MultiplierKind {
    Gaussian,
    Rademacher,
    /// Mammen's two-point law, `P{W = (1 +- sqrt 5)/2} = (sqrt 5 -+ 1)/(2 sqrt 5)`.
    Mammen,
    TwoPoint { values: (f64, f64), probs: (f64, f64) },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierDistribution {
    kind: MultiplierKind,
    /// Sub-Gaussian proxy `tau_0`; carried as metadata only.
    pub subgaussian_proxy: Option<f64>,
}

const MOMENT_TOL: f64 = 1e-9;

impl MultiplierDistribution {
    pub fn gaussian() -> Self {
        Self::from_kind(MultiplierKind::Gaussian)
    }

    pub fn rademacher() -> Self {
        Self::from_kind(MultiplierKind::Rademacher)
    }

    pub fn mammen() -> Self {
        Self::from_kind(MultiplierKind::Mammen)
    }

    /// Custom two-point law; `p1 + p2 = 1`, both in `(0, 1)`, and the law must
    /// have mean 0 and variance 1.
    pub fn two_point(values: (f64, f64), probs: (f64, f64)) -> Result<Self> {
        let (p1, p2) = probs;
        if !(p1 > 0.0 && p1 < 1.0 && p2 > 0.0 && p2 < 1.0) {
            return Err(invalid("probs", "both probabilities must lie in (0, 1)"));
        }
        if ((p1 + p2) - 1.0).abs() > 1e-12 {
            return Err(invalid("probs", format!("sum to {} instead of 1", p1 + p2)));
        }
        if !values.0.is_finite() || !values.1.is_finite() {
            return Err(invalid("values", "must be finite"));
        }
        let d = Self::from_kind(MultiplierKind::TwoPoint { values, probs });
        let (m1, m2) = (d.moment(1), d.moment(2));
        if m1.abs() > MOMENT_TOL || (m2 - 1.0).abs() > MOMENT_TOL {
            return Err(invalid(
                "values",
                format!("two-point law has mean {m1} and second moment {m2}; need 0 and 1"),
            ));
        }
        Ok(d)
    }

    /// Two-point law with support `(w1, w2)` whose probabilities are fixed by
    /// the mean-zero constraint.
    pub fn two_point_centered(w1: f64, w2: f64) -> Result<Self> {
        if !(w1 > 0.0 && w2 < 0.0) {
            return Err(invalid("values", "need w1 > 0 > w2"));
        }
        let p1 = -w2 / (w1 - w2);
        Self::two_point((w1, w2), (p1, 1.0 - p1))
    }

    fn from_kind(kind: MultiplierKind) -> Self {
        Self {
            kind,
            subgaussian_proxy: None,
        }
    }

    pub fn with_subgaussian_proxy(mut self, tau0: f64) -> Result<Self> {
        if !(tau0 > 0.0) {
            return Err(invalid("subgaussian_proxy", "must be positive"));
        }
        self.subgaussian_proxy = Some(tau0);
        Ok(self)
    }

    pub fn kind(&self) -> MultiplierKind {
        self.kind
    }

    /// Support and probabilities for the two-point kinds.
    pub fn two_point_law(&self) -> Option<([f64; 2], [f64; 2])> {
        match self.kind {
            MultiplierKind::Rademacher => Some(([1.0, -1.0], [0.5, 0.5])),
            MultiplierKind::Mammen => {
                let s5 = 5f64.sqrt();
                Some((
                    [(1.0 + s5) / 2.0, (1.0 - s5) / 2.0],
                    [(s5 - 1.0) / (2.0 * s5), (s5 + 1.0) / (2.0 * s5)],
                ))
            }
            MultiplierKind::TwoPoint { values, probs } => {
                Some(([values.0, values.1], [probs.0, probs.1]))
            }
            MultiplierKind::Gaussian => None,
        }
    }

    /// Population raw moment `E W^k`.
    pub fn moment(&self, k: u32) -> f64 {
        match self.two_point_law() {
            Some((w, pr)) => pr[0] * w[0].powi(k as i32) + pr[1] * w[1].powi(k as i32),
            None => {
                if k % 2 == 1 {
                    0.0
                } else {
                    // (k - 1)!!
                    (1..k).step_by(2).map(f64::from).product()
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            MultiplierKind::Gaussian => rng.sample(StandardNormal),
            MultiplierKind::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            _ => {
                let (w, pr) = self.two_point_law().expect("two-point kind");
                if rng.random::<f64>() < pr[0] {
                    w[0]
                } else {
                    w[1]
                }
            }
        }
    }
}

/// One draw from `dist`.
pub fn sample_multiplier<R: Rng + ?Sized>(dist: &MultiplierDistribution, rng: &mut R) -> f64 {
    dist.sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BootstrapScheme {
    Empirical,
    Multiplier(MultiplierDistribution),
}

impl BootstrapScheme {
    pub fn gaussian() -> Self {
        Self::Multiplier(MultiplierDistribution::gaussian())
    }

    pub fn rademacher() -> Self {
        Self::Multiplier(MultiplierDistribution::rademacher())
    }

    pub fn mammen() -> Self {
        Self::Multiplier(MultiplierDistribution::mammen())
    }

    /// The four schemes of the coverage study, in table order (GB, MB, RB, EB).
    pub fn standard_set() -> Vec<Self> {
        vec![
            Self::gaussian(),
            Self::mammen(),
            Self::rademacher(),
            Self::Empirical,
        ]
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for BootstrapScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BootstrapScheme::Empirical => f.write_str("empirical"),
            BootstrapScheme::Multiplier(d) => match d.kind {
                MultiplierKind::Gaussian => f.write_str("gaussian"),
                MultiplierKind::Rademacher => f.write_str("rademacher"),
                MultiplierKind::Mammen => f.write_str("mammen"),
                MultiplierKind::TwoPoint { values, probs } => {
                    write!(f, "two-point({},{},{})", values.0, values.1, probs.0)
                }
            },
        }
    }
}

impl FromStr for BootstrapScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "empirical" | "eb" => return Ok(Self::Empirical),
            "gaussian" | "gb" => return Ok(Self::gaussian()),
            "rademacher" | "rb" => return Ok(Self::rademacher()),
            "mammen" | "mb" => return Ok(Self::mammen()),
            _ => {}
        }
        let inner = t
            .strip_prefix("two-point(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Error::Parse(format!("unknown bootstrap scheme `{s}`")))?;
        let parts: Vec<f64> = inner
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("bad two-point parameters in `{s}`: {e}")))?;
        match parts.as_slice() {
            [w1, w2, p1] => Ok(Self::Multiplier(MultiplierDistribution::two_point(
                (*w1, *w2),
                (*p1, 1.0 - *p1),
            )?)),
            _ => Err(Error::Parse(format!(
                "two-point scheme needs (w1,w2,p1), got `{s}`"
            ))),
        }
    }
}

impl Serialize for BootstrapScheme {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BootstrapScheme {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Rows drawn i.i.d. with replacement from `{X_k - Xbar_n}`.
pub fn empirical_resample<R: Rng + ?Sized>(data: &DataMatrix, rng: &mut R) -> DataMatrix {
    let centered = data
        .centered(&data.column_means())
        .expect("column means have matching length");
    let (n, p) = (data.nrows(), data.ncols());
    let mut values = Vec::with_capacity(n * p);
    for _ in 0..n {
        let k = rng.random_range(0..n);
        values.extend_from_slice(centered.row(k));
    }
    DataMatrix::from_parts_unchecked(n, p, values)
}

/// Row `i` of the output is `W_i (X_i - Xbar_n)` with fresh multipliers.
pub fn multiplier_resample<R: Rng + ?Sized>(
    data: &DataMatrix,
    dist: &MultiplierDistribution,
    rng: &mut R,
) -> DataMatrix {
    let centered = data
        .centered(&data.column_means())
        .expect("column means have matching length");
    let weights: Vec<f64> = (0..data.nrows()).map(|_| dist.sample(rng)).collect();
    apply_multipliers(&centered, &weights).expect("one weight per row")
}

/// Scales row `i` of `centered` by `weights[i]`.
pub fn apply_multipliers(centered: &DataMatrix, weights: &[f64]) -> Result<DataMatrix> {
    if weights.len() != centered.nrows() {
        return Err(Error::DimensionMismatch {
            expected: centered.nrows(),
            got: weights.len(),
        });
    }
    let values = centered
        .rows()
        .zip(weights)
        .flat_map(|(row, &w)| row.iter().map(move |x| w * x))
        .collect();
    Ok(DataMatrix::from_parts_unchecked(
        centered.nrows(),
        centered.ncols(),
        values,
    ))
}

/// Replicates processed together so each loaded row feeds several accumulators.
const BLOCK: usize = 8;

/// Chunk of replicates handed to one worker by the parallel path.
const PAR_CHUNK: usize = 64;

/// Mean-centred copy of a dataset, shared read-only by all replicates.
#[derive(Debug, Clone)]
pub struct CenteredSample {
    n: usize,
    p: usize,
    values: Vec<f64>,
}

impl CenteredSample {
    pub fn new(data: &DataMatrix) -> Self {
        let c = data
            .centered(&data.column_means())
            .expect("column means have matching length");
        Self {
            n: c.nrows(),
            p: c.ncols(),
            values: c.values().to_vec(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.p
    }

    fn fill_weights(&self, scheme: &BootstrapScheme, rng: &mut StreamRng, w: &mut [f64]) {
        match scheme {
            BootstrapScheme::Empirical => {
                w.iter_mut().for_each(|x| *x = 0.0);
                for _ in 0..self.n {
                    w[rng.random_range(0..self.n)] += 1.0;
                }
            }
            BootstrapScheme::Multiplier(d) => {
                for x in w.iter_mut() {
                    *x = d.sample(rng);
                }
            }
        }
    }

    /// Writes the statistics of replicates `start..start + out.len()` into `out`.
    ///
    /// Replicate `b` draws from `substream(seed, [b])`, and each accumulator
    /// sums rows in index order, so the value of a replicate does not depend on
    /// how the range was split.
    pub fn replicate_range(
        &self,
        scheme: &BootstrapScheme,
        seed: u64,
        start: usize,
        out: &mut [f64],
    ) {
        let (n, p) = (self.n, self.p);
        let scale = 1.0 / (n as f64).sqrt();
        let mut weights = vec![0.0; BLOCK * n];
        let mut sums = vec![0.0; BLOCK * p];
        for (blk, out_blk) in out.chunks_mut(BLOCK).enumerate() {
            let m = out_blk.len();
            for r in 0..m {
                let b = start + blk * BLOCK + r;
                let mut rng = substream(seed, &[b as u64]);
                self.fill_weights(scheme, &mut rng, &mut weights[r * n..(r + 1) * n]);
            }
            sums[..m * p].iter_mut().for_each(|s| *s = 0.0);
            for (i, row) in self.values.chunks_exact(p).enumerate() {
                for r in 0..m {
                    let w = weights[r * n + i];
                    if w == 0.0 {
                        continue;
                    }
                    for (s, x) in sums[r * p..(r + 1) * p].iter_mut().zip(row) {
                        *s += w * x;
                    }
                }
            }
            for (r, o) in out_blk.iter_mut().enumerate() {
                let top = sums[r * p..(r + 1) * p]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                *o = top * scale;
            }
        }
    }

    pub fn statistics(&self, scheme: &BootstrapScheme, b: usize, seed: u64) -> Vec<f64> {
        let mut out = vec![0.0; b];
        self.replicate_range(scheme, seed, 0, &mut out);
        out
    }

    /// Same values as [`Self::statistics`], computed on the rayon pool.
    pub fn statistics_par(&self, scheme: &BootstrapScheme, b: usize, seed: u64) -> Vec<f64> {
        let mut out = vec![0.0; b];
        out.par_chunks_mut(PAR_CHUNK)
            .enumerate()
            .for_each(|(c, chunk)| self.replicate_range(scheme, seed, c * PAR_CHUNK, chunk));
        out
    }
}

/// `B` bootstrap replicates of `T*` for one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDraw {
    pub statistics: SampleArray,
    pub scheme: BootstrapScheme,
    pub seed: u64,
    pub b: usize,
}

pub fn bootstrap_statistics(
    data: &DataMatrix,
    scheme: &BootstrapScheme,
    b: usize,
    seed: u64,
) -> Result<BootstrapDraw> {
    draw_with(data, scheme, b, seed, false)
}

/// Parallel variant of [`bootstrap_statistics`]; output is bit-identical.
pub fn bootstrap_statistics_par(
    data: &DataMatrix,
    scheme: &BootstrapScheme,
    b: usize,
    seed: u64,
) -> Result<BootstrapDraw> {
    draw_with(data, scheme, b, seed, true)
}

fn draw_with(
    data: &DataMatrix,
    scheme: &BootstrapScheme,
    b: usize,
    seed: u64,
    parallel: bool,
) -> Result<BootstrapDraw> {
    if b == 0 {
        return Err(invalid("B", "need at least one bootstrap replicate"));
    }
    let cs = CenteredSample::new(data);
    let stats = if parallel {
        cs.statistics_par(scheme, b, seed)
    } else {
        cs.statistics(scheme, b, seed)
    };
    Ok(BootstrapDraw {
        statistics: SampleArray::new(stats)?,
        scheme: *scheme,
        seed,
        b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservativeQuantile {
    pub value: f64,
    /// Set when `t* < 0`: inflating a negative threshold tightens the band.
    pub negative_base: bool,
}

/// `(1 + inflation) * t_star`.
pub fn conservative_quantile(t_star: f64, inflation: f64) -> Result<ConservativeQuantile> {
    if !(inflation >= 0.0) || !inflation.is_finite() {
        return Err(invalid(
            "inflation",
            format!("must be a finite non-negative number, got {inflation}"),
        ));
    }
    Ok(ConservativeQuantile {
        value: (1.0 + inflation) * t_star,
        negative_base: t_star < 0.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThirdMomentReport {
    pub matched: bool,
    pub max_discrepancy: f64,
    /// Number of tensor entries compared.
    pub entries_checked: usize,
    pub multiplier_third_moment: f64,
}

/// Compares `E W^3 * A` with `A`, where `A` is the averaged third-moment
/// tensor of the mean-centred rows.
///
/// All `p^3` entries are checked when `p^3 <= index_budget`; otherwise a fixed
/// pseudorandom set of `index_budget` index triples.
pub fn third_moment_match_check(
    data: &DataMatrix,
    dist: &MultiplierDistribution,
    tolerance: f64,
    index_budget: usize,
) -> Result<ThirdMomentReport> {
    if index_budget == 0 {
        return Err(invalid("index_budget", "must be positive"));
    }
    if !(tolerance >= 0.0) {
        return Err(invalid("tolerance", "must be non-negative"));
    }
    let c = data.centered(&data.column_means())?;
    let (n, p) = (c.nrows(), c.ncols());
    let w3 = dist.moment(3);
    let factor = (w3 - 1.0).abs();

    let entry = |j: usize, k: usize, l: usize| -> f64 {
        c.rows().map(|r| r[j] * r[k] * r[l]).sum::<f64>() / n as f64
    };

    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let full = (p as u128).pow(3) <= index_budget as u128;
    if full {
        for j in 0..p {
            for k in j..p {
                for l in k..p {
                    // symmetric tensor: one representative per orbit
                    worst = worst.max(factor * entry(j, k, l).abs());
                    checked += 1;
                }
            }
        }
    } else {
        let mut rng = substream(0x7431_6d6f_6d65_6e74, &[p as u64, n as u64]);
        for _ in 0..index_budget {
            let (j, k, l) = (
                rng.random_range(0..p),
                rng.random_range(0..p),
                rng.random_range(0..p),
            );
            worst = worst.max(factor * entry(j, k, l).abs());
            checked += 1;
        }
    }
    Ok(ThirdMomentReport {
        matched: worst <= tolerance,
        max_discrepancy: worst,
        entries_checked: checked,
        multiplier_third_moment: w3,
    })
}
