//! Monte Carlo coverage study of bootstrap quantiles for `T_n`.
//!
//! Replication `k` draws its dataset from `derive_seed(seed, [k, DATA])` and
//! the bootstrap of scheme `s` from `derive_seed(seed, [k, tag(s)])`, so the
//! outcome depends only on the configuration, never on the worker count.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use super::copula::{simulate_dataset, CovarianceSpec, DesignSlice, MarginalSpec};
use super::report::{CoverageReport, CoverageRow};
use crate::error::{invalid, Error, Result};
use crate::resample::{conservative_quantile, BootstrapScheme, CenteredSample};
use crate::rng::derive_seed;
use crate::stats::{empirical_quantile, max_sum_statistic, SampleArray};

/// Largest `K * B * n * p` accepted without `allow_long`.
pub const WORK_GUARD: f64 = 1e11;

const DATA_TAG: u64 = 0xDA7A;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "defaults::n")]
    pub n: usize,
    #[serde(default = "defaults::p")]
    pub p: usize,
    #[serde(default = "defaults::replications", alias = "K")]
    pub replications: usize,
    #[serde(default = "defaults::bootstrap_draws", alias = "B")]
    pub bootstrap_draws: usize,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    /// Quantile inflations `eps0`; a scalar is accepted in config files.
    #[serde(default = "defaults::inflation", deserialize_with = "one_or_many")]
    pub inflation: Vec<f64>,
    #[serde(default = "defaults::covariance")]
    pub covariance: CovarianceSpec,
    #[serde(default = "defaults::marginal")]
    pub marginal: MarginalSpec,
    #[serde(default = "BootstrapScheme::standard_set")]
    pub schemes: Vec<BootstrapScheme>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub allow_long: bool,
}

mod defaults {
    use super::*;

    pub fn n() -> usize {
        200
    }
    pub fn p() -> usize {
        200
    }
    pub fn replications() -> usize {
        1000
    }
    pub fn bootstrap_draws() -> usize {
        500
    }
    pub fn alpha() -> f64 {
        0.05
    }
    pub fn inflation() -> Vec<f64> {
        vec![0.01]
    }
    pub fn covariance() -> CovarianceSpec {
        CovarianceSpec::Identity
    }
    pub fn marginal() -> MarginalSpec {
        MarginalSpec::Gamma { shape: 1.0 }
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(f64),
        Many(Vec<f64>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(v) => v,
    })
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: defaults::n(),
            p: defaults::p(),
            replications: defaults::replications(),
            bootstrap_draws: defaults::bootstrap_draws(),
            alpha: defaults::alpha(),
            inflation: defaults::inflation(),
            covariance: defaults::covariance(),
            marginal: defaults::marginal(),
            schemes: BootstrapScheme::standard_set(),
            seed: None,
            workers: None,
            allow_long: false,
        }
    }
}

impl ExperimentConfig {
    /// Named configurations. The `paper-*` presets use `n = 200`, `p = 1000`,
    /// `K = 10^4`, `B = 10^3` and need `allow_long`; the `desk-*` presets use
    /// the defaults.
    pub fn preset(name: &str) -> Option<Self> {
        let full = |covariance| Self {
            p: 1000,
            replications: 10_000,
            bootstrap_draws: 1000,
            covariance,
            ..Self::default()
        };
        let desk = |covariance| Self {
            covariance,
            ..Self::default()
        };
        let sweep = |mut c: Self| {
            c.inflation = vec![0.0, 0.01, 0.05, 0.1];
            c.schemes = vec![BootstrapScheme::mammen(), BootstrapScheme::Empirical];
            c
        };
        let setting = |tag: &str| -> Option<CovarianceSpec> {
            Some(match tag {
                "a" => CovarianceSpec::Identity,
                "b" => CovarianceSpec::Ar1 { rho: 0.2 },
                "c" => CovarianceSpec::Ar1 { rho: 0.8 },
                "d" => CovarianceSpec::CompoundSymmetry { rho: 0.8 },
                _ => return None,
            })
        };
        let cs02 = CovarianceSpec::CompoundSymmetry { rho: 0.2 };
        let cs08 = CovarianceSpec::CompoundSymmetry { rho: 0.8 };
        match name {
            "paper-figure2-d" => Some(full(cs02)),
            "paper-table2" => Some(sweep(full(cs08))),
            "desk-figure2-d" => Some(desk(cs02)),
            "desk-table2" => Some(sweep(desk(cs08))),
            _ => {
                if let Some(tag) = name.strip_prefix("paper-table1-") {
                    setting(tag).map(full)
                } else if let Some(tag) = name.strip_prefix("desk-table1-") {
                    setting(tag).map(desk)
                } else {
                    None
                }
            }
        }
    }

    pub const PRESETS: [&'static str; 12] = [
        "paper-table1-a",
        "paper-table1-b",
        "paper-table1-c",
        "paper-table1-d",
        "paper-figure2-d",
        "paper-table2",
        "desk-table1-a",
        "desk-table1-b",
        "desk-table1-c",
        "desk-table1-d",
        "desk-figure2-d",
        "desk-table2",
    ];

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(invalid("n, p", "must be at least 1"));
        }
        if self.replications == 0 {
            return Err(invalid("replications", "need K >= 1"));
        }
        if self.bootstrap_draws == 0 {
            return Err(invalid("bootstrap_draws", "need B >= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(
                "alpha",
                format!("must lie in (0, 1), got {}", self.alpha),
            ));
        }
        if self.inflation.is_empty() {
            return Err(invalid("inflation", "need at least one value"));
        }
        if let Some(e) = self.inflation.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
            return Err(invalid(
                "inflation",
                format!("must be finite and non-negative, got {e}"),
            ));
        }
        if self.schemes.is_empty() {
            return Err(invalid("schemes", "need at least one bootstrap scheme"));
        }
        if self.workers == Some(0) {
            return Err(invalid("workers", "must be at least 1"));
        }
        self.covariance.validate()?;
        self.marginal.validate()?;
        Ok(())
    }

    /// `K * B * n * p`.
    pub fn workload(&self) -> f64 {
        self.replications as f64 * self.bootstrap_draws as f64 * self.n as f64 * self.p as f64
    }

    pub fn check_workload(&self) -> Result<()> {
        let work = self.workload();
        if work > WORK_GUARD && !self.allow_long {
            return Err(Error::ResourceGuard {
                work,
                limit: WORK_GUARD,
            });
        }
        Ok(())
    }

    pub fn design(&self) -> DesignSlice {
        DesignSlice {
            n: self.n,
            p: self.p,
            covariance: self.covariance,
            marginal: self.marginal,
        }
    }
}

/// Per-replication outcome: `T_n` and one bootstrap quantile per scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub t_n: f64,
    pub t_star: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: CoverageReport,
    pub records: Vec<ReplicationRecord>,
    /// `(replication, scheme, inflation)` cells where the inflated threshold
    /// misses but the exact one covers although `t* >= 0`.
    pub dominance_violations: usize,
    /// `(replication, scheme)` cells with `t* < 0`.
    pub negative_thresholds: usize,
    pub runtime: Duration,
}

/// Stable stream tag for a scheme, independent of its position in the list.
fn scheme_tag(scheme: &BootstrapScheme) -> u64 {
    // FNV-1a over the label
    scheme
        .label()
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
        })
}

/// One replication of the study.
pub fn run_replication(config: &ExperimentConfig, seed: u64, k: usize) -> Result<ReplicationRecord> {
    let data_seed = derive_seed(seed, &[k as u64, DATA_TAG]);
    let data = simulate_dataset(
        config.n,
        config.p,
        &config.covariance,
        &config.marginal,
        data_seed,
    )?;
    let mean = vec![config.marginal.mean(); config.p];
    let t_n = max_sum_statistic(&data, &mean)?;
    let centred = CenteredSample::new(&data);
    let t_star = config
        .schemes
        .iter()
        .map(|s| {
            let b_seed = derive_seed(seed, &[k as u64, scheme_tag(s)]);
            let stats = SampleArray::new(centred.statistics(s, config.bootstrap_draws, b_seed))?;
            empirical_quantile(&stats, config.alpha)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicationRecord { t_n, t_star })
}

pub fn run_coverage_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    config.check_workload()?;
    let seed = config
        .seed
        .ok_or_else(|| invalid("seed", "the experiment needs an explicit seed"))?;
    let start = Instant::now();
    let work = || {
        (0..config.replications)
            .into_par_iter()
            .map(|k| run_replication(config, seed, k))
            .collect::<Result<Vec<_>>>()
    };
    let records = match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| invalid("workers", e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    let runtime = start.elapsed();
    let summary = summarize(config, seed, &records)?;
    Ok(ExperimentOutcome {
        report: summary.report,
        records,
        dominance_violations: summary.dominance_violations,
        negative_thresholds: summary.negative_thresholds,
        runtime,
    })
}

pub struct Summary {
    pub report: CoverageReport,
    pub dominance_violations: usize,
    pub negative_thresholds: usize,
}

/// Binomial standard error `sqrt(f (1 - f) / K)`.
pub fn binomial_se(freq: f64, k: usize) -> f64 {
    (freq * (1.0 - freq) / k as f64).sqrt()
}

/// Coverage frequencies of every scheme at every inflation in `config`.
///
/// Ties `T_n = threshold` count as covered.
pub fn summarize(
    config: &ExperimentConfig,
    seed: u64,
    records: &[ReplicationRecord],
) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::Empty("no replications to summarise"));
    }
    if let Some(r) = records.iter().find(|r| r.t_star.len() != config.schemes.len()) {
        return Err(Error::DimensionMismatch {
            expected: config.schemes.len(),
            got: r.t_star.len(),
        });
    }
    let k = records.len();
    let mut rows = Vec::new();
    let mut violations = 0;
    let negative = records
        .iter()
        .flat_map(|r| &r.t_star)
        .filter(|t| **t < 0.0)
        .count();
    for (s, scheme) in config.schemes.iter().enumerate() {
        let exact_hits = records.iter().filter(|r| r.t_n <= r.t_star[s]).count();
        for &eps in &config.inflation {
            let mut hits = 0;
            for r in records {
                let thr = conservative_quantile(r.t_star[s], eps)?;
                let covered = r.t_n <= thr.value;
                hits += covered as usize;
                if !thr.negative_base && !covered && r.t_n <= r.t_star[s] {
                    violations += 1;
                }
            }
            let conservative = hits as f64 / k as f64;
            rows.push(CoverageRow {
                scheme: scheme.label(),
                alpha: config.alpha,
                inflation: eps,
                exact_freq: exact_hits as f64 / k as f64,
                conservative_freq: conservative,
                mc_se: binomial_se(conservative, k),
                k,
                b: config.bootstrap_draws,
                n: config.n,
                p: config.p,
                covariance: config.covariance.to_string(),
                marginal: config.marginal.to_string(),
                seed,
            });
        }
    }
    Ok(Summary {
        report: CoverageReport { rows },
        dominance_violations: violations,
        negative_thresholds: negative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            n: 15,
            p: 6,
            replications: 40,
            bootstrap_draws: 60,
            inflation: vec![0.0, 0.01, 0.1],
            seed: Some(99),
            ..Default::default()
        }
    }

    #[test]
    fn defaults_and_presets() {
        let c: ExperimentConfig = toml::from_str("covariance = \"identity\"").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!((c.n, c.p, c.replications, c.bootstrap_draws), (200, 200, 1000, 500));
        assert_eq!(c.inflation, vec![0.01]);
        assert_eq!(c.schemes.len(), 4);
        let p = ExperimentConfig::preset("paper-table1-a").unwrap();
        assert_eq!((p.n, p.p, p.replications, p.bootstrap_draws, p.alpha), (200, 1000, 10_000, 1000, 0.05));
        assert!(p.check_workload().is_err());
        for name in ExperimentConfig::PRESETS {
            ExperimentConfig::preset(name).unwrap().validate().unwrap();
        }
        assert!(ExperimentConfig::preset("paper-table1-e").is_none());
        assert!(toml::from_str::<ExperimentConfig>("bogus = 1").is_err());
        let c: ExperimentConfig = toml::from_str("K = 10\nB = 20\ninflation = [0.0, 0.1]").unwrap();
        assert_eq!((c.replications, c.bootstrap_draws), (10, 20));
        assert_eq!(c.inflation, vec![0.0, 0.1]);
        let bad = ExperimentConfig { alpha: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn experiment_is_schedule_independent() {
        let one = run_coverage_experiment(&ExperimentConfig { workers: Some(1), ..tiny() }).unwrap();
        let three = run_coverage_experiment(&ExperimentConfig { workers: Some(3), ..tiny() }).unwrap();
        assert_eq!(one.records, three.records);
        assert_eq!(one.report, three.report);
    }

    #[test]
    fn zero_inflation_matches_exact_and_sweep_is_monotone() {
        let out = run_coverage_experiment(&tiny()).unwrap();
        assert_eq!(out.dominance_violations, 0);
        for s in BootstrapScheme::standard_set() {
            let rows: Vec<_> = out.report.rows.iter().filter(|r| r.scheme == s.label()).collect();
            assert_eq!(rows.len(), 3);
            assert_eq!(rows[0].conservative_freq, rows[0].exact_freq);
            assert!(rows.windows(2).all(|w| w[0].conservative_freq <= w[1].conservative_freq));
            for r in &rows {
                assert!((0.0..=1.0).contains(&r.exact_freq));
                assert_eq!(r.k, 40);
            }
        }
    }

    #[test]
    fn scheme_streams_do_not_depend_on_list_order() {
        let all = run_coverage_experiment(&tiny()).unwrap();
        let only_eb = run_coverage_experiment(&ExperimentConfig {
            schemes: vec![BootstrapScheme::Empirical],
            ..tiny()
        })
        .unwrap();
        for (a, b) in all.records.iter().zip(&only_eb.records) {
            assert_eq!(a.t_n, b.t_n);
            assert_eq!(a.t_star[3], b.t_star[0]);
        }
    }

    #[test]
    fn guard_and_seed_requirements() {
        let big = ExperimentConfig {
            replications: 10_000,
            bootstrap_draws: 1000,
            p: 1000,
            seed: Some(1),
            ..Default::default()
        };
        assert!(matches!(run_coverage_experiment(&big), Err(Error::ResourceGuard { .. })));
        let unseeded = ExperimentConfig { seed: None, ..tiny() };
        assert!(run_coverage_experiment(&unseeded).is_err());
    }

    #[test]
    fn summarize_counts_ties_as_covered() {
        let cfg = ExperimentConfig {
            schemes: vec![BootstrapScheme::mammen()],
            inflation: vec![0.0, 0.5],
            ..tiny()
        };
        let recs = vec![
            ReplicationRecord { t_n: 1.0, t_star: vec![1.0] },
            ReplicationRecord { t_n: 2.0, t_star: vec![1.0] },
            ReplicationRecord { t_n: -1.0, t_star: vec![-0.9] },
            ReplicationRecord { t_n: 1.2, t_star: vec![1.0] },
        ];
        let s = summarize(&cfg, 5, &recs).unwrap();
        assert_eq!(s.report.rows[0].exact_freq, 0.5);
        assert_eq!(s.report.rows[0].conservative_freq, 0.5);
        // 1.5 now covers the 1.2 draw; -1.35 loses the negative-threshold one
        assert_eq!(s.report.rows[1].conservative_freq, 0.5);
        assert_eq!(s.negative_thresholds, 1);
        assert_eq!(s.dominance_violations, 0);
        assert!((s.report.rows[1].mc_se - 0.25).abs() < 1e-15);
    }
}
