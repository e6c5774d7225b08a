//! Exhaustive checks of the coherent Lindeberg interpolation identities.
//!
//! Everything here enumerates all `n!` orderings of the rows and takes exact
//! weighted expectations over Bernoulli mixing and discrete row laws, so the
//! only error is floating-point roundoff. Test functions depend on the rows
//! only through their sum, which makes them and all their derivatives
//! invariant under row permutations.

use rand::Rng;

use crate::data::DataMatrix;
use crate::error::{invalid, Error, Result};
use crate::rng::substream;

/// Largest `n` accepted by the enumerators (`5! = 120` orderings).
pub const MAX_ROWS: usize = 5;

const RECURSION_TOL: f64 = 1e-12;

/// Row weights `q_i` and Bernoulli parameters `theta_i`, `i = 1..n`, linked by
/// `(n - i) q_i theta_i = i q_{i+1} (1 - theta_{i+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightScheme {
    q: Vec<f64>,
    theta: Vec<f64>,
}

impl WeightScheme {
    /// Validates ranges and the recursion.
    pub fn try_new(q: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        let s = Self::unchecked(q, theta)?;
        let r = s.recursion_residual();
        if r > RECURSION_TOL {
            return Err(invalid(
                "theta",
                format!("weight recursion violated by {r:.3e}"),
            ));
        }
        Ok(s)
    }

    /// Checks shapes and ranges but not the recursion; used for negative
    /// controls.
    pub fn unchecked(q: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::Empty("weight scheme needs n >= 1"));
        }
        if q.len() != theta.len() {
            return Err(Error::DimensionMismatch {
                expected: q.len(),
                got: theta.len(),
            });
        }
        if let Some(v) = q.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(invalid("q", format!("weights must be positive, got {v}")));
        }
        if let Some((i, &v)) = theta.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InfeasibleTheta {
                index: i + 1,
                value: v,
            });
        }
        Ok(Self { q, theta })
    }

    /// `q = 1`, `theta_i = i / (n + 1)`.
    pub fn uniform(n: usize) -> Self {
        let d = (n + 1) as f64;
        Self {
            q: vec![1.0; n],
            theta: (1..=n).map(|i| i as f64 / d).collect(),
        }
    }

    /// `q_i = (n + 1 - i) / (n + 1)`, `theta_i = i / (n + 2)`.
    pub fn tapered(n: usize) -> Self {
        let (d1, d2) = ((n + 1) as f64, (n + 2) as f64);
        Self {
            q: (1..=n).map(|i| (n + 1 - i) as f64 / d1).collect(),
            theta: (1..=n).map(|i| i as f64 / d2).collect(),
        }
    }

    /// Solves the recursion downwards from `theta_n`.
    pub fn theta_from_q(q: Vec<f64>, theta_n: f64) -> Result<Self> {
        let n = q.len();
        if n == 0 {
            return Err(Error::Empty("weight scheme needs n >= 1"));
        }
        if let Some(v) = q.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(invalid("q", format!("weights must be positive, got {v}")));
        }
        if !(0.0..=1.0).contains(&theta_n) {
            return Err(Error::InfeasibleTheta {
                index: n,
                value: theta_n,
            });
        }
        let mut theta = vec![0.0; n];
        theta[n - 1] = theta_n;
        for i in (1..n).rev() {
            // 1-based i: theta_i from theta_{i+1}
            let t = i as f64 * q[i] * (1.0 - theta[i]) / ((n - i) as f64 * q[i - 1]);
            if !(0.0..=1.0 + 1e-15).contains(&t) {
                return Err(Error::InfeasibleTheta { index: i, value: t });
            }
            theta[i - 1] = t.min(1.0);
        }
        Ok(Self { q, theta })
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// `max_i |(n - i) q_i theta_i - i q_{i+1} (1 - theta_{i+1})|`.
    pub fn recursion_residual(&self) -> f64 {
        let n = self.n();
        (1..n)
            .map(|i| {
                let lhs = (n - i) as f64 * self.q[i - 1] * self.theta[i - 1];
                let rhs = i as f64 * self.q[i] * (1.0 - self.theta[i]);
                (lhs - rhs).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Copy with `theta_index` (1-based) shifted by `by`, clamped to `[0, 1]`.
    pub fn perturbed(&self, theta_index: usize, by: f64) -> Self {
        let mut s = self.clone();
        let t = &mut s.theta[theta_index - 1];
        *t = (*t + by).clamp(0.0, 1.0);
        s
    }
}

/// Functions of the row sum `s = x_1 + ... + x_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    /// `sum_j s_j`.
    Sum,
    /// `sum_j s_j^degree`, `degree <= 3`.
    SumPower { degree: u32 },
    /// `beta^{-1} log sum_j exp(beta s_j)`.
    SoftmaxOfSum { beta: f64 },
}

impl TestFunction {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TestFunction::SumPower { degree } if !(1..=3).contains(&degree) => Err(invalid(
                "degree",
                format!("power must be 1, 2 or 3, got {degree}"),
            )),
            TestFunction::SoftmaxOfSum { beta } if !(beta > 0.0 && beta.is_finite()) => Err(
                invalid("beta", format!("must be positive, got {beta}")),
            ),
            _ => Ok(()),
        }
    }

    fn degree(&self) -> Option<u32> {
        match *self {
            TestFunction::Sum => Some(1),
            TestFunction::SumPower { degree } => Some(degree),
            TestFunction::SoftmaxOfSum { .. } => None,
        }
    }

    pub fn value(&self, s: &[f64]) -> f64 {
        match *self {
            TestFunction::SoftmaxOfSum { beta } => {
                let top = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                top + s.iter().map(|v| (beta * (v - top)).exp()).sum::<f64>().ln() / beta
            }
            _ => {
                let d = self.degree().expect("polynomial") as i32;
                s.iter().map(|v| v.powi(d)).sum()
            }
        }
    }

    fn softmax_weights(beta: f64, s: &[f64]) -> Vec<f64> {
        let top = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = s.iter().map(|v| (beta * (v - top)).exp()).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|v| v / z).collect()
    }

    /// Row-major `p^order` derivative tensor at `s`, when available:
    /// every order for the polynomial tags, up to order 2 for the softmax.
    pub fn derivative(&self, order: u32, s: &[f64]) -> Option<Vec<f64>> {
        let p = s.len();
        let size = p.pow(order);
        match *self {
            TestFunction::SoftmaxOfSum { beta } => match order {
                0 => Some(vec![self.value(s)]),
                1 => Some(Self::softmax_weights(beta, s)),
                2 => {
                    let w = Self::softmax_weights(beta, s);
                    let mut h = vec![0.0; p * p];
                    for j in 0..p {
                        for k in 0..p {
                            h[j * p + k] = beta * (if j == k { w[j] } else { 0.0 } - w[j] * w[k]);
                        }
                    }
                    Some(h)
                }
                _ => None,
            },
            _ => {
                let d = self.degree().expect("polynomial");
                let mut t = vec![0.0; size];
                if order == 0 {
                    t[0] = self.value(s);
                    return Some(t);
                }
                if order > d {
                    return Some(t);
                }
                let falling: f64 = (0..order).map(|r| (d - r) as f64).product();
                let stride: usize = (0..order).map(|r| p.pow(r)).sum();
                for (j, v) in s.iter().enumerate() {
                    t[j * stride] = falling * v.powi((d - order) as i32);
                }
                Some(t)
            }
        }
    }

    /// `|f^{(order)}|` when that derivative does not depend on its argument.
    pub fn constant_derivative_abs(&self, order: u32, p: usize) -> Option<Vec<f64>> {
        let d = self.degree()?;
        if order < d {
            return None;
        }
        self.derivative(order, &vec![0.0; p])
            .map(|t| t.into_iter().map(f64::abs).collect())
    }
}

/// Deterministic rows `X`, `Y` and a test function.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationCase {
    pub x: DataMatrix,
    pub y: DataMatrix,
    pub function: TestFunction,
}

impl InterpolationCase {
    pub fn new(x: DataMatrix, y: DataMatrix, function: TestFunction) -> Result<Self> {
        if x.nrows() != y.nrows() || x.ncols() != y.ncols() {
            return Err(Error::DimensionMismatch {
                expected: x.values().len(),
                got: y.values().len(),
            });
        }
        check_rows(x.nrows())?;
        function.validate()?;
        Ok(Self { x, y, function })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

fn check_rows(n: usize) -> Result<()> {
    if n > MAX_ROWS {
        return Err(Error::TooLarge { n, limit: MAX_ROWS });
    }
    Ok(())
}

/// All orderings of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for k in 0..used.len() {
            if !used[k] {
                used[k] = true;
                prefix.push(k);
                go(prefix, used, out);
                prefix.pop();
                used[k] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    sum: f64,
    carry: f64,
}

impl Accumulator {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

fn add_into(acc: &mut [f64], row: &[f64]) {
    for (a, x) in acc.iter_mut().zip(row) {
        *a += x;
    }
}

/// Row sum of `U_{sigma,i}`: `X` rows at `sigma_1..sigma_{i-1}`, `Y` rows
/// after position `i` (0-based `pos`).
fn interpolant_sum(x: &DataMatrix, y: &DataMatrix, sigma: &[usize], pos: usize) -> Vec<f64> {
    let mut u = vec![0.0; x.ncols()];
    for &k in &sigma[..pos] {
        add_into(&mut u, x.row(k));
    }
    for &k in &sigma[pos + 1..] {
        add_into(&mut u, y.row(k));
    }
    u
}

fn shifted(u: &[f64], row: &[f64]) -> Vec<f64> {
    u.iter().zip(row).map(|(a, b)| a + b).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    /// The averaged quantity for each anchor row `k`.
    pub per_row: Vec<f64>,
    pub max_spread: f64,
}

/// Evaluates, for every `k`,
/// `n^{-1} sum_i (n!)^{-1} sum_{sigma: sigma_i = k} q_i E f(U_{sigma,i}, zeta_{i,k})`
/// with `zeta_{i,k} = X_k` w.p. `theta_i` and `Y_k` otherwise, and reports
/// its spread over `k`.
pub fn verify_permutation_invariance(
    case: &InterpolationCase,
    scheme: &WeightScheme,
) -> Result<InvarianceReport> {
    let n = case.n();
    check_rows(n)?;
    if scheme.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: scheme.n(),
        });
    }
    let f = &case.function;
    let mut acc = vec![Accumulator::default(); n];
    let perms = permutations(n);
    for sigma in &perms {
        for pos in 0..n {
            let k = sigma[pos];
            let u = interpolant_sum(&case.x, &case.y, sigma, pos);
            let th = scheme.theta[pos];
            let v = th * f.value(&shifted(&u, case.x.row(k)))
                + (1.0 - th) * f.value(&shifted(&u, case.y.row(k)));
            acc[k].add(scheme.q[pos] * v);
        }
    }
    let norm = (n * perms.len()) as f64;
    let per_row: Vec<f64> = acc.iter().map(|a| a.total() / norm).collect();
    let hi = per_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = per_row.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(InvarianceReport {
        per_row,
        max_spread: hi - lo,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelescopingReport {
    /// Permutation-averaged sum of one-row swaps.
    pub lhs: f64,
    /// `f(X) - f(Y)`.
    pub rhs: f64,
    pub abs_diff: f64,
}

/// Checks `A_sigma sum_i [f(U_{sigma,i}, X_{sigma_i}) - f(U_{sigma,i}, Y_{sigma_i})] = f(X) - f(Y)`.
pub fn verify_telescoping(case: &InterpolationCase) -> Result<TelescopingReport> {
    let n = case.n();
    check_rows(n)?;
    let f = &case.function;
    let perms = permutations(n);
    let mut acc = Accumulator::default();
    for sigma in &perms {
        for pos in 0..n {
            let k = sigma[pos];
            let u = interpolant_sum(&case.x, &case.y, sigma, pos);
            acc.add(f.value(&shifted(&u, case.x.row(k))));
            acc.add(-f.value(&shifted(&u, case.y.row(k))));
        }
    }
    let lhs = acc.total() / perms.len() as f64;
    let total = |m: &DataMatrix| {
        let mut s = vec![0.0; m.ncols()];
        m.rows().for_each(|r| add_into(&mut s, r));
        s
    };
    let rhs = f.value(&total(&case.x)) - f.value(&total(&case.y));
    Ok(TelescopingReport {
        lhs,
        rhs,
        abs_diff: (lhs - rhs).abs(),
    })
}

/// Finite law of one random row: `atoms[a]` has probability `probs[a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomLaw {
    atoms: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl AtomLaw {
    /// Requires positive probabilities summing to 1 and a zero mean.
    pub fn new(atoms: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Empty("a row law needs at least one atom"));
        }
        if atoms.len() != probs.len() {
            return Err(Error::DimensionMismatch {
                expected: atoms.len(),
                got: probs.len(),
            });
        }
        let p = atoms[0].len();
        if p == 0 || atoms.iter().any(|a| a.len() != p) {
            return Err(invalid("atoms", "all atoms need the same positive length"));
        }
        if atoms.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("atoms", "must be finite"));
        }
        if probs.iter().any(|w| !(*w > 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(invalid("probs", "need positive probabilities summing to 1"));
        }
        let law = Self { atoms, probs };
        let scale = 1.0 + law.atoms.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if law.mean().iter().any(|m| m.abs() > 1e-12 * scale) {
            return Err(invalid("atoms", "row law must have mean zero"));
        }
        Ok(law)
    }

    /// Two-atom law on `a` and `b` (non-zero, opposite signs coordinatewise
    /// after scaling) with probabilities fixed by the zero-mean constraint,
    /// in one dimension.
    pub fn two_point(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b < 0.0) {
            return Err(invalid("atoms", "need a > 0 > b"));
        }
        let pa = -b / (a - b);
        Self::new(vec![vec![a], vec![b]], vec![pa, 1.0 - pa])
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (a, w) in self.atoms.iter().zip(&self.probs) {
            for (mj, aj) in m.iter_mut().zip(a) {
                *mj += w * aj;
            }
        }
        m
    }

    /// `E |X_j|^m` for each coordinate.
    pub fn abs_moment(&self, m: u32) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (a, w) in self.atoms.iter().zip(&self.probs) {
            for (o, v) in out.iter_mut().zip(a) {
                *o += w * v.abs().powi(m as i32);
            }
        }
        out
    }

    /// Row-major `E X^{otimes m}`.
    pub fn moment_tensor(&self, m: u32) -> Vec<f64> {
        let p = self.dim();
        let mut t = vec![0.0; p.pow(m)];
        for (a, w) in self.atoms.iter().zip(&self.probs) {
            for (idx, slot) in t.iter_mut().enumerate() {
                *slot += w * multi_index(idx, p, m).iter().map(|&j| a[j]).product::<f64>();
            }
        }
        t
    }
}

fn multi_index(mut idx: usize, p: usize, m: u32) -> Vec<usize> {
    let mut out = vec![0; m as usize];
    for slot in out.iter_mut().rev() {
        *slot = idx % p;
        idx /= p;
    }
    out
}

/// Law of a sum of independent rows, as weighted atoms.
fn convolve(laws: &[&AtomLaw], p: usize) -> Vec<(Vec<f64>, f64)> {
    let mut dist = vec![(vec![0.0; p], 1.0)];
    for law in laws {
        let mut next = Vec::with_capacity(dist.len() * law.atoms.len());
        for (s, w) in &dist {
            for (a, wa) in law.atoms.iter().zip(&law.probs) {
                next.push((shifted(s, a), w * wa));
            }
        }
        dist = next;
    }
    dist
}

fn mixture(theta: f64, x: &AtomLaw, y: &AtomLaw) -> Vec<(Vec<f64>, f64)> {
    let mut out = Vec::new();
    for (a, w) in x.atoms.iter().zip(&x.probs) {
        if theta > 0.0 {
            out.push((a.clone(), theta * w));
        }
    }
    for (a, w) in y.atoms.iter().zip(&y.probs) {
        if theta < 1.0 {
            out.push((a.clone(), (1.0 - theta) * w));
        }
    }
    out
}

/// Independent random rows `X_k`, `Y_k` with finite laws.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomRowsCase {
    pub x: Vec<AtomLaw>,
    pub y: Vec<AtomLaw>,
    pub function: TestFunction,
}

impl RandomRowsCase {
    pub fn new(x: Vec<AtomLaw>, y: Vec<AtomLaw>, function: TestFunction) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        check_rows(x.len())?;
        let p = x[0].dim();
        if x.iter().chain(&y).any(|l| l.dim() != p) {
            return Err(invalid("atoms", "all rows need the same dimension"));
        }
        function.validate()?;
        Ok(Self { x, y, function })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn p(&self) -> usize {
        self.x[0].dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonReport {
    /// `A_sigma sum_i q_i (E f(U, X_{sigma_i}) - E f(U, Y_{sigma_i}))`.
    pub delta: f64,
    /// Matched-moment terms of orders `2..m*`.
    pub moment_term: f64,
    /// `delta - moment_term`.
    pub remainder: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Averaged moment tensor difference `n^{-1} sum_k (E X_k^m - E Y_k^m)`.
fn average_moment_gap(case: &RandomRowsCase, m: u32) -> Vec<f64> {
    let n = case.n() as f64;
    let mut out = vec![0.0; case.p().pow(m)];
    for (lx, ly) in case.x.iter().zip(&case.y) {
        for ((o, a), b) in out.iter_mut().zip(lx.moment_tensor(m)).zip(ly.moment_tensor(m)) {
            *o += (a - b) / n;
        }
    }
    out
}

fn factorial(m: u32) -> f64 {
    (1..=m).map(f64::from).product()
}

/// Remainder of the averaged-moment expansion of `Delta` and its bound
/// `(2^{m*} - m* - 1)/m*! <(sum_i q_i) |f^{(m*)}|, mu>` with
/// `mu = 2 a_X^{otimes m*} + 2 a_Y^{otimes m*}`,
/// `a_{X,j} = (n^{-1} sum_k E|X_kj|^{m*})^{1/m*}` (bounded atoms, `g = 1`).
///
/// Requires `f^{(m*)}` to be constant, i.e. a polynomial tag of degree at most
/// `m*`.
pub fn verify_strong_comparison(
    case: &RandomRowsCase,
    scheme: &WeightScheme,
    mstar: u32,
) -> Result<ComparisonReport> {
    if !(mstar == 3 || mstar == 4) {
        return Err(invalid("mstar", format!("must be 3 or 4, got {mstar}")));
    }
    let (n, p) = (case.n(), case.p());
    check_rows(n)?;
    if scheme.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: scheme.n(),
        });
    }
    let f = &case.function;
    let top = f.constant_derivative_abs(mstar, p).ok_or_else(|| {
        Error::UnsupportedFunction(format!(
            "{f:?} has no constant derivative of order {mstar}"
        ))
    })?;

    let perms = permutations(n);
    let orders: Vec<u32> = (2..mstar).collect();
    let mut delta = Accumulator::default();
    // sum_i q_i A_sigma E f^{(m)}(U, zeta) for each matched order m
    let mut weighted: Vec<Vec<f64>> = orders.iter().map(|&m| vec![0.0; p.pow(m)]).collect();
    for sigma in &perms {
        for pos in 0..n {
            let k = sigma[pos];
            let q = scheme.q[pos];
            let mut laws: Vec<&AtomLaw> = sigma[..pos].iter().map(|&j| &case.x[j]).collect();
            laws.extend(sigma[pos + 1..].iter().map(|&j| &case.y[j]));
            let u = convolve(&laws, p);
            let expect_with = |row: &AtomLaw| {
                let mut acc = Accumulator::default();
                for (s, w) in &u {
                    for (a, wa) in row.atoms.iter().zip(&row.probs) {
                        acc.add(w * wa * f.value(&shifted(s, a)));
                    }
                }
                acc.total()
            };
            delta.add(q * (expect_with(&case.x[k]) - expect_with(&case.y[k])));
            let zeta = mixture(scheme.theta[pos], &case.x[k], &case.y[k]);
            for (slot, &m) in weighted.iter_mut().zip(&orders) {
                for (s, w) in &u {
                    for (z, wz) in &zeta {
                        let d = f.derivative(m, &shifted(s, z)).ok_or_else(|| {
                            Error::UnsupportedFunction(format!("{f:?} lacks order-{m} derivatives"))
                        })?;
                        for (o, v) in slot.iter_mut().zip(d) {
                            *o += q * w * wz * v;
                        }
                    }
                }
            }
        }
    }
    let norm = perms.len() as f64;
    let delta = delta.total() / norm;
    let moment_term: f64 = weighted
        .iter()
        .zip(&orders)
        .map(|(t, &m)| {
            let gap = average_moment_gap(case, m);
            t.iter().zip(gap).map(|(a, b)| a / norm * b).sum::<f64>() / factorial(m)
        })
        .sum();
    let remainder = delta - moment_term;

    let scale = |laws: &[AtomLaw]| -> Vec<f64> {
        let mut a = vec![0.0; p];
        for l in laws {
            add_into(&mut a, &l.abs_moment(mstar));
        }
        a.into_iter()
            .map(|v| (v / n as f64).powf(1.0 / mstar as f64))
            .collect()
    };
    let (ax, ay) = (scale(&case.x), scale(&case.y));
    let q_total: f64 = scheme.q.iter().sum();
    let pairing: f64 = top
        .iter()
        .enumerate()
        .filter(|(_, t)| **t != 0.0)
        .map(|(idx, t)| {
            let js = multi_index(idx, p, mstar);
            let mu = 2.0 * js.iter().map(|&j| ax[j]).product::<f64>()
                + 2.0 * js.iter().map(|&j| ay[j]).product::<f64>();
            t * mu
        })
        .sum();
    let coef = (2f64.powi(mstar as i32) - mstar as f64 - 1.0) / factorial(mstar);
    let bound = coef * q_total * pairing;
    let holds = remainder.abs() <= bound + 1e-12 * (1.0 + delta.abs());
    Ok(ComparisonReport {
        delta,
        moment_term,
        remainder,
        bound,
        holds,
    })
}

/// Deterministic case with entries uniform on `[-1, 1]`.
pub fn random_case(n: usize, p: usize, function: TestFunction, seed: u64) -> Result<InterpolationCase> {
    let mut rng = substream(seed, &[n as u64, p as u64]);
    let mut draw = |_| rng.random_range(-1.0..1.0);
    let x = DataMatrix::new(n, p, (0..n * p).map(&mut draw).collect())?;
    let y = DataMatrix::new(n, p, (0..n * p).map(&mut draw).collect())?;
    InterpolationCase::new(x, y, function)
}

/// Random mean-zero law with two or three atoms in `[-2, 2]^p` (before
/// centring).
pub fn random_atom_law<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Result<AtomLaw> {
    let count = rng.random_range(2..=3);
    let mut probs: Vec<f64> = (0..count).map(|_| rng.random_range(0.2..1.0)).collect();
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|w| *w /= z);
    let fix = 1.0 - probs[1..].iter().sum::<f64>();
    probs[0] = fix;
    let mut atoms: Vec<Vec<f64>> = (0..count)
        .map(|_| (0..p).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let mut mean = vec![0.0; p];
    for (a, w) in atoms.iter().zip(&probs) {
        for (m, v) in mean.iter_mut().zip(a) {
            *m += w * v;
        }
    }
    for a in atoms.iter_mut() {
        for (v, m) in a.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    AtomLaw::new(atoms, probs)
}

pub fn random_rows_case(
    n: usize,
    p: usize,
    function: TestFunction,
    seed: u64,
) -> Result<RandomRowsCase> {
    let mut rng = substream(seed, &[n as u64, p as u64, 0xA70]);
    let x = (0..n).map(|_| random_atom_law(p, &mut rng)).collect::<Result<_>>()?;
    let y = (0..n).map(|_| random_atom_law(p, &mut rng)).collect::<Result<_>>()?;
    RandomRowsCase::new(x, y, function)
}
