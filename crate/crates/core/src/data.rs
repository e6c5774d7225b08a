//! Row-major `n x p` observation matrix with independent rows.

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n: usize,
    p: usize,
    values: Vec<f64>,
    true_mean: Option<Vec<f64>>,
}

/// How columns are centred before summing.
///
/// `Known` uses the attached population mean (simulation mode), `Sample` the
/// column means of the data itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Centering {
    Known,
    Sample,
}

impl DataMatrix {
    pub fn new(n: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::Empty("data matrix needs n >= 1 and p >= 1"));
        }
        if values.len() != n * p {
            return Err(Error::DimensionMismatch {
                expected: n * p,
                got: values.len(),
            });
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: idx / p,
                col: idx % p,
            });
        }
        Ok(Self {
            n,
            p,
            values,
            true_mean: None,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty("data matrix needs n >= 1 and p >= 1"));
        }
        let p = rows[0].as_ref().len();
        let mut values = Vec::with_capacity(n * p);
        for row in rows {
            let row = row.as_ref();
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(n, p, values)
    }

    /// Attaches the population column means used by [`Centering::Known`].
    pub fn with_true_mean(mut self, mean: Vec<f64>) -> Result<Self> {
        if mean.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                got: mean.len(),
            });
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(invalid("true_mean", "must be finite"));
        }
        self.true_mean = Some(mean);
        Ok(self)
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.p
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn true_mean(&self) -> Option<&[f64]> {
        self.true_mean.as_deref()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.p + j]
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.p];
        for row in self.rows() {
            for (a, x) in acc.iter_mut().zip(row) {
                *a += x;
            }
        }
        let n = self.n as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// Column centres for the requested mode.
    pub fn centers(&self, centering: Centering) -> Result<Vec<f64>> {
        match centering {
            Centering::Known => self
                .true_mean
                .clone()
                .ok_or(Error::MissingTrueMean),
            Centering::Sample => Ok(self.column_means()),
        }
    }

    /// `X - 1 * center^T`, dropping any attached true mean.
    pub fn centered(&self, center: &[f64]) -> Result<DataMatrix> {
        if center.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                got: center.len(),
            });
        }
        let values = self
            .rows()
            .flat_map(|row| row.iter().zip(center).map(|(x, c)| x - c))
            .collect();
        Ok(DataMatrix {
            n: self.n,
            p: self.p,
            values,
            true_mean: None,
        })
    }

    /// Largest absolute entry of `X - center`.
    pub fn max_abs_deviation(&self, center: &[f64]) -> f64 {
        self.rows()
            .flat_map(|row| row.iter().zip(center).map(|(x, c)| (x - c).abs()))
            .fold(0.0, f64::max)
    }

    pub(crate) fn from_parts_unchecked(n: usize, p: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n * p);
        Self {
            n,
            p,
            values,
            true_mean: None,
        }
    }

    pub(crate) fn set_true_mean_unchecked(&mut self, mean: Vec<f64>) {
        debug_assert_eq!(mean.len(), self.p);
        self.true_mean = Some(mean);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(DataMatrix::new(0, 2, vec![]).is_err());
        assert!(matches!(
            DataMatrix::new(2, 2, vec![1.0; 3]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            DataMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
        let d = DataMatrix::new(1, 2, vec![1.0, 2.0]).unwrap();
        assert!(d.with_true_mean(vec![0.0]).is_err());
    }

    #[test]
    fn known_centering_requires_mean() {
        let d = DataMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert!(matches!(
            d.centers(Centering::Known),
            Err(Error::MissingTrueMean)
        ));
        assert_eq!(d.centers(Centering::Sample).unwrap(), vec![2.0, 3.0]);
        let c = d.centered(&[2.0, 3.0]).unwrap();
        assert_eq!(c.values(), &[-1.0, -1.0, 1.0, 1.0]);
    }
}
