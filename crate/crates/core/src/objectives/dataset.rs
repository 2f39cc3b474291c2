use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{stream, Purpose};

/// An i.i.d. sample `z_1..z_n`, stored flat with a fixed per-sample width.
///
/// Column means and mean squares are cached because several objectives
/// depend on the data only through them.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    values: Arc<[f64]>,
    sample_dim: usize,
    mean: Box<[f64]>,
    mean_sq: Box<[f64]>,
}

impl Dataset {
    pub fn new(values: Vec<f64>, sample_dim: usize) -> Result<Self> {
        if sample_dim == 0 {
            return Err(invalid("sample_dim", "must be at least 1"));
        }
        if values.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if values.len() % sample_dim != 0 {
            return Err(invalid("values", "length is not a multiple of sample_dim"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("values", "non-finite entry"));
        }
        let n = values.len() / sample_dim;
        let mut mean = vec![0.0; sample_dim];
        let mut mean_sq = vec![0.0; sample_dim];
        for z in values.chunks_exact(sample_dim) {
            for j in 0..sample_dim {
                mean[j] += z[j];
                mean_sq[j] += z[j] * z[j];
            }
        }
        for j in 0..sample_dim {
            mean[j] /= n as f64;
            mean_sq[j] /= n as f64;
        }
        Ok(Self { values: values.into(), sample_dim, mean: mean.into(), mean_sq: mean_sq.into() })
    }

    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec(), 1)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.sample_dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sample_dim(&self) -> usize {
        self.sample_dim
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.values[i * self.sample_dim..(i + 1) * self.sample_dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.sample_dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn mean_sq(&self) -> &[f64] {
        &self.mean_sq
    }

    /// Copy of the dataset with sample `i` replaced by `z`.
    pub fn with_replaced(&self, i: usize, z: &[f64]) -> Result<Self> {
        crate::error::check_dim(self.sample_dim, z.len())?;
        if i >= self.len() {
            return Err(invalid("index", format!("{i} out of range for {} samples", self.len())));
        }
        let mut v = self.values.to_vec();
        v[i * self.sample_dim..(i + 1) * self.sample_dim].copy_from_slice(z);
        Self::new(v, self.sample_dim)
    }

    /// Reads a headerless CSV file, one sample per row.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
        let mut values = Vec::new();
        let mut width = None;
        for record in reader.records() {
            let record = record?;
            let w = *width.get_or_insert(record.len());
            if record.len() != w {
                return Err(invalid("csv", "rows have different lengths"));
            }
            for field in record.iter() {
                values.push(field.trim().parse::<f64>().map_err(|e| invalid("csv", e.to_string()))?);
            }
        }
        Self::new(values, width.unwrap_or(1))
    }

    /// Draws `n` samples from `dist` using the data stream `index` of `seed`.
    pub fn generate(dist: &Distribution, n: usize, seed: u64, index: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut rng = stream(seed, Purpose::Data, index);
        let mut values = Vec::with_capacity(n * dist.sample_dim());
        for _ in 0..n {
            dist.draw(&mut rng, &mut values);
        }
        Self::new(values, dist.sample_dim())
    }
}

/// Population distributions used to generate data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Distribution {
    /// Scalar uniform on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Scalar normal truncated to `[-bound, bound]` by rejection.
    TruncatedNormal { mean: f64, std: f64, bound: f64 },
    /// Point mass.
    Constant { value: Vec<f64> },
    /// Samples `(x, y)` with `x` uniform on the disk of radius `radius` and
    /// `P(y = 1 | x) = 1 / (1 + exp(-<w_true, x>))`, `y` in `{-1, 1}`.
    LabeledDisk { radius: f64, w_true: Vec<f64> },
}

impl Distribution {
    pub fn sample_dim(&self) -> usize {
        match self {
            Distribution::Uniform { .. } | Distribution::TruncatedNormal { .. } => 1,
            Distribution::Constant { value } => value.len(),
            Distribution::LabeledDisk { w_true, .. } => w_true.len() + 1,
        }
    }

    /// Largest sample norm, for the distributions that are bounded.
    pub fn support_radius(&self) -> f64 {
        match self {
            Distribution::Uniform { lo, hi } => lo.abs().max(hi.abs()),
            Distribution::TruncatedNormal { bound, .. } => *bound,
            Distribution::Constant { value } => value.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Distribution::LabeledDisk { radius, .. } => *radius,
        }
    }

    fn draw(&self, rng: &mut impl Rng, out: &mut Vec<f64>) {
        match self {
            Distribution::Uniform { lo, hi } => out.push(lo + (hi - lo) * rng.random::<f64>()),
            Distribution::TruncatedNormal { mean, std, bound } => loop {
                let x = mean + std * rng.sample::<f64, _>(StandardNormal);
                if x.abs() <= *bound {
                    out.push(x);
                    break;
                }
            },
            Distribution::Constant { value } => out.extend_from_slice(value),
            Distribution::LabeledDisk { radius, w_true } => {
                let d = w_true.len();
                let x: Vec<f64> = loop {
                    let x: Vec<f64> = (0..d).map(|_| radius * (2.0 * rng.random::<f64>() - 1.0)).collect();
                    if x.iter().map(|v| v * v).sum::<f64>() <= radius * radius {
                        break x;
                    }
                };
                let s: f64 = x.iter().zip(w_true).map(|(a, b)| a * b).sum();
                let p = 1.0 / (1.0 + (-s).exp());
                let y = if rng.random::<f64>() < p { 1.0 } else { -1.0 };
                out.extend_from_slice(&x);
                out.push(y);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caches_moments() {
        let d = Dataset::from_scalars(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d.len(), 3);
        assert!((d.mean()[0] - 2.0).abs() < 1e-15);
        assert!((d.mean_sq()[0] - 14.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(Dataset::new(vec![], 1), Err(Error::EmptyDataset)));
        assert!(Dataset::new(vec![1.0, 2.0, 3.0], 2).is_err());
    }

    #[test]
    fn replacement_changes_one_sample() {
        let d = Dataset::from_scalars(&[1.0, 2.0]).unwrap();
        let e = d.with_replaced(1, &[4.0]).unwrap();
        assert_eq!(e.sample(0), &[1.0]);
        assert_eq!(e.sample(1), &[4.0]);
        assert!((e.mean()[0] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn generation_is_seeded_and_bounded() {
        let dist = Distribution::TruncatedNormal { mean: 0.0, std: 1.0, bound: 1.5 };
        let a = Dataset::generate(&dist, 50, 3, 0).unwrap();
        let b = Dataset::generate(&dist, 50, 3, 0).unwrap();
        assert_eq!(a, b);
        assert!(a.values().iter().all(|v| v.abs() <= 1.5));
        let disk = Distribution::LabeledDisk { radius: 1.0, w_true: vec![2.0, -1.0] };
        let c = Dataset::generate(&disk, 20, 3, 1).unwrap();
        assert_eq!(c.sample_dim(), 3);
        assert!(c.iter().all(|s| s[0] * s[0] + s[1] * s[1] <= 1.0 && s[2].abs() == 1.0));
    }
}
