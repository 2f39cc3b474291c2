//! Stochastic gradient oracles.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::objectives::{Dataset, Objective};
use crate::rng::{stream, Purpose, RngStream};
use crate::stats::mean_se;

/// A conditionally unbiased estimate of the empirical-risk gradient whose
/// excess second moment is at most `2 delta (M^2 |w|^2 + B^2)`.
pub trait GradientOracle: Send + Sync + fmt::Debug {
    /// The declared relative noise level.
    fn delta(&self) -> f64;

    /// Writes one draw into `out`; `scratch` has the same length. Inputs are
    /// assumed validated.
    fn sample_into(
        &self,
        obj: &dyn Objective,
        data: &Dataset,
        w: &[f64],
        rng: &mut RngStream,
        out: &mut [f64],
        scratch: &mut [f64],
    );
}

/// The built-in oracles, selectable from JSON as
/// `{"kind": "full"}` or `{"kind": "minibatch", "batch": 8}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleSpec {
    Full,
    /// Average of `batch` per-sample gradients at indices drawn uniformly
    /// with replacement, so `delta = 1/batch`.
    Minibatch { batch: usize },
}

impl OracleSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            OracleSpec::Minibatch { batch: 0 } => Err(invalid("batch", "must be at least 1")),
            _ => Ok(()),
        }
    }
}

impl GradientOracle for OracleSpec {
    fn delta(&self) -> f64 {
        match self {
            OracleSpec::Full => 0.0,
            OracleSpec::Minibatch { batch } => 1.0 / *batch as f64,
        }
    }

    fn sample_into(
        &self,
        obj: &dyn Objective,
        data: &Dataset,
        w: &[f64],
        rng: &mut RngStream,
        out: &mut [f64],
        scratch: &mut [f64],
    ) {
        match self {
            OracleSpec::Full => obj.risk_grad(data, w, out),
            OracleSpec::Minibatch { batch } => {
                let n = data.len();
                out.fill(0.0);
                for _ in 0..*batch {
                    let i = rng.random_range(0..n);
                    obj.grad(w, data.sample(i), scratch);
                    for (o, g) in out.iter_mut().zip(scratch.iter()) {
                        *o += g;
                    }
                }
                let inv = 1.0 / *batch as f64;
                out.iter_mut().for_each(|o| *o *= inv);
            }
        }
    }
}

pub(crate) fn check_oracle_inputs(obj: &dyn Objective, data: &Dataset, dim: usize) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_dim(obj.sample_dim(), data.sample_dim())?;
    check_dim(obj.dim(), dim)
}

/// One oracle draw at `w`.
pub fn sample_gradient(
    oracle: &dyn GradientOracle,
    obj: &dyn Objective,
    data: &Dataset,
    w: &[f64],
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    check_oracle_inputs(obj, data, w.len())?;
    let mut out = vec![0.0; w.len()];
    let mut scratch = vec![0.0; w.len()];
    oracle.sample_into(obj, data, w, rng, &mut out, &mut scratch);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub w: Vec<f64>,
    /// Monte Carlo estimate of `E|g - grad F_z(w)|^2`.
    pub measured: f64,
    pub standard_error: f64,
    /// `2 delta (M^2 |w|^2 + B^2)`.
    pub bound: f64,
    /// `bound - measured - 3 standard_error`.
    pub margin: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub delta: f64,
    pub draws: usize,
    pub rows: Vec<NoiseRow>,
    pub passed: bool,
}

/// Checks the relative noise bound at each probe point by Monte Carlo.
pub fn verify_noise_bound(
    oracle: &dyn GradientOracle,
    obj: &dyn Objective,
    data: &Dataset,
    points: &[Vec<f64>],
    draws: usize,
    seed: u64,
) -> Result<NoiseReport> {
    if draws < 2 {
        return Err(invalid("draws", "need at least two draws"));
    }
    let c = *obj.constants();
    let delta = oracle.delta();
    let mut rows = Vec::with_capacity(points.len());
    for (pi, w) in points.iter().enumerate() {
        check_oracle_inputs(obj, data, w.len())?;
        let mut exact = vec![0.0; w.len()];
        obj.risk_grad(data, w, &mut exact);
        let mut rng = stream(seed, Purpose::Oracle, pi as u64);
        let mut g = vec![0.0; w.len()];
        let mut scratch = vec![0.0; w.len()];
        let sq: Vec<f64> = (0..draws)
            .map(|_| {
                oracle.sample_into(obj, data, w, &mut rng, &mut g, &mut scratch);
                g.iter().zip(&exact).map(|(a, b)| (a - b) * (a - b)).sum()
            })
            .collect();
        let (measured, se) = mean_se(&sq);
        let r2: f64 = w.iter().map(|x| x * x).sum();
        let bound = 2.0 * delta * (c.smoothness * c.smoothness * r2 + c.grad_at_origin * c.grad_at_origin);
        let margin = bound - measured - 3.0 * se;
        rows.push(NoiseRow { w: w.clone(), measured, standard_error: se, bound, margin, holds: margin >= 0.0 });
    }
    let passed = rows.iter().all(|r| r.holds);
    Ok(NoiseReport { delta, draws, rows, passed })
}
