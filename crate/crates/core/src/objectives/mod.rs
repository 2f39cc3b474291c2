//! Loss functions, datasets and the regularity constants attached to them.

mod dataset;
mod minimize;
mod smoothed;
mod verify;
pub mod zoo;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};

pub use dataset::{Dataset, Distribution};
pub use minimize::{minimize_empirical, multistart_points, Minimum};
pub use smoothed::{smoothed_objective, QuadratureConfig, SmoothedObjective};
pub use verify::{verify_assumptions, AssumptionCheck, AssumptionReport, ProbeConfig, Violation};
pub use zoo::{
    with_weight_decay, DoubleWell, Gaussian, LipschitzLoss, LogisticLoss, Quadratic, WeightDecayed, ZeroLoss,
};

/// Constants certifying the boundedness, smoothness and dissipativity
/// conditions for a loss `f(w, z)`:
///
/// * `0 <= f(0, z) <= A` and `|grad f(0, z)| <= B`,
/// * `|grad f(w, z) - grad f(v, z)| <= M |w - v|`,
/// * `<w, grad f(w, z)> >= m |w|^2 - b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityConstants {
    #[serde(rename = "A")]
    pub loss_at_origin: f64,
    #[serde(rename = "B")]
    pub grad_at_origin: f64,
    #[serde(rename = "M")]
    pub smoothness: f64,
    #[serde(rename = "m")]
    pub dissipativity: f64,
    #[serde(rename = "b")]
    pub dissipativity_offset: f64,
}

impl RegularityConstants {
    pub fn new(a: f64, b_grad: f64, smoothness: f64, m: f64, b: f64) -> Result<Self> {
        let c = Self {
            loss_at_origin: a,
            grad_at_origin: b_grad,
            smoothness,
            dissipativity: m,
            dissipativity_offset: b,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &'static str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(invalid(name, format!("must be finite and nonnegative, got {v}")))
            }
        };
        nonneg("A", self.loss_at_origin)?;
        nonneg("B", self.grad_at_origin)?;
        nonneg("b", self.dissipativity_offset)?;
        crate::error::require_positive("M", self.smoothness)?;
        crate::error::require_positive("m", self.dissipativity)?;
        if self.dissipativity > self.smoothness {
            return Err(invalid("m", format!("m = {} exceeds M = {}", self.dissipativity, self.smoothness)));
        }
        Ok(())
    }

    /// Largest step size admitted by the discretisation analysis, `min(1, m / (4 M^2))`.
    pub fn max_step_size(&self) -> f64 {
        (self.dissipativity / (4.0 * self.smoothness * self.smoothness)).min(1.0)
    }

    /// Lower quadratic envelope `(m/3)|w|^2 - (b/2) log 3`.
    pub fn loss_lower_envelope(&self, norm: f64) -> f64 {
        self.dissipativity / 3.0 * norm * norm - self.dissipativity_offset / 2.0 * 3f64.ln()
    }

    /// Upper quadratic envelope `(M/2)|w|^2 + B|w| + A`.
    pub fn loss_upper_envelope(&self, norm: f64) -> f64 {
        self.smoothness / 2.0 * norm * norm + self.grad_at_origin * norm + self.loss_at_origin
    }

    /// Gradient growth bound `M|w| + B`.
    pub fn grad_envelope(&self, norm: f64) -> f64 {
        self.smoothness * norm + self.grad_at_origin
    }
}

/// A per-sample loss `f(w, z)` with its gradient in `w`.
///
/// The empirical risk defaults to the sample average; objectives that depend
/// on the data only through cached moments override it.
pub trait Objective: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn sample_dim(&self) -> usize;
    fn loss(&self, w: &[f64], z: &[f64]) -> f64;
    fn grad(&self, w: &[f64], z: &[f64], out: &mut [f64]);
    fn constants(&self) -> &RegularityConstants;

    /// Radius of the ball on which `M` is valid, when it is not global.
    fn smoothness_radius(&self) -> Option<f64> {
        None
    }

    fn risk(&self, data: &Dataset, w: &[f64]) -> f64 {
        data.iter().map(|z| self.loss(w, z)).sum::<f64>() / data.len() as f64
    }

    fn risk_grad(&self, data: &Dataset, w: &[f64], out: &mut [f64]) {
        let mut buf = vec![0.0; out.len()];
        out.fill(0.0);
        for z in data.iter() {
            self.grad(w, z, &mut buf);
            for (o, g) in out.iter_mut().zip(&buf) {
                *o += g;
            }
        }
        let n = data.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
    }
}

fn check_inputs(obj: &dyn Objective, data: &Dataset, w: &[f64]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_dim(obj.sample_dim(), data.sample_dim())?;
    check_dim(obj.dim(), w.len())
}

/// `F_z(w) = (1/n) sum_i f(w, z_i)`.
pub fn empirical_risk(obj: &dyn Objective, data: &Dataset, w: &[f64]) -> Result<f64> {
    check_inputs(obj, data, w)?;
    Ok(obj.risk(data, w))
}

/// Gradient of the empirical risk.
pub fn empirical_gradient(obj: &dyn Objective, data: &Dataset, w: &[f64]) -> Result<Vec<f64>> {
    check_inputs(obj, data, w)?;
    let mut out = vec![0.0; obj.dim()];
    obj.risk_grad(data, w, &mut out);
    Ok(out)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
