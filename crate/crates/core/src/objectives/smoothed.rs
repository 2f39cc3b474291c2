use serde::{Deserialize, Serialize};

use super::{Dataset, Objective, RegularityConstants};
use crate::error::{check_dim, require_positive, Error, Result};
use crate::stats::log_sum_exp;

/// Fixed tensor grid used to evaluate the smoothing integral.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    pub points_per_axis: usize,
    /// Half-width of the grid box; defaults to the smoothing radius.
    pub half_width: Option<f64>,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { points_per_axis: 801, half_width: None }
    }
}

/// `F~(w) = -(1/beta) log int_{|v| <= R} exp(-beta gamma |v - w|^2 / 2 - beta F_z(v)) dv`
/// plus a constant offset that keeps it nonnegative.
#[derive(Clone, Debug)]
pub struct SmoothedObjective {
    name: String,
    dim: usize,
    sample_dim: usize,
    beta: f64,
    gamma: f64,
    radius: f64,
    nodes: Vec<f64>,
    log_weights: Vec<f64>,
    offset: f64,
    consts: RegularityConstants,
}

/// Builds the smoothed version of the empirical risk of `obj` on `data`.
pub fn smoothed_objective(
    obj: &dyn Objective,
    data: &Dataset,
    beta: f64,
    gamma: f64,
    radius: f64,
    quad: &QuadratureConfig,
) -> Result<SmoothedObjective> {
    require_positive("beta", beta)?;
    require_positive("gamma", gamma)?;
    require_positive("radius", radius)?;
    check_dim(obj.sample_dim(), data.sample_dim())?;
    let d = obj.dim();
    if d > 2 {
        return Err(Error::UnsupportedDimension(d));
    }
    let half = quad.half_width.unwrap_or(radius);
    if half < radius {
        return Err(Error::GridDoesNotCover { half_width: half, radius });
    }
    let n = quad.points_per_axis;
    if n < 3 {
        return Err(crate::error::invalid("points_per_axis", "must be at least 3"));
    }
    let h = 2.0 * half / (n - 1) as f64;
    let axis: Vec<f64> = (0..n).map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64).collect();
    let trap = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
    let mut nodes = Vec::new();
    let mut log_vol_weights = Vec::new();
    let mut log_weights = Vec::new();
    let total = n.pow(d as u32);
    for idx in 0..total {
        let (mut rest, mut weight, mut r2) = (idx, h.powi(d as i32), 0.0);
        let mut v = [0.0; 2];
        for k in (0..d).rev() {
            let i = rest % n;
            rest /= n;
            v[k] = axis[i];
            weight *= trap(i);
            r2 += axis[i] * axis[i];
        }
        if r2 > radius * radius * (1.0 + 1e-12) {
            continue;
        }
        let f = obj.risk(data, &v[..d]);
        nodes.extend_from_slice(&v[..d]);
        log_vol_weights.push(weight.ln());
        log_weights.push(weight.ln() - beta * f);
    }
    if log_weights.is_empty() {
        return Err(Error::ResolutionTooCoarse("no quadrature node inside the smoothing ball".into()));
    }
    let offset = (log_sum_exp(log_vol_weights.iter().copied()) / beta).max(0.0);
    let mut s = SmoothedObjective {
        name: format!("smoothed_{}", obj.name()),
        dim: d,
        sample_dim: obj.sample_dim(),
        beta,
        gamma,
        radius,
        nodes,
        log_weights,
        offset,
        consts: RegularityConstants {
            loss_at_origin: 0.0,
            grad_at_origin: gamma * radius,
            smoothness: gamma.max(beta * gamma * gamma * radius * radius - gamma),
            dissipativity: 0.5 * gamma,
            dissipativity_offset: 0.5 * gamma * radius * radius,
        },
    };
    s.consts.loss_at_origin = s.value(&vec![0.0; d]);
    s.consts.validate()?;
    Ok(s)
}

impl SmoothedObjective {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    fn exponents(&self, w: &[f64]) -> Vec<f64> {
        let c = 0.5 * self.beta * self.gamma;
        self.nodes
            .chunks_exact(self.dim)
            .zip(&self.log_weights)
            .map(|(v, lw)| lw - c * v.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .collect()
    }

    /// `F~(w)` including the offset.
    pub fn value(&self, w: &[f64]) -> f64 {
        -log_sum_exp(self.exponents(w)) / self.beta + self.offset
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    fn gradient(&self, w: &[f64], out: &mut [f64]) {
        let e = self.exponents(w);
        let lse = log_sum_exp(e.iter().copied());
        let mut mean = [0.0; 2];
        for (v, x) in self.nodes.chunks_exact(self.dim).zip(&e) {
            let p = (x - lse).exp();
            for k in 0..self.dim {
                mean[k] += p * v[k];
            }
        }
        for k in 0..self.dim {
            out[k] = self.gamma * (w[k] - mean[k]);
        }
    }
}

impl Objective for SmoothedObjective {
    fn name(&self) -> &str {
        &self.name
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn sample_dim(&self) -> usize {
        self.sample_dim
    }
    fn loss(&self, w: &[f64], _z: &[f64]) -> f64 {
        self.value(w)
    }
    fn grad(&self, w: &[f64], _z: &[f64], out: &mut [f64]) {
        self.gradient(w, out)
    }
    fn constants(&self) -> &RegularityConstants {
        &self.consts
    }
    fn risk(&self, _data: &Dataset, w: &[f64]) -> f64 {
        self.value(w)
    }
    fn risk_grad(&self, _data: &Dataset, w: &[f64], out: &mut [f64]) {
        self.gradient(w, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::zoo::Gaussian;
    use statrs::distribution::{ContinuousCDF, Normal};

    /// Closed form for a Gaussian base `F(v) = c v^2 / 2` in one dimension.
    fn oracle(beta: f64, gamma: f64, c: f64, r: f64, w: f64) -> f64 {
        let a = beta * (gamma + c);
        let mu = gamma * w / (gamma + c);
        let phi = Normal::new(0.0, 1.0).unwrap();
        let mass = phi.cdf(a.sqrt() * (r - mu)) - phi.cdf(a.sqrt() * (-r - mu));
        gamma * c / (2.0 * (gamma + c)) * w * w - ((2.0 * std::f64::consts::PI / a).sqrt() * mass).ln() / beta
    }

    #[test]
    fn matches_gaussian_convolution_oracle() {
        let base = Gaussian::new(1, 1.0).unwrap();
        let data = Dataset::from_scalars(&[0.0]).unwrap();
        for &(beta, gamma, r) in &[(1.0, 1.0, 20.0), (1.0, 1.0, 0.5), (2.0, 0.5, 1.5)] {
            let quad = QuadratureConfig { points_per_axis: 4001, half_width: None };
            let s = smoothed_objective(&base, &data, beta, gamma, r, &quad).unwrap();
            for &w in &[0.0, 1.0, -0.7] {
                let got = s.value(&[w]) - s.value(&[0.0]);
                let want = oracle(beta, gamma, 1.0, r, w) - oracle(beta, gamma, 1.0, r, 0.0);
                assert!((got - want).abs() < 1e-6, "beta {beta} gamma {gamma} R {r} w {w}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let base = crate::objectives::zoo::DoubleWell::new(0.1, 1.0, 1.25).unwrap();
        let data = Dataset::from_scalars(&[0.2, -0.1]).unwrap();
        let s = smoothed_objective(&base, &data, 2.0, 1.0, 1.5, &QuadratureConfig::default()).unwrap();
        for &w in &[-2.0, -0.3, 0.0, 0.8, 3.0] {
            let mut g = [0.0];
            s.grad(&[w], &[0.0], &mut g);
            let h = 1e-5;
            let fd = (s.value(&[w + h]) - s.value(&[w - h])) / (2.0 * h);
            assert!((g[0] - fd).abs() <= 1e-5 * g[0].abs().max(1.0), "w {w}: {} vs {fd}", g[0]);
        }
        assert!(s.value(&[0.0]) >= 0.0);
    }

    #[test]
    fn rejects_grid_that_misses_the_ball() {
        let base = Gaussian::new(1, 1.0).unwrap();
        let data = Dataset::from_scalars(&[0.0]).unwrap();
        let quad = QuadratureConfig { points_per_axis: 101, half_width: Some(1.0) };
        assert!(matches!(
            smoothed_objective(&base, &data, 1.0, 1.0, 2.0, &quad),
            Err(Error::GridDoesNotCover { .. })
        ));
    }

    #[test]
    fn two_dimensional_smoothing_is_symmetric() {
        let base = Gaussian::new(2, 1.0).unwrap();
        let data = Dataset::from_scalars(&[0.0]).unwrap();
        let quad = QuadratureConfig { points_per_axis: 101, half_width: None };
        let s = smoothed_objective(&base, &data, 1.0, 1.0, 1.0, &quad).unwrap();
        assert!((s.value(&[0.3, 0.0]) - s.value(&[0.0, 0.3])).abs() < 1e-12);
    }
}
