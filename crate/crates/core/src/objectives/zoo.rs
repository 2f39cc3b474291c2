//! Concrete losses used by the experiments.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::{dot, Dataset, Objective, RegularityConstants};
use crate::error::{invalid, require_positive, Error, Result};

/// `f(w, z) = (c/2)|w|^2`, ignoring `z`. Its Gibbs measure is `N(0, I/(beta c))`.
#[derive(Clone, Debug)]
pub struct Gaussian {
    dim: usize,
    curvature: f64,
    consts: RegularityConstants,
}

impl Gaussian {
    pub fn new(dim: usize, curvature: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        require_positive("curvature", curvature)?;
        let consts = RegularityConstants::new(0.0, 0.0, curvature, curvature, 0.0)?;
        Ok(Self { dim, curvature, consts })
    }
}

impl Objective for Gaussian {
    fn name(&self) -> &str {
        "gaussian"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn sample_dim(&self) -> usize {
        1
    }
    fn loss(&self, w: &[f64], _z: &[f64]) -> f64 {
        0.5 * self.curvature * dot(w, w)
    }
    fn grad(&self, w: &[f64], _z: &[f64], out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(w) {
            *o = self.curvature * x;
        }
    }
    fn constants(&self) -> &RegularityConstants {
        &self.consts
    }
    fn risk(&self, _data: &Dataset, w: &[f64]) -> f64 {
        self.loss(w, &[])
    }
    fn risk_grad(&self, _data: &Dataset, w: &[f64], out: &mut [f64]) {
        self.grad(w, &[], out)
    }
}

/// Squared-error location loss `f(w, z) = |w - z|^2 / 2` for `|z| <= z_max`.
#[derive(Clone, Debug)]
pub struct Quadratic {
    dim: usize,
    consts: RegularityConstants,
}

impl Quadratic {
    pub fn new(dim: usize, z_max: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        if !(z_max.is_finite() && z_max >= 0.0) {
            return Err(invalid("z_max", "must be finite and nonnegative"));
        }
        let half_sq = 0.5 * z_max * z_max;
        let consts = RegularityConstants::new(half_sq, z_max, 1.0, 0.5, half_sq)?;
        Ok(Self { dim, consts })
    }
}

impl Objective for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn sample_dim(&self) -> usize {
        self.dim
    }
    fn loss(&self, w: &[f64], z: &[f64]) -> f64 {
        0.5 * w.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    }
    fn grad(&self, w: &[f64], z: &[f64], out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(w).zip(z) {
            *o = a - b;
        }
    }
    fn constants(&self) -> &RegularityConstants {
        &self.consts
    }
    fn risk(&self, data: &Dataset, w: &[f64]) -> f64 {
        let m = data.mean();
        let s = data.mean_sq();
        (0..self.dim).map(|j| 0.5 * w[j] * w[j] - w[j] * m[j] + 0.5 * s[j]).sum()
    }
    fn risk_grad(&self, data: &Dataset, w: &[f64], out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(w).zip(data.mean()) {
            *o = a - b;
        }
    }
}

/// Tilted double well `f(w, z) = q(w) + z w + (gamma/2) w^2 + c` in one dimension.
///
/// `q(w) = (w^2 - 1)^2 / 4` inside `|w| <= r`; outside it continues as its
/// second-order Taylor expansion at `+-r`, which keeps the gradient globally
/// Lipschitz. With `tail_radius = None` the quartic is used everywhere and
/// `M` is only valid on the probe ball of radius `probe_radius`.
/// The offset `c` makes the loss nonnegative for all `|z| <= z_max`.
#[derive(Clone, Debug)]
pub struct DoubleWell {
    gamma: f64,
    z_max: f64,
    tail_radius: Option<f64>,
    probe_radius: Option<f64>,
    offset: f64,
    consts: RegularityConstants,
}

impl DoubleWell {
    /// Globally smooth double well with quadratic tails beyond `tail_radius`.
    pub fn new(gamma: f64, z_max: f64, tail_radius: f64) -> Result<Self> {
        require_positive("tail_radius", tail_radius)?;
        if tail_radius <= 1.0 / 3f64.sqrt() {
            return Err(invalid("tail_radius", "must exceed 1/sqrt(3) so the tails are convex"));
        }
        Self::build(gamma, z_max, Some(tail_radius), None, None)
    }

    /// Pure quartic; `M` holds on `|w| <= probe_radius` only.
    pub fn quartic(gamma: f64, z_max: f64, dissipativity: f64, probe_radius: f64) -> Result<Self> {
        require_positive("probe_radius", probe_radius)?;
        require_positive("dissipativity", dissipativity)?;
        Self::build(gamma, z_max, None, Some(probe_radius), Some(dissipativity))
    }

    fn build(gamma: f64, z_max: f64, tail: Option<f64>, probe: Option<f64>, m: Option<f64>) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(invalid("gamma", "must be finite and nonnegative"));
        }
        if !(z_max.is_finite() && z_max >= 0.0) {
            return Err(invalid("z_max", "must be finite and nonnegative"));
        }
        let mut dw = Self {
            gamma,
            z_max,
            tail_radius: tail,
            probe_radius: probe,
            offset: 0.0,
            consts: RegularityConstants {
                loss_at_origin: 0.0,
                grad_at_origin: 0.0,
                smoothness: 1.0,
                dissipativity: 1.0,
                dissipativity_offset: 0.0,
            },
        };
        let curv_max = match (tail, probe) {
            (Some(r), _) => 3.0 * r * r - 1.0,
            (None, Some(p)) => 3.0 * p * p - 1.0,
            (None, None) => unreachable!(),
        };
        let smoothness = (curv_max + gamma).max((gamma - 1.0).abs());
        let m = match (tail, m) {
            (Some(r), _) => 0.5 * (dw.q2(r) + gamma),
            (None, Some(m)) => m,
            (None, None) => unreachable!(),
        };
        let b = dw.dissipativity_sup(m);
        dw.offset = (-dw.tilted_min()).max(0.0);
        dw.consts = RegularityConstants::new(0.25 + dw.offset, z_max, smoothness, m.min(smoothness), b)?;
        Ok(dw)
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn q(&self, w: f64) -> f64 {
        let a = w.abs();
        match self.tail_radius {
            Some(r) if a > r => {
                let t = a - r;
                0.25 * (r * r - 1.0).powi(2) + self.q1(r) * t + 0.5 * self.q2(r) * t * t
            }
            _ => 0.25 * (w * w - 1.0).powi(2),
        }
    }

    fn q1(&self, w: f64) -> f64 {
        let a = w.abs();
        match self.tail_radius {
            Some(r) if a > r => w.signum() * ((r * r - 1.0) * r + self.q2(r) * (a - r)),
            _ => w * (w * w - 1.0),
        }
    }

    fn q2(&self, w: f64) -> f64 {
        let a = match self.tail_radius {
            Some(r) => w.abs().min(r),
            None => w.abs(),
        };
        3.0 * a * a - 1.0
    }

    /// Rigorous upper bound on `sup_{w >= 0} (m - gamma) w^2 - w q'(w) + z_max w`.
    fn dissipativity_sup(&self, m: f64) -> f64 {
        let g = |w: f64| (m - self.gamma) * w * w - w * self.q1(w) + self.z_max * w;
        let (inner_hi, tail_max) = match self.tail_radius {
            Some(r) => {
                let a = m - self.gamma - self.q2(r);
                let lin = self.q2(r) * r - self.q1(r) + self.z_max;
                let w_star = if a < 0.0 { (-lin / (2.0 * a)).max(r) } else { f64::INFINITY };
                (r, if w_star.is_finite() { g(w_star).max(g(r)) } else { f64::INFINITY })
            }
            None => {
                let c = (m - self.gamma + 1.0).abs();
                (2.0 * (1.0 + c.sqrt() + self.z_max.cbrt()), f64::NEG_INFINITY)
            }
        };
        let w = inner_hi;
        let lip = 2.0 * (m - self.gamma).abs() * w + (w * w * w + w) + w * (3.0 * w * w + 1.0) + self.z_max;
        let inner = scan_max(g, 0.0, inner_hi, lip);
        inner.max(tail_max).max(0.0)
    }

    /// Rigorous lower bound on `inf_w q(w) - z_max |w| + (gamma/2) w^2`.
    fn tilted_min(&self) -> f64 {
        let h = |w: f64| self.q(w) - self.z_max * w + 0.5 * self.gamma * w * w;
        let (hi, tail_min) = match self.tail_radius {
            Some(r) => {
                let a = 0.5 * (self.q2(r) + self.gamma);
                // h(r + t) = h(r) + slope t + a t^2 for t > 0.
                let slope = self.q1(r) - self.z_max + self.gamma * r;
                let t = (-slope / (2.0 * a)).max(0.0);
                (r, h(r) + a * t * t + slope * t)
            }
            None => (2.0 + self.z_max.cbrt() + 1.0, f64::INFINITY),
        };
        let lip = hi * hi * hi + hi + self.z_max + self.gamma * hi;
        scan_min(h, 0.0, hi, lip).min(tail_min)
    }
}

fn scan_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, lip: f64) -> f64 {
    const N: usize = 200_000;
    let h = (hi - lo) / N as f64;
    let best = (0..=N).map(|i| f(lo + h * i as f64)).fold(f64::NEG_INFINITY, f64::max);
    best + 0.5 * lip * h
}

fn scan_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, lip: f64) -> f64 {
    -scan_max(|x| -f(x), lo, hi, lip)
}

impl Objective for DoubleWell {
    fn name(&self) -> &str {
        "double_well"
    }
    fn dim(&self) -> usize {
        1
    }
    fn sample_dim(&self) -> usize {
        1
    }
    fn loss(&self, w: &[f64], z: &[f64]) -> f64 {
        let x = w[0];
        self.q(x) + z[0] * x + 0.5 * self.gamma * x * x + self.offset
    }
    fn grad(&self, w: &[f64], z: &[f64], out: &mut [f64]) {
        let x = w[0];
        out[0] = self.q1(x) + z[0] + self.gamma * x;
    }
    fn constants(&self) -> &RegularityConstants {
        &self.consts
    }
    fn smoothness_radius(&self) -> Option<f64> {
        self.probe_radius
    }
    fn risk(&self, data: &Dataset, w: &[f64]) -> f64 {
        self.loss(w, data.mean())
    }
    fn risk_grad(&self, data: &Dataset, w: &[f64], out: &mut [f64]) {
        self.grad(w, data.mean(), out)
    }
}

/// A Lipschitz, smooth base loss that can be made dissipative by weight decay.
pub trait LipschitzLoss: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn sample_dim(&self) -> usize;
    fn loss(&self, w: &[f64], z: &[f64]) -> f64;
    fn grad(&self, w: &[f64], z: &[f64], out: &mut [f64]);
    /// Bound on `|grad f(w, z)|` over all `w` and `z`.
    fn lipschitz(&self) -> f64;
    /// Lipschitz constant of the gradient.
    fn smoothness(&self) -> f64;
    /// Bound on `f(0, z)`.
    fn loss_at_origin(&self) -> f64;
    /// Bound on `|grad f(0, z)|`.
    fn grad_at_origin(&self) -> f64;
}

/// The zero loss; with weight decay it becomes a Gaussian potential.
#[derive(Clone, Debug)]
pub struct ZeroLoss {
    pub dim: usize,
}

impl LipschitzLoss for ZeroLoss {
    fn name(&self) -> &str {
        "zero"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn sample_dim(&self) -> usize {
        1
    }
    fn loss(&self, _w: &[f64], _z: &[f64]) -> f64 {
        0.0
    }
    fn grad(&self, _w: &[f64], _z: &[f64], out: &mut [f64]) {
        out.fill(0.0)
    }
    fn lipschitz(&self) -> f64 {
        0.0
    }
    fn smoothness(&self) -> f64 {
        0.0
    }
    fn loss_at_origin(&self) -> f64 {
        0.0
    }
    fn grad_at_origin(&self) -> f64 {
        0.0
    }
}

/// Logistic loss `log(1 + exp(-y <x, w>))` on samples `z = (x, y)` with
/// `|x| <= x_max` and `y` in `{-1, 1}`.
#[derive(Clone, Debug)]
pub struct LogisticLoss {
    dim: usize,
    x_max: f64,
}

impl LogisticLoss {
    pub fn new(dim: usize, x_max: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        require_positive("x_max", x_max)?;
        Ok(Self { dim, x_max })
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LipschitzLoss for LogisticLoss {
    fn name(&self) -> &str {
        "logistic"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn sample_dim(&self) -> usize {
        self.dim + 1
    }
    fn loss(&self, w: &[f64], z: &[f64]) -> f64 {
        let (x, y) = z.split_at(self.dim);
        softplus(-y[0] * dot(x, w))
    }
    fn grad(&self, w: &[f64], z: &[f64], out: &mut [f64]) {
        let (x, y) = z.split_at(self.dim);
        let s = -y[0] * sigmoid(-y[0] * dot(x, w));
        for (o, xi) in out.iter_mut().zip(x) {
            *o = s * xi;
        }
    }
    fn lipschitz(&self) -> f64 {
        self.x_max
    }
    fn smoothness(&self) -> f64 {
        0.25 * self.x_max * self.x_max
    }
    fn loss_at_origin(&self) -> f64 {
        std::f64::consts::LN_2
    }
    fn grad_at_origin(&self) -> f64 {
        0.5 * self.x_max
    }
}

/// `f(w, z) + (gamma/2)|w|^2` for a Lipschitz base loss.
#[derive(Clone, Debug)]
pub struct WeightDecayed {
    base: Arc<dyn LipschitzLoss>,
    gamma: f64,
    name: String,
    consts: RegularityConstants,
}

/// Adds weight decay to a Lipschitz loss. The result satisfies the regularity
/// conditions with `m = gamma/2`, `b = L^2/(2 gamma)` and `M = M_0 + gamma`.
pub fn with_weight_decay(base: Arc<dyn LipschitzLoss>, gamma: f64) -> Result<WeightDecayed> {
    require_positive("gamma", gamma)?;
    let l = base.lipschitz();
    let consts = RegularityConstants::new(
        base.loss_at_origin(),
        base.grad_at_origin(),
        base.smoothness() + gamma,
        0.5 * gamma,
        l * l / (2.0 * gamma),
    )?;
    let name = base.name().to_string();
    Ok(WeightDecayed { base, gamma, name, consts })
}

impl Objective for WeightDecayed {
    fn name(&self) -> &str {
        &self.name
    }
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn sample_dim(&self) -> usize {
        self.base.sample_dim()
    }
    fn loss(&self, w: &[f64], z: &[f64]) -> f64 {
        self.base.loss(w, z) + 0.5 * self.gamma * dot(w, w)
    }
    fn grad(&self, w: &[f64], z: &[f64], out: &mut [f64]) {
        self.base.grad(w, z, out);
        for (o, x) in out.iter_mut().zip(w) {
            *o += self.gamma * x;
        }
    }
    fn constants(&self) -> &RegularityConstants {
        &self.consts
    }
}

fn param(params: &BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

/// Builds a named objective. Recognised names and parameters (defaults):
///
/// * `double_well`: `gamma` (0.1), `z_max` (1), `tail_radius` (1.25)
/// * `logistic`: `dim` (2), `x_max` (1), `gamma` (2)
/// * `quadratic`: `dim` (1), `z_max` (1)
/// * `gaussian`: `dim` (1), `curvature` (1)
pub fn build(name: &str, params: &BTreeMap<String, f64>) -> Result<Arc<dyn Objective>> {
    let dim = |default: f64| {
        let d = param(params, "dim", default);
        if d >= 1.0 && d.fract() == 0.0 {
            Ok(d as usize)
        } else {
            Err(invalid("dim", format!("must be a positive integer, got {d}")))
        }
    };
    Ok(match name {
        "double_well" => Arc::new(DoubleWell::new(
            param(params, "gamma", 0.1),
            param(params, "z_max", 1.0),
            param(params, "tail_radius", 1.25),
        )?),
        "logistic" => {
            let base = LogisticLoss::new(dim(2.0)?, param(params, "x_max", 1.0))?;
            Arc::new(with_weight_decay(Arc::new(base), param(params, "gamma", 2.0))?)
        }
        "quadratic" => Arc::new(Quadratic::new(dim(1.0)?, param(params, "z_max", 1.0))?),
        "gaussian" => Arc::new(Gaussian::new(dim(1.0)?, param(params, "curvature", 1.0))?),
        other => return Err(Error::Unknown { kind: "objective", name: other.to_string() }),
    })
}
