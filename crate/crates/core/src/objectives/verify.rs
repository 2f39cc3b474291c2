use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{dot, norm, Dataset, Objective};
use crate::rng::{stream, Purpose};

/// Where and how densely to probe the regularity conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    /// Probe radius; defaults to `3 sqrt(b/m + 1)`.
    pub radius: Option<f64>,
    /// Grid points per axis of the dense probe grid.
    pub grid_points: usize,
    /// Random points drawn uniformly from the probe ball.
    pub random_points: usize,
    /// At most this many samples of the dataset are probed (evenly spaced).
    pub max_samples: usize,
    /// Random points used for the finite-difference gradient check.
    pub gradient_probes: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { radius: None, grid_points: 101, random_points: 10_000, max_samples: 16, gradient_probes: 100, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionCheck {
    Nonnegative,
    LossAtOrigin,
    GradAtOrigin,
    Smoothness,
    Dissipativity,
    LowerEnvelope,
    UpperEnvelope,
    GradEnvelope,
    FiniteDifference,
}

/// A probed point at which a check failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub check: AssumptionCheck,
    pub w: Vec<f64>,
    pub sample: usize,
    /// The side of the inequality that should be smaller.
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub passed: bool,
    pub radius: f64,
    pub points: usize,
    pub samples: usize,
    pub violation_counts: BTreeMap<AssumptionCheck, usize>,
    /// First violations found, at most 100.
    pub violations: Vec<Violation>,
    /// Set when `M` is only claimed on a ball, as for the pure quartic well.
    pub smoothness_restricted_to: Option<f64>,
}

const MAX_LISTED: usize = 100;

struct Recorder {
    counts: BTreeMap<AssumptionCheck, usize>,
    list: Vec<Violation>,
}

impl Recorder {
    fn check(&mut self, check: AssumptionCheck, w: &[f64], sample: usize, lhs: f64, rhs: f64) {
        let tol = 1e-9 * (1.0 + lhs.abs() + rhs.abs());
        if lhs <= rhs + tol {
            return;
        }
        *self.counts.entry(check).or_insert(0) += 1;
        if self.list.len() < MAX_LISTED {
            self.list.push(Violation { check, w: w.to_vec(), sample, lhs, rhs });
        }
    }
}

fn ball_point(rng: &mut impl Rng, d: usize, radius: f64) -> Vec<f64> {
    let dir: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let n = norm(&dir).max(1e-300);
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
    dir.iter().map(|x| x * r / n).collect()
}

fn grid_points(d: usize, per_axis: usize, radius: f64) -> Vec<Vec<f64>> {
    if d > 3 || per_axis < 2 {
        return Vec::new();
    }
    let axis: Vec<f64> = (0..per_axis).map(|i| -radius + 2.0 * radius * i as f64 / (per_axis - 1) as f64).collect();
    let total = per_axis.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            let mut w = vec![0.0; d];
            for k in (0..d).rev() {
                w[k] = axis[idx % per_axis];
                idx /= per_axis;
            }
            w
        })
        .filter(|w| norm(w) <= radius)
        .collect()
}

/// Checks the regularity conditions and their quadratic consequences on
/// probe points. Violations are reported, never raised.
pub fn verify_assumptions(obj: &dyn Objective, data: &Dataset, probe: &ProbeConfig) -> AssumptionReport {
    let c = *obj.constants();
    let d = obj.dim();
    let default_radius = 3.0 * (c.dissipativity_offset / c.dissipativity + 1.0).sqrt();
    let mut radius = probe.radius.unwrap_or(default_radius);
    if let Some(r) = obj.smoothness_radius() {
        radius = radius.min(r);
    }
    let mut rng = stream(probe.seed, Purpose::Probe, 0);
    let mut points = grid_points(d, probe.grid_points, radius);
    for _ in 0..probe.random_points {
        points.push(ball_point(&mut rng, d, radius));
    }
    let n = data.len();
    let take = probe.max_samples.clamp(1, n);
    let samples: Vec<usize> = (0..take).map(|i| i * n / take).collect();

    let mut rec = Recorder { counts: BTreeMap::new(), list: Vec::new() };
    let zero = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut g2 = vec![0.0; d];
    for &s in &samples {
        let z = data.sample(s);
        let f0 = obj.loss(&zero, z);
        rec.check(AssumptionCheck::LossAtOrigin, &zero, s, f0.abs(), c.loss_at_origin);
        obj.grad(&zero, z, &mut g);
        rec.check(AssumptionCheck::GradAtOrigin, &zero, s, norm(&g), c.grad_at_origin);
    }
    let step = 0.05 * radius;
    for (pi, w) in points.iter().enumerate() {
        let r = norm(w);
        for &s in &samples {
            let z = data.sample(s);
            let f = obj.loss(w, z);
            obj.grad(w, z, &mut g);
            rec.check(AssumptionCheck::Nonnegative, w, s, 0.0, f);
            rec.check(AssumptionCheck::Dissipativity, w, s, c.dissipativity * r * r - c.dissipativity_offset, dot(w, &g));
            rec.check(AssumptionCheck::LowerEnvelope, w, s, c.loss_lower_envelope(r), f);
            rec.check(AssumptionCheck::UpperEnvelope, w, s, f, c.loss_upper_envelope(r));
            rec.check(AssumptionCheck::GradEnvelope, w, s, norm(&g), c.grad_envelope(r));
            // Pair each point with a nearby one and with the next probe point.
            let near: Vec<f64> = w.iter().map(|x| x + step * (2.0 * rng.random::<f64>() - 1.0)).collect();
            let far = &points[(pi + 1) % points.len()];
            for v in [&near, far] {
                if let Some(rs) = obj.smoothness_radius() {
                    if norm(v) > rs {
                        continue;
                    }
                }
                obj.grad(v, z, &mut g2);
                let dg: f64 = g.iter().zip(&g2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                let dw: f64 = w.iter().zip(v.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                rec.check(AssumptionCheck::Smoothness, w, s, dg, c.smoothness * dw);
            }
        }
    }

    let fd_radius = 2.0 * (c.dissipativity_offset / c.dissipativity + 1.0).sqrt();
    for _ in 0..probe.gradient_probes {
        let w = ball_point(&mut rng, d, fd_radius);
        let s = samples[rng.random_range(0..samples.len())];
        let z = data.sample(s);
        obj.grad(&w, z, &mut g);
        let mut err = 0.0;
        let mut x = w.clone();
        for k in 0..d {
            let h = 1e-6 * w[k].abs().max(1.0);
            x[k] = w[k] + h;
            let fp = obj.loss(&x, z);
            x[k] = w[k] - h;
            let fm = obj.loss(&x, z);
            x[k] = w[k];
            err += ((fp - fm) / (2.0 * h) - g[k]).powi(2);
        }
        rec.check(AssumptionCheck::FiniteDifference, &w, s, err.sqrt(), 1e-5 * norm(&g).max(1.0));
    }

    AssumptionReport {
        passed: rec.counts.is_empty(),
        radius,
        points: points.len(),
        samples: samples.len(),
        violation_counts: rec.counts,
        violations: rec.list,
        smoothness_restricted_to: obj.smoothness_radius(),
    }
}
