//! 2-Wasserstein distances between empirical and grid measures, the
//! weighted transportation-cost bound and the quadratic-growth continuity
//! bound.

pub mod assignment;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use assignment::min_cost_assignment;

use crate::error::{invalid, Error, Result};
use crate::gibbs::{sample::linear_quantile, GridMeasure};
use crate::rng::{stream, Purpose};
use crate::sgld::EmpiricalMeasure;
use crate::stats::{log_sum_exp, quantile_sorted};

/// Largest point count handed to the assignment solver.
pub const ASSIGNMENT_CAP: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sorted1d,
    Assignment,
    Grid1dCdf,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportPlanResult {
    pub w2: f64,
    pub method: Method,
    /// Points per measure actually transported.
    pub n: usize,
    /// Original count when the assignment path subsampled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsampled_from: Option<usize>,
}

/// Integrates `(qa - qb)^2` over `[0, 1]` for two piecewise quantile
/// functions with knots `ka`, `kb` (each from 0 to 1). Simpson's rule is
/// applied on every interval between merged knots, where both are smooth.
fn merged_quantile_l2(
    ka: &[f64],
    qa: impl Fn(usize, f64) -> f64,
    kb: &[f64],
    qb: impl Fn(usize, f64) -> f64,
) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut lo = 0.0;
    let mut total = 0.0;
    while i + 1 < ka.len() && j + 1 < kb.len() {
        let hi = ka[i + 1].min(kb[j + 1]);
        if hi > lo {
            let mid = 0.5 * (lo + hi);
            let f = |u: f64| (qa(i, u) - qb(j, u)).powi(2);
            total += (hi - lo) / 6.0 * (f(lo) + 4.0 * f(mid) + f(hi));
            lo = hi;
        }
        if ka[i + 1] <= hi {
            i += 1;
        }
        if kb[j + 1] <= hi {
            j += 1;
        }
    }
    total.max(0.0)
}

fn step_knots(n: usize) -> Vec<f64> {
    (0..=n).map(|k| k as f64 / n as f64).collect()
}

/// Quantile function of the piecewise-linear interpolant of a 1D grid density.
struct GridQuantile<'a> {
    g: &'a GridMeasure,
    knots: Vec<f64>,
}

impl<'a> GridQuantile<'a> {
    fn new(g: &'a GridMeasure) -> Result<Self> {
        if g.dim() != 1 {
            return Err(Error::UnsupportedDimension(g.dim()));
        }
        let p = &g.density;
        let mut knots = vec![0.0];
        let mut acc = 0.0;
        for i in 0..p.len() - 1 {
            acc += p[i] + p[i + 1];
            knots.push(acc);
        }
        knots.iter_mut().for_each(|k| *k /= acc);
        *knots.last_mut().unwrap() = 1.0;
        Ok(Self { g, knots })
    }

    fn eval(&self, i: usize, u: f64) -> f64 {
        let a = self.g.axes[0];
        let (lo, hi) = (self.knots[i], self.knots[i + 1]);
        let t = if hi > lo { ((u - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
        a.node(i) + a.step() * linear_quantile(self.g.density[i], self.g.density[i + 1], t)
    }
}

fn sorted(xs: Vec<f64>) -> Vec<f64> {
    let mut xs = xs;
    xs.sort_by(f64::total_cmp);
    xs
}

fn check_pair(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    Ok(())
}

/// Exact 1D distance between two sorted samples of any sizes.
pub fn w2_sorted_1d(a: &[f64], b: &[f64]) -> f64 {
    merged_quantile_l2(&step_knots(a.len()), |i, _| a[i], &step_knots(b.len()), |j, _| b[j]).sqrt()
}

fn assignment_w2(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> f64 {
    let n = a.len();
    let cost = |i: usize, j: usize| a.point(i).iter().zip(b.point(j)).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let (_, total) = min_cost_assignment(n, cost);
    (total.max(0.0) / n as f64).sqrt()
}

fn subsample(m: &EmpiricalMeasure, cap: usize, seed: u64, index: u64) -> Result<EmpiricalMeasure> {
    let mut rng = stream(seed, Purpose::Subsample, index);
    let mut idx = sample_indices(&mut rng, m.len(), cap).into_vec();
    idx.sort_unstable();
    let pts: Vec<f64> = idx.iter().flat_map(|&i| m.point(i).to_vec()).collect();
    EmpiricalMeasure::new(pts, m.dim())
}

/// Empirical `W2`. In 1D the sorted coupling is exact for any counts; in
/// higher dimension the counts must agree and the optimal assignment is
/// solved exactly, on a seeded subsample of `cap` points when larger.
pub fn w2_empirical_capped(a: &EmpiricalMeasure, b: &EmpiricalMeasure, cap: usize, seed: u64) -> Result<TransportPlanResult> {
    check_pair(a, b)?;
    if a.dim() == 1 {
        let w2 = w2_sorted_1d(&sorted(a.coordinate(0)), &sorted(b.coordinate(0)));
        return Ok(TransportPlanResult { w2, method: Method::Sorted1d, n: a.len().max(b.len()), subsampled_from: None });
    }
    if a.len() != b.len() {
        return Err(Error::UnequalCounts { dim: a.dim(), left: a.len(), right: b.len() });
    }
    let n = a.len();
    if n > cap {
        let (sa, sb) = (subsample(a, cap, seed, 0)?, subsample(b, cap, seed, 1)?);
        let w2 = assignment_w2(&sa, &sb);
        return Ok(TransportPlanResult { w2, method: Method::Assignment, n: cap, subsampled_from: Some(n) });
    }
    Ok(TransportPlanResult { w2: assignment_w2(a, b), method: Method::Assignment, n, subsampled_from: None })
}

pub fn w2_empirical(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<TransportPlanResult> {
    w2_empirical_capped(a, b, ASSIGNMENT_CAP, 0)
}

/// `W2` between two 1D grid measures through their quantile functions.
pub fn w2_grid_1d(mu: &GridMeasure, nu: &GridMeasure) -> Result<f64> {
    let (qa, qb) = (GridQuantile::new(mu)?, GridQuantile::new(nu)?);
    Ok(merged_quantile_l2(&qa.knots, |i, u| qa.eval(i, u), &qb.knots, |j, u| qb.eval(j, u)).sqrt())
}

/// `W2` between a 1D sample and a 1D grid measure.
pub fn w2_empirical_vs_grid_1d(a: &EmpiricalMeasure, g: &GridMeasure) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    if a.dim() != 1 {
        return Err(Error::UnsupportedDimension(a.dim()));
    }
    let xs = sorted(a.coordinate(0));
    Ok(w2_sorted_vs_grid(&xs, &GridQuantile::new(g)?))
}

fn w2_sorted_vs_grid(xs: &[f64], q: &GridQuantile) -> f64 {
    merged_quantile_l2(&step_knots(xs.len()), |i, _| xs[i], &q.knots, |j, u| q.eval(j, u)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { replicates: 200, level: 0.95, seed: 0 }
    }
}

/// A measured distance and the bootstrap pad
/// `max(0, upper quantile - measured)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaddedDistance {
    pub w2: f64,
    pub upper: f64,
    pub pad: f64,
}

fn padded(w2: f64, mut reps: Vec<f64>, level: f64) -> PaddedDistance {
    reps.sort_by(f64::total_cmp);
    let upper = quantile_sorted(&reps, level);
    PaddedDistance { w2, upper, pad: (upper - w2).max(0.0) }
}

fn resample(m: &EmpiricalMeasure, idx: &[usize]) -> Result<EmpiricalMeasure> {
    EmpiricalMeasure::new(idx.iter().flat_map(|&i| m.point(i).to_vec()).collect(), m.dim())
}

/// Bootstraps the empirical distance. With `paired`, index `i` of both
/// measures is resampled together, as for coupled runs.
pub fn bootstrap_w2(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    paired: bool,
    cfg: &BootstrapConfig,
) -> Result<PaddedDistance> {
    check_pair(a, b)?;
    if paired && a.len() != b.len() {
        return Err(Error::UnequalCounts { dim: a.dim(), left: a.len(), right: b.len() });
    }
    let w2 = w2_empirical(a, b)?.w2;
    let reps = (0..cfg.replicates)
        .map(|r| {
            let mut rng = stream(cfg.seed, Purpose::Bootstrap, r as u64);
            let ia: Vec<usize> = (0..a.len()).map(|_| rng.random_range(0..a.len())).collect();
            let ib: Vec<usize> = if paired { ia.clone() } else { (0..b.len()).map(|_| rng.random_range(0..b.len())).collect() };
            Ok(w2_empirical(&resample(a, &ia)?, &resample(b, &ib)?)?.w2)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(padded(w2, reps, cfg.level))
}

/// Bootstraps the 1D sample-to-grid distance by resampling the sample.
pub fn bootstrap_w2_vs_grid(a: &EmpiricalMeasure, g: &GridMeasure, cfg: &BootstrapConfig) -> Result<PaddedDistance> {
    let w2 = w2_empirical_vs_grid_1d(a, g)?;
    let q = GridQuantile::new(g)?;
    let xs = a.coordinate(0);
    let reps: Vec<f64> = (0..cfg.replicates)
        .map(|r| {
            let mut rng = stream(cfg.seed, Purpose::Bootstrap, r as u64);
            let ys = sorted((0..xs.len()).map(|_| xs[rng.random_range(0..xs.len())]).collect());
            w2_sorted_vs_grid(&ys, &q)
        })
        .collect();
    Ok(padded(w2, reps, cfg.level))
}

/// The multipliers `2^-6, ..., 2^4` over which the constant is minimised.
pub fn bolley_villani_lambdas() -> Vec<f64> {
    (-6..=4).map(|k| 2f64.powi(k)).collect()
}

/// `C_nu = 2 min_lambda sqrt((3/2 + log ∫ exp(lambda |w|^2) dnu)/lambda)`
/// over [`bolley_villani_lambdas`], skipping multipliers where the MGF is infinite.
pub fn bolley_villani_constant(log_mgf: impl Fn(f64) -> f64) -> Result<f64> {
    bolley_villani_lambdas()
        .into_iter()
        .filter_map(|l| {
            let v = log_mgf(l);
            (v.is_finite() && 1.5 + v > 0.0).then(|| ((1.5 + v) / l).sqrt())
        })
        .min_by(f64::total_cmp)
        .map(|c| 2.0 * c)
        .ok_or(Error::MgfInfinite)
}

/// `C_nu (sqrt(kl) + (kl/2)^{1/4})`.
pub fn bolley_villani_bound(kl: f64, log_mgf: impl Fn(f64) -> f64) -> Result<f64> {
    if !(kl.is_finite() && kl >= 0.0) {
        return Err(invalid("kl", format!("must be finite and nonnegative, got {kl}")));
    }
    if kl == 0.0 {
        return Ok(0.0);
    }
    Ok(bolley_villani_constant(log_mgf)? * (kl.sqrt() + (0.5 * kl).powf(0.25)))
}

/// `log ∫ exp(lambda |w|^2) dg` by quadrature; truncation makes it a lower
/// estimate of the whole-space value.
pub fn grid_log_mgf(g: &GridMeasure) -> impl Fn(f64) -> f64 + '_ {
    let sq: Vec<f64> = g.points().map(|w| w.iter().map(|x| x * x).sum()).collect();
    move |l: f64| log_sum_exp(g.masses.iter().zip(&sq).filter(|(m, _)| **m > 0.0).map(|(m, s)| m.ln() + l * s))
}

/// `(c1 sigma + c2) w2`: the change in `∫ g` between two measures with
/// second moments at most `sigma2` when `|∇g(w)| <= c1 |w| + c2`.
pub fn function_gap_bound(c1: f64, c2: f64, sigma2: f64, w2: f64) -> Result<f64> {
    if !(c1 > 0.0) {
        return Err(invalid("c1", "must be positive"));
    }
    for (name, v) in [("c2", c2), ("sigma2", sigma2), ("w2", w2)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(invalid(name, "must be finite and nonnegative"));
        }
    }
    Ok((c1 * sigma2.sqrt() + c2) * w2)
}
