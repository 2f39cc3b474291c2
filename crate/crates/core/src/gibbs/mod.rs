//! Quadrature Gibbs measures `pi_z ∝ exp(-beta F_z)` on boxes in one or two
//! dimensions, with the functionals needed to test bounds against them.

pub(crate) mod sample;
mod spectral;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::bounds::{gibbs_entropy_bound, gibbs_second_moment_bound, suboptimality_bound, InequalityCheck, Verdict};
use crate::error::{invalid, require_positive, Error, Result};
use crate::objectives::{multistart_points, minimize_empirical, Dataset, Minimum, Objective, RegularityConstants};
use crate::sgld::{EmpiricalMeasure, InitLaw};
use crate::stats::log_sum_exp;

pub use sample::sample_gibbs;
pub use spectral::{spectral_gap_numeric, GapEstimate};

/// Equispaced nodes `lo + i h`, `i = 0..n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid("axis", format!("need lo < hi, got [{lo}, {hi}]")));
        }
        if n < 3 {
            return Err(invalid("axis", "needs at least 3 nodes"));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn symmetric(half_width: f64, n: usize) -> Result<Self> {
        Self::new(-half_width, half_width, n)
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    /// Trapezoid weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n {
            0.5 * self.step()
        } else {
            self.step()
        }
    }

    /// Index of the node nearest to `x`, clamped to the axis.
    pub fn nearest(&self, x: f64) -> usize {
        let t = ((x - self.lo) / self.step()).round();
        t.clamp(0.0, (self.n - 1) as f64) as usize
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    fn coarsened(&self) -> Result<Self> {
        if self.n % 2 == 0 {
            return Err(invalid("axis", "coarsening needs an odd node count"));
        }
        Self::new(self.lo, self.hi, self.n / 2 + 1)
    }

    fn refined(&self) -> Self {
        Self { n: 2 * self.n - 1, ..*self }
    }
}

/// A density on a tensor grid, integrated by the trapezoid rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMeasure {
    pub axes: Vec<Axis>,
    /// Row-major density values, normalised so the trapezoid integral is one.
    pub density: Vec<f64>,
    /// Density times trapezoid weight; sums to one.
    pub masses: Vec<f64>,
}

impl GridMeasure {
    /// Normalises `exp(log_density)` and returns it with the log of the
    /// unnormalised trapezoid integral.
    pub fn from_log_density(axes: Vec<Axis>, log_density: &[f64]) -> Result<(Self, f64)> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::UnsupportedDimension(axes.len()));
        }
        let size: usize = axes.iter().map(|a| a.n).product();
        if log_density.len() != size {
            return Err(Error::DimensionMismatch { expected: size, got: log_density.len() });
        }
        if log_density.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(invalid("log_density", "contains NaN or +inf"));
        }
        let weights = node_weights(&axes);
        let log_z = log_sum_exp(log_density.iter().zip(&weights).map(|(l, w)| l + w.ln()));
        if !log_z.is_finite() {
            return Err(Error::EmptyMeasure);
        }
        let density: Vec<f64> = log_density.iter().map(|l| (l - log_z).exp()).collect();
        let mut masses: Vec<f64> = density.iter().zip(&weights).map(|(p, w)| p * w).collect();
        let total: f64 = masses.iter().sum();
        masses.iter_mut().for_each(|m| *m /= total);
        Ok((Self { axes, density, masses }, log_z))
    }

    pub fn from_fn(axes: Vec<Axis>, log_density: impl Fn(&[f64]) -> f64) -> Result<(Self, f64)> {
        let values: Vec<f64> = GridPoints::new(&axes).map(|w| log_density(&w)).collect();
        Self::from_log_density(axes, &values)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        match self.axes.as_slice() {
            [a] => vec![a.node(idx)],
            [a, b] => vec![a.node(idx / b.n), b.node(idx % b.n)],
            _ => unreachable!(),
        }
    }

    pub fn points(&self) -> GridPoints<'_> {
        GridPoints::new(&self.axes)
    }

    pub fn weights(&self) -> Vec<f64> {
        node_weights(&self.axes)
    }

    pub fn same_grid(&self, other: &GridMeasure) -> bool {
        self.axes == other.axes
    }

    pub fn expect(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.points().zip(&self.masses).map(|(w, m)| m * f(&w)).sum()
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.expect(|w| w[k])).collect()
    }

    pub fn second_moment(&self) -> f64 {
        self.expect(|w| w.iter().map(|x| x * x).sum())
    }

    /// Differential entropy `-∫ p log p` with `0 log 0 = 0`.
    pub fn entropy(&self) -> f64 {
        -self
            .density
            .iter()
            .zip(&self.masses)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, m)| m * p.ln())
            .sum::<f64>()
    }

    /// Keeps every other node on each axis and renormalises.
    pub fn coarsened(&self) -> Result<GridMeasure> {
        let axes: Vec<Axis> = self.axes.iter().map(|a| a.coarsened()).collect::<Result<_>>()?;
        let logs: Vec<f64> = match self.axes.as_slice() {
            [_] => self.density.iter().step_by(2).map(|p| p.ln()).collect(),
            [_, b] => {
                let mut v = Vec::new();
                for i in (0..self.axes[0].n).step_by(2) {
                    for j in (0..b.n).step_by(2) {
                        v.push(self.density[i * b.n + j].ln());
                    }
                }
                v
            }
            _ => unreachable!(),
        };
        Ok(GridMeasure::from_log_density(axes, &logs)?.0)
    }

    /// Writes `w_0[,w_1],density` rows.
    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.dim()).map(|k| format!("w_{k}")).collect();
        header.push("density".into());
        wtr.write_record(&header)?;
        for (w, p) in self.points().zip(&self.density) {
            let mut row: Vec<String> = w.iter().map(|x| format!("{x:?}")).collect();
            row.push(format!("{p:?}"));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the format of [`GridMeasure::write_csv`]; the densities are
    /// renormalised.
    pub fn read_csv(input: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let dim = rdr.headers()?.len().saturating_sub(1);
        if dim == 0 || dim > 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| f.trim().parse::<f64>().map_err(|e| invalid("csv", e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != dim + 1 {
                return Err(invalid("csv", "rows have different lengths"));
            }
            rows.push(row);
        }
        let mut axes = Vec::with_capacity(dim);
        for k in 0..dim {
            let mut xs: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            if xs.len() < 2 {
                return Err(invalid("csv", "each axis needs at least two nodes"));
            }
            axes.push(Axis::new(xs[0], xs[xs.len() - 1], xs.len())?);
        }
        let logs: Vec<f64> = rows.iter().map(|r| r[dim].ln()).collect();
        let (g, _) = GridMeasure::from_log_density(axes, &logs)?;
        let tol = 1e-9 * g.axes.iter().map(|a| a.step()).fold(f64::INFINITY, f64::min);
        for (p, r) in g.points().zip(&rows) {
            if p.iter().zip(r).any(|(a, b)| (a - b).abs() > tol) {
                return Err(invalid("csv", "nodes are not an equispaced row-major grid"));
            }
        }
        Ok(g)
    }
}

/// Row-major iterator over grid nodes.
pub struct GridPoints<'a> {
    axes: &'a [Axis],
    idx: usize,
    len: usize,
}

impl<'a> GridPoints<'a> {
    fn new(axes: &'a [Axis]) -> Self {
        Self { axes, idx: 0, len: axes.iter().map(|a| a.n).product() }
    }
}

impl Iterator for GridPoints<'_> {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        if self.idx >= self.len {
            return None;
        }
        let i = self.idx;
        self.idx += 1;
        Some(match self.axes {
            [a] => vec![a.node(i)],
            [a, b] => vec![a.node(i / b.n), b.node(i % b.n)],
            _ => unreachable!(),
        })
    }
}

fn node_weights(axes: &[Axis]) -> Vec<f64> {
    match axes {
        [a] => (0..a.n).map(|i| a.weight(i)).collect(),
        [a, b] => (0..a.n).flat_map(|i| (0..b.n).map(move |j| a.weight(i) * b.weight(j))).collect(),
        _ => Vec::new(),
    }
}

fn default_tolerance() -> f64 {
    1e-8
}

fn default_true() -> bool {
    true
}

/// How a Gibbs grid is laid out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Nodes per axis; 2049 in 1D and 161 in 2D by default.
    #[serde(default)]
    pub resolution: Option<usize>,
    /// Box half-width; chosen from the tail bound when absent.
    #[serde(default)]
    pub half_width: Option<f64>,
    /// Upper bound on the Gibbs mass outside the box.
    #[serde(default = "default_tolerance")]
    pub tail_tolerance: f64,
    /// Compare `log Λ` with a grid of `2n - 1` nodes per axis.
    #[serde(default = "default_true")]
    pub check_resolution: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { resolution: None, half_width: None, tail_tolerance: default_tolerance(), check_resolution: true }
    }
}

impl GridConfig {
    pub fn resolution_for(&self, dim: usize) -> usize {
        self.resolution.unwrap_or(if dim == 1 { 2049 } else { 161 })
    }
}

/// A Gibbs measure on a grid with the risk values it was built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsMeasure {
    pub grid: GridMeasure,
    /// `F_z` at every node.
    pub risk: Vec<f64>,
    pub beta: f64,
    /// Trapezoid `log ∫_box exp(-beta F_z)`.
    pub log_partition: f64,
    pub half_width: f64,
    /// Upper bound on the mass of `pi_z` outside the box.
    pub tail_mass_bound: f64,
    /// `|log Λ(n) - log Λ(2n - 1)|` when checked.
    pub resolution_drift: Option<f64>,
}

impl GibbsMeasure {
    /// `-log(1 - tail)`: how far the box may understate `log Λ`.
    pub fn log_partition_slack(&self) -> f64 {
        -(-self.tail_mass_bound).ln_1p()
    }
}

/// `log` of an upper bound on `∫_{|w| > R} exp(-beta F)` from the quadratic
/// lower envelope `F(w) >= (m/3)|w|^2 - (b/2) log 3`.
pub fn log_tail_integral(consts: &RegularityConstants, d: usize, beta: f64, radius: f64) -> f64 {
    let a = beta * consts.dissipativity / 3.0;
    let shift = beta * 0.5 * consts.dissipativity_offset * 3f64.ln();
    match d {
        1 => {
            let x = radius * a.sqrt();
            let log_erfc = if x < 25.0 {
                erfc(x).ln()
            } else {
                -x * x - (x * std::f64::consts::PI.sqrt()).ln()
            };
            shift + 0.5 * (std::f64::consts::PI / a).ln() + log_erfc
        }
        _ => shift + (std::f64::consts::PI / a).ln() - a * radius * radius,
    }
}

fn required_half_width(consts: &RegularityConstants, d: usize, beta: f64, log_z: f64, tol: f64) -> f64 {
    let target = tol.ln() + log_z;
    let ok = |r: f64| log_tail_integral(consts, d, beta, r) <= target;
    let mut hi = 1.0;
    while !ok(hi) {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn risk_on_grid(obj: &dyn Objective, data: &Dataset, axes: &[Axis]) -> Vec<f64> {
    GridPoints::new(axes).map(|w| obj.risk(data, &w)).collect()
}

fn gibbs_on(
    obj: &dyn Objective,
    data: &Dataset,
    beta: f64,
    axes: Vec<Axis>,
) -> Result<(GridMeasure, Vec<f64>, f64)> {
    let risk = risk_on_grid(obj, data, &axes);
    let logs: Vec<f64> = risk.iter().map(|f| -beta * f).collect();
    let (grid, log_z) = GridMeasure::from_log_density(axes, &logs)?;
    Ok((grid, risk, log_z))
}

/// Builds `pi_z` on `[-R, R]^d`. Without an explicit half-width, `R` grows
/// until the tail bound over the quadrature partition function is at most
/// the tolerance; the trapezoid value understates the partition function,
/// which keeps the tail estimate conservative.
pub fn build_gibbs(obj: &dyn Objective, data: &Dataset, beta: f64, cfg: &GridConfig) -> Result<GibbsMeasure> {
    require_positive("beta", beta)?;
    require_positive("tail_tolerance", cfg.tail_tolerance)?;
    let d = obj.dim();
    if d > 2 {
        return Err(Error::UnsupportedDimension(d));
    }
    let consts = *obj.constants();
    let n = cfg.resolution_for(d);
    let axes_for = |r: f64| -> Result<Vec<Axis>> { (0..d).map(|_| Axis::symmetric(r, n)).collect() };
    let (mut r, fixed) = match cfg.half_width {
        Some(r) => {
            require_positive("half_width", r)?;
            (r, true)
        }
        None => (3.0 * ((consts.dissipativity_offset + d as f64 / beta) / consts.dissipativity).sqrt() + 1.0, false),
    };
    let (mut grid, mut risk, mut log_z) = gibbs_on(obj, data, beta, axes_for(r)?)?;
    if !fixed {
        for _ in 0..20 {
            let need = required_half_width(&consts, d, beta, log_z, cfg.tail_tolerance);
            if need <= r {
                break;
            }
            r = need.max(1.1 * r);
            (grid, risk, log_z) = gibbs_on(obj, data, beta, axes_for(r)?)?;
        }
    }
    let tail = (log_tail_integral(&consts, d, beta, r) - log_z).exp();
    if tail > cfg.tail_tolerance {
        if fixed {
            log::warn!("box half-width {r} leaves tail mass bound {tail:e}");
        } else {
            return Err(Error::GridDoesNotCover { half_width: r, radius: f64::NAN });
        }
    }
    let drift = if cfg.check_resolution {
        let fine: Vec<Axis> = grid.axes.iter().map(|a| a.refined()).collect();
        let (_, _, log_fine) = gibbs_on(obj, data, beta, fine)?;
        let drift = (log_fine - log_z).abs();
        if drift > 1e-6 {
            return Err(Error::ResolutionTooCoarse(format!(
                "log partition moves by {drift:e} between {n} and {} nodes per axis",
                2 * n - 1
            )));
        }
        Some(drift)
    } else {
        None
    };
    Ok(GibbsMeasure {
        grid,
        risk,
        beta,
        log_partition: log_z,
        half_width: r,
        tail_mass_bound: tail.min(1.0),
        resolution_drift: drift,
    })
}

/// Laplace-type lower bound `-beta F* + (d/2) log(2 pi/(M beta))` on
/// `log Λ_z`, valid at a stationary minimiser.
pub fn partition_lower_bound(obj: &dyn Objective, beta: f64, minimizer: &Minimum) -> Result<f64> {
    require_positive("beta", beta)?;
    if minimizer.grad_norm > 1e-8 {
        return Err(Error::NotStationary(minimizer.grad_norm));
    }
    let d = obj.dim() as f64;
    let mm = obj.constants().smoothness;
    Ok(-beta * minimizer.value + 0.5 * d * (2.0 * std::f64::consts::PI / (mm * beta)).ln())
}

/// Checks `lower <= log Λ_z`, where the true value lies between the
/// quadrature value and that value plus the truncation slack.
pub fn check_partition_bound(g: &GibbsMeasure, lower: f64) -> InequalityCheck {
    let slack = g.log_partition_slack();
    InequalityCheck::new("laplace_partition_lower_bound", lower, 0.5 * slack, g.log_partition + 0.5 * slack)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsStats {
    pub mean: Vec<f64>,
    pub second_moment: f64,
    pub differential_entropy: f64,
}

pub fn gibbs_stats(g: &GridMeasure) -> GibbsStats {
    GibbsStats { mean: g.mean(), second_moment: g.second_moment(), differential_entropy: g.entropy() }
}

/// Second-moment bound `(b + d/beta)/m` and Gaussian entropy bound.
pub fn check_gibbs_moments(stats: &GibbsStats, consts: &RegularityConstants, d: usize, beta: f64) -> Vec<InequalityCheck> {
    vec![
        InequalityCheck::new("gibbs_second_moment", stats.second_moment, 0.0, gibbs_second_moment_bound(consts, d, beta)),
        InequalityCheck::new("gibbs_entropy", stats.differential_entropy, 0.0, gibbs_entropy_bound(consts, d, beta)),
    ]
}

/// `min F_z`: multistart descent, refined against the smallest grid value.
pub fn empirical_minimum(obj: &dyn Objective, data: &Dataset, g: Option<&GibbsMeasure>, seed: u64) -> Result<Minimum> {
    let mut starts = multistart_points(obj.constants(), obj.dim(), 16, seed);
    if let Some(g) = g {
        let best = g
            .risk
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .ok_or(Error::EmptyMeasure)?;
        starts.push(g.grid.point(best));
    }
    minimize_empirical(obj, data, &starts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Suboptimality {
    pub measured: f64,
    pub bound: f64,
    pub f_min: f64,
    pub verdict: Verdict,
}

/// `E_pi F_z - min F_z` against `(d/(2 beta)) log(e M (b beta/d + 1)/m)`;
/// the claim is made for `beta >= 2/m`.
pub fn gibbs_suboptimality(g: &GibbsMeasure, obj: &dyn Objective, f_min: f64) -> Suboptimality {
    let measured = g.grid.masses.iter().zip(&g.risk).map(|(m, f)| m * f).sum::<f64>() - f_min;
    let consts = obj.constants();
    let bound = suboptimality_bound(consts, obj.dim(), g.beta);
    let verdict = if g.beta >= 2.0 / consts.dissipativity {
        Verdict::compare(measured, 0.0, bound)
    } else {
        Verdict::NotApplicable
    };
    Suboptimality { measured, bound, f_min, verdict }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Divergences {
    pub kl: f64,
    pub chi2: f64,
}

/// `KL(mu || pi)` and `chi^2(mu || pi)` by quadrature on a shared grid.
pub fn kl_on_grid(mu: &GridMeasure, pi: &GridMeasure) -> Result<Divergences> {
    if !mu.same_grid(pi) {
        return Err(Error::GridMismatch);
    }
    let mut kl = 0.0;
    let mut chi2 = 0.0;
    for ((pm, pp), (mm, _)) in mu.density.iter().zip(&pi.density).zip(mu.masses.iter().zip(&pi.masses)) {
        if *pm == 0.0 {
            continue;
        }
        if *pp <= 0.0 {
            return Err(invalid("pi", "must be positive wherever mu is"));
        }
        let r = pm / pp;
        kl += mm * r.ln();
        chi2 += mm * r;
    }
    Ok(Divergences { kl: kl.max(0.0), chi2: (chi2 - 1.0).max(0.0) })
}

/// A histogram of samples on the nodes of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub measure: GridMeasure,
    /// Mass added by flooring before renormalisation.
    pub floored_mass: f64,
    /// Samples outside the box, counted at the nearest boundary node.
    pub outside: usize,
}

/// Bins samples to their nearest node, floors the density at `floor` and
/// renormalises.
pub fn histogram_on_grid(axes: &[Axis], samples: &EmpiricalMeasure, floor: f64) -> Result<Histogram> {
    if samples.dim() != axes.len() {
        return Err(Error::DimensionMismatch { expected: axes.len(), got: samples.dim() });
    }
    if samples.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    let weights = node_weights(axes);
    let mut counts = vec![0usize; weights.len()];
    let mut outside = 0;
    for w in samples.iter() {
        if w.iter().zip(axes).any(|(x, a)| !a.contains(*x)) {
            outside += 1;
        }
        let idx = match axes {
            [a] => a.nearest(w[0]),
            [a, b] => a.nearest(w[0]) * b.n + b.nearest(w[1]),
            _ => return Err(Error::UnsupportedDimension(axes.len())),
        };
        counts[idx] += 1;
    }
    let n = samples.len() as f64;
    let mut floored_mass = 0.0;
    let logs: Vec<f64> = counts
        .iter()
        .zip(&weights)
        .map(|(&c, w)| {
            let p = c as f64 / (n * w);
            if p < floor {
                floored_mass += (floor - p) * w;
            }
            p.max(floor).ln()
        })
        .collect();
    let (measure, _) = GridMeasure::from_log_density(axes.to_vec(), &logs)?;
    Ok(Histogram { measure, floored_mass, outside })
}

/// The Gaussian initial law on a grid.
pub fn init_on_grid(init: &InitLaw, axes: &[Axis]) -> Result<GridMeasure> {
    match init {
        InitLaw::Gaussian { sigma2, mean } => {
            let mu = mean.clone().unwrap_or_else(|| vec![0.0; axes.len()]);
            if mu.len() != axes.len() {
                return Err(Error::DimensionMismatch { expected: axes.len(), got: mu.len() });
            }
            Ok(GridMeasure::from_fn(axes.to_vec(), |w| {
                -w.iter().zip(&mu).map(|(x, m)| (x - m).powi(2)).sum::<f64>() / (2.0 * sigma2)
            })?
            .0)
        }
        InitLaw::Point { .. } => Err(invalid("init", "a point mass has no density")),
    }
}

/// `beta (max F_z - min F_z)` over the nodes of a `points`-per-axis grid
/// covering the ball of the given radius.
pub fn osc_on_ball(obj: &dyn Objective, data: &Dataset, beta: f64, radius: f64, points: usize) -> Result<f64> {
    require_positive("radius", radius)?;
    let d = obj.dim();
    if d > 2 {
        return Err(Error::UnsupportedDimension(d));
    }
    let axes: Vec<Axis> = (0..d).map(|_| Axis::symmetric(radius, points)).collect::<Result<_>>()?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for w in GridPoints::new(&axes) {
        if w.iter().map(|x| x * x).sum::<f64>() <= radius * radius * (1.0 + 1e-12) {
            let f = obj.risk(data, &w);
            lo = lo.min(f);
            hi = hi.max(f);
        }
    }
    Ok(beta * (hi - lo))
}
