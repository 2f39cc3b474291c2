//! Exact draws from the piecewise-linear (1D) or bilinear (2D) interpolant
//! of a grid density.

use rand::Rng;

use super::GridMeasure;
use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;
use crate::sgld::EmpiricalMeasure;

/// Inverse CDF of the density on `[0, 1]` proportional to `a (1 - x) + b x`.
pub(crate) fn linear_quantile(a: f64, b: f64, u: f64) -> f64 {
    let s = a + b;
    if s <= 0.0 {
        return u;
    }
    let den = a + (a * a + u * (b * b - a * a)).max(0.0).sqrt();
    if den <= 0.0 {
        u.sqrt()
    } else {
        (u * s / den).clamp(0.0, 1.0)
    }
}

/// Index `i` with `cum[i] <= t < cum[i + 1]` for a cumulative table starting at zero.
fn locate(cum: &[f64], t: f64) -> usize {
    let i = cum.partition_point(|c| *c <= t);
    i.saturating_sub(1).min(cum.len() - 2)
}

fn cumulative(masses: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut cum = vec![0.0];
    let mut acc = 0.0;
    for m in masses {
        acc += m;
        cum.push(acc);
    }
    cum
}

/// Draws `count` points from the interpolated grid density.
pub fn sample_gibbs(g: &GridMeasure, count: usize, rng: &mut RngStream) -> Result<EmpiricalMeasure> {
    if count == 0 {
        return Err(invalid("count", "must be at least 1"));
    }
    let p = &g.density;
    match g.axes.as_slice() {
        [a] => {
            let h = a.step();
            let cum = cumulative((0..a.n - 1).map(|i| p[i] + p[i + 1]));
            let total = cum[cum.len() - 1];
            let xs = (0..count)
                .map(|_| {
                    let t = rng.random::<f64>() * total;
                    let i = locate(&cum, t);
                    let u = ((t - cum[i]) / (cum[i + 1] - cum[i])).clamp(0.0, 1.0);
                    a.node(i) + h * linear_quantile(p[i], p[i + 1], u)
                })
                .collect::<Vec<_>>();
            EmpiricalMeasure::from_scalars(&xs)
        }
        [a, b] => {
            let (h0, h1, n1) = (a.step(), b.step(), b.n);
            let at = |i: usize, j: usize| p[i * n1 + j];
            let cells = cumulative(
                (0..a.n - 1)
                    .flat_map(|i| (0..n1 - 1).map(move |j| (i, j)))
                    .map(|(i, j)| at(i, j) + at(i + 1, j) + at(i, j + 1) + at(i + 1, j + 1)),
            );
            let total = cells[cells.len() - 1];
            let mut pts = Vec::with_capacity(2 * count);
            for _ in 0..count {
                let c = locate(&cells, rng.random::<f64>() * total);
                let (i, j) = (c / (n1 - 1), c % (n1 - 1));
                let (p00, p10, p01, p11) = (at(i, j), at(i + 1, j), at(i, j + 1), at(i + 1, j + 1));
                let x = linear_quantile(p00 + p01, p10 + p11, rng.random());
                let y = linear_quantile(p00 * (1.0 - x) + p10 * x, p01 * (1.0 - x) + p11 * x, rng.random());
                pts.push(a.node(i) + h0 * x);
                pts.push(b.node(j) + h1 * y);
            }
            EmpiricalMeasure::new(pts, 2)
        }
        axes => Err(Error::UnsupportedDimension(axes.len())),
    }
}
