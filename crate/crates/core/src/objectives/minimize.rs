use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{dot, norm, Dataset, Objective, RegularityConstants};
use crate::error::{check_dim, Error, Result};
use crate::rng::{stream, Purpose};

/// A local minimiser found by [`minimize_empirical`].
#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub point: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
}

/// Starting points for a multistart search: the origin plus `count` points
/// drawn uniformly from the cube of half-width `sqrt(b/m) + 1`.
pub fn multistart_points(consts: &RegularityConstants, dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let half = (consts.dissipativity_offset / consts.dissipativity).sqrt() + 1.0;
    let mut rng = stream(seed, Purpose::Multistart, 0);
    let mut pts = vec![vec![0.0; dim]];
    for _ in 0..count {
        pts.push((0..dim).map(|_| half * (2.0 * rng.random::<f64>() - 1.0)).collect());
    }
    pts
}

/// Minimises the empirical risk from each start with damped Newton steps
/// (finite-difference Hessian, gradient fallback) and returns the best point.
pub fn minimize_empirical(obj: &dyn Objective, data: &Dataset, starts: &[Vec<f64>]) -> Result<Minimum> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_dim(obj.sample_dim(), data.sample_dim())?;
    let mut best: Option<Minimum> = None;
    for s in starts {
        check_dim(obj.dim(), s.len())?;
        let m = descend(obj, data, s.clone());
        if best.as_ref().map_or(true, |b| m.value < b.value) {
            best = Some(m);
        }
    }
    best.ok_or_else(|| crate::error::invalid("starts", "no starting point given"))
}

fn descend(obj: &dyn Objective, data: &Dataset, mut w: Vec<f64>) -> Minimum {
    let d = w.len();
    let step_scale = 1.0 / obj.constants().smoothness;
    let mut f = obj.risk(data, &w);
    let mut g = vec![0.0; d];
    obj.risk_grad(data, &w, &mut g);
    for _ in 0..10_000 {
        if norm(&g) < 1e-14 {
            break;
        }
        let newton = newton_direction(obj, data, &w, &g);
        let gradient: Vec<f64> = g.iter().map(|x| -step_scale * x).collect();
        let mut moved = false;
        for p in newton.iter().chain(std::iter::once(&gradient)) {
            let slope = dot(&g, p);
            if slope >= 0.0 {
                continue;
            }
            let mut t = 1.0;
            while t > 1e-12 {
                let trial: Vec<f64> = w.iter().zip(p).map(|(a, b)| a + t * b).collect();
                let ft = obj.risk(data, &trial);
                if ft <= f + 1e-4 * t * slope {
                    let mut gt = vec![0.0; d];
                    obj.risk_grad(data, &trial, &mut gt);
                    if ft < f || norm(&gt) < norm(&g) {
                        w = trial;
                        f = ft;
                        g = gt;
                        moved = true;
                    }
                    break;
                }
                t *= 0.5;
            }
            if moved {
                break;
            }
        }
        if !moved {
            break;
        }
    }
    let grad_norm = norm(&g);
    Minimum { point: w, value: f, grad_norm }
}

fn newton_direction(obj: &dyn Objective, data: &Dataset, w: &[f64], g: &[f64]) -> Option<Vec<f64>> {
    let d = w.len();
    let mut h = DMatrix::<f64>::zeros(d, d);
    let mut gp = vec![0.0; d];
    let mut gm = vec![0.0; d];
    let mut x = w.to_vec();
    for j in 0..d {
        let e = 1e-5 * w[j].abs().max(1.0);
        x[j] = w[j] + e;
        obj.risk_grad(data, &x, &mut gp);
        x[j] = w[j] - e;
        obj.risk_grad(data, &x, &mut gm);
        x[j] = w[j];
        for i in 0..d {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * e);
        }
    }
    let sym = (&h + h.transpose()) * 0.5;
    let chol = sym.cholesky()?;
    let p = chol.solve(&(-DVector::from_column_slice(g)));
    Some(p.iter().copied().collect())
}
