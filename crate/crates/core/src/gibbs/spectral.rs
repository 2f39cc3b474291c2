//! Spectral gap of `pi` from the Dirichlet form `∫ |∇g|^2 dpi` on the grid.
//!
//! Edges carry the geometric mean of their endpoint densities, the mass
//! matrix is the lumped trapezoid measure, and the smallest nonzero
//! generalized eigenvalue is found by inverse subspace iteration against a
//! banded Cholesky factor of the grounded stiffness matrix.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::GridMeasure;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// Symmetric banded matrix, lower band stored row by row.
#[derive(Clone, Debug)]
struct Banded {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl Banded {
    fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    fn mul(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += self.data[self.idx(i, i)] * x[i];
        }
    }

    /// In-place Cholesky factor `L` with `A = L L^T`.
    fn cholesky(mut self) -> Result<Self> {
        let bw = self.bw;
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(bw));
                let mut s = self.data[self.idx(i, j)];
                let (ri, rj) = (self.idx(i, klo), self.idx(j, klo));
                for t in 0..j - klo {
                    s -= self.data[ri + t] * self.data[rj + t];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::EigenSolve(format!("stiffness matrix not positive definite at row {i}")));
                    }
                    let k = self.idx(i, i);
                    self.data[k] = s.sqrt();
                } else {
                    let k = self.idx(i, j);
                    self.data[k] = s / self.data[self.idx(j, j)];
                }
            }
        }
        Ok(self)
    }

    fn solve(&self, b: &mut [f64]) {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut s = b[i];
            for j in lo..i {
                s -= self.data[self.idx(i, j)] * b[j];
            }
            b[i] = s / self.data[self.idx(i, i)];
        }
        for i in (0..self.n).rev() {
            b[i] /= self.data[self.idx(i, i)];
            let lo = i.saturating_sub(self.bw);
            let bi = b[i];
            for j in lo..i {
                b[j] -= self.data[self.idx(i, j)] * bi;
            }
        }
    }
}

fn stiffness(g: &GridMeasure) -> Banded {
    let floor = g.density.iter().cloned().fold(0.0, f64::max) * 1e-280;
    let p: Vec<f64> = g.density.iter().map(|v| v.max(floor)).collect();
    let add_edge = |k: &mut Banded, a: usize, b: usize, c: f64| {
        k.add(a, a, c);
        k.add(b, b, c);
        k.add(b, a, -c);
    };
    match g.axes.as_slice() {
        [ax] => {
            let mut k = Banded::zeros(ax.n, 1);
            let h = ax.step();
            for i in 0..ax.n - 1 {
                add_edge(&mut k, i, i + 1, p[i].sqrt() * p[i + 1].sqrt() / h);
            }
            k
        }
        [a0, a1] => {
            let (n0, n1) = (a0.n, a1.n);
            let mut k = Banded::zeros(n0 * n1, n1);
            let (h0, h1) = (a0.step(), a1.step());
            for i in 0..n0 {
                for j in 0..n1 {
                    let s = i * n1 + j;
                    if j + 1 < n1 {
                        let t = s + 1;
                        add_edge(&mut k, s, t, p[s].sqrt() * p[t].sqrt() * a0.weight(i) / h1);
                    }
                    if i + 1 < n0 {
                        let t = s + n1;
                        add_edge(&mut k, s, t, p[s].sqrt() * p[t].sqrt() * a1.weight(j) / h0);
                    }
                }
            }
            k
        }
        _ => unreachable!(),
    }
}

/// Smallest nonzero eigenvalue of `K v = lambda D v`.
fn smallest_gap(g: &GridMeasure) -> Result<f64> {
    let n = g.len();
    let d = &g.masses;
    let mut k = stiffness(g);
    let ground = (0..n).max_by(|a, b| g.density[*a].total_cmp(&g.density[*b])).unwrap_or(0);
    let alpha = (0..n).map(|i| k.get(i, i)).fold(0.0, f64::max);
    let k_plain = k.clone();
    k.add(ground, ground, alpha);
    let chol = k.cholesky()?;

    let block = 4.min((n - 1) / 2).max(1);
    let project = |x: &mut [f64]| {
        let c: f64 = x.iter().zip(d).map(|(a, m)| a * m).sum();
        x.iter_mut().for_each(|a| *a -= c);
    };
    let mut rng = stream(0, Purpose::Eigen, n as u64);
    let mut x: Vec<Vec<f64>> = (0..block)
        .map(|_| {
            let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            project(&mut v);
            v
        })
        .collect();
    let mut kx = vec![0.0; n];
    let mut last = f64::INFINITY;
    for iter in 0..1000 {
        let y: Vec<Vec<f64>> = x
            .iter()
            .map(|v| {
                let mut r: Vec<f64> = v.iter().zip(d).map(|(a, m)| a * m).collect();
                chol.solve(&mut r);
                project(&mut r);
                r
            })
            .collect();
        let mut a = DMatrix::zeros(block, block);
        let mut b = DMatrix::zeros(block, block);
        let ky: Vec<Vec<f64>> = y
            .iter()
            .map(|v| {
                k_plain.mul(v, &mut kx);
                kx.clone()
            })
            .collect();
        for i in 0..block {
            for j in 0..=i {
                let aij: f64 = y[i].iter().zip(&ky[j]).map(|(p, q)| p * q).sum();
                let bij: f64 = y[i].iter().zip(&y[j]).zip(d).map(|((p, q), m)| p * q * m).sum();
                a[(i, j)] = aij;
                a[(j, i)] = aij;
                b[(i, j)] = bij;
                b[(j, i)] = bij;
            }
        }
        let l = b
            .clone()
            .cholesky()
            .ok_or_else(|| Error::EigenSolve("Ritz basis lost rank".into()))?
            .l();
        let l_inv = l.try_inverse().ok_or_else(|| Error::EigenSolve("singular Ritz basis".into()))?;
        let c = &l_inv * a * l_inv.transpose();
        let c = (&c + c.transpose()) * 0.5;
        let eig = SymmetricEigen::new(c);
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|p, q| eig.eigenvalues[*p].total_cmp(&eig.eigenvalues[*q]));
        let coef = l_inv.transpose() * &eig.eigenvectors;
        x = order
            .iter()
            .map(|&col| {
                let mut v = vec![0.0; n];
                for (r, yr) in y.iter().enumerate() {
                    let w = coef[(r, col)];
                    v.iter_mut().zip(yr).for_each(|(a, b)| *a += w * b);
                }
                v
            })
            .collect();
        let theta = eig.eigenvalues[order[0]];
        if !theta.is_finite() || theta <= 0.0 {
            return Err(Error::EigenSolve(format!("Ritz value {theta}")));
        }
        if iter >= 3 && (theta - last).abs() <= 1e-12 * theta {
            return Ok(theta);
        }
        last = theta;
    }
    Err(Error::EigenSolve("subspace iteration did not settle".into()))
}

/// The gap at the given resolution and on the grid with every other node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub lambda: f64,
    pub lambda_coarse: f64,
    pub relative_change: f64,
}

/// Fails with `NotConverged` when halving the resolution moves the gap by 1% or more.
pub fn spectral_gap_numeric(g: &GridMeasure) -> Result<GapEstimate> {
    if g.dim() > 2 {
        return Err(Error::UnsupportedDimension(g.dim()));
    }
    let lambda = smallest_gap(g)?;
    let lambda_coarse = smallest_gap(&g.coarsened()?)?;
    let relative_change = (lambda - lambda_coarse).abs() / lambda;
    if relative_change >= 0.01 {
        return Err(Error::NotConverged { coarse: lambda_coarse, fine: lambda });
    }
    Ok(GapEstimate { lambda, lambda_coarse, relative_change })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::Axis;

    fn gaussian(var: f64, half: f64, n: usize) -> GridMeasure {
        GridMeasure::from_fn(vec![Axis::symmetric(half, n).unwrap()], |w| -w[0] * w[0] / (2.0 * var)).unwrap().0
    }

    #[test]
    fn banded_cholesky_matches_dense() {
        let n = 9;
        let mut a = Banded::zeros(n, 3);
        let mut dense = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(3)..=i {
                let v = if i == j { 10.0 + i as f64 } else { ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.6 };
                a.add(i, j, v);
                dense[(i, j)] = v;
                dense[(j, i)] = v;
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = b.clone();
        a.clone().cholesky().unwrap().solve(&mut x);
        let mut back = vec![0.0; n];
        a.mul(&x, &mut back);
        for (p, q) in back.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
        let want = dense.cholesky().unwrap().solve(&nalgebra::DVector::from_vec(b));
        for (p, q) in x.iter().zip(want.iter()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_gap_is_inverse_variance() {
        for var in [0.05, 0.25, 1.0, 5.0] {
            let g = gaussian(var, 12.0 * var.sqrt(), 1601);
            let est = spectral_gap_numeric(&g).unwrap();
            assert!((est.lambda * var - 1.0).abs() < 0.02, "{var} {est:?}");
        }
    }

    #[test]
    fn two_dimensional_gaussian_gap() {
        let axis = Axis::symmetric(6.0, 121).unwrap();
        let g = GridMeasure::from_fn(vec![axis, axis], |w| -0.5 * (w[0] * w[0] + 0.5 * w[1] * w[1])).unwrap().0;
        let est = spectral_gap_numeric(&g).unwrap();
        assert!((est.lambda - 0.5).abs() < 0.01, "{est:?}");
    }

    #[test]
    fn rejects_unresolved_grids() {
        let g = gaussian(1.0, 12.0, 9);
        assert!(matches!(spectral_gap_numeric(&g), Err(Error::NotConverged { .. })));
    }
}
