//! Fixtures shared by the benchmarks in `benches/`.

use std::collections::BTreeMap;
use std::sync::Arc;

use langevin_core::objectives::zoo;
use langevin_core::rng::{stream, Purpose};
use langevin_core::sgld::EmpiricalMeasure;
use langevin_core::{Dataset, Distribution, Objective};
use rand_distr::{Distribution as _, StandardNormal};

/// The default double-well with `n` uniform samples on `[-1, 1]`.
pub fn double_well(n: usize) -> (Arc<dyn Objective>, Dataset) {
    let obj = zoo::build("double_well", &BTreeMap::new()).expect("default parameters are valid");
    let data = Dataset::generate(&Distribution::Uniform { lo: -1.0, hi: 1.0 }, n, 7, 0).expect("n > 0");
    (obj, data)
}

/// `n` standard normal points in dimension `dim`.
pub fn gaussian_cloud(n: usize, dim: usize, index: u64) -> EmpiricalMeasure {
    let mut rng = stream(5, Purpose::Probe, index);
    let pts: Vec<f64> = (0..n * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    EmpiricalMeasure::new(pts, dim).expect("nonempty")
}
