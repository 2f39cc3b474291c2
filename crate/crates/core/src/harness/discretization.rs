use rand::Rng;
use rayon::prelude::*;

use super::{ExperimentConfig, ExperimentReport, Row};
use crate::bounds::w2_discretization_bound;
use crate::diffusion::{run_coupled, CoupledConfig};
use crate::error::Result;
use crate::oracles::{GradientOracle, OracleSpec};
use crate::rng::{stream, Purpose};
use crate::sgld::EmpiricalMeasure;
use crate::stats::{linear_fit, quantile_sorted};
use crate::transport::{bootstrap_w2, w2_empirical, BootstrapConfig};

struct Point {
    eta: f64,
    delta: f64,
    w2: f64,
    pad: f64,
    row: Row,
    sgld: EmpiricalMeasure,
    diffusion: EmpiricalMeasure,
}

fn resample(m: &EmpiricalMeasure, idx: &[usize]) -> Result<EmpiricalMeasure> {
    EmpiricalMeasure::new(idx.iter().flat_map(|&i| m.point(i).to_vec()).collect(), m.dim())
}

/// `W2(a) - W2(b)` for two coupled runs on the same replicas. Replica
/// indices are resampled jointly in both runs; the pad is the distance from
/// the bootstrap median to its upper quantile, which is insensitive to the
/// resampling bias of `W2`.
fn paired_difference(a: &Point, b: &Point, cfg: &BootstrapConfig) -> Result<(f64, f64)> {
    let diff = a.w2 - b.w2;
    let n = a.sgld.len();
    let mut reps = (0..cfg.replicates)
        .map(|r| {
            let mut rng = stream(cfg.seed, Purpose::Bootstrap, r as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let wa = w2_empirical(&resample(&a.sgld, &idx)?, &resample(&a.diffusion, &idx)?)?.w2;
            let wb = w2_empirical(&resample(&b.sgld, &idx)?, &resample(&b.diffusion, &idx)?)?.w2;
            Ok(wa - wb)
        })
        .collect::<Result<Vec<f64>>>()?;
    reps.sort_by(f64::total_cmp);
    Ok((diff, (quantile_sorted(&reps, cfg.level) - quantile_sorted(&reps, 0.5)).max(0.0)))
}

/// SGLD against the diffusion driven by the same Brownian path, for every
/// `eta` in the sweep (full gradients) and every oracle in the sweep (at
/// `cfg.eta`), all run to `k eta = cfg.horizon`.
pub fn exp_discretization(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let obj = cfg.objective.build()?;
    let data = cfg.data.load(None, 0)?;
    let n = data.len();

    let mut runs: Vec<(f64, OracleSpec)> = cfg.sweep.eta.iter().map(|&e| (e, OracleSpec::Full)).collect();
    for o in &cfg.sweep.oracles {
        if !runs.contains(&(cfg.eta, o.clone())) {
            runs.push((cfg.eta, o.clone()));
        }
    }

    let points: Vec<Result<Point>> = runs
        .par_iter()
        .enumerate()
        .map(|(i, (eta, oracle))| {
            let (eta, delta) = (*eta, oracle.delta());
            let steps = (cfg.horizon / eta).round().max(1.0) as usize;
            let run = run_coupled(
                obj.as_ref(),
                &data,
                oracle,
                &CoupledConfig {
                    eta,
                    steps,
                    refine: cfg.refine,
                    beta: cfg.beta,
                    replicas: cfg.replicas,
                    seed: cfg.seed,
                    init: cfg.init.clone(),
                },
            )?;
            let boot = BootstrapConfig { seed: cfg.bootstrap.seed.wrapping_add(i as u64), ..cfg.bootstrap };
            let dist = bootstrap_w2(&run.sgld, &run.diffusion, true, &boot)?;
            let coupling_rms = (run
                .sgld
                .iter()
                .zip(run.diffusion.iter())
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>())
                .sum::<f64>()
                / run.sgld.len() as f64)
                .sqrt();
            let inp = cfg.bounds_input(obj.as_ref(), n, cfg.beta, delta, 1.0)?;
            let bound = w2_discretization_bound(&inp, steps as u64, eta);
            let row = Row::from_bound("w2_discretization", dist.w2, dist.pad, bound)?
                .param("eta", eta)
                .param("delta", delta)
                .param("k", steps as f64)
                .param("k_eta", steps as f64 * eta)
                .extra("coupling_rms", coupling_rms);
            Ok(Point { eta, delta, w2: dist.w2, pad: dist.pad, row, sgld: run.sgld, diffusion: run.diffusion })
        })
        .collect();

    let mut report = ExperimentReport::new(cfg);
    let mut done = Vec::new();
    for p in points {
        let p = p?;
        report.point(if p.delta == 0.0 { "w2_vs_eta" } else { "w2_vs_delta" }, if p.delta == 0.0 { p.eta } else { p.delta }, p.w2, p.pad);
        report.push(p.row.clone());
        done.push(p);
    }

    let mut by_eta: Vec<&Point> = done.iter().filter(|p| p.delta == 0.0).collect();
    by_eta.sort_by(|a, b| b.eta.total_cmp(&a.eta));
    for w in by_eta.windows(2) {
        let (big, small) = (w[0], w[1]);
        let (diff, pad) = paired_difference(small, big, &cfg.bootstrap)?;
        report.push(
            Row::new("w2_shrinks_with_eta", diff, pad, 0.0)
                .param("eta_large", big.eta)
                .param("eta_small", small.eta),
        );
    }
    if by_eta.len() >= 2 {
        let x: Vec<f64> = by_eta.iter().map(|p| p.eta.ln()).collect();
        let y: Vec<f64> = by_eta.iter().map(|p| p.w2.ln()).collect();
        let fit = linear_fit(&x, &y);
        report.constant("eta_exponent", fit.slope);
        report.constant("eta_exponent_se", fit.slope_se);
    }

    let mut by_delta: Vec<&Point> = done.iter().filter(|p| p.eta == cfg.eta).collect();
    by_delta.sort_by(|a, b| a.delta.total_cmp(&b.delta));
    for w in by_delta.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (diff, pad) = paired_difference(lo, hi, &cfg.bootstrap)?;
        report.push(
            Row::new("w2_grows_with_delta", diff, pad, 0.0)
                .param("delta_low", lo.delta)
                .param("delta_high", hi.delta)
                .param("eta", cfg.eta),
        );
    }
    report.constant("max_step_size", obj.constants().max_step_size());
    report.note("monotonicity rows compare neighbouring sweep points; runs share initial points and Brownian paths, so the difference is bootstrapped with replicas resampled jointly");
    Ok(report.finish())
}
