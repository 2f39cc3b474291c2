use rayon::prelude::*;

use super::{ExperimentConfig, ExperimentReport, Row};
use crate::bounds::{lsi_constant, stability_bounds};
use crate::error::{Error, Result};
use crate::gibbs::{build_gibbs, sample_gibbs, spectral_gap_numeric, GibbsMeasure, GridConfig};
use crate::objectives::{Dataset, Objective};
use crate::rng::{derive_seed, stream, Purpose};
use crate::stats::{linear_fit, mean_se};
use crate::transport::{bootstrap_w2, function_gap_bound, w2_grid_1d, BootstrapConfig};

const PROBES: usize = 50;

struct Pair {
    w2: f64,
    pad: f64,
    loss_gap: f64,
    sigma2: f64,
    lambda: f64,
    shift: f64,
}

struct Point {
    n: usize,
    pairs: Vec<Pair>,
    identity: f64,
    gen_gaps: Vec<f64>,
    lambda_star: f64,
}

fn distance(cfg: &ExperimentConfig, a: &GibbsMeasure, b: &GibbsMeasure, index: u64) -> Result<(f64, f64)> {
    if a.grid.dim() == 1 {
        return Ok((w2_grid_1d(&a.grid, &b.grid)?, 0.0));
    }
    let count = cfg.replicas.min(500);
    let sa = sample_gibbs(&a.grid, count, &mut stream(cfg.seed, Purpose::GibbsSample, 2 * index))?;
    let sb = sample_gibbs(&b.grid, count, &mut stream(cfg.seed, Purpose::GibbsSample, 2 * index + 1))?;
    let boot = BootstrapConfig { replicates: cfg.bootstrap.replicates.min(20), seed: cfg.bootstrap.seed.wrapping_add(index), ..cfg.bootstrap };
    let d = bootstrap_w2(&sa, &sb, false, &boot)?;
    Ok((d.w2, d.pad))
}

fn point(cfg: &ExperimentConfig, obj: &dyn Objective, n: usize, test: &Dataset, probes: &Dataset, common: &Dataset) -> Result<Point> {
    let pop = cfg.population_law()?;
    let beta = cfg.beta;
    if n < 2 {
        return Err(Error::Config("stability needs n >= 2".into()));
    }
    // Sample 0 is taken from the shared stream so that every n sees the
    // same replacement pairs.
    let z = Dataset::generate(pop, n, cfg.data.seed, n as u64)?.with_replaced(0, common.sample(0))?;
    let auto = build_gibbs(obj, &z, beta, &cfg.grid)?;
    let fixed = GridConfig {
        resolution: Some(cfg.grid.resolution_for(obj.dim())),
        half_width: Some(auto.half_width),
        check_resolution: false,
        ..cfg.grid.clone()
    };
    let pi = build_gibbs(obj, &z, beta, &fixed)?;
    let mut lambda_star = spectral_gap_numeric(&pi.grid)?.lambda;
    let identity = distance(cfg, &pi, &pi, 0)?.0;

    let probe_loss = |g: &GibbsMeasure, j: usize| g.grid.expect(|w| obj.loss(w, probes.sample(j)));
    let base_probe: Vec<f64> = (0..probes.len()).map(|j| probe_loss(&pi, j)).collect();
    let pairs = (0..cfg.perturbations)
        .map(|p| {
            let zbar = z.with_replaced(0, common.sample(p + 1))?;
            let other = build_gibbs(obj, &zbar, beta, &fixed)?;
            let (w2, pad) = distance(cfg, &pi, &other, p as u64 + 1)?;
            let loss_gap = (0..probes.len()).map(|j| (base_probe[j] - probe_loss(&other, j)).abs()).fold(0.0, f64::max);
            let lambda = spectral_gap_numeric(&other.grid)?.lambda;
            let shift: f64 = common.sample(p + 1).iter().zip(common.sample(0)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            Ok(Pair {
                w2,
                pad,
                loss_gap,
                sigma2: pi.grid.second_moment().max(other.grid.second_moment()),
                lambda,
                shift,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for p in &pairs {
        lambda_star = lambda_star.min(p.lambda);
    }

    let gen_gaps = (0..cfg.datasets)
        .map(|s| {
            let zs = Dataset::generate(pop, n, cfg.data.seed, ((n as u64) << 24) + s as u64 + 1)?;
            let g = build_gibbs(obj, &zs, beta, &cfg.grid)?;
            lambda_star = lambda_star.min(spectral_gap_numeric(&g.grid)?.lambda);
            Ok(g.grid.expect(|w| obj.risk(test, w)) - g.grid.masses.iter().zip(&g.risk).map(|(m, r)| m * r).sum::<f64>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Point { n, pairs, identity, gen_gaps, lambda_star })
}

/// Gibbs measures of datasets differing in one sample, for each `n` in the
/// sweep, against the stability bounds; plus the Gibbs generalization gap
/// averaged over `cfg.datasets` independent samples.
pub fn exp_stability(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let obj = cfg.objective.build()?;
    let pop = cfg.population_law()?;
    let consts = *obj.constants();
    let test = Dataset::generate(pop, cfg.test_samples, derive_seed(cfg.seed, Purpose::Data, 1), 0)?;
    let probes = Dataset::generate(pop, PROBES, derive_seed(cfg.seed, Purpose::Probe, 0), 0)?;
    let common = Dataset::generate(pop, cfg.perturbations + 1, derive_seed(cfg.seed, Purpose::Perturbation, 0), 0)?;

    let points: Vec<Result<Point>> =
        cfg.sweep.n.par_iter().map(|&n| point(cfg, obj.as_ref(), n, &test, &probes, &common)).collect();

    let mut report = ExperimentReport::new(cfg);
    let mut scaling = Vec::new();
    for p in points {
        let p = p?;
        let n = p.n as f64;
        let inp = cfg.bounds_input(obj.as_ref(), p.n, cfg.beta, 0.0, p.lambda_star)?;
        let c_ls = lsi_constant(&inp);
        let stab = c_ls.as_ref().ok().map(|&c| stability_bounds(&inp, c));
        let precondition = || Error::Precondition("beta >= 2/m".into());
        report.constant(&format!("lambda_star_n{}", p.n), p.lambda_star);

        report.push(Row::new("w2_identity", p.identity, 0.0, 0.0).param("n", n));
        for (i, q) in p.pairs.iter().enumerate() {
            let bound = stab.as_ref().map(|s| s.w2_stability).ok_or_else(precondition);
            report.push(
                Row::from_bound("w2_stability", q.w2, q.pad, bound)?
                    .param("n", n)
                    .param("perturbation", i as f64)
                    .extra("replacement_distance", q.shift),
            );
            let gap_bound = function_gap_bound(consts.smoothness, consts.grad_at_origin, q.sigma2, q.w2 + q.pad);
            report.push(Row::from_bound("loss_gap", q.loss_gap, 0.0, gap_bound)?.param("n", n).param("perturbation", i as f64));
        }
        let w2s: Vec<f64> = p.pairs.iter().map(|q| q.w2).collect();
        let (w2_mean, w2_se) = mean_se(&w2s);
        report.point("w2_mean_vs_n", n, w2_mean, w2_se);
        scaling.push((n, w2_mean));

        if p.gen_gaps.len() >= 2 {
            let (gen, se) = mean_se(&p.gen_gaps);
            let bound = stab.as_ref().map(|s| s.uniform_stability).ok_or_else(precondition);
            report.push(
                Row::from_bound("gibbs_generalization", gen, 3.0 * se, bound)?
                    .param("n", n)
                    .extra("datasets", p.gen_gaps.len() as f64),
            );
            report.point("gibbs_generalization_vs_n", n, gen, se);
        }
    }
    if scaling.len() >= 2 {
        let x: Vec<f64> = scaling.iter().map(|(n, _)| n.ln()).collect();
        let y: Vec<f64> = scaling.iter().map(|(_, w)| w.ln()).collect();
        let fit = linear_fit(&x, &y);
        report.constant("n_exponent", fit.slope);
        report.push(
            Row::new("w2_n_exponent", (fit.slope + 1.0).abs(), 2.0 * fit.slope_se, 0.2)
                .extra("slope", fit.slope)
                .extra("r_squared", fit.r_squared),
        );
    }
    report.note("each n replaces sample 0 by the same list of values, so the perturbations are common across n");
    if obj.dim() != 1 {
        report.note("W2 between 2D Gibbs measures is estimated from 500 exact grid samples per measure");
    }
    Ok(report.finish())
}
