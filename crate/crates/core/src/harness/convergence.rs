use super::{ExperimentConfig, ExperimentReport, Row};
use crate::bounds::{lsi_constant, relent_init_bound, w2_to_gibbs_bound};
use crate::diffusion::{run_diffusion, DiffusionConfig, NoiseMode};
use crate::error::{Error, Result};
use crate::gibbs::{
    build_gibbs, histogram_on_grid, init_on_grid, kl_on_grid, sample_gibbs, spectral_gap_numeric, GridConfig,
    GridMeasure,
};
use crate::rng::{derive_seed, stream, Purpose};
use crate::sgld::{run_sgld, EmpiricalMeasure, SgldConfig};
use crate::stats::linear_fit;
use crate::transport::{bootstrap_w2, bootstrap_w2_vs_grid};

/// Plug-in `KL(q || pi)` of a histogram with its standard error
/// `sd(log q/pi) / sqrt(count)`.
fn kl_with_se(q: &GridMeasure, pi: &GridMeasure, count: usize) -> Result<(f64, f64)> {
    let kl = kl_on_grid(q, pi)?.kl;
    let second: f64 = q
        .masses
        .iter()
        .zip(q.density.iter().zip(&pi.density))
        .filter(|(m, _)| **m > 0.0)
        .map(|(m, (a, b))| m * (a / b).ln().powi(2))
        .sum();
    Ok((kl, ((second - kl * kl).max(0.0) / count as f64).sqrt()))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Relaxation to the Gibbs measure: histogram KL of the diffusion along
/// `cfg.record_times` with a fitted decay rate, and the SGLD-to-Gibbs `W2`
/// at `cfg.checkpoints`.
pub fn exp_convergence(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let obj = cfg.objective.build()?;
    let data = cfg.data.load(None, 0)?;
    let d = obj.dim();
    if d > 2 {
        return Err(Error::UnsupportedDimension(d));
    }
    let beta = cfg.beta;
    let mut report = ExperimentReport::new(cfg);

    let pi = build_gibbs(obj.as_ref(), &data, beta, &cfg.grid)?;
    let gap = spectral_gap_numeric(&pi.grid)?;
    let inp = cfg.bounds_input(obj.as_ref(), data.len(), beta, 0.0, gap.lambda)?;
    let c_ls = lsi_constant(&inp).ok();
    let target = 2.0 * gap.lambda / beta;
    report.constant("lambda_numeric", gap.lambda);
    report.constant("target_rate", target);
    if let Some(c) = c_ls {
        report.constant("c_ls", c);
    }

    let mu0 = init_on_grid(&cfg.init, &pi.grid.axes)?;
    let kl0_quad = kl_on_grid(&mu0, &pi.grid)?.kl;
    report.push(Row::from_bound("relent_init", kl0_quad, 0.0, Ok(relent_init_bound(&inp)))?);

    // Histogram KL along the diffusion.
    let coarse = build_gibbs(
        obj.as_ref(),
        &data,
        beta,
        &GridConfig {
            resolution: Some(cfg.histogram_resolution),
            half_width: Some(pi.half_width),
            check_resolution: false,
            ..cfg.grid.clone()
        },
    )?;
    let axes = &coarse.grid.axes;
    let count = cfg.diffusion_replicas;
    let exact = sample_gibbs(&pi.grid, count, &mut stream(cfg.seed, Purpose::GibbsSample, 0))?;
    let floor_hist = histogram_on_grid(axes, &exact, cfg.histogram_floor)?;
    let (floor, floor_se) = kl_with_se(&floor_hist.measure, &coarse.grid, count)?;
    report.constant("kl_floor", floor);
    report.constant("kl_floor_se", floor_se);

    let t_end = cfg.record_times.iter().cloned().fold(0.0, f64::max);
    let diff = run_diffusion(
        obj.as_ref(),
        &data,
        &DiffusionConfig {
            eta_ref: cfg.eta_ref(),
            t_end,
            beta,
            replicas: count,
            seed: derive_seed(cfg.seed, Purpose::Noise, 1),
            record_times: cfg.record_times.clone(),
            init: cfg.init.clone(),
            noise: NoiseMode::Independent,
        },
    )?;
    for w in diff.warnings {
        report.note(w);
    }
    let mut curve = Vec::new();
    let mut outside = 0;
    for snap in &diff.ensemble.snapshots {
        let h = histogram_on_grid(axes, &snap.measure, cfg.histogram_floor)?;
        outside += h.outside;
        let (kl, se) = kl_with_se(&h.measure, &coarse.grid, count)?;
        report.point("kl", snap.time, kl, se);
        report.point("kl_minus_floor", snap.time, kl - floor, se);
        curve.push((snap.time, kl, se));
    }
    report.constant("samples_outside_box", outside as f64);

    let (t0, kl_t0, se_t0) = curve[0];
    let mu0_coarse = init_on_grid(&cfg.init, axes)?;
    let kl0_coarse = kl_on_grid(&mu0_coarse, &coarse.grid)?.kl;
    report.push(
        Row::new("kl_initial_matches_quadrature", (kl_t0 - kl0_coarse).abs(), 0.0, 4.0 * se_t0 + 2.0 * floor)
            .param("t", t0)
            .extra("kl_histogram", kl_t0)
            .extra("kl_quadrature", kl0_coarse),
    );

    let fit_pts: Vec<(f64, f64)> = curve
        .iter()
        .filter(|(t, kl, _)| *t >= cfg.fit_window[0] && *t <= cfg.fit_window[1] && *kl > floor)
        .map(|(t, kl, _)| (*t, (kl - floor).ln()))
        .collect();
    if fit_pts.len() >= 3 {
        let (x, y): (Vec<f64>, Vec<f64>) = fit_pts.into_iter().unzip();
        let fit = linear_fit(&x, &y);
        let rate = -fit.slope;
        report.constant("kl_rate", rate);
        report.constant("kl_rate_se", fit.slope_se);
        report.push(
            Row::new("kl_rate_vs_spectral_gap", (rate / target - 1.0).abs(), 2.0 * fit.slope_se / target, 0.15)
                .extra("rate", rate)
                .extra("target", target)
                .extra("r_squared", fit.r_squared),
        );
        if let Some(c) = c_ls {
            report.push(Row::new("kl_rate_vs_lsi", 2.0 / (beta * c), 2.0 * fit.slope_se, rate).extra("c_ls", c));
        }
    } else {
        report.note("too few KL points above the histogram floor inside the fit window");
    }

    let mut increases = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for w in curve.windows(2) {
        let ((_, a, sa), (_, b, sb)) = (w[0], w[1]);
        if b > a {
            increases += 1;
        }
        worst = worst.max((b - a) / (sa * sa + sb * sb).sqrt().max(f64::MIN_POSITIVE));
    }
    report.push(Row::new("kl_nonmonotone_steps", increases as f64, 0.0, 1.0));
    report.push(Row::new("kl_largest_increase_in_se", worst, 0.0, 2.0));

    if let Some(c) = c_ls {
        for &(t, kl, se) in curve.iter().filter(|(t, _, _)| *t > 0.0) {
            report.push(
                Row::new("kl_entropy_decay", (kl - floor).max(0.0), 2.0 * se, kl0_coarse * (-2.0 * t / (beta * c)).exp())
                    .param("t", t),
            );
        }
    }

    // SGLD against the Gibbs measure at the checkpoints.
    let ks: Vec<usize> = cfg.checkpoints.iter().map(|c| (c / cfg.eta).round().max(1.0) as usize).collect();
    let steps = *ks.iter().max().expect("checkpoints are nonempty");
    let stride = ks.iter().fold(0, |g, &k| gcd(g, k));
    let ens = run_sgld(
        obj.as_ref(),
        &data,
        &cfg.oracle,
        &SgldConfig {
            eta: cfg.eta,
            beta,
            steps,
            init: cfg.init.clone(),
            replicas: cfg.replicas,
            seed: cfg.seed,
            record_stride: stride,
        },
    )?;
    let reference = if d == 2 { Some(sample_gibbs(&pi.grid, cfg.replicas, &mut stream(cfg.seed, Purpose::GibbsSample, 1))?) } else { None };
    for (i, &k) in ks.iter().enumerate() {
        let snap = ens.at_step(k).expect("checkpoint is recorded");
        let boot = crate::transport::BootstrapConfig { seed: cfg.bootstrap.seed.wrapping_add(i as u64), ..cfg.bootstrap };
        let dist = match &reference {
            None => bootstrap_w2_vs_grid(&snap.measure, &pi.grid, &boot)?,
            Some(r) => bootstrap_w2(&snap.measure, r as &EmpiricalMeasure, false, &boot)?,
        };
        let bound = match c_ls {
            Some(c) => w2_to_gibbs_bound(&inp, c, k as u64, cfg.eta),
            None => Err(Error::Precondition("beta >= 2/m".into())),
        };
        report.point("w2_to_gibbs", k as f64 * cfg.eta, dist.w2, dist.pad);
        report.push(Row::from_bound("w2_to_gibbs", dist.w2, dist.pad, bound)?.param("k", k as f64).param("eta", cfg.eta));
    }
    if c_ls.is_none() {
        report.note("beta < 2/m: the log-Sobolev constant and the bounds built on it are not available");
    }
    Ok(report.finish())
}
