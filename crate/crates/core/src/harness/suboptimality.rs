use rayon::prelude::*;

use super::{ExperimentConfig, ExperimentReport, Row};
use crate::bounds::spectral_gap_lower_bound;
use crate::error::Result;
use crate::gibbs::{
    build_gibbs, check_gibbs_moments, check_partition_bound, empirical_minimum, gibbs_stats, gibbs_suboptimality,
    partition_lower_bound, spectral_gap_numeric,
};
use crate::rng::{derive_seed, Purpose};

struct Point {
    beta: f64,
    suboptimality: f64,
    rows: Vec<Row>,
    lambda: f64,
}

/// Quadrature suboptimality of the Gibbs measure across the `beta` sweep,
/// together with its moment, partition-function and spectral-gap checks.
pub fn exp_suboptimality(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let obj = cfg.objective.build()?;
    let data = cfg.data.load(None, 0)?;
    let d = obj.dim();
    let consts = *obj.constants();
    let min_seed = derive_seed(cfg.seed, Purpose::Multistart, 0);

    let points: Vec<Result<Point>> = cfg
        .sweep
        .beta
        .par_iter()
        .map(|&beta| {
            let g = build_gibbs(obj.as_ref(), &data, beta, &cfg.grid)?;
            let min = empirical_minimum(obj.as_ref(), &data, Some(&g), min_seed)?;
            let s = gibbs_suboptimality(&g, obj.as_ref(), min.value);
            let mut rows = Vec::new();
            let row = if s.verdict == crate::bounds::Verdict::NotApplicable {
                Row::not_applicable("gibbs_suboptimality", s.measured)
            } else {
                Row::new("gibbs_suboptimality", s.measured, 0.0, s.bound)
            };
            rows.push(row.param("beta", beta).extra("f_min", s.f_min));

            for c in check_gibbs_moments(&gibbs_stats(&g.grid), &consts, d, beta) {
                rows.push(Row::from_check(&c).param("beta", beta));
            }
            let lower = partition_lower_bound(obj.as_ref(), beta, &min)?;
            rows.push(Row::from_check(&check_partition_bound(&g, lower)).param("beta", beta));

            let gap = spectral_gap_numeric(&g.grid)?;
            let lb = spectral_gap_lower_bound(&cfg.bounds_input(obj.as_ref(), data.len(), beta, 0.0, gap.lambda)?);
            rows.push(
                Row::new("spectral_gap_lower_bound", lb.lambda_lb, 0.0, gap.lambda)
                    .param("beta", beta)
                    .extra("log_inv_lambda_lb", lb.log_inv_lambda_lb)
                    .extra("lambda_coarse", gap.lambda_coarse),
            );
            Ok(Point { beta, suboptimality: s.measured, rows, lambda: gap.lambda })
        })
        .collect();

    let mut report = ExperimentReport::new(cfg);
    let mut done = Vec::new();
    for p in points {
        let p = p?;
        report.point("suboptimality", p.beta, p.suboptimality, 0.0);
        report.point("spectral_gap", p.beta, p.lambda, 0.0);
        report.rows.extend(p.rows);
        done.push((p.beta, p.suboptimality));
    }
    done.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in done.windows(2) {
        let ((b0, s0), (b1, s1)) = (w[0], w[1]);
        report.push(Row::new("suboptimality_decreasing_in_beta", s1 - s0, 0.0, 0.0).param("beta_low", b0).param("beta_high", b1));
    }
    if cfg.sweep.beta.iter().any(|&b| b < 2.0 / consts.dissipativity) {
        report.note("suboptimality bound needs beta >= 2/m; rows below that are not_applicable");
    }
    Ok(report.finish())
}
