//! Euler-Maruyama reference for `dW = -grad F_z(W) dt + sqrt(2/beta) dB`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    diffusion_second_moment_bound, exp_integrability_bound, BoundReport, InequalityCheck,
};
use crate::error::{invalid, require_positive, Result};
use crate::objectives::{Dataset, Objective, RegularityConstants};
use crate::oracles::{check_oracle_inputs, GradientOracle, OracleSpec};
use crate::rng::{stream, Purpose};
use crate::sgld::{Chain, EmpiricalMeasure, InitLaw, ReplicaEnsemble};
use crate::stats::{log_mean_exp, mean_se};

/// Which Brownian stream drives the diffusion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// The same stream as SGLD under the same seed.
    #[default]
    Shared,
    Independent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    pub eta_ref: f64,
    pub t_end: f64,
    pub beta: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Times at which the ensemble is recorded; `0` and `t_end` when empty.
    #[serde(default)]
    pub record_times: Vec<f64>,
    pub init: InitLaw,
    #[serde(default)]
    pub noise: NoiseMode,
}

impl DiffusionConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        require_positive("eta_ref", self.eta_ref)?;
        require_positive("t_end", self.t_end)?;
        require_positive("beta", self.beta)?;
        if self.replicas == 0 {
            return Err(invalid("replicas", "must be at least 1"));
        }
        for &t in &self.record_times {
            if !(t.is_finite() && (0.0..=self.t_end * (1.0 + 1e-12)).contains(&t)) {
                return Err(invalid("record_times", format!("{t} is outside [0, t_end]")));
            }
        }
        self.init.validate(dim)
    }

    /// Reference step for pairing with an SGLD step `eta`.
    pub fn paired_step(eta: f64, refine: usize) -> f64 {
        eta / refine as f64
    }
}

/// A diffusion ensemble plus any record-time snapping notices.
#[derive(Clone, Debug)]
pub struct DiffusionRun {
    pub ensemble: ReplicaEnsemble,
    pub warnings: Vec<String>,
}

fn snap(t: f64, eta: f64, what: &str, warnings: &mut Vec<String>) -> usize {
    let k = (t / eta).round();
    let snapped = k * eta;
    if (snapped - t).abs() > 1e-9 * t.abs().max(eta) {
        warnings.push(format!("{what} {t} snapped to {snapped} (multiple of eta_ref = {eta})"));
    }
    k as usize
}

/// Runs the reference diffusion with the exact gradient. With
/// `noise = shared` and `eta_ref = eta` this is step for step the SGLD run
/// with the full-gradient oracle and the same seed.
pub fn run_diffusion(obj: &dyn Objective, data: &Dataset, cfg: &DiffusionConfig) -> Result<DiffusionRun> {
    cfg.validate(obj.dim())?;
    check_oracle_inputs(obj, data, obj.dim())?;
    let mut warnings = Vec::new();
    let total = snap(cfg.t_end, cfg.eta_ref, "t_end", &mut warnings);
    let times = if cfg.record_times.is_empty() { vec![0.0, cfg.t_end] } else { cfg.record_times.clone() };
    let mut record: Vec<usize> = times
        .iter()
        .map(|&t| snap(t, cfg.eta_ref, "record time", &mut warnings).min(total))
        .collect();
    record.sort_unstable();
    record.dedup();
    let noise = match cfg.noise {
        NoiseMode::Shared => Purpose::Noise,
        NoiseMode::Independent => Purpose::IndependentNoise,
    };
    let ensemble = Chain {
        obj,
        data,
        oracle: &OracleSpec::Full,
        eta: cfg.eta_ref,
        beta: cfg.beta,
        init: &cfg.init,
        seed: cfg.seed,
        noise,
        total_steps: total,
        record: &record,
    }
    .run(cfg.replicas)?;
    Ok(DiffusionRun { ensemble, warnings })
}

/// SGLD and a fine diffusion driven by the same Brownian path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledConfig {
    pub eta: f64,
    pub steps: usize,
    /// Fine steps per SGLD step; the diffusion uses `eta / refine`.
    pub refine: usize,
    pub beta: f64,
    pub replicas: usize,
    pub seed: u64,
    pub init: InitLaw,
}

impl CoupledConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        require_positive("eta", self.eta)?;
        require_positive("beta", self.beta)?;
        if self.refine == 0 {
            return Err(invalid("refine", "must be at least 1"));
        }
        if self.replicas == 0 {
            return Err(invalid("replicas", "must be at least 1"));
        }
        self.init.validate(dim)
    }
}

/// Terminal states of the coupled pair; replica `r` of each measure shares
/// its initial point and Brownian path.
#[derive(Clone, Debug)]
pub struct CoupledRun {
    pub sgld: EmpiricalMeasure,
    pub diffusion: EmpiricalMeasure,
}

/// The SGLD noise over one step is the normalised sum of the `refine`
/// Brownian increments the diffusion consumes over the same interval.
pub fn run_coupled(
    obj: &dyn Objective,
    data: &Dataset,
    oracle: &dyn GradientOracle,
    cfg: &CoupledConfig,
) -> Result<CoupledRun> {
    let d = obj.dim();
    cfg.validate(d)?;
    check_oracle_inputs(obj, data, d)?;
    let fine = cfg.eta / cfg.refine as f64;
    let fine_scale = (2.0 * fine / cfg.beta).sqrt();
    let coarse_scale = (2.0 * cfg.eta / cfg.beta).sqrt();
    let norm = 1.0 / (cfg.refine as f64).sqrt();
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let mut init_rng = stream(cfg.seed, Purpose::Init, r as u64);
            let mut noise_rng = stream(cfg.seed, Purpose::Noise, r as u64);
            let mut oracle_rng = stream(cfg.seed, Purpose::Oracle, r as u64);
            let mut w = vec![0.0; d];
            cfg.init.draw(&mut init_rng, &mut w);
            let mut v = w.clone();
            let mut g = vec![0.0; d];
            let mut h = vec![0.0; d];
            let mut scratch = vec![0.0; d];
            let mut acc = vec![0.0; d];
            for _ in 0..cfg.steps {
                oracle.sample_into(obj, data, &w, &mut oracle_rng, &mut g, &mut scratch);
                acc.iter_mut().for_each(|a| *a = 0.0);
                for _ in 0..cfg.refine {
                    obj.risk_grad(data, &v, &mut h);
                    for k in 0..d {
                        let xi: f64 = noise_rng.sample(StandardNormal);
                        acc[k] += xi;
                        v[k] += -fine * h[k] + fine_scale * xi;
                    }
                }
                for k in 0..d {
                    w[k] += -cfg.eta * g[k] + coarse_scale * norm * acc[k];
                }
            }
            (w, v)
        })
        .collect();
    let mut a = Vec::with_capacity(cfg.replicas * d);
    let mut b = Vec::with_capacity(cfg.replicas * d);
    for (w, v) in pairs {
        a.extend(w);
        b.extend(v);
    }
    Ok(CoupledRun { sgld: EmpiricalMeasure::new(a, d)?, diffusion: EmpiricalMeasure::new(b, d)? })
}

/// Checks the diffusion second-moment bound and, for `beta >= 2/m`, the
/// exponential-integrability bound at every recorded time, each padded by
/// three Monte Carlo standard errors.
pub fn check_moment_bounds(
    ensemble: &ReplicaEnsemble,
    consts: &RegularityConstants,
    kappa0: f64,
    beta: f64,
) -> BoundReport {
    let mut report = BoundReport::default();
    let d = ensemble.dim;
    let integrable = beta >= 2.0 / consts.dissipativity;
    if !integrable {
        report.flags.push(format!(
            "exponential integrability not applicable: beta = {beta} < 2/m = {}",
            2.0 / consts.dissipativity
        ));
    }
    for snap in &ensemble.snapshots {
        let sq = snap.measure.squared_norms();
        let (mean, se) = mean_se(&sq);
        let bound = diffusion_second_moment_bound(consts, kappa0, d, beta, snap.time);
        report
            .checks
            .push(InequalityCheck::new("diffusion_second_moment", mean, 3.0 * se, bound).at("t", snap.time));
        let (lme, lse) = log_mean_exp(&sq);
        let check = if integrable {
            let bound = exp_integrability_bound(consts, kappa0, d, beta, snap.time);
            InequalityCheck::new("diffusion_exp_integrability", lme, 3.0 * lse, bound)
        } else {
            InequalityCheck::not_applicable("diffusion_exp_integrability", lme)
        };
        report.checks.push(check.at("t", snap.time));
    }
    report
}
