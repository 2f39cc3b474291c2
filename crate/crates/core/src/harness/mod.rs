//! Experiment orchestration: configuration presets, the five experiments and
//! report persistence.

mod convergence;
mod discretization;
mod excess_risk;
mod report;
mod stability;
mod suboptimality;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::bounds::{BoundsInput, LambdaProvenance};
use crate::error::{invalid, Error, Result};
use crate::gibbs::GridConfig;
use crate::objectives::{zoo, Dataset, Distribution, Objective};
use crate::oracles::OracleSpec;
use crate::sgld::InitLaw;
use crate::transport::BootstrapConfig;

pub use convergence::exp_convergence;
pub use discretization::exp_discretization;
pub use excess_risk::exp_excess_risk;
pub use report::{ExperimentReport, Metadata, Row, SeriesPoint, Summary};
pub use stability::exp_stability;
pub use suboptimality::exp_suboptimality;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Discretization,
    Convergence,
    Suboptimality,
    Stability,
    ExcessRisk,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Discretization,
        ExperimentKind::Convergence,
        ExperimentKind::Suboptimality,
        ExperimentKind::Stability,
        ExperimentKind::ExcessRisk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Discretization => "discretization",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::Suboptimality => "suboptimality",
            ExperimentKind::Stability => "stability",
            ExperimentKind::ExcessRisk => "excess_risk",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or(Error::Unknown { kind: "experiment", name: s })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl ObjectiveSpec {
    pub fn build(&self) -> Result<Arc<dyn Objective>> {
        zoo::build(&self.name, &self.params)
    }
}

/// Training data: drawn from `distribution` or read from a headerless CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default)]
    pub distribution: Option<Distribution>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
    pub n: usize,
    pub seed: u64,
}

impl DataSpec {
    /// The training set, with `n` replaced by `n_override` when generating.
    pub fn load(&self, n_override: Option<usize>, index: u64) -> Result<Dataset> {
        match (&self.csv, &self.distribution) {
            (Some(path), _) => Dataset::from_csv(path),
            (None, Some(dist)) => Dataset::generate(dist, n_override.unwrap_or(self.n), self.seed, index),
            (None, None) => Err(invalid("data", "needs a distribution or a csv path")),
        }
    }
}

/// Values swept over; each experiment reads the axes it needs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default)]
    pub eta: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub oracles: Vec<OracleSpec>,
}

/// A fully resolved experiment configuration. Files only need to give the
/// fields that differ from the experiment's preset (see [`preset`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub objective: ObjectiveSpec,
    pub data: DataSpec,
    /// Law the data are drawn from, for population risks. Defaults to
    /// `data.distribution`.
    #[serde(default)]
    pub population: Option<Distribution>,
    pub oracle: OracleSpec,
    pub init: InitLaw,
    pub beta: f64,
    pub eta: f64,
    /// Simulated time `k eta`.
    pub horizon: f64,
    pub replicas: usize,
    /// Fine diffusion steps per SGLD step.
    pub refine: usize,
    /// Diffusion step; `eta / refine` when absent.
    #[serde(default)]
    pub eta_ref: Option<f64>,
    pub diffusion_replicas: usize,
    pub grid: GridConfig,
    pub sweep: Sweep,
    pub bootstrap: BootstrapConfig,
    pub universal_c: f64,
    pub perturbations: usize,
    /// Independent datasets for expectations over the sample.
    pub datasets: usize,
    /// Fresh population samples standing in for the population risk.
    pub test_samples: usize,
    /// `k eta` values at which SGLD is compared with the Gibbs measure.
    pub checkpoints: Vec<f64>,
    /// Diffusion times at which the KL histogram is taken.
    pub record_times: Vec<f64>,
    pub fit_window: [f64; 2],
    pub histogram_resolution: usize,
    pub histogram_floor: f64,
    pub eps: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Defaults shared by every experiment.
fn base_preset() -> Value {
    serde_json::json!({
        "seed": 20240611,
        "objective": {"name": "double_well", "params": {}},
        "data": {"distribution": {"name": "uniform", "lo": -1.0, "hi": 1.0}, "n": 100, "seed": 7},
        "oracle": {"kind": "full"},
        "init": {"kind": "gaussian", "sigma2": 0.25},
        "beta": 4.0,
        "eta": 0.01,
        "horizon": 2.0,
        "replicas": 10000,
        "refine": 100,
        "diffusion_replicas": 100000,
        "grid": {},
        "sweep": {},
        "bootstrap": {"replicates": 200, "level": 0.95, "seed": 11},
        "universal_c": 1.0,
        "perturbations": 20,
        "datasets": 20,
        "test_samples": 100000,
        "checkpoints": [1.0, 2.0, 4.0],
        "record_times": [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.0],
        "fit_window": [0.5, 2.5],
        "histogram_resolution": 201,
        "histogram_floor": 1e-12,
        "eps": 0.02
    })
}

/// The default configuration of `kind` as JSON.
pub fn preset(kind: ExperimentKind) -> Value {
    let specific = match kind {
        ExperimentKind::Discretization => serde_json::json!({
            "sweep": {
                "eta": [1e-2, 3e-3, 1e-3],
                "oracles": [{"kind": "full"}, {"kind": "minibatch", "batch": 8}, {"kind": "minibatch", "batch": 2}]
            }
        }),
        ExperimentKind::Convergence => serde_json::json!({
            "objective": {"name": "gaussian", "params": {}},
            "data": {"distribution": {"name": "constant", "value": [0.0]}, "n": 1, "seed": 7},
            "init": {"kind": "gaussian", "sigma2": 0.25, "mean": [2.0]},
            "beta": 2.0,
            "eta": 1e-3,
            "refine": 1
        }),
        ExperimentKind::Suboptimality => serde_json::json!({
            "sweep": {"beta": [1.0, 3.0, 10.0, 30.0]}
        }),
        ExperimentKind::Stability => serde_json::json!({
            "sweep": {"n": [10, 30, 100]},
            "datasets": 200
        }),
        ExperimentKind::ExcessRisk => serde_json::json!({
            "horizon": 10.0,
            "sweep": {"n": [100], "oracles": [{"kind": "full"}, {"kind": "minibatch", "batch": 8}]}
        }),
    };
    let mut v = base_preset();
    merge(&mut v, specific);
    merge(&mut v, serde_json::json!({"experiment": kind.name()}));
    v
}

/// Recursive object merge; non-object values in `patch` replace.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, patch) => *slot = patch,
    }
}

impl ExperimentConfig {
    /// Resolves `user` over the preset of `kind` (or of `user.experiment`).
    pub fn resolve(kind: Option<ExperimentKind>, user: Value) -> Result<Self> {
        let named = user.get("experiment").and_then(Value::as_str).map(str::parse::<ExperimentKind>).transpose()?;
        let kind = match (kind, named) {
            (Some(a), Some(b)) if a != b => {
                return Err(invalid("experiment", format!("config says {b}, command says {a}")));
            }
            (Some(k), _) | (None, Some(k)) => k,
            (None, None) => return Err(invalid("experiment", "not given")),
        };
        let mut v = preset(kind);
        merge(&mut v, user);
        merge(&mut v, serde_json::json!({"experiment": kind.name()}));
        let cfg: ExperimentConfig = serde_json::from_value(v)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn defaults(kind: ExperimentKind) -> Self {
        Self::resolve(Some(kind), serde_json::json!({})).expect("presets are valid")
    }

    pub fn validate(&self) -> Result<()> {
        let obj = self.objective.build()?;
        self.oracle.validate()?;
        self.init.validate(obj.dim())?;
        for o in &self.sweep.oracles {
            o.validate()?;
        }
        for (name, v) in [("beta", self.beta), ("eta", self.eta), ("horizon", self.horizon), ("universal_c", self.universal_c)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        if self.replicas < 2 || self.diffusion_replicas < 2 {
            return Err(invalid("replicas", "need at least 2"));
        }
        if self.refine == 0 {
            return Err(invalid("refine", "must be at least 1"));
        }
        if self.data.csv.is_none() && self.data.distribution.is_none() {
            return Err(invalid("data", "needs a distribution or a csv path"));
        }
        let sweep_needed = |name: &str, empty: bool| {
            if empty {
                Err(Error::Config(format!("sweep.{name} must be nonempty for the {} experiment", self.experiment)))
            } else {
                Ok(())
            }
        };
        match self.experiment {
            ExperimentKind::Discretization => sweep_needed("eta", self.sweep.eta.is_empty())?,
            ExperimentKind::Suboptimality => sweep_needed("beta", self.sweep.beta.is_empty())?,
            ExperimentKind::Stability => {
                sweep_needed("n", self.sweep.n.is_empty())?;
                self.population_law()?;
            }
            ExperimentKind::ExcessRisk => {
                sweep_needed("n", self.sweep.n.is_empty())?;
                self.population_law()?;
            }
            ExperimentKind::Convergence => {
                if self.record_times.len() < 3 {
                    return Err(invalid("record_times", "need at least 3 times"));
                }
                if self.checkpoints.is_empty() {
                    return Err(invalid("checkpoints", "must be nonempty"));
                }
            }
        }
        for &v in self.sweep.eta.iter().chain(&self.sweep.beta) {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid("sweep", format!("values must be positive, got {v}")));
            }
        }
        if self.sweep.n.contains(&0) {
            return Err(invalid("sweep.n", "sizes must be positive"));
        }
        Ok(())
    }

    pub fn population_law(&self) -> Result<&Distribution> {
        self.population
            .as_ref()
            .or(self.data.distribution.as_ref())
            .ok_or_else(|| invalid("population", "the population law must be given for this experiment"))
    }

    /// SHA-256 of the canonical JSON of the configuration, output directory
    /// excluded.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut v {
            map.remove("output_dir");
        }
        hex::encode(Sha256::digest(serde_json::to_vec(&v).expect("value serializes")))
    }

    pub fn eta_ref(&self) -> f64 {
        self.eta_ref.unwrap_or(self.eta / self.refine as f64)
    }

    fn bounds_input(&self, obj: &dyn Objective, n: usize, beta: f64, delta: f64, lambda: f64) -> Result<BoundsInput> {
        let c = self.init.constants(obj.dim())?;
        let inp = BoundsInput {
            consts: *obj.constants(),
            d: obj.dim(),
            n,
            beta,
            delta,
            kappa0: c.kappa0,
            log_p0_inf: c.density_sup.ln(),
            lambda_star: lambda,
            lambda_provenance: LambdaProvenance::Numeric,
            universal_c: self.universal_c,
        };
        inp.validate()?;
        Ok(inp)
    }
}

/// Runs the configured experiment.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::Discretization => exp_discretization(cfg),
        ExperimentKind::Convergence => exp_convergence(cfg),
        ExperimentKind::Suboptimality => exp_suboptimality(cfg),
        ExperimentKind::Stability => exp_stability(cfg),
        ExperimentKind::ExcessRisk => exp_excess_risk(cfg),
    }
}
