//! Explicit theory constants and bounds, each a pure function of its inputs.
//!
//! [`evaluate`] assembles every available quantity into a [`BoundReport`]
//! with the formula used and the inputs it consumed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_positive, Error, Result};
use crate::objectives::RegularityConstants;

/// Outcome of comparing a measured quantity with a bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Inconclusive,
    Violated,
    /// A precondition of the bound fails, so nothing is claimed.
    NotApplicable,
}

impl Verdict {
    /// `holds` if `measured + pad <= bound`, `violated` if
    /// `measured - pad > bound`, `inconclusive` otherwise. A relative slack
    /// of 1e-12 absorbs rounding when the bound is attained exactly.
    pub fn compare(measured: f64, pad: f64, bound: f64) -> Verdict {
        if measured.is_nan() || bound.is_nan() {
            return Verdict::Inconclusive;
        }
        let slack = 1e-12 * (measured.abs() + bound.abs());
        if measured + pad <= bound + slack {
            Verdict::Holds
        } else if measured - pad > bound + slack {
            Verdict::Violated
        } else {
            Verdict::Inconclusive
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Violated => "violated",
            Verdict::NotApplicable => "not_applicable",
        }
    }
}

/// A measured quantity checked against a bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    pub measured: f64,
    pub pad: f64,
    pub bound: f64,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub at: BTreeMap<String, f64>,
}

impl InequalityCheck {
    pub fn new(name: impl Into<String>, measured: f64, pad: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            pad,
            bound,
            verdict: Verdict::compare(measured, pad, bound),
            at: BTreeMap::new(),
        }
    }

    pub fn not_applicable(name: impl Into<String>, measured: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            pad: 0.0,
            bound: f64::NAN,
            verdict: Verdict::NotApplicable,
            at: BTreeMap::new(),
        }
    }

    pub fn at(mut self, key: &str, value: f64) -> Self {
        self.at.insert(key.to_string(), value);
        self
    }
}

/// One evaluated constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub value: f64,
    pub formula: String,
    pub inputs: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub entries: BTreeMap<String, BoundEntry>,
    pub checks: Vec<InequalityCheck>,
    pub flags: Vec<String>,
}

impl BoundReport {
    pub fn insert(&mut self, name: &str, value: f64, formula: &str, inputs: &[(&str, f64)]) {
        self.entries.insert(
            name.to_string(),
            BoundEntry {
                value,
                formula: formula.to_string(),
                inputs: inputs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            },
        );
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.entries.get(name).map(|e| e.value)
    }

    pub fn any_violated(&self) -> bool {
        self.checks.iter().any(|c| c.verdict == Verdict::Violated)
    }
}

/// Where the spectral gap fed into the bounds came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaProvenance {
    Numeric,
    Bardet,
    Lyapunov,
    User,
}

fn default_universal_c() -> f64 {
    1.0
}

fn default_provenance() -> LambdaProvenance {
    LambdaProvenance::User
}

/// Inputs shared by all bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsInput {
    pub consts: RegularityConstants,
    pub d: usize,
    pub n: usize,
    pub beta: f64,
    pub delta: f64,
    pub kappa0: f64,
    /// `log |p_0|_inf`.
    pub log_p0_inf: f64,
    pub lambda_star: f64,
    #[serde(default = "default_provenance")]
    pub lambda_provenance: LambdaProvenance,
    /// The unnamed universal constant of the Lyapunov Poincare criterion.
    #[serde(default = "default_universal_c")]
    pub universal_c: f64,
}

impl BoundsInput {
    pub fn validate(&self) -> Result<()> {
        self.consts.validate()?;
        if self.d == 0 {
            return Err(invalid("d", "must be at least 1"));
        }
        if self.n == 0 {
            return Err(invalid("n", "must be at least 1"));
        }
        require_positive("beta", self.beta)?;
        if !(0.0..1.0).contains(&self.delta) {
            return Err(invalid("delta", format!("must lie in [0, 1), got {}", self.delta)));
        }
        if !(self.kappa0.is_finite() && self.kappa0 >= 0.0) {
            return Err(invalid("kappa0", "must be finite and nonnegative"));
        }
        if self.log_p0_inf.is_nan() {
            return Err(invalid("log_p0_inf", "is NaN"));
        }
        require_positive("lambda_star", self.lambda_star)?;
        require_positive("universal_c", self.universal_c)
    }

    fn m(&self) -> f64 {
        self.consts.dissipativity
    }
    fn big_m(&self) -> f64 {
        self.consts.smoothness
    }
    fn b(&self) -> f64 {
        self.consts.dissipativity_offset
    }
    fn big_b(&self) -> f64 {
        self.consts.grad_at_origin
    }
    fn a(&self) -> f64 {
        self.consts.loss_at_origin
    }
    fn df(&self) -> f64 {
        self.d as f64
    }

    fn require_beta_dissipative(&self) -> Result<()> {
        if self.beta >= 2.0 / self.m() {
            Ok(())
        } else {
            Err(Error::Precondition(format!("beta = {} < 2/m = {}", self.beta, 2.0 / self.m())))
        }
    }

    fn check_eta(&self, eta: f64) -> Result<()> {
        let max = self.consts.max_step_size();
        if eta > 0.0 && eta < max {
            Ok(())
        } else {
            Err(Error::StepSizeOutOfRange { eta, max })
        }
    }
}

/// Uniform second-moment bound for SGLD iterates:
/// `kappa0 + 2 max(1, 1/m)(b + 2B^2 + d/beta)`.
pub fn sgld_second_moment_bound(c: &RegularityConstants, kappa0: f64, d: usize, beta: f64) -> f64 {
    kappa0
        + 2.0
            * (1.0f64).max(1.0 / c.dissipativity)
            * (c.dissipativity_offset + 2.0 * c.grad_at_origin.powi(2) + d as f64 / beta)
}

/// Diffusion second moment at time `t`:
/// `kappa0 e^{-2mt} + (b + d/beta)(1 - e^{-2mt})/m`.
pub fn diffusion_second_moment_bound(c: &RegularityConstants, kappa0: f64, d: usize, beta: f64, t: f64) -> f64 {
    let e = (-2.0 * c.dissipativity * t).exp();
    kappa0 * e + (c.dissipativity_offset + d as f64 / beta) * (1.0 - e) / c.dissipativity
}

/// Exponential integrability: `log E exp(|W(t)|^2) <= kappa0 + 2(b + d/beta) t`, valid for `beta >= 2/m`.
pub fn exp_integrability_bound(c: &RegularityConstants, kappa0: f64, d: usize, beta: f64, t: f64) -> f64 {
    kappa0 + 2.0 * (c.dissipativity_offset + d as f64 / beta) * t
}

/// Gibbs second moment: `(b + d/beta)/m`.
pub fn gibbs_second_moment_bound(c: &RegularityConstants, d: usize, beta: f64) -> f64 {
    (c.dissipativity_offset + d as f64 / beta) / c.dissipativity
}

/// Gibbs differential entropy: `(d/2) log(2 pi e (b + d/beta)/(m d))`.
pub fn gibbs_entropy_bound(c: &RegularityConstants, d: usize, beta: f64) -> f64 {
    let df = d as f64;
    0.5 * df
        * (2.0 * std::f64::consts::PI * std::f64::consts::E * gibbs_second_moment_bound(c, d, beta) / df).ln()
}

/// Expected Gibbs suboptimality: `(d/(2 beta)) log(e M (b beta/d + 1)/m)`.
pub fn suboptimality_bound(c: &RegularityConstants, d: usize, beta: f64) -> f64 {
    let df = d as f64;
    df / (2.0 * beta)
        * (std::f64::consts::E * c.smoothness * (c.dissipativity_offset * beta / df + 1.0) / c.dissipativity).ln()
}

/// `C0` and `C1` of the relative-entropy discretisation bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GirsanovConstants {
    pub c0: f64,
    pub c1: f64,
}

pub fn girsanov_constants(inp: &BoundsInput) -> GirsanovConstants {
    let m2 = inp.big_m() * inp.big_m();
    let c0 = m2 * sgld_second_moment_bound(&inp.consts, inp.kappa0, inp.d, inp.beta) + inp.big_b() * inp.big_b();
    let c1 = 6.0 * m2 * (inp.beta * c0 + inp.df());
    GirsanovConstants { c0, c1 }
}

/// `(C0 beta delta + C1 eta) k eta`.
pub fn kl_discretization_bound(inp: &BoundsInput, k: u64, eta: f64) -> Result<f64> {
    inp.check_eta(eta)?;
    let g = girsanov_constants(inp);
    Ok((g.c0 * inp.beta * inp.delta + g.c1 * eta) * k as f64 * eta)
}

/// Squared prefactors `(C0~^2, C1~^2)` of the W2 discretisation bound.
pub fn w2_discretization_constants(inp: &BoundsInput) -> (f64, f64) {
    let g = girsanov_constants(inp);
    let p = 12.0 + 8.0 * (inp.kappa0 + 2.0 * inp.b() + 2.0 * inp.df() / inp.beta);
    let bc0 = inp.beta * g.c0;
    (p * (bc0 + bc0.sqrt()), p * (g.c1 + g.c1.sqrt()))
}

/// `sqrt(C0~^2 sqrt(delta) + C1~^2 sqrt(eta)) k eta`, claimed for `k eta >= 1`.
pub fn w2_discretization_bound(inp: &BoundsInput, k: u64, eta: f64) -> Result<f64> {
    inp.check_eta(eta)?;
    let t = k as f64 * eta;
    if t < 1.0 {
        return Err(Error::Precondition(format!("k eta = {t} < 1")));
    }
    let (a, b) = w2_discretization_constants(inp);
    Ok((a * inp.delta.sqrt() + b * eta.sqrt()).sqrt() * t)
}

/// Log-Sobolev constant
/// `(2m^2 + 8M^2)/(m^2 M beta) + (1/lambda)(6M(d + beta)/m + 2)`.
pub fn lsi_constant(inp: &BoundsInput) -> Result<f64> {
    inp.require_beta_dissipative()?;
    require_positive("lambda_star", inp.lambda_star)?;
    let (m, mm, beta) = (inp.m(), inp.big_m(), inp.beta);
    Ok((2.0 * m * m + 8.0 * mm * mm) / (m * m * mm * beta)
        + (6.0 * mm * (inp.df() + beta) / m + 2.0) / inp.lambda_star)
}

/// The Lyapunov-based lower bound on the spectral gap, evaluated in log space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapLowerBound {
    pub lambda_lb: f64,
    /// `log(1/lambda_lb)`, finite even when `lambda_lb` underflows.
    pub log_inv_lambda_lb: f64,
}

pub fn spectral_gap_lower_bound(inp: &BoundsInput) -> GapLowerBound {
    let (m, beta, d, b) = (inp.m(), inp.beta, inp.df(), inp.b());
    let first = -(m * beta * (d + b * beta)).ln();
    let expo = 2.0 / m * (inp.big_m() + inp.big_b()) * (b * beta + d) + beta * (inp.a() + inp.big_b());
    let second = (2.0 * inp.universal_c * (d + b * beta) / (m * beta)).ln() + expo;
    let hi = first.max(second);
    let log_inv = hi + ((first - hi).exp() + (second - hi).exp()).ln();
    GapLowerBound { lambda_lb: (-log_inv).exp(), log_inv_lambda_lb: log_inv }
}

/// Direct (overflow-prone) evaluation of the same bound, for cross-checking.
pub fn spectral_gap_lower_bound_direct(inp: &BoundsInput) -> f64 {
    let (m, beta, d, b) = (inp.m(), inp.beta, inp.df(), inp.b());
    let inv = 1.0 / (m * beta * (d + b * beta))
        + 2.0 * inp.universal_c * (d + b * beta) / (m * beta)
            * (2.0 / m * (inp.big_m() + inp.big_b()) * (b * beta + d) + beta * (inp.a() + inp.big_b())).exp();
    1.0 / inv
}

/// Parameters of the Lyapunov function `V(w) = exp(m beta |w|^2 / 4)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovParameters {
    /// `m beta (d + b beta) / 2`
    pub kappa: f64,
    /// `(m beta)^2 / 4`
    pub gamma: f64,
    /// `2 kappa / gamma`
    pub radius_sq: f64,
    pub lambda0: f64,
    pub kappa0: f64,
}

/// Uses `lambda0 = 2 kappa` and `kappa0 = kappa`, the assignment under which
/// the Poincare constant reproduces the closed-form spectral-gap lower bound.
pub fn lyapunov_parameters(inp: &BoundsInput) -> LyapunovParameters {
    let mb = inp.m() * inp.beta;
    let kappa = 0.5 * mb * (inp.df() + inp.b() * inp.beta);
    let gamma = 0.25 * mb * mb;
    LyapunovParameters { kappa, gamma, radius_sq: 2.0 * kappa / gamma, lambda0: 2.0 * kappa, kappa0: kappa }
}

/// Poincare constant `(1/lambda0)(1 + C kappa0 R^2 e^{osc})` where `osc` is the
/// oscillation of `beta F_z` over the ball of radius `radius`.
pub fn lyapunov_poincare(inp: &BoundsInput, radius: f64, osc: f64) -> Result<f64> {
    if !(osc.is_finite() && osc >= 0.0) {
        return Err(invalid("osc", "must be finite and nonnegative"));
    }
    let p = lyapunov_parameters(inp);
    Ok((1.0 + inp.universal_c * p.kappa0 * radius * radius * osc.exp()) / p.lambda0)
}

/// Log-Sobolev constant from a Poincare constant:
/// `C1 + (C2 + 2) c_P` with `K = beta M`, `C1 = 2K/gamma + 2/K`,
/// `C2 = (2K/gamma)(kappa + gamma s)` and `s` the Gibbs second moment.
pub fn lyapunov_lsi(inp: &BoundsInput, c_p: f64, second_moment: f64) -> Result<f64> {
    let k = inp.beta * inp.big_m();
    if k <= 0.0 {
        return Err(invalid("K", "beta M must be positive"));
    }
    let p = lyapunov_parameters(inp);
    let c1 = 2.0 * k / p.gamma + 2.0 / k;
    let c2 = 2.0 * k / p.gamma * (p.kappa + p.gamma * second_moment);
    Ok(c1 + (c2 + 2.0) * c_p)
}

/// Relative entropy of the initial law with respect to the Gibbs measure:
/// `log|p0|_inf + (d/2) log(3 pi/(m beta)) + beta(M kappa0/3 + B sqrt(kappa0) + A + (b/2) log 3)`.
pub fn relent_init_bound(inp: &BoundsInput) -> f64 {
    let (m, beta, d) = (inp.m(), inp.beta, inp.df());
    inp.log_p0_inf
        + 0.5 * d * (3.0 * std::f64::consts::PI / (m * beta)).ln()
        + beta
            * (inp.big_m() * inp.kappa0 / 3.0
                + inp.big_b() * inp.kappa0.sqrt()
                + inp.a()
                + 0.5 * inp.b() * 3f64.ln())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityBounds {
    /// `(2 c_LS beta / n) sqrt(B^2 + M^2 (b + d/beta)/m)`
    pub w2_stability: f64,
    /// `4 (M^2 (b + d/beta)/m + B^2) beta c_LS`
    pub c3_tilde: f64,
    /// `C3~ / n`
    pub uniform_stability: f64,
}

pub fn stability_bounds(inp: &BoundsInput, c_ls: f64) -> StabilityBounds {
    let (mm, bb, beta) = (inp.big_m(), inp.big_b(), inp.beta);
    let s = mm * mm * (inp.b() + inp.df() / beta) / inp.m();
    let c3 = 4.0 * (s + bb * bb) * beta * c_ls;
    StabilityBounds {
        w2_stability: 2.0 * c_ls * beta / inp.n as f64 * (bb * bb + s).sqrt(),
        c3_tilde: c3,
        uniform_stability: c3 / inp.n as f64,
    }
}

/// `C2^ = sqrt(2 c_LS relent)`.
pub fn c2_hat(inp: &BoundsInput, c_ls: f64) -> f64 {
    (2.0 * c_ls * relent_init_bound(inp).max(0.0)).sqrt()
}

/// `(C0^ delta^{1/4} + C1^ eta^{1/4}) k eta + C2^ exp(-k eta/(beta c_LS))`.
pub fn w2_to_gibbs_bound(inp: &BoundsInput, c_ls: f64, k: u64, eta: f64) -> Result<f64> {
    inp.check_eta(eta)?;
    let t = k as f64 * eta;
    if t < 1.0 {
        return Err(Error::Precondition(format!("k eta = {t} < 1")));
    }
    let (a, b) = w2_discretization_constants(inp);
    Ok((a.sqrt() * inp.delta.powf(0.25) + b.sqrt() * eta.powf(0.25)) * t
        + c2_hat(inp, c_ls) * (-t / (inp.beta * c_ls)).exp())
}

/// `sigma^2 = kappa0 + 2 max(1, 1/m)(b + 2B^2 + d/beta)` used in `K0`, `K1`.
pub fn excess_risk_sigma2(inp: &BoundsInput) -> f64 {
    sgld_second_moment_bound(&inp.consts, inp.kappa0, inp.d, inp.beta)
}

/// The excess-risk bound at a tolerance `eps`, with its schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcessRiskAssembly {
    pub eps: f64,
    pub sigma2: f64,
    pub k0: f64,
    pub k1: f64,
    pub k_eta: f64,
    pub eta: f64,
    pub k: f64,
    /// `K0 delta^{1/4} log(1/eps)`
    pub discretization_term: f64,
    /// `K1 eps`
    pub convergence_term: f64,
    /// `C3~ / n`
    pub stability_term: f64,
    /// `(d/(2 beta)) log(e M (b beta/d + 1)/m)`
    pub suboptimality_term: f64,
    pub total: f64,
}

/// Requires `eps < min(m/(4M^2), 1/e)` and `eps <= exp(-1/(beta c_LS))` so
/// that `k eta >= 1`.
pub fn excess_risk_assembly(inp: &BoundsInput, c_ls: f64, eps: f64) -> Result<ExcessRiskAssembly> {
    inp.require_beta_dissipative()?;
    if inp.beta < 1.0 {
        return Err(Error::Precondition(format!("beta = {} < 1", inp.beta)));
    }
    let cap = inp.consts.max_step_size().min((-1.0f64).exp()).min((-1.0 / (inp.beta * c_ls)).exp());
    if !(eps > 0.0 && eps < cap) {
        return Err(invalid("eps", format!("must lie in (0, {cap}), got {eps}")));
    }
    let sigma2 = excess_risk_sigma2(inp);
    let (a, b) = w2_discretization_constants(inp);
    let lip = inp.big_m() * sigma2.sqrt() + inp.big_b();
    let beta_cls = inp.beta * c_ls;
    let k0 = lip * a.sqrt() * beta_cls;
    let k1 = lip * (b.sqrt() * beta_cls + c2_hat(inp, c_ls));
    let log_inv = (1.0 / eps).ln();
    let k_eta = beta_cls * log_inv;
    let eta = (eps / log_inv).powi(4);
    let k = (k_eta / eta).ceil();
    let discretization_term = k0 * inp.delta.powf(0.25) * log_inv;
    let convergence_term = k1 * eps;
    let stability_term = stability_bounds(inp, c_ls).uniform_stability;
    let suboptimality_term = suboptimality_bound(&inp.consts, inp.d, inp.beta);
    Ok(ExcessRiskAssembly {
        eps,
        sigma2,
        k0,
        k1,
        k_eta,
        eta,
        k,
        discretization_term,
        convergence_term,
        stability_term,
        suboptimality_term,
        total: discretization_term + convergence_term + stability_term + suboptimality_term,
    })
}

/// Spectral-gap lower bound for smoothed objectives: `beta gamma exp(-4 beta gamma R^2)`.
pub fn bardet_gap_bound(beta: f64, gamma: f64, radius: f64) -> f64 {
    beta * gamma * (-4.0 * beta * gamma * radius * radius).exp()
}

/// Optional inputs for [`evaluate`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub k: Option<u64>,
    pub eta: Option<f64>,
    pub eps: Option<f64>,
    /// Oscillation of `beta F_z` over the Lyapunov ball, for the Poincare route.
    pub osc: Option<f64>,
    /// Gibbs second moment for the Lyapunov LSI route; defaults to its bound.
    pub second_moment: Option<f64>,
}

/// Configuration file accepted by `bounds eval`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsEvalConfig {
    pub input: BoundsInput,
    #[serde(default)]
    pub options: EvalOptions,
}

const NON_RIGOROUS: &str = "non-rigorous constant: universal_C of the Lyapunov Poincare criterion is unspecified";

/// Evaluates every constant that the inputs allow. Quantities whose
/// preconditions fail are listed in `flags` instead.
pub fn evaluate(inp: &BoundsInput, opts: &EvalOptions) -> Result<BoundReport> {
    inp.validate()?;
    let mut r = BoundReport::default();
    let c = &inp.consts;
    let base = [
        ("A", c.loss_at_origin),
        ("B", c.grad_at_origin),
        ("M", c.smoothness),
        ("m", c.dissipativity),
        ("b", c.dissipativity_offset),
        ("d", inp.df()),
        ("beta", inp.beta),
    ];
    let with = |extra: &[(&'static str, f64)]| -> Vec<(&'static str, f64)> {
        base.iter().copied().chain(extra.iter().copied()).collect()
    };

    let g = girsanov_constants(inp);
    let ins = with(&[("kappa0", inp.kappa0)]);
    r.insert("C0", g.c0, "M^2 (kappa0 + 2 max(1, 1/m) (b + 2 B^2 + d/beta)) + B^2", &ins);
    r.insert("C1", g.c1, "6 M^2 (beta C0 + d)", &ins);
    let (a, b) = w2_discretization_constants(inp);
    r.insert("C0_tilde_sq", a, "(12 + 8 (kappa0 + 2 b + 2 d/beta)) (beta C0 + sqrt(beta C0))", &ins);
    r.insert("C1_tilde_sq", b, "(12 + 8 (kappa0 + 2 b + 2 d/beta)) (C1 + sqrt(C1))", &ins);
    r.insert("sigma2", excess_risk_sigma2(inp), "kappa0 + 2 max(1, 1/m) (b + 2 B^2 + d/beta)", &ins);

    let lb = spectral_gap_lower_bound(inp);
    let ins_c = with(&[("universal_C", inp.universal_c)]);
    let gap_formula = "1 / (1/(m beta (d + b beta)) + (2 C (d + b beta)/(m beta)) exp((2/m)(M + B)(b beta + d) + beta (A + B)))";
    r.insert("lambda_star_lb", lb.lambda_lb, gap_formula, &ins_c);
    r.insert("log_inv_lambda_star_lb", lb.log_inv_lambda_lb, "log of the reciprocal of lambda_star_lb", &ins_c);
    r.flags.push(format!("lambda_star_lb: {NON_RIGOROUS}"));
    r.flags.push(format!("lambda_star provenance: {:?}", inp.lambda_provenance).to_lowercase());

    let relent = relent_init_bound(inp);
    r.insert(
        "relent_ub",
        relent,
        "log|p0|_inf + (d/2) log(3 pi/(m beta)) + beta (M kappa0/3 + B sqrt(kappa0) + A + (b/2) log 3)",
        &with(&[("kappa0", inp.kappa0), ("log_p0_inf", inp.log_p0_inf)]),
    );
    r.insert(
        "suboptimality_ub",
        suboptimality_bound(c, inp.d, inp.beta),
        "(d/(2 beta)) log(e M (b beta/d + 1)/m)",
        &base,
    );
    r.insert("gibbs_second_moment_ub", gibbs_second_moment_bound(c, inp.d, inp.beta), "(b + d/beta)/m", &base);
    r.insert(
        "gibbs_entropy_ub",
        gibbs_entropy_bound(c, inp.d, inp.beta),
        "(d/2) log(2 pi e (b + d/beta)/(m d))",
        &base,
    );

    match lsi_constant(inp) {
        Ok(c_ls) => {
            let ins_l = with(&[("lambda_star", inp.lambda_star)]);
            r.insert("c_LS", c_ls, "(2 m^2 + 8 M^2)/(m^2 M beta) + (1/lambda_star)(6 M (d + beta)/m + 2)", &ins_l);
            r.insert("C2_hat", c2_hat(inp, c_ls), "sqrt(2 c_LS relent_ub)", &ins_l);
            let st = stability_bounds(inp, c_ls);
            let ins_n = with(&[("n", inp.n as f64), ("c_LS", c_ls)]);
            r.insert("w2_stability", st.w2_stability, "(2 c_LS beta/n) sqrt(B^2 + M^2 (b + d/beta)/m)", &ins_n);
            r.insert("C3_tilde", st.c3_tilde, "4 (M^2 (b + d/beta)/m + B^2) beta c_LS", &ins_n);
            r.insert("uniform_stability", st.uniform_stability, "C3_tilde / n", &ins_n);
            if let (Some(k), Some(eta)) = (opts.k, opts.eta) {
                match w2_to_gibbs_bound(inp, c_ls, k, eta) {
                    Ok(v) => r.insert(
                        "w2_to_gibbs_ub",
                        v,
                        "(C0_hat delta^(1/4) + C1_hat eta^(1/4)) k eta + C2_hat exp(-k eta/(beta c_LS))",
                        &[("k", k as f64), ("eta", eta), ("delta", inp.delta)],
                    ),
                    Err(e) => r.flags.push(format!("w2_to_gibbs_ub not evaluated: {e}")),
                }
            }
            if let Some(eps) = opts.eps {
                match excess_risk_assembly(inp, c_ls, eps) {
                    Ok(x) => {
                        let ins_e = [("eps", eps), ("delta", inp.delta), ("n", inp.n as f64)];
                        r.insert("K0", x.k0, "(M sigma + B) C0_hat beta c_LS", &ins_e);
                        r.insert("K1", x.k1, "(M sigma + B)(C1_hat beta c_LS + C2_hat)", &ins_e);
                        r.insert("k_eta", x.k_eta, "beta c_LS log(1/eps)", &ins_e);
                        r.insert("eta_required", x.eta, "(eps/log(1/eps))^4", &ins_e);
                        r.insert("k_required", x.k, "ceil(k_eta/eta_required)", &ins_e);
                        r.insert("excess_risk_ub", x.total, "K0 delta^(1/4) log(1/eps) + K1 eps + C3_tilde/n + suboptimality_ub", &ins_e);
                        r.insert("excess_risk_term_discretization", x.discretization_term, "K0 delta^(1/4) log(1/eps)", &ins_e);
                        r.insert("excess_risk_term_convergence", x.convergence_term, "K1 eps", &ins_e);
                        r.insert("excess_risk_term_stability", x.stability_term, "C3_tilde/n", &ins_e);
                        r.insert("excess_risk_term_suboptimality", x.suboptimality_term, "suboptimality_ub", &ins_e);
                    }
                    Err(e) => r.flags.push(format!("excess_risk_ub not evaluated: {e}")),
                }
            }
        }
        Err(e) => r.flags.push(format!("c_LS not evaluated: {e}")),
    }

    if let (Some(k), Some(eta)) = (opts.k, opts.eta) {
        let ins_k = [("k", k as f64), ("eta", eta), ("delta", inp.delta)];
        match kl_discretization_bound(inp, k, eta) {
            Ok(v) => r.insert("kl_discretization_ub", v, "(C0 beta delta + C1 eta) k eta", &ins_k),
            Err(e) => r.flags.push(format!("kl_discretization_ub not evaluated: {e}")),
        }
        match w2_discretization_bound(inp, k, eta) {
            Ok(v) => r.insert("w2_discretization_ub", v, "sqrt(C0_tilde_sq sqrt(delta) + C1_tilde_sq sqrt(eta)) k eta", &ins_k),
            Err(e) => r.flags.push(format!("w2_discretization_ub not evaluated: {e}")),
        }
    }

    if let Some(osc) = opts.osc {
        let p = lyapunov_parameters(inp);
        let c_p = lyapunov_poincare(inp, p.radius_sq.sqrt(), osc)?;
        let ins_p = with(&[("osc", osc), ("universal_C", inp.universal_c)]);
        r.insert("lyapunov_kappa", p.kappa, "m beta (d + b beta)/2", &base);
        r.insert("lyapunov_gamma", p.gamma, "(m beta)^2/4", &base);
        r.insert("lyapunov_R_sq", p.radius_sq, "2 kappa/gamma", &base);
        r.insert("c_P", c_p, "(1/lambda0)(1 + C kappa0 R^2 exp(osc)), lambda0 = 2 kappa, kappa0 = kappa", &ins_p);
        r.flags.push(format!("c_P: {NON_RIGOROUS}"));
        let s = opts.second_moment.unwrap_or_else(|| gibbs_second_moment_bound(c, inp.d, inp.beta));
        let c_ls_a = lyapunov_lsi(inp, c_p, s)?;
        r.insert(
            "c_LS_lyapunov",
            c_ls_a,
            "2K/gamma + 2/K + ((2K/gamma)(kappa + gamma s) + 2) c_P, K = beta M",
            &with(&[("c_P", c_p), ("second_moment", s)]),
        );
        r.flags.push(format!("c_LS_lyapunov: {NON_RIGOROUS}"));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consts(a: f64, bb: f64, mm: f64, m: f64, b: f64) -> RegularityConstants {
        RegularityConstants::new(a, bb, mm, m, b).unwrap()
    }

    fn input(c: RegularityConstants, d: usize, beta: f64, kappa0: f64) -> BoundsInput {
        BoundsInput {
            consts: c,
            d,
            n: 100,
            beta,
            delta: 0.0,
            kappa0,
            log_p0_inf: 0.0,
            lambda_star: 1.0,
            lambda_provenance: LambdaProvenance::User,
            universal_c: 1.0,
        }
    }

    #[test]
    fn verdicts() {
        assert_eq!(Verdict::compare(1.0, 0.1, 2.0), Verdict::Holds);
        assert_eq!(Verdict::compare(1.95, 0.1, 2.0), Verdict::Inconclusive);
        assert_eq!(Verdict::compare(2.5, 0.1, 2.0), Verdict::Violated);
        assert_eq!(Verdict::compare(0.05, 0.0, 0.05 * (1.0 + 1e-15)), Verdict::Holds);
        assert_eq!(serde_json::to_string(&Verdict::NotApplicable).unwrap(), "\"not_applicable\"");
    }

    #[test]
    fn girsanov_examples() {
        let inp = input(consts(0.0, 1.0, 1.0, 1.0, 1.0), 1, 2.0, 1.0);
        let g = girsanov_constants(&inp);
        assert!((g.c0 - 9.0).abs() < 1e-12);
        assert!((g.c1 - 114.0).abs() < 1e-12);
        let mut more = inp.clone();
        more.kappa0 = 2.0;
        assert!(girsanov_constants(&more).c0 > g.c0);
        let (a, b) = w2_discretization_constants(&inp);
        assert!((a - 44.0 * (18.0 + 18f64.sqrt())).abs() < 1e-9);
        assert!((a - 978.68).abs() < 0.01);
        assert!((b - 5485.8).abs() < 0.1);
    }

    #[test]
    fn kl_discretization_example() {
        let mut inp = input(consts(0.0, 1.0, 1.0, 1.0, 1.0), 1, 2.0, 1.0);
        inp.delta = 0.125;
        // m/(4M^2) = 0.25 admits eta = 0.01.
        let v = kl_discretization_bound(&inp, 100, 0.01).unwrap();
        assert!((v - 3.39).abs() < 1e-12);
        let v2 = kl_discretization_bound(&inp, 200, 0.01).unwrap();
        assert!((v2 - 2.0 * v).abs() < 1e-12);
        assert!(kl_discretization_bound(&inp, 1, 0.3).is_err());
    }

    #[test]
    fn w2_discretization_scales_with_eta_quarter() {
        let inp = input(consts(0.0, 1.0, 1.0, 1.0, 1.0), 1, 2.0, 1.0);
        let a = w2_discretization_bound(&inp, 100, 0.01).unwrap();
        let b = w2_discretization_bound(&inp, 1600, 0.01 / 16.0).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
        assert!(matches!(w2_discretization_bound(&inp, 10, 0.01), Err(Error::Precondition(_))));
    }

    #[test]
    fn lsi_example() {
        let inp = input(consts(0.0, 0.0, 1.0, 1.0, 0.0), 1, 2.0, 0.0);
        assert!((lsi_constant(&inp).unwrap() - 25.0).abs() < 1e-12);
        let low = input(consts(0.0, 0.0, 1.0, 1.0, 0.0), 1, 1.0, 0.0);
        assert!(matches!(lsi_constant(&low), Err(Error::Precondition(_))));
        let mut big = input(consts(0.0, 0.0, 1.0, 1.0, 0.0), 1, 1e9, 0.0);
        big.lambda_star = 1.0;
        let tail = 6.0 * (1.0 + 1e9) + 2.0;
        assert!((lsi_constant(&big).unwrap() - tail).abs() / tail < 1e-9);
    }

    #[test]
    fn gap_lower_bound_example_and_log_space() {
        let inp = input(consts(0.0, 0.0, 1.0, 1.0, 0.0), 1, 1.0, 0.0);
        let lb = spectral_gap_lower_bound(&inp);
        let e2 = std::f64::consts::E.powi(2);
        assert!((1.0 / lb.lambda_lb - (1.0 + 2.0 * e2)).abs() < 1e-12);
        assert!((lb.lambda_lb - 0.0634).abs() < 1e-4);
        for beta in [0.5, 2.0, 7.0, 30.0] {
            let i = input(consts(0.3, 0.7, 2.0, 0.8, 1.1), 2, beta, 0.0);
            let direct = spectral_gap_lower_bound_direct(&i);
            if direct > 0.0 && direct.is_finite() {
                assert!((spectral_gap_lower_bound(&i).lambda_lb - direct).abs() <= 1e-12 * direct);
            }
        }
        let huge = input(consts(0.3, 0.7, 2.0, 0.8, 1.1), 2, 1e4, 0.0);
        assert!(spectral_gap_lower_bound(&huge).log_inv_lambda_lb.is_finite());
    }

    #[test]
    fn lyapunov_examples() {
        let inp = input(consts(0.0, 0.0, 1.0, 1.0, 0.0), 1, 2.0, 0.0);
        let p = lyapunov_parameters(&inp);
        assert_eq!((p.kappa, p.gamma), (1.0, 1.0));
        let c_p = 0.7;
        assert!((lyapunov_lsi(&inp, c_p, 0.5).unwrap() - (5.0 + 8.0 * c_p)).abs() < 1e-12);
        assert!(lyapunov_lsi(&inp, 2.0, 0.5).unwrap() > lyapunov_lsi(&inp, 1.0, 0.5).unwrap());
        assert!((lyapunov_poincare(&inp, 0.0, 0.0).unwrap() - 1.0 / p.lambda0).abs() < 1e-15);
        let mut c2 = inp.clone();
        c2.universal_c = 2.0;
        assert!(lyapunov_poincare(&c2, 1.0, 0.5).unwrap() > lyapunov_poincare(&inp, 1.0, 0.5).unwrap());
        // Reproduces the closed-form gap bound when osc takes its worst case.
        let g = input(consts(0.2, 0.3, 1.5, 1.0, 0.4), 1, 2.0, 0.0);
        let q = lyapunov_parameters(&g);
        let worst = g.beta * ((1.5 + 0.3) * q.radius_sq / 2.0 + 0.2 + 0.3);
        let c_p = lyapunov_poincare(&g, q.radius_sq.sqrt(), worst).unwrap();
        let lb = spectral_gap_lower_bound(&g);
        assert!((c_p - 1.0 / lb.lambda_lb).abs() < 1e-9 * c_p);
    }

    #[test]
    fn relent_example() {
        let mut inp = input(consts(0.0, 0.0, 1.0, 1.0, 0.0), 1, 2.0, 2f64.ln());
        inp.log_p0_inf = -0.5 * (std::f64::consts::PI / 2.0).ln();
        let v = relent_init_bound(&inp);
        assert!((v - 1.0115).abs() < 1e-4, "{v}");
        assert!(0.5 * (0.25 - 1.0 + 4f64.ln()) <= v);
    }

    #[test]
    fn stability_example() {
        let mut inp = input(consts(0.0, 1.0, 1.0, 1.0, 1.0), 1, 2.0, 0.0);
        inp.n = 100;
        let s = stability_bounds(&inp, 25.0);
        assert!((s.w2_stability - 2.5f64.sqrt()).abs() < 1e-12);
        assert!((s.uniform_stability - 5.0).abs() < 1e-12);
        let zero = input(RegularityConstants { grad_at_origin: 0.0, smoothness: 0.0, ..consts(0.0, 0.0, 1.0, 1.0, 1.0) }, 1, 2.0, 0.0);
        let z = stability_bounds(&zero, 25.0);
        assert_eq!((z.w2_stability, z.c3_tilde), (0.0, 0.0));
    }

    #[test]
    fn w2_to_gibbs_example() {
        let mut inp = input(consts(0.0, 0.0, 1.0, 1.0, 0.0), 1, 2.0, 2f64.ln());
        inp.log_p0_inf = -0.5 * (std::f64::consts::PI / 2.0).ln();
        let c_ls = 25.0;
        let t = 50.0 * 20f64.ln();
        let tail = c2_hat(&inp, c_ls) * (-t / 50.0).exp();
        assert!((tail - 0.3556).abs() < 1e-3, "{tail}");
        let eta = 0.01;
        let k = (t / eta).round() as u64;
        assert!(w2_to_gibbs_bound(&inp, c_ls, k, eta).unwrap() > tail);
    }

    #[test]
    fn suboptimality_examples() {
        let c = consts(0.0, 0.0, 1.0, 1.0, 0.0);
        assert!((suboptimality_bound(&c, 1, 10.0) - 0.05).abs() < 1e-15);
        let c1 = consts(0.0, 0.0, 1.0, 1.0, 1.0);
        assert!((suboptimality_bound(&c1, 1, 10.0) - 0.05 * (1.0 + 11f64.ln())).abs() < 1e-12);
        assert!((suboptimality_bound(&c1, 1, 10.0) - 0.16990).abs() < 1e-5);
    }

    #[test]
    fn moment_bound_examples() {
        let c = consts(0.0, 0.0, 1.0, 1.0, 0.0);
        let v = diffusion_second_moment_bound(&c, 2f64.ln(), 1, 2.0, 1.0);
        assert!((v - 0.5262).abs() < 1e-4);
        let c1 = consts(0.0, 0.0, 1.0, 1.0, 1.0);
        assert!((exp_integrability_bound(&c1, 0.69, 1, 2.0, 1.0) - 3.69).abs() < 1e-12);
        assert!((diffusion_second_moment_bound(&c, 0.3, 1, 2.0, 0.0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn bardet_examples() {
        assert!((bardet_gap_bound(1.0, 1.0, 0.5) - (-1f64).exp()).abs() < 1e-15);
        assert!((bardet_gap_bound(2.0, 1.5, 1e-9) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn excess_risk_limits() {
        let mut inp = input(consts(0.25, 0.5, 2.0, 1.0, 1.0), 1, 4.0, 0.5);
        inp.lambda_star = 0.5;
        let c_ls = lsi_constant(&inp).unwrap();
        let x = excess_risk_assembly(&inp, c_ls, 0.01).unwrap();
        assert_eq!(x.discretization_term, 0.0);
        let sum = x.discretization_term + x.convergence_term + x.stability_term + x.suboptimality_term;
        assert!((x.total - sum).abs() < 1e-12 * x.total);
        let y = excess_risk_assembly(&inp, c_ls, 1e-6).unwrap();
        assert!(y.convergence_term < x.convergence_term);
        assert!((y.k_eta - 4.0 * c_ls * 1e6f64.ln()).abs() < 1e-9 * y.k_eta);
        assert!(excess_risk_assembly(&inp, c_ls, 0.2).is_err());
        inp.delta = 0.125;
        assert!(excess_risk_assembly(&inp, c_ls, 0.01).unwrap().discretization_term > 0.0);
    }

    #[test]
    fn evaluate_is_pure_and_serializable() {
        let mut inp = input(consts(0.25, 0.5, 2.0, 1.0, 1.0), 1, 4.0, 0.5);
        inp.delta = 0.125;
        let opts = EvalOptions { k: Some(400), eta: Some(0.01), eps: Some(0.02), osc: Some(3.0), second_moment: None };
        let a = evaluate(&inp, &opts).unwrap();
        let b = evaluate(&inp, &opts).unwrap();
        assert_eq!(a, b);
        for key in ["C0", "C1", "c_LS", "K0", "K1", "lambda_star_lb", "relent_ub", "excess_risk_ub", "c_P", "c_LS_lyapunov"] {
            assert!(a.value(key).is_some(), "{key}");
        }
        assert!(a.entries.values().all(|e| e.value >= 0.0 || e.formula.starts_with("log")));
        let json = serde_json::to_string(&a).unwrap();
        let back: BoundReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
    }
}
