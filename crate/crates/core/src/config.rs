//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::FdScheme;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `black_scholes`, `euler_gbm`, `euler_custom` or `identity`.
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(rename = "T", default = "one")]
    pub maturity: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    pub lambda0: Vec<f64>,
    /// Coefficients of `dX = (a + bX)dt + (c + eX)dW` for `euler_custom`.
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub e: f64,
    #[serde(default)]
    pub ellipticity_c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffConfig {
    /// `put`, `smooth_put`, `digital`, `truncated_call`, `linear` or `constant`.
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub strike: f64,
    #[serde(default)]
    pub zmin: Option<f64>,
    /// Truncated-call cap as a multiple of the strike.
    #[serde(default = "default_cap")]
    pub cap: f64,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default)]
    pub value: f64,
    /// Express the payoff in units of the non-risky asset (`× e^{−rT}`).
    #[serde(default = "yes")]
    pub discounted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllConfig {
    #[serde(default = "default_profile")]
    pub profile: String,
    /// Required unless the radius is coupled to the bandwidth.
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub match_kernel: bool,
    #[serde(default)]
    pub couple_radius_to_h: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaSetting {
    Fixed(f64),
    Named(String),
}

impl Default for DeltaSetting {
    fn default() -> Self {
        DeltaSetting::Named("auto".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorBlock {
    /// Fixed outer bandwidth; overrides the bandwidth block when present.
    #[serde(default)]
    pub h: Option<f64>,
    /// Inner bandwidth of the density estimates; defaults to the outer one.
    #[serde(default)]
    pub h_inner: Option<f64>,
    #[serde(default)]
    pub delta: DeltaSetting,
    #[serde(default = "yes")]
    pub binning: bool,
    #[serde(default)]
    pub cell_size: Option<f64>,
}

impl Default for EstimatorBlock {
    fn default() -> Self {
        Self {
            h: None,
            h_inner: None,
            delta: DeltaSetting::default(),
            binning: true,
            cell_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(default = "default_kernel")]
    pub name: String,
    #[serde(default = "two")]
    pub order: usize,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            name: default_kernel(),
            order: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandwidthBlock {
    /// `analytic`, `pilot`, `rule_of_thumb` or `fixed`.
    #[serde(default = "default_bw_method")]
    pub method: String,
    #[serde(default)]
    pub h: Option<f64>,
    /// Undersmoothing exponent; 0 keeps the MSE-optimal bandwidth.
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "one")]
    pub c0: f64,
    #[serde(default = "default_pilot")]
    pub pilot_draws: usize,
    #[serde(default = "default_fd_step")]
    pub fd_rel_step: f64,
}

impl Default for BandwidthBlock {
    fn default() -> Self {
        Self {
            method: default_bw_method(),
            h: None,
            gamma: 0.0,
            c0: 1.0,
            pilot_draws: default_pilot(),
            fd_rel_step: default_fd_step(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineBlock {
    /// Defaults to 1% of `|λ⁰|`.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_scheme")]
    pub scheme: FdScheme,
    #[serde(default = "yes")]
    pub common_randoms: bool,
    #[serde(default = "one")]
    pub noise_scale: f64,
}

impl Default for BaselineBlock {
    fn default() -> Self {
        Self {
            epsilon: None,
            scheme: FdScheme::Central,
            common_randoms: true,
            noise_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    #[serde(rename = "Ns")]
    pub ns: Vec<usize>,
    #[serde(default = "one_usize")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    /// Subset of `beta_tilde`, `beta_bar`, `fd`, `lr`, `pathwise`.
    #[serde(default = "default_estimators")]
    pub estimators: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CltBlock {
    #[serde(rename = "N", default = "default_clt_n")]
    pub n: usize,
    #[serde(default = "default_clt_reps")]
    pub replications: usize,
    /// Undersmoothing exponent used for the screen.
    #[serde(default = "default_clt_gamma")]
    pub gamma: f64,
    /// Bandwidth multiple of h* for the oversmoothed control.
    #[serde(default = "default_oversmooth")]
    pub oversmooth_factor: f64,
}

impl Default for CltBlock {
    fn default() -> Self {
        Self {
            n: default_clt_n(),
            replications: default_clt_reps(),
            gamma: default_clt_gamma(),
            oversmooth_factor: default_oversmooth(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub payoff: PayoffConfig,
    pub ell: EllConfig,
    #[serde(default)]
    pub estimator: EstimatorBlock,
    #[serde(rename = "kernel_K", default)]
    pub kernel_k: KernelSpec,
    #[serde(rename = "kernel_H", default)]
    pub kernel_h: KernelSpec,
    #[serde(default)]
    pub bandwidth: BandwidthBlock,
    #[serde(default)]
    pub baseline: BaselineBlock,
    pub sweep: SweepBlock,
    #[serde(default)]
    pub clt: CltBlock,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
}

fn default_r() -> f64 {
    0.05
}
fn default_sigma() -> f64 {
    0.2
}
fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn two() -> usize {
    2
}
fn yes() -> bool {
    true
}
fn default_steps() -> usize {
    64
}
fn default_cap() -> f64 {
    3.0
}
fn default_profile() -> String {
    "epanechnikov".into()
}
fn default_kernel() -> String {
    "epanechnikov".into()
}
fn default_bw_method() -> String {
    "analytic".into()
}
fn default_pilot() -> usize {
    10_000
}
fn default_fd_step() -> f64 {
    0.01
}
fn default_scheme() -> FdScheme {
    FdScheme::Central
}
fn default_estimators() -> Vec<String> {
    ["beta_tilde", "beta_bar", "fd", "lr", "pathwise"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}
fn default_clt_n() -> usize {
    30_000
}
fn default_clt_reps() -> usize {
    200
}
fn default_clt_gamma() -> f64 {
    0.35
}
fn default_oversmooth() -> f64 {
    2.0
}
fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

pub const ESTIMATORS: [&str; 5] = ["beta_tilde", "beta_bar", "fd", "lr", "pathwise"];

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid run configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sweep;
        if s.ns.is_empty() {
            return Err(Error::Config("sweep.Ns must not be empty".into()));
        }
        if s.ns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("sweep.Ns must be strictly increasing, got {:?}", s.ns)));
        }
        if s.ns[0] < 2 {
            return Err(Error::Config("every N must be at least 2".into()));
        }
        if s.replications == 0 {
            return Err(Error::Config("sweep.replications must be at least 1".into()));
        }
        for e in &s.estimators {
            if !ESTIMATORS.contains(&e.as_str()) {
                return Err(Error::Config(format!("unknown estimator '{e}'; expected one of {ESTIMATORS:?}")));
            }
        }
        if self.model.lambda0.is_empty() {
            return Err(Error::Config("model.lambda0 must not be empty".into()));
        }
        if !self.ell.couple_radius_to_h && self.ell.radius.is_none() {
            return Err(Error::Config(
                "ell.radius is required unless ell.couple_radius_to_h is set".into(),
            ));
        }
        if let DeltaSetting::Named(n) = &self.estimator.delta {
            if n != "auto" {
                return Err(Error::Config(format!("estimator.delta must be a number or \"auto\", got \"{n}\"")));
            }
        }
        if !["analytic", "pilot", "rule_of_thumb", "fixed"].contains(&self.bandwidth.method.as_str()) {
            return Err(Error::Config(format!("unknown bandwidth.method '{}'", self.bandwidth.method)));
        }
        if self.bandwidth.method == "fixed" && self.bandwidth.h.is_none() && self.estimator.h.is_none() {
            return Err(Error::Config("bandwidth.method = fixed needs bandwidth.h".into()));
        }
        Ok(())
    }

    /// Reference experiment: Black–Scholes put at the money, ρ = 25.
    pub fn reference() -> Self {
        Self::from_json(REFERENCE_JSON).expect("reference configuration is valid")
    }
}

pub const REFERENCE_JSON: &str = r#"{
  "model": { "type": "black_scholes", "r": 0.05, "sigma": 0.2, "T": 1.0, "lambda0": [100.0] },
  "payoff": { "type": "put", "strike": 100.0 },
  "ell": { "profile": "epanechnikov", "radius": 25.0 },
  "estimator": { "delta": "auto", "binning": true },
  "kernel_K": { "name": "epanechnikov", "order": 2 },
  "kernel_H": { "name": "epanechnikov", "order": 2 },
  "bandwidth": { "method": "analytic" },
  "sweep": { "Ns": [4000, 8000, 16000, 32000, 64000], "replications": 100, "seed": 20240607 },
  "outputs": "out"
}"#;
