//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use wgbsl_core::gmm::EmConfig;
use wgbsl_core::sim;
use wgbsl_core::synlik::GammaPrior;
use wgbsl_core::vb::VbConfig;
use wgbsl_core::wg::WgConfig;

use crate::methods::Method;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub simulator: SimulatorSection,
    #[serde(default)]
    pub wg: WgSection,
    #[serde(default)]
    pub vb: VbSection,
    #[serde(default)]
    pub pilot: PilotSection,
    #[serde(default)]
    pub mcmc: McmcSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub methods: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulatorSection {
    pub name: String,
    /// True parameter in natural coordinates.
    pub theta_true: Vec<f64>,
    /// Observed dataset size (days for toads).
    pub n_obs: usize,
    /// Simulated dataset size; defaults to `n_obs`.
    pub n_sim: Option<usize>,
    #[serde(default = "default_toads")]
    pub n_toads: usize,
    /// Working-space prior `N(prior_mean, prior_sd²)` per coordinate.
    pub prior_sd: f64,
    pub prior_mean: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct WgSection {
    pub corpus_size: usize,
    pub split: [f64; 3],
    /// Dataset size for the corpus; defaults to the simulated size.
    pub corpus_n: Option<usize>,
    /// Natural-space training centre; a pilot VB-BSL run supplies it when
    /// absent.
    pub theta0: Option<Vec<f64>>,
    /// Load a trained transform instead of training one.
    pub transform_path: Option<PathBuf>,
    pub epsilon: f64,
    pub k_candidates: Vec<usize>,
    pub reselect_every: usize,
    pub smoothing_window: usize,
    pub patience: usize,
    pub max_iters: usize,
    pub min_delta: f64,
    pub em_restarts: usize,
    pub em_max_iter: usize,
    pub em_tol: f64,
}

impl Default for WgSection {
    fn default() -> Self {
        let wg = WgConfig::default();
        Self {
            corpus_size: 3000,
            split: [1.0 / 3.0; 3],
            corpus_n: None,
            theta0: None,
            transform_path: None,
            epsilon: wg.epsilon,
            k_candidates: wg.k_candidates,
            reselect_every: wg.reselect_every,
            smoothing_window: wg.smoothing_window,
            patience: wg.patience,
            max_iters: wg.max_iters,
            min_delta: wg.min_delta,
            em_restarts: wg.em.restarts,
            em_max_iter: wg.em.max_iter,
            em_tol: wg.em.tol,
        }
    }
}

impl WgSection {
    pub fn to_config(&self, seed: u64) -> WgConfig {
        WgConfig {
            epsilon: self.epsilon,
            k_candidates: self.k_candidates.clone(),
            reselect_every: self.reselect_every,
            smoothing_window: self.smoothing_window,
            patience: self.patience,
            max_iters: self.max_iters,
            min_delta: self.min_delta,
            em: EmConfig {
                tol: self.em_tol,
                max_iter: self.em_max_iter,
                restarts: self.em_restarts,
                seed,
                ..EmConfig::default()
            },
            seed,
            ..WgConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct VbSection {
    pub samples: usize,
    pub n_sims: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps0: f64,
    pub tau: f64,
    pub window: usize,
    pub patience: usize,
    pub max_iters: usize,
    pub sigma0: f64,
    /// Initial variational sd as a fraction of the prior sd.
    pub init_sd_fraction: f64,
}

impl Default for VbSection {
    fn default() -> Self {
        let vb = VbConfig::default();
        Self {
            samples: vb.samples,
            n_sims: vb.n_sims,
            beta1: vb.beta1,
            beta2: vb.beta2,
            eps0: vb.eps0,
            tau: vb.tau,
            window: vb.window,
            patience: vb.patience,
            max_iters: vb.max_iters,
            sigma0: vb.sigma0,
            init_sd_fraction: 0.5,
        }
    }
}

impl VbSection {
    pub fn to_config(&self, robust: bool, seed: u64) -> VbConfig {
        VbConfig {
            samples: self.samples,
            n_sims: self.n_sims,
            beta1: self.beta1,
            beta2: self.beta2,
            eps0: self.eps0,
            tau: self.tau,
            window: self.window,
            patience: self.patience,
            max_iters: self.max_iters,
            method: if robust {
                wgbsl_core::vb::VbMethod::RobustMean
            } else {
                wgbsl_core::vb::VbMethod::Bsl
            },
            sigma0: self.sigma0,
            seed,
            ..VbConfig::default()
        }
    }
}

/// Settings of the VB-BSL run that locates the WG training centre. Unset
/// fields inherit from `[vb]`; `max_iters` defaults to half of it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PilotSection {
    pub samples: Option<usize>,
    pub n_sims: Option<usize>,
    pub max_iters: Option<usize>,
    pub eps0: Option<f64>,
}

impl PilotSection {
    pub fn resolve(&self, vb: &VbSection) -> VbSection {
        VbSection {
            samples: self.samples.unwrap_or(vb.samples),
            n_sims: self.n_sims.unwrap_or(vb.n_sims),
            max_iters: self.max_iters.unwrap_or(vb.max_iters / 2),
            eps0: self.eps0.unwrap_or(vb.eps0),
            ..vb.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum GammaPriorKind {
    Gaussian,
    Laplace,
    Exponential,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSection {
    pub iterations: usize,
    pub n_sims: usize,
    /// Random-walk sd per working coordinate; one value is broadcast.
    pub proposal_scale: Vec<f64>,
    pub gamma_scale: f64,
    pub adapt_iters: usize,
    pub burn_in: f64,
    /// Prior on `Γ` for the variance-adjusted chains; mean-adjusted chains
    /// always use the Gaussian prior with `vb.sigma0`.
    pub variance_gamma_prior: GammaPriorKind,
}

impl Default for McmcSection {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            n_sims: 200,
            proposal_scale: vec![0.1],
            gamma_scale: 0.1,
            adapt_iters: 2_000,
            burn_in: 0.25,
            variance_gamma_prior: GammaPriorKind::Exponential,
        }
    }
}

impl McmcSection {
    pub fn gamma_prior(&self, kind: GammaPriorKind, sigma0: f64) -> GammaPrior {
        match kind {
            GammaPriorKind::Gaussian => GammaPrior::Gaussian { sigma0 },
            GammaPriorKind::Laplace => GammaPrior::Laplace { scale: 0.5 },
            GammaPriorKind::Exponential => GammaPrior::Exponential { rate: 0.5 },
        }
    }

    pub fn scales(&self, p: usize) -> Result<Vec<f64>> {
        match self.proposal_scale.len() {
            1 => Ok(vec![self.proposal_scale[0]; p]),
            n if n == p => Ok(self.proposal_scale.clone()),
            n => bail!("mcmc.proposal_scale has {n} entries for {p} parameters"),
        }
    }
}

fn one() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_toads() -> usize {
    sim::toads::DEFAULT_TOADS
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).context("parsing configuration")?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let sim = self.build_simulator()?;
        let p = sim.param_dim();
        if self.simulator.theta_true.len() != p {
            bail!("simulator.theta_true needs {p} values");
        }
        sim.unconstrain(&self.simulator.theta_true)
            .context("simulator.theta_true must lie inside the parameter region")?;
        if !(self.simulator.prior_sd > 0.0) {
            bail!("simulator.prior_sd must be positive");
        }
        if let Some(m) = &self.simulator.prior_mean {
            if m.len() != p {
                bail!("simulator.prior_mean needs {p} values");
            }
        }
        if let Some(t) = &self.wg.theta0 {
            sim.unconstrain(t).context("wg.theta0 must lie inside the parameter region")?;
        }
        if self.experiment.replicates == 0 {
            bail!("experiment.replicates must be at least 1");
        }
        if self.experiment.methods.is_empty() {
            bail!("experiment.methods is empty");
        }
        for m in &self.experiment.methods {
            m.parse::<Method>()?;
        }
        if self.wg.split.iter().any(|v| !(*v >= 0.0)) || (self.wg.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            bail!("wg.split must be nonnegative and sum to 1");
        }
        if !(self.mcmc.burn_in >= 0.0 && self.mcmc.burn_in < 1.0) {
            bail!("mcmc.burn_in must lie in [0, 1)");
        }
        self.vb.to_config(false, 0).validate()?;
        Ok(())
    }

    pub fn methods(&self) -> Vec<Method> {
        self.experiment.methods.iter().map(|m| m.parse().expect("validated")).collect()
    }

    pub fn n_sim(&self) -> usize {
        self.simulator.n_sim.unwrap_or(self.simulator.n_obs)
    }

    pub fn build_simulator(&self) -> Result<Box<dyn sim::Simulator>> {
        Ok(sim::by_name(&self.simulator.name, self.n_sim(), self.simulator.n_toads)?)
    }

    pub fn build_observed_simulator(&self) -> Result<Box<dyn sim::Simulator>> {
        Ok(sim::by_name(&self.simulator.name, self.simulator.n_obs, self.simulator.n_toads)?)
    }

    pub fn build_corpus_simulator(&self) -> Result<Box<dyn sim::Simulator>> {
        let n = self.wg.corpus_n.unwrap_or(self.n_sim());
        Ok(sim::by_name(&self.simulator.name, n, self.simulator.n_toads)?)
    }
}

/// Annotated template printed by `--print-schema`.
pub const SCHEMA: &str = r#"# wgbsl experiment configuration (TOML)

[experiment]
name = "toy"                 # label used in reports
seed = 1                     # master seed; every random draw derives from it
replicates = 10              # R >= 1
output_dir = "out/toy"       # created if missing
# methods: {vb,mcmc}-{bsl,rbsl}[-wg] and mcmc-rbslv[-wg]
methods = ["vb-bsl", "vb-rbsl-wg"]

[simulator]
name = "toy"                 # toy | alpha-stable | g-and-k | toads
theta_true = [0.0]           # natural parameters
n_obs = 30                   # observed dataset size (days for toads)
# n_sim = 30                 # simulated dataset size, default n_obs
n_toads = 66                 # toads only
prior_sd = 10.0              # N(prior_mean, prior_sd^2) on working parameters
# prior_mean = [0.0]

[wg]
corpus_size = 3000           # summaries simulated at theta0
split = [0.3333333333333333, 0.3333333333333333, 0.3333333333333334]
# corpus_n = 50              # corpus dataset size, default n_sim
# theta0 = [0.0]             # natural; omitted -> pilot VB-BSL estimate
# transform_path = "out/toy/wg_transform.txt"   # reuse instead of training
epsilon = 0.05
k_candidates = [1, 2, 3, 5, 8]
reselect_every = 25
smoothing_window = 10
patience = 20
max_iters = 500
min_delta = 0.001
em_restarts = 3
em_max_iter = 500
em_tol = 1e-7

[vb]
samples = 400                # S
n_sims = 200                 # N
beta1 = 0.9
beta2 = 0.9
eps0 = 0.01
tau = 1000.0
window = 50                  # t_W
patience = 50                # P
max_iters = 5000
sigma0 = 0.5                 # Gamma prior sd
init_sd_fraction = 0.5       # initial q sd / prior sd

[pilot]                      # unset keys inherit [vb]; max_iters defaults to half
# samples = 400
# n_sims = 200
# max_iters = 2500
# eps0 = 0.01

[mcmc]
iterations = 20000
n_sims = 200
proposal_scale = [0.1]       # one value or one per parameter
gamma_scale = 0.1
adapt_iters = 2000           # at most iterations / 4
burn_in = 0.25
variance_gamma_prior = "exponential"   # gaussian | laplace | exponential
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_parses() {
        let config = ExperimentConfig::from_toml(SCHEMA).unwrap();
        assert_eq!(config.simulator.name, "toy");
        assert_eq!(config.methods().len(), 2);
        let again = ExperimentConfig::from_toml(&config.to_toml()).unwrap();
        assert_eq!(again, config);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = SCHEMA.replace("theta_true = [0.0]", "theta_true = [0.0, 1.0]");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = SCHEMA.replace("\"vb-bsl\",", "\"vb-magic\",");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = SCHEMA.replace("replicates = 10", "replicates = 0");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }
}
