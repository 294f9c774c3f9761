use serde::{Deserialize, Serialize};

use crate::envs::{catalog_by_name, EnvSpec, Family};
use crate::error::{Error, Result};
use crate::metastate::EmbeddingMode;
use crate::policy::{observation_width, Baseline};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Meta policy with meta state embedding and meta reward shaping.
    Hmrl,
    /// Meta policy without shaping.
    Maml,
    /// Shaping conditioned on raw per-environment coordinates.
    HmrlWoMs,
    /// Plain policy gradient on sampled tasks, no inner adaptation.
    PpoScratch,
}

impl Method {
    pub fn has_shaping(self) -> bool {
        matches!(self, Method::Hmrl | Method::HmrlWoMs)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Hmrl => "hmrl",
            Method::Maml => "maml",
            Method::HmrlWoMs => "hmrl-wo-ms",
            Method::PpoScratch => "ppo-scratch",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Method::Hmrl, Method::Maml, Method::HmrlWoMs, Method::PpoScratch]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerObjective {
    Reinforce,
    Clipped,
}

fn default_alpha() -> f64 {
    0.05
}
fn default_beta() -> f64 {
    0.01
}
fn default_gamma() -> f64 {
    0.99
}
fn default_clip_eps() -> f64 {
    0.2
}
fn default_one() -> usize {
    1
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub method: Method,
    /// Inner (adaptation) learning rate.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Outer (meta) learning rate.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "InnerObjective::default")]
    pub inner_objective: InnerObjective,
    #[serde(default = "default_clip_eps")]
    pub clip_eps: f64,
    /// Gradient steps per inner adaptation; more than one requires the
    /// clipped objective.
    #[serde(default = "default_one")]
    pub inner_epochs: usize,
    #[serde(default)]
    pub baseline: Baseline,
    /// Learn a per-parameter inner learning rate alongside the policy.
    #[serde(default)]
    pub meta_sgd: bool,
    #[serde(default = "default_true")]
    pub freeze_shaping_on_finetune: bool,
}

impl Default for InnerObjective {
    fn default() -> Self {
        InnerObjective::Reinforce
    }
}

fn default_catalog() -> String {
    "hallway".into()
}
fn default_ten() -> usize {
    10
}
fn default_env_batch() -> usize {
    2
}
fn default_task_batch() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    /// `hallway`, `maze`, `desk`, or one environment name.
    #[serde(default = "default_catalog")]
    pub catalog: String,
    /// Rollouts per task before adaptation.
    #[serde(default = "default_ten")]
    pub m: usize,
    /// Rollouts per task after adaptation.
    #[serde(default = "default_ten")]
    pub ell: usize,
    /// Environments drawn (with replacement) per meta-iteration.
    #[serde(default = "default_env_batch")]
    pub env_batch: usize,
    /// Tasks drawn per sampled environment.
    #[serde(default = "default_task_batch")]
    pub task_batch: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            catalog: default_catalog(),
            m: 10,
            ell: 10,
            env_batch: default_env_batch(),
            task_batch: default_task_batch(),
        }
    }
}

fn default_policy_hidden() -> Vec<usize> {
    vec![64, 64]
}
fn default_potential_hidden() -> Vec<usize> {
    vec![32, 32]
}
fn default_shaping_lr() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "default_policy_hidden")]
    pub policy_hidden: Vec<usize>,
    #[serde(default = "default_potential_hidden")]
    pub potential_hidden: Vec<usize>,
    /// Defaults to `concat-fixed` for hallway-only catalogs and
    /// `affine-by-extent` otherwise; `hmrl-wo-ms` always uses `raw-state`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingMode>,
    /// Adam step size of the potential (and embedding) regression.
    #[serde(default = "default_shaping_lr")]
    pub shaping_lr: f64,
    /// Policy input width; defaults to the widest catalog observation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obs_width: Option<usize>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            policy_hidden: default_policy_hidden(),
            potential_hidden: default_potential_hidden(),
            embedding: None,
            shaping_lr: default_shaping_lr(),
            obs_width: None,
        }
    }
}

fn default_meta_iters() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    #[serde(default = "default_meta_iters")]
    pub meta_iters: usize,
    #[serde(default)]
    pub seed: u64,
    /// Rollout worker threads. Results do not depend on this value.
    #[serde(default = "default_one")]
    pub workers: usize,
    /// Write a checkpoint every this many iterations; 0 writes only the final one.
    #[serde(default)]
    pub checkpoint_every: usize,
    /// Rescale any policy gradient whose norm exceeds this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_grad_norm: Option<f64>,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            meta_iters: default_meta_iters(),
            seed: 0,
            workers: 1,
            checkpoint_every: 0,
            max_grad_norm: None,
        }
    }
}

/// Every hyperparameter of a run. Serialized as TOML with one table per
/// field; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub networks: NetworkConfig,
    #[serde(default)]
    pub run: RunSettings,
}

impl RunConfig {
    /// Defaults for `method`.
    pub fn new(method: Method) -> Self {
        RunConfig {
            algorithm: AlgorithmConfig {
                method,
                alpha: default_alpha(),
                beta: default_beta(),
                gamma: default_gamma(),
                inner_objective: InnerObjective::Reinforce,
                clip_eps: default_clip_eps(),
                inner_epochs: 1,
                baseline: Baseline::MeanReturn,
                meta_sgd: false,
                freeze_shaping_on_finetune: true,
            },
            sampling: SamplingConfig::default(),
            networks: NetworkConfig::default(),
            run: RunSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn method(&self) -> Method {
        self.algorithm.method
    }

    pub fn catalog(&self) -> Result<Vec<EnvSpec>> {
        catalog_by_name(&self.sampling.catalog)
            .ok_or_else(|| Error::Config(format!("sampling.catalog: unknown catalog `{}`", self.sampling.catalog)))
    }

    pub fn obs_width(&self) -> Result<usize> {
        let natural = observation_width(&self.catalog()?);
        match self.networks.obs_width {
            Some(w) if w < natural => Err(Error::Config(format!(
                "networks.obs_width: {w} is narrower than the widest observation ({natural})"
            ))),
            Some(w) => Ok(w),
            None => Ok(natural),
        }
    }

    /// Embedding used by shaping methods, `None` otherwise.
    pub fn embedding_mode(&self) -> Result<Option<EmbeddingMode>> {
        Ok(match self.method() {
            Method::Maml | Method::PpoScratch => None,
            Method::HmrlWoMs => Some(EmbeddingMode::RawState),
            Method::Hmrl => Some(match self.networks.embedding {
                Some(mode) => mode,
                None if self.catalog()?.iter().all(|e| e.family == Family::Hallway) => EmbeddingMode::ConcatFixed,
                None => EmbeddingMode::AffineByExtent,
            }),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.algorithm;
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name}: must be positive, got {v}")))
            }
        };
        positive("algorithm.alpha", a.alpha)?;
        positive("algorithm.beta", a.beta)?;
        positive("networks.shaping_lr", self.networks.shaping_lr)?;
        if !(a.gamma > 0.0 && a.gamma <= 1.0) {
            return Err(Error::Config(format!("algorithm.gamma: must lie in (0, 1], got {}", a.gamma)));
        }
        if !(a.clip_eps > 0.0 && a.clip_eps < 1.0) {
            return Err(Error::Config(format!("algorithm.clip_eps: must lie in (0, 1), got {}", a.clip_eps)));
        }
        if a.inner_epochs == 0 {
            return Err(Error::Config("algorithm.inner_epochs: must be at least 1".into()));
        }
        if a.inner_epochs > 1 && a.inner_objective != InnerObjective::Clipped {
            return Err(Error::Config(
                "algorithm.inner_epochs: more than one epoch requires inner_objective = \"clipped\"".into(),
            ));
        }
        let s = &self.sampling;
        for (name, v) in [
            ("sampling.m", s.m),
            ("sampling.ell", s.ell),
            ("sampling.env_batch", s.env_batch),
            ("sampling.task_batch", s.task_batch),
            ("run.workers", self.run.workers),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name}: must be at least 1")));
            }
        }
        if self.networks.policy_hidden.contains(&0) || self.networks.potential_hidden.contains(&0) {
            return Err(Error::Config("networks: hidden layer widths must be at least 1".into()));
        }
        if let Some(n) = self.run.max_grad_norm {
            positive("run.max_grad_norm", n)?;
        }
        if self.method() == Method::HmrlWoMs {
            if let Some(mode) = self.networks.embedding {
                if mode != EmbeddingMode::RawState {
                    return Err(Error::Config(
                        "networks.embedding: hmrl-wo-ms always conditions on raw states".into(),
                    ));
                }
            }
        }
        self.obs_width()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::from_toml("[algorithm]\nmethod = \"hmrl\"\n").unwrap();
        assert_eq!(cfg, RunConfig::new(Method::Hmrl));
        assert_eq!(cfg.algorithm.gamma, 0.99);
        assert_eq!(cfg.sampling.m, 10);
        assert_eq!(cfg.run.meta_iters, 200);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::new(Method::HmrlWoMs);
        cfg.sampling.catalog = "maze".into();
        cfg.run.max_grad_norm = Some(5.0);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("[algorithm]\nmethod = \"maml\"\nalpah = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("alpah"), "{err}");
    }

    #[test]
    fn field_level_messages() {
        let err = RunConfig::from_toml("[algorithm]\nmethod = \"maml\"\ngamma = 1.5\n").unwrap_err();
        assert!(err.to_string().contains("algorithm.gamma"), "{err}");
        let err = RunConfig::from_toml("[algorithm]\nmethod = \"maml\"\n[sampling]\ncatalog = \"moon\"\n").unwrap_err();
        assert!(err.to_string().contains("sampling.catalog"), "{err}");
        let err = RunConfig::from_toml("[algorithm]\nmethod = \"maml\"\ninner_epochs = 3\n").unwrap_err();
        assert!(err.to_string().contains("clipped"), "{err}");
    }

    #[test]
    fn embedding_defaults_follow_catalog() {
        let mut cfg = RunConfig::new(Method::Hmrl);
        assert_eq!(cfg.embedding_mode().unwrap(), Some(EmbeddingMode::ConcatFixed));
        cfg.sampling.catalog = "maze".into();
        assert_eq!(cfg.embedding_mode().unwrap(), Some(EmbeddingMode::AffineByExtent));
        cfg.algorithm.method = Method::HmrlWoMs;
        assert_eq!(cfg.embedding_mode().unwrap(), Some(EmbeddingMode::RawState));
        cfg.algorithm.method = Method::Maml;
        assert_eq!(cfg.embedding_mode().unwrap(), None);
    }
}
