use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::Method;
use crate::diffcore::{AdamConfig, AdamState, MlpSpec, ParamVector};
use crate::error::{Error, Result};
use crate::metastate::EmbeddingSpec;
use crate::policy::policy_spec;
use crate::shaping::{PotentialNet, Shaping};

pub(crate) const STREAM_POLICY: u64 = 1;
pub(crate) const STREAM_POTENTIAL: u64 = 2;
pub(crate) const STREAM_SAMPLING: u64 = 3;
pub(crate) const STREAM_FINETUNE: u64 = 4;

/// Independent random stream `stream` of `seed`. Policy initialization,
/// potential initialization and task sampling each draw from their own
/// stream, so enabling shaping never shifts the samples a run sees.
pub(crate) fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The shaping networks together with their optimizer state.
#[derive(Clone, Debug)]
pub struct ShapingModule {
    pub shaping: Shaping,
    pub potential_opt: AdamState,
    pub embedding_opt: AdamState,
}

impl ShapingModule {
    pub fn new(shaping: Shaping, lr: f64) -> Self {
        let config = AdamConfig {
            lr,
            ..AdamConfig::default()
        };
        ShapingModule {
            potential_opt: AdamState::new(config, &shaping.potential.params),
            embedding_opt: AdamState::new(config, &shaping.embedding.params),
            shaping,
        }
    }
}

/// Meta policy plus (for shaping methods) potential and embedding.
#[derive(Clone, Debug)]
pub struct MetaModel {
    pub method: Method,
    pub policy: MlpSpec,
    pub theta: ParamVector,
    /// Per-parameter inner learning rates when meta-SGD is enabled.
    pub inner_lr: Option<ParamVector>,
    pub shaping: Option<ShapingModule>,
    /// Completed meta-iterations.
    pub iteration: usize,
}

impl MetaModel {
    /// Seeded initialization from `cfg`.
    pub fn init(cfg: &RunConfig) -> Result<Self> {
        Self::init_inner(cfg, false)
    }

    /// As [`MetaModel::init`], but a shaping method starts with `φ ≡ 0`.
    pub fn init_zero_potential(cfg: &RunConfig) -> Result<Self> {
        Self::init_inner(cfg, true)
    }

    fn init_inner(cfg: &RunConfig, zero_potential: bool) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.run.seed;
        let policy = policy_spec(cfg.obs_width()?, &cfg.networks.policy_hidden);
        let theta = policy.init(&mut rng_stream(seed, STREAM_POLICY));
        let inner_lr = cfg.algorithm.meta_sgd.then(|| {
            let mut lr = ParamVector::zeros(theta.layout().clone());
            lr.values_mut().fill(cfg.algorithm.alpha);
            lr
        });
        let shaping = match cfg.embedding_mode()? {
            Some(mode) => {
                let hidden = &cfg.networks.potential_hidden;
                let potential = if zero_potential {
                    PotentialNet::zeros(hidden)
                } else {
                    PotentialNet::init(hidden, &mut rng_stream(seed, STREAM_POTENTIAL))
                };
                let shaping = Shaping::new(EmbeddingSpec::new(mode), potential);
                Some(ShapingModule::new(shaping, cfg.networks.shaping_lr))
            }
            None => None,
        };
        Ok(MetaModel {
            method: cfg.method(),
            policy,
            theta,
            inner_lr,
            shaping,
            iteration: 0,
        })
    }

    pub fn shaping(&self) -> Option<&Shaping> {
        self.shaping.as_ref().map(|s| &s.shaping)
    }

    pub fn check_finite(&self) -> Result<()> {
        let named = |prefix: &str, p: &ParamVector| match p.first_non_finite() {
            Some(slice) => Err(Error::NonFinite {
                slice: format!("{prefix}/{slice}"),
            }),
            None => Ok(()),
        };
        named("policy", &self.theta)?;
        if let Some(lr) = &self.inner_lr {
            named("inner_lr", lr)?;
        }
        if let Some(s) = self.shaping() {
            named("potential", &s.potential.params)?;
            named("embedding", &s.embedding.params)?;
        }
        Ok(())
    }
}
