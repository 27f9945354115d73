use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::policy::{GpParams, PolicyKind};
use crate::usersim::{ErrorModelConfig, OrderMode, UserConfig};

/// Environment variable overriding [`RunConfig::output_dir`].
pub const OUTPUT_ROOT_ENV: &str = "CEDM_OUTPUT_ROOT";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    #[serde(default = "default_success_bonus")]
    pub success_bonus: f64,
    /// Cost of one system/user exchange, as a positive number.
    #[serde(default = "default_turn_penalty")]
    pub turn_penalty: f64,
}

fn default_success_bonus() -> f64 {
    30.0
}
fn default_turn_penalty() -> f64 {
    1.0
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            success_bonus: default_success_bonus(),
            turn_penalty: default_turn_penalty(),
        }
    }
}

/// Learner settings beyond the GP itself.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningConfig {
    #[serde(default)]
    pub gp: GpParams,
    /// Uniform exploration at the first training dialogue, decaying linearly to zero.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    0.05
}

impl Default for LearningConfig {
    fn default() -> Self {
        LearningConfig {
            gp: GpParams::default(),
            epsilon: default_epsilon(),
        }
    }
}

/// One experiment condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Free-form label copied into metrics, e.g. `exp1`.
    #[serde(default = "default_experiment")]
    pub experiment: String,
    /// Label of the environment, e.g. `env1`.
    #[serde(default = "default_env_name")]
    pub env_name: String,
    #[serde(default = "ErrorModelConfig::env1")]
    pub environment: ErrorModelConfig,
    /// Probability of the user addressing a relation.
    pub r: f64,
    /// Policy kind per object id, in the order objects are declared in the world.
    pub objects: Vec<ObjectSpec>,
    #[serde(default = "default_train")]
    pub train_dialogues: usize,
    #[serde(default = "default_test")]
    pub test_dialogues: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_order")]
    pub order: OrderMode,
    #[serde(default = "default_max_turns")]
    pub max_turns_per_object: usize,
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(default)]
    pub learning: LearningConfig,
    #[serde(default)]
    pub user: UserOverrides,
    /// Seed of the generated knowledge base.
    #[serde(default)]
    pub kb_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

/// A conversational object of the simulated world.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: String,
    /// Object type; defaults to the id.
    #[serde(default)]
    pub ty: Option<String>,
    pub policy: PolicyKind,
}

impl ObjectSpec {
    pub fn type_name(&self) -> &str {
        self.ty.as_deref().unwrap_or(&self.id)
    }
}

/// Simulator knobs other than `r`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserOverrides {
    pub patience: Option<u32>,
    pub p_reqalts: Option<f64>,
    pub p_goal_change: Option<f64>,
    pub p_initial: Option<f64>,
}

fn default_experiment() -> String {
    "exp".into()
}
fn default_env_name() -> String {
    "env1".into()
}
fn default_train() -> usize {
    4000
}
fn default_test() -> usize {
    1000
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}
fn default_order() -> OrderMode {
    OrderMode::Fixed
}
fn default_max_turns() -> usize {
    25
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl RunConfig {
    /// Hotel handled by the handcrafted policy, restaurant by `policy`, hotel first.
    pub fn experiment1(env_name: &str, environment: ErrorModelConfig, r: f64, policy: PolicyKind) -> Self {
        RunConfig {
            experiment: "exp1".into(),
            env_name: env_name.into(),
            environment,
            r,
            objects: vec![
                ObjectSpec {
                    id: "CamHotels".into(),
                    ty: None,
                    policy: PolicyKind::Handcrafted,
                },
                ObjectSpec {
                    id: "CamRestaurants".into(),
                    ty: None,
                    policy,
                },
            ],
            train_dialogues: default_train(),
            test_dialogues: default_test(),
            seeds: default_seeds(),
            order: OrderMode::Fixed,
            max_turns_per_object: default_max_turns(),
            reward: RewardConfig::default(),
            learning: LearningConfig::default(),
            user: UserOverrides::default(),
            kb_seed: 0,
            output_dir: default_output_dir(),
        }
    }

    /// Both objects learned jointly with `policy`, order alternating.
    pub fn experiment2(env_name: &str, environment: ErrorModelConfig, r: f64, policy: PolicyKind) -> Self {
        let mut c = RunConfig::experiment1(env_name, environment, r, policy);
        c.experiment = "exp2".into();
        c.objects[0].policy = policy;
        c.order = OrderMode::Alternating;
        c
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        RunConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run configs serialize")
    }

    pub fn validate(&self) -> Result<()> {
        self.environment.validate()?;
        if !(0.0..=1.0).contains(&self.r) {
            return Err(Error::Config(format!("r = {} outside [0, 1]", self.r)));
        }
        if self.objects.is_empty() {
            return Err(Error::Config("no objects".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds".into()));
        }
        if self.max_turns_per_object == 0 {
            return Err(Error::Config("max_turns_per_object must be positive".into()));
        }
        Ok(())
    }

    pub fn user_config(&self) -> UserConfig {
        let mut u = UserConfig::with_r(self.r);
        let o = &self.user;
        if let Some(v) = o.patience {
            u.patience = v;
        }
        if let Some(v) = o.p_reqalts {
            u.p_reqalts = v;
        }
        if let Some(v) = o.p_goal_change {
            u.p_goal_change = v;
        }
        if let Some(v) = o.p_initial {
            u.p_initial = v;
        }
        u
    }

    pub fn policy_kinds(&self) -> BTreeMap<String, PolicyKind> {
        self.objects.iter().map(|o| (o.id.clone(), o.policy)).collect()
    }

    /// Hex SHA-256 of the canonical TOML form, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        hex::encode(Sha256::digest(c.to_toml_string().as_bytes()))
    }

    /// Output directory after the environment override.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) => PathBuf::from(root).join(&self.output_dir),
            None => self.output_dir.clone(),
        }
    }
}
