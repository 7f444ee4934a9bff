//! TOML run configuration.
//!
//! Every section is optional and every field falls back to its default:
//!
//! ```toml
//! [scene]
//! grid_size = 8
//! salient_fraction = 0.3
//!
//! [loss]
//! alpha = 0.25
//! gamma = 2.0
//! omega = 4.0
//!
//! [train]
//! epochs = 30
//! learning_rate = 0.05
//!
//! [eval]
//! iou_threshold = 0.5
//!
//! [split]
//! train = 0.8
//! val = 0.1
//! test = 0.1
//!
//! [experiment]
//! train_scenes = 200
//! test_scenes = 50
//! seed = 1
//! ```

use serde::{Deserialize, Serialize};

use crate::dataset::SplitRatios;
use crate::detector::{SceneConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::loss::LossParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub train_scenes: usize,
    pub val_scenes: usize,
    pub test_scenes: usize,
    /// Seed for scene generation.
    pub seed: u64,
    /// Salience weight of the comparison model.
    pub baseline_omega: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train_scenes: 200,
            val_scenes: 25,
            test_scenes: 50,
            seed: 1,
            baseline_omega: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scene: SceneConfig,
    pub loss: LossParams,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub split: SplitRatios,
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config encodes as TOML")
    }

    pub fn check(&self) -> Result<()> {
        self.scene.check()?;
        self.train_config().check()?;
        self.eval.check()?;
        self.split.check()?;
        let e = &self.experiment;
        if e.train_scenes == 0 || e.test_scenes == 0 {
            return Err(Error::InvalidParameter(
                "train_scenes and test_scenes must be positive".into(),
            ));
        }
        // TOML integers are signed 64-bit.
        for (name, seed) in [("experiment.seed", e.seed), ("train.seed", self.train.seed)] {
            if i64::try_from(seed).is_err() {
                return Err(Error::InvalidParameter(format!(
                    "{name} {seed} exceeds {}",
                    i64::MAX
                )));
            }
        }
        if !(e.baseline_omega >= 1.0 && e.baseline_omega.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "baseline_omega must be >= 1, got {}",
                e.baseline_omega
            )));
        }
        Ok(())
    }

    /// Training settings with the `[loss]` section folded in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            loss: self.loss,
            ..self.train.clone()
        }
    }

    /// Uses `seed` for both scene generation and model initialization.
    pub fn set_seed(&mut self, seed: u64) {
        self.experiment.seed = seed;
        self.train.seed = seed;
    }
}
