//! Training regimes: joint pre-training over a family, single-graph
//! pre-training, frozen-backbone fine-tuning, the supervised baseline, and
//! adapting a trained model to a new graph.

pub mod adam;
mod downstream;
pub mod history;
mod pretrain;
pub mod scheduler;

pub use adam::Adam;
pub use downstream::{
    finetune, representations, train_supervised, FinetuneOutcome, SupervisedOutcome,
};
pub use history::{EpochRecord, LossHistory};
pub use pretrain::{adapt_new_graph, pretrain_ssl, pretrain_ussl};
pub use scheduler::ReduceOnPlateau;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::scalar::Scalar;
use crate::model::UniversalModel;

/// The training regimes exposed by the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    UsslPretrain,
    SslPretrain,
    Finetune,
    Supervised,
    Adapt,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regime::UsslPretrain => "ussl_pretrain",
            Regime::SslPretrain => "ssl_pretrain",
            Regime::Finetune => "finetune",
            Regime::Supervised => "supervised",
            Regime::Adapt => "adapt",
        };
        write!(f, "{s}")
    }
}

/// Paper-scale epoch budgets and their desk-scale counterparts.
pub const PRETRAIN_EPOCHS: usize = 2500;
pub const FINETUNE_EPOCHS: usize = 1000;
pub const SUPERVISED_EPOCHS: usize = 500;
pub const DESK_PRETRAIN_EPOCHS: usize = 300;
pub const DESK_FINETUNE_EPOCHS: usize = 150;
pub const DESK_SUPERVISED_EPOCHS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    /// Epochs without improvement before the lr halves.
    pub scheduler_patience: usize,
    pub scheduler_factor: f64,
    /// Pairs sampled per graph per epoch; `None` = min(4·n, 20000), capped
    /// by the number of distinct pairs.
    pub pair_budget: Option<usize>,
    /// Token sequences per optimizer step (a pair consumes two).
    pub batch_size: usize,
    pub seed: u64,
    /// Weight each graph's loss by its share of family nodes instead of the
    /// plain sum. Off by default.
    pub weight_by_graph_size: bool,
}

impl TrainConfig {
    fn base(epochs: usize, base_lr: f64, seed: u64) -> Self {
        TrainConfig {
            epochs,
            base_lr,
            scheduler_patience: 50,
            scheduler_factor: 0.5,
            pair_budget: None,
            batch_size: 2000,
            seed,
            weight_by_graph_size: false,
        }
    }

    pub fn pretrain(seed: u64) -> Self {
        Self::base(PRETRAIN_EPOCHS, 1e-3, seed)
    }

    pub fn finetune(seed: u64) -> Self {
        Self::base(FINETUNE_EPOCHS, 1e-2, seed)
    }

    pub fn supervised(seed: u64) -> Self {
        Self::base(SUPERVISED_EPOCHS, 1e-3, seed)
    }

    pub fn pretrain_desk(seed: u64) -> Self {
        Self::base(DESK_PRETRAIN_EPOCHS, 1e-3, seed)
    }

    pub fn finetune_desk(seed: u64) -> Self {
        Self::base(DESK_FINETUNE_EPOCHS, 1e-2, seed)
    }

    pub fn supervised_desk(seed: u64) -> Self {
        Self::base(DESK_SUPERVISED_EPOCHS, 1e-3, seed)
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.base_lr <= 0.0 {
            return Err(Error::InvalidConfig(
                "epochs and base_lr must be positive".into(),
            ));
        }
        if self.scheduler_patience == 0 {
            return Err(Error::InvalidConfig("patience must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.scheduler_factor) || self.scheduler_factor == 0.0 {
            return Err(Error::InvalidConfig("factor must be in (0, 1)".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig("batch_size must be at least 2".into()));
        }
        Ok(())
    }
}

/// Selects which named parameters an optimizer step touches.
#[derive(Debug, Clone)]
pub struct ParamFilter {
    prefixes: Option<Vec<String>>,
}

impl ParamFilter {
    pub fn all() -> Self {
        ParamFilter { prefixes: None }
    }

    pub fn prefixes(list: &[impl AsRef<str>]) -> Self {
        ParamFilter {
            prefixes: Some(list.iter().map(|s| s.as_ref().to_string()).collect()),
        }
    }

    pub fn matches(&self, name: &str) -> bool {
        match &self.prefixes {
            None => true,
            Some(list) => list.iter().any(|p| name.starts_with(p.as_str())),
        }
    }
}

/// Called after every logged epoch with the fresh record and the model as
/// it stands; used for streaming logs and interval checkpoints.
pub type EpochHook<'a, F> = &'a mut dyn FnMut(&EpochRecord, &UniversalModel<F>) -> Result<()>;

pub(crate) fn to_scalar<F: Scalar>(a: &ndarray::Array2<f32>) -> ndarray::Array2<F> {
    a.mapv(F::from_f32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_prefix_semantics() {
        let f = ParamFilter::prefixes(&["head.g0", "backbone"]);
        assert!(f.matches("head.g0.fc.w"));
        assert!(f.matches("backbone.layer0.attn.wq.w"));
        assert!(!f.matches("head.g1.fc.w"));
        assert!(!f.matches("encoder.g0.proj.w"));
        assert!(ParamFilter::all().matches("anything"));
    }

    #[test]
    fn regime_defaults_match_the_protocol() {
        assert_eq!(TrainConfig::pretrain(0).epochs, 2500);
        assert_eq!(TrainConfig::pretrain(0).base_lr, 1e-3);
        assert_eq!(TrainConfig::finetune(0).epochs, 1000);
        assert_eq!(TrainConfig::finetune(0).base_lr, 1e-2);
        assert_eq!(TrainConfig::supervised(0).epochs, 500);
        assert_eq!(TrainConfig::supervised(0).base_lr, 1e-3);
        assert_eq!(TrainConfig::pretrain(0).scheduler_patience, 50);
    }
}
