//! A desk-scale trainable model with a Dirichlet-process bottleneck, used to
//! show how clipping moves the privacy-utility trade-off.

pub mod data;
pub mod model;
pub mod train;

pub use data::{Samples, SyntheticTask};
pub use model::{Architecture, BottleneckSettings, ForwardPass, Losses, ModelError, Noise, Params, ToyModel};
pub use train::{
    accuracy, evaluate_privacy, posterior_dataset, run_experiment, train, train_model, twin_experiment, write_metrics,
    EpochMetrics, RunOutcome, TrainConfig, TrainError, Trained, TwinComparison,
};
