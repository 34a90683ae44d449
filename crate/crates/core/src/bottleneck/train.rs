use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::data::{Samples, SyntheticTask};
use super::model::{Architecture, BottleneckSettings, Losses, ModelError, Noise, ToyModel};
use crate::accountant::{to_budget, AccountantConfig, AccountingMode, PrivacyBudget};
use crate::clipping::ClipConfig;
use crate::divergence::{fmt_real, pairwise_report, DivergenceError, PairMode, RenyiReport};
use crate::order::RenyiOrder;
use crate::posterior::{Example, PosteriorDataset, PriorSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Rényi order used when auditing the trained model.
    #[serde(default)]
    pub lambda: RenyiOrder,
    pub lambda_g: f64,
    /// Defaults to `lambda_g`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_d: Option<f64>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub clip: Option<ClipConfig>,
    pub n_components: usize,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    #[serde(default = "one")]
    pub prior_std: f64,
    #[serde(default = "one")]
    pub alpha0_prior: f64,
    pub task: SyntheticTask,
    /// Number of held-out examples audited pairwise.
    pub privacy_examples: usize,
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch}, step {step}: {source}")]
    NonFinite {
        epoch: usize,
        step: usize,
        #[source]
        source: ModelError,
    },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

impl TrainConfig {
    /// Shipped desk-scale configuration (clipping on, bert-base/mrpc budget).
    pub fn shipped_default() -> Self {
        serde_json::from_str(DEFAULT_CONFIG).expect("shipped config parses")
    }

    pub fn from_json(s: &str) -> Result<Self, TrainError> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn lambda_d(&self) -> f64 {
        self.lambda_d.unwrap_or(self.lambda_g)
    }

    pub fn check(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_owned()));
        if !(self.lambda_g >= 0.0 && self.lambda_d() >= 0.0) {
            return bad("regulariser weights must be >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if self.batch_size == 0 || self.n_components == 0 || self.latent_dim == 0 || self.hidden_dim == 0 {
            return bad("batch_size, n_components, latent_dim and hidden_dim must be >= 1");
        }
        if self.task.classes < 2 || self.task.input_dim == 0 || self.task.train_samples == 0 {
            return bad("task needs >= 2 classes, >= 1 input dimension and training samples");
        }
        if self.privacy_examples < 2 || self.privacy_examples > self.task.test_samples {
            return bad("privacy_examples must lie in [2, test_samples]");
        }
        if !(self.prior_std > 0.0 && self.alpha0_prior > 0.0) {
            return bad("prior_std and alpha0_prior must be > 0");
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.task.input_dim,
            hidden_dim: self.hidden_dim,
            latent_dim: self.latent_dim,
            n_components: self.n_components,
            classes: self.task.classes,
        }
    }

    pub fn prior(&self) -> PriorSpec {
        PriorSpec::isotropic(self.latent_dim, self.prior_std, self.alpha0_prior).expect("checked positive")
    }

    pub fn settings(&self) -> BottleneckSettings {
        BottleneckSettings { lambda_g: self.lambda_g, lambda_d: self.lambda_d(), clip: self.clip }
    }

    pub fn without_clip(&self) -> Self {
        Self { clip: None, ..self.clone() }
    }
}

pub const DEFAULT_CONFIG: &str = include_str!("../../configs/train/toy.json");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub task_loss: f64,
    pub l_g: f64,
    pub l_d: f64,
    /// Training accuracy over the epoch's noisy forward passes.
    pub accuracy: f64,
}

/// Writes `epoch,task_loss,l_g,l_d,accuracy` rows.
pub fn write_metrics<W: Write>(trace: &[EpochMetrics], mut sink: W) -> std::io::Result<()> {
    writeln!(sink, "epoch,task_loss,l_g,l_d,accuracy")?;
    for m in trace {
        writeln!(
            sink,
            "{},{},{},{},{}",
            m.epoch,
            fmt_real(m.task_loss),
            fmt_real(m.l_g),
            fmt_real(m.l_d),
            fmt_real(m.accuracy)
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: ToyModel,
    pub trace: Vec<EpochMetrics>,
}

/// Builds the task, initialises a model from `cfg.seed`, and trains it.
pub fn train(cfg: &TrainConfig) -> Result<Trained, TrainError> {
    cfg.check()?;
    let (train_set, _) = cfg.task.generate();
    let settings = cfg.settings();
    let model = ToyModel::init(cfg.architecture(), cfg.prior(), cfg.seed, settings.alpha_floor());
    train_model(model, &train_set, cfg)
}

/// Plain minibatch SGD from a given starting model. Deterministic in
/// `cfg.seed`.
pub fn train_model(mut model: ToyModel, data: &Samples, cfg: &TrainConfig) -> Result<Trained, TrainError> {
    let settings = cfg.settings();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_7a11);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = Losses::default();
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.select(chunk);
            let noise = Noise::sample(&mut rng, chunk.len(), &model.arch);
            let (pass, grad) = model
                .loss_and_grad(batch.inputs.view(), &batch.labels, &noise, &settings)
                .map_err(|source| TrainError::NonFinite { epoch, step, source })?;
            model.params.add_scaled(&grad, -cfg.learning_rate);
            if !model.params.all_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    step,
                    source: ModelError::NonFiniteLoss { task: f64::NAN, gaussian: f64::NAN, dirichlet: f64::NAN },
                });
            }
            let n = chunk.len() as f64;
            sums.task += pass.losses.task * n;
            sums.gaussian += pass.losses.gaussian * n;
            sums.dirichlet += pass.losses.dirichlet * n;
            correct += pass.predictions().iter().zip(&batch.labels).filter(|(a, b)| a == b).count();
            step += 1;
        }
        let n = data.len() as f64;
        trace.push(EpochMetrics {
            epoch,
            task_loss: sums.task / n,
            l_g: sums.gaussian / n,
            l_d: sums.dirichlet / n,
            accuracy: correct as f64 / n,
        });
    }
    Ok(Trained { model, trace })
}

/// Accuracy with sampled latents, seeded so it is reproducible.
pub fn accuracy(model: &ToyModel, data: &Samples, settings: &BottleneckSettings, seed: u64) -> Result<f64, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Noise::sample(&mut rng, data.len(), &model.arch);
    let pass = model.forward(data.inputs.view(), &data.labels, &noise, settings)?;
    let correct = pass.predictions().iter().zip(&data.labels).filter(|(a, b)| a == b).count();
    Ok(correct as f64 / data.len() as f64)
}

/// Extracts the posteriors of `data` into a dataset with ids `ex0000`, ….
pub fn posterior_dataset(
    model: &ToyModel,
    data: &Samples,
    order: RenyiOrder,
    settings: &BottleneckSettings,
) -> Result<PosteriorDataset, ModelError> {
    let posteriors = model.posteriors(data.inputs.view(), settings)?;
    let width = data.len().to_string().len().max(4);
    let examples = posteriors
        .into_iter()
        .enumerate()
        .map(|(i, posterior)| Example { id: format!("ex{i:0width$}"), posterior })
        .collect();
    Ok(PosteriorDataset { lambda: order, prior: model.prior.clone(), examples })
}

/// Pairwise divergence audit of the model's posteriors on `data`.
pub fn evaluate_privacy(
    model: &ToyModel,
    data: &Samples,
    order: RenyiOrder,
    mode: PairMode,
    settings: &BottleneckSettings,
) -> Result<RenyiReport, TrainError> {
    let ds = posterior_dataset(model, data, order, settings)?;
    Ok(pairwise_report(&ds, mode)?)
}

/// One trained-and-audited run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub clipped: bool,
    pub trained: Option<Trained>,
    /// Set when training aborted.
    pub abort: Option<String>,
    pub test_accuracy: f64,
    pub report: Option<RenyiReport>,
    pub budget: Option<PrivacyBudget>,
}

impl RunOutcome {
    pub fn rd_max(&self) -> f64 {
        self.report.as_ref().map_or(f64::INFINITY, |r| r.max)
    }

    pub fn rd_avg(&self) -> f64 {
        self.report.as_ref().map_or(f64::NAN, |r| r.avg)
    }
}

/// Trains, measures held-out accuracy, and audits `privacy_examples`
/// held-out posteriors.
pub fn run_experiment(cfg: &TrainConfig) -> Result<RunOutcome, TrainError> {
    cfg.check()?;
    let (_, test) = cfg.task.generate();
    let settings = cfg.settings();
    let trained = match train(cfg) {
        Ok(t) => t,
        Err(e @ TrainError::NonFinite { .. }) => {
            return Ok(RunOutcome {
                clipped: cfg.clip.is_some(),
                trained: None,
                abort: Some(e.to_string()),
                test_accuracy: 0.0,
                report: None,
                budget: None,
            })
        }
        Err(e) => return Err(e),
    };
    let test_accuracy = accuracy(&trained.model, &test, &settings, cfg.seed.wrapping_add(1))?;
    let audit = test.head(cfg.privacy_examples);
    let report = evaluate_privacy(&trained.model, &audit, cfg.lambda, PairMode::VsAllPairs, &settings)?;
    let acct = AccountantConfig { lambda: cfg.lambda, mode: AccountingMode::WorstCase, ..Default::default() };
    let budget = to_budget(&report, &acct).ok();
    Ok(RunOutcome {
        clipped: cfg.clip.is_some(),
        trained: Some(trained),
        abort: None,
        test_accuracy,
        report: Some(report),
        budget,
    })
}

/// Clipped and unclipped runs sharing every other setting, including the seed.
#[derive(Debug, Clone)]
pub struct TwinComparison {
    pub seed: u64,
    pub unclipped: RunOutcome,
    pub clipped: RunOutcome,
}

/// Runs `cfg` (which must carry a clip config) and its unclipped twin.
pub fn twin_experiment(cfg: &TrainConfig) -> Result<TwinComparison, TrainError> {
    if cfg.clip.is_none() {
        return Err(TrainError::InvalidConfig("twin experiment needs a clip config".into()));
    }
    let clipped = run_experiment(cfg)?;
    let unclipped = run_experiment(&cfg.without_clip())?;
    Ok(TwinComparison { seed: cfg.seed, unclipped, clipped })
}

impl TwinComparison {
    /// Clipped worst-case divergence no larger than unclipped, and clipped
    /// accuracy within `tolerance` of unclipped.
    pub fn clipping_helps(&self, tolerance: f64) -> bool {
        self.clipped.abort.is_none()
            && self.clipped.rd_max() <= self.unclipped.rd_max()
            && self.clipped.test_accuracy >= self.unclipped.test_accuracy - tolerance
    }
}

impl fmt::Display for TwinComparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed {}", self.seed)?;
        writeln!(f, "{:<12} {:>9} {:>14} {:>14} {:>12} {:>10}", "model", "accuracy", "RD max", "RD avg", "epsilon", "infeasible")?;
        for (name, run) in [("unclipped", &self.unclipped), ("clipped", &self.clipped)] {
            if let Some(reason) = &run.abort {
                writeln!(f, "{name:<12} aborted: {reason}")?;
                continue;
            }
            let eps = run.budget.map_or_else(|| "inf".to_owned(), |b| format!("{:.4}", b.epsilon));
            let n_inf = run.report.as_ref().map_or(0, |r| r.n_infeasible);
            writeln!(
                f,
                "{:<12} {:>9.4} {:>14.6} {:>14.6} {:>12} {:>10}",
                name,
                run.test_accuracy,
                run.rd_max(),
                run.rd_avg(),
                eps,
                n_inf
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TrainConfig {
        let mut cfg = TrainConfig::shipped_default();
        cfg.epochs = 2;
        cfg.task.train_samples = 60;
        cfg.task.test_samples = 20;
        cfg.privacy_examples = 5;
        cfg
    }

    #[test]
    fn shipped_config_is_valid_and_clipped() {
        let cfg = TrainConfig::shipped_default();
        cfg.check().unwrap();
        assert!(cfg.clip.is_some());
        assert_eq!(cfg.lambda_d(), cfg.lambda_g);
        assert_eq!(cfg.lambda, RenyiOrder::DEFAULT);
    }

    #[test]
    fn order_of_one_rejected_at_parse() {
        let text = DEFAULT_CONFIG.replacen("\"lambda\": 1.1", "\"lambda\": 1.0", 1);
        assert_ne!(text, DEFAULT_CONFIG);
        assert!(TrainConfig::from_json(&text).is_err());
    }

    #[test]
    fn same_seed_same_trace() {
        let a = train(&tiny()).unwrap();
        let b = train(&tiny()).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.model, b.model);
        let mut text = Vec::new();
        write_metrics(&a.trace, &mut text).unwrap();
        let text = String::from_utf8(text).unwrap();
        assert!(text.starts_with("epoch,task_loss,l_g,l_d,accuracy\n0,"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn dataset_ids_sort_numerically() {
        let cfg = tiny();
        let t = train(&cfg).unwrap();
        let (_, test) = cfg.task.generate();
        let ds = posterior_dataset(&t.model, &test, cfg.lambda, &cfg.settings()).unwrap();
        let ids: Vec<_> = ds.examples.iter().map(|e| e.id.clone()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        assert_eq!(ids[0], "ex0000");
    }
}
