//! Contrastive training of the query and document encoders over frozen base
//! embeddings.

mod encoder;
mod loss;
mod similarity;

pub use encoder::{Activation, EncoderFile, EncoderParams, Layer};
pub use loss::{loss_gradient, target_label, tuple_loss, Gradients, LabelKind, Labels};
pub use similarity::{cosine_sim, similarity, SimilarityKind};

pub(crate) use similarity::{from_parts, sq_norm};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TrainingTuple;
use crate::embedding::{BaseEmbeddings, ResolvedBases};
use crate::error::{Error, Result};
use crate::sss::SssTable;

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the semantic similarity score in the target labels.
    pub alpha: f64,
    pub l_p: f64,
    pub l_n: f64,
    pub k_p: usize,
    pub k_n: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub seed: u64,
    pub proj_dim: usize,
    pub activation: Activation,
    pub similarity: SimilarityKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.2,
            l_p: 1.0,
            l_n: 0.0,
            k_p: 5,
            k_n: 5,
            learning_rate: 1e-2,
            momentum: 0.9,
            epochs: 50,
            seed: 0,
            proj_dim: 256,
            activation: Activation::Tanh,
            similarity: SimilarityKind::AbsCosine,
        }
    }
}

impl TrainConfig {
    pub fn labels(&self) -> Labels {
        Labels {
            positive: self.l_p,
            negative: self.l_n,
        }
    }

    /// Every violated constraint, each naming its field and bound.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(0.0..=1.0).contains(&self.alpha) {
            out.push(format!("train.alpha = {} is outside [0, 1]", self.alpha));
        }
        if !self.l_p.is_finite() || !self.l_n.is_finite() || self.l_n >= self.l_p {
            out.push(format!(
                "train.l_n = {} must be finite and below train.l_p = {}",
                self.l_n, self.l_p
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            out.push(format!("train.learning_rate = {} must be > 0", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            out.push(format!("train.momentum = {} is outside [0, 1)", self.momentum));
        }
        if self.k_p == 0 && self.k_n == 0 {
            out.push("train.k_p and train.k_n cannot both be 0".into());
        }
        if self.proj_dim == 0 {
            out.push("train.proj_dim must be at least 1".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        crate::codec::sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub query: EncoderParams,
    pub doc: EncoderParams,
    /// Mean tuple loss per epoch, measured as each tuple is visited.
    pub history: Vec<f64>,
}

/// Fresh encoders for a base dimension, drawn from the config seed.
pub fn init_encoders(in_dim: usize, config: &TrainConfig) -> (EncoderParams, EncoderParams) {
    let mut rng_q = ChaCha8Rng::seed_from_u64(config.seed);
    rng_q.set_stream(1);
    let mut rng_d = ChaCha8Rng::seed_from_u64(config.seed);
    rng_d.set_stream(2);
    (
        EncoderParams::head(in_dim, config.proj_dim, config.activation, &mut rng_q),
        EncoderParams::head(in_dim, config.proj_dim, config.activation, &mut rng_d),
    )
}

/// Initialize both encoders from the seed and train them.
pub fn train(
    tuples: &[TrainingTuple],
    config: &TrainConfig,
    sss: &SssTable,
    provider: &dyn BaseEmbeddings,
) -> Result<TrainOutput> {
    config.validate()?;
    let (q, d) = init_encoders(provider.dim(), config);
    train_from(tuples, q, d, config, sss, provider)
}

/// Train from given initial encoders with per-tuple SGD and momentum.
///
/// Tuples are visited in an order reshuffled every epoch from the config
/// seed. Final parameters are rounded to `f32`, the precision they are stored
/// at.
pub fn train_from(
    tuples: &[TrainingTuple],
    mut query: EncoderParams,
    mut doc: EncoderParams,
    config: &TrainConfig,
    sss: &SssTable,
    provider: &dyn BaseEmbeddings,
) -> Result<TrainOutput> {
    config.validate()?;
    if tuples.is_empty() {
        return Err(Error::config("no training tuples"));
    }
    let bases = ResolvedBases::resolve(
        provider,
        tuples
            .iter()
            .flat_map(|t| std::iter::once(&t.query).chain(&t.positives).chain(&t.negatives)),
    )?;

    let mut vel_q = query.zeros_like();
    let mut vel_d = doc.zeros_like();
    let mut grads = Gradients {
        loss: 0.0,
        query: query.zeros_like(),
        doc: doc.zeros_like(),
    };
    let mut order: Vec<usize> = (0..tuples.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(3);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for &i in &order {
            let tuple = &tuples[i];
            let fail = |detail: String| Error::NonFinite {
                epoch,
                tuple: tuple.query.id.clone(),
                detail,
            };
            grads.loss = 0.0;
            grads.query.params_mut().for_each(|p| *p = 0.0);
            grads.doc.params_mut().for_each(|p| *p = 0.0);
            loss::accumulate_gradient(tuple, &query, &doc, config, sss, &bases, &mut grads)
                .map_err(|e| match e {
                    Error::Domain(msg) => fail(msg),
                    other => other,
                })?;
            if !grads.is_finite() {
                return Err(fail(format!("loss {} or its gradient is not finite", grads.loss)));
            }
            total += grads.loss;
            sgd_step(&mut query, &mut vel_q, &grads.query, config);
            sgd_step(&mut doc, &mut vel_d, &grads.doc, config);
        }
        history.push(total / tuples.len() as f64);
    }
    query.quantize_f32();
    doc.quantize_f32();
    Ok(TrainOutput {
        query,
        doc,
        history,
    })
}

fn sgd_step(params: &mut EncoderParams, velocity: &mut EncoderParams, grad: &EncoderParams, config: &TrainConfig) {
    for ((p, v), g) in params.params_mut().zip(velocity.params_mut()).zip(grad.params()) {
        *v = config.momentum * *v + g;
        *p -= config.learning_rate * *v;
    }
}
