//! Target labels, the per-tuple contrastive loss and its exact gradient.

use crate::corpus::{CodeSample, TrainingTuple};
use crate::embedding::BaseEmbeddings;
use crate::error::Result;
use crate::sss::SssTable;

use super::encoder::EncoderParams;
use super::similarity::similarity_with_grad;
use super::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Positive,
    Negative,
}

/// Static labels for positive and negative pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Labels {
    pub positive: f64,
    pub negative: f64,
}

impl Default for Labels {
    fn default() -> Self {
        Labels {
            positive: 1.0,
            negative: 0.0,
        }
    }
}

/// `(1 − α)·l + α·s_io`, or the plain label `l` when no score is known.
pub fn target_label(kind: LabelKind, s_io: Option<f64>, alpha: f64, labels: Labels) -> f64 {
    let l = match kind {
        LabelKind::Positive => labels.positive,
        LabelKind::Negative => labels.negative,
    };
    match s_io {
        Some(s) => (1.0 - alpha) * l + alpha * s,
        None => l,
    }
}

/// Gradients for both encoders plus the loss they were taken at.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub query: EncoderParams,
    pub doc: EncoderParams,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.loss.is_finite() && self.query.is_finite() && self.doc.is_finite()
    }
}

fn pairs<'a>(tuple: &'a TrainingTuple) -> impl Iterator<Item = (LabelKind, &'a CodeSample)> {
    tuple
        .positives
        .iter()
        .map(|s| (LabelKind::Positive, s))
        .chain(tuple.negatives.iter().map(|s| (LabelKind::Negative, s)))
}

fn target_for(
    tuple: &TrainingTuple,
    kind: LabelKind,
    target: &CodeSample,
    config: &TrainConfig,
    sss: &SssTable,
) -> f64 {
    target_label(
        kind,
        sss.get(&tuple.query.id, &target.id),
        config.alpha,
        config.labels(),
    )
}

/// Sum over the tuple's positives and negatives of
/// `(target − sim(E_q(query), E_d(sample)))²`.
pub fn tuple_loss(
    tuple: &TrainingTuple,
    params_q: &EncoderParams,
    params_d: &EncoderParams,
    config: &TrainConfig,
    sss: &SssTable,
    provider: &dyn BaseEmbeddings,
) -> Result<f64> {
    let query = params_q.forward_slice(&provider.base(&tuple.query)?)?;
    let mut loss = 0.0;
    for (kind, sample) in pairs(tuple) {
        let r = params_d.forward_slice(&provider.base(sample)?)?;
        let sim = super::similarity::similarity_slices(config.similarity, &query, &r)?;
        let diff = target_for(tuple, kind, sample, config, sss) - sim;
        loss += diff * diff;
    }
    Ok(loss)
}

/// Exact gradient of [`tuple_loss`] for every parameter of both encoders.
pub fn loss_gradient(
    tuple: &TrainingTuple,
    params_q: &EncoderParams,
    params_d: &EncoderParams,
    config: &TrainConfig,
    sss: &SssTable,
    provider: &dyn BaseEmbeddings,
) -> Result<Gradients> {
    let mut grads = Gradients {
        loss: 0.0,
        query: params_q.zeros_like(),
        doc: params_d.zeros_like(),
    };
    accumulate_gradient(tuple, params_q, params_d, config, sss, provider, &mut grads)?;
    Ok(grads)
}

pub(crate) fn accumulate_gradient(
    tuple: &TrainingTuple,
    params_q: &EncoderParams,
    params_d: &EncoderParams,
    config: &TrainConfig,
    sss: &SssTable,
    provider: &dyn BaseEmbeddings,
    grads: &mut Gradients,
) -> Result<()> {
    let q_trace = params_q.forward_trace(&provider.base(&tuple.query)?)?;
    let query = q_trace.output();
    let mut d_query = vec![0.0; query.len()];
    for (label, sample) in pairs(tuple) {
        let d_trace = params_d.forward_trace(&provider.base(sample)?)?;
        let sg = similarity_with_grad(config.similarity, query, d_trace.output())?;
        let diff = target_for(tuple, label, sample, config, sss) - sg.value;
        grads.loss += diff * diff;
        // d/ds (t − s)² = −2 (t − s)
        let coeff = -2.0 * diff;
        if coeff == 0.0 {
            continue;
        }
        for (acc, g) in d_query.iter_mut().zip(&sg.d_a) {
            *acc += coeff * g;
        }
        let d_doc: Vec<f64> = sg.d_b.iter().map(|g| coeff * g).collect();
        params_d.backward(&d_trace, &d_doc, &mut grads.doc);
    }
    params_q.backward(&q_trace, &d_query, &mut grads.query);
    Ok(())
}
