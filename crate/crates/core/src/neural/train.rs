use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{Bound, ModelParams};
use super::tape::{Tape, Var};
use super::transformer::TransformerModel;
use super::triage::TriageModel;
use super::{NeuralError, TrainConfig};
use crate::trajectory::TriageSequence;

/// Mean training loss of every epoch, in order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
}

/// Shared loop: seeded shuffle per epoch, gradients averaged over
/// `batch_size` samples, one optimizer step per batch.
fn run_epochs<M, S>(
    model: &mut M,
    samples: &[S],
    cfg: &TrainConfig,
    loss_of: impl Fn(&M, &S) -> Result<(Tape, Bound, Var), NeuralError>,
    params: fn(&mut M) -> &mut ModelParams,
) -> Result<TrainReport, NeuralError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(NeuralError::EmptyDataset);
    }
    let opt = cfg.optimizer();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            params(model).zero_grads();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (tape, bound, loss) = loss_of(model, &samples[i])?;
                let value = tape.scalar(loss);
                if !value.is_finite() {
                    return Err(NeuralError::Divergence(format!("non-finite loss in epoch {}", epoch + 1)));
                }
                total += value;
                let grads = tape.backward(loss);
                params(model).accumulate_grads(&bound, &grads, scale);
            }
            params(model).optimizer_step(&opt)?;
            report.steps += 1;
        }
        report.epoch_losses.push(total / samples.len() as f64);
    }
    params(model).zero_grads();
    Ok(report)
}

/// Trains on every non-empty sequence; each sequence is one sample.
pub fn train_triage(
    model: &mut TriageModel,
    data: &[TriageSequence],
    cfg: &TrainConfig,
) -> Result<TrainReport, NeuralError> {
    let samples: Vec<&TriageSequence> = data.iter().filter(|s| !s.is_empty()).collect();
    if samples.iter().any(|s| s.labels().is_none()) {
        return Err(NeuralError::Unlabeled);
    }
    run_epochs(model, &samples, cfg, |m, seq| m.loss(&seq.elements), |m| &mut m.params)
}

/// Training windows of `window + 1` consecutive areas (inputs plus the
/// shifted targets), sliding by one. Shorter sequences yield one window.
pub fn area_windows(sequences: &[Vec<usize>], window: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for s in sequences {
        if s.len() < 2 {
            continue;
        }
        if s.len() <= window + 1 {
            out.push(s.clone());
            continue;
        }
        out.extend(s.windows(window + 1).map(<[usize]>::to_vec));
    }
    out
}

/// Trains next-area prediction over area sequences.
pub fn train_transformer(
    model: &mut TransformerModel,
    sequences: &[Vec<usize>],
    cfg: &TrainConfig,
) -> Result<TrainReport, NeuralError> {
    let windows = area_windows(sequences, model.arch.window.min(cfg.window));
    run_epochs(model, &windows, cfg, |m, w| m.loss(w), |m| &mut m.params)
}
