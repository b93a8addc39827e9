use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{decay_hidden_var, lstm_step, ode_evolve, time2vec, OdeDynamics};
use super::params::{Bound, ModelParams};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::{NeuralError, TrainConfig};
use crate::trajectory::{Strategy, TriageElement};

/// Seconds per model time unit.
pub const TIME_UNIT_S: f64 = 60.0;
/// Meters per model position unit.
pub const POSITION_UNIT_M: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriageVariant {
    /// Time2Vec features appended to every input.
    Time2Vec,
    /// Hidden state decays exponentially across gaps.
    Decay,
    /// Hidden state follows a learned ODE across gaps.
    Ode,
}

impl TriageVariant {
    pub const ALL: [TriageVariant; 3] = [TriageVariant::Time2Vec, TriageVariant::Ode, TriageVariant::Decay];

    pub fn as_str(self) -> &'static str {
        match self {
            TriageVariant::Time2Vec => "time2vec",
            TriageVariant::Decay => "decay",
            TriageVariant::Ode => "ode",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            TriageVariant::Time2Vec => "LSTM + Time2Vec",
            TriageVariant::Decay => "LSTM + RNNDecay",
            TriageVariant::Ode => "LSTM + RNN-ODE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

/// Architecture of a triage classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriageArch {
    pub variant: TriageVariant,
    pub hidden_size: usize,
    /// Number of periodic Time2Vec components.
    pub time2vec_k: usize,
    pub ode_steps: usize,
    pub decay_half_life: f64,
}

impl TriageArch {
    pub fn from_config(variant: TriageVariant, cfg: &TrainConfig) -> Self {
        Self {
            variant,
            hidden_size: cfg.hidden_size,
            time2vec_k: cfg.time2vec_k,
            ode_steps: cfg.ode_steps,
            decay_half_life: cfg.decay_half_life,
        }
    }

    fn time_features(&self) -> usize {
        match self.variant {
            TriageVariant::Time2Vec => self.time2vec_k + 1,
            TriageVariant::Decay | TriageVariant::Ode => 1,
        }
    }

    pub fn input_size(&self) -> usize {
        self.time_features() + 3
    }
}

/// LSTM classifier over triage sequences, emitting `[p_selective,
/// p_opportunistic]` at every element.
#[derive(Clone, Debug, PartialEq)]
pub struct TriageModel {
    pub arch: TriageArch,
    pub params: ModelParams,
}

impl TriageModel {
    /// Seeded uniform initialization. With `zero_head` the output layer
    /// starts at zero, so every prediction is exactly 0.5.
    pub fn new(arch: TriageArch, seed: u64, zero_head: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = arch.hidden_size;
        let nin = arch.input_size();
        let mut p = ModelParams::new();
        if arch.variant == TriageVariant::Time2Vec {
            let n = arch.time2vec_k + 1;
            p.insert_uniform("t2v.omega", 1, n, 1, &mut rng);
            p.insert_uniform("t2v.phi", 1, n, 1, &mut rng);
        }
        p.insert_uniform("lstm.w", nin + h, 4 * h, nin + h, &mut rng);
        p.insert_uniform("lstm.b", 1, 4 * h, nin + h, &mut rng);
        if arch.variant == TriageVariant::Ode {
            p.insert_uniform("ode.w1", h, h, h, &mut rng);
            p.insert_uniform("ode.b1", 1, h, h, &mut rng);
            p.insert_uniform("ode.w2", h, h, h, &mut rng);
            p.insert_uniform("ode.b2", 1, h, h, &mut rng);
        }
        if zero_head {
            p.insert("head.w", Tensor::zeros(vec![h, 2]));
            p.insert("head.b", Tensor::zeros(vec![1, 2]));
        } else {
            p.insert_uniform("head.w", h, 2, h, &mut rng);
            p.insert_uniform("head.b", 1, 2, h, &mut rng);
        }
        Self { arch, params: p }
    }

    fn input(&self, tape: &mut Tape, bound: &Bound, e: &TriageElement) -> Var {
        let t = e.t / TIME_UNIT_S;
        let rest = tape.constant(1, 3, vec![e.x / POSITION_UNIT_M, e.y / POSITION_UNIT_M, e.severity]);
        let time = match self.arch.variant {
            TriageVariant::Time2Vec => time2vec(tape, t, bound.get("t2v.omega"), bound.get("t2v.phi")),
            TriageVariant::Decay | TriageVariant::Ode => tape.constant(1, 1, vec![t]),
        };
        tape.concat_cols(&[time, rest])
    }

    /// Records the forward pass; returns `len x 2` logits.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, elems: &[TriageElement]) -> Result<Var, NeuralError> {
        if elems.is_empty() {
            return Err(NeuralError::EmptySequence);
        }
        let h_size = self.arch.hidden_size;
        let mut h = tape.constant(1, h_size, vec![0.0; h_size]);
        let mut c = tape.constant(1, h_size, vec![0.0; h_size]);
        let dynamics = (self.arch.variant == TriageVariant::Ode).then(|| OdeDynamics {
            w1: bound.get("ode.w1"),
            b1: bound.get("ode.b1"),
            w2: bound.get("ode.w2"),
            b2: bound.get("ode.b2"),
        });
        let (w, b) = (bound.get("lstm.w"), bound.get("lstm.b"));
        let (hw, hb) = (bound.get("head.w"), bound.get("head.b"));
        let mut rows = Vec::with_capacity(elems.len());
        let mut prev_t = elems[0].t;
        for e in elems {
            let gap = (e.t - prev_t).max(0.0);
            prev_t = e.t;
            match self.arch.variant {
                TriageVariant::Decay => h = decay_hidden_var(tape, h, gap, self.arch.decay_half_life),
                TriageVariant::Ode => {
                    let d = dynamics.as_ref().expect("ode parameters bound");
                    h = ode_evolve(tape, h, gap / TIME_UNIT_S, d, self.arch.ode_steps)?;
                }
                TriageVariant::Time2Vec => {}
            }
            let x = self.input(tape, bound, e);
            (h, c) = lstm_step(tape, x, h, c, w, b)?;
            let logits = tape.matmul(h, hw);
            rows.push(tape.add(logits, hb));
        }
        Ok(tape.concat_rows(&rows))
    }

    /// Mean cross-entropy against per-element labels, with the tape and
    /// bound parameters for a backward pass.
    pub fn loss(&self, elems: &[TriageElement]) -> Result<(Tape, Bound, Var), NeuralError> {
        let labels: Vec<usize> = elems
            .iter()
            .map(|e| e.label.map(Strategy::index).ok_or(NeuralError::Unlabeled))
            .collect::<Result<_, _>>()?;
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let logits = self.forward(&mut tape, &bound, elems)?;
        let loss = tape.cross_entropy(logits, &labels);
        Ok((tape, bound, loss))
    }

    /// Class probabilities `[selective, opportunistic]` per element.
    pub fn probabilities(&self, elems: &[TriageElement]) -> Result<Vec<[f64; 2]>, NeuralError> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let logits = self.forward(&mut tape, &bound, elems)?;
        let probs = tape.softmax_rows(logits);
        Ok(tape.value(probs).chunks(2).map(|p| [p[0], p[1]]).collect())
    }

    /// Argmax prediction per element; ties go to selective.
    pub fn predict(&self, elems: &[TriageElement]) -> Result<Vec<Strategy>, NeuralError> {
        Ok(self
            .probabilities(elems)?
            .into_iter()
            .map(|p| if p[1] > p[0] { Strategy::Opportunistic } else { Strategy::Selective })
            .collect())
    }
}
