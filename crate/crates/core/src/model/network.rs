//! Forward pass, decoding, guessing and exact backpropagation through time.
//!
//! A dialogue is processed as one token stream over a single recurrent state:
//! each turn consumes `<soq>`, the question words and the answer word. QGen
//! predicts every question word and the closing `<eoq>` from the state just
//! before it; the guesser scores objects against the final state.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::{DecodeMode, ModelParams};
use super::tensor::{argmax, dot, log_sum_exp, softmax_in_place, softmax_lse_in_place};
use super::FEATURE_DIM;
use crate::dialogue::{Dialogue, Source};
use crate::error::{Error, Result};
use crate::lang::Vocabulary;
use crate::oracle::Answer;
use crate::scene::{Category, Color, Scene, SceneObject, Size};

const GRID_SCALE: f64 = 4.0;

/// One-hot category, color and size followed by x/4 and y/4.
pub fn object_features(obj: &SceneObject) -> [f64; FEATURE_DIM] {
    let mut f = [0.0; FEATURE_DIM];
    let color_off = Category::ALL.len();
    let size_off = color_off + Color::ALL.len();
    let pos_off = size_off + Size::ALL.len();
    f[obj.category.index()] = 1.0;
    f[color_off + obj.color.index()] = 1.0;
    f[size_off + obj.size.index()] = 1.0;
    f[pos_off] = f64::from(obj.cell_x) / GRID_SCALE;
    f[pos_off + 1] = f64::from(obj.cell_y) / GRID_SCALE;
    f
}

pub fn scene_features(scene: &Scene) -> [f64; FEATURE_DIM] {
    let mut f = [0.0; FEATURE_DIM];
    for obj in &scene.objects {
        for (acc, x) in f.iter_mut().zip(object_features(obj)) {
            *acc += x;
        }
    }
    let n = scene.objects.len() as f64;
    f.iter_mut().for_each(|x| *x /= n);
    f
}

/// The shared dialogue state.
#[derive(Debug, Clone, PartialEq)]
pub struct DialogueState {
    pub h: Vec<f64>,
}

fn tanh_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.tanh());
}

/// h0 = tanh(W_init · scene_features + b_init)
pub fn initial_state(params: &ModelParams, scene: &Scene) -> DialogueState {
    let mut h = params.init_b.data.clone();
    params.init_w.matvec_acc(&scene_features(scene), &mut h);
    tanh_in_place(&mut h);
    DialogueState { h }
}

/// h' = tanh(W_in · embed(token) + W_rec · h + b)
fn step(params: &ModelParams, h: &[f64], token: usize) -> Vec<f64> {
    let mut next = params.b_rec.data.clone();
    params.w_in.matvec_acc(params.embed.row(token), &mut next);
    params.w_rec.matvec_acc(h, &mut next);
    tanh_in_place(&mut next);
    next
}

fn logits(params: &ModelParams, h: &[f64]) -> Vec<f64> {
    let mut z = params.b_out.data.clone();
    params.w_out.matvec_acc(h, &mut z);
    z
}

/// Consumes `<soq>`, the question ids and the answer.
pub fn encode_turn(params: &ModelParams, state: &DialogueState, question: &[usize], answer: Answer) -> DialogueState {
    let mut h = step(params, &state.h, Vocabulary::SOQ);
    for &tok in question {
        h = step(params, &h, tok);
    }
    DialogueState { h: step(params, &h, Vocabulary::answer_id(answer)) }
}

/// Generates one question. `<eoq>` is not allowed as the first token, so at
/// least one token is always produced.
pub fn decode_question<R: Rng + ?Sized>(
    params: &ModelParams,
    state: &DialogueState,
    mode: DecodeMode,
    max_len: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut h = step(params, &state.h, Vocabulary::SOQ);
    let mut out = Vec::new();
    while out.len() < max_len {
        let mut z = logits(params, &h);
        if out.is_empty() {
            z[Vocabulary::EOQ] = f64::NEG_INFINITY;
        }
        let tok = match mode {
            DecodeMode::Greedy => argmax(&z),
            DecodeMode::Sample => {
                softmax_in_place(&mut z);
                let u = rng.random::<f64>();
                let mut acc = 0.0;
                let mut pick = z.len() - 1;
                for (i, p) in z.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                pick
            }
        };
        if tok == Vocabulary::EOQ {
            break;
        }
        out.push(tok);
        h = step(params, &h, tok);
    }
    out
}

/// Dot product of the state with each featurized object.
pub fn guesser_scores(params: &ModelParams, state: &DialogueState, scene: &Scene) -> Vec<f64> {
    let mut projected = vec![0.0; FEATURE_DIM];
    params.featurizer.tmatvec_acc(&state.h, &mut projected);
    scene.objects.iter().map(|o| dot(&projected, &object_features(o))).collect()
}

pub fn guess(params: &ModelParams, state: &DialogueState, scene: &Scene) -> usize {
    argmax(&guesser_scores(params, state, scene))
}

/// A dialogue bound to its scene, with tokens mapped to vocabulary ids.
#[derive(Debug, Clone)]
pub struct Example<'a> {
    pub scene: &'a Scene,
    pub questions: Vec<Vec<usize>>,
    pub answers: Vec<Answer>,
    pub source: Source,
}

impl<'a> Example<'a> {
    pub fn new(dialogue: &Dialogue, scene: &'a Scene, vocab: &Vocabulary) -> Self {
        Example {
            scene,
            questions: dialogue.question_tokens().map(|t| vocab.encode(&t)).collect(),
            answers: dialogue.turns.iter().map(|t| t.a).collect(),
            source: dialogue.source,
        }
    }

    /// Number of QGen predictions (question words plus one `<eoq>` per turn).
    pub fn n_targets(&self) -> usize {
        self.questions.iter().map(|q| q.len() + 1).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    QgenOnly,
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BatchLoss {
    /// QGen loss plus, in the joint phase, the guesser loss.
    pub total: f64,
    /// Mean negative log-likelihood per predicted token.
    pub qgen: f64,
    /// Mean guesser cross-entropy (0 when not trained this phase).
    pub guesser: f64,
    pub tokens: usize,
}

struct Trace {
    states: Vec<Vec<f64>>,
    inputs: Vec<usize>,
    /// Target predicted from `states[k]`, if any.
    targets: Vec<Option<usize>>,
}

fn forward(params: &ModelParams, ex: &Example) -> Trace {
    let h0 = initial_state(params, ex.scene).h;
    let mut trace = Trace { states: vec![h0], inputs: Vec::new(), targets: vec![None] };
    let consume = |trace: &mut Trace, tok: usize| {
        let next = step(params, trace.states.last().expect("non-empty"), tok);
        trace.inputs.push(tok);
        trace.states.push(next);
        trace.targets.push(None);
    };
    for (question, &answer) in ex.questions.iter().zip(&ex.answers) {
        consume(&mut trace, Vocabulary::SOQ);
        for &tok in question {
            *trace.targets.last_mut().expect("non-empty") = Some(tok);
            consume(&mut trace, tok);
        }
        *trace.targets.last_mut().expect("non-empty") = Some(Vocabulary::EOQ);
        consume(&mut trace, Vocabulary::answer_id(answer));
    }
    trace
}

/// Per-example sums: QGen NLL summed over tokens, guesser cross-entropy.
#[derive(Debug, Clone, Copy, Default)]
struct ExampleLoss {
    nll: f64,
    ce: f64,
}

fn guesser_ce(params: &ModelParams, h: &[f64], scene: &Scene) -> (f64, Vec<f64>) {
    let state = DialogueState { h: h.to_vec() };
    let mut scores = guesser_scores(params, &state, scene);
    let ce = log_sum_exp(&scores) - scores[scene.target_index];
    softmax_in_place(&mut scores);
    (ce, scores)
}

fn example_loss(params: &ModelParams, ex: &Example, with_guesser: bool) -> ExampleLoss {
    let trace = forward(params, ex);
    let mut loss = ExampleLoss::default();
    for (h, target) in trace.states.iter().zip(&trace.targets) {
        if let Some(t) = target {
            let z = logits(params, h);
            loss.nll += log_sum_exp(&z) - z[*t];
        }
    }
    if with_guesser {
        loss.ce = guesser_ce(params, trace.states.last().expect("non-empty"), ex.scene).0;
    }
    loss
}

/// Accumulates `tok_weight * d(NLL)/dθ + guess_weight * d(CE)/dθ` into `grads`.
fn example_backward(
    params: &ModelParams,
    ex: &Example,
    tok_weight: f64,
    guess_weight: f64,
    grads: &mut ModelParams,
) -> ExampleLoss {
    let trace = forward(params, ex);
    let hidden = params.hidden_dim();
    let mut loss = ExampleLoss::default();
    let last = trace.states.len() - 1;
    let mut dh = vec![0.0; hidden];

    if guess_weight != 0.0 {
        let h = &trace.states[last];
        let (ce, mut probs) = guesser_ce(params, h, ex.scene);
        loss.ce = ce;
        probs[ex.scene.target_index] -= 1.0;
        // d score_i / d h = F x_i ; d score_i / d F = h x_iᵀ
        let mut mixed = [0.0; FEATURE_DIM];
        for (p, obj) in probs.iter().zip(&ex.scene.objects) {
            for (m, x) in mixed.iter_mut().zip(object_features(obj)) {
                *m += p * x;
            }
        }
        params.featurizer.matvec_acc(&mixed.map(|m| m * guess_weight), &mut dh);
        grads.featurizer.outer_acc(guess_weight, h, &mixed);
    }

    for k in (0..=last).rev() {
        let h = &trace.states[k];
        if let Some(t) = trace.targets[k] {
            let mut p = logits(params, h);
            let target_logit = p[t];
            loss.nll += softmax_lse_in_place(&mut p) - target_logit;
            p[t] -= 1.0;
            grads.w_out.outer_acc(tok_weight, &p, h);
            super::tensor::axpy(tok_weight, &p, &mut grads.b_out.data);
            p.iter_mut().for_each(|x| *x *= tok_weight);
            params.w_out.tmatvec_acc(&p, &mut dh);
        }
        // through tanh
        let dz: Vec<f64> = dh.iter().zip(h).map(|(d, y)| d * (1.0 - y * y)).collect();
        if k == 0 {
            grads.init_w.outer_acc(1.0, &dz, &scene_features(ex.scene));
            super::tensor::axpy(1.0, &dz, &mut grads.init_b.data);
        } else {
            let tok = trace.inputs[k - 1];
            let h_prev = &trace.states[k - 1];
            super::tensor::axpy(1.0, &dz, &mut grads.b_rec.data);
            grads.w_in.outer_acc(1.0, &dz, params.embed.row(tok));
            grads.w_rec.outer_acc(1.0, &dz, h_prev);
            params.w_in.tmatvec_acc(&dz, grads.embed.row_mut(tok));
            let mut prev = vec![0.0; hidden];
            params.w_rec.tmatvec_acc(&dz, &mut prev);
            dh = prev;
        }
    }
    loss
}

fn guesser_active(ex: &Example, phase: Phase, human_only: bool) -> bool {
    phase == Phase::Joint && (!human_only || ex.source == Source::Human)
}

fn weights(batch: &[&Example], phase: Phase, human_only: bool) -> (usize, usize) {
    let tokens = batch.iter().map(|e| e.n_targets()).sum();
    let guessed = batch.iter().filter(|e| guesser_active(e, phase, human_only)).count();
    (tokens, guessed)
}

fn finish(sum: ExampleLoss, tokens: usize, guessed: usize) -> BatchLoss {
    let qgen = if tokens > 0 { sum.nll / tokens as f64 } else { 0.0 };
    let guesser = if guessed > 0 { sum.ce / guessed as f64 } else { 0.0 };
    BatchLoss { total: qgen + guesser, qgen, guesser, tokens }
}

const CHUNK: usize = 4;

/// Loss only, no gradients.
pub fn batch_loss(params: &ModelParams, batch: &[&Example], phase: Phase, guesser_human_only: bool) -> BatchLoss {
    let (tokens, guessed) = weights(batch, phase, guesser_human_only);
    let parts: Vec<ExampleLoss> = batch
        .par_iter()
        .map(|ex| example_loss(params, ex, guesser_active(ex, phase, guesser_human_only)))
        .collect();
    let sum = parts.iter().fold(ExampleLoss::default(), |a, b| ExampleLoss { nll: a.nll + b.nll, ce: a.ce + b.ce });
    finish(sum, tokens, guessed)
}

/// Mean per-token QGen NLL plus (joint phase) mean guesser cross-entropy,
/// with exact gradients. Examples are processed in fixed-size chunks whose
/// partial sums are reduced in order, so results do not depend on threading.
pub(crate) fn batch_gradient(
    params: &ModelParams,
    batch: &[&Example],
    phase: Phase,
    guesser_human_only: bool,
) -> (BatchLoss, ModelParams) {
    let (tokens, guessed) = weights(batch, phase, guesser_human_only);
    let tok_weight = if tokens > 0 { 1.0 / tokens as f64 } else { 0.0 };
    let guess_weight = if guessed > 0 { 1.0 / guessed as f64 } else { 0.0 };
    let partials: Vec<(ExampleLoss, ModelParams)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grads = params.zeros_like();
            let mut sum = ExampleLoss::default();
            for ex in chunk {
                let gw = if guesser_active(ex, phase, guesser_human_only) { guess_weight } else { 0.0 };
                let l = example_backward(params, ex, tok_weight, gw, &mut grads);
                sum.nll += l.nll;
                sum.ce += l.ce;
            }
            (sum, grads)
        })
        .collect();
    let mut grads = params.zeros_like();
    let mut sum = ExampleLoss::default();
    for (l, g) in &partials {
        sum.nll += l.nll;
        sum.ce += l.ce;
        grads.add_scaled(1.0, g);
    }
    (finish(sum, tokens, guessed), grads)
}

pub fn loss_and_grads(
    params: &ModelParams,
    batch: &[&Example],
    phase: Phase,
    guesser_human_only: bool,
) -> Result<(BatchLoss, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::EmptySet("training batch"));
    }
    let (loss, grads) = batch_gradient(params, batch, phase, guesser_human_only);
    if !loss.total.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0, batch: 0 });
    }
    Ok((loss, grads))
}
