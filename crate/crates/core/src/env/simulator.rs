//! Learned feedback simulator: the critic-shaped network with a 3-way
//! softmax output over {skip, click, order}, trained by cross-entropy
//! on logged sessions. Used both as a methodology check (how well can
//! immediate feedback be predicted from logs) and as an alternative
//! environment backend.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::catalog::Catalog;
use crate::encoders::{encode_low, EncoderParams, HistoryWindow, StreamKind};
use crate::env::SessionState;
use crate::error::{CoreError, Result};
use crate::heads::NetDims;
use crate::numerics::params::{impl_param_set, ParamSet};
use crate::numerics::{OptimKind, Optimizer, Tensor1, Tensor2};

#[derive(Debug, Clone)]
pub struct SoftmaxHead {
    pub w_s: Tensor2,
    pub w_in: Tensor2,
    pub b1: Tensor1,
    pub w_out: Tensor2,
    pub b_out: Tensor1,
}

impl_param_set!(SoftmaxHead { w_s, w_in, b1, w_out, b_out });

impl SoftmaxHead {
    fn random<R: Rng>(state_dim: usize, in_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut h = SoftmaxHead {
            w_s: Tensor2::zeros(hidden, state_dim),
            w_in: Tensor2::zeros(hidden, in_dim),
            b1: Tensor1::zeros(hidden),
            w_out: Tensor2::zeros(3, hidden),
            b_out: Tensor1::zeros(3),
        };
        let s_s = 1.0 / (state_dim as f64).sqrt();
        let s_i = 1.0 / (in_dim as f64).sqrt();
        let s_h = 1.0 / (hidden as f64).sqrt();
        for v in h.w_s.data_mut() {
            *v = rng.random_range(-s_s..s_s);
        }
        for v in h.w_in.data_mut() {
            *v = rng.random_range(-s_i..s_i);
        }
        for v in h.w_out.data_mut() {
            *v = rng.random_range(-s_h..s_h);
        }
        h
    }
}

#[derive(Debug, Clone)]
pub struct SimulatorParams {
    pub encoder: EncoderParams,
    pub head: SoftmaxHead,
}

impl_param_set!(SimulatorParams { encoder, head });

struct SimCache {
    enc_cache: crate::encoders::EncodeCache,
    s: Tensor1,
    item: Tensor1,
    pre1: Tensor1,
    h1: Tensor1,
    probs: [f64; 3],
}

fn softmax3(logits: &Tensor1) -> [f64; 3] {
    let m = logits.data().iter().cloned().fold(f64::MIN, f64::max);
    let exps: Vec<f64> = logits.data().iter().map(|v| (v - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    [exps[0] / z, exps[1] / z, exps[2] / z]
}

impl SimulatorParams {
    pub fn new<R: Rng>(dims: NetDims, rng: &mut R) -> Self {
        SimulatorParams {
            encoder: EncoderParams::random(dims.embed_dim, dims.gru_hidden, dims.state_dim, rng),
            head: SoftmaxHead::random(dims.state_dim, dims.embed_dim, dims.eval_hidden, rng),
        }
    }

    fn forward(
        &self,
        browses: &[&Tensor1],
        clicks: &[&Tensor1],
        item: &Tensor1,
        n_window: usize,
    ) -> Result<SimCache> {
        let bw = HistoryWindow::new(StreamKind::Browse, browses.to_vec());
        let cw = HistoryWindow::new(StreamKind::Click, clicks.to_vec());
        let (s, enc_cache) = encode_low(&bw, &cw, &self.encoder, n_window)?;
        let mut pre1 = self.head.w_s.matvec(&s)?;
        pre1.add_assign(&self.head.w_in.matvec(item)?);
        pre1.add_assign(&self.head.b1);
        let h1 = crate::numerics::relu_vec(&pre1);
        let mut logits = self.head.w_out.matvec(&h1)?;
        logits.add_assign(&self.head.b_out);
        let probs = softmax3(&logits);
        Ok(SimCache {
            enc_cache,
            s,
            item: item.clone(),
            pre1,
            h1,
            probs,
        })
    }

    /// P(skip), P(click), P(order) for one (state, item) pair.
    pub fn predict(
        &self,
        browses: &[&Tensor1],
        clicks: &[&Tensor1],
        item: &Tensor1,
        n_window: usize,
    ) -> Result<[f64; 3]> {
        Ok(self.forward(browses, clicks, item, n_window)?.probs)
    }

    /// Cross-entropy of one labeled sample.
    pub fn loss(
        &self,
        browses: &[&Tensor1],
        clicks: &[&Tensor1],
        item: &Tensor1,
        class: usize,
        n_window: usize,
    ) -> Result<f64> {
        let cache = self.forward(browses, clicks, item, n_window)?;
        Ok(-cache.probs[class].max(1e-300).ln())
    }

    /// Accumulate d(cross-entropy)/d(params) into `grads` for one
    /// sample; returns the sample loss.
    pub fn loss_backward(
        &self,
        browses: &[&Tensor1],
        clicks: &[&Tensor1],
        item: &Tensor1,
        class: usize,
        n_window: usize,
        scale: f64,
        grads: &mut SimulatorParams,
    ) -> Result<f64> {
        let cache = self.forward(browses, clicks, item, n_window)?;
        // dL/dlogit_k = p_k − 1[k = class]
        let mut dlogits = Tensor1::from_vec(cache.probs.to_vec());
        dlogits[class] -= 1.0;
        let dlogits = dlogits.scale(scale);

        grads.head.w_out.add_outer(&dlogits, &cache.h1);
        grads.head.b_out.add_assign(&dlogits);
        let dh1 = self.head.w_out.matvec_t(&dlogits)?;
        let dpre1 = Tensor1::from_vec(
            dh1.data()
                .iter()
                .zip(cache.pre1.data())
                .map(|(&d, &p)| if p > 0.0 { d } else { 0.0 })
                .collect(),
        );
        grads.head.w_s.add_outer(&dpre1, &cache.s);
        grads.head.w_in.add_outer(&dpre1, &cache.item);
        grads.head.b1.add_assign(&dpre1);
        let ds = self.head.w_s.matvec_t(&dpre1)?;
        crate::encoders::encode_backward(&ds, &cache.enc_cache, &self.encoder, &mut grads.encoder)?;
        Ok(-cache.probs[class].max(1e-300).ln())
    }
}

#[derive(Debug, Clone)]
pub struct SimTrainConfig {
    pub dims: NetDims,
    pub n_window: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Fraction of sessions held out for accuracy measurement.
    pub holdout_frac: f64,
}

impl Default for SimTrainConfig {
    fn default() -> Self {
        SimTrainConfig {
            dims: NetDims {
                embed_dim: 50,
                gru_hidden: 16,
                state_dim: 50,
                eval_hidden: 64,
            },
            n_window: 10,
            epochs: 4,
            batch_size: 32,
            lr: 1e-3,
            holdout_frac: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimReport {
    pub holdout_accuracy: f64,
    /// Precision per predicted class (skip, click, order); None when a
    /// class was never predicted.
    pub per_class_precision: [Option<f64>; 3],
    /// True when the training labels contain a single class.
    pub degenerate: bool,
    pub n_train: usize,
    pub n_holdout: usize,
}

struct Sample {
    browse: Vec<u32>,
    click: Vec<u32>,
    item: u32,
    class: usize,
}

/// Replay a logged session from empty windows, emitting one labeled
/// sample per non-leave event.
fn samples_from_session(
    record: &crate::env::SessionRecord,
    catalog: &Catalog,
    n_window: usize,
) -> Result<Vec<Sample>> {
    let mut state = SessionState::new(n_window);
    let mut out = Vec::with_capacity(record.events.len());
    for ev in &record.events {
        let idx = catalog.index_of(ev.item_id).ok_or_else(|| {
            CoreError::InvalidParameter(format!("log item {} not in catalog", ev.item_id))
        })?;
        if let Some(class) = ev.feedback.class() {
            out.push(Sample {
                browse: state.browse.iter().copied().collect(),
                click: state.click.iter().copied().collect(),
                item: idx,
                class,
            });
        }
        state.apply(idx, ev.feedback);
    }
    Ok(out)
}

/// Supervised training of the feedback simulator on logged sessions.
/// Sessions (not events) are split into train/holdout so no session
/// leaks across the boundary.
pub fn train_simulator<R: Rng>(
    logs: &[crate::env::SessionRecord],
    catalog: &Catalog,
    cfg: &SimTrainConfig,
    rng: &mut R,
) -> Result<(SimulatorParams, SimReport)> {
    if logs.is_empty() {
        return Err(CoreError::EmptyInput("simulator logs"));
    }
    let mut session_order: Vec<usize> = (0..logs.len()).collect();
    session_order.shuffle(rng);
    let n_holdout_sessions =
        ((logs.len() as f64 * cfg.holdout_frac).round() as usize).clamp(1, logs.len() - 1);
    let (holdout_sessions, train_sessions) = session_order.split_at(n_holdout_sessions);

    let mut train = Vec::new();
    for &i in train_sessions {
        train.extend(samples_from_session(&logs[i], catalog, cfg.n_window)?);
    }
    let mut holdout = Vec::new();
    for &i in holdout_sessions {
        holdout.extend(samples_from_session(&logs[i], catalog, cfg.n_window)?);
    }
    if train.is_empty() || holdout.is_empty() {
        return Err(CoreError::EmptyInput("simulator samples"));
    }

    let first = train[0].class;
    let degenerate = train.iter().all(|s| s.class == first);

    let mut params = SimulatorParams::new(cfg.dims, rng);
    let mut opt = Optimizer::new(OptimKind::Adam);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let mut grads = params.zeros_like();
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let s = &train[i];
                let browses: Vec<&Tensor1> =
                    s.browse.iter().map(|&i| catalog.embedding(i)).collect();
                let clicks: Vec<&Tensor1> =
                    s.click.iter().map(|&i| catalog.embedding(i)).collect();
                params.loss_backward(
                    &browses,
                    &clicks,
                    catalog.embedding(s.item),
                    s.class,
                    cfg.n_window,
                    scale,
                    &mut grads,
                )?;
            }
            let grad_views = grads.views();
            let mut param_views = params.views_mut();
            opt.apply(&mut param_views, &grad_views, cfg.lr, None)?;
        }
    }

    // Holdout evaluation: argmax prediction per event.
    let mut correct = 0usize;
    let mut predicted = [0usize; 3];
    let mut true_positive = [0usize; 3];
    for s in &holdout {
        let browses: Vec<&Tensor1> = s.browse.iter().map(|&i| catalog.embedding(i)).collect();
        let clicks: Vec<&Tensor1> = s.click.iter().map(|&i| catalog.embedding(i)).collect();
        let probs = params.predict(&browses, &clicks, catalog.embedding(s.item), cfg.n_window)?;
        let pred = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        predicted[pred] += 1;
        if pred == s.class {
            correct += 1;
            true_positive[pred] += 1;
        }
    }
    let report = SimReport {
        holdout_accuracy: correct as f64 / holdout.len() as f64,
        per_class_precision: std::array::from_fn(|k| {
            (predicted[k] > 0).then(|| true_positive[k] as f64 / predicted[k] as f64)
        }),
        degenerate,
        n_train: train.len(),
        n_holdout: holdout.len(),
    };
    Ok((params, report))
}
