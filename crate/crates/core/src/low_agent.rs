//! Low-level agent: the actor that emits a bounded virtual action each
//! step, the critic over (state, action) pairs, the stage schedule that
//! decides which goal is active at each step of a period, the internal
//! reward (cosine between the executed action and the active goal), and
//! the DDPG-style update rules.
//!
//! The critic learns on the *executed* catalog item embedding; the
//! actor's policy gradient is taken at the *virtual* action it actually
//! output.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::encoders::{encode_low, EncoderParams, HistoryWindow, StreamKind};
use crate::error::{CoreError, Result};
use crate::heads::{clamp_open, BoundedHead, EvalHead, NetDims};
use crate::high_agent::GoalSet;
use crate::numerics::params::{impl_param_set, ParamSet, ParamView, ParamViewMut};
use crate::numerics::{cosine, Optimizer, Tensor1, UpdateCounters};

/// Replay record for the low-level agent. Window contents and the
/// executed action are stored as catalog indices; `t_c` is the 1-based
/// step index within the period so the active goal can be recovered.
#[derive(Debug, Clone)]
pub struct LowTransition {
    pub s_browse: Vec<u32>,
    pub s_click: Vec<u32>,
    pub goals: Arc<GoalSet>,
    pub action_index: u32,
    pub r_ex: f64,
    pub s2_browse: Vec<u32>,
    pub s2_click: Vec<u32>,
    pub t_c: u32,
}

#[derive(Debug, Clone)]
pub struct LowActorParams {
    pub encoder: EncoderParams,
    pub head: BoundedHead,
}

impl_param_set!(LowActorParams { encoder, head });

#[derive(Debug, Clone)]
pub struct LowCriticParams {
    pub encoder: EncoderParams,
    pub head: EvalHead,
}

impl_param_set!(LowCriticParams { encoder, head });

#[derive(Debug, Clone)]
pub struct LowParams {
    pub actor: LowActorParams,
    pub critic: LowCriticParams,
    pub target_actor: LowActorParams,
    pub target_critic: LowCriticParams,
    pub bound: f64,
}

impl_param_set!(LowParams { actor, critic, target_actor, target_critic });

impl LowActorParams {
    fn all_mut<'a>(&'a mut self, prefix: &str) -> Vec<ParamViewMut<'a>> {
        let mut out = Vec::new();
        self.collect_mut(prefix, &mut out);
        out
    }

    fn all<'a>(&'a self, prefix: &str) -> Vec<ParamView<'a>> {
        let mut out = Vec::new();
        self.collect(prefix, &mut out);
        out
    }
}

impl LowCriticParams {
    fn all_mut<'a>(&'a mut self, prefix: &str) -> Vec<ParamViewMut<'a>> {
        let mut out = Vec::new();
        self.collect_mut(prefix, &mut out);
        out
    }

    fn all<'a>(&'a self, prefix: &str) -> Vec<ParamView<'a>> {
        let mut out = Vec::new();
        self.collect(prefix, &mut out);
        out
    }
}

impl LowParams {
    pub fn new<R: Rng>(dims: NetDims, bound: f64, rng: &mut R) -> Self {
        let actor = LowActorParams {
            encoder: EncoderParams::random(dims.embed_dim, dims.gru_hidden, dims.state_dim, rng),
            head: BoundedHead::random(dims.embed_dim, dims.state_dim, rng),
        };
        let critic = LowCriticParams {
            encoder: EncoderParams::random(dims.embed_dim, dims.gru_hidden, dims.state_dim, rng),
            head: EvalHead::random(dims.state_dim, dims.embed_dim, dims.eval_hidden, rng),
        };
        LowParams {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            bound,
        }
    }
}

fn low_windows<'a>(
    browses: &[&'a Tensor1],
    clicks: &[&'a Tensor1],
) -> (HistoryWindow<'a>, HistoryWindow<'a>) {
    (
        HistoryWindow::new(StreamKind::Browse, browses.to_vec()),
        HistoryWindow::new(StreamKind::Click, clicks.to_vec()),
    )
}

/// Virtual action â = B·tanh(w_a s^l + b_a) with optional Gaussian
/// exploration noise, clamped into (−B, B).
pub fn generate_action<R: Rng>(
    browses: &[&Tensor1],
    clicks: &[&Tensor1],
    actor: &LowActorParams,
    bound: f64,
    n_window: usize,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<Tensor1> {
    if noise_sigma < 0.0 {
        return Err(CoreError::InvalidParameter(
            "noise_sigma must be >= 0".into(),
        ));
    }
    let (bw, cw) = low_windows(browses, clicks);
    let (s_l, _) = encode_low(&bw, &cw, &actor.encoder, n_window)?;
    let (mut a, _) = actor.head.forward(&s_l, bound)?;
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        for v in a.data_mut() {
            *v = clamp_open(*v + noise_sigma * normal.sample(rng), bound);
        }
    } else {
        for v in a.data_mut() {
            *v = clamp_open(*v, bound);
        }
    }
    Ok(a)
}

/// Stage index j (1-based) owning period step `t_c` ∈ [1, c]:
/// ⌊c/M⌋(j−1) < t_c ≤ ⌊c/M⌋j, with steps past ⌊c/M⌋·M assigned to
/// stage M.
pub fn stage_goal(num_goals: usize, t_c: usize, period: usize) -> Result<usize> {
    if num_goals == 0 || period < num_goals {
        return Err(CoreError::InvalidParameter(format!(
            "need period >= num_goals >= 1, got {period} and {num_goals}"
        )));
    }
    if t_c == 0 || t_c > period {
        return Err(CoreError::IndexOutOfRange {
            index: t_c,
            limit: period,
        });
    }
    let q = period / num_goals;
    Ok(t_c.div_ceil(q).min(num_goals))
}

/// Cosine between the executed action and the stage-active goal. A
/// degenerate (zero-norm) goal or action yields 0 so training stays
/// total; no goals at all (high agent disabled) also yields 0.
pub fn internal_reward(
    goals: &[Tensor1],
    action: &Tensor1,
    t_c: usize,
    period: usize,
) -> Result<f64> {
    if goals.is_empty() {
        return Ok(0.0);
    }
    let j = stage_goal(goals.len(), t_c, period)?;
    let g = &goals[j - 1];
    if g.norm() == 0.0 || action.norm() == 0.0 {
        return Ok(0.0);
    }
    cosine(action, g)
}

/// r^low = r^ex + α·r^in.
pub fn total_reward(r_ex: f64, r_in: f64, alpha: f64) -> Result<f64> {
    if alpha < 0.0 {
        return Err(CoreError::InvalidParameter(format!(
            "alpha must be >= 0, got {alpha}"
        )));
    }
    Ok(r_ex + alpha * r_in)
}

/// Q(s^l, a) through the online critic.
pub fn evaluate_action(
    browses: &[&Tensor1],
    clicks: &[&Tensor1],
    action: &Tensor1,
    critic: &LowCriticParams,
    n_window: usize,
) -> Result<f64> {
    let (bw, cw) = low_windows(browses, clicks);
    let (s_l, _) = encode_low(&bw, &cw, &critic.encoder, n_window)?;
    Ok(critic.head.forward(&s_l, action)?.0)
}

/// One low-level transition with windows and action resolved.
pub struct LowSample<'a> {
    pub browses: Vec<&'a Tensor1>,
    pub clicks: Vec<&'a Tensor1>,
    pub next_browses: Vec<&'a Tensor1>,
    pub next_clicks: Vec<&'a Tensor1>,
    pub goals: &'a GoalSet,
    pub action: &'a Tensor1,
    pub r_ex: f64,
    pub t_c: usize,
}

pub struct LowUpdateCfg {
    pub gamma: f64,
    pub alpha: f64,
    pub period: usize,
    pub n_window: usize,
    pub critic_lr: f64,
    pub actor_lr: f64,
}

/// TD step on the squared error between Q(s^l, a) at the executed
/// action and y = r^low + γ·Q'(s^l', f'(s^l')), where r^low is
/// recomputed from the stored (r^ex, goals, t_c) and the target actor
/// supplies the bootstrap action. Returns the batch-mean squared error.
pub fn lcritic_update(
    p: &mut LowParams,
    batch: &[LowSample<'_>],
    cfg: &LowUpdateCfg,
    opt: &mut Optimizer,
    counters: Option<&mut UpdateCounters>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(CoreError::EmptyInput("lcritic batch"));
    }
    let n = batch.len() as f64;
    let mut grads = p.critic.zeros_like();
    let mut loss = 0.0;

    for sample in batch {
        let r_in = internal_reward(&sample.goals.goals, sample.action, sample.t_c, cfg.period)?;
        let r_low = total_reward(sample.r_ex, r_in, cfg.alpha)?;

        let (bw2, cw2) = low_windows(&sample.next_browses, &sample.next_clicks);
        let (s2_actor, _) = encode_low(&bw2, &cw2, &p.target_actor.encoder, cfg.n_window)?;
        let (a_next, _) = p.target_actor.head.forward(&s2_actor, p.bound)?;
        let (s2_critic, _) = encode_low(&bw2, &cw2, &p.target_critic.encoder, cfg.n_window)?;
        let (q_next, _) = p.target_critic.head.forward(&s2_critic, &a_next)?;
        let y = r_low + cfg.gamma * q_next;

        let (bw, cw) = low_windows(&sample.browses, &sample.clicks);
        let (s_l, enc_cache) = encode_low(&bw, &cw, &p.critic.encoder, cfg.n_window)?;
        let (q, head_cache) = p.critic.head.forward(&s_l, sample.action)?;

        let td = q - y;
        loss += td * td;
        let dq = 2.0 * td / n;
        let (ds, _da) = p.critic.head.backward(dq, &head_cache, &mut grads.head)?;
        crate::encoders::encode_backward(&ds, &enc_cache, &p.critic.encoder, &mut grads.encoder)?;
    }

    let grad_views = grads.all("critic");
    let mut param_views = p.critic.all_mut("critic");
    opt.apply(&mut param_views, &grad_views, cfg.critic_lr, counters)?;
    Ok(loss / n)
}

fn lactor_ascend<F>(
    actor: &mut LowActorParams,
    bound: f64,
    batch: &[(Vec<&Tensor1>, Vec<&Tensor1>)],
    n_window: usize,
    lr: f64,
    opt: &mut Optimizer,
    counters: Option<&mut UpdateCounters>,
    mut dq_fn: F,
) -> Result<f64>
where
    F: FnMut(usize, &Tensor1) -> Result<Tensor1>,
{
    if batch.is_empty() {
        return Err(CoreError::EmptyInput("lactor batch"));
    }
    let n = batch.len() as f64;
    let mut ascent = actor.zeros_like();

    for (i, (browses, clicks)) in batch.iter().enumerate() {
        let (bw, cw) = low_windows(browses, clicks);
        let (s_l, enc_cache) = encode_low(&bw, &cw, &actor.encoder, n_window)?;
        let (a_hat, head_cache) = actor.head.forward(&s_l, bound)?;
        let da = dq_fn(i, &a_hat)?.scale(1.0 / n);
        let ds = actor.head.backward(&da, &head_cache, bound, &mut ascent.head)?;
        crate::encoders::encode_backward(&ds, &enc_cache, &actor.encoder, &mut ascent.encoder)?;
    }

    let norm = ascent.l2_norm();
    for v in ascent.views_mut() {
        for g in v.data.iter_mut() {
            *g = -*g;
        }
    }
    let grad_views = ascent.all("actor");
    let mut param_views = actor.all_mut("actor");
    opt.apply(&mut param_views, &grad_views, lr, counters)?;
    Ok(norm)
}

/// Policy-gradient ascent evaluated at the virtual action â = f(s^l)
/// (not the mapped catalog item), against the online critic. Returns
/// the L2 norm of the applied gradient.
pub fn lactor_update(
    p: &mut LowParams,
    batch: &[LowSample<'_>],
    cfg: &LowUpdateCfg,
    opt: &mut Optimizer,
    counters: Option<&mut UpdateCounters>,
) -> Result<f64> {
    let windows: Vec<(Vec<&Tensor1>, Vec<&Tensor1>)> = batch
        .iter()
        .map(|s| (s.browses.clone(), s.clicks.clone()))
        .collect();
    let LowParams {
        actor,
        critic,
        bound,
        ..
    } = p;
    let n_window = cfg.n_window;
    lactor_ascend(
        actor,
        *bound,
        &windows,
        n_window,
        cfg.actor_lr,
        opt,
        counters,
        |i, a_hat| {
            let (bw, cw) = low_windows(&batch[i].browses, &batch[i].clicks);
            let (s_l, _) = encode_low(&bw, &cw, &critic.encoder, n_window)?;
            let (_, cache) = critic.head.forward(&s_l, a_hat)?;
            let mut scratch = critic.head.zeros_like();
            let (_, da) = critic.head.backward(1.0, &cache, &mut scratch)?;
            Ok(da)
        },
    )
}

/// Ascent path with a caller-supplied critic gradient; used by the
/// analytic-optimum convergence checks.
pub fn lactor_update_with<F>(
    p: &mut LowParams,
    batch: &[(Vec<&Tensor1>, Vec<&Tensor1>)],
    n_window: usize,
    lr: f64,
    opt: &mut Optimizer,
    counters: Option<&mut UpdateCounters>,
    dq_fn: F,
) -> Result<f64>
where
    F: FnMut(usize, &Tensor1) -> Result<Tensor1>,
{
    lactor_ascend(
        &mut p.actor, p.bound, batch, n_window, lr, opt, counters, dq_fn,
    )
}
