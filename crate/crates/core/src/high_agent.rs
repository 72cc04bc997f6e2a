//! High-level agent: a multi-goal actor with M parallel bounded heads
//! behind one shared encoder, M parallel critic evaluation heads behind
//! another shared encoder, the benefit assignment that turns a period's
//! external rewards into per-goal returns, and the TD/policy-gradient
//! update rules.
//!
//! Sharing: within each role (actor, critic) all M heads read the same
//! encoder, so one full round of per-head updates applies M gradient
//! steps to the shared encoder tensors and exactly one to each head.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::encoders::{encode_high, EncoderParams, HistoryWindow, StreamKind};
use crate::error::{CoreError, Result};
use crate::heads::{check_head_index, clamp_open, BoundedHead, EvalHead, NetDims};
use crate::numerics::params::{impl_param_set, join_prefix, ParamSet, ParamView, ParamViewMut};
use crate::numerics::{Optimizer, Tensor1, UpdateCounters};

/// The M bounded goal vectors emitted for one period.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalSet {
    pub goals: Vec<Tensor1>,
}

impl GoalSet {
    pub fn empty() -> Self {
        GoalSet { goals: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }
}

/// Replay record for the high-level agent: state windows at the period
/// start, the goals that were active, the period's external rewards
/// (possibly truncated at session end), and the windows at period end.
/// Windows are stored as catalog indices.
#[derive(Debug, Clone)]
pub struct HighTransition {
    pub s_click: Vec<u32>,
    pub s_order: Vec<u32>,
    pub goals: Arc<GoalSet>,
    pub rewards: Vec<f64>,
    pub s2_click: Vec<u32>,
    pub s2_order: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct HighActorParams {
    pub encoder: EncoderParams,
    pub heads: Vec<BoundedHead>,
}

impl_param_set!(HighActorParams { encoder, heads });

#[derive(Debug, Clone)]
pub struct HighCriticParams {
    pub encoder: EncoderParams,
    pub heads: Vec<EvalHead>,
}

impl_param_set!(HighCriticParams { encoder, heads });

#[derive(Debug, Clone)]
pub struct HighParams {
    pub actor: HighActorParams,
    pub critic: HighCriticParams,
    pub target_actor: HighActorParams,
    pub target_critic: HighCriticParams,
    pub bound: f64,
}

impl_param_set!(HighParams { actor, critic, target_actor, target_critic });

impl HighActorParams {
    fn subset_mut<'a>(&'a mut self, prefix: &str, head: usize) -> Vec<ParamViewMut<'a>> {
        let mut out = Vec::new();
        self.encoder
            .collect_mut(&join_prefix(prefix, "encoder"), &mut out);
        self.heads[head].collect_mut(&join_prefix(prefix, &format!("heads.{head}")), &mut out);
        out
    }

    fn subset<'a>(&'a self, prefix: &str, head: usize) -> Vec<ParamView<'a>> {
        let mut out = Vec::new();
        self.encoder.collect(&join_prefix(prefix, "encoder"), &mut out);
        self.heads[head].collect(&join_prefix(prefix, &format!("heads.{head}")), &mut out);
        out
    }
}

impl HighCriticParams {
    fn subset_mut<'a>(&'a mut self, prefix: &str, head: usize) -> Vec<ParamViewMut<'a>> {
        let mut out = Vec::new();
        self.encoder
            .collect_mut(&join_prefix(prefix, "encoder"), &mut out);
        self.heads[head].collect_mut(&join_prefix(prefix, &format!("heads.{head}")), &mut out);
        out
    }

    fn subset<'a>(&'a self, prefix: &str, head: usize) -> Vec<ParamView<'a>> {
        let mut out = Vec::new();
        self.encoder.collect(&join_prefix(prefix, "encoder"), &mut out);
        self.heads[head].collect(&join_prefix(prefix, &format!("heads.{head}")), &mut out);
        out
    }
}

impl HighParams {
    pub fn new<R: Rng>(dims: NetDims, num_goals: usize, bound: f64, rng: &mut R) -> Self {
        let actor = HighActorParams {
            encoder: EncoderParams::random(dims.embed_dim, dims.gru_hidden, dims.state_dim, rng),
            heads: (0..num_goals)
                .map(|_| BoundedHead::random(dims.embed_dim, dims.state_dim, rng))
                .collect(),
        };
        let critic = HighCriticParams {
            encoder: EncoderParams::random(dims.embed_dim, dims.gru_hidden, dims.state_dim, rng),
            heads: (0..num_goals)
                .map(|_| EvalHead::random(dims.state_dim, dims.embed_dim, dims.eval_hidden, rng))
                .collect(),
        };
        HighParams {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            bound,
        }
    }

    pub fn num_goals(&self) -> usize {
        self.actor.heads.len()
    }
}

fn high_windows<'a>(
    clicks: &[&'a Tensor1],
    orders: &[&'a Tensor1],
) -> (HistoryWindow<'a>, HistoryWindow<'a>) {
    (
        HistoryWindow::new(StreamKind::Click, clicks.to_vec()),
        HistoryWindow::new(StreamKind::Order, orders.to_vec()),
    )
}

/// Encode s^h with the actor encoder and run every goal head:
/// g^i = B·tanh(w_g^i s^h + b_g^i), plus optional Gaussian exploration
/// noise, clamped back into (−B, B).
pub fn generate_goals<R: Rng>(
    clicks: &[&Tensor1],
    orders: &[&Tensor1],
    actor: &HighActorParams,
    bound: f64,
    n_window: usize,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<GoalSet> {
    if noise_sigma < 0.0 {
        return Err(CoreError::InvalidParameter(
            "noise_sigma must be >= 0".into(),
        ));
    }
    let (cw, ow) = high_windows(clicks, orders);
    let (s_h, _) = encode_high(&cw, &ow, &actor.encoder, n_window)?;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut goals = Vec::with_capacity(actor.heads.len());
    for head in &actor.heads {
        let (mut g, _) = head.forward(&s_h, bound)?;
        if noise_sigma > 0.0 {
            for v in g.data_mut() {
                *v = clamp_open(*v + noise_sigma * normal.sample(rng), bound);
            }
        } else {
            for v in g.data_mut() {
                *v = clamp_open(*v, bound);
            }
        }
        goals.push(g);
    }
    Ok(GoalSet { goals })
}

/// Q_i(s^h, g) through critic head `head` (0-based).
pub fn evaluate_goal(
    clicks: &[&Tensor1],
    orders: &[&Tensor1],
    goal: &Tensor1,
    head: usize,
    critic: &HighCriticParams,
    n_window: usize,
) -> Result<f64> {
    check_head_index(head, critic.heads.len())?;
    let (cw, ow) = high_windows(clicks, orders);
    let (s_h, _) = encode_high(&cw, &ow, &critic.encoder, n_window)?;
    Ok(critic.heads[head].forward(&s_h, goal)?.0)
}

/// Per-stage sums of a period's external rewards. Stage k (1-based)
/// owns zero-based reward indices ⌊c/M⌋(k−1) .. ⌊c/M⌋k − 1; indices
/// beyond ⌊c/M⌋·M are appended to stage M. Rewards may be truncated
/// (session ended mid-period): missing indices contribute nothing.
pub fn stage_sums(rewards: &[f64], period: usize, num_goals: usize) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(CoreError::EmptyInput("stage rewards"));
    }
    if num_goals == 0 || period < num_goals {
        return Err(CoreError::InvalidParameter(format!(
            "need period >= num_goals >= 1, got {period} and {num_goals}"
        )));
    }
    if rewards.len() > period {
        return Err(CoreError::InvalidParameter(format!(
            "{} rewards exceed period {period}",
            rewards.len()
        )));
    }
    let q = period / num_goals;
    let mut sums = vec![0.0; num_goals];
    for k in 0..num_goals {
        let start = q * k;
        let end = if k + 1 == num_goals { period } else { q * (k + 1) };
        for j in start..end.min(rewards.len()) {
            sums[k] += rewards[j];
        }
    }
    Ok(sums)
}

/// Benefit assignment: φ'_i = Σ_{k=1..i} β^{i−k} φ⁰_k, the discounted
/// accumulation of stage sums from the period start through goal i's
/// own stage. `goal_index` is 1-based.
pub fn benefit_assign(
    rewards: &[f64],
    goal_index: usize,
    num_goals: usize,
    beta: f64,
    period: usize,
) -> Result<f64> {
    if goal_index == 0 || goal_index > num_goals {
        return Err(CoreError::IndexOutOfRange {
            index: goal_index,
            limit: num_goals,
        });
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(CoreError::InvalidParameter(format!(
            "beta must be in [0, 1], got {beta}"
        )));
    }
    let sums = stage_sums(rewards, period, num_goals)?;
    let mut total = 0.0;
    for k in 1..=goal_index {
        total += beta.powi((goal_index - k) as i32) * sums[k - 1];
    }
    Ok(total)
}

/// One high-level transition with its windows resolved to embeddings.
pub struct HighSample<'a> {
    pub clicks: Vec<&'a Tensor1>,
    pub orders: Vec<&'a Tensor1>,
    pub next_clicks: Vec<&'a Tensor1>,
    pub next_orders: Vec<&'a Tensor1>,
    pub goals: &'a GoalSet,
    pub rewards: &'a [f64],
}

pub struct HighUpdateCfg {
    pub gamma: f64,
    pub beta: f64,
    pub period: usize,
    pub n_window: usize,
    pub critic_lr: f64,
    pub actor_lr: f64,
}

/// One TD step for critic head `head`: the target is
/// y_i = φ'_i + γ·Q'_i(s^h', g_i') with g_i' from the target actor,
/// and gradients flow into the shared critic encoder and head i only.
/// Returns the batch-mean squared TD error.
pub fn hcritic_update(
    p: &mut HighParams,
    batch: &[HighSample<'_>],
    head: usize,
    cfg: &HighUpdateCfg,
    opt: &mut Optimizer,
    counters: Option<&mut UpdateCounters>,
) -> Result<f64> {
    check_head_index(head, p.critic.heads.len())?;
    if batch.is_empty() {
        return Err(CoreError::EmptyInput("hcritic batch"));
    }
    let n = batch.len() as f64;
    let mut grads = p.critic.zeros_like();
    let mut loss = 0.0;

    for sample in batch {
        let r_high = benefit_assign(sample.rewards, head + 1, p.num_goals(), cfg.beta, cfg.period)?;

        // Target value from the frozen networks.
        let (cw2, ow2) = high_windows(&sample.next_clicks, &sample.next_orders);
        let (s2_actor, _) = encode_high(&cw2, &ow2, &p.target_actor.encoder, cfg.n_window)?;
        let (g_next, _) = p.target_actor.heads[head].forward(&s2_actor, p.bound)?;
        let (s2_critic, _) = encode_high(&cw2, &ow2, &p.target_critic.encoder, cfg.n_window)?;
        let (q_next, _) = p.target_critic.heads[head].forward(&s2_critic, &g_next)?;
        let y = r_high + cfg.gamma * q_next;

        // Online value and backward.
        let (cw, ow) = high_windows(&sample.clicks, &sample.orders);
        let (s_h, enc_cache) = encode_high(&cw, &ow, &p.critic.encoder, cfg.n_window)?;
        let goal = &sample.goals.goals[head];
        let (q, head_cache) = p.critic.heads[head].forward(&s_h, goal)?;

        let td = q - y;
        loss += td * td;
        let dq = 2.0 * td / n;
        let (ds, _dg) = p.critic.heads[head].backward(dq, &head_cache, &mut grads.heads[head])?;
        crate::encoders::encode_backward(&ds, &enc_cache, &p.critic.encoder, &mut grads.encoder)?;
    }

    let grad_views = grads.subset("critic", head);
    let mut param_views = p.critic.subset_mut("critic", head);
    opt.apply(&mut param_views, &grad_views, cfg.critic_lr, counters)?;
    Ok(loss / n)
}

/// Deterministic policy-gradient ascent on head `head`:
/// ∇_θ J = E[ ∇_g Q_i(s^h, g)|_{g=f_i(s^h)} · ∇_θ f_i(s^h) ],
/// applied to the shared actor encoder and head i only. `dq_fn` supplies
/// ∇_g Q for a given sample index and goal; the public update wires it
/// to the online critic. Returns the L2 norm of the applied gradient.
fn hactor_ascend<F>(
    actor: &mut HighActorParams,
    bound: f64,
    batch: &[(Vec<&Tensor1>, Vec<&Tensor1>)],
    head: usize,
    n_window: usize,
    lr: f64,
    opt: &mut Optimizer,
    counters: Option<&mut UpdateCounters>,
    mut dq_fn: F,
) -> Result<f64>
where
    F: FnMut(usize, &Tensor1) -> Result<Tensor1>,
{
    check_head_index(head, actor.heads.len())?;
    if batch.is_empty() {
        return Err(CoreError::EmptyInput("hactor batch"));
    }
    let n = batch.len() as f64;
    let mut ascent = actor.zeros_like();

    for (i, (clicks, orders)) in batch.iter().enumerate() {
        let (cw, ow) = high_windows(clicks, orders);
        let (s_h, enc_cache) = encode_high(&cw, &ow, &actor.encoder, n_window)?;
        let (goal, head_cache) = actor.heads[head].forward(&s_h, bound)?;
        let dg = dq_fn(i, &goal)?.scale(1.0 / n);
        let ds = actor.heads[head].backward(&dg, &head_cache, bound, &mut ascent.heads[head])?;
        crate::encoders::encode_backward(&ds, &enc_cache, &actor.encoder, &mut ascent.encoder)?;
    }

    let norm = {
        let views = ascent.subset("actor", head);
        views
            .iter()
            .flat_map(|v| v.data.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    };
    // Ascend: descend along the negated gradient.
    for v in ascent.views_mut() {
        for g in v.data.iter_mut() {
            *g = -*g;
        }
    }
    let grad_views = ascent.subset("actor", head);
    let mut param_views = actor.subset_mut("actor", head);
    opt.apply(&mut param_views, &grad_views, lr, counters)?;
    Ok(norm)
}

/// Policy-gradient update of goal head `head` against the online critic.
pub fn hactor_update(
    p: &mut HighParams,
    batch: &[HighSample<'_>],
    head: usize,
    cfg: &HighUpdateCfg,
    opt: &mut Optimizer,
    counters: Option<&mut UpdateCounters>,
) -> Result<f64> {
    let windows: Vec<(Vec<&Tensor1>, Vec<&Tensor1>)> = batch
        .iter()
        .map(|s| (s.clicks.clone(), s.orders.clone()))
        .collect();
    let HighParams {
        actor,
        critic,
        bound,
        ..
    } = p;
    let n_window = cfg.n_window;
    hactor_ascend(
        actor,
        *bound,
        &windows,
        head,
        n_window,
        cfg.actor_lr,
        opt,
        counters,
        |i, goal| {
            let (cw, ow) = high_windows(&batch[i].clicks, &batch[i].orders);
            let (s_h, _) = encode_high(&cw, &ow, &critic.encoder, n_window)?;
            let (_, cache) = critic.heads[head].forward(&s_h, goal)?;
            let mut scratch = critic.heads[head].zeros_like();
            let (_, dg) = critic.heads[head].backward(1.0, &cache, &mut scratch)?;
            Ok(dg)
        },
    )
}

/// Ascent path with a caller-supplied critic gradient; used by the
/// analytic-optimum convergence checks.
pub fn hactor_update_with<F>(
    p: &mut HighParams,
    batch: &[(Vec<&Tensor1>, Vec<&Tensor1>)],
    head: usize,
    n_window: usize,
    lr: f64,
    opt: &mut Optimizer,
    counters: Option<&mut UpdateCounters>,
    dq_fn: F,
) -> Result<f64>
where
    F: FnMut(usize, &Tensor1) -> Result<Tensor1>,
{
    hactor_ascend(
        &mut p.actor, p.bound, batch, head, n_window, lr, opt, counters, dq_fn,
    )
}
