//! The interleaved transition-generation / parameter-update training
//! loop.
//!
//! Per session: goals are regenerated whenever t ≡ 0 (mod c) and held
//! in between; each step the low-level actor emits a virtual action
//! that is mapped onto an unconsumed catalog item; the low-level
//! transition is stored every step and a high-level transition every c
//! steps (plus a truncated one at session end). Once the low buffer
//! holds a warm-up quantum, every `update_every`-th step samples both
//! buffers, updates every high head and the low networks, and soft
//! updates all targets.
//!
//! Randomness is split across independent streams per consumer, so
//! consumers that cannot influence item choice (goal noise, high-level
//! replay) never perturb the action sequence.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::catalog::{map_action_within, recall_candidates, ActiveItemSet, Catalog};
use crate::encoders::{encode_low, HistoryWindow, StreamKind};
use crate::env::{Feedback, SessionEnv, SyntheticUser, UserModel};
use crate::error::Result;
use crate::high_agent::{
    generate_goals, hactor_update, hcritic_update, GoalSet, HighParams, HighSample, HighTransition,
    HighUpdateCfg,
};
use crate::low_agent::{
    generate_action, lactor_update, lcritic_update, LowParams, LowSample, LowTransition,
    LowUpdateCfg,
};
use crate::numerics::params::soft_update;
use crate::numerics::{Optimizer, Tensor1, UpdateCounters};
use crate::replay::ReplayBuffer;
use crate::rng::{stream_rng, Stream};
use crate::trainer::config::TrainConfig;
use crate::trainer::trace::{SessionSummary, StepRecord, TrainTrace};

pub struct TrainOutcome {
    pub low: LowParams,
    pub high: Option<HighParams>,
    pub trace: TrainTrace,
    pub counters: UpdateCounters,
}

struct Optimizers {
    low_actor: Optimizer,
    low_critic: Optimizer,
    high_actor: Optimizer,
    high_critic: Optimizer,
}

fn resolve<'a>(ids: &[u32], catalog: &'a Catalog) -> Vec<&'a Tensor1> {
    ids.iter().map(|&i| catalog.embedding(i)).collect()
}

pub fn run_training(cfg: &TrainConfig, catalog: &Catalog) -> Result<TrainOutcome> {
    cfg.validate()?;
    let dims = cfg.dims();
    let mut low = LowParams::new(dims, cfg.bound, &mut stream_rng(cfg.seed, Stream::InitLow));
    let mut high = cfg.high_enabled.then(|| {
        HighParams::new(
            dims,
            cfg.num_goals,
            cfg.bound,
            &mut stream_rng(cfg.seed, Stream::InitHigh),
        )
    });

    let mut low_buf: ReplayBuffer<LowTransition> = ReplayBuffer::new(cfg.low_capacity);
    let mut high_buf: ReplayBuffer<HighTransition> = ReplayBuffer::new(cfg.high_capacity);

    let mut opts = Optimizers {
        low_actor: Optimizer::new(cfg.optimizer),
        low_critic: Optimizer::new(cfg.optimizer),
        high_actor: Optimizer::new(cfg.optimizer),
        high_critic: Optimizer::new(cfg.optimizer),
    };
    let mut counters = UpdateCounters::new();

    let mut env_root = stream_rng(cfg.seed, Stream::Env);
    let mut action_noise = stream_rng(cfg.seed, Stream::ActionNoise);
    let mut goal_noise = stream_rng(cfg.seed, Stream::GoalNoise);
    let mut replay_low_rng = stream_rng(cfg.seed, Stream::ReplayLow);
    let mut replay_high_rng = stream_rng(cfg.seed, Stream::ReplayHigh);

    let low_cfg = LowUpdateCfg {
        gamma: cfg.gamma,
        alpha: cfg.alpha,
        period: cfg.period,
        n_window: cfg.n_window,
        critic_lr: cfg.critic_lr,
        actor_lr: cfg.actor_lr,
    };
    let high_cfg = HighUpdateCfg {
        gamma: cfg.gamma,
        beta: cfg.beta,
        period: cfg.period,
        n_window: cfg.n_window,
        critic_lr: cfg.critic_lr,
        actor_lr: cfg.actor_lr,
    };

    let warmup_needed = cfg.low_batch.max(cfg.warmup_min);
    let total_steps = (cfg.sessions * cfg.session_len).max(1);
    let mut global_step: usize = 0;
    let mut trace = TrainTrace::default();

    for session in 0..cfg.sessions as u32 {
        let user = SyntheticUser::sample_from_catalog(catalog, cfg.user_params(), &mut env_root);
        let env_rng = ChaCha12Rng::from_rng(&mut env_root);
        let mut env = SessionEnv::new(catalog, UserModel::Synthetic(user), cfg.n_window, env_rng);
        env.warm_up(cfg.n_window)?;
        let mut active = ActiveItemSet::full(catalog);

        let mut goals: Arc<GoalSet> = Arc::new(GoalSet::empty());
        let mut period_rewards: Vec<f64> = Vec::with_capacity(cfg.period);
        let mut period_start: Option<(Vec<u32>, Vec<u32>)> = None;

        let mut sess_reward = 0.0;
        let mut sess_clicks = 0u32;
        let mut sess_orders = 0u32;
        let mut sess_high_tx = 0u32;
        let mut left = false;
        let mut steps_done = 0u32;

        for t in 0..cfg.session_len as u32 {
            if active.is_empty() {
                break;
            }
            let t_c = (t as usize % cfg.period) + 1;
            let mut regen = false;

            if let Some(h) = high.as_ref() {
                if t as usize % cfg.period == 0 {
                    // Flush the completed period before regenerating.
                    if let Some((pc, po)) = period_start.take() {
                        let snap = env.state();
                        high_buf.push(HighTransition {
                            s_click: pc,
                            s_order: po,
                            goals: goals.clone(),
                            rewards: std::mem::take(&mut period_rewards),
                            s2_click: snap.click.iter().copied().collect(),
                            s2_order: snap.order.iter().copied().collect(),
                        });
                        sess_high_tx += 1;
                    }
                    let snap = env.state();
                    let clicks_r = snap.click_refs(catalog);
                    let orders_r = snap.order_refs(catalog);
                    let sigma = cfg.noise_at(global_step as f64 / total_steps as f64);
                    goals = Arc::new(generate_goals(
                        &clicks_r,
                        &orders_r,
                        &h.actor,
                        cfg.bound,
                        cfg.n_window,
                        sigma,
                        &mut goal_noise,
                    )?);
                    period_start = Some((
                        snap.click.iter().copied().collect(),
                        snap.order.iter().copied().collect(),
                    ));
                    period_rewards.clear();
                    regen = true;
                }
            }

            // Action generation and mapping.
            let s_browse: Vec<u32> = env.state().browse.iter().copied().collect();
            let s_click: Vec<u32> = env.state().click.iter().copied().collect();
            let browses_r = resolve(&s_browse, catalog);
            let clicks_r = resolve(&s_click, catalog);
            let sigma = cfg.noise_at(global_step as f64 / total_steps as f64);
            let a_hat = generate_action(
                &browses_r,
                &clicks_r,
                &low.actor,
                cfg.bound,
                cfg.n_window,
                sigma,
                &mut action_noise,
            )?;
            let candidates = if cfg.recall_k > 0 {
                let bw = HistoryWindow::new(StreamKind::Browse, browses_r.clone());
                let cw = HistoryWindow::new(StreamKind::Click, clicks_r.clone());
                let (s_l, _) = encode_low(&bw, &cw, &low.actor.encoder, cfg.n_window)?;
                Some(recall_candidates(&s_l, catalog, &active, cfg.recall_k)?)
            } else {
                None
            };
            let (item_id, item_idx) =
                map_action_within(&a_hat, catalog, &mut active, candidates.as_deref())?;

            let (feedback, r_ex) = env.step(item_idx)?;
            let r_in = crate::low_agent::internal_reward(
                &goals.goals,
                catalog.embedding(item_idx),
                t_c,
                cfg.period,
            )?;

            let s2_browse: Vec<u32> = env.state().browse.iter().copied().collect();
            let s2_click: Vec<u32> = env.state().click.iter().copied().collect();
            low_buf.push(LowTransition {
                s_browse,
                s_click,
                goals: goals.clone(),
                action_index: item_idx,
                r_ex,
                s2_browse,
                s2_click,
                t_c: t_c as u32,
            });
            period_rewards.push(r_ex);

            sess_reward += r_ex;
            match feedback {
                Feedback::Click => sess_clicks += 1,
                Feedback::Order => {
                    sess_clicks += 1;
                    sess_orders += 1;
                }
                Feedback::Leave => left = true,
                Feedback::Skip => {}
            }

            // Parameter updating stage.
            let warm = low_buf.len() >= warmup_needed;
            let due = global_step % cfg.update_every == 0;
            let mut lc_loss = 0.0;
            let mut la_gnorm = 0.0;
            let mut hc_loss = 0.0;
            let mut ha_gnorm = 0.0;
            let updated = warm && due;
            if updated {
                if let Some(h) = high.as_mut() {
                    if high_buf.len() >= cfg.high_batch {
                        let batch = high_buf.sample(cfg.high_batch, &mut replay_high_rng)?;
                        let samples: Vec<HighSample<'_>> = batch
                            .iter()
                            .map(|tr| HighSample {
                                clicks: resolve(&tr.s_click, catalog),
                                orders: resolve(&tr.s_order, catalog),
                                next_clicks: resolve(&tr.s2_click, catalog),
                                next_orders: resolve(&tr.s2_order, catalog),
                                goals: &tr.goals,
                                rewards: &tr.rewards,
                            })
                            .collect();
                        for head in 0..cfg.num_goals {
                            hc_loss += hcritic_update(
                                h,
                                &samples,
                                head,
                                &high_cfg,
                                &mut opts.high_critic,
                                Some(&mut counters),
                            )?;
                        }
                        for head in 0..cfg.num_goals {
                            ha_gnorm += hactor_update(
                                h,
                                &samples,
                                head,
                                &high_cfg,
                                &mut opts.high_actor,
                                Some(&mut counters),
                            )?;
                        }
                        hc_loss /= cfg.num_goals as f64;
                        ha_gnorm /= cfg.num_goals as f64;
                    }
                }

                let batch = low_buf.sample(cfg.low_batch, &mut replay_low_rng)?;
                let samples: Vec<LowSample<'_>> = batch
                    .iter()
                    .map(|tr| LowSample {
                        browses: resolve(&tr.s_browse, catalog),
                        clicks: resolve(&tr.s_click, catalog),
                        next_browses: resolve(&tr.s2_browse, catalog),
                        next_clicks: resolve(&tr.s2_click, catalog),
                        goals: &tr.goals,
                        action: catalog.embedding(tr.action_index),
                        r_ex: tr.r_ex,
                        t_c: tr.t_c as usize,
                    })
                    .collect();
                lc_loss = lcritic_update(
                    &mut low,
                    &samples,
                    &low_cfg,
                    &mut opts.low_critic,
                    Some(&mut counters),
                )?;
                la_gnorm = lactor_update(
                    &mut low,
                    &samples,
                    &low_cfg,
                    &mut opts.low_actor,
                    Some(&mut counters),
                )?;

                // Soft updates of every target network.
                if let Some(h) = high.as_mut() {
                    soft_update(&h.actor, &mut h.target_actor, cfg.tau)?;
                    soft_update(&h.critic, &mut h.target_critic, cfg.tau)?;
                }
                soft_update(&low.actor, &mut low.target_actor, cfg.tau)?;
                soft_update(&low.critic, &mut low.target_critic, cfg.tau)?;
            }

            let goal_norm = if goals.is_empty() {
                0.0
            } else {
                goals.goals.iter().map(|g| g.norm()).sum::<f64>() / goals.len() as f64
            };
            trace.steps.push(StepRecord {
                session,
                t,
                t_c: t_c as u32,
                item_id,
                feedback,
                r_ex,
                r_in,
                action_norm: a_hat.norm(),
                goal_norm,
                regen,
                low_buf: low_buf.len(),
                high_buf: high_buf.len(),
                updated,
                lc_loss,
                la_gnorm,
                hc_loss,
                ha_gnorm,
            });

            global_step += 1;
            steps_done += 1;
            if env.is_terminated() {
                break;
            }
        }

        // Emit the pending (possibly truncated) high-level transition.
        if high.is_some() {
            if let Some((pc, po)) = period_start.take() {
                if !period_rewards.is_empty() {
                    let snap = env.state();
                    high_buf.push(HighTransition {
                        s_click: pc,
                        s_order: po,
                        goals: goals.clone(),
                        rewards: std::mem::take(&mut period_rewards),
                        s2_click: snap.click.iter().copied().collect(),
                        s2_order: snap.order.iter().copied().collect(),
                    });
                    sess_high_tx += 1;
                }
            }
        }

        trace.sessions.push(SessionSummary {
            session,
            steps: steps_done,
            reward: sess_reward,
            clicks: sess_clicks,
            orders: sess_orders,
            left,
            high_tx: sess_high_tx,
        });
    }

    Ok(TrainOutcome {
        low,
        high,
        trace,
        counters,
    })
}
