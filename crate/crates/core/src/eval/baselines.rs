//! Comparison arms: the greedy immediate-reward network (DNN), the
//! goal-free low-level agent (DDPG), the single-goal hierarchy (HRL),
//! and the full multi-goal framework. All arms share environment seeds
//! so per-seed comparisons are paired.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::catalog::{ActiveItemSet, Catalog};
use crate::encoders::{encode_low, EncoderParams, HistoryWindow, StreamKind};
use crate::env::{Feedback, SessionEnv, SyntheticUser, UserModel};
use crate::error::{CoreError, Result};
use crate::eval::online::{online_test, run_online_sessions, EvalCfg, OnlineReport};
use crate::heads::EvalHead;
use crate::numerics::params::{impl_param_set, ParamSet};
use crate::numerics::{Optimizer, UpdateCounters};
use crate::replay::ReplayBuffer;
use crate::rng::{stream_rng, Stream};
use crate::trainer::{run_training, SessionSummary, StepRecord, TrainConfig, TrainTrace};

/// Immediate-reward regressor with the critic's shape: shared encoder
/// plus a two-layer evaluation head over (state, item).
#[derive(Debug, Clone)]
pub struct DnnParams {
    pub encoder: EncoderParams,
    pub head: EvalHead,
}

impl_param_set!(DnnParams { encoder, head });

#[derive(Clone)]
struct DnnSample {
    browse: Vec<u32>,
    click: Vec<u32>,
    item: u32,
    r_ex: f64,
}

fn dnn_score(
    p: &DnnParams,
    state: &crate::env::SessionState,
    active: &ActiveItemSet,
    catalog: &Catalog,
    n_window: usize,
) -> Result<(Vec<u32>, Vec<f64>)> {
    let bw = HistoryWindow::new(StreamKind::Browse, state.browse_refs(catalog));
    let cw = HistoryWindow::new(StreamKind::Click, state.click_refs(catalog));
    let (s_l, _) = encode_low(&bw, &cw, &p.encoder, n_window)?;
    let indices: Vec<u32> = active.indices().collect();
    let scores = p
        .head
        .score_many(&s_l, indices.iter().map(|&i| catalog.embedding(i)))?;
    Ok((indices, scores))
}

fn argmax_lowest_id(indices: &[u32], scores: &[f64]) -> u32 {
    let mut best = (f64::NEG_INFINITY, u32::MAX);
    for (&i, &s) in indices.iter().zip(scores) {
        if s > best.0 {
            best = (s, i);
        }
    }
    best.1
}

/// Train the greedy immediate-reward baseline by interacting with the
/// environment ε-greedily and regressing observed rewards.
pub fn train_dnn(cfg: &TrainConfig, catalog: &Catalog) -> Result<(DnnParams, TrainTrace)> {
    cfg.validate()?;
    let dims = cfg.dims();
    let mut params = DnnParams {
        encoder: EncoderParams::random(
            dims.embed_dim,
            dims.gru_hidden,
            dims.state_dim,
            &mut stream_rng(cfg.seed, Stream::InitDnn),
        ),
        head: EvalHead::random(
            dims.state_dim,
            dims.embed_dim,
            dims.eval_hidden,
            &mut stream_rng(cfg.seed, Stream::InitDnn),
        ),
    };
    let mut buf: ReplayBuffer<DnnSample> = ReplayBuffer::new(cfg.low_capacity);
    let mut opt = Optimizer::new(cfg.optimizer);
    let mut env_root = stream_rng(cfg.seed, Stream::Env);
    let mut policy_rng = stream_rng(cfg.seed, Stream::DnnPolicy);
    let mut replay_rng = stream_rng(cfg.seed, Stream::ReplayLow);

    let warmup_needed = cfg.low_batch.max(cfg.warmup_min);
    let total_steps = (cfg.sessions * cfg.session_len).max(1);
    let mut global_step = 0usize;
    let mut trace = TrainTrace::default();

    for session in 0..cfg.sessions as u32 {
        let user = SyntheticUser::sample_from_catalog(catalog, cfg.user_params(), &mut env_root);
        let env_rng = ChaCha12Rng::from_rng(&mut env_root);
        let mut env = SessionEnv::new(catalog, UserModel::Synthetic(user), cfg.n_window, env_rng);
        env.warm_up(cfg.n_window)?;
        let mut active = ActiveItemSet::full(catalog);
        let (mut sess_reward, mut sess_clicks, mut sess_orders) = (0.0, 0u32, 0u32);
        let mut left = false;
        let mut steps_done = 0u32;

        for t in 0..cfg.session_len as u32 {
            if active.is_empty() {
                break;
            }
            // ε-greedy over predicted immediate reward.
            let eps = cfg.noise_at(global_step as f64 / total_steps as f64) / cfg.bound;
            let explore: f64 = policy_rng.random();
            let idx = if explore < eps {
                let k = policy_rng.random_range(0..active.len());
                active.indices().nth(k).expect("nonempty")
            } else {
                let (indices, scores) =
                    dnn_score(&params, env.state(), &active, catalog, cfg.n_window)?;
                argmax_lowest_id(&indices, &scores)
            };
            active.remove(idx);
            let s_browse: Vec<u32> = env.state().browse.iter().copied().collect();
            let s_click: Vec<u32> = env.state().click.iter().copied().collect();
            let (feedback, r_ex) = env.step(idx)?;
            buf.push(DnnSample {
                browse: s_browse,
                click: s_click,
                item: idx,
                r_ex,
            });
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

            let warm = buf.len() >= warmup_needed;
            let due = global_step % cfg.update_every == 0;
            let mut mse = 0.0;
            let updated = warm && due;
            if updated {
                let batch = buf.sample(cfg.low_batch, &mut replay_rng)?;
                let mut grads = params.zeros_like();
                let n = batch.len() as f64;
                for s in &batch {
                    let bw = HistoryWindow::new(
                        StreamKind::Browse,
                        s.browse.iter().map(|&i| catalog.embedding(i)).collect(),
                    );
                    let cw = HistoryWindow::new(
                        StreamKind::Click,
                        s.click.iter().map(|&i| catalog.embedding(i)).collect(),
                    );
                    let (s_l, enc_cache) = encode_low(&bw, &cw, &params.encoder, cfg.n_window)?;
                    let (q, head_cache) =
                        params.head.forward(&s_l, catalog.embedding(s.item))?;
                    let err = q - s.r_ex;
                    mse += err * err;
                    let dq = 2.0 * err / n;
                    let (ds, _) = params.head.backward(dq, &head_cache, &mut grads.head)?;
                    crate::encoders::encode_backward(
                        &ds,
                        &enc_cache,
                        &params.encoder,
                        &mut grads.encoder,
                    )?;
                }
                mse /= n;
                let grad_views = grads.views();
                let mut param_views = params.views_mut();
                opt.apply(&mut param_views, &grad_views, cfg.critic_lr, None)?;
            }

            trace.steps.push(StepRecord {
                session,
                t,
                t_c: 1,
                item_id: catalog.id(idx),
                feedback,
                r_ex,
                r_in: 0.0,
                action_norm: 0.0,
                goal_norm: 0.0,
                regen: false,
                low_buf: buf.len(),
                high_buf: 0,
                updated,
                lc_loss: mse,
                la_gnorm: 0.0,
                hc_loss: 0.0,
                ha_gnorm: 0.0,
            });
            global_step += 1;
            steps_done += 1;
            if env.is_terminated() {
                break;
            }
        }
        trace.sessions.push(SessionSummary {
            session,
            steps: steps_done,
            reward: sess_reward,
            clicks: sess_clicks,
            orders: sess_orders,
            left,
            high_tx: 0,
        });
    }
    Ok((params, trace))
}

/// Greedy (ε = 0) online evaluation of a trained DNN baseline.
pub fn dnn_online_test(
    params: &DnnParams,
    catalog: &Catalog,
    cfg: &EvalCfg,
    seed: u64,
) -> Result<OnlineReport> {
    run_online_sessions(catalog, cfg, seed, |state, active, catalog| {
        let (indices, scores) = dnn_score(params, state, active, catalog, cfg.n_window)?;
        let idx = argmax_lowest_id(&indices, &scores);
        active.remove(idx);
        Ok(idx)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmKind {
    HrlMg,
    Hrl,
    Ddpg,
    Dnn,
}

impl ArmKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ArmKind::HrlMg => "hrl-mg",
            ArmKind::Hrl => "hrl",
            ArmKind::Ddpg => "ddpg",
            ArmKind::Dnn => "dnn",
        }
    }

    pub fn parse(s: &str) -> Result<ArmKind> {
        match s {
            "hrl-mg" => Ok(ArmKind::HrlMg),
            "hrl" => Ok(ArmKind::Hrl),
            "ddpg" => Ok(ArmKind::Ddpg),
            "dnn" => Ok(ArmKind::Dnn),
            other => Err(CoreError::InvalidParameter(format!(
                "unknown arm '{other}' (expected hrl-mg, hrl, ddpg, or dnn)"
            ))),
        }
    }

    /// The config overrides that define each arm.
    pub fn apply(self, cfg: &mut TrainConfig) {
        match self {
            ArmKind::HrlMg => {
                cfg.high_enabled = true;
            }
            ArmKind::Hrl => {
                cfg.high_enabled = true;
                cfg.num_goals = 1;
            }
            ArmKind::Ddpg => {
                cfg.high_enabled = false;
                cfg.alpha = 0.0;
            }
            ArmKind::Dnn => {}
        }
    }
}

pub struct ArmOutcome {
    pub kind: ArmKind,
    pub seed: u64,
    pub online: OnlineReport,
    pub trace: TrainTrace,
    pub counters: Option<UpdateCounters>,
}

/// Train one comparison arm from `base` (the arm's own overrides
/// applied) and evaluate it online with the arm-independent eval seed.
pub fn run_baseline(kind: ArmKind, base: &TrainConfig, catalog: &Catalog) -> Result<ArmOutcome> {
    let mut cfg = base.clone();
    kind.apply(&mut cfg);
    let eval_cfg = EvalCfg::from_train(&cfg);
    match kind {
        ArmKind::Dnn => {
            let (params, trace) = train_dnn(&cfg, catalog)?;
            let online = dnn_online_test(&params, catalog, &eval_cfg, cfg.seed)?;
            Ok(ArmOutcome {
                kind,
                seed: cfg.seed,
                online,
                trace,
                counters: None,
            })
        }
        _ => {
            let out = run_training(&cfg, catalog)?;
            let online = online_test(&out.low.actor, catalog, &eval_cfg, cfg.seed)?;
            Ok(ArmOutcome {
                kind,
                seed: cfg.seed,
                online,
                trace: out.trace,
                counters: Some(out.counters),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::generate_catalog;

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            embed_dim: 6,
            n_window: 4,
            gru_hidden: 3,
            state_dim: 6,
            eval_hidden: 4,
            period: 5,
            num_goals: 2,
            low_batch: 4,
            high_batch: 2,
            warmup_min: 8,
            sessions: 2,
            session_len: 15,
            n_items: 50,
            n_clusters: 4,
            leave_base: 0.0,
            eval_sessions: 2,
            eval_len: 10,
            ..TrainConfig::default()
        }
    }

    fn catalog_for(cfg: &TrainConfig) -> Catalog {
        generate_catalog(
            cfg.n_items,
            cfg.embed_dim,
            cfg.n_clusters,
            cfg.item_noise,
            &mut stream_rng(777, Stream::Catalog),
        )
        .unwrap()
    }

    #[test]
    fn ddpg_arm_has_no_high_level_transitions() {
        let cfg = tiny_cfg();
        let cat = catalog_for(&cfg);
        let out = run_baseline(ArmKind::Ddpg, &cfg, &cat).unwrap();
        assert!(out.trace.sessions.iter().all(|s| s.high_tx == 0));
        assert!(out.trace.steps.iter().all(|s| s.high_buf == 0));
    }

    #[test]
    fn hrl_arm_is_single_goal_framework() {
        let cfg = tiny_cfg();
        let cat = catalog_for(&cfg);
        let out = run_baseline(ArmKind::Hrl, &cfg, &cat).unwrap();
        // One high transition per period boundary, goals active.
        assert!(out.trace.sessions.iter().all(|s| s.high_tx == 3));
        assert!(out.trace.steps.iter().any(|s| s.goal_norm > 0.0));
    }

    #[test]
    fn dnn_arm_trains_and_evaluates() {
        let cfg = tiny_cfg();
        let cat = catalog_for(&cfg);
        let out = run_baseline(ArmKind::Dnn, &cfg, &cat).unwrap();
        assert_eq!(out.online.sessions.len(), 2);
        assert_eq!(out.trace.sessions.len(), 2);
        assert!(out.trace.steps.iter().all(|s| s.high_buf == 0));
    }

    #[test]
    fn arms_share_eval_seeds() {
        // The same eval seed produces the same users across arms: two
        // arms with identical policies would see identical sessions.
        // Here we check the plumbing by running the same arm twice.
        let cfg = tiny_cfg();
        let cat = catalog_for(&cfg);
        let a = run_baseline(ArmKind::Ddpg, &cfg, &cat).unwrap();
        let b = run_baseline(ArmKind::Ddpg, &cfg, &cat).unwrap();
        assert_eq!(a.online, b.online);
    }
}
