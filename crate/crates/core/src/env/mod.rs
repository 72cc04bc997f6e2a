//! Interactive session environment.
//!
//! The default backend is a ground-truth synthetic user: a hidden unit
//! preference vector drives click/order probabilities through logistic
//! curves over the preference-item cosine, with preference drift toward
//! ordered items and an optional leave hazard that grows with
//! consecutive skips. A learned feedback simulator can be swapped in as
//! the backend instead.

pub mod logs;
pub mod simulator;

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::catalog::Catalog;
use crate::error::{CoreError, Result};
use crate::numerics::{cosine, sigmoid, Tensor1};

pub use logs::{generate_logs, read_logs, write_logs, LogEvent, LogPolicy, SessionRecord};
pub use simulator::{train_simulator, SimReport, SimTrainConfig, SimulatorParams};

/// User feedback to one recommendation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feedback {
    Skip,
    Click,
    Order,
    Leave,
}

impl Feedback {
    /// External reward: skip 0, click 1, order 5; leave ends the
    /// session with reward 0.
    pub fn reward(self) -> f64 {
        match self {
            Feedback::Skip | Feedback::Leave => 0.0,
            Feedback::Click => 1.0,
            Feedback::Order => 5.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Feedback::Skip => "skip",
            Feedback::Click => "click",
            Feedback::Order => "order",
            Feedback::Leave => "leave",
        }
    }

    pub fn parse(s: &str) -> Option<Feedback> {
        match s {
            "skip" => Some(Feedback::Skip),
            "click" => Some(Feedback::Click),
            "order" => Some(Feedback::Order),
            "leave" => Some(Feedback::Leave),
            _ => None,
        }
    }

    /// Class index for the 3-way feedback prediction task (leave has no
    /// class; the simulator never emits it).
    pub fn class(self) -> Option<usize> {
        match self {
            Feedback::Skip => Some(0),
            Feedback::Click => Some(1),
            Feedback::Order => Some(2),
            Feedback::Leave => None,
        }
    }
}

/// Behavior parameters of the synthetic user model.
#[derive(Debug, Clone, Copy)]
pub struct UserParams {
    /// Click temperature: P(click) = σ(kappa_click·cos + bias_click).
    pub kappa_click: f64,
    pub bias_click: f64,
    /// Order temperature, conditional on click.
    pub kappa_order: f64,
    pub bias_order: f64,
    /// Per-coordinate noise between a user's preference and the catalog
    /// item anchoring it.
    pub user_noise: f64,
    /// Per-coordinate tilt between the click taste and the order taste;
    /// 0 makes both tastes identical.
    pub order_taste_noise: f64,
    /// Preference drift rate toward ordered items.
    pub drift: f64,
    /// Per-step leave hazard increment once `leave_after` consecutive
    /// skips have accumulated; 0 disables leaving.
    pub leave_base: f64,
    pub leave_after: u32,
}

impl Default for UserParams {
    fn default() -> Self {
        UserParams {
            kappa_click: 2.0,
            bias_click: -1.2,
            kappa_order: 6.0,
            bias_order: -4.8,
            user_noise: 0.05,
            order_taste_noise: 0.2,
            drift: 0.05,
            leave_base: 0.02,
            leave_after: 8,
        }
    }
}

/// Hidden ground-truth user: two correlated unit taste vectors (one
/// driving clicks, one driving orders) plus the logistic feedback
/// model. Click interest and purchase interest overlap but are not the
/// same, so conversion events carry information clicks do not.
#[derive(Debug, Clone)]
pub struct SyntheticUser {
    click_taste: Tensor1,
    order_taste: Tensor1,
    params: UserParams,
}

fn tilted<R: Rng>(base: &Tensor1, sigma: f64, rng: &mut R) -> Tensor1 {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut v = base.clone();
    for x in v.data_mut() {
        *x += sigma * normal.sample(rng);
    }
    v.normalized().unwrap_or_else(|_| base.clone())
}

impl SyntheticUser {
    /// Click taste uniform on the unit sphere (no relation to any
    /// catalog structure).
    pub fn sample<R: Rng>(dim: usize, params: UserParams, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let click_taste = loop {
            let v = Tensor1::from_vec((0..dim).map(|_| normal.sample(rng)).collect());
            if let Ok(u) = v.normalized() {
                break u;
            }
        };
        let order_taste = tilted(&click_taste, params.order_taste_noise, rng);
        SyntheticUser {
            click_taste,
            order_taste,
            params,
        }
    }

    /// Click taste anchored near a uniformly-drawn catalog item (so
    /// policies that infer it from behavior can actually satisfy it);
    /// order taste tilted off the click taste. Consumes a fixed number
    /// of draws (one index + 2d normals).
    pub fn sample_from_catalog<R: Rng>(
        catalog: &Catalog,
        params: UserParams,
        rng: &mut R,
    ) -> Self {
        let anchor = rng.random_range(0..catalog.len()) as u32;
        let click_taste = tilted(catalog.unit(anchor), params.user_noise, rng);
        let order_taste = tilted(&click_taste, params.order_taste_noise, rng);
        SyntheticUser {
            click_taste,
            order_taste,
            params,
        }
    }

    /// Both tastes pinned to one vector (tests).
    pub fn with_preference(pref: Tensor1, params: UserParams) -> Result<Self> {
        let u = pref.normalized()?;
        Ok(SyntheticUser {
            click_taste: u.clone(),
            order_taste: u,
            params,
        })
    }

    pub fn preference(&self) -> &Tensor1 {
        &self.click_taste
    }

    pub fn order_preference(&self) -> &Tensor1 {
        &self.order_taste
    }

    /// Draw feedback for one recommended item. Consumes exactly three
    /// uniform draws regardless of outcome, so RNG consumption is
    /// config-independent.
    pub fn feedback<R: Rng>(
        &mut self,
        item_unit: &Tensor1,
        consec_skips: u32,
        allow_leave: bool,
        rng: &mut R,
    ) -> Result<Feedback> {
        let u_leave: f64 = rng.random();
        let u_click: f64 = rng.random();
        let u_order: f64 = rng.random();

        if allow_leave && self.params.leave_base > 0.0 && consec_skips >= self.params.leave_after {
            let hazard = (self.params.leave_base
                * (consec_skips - self.params.leave_after + 1) as f64)
                .min(0.5);
            if u_leave < hazard {
                return Ok(Feedback::Leave);
            }
        }

        let s_click = cosine(&self.click_taste, item_unit)?;
        let p_click = sigmoid(self.params.kappa_click * s_click + self.params.bias_click);
        if u_click < p_click {
            let s_order = cosine(&self.order_taste, item_unit)?;
            let p_order = sigmoid(self.params.kappa_order * s_order + self.params.bias_order);
            if u_order < p_order {
                // Ordering pulls both tastes toward the item.
                let drift = self.params.drift;
                self.click_taste = self
                    .click_taste
                    .add(&item_unit.scale(drift))?
                    .normalized()?;
                self.order_taste = self
                    .order_taste
                    .add(&item_unit.scale(drift))?
                    .normalized()?;
                return Ok(Feedback::Order);
            }
            return Ok(Feedback::Click);
        }
        Ok(Feedback::Skip)
    }
}

/// The three behavior windows that define both agent states, stored as
/// catalog indices, each capped at the window length N.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionState {
    pub browse: VecDeque<u32>,
    pub click: VecDeque<u32>,
    pub order: VecDeque<u32>,
    cap: usize,
}

impl SessionState {
    pub fn new(n_window: usize) -> Self {
        SessionState {
            browse: VecDeque::with_capacity(n_window),
            click: VecDeque::with_capacity(n_window),
            order: VecDeque::with_capacity(n_window),
            cap: n_window,
        }
    }

    fn push(win: &mut VecDeque<u32>, cap: usize, item: u32) {
        if win.len() == cap {
            win.pop_front();
        }
        win.push_back(item);
    }

    /// Window bookkeeping: browse always records the recommendation;
    /// click records clicks and orders; order records orders only.
    /// Leave changes nothing.
    pub fn apply(&mut self, item_index: u32, feedback: Feedback) {
        match feedback {
            Feedback::Leave => {}
            Feedback::Skip => {
                Self::push(&mut self.browse, self.cap, item_index);
            }
            Feedback::Click => {
                Self::push(&mut self.browse, self.cap, item_index);
                Self::push(&mut self.click, self.cap, item_index);
            }
            Feedback::Order => {
                Self::push(&mut self.browse, self.cap, item_index);
                Self::push(&mut self.click, self.cap, item_index);
                Self::push(&mut self.order, self.cap, item_index);
            }
        }
    }

    pub fn resolve<'a>(win: &VecDeque<u32>, catalog: &'a Catalog) -> Vec<&'a Tensor1> {
        win.iter().map(|&i| catalog.embedding(i)).collect()
    }

    pub fn browse_refs<'a>(&self, catalog: &'a Catalog) -> Vec<&'a Tensor1> {
        Self::resolve(&self.browse, catalog)
    }

    pub fn click_refs<'a>(&self, catalog: &'a Catalog) -> Vec<&'a Tensor1> {
        Self::resolve(&self.click, catalog)
    }

    pub fn order_refs<'a>(&self, catalog: &'a Catalog) -> Vec<&'a Tensor1> {
        Self::resolve(&self.order, catalog)
    }
}

/// `update_histories` as a pure step: returns the advanced state.
pub fn update_histories(
    state: &SessionState,
    item_index: u32,
    feedback: Feedback,
) -> SessionState {
    let mut next = state.clone();
    next.apply(item_index, feedback);
    next
}

/// Feedback backend for a session.
#[derive(Debug, Clone)]
pub enum UserModel {
    Synthetic(SyntheticUser),
    Learned(SimulatorParams),
}

/// One live recommendation session against a user model.
pub struct SessionEnv<'a> {
    catalog: &'a Catalog,
    user: UserModel,
    state: SessionState,
    n_window: usize,
    consec_skips: u32,
    terminated: bool,
    rng: ChaCha12Rng,
}

impl<'a> SessionEnv<'a> {
    pub fn new(catalog: &'a Catalog, user: UserModel, n_window: usize, rng: ChaCha12Rng) -> Self {
        SessionEnv {
            catalog,
            user,
            state: SessionState::new(n_window),
            n_window,
            consec_skips: 0,
            terminated: false,
            rng,
        }
    }

    /// Populate the history windows with `steps` random-policy
    /// interactions before the measured session starts. Warm-up cannot
    /// terminate the session and produces no reward.
    pub fn warm_up(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            let idx = self.rng.random_range(0..self.catalog.len()) as u32;
            let feedback = self.draw_feedback(idx, false)?;
            self.state.apply(idx, feedback);
        }
        self.consec_skips = 0;
        Ok(())
    }

    fn draw_feedback(&mut self, item_index: u32, allow_leave: bool) -> Result<Feedback> {
        match &mut self.user {
            UserModel::Synthetic(user) => user.feedback(
                self.catalog.unit(item_index),
                self.consec_skips,
                allow_leave,
                &mut self.rng,
            ),
            UserModel::Learned(sim) => {
                let probs = sim.predict(
                    &self.state.browse_refs(self.catalog),
                    &self.state.click_refs(self.catalog),
                    self.catalog.embedding(item_index),
                    self.n_window,
                )?;
                let u: f64 = self.rng.random();
                Ok(if u < probs[0] {
                    Feedback::Skip
                } else if u < probs[0] + probs[1] {
                    Feedback::Click
                } else {
                    Feedback::Order
                })
            }
        }
    }

    /// Recommend one item: returns the user's feedback and the external
    /// reward, and advances the history windows.
    pub fn step(&mut self, item_index: u32) -> Result<(Feedback, f64)> {
        if self.terminated {
            return Err(CoreError::SessionTerminated);
        }
        let feedback = self.draw_feedback(item_index, true)?;
        match feedback {
            Feedback::Skip => self.consec_skips += 1,
            Feedback::Click | Feedback::Order => self.consec_skips = 0,
            Feedback::Leave => self.terminated = true,
        }
        self.state.apply(item_index, feedback);
        Ok((feedback, feedback.reward()))
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    pub fn catalog(&self) -> &'a Catalog {
        self.catalog
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::generate_catalog;
    use crate::rng::{stream_rng, Stream};

    fn user_params() -> UserParams {
        UserParams::default()
    }

    #[test]
    fn reward_mapping_is_fixed() {
        assert_eq!(Feedback::Skip.reward(), 0.0);
        assert_eq!(Feedback::Click.reward(), 1.0);
        assert_eq!(Feedback::Order.reward(), 5.0);
        assert_eq!(Feedback::Leave.reward(), 0.0);
    }

    #[test]
    fn sharp_positive_user_never_skips() {
        let pref = Tensor1::from_slice(&[1.0, 0.0, 0.0]);
        let mut user = SyntheticUser::with_preference(
            pref.clone(),
            UserParams {
                kappa_click: 1e6,
                bias_click: 0.0,
                ..user_params()
            },
        )
        .unwrap();
        let item = Tensor1::from_slice(&[0.9, 0.1, 0.0]).normalized().unwrap();
        let mut rng = stream_rng(1, Stream::Env);
        for _ in 0..100 {
            let f = user.feedback(&item, 0, true, &mut rng).unwrap();
            assert!(f == Feedback::Click || f == Feedback::Order);
        }
    }

    #[test]
    fn window_updates_follow_feedback_kind() {
        let mut s = SessionState::new(10);
        s.apply(3, Feedback::Skip);
        assert_eq!(s.browse.len(), 1);
        assert_eq!(s.click.len(), 0);
        assert_eq!(s.order.len(), 0);

        s.apply(4, Feedback::Click);
        assert_eq!(s.browse.len(), 2);
        assert_eq!(s.click.len(), 1);
        assert_eq!(s.order.len(), 0);

        s.apply(5, Feedback::Order);
        assert_eq!(s.browse.len(), 3);
        assert_eq!(s.click.len(), 2);
        assert_eq!(s.order.len(), 1);

        let before = s.clone();
        s.apply(6, Feedback::Leave);
        assert_eq!(s, before);
    }

    #[test]
    fn windows_keep_last_n() {
        let mut s = SessionState::new(10);
        for i in 0..11 {
            s.apply(i, Feedback::Click);
        }
        assert_eq!(s.click.len(), 10);
        assert_eq!(*s.click.front().unwrap(), 1);
        assert_eq!(*s.click.back().unwrap(), 10);
    }

    #[test]
    fn update_histories_is_pure() {
        let s = SessionState::new(4);
        let s2 = update_histories(&s, 7, Feedback::Order);
        assert_eq!(s.browse.len(), 0);
        assert_eq!(s2.order.len(), 1);
    }

    #[test]
    fn stepping_a_terminated_session_is_an_error() {
        let cat = generate_catalog(10, 4, 2, 0.2, &mut stream_rng(2, Stream::Catalog)).unwrap();
        let user = SyntheticUser::sample(
            4,
            UserParams {
                leave_base: 1.0,
                leave_after: 0,
                kappa_click: -1e9, // always skip, so leave fires immediately
                ..user_params()
            },
            &mut stream_rng(3, Stream::Env),
        );
        let mut env =
            SessionEnv::new(&cat, UserModel::Synthetic(user), 4, stream_rng(4, Stream::Env));
        let mut terminated = false;
        for i in 0..10u32 {
            let (f, r) = env.step(i).unwrap();
            assert_eq!(r, f.reward());
            if f == Feedback::Leave {
                terminated = true;
                break;
            }
        }
        assert!(terminated, "hazard 0.5 should fire within 10 steps");
        assert!(matches!(env.step(0), Err(CoreError::SessionTerminated)));
    }

    #[test]
    fn environment_is_deterministic_given_seed_and_actions() {
        let cat = generate_catalog(50, 6, 5, 0.2, &mut stream_rng(5, Stream::Catalog)).unwrap();
        let run = || {
            let user = SyntheticUser::sample(6, user_params(), &mut stream_rng(6, Stream::Env));
            let mut env =
                SessionEnv::new(&cat, UserModel::Synthetic(user), 5, stream_rng(7, Stream::Env));
            env.warm_up(5).unwrap();
            let mut out = Vec::new();
            for i in 0..20u32 {
                if env.is_terminated() {
                    break;
                }
                let (f, r) = env.step(i).unwrap();
                out.push((f, r.to_bits()));
            }
            (out, env.state().clone())
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn conversion_is_sparser_than_clicks_under_random_policy() {
        let cat =
            generate_catalog(300, 16, 10, 0.15, &mut stream_rng(8, Stream::Catalog)).unwrap();
        let mut clicks = 0u32;
        let mut orders = 0u32;
        let mut steps = 0u32;
        let mut rng = stream_rng(9, Stream::Env);
        for s in 0..40 {
            let user =
                SyntheticUser::sample(16, user_params(), &mut stream_rng(100 + s, Stream::Env));
            let mut env = SessionEnv::new(
                &cat,
                UserModel::Synthetic(user),
                10,
                stream_rng(200 + s, Stream::Env),
            );
            for _ in 0..50 {
                if env.is_terminated() {
                    break;
                }
                let idx = rng.random_range(0..cat.len()) as u32;
                let (f, _) = env.step(idx).unwrap();
                steps += 1;
                match f {
                    Feedback::Click => clicks += 1,
                    Feedback::Order => {
                        clicks += 1;
                        orders += 1;
                    }
                    _ => {}
                }
            }
        }
        let click_rate = clicks as f64 / steps as f64;
        let order_rate = orders as f64 / steps as f64;
        assert!(click_rate < 0.5, "click rate {click_rate}");
        assert!(
            order_rate < 0.15 * click_rate.max(1e-9),
            "order rate {order_rate} vs click rate {click_rate}"
        );
        assert!(clicks > 0);
    }
}
