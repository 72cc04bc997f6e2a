//! Dual-GRU sequence encoders with a linear merge.
//!
//! Each agent state is produced from two behavior streams: the
//! high-level state from (click, order) histories, the low-level state
//! from (browse, click) histories. Each stream runs through its own GRU
//! over a fixed window of the `n_window` most recent item embeddings
//! (zero-padded at the front when history is short); the two final
//! hidden states are merged linearly:
//!   s = W_a h_a + W_b h_b + bias

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::numerics::gru::{gru_step_backward, gru_step_cached, GruCellParams, GruStepCache};
use crate::numerics::params::impl_param_set;
use crate::numerics::{Tensor1, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Browse,
    Click,
    Order,
}

/// Chronological window (oldest first) of up to `n_window` item
/// embeddings of one behavior stream.
#[derive(Debug, Clone)]
pub struct HistoryWindow<'a> {
    pub kind: StreamKind,
    pub items: Vec<&'a Tensor1>,
}

impl<'a> HistoryWindow<'a> {
    pub fn new(kind: StreamKind, items: Vec<&'a Tensor1>) -> Self {
        HistoryWindow { kind, items }
    }

    pub fn empty(kind: StreamKind) -> Self {
        HistoryWindow { kind, items: Vec::new() }
    }
}

#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub gru_a: GruCellParams,
    pub gru_b: GruCellParams,
    pub w_a: Tensor2,
    pub w_b: Tensor2,
    pub bias: Tensor1,
}

impl_param_set!(EncoderParams { gru_a, gru_b, w_a, w_b, bias });

impl EncoderParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize, state_dim: usize) -> Self {
        EncoderParams {
            gru_a: GruCellParams::zeros(input_dim, hidden_dim),
            gru_b: GruCellParams::zeros(input_dim, hidden_dim),
            w_a: Tensor2::zeros(state_dim, hidden_dim),
            w_b: Tensor2::zeros(state_dim, hidden_dim),
            bias: Tensor1::zeros(state_dim),
        }
    }

    pub fn random<R: Rng>(
        input_dim: usize,
        hidden_dim: usize,
        state_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim, state_dim);
        p.gru_a = GruCellParams::random(input_dim, hidden_dim, rng);
        p.gru_b = GruCellParams::random(input_dim, hidden_dim, rng);
        let s = 1.0 / (hidden_dim as f64).sqrt();
        for m in [&mut p.w_a, &mut p.w_b] {
            for v in m.data_mut() {
                *v = rng.random_range(-s..s);
            }
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.gru_a.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.gru_a.hidden_dim()
    }

    pub fn state_dim(&self) -> usize {
        self.bias.len()
    }
}

/// Per-stream unroll record kept for the backward pass.
#[derive(Debug)]
pub struct EncodeCache {
    caches_a: Vec<GruStepCache>,
    caches_b: Vec<GruStepCache>,
    h_a: Tensor1,
    h_b: Tensor1,
}

fn run_stream(
    window: &HistoryWindow<'_>,
    gru: &GruCellParams,
    n_window: usize,
) -> Result<(Tensor1, Vec<GruStepCache>)> {
    if window.items.len() > n_window {
        return Err(CoreError::ShapeMismatch {
            op: "encode",
            expected: format!("<= {n_window} items"),
            got: window.items.len().to_string(),
        });
    }
    let zero = Tensor1::zeros(gru.input_dim());
    let pad = n_window - window.items.len();
    let mut h = Tensor1::zeros(gru.hidden_dim());
    let mut caches = Vec::with_capacity(n_window);
    for t in 0..n_window {
        let x = if t < pad { &zero } else { window.items[t - pad] };
        let (h_next, cache) = gru_step_cached(x, &h, gru)?;
        caches.push(cache);
        h = h_next;
    }
    Ok((h, caches))
}

/// Encode two behavior streams into a state vector. The caller fixes
/// which stream is which: (click, order) for the high-level state,
/// (browse, click) for the low-level state.
pub fn encode(
    first: &HistoryWindow<'_>,
    second: &HistoryWindow<'_>,
    p: &EncoderParams,
    n_window: usize,
) -> Result<(Tensor1, EncodeCache)> {
    let (h_a, caches_a) = run_stream(first, &p.gru_a, n_window)?;
    let (h_b, caches_b) = run_stream(second, &p.gru_b, n_window)?;
    let mut s = p.w_a.matvec(&h_a)?;
    s.add_assign(&p.w_b.matvec(&h_b)?);
    s.add_assign(&p.bias);
    Ok((
        s,
        EncodeCache {
            caches_a,
            caches_b,
            h_a,
            h_b,
        },
    ))
}

/// High-level state s^h from (click, order) windows.
pub fn encode_high(
    clicks: &HistoryWindow<'_>,
    orders: &HistoryWindow<'_>,
    p: &EncoderParams,
    n_window: usize,
) -> Result<(Tensor1, EncodeCache)> {
    expect_kind(clicks, StreamKind::Click, "encode_high first")?;
    expect_kind(orders, StreamKind::Order, "encode_high second")?;
    encode(clicks, orders, p, n_window)
}

/// Low-level state s^l from (browse, click) windows.
pub fn encode_low(
    browses: &HistoryWindow<'_>,
    clicks: &HistoryWindow<'_>,
    p: &EncoderParams,
    n_window: usize,
) -> Result<(Tensor1, EncodeCache)> {
    expect_kind(browses, StreamKind::Browse, "encode_low first")?;
    expect_kind(clicks, StreamKind::Click, "encode_low second")?;
    encode(browses, clicks, p, n_window)
}

fn expect_kind(w: &HistoryWindow<'_>, kind: StreamKind, what: &'static str) -> Result<()> {
    if w.kind != kind {
        return Err(CoreError::InvalidParameter(format!(
            "{what}: expected {kind:?} window, got {:?}",
            w.kind
        )));
    }
    Ok(())
}

/// Backward through `encode`: accumulate dL/d(params) into `grads`
/// given dL/ds. Input-item gradients are discarded (embeddings are
/// fixed, not trained).
pub fn encode_backward(
    ds: &Tensor1,
    cache: &EncodeCache,
    p: &EncoderParams,
    grads: &mut EncoderParams,
) -> Result<()> {
    grads.w_a.add_outer(ds, &cache.h_a);
    grads.w_b.add_outer(ds, &cache.h_b);
    grads.bias.add_assign(ds);

    let mut dh = p.w_a.matvec_t(ds)?;
    for step in cache.caches_a.iter().rev() {
        let (_dx, dh_prev) = gru_step_backward(&dh, step, &p.gru_a, &mut grads.gru_a)?;
        dh = dh_prev;
    }
    let mut dh = p.w_b.matvec_t(ds)?;
    for step in cache.caches_b.iter().rev() {
        let (_dx, dh_prev) = gru_step_backward(&dh, step, &p.gru_b, &mut grads.gru_b)?;
        dh = dh_prev;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::grad_check;
    use crate::numerics::gru::gru_step;
    use crate::numerics::params::ParamSet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn window<'a>(kind: StreamKind, items: &'a [Tensor1]) -> HistoryWindow<'a> {
        HistoryWindow::new(kind, items.iter().collect())
    }

    #[test]
    fn zero_params_yield_bias() {
        let p = EncoderParams::zeros(3, 2, 4);
        let items = [Tensor1::from_slice(&[1.0, 2.0, 3.0])];
        let clicks = window(StreamKind::Click, &items);
        let orders = HistoryWindow::empty(StreamKind::Order);
        let (s, _) = encode_high(&clicks, &orders, &p, 5).unwrap();
        assert_eq!(s.data(), p.bias.data());
    }

    #[test]
    fn deterministic_across_calls() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let p = EncoderParams::random(3, 2, 4, &mut rng);
        let items: Vec<Tensor1> = (0..4)
            .map(|i| Tensor1::from_slice(&[i as f64, 0.5, -0.25]))
            .collect();
        let a = encode(
            &window(StreamKind::Click, &items[..2]),
            &window(StreamKind::Order, &items[2..]),
            &p,
            4,
        )
        .unwrap()
        .0;
        let b = encode(
            &window(StreamKind::Click, &items[..2]),
            &window(StreamKind::Order, &items[2..]),
            &p,
            4,
        )
        .unwrap()
        .0;
        assert_eq!(a, b);
    }

    #[test]
    fn matches_stepwise_gru_evaluation() {
        // N=2, H=2, d=2: unroll by hand through gru_step and merge.
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let p = EncoderParams::random(2, 2, 2, &mut rng);
        let x1 = Tensor1::from_slice(&[0.4, -0.3]);
        let x2 = Tensor1::from_slice(&[-0.1, 0.8]);
        let y1 = Tensor1::from_slice(&[0.2, 0.2]);
        let y2 = Tensor1::from_slice(&[-0.6, 0.05]);

        let h0 = Tensor1::zeros(2);
        let ha1 = gru_step(&x1, &h0, &p.gru_a).unwrap();
        let ha2 = gru_step(&x2, &ha1, &p.gru_a).unwrap();
        let hb1 = gru_step(&y1, &h0, &p.gru_b).unwrap();
        let hb2 = gru_step(&y2, &hb1, &p.gru_b).unwrap();
        let mut expected = p.w_a.matvec(&ha2).unwrap();
        expected.add_assign(&p.w_b.matvec(&hb2).unwrap());
        expected.add_assign(&p.bias);

        let xs = [x1, x2];
        let ys = [y1, y2];
        let (s, _) = encode(
            &window(StreamKind::Click, &xs),
            &window(StreamKind::Order, &ys),
            &p,
            2,
        )
        .unwrap();
        for i in 0..2 {
            assert!((s[i] - expected[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn order_sensitivity() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let p = EncoderParams::random(2, 3, 2, &mut rng);
        let a = Tensor1::from_slice(&[1.0, 0.0]);
        let b = Tensor1::from_slice(&[0.0, 1.0]);
        let fwd = [a.clone(), b.clone()];
        let rev = [b, a];
        let empty = HistoryWindow::empty(StreamKind::Click);
        let s1 = encode(&window(StreamKind::Browse, &fwd), &empty, &p, 2)
            .unwrap()
            .0;
        let s2 = encode(&window(StreamKind::Browse, &rev), &empty, &p, 2)
            .unwrap()
            .0;
        assert!(s1.data().iter().zip(s2.data()).any(|(x, y)| (x - y).abs() > 1e-9));
    }

    #[test]
    fn window_kind_is_checked() {
        let p = EncoderParams::zeros(2, 2, 2);
        let w = HistoryWindow::empty(StreamKind::Browse);
        let o = HistoryWindow::empty(StreamKind::Order);
        assert!(encode_high(&w, &o, &p, 3).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let p = EncoderParams::random(3, 2, 2, &mut rng);
        let items: Vec<Tensor1> = (0..3)
            .map(|_| {
                Tensor1::from_vec((0..3).map(|_| rng.random_range(-1.0..1.0_f64)).collect())
            })
            .collect();
        let probe = Tensor1::from_slice(&[0.7, -1.3]);

        // loss = probe · s, so dL/ds = probe.
        let loss = |p: &EncoderParams| -> crate::error::Result<f64> {
            let (s, _) = encode(
                &HistoryWindow::new(StreamKind::Browse, items[..2].iter().collect()),
                &HistoryWindow::new(StreamKind::Click, items[2..].iter().collect()),
                p,
                3,
            )?;
            probe.dot(&s)
        };

        let mut params = p.clone();
        let (_, cache) = encode(
            &HistoryWindow::new(StreamKind::Browse, items[..2].iter().collect()),
            &HistoryWindow::new(StreamKind::Click, items[2..].iter().collect()),
            &params,
            3,
        )
        .unwrap();
        let mut analytic = params.zeros_like();
        encode_backward(&probe, &cache, &params, &mut analytic).unwrap();

        let report = grad_check(&mut params, &analytic, loss, 1e-5).unwrap();
        assert!(
            report.max_rel_err <= 1e-4,
            "max rel err {} at {}[{}]",
            report.max_rel_err,
            report.worst_param,
            report.worst_index
        );
    }
}
