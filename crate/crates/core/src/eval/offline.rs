//! Offline rerank test: the trained low-level actor reorders the items
//! of a logged session; recorded feedback is replayed to advance the
//! state, and the resulting ranking is scored by MAP and NDCG against
//! the recorded rewards.

use std::io::{BufWriter, Write};
use std::path::Path;

use crate::catalog::{map_action, ActiveItemSet, Catalog, ItemId};
use crate::encoders::{encode_low, HistoryWindow, StreamKind};
use crate::env::{SessionRecord, SessionState};
use crate::error::{CoreError, Result};
use crate::eval::metrics::{map_score, ndcg_at_k};
use crate::low_agent::LowActorParams;

#[derive(Debug, Clone)]
pub struct OfflineSessionResult {
    pub session_id: u64,
    pub ranked_ids: Vec<ItemId>,
    pub ranked_rewards: Vec<f64>,
    pub map: Option<f64>,
    pub ndcg20: Option<f64>,
    pub ndcg40: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct OfflineReport {
    pub map: f64,
    pub ndcg20: f64,
    pub ndcg40: f64,
    pub sessions_scored: usize,
    /// Sessions without any positive reward, excluded from the means.
    pub sessions_skipped: usize,
}

impl OfflineReport {
    pub fn write_csv(&self, path: &Path, per_session: &[OfflineSessionResult]) -> Result<()> {
        let file = std::fs::File::create(path)
            .map_err(|e| CoreError::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| CoreError::io(path.display().to_string(), e);
        writeln!(w, "session_id,items,map,ndcg20,ndcg40").map_err(io_err)?;
        for s in per_session {
            let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{}",
                s.session_id,
                s.ranked_ids.len(),
                fmt(s.map),
                fmt(s.ndcg20),
                fmt(s.ndcg40)
            )
            .map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;
        Ok(())
    }

    pub fn summary_text(&self) -> String {
        format!(
            "{{\"map\": {}, \"ndcg20\": {}, \"ndcg40\": {}, \"sessions_scored\": {}, \"sessions_skipped\": {}}}\n",
            self.map, self.ndcg20, self.ndcg40, self.sessions_scored, self.sessions_skipped
        )
    }
}

/// Rerank one session. Starting from empty histories, repeatedly encode
/// the state, map the actor's virtual action onto the session's
/// remaining items, replay that item's recorded feedback, and remove
/// it. The output is a permutation of the session's (deduplicated)
/// items.
pub fn offline_rerank(
    actor: &LowActorParams,
    record: &SessionRecord,
    catalog: &Catalog,
    n_window: usize,
    bound: f64,
) -> Result<OfflineSessionResult> {
    if record.events.is_empty() {
        return Err(CoreError::EmptyInput("offline session"));
    }
    // First occurrence wins when a log repeats an item id.
    let mut feedback_of = std::collections::HashMap::new();
    let mut indices = Vec::new();
    for ev in &record.events {
        let idx = catalog.index_of(ev.item_id).ok_or_else(|| {
            CoreError::InvalidParameter(format!("log item {} not in catalog", ev.item_id))
        })?;
        if feedback_of.insert(idx, ev.feedback).is_none() {
            indices.push(idx);
        }
    }

    let mut active = ActiveItemSet::from_indices(catalog, &indices);
    let mut state = SessionState::new(n_window);
    let mut ranked_ids = Vec::with_capacity(indices.len());
    let mut ranked_rewards = Vec::with_capacity(indices.len());

    while !active.is_empty() {
        let browses = state.browse_refs(catalog);
        let clicks = state.click_refs(catalog);
        let bw = HistoryWindow::new(StreamKind::Browse, browses);
        let cw = HistoryWindow::new(StreamKind::Click, clicks);
        let (s_l, _) = encode_low(&bw, &cw, &actor.encoder, n_window)?;
        let (a_hat, _) = actor.head.forward(&s_l, bound)?;
        // A cold start (empty windows, zero biases) can emit an exactly
        // zero action; every cosine ties, so the lowest id wins.
        let (id, idx) = if a_hat.norm() == 0.0 {
            let idx = active.indices().next().expect("nonempty active set");
            active.remove(idx);
            (catalog.id(idx), idx)
        } else {
            map_action(&a_hat, catalog, &mut active)?
        };
        let feedback = feedback_of[&idx];
        ranked_ids.push(id);
        ranked_rewards.push(feedback.reward());
        state.apply(idx, feedback);
    }

    Ok(OfflineSessionResult {
        session_id: record.session_id,
        map: map_score(&ranked_rewards),
        ndcg20: ndcg_at_k(&ranked_rewards, 20),
        ndcg40: ndcg_at_k(&ranked_rewards, 40),
        ranked_ids,
        ranked_rewards,
    })
}

/// Rerank every session and average the defined metrics; sessions with
/// no positive recorded reward are counted but excluded.
pub fn offline_test(
    actor: &LowActorParams,
    records: &[SessionRecord],
    catalog: &Catalog,
    n_window: usize,
    bound: f64,
) -> Result<(OfflineReport, Vec<OfflineSessionResult>)> {
    if records.is_empty() {
        return Err(CoreError::EmptyInput("offline records"));
    }
    let mut per_session = Vec::with_capacity(records.len());
    let (mut map_sum, mut n20_sum, mut n40_sum) = (0.0, 0.0, 0.0);
    let mut scored = 0usize;
    let mut skipped = 0usize;
    for record in records {
        let r = offline_rerank(actor, record, catalog, n_window, bound)?;
        match (r.map, r.ndcg20, r.ndcg40) {
            (Some(m), Some(n20), Some(n40)) => {
                map_sum += m;
                n20_sum += n20;
                n40_sum += n40;
                scored += 1;
            }
            _ => skipped += 1,
        }
        per_session.push(r);
    }
    let denom = scored.max(1) as f64;
    Ok((
        OfflineReport {
            map: map_sum / denom,
            ndcg20: n20_sum / denom,
            ndcg40: n40_sum / denom,
            sessions_scored: scored,
            sessions_skipped: skipped,
        },
        per_session,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::generate_catalog;
    use crate::env::{Feedback, LogEvent};
    use crate::heads::NetDims;
    use crate::low_agent::LowParams;
    use crate::rng::{stream_rng, Stream};

    fn setup() -> (Catalog, LowParams) {
        let cat = generate_catalog(30, 5, 3, 0.2, &mut stream_rng(1, Stream::Catalog)).unwrap();
        let dims = NetDims {
            embed_dim: 5,
            gru_hidden: 3,
            state_dim: 5,
            eval_hidden: 4,
        };
        let low = LowParams::new(dims, 1.0, &mut stream_rng(2, Stream::InitLow));
        (cat, low)
    }

    fn record(items: &[(u64, Feedback)]) -> SessionRecord {
        SessionRecord {
            session_id: 0,
            events: items
                .iter()
                .enumerate()
                .map(|(t, &(item_id, feedback))| LogEvent {
                    t: t as u32,
                    item_id,
                    feedback,
                })
                .collect(),
        }
    }

    #[test]
    fn output_is_a_permutation_of_session_items() {
        let (cat, low) = setup();
        let rec = record(&[
            (3, Feedback::Skip),
            (7, Feedback::Click),
            (11, Feedback::Skip),
            (19, Feedback::Order),
            (23, Feedback::Skip),
        ]);
        let out = offline_rerank(&low.actor, &rec, &cat, 4, 1.0).unwrap();
        let mut got: Vec<u64> = out.ranked_ids.clone();
        got.sort_unstable();
        assert_eq!(got, vec![3, 7, 11, 19, 23]);
    }

    #[test]
    fn single_item_session() {
        let (cat, low) = setup();
        let rec = record(&[(5, Feedback::Click)]);
        let out = offline_rerank(&low.actor, &rec, &cat, 4, 1.0).unwrap();
        assert_eq!(out.ranked_ids, vec![5]);
        assert_eq!(out.map, Some(1.0));
        assert_eq!(out.ndcg20, Some(1.0));
    }

    #[test]
    fn all_zero_sessions_are_skipped_in_aggregation() {
        let (cat, low) = setup();
        let zero = record(&[(1, Feedback::Skip), (2, Feedback::Skip)]);
        let positive = record(&[(3, Feedback::Click), (4, Feedback::Skip)]);
        let (report, per) =
            offline_test(&low.actor, &[zero, positive], &cat, 4, 1.0).unwrap();
        assert_eq!(report.sessions_scored, 1);
        assert_eq!(report.sessions_skipped, 1);
        assert!(per[0].map.is_none());
    }

    #[test]
    fn ideal_rerank_of_hand_case_scores_one() {
        // An actor aligned exactly with the order item ranks it first.
        let (cat, mut low) = setup();
        use crate::encoders::EncoderParams;
        low.actor.encoder = EncoderParams::zeros(5, 3, 5);
        low.actor.head = crate::heads::BoundedHead::zeros(5, 5);
        // Constant virtual action equal to item 19's direction.
        let target = cat.embedding(cat.index_of(19).unwrap());
        for (i, v) in target.data().iter().enumerate() {
            // atanh of a scaled-down copy keeps tanh in range.
            low.actor.head.b[i] = (v * 0.5).atanh();
        }
        let rec = record(&[
            (3, Feedback::Skip),
            (7, Feedback::Skip),
            (19, Feedback::Order),
        ]);
        let out = offline_rerank(&low.actor, &rec, &cat, 4, 1.0).unwrap();
        assert_eq!(out.ranked_ids[0], 19);
        assert_eq!(out.ndcg20, Some(1.0));
        assert_eq!(out.map, Some(1.0));
    }
}
