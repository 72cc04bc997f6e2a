//! Session log generation and the line-delimited log file format:
//! `<session_id>\t<t>\t<item_id>\t<skip|click|order|leave>`.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::catalog::{ActiveItemSet, Catalog, ItemId};
use crate::env::{Feedback, SessionEnv, SyntheticUser, UserModel, UserParams};
use crate::error::{CoreError, Result};
use crate::numerics::Tensor1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogEvent {
    pub t: u32,
    pub item_id: ItemId,
    pub feedback: Feedback,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionRecord {
    pub session_id: u64,
    pub events: Vec<LogEvent>,
}

/// Behavior policy used to produce logs.
#[derive(Debug, Clone, Copy)]
pub enum LogPolicy {
    /// Uniform over the remaining items.
    Random,
    /// With probability 1−epsilon, the item most similar to the mean of
    /// the click window (random until the first click exists).
    HeuristicGreedy { epsilon: f64 },
}

impl LogPolicy {
    pub fn parse(s: &str) -> Result<LogPolicy> {
        match s {
            "random" => Ok(LogPolicy::Random),
            "greedy" => Ok(LogPolicy::HeuristicGreedy { epsilon: 0.2 }),
            other => Err(CoreError::InvalidParameter(format!(
                "unknown log policy '{other}' (expected random or greedy)"
            ))),
        }
    }
}

fn pick_random<R: Rng>(active: &ActiveItemSet, rng: &mut R) -> u32 {
    let k = rng.random_range(0..active.len());
    active.indices().nth(k).expect("nonempty active set")
}

fn pick_greedy(catalog: &Catalog, active: &ActiveItemSet, clicks: &[&Tensor1]) -> Option<u32> {
    if clicks.is_empty() {
        return None;
    }
    let dim = catalog.dim();
    let mut mean = Tensor1::zeros(dim);
    for c in clicks {
        mean.add_assign(c);
    }
    if mean.norm() == 0.0 {
        return None;
    }
    let mut best: Option<(f64, u32)> = None;
    for idx in active.indices() {
        let score = mean.dot(catalog.unit(idx)).ok()?;
        if best.map_or(true, |(s, _)| score > s) {
            best = Some((score, idx));
        }
    }
    best.map(|(_, i)| i)
}

/// Roll out `n_sessions` sessions of up to `session_len` steps under the
/// given policy and user model. Deterministic per seed; sessions start
/// with empty histories so replaying a log reconstructs the states the
/// policy saw.
pub fn generate_logs(
    n_sessions: usize,
    session_len: usize,
    catalog: &Catalog,
    policy: LogPolicy,
    user_params: UserParams,
    seed: u64,
) -> Result<Vec<SessionRecord>> {
    let mut root = ChaCha12Rng::seed_from_u64(seed);
    root.set_stream(crate::rng::Stream::Logs as u64);
    let mut records = Vec::with_capacity(n_sessions);

    for session_id in 0..n_sessions as u64 {
        let user = SyntheticUser::sample_from_catalog(catalog, user_params, &mut root);
        let env_rng = ChaCha12Rng::from_rng(&mut root);
        let mut policy_rng = ChaCha12Rng::from_rng(&mut root);
        let mut env = SessionEnv::new(catalog, UserModel::Synthetic(user), 10, env_rng);
        let mut active = ActiveItemSet::full(catalog);
        let mut events = Vec::new();

        for t in 0..session_len as u32 {
            if env.is_terminated() || active.is_empty() {
                break;
            }
            let idx = match policy {
                LogPolicy::Random => pick_random(&active, &mut policy_rng),
                LogPolicy::HeuristicGreedy { epsilon } => {
                    let explore: f64 = policy_rng.random();
                    if explore < epsilon {
                        pick_random(&active, &mut policy_rng)
                    } else {
                        let clicks = env.state().click_refs(catalog);
                        pick_greedy(catalog, &active, &clicks)
                            .unwrap_or_else(|| pick_random(&active, &mut policy_rng))
                    }
                }
            };
            active.remove(idx);
            let (feedback, _) = env.step(idx)?;
            events.push(LogEvent {
                t,
                item_id: catalog.id(idx),
                feedback,
            });
        }
        records.push(SessionRecord { session_id, events });
    }
    Ok(records)
}

pub fn write_logs(path: &Path, records: &[SessionRecord]) -> Result<()> {
    let file =
        std::fs::File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    for record in records {
        for ev in &record.events {
            writeln!(
                w,
                "{}\t{}\t{}\t{}",
                record.session_id,
                ev.t,
                ev.item_id,
                ev.feedback.as_str()
            )
            .map_err(|e| CoreError::io(path.display().to_string(), e))?;
        }
    }
    w.flush()
        .map_err(|e| CoreError::io(path.display().to_string(), e))?;
    Ok(())
}

/// Parse a log file back into session records. Lines must be grouped by
/// session; malformed lines report their line number.
pub fn read_logs(path: &Path) -> Result<Vec<SessionRecord>> {
    let file =
        std::fs::File::open(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let reader = std::io::BufReader::new(file);
    let mut records: Vec<SessionRecord> = Vec::new();

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| CoreError::io(path.display().to_string(), e))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(CoreError::Parse {
                line: lineno,
                msg: format!("expected 4 tab-separated fields, got {}", fields.len()),
            });
        }
        let session_id: u64 = fields[0].parse().map_err(|_| CoreError::Parse {
            line: lineno,
            msg: format!("bad session id '{}'", fields[0]),
        })?;
        let t: u32 = fields[1].parse().map_err(|_| CoreError::Parse {
            line: lineno,
            msg: format!("bad step index '{}'", fields[1]),
        })?;
        let item_id: ItemId = fields[2].parse().map_err(|_| CoreError::Parse {
            line: lineno,
            msg: format!("bad item id '{}'", fields[2]),
        })?;
        let feedback = Feedback::parse(fields[3]).ok_or(CoreError::Parse {
            line: lineno,
            msg: format!("bad feedback '{}'", fields[3]),
        })?;

        let event = LogEvent {
            t,
            item_id,
            feedback,
        };
        match records.last_mut() {
            Some(r) if r.session_id == session_id => r.events.push(event),
            _ => records.push(SessionRecord {
                session_id,
                events: vec![event],
            }),
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::generate_catalog;
    use crate::rng::{stream_rng, Stream};

    fn cat() -> Catalog {
        generate_catalog(120, 8, 6, 0.2, &mut stream_rng(1, Stream::Catalog)).unwrap()
    }

    #[test]
    fn zero_sessions_give_empty_logs() {
        let cat = cat();
        let logs =
            generate_logs(0, 10, &cat, LogPolicy::Random, UserParams::default(), 3).unwrap();
        assert!(logs.is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let cat = cat();
        let a = generate_logs(5, 20, &cat, LogPolicy::Random, UserParams::default(), 9).unwrap();
        let b = generate_logs(5, 20, &cat, LogPolicy::Random, UserParams::default(), 9).unwrap();
        assert_eq!(a, b);
        let c = generate_logs(5, 20, &cat, LogPolicy::Random, UserParams::default(), 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn items_are_unique_within_a_session_and_leave_is_terminal() {
        let cat = cat();
        let logs = generate_logs(
            20,
            40,
            &cat,
            LogPolicy::Random,
            UserParams {
                leave_base: 0.05,
                leave_after: 3,
                ..UserParams::default()
            },
            4,
        )
        .unwrap();
        for rec in &logs {
            let mut seen = std::collections::HashSet::new();
            for (i, ev) in rec.events.iter().enumerate() {
                assert!(seen.insert(ev.item_id), "repeated item in session");
                if ev.feedback == Feedback::Leave {
                    assert_eq!(i, rec.events.len() - 1, "leave must be terminal");
                }
            }
            for pair in rec.events.windows(2) {
                assert!(pair[0].t <= pair[1].t);
            }
        }
    }

    #[test]
    fn round_trip_through_file_is_exact() {
        let cat = cat();
        let logs =
            generate_logs(8, 25, &cat, LogPolicy::HeuristicGreedy { epsilon: 0.3 }, UserParams::default(), 5)
                .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sessions.log");
        write_logs(&path, &logs).unwrap();
        let back = read_logs(&path).unwrap();
        assert_eq!(logs, back);

        // A second write of the parsed records is byte-identical.
        let path2 = dir.path().join("sessions2.log");
        write_logs(&path2, &back).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.log");
        std::fs::write(&path, "0\t0\t5\tclick\n0\t1\t6\n").unwrap();
        match read_logs(&path) {
            Err(CoreError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }

        std::fs::write(&path, "0\t0\t5\tpurchase\n").unwrap();
        assert!(matches!(read_logs(&path), Err(CoreError::Parse { line: 1, .. })));
    }

    #[test]
    fn random_policy_logs_are_conversion_sparse() {
        let cat = generate_catalog(500, 16, 10, 0.15, &mut stream_rng(2, Stream::Catalog)).unwrap();
        let logs =
            generate_logs(200, 30, &cat, LogPolicy::Random, UserParams::default(), 6).unwrap();
        let mut steps = 0usize;
        let mut clicks = 0usize;
        let mut orders = 0usize;
        for rec in &logs {
            for ev in &rec.events {
                steps += 1;
                match ev.feedback {
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
        assert!(order_rate < click_rate && click_rate < 1.0);
        assert!(order_rate < 0.15 * click_rate, "orders {order_rate} clicks {click_rate}");
    }
}
