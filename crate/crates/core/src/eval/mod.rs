//! Evaluation: online and offline tests, ranking metrics, comparison
//! arms, and parameter-sensitivity sweeps.

pub mod baselines;
pub mod metrics;
pub mod offline;
pub mod online;
pub mod sweep;

pub use baselines::{dnn_online_test, run_baseline, train_dnn, ArmKind, ArmOutcome, DnnParams};
pub use metrics::{map_score, ndcg_at_k};
pub use offline::{offline_rerank, offline_test, OfflineReport, OfflineSessionResult};
pub use online::{online_test, EvalCfg, OnlineReport, OnlineSessionStats};
pub use sweep::{run_sweep, write_sweep_csvs, SweepArm, SweepParam};
