pub mod config;
pub mod run;
pub mod trace;

pub use config::TrainConfig;
pub use run::{run_training, TrainOutcome};
pub use trace::{SessionSummary, StepRecord, TrainTrace};
