//! Append-only training trace with CSV serialization: one row per
//! environment step plus a per-session summary table.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use crate::env::Feedback;
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub session: u32,
    pub t: u32,
    pub t_c: u32,
    pub item_id: u64,
    pub feedback: Feedback,
    pub r_ex: f64,
    pub r_in: f64,
    pub action_norm: f64,
    pub goal_norm: f64,
    /// Goals were (re)generated on this step.
    pub regen: bool,
    pub low_buf: usize,
    pub high_buf: usize,
    /// Parameter + target updates ran on this step.
    pub updated: bool,
    pub lc_loss: f64,
    pub la_gnorm: f64,
    pub hc_loss: f64,
    pub ha_gnorm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionSummary {
    pub session: u32,
    pub steps: u32,
    pub reward: f64,
    pub clicks: u32,
    pub orders: u32,
    pub left: bool,
    /// High-level transitions emitted for this session, including the
    /// end-of-session flush.
    pub high_tx: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub steps: Vec<StepRecord>,
    pub sessions: Vec<SessionSummary>,
}

pub const STEP_HEADER: &str = "session,t,t_c,item_id,feedback,r_ex,r_in,action_norm,goal_norm,regen,low_buf,high_buf,updated,lc_loss,la_gnorm,hc_loss,ha_gnorm";
pub const SESSION_HEADER: &str = "session,steps,reward,clicks,orders,left,high_tx";

impl TrainTrace {
    pub fn write_steps_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)
            .map_err(|e| CoreError::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| CoreError::io(path.display().to_string(), e);
        writeln!(w, "{STEP_HEADER}").map_err(io_err)?;
        for r in &self.steps {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.session,
                r.t,
                r.t_c,
                r.item_id,
                r.feedback.as_str(),
                r.r_ex,
                r.r_in,
                r.action_norm,
                r.goal_norm,
                r.regen as u8,
                r.low_buf,
                r.high_buf,
                r.updated as u8,
                r.lc_loss,
                r.la_gnorm,
                r.hc_loss,
                r.ha_gnorm,
            )
            .map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;
        Ok(())
    }

    pub fn write_sessions_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)
            .map_err(|e| CoreError::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| CoreError::io(path.display().to_string(), e);
        writeln!(w, "{SESSION_HEADER}").map_err(io_err)?;
        for s in &self.sessions {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                s.session, s.steps, s.reward, s.clicks, s.orders, s.left as u8, s.high_tx
            )
            .map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;
        Ok(())
    }

    pub fn read_steps_csv(path: &Path) -> Result<Vec<StepRecord>> {
        let file = std::fs::File::open(path)
            .map_err(|e| CoreError::io(path.display().to_string(), e))?;
        let reader = std::io::BufReader::new(file);
        let mut lines = reader.lines().enumerate();
        match lines.next() {
            Some((_, Ok(h))) if h == STEP_HEADER => {}
            Some((_, Ok(h))) => {
                return Err(CoreError::Parse {
                    line: 1,
                    msg: format!("unexpected header '{h}'"),
                })
            }
            _ => {
                return Err(CoreError::Parse {
                    line: 1,
                    msg: "empty trace file".into(),
                })
            }
        }
        let mut out = Vec::new();
        for (i, line) in lines {
            let lineno = i + 1;
            let line = line.map_err(|e| CoreError::io(path.display().to_string(), e))?;
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 17 {
                return Err(CoreError::Parse {
                    line: lineno,
                    msg: format!("expected 17 fields, got {}", f.len()),
                });
            }
            let err = |what: &str| CoreError::Parse {
                line: lineno,
                msg: format!("bad {what}"),
            };
            out.push(StepRecord {
                session: f[0].parse().map_err(|_| err("session"))?,
                t: f[1].parse().map_err(|_| err("t"))?,
                t_c: f[2].parse().map_err(|_| err("t_c"))?,
                item_id: f[3].parse().map_err(|_| err("item_id"))?,
                feedback: Feedback::parse(f[4]).ok_or_else(|| err("feedback"))?,
                r_ex: f[5].parse().map_err(|_| err("r_ex"))?,
                r_in: f[6].parse().map_err(|_| err("r_in"))?,
                action_norm: f[7].parse().map_err(|_| err("action_norm"))?,
                goal_norm: f[8].parse().map_err(|_| err("goal_norm"))?,
                regen: f[9] == "1",
                low_buf: f[10].parse().map_err(|_| err("low_buf"))?,
                high_buf: f[11].parse().map_err(|_| err("high_buf"))?,
                updated: f[12] == "1",
                lc_loss: f[13].parse().map_err(|_| err("lc_loss"))?,
                la_gnorm: f[14].parse().map_err(|_| err("la_gnorm"))?,
                hc_loss: f[15].parse().map_err(|_| err("hc_loss"))?,
                ha_gnorm: f[16].parse().map_err(|_| err("ha_gnorm"))?,
            });
        }
        Ok(out)
    }
}
