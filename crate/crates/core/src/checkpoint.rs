//! Self-describing text checkpoints of all trainable parameters (online
//! and target copies). Values are serialized as raw IEEE-754 bit
//! patterns, so a save/load cycle is exact.
//!
//! Format:
//! ```text
//! hrlrec-checkpoint v1
//! meta <key> <value>
//! tensor <name> <ndims> <dims...>
//! data <hex64> <hex64> ...
//! ```

use std::collections::HashMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::heads::NetDims;
use crate::high_agent::HighParams;
use crate::low_agent::LowParams;
use crate::numerics::params::ParamSet;

const MAGIC: &str = "hrlrec-checkpoint v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub dims: NetDims,
    pub n_window: usize,
    pub num_goals: usize,
    pub bound_bits: u64,
}

impl CheckpointMeta {
    pub fn bound(&self) -> f64 {
        f64::from_bits(self.bound_bits)
    }
}

fn zeroed_low(dims: NetDims, bound: f64) -> LowParams {
    use crate::encoders::EncoderParams;
    use crate::heads::{BoundedHead, EvalHead};
    use crate::low_agent::{LowActorParams, LowCriticParams};
    let actor = LowActorParams {
        encoder: EncoderParams::zeros(dims.embed_dim, dims.gru_hidden, dims.state_dim),
        head: BoundedHead::zeros(dims.embed_dim, dims.state_dim),
    };
    let critic = LowCriticParams {
        encoder: EncoderParams::zeros(dims.embed_dim, dims.gru_hidden, dims.state_dim),
        head: EvalHead::zeros(dims.state_dim, dims.embed_dim, dims.eval_hidden),
    };
    LowParams {
        target_actor: actor.clone(),
        target_critic: critic.clone(),
        actor,
        critic,
        bound,
    }
}

fn zeroed_high(dims: NetDims, num_goals: usize, bound: f64) -> HighParams {
    use crate::encoders::EncoderParams;
    use crate::heads::{BoundedHead, EvalHead};
    use crate::high_agent::{HighActorParams, HighCriticParams};
    let actor = HighActorParams {
        encoder: EncoderParams::zeros(dims.embed_dim, dims.gru_hidden, dims.state_dim),
        heads: (0..num_goals)
            .map(|_| BoundedHead::zeros(dims.embed_dim, dims.state_dim))
            .collect(),
    };
    let critic = HighCriticParams {
        encoder: EncoderParams::zeros(dims.embed_dim, dims.gru_hidden, dims.state_dim),
        heads: (0..num_goals)
            .map(|_| EvalHead::zeros(dims.state_dim, dims.embed_dim, dims.eval_hidden))
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

pub fn save_checkpoint(
    path: &Path,
    low: &LowParams,
    high: Option<&HighParams>,
    dims: NetDims,
    n_window: usize,
) -> Result<()> {
    let file =
        std::fs::File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| CoreError::io(path.display().to_string(), e);

    writeln!(w, "{MAGIC}").map_err(io_err)?;
    writeln!(w, "meta embed_dim {}", dims.embed_dim).map_err(io_err)?;
    writeln!(w, "meta gru_hidden {}", dims.gru_hidden).map_err(io_err)?;
    writeln!(w, "meta state_dim {}", dims.state_dim).map_err(io_err)?;
    writeln!(w, "meta eval_hidden {}", dims.eval_hidden).map_err(io_err)?;
    writeln!(w, "meta n_window {n_window}").map_err(io_err)?;
    writeln!(
        w,
        "meta num_goals {}",
        high.map(|h| h.num_goals()).unwrap_or(0)
    )
    .map_err(io_err)?;
    writeln!(w, "meta bound_bits {:016x}", low.bound.to_bits()).map_err(io_err)?;
    writeln!(w, "meta has_high {}", high.is_some() as u8).map_err(io_err)?;

    let mut views = Vec::new();
    low.collect("low", &mut views);
    if let Some(h) = high {
        h.collect("high", &mut views);
    }
    for v in &views {
        write!(w, "tensor {} {}", v.name, v.dims.len()).map_err(io_err)?;
        for d in &v.dims {
            write!(w, " {d}").map_err(io_err)?;
        }
        writeln!(w).map_err(io_err)?;
        write!(w, "data").map_err(io_err)?;
        for x in v.data {
            write!(w, " {:016x}", x.to_bits()).map_err(io_err)?;
        }
        writeln!(w).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(LowParams, Option<HighParams>, CheckpointMeta)> {
    let file =
        std::fs::File::open(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines();

    let first = lines
        .next()
        .ok_or_else(|| CoreError::Checkpoint("empty file".into()))?
        .map_err(|e| CoreError::io(path.display().to_string(), e))?;
    if first != MAGIC {
        return Err(CoreError::Checkpoint(format!(
            "bad magic line '{first}'"
        )));
    }

    let mut metas: HashMap<String, String> = HashMap::new();
    let mut tensors: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
    let mut pending: Option<(String, Vec<usize>)> = None;

    for line in lines {
        let line = line.map_err(|e| CoreError::io(path.display().to_string(), e))?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("meta") => {
                let k = parts
                    .next()
                    .ok_or_else(|| CoreError::Checkpoint("meta key missing".into()))?;
                let v = parts
                    .next()
                    .ok_or_else(|| CoreError::Checkpoint("meta value missing".into()))?;
                metas.insert(k.to_string(), v.to_string());
            }
            Some("tensor") => {
                let name = parts
                    .next()
                    .ok_or_else(|| CoreError::Checkpoint("tensor name missing".into()))?
                    .to_string();
                let nd: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| CoreError::Checkpoint("tensor rank missing".into()))?;
                let dims: Vec<usize> = parts
                    .map(|s| {
                        s.parse()
                            .map_err(|_| CoreError::Checkpoint(format!("bad dim '{s}'")))
                    })
                    .collect::<Result<_>>()?;
                if dims.len() != nd {
                    return Err(CoreError::Checkpoint(format!(
                        "tensor {name}: rank {nd} but {} dims",
                        dims.len()
                    )));
                }
                pending = Some((name, dims));
            }
            Some("data") => {
                let (name, dims) = pending.take().ok_or_else(|| {
                    CoreError::Checkpoint("data line without tensor header".into())
                })?;
                let data: Vec<f64> = parts
                    .map(|s| {
                        u64::from_str_radix(s, 16)
                            .map(f64::from_bits)
                            .map_err(|_| CoreError::Checkpoint(format!("bad value '{s}'")))
                    })
                    .collect::<Result<_>>()?;
                let expected: usize = dims.iter().product();
                if data.len() != expected {
                    return Err(CoreError::Checkpoint(format!(
                        "tensor {name}: expected {expected} values, got {}",
                        data.len()
                    )));
                }
                tensors.push((name, dims, data));
            }
            Some(other) => {
                return Err(CoreError::Checkpoint(format!(
                    "unexpected record '{other}'"
                )));
            }
            None => {}
        }
    }

    let get_meta = |k: &str| -> Result<usize> {
        metas
            .get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CoreError::Checkpoint(format!("missing meta '{k}'")))
    };
    let dims = NetDims {
        embed_dim: get_meta("embed_dim")?,
        gru_hidden: get_meta("gru_hidden")?,
        state_dim: get_meta("state_dim")?,
        eval_hidden: get_meta("eval_hidden")?,
    };
    let n_window = get_meta("n_window")?;
    let num_goals = get_meta("num_goals")?;
    let bound_bits = metas
        .get("bound_bits")
        .and_then(|v| u64::from_str_radix(v, 16).ok())
        .ok_or_else(|| CoreError::Checkpoint("missing meta 'bound_bits'".into()))?;
    let has_high = get_meta("has_high")? == 1;
    let bound = f64::from_bits(bound_bits);

    let mut low = zeroed_low(dims, bound);
    let mut high = has_high.then(|| zeroed_high(dims, num_goals, bound));

    {
        let mut views = Vec::new();
        low.collect_mut("low", &mut views);
        if let Some(h) = high.as_mut() {
            h.collect_mut("high", &mut views);
        }
        let mut by_name: HashMap<String, usize> = HashMap::with_capacity(views.len());
        for (i, v) in views.iter().enumerate() {
            by_name.insert(v.name.clone(), i);
        }
        let mut filled = vec![false; views.len()];
        for (name, dims_got, data) in tensors {
            let &i = by_name
                .get(&name)
                .ok_or_else(|| CoreError::Checkpoint(format!("unknown tensor '{name}'")))?;
            let v = &mut views[i];
            if v.dims != dims_got {
                return Err(CoreError::Checkpoint(format!(
                    "tensor {name}: shape {:?} does not match expected {:?}",
                    dims_got, v.dims
                )));
            }
            if filled[i] {
                return Err(CoreError::Checkpoint(format!("duplicate tensor '{name}'")));
            }
            v.data.copy_from_slice(&data);
            filled[i] = true;
        }
        if let Some(missing) = filled.iter().position(|&f| !f) {
            return Err(CoreError::Checkpoint(format!(
                "missing tensor '{}'",
                views[missing].name
            )));
        }
    }

    Ok((
        low,
        high,
        CheckpointMeta {
            dims,
            n_window,
            num_goals,
            bound_bits,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn dims() -> NetDims {
        NetDims {
            embed_dim: 5,
            gru_hidden: 3,
            state_dim: 5,
            eval_hidden: 4,
        }
    }

    #[test]
    fn round_trip_is_bitwise_exact() {
        let low = LowParams::new(dims(), 0.75, &mut stream_rng(1, Stream::InitLow));
        let high = HighParams::new(dims(), 3, 0.75, &mut stream_rng(2, Stream::InitHigh));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &low, Some(&high), dims(), 7).unwrap();
        let (low2, high2, meta) = load_checkpoint(&path).unwrap();

        assert_eq!(meta.dims, dims());
        assert_eq!(meta.n_window, 7);
        assert_eq!(meta.num_goals, 3);
        assert_eq!(meta.bound(), 0.75);

        for (a, b) in low.views().iter().zip(low2.views()) {
            assert_eq!(a.name, b.name);
            for (x, y) in a.data.iter().zip(b.data) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        let high2 = high2.unwrap();
        for (a, b) in high.views().iter().zip(high2.views()) {
            assert_eq!(a.name, b.name);
            for (x, y) in a.data.iter().zip(b.data) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }

        // Saving the loaded params again reproduces the file bytes.
        let path2 = dir.path().join("model2.ckpt");
        save_checkpoint(&path2, &low2, Some(&high2), meta.dims, meta.n_window).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn low_only_checkpoint() {
        let low = LowParams::new(dims(), 1.0, &mut stream_rng(3, Stream::InitLow));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("low.ckpt");
        save_checkpoint(&path, &low, None, dims(), 10).unwrap();
        let (_low2, high2, meta) = load_checkpoint(&path).unwrap();
        assert!(high2.is_none());
        assert_eq!(meta.num_goals, 0);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, "not a checkpoint\n").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CoreError::Checkpoint(_))
        ));

        // Truncated: valid magic and metas but no tensors.
        std::fs::write(
            &path,
            "hrlrec-checkpoint v1\nmeta embed_dim 5\nmeta gru_hidden 3\nmeta state_dim 5\nmeta eval_hidden 4\nmeta n_window 7\nmeta num_goals 0\nmeta bound_bits 3ff0000000000000\nmeta has_high 0\n",
        )
        .unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CoreError::Checkpoint(_))
        ));
    }
}
