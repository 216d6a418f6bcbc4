//! Text checkpoint format.
//!
//! ```text
//! xtx-params v1
//! <count>
//! <name> <ndim> <d0> .. <dn-1>
//! <values, row-major, space separated>
//! ...
//! ```
//!
//! Values are written in Rust's shortest round-trip form, so a save/load
//! cycle reproduces every parameter bit for bit.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::nn::tensor::{ParamStore, Tensor};

pub const MAGIC: &str = "xtx-params";
pub const VERSION: u32 = 1;

pub fn save<W: Write>(store: &ParamStore, mut out: W) -> Result<()> {
    writeln!(out, "{MAGIC} v{VERSION}")?;
    writeln!(out, "{}", store.params().len())?;
    for id in store.ids() {
        let t = store.value(id);
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        writeln!(
            out,
            "{} {} {}",
            store.params().name(id),
            t.shape().len(),
            dims.join(" ")
        )?;
        let vals: Vec<String> = t.data().iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", vals.join(" "))?;
    }
    Ok(())
}

/// Overwrites the parameters of `store` from a checkpoint. Every parameter in
/// the store must appear with the same shape; extra entries are rejected.
pub fn load_into<R: BufRead>(store: &mut ParamStore, input: R) -> Result<()> {
    let bad = |m: String| Error::Checkpoint(m);
    let mut lines = input.lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))?
            .map_err(Error::from)
    };
    let header = next()?;
    if header.trim() != format!("{MAGIC} v{VERSION}") {
        return Err(bad(format!("unsupported header {header:?}")));
    }
    let count: usize = next()?.trim().parse().map_err(|e| bad(format!("bad count: {e}")))?;
    if count != store.params().len() {
        return Err(bad(format!(
            "checkpoint has {count} tensors, model has {}",
            store.params().len()
        )));
    }
    for _ in 0..count {
        let head = next()?;
        let mut parts = head.split_whitespace();
        let name = parts.next().ok_or_else(|| bad("missing name".into()))?;
        let ndim: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(format!("bad rank for {name}")))?;
        let shape: Vec<usize> = parts
            .map(|s| s.parse())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("bad shape for {name}: {e}")))?;
        if shape.len() != ndim {
            return Err(bad(format!("rank mismatch for {name}")));
        }
        let id = store.id(name).ok_or_else(|| bad(format!("unknown tensor {name}")))?;
        if store.value(id).shape() != shape.as_slice() {
            return Err(bad(format!(
                "shape mismatch for {name}: {shape:?} vs {:?}",
                store.value(id).shape()
            )));
        }
        let values: Vec<f64> = next()?
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("bad value in {name}: {e}")))?;
        *store.value_mut(id) = Tensor::from_vec(&shape, values)?;
    }
    Ok(())
}
