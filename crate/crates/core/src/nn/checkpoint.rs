//! Text checkpoint format.
//!
//! ```text
//! gfnlab-params v1
//! step_count <n>
//! block <name> <rows> <cols>
//! <rows*cols f64 bit patterns as 16-digit hex, space separated>
//! ...
//! ```
//!
//! Values are stored as raw bit patterns, so a save/load round trip is
//! bit-exact (NaN payloads and signed zeros included).

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::params::ParamStore;
use super::NnError;

const MAGIC: &str = "gfnlab-params v1";

pub fn write_checkpoint<W: Write>(store: &ParamStore, mut w: W) -> Result<(), NnError> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "step_count {}", store.step_count)?;
    for (name, value) in store.names.iter().zip(&store.values) {
        writeln!(w, "block {} {} {}", name, value.nrows(), value.ncols())?;
        let hex: Vec<String> = value.iter().map(|x| format!("{:016x}", x.to_bits())).collect();
        writeln!(w, "{}", hex.join(" "))?;
    }
    Ok(())
}

/// Parses a checkpoint into a fresh store (values only, no optimizer state).
pub fn read_checkpoint<R: Read>(r: R) -> Result<ParamStore, NnError> {
    let bad = |msg: &str| NnError::Checkpoint(msg.to_string());
    let mut lines = BufReader::new(r).lines();
    let first = lines.next().ok_or_else(|| bad("empty file"))??;
    if first.trim() != MAGIC {
        return Err(bad("missing header"));
    }
    let step_line = lines.next().ok_or_else(|| bad("missing step_count"))??;
    let step_count = step_line
        .strip_prefix("step_count ")
        .and_then(|s| s.trim().parse::<u64>().ok())
        .ok_or_else(|| bad("malformed step_count"))?;
    let mut store = ParamStore::new();
    while let Some(header) = lines.next() {
        let header = header?;
        if header.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "block" {
            return Err(bad("malformed block header"));
        }
        let rows: usize = parts[2].parse().map_err(|_| bad("bad row count"))?;
        let cols: usize = parts[3].parse().map_err(|_| bad("bad column count"))?;
        let data_line = lines.next().ok_or_else(|| bad("missing block data"))??;
        let data: Vec<f64> = data_line
            .split_whitespace()
            .map(|h| u64::from_str_radix(h, 16).map(f64::from_bits))
            .collect::<Result<_, _>>()
            .map_err(|_| bad("bad hex value"))?;
        if data.len() != rows * cols {
            return Err(bad("block size does not match its shape"));
        }
        let value = Array2::from_shape_vec((rows, cols), data).map_err(|e| bad(&e.to_string()))?;
        store.add(parts[1], value);
    }
    store.step_count = step_count;
    Ok(store)
}

pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<(), NnError> {
    let mut buf = Vec::new();
    write_checkpoint(store, &mut buf)?;
    crate::io::write_atomic(path, &buf)?;
    Ok(())
}

/// Loads values from `path` into `store`; block names and shapes must match.
pub fn load_checkpoint(store: &mut ParamStore, path: &Path) -> Result<(), NnError> {
    let loaded = read_checkpoint(std::fs::File::open(path)?)?;
    if loaded.names != store.names {
        return Err(NnError::Checkpoint("block names do not match".into()));
    }
    for (dst, src) in store.values.iter_mut().zip(&loaded.values) {
        if dst.dim() != src.dim() {
            return Err(NnError::Checkpoint("block shapes do not match".into()));
        }
        dst.assign(src);
    }
    store.step_count = loaded.step_count;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(values in proptest::collection::vec(any::<u64>(), 1..40), cols in 1usize..5) {
            let n = values.len() - values.len() % cols;
            prop_assume!(n > 0);
            let data: Vec<f64> = values[..n].iter().map(|&b| f64::from_bits(b)).collect();
            let mut store = ParamStore::new();
            store.add("a.weight", Array2::from_shape_vec((n / cols, cols), data).unwrap());
            store.add("z", Array2::from_elem((1, 1), -0.0));
            store.step_count = 7;
            let mut buf = Vec::new();
            write_checkpoint(&store, &mut buf).unwrap();
            let back = read_checkpoint(buf.as_slice()).unwrap();
            prop_assert_eq!(back.step_count(), 7);
            let a: Vec<u64> = store.flat_values().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u64> = back.flat_values().iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn rejects_truncated_block() {
        let text = format!("{MAGIC}\nstep_count 0\nblock w 1 2\n3ff0000000000000\n");
        assert!(read_checkpoint(text.as_bytes()).is_err());
    }
}
