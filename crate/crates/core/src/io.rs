//! File formats.
//!
//! - Probability vectors: binary `PTPV` format (magic `PTPV`, `u16` LE
//!   version = 1, `u16` LE qubit count, then `2^n` little-endian `f64`
//!   weights), or a text alternative for small `n` (`n=<int>` header, one
//!   decimal weight per line).
//! - Samples: text; `n=<int>`, `N=<int>`, then one length-`n` bitstring per
//!   line, most significant qubit first.
//! - Acceptance vectors for rejection sampling: the probability text layout,
//!   values in `[0,1]` with no sum constraint.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::noise::Sample;
use crate::probmodel::ProbabilityVector;

/// Magic bytes of the binary probability format.
pub const PTPV_MAGIC: &[u8; 4] = b"PTPV";
/// Current binary format version.
pub const PTPV_VERSION: u16 = 1;

fn display(path: &Path) -> String {
    path.display().to_string()
}

/// Write a probability vector in the binary `PTPV` format.
pub fn write_probs_binary(path: &Path, pv: &ProbabilityVector) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(display(path), e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e| Error::io(display(path), e);
    out.write_all(PTPV_MAGIC).map_err(io_err)?;
    out.write_all(&PTPV_VERSION.to_le_bytes()).map_err(io_err)?;
    out.write_all(&(pv.n() as u16).to_le_bytes()).map_err(io_err)?;
    for &w in pv.weights() {
        out.write_all(&w.to_le_bytes()).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Read a binary `PTPV` probability vector.
pub fn read_probs_binary(path: &Path) -> Result<ProbabilityVector> {
    let file = File::open(path).map_err(|e| Error::io(display(path), e))?;
    let mut input = BufReader::new(file);
    let io_err = |e| Error::io(display(path), e);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(io_err)?;
    if &magic != PTPV_MAGIC {
        return Err(Error::parse(display(path), "bad magic bytes; not a PTPV file"));
    }
    let mut two = [0u8; 2];
    input.read_exact(&mut two).map_err(io_err)?;
    let version = u16::from_le_bytes(two);
    if version != PTPV_VERSION {
        return Err(Error::parse(
            display(path),
            format!("unsupported format version {version}"),
        ));
    }
    input.read_exact(&mut two).map_err(io_err)?;
    let n = u16::from_le_bytes(two) as u32;
    if n == 0 || n > crate::probmodel::MAX_QUBITS {
        return Err(Error::parse(display(path), format!("qubit count {n} out of range")));
    }
    let m = 1usize << n;
    let mut raw = vec![0u8; m * 8];
    input.read_exact(&mut raw).map_err(io_err)?;
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing).map_err(io_err)? != 0 {
        return Err(Error::parse(display(path), "trailing bytes after the weight block"));
    }
    let weights = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    ProbabilityVector::new(n, weights)
}

/// Write a probability vector in the text format.
pub fn write_probs_text(path: &Path, pv: &ProbabilityVector) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(display(path), e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e| Error::io(display(path), e);
    writeln!(out, "n={}", pv.n()).map_err(io_err)?;
    for &w in pv.weights() {
        // Shortest round-trip decimal form.
        writeln!(out, "{w}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

fn read_header_value(line: Option<std::io::Result<String>>, path: &Path, key: &str) -> Result<u64> {
    let line = line
        .ok_or_else(|| Error::parse(display(path), format!("missing {key}= header")))?
        .map_err(|e| Error::io(display(path), e))?;
    let rest = line
        .strip_prefix(&format!("{key}="))
        .ok_or_else(|| Error::parse(display(path), format!("expected '{key}=<int>', got {line:?}")))?;
    rest.trim()
        .parse::<u64>()
        .map_err(|e| Error::parse(display(path), format!("bad {key} value: {e}")))
}

/// Read a text-format probability vector.
pub fn read_probs_text(path: &Path) -> Result<ProbabilityVector> {
    let (n, values) = read_text_values(path)?;
    ProbabilityVector::new(n, values)
}

fn read_text_values(path: &Path) -> Result<(u32, Vec<f64>)> {
    let file = File::open(path).map_err(|e| Error::io(display(path), e))?;
    let mut lines = BufReader::new(file).lines();
    let n = read_header_value(lines.next(), path, "n")? as u32;
    if n == 0 || n > crate::probmodel::MAX_QUBITS {
        return Err(Error::parse(display(path), format!("qubit count {n} out of range")));
    }
    let m = 1usize << n;
    let mut values = Vec::with_capacity(m);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(display(path), e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let v: f64 = trimmed
            .parse()
            .map_err(|e| Error::parse(display(path), format!("line {}: {e}", i + 2)))?;
        values.push(v);
    }
    if values.len() != m {
        return Err(Error::parse(
            display(path),
            format!("expected {m} values for n = {n}, found {}", values.len()),
        ));
    }
    Ok((n, values))
}

/// Read a probability vector, sniffing binary vs text by the magic bytes.
pub fn read_probs_auto(path: &Path) -> Result<ProbabilityVector> {
    let mut file = File::open(path).map_err(|e| Error::io(display(path), e))?;
    let mut magic = [0u8; 4];
    let got = file.read(&mut magic).map_err(|e| Error::io(display(path), e))?;
    drop(file);
    if got == 4 && &magic == PTPV_MAGIC {
        read_probs_binary(path)
    } else {
        read_probs_text(path)
    }
}

/// Read an acceptance-probability vector (text layout, entries in `[0,1]`,
/// no sum constraint). Returns `(n, tau)`.
pub fn read_acceptance_text(path: &Path) -> Result<(u32, Vec<f64>)> {
    let (n, values) = read_text_values(path)?;
    if let Some(t) = values.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::parse(
            display(path),
            format!("acceptance probability {t} outside [0,1]"),
        ));
    }
    Ok((n, values))
}

/// Render index `i` as a bitstring, most significant qubit first.
pub fn index_to_bitstring(i: u64, n: u32) -> String {
    (0..n)
        .rev()
        .map(|bit| if (i >> bit) & 1 == 1 { '1' } else { '0' })
        .collect()
}

/// Parse a bitstring written most significant qubit first.
pub fn bitstring_to_index(s: &str, n: u32) -> Option<u64> {
    if s.len() != n as usize {
        return None;
    }
    let mut idx = 0u64;
    for c in s.chars() {
        idx = (idx << 1)
            | match c {
                '0' => 0,
                '1' => 1,
                _ => return None,
            };
    }
    Some(idx)
}

/// Write a sample in the text format (draw order preserved).
pub fn write_sample(path: &Path, sample: &Sample) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(display(path), e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e| Error::io(display(path), e);
    writeln!(out, "n={}", sample.n()).map_err(io_err)?;
    writeln!(out, "N={}", sample.total()).map_err(io_err)?;
    let n = sample.n();
    let mut line = vec![0u8; n as usize + 1];
    line[n as usize] = b'\n';
    for &i in sample.indices() {
        for bit in 0..n {
            line[(n - 1 - bit) as usize] = if (i >> bit) & 1 == 1 { b'1' } else { b'0' };
        }
        out.write_all(&line).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Read a text-format sample as raw indices. Returns `(n, indices)`; the
/// caller attaches probabilities via [`Sample::from_indices`] when a
/// probability file is available.
pub fn read_sample_indices(path: &Path) -> Result<(u32, Vec<u64>)> {
    let file = File::open(path).map_err(|e| Error::io(display(path), e))?;
    let mut lines = BufReader::new(file).lines();
    let n = read_header_value(lines.next(), path, "n")? as u32;
    if n == 0 || n > crate::probmodel::MAX_QUBITS {
        return Err(Error::parse(display(path), format!("qubit count {n} out of range")));
    }
    let total = read_header_value(lines.next(), path, "N")?;
    let mut indices = Vec::with_capacity(total as usize);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(display(path), e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let idx = bitstring_to_index(trimmed, n).ok_or_else(|| {
            Error::parse(
                display(path),
                format!("line {}: {trimmed:?} is not a length-{n} bitstring", i + 3),
            )
        })?;
        indices.push(idx);
    }
    if indices.len() as u64 != total {
        return Err(Error::parse(
            display(path),
            format!("header says N = {total} but found {} bitstrings", indices.len()),
        ));
    }
    Ok((n, indices))
}
