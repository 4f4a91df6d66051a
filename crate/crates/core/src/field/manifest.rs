//! Flat `key = value` manifest for field builds.
//!
//! The last line is `hash = <sha256>` over every preceding line, so a report
//! can name the exact build it was produced from.

use std::collections::HashMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::cells::{cell_count, Half};
use super::params::{FieldParams, Mode};
use crate::error::{Error, Result};

const HEADER: &str = "# dyadflow field manifest";

fn body(p: &FieldParams) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{HEADER}");
    let _ = writeln!(s, "mode = {}", p.mode);
    let _ = writeln!(s, "k = {}", p.k);
    let _ = writeln!(s, "alpha = {:?}", p.alpha);
    let _ = writeln!(s, "delta = {:?}", p.delta);
    let _ = writeln!(s, "tau = {:?}", p.tau);
    let _ = writeln!(s, "kappa = {:?}", p.kappa);
    let _ = writeln!(s, "eps_star = {:?}", p.eps_star);
    let _ = writeln!(s, "c_area = {:?}", p.c_area);
    let _ = writeln!(s, "n_stages = {}", p.n_stages);
    let _ = writeln!(s, "t_end = {:?}", p.truncated_horizon());
    for n in 1..=p.n_stages {
        let _ = writeln!(s, "stage.{n}.eps = {:?}", p.stage_eps(n));
        let _ = writeln!(s, "stage.{n}.cells_first = {}", cell_count(n, Half::First));
        let _ = writeln!(s, "stage.{n}.cells_second = {}", cell_count(n, Half::Second));
    }
    s
}

/// Hex SHA-256 of the manifest text preceding its `hash` line.
pub fn manifest_hash(text: &str) -> String {
    let content: String = text.lines().take_while(|l| !l.trim_start().starts_with("hash")).fold(
        String::new(),
        |mut acc, l| {
            acc.push_str(l);
            acc.push('\n');
            acc
        },
    );
    hex::encode(Sha256::digest(content.as_bytes()))
}

pub fn write_manifest(p: &FieldParams) -> String {
    let mut s = body(p);
    let h = manifest_hash(&s);
    let _ = writeln!(s, "hash = {h}");
    s
}

fn parse_err(reason: impl Into<String>) -> Error {
    Error::Parse { what: "manifest", reason: reason.into() }
}

/// Parses a manifest and checks its hash.
pub fn read_manifest(text: &str) -> Result<FieldParams> {
    let mut kv = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| parse_err(format!("line {}: expected key = value", i + 1)))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| kv.get(k).ok_or_else(|| parse_err(format!("missing key `{k}`")));
    let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| parse_err(format!("`{k}` is not a number"))) };
    let int = |k: &str| -> Result<u32> { get(k)?.parse().map_err(|_| parse_err(format!("`{k}` is not an integer"))) };

    let stored = get("hash")?;
    let actual = manifest_hash(text);
    if *stored != actual {
        return Err(parse_err(format!("hash mismatch: stored {stored}, content {actual}")));
    }
    let mode: Mode = get("mode")?.parse()?;
    let p = FieldParams {
        mode,
        k: int("k")?,
        alpha: num("alpha")?,
        delta: num("delta")?,
        tau: num("tau")?,
        kappa: num("kappa")?,
        eps_star: num("eps_star")?,
        c_area: num("c_area")?,
        n_stages: int("n_stages")?,
    };
    if !(p.tau > 0.0 && p.tau < 1.0) || p.n_stages == 0 {
        return Err(parse_err("tau must lie in (0, 1) and n_stages be positive"));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::params_from;

    #[test]
    fn round_trip_and_hash() {
        let p = params_from(0, 0.5, 0.2, Mode::Hoelder, 4).unwrap();
        let text = write_manifest(&p);
        assert!(text.contains("mode = hoelder"));
        assert!(text.contains("stage.1.cells_first = 2"));
        assert_eq!(read_manifest(&text).unwrap(), p);
        let tampered = text.replace("n_stages = 4", "n_stages = 5");
        assert!(read_manifest(&tampered).is_err());
        assert_eq!(manifest_hash(&text).len(), 64);
    }

    #[test]
    fn missing_keys_rejected() {
        assert!(read_manifest("mode = bounded\n").is_err());
        assert!(read_manifest("garbage line\n").is_err());
    }
}
