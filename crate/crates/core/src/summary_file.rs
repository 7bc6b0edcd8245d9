//! Persisted summaries: a versioned header and one line per sampled key.
//!
//! ```text
//! #structsample-summary v1
//! dim=2
//! axes=ordered,ordered
//! s=3
//! tau=12.5
//! seed=7
//! method=aware
//! 17,4,9,3.25
//! ...
//! ```
//!
//! Records are `id,coords...,weight`. Floats use the shortest text that
//! parses back to the same bits.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::ipps::Threshold;
use crate::sample::{SampledKey, Sample};
use crate::{Error, Result};

pub const MAGIC: &str = "#structsample-summary v1";

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryHeader {
    /// Axis kinds as free text, e.g. `ordered` or `hierarchy:tree.csv`.
    pub axes: Vec<String>,
    pub seed: u64,
    pub method: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryFile {
    pub header: SummaryHeader,
    pub sample: Sample,
}

pub fn emit_summary<W: Write>(w: &mut W, summary: &SummaryFile) -> Result<()> {
    let h = &summary.header;
    let s = &summary.sample;
    let d = h.axes.len();
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "dim={d}")?;
    writeln!(w, "axes={}", h.axes.join(","))?;
    writeln!(w, "s={}", s.len())?;
    writeln!(w, "tau={}", s.threshold.tau)?;
    writeln!(w, "seed={}", h.seed)?;
    writeln!(w, "method={}", h.method)?;
    for k in &s.members {
        if k.coords.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: k.coords.len(),
            });
        }
        write!(w, "{}", k.id)?;
        for c in &k.coords {
            write!(w, ",{c}")?;
        }
        writeln!(w, ",{}", k.weight)?;
    }
    Ok(())
}

pub fn save_summary(path: &Path, summary: &SummaryFile) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    emit_summary(&mut w, summary)?;
    w.flush()?;
    Ok(())
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::SummaryFormat(msg.into())
}

pub fn load_summary<R: BufRead>(r: R) -> Result<SummaryFile> {
    let mut lines = r.lines();
    let mut next = || -> Result<Option<String>> { lines.next().transpose().map_err(Error::from) };
    match next()? {
        Some(l) if l.trim_end() == MAGIC => {}
        Some(l) => return Err(corrupt(format!("unrecognised header {l:?}"))),
        None => return Err(corrupt("empty file")),
    }
    let mut field = |name: &str| -> Result<String> {
        let line = next()?.ok_or_else(|| corrupt(format!("missing {name}")))?;
        line.strip_prefix(name)
            .and_then(|rest| rest.strip_prefix('='))
            .map(str::to_string)
            .ok_or_else(|| corrupt(format!("expected {name}=, found {line:?}")))
    };
    let num = |name: &str, v: String| -> Result<u64> {
        v.parse().map_err(|_| corrupt(format!("bad {name} {v:?}")))
    };
    let d = num("dim", field("dim")?)? as usize;
    let axes: Vec<String> = field("axes")?.split(',').map(str::to_string).collect();
    if axes.len() != d {
        return Err(corrupt(format!("dim={d} but {} axes listed", axes.len())));
    }
    let s = num("s", field("s")?)? as usize;
    let tau_text = field("tau")?;
    let tau: f64 = tau_text.parse().map_err(|_| corrupt(format!("bad tau {tau_text:?}")))?;
    let seed = num("seed", field("seed")?)?;
    let method = field("method")?;

    let mut members = Vec::with_capacity(s);
    while let Some(line) = next()? {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 2 {
            return Err(corrupt(format!("record {line:?} has {} fields, expected {}", fields.len(), d + 2)));
        }
        let bad = || corrupt(format!("bad record {line:?}"));
        let id = fields[0].parse().map_err(|_| bad())?;
        let coords = fields[1..=d]
            .iter()
            .map(|f| f.parse().map_err(|_| bad()))
            .collect::<Result<Vec<u64>>>()?;
        let weight = fields[d + 1].parse().map_err(|_| bad())?;
        members.push(SampledKey { id, coords, weight });
    }
    if members.len() != s {
        return Err(corrupt(format!("header says s={s} but {} records follow", members.len())));
    }
    Ok(SummaryFile {
        header: SummaryHeader { axes, seed, method },
        sample: Sample {
            members,
            threshold: Threshold { tau, target_size: s },
        },
    })
}

pub fn read_summary(path: &Path) -> Result<SummaryFile> {
    load_summary(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> SummaryFile {
        SummaryFile {
            header: SummaryHeader {
                axes: vec!["ordered".into(), "hierarchy:t.csv".into()],
                seed: 7,
                method: "aware".into(),
            },
            sample: Sample {
                members: vec![
                    SampledKey { id: 3, coords: vec![1, 2], weight: 0.1 + 0.2 },
                    SampledKey { id: 9, coords: vec![5, 6], weight: 2.5 },
                ],
                threshold: Threshold { tau: 1.0 / 3.0, target_size: 2 },
            },
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let f = fixture();
        let mut buf = Vec::new();
        emit_summary(&mut buf, &f).unwrap();
        let g = load_summary(buf.as_slice()).unwrap();
        assert_eq!(g, f);
        assert_eq!(g.sample.threshold.tau.to_bits(), f.sample.threshold.tau.to_bits());
        assert!(String::from_utf8(buf).unwrap().starts_with(MAGIC));
    }

    #[test]
    fn corruption_detected() {
        let mut buf = Vec::new();
        emit_summary(&mut buf, &fixture()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        for bad in [
            text.replace("s=2", "s=3"),
            text.replace("v1", "v9"),
            text.replace("dim=2", "dim=3"),
            text.replace(",2.5", ""),
            text.replace("tau=", "tau=x"),
            String::new(),
        ] {
            assert!(matches!(load_summary(bad.as_bytes()), Err(Error::SummaryFormat(_))), "{bad:?}");
        }
    }
}
