//! CSV readers and writers for datasets, posterior oracles, density ratios,
//! weights and per-run estimates.
//!
//! Readers validate structure and value ranges and report the offending
//! record; they never panic on malformed input.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balancing::{CompressedData, WeightVector};
use crate::confounding::{ConfoundingError, PosteriorOracle};
use crate::density_ratio::DensityRatio;
use crate::env::{Dataset, EnvError, Transition};
use crate::estimators::Method;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IoError {
    #[error("csv error: {0}")]
    Csv(String),
    #[error("record {record}: {message}")]
    Invalid { record: usize, message: String },
    #[error("unexpected header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Confounding(#[from] ConfoundingError),
}

impl From<csv::Error> for IoError {
    fn from(e: csv::Error) -> Self {
        IoError::Csv(e.to_string())
    }
}

type Result<T> = std::result::Result<T, IoError>;

pub const DATASET_HEADER: &str = "traj,step,s,a,r,s_next";
pub const ORACLE_HEADER: &str = "s,a,s_next,u,prob";
pub const DENSITY_HEADER: &str = "s,d_hat";
pub const WEIGHTS_HEADER: &str = "i,z_index,w";
pub const RUNS_HEADER: &str = "method,n_traj,seed,estimate";

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input)
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = found.iter().collect();
    if got != expected {
        return Err(IoError::Header { expected: expected.join(","), found: got.join(",") });
    }
    Ok(())
}

fn invalid(record: usize, message: impl Into<String>) -> IoError {
    IoError::Invalid { record, message: message.into() }
}

#[derive(Debug, Deserialize)]
struct DatasetRow {
    traj: u64,
    step: u64,
    s: usize,
    a: usize,
    r: f64,
    s_next: usize,
    #[serde(default)]
    u: Option<usize>,
}

/// Reads `traj,step,s,a,r,s_next[,u]`.
///
/// Rows must be grouped by trajectory with steps `0, 1, 2, …`; consecutive
/// trajectories must use distinct ids. The optional `u` column fills the
/// hidden-confounder channel and must then be present on every row.
pub fn read_dataset<R: Read>(input: R) -> Result<Dataset> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    let with_u = headers.len() == 7;
    if with_u {
        check_header(&headers, &["traj", "step", "s", "a", "r", "s_next", "u"])?;
    } else {
        check_header(&headers, &["traj", "step", "s", "a", "r", "s_next"])?;
    }
    let mut transitions = Vec::new();
    let mut hidden = Vec::new();
    let mut offsets = vec![0];
    let mut current: Option<u64> = None;
    let mut seen = std::collections::BTreeSet::new();
    for (idx, row) in rdr.deserialize::<DatasetRow>().enumerate() {
        let record = idx + 1;
        let row = row.map_err(|e| invalid(record, e.to_string()))?;
        if !row.r.is_finite() {
            return Err(invalid(record, "reward is not finite"));
        }
        if current != Some(row.traj) {
            if current.is_some() {
                offsets.push(transitions.len());
            }
            if !seen.insert(row.traj) {
                return Err(invalid(record, format!("trajectory {} is not contiguous", row.traj)));
            }
            current = Some(row.traj);
            if row.step != 0 {
                return Err(invalid(record, "trajectory does not start at step 0"));
            }
        } else {
            let start = *offsets.last().unwrap_or(&0);
            if row.step != (transitions.len() - start) as u64 {
                return Err(invalid(record, format!("step {} out of sequence", row.step)));
            }
            let prev: &Transition = transitions.last().expect("nonempty within a trajectory");
            if prev.s_next != row.s {
                return Err(invalid(record, format!("state {} does not continue from {}", row.s, prev.s_next)));
            }
        }
        transitions.push(Transition { s: row.s, a: row.a, r: row.r, s_next: row.s_next });
        if with_u {
            hidden.push(row.u.ok_or_else(|| invalid(record, "missing u"))?);
        }
    }
    if !transitions.is_empty() {
        offsets.push(transitions.len());
    }
    Ok(Dataset::new(transitions, offsets, with_u.then_some(hidden))?)
}

pub fn write_dataset<W: Write>(output: W, data: &Dataset, with_hidden: bool) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(output);
    let hidden = if with_hidden {
        Some(data.hidden_confounders().ok_or_else(|| invalid(0, "dataset has no hidden confounders"))?)
    } else {
        None
    };
    let mut header = vec!["traj", "step", "s", "a", "r", "s_next"];
    if hidden.is_some() {
        header.push("u");
    }
    wtr.write_record(&header)?;
    let mut i = 0;
    for (traj, w) in data.trajectory_offsets().windows(2).enumerate() {
        for (step, t) in data.transitions()[w[0]..w[1]].iter().enumerate() {
            let mut rec = vec![
                traj.to_string(),
                step.to_string(),
                t.s.to_string(),
                t.a.to_string(),
                t.r.to_string(),
                t.s_next.to_string(),
            ];
            if let Some(h) = hidden {
                rec.push(h[i].to_string());
            }
            wtr.write_record(&rec)?;
            i += 1;
        }
    }
    wtr.flush().map_err(|e| IoError::Csv(e.to_string()))?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct OracleRow {
    s: usize,
    a: usize,
    s_next: usize,
    u: usize,
    prob: f64,
}

/// Reads `s,a,s_next,u,prob` into an oracle of the given dimensions. Every
/// listed triple must give a probability for each level exactly once.
pub fn read_oracle<R: Read>(input: R, n_states: usize, n_actions: usize, n_levels: usize) -> Result<PosteriorOracle> {
    let mut rdr = reader(input);
    check_header(rdr.headers()?, &["s", "a", "s_next", "u", "prob"])?;
    let mut grouped: std::collections::BTreeMap<(usize, usize, usize), Vec<Option<f64>>> = Default::default();
    for (idx, row) in rdr.deserialize::<OracleRow>().enumerate() {
        let record = idx + 1;
        let row = row.map_err(|e| invalid(record, e.to_string()))?;
        if row.s >= n_states || row.s_next >= n_states || row.a >= n_actions || row.u >= n_levels {
            return Err(invalid(record, "index out of range"));
        }
        let slot = &mut grouped.entry((row.s, row.a, row.s_next)).or_insert_with(|| vec![None; n_levels])[row.u];
        if slot.is_some() {
            return Err(invalid(record, "duplicate entry"));
        }
        *slot = Some(row.prob);
    }
    let mut oracle = PosteriorOracle::empty(n_states, n_actions, n_levels);
    for ((s, a, s_next), probs) in grouped {
        let dist: Option<Vec<f64>> = probs.into_iter().collect();
        let dist = dist.ok_or_else(|| invalid(0, format!("triple ({s},{a},{s_next}) is missing a level")))?;
        oracle.set(s, a, s_next, &dist)?;
    }
    Ok(oracle)
}

pub fn write_oracle<W: Write>(output: W, oracle: &PosteriorOracle) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(output);
    wtr.write_record(["s", "a", "s_next", "u", "prob"])?;
    for ((s, a, s_next), dist) in oracle.entries() {
        for (u, p) in dist.iter().enumerate() {
            wtr.write_record([s.to_string(), a.to_string(), s_next.to_string(), u.to_string(), p.to_string()])?;
        }
    }
    wtr.flush().map_err(|e| IoError::Csv(e.to_string()))?;
    Ok(())
}

pub fn write_density<W: Write>(output: W, d: &DensityRatio) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(output);
    wtr.write_record(["s", "d_hat"])?;
    for (s, v) in d.values().iter().enumerate() {
        wtr.write_record([s.to_string(), v.to_string()])?;
    }
    wtr.flush().map_err(|e| IoError::Csv(e.to_string()))?;
    Ok(())
}

/// Reads `s,d_hat` with states listed as `0, 1, …` in order.
pub fn read_density<R: Read>(input: R) -> Result<Vec<f64>> {
    let mut rdr = reader(input);
    check_header(rdr.headers()?, &["s", "d_hat"])?;
    let mut out = Vec::new();
    for (idx, row) in rdr.deserialize::<(usize, f64)>().enumerate() {
        let record = idx + 1;
        let (s, v) = row.map_err(|e| invalid(record, e.to_string()))?;
        if s != out.len() {
            return Err(invalid(record, format!("expected state {}, found {s}", out.len())));
        }
        if !v.is_finite() {
            return Err(invalid(record, "d_hat is not finite"));
        }
        out.push(v);
    }
    Ok(out)
}

pub fn write_weights<W: Write>(output: W, w: &WeightVector, compressed: &CompressedData) -> Result<()> {
    if w.len() != compressed.n_samples() {
        return Err(invalid(0, "weights and compression disagree"));
    }
    let mut wtr = csv::Writer::from_writer(output);
    wtr.write_record(["i", "z_index", "w"])?;
    for (i, (&c, v)) in compressed.index_map().iter().zip(w.w()).enumerate() {
        wtr.write_record([i.to_string(), c.to_string(), v.to_string()])?;
    }
    wtr.flush().map_err(|e| IoError::Csv(e.to_string()))?;
    Ok(())
}

/// One estimate from one benchmark repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub method: Method,
    pub n_traj: usize,
    pub seed: u64,
    pub estimate: f64,
}

pub fn write_runs<W: Write>(output: W, rows: &[RunRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(output);
    wtr.write_record(["method", "n_traj", "seed", "estimate"])?;
    for r in rows {
        wtr.write_record([r.method.tag().to_string(), r.n_traj.to_string(), r.seed.to_string(), r.estimate.to_string()])?;
    }
    wtr.flush().map_err(|e| IoError::Csv(e.to_string()))?;
    Ok(())
}

pub fn read_runs<R: Read>(input: R) -> Result<Vec<RunRow>> {
    let mut rdr = reader(input);
    check_header(rdr.headers()?, &["method", "n_traj", "seed", "estimate"])?;
    rdr.deserialize::<RunRow>()
        .enumerate()
        .map(|(idx, row)| row.map_err(|e| invalid(idx + 1, e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trip_with_hidden() {
        let ts = vec![
            Transition { s: 0, a: 1, r: 0.0, s_next: 2 },
            Transition { s: 2, a: 0, r: -12.0, s_next: 0 },
            Transition { s: 0, a: 0, r: 0.5, s_next: 1 },
        ];
        let d = Dataset::new(ts, vec![0, 2, 3], Some(vec![1, 0, 1])).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &d, true).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("traj,step,s,a,r,s_next,u\n"));
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), d);

        let mut plain = Vec::new();
        write_dataset(&mut plain, &d, false).unwrap();
        assert_eq!(read_dataset(plain.as_slice()).unwrap(), d.without_hidden());
    }

    #[test]
    fn dataset_structure_errors() {
        let cases = [
            "traj,step,s,a,r,s_next\n0,1,0,0,1,1\n",
            "traj,step,s,a,r,s_next\n0,0,0,0,1,1\n0,2,1,0,1,0\n",
            "traj,step,s,a,r,s_next\n0,0,0,0,1,1\n0,1,2,0,1,0\n",
            "traj,step,s,a,r,s_next\n0,0,0,0,1,1\n1,0,0,0,1,1\n0,0,0,0,1,1\n",
            "traj,step,s,a,r,s_next\n0,0,0,0,NaN,1\n",
            "traj,step,s,a,r,s_next\n0,0,-1,0,1,1\n",
            "traj,step,s,a,r\n0,0,0,0,1\n",
            "traj,step,s,a,r,s_next,u\n0,0,0,0,1,1,\n",
        ];
        for c in cases {
            assert!(read_dataset(c.as_bytes()).is_err(), "accepted: {c}");
        }
        let empty = read_dataset(DATASET_HEADER.as_bytes()).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn oracle_round_trip_and_errors() {
        let mut o = PosteriorOracle::empty(3, 2, 2);
        o.set(0, 0, 1, &[0.25, 0.75]).unwrap();
        o.set(1, 1, 0, &[1.0, 0.0]).unwrap();
        let mut buf = Vec::new();
        write_oracle(&mut buf, &o).unwrap();
        assert_eq!(read_oracle(buf.as_slice(), 3, 2, 2).unwrap(), o);

        let missing = "s,a,s_next,u,prob\n0,0,1,0,1.0\n";
        assert!(read_oracle(missing.as_bytes(), 3, 2, 2).is_err());
        let dup = "s,a,s_next,u,prob\n0,0,1,0,0.5\n0,0,1,0,0.5\n";
        assert!(read_oracle(dup.as_bytes(), 3, 2, 2).is_err());
        let unnormalized = "s,a,s_next,u,prob\n0,0,1,0,0.5\n0,0,1,1,0.6\n";
        assert!(read_oracle(unnormalized.as_bytes(), 3, 2, 2).is_err());
        let range = "s,a,s_next,u,prob\n9,0,1,0,0.5\n";
        assert!(read_oracle(range.as_bytes(), 3, 2, 2).is_err());
    }

    #[test]
    fn density_and_runs_round_trip() {
        let d = DensityRatio::constant(3, 0.75);
        let mut buf = Vec::new();
        write_density(&mut buf, &d).unwrap();
        assert_eq!(read_density(buf.as_slice()).unwrap(), vec![0.75; 3]);
        assert!(read_density("s,d_hat\n1,0.5\n".as_bytes()).is_err());

        let rows = vec![
            RunRow { method: Method::Balanced, n_traj: 10, seed: u64::MAX, estimate: 3.25 },
            RunRow { method: Method::Ips, n_traj: 200, seed: 0, estimate: -0.1 },
        ];
        let mut buf = Vec::new();
        write_runs(&mut buf, &rows).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with(RUNS_HEADER));
        assert_eq!(read_runs(buf.as_slice()).unwrap(), rows);
    }
}
