//! Request sequences: synthetic Markovian traces with tunable temporal
//! locality, and ingestion of text traces.
//!
//! Canonical file format:
//!
//! ```text
//! #seedtree-trace v1 n=<n_items>
//! # source=synthetic locality=0.9 seed=42
//! 17
//! 17
//! 3
//! ```
//!
//! The second line is optional metadata. Other `#` lines are comments.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::addressing::ItemId;
use crate::error::{Error, Result};

pub const MAX_LOCALITY: f64 = 0.9;
const HEADER_PREFIX: &str = "#seedtree-trace v1 n=";
const TRACE_STREAM: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceOrigin {
    Synthetic,
    File,
}

impl fmt::Display for TraceOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceOrigin::Synthetic => "synthetic",
            TraceOrigin::File => "file",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub source: TraceOrigin,
    pub locality: Option<f64>,
    pub seed: Option<u64>,
}

impl TraceMetadata {
    pub fn file() -> Self {
        TraceMetadata { source: TraceOrigin::File, locality: None, seed: None }
    }
}

/// A request sequence over the dense id range `0..n_items`, in which every
/// id appears at least once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    requests: Vec<ItemId>,
    n_items: u64,
    pub metadata: TraceMetadata,
}

impl Trace {
    pub fn new(requests: Vec<ItemId>, n_items: u64, metadata: TraceMetadata) -> Result<Self> {
        if requests.is_empty() {
            return Err(Error::EmptyTrace);
        }
        let mut seen = vec![false; n_items as usize];
        for v in &requests {
            let slot = seen
                .get_mut(v.0 as usize)
                .ok_or_else(|| Error::InvalidTraceParams(format!("item {v} outside 0..{n_items}")))?;
            *slot = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidTraceParams(format!("item {missing} of 0..{n_items} never requested")));
        }
        Ok(Trace { requests, n_items, metadata })
    }

    pub fn requests(&self) -> &[ItemId] {
        &self.requests
    }

    pub fn n_items(&self) -> u64 {
        self.n_items
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    /// The item universe `0..n_items`.
    pub fn items(&self) -> Vec<ItemId> {
        (0..self.n_items).map(ItemId).collect()
    }

    /// Fraction of positions `t >= 1` with `requests[t] == requests[t-1]`.
    pub fn repeat_fraction(&self) -> f64 {
        repeat_fraction(&self.requests)
    }
}

pub fn repeat_fraction(requests: &[ItemId]) -> f64 {
    if requests.len() < 2 {
        return 0.0;
    }
    let repeats = requests.windows(2).filter(|w| w[0] == w[1]).count();
    repeats as f64 / (requests.len() - 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    /// Repeat fraction after the locality pass, before coverage repair.
    pub locality_repeat_fraction: f64,
    /// Positions rewritten to bring in ids that never appeared.
    pub repaired_positions: usize,
    /// Repeat fraction of the final trace.
    pub final_repeat_fraction: f64,
}

pub fn generate_trace(n_items: u64, requests: usize, locality: f64, seed: u64) -> Result<Trace> {
    generate_trace_with_stats(n_items, requests, locality, seed).map(|(t, _)| t)
}

/// Three passes: uniform draws; each request after the first is overwritten
/// by its predecessor with probability `locality`; then positions are
/// rewritten with ids that never appeared until all `n_items` are present.
///
/// The rewrite picks positions uniformly among those that are not inside a
/// run of three equal requests and whose id occurs elsewhere.
pub fn generate_trace_with_stats(
    n_items: u64,
    requests: usize,
    locality: f64,
    seed: u64,
) -> Result<(Trace, GenerationStats)> {
    if !(0.0..=MAX_LOCALITY).contains(&locality) {
        return Err(Error::InvalidLocality(locality));
    }
    if n_items == 0 {
        return Err(Error::InvalidTraceParams("n_items must be at least 1".into()));
    }
    if (requests as u64) < n_items {
        return Err(Error::InvalidTraceParams(format!("{requests} requests cannot cover {n_items} items")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(TRACE_STREAM);

    let mut seq: Vec<u64> = (0..requests).map(|_| rng.random_range(0..n_items)).collect();
    for t in 1..requests {
        if rng.random::<f64>() < locality {
            seq[t] = seq[t - 1];
        }
    }
    let locality_repeat_fraction = repeat_fraction_raw(&seq);

    let mut counts = vec![0u64; n_items as usize];
    for &v in &seq {
        counts[v as usize] += 1;
    }
    let missing: Vec<u64> = (0..n_items).filter(|&v| counts[v as usize] == 0).collect();
    let mut repaired = 0usize;
    if !missing.is_empty() {
        let interior = |s: &[u64], t: usize| t > 0 && t + 1 < s.len() && s[t - 1] == s[t] && s[t] == s[t + 1];
        let mut preferred: Vec<usize> = (0..requests).filter(|&t| !interior(&seq, t)).collect();
        preferred.shuffle(&mut rng);
        let mut fallback: Vec<usize> = (0..requests).collect();
        fallback.shuffle(&mut rng);
        let mut used = HashSet::new();
        let mut pending = missing.iter().copied();
        let mut next = pending.next();
        for t in preferred.into_iter().chain(fallback) {
            let Some(v) = next else { break };
            let old = seq[t] as usize;
            if counts[old] > 1 && used.insert(t) {
                counts[old] -= 1;
                counts[v as usize] += 1;
                seq[t] = v;
                repaired += 1;
                next = pending.next();
            }
        }
        debug_assert!(next.is_none());
    }

    let requests: Vec<ItemId> = seq.into_iter().map(ItemId).collect();
    let final_repeat_fraction = repeat_fraction(&requests);
    let metadata = TraceMetadata { source: TraceOrigin::Synthetic, locality: Some(locality), seed: Some(seed) };
    let trace = Trace::new(requests, n_items, metadata)?;
    Ok((trace, GenerationStats { locality_repeat_fraction, repaired_positions: repaired, final_repeat_fraction }))
}

fn repeat_fraction_raw(seq: &[u64]) -> f64 {
    if seq.len() < 2 {
        return 0.0;
    }
    seq.windows(2).filter(|w| w[0] == w[1]).count() as f64 / (seq.len() - 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TraceFormat {
    /// Header plus one dense id per line; read back without remapping.
    #[default]
    Canonical,
    /// One raw unsigned id per line; remapped densely by first appearance.
    Items,
    /// `src,dst` per line; keeps the destinations of the most frequent source.
    Pairs,
}

impl FromStr for TraceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" => Ok(TraceFormat::Canonical),
            "items" => Ok(TraceFormat::Items),
            "pairs" => Ok(TraceFormat::Pairs),
            other => Err(Error::Config(format!("unknown trace format {other:?} (canonical, items, pairs)"))),
        }
    }
}

impl fmt::Display for TraceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceFormat::Canonical => "canonical",
            TraceFormat::Items => "items",
            TraceFormat::Pairs => "pairs",
        })
    }
}

pub fn emit_trace<W: Write>(trace: &Trace, mut w: W) -> Result<()> {
    writeln!(w, "{HEADER_PREFIX}{}", trace.n_items)?;
    let m = &trace.metadata;
    write!(w, "# source={}", m.source)?;
    if let Some(p) = m.locality {
        write!(w, " locality={p}")?;
    }
    if let Some(s) = m.seed {
        write!(w, " seed={s}")?;
    }
    writeln!(w)?;
    for v in &trace.requests {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let f = File::create(path)?;
    emit_trace(trace, std::io::BufWriter::new(f))
}

pub fn ingest_trace(path: impl AsRef<Path>, format: TraceFormat) -> Result<Trace> {
    let f = File::open(path)?;
    parse_trace(BufReader::new(f), format)
}

pub fn parse_trace<R: BufRead>(reader: R, format: TraceFormat) -> Result<Trace> {
    match format {
        TraceFormat::Canonical => parse_canonical(reader),
        TraceFormat::Items => {
            let mut raw = Vec::new();
            for (lineno, line) in numbered_lines(reader) {
                let line = line?;
                raw.push(parse_id(&line, lineno)?);
            }
            dense_trace(raw)
        }
        TraceFormat::Pairs => {
            let mut rows: Vec<(u64, u64)> = Vec::new();
            for (lineno, line) in numbered_lines(reader) {
                let line = line?;
                let (src, dst) = line.split_once(',').ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: format!("expected \"src,dst\", got {line:?}"),
                })?;
                rows.push((parse_id(src, lineno)?, parse_id(dst, lineno)?));
            }
            let mut freq: BTreeMap<u64, u64> = BTreeMap::new();
            for &(src, _) in &rows {
                *freq.entry(src).or_default() += 1;
            }
            // BTreeMap iterates ascending, so the first maximum wins ties.
            let best = freq
                .iter()
                .fold(None::<(u64, u64)>, |acc, (&s, &n)| match acc {
                    Some((_, bn)) if bn >= n => acc,
                    _ => Some((s, n)),
                })
                .map(|(s, _)| s)
                .ok_or(Error::EmptyTrace)?;
            dense_trace(rows.into_iter().filter(|&(s, _)| s == best).map(|(_, d)| d).collect())
        }
    }
}

/// Non-blank, non-comment lines with 1-based line numbers.
fn numbered_lines<R: BufRead>(reader: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    reader.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(s) => {
            let t = s.trim();
            (!t.is_empty() && !t.starts_with('#')).then(|| (i + 1, Ok(t.to_string())))
        }
        Err(e) => Some((i + 1, Err(e))),
    })
}

fn parse_id(s: &str, line: usize) -> Result<u64> {
    s.trim().parse::<u64>().map_err(|e| Error::Parse { line, message: format!("bad item id {s:?}: {e}") })
}

fn dense_trace(raw: Vec<u64>) -> Result<Trace> {
    if raw.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let mut ids: HashMap<u64, u64> = HashMap::new();
    let requests: Vec<ItemId> = raw
        .into_iter()
        .map(|r| {
            let next = ids.len() as u64;
            ItemId(*ids.entry(r).or_insert(next))
        })
        .collect();
    Trace::new(requests, ids.len() as u64, TraceMetadata::file())
}

fn parse_canonical<R: BufRead>(reader: R) -> Result<Trace> {
    let mut lines = reader.lines().enumerate();
    let n_items = match lines.next() {
        Some((_, line)) => {
            let line = line?;
            let n = line
                .trim()
                .strip_prefix(HEADER_PREFIX)
                .ok_or_else(|| Error::Parse { line: 1, message: format!("missing header {HEADER_PREFIX:?}") })?;
            parse_id(n, 1)?
        }
        None => return Err(Error::EmptyTrace),
    };
    let mut metadata = TraceMetadata::file();
    let mut requests = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(comment) = t.strip_prefix('#') {
            if requests.is_empty() && comment.trim_start().starts_with("source=") {
                metadata = parse_metadata(comment, lineno)?;
            }
            continue;
        }
        let v = parse_id(t, lineno)?;
        if v >= n_items {
            return Err(Error::Parse { line: lineno, message: format!("id {v} outside 0..{n_items}") });
        }
        requests.push(ItemId(v));
    }
    Trace::new(requests, n_items, metadata)
}

fn parse_metadata(comment: &str, line: usize) -> Result<TraceMetadata> {
    let mut m = TraceMetadata::file();
    let bad = |message: String| Error::Parse { line, message };
    for kv in comment.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| bad(format!("bad metadata field {kv:?}")))?;
        match k {
            "source" => {
                m.source = match v {
                    "synthetic" => TraceOrigin::Synthetic,
                    "file" => TraceOrigin::File,
                    _ => return Err(bad(format!("unknown source {v:?}"))),
                }
            }
            "locality" => m.locality = Some(v.parse().map_err(|e| bad(format!("bad locality: {e}")))?),
            "seed" => m.seed = Some(v.parse().map_err(|e| bad(format!("bad seed: {e}")))?),
            _ => {}
        }
    }
    Ok(m)
}
