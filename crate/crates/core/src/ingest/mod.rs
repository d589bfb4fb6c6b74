//! Input adapters for the four corpora: speed-test sessions, traceroutes,
//! AS paths and the metadata tables.
//!
//! Every reader is a pull iterator over a `BufRead`, yields records tagged
//! with their 1-based source line number, and never buffers more than one
//! line. Line numbers double as ordering keys when chunks are parsed in
//! parallel (see [`parse_ndjson_parallel`]).

mod aspath;
mod speedtest;
mod tables;
mod traceroute;

use std::io::BufRead;
use std::marker::PhantomData;

use rayon::prelude::*;
use serde::de::DeserializeOwned;

pub use aspath::{parse_as_paths, AsPathReader, AsPathRecord};
pub use speedtest::{parse_speedtest_stream, Direction, SpeedTestSession, TcpSnapshot};
pub use tables::{
    parse_tables, AsnRegistry, CountryCode, PopLocation, PopLocationTable, ReverseDnsMap, TableError, Tables,
};
pub use traceroute::{parse_traceroute_stream, Hop, Reply, ReplyAddr, TracerouteMeasurement};

/// Autonomous system number.
pub type Asn = u32;

/// Per-record schema violation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line_no}: {reason}")]
pub struct RecordError {
    pub line_no: usize,
    pub reason: String,
}

impl RecordError {
    pub fn new(line_no: usize, reason: impl Into<String>) -> Self {
        Self {
            line_no,
            reason: reason.into(),
        }
    }
}

/// How a reader reacts to a malformed line.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Strictness {
    /// Abort after the first malformed line.
    Strict,
    /// Report the malformed line and keep going.
    #[default]
    Lenient,
}

/// A record together with the source line it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub line_no: usize,
    pub record: T,
}

/// Schema-level checks applied after deserialization.
pub trait Validate {
    fn validate(&self) -> Result<(), String>;
}

fn parse_line<T: DeserializeOwned + Validate>(line_no: usize, line: &str) -> Result<T, RecordError> {
    let record: T = serde_json::from_str(line).map_err(|e| RecordError::new(line_no, e.to_string()))?;
    record.validate().map_err(|reason| RecordError::new(line_no, reason))?;
    Ok(record)
}

/// Streaming NDJSON reader shared by the speed-test and traceroute adapters.
pub struct NdjsonReader<R, T> {
    source: R,
    buf: String,
    line_no: usize,
    strictness: Strictness,
    halted: bool,
    _record: PhantomData<T>,
}

impl<R: BufRead, T> NdjsonReader<R, T> {
    pub fn new(source: R, strictness: Strictness) -> Self {
        Self {
            source,
            buf: String::new(),
            line_no: 0,
            strictness,
            halted: false,
            _record: PhantomData,
        }
    }
}

impl<R: BufRead, T: DeserializeOwned + Validate> Iterator for NdjsonReader<R, T> {
    type Item = Result<Parsed<T>, RecordError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.halted {
            return None;
        }
        loop {
            self.buf.clear();
            match self.source.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.halted = true;
                    return Some(Err(RecordError::new(self.line_no + 1, format!("io: {e}"))));
                }
            }
            self.line_no += 1;
            let line = self.buf.trim();
            if line.is_empty() {
                continue;
            }
            let result = parse_line::<T>(self.line_no, line).map(|record| Parsed {
                line_no: self.line_no,
                record,
            });
            if result.is_err() && self.strictness == Strictness::Strict {
                self.halted = true;
            }
            return Some(result);
        }
    }
}

/// Parses a whole NDJSON buffer with rayon, preserving source order.
///
/// Produces exactly what the sequential reader would for the same input and
/// strictness, whatever the size of the thread pool.
pub fn parse_ndjson_parallel<T>(text: &str, strictness: Strictness) -> Vec<Result<Parsed<T>, RecordError>>
where
    T: DeserializeOwned + Validate + Send,
{
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let mut out: Vec<Result<Parsed<T>, RecordError>> = lines
        .par_iter()
        .map(|&(line_no, line)| parse_line::<T>(line_no, line).map(|record| Parsed { line_no, record }))
        .collect();
    if strictness == Strictness::Strict {
        if let Some(first_err) = out.iter().position(Result::is_err) {
            out.truncate(first_err + 1);
        }
    }
    out
}

/// Splits a parse result stream into records and errors.
pub fn partition<T>(items: impl IntoIterator<Item = Result<Parsed<T>, RecordError>>) -> (Vec<T>, Vec<RecordError>) {
    let mut ok = Vec::new();
    let mut errs = Vec::new();
    for item in items {
        match item {
            Ok(p) => ok.push(p.record),
            Err(e) => errs.push(e),
        }
    }
    (ok, errs)
}
