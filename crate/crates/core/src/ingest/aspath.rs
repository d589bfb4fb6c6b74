use std::io::BufRead;

use chrono::{DateTime, Utc};

use super::{Asn, Parsed, RecordError};

/// One observed AS path with prepending removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsPathRecord {
    pub observed_at: DateTime<Utc>,
    pub as_path: Vec<Asn>,
}

impl AsPathRecord {
    /// Builds a record, collapsing consecutive repeats (AS prepending).
    pub fn new(observed_at: DateTime<Utc>, mut as_path: Vec<Asn>) -> Self {
        as_path.dedup();
        Self { observed_at, as_path }
    }

    pub fn to_line(&self) -> String {
        let mut line = self.observed_at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        for asn in &self.as_path {
            line.push(' ');
            line.push_str(&asn.to_string());
        }
        line
    }

    fn parse(line_no: usize, line: &str) -> Result<Self, RecordError> {
        let mut tokens = line.split_whitespace();
        let ts = tokens
            .next()
            .ok_or_else(|| RecordError::new(line_no, "missing timestamp"))?;
        let observed_at = DateTime::parse_from_rfc3339(ts)
            .map_err(|e| RecordError::new(line_no, format!("bad timestamp {ts:?}: {e}")))?
            .with_timezone(&Utc);
        let path = tokens
            .map(|t| {
                t.parse::<Asn>()
                    .map_err(|_| RecordError::new(line_no, format!("non-numeric AS token {t:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if path.is_empty() {
            return Err(RecordError::new(line_no, "empty AS path"));
        }
        Ok(Self::new(observed_at, path))
    }
}

pub struct AsPathReader<R> {
    source: R,
    buf: String,
    line_no: usize,
}

impl<R: BufRead> Iterator for AsPathReader<R> {
    type Item = Result<Parsed<AsPathRecord>, RecordError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.source.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(RecordError::new(self.line_no + 1, format!("io: {e}")))),
            }
            self.line_no += 1;
            let line = self.buf.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let line_no = self.line_no;
            return Some(AsPathRecord::parse(line_no, line).map(|record| Parsed { line_no, record }));
        }
    }
}

/// Streams `<rfc3339> <asn> <asn> ...` lines.
pub fn parse_as_paths<R: BufRead>(source: R) -> AsPathReader<R> {
    AsPathReader {
        source,
        buf: String::new(),
        line_no: 0,
    }
}
