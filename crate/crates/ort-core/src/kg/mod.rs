//! Knowledge-graph storage: triple parsing, label derivation, and indexed
//! lookups over millions of (subject, relation, object) facts.
//!
//! Entity labels are not stored in the dump; they are derived from the dotted
//! relation identifiers. A relation like
//! `meteorology.cyclone_affected_area.cyclones` tags its subject with the
//! second-to-last segment (`cyclone_affected_area`) and its object with the
//! last (`cyclones`). Everything downstream — the ontology, the neighbor
//! label dictionary, reverse reasoning — is built on top of that rule.

mod cache;
mod store;

pub use store::{build_index, KgBuilder, KgStore, NeighborHit, StoreStats};

use std::io::BufRead;

use unicode_normalization::{is_nfc_quick, IsNormalized, UnicodeNormalization};

use crate::error::KgError;

/// One (subject, relation, object) fact.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Triple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl Triple {
    pub fn new(
        subject: impl Into<String>,
        relation: impl Into<String>,
        object: impl Into<String>,
    ) -> Self {
        Triple {
            subject: subject.into(),
            relation: relation.into(),
            object: object.into(),
        }
    }
}

/// Which side of a stored triple a neighbor was found on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    /// The queried entity is the subject; the neighbor is the object.
    Outgoing,
    /// The queried entity is the object; the neighbor is the subject.
    Incoming,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Direction::Outgoing => f.write_str("outgoing"),
            Direction::Incoming => f.write_str("incoming"),
        }
    }
}

/// Canonicalize an entity/relation/label string: trim, then Unicode NFC.
///
/// Matching everywhere in the crate is exact on this canonical form; there is
/// no fuzzy entity linking.
pub fn normalize_name(s: &str) -> String {
    let trimmed = s.trim();
    match is_nfc_quick(trimmed.chars()) {
        IsNormalized::Yes => trimmed.to_owned(),
        _ => trimmed.nfc().collect(),
    }
}

/// Derive `(subject_label, object_label)` from a dotted relation identifier:
/// the last two non-empty `.`-separated segments.
pub fn extract_labels(relation: &str) -> Result<(&str, &str), KgError> {
    let mut last: Option<&str> = None;
    let mut second_last: Option<&str> = None;
    for seg in relation.split('.') {
        if seg.is_empty() {
            continue;
        }
        second_last = last;
        last = Some(seg);
    }
    match (second_last, last) {
        (Some(s), Some(o)) => Ok((s, o)),
        _ => Err(KgError::LabelExtraction {
            relation: relation.to_owned(),
        }),
    }
}

/// A skipped input line, with the 1-based line number and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseWarning {
    pub line: u64,
    pub reason: String,
}

impl std::fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

/// Classify one raw input line.
///
/// Returns `Ok(None)` for lines that carry no triple (blank, `#` comment),
/// `Ok(Some((s, r, o)))` for a well-formed line (fields not yet normalized),
/// and `Err(reason)` for a malformed one.
fn split_line(line: &str) -> Result<Option<(&str, &str, &str)>, String> {
    if line.starts_with('#') || line.trim().is_empty() {
        return Ok(None);
    }
    let mut fields = line.split('\t');
    let (s, r, o) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
        (Some(s), Some(r), Some(o), None) => (s, r, o),
        _ => {
            let n = line.split('\t').count();
            return Err(format!(
                "expected 3 tab-separated fields (subject, relation, object), found {n}"
            ));
        }
    };
    if s.trim().is_empty() {
        return Err("empty subject field".to_owned());
    }
    if r.trim().is_empty() {
        return Err("empty relation field".to_owned());
    }
    if o.trim().is_empty() {
        return Err("empty object field".to_owned());
    }
    Ok(Some((s, r, o)))
}

/// Streaming reader over the tab-separated triple format.
///
/// Yields triples in input order. In lenient mode (the default) malformed
/// lines are skipped and collected as [`ParseWarning`]s; in strict mode the
/// first malformed line is yielded as a fatal error. I/O errors are always
/// fatal.
pub struct TripleReader<R> {
    inner: R,
    buf: String,
    line_no: u64,
    strict: bool,
    warnings: Vec<ParseWarning>,
}

impl<R: BufRead> TripleReader<R> {
    pub fn new(inner: R) -> Self {
        TripleReader {
            inner,
            buf: String::new(),
            line_no: 0,
            strict: false,
            warnings: Vec::new(),
        }
    }

    /// Make malformed lines fatal instead of skipped.
    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    /// Warnings collected so far (lenient mode only).
    pub fn warnings(&self) -> &[ParseWarning] {
        &self.warnings
    }

    pub fn into_warnings(self) -> Vec<ParseWarning> {
        self.warnings
    }
}

impl<R: BufRead> Iterator for TripleReader<R> {
    type Item = Result<Triple, KgError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.inner.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(KgError::Io(e))),
            }
            self.line_no += 1;
            let line = self.buf.trim_end_matches(['\n', '\r']);
            match split_line(line) {
                Ok(None) => continue,
                Ok(Some((s, r, o))) => {
                    return Some(Ok(Triple {
                        subject: normalize_name(s),
                        relation: normalize_name(r),
                        object: normalize_name(o),
                    }))
                }
                Err(reason) => {
                    if self.strict {
                        return Some(Err(KgError::MalformedLine {
                            line: self.line_no,
                            reason,
                        }));
                    }
                    log::warn!("skipping malformed triple line {}: {reason}", self.line_no);
                    self.warnings.push(ParseWarning {
                        line: self.line_no,
                        reason,
                    });
                }
            }
        }
    }
}

/// Parse a byte stream of tab-separated triples (lenient mode).
pub fn parse_triples<R: BufRead>(reader: R) -> TripleReader<R> {
    TripleReader::new(reader)
}
