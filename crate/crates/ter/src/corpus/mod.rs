//! Documents: pre-parsed tokens plus gold event records.
//!
//! Parsing is out of scope — documents arrive as JSONL with per-token POS,
//! dependency relation, sentence/word positions and parent-node fields
//! already filled in. This module validates them against an ontology,
//! filters stopwords (remapping gold indices), splits corpora
//! deterministically, and (in [`synth`]) fabricates seeded synthetic
//! corpora for desk-scale experiments.

pub mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ontology::EventOntology;
use crate::par::map_slice;
use crate::Error;

/// Sentinel `parent_text` for dependency-tree roots.
pub const ROOT_PARENT: &str = "<ROOT>";

/// One parsed token with its dependency-parent information.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedToken {
    pub text: String,
    /// POS tag, e.g. "v", "n", "nh", "m", "nt".
    pub pos: String,
    /// Dependency relation to the parent, e.g. "SBV", "VOB", "HED".
    pub dep: String,
    /// 0-based sentence index within the document.
    pub sent_id: usize,
    /// 0-based position within the sentence.
    pub word_id: usize,
    /// Parent token's text; [`ROOT_PARENT`] for the root.
    pub parent_text: String,
    pub parent_pos: String,
    pub parent_dep: String,
}

/// One gold event: an id (1-based column number), a type, and the argument
/// tokens per role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event_id: usize,
    #[serde(rename = "type")]
    pub event_type: String,
    /// Role name -> argument token indices. BTreeMap keeps serialization
    /// deterministic.
    pub args: BTreeMap<String, Vec<usize>>,
}

/// A document: tokens plus gold event records (possibly none).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub tokens: Vec<ParsedToken>,
    #[serde(rename = "events")]
    pub gold_records: Vec<EventRecord>,
}

impl Document {
    /// Token count.
    pub fn n(&self) -> usize {
        self.tokens.len()
    }

    /// Check internal consistency against an ontology: known event types
    /// and roles, argument indices in bounds, non-empty argument lists, and
    /// event ids forming 1..=count.
    pub fn validate(&self, ont: &EventOntology) -> Result<(), Error> {
        let n = self.n();
        let mut ids: Vec<usize> = Vec::with_capacity(self.gold_records.len());
        for rec in &self.gold_records {
            ids.push(rec.event_id);
            let tdef = ont.event_type(&rec.event_type).ok_or_else(|| {
                Error::Invalid(format!(
                    "doc {:?}: unknown event type {:?}",
                    self.doc_id, rec.event_type
                ))
            })?;
            if rec.args.is_empty() {
                return Err(Error::Invalid(format!(
                    "doc {:?}: event {} has no arguments",
                    self.doc_id, rec.event_id
                )));
            }
            for (role, idxs) in &rec.args {
                if !tdef.roles.contains(role) {
                    return Err(Error::Invalid(format!(
                        "doc {:?}: role {:?} not in event type {:?}",
                        self.doc_id, role, rec.event_type
                    )));
                }
                if idxs.is_empty() {
                    return Err(Error::Invalid(format!(
                        "doc {:?}: event {} role {:?} has an empty argument list",
                        self.doc_id, rec.event_id, role
                    )));
                }
                let mut seen = BTreeSet::new();
                for &i in idxs {
                    if i >= n {
                        return Err(Error::Invalid(format!(
                            "doc {:?}: event {} role {:?} references token {} but doc has {} tokens",
                            self.doc_id, rec.event_id, role, i, n
                        )));
                    }
                    if !seen.insert(i) {
                        return Err(Error::Invalid(format!(
                            "doc {:?}: event {} role {:?} lists token {} twice",
                            self.doc_id, rec.event_id, role, i
                        )));
                    }
                }
            }
        }
        ids.sort_unstable();
        for (k, id) in ids.iter().enumerate() {
            if *id != k + 1 {
                return Err(Error::Invalid(format!(
                    "doc {:?}: event ids must be 1-based and consecutive, got {:?}",
                    self.doc_id, ids
                )));
            }
        }
        Ok(())
    }

    /// Largest gold event id (0 when the document has no events).
    pub fn max_event_id(&self) -> usize {
        self.gold_records.iter().map(|r| r.event_id).max().unwrap_or(0)
    }
}

/// Parse one JSONL line into a validated document.
fn parse_line(line: &str, lineno: usize, ont: &EventOntology) -> Result<Document, Error> {
    let doc: Document = serde_json::from_str(line)
        .map_err(|e| Error::Invalid(format!("line {lineno}: malformed document JSON: {e}")))?;
    doc.validate(ont)?;
    Ok(doc)
}

/// Read a JSONL corpus (one document per line; blank lines ignored) and
/// validate every document against the ontology.
pub fn ingest_parsed(path: &Path, ont: &EventOntology) -> Result<Vec<Document>, Error> {
    let text = std::fs::read_to_string(path)?;
    ingest_parsed_str(&text, ont)
}

/// [`ingest_parsed`] over in-memory text; documents are validated in
/// parallel when the `parallel` feature is on.
pub fn ingest_parsed_str(text: &str, ont: &EventOntology) -> Result<Vec<Document>, Error> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    map_slice(&lines, |&(no, line)| parse_line(line, no, ont))
        .into_iter()
        .collect()
}

/// Serialize documents as JSONL, one per line.
pub fn write_documents(path: &Path, docs: &[Document]) -> Result<(), Error> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for d in docs {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Load a stoplist: UTF-8 text, one entry per line, blanks skipped.
pub fn read_stoplist(path: &Path) -> Result<BTreeSet<String>, Error> {
    Ok(parse_stoplist(&std::fs::read_to_string(path)?))
}

/// Parse stoplist text (one entry per line, surrounding whitespace trimmed).
pub fn parse_stoplist(text: &str) -> BTreeSet<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()
}

/// POS tags that must never be filtered: the union of every dup-group
/// predicate in the ontology (dates and similar multi-role candidates).
pub fn protected_pos_tags(ont: &EventOntology) -> BTreeSet<String> {
    let mut set = BTreeSet::new();
    for t in &ont.event_types {
        for g in &t.dup_groups {
            set.extend(g.pos_tags.iter().cloned());
        }
    }
    set
}

/// Remove stopword tokens and remap gold argument indices onto the filtered
/// sequence. Tokens whose POS is in `protected_pos` are kept even if their
/// text is listed. A gold argument whose token would be removed signals a
/// corrupt annotation and is an error.
pub fn filter_stopwords(
    doc: &Document,
    stoplist: &BTreeSet<String>,
    protected_pos: &BTreeSet<String>,
) -> Result<Document, Error> {
    let n = doc.n();
    let keep: Vec<bool> = doc
        .tokens
        .iter()
        .map(|t| !stoplist.contains(&t.text) || protected_pos.contains(&t.pos))
        .collect();
    // new_index[i] = how many kept tokens precede i == i's new position.
    let mut new_index = vec![0usize; n];
    let mut kept = 0usize;
    for i in 0..n {
        new_index[i] = kept;
        if keep[i] {
            kept += 1;
        }
    }

    let mut out = Document {
        doc_id: doc.doc_id.clone(),
        tokens: doc
            .tokens
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(t, _)| t.clone())
            .collect(),
        gold_records: Vec::with_capacity(doc.gold_records.len()),
    };
    for rec in &doc.gold_records {
        let mut args = BTreeMap::new();
        for (role, idxs) in &rec.args {
            let mut mapped = Vec::with_capacity(idxs.len());
            for &i in idxs {
                if !keep[i] {
                    return Err(Error::Invalid(format!(
                        "doc {:?}: gold argument token {} ({:?}) is in the stoplist",
                        doc.doc_id, i, doc.tokens[i].text
                    )));
                }
                mapped.push(new_index[i]);
            }
            args.insert(role.clone(), mapped);
        }
        out.gold_records.push(EventRecord {
            event_id: rec.event_id,
            event_type: rec.event_type.clone(),
            args,
        });
    }
    Ok(out)
}

/// Deterministically shuffle and partition a corpus into train/dev/test.
///
/// Ratios must be non-negative and sum to 1 (±1e-9). Boundaries use
/// cumulative rounding so sizes are as close to exact proportions as
/// integer counts allow.
pub fn split_corpus(
    docs: Vec<Document>,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<Document>, Vec<Document>, Vec<Document>), Error> {
    if docs.is_empty() {
        return Err(Error::Invalid("cannot split an empty corpus".into()));
    }
    let (r1, r2, r3) = ratios;
    if r1 < 0.0 || r2 < 0.0 || r3 < 0.0 {
        return Err(Error::Invalid(format!("negative split ratio in {ratios:?}")));
    }
    if ((r1 + r2 + r3) - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!(
            "split ratios must sum to 1, got {}",
            r1 + r2 + r3
        )));
    }
    let n = docs.len();
    let mut order: Vec<usize> = (0..n).collect();
    crate::nncore::Rng::new(seed).shuffle(&mut order);

    let b1 = (r1 * n as f64).round() as usize;
    let b2 = ((r1 + r2) * n as f64).round() as usize;
    let (b1, b2) = (b1.min(n), b2.min(n).max(b1));

    let mut slots: Vec<Option<Document>> = docs.into_iter().map(Some).collect();
    let take = |slots: &mut Vec<Option<Document>>, idxs: &[usize]| -> Vec<Document> {
        idxs.iter().map(|&i| slots[i].take().expect("index appears once")).collect()
    };
    let train = take(&mut slots, &order[..b1]);
    let dev = take(&mut slots, &order[b1..b2]);
    let test = take(&mut slots, &order[b2..]);
    Ok((train, dev, test))
}
