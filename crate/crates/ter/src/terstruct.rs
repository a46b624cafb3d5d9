//! Token-event pairs and token-event-role matrices.
//!
//! Every token is paired with every event slot (token-major, event index
//! fastest). Tokens whose POS matches a dup-group predicate get duplicate
//! rows so one token can carry several role tags within a single event
//! (e.g. a lone date acting as both StartDate and EndDate). The gold matrix
//! for an event type is then a (rowCount × m) grid of role tags, with
//! column j holding event j's argument roles and 0 everywhere else.
//!
//! Also here: the spatial-complexity calculator comparing this layout's
//! cell count against other document-level extraction schemes.

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::ontology::{EventOntology, RoleNumbering, RoleTag};
use crate::Error;

/// One (token, event-slot) pair; `event` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenEventPair {
    pub token: usize,
    pub event: usize,
}

/// All n·m pairs in token-major order: pair index = token·m + (event−1).
pub fn build_pairs(doc: &Document, m: usize) -> Result<Vec<TokenEventPair>, Error> {
    let max_id = doc.max_event_id();
    if m < max_id {
        return Err(Error::Invalid(format!(
            "doc {:?} has gold event id {} but only {} event slots",
            doc.doc_id, max_id, m
        )));
    }
    let mut pairs = Vec::with_capacity(doc.n() * m);
    for token in 0..doc.n() {
        for event in 1..=m {
            pairs.push(TokenEventPair { token, event });
        }
    }
    Ok(pairs)
}

/// One matrix row: a token and which copy of it this is (0 = original).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowRef {
    pub token: usize,
    pub copy: usize,
}

/// Static row layout for a document: originals in token order, duplicates
/// immediately after their original.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowPlan {
    rows: Vec<RowRef>,
    /// token -> index of its copy-0 row.
    first_row: Vec<usize>,
    /// token -> total rows (1 + duplicates).
    row_counts: Vec<usize>,
}

impl RowPlan {
    pub fn rows(&self) -> &[RowRef] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    /// Index of the copy-0 row of `token`.
    pub fn first_row(&self, token: usize) -> usize {
        self.first_row[token]
    }

    /// Number of rows allocated to `token`.
    pub fn rows_for(&self, token: usize) -> usize {
        self.row_counts[token]
    }
}

/// Allocate rows: a token whose POS appears in any dup-group predicate (of
/// any event type) gets as many rows as the largest such group; every other
/// token gets one row.
pub fn plan_duplicates(doc: &Document, ont: &EventOntology) -> RowPlan {
    let mut rows = Vec::with_capacity(doc.n());
    let mut first_row = Vec::with_capacity(doc.n());
    let mut row_counts = Vec::with_capacity(doc.n());
    for (token, t) in doc.tokens.iter().enumerate() {
        let mut count = 1;
        for def in &ont.event_types {
            for g in &def.dup_groups {
                if g.pos_tags.iter().any(|p| p == &t.pos) {
                    count = count.max(g.roles.len());
                }
            }
        }
        first_row.push(rows.len());
        row_counts.push(count);
        for copy in 0..count {
            rows.push(RowRef { token, copy });
        }
    }
    RowPlan { rows, first_row, row_counts }
}

/// Per-event-type grid of role tags over (rowCount × m) cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TerMatrix {
    pub event_type: String,
    pub m: usize,
    pub plan: RowPlan,
    /// Row-major tags: cell (row, event j) at `row * m + (j-1)`.
    tags: Vec<RoleTag>,
}

impl TerMatrix {
    /// All-zero matrix for a plan.
    pub fn zero(event_type: &str, m: usize, plan: RowPlan) -> Self {
        let tags = vec![0; plan.row_count() * m];
        TerMatrix { event_type: event_type.to_string(), m, plan, tags }
    }

    pub fn row_count(&self) -> usize {
        self.plan.row_count()
    }

    /// Tag at (row, event); `event` is 1-based.
    pub fn tag(&self, row: usize, event: usize) -> RoleTag {
        self.tags[row * self.m + (event - 1)]
    }

    pub fn set_tag(&mut self, row: usize, event: usize, tag: RoleTag) {
        self.tags[row * self.m + (event - 1)] = tag;
    }

    /// Flat row-major tags, one per (row, event) cell.
    pub fn flat_tags(&self) -> &[RoleTag] {
        &self.tags
    }

    /// Nonzero cells as (row, event, tag) with 1-based event.
    pub fn nonzero(&self) -> Vec<(usize, usize, RoleTag)> {
        let mut out = Vec::new();
        for row in 0..self.row_count() {
            for event in 1..=self.m {
                let tag = self.tag(row, event);
                if tag != 0 {
                    out.push((row, event, tag));
                }
            }
        }
        out
    }
}

/// Build the gold matrix of one event type. For each gold record of this
/// type with id j, every argument token's rows receive the corresponding
/// role tags in column j — ascending tags across the token's copies, so a
/// two-role date holds the lower tag on copy 0 and the higher on copy 1.
pub fn build_gold_matrix(
    doc: &Document,
    num: &RoleNumbering,
    m: usize,
    plan: &RowPlan,
    event_type: &str,
) -> Result<TerMatrix, Error> {
    let max_id = doc.max_event_id();
    if m < max_id {
        return Err(Error::Invalid(format!(
            "doc {:?} has gold event id {} but only {} event slots",
            doc.doc_id, max_id, m
        )));
    }
    let mut out = TerMatrix::zero(event_type, m, plan.clone());
    for rec in doc.gold_records.iter().filter(|r| r.event_type == event_type) {
        // Collect tags per token for this one event.
        let mut per_token: std::collections::BTreeMap<usize, Vec<RoleTag>> = Default::default();
        for (role, idxs) in &rec.args {
            let tag = num.role_tag(event_type, role)?;
            for &i in idxs {
                per_token.entry(i).or_default().push(tag);
            }
        }
        for (token, mut tags) in per_token {
            tags.sort_unstable();
            if tags.len() > plan.rows_for(token) {
                return Err(Error::Invalid(format!(
                    "doc {:?} event {}: token {} ({:?}) fills {} roles but has only {} rows; \
                     ontology dup groups do not cover this case",
                    doc.doc_id,
                    rec.event_id,
                    token,
                    doc.tokens[token].text,
                    tags.len(),
                    plan.rows_for(token)
                )));
            }
            for (copy, tag) in tags.into_iter().enumerate() {
                out.set_tag(plan.first_row(token) + copy, rec.event_id, tag);
            }
        }
    }
    Ok(out)
}

/// Gold matrices for every event type of the ontology, in type order.
pub fn build_gold_matrices(
    doc: &Document,
    ont: &EventOntology,
    num: &RoleNumbering,
    m: usize,
) -> Result<Vec<TerMatrix>, Error> {
    let plan = plan_duplicates(doc, ont);
    ont.event_types
        .iter()
        .map(|t| build_gold_matrix(doc, num, m, &plan, &t.name))
        .collect()
}

// --- sparse serialization -------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SparseMatrix {
    #[serde(rename = "type")]
    event_type: String,
    m: usize,
    rows: Vec<RowRef>,
    /// Nonzero cells only: [row, column (0-based), tag].
    cells: Vec<(usize, usize, RoleTag)>,
}

impl Serialize for TerMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let cells = self
            .nonzero()
            .into_iter()
            .map(|(row, event, tag)| (row, event - 1, tag))
            .collect();
        SparseMatrix {
            event_type: self.event_type.clone(),
            m: self.m,
            rows: self.plan.rows.clone(),
            cells,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TerMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let sp = SparseMatrix::deserialize(d)?;
        // Rebuild the plan lookups from the row list.
        let mut first_row = Vec::new();
        let mut row_counts: Vec<usize> = Vec::new();
        for (i, r) in sp.rows.iter().enumerate() {
            if r.copy == 0 {
                if r.token != first_row.len() {
                    return Err(D::Error::custom(format!(
                        "row list tokens out of order at row {i}"
                    )));
                }
                first_row.push(i);
                row_counts.push(1);
            } else {
                let last = row_counts
                    .last_mut()
                    .ok_or_else(|| D::Error::custom("duplicate row before any original"))?;
                if r.token + 1 != first_row.len() || r.copy != *last {
                    return Err(D::Error::custom(format!(
                        "duplicate row {i} does not follow its original consecutively"
                    )));
                }
                *last += 1;
            }
        }
        let plan = RowPlan { rows: sp.rows, first_row, row_counts };
        let mut out = TerMatrix::zero(&sp.event_type, sp.m, plan);
        for (row, col, tag) in sp.cells {
            if row >= out.row_count() || col >= sp.m {
                return Err(D::Error::custom(format!(
                    "cell ({row},{col}) outside {}x{} matrix",
                    out.row_count(),
                    sp.m
                )));
            }
            out.set_tag(row, col + 1, tag);
        }
        Ok(out)
    }
}

// --- spatial complexity ---------------------------------------------------

/// Document-level extraction schemes compared by tagging-cell count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    DePpn,
    Doc2Edag,
    Git,
    ReDee,
    Scdee,
    Ptpcg,
    TerEntity,
    TerToken,
}

impl Scheme {
    pub const ALL: [Scheme; 8] = [
        Scheme::DePpn,
        Scheme::Doc2Edag,
        Scheme::Git,
        Scheme::ReDee,
        Scheme::Scdee,
        Scheme::Ptpcg,
        Scheme::TerEntity,
        Scheme::TerToken,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::DePpn => "DE-PPN",
            Scheme::Doc2Edag => "Doc2EDAG",
            Scheme::Git => "GIT",
            Scheme::ReDee => "ReDEE",
            Scheme::Scdee => "SCDEE",
            Scheme::Ptpcg => "PTPCG",
            Scheme::TerEntity => "TER-entity",
            Scheme::TerToken => "TER-token",
        }
    }

    pub fn parse(s: &str) -> Result<Scheme, Error> {
        Scheme::ALL
            .iter()
            .copied()
            .find(|sc| sc.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "unknown scheme {s:?}; expected one of {}",
                    Scheme::ALL.map(|ic| ic.name()).join(", ")
                ))
            })
    }
}

/// Inputs to [`complexity_cells`]; schemes require different subsets.
#[derive(Debug, Clone, Copy, Default)]
pub struct ComplexityInputs {
    /// Entity count.
    pub n: Option<u64>,
    /// Token count.
    pub n_tokens: Option<u64>,
    /// Event-slot count.
    pub m: Option<u64>,
    /// Gold events in the document.
    pub m_prime: Option<u64>,
    /// Roles per event type.
    pub r: Option<u64>,
    /// Sentence count.
    pub s: Option<u64>,
    /// Path count.
    pub p: Option<u64>,
    /// Candidate-argument count.
    pub k: Option<u64>,
}

fn need(field: Option<u64>, name: &str, scheme: Scheme) -> Result<u64, Error> {
    field.ok_or_else(|| {
        Error::Invalid(format!("scheme {} requires input {name}", scheme.name()))
    })
}

fn mul(a: u64, b: u64) -> Result<u64, Error> {
    a.checked_mul(b).ok_or_else(|| Error::Invalid("complexity cell count overflows u64".into()))
}

fn add(a: u64, b: u64) -> Result<u64, Error> {
    a.checked_add(b).ok_or_else(|| Error::Invalid("complexity cell count overflows u64".into()))
}

/// Tagging-cell count of a scheme on the given inputs.
pub fn complexity_cells(scheme: Scheme, inp: &ComplexityInputs) -> Result<u64, Error> {
    match scheme {
        // m·n·r
        Scheme::DePpn => {
            let (n, m, r) =
                (need(inp.n, "n", scheme)?, need(inp.m, "m", scheme)?, need(inp.r, "r", scheme)?);
            mul(mul(m, n)?, r)
        }
        // n·p·r
        Scheme::Doc2Edag => {
            let (n, p, r) =
                (need(inp.n, "n", scheme)?, need(inp.p, "p", scheme)?, need(inp.r, "r", scheme)?);
            mul(mul(n, p)?, r)
        }
        // n·p·r + n²
        Scheme::Git => {
            let (n, p, r) =
                (need(inp.n, "n", scheme)?, need(inp.p, "p", scheme)?, need(inp.r, "r", scheme)?);
            add(mul(mul(n, p)?, r)?, mul(n, n)?)
        }
        // (n+s)²·r
        Scheme::ReDee => {
            let (n, s, r) =
                (need(inp.n, "n", scheme)?, need(inp.s, "s", scheme)?, need(inp.r, "r", scheme)?);
            let ns = add(n, s)?;
            mul(mul(ns, ns)?, r)
        }
        // s·m + m'·k·r
        Scheme::Scdee => {
            let (s, m, mp, k, r) = (
                need(inp.s, "s", scheme)?,
                need(inp.m, "m", scheme)?,
                need(inp.m_prime, "m_prime", scheme)?,
                need(inp.k, "k", scheme)?,
                need(inp.r, "r", scheme)?,
            );
            add(mul(s, m)?, mul(mul(mp, k)?, r)?)
        }
        // n² + m'·k·r
        Scheme::Ptpcg => {
            let (n, mp, k, r) = (
                need(inp.n, "n", scheme)?,
                need(inp.m_prime, "m_prime", scheme)?,
                need(inp.k, "k", scheme)?,
                need(inp.r, "r", scheme)?,
            );
            add(mul(n, n)?, mul(mul(mp, k)?, r)?)
        }
        // n·m
        Scheme::TerEntity => {
            let (n, m) = (need(inp.n, "n", scheme)?, need(inp.m, "m", scheme)?);
            mul(n, m)
        }
        // N·m
        Scheme::TerToken => {
            let (nt, m) = (need(inp.n_tokens, "N", scheme)?, need(inp.m, "m", scheme)?);
            mul(nt, m)
        }
    }
}
