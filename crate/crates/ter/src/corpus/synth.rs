//! Seeded synthetic corpora.
//!
//! Events are drawn first, then each event is rendered as one sentence that
//! embeds its argument tokens (subject–verb–object order with a trailing
//! date), padded with filler words — some of them stoplisted on purpose so
//! stopword filtering has something to chew on. Argument texts come from
//! role-typed lexicons, so POS and dependency features carry real signal.
//! Everything is driven by per-document RNG forks: document k is identical
//! no matter how many documents are generated around it or on how many
//! threads.

use std::collections::BTreeMap;

use super::{Document, EventRecord, ParsedToken, ROOT_PARENT};
use crate::nncore::Rng;
use crate::ontology::{EventOntology, EventTypeDef};
use crate::par::{map_slice, map_slice_seq};
use crate::Error;

/// Knobs for [`generate_synthetic`].
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub doc_count: usize,
    /// Approximate tokens per document; argument tokens may push past it.
    pub tokens_per_doc: usize,
    /// How many of the ontology's event types to draw from (the first k).
    pub event_type_count: usize,
    /// Upper bound on distinct roles filled per event.
    pub roles_per_type: usize,
    /// Inclusive (min, max) events per document.
    pub events_per_doc: (usize, usize),
    /// Event-slot count m that documents must fit into.
    pub event_slots: usize,
    /// Fraction of events where one token fills two dup-group roles.
    pub multi_role_rate: f64,
    /// Fraction of later events that reuse an earlier event's argument token.
    pub shared_arg_rate: f64,
    pub seed: u64,
}

impl SynthConfig {
    fn validate(&self, ont: &EventOntology) -> Result<(), Error> {
        let positive = [
            ("doc_count", self.doc_count),
            ("tokens_per_doc", self.tokens_per_doc),
            ("event_type_count", self.event_type_count),
            ("roles_per_type", self.roles_per_type),
            ("events_per_doc min", self.events_per_doc.0),
            ("event_slots", self.event_slots),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Invalid(format!("synth config: {name} must be >= 1")));
            }
        }
        if self.events_per_doc.0 > self.events_per_doc.1 {
            return Err(Error::Invalid(format!(
                "synth config: events_per_doc min {} exceeds max {}",
                self.events_per_doc.0, self.events_per_doc.1
            )));
        }
        if self.events_per_doc.1 > self.event_slots {
            return Err(Error::Invalid(format!(
                "synth config infeasible: up to {} events per doc but only {} event slots",
                self.events_per_doc.1, self.event_slots
            )));
        }
        for rate in [("multi_role_rate", self.multi_role_rate), ("shared_arg_rate", self.shared_arg_rate)]
        {
            if !(0.0..=1.0).contains(&rate.1) {
                return Err(Error::Invalid(format!(
                    "synth config: {} must be in [0,1], got {}",
                    rate.0, rate.1
                )));
            }
        }
        if self.event_type_count > ont.type_count() {
            return Err(Error::Invalid(format!(
                "synth config: {} event types requested but ontology has {}",
                self.event_type_count,
                ont.type_count()
            )));
        }
        for t in &ont.event_types[..self.event_type_count] {
            if self.roles_per_type > t.role_count() {
                return Err(Error::Invalid(format!(
                    "synth config: roles_per_type {} exceeds {} roles of event type {:?}",
                    self.roles_per_type,
                    t.role_count(),
                    t.name
                )));
            }
        }
        Ok(())
    }
}

const NAMES: &[&str] = &[
    "Li Hua", "Zhang Wei", "Wang Fang", "Chen Jie", "Liu Yang", "Zhao Min", "Sun Li",
    "Zhou Qiang", "Wu Ying", "Zheng Bo", "Feng Lan", "Cao Rui",
];
const INSTITUTIONS: &[&str] = &[
    "High Court", "Securities Bureau", "Trust Fund", "Capital Partners", "Clearing House",
    "Provincial Court",
];
const DATES: &[&str] = &[
    "January", "February", "March", "April", "May", "June", "July", "August", "September",
    "October", "November", "December",
];
const NOUNS: &[&str] = &[
    "shares", "stake", "holdings", "pledge", "announcement", "agreement", "statement", "filing",
    "transaction", "plan",
];
const VERBS: &[&str] = &["increased", "reduced", "froze", "pledged", "repurchased", "unfroze"];
// Filler drawn partly from the shipped stoplist so filtering is exercised.
const FILLER: &[&str] = &["the", "of", "to", "and", "recently", "officially", "today", ",", "."];
const FILLER_POS: &[&str] = &["u", "u", "u", "u", "d", "d", "d", "wp", "wp"];

/// What kind of token a role needs, decided from its name.
#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Date,
    Number,
    Person,
    Institution,
    Noun,
}

fn role_kind(role: &str) -> Kind {
    if role.contains("Date") {
        Kind::Date
    } else if role.contains("Shares") || role.contains("Price") || role.contains("Ratio")
        || role.contains("Amount")
    {
        Kind::Number
    } else if role.contains("Institution") || role.contains("Pledgee") || role.contains("Name") {
        Kind::Institution
    } else if role.contains("Holder") || role.contains("Pledger") {
        Kind::Person
    } else {
        Kind::Noun
    }
}

fn kind_pos(kind: Kind) -> &'static str {
    match kind {
        Kind::Date => "nt",
        Kind::Number => "m",
        Kind::Person => "nh",
        Kind::Institution => "ni",
        Kind::Noun => "n",
    }
}

fn kind_dep(kind: Kind) -> &'static str {
    match kind {
        Kind::Date => "ADV",
        Kind::Number => "ATT",
        Kind::Person => "SBV",
        Kind::Institution => "SBV",
        Kind::Noun => "VOB",
    }
}

fn sample_text(kind: Kind, rng: &mut Rng) -> String {
    match kind {
        Kind::Date => rng.choose(DATES).to_string(),
        Kind::Number => {
            let v = rng.range(1, 99_999) * 1000;
            // Thousands separators, matching how numbers look in filings.
            let s = v.to_string();
            let bytes = s.as_bytes();
            let mut out = String::new();
            for (i, b) in bytes.iter().enumerate() {
                if i > 0 && (bytes.len() - i) % 3 == 0 {
                    out.push(',');
                }
                out.push(*b as char);
            }
            out
        }
        Kind::Person => rng.choose(NAMES).to_string(),
        Kind::Institution => rng.choose(INSTITUTIONS).to_string(),
        Kind::Noun => rng.choose(NOUNS).to_string(),
    }
}

/// An argument token planned for a document, before sentence layout.
struct ArgToken {
    text: String,
    kind: Kind,
    /// (event index, role name, role tag order irrelevant here)
    fills: Vec<(usize, String)>,
    /// Sentence (= event index) this token is rendered in.
    sentence: usize,
}

fn generate_doc(cfg: &SynthConfig, ont: &EventOntology, doc_idx: usize) -> Document {
    let mut rng = Rng::new(cfg.seed).fork(doc_idx as u64);
    let types: Vec<&EventTypeDef> = ont.event_types[..cfg.event_type_count].iter().collect();

    let event_count = rng.range(cfg.events_per_doc.0, cfg.events_per_doc.1);
    let mut args: Vec<ArgToken> = Vec::new();
    let mut records: Vec<(String, BTreeMap<String, Vec<usize>>)> = Vec::new(); // arg idx = position in `args`

    for ev in 0..event_count {
        let tdef = *rng.choose(&types);
        let mut roles_left: Vec<&String> = tdef.roles.iter().collect();
        let mut filled: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut budget = rng.range(1, cfg.roles_per_type);

        // Multi-role case first: one fresh token covering a whole dup group.
        if !tdef.dup_groups.is_empty() && rng.chance(cfg.multi_role_rate) {
            let group = tdef.dup_groups[rng.below(tdef.dup_groups.len())].clone();
            let kind = role_kind(&group.roles[0]);
            let idx = args.len();
            args.push(ArgToken {
                text: sample_text(kind, &mut rng),
                kind,
                fills: group.roles.iter().map(|r| (ev, r.clone())).collect(),
                sentence: ev,
            });
            for r in &group.roles {
                filled.insert(r.clone(), vec![idx]);
                roles_left.retain(|x| *x != r);
            }
            budget = budget.saturating_sub(group.roles.len()).max(0);
        }

        // Remaining roles, each with a fresh or shared token.
        for _ in 0..budget {
            if roles_left.is_empty() {
                break;
            }
            let role = roles_left.remove(rng.below(roles_left.len())).clone();
            let kind = role_kind(&role);
            // Shared argument: reuse a token of the same kind from an
            // earlier event, mirroring cross-event argument overlap.
            let reuse = if ev > 0 && rng.chance(cfg.shared_arg_rate) {
                let pool: Vec<usize> = args
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| a.kind == kind && a.fills.iter().all(|(e, _)| *e < ev))
                    .map(|(i, _)| i)
                    .collect();
                if pool.is_empty() { None } else { Some(pool[rng.below(pool.len())]) }
            } else {
                None
            };
            let idx = match reuse {
                Some(i) => {
                    args[i].fills.push((ev, role.clone()));
                    i
                }
                None => {
                    let idx = args.len();
                    args.push(ArgToken {
                        text: sample_text(kind, &mut rng),
                        kind,
                        fills: vec![(ev, role.clone())],
                        sentence: ev,
                    });
                    idx
                }
            };
            filled.insert(role, vec![idx]);
        }
        records.push((tdef.name.clone(), filled));
    }

    // Render one sentence per event: [subject-ish args] verb [other args]
    // plus filler to stretch toward tokens_per_doc.
    let filler_budget = cfg.tokens_per_doc.saturating_sub(args.len() + event_count);
    let per_sentence_filler = filler_budget / event_count.max(1);

    let mut tokens: Vec<ParsedToken> = Vec::new();
    let mut arg_token_index: Vec<Option<usize>> = vec![None; args.len()];
    for sent in 0..event_count {
        let verb = rng.choose(VERBS).to_string();
        let mut word_id = 0;
        let push = |tokens: &mut Vec<ParsedToken>,
                        word_id: &mut usize,
                        text: String,
                        pos: &str,
                        dep: &str,
                        is_root: bool| {
            let (pt, pp, pd) = if is_root {
                (ROOT_PARENT.into(), ROOT_PARENT.into(), ROOT_PARENT.into())
            } else {
                (verb.clone(), "v".to_string(), "HED".to_string())
            };
            tokens.push(ParsedToken {
                text,
                pos: pos.into(),
                dep: dep.into(),
                sent_id: sent,
                word_id: *word_id,
                parent_text: pt,
                parent_pos: pp,
                parent_dep: pd,
            });
            *word_id += 1;
        };

        let mine: Vec<usize> =
            (0..args.len()).filter(|&i| args[i].sentence == sent).collect();
        // Subjects (persons, institutions) before the verb.
        for &i in mine.iter().filter(|&&i| matches!(args[i].kind, Kind::Person | Kind::Institution))
        {
            arg_token_index[i] = Some(tokens.len());
            push(&mut tokens, &mut word_id, args[i].text.clone(), kind_pos(args[i].kind), kind_dep(args[i].kind), false);
        }
        push(&mut tokens, &mut word_id, verb.clone(), "v", "HED", true);
        for &i in mine.iter().filter(|&&i| !matches!(args[i].kind, Kind::Person | Kind::Institution))
        {
            arg_token_index[i] = Some(tokens.len());
            push(&mut tokens, &mut word_id, args[i].text.clone(), kind_pos(args[i].kind), kind_dep(args[i].kind), false);
        }
        for _ in 0..per_sentence_filler {
            let f = rng.below(FILLER.len());
            push(&mut tokens, &mut word_id, FILLER[f].into(), FILLER_POS[f], "ATT", false);
        }
    }

    let gold_records: Vec<EventRecord> = records
        .into_iter()
        .enumerate()
        .map(|(ev, (event_type, filled))| EventRecord {
            event_id: ev + 1,
            event_type,
            args: filled
                .into_iter()
                .map(|(role, idxs)| {
                    (role, idxs.into_iter().map(|i| arg_token_index[i].expect("placed")).collect())
                })
                .collect(),
        })
        .collect();

    Document { doc_id: format!("synth-{:05}", doc_idx), tokens, gold_records }
}

/// Generate a deterministic synthetic corpus. Parallel across documents
/// when the `parallel` feature is on; output is identical either way.
pub fn generate_synthetic(cfg: &SynthConfig, ont: &EventOntology) -> Result<Vec<Document>, Error> {
    cfg.validate(ont)?;
    let idxs: Vec<usize> = (0..cfg.doc_count).collect();
    Ok(map_slice(&idxs, |&i| generate_doc(cfg, ont, i)))
}

/// Always-sequential twin of [`generate_synthetic`] for benchmarking.
pub fn generate_synthetic_seq(
    cfg: &SynthConfig,
    ont: &EventOntology,
) -> Result<Vec<Document>, Error> {
    cfg.validate(ont)?;
    let idxs: Vec<usize> = (0..cfg.doc_count).collect();
    Ok(map_slice_seq(&idxs, |&i| generate_doc(cfg, ont, i)))
}
