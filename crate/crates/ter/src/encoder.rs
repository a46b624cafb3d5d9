//! Per-pair feature integration and the stacked bidirectional LSTM.
//!
//! Every (row, event) position of a document gets one integrated vector:
//! the token's semantic embedding, the event-slot embedding, POS/dependency/
//! position features, and the dependency parent's word/POS/relation
//! embeddings, concatenated in a fixed order. A duplicate row reuses its
//! original token's features — only the role tags distinguish the copies.
//! The pair sequence (row-major, event index fastest) then runs through a
//! stacked Bi-LSTM; each position comes out as forward‖backward state.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::nncore::{Graph, NodeId, ParamStore, Rng, Tensor};
use crate::terstruct::RowPlan;
use crate::Error;

/// Input features that can be switched off for ablation studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Feature {
    Pos,
    Dep,
    SenId,
    WordId,
    PWord,
    PPos,
    PDep,
    /// Event-slot id embedding.
    EId,
    /// Event-type embedding concatenated in the channel heads.
    EType,
    /// Everything except the token's semantic embedding.
    All,
}

impl Feature {
    pub const ALL_FLAGS: [Feature; 10] = [
        Feature::Pos,
        Feature::Dep,
        Feature::SenId,
        Feature::WordId,
        Feature::PWord,
        Feature::PPos,
        Feature::PDep,
        Feature::EId,
        Feature::EType,
        Feature::All,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Feature::Pos => "pos",
            Feature::Dep => "dep",
            Feature::SenId => "senid",
            Feature::WordId => "wordid",
            Feature::PWord => "pword",
            Feature::PPos => "ppos",
            Feature::PDep => "pdep",
            Feature::EId => "eid",
            Feature::EType => "etype",
            Feature::All => "all",
        }
    }

    pub fn parse(s: &str) -> Result<Feature, Error> {
        Feature::ALL_FLAGS
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown ablation flag {s:?}")))
    }

    /// Parse a comma-separated ablation list, e.g. "pos,pdep".
    pub fn parse_list(s: &str) -> Result<BTreeSet<Feature>, Error> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(Feature::parse)
            .collect()
    }
}

/// Dimensions, depth, dropout rate and ablation switches for the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub sem_dim: usize,
    pub feat_dim: usize,
    pub hidden_size: usize,
    pub lstm_layers: usize,
    pub dropout: f64,
    pub ablation: BTreeSet<Feature>,
    /// Sentence-id table size; larger indices clamp to the last row.
    pub sent_cap: usize,
    /// Word-position table size; larger indices clamp to the last row.
    pub word_cap: usize,
}

impl FeatureConfig {
    /// Full-scale dimensions (token 768, features 50, hidden 200, 4 layers).
    pub fn paper() -> Self {
        FeatureConfig {
            sem_dim: 768,
            feat_dim: 50,
            hidden_size: 200,
            lstm_layers: 4,
            dropout: 0.2,
            ablation: BTreeSet::new(),
            sent_cap: 128,
            word_cap: 256,
        }
    }

    /// Desk-scale dimensions for minutes-not-hours experiments.
    pub fn desk() -> Self {
        FeatureConfig { sem_dim: 64, feat_dim: 16, hidden_size: 64, lstm_layers: 2, ..Self::paper() }
    }

    pub fn validate(&self) -> Result<(), Error> {
        for (name, v) in [
            ("sem_dim", self.sem_dim),
            ("feat_dim", self.feat_dim),
            ("hidden_size", self.hidden_size),
            ("lstm_layers", self.lstm_layers),
            ("sent_cap", self.sent_cap),
            ("word_cap", self.word_cap),
        ] {
            if v == 0 {
                return Err(Error::Invalid(format!("feature config: {name} must be >= 1")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Invalid(format!(
                "feature config: dropout must be in [0,1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Is this feature disabled (directly or via "all")?
    pub fn ablated(&self, f: Feature) -> bool {
        self.ablation.contains(&Feature::All) || self.ablation.contains(&f)
    }

    /// Width of the integrated per-pair vector under the current ablation.
    pub fn integrated_dim(&self) -> usize {
        let mut d = self.sem_dim;
        if !self.ablated(Feature::EId) {
            d += self.feat_dim;
        }
        for f in [Feature::Pos, Feature::Dep, Feature::SenId, Feature::WordId] {
            if !self.ablated(f) {
                d += self.feat_dim;
            }
        }
        if !self.ablated(Feature::PWord) {
            d += self.sem_dim; // parent word shares the token table
        }
        for f in [Feature::PPos, Feature::PDep] {
            if !self.ablated(f) {
                d += self.feat_dim;
            }
        }
        d
    }
}

/// String-indexed vocabularies built from the training split. Index 0 is
/// always `<UNK>`; unseen strings map there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    pos: Vec<String>,
    dep: Vec<String>,
    #[serde(skip)]
    token_index: BTreeMap<String, usize>,
    #[serde(skip)]
    pos_index: BTreeMap<String, usize>,
    #[serde(skip)]
    dep_index: BTreeMap<String, usize>,
}

pub const UNK: &str = "<UNK>";

fn build_index(items: &[String]) -> BTreeMap<String, usize> {
    items.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect()
}

impl Vocab {
    /// Collect sorted unique token texts, POS tags and dependency relations
    /// (parent fields included) from the given documents.
    pub fn build(docs: &[Document]) -> Vocab {
        let mut tokens = BTreeSet::new();
        let mut pos = BTreeSet::new();
        let mut dep = BTreeSet::new();
        for d in docs {
            for t in &d.tokens {
                tokens.insert(t.text.clone());
                tokens.insert(t.parent_text.clone());
                pos.insert(t.pos.clone());
                pos.insert(t.parent_pos.clone());
                dep.insert(t.dep.clone());
                dep.insert(t.parent_dep.clone());
            }
        }
        let with_unk = |set: BTreeSet<String>| {
            let mut v = vec![UNK.to_string()];
            v.extend(set.into_iter().filter(|s| s != UNK));
            v
        };
        let (tokens, pos, dep) = (with_unk(tokens), with_unk(pos), with_unk(dep));
        Vocab {
            token_index: build_index(&tokens),
            pos_index: build_index(&pos),
            dep_index: build_index(&dep),
            tokens,
            pos,
            dep,
        }
    }

    /// Rebuild the lookup maps after deserialization (they are skipped on
    /// the wire).
    pub fn reindex(&mut self) {
        self.token_index = build_index(&self.tokens);
        self.pos_index = build_index(&self.pos);
        self.dep_index = build_index(&self.dep);
    }

    pub fn token_id(&self, text: &str) -> usize {
        self.token_index.get(text).copied().unwrap_or(0)
    }

    pub fn pos_id(&self, tag: &str) -> usize {
        self.pos_index.get(tag).copied().unwrap_or(0)
    }

    pub fn dep_id(&self, rel: &str) -> usize {
        self.dep_index.get(rel).copied().unwrap_or(0)
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn pos_count(&self) -> usize {
        self.pos.len()
    }

    pub fn dep_count(&self) -> usize {
        self.dep.len()
    }
}

/// Frozen, pre-computed token vectors that take precedence over the
/// trainable table (the stand-in for contextual-model embeddings).
#[derive(Debug, Clone)]
pub struct EmbedOverride {
    index: BTreeMap<String, usize>,
    matrix: Tensor,
}

impl EmbedOverride {
    pub fn new(entries: Vec<(String, Vec<f64>)>, sem_dim: usize) -> Result<Self, Error> {
        let mut index = BTreeMap::new();
        let mut data = Vec::with_capacity(entries.len() * sem_dim);
        for (i, (text, vec)) in entries.iter().enumerate() {
            if vec.len() != sem_dim {
                return Err(Error::Invalid(format!(
                    "embedding for {text:?} has {} values, expected {sem_dim}",
                    vec.len()
                )));
            }
            if index.insert(text.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate embedding entry {text:?}")));
            }
            data.extend_from_slice(vec);
        }
        let rows = entries.len();
        Ok(EmbedOverride { index, matrix: Tensor::from_vec(&[rows, sem_dim], data) })
    }

    pub fn row_of(&self, text: &str) -> Option<usize> {
        self.index.get(text).copied()
    }

    /// Embedding width.
    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    /// All frozen entries as (token text, vector), sorted by text.
    pub fn tokens(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.index.iter().map(|(text, &row)| (text.as_str(), self.matrix.row(row)))
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

// Parameter names; the encoder owns the embedding tables and the LSTM stack.
pub const P_TOKEN: &str = "embed.token";
pub const P_EVENT_ID: &str = "embed.event_id";
pub const P_POS: &str = "embed.pos";
pub const P_DEP: &str = "embed.dep";
pub const P_SENT: &str = "embed.sent_id";
pub const P_WORD: &str = "embed.word_id";
pub const P_EVENT_TYPE: &str = "embed.event_type";

fn lstm_param(layer: usize, dir: &str, which: &str) -> String {
    format!("lstm.{layer}.{dir}.{which}")
}

fn embedding_init(rng: &mut Rng, rows: usize, dim: usize) -> Tensor {
    let bound = 0.5 / dim as f64;
    let data = (0..rows * dim).map(|_| rng.uniform(-bound, bound)).collect();
    Tensor::from_vec(&[rows, dim], data)
}

fn weight_init(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.uniform(-0.08, 0.08)).collect();
    Tensor::from_vec(&[rows, cols], data)
}

/// Register all encoder parameters: embedding tables (skipping ablated
/// ones) and the stacked Bi-LSTM weights. `m` sizes the event-id table,
/// `u` the event-type table.
pub fn init_encoder_params(
    store: &mut ParamStore,
    vocab: &Vocab,
    cfg: &FeatureConfig,
    m: usize,
    u: usize,
    rng: &mut Rng,
) -> Result<(), Error> {
    cfg.validate()?;
    store.insert(P_TOKEN, embedding_init(rng, vocab.token_count(), cfg.sem_dim))?;
    if !cfg.ablated(Feature::EId) {
        store.insert(P_EVENT_ID, embedding_init(rng, m, cfg.feat_dim))?;
    }
    if !cfg.ablated(Feature::Pos) {
        store.insert(P_POS, embedding_init(rng, vocab.pos_count(), cfg.feat_dim))?;
    }
    if !cfg.ablated(Feature::Dep) {
        store.insert(P_DEP, embedding_init(rng, vocab.dep_count(), cfg.feat_dim))?;
    }
    if !cfg.ablated(Feature::SenId) {
        store.insert(P_SENT, embedding_init(rng, cfg.sent_cap, cfg.feat_dim))?;
    }
    if !cfg.ablated(Feature::WordId) {
        store.insert(P_WORD, embedding_init(rng, cfg.word_cap, cfg.feat_dim))?;
    }
    // pPOS/pDep reuse the POS/dep tables; pWord reuses the token table.
    if cfg.ablated(Feature::Pos) && !cfg.ablated(Feature::PPos) {
        store.insert(P_POS, embedding_init(rng, vocab.pos_count(), cfg.feat_dim))?;
    }
    if cfg.ablated(Feature::Dep) && !cfg.ablated(Feature::PDep) {
        store.insert(P_DEP, embedding_init(rng, vocab.dep_count(), cfg.feat_dim))?;
    }
    if !cfg.ablated(Feature::EType) {
        store.insert(P_EVENT_TYPE, embedding_init(rng, u, cfg.feat_dim))?;
    }

    let h = cfg.hidden_size;
    for layer in 0..cfg.lstm_layers {
        let in_dim = if layer == 0 { cfg.integrated_dim() } else { 2 * h };
        for dir in ["fwd", "bwd"] {
            store.insert(&lstm_param(layer, dir, "w_x"), weight_init(rng, in_dim, 4 * h))?;
            store.insert(&lstm_param(layer, dir, "w_h"), weight_init(rng, h, 4 * h))?;
            // Zero biases except the forget gate, initialized to 1 so early
            // training does not flush cell state.
            let mut b = Tensor::zeros(&[1, 4 * h]);
            for i in h..2 * h {
                b.data_mut()[i] = 1.0;
            }
            store.insert(&lstm_param(layer, dir, "b"), b)?;
        }
    }
    Ok(())
}

/// Semantic embedding of one token text: the frozen override vector when
/// present, otherwise the trainable table row (`<UNK>` for unseen tokens).
pub fn embed_token(
    g: &mut Graph,
    store: &ParamStore,
    vocab: &Vocab,
    text: &str,
    overrides: Option<&EmbedOverride>,
) -> NodeId {
    let table = g.param(store, P_TOKEN);
    match overrides.and_then(|o| o.row_of(text).map(|r| (o, r))) {
        Some((o, row)) => {
            let frozen = g.leaf(o.matrix.clone());
            g.lookup(frozen, &[row])
        }
        None => g.lookup(table, &[vocab.token_id(text)]),
    }
}

/// Token-table lookups for a batch of texts, splitting positions between
/// the trainable table and the frozen override matrix.
fn embed_texts<'a>(
    g: &mut Graph,
    store: &ParamStore,
    vocab: &Vocab,
    texts: impl Iterator<Item = &'a str>,
    overrides: Option<&EmbedOverride>,
) -> NodeId {
    let table = g.param(store, P_TOKEN);
    match overrides {
        None => {
            let ids: Vec<usize> = texts.map(|t| vocab.token_id(t)).collect();
            g.lookup(table, &ids)
        }
        Some(o) => {
            let mut train_ids = Vec::new();
            let mut frozen_ids = Vec::new();
            for t in texts {
                match o.row_of(t) {
                    Some(r) => {
                        train_ids.push(usize::MAX);
                        frozen_ids.push(r);
                    }
                    None => {
                        train_ids.push(vocab.token_id(t));
                        frozen_ids.push(usize::MAX);
                    }
                }
            }
            let trained = g.lookup(table, &train_ids);
            let frozen_tab = g.leaf(o.matrix.clone());
            let frozen = g.lookup(frozen_tab, &frozen_ids);
            g.add(trained, frozen)
        }
    }
}

/// Build the integrated feature matrix for a document's expanded pair
/// sequence: one row per (plan row, event slot), event index fastest,
/// columns in the order semantic ‖ event-id ‖ POS ‖ dep ‖ sent-id ‖
/// word-id ‖ parent-word ‖ parent-POS ‖ parent-dep (ablated parts absent).
#[allow(clippy::too_many_arguments)]
pub fn integrate_features(
    g: &mut Graph,
    store: &ParamStore,
    vocab: &Vocab,
    cfg: &FeatureConfig,
    doc: &Document,
    plan: &RowPlan,
    m: usize,
    overrides: Option<&EmbedOverride>,
) -> Result<NodeId, Error> {
    let len = plan.row_count() * m;
    if len == 0 {
        return Err(Error::Invalid(format!(
            "doc {:?} produces an empty pair sequence",
            doc.doc_id
        )));
    }
    // Per-position source token and event slot.
    let toks: Vec<&crate::corpus::ParsedToken> = plan
        .rows()
        .iter()
        .flat_map(|r| std::iter::repeat(&doc.tokens[r.token]).take(m))
        .collect();
    let eids: Vec<usize> = (0..plan.row_count()).flat_map(|_| 0..m).collect();

    let mut parts: Vec<NodeId> = Vec::with_capacity(9);
    parts.push(embed_texts(g, store, vocab, toks.iter().map(|t| t.text.as_str()), overrides));
    if !cfg.ablated(Feature::EId) {
        let table = g.param(store, P_EVENT_ID);
        parts.push(g.lookup(table, &eids));
    }
    if !cfg.ablated(Feature::Pos) {
        let ids: Vec<usize> = toks.iter().map(|t| vocab.pos_id(&t.pos)).collect();
        let table = g.param(store, P_POS);
        parts.push(g.lookup(table, &ids));
    }
    if !cfg.ablated(Feature::Dep) {
        let ids: Vec<usize> = toks.iter().map(|t| vocab.dep_id(&t.dep)).collect();
        let table = g.param(store, P_DEP);
        parts.push(g.lookup(table, &ids));
    }
    if !cfg.ablated(Feature::SenId) {
        let ids: Vec<usize> = toks.iter().map(|t| t.sent_id.min(cfg.sent_cap - 1)).collect();
        let table = g.param(store, P_SENT);
        parts.push(g.lookup(table, &ids));
    }
    if !cfg.ablated(Feature::WordId) {
        let ids: Vec<usize> = toks.iter().map(|t| t.word_id.min(cfg.word_cap - 1)).collect();
        let table = g.param(store, P_WORD);
        parts.push(g.lookup(table, &ids));
    }
    if !cfg.ablated(Feature::PWord) {
        parts.push(embed_texts(
            g,
            store,
            vocab,
            toks.iter().map(|t| t.parent_text.as_str()),
            overrides,
        ));
    }
    if !cfg.ablated(Feature::PPos) {
        let ids: Vec<usize> = toks.iter().map(|t| vocab.pos_id(&t.parent_pos)).collect();
        let table = g.param(store, P_POS);
        parts.push(g.lookup(table, &ids));
    }
    if !cfg.ablated(Feature::PDep) {
        let ids: Vec<usize> = toks.iter().map(|t| vocab.dep_id(&t.parent_dep)).collect();
        let table = g.param(store, P_DEP);
        parts.push(g.lookup(table, &ids));
    }
    Ok(if parts.len() == 1 { parts[0] } else { g.concat_cols(&parts) })
}

/// One directional LSTM pass over `input` (L x D), returning per-step
/// hidden rows (1 x H) in step order.
fn lstm_direction(
    g: &mut Graph,
    store: &ParamStore,
    layer: usize,
    dir: &str,
    input: NodeId,
    h_size: usize,
    reverse: bool,
) -> Vec<NodeId> {
    let len = g.value(input).rows();
    let w_x = g.param(store, &lstm_param(layer, dir, "w_x"));
    let w_h = g.param(store, &lstm_param(layer, dir, "w_h"));
    let b = g.param(store, &lstm_param(layer, dir, "b"));
    let mut h = g.leaf(Tensor::zeros(&[1, h_size]));
    let mut c = g.leaf(Tensor::zeros(&[1, h_size]));
    let mut out = vec![0; len];
    let steps: Vec<usize> =
        if reverse { (0..len).rev().collect() } else { (0..len).collect() };
    for t in steps {
        let x = g.slice_rows(input, t, 1);
        let xw = g.matmul(x, w_x);
        let hw = g.matmul(h, w_h);
        let sum = g.add(xw, hw);
        let gates = g.add(sum, b);
        let i_gate = g.slice_cols(gates, 0, h_size);
        let f_gate = g.slice_cols(gates, h_size, h_size);
        let g_gate = g.slice_cols(gates, 2 * h_size, h_size);
        let o_gate = g.slice_cols(gates, 3 * h_size, h_size);
        let i_act = g.sigmoid(i_gate);
        let f_act = g.sigmoid(f_gate);
        let g_act = g.tanh(g_gate);
        let o_act = g.sigmoid(o_gate);
        let keep = g.mul(f_act, c);
        let write = g.mul(i_act, g_act);
        c = g.add(keep, write);
        let c_tanh = g.tanh(c);
        h = g.mul(o_act, c_tanh);
        out[t] = h;
    }
    out
}

/// Stacked Bi-LSTM over an integrated pair-sequence matrix (L x D).
/// Returns an L x 2·hidden matrix: per position, forward state over the
/// prefix concatenated with backward state over the suffix. Dropout is
/// applied between layers in train mode.
pub fn bilstm_encode(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &FeatureConfig,
    input: NodeId,
    rng: &mut Rng,
) -> Result<NodeId, Error> {
    if g.value(input).rows() == 0 {
        return Err(Error::Invalid("cannot encode an empty sequence".into()));
    }
    let h = cfg.hidden_size;
    let mut layer_in = input;
    let mut stacked = input;
    for layer in 0..cfg.lstm_layers {
        let fwd = lstm_direction(g, store, layer, "fwd", layer_in, h, false);
        let bwd = lstm_direction(g, store, layer, "bwd", layer_in, h, true);
        let rows: Vec<NodeId> =
            fwd.iter().zip(&bwd).map(|(&f, &b)| g.concat_cols(&[f, b])).collect();
        stacked = g.stack_rows(&rows);
        if layer + 1 < cfg.lstm_layers {
            layer_in = g.dropout(stacked, cfg.dropout, rng);
        }
    }
    Ok(stacked)
}

/// Full encoder pass for one document: integrate features, apply input
/// dropout, run the Bi-LSTM stack. Returns (rowCount·m) x 2·hidden.
#[allow(clippy::too_many_arguments)]
pub fn encode_document(
    g: &mut Graph,
    store: &ParamStore,
    vocab: &Vocab,
    cfg: &FeatureConfig,
    doc: &Document,
    plan: &RowPlan,
    m: usize,
    overrides: Option<&EmbedOverride>,
    rng: &mut Rng,
) -> Result<NodeId, Error> {
    let x = integrate_features(g, store, vocab, cfg, doc, plan, m, overrides)?;
    let x = g.dropout(x, cfg.dropout, rng);
    bilstm_encode(g, store, cfg, x, rng)
}
