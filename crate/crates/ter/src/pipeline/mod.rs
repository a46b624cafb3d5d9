//! Training loop, checkpointing and batch prediction.
//!
//! Training iterates documents one at a time (a document's pair grid is the
//! effective batch), accumulates gradients for `batch_size` documents per
//! optimizer step, and keeps the parameters from the epoch with the best
//! dev-set average F1. Checkpoints are self-contained: parameters, training
//! configuration, vocabularies, class weights, ontology, stoplist and any
//! frozen embedding vectors all travel in one file.

pub mod container;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channels::{
    channel_forward, channel_loss, channel_probs, class_weights, init_channel_params,
    total_loss, ClassWeights,
};
use crate::corpus::{Document, EventRecord};
use crate::encoder::{
    encode_document, init_encoder_params, EmbedOverride, FeatureConfig, Vocab,
};
use crate::evaldecode::{decode_events, evaluate, EvalItem};
use crate::nncore::{Graph, ParamStore, Rng, Tensor};
use crate::ontology::{number_roles, EventOntology, RoleNumbering};
use crate::par::map_slice;
use crate::terstruct::{build_gold_matrices, plan_duplicates, TerMatrix};
use crate::Error;

/// Hyperparameters for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Documents per optimizer step.
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Maximum events per document (grid columns).
    pub m: usize,
    pub seed: u64,
    /// Optional global gradient-norm ceiling.
    pub clip_norm: Option<f64>,
    /// Stop once the dev average F1 reaches this value.
    pub early_stop_dev_f1: Option<f64>,
    pub feature: FeatureConfig,
}

impl TrainConfig {
    /// Desk-scale defaults: small dimensions, 8 event slots.
    pub fn desk(seed: u64) -> Self {
        TrainConfig {
            batch_size: 1,
            lr: 1e-3,
            epochs: 10,
            m: 8,
            seed,
            clip_norm: None,
            early_stop_dev_f1: None,
            feature: FeatureConfig::desk(),
        }
    }

    /// Full-scale defaults: big dimensions, 34 event slots.
    pub fn paper(seed: u64) -> Self {
        TrainConfig { m: 34, feature: FeatureConfig::paper(), ..Self::desk(seed) }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Invalid("epochs must be >= 1".into()));
        }
        if self.m == 0 {
            return Err(Error::Invalid("m (event slots) must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if let Some(c) = self.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Invalid(format!("clip_norm must be positive, got {c}")));
            }
        }
        if let Some(f) = self.early_stop_dev_f1 {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Invalid(format!(
                    "early_stop_dev_f1 must be in [0,1], got {f}"
                )));
            }
        }
        self.feature.validate()
    }
}

/// A trained model plus everything needed to run it again.
#[derive(Clone)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub config: TrainConfig,
    pub vocab: Vocab,
    pub class_weights: ClassWeights,
    pub ontology: EventOntology,
    pub stoplist: Vec<String>,
    pub overrides: Option<EmbedOverride>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    kind: String,
    config: TrainConfig,
    vocab: Vocab,
    class_weights: ClassWeights,
    ontology: EventOntology,
    stoplist: Vec<String>,
    frozen_tokens: Vec<String>,
}

const CKPT_KIND: &str = "checkpoint";
const FROZEN_PREFIX: &str = "frozen.";

impl Checkpoint {
    /// Write the checkpoint to `path` and a human-auditable class-weight
    /// report to `<path>.class_weights.json`.
    pub fn save(&self, path: &Path) -> Result<(), Error> {
        let frozen: Vec<(String, Tensor)> = match &self.overrides {
            None => Vec::new(),
            Some(o) => o
                .tokens()
                .map(|(text, row)| {
                    (format!("{FROZEN_PREFIX}{text}"), Tensor::from_vec(&[1, o.dim()], row.to_vec()))
                })
                .collect(),
        };
        let meta = CheckpointMeta {
            kind: CKPT_KIND.to_string(),
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            class_weights: self.class_weights.clone(),
            ontology: self.ontology.clone(),
            stoplist: self.stoplist.clone(),
            frozen_tokens: frozen
                .iter()
                .map(|(n, _)| n[FROZEN_PREFIX.len()..].to_string())
                .collect(),
        };
        let mut tensors: Vec<(&str, &Tensor)> =
            self.params.iter().map(|e| (e.name.as_str(), &e.value)).collect();
        for (name, t) in &frozen {
            tensors.push((name.as_str(), t));
        }
        container::write_container(path, &tensors, &serde_json::to_value(&meta)?)?;

        let report_path = weights_report_path(path);
        std::fs::write(&report_path, serde_json::to_string_pretty(&self.class_weights)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint, Error> {
        let (tensors, extra) = container::read_container(path)?;
        let mut meta: CheckpointMeta = serde_json::from_value(extra).map_err(|e| {
            Error::Invalid(format!("{}: not a checkpoint ({e})", path.display()))
        })?;
        if meta.kind != CKPT_KIND {
            return Err(Error::Invalid(format!(
                "{}: container holds {:?}, not a checkpoint",
                path.display(),
                meta.kind
            )));
        }
        meta.vocab.reindex();
        let mut params = ParamStore::new();
        let mut frozen_entries = Vec::new();
        for (name, t) in tensors {
            match name.strip_prefix(FROZEN_PREFIX) {
                Some(text) => frozen_entries.push((text.to_string(), t.data().to_vec())),
                None => params.insert(&name, t)?,
            }
        }
        let overrides = if frozen_entries.is_empty() {
            None
        } else {
            Some(EmbedOverride::new(frozen_entries, meta.config.feature.sem_dim)?)
        };
        Ok(Checkpoint {
            params,
            config: meta.config,
            vocab: meta.vocab,
            class_weights: meta.class_weights,
            ontology: meta.ontology,
            stoplist: meta.stoplist,
            overrides,
        })
    }
}

/// Sibling path for the class-weight audit report.
pub fn weights_report_path(ckpt: &Path) -> std::path::PathBuf {
    let mut s = ckpt.as_os_str().to_os_string();
    s.push(".class_weights.json");
    std::path::PathBuf::from(s)
}

/// Load an embedding file (tensor container with one `[1, dim]` or `[dim]`
/// vector per token name) as frozen overrides.
pub fn load_embeddings(path: &Path, sem_dim: usize) -> Result<EmbedOverride, Error> {
    let (tensors, _) = container::read_container(path)?;
    let entries: Vec<(String, Vec<f64>)> =
        tensors.into_iter().map(|(name, t)| (name, t.data().to_vec())).collect();
    EmbedOverride::new(entries, sem_dim).map_err(|e| {
        Error::Invalid(format!("{}: {e}", path.display()))
    })
}

/// One epoch's log line; `dev_avg_f1` is absent when no dev split exists.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-document total loss (sum over channels).
    pub total_loss: f64,
    /// Mean per-document loss per channel, ontology order.
    pub per_channel_loss: Vec<f64>,
    pub dev_avg_f1: Option<f64>,
}

/// Write the per-epoch log as JSON lines.
pub fn write_log(path: &Path, log: &[EpochLog]) -> Result<(), Error> {
    let mut out = String::new();
    for line in log {
        out.push_str(&serde_json::to_string(line)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
    /// Epoch whose parameters the checkpoint holds (1-based).
    pub best_epoch: usize,
}

/// Build gold matrices for a batch of documents (parallel).
pub fn gold_for_docs(
    docs: &[Document],
    ont: &EventOntology,
    num: &RoleNumbering,
    m: usize,
) -> Result<Vec<Vec<TerMatrix>>, Error> {
    map_slice(docs, |d| build_gold_matrices(d, ont, num, m)).into_iter().collect()
}

/// Train a model. Documents are expected to be already stopword-filtered;
/// `stoplist` is recorded in the checkpoint so prediction can repeat the
/// filtering. Dev documents drive best-epoch selection when present.
pub fn train(
    train_docs: &[Document],
    dev_docs: &[Document],
    ont: &EventOntology,
    cfg: &TrainConfig,
    stoplist: &[String],
    overrides: Option<&EmbedOverride>,
) -> Result<TrainOutcome, Error> {
    cfg.validate()?;
    ont.validate()?;
    if train_docs.is_empty() {
        return Err(Error::Invalid("training split is empty".into()));
    }
    let num = number_roles(ont);
    let gold = gold_for_docs(train_docs, ont, &num, cfg.m)?;
    let dev_gold = gold_for_docs(dev_docs, ont, &num, cfg.m)?;
    let plans: Vec<_> = map_slice(train_docs, |d| plan_duplicates(d, ont));
    let vocab = Vocab::build(train_docs);
    let weights = class_weights(&gold, ont)?;

    let mut store = ParamStore::new();
    let mut init_rng = Rng::new(cfg.seed);
    init_encoder_params(&mut store, &vocab, &cfg.feature, cfg.m, ont.type_count(), &mut init_rng)?;
    init_channel_params(&mut store, &cfg.feature, ont, &mut init_rng)?;

    let u = ont.type_count();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let shuffle_rng = Rng::new(cfg.seed);

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_docs.len()).collect();
        shuffle_rng.fork(epoch as u64).shuffle(&mut order);

        let mut loss_sum = 0.0;
        let mut channel_sums = vec![0.0; u];
        let mut since_step = 0usize;
        for (pos, &di) in order.iter().enumerate() {
            let doc = &train_docs[di];
            let mut g = Graph::new(true);
            let mut drop_rng =
                Rng::new(cfg.seed).fork(((epoch as u64) << 32) | (di as u64 + 1));
            let res = (|| -> Result<_, Error> {
                let h = encode_document(
                    &mut g,
                    &store,
                    &vocab,
                    &cfg.feature,
                    doc,
                    &plans[di],
                    cfg.m,
                    overrides,
                    &mut drop_rng,
                )?;
                let mut losses = Vec::with_capacity(u);
                for (t, et) in ont.event_types.iter().enumerate() {
                    let logits = channel_forward(&mut g, &store, &cfg.feature, ont, h, t)?;
                    let probs = channel_probs(&mut g, logits);
                    let loss = channel_loss(
                        &mut g,
                        probs,
                        &gold[di][t],
                        &weights.channels[t].weights,
                    )?;
                    losses.push((et.name.clone(), loss));
                }
                total_loss(&mut g, &losses).map(|l| (l, losses))
            })();
            let (loss, losses) = res.map_err(|e| {
                Error::Runtime(format!("epoch {epoch}, doc {:?}: {e}", doc.doc_id))
            })?;

            loss_sum += g.value(loss).item();
            for (t, (_, id)) in losses.iter().enumerate() {
                channel_sums[t] += g.value(*id).item();
            }
            g.backward(loss, &mut store);
            since_step += 1;
            if since_step == cfg.batch_size || pos + 1 == order.len() {
                store.adam_step(cfg.lr, cfg.clip_norm).map_err(|e| {
                    Error::Runtime(format!(
                        "epoch {epoch}, optimizer step after doc {:?}: {e}",
                        doc.doc_id
                    ))
                })?;
                since_step = 0;
            }
        }

        let n = train_docs.len() as f64;
        let dev_avg_f1 = if dev_docs.is_empty() {
            None
        } else {
            let preds = predict_docs(
                &store,
                &vocab,
                &cfg.feature,
                ont,
                &num,
                cfg.m,
                dev_docs,
                overrides,
            )?;
            let items: Vec<EvalItem> = preds
                .into_iter()
                .zip(dev_docs)
                .zip(&dev_gold)
                .map(|((p, d), g)| EvalItem {
                    pred: p.matrices,
                    gold: g.clone(),
                    pred_records: p.records,
                    gold_records: d.gold_records.clone(),
                })
                .collect();
            Some(evaluate(&items, ont)?.overall.avg_tag_f1)
        };

        log.push(EpochLog {
            epoch,
            total_loss: loss_sum / n,
            per_channel_loss: channel_sums.iter().map(|s| s / n).collect(),
            dev_avg_f1,
        });

        let score = dev_avg_f1.unwrap_or(f64::NEG_INFINITY);
        let improved = match &best {
            None => true,
            Some((b, _, _)) => score > *b,
        };
        if improved || dev_docs.is_empty() {
            best = Some((score, epoch, store.clone()));
        }
        if let (Some(th), Some(f1)) = (cfg.early_stop_dev_f1, dev_avg_f1) {
            if f1 >= th {
                break;
            }
        }
    }

    let (_, best_epoch, best_params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            params: best_params,
            config: cfg.clone(),
            vocab,
            class_weights: weights,
            ontology: ont.clone(),
            stoplist: stoplist.to_vec(),
            overrides: overrides.cloned(),
        },
        log,
        best_epoch,
    })
}

/// One document's prediction: per-channel tag grids, per-cell confidence
/// (the winning probability), and decoded records.
#[derive(Debug, Clone)]
pub struct DocPrediction {
    pub doc_id: String,
    pub matrices: Vec<TerMatrix>,
    pub confidences: Vec<Vec<f64>>,
    pub records: Vec<EventRecord>,
}

/// Run the model over documents (dropout off). Argmax per cell; ties take
/// the lowest tag. Unknown tokens map to `<UNK>` silently.
#[allow(clippy::too_many_arguments)]
pub fn predict_docs(
    params: &ParamStore,
    vocab: &Vocab,
    feature: &FeatureConfig,
    ont: &EventOntology,
    num: &RoleNumbering,
    m: usize,
    docs: &[Document],
    overrides: Option<&EmbedOverride>,
) -> Result<Vec<DocPrediction>, Error> {
    let results: Vec<Result<DocPrediction, Error>> = map_slice(docs, |doc| {
        let plan = plan_duplicates(doc, ont);
        let mut g = Graph::new(false);
        let mut rng = Rng::new(0); // unused: dropout is inert in eval mode
        let h = encode_document(&mut g, params, vocab, feature, doc, &plan, m, overrides, &mut rng)?;
        let rows = plan.row_count();
        let mut matrices = Vec::with_capacity(ont.type_count());
        let mut confidences = Vec::with_capacity(ont.type_count());
        for (t, et) in ont.event_types.iter().enumerate() {
            let logits = channel_forward(&mut g, params, feature, ont, h, t)?;
            let probs_id = channel_probs(&mut g, logits);
            let probs = g.value(probs_id);
            let mut mat = TerMatrix::zero(&et.name, m, plan.clone());
            let mut conf = vec![0.0; rows * m];
            for r in 0..rows {
                for e in 0..m {
                    let cell = probs.row(r * m + e);
                    let (mut tag, mut p) = (0usize, cell[0]);
                    for (k, &v) in cell.iter().enumerate().skip(1) {
                        if v > p {
                            tag = k;
                            p = v;
                        }
                    }
                    mat.set_tag(r, e + 1, tag);
                    conf[r * m + e] = p;
                }
            }
            matrices.push(mat);
            confidences.push(conf);
        }
        let records = decode_events(&matrices, Some(&confidences), ont, num)?;
        Ok(DocPrediction { doc_id: doc.doc_id.clone(), matrices, confidences, records })
    });
    results.into_iter().collect()
}

/// Run a checkpoint over documents.
pub fn predict(docs: &[Document], ckpt: &Checkpoint) -> Result<Vec<DocPrediction>, Error> {
    let num = number_roles(&ckpt.ontology);
    predict_docs(
        &ckpt.params,
        &ckpt.vocab,
        &ckpt.config.feature,
        &ckpt.ontology,
        &num,
        ckpt.config.m,
        docs,
        ckpt.overrides.as_ref(),
    )
}
