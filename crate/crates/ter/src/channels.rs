//! Per-event-type prediction heads ("channels") and the weighted loss.
//!
//! Every event type gets its own small feed-forward head over the shared
//! Bi-LSTM states. A head sees each pair position's encoded vector
//! concatenated with the channel's event-type embedding and produces a
//! distribution over that type's role tags plus the outside tag 0. Because
//! outside tags dominate real grids, each class is weighted by
//! median(all class counts in the channel) / count(class), computed on the
//! training split.

use serde::{Deserialize, Serialize};

use crate::encoder::{Feature, FeatureConfig, P_EVENT_TYPE};
use crate::nncore::{Graph, NodeId, ParamStore, Rng, Tensor};
use crate::ontology::EventOntology;
use crate::terstruct::TerMatrix;
use crate::Error;

fn head_param(event_type: &str, which: &str) -> String {
    format!("head.{event_type}.{which}")
}

fn weight_init(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.uniform(-0.08, 0.08)).collect();
    Tensor::from_vec(&[rows, cols], data)
}

/// Register one head per event type, in ontology declaration order:
/// a tanh hidden layer followed by an affine map to `roles + 1` logits.
pub fn init_channel_params(
    store: &mut ParamStore,
    cfg: &FeatureConfig,
    ont: &EventOntology,
    rng: &mut Rng,
) -> Result<(), Error> {
    let in_dim = 2 * cfg.hidden_size
        + if cfg.ablated(Feature::EType) { 0 } else { cfg.feat_dim };
    for et in &ont.event_types {
        let width = et.role_count() + 1;
        store.insert(&head_param(&et.name, "w1"), weight_init(rng, in_dim, cfg.hidden_size))?;
        store.insert(&head_param(&et.name, "b1"), Tensor::zeros(&[1, cfg.hidden_size]))?;
        store.insert(&head_param(&et.name, "w_out"), weight_init(rng, cfg.hidden_size, width))?;
        store.insert(&head_param(&et.name, "b_out"), Tensor::zeros(&[1, width]))?;
    }
    Ok(())
}

/// One channel's logits over every pair position: rows match `encoded`,
/// columns are the channel's role tags plus tag 0.
pub fn channel_forward(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &FeatureConfig,
    ont: &EventOntology,
    encoded: NodeId,
    type_index: usize,
) -> Result<NodeId, Error> {
    let u = ont.type_count();
    if type_index >= u {
        return Err(Error::Invalid(format!(
            "channel index {type_index} out of range (only {u} event types)"
        )));
    }
    let et = &ont.event_types[type_index];
    let input = if cfg.ablated(Feature::EType) {
        encoded
    } else {
        let rows = g.value(encoded).rows();
        let table = g.param(store, P_EVENT_TYPE);
        let ids = vec![type_index; rows];
        let h_t = g.lookup(table, &ids);
        g.concat_cols(&[encoded, h_t])
    };
    let w1 = g.param(store, &head_param(&et.name, "w1"));
    let b1 = g.param(store, &head_param(&et.name, "b1"));
    let w_out = g.param(store, &head_param(&et.name, "w_out"));
    let b_out = g.param(store, &head_param(&et.name, "b_out"));
    let lin = g.matmul(input, w1);
    let lin = g.add_row(lin, b1);
    let hidden = g.tanh(lin);
    let logits = g.matmul(hidden, w_out);
    Ok(g.add_row(logits, b_out))
}

/// Softmax over each position's logits.
pub fn channel_probs(g: &mut Graph, logits: NodeId) -> NodeId {
    g.softmax_rows(logits)
}

/// Per-class loss weights for every channel, computed from training gold
/// matrices: weight(c) = median(all class counts in the channel, zeros
/// included) / count(c). A class never seen gets weight 0 (it cannot be
/// trained); a channel with no cells at all falls back to all-ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    /// Channel name -> weight per tag (index = tag).
    pub channels: Vec<ChannelWeights>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelWeights {
    pub event_type: String,
    pub counts: Vec<u64>,
    pub weights: Vec<f64>,
    /// Tags that never occur in the training split (weight forced to 0).
    pub unseen_tags: Vec<usize>,
    /// True when the channel had no grid cells and weights fell back to 1.
    pub empty_fallback: bool,
}

fn median(sorted: &[u64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
    }
}

/// Weights for one channel from raw tag counts (index = tag).
pub fn weights_from_counts(counts: &[u64]) -> (Vec<f64>, Vec<usize>, bool) {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return (vec![1.0; counts.len()], Vec::new(), true);
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let med = median(&sorted);
    let mut unseen = Vec::new();
    let weights = counts
        .iter()
        .enumerate()
        .map(|(tag, &c)| {
            if c == 0 {
                unseen.push(tag);
                0.0
            } else {
                med / c as f64
            }
        })
        .collect();
    (weights, unseen, false)
}

/// Count tags per channel across gold matrices (every document contributes
/// one full rowCount × m grid per channel) and derive the class weights.
pub fn class_weights(
    gold: &[Vec<TerMatrix>],
    ont: &EventOntology,
) -> Result<ClassWeights, Error> {
    let mut channels = Vec::with_capacity(ont.type_count());
    for (t, et) in ont.event_types.iter().enumerate() {
        let width = et.role_count() + 1;
        let mut counts = vec![0u64; width];
        for doc in gold {
            let mat = &doc[t];
            if mat.event_type != et.name {
                return Err(Error::Invalid(format!(
                    "gold matrix order mismatch: expected {:?}, found {:?}",
                    et.name, mat.event_type
                )));
            }
            for &tag in mat.flat_tags() {
                if tag >= width {
                    return Err(Error::Invalid(format!(
                        "tag {tag} out of range for channel {:?} (width {width})",
                        et.name
                    )));
                }
                counts[tag] += 1;
            }
        }
        let (weights, unseen_tags, empty_fallback) = weights_from_counts(&counts);
        if empty_fallback {
            eprintln!(
                "warning: channel {:?} has no gold cells; class weights fall back to 1",
                et.name
            );
        } else if !unseen_tags.is_empty() {
            eprintln!(
                "note: channel {:?} tags {:?} never occur in training; weight 0",
                et.name, unseen_tags
            );
        }
        channels.push(ChannelWeights {
            event_type: et.name.clone(),
            counts,
            weights,
            unseen_tags,
            empty_fallback,
        });
    }
    Ok(ClassWeights { channels })
}

/// Weighted cross-entropy of one channel over the full pair grid:
/// −Σ over all positions of weight(gold tag) · log p(gold tag).
pub fn channel_loss(
    g: &mut Graph,
    probs: NodeId,
    gold: &TerMatrix,
    weights: &[f64],
) -> Result<NodeId, Error> {
    let shape = g.value(probs).shape().to_vec();
    let targets = gold.flat_tags();
    if shape[0] != targets.len() {
        return Err(Error::Invalid(format!(
            "probability grid has {} rows but gold grid has {} cells",
            shape[0],
            targets.len()
        )));
    }
    let width = g.value(probs).cols();
    let mut per_cell = Vec::with_capacity(targets.len());
    for &tag in targets {
        if tag >= width {
            return Err(Error::Invalid(format!(
                "gold tag {tag} out of range for channel {:?} (width {width})",
                gold.event_type
            )));
        }
        per_cell.push(*weights.get(tag).ok_or_else(|| {
            Error::Invalid(format!("no class weight for tag {tag} in {:?}", gold.event_type))
        })?);
    }
    Ok(g.pick_nll(probs, targets, &per_cell))
}

/// Sum of per-channel losses with a finiteness guard: a non-finite channel
/// loss aborts before the sum so the failing channel is named.
pub fn total_loss(
    g: &mut Graph,
    channel_losses: &[(String, NodeId)],
) -> Result<NodeId, Error> {
    for (name, id) in channel_losses {
        let v = g.value(*id).item();
        if !v.is_finite() {
            return Err(Error::Runtime(format!(
                "loss for channel {name:?} is not finite ({v})"
            )));
        }
    }
    let mut iter = channel_losses.iter();
    let (_, first) = iter
        .next()
        .ok_or_else(|| Error::Invalid("total loss needs at least one channel".into()))?;
    let mut acc = *first;
    for (_, id) in iter {
        acc = g.add(acc, *id);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ingest_parsed_str;
    use crate::encoder::{encode_document, init_encoder_params, Vocab};
    use crate::nncore::grad_check;
    use crate::ontology::number_roles;
    use crate::terstruct::{build_gold_matrices, plan_duplicates};
    use std::collections::BTreeSet;

    fn ont() -> EventOntology {
        EventOntology::from_toml_str(include_str!("../data/equity_events.toml")).unwrap()
    }

    fn example_doc() -> crate::corpus::Document {
        ingest_parsed_str(include_str!("../data/example_doc.jsonl"), &ont()).unwrap().remove(0)
    }

    fn tiny_cfg() -> FeatureConfig {
        FeatureConfig {
            sem_dim: 6,
            feat_dim: 3,
            hidden_size: 4,
            lstm_layers: 1,
            dropout: 0.0,
            ablation: BTreeSet::new(),
            sent_cap: 8,
            word_cap: 8,
        }
    }

    struct Fixture {
        store: ParamStore,
        vocab: Vocab,
        cfg: FeatureConfig,
        ont: EventOntology,
        doc: crate::corpus::Document,
        plan: crate::terstruct::RowPlan,
        m: usize,
    }

    fn fixture(cfg: FeatureConfig, m: usize) -> Fixture {
        let ont = ont();
        let doc = example_doc();
        let vocab = Vocab::build(std::slice::from_ref(&doc));
        let plan = plan_duplicates(&doc, &ont);
        let mut store = ParamStore::new();
        let mut rng = Rng::new(11);
        init_encoder_params(&mut store, &vocab, &cfg, m, ont.type_count(), &mut rng).unwrap();
        init_channel_params(&mut store, &cfg, &ont, &mut rng).unwrap();
        Fixture { store, vocab, cfg, ont, doc, plan, m }
    }

    fn encode(fx: &Fixture, g: &mut Graph) -> NodeId {
        encode_document(
            g,
            &fx.store,
            &fx.vocab,
            &fx.cfg,
            &fx.doc,
            &fx.plan,
            fx.m,
            None,
            &mut Rng::new(0),
        )
        .unwrap()
    }

    #[test]
    fn logits_width_is_roles_plus_one() {
        let fx = fixture(tiny_cfg(), 3);
        let mut g = Graph::new(false);
        let h = encode(&fx, &mut g);
        // EquityOverweight declares 6 roles -> width 7 including tag 0.
        let eo = fx.ont.type_index("EquityOverweight").unwrap();
        let logits = channel_forward(&mut g, &fx.store, &fx.cfg, &fx.ont, h, eo).unwrap();
        assert_eq!(g.value(logits).shape(), &[fx.plan.row_count() * fx.m, 7]);
    }

    #[test]
    fn channel_index_out_of_range_errors() {
        let fx = fixture(tiny_cfg(), 2);
        let mut g = Graph::new(false);
        let h = encode(&fx, &mut g);
        let err = channel_forward(&mut g, &fx.store, &fx.cfg, &fx.ont, h, 99).unwrap_err();
        assert!(err.to_string().contains("out of range"));
    }

    #[test]
    fn zero_head_weights_give_uniform_distributions() {
        let fx = fixture(tiny_cfg(), 2);
        let mut store = fx.store.clone();
        for which in ["w1", "b1", "w_out", "b_out"] {
            let name = head_param("EquityFreeze", which);
            let idx = store.index_of(&name).unwrap();
            let shape = store.entry(idx).value.shape().to_vec();
            store.entry_mut(idx).value = Tensor::zeros(&shape);
        }
        let mut g = Graph::new(false);
        let h = encode(&fx, &mut g);
        let t = fx.ont.type_index("EquityFreeze").unwrap();
        let logits = channel_forward(&mut g, &store, &fx.cfg, &fx.ont, h, t).unwrap();
        let probs = channel_probs(&mut g, logits);
        let pv = g.value(probs);
        let width = pv.cols();
        for &p in pv.data() {
            assert!((p - 1.0 / width as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn etype_ablation_drops_the_type_embedding_input() {
        let mut cfg = tiny_cfg();
        cfg.ablation.insert(Feature::EType);
        let fx = fixture(cfg, 2);
        assert!(fx.store.get(P_EVENT_TYPE).is_none());
        // Head input width shrinks to 2*hidden.
        let w1 = fx.store.get(&head_param("EquityFreeze", "w1")).unwrap();
        assert_eq!(w1.rows(), 2 * fx.cfg.hidden_size);
        let mut g = Graph::new(false);
        let h = encode(&fx, &mut g);
        let logits = channel_forward(&mut g, &fx.store, &fx.cfg, &fx.ont, h, 0).unwrap();
        assert_eq!(g.value(logits).rows(), fx.plan.row_count() * fx.m);
    }

    #[test]
    fn median_weight_examples() {
        // counts {O:100, t1:10, t2:4} -> median 10 -> {0.1, 1.0, 2.5}
        let (w, unseen, empty) = weights_from_counts(&[100, 10, 4]);
        assert_eq!(w, vec![0.1, 1.0, 2.5]);
        assert!(unseen.is_empty() && !empty);
        // counts {O:1000, t1:1} -> median 500.5 -> t1 weight 500.5
        let (w, _, _) = weights_from_counts(&[1000, 1]);
        assert!((w[0] - 0.5005).abs() < 1e-12);
        assert!((w[1] - 500.5).abs() < 1e-12);
        // all equal -> all ones
        let (w, _, _) = weights_from_counts(&[7, 7, 7, 7]);
        assert!(w.iter().all(|&x| x == 1.0));
        // zero-count class -> weight 0, listed as unseen
        let (w, unseen, _) = weights_from_counts(&[10, 0, 2]);
        assert_eq!(w[1], 0.0);
        assert_eq!(unseen, vec![1]);
        // no cells at all -> fallback to ones
        let (w, _, empty) = weights_from_counts(&[0, 0]);
        assert!(empty);
        assert_eq!(w, vec![1.0, 1.0]);
    }

    #[test]
    fn class_weights_match_brute_force_on_example_doc() {
        let ont = ont();
        let doc = example_doc();
        let num = number_roles(&ont);
        let m = 3;
        let gold = vec![build_gold_matrices(&doc, &ont, &num, m).unwrap()];
        let cw = class_weights(&gold, &ont).unwrap();
        assert_eq!(cw.channels.len(), ont.type_count());
        for (t, ch) in cw.channels.iter().enumerate() {
            // Brute-force recount per channel.
            let width = ont.event_types[t].role_count() + 1;
            let mut counts = vec![0u64; width];
            for &tag in gold[0][t].flat_tags() {
                counts[tag] += 1;
            }
            assert_eq!(ch.counts, counts, "channel {}", ch.event_type);
            let mut sorted = counts.clone();
            sorted.sort_unstable();
            let med = super::median(&sorted);
            for (tag, &c) in counts.iter().enumerate() {
                let expect = if c == 0 { 0.0 } else { med / c as f64 };
                assert!((ch.weights[tag] - expect).abs() < 1e-12);
            }
        }
        // The grid is 16 rows x 3 events = 48 cells per channel.
        let total: u64 = cw.channels[0].counts.iter().sum();
        assert_eq!(total, 48);
    }

    #[test]
    fn class_weights_ignore_document_order() {
        let ont = ont();
        let doc = example_doc();
        let num = number_roles(&ont);
        let mut doc2 = doc.clone();
        doc2.doc_id = "second".into();
        let g1 = build_gold_matrices(&doc, &ont, &num, 3).unwrap();
        let g2 = build_gold_matrices(&doc2, &ont, &num, 3).unwrap();
        let a = class_weights(&[g1.clone(), g2.clone()], &ont).unwrap();
        let b = class_weights(&[g2, g1], &ont).unwrap();
        for (ca, cb) in a.channels.iter().zip(&b.channels) {
            assert_eq!(ca.weights, cb.weights);
        }
    }

    #[test]
    fn uniform_predictions_cost_positions_times_log_width() {
        let fx = fixture(tiny_cfg(), 3);
        let ont = fx.ont.clone();
        let num = number_roles(&ont);
        let gold = build_gold_matrices(&fx.doc, &ont, &num, 3).unwrap();
        let positions = fx.plan.row_count() * 3;
        let t = ont.type_index("EquityUnderweight").unwrap();
        let width = ont.event_types[t].role_count() + 1;
        let mut g = Graph::new(false);
        let probs = g.leaf(Tensor::full(&[positions, width], 1.0 / width as f64));
        let ones = vec![1.0; width];
        let loss = channel_loss(&mut g, probs, &gold[t], &ones).unwrap();
        let expect = positions as f64 * (width as f64).ln();
        assert!((g.value(loss).item() - expect).abs() < 1e-9);
    }

    #[test]
    fn perfect_predictions_cost_nothing_and_weights_scale_linearly() {
        let fx = fixture(tiny_cfg(), 3);
        let num = number_roles(&fx.ont);
        let gold = build_gold_matrices(&fx.doc, &fx.ont, &num, 3).unwrap();
        let t = 0;
        let width = fx.ont.event_types[t].role_count() + 1;
        let positions = fx.plan.row_count() * 3;
        // One-hot on the gold tag.
        let mut data = vec![0.0; positions * width];
        for (p, &tag) in gold[t].flat_tags().iter().enumerate() {
            data[p * width + tag] = 1.0;
        }
        let mut g = Graph::new(false);
        let onehot = g.leaf(Tensor::from_vec(&[positions, width], data));
        let ones = vec![1.0; width];
        let perfect = channel_loss(&mut g, onehot, &gold[t], &ones).unwrap();
        assert!(g.value(perfect).item().abs() < 1e-9);

        // Linearity in the weights on an arbitrary distribution.
        let probs = g.leaf(Tensor::full(&[positions, width], 1.0 / width as f64));
        let w1: Vec<f64> = (0..width).map(|i| 0.5 + i as f64).collect();
        let w2: Vec<f64> = w1.iter().map(|w| 2.0 * w).collect();
        let l1 = channel_loss(&mut g, probs, &gold[t], &w1).unwrap();
        let l2 = channel_loss(&mut g, probs, &gold[t], &w2).unwrap();
        assert!((2.0 * g.value(l1).item() - g.value(l2).item()).abs() < 1e-9);
    }

    #[test]
    fn all_ones_weights_equal_unweighted_cross_entropy() {
        let fx = fixture(tiny_cfg(), 3);
        let num = number_roles(&fx.ont);
        let gold = build_gold_matrices(&fx.doc, &fx.ont, &num, 3).unwrap();
        let t = 1;
        let width = fx.ont.event_types[t].role_count() + 1;
        let positions = fx.plan.row_count() * 3;
        let mut rng = Rng::new(5);
        let mut data = vec![0.0; positions * width];
        for p in 0..positions {
            let mut row: Vec<f64> = (0..width).map(|_| rng.uniform(0.1, 1.0)).collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            data[p * width..(p + 1) * width].copy_from_slice(&row);
        }
        let mut g = Graph::new(false);
        let probs = g.leaf(Tensor::from_vec(&[positions, width], data.clone()));
        let ones = vec![1.0; width];
        let loss = channel_loss(&mut g, probs, &gold[t], &ones).unwrap();
        let manual: f64 = gold[t]
            .flat_tags()
            .iter()
            .enumerate()
            .map(|(p, &tag)| -data[p * width + tag].ln())
            .sum();
        assert!((g.value(loss).item() - manual).abs() < 1e-9);
    }

    #[test]
    fn total_loss_sums_channels_and_guards_nan() {
        let mut g = Graph::new(false);
        let a = g.leaf(Tensor::scalar(1.0));
        let b = g.leaf(Tensor::scalar(2.0));
        let c = g.leaf(Tensor::scalar(3.0));
        let named = vec![("a".to_string(), a), ("b".to_string(), b), ("c".to_string(), c)];
        let sum = total_loss(&mut g, &named).unwrap();
        assert_eq!(g.value(sum).item(), 6.0);
        // u = 1 behaves as identity.
        let solo = total_loss(&mut g, &named[..1]).unwrap();
        assert_eq!(g.value(solo).item(), 1.0);
        let bad = g.leaf(Tensor::scalar(f64::NAN));
        let named = vec![("good".to_string(), a), ("broken".to_string(), bad)];
        let err = total_loss(&mut g, &named).unwrap_err();
        assert!(err.to_string().contains("broken"));
    }

    #[test]
    fn shifting_logits_keeps_the_argmax() {
        let mut g = Graph::new(false);
        let logits = g.leaf(Tensor::from_vec(&[2, 3], vec![1.0, 3.0, 2.0, -1.0, 0.5, 0.0]));
        let shifted = g.leaf(Tensor::from_vec(
            &[2, 3],
            vec![1.0 + 10.0, 3.0 + 10.0, 2.0 + 10.0, -1.0 + 7.0, 0.5 + 7.0, 0.0 + 7.0],
        ));
        let p1 = channel_probs(&mut g, logits);
        let p2 = channel_probs(&mut g, shifted);
        for r in 0..2 {
            let argmax = |v: &[f64]| {
                v.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0
            };
            assert_eq!(argmax(g.value(p1).row(r)), argmax(g.value(p2).row(r)));
        }
    }

    #[test]
    fn full_model_gradients_match_finite_differences() {
        let ont = ont();
        let doc = crate::corpus::Document {
            doc_id: "2tok".into(),
            tokens: example_doc().tokens[..2].to_vec(),
            gold_records: vec![],
        };
        let vocab = Vocab::build(std::slice::from_ref(&doc));
        let plan = plan_duplicates(&doc, &ont);
        let num = number_roles(&ont);
        let m = 2;
        let gold = build_gold_matrices(&doc, &ont, &num, m).unwrap();
        let cfg = tiny_cfg();
        let mut store = ParamStore::new();
        let mut rng = Rng::new(9);
        init_encoder_params(&mut store, &vocab, &cfg, m, ont.type_count(), &mut rng).unwrap();
        init_channel_params(&mut store, &cfg, &ont, &mut rng).unwrap();

        let report = grad_check(
            &mut store,
            |g, store| {
                let h = encode_document(
                    g,
                    store,
                    &vocab,
                    &cfg,
                    &doc,
                    &plan,
                    m,
                    None,
                    &mut Rng::new(0),
                )
                .unwrap();
                let mut losses = Vec::new();
                for (t, et) in ont.event_types.iter().enumerate() {
                    let logits = channel_forward(g, store, &cfg, &ont, h, t).unwrap();
                    let probs = channel_probs(g, logits);
                    let width = et.role_count() + 1;
                    let ones = vec![1.0; width];
                    let loss = channel_loss(g, probs, &gold[t], &ones).unwrap();
                    losses.push((et.name.clone(), loss));
                }
                total_loss(g, &losses).unwrap()
            },
            50,
            1e-3,
            1e-4,
            21,
        );
        assert!(
            report.passed(),
            "max rel err {:.3e}, {} failures",
            report.max_rel_err,
            report.failures.len()
        );
    }
}
