use std::io::Write;

use rayon::prelude::*;

use super::{adam_step, cross_entropy, AdamState, Result, TrainConfig, TrainError};
use crate::corpus::Dataset;
use crate::model::{backward, forward_trace, EncoderConfig, EncoderWeights, Logits, Mode};
use crate::rng::{derive_seed, seeded, shuffle};
use crate::tokenizer::Tokenizer;

/// A tokenized example: `[start] pieces.. [end]`, truncated to fit the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub ids: Vec<u32>,
    pub label: bool,
}

/// Precision, recall and F1 for one class. Undefined ratios are reported as 0.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassMetrics {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub positive: ClassMetrics,
    pub negative: ClassMetrics,
    pub logits: Vec<Logits>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub positive: ClassMetrics,
    pub negative: ClassMetrics,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best_index: usize,
    pub best_config: TrainConfig,
    pub best_weights: EncoderWeights,
    pub histories: Vec<TrainHistory>,
}

fn check_vocab(tokenizer: &Tokenizer, model: &EncoderConfig) -> Result<()> {
    let n = tokenizer.vocab().len();
    if n != model.vocab_size {
        return Err(TrainError::Config(format!(
            "tokenizer vocabulary has {n} entries but the model expects {}",
            model.vocab_size
        )));
    }
    Ok(())
}

/// Tokenizes every tweet of a labeled dataset.
pub fn encode_dataset(
    dataset: &Dataset,
    tokenizer: &Tokenizer,
    max_seq_len: usize,
) -> Result<Vec<Example>> {
    dataset
        .tweets
        .iter()
        .map(|t| {
            let label = t.label.ok_or_else(|| {
                TrainError::Contract(format!(
                    "dataset `{}` is unlabeled (tweet {})",
                    dataset.name, t.tweet_id
                ))
            })?;
            Ok(Example {
                ids: tokenizer.encode(&t.text, max_seq_len),
                label,
            })
        })
        .collect()
}

/// Eval-mode logits for every tweet, labeled or not, in dataset order.
pub fn predict_logits(
    weights: &EncoderWeights,
    model: &EncoderConfig,
    tokenizer: &Tokenizer,
    dataset: &Dataset,
) -> Result<Vec<Logits>> {
    check_vocab(tokenizer, model)?;
    let ids: Vec<Vec<u32>> = dataset
        .tweets
        .iter()
        .map(|t| tokenizer.encode(&t.text, model.max_seq_len))
        .collect();
    logits_for(weights, model, ids.iter().map(Vec::as_slice).collect())
}

fn logits_for(
    weights: &EncoderWeights,
    model: &EncoderConfig,
    seqs: Vec<&[u32]>,
) -> Result<Vec<Logits>> {
    seqs.par_iter()
        .map(|ids| {
            // Eval mode never draws from the generator.
            let mut rng = seeded(0);
            let trace = forward_trace(ids, ids.len(), weights, model, Mode::Eval, &mut rng)?;
            Ok(trace.logits)
        })
        .collect()
}

/// Eval-mode loss, accuracy and per-class metrics over encoded examples.
pub fn evaluate(
    weights: &EncoderWeights,
    model: &EncoderConfig,
    examples: &[Example],
) -> Result<Evaluation> {
    if examples.is_empty() {
        return Err(TrainError::Contract("cannot evaluate an empty dataset".into()));
    }
    let logits = logits_for(weights, model, examples.iter().map(|e| e.ids.as_slice()).collect())?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    let mut loss = 0.0;
    for (ex, l) in examples.iter().zip(&logits) {
        loss += cross_entropy(l.as_array(), ex.label).0;
        match (l.predicts_positive(), ex.label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let n = examples.len() as f64;
    Ok(Evaluation {
        loss: loss / n,
        accuracy: (tp + tn) as f64 / n,
        positive: ClassMetrics::from_counts(tp, fp, fn_),
        negative: ClassMetrics::from_counts(tn, fn_, fp),
        logits,
    })
}

/// Loss and summed gradients for one mini-batch. Sequences are padded to the
/// longest in the batch; each example gets its own dropout generator so the
/// result does not depend on how work is scheduled across threads.
fn batch_gradients(
    weights: &EncoderWeights,
    model: &EncoderConfig,
    batch: &[&Example],
    pad_id: u32,
    seeds: &[u64],
) -> Result<(f64, EncoderWeights)> {
    let width = batch.iter().map(|e| e.ids.len()).max().unwrap_or(0);
    let per_example: Vec<(f64, EncoderWeights)> = batch
        .par_iter()
        .zip(seeds)
        .map(|(ex, &seed)| {
            let mut ids = ex.ids.clone();
            ids.resize(width, pad_id);
            let mut rng = seeded(seed);
            let trace = forward_trace(&ids, ex.ids.len(), weights, model, Mode::Train, &mut rng)?;
            let (loss, dlogits) = cross_entropy(trace.logits.as_array(), ex.label);
            let mut grads = weights.zeros_like();
            backward(&trace, dlogits, weights, model, &mut grads);
            Ok((loss, grads))
        })
        .collect::<Result<_>>()?;
    let mut iter = per_example.into_iter();
    let (mut loss, mut total) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        loss += l;
        total.add_scaled(&g, 1.0);
    }
    Ok((loss, total))
}

/// Mini-batch fine-tuning with Adam. Returns the trained weights and one
/// history record per epoch.
pub fn fine_tune(
    weights: &EncoderWeights,
    model: &EncoderConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    tokenizer: &Tokenizer,
    config: &TrainConfig,
) -> Result<(EncoderWeights, TrainHistory)> {
    config.validate()?;
    model.validate()?;
    weights.check_shapes(model)?;
    if train_set.is_empty() {
        return Err(TrainError::Contract("training set is empty".into()));
    }
    check_vocab(tokenizer, model)?;
    let train = encode_dataset(train_set, tokenizer, model.max_seq_len)?;
    let val = encode_dataset(val_set, tokenizer, model.max_seq_len)?;
    if val.is_empty() {
        return Err(TrainError::Contract("validation set is empty".into()));
    }
    let pad_id = tokenizer.vocab().pad_id;

    let mut weights = weights.clone();
    let mut state = AdamState::new(&weights);
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..config.epochs {
        let epoch_seed = derive_seed(config.seed, epoch as u64);
        shuffle(&mut order, &mut seeded(derive_seed(epoch_seed, u64::MAX)));
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
            let seeds: Vec<u64> = (0..batch.len())
                .map(|k| derive_seed(epoch_seed, (b * config.batch_size + k) as u64))
                .collect();
            let (loss, mut grads) = batch_gradients(&weights, model, &batch, pad_id, &seeds)?;
            epoch_loss += loss;
            let scale = 1.0 / batch.len() as f64;
            for (_, t) in grads.named_mut() {
                t.data.iter_mut().for_each(|x| *x *= scale);
            }
            adam_step(&mut weights, &grads, &mut state, config)?;
        }
        let eval = evaluate(&weights, model, &val)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: epoch_loss / train.len() as f64,
            val_loss: eval.loss,
            val_acc: eval.accuracy,
            positive: eval.positive,
            negative: eval.negative,
        };
        log::info!(
            "epoch {}: train_loss {:.4} val_loss {:.4} val_acc {:.4} pos_F1 {:.4}",
            record.epoch,
            record.train_loss,
            record.val_loss,
            record.val_acc,
            record.positive.f1
        );
        history.epochs.push(record);
    }
    Ok((weights, history))
}

/// Trains one model per config, all from the same initial weights, and picks
/// the config with the highest final validation positive-class F1 (then lower
/// validation loss, then earlier grid position).
pub fn grid_search(
    grid: &[TrainConfig],
    model: &EncoderConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    tokenizer: &Tokenizer,
    model_factory: impl Fn() -> Result<EncoderWeights>,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(TrainError::Contract("grid search needs at least one config".into()));
    }
    let initial = model_factory()?;
    let trials: Vec<(EncoderWeights, TrainHistory)> = grid
        .par_iter()
        .map(|cfg| fine_tune(&initial, model, train_set, val_set, tokenizer, cfg))
        .collect::<Result<_>>()?;

    let mut best = 0;
    for i in 1..trials.len() {
        let a = trials[i].1.last().expect("at least one epoch");
        let b = trials[best].1.last().expect("at least one epoch");
        if a.positive.f1 > b.positive.f1 || (a.positive.f1 == b.positive.f1 && a.val_loss < b.val_loss) {
            best = i;
        }
    }
    let mut histories = Vec::with_capacity(trials.len());
    let mut best_weights = None;
    for (i, (w, h)) in trials.into_iter().enumerate() {
        if i == best {
            best_weights = Some(w);
        }
        histories.push(h);
    }
    Ok(GridResult {
        best_index: best,
        best_config: grid[best].clone(),
        best_weights: best_weights.expect("best index in range"),
        histories,
    })
}

pub fn write_history(history: &TrainHistory, mut out: impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "epoch\ttrain_loss\tval_loss\tval_acc\tpos_P\tpos_R\tpos_F1\tneg_P\tneg_R\tneg_F1"
    )?;
    for r in &history.epochs {
        writeln!(
            out,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            r.epoch,
            r.train_loss,
            r.val_loss,
            r.val_acc,
            r.positive.precision,
            r.positive.recall,
            r.positive.f1,
            r.negative.precision,
            r.negative.recall,
            r.negative.f1
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_metrics_by_hand() {
        // tp 3, fp 1, fn 2: P 0.75, R 0.6, F1 = 2·0.45/1.35.
        let m = ClassMetrics::from_counts(3, 1, 2);
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.6);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(ClassMetrics::from_counts(0, 0, 0), ClassMetrics::default());
    }

    #[test]
    fn history_format() {
        let h = TrainHistory {
            epochs: vec![EpochRecord {
                epoch: 1,
                train_loss: 0.5,
                val_loss: 0.25,
                val_acc: 1.0,
                positive: ClassMetrics::from_counts(1, 0, 0),
                negative: ClassMetrics::default(),
            }],
        };
        let mut buf = Vec::new();
        write_history(&h, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split('\t').count(), 10);
        assert_eq!(
            lines[1],
            "1\t0.500000\t0.250000\t1.000000\t1.000000\t1.000000\t1.000000\t0.000000\t0.000000\t0.000000"
        );
    }
}
