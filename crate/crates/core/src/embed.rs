//! Column embeddings.
//!
//! Each feature column is treated as a document whose terms are its cell
//! values. The raw embedding is a log-scaled, L2-normalized term-frequency row
//! over a dataset-wide vocabulary; an autoencoder condenses it to a fixed width.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::neural::{adam_step, mse_loss, Activation, AdamState, DenseNet, DEFAULT_LR};
use crate::tabular::{Cell, Table};

pub const MISSING_TERM: &str = "⟂missing";
pub const DEFAULT_QUANTIZE_DIGITS: usize = 4;
pub const DEFAULT_VOCAB_CAP: usize = 2048;
pub const DEFAULT_HIDDEN: usize = 128;
pub const DEFAULT_AE_EPOCHS: usize = 100;

/// Renders `v` rounded to `digits` significant digits, shortest form.
pub fn quantize_number(v: f64, digits: usize) -> String {
    let digits = digits.max(1);
    let rounded: f64 = format!("{:.*e}", digits - 1, v).parse().unwrap_or(v);
    if rounded == 0.0 {
        "0".to_string()
    } else {
        format!("{rounded}")
    }
}

pub fn canonical_number(v: f64) -> String {
    quantize_number(v, DEFAULT_QUANTIZE_DIGITS)
}

pub fn cell_term(cell: &Cell, quantize_digits: usize) -> String {
    match cell {
        Cell::Missing => MISSING_TERM.to_string(),
        Cell::Number(v) => quantize_number(*v, quantize_digits),
        Cell::Text(s) => s.clone(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    /// Most frequent first, ties broken lexicographically.
    pub terms: Vec<String>,
    /// Bucket collecting the terms that did not fit under the cap.
    pub oov_index: Option<usize>,
    pub quantize_digits: usize,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Number of embedding columns, including the overflow bucket.
    pub fn size(&self) -> usize {
        self.terms.len() + usize::from(self.oov_index.is_some())
    }

    pub fn lookup(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied().or(self.oov_index)
    }
}

pub fn build_vocabulary(table: &Table, vocab_cap: usize, quantize_digits: usize) -> Vocabulary {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for col in &table.columns {
        for cell in &col.cells {
            *counts.entry(cell_term(cell, quantize_digits)).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let overflow = ranked.len() > vocab_cap;
    ranked.truncate(vocab_cap);
    let terms: Vec<String> = ranked.into_iter().map(|(t, _)| t).collect();
    let index = terms
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();
    Vocabulary {
        oov_index: overflow.then_some(terms.len()),
        terms,
        quantize_digits,
        index,
    }
}

/// `D x V` matrix of `ln(1 + count)` rows scaled to unit L2 norm.
pub fn term_frequency_matrix(table: &Table, vocab: &Vocabulary) -> Array2<f64> {
    let v = vocab.size();
    let rows: Vec<Vec<f64>> = table
        .columns
        .par_iter()
        .map(|col| {
            let mut row = vec![0.0f64; v];
            for cell in &col.cells {
                if let Some(i) = vocab.lookup(&cell_term(cell, vocab.quantize_digits)) {
                    row[i] += 1.0;
                }
            }
            row.iter_mut().for_each(|x| *x = x.ln_1p());
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
            row
        })
        .collect();
    let mut out = Array2::zeros((table.n_features(), v));
    for (j, row) in rows.into_iter().enumerate() {
        out.row_mut(j).assign(&ndarray::Array1::from(row));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            hidden: DEFAULT_HIDDEN,
            epochs: DEFAULT_AE_EPOCHS,
            lr: DEFAULT_LR,
        }
    }
}

/// Index of the bottleneck layer among the six weight layers.
const BOTTLENECK: usize = 2;

#[derive(Debug, Clone)]
pub struct AutoencoderFit {
    pub net: DenseNet,
    pub condensed: Array2<f64>,
    /// Loss before each epoch's update.
    pub loss_trace: Vec<f64>,
    pub final_loss: f64,
}

/// Trains `V -> H -> H -> [H] -> H -> H -> V` full batch on `raw` and returns
/// the bottleneck activations.
pub fn train_autoencoder(
    raw: &Array2<f64>,
    seed: u64,
    config: AutoencoderConfig,
) -> AutoencoderFit {
    let v = raw.ncols();
    let h = config.hidden;
    let mut net = DenseNet::new(
        &[v, h, h, h, h, h, v],
        Activation::Rectifier,
        Activation::Identity,
        seed,
    );
    let mut adam = AdamState::new(&net, config.lr);
    let mut loss_trace = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let acts = net.forward(raw).expect("input width matches");
        let (loss, grad) = mse_loss(acts.output(), raw).expect("shapes match");
        loss_trace.push(loss);
        let grads = net.backward(&acts, &grad).expect("activations match");
        adam_step(&mut adam, &mut net, &grads).expect("gradients match");
    }
    let acts = net.forward(raw).expect("input width matches");
    let final_loss = mse_loss(acts.output(), raw).expect("shapes match").0;
    AutoencoderFit {
        condensed: acts.outputs[BOTTLENECK].clone(),
        net,
        loss_trace,
        final_loss,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub vocab_cap: usize,
    pub quantize_digits: usize,
    pub autoencoder: AutoencoderConfig,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            vocab_cap: DEFAULT_VOCAB_CAP,
            quantize_digits: DEFAULT_QUANTIZE_DIGITS,
            autoencoder: AutoencoderConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    pub raw: Array2<f64>,
    pub condensed: Array2<f64>,
    pub hidden: usize,
    pub loss_trace: Vec<f64>,
}

pub fn embed_table(table: &Table, config: EmbedConfig, seed: u64) -> EmbeddingMatrix {
    let vocab = build_vocabulary(table, config.vocab_cap, config.quantize_digits);
    let raw = term_frequency_matrix(table, &vocab);
    let fit = train_autoencoder(&raw, seed, config.autoencoder);
    EmbeddingMatrix {
        raw,
        condensed: fit.condensed,
        hidden: config.autoencoder.hidden,
        loss_trace: fit.loss_trace,
    }
}

/// Writes one row per feature: the name followed by its condensed embedding.
pub fn write_embedding_csv<W: Write>(
    writer: W,
    feature_names: &[&str],
    condensed: &Array2<f64>,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["feature".to_string()];
    header.extend((0..condensed.ncols()).map(|i| format!("h{i}")));
    w.write_record(&header)?;
    for (name, row) in feature_names.iter().zip(condensed.rows()) {
        let mut rec = vec![name.to_string()];
        rec.extend(row.iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
