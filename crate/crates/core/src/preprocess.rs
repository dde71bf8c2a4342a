//! Ordinal encoding, max-abs scaling and quantile discretization into the
//! alphabet `1..=Q`, plus per-class undersampling.

use std::collections::HashMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{EfcError, Result};
use crate::schema::FeatureKind;
use crate::seeding::derived_rng;
use crate::table::{Column, LabelColumn, RawFlowTable};

/// A discretized feature value in `1..=Q`.
pub type Symbol = u16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureEncoder {
    Continuous {
        /// Max-abs normalization divisor; 1 for all-zero columns.
        scale: f64,
        /// Strictly increasing bin edges on the normalized scale.
        edges: Vec<f64>,
    },
    Symbolic {
        /// Seen values; the value at index k encodes to `min(k + 1, Q)`.
        values: Vec<String>,
    },
}

impl FeatureEncoder {
    pub fn kind(&self) -> FeatureKind {
        match self {
            FeatureEncoder::Continuous { .. } => FeatureKind::Continuous,
            FeatureEncoder::Symbolic { .. } => FeatureKind::Symbolic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedFeature {
    pub name: String,
    #[serde(flatten)]
    pub encoder: FeatureEncoder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessorState {
    pub q: usize,
    pub features: Vec<EncodedFeature>,
    pub fitted_on: usize,
}

/// How raw columns become symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Discretizer {
    /// Max-abs scaling followed by quantile bins fitted on the pooled table.
    #[default]
    Quantile,
    /// Columns already hold integer symbols in `1..=Q`.
    Identity,
}

/// Row-major symbol matrix with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedTable {
    symbols: Vec<Symbol>,
    m: usize,
    q: usize,
    pub labels: Option<LabelColumn>,
}

impl DiscretizedTable {
    pub fn new(
        symbols: Vec<Symbol>,
        m: usize,
        q: usize,
        labels: Option<LabelColumn>,
    ) -> Result<Self> {
        if m == 0 || !symbols.len().is_multiple_of(m) {
            return Err(EfcError::InvalidParameter(format!(
                "{} symbols do not form rows of width {m}",
                symbols.len()
            )));
        }
        if let Some(bad) = symbols.iter().find(|&&s| s == 0 || s as usize > q) {
            return Err(EfcError::InvalidParameter(format!(
                "symbol {bad} outside 1..={q}"
            )));
        }
        let n = symbols.len() / m;
        if let Some(l) = &labels {
            if l.ids.len() != n {
                return Err(EfcError::InvalidParameter(format!(
                    "{} labels for {n} rows",
                    l.ids.len()
                )));
            }
        }
        Ok(DiscretizedTable {
            symbols,
            m,
            q,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.symbols.len() / self.m
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn row(&self, i: usize) -> &[Symbol] {
        &self.symbols[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, Symbol> {
        self.symbols.chunks_exact(self.m)
    }

    pub fn label_column(&self) -> Result<&LabelColumn> {
        self.labels
            .as_ref()
            .ok_or_else(|| EfcError::Schema("table has no label column".into()))
    }

    pub fn select(&self, rows: &[usize]) -> DiscretizedTable {
        let mut symbols = Vec::with_capacity(rows.len() * self.m);
        for &r in rows {
            symbols.extend_from_slice(self.row(r));
        }
        DiscretizedTable {
            symbols,
            m: self.m,
            q: self.q,
            labels: self
                .labels
                .as_ref()
                .map(|l| LabelColumn::from_values(rows.iter().map(|&r| l.get(r)))),
        }
    }

    /// Rows grouped by label, groups in order of first appearance.
    pub fn group_by_label(&self) -> Result<Vec<(String, Vec<Symbol>)>> {
        let labels = self.label_column()?;
        let mut groups: Vec<Option<Vec<Symbol>>> = vec![None; labels.names.len()];
        let mut order = Vec::new();
        for (row, &id) in self.rows().zip(&labels.ids) {
            let slot = &mut groups[id as usize];
            if slot.is_none() {
                order.push(id);
            }
            slot.get_or_insert_with(Vec::new).extend_from_slice(row);
        }
        Ok(order
            .into_iter()
            .map(|id| {
                (
                    labels.names[id as usize].clone(),
                    groups[id as usize].take().unwrap_or_default(),
                )
            })
            .collect())
    }
}

/// Nearest-rank quantile edges of `sorted` for `q` bins; duplicates and edges
/// at the column maximum are dropped since they separate nothing.
fn quantile_edges(sorted: &[f64], q: usize) -> Vec<f64> {
    let n = sorted.len();
    let max = sorted[n - 1];
    let mut edges: Vec<f64> = Vec::with_capacity(q - 1);
    for k in 1..q {
        let rank = (n * k).div_ceil(q);
        let edge = sorted[rank - 1];
        if edge < max && edges.last().is_none_or(|&last| edge > last) {
            edges.push(edge);
        }
    }
    edges
}

pub fn fit_with(
    table: &RawFlowTable,
    q: usize,
    discretizer: Discretizer,
) -> Result<PreprocessorState> {
    match discretizer {
        Discretizer::Quantile => fit(table, q),
        Discretizer::Identity => fit_identity(table, q),
    }
}

fn check_alphabet(q: usize) -> Result<()> {
    if q < 2 || q > Symbol::MAX as usize {
        return Err(EfcError::InvalidParameter(format!(
            "alphabet size must be in 2..={}, got {q}",
            Symbol::MAX
        )));
    }
    Ok(())
}

/// A pass-through encoder for tables whose cells are already symbols: unit
/// scale and edges at the half-integers, after checking every cell.
pub fn fit_identity(table: &RawFlowTable, q: usize) -> Result<PreprocessorState> {
    check_alphabet(q)?;
    if table.n() == 0 {
        return Err(EfcError::Empty(
            "cannot fit a preprocessor on zero rows".into(),
        ));
    }
    let edges: Vec<f64> = (1..q).map(|k| k as f64 + 0.5).collect();
    let features = table
        .columns
        .iter()
        .zip(&table.schema.features)
        .map(|(col, desc)| {
            let Column::Continuous(values) = col else {
                return Err(EfcError::Schema(format!(
                    "feature `{}` is symbolic; symbol input needs numeric columns",
                    desc.name
                )));
            };
            if let Some(row) = values
                .iter()
                .position(|&v| v.fract() != 0.0 || v < 1.0 || v > q as f64)
            {
                return Err(EfcError::BadCell {
                    row: row + 1,
                    column: desc.name.clone(),
                    value: values[row].to_string(),
                    reason: format!("expected an integer symbol in 1..={q}"),
                });
            }
            Ok(EncodedFeature {
                name: desc.name.clone(),
                encoder: FeatureEncoder::Continuous {
                    scale: 1.0,
                    edges: edges.clone(),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreprocessorState {
        q,
        features,
        fitted_on: table.n(),
    })
}

pub fn fit(table: &RawFlowTable, q: usize) -> Result<PreprocessorState> {
    check_alphabet(q)?;
    let n = table.n();
    if n == 0 {
        return Err(EfcError::Empty(
            "cannot fit a preprocessor on zero rows".into(),
        ));
    }
    let features = table
        .columns
        .iter()
        .zip(&table.schema.features)
        .map(|(col, desc)| {
            let encoder = match col {
                Column::Continuous(values) => {
                    let max_abs = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
                    let scale = if max_abs > 0.0 { max_abs } else { 1.0 };
                    let mut sorted: Vec<f64> = values.iter().map(|v| v / scale).collect();
                    sorted.sort_by(f64::total_cmp);
                    FeatureEncoder::Continuous {
                        scale,
                        edges: quantile_edges(&sorted, q),
                    }
                }
                Column::Symbolic { vocab, codes } => {
                    let mut seen = vec![false; vocab.len()];
                    let mut values = Vec::new();
                    for &c in codes {
                        if !std::mem::replace(&mut seen[c as usize], true) {
                            values.push(vocab[c as usize].clone());
                        }
                    }
                    FeatureEncoder::Symbolic { values }
                }
            };
            EncodedFeature {
                name: desc.name.clone(),
                encoder,
            }
        })
        .collect();
    Ok(PreprocessorState {
        q,
        features,
        fitted_on: n,
    })
}

impl PreprocessorState {
    pub fn m(&self) -> usize {
        self.features.len()
    }

    pub fn check_compatible(&self, table: &RawFlowTable) -> Result<()> {
        if table.m() != self.m() {
            return Err(EfcError::Mismatch(format!(
                "table has {} features, preprocessor expects {}",
                table.m(),
                self.m()
            )));
        }
        for (desc, enc) in table.schema.features.iter().zip(&self.features) {
            if desc.name != enc.name || desc.kind != enc.encoder.kind() {
                return Err(EfcError::Mismatch(format!(
                    "feature `{}` ({:?}) does not match fitted `{}` ({:?})",
                    desc.name,
                    desc.kind,
                    enc.name,
                    enc.encoder.kind()
                )));
            }
        }
        Ok(())
    }

    pub fn transform(&self, table: &RawFlowTable) -> Result<DiscretizedTable> {
        self.check_compatible(table)?;
        let (n, m, q) = (table.n(), self.m(), self.q);
        let mut symbols = vec![0 as Symbol; n * m];
        for (j, (col, enc)) in table.columns.iter().zip(&self.features).enumerate() {
            match (col, &enc.encoder) {
                (Column::Continuous(values), FeatureEncoder::Continuous { scale, edges }) => {
                    for (i, v) in values.iter().enumerate() {
                        let x = v / scale;
                        let bin = 1 + edges.partition_point(|&e| e < x);
                        symbols[i * m + j] = bin.min(q) as Symbol;
                    }
                }
                (Column::Symbolic { vocab, codes }, FeatureEncoder::Symbolic { values }) => {
                    let fitted: HashMap<&str, usize> = values
                        .iter()
                        .enumerate()
                        .map(|(k, v)| (v.as_str(), k + 1))
                        .collect();
                    let per_code: Vec<Symbol> = vocab
                        .iter()
                        .map(|v| fitted.get(v.as_str()).map_or(q, |&k| k.min(q)) as Symbol)
                        .collect();
                    for (i, &c) in codes.iter().enumerate() {
                        symbols[i * m + j] = per_code[c as usize];
                    }
                }
                _ => unreachable!("kinds checked by check_compatible"),
            }
        }
        DiscretizedTable::new(symbols, m, q, table.labels.clone())
    }
}

/// Reduces every class above `cap` rows to exactly `cap` rows, keeping the
/// surviving rows in their original order.
pub fn undersample(table: &DiscretizedTable, cap: usize, seed: u64) -> Result<DiscretizedTable> {
    if cap == 0 {
        return Err(EfcError::InvalidParameter(
            "undersampling cap must be ≥ 1".into(),
        ));
    }
    let labels = table.label_column()?;
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); labels.names.len()];
    for (row, &id) in labels.ids.iter().enumerate() {
        per_class[id as usize].push(row);
    }
    let mut keep = Vec::with_capacity(table.n());
    for (id, rows) in per_class.iter().enumerate() {
        if rows.len() <= cap {
            keep.extend_from_slice(rows);
        } else {
            let mut rng = derived_rng(seed, &labels.names[id], 0);
            keep.extend(
                index::sample(&mut rng, rows.len(), cap)
                    .into_iter()
                    .map(|k| rows[k]),
            );
        }
    }
    keep.sort_unstable();
    Ok(table.select(&keep))
}
