//! CSV ingestion and the in-memory raw flow table.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{EfcError, Result};
use crate::schema::{DatasetSchema, FeatureKind};

/// One feature column. Symbolic cells are interned in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Continuous(Vec<f64>),
    Symbolic { vocab: Vec<String>, codes: Vec<u32> },
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Continuous(v) => v.len(),
            Column::Symbolic { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> FeatureKind {
        match self {
            Column::Continuous(_) => FeatureKind::Continuous,
            Column::Symbolic { .. } => FeatureKind::Symbolic,
        }
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Continuous(v) => Column::Continuous(rows.iter().map(|&r| v[r]).collect()),
            Column::Symbolic { vocab, codes } => Column::Symbolic {
                vocab: vocab.clone(),
                codes: rows.iter().map(|&r| codes[r]).collect(),
            },
        }
    }

    fn cell_text(&self, row: usize) -> String {
        match self {
            Column::Continuous(v) => v[row].to_string(),
            Column::Symbolic { vocab, codes } => vocab[codes[row] as usize].clone(),
        }
    }
}

/// Interned class labels, one id per row.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelColumn {
    pub names: Vec<String>,
    pub ids: Vec<u32>,
}

impl LabelColumn {
    pub fn from_values<S: AsRef<str>>(values: impl IntoIterator<Item = S>) -> Self {
        let mut interner = Interner::default();
        let ids = values
            .into_iter()
            .map(|v| interner.intern(v.as_ref().trim()))
            .collect();
        LabelColumn {
            names: interner.values,
            ids,
        }
    }

    pub fn get(&self, row: usize) -> &str {
        &self.names[self.ids[row] as usize]
    }

    /// Distinct labels in order of first appearance, with their row counts.
    pub fn counts(&self) -> Vec<(String, usize)> {
        let mut per_id = vec![0usize; self.names.len()];
        let mut order = Vec::new();
        for &id in &self.ids {
            if per_id[id as usize] == 0 {
                order.push(id);
            }
            per_id[id as usize] += 1;
        }
        order
            .into_iter()
            .map(|id| (self.names[id as usize].clone(), per_id[id as usize]))
            .collect()
    }

    fn select(&self, rows: &[usize]) -> LabelColumn {
        LabelColumn::from_values(rows.iter().map(|&r| self.get(r)))
    }
}

#[derive(Default)]
struct Interner {
    values: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, value: &str) -> u32 {
        if let Some(&id) = self.index.get(value) {
            return id;
        }
        let id = self.values.len() as u32;
        self.values.push(value.to_string());
        self.index.insert(value.to_string(), id);
        id
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    /// Replace NaN/+inf by the column's finite maximum and -inf by its finite minimum.
    pub clip_nonfinite: bool,
    /// Reject input without the schema's label column.
    pub require_label: bool,
}

/// Side information about an ingestion run.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct IngestReport {
    pub rows: usize,
    /// (column name, replaced cell count) for columns where clipping happened.
    pub clipped: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawFlowTable {
    pub schema: DatasetSchema,
    pub columns: Vec<Column>,
    /// `None` for unlabeled input (prediction only).
    pub labels: Option<LabelColumn>,
}

enum Role {
    Feature(usize),
    Label,
    Dropped,
}

impl RawFlowTable {
    pub fn new(
        schema: DatasetSchema,
        columns: Vec<Column>,
        labels: Option<LabelColumn>,
    ) -> Result<Self> {
        schema.validate()?;
        if columns.len() != schema.m() {
            return Err(EfcError::Schema(format!(
                "{} columns supplied for {} features",
                columns.len(),
                schema.m()
            )));
        }
        let n = columns[0].len();
        for (col, desc) in columns.iter().zip(&schema.features) {
            if col.kind() != desc.kind {
                return Err(EfcError::Schema(format!(
                    "column `{}` is {:?} but the schema says {:?}",
                    desc.name,
                    col.kind(),
                    desc.kind
                )));
            }
            if col.len() != n {
                return Err(EfcError::Schema(format!(
                    "column `{}` has {} rows, expected {n}",
                    desc.name,
                    col.len()
                )));
            }
        }
        if let Some(l) = &labels {
            if l.ids.len() != n {
                return Err(EfcError::Schema(format!(
                    "{} labels for {n} rows",
                    l.ids.len()
                )));
            }
        }
        Ok(RawFlowTable {
            schema,
            columns,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.columns.first().map_or(0, Column::len)
    }

    pub fn m(&self) -> usize {
        self.columns.len()
    }

    pub fn label_column(&self) -> Result<&LabelColumn> {
        self.labels
            .as_ref()
            .ok_or_else(|| EfcError::Schema("table has no label column".into()))
    }

    pub fn read_csv_path(
        path: &Path,
        schema: &DatasetSchema,
        options: IngestOptions,
    ) -> Result<(Self, IngestReport)> {
        let file = std::fs::File::open(path).map_err(|e| EfcError::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), schema, options).map_err(|e| match e {
            EfcError::Csv { source, .. } => EfcError::Csv {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })
    }

    pub fn read_csv<R: Read>(
        reader: R,
        schema: &DatasetSchema,
        options: IngestOptions,
    ) -> Result<(Self, IngestReport)> {
        let csv_err = |source| EfcError::Csv {
            path: "<input>".into(),
            source,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header: Vec<String> = rdr
            .byte_headers()
            .map_err(csv_err)?
            .iter()
            .map(|h| String::from_utf8_lossy(h).trim().to_string())
            .collect();

        let by_name: HashMap<&str, usize> = schema
            .features
            .iter()
            .map(|f| (f.name.as_str(), f.position))
            .collect();
        let mut roles = Vec::with_capacity(header.len());
        let mut seen = vec![false; schema.m()];
        let mut has_label = false;
        for name in &header {
            let role = if let Some(&pos) = by_name.get(name.as_str()) {
                if seen[pos] {
                    return Err(EfcError::Schema(format!("column `{name}` appears twice")));
                }
                seen[pos] = true;
                Role::Feature(pos)
            } else if *name == schema.label_column {
                has_label = true;
                Role::Label
            } else if schema.dropped_columns.iter().any(|d| d == name) {
                Role::Dropped
            } else {
                return Err(EfcError::Schema(format!(
                    "column `{name}` is neither a feature, the label, nor dropped"
                )));
            };
            roles.push(role);
        }
        if let Some(missing) = schema.features.iter().find(|f| !seen[f.position]) {
            return Err(EfcError::Schema(format!(
                "feature column `{}` missing from header",
                missing.name
            )));
        }
        if options.require_label && !has_label {
            return Err(EfcError::Schema(format!(
                "label column `{}` missing from header",
                schema.label_column
            )));
        }

        let mut numeric: Vec<Vec<f64>> = vec![Vec::new(); schema.m()];
        let mut symbolic: Vec<Interner> = (0..schema.m()).map(|_| Interner::default()).collect();
        let mut sym_codes: Vec<Vec<u32>> = vec![Vec::new(); schema.m()];
        let mut labels = Interner::default();
        let mut label_ids = Vec::new();
        let mut nonfinite = vec![0usize; schema.m()];

        let mut record = csv::ByteRecord::new();
        let mut row = 0usize;
        while rdr.read_byte_record(&mut record).map_err(csv_err)? {
            row += 1;
            if record.len() != header.len() {
                return Err(EfcError::BadCell {
                    row,
                    column: "*".into(),
                    value: format!("{} fields", record.len()),
                    reason: format!("expected {} fields", header.len()),
                });
            }
            for (raw, role) in record.iter().zip(&roles) {
                let text = String::from_utf8_lossy(raw);
                let text = text.trim();
                match *role {
                    Role::Dropped => {}
                    Role::Label => {
                        if text.is_empty() {
                            return Err(EfcError::BadCell {
                                row,
                                column: schema.label_column.clone(),
                                value: String::new(),
                                reason: "missing label".into(),
                            });
                        }
                        label_ids.push(labels.intern(text));
                    }
                    Role::Feature(pos) => {
                        let desc = &schema.features[pos];
                        let bad = |reason: &str| EfcError::BadCell {
                            row,
                            column: desc.name.clone(),
                            value: text.to_string(),
                            reason: reason.into(),
                        };
                        if text.is_empty() {
                            return Err(bad("missing value"));
                        }
                        match desc.kind {
                            FeatureKind::Symbolic => {
                                sym_codes[pos].push(symbolic[pos].intern(text));
                            }
                            FeatureKind::Continuous => {
                                let v = parse_numeric(text).ok_or_else(|| bad("not a number"))?;
                                if !v.is_finite() {
                                    if !options.clip_nonfinite {
                                        return Err(bad(
                                            "non-finite value (use --clip-nonfinite to replace)",
                                        ));
                                    }
                                    nonfinite[pos] += 1;
                                }
                                numeric[pos].push(v);
                            }
                        }
                    }
                }
            }
        }

        let mut report = IngestReport {
            rows: row,
            clipped: Vec::new(),
        };
        let mut columns = Vec::with_capacity(schema.m());
        for (pos, desc) in schema.features.iter().enumerate() {
            match desc.kind {
                FeatureKind::Symbolic => columns.push(Column::Symbolic {
                    vocab: std::mem::take(&mut symbolic[pos].values),
                    codes: std::mem::take(&mut sym_codes[pos]),
                }),
                FeatureKind::Continuous => {
                    let mut values = std::mem::take(&mut numeric[pos]);
                    if nonfinite[pos] > 0 {
                        clip_nonfinite(&mut values).ok_or_else(|| {
                            EfcError::Schema(format!(
                                "column `{}` has no finite values to clip to",
                                desc.name
                            ))
                        })?;
                        report.clipped.push((desc.name.clone(), nonfinite[pos]));
                    }
                    columns.push(Column::Continuous(values));
                }
            }
        }
        let labels = has_label.then_some(LabelColumn {
            names: labels.values,
            ids: label_ids,
        });
        Ok((RawFlowTable::new(schema.clone(), columns, labels)?, report))
    }

    /// Writes features in schema order followed by the label column, if any.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let to_err = |source| EfcError::Csv {
            path: "<output>".into(),
            source,
        };
        let mut header: Vec<&str> = self
            .schema
            .features
            .iter()
            .map(|f| f.name.as_str())
            .collect();
        if self.labels.is_some() {
            header.push(&self.schema.label_column);
        }
        wtr.write_record(&header).map_err(to_err)?;
        let mut record = Vec::with_capacity(header.len());
        for row in 0..self.n() {
            record.clear();
            record.extend(self.columns.iter().map(|c| c.cell_text(row)));
            if let Some(l) = &self.labels {
                record.push(l.get(row).to_string());
            }
            wtr.write_record(&record).map_err(to_err)?;
        }
        wtr.flush().map_err(|e| EfcError::io("<output>", e))?;
        Ok(())
    }

    /// Rows in the given order; indices may repeat.
    pub fn select(&self, rows: &[usize]) -> RawFlowTable {
        RawFlowTable {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            labels: self.labels.as_ref().map(|l| l.select(rows)),
        }
    }

    /// Stacks tables that share a schema, in order.
    pub fn concat(tables: &[RawFlowTable]) -> Result<RawFlowTable> {
        let first = tables
            .first()
            .ok_or_else(|| EfcError::Empty("no tables to concatenate".into()))?;
        if let Some(t) = tables.iter().find(|t| t.schema != first.schema) {
            return Err(EfcError::Mismatch(format!(
                "schemas differ: {} vs {} features",
                first.m(),
                t.m()
            )));
        }
        let labeled = first.labels.is_some();
        if tables.iter().any(|t| t.labels.is_some() != labeled) {
            return Err(EfcError::Mismatch(
                "some tables are labeled and some are not".into(),
            ));
        }
        let columns = (0..first.m())
            .map(|j| match &first.columns[j] {
                Column::Continuous(_) => Column::Continuous(
                    tables
                        .iter()
                        .flat_map(|t| match &t.columns[j] {
                            Column::Continuous(v) => v.as_slice(),
                            Column::Symbolic { .. } => unreachable!("schemas are equal"),
                        })
                        .copied()
                        .collect(),
                ),
                Column::Symbolic { .. } => {
                    let mut interner = Interner::default();
                    let mut codes = Vec::new();
                    for t in tables {
                        if let Column::Symbolic { vocab, codes: c } = &t.columns[j] {
                            codes.extend(c.iter().map(|&k| interner.intern(&vocab[k as usize])));
                        }
                    }
                    Column::Symbolic {
                        vocab: interner.values,
                        codes,
                    }
                }
            })
            .collect();
        let labels = labeled.then(|| {
            LabelColumn::from_values(tables.iter().flat_map(|t| {
                let l = t.labels.as_ref().expect("checked above");
                (0..t.n()).map(move |r| l.get(r))
            }))
        });
        RawFlowTable::new(first.schema.clone(), columns, labels)
    }

    /// Relabels every row carrying one of `sources` as `target`.
    pub fn merge_labels<S: AsRef<str>>(&self, sources: &[S], target: &str) -> Result<RawFlowTable> {
        let labels = self.label_column()?;
        let sources: Vec<&str> = sources.iter().map(|s| s.as_ref().trim()).collect();
        for s in &sources {
            if !labels.ids.iter().any(|&id| labels.names[id as usize] == *s) {
                return Err(EfcError::MissingLabel(s.to_string()));
            }
        }
        let target = target.trim();
        let merged = LabelColumn::from_values((0..self.n()).map(|r| {
            let l = labels.get(r);
            if sources.contains(&l) {
                target
            } else {
                l
            }
        }));
        Ok(RawFlowTable {
            schema: self.schema.clone(),
            columns: self.columns.clone(),
            labels: Some(merged),
        })
    }
}

/// Plain floats, plus NetFlow-style magnitudes such as `1.2 M`.
fn parse_numeric(text: &str) -> Option<f64> {
    if let Ok(v) = text.parse() {
        return Some(v);
    }
    let (num, mult) = match text.as_bytes().last()? {
        b'K' => (&text[..text.len() - 1], 1e3),
        b'M' => (&text[..text.len() - 1], 1e6),
        b'G' => (&text[..text.len() - 1], 1e9),
        _ => return None,
    };
    num.trim_end().parse::<f64>().ok().map(|v| v * mult)
}

fn clip_nonfinite(values: &mut [f64]) -> Option<()> {
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold(None, |acc: Option<(f64, f64)>, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })?;
    for v in values.iter_mut() {
        if *v == f64::NEG_INFINITY {
            *v = lo;
        } else if !v.is_finite() {
            *v = hi;
        }
    }
    Some(())
}
