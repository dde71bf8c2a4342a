//! Stratified k-fold cross-validation, per-class metrics and the
//! withheld-class (unknown attack) experiment.
//!
//! Scoring convention: a *suspicious* prediction counts as a false negative for
//! the flow's true class and as a false positive for no known class. Macro and
//! weighted averages run over known classes only.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{MultiClassModel, TrainingParams, Verdict};
use crate::error::{EfcError, Result};
use crate::schema::SUSPICIOUS;
use crate::seeding::derived_rng;
use crate::table::{LabelColumn, RawFlowTable};

/// z-score of a two-sided 95% normal interval.
pub const Z95: f64 = 1.96;

pub const SCORING_NOTE: &str = "suspicious predictions count as misses for the true class and never as \
false positives for a known class; intervals are 1.96 x standard error across folds (normal approximation)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub params: TrainingParams,
}

/// Rows are true labels; columns are the same labels followed by *suspicious*.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let k = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![0; k * (k + 1)],
        }
    }

    fn width(&self) -> usize {
        self.labels.len() + 1
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// `predicted = None` records a suspicious verdict.
    pub fn add(&mut self, truth: usize, predicted: Option<usize>) {
        let col = predicted.unwrap_or(self.labels.len());
        let w = self.width();
        self.counts[truth * w + col] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.width() + predicted]
    }

    pub fn suspicious(&self, truth: usize) -> u64 {
        self.get(truth, self.labels.len())
    }

    pub fn row_total(&self, truth: usize) -> u64 {
        let w = self.width();
        self.counts[truth * w..(truth + 1) * w].iter().sum()
    }

    pub fn column_total(&self, predicted: usize) -> u64 {
        (0..self.labels.len()).map(|t| self.get(t, predicted)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accumulate(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.labels, other.labels);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub predicted: u64,
    /// Set when a ratio had a zero denominator and was reported as 0.
    pub ill_defined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub per_class: Vec<ClassMetrics>,
    pub macro_f1: f64,
    pub weighted_f1: f64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn harmonic_f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> FoldMetrics {
    let per_class: Vec<ClassMetrics> = cm
        .labels
        .iter()
        .enumerate()
        .map(|(c, label)| {
            let tp = cm.get(c, c);
            let support = cm.row_total(c);
            let predicted = cm.column_total(c);
            let p = ratio(tp, predicted);
            let r = ratio(tp, support);
            let precision = p.unwrap_or(0.0);
            let recall = r.unwrap_or(0.0);
            ClassMetrics {
                label: label.clone(),
                precision,
                recall,
                f1: harmonic_f1(precision, recall),
                support,
                predicted,
                ill_defined: p.is_none() || r.is_none(),
            }
        })
        .collect();
    // classes never seen nor predicted carry no information
    let scored: Vec<&ClassMetrics> = per_class
        .iter()
        .filter(|m| m.support > 0 || m.predicted > 0)
        .collect();
    let macro_f1 = if scored.is_empty() {
        0.0
    } else {
        scored.iter().map(|m| m.f1).sum::<f64>() / scored.len() as f64
    };
    let total: u64 = per_class.iter().map(|m| m.support).sum();
    let weighted_f1 = if total == 0 {
        0.0
    } else {
        per_class
            .iter()
            .map(|m| m.f1 * m.support as f64 / total as f64)
            .sum()
    };
    FoldMetrics {
        per_class,
        macro_f1,
        weighted_f1,
    }
}

/// Mean across folds with a 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub ci95: f64,
}

impl Interval {
    pub fn from_samples(values: &[f64]) -> Self {
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let ci95 = if values.len() < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
            Z95 * (var / k).sqrt()
        };
        Interval { mean, ci95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub label: String,
    pub precision: Interval,
    pub recall: Interval,
    pub f1: Interval,
    pub support: u64,
    pub ill_defined_folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scoring: String,
    pub folds: usize,
    pub params: TrainingParams,
    pub per_class: Vec<ClassSummary>,
    pub macro_f1: Interval,
    pub weighted_f1: Interval,
    pub fold_metrics: Vec<FoldMetrics>,
    /// Pooled over folds.
    pub confusion: ConfusionMatrix,
    /// Classes with fewer rows than folds: tested in every fold, never trained.
    pub untrained_classes: Vec<String>,
}

impl MetricsReport {
    /// Aligned text table: one row per class plus macro and weighted averages.
    pub fn render(&self) -> String {
        let width = self
            .per_class
            .iter()
            .map(|c| c.label.len())
            .chain(["Weighted average".len()])
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# {}-fold cross-validation, Q={}, alpha={}, cap={}, seed={}",
            self.folds,
            self.params.q,
            self.params.alpha,
            self.params
                .cap
                .map_or("none".to_string(), |c| c.to_string()),
            self.params.seed
        );
        let _ = writeln!(out, "# {SCORING_NOTE}");
        let _ = writeln!(
            out,
            "{:<width$}  {:>15}  {:>15}  {:>15}  {:>9}",
            "Class", "Precision", "Recall", "F1", "Support"
        );
        let fmt = |i: &Interval| format!("{:.3} ± {:.3}", i.mean, i.ci95);
        for c in &self.per_class {
            let flag = if c.ill_defined_folds > 0 { " *" } else { "" };
            let _ = writeln!(
                out,
                "{:<width$}  {:>15}  {:>15}  {:>15}  {:>9}{flag}",
                c.label,
                fmt(&c.precision),
                fmt(&c.recall),
                fmt(&c.f1),
                c.support
            );
        }
        let _ = writeln!(
            out,
            "{:<width$}  {:>15}  {:>15}  {:>15}",
            "Macro average",
            "",
            "",
            fmt(&self.macro_f1)
        );
        let _ = writeln!(
            out,
            "{:<width$}  {:>15}  {:>15}  {:>15}",
            "Weighted average",
            "",
            "",
            fmt(&self.weighted_f1)
        );
        if self.per_class.iter().any(|c| c.ill_defined_folds > 0) {
            let _ = writeln!(
                out,
                "* zero denominator in at least one fold, reported as 0"
            );
        }
        if !self.untrained_classes.is_empty() {
            let _ = writeln!(
                out,
                "untrained (fewer rows than folds): {}",
                self.untrained_classes.join(", ")
            );
        }
        out
    }
}

/// Stratified fold assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub test_rows: Vec<Vec<usize>>,
    pub train_rows: Vec<Vec<usize>>,
    pub untrained_classes: Vec<String>,
}

/// Each class is shuffled with its own seeded stream and dealt round-robin
/// to the folds. Classes smaller than `k` go to every test fold.
pub fn plan_folds(labels: &LabelColumn, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(EfcError::InvalidParameter(format!(
            "need at least 2 folds, got {k}"
        )));
    }
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); labels.names.len()];
    for (row, &id) in labels.ids.iter().enumerate() {
        per_class[id as usize].push(row);
    }
    let mut test_rows = vec![Vec::new(); k];
    let mut train_rows = vec![Vec::new(); k];
    let mut untrained_classes = Vec::new();
    for (id, mut rows) in per_class.into_iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        let name = &labels.names[id];
        if rows.len() < k {
            untrained_classes.push(name.clone());
            for fold in &mut test_rows {
                fold.extend_from_slice(&rows);
            }
            continue;
        }
        rows.shuffle(&mut derived_rng(seed, name, u64::MAX));
        for (pos, row) in rows.into_iter().enumerate() {
            let fold = pos % k;
            test_rows[fold].push(row);
            for (other, train) in train_rows.iter_mut().enumerate() {
                if other != fold {
                    train.push(row);
                }
            }
        }
    }
    for v in test_rows.iter_mut().chain(train_rows.iter_mut()) {
        v.sort_unstable();
    }
    Ok(FoldPlan {
        test_rows,
        train_rows,
        untrained_classes,
    })
}

/// A test-row verdict from one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowPrediction {
    pub row: usize,
    pub fold: usize,
    /// Predicted label, `None` for suspicious.
    pub predicted: Option<String>,
}

fn run_fold(
    table: &RawFlowTable,
    train_rows: &[usize],
    test_rows: &[usize],
    fold: usize,
    config: &CvConfig,
    withheld: Option<&str>,
) -> Result<Vec<RowPrediction>> {
    let labels = table.label_column()?;
    let train_rows: Vec<usize> = train_rows
        .iter()
        .copied()
        .filter(|&r| Some(labels.get(r)) != withheld)
        .collect();
    if train_rows.is_empty() {
        return Err(EfcError::Empty(format!("fold {fold} has no training rows")));
    }
    let params = TrainingParams {
        seed: config.params.seed.wrapping_add(fold as u64),
        ..config.params
    };
    let model = MultiClassModel::train(&table.select(&train_rows), params)?;
    let verdicts = model.predict(&table.select(test_rows))?;
    Ok(test_rows
        .iter()
        .zip(verdicts)
        .map(|(&row, ev)| RowPrediction {
            row,
            fold,
            predicted: match ev.verdict {
                Verdict::Class(c) => Some(model.classes[c].label.clone()),
                Verdict::Suspicious => None,
            },
        })
        .collect())
}

/// Runs every fold (concurrently) and returns test predictions grouped by fold.
/// Rows labeled `withheld` are removed from every training split.
pub fn fold_predictions(
    table: &RawFlowTable,
    config: &CvConfig,
    withheld: Option<&str>,
) -> Result<(FoldPlan, Vec<Vec<RowPrediction>>)> {
    let labels = table.label_column()?;
    if labels.ids.is_empty() {
        return Err(EfcError::Empty("table has no labeled rows".into()));
    }
    let plan = plan_folds(labels, config.folds, config.params.seed)?;
    let results = (0..config.folds)
        .into_par_iter()
        .map(|f| {
            run_fold(
                table,
                &plan.train_rows[f],
                &plan.test_rows[f],
                f,
                config,
                withheld,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((plan, results))
}

fn fold_confusion(
    labels: &LabelColumn,
    names: &[String],
    preds: &[RowPrediction],
) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::new(names.to_vec());
    for p in preds {
        let truth = cm.index_of(labels.get(p.row)).expect("label from table");
        let predicted = p.predicted.as_deref().and_then(|l| cm.index_of(l));
        cm.add(truth, predicted);
    }
    cm
}

pub fn cross_validate(table: &RawFlowTable, config: &CvConfig) -> Result<MetricsReport> {
    let (plan, folds) = fold_predictions(table, config, None)?;
    let labels = table.label_column()?;
    let names: Vec<String> = labels.counts().into_iter().map(|(l, _)| l).collect();
    let mut pooled = ConfusionMatrix::new(names.clone());
    let mut fold_metrics = Vec::with_capacity(folds.len());
    for preds in &folds {
        let cm = fold_confusion(labels, &names, preds);
        pooled.accumulate(&cm);
        fold_metrics.push(compute_metrics(&cm));
    }
    let per_class = names
        .iter()
        .enumerate()
        .map(|(c, label)| {
            let take = |f: fn(&ClassMetrics) -> f64| {
                Interval::from_samples(
                    &fold_metrics
                        .iter()
                        .map(|fm| f(&fm.per_class[c]))
                        .collect::<Vec<_>>(),
                )
            };
            ClassSummary {
                label: label.clone(),
                precision: take(|m| m.precision),
                recall: take(|m| m.recall),
                f1: take(|m| m.f1),
                support: pooled.row_total(c),
                ill_defined_folds: fold_metrics
                    .iter()
                    .filter(|fm| fm.per_class[c].ill_defined)
                    .count(),
            }
        })
        .collect();
    let macro_f1 =
        Interval::from_samples(&fold_metrics.iter().map(|f| f.macro_f1).collect::<Vec<_>>());
    let weighted_f1 = Interval::from_samples(
        &fold_metrics
            .iter()
            .map(|f| f.weighted_f1)
            .collect::<Vec<_>>(),
    );
    Ok(MetricsReport {
        scoring: SCORING_NOTE.to_string(),
        folds: config.folds,
        params: config.params,
        per_class,
        macro_f1,
        weighted_f1,
        fold_metrics,
        confusion: pooled,
        untrained_classes: plan.untrained_classes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnknownExperimentReport {
    pub withheld: String,
    pub benign: String,
    pub test_rows: u64,
    pub benign_fraction: f64,
    pub other_fraction: f64,
    pub suspicious_fraction: f64,
    /// Predicted label (or `suspicious`) → count, for the withheld test rows.
    pub breakdown: Vec<(String, u64)>,
}

impl UnknownExperimentReport {
    pub fn render(&self) -> String {
        let bar = |f: f64| "#".repeat((f * 40.0).round() as usize);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "withheld `{}` ({} test rows)",
            self.withheld, self.test_rows
        );
        for (name, f) in [
            (self.benign.as_str(), self.benign_fraction),
            ("other classes", self.other_fraction),
            (SUSPICIOUS, self.suspicious_fraction),
        ] {
            let _ = writeln!(out, "  {name:<14} {f:>6.3} {}", bar(f));
        }
        out
    }
}

/// Cross-validates with `withheld` removed from every training split and
/// reports where its test rows end up.
pub fn unknown_attack_experiment(
    table: &RawFlowTable,
    withheld: &str,
    benign: &str,
    config: &CvConfig,
) -> Result<UnknownExperimentReport> {
    let labels = table.label_column()?;
    for l in [withheld, benign] {
        if !labels.names.iter().any(|n| n == l) {
            return Err(EfcError::MissingLabel(l.to_string()));
        }
    }
    if withheld == benign {
        return Err(EfcError::InvalidParameter(
            "the withheld class must differ from the benign class".into(),
        ));
    }
    let (_, folds) = fold_predictions(table, config, Some(withheld))?;
    let mut breakdown: Vec<(String, u64)> = Vec::new();
    let (mut total, mut benign_n, mut suspicious_n) = (0u64, 0u64, 0u64);
    for p in folds
        .iter()
        .flatten()
        .filter(|p| labels.get(p.row) == withheld)
    {
        total += 1;
        let name = p.predicted.as_deref().unwrap_or(SUSPICIOUS);
        match p.predicted.as_deref() {
            None => suspicious_n += 1,
            Some(l) if l == benign => benign_n += 1,
            Some(_) => {}
        }
        match breakdown.iter_mut().find(|(l, _)| l == name) {
            Some((_, c)) => *c += 1,
            None => breakdown.push((name.to_string(), 1)),
        }
    }
    if total == 0 {
        return Err(EfcError::Empty(format!("no test rows of `{withheld}`")));
    }
    let frac = |c: u64| c as f64 / total as f64;
    Ok(UnknownExperimentReport {
        withheld: withheld.to_string(),
        benign: benign.to_string(),
        test_rows: total,
        benign_fraction: frac(benign_n),
        suspicious_fraction: frac(suspicious_n),
        other_fraction: frac(total - benign_n - suspicious_n),
        breakdown,
    })
}
