//! Multi-class energy classification with the open-set *suspicious* verdict.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EfcError, Result};
use crate::potts::{fit_class, ClassModel, Flows};
use crate::preprocess::{self, DiscretizedTable, Discretizer, PreprocessorState, Symbol};
use crate::schema::{ClassLabel, SUSPICIOUS};
use crate::table::RawFlowTable;

/// Hyperparameters of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingParams {
    /// Alphabet size.
    pub q: usize,
    /// Pseudocount weight.
    pub alpha: f64,
    /// Per-class undersampling cap; `None` keeps every row.
    pub cap: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub discretizer: Discretizer,
}

impl Default for TrainingParams {
    fn default() -> Self {
        TrainingParams {
            q: 30,
            alpha: 0.5,
            cap: None,
            seed: 0,
            discretizer: Discretizer::Quantile,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    /// Index into [`MultiClassModel::classes`].
    Class(usize),
    Suspicious,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SingleVerdict {
    Normal,
    Abnormal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyVector {
    pub energies: Vec<f64>,
    pub argmin: usize,
    pub verdict: Verdict,
}

impl EnergyVector {
    pub fn min_energy(&self) -> f64 {
        self.energies[self.argmin]
    }
}

/// Applies the decision rule to precomputed energies and thresholds: the
/// lowest energy wins (first index on ties) and is accepted iff it does not
/// exceed that class's threshold.
pub fn decide(energies: Vec<f64>, thresholds: &[f64]) -> Result<EnergyVector> {
    if energies.is_empty() {
        return Err(EfcError::Empty(
            "no class models to classify against".into(),
        ));
    }
    let mut argmin = 0;
    for (k, &e) in energies.iter().enumerate().skip(1) {
        if e < energies[argmin] {
            argmin = k;
        }
    }
    let verdict = if energies[argmin] <= thresholds[argmin] {
        Verdict::Class(argmin)
    } else {
        Verdict::Suspicious
    };
    Ok(EnergyVector {
        energies,
        argmin,
        verdict,
    })
}

/// Single-class decision against a benign model: normal iff `H ≤ t`.
pub fn classify_single(flow: &[Symbol], benign: &ClassModel) -> Result<SingleVerdict> {
    Ok(if benign.energy(flow)? <= benign.threshold {
        SingleVerdict::Normal
    } else {
        SingleVerdict::Abnormal
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiClassModel {
    /// In training order.
    pub classes: Vec<ClassModel>,
    pub preprocessor: PreprocessorState,
    pub params: TrainingParams,
}

impl MultiClassModel {
    pub fn new(
        classes: Vec<ClassModel>,
        preprocessor: PreprocessorState,
        params: TrainingParams,
    ) -> Result<Self> {
        if classes.is_empty() {
            return Err(EfcError::Empty("a model needs at least one class".into()));
        }
        let m = preprocessor.m();
        let mut seen = HashSet::new();
        for c in &classes {
            if c.label == SUSPICIOUS {
                return Err(EfcError::InvalidParameter(format!(
                    "`{SUSPICIOUS}` is reserved for the open-set verdict and cannot be a trained class"
                )));
            }
            if !seen.insert(c.label.as_str()) {
                return Err(EfcError::InvalidParameter(format!(
                    "duplicate class `{}`",
                    c.label
                )));
            }
            if c.m() != m
                || c.q() != params.q
                || preprocessor.q != params.q
                || c.alpha != params.alpha
            {
                return Err(EfcError::Mismatch(format!(
                    "class `{}` has m={}, Q={}, alpha={}; model has m={m}, Q={}, alpha={}",
                    c.label,
                    c.m(),
                    c.q(),
                    c.alpha,
                    params.q,
                    params.alpha
                )));
            }
        }
        Ok(MultiClassModel {
            classes,
            preprocessor,
            params,
        })
    }

    /// Fits the preprocessor on the pooled table, undersamples, then infers
    /// one model per class (classes in order of first appearance).
    pub fn train(table: &RawFlowTable, params: TrainingParams) -> Result<Self> {
        let preprocessor = preprocess::fit_with(table, params.q, params.discretizer)?;
        let discretized = preprocessor.transform(table)?;
        Self::train_discretized(&discretized, preprocessor, params)
    }

    pub fn train_discretized(
        table: &DiscretizedTable,
        preprocessor: PreprocessorState,
        params: TrainingParams,
    ) -> Result<Self> {
        if table.q() != params.q || table.m() != preprocessor.m() {
            return Err(EfcError::Mismatch(format!(
                "table is {}-wide over Q={}, expected {}-wide over Q={}",
                table.m(),
                table.q(),
                preprocessor.m(),
                params.q
            )));
        }
        let sampled;
        let table = match params.cap {
            Some(cap) => {
                sampled = preprocess::undersample(table, cap, params.seed)?;
                &sampled
            }
            None => table,
        };
        let groups = table.group_by_label()?;
        let classes = groups
            .par_iter()
            .map(|(label, symbols)| {
                fit_class(
                    label,
                    Flows::new(symbols, table.m())?,
                    params.q,
                    params.alpha,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(classes, preprocessor, params)
    }

    pub fn m(&self) -> usize {
        self.preprocessor.m()
    }

    pub fn q(&self) -> usize {
        self.params.q
    }

    pub fn labels(&self) -> Vec<&str> {
        self.classes.iter().map(|c| c.label.as_str()).collect()
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.threshold).collect()
    }

    pub fn verdict_label(&self, verdict: Verdict) -> ClassLabel {
        match verdict {
            Verdict::Class(k) => ClassLabel::known(&self.classes[k].label),
            Verdict::Suspicious => ClassLabel::suspicious(),
        }
    }

    fn check_flow(&self, flow: &[Symbol]) -> Result<()> {
        let (m, q) = (self.m(), self.q());
        if flow.len() != m {
            return Err(EfcError::Mismatch(format!(
                "flow has {} features, model expects {m}",
                flow.len()
            )));
        }
        if let Some(&s) = flow.iter().find(|&&s| s == 0 || s as usize > q) {
            return Err(EfcError::Mismatch(format!("symbol {s} outside 1..={q}")));
        }
        Ok(())
    }

    fn classify_unchecked(&self, flow: &[Symbol], thresholds: &[f64]) -> Result<EnergyVector> {
        let energies = self
            .classes
            .iter()
            .map(|c| c.energy_unchecked(flow))
            .collect();
        decide(energies, thresholds)
    }

    pub fn classify(&self, flow: &[Symbol]) -> Result<EnergyVector> {
        self.check_flow(flow)?;
        self.classify_unchecked(flow, &self.thresholds())
    }

    /// Classifies every row; output order matches input order.
    pub fn classify_batch(&self, table: &DiscretizedTable) -> Result<Vec<EnergyVector>> {
        if table.q() != self.q() || table.m() != self.m() {
            return Err(EfcError::Mismatch(format!(
                "table is {}-wide over Q={}, model expects {}-wide over Q={}",
                table.m(),
                table.q(),
                self.m(),
                self.q()
            )));
        }
        let thresholds = self.thresholds();
        table
            .symbols()
            .par_chunks(table.m().max(1) * 1024)
            .map(|chunk| {
                chunk
                    .chunks_exact(table.m())
                    .map(|row| self.classify_unchecked(row, &thresholds))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
            .map(|parts| parts.into_iter().flatten().collect())
    }

    /// Preprocesses a raw table with the stored state, then classifies it.
    pub fn predict(&self, table: &RawFlowTable) -> Result<Vec<EnergyVector>> {
        let discretized = self.preprocessor.transform(table)?;
        self.classify_batch(&discretized)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::LabelColumn;
    use proptest::prelude::*;

    #[test]
    fn decision_rule_examples() {
        let accepted = decide(vec![-5.0, -1.0], &[-4.0, 0.0]).unwrap();
        assert_eq!(accepted.verdict, Verdict::Class(0));
        let rejected = decide(vec![-3.0, -1.0], &[-4.0, 0.0]).unwrap();
        assert_eq!(rejected.verdict, Verdict::Suspicious);
        assert_eq!(rejected.argmin, 0);
        let boundary = decide(vec![2.0, 3.0], &[2.0, 0.0]).unwrap();
        assert_eq!(boundary.verdict, Verdict::Class(0));
        let tie = decide(vec![0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(tie.argmin, 0);
        assert!(decide(vec![], &[]).is_err());
    }

    proptest! {
        #[test]
        fn shifting_energies_and_thresholds_keeps_verdict(
            pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..6),
            shift in -1e3f64..1e3,
        ) {
            let (e, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            // dyadic shift keeps the comparisons exact
            let shift = (shift * 64.0).round() / 64.0;
            let e: Vec<f64> = e.iter().map(|v| (v * 64.0).round() / 64.0).collect();
            let t: Vec<f64> = t.iter().map(|v| (v * 64.0).round() / 64.0).collect();
            let base = decide(e.clone(), &t).unwrap();
            let moved = decide(
                e.iter().map(|v| v + shift).collect(),
                &t.iter().map(|v| v + shift).collect::<Vec<_>>(),
            ).unwrap();
            prop_assert_eq!(base.verdict, moved.verdict);
            prop_assert_eq!(base.argmin, moved.argmin);
        }
    }

    fn two_class_table() -> DiscretizedTable {
        // class a concentrates on symbol 1, class b on symbol 2; Q = 3
        let mut symbols = Vec::new();
        let mut labels = Vec::new();
        for k in 0..60u16 {
            let noise = (k % 5 == 0) as u16;
            symbols.extend([1 + noise, 1, 1 + (k % 7 == 0) as u16]);
            labels.push("a");
            symbols.extend([2, 2 - (k % 6 == 0) as u16, 2 + noise]);
            labels.push("b");
        }
        DiscretizedTable::new(symbols, 3, 3, Some(LabelColumn::from_values(labels))).unwrap()
    }

    fn dummy_state(m: usize, q: usize) -> PreprocessorState {
        PreprocessorState {
            q,
            features: (0..m)
                .map(|i| preprocess::EncodedFeature {
                    name: format!("f{i}"),
                    encoder: preprocess::FeatureEncoder::Continuous {
                        scale: 1.0,
                        edges: vec![],
                    },
                })
                .collect(),
            fitted_on: 0,
        }
    }

    fn params(q: usize) -> TrainingParams {
        TrainingParams {
            q,
            ..Default::default()
        }
    }

    #[test]
    fn batch_matches_per_row_and_is_ordered() {
        let t = two_class_table();
        let model = MultiClassModel::train_discretized(&t, dummy_state(3, 3), params(3)).unwrap();
        assert_eq!(model.labels(), ["a", "b"]);
        let batch = model.classify_batch(&t).unwrap();
        assert_eq!(batch.len(), t.n());
        for (row, ev) in t.rows().zip(&batch) {
            assert_eq!(&model.classify(row).unwrap(), ev);
        }
        assert_eq!(model.classify_batch(&t.select(&[])).unwrap(), vec![]);
        assert_eq!(
            model.classify(&[1, 1, 1]).unwrap().verdict,
            Verdict::Class(0)
        );
        assert_eq!(
            model.classify(&[2, 2, 2]).unwrap().verdict,
            Verdict::Class(1)
        );
    }

    #[test]
    fn reference_flow_has_zero_energy_everywhere() {
        let t = two_class_table();
        let model = MultiClassModel::train_discretized(&t, dummy_state(3, 3), params(3)).unwrap();
        let ev = model.classify(&[3, 3, 3]).unwrap();
        assert!(ev.energies.iter().all(|&e| e == 0.0));
        assert_eq!(ev.argmin, 0);
    }

    #[test]
    fn one_class_model_matches_single_class_rule() {
        let t = two_class_table();
        let only_a: Vec<usize> = (0..t.n()).step_by(2).collect();
        let a = t.select(&only_a);
        let model = MultiClassModel::train_discretized(&a, dummy_state(3, 3), params(3)).unwrap();
        let benign = &model.classes[0];
        let mut normal = 0;
        for row in t.rows() {
            let multi = model.classify(row).unwrap().verdict;
            let single = classify_single(row, benign).unwrap();
            assert_eq!(multi == Verdict::Class(0), single == SingleVerdict::Normal);
            if a.rows().any(|r| r == row) && single == SingleVerdict::Normal {
                normal += 1;
            }
        }
        assert!(normal > 0);
    }

    #[test]
    fn classify_single_boundary_is_inclusive() {
        let t = two_class_table();
        let model = MultiClassModel::train_discretized(&t, dummy_state(3, 3), params(3)).unwrap();
        let mut c = model.classes[0].clone();
        let flow = [1, 1, 1];
        let h = c.energy(&flow).unwrap();
        c.threshold = h;
        assert_eq!(classify_single(&flow, &c).unwrap(), SingleVerdict::Normal);
        c.threshold = h - 1e-9;
        assert_eq!(classify_single(&flow, &c).unwrap(), SingleVerdict::Abnormal);
    }

    #[test]
    fn rejects_bad_flows_and_labels() {
        let t = two_class_table();
        let model = MultiClassModel::train_discretized(&t, dummy_state(3, 3), params(3)).unwrap();
        assert!(model.classify(&[1, 1]).is_err());
        assert!(model.classify(&[1, 4, 1]).is_err());
        assert!(model.classify(&[0, 1, 1]).is_err());

        let mut reserved = model.classes[0].clone();
        reserved.label = SUSPICIOUS.into();
        assert!(MultiClassModel::new(vec![reserved], dummy_state(3, 3), params(3)).is_err());
        let dup = vec![model.classes[0].clone(), model.classes[0].clone()];
        assert!(MultiClassModel::new(dup, dummy_state(3, 3), params(3)).is_err());
        assert!(MultiClassModel::new(vec![], dummy_state(3, 3), params(3)).is_err());
    }

    #[test]
    fn undersampling_cap_applies_before_fit() {
        let t = two_class_table();
        let p = TrainingParams {
            cap: Some(10),
            ..params(3)
        };
        let model = MultiClassModel::train_discretized(&t, dummy_state(3, 3), p).unwrap();
        assert!(model.classes.iter().all(|c| c.sample_count == 10));
    }
}
