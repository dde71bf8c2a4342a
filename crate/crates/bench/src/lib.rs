//! Shared workloads for the benchmarks.

use efc_core::preprocess::{EncodedFeature, FeatureEncoder};
use efc_core::synthesis::{generate, SyntheticClass, SyntheticSpec};
use efc_core::{DiscretizedTable, MultiClassModel, PreprocessorState, TrainingParams};

/// Class `k` puts 80% of its mass on a `q / classes`-wide block of symbols.
pub fn workload(classes: usize, rows: usize, m: usize, q: usize, seed: u64) -> DiscretizedTable {
    let width = (q / classes).max(1);
    let spec = SyntheticSpec {
        q,
        seed,
        classes: (0..classes)
            .map(|k| {
                let support: Vec<u16> = (0..width)
                    .map(|s| ((k * width + s) % q + 1) as u16)
                    .collect();
                SyntheticClass::concentrated(&format!("class{k}"), m, q, &support, 0.8, rows)
            })
            .collect(),
        pair: None,
    };
    generate(&spec).expect("valid workload spec")
}

pub fn passthrough(m: usize, q: usize) -> PreprocessorState {
    PreprocessorState {
        q,
        features: (0..m)
            .map(|i| EncodedFeature {
                name: format!("f{}", i + 1),
                encoder: FeatureEncoder::Continuous {
                    scale: 1.0,
                    edges: (1..q).map(|k| k as f64 + 0.5).collect(),
                },
            })
            .collect(),
        fitted_on: 0,
    }
}

pub fn trained(table: &DiscretizedTable) -> MultiClassModel {
    let params = TrainingParams {
        q: table.q(),
        ..Default::default()
    };
    MultiClassModel::train_discretized(table, passthrough(table.m(), table.q()), params)
        .expect("workload trains")
}
