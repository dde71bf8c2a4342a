//! Seeded synthetic flow generator with per-class categorical features and an
//! optional copy rule that correlates two features.

use std::path::Path;

use rand::Rng;
use rand_distr::{weighted::WeightedIndex, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{EfcError, Result};
use crate::preprocess::{DiscretizedTable, Symbol};
use crate::schema::DatasetSchema;
use crate::seeding::derived_rng;
use crate::table::{Column, LabelColumn, RawFlowTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticClass {
    pub label: String,
    pub rows: usize,
    /// One distribution over `1..=Q` per feature.
    pub features: Vec<Vec<f64>>,
}

/// With probability `rho`, feature `target` copies feature `source`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRule {
    pub source: usize,
    pub target: usize,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub q: usize,
    pub seed: u64,
    pub classes: Vec<SyntheticClass>,
    #[serde(default)]
    pub pair: Option<PairRule>,
}

impl SyntheticClass {
    /// Every feature puts `mass` uniformly on `support` and the remainder
    /// uniformly on the other symbols (all of it on `support` if that covers
    /// the alphabet).
    pub fn concentrated(
        label: &str,
        m: usize,
        q: usize,
        support: &[Symbol],
        mass: f64,
        rows: usize,
    ) -> Self {
        let (inside, outside) = if support.len() < q {
            (
                mass / support.len() as f64,
                (1.0 - mass) / (q - support.len()) as f64,
            )
        } else {
            (1.0 / q as f64, 0.0)
        };
        let dist: Vec<f64> = (1..=q as Symbol)
            .map(|s| {
                if support.contains(&s) {
                    inside
                } else {
                    outside
                }
            })
            .collect();
        SyntheticClass {
            label: label.to_string(),
            rows,
            features: vec![dist; m],
        }
    }

    /// Every row equals `mode`.
    pub fn point_mass(label: &str, mode: &[Symbol], q: usize, rows: usize) -> Self {
        let features = mode
            .iter()
            .map(|&s| {
                let mut d = vec![0.0; q];
                d[s as usize - 1] = 1.0;
                d
            })
            .collect();
        SyntheticClass {
            label: label.to_string(),
            rows,
            features,
        }
    }
}

impl SyntheticSpec {
    pub fn from_toml_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| EfcError::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| EfcError::InvalidParameter(format!("{}: {e}", path.display())))
    }

    pub fn m(&self) -> usize {
        self.classes.first().map_or(0, |c| c.features.len())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(EfcError::InvalidParameter(msg));
        if self.q < 2 || self.q > Symbol::MAX as usize {
            return bad(format!("alphabet size {} out of range", self.q));
        }
        if self.classes.is_empty() {
            return bad("no classes".into());
        }
        let m = self.m();
        if m < 2 {
            return bad(format!("need at least two features, got {m}"));
        }
        for c in &self.classes {
            if c.features.len() != m {
                return bad(format!(
                    "class `{}` has {} features, expected {m}",
                    c.label,
                    c.features.len()
                ));
            }
            for (i, d) in c.features.iter().enumerate() {
                if d.len() != self.q {
                    return bad(format!(
                        "class `{}` feature {i}: {} probabilities for Q = {}",
                        c.label,
                        d.len(),
                        self.q
                    ));
                }
                if d.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return bad(format!(
                        "class `{}` feature {i}: negative or non-finite probability",
                        c.label
                    ));
                }
                let sum: f64 = d.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return bad(format!(
                        "class `{}` feature {i}: probabilities sum to {sum}",
                        c.label
                    ));
                }
            }
        }
        if let Some(p) = self.pair {
            if !(0.0..=1.0).contains(&p.rho) {
                return bad(format!("rho {} outside [0, 1]", p.rho));
            }
            if p.source >= m || p.target >= m || p.source == p.target {
                return bad(format!(
                    "pair rule {}→{} invalid for {m} features",
                    p.source, p.target
                ));
            }
        }
        Ok(())
    }
}

fn sample_class(spec: &SyntheticSpec, class: &SyntheticClass) -> Result<Vec<Symbol>> {
    let m = class.features.len();
    let samplers = class
        .features
        .iter()
        .map(|d| WeightedIndex::new(d).map_err(|e| EfcError::InvalidParameter(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = derived_rng(spec.seed, &class.label, 0);
    let mut out = Vec::with_capacity(class.rows * m);
    let mut row = vec![0 as Symbol; m];
    for _ in 0..class.rows {
        for (slot, sampler) in row.iter_mut().zip(&samplers) {
            *slot = (sampler.sample(&mut rng) + 1) as Symbol;
        }
        if let Some(p) = spec.pair {
            if rng.random_bool(p.rho) {
                row[p.target] = row[p.source];
            }
        }
        out.extend_from_slice(&row);
    }
    Ok(out)
}

/// Samples all classes, concatenated in spec order.
pub fn generate(spec: &SyntheticSpec) -> Result<DiscretizedTable> {
    spec.validate()?;
    let mut symbols = Vec::new();
    let mut labels = Vec::new();
    for class in &spec.classes {
        symbols.extend(sample_class(spec, class)?);
        labels.extend(std::iter::repeat_n(class.label.as_str(), class.rows));
    }
    DiscretizedTable::new(
        symbols,
        spec.m(),
        spec.q,
        Some(LabelColumn::from_values(labels)),
    )
}

/// Continuous variant: symbol `s` becomes `s − 1 + u` with `u ~ U[0, 1)`, so
/// the value order preserves the symbol order.
pub fn generate_continuous(spec: &SyntheticSpec) -> Result<RawFlowTable> {
    let table = generate(spec)?;
    let (n, m) = (table.n(), table.m());
    let mut columns = vec![Vec::with_capacity(n); m];
    let labels = table.label_column()?;
    let mut row_start = 0;
    for class in &spec.classes {
        let mut rng = derived_rng(spec.seed, &class.label, 1);
        for r in row_start..row_start + class.rows {
            for (j, &s) in table.row(r).iter().enumerate() {
                columns[j].push(f64::from(s - 1) + rng.random::<f64>());
            }
        }
        row_start += class.rows;
    }
    RawFlowTable::new(
        DatasetSchema::all_continuous(m)?,
        columns.into_iter().map(Column::Continuous).collect(),
        Some(labels.clone()),
    )
}

/// Symbols written as integers with schema `f1..fm,label`.
pub fn discretized_to_raw(table: &DiscretizedTable) -> Result<RawFlowTable> {
    let m = table.m();
    let mut columns = vec![Vec::with_capacity(table.n()); m];
    for row in table.rows() {
        for (j, &s) in row.iter().enumerate() {
            columns[j].push(f64::from(s));
        }
    }
    RawFlowTable::new(
        DatasetSchema::all_continuous(m)?,
        columns.into_iter().map(Column::Continuous).collect(),
        table.labels.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(rows: usize, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            q: 5,
            seed,
            classes: vec![
                SyntheticClass {
                    label: "a".into(),
                    rows,
                    features: vec![
                        vec![0.1, 0.2, 0.3, 0.25, 0.15],
                        vec![0.5, 0.5, 0.0, 0.0, 0.0],
                        vec![0.2; 5],
                    ],
                },
                SyntheticClass::concentrated("b", 3, 5, &[4, 5], 0.9, rows),
            ],
            pair: None,
        }
    }

    #[test]
    fn point_mass_rows_are_identical() {
        let s = SyntheticSpec {
            q: 4,
            seed: 3,
            classes: vec![
                SyntheticClass::point_mass("x", &[1, 4, 2], 4, 10),
                SyntheticClass::point_mass("y", &[3, 3, 3], 4, 5),
            ],
            pair: None,
        };
        let t = generate(&s).unwrap();
        assert!(t.rows().take(10).all(|r| r == [1, 4, 2]));
        assert!(t.rows().skip(10).all(|r| r == [3, 3, 3]));
    }

    #[test]
    fn same_seed_same_table() {
        assert_eq!(
            generate(&spec(200, 9)).unwrap(),
            generate(&spec(200, 9)).unwrap()
        );
        assert_ne!(
            generate(&spec(200, 9)).unwrap(),
            generate(&spec(200, 10)).unwrap()
        );
        let a = generate_continuous(&spec(50, 1)).unwrap();
        let mut buf_a = Vec::new();
        a.write_csv(&mut buf_a).unwrap();
        let mut buf_b = Vec::new();
        generate_continuous(&spec(50, 1))
            .unwrap()
            .write_csv(&mut buf_b)
            .unwrap();
        assert_eq!(buf_a, buf_b);
    }

    #[test]
    fn empirical_frequencies_match_spec() {
        let s = spec(100_000, 42);
        let t = generate(&s).unwrap();
        for (k, class) in s.classes.iter().enumerate() {
            for (i, dist) in class.features.iter().enumerate() {
                let rows = t.rows().skip(k * class.rows).take(class.rows);
                let mut counts = vec![0usize; s.q];
                for r in rows {
                    counts[r[i] as usize - 1] += 1;
                }
                for (c, p) in counts.iter().zip(dist) {
                    let f = *c as f64 / class.rows as f64;
                    assert!((f - p).abs() <= 0.01, "class {k} feature {i}: {f} vs {p}");
                }
            }
        }
    }

    #[test]
    fn continuous_values_floor_to_symbols() {
        let s = spec(300, 5);
        let d = generate(&s).unwrap();
        let r = generate_continuous(&s).unwrap();
        for (j, col) in r.columns.iter().enumerate() {
            let Column::Continuous(v) = col else { panic!() };
            for (i, x) in v.iter().enumerate() {
                assert_eq!(x.floor() as Symbol + 1, d.row(i)[j]);
            }
        }
    }

    #[test]
    fn copy_rule_raises_diagonal_pair_frequency() {
        let mut s = spec(20_000, 8);
        s.pair = Some(PairRule {
            source: 0,
            target: 2,
            rho: 0.6,
        });
        let t = generate(&s).unwrap();
        let rows: Vec<&[Symbol]> = t.rows().take(20_000).collect();
        let n = rows.len() as f64;
        for a in 1..=5u16 {
            let fi = rows.iter().filter(|r| r[0] == a).count() as f64 / n;
            let fj = rows.iter().filter(|r| r[2] == a).count() as f64 / n;
            let fij = rows.iter().filter(|r| r[0] == a && r[2] == a).count() as f64 / n;
            assert!(fij > fi * fj, "symbol {a}: {fij} <= {fi}·{fj}");
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = spec(10, 1);
        s.classes[0].features[0][0] = 0.5;
        assert!(generate(&s).is_err());
        let mut s = spec(10, 1);
        s.pair = Some(PairRule {
            source: 0,
            target: 1,
            rho: 1.5,
        });
        assert!(generate(&s).is_err());
        let mut s = spec(10, 1);
        s.pair = Some(PairRule {
            source: 1,
            target: 1,
            rho: 0.5,
        });
        assert!(generate(&s).is_err());
        let mut s = spec(10, 1);
        s.classes[1].features.pop();
        assert!(generate(&s).is_err());
    }

    #[test]
    fn spec_parses_from_toml() {
        let text = r#"
            q = 3
            seed = 11
            [pair]
            source = 0
            target = 1
            rho = 0.5
            [[classes]]
            label = "benign"
            rows = 4
            features = [[0.5, 0.5, 0.0], [0.2, 0.3, 0.5]]
        "#;
        let s: SyntheticSpec = toml::from_str(text).unwrap();
        s.validate().unwrap();
        assert_eq!(generate(&s).unwrap().n(), 4);
    }

    #[test]
    fn concentrated_over_the_whole_alphabet_is_uniform() {
        let c = SyntheticClass::concentrated("u", 2, 4, &[1, 2, 3, 4], 0.8, 10);
        assert_eq!(c.features, vec![vec![0.25; 4]; 2]);
        let spec = SyntheticSpec {
            q: 4,
            seed: 0,
            classes: vec![c],
            pair: None,
        };
        assert!(spec.validate().is_ok());
    }
}
