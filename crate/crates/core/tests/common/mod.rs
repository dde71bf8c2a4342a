//! Brute-force reference for the inference math: naive counting over rows,
//! Gauss-Jordan inversion with partial pivoting, and energies written
//! directly from the sums. Shares no code with the library's inference path.

#![allow(dead_code)]

use efc_core::synthesis::{SyntheticClass, SyntheticSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct BruteModel {
    pub m: usize,
    pub q: usize,
    /// e[(i,a)][(j,b)] with a,b in 1..q-1, flattened as i*(q-1)+a-1.
    pub e: Vec<Vec<f64>>,
    /// h[i][a-1] for a in 1..=q.
    pub h: Vec<Vec<f64>>,
}

pub fn gauss_jordan(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|r| (0..n).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        assert!(p.abs() > 1e-300, "singular");
        for c in 0..n {
            a[col][c] /= p;
            inv[col][c] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for c in 0..n {
                        a[r][c] -= f * a[col][c];
                        inv[r][c] -= f * inv[col][c];
                    }
                }
            }
        }
    }
    inv
}

pub fn brute_fit(rows: &[Vec<u16>], q: usize, alpha: f64) -> BruteModel {
    let n = rows.len() as f64;
    let m = rows[0].len();
    let fi = |i: usize, a: usize| {
        let c = rows.iter().filter(|r| r[i] as usize == a).count() as f64;
        (1.0 - alpha) * c / n + alpha / q as f64
    };
    let fij = |i: usize, j: usize, a: usize, b: usize| {
        if i == j {
            return if a == b { fi(i, a) } else { 0.0 };
        }
        let c = rows
            .iter()
            .filter(|r| r[i] as usize == a && r[j] as usize == b)
            .count() as f64;
        (1.0 - alpha) * c / n + alpha / (q * q) as f64
    };
    let s = q - 1;
    let d = m * s;
    let mut c = vec![vec![0.0; d]; d];
    for i in 0..m {
        for a in 1..q {
            for j in 0..m {
                for b in 1..q {
                    c[i * s + a - 1][j * s + b - 1] = fij(i, j, a, b) - fi(i, a) * fi(j, b);
                }
            }
        }
    }
    let inv = gauss_jordan(c);
    let e: Vec<Vec<f64>> = inv.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
    let mut h = vec![vec![0.0; q]; m];
    for i in 0..m {
        for a in 1..q {
            let mut acc = (fi(i, a) / fi(i, q)).ln();
            for j in 0..m {
                if j == i {
                    continue;
                }
                for b in 1..q {
                    acc -= e[i * s + a - 1][j * s + b - 1] * fi(j, b);
                }
            }
            h[i][a - 1] = acc;
        }
    }
    BruteModel { m, q, e, h }
}

impl BruteModel {
    pub fn energy(&self, flow: &[u16]) -> f64 {
        let (q, s) = (self.q, self.q - 1);
        let mut total = 0.0;
        for i in 0..self.m {
            for j in i + 1..self.m {
                let (a, b) = (flow[i] as usize, flow[j] as usize);
                if a != q && b != q {
                    total -= self.e[i * s + a - 1][j * s + b - 1];
                }
            }
        }
        for (i, &a) in flow.iter().enumerate().take(self.m) {
            let a = a as usize;
            if a != q {
                total -= self.h[i][a - 1];
            }
        }
        total
    }

    pub fn threshold(&self, rows: &[Vec<u16>]) -> f64 {
        let mut energies: Vec<f64> = rows.iter().map(|r| self.energy(r)).collect();
        energies.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rank = (0.95 * rows.len() as f64 - 1e-9).ceil() as usize;
        energies[rank.max(1) - 1]
    }
}

pub fn rel_close(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol * want.abs().max(got.abs()).max(1.0)
}

/// Rows with a mild dependency between neighbouring features.
pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, m: usize, q: usize) -> Vec<Vec<u16>> {
    (0..n)
        .map(|_| {
            let mut row: Vec<u16> = (0..m).map(|_| rng.random_range(1..=q as u16)).collect();
            for i in 1..m {
                if rng.random_bool(0.3) {
                    row[i] = row[i - 1];
                }
            }
            row
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Classes concentrated on disjoint symbol pairs {2k+1, 2k+2}.
pub fn disjoint_classes(
    labels: &[&str],
    m: usize,
    q: usize,
    rows: usize,
    seed: u64,
) -> SyntheticSpec {
    SyntheticSpec {
        q,
        seed,
        classes: labels
            .iter()
            .enumerate()
            .map(|(k, l)| {
                let support = [2 * k as u16 + 1, 2 * k as u16 + 2];
                SyntheticClass::concentrated(l, m, q, &support, 0.9, rows)
            })
            .collect(),
        pair: None,
    }
}

/// A random categorical spec with one class.
pub fn random_class_spec(
    rng: &mut ChaCha8Rng,
    label: &str,
    m: usize,
    q: usize,
    rows: usize,
) -> SyntheticSpec {
    let features = (0..m)
        .map(|_| {
            let w: Vec<f64> = (0..q).map(|_| rng.random::<f64>().powi(2) + 0.01).collect();
            let s: f64 = w.iter().sum();
            let mut p: Vec<f64> = w.iter().map(|x| x / s).collect();
            let rest: f64 = p[..q - 1].iter().sum();
            p[q - 1] = 1.0 - rest;
            p
        })
        .collect();
    SyntheticSpec {
        q,
        seed: rng.random(),
        classes: vec![SyntheticClass {
            label: label.to_string(),
            rows,
            features,
        }],
        pair: None,
    }
}
