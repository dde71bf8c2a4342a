//! Mean-field inference of a Potts model for one traffic class.
//!
//! From `n` discretized flows of width `m` over the alphabet `1..=Q`:
//!
//! 1. pseudocount-blended single-site and pair frequencies,
//! 2. the connected correlation matrix `C` over the `D = m·(Q−1)` non-reference
//!    states,
//! 3. couplings `e = −C⁻¹`,
//! 4. local fields `h_i(a) = ln(f_i(a)/f_i(Q)) − Σ_{j≠i,b<Q} e_ij(a,b)·f_j(b)`,
//! 5. the class threshold: the nearest-rank 95th percentile of the training
//!    energies.
//!
//! Symbol `Q` is the reference state; every coupling and field that involves it
//! is zero, and the energy sums skip it.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EfcError, Result};
use crate::preprocess::Symbol;

/// Largest tolerated `max |C·C⁻¹ − I|`.
pub const INVERSION_TOLERANCE: f64 = 1e-6;
/// Diagonal term added on the single retry after a failed inversion.
pub const RIDGE: f64 = 1e-6;
/// Percentile of training energies used as the class threshold.
pub const THRESHOLD_PERCENTILE: usize = 95;

/// Borrowed row-major block of flows.
#[derive(Debug, Clone, Copy)]
pub struct Flows<'a> {
    symbols: &'a [Symbol],
    m: usize,
}

impl<'a> Flows<'a> {
    pub fn new(symbols: &'a [Symbol], m: usize) -> Result<Self> {
        if m == 0 || !symbols.len().is_multiple_of(m) {
            return Err(EfcError::InvalidParameter(format!(
                "{} symbols do not form rows of width {m}",
                symbols.len()
            )));
        }
        Ok(Flows { symbols, m })
    }

    pub fn n(&self) -> usize {
        self.symbols.len() / self.m
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'a, Symbol> {
        self.symbols.chunks_exact(self.m)
    }

    fn validate(&self, q: usize) -> Result<()> {
        if self.n() == 0 {
            return Err(EfcError::Empty("no flows to count".into()));
        }
        if let Some(&s) = self.symbols.iter().find(|&&s| s == 0 || s as usize > q) {
            return Err(EfcError::InvalidParameter(format!(
                "symbol {s} outside 1..={q}"
            )));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(EfcError::InvalidParameter(format!(
            "pseudocount weight must lie in [0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// `f_i(a)`, stored at `i·Q + (a−1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteFrequencies {
    pub m: usize,
    pub q: usize,
    pub values: Vec<f64>,
}

impl SiteFrequencies {
    pub fn get(&self, i: usize, a: Symbol) -> f64 {
        self.values[i * self.q + a as usize - 1]
    }
}

/// `f_ij(a,b)`, stored at `((i·m + j)·Q + (a−1))·Q + (b−1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFrequencies {
    pub m: usize,
    pub q: usize,
    pub values: Vec<f64>,
}

impl PairFrequencies {
    pub fn get(&self, i: usize, j: usize, a: Symbol, b: Symbol) -> f64 {
        let q = self.q;
        self.values[((i * self.m + j) * q + a as usize - 1) * q + b as usize - 1]
    }

    fn block(&self, i: usize, j: usize) -> &[f64] {
        let qq = self.q * self.q;
        let start = (i * self.m + j) * qq;
        &self.values[start..start + qq]
    }
}

pub fn site_freq(flows: Flows<'_>, q: usize, alpha: f64) -> Result<SiteFrequencies> {
    check_alpha(alpha)?;
    flows.validate(q)?;
    let m = flows.m();
    let mut counts = vec![0u64; m * q];
    for row in flows.rows() {
        for (i, &a) in row.iter().enumerate() {
            counts[i * q + a as usize - 1] += 1;
        }
    }
    let n = flows.n() as f64;
    let prior = alpha / q as f64;
    let values = counts
        .into_iter()
        .map(|c| (1.0 - alpha) * c as f64 / n + prior)
        .collect();
    Ok(SiteFrequencies { m, q, values })
}

pub fn pair_freq(
    flows: Flows<'_>,
    site: &SiteFrequencies,
    q: usize,
    alpha: f64,
) -> Result<PairFrequencies> {
    check_alpha(alpha)?;
    flows.validate(q)?;
    let m = flows.m();
    if site.m != m || site.q != q {
        return Err(EfcError::Mismatch(format!(
            "site frequencies are {}×{}, flows need {m}×{q}",
            site.m, site.q
        )));
    }
    let qq = q * q;
    // counts[i] holds blocks for j = i+1..m.
    let counts: Vec<Vec<u32>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut c = vec![0u32; (m - i - 1) * qq];
            for row in flows.rows() {
                let a = row[i] as usize - 1;
                for (k, &b) in row[i + 1..].iter().enumerate() {
                    c[k * qq + a * q + b as usize - 1] += 1;
                }
            }
            c
        })
        .collect();

    let n = flows.n() as f64;
    let prior = alpha / qq as f64;
    let mut values = vec![0.0; m * m * qq];
    for (i, ci) in counts.iter().enumerate() {
        for (k, block) in ci.chunks_exact(qq).enumerate() {
            let j = i + 1 + k;
            for a in 0..q {
                for b in 0..q {
                    let f = (1.0 - alpha) * block[a * q + b] as f64 / n + prior;
                    values[(i * m + j) * qq + a * q + b] = f;
                    values[(j * m + i) * qq + b * q + a] = f;
                }
            }
        }
        for a in 0..q {
            values[(i * m + i) * qq + a * q + a] = site.values[i * q + a];
        }
    }
    Ok(PairFrequencies { m, q, values })
}

/// Pseudocount-regularized frequencies of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyModel {
    pub site: SiteFrequencies,
    pub pair: PairFrequencies,
    pub alpha: f64,
    pub sample_count: usize,
}

impl FrequencyModel {
    pub fn estimate(flows: Flows<'_>, q: usize, alpha: f64) -> Result<Self> {
        let site = site_freq(flows, q, alpha)?;
        let pair = pair_freq(flows, &site, q, alpha)?;
        Ok(FrequencyModel {
            site,
            pair,
            alpha,
            sample_count: flows.n(),
        })
    }
}

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for k in 0..dim {
            data[k * dim + k] = 1.0;
        }
        DenseMatrix { dim, data }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.dim + c]
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let dim = m.nrows();
        // nalgebra is column-major; the transpose's storage is our row-major layout.
        DenseMatrix {
            dim,
            data: m.transpose().as_slice().to_vec(),
        }
    }
}

/// Flat index of the non-reference state `a` (`1..Q`) at site `i`.
#[inline]
pub fn state_index(i: usize, a: Symbol, q: usize) -> usize {
    i * (q - 1) + a as usize - 1
}

pub fn covariance(site: &SiteFrequencies, pair: &PairFrequencies) -> DenseMatrix {
    let (m, q) = (site.m, site.q);
    let s = q - 1;
    let dim = m * s;
    let mut data = vec![0.0; dim * dim];
    for i in 0..m {
        for j in 0..m {
            let block = pair.block(i, j);
            for a in 0..s {
                let fa = site.values[i * q + a];
                let row = (i * s + a) * dim + j * s;
                for b in 0..s {
                    data[row + b] = block[a * q + b] - fa * site.values[j * q + b];
                }
            }
        }
    }
    DenseMatrix { dim, data }
}

/// `e = −C⁻¹` together with the achieved inversion residual.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    pub m: usize,
    pub q: usize,
    pub matrix: DenseMatrix,
}

impl CouplingMatrix {
    pub fn new(m: usize, q: usize, matrix: DenseMatrix) -> Result<Self> {
        if q < 2 || matrix.dim != m * (q - 1) || matrix.data.len() != matrix.dim * matrix.dim {
            return Err(EfcError::InvalidParameter(format!(
                "coupling matrix of dimension {} does not fit m = {m}, Q = {q}",
                matrix.dim
            )));
        }
        Ok(CouplingMatrix { m, q, matrix })
    }

    /// `e_ij(a,b)`; zero whenever either symbol is the reference `Q`.
    pub fn get(&self, i: usize, a: Symbol, j: usize, b: Symbol) -> f64 {
        let q = self.q;
        if a as usize == q || b as usize == q {
            return 0.0;
        }
        self.matrix.get(state_index(i, a, q), state_index(j, b, q))
    }
}

/// Outcome of inverting the correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Inversion {
    pub couplings: DenseMatrix,
    pub residual: f64,
    /// Diagonal ridge that was needed (0 when the plain inversion passed).
    pub ridge: f64,
}

fn invert_checked(c: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let inv = match c.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => c.clone().try_inverse()?,
    };
    // exact inverse of a symmetric matrix is symmetric
    let inv = (&inv + inv.transpose()) * 0.5;
    let mut prod = c * &inv;
    for k in 0..prod.nrows() {
        prod[(k, k)] -= 1.0;
    }
    let residual = prod.amax();
    residual.is_finite().then_some((inv, residual))
}

/// Negated inverse of `c`, with one ridge retry on failure.
pub fn couplings(c: &DenseMatrix) -> Result<Inversion> {
    if c.dim == 0 {
        return Err(EfcError::InvalidParameter(
            "empty correlation matrix".into(),
        ));
    }
    let mut mat = c.to_nalgebra();
    let mut last = f64::INFINITY;
    for ridge in [0.0, RIDGE] {
        if ridge > 0.0 {
            for k in 0..mat.nrows() {
                mat[(k, k)] += ridge;
            }
        }
        if let Some((inv, residual)) = invert_checked(&mat) {
            if residual < INVERSION_TOLERANCE {
                return Ok(Inversion {
                    couplings: DenseMatrix::from_nalgebra(&(-inv)),
                    residual,
                    ridge,
                });
            }
            last = residual;
        }
    }
    Err(EfcError::Singular { residual: last })
}

/// `h_i(a)` stored at `i·Q + (a−1)`; `h_i(Q) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFields {
    pub m: usize,
    pub q: usize,
    pub values: Vec<f64>,
}

impl LocalFields {
    pub fn get(&self, i: usize, a: Symbol) -> f64 {
        self.values[i * self.q + a as usize - 1]
    }
}

pub fn local_fields(couplings: &CouplingMatrix, site: &SiteFrequencies) -> Result<LocalFields> {
    let (m, q) = (site.m, site.q);
    if couplings.m != m || couplings.q != q {
        return Err(EfcError::Mismatch(
            "couplings and frequencies disagree on m or Q".into(),
        ));
    }
    let s = q - 1;
    let dim = couplings.matrix.dim;
    let mut values = vec![0.0; m * q];
    for i in 0..m {
        let reference = site.values[i * q + s];
        if reference <= 0.0 {
            return Err(EfcError::UnobservedReference { feature: i });
        }
        for a in 0..s {
            let row = &couplings.matrix.data[(i * s + a) * dim..(i * s + a + 1) * dim];
            let mut field = (site.values[i * q + a] / reference).ln();
            for j in (0..m).filter(|&j| j != i) {
                for b in 0..s {
                    field -= row[j * s + b] * site.values[j * q + b];
                }
            }
            values[i * q + a] = field;
        }
    }
    Ok(LocalFields { m, q, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySummary {
    pub min: f64,
    pub median: f64,
    pub p95: f64,
    pub max: f64,
}

/// Nearest-rank percentile (`p` in 1..=100) of an ascending slice.
pub fn nearest_rank(sorted: &[f64], p: usize) -> f64 {
    let n = sorted.len();
    let rank = (n * p).div_ceil(100).max(1);
    sorted[rank - 1]
}

impl EnergySummary {
    pub fn from_energies(mut energies: Vec<f64>) -> Self {
        energies.sort_by(f64::total_cmp);
        EnergySummary {
            min: energies[0],
            median: nearest_rank(&energies, 50),
            p95: nearest_rank(&energies, THRESHOLD_PERCENTILE),
            max: energies[energies.len() - 1],
        }
    }
}

/// The inferred model of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel {
    pub label: String,
    pub couplings: CouplingMatrix,
    pub fields: LocalFields,
    pub threshold: f64,
    pub alpha: f64,
    pub sample_count: usize,
    pub ridge: f64,
    pub summary: EnergySummary,
}

impl ClassModel {
    pub fn m(&self) -> usize {
        self.fields.m
    }

    pub fn q(&self) -> usize {
        self.fields.q
    }

    /// `H = −Σ_{i<j} e_ij(a_i,a_j) − Σ_i h_i(a_i)` over non-reference symbols.
    pub fn energy(&self, flow: &[Symbol]) -> Result<f64> {
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
        Ok(self.energy_unchecked(flow))
    }

    #[inline]
    pub(crate) fn energy_unchecked(&self, flow: &[Symbol]) -> f64 {
        let q = self.q();
        let s = q - 1;
        let dim = self.couplings.matrix.dim;
        let e = &self.couplings.matrix.data;
        let h = &self.fields.values;
        let mut energy = 0.0;
        for (i, &a) in flow.iter().enumerate() {
            let a = a as usize;
            if a == q {
                continue;
            }
            let row = &e[(i * s + a - 1) * dim..];
            for (j, &b) in flow.iter().enumerate().skip(i + 1) {
                let b = b as usize;
                if b != q {
                    energy -= row[j * s + b - 1];
                }
            }
            energy -= h[i * q + a - 1];
        }
        energy
    }
}

/// Trains one class model.
pub fn fit_class(label: &str, flows: Flows<'_>, q: usize, alpha: f64) -> Result<ClassModel> {
    if flows.n() < 2 {
        return Err(EfcError::InvalidParameter(format!(
            "class `{label}` has {} flows, at least 2 are needed",
            flows.n()
        )));
    }
    let freq = FrequencyModel::estimate(flows, q, alpha)?;
    let c = covariance(&freq.site, &freq.pair);
    drop(freq.pair);
    let inversion = couplings(&c)?;
    drop(c);
    let couplings = CouplingMatrix::new(flows.m(), q, inversion.couplings)?;
    let fields = local_fields(&couplings, &freq.site)?;
    let mut model = ClassModel {
        label: label.to_string(),
        couplings,
        fields,
        threshold: 0.0,
        alpha,
        sample_count: flows.n(),
        ridge: inversion.ridge,
        summary: EnergySummary {
            min: 0.0,
            median: 0.0,
            p95: 0.0,
            max: 0.0,
        },
    };
    let energies: Vec<f64> = flows.rows().map(|r| model.energy_unchecked(r)).collect();
    model.summary = EnergySummary::from_energies(energies);
    model.threshold = model.summary.p95;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Four flows, m = 2, Q = 2.
    const MICRO: [Symbol; 8] = [1, 1, 1, 1, 1, 2, 2, 1];

    fn micro() -> Flows<'static> {
        Flows::new(&MICRO, 2).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn site_frequencies_blend_pseudocount() {
        let f = site_freq(micro(), 2, 0.5).unwrap();
        assert!(close(f.get(0, 1), 0.625, 1e-15));
        assert!(close(f.get(0, 2), 0.375, 1e-15));
        let raw = site_freq(micro(), 2, 0.0).unwrap();
        assert_eq!(raw.get(0, 1), 0.75);
        assert_eq!(raw.get(1, 2), 0.25);
        assert!(site_freq(Flows::new(&[], 2).unwrap(), 2, 0.5).is_err());
        assert!(site_freq(micro(), 2, 1.0).is_err());
        assert!(site_freq(micro(), 1, 0.5).is_err());
    }

    #[test]
    fn pair_frequencies_micro() {
        let f = site_freq(micro(), 2, 0.5).unwrap();
        let p = pair_freq(micro(), &f, 2, 0.5).unwrap();
        assert!(close(p.get(0, 1, 1, 1), 0.375, 1e-15));
        assert_eq!(p.get(0, 0, 1, 2), 0.0);
        assert_eq!(p.get(0, 0, 1, 1), f.get(0, 1));
        let total: f64 = p.block(0, 1).iter().sum();
        assert!(close(total, 1.0, 1e-12));
    }

    #[test]
    fn covariance_micro() {
        let f = site_freq(micro(), 2, 0.5).unwrap();
        let p = pair_freq(micro(), &f, 2, 0.5).unwrap();
        let c = covariance(&f, &p);
        assert_eq!(c.dim, 2);
        let expected = [0.234375, -0.015625, -0.015625, 0.234375];
        for (got, want) in c.data.iter().zip(expected) {
            assert!(close(*got, want, 1e-15), "{:?}", c.data);
        }
    }

    #[test]
    fn independent_uniform_features_have_zero_cross_covariance() {
        // every (a, b) combination exactly once
        let q = 3u16;
        let symbols: Vec<Symbol> = (1..=q)
            .flat_map(|a| (1..=q).flat_map(move |b| [a, b]))
            .collect();
        let flows = Flows::new(&symbols, 2).unwrap();
        let f = site_freq(flows, 3, 0.0).unwrap();
        let p = pair_freq(flows, &f, 3, 0.0).unwrap();
        let c = covariance(&f, &p);
        for a in 0..2 {
            for b in 0..2 {
                assert!(c.get(a, 2 + b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn couplings_micro_and_simple_matrices() {
        let f = site_freq(micro(), 2, 0.5).unwrap();
        let p = pair_freq(micro(), &f, 2, 0.5).unwrap();
        let inv = couplings(&covariance(&f, &p)).unwrap();
        assert_eq!(inv.ridge, 0.0);
        // -(C^-1)_12 = -0.015625 / 0.0546875
        assert!(close(inv.couplings.get(0, 1), -0.285714, 1e-5));
        assert!(close(inv.couplings.get(0, 1), -2.0 / 7.0, 1e-12));
        assert_eq!(inv.couplings.get(0, 1), inv.couplings.get(1, 0));

        let id = couplings(&DenseMatrix::identity(4)).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let want = if r == c { -1.0 } else { 0.0 };
                assert!(close(id.couplings.get(r, c), want, 1e-14));
            }
        }

        let d = [2.0, 0.5, 4.0];
        let mut diag = DenseMatrix::identity(3);
        for (k, v) in d.iter().enumerate() {
            diag.data[k * 3 + k] = *v;
        }
        let out = couplings(&diag).unwrap();
        for (k, v) in d.iter().enumerate() {
            assert!(close(out.couplings.get(k, k), -1.0 / v, 1e-14));
        }
    }

    #[test]
    fn singular_matrix_retries_then_fails() {
        // tiny-but-nonzero singular direction is rescued by the ridge
        let near = DenseMatrix {
            dim: 2,
            data: vec![1.0, 1.0, 1.0, 1.0],
        };
        let out = couplings(&near).unwrap();
        assert_eq!(out.ridge, RIDGE);
        assert!(out.residual < INVERSION_TOLERANCE);

        let hopeless = DenseMatrix {
            dim: 2,
            data: vec![1e30, 1e30, 1e30, 1e30],
        };
        assert!(matches!(
            couplings(&hopeless),
            Err(EfcError::Singular { .. })
        ));
    }

    #[test]
    fn local_fields_micro() {
        let f = site_freq(micro(), 2, 0.5).unwrap();
        let p = pair_freq(micro(), &f, 2, 0.5).unwrap();
        let inv = couplings(&covariance(&f, &p)).unwrap();
        let e = CouplingMatrix::new(2, 2, inv.couplings).unwrap();
        let h = local_fields(&e, &f).unwrap();
        let want = (5.0f64 / 3.0).ln() + (2.0 / 7.0) * 0.625;
        assert!(close(h.get(0, 1), 0.689397, 1e-5));
        assert!(close(h.get(0, 1), want, 1e-12));
        assert!(close(h.get(1, 1), want, 1e-12));
        assert_eq!(h.get(0, 2), 0.0);
        assert_eq!(h.get(1, 2), 0.0);
    }

    #[test]
    fn uniform_frequencies_zero_couplings_give_zero_fields() {
        let site = SiteFrequencies {
            m: 3,
            q: 4,
            values: vec![0.25; 12],
        };
        let e = CouplingMatrix::new(
            3,
            4,
            DenseMatrix {
                dim: 9,
                data: vec![0.0; 81],
            },
        )
        .unwrap();
        let h = local_fields(&e, &site).unwrap();
        assert!(h.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unobserved_reference_without_pseudocount_is_rejected() {
        let flows = Flows::new(&[1, 1, 1, 2, 1, 1], 2).unwrap();
        let site = site_freq(flows, 2, 0.0).unwrap();
        let e = CouplingMatrix::new(2, 2, DenseMatrix::identity(2)).unwrap();
        assert!(matches!(
            local_fields(&e, &site),
            Err(EfcError::UnobservedReference { feature: 0 })
        ));
    }

    #[test]
    fn fit_micro_class() {
        let model = fit_class("micro", micro(), 2, 0.5).unwrap();
        let h11 = model.energy(&[1, 1]).unwrap();
        assert!(close(h11, -1.093080, 1e-4));
        assert!(close(h11, 2.0 / 7.0 - 2.0 * model.fields.get(0, 1), 1e-12));
        assert_eq!(model.energy(&[2, 2]).unwrap(), 0.0);
        let h12 = model.energy(&[1, 2]).unwrap();
        // ceil(0.95 * 4) = 4: the threshold is the largest training energy
        assert_eq!(model.threshold, h12.max(h11));
        assert_eq!(model.threshold, model.summary.max);
        assert_eq!(model.threshold, model.summary.p95);
        assert!(model.energy(&[1]).is_err());
        assert!(model.energy(&[1, 3]).is_err());
    }

    #[test]
    fn identical_flows_share_one_energy() {
        let symbols: Vec<Symbol> = [1, 3, 2, 4].repeat(20);
        let model = fit_class("same", Flows::new(&symbols, 4).unwrap(), 4, 0.5).unwrap();
        let e = model.energy(&[1, 3, 2, 4]).unwrap();
        assert_eq!(model.threshold, e);
        assert_eq!(model.summary.min, e);
        assert_eq!(model.summary.max, e);
    }

    #[test]
    fn too_few_flows_rejected() {
        assert!(fit_class("x", Flows::new(&[1, 2], 2).unwrap(), 2, 0.5).is_err());
    }

    #[test]
    fn nearest_rank_rule() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 95), 19.0);
        assert_eq!(nearest_rank(&v[..4], 95), 4.0);
        assert_eq!(nearest_rank(&v[..1], 95), 1.0);
        assert_eq!(nearest_rank(&v[..10], 50), 5.0);
    }
}
