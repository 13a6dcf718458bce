//! Thresholded Gabor matrices and their fast application.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use super::GaborMatrix;
use crate::error::{Error, Result};
use crate::gabor::{CoefficientArray, Lattice};
use crate::tfcore::C64;

/// Operator-norm bound `max(max row sum, max column sum)` of entry moduli.
pub trait Schur {
    fn schur_bound(&self) -> f64;
}

pub fn schur_bound<K: Schur + ?Sized>(k: &K) -> f64 {
    k.schur_bound()
}

impl Schur for DMatrix<C64> {
    fn schur_bound(&self) -> f64 {
        let rows = self.row_iter().map(|r| r.iter().map(|v| v.norm()).sum::<f64>()).fold(0.0, f64::max);
        let cols = self.column_iter().map(|c| c.iter().map(|v| v.norm()).sum::<f64>()).fold(0.0, f64::max);
        rows.max(cols)
    }
}

impl Schur for GaborMatrix {
    fn schur_bound(&self) -> f64 {
        self.entries().schur_bound()
    }
}

/// Entries of a Gabor matrix with modulus at least `threshold`, stored row-compressed.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseGaborMatrix {
    lattice: Lattice,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<C64>,
    threshold: f64,
    kept_fraction: f64,
    dropped_schur_mass: f64,
}

impl SparseGaborMatrix {
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn kept_fraction(&self) -> f64 {
        self.kept_fraction
    }

    /// Schur bound of the discarded entries; bounds the operator-norm error.
    pub fn dropped_schur_mass(&self) -> f64 {
        self.dropped_schur_mass
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn min_kept(&self) -> Option<f64> {
        self.values.iter().map(|v| v.norm()).reduce(f64::min)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.row_ptr.len() - 1)
            .flat_map(move |r| (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |i| (r, self.cols[i], self.values[i])))
    }

    fn apply_slice(&self, c: &[C64], out: &mut [C64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[i] * c[self.cols[i]];
            }
            *o = acc;
        }
    }
}

impl Schur for SparseGaborMatrix {
    fn schur_bound(&self) -> f64 {
        let n = self.lattice.size();
        let mut rows = vec![0.0; n];
        let mut cols = vec![0.0; n];
        for (r, c, v) in self.triplets() {
            rows[r] += v.norm();
            cols[c] += v.norm();
        }
        rows.into_iter().chain(cols).fold(0.0, f64::max)
    }
}

pub fn sparsify(k: &GaborMatrix, tau: f64) -> SparseGaborMatrix {
    let n = k.size();
    let e = k.entries();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut values = Vec::new();
    let mut dropped_rows = vec![0.0; n];
    let mut dropped_cols = vec![0.0; n];
    row_ptr.push(0);
    for r in 0..n {
        for c in 0..n {
            let v = e[(r, c)];
            if v.norm() >= tau {
                cols.push(c);
                values.push(v);
            } else {
                dropped_rows[r] += v.norm();
                dropped_cols[c] += v.norm();
            }
        }
        row_ptr.push(cols.len());
    }
    let kept_fraction = values.len() as f64 / (n * n) as f64;
    let dropped_schur_mass = dropped_rows.into_iter().chain(dropped_cols).fold(0.0, f64::max);
    SparseGaborMatrix { lattice: *k.lattice(), row_ptr, cols, values, threshold: tau, kept_fraction, dropped_schur_mass }
}

pub fn sparse_apply(ks: &SparseGaborMatrix, c: &CoefficientArray) -> Result<CoefficientArray> {
    if c.lattice() != &ks.lattice {
        return Err(Error::Model("coefficient lattice differs from sparse matrix lattice".into()));
    }
    let mut out = CoefficientArray::zeros(ks.lattice);
    ks.apply_slice(c.values(), out.values_mut());
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub tau: f64,
    pub kept_fraction: f64,
    pub schur_residual: f64,
    pub measured_rel_error: f64,
    pub dense_ms: f64,
    pub sparse_ms: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Sparsifies `k` at each threshold and compares against the dense product.
///
/// `measured_rel_error` is the largest `||(K - K_tau) c|| / ||c||` over `n_probes`
/// random coefficient vectors; timings are medians over `reps` runs (at least 5).
pub fn threshold_sweep<R: Rng + ?Sized>(
    k: &GaborMatrix,
    taus: &[f64],
    n_probes: usize,
    reps: usize,
    rng: &mut R,
) -> Vec<SweepRow> {
    let n = k.size();
    let lat = *k.lattice();
    let reps = reps.max(5);
    let probes: Vec<CoefficientArray> = (0..n_probes.max(1))
        .map(|_| {
            let v = (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            CoefficientArray::new(lat, v).expect("probe matches lattice")
        })
        .collect();
    let dense: Vec<DVector<C64>> =
        probes.iter().map(|c| k.entries() * DVector::from_column_slice(c.values())).collect();
    taus.iter()
        .map(|&tau| {
            let ks = sparsify(k, tau);
            let mut measured: f64 = 0.0;
            let mut out = vec![C64::new(0.0, 0.0); n];
            for (c, d) in probes.iter().zip(&dense) {
                ks.apply_slice(c.values(), &mut out);
                let err = out.iter().zip(d.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
                measured = measured.max(err / c.norm());
            }
            let probe = DVector::from_column_slice(probes[0].values());
            let dense_ms = median(
                (0..reps)
                    .map(|_| {
                        let t0 = Instant::now();
                        let y = k.entries() * &probe;
                        std::hint::black_box(&y);
                        t0.elapsed().as_secs_f64() * 1e3
                    })
                    .collect(),
            );
            let sparse_ms = median(
                (0..reps)
                    .map(|_| {
                        let t0 = Instant::now();
                        ks.apply_slice(probes[0].values(), &mut out);
                        std::hint::black_box(&out);
                        t0.elapsed().as_secs_f64() * 1e3
                    })
                    .collect(),
            );
            SweepRow {
                tau,
                kept_fraction: ks.kept_fraction,
                schur_residual: ks.dropped_schur_mass,
                measured_rel_error: measured,
                dense_ms,
                sparse_ms,
            }
        })
        .collect()
}
