//! Dense operators on `C^L`: Kohn-Nirenberg quantization, FIOs of type I and II,
//! and metaplectic words built from the DFT, chirps and dilations.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phasegeom::{CanonicalMap, SymplecticMatrix, TamePhase};
use crate::tfcore::{Dft, ModelConfig, Regime, Signal, C64};

/// Complex `L x L` array indexed `(n, m)` = (time, frequency).
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolGrid {
    values: Vec<C64>,
    config: ModelConfig,
}

impl SymbolGrid {
    pub fn new(config: ModelConfig, values: Vec<C64>) -> Result<Self> {
        let l = config.len();
        if values.len() != l * l {
            return Err(Error::Model(format!("symbol has {} entries, expected {}", values.len(), l * l)));
        }
        Ok(Self { values, config })
    }

    pub fn from_fn(config: ModelConfig, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let l = config.len();
        let values = (0..l * l).map(|i| f(i / l, i % l)).collect();
        Self { values, config }
    }

    pub fn constant(config: ModelConfig, c: C64) -> Self {
        Self::from_fn(config, |_, _| c)
    }

    pub fn ones(config: ModelConfig) -> Self {
        Self::constant(config, C64::new(1.0, 0.0))
    }

    /// Entries with independent uniform real and imaginary parts in `[-1, 1)`.
    pub fn random<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Self {
        Self::from_fn(config, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    /// Trigonometric polynomial with frequencies `|p|, |q| <= 2` and coefficients damped by `2^{-|p|-|q|}`.
    pub fn random_smooth<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Self {
        let l = config.len();
        let mut terms = Vec::new();
        for p in -2i64..=2 {
            for q in -2i64..=2 {
                let damp = 0.5f64.powi((p.abs() + q.abs()) as i32);
                let c = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * damp;
                terms.push((p, q, c));
            }
        }
        Self::from_fn(config, |n, m| {
            terms
                .iter()
                .map(|&(p, q, c)| {
                    let e = (p * n as i64 + q * m as i64).rem_euclid(l as i64) as usize;
                    c * crate::tfcore::unit_root(l, e)
                })
                .sum()
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.config.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, n: usize, m: usize) -> C64 {
        let l = self.len();
        self.values[(n % l) * l + m % l]
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn conj(&self) -> Self {
        Self { values: self.values.iter().map(|v| v.conj()).collect(), config: self.config }
    }

    /// Index swap `(n, m) -> (m, n)`.
    pub fn transposed(&self) -> Self {
        Self::from_fn(self.config, |n, m| self.get(m, n))
    }

    pub fn max_abs_diff(&self, other: &SymbolGrid) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

/// Where an operator matrix came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Kn,
    Fio1,
    Fio2,
    Metaplectic,
    Product,
    Inverse,
    Adjoint,
    Dense,
}

/// Dense kernel `k[n, n']` acting by `(Tf)[n] = sum_n' k[n, n'] f[n']`.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    entries: DMatrix<C64>,
    tag: Provenance,
    config: ModelConfig,
}

impl OperatorMatrix {
    pub fn new(config: ModelConfig, entries: DMatrix<C64>, tag: Provenance) -> Result<Self> {
        let l = config.len();
        if entries.nrows() != l || entries.ncols() != l {
            return Err(Error::Model(format!("operator is {}x{}, model needs {l}x{l}", entries.nrows(), entries.ncols())));
        }
        Ok(Self { entries, tag, config })
    }

    pub fn identity(config: ModelConfig) -> Self {
        Self { entries: DMatrix::identity(config.len(), config.len()), tag: Provenance::Dense, config }
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn tag(&self) -> Provenance {
        self.tag
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.config.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn apply(&self, f: &Signal) -> Result<Signal> {
        if f.len() != self.len() {
            return Err(Error::Model(format!("signal length {} vs operator size {}", f.len(), self.len())));
        }
        Signal::new(self.config, self.apply_values(f.values()))
    }

    pub(crate) fn apply_values(&self, f: &[C64]) -> Vec<C64> {
        (&self.entries * DVector::from_column_slice(f)).iter().cloned().collect()
    }

    /// `self * rhs`.
    pub fn compose(&self, rhs: &OperatorMatrix) -> Result<OperatorMatrix> {
        if rhs.len() != self.len() {
            return Err(Error::Model("operator sizes differ".into()));
        }
        Ok(Self { entries: &self.entries * &rhs.entries, tag: Provenance::Product, config: self.config })
    }

    pub fn scaled(&self, c: C64) -> OperatorMatrix {
        Self { entries: &self.entries * c, tag: self.tag, config: self.config }
    }

    /// `self + c * rhs`.
    pub fn add_scaled(&self, rhs: &OperatorMatrix, c: C64) -> OperatorMatrix {
        Self { entries: &self.entries + &rhs.entries * c, tag: Provenance::Dense, config: self.config }
    }

    pub fn frobenius(&self) -> f64 {
        self.entries.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &OperatorMatrix) -> f64 {
        self.entries.iter().zip(other.entries.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    }

    /// Singular values in decreasing order.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.entries.clone().svd(false, false).singular_values.iter().cloned().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// Spectral norm.
    pub fn norm(&self) -> f64 {
        self.singular_values()[0]
    }

    /// Normalized to unit spectral norm.
    pub fn normalized(&self) -> OperatorMatrix {
        self.scaled(C64::new(1.0 / self.norm(), 0.0))
    }
}

/// Sampled phase; `exp(2 pi i values[n, m])` is the oscillatory factor.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePhase {
    values: Vec<f64>,
    config: ModelConfig,
}

impl DiscretePhase {
    /// `(alpha n^2 + 2 beta n m + gamma m^2) / (2L)`, reduced mod 1 in exact integer arithmetic.
    pub fn quadratic(config: ModelConfig, alpha: i64, beta: i64, gamma: i64) -> Self {
        let l = config.len();
        let modulus = 2 * l as i128;
        let values = (0..l * l)
            .map(|i| {
                let (n, m) = ((i / l) as i128, (i % l) as i128);
                let num = (alpha as i128 * n * n + 2 * beta as i128 * n * m + gamma as i128 * m * m).rem_euclid(modulus);
                num as f64 / modulus as f64
            })
            .collect();
        Self { values, config }
    }

    /// `nm / L`.
    pub fn kohn_nirenberg(config: ModelConfig) -> Self {
        Self::quadratic(config, 0, 1, 0)
    }

    /// `c n^2 / (2L) + nm / L`.
    pub fn chirp(config: ModelConfig, c: i64) -> Self {
        Self::quadratic(config, c, 1, 0)
    }

    /// Samples a continuous phase. On the torus the indices are read as
    /// `(n/sqrt L, m/sqrt L)` with signed representatives; on the line as
    /// `(x_n, eta_m)` plus `m'/2`, which absorbs the grid offset `-T/2` of the DFT.
    pub fn sample(config: ModelConfig, phi: &TamePhase) -> Self {
        let l = config.len();
        let root = (l as f64).sqrt();
        let values = (0..l * l)
            .map(|i| {
                let (n, m) = (i / l, i % l);
                let ms = config.signed_index(m) as f64;
                match config.regime() {
                    Regime::Torus => phi.value(config.signed_index(n) as f64 / root, ms / root),
                    Regime::Line { .. } => phi.value(config.position(n as f64), config.frequency(m as f64)) + ms / 2.0,
                }
            })
            .collect();
        Self { values, config }
    }

    pub fn get(&self, n: usize, m: usize) -> f64 {
        let l = self.config.len();
        self.values[(n % l) * l + m % l]
    }

    fn factor(&self, n: usize, m: usize) -> C64 {
        C64::from_polar(1.0, 2.0 * PI * self.get(n, m))
    }
}

/// `(Tf)[n] = L^{-1/2} sum_m exp(2 pi i nm/L) sigma[n, m] (F f)[m]`.
pub fn kn_quantize(sigma: &SymbolGrid) -> OperatorMatrix {
    let l = sigma.len();
    let dft = Dft::new(l);
    let mut k = DMatrix::zeros(l, l);
    let mut row = vec![C64::new(0.0, 0.0); l];
    for n in 0..l {
        row.copy_from_slice(&sigma.values[n * l..(n + 1) * l]);
        dft.inverse(&mut row);
        for np in 0..l {
            k[(n, np)] = row[(n + l - np) % l] / l as f64;
        }
    }
    OperatorMatrix { entries: k, tag: Provenance::Kn, config: sigma.config }
}

/// Exact inverse of [`kn_quantize`]: `sigma[n, m] = sum_j k[n, n - j] exp(-2 pi i m j / L)`.
pub fn kn_symbol_of(t: &OperatorMatrix) -> SymbolGrid {
    let l = t.len();
    let dft = Dft::new(l);
    let mut values = Vec::with_capacity(l * l);
    let mut row = vec![C64::new(0.0, 0.0); l];
    for n in 0..l {
        for (j, r) in row.iter_mut().enumerate() {
            *r = t.entries[(n, (n + l - j) % l)];
        }
        dft.forward(&mut row);
        values.extend_from_slice(&row);
    }
    SymbolGrid { values, config: t.config }
}

/// `(Tf)[n] = L^{-1/2} sum_m exp(2 pi i Phi[n, m]) sigma[n, m] (F f)[m]`.
pub fn fio_type1(phi: &DiscretePhase, sigma: &SymbolGrid) -> OperatorMatrix {
    let l = sigma.len();
    let dft = Dft::new(l);
    let mut k = DMatrix::zeros(l, l);
    let mut row = vec![C64::new(0.0, 0.0); l];
    for n in 0..l {
        for (m, r) in row.iter_mut().enumerate() {
            *r = phi.factor(n, m) * sigma.get(n, m);
        }
        dft.forward(&mut row);
        for np in 0..l {
            k[(n, np)] = row[np] / l as f64;
        }
    }
    OperatorMatrix { entries: k, tag: Provenance::Fio1, config: sigma.config }
}

/// Symbol of `T` relative to a type-I phase; inverse of [`fio_type1`] for fixed `phi`.
pub fn fio1_symbol_of(t: &OperatorMatrix, phi: &DiscretePhase) -> SymbolGrid {
    let l = t.len();
    let dft = Dft::new(l);
    let mut values = Vec::with_capacity(l * l);
    let mut row = vec![C64::new(0.0, 0.0); l];
    for n in 0..l {
        for (np, r) in row.iter_mut().enumerate() {
            *r = t.entries[(n, np)];
        }
        dft.inverse(&mut row);
        values.extend((0..l).map(|m| row[m] * phi.factor(n, m).conj()));
    }
    SymbolGrid { values, config: t.config }
}

/// `(Tf)[n] = L^{-1} sum_{n', m} exp(-2 pi i [Phi[n', m] - nm/L]) tau[n', m] f[n']`.
pub fn fio_type2(phi: &DiscretePhase, tau: &SymbolGrid) -> OperatorMatrix {
    let l = tau.len();
    let dft = Dft::new(l);
    let mut k = DMatrix::zeros(l, l);
    let mut col = vec![C64::new(0.0, 0.0); l];
    for np in 0..l {
        for (m, c) in col.iter_mut().enumerate() {
            *c = phi.factor(np, m).conj() * tau.get(np, m);
        }
        dft.inverse(&mut col);
        for n in 0..l {
            k[(n, np)] = col[n] / l as f64;
        }
    }
    OperatorMatrix { entries: k, tag: Provenance::Fio2, config: tau.config }
}

/// Type-II symbol `tau` with `fio_type2(phi, tau) = fio_type1(phi, rho)^*`.
///
/// With the type-II kernel written in the variables `(y, eta)` of the input
/// sample and the frequency, the relation is pointwise conjugation.
pub fn type2_symbol_of_adjoint(rho: &SymbolGrid) -> SymbolGrid {
    rho.conj()
}

pub fn adjoint(t: &OperatorMatrix) -> OperatorMatrix {
    OperatorMatrix { entries: t.entries.adjoint(), tag: Provenance::Adjoint, config: t.config }
}

/// Generators of the discrete metaplectic representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    /// Unitary DFT; `(k, m) -> (m, -k)`.
    Dft,
    /// `diag(exp(pi i c n^2 / L))`; `[[1, 0], [c, 1]]`.
    Chirp(i64),
    /// `f[n] -> f[u^{-1} n]`; `diag(u, u^{-1})` mod `L`.
    Dilate(i64),
}

/// 2x2 integer matrix reduced mod `L`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ModMatrix {
    pub entries: [[i64; 2]; 2],
    pub modulus: i64,
}

impl ModMatrix {
    pub fn identity(modulus: i64) -> Self {
        Self { entries: [[1, 0], [0, 1]], modulus }
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let (a, b, l) = (self.entries, rhs.entries, self.modulus);
        let e = |i: usize, j: usize| (a[i][0] * b[0][j] + a[i][1] * b[1][j]).rem_euclid(l);
        Self { entries: [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]], modulus: l }
    }

    pub fn det(&self) -> i64 {
        let e = self.entries;
        (e[0][0] * e[1][1] - e[0][1] * e[1][0]).rem_euclid(self.modulus)
    }

    pub fn inverse(&self) -> Self {
        // Determinant is one mod L, so the adjugate is the inverse.
        let [[a, b], [c, d]] = self.entries;
        let l = self.modulus;
        Self { entries: [[d.rem_euclid(l), (-b).rem_euclid(l)], [(-c).rem_euclid(l), a.rem_euclid(l)]], modulus: l }
    }

    /// Image of an integer point, reduced to `[0, L)`.
    pub fn apply(&self, (k, m): (i64, i64)) -> (i64, i64) {
        let e = self.entries;
        let l = self.modulus;
        ((e[0][0] * k + e[0][1] * m).rem_euclid(l), (e[1][0] * k + e[1][1] * m).rem_euclid(l))
    }
}

/// Product of generators, read left to right as operator composition.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaplecticWord {
    pub generators: Vec<Generator>,
}

impl MetaplecticWord {
    pub fn new(generators: Vec<Generator>) -> Self {
        Self { generators }
    }

    pub fn concat(&self, other: &MetaplecticWord) -> MetaplecticWord {
        Self { generators: self.generators.iter().chain(&other.generators).cloned().collect() }
    }

    /// Word of the inverse operator on `Z_len`.
    pub fn inverse(&self, len: usize) -> Result<MetaplecticWord> {
        let mut generators = Vec::new();
        for g in self.generators.iter().rev() {
            match *g {
                // F^{-1} = F^3
                Generator::Dft => generators.extend([Generator::Dft; 3]),
                Generator::Chirp(c) => generators.push(Generator::Chirp(-c)),
                Generator::Dilate(u) => {
                    generators.push(Generator::Dilate(mod_inverse(u, len as i64).ok_or(Error::Unit { u, len })?))
                }
            }
        }
        Ok(Self { generators })
    }

    /// Accumulated matrix in `SL(2, Z_L)`.
    pub fn mod_matrix(&self, len: usize) -> Result<ModMatrix> {
        let l = len as i64;
        let mut acc = ModMatrix::identity(l);
        for g in &self.generators {
            let m = match *g {
                Generator::Dft => [[0, 1], [-1, 0]],
                Generator::Chirp(c) => [[1, 0], [c, 1]],
                Generator::Dilate(u) => [[u, 0], [0, mod_inverse(u, l).ok_or(Error::Unit { u, len })?]],
            };
            let m = ModMatrix { entries: m.map(|r| r.map(|v| v.rem_euclid(l))), modulus: l };
            acc = acc.mul(&m);
        }
        Ok(acc)
    }

    /// Real symplectic lift; undefined once a dilation appears.
    pub fn real_lift(&self) -> Option<SymplecticMatrix> {
        let mut acc = SymplecticMatrix::identity();
        for g in &self.generators {
            let m = match *g {
                Generator::Dft => SymplecticMatrix::j().neg(),
                Generator::Chirp(c) => SymplecticMatrix::shear(c as f64),
                Generator::Dilate(_) => return None,
            };
            acc = acc.mul(&m);
        }
        Some(acc)
    }

    /// Canonical map acting on indices; the real lift when it exists, the mod-`L` matrix otherwise.
    pub fn canonical_map(&self, len: usize) -> Result<CanonicalMap> {
        if let Some(m) = self.real_lift() {
            return Ok(CanonicalMap::linear(m));
        }
        let m = self.mod_matrix(len)?;
        let e = m.entries.map(|r| r.map(|v| v as f64));
        Ok(CanonicalMap::explicit(format!("{:?} mod {}", m.entries, m.modulus), move |(x, y)| {
            (e[0][0] * x + e[0][1] * y, e[1][0] * x + e[1][1] * y)
        }))
    }
}

pub fn mod_inverse(u: i64, l: i64) -> Option<i64> {
    let (mut r0, mut r1) = (u.rem_euclid(l), l);
    let (mut s0, mut s1) = (1i64, 0i64);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
    }
    (r0 == 1).then(|| s0.rem_euclid(l))
}

fn generator_matrix(config: ModelConfig, g: Generator) -> Result<DMatrix<C64>> {
    let l = config.len();
    let li = l as i64;
    Ok(match g {
        Generator::Dft => {
            let s = 1.0 / (l as f64).sqrt();
            DMatrix::from_fn(l, l, |m, n| crate::tfcore::unit_root(l, l * l - (m * n) % l) * s)
        }
        Generator::Chirp(c) => {
            // exp(pi i c n^2 / L) = exp(2 pi i (c n^2 mod 2L) / (2L))
            let modulus = 2 * li;
            DMatrix::from_fn(l, l, |r, col| {
                if r == col {
                    let e = (c as i128 * (r * r) as i128).rem_euclid(modulus as i128) as f64;
                    C64::from_polar(1.0, PI * e / li as f64)
                } else {
                    C64::new(0.0, 0.0)
                }
            })
        }
        Generator::Dilate(u) => {
            let inv = mod_inverse(u, li).ok_or(Error::Unit { u, len: l })?;
            DMatrix::from_fn(l, l, |r, col| {
                if (inv * r as i64).rem_euclid(li) as usize == col {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            })
        }
    })
}

/// Matrix of a metaplectic word and the canonical map it intertwines.
pub fn metaplectic(config: ModelConfig, word: &MetaplecticWord) -> Result<(OperatorMatrix, CanonicalMap)> {
    let l = config.len();
    let mut acc = DMatrix::identity(l, l);
    for g in &word.generators {
        acc *= generator_matrix(config, *g)?;
    }
    let chi = word.canonical_map(l)?;
    Ok((OperatorMatrix { entries: acc, tag: Provenance::Metaplectic, config }, chi))
}

/// Condition-number gate for dense inversion.
pub const CONDITION_LIMIT: f64 = 1e8;

/// Dense inverse by LU with partial pivoting and one step of iterative refinement.
pub fn invert(t: &OperatorMatrix) -> Result<OperatorMatrix> {
    let s = t.singular_values();
    let cond = if *s.last().unwrap() > 0.0 { s[0] / s.last().unwrap() } else { f64::INFINITY };
    if !(cond < CONDITION_LIMIT) {
        return Err(Error::SingularOperator { cond });
    }
    let x = t.entries.clone().lu().try_inverse().ok_or(Error::SingularOperator { cond })?;
    let l = t.len();
    let residual = DMatrix::<C64>::identity(l, l) - &t.entries * &x;
    let refined = &x + &x * residual;
    Ok(OperatorMatrix { entries: refined, tag: Provenance::Inverse, config: t.config })
}
