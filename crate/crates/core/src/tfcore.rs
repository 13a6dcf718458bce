//! Finite time-frequency model on the cyclic group `Z_L`.
//!
//! Two regimes share the same storage: the exact torus (indices are the
//! coordinates) and a sampled line of width `T` with grid
//! `x_j = -T/2 + jT/L`. Every operation here acts on the cyclic index set, the
//! regime only changes how indices map to physical coordinates.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex;
use rand::Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Operating regime of the discrete model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Regime {
    /// Exact arithmetic on `Z_L`.
    Torus,
    /// Sampled real line `[-T/2, T/2)`.
    Line { width: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    len: usize,
    regime: Regime,
}

impl ModelConfig {
    pub fn torus(len: usize) -> Result<Self> {
        Self::new(len, Regime::Torus)
    }

    pub fn line(len: usize, width: f64) -> Result<Self> {
        Self::new(len, Regime::Line { width })
    }

    pub fn new(len: usize, regime: Regime) -> Result<Self> {
        if len < 8 || len % 2 != 0 {
            return Err(Error::Model(format!("signal length must be even and >= 8, got {len}")));
        }
        if let Regime::Line { width } = regime {
            if !(width > 0.0 && width.is_finite()) {
                return Err(Error::Model(format!("line width must be positive, got {width}")));
            }
        }
        Ok(Self { len, regime })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.regime, Regime::Torus)
    }

    /// Representative of `i` in `[-L/2, L/2)`.
    pub fn signed_index(&self, i: usize) -> i64 {
        let l = self.len as i64;
        let i = (i % self.len) as i64;
        if i >= l / 2 {
            i - l
        } else {
            i
        }
    }

    /// Reduces a real index displacement to the fundamental domain `[-L/2, L/2)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let l = self.len as f64;
        (x + l / 2.0).rem_euclid(l) - l / 2.0
    }

    /// Physical position of sample `n` (the index itself on the torus).
    pub fn position(&self, n: f64) -> f64 {
        match self.regime {
            Regime::Torus => n,
            Regime::Line { width } => -width / 2.0 + n * width / self.len as f64,
        }
    }

    /// Inverse of [`ModelConfig::position`].
    pub fn position_index(&self, x: f64) -> f64 {
        match self.regime {
            Regime::Torus => x,
            Regime::Line { width } => (x + width / 2.0) * self.len as f64 / width,
        }
    }

    /// Physical frequency of bin `m`; on the line the bins are read in fftshifted order.
    pub fn frequency(&self, m: f64) -> f64 {
        match self.regime {
            Regime::Torus => m,
            Regime::Line { width } => self.wrap(m) / width,
        }
    }

    pub fn frequency_index(&self, xi: f64) -> f64 {
        match self.regime {
            Regime::Torus => xi,
            Regime::Line { width } => xi * width,
        }
    }
}

/// A complex signal of length `L`.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    values: Vec<C64>,
    config: ModelConfig,
}

impl Signal {
    pub fn new(config: ModelConfig, values: Vec<C64>) -> Result<Self> {
        if values.len() != config.len() {
            return Err(Error::Model(format!(
                "signal has {} samples, model expects {}",
                values.len(),
                config.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Model("signal has non-finite entries".into()));
        }
        Ok(Self { values, config })
    }

    pub fn zeros(config: ModelConfig) -> Self {
        Self { values: vec![C64::new(0.0, 0.0); config.len()], config }
    }

    pub fn delta(config: ModelConfig, k: usize) -> Self {
        let mut s = Self::zeros(config);
        s.values[k % config.len()] = C64::new(1.0, 0.0);
        s
    }

    pub fn from_fn(config: ModelConfig, f: impl FnMut(usize) -> C64) -> Self {
        Self { values: (0..config.len()).map(f).collect(), config }
    }

    /// Entries with independent uniform real and imaginary parts in `[-1, 1)`.
    pub fn random<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Self {
        Self::from_fn(config, |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.values)
    }

    /// `<self, other> = sum self[n] * conj(other[n])`.
    pub fn inner(&self, other: &Signal) -> C64 {
        inner(&self.values, &other.values)
    }

    pub fn scaled(&self, c: C64) -> Signal {
        Signal { values: self.values.iter().map(|v| v * c).collect(), config: self.config }
    }

    pub fn distance(&self, other: &Signal) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    }

    fn check_same(&self, other: &Signal) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Model(format!("length mismatch: {} vs {}", self.len(), other.len())));
        }
        Ok(())
    }
}

pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

pub fn norm2(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Complex values arranged `L x L`, indexed `(k, m)` = (time, frequency).
#[derive(Clone, Debug, PartialEq)]
pub struct TfGrid {
    values: Vec<C64>,
    len: usize,
}

impl TfGrid {
    pub fn get(&self, k: usize, m: usize) -> C64 {
        self.values[(k % self.len) * self.len + m % self.len]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Planned forward and inverse length-`L` transforms, unnormalized.
#[derive(Clone)]
pub struct Dft {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    len: usize,
}

impl std::fmt::Debug for Dft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dft").field("len", &self.len).finish()
    }
}

impl Dft {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { forward: planner.plan_fft_forward(len), inverse: planner.plan_fft_inverse(len), len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `X[m] = sum_n x[n] exp(-2 pi i n m / L)` in place.
    pub fn forward(&self, buf: &mut [C64]) {
        self.forward.process(buf);
    }

    /// `x[n] = sum_m X[m] exp(+2 pi i n m / L)` in place.
    pub fn inverse(&self, buf: &mut [C64]) {
        self.inverse.process(buf);
    }
}

/// `out[n] = exp(2 pi i m n / L) f[(n - k) mod L]`.
pub fn tf_shift(f: &Signal, k: i64, m: i64) -> Signal {
    let l = f.len();
    let li = l as i64;
    let ms = m.rem_euclid(li) as usize;
    let values = (0..l)
        .map(|n| {
            let src = (n as i64 - k).rem_euclid(li) as usize;
            f.values[src] * unit_root(l, ms * n)
        })
        .collect();
    Signal { values, config: f.config }
}

/// `exp(2 pi i j / L)` with the exponent reduced mod `L` first.
pub fn unit_root(len: usize, j: usize) -> C64 {
    C64::from_polar(1.0, 2.0 * PI * (j % len) as f64 / len as f64)
}

/// Short-time Fourier transform `V_g f(k, m) = <f, M_m T_k g>`.
pub fn stft(f: &Signal, g: &Signal) -> Result<TfGrid> {
    f.check_same(g)?;
    if g.norm() == 0.0 {
        return Err(Error::Window);
    }
    let l = f.len();
    let dft = Dft::new(l);
    let mut values = Vec::with_capacity(l * l);
    let mut buf = vec![C64::new(0.0, 0.0); l];
    for k in 0..l {
        for (n, b) in buf.iter_mut().enumerate() {
            *b = f.values[n] * g.values[(n + l - k) % l].conj();
        }
        dft.forward(&mut buf);
        values.extend_from_slice(&buf);
    }
    Ok(TfGrid { values, len: l })
}

/// Unitary DFT `out[m] = L^{-1/2} sum_n f[n] exp(-2 pi i n m / L)`.
pub fn dft_unitary(f: &Signal) -> Signal {
    let mut values = f.values.clone();
    Dft::new(f.len()).forward(&mut values);
    let scale = 1.0 / (f.len() as f64).sqrt();
    values.iter_mut().for_each(|v| *v *= scale);
    Signal { values, config: f.config }
}

/// Inverse of [`dft_unitary`].
pub fn idft_unitary(f: &Signal) -> Signal {
    let mut values = f.values.clone();
    Dft::new(f.len()).inverse(&mut values);
    let scale = 1.0 / (f.len() as f64).sqrt();
    values.iter_mut().for_each(|v| *v *= scale);
    Signal { values, config: f.config }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn torus(l: usize) -> ModelConfig {
        ModelConfig::torus(l).unwrap()
    }

    fn stft_direct(f: &Signal, g: &Signal, k: usize, m: usize) -> C64 {
        let l = f.len();
        (0..l)
            .map(|n| f.values()[n] * g.values()[(n + l - k) % l].conj() * unit_root(l, l * l - m * n))
            .sum()
    }

    #[test]
    fn config_rejects_odd_or_short() {
        assert!(ModelConfig::torus(7).is_err());
        assert!(ModelConfig::torus(6).is_err());
        assert!(ModelConfig::line(16, 0.0).is_err());
        assert!(ModelConfig::line(16, 4.0).is_ok());
    }

    #[test]
    fn signal_length_mismatch() {
        let err = Signal::new(torus(8), vec![C64::new(1.0, 0.0); 5]).unwrap_err();
        assert!(matches!(err, Error::Model(_)));
    }

    #[test]
    fn shift_identity_and_translation() {
        let mut rng = seeded(1);
        let f = Signal::random(torus(8), &mut rng);
        assert_eq!(tf_shift(&f, 0, 0), f);
        let d = tf_shift(&Signal::delta(torus(8), 0), 3, 0);
        assert_eq!(d, Signal::delta(torus(8), 3));
    }

    #[test]
    fn shift_commutation_scalar_on_z4() {
        // Enumerated by hand on Z_4: M_1 T_1 T_1 d0 = M_1 T_2 d0 exactly, while
        // T_1 M_1 T_1 d0 picks up exp(-2 pi i / 4) = -i.
        let cfg = ModelConfig { len: 4, regime: Regime::Torus };
        let d0 = Signal::delta(cfg, 0);
        let a = tf_shift(&tf_shift(&d0, 1, 0), 1, 1);
        let b = tf_shift(&d0, 2, 1);
        let c = tf_shift(&tf_shift(&d0, 1, 1), 1, 0);
        // b = (0, 0, e^{2 pi i 2/4}, 0) = (0, 0, -1, 0)
        assert!((b.values()[2] - C64::new(-1.0, 0.0)).norm() < 1e-15);
        assert!((a.values()[2] - b.values()[2]).norm() < 1e-15);
        // c[2] = e^{2 pi i 1/4} = i, so c = -i * b.
        assert!((c.values()[2] - C64::new(0.0, -1.0) * b.values()[2]).norm() < 1e-15);
    }

    #[test]
    fn shift_is_unitary() {
        let mut rng = seeded(2);
        let f = Signal::random(torus(16), &mut rng);
        let g = tf_shift(&f, 5, -3);
        assert!((g.norm() - f.norm()).abs() < 1e-13);
    }

    #[test]
    fn stft_matches_direct_sum() {
        let mut rng = seeded(3);
        let f = Signal::random(torus(8), &mut rng);
        let g = Signal::random(torus(8), &mut rng);
        let v = stft(&f, &g).unwrap();
        for k in 0..8 {
            for m in 0..8 {
                assert!((v.get(k, m) - stft_direct(&f, &g, k, m)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn stft_self_origin_and_zero_window() {
        let mut rng = seeded(4);
        let g = Signal::random(torus(8), &mut rng);
        let v = stft(&g, &g).unwrap();
        assert!((v.get(0, 0) - C64::new(g.norm().powi(2), 0.0)).norm() < 1e-12);
        assert_eq!(stft(&g, &Signal::zeros(torus(8))).unwrap_err(), Error::Window);
    }

    #[test]
    fn stft_energy_identity() {
        let mut rng = seeded(5);
        let f = Signal::random(torus(8), &mut rng);
        let g = Signal::random(torus(8), &mut rng);
        let direct: f64 =
            (0..8).flat_map(|k| (0..8).map(move |m| (k, m))).map(|(k, m)| stft_direct(&f, &g, k, m).norm_sqr()).sum();
        let expected = 8.0 * f.norm().powi(2) * g.norm().powi(2);
        assert!((direct - expected).abs() < 1e-10 * expected);
        assert!((stft(&f, &g).unwrap().energy() - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn stft_covariance_full_phase() {
        let mut rng = seeded(6);
        let l = 8;
        let f = Signal::random(torus(l), &mut rng);
        let g = Signal::random(torus(l), &mut rng);
        let (y, xi) = (2usize, 3usize);
        let v = stft(&f, &g).unwrap();
        let w = stft(&tf_shift(&f, y as i64, xi as i64), &g).unwrap();
        for k in 0..l {
            for m in 0..l {
                let shifted = v.get(k + l - y, m + l - xi);
                assert!((w.get(k, m).norm() - shifted.norm()).abs() < 1e-12);
                // exp(-2 pi i (m - xi) y / L)
                let phase = unit_root(l, l * l - ((m + l - xi) % l) * y);
                assert!((w.get(k, m) - phase * shifted).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dft_of_delta_is_flat_and_fourth_power_identity() {
        let d = dft_unitary(&Signal::delta(torus(8), 0));
        let c = 1.0 / 8f64.sqrt();
        assert!(d.values().iter().all(|v| (v - C64::new(c, 0.0)).norm() < 1e-15));
        let mut rng = seeded(7);
        let f = Signal::random(torus(8), &mut rng);
        let f4 = dft_unitary(&dft_unitary(&dft_unitary(&dft_unitary(&f))));
        assert!(f4.distance(&f) < 1e-13);
        assert!((dft_unitary(&f).norm() - f.norm()).abs() < 1e-13);
        assert!(idft_unitary(&dft_unitary(&f)).distance(&f) < 1e-13);
    }

    #[test]
    fn dft_conjugates_shift_to_rotated_shift() {
        let mut rng = seeded(8);
        let l = 16;
        let f = Signal::random(torus(l), &mut rng);
        let (k, m) = (3i64, 5i64);
        let lhs = dft_unitary(&tf_shift(&f, k, m));
        let rhs = tf_shift(&dft_unitary(&f), m, -k);
        let scalar = lhs.inner(&rhs) / rhs.norm().powi(2);
        assert!((scalar.norm() - 1.0).abs() < 1e-12);
        assert!(lhs.distance(&rhs.scaled(scalar)) < 1e-12);
    }

    #[test]
    fn line_coordinates_round_trip() {
        let cfg = ModelConfig::line(16, 8.0).unwrap();
        assert_eq!(cfg.position(0.0), -4.0);
        assert!((cfg.position_index(cfg.position(5.0)) - 5.0).abs() < 1e-12);
        assert_eq!(cfg.frequency(15.0), -1.0 / 8.0);
        assert_eq!(cfg.signed_index(9), -7);
    }
}
