//! Symbol-class norm from the two-dimensional STFT of a symbol on `Z_L^2`.

use rayon::prelude::*;
use serde::Serialize;

use super::BinAcc;
use crate::error::{Error, Result};
use crate::gabor::gaussian_window;
use crate::operators::SymbolGrid;
use crate::tfcore::{Dft, ModelConfig, C64};

/// Largest `L` accepted by [`symbol_class_norm`]; the transform has `L^4` entries.
pub const MAX_SYMBOL_LEN: usize = 128;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymbolClassReport {
    /// `max_zeta envelope(zeta) <zeta>^s`.
    pub norm: f64,
    /// `sup_z |V_Psi sigma(z, zeta)|`, row-major over `zeta = (p, q)`.
    pub envelope: Vec<f64>,
    /// Decay exponent fitted to the envelope; `None` when too few bins are populated.
    pub s_sym: Option<f64>,
    pub len: usize,
}

impl SymbolClassReport {
    pub fn envelope_at(&self, p: usize, q: usize) -> f64 {
        self.envelope[(p % self.len) * self.len + q % self.len]
    }

    pub fn argmax(&self) -> (usize, usize) {
        let (i, _) = self.envelope.iter().enumerate().fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        (i / self.len, i % self.len)
    }
}

/// Tensor-product periodized Gaussian, unit norm.
pub fn gaussian_window_2d(config: ModelConfig) -> SymbolGrid {
    let g = gaussian_window(ModelConfig::torus(config.len()).expect("valid length"));
    let v = g.values();
    SymbolGrid::from_fn(config, |n, m| v[n] * v[m])
}

/// Envelope of `V_Psi sigma(z, zeta) = sum sigma[n, m] conj Psi[(n, m) - z] exp(-2 pi i zeta . (n, m) / L)`.
pub fn symbol_class_norm(sigma: &SymbolGrid, s: f64, window: &SymbolGrid) -> Result<SymbolClassReport> {
    let l = sigma.len();
    if l > MAX_SYMBOL_LEN {
        return Err(Error::Size(format!("symbol transform limited to L <= {MAX_SYMBOL_LEN}, got {l}")));
    }
    if window.len() != l {
        return Err(Error::Model("symbol and window sizes differ".into()));
    }
    if window.values().iter().all(|v| v.norm() == 0.0) {
        return Err(Error::Window);
    }
    let cfg = *sigma.config();
    let dft = Dft::new(l);
    let envelope = (0..l * l)
        .into_par_iter()
        .fold(
            || (vec![0.0f64; l * l], vec![C64::new(0.0, 0.0); l * l], vec![C64::new(0.0, 0.0); l]),
            |(mut env, mut buf, mut col), z| {
                let (n0, m0) = (z / l, z % l);
                for n in 0..l {
                    for m in 0..l {
                        buf[n * l + m] = sigma.get(n, m) * window.get(n + l - n0, m + l - m0).conj();
                    }
                }
                fft2(&dft, &mut buf, &mut col, l);
                for (e, v) in env.iter_mut().zip(&buf) {
                    *e = e.max(v.norm());
                }
                (env, buf, col)
            },
        )
        .map(|(env, _, _)| env)
        .reduce(|| vec![0.0; l * l], |a, b| a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect());

    let mut norm: f64 = 0.0;
    let mut acc = BinAcc::default();
    for (idx, &e) in envelope.iter().enumerate() {
        let (p, q) = (cfg.signed_index(idx / l) as f64, cfg.signed_index(idx % l) as f64);
        let br = (1.0 + p * p + q * q).sqrt();
        norm = norm.max(e * br.powf(s));
        acc.push(br, e);
    }
    let s_sym = super::finish_profile(acc, l as f64 / 2.0).ok().map(|p| p.s_fit);
    Ok(SymbolClassReport { norm, envelope, s_sym, len: l })
}

fn fft2(dft: &Dft, buf: &mut [C64], col: &mut [C64], l: usize) {
    for row in buf.chunks_mut(l) {
        dft.forward(row);
    }
    for m in 0..l {
        for n in 0..l {
            col[n] = buf[n * l + m];
        }
        dft.forward(col);
        for n in 0..l {
            buf[n * l + m] = col[n];
        }
    }
}
