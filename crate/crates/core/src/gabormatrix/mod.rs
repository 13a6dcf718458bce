//! Gabor matrices `K[mu, lambda] = <T pi(lambda) w, pi(mu) w>` over a Parseval frame,
//! and the off-graph decay measurements built on them.

mod io;
mod sparse;
mod symbol;

pub use io::{write_gabor_matrix_csv, write_plot_csv, write_profile_csv};
pub use sparse::{schur_bound, sparse_apply, sparsify, threshold_sweep, Schur, SparseGaborMatrix, SweepRow};
pub use symbol::{gaussian_window_2d, symbol_class_norm, SymbolClassReport, MAX_SYMBOL_LEN};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gabor::{analysis_values, CoefficientArray, GaborFrame, Lattice};
use crate::operators::OperatorMatrix;
use crate::phasegeom::{CanonicalMap, Point};
use crate::tfcore::{tf_shift, ModelConfig, Regime, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct GaborMatrix {
    entries: DMatrix<C64>,
    lattice: Lattice,
    config: ModelConfig,
}

impl GaborMatrix {
    pub fn from_entries(config: ModelConfig, lattice: Lattice, entries: DMatrix<C64>) -> Result<Self> {
        if entries.nrows() != lattice.size() || entries.ncols() != lattice.size() {
            return Err(Error::Model("Gabor matrix dimensions differ from lattice size".into()));
        }
        Ok(Self { entries, lattice, config })
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn size(&self) -> usize {
        self.lattice.size()
    }

    pub fn get(&self, mu: usize, lambda: usize) -> C64 {
        self.entries[(mu, lambda)]
    }

    pub fn peak(&self) -> f64 {
        self.entries.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn mul(&self, rhs: &GaborMatrix) -> GaborMatrix {
        Self { entries: &self.entries * &rhs.entries, lattice: self.lattice, config: self.config }
    }

    pub fn adjoint(&self) -> GaborMatrix {
        Self { entries: self.entries.adjoint(), lattice: self.lattice, config: self.config }
    }

    pub fn max_abs_diff(&self, other: &GaborMatrix) -> f64 {
        self.entries.iter().zip(other.entries.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Dense matrix-vector product on coefficient sequences.
    pub fn apply(&self, c: &CoefficientArray) -> Result<CoefficientArray> {
        if c.lattice() != &self.lattice {
            return Err(Error::Model("coefficient lattice differs from Gabor matrix lattice".into()));
        }
        let out = &self.entries * DVector::from_column_slice(c.values());
        CoefficientArray::new(self.lattice, out.iter().cloned().collect())
    }
}

/// Assembles the Gabor matrix of `t` against the frame's tight window, one column per lattice point.
pub fn gabor_matrix(t: &OperatorMatrix, frame: &GaborFrame) -> Result<GaborMatrix> {
    if t.len() != frame.lattice().len() {
        return Err(Error::Model(format!("operator size {} vs frame over Z_{}", t.len(), frame.lattice().len())));
    }
    let lat = *frame.lattice();
    let n = lat.size();
    let columns: Vec<Vec<C64>> = (0..n)
        .into_par_iter()
        .map(|lambda| {
            let (time, freq) = lat.point(lambda);
            let atom = tf_shift(frame.tight(), time as i64, freq as i64);
            let image = t.apply_values(atom.values());
            analysis_values(frame, &image, true).into_values()
        })
        .collect();
    let entries = DMatrix::from_fn(n, n, |mu, lambda| columns[lambda][mu]);
    Ok(GaborMatrix { entries, lattice: lat, config: *frame.config() })
}

/// Canonical map evaluated in index coordinates `(k, m)` of the model.
pub fn index_map(chi: &CanonicalMap, config: &ModelConfig, (k, m): Point) -> Result<Point> {
    match config.regime() {
        Regime::Torus => chi.forward((k, m)),
        Regime::Line { .. } => {
            let (x, xi) = chi.forward((config.position(k), config.frequency(m)))?;
            Ok((config.position_index(x), config.frequency_index(xi)))
        }
    }
}

/// Wrapped displacement `mu - chi(lambda)` with components in `[-L/2, L/2)`.
fn displacement(config: &ModelConfig, mu: (usize, usize), target: Point) -> Point {
    (config.wrap(mu.0 as f64 - target.0), config.wrap(mu.1 as f64 - target.1))
}

fn bracket((a, b): Point) -> f64 {
    (1.0 + a * a + b * b).sqrt()
}

/// Geometric ratio between consecutive distance bins.
pub const BIN_RATIO: f64 = std::f64::consts::SQRT_2;
/// Smallest bin distance entering the fit.
pub const FIT_MIN_DIST: f64 = 2.0;
/// Minimum entries per bin for the fit.
pub const FIT_MIN_COUNT: usize = 3;
/// Envelopes below this fraction of the largest one are treated as zero.
pub const NOISE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayBin {
    /// Lower edge of the bin in `<d>`.
    pub dist: f64,
    pub envelope: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayProfile {
    pub bins: Vec<DecayBin>,
    pub s_fit: f64,
    pub c_fit: f64,
    pub r2: f64,
}

fn bin_index(br: f64) -> usize {
    // <d> >= 1, bin r covers [ratio^r, ratio^{r+1})
    (br.ln() / BIN_RATIO.ln() + 1e-12).floor().max(0.0) as usize
}

#[derive(Clone, Default)]
struct BinAcc {
    envelope: Vec<f64>,
    count: Vec<usize>,
    peak_weighted: Vec<(f64, f64)>,
}

impl BinAcc {
    fn push(&mut self, br: f64, value: f64) {
        let idx = bin_index(br);
        if self.envelope.len() <= idx {
            self.envelope.resize(idx + 1, 0.0);
            self.count.resize(idx + 1, 0);
        }
        self.envelope[idx] = self.envelope[idx].max(value);
        self.count[idx] += 1;
        self.peak_weighted.push((br, value));
    }

    fn merge(mut self, other: BinAcc) -> BinAcc {
        if self.envelope.len() < other.envelope.len() {
            self.envelope.resize(other.envelope.len(), 0.0);
            self.count.resize(other.envelope.len(), 0);
        }
        for (i, (e, c)) in other.envelope.iter().zip(&other.count).enumerate() {
            self.envelope[i] = self.envelope[i].max(*e);
            self.count[i] += c;
        }
        self.peak_weighted.extend(other.peak_weighted);
        self
    }
}

/// Least-squares fit of `log envelope = log C - s log <d>` over the binned envelope.
///
/// Bins starting beyond `radius` are skipped: on the torus (`radius = L/2`) only the
/// corners of the square lie there and their annuli are truncated. Bins at the
/// double-precision noise floor relative to the largest envelope are skipped as well.
pub fn fit_bins(bins: &[DecayBin], radius: f64) -> Result<(f64, f64)> {
    let top = bins.iter().map(|b| b.envelope).fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> = bins
        .iter()
        .filter(|b| b.dist >= FIT_MIN_DIST - 1e-12 && b.dist <= radius * (1.0 + 1e-12))
        .filter(|b| b.count >= FIT_MIN_COUNT && b.envelope > NOISE_FLOOR * top)
        .map(|b| (b.dist.ln(), b.envelope.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(Error::Fit(format!("only {} usable distance bins, need 4", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok((-slope, r2))
}

fn finish_profile(acc: BinAcc, radius: f64) -> Result<DecayProfile> {
    let bins: Vec<DecayBin> = acc
        .envelope
        .iter()
        .zip(&acc.count)
        .enumerate()
        .filter(|(_, (_, &c))| c > 0)
        .map(|(i, (&e, &c))| DecayBin { dist: BIN_RATIO.powi(i as i32), envelope: e, count: c })
        .collect();
    let (s_fit, r2) = fit_bins(&bins, radius)?;
    let c_fit = acc.peak_weighted.iter().map(|&(br, v)| v * br.powf(s_fit)).fold(0.0, f64::max);
    Ok(DecayProfile { bins, s_fit, c_fit, r2 })
}

/// Bins `|K[mu, lambda]|` by `<mu - chi(lambda)>` and fits the decay exponent of the envelope.
pub fn decay_profile(k: &GaborMatrix, chi: &CanonicalMap) -> Result<DecayProfile> {
    let lat = k.lattice;
    let cfg = k.config;
    let targets: Vec<Point> = (0..lat.size())
        .map(|lambda| {
            let (t, f) = lat.point(lambda);
            index_map(chi, &cfg, (t as f64, f as f64))
        })
        .collect::<Result<_>>()?;
    let acc = (0..lat.size())
        .into_par_iter()
        .fold(BinAcc::default, |mut acc, lambda| {
            for mu in 0..lat.size() {
                let d = displacement(&cfg, lat.point(mu), targets[lambda]);
                acc.push(bracket(d), k.entries[(mu, lambda)].norm());
            }
            acc
        })
        .reduce(BinAcc::default, BinAcc::merge);
    finish_profile(acc, cfg.len() as f64 / 2.0)
}

/// Largest `|K[mu, lambda]|` with `|mu - chi(lambda)| >= min_dist`, relative to the peak entry.
pub fn offgraph_ratio(k: &GaborMatrix, chi: &CanonicalMap, min_dist: f64) -> Result<f64> {
    let lat = k.lattice;
    let cfg = k.config;
    let mut off: f64 = 0.0;
    for lambda in 0..lat.size() {
        let (t, f) = lat.point(lambda);
        let target = index_map(chi, &cfg, (t as f64, f as f64))?;
        for mu in 0..lat.size() {
            let (a, b) = displacement(&cfg, lat.point(mu), target);
            if (a * a + b * b).sqrt() >= min_dist {
                off = off.max(k.entries[(mu, lambda)].norm());
            }
        }
    }
    Ok(off / k.peak())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OffgridReport {
    pub c_lattice: f64,
    pub c_offgrid: f64,
    pub ratio: f64,
}

/// Sub-lattice offsets `(p, q)`, `0 <= p < a`, `0 <= q < b`, spread evenly and always starting at the origin.
fn offsets(lat: &Lattice, n: usize) -> Vec<(usize, usize)> {
    let total = lat.time_step() * lat.freq_step();
    let n = n.clamp(1, total);
    (0..n).map(|i| i * total / n).map(|idx| (idx / lat.freq_step(), idx % lat.freq_step())).collect()
}

/// Compares the weighted decay constant on the lattice with the one over shifted copies of it.
pub fn offgrid_decay_check(
    t: &OperatorMatrix,
    frame: &GaborFrame,
    chi: &CanonicalMap,
    s: f64,
    n_offsets: usize,
) -> Result<OffgridReport> {
    let cfg = *frame.config();
    if !cfg.is_torus() {
        return Err(Error::Model("off-grid check needs the torus regime".into()));
    }
    let lat = *frame.lattice();
    let l = lat.len();
    let shifts = offsets(&lat, n_offsets);
    let mut allowed = vec![false; l * l];
    for &(p, q) in &shifts {
        for (time, freq) in lat.points() {
            allowed[(time + p) * l + freq + q] = true;
        }
    }
    let dft = crate::tfcore::Dft::new(l);
    let weighted_max = |z: (usize, usize), mask: &dyn Fn(usize, usize) -> bool| -> Result<f64> {
        let target = chi.forward((z.0 as f64, z.1 as f64))?;
        let atom = tf_shift(frame.tight(), z.0 as i64, z.1 as i64);
        let image = t.apply_values(atom.values());
        let w = frame.tight().values();
        let mut best: f64 = 0.0;
        let mut buf = vec![C64::new(0.0, 0.0); l];
        for k in 0..l {
            if !(0..l).any(|m| mask(k, m)) {
                continue;
            }
            for (n, b) in buf.iter_mut().enumerate() {
                *b = image[n] * w[(n + l - k) % l].conj();
            }
            dft.forward(&mut buf);
            for (m, v) in buf.iter().enumerate() {
                if mask(k, m) {
                    let d = displacement(&cfg, (k, m), target);
                    best = best.max(v.norm() * bracket(d).powf(s));
                }
            }
        }
        Ok(best)
    };
    let on_lattice = |k: usize, m: usize| k % lat.time_step() == 0 && m % lat.freq_step() == 0;
    let c_lattice = lat
        .points()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|z| weighted_max(z, &on_lattice))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let in_shifted = |k: usize, m: usize| allowed[k * l + m];
    let zs: Vec<(usize, usize)> =
        shifts.iter().flat_map(|&(p, q)| lat.points().map(move |(t, f)| (t + p, f + q))).collect();
    let c_offgrid = zs
        .into_par_iter()
        .map(|z| weighted_max(z, &in_shifted))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(OffgridReport { c_lattice, c_offgrid, ratio: c_offgrid / c_lattice })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gabor::{build_frame, gaussian_window, synthesis};
    use crate::operators::{adjoint, metaplectic, Generator, MetaplecticWord, Provenance};
    use crate::phasegeom::SymplecticMatrix;
    use crate::rng::seeded;
    use rand::Rng;

    fn frame(l: usize, a: usize, b: usize) -> GaborFrame {
        let cfg = ModelConfig::torus(l).unwrap();
        build_frame(&gaussian_window(cfg), Lattice::new(l, a, b).unwrap()).unwrap()
    }

    fn random_operator(cfg: ModelConfig, seed: u64) -> OperatorMatrix {
        let mut rng = seeded(seed);
        let l = cfg.len();
        let e = DMatrix::from_fn(l, l, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        OperatorMatrix::new(cfg, e, Provenance::Dense).unwrap()
    }

    #[test]
    fn gabor_matrix_matches_synthesis_analysis_route() {
        let fr = frame(8, 2, 2);
        let t = random_operator(*fr.config(), 30);
        let k = gabor_matrix(&t, &fr).unwrap();
        let lat = *fr.lattice();
        for lambda in [0, 3, 9] {
            let mut delta = CoefficientArray::zeros(lat);
            delta.values_mut()[lambda] = C64::new(1.0, 0.0);
            let atom = synthesis(&fr, &delta, true).unwrap();
            let col = crate::gabor::analysis(&fr, &t.apply(&atom).unwrap(), true).unwrap();
            for mu in 0..lat.size() {
                assert!((col.values()[mu] - k.get(mu, lambda)).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn identity_gabor_matrix_is_reproducing_kernel() {
        let fr = frame(16, 2, 2);
        let k = gabor_matrix(&OperatorMatrix::identity(*fr.config()), &fr).unwrap();
        let v = crate::tfcore::stft(fr.tight(), fr.tight()).unwrap();
        let lat = fr.lattice();
        for lambda in 0..lat.size() {
            let (t, f) = lat.point(lambda);
            for mu in 0..lat.size() {
                let (tm, fm) = lat.point(mu);
                let expected = v.get(tm + 16 - t, fm + 16 - f).norm();
                assert!((k.get(mu, lambda).norm() - expected).abs() < 1e-13);
            }
            assert!((k.get(lambda, lambda).norm() - k.peak()).abs() < 1e-13);
        }
    }

    #[test]
    fn functoriality_and_adjoint() {
        let fr = frame(16, 2, 2);
        let cfg = *fr.config();
        for seed in 0..3 {
            let t1 = random_operator(cfg, 40 + seed);
            let t2 = random_operator(cfg, 50 + seed);
            let k12 = gabor_matrix(&t1.compose(&t2).unwrap(), &fr).unwrap();
            let prod = gabor_matrix(&t1, &fr).unwrap().mul(&gabor_matrix(&t2, &fr).unwrap());
            assert!(k12.max_abs_diff(&prod) < 1e-10 * k12.peak());
            let ka = gabor_matrix(&adjoint(&t1), &fr).unwrap();
            assert!(ka.max_abs_diff(&gabor_matrix(&t1, &fr).unwrap().adjoint()) < 1e-12 * ka.peak());
        }
    }

    #[test]
    fn flat_matrix_has_no_decay() {
        let cfg = ModelConfig::torus(32).unwrap();
        let lat = Lattice::new(32, 2, 2).unwrap();
        let ones = DMatrix::from_element(lat.size(), lat.size(), C64::new(1.0, 0.0));
        let k = GaborMatrix::from_entries(cfg, lat, ones).unwrap();
        let p = decay_profile(&k, &CanonicalMap::identity()).unwrap();
        assert!(p.s_fit.abs() < 0.1);
        assert!(p.bins.windows(2).all(|w| w[0].dist < w[1].dist));
    }

    #[test]
    fn too_few_bins_is_a_fit_error() {
        let cfg = ModelConfig::torus(8).unwrap();
        let lat = Lattice::new(8, 4, 4).unwrap();
        let k = GaborMatrix::from_entries(cfg, lat, DMatrix::identity(4, 4)).unwrap();
        assert!(matches!(decay_profile(&k, &CanonicalMap::identity()).unwrap_err(), Error::Fit(_)));
    }

    #[test]
    fn metaplectic_gabor_matrix_is_translation_covariant() {
        let fr = frame(16, 2, 2);
        let cfg = *fr.config();
        for word in [vec![Generator::Chirp(1)], vec![Generator::Dft], vec![Generator::Dilate(3)]] {
            let w = MetaplecticWord::new(word);
            let (mu_op, _) = metaplectic(cfg, &w).unwrap();
            let a = w.mod_matrix(16).unwrap();
            let k = gabor_matrix(&mu_op, &fr).unwrap();
            let lat = fr.lattice();
            let mut seen = std::collections::HashMap::new();
            let mut worst: f64 = 0.0;
            for lambda in 0..lat.size() {
                let (t, f) = lat.point(lambda);
                let (ct, cf) = a.apply((t as i64, f as i64));
                for mu in 0..lat.size() {
                    let (tm, fm) = lat.point(mu);
                    let key = ((tm as i64 - ct).rem_euclid(16), (fm as i64 - cf).rem_euclid(16));
                    let v = k.get(mu, lambda).norm();
                    let e = seen.entry(key).or_insert(v);
                    worst = worst.max((*e - v).abs());
                }
            }
            assert!(worst < 1e-10, "{w:?}: {worst}");
        }
    }

    #[test]
    fn offgrid_with_lattice_offsets_only_is_one() {
        let fr = frame(16, 2, 2);
        let r = offgrid_decay_check(&OperatorMatrix::identity(*fr.config()), &fr, &CanonicalMap::identity(), 4.0, 1)
            .unwrap();
        assert_eq!(r.ratio, 1.0);
    }

    #[test]
    fn gabor_matrix_of_dft_depends_on_rotated_displacement() {
        let fr = frame(16, 2, 2);
        let (f, chi) = metaplectic(*fr.config(), &MetaplecticWord::new(vec![Generator::Dft])).unwrap();
        assert_eq!(chi.as_linear(), Some(SymplecticMatrix::j().neg()));
        let k = gabor_matrix(&f, &fr).unwrap();
        let v = crate::tfcore::stft(&f.apply(fr.tight()).unwrap(), fr.tight()).unwrap();
        let lat = fr.lattice();
        for lambda in 0..lat.size() {
            let (t, fr_) = lat.point(lambda);
            let (ct, cf) = (fr_ as i64, -(t as i64));
            for mu in 0..lat.size() {
                let (tm, fm) = lat.point(mu);
                let d = ((tm as i64 - ct).rem_euclid(16) as usize, (fm as i64 - cf).rem_euclid(16) as usize);
                assert!((k.get(mu, lambda).norm() - v.get(d.0, d.1).norm()).abs() < 1e-12);
            }
        }
    }
}
