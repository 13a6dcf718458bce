//! Gabor systems over separable lattices `aZ x bZ` inside `Z_L x Z_L`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tfcore::{Dft, ModelConfig, Regime, Signal, C64};

/// Separable lattice `{(ja, kb)}`; both steps divide `L`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lattice {
    len: usize,
    a: usize,
    b: usize,
}

impl Lattice {
    pub fn new(len: usize, a: usize, b: usize) -> Result<Self> {
        if a == 0 || b == 0 || len % a != 0 || len % b != 0 {
            return Err(Error::Model(format!("lattice steps ({a}, {b}) must divide L = {len}")));
        }
        Ok(Self { len, a, b })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn time_step(&self) -> usize {
        self.a
    }

    pub fn freq_step(&self) -> usize {
        self.b
    }

    pub fn n_time(&self) -> usize {
        self.len / self.a
    }

    pub fn n_freq(&self) -> usize {
        self.len / self.b
    }

    /// Number of lattice points.
    pub fn size(&self) -> usize {
        self.n_time() * self.n_freq()
    }

    /// Redundancy `L / (ab)`; a frame needs at least 1.
    pub fn density(&self) -> f64 {
        self.len as f64 / (self.a * self.b) as f64
    }

    /// Sample coordinates `(ja, kb)` of the point with linear index `idx`.
    pub fn point(&self, idx: usize) -> (usize, usize) {
        let j = idx / self.n_freq();
        let k = idx % self.n_freq();
        (j * self.a, k * self.b)
    }

    pub fn index_of(&self, time: usize, freq: usize) -> Option<usize> {
        let (t, f) = (time % self.len, freq % self.len);
        (t % self.a == 0 && f % self.b == 0).then(|| (t / self.a) * self.n_freq() + f / self.b)
    }

    pub fn points(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.size()).map(|i| self.point(i))
    }
}

/// Coefficients indexed by lattice points (row-major in `(j, k)`).
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientArray {
    values: Vec<C64>,
    lattice: Lattice,
}

impl CoefficientArray {
    pub fn new(lattice: Lattice, values: Vec<C64>) -> Result<Self> {
        if values.len() != lattice.size() {
            return Err(Error::Model(format!(
                "{} coefficients for a lattice of {} points",
                values.len(),
                lattice.size()
            )));
        }
        Ok(Self { values, lattice })
    }

    pub fn zeros(lattice: Lattice) -> Self {
        Self { values: vec![C64::new(0.0, 0.0); lattice.size()], lattice }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        crate::tfcore::norm2(&self.values)
    }
}

/// Polynomial weight `v_s(z) = (1 + |z|^2)^{s/2}`, optionally replaced by an explicit table.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSpec {
    pub s: f64,
    pub table: Option<Vec<f64>>,
}

impl WeightSpec {
    pub fn polynomial(s: f64) -> Self {
        Self { s, table: None }
    }

    pub fn unweighted() -> Self {
        Self::polynomial(0.0)
    }

    pub fn eval(&self, x: f64, xi: f64) -> f64 {
        (1.0 + x * x + xi * xi).powf(self.s / 2.0)
    }

    /// Constant `C` with `v_s(z + w) <= C v_s(z) v_s(w)`, namely `2^{s/2}`.
    pub fn moderate_constant(&self) -> f64 {
        2f64.powf(self.s / 2.0)
    }

    fn at_point(&self, lattice: &Lattice, idx: usize, config: &ModelConfig) -> f64 {
        if let Some(t) = &self.table {
            return t[idx];
        }
        let (time, freq) = lattice.point(idx);
        self.eval(config.signed_index(time) as f64, config.signed_index(freq) as f64)
    }
}

/// A Gabor frame with its canonical tight window `S^{-1/2} g`.
#[derive(Clone, Debug)]
pub struct GaborFrame {
    window: Signal,
    lattice: Lattice,
    tight: Signal,
    bounds: (f64, f64),
    dft: Dft,
}

/// Relative eigenvalue floor below which the frame is reported deficient.
pub const FRAME_DEFICIENCY: f64 = 1e-12;

impl GaborFrame {
    pub fn window(&self) -> &Signal {
        &self.window
    }

    pub fn tight(&self) -> &Signal {
        &self.tight
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn config(&self) -> &ModelConfig {
        self.window.config()
    }

    /// Optimal frame bounds `(A, B)` of the original window.
    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    pub fn condition(&self) -> f64 {
        self.bounds.1 / self.bounds.0
    }

    fn select(&self, use_tight: bool) -> &Signal {
        if use_tight {
            &self.tight
        } else {
            &self.window
        }
    }
}

/// Frame operator `S = sum_l pi(l) g <., pi(l) g>` assembled by direct summation.
pub fn frame_operator_direct(g: &Signal, lat: &Lattice) -> DMatrix<C64> {
    let l = g.len();
    let mut s = DMatrix::zeros(l, l);
    for (time, freq) in lat.points() {
        let atom = crate::tfcore::tf_shift(g, time as i64, freq as i64);
        let v = atom.values();
        for r in 0..l {
            for c in 0..l {
                s[(r, c)] += v[r] * v[c].conj();
            }
        }
    }
    s
}

/// Frame operator through the Walnut representation: `S[n, n'] = (L/b) sum_j g[n - ja] conj g[n' - ja]`
/// when `n = n' mod L/b`, zero otherwise.
fn frame_operator(g: &Signal, lat: &Lattice) -> DMatrix<C64> {
    let l = g.len();
    let period = l / lat.freq_step();
    let scale = period as f64;
    let gv = g.values();
    let mut s = DMatrix::zeros(l, l);
    for r in 0..l {
        let mut c = r % period;
        while c < l {
            let acc: C64 = (0..lat.n_time())
                .map(|j| {
                    let t = j * lat.time_step();
                    gv[(r + l - t) % l] * gv[(c + l - t) % l].conj()
                })
                .sum();
            s[(r, c)] = acc * scale;
            c += period;
        }
    }
    s
}

pub fn build_frame(g: &Signal, lat: Lattice) -> Result<GaborFrame> {
    if g.len() != lat.len() {
        return Err(Error::Model(format!("window length {} vs lattice over Z_{}", g.len(), lat.len())));
    }
    if g.norm() == 0.0 {
        return Err(Error::Window);
    }
    let s = frame_operator(g, &lat);
    let eig = s.symmetric_eigen();
    let lower = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let upper = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lower <= FRAME_DEFICIENCY * upper {
        return Err(Error::FrameDeficient { lower, upper });
    }
    let u = &eig.eigenvectors;
    let gv = nalgebra::DVector::from_column_slice(g.values());
    let mut coords = u.adjoint() * gv;
    for (c, lam) in coords.iter_mut().zip(eig.eigenvalues.iter()) {
        *c /= lam.sqrt();
    }
    let tight = Signal::new(*g.config(), (u * coords).iter().cloned().collect())?;
    Ok(GaborFrame { window: g.clone(), lattice: lat, tight, bounds: (lower, upper), dft: Dft::new(g.len()) })
}

/// Default window: periodized Gaussian on the torus, sampled `exp(-pi x^2)` on the line; unit norm.
pub fn gaussian_window(config: ModelConfig) -> Signal {
    let l = config.len() as f64;
    let raw = Signal::from_fn(config, |n| {
        let v = match config.regime() {
            Regime::Torus => (-3i32..=3)
                .map(|j| {
                    let x = n as f64 + j as f64 * l;
                    (-std::f64::consts::PI * x * x / l).exp()
                })
                .sum(),
            Regime::Line { .. } => {
                let x = config.position(n as f64);
                (-std::f64::consts::PI * x * x).exp()
            }
        };
        C64::new(v, 0.0)
    });
    let n = raw.norm();
    raw.scaled(C64::new(1.0 / n, 0.0))
}

/// `values[l] = <f, pi(l) w>` with `w` the tight window if flagged, else the original one.
pub fn analysis(frame: &GaborFrame, f: &Signal, use_tight: bool) -> Result<CoefficientArray> {
    if f.len() != frame.lattice.len() {
        return Err(Error::Model(format!("signal length {} vs frame over Z_{}", f.len(), frame.lattice.len())));
    }
    Ok(analysis_values(frame, f.values(), use_tight))
}

pub(crate) fn analysis_values(frame: &GaborFrame, f: &[C64], use_tight: bool) -> CoefficientArray {
    let lat = frame.lattice;
    let l = lat.len();
    let w = frame.select(use_tight).values();
    let mut values = Vec::with_capacity(lat.size());
    let mut buf = vec![C64::new(0.0, 0.0); l];
    for j in 0..lat.n_time() {
        let t = j * lat.time_step();
        for (n, b) in buf.iter_mut().enumerate() {
            *b = f[n] * w[(n + l - t) % l].conj();
        }
        frame.dft.forward(&mut buf);
        values.extend((0..lat.n_freq()).map(|k| buf[k * lat.freq_step()]));
    }
    CoefficientArray { values, lattice: lat }
}

/// `sum_l c[l] pi(l) w`, the adjoint of [`analysis`].
pub fn synthesis(frame: &GaborFrame, c: &CoefficientArray, use_tight: bool) -> Result<Signal> {
    if c.lattice != frame.lattice {
        return Err(Error::Model("coefficient lattice differs from frame lattice".into()));
    }
    let values = synthesis_values(frame, c.values(), use_tight);
    Signal::new(*frame.config(), values)
}

pub(crate) fn synthesis_values(frame: &GaborFrame, c: &[C64], use_tight: bool) -> Vec<C64> {
    let lat = frame.lattice;
    let l = lat.len();
    let w = frame.select(use_tight).values();
    let mut out = vec![C64::new(0.0, 0.0); l];
    let mut buf = vec![C64::new(0.0, 0.0); l];
    for j in 0..lat.n_time() {
        let t = j * lat.time_step();
        buf.iter_mut().for_each(|b| *b = C64::new(0.0, 0.0));
        for k in 0..lat.n_freq() {
            buf[k * lat.freq_step()] = c[j * lat.n_freq() + k];
        }
        frame.dft.inverse(&mut buf);
        for (n, o) in out.iter_mut().enumerate() {
            *o += buf[n] * w[(n + l - t) % l];
        }
    }
    out
}

/// Summation by recursive halving; keeps reductions independent of thread layout.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn lp(v: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        v.iter().cloned().fold(0.0, f64::max)
    } else {
        let powered: Vec<f64> = v.iter().map(|x| x.powf(p)).collect();
        pairwise_sum(&powered).powf(1.0 / p)
    }
}

/// Mixed `l^{p,q}_m` norm of tight-window coefficients: inner `p` over time, outer `q` over frequency.
pub fn modulation_norm(frame: &GaborFrame, f: &Signal, p: f64, q: f64, weight: &WeightSpec) -> Result<f64> {
    if !(p >= 1.0 && q >= 1.0) {
        return Err(Error::Model(format!("exponents must satisfy p, q >= 1, got ({p}, {q})")));
    }
    let c = analysis(frame, f, true)?;
    let lat = frame.lattice;
    if let Some(t) = &weight.table {
        if t.len() != lat.size() {
            return Err(Error::Model("weight table size differs from lattice".into()));
        }
    }
    let cfg = *frame.config();
    let inner: Vec<f64> = (0..lat.n_freq())
        .map(|k| {
            let col: Vec<f64> = (0..lat.n_time())
                .map(|j| {
                    let idx = j * lat.n_freq() + k;
                    c.values[idx].norm() * weight.at_point(&lat, idx, &cfg)
                })
                .collect();
            lp(&col, p)
        })
        .collect();
    Ok(lp(&inner, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::tfcore::tf_shift;

    fn torus(l: usize) -> ModelConfig {
        ModelConfig::torus(l).unwrap()
    }

    fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn lattice_validation_and_indexing() {
        assert!(Lattice::new(16, 3, 2).is_err());
        let lat = Lattice::new(16, 2, 4).unwrap();
        assert_eq!(lat.size(), 8 * 4);
        assert_eq!(lat.density(), 2.0);
        assert_eq!(lat.point(5), (2, 4));
        assert_eq!(lat.index_of(2, 4), Some(5));
        assert_eq!(lat.index_of(3, 4), None);
    }

    #[test]
    fn walnut_matches_direct_sum() {
        let mut rng = seeded(10);
        let g = Signal::random(torus(16), &mut rng);
        for (a, b) in [(1, 1), (2, 2), (4, 2), (2, 8)] {
            let lat = Lattice::new(16, a, b).unwrap();
            assert!(max_abs_diff(&frame_operator(&g, &lat), &frame_operator_direct(&g, &lat)) < 1e-12);
        }
    }

    #[test]
    fn full_lattice_is_scaled_identity() {
        let mut rng = seeded(11);
        let g = Signal::random(torus(8), &mut rng);
        let lat = Lattice::new(8, 1, 1).unwrap();
        let s = frame_operator_direct(&g, &lat);
        let expected = DMatrix::<C64>::identity(8, 8) * C64::new(8.0 * g.norm().powi(2), 0.0);
        assert!(max_abs_diff(&s, &expected) < 1e-12);
        let frame = build_frame(&g, lat).unwrap();
        let tight = g.scaled(C64::new(1.0 / (8f64.sqrt() * g.norm()), 0.0));
        assert!(frame.tight().distance(&tight) < 1e-12);
    }

    #[test]
    fn gaussian_frame_is_parseval_after_tightening() {
        let g = gaussian_window(torus(16));
        let frame = build_frame(&g, Lattice::new(16, 2, 2).unwrap()).unwrap();
        assert!(frame.bounds().0 > 0.0);
        let s = frame_operator_direct(frame.tight(), frame.lattice());
        assert!(max_abs_diff(&s, &DMatrix::identity(16, 16)) < 1e-10);
    }

    #[test]
    fn undersampled_lattice_is_deficient() {
        let g = gaussian_window(torus(16));
        let err = build_frame(&g, Lattice::new(16, 8, 8).unwrap()).unwrap_err();
        assert!(matches!(err, Error::FrameDeficient { .. }));
        assert_eq!(build_frame(&Signal::zeros(torus(16)), Lattice::new(16, 2, 2).unwrap()).unwrap_err(), Error::Window);
    }

    #[test]
    fn analysis_and_synthesis_of_the_tight_window() {
        let g = gaussian_window(torus(16));
        let frame = build_frame(&g, Lattice::new(16, 2, 2).unwrap()).unwrap();
        let c = analysis(&frame, frame.tight(), true).unwrap();
        assert!((c.values()[0] - C64::new(frame.tight().norm().powi(2), 0.0)).norm() < 1e-13);

        let idx = frame.lattice().index_of(4, 6).unwrap();
        let mut delta = CoefficientArray::zeros(*frame.lattice());
        delta.values_mut()[idx] = C64::new(1.0, 0.0);
        let atom = synthesis(&frame, &delta, true).unwrap();
        assert!(atom.distance(&tf_shift(frame.tight(), 4, 6)) < 1e-13);
    }

    #[test]
    fn parseval_and_reconstruction() {
        let mut rng = seeded(12);
        let frame = build_frame(&gaussian_window(torus(16)), Lattice::new(16, 2, 2).unwrap()).unwrap();
        for _ in 0..20 {
            let f = Signal::random(torus(16), &mut rng);
            let c = analysis(&frame, &f, true).unwrap();
            assert!((c.norm() - f.norm()).abs() < 1e-10 * f.norm());
            let back = synthesis(&frame, &c, true).unwrap();
            assert!(back.distance(&f) < 1e-10 * f.norm());
        }
    }

    #[test]
    fn frame_bounds_sandwich_coefficient_energy() {
        let mut rng = seeded(13);
        let frame = build_frame(&gaussian_window(torus(16)), Lattice::new(16, 2, 4).unwrap()).unwrap();
        let (lo, hi) = frame.bounds();
        for _ in 0..20 {
            let f = Signal::random(torus(16), &mut rng);
            let e = analysis(&frame, &f, false).unwrap().norm().powi(2);
            let n2 = f.norm().powi(2);
            assert!(lo * n2 <= e * (1.0 + 1e-12) && e <= hi * n2 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn analysis_covariance_under_lattice_shift() {
        let mut rng = seeded(14);
        let (a, b) = (2usize, 2usize);
        let frame = build_frame(&gaussian_window(torus(8)), Lattice::new(8, a, b).unwrap()).unwrap();
        let f = Signal::random(torus(8), &mut rng);
        let c = analysis(&frame, &f, false).unwrap();
        let cs = analysis(&frame, &tf_shift(&f, a as i64, b as i64), false).unwrap();
        let lat = frame.lattice();
        for (idx, (t, fr)) in lat.points().enumerate() {
            let src = lat.index_of((t + 8 - a) % 8, (fr + 8 - b) % 8).unwrap();
            assert!((cs.values()[idx].norm() - c.values()[src].norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn synthesis_is_adjoint_of_analysis() {
        let mut rng = seeded(15);
        let frame = build_frame(&gaussian_window(torus(8)), Lattice::new(8, 2, 2).unwrap()).unwrap();
        for use_tight in [false, true] {
            let f = Signal::random(torus(8), &mut rng);
            let c = CoefficientArray::new(
                *frame.lattice(),
                (0..frame.lattice().size()).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect(),
            )
            .unwrap();
            let lhs = synthesis(&frame, &c, use_tight).unwrap().inner(&f);
            let a = analysis(&frame, &f, use_tight).unwrap();
            let rhs = crate::tfcore::inner(c.values(), a.values());
            assert!((lhs - rhs).norm() < 1e-12);
        }
        let wrong = CoefficientArray::zeros(Lattice::new(8, 4, 2).unwrap());
        assert!(synthesis(&frame, &wrong, true).is_err());
    }

    #[test]
    fn modulation_norm_cases() {
        let mut rng = seeded(16);
        let frame = build_frame(&gaussian_window(torus(16)), Lattice::new(16, 2, 2).unwrap()).unwrap();
        let f = Signal::random(torus(16), &mut rng);
        let n22 = modulation_norm(&frame, &f, 2.0, 2.0, &WeightSpec::unweighted()).unwrap();
        assert!((n22 - f.norm()).abs() < 1e-10);
        let ninf = modulation_norm(&frame, &f, f64::INFINITY, f64::INFINITY, &WeightSpec::unweighted()).unwrap();
        let c = analysis(&frame, &f, true).unwrap();
        let max = c.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!((ninf - max).abs() < 1e-15);
        for (p, q) in [(1.0, 1.0), (2.0, 1.0), (1.0, f64::INFINITY)] {
            let lo = modulation_norm(&frame, &f, p, q, &WeightSpec::polynomial(0.0)).unwrap();
            let hi = modulation_norm(&frame, &f, p, q, &WeightSpec::polynomial(2.0)).unwrap();
            assert!(lo <= hi);
        }
        assert!(modulation_norm(&frame, &f, 0.5, 1.0, &WeightSpec::unweighted()).is_err());
    }

    #[test]
    fn weight_is_moderate_with_peetre_constant() {
        let w = WeightSpec::polynomial(3.0);
        let c = w.moderate_constant();
        for x in -6..=6 {
            for y in -6..=6 {
                for (u, v) in [(1, 0), (0, 1), (-3, 2), (5, 5), (1, 1)] {
                    let lhs = w.eval((x + u) as f64, (y + v) as f64);
                    assert!(lhs <= c * w.eval(x as f64, y as f64) * w.eval(u as f64, v as f64) * (1.0 + 1e-12));
                }
            }
        }
    }

    use rand::Rng;
}
