//! Tame phases and the canonical transformations they generate.
//!
//! A phase `Phi(x, eta)` induces `chi(y, eta) = (x, xi)` by solving
//! `y = d_eta Phi(x, eta)` for `x` and setting `xi = d_x Phi(x, eta)`.
//! Everything here is one-dimensional, so the mixed Hessian is a scalar.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

pub type Point = (f64, f64);
pub type Mat2 = [[f64; 2]; 2];

/// Derivative oracles for a real phase `Phi(x, eta)`.
pub trait PhaseFunction: Send + Sync + fmt::Debug {
    fn value(&self, x: f64, eta: f64) -> f64;
    /// `(d_x Phi, d_eta Phi)`.
    fn grad(&self, x: f64, eta: f64) -> (f64, f64);
    /// `[[d_xx, d_xeta], [d_etax, d_etaeta]]`.
    fn hess(&self, x: f64, eta: f64) -> Mat2;
}

/// `Phi = p x^2 / 2 + q x eta + r eta^2 / 2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticPhase {
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl PhaseFunction for QuadraticPhase {
    fn value(&self, x: f64, eta: f64) -> f64 {
        0.5 * self.p * x * x + self.q * x * eta + 0.5 * self.r * eta * eta
    }

    fn grad(&self, x: f64, eta: f64) -> (f64, f64) {
        (self.p * x + self.q * eta, self.q * x + self.r * eta)
    }

    fn hess(&self, _x: f64, _eta: f64) -> Mat2 {
        [[self.p, self.q], [self.q, self.r]]
    }
}

/// `Phi = x eta + eps sin(x) sin(eta)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbedPhase {
    pub eps: f64,
}

impl PhaseFunction for PerturbedPhase {
    fn value(&self, x: f64, eta: f64) -> f64 {
        x * eta + self.eps * x.sin() * eta.sin()
    }

    fn grad(&self, x: f64, eta: f64) -> (f64, f64) {
        (eta + self.eps * x.cos() * eta.sin(), x + self.eps * x.sin() * eta.cos())
    }

    fn hess(&self, x: f64, eta: f64) -> Mat2 {
        let mixed = 1.0 + self.eps * x.cos() * eta.cos();
        [[-self.eps * x.sin() * eta.sin(), mixed], [mixed, -self.eps * x.sin() * eta.sin()]]
    }
}

/// A phase together with its declared second-derivative bound and nondegeneracy constant.
#[derive(Clone, Debug)]
pub struct TamePhase {
    func: Arc<dyn PhaseFunction>,
    declared_c2: f64,
    declared_delta: f64,
    name: String,
}

impl TamePhase {
    pub fn new(func: Arc<dyn PhaseFunction>, declared_c2: f64, declared_delta: f64, name: impl Into<String>) -> Self {
        Self { func, declared_c2, declared_delta, name: name.into() }
    }

    pub fn quadratic(p: f64, q: f64, r: f64) -> Self {
        let c2 = p.abs().max(q.abs()).max(r.abs());
        Self::new(Arc::new(QuadraticPhase { p, q, r }), c2, q.abs(), format!("quadratic:{p},{q},{r}"))
    }

    /// `x eta`, the Kohn-Nirenberg phase.
    pub fn kohn_nirenberg() -> Self {
        Self::quadratic(0.0, 1.0, 0.0).renamed("kn")
    }

    /// `c x^2 / 2 + x eta`.
    pub fn chirp(c: f64) -> Self {
        Self::quadratic(c, 1.0, 0.0).renamed(format!("chirp:{c}"))
    }

    pub fn perturbed(eps: f64) -> Self {
        Self::new(Arc::new(PerturbedPhase { eps }), 1.0 + eps.abs(), 1.0 - eps.abs(), format!("perturbed:{eps}"))
    }

    /// Looks up `kn`, `chirp:c`, `metaplectic:a,b,c,d` or `perturbed:eps`.
    pub fn from_catalog(spec: &str) -> Result<Self> {
        let (head, args) = spec.split_once(':').unwrap_or((spec, ""));
        let nums = || -> Result<Vec<f64>> {
            args.split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Model(format!("bad phase argument in `{spec}`"))))
                .collect()
        };
        match head {
            "kn" => Ok(Self::kohn_nirenberg()),
            "chirp" => Ok(Self::chirp(single(&nums()?, spec)?)),
            "perturbed" => Ok(Self::perturbed(single(&nums()?, spec)?)),
            "metaplectic" => {
                let v = nums()?;
                if v.len() != 4 {
                    return Err(Error::Model(format!("`{spec}` needs four entries a,b,c,d")));
                }
                let m = SymplecticMatrix::new(v[0], v[1], v[2], v[3])?;
                Ok(phase_of_symplectic(&m, DEFAULT_DELTA_MIN)?.renamed(spec))
            }
            _ => Err(Error::Model(format!("unknown phase `{spec}`"))),
        }
    }

    fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn declared_c2(&self) -> f64 {
        self.declared_c2
    }

    pub fn declared_delta(&self) -> f64 {
        self.declared_delta
    }

    pub fn value(&self, x: f64, eta: f64) -> f64 {
        self.func.value(x, eta)
    }

    pub fn grad(&self, x: f64, eta: f64) -> (f64, f64) {
        self.func.grad(x, eta)
    }

    pub fn hess(&self, x: f64, eta: f64) -> Mat2 {
        self.func.hess(x, eta)
    }
}

fn single(v: &[f64], spec: &str) -> Result<f64> {
    match v {
        [x] => Ok(*x),
        _ => Err(Error::Model(format!("`{spec}` takes exactly one argument"))),
    }
}

/// Default lower bound on `|A|` for quadratic phases built from symplectic matrices.
pub const DEFAULT_DELTA_MIN: f64 = 1e-3;

/// Axis-aligned sampling region in `(x, eta)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingBox {
    pub x: (f64, f64),
    pub eta: (f64, f64),
}

impl SamplingBox {
    pub fn square(half_width: f64) -> Self {
        Self { x: (-half_width, half_width), eta: (-half_width, half_width) }
    }

    /// A regular `side x side` grid including the corners.
    pub fn grid(&self, side: usize) -> Vec<Point> {
        let lerp = |(lo, hi): (f64, f64), i: usize| lo + (hi - lo) * i as f64 / (side - 1) as f64;
        (0..side).flat_map(|i| (0..side).map(move |j| (lerp(self.x, i), lerp(self.eta, j)))).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TameReport {
    pub c2_observed: f64,
    pub delta_observed: f64,
    pub pass: bool,
}

/// Samples second derivatives and the mixed Hessian on a grid over `region`.
pub fn validate_tame(phi: &TamePhase, region: &SamplingBox, n_samples: usize) -> TameReport {
    let side = (n_samples.max(100) as f64).sqrt().ceil() as usize;
    let mut c2: f64 = 0.0;
    let mut delta = f64::INFINITY;
    for (x, eta) in region.grid(side) {
        let h = phi.hess(x, eta);
        c2 = c2.max(h[0][0].abs()).max(h[0][1].abs()).max(h[1][0].abs()).max(h[1][1].abs());
        delta = delta.min(h[0][1].abs());
    }
    let pass = delta >= phi.declared_delta * (1.0 - 1e-6) && c2 <= phi.declared_c2 * (1.0 + 1e-6);
    TameReport { c2_observed: c2, delta_observed: delta, pass }
}

/// Real 2x2 matrix `[[a, b], [c, d]]` with determinant one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SymplecticMatrix {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl SymplecticMatrix {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let m = Self { a, b, c, d };
        if m.deviation() > 1e-12 {
            return Err(Error::Model(format!("[[{a}, {b}], [{c}, {d}]] is not symplectic")));
        }
        Ok(m)
    }

    pub fn identity() -> Self {
        Self { a: 1.0, b: 0.0, c: 0.0, d: 1.0 }
    }

    /// `J = [[0, -1], [1, 0]]`.
    pub fn j() -> Self {
        Self { a: 0.0, b: -1.0, c: 1.0, d: 0.0 }
    }

    /// Lower shear `[[1, 0], [c, 1]]`.
    pub fn shear(c: f64) -> Self {
        Self { a: 1.0, b: 0.0, c, d: 1.0 }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    pub fn as_array(&self) -> Mat2 {
        [[self.a, self.b], [self.c, self.d]]
    }

    /// Largest entry of `|M^T J M - J|`.
    pub fn deviation(&self) -> f64 {
        symplectic_deviation(&self.as_array())
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        Self {
            a: self.a * rhs.a + self.b * rhs.c,
            b: self.a * rhs.b + self.b * rhs.d,
            c: self.c * rhs.a + self.d * rhs.c,
            d: self.c * rhs.b + self.d * rhs.d,
        }
    }

    pub fn inverse(&self) -> Self {
        Self { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }

    pub fn neg(&self) -> Self {
        Self { a: -self.a, b: -self.b, c: -self.c, d: -self.d }
    }

    pub fn apply(&self, (x, y): Point) -> Point {
        (self.a * x + self.b * y, self.c * x + self.d * y)
    }
}

/// Largest entry of `|D^T J D - J|` for a 2x2 Jacobian `D`.
pub fn symplectic_deviation(d: &Mat2) -> f64 {
    // D^T J D = det(D) J in two dimensions.
    let det = d[0][0] * d[1][1] - d[0][1] * d[1][0];
    (det - 1.0).abs()
}

#[derive(Clone)]
enum MapKind {
    Linear(SymplecticMatrix),
    FromPhase(TamePhase),
    Explicit(Arc<dyn Fn(Point) -> Point + Send + Sync>),
    Composed(Box<CanonicalMap>, Box<CanonicalMap>),
}

/// A canonical transformation of the phase plane.
#[derive(Clone)]
pub struct CanonicalMap {
    kind: MapKind,
    label: String,
}

impl fmt::Debug for CanonicalMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CanonicalMap").field("label", &self.label).finish()
    }
}

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 50;
pub const FD_STEP: f64 = 1e-5;

impl CanonicalMap {
    pub fn linear(m: SymplecticMatrix) -> Self {
        Self { kind: MapKind::Linear(m), label: format!("[[{}, {}], [{}, {}]]", m.a, m.b, m.c, m.d) }
    }

    pub fn identity() -> Self {
        Self::linear(SymplecticMatrix::identity())
    }

    pub fn explicit(label: impl Into<String>, f: impl Fn(Point) -> Point + Send + Sync + 'static) -> Self {
        Self { kind: MapKind::Explicit(Arc::new(f)), label: label.into() }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The symplectic matrix when the map is linear.
    pub fn as_linear(&self) -> Option<SymplecticMatrix> {
        match &self.kind {
            MapKind::Linear(m) => Some(*m),
            MapKind::Composed(a, b) => Some(a.as_linear()?.mul(&b.as_linear()?)),
            _ => None,
        }
    }

    /// `self o inner`.
    pub fn compose(&self, inner: &CanonicalMap) -> CanonicalMap {
        if let (Some(a), Some(b)) = (self.as_linear(), inner.as_linear()) {
            return Self::linear(a.mul(&b));
        }
        Self {
            kind: MapKind::Composed(Box::new(self.clone()), Box::new(inner.clone())),
            label: format!("({}) o ({})", self.label, inner.label),
        }
    }

    pub fn forward(&self, z: Point) -> Result<Point> {
        match &self.kind {
            MapKind::Linear(m) => Ok(m.apply(z)),
            MapKind::FromPhase(phi) => solve_phase_map(phi, z),
            MapKind::Explicit(f) => Ok(f(z)),
            MapKind::Composed(outer, inner) => outer.forward(inner.forward(z)?),
        }
    }

    /// Jacobian at `z`: exact for linear maps, central differences otherwise.
    pub fn jacobian(&self, z: Point) -> Result<Mat2> {
        match &self.kind {
            MapKind::Linear(m) => Ok(m.as_array()),
            _ => self.jacobian_fd(z, FD_STEP),
        }
    }

    pub fn jacobian_fd(&self, (y, eta): Point, h: f64) -> Result<Mat2> {
        let (xp, xm) = (self.forward((y + h, eta))?, self.forward((y - h, eta))?);
        let (ep, em) = (self.forward((y, eta + h))?, self.forward((y, eta - h))?);
        Ok([
            [(xp.0 - xm.0) / (2.0 * h), (ep.0 - em.0) / (2.0 * h)],
            [(xp.1 - xm.1) / (2.0 * h), (ep.1 - em.1) / (2.0 * h)],
        ])
    }

    /// `chi^{-1}(w)`: matrix inverse for linear maps, Newton on the forward map otherwise.
    pub fn inverse_point(&self, w: Point) -> Result<Point> {
        if let Some(m) = self.as_linear() {
            return Ok(m.inverse().apply(w));
        }
        let mut z = w;
        for _ in 0..NEWTON_MAX_ITER {
            let f = self.forward(z)?;
            let r = (f.0 - w.0, f.1 - w.1);
            if r.0.abs().max(r.1.abs()) < NEWTON_TOL * (1.0 + w.0.abs().max(w.1.abs())) {
                return Ok(z);
            }
            let d = self.jacobian(z)?;
            let det = d[0][0] * d[1][1] - d[0][1] * d[1][0];
            if det.abs() < 1e-14 {
                return Err(Error::Solve(format!("singular Jacobian while inverting {}", self.label)));
            }
            z.0 -= (d[1][1] * r.0 - d[0][1] * r.1) / det;
            z.1 -= (-d[1][0] * r.0 + d[0][0] * r.1) / det;
        }
        Err(Error::Solve(format!("inverse Newton did not converge for {} at {w:?}", self.label)))
    }

    pub fn inverse(&self) -> CanonicalMap {
        if let Some(m) = self.as_linear() {
            return Self::linear(m.inverse());
        }
        let me = self.clone();
        let label = format!("({})^-1", self.label);
        Self::explicit(label, move |w| me.inverse_point(w).unwrap_or((f64::NAN, f64::NAN)))
    }

    /// Largest Jacobian spectral norm over `points`.
    pub fn lipschitz_estimate(&self, points: &[Point]) -> Result<f64> {
        let mut best: f64 = 0.0;
        for &p in points {
            best = best.max(spectral_norm(&self.jacobian(p)?));
        }
        Ok(best)
    }
}

fn spectral_norm(m: &Mat2) -> f64 {
    let [[a, b], [c, d]] = *m;
    let fro2 = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    (0.5 * (fro2 + (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt())).sqrt()
}

/// Solves `y = d_eta Phi(x, eta)` for `x` and returns `(x, d_x Phi(x, eta))`.
fn solve_phase_map(phi: &TamePhase, (y, eta): Point) -> Result<Point> {
    let residual = |x: f64| phi.grad(x, eta).1 - y;
    let tol = NEWTON_TOL * (1.0 + y.abs());
    let mut x = y;
    for _ in 0..NEWTON_MAX_ITER {
        let r = residual(x);
        if r.abs() < tol {
            return Ok((x, phi.grad(x, eta).0));
        }
        let slope = phi.hess(x, eta)[1][0];
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        x -= r / slope;
        if !x.is_finite() {
            break;
        }
    }
    let x = bisect_phase_map(phi, y, eta)?;
    Ok((x, phi.grad(x, eta).0))
}

/// Bisection fallback; the residual is monotone in `x` because the mixed Hessian keeps one sign.
fn bisect_phase_map(phi: &TamePhase, y: f64, eta: f64) -> Result<f64> {
    let residual = |x: f64| phi.grad(x, eta).1 - y;
    let delta = phi.declared_delta.max(1e-12);
    let span = residual(y).abs() / delta + 1.0;
    let (mut lo, mut hi) = (y - span, y + span);
    let (rlo, rhi) = (residual(lo), residual(hi));
    if rlo.signum() == rhi.signum() {
        return Err(Error::Solve(format!("no sign change bracketing the root at (y, eta) = ({y}, {eta})")));
    }
    let increasing = rhi > rlo;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let r = residual(mid);
        if r.abs() < NEWTON_TOL * (1.0 + y.abs()) || hi - lo < 1e-15 * (1.0 + y.abs()) {
            return Ok(mid);
        }
        if (r > 0.0) == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(Error::Solve(format!("bisection stalled at (y, eta) = ({y}, {eta})")))
}

/// Canonical transformation induced by a tame phase.
pub fn canonical_map_of_phase(phi: &TamePhase) -> CanonicalMap {
    CanonicalMap { kind: MapKind::FromPhase(phi.clone()), label: format!("chi[{}]", phi.name) }
}

/// Quadratic phase `x C A^{-1} x / 2 + eta A^{-1} x - eta A^{-1} B eta / 2` of a symplectic matrix.
pub fn phase_of_symplectic(m: &SymplecticMatrix, delta_min: f64) -> Result<TamePhase> {
    if m.a.abs() < delta_min {
        return Err(Error::NondegeneracyViolation { value: m.a.abs(), min: delta_min });
    }
    let phase = TamePhase::quadratic(m.c / m.a, 1.0 / m.a, -m.b / m.a);
    Ok(phase.renamed(format!("metaplectic:{},{},{},{}", m.a, m.b, m.c, m.d)))
}

/// Largest entry of `|Dchi^T J Dchi - J|` over `points`.
pub fn check_symplectic(chi: &CanonicalMap, points: &[Point]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &p in points {
        worst = worst.max(symplectic_deviation(&chi.jacobian(p)?));
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub pass: bool,
}

pub const EQUIVALENCE_EPS: f64 = 1e-9;

/// Samples the two-sided comparison between phase residuals and distance to the graph of `chi`.
pub fn phase_chi_equivalence<R: Rng + ?Sized>(
    phi: &TamePhase,
    n_quadruples: usize,
    region: &SamplingBox,
    rng: &mut R,
) -> Result<EquivalenceReport> {
    let chi = canonical_map_of_phase(phi);
    let mut ratio_min = f64::INFINITY;
    let mut ratio_max: f64 = 0.0;
    for _ in 0..n_quadruples {
        let x = rng.gen_range(region.x.0..=region.x.1);
        let xp = rng.gen_range(region.x.0..=region.x.1);
        let eta = rng.gen_range(region.eta.0..=region.eta.1);
        let etap = rng.gen_range(region.eta.0..=region.eta.1);
        let (gx, geta) = phi.grad(xp, eta);
        let lhs = (gx - etap).abs() + (geta - x).abs();
        let (c1, c2) = chi.forward((x, eta))?;
        let rhs = (c1 - xp).abs() + (c2 - etap).abs();
        let r = (lhs + EQUIVALENCE_EPS) / (rhs + EQUIVALENCE_EPS);
        ratio_min = ratio_min.min(r);
        ratio_max = ratio_max.max(r);
    }
    let pass = ratio_min.is_finite() && ratio_max.is_finite() && ratio_min >= 1e-3 && ratio_max <= 1e3;
    Ok(EquivalenceReport { ratio_min, ratio_max, pass })
}

/// Range of `<w - chi(z)> / <chi^{-1}(w) - z>` over sampled pairs.
pub fn bilipschitz_ratio(chi: &CanonicalMap, pairs: &[(Point, Point)]) -> Result<(f64, f64)> {
    let bracket = |(a, b): Point| (1.0 + a * a + b * b).sqrt();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for &(z, w) in pairs {
        let cz = chi.forward(z)?;
        let iw = chi.inverse_point(w)?;
        let r = bracket((w.0 - cz.0, w.1 - cz.1)) / bracket((iw.0 - z.0, iw.1 - z.1));
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok((lo, hi))
}
