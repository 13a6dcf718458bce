//! Composition, inversion and metaplectic factorization checked through Gabor-matrix decay.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gabor::GaborFrame;
use crate::gabormatrix::{decay_profile, gabor_matrix, DecayBin, DecayProfile};
use crate::operators::{invert, kn_quantize, kn_symbol_of, metaplectic, MetaplecticWord, OperatorMatrix, SymbolGrid};
use crate::phasegeom::CanonicalMap;

/// Decay exponent required for a pass, `2d + 1` with `d = 1`.
pub const DEFAULT_S_THRESHOLD: f64 = 3.0;
/// Relative Frobenius tolerance of the factorization round trip.
pub const RECONSTRUCTION_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Operation {
    Compose,
    Invert,
    Factorize,
    Adjoint,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlgebraReport {
    pub operation: Operation,
    pub chi_expected: String,
    pub s_fit: f64,
    #[serde(rename = "C_fit")]
    pub c_fit: f64,
    pub pass: bool,
    pub bins: Vec<DecayBin>,
    /// `s_fit(T^-1) / s_fit(T)` for inversions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_ratio: Option<f64>,
    /// Relative Frobenius reconstruction error for factorizations.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reconstruction_error: Option<f64>,
}

impl AlgebraReport {
    fn from_profile(operation: Operation, chi: &CanonicalMap, p: DecayProfile, s_threshold: f64) -> Self {
        let pass = p.s_fit >= s_threshold && p.c_fit.is_finite();
        AlgebraReport {
            operation,
            chi_expected: chi.label().to_string(),
            s_fit: p.s_fit,
            c_fit: p.c_fit,
            pass,
            bins: p.bins,
            s_ratio: None,
            reconstruction_error: None,
        }
    }
}

fn profile(t: &OperatorMatrix, chi: &CanonicalMap, frame: &GaborFrame) -> Result<DecayProfile> {
    decay_profile(&gabor_matrix(t, frame)?, chi)
}

/// Decay of `T1 T2` along `chi1 o chi2`, read from the product of the two Gabor matrices.
pub fn verify_composition(
    t1: &OperatorMatrix,
    t2: &OperatorMatrix,
    chi1: &CanonicalMap,
    chi2: &CanonicalMap,
    frame: &GaborFrame,
    s_threshold: f64,
) -> Result<AlgebraReport> {
    if t1.len() != t2.len() || t1.len() != frame.config().len() {
        return Err(Error::Model("operator and frame sizes differ".into()));
    }
    let k = gabor_matrix(t1, frame)?.mul(&gabor_matrix(t2, frame)?);
    let chi = chi1.compose(chi2);
    let p = decay_profile(&k, &chi)?;
    Ok(AlgebraReport::from_profile(Operation::Compose, &chi, p, s_threshold))
}

/// Decay of `T^-1` along `chi^-1`, with the ratio of fitted exponents.
pub fn verify_inverse(t: &OperatorMatrix, chi: &CanonicalMap, frame: &GaborFrame, s_threshold: f64) -> Result<AlgebraReport> {
    let inv = invert(t)?;
    let s_t = profile(t, chi, frame)?.s_fit;
    let chi_inv = chi.inverse();
    let p = profile(&inv, &chi_inv, frame)?;
    let mut r = AlgebraReport::from_profile(Operation::Invert, &chi_inv, p, s_threshold);
    r.s_ratio = Some(r.s_fit / s_t);
    Ok(r)
}

/// Decay of `T*` along `chi^-1`.
pub fn verify_adjoint(t: &OperatorMatrix, chi: &CanonicalMap, frame: &GaborFrame, s_threshold: f64) -> Result<AlgebraReport> {
    let chi_inv = chi.inverse();
    let p = profile(&crate::operators::adjoint(t), &chi_inv, frame)?;
    Ok(AlgebraReport::from_profile(Operation::Adjoint, &chi_inv, p, s_threshold))
}

/// Which side the metaplectic factor sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorSide {
    /// `T = sigma_1(x, D) mu(A)`.
    Left,
    /// `T = mu(A) sigma_2(x, D)`.
    Right,
}

/// Splits `T` into a Kohn-Nirenberg operator and the metaplectic operator of `word`.
///
/// Fails with [`Error::NotInClass`] when the pseudodifferential factor does not decay
/// along the identity at rate `s_threshold`.
pub fn factorize_metaplectic(
    t: &OperatorMatrix,
    word: &MetaplecticWord,
    frame: &GaborFrame,
    side: FactorSide,
    s_threshold: f64,
) -> Result<(SymbolGrid, AlgebraReport)> {
    let cfg = *t.config();
    let (mu, _) = metaplectic(cfg, word)?;
    let (mu_inv, _) = metaplectic(cfg, &word.inverse(cfg.len())?)?;
    let p = match side {
        FactorSide::Left => t.compose(&mu_inv)?,
        FactorSide::Right => mu_inv.compose(t)?,
    };
    let id = CanonicalMap::identity();
    let prof = profile(&p, &id, frame)?;
    if !(prof.s_fit >= s_threshold) {
        return Err(Error::NotInClass { s_fit: prof.s_fit, threshold: s_threshold });
    }
    let sigma = kn_symbol_of(&p);
    let q = kn_quantize(&sigma);
    let rebuilt = match side {
        FactorSide::Left => q.compose(&mu)?,
        FactorSide::Right => mu.compose(&q)?,
    };
    let err = rebuilt.distance(t) / t.frobenius();
    let mut r = AlgebraReport::from_profile(Operation::Factorize, &id, prof, s_threshold);
    r.pass = r.pass && err <= RECONSTRUCTION_TOL;
    r.reconstruction_error = Some(err);
    Ok((sigma, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gabor::{build_frame, gaussian_window, Lattice};
    use crate::operators::{Generator, Provenance};
    use crate::tfcore::{ModelConfig, C64};
    use nalgebra::DMatrix;

    fn setup(l: usize, a: usize) -> (ModelConfig, GaborFrame) {
        let cfg = ModelConfig::torus(l).unwrap();
        (cfg, build_frame(&gaussian_window(cfg), Lattice::new(l, a, a).unwrap()).unwrap())
    }

    fn word(g: &[Generator]) -> MetaplecticWord {
        MetaplecticWord::new(g.to_vec())
    }

    fn multiplier(cfg: ModelConfig) -> OperatorMatrix {
        let l = cfg.len();
        let d = DMatrix::from_fn(l, l, |r, c| {
            if r == c {
                C64::new(1.0 + 0.1 * (2.0 * std::f64::consts::PI * r as f64 / l as f64).cos(), 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        OperatorMatrix::new(cfg, d, Provenance::Dense).unwrap()
    }

    #[test]
    fn unitary_inverse_has_unit_ratio() {
        let (cfg, fr) = setup(32, 4);
        let (t, chi) = metaplectic(cfg, &word(&[Generator::Chirp(1)])).unwrap();
        let r = verify_inverse(&t, &chi, &fr, DEFAULT_S_THRESHOLD).unwrap();
        assert!((r.s_ratio.unwrap() - 1.0).abs() < 1e-8, "{:?}", r.s_ratio);
        assert_eq!(r.chi_expected, chi.inverse().label());
        let adj = verify_adjoint(&t, &chi, &fr, DEFAULT_S_THRESHOLD).unwrap();
        assert!((adj.s_fit - r.s_fit).abs() < 1e-8);
    }

    #[test]
    fn singular_operator_is_rejected() {
        let (cfg, fr) = setup(16, 2);
        let mut p = DMatrix::<C64>::identity(16, 16);
        p[(3, 3)] = C64::new(0.0, 0.0);
        let t = OperatorMatrix::new(cfg, p, Provenance::Dense).unwrap();
        assert!(matches!(verify_inverse(&t, &CanonicalMap::identity(), &fr, 3.0), Err(Error::SingularOperator { .. })));
    }

    #[test]
    fn composition_with_inverse_is_diagonal() {
        let (cfg, fr) = setup(32, 4);
        let (t, chi) = metaplectic(cfg, &word(&[Generator::Chirp(1), Generator::Dft])).unwrap();
        let (ti, chi_i) = metaplectic(cfg, &word(&[Generator::Chirp(1), Generator::Dft]).inverse(32).unwrap()).unwrap();
        let r = verify_composition(&t, &ti, &chi, &chi_i, &fr, DEFAULT_S_THRESHOLD).unwrap();
        let id = profile(&OperatorMatrix::identity(cfg), &CanonicalMap::identity(), &fr).unwrap();
        assert!(r.chi_expected == CanonicalMap::identity().label());
        assert!((r.s_fit - id.s_fit).abs() < 1e-6);
        assert!(r.pass);
    }

    #[test]
    fn multiplier_times_chirp_factorizes() {
        let (cfg, fr) = setup(32, 4);
        let w = word(&[Generator::Chirp(1)]);
        let (chirp, _) = metaplectic(cfg, &w).unwrap();
        let t = multiplier(cfg).compose(&chirp).unwrap();
        let (sigma, r) = factorize_metaplectic(&t, &w, &fr, FactorSide::Left, DEFAULT_S_THRESHOLD).unwrap();
        for n in 0..32 {
            let want = 1.0 + 0.1 * (2.0 * std::f64::consts::PI * n as f64 / 32.0).cos();
            for m in 0..32 {
                assert!((sigma.get(n, m) - C64::new(want, 0.0)).norm() < 1e-10);
            }
        }
        assert!(r.reconstruction_error.unwrap() < 1e-10);
        assert!(r.pass);
    }

    #[test]
    fn metaplectic_operator_has_unit_symbol() {
        let (cfg, fr) = setup(16, 2);
        let w = word(&[Generator::Dft, Generator::Chirp(3)]);
        let (t, _) = metaplectic(cfg, &w).unwrap();
        for side in [FactorSide::Left, FactorSide::Right] {
            let (sigma, _) = factorize_metaplectic(&t, &w, &fr, side, 0.0).unwrap();
            assert!(sigma.max_abs_diff(&SymbolGrid::ones(cfg)) < 1e-10);
        }
    }

    #[test]
    fn both_sides_agree() {
        let (cfg, fr) = setup(32, 4);
        let w = word(&[Generator::Chirp(1)]);
        let (chirp, _) = metaplectic(cfg, &w).unwrap();
        let (chirp_inv, _) = metaplectic(cfg, &w.inverse(32).unwrap()).unwrap();
        let t = multiplier(cfg).compose(&chirp).unwrap();
        let (s1, _) = factorize_metaplectic(&t, &w, &fr, FactorSide::Left, 3.0).unwrap();
        let (s2, r2) = factorize_metaplectic(&t, &w, &fr, FactorSide::Right, 3.0).unwrap();
        // sigma_2(x, D) = mu^-1 sigma_1(x, D) mu
        let conj = chirp_inv.compose(&kn_quantize(&s1)).unwrap().compose(&chirp).unwrap();
        assert!(kn_symbol_of(&conj).max_abs_diff(&s2) < 1e-10);
        assert!(r2.reconstruction_error.unwrap() < 1e-10);
    }

    #[test]
    fn mismatched_word_is_not_in_class() {
        let (cfg, fr) = setup(64, 4);
        let (chirp, _) = metaplectic(cfg, &word(&[Generator::Chirp(1)])).unwrap();
        let t = multiplier(cfg).compose(&chirp).unwrap();
        let err = factorize_metaplectic(&t, &word(&[Generator::Chirp(2)]), &fr, FactorSide::Left, 3.0).unwrap_err();
        assert!(matches!(err, Error::NotInClass { .. }), "{err:?}");
    }

    #[test]
    fn report_json_shape() {
        let (cfg, fr) = setup(16, 2);
        let r = verify_adjoint(&OperatorMatrix::identity(cfg), &CanonicalMap::identity(), &fr, 3.0).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for key in ["operation", "s_fit", "C_fit", "pass", "bins"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["operation"], "adjoint");
    }
}
