//! Operator strings.
//!
//! ```text
//! op      := factor ('*' factor)*
//! factor  := identity | dft | chirp:c | dilate:u | metaplectic:a,b,c,d
//!          | kn:symbol=S | fio1:phase=P,symbol=S | fio2:phase=P,symbol=S
//! S       := ones | cos:eps | random[:seed] | random-smooth[:seed]
//! P       := any phase catalog entry (kn, chirp:c, perturbed:e, metaplectic:a,b,c,d)
//! ```
//! Factors are multiplied left to right, as operators.

use num_complex::Complex64;

use gaborfio::operators::{
    fio_type1, fio_type2, kn_quantize, metaplectic, DiscretePhase, Generator, MetaplecticWord, OperatorMatrix, SymbolGrid,
};
use gaborfio::phasegeom::{canonical_map_of_phase, CanonicalMap, SymplecticMatrix, TamePhase};
use gaborfio::rng::seeded;
use gaborfio::tfcore::ModelConfig;

use crate::CliError;

pub struct BuiltOperator {
    pub op: OperatorMatrix,
    pub chi: CanonicalMap,
    /// Present when every factor is a metaplectic generator.
    pub word: Option<MetaplecticWord>,
    /// Phase of a single type-I factor.
    pub type1_phase: Option<DiscretePhase>,
}

pub fn parse_word(spec: &str) -> Result<MetaplecticWord, CliError> {
    let mut gens = Vec::new();
    for f in spec.split('*').map(str::trim) {
        gens.extend(generator_list(f)?.ok_or_else(|| CliError::Config(format!("`{f}` is not a metaplectic generator")))?);
    }
    Ok(MetaplecticWord::new(gens))
}

fn generator_list(f: &str) -> Result<Option<Vec<Generator>>, CliError> {
    let (head, arg) = f.split_once(':').unwrap_or((f, ""));
    let int = || arg.trim().parse::<i64>().map_err(|_| CliError::Config(format!("`{f}` needs an integer argument")));
    Ok(Some(match head {
        "identity" => vec![],
        "dft" => vec![Generator::Dft],
        "chirp" => vec![Generator::Chirp(int()?)],
        "dilate" => vec![Generator::Dilate(int()?)],
        _ => return Ok(None),
    }))
}

/// Parses `k1=v1,k2=v2` where values may themselves contain commas.
fn key_values(args: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for tok in args.split(',') {
        match tok.split_once('=') {
            Some((k, v)) => out.push((k.trim().to_string(), v.trim().to_string())),
            None => match out.last_mut() {
                Some((_, v)) => {
                    v.push(',');
                    v.push_str(tok.trim());
                }
                None => return Err(CliError::Config(format!("expected key=value in `{args}`"))),
            },
        }
    }
    Ok(out)
}

fn lookup<'a>(kv: &'a [(String, String)], key: &str, ctx: &str) -> Result<&'a str, CliError> {
    kv.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str()).ok_or_else(|| CliError::Config(format!("`{ctx}` needs {key}=...")))
}

pub fn parse_symbol(cfg: ModelConfig, spec: &str, default_seed: u64) -> Result<SymbolGrid, CliError> {
    let (head, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let seed = || -> Result<u64, CliError> {
        if arg.is_empty() {
            Ok(default_seed)
        } else {
            arg.parse().map_err(|_| CliError::Config(format!("bad seed in `{spec}`")))
        }
    };
    let l = cfg.len() as f64;
    Ok(match head {
        "ones" => SymbolGrid::ones(cfg),
        "cos" => {
            let eps: f64 = arg.parse().map_err(|_| CliError::Config(format!("bad amplitude in `{spec}`")))?;
            SymbolGrid::from_fn(cfg, |n, _| Complex64::new(1.0 + eps * (2.0 * std::f64::consts::PI * n as f64 / l).cos(), 0.0))
        }
        "random" => SymbolGrid::random(cfg, &mut seeded(seed()?)),
        "random-smooth" => SymbolGrid::random_smooth(cfg, &mut seeded(seed()?)),
        _ => return Err(CliError::Config(format!("unknown symbol `{spec}`"))),
    })
}

fn matrix_entries(spec: &str, args: &str) -> Result<SymplecticMatrix, CliError> {
    let v: Vec<f64> = args
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| CliError::Config(format!("bad entry in `{spec}`"))))
        .collect::<Result<_, _>>()?;
    if v.len() != 4 {
        return Err(CliError::Config(format!("`{spec}` needs four entries a,b,c,d")));
    }
    SymplecticMatrix::new(v[0], v[1], v[2], v[3]).map_err(|e| CliError::Config(e.to_string()))
}

pub fn parse_map(spec: &str, len: usize) -> Result<CanonicalMap, CliError> {
    if spec.contains(',') && !spec.contains(':') {
        return Ok(CanonicalMap::linear(matrix_entries(spec, spec)?));
    }
    parse_word(spec)?.canonical_map(len).map_err(CliError::from)
}

fn factor(cfg: ModelConfig, f: &str, seed: u64) -> Result<BuiltOperator, CliError> {
    if let Some(gens) = generator_list(f)? {
        let word = MetaplecticWord::new(gens);
        let (op, chi) = metaplectic(cfg, &word)?;
        return Ok(BuiltOperator { op, chi, word: Some(word), type1_phase: None });
    }
    let (head, args) = f.split_once(':').unwrap_or((f, ""));
    match head {
        "metaplectic" => {
            let m = matrix_entries(f, args)?;
            // Type-I realisation; fails for a vanishing upper-left block.
            let phase = TamePhase::from_catalog(f)?;
            let phi = DiscretePhase::sample(cfg, &phase);
            let op = fio_type1(&phi, &SymbolGrid::ones(cfg));
            Ok(BuiltOperator { op, chi: CanonicalMap::linear(m), word: None, type1_phase: Some(phi) })
        }
        "kn" => {
            let kv = key_values(args)?;
            let sigma = parse_symbol(cfg, lookup(&kv, "symbol", f)?, seed)?;
            Ok(BuiltOperator { op: kn_quantize(&sigma), chi: CanonicalMap::identity(), word: None, type1_phase: None })
        }
        "fio1" | "fio2" => {
            let kv = key_values(args)?;
            let phase = TamePhase::from_catalog(lookup(&kv, "phase", f)?)?;
            let sigma = parse_symbol(cfg, lookup(&kv, "symbol", f)?, seed)?;
            let phi = DiscretePhase::sample(cfg, &phase);
            let chi = canonical_map_of_phase(&phase);
            Ok(if head == "fio1" {
                BuiltOperator { op: fio_type1(&phi, &sigma), chi, word: None, type1_phase: Some(phi) }
            } else {
                BuiltOperator { op: fio_type2(&phi, &sigma), chi: chi.inverse(), word: None, type1_phase: None }
            })
        }
        _ => Err(CliError::Config(format!("unknown operator `{f}`"))),
    }
}

pub fn build(cfg: ModelConfig, spec: &str, seed: u64) -> Result<BuiltOperator, CliError> {
    let mut acc: Option<BuiltOperator> = None;
    for f in spec.split('*').map(str::trim) {
        let next = factor(cfg, f, seed)?;
        acc = Some(match acc {
            None => next,
            Some(prev) => BuiltOperator {
                op: prev.op.compose(&next.op)?,
                chi: prev.chi.compose(&next.chi),
                word: match (prev.word, next.word) {
                    (Some(a), Some(b)) => Some(a.concat(&b)),
                    _ => None,
                },
                type1_phase: None,
            },
        });
    }
    acc.ok_or_else(|| CliError::Config("empty operator".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use gaborfio::Error;

    fn torus(l: usize) -> ModelConfig {
        ModelConfig::torus(l).unwrap()
    }

    #[test]
    fn metaplectic_products() {
        let b = build(torus(16), "chirp:1 * dft", 0).unwrap();
        assert_eq!(b.word.unwrap().generators, vec![Generator::Chirp(1), Generator::Dft]);
        let m = b.chi.as_linear().unwrap();
        assert_eq!(m.as_array(), SymplecticMatrix::shear(1.0).mul(&SymplecticMatrix::j().neg()).as_array());
    }

    #[test]
    fn kn_and_fio_factors() {
        let cfg = torus(16);
        let kn = build(cfg, "kn:symbol=ones", 0).unwrap();
        assert!(kn.op.distance(&OperatorMatrix::identity(cfg)) < 1e-12);
        assert!(kn.word.is_none());
        let f = build(cfg, "fio1:phase=perturbed:0.1,symbol=random-smooth:3", 0).unwrap();
        assert_eq!(f.op.len(), 16);
        let m = build(cfg, "fio1:phase=metaplectic:1,0,1,1,symbol=ones", 0).unwrap();
        assert_eq!(m.op.len(), 16);
        let a = build(cfg, "random-smooth:1", 0);
        assert!(matches!(a, Err(CliError::Config(_))));
    }

    #[test]
    fn seeds_control_random_symbols() {
        let cfg = torus(16);
        let a = build(cfg, "kn:symbol=random", 5).unwrap().op;
        let b = build(cfg, "kn:symbol=random:5", 9).unwrap().op;
        let c = build(cfg, "kn:symbol=random", 6).unwrap().op;
        assert_eq!(a.entries(), b.entries());
        assert_ne!(a.entries(), c.entries());
    }

    #[test]
    fn degenerate_metaplectic_matrix_surfaces_nondegeneracy() {
        match build(torus(16), "metaplectic:0,1,-1,0", 0) {
            Err(CliError::Pipeline(Error::NondegeneracyViolation { .. })) => {}
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => panic!("expected failure"),
        }
    }

    #[test]
    fn maps_from_words_or_entries() {
        assert!(parse_map("0,1,-1,0", 16).unwrap().as_linear().is_some());
        assert!(parse_map("dft", 16).unwrap().as_linear().is_some());
        assert!(parse_map("1,1,1,1", 16).is_err());
    }
}
