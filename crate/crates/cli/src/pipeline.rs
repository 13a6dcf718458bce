use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use serde_json::{json, Value};

use gaborfio::algebra::{factorize_metaplectic, verify_composition, verify_inverse, FactorSide};
use gaborfio::gabor::{build_frame, gaussian_window, GaborFrame, Lattice};
use gaborfio::gabormatrix::{
    decay_profile, gabor_matrix, gaussian_window_2d, offgrid_decay_check, schur_bound, symbol_class_norm, threshold_sweep,
    write_gabor_matrix_csv, write_plot_csv, write_profile_csv, DecayProfile,
};
use gaborfio::operators::{fio1_symbol_of, kn_quantize, kn_symbol_of, OperatorMatrix, SymbolGrid};
use gaborfio::rng::seeded;

use crate::config::{ExperimentConfig, Pipeline};
use crate::opspec::{self, BuiltOperator};
use crate::CliError;

pub struct Outcome {
    pub pass: bool,
    pub report: Value,
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = out.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn write_profile(out: &Path, p: &DecayProfile) -> Result<(), CliError> {
    write_profile_csv(p, create(out, "profile.csv")?).map_err(io_err)?;
    write_plot_csv(p, create(out, "plot.csv")?).map_err(io_err)
}

fn profile_json(p: &DecayProfile) -> Value {
    json!({ "s_fit": p.s_fit, "C_fit": p.c_fit, "r2": p.r2, "bins": p.bins })
}

fn frame_of(cfg: &ExperimentConfig) -> Result<GaborFrame, CliError> {
    let model = cfg.model()?;
    let lat = Lattice::new(cfg.len, cfg.a, cfg.b).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(build_frame(&gaussian_window(model), lat)?)
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Some(b), Value::Object(e)) = (base.as_object_mut(), extra) {
        b.extend(e);
    }
    base
}

/// Runs the configured pipeline and writes its files into `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let t0 = Instant::now();
    let model = cfg.model()?;
    let frame = frame_of(cfg)?;
    let header = json!({
        "pipeline": cfg.pipeline,
        "operator": cfg.operator,
        "L": cfg.len,
        "a": cfg.a,
        "b": cfg.b,
        "seed": cfg.seed,
        "frame_bounds": frame.bounds(),
    });
    let built = opspec::build(model, &cfg.operator, cfg.seed)?;
    let (pass, body) = match cfg.pipeline {
        Pipeline::GaborMatrix => {
            let k = gabor_matrix(&built.op, &frame)?;
            write_gabor_matrix_csv(&k, create(out, "matrix.csv")?).map_err(io_err)?;
            (true, json!({ "size": k.size(), "peak": k.peak(), "schur_bound": schur_bound(&k), "pass": true }))
        }
        Pipeline::Decay => {
            let chi = match &cfg.chi {
                Some(s) => opspec::parse_map(s, cfg.len)?,
                None => built.chi.clone(),
            };
            let k = gabor_matrix(&built.op, &frame)?;
            if cfg.write_matrix {
                write_gabor_matrix_csv(&k, create(out, "matrix.csv")?).map_err(io_err)?;
            }
            let p = decay_profile(&k, &chi)?;
            write_profile(out, &p)?;
            let pass = p.s_fit >= cfg.s_threshold && p.c_fit.is_finite();
            (pass, merge(json!({ "chi": chi.label(), "pass": pass }), profile_json(&p)))
        }
        Pipeline::Compose => {
            let second = opspec::build(model, cfg.second.as_deref().unwrap_or_default(), cfg.seed)?;
            let r = verify_composition(&built.op, &second.op, &built.chi, &second.chi, &frame, cfg.s_threshold)?;
            write_bins(out, &r.bins)?;
            (r.pass, json!(r))
        }
        Pipeline::Invert => {
            let t = perturbed(&built, cfg)?;
            let r = verify_inverse(&t, &built.chi, &frame, cfg.s_threshold)?;
            write_bins(out, &r.bins)?;
            (r.pass, json!(r))
        }
        Pipeline::Factorize => {
            let spec = cfg.word.as_deref().ok_or_else(|| CliError::Config("factorize needs `word`".into()))?;
            let word = opspec::parse_word(spec)?;
            let side = if cfg.side.as_deref() == Some("right") { FactorSide::Right } else { FactorSide::Left };
            let (sigma, r) = factorize_metaplectic(&built.op, &word, &frame, side, cfg.s_threshold)?;
            write_bins(out, &r.bins)?;
            let range = symbol_range(&sigma);
            (r.pass, merge(json!(r), json!({ "symbol_abs_range": range })))
        }
        Pipeline::SymbolClass => {
            let sigma = symbol_of(&built);
            let r = symbol_class_norm(&sigma, cfg.s, &gaussian_window_2d(model))?;
            let pass = r.norm.is_finite();
            (pass, json!({ "s": cfg.s, "norm": r.norm, "s_sym": r.s_sym, "argmax": r.argmax(), "pass": pass }))
        }
        Pipeline::SparsitySweep => {
            let k = gabor_matrix(&built.op, &frame)?;
            let rows = threshold_sweep(&k, &cfg.taus, cfg.n_probes, cfg.reps, &mut seeded(cfg.seed));
            let mut w = create(out, "sweep.csv")?;
            writeln!(w, "tau,kept_fraction,schur_residual,measured_rel_error,dense_ms,sparse_ms").map_err(io_err)?;
            for r in &rows {
                writeln!(
                    w,
                    "{:e},{:e},{:e},{:e},{:.6},{:.6}",
                    r.tau, r.kept_fraction, r.schur_residual, r.measured_rel_error, r.dense_ms, r.sparse_ms
                )
                .map_err(io_err)?;
            }
            let pass = rows.iter().all(|r| r.measured_rel_error <= r.schur_residual + 1e-14);
            let table: Vec<Value> = rows
                .iter()
                .map(|r| {
                    json!({
                        "tau": r.tau,
                        "kept_fraction": r.kept_fraction,
                        "schur_residual": r.schur_residual,
                        "measured_rel_error": r.measured_rel_error,
                    })
                })
                .collect();
            let timing: Vec<Value> = rows.iter().map(|r| json!({ "dense_ms": r.dense_ms, "sparse_ms": r.sparse_ms })).collect();
            (pass, json!({ "rows": table, "pass": pass, "timing_rows": timing }))
        }
        Pipeline::Offgrid => {
            let r = offgrid_decay_check(&built.op, &frame, &built.chi, cfg.s, cfg.n_offsets)?;
            let pass = r.ratio <= cfg.offgrid_max;
            (pass, merge(json!(r), json!({ "s": cfg.s, "pass": pass })))
        }
    };
    let report = merge(merge(header, body), json!({ "timing_ms": t0.elapsed().as_secs_f64() * 1e3 }));
    Ok(Outcome { pass, report })
}

fn write_bins(out: &Path, bins: &[gaborfio::gabormatrix::DecayBin]) -> Result<(), CliError> {
    let p = DecayProfile { bins: bins.to_vec(), s_fit: 0.0, c_fit: 0.0, r2: 0.0 };
    write_profile(out, &p)
}

fn symbol_range(sigma: &SymbolGrid) -> [f64; 2] {
    let abs = sigma.values().iter().map(|v| v.norm());
    [abs.clone().fold(f64::MAX, f64::min), abs.fold(0.0, f64::max)]
}

/// `T (I + eps S)` with `S` a unit-norm Kohn-Nirenberg operator of a smooth random symbol.
fn perturbed(built: &BuiltOperator, cfg: &ExperimentConfig) -> Result<OperatorMatrix, CliError> {
    if cfg.perturb == 0.0 {
        return Ok(built.op.clone());
    }
    let model = *built.op.config();
    let s = kn_quantize(&SymbolGrid::random_smooth(model, &mut seeded(cfg.seed))).normalized();
    let inner = OperatorMatrix::identity(model).add_scaled(&s, Complex64::new(cfg.perturb, 0.0));
    Ok(built.op.compose(&inner)?)
}

/// Type-I symbol for single type-I factors, Kohn-Nirenberg symbol otherwise.
fn symbol_of(built: &BuiltOperator) -> SymbolGrid {
    match &built.type1_phase {
        Some(phi) => fio1_symbol_of(&built.op, phi),
        None => kn_symbol_of(&built.op),
    }
}
