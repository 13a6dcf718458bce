//! CSV writers for Gabor matrices and decay profiles.

use std::io::Write;

use super::{DecayProfile, GaborMatrix};

pub fn write_gabor_matrix_csv<W: Write>(k: &GaborMatrix, mut w: W) -> std::io::Result<()> {
    writeln!(w, "mu_k,mu_m,lam_k,lam_m,re,im")?;
    let lat = k.lattice();
    for mu in 0..k.size() {
        let (mk, mm) = lat.point(mu);
        for lambda in 0..k.size() {
            let (lk, lm) = lat.point(lambda);
            let v = k.get(mu, lambda);
            writeln!(w, "{mk},{mm},{lk},{lm},{:e},{:e}", v.re, v.im)?;
        }
    }
    Ok(())
}

pub fn write_profile_csv<W: Write>(p: &DecayProfile, mut w: W) -> std::io::Result<()> {
    writeln!(w, "bin_dist,envelope,count")?;
    for b in &p.bins {
        writeln!(w, "{:e},{:e},{}", b.dist, b.envelope, b.count)?;
    }
    Ok(())
}

/// Log-log points of the populated bins, ready for plotting.
pub fn write_plot_csv<W: Write>(p: &DecayProfile, mut w: W) -> std::io::Result<()> {
    writeln!(w, "log_dist,log_envelope")?;
    for b in p.bins.iter().filter(|b| b.envelope > 0.0) {
        writeln!(w, "{:e},{:e}", b.dist.ln(), b.envelope.ln())?;
    }
    Ok(())
}
