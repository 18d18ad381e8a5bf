//! Known orthonormal `H_ℓ`, unknown gains: panels P21, P22, P23.
//!
//! Maximizing over the unknown gain vector turns the composite into the
//! largest eigenvalue of a coherence-weighted matrix `M`, and the
//! cross-validation term into the smallest eigenvalue of
//! `T = (Σ α_ℓ Λ_ℓ) I − M`. We compute `maxeig(M)` and `mineig(T)` with
//! separate eigensolves.

use crate::channel::{common_modes, ChannelModel};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig_unchecked, CMat, ComplexMatrix, C64};
use crate::measurement::MeasurementSet;

use super::{
    dimension_alphas, saturated, uniform_alphas, Auxiliaries, Degeneracy, DetectorReport, Panel,
    RESIDUAL_FLOOR,
};

/// Normalized inner product of the matched-filter outputs `H_iᴴX_i` and
/// `H_jᴴX_j`; `None` when either output has zero energy.
pub fn coherence(h_i: &ComplexMatrix, h_j: &ComplexMatrix, x_i: &ComplexMatrix, x_j: &ComplexMatrix) -> Result<Option<C64>> {
    if h_i.rows() != x_i.rows() || h_j.rows() != x_j.rows() {
        return Err(Error::dim("channel rows vs data rows", h_i.rows(), x_i.rows()));
    }
    if x_i.cols() != x_j.cols() || h_i.cols() != h_j.cols() {
        return Err(Error::dim("snapshot or mode count", x_i.cols(), x_j.cols()));
    }
    let yi = h_i.adjoint().as_matrix() * x_i.as_matrix();
    let yj = h_j.adjoint().as_matrix() * x_j.as_matrix();
    Ok(coherence_of_outputs(&yi, &yj))
}

fn coherence_of_outputs(yi: &CMat, yj: &CMat) -> Option<C64> {
    let ei: f64 = yi.iter().map(|v| v.norm_sqr()).sum();
    let ej: f64 = yj.iter().map(|v| v.norm_sqr()).sum();
    if ei == 0.0 || ej == 0.0 {
        return None;
    }
    let cross: C64 = yi.iter().zip(yj.iter()).map(|(a, b)| a * b.conj()).sum();
    Some(cross / (ei.sqrt() * ej.sqrt()))
}

/// Coherence matrix over all channels (unit diagonal), with degeneracy
/// flags for channels whose matched-filter energy vanished.
pub fn coherence_matrix(channels: &[ChannelModel], z: &MeasurementSet) -> Result<(ComplexMatrix, Vec<Degeneracy>)> {
    z.check_against(channels)?;
    let outputs: Vec<CMat> = channels
        .iter()
        .zip(z.blocks())
        .map(|(c, x)| c.h().adjoint().as_matrix() * x.as_matrix())
        .collect();
    let l = channels.len();
    let mut flags = Vec::new();
    for (idx, y) in outputs.iter().enumerate() {
        if y.iter().all(|v| *v == C64::new(0.0, 0.0)) {
            flags.push(Degeneracy::UndefinedCoherence { channel: idx });
        }
    }
    let mut c = CMat::identity(l, l);
    for i in 0..l {
        for j in (i + 1)..l {
            let v = coherence_of_outputs(&outputs[i], &outputs[j]).unwrap_or_default();
            c[(i, j)] = v;
            c[(j, i)] = v.conj();
        }
    }
    Ok((ComplexMatrix::wrap(c)?, flags))
}

fn check_fusion_inputs(alphas: &[f64], stats: &[f64], coherences: &ComplexMatrix) -> Result<()> {
    let l = alphas.len();
    if stats.len() != l || coherences.rows() != l || coherences.cols() != l {
        return Err(Error::dim("fusion inputs", l, stats.len()));
    }
    if let Some(s) = stats.iter().chain(alphas).find(|s| !(**s >= 0.0)) {
        return Err(Error::Domain(format!("fusion weights and statistics must be non-negative, got {s}")));
    }
    Ok(())
}

/// `M_ij = √(α_iα_jΛ_iΛ_j) c_ij`, `M_ii = α_iΛ_i`.
pub(crate) fn build_fusion_m(alphas: &[f64], stats: &[f64], coherences: &ComplexMatrix) -> CMat {
    let w: Vec<f64> = alphas.iter().zip(stats).map(|(a, s)| (a * s).sqrt()).collect();
    let l = w.len();
    CMat::from_fn(l, l, |i, j| {
        if i == j {
            C64::new(alphas[i] * stats[i], 0.0)
        } else {
            coherences[(i, j)] * (w[i] * w[j])
        }
    })
}

/// `T_ii = Σ_{ℓ≠i} α_ℓΛ_ℓ`, `T_ij = −√(α_iα_jΛ_iΛ_j) c_ij`.
pub fn build_fusion_t(alphas: &[f64], stats: &[f64], coherences: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_fusion_inputs(alphas, stats, coherences)?;
    ComplexMatrix::wrap(fusion_t_unchecked(alphas, stats, coherences))
}

fn fusion_t_unchecked(alphas: &[f64], stats: &[f64], coherences: &ComplexMatrix) -> CMat {
    let w: Vec<f64> = alphas.iter().zip(stats).map(|(a, s)| (a * s).sqrt()).collect();
    let l = w.len();
    CMat::from_fn(l, l, |i, j| {
        if i == j {
            let off: f64 = (0..l).filter(|&k| k != i).map(|k| alphas[k] * stats[k]).sum();
            C64::new(off, 0.0)
        } else {
            -coherences[(i, j)] * (w[i] * w[j])
        }
    })
}

/// Two-channel cross-validation in closed form (weights dropped).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoChannelCv {
    /// `A − A·√(1 + (G²/A²)(|c|² − 1))`.
    pub value: f64,
    /// Squared coefficient of variation of the two statistics, `((Λ₁−Λ₂)/(Λ₁+Λ₂))²`.
    pub nu2: f64,
}

/// With `A = (Λ₁+Λ₂)/2` and `G = √(Λ₁Λ₂)` this equals the smallest eigenvalue of
/// `[[Λ₂, −√(Λ₁Λ₂)c], [−√(Λ₁Λ₂)c*, Λ₁]]`.
pub fn two_channel_cv_closed_form(l1: f64, l2: f64, c12: C64) -> Result<TwoChannelCv> {
    if !(l1 >= 0.0) || !(l2 >= 0.0) {
        return Err(Error::Domain("per-channel statistics must be non-negative".into()));
    }
    let c2 = c12.norm_sqr();
    if c2 > 1.0 + 1e-12 {
        return Err(Error::Domain(format!("coherence magnitude {} exceeds 1", c2.sqrt())));
    }
    let a = 0.5 * (l1 + l2);
    if a == 0.0 {
        return Ok(TwoChannelCv { value: 0.0, nu2: 0.0 });
    }
    let g2 = l1 * l2;
    let nu2 = ((l1 - l2) / (l1 + l2)).powi(2);
    let inner = (1.0 + (g2 / (a * a)) * (c2.min(1.0) - 1.0)).max(0.0);
    Ok(TwoChannelCv {
        value: a - a * inner.sqrt(),
        nu2,
    })
}

fn require_orthonormal(channels: &[ChannelModel]) -> Result<()> {
    common_modes(channels)?;
    if let Some((idx, c)) = channels.iter().enumerate().find(|(_, c)| !c.is_orthonormal()) {
        return Err(Error::Config(format!(
            "unknown-gain panels need HᴴH = I; channel {idx} deviates by {:.3e}",
            c.orthonormality_error()
        )));
    }
    Ok(())
}

/// `‖H_ℓᴴX_ℓ‖²/M = tr(P_{H_ℓ}S_ℓℓ)` and `tr(S_ℓℓ)` per channel.
fn channel_energies(channels: &[ChannelModel], z: &MeasurementSet) -> Vec<(f64, f64)> {
    let m = z.snapshots() as f64;
    channels
        .iter()
        .zip(z.blocks())
        .map(|(c, x)| {
            let y = c.h().adjoint().as_matrix() * x.as_matrix();
            let matched = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / m;
            let total = x.iter().map(|v| v.norm_sqr()).sum::<f64>() / m;
            (matched, total)
        })
        .collect()
}

struct EigenFusion {
    composite: f64,
    cross_validation: f64,
    gain_direction: Vec<C64>,
}

fn eigen_fusion(alphas: &[f64], stats: &[f64], coherences: &ComplexMatrix) -> EigenFusion {
    let m = build_fusion_m(alphas, stats, coherences);
    let t = fusion_t_unchecked(alphas, stats, coherences);
    let em = hermitian_eig_unchecked(&m);
    let et = hermitian_eig_unchecked(&t);
    EigenFusion {
        composite: em.eigenvalues[0],
        cross_validation: *et.eigenvalues.last().expect("non-empty"),
        gain_direction: em.eigenvectors.column(0).iter().copied().collect(),
    }
}

fn finish(
    panel: Panel,
    alphas: Vec<f64>,
    stats: Vec<f64>,
    coherences: &ComplexMatrix,
    mut flags: Vec<Degeneracy>,
    auxiliaries: Auxiliaries,
) -> DetectorReport {
    let fused = eigen_fusion(&alphas, &stats, coherences);
    flags.dedup();
    DetectorReport {
        panel,
        composite: fused.composite,
        alphas,
        per_channel: stats,
        cross_validation: fused.cross_validation,
        auxiliaries: Auxiliaries {
            gain_direction: Some(fused.gain_direction),
            ..auxiliaries
        },
        flags,
    }
}

/// Unknown gains, known noise variances.
pub fn detect_p21(channels: &[ChannelModel], z: &MeasurementSet) -> Result<DetectorReport> {
    require_orthonormal(channels)?;
    let (coh, flags) = coherence_matrix(channels, z)?;
    let stats: Vec<f64> = channel_energies(channels, z)
        .iter()
        .zip(channels)
        .map(|((matched, _), c)| matched / c.sigma2())
        .collect();
    Ok(finish(Panel::P21, uniform_alphas(channels.len()), stats, &coh, flags, Auxiliaries::default()))
}

/// Unknown gains, common unknown noise variance.
pub fn detect_p22(channels: &[ChannelModel], z: &MeasurementSet) -> Result<DetectorReport> {
    require_orthonormal(channels)?;
    let (coh, mut flags) = coherence_matrix(channels, z)?;
    let energies = channel_energies(channels, z);
    let total: f64 = energies.iter().map(|e| e.1).sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("data have zero energy".into()));
    }
    let mut alphas = Vec::with_capacity(channels.len());
    let mut stats = Vec::with_capacity(channels.len());
    for (idx, &(matched, e)) in energies.iter().enumerate() {
        alphas.push(e / total);
        if e > 0.0 {
            stats.push(matched / e);
        } else {
            flags.push(Degeneracy::ZeroEnergy { channel: idx });
            stats.push(0.0);
        }
    }
    let nz = z.total_dim() as f64;
    let aux = Auxiliaries {
        noise_var_h0: Some(vec![total / nz; channels.len()]),
        ..Default::default()
    };
    let mut report = finish(Panel::P22, alphas, stats, &coh, flags, aux);
    // σ̂²(1) from the best gain direction: (tr S − tr(P_F(ĝ)S))/N_Z.
    let fitted = report.composite * total;
    report.auxiliaries.noise_var_h1 = Some(vec![(total - fitted).max(0.0) / nz; channels.len()]);
    Ok(report)
}

/// Unknown gains, different unknown noise variances. The fusion matrices use
/// the F-ratio `tr(P S_ℓℓ)/tr((I−P) S_ℓℓ)` on and off the diagonal; the
/// per-channel statistics are the log ratios `ln(tr S_ℓℓ / tr((I−P) S_ℓℓ))`.
pub fn detect_p23(channels: &[ChannelModel], z: &MeasurementSet) -> Result<DetectorReport> {
    require_orthonormal(channels)?;
    let (coh, mut flags) = coherence_matrix(channels, z)?;
    let alphas = dimension_alphas(z);
    let dims = z.channel_dims();
    let energies = channel_energies(channels, z);
    let mut log_stats = Vec::with_capacity(channels.len());
    let mut f_stats = Vec::with_capacity(channels.len());
    let mut h0 = Vec::with_capacity(channels.len());
    let mut h1 = Vec::with_capacity(channels.len());
    let mut saturate = false;
    for (idx, (&(matched, e), &n)) in energies.iter().zip(&dims).enumerate() {
        let residual = e - matched;
        h0.push(e / n as f64);
        h1.push(residual.max(0.0) / n as f64);
        if !(residual > RESIDUAL_FLOOR * e) {
            flags.push(Degeneracy::ZeroResidual { channel: idx });
            log_stats.push(f64::INFINITY);
            f_stats.push(f64::INFINITY);
            saturate = true;
        } else {
            log_stats.push((e / residual).ln());
            f_stats.push(matched / residual);
        }
    }
    if saturate {
        let mut r = saturated(Panel::P23, alphas, log_stats, flags);
        r.auxiliaries.noise_var_h0 = Some(h0);
        r.auxiliaries.noise_var_h1 = Some(h1);
        return Ok(r);
    }
    let fused = eigen_fusion(&alphas, &f_stats, &coh);
    // Σα(Λ⁽²⁾ − F) + maxeig(M_F) = ΣαΛ⁽²⁾ − mineig(T_F).
    let offset: f64 = alphas
        .iter()
        .zip(log_stats.iter().zip(&f_stats))
        .map(|(a, (l2, f))| a * (l2 - f))
        .sum();
    flags.dedup();
    Ok(DetectorReport {
        panel: Panel::P23,
        composite: offset + fused.composite,
        alphas,
        per_channel: log_stats,
        cross_validation: fused.cross_validation,
        auxiliaries: Auxiliaries {
            gain_direction: Some(fused.gain_direction),
            noise_var_h0: Some(h0),
            noise_var_h1: Some(h1),
            ..Default::default()
        },
        flags,
    })
}
