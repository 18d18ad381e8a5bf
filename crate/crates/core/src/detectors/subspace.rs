//! Unknown rank-J channel subspaces: panels P31, P32, P33.

use crate::channel::{common_modes, ChannelModel};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig_unchecked, trace_of_product, HermitianEig};
use crate::measurement::{sample_covariance, MeasurementSet, SampleCovariance};

use super::{
    dimension_alphas, saturated, uniform_alphas, Auxiliaries, Degeneracy, DetectorReport, P33Variant, Panel,
    RESIDUAL_FLOOR,
};

fn prepare(channels: &[ChannelModel], z: &MeasurementSet) -> Result<(usize, SampleCovariance)> {
    let j = common_modes(channels)?;
    z.check_against(channels)?;
    let m = z.snapshots();
    if j > m {
        return Err(Error::Domain(format!("rank J = {j} exceeds snapshot count M = {m}")));
    }
    if let Some((idx, n)) = z.channel_dims().into_iter().enumerate().find(|(_, n)| j > *n) {
        return Err(Error::Domain(format!("rank J = {j} exceeds N_{idx} = {n}")));
    }
    Ok((j, sample_covariance(z)))
}

fn block_eigs(s: &SampleCovariance) -> Vec<HermitianEig> {
    (0..s.channels())
        .map(|l| hermitian_eig_unchecked(&s.block_inner(l, l)))
        .collect()
}

fn bases(eigs: &[HermitianEig], composite: &HermitianEig, j: usize) -> Auxiliaries {
    Auxiliaries {
        channel_bases: Some(eigs.iter().map(|e| e.dominant_basis(j)).collect()),
        composite_basis: Some(composite.dominant_basis(j)),
        ..Default::default()
    }
}

/// Unknown subspaces, known noise variances: dominant eigen-energy of the
/// whitened covariance.
pub fn detect_p31(channels: &[ChannelModel], z: &MeasurementSet) -> Result<DetectorReport> {
    let (j, s) = prepare(channels, z)?;
    let l = channels.len();
    let sigmas: Vec<f64> = channels.iter().map(|c| c.sigma()).collect();
    let sw = s.whitened(&sigmas)?;
    let ez = hermitian_eig_unchecked(sw.full_ref());
    let eigs = block_eigs(&sw);
    let alphas = uniform_alphas(l);
    let per_channel: Vec<f64> = eigs.iter().map(|e| e.top_energy(j)).collect();
    let sub_channels: f64 = alphas
        .iter()
        .zip(&eigs)
        .map(|(a, e)| a * e.subdominant_energy(j))
        .sum();
    let cross_validation = ez.subdominant_energy(j) / l as f64 - sub_channels;
    Ok(DetectorReport {
        panel: Panel::P31,
        composite: ez.top_energy(j) / l as f64,
        alphas,
        per_channel,
        cross_validation,
        auxiliaries: bases(&eigs, &ez, j),
        flags: Vec::new(),
    })
}

/// Unknown subspaces, common unknown noise variance.
pub fn detect_p32(channels: &[ChannelModel], z: &MeasurementSet) -> Result<DetectorReport> {
    let (j, s) = prepare(channels, z)?;
    let total = s.trace();
    if !(total > 0.0) {
        return Err(Error::Degenerate("data have zero energy".into()));
    }
    let ez = hermitian_eig_unchecked(s.full_ref());
    let eigs = block_eigs(&s);
    let mut alphas = Vec::with_capacity(eigs.len());
    let mut per_channel = Vec::with_capacity(eigs.len());
    let mut sub_channels = 0.0;
    let mut flags = Vec::new();
    for (idx, e) in eigs.iter().enumerate() {
        let t = s.block_trace(idx);
        let alpha = t / total;
        alphas.push(alpha);
        if t > 0.0 {
            per_channel.push(e.top_energy(j) / t);
            sub_channels += alpha * e.subdominant_energy(j) / t;
        } else {
            flags.push(Degeneracy::ZeroEnergy { channel: idx });
            per_channel.push(0.0);
        }
    }
    let nz = z.total_dim() as f64;
    let mut aux = bases(&eigs, &ez, j);
    aux.noise_var_h0 = Some(vec![total / nz; eigs.len()]);
    aux.noise_var_h1 = Some(vec![ez.subdominant_energy(j).max(0.0) / nz; eigs.len()]);
    Ok(DetectorReport {
        panel: Panel::P32,
        composite: ez.top_energy(j) / total,
        alphas,
        per_channel,
        cross_validation: ez.subdominant_energy(j) / total - sub_channels,
        auxiliaries: aux,
        flags,
    })
}

/// Unknown subspaces, different unknown noise variances, with the tabulated
/// per-channel statistic.
pub fn detect_p33(channels: &[ChannelModel], z: &MeasurementSet) -> Result<DetectorReport> {
    detect_p33_with(channels, z, P33Variant::default())
}

/// Per-channel noise is estimated from the energy outside each channel's
/// dominant `J`-subspace, `σ̂²_ℓ(1) = Σ_{n>J} λ_n(S_ℓℓ)/N_ℓ`; the composite
/// subspace is the dominant `J`-subspace of the covariance whitened by
/// those estimates.
pub fn detect_p33_with(channels: &[ChannelModel], z: &MeasurementSet, variant: P33Variant) -> Result<DetectorReport> {
    let (j, s) = prepare(channels, z)?;
    if let Some((idx, n)) = z.channel_dims().into_iter().enumerate().find(|(_, n)| *n <= j) {
        return Err(Error::Domain(format!(
            "channel {idx} has N = {n} <= J = {j}; no residual subspace to estimate noise from"
        )));
    }
    let alphas = dimension_alphas(z);
    let dims = z.channel_dims();
    let eigs = block_eigs(&s);

    let mut per_channel = Vec::with_capacity(eigs.len());
    let mut phis = Vec::with_capacity(eigs.len());
    let mut h0 = Vec::with_capacity(eigs.len());
    let mut h1 = Vec::with_capacity(eigs.len());
    let mut flags = Vec::new();
    for (idx, (e, &n)) in eigs.iter().zip(&dims).enumerate() {
        let t = s.block_trace(idx);
        let sub = e.subdominant_energy(j);
        h0.push(t / n as f64);
        h1.push(sub.max(0.0) / n as f64);
        if !(sub > RESIDUAL_FLOOR * t) {
            flags.push(Degeneracy::ZeroResidual { channel: idx });
            per_channel.push(f64::INFINITY);
            phis.push(f64::INFINITY);
            continue;
        }
        let top = e.top_energy(j);
        let phi = top / sub;
        phis.push(phi);
        per_channel.push(match variant {
            P33Variant::Tabulated => phi.ln_1p(),
            P33Variant::FullTrace => (e.eigenvalues.iter().sum::<f64>() / sub).ln_1p(),
        });
    }
    if !flags.is_empty() {
        let mut r = saturated(Panel::P33, alphas, per_channel, flags);
        r.auxiliaries.noise_var_h0 = Some(h0);
        r.auxiliaries.noise_var_h1 = Some(h1);
        return Ok(r);
    }

    let nz = z.total_dim() as f64;
    let sigmas: Vec<f64> = h1.iter().map(|v| v.sqrt()).collect();
    let sw = s.whitened(&sigmas)?;
    let ez = hermitian_eig_unchecked(sw.full_ref());
    let energy = ez.top_energy(j) / nz;
    let cross_validation: f64 = alphas.iter().zip(&phis).map(|(a, p)| a * p).sum::<f64>() - energy;

    // Independent route: plug the estimated projections into the
    // pre-estimation detector,
    //   Σ α ln(tr S/tr((I−P)S)) − Σ α tr(P S)/tr((I−P)S) + tr(P_F̂ S̃)/N_Z.
    // Energies come from the projected data, not from the eigenvalues, so
    // the residual is not formed by cancellation.
    let m = z.snapshots() as f64;
    let mut route = 0.0;
    for (idx, (e, a)) in eigs.iter().zip(&alphas).enumerate() {
        let u = e.dominant_basis(j);
        let x = z.block(idx).as_matrix();
        let coords = u.adjoint().as_matrix() * x;
        let captured = coords.norm_squared() / m;
        let residual = (x - u.as_matrix() * &coords).norm_squared() / m;
        route += a * (((captured + residual) / residual).ln() - captured / residual);
    }
    let uf = ez.dominant_basis(j);
    let pf = uf.as_matrix() * uf.adjoint().as_matrix();
    route += trace_of_product(&pf, sw.full_ref()) / nz;
    if variant == P33Variant::FullTrace {
        // The displayed variant changes only the per-channel statistic.
        route += alphas
            .iter()
            .zip(&per_channel)
            .zip(&phis)
            .map(|((a, l), p)| a * (l - p.ln_1p()))
            .sum::<f64>();
    }

    let mut aux = bases(&eigs, &ez, j);
    aux.noise_var_h0 = Some(h0);
    aux.noise_var_h1 = Some(h1);
    Ok(DetectorReport {
        panel: Panel::P33,
        composite: route,
        alphas,
        per_channel,
        cross_validation,
        auxiliaries: aux,
        flags,
    })
}
