//! Known composite channel `F`: panels P11, P12, P13.
//!
//! In all three the cross-validation term is assembled from the recursive
//! amplitude-difference partition, while the composite is evaluated
//! directly from the composite projection (P11, P12) or the compressed
//! likelihoods (P13).

use crate::channel::{common_modes, ChannelModel};
use crate::error::{Error, Result};
use crate::fusion::{partition_steps, scaled_blocks, PartitionTree};
use crate::linalg::{projection_unchecked, trace_of_product, CMat};
use crate::measurement::{sample_covariance, MeasurementSet, SampleCovariance};

use super::{
    dimension_alphas, saturated, uniform_alphas, Auxiliaries, Degeneracy, DetectorReport, Panel,
    RESIDUAL_FLOOR,
};

fn prepare(channels: &[ChannelModel], z: &MeasurementSet) -> Result<SampleCovariance> {
    common_modes(channels)?;
    z.check_against(channels)?;
    Ok(sample_covariance(z))
}

/// `Σ_p tr(Q⁻¹_{E_pE_p} S_{E_pE_p})` with channel blocks `(g_ℓ/s_ℓ)H_ℓ`.
fn partition_total(channels: &[ChannelModel], z: &MeasurementSet, scales: &[f64]) -> Result<f64> {
    let (f, x) = scaled_blocks(channels, z, scales);
    let order: Vec<usize> = (0..channels.len()).collect();
    let tree = PartitionTree::daisy_chain(&order)?;
    Ok(partition_steps(&f, &x, &tree)?.iter().map(|s| s.term).sum())
}

/// Stacks `(g_ℓ/s_ℓ) H_ℓ`.
fn stacked_channel(channels: &[ChannelModel], scales: &[f64]) -> CMat {
    crate::channel::stack_scaled(channels, &scales.iter().map(|s| 1.0 / s).collect::<Vec<_>>())
}

/// `tr(P_{H_ℓ} S_ℓℓ)` for each channel.
fn matched_energies(channels: &[ChannelModel], s: &SampleCovariance) -> Result<Vec<f64>> {
    channels
        .iter()
        .enumerate()
        .map(|(l, c)| {
            let p = projection_unchecked(c.h().as_matrix(), "channel matrix")?;
            Ok(trace_of_product(&p, &s.block_inner(l, l)))
        })
        .collect()
}

/// Known `F`, known noise variances.
pub fn detect_p11(channels: &[ChannelModel], z: &MeasurementSet) -> Result<DetectorReport> {
    let s = prepare(channels, z)?;
    let l = channels.len();
    let sigmas: Vec<f64> = channels.iter().map(|c| c.sigma()).collect();
    let sw = s.whitened(&sigmas)?;
    let f = stacked_channel(channels, &sigmas);
    let p = projection_unchecked(&f, "whitened composite channel")?;
    let composite = trace_of_product(&p, sw.full_ref()) / l as f64;
    let per_channel = matched_energies(channels, &sw)?;
    let cross_validation = partition_total(channels, z, &sigmas)? / l as f64;
    Ok(DetectorReport {
        panel: Panel::P11,
        composite,
        alphas: uniform_alphas(l),
        per_channel,
        cross_validation,
        auxiliaries: Auxiliaries::default(),
        flags: Vec::new(),
    })
}

/// Known `F`, common unknown noise variance.
pub fn detect_p12(channels: &[ChannelModel], z: &MeasurementSet) -> Result<DetectorReport> {
    let s = prepare(channels, z)?;
    let l = channels.len();
    let total = s.trace();
    if !(total > 0.0) {
        return Err(Error::Degenerate("data have zero energy".into()));
    }
    let ones = vec![1.0; l];
    let f = stacked_channel(channels, &ones);
    let p = projection_unchecked(&f, "composite channel")?;
    let captured = trace_of_product(&p, s.full_ref());
    let composite = captured / total;

    let matched = matched_energies(channels, &s)?;
    let mut flags = Vec::new();
    let mut alphas = Vec::with_capacity(l);
    let mut per_channel = Vec::with_capacity(l);
    for (idx, &m) in matched.iter().enumerate() {
        let e = s.block_trace(idx);
        alphas.push(e / total);
        if e > 0.0 {
            per_channel.push(m / e);
        } else {
            flags.push(Degeneracy::ZeroEnergy { channel: idx });
            per_channel.push(0.0);
        }
    }
    let cross_validation = partition_total(channels, z, &ones)? / total;
    let nz = z.total_dim() as f64;
    let h0 = total / nz;
    let h1 = (total - captured).max(0.0) / nz;
    Ok(DetectorReport {
        panel: Panel::P12,
        composite,
        alphas,
        per_channel,
        cross_validation,
        auxiliaries: Auxiliaries {
            noise_var_h0: Some(vec![h0; l]),
            noise_var_h1: Some(vec![h1; l]),
            ..Default::default()
        },
        flags,
    })
}

/// Known `F`, different unknown noise variances, with per-channel noise
/// estimates `σ̂²_ℓ(1) = tr((I − P_{H_ℓ}) S_ℓℓ)/N_ℓ` plugged into the
/// cross-validation term.
pub fn detect_p13(channels: &[ChannelModel], z: &MeasurementSet) -> Result<DetectorReport> {
    let s = prepare(channels, z)?;
    let alphas = dimension_alphas(z);
    let dims = z.channel_dims();
    let matched = matched_energies(channels, &s)?;

    let mut h0 = Vec::with_capacity(channels.len());
    let mut h1 = Vec::with_capacity(channels.len());
    let mut per_channel = Vec::with_capacity(channels.len());
    let mut flags = Vec::new();
    for (idx, (&m, &n)) in matched.iter().zip(&dims).enumerate() {
        let e = s.block_trace(idx);
        let residual = e - m;
        if !(residual > RESIDUAL_FLOOR * e) {
            flags.push(Degeneracy::ZeroResidual { channel: idx });
            per_channel.push(f64::INFINITY);
        } else {
            per_channel.push((e / residual).ln());
        }
        h0.push(e / n as f64);
        h1.push(residual.max(0.0) / n as f64);
    }
    if !flags.is_empty() {
        let mut r = saturated(Panel::P13, alphas, per_channel, flags);
        r.auxiliaries.noise_var_h0 = Some(h0);
        r.auxiliaries.noise_var_h1 = Some(h1);
        return Ok(r);
    }

    let nz = z.total_dim() as f64;
    let sigmas: Vec<f64> = h1.iter().map(|v| v.sqrt()).collect();
    let cross_validation = partition_total(channels, z, &sigmas)? / nz;

    // Independent route: compressed log-likelihoods with the same plug-ins,
    // (L₁ − L₀)/(M N_Z) = Σ α_ℓ ln(σ̂²_ℓ(0)/σ̂²_ℓ(1)) + 1 − tr((I − P_F̃) S̃)/N_Z.
    let sw = s.whitened(&sigmas)?;
    let f = stacked_channel(channels, &sigmas);
    let p = projection_unchecked(&f, "whitened composite channel")?;
    let residual_fit = sw.trace() - trace_of_product(&p, sw.full_ref());
    let log_ratio: f64 = alphas
        .iter()
        .zip(h0.iter().zip(&h1))
        .map(|(a, (v0, v1))| a * (v0 / v1).ln())
        .sum();
    let composite = log_ratio + 1.0 - residual_fit / nz;

    Ok(DetectorReport {
        panel: Panel::P13,
        composite,
        alphas,
        per_channel,
        cross_validation,
        auxiliaries: Auxiliaries {
            noise_var_h0: Some(h0),
            noise_var_h1: Some(h1),
            ..Default::default()
        },
        flags: Vec::new(),
    })
}
