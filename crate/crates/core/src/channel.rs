//! Per-channel signal subspaces built from propagation geometry.
//!
//! A receiver sees the common waveform through a delay `τ_ℓ(t)`, a clock
//! offset `t_ℓ`, and a complex gain. Sampling `N` points over an interval
//! `T` turns this into `x_ℓ = g_ℓ H_ℓ a + u_ℓ` with `H_ℓ` an `N × J` matrix.
//! Two constructors are provided: the general broadband one driven by
//! per-sample delays, and the narrowband one that assumes a linear delay
//! and negligible intra-band Doppler dispersion.
//!
//! Stored channel matrices always satisfy `tr(HᴴH) = J`; whatever scale the
//! raw construction produced is folded into the gain.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, ComplexMatrix, C64};

/// Tolerance used when checking Gram-matrix normalizations.
pub const GRAM_TOLERANCE: f64 = 1e-9;

/// Physical parameters of one receiver's observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationSpec {
    /// Carrier frequency `f_c` in Hz.
    pub carrier_hz: f64,
    /// Collection interval `T` in seconds.
    pub interval_s: f64,
    /// Sample period `T_s` in seconds.
    pub sample_period_s: f64,
    /// Samples per channel `N`.
    pub samples: usize,
    /// Number of signal modes `J`.
    pub modes: usize,
    /// Time-zero propagation delay `τ(0)` in seconds.
    #[serde(default)]
    pub tau0_s: f64,
    /// Normalized Doppler `ν` in Hz, so that `τ(t) ≈ τ(0) + (ν/f_c)·t`.
    #[serde(default)]
    pub doppler_hz: f64,
    /// Receiver clock offset `t_ℓ` in seconds.
    #[serde(default)]
    pub clock_offset_s: f64,
    /// Per-sample delays `τ(nT_s)` for the broadband construction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_samples_s: Option<Vec<f64>>,
}

impl PropagationSpec {
    /// A spec with `T = N·T_s` and every delay/offset zero.
    pub fn new(carrier_hz: f64, sample_period_s: f64, samples: usize, modes: usize) -> Self {
        PropagationSpec {
            carrier_hz,
            interval_s: sample_period_s * samples as f64,
            sample_period_s,
            samples,
            modes,
            tau0_s: 0.0,
            doppler_hz: 0.0,
            clock_offset_s: 0.0,
            tau_samples_s: None,
        }
    }

    pub fn with_delay(mut self, tau0_s: f64) -> Self {
        self.tau0_s = tau0_s;
        self
    }

    pub fn with_doppler(mut self, doppler_hz: f64) -> Self {
        self.doppler_hz = doppler_hz;
        self
    }

    pub fn with_clock_offset(mut self, clock_offset_s: f64) -> Self {
        self.clock_offset_s = clock_offset_s;
        self
    }

    /// Fills `tau_samples_s` from the first-order delay model
    /// `τ(nT_s) = τ(0) + ν·nT_s/f_c`.
    pub fn with_linear_delay_samples(mut self) -> Self {
        let slope = self.doppler_hz / self.carrier_hz;
        self.tau_samples_s = Some(
            (0..self.samples)
                .map(|n| self.tau0_s + slope * n as f64 * self.sample_period_s)
                .collect(),
        );
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.carrier_hz,
            self.interval_s,
            self.sample_period_s,
            self.tau0_s,
            self.doppler_hz,
            self.clock_offset_s,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("propagation spec".into()));
        }
        if self.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        if self.modes == 0 || self.modes > self.samples {
            return Err(Error::Domain(format!(
                "modes J = {} must satisfy 1 <= J <= N = {}",
                self.modes, self.samples
            )));
        }
        if !(self.sample_period_s > 0.0) || !(self.interval_s > 0.0) {
            return Err(Error::Config("sample period and interval must be positive".into()));
        }
        let implied = self.samples as f64 * self.sample_period_s;
        if (implied - self.interval_s).abs() > 1e-9 * self.interval_s {
            return Err(Error::Config(format!(
                "interval {} s disagrees with N·T_s = {} s",
                self.interval_s, implied
            )));
        }
        if let Some(tau) = &self.tau_samples_s {
            if tau.len() != self.samples {
                return Err(Error::dim("tau_samples_s length", self.samples, tau.len()));
            }
            if tau.iter().any(|t| !t.is_finite()) {
                return Err(Error::NonFinite("tau_samples_s".into()));
            }
        }
        Ok(())
    }
}

fn phase(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}

/// General channel matrix from per-sample delays. Not normalized.
pub fn build_broadband_h(spec: &PropagationSpec) -> Result<ComplexMatrix> {
    spec.validate()?;
    let tau = spec.tau_samples_s.as_ref().ok_or_else(|| {
        Error::Config("broadband construction requires tau_samples_s".into())
    })?;
    let (n, j) = (spec.samples, spec.modes);
    let (fc, t) = (spec.carrier_hz, spec.interval_s);
    let offset = spec.clock_offset_s;
    let global = phase(-2.0 * PI * fc * offset);
    ComplexMatrix::from_fn(n, j, |row, col| {
        let (nf, jf) = (row as f64, col as f64);
        let v = phase(-2.0 * PI * fc * tau[row])
            * phase(2.0 * PI * nf * jf / n as f64)
            * phase(-2.0 * PI * jf * tau[row] / t);
        global * v * phase(-2.0 * PI * jf * offset / t)
    })
}

/// Narrowband channel matrix `e^{−i2πf_c(t+τ₀)} D_N(νT_s) V D_J((t+τ₀)/T)`.
/// Not normalized: its Gram matrix is `N·I_J`.
pub fn build_narrowband_h(spec: &PropagationSpec) -> Result<ComplexMatrix> {
    spec.validate()?;
    let (n, j) = (spec.samples, spec.modes);
    let lag = spec.clock_offset_s + spec.tau0_s;
    let global = phase(-2.0 * PI * spec.carrier_hz * lag);
    let doppler_step = spec.doppler_hz * spec.sample_period_s;
    let mode_step = lag / spec.interval_s;
    ComplexMatrix::from_fn(n, j, |row, col| {
        let (nf, jf) = (row as f64, col as f64);
        global
            * phase(-2.0 * PI * nf * doppler_step)
            * phase(2.0 * PI * nf * jf / n as f64)
            * phase(-2.0 * PI * jf * mode_step)
    })
}

/// Rescales so that `tr(HᴴH) = J`, where `J` is the column count.
pub fn normalize_channel(h_raw: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(normalize_with_scale(h_raw)?.0)
}

/// Returns the normalized matrix together with the factor `s` such that
/// `h_raw = s · h`.
fn normalize_with_scale(h_raw: &ComplexMatrix) -> Result<(ComplexMatrix, f64)> {
    let energy = h_raw.frobenius_norm().powi(2);
    if energy == 0.0 {
        return Err(Error::Domain("cannot normalize a zero channel matrix".into()));
    }
    let scale = (energy / h_raw.cols() as f64).sqrt();
    Ok((h_raw.scaled(1.0 / scale), scale))
}

/// One receiver: normalized subspace, complex gain, and white-noise variance.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelModel {
    h: ComplexMatrix,
    gain: C64,
    sigma2: f64,
}

impl ChannelModel {
    /// Takes an already-normalized `H` (`tr(HᴴH) = J`).
    pub fn new(h: ComplexMatrix, gain: C64, sigma2: f64) -> Result<Self> {
        if h.cols() == 0 || h.cols() > h.rows() {
            return Err(Error::Domain(format!(
                "channel matrix is {}x{}; need 1 <= J <= N",
                h.rows(),
                h.cols()
            )));
        }
        let trace = h.frobenius_norm().powi(2);
        let j = h.cols() as f64;
        if (trace - j).abs() > GRAM_TOLERANCE * j {
            return Err(Error::Config(format!(
                "channel matrix has tr(HᴴH) = {trace}, expected {j}"
            )));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::Domain(format!("noise variance must be positive, got {sigma2}")));
        }
        if !gain.re.is_finite() || !gain.im.is_finite() {
            return Err(Error::NonFinite("channel gain".into()));
        }
        Ok(ChannelModel { h, gain, sigma2 })
    }

    /// Normalizes `h_raw` and folds the removed scale into the gain, so that
    /// `gain · h_raw = gain' · H`.
    pub fn from_raw(h_raw: &ComplexMatrix, gain: C64, sigma2: f64) -> Result<Self> {
        let (h, scale) = normalize_with_scale(h_raw)?;
        Self::new(h, gain * scale, sigma2)
    }

    /// Narrowband channel for `spec`; the raw `√N` scale lands in the gain.
    pub fn narrowband(spec: &PropagationSpec, gain: C64, sigma2: f64) -> Result<Self> {
        Self::from_raw(&build_narrowband_h(spec)?, gain, sigma2)
    }

    pub fn broadband(spec: &PropagationSpec, gain: C64, sigma2: f64) -> Result<Self> {
        Self::from_raw(&build_broadband_h(spec)?, gain, sigma2)
    }

    pub fn h(&self) -> &ComplexMatrix {
        &self.h
    }

    pub fn gain(&self) -> C64 {
        self.gain
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// `N_ℓ`.
    pub fn samples(&self) -> usize {
        self.h.rows()
    }

    /// `J`.
    pub fn modes(&self) -> usize {
        self.h.cols()
    }

    pub fn with_gain(&self, gain: C64) -> Self {
        ChannelModel { gain, ..self.clone() }
    }

    pub fn with_sigma2(&self, sigma2: f64) -> Result<Self> {
        Self::new(self.h.clone(), self.gain, sigma2)
    }

    /// `‖HᴴH − I_J‖_max`.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.h.adjoint().mul(&self.h).expect("H columns match");
        gram.max_abs_diff(&ComplexMatrix::identity(self.modes()))
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormality_error() <= GRAM_TOLERANCE
    }
}

/// The stacked composite channel and its noise-whitened counterpart.
#[derive(Clone, Debug)]
pub struct CompositeChannel {
    /// Vertical stack of `g_ℓ H_ℓ`.
    pub f: ComplexMatrix,
    /// Vertical stack of `(g_ℓ/σ_ℓ) H_ℓ`.
    pub f_whitened: ComplexMatrix,
}

pub(crate) fn common_modes(channels: &[ChannelModel]) -> Result<usize> {
    let first = channels
        .first()
        .ok_or_else(|| Error::Config("at least one channel is required".into()))?;
    let j = first.modes();
    if let Some((idx, c)) = channels.iter().enumerate().find(|(_, c)| c.modes() != j) {
        return Err(Error::Config(format!(
            "channel {idx} has J = {}, channel 0 has J = {j}",
            c.modes()
        )));
    }
    Ok(j)
}

/// Stacks `scale_ℓ · g_ℓ H_ℓ` for arbitrary per-channel real scales.
pub(crate) fn stack_scaled(channels: &[ChannelModel], scales: &[f64]) -> CMat {
    let rows: usize = channels.iter().map(|c| c.samples()).sum();
    let j = channels[0].modes();
    let mut out = CMat::zeros(rows, j);
    let mut r0 = 0;
    for (c, &s) in channels.iter().zip(scales) {
        let block = c.h.as_matrix().map(|z| z * c.gain * s);
        out.view_mut((r0, 0), (c.samples(), j)).copy_from(&block);
        r0 += c.samples();
    }
    out
}

pub fn compose_f(channels: &[ChannelModel]) -> Result<CompositeChannel> {
    common_modes(channels)?;
    let ones = vec![1.0; channels.len()];
    let inv_sigma: Vec<f64> = channels.iter().map(|c| 1.0 / c.sigma()).collect();
    Ok(CompositeChannel {
        f: ComplexMatrix::wrap(stack_scaled(channels, &ones))?,
        f_whitened: ComplexMatrix::wrap(stack_scaled(channels, &inv_sigma))?,
    })
}
