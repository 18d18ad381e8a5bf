//! Declarative scenario descriptions shared by the harness and the CLI.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelModel, PropagationSpec};
use crate::detectors::{DetectorOptions, Panel};
use crate::error::{Error, Result};
use crate::linalg::C64;

/// Speed of propagation used to convert radial velocity to Doppler.
pub const PROPAGATION_SPEED_MPS: f64 = 299_792_458.0;

/// Source delay and Doppler; channel `ℓ` sees `τ_ℓ = d_ℓ·τ₀` and `ν_ℓ = r_ℓ·ν`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    #[serde(default)]
    pub tau0_s: f64,
    /// Normalized Doppler in Hz. Mutually exclusive with `radial_velocity_mps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doppler_hz: Option<f64>,
    /// Converted with `ν = f_c·v/c`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radial_velocity_mps: Option<f64>,
}

impl SourceSpec {
    pub fn doppler(&self, carrier_hz: f64) -> Result<f64> {
        match (self.doppler_hz, self.radial_velocity_mps) {
            (Some(_), Some(_)) => Err(Error::Config(
                "set only one of source.doppler_hz and source.radial_velocity_mps".into(),
            )),
            (Some(nu), None) => Ok(nu),
            (None, Some(v)) => Ok(carrier_hz * v / PROPAGATION_SPEED_MPS),
            (None, None) => Ok(0.0),
        }
    }
}

fn one() -> f64 {
    1.0
}

fn unit_gain() -> [f64; 2] {
    [1.0, 0.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    /// `N_ℓ`.
    pub samples: usize,
    /// Raw gain `[re, im]` before the channel-normalization scale is folded in.
    #[serde(default = "unit_gain")]
    pub gain: [f64; 2],
    #[serde(default = "one")]
    pub sigma2: f64,
    /// `d_ℓ`; defaults to the channel index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_scale: Option<f64>,
    /// `r_ℓ`.
    #[serde(default = "one")]
    pub doppler_scale: f64,
    #[serde(default)]
    pub clock_offset_s: f64,
    /// Build from per-sample delays instead of the narrowband approximation.
    #[serde(default)]
    pub broadband: bool,
}

impl ChannelSpec {
    pub fn new(samples: usize) -> Self {
        ChannelSpec {
            samples,
            gain: unit_gain(),
            sigma2: 1.0,
            delay_scale: None,
            doppler_scale: 1.0,
            clock_offset_s: 0.0,
            broadband: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub carrier_hz: f64,
    pub sample_period_s: f64,
    /// `J`.
    pub modes: usize,
    /// `M`.
    pub snapshots: usize,
    #[serde(default)]
    pub source: SourceSpec,
    pub channels: Vec<ChannelSpec>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::Config("scenario needs at least one channel".into()));
        }
        if self.snapshots == 0 {
            return Err(Error::Config("snapshots must be at least 1".into()));
        }
        if !(self.carrier_hz > 0.0) || !(self.sample_period_s > 0.0) {
            return Err(Error::Config("carrier_hz and sample_period_s must be positive".into()));
        }
        self.source.doppler(self.carrier_hz)?;
        for (idx, c) in self.channels.iter().enumerate() {
            if !(c.sigma2 > 0.0) {
                return Err(Error::Config(format!("channels[{idx}].sigma2 must be positive")));
            }
            if c.samples < self.modes {
                return Err(Error::Config(format!(
                    "channels[{idx}].samples = {} is below modes = {}",
                    c.samples, self.modes
                )));
            }
        }
        Ok(())
    }

    /// `N_Z`.
    pub fn total_dim(&self) -> usize {
        self.channels.iter().map(|c| c.samples).sum()
    }

    /// Channel models for the configured source.
    pub fn build_channels(&self) -> Result<Vec<ChannelModel>> {
        let nu = self.source.doppler(self.carrier_hz)?;
        self.build_channels_at(self.source.tau0_s, nu)
    }

    /// Channel models for a hypothesized source at `(τ₀, ν)`.
    pub fn build_channels_at(&self, tau0_s: f64, doppler_hz: f64) -> Result<Vec<ChannelModel>> {
        self.validate()?;
        self.channels
            .iter()
            .enumerate()
            .map(|(idx, c)| {
                let d = c.delay_scale.unwrap_or(idx as f64);
                let spec = PropagationSpec::new(self.carrier_hz, self.sample_period_s, c.samples, self.modes)
                    .with_delay(d * tau0_s)
                    .with_doppler(c.doppler_scale * doppler_hz)
                    .with_clock_offset(c.clock_offset_s);
                let gain = C64::new(c.gain[0], c.gain[1]);
                if c.broadband {
                    ChannelModel::broadband(&spec.with_linear_delay_samples(), gain, c.sigma2)
                } else {
                    ChannelModel::narrowband(&spec, gain, c.sigma2)
                }
            })
            .collect()
    }
}

/// Amplitude power `p` (entries of `A` drawn `CN(0, p)`) giving a mean
/// per-channel SNR of `snr_db`, where channel `ℓ`'s SNR is `|g_ℓ|² p / σ²_ℓ`
/// with the normalized gain.
pub fn amplitude_power(channels: &[ChannelModel], snr_db: f64) -> f64 {
    let mean_gain: f64 = channels
        .iter()
        .map(|c| c.gain().norm_sqr() / c.sigma2())
        .sum::<f64>()
        / channels.len() as f64;
    10f64.powf(snr_db / 10.0) / mean_gain
}

/// Everything a Monte-Carlo experiment needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub panel: Panel,
    pub scenario: Scenario,
    #[serde(default)]
    pub snr_db: Vec<f64>,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub pfa_targets: Vec<f64>,
    #[serde(default)]
    pub options: DetectorOptions,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if let Some(p) = self.pfa_targets.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::Config(format!("pfa target {p} is outside (0, 1)")));
        }
        if let Some(s) = self.snr_db.iter().find(|s| s.is_nan()) {
            return Err(Error::Config(format!("invalid SNR {s}")));
        }
        Ok(())
    }
}
