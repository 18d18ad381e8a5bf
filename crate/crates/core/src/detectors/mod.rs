//! The nine multi-channel GLR detectors.
//!
//! Panels are indexed by what is known about the channels (row) and about
//! the noise (column):
//!
//! | channels \ noise     | known σ²_ℓ | common unknown σ² | different unknown σ²_ℓ |
//! |----------------------|-----------|-------------------|------------------------|
//! | known `F`            | P11       | P12               | P13                    |
//! | unknown gains `g_ℓ`  | P21       | P22               | P23                    |
//! | unknown rank-J `H_ℓ` | P31       | P32               | P33                    |
//!
//! Every panel reports its composite statistic together with the canonical
//! decomposition `composite = Σ α_ℓ Λ_ℓ − V`. Where it is cheap to do so the
//! composite and `V` are computed along independent numerical routes, so the
//! decomposition residual is a genuine consistency check rather than a
//! tautology.

mod gains;
mod known;
mod subspace;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};
use crate::measurement::MeasurementSet;

pub use gains::{
    build_fusion_t, coherence, coherence_matrix, detect_p21, detect_p22, detect_p23,
    two_channel_cv_closed_form, TwoChannelCv,
};
pub use known::{detect_p11, detect_p12, detect_p13};
pub use subspace::{detect_p31, detect_p32, detect_p33, detect_p33_with};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKnowledge {
    /// `H_ℓ` and `g_ℓ` known.
    KnownF,
    /// `H_ℓ` known and orthonormal, `g_ℓ` unknown.
    UnknownGains,
    /// Only the rank `J` of each `H_ℓ` is known.
    UnknownSubspace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKnowledge {
    Known,
    CommonUnknown,
    DifferentUnknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KnowledgeSpec {
    pub channel: ChannelKnowledge,
    pub noise: NoiseKnowledge,
}

impl KnowledgeSpec {
    pub fn new(channel: ChannelKnowledge, noise: NoiseKnowledge) -> Self {
        KnowledgeSpec { channel, noise }
    }

    pub fn panel(&self) -> Panel {
        use ChannelKnowledge::*;
        use NoiseKnowledge::*;
        match (self.channel, self.noise) {
            (KnownF, Known) => Panel::P11,
            (KnownF, CommonUnknown) => Panel::P12,
            (KnownF, DifferentUnknown) => Panel::P13,
            (UnknownGains, Known) => Panel::P21,
            (UnknownGains, CommonUnknown) => Panel::P22,
            (UnknownGains, DifferentUnknown) => Panel::P23,
            (UnknownSubspace, Known) => Panel::P31,
            (UnknownSubspace, CommonUnknown) => Panel::P32,
            (UnknownSubspace, DifferentUnknown) => Panel::P33,
        }
    }
}

/// Which data scalings leave a panel's report unchanged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Invariance {
    /// Composite scales by `|c|²` under `Z ← cZ`.
    None,
    /// Unchanged under `Z ← cZ`.
    Composite,
    /// Unchanged under independent `X_ℓ ← c_ℓ X_ℓ`.
    PerChannel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Panel {
    P11,
    P12,
    P13,
    P21,
    P22,
    P23,
    P31,
    P32,
    P33,
}

impl Panel {
    pub const ALL: [Panel; 9] = [
        Panel::P11,
        Panel::P12,
        Panel::P13,
        Panel::P21,
        Panel::P22,
        Panel::P23,
        Panel::P31,
        Panel::P32,
        Panel::P33,
    ];

    pub fn spec(self) -> KnowledgeSpec {
        use ChannelKnowledge::*;
        use NoiseKnowledge::*;
        let (channel, noise) = match self {
            Panel::P11 => (KnownF, Known),
            Panel::P12 => (KnownF, CommonUnknown),
            Panel::P13 => (KnownF, DifferentUnknown),
            Panel::P21 => (UnknownGains, Known),
            Panel::P22 => (UnknownGains, CommonUnknown),
            Panel::P23 => (UnknownGains, DifferentUnknown),
            Panel::P31 => (UnknownSubspace, Known),
            Panel::P32 => (UnknownSubspace, CommonUnknown),
            Panel::P33 => (UnknownSubspace, DifferentUnknown),
        };
        KnowledgeSpec { channel, noise }
    }

    pub fn invariance(self) -> Invariance {
        match self.spec().noise {
            NoiseKnowledge::Known => Invariance::None,
            NoiseKnowledge::CommonUnknown => Invariance::Composite,
            NoiseKnowledge::DifferentUnknown => Invariance::PerChannel,
        }
    }

    /// Panels whose channel matrices are supplied by the caller.
    pub fn uses_known_h(self) -> bool {
        self.spec().channel != ChannelKnowledge::UnknownSubspace
    }
}

impl fmt::Display for Panel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Panel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Panel::ALL
            .into_iter()
            .find(|p| p.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown panel `{s}` (expected P11..P33)")))
    }
}

/// Per-channel statistic used by the last two-panel column of the subspace row.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum P33Variant {
    /// `ln(1 + Σ_{n≤J} λ_n / Σ_{n>J} λ_n)`, the tabulated form; it is also
    /// what compressing the pre-estimation likelihood produces.
    #[default]
    Tabulated,
    /// `ln(1 + Σ_{n≤N} λ_n / Σ_{n>J} λ_n)`, the form displayed in the
    /// derivation text.
    FullTrace,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorOptions {
    #[serde(default)]
    pub p33_variant: P33Variant,
}

/// Why a statistic was saturated or a term zeroed instead of raising.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Degeneracy {
    /// Channel has no energy outside the signal subspace.
    ZeroResidual { channel: usize },
    /// Channel has no energy at all.
    ZeroEnergy { channel: usize },
    /// Matched-filter energy vanished; coherences with this channel set to 0.
    UndefinedCoherence { channel: usize },
}

/// Estimates produced as by-products of a detector.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Auxiliaries {
    /// Estimated gain direction, unit norm, first entry real non-negative.
    #[serde(skip_serializing_if = "Option::is_none", with = "complex_vec")]
    pub gain_direction: Option<Vec<C64>>,
    /// `σ̂²_ℓ(0)` per channel.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_var_h0: Option<Vec<f64>>,
    /// `σ̂²_ℓ(1)` per channel.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_var_h1: Option<Vec<f64>>,
    /// Estimated per-channel dominant subspaces (orthonormal).
    #[serde(skip)]
    pub channel_bases: Option<Vec<ComplexMatrix>>,
    /// Estimated composite dominant subspace (orthonormal).
    #[serde(skip)]
    pub composite_basis: Option<ComplexMatrix>,
}

mod complex_vec {
    use serde::ser::SerializeSeq;
    use serde::Serializer;

    use crate::linalg::C64;

    pub fn serialize<S: Serializer>(v: &Option<Vec<C64>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(v) => {
                let mut seq = s.serialize_seq(Some(v.len()))?;
                for z in v {
                    seq.serialize_element(&[z.re, z.im])?;
                }
                seq.end()
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DetectorReport {
    pub panel: Panel,
    pub composite: f64,
    pub alphas: Vec<f64>,
    pub per_channel: Vec<f64>,
    pub cross_validation: f64,
    pub auxiliaries: Auxiliaries,
    pub flags: Vec<Degeneracy>,
}

impl DetectorReport {
    /// `Σ α_ℓ Λ_ℓ`, skipping zero-weight channels.
    pub fn weighted_sum(&self) -> f64 {
        self.alphas
            .iter()
            .zip(&self.per_channel)
            .filter(|(a, _)| **a != 0.0)
            .map(|(a, l)| a * l)
            .sum()
    }

    /// `|composite − (Σα_ℓΛ_ℓ − V)| / max(1, |composite|)`; zero when both
    /// sides are the same infinity.
    pub fn decomposition_residual(&self) -> f64 {
        let rhs = self.weighted_sum() - self.cross_validation;
        if self.composite.is_infinite() || rhs.is_infinite() {
            return if self.composite == rhs { 0.0 } else { f64::INFINITY };
        }
        (self.composite - rhs).abs() / self.composite.abs().max(1.0)
    }

    pub fn is_degenerate(&self) -> bool {
        !self.flags.is_empty()
    }

    pub fn invariance(&self) -> Invariance {
        self.panel.invariance()
    }
}

pub fn detect(spec: KnowledgeSpec, channels: &[ChannelModel], z: &MeasurementSet) -> Result<DetectorReport> {
    detect_with(spec.panel(), channels, z, &DetectorOptions::default())
}

pub fn detect_with(
    panel: Panel,
    channels: &[ChannelModel],
    z: &MeasurementSet,
    options: &DetectorOptions,
) -> Result<DetectorReport> {
    match panel {
        Panel::P11 => detect_p11(channels, z),
        Panel::P12 => detect_p12(channels, z),
        Panel::P13 => detect_p13(channels, z),
        Panel::P21 => detect_p21(channels, z),
        Panel::P22 => detect_p22(channels, z),
        Panel::P23 => detect_p23(channels, z),
        Panel::P31 => detect_p31(channels, z),
        Panel::P32 => detect_p32(channels, z),
        Panel::P33 => detect_p33_with(channels, z, options.p33_variant),
    }
}

/// Relative level below which residual (out-of-subspace) energy counts as zero.
pub(crate) const RESIDUAL_FLOOR: f64 = 1e-12;

pub(crate) fn uniform_alphas(l: usize) -> Vec<f64> {
    vec![1.0 / l as f64; l]
}

pub(crate) fn dimension_alphas(z: &MeasurementSet) -> Vec<f64> {
    let nz = z.total_dim() as f64;
    z.channel_dims().iter().map(|&n| n as f64 / nz).collect()
}

/// Fully saturated report for panels whose statistic diverges on
/// zero-residual channels.
pub(crate) fn saturated(panel: Panel, alphas: Vec<f64>, per_channel: Vec<f64>, flags: Vec<Degeneracy>) -> DetectorReport {
    DetectorReport {
        panel,
        composite: f64::INFINITY,
        alphas,
        per_channel,
        cross_validation: 0.0,
        auxiliaries: Auxiliaries::default(),
        flags,
    }
}
