//! Random detector inputs for property checks and invariance audits.

use rand::Rng;

use crate::channel::ChannelModel;
use crate::detectors::{ChannelKnowledge, Panel};
use crate::error::Result;
use crate::linalg::{CMat, ComplexMatrix, C64};
use crate::measurement::{simulate_trial, AmplitudeMatrix, Hypothesis, MeasurementSet};
use crate::rng::{complex_gaussian, Domain};

/// Shape of a random instance.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceShape {
    /// `N_ℓ` per channel.
    pub dims: Vec<usize>,
    /// `J`.
    pub modes: usize,
    /// `M`.
    pub snapshots: usize,
}

impl InstanceShape {
    /// `L ∈ {1,2,3,5}`, `N_ℓ ∈ 4..=16`, `J ∈ 1..=3`, `M ∈ J..=12`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let l = [1, 2, 3, 5][rng.random_range(0..4)];
        let modes = rng.random_range(1..=3);
        InstanceShape {
            dims: (0..l).map(|_| rng.random_range(4..=16)).collect(),
            modes,
            snapshots: rng.random_range(modes..=12),
        }
    }
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let data: Vec<C64> = (0..rows * cols).map(|_| complex_gaussian(rng, 1.0)).collect();
    CMat::from_vec(rows, cols, data)
}

/// Random channel models: orthonormal `H_ℓ` when `orthonormal`, otherwise
/// Gaussian `H_ℓ` normalized to `tr(HᴴH) = J`; complex gains and noise
/// variances in `[0.25, 4]`.
pub fn random_channels<R: Rng + ?Sized>(shape: &InstanceShape, orthonormal: bool, rng: &mut R) -> Result<Vec<ChannelModel>> {
    shape
        .dims
        .iter()
        .map(|&n| {
            let raw = gaussian_matrix(n, shape.modes, rng);
            let h = if orthonormal {
                ComplexMatrix::new(raw.qr().q())?
            } else {
                crate::channel::normalize_channel(&ComplexMatrix::new(raw)?)?
            };
            let gain = C64::from_polar(rng.random_range(0.5..2.0), rng.random_range(0.0..std::f64::consts::TAU));
            let sigma2 = 4f64.powf(rng.random_range(-1.0..1.0));
            ChannelModel::new(h, gain, sigma2)
        })
        .collect()
}

/// A random valid input for `panel`: channels appropriate to the panel's
/// knowledge row and data drawn under H1 at a random SNR in `[−10, 10]` dB.
pub fn random_instance<R: Rng + ?Sized>(
    panel: Panel,
    shape: &InstanceShape,
    rng: &mut R,
) -> Result<(Vec<ChannelModel>, MeasurementSet)> {
    let orthonormal = panel.spec().channel == ChannelKnowledge::UnknownGains;
    let channels = random_channels(shape, orthonormal, rng)?;
    let snr_db = rng.random_range(-10.0..10.0);
    let power = super::scenario::amplitude_power(&channels, snr_db);
    let a = AmplitudeMatrix::random(shape.modes, shape.snapshots, power, rng);
    let seed: u64 = rng.random();
    let z = simulate_trial(&channels, &Hypothesis::Signal(a), shape.snapshots, seed, Domain::Simulate, 0)?;
    Ok((channels, z))
}
