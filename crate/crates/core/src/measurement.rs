//! Snapshot data, blocked sample covariances, synthesis and ML amplitudes.

use rayon::prelude::*;

use crate::channel::{common_modes, ChannelModel};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, hpd_inverse, check_full_column_rank, CMat, ComplexMatrix, C64};
use crate::rng::{complex_gaussian, stream, Domain};

/// Per-channel snapshot blocks `X_ℓ` (each `N_ℓ × M`), stacked as `Z`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    blocks: Vec<ComplexMatrix>,
}

impl MeasurementSet {
    pub fn new(blocks: Vec<ComplexMatrix>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::Domain("measurement set has no channels".into()))?;
        let m = first.cols();
        if m == 0 {
            return Err(Error::Domain("measurement set has no snapshots".into()));
        }
        for (idx, b) in blocks.iter().enumerate() {
            if b.cols() != m {
                return Err(Error::dim(format!("snapshot count of block {idx}"), m, b.cols()));
            }
            if b.rows() == 0 {
                return Err(Error::Domain(format!("block {idx} has no rows")));
            }
        }
        Ok(MeasurementSet { blocks })
    }

    pub fn blocks(&self) -> &[ComplexMatrix] {
        &self.blocks
    }

    pub fn block(&self, channel: usize) -> &ComplexMatrix {
        &self.blocks[channel]
    }

    pub fn channels(&self) -> usize {
        self.blocks.len()
    }

    /// `M`.
    pub fn snapshots(&self) -> usize {
        self.blocks[0].cols()
    }

    pub fn channel_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.rows()).collect()
    }

    /// `N_Z = Σ N_ℓ`.
    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.rows()).sum()
    }

    /// The stacked `N_Z × M` matrix `Z`.
    pub fn stacked(&self) -> ComplexMatrix {
        let refs: Vec<&ComplexMatrix> = self.blocks.iter().collect();
        ComplexMatrix::vstack(&refs).expect("blocks share M")
    }

    /// `Z ← cZ`.
    pub fn scaled(&self, c: f64) -> Self {
        MeasurementSet {
            blocks: self.blocks.iter().map(|b| b.scaled(c)).collect(),
        }
    }

    /// `X_ℓ ← c_ℓ X_ℓ` for each channel independently.
    pub fn scaled_per_channel(&self, c: &[f64]) -> Result<Self> {
        if c.len() != self.channels() {
            return Err(Error::dim("per-channel scale count", self.channels(), c.len()));
        }
        Ok(MeasurementSet {
            blocks: self.blocks.iter().zip(c).map(|(b, &s)| b.scaled(s)).collect(),
        })
    }

    /// `X_ℓ / σ_ℓ`.
    pub fn whitened(&self, sigmas: &[f64]) -> Result<Self> {
        if sigmas.len() != self.channels() {
            return Err(Error::dim("noise scale count", self.channels(), sigmas.len()));
        }
        let blocks = self
            .blocks
            .iter()
            .zip(sigmas)
            .map(|(b, &s)| crate::linalg::whiten(b, s))
            .collect::<Result<_>>()?;
        Ok(MeasurementSet { blocks })
    }

    /// Keeps only the listed channels, in the given order.
    pub fn subset(&self, channels: &[usize]) -> Result<Self> {
        let blocks = channels
            .iter()
            .map(|&i| {
                self.blocks
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Domain(format!("channel {i} out of range")))
            })
            .collect::<Result<_>>()?;
        MeasurementSet::new(blocks)
    }

    /// Checks block heights against channel models.
    pub fn check_against(&self, channels: &[ChannelModel]) -> Result<()> {
        if channels.len() != self.channels() {
            return Err(Error::dim("channel count", channels.len(), self.channels()));
        }
        for (idx, (c, b)) in channels.iter().zip(&self.blocks).enumerate() {
            if c.samples() != b.rows() {
                return Err(Error::dim(format!("rows of block {idx}"), c.samples(), b.rows()));
            }
        }
        Ok(())
    }
}

/// Blocked `S = ZZᴴ/M`.
#[derive(Clone, Debug)]
pub struct SampleCovariance {
    full: CMat,
    dims: Vec<usize>,
    offsets: Vec<usize>,
    snapshots: usize,
}

pub fn sample_covariance(z: &MeasurementSet) -> SampleCovariance {
    let stacked = z.stacked();
    let m = z.snapshots();
    let zm = stacked.as_matrix();
    let s = (zm * zm.adjoint()).map(|v| v / m as f64);
    let s = (&s + s.adjoint()).map(|v| v * 0.5);
    SampleCovariance::from_parts(s, z.channel_dims(), m)
}

impl SampleCovariance {
    fn from_parts(full: CMat, dims: Vec<usize>, snapshots: usize) -> Self {
        let offsets = dims
            .iter()
            .scan(0, |acc, &d| {
                let o = *acc;
                *acc += d;
                Some(o)
            })
            .collect();
        SampleCovariance {
            full,
            dims,
            offsets,
            snapshots,
        }
    }

    pub fn snapshots(&self) -> usize {
        self.snapshots
    }

    pub fn channel_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn channels(&self) -> usize {
        self.dims.len()
    }

    /// The full `N_Z × N_Z` matrix.
    pub fn full(&self) -> ComplexMatrix {
        ComplexMatrix::wrap(self.full.clone()).expect("finite data")
    }

    pub(crate) fn full_ref(&self) -> &CMat {
        &self.full
    }

    /// `S_ij`.
    pub fn block(&self, i: usize, j: usize) -> ComplexMatrix {
        ComplexMatrix::wrap(self.block_inner(i, j)).expect("finite data")
    }

    pub(crate) fn block_inner(&self, i: usize, j: usize) -> CMat {
        self.full
            .view((self.offsets[i], self.offsets[j]), (self.dims[i], self.dims[j]))
            .into_owned()
    }

    pub fn trace(&self) -> f64 {
        self.full.trace().re
    }

    /// `tr(S_ℓℓ)`.
    pub fn block_trace(&self, l: usize) -> f64 {
        let o = self.offsets[l];
        (o..o + self.dims[l]).map(|i| self.full[(i, i)].re).sum()
    }

    /// `S̃_ij = S_ij / (σ_i σ_j)` for every block.
    pub fn whitened(&self, sigmas: &[f64]) -> Result<Self> {
        if sigmas.len() != self.channels() {
            return Err(Error::dim("noise scale count", self.channels(), sigmas.len()));
        }
        if let Some(s) = sigmas.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(Error::Domain(format!("whitening scale must be positive, got {s}")));
        }
        let per_row: Vec<f64> = self
            .dims
            .iter()
            .zip(sigmas)
            .flat_map(|(&d, &s)| std::iter::repeat_n(1.0 / s, d))
            .collect();
        let full = CMat::from_fn(self.full.nrows(), self.full.ncols(), |r, c| {
            self.full[(r, c)] * (per_row[r] * per_row[c])
        });
        Ok(SampleCovariance::from_parts(full, self.dims.clone(), self.snapshots))
    }
}

/// Signal amplitudes `A` (`J × M`).
#[derive(Clone, Debug, PartialEq)]
pub struct AmplitudeMatrix(ComplexMatrix);

impl AmplitudeMatrix {
    pub fn new(a: ComplexMatrix) -> Result<Self> {
        if a.rows() == 0 || a.cols() == 0 {
            return Err(Error::Domain("amplitude matrix must be non-empty".into()));
        }
        Ok(AmplitudeMatrix(a))
    }

    /// i.i.d. `CN(0, power)` entries drawn from `rng`.
    pub fn random<R: rand::Rng + ?Sized>(modes: usize, snapshots: usize, power: f64, rng: &mut R) -> Self {
        let data: Vec<C64> = (0..modes * snapshots)
            .map(|_| complex_gaussian(rng, power))
            .collect();
        AmplitudeMatrix(ComplexMatrix::wrap(CMat::from_vec(modes, snapshots, data)).expect("finite draws"))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn modes(&self) -> usize {
        self.0.rows()
    }

    pub fn snapshots(&self) -> usize {
        self.0.cols()
    }
}

#[derive(Clone, Debug)]
pub enum Hypothesis {
    /// Noise only.
    Null,
    /// Signal with the given amplitudes plus noise.
    Signal(AmplitudeMatrix),
}

/// `g_ℓ H_ℓ A` for each channel, without noise.
pub fn noise_free(channels: &[ChannelModel], a: &AmplitudeMatrix) -> Result<MeasurementSet> {
    let j = common_modes(channels)?;
    if a.modes() != j {
        return Err(Error::Config(format!(
            "amplitudes have J = {}, channels have J = {j}",
            a.modes()
        )));
    }
    let blocks = channels
        .iter()
        .map(|c| ComplexMatrix::wrap((c.h().as_matrix() * a.matrix().as_matrix()).map(|z| z * c.gain())))
        .collect::<Result<_>>()?;
    MeasurementSet::new(blocks)
}

/// One trial of synthetic data. Channel `ℓ`'s noise comes from lane `ℓ + 1`
/// of `(seed, domain)` at stream `trial`.
pub fn simulate_trial(
    channels: &[ChannelModel],
    hypothesis: &Hypothesis,
    snapshots: usize,
    seed: u64,
    domain: Domain,
    trial: u64,
) -> Result<MeasurementSet> {
    common_modes(channels)?;
    if snapshots == 0 {
        return Err(Error::Config("snapshot count must be at least 1".into()));
    }
    let signal = match hypothesis {
        Hypothesis::Null => None,
        Hypothesis::Signal(a) => {
            if a.snapshots() != snapshots {
                return Err(Error::Config(format!(
                    "amplitudes have M = {}, requested M = {snapshots}",
                    a.snapshots()
                )));
            }
            Some(noise_free(channels, a)?)
        }
    };
    let blocks = channels
        .iter()
        .enumerate()
        .map(|(l, c)| {
            let mut rng = stream(seed, domain, l as u64 + 1, trial);
            let n = c.samples();
            let noise: Vec<C64> = (0..n * snapshots)
                .map(|_| complex_gaussian(&mut rng, c.sigma2()))
                .collect();
            let mut x = CMat::from_vec(n, snapshots, noise);
            if let Some(s) = &signal {
                x += s.block(l).as_matrix();
            }
            ComplexMatrix::wrap(x)
        })
        .collect::<Result<_>>()?;
    MeasurementSet::new(blocks)
}

/// `X_ℓ = g_ℓ H_ℓ A + U_ℓ`, deterministic given `seed`.
pub fn simulate(
    channels: &[ChannelModel],
    hypothesis: &Hypothesis,
    snapshots: usize,
    seed: u64,
) -> Result<MeasurementSet> {
    simulate_trial(channels, hypothesis, snapshots, seed, Domain::Simulate, 0)
}

/// Trial `trial` of `(seed, domain)`: amplitudes `CN(0, p)` from lane 0 when
/// `amplitude_power = Some(p)`, pure noise otherwise.
pub fn simulate_drawn(
    channels: &[ChannelModel],
    amplitude_power: Option<f64>,
    snapshots: usize,
    seed: u64,
    domain: Domain,
    trial: u64,
) -> Result<MeasurementSet> {
    let j = common_modes(channels)?;
    let hyp = match amplitude_power {
        None => Hypothesis::Null,
        Some(p) => {
            let mut rng = stream(seed, domain, 0, trial);
            Hypothesis::Signal(AmplitudeMatrix::random(j, snapshots, p, &mut rng))
        }
    };
    simulate_trial(channels, &hyp, snapshots, seed, domain, trial)
}

/// Draws `trials` independent data sets in parallel; output order matches
/// trial index regardless of scheduling.
pub fn simulate_batch(
    channels: &[ChannelModel],
    amplitude_power: Option<f64>,
    snapshots: usize,
    seed: u64,
    domain: Domain,
    trials: usize,
) -> Result<Vec<MeasurementSet>> {
    common_modes(channels)?;
    (0..trials as u64)
        .into_par_iter()
        .map(|t| simulate_drawn(channels, amplitude_power, snapshots, seed, domain, t))
        .collect()
}

/// Least squares `(BᴴB)⁻¹BᴴY` together with `(BᴴB)⁻¹`.
pub(crate) fn least_squares(b: &CMat, y: &CMat, what: &str) -> Result<(CMat, CMat)> {
    check_full_column_rank(b, what)?;
    let q = hpd_inverse(&(b.adjoint() * b), what)?;
    let coef = &q * (b.adjoint() * y);
    Ok((coef, q))
}

/// `Â = (F̃ᴴF̃)⁻¹F̃ᴴZ̃`.
pub fn ml_amplitudes(f_whitened: &ComplexMatrix, z_whitened: &MeasurementSet) -> Result<AmplitudeMatrix> {
    let z = z_whitened.stacked();
    if f_whitened.rows() != z.rows() {
        return Err(Error::dim("rows of composite channel", z.rows(), f_whitened.rows()));
    }
    let (a, _) = least_squares(f_whitened.as_matrix(), z.as_matrix(), "whitened composite channel")?;
    AmplitudeMatrix::new(ComplexMatrix::wrap(a)?)
}

/// Per-channel `Â_ℓ` from block `ℓ` alone, using `(g_ℓ/σ_ℓ)H_ℓ` and `X_ℓ/σ_ℓ`.
pub fn ml_amplitudes_per_channel(
    channels: &[ChannelModel],
    z: &MeasurementSet,
) -> Result<Vec<AmplitudeMatrix>> {
    z.check_against(channels)?;
    channels
        .iter()
        .zip(z.blocks())
        .map(|(c, x)| {
            let s = c.sigma();
            let b = c.h().as_matrix().map(|v| v * c.gain() / s);
            let y = x.as_matrix().map(|v| v / s);
            let (a, _) = least_squares(&b, &y, "whitened channel matrix")?;
            AmplitudeMatrix::new(ComplexMatrix::wrap(a)?)
        })
        .collect()
}

/// Maps colored noise with covariance `Σ` to white noise: `x ← Σ^{-1/2} x`.
#[derive(Clone, Debug)]
pub struct Prewhitener {
    inv_sqrt: ComplexMatrix,
}

impl Prewhitener {
    pub fn new(noise_covariance: &ComplexMatrix) -> Result<Self> {
        let eig = hermitian_eig(noise_covariance)?;
        let lmax = eig.eigenvalues.first().copied().unwrap_or(0.0);
        if eig.eigenvalues.iter().any(|&l| !(l > 1e-12 * lmax)) {
            return Err(Error::Singular("noise covariance is not positive definite".into()));
        }
        let u = eig.eigenvectors.as_matrix();
        let mut scaled = u.clone();
        for (mut col, &l) in scaled.column_iter_mut().zip(&eig.eigenvalues) {
            col.iter_mut().for_each(|z| *z /= l.sqrt());
        }
        Ok(Prewhitener {
            inv_sqrt: ComplexMatrix::wrap(scaled * u.adjoint())?,
        })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.inv_sqrt
    }

    /// Applies `Σ^{-1/2}` on the left; works for both data blocks and channel matrices.
    pub fn apply(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.inv_sqrt.mul(x)
    }
}
