//! Monte-Carlo experiments: null distributions, ROC curves, threshold
//! calibration and likelihood-image scans.
//!
//! Every experiment is a pure function of its [`ExperimentSpec`]. Trials run
//! in parallel, but trial `t` always draws from the same random streams, so
//! summaries are bit-identical across thread counts.

mod instances;
mod scenario;
pub mod stats;

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::ChannelModel;
use crate::detectors::{detect_with, DetectorOptions, Panel};
use crate::error::{Error, Result};
use crate::measurement::{simulate_drawn, simulate_trial, AmplitudeMatrix, Hypothesis, MeasurementSet};
use crate::rng::Domain;

pub use instances::{random_channels, random_instance, InstanceShape};
pub use scenario::{amplitude_power, ChannelSpec, ExperimentSpec, Scenario, SourceSpec, PROPAGATION_SPEED_MPS};
use stats::{ks_one_sample, mean_variance, wilson_interval, KsResult, Reference};

/// Which number of a report an experiment tracks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "channel")]
pub enum Statistic {
    #[default]
    Composite,
    PerChannel(usize),
}

/// Detector output for each trial in `0..trials` of `(seed, domain)`.
///
/// `data_scale` multiplies every data set before detection (for CFAR
/// audits); `amplitude_power = None` simulates H0.
#[allow(clippy::too_many_arguments)]
pub fn trial_statistics(
    panel: Panel,
    channels: &[ChannelModel],
    snapshots: usize,
    options: &DetectorOptions,
    statistic: Statistic,
    amplitude_power: Option<f64>,
    seed: u64,
    domain: Domain,
    trials: usize,
    data_scale: f64,
) -> Result<Vec<f64>> {
    if let Statistic::PerChannel(l) = statistic {
        if l >= channels.len() {
            return Err(Error::Config(format!("statistic channel {l} out of range")));
        }
    }
    (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut z = simulate_drawn(channels, amplitude_power, snapshots, seed, domain, t)?;
            if data_scale != 1.0 {
                z = z.scaled(data_scale);
            }
            let r = detect_with(panel, channels, &z, options)?;
            Ok(match statistic {
                Statistic::Composite => r.composite,
                Statistic::PerChannel(l) => r.per_channel[l],
            })
        })
        .collect()
}

/// Analytic H0 law of a statistic, where one is known.
pub fn reference_distribution(panel: Panel, statistic: Statistic, scenario: &Scenario) -> Option<Reference> {
    let m = scenario.snapshots as f64;
    let j = scenario.modes as f64;
    let l = scenario.channels.len();
    let n = match statistic {
        Statistic::Composite => scenario.total_dim() as f64,
        Statistic::PerChannel(i) => scenario.channels.get(i)?.samples as f64,
    };
    let single = l == 1 || matches!(statistic, Statistic::PerChannel(_));
    let beta = || {
        if n == j {
            Reference::PointMass { value: 1.0 }
        } else {
            Reference::Beta { a: m * j, b: m * (n - j) }
        }
    };
    match panel {
        Panel::P11 => Some(Reference::Gamma {
            shape: m * j,
            rate: if single { m } else { m * l as f64 },
        }),
        Panel::P21 if single => Some(Reference::Gamma { shape: m * j, rate: m }),
        Panel::P12 => Some(beta()),
        Panel::P22 if single => Some(beta()),
        Panel::P13 | Panel::P23 if single && n > j => Some(Reference::LogBeta { a: m * j, b: m * (n - j) }),
        _ => None,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NullSummary {
    pub panel: Panel,
    pub statistic: Statistic,
    /// Trial-ordered samples.
    pub samples: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub reference: Option<Reference>,
    pub ks: Option<KsResult>,
    /// Set when the sample is too small for the KS p-value to be trusted.
    pub warning: Option<String>,
}

impl NullSummary {
    /// Sorted samples with their empirical CDF values `i/n`.
    pub fn empirical_cdf(&self) -> Vec<(f64, f64)> {
        let mut x = self.samples.clone();
        x.sort_by(f64::total_cmp);
        let n = x.len() as f64;
        x.into_iter().enumerate().map(|(i, v)| (v, (i + 1) as f64 / n)).collect()
    }
}

/// Simulates H0 and compares the tracked statistic with its analytic law.
pub fn run_null(spec: &ExperimentSpec, statistic: Statistic) -> Result<NullSummary> {
    spec.validate()?;
    let channels = spec.scenario.build_channels()?;
    let samples = trial_statistics(
        spec.panel,
        &channels,
        spec.scenario.snapshots,
        &spec.options,
        statistic,
        None,
        spec.seed,
        Domain::Null,
        spec.trials,
        1.0,
    )?;
    let (mean, variance) = mean_variance(&samples);
    let reference = reference_distribution(spec.panel, statistic, &spec.scenario);
    let ks = match reference {
        Some(Reference::PointMass { .. }) | None => None,
        Some(r) => Some(ks_one_sample(&samples, |x| r.cdf(x))?),
    };
    let warning = (spec.trials < 100).then(|| format!("only {} trials; KS p-value unreliable", spec.trials));
    Ok(NullSummary {
        panel: spec.panel,
        statistic,
        samples,
        mean,
        variance,
        reference,
        ks,
        warning,
    })
}

/// Empirical ROC at one SNR.
#[derive(Clone, Debug, Serialize)]
pub struct RocCurve {
    pub snr_db: f64,
    /// Ascending.
    pub thresholds: Vec<f64>,
    pub pfa: Vec<f64>,
    pub pd: Vec<f64>,
    pub pfa_halfwidth: Vec<f64>,
    pub pd_halfwidth: Vec<f64>,
    pub trials: usize,
    /// Area under the curve (Mann–Whitney estimate over all samples).
    pub auc: f64,
}

fn exceedances(sample: &[f64], threshold: f64) -> usize {
    sample.iter().filter(|&&v| v > threshold).count()
}

fn halfwidth(k: usize, n: usize) -> f64 {
    let (lo, hi) = wilson_interval(k, n);
    0.5 * (hi - lo)
}

/// `P(H1 > H0) + ½ P(H1 = H0)`.
pub fn auc(h0: &[f64], h1: &[f64]) -> f64 {
    let mut x = h0.to_vec();
    x.sort_by(f64::total_cmp);
    let mut wins = 0.0;
    for &v in h1 {
        let below = x.partition_point(|&u| u < v);
        let not_above = x.partition_point(|&u| u <= v);
        wins += below as f64 + 0.5 * (not_above - below) as f64;
    }
    wins / (h0.len() as f64 * h1.len() as f64)
}

/// Trials needed before a false-alarm target can be calibrated.
pub fn required_trials(pfa: f64) -> usize {
    (10.0 / pfa).ceil() as usize
}

fn check_trials(pfa: f64, available: usize) -> Result<()> {
    let required = required_trials(pfa);
    if available < required {
        return Err(Error::InsufficientTrials { pfa, required, available });
    }
    Ok(())
}

/// Threshold giving exactly `⌊pfa·n⌋` exceedances in `h0`: the midpoint of
/// the k-th and (k+1)-th largest values.
pub fn quantile_threshold(h0: &[f64], pfa: f64) -> Result<f64> {
    check_trials(pfa, h0.len())?;
    let mut v = h0.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let k = (pfa * v.len() as f64).floor() as usize;
    let (hi, lo) = (v[k - 1], v[k]);
    Ok(if hi.is_infinite() || lo.is_infinite() { lo } else { 0.5 * (hi + lo) })
}

/// ROC curves at each configured SNR, thresholds from H0 quantiles at the
/// spec's false-alarm targets.
pub fn run_roc(spec: &ExperimentSpec) -> Result<Vec<RocCurve>> {
    spec.validate()?;
    let targets = if spec.pfa_targets.is_empty() {
        vec![0.5, 0.2, 0.1, 0.05]
    } else {
        spec.pfa_targets.clone()
    };
    let smallest = targets.iter().copied().fold(1.0, f64::min);
    check_trials(smallest, spec.trials)?;
    let channels = spec.scenario.build_channels()?;
    let run = |power: Option<f64>, domain| {
        trial_statistics(
            spec.panel,
            &channels,
            spec.scenario.snapshots,
            &spec.options,
            Statistic::Composite,
            power,
            spec.seed,
            domain,
            spec.trials,
            1.0,
        )
    };
    let h0 = run(None, Domain::Null)?;
    let mut thresholds = targets
        .iter()
        .map(|&p| quantile_threshold(&h0, p))
        .collect::<Result<Vec<_>>>()?;
    thresholds.sort_by(f64::total_cmp);
    let n = spec.trials;
    spec.snr_db
        .iter()
        .map(|&snr| {
            let h1 = run(Some(amplitude_power(&channels, snr)), Domain::Alternative)?;
            let k0: Vec<usize> = thresholds.iter().map(|&t| exceedances(&h0, t)).collect();
            let k1: Vec<usize> = thresholds.iter().map(|&t| exceedances(&h1, t)).collect();
            Ok(RocCurve {
                snr_db: snr,
                thresholds: thresholds.clone(),
                pfa: k0.iter().map(|&k| k as f64 / n as f64).collect(),
                pd: k1.iter().map(|&k| k as f64 / n as f64).collect(),
                pfa_halfwidth: k0.iter().map(|&k| halfwidth(k, n)).collect(),
                pd_halfwidth: k1.iter().map(|&k| halfwidth(k, n)).collect(),
                trials: n,
                auc: auc(&h0, &h1),
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Calibration {
    pub pfa_target: f64,
    pub threshold: f64,
    pub trials: usize,
    pub exceedances: usize,
    pub achieved_pfa: f64,
    /// Wilson 95% interval on the achieved false-alarm rate.
    pub interval: (f64, f64),
}

/// Threshold for `pfa` from `spec.trials` H0 draws of the composite.
pub fn calibrate_threshold(spec: &ExperimentSpec, pfa: f64) -> Result<Calibration> {
    spec.validate()?;
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(Error::Config(format!("pfa {pfa} is outside (0, 1)")));
    }
    check_trials(pfa, spec.trials)?;
    let channels = spec.scenario.build_channels()?;
    let h0 = trial_statistics(
        spec.panel,
        &channels,
        spec.scenario.snapshots,
        &spec.options,
        Statistic::Composite,
        None,
        spec.seed,
        Domain::Calibrate,
        spec.trials,
        1.0,
    )?;
    let threshold = quantile_threshold(&h0, pfa)?;
    let k = exceedances(&h0, threshold);
    Ok(Calibration {
        pfa_target: pfa,
        threshold,
        trials: spec.trials,
        exceedances: k,
        achieved_pfa: k as f64 / spec.trials as f64,
        interval: wilson_interval(k, spec.trials),
    })
}

/// Outcome of applying a fixed threshold to fresh H0 data.
#[derive(Clone, Debug, Serialize)]
pub struct Holdout {
    pub threshold: f64,
    pub data_scale: f64,
    pub trials: usize,
    pub exceedances: usize,
    pub achieved_pfa: f64,
    pub interval: (f64, f64),
    /// Per-trial detection decisions.
    #[serde(skip)]
    pub decisions: Vec<bool>,
}

/// Applies `threshold` to `spec.trials` fresh H0 draws (holdout streams of
/// `spec.seed`), each scaled by `data_scale`.
pub fn validate_threshold(spec: &ExperimentSpec, threshold: f64, data_scale: f64) -> Result<Holdout> {
    spec.validate()?;
    let channels = spec.scenario.build_channels()?;
    let h0 = trial_statistics(
        spec.panel,
        &channels,
        spec.scenario.snapshots,
        &spec.options,
        Statistic::Composite,
        None,
        spec.seed,
        Domain::Holdout,
        spec.trials,
        data_scale,
    )?;
    let decisions: Vec<bool> = h0.iter().map(|&v| v > threshold).collect();
    let k = decisions.iter().filter(|&&d| d).count();
    Ok(Holdout {
        threshold,
        data_scale,
        trials: spec.trials,
        exceedances: k,
        achieved_pfa: k as f64 / spec.trials as f64,
        interval: wilson_interval(k, spec.trials),
        decisions,
    })
}

/// Hypothesized source parameters to scan.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanGrid {
    pub tau0_s: Vec<f64>,
    pub doppler_hz: Vec<f64>,
}

impl ScanGrid {
    /// `count` evenly spaced values `start + k·step` on each axis.
    pub fn regular(tau_start: f64, tau_step: f64, tau_count: usize, nu_start: f64, nu_step: f64, nu_count: usize) -> Self {
        ScanGrid {
            tau0_s: (0..tau_count).map(|k| tau_start + k as f64 * tau_step).collect(),
            doppler_hz: (0..nu_count).map(|k| nu_start + k as f64 * nu_step).collect(),
        }
    }
}

/// Detector statistic over a `(τ₀, ν)` grid.
#[derive(Clone, Debug, Serialize)]
pub struct LikelihoodImage {
    pub panel: Panel,
    pub tau0_s: Vec<f64>,
    pub doppler_hz: Vec<f64>,
    /// Row-major: `values[i·len(ν) + j]` is cell `(τ₀[i], ν[j])`.
    pub values: Vec<f64>,
    /// `(i, j)` of the largest value.
    pub argmax: (usize, usize),
}

impl LikelihoodImage {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.doppler_hz.len() + j]
    }

    /// Cells strictly greater than all of their (up to eight) neighbours.
    pub fn local_maxima(&self) -> Vec<(usize, usize)> {
        let (nt, nn) = (self.tau0_s.len(), self.doppler_hz.len());
        let mut out = Vec::new();
        for i in 0..nt {
            for j in 0..nn {
                let v = self.value(i, j);
                let mut is_max = true;
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let (a, b) = (i as i64 + di, j as i64 + dj);
                        if a >= 0 && b >= 0 && (a as usize) < nt && (b as usize) < nn && self.value(a as usize, b as usize) >= v {
                            is_max = false;
                        }
                    }
                }
                if is_max {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Rebuilds the scenario's channels at each grid cell and evaluates `panel`
/// on `z`.
pub fn scan_likelihood_image(
    panel: Panel,
    scenario: &Scenario,
    z: &MeasurementSet,
    grid: &ScanGrid,
    options: &DetectorOptions,
) -> Result<LikelihoodImage> {
    if !panel.uses_known_h() {
        return Err(Error::Config(format!("{panel} does not use hypothesized channel matrices")));
    }
    if grid.tau0_s.is_empty() || grid.doppler_hz.is_empty() {
        return Err(Error::Domain("scan grid is empty".into()));
    }
    let nn = grid.doppler_hz.len();
    let values = (0..grid.tau0_s.len() * nn)
        .into_par_iter()
        .map(|cell| {
            let channels = scenario.build_channels_at(grid.tau0_s[cell / nn], grid.doppler_hz[cell % nn])?;
            Ok(detect_with(panel, &channels, z, options)?.composite)
        })
        .collect::<Result<Vec<f64>>>()?;
    let best = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .expect("non-empty grid");
    Ok(LikelihoodImage {
        panel,
        tau0_s: grid.tau0_s.clone(),
        doppler_hz: grid.doppler_hz.clone(),
        values,
        argmax: (best / nn, best % nn),
    })
}

/// One data set for the scenario's configured source, with the amplitudes
/// drawn for it; `snr_db = None` draws noise only.
pub fn simulate_scenario(
    scenario: &Scenario,
    snr_db: Option<f64>,
    seed: u64,
    trial: u64,
) -> Result<(MeasurementSet, Option<AmplitudeMatrix>)> {
    let channels = scenario.build_channels()?;
    let hyp = match snr_db {
        None => Hypothesis::Null,
        Some(s) => {
            let mut rng = crate::rng::stream(seed, Domain::Simulate, 0, trial);
            let power = amplitude_power(&channels, s);
            Hypothesis::Signal(AmplitudeMatrix::random(scenario.modes, scenario.snapshots, power, &mut rng))
        }
    };
    let z = simulate_trial(&channels, &hyp, scenario.snapshots, seed, Domain::Simulate, trial)?;
    Ok((z, match hyp {
        Hypothesis::Null => None,
        Hypothesis::Signal(a) => Some(a),
    }))
}
