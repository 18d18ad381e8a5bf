//! Calibrates a detection threshold on noise-only trials, then checks the
//! false-alarm rate on fresh trials and on data rescaled by a large factor.

use mcglr::detectors::{DetectorOptions, Panel};
use mcglr::error::Result;
use mcglr::harness::{calibrate_threshold, validate_threshold, ChannelSpec, ExperimentSpec, Scenario, SourceSpec};

fn main() -> Result<()> {
    let mut channels = vec![ChannelSpec::new(8), ChannelSpec::new(6), ChannelSpec::new(10)];
    channels[1].sigma2 = 2.0;
    let spec = ExperimentSpec {
        panel: Panel::P12,
        scenario: Scenario {
            carrier_hz: 1e9,
            sample_period_s: 1e-6,
            modes: 1,
            snapshots: 4,
            source: SourceSpec::default(),
            channels,
        },
        snr_db: Vec::new(),
        trials: 10_000,
        seed: 7,
        pfa_targets: Vec::new(),
        options: DetectorOptions::default(),
    };
    for pfa in [0.1, 0.01] {
        let cal = calibrate_threshold(&spec, pfa)?;
        let fresh = ExperimentSpec { seed: 8, ..spec.clone() };
        let holdout = validate_threshold(&fresh, cal.threshold, 1.0)?;
        let scaled = validate_threshold(&fresh, cal.threshold, 100.0)?;
        println!(
            "target {pfa}: threshold {:.6}; holdout pfa {:.4} [{:.4}, {:.4}]; x100 data pfa {:.4}; identical decisions: {}",
            cal.threshold,
            holdout.achieved_pfa,
            holdout.interval.0,
            holdout.interval.1,
            scaled.achieved_pfa,
            holdout.decisions == scaled.decisions
        );
    }
    Ok(())
}
