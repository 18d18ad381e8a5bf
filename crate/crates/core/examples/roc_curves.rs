//! Monte-Carlo ROC curves for the known-gain and scale-invariant detectors
//! at a few SNRs.

use mcglr::detectors::{DetectorOptions, Panel};
use mcglr::error::Result;
use mcglr::harness::{run_roc, ChannelSpec, ExperimentSpec, Scenario, SourceSpec};

fn main() -> Result<()> {
    let mut channels = vec![ChannelSpec::new(16), ChannelSpec::new(16), ChannelSpec::new(8)];
    channels[2].sigma2 = 4.0;
    let scenario = Scenario {
        carrier_hz: 1e9,
        sample_period_s: 1e-6,
        modes: 1,
        snapshots: 8,
        source: SourceSpec::default(),
        channels,
    };
    for panel in [Panel::P11, Panel::P12, Panel::P21, Panel::P32] {
        let spec = ExperimentSpec {
            panel,
            scenario: scenario.clone(),
            snr_db: vec![-10.0, -5.0, 0.0],
            trials: 2000,
            seed: 42,
            pfa_targets: vec![0.1, 0.01],
            options: DetectorOptions::default(),
        };
        for curve in run_roc(&spec)? {
            let points: Vec<String> = curve
                .pfa
                .iter()
                .zip(&curve.pd)
                .map(|(f, d)| format!("({f:.3}, {d:.3})"))
                .collect();
            println!("{panel} @ {:>5.1} dB  AUC {:.3}  (pfa, pd): {}", curve.snr_db, curve.auc, points.join(" "));
        }
    }
    Ok(())
}
