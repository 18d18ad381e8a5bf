//! Runs all nine detectors on one simulated data set and prints each
//! composite next to its decomposition `Σ α_ℓ Λ_ℓ − V`.

use mcglr::detectors::{detect_with, DetectorOptions, Panel};
use mcglr::error::Result;
use mcglr::harness::{simulate_scenario, ChannelSpec, Scenario, SourceSpec};

const PANELS: [Panel; 9] = [
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

fn main() -> Result<()> {
    let mut channels = vec![ChannelSpec::new(12), ChannelSpec::new(8), ChannelSpec::new(10)];
    channels[1].sigma2 = 3.0;
    channels[2].gain = [0.4, -0.9];
    let scenario = Scenario {
        carrier_hz: 2.4e9,
        sample_period_s: 5e-7,
        modes: 1,
        snapshots: 6,
        source: SourceSpec { tau0_s: 1e-10, doppler_hz: Some(2e4), radial_velocity_mps: None },
        channels,
    };
    let models = scenario.build_channels()?;
    let (z, _) = simulate_scenario(&scenario, Some(0.0), 2024, 0)?;

    println!("{:<5} {:>12} {:>12} {:>12} {:>10}  alphas", "panel", "composite", "sum a*L", "V", "residual");
    for panel in PANELS {
        let r = detect_with(panel, &models, &z, &DetectorOptions::default())?;
        let alphas: Vec<String> = r.alphas.iter().map(|a| format!("{a:.3}")).collect();
        println!(
            "{:<5} {:>12.6} {:>12.6} {:>12.6} {:>10.2e}  [{}]{}",
            panel.to_string(),
            r.composite,
            r.weighted_sum(),
            r.cross_validation,
            r.decomposition_residual(),
            alphas.join(", "),
            if r.is_degenerate() { "  (degenerate)" } else { "" }
        );
    }
    Ok(())
}
