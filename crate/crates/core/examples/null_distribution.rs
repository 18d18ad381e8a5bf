//! Simulates noise-only data and compares statistics with their analytic
//! null laws using a Kolmogorov–Smirnov test.

use mcglr::detectors::{DetectorOptions, Panel};
use mcglr::error::Result;
use mcglr::harness::{run_null, ChannelSpec, ExperimentSpec, Scenario, SourceSpec, Statistic};

fn main() -> Result<()> {
    let scenario = Scenario {
        carrier_hz: 1e9,
        sample_period_s: 1e-6,
        modes: 1,
        snapshots: 4,
        source: SourceSpec::default(),
        channels: vec![ChannelSpec::new(8), ChannelSpec::new(12)],
    };
    for (panel, statistic) in [
        (Panel::P11, Statistic::Composite),
        (Panel::P11, Statistic::PerChannel(1)),
        (Panel::P12, Statistic::PerChannel(0)),
        (Panel::P13, Statistic::PerChannel(0)),
        (Panel::P22, Statistic::PerChannel(1)),
    ] {
        let spec = ExperimentSpec {
            panel,
            scenario: scenario.clone(),
            snr_db: Vec::new(),
            trials: 5000,
            seed: 1,
            pfa_targets: Vec::new(),
            options: DetectorOptions::default(),
        };
        let s = run_null(&spec, statistic)?;
        let reference = s.reference.as_ref().map_or("none".to_string(), |r| format!("{r:?}"));
        let (em, ev) = s.reference.as_ref().map_or((f64::NAN, f64::NAN), |r| r.moments());
        print!("{panel} {statistic:?}: mean {:.4} (law {:.4}), var {:.5} (law {:.5}), {reference}", s.mean, em, s.variance, ev);
        match s.ks {
            Some(ks) => println!(", KS D={:.4} p={:.3}", ks.statistic, ks.p_value),
            None => println!(),
        }
    }
    Ok(())
}
