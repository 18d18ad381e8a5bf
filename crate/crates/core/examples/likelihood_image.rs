//! Scans a delay–Doppler grid with a known-channel detector and prints the
//! likelihood image as a coarse character map.

use mcglr::detectors::{DetectorOptions, Panel};
use mcglr::error::Result;
use mcglr::harness::{scan_likelihood_image, simulate_scenario, ChannelSpec, ScanGrid, Scenario, SourceSpec};

fn main() -> Result<()> {
    let (fc, ts, n) = (1e9, 1e-6, 16);
    let dnu = 0.5 / (ts * n as f64);
    let dtau = 1.0 / (11.0 * fc);
    let scenario = Scenario {
        carrier_hz: fc,
        sample_period_s: ts,
        modes: 1,
        snapshots: 16,
        source: SourceSpec { tau0_s: 3.0 * dtau, doppler_hz: Some(7.0 * dnu), radial_velocity_mps: None },
        channels: (0..3).map(|_| ChannelSpec::new(n)).collect(),
    };
    let (z, _) = simulate_scenario(&scenario, Some(5.0), 5, 0)?;
    let grid = ScanGrid::regular(0.0, dtau, 11, 0.0, dnu, 11);

    for panel in [Panel::P11, Panel::P12] {
        let image = scan_likelihood_image(panel, &scenario, &z, &grid, &DetectorOptions::default())?;
        let peak = image.value(image.argmax.0, image.argmax.1);
        println!("{panel}: argmax cell {:?} (source at (3, 7)), peak {:.4}", image.argmax, peak);
        let shades = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
        for i in 0..grid.tau0_s.len() {
            let row: String = (0..grid.doppler_hz.len())
                .map(|j| shades[((image.value(i, j) / peak) * 9.0).round() as usize])
                .collect();
            println!("  tau {:>2} |{row}|", i);
        }
        println!("  local maxima: {:?}", image.local_maxima());
    }
    Ok(())
}
