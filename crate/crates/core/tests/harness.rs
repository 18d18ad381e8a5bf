use mcglr::detectors::{DetectorOptions, Panel};
use mcglr::error::Error;
use mcglr::harness::stats::Reference;
use mcglr::harness::{
    amplitude_power, auc, calibrate_threshold, quantile_threshold, required_trials, run_null, run_roc,
    scan_likelihood_image, simulate_scenario, trial_statistics, validate_threshold, ChannelSpec, ExperimentSpec,
    ScanGrid, Scenario, SourceSpec, Statistic,
};
use mcglr::measurement::{noise_free, simulate_trial, AmplitudeMatrix, Hypothesis, MeasurementSet};
use mcglr::rng::Domain;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn scenario(dims: &[usize], modes: usize, snapshots: usize) -> Scenario {
    Scenario {
        carrier_hz: 1e9,
        sample_period_s: 1e-6,
        modes,
        snapshots,
        source: SourceSpec::default(),
        channels: dims.iter().map(|&n| ChannelSpec::new(n)).collect(),
    }
}

fn spec(panel: Panel, trials: usize) -> ExperimentSpec {
    ExperimentSpec {
        panel,
        scenario: scenario(&[8, 6], 1, 4),
        snr_db: vec![-5.0],
        trials,
        seed: 5,
        pfa_targets: vec![0.1],
        options: DetectorOptions::default(),
    }
}

#[test]
fn known_gain_composite_follows_gamma_law() {
    let s = spec(Panel::P11, 4000);
    let null = run_null(&s, Statistic::Composite).unwrap();
    assert_eq!(null.reference, Some(Reference::Gamma { shape: 4.0, rate: 8.0 }));
    let ks = null.ks.unwrap();
    assert!(ks.p_value > 0.01, "KS p = {}", ks.p_value);
    assert!((null.mean - 0.5).abs() < 0.02);
    assert!(null.warning.is_none());
    let small = run_null(&spec(Panel::P11, 50), Statistic::Composite).unwrap();
    assert!(small.warning.is_some());
}

#[test]
fn roc_is_monotone_and_better_than_chance() {
    let s = spec(Panel::P12, 1000);
    let curves = run_roc(&s).unwrap();
    assert_eq!(curves.len(), 1);
    let c = &curves[0];
    assert!(c.thresholds.windows(2).all(|w| w[0] <= w[1]));
    assert!(c.pfa.windows(2).all(|w| w[0] >= w[1]));
    assert!(c.pd.windows(2).all(|w| w[0] >= w[1]));
    assert!(c.auc > 0.6 && c.auc <= 1.0, "auc {}", c.auc);
}

#[test]
fn auc_and_quantile_threshold_on_hand_samples() {
    assert_eq!(auc(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
    assert_eq!(auc(&[3.0, 4.0], &[1.0, 2.0]), 0.0);
    assert_eq!(auc(&[1.0, 2.0], &[1.0, 2.0]), 0.5);
    let h0: Vec<f64> = (1..=100).map(f64::from).collect();
    // Ten values above the threshold: midpoint of the 10th and 11th largest.
    assert_eq!(quantile_threshold(&h0, 0.1).unwrap(), 90.5);
    assert_eq!(required_trials(0.01), 1000);
    match quantile_threshold(&h0, 0.01).unwrap_err() {
        Error::InsufficientTrials { required, available, .. } => {
            assert_eq!(required, 1000);
            assert_eq!(available, 100);
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn calibration_rejects_short_runs_and_bad_targets() {
    let mut s = spec(Panel::P12, 300);
    assert!(matches!(calibrate_threshold(&s, 0.01), Err(Error::InsufficientTrials { .. })));
    assert!(calibrate_threshold(&s, 1.5).is_err());
    s.trials = 2000;
    let cal = calibrate_threshold(&s, 0.05).unwrap();
    assert_eq!(cal.exceedances, 100);
    let mut fresh = s.clone();
    fresh.seed = 6;
    let holdout = validate_threshold(&fresh, cal.threshold, 1.0).unwrap();
    assert!(holdout.interval.0 <= 0.05 && 0.05 <= holdout.interval.1 + 0.02);
    let scaled = validate_threshold(&fresh, cal.threshold, 0.01).unwrap();
    assert_eq!(holdout.decisions, scaled.decisions);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let s = spec(Panel::P22, 400);
    let channels = s.scenario.build_channels().unwrap();
    let power = amplitude_power(&channels, 0.0);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                trial_statistics(
                    s.panel,
                    &channels,
                    s.scenario.snapshots,
                    &s.options,
                    Statistic::Composite,
                    Some(power),
                    s.seed,
                    Domain::Alternative,
                    s.trials,
                    1.0,
                )
                .unwrap()
            })
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn scenario_simulation_is_reproducible() {
    let sc = scenario(&[8, 6], 2, 5);
    let (a, amp_a) = simulate_scenario(&sc, Some(3.0), 17, 2).unwrap();
    let (b, amp_b) = simulate_scenario(&sc, Some(3.0), 17, 2).unwrap();
    assert_eq!(a.stacked().as_matrix(), b.stacked().as_matrix());
    assert_eq!(amp_a.unwrap().matrix().as_matrix(), amp_b.unwrap().matrix().as_matrix());
    let (_, none) = simulate_scenario(&sc, None, 17, 2).unwrap();
    assert!(none.is_none());
}

#[test]
fn scan_rejects_empty_grids_and_subspace_panels() {
    let sc = scenario(&[8, 6], 1, 4);
    let (z, _) = simulate_scenario(&sc, Some(10.0), 1, 0).unwrap();
    let grid = ScanGrid::regular(0.0, 1e-10, 3, 0.0, 1e3, 3);
    let empty = ScanGrid::regular(0.0, 1e-10, 0, 0.0, 1e3, 3);
    let opts = DetectorOptions::default();
    assert!(matches!(scan_likelihood_image(Panel::P11, &sc, &z, &empty, &opts), Err(Error::Domain(_))));
    for panel in [Panel::P31, Panel::P32, Panel::P33] {
        assert!(matches!(scan_likelihood_image(panel, &sc, &z, &grid, &opts), Err(Error::Config(_))));
    }
    for panel in [Panel::P11, Panel::P12, Panel::P13, Panel::P21, Panel::P22, Panel::P23] {
        let image = scan_likelihood_image(panel, &sc, &z, &grid, &opts).unwrap();
        assert_eq!(image.values.len(), 9);
    }
}

fn add(a: &MeasurementSet, b: &MeasurementSet) -> MeasurementSet {
    let blocks = a
        .blocks()
        .iter()
        .zip(b.blocks())
        .map(|(x, y)| mcglr::linalg::ComplexMatrix::new(x.as_matrix() + y.as_matrix()).unwrap())
        .collect();
    MeasurementSet::new(blocks).unwrap()
}

#[test]
fn two_sources_give_two_peaks_above_threshold() {
    let (fc, ts, n) = (1e9, 1e-6, 16usize);
    let dnu = 0.5 / (ts * n as f64);
    let dtau = 1.0 / (11.0 * fc);
    let mut sc = scenario(&[n, n, n], 1, 16);
    sc.carrier_hz = fc;
    sc.sample_period_s = ts;
    let grid = ScanGrid::regular(0.0, dtau, 11, 0.0, dnu, 11);
    let cells = [(2usize, 2usize), (8usize, 8usize)];

    let mut rng = ChaCha20Rng::seed_from_u64(31);
    let mut signal: Option<MeasurementSet> = None;
    for (i, j) in cells {
        let channels = sc.build_channels_at(grid.tau0_s[i], grid.doppler_hz[j]).unwrap();
        let power = amplitude_power(&channels, 15.0);
        let a = AmplitudeMatrix::random(1, 16, power, &mut rng);
        let s = noise_free(&channels, &a).unwrap();
        signal = Some(match signal {
            None => s,
            Some(acc) => add(&acc, &s),
        });
    }
    let base = sc.build_channels().unwrap();
    let noise = simulate_trial(&base, &Hypothesis::Null, 16, 31, Domain::Scan, 0).unwrap();
    let z = add(&signal.unwrap(), &noise);

    let opts = DetectorOptions::default();
    let h0 = trial_statistics(Panel::P12, &base, 16, &opts, Statistic::Composite, None, 32, Domain::Null, 1000, 1.0).unwrap();
    let threshold = quantile_threshold(&h0, 0.01).unwrap();

    let image = scan_likelihood_image(Panel::P12, &sc, &z, &grid, &opts).unwrap();
    let peaks: Vec<(usize, usize)> = image
        .local_maxima()
        .into_iter()
        .filter(|&(i, j)| image.value(i, j) > threshold)
        .collect();
    for (i, j) in cells {
        assert!(
            peaks.iter().any(|&(pi, pj)| pi.abs_diff(i) <= 1 && pj.abs_diff(j) <= 1),
            "no peak near ({i}, {j}); peaks {peaks:?}"
        );
    }
}
