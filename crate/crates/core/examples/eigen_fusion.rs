//! Unknown-gain fusion: the composite is the largest eigenvalue of a small
//! L×L matrix built from per-channel statistics and cross-channel
//! coherences. Compares it with a brute-force search over gain directions
//! and with the two-channel closed form.

use mcglr::detectors::{build_fusion_t, coherence_matrix, detect_p21, two_channel_cv_closed_form};
use mcglr::error::Result;
use mcglr::harness::{random_instance, InstanceShape};
use mcglr::linalg::{rayleigh_extremes, rayleigh_quotient, ComplexMatrix, C64};
use mcglr::detectors::Panel;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn main() -> Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let shape = InstanceShape { dims: vec![10, 12], modes: 1, snapshots: 6 };
    let (channels, z) = random_instance(Panel::P21, &shape, &mut rng)?;
    let report = detect_p21(&channels, &z)?;
    let (coh, _) = coherence_matrix(&channels, &z)?;
    let t = build_fusion_t(&report.alphas, &report.per_channel, &coh)?;
    let total = report.weighted_sum();
    let m = ComplexMatrix::from_fn(2, 2, |i, j| {
        let id = if i == j { C64::new(total, 0.0) } else { C64::new(0.0, 0.0) };
        id - t[(i, j)]
    })?;

    let ext = rayleigh_extremes(&m)?;
    let mut best = f64::NEG_INFINITY;
    for _ in 0..20_000 {
        let g = DVector::from_fn(2, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        best = best.max(rayleigh_quotient(&m, &g));
    }
    let closed = two_channel_cv_closed_form(report.per_channel[0], report.per_channel[1], coh[(0, 1)])?;

    println!("per-channel statistics: {:.5?}", report.per_channel);
    println!("coherence |c12| = {:.5}", coh[(0, 1)].norm());
    println!("composite (max eigenvalue)   {:.8}", report.composite);
    println!("best of 20000 random g       {:.8}", best);
    println!("V = min eig(T)               {:.8}", report.cross_validation);
    println!("closed form (weights = 1)    {:.8}  nu^2 = {:.4}", closed.value, closed.nu2);
    println!("max eigenvalue check         {:.2e}", (ext.max - report.composite).abs());
    Ok(())
}
