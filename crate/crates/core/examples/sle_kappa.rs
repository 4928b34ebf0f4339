//! Sample SLE_κ driving functions and traces, and recover κ from the
//! driving ensemble.
use perc_sle_lab::rng::default_workers;
use perc_sle_lab::sle::{estimate_kappa, sample_driving_ensemble, sample_trace, KappaOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for kappa in [2.0, 8.0 / 3.0, 4.0, 6.0, 8.0] {
        let paths = sample_driving_ensemble(kappa, 1.0, 1e-3, 200, 11, default_workers());
        let e = estimate_kappa(&paths, KappaOptions::default())?;
        println!(
            "kappa {kappa:.3}: estimate {:.3} [{:.3}, {:.3}], drift {:+.3}",
            e.kappa, e.ci_low, e.ci_high, e.drift
        );
    }
    let tr = sample_trace(6.0, 1.0, 1e-3, 5)?;
    let far = tr.points.iter().map(|z| z.norm()).fold(0.0, f64::max);
    println!("SLE_6 trace: {} points, max |γ| = {far:.3}", tr.len());
    Ok(())
}
