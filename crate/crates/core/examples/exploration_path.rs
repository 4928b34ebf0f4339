//! The percolation exploration path of a square, its filled hull, and the
//! driving function of the path in the half-plane.
use perc_sle_lab::exploration::{driving_of_exploration, extract_path, fill_hull, DrivingOptions, ExplorationSetup};
use perc_sle_lab::percolation::{config_svg_with_path, sample_config};
use perc_sle_lab::rng::default_workers;
use perc_sle_lab::sle::{estimate_kappa, KappaOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let setup = ExplorationSetup::square(0.02);
    let d = setup.domain()?;
    let c = sample_config(&d, 0.5, 3)?;
    let ex = extract_path(&c)?;
    let half = fill_hull(&d, &ex.walk, ex.steps() / 2);
    println!(
        "{} cells, path of {} steps, length {:.3}; halfway hull {} cells ({} explored)",
        d.len(),
        ex.steps(),
        ex.curve.length(),
        half.len(),
        half.explored.iter().filter(|&&e| e).count()
    );
    let out = std::env::temp_dir().join("exploration.svg");
    let pts: Vec<[f64; 2]> = ex.curve.points.iter().map(|z| [z.re, z.im]).collect();
    std::fs::write(&out, config_svg_with_path(&c, &pts))?;
    println!("path written to {}", out.display());

    let ens = driving_of_exploration(&ExplorationSetup::square(0.04), 100, 1, DrivingOptions::default(), default_workers())?;
    let e = estimate_kappa(&ens.paths, KappaOptions { min_lag: 8, max_lag_fraction: 0.125 })?;
    println!(
        "mesh 0.04, {} paths: kappa {:.2} ± {:.2}, drift {:+.2} ± {:.2}, stall rate {:.3}",
        ens.paths.len(),
        e.kappa,
        e.std_err,
        e.drift,
        e.drift_std_err,
        ens.stall_rate()
    );
    Ok(())
}
