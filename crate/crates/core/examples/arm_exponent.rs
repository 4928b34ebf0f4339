//! Polychromatic five-arm probabilities across nested annuli.
use perc_sle_lab::lattice::{hex_ball, Cell, DiscreteDomain};
use perc_sle_lab::percolation::{estimate_arm_profile, Annulus, ArmPattern};
use perc_sle_lab::rng::{default_workers, Parallelism};
use perc_sle_lab::stats::linear_fit;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let r = 3.0;
    let ratios = [2.0, 4.0, 8.0, 16.0];
    let d = DiscreteDomain::from_cells(1.0, hex_ball(Cell::new(0, 0), 36), &[])?;
    let radii: Vec<f64> = ratios.iter().map(|x| x * r).collect();
    let ann = Annulus::nested(&d, d.center(Cell::new(0, 0)), r, &radii)?;
    let par = Parallelism::new(default_workers(), 1000);
    let prof = estimate_arm_profile(&ann, ArmPattern::NonMonochromatic(5), 0.5, 200_000, 1, par)?;
    for (x, e) in ratios.iter().zip(&prof) {
        println!("R/r = {x:>4}: P = {:.3e} ± {:.1e}", e.p_hat, e.std_err);
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = ratios
        .iter()
        .zip(&prof)
        .filter(|(_, e)| e.p_hat > 0.0)
        .map(|(x, e)| (x.ln(), e.p_hat.ln()))
        .unzip();
    if let Some(fit) = linear_fit(&lx, &ly) {
        println!("log-log slope {:.3} ± {:.3}", -fit.slope, fit.slope_se);
    }
    Ok(())
}
