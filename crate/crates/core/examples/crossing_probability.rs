//! Monte-Carlo crossing probability of the unit square at p = 1/2, plus an
//! SVG of one sampled configuration.
use perc_sle_lab::conformal::rectangle_horizontal_fractions;
use perc_sle_lab::lattice::{build_canonical_domain, Shape};
use perc_sle_lab::percolation::{config_svg, estimate_crossing_prob, sample_config};
use perc_sle_lab::rng::{default_workers, Parallelism};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fr = rectangle_horizontal_fractions(1.0);
    for mesh in [0.1, 0.05, 0.02] {
        let d = build_canonical_domain(Shape::Square { side: 1.0 }, mesh, &fr)?;
        let est = estimate_crossing_prob(&d, 0.5, 20_000, 1, Parallelism::new(default_workers(), 1000))?;
        println!(
            "mesh {mesh:<5} cells {:>5}  P(left-right crossing) = {:.4} [{:.4}, {:.4}]",
            d.len(),
            est.p_hat,
            est.ci_low,
            est.ci_high
        );
    }
    let d = build_canonical_domain(Shape::Square { side: 1.0 }, 0.05, &fr)?;
    let out = std::env::temp_dir().join("square_configuration.svg");
    std::fs::write(&out, config_svg(&sample_config(&d, 0.5, 7)?))?;
    println!("configuration written to {}", out.display());
    Ok(())
}
