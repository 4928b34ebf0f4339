//! Conformal crossing probabilities: rectangles of several aspects and the
//! linear law on the equilateral triangle.
use perc_sle_lab::conformal::{carleson_x, crossing_prob_exact, rectangle_horizontal, MarkedDomainSpec};
use perc_sle_lab::lattice::Shape;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for aspect in [0.5, 1.0, 4.0 / 3.0, 2.0, 3.0] {
        println!("rectangle {aspect:.3}:1  Phi = {:.9}", crossing_prob_exact(&rectangle_horizontal(aspect))?);
    }
    let tri = Shape::EquilateralTriangle { side: 1.0 };
    for t in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let spec = MarkedDomainSpec::from_lattice(tri, &[0.0, 1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0 + t / 3.0]);
        println!("triangle, P4 at {t:.2} of A3  x = {:.9}", carleson_x(&spec)?.x);
    }
    Ok(())
}
