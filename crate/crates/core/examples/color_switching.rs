//! Exact enumeration of the three disjoint-arm events at a vertex of a
//! small marked domain: the counts agree exactly.
use perc_sle_lab::lattice::{hex_ball, Cell, DiscreteDomain, Vertex};
use perc_sle_lab::percolation::color_switching_check_from;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let d = DiscreteDomain::from_cells(1.0, hex_ball(Cell::new(0, 0), 2), &[])?
        .with_marks_at_cycle_fractions(&[0.0, 0.33, 0.67])?;
    let w = Vertex::from_corner(Cell::new(0, 0), 2);
    for first in 0..3 {
        let cs = color_switching_check_from(&d, w, first)?;
        println!(
            "first arm {first}: YBB {} BYB {} BBY {} of {} colorings, equal: {}",
            cs.counts[0],
            cs.counts[1],
            cs.counts[2],
            cs.total,
            cs.all_equal()
        );
    }
    Ok(())
}
