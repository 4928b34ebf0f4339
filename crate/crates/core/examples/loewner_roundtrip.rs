//! Forward Loewner solve of a piecewise-linear driving function, then the
//! zipper back to the driving function.
use num_complex::Complex64 as C;
use perc_sle_lab::loewner::{forward_solve, zipper};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t = [0.0, 0.25, 0.5, 0.75, 1.0];
    let u = [0.0, 0.5, 0.2, -0.3, 0.4];
    let reference = forward_solve(&t, &u, 1e-5)?;
    println!("trace endpoint {:.6}", reference.trace_point(1.0));
    for n in [250usize, 500, 1000] {
        let curve: Vec<C> = (0..=n).map(|i| reference.trace_point(i as f64 / n as f64)).collect();
        let z = zipper(&curve, 0)?;
        let err = (0..=n)
            .map(|i| {
                let s = i as f64 / n as f64;
                (z.chain.driving_at(s) - reference.driving_at(s)).abs()
            })
            .fold(0.0, f64::max);
        println!("{n:>5} vertices: capacity time {:.5}, sup driving error {err:.5}", z.chain.total_time());
    }
    Ok(())
}
