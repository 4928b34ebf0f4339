//! Box counts, tortuosity partitions and dimension fits of an exploration
//! path and an SLE_6 trace.
use perc_sle_lab::curvestats::{log_radii, CurveStats};
use perc_sle_lab::exploration::{extract_path, ExplorationSetup};
use perc_sle_lab::percolation::sample_config;
use perc_sle_lab::sle::sample_trace;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mesh = 0.005;
    let d = ExplorationSetup::square(mesh).domain()?;
    let path = extract_path(&sample_config(&d, 0.5, 1)?)?.curve;
    let st = CurveStats::compute(&path, &log_radii(0.4, 4.0 * mesh, 9))?;
    println!("exploration path, mesh {mesh}");
    for ((r, n), m) in st.r_grid.iter().zip(&st.n_r).zip(&st.m_r) {
        println!("  r {r:.4}  N_r {n:>6}  M_r {m:>6}");
    }
    println!("  box dimension {:.3}, Hölder exponent estimate {:.3}", st.dim_box, st.holder_exponent_est);
    let tr = sample_trace(6.0, 1.0, 2e-4, 3)?;
    let st = CurveStats::compute(&tr, &log_radii(0.5, 0.01, 8))?;
    println!("SLE_6 trace: box dimension {:.3}", st.dim_box);
    Ok(())
}
