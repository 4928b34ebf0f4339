//! Half-plane capacity by Brownian motion against exact values.
use num_complex::Complex64 as C;
use perc_sle_lab::loewner::{hcap_estimate_bm, zipper, Hull};
use perc_sle_lab::rng::{default_workers, Parallelism};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let par = Parallelism::new(default_workers(), 1000);
    let disc = hcap_estimate_bm(&Hull::HalfDisc { radius: 1.0 }, 50_000, 1, par);
    println!("half-disc: {:.4} ± {:.4} (exact 1)", disc.p_hat, disc.std_err);
    // a vertical segment of height 2 has hcap 2
    let seg = [C::new(0.0, 0.0), C::new(0.0, 2.0)];
    let est = hcap_estimate_bm(&Hull::polyline(&seg), 50_000, 2, par);
    println!("segment [0, 2i]: {:.4} ± {:.4} (exact 2)", est.p_hat, est.std_err);
    let bent = [C::new(0.0, 0.0), C::new(0.3, 0.8), C::new(-0.2, 1.1)];
    let est = hcap_estimate_bm(&Hull::polyline(&bent), 50_000, 3, par);
    let chain = zipper(&bent, 400)?.chain;
    println!("bent polyline: Brownian {:.4} ± {:.4}, zipper {:.4}", est.p_hat, est.std_err, chain.hcap());
    Ok(())
}
