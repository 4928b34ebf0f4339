//! An experiment spec from TOML, its result as JSON, and a convergence
//! sweep with a CSV table and SVG plot.
use perc_sle_lab::harness::{convergence_sweep, run, ExperimentSpec, SweepAxis};

const SPEC: &str = r#"
name = "rectangle_2"
seed = 42
chunk = 1000
kind = "crossing"

[params]
shape = { kind = "rectangle", width = 2.0, height = 1.0 }
mesh = 0.05
n = 20000
target = "cardy_rectangle_2"
band = "cardy_rectangle"
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ExperimentSpec::from_toml(SPEC)?;
    let r = run(&spec)?;
    print!("{}", r.to_json()?);
    println!("pass: {} ({:.2} s)", r.pass, r.wall_time);
    let sw = convergence_sweep(&spec, SweepAxis::Mesh, &[0.1, 0.05, 0.025])?;
    print!("{}", sw.table_csv()?);
    println!("error slope vs mesh {:.2}, increases {}", sw.slope, sw.increases);
    let out = std::env::temp_dir().join("rectangle_sweep.svg");
    std::fs::write(&out, sw.svg())?;
    println!("plot written to {}", out.display());
    Ok(())
}
