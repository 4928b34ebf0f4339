use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64 as C;

use perc_sle_lab::conformal::{carleson_x, crossing_prob_exact, rectangle_horizontal, MarkedDomainSpec};
use perc_sle_lab::curvestats::{log_radii, CurveStats};
use perc_sle_lab::exploration::{extract_path, Curve, ExplorationSetup};
use perc_sle_lab::harness::{
    acceptance_specs, convergence_sweep, line_plot_svg, run, ExperimentResult, ExperimentSpec, Manifest, SweepAxis,
};
use perc_sle_lab::lattice::{build_canonical_domain, Shape};
use perc_sle_lab::loewner::{forward_solve, zipper};
use perc_sle_lab::percolation::{config_svg, config_svg_with_path, estimate_crossing_prob, Color, Configuration};
use perc_sle_lab::rng::{stream, Parallelism, WORKERS_ENV};
use perc_sle_lab::sle::{sample_driving, trace_of};

type Res<T> = Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(version, about = "Critical percolation, Cardy's formula, Loewner chains and SLE")]
struct Cli {
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Monte-Carlo crossing probability of a 4-marked domain (CSV row).
    Crossing(CrossingArgs),
    /// Conformal crossing probability; with --sweep, a table over P_4 on A_3.
    Cardy(CardyArgs),
    /// Chain of a driving CSV (t,u); writes the trace CSV (t,re,im).
    LoewnerForward(ForwardArgs),
    /// Driving CSV (t,u) of a curve CSV (x,y) by the zipper.
    LoewnerZip(ZipArgs),
    /// Sample SLE_κ driving functions and traces.
    Sle(SleArgs),
    /// Exploration path of one critical configuration (vertex CSV).
    Explore(ExploreArgs),
    /// Box counts, partition counts and dimension fit of a curve CSV.
    Curvestats(CurveStatsArgs),
    /// Recompute the pinned constants and compare with the manifest.
    Oracle,
    /// Run an experiment config (TOML) or a named acceptance preset.
    Run(RunArgs),
    /// Convergence sweep of an experiment config along one axis.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeKind {
    Square,
    Rectangle,
    Triangle,
}

#[derive(Args)]
struct ShapeArgs {
    #[arg(long, value_enum, default_value = "square")]
    shape: ShapeKind,
    /// Width/height of the rectangle.
    #[arg(long, default_value_t = 2.0)]
    aspect: f64,
}

impl ShapeArgs {
    fn shape(&self) -> Shape {
        match self.shape {
            ShapeKind::Square => Shape::Square { side: 1.0 },
            ShapeKind::Rectangle => Shape::rectangle(self.aspect),
            ShapeKind::Triangle => Shape::EquilateralTriangle { side: 1.0 },
        }
    }

    /// Corner marks with `A_1` the left side of a rectangle (horizontal
    /// crossing), or the three triangle corners plus `P_4` mid-`A_3`.
    fn default_fractions(&self) -> Vec<f64> {
        match self.shape {
            ShapeKind::Square => perc_sle_lab::conformal::rectangle_horizontal_fractions(1.0).to_vec(),
            ShapeKind::Rectangle => perc_sle_lab::conformal::rectangle_horizontal_fractions(self.aspect).to_vec(),
            ShapeKind::Triangle => vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 5.0 / 6.0],
        }
    }
}

#[derive(Args)]
struct CrossingArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[arg(long, default_value_t = 0.01)]
    mesh: f64,
    /// Mark positions as arc-length fractions, counterclockwise from the origin corner.
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 10_000)]
    n: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    chunk: usize,
    /// SVG of the first sampled configuration.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct CardyArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    /// Number of interior P_4 positions along A_3 (CSV table mode).
    #[arg(long)]
    sweep: Option<usize>,
}

#[derive(Args)]
struct ForwardArgs {
    /// CSV with columns t,u starting at 0,0.
    driving: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    dt_max: f64,
    /// Trace samples.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ZipArgs {
    /// CSV with columns x,y starting at the origin.
    curve: PathBuf,
    /// Resample to this many equal arc-length steps (0 keeps the vertices).
    #[arg(long, default_value_t = 0)]
    steps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SleArgs {
    #[arg(long)]
    kappa: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    t_max: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 1)]
    paths: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory for driving_<i>.csv and trace_<i>.csv.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct ExploreArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[arg(long, default_value_t = 0.02)]
    mesh: f64,
    /// Arc-length fractions of the start and end points.
    #[arg(long, default_value_t = 0.125)]
    a: f64,
    #[arg(long, default_value_t = 0.625)]
    b: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct CurveStatsArgs {
    /// CSV with columns x,y.
    curve: PathBuf,
    #[arg(long)]
    r_max: f64,
    #[arg(long)]
    r_min: f64,
    #[arg(long, default_value_t = 8)]
    radii: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    config: Option<PathBuf>,
    /// Acceptance preset name, or "all".
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Directory for <name>.json and <name>.csv.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    config: PathBuf,
    #[arg(long, value_enum)]
    axis: AxisArg,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Mesh,
    Dt,
    N,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let workers = cli.workers.unwrap_or_else(perc_sle_lab::rng::default_workers).max(1);
    match dispatch(cli.cmd, workers) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Cmd, workers: usize) -> Res<bool> {
    match cmd {
        Cmd::Crossing(a) => crossing(a, workers),
        Cmd::Cardy(a) => cardy(a),
        Cmd::LoewnerForward(a) => loewner_forward(a),
        Cmd::LoewnerZip(a) => loewner_zip(a),
        Cmd::Sle(a) => sle(a),
        Cmd::Explore(a) => explore(a),
        Cmd::Curvestats(a) => curvestats(a),
        Cmd::Oracle => oracle(),
        Cmd::Run(a) => run_cmd(a, workers),
        Cmd::Sweep(a) => sweep(a, workers),
    }
}

fn sink(out: &Option<PathBuf>) -> Res<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(fs::File::create(p)?),
        None => Box::new(io::stdout()),
    })
}

fn read_pairs(path: &Path) -> Res<Vec<(f64, f64)>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(format!("{}: expected two columns", path.display()).into());
        }
        out.push((rec[0].trim().parse()?, rec[1].trim().parse()?));
    }
    Ok(out)
}

fn crossing(a: CrossingArgs, workers: usize) -> Res<bool> {
    let shape = a.shape.shape();
    let fr = a.fractions.clone().unwrap_or_else(|| a.shape.default_fractions());
    let d = build_canonical_domain(shape, a.mesh, &fr)?;
    let est = estimate_crossing_prob(&d, a.p, a.n, a.seed, Parallelism::new(workers, a.chunk))?;
    if let Some(path) = &a.svg {
        let mut c = Configuration::uniform(&d, Color::Yellow);
        c.resample(&mut stream(a.seed, 0), a.p);
        fs::write(path, config_svg(&c))?;
    }
    let mut w = csv::Writer::from_writer(io::stdout());
    w.write_record(["shape", "fractions", "mesh", "p", "n", "p_hat", "ci_low", "ci_high", "seed"])?;
    w.write_record([
        serde_json::to_string(&shape)?,
        fr.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(" "),
        a.mesh.to_string(),
        a.p.to_string(),
        est.n.to_string(),
        est.p_hat.to_string(),
        est.ci_low.to_string(),
        est.ci_high.to_string(),
        a.seed.to_string(),
    ])?;
    w.flush()?;
    Ok(true)
}

fn cardy(a: CardyArgs) -> Res<bool> {
    let shape = a.shape.shape();
    let fr = a.fractions.clone().unwrap_or_else(|| a.shape.default_fractions());
    if fr.len() != 4 {
        return Err("cardy needs four mark fractions".into());
    }
    match a.sweep {
        None => {
            let spec = MarkedDomainSpec::from_lattice(shape, &fr);
            println!("x {:.12}", carleson_x(&spec)?.x);
            println!("phi {:.12}", crossing_prob_exact(&spec)?);
        }
        Some(k) => {
            let span = (fr[0] - fr[2]).rem_euclid(1.0);
            let mut w = csv::Writer::from_writer(io::stdout());
            w.write_record(["p4_fraction_of_a3", "p4_arc_fraction", "x"])?;
            for i in 1..=k {
                let t = i as f64 / (k + 1) as f64;
                let f4 = (fr[2] + t * span).rem_euclid(1.0);
                let spec = MarkedDomainSpec::from_lattice(shape, &[fr[0], fr[1], fr[2], f4]);
                w.write_record([t.to_string(), f4.to_string(), carleson_x(&spec)?.x.to_string()])?;
            }
            w.flush()?;
        }
    }
    Ok(true)
}

fn loewner_forward(a: ForwardArgs) -> Res<bool> {
    let (t, u): (Vec<f64>, Vec<f64>) = read_pairs(&a.driving)?.into_iter().unzip();
    let chain = forward_solve(&t, &u, a.dt_max)?;
    let total = chain.total_time();
    let mut w = csv::Writer::from_writer(sink(&a.out)?);
    w.write_record(["t", "re", "im"])?;
    for i in 0..=a.samples {
        let s = total * i as f64 / a.samples.max(1) as f64;
        let z = chain.trace_point(s);
        w.write_record([s.to_string(), z.re.to_string(), z.im.to_string()])?;
    }
    w.flush()?;
    Ok(true)
}

fn loewner_zip(a: ZipArgs) -> Res<bool> {
    let curve: Vec<C> = read_pairs(&a.curve)?.into_iter().map(|(x, y)| C::new(x, y)).collect();
    let z = zipper(&curve, a.steps)?;
    let mut w = csv::Writer::from_writer(sink(&a.out)?);
    w.write_record(["t", "u"])?;
    for (t, u) in z.chain.driving_table() {
        w.write_record([t.to_string(), u.to_string()])?;
    }
    w.flush()?;
    if z.projected + z.boundary + z.skipped > 0 {
        eprintln!("projected {} boundary {} skipped {}", z.projected, z.boundary, z.skipped);
    }
    Ok(true)
}

fn sle(a: SleArgs) -> Res<bool> {
    fs::create_dir_all(&a.out_dir)?;
    let mut traces = Vec::new();
    for i in 0..a.paths {
        let path = sample_driving(a.kappa, a.t_max, a.dt, stream_seed(a.seed, i as u64));
        let mut w = csv::Writer::from_path(a.out_dir.join(format!("driving_{i}.csv")))?;
        w.write_record(["t", "u"])?;
        for (t, u) in path.t_grid.iter().zip(&path.u) {
            w.write_record([t.to_string(), u.to_string()])?;
        }
        w.flush()?;
        let tr = trace_of(&path)?;
        let mut w = csv::Writer::from_path(a.out_dir.join(format!("trace_{i}.csv")))?;
        w.write_record(["t", "re", "im"])?;
        for (t, z) in path.t_grid.iter().zip(&tr.points) {
            w.write_record([t.to_string(), z.re.to_string(), z.im.to_string()])?;
        }
        w.flush()?;
        traces.push(tr.points.iter().map(|z| (z.re, z.im)).collect::<Vec<_>>());
    }
    if let Some(svg) = &a.svg {
        let names: Vec<String> = (0..traces.len()).map(|i| format!("trace {i}")).collect();
        let series: Vec<(&str, &[(f64, f64)])> = names.iter().map(|s| s.as_str()).zip(traces.iter().map(|t| t.as_slice())).collect();
        fs::write(svg, line_plot_svg(&format!("SLE_{} traces", a.kappa), &series, false, false))?;
    }
    Ok(true)
}

fn stream_seed(seed: u64, i: u64) -> u64 {
    use rand::RngCore;
    stream(seed, i).next_u64()
}

fn explore(a: ExploreArgs) -> Res<bool> {
    let setup = ExplorationSetup {
        shape: a.shape.shape(),
        mesh: a.mesh,
        a: a.a,
        b: a.b,
    };
    let d = setup.domain()?;
    let mut c = Configuration::uniform(&d, Color::Yellow);
    c.resample(&mut stream(a.seed, 0), 0.5);
    let ex = extract_path(&c)?;
    let mut w = csv::Writer::from_writer(sink(&a.out)?);
    w.write_record(["x", "y"])?;
    for z in &ex.curve.points {
        w.write_record([z.re.to_string(), z.im.to_string()])?;
    }
    w.flush()?;
    if let Some(svg) = &a.svg {
        let pts: Vec<[f64; 2]> = ex.curve.points.iter().map(|z| [z.re, z.im]).collect();
        fs::write(svg, config_svg_with_path(&c, &pts))?;
    }
    Ok(true)
}

fn curvestats(a: CurveStatsArgs) -> Res<bool> {
    let pts: Vec<C> = read_pairs(&a.curve)?.into_iter().map(|(x, y)| C::new(x, y)).collect();
    let st = CurveStats::compute(&Curve::new(pts), &log_radii(a.r_max, a.r_min, a.radii))?;
    let mut w = csv::Writer::from_writer(sink(&a.out)?);
    w.write_record(["r", "n_r", "m_r"])?;
    for ((r, n), m) in st.r_grid.iter().zip(&st.n_r).zip(&st.m_r) {
        w.write_record([r.to_string(), n.to_string(), m.to_string()])?;
    }
    w.flush()?;
    eprintln!("dim_box {:.4} holder_exponent_est {:.4}", st.dim_box, st.holder_exponent_est);
    Ok(true)
}

fn oracle() -> Res<bool> {
    let m = Manifest::builtin();
    let mut ok = true;
    for (aspect, key) in [(1.0, "1"), (4.0 / 3.0, "4_3"), (2.0, "2")] {
        let v = crossing_prob_exact(&rectangle_horizontal(aspect))?;
        let name = format!("cardy_rectangle_{key}");
        let pinned = m.constant(&name)?;
        let agree = (v - pinned).abs() < 1e-11;
        ok &= agree;
        println!("{name} = {v:.12} (manifest {pinned}, {})", if agree { "agrees" } else { "DIFFERS" });
    }
    Ok(ok)
}

fn write_result(r: &ExperimentResult, dir: &Option<PathBuf>) -> Res<()> {
    let name = if r.spec.name.is_empty() { "result" } else { &r.spec.name };
    match dir {
        Some(d) => {
            fs::create_dir_all(d)?;
            fs::write(d.join(format!("{name}.json")), r.to_json()?)?;
            fs::write(d.join(format!("{name}.csv")), r.cells_csv()?)?;
        }
        None => print!("{}", r.to_json()?),
    }
    Ok(())
}

fn report(r: &ExperimentResult) {
    for c in &r.checks {
        let tag = match (c.pass, c.warn_only) {
            (true, _) => "PASS",
            (false, true) => "WARN",
            (false, false) => "FAIL",
        };
        eprintln!("{tag} {} [{}]: {} in {}", c.cell, c.band, c.value, c.range());
    }
    eprintln!("{}: {} ({:.1} s)", r.spec.name, if r.pass { "pass" } else { "fail" }, r.wall_time);
}

fn run_cmd(a: RunArgs, workers: usize) -> Res<bool> {
    let specs: Vec<ExperimentSpec> = match (&a.config, &a.preset) {
        (Some(p), _) => vec![ExperimentSpec::from_toml(&fs::read_to_string(p)?)?],
        (None, Some(name)) => {
            let all = acceptance_specs();
            let chosen: Vec<_> = all.into_iter().filter(|s| name == "all" || &s.name == name).collect();
            if chosen.is_empty() {
                let names: Vec<String> = acceptance_specs().into_iter().map(|s| s.name).collect();
                return Err(format!("unknown preset {name}; known: {}", names.join(", ")).into());
            }
            chosen
        }
        (None, None) => return Err("give a config file or --preset".into()),
    };
    let mut pass = true;
    for s in specs {
        let r = run(&s.with_workers(workers))?;
        report(&r);
        write_result(&r, &a.out_dir)?;
        pass &= r.pass;
    }
    Ok(pass)
}

fn sweep(a: SweepArgs, workers: usize) -> Res<bool> {
    let spec = ExperimentSpec::from_toml(&fs::read_to_string(&a.config)?)?.with_workers(workers);
    let axis = match a.axis {
        AxisArg::Mesh => SweepAxis::Mesh,
        AxisArg::Dt => SweepAxis::Dt,
        AxisArg::N => SweepAxis::N,
    };
    let sw = convergence_sweep(&spec, axis, &a.values)?;
    match &a.out_dir {
        Some(d) => {
            fs::create_dir_all(d)?;
            fs::write(d.join("sweep.json"), sw.to_json()?)?;
            fs::write(d.join("sweep.csv"), sw.table_csv()?)?;
            fs::write(d.join("sweep.svg"), sw.svg())?;
        }
        None => print!("{}", sw.table_csv()?),
    }
    eprintln!("slope {:.4}, increases {}", sw.slope, sw.increases);
    Ok(sw.results.iter().all(|r| r.pass))
}
