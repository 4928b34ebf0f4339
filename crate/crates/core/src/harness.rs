//! Experiment orchestration: seeded experiment descriptions, tolerance bands from one
//! versioned manifest, convergence sweeps, and JSON/CSV/SVG outputs.
//!
//! Results depend only on the `ExperimentSpec` (including `seed` and `chunk`),
//! never on the worker count, so the serialized result of a stored one is
//! byte-identical across machines and thread counts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::{crossing_prob_exact, ConformalError, MarkedDomainSpec};
use crate::curvestats::{cover_count, dimension_fit, log_radii, tortuosity_count, CurveStatsError};
use crate::exploration::{driving_of_exploration, extract_path, Curve, DrivingOptions, ExplorationError, ExplorationSetup};
use crate::lattice::{build_canonical_domain, hex_ball, Cell, DiscreteDomain, LatticeError, Shape, Vertex};
use crate::loewner::{directed_distance, forward_solve, hcap_chain, hcap_estimate_bm, zipper, Hull, LoewnerChain, LoewnerError, SlitStep};
use crate::percolation::{
    color_switching_check_from, estimate_arm_profile, estimate_crossing_prob, Annulus, ArmPattern, Color, Configuration,
    PercolationError,
};
use crate::rng::{default_workers, par_map, stream, Parallelism};
use crate::sle::{estimate_kappa, sample_driving_ensemble, sample_trace, KappaOptions, SleError};
use crate::stats::{linear_fit, MCEstimate};

/// The tolerance manifest compiled into the library.
pub const MANIFEST: &str = include_str!("../tolerances.toml");

#[derive(Debug, Error)]
pub enum ModuleError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Percolation(#[from] PercolationError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Loewner(#[from] LoewnerError),
    #[error(transparent)]
    Sle(#[from] SleError),
    #[error(transparent)]
    Exploration(#[from] ExplorationError),
    #[error(transparent)]
    CurveStats(#[from] CurveStatsError),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment spec: {0}")]
    Invalid(String),
    #[error("tolerance manifest: {0}")]
    Manifest(String),
    #[error("cell {cell}: {source}")]
    Cell {
        cell: String,
        #[source]
        source: ModuleError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

trait AtCell<T> {
    fn at(self, cell: &str) -> Result<T, HarnessError>;
}

impl<T, E: Into<ModuleError>> AtCell<T> for Result<T, E> {
    fn at(self, cell: &str) -> Result<T, HarnessError> {
        self.map_err(|e| HarnessError::Cell {
            cell: cell.to_string(),
            source: e.into(),
        })
    }
}

// ------------------------------------------------------------- manifest

/// An acceptance band.  All present constraints must hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    /// Absolute tolerance around the target.
    pub tol: Option<f64>,
    /// Relative tolerance around the target.
    pub rel: Option<f64>,
    #[serde(default)]
    pub warn_only: bool,
    pub note: String,
}

impl Band {
    /// Resolved closed interval for a value with the given target.
    pub fn interval(&self, target: Option<f64>) -> (f64, f64) {
        let (mut lo, mut hi) = (self.lo.unwrap_or(f64::NEG_INFINITY), self.hi.unwrap_or(f64::INFINITY));
        if let Some(t) = target {
            if let Some(tol) = self.tol {
                lo = lo.max(t - tol);
                hi = hi.min(t + tol);
            }
            if let Some(rel) = self.rel {
                lo = lo.max(t - rel * t.abs());
                hi = hi.min(t + rel * t.abs());
            }
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub bands: BTreeMap<String, Band>,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
}

impl Manifest {
    pub fn builtin() -> Manifest {
        Manifest::parse(MANIFEST).expect("built-in tolerance manifest parses")
    }

    pub fn parse(text: &str) -> Result<Manifest, HarnessError> {
        let m: Manifest = toml::from_str(text)?;
        for (name, b) in &m.bands {
            if b.lo.is_none() && b.hi.is_none() && b.tol.is_none() && b.rel.is_none() {
                return Err(HarnessError::Manifest(format!("band {name} has no constraint")));
            }
        }
        Ok(m)
    }

    pub fn band(&self, name: &str) -> Result<&Band, HarnessError> {
        self.bands
            .get(name)
            .ok_or_else(|| HarnessError::Manifest(format!("no band named {name}")))
    }

    pub fn constant(&self, name: &str) -> Result<f64, HarnessError> {
        self.constants
            .get(name)
            .copied()
            .ok_or_else(|| HarnessError::Manifest(format!("no constant named {name}")))
    }
}

// ------------------------------------------------------------- specs

fn default_chunk() -> usize {
    1000
}
fn half() -> f64 {
    0.5
}

/// A validated, seeded experiment.  `workers` only affects speed and is not
/// serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_chunk")]
    pub chunk: usize,
    #[serde(skip_serializing, default = "default_workers")]
    pub workers: usize,
    #[serde(flatten)]
    pub experiment: Experiment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Crossing,
    CardySweep,
    ColorSwitch,
    Hcap,
    LoewnerRoundtrip,
    SleKappa,
    ExplorationKappa,
    ArmExponent,
    Dimension,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Experiment {
    Crossing(CrossingParams),
    CardySweep(CardySweepParams),
    ColorSwitch(ColorSwitchParams),
    Hcap(HcapParams),
    LoewnerRoundtrip(LoewnerParams),
    SleKappa(SleKappaParams),
    ExplorationKappa(ExplorationParams),
    ArmExponent(ArmParams),
    Dimension(DimensionParams),
}

/// Blue crossing from `A_1` to `A_3` of a 4-marked canonical domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossingParams {
    pub shape: Shape,
    pub mesh: f64,
    /// Mark fractions; defaults to the corners with `A_1` the left side.
    pub fractions: Option<[f64; 4]>,
    pub n: u64,
    #[serde(default = "half")]
    pub p: f64,
    /// Manifest constant used as target instead of the conformal value.
    pub target: Option<String>,
    pub band: String,
}

/// Crossing probabilities with `P_4` moved along the arc from `P_3` to `P_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CardySweepParams {
    pub shape: Shape,
    pub mesh: f64,
    /// Fractions of `P_1, P_2, P_3`; defaults to the corners.
    pub fractions: Option<[f64; 3]>,
    /// Positions of `P_4` as fractions of the arc from `P_3` to `P_1`.
    pub p4: Vec<f64>,
    pub n: u64,
    pub band: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ColorSwitchParams {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HcapParams {
    pub n_walks: usize,
    /// Scale factor of the scaling check.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoewnerParams {
    /// Finest step count; errors are also measured at a half and a quarter.
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SleKappaParams {
    pub kappas: Vec<f64>,
    pub n_paths: usize,
    pub t_max: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplorationParams {
    pub shape: Shape,
    pub mesh: f64,
    /// Arc-length fractions of `a` and `b`.
    pub a: f64,
    pub b: f64,
    pub n_paths: usize,
    pub t_max: f64,
    pub n_grid: usize,
    pub r_cut: f64,
    /// Smallest and largest lag of the variance fit, in capacity time.
    pub min_lag: f64,
    pub max_lag: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmParams {
    /// Inner radius in units of the mesh.
    pub r: f64,
    /// Outer radii as multiples of `r`.
    pub ratios: Vec<f64>,
    pub arms: usize,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionParams {
    pub mesh: f64,
    pub n_paths: usize,
    /// Radius range of the fit, in units of the mesh.
    pub r_min: f64,
    pub r_max: f64,
    pub n_radii: usize,
    /// Self-sampled SLE_6 traces also checked for `N_r ≤ M_r`.
    pub n_traces: usize,
}

impl Experiment {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            Experiment::Crossing(_) => ExperimentKind::Crossing,
            Experiment::CardySweep(_) => ExperimentKind::CardySweep,
            Experiment::ColorSwitch(_) => ExperimentKind::ColorSwitch,
            Experiment::Hcap(_) => ExperimentKind::Hcap,
            Experiment::LoewnerRoundtrip(_) => ExperimentKind::LoewnerRoundtrip,
            Experiment::SleKappa(_) => ExperimentKind::SleKappa,
            Experiment::ExplorationKappa(_) => ExperimentKind::ExplorationKappa,
            Experiment::ArmExponent(_) => ExperimentKind::ArmExponent,
            Experiment::Dimension(_) => ExperimentKind::Dimension,
        }
    }
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Invalid(msg.into())
}

fn positive(name: &str, x: f64) -> Result<(), HarnessError> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(invalid(format!("{name} must be positive, got {x}")));
    }
    Ok(())
}

impl ExperimentSpec {
    pub fn new(seed: u64, experiment: Experiment) -> Self {
        ExperimentSpec {
            name: String::new(),
            seed,
            chunk: default_chunk(),
            workers: default_workers(),
            experiment,
        }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let spec: ExperimentSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn par(&self) -> Parallelism {
        Parallelism::new(self.workers, self.chunk)
    }

    /// Checks every parameter before anything runs.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.chunk == 0 {
            return Err(invalid("chunk must be positive"));
        }
        let m = Manifest::builtin();
        match &self.experiment {
            Experiment::Crossing(p) => {
                positive("mesh", p.mesh)?;
                if p.n == 0 || !(0.0..=1.0).contains(&p.p) {
                    return Err(invalid("crossing needs n > 0 and p in [0, 1]"));
                }
                if p.fractions.is_none() && matches!(p.shape, Shape::EquilateralTriangle { .. }) {
                    return Err(invalid("triangle crossings need explicit fractions"));
                }
                m.band(&p.band)?;
                if let Some(t) = &p.target {
                    m.constant(t)?;
                }
            }
            Experiment::CardySweep(p) => {
                positive("mesh", p.mesh)?;
                if p.n == 0 || p.p4.is_empty() || p.p4.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
                    return Err(invalid("cardy_sweep needs n > 0 and P_4 fractions in (0, 1)"));
                }
                m.band(&p.band)?;
            }
            Experiment::ColorSwitch(_) => {}
            Experiment::Hcap(p) => {
                positive("scale", p.scale)?;
                if p.n_walks == 0 {
                    return Err(invalid("hcap needs n_walks > 0"));
                }
            }
            Experiment::LoewnerRoundtrip(p) => {
                if p.steps < 8 {
                    return Err(invalid("loewner_roundtrip needs at least 8 steps"));
                }
            }
            Experiment::SleKappa(p) => {
                positive("t_max", p.t_max)?;
                positive("dt", p.dt)?;
                if p.kappas.is_empty() || p.kappas.iter().any(|&k| !(k >= 0.0)) || p.n_paths == 0 {
                    return Err(invalid("sle_kappa needs kappas ≥ 0 and n_paths > 0"));
                }
            }
            Experiment::ExplorationKappa(p) => {
                positive("mesh", p.mesh)?;
                positive("t_max", p.t_max)?;
                positive("r_cut", p.r_cut)?;
                positive("min_lag", p.min_lag)?;
                if p.n_paths < 2 || p.n_grid < 16 || !(p.max_lag > p.min_lag && p.max_lag <= p.t_max) {
                    return Err(invalid("exploration_kappa needs n_paths ≥ 2, n_grid ≥ 16, min_lag < max_lag ≤ t_max"));
                }
                if p.min_lag < p.t_max / p.n_grid as f64 {
                    return Err(invalid("min_lag is below the grid step"));
                }
            }
            Experiment::ArmExponent(p) => {
                positive("r", p.r)?;
                if p.ratios.len() < 2 || p.ratios.iter().any(|&x| !(x > 1.0)) || p.arms == 0 || p.n == 0 {
                    return Err(invalid("arm_exponent needs ≥ 2 ratios > 1, arms > 0, n > 0"));
                }
            }
            Experiment::Dimension(p) => {
                positive("mesh", p.mesh)?;
                if p.n_radii < 4 || !(p.r_max > p.r_min && p.r_min > 0.0) || p.n_paths == 0 {
                    return Err(invalid("dimension needs ≥ 4 radii, 0 < r_min < r_max, n_paths > 0"));
                }
            }
        }
        Ok(())
    }
}

// ------------------------------------------------------------- results

/// One estimated quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultCell {
    pub label: String,
    pub value: f64,
    pub std_err: f64,
    pub n: u64,
    pub target: Option<f64>,
    #[serde(default)]
    pub extra: BTreeMap<String, f64>,
}

impl ResultCell {
    fn new(label: impl Into<String>, value: f64) -> Self {
        ResultCell {
            label: label.into(),
            value,
            std_err: 0.0,
            n: 0,
            target: None,
            extra: BTreeMap::new(),
        }
    }

    fn from_mc(label: impl Into<String>, e: &MCEstimate) -> Self {
        ResultCell {
            std_err: e.std_err,
            n: e.n,
            ..ResultCell::new(label, e.p_hat)
        }
    }

    fn target(mut self, t: f64) -> Self {
        self.target = Some(t);
        self
    }

    fn with(mut self, key: &str, v: f64) -> Self {
        self.extra.insert(key.to_string(), v);
        self
    }
}

/// A cell compared against a manifest band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub cell: String,
    pub band: String,
    pub value: f64,
    /// Finite bounds; `None` is unbounded.
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub pass: bool,
    pub warn_only: bool,
}

impl Check {
    /// `[lo, hi]` with infinite ends shown as `-inf`/`inf`.
    pub fn range(&self) -> String {
        let f = |v: Option<f64>, inf: &str| v.map(|x| format!("{x:.5}")).unwrap_or_else(|| inf.to_string());
        format!("[{}, {}]", f(self.lo, "-inf"), f(self.hi, "inf"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub manifest_version: u32,
    pub cells: Vec<ResultCell>,
    pub checks: Vec<Check>,
    /// All non-warning checks pass.
    pub pass: bool,
    /// Seconds; kept out of the serialized form so outputs stay byte-stable.
    #[serde(skip)]
    pub wall_time: f64,
}

impl ExperimentResult {
    pub fn to_json(&self) -> Result<String, HarnessError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn cell(&self, label: &str) -> Option<&ResultCell> {
        self.cells.iter().find(|c| c.label == label)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.warn_only && !c.pass)
    }

    /// Checks as CSV: `cell,band,value,lo,hi,pass,warn_only`.
    pub fn checks_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["experiment", "cell", "band", "value", "lo", "hi", "pass", "warn_only"])?;
        for c in &self.checks {
            w.write_record([
                self.spec.name.clone(),
                c.cell.clone(),
                c.band.clone(),
                c.value.to_string(),
                c.lo.map(|x| x.to_string()).unwrap_or_default(),
                c.hi.map(|x| x.to_string()).unwrap_or_default(),
                c.pass.to_string(),
                c.warn_only.to_string(),
            ])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
    }

    /// Cells as CSV: `label,value,std_err,n,target`.
    pub fn cells_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["label", "value", "std_err", "n", "target"])?;
        for c in &self.cells {
            w.write_record([
                c.label.clone(),
                c.value.to_string(),
                c.std_err.to_string(),
                c.n.to_string(),
                c.target.map(|t| t.to_string()).unwrap_or_default(),
            ])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
    }
}

struct Recorder<'m> {
    manifest: &'m Manifest,
    cells: Vec<ResultCell>,
    checks: Vec<Check>,
}

impl<'m> Recorder<'m> {
    fn cell(&mut self, c: ResultCell) {
        self.cells.push(c);
    }

    /// Records `c` and checks its value against `band` around its target.
    fn checked(&mut self, c: ResultCell, band: &str) -> Result<(), HarnessError> {
        let b = self.manifest.band(band)?;
        let (lo, hi) = b.interval(c.target);
        self.checks.push(Check {
            cell: c.label.clone(),
            band: band.to_string(),
            value: c.value,
            lo: Some(lo).filter(|x| x.is_finite()),
            hi: Some(hi).filter(|x| x.is_finite()),
            pass: c.value >= lo && c.value <= hi,
            warn_only: b.warn_only,
        });
        self.cells.push(c);
        Ok(())
    }
}

// ------------------------------------------------------------- run

/// Runs a spec against the built-in manifest.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentResult, HarnessError> {
    run_with(spec, &Manifest::builtin())
}

pub fn run_with(spec: &ExperimentSpec, manifest: &Manifest) -> Result<ExperimentResult, HarnessError> {
    spec.validate()?;
    let start = Instant::now();
    let mut rec = Recorder {
        manifest,
        cells: Vec::new(),
        checks: Vec::new(),
    };
    match &spec.experiment {
        Experiment::Crossing(p) => run_crossing(spec, p, &mut rec)?,
        Experiment::CardySweep(p) => run_cardy_sweep(spec, p, &mut rec)?,
        Experiment::ColorSwitch(_) => run_color_switch(&mut rec)?,
        Experiment::Hcap(p) => run_hcap(spec, p, &mut rec)?,
        Experiment::LoewnerRoundtrip(p) => run_loewner(p, &mut rec)?,
        Experiment::SleKappa(p) => run_sle_kappa(spec, p, &mut rec)?,
        Experiment::ExplorationKappa(p) => run_exploration(spec, p, &mut rec)?,
        Experiment::ArmExponent(p) => run_arms(spec, p, &mut rec)?,
        Experiment::Dimension(p) => run_dimension(spec, p, &mut rec)?,
    }
    let pass = rec.checks.iter().all(|c| c.pass || c.warn_only);
    Ok(ExperimentResult {
        spec: spec.clone(),
        manifest_version: manifest.version,
        cells: rec.cells,
        checks: rec.checks,
        pass,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

fn default_crossing_fractions(shape: Shape) -> Option<[f64; 4]> {
    match shape {
        Shape::Square { .. } => Some(crate::conformal::rectangle_horizontal_fractions(1.0)),
        Shape::Rectangle { width, height } => Some(crate::conformal::rectangle_horizontal_fractions(width / height)),
        Shape::EquilateralTriangle { .. } => None,
    }
}

fn run_crossing(spec: &ExperimentSpec, p: &CrossingParams, rec: &mut Recorder) -> Result<(), HarnessError> {
    let fr = p
        .fractions
        .or_else(|| default_crossing_fractions(p.shape))
        .ok_or_else(|| invalid("missing fractions"))?;
    let label = format!("crossing mesh={} n={}", p.mesh, p.n);
    let d = build_canonical_domain(p.shape, p.mesh, &fr).at(&label)?;
    let est = estimate_crossing_prob(&d, p.p, p.n, spec.seed, spec.par()).at(&label)?;
    let exact = crossing_prob_exact(&MarkedDomainSpec::from_lattice(p.shape, &fr)).at(&label)?;
    let target = match &p.target {
        Some(name) => rec.manifest.constant(name)?,
        None => exact,
    };
    let cell = ResultCell::from_mc(label, &est)
        .target(target)
        .with("cells", d.len() as f64)
        .with("conformal", exact);
    rec.checked(cell, &p.band)
}

fn run_cardy_sweep(spec: &ExperimentSpec, p: &CardySweepParams, rec: &mut Recorder) -> Result<(), HarnessError> {
    let [f1, f2, f3] = p.fractions.unwrap_or_else(|| match p.shape {
        Shape::EquilateralTriangle { .. } => [0.0, 1.0 / 3.0, 2.0 / 3.0],
        _ => [0.0, 0.25, 0.5],
    });
    let span = (f1 - f3).rem_euclid(1.0);
    for (k, &t) in p.p4.iter().enumerate() {
        let f4 = (f3 + t * span).rem_euclid(1.0);
        let fr = [f1, f2, f3, f4];
        let label = format!("P4 at {t} of A_3");
        let d = build_canonical_domain(p.shape, p.mesh, &fr).at(&label)?;
        let est = estimate_crossing_prob(&d, 0.5, p.n, spec.seed.wrapping_add(k as u64), spec.par()).at(&label)?;
        let exact = crossing_prob_exact(&MarkedDomainSpec::from_lattice(p.shape, &fr)).at(&label)?;
        rec.checked(ResultCell::from_mc(label, &est).target(exact).with("p4", t), &p.band)?;
    }
    Ok(())
}

/// Micro-domains for the exact color-switching check, each with its interior
/// vertex.
pub fn switching_domains() -> Vec<(DiscreteDomain, Vertex)> {
    let marked = |cells: Vec<Cell>, fr: &[f64]| {
        DiscreteDomain::from_cells(1.0, cells, &[])
            .and_then(|d| d.with_marks_at_cycle_fractions(fr))
            .expect("committed micro-domain")
    };
    let o = Cell::new(0, 0);
    let (w0, w1) = (Vertex::from_corner(o, 2), Vertex::from_corner(o, 5));
    let mut odd = hex_ball(o, 1);
    odd.extend([Cell::new(2, -1), Cell::new(2, 0), Cell::new(1, 1), Cell::new(-1, 2), Cell::new(-2, 1)]);
    vec![
        (marked(hex_ball(o, 1), &[0.0, 0.33, 0.67]), w0),
        (marked(hex_ball(o, 1), &[0.1, 0.5, 0.8]), w1),
        (marked(hex_ball(o, 2), &[0.0, 0.33, 0.67]), w0),
        (marked(hex_ball(o, 2), &[0.05, 0.3, 0.6]), w1),
        (marked(odd.clone(), &[0.0, 0.4, 0.7]), w0),
        (marked(odd, &[0.2, 0.45, 0.9]), Vertex::from_corner(Cell::new(1, 0), 2)),
    ]
}

fn run_color_switch(rec: &mut Recorder) -> Result<(), HarnessError> {
    for (i, (d, w)) in switching_domains().iter().enumerate() {
        for first in 0..3 {
            let label = format!("domain {i} ({} cells) first arm {first}", d.len());
            let cs = color_switching_check_from(d, *w, first).at(&label)?;
            let spread = cs.counts.iter().max().unwrap() - cs.counts.iter().min().unwrap();
            let mut cell = ResultCell::new(label, spread as f64).with("total", cs.total as f64);
            for (j, k) in cs.counts.iter().enumerate() {
                cell = cell.with(&format!("count_{}", j + 1), *k as f64);
            }
            cell.n = cs.total;
            rec.checked(cell, "color_switch")?;
        }
    }
    Ok(())
}

fn run_hcap(spec: &ExperimentSpec, p: &HcapParams, rec: &mut Recorder) -> Result<(), HarnessError> {
    let disc = hcap_estimate_bm(&Hull::HalfDisc { radius: 1.0 }, p.n_walks, spec.seed, spec.par());
    rec.checked(ResultCell::from_mc("half-disc", &disc).target(1.0), "hcap_half_disc")?;
    // an irregular polyline hull and its dilation, on independent streams
    let hull = Hull::polyline(&[C::new(0.0, 0.0), C::new(0.3, 0.8), C::new(-0.2, 1.1), C::new(0.4, 1.5)]);
    let a = hcap_estimate_bm(&hull, p.n_walks, spec.seed.wrapping_add(1), spec.par());
    let b = hcap_estimate_bm(&hull.scaled(p.scale), p.n_walks, spec.seed.wrapping_add(2), spec.par());
    let ratio = b.p_hat / a.p_hat;
    let se = ratio * ((a.std_err / a.p_hat).powi(2) + (b.std_err / b.p_hat).powi(2)).sqrt();
    let mut cell = ResultCell::new(format!("scaling r={}", p.scale), ratio).target(p.scale * p.scale);
    cell.std_err = se;
    cell.n = a.n;
    rec.checked(cell, "hcap_scaling")?;
    let (x, y) = additivity_chains();
    let err = (hcap_chain(&x.concat(&y)) - hcap_chain(&x) - hcap_chain(&y)).abs();
    rec.checked(ResultCell::new("chain additivity", err), "hcap_additivity")
}

fn additivity_chains() -> (LoewnerChain, LoewnerChain) {
    let steps = |k: usize, s: f64| -> Vec<SlitStep> {
        (0..k)
            .map(|i| SlitStep {
                du: s * ((i as f64) * 0.7).sin() * 0.05,
                dt: 0.01 * (1.0 + 0.5 * ((i as f64) * 1.3).cos()),
            })
            .collect()
    };
    (LoewnerChain::from_steps(steps(50, 1.0)), LoewnerChain::from_steps(steps(70, -1.3)))
}

/// Piecewise-linear driving function of the committed round-trip test.
pub const ROUNDTRIP_T: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
pub const ROUNDTRIP_U: [f64; 5] = [0.0, 0.5, 0.2, -0.3, 0.4];

/// Quarter circle from 0 to `1 + i` (center 1, radius 1) with `n` edges.
pub fn roundtrip_arc(n: usize) -> Vec<C> {
    (0..=n)
        .map(|i| {
            let th = std::f64::consts::PI * (1.0 - 0.5 * i as f64 / n as f64);
            C::new(1.0 + th.cos(), th.sin())
        })
        .collect()
}

fn run_loewner(p: &LoewnerParams, rec: &mut Recorder) -> Result<(), HarnessError> {
    let ns = [p.steps / 4, p.steps / 2, p.steps];
    // zipper of trace: driving error of the committed driving function
    let fine = forward_solve(&ROUNDTRIP_T, &ROUNDTRIP_U, 1e-5).at("reference trace")?;
    let mut drive = Vec::new();
    for &n in &ns {
        let label = format!("zipper of trace, {n} steps");
        let curve: Vec<C> = (0..=n).map(|i| fine.trace_point(i as f64 / n as f64)).collect();
        let z = zipper(&curve, 0).at(&label)?;
        let err = (0..=n)
            .map(|i| {
                let s = i as f64 / n as f64;
                (z.chain.driving_at(s) - fine.driving_at(s)).abs()
            })
            .fold(0.0, f64::max);
        drive.push(err);
        let cell = ResultCell::new(label, err);
        if n == p.steps {
            rec.checked(cell, "loewner_error")?;
        } else {
            rec.cell(cell);
        }
    }
    for k in 1..ns.len() {
        let cell = ResultCell::new(format!("driving error ratio {}→{}", ns[k - 1], ns[k]), drive[k] / drive[k - 1]);
        rec.checked(cell, "loewner_halving")?;
    }
    // trace of zipper: the committed arc
    let arc = roundtrip_arc(4 * p.steps);
    let mut dist = Vec::new();
    for &n in &ns {
        let label = format!("trace of zipper, {n} steps");
        let z = zipper(&arc, n).at(&label)?;
        let tr = dense_trace(&z.chain, 4);
        let d = directed_distance(&tr, &arc).max(directed_distance(&arc, &z.chain.trace()));
        dist.push(d);
        let cell = ResultCell::new(label, d);
        if n == p.steps {
            rec.checked(cell, "loewner_error")?;
        } else {
            rec.cell(cell);
        }
    }
    for k in 1..ns.len() {
        let cell = ResultCell::new(format!("trace distance ratio {}→{}", ns[k - 1], ns[k]), dist[k] / dist[k - 1]);
        rec.checked(cell, "loewner_at_least_halving")?;
    }
    // forward solver against a fine reference
    let times: Vec<f64> = (1..=50).map(|i| i as f64 / 50.0).collect();
    let want: Vec<C> = times.iter().map(|&s| fine.trace_point(s)).collect();
    let mut fwd = Vec::new();
    for &n in &ns {
        let label = format!("forward solve, {n} steps");
        let ch = forward_solve(&ROUNDTRIP_T, &ROUNDTRIP_U, 1.0 / n as f64).at(&label)?;
        let e = times.iter().zip(&want).map(|(&s, &r)| (ch.trace_point(s) - r).norm()).fold(0.0, f64::max);
        fwd.push(e);
        rec.cell(ResultCell::new(label, e));
    }
    for k in 1..ns.len() {
        let cell = ResultCell::new(format!("forward error ratio {}→{}", ns[k - 1], ns[k]), fwd[k] / fwd[k - 1]);
        rec.checked(cell, "loewner_halving")?;
    }
    Ok(())
}

fn dense_trace(ch: &LoewnerChain, per_step: usize) -> Vec<C> {
    let t = ch.t_grid();
    let mut out = Vec::new();
    for k in 1..t.len() {
        for j in 1..=per_step {
            out.push(ch.trace_point(t[k - 1] + (t[k] - t[k - 1]) * j as f64 / per_step as f64));
        }
    }
    out
}

fn run_sle_kappa(spec: &ExperimentSpec, p: &SleKappaParams, rec: &mut Recorder) -> Result<(), HarnessError> {
    for (k, &kappa) in p.kappas.iter().enumerate() {
        let label = format!("kappa={kappa}");
        let seed = stream_seed(spec.seed, k as u64);
        let paths = sample_driving_ensemble(kappa, p.t_max, p.dt, p.n_paths, seed, spec.workers);
        let e = estimate_kappa(&paths, KappaOptions::default()).at(&label)?;
        let mut cell = ResultCell::new(label, e.kappa)
            .target(kappa)
            .with("drift", e.drift)
            .with("drift_std_err", e.drift_std_err)
            .with("excess_kurtosis", e.excess_kurtosis);
        cell.std_err = e.std_err;
        cell.n = e.n_paths as u64;
        rec.checked(cell, "sle_kappa")?;
    }
    Ok(())
}

/// Independent seed for sub-experiment `k`.
fn stream_seed(seed: u64, k: u64) -> u64 {
    use rand::RngCore;
    stream(seed, k).next_u64()
}

/// Lag options covering `[min_lag, max_lag]` in capacity time.
pub fn lag_options(t_max: f64, n_grid: usize, min_lag: f64, max_lag: f64) -> KappaOptions {
    let dt = t_max / n_grid as f64;
    KappaOptions {
        min_lag: (min_lag / dt).round().max(1.0) as usize,
        max_lag_fraction: max_lag / t_max,
    }
}

fn run_exploration(spec: &ExperimentSpec, p: &ExplorationParams, rec: &mut Recorder) -> Result<(), HarnessError> {
    let setup = ExplorationSetup {
        shape: p.shape,
        mesh: p.mesh,
        a: p.a,
        b: p.b,
    };
    let label = format!("exploration mesh={}", p.mesh);
    let opts = DrivingOptions {
        t_max: p.t_max,
        n_grid: p.n_grid,
        r_cut: p.r_cut,
    };
    let ens = driving_of_exploration(&setup, p.n_paths, spec.seed, opts, spec.workers).at(&label)?;
    let e = estimate_kappa(&ens.paths, lag_options(p.t_max, p.n_grid, p.min_lag, p.max_lag)).at(&label)?;
    let mut cell = ResultCell::new(format!("kappa, {label}"), e.kappa)
        .target(6.0)
        .with("paths", ens.paths.len() as f64)
        .with("too_short", ens.too_short as f64)
        .with("projected", ens.projected as f64)
        .with("boundary", ens.boundary as f64)
        .with("skipped", ens.skipped as f64)
        .with("mean_steps", ens.mean_steps);
    cell.std_err = e.std_err;
    cell.n = ens.paths.len() as u64;
    rec.checked(cell, "exploration_kappa")?;
    let mut drift = ResultCell::new(format!("drift/se, {label}"), e.drift / e.drift_std_err.max(1e-300))
        .with("drift", e.drift)
        .with("drift_std_err", e.drift_std_err);
    drift.n = ens.paths.len() as u64;
    rec.checked(drift, "exploration_drift")?;
    let mut stall = ResultCell::new(format!("stall rate, {label}"), ens.stall_rate());
    stall.n = ens.attempted as u64;
    rec.checked(stall, "exploration_stall")
}

/// Domain for annuli up to radius `big` (mesh 1) centred on a hexagon.
fn arm_domain(big: f64) -> Result<DiscreteDomain, LatticeError> {
    let k = (big / 1.5).ceil() as i32 + 2;
    DiscreteDomain::from_cells(1.0, hex_ball(Cell::new(0, 0), k), &[])
}

fn run_arms(spec: &ExperimentSpec, p: &ArmParams, rec: &mut Recorder) -> Result<(), HarnessError> {
    let radii: Vec<f64> = p.ratios.iter().map(|x| x * p.r).collect();
    let big = radii.iter().cloned().fold(0.0, f64::max);
    let label = format!("{} arms, r={}", p.arms, p.r);
    let d = arm_domain(big).at(&label)?;
    let ann = Annulus::nested(&d, d.center(Cell::new(0, 0)), p.r, &radii).at(&label)?;
    let pattern = if p.arms == 1 {
        ArmPattern::Monochromatic(Color::Blue, 1)
    } else {
        ArmPattern::NonMonochromatic(p.arms)
    };
    let prof = estimate_arm_profile(&ann, pattern, 0.5, p.n, spec.seed, spec.par()).at(&label)?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (ratio, est) in p.ratios.iter().zip(&prof) {
        rec.cell(ResultCell::from_mc(format!("P(arms) R/r={ratio}"), est));
        if est.p_hat > 0.0 {
            x.push(ratio.ln());
            y.push(est.p_hat.ln());
        }
    }
    let fit = linear_fit(&x, &y).ok_or_else(|| HarnessError::Cell {
        cell: label.clone(),
        source: CurveStatsError::DegenerateFit.into(),
    })?;
    let mut cell = ResultCell::new(format!("exponent, {label}"), -fit.slope);
    cell.std_err = fit.slope_se;
    cell.n = p.n;
    if p.arms == 5 {
        rec.checked(cell, "five_arm_slope")
    } else {
        rec.cell(cell);
        Ok(())
    }
}

fn run_dimension(spec: &ExperimentSpec, p: &DimensionParams, rec: &mut Recorder) -> Result<(), HarnessError> {
    let setup = ExplorationSetup::square(p.mesh);
    let label = format!("dimension mesh={}", p.mesh);
    let d = setup.domain().at(&label)?;
    let radii = log_radii(p.r_max * p.mesh, p.r_min * p.mesh, p.n_radii);
    let idx: Vec<u64> = (0..p.n_paths as u64).collect();
    let curves: Vec<Result<Curve, ExplorationError>> = par_map(&idx, spec.workers, |_, &i| {
        let mut c = Configuration::uniform(&d, Color::Yellow);
        c.resample(&mut stream(spec.seed, i), 0.5);
        Ok(extract_path(&c)?.curve)
    });
    let curves: Vec<Curve> = curves.into_iter().collect::<Result<_, _>>().at(&label)?;
    let fits: Vec<Result<(f64, f64), CurveStatsError>> = par_map(&curves, spec.workers, |_, c| dimension_fit(c, &radii));
    let mut dims = Vec::new();
    for f in fits {
        dims.push(f.at(&label)?.0);
    }
    let mean = dims.iter().sum::<f64>() / dims.len() as f64;
    let sd = if dims.len() > 1 {
        (dims.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (dims.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut cell = ResultCell::new(format!("box dimension, {label}"), mean)
        .with("min", dims.iter().cloned().fold(f64::MAX, f64::min))
        .with("max", dims.iter().cloned().fold(f64::MIN, f64::max));
    cell.std_err = sd / (dims.len() as f64).sqrt();
    cell.n = dims.len() as u64;
    rec.checked(cell, "box_dimension")?;
    // N_r ≤ M_r on every exploration path and SLE_6 trace
    let traces: Vec<Result<Curve, SleError>> =
        par_map(&(0..p.n_traces as u64).collect::<Vec<_>>(), spec.workers, |_, &i| {
            sample_trace(6.0, 1.0, 1e-3, stream_seed(spec.seed, 1_000_000 + i))
        });
    let mut all = curves;
    for t in traces {
        all.push(t.at("sle trace")?);
    }
    let sle_radii = log_radii(0.5, 0.005, p.n_radii);
    let violations: Vec<usize> = par_map(&all, spec.workers, |i, c| {
        let rs = if i < p.n_paths { &radii } else { &sle_radii };
        rs.iter().filter(|&&r| cover_count(c, r) > tortuosity_count(c, r)).count()
    });
    let mut cell = ResultCell::new("radii with N_r > M_r", violations.iter().sum::<usize>() as f64);
    cell.n = all.len() as u64;
    rec.checked(cell, "cover_vs_partition")
}

// ------------------------------------------------------------- sweeps

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Mesh,
    Dt,
    N,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub results: Vec<ExperimentResult>,
    /// Error of the first targeted cell per value (its variance on the `n`
    /// axis).
    pub metric: Vec<f64>,
    /// Log-log slope of the metric against the axis value.
    pub slope: f64,
    /// Number of increases of the metric along the order of `values`.
    pub increases: usize,
}

impl SweepResult {
    pub fn to_json(&self) -> Result<String, HarnessError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn table_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["value", "metric", "pass"])?;
        for ((v, m), r) in self.values.iter().zip(&self.metric).zip(&self.results) {
            w.write_record([v.to_string(), m.to_string(), r.pass.to_string()])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
    }

    pub fn svg(&self) -> String {
        let pts: Vec<(f64, f64)> = self.values.iter().cloned().zip(self.metric.iter().cloned()).collect();
        line_plot_svg(&format!("{:?} sweep", self.axis), &[("metric", &pts)], true, true)
    }
}

/// `spec` with its mesh, time step or sample count replaced by `v`.
pub fn with_axis(spec: &ExperimentSpec, axis: SweepAxis, v: f64) -> Result<ExperimentSpec, HarnessError> {
    let mut s = spec.clone();
    let bad = || invalid(format!("{:?} has no {axis:?} axis", spec.experiment.kind()));
    match (&mut s.experiment, axis) {
        (Experiment::Crossing(p), SweepAxis::Mesh) => p.mesh = v,
        (Experiment::Crossing(p), SweepAxis::N) => p.n = v as u64,
        (Experiment::CardySweep(p), SweepAxis::Mesh) => p.mesh = v,
        (Experiment::CardySweep(p), SweepAxis::N) => p.n = v as u64,
        (Experiment::Hcap(p), SweepAxis::N) => p.n_walks = v as usize,
        (Experiment::LoewnerRoundtrip(p), SweepAxis::Dt) => p.steps = (1.0 / v).round() as usize,
        (Experiment::SleKappa(p), SweepAxis::Dt) => p.dt = v,
        (Experiment::SleKappa(p), SweepAxis::N) => p.n_paths = v as usize,
        (Experiment::ExplorationKappa(p), SweepAxis::Mesh) => p.mesh = v,
        (Experiment::ExplorationKappa(p), SweepAxis::N) => p.n_paths = v as usize,
        (Experiment::ArmExponent(p), SweepAxis::N) => p.n = v as u64,
        (Experiment::Dimension(p), SweepAxis::Mesh) => p.mesh = v,
        (Experiment::Dimension(p), SweepAxis::N) => p.n_paths = v as usize,
        _ => return Err(bad()),
    }
    Ok(s)
}

fn sweep_metric(r: &ExperimentResult, axis: SweepAxis) -> f64 {
    let c = r.cells.iter().find(|c| c.target.is_some()).or(r.cells.first());
    match (c, axis) {
        (Some(c), SweepAxis::N) => c.std_err * c.std_err,
        (Some(c), _) => (c.value - c.target.unwrap_or(0.0)).abs(),
        (None, _) => f64::NAN,
    }
}

/// One result per axis value plus the fitted log-log slope of the error.
pub fn convergence_sweep(spec: &ExperimentSpec, axis: SweepAxis, values: &[f64]) -> Result<SweepResult, HarnessError> {
    if values.len() < 3 {
        return Err(invalid("a sweep needs at least 3 values"));
    }
    let mut results = Vec::new();
    for &v in values {
        results.push(run(&with_axis(spec, axis, v)?)?);
    }
    let metric: Vec<f64> = results.iter().map(|r| sweep_metric(r, axis)).collect();
    let (lx, ly): (Vec<f64>, Vec<f64>) = values
        .iter()
        .zip(&metric)
        .filter(|(_, &m)| m > 0.0)
        .map(|(v, m)| (v.ln(), m.ln()))
        .unzip();
    let slope = linear_fit(&lx, &ly).map(|f| f.slope).unwrap_or(0.0);
    let increases = metric.windows(2).filter(|w| w[1] > w[0]).count();
    Ok(SweepResult {
        axis,
        values: values.to_vec(),
        results,
        metric,
        slope,
        increases,
    })
}

// ------------------------------------------------------------- figures

/// A minimal line plot; points with non-positive coordinates are dropped on
/// log axes.
pub fn line_plot_svg(title: &str, series: &[(&str, &[(f64, f64)])], log_x: bool, log_y: bool) -> String {
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    let tr = |v: f64, log: bool| if log { v.log10() } else { v };
    let keep = |&(x, y): &(f64, f64)| (!log_x || x > 0.0) && (!log_y || y > 0.0) && x.is_finite() && y.is_finite();
    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, p)| p.iter().cloned().filter(keep))
        .map(|(x, y)| (tr(x, log_x), tr(y, log_y)))
        .collect();
    let (w, h, m) = (640.0, 420.0, 50.0);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, w / 2.0);
    if !all.is_empty() {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in &all {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        let (dx, dy) = ((x1 - x0).max(1e-12), (y1 - y0).max(1e-12));
        let px = |x: f64| m + (x - x0) / dx * (w - 2.0 * m);
        let py = |y: f64| h - m - (y - y0) / dy * (h - 2.0 * m);
        let _ = writeln!(
            s,
            r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            w - 2.0 * m,
            h - 2.0 * m
        );
        let fmt = |v: f64, log: bool| if log { format!("1e{v:.2}") } else { format!("{v:.3}") };
        let _ = writeln!(s, r#"<text x="{m}" y="{}" font-size="11">{}</text>"#, h - m + 15.0, fmt(x0, log_x));
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{}</text>"#, w - m, h - m + 15.0, fmt(x1, log_x));
        let _ = writeln!(s, r#"<text x="5" y="{}" font-size="11">{}</text>"#, h - m, fmt(y0, log_y));
        let _ = writeln!(s, r#"<text x="5" y="{}" font-size="11">{}</text>"#, m + 4.0, fmt(y1, log_y));
        for (k, (name, pts)) in series.iter().enumerate() {
            let col = COLORS[k % COLORS.len()];
            let coords: Vec<String> = pts
                .iter()
                .cloned()
                .filter(keep)
                .map(|(x, y)| format!("{:.2},{:.2}", px(tr(x, log_x)), py(tr(y, log_y))))
                .collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{col}" stroke-width="2"/>"#, coords.join(" "));
            for c in &coords {
                let (cx, cy) = c.split_once(',').unwrap();
                let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{col}"/>"#);
            }
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" font-size="12" fill="{col}">{name}</text>"#,
                w - m - 100.0,
                m + 16.0 * (k as f64 + 1.0)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// A polyline in the plane as SVG (y up).
pub fn curve_svg(curve: &Curve) -> String {
    let pts: Vec<(f64, f64)> = curve.points.iter().map(|z| (z.re, z.im)).collect();
    line_plot_svg("curve", &[("curve", &pts)], false, false)
}

// ------------------------------------------------------------- presets

/// The committed acceptance experiments, keyed by name.
pub fn acceptance_specs() -> Vec<ExperimentSpec> {
    let sq = Shape::Square { side: 1.0 };
    let tri = Shape::EquilateralTriangle { side: 1.0 };
    let mut v = vec![ExperimentSpec::new(
        1,
        Experiment::Crossing(CrossingParams {
            shape: sq,
            mesh: 0.01,
            fractions: None,
            n: 100_000,
            p: 0.5,
            target: Some("cardy_rectangle_1".into()),
            band: "square_crossing".into(),
        }),
    )
    .named("square_crossing")];
    for (i, (aspect, key)) in [(1.0, "1"), (4.0 / 3.0, "4_3"), (2.0, "2")].into_iter().enumerate() {
        v.push(
            ExperimentSpec::new(
                10 + i as u64,
                Experiment::Crossing(CrossingParams {
                    shape: Shape::rectangle(aspect),
                    mesh: 0.01,
                    fractions: None,
                    n: 100_000,
                    p: 0.5,
                    target: Some(format!("cardy_rectangle_{key}")),
                    band: "cardy_rectangle".into(),
                }),
            )
            .named(&format!("cardy_rectangle_{key}")),
        );
    }
    v.push(
        ExperimentSpec::new(
            20,
            Experiment::CardySweep(CardySweepParams {
                shape: tri,
                mesh: 0.01,
                fractions: None,
                p4: vec![0.25, 0.5, 0.75],
                n: 100_000,
                band: "triangle_linearity".into(),
            }),
        )
        .named("triangle_linearity"),
    );
    v.push(ExperimentSpec::new(0, Experiment::ColorSwitch(ColorSwitchParams {})).named("color_switch"));
    v.push(ExperimentSpec::new(30, Experiment::Hcap(HcapParams { n_walks: 100_000, scale: 2.0 })).named("hcap"));
    v.push(ExperimentSpec::new(0, Experiment::LoewnerRoundtrip(LoewnerParams { steps: 1000 })).named("loewner_roundtrip"));
    v.push(
        ExperimentSpec::new(
            40,
            Experiment::SleKappa(SleKappaParams {
                kappas: vec![2.0, 8.0 / 3.0, 6.0, 8.0],
                n_paths: 200,
                t_max: 1.0,
                dt: 1e-4,
            }),
        )
        .named("sle_kappa"),
    );
    v.push(ExperimentSpec::new(50, Experiment::ExplorationKappa(exploration_params(0.01, 200))).named("exploration_kappa"));
    v.push(
        ExperimentSpec::new(
            60,
            Experiment::ArmExponent(ArmParams {
                r: 3.0,
                ratios: vec![2.0, 4.0, 8.0, 16.0],
                arms: 5,
                n: 1_000_000,
            }),
        )
        .named("five_arm"),
    );
    v.push(
        ExperimentSpec::new(
            70,
            Experiment::Dimension(DimensionParams {
                mesh: 0.005,
                n_paths: 20,
                r_min: 4.0,
                r_max: 80.0,
                n_radii: 9,
                n_traces: 10,
            }),
        )
        .named("dimension"),
    );
    v
}

/// Exploration driving on the square from the bottom to the top midpoint.
pub fn exploration_params(mesh: f64, n_paths: usize) -> ExplorationParams {
    let s = ExplorationSetup::square(mesh);
    ExplorationParams {
        shape: s.shape,
        mesh,
        a: s.a,
        b: s.b,
        n_paths,
        t_max: 1.0,
        n_grid: 1024,
        r_cut: 1e3,
        min_lag: 8.0 / 1024.0,
        max_lag: 0.125,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_parses_and_bands_resolve() {
        let m = Manifest::builtin();
        assert_eq!(m.version, 1);
        assert_eq!(m.band("square_crossing").unwrap().interval(Some(0.5)), (0.49, 0.51));
        let (lo, hi) = m.band("hcap_scaling").unwrap().interval(Some(4.0));
        assert!((lo - 3.8).abs() < 1e-12 && (hi - 4.2).abs() < 1e-12);
        assert!(m.band("five_arm_slope").unwrap().warn_only);
        assert!(m.band("nope").is_err());
        assert!(Manifest::parse("version = 1\n[bands.x]\nnote = \"empty\"\n").is_err());
    }

    #[test]
    fn pinned_constants_match_the_conformal_oracle() {
        let m = Manifest::builtin();
        for (aspect, key) in [(1.0, "1"), (4.0 / 3.0, "4_3"), (2.0, "2")] {
            let v = crossing_prob_exact(&crate::conformal::rectangle_horizontal(aspect)).unwrap();
            assert!((v - m.constant(&format!("cardy_rectangle_{key}")).unwrap()).abs() < 1e-11);
        }
    }

    #[test]
    fn specs_round_trip_through_toml() {
        let text = r#"
            name = "sq"
            seed = 7
            chunk = 500
            kind = "crossing"
            [params]
            shape = { kind = "square", side = 1.0 }
            mesh = 0.05
            n = 2000
            band = "square_crossing"
        "#;
        let spec = ExperimentSpec::from_toml(text).unwrap();
        assert_eq!(spec.chunk, 500);
        assert!(matches!(&spec.experiment, Experiment::Crossing(p) if p.n == 2000 && p.p == 0.5));
        let back = ExperimentSpec::from_toml(&toml::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back.experiment, spec.experiment);
        assert!(ExperimentSpec::from_toml(&text.replace("n = 2000", "n = 2000\nbogus = 1")).is_err());
        assert!(ExperimentSpec::from_toml(&text.replace("mesh = 0.05", "mesh = -1.0")).is_err());
        assert!(ExperimentSpec::from_toml(&text.replace("square_crossing", "missing_band")).is_err());
    }

    #[test]
    fn crossing_run_is_replayable_and_worker_independent() {
        let spec = ExperimentSpec {
            chunk: 100,
            ..ExperimentSpec::new(
                3,
                Experiment::Crossing(CrossingParams {
                    shape: Shape::Square { side: 1.0 },
                    mesh: 0.05,
                    fractions: None,
                    n: 4000,
                    p: 0.5,
                    target: None,
                    band: "cardy_rectangle".into(),
                }),
            )
        };
        let a = run(&spec.clone().with_workers(1)).unwrap();
        let b = run(&spec.clone().with_workers(3)).unwrap();
        let json = a.to_json().unwrap();
        assert_eq!(json, b.to_json().unwrap());
        assert_eq!(a.checks.len(), 1);
        // replay from the stored spec
        let stored = ExperimentResult::from_json(&json).unwrap();
        assert_eq!(stored.to_json().unwrap(), json);
        assert_eq!(run(&stored.spec).unwrap().to_json().unwrap(), json);
        assert!(a.checks_csv().unwrap().lines().count() == 2);
    }

    #[test]
    fn color_switch_spec_is_exact() {
        let r = run(&ExperimentSpec::new(0, Experiment::ColorSwitch(ColorSwitchParams {}))).unwrap();
        assert_eq!(r.checks.len(), 18);
        assert!(r.pass);
        assert!(r.cells.iter().any(|c| c.extra["count_1"] > 0.0));
    }

    #[test]
    fn stored_results_reload_to_the_last_bit() {
        let r = run(&ExperimentSpec::new(0, Experiment::LoewnerRoundtrip(LoewnerParams { steps: 64 }))).unwrap();
        let json = r.to_json().unwrap();
        assert_eq!(ExperimentResult::from_json(&json).unwrap().to_json().unwrap(), json);
        // values whose shortest decimal form the default float parser misreads
        for x in [0.47999999999999987, 1.0019611914584525, 0.39295751507153204] {
            let y: f64 = serde_json::from_str(&serde_json::to_string(&x).unwrap()).unwrap();
            assert_eq!(y.to_bits(), f64::to_bits(x));
        }
    }

    #[test]
    fn module_errors_carry_the_cell() {
        let spec = ExperimentSpec::new(
            1,
            Experiment::Crossing(CrossingParams {
                shape: Shape::Square { side: 1.0 },
                mesh: 0.9,
                fractions: None,
                n: 10,
                p: 0.5,
                target: None,
                band: "square_crossing".into(),
            }),
        );
        match run(&spec) {
            Err(HarnessError::Cell { cell, .. }) => assert!(cell.contains("mesh=0.9")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sweeps_need_three_values_and_a_valid_axis() {
        let spec = ExperimentSpec::new(0, Experiment::LoewnerRoundtrip(LoewnerParams { steps: 64 }));
        assert!(convergence_sweep(&spec, SweepAxis::Dt, &[0.1, 0.05]).is_err());
        assert!(with_axis(&spec, SweepAxis::Mesh, 0.1).is_err());
        let sw = convergence_sweep(&spec, SweepAxis::Dt, &[1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0]).unwrap();
        // first-order: the driving error falls with dt
        assert!(sw.slope > 0.5, "{:?}", sw.metric);
        assert!(sw.svg().contains("<polyline"));
    }

    #[test]
    fn lag_options_follow_capacity_time() {
        let o = lag_options(1.0, 1024, 8.0 / 1024.0, 0.125);
        assert_eq!(o.min_lag, 8);
        assert_eq!(o.max_lag_fraction, 0.125);
    }
}
