//! Library side of the `instrasim` binary: argument types, grid parsing,
//! the three commands and table output.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{Map, Value};

use instrasim::analytic;
use instrasim::applications::hemisphere::{pi_fidelity_at, pi_tradeoff_curves, unsharp_z_tradeoff};
use instrasim::applications::seesaw::{seesaw_sequential_chsh, SeesawSettings, SeesawStatus};
use instrasim::conic::SolverSettings;
use instrasim::instruments::{
    kraus_to_choi, luders_unsharp, measure_prepare_noise, noise_instrument, sic_instrument,
    sic_states, ChoiInstrument, NoiseModel,
};
use instrasim::simulability::{critical_visibility_with, Noise, SchmidtTest, SimStatus};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<instrasim::Error> for CliError {
    fn from(e: instrasim::Error) -> Self {
        match e {
            instrasim::Error::Solver(m) => CliError::Solver(m),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "instrasim",
    version,
    about = "Projective simulability of quantum instruments"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// Output format.
    #[arg(
        long,
        global = true,
        value_enum,
        default_value = "csv",
        env = "INSTRASIM_FORMAT"
    )]
    pub format: Format,
    /// Output file; stdout when absent.
    #[arg(long, short, global = true, env = "INSTRASIM_OUTPUT")]
    pub output: Option<PathBuf>,
    /// Solver feasibility and gap tolerance.
    #[arg(long, global = true, default_value_t = 1e-8, env = "INSTRASIM_TOL")]
    pub tol: f64,
    /// Master seed for randomized commands.
    #[arg(long, global = true, default_value_t = 2024, env = "INSTRASIM_SEED")]
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0, env = "INSTRASIM_JOBS")]
    pub jobs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Critical visibility of an instrument against a noise model.
    Visibility(VisibilityArgs),
    /// Hemisphere information-disturbance trade-off curves.
    Hemisphere(HemisphereArgs),
    /// Sequential CHSH seesaw over a grid of S_AB floors.
    Seesaw(SeesawArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InstrumentKind {
    Luders,
    Sic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NoiseKind {
    Dephasing,
    White,
    WorstCase,
    MeasurePrepare,
}

impl NoiseKind {
    fn name(self) -> &'static str {
        match self {
            NoiseKind::Dephasing => "dephasing",
            NoiseKind::White => "white",
            NoiseKind::WorstCase => "worst-case",
            NoiseKind::MeasurePrepare => "measure-prepare",
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct VisibilityArgs {
    #[arg(long, value_enum, default_value = "luders")]
    pub instrument: InstrumentKind,
    /// Dimension of the Lüders instrument.
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, value_enum, default_value = "dephasing")]
    pub noise: NoiseKind,
    /// Single sharpness value.
    #[arg(long, conflicts_with = "gamma_grid")]
    pub gamma: Option<f64>,
    /// Sharpness grid `start:stop:step`.
    #[arg(long)]
    pub gamma_grid: Option<String>,
    /// Use the reduction-map relaxation even for qubit inputs.
    #[arg(long)]
    pub relaxed: bool,
}

#[derive(Args, Debug, Clone)]
pub struct HemisphereArgs {
    /// Success-probability grid `start:stop:step`.
    #[arg(long, default_value = "0.5:0.75:0.025")]
    pub p_grid: String,
    /// Also solve the PI witness program at each point.
    #[arg(long)]
    pub sdp: bool,
}

#[derive(Args, Debug, Clone)]
pub struct SeesawArgs {
    /// Single S_AB floor.
    #[arg(long, conflicts_with = "floor_grid")]
    pub floor: Option<f64>,
    /// Floor grid `start:stop:step`.
    #[arg(long, default_value = "2.0:2.13:0.01")]
    pub floor_grid: String,
    #[arg(long, default_value_t = 25, env = "INSTRASIM_RESTARTS")]
    pub restarts: usize,
    #[arg(long, default_value_t = 200)]
    pub max_rounds: usize,
    /// Stop once a round improves S_AC by less than this.
    #[arg(long, default_value_t = 1e-6)]
    pub stop_tol: f64,
    /// Write the full JSON report of every floor to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Parses `start:stop:step`. Points are start + k·step for k = 0..=K with
/// K = ⌊(stop − start)/step + 1/2⌋, so the endpoint is included within half
/// a step.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Config(format!("grid `{s}` is not start:stop:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !nums.iter().all(|x| x.is_finite()) || step <= 0.0 || stop < start {
        return Err(CliError::Config(format!(
            "grid `{s}` needs finite start ≤ stop and step > 0"
        )));
    }
    let k = ((stop - start) / step + 0.5).floor();
    if k > 1e6 {
        return Err(CliError::Config(format!("grid `{s}` has too many points")));
    }
    let k = k as usize;
    Ok((0..=k)
        .map(|i| {
            let x = start + i as f64 * step;
            if (x - stop).abs() < 1e-9 * step {
                stop
            } else {
                x
            }
        })
        .collect())
}

/// Cell of an output table.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Bool(bool),
    Null,
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Null, Cell::Num)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

/// 17 significant digits, enough to round-trip binary64.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(x) => fmt17(*x),
                    Cell::Int(i) => i.to_string(),
                    Cell::Text(t) => t.clone(),
                    Cell::Bool(b) => b.to_string(),
                    Cell::Null => String::new(),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json_value(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let mut m = Map::new();
                    for (k, c) in self.columns.iter().zip(row) {
                        let v = match c {
                            Cell::Num(x) => {
                                serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number)
                            }
                            Cell::Int(i) => Value::from(*i),
                            Cell::Text(t) => Value::from(t.clone()),
                            Cell::Bool(b) => Value::from(*b),
                            Cell::Null => Value::Null,
                        };
                        m.insert(k.to_string(), v);
                    }
                    Value::Object(m)
                })
                .collect(),
        )
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => {
                let mut s =
                    serde_json::to_string_pretty(&self.to_json_value()).expect("table serializes");
                s.push('\n');
                s
            }
        }
    }
}

fn solver_settings(tol: f64) -> Result<SolverSettings, CliError> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(CliError::Config(format!(
            "tolerance {tol} must lie in (0, 1)"
        )));
    }
    Ok(SolverSettings {
        feastol: tol,
        abstol: tol,
        reltol: tol,
        ..SolverSettings::default()
    })
}

fn analytic_visibility(args: &VisibilityArgs, gamma: f64) -> Option<f64> {
    if args.instrument != InstrumentKind::Luders {
        return None;
    }
    let v = match (args.d, args.noise) {
        (2, NoiseKind::Dephasing) if !args.relaxed => analytic::v_deph_qubit(gamma),
        (2, NoiseKind::White) if !args.relaxed => analytic::v_white_qubit(gamma),
        (2, NoiseKind::WorstCase) if !args.relaxed => analytic::v_worst_qubit(gamma),
        (d, NoiseKind::Dephasing) if d >= 3 => analytic::v_deph_highd_bound(d, gamma),
        (d, NoiseKind::WorstCase) if d >= 3 => analytic::v_worst_highd(d, gamma),
        _ => return None,
    };
    v.ok()
}

fn visibility_row(
    args: &VisibilityArgs,
    gamma: Option<f64>,
    settings: &SolverSettings,
) -> Result<Vec<Cell>, CliError> {
    let (c, d): (ChoiInstrument, usize) = match args.instrument {
        InstrumentKind::Luders => {
            let g = gamma.ok_or_else(|| {
                CliError::Config("Lüders instrument needs --gamma or --gamma-grid".into())
            })?;
            (kraus_to_choi(&luders_unsharp(args.d, g)?)?, args.d)
        }
        InstrumentKind::Sic => (kraus_to_choi(&sic_instrument())?, 2),
    };
    let noise = match args.noise {
        NoiseKind::Dephasing => Some(noise_instrument(
            &NoiseModel::Dephasing,
            c.n_outcomes(),
            d,
            d,
        )?),
        NoiseKind::White => Some(noise_instrument(&NoiseModel::White, c.n_outcomes(), d, d)?),
        NoiseKind::MeasurePrepare => match args.instrument {
            InstrumentKind::Sic => Some(measure_prepare_noise(&sic_states(), 2)?),
            InstrumentKind::Luders => {
                return Err(CliError::Config(
                    "measure-prepare noise is defined for the SIC instrument".into(),
                ))
            }
        },
        NoiseKind::WorstCase => None,
    };
    let schmidt = if d == 2 && !args.relaxed {
        SchmidtTest::Ppt
    } else {
        SchmidtTest::Reduction
    };
    let noise_arg = match &noise {
        Some(n) => Noise::Fixed(n),
        None => Noise::WorstCase,
    };
    let res = critical_visibility_with(&c, &noise_arg, schmidt, settings)?;
    if res.status != SimStatus::Optimal {
        return Err(CliError::Solver(format!(
            "visibility program at gamma = {gamma:?} ended with {:?} after {} iterations",
            res.solver_status, res.stats.iterations
        )));
    }
    let v = res.visibility.unwrap_or(f64::NAN);
    let residual = res.dual_bound.map(|b| (b - v).abs());
    Ok(vec![
        gamma.into(),
        Cell::Int(d as u64),
        Cell::Text(args.noise.name().into()),
        Cell::Num(v),
        gamma.and_then(|g| analytic_visibility(args, g)).into(),
        residual.into(),
        Cell::Bool(res.exact),
    ])
}

pub fn cmd_visibility(args: &VisibilityArgs, global: &GlobalOpts) -> Result<Table, CliError> {
    let settings = solver_settings(global.tol)?;
    let gammas: Vec<Option<f64>> = match (&args.gamma, &args.gamma_grid, args.instrument) {
        (_, _, InstrumentKind::Sic) => vec![None],
        (Some(g), _, _) => vec![Some(*g)],
        (None, Some(grid), _) => parse_grid(grid)?.into_iter().map(Some).collect(),
        (None, None, _) => return Err(CliError::Config("give --gamma or --gamma-grid".into())),
    };
    if args.d < 2 {
        return Err(CliError::Config("--d must be at least 2".into()));
    }
    let rows: Vec<Vec<Cell>> = gammas
        .par_iter()
        .map(|g| visibility_row(args, *g, &settings))
        .collect::<Result<_, _>>()?;
    Ok(Table {
        columns: vec![
            "gamma",
            "d",
            "noise",
            "v_sdp",
            "v_analytic",
            "residual",
            "exact",
        ],
        rows,
    })
}

pub fn cmd_hemisphere(args: &HemisphereArgs) -> Result<Table, CliError> {
    let grid = parse_grid(&args.p_grid)?;
    let rows = grid
        .par_iter()
        .map(|&p| {
            let (f_pi, f_q) = pi_tradeoff_curves(p)?;
            let gamma = (4.0 * (p - 0.5)).clamp(0.0, 1.0);
            let f_z = unsharp_z_tradeoff(gamma)?.fidelity;
            let mut row = vec![
                Cell::Num(p),
                Cell::Num(f_pi),
                Cell::Num(f_q),
                Cell::Num(f_z),
            ];
            if args.sdp {
                row.push(Cell::Num(pi_fidelity_at(p)?));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut columns = vec!["p_win", "f_pi", "f_q", "f_unsharp_z"];
    if args.sdp {
        columns.push("f_pi_sdp");
    }
    Ok(Table { columns, rows })
}

/// Runs the seesaw at every floor. Returns the summary table and the full
/// per-floor reports.
pub fn cmd_seesaw(args: &SeesawArgs, global: &GlobalOpts) -> Result<(Table, Value), CliError> {
    let floors = match args.floor {
        Some(f) => vec![f],
        None => parse_grid(&args.floor_grid)?,
    };
    if !(args.stop_tol > 0.0) {
        return Err(CliError::Config("--stop-tol must be positive".into()));
    }
    let settings = SeesawSettings {
        restarts: args.restarts,
        max_rounds: args.max_rounds,
        tol: args.stop_tol,
    };
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for f in floors {
        let r = seesaw_sequential_chsh(f, &settings, global.seed)?;
        let status = match r.best.status {
            SeesawStatus::Converged => "converged",
            SeesawStatus::MaxRounds => "max-rounds",
            SeesawStatus::FloorNotReached => "floor-not-reached",
        };
        rows.push(vec![
            Cell::Num(f),
            Cell::Num(r.best.s_ab),
            Cell::Num(r.best.s_ac),
            Cell::Int(global.seed),
            Cell::Text(status.into()),
        ]);
        reports.push(r.to_json_value());
    }
    Ok((
        Table {
            columns: vec!["floor", "s_ab", "s_ac", "seed", "status"],
            rows,
        },
        Value::Array(reports),
    ))
}

fn write_out(path: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(g.jobs)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        let table = match &cli.command {
            Command::Visibility(a) => cmd_visibility(a, g)?,
            Command::Hemisphere(a) => cmd_hemisphere(a)?,
            Command::Seesaw(a) => {
                let (t, reports) = cmd_seesaw(a, g)?;
                if let Some(p) = &a.report {
                    let text = serde_json::to_string_pretty(&reports).expect("report serializes");
                    std::fs::write(p, text)?;
                }
                t
            }
        };
        write_out(&g.output, &table.render(g.format))
    })
}
