//! Batch entry points of the `ajtwin` binary. Every command reads flat files,
//! writes delimited tables and is deterministic given its inputs.

use std::fmt;
use std::path::{Path, PathBuf};

use ajtwin_core::config::{FlatConfig, PARAMS_ENV};
use ajtwin_core::estimation::forecast::forecast;
use ajtwin_core::estimation::init::DEFAULT_WINDOW;
use ajtwin_core::estimation::{
    default_prior_covariance, ekf_run, em_calibrate, estimate_initial_state, filter_data, rts_smooth, EmSettings,
    TwinStateSpace,
};
use ajtwin_core::params::validate_parameters;
use ajtwin_core::profile::{
    cfd_profile_metrics, extract_grayscale_metrics, moving_average, CrossSection, Extraction, ProfileKind,
};
use ajtwin_core::simulator::synth::DEFAULT_BACKGROUND;
use ajtwin_core::simulator::{simulate, Scenario};
use ajtwin_core::table::{round_display, split_header, Table, TimeSeriesTable};
use ajtwin_core::units::{from_si, Dimension, Unit};
use ajtwin_core::{InputVector, ModelParams, StateVector, ThetaParams, TimeSeriesRecord, TwinError};
use clap::{Args, Parser, Subcommand};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_EMPTY: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

pub const STATE_COLUMNS: [(&str, Unit); 5] = [
    ("d_a", Unit::Micrometre),
    ("V_l", Unit::Millilitre),
    ("dr_T", Unit::Micrometre),
    ("dr_N", Unit::Micrometre),
    ("phi_A", Unit::Dimensionless),
];
pub const OUTPUT_COLUMNS: [(&str, Unit); 5] = [
    ("L_w", Unit::Micrometre),
    ("L_o", Unit::Micrometre),
    ("P_c", Unit::Pascal),
    ("P_s", Unit::Pascal),
    ("Q_m", Unit::Sccm),
];
const INPUT_COLUMNS: [(&str, Unit); 3] = [("I_A", Unit::Milliamp), ("Q_c", Unit::Sccm), ("Q_s", Unit::Sccm)];

#[derive(Debug, Parser)]
#[command(name = "ajtwin", version, about = "Aerosol-jet printer digital twin")]
pub struct Cli {
    /// Model parameter bundle. Without it, `AJTWIN_PARAMS` names the bundle;
    /// otherwise the built-in defaults apply.
    #[arg(long, global = true)]
    pub params: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario on the virtual printer; writes trace.csv and truth.csv.
    Simulate {
        scenario: PathBuf,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Step size override (s).
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Filter a recorded table; adds state means and ±2σ bounds.
    Estimate {
        table: PathBuf,
        #[command(flatten)]
        est: EstimationArgs,
        /// Fixed-interval smoothing over the whole record.
        #[arg(long)]
        smooth: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the drift parameters θ to a recorded table.
    Calibrate {
        table: PathBuf,
        #[command(flatten)]
        est: EstimationArgs,
        #[arg(long, default_value_t = 50)]
        max_iterations: usize,
        /// Leading frames left out of the fit; EM starts from the filtered
        /// belief at this frame, past the start-up transient.
        #[arg(long, default_value_t = 0)]
        skip: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Forecast outputs past the end of a recorded table.
    Forecast {
        table: PathBuf,
        /// Input schedule table `t[s],I_A[mA],Q_c[sccm],Q_s[sccm]`, times
        /// relative to the last record; absent means hold the last input.
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        horizon: usize,
        #[command(flatten)]
        est: EstimationArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Linewidth and overspray of a cross-section profile.
    AnalyzeProfile {
        profile: PathBuf,
        /// Expected kind; must agree with the file header.
        #[arg(long)]
        kind: Option<String>,
        /// Substrate gray level.
        #[arg(long, default_value_t = DEFAULT_BACKGROUND)]
        background: f64,
        /// Plot-ready table of the raw and smoothed profile.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve twin sessions over TCP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
        /// Directory that relative file paths in requests resolve against.
        #[arg(long, default_value = ".")]
        root: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct EstimationArgs {
    /// θ file (`theta.da = … 1/s` lines, as written by `calibrate`).
    #[arg(long)]
    pub theta: Option<PathBuf>,
    /// Frames used for the initial-state fit.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    /// Sample period (s); defaults to the table's uniform spacing.
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }

    pub fn empty(message: impl Into<String>) -> Self {
        Self { code: EXIT_EMPTY, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<TwinError> for CliError {
    fn from(e: TwinError) -> Self {
        let code = match e {
            TwinError::Config { .. }
            | TwinError::Table(_)
            | TwinError::InvalidInput(_)
            | TwinError::UnknownUnit(_)
            | TwinError::Io(_) => EXIT_INPUT,
            _ => EXIT_NUMERICAL,
        };
        Self { code, message: e.to_string() }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn with_path<T>(path: &Path, r: ajtwin_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })
}

/// Bundle from `--params`, else the environment override, else defaults.
pub fn load_params(flag: Option<&Path>) -> CliResult<ModelParams> {
    let env = std::env::var_os(PARAMS_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    let params = match flag.map(Path::to_path_buf).or(env) {
        Some(path) => with_path(&path, ModelParams::load(&path))?,
        None => ModelParams::default(),
    };
    let violations = validate_parameters(&params);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(CliError::input(format!("invalid parameters: {}", list.join("; "))));
    }
    Ok(params)
}

fn load_theta(path: Option<&Path>) -> CliResult<ThetaParams> {
    match path {
        None => Ok(ThetaParams::zero()),
        Some(p) => with_path(p, FlatConfig::load(p).and_then(|c| ThetaParams::from_config(&c))),
    }
}

/// Runs one command; text destined for stdout is returned.
pub fn run(cli: Cli) -> CliResult<String> {
    let params = || load_params(cli.params.as_deref());
    match cli.command {
        Command::Simulate { scenario, out, seed, dt } => cmd_simulate(&params()?, &scenario, &out, seed, dt),
        Command::Estimate { table, est, smooth, out } => {
            let text = cmd_estimate(&params()?, &table, &est, smooth)?;
            emit(text, out.as_deref())
        }
        Command::Calibrate { table, est, max_iterations, skip, out } => {
            let text = cmd_calibrate(&params()?, &table, &est, max_iterations, skip)?;
            emit(text, out.as_deref())
        }
        Command::Forecast { table, schedule, horizon, est, out } => {
            let text = cmd_forecast(&params()?, &table, schedule.as_deref(), horizon, &est)?;
            emit(text, out.as_deref())
        }
        Command::AnalyzeProfile { profile, kind, background, out } => {
            cmd_analyze_profile(&profile, kind.as_deref(), background, out.as_deref())
        }
        Command::Serve { addr, root } => cmd_serve(params()?, &addr, root),
    }
}

fn emit(text: String, out: Option<&Path>) -> CliResult<String> {
    match out {
        None => Ok(text),
        Some(p) => {
            std::fs::write(p, text).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
            Ok(String::new())
        }
    }
}

pub fn cmd_simulate(
    params: &ModelParams,
    path: &Path,
    out: &Path,
    seed: Option<u64>,
    dt: Option<f64>,
) -> CliResult<String> {
    let mut scenario = with_path(path, Scenario::load(path))?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    if let Some(dt) = dt {
        scenario.dt = dt;
        with_path(path, scenario.validate())?;
    }
    let trace = simulate(&scenario, params)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::input(format!("{}: {e}", out.display())))?;
    let trace_path = out.join("trace.csv");
    let truth_path = out.join("truth.csv");
    with_path(&trace_path, trace.to_table().write(&trace_path))?;
    with_path(&truth_path, trace.truth_table().write(&truth_path))?;
    let mut msg = format!("{} steps -> {}, {}\n", trace.len(), trace_path.display(), truth_path.display());
    if let Some(t) = trace.terminal {
        msg.push_str(&format!("terminal: {t:?}\n"));
    }
    Ok(msg)
}

struct Loaded {
    records: Vec<TimeSeriesRecord>,
    dt: f64,
}

fn load_table(path: &Path, dt: Option<f64>) -> CliResult<Loaded> {
    let table = with_path(path, TimeSeriesTable::read(path))?;
    if table.is_empty() {
        return Err(CliError::empty(format!("{}: table has no rows", path.display())));
    }
    let dt = match dt {
        Some(d) if d > 0.0 && d.is_finite() => d,
        Some(d) => return Err(CliError::input(format!("--dt must be positive, got {d}"))),
        None => match table.uniform_dt() {
            Some(d) => d,
            None if table.len() == 1 => 1.0,
            None => return Err(CliError::input(format!("{}: non-uniform time column; pass --dt", path.display()))),
        },
    };
    Ok(Loaded { records: table.to_records(), dt })
}

fn initial_state(model: &ajtwin_core::physics::TwinModel, records: &[TimeSeriesRecord], window: usize) -> CliResult<StateVector> {
    if window == 0 {
        return Err(CliError::input("--window must be at least 1"));
    }
    let n = window.min(records.len());
    Ok(estimate_initial_state(model, &records[..n])?.state)
}

/// Header `name[unit]`.
fn col(name: &str, unit: Unit) -> String {
    format!("{name}[{}]", unit.symbol())
}

pub fn cmd_estimate(params: &ModelParams, path: &Path, est: &EstimationArgs, smooth: bool) -> CliResult<String> {
    let data = load_table(path, est.dt)?;
    let theta = load_theta(est.theta.as_deref())?;
    let model = ajtwin_core::physics::TwinModel::new(params.clone());
    let x0 = initial_state(&model, &data.records, est.window)?;
    let ss = TwinStateSpace::new(&model, theta, data.dt);
    let p0 = default_prior_covariance(params);
    let filt = ekf_run(&ss, &filter_data(&data.records), &x0.to_dvector(), &p0)?;
    let smoothed = if smooth { Some(rts_smooth(&filt)?) } else { None };

    let mut header = vec!["t[s]".to_string()];
    for (name, unit) in STATE_COLUMNS {
        header.push(col(name, unit));
        header.push(col(&format!("{name}_lo"), unit));
        header.push(col(&format!("{name}_hi"), unit));
    }
    header.push("trace_P[1]".into());
    header.push("nis[1]".into());
    let mut table = Table::new(header);
    for (k, rec) in data.records.iter().enumerate() {
        let (mean, cov, p_norm) = match &smoothed {
            Some(s) => (s.mean(k), s.covariance(k), &s.covariances[k]),
            None => (filt.mean(k), filt.covariance(k), &filt.steps[k].p_upd),
        };
        let mut row = vec![Some(rec.t)];
        for (i, (_, unit)) in STATE_COLUMNS.iter().enumerate() {
            let sd = cov[(i, i)].max(0.0).sqrt();
            for v in [mean[i], mean[i] - 2.0 * sd, mean[i] + 2.0 * sd] {
                row.push(Some(round_display(from_si(v, *unit))));
            }
        }
        // Trace in the filter's normalised coordinates, comparable across states.
        row.push(Some(round_display(p_norm.trace())));
        let nis = &filt.steps[k];
        row.push((!nis.observed.is_empty()).then(|| round_display(nis.nis)));
        table.rows.push(row);
    }
    Ok(table.to_csv())
}

pub fn cmd_calibrate(
    params: &ModelParams,
    path: &Path,
    est: &EstimationArgs,
    max_iterations: usize,
    skip: usize,
) -> CliResult<String> {
    let data = load_table(path, est.dt)?;
    if data.records.len() < skip + 2 {
        return Err(CliError::empty(format!("{}: calibration needs at least two rows after --skip", path.display())));
    }
    let theta0 = load_theta(est.theta.as_deref())?;
    let model = ajtwin_core::physics::TwinModel::new(params.clone());
    let x_fit = initial_state(&model, &data.records, est.window)?;
    let p_fit = default_prior_covariance(params);
    let (x0, p0) = if skip == 0 {
        (x_fit, p_fit)
    } else {
        let ss = TwinStateSpace::new(&model, theta0, data.dt);
        let filt = ekf_run(&ss, &filter_data(&data.records[..=skip]), &x_fit.to_dvector(), &p_fit)?;
        let b = filt.belief(skip);
        (b.mean, b.covariance)
    };
    let settings = EmSettings { max_iterations: max_iterations.max(1), dt: data.dt, ..Default::default() };
    let report = em_calibrate(&model, &data.records[skip..], &x0, &p0, theta0, &settings)?;
    Ok(report.to_text())
}

/// Schedule rows `(t offset, input)`, sorted by time.
fn load_schedule(path: &Path) -> CliResult<Vec<(f64, [Option<f64>; 3])>> {
    let table = with_path(path, Table::read(path))?;
    let t_col = table
        .column("t")
        .ok_or_else(|| CliError::input(format!("{}: schedule lacks a `t[s]` column", path.display())))?;
    check_unit(path, &table.header[t_col], Dimension::Time)?;
    let mut cols = [None; 3];
    for (i, (name, unit)) in INPUT_COLUMNS.iter().enumerate() {
        if let Some(c) = table.column(name) {
            check_unit(path, &table.header[c], unit.dimension())?;
            cols[i] = Some(c);
        }
    }
    for h in &table.header {
        let name = split_header(h).0;
        if name != "t" && !INPUT_COLUMNS.iter().any(|(n, _)| *n == name) {
            return Err(CliError::input(format!("{}: unknown schedule column `{h}`", path.display())));
        }
    }
    let mut rows = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (r, row) in table.rows.iter().enumerate() {
        let unit_of = |c: usize| -> CliResult<Unit> { Ok(split_header(&table.header[c]).1.unwrap_or("").parse::<Unit>()?) };
        let t = row[t_col].ok_or_else(|| CliError::input(format!("{}: row {} has no time", path.display(), r + 1)))?;
        let t = ajtwin_core::units::to_si(t, unit_of(t_col)?);
        if t.is_nan() || t <= last {
            return Err(CliError::input(format!("{}: schedule times must increase (row {})", path.display(), r + 1)));
        }
        last = t;
        let mut u = [None; 3];
        for (i, c) in cols.iter().enumerate() {
            if let Some(c) = c {
                u[i] = row[*c].map(|v| unit_of(*c).map(|unit| ajtwin_core::units::to_si(v, unit))).transpose()?;
            }
        }
        rows.push((t, u));
    }
    Ok(rows)
}

fn check_unit(path: &Path, header: &str, dim: Dimension) -> CliResult<()> {
    let (name, unit) = split_header(header);
    let unit = unit.ok_or_else(|| CliError::input(format!("{}: column `{name}` needs a unit suffix", path.display())))?;
    let u: Unit = unit.parse().map_err(|_| CliError::input(format!("{}: column `{header}`: unknown unit", path.display())))?;
    if u.dimension() != dim {
        return Err(CliError::input(format!("{}: column `{header}` has the wrong dimension", path.display())));
    }
    Ok(())
}

pub fn cmd_forecast(
    params: &ModelParams,
    path: &Path,
    schedule: Option<&Path>,
    horizon: usize,
    est: &EstimationArgs,
) -> CliResult<String> {
    if horizon == 0 {
        return Err(CliError::input("--horizon must be at least 1"));
    }
    let data = load_table(path, est.dt)?;
    let theta = load_theta(est.theta.as_deref())?;
    let rows = match schedule {
        Some(p) => load_schedule(p)?,
        None => Vec::new(),
    };
    let model = ajtwin_core::physics::TwinModel::new(params.clone());
    let x0 = initial_state(&model, &data.records, est.window)?;
    let ss = TwinStateSpace::new(&model, theta, data.dt);
    let filt = ekf_run(&ss, &filter_data(&data.records), &x0.to_dvector(), &default_prior_covariance(params))?;
    let last = data.records.len() - 1;
    let belief = filt.belief(last);
    let current = data.records[last].u;

    let mut a = [current.i_a, current.q_c, current.q_s];
    let mut next = 0;
    let mut inputs = Vec::with_capacity(horizon);
    for j in 1..=horizon {
        let t = j as f64 * data.dt;
        while next < rows.len() && rows[next].0 <= t + 1e-9 * data.dt {
            for (slot, v) in a.iter_mut().zip(rows[next].1) {
                if let Some(v) = v {
                    *slot = v;
                }
            }
            next += 1;
        }
        let u = InputVector::new(a[0], a[1], a[2]);
        if !u.is_valid() {
            return Err(CliError::input(format!("invalid scheduled input at lead {j}")));
        }
        inputs.push(u);
    }
    let steps = forecast(&model, &belief, &theta, &current, &inputs, data.dt)?;

    let mut header = vec!["t[s]".to_string(), "lead[1]".to_string()];
    header.extend(INPUT_COLUMNS.iter().map(|(n, u)| col(n, *u)));
    for (name, unit) in OUTPUT_COLUMNS {
        header.push(col(name, unit));
        header.push(col(&format!("{name}_lo"), unit));
        header.push(col(&format!("{name}_hi"), unit));
    }
    let mut table = Table::new(header);
    let t0 = data.records[last].t;
    for s in &steps {
        let mut row = vec![Some(round_display(t0 + s.lead as f64 * data.dt)), Some(s.lead as f64)];
        let u = [s.input.i_a, s.input.q_c, s.input.q_s];
        row.extend(INPUT_COLUMNS.iter().zip(u).map(|((_, unit), v)| Some(round_display(from_si(v, *unit)))));
        let m = s.output_mean.to_array();
        let sd = s.output_std();
        for (i, (_, unit)) in OUTPUT_COLUMNS.iter().enumerate() {
            for v in [m[i], m[i] - 2.0 * sd[i], m[i] + 2.0 * sd[i]] {
                row.push(Some(round_display(from_si(v, *unit))));
            }
        }
        table.rows.push(row);
    }
    Ok(table.to_csv())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| ajtwin_core::table::format_number(round_display(from_si(x, Unit::Micrometre)))).unwrap_or_else(|| "NA".into())
}

pub fn cmd_analyze_profile(path: &Path, kind: Option<&str>, background: f64, out: Option<&Path>) -> CliResult<String> {
    let cs = with_path(path, CrossSection::read(path))?;
    if let Some(k) = kind {
        let want: ProfileKind = k.parse()?;
        if want != cs.kind {
            return Err(CliError::input(format!(
                "{}: file holds a {} profile, --kind says {}",
                path.display(),
                cs.kind.name(),
                want.name()
            )));
        }
    }
    let extraction = match cs.kind {
        ProfileKind::Grayscale => extract_grayscale_metrics(&cs, background)?,
        ProfileKind::Height => cfd_profile_metrics(&cs)?,
    };
    if let Some(p) = out {
        let value_unit = match cs.kind {
            ProfileKind::Height => Unit::Micrometre,
            ProfileKind::Grayscale => Unit::Dimensionless,
        };
        let mut table =
            Table::new(vec!["r[um]".into(), col("value", value_unit), col("smoothed", value_unit)]);
        let smooth = moving_average(&cs.values, 3);
        for ((r, v), s) in cs.positions.iter().zip(&cs.values).zip(&smooth) {
            table.rows.push(vec![
                Some(round_display(from_si(*r, Unit::Micrometre))),
                Some(round_display(from_si(*v, value_unit))),
                Some(round_display(from_si(*s, value_unit))),
            ]);
        }
        with_path(p, table.write(p))?;
    }
    match extraction {
        Extraction::NoLine => Err(CliError::empty(format!("{}: no line found", path.display()))),
        Extraction::Line(m) => Ok(format!(
            "kind={} center[um]={} L_w[um]={} L_o[um]={} partial={}\n",
            cs.kind.name(),
            fmt_opt(Some(m.center)),
            fmt_opt(m.l_w),
            fmt_opt(m.l_o),
            m.is_partial()
        )),
    }
}

fn cmd_serve(params: ModelParams, addr: &str, root: PathBuf) -> CliResult<String> {
    use std::sync::Arc;
    let host = Arc::new(ajtwin_service::Host::new(params, root));
    let server = ajtwin_service::Server::bind(addr, host).map_err(|e| CliError::input(format!("{addr}: {e}")))?;
    let local = server.local_addr().map_err(|e| CliError::input(e.to_string()))?;
    eprintln!("listening on {local}");
    server.serve().map_err(|e| CliError { code: 1, message: e.to_string() })?;
    Ok(String::new())
}
