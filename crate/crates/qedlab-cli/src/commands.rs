use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array1;
use num_complex::Complex64 as C64;

use qedlab::fock::{self, ModeGridConfig};
use qedlab::generator::{assemble_generator, generator_report, BlockOperator};
use qedlab::matter::{load_model, MatterModel, ModelError};
use qedlab::quad::QuadConfig;
use qedlab::semigroup::SemigroupEngine;
use qedlab::{approx, ApproxError, FockError, GeneratorError, SemigroupError};

/// Exit-code contract: 0 success, 1 I/O, 2 validation, 3 numerical
/// failure, 4 dimension cap.
#[derive(Debug)]
pub enum CliError {
    Io(String),
    Validation(String),
    Numerical(String),
    Cap(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Cap(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Io(m) | CliError::Validation(m) | CliError::Numerical(m) | CliError::Cap(m) => m,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io(_) | ModelError::Json(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<GeneratorError> for CliError {
    fn from(e: GeneratorError) -> Self {
        match e {
            GeneratorError::ShapeMismatch { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SemigroupError> for CliError {
    fn from(e: SemigroupError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<ApproxError> for CliError {
    fn from(e: ApproxError) -> Self {
        match e {
            ApproxError::EqualLevels | ApproxError::EqualStates | ApproxError::NonPositiveCoupling(_) => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<FockError> for CliError {
    fn from(e: FockError) -> Self {
        match e {
            FockError::DimensionCap { .. } => CliError::Cap(e.to_string()),
            FockError::InvalidGrid(_) | FockError::BadPhotonCap(_) => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "qedlab",
    about = "Few-level emitter in the quantized photon field: generator, semigroup, non-Markov and Rabi approximations, truncated-Fock oracle"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct CommonArgs {
    /// Model JSON file
    #[arg(long)]
    model: PathBuf,
    /// Repeatable quadrature key, e.g. --quad sphere_degree=24
    /// (also accepted spelled --quad.sphere_degree=24)
    #[arg(long = "quad", value_name = "KEY=VAL")]
    quad: Vec<String>,
    /// RNG seed for audits and sample draws
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Args)]
struct GridArgs {
    /// Final time of the trajectory grid
    #[arg(long, default_value_t = 40.0)]
    tmax: f64,
    /// Number of grid points (including t = 0 and t = tmax)
    #[arg(long, default_value_t = 81)]
    tsteps: usize,
    /// Coupling constants, comma separated
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    g: Vec<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a model file and print a summary
    ModelValidate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Assemble the dissipative generator and emit its JSON report
    Generator {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the identity residual ‖L(I)‖ and exit
        #[arg(long = "check-h4", default_value_t = false)]
        check_h4: bool,
    },
    /// Markov-semigroup transition probabilities on a time grid
    Evolve {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Non-Markovian transition probability for one (from, to) pair
    Nonmarkov {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// initial basis state (flattened index)
        #[arg(long)]
        from: usize,
        /// final basis state (flattened index)
        #[arg(long)]
        to: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leading-order Rabi signal between two levels
    Rabi {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// lower level index λ
        #[arg(long)]
        from: usize,
        /// upper level index μ (observable X = π on its first state)
        #[arg(long)]
        to: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Truncated-Fock oracle trajectories for every ordered basis pair
    Oracle {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// photon-number cap
        #[arg(long, default_value_t = 2)]
        nmax: usize,
        /// approximate number of momentum modes
        #[arg(long, default_value_t = 64)]
        modes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every applicable method on a shared grid and tabulate errors
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        from: usize,
        #[arg(long)]
        to: usize,
        #[arg(long, default_value_t = 2)]
        nmax: usize,
        #[arg(long, default_value_t = 64)]
        modes: usize,
        /// skip the oracle column (fast, analytic methods only)
        #[arg(long, default_value_t = false)]
        no_oracle: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Rewrite `--quad.KEY=VAL` into `--quad KEY=VAL` so both spellings work.
fn preprocess_args() -> Vec<String> {
    let mut out = Vec::new();
    for arg in std::env::args() {
        if let Some(rest) = arg.strip_prefix("--quad.") {
            out.push("--quad".to_string());
            out.push(rest.to_string());
        } else {
            out.push(arg);
        }
    }
    out
}

pub fn run() -> i32 {
    let cli = Cli::parse_from(preprocess_args());
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn quad_config(args: &CommonArgs) -> Result<QuadConfig, CliError> {
    let mut config = QuadConfig::default();
    for kv in &args.quad {
        let Some((key, val)) = kv.split_once('=') else {
            return Err(CliError::Validation(format!(
                "quadrature key must be KEY=VAL, got {kv}"
            )));
        };
        let parse_f = || {
            val.parse::<f64>()
                .map_err(|_| CliError::Validation(format!("bad value for quad.{key}: {val}")))
        };
        let parse_u = || {
            val.parse::<usize>()
                .map_err(|_| CliError::Validation(format!("bad value for quad.{key}: {val}")))
        };
        match key {
            "sphere_degree" => config.sphere_degree = parse_u()?,
            "radial_nodes" => config.radial_nodes = parse_u()?,
            "pv_window_frac" => config.pv_window_frac = parse_f()?,
            "tol" => config.tol = parse_f()?,
            _ => {
                return Err(CliError::Validation(format!(
                    "unknown quadrature key: {key}"
                )))
            }
        }
    }
    Ok(config)
}

fn load(common: &CommonArgs) -> Result<MatterModel, CliError> {
    Ok(load_model(&common.model)?)
}

fn time_grid(grid: &GridArgs) -> Result<Vec<f64>, CliError> {
    if grid.tmax <= 0.0 || grid.tsteps < 2 {
        return Err(CliError::Validation(
            "time grid needs tmax > 0 and tsteps >= 2".into(),
        ));
    }
    if grid.g.is_empty() || grid.g.iter().any(|&g| g <= 0.0) {
        return Err(CliError::Validation(
            "coupling list must be nonempty and positive".into(),
        ));
    }
    Ok((0..grid.tsteps)
        .map(|i| grid.tmax * i as f64 / (grid.tsteps - 1) as f64)
        .collect())
}

fn write_output(path: Option<&Path>, content: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, content).map_err(CliError::from),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn fnum(x: f64) -> String {
    format!("{x:.12e}")
}

fn grid_config_for(modes: usize, model: &MatterModel) -> ModeGridConfig {
    // distribute the mode budget over 6 angular nodes and radial panels,
    // 70% of the radial nodes on the resonant shells
    let mut shells = 0;
    for j in 0..model.n_levels() {
        for m in 0..j {
            if model.energy(j) > model.energy(m) {
                shells += 1;
            }
        }
    }
    let shells = shells.max(1);
    let radial = (modes / 6).max(8);
    // the off-resonant background needs enough nodes for the weight
    // integral check; shells take the remainder. Shell node spacing sets
    // the recurrence horizon of the discretized continuum: budget
    // accordingly (see ModeGridConfig docs).
    let background = (radial * 3 / 10).max(6);
    let shell_nodes = ((radial.saturating_sub(background)) / shells).max(4);
    ModeGridConfig {
        shell_nodes,
        background_nodes: background,
        ..ModeGridConfig::default()
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::ModelValidate { common } => cmd_model_validate(&common),
        Command::Generator {
            common,
            out,
            check_h4,
        } => cmd_generator(&common, out.as_deref(), check_h4),
        Command::Evolve { common, grid, out } => cmd_evolve(&common, &grid, out.as_deref()),
        Command::Nonmarkov {
            common,
            grid,
            from,
            to,
            out,
        } => cmd_nonmarkov(&common, &grid, from, to, out.as_deref()),
        Command::Rabi {
            common,
            grid,
            from,
            to,
            out,
        } => cmd_rabi(&common, &grid, from, to, out.as_deref()),
        Command::Oracle {
            common,
            grid,
            nmax,
            modes,
            out,
        } => cmd_oracle(&common, &grid, nmax, modes, out.as_deref()),
        Command::Compare {
            common,
            grid,
            from,
            to,
            nmax,
            modes,
            no_oracle,
            out,
        } => cmd_compare(&common, &grid, from, to, nmax, modes, no_oracle, out.as_deref()),
    }
}

fn cmd_model_validate(common: &CommonArgs) -> Result<(), CliError> {
    let model = load(common)?;
    println!(
        "model ok: {} levels, total dimension {}",
        model.n_levels(),
        model.total_dim()
    );
    for (i, level) in model.levels.iter().enumerate() {
        println!("  level {i}: energy {:+.6}, dim {}", level.energy, level.dim);
    }
    let pairs: Vec<String> = model
        .coupled_pairs()
        .filter(|(j, m)| j < m)
        .map(|(j, m)| format!("({j},{m})"))
        .collect();
    println!("  coupled pairs: {}", pairs.join(" "));
    println!(
        "  cutoff: order {}, scale {}, amplitude {}",
        model.cutoff.vanishing_order, model.cutoff.scale, model.cutoff.amplitude
    );
    Ok(())
}

fn cmd_generator(common: &CommonArgs, out: Option<&Path>, check_h4: bool) -> Result<(), CliError> {
    let model = load(common)?;
    let config = quad_config(common)?;
    let gen = assemble_generator(&model, &config)?;
    if check_h4 {
        let identity = BlockOperator::identity(&gen.level_dims);
        let li = qedlab::apply_generator(&gen, &identity)?;
        println!("identity residual: ||L(I)|| = {:.6e} (||T|| = {:.6e})", li.operator_norm(), gen.t_norm());
    }
    let report = generator_report(&gen, common.seed);
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    write_output(out, &(json + "\n"))?;
    if !report.hypotheses.fgr_holds {
        eprintln!("warning: FGR margin is zero; no exponential relaxation guarantee");
    }
    Ok(())
}

/// Trajectory CSV: t, then P(j→m) for each ordered pair of flattened
/// basis states.
fn trajectory_csv(
    model: &MatterModel,
    times: &[f64],
    value: impl Fn(usize, usize, f64) -> Result<f64, CliError>,
) -> Result<String, CliError> {
    let n = model.total_dim();
    let mut header = vec!["t".to_string()];
    for j in 0..n {
        for m in 0..n {
            header.push(format!("p_{j}_to_{m}"));
        }
    }
    let mut csv = header.join(",") + "\n";
    for &t in times {
        let mut row = vec![fnum(t)];
        for j in 0..n {
            for m in 0..n {
                row.push(fnum(value(j, m, t)?));
            }
        }
        csv.push_str(&(row.join(",") + "\n"));
    }
    Ok(csv)
}

fn cmd_evolve(common: &CommonArgs, grid: &GridArgs, out: Option<&Path>) -> Result<(), CliError> {
    let model = load(common)?;
    let config = quad_config(common)?;
    let times = time_grid(grid)?;
    let gen = assemble_generator(&model, &config)?;
    let engine = SemigroupEngine::new(gen)?;
    for (gi, &g) in grid.g.iter().enumerate() {
        let csv = trajectory_csv(&model, &times, |j, m, t| {
            let from = model.state_of_global(j);
            let to = model.state_of_global(m);
            Ok(engine.markov_transition_probability(from, to, t, g)?)
        })?;
        let path = per_g_path(out, gi, g, grid.g.len());
        write_output(path.as_deref(), &csv)?;
    }
    Ok(())
}

fn per_g_path(out: Option<&Path>, index: usize, g: f64, count: usize) -> Option<PathBuf> {
    let base = out?;
    if count == 1 {
        return Some(base.to_path_buf());
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    let _ = index;
    Some(base.with_file_name(format!("{stem}_g{g}.{ext}")))
}

fn cmd_nonmarkov(
    common: &CommonArgs,
    grid: &GridArgs,
    from: usize,
    to: usize,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let model = load(common)?;
    let config = quad_config(common)?;
    let times = time_grid(grid)?;
    check_state(&model, from)?;
    check_state(&model, to)?;
    let fs = model.state_of_global(from);
    let ts = model.state_of_global(to);
    let mut header = vec!["t".to_string()];
    for &g in &grid.g {
        header.push(format!("p_nonmarkov_g{g}"));
    }
    let mut csv = header.join(",") + "\n";
    for &t in &times {
        let mut row = vec![fnum(t)];
        for &g in &grid.g {
            row.push(fnum(approx::non_markov_probability(
                &model, fs, ts, t, g, &config,
            )?));
        }
        csv.push_str(&(row.join(",") + "\n"));
    }
    write_output(out, &csv)
}

fn check_state(model: &MatterModel, idx: usize) -> Result<(), CliError> {
    if idx >= model.total_dim() {
        return Err(CliError::Validation(format!(
            "basis index {idx} out of range (total dimension {})",
            model.total_dim()
        )));
    }
    Ok(())
}

fn cmd_rabi(
    common: &CommonArgs,
    grid: &GridArgs,
    from: usize,
    to: usize,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let model = load(common)?;
    let config = quad_config(common)?;
    let times = time_grid(grid)?;
    if from >= model.n_levels() || to >= model.n_levels() {
        return Err(CliError::Validation(format!(
            "rabi levels ({from},{to}) out of range ({} levels)",
            model.n_levels()
        )));
    }
    let g = grid.g[0];
    let dims: Vec<usize> = (0..model.n_levels()).map(|l| model.dim(l)).collect();
    let x = BlockOperator::basis_projector(&dims, to.max(from), 0);
    let signal = approx::rabi_signal(&model, &x, from, to, g, &config)?;
    let mut csv = String::from("t,re_signal,im_signal\n");
    for &t in &times {
        let v = signal.eval(t);
        let _ = writeln!(csv, "{},{},{}", fnum(t), fnum(v.re), fnum(v.im));
    }
    write_output(out, &csv)
}

fn cmd_oracle(
    common: &CommonArgs,
    grid: &GridArgs,
    nmax: usize,
    modes: usize,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let model = load(common)?;
    let times = time_grid(grid)?;
    let gcfg = grid_config_for(modes, &model);
    for (gi, &g) in grid.g.iter().enumerate() {
        let system = fock::build_system(&model, &gcfg, nmax, g)?;
        let traj = fock::propagate_basis(&system, &times)?;
        let csv = trajectory_csv(&model, &times, |j, m, t| {
            let it = times
                .iter()
                .position(|&tt| tt == t)
                .expect("time from the same grid");
            Ok(traj.marginal_probability(&system, j, m, it))
        })?;
        let path = per_g_path(out, gi, g, grid.g.len());
        write_output(path.as_deref(), &csv)?;
        if let Some(p) = &path {
            let manifest = fock::oracle_manifest(&system, &gcfg, common.seed);
            let mjson = serde_json::to_string_pretty(&manifest)
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            std::fs::write(p.with_extension("manifest.json"), mjson + "\n")?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_compare(
    common: &CommonArgs,
    grid: &GridArgs,
    from: usize,
    to: usize,
    nmax: usize,
    modes: usize,
    no_oracle: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let model = load(common)?;
    let config = quad_config(common)?;
    let times = time_grid(grid)?;
    check_state(&model, from)?;
    check_state(&model, to)?;
    let fs = model.state_of_global(from);
    let ts = model.state_of_global(to);
    let gen = assemble_generator(&model, &config)?;
    let engine = SemigroupEngine::new(gen)?;

    let mut markov = Vec::new();
    let mut nonmarkov = Vec::new();
    let mut exact: Vec<Vec<f64>> = Vec::new();
    for &g in &grid.g {
        let mut per_g_markov = Vec::with_capacity(times.len());
        let mut per_g_nm = Vec::with_capacity(times.len());
        for &t in &times {
            per_g_markov.push(engine.markov_transition_probability(fs, ts, t, g)?);
            per_g_nm.push(approx::non_markov_probability(&model, fs, ts, t, g, &config)?);
        }
        markov.push(per_g_markov);
        nonmarkov.push(per_g_nm);
        if !no_oracle {
            let gcfg = grid_config_for(modes, &model);
            let system = fock::build_system(&model, &gcfg, nmax, g)?;
            let traj = fock::propagate_basis(&system, &times)?;
            exact.push(
                (0..times.len())
                    .map(|it| traj.marginal_probability(&system, from, to, it))
                    .collect(),
            );
        }
    }

    let mut header = vec!["t".to_string()];
    for &g in &grid.g {
        header.push(format!("p_markov_g{g}"));
        header.push(format!("p_nonmarkov_g{g}"));
        if !no_oracle {
            header.push(format!("p_exact_g{g}"));
        }
    }
    let mut csv = header.join(",") + "\n";
    for (it, &t) in times.iter().enumerate() {
        let mut row = vec![fnum(t)];
        for gi in 0..grid.g.len() {
            row.push(fnum(markov[gi][it]));
            row.push(fnum(nonmarkov[gi][it]));
            if !no_oracle {
                row.push(fnum(exact[gi][it]));
            }
        }
        csv.push_str(&(row.join(",") + "\n"));
    }
    write_output(out, &csv)?;

    if !no_oracle {
        let sup = |a: &[f64], b: &[f64]| -> f64 {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        let mut summary = String::new();
        let mut markov_errors = Vec::new();
        let mut nm_errors = Vec::new();
        for (gi, &g) in grid.g.iter().enumerate() {
            let em = sup(&exact[gi], &markov[gi]);
            let en = sup(&exact[gi], &nonmarkov[gi]);
            let _ = writeln!(
                summary,
                "g={g}: sup|exact-markov| = {:.6e}, sup|exact-nonmarkov| = {:.6e}",
                em, en
            );
            markov_errors.push(em);
            nm_errors.push(en);
        }
        if grid.g.len() >= 2 {
            let _ = writeln!(
                summary,
                "fitted error exponents vs g: markov {:.3}, nonmarkov {:.3}",
                log_slope(&grid.g, &markov_errors),
                log_slope(&grid.g, &nm_errors)
            );
        }
        eprint!("{summary}");
        if let Some(p) = out {
            std::fs::write(p.with_extension("summary.txt"), summary)?;
        }
    }
    Ok(())
}

fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.max(1e-300).ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

// silence unused-import warnings for items used only in some builds
#[allow(dead_code)]
fn _unused(_: Array1<C64>) {}
